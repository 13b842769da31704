//! End-to-end runs: dataset generation, training, evaluation and the on-disk
//! layout of a trained network.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use duc_hdc_core::train::{
    evaluate, gen_thin_structures, train, Confusion, DecoderKind, IouReport, Reduction, SegSample, SgdConfig,
    ThinStructureConfig, ToyNet, ToyNetConfig, TrainReport,
};
use duc_hdc_core::{Rng, Shape, Tensor};

use crate::error::{Error, Result};
use crate::formats::{self, pgm, read_file, to_json_string, write_file};

pub const NET_FORMAT: &str = "duc-hdc-net/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub sgd: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Seeds { data: seed, init: seed.wrapping_add(1), sgd: seed.wrapping_add(2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSection {
    pub in_channels: usize,
    pub width: usize,
    pub d: usize,
    pub rates: Vec<usize>,
    pub kernel: usize,
    pub classes: usize,
    pub decoder: String,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub height: usize,
    pub width: usize,
    pub thickness: usize,
    pub thin_fraction: f64,
    pub blob_fraction: f64,
    pub noise_std: f64,
    pub train_size: usize,
    pub eval_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdSection {
    pub base_lr: f64,
    pub power: f64,
    pub max_iter: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub reduction: String,
}

/// Everything needed to reproduce a run. Serialized as `net.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub format: String,
    pub net: NetSection,
    pub data: DataSection,
    pub sgd: SgdSection,
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<String>,
    #[serde(default)]
    pub param_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::new(&ToyNetConfig::default(), &ThinStructureConfig::default(), 200, 50, &SgdConfig::default(), Reduction::Sum, Seeds::from_base(0))
    }
}

fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Sum => "sum",
        Reduction::Mean => "mean",
    }
}

pub fn parse_reduction(s: &str) -> Result<Reduction> {
    match s {
        "sum" => Ok(Reduction::Sum),
        "mean" => Ok(Reduction::Mean),
        other => Err(Error::format("reduction", format!("expected sum or mean, got {other:?}"))),
    }
}

impl RunConfig {
    pub fn new(
        net: &ToyNetConfig,
        data: &ThinStructureConfig,
        train_size: usize,
        eval_size: usize,
        sgd: &SgdConfig,
        reduction: Reduction,
        seeds: Seeds,
    ) -> Self {
        RunConfig {
            format: NET_FORMAT.to_string(),
            net: NetSection {
                in_channels: net.in_channels,
                width: net.width,
                d: net.d,
                rates: net.rates.clone(),
                kernel: net.kernel,
                classes: net.classes,
                decoder: net.decoder.name().to_string(),
                cell: net.cell,
            },
            data: DataSection {
                height: data.height,
                width: data.width,
                thickness: data.thickness,
                thin_fraction: data.thin_fraction,
                blob_fraction: data.blob_fraction,
                noise_std: data.noise_std,
                train_size,
                eval_size,
            },
            sgd: SgdSection {
                base_lr: sgd.base_lr,
                power: sgd.power,
                max_iter: sgd.max_iter,
                momentum: sgd.momentum,
                weight_decay: sgd.weight_decay,
                batch: sgd.batch,
                reduction: reduction_name(reduction).to_string(),
            },
            seeds,
            layers: Vec::new(),
            param_count: 0,
        }
    }

    pub fn net_config(&self) -> Result<ToyNetConfig> {
        let n = &self.net;
        Ok(ToyNetConfig {
            in_channels: n.in_channels,
            width: n.width,
            d: n.d,
            rates: n.rates.clone(),
            kernel: n.kernel,
            classes: n.classes,
            decoder: n.decoder.parse::<DecoderKind>()?,
            cell: n.cell,
        })
    }

    pub fn data_config(&self) -> ThinStructureConfig {
        let d = &self.data;
        ThinStructureConfig {
            height: d.height,
            width: d.width,
            thickness: d.thickness,
            thin_fraction: d.thin_fraction,
            blob_fraction: d.blob_fraction,
            noise_std: d.noise_std,
        }
    }

    pub fn sgd_config(&self) -> SgdConfig {
        let s = &self.sgd;
        SgdConfig {
            base_lr: s.base_lr,
            power: s.power,
            max_iter: s.max_iter,
            momentum: s.momentum,
            weight_decay: s.weight_decay,
            batch: s.batch,
            seed: self.seeds.sgd,
        }
    }

    pub fn reduction(&self) -> Result<Reduction> {
        parse_reduction(&self.sgd.reduction)
    }
}

/// Training and evaluation sets, generated from one stream in that order.
pub fn datasets(cfg: &RunConfig) -> Result<(Vec<SegSample>, Vec<SegSample>)> {
    let data = cfg.data_config();
    let mut rng = Rng::new(cfg.seeds.data);
    let train_set = gen_thin_structures(cfg.data.train_size, &data, &mut rng)?;
    let eval_set = gen_thin_structures(cfg.data.eval_size, &data, &mut rng)?;
    Ok((train_set, eval_set))
}

pub fn init_net(cfg: &RunConfig) -> Result<ToyNet> {
    Ok(ToyNet::new(cfg.net_config()?, &mut Rng::new(cfg.seeds.init))?)
}

pub struct RunOutcome {
    pub net: ToyNet,
    pub report: TrainReport,
    pub confusion: Confusion,
    pub iou: IouReport,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let (train_set, eval_set) = datasets(cfg)?;
    let mut net = init_net(cfg)?;
    let report = train(&mut net, &train_set, &cfg.sgd_config(), cfg.reduction()?)?;
    let confusion = evaluate(&net, &eval_set)?;
    let iou = confusion.report();
    Ok(RunOutcome { net, report, confusion, iou })
}

pub fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("iter,lr,loss\n");
    for (i, (lr, loss)) in report.lr.iter().zip(&report.loss).enumerate() {
        let _ = writeln!(s, "{i},{lr},{loss}");
    }
    s
}

/// `class,iou` rows followed by the mean. Classes absent from both labels and
/// predictions have an empty IoU field.
pub fn metrics_csv(iou: &IouReport) -> String {
    let mut s = String::from("class,iou\n");
    for (c, v) in iou.per_class.iter().enumerate() {
        match v {
            Some(v) => writeln!(s, "{c},{v}"),
            None => writeln!(s, "{c},"),
        }
        .unwrap();
    }
    writeln!(s, "mean,{}", iou.mean).unwrap();
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub decoder: String,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixels: u64,
}

impl EvalReport {
    pub fn new(decoder: &str, confusion: &Confusion) -> Self {
        let report = confusion.report();
        let k = report.per_class.len();
        let pixels = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).map(|(a, b)| confusion.count(a, b)).sum();
        EvalReport { decoder: decoder.to_string(), per_class_iou: report.per_class, miou: report.mean, pixels }
    }
}

pub fn save_net(dir: &Path, cfg: &RunConfig, net: &ToyNet) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.layers = net.describe();
    cfg.param_count = net.param_count();
    write_file(&dir.join("net.json"), to_json_string(&cfg)?.as_bytes())?;
    let params = net.flat_params();
    let t = Tensor::from_vec(Shape::new(1, 1, 1, params.len())?, params)?;
    formats::tensor::write(&dir.join("params.bin"), &t)
}

pub fn load_net(dir: &Path) -> Result<(RunConfig, ToyNet)> {
    let path = dir.join("net.json");
    let cfg: RunConfig = serde_json::from_slice(&read_file(&path)?)?;
    if cfg.format != NET_FORMAT {
        return Err(Error::format("net.json", format!("unsupported format {:?}", cfg.format)));
    }
    let mut net = init_net(&cfg)?;
    let params = formats::tensor::read(&dir.join("params.bin"))?;
    if params.data().len() != net.param_count() {
        return Err(Error::format(
            "params.bin",
            format!("expected {} parameters, found {}", net.param_count(), params.data().len()),
        ));
    }
    net.set_flat_params(params.data())?;
    Ok((cfg, net))
}

/// Write image/label PGM pairs as `{prefix}_{i:04}_image.pgm` and `_labels.pgm`.
pub fn write_samples(dir: &Path, prefix: &str, samples: &[SegSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        pgm::image_pgm(&s.image, -2.0, 2.0).write(&dir.join(format!("{prefix}_{i:04}_image.pgm")))?;
        pgm::label_pgm(&s.labels).write(&dir.join(format!("{prefix}_{i:04}_labels.pgm")))?;
    }
    Ok(())
}

/// Persist a finished run: `net.json`, `params.bin`, `loss.csv`, `metrics.csv`
/// and `eval.json`.
pub fn save_run(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    save_net(dir, cfg, &outcome.net)?;
    write_file(&dir.join("loss.csv"), loss_csv(&outcome.report).as_bytes())?;
    write_file(&dir.join("metrics.csv"), metrics_csv(&outcome.iou).as_bytes())?;
    let eval = EvalReport::new(&cfg.net.decoder, &outcome.confusion);
    write_file(&dir.join("eval.json"), to_json_string(&eval)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let net = ToyNetConfig { width: 4, rates: vec![1, 2], ..ToyNetConfig::default() };
        let data = ThinStructureConfig { height: 16, width: 16, ..ThinStructureConfig::default() };
        let sgd = SgdConfig { base_lr: 1e-4, max_iter: 3, batch: 2, ..SgdConfig::default() };
        RunConfig::new(&net, &data, 4, 2, &sgd, Reduction::Sum, Seeds::from_base(5))
    }

    #[test]
    fn save_load_roundtrip() {
        let cfg = tiny();
        let out = run(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_run(dir.path(), &cfg, &out).unwrap();
        let (loaded_cfg, net) = load_net(dir.path()).unwrap();
        assert_eq!(loaded_cfg.param_count, out.net.param_count());
        assert_eq!(net.flat_params(), out.net.flat_params());
        let (_, eval_set) = datasets(&loaded_cfg).unwrap();
        assert_eq!(evaluate(&net, &eval_set).unwrap().report(), out.iou);
    }

    #[test]
    fn loss_csv_rows() {
        let r = TrainReport { loss: vec![2.5, 1.0], lr: vec![0.1, 0.05] };
        assert_eq!(loss_csv(&r), "iter,lr,loss\n0,0.1,2.5\n1,0.05,1\n");
    }

    #[test]
    fn metrics_csv_absent_class() {
        let r = IouReport { per_class: vec![Some(1.0), None, Some(0.5)], mean: 0.75 };
        assert_eq!(metrics_csv(&r), "class,iou\n0,1\n1,\n2,0.5\nmean,0.75\n");
    }
}

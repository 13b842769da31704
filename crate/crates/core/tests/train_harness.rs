mod common;

use common::*;
use duc_hdc_core::hdc::{coverage_report, footprint};
use duc_hdc_core::train::data::{class_frequencies, BLOB, THIN};
use duc_hdc_core::train::*;
use duc_hdc_core::{Error, Rng, Tensor};

fn random_labels(h: usize, w: usize, classes: usize, rng: &mut Rng) -> LabelMap {
    LabelMap::new(h, w, (0..h * w).map(|_| rng.below(classes) as u8).collect()).unwrap()
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = Rng::new(400);
    for _ in 0..20 {
        let logits = random((1, 3, 2, 2), &mut rng);
        let labels = random_labels(2, 2, 3, &mut rng);
        let (_, grad) = softmax_ce_loss(&logits, std::slice::from_ref(&labels), Reduction::Sum).unwrap();
        let mut v = logits.flatten();
        for i in 0..v.len() {
            // step 1e-5 keeps rounding noise well under the 1e-5 tolerance
            let num = central_diff_step(&mut v, i, 1e-5, &mut |p| {
                let t = Tensor::from_vec(logits.shape(), p.to_vec()).unwrap();
                softmax_ce_loss(&t, std::slice::from_ref(&labels), Reduction::Sum).unwrap().0
            });
            assert!(rel_err(grad.data()[i], num) < 1e-5, "{} vs {num}", grad.data()[i]);
        }
    }
}

fn small_net(decoder: DecoderKind, seed: u64) -> ToyNet {
    let cfg = ToyNetConfig { width: 4, decoder, ..Default::default() };
    ToyNet::new(cfg, &mut Rng::new(seed)).unwrap()
}

/// Nonzero biases keep pre-activations off the ReLU kink at exactly 0.
fn jitter_biases(net: &mut ToyNet, rng: &mut Rng) {
    for bias in net.params_mut().into_iter().skip(1).step_by(2) {
        for b in bias {
            *b = rng.uniform_range(-0.1, 0.1);
        }
    }
}

/// Finite-difference check on `samples` randomly chosen parameters; returns
/// the worst relative error.
fn net_gradient_check(net: &mut ToyNet, sample: &SegSample, samples: usize, rng: &mut Rng) -> f64 {
    let (_, grads) = loss_and_grads(net, &[sample], Reduction::Sum).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.weights.data().iter().chain(&g.bias).copied()).collect();
    assert_eq!(analytic.len(), net.param_count());
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.below(net.param_count());
        let orig = *net.param_mut(i).unwrap();
        *net.param_mut(i).unwrap() = orig + FD_STEP;
        let plus = loss_and_grads(net, &[sample], Reduction::Sum).unwrap().0;
        *net.param_mut(i).unwrap() = orig - FD_STEP;
        let minus = loss_and_grads(net, &[sample], Reduction::Sum).unwrap().0;
        *net.param_mut(i).unwrap() = orig;
        let num = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], num));
    }
    worst
}

#[test]
fn end_to_end_gradient_check_all_decoders() {
    let cfg = ThinStructureConfig { height: 16, width: 16, ..Default::default() };
    let sample = gen_thin_structures(1, &cfg, &mut Rng::new(401)).unwrap().remove(0);
    let mut rng = Rng::new(402);
    for decoder in [DecoderKind::Duc, DecoderKind::Bilinear, DecoderKind::Deconv] {
        let mut net = small_net(decoder, 403);
        jitter_biases(&mut net, &mut rng);
        let worst = net_gradient_check(&mut net, &sample, 50, &mut rng);
        assert!(worst < 1e-3, "{decoder:?}: {worst}");
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    let data = gen_thin_structures(3, &ThinStructureConfig { height: 16, width: 16, ..Default::default() }, &mut Rng::new(404)).unwrap();
    let mut net = small_net(DecoderKind::Duc, 405);
    let before = net.flat_params();
    let cfg = SgdConfig { base_lr: 0.0, max_iter: 10, batch: 2, ..Default::default() };
    let report = train(&mut net, &data, &cfg, Reduction::Sum).unwrap();
    assert_eq!(report.loss.len(), 10);
    assert_eq!(net.flat_params(), before);
}

#[test]
fn identical_seeds_identical_curves() {
    let data = gen_thin_structures(4, &ThinStructureConfig { height: 16, width: 16, ..Default::default() }, &mut Rng::new(406)).unwrap();
    let cfg = SgdConfig { base_lr: 1e-4, max_iter: 15, batch: 2, seed: 9, ..Default::default() };
    let run = || {
        let mut net = small_net(DecoderKind::Duc, 407);
        let report = train(&mut net, &data, &cfg, Reduction::Sum).unwrap();
        (report, net.flat_params())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss), bits(&b.loss));
    assert_eq!(bits(&pa), bits(&pb));
}

#[test]
fn divergence_is_reported() {
    let data = gen_thin_structures(2, &ThinStructureConfig { height: 16, width: 16, ..Default::default() }, &mut Rng::new(408)).unwrap();
    let mut net = small_net(DecoderKind::Duc, 409);
    let cfg = SgdConfig { base_lr: 1e6, max_iter: 50, ..Default::default() };
    match train(&mut net, &data, &cfg, Reduction::Sum) {
        Err(Error::Diverged { iter, lr, .. }) => {
            assert!(iter > 0 && iter < 50);
            assert!(lr > 0.0);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn empty_training_set_rejected() {
    let mut net = small_net(DecoderKind::Duc, 410);
    assert!(train(&mut net, &[], &SgdConfig::default(), Reduction::Sum).is_err());
}

#[test]
fn encoder_schedule_footprints() {
    let sawtooth = ToyNet::new(ToyNetConfig { rates: vec![1, 2, 3], ..Default::default() }, &mut Rng::new(0)).unwrap();
    assert_eq!(coverage_report(&footprint(sawtooth.schedule())).coverage_fraction, 1.0);
    let uniform = ToyNet::new(ToyNetConfig { rates: vec![2, 2, 2], ..Default::default() }, &mut Rng::new(0)).unwrap();
    assert!(coverage_report(&footprint(uniform.schedule())).coverage_fraction < 1.0);
}

#[test]
fn class_frequencies_match_configuration() {
    let cfg = ThinStructureConfig::default();
    let samples = gen_thin_structures(100, &cfg, &mut Rng::new(411)).unwrap();
    let freq = class_frequencies(&samples, 3);
    let thin = freq[THIN as usize];
    let blob = freq[BLOB as usize];
    assert!((thin - cfg.thin_fraction).abs() <= 0.2 * cfg.thin_fraction, "thin {thin}");
    assert!((blob - cfg.blob_fraction).abs() <= 0.2 * cfg.blob_fraction, "blob {blob}");
}

#[test]
fn preds_equal_labels_gives_perfect_miou() {
    let samples = gen_thin_structures(5, &ThinStructureConfig::default(), &mut Rng::new(412)).unwrap();
    let mut confusion = Confusion::new(3);
    for s in &samples {
        confusion.add(&s.labels, &s.labels).unwrap();
    }
    assert_eq!(confusion.report().mean, 1.0);
}

/// One 32x32 sample, width-16 DUC net, summed loss, lr 1e-4.
fn overfit_run(iters: usize) -> TrainReport {
    let sample = gen_thin_structures(1, &ThinStructureConfig::default(), &mut Rng::new(500)).unwrap();
    let mut net = ToyNet::new(ToyNetConfig::default(), &mut Rng::new(501)).unwrap();
    let cfg = SgdConfig { base_lr: 1e-4, max_iter: iters, batch: 1, seed: 1, ..Default::default() };
    train(&mut net, &sample, &cfg, Reduction::Sum).unwrap()
}

#[test]
fn single_sample_overfit_and_monotone_windows() {
    let report = overfit_run(1000);
    let threshold = 0.05 * 3f64.ln() * 1024.0;
    let first_below = report.loss.iter().position(|&l| l < threshold).expect("never overfit");
    // first measured at iteration 33; frozen with headroom
    assert!(first_below <= 100, "loss first below threshold at {first_below}");
    // any 200-iteration window after iteration 100: second half no worse than first
    for start in 100..report.loss.len() - 200 {
        let a: f64 = report.loss[start..start + 100].iter().sum();
        let b: f64 = report.loss[start + 100..start + 200].iter().sum();
        assert!(b <= a, "window at {start}: {a} -> {b}");
    }
}

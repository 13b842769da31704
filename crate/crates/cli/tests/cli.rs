mod common;

use common::{assert_schema, code, run, stdout_json};
use duc_hdc::formats::pgm::Pgm;
use serde_json::json;

#[test]
fn check_worked_examples() {
    let ok = run(&["check", "--rates", "1,2,5", "--kernel", "3"]);
    assert_eq!(code(&ok), 0);
    let v = stdout_json(&ok);
    assert_schema("check", &v);
    assert_eq!(v["M_values"], json!([2, 5]));
    assert_eq!(v["valid"], true);

    let bad = run(&["check", "--rates", "1,2,9", "--kernel", "3"]);
    assert_eq!(code(&bad), 2);
    let v = stdout_json(&bad);
    assert_schema("check", &v);
    assert_eq!(v["m2"], 5);
    assert_eq!(v["valid"], false);
}

#[test]
fn check_common_factor() {
    let out = run(&["check", "--rates", "2,4,8"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout_json(&out)["gcd_flag"], true);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["check"])), 1);
    assert_eq!(code(&run(&["check", "--rates", "1,x"])), 1);
    assert_eq!(code(&run(&["check", "--rates", "0,1"])), 1);
    assert_eq!(code(&run(&["check", "--rates", "1,2", "--kernel", "4"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn footprint_formats() {
    let dir = tempfile::tempdir().unwrap();
    let pgm_path = dir.path().join("fp.pgm");
    let out = run(&["footprint", "--rates", "2,2,2", "--out", pgm_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let summary = stdout_json(&out);
    assert_schema("footprint", &summary);
    assert_eq!(summary["side"], 13);
    assert_eq!(summary["holes"], 169 - 49);

    let pgm = Pgm::read(&pgm_path).unwrap();
    assert_eq!((pgm.width, pgm.height), (13, 13));
    assert_eq!(pgm.pixels.iter().filter(|&&p| p > 0).count(), 49);
    // checkerboard: only even offsets are reached
    for y in 0..13 {
        for x in 0..13 {
            assert_eq!(pgm.pixels[y * 13 + x] > 0, y % 2 == 0 && x % 2 == 0);
        }
    }

    let json_path = dir.path().join("fp.json");
    let out = run(&["footprint", "--rates", "1", "--format", "json", "--out", json_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let file: serde_json::Value = serde_json::from_slice(&std::fs::read(&json_path).unwrap()).unwrap();
    assert_schema("footprint", &file);
    assert_eq!(file["counts"], json!([[1, 1, 1], [1, 1, 1], [1, 1, 1]]));

    let csv_path = dir.path().join("fp.csv");
    let out = run(&["footprint", "--rates", "1,2,3", "--format", "csv", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out)["holes"], 0);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.lines().flat_map(|l| l.split(',')).all(|c| c.parse::<u64>().unwrap() > 0));
}

#[test]
fn footprint_default_dir_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::bin()
        .args(["footprint", "--rates", "1,2"])
        .env("DUC_HDC_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("footprint.pgm").exists());
}

#[test]
fn rf_table_and_single() {
    let out = run(&["rf"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("rf", &v);
    let row = v.as_array().unwrap().iter().find(|r| r["name"] == "dilation-rf").unwrap();
    assert_eq!(row["rf_increase"], 116);

    let out = run(&["rf", "--rates", "1,2,3"]);
    let v = stdout_json(&out);
    assert_schema("rf", &v);
    assert_eq!(v["rf_increase"], 12);
}

#[test]
fn search_examples() {
    let out = run(&["search", "--layers", "3", "--kernel", "3", "--rf-target", "12"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("search", &v);
    let list = v.as_array().unwrap();
    assert!(list.iter().any(|e| e["rates"] == json!([1, 2, 3])));
    // every hit passes check
    for e in list.iter().take(10) {
        let rates: Vec<String> = e["rates"].as_array().unwrap().iter().map(|r| r.to_string()).collect();
        assert_eq!(code(&run(&["check", "--rates", &rates.join(",")])), 0);
    }

    let out = run(&["search", "--layers", "2", "--kernel", "3", "--rf-target", "50"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_json(&out), json!([]));
}

#[test]
fn duc_demo_matches_transposed() {
    let out = run(&["duc-demo", "--d", "4", "--classes", "3", "--seed", "9"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("duc-demo", &v);
    assert_eq!(v["bitwise_equal"], true);
    assert_eq!(v["rearrange_roundtrip"], true);
    assert_eq!(v["duc_channels"], 48);
    assert_eq!(v["output_shape"], json!([1, 3, 12, 12]));
}

const TINY: &[&str] = &["--iters", "20", "--train-size", "6", "--eval-size", "3", "--width", "4", "--image-size", "16"];

#[test]
fn train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let net_dir = dir.path().join("net");
    let mut args = vec!["train", "--decoder", "deconv", "--seed", "4", "--write-samples", "--out", net_dir.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_schema("train", &summary);

    let net_json: serde_json::Value = serde_json::from_slice(&std::fs::read(net_dir.join("net.json")).unwrap()).unwrap();
    assert_schema("net", &net_json);
    let loss = std::fs::read_to_string(net_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("iter,lr,loss"));
    assert_eq!(loss.lines().count(), 21);
    let label = Pgm::read(&net_dir.join("samples/eval_0000_labels.pgm")).unwrap();
    assert_eq!((label.width, label.height), (16, 16));
    assert!(net_dir.join("samples/eval_0002_pred.pgm").exists());

    let out = run(&["eval", "--net", net_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let eval = stdout_json(&out);
    assert_schema("eval", &eval);
    assert_eq!(eval["miou"], summary["miou"]);
    assert_eq!(eval["pixels"], 3 * 16 * 16);

    let out = run(&["eval", "--net", net_dir.to_str().unwrap(), "--oracle"]);
    let oracle = stdout_json(&out);
    assert_schema("eval", &oracle);
    assert_eq!(oracle["miou"], 1.0);
}

#[test]
fn untrained_net_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("zero");
    let out = run(&["train", "--iters", "0", "--eval-size", "10", "--train-size", "1", "--width", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_schema("train", &v);
    assert!(v["final_loss"].is_null());
    assert!(v["miou"].as_f64().unwrap() < 0.5);
    assert_eq!(std::fs::read_to_string(out_dir.join("loss.csv")).unwrap(), "iter,lr,loss\n");
}

#[test]
fn eval_missing_net_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["eval", "--net", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn bad_decoder_is_usage_error() {
    assert_eq!(code(&run(&["train", "--decoder", "nearest", "--iters", "0"])), 1);
}

use std::fs;
use std::path::Path;

use lsart::cli::run_command;
use lsart::evalsim::{load_results, load_sequence, save_sequence, synthesize_sequence, SynthSpec};

const QUICK: &str = r#"{"init_krr_steps": 20, "init_stage1_steps": 5, "init_stage2_steps": 5}"#;

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("lsart").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_then_track_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let spec_json = serde_json::to_string(&SynthSpec::translation("demo", 12, 96, 24, 2.0, 0.0, 5)).unwrap();
    fs::write(&spec, spec_json).unwrap();
    let seq = dir.path().join("seq");
    assert_eq!(run(&["synth", "--spec", p(&spec), "--out", p(&seq)]), 0);
    assert_eq!(load_sequence(&seq).unwrap().frames.len(), 12);

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, QUICK).unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["track", "--config", p(&cfg), "--sequence", p(&seq), "--output", p(&out), "--dump-heatmaps"]), 0);
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("frame,x,y,w,h,score\n1,"));
    assert_eq!(load_results(&out).unwrap().len(), 12);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for key in ["precision_20", "auc", "mean_center_error", "frames", "runtime_seconds"] {
        assert!(metrics.get(key).is_some(), "missing {key}");
    }
    assert!(metrics["runtime_seconds"].is_null());
    for tag in ["krr", "cnn", "fused"] {
        assert!(out.join(format!("heatmap_00012_{tag}.pgm")).is_file());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    save_sequence(&synthesize_sequence(&SynthSpec::translation("s", 3, 64, 16, 1.0, 0.0, 1)).unwrap(), &seq).unwrap();
    let out = dir.path().join("out");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"M": 8}"#).unwrap();
    assert_eq!(run(&["track", "--config", p(&bad), "--sequence", p(&seq), "--output", p(&out)]), 1);
    fs::write(&bad, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(run(&["track", "--config", p(&bad), "--sequence", p(&seq), "--output", p(&out)]), 1);
    assert_eq!(run(&["track", "--sequence", p(&seq), "--output", p(&out), "--variant", "nope"]), 1);
    assert_eq!(run(&["track", "--bogus"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);

    let missing = dir.path().join("missing");
    assert_eq!(run(&["track", "--sequence", p(&missing), "--output", p(&out)]), 2);
    fs::remove_file(seq.join("img/00000002.pgm")).unwrap();
    assert_eq!(run(&["track", "--sequence", p(&seq), "--output", p(&out)]), 2);

    fs::write(&bad, r#"{"lr_alpha": 1e6, "krr_feature_scale": 1.0, "init_krr_steps": 50}"#).unwrap();
    let seq2 = dir.path().join("seq2");
    save_sequence(&synthesize_sequence(&SynthSpec::translation("s", 3, 64, 16, 1.0, 0.0, 1)).unwrap(), &seq2).unwrap();
    assert_eq!(run(&["track", "--config", p(&bad), "--sequence", p(&seq2), "--output", p(&out)]), 3);
}

#[test]
fn eval_all_variants_writes_ablation_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("seqs");
    for (i, name) in ["a", "b"].iter().enumerate() {
        let seq = synthesize_sequence(&SynthSpec::translation(name, 4, 64, 16, 1.0, 0.0, i as u64)).unwrap();
        save_sequence(&seq, &root.join(name)).unwrap();
    }
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, QUICK).unwrap();
    let out = dir.path().join("eval");
    assert_eq!(run(&["eval", "--config", p(&cfg), "--sequence", p(&root), "--output", p(&out), "--variant", "all"]), 0);
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    for v in ["baseline", "cps", "srk", "full"] {
        assert_eq!(table[v]["sequences"], 2);
        assert!(table[v]["auc"].as_f64().unwrap() >= 0.0);
        assert!(out.join(v).join("b").join("results.csv").is_file());
    }
}

#[test]
fn selftest_passes() {
    assert_eq!(run(&["selftest"]), 0);
}

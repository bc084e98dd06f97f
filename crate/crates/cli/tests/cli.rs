use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use ctxground::corpus::{self, BiasTypeRegistry, SensitiveAttribute};
use ctxground::metrics::{predictions_from_csv, MetricsReport};
use ctxground::trainer::{lr_at, TrainConfig};
use ctxground_cli::{main_with, ExperimentRecord, PrepareSummary};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["ctxground".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(&argv, &mut out, &mut err, &|| 42);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn prepare(dir: &Path, n: usize, seed: u64) {
    let (code, _, err) = run(&[
        "prepare",
        "--synthetic",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(dir),
    ]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn ontology_prints_axioms_and_closure() {
    let (code, out, _) = run(&["ontology"]);
    assert_eq!(code, 0);
    assert!(out.contains("SubClassOf(Situation Context)\n"));
    assert!(out.contains("# (EthicalContext, Context)\n"));
    assert!(!out.contains("# (EthicalPrinciple, Context)\n"));

    let (code, only, _) = run(&["ontology", "--builtin", "situational"]);
    assert_eq!(code, 0);
    assert!(!only.contains("Culture"));
}

#[test]
fn ontology_file_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ofn");
    fs::write(&bad, "Concept(A)\nSubClassOf(A B)\n").unwrap();
    let (code, _, err) = run(&["ontology", "--file", p(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.ofn"), "{err}");
    let (code, _, _) = run(&["ontology", "--file", p(&dir.path().join("missing.ofn"))]);
    assert_eq!(code, 2);
}

#[test]
fn validate_context_reports_and_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let triples = dir.path().join("ctx.nt");
    fs::write(
        &triples,
        "c1 rdf:type Culture .\nc1 location \"US\" .\nc1 religion \"Christian\" .\nc1 age_group \"Youth\" .\n",
    )
    .unwrap();
    let (code, out, _) = run(&["validate-context", "--triples", p(&triples)]);
    assert_eq!(code, 0);
    let reports: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(reports[0]["element_id"], "c1");
    assert_eq!(
        reports[0]["unknown_predicates"].as_array().unwrap().len(),
        0
    );
    let (code, _, _) = run(&["validate-context", "--triples", p(&triples), "--strict"]);
    assert_eq!(code, 2);
}

#[test]
fn prepare_splits_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    prepare(a.path(), 100, 7);
    prepare(b.path(), 100, 7);
    for f in [
        "train.csv",
        "val.csv",
        "test.csv",
        "bias_types.csv",
        "prepare.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let summary: PrepareSummary =
        serde_json::from_str(&fs::read_to_string(a.path().join("prepare.json")).unwrap()).unwrap();
    assert_eq!(summary.sizes, [80, 10, 10]);

    let reg = BiasTypeRegistry::default();
    let total: usize = ["train.csv", "val.csv", "test.csv"]
        .iter()
        .map(|f| {
            corpus::load_with(a.path().join(f), &reg)
                .unwrap()
                .positives()
        })
        .sum();
    assert_eq!(total, summary.positives);
    let hist = fs::read_to_string(a.path().join("bias_types.csv")).unwrap();
    let counted: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counted, summary.positives);
}

#[test]
fn prepare_rejects_bad_split() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&[
        "prepare",
        "--synthetic",
        "50",
        "--split",
        "0.5,0.5,0.5",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["prepare", "--out", p(dir.path())]);
    assert_eq!(code, 2);
}

#[test]
fn encode_writes_artifacts() {
    let data = tempfile::tempdir().unwrap();
    prepare(data.path(), 60, 3);
    let out = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "encode",
        "--data",
        p(&data.path().join("train.csv")),
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    let encoded = fs::read_to_string(out.path().join("encoded.csv")).unwrap();
    assert_eq!(encoded.lines().count(), 48);
    assert!(fs::read_to_string(out.path().join("vocab.tsv"))
        .unwrap()
        .starts_with("[PAD]"));
    assert!(fs::read_to_string(out.path().join("contexts.nt"))
        .unwrap()
        .contains("rdf:type Culture"));
}

#[test]
fn train_compare_then_eval_and_report() {
    let data = tempfile::tempdir().unwrap();
    prepare(data.path(), 300, 5);
    let out = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "train",
        "--data",
        p(data.path()),
        "--compare",
        "--epochs",
        "3",
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    for run_dir in ["grounded", "ablation"] {
        for f in [
            "model.ckpt",
            "history.csv",
            "lr_trace.csv",
            "metrics.json",
            "predictions.csv",
        ] {
            assert!(out.path().join(run_dir).join(f).exists(), "{run_dir}/{f}");
        }
    }
    let record: ExperimentRecord =
        serde_json::from_str(&fs::read_to_string(out.path().join("experiment.json")).unwrap())
            .unwrap();
    assert_eq!(record.runs.len(), 2);
    assert_eq!(record.runs[1].lambda, 0.0);
    assert_eq!(record.started_unix, 42);
    assert_eq!(
        TrainConfig::from_text(&record.config_text).unwrap(),
        record.config
    );

    // The recorded trace is the schedule evaluated at every optimizer step.
    let trace = &record.runs[0].history.lr_trace;
    let per_epoch = record.corpora["train"]
        .rows
        .div_ceil(record.config.batch_size);
    assert_eq!(trace.len(), per_epoch * 3);
    for (step, lr) in trace.iter().enumerate() {
        assert_eq!(
            *lr,
            lr_at(step, trace.len(), &record.config, per_epoch).unwrap()
        );
    }

    let ckpt = out.path().join("grounded/model.ckpt");
    let ev = tempfile::tempdir().unwrap();
    let (code, table, err) = run(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--test",
        p(&data.path().join("test.csv")),
        "--reference",
        "gender=female",
        "--out",
        p(ev.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(table.starts_with("model,BDA,BTCA"));
    let report =
        MetricsReport::from_json(&fs::read_to_string(ev.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(report.model, "grounded");
    assert_eq!(
        report.attributes["gender"].reference.as_deref(),
        Some("female")
    );

    // Recompute the headline numbers from the per-instance sidecar.
    let preds =
        predictions_from_csv(&fs::read_to_string(ev.path().join("predictions.csv")).unwrap())
            .unwrap();
    assert_eq!(preds.len(), report.instances);
    let correct = preds.iter().filter(|p| p.label == p.predicted).count();
    assert!((report.bda - correct as f64 / preds.len() as f64).abs() < 1e-12);
    let positives: Vec<_> = preds.iter().filter(|p| p.label).collect();
    let typed = positives
        .iter()
        .filter(|p| p.true_type == p.predicted_type)
        .count();
    assert!((report.btca - typed as f64 / positives.len() as f64).abs() < 1e-12);
    let mut groups: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in &preds {
        let e = groups
            .entry(p.attributes[&SensitiveAttribute::Gender].as_str())
            .or_default();
        e.0 += p.predicted as usize;
        e.1 += 1;
    }
    let rate = |g: &str| groups[g].0 as f64 / groups[g].1 as f64;
    for (g, dis) in &report.attributes["gender"].dis {
        if let Some(d) = dis {
            assert!((d - rate("female") / rate(g)).abs() < 1e-12, "{g}");
        }
    }

    let (code, combined, _) = run(&[
        "report",
        p(&out.path().join("grounded/metrics.json")),
        p(&out.path().join("ablation/metrics.json")),
    ]);
    assert_eq!(code, 0);
    assert_eq!(combined.lines().count(), 3);
}

#[test]
fn zero_epochs_still_writes_a_checkpoint() {
    let data = tempfile::tempdir().unwrap();
    prepare(data.path(), 80, 2);
    let out = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "train",
        "--data",
        p(data.path()),
        "--epochs",
        "0",
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.path().join("grounded/model.ckpt").exists());
}

#[test]
fn train_config_errors_exit_two() {
    let data = tempfile::tempdir().unwrap();
    prepare(data.path(), 80, 2);
    let out = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&[
        "train",
        "--data",
        p(data.path()),
        "--lambda",
        "-1",
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 2);
    let cfg = data.path().join("bad.cfg");
    fs::write(&cfg, "epochs = 2\nepochs = 3\n").unwrap();
    let (code, _, _) = run(&[
        "train",
        "--data",
        p(data.path()),
        "--config",
        p(&cfg),
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&[
        "train",
        "--data",
        p(&data.path().join("nowhere")),
        "--out",
        p(out.path()),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ctxground");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    let status = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let missing = Command::new(bin)
        .args([
            "eval",
            "--checkpoint",
            "nope.ckpt",
            "--test",
            "nope.csv",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.ckpt"));
    let ok = Command::new(bin).arg("ontology").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("# closure"));
}

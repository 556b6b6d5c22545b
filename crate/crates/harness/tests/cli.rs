use std::path::Path;
use std::process::{Command, Output};

fn cheatt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cheatt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_train_diagnose_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cheatt(d, &["synth", "--out", "d.csv", "--rows", "120", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = cheatt(d, &["train", "--data", "d.csv", "--epochs", "2", "--depth", "2", "--out", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["record.json", "checkpoint.json", "report.csv", "epochs.jsonl", "config.toml"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let epochs = std::fs::read_to_string(d.join("run/epochs.jsonl")).unwrap();
    assert_eq!(epochs.lines().count(), 2);
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/record.json")).unwrap()).unwrap();
    assert_eq!(record["metric"], "auroc");
    assert_eq!(record["report"]["layers"].as_array().unwrap().len(), 3);

    // The saved config reproduces the run.
    let o = cheatt(d, &["train", "--config", "run/config.toml", "--out", "again"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("again/record.json")).unwrap()).unwrap();
    assert_eq!(again["test_metric"], record["test_metric"]);

    let o = cheatt(
        d,
        &["diagnose", "--checkpoint", "run/checkpoint.json", "--data", "d.csv", "--rows", "4", "--out", "r.json", "--csv", "r.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(csv.starts_with("layer,metric,index,value\n"));
    assert!(csv.contains("2,filter_coeff,5,"));

    let o = cheatt(
        d,
        &["convergence", "--checkpoint", "run/checkpoint.json", "--data", "d.csv", "--layer", "1", "--steps", "30"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "k,delta,pagerank_err");
    assert_eq!(rows.len(), 31);
    let last: f64 = rows[30].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last < 1e-6, "{last}");

    let o = cheatt(d, &["convergence", "--checkpoint", "run/checkpoint.json", "--data", "d.csv", "--layer", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = cheatt(
        dir.path(),
        &["sweep", "--axis", "basis", "--values", "power,legendre,jacobi(0.5;0.5)", "--seeds", "1,2", "--epochs", "1", "--depth", "1", "--out", "t.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let t = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(t.lines().count(), 4);
    assert!(t.contains("\"jacobi(0.5,0.5)\""));
}

#[test]
fn gradcheck_passes_on_the_default_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = cheatt(dir.path(), &["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("layer1.cheatt.alpha"));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ragged.csv"), "a,b,label\n1,2,0\n1,1\n").unwrap();
    std::fs::write(d.join("bad.toml"), "[train]\nbatch_size = 0\n").unwrap();

    let o = cheatt(d, &["train", "--data", "ragged.csv"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("data error") && stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = cheatt(d, &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config error"), "{}", stderr(&o));

    let o = cheatt(d, &["diagnose", "--checkpoint", "nope.json", "--data", "ragged.csv"]);
    assert_eq!(o.status.code(), Some(4));

    let o = cheatt(d, &["sweep", "--axis", "width", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = cheatt(d, &["synth", "--out", "z.csv", "--rows", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

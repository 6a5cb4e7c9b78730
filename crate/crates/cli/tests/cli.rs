use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seeds = [1, 2]
variants = ["rst_full", "self_train"]

[data.synthetic]
generator = "gaussian_blobs"
n_classes = 2
n_samples = 200
dim = 3
class_separation = 3.0
overlap_noise_sigma = 1.0

[split]
labeled = 30
unlabeled = 80
test = 50

[run]
hidden_width = 4

[run.train]
epochs = 3

[curve]
checkpoints = [0, 40, 80]
lambda = []
"#;

fn rst(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rst")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let o = rst(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/exp.toml"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(rst(&[]).status.code(), Some(1));
    assert_eq!(rst(&["run"]).status.code(), Some(1));
    assert_eq!(rst(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    assert_eq!(rst(&["run", "--config", &cfg, "--variant", "rst_turbo"]).status.code(), Some(1));
    assert_eq!(rst(&["run", "--config", &cfg, "--seeds", "1,x"]).status.code(), Some(1));
    let bad = write_config(dir.path(), &format!("{CONFIG}\nunknown_key = 3\n"));
    assert_eq!(rst(&["run", "--config", &bad]).status.code(), Some(1));
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = rst(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "3,4"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["metrics.csv", "model-seed3.ckpt", "model-seed4.ckpt", "report.jsonl"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let echoed = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echoed.contains("seeds = [\n    3,\n    4,\n]") || echoed.contains("seeds = [3, 4]"));
}

#[test]
fn compare_emits_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("cmp");
    let o = rst(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("comparison.txt")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let fps: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(fps[0], fps[1]);

    let one = rst(&["compare", "--config", &cfg, "--variant", "rst_full"]);
    assert_eq!(one.status.code(), Some(1));
}

#[test]
fn curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("curve");
    let o = rst(&["curve", "drift", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("curve-drift.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains(",1,")).count(), 3);

    let empty = rst(&["curve", "lambda", "--config", &cfg]);
    assert_eq!(empty.status.code(), Some(1));
    assert!(stderr(&empty).contains("lambda"));
    assert_eq!(rst(&["curve", "spiral", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn unreadable_corpus_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[data.jsonl]\npath = \"missing.jsonl\"\nn_classes = 2\n[split]\nlabeled = 2\nunlabeled = 2\ntest = 2\n";
    let cfg = write_config(dir.path(), text);
    let o = rst(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.jsonl"));
}

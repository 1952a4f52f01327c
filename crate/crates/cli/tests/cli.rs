use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgvarmion"))
        .current_dir(dir)
        .env_remove("PGVARMION_DATA_DIR")
        .args(["--data-dir", "data", "--out-dir", "out", "--deterministic"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: [&str; 6] = ["--problem", "diffusion1d", "--train-count", "12", "--test-count", "4"];

fn with_small<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&SMALL);
    v.extend_from_slice(extra);
    v
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["train", "--no-such-flag"])), 2);
    assert_eq!(code(&run(dir.path(), &["train"])), 2, "missing problem");
    assert_eq!(code(&run(dir.path(), &with_small("gen-data", &["--data-seed", "268435456"]))), 2);

    std::fs::write(dir.path().join("bad.toml"), "problem = \"diffusion1d\"\nepochz = 1\n").unwrap();
    let o = run(dir.path(), &["--config", "bad.toml", "gen-data"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochz"));
}

#[test]
fn pipeline_and_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        std::fs::write(dir.join("run.toml"), "[train]\nepochs = 2\nbatch_points = 60\n").unwrap();
        let steps: [Vec<&str>; 4] = [
            with_small("gen-data", &[]),
            with_small("train", &["--config", "run.toml", "--model", "pg-varmion"]),
            with_small("eval", &["--model", "pg-varmion"]),
            with_small("export-psi", &[]),
        ];
        for args in &steps {
            let o = run(dir, args);
            assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for name in [
        "data/manifest.json",
        "data/diffusion1d-train-s0-n12.pgvd",
        "out/manifest.json",
        "out/diffusion1d-pg-varmion.ckpt",
        "out/diffusion1d-comparison.csv",
        "out/diffusion1d-pg-varmion-psi.csv",
    ] {
        let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        assert!(x == y, "{name} differs between runs");
    }
    let manifest = std::fs::read_to_string(a.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("diffusion1d-pg-varmion.ckpt"));
    let table = std::fs::read_to_string(a.path().join("out/diffusion1d-comparison.csv")).unwrap();
    assert!(table.lines().count() >= 3, "{table}");
}

#[test]
fn corrupt_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &with_small("gen-data", &["--split", "test1"]))), 0);
    let path = dir.path().join("data/diffusion1d-test1-s0-n4.pgvd");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 9);
    std::fs::write(&path, bytes).unwrap();
    let o = run(dir.path(), &with_small("eval", &["--projection-only"]));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_without_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &with_small("eval", &["--model", "bnet"]));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

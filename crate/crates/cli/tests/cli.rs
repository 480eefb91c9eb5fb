use std::fs;
use std::process::{Command, Output};

fn unipolicy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unipolicy"))
        .args(args)
        .env_remove("UNIPOLICY_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn show_config_prints_resolved_toml() {
    let o = unipolicy(&["show-config", "--seed", "7", "--profile", "paper"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("seed = 7"));
    assert!(text.contains("profile = \"paper\""));
    assert!(text.contains("buffer_capacity = 150000"));
}

#[test]
fn missing_seed_fails() {
    let o = unipolicy(&["show-config"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\n[rl]\ngamma = 1.5\n").unwrap();
    let o = unipolicy(&["show-config", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("rl.gamma"), "{}", stderr(&o));

    fs::write(&path, "seed = 1\nsed = 2\n").unwrap();
    let o = unipolicy(&["show-config", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("sed"), "{}", stderr(&o));
}

#[test]
fn gen_demos_lists_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = unipolicy(&["gen-demos", "--seed", "2", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let listed: Vec<_> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(listed.len(), 4);
    for (k, line) in listed.iter().enumerate() {
        assert!(line.ends_with(&format!("task_{k}.ptdm")), "{line}");
        assert!(fs::metadata(line).unwrap().len() > 0);
    }
}

#[test]
fn eval_without_results_explains_what_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = unipolicy(&["eval", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("train-expert"), "{}", stderr(&o));
}

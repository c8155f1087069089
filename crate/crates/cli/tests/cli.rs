use std::process::{Command, Output};

fn nnpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnpm"))
        .args(args)
        .env("NNPM_LOG_LEVEL", "error")
        .output()
        .expect("spawn nnpm")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(nnpm(&[]).status.code(), Some(2));
    assert_eq!(nnpm(&["adapt", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(nnpm(&["frobnicate"]).status.code(), Some(2));
    let missing = nnpm(&["pretrain", "--out", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--manifest-source"));
}

#[test]
fn help_and_version_exit_0() {
    let help = nnpm(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["gen-synthetic", "extract", "pretrain", "adapt", "evaluate", "sweep"] {
        assert!(text.contains(cmd), "help lists {cmd}");
    }
    assert_eq!(nnpm(&["--version"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = nnpm(&[
        "pretrain",
        "--manifest-source",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("none.json"), "{err}");
}

#[test]
fn gen_outputs_and_bad_option_values() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let gen = nnpm(&["gen-synthetic", "--out", &p("raw"), "--per-class", "2"]);
    assert_eq!(gen.status.code(), Some(0), "{}", String::from_utf8_lossy(&gen.stderr));
    for f in ["source_train.json", "source_test.json", "target_train.json", "target_test.json", "config.json"] {
        assert!(dir.path().join("raw").join(f).exists(), "{f}");
    }
    let target = std::fs::read_to_string(dir.path().join("raw/target_train.json")).unwrap();
    assert!(!target.contains("\"label\""), "target train manifest carries no labels");

    let ckpt = p("missing.ckpt");
    let source = p("raw/source_train.json");
    let target = p("raw/target_train.json");
    let base = ["adapt", "--checkpoint", &ckpt, "--manifest-source", &source, "--manifest-target", &target];
    let with = |extra: &[&str]| {
        let mut a: Vec<&str> = base.to_vec();
        a.extend_from_slice(&["--out", "unused"]);
        a.extend_from_slice(extra);
        nnpm(&a)
    };
    let variant = with(&["--variant", "snsa-x"]);
    assert_eq!(variant.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&variant.stderr).contains("snsa-x"));
    let gamma = with(&["--gamma", "1.5"]);
    assert_eq!(gamma.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&gamma.stderr).contains("gamma"));
}

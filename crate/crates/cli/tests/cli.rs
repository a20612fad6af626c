use std::process::{Command, Output};

fn rskld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rskld")).args(args).env("RUST_LOG", "off").output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn every_subcommand_has_help() {
    let paths: &[&[&str]] = &[
        &[],
        &["rate"],
        &["sample"],
        &["sample", "words"],
        &["sample", "shape"],
        &["sample", "gue"],
        &["sample", "traceless"],
        &["sample", "blocks"],
        &["sample", "brownian"],
        &["equilibrium"],
        &["verify"],
        &["verify", "ldp"],
        &["verify", "identity"],
        &["verify", "concentration"],
        &["verify", "oracle"],
    ];
    for path in paths {
        let mut args = path.to_vec();
        args.push("--help");
        let out = rskld(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(stdout(&out).contains("Usage"), "{args:?}");
    }
}

#[test]
fn usage_and_domain_errors_exit_with_two() {
    for args in [
        &["rate", "--fn", "nope", "--at", "1"][..],
        &["rate", "--fn", "J", "--grid", "2:1:0.5"],
        &["rate", "--fn", "J"],
        &["rate", "--fn", "Keta", "--eta", "2", "--at", "1"],
        &["equilibrium", "--x", "2.5"],
        &["sample", "words", "--n", "5"],
        &["sample", "gue", "--m", "3", "--workers", "0"],
        &["verify", "identity", "--reps", "10"],
        &["verify", "ldp", "--preset", "enormous"],
    ] {
        assert_eq!(rskld(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failed_checks_exit_with_one_and_list_failures() {
    let out = rskld(&["verify", "identity", "--which", "null", "--k", "2", "--reps", "200", "--threshold", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    let line = err.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["failures"][0], "identity:null");
}

#[test]
fn rate_grid_is_inclusive_with_infinite_tags() {
    let out = rskld(&["rate", "--fn", "K", "--grid", "-0.5:0.5:0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# rskld-rate v1");
    assert_eq!(lines[1], "x,value");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[2], "-0.5,inf");
    assert!(lines[4].starts_with("0.5,"));
}

#[test]
fn closed_and_variational_columns() {
    let out = rskld(&["rate", "--fn", "K", "--grid", "0.1:1.9:0.1", "--compare", "closed:variational"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("x,closed,variational,abs_diff"));
    let last = text.lines().last().unwrap();
    let diff: f64 = last.trim_start_matches("# max_abs_diff ").parse().unwrap();
    assert!(diff < 1e-6);
}

#[test]
fn equilibrium_json_fields() {
    let out = rskld(&["equilibrium", "--x", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["x", "L", "c2", "mass", "first_moment", "K_variational", "K_closed"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!((v["mass"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn samples_do_not_depend_on_worker_count() {
    for cmd in [
        &["sample", "shape", "--uniform", "5", "--n", "300", "--reps", "40"][..],
        &["sample", "traceless", "--m", "6", "--reps", "40"],
        &["sample", "blocks", "--probs", "0.1,0.05", "--mults", "5,10", "--reps", "40"],
        &["sample", "brownian", "--k", "3", "--steps", "64", "--reps", "40"],
    ] {
        let mut one = cmd.to_vec();
        one.extend(["--seed", "9", "--workers", "1"]);
        let mut four = cmd.to_vec();
        four.extend(["--seed", "9", "--workers", "4"]);
        let (a, b) = (rskld(&one), rskld(&four));
        assert!(a.status.success(), "{cmd:?}");
        assert_eq!(a.stdout, b.stdout, "{cmd:?}");
        assert_eq!(stdout(&a).lines().count(), 42);
    }
}

#[test]
fn out_flag_writes_the_file() {
    let dir = std::env::temp_dir().join(format!("rskld-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("words.csv");
    let out = rskld(&["sample", "words", "--uniform", "3", "--n", "8", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# rskld-sample v1\nseed,m,n,letters\n"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn documented_examples() {
    let j = stdout(&rskld(&["rate", "--fn", "J", "--grid", "-3:2:0.5"]));
    assert_eq!(j.lines().count(), 2 + 11);
    let i1 = stdout(&rskld(&["rate", "--fn", "I1", "--at", "2"]));
    assert_eq!(i1.lines().nth(2).unwrap(), "2,0.000000000000000e0");
    let a = stdout(&rskld(&["sample", "shape", "--uniform", "5", "--n", "1000", "--reps", "3", "--seed", "7"]));
    let b = stdout(&rskld(&["sample", "shape", "--uniform", "5", "--n", "1000", "--reps", "3", "--seed", "7"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 2 + 3);
    let t = stdout(&rskld(&["sample", "traceless", "--m", "20", "--reps", "2"]));
    for row in t.lines().skip(2) {
        let sum: f64 = row.split(',').skip(2).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!(sum.abs() < 1e-9 * 20.0, "{sum}");
    }
    let blocks = stdout(&rskld(&["sample", "blocks", "--probs", "0.2", "--mults", "5"]));
    assert!(blocks.lines().nth(1).unwrap().ends_with("lambda_tilde_1_0"));
}

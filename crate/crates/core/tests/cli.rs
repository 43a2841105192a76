use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlp-lab")).args(args).output().expect("binary runs")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = lab(&["verify", "-s", "N=128", "-s", "tuples=4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read(&out.join("failures.csv")), "check,detail\n");
    assert!(read(&out.join("summary.txt")).contains("passed=true"));
    let verify = read(&out.join("verify.csv"));
    assert!(verify.lines().skip(2).all(|l| l.ends_with(",true")), "{verify}");
}

#[test]
fn non_vanishing_kernel_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["validate-kernel", "--kernel", "gaussian-no-vanish", "-s", "probe=quick", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL kernel:vanishing_y1"), "{stdout}");
    let failures = read(&dir.path().join("failures.csv"));
    assert!(failures.lines().nth(1).unwrap().starts_with("kernel:vanishing_y1,"));
}

#[test]
fn builtin_kernel_validates() {
    let o = lab(&["validate-kernel", "--kernel", "tensor-odd-gaussian", "-s", "m=2", "-s", "probe=quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn sweep_writes_one_report_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["sweep", "-s", "N=64", "-s", "tuples=3", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for l in ["3", "5", "8", "12"] {
        let csv = read(&dir.path().join(format!("ratio_gstar_lambda{l}.csv")));
        assert_eq!(csv.lines().count(), 2 + 3);
    }
    let summary = read(&dir.path().join("summary.txt"));
    assert_eq!(summary.lines().filter(|l| l.starts_with("operator=g*")).count(), 4);
    assert!(summary.contains("warning: lambda 3"));
}

#[test]
fn emitted_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "command = refine\nN = 64   # small\ntuples = 3\nt_count = 16\nseed = 9\n").unwrap();
    // N = 64 is coarse enough that some drifts may be flagged; only
    // reproducibility matters here
    let first = lab(&["-c", cfg.to_str().unwrap(), "-o", a.to_str().unwrap()]);
    assert_ne!(first.status.code(), Some(2), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(read(&a.join("config.source.txt")), read(&cfg));
    let second = lab(&["-c", a.join("config.txt").to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(first.stdout, second.stdout);
    for name in ["drift.csv", "ratio_g_base.csv", "ratio_S_base.csv", "ratio_gstar_base.csv", "summary.txt", "failures.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(read(&a.join("drift.csv")).starts_with("# seed=9\n"));
}

#[test]
fn compute_round_trips_inputs_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = lab(&["compute", "--op", "g,S,g*", "-s", "N=64", "-o", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let i0 = a.join("t0_input0.csv");
    let i1 = a.join("t0_input1.csv");
    let o = lab(&[
        "compute", "--op", "g,S,g*", "-s", "N=64", "--input", i0.to_str().unwrap(), "--input", i1.to_str().unwrap(),
        "-o", b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    for stem in ["t0_g", "t0_S", "t0_gstar"] {
        assert_eq!(fs::read(a.join(format!("{stem}.csv"))).unwrap(), fs::read(b.join(format!("{stem}.csv"))).unwrap());
        assert!(read(&a.join(format!("{stem}.meta"))).contains("kernel=tensor-odd-gaussian"));
    }
}

#[test]
fn csv_artifacts_use_lf() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["norms", "-s", "N=64", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let norms = read(&dir.path().join("norms.csv"));
    assert!(!norms.contains('\r'));
    assert_eq!(norms.lines().count(), 2 + 6 * 4);
    assert!(norms.lines().nth(1).unwrap().starts_with("function_id,bmo,blo,linf"));
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        &["norms"][..],
        &["compute", "-s", "colour=red", "-o", "/tmp/never"],
        &["compute", "--op", "g*", "--lambda", "0.5", "-o", "/tmp/never"],
        &["-s", "N=64"],
    ] {
        let o = lab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    let o = lab(&["-s", "N=64"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("command required"));
}

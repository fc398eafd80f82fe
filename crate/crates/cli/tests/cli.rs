use std::path::PathBuf;
use std::process::Command;

fn iqnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iqnet"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("iqnet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &PathBuf, text: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn config_errors_exit_with_2() {
    let dir = scratch("bad");
    let unknown = write(&dir, "kind = \"loynes\"\nlambda_rate = 0.2\n[interference]\npreset = \"ones(3)\"\n");
    let out = iqnet().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_rate"));

    let supercritical = write(&dir, "kind = \"mean-vs-formula\"\nlambda = 0.5\n[interference]\npreset = \"ones(3)\"\n");
    let out = iqnet().arg("run").arg(&supercritical).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("SEMANTIC_ERROR"));

    let out = iqnet().arg("fluid").arg(&supercritical).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = iqnet().arg("run").arg(dir.join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn pass_and_fail_exit_codes_and_replay() {
    let dir = scratch("run");
    let cfg = write(
        &dir,
        "kind = \"local-vs-box\"\nlambda = 0.3\nseeds = [1, 2, 3]\n[interference]\npreset = \"ones(3)\"\n",
    );
    let out = iqnet().arg("run").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(dir.join("out/report.json")).unwrap();
    assert!(report.contains("oracle-equality"));
    assert!(std::fs::read_to_string(dir.join("out/local.csv")).unwrap().starts_with("seed,local,oracle"));

    // an impossible tolerance must fail and point at a replayable seed
    let cfg = write(
        &dir,
        "kind = \"mean-vs-formula\"\nlambda = 0.25\nseeds = [4, 5]\n[interference]\npreset = \"ones(3)\"\n\
         [mean-vs-formula]\nn = 5\nburn_in = 0\nhorizon = 200\nbatches = 20\ntolerance = 1e-12\n",
    );
    let out = iqnet().arg("run").arg(&cfg).arg("--out").arg(dir.join("out2")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL mean") && stdout.contains("replay: iqnet run"), "{stdout}");

    let out = iqnet().arg("run").arg(&cfg).args(["--seed", "5", "--out"]).arg(dir.join("out3")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(std::fs::read_to_string(dir.join("out3/report.json")).unwrap().contains("\"seeds\": [\n      5\n    ]"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = scratch("det");
    let cfg = write(
        &dir,
        "kind = \"coupling-suite\"\nlambda = 0.3\nseeds = [0, 1]\n[interference]\npreset = \"ones(3)\"\n\
         [coupling-suite]\nhorizon = 100\nmin_events = 100\n",
    );
    for sub in ["a", "b"] {
        let out = iqnet().arg("run").arg(&cfg).arg("--out").arg(dir.join(sub)).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir.join("a/report.json")).unwrap();
    let b = std::fs::read(dir.join("b/report.json")).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn dump_driving_is_deterministic_csv() {
    let run = || iqnet().args(["dump-driving", "--seed", "3", "--radius", "1", "--t1", "5"]).output().unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,x0,kind,mark"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    let times: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]) && times.iter().all(|&t| (0.0..5.0).contains(&t)));

    let other = iqnet().args(["dump-driving", "--seed", "4", "--radius", "1", "--t1", "5"]).output().unwrap();
    assert_ne!(other.stdout, text.as_bytes());
}

#[test]
fn verify_rejects_unknown_criterion() {
    let out = iqnet().args(["verify", "99"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dynvoter"));
    c.env_remove("DYNVOTER_THREADS");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    out.status.code().unwrap()
}

#[test]
fn theta_table_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_in(dir.path(), &["theta", "--d", "3,4", "--nu", "0,0.3", "--out", "t.csv"]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "d,nu,beta,rho,delta0,theta,depth,residual");
    assert_eq!(lines.count(), 4);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["experiment"], "theta-table");
    assert!(summary["gates"].as_array().unwrap().iter().all(|g| g["pass"] == true));
}

#[test]
fn reruns_are_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["sim-meeting", "--n", "200", "--d", "3", "--nu", "0.3", "--reps", "50", "--seed", "7"];
    let mut a = base.to_vec();
    a.extend(["--threads", "1", "--out", "a.csv"]);
    let mut b = base.to_vec();
    b.extend(["--out", "b.csv"]);
    run_in(dir.path(), &a);
    // thread count from the environment
    let out = bin().current_dir(dir.path()).args(&b).env("DYNVOTER_THREADS", "3").output().unwrap();
    assert!(out.status.code().unwrap() <= 1);
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.json"), read("b.json"));
    assert!(String::from_utf8(read("a.csv")).unwrap().starts_with("replica,tau,censored\n"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["sim-meeting", "--d", "3", "--nu", "0.3", "--reps", "5"]), 2);
    assert_eq!(run_in(dir.path(), &["sim-voter", "--n", "10", "--d", "2", "--nu", "0.3", "--u", "0.5", "--reps", "5"]), 2);
    assert_eq!(run_in(dir.path(), &["sim-meeting", "--n", "10", "--d", "3", "--nu=-1", "--reps", "5"]), 2);
    assert_eq!(run_in(dir.path(), &["no-such-command"]), 2);
}

#[test]
fn gate_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // a tiny cap censors every run
    let code = run_in(
        dir.path(),
        &["sim-meeting", "--n", "500", "--d", "3", "--nu", "0.3", "--reps", "20", "--t-cap", "0.01", "--out", "m.csv"],
    );
    assert_eq!(code, 1);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "schema": 1,
  "experiment": "duality-check",
  "params": {"n": 30, "d": 3, "nu": 0.7, "t": 2.0, "reps": 4},
  "seed": 3
}"#;
    fs::write(dir.path().join("c.json"), cfg).unwrap();
    assert_eq!(run_in(dir.path(), &["run", "--config", "c.json", "--reps", "6", "--out", "dual.csv"]), 0);
    let csv = fs::read_to_string(dir.path().join("dual.csv")).unwrap();
    assert!(csv.starts_with("replica,pass,mismatch_count\n"));
    assert_eq!(csv.lines().count(), 7);

    fs::write(dir.path().join("bad.json"), "{\n  \"experiment\": \"fw\",\n  \"params\": {\"uu\": 1}\n}").unwrap();
    let out = bin().current_dir(dir.path()).args(["run", "--config", "bad.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("uu") && err.contains("line 3"), "{err}");
}

#[test]
fn other_subcommands_write_their_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (&["sim-voter", "--n", "40", "--d", "3", "--nu", "0.3", "--u", "0.5", "--reps", "3", "--horizon", "10"], "replica,t,O,D"),
        (&["sim-toy", "--n", "100000", "--d", "3", "--nu", "0.3", "--hbar", "3", "--reps", "5"], "replica,tau_first,tau_second,tau_final,N"),
        (&["fw", "--d", "3", "--nu", "0.3", "--u", "0.4", "--reps", "3"], "path,s,B"),
        (&["edge-tail", "--n", "400", "--d", "3", "--nu", "0.3", "--reps", "20"], "replica,tau,censored"),
        (&["homogenisation", "--n", "40,80", "--d", "3", "--nu", "0.3", "--u", "0.5", "--reps", "3"], "n,replica,value"),
        (&["consensus", "--n", "20", "--d", "3", "--nu", "0.3", "--u", "0.5", "--reps", "3"], "replica,tau_over_n"),
    ];
    for (k, (args, header)) in cases.iter().enumerate() {
        let out = format!("o{k}.csv");
        let mut a = args.to_vec();
        a.extend(["--seed", "1", "--out", out.as_str()]);
        let code = run_in(dir.path(), &a);
        assert!(code <= 1, "{args:?} exited {code}");
        let csv = fs::read_to_string(dir.path().join(&out)).unwrap();
        assert_eq!(csv.lines().next().unwrap(), *header, "{args:?}");
        assert!(dir.path().join(format!("o{k}.json")).exists());
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedsec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsec"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn fedsec")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsec(&["run", "--out", "r", "--rounds", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "transcript.log",
        "ledger.csv",
        "trajectory.csv",
        "rounds.json",
    ] {
        assert!(dir.path().join("r").join(f).exists(), "{f} missing");
    }
    let ledger = fs::read_to_string(dir.path().join("r/ledger.csv")).unwrap();
    assert!(ledger.starts_with("round,phase,direction,msg_type,bytes"));
}

#[test]
fn threshold_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "population = 4\nfraction = 0.25\nthreshold = 2\n",
    )
    .unwrap();
    let o = fedsec(&["run", "--config", "c.toml", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));

    fs::write(dir.path().join("one.toml"), "threshold = 1\n").unwrap();
    assert_eq!(
        fedsec(&["run", "--config", "one.toml", "--out", "r"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unparsable_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "no_such_key = 3\n").unwrap();
    assert_eq!(
        fedsec(&["run", "--config", "c.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn injected_faults_abort_with_reason() {
    let dir = tempfile::tempdir().unwrap();
    for (fault, reason) in [
        ("tamper-sig", "bad-signature"),
        ("tamper-mac", "bad-mac"),
        ("reuse-t", "replay"),
        ("drop-update", "timeout"),
    ] {
        let o = fedsec(
            &["run", "--out", fault, "--inject", fault, "--rounds", "3"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(3), "{fault}");
        assert!(stderr(&o).contains(reason), "{fault}: {}", stderr(&o));
    }
}

#[test]
fn sweeps_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[sweep]\npopulation = 2000\ndim = 100\nrounds = 10\ndef_points = 5\n",
    )
    .unwrap();
    for (kind, file, header) in [
        ("c", "sweep_c.csv", "C,K_s,init_bytes,agg_bytes"),
        (
            "rounds",
            "sweep_rounds.csv",
            "t,cum_init_cached,cum_init_nocache,cum_agg",
        ),
        ("def", "sweep_def.csv", "d,K,def_t1,def_converged"),
    ] {
        let o = fedsec(
            &["sweep", kind, "--config", "c.toml", "--out", "s", "--check"],
            dir.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{kind}: {}{}",
            stdout(&o),
            stderr(&o)
        );
        let csv = fs::read_to_string(dir.path().join("s").join(file)).unwrap();
        assert!(csv.starts_with(header), "{kind}: {csv}");
    }
}

#[test]
fn simulated_rounds_sweep_is_size_limited() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("big.toml"), "[sweep]\npopulation = 1000\n").unwrap();
    let o = fedsec(
        &[
            "sweep",
            "rounds",
            "--simulate",
            "--config",
            "big.toml",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analytic mode required"));

    fs::write(
        dir.path().join("small.toml"),
        "[sweep]\npopulation = 10\ndim = 20\nrounds = 4\nfraction = 0.5\n",
    )
    .unwrap();
    let o = fedsec(
        &[
            "sweep",
            "rounds",
            "--simulate",
            "--check",
            "--config",
            "small.toml",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn verify_passes_and_reports_injected_faults() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsec(&["verify", "--out", "v"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("v/verify.json").exists());

    let o = fedsec(&["verify", "--inject", "tamper-sig"], dir.path());
    assert_ne!(o.status.code(), Some(0));

    let o = fedsec(&["verify", "--inject", "reuse-t"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(
        stdout(&o)
            .lines()
            .any(|l| l.starts_with("replay") && l.contains("FAIL")),
        "{}",
        stdout(&o)
    );
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert_eq!(
            fedsec(
                &["run", "--seed", "9", "--out", out, "--rounds", "4"],
                dir.path()
            )
            .status
            .code(),
            Some(0)
        );
    }
    for f in [
        "transcript.log",
        "ledger.csv",
        "trajectory.csv",
        "rounds.json",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn socket_transport_matches_bus() {
    let dir = tempfile::tempdir().unwrap();
    for (out, t) in [("bus", "bus"), ("sock", "socket")] {
        let o = fedsec(
            &["run", "--out", out, "--transport", t, "--rounds", "2"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("bus/trajectory.csv")).unwrap();
    let b = fs::read(dir.path().join("sock/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn shipped_config_is_valid() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let dir = tempfile::tempdir().unwrap();
    let o = fedsec(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "r",
            "--rounds",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

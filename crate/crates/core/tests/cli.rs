use std::path::{Path, PathBuf};
use std::process::Command;

use rakecal::calibration::ErrorMode;
use rakecal::cli_io::{fit_dataset, load_dataset, write_dataset, FitRequest};
use rakecal::design_bootstrap::stream_rng;
use rakecal::estimators::Estimator;
use rakecal::raking::TwoPhaseDesign;
use rakecal::simulation::{generate_cohort, CensorInterval, ScenarioConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rakecal"))
}

fn bundled_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/two_phase_example.csv")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rakecal-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Output file with the manifest header line removed.
fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip_while(|l| l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

#[test]
fn fit_output_matches_library() {
    let out = scratch("fit");
    let status = bin()
        .args(["fit", "-e", "grn", "-b", "20", "--seed", "5", "-o"])
        .arg(&out)
        .arg(bundled_data())
        .status()
        .unwrap();
    assert!(status.success());
    let data = load_dataset(&bundled_data()).unwrap();
    let mut req = FitRequest::new(Estimator::Grn, ErrorMode::Both);
    req.bootstrap = 20;
    req.seed = 5;
    let report = fit_dataset(&data, &req).unwrap();
    assert_eq!(body(&out.join("grn.csv")), report.to_csv());
    let header = std::fs::read_to_string(out.join("grn.csv")).unwrap();
    assert!(header.starts_with("# manifest_sha256="));
    assert!(header.lines().next().unwrap().contains("seed=5"));
}

#[test]
fn ht_equals_true_fit_when_everyone_is_validated() {
    let mut cfg = ScenarioConfig::base(1.5f64.ln(), 0.5, 0.5, 0.15);
    cfg.n = 300;
    cfg.censor_interval = CensorInterval { lower: 3.25, length: 2.0 };
    let cohort = generate_cohort(&cfg, &mut stream_rng(4, 0)).unwrap();
    let dir = scratch("full");
    let path = dir.join("full.csv");
    let file = std::fs::File::create(&path).unwrap();
    write_dataset(file, &cohort, &TwoPhaseDesign::full(cohort.len())).unwrap();
    let data = load_dataset(&path).unwrap();
    let ht = fit_dataset(&data, &FitRequest::new(Estimator::Complete, ErrorMode::Both)).unwrap();
    let truth = fit_dataset(&data, &FitRequest::new(Estimator::True, ErrorMode::Both)).unwrap();
    for (a, b) in ht.rows.iter().zip(&truth.rows) {
        assert_eq!(a.beta, b.beta);
    }
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let dir = scratch("sim");
    let scenario = dir.join("tiny.toml");
    let mut cfg = ScenarioConfig::outcome_only(1.5f64.ln(), 0.5);
    cfg.name = "tiny".into();
    cfg.n = 300;
    cfg.reps = 4;
    cfg.censor_interval = CensorInterval { lower: 3.25, length: 2.0 };
    std::fs::write(&scenario, cfg.to_toml_string()).unwrap();
    let run = |sub: &str, threads: &str| {
        let out = dir.join(sub);
        let status = bin()
            .env("RAKECAL_THREADS", threads)
            .args(["simulate", "--bootstrap", "3", "-o"])
            .arg(&out)
            .arg(&scenario)
            .status()
            .unwrap();
        assert!(status.success());
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in ["tiny.csv", "tiny.txt"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        // Output paths enter the manifest, so compare everything below it
        // and the seed on the header line.
        assert_eq!(body(&a.join(f)), body(&b.join(f)));
        assert!(!x.is_empty() && !y.is_empty());
    }
    let rerun = run("a", "1");
    assert_eq!(std::fs::read(rerun.join("tiny.csv")).unwrap(), std::fs::read(a.join("tiny.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let out = bin().arg("version").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));

    let dir = scratch("codes");
    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "time_star,delta_star\n1,1\n").unwrap();
    let status = bin().args(["fit", "-e", "rc", "-o"]).arg(&dir).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let missing = bin().args(["simulate", "no_such_scenario"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));

    // Parses fine, but the validated subjects have no events, so the
    // complete-case fit fails.
    let no_events = dir.join("no_events.csv");
    let mut csv = String::from("time_star,delta_star,x_star,z,randomized,time,delta,x\n");
    for i in 0..20 {
        let t = i as f64 + 1.5;
        let x = i as f64 * 0.1;
        if i % 2 == 0 {
            csv.push_str(&format!("{t},1,{x},{},1,{t},0,{x}\n", i % 3));
        } else {
            csv.push_str(&format!("{t},1,{x},{},0,NA,NA,NA\n", i % 3));
        }
    }
    std::fs::write(&no_events, csv).unwrap();
    let status = bin().args(["fit", "-e", "ht", "-o"]).arg(&dir).arg(&no_events).status().unwrap();
    assert_eq!(status.code(), Some(3));
}

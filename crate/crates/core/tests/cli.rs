use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levymeta::cli::{CatalogArtifact, PHASE_HEADER, TRACE_HEADER};
use levymeta::dynamics::Attractor;
use levymeta::sde::SwitchingPath;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(config: &Path, out: &Path, command: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levymeta"))
        .arg("-c")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg(command)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn catalog(out: &Path) -> CatalogArtifact {
    serde_json::from_str(&fs::read_to_string(out.join("catalog.json")).unwrap()).unwrap()
}

fn patched(dir: &Path, name: &str, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(config_path(name)).unwrap();
    assert!(text.contains(from), "{from} not in {name}");
    let p = dir.join(name);
    fs::write(&p, text.replacen(from, to, 1)).unwrap();
    p
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = patched(dir.path(), "duffing_additive.toml", "alpha = 1.5", "alpha = \"many\"");
    let o = run(&p, dir.path(), "attractors");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise.alpha"));

    let p = patched(dir.path(), "duffing_additive.toml", "cutoff = 0.5", "cutoff = 0.5\nshape_factor = 2.0");
    let o = run(&p, dir.path(), "attractors");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shape_factor"));

    let p = patched(dir.path(), "duffing_additive.toml", "alpha = 1.5", "alpha = 2.5");
    assert_eq!(run(&p, dir.path(), "attractors").status.code(), Some(2));
}

#[test]
fn missing_artifacts_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("duffing_additive.toml");
    for cmd in ["rates", "exit-times", "metastability", "verify", "report-data"] {
        let o = run(&cfg, dir.path(), cmd);
        assert_eq!(o.status.code(), Some(3), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn duffing_catalog_and_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "duffing_additive.toml", "horizon = 2000.0", "horizon = 0.0");
    assert_eq!(run(&cfg, dir.path(), "attractors").status.code(), Some(0));
    let art = catalog(dir.path());
    let mut xs: Vec<f64> = art
        .attractors
        .entries
        .iter()
        .map(|e| match e {
            Attractor::Point { state } => {
                assert!(state[1].abs() < 1e-8);
                state[0]
            }
            Attractor::Cycle { .. } => panic!("unexpected cycle"),
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs.len(), 2);
    assert!((xs[0] + 1.0).abs() < 1e-8 && (xs[1] - 1.0).abs() < 1e-8, "{xs:?}");
    assert_eq!(art.boundary.polylines.len(), 1);

    assert_eq!(run(&cfg, dir.path(), "report-data").status.code(), Some(0));
    let plots = dir.path().join("plots");
    assert_eq!(fs::read_to_string(plots.join("trace.csv")).unwrap(), format!("{TRACE_HEADER}\n"));
    let phase = fs::read_to_string(plots.join("phase.csv")).unwrap();
    assert_eq!(phase.lines().next(), Some(PHASE_HEADER));
    assert!(phase.lines().filter(|l| l.starts_with("attractor,")).count() == 2);
    assert_eq!(fs::read_to_string(plots.join("exit_hist.csv")).unwrap(), "epsilon,source,rescaled_time\n");
    assert_eq!(fs::read_to_string(plots.join("generator.csv")).unwrap(), "from,to,rate,se\n");
}

#[test]
fn goldbeter_cycles_and_demo_trace_switches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("goldbeter.toml");
    assert_eq!(run(&cfg, dir.path(), "attractors").status.code(), Some(0));
    let art = catalog(dir.path());
    let mut cycles: Vec<(f64, f64)> = art
        .attractors
        .entries
        .iter()
        .zip(&art.periods)
        .map(|(e, p)| (e.diameter(), p.expect("cycle period")))
        .collect();
    cycles.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(cycles.len(), 2);
    assert!((320.0..=334.0).contains(&cycles[0].1), "inner period {}", cycles[0].1);
    assert!(cycles[1].1 > cycles[0].1);

    assert_eq!(run(&cfg, dir.path(), "report-data").status.code(), Some(0));
    let plots = dir.path().join("plots");
    let trace = fs::read_to_string(plots.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let labels: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    let switches = labels.windows(2).filter(|w| w[0] != w[1] && !w[1].is_empty()).count();
    assert!(switches >= 2, "{switches} switches");

    let sw: SwitchingPath = serde_json::from_str(fs::read_to_string(plots.join("trace_switching.jsonl")).unwrap().trim()).unwrap();
    assert!(sw.states.windows(2).all(|w| w[0] != w[1]));
}

#[test]
fn verify_exits_5_on_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let reports = dir.path().join("reports");
    fs::create_dir_all(&reports).unwrap();
    let bad = r#"{"offdiagonal_nonnegative": false, "row_sum_sigmas": [0.0], "chapman_kolmogorov_error": 0.0, "pass": false}"#;
    fs::write(reports.join("generator_validity.json"), bad).unwrap();
    let o = run(&config_path("duffing_additive.toml"), dir.path(), "verify");
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL generator validity"));
}

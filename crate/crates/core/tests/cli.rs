//! End-to-end runs of the `polaron` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FMO: &str = r#"
propagator = "full"

[model]
preset = "fmo4"

[bath]
preset = "fmo4"

[initial]
site = 1

[numerics]
t_max_fs = 100.0
"#;

fn polaron(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polaron"))
        .args(args)
        .env_remove("POLARON_TCL_CACHE")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_in(dir: &Path, command: &[&str], config: &Path, out: &str) -> (Output, PathBuf) {
    let out_dir = dir.join(out);
    let mut args = command.to_vec();
    args.extend([
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    (polaron(&args), out_dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parsed CSV: header and rows, with every numeric field checked to be finite.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    for row in &rows {
        for field in row {
            if let Ok(v) = field.parse::<f64>() {
                assert!(v.is_finite(), "non-finite field in {}", path.display());
            }
        }
    }
    (header, rows)
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_writes_finite_outputs_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "fmo.toml", FMO);
    let (o1, a) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert!(o1.status.success(), "{}", stderr(&o1));
    let (o2, b) = run_in(tmp.path(), &["simulate"], &cfg, "b");
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert_eq!(dir_contents(&a), dir_contents(&b));

    for f in [
        "trajectory.csv",
        "populations.csv",
        "coherences.csv",
        "eigen_populations.csv",
    ] {
        let (_, rows) = read_csv(&a.join(f));
        assert_eq!(rows.len(), 201, "{f}");
    }
    let (header, rows) = read_csv(&a.join("populations.csv"));
    assert_eq!(header, ["t_fs", "p1", "p2", "p3", "p4"]);
    for row in &rows {
        let total: f64 = row[1..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
    let meta = fs::read_to_string(a.join("metadata.toml")).unwrap();
    assert!(meta.contains("# kernel_cache_key = "));
    assert!(meta.contains("zeroth-order"));
}

#[test]
fn metadata_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "fmo.toml", FMO);
    let (o, a) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert!(o.status.success(), "{}", stderr(&o));
    let (o, b) = run_in(tmp.path(), &["simulate"], &a.join("metadata.toml"), "b");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn kernel_cache_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "fmo.toml", FMO);
    let cache = tmp.path().join("cache");
    let (o, a) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert!(o.status.success());
    for out in ["b", "c"] {
        let out_dir = tmp.path().join(out);
        let o = polaron(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--cache",
            cache.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(dir_contents(&a), dir_contents(&out_dir));
    }
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
}

#[test]
fn site_index_out_of_range_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", &FMO.replace("site = 1", "site = 9"));
    let (o, out) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("site = 9"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let tmp = TempDir::new().unwrap();
    let text = FMO.replace("t_max_fs = 100.0", "t_max_fs = 100.0\nt_max_ps = 1.0");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let (o, _) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 15") && err.contains("t_max_ps"), "{err}");
}

#[test]
fn fractional_step_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        &FMO.replace("t_max_fs = 100.0", "t_max_fs = 100.2"),
    );
    let (o, _) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = polaron(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = polaron(&["unknown-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_needs_two_propagators() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "fmo.toml", FMO);
    let (o, _) = run_in(tmp.path(), &["compare", "full"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let (o, _) = run_in(tmp.path(), &["compare", "full", "lindblad"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn compare_writes_side_by_side_columns_and_summary() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{FMO}\n[compare]\npropagators = [\"full\", \"hom-only\", \"secular\"]\n");
    let cfg = write_config(tmp.path(), "fmo.toml", &text);
    let (o, out) = run_in(tmp.path(), &["compare"], &cfg, "a");
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("compare.csv"));
    assert_eq!(header.len(), 1 + 3 * 4);
    assert_eq!(header[1], "full_p1");
    assert_eq!(header[5], "hom-only_p1");
    let (_, summary) = read_csv(&out.join("compare_summary.csv"));
    assert_eq!(summary.len(), 2);
    let max_dev: f64 = summary[0][2].parse().unwrap();
    let recomputed = rows
        .iter()
        .flat_map(|r| {
            (1..5).map(move |k| {
                (r[k].parse::<f64>().unwrap() - r[k + 4].parse::<f64>().unwrap()).abs()
            })
        })
        .fold(0.0, f64::max);
    assert!((max_dev - recomputed).abs() < 1e-12);
}

#[test]
fn foerster_matches_full_when_couplings_are_dropped() {
    let tmp = TempDir::new().unwrap();
    let text = FMO.replace(
        "t_max_fs = 100.0",
        "t_max_fs = 1000.0\ncoupling_treatment = \"dropped\"",
    );
    let cfg = write_config(tmp.path(), "fmo.toml", &text);
    let (o, out) = run_in(tmp.path(), &["compare", "full", "foerster"], &cfg, "a");
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, summary) = read_csv(&out.join("compare_summary.csv"));
    let final_dev: f64 = summary[0][4].parse().unwrap();
    assert!(final_dev < 0.01, "final population deviation {final_dev}");
}

#[test]
fn spectrum_of_the_mode_peaks_near_its_frequency() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "fmo.toml",
        &FMO.replace("t_max_fs = 100.0", "t_max_fs = 1000.0"),
    );
    let (o, out) = run_in(tmp.path(), &["spectrum"], &cfg, "a");
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, peaks) = read_csv(&out.join("peaks.csv"));
    assert_eq!(header, ["rank", "frequency_cm", "height", "width_cm"]);
    let f: f64 = peaks[0][1].parse().unwrap();
    assert!((f - 180.0).abs() <= 15.0, "dominant peak at {f}");
    let (_, spectrum) = read_csv(&out.join("spectrum.csv"));
    assert!(column(&spectrum, 1).iter().all(|&m| m >= 0.0));
}

#[test]
fn tracedist_separates_the_frames_for_a_markov_run() {
    let tmp = TempDir::new().unwrap();
    let text = FMO
        .replace("\"full\"", "\"markov\"")
        .replace(
            "preset = \"fmo4\"\n\n[initial]",
            "preset = \"fmo4-fast\"\n\n[initial]",
        )
        .replace("t_max_fs = 100.0", "t_max_fs = 400.0")
        + "\n[initial_b]\nsite = 2\n";
    let cfg = write_config(tmp.path(), "fast.toml", &text);
    let (o, out) = run_in(tmp.path(), &["tracedist"], &cfg, "a");
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, intervals) = read_csv(&out.join("tracedist_intervals.csv"));
    assert!(intervals.iter().all(|r| r[0] == "lab"));
    assert!(!intervals.is_empty());
    for frame in ["polaron", "lab"] {
        let (_, rows) = read_csv(&out.join(format!("tracedist_{frame}.csv")));
        assert!(column(&rows, 1)
            .iter()
            .all(|&d| (-1e-12..=1.0 + 1e-12).contains(&d)));
    }
    let (_, polaron) = read_csv(&out.join("tracedist_polaron.csv"));
    assert!(column(&polaron, 2).iter().all(|&d| d <= 1e-6));
}

#[test]
fn tracedist_without_second_state_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "fmo.toml", FMO);
    let (o, _) = run_in(tmp.path(), &["tracedist"], &cfg, "a");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial_b"));
}

#[test]
fn undamped_bath_fails_numerically_for_markov() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
propagator = "markov"

[model]
preset = "fmo4"

[bath]
kT_cm = 200.0

[bath.spectral_density]
continuum_scale = 0.0
continuum_norm = 1.0
continuum = []

[bath.spectral_density.mode]
weight = 0.22
frequency_cm = 180.0
broadening_cm = 0.05

[initial]
site = 1

[numerics]
t_max_fs = 100.0
markov_t_cap_fs = 1000.0
"#;
    let cfg = write_config(tmp.path(), "undamped.toml", text);
    let (o, _) = run_in(tmp.path(), &["simulate"], &cfg, "a");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn validate_rejects_unknown_criteria() {
    let o = polaron(&["validate", "--criterion", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_runs_a_single_criterion() {
    let o = polaron(&["validate", "--criterion", "1"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.starts_with("PASS") || out.starts_with("FAIL"), "{out}");
    assert!(out.contains("acceptance: "));
    assert_eq!(
        o.status.code(),
        Some(if out.starts_with("PASS") { 0 } else { 3 })
    );
}

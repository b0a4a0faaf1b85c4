use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hfqc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfqc"))
        .args(args)
        .args(["--out", out.to_str().unwrap()])
        .output()
        .expect("binary runs")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the toolkit (header comments and column row skipped).
fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn assert_embeds_run_info(dir: &Path, seed: u64) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let name = path.display().to_string();
        if name.ends_with(".csv") {
            assert!(text.starts_with(&format!("# toolkit_version={}\n", env!("CARGO_PKG_VERSION"))), "{name}");
            assert!(text.contains(&format!("\n# seed={seed}\n")), "{name}");
            assert!(text.contains("\n# config={"), "{name}");
        } else {
            let v: Value = serde_json::from_str(&text).unwrap();
            let (version, s, config) = match v.get("run") {
                Some(run) => (&run["toolkit_version"], &run["seed"], &run["config"]),
                None => (&v["toolkit_version"], &v["metadata"]["seed"], &v["metadata"]["config"]),
            };
            assert_eq!(version, env!("CARGO_PKG_VERSION"), "{name}");
            assert_eq!(s, seed, "{name}");
            assert!(config.get("params").is_some() || config.get("job").is_some(), "{name}");
        }
    }
}

#[test]
fn malformed_state_label_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfqc(&["design", "--target", "5,2"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid state"));
    let out = hfqc(&["design", "--mode", "fast"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn robust_design_of_the_stretched_transition() {
    let dir = tempfile::tempdir().unwrap();
    let out = hfqc(&["design", "--mode", "robust", "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("design_report.json"));
    assert!(report["ensemble_fidelity"].as_f64().unwrap() > 0.99);
    assert_eq!(report["meets_floor"], true);
    let wf = json(dir.path().join("waveform.json"));
    assert_eq!(wf["uw_phases_rad"].as_array().unwrap().len(), 30);
    assert_eq!(wf["rfx_phases_rad"].as_array().unwrap().len(), 15);
    assert_eq!(wf["metadata"]["mode"], "robust");
    assert_embeds_run_info(dir.path(), 4);
}

#[test]
fn unreachable_floor_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("job.toml");
    std::fs::write(&job, "[optimizer]\nmax_iterations = 2\nn_restarts = 1\n").unwrap();
    let out = hfqc(&["design", "--mode", "plain", "--job", job.to_str().unwrap()], &dir.path().join("o"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("below the floor"));
}

#[test]
fn superposition_design_and_propagation() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("job.toml");
    std::fs::write(
        &job,
        "seed = 2\nmode = \"plain\"\n\n[design]\ninitial = \"4,4\"\n\
         target = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1]\n",
    )
    .unwrap();
    let design_dir = dir.path().join("design");
    let out = hfqc(&["design", "--job", job.to_str().unwrap()], &design_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let prop_dir = dir.path().join("prop");
    let wf = design_dir.join("waveform.json");
    let out = hfqc(&["propagate", "--waveform", wf.to_str().unwrap(), "--seed", "2"], &prop_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = csv_rows(prop_dir.join("populations.csv"));
    assert_eq!(rows.len(), 31);
    let values = |row: &Vec<String>| row.iter().map(|c| c.parse::<f64>().unwrap()).collect::<Vec<f64>>();
    let first = values(&rows[0]);
    assert_eq!(first[1], 0.0);
    assert_eq!(first[2], 1.0);
    assert!(first[3..18].iter().all(|&p| p == 0.0));
    for row in &rows {
        let v = values(row);
        let sum: f64 = v[2..18].iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }
    let last = values(rows.last().unwrap());
    assert!((last[2 + 9] - 0.5).abs() < 0.01 && (last[2 + 15] - 0.5).abs() < 0.01, "{last:?}");

    let coherences = csv_rows(prop_dir.join("coherences.csv"));
    assert_eq!(coherences.len(), 31 * 256);
    let report = json(prop_dir.join("propagate_report.json"));
    assert!(report["final_fidelity"].as_f64().unwrap() > 0.99);
    assert_embeds_run_info(&prop_dir, 2);
}

#[test]
fn flags_override_job_file_and_params_file() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("job.toml");
    std::fs::write(&job, "seed = 5\nmode = \"plain\"\n[params]\nomega_uw_hz = 30000.0\n").unwrap();
    let params = dir.path().join("params.toml");
    std::fs::write(&params, "omega_uw_hz = 25000.0\n").unwrap();

    let a = dir.path().join("a");
    assert!(hfqc(&["design", "--job", job.to_str().unwrap()], &a).status.success());
    let run = &json(a.join("design_report.json"))["run"];
    assert_eq!(run["seed"], 5);
    assert_eq!(run["config"]["params"]["omega_uw_hz"], 30000.0);

    let b = dir.path().join("b");
    let args = ["design", "--job", job.to_str().unwrap(), "--params", params.to_str().unwrap(), "--seed", "6"];
    assert!(hfqc(&args, &b).status.success());
    let run = &json(b.join("design_report.json"))["run"];
    assert_eq!(run["seed"], 6);
    assert_eq!(run["config"]["optimizer"]["rng_seed"], 6);
    assert_eq!(run["config"]["mode"], "plain");
    assert_eq!(run["config"]["params"]["omega_uw_hz"], 25000.0);
    assert_eq!(run["config"]["params"]["omega0_hz"], 1e6);

    std::fs::write(&job, "sed = 5\n").unwrap();
    assert!(!hfqc(&["design", "--job", job.to_str().unwrap()], &b).status.success());
}

#[test]
fn validate_passes_and_catches_injected_non_hermiticity() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok");
    let out = hfqc(&["validate", "--gradient-samples", "3"], &ok);
    assert!(out.status.success());
    let report = json(ok.join("validation.json"));
    assert_eq!(report["all_passed"], true);
    let gradient = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "gradient").unwrap();
    assert!(gradient["residual"].as_f64().unwrap() < 1e-6);
    assert_embeds_run_info(&ok, 0);

    let bad = dir.path().join("bad");
    let out = hfqc(&["validate", "--gradient-samples", "1", "--inject-non-hermitian", "1e-3"], &bad);
    assert!(!out.status.success());
    let report = json(bad.join("validation.json"));
    assert_eq!(report["all_passed"], false);
    let herm = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "hermiticity").unwrap();
    assert_eq!(herm["passed"], false);
}

#[test]
fn zero_noise_single_length_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "benchmark", "--mode", "plain", "--progressions", "2", "--max-len", "0", "--shots", "3",
        "--sigma-omega0", "0", "--sigma-omega-uw", "0", "--seed", "9",
    ];
    let out = hfqc(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(dir.path().join("summary.json"));
    assert!(summary["fit"].is_null());
    let curve = csv_rows(dir.path().join("curve.csv"));
    assert_eq!(curve.len(), 1);
    let f0: f64 = curve[0][1].parse().unwrap();
    assert!(f0 > 0.97);
    assert_eq!(summary["epsilon0_from_l0"].as_f64().unwrap(), 1.0 - f0);
    // identical shots in the noiseless limit
    let records = csv_rows(dir.path().join("records.csv"));
    assert_eq!(records.len(), 6);
    assert!(records.chunks(3).all(|c| c.iter().all(|r| r[5] == c[0][5])));
    assert_embeds_run_info(dir.path(), 9);
}

#[test]
fn correlate_writes_a_table_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "correlate", "--mode", "plain", "--progressions", "1", "--max-len", "2",
        "--omega0-offsets", "-200,200", "--omega-uw-offsets", "0",
    ];
    let out = hfqc(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(dir.path().join("correlation.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 7));
    let summary = json(dir.path().join("correlation_summary.json"));
    assert_eq!(summary["points"], 2);
    assert_embeds_run_info(dir.path(), 0);
}

#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use brm_core::io::{read_dataset_csv, DatasetSidecar};
use brm_core::sgda::initial_point;
use brm_core::{InitMode, Parameterization, SaddleObjective, TabularMdp};
use serde_json::Value;

fn brm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brm"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("BRM_SEED")
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, f: &str) -> String {
    dir.join(f).to_string_lossy().into_owned()
}

fn json(dir: &Path, f: &str) -> Value {
    serde_json::from_slice(&fs::read(dir.join(f)).unwrap()).unwrap()
}

fn gen(dir: &Path, n: &str) {
    assert!(brm(dir, &["gen-mdp", "--seed", "4"]).status.success());
    let out = brm(
        dir,
        &[
            "gen-data",
            "--seed",
            "4",
            "--mdp",
            &path(dir, "mdp.json"),
            "--n",
            n,
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_mdp_is_seed_deterministic_and_rejects_bad_discount() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(brm(a.path(), &["gen-mdp", "--seed", "9"]).status.success());
    assert!(brm(b.path(), &["gen-mdp", "--seed", "9"]).status.success());
    assert_eq!(
        fs::read(a.path().join("mdp.json")).unwrap(),
        fs::read(b.path().join("mdp.json")).unwrap()
    );
    assert!(brm(b.path(), &["gen-mdp", "--seed", "10"]).status.success());
    assert_ne!(
        fs::read(a.path().join("mdp.json")).unwrap(),
        fs::read(b.path().join("mdp.json")).unwrap()
    );

    let out = brm(a.path(), &["gen-mdp", "--beta", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn seed_can_come_from_the_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(brm(a.path(), &["gen-mdp", "--seed", "12"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_brm"))
        .args(["gen-mdp", "--output-dir"])
        .arg(b.path())
        .env("BRM_SEED", "12")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(a.path().join("mdp.json")).unwrap(),
        fs::read(b.path().join("mdp.json")).unwrap()
    );
}

#[test]
fn corrupted_dataset_row_is_reported_with_its_index() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "50");
    let csv = dir.path().join("dataset.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Header is line 0; data row 7 is line 8.
    let mut fields: Vec<String> = lines[8].split(',').map(String::from).collect();
    fields[1] = "99".into();
    lines[8] = fields.join(",");
    fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let out = brm(
        dir.path(),
        &[
            "solve",
            "--mdp",
            &path(dir.path(), "mdp.json"),
            "--data",
            &csv.to_string_lossy(),
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("row 7"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_batch_single_step_matches_a_gradient_step() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "40");
    let config = dir.path().join("full.toml");
    fs::write(&config, "[sgda]\nsampling = \"without_replacement\"\n").unwrap();
    let out = brm(
        dir.path(),
        &[
            "train",
            "--config",
            &config.to_string_lossy(),
            "--mdp",
            &path(dir.path(), "mdp.json"),
            "--data",
            &path(dir.path(), "dataset.csv"),
            "--batch-size",
            "40",
            "--iterations",
            "1",
            "--c1",
            "1",
            "--c2",
            "10",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mdp: TabularMdp =
        serde_json::from_slice(&fs::read(dir.path().join("mdp.json")).unwrap()).unwrap();
    let sidecar: DatasetSidecar = serde_json::from_value(json(dir.path(), "dataset.json")).unwrap();
    let data = read_dataset_csv(
        fs::File::open(dir.path().join("dataset.csv")).unwrap(),
        &sidecar,
    )
    .unwrap();
    let param = Parameterization::tabular(&data);
    let obj = SaddleObjective::from_dataset(&param, mdp.beta(), &data).unwrap();
    let init = initial_point(&obj, InitMode::DualOptimal);
    let g = obj.eval(&init);
    let fin = json(dir.path(), "final.json");
    let w: Vec<f64> = serde_json::from_value(fin["w"].clone()).unwrap();
    let v: Vec<f64> = serde_json::from_value(fin["v"].clone()).unwrap();
    for k in 0..w.len() {
        assert!((w[k] - (init.w[k] - 0.1 * g.grad_w[k])).abs() < 1e-14);
    }
    for k in 0..v.len() {
        assert!((v[k] - (init.v[k] + 0.1 * g.grad_v[k])).abs() < 1e-14);
    }
    let manifest = json(dir.path(), "train.manifest.json");
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a["path"] == "final.json"));
}

#[test]
fn divergence_exits_3_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "40");
    let out = brm(
        dir.path(),
        &[
            "train",
            "--mdp",
            &path(dir.path(), "mdp.json"),
            "--data",
            &path(dir.path(), "dataset.csv"),
            "--c1",
            "1000000",
            "--c2",
            "1",
            "--iterations",
            "5000",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = json(dir.path(), "train.manifest.json");
    assert!(
        manifest["status"].as_str().unwrap().starts_with("diverged"),
        "{manifest}"
    );
}

fn sweep_rows(dir: &Path, grid: &str) -> Vec<Vec<String>> {
    let out = brm(
        dir,
        &[
            "stability-sweep",
            "--seed",
            "2",
            "--n-grid",
            grid,
            "--t-grid",
            "300",
            "--replicates",
            "2",
            "--i-subsample",
            "5",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.join("sweep.csv")).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn sweep_smoke_has_one_finite_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep_rows(dir.path(), "50,800");
    assert_eq!(rows.len(), 2);
    for row in &rows {
        // n, T, replicates, eps_mean, eps_stderr, bound, slope
        for field in &row[..5] {
            assert!(field.parse::<f64>().unwrap().is_finite(), "{row:?}");
        }
    }
    assert!(dir.path().join("reports/report_n50_T300.json").exists());
    assert_eq!(
        json(dir.path(), "stability-sweep.manifest.json")["status"],
        "ok"
    );
}

#[test]
fn duplicate_grid_cells_give_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rows = sweep_rows(dir.path(), "60,60");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..6], rows[1][..6]);
}

#[test]
fn verify_passes_and_config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "120");
    let out = brm(
        dir.path(),
        &[
            "verify",
            "--mdp",
            &path(dir.path(), "mdp.json"),
            "--data",
            &path(dir.path(), "dataset.csv"),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"));
    assert_eq!(json(dir.path(), "verify.json")["passed"], true);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[sgda]\nnot_a_key = 1\n").unwrap();
    let out = brm(dir.path(), &["gen-mdp", "--config", &bad.to_string_lossy()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_relative_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "60");
    let config = dir.path().join("exp.toml");
    fs::write(
        &config,
        "seed = 4\n[mdp]\nfile = \"mdp.json\"\n[dataset]\nfile = \"dataset.csv\"\n",
    )
    .unwrap();
    let out = brm(
        dir.path(),
        &["solve", "--config", &config.to_string_lossy()],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sol = json(dir.path(), "soft_solution.json");
    assert!(sol["bellman_residual_sup"].as_f64().unwrap() <= 1e-10);
}

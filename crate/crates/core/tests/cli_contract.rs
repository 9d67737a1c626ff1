//! Binary behaviour: exit codes, output files, schemas and the cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use trapgap::cli::{self, parse_band_csv, GlobalArgs, MeshArgs};

fn bin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trapgap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let value: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&value).expect("schema compiles")
}

fn assert_valid(schema_name: &str, file: &Path) {
    let instance: Value = serde_json::from_slice(&fs::read(file).unwrap()).unwrap();
    let compiled = schema(schema_name);
    let msgs: Vec<String> = match compiled.validate(&instance) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "{} violates {schema_name}: {msgs:?}", file.display());
}

const COARSE: [&str; 2] = ["--h-max", "0.0625"];

#[test]
fn formula_commands_exit_codes_and_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = bin(out, &["gap-edges", "--n", "2", "--d", "1", "--b", "0.5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("sigma = 6.283185") && text.contains("mu = 8.377580"), "{text}");
    assert_valid("gap_edges", &out.join("gap_edges.json"));
    assert_valid("timing", &out.join("timing-gap-edges.json"));

    assert_eq!(code(&bin(out, &["gap-edges", "--n", "2", "--d", "1", "--b", "1.5"])), 2);

    let o = bin(out, &["design", "--sigma", "6.283185", "--mu", "8.377580", "--n", "2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("d = 1.000000") && text.contains("b = 0.500000"), "{text}");
    assert_valid("design", &out.join("design.json"));
    assert_eq!(code(&bin(out, &["design", "--sigma", "3", "--mu", "2"])), 2);

    let args = ["two-screen", "--d1", "1", "--d2", "2", "--vol1", "0.3", "--vol2", "0.05", "--radicand", "symmetrized"];
    assert_eq!(code(&bin(out, &args)), 0);
    assert_valid("two_screen", &out.join("two_screen.json"));

    assert_eq!(code(&bin(out, &["maxwell", "--sigma", "4", "--mu", "9"])), 0);
    assert_valid("maxwell", &out.join("maxwell.json"));
    assert_eq!(code(&bin(out, &["maxwell", "--sigma", "4", "--mu", "4"])), 2);

    assert_eq!(code(&bin(out, &["gap-edges", "--d", "1"])), 2, "usage errors exit with 2");
}

#[test]
fn numerical_commands_write_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&bin(out, &["capacity", "--h", "0.1"])), 0);
    assert_valid("capacity", &out.join("capacity.json"));

    assert_eq!(code(&bin(out, &["mesh", "--r", "0.01", "--h-max", "0.0625"])), 0);
    assert_valid("mesh", &out.join("mesh.json"));
    assert!(out.join("mesh.txt").exists());
    assert_eq!(code(&bin(out, &["mesh", "--r", "0.3"])), 2, "aperture wider than the trap");

    let o = bin(out, &["band", "--phi-grid", "3", "--k-max", "4", COARSE[0], COARSE[1]]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["band.csv", "summary.json", "band.plot", "timing-band.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_valid("band_summary", &out.join("summary.json"));
    assert_valid("timing", &out.join("timing-band.json"));
    let rows = parse_band_csv(&fs::read_to_string(out.join("band.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), (9 + 3) * 4);

    let o = bin(out, &["converge", "--eps", "0.5,0.45,0.2", "--phi-grid", "3", "--k-max", "4", COARSE[0], COARSE[1]]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_valid("converge", &out.join("converge.json"));
    let csv = fs::read_to_string(out.join("converge.csv")).unwrap();
    assert!(csv.lines().last().unwrap().ends_with("skipped: unresolvable"), "{csv}");

    let o = bin(out, &["floor", "--r", "0.05,0.01", "--phi-grid", "3", COARSE[0], COARSE[1]]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_valid("floor", &out.join("floor.json"));
}

#[test]
fn single_epsilon_study_has_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["converge", "--eps", "0.5", "--phi-grid", "3", "--k-max", "3", COARSE[0], COARSE[1]]);
    assert_eq!(code(&o), 0);
    let summary: Value = serde_json::from_slice(&fs::read(dir.path().join("converge.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], "insufficient-data");
}

#[test]
fn unreachable_tolerance_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        dir.path(),
        &["band", "--phi-grid", "3", "--k-max", "2", "--h-max", "0.25", "--tol", "1e-300", "--no-cache"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cache_hits_and_recovers_from_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let global = GlobalArgs { out: dir.path().to_path_buf(), threads: None, no_cache: false, tol: 1e-10 };
    let cmd = cli::Command::Band {
        d: 1.0,
        b: 0.5,
        eps: 0.45,
        r: None,
        phi_grid: 3,
        k_max: 3,
        window: None,
        mesh: MeshArgs { h_max: 0.0625, grading: 1.3, tip_refinement: 1 },
    };
    let first = cli::run(&cmd, &global).unwrap();
    assert!(!first.cache_hit);
    let second = cli::run(&cmd, &global).unwrap();
    assert!(second.cache_hit);
    assert_eq!(first.artifacts, second.artifacts);

    let entry = dir.path().join("cache").join(&first.config_hash);
    fs::write(entry.join("band.csv"), "not a band table").unwrap();
    let third = cli::run(&cmd, &global).unwrap();
    assert!(!third.cache_hit, "corrupted entry must be recomputed");
    assert_eq!(first.artifacts, third.artifacts);
    assert!(cli::run(&cmd, &global).unwrap().cache_hit);

    fs::write(entry.join("manifest.json"), "{").unwrap();
    assert!(!cli::run(&cmd, &global).unwrap().cache_hit);

    let no_cache = GlobalArgs { no_cache: true, ..global };
    assert!(!cli::run(&cmd, &no_cache).unwrap().cache_hit);
}

#[test]
fn band_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let global = GlobalArgs { out: dir.path().to_path_buf(), threads: None, no_cache: true, tol: 1e-10 };
    let geom = trapgap::mesh::CellGeometry::new(0.5, 0.02).with_h_max(0.0625);
    let bs = trapgap::band::sweep_bands(&geom, 0.45, 3, 3, 20.0, &Default::default()).unwrap();
    let rows = parse_band_csv(&cli::band_csv(&bs)).unwrap();
    let mut it = rows.iter();
    for s in &bs.samples {
        for (k, &v) in s.values.iter().enumerate() {
            let row = it.next().unwrap();
            assert_eq!(row.k, k + 1);
            assert_eq!(row.phi, s.phi);
            assert_eq!(row.lambda_cell.to_bits(), v.to_bits());
            assert_eq!(row.lambda_physical.to_bits(), (bs.scale() * v).to_bits());
        }
    }
    drop(global);
}

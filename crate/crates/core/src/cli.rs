//! Command-line surface: argument parsing, canonical configs, the result
//! cache and file output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analytic::{
    gap_edges, hole_radius, inverse_design, maxwell_gap, two_screen_gaps, GapSpec, Radicand, ScreenDesign,
    ScreenParams, TwoScreenInput,
};
use crate::band::{
    converge_study, floor_study, sweep_bands, BandStructure, ConvergenceStudy, MeshPolicy, StudyOptions,
    SweepOptions, DEFAULT_EPS, ERROR_LABELS, FLOOR_RADII,
};
use crate::capacity::{ball_capacity_exact, disc_capacity_exact, obstacle_capacity, Obstacle, RADII};
use crate::eigen::{EigenOptions, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::mesh::{build_cell_mesh, validate_mesh, write_mesh};

#[derive(Debug, Parser)]
#[command(name = "trapgap", version, about = "Band gaps of a periodically screened plane")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Recompute even if a cached result exists.
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Eigensolver residual tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadicandArg {
    AsPrinted,
    Symmetrized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstacleArg {
    Disc,
    Ball,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MeshArgs {
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub h_max: f64,
    #[arg(long, default_value_t = 1.3)]
    pub grading: f64,
    #[arg(long, default_value_t = 1)]
    pub tip_refinement: u32,
}

impl MeshArgs {
    fn policy(&self) -> MeshPolicy {
        MeshPolicy { h_max: self.h_max, grading_ratio: self.grading, tip_refinement: self.tip_refinement }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limiting gap edges for a screen design.
    GapEdges {
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        b: f64,
        /// Override the aperture capacity (n >= 3).
        #[arg(long)]
        cap_t: Option<f64>,
    },
    /// Screen design realising a prescribed gap.
    Design {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long)]
        cap_t: Option<f64>,
    },
    /// Gap pair of a cell with two traps.
    TwoScreen {
        #[arg(long, default_value_t = 2)]
        n: u32,
        #[arg(long)]
        d1: f64,
        #[arg(long)]
        d2: f64,
        #[arg(long)]
        vol1: f64,
        #[arg(long)]
        vol2: f64,
        #[arg(long, value_enum, default_value_t = RadicandArg::AsPrinted)]
        radicand: RadicandArg,
        #[arg(long)]
        cap_t: Option<f64>,
    },
    /// Frequency gaps of the Maxwell operator.
    Maxwell {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        mu: f64,
    },
    /// Capacity of the unit disc (or ball) in R^n.
    Capacity {
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long, value_enum, default_value_t = ObstacleArg::Disc)]
        obstacle: ObstacleArg,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, value_delimiter = ',', default_values_t = RADII.to_vec())]
        radii: Vec<f64>,
    },
    /// Build and validate a cell mesh.
    Mesh {
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        /// Aperture half-width.
        #[arg(long)]
        r: f64,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Band structure at one period.
    Band {
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, default_value_t = 0.4)]
        eps: f64,
        /// Aperture half-width; derived from (d, eps) when absent.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 8)]
        phi_grid: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        /// Spectral window; defaults to twice the upper limiting edge.
        #[arg(long)]
        window: Option<f64>,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Convergence of the characteristic eigenvalues as the period shrinks.
    Converge {
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPS.to_vec())]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        phi_grid: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        /// Cutoff of the trap test function.
        #[arg(long)]
        cutoff: Option<f64>,
        #[command(flatten)]
        mesh: MeshArgs,
    },
    /// Lowest eigenvalue with the screen held at zero.
    Floor {
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, value_delimiter = ',', default_values_t = FLOOR_RADII.to_vec())]
        r: Vec<f64>,
        /// Period used for the physical rescaling.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 8)]
        phi_grid: usize,
        #[command(flatten)]
        mesh: MeshArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GapEdges { .. } => "gap-edges",
            Command::Design { .. } => "design",
            Command::TwoScreen { .. } => "two-screen",
            Command::Maxwell { .. } => "maxwell",
            Command::Capacity { .. } => "capacity",
            Command::Mesh { .. } => "mesh",
            Command::Band { .. } => "band",
            Command::Converge { .. } => "converge",
            Command::Floor { .. } => "floor",
        }
    }
}

/// Compact JSON with object keys sorted.
pub fn canonical_json(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let sorted: BTreeMap<_, _> = m.iter().map(|(k, v)| (k.clone(), sort(v))).collect();
                Value::Object(sorted.into_iter().collect())
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(value)).expect("JSON values always serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable digest of a command config.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(canonical_json(config).as_bytes())
}

/// Eigensolver seed derived from a config hash.
pub fn seed_from_hash(hash: &str) -> u64 {
    let bytes = hex::decode(&hash[..16]).expect("hash is hex");
    u64::from_le_bytes(bytes.try_into().expect("eight bytes"))
}

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn json<T: Serialize>(name: &str, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self { name: name.into(), bytes })
    }

    fn text(name: &str, text: String) -> Self {
        Self { name: name.into(), bytes: text.into_bytes() }
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    command: String,
    config: Value,
    /// `(name, sha256)` in production order.
    files: Vec<(String, String)>,
}

/// Result cache rooted at `<out>/cache/<hash>/`.
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(out: &Path) -> Self {
        Self { root: out.join("cache") }
    }

    pub fn entry(&self, hash: &str) -> PathBuf {
        self.root.join(hash)
    }

    /// Cached artifacts, or `None` on a miss; corrupted entries count as misses.
    pub fn load(&self, hash: &str) -> Option<Vec<Artifact>> {
        let dir = self.entry(hash);
        let manifest = fs::read(dir.join("manifest.json")).ok();
        let manifest: Manifest = match manifest.map(|m| serde_json::from_slice(&m)) {
            None => return None,
            Some(Ok(m)) => m,
            Some(Err(e)) => {
                log::warn!("cache entry {hash} has an unreadable manifest ({e}); recomputing");
                return None;
            }
        };
        let mut out = Vec::new();
        for (name, sum) in &manifest.files {
            match fs::read(dir.join(name)) {
                Ok(bytes) if sha256_hex(&bytes) == *sum => out.push(Artifact { name: name.clone(), bytes }),
                _ => {
                    log::warn!("cache entry {hash} is corrupted ({name} fails its checksum); recomputing");
                    return None;
                }
            }
        }
        Some(out)
    }

    pub fn store(&self, hash: &str, command: &str, config: &Value, artifacts: &[Artifact]) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let staging = self.root.join(format!(".{hash}.tmp{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        let mut files = Vec::with_capacity(artifacts.len());
        for a in artifacts {
            fs::write(staging.join(&a.name), &a.bytes)?;
            files.push((a.name.clone(), sha256_hex(&a.bytes)));
        }
        let manifest = Manifest { command: command.into(), config: config.clone(), files };
        fs::write(staging.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        let dir = self.entry(hash);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&staging, &dir)?;
        Ok(())
    }
}

/// Outcome of one command.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: &'static str,
    pub config_hash: String,
    pub cache_hit: bool,
    pub seconds: f64,
    pub artifacts: Vec<Artifact>,
    /// Human-readable summary printed to stdout.
    pub summary: String,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_fmt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Rows `eps,phi1,phi2,k,lambda_cell,lambda_physical`.
pub fn band_csv(bs: &BandStructure) -> String {
    let mut s = String::from("eps,phi1,phi2,k,lambda_cell,lambda_physical\n");
    let scale = bs.scale();
    for sample in &bs.samples {
        for (k, &v) in sample.values.iter().enumerate() {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                fmt(bs.epsilon),
                fmt(sample.phi[0]),
                fmt(sample.phi[1]),
                k + 1,
                fmt(v),
                fmt(scale * v)
            )
            .unwrap();
        }
    }
    s
}

/// One parsed band CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub eps: f64,
    pub phi: [f64; 2],
    pub k: usize,
    pub lambda_cell: f64,
    pub lambda_physical: f64,
}

pub fn parse_band_csv(text: &str) -> Result<Vec<BandRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("eps,phi1,phi2,k,lambda_cell,lambda_physical") {
        return Err(Error::Parse("unexpected band CSV header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("line {}: expected 6 fields", i + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)));
            Ok(BandRow {
                eps: num(f[0])?,
                phi: [num(f[1])?, num(f[2])?],
                k: f[3].parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?,
                lambda_cell: num(f[4])?,
                lambda_physical: num(f[5])?,
            })
        })
        .collect()
}

/// Gnuplot script drawing every band against the sample index.
pub fn band_plot(bs: &BandStructure) -> String {
    format!(
        "# gnuplot script; run `gnuplot band.plot` next to band.csv\n\
         set datafile separator ','\n\
         set terminal pngcairo size 1000,700\n\
         set output 'band.png'\n\
         set xlabel 'sample'\n\
         set ylabel 'lambda (physical)'\n\
         set yrange [0:{window}]\n\
         set key outside\n\
         plot for [k=1:{k_max}] 'band.csv' every ::1 using (floor(($0)/{k_max})):(column(4)==k ? column(6) : 1/0) \
         with points pt 7 ps 0.6 title sprintf('k = %d', k)\n",
        window = fmt(bs.window_l),
        k_max = bs.k_max
    )
}

fn band_summary(bs: &BandStructure, targets: &GapSpec, hash: &str) -> Result<Value> {
    let corner = |phi: [f64; 2]| bs.sample(phi).map(|s| s.values.clone()).unwrap_or_default();
    let pi = std::f64::consts::PI;
    let gaps: Vec<Value> = bs
        .gaps
        .iter()
        .map(|g| {
            let maxwell = if g.lower > 0.0 {
                GapSpec::new(g.lower, g.upper).and_then(|s| maxwell_gap(&s)).ok()
            } else {
                None
            };
            json!({"lower": g.lower, "upper": g.upper, "maxwell": maxwell})
        })
        .collect();
    Ok(json!({
        "config_hash": hash,
        "epsilon": bs.epsilon,
        "geometry": bs.geometry,
        "nodes": bs.nodes,
        "phi_grid": bs.phi_grid,
        "k_max": bs.k_max,
        "window": bs.window_l,
        "coverage": bs.coverage,
        "truncated": bs.coverage < bs.window_l,
        "targets": {"sigma": targets.sigma, "mu": targets.mu},
        "bands": bs.bands,
        "gaps": gaps,
        "gap_count": bs.gaps.iter().filter(|g| g.lower > 0.0).count(),
        "corners": {
            "neumann": bs.neumann,
            "dirichlet": bs.dirichlet,
            "periodic": corner([0.0, 0.0]),
            "antiperiodic": corner([pi, pi]),
            "mixed_pi_0": corner([pi, 0.0]),
            "mixed_0_pi": corner([0.0, pi]),
        },
    }))
}

pub fn converge_csv(study: &ConvergenceStudy) -> String {
    let mut s = String::from(
        "eps,hole_radius,nodes,lambda_d1,lambda_n2,lambda_anti1,lambda_per2,\
         err_d1,err_n2,err_anti1,err_per2,gap_lower,gap_upper,gap_count,rayleigh_bound,rayleigh_ratio,sandwich,status\n",
    );
    let mut rows: Vec<(f64, String)> = study
        .records
        .iter()
        .map(|r| {
            let line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},ok",
                fmt(r.eps),
                fmt(r.hole_radius),
                r.nodes,
                fmt(r.dirichlet_1),
                fmt(r.neumann_2),
                fmt(r.antiperiodic_1),
                fmt(r.periodic_2),
                fmt(r.errors[0]),
                fmt(r.errors[1]),
                fmt(r.errors[2]),
                fmt(r.errors[3]),
                opt_fmt(r.gap.map(|g| g.lower)),
                opt_fmt(r.gap.map(|g| g.upper)),
                r.gap_count,
                fmt(r.rayleigh_bound),
                fmt(r.rayleigh_ratio),
                r.sandwich
            );
            (r.eps, line)
        })
        .collect();
    rows.extend(study.skipped.iter().map(|k| (k.eps, format!("{}{},{}", fmt(k.eps), ",".repeat(16), k.reason))));
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, line) in rows {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn converge_summary(study: &ConvergenceStudy, hash: &str) -> Value {
    let verdicts: BTreeMap<&str, &str> =
        ERROR_LABELS.iter().zip(study.verdicts.iter()).map(|(l, v)| (*l, v.as_str())).collect();
    json!({
        "config_hash": hash,
        "params": study.params,
        "targets": study.targets,
        "policy": study.policy,
        "phi_grid": study.phi_grid,
        "k_max": study.k_max,
        "cutoff": study.cutoff,
        "records": study.records,
        "skipped": study.skipped,
        "verdicts": verdicts,
        "verdict": study.verdict.as_str(),
        "final_error": study.final_error,
        "final_within_guard": study.final_error.map(|e| e <= 0.25),
    })
}

fn eigen_options(global: &GlobalArgs, hash: &str) -> Result<EigenOptions> {
    if !(global.tol > 0.0 && global.tol < 1.0) {
        return Err(Error::Domain(format!("tolerance {} must lie in (0, 1)", global.tol)));
    }
    Ok(EigenOptions::default().with_tol(global.tol).with_seed(seed_from_hash(hash)))
}

fn radicand(r: RadicandArg) -> Radicand {
    match r {
        RadicandArg::AsPrinted => Radicand::AsPrinted,
        RadicandArg::Symmetrized => Radicand::Symmetrized,
    }
}

/// Canonical config of a command (tolerance included for numerical commands).
pub fn command_config(command: &Command, global: &GlobalArgs) -> Value {
    let tol = global.tol;
    let body = match command {
        Command::GapEdges { n, d, b, cap_t } => json!({"n": n, "d": d, "b": b, "cap_t": cap_t}),
        Command::Design { sigma, mu, n, cap_t } => json!({"sigma": sigma, "mu": mu, "n": n, "cap_t": cap_t}),
        Command::TwoScreen { n, d1, d2, vol1, vol2, radicand, cap_t } => json!({
            "n": n, "d1": d1, "d2": d2, "vol1": vol1, "vol2": vol2, "radicand": radicand, "cap_t": cap_t
        }),
        Command::Maxwell { sigma, mu } => json!({"sigma": sigma, "mu": mu}),
        Command::Capacity { n, obstacle, h, radii } => {
            json!({"n": n, "obstacle": obstacle, "h": h, "radii": radii})
        }
        Command::Mesh { b, r, mesh } => json!({"b": b, "r": r, "mesh": mesh}),
        Command::Band { d, b, eps, r, phi_grid, k_max, window, mesh } => json!({
            "d": d, "b": b, "eps": eps, "r": r, "phi_grid": phi_grid, "k_max": k_max,
            "window": window, "mesh": mesh, "tol": tol
        }),
        Command::Converge { d, b, eps, phi_grid, k_max, cutoff, mesh } => json!({
            "d": d, "b": b, "eps": eps, "phi_grid": phi_grid, "k_max": k_max, "cutoff": cutoff,
            "mesh": mesh, "tol": tol
        }),
        Command::Floor { b, r, eps, phi_grid, mesh } => json!({
            "b": b, "r": r, "eps": eps, "phi_grid": phi_grid, "mesh": mesh, "tol": tol
        }),
    };
    json!({"command": command.name(), "config": body})
}

/// Computes the artifacts of a command (no caching, no file output).
pub fn compute(command: &Command, global: &GlobalArgs, hash: &str) -> Result<(Vec<Artifact>, String)> {
    match command {
        Command::GapEdges { n, d, b, cap_t } => {
            let gap = gap_edges(&ScreenDesign::new(*n, *d, *b)?, *cap_t)?;
            let summary = format!("sigma = {:.6}\nmu = {:.6}", gap.sigma, gap.mu);
            Ok((vec![Artifact::json("gap_edges.json", &gap)?], summary))
        }
        Command::Design { sigma, mu, n, cap_t } => {
            let design = inverse_design(*sigma, *mu, *n, *cap_t)?;
            let summary = format!("d = {:.6}\nb = {:.6}", design.d, design.b);
            Ok((vec![Artifact::json("design.json", &design)?], summary))
        }
        Command::TwoScreen { n, d1, d2, vol1, vol2, radicand: r, cap_t } => {
            let input = TwoScreenInput { n: *n, d1: *d1, d2: *d2, vol1: *vol1, vol2: *vol2 };
            let spec = two_screen_gaps(&input, *cap_t, radicand(*r))?;
            let summary = format!(
                "gap 1 = ({:.6}, {:.6})\ngap 2 = ({:.6}, {:.6})\nordered = {}",
                spec.sigma1,
                spec.mu1,
                spec.sigma2,
                spec.mu2,
                spec.is_ordered()
            );
            let value = json!({"spec": spec, "ordered": spec.is_ordered()});
            Ok((vec![Artifact::json("two_screen.json", &value)?], summary))
        }
        Command::Maxwell { sigma, mu } => {
            let gap = GapSpec::new(*sigma, *mu)?;
            let [neg, pos] = maxwell_gap(&gap)?;
            let value = json!({"sigma": sigma, "mu": mu, "negative": [neg.0, neg.1], "positive": [pos.0, pos.1]});
            let summary = format!("({:.6}, {:.6})\n({:.6}, {:.6})", neg.0, neg.1, pos.0, pos.1);
            Ok((vec![Artifact::json("maxwell.json", &value)?], summary))
        }
        Command::Capacity { n, obstacle, h, radii } => {
            let (obs, exact) = match obstacle {
                ObstacleArg::Disc => (Obstacle::Disc, disc_capacity_exact(*n)),
                ObstacleArg::Ball => (Obstacle::Ball, ball_capacity_exact(*n, f64::INFINITY)),
            };
            let result = obstacle_capacity(*n, obs, radii, *h)?;
            let value = json!({
                "result": result,
                "reference": exact,
                "relative_error": result.cap_t / exact - 1.0,
            });
            let summary = format!("capT = {:.8} (closed form {:.8})", result.cap_t, exact);
            Ok((vec![Artifact::json("capacity.json", &value)?], summary))
        }
        Command::Mesh { b, r, mesh } => {
            let p = mesh.policy();
            let geom = p.geometry(*b, *r);
            let m = build_cell_mesh(&geom)?;
            let report = validate_mesh(&m);
            let mut text = Vec::new();
            write_mesh(&m, &mut text)?;
            let value = json!({
                "config_hash": hash,
                "geometry": geom,
                "nodes": m.num_nodes(),
                "triangles": m.triangles.len(),
                "passed": report.passed(),
                "checks": report.checks,
            });
            let summary = format!(
                "{} nodes, {} triangles, checks {}",
                m.num_nodes(),
                m.triangles.len(),
                if report.passed() { "passed" } else { "FAILED" }
            );
            if !report.passed() {
                return Err(Error::Consistency(format!("mesh validation failed: {value}")));
            }
            Ok((vec![Artifact { name: "mesh.txt".into(), bytes: text }, Artifact::json("mesh.json", &value)?], summary))
        }
        Command::Band { d, b, eps, r, phi_grid, k_max, window, mesh } => {
            let design = ScreenDesign::new(2, *d, *b)?;
            let targets = gap_edges(&design, None)?;
            let r = match r {
                Some(r) => *r,
                None => hole_radius(&ScreenParams::new(2, *d, *b, *eps)?)?,
            };
            let geom = mesh.policy().geometry(*b, r);
            let window = window.unwrap_or(2.0 * targets.mu);
            let opts = SweepOptions { eigen: eigen_options(global, hash)?, conjugate_symmetry: true };
            let bs = sweep_bands(&geom, *eps, *phi_grid, *k_max, window, &opts)?;
            let summary_json = band_summary(&bs, &targets, hash)?;
            let gaps: Vec<String> =
                bs.gaps.iter().map(|g| format!("({:.6}, {:.6})", g.lower, g.upper)).collect();
            let summary = format!("{} nodes, gaps in [0, {:.6}]: {}", bs.nodes, window, gaps.join(" "));
            Ok((
                vec![
                    Artifact::text("band.csv", band_csv(&bs)),
                    Artifact::json("summary.json", &summary_json)?,
                    Artifact::text("band.plot", band_plot(&bs)),
                ],
                summary,
            ))
        }
        Command::Converge { d, b, eps, phi_grid, k_max, cutoff, mesh } => {
            let params = ScreenParams { design: ScreenDesign::new(2, *d, *b)?, eps: eps.first().copied().unwrap_or(1.0) };
            let opts = StudyOptions {
                policy: mesh.policy(),
                phi_grid: *phi_grid,
                k_max: *k_max,
                cutoff: *cutoff,
                sweep: SweepOptions { eigen: eigen_options(global, hash)?, conjugate_symmetry: true },
            };
            let study = converge_study(&params, eps, &opts)?;
            let mut artifacts = vec![
                Artifact::text("converge.csv", converge_csv(&study)),
                Artifact::json("converge.json", &converge_summary(&study, hash))?,
            ];
            if let Some(bs) = &study.last_bands {
                artifacts.push(Artifact::text("band.csv", band_csv(bs)));
                artifacts.push(Artifact::text("band.plot", band_plot(bs)));
            }
            let summary = format!(
                "verdict {} ({}), final error {}",
                study.verdict.as_str(),
                study.verdicts.map(|v| v.as_str()).join(", "),
                study.final_error.map(|e| format!("{e:.4}")).unwrap_or_else(|| "n/a".into())
            );
            Ok((artifacts, summary))
        }
        Command::Floor { b, r, eps, phi_grid, mesh } => {
            let opts = SweepOptions { eigen: eigen_options(global, hash)?, conjugate_symmetry: true };
            let study = floor_study(*b, r, *eps, *phi_grid, &mesh.policy(), &opts)?;
            let value = json!({"config_hash": hash, "study": study});
            let floors: Vec<String> =
                study.results.iter().map(|f| format!("r = {}: {:.6}", f.hole_radius, f.floor)).collect();
            let summary = format!("{}\nspread {:.4}", floors.join("\n"), study.spread);
            Ok((vec![Artifact::json("floor.json", &value)?], summary))
        }
    }
}

/// Commands expensive enough to cache.
fn cached(command: &Command) -> bool {
    matches!(
        command,
        Command::Capacity { .. } | Command::Band { .. } | Command::Converge { .. } | Command::Floor { .. }
    )
}

/// Runs a command: consults the cache, writes artifacts and the timing file.
pub fn run(command: &Command, global: &GlobalArgs) -> Result<RunReport> {
    let start = Instant::now();
    let config = command_config(command, global);
    let hash = config_hash(&config);
    let cache = Cache::new(&global.out);
    let use_cache = cached(command) && !global.no_cache;
    let hit = if use_cache { cache.load(&hash) } else { None };
    let cache_hit = hit.is_some();
    let (artifacts, summary) = match hit {
        Some(a) => {
            log::info!("cache hit for {} ({hash}); no eigensolves executed", command.name());
            (a, format!("cache hit {hash}"))
        }
        None => {
            let (a, s) = compute(command, global, &hash)?;
            if use_cache {
                cache.store(&hash, command.name(), &config, &a)?;
            }
            (a, s)
        }
    };
    for a in &artifacts {
        write_atomic(&global.out.join(&a.name), &a.bytes)?;
    }
    let seconds = start.elapsed().as_secs_f64();
    let timing = json!({"command": command.name(), "config_hash": hash, "cache_hit": cache_hit, "seconds": seconds});
    write_atomic(
        &global.out.join(format!("timing-{}.json", command.name())),
        &serde_json::to_vec_pretty(&timing)?,
    )?;
    Ok(RunReport { command: command.name(), config_hash: hash, cache_hit, seconds, artifacts, summary })
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    match run(&cli.command, &cli.global) {
        Ok(report) => {
            println!("{}", report.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

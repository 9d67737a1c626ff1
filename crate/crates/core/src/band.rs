//! Brillouin-torus sweeps, band and gap extraction, epsilon-convergence
//! studies, closed-screen limit spectra and the Dirichlet floor.
//!
//! Cell eigenvalues are computed on the fixed unit cell; the physical value is
//! `eps^-2` times the cell value.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{gap_edges, hole_radius, GapSpec, ScreenParams};
use crate::capacity::aperture_profile_2d;
use crate::eigen::{smallest_eigs, spectrum, EigenOptions, Spectrum};
use crate::error::{Error, Result};
use crate::fem::{assemble, assemble_as, BoundaryRegime, ScreenBc};
use crate::mesh::{build_cell_mesh, CellGeometry, CellMesh, Check, NodeTag, MIN_RESOLVABLE_RADIUS};

/// Relative tolerance of the bracketing assertions.
pub const BRACKET_TOL: f64 = 1e-8;
/// Relative tolerance for merging touching bands.
pub const MERGE_TOL: f64 = 1e-8;
/// Zero threshold for the limit-spectrum multiplicity checks.
pub const ZERO_TOL: f64 = 1e-8;
/// Lower bound for eigenvalues counted as positive in the limit checks.
pub const POSITIVE_TOL: f64 = 1e-2;

/// Resolution rule: each epsilon gets its own mesh with these settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshPolicy {
    pub h_max: f64,
    pub grading_ratio: f64,
    pub tip_refinement: u32,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self { h_max: 1.0 / 64.0, grading_ratio: 1.3, tip_refinement: 1 }
    }
}

impl MeshPolicy {
    pub fn geometry(&self, b: f64, r: f64) -> CellGeometry {
        let mut g = CellGeometry::new(b, r).with_h_max(self.h_max).with_tip_refinement(self.tip_refinement);
        g.grading_ratio = self.grading_ratio;
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub eigen: EigenOptions,
    /// Reuse the eigenvalues at `phi` for `-phi` (complex conjugate pencil).
    pub conjugate_symmetry: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { eigen: EigenOptions::default(), conjugate_symmetry: true }
    }
}

/// Cell eigenvalues at one quasi-momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub phi: [f64; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub k: usize,
    /// Physical `[min, max]` over the sampled quasi-momenta.
    pub lower: f64,
    pub upper: f64,
    /// Physical enclosure `[lambda_k^N, lambda_k^D]`.
    pub enclosure: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub epsilon: f64,
    pub geometry: CellGeometry,
    pub phi_grid: usize,
    pub k_max: usize,
    pub window_l: f64,
    pub samples: Vec<BandSample>,
    pub neumann: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub bands: Vec<Band>,
    /// Union of the bands after merging, physical scale.
    pub merged: Vec<Interval>,
    pub gaps: Vec<Interval>,
    /// Gaps are only meaningful below this physical value (`a_kmax^-`).
    pub coverage: f64,
    pub nodes: usize,
}

impl BandStructure {
    pub fn scale(&self) -> f64 {
        self.epsilon.powi(-2)
    }

    pub fn sample(&self, phi: [f64; 2]) -> Option<&BandSample> {
        self.samples.iter().find(|s| s.phi == phi)
    }

    /// The first gap, if any.
    pub fn first_gap(&self) -> Option<Interval> {
        self.gaps.first().copied()
    }
}

/// Grid angle `2 pi j / n`, exact at 0 and pi.
pub fn grid_angle(j: usize, n: usize) -> f64 {
    if j == 0 {
        0.0
    } else if 2 * j == n {
        PI
    } else {
        2.0 * PI * j as f64 / n as f64
    }
}

/// The `n x n` grid plus the four corners `{0, pi}^2`, sorted.
pub fn phi_samples(n: usize) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = (0..n)
        .flat_map(|i| (0..n).map(move |j| [grid_angle(i, n), grid_angle(j, n)]))
        .collect();
    for c in [[0.0, 0.0], [0.0, PI], [PI, 0.0], [PI, PI]] {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    out
}

fn conjugate(phi: [f64; 2]) -> [f64; 2] {
    phi.map(|p| if p == 0.0 || p == PI { p } else { 2.0 * PI - p })
}

/// For each sample, the index of the sample whose eigenvalues it reuses
/// (itself unless `symmetric` and its conjugate comes first).
pub fn representatives(phis: &[[f64; 2]], symmetric: bool) -> Vec<usize> {
    let close = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
    (0..phis.len())
        .map(|i| {
            if !symmetric {
                return i;
            }
            let c = conjugate(phis[i]);
            match phis.iter().position(|&q| close(q, c)) {
                Some(j) if j < i => j,
                _ => i,
            }
        })
        .collect()
}

fn task_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Solves several regimes on one mesh, in parallel, results in input order.
pub fn solve_regimes(
    mesh: &CellMesh,
    regimes: &[BoundaryRegime],
    k: usize,
    opts: &EigenOptions,
) -> Result<Vec<Spectrum>> {
    regimes
        .par_iter()
        .enumerate()
        .map(|(i, reg)| {
            let pair = assemble(mesh, reg)?;
            spectrum(&pair, k, &opts.with_seed(task_seed(opts.seed, i)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn check_bracketing(phi: [f64; 2], values: &[f64], neumann: &[f64], dirichlet: &[f64]) -> Result<()> {
    for (k, &v) in values.iter().enumerate() {
        let tol = BRACKET_TOL * dirichlet[k].abs().max(1.0);
        if v < neumann[k] - tol || v > dirichlet[k] + tol {
            return Err(Error::Consistency(format!(
                "bracketing violated at phi = ({:.12}, {:.12}), k = {}: {:.16e} outside [{:.16e}, {:.16e}]",
                phi[0],
                phi[1],
                k + 1,
                v,
                neumann[k],
                dirichlet[k]
            )));
        }
    }
    Ok(())
}

/// Merges intervals sorted by lower end whose ends touch within `MERGE_TOL`.
pub fn merge_intervals(mut bands: Vec<Interval>) -> Vec<Interval> {
    bands.sort_by(|a, b| a.lower.total_cmp(&b.lower).then(a.upper.total_cmp(&b.upper)));
    let mut out: Vec<Interval> = Vec::new();
    for b in bands {
        match out.last_mut() {
            Some(last) if b.lower <= last.upper + MERGE_TOL * last.upper.abs().max(1.0) => {
                last.upper = last.upper.max(b.upper);
            }
            _ => out.push(b),
        }
    }
    out
}

/// Open intervals of `[0, limit]` not covered by `merged`.
pub fn complement(merged: &[Interval], limit: f64) -> Vec<Interval> {
    let mut gaps = Vec::new();
    let mut cursor = 0.0f64;
    for b in merged {
        if b.lower >= limit {
            break;
        }
        if b.lower > cursor + MERGE_TOL * b.lower.abs().max(1.0) {
            gaps.push(Interval { lower: cursor, upper: b.lower });
        }
        cursor = cursor.max(b.upper);
    }
    if cursor + MERGE_TOL * limit.abs().max(1.0) < limit {
        gaps.push(Interval { lower: cursor, upper: limit });
    }
    gaps
}

/// Band structure of the screened cell at scale `eps`.
pub fn sweep_bands(
    geom: &CellGeometry,
    eps: f64,
    phi_grid: usize,
    k_max: usize,
    window_l: f64,
    opts: &SweepOptions,
) -> Result<BandStructure> {
    let mesh = build_cell_mesh(geom)?;
    sweep_bands_on(&mesh, eps, phi_grid, k_max, window_l, opts)
}

pub fn sweep_bands_on(
    mesh: &CellMesh,
    eps: f64,
    phi_grid: usize,
    k_max: usize,
    window_l: f64,
    opts: &SweepOptions,
) -> Result<BandStructure> {
    let geometry = mesh
        .geometry
        .ok_or_else(|| Error::Domain("band sweeps need a screened cell mesh".into()))?;
    if phi_grid < 3 {
        return Err(Error::Domain(format!("phi grid {phi_grid} must be at least 3 per axis")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("epsilon {eps} must be positive")));
    }
    if k_max == 0 {
        return Err(Error::Domain("k_max must be positive".into()));
    }
    if !(window_l > 0.0) {
        return Err(Error::Domain(format!("window {window_l} must be positive")));
    }
    let phis = phi_samples(phi_grid);
    let reps = representatives(&phis, opts.conjugate_symmetry);
    let solved: Vec<usize> = (0..phis.len()).filter(|&i| reps[i] == i).collect();
    let mut regimes = vec![BoundaryRegime::neumann(), BoundaryRegime::dirichlet()];
    regimes.extend(solved.iter().map(|&i| BoundaryRegime::bloch(phis[i])));
    log::info!("band sweep at eps = {eps}: {} eigensolves on {} nodes", regimes.len(), mesh.num_nodes());
    let spectra = solve_regimes(mesh, &regimes, k_max, &opts.eigen)?;
    let neumann = spectra[0].values.clone();
    let dirichlet = spectra[1].values.clone();

    let mut samples = Vec::with_capacity(phis.len());
    for (i, &phi) in phis.iter().enumerate() {
        let idx = solved.binary_search(&reps[i]).expect("representative solved") + 2;
        let values = spectra[idx].values.clone();
        check_bracketing(phi, &values, &neumann, &dirichlet)?;
        samples.push(BandSample { phi, values });
    }

    let scale = eps.powi(-2);
    let bands: Vec<Band> = (0..k_max)
        .map(|k| {
            let lo = samples.iter().map(|s| s.values[k]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.values[k]).fold(f64::NEG_INFINITY, f64::max);
            Band {
                k: k + 1,
                lower: scale * lo,
                upper: scale * hi,
                enclosure: [scale * neumann[k], scale * dirichlet[k]],
            }
        })
        .collect();
    let coverage = bands[k_max - 1].lower;
    if coverage < window_l {
        log::warn!(
            "bands up to k = {k_max} only cover [0, {coverage:.6}] of the window [0, {window_l}]; gaps are reported there"
        );
    }
    let merged = merge_intervals(bands.iter().map(|b| Interval { lower: b.lower, upper: b.upper }).collect());
    let gaps = complement(&merged, window_l.min(coverage));
    Ok(BandStructure {
        epsilon: eps,
        geometry,
        phi_grid,
        k_max,
        window_l,
        samples,
        neumann,
        dirichlet,
        bands,
        merged,
        gaps,
        coverage,
        nodes: mesh.num_nodes(),
    })
}

/// Nodal values of the trap test function: `1 - psi / 2` inside the trap,
/// `psi / 2` outside, scaled by `1 / sqrt(|B|)`, where `psi` is the
/// logarithmic aperture profile with cutoff `l`.
pub fn trap_test_function(mesh: &CellMesh, l: f64) -> Result<Vec<f64>> {
    let g = mesh
        .geometry
        .ok_or_else(|| Error::Domain("test function needs a screened cell mesh".into()))?;
    if g.closed() {
        return Err(Error::Domain("test function needs an open aperture".into()));
    }
    let limit = max_cutoff(g.b);
    if !(l > g.hole_radius && l < limit) {
        return Err(Error::Domain(format!(
            "cutoff {l} must lie in ({}, {limit})",
            g.hole_radius
        )));
    }
    let profile = aperture_profile_2d(g.hole_radius, l)?;
    let centre = g.aperture_center();
    let norm = 1.0 / g.b;
    Ok(mesh
        .vertices
        .iter()
        .zip(&mesh.tags)
        .map(|(p, tag)| {
            let rho = ((p[0] - centre[0]).powi(2) + (p[1] - centre[1]).powi(2)).sqrt();
            let psi = profile.value(rho);
            let inside = match tag {
                NodeTag::InteriorB | NodeTag::ScreenInner => true,
                NodeTag::InteriorF | NodeTag::ScreenOuter | NodeTag::OuterBoundary => false,
                NodeTag::Aperture | NodeTag::ApertureTip => return 0.5 * norm,
            };
            norm * if inside { 1.0 - 0.5 * psi } else { 0.5 * psi }
        })
        .collect())
}

/// Default cutoff for the trap test function.
pub fn default_cutoff(b: f64) -> f64 {
    0.2 * b.min(1.0 - b)
}

/// Largest admissible cutoff.
pub fn max_cutoff(b: f64) -> f64 {
    0.25 * b.min(1.0 - b)
}

/// Cutoff used at aperture radius `r`: the requested one, raised to
/// `sqrt(r * max_cutoff)` when the aperture gets too close to it.
pub fn cutoff_for(b: f64, r: f64, requested: f64) -> f64 {
    requested.max((r * max_cutoff(b)).sqrt())
}

/// Rayleigh quotient of the trap test function in the outer Dirichlet regime.
pub fn trap_rayleigh_bound(mesh: &CellMesh, l: f64) -> Result<f64> {
    let pair = assemble_as::<f64>(mesh, &BoundaryRegime::dirichlet())?;
    let nodal = trap_test_function(mesh, l)?;
    crate::fem::rayleigh_quotient(&pair, &pair.restrict_nodal(&nodal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    InsufficientData,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::InsufficientData => "insufficient-data",
        }
    }
}

/// Whether a sequence decreases strictly.
pub fn trend(values: &[f64]) -> Verdict {
    if values.len() < 2 {
        Verdict::InsufficientData
    } else if values.windows(2).all(|w| w[1] < w[0]) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// One epsilon of a convergence study; cell-scale values unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub eps: f64,
    pub hole_radius: f64,
    pub h_max: f64,
    pub tip_size: f64,
    pub nodes: usize,
    /// `lambda_1^D`.
    pub dirichlet_1: f64,
    /// `lambda_2^N`.
    pub neumann_2: f64,
    /// `lambda_1` at `theta = (-1, -1)`.
    pub antiperiodic_1: f64,
    /// `lambda_2` at `theta = (1, 1)`.
    pub periodic_2: f64,
    pub neumann_1: f64,
    pub periodic_1: f64,
    /// Relative errors of the rescaled values against sigma, mu, sigma, mu.
    pub errors: [f64; 4],
    /// First detected gap (physical).
    pub gap: Option<Interval>,
    pub gap_count: usize,
    /// Cutoff of the trap test function at this epsilon.
    pub cutoff: f64,
    /// Rayleigh quotient of the trap test function (cell scale).
    pub rayleigh_bound: f64,
    /// `rayleigh_bound / (sigma eps^2)`.
    pub rayleigh_ratio: f64,
    /// Sandwich check of the first gap edges.
    pub sandwich: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub eps: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub params: ScreenParams,
    pub targets: GapSpec,
    pub policy: MeshPolicy,
    pub phi_grid: usize,
    pub k_max: usize,
    pub cutoff: f64,
    /// Sorted by decreasing epsilon.
    pub records: Vec<ConvergenceRecord>,
    pub skipped: Vec<SkippedRecord>,
    /// Trend verdicts for the four error series.
    pub verdicts: [Verdict; 4],
    pub verdict: Verdict,
    /// Largest final-epsilon error.
    pub final_error: Option<f64>,
    /// Sweeps at the last epsilon, kept for the band output.
    #[serde(skip)]
    pub last_bands: Option<BandStructure>,
}

pub const ERROR_LABELS: [&str; 4] = ["dirichlet_1", "neumann_2", "antiperiodic_1", "periodic_2"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub policy: MeshPolicy,
    pub phi_grid: usize,
    pub k_max: usize,
    /// Cutoff of the trap test function; `None` picks `default_cutoff(b)`.
    pub cutoff: Option<f64>,
    pub sweep: SweepOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { policy: MeshPolicy::default(), phi_grid: 8, k_max: 6, cutoff: None, sweep: SweepOptions::default() }
    }
}

/// Default epsilon list.
pub const DEFAULT_EPS: [f64; 6] = [0.6, 0.55, 0.5, 0.45, 0.4, 0.35];

/// Epsilon convergence of the four characteristic eigenvalues.
pub fn converge_study(params: &ScreenParams, eps_list: &[f64], opts: &StudyOptions) -> Result<ConvergenceStudy> {
    let design = params.design;
    if design.n != 2 {
        return Err(Error::Domain("meshed studies are planar (n = 2)".into()));
    }
    let targets = gap_edges(&design, None)?;
    let cutoff = opts.cutoff.unwrap_or_else(|| default_cutoff(design.b));
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    eps_sorted.dedup();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut last_bands = None;
    for &eps in &eps_sorted {
        let at = match params.with_eps(eps) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping eps = {eps}: {e}");
                skipped.push(SkippedRecord { eps, reason: format!("skipped: {e}") });
                continue;
            }
        };
        let r = hole_radius(&at)?;
        if r < MIN_RESOLVABLE_RADIUS {
            log::warn!("skipping eps = {eps}: hole radius {r:e} is not resolvable");
            skipped.push(SkippedRecord { eps, reason: "skipped: unresolvable".into() });
            continue;
        }
        let geom = opts.policy.geometry(design.b, r);
        let mesh = build_cell_mesh(&geom)?;
        let bands = sweep_bands_on(&mesh, eps, opts.phi_grid, opts.k_max.max(2), 2.0 * targets.mu, &opts.sweep)?;
        let corner = |phi: [f64; 2]| bands.sample(phi).expect("corners are always sampled").values.clone();
        let anti = corner([PI, PI]);
        let peri = corner([0.0, 0.0]);
        let scale = eps.powi(-2);
        let rel = |v: f64, t: f64| (scale * v / t - 1.0).abs();
        let errors = [
            rel(bands.dirichlet[0], targets.sigma),
            rel(bands.neumann[1], targets.mu),
            rel(anti[0], targets.sigma),
            rel(peri[1], targets.mu),
        ];
        let l = cutoff_for(design.b, r, cutoff);
        let bound = trap_rayleigh_bound(&mesh, l)?;
        let d1 = bands.dirichlet[0];
        if bound < d1 - BRACKET_TOL * d1.max(1.0) {
            return Err(Error::Consistency(format!(
                "trap test function quotient {bound:e} below lambda_1^D = {d1:e} at eps = {eps}"
            )));
        }
        let gap = bands.first_gap().filter(|g| g.lower > 0.0);
        let tol = BRACKET_TOL * scale * bands.dirichlet[1].max(1.0);
        let sandwich = gap.is_some_and(|g| {
            g.lower >= scale * anti[0] - tol
                && g.lower <= scale * d1 + tol
                && g.upper >= scale * bands.neumann[1] - tol
                && g.upper <= scale * peri[1] + tol
        });
        records.push(ConvergenceRecord {
            eps,
            hole_radius: r,
            h_max: geom.h_max,
            tip_size: geom.tip_size(),
            nodes: mesh.num_nodes(),
            dirichlet_1: d1,
            neumann_2: bands.neumann[1],
            antiperiodic_1: anti[0],
            periodic_2: peri[1],
            neumann_1: bands.neumann[0],
            periodic_1: peri[0],
            errors,
            gap,
            gap_count: bands.gaps.iter().filter(|g| g.lower > 0.0).count(),
            cutoff: l,
            rayleigh_bound: bound,
            rayleigh_ratio: bound / (targets.sigma * eps * eps),
            sandwich,
        });
        last_bands = Some(bands);
    }
    let verdicts: [Verdict; 4] =
        std::array::from_fn(|i| trend(&records.iter().map(|r| r.errors[i]).collect::<Vec<_>>()));
    let verdict = if verdicts.iter().any(|v| *v == Verdict::InsufficientData) {
        Verdict::InsufficientData
    } else if verdicts.iter().all(|v| *v == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let final_error = records.last().map(|r| r.errors.iter().cloned().fold(0.0, f64::max));
    Ok(ConvergenceStudy {
        params: *params,
        targets,
        policy: opts.policy,
        phi_grid: opts.phi_grid,
        k_max: opts.k_max,
        cutoff,
        records,
        skipped,
        verdicts,
        verdict,
        final_error,
        last_bands,
    })
}

/// Limit spectra of the closed screen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSpectra {
    pub neumann: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub periodic: Vec<f64>,
    pub antiperiodic: Vec<f64>,
    /// Neumann spectrum of the trap alone.
    pub trap: Vec<f64>,
    /// `(pi / b)^2 (p^2 + q^2)`, ascending.
    pub trap_exact: Vec<f64>,
    pub checks: Vec<Check>,
}

impl LimitSpectra {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `(pi / b)^2 (p^2 + q^2)` for the `count` smallest index pairs.
pub fn box_neumann_spectrum(b: f64, count: usize) -> Vec<f64> {
    let m = (count as f64).sqrt().ceil() as usize + 2;
    let mut v: Vec<f64> = (0..m)
        .flat_map(|p| (0..m).map(move |q| (PI / b).powi(2) * (p * p + q * q) as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    v.truncate(count);
    v
}

fn pattern_check(name: &'static str, values: &[f64], zeros: usize) -> Check {
    let mut offenders = Vec::new();
    for (i, &v) in values.iter().enumerate().take(zeros + 1) {
        let ok = if i < zeros { v.abs() < ZERO_TOL } else { v > POSITIVE_TOL };
        if !ok {
            offenders.push(i + 1);
        }
    }
    Check {
        name,
        passed: offenders.is_empty() && values.len() > zeros,
        offenders,
        detail: format!("expected {zeros} zero(s) then a positive value, got {:?}", &values[..values.len().min(zeros + 1)]),
    }
}

/// Spectra of the decoupled operators on the closed-screen cell.
pub fn limit_spectra(geom_closed: &CellGeometry, k_max: usize, opts: &EigenOptions) -> Result<LimitSpectra> {
    if geom_closed.hole_radius != 0.0 {
        return Err(Error::Domain(format!(
            "limit spectra need a closed screen, got r = {}",
            geom_closed.hole_radius
        )));
    }
    let k = k_max.max(4);
    let mesh = build_cell_mesh(geom_closed)?;
    let regimes = [
        BoundaryRegime::neumann(),
        BoundaryRegime::dirichlet(),
        BoundaryRegime::bloch([0.0, 0.0]),
        BoundaryRegime::bloch([PI, PI]),
    ];
    let s = solve_regimes(&mesh, &regimes, k, opts)?;
    let trap_mesh = mesh.restrict(|t| mesh.in_trap(t));
    let pair = assemble_as::<f64>(&trap_mesh, &BoundaryRegime::neumann())?;
    let trap = smallest_eigs(&pair, 4, opts)?.values;
    let trap_exact = box_neumann_spectrum(geom_closed.b, 4);
    let worst = trap
        .iter()
        .zip(&trap_exact)
        .skip(1)
        .map(|(a, e)| (a / e - 1.0).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![
        pattern_check("neumann", &s[0].values, 2),
        pattern_check("dirichlet", &s[1].values, 1),
        pattern_check("periodic", &s[2].values, 2),
        pattern_check("antiperiodic", &s[3].values, 1),
    ];
    checks.push(Check {
        name: "trap_box",
        passed: trap[0].abs() < ZERO_TOL && worst < 1e-2,
        offenders: Vec::new(),
        detail: format!("largest relative deviation from the box spectrum {worst:.3e}"),
    });
    Ok(LimitSpectra {
        neumann: s[0].values.clone(),
        dirichlet: s[1].values.clone(),
        periodic: s[2].values.clone(),
        antiperiodic: s[3].values.clone(),
        trap,
        trap_exact,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorResult {
    pub hole_radius: f64,
    pub epsilon: f64,
    /// `min_theta lambda_1` with a Dirichlet screen (cell scale).
    pub floor: f64,
    pub physical: f64,
    pub argmin: [f64; 2],
    pub samples: Vec<BandSample>,
}

/// Minimum over the quasi-momentum grid of the first eigenvalue with the
/// screen held at zero.
pub fn dirichlet_floor(geom: &CellGeometry, eps: f64, phi_grid: usize, opts: &SweepOptions) -> Result<FloorResult> {
    if phi_grid < 1 {
        return Err(Error::Domain("phi grid must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon {eps} must be positive")));
    }
    let mesh = build_cell_mesh(geom)?;
    let all = phi_samples(phi_grid.max(2));
    let reps = representatives(&all, opts.conjugate_symmetry);
    let phis: Vec<[f64; 2]> = (0..all.len()).filter(|&i| reps[i] == i).map(|i| all[i]).collect();
    let regimes: Vec<BoundaryRegime> =
        phis.iter().map(|&p| BoundaryRegime::bloch(p).with_screen(ScreenBc::Dirichlet)).collect();
    let spectra = solve_regimes(&mesh, &regimes, 1, &opts.eigen)?;
    let samples: Vec<BandSample> = phis
        .iter()
        .zip(&spectra)
        .map(|(&phi, s)| BandSample { phi, values: s.values.clone() })
        .collect();
    let best = samples
        .iter()
        .min_by(|a, b| a.values[0].total_cmp(&b.values[0]))
        .expect("non-empty grid");
    if !(best.values[0] > 0.0) {
        return Err(Error::Consistency(format!("Dirichlet floor {} is not positive", best.values[0])));
    }
    Ok(FloorResult {
        hole_radius: geom.hole_radius,
        epsilon: eps,
        floor: best.values[0],
        physical: best.values[0] / (eps * eps),
        argmin: best.phi,
        samples,
    })
}

/// Dirichlet floors over several aperture radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorStudy {
    pub b: f64,
    pub epsilon: f64,
    pub phi_grid: usize,
    pub results: Vec<FloorResult>,
    /// `(max - min) / first` over the floors.
    pub spread: f64,
    /// `min / first`.
    pub min_ratio: f64,
}

/// Default radii of the floor study.
pub const FLOOR_RADII: [f64; 3] = [0.05, 0.01, 0.002];

pub fn floor_study(
    b: f64,
    radii: &[f64],
    eps: f64,
    phi_grid: usize,
    policy: &MeshPolicy,
    opts: &SweepOptions,
) -> Result<FloorStudy> {
    if radii.is_empty() {
        return Err(Error::Domain("floor study needs at least one radius".into()));
    }
    let results = radii
        .iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(Error::Domain(format!("floor radius {r} must be positive")));
            }
            dirichlet_floor(&policy.geometry(b, r), eps, phi_grid, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let first = results[0].floor;
    let lo = results.iter().map(|f| f.floor).fold(f64::INFINITY, f64::min);
    let hi = results.iter().map(|f| f.floor).fold(f64::NEG_INFINITY, f64::max);
    Ok(FloorStudy { b, epsilon: eps, phi_grid, results, spread: (hi - lo) / first, min_ratio: lo / first })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_corners_once() {
        let s = phi_samples(8);
        assert_eq!(s.len(), 64);
        let s = phi_samples(3);
        assert_eq!(s.len(), 9 + 3);
        assert!(s.contains(&[PI, PI]));
    }

    #[test]
    fn merging_and_complement() {
        let merged = merge_intervals(vec![
            Interval { lower: 3.0, upper: 5.0 },
            Interval { lower: 0.0, upper: 1.0 },
            Interval { lower: 1.0 + 1e-12, upper: 2.0 },
        ]);
        assert_eq!(merged.len(), 2);
        let gaps = complement(&merged, 10.0);
        assert_eq!(gaps, vec![Interval { lower: 2.0, upper: 3.0 }, Interval { lower: 5.0, upper: 10.0 }]);
        assert!(complement(&[Interval { lower: 0.0, upper: 12.0 }], 10.0).is_empty());
    }

    #[test]
    fn trends() {
        assert_eq!(trend(&[0.5]), Verdict::InsufficientData);
        assert_eq!(trend(&[0.5, 0.4, 0.1]), Verdict::Pass);
        assert_eq!(trend(&[0.5, 0.6]), Verdict::Fail);
    }

    #[test]
    fn box_spectrum() {
        let v = box_neumann_spectrum(0.5, 4);
        let p = 4.0 * PI * PI;
        assert_eq!(v, vec![0.0, p, p, 2.0 * p]);
    }

    #[test]
    fn open_limit_is_rejected() {
        let err = limit_spectra(&CellGeometry::new(0.5, 0.01), 4, &EigenOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}

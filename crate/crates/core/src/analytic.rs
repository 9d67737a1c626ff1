//! Closed-form gap layer.
//!
//! Everything here is a pure function of the screen design: the limiting gap
//! edges `(sigma, mu)`, their inverse map, the aperture radius as a function of
//! the period, the two-trap gap pair and the frequency image of a gap for the
//! H-polarised Maxwell problem.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Design of a single trap: dimension `n`, aperture strength `d` and edge
/// length `b` of the screen cube (the unit cell has edge 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenDesign {
    pub n: u32,
    pub d: f64,
    pub b: f64,
}

impl ScreenDesign {
    pub fn new(n: u32, d: f64, b: f64) -> Result<Self> {
        let design = Self { n, d, b };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Domain(format!("dimension n = {} must be >= 2", self.n)));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::Domain(format!("aperture strength d = {} must be positive", self.d)));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::Domain(format!("screen edge b = {} must lie in (0, 1)", self.b)));
        }
        Ok(())
    }

    /// Trap volume `b^n`.
    pub fn trap_volume(&self) -> f64 {
        self.b.powi(self.n as i32)
    }
}

/// A design together with a period `eps`. Construction rejects parameter sets
/// whose aperture does not fit on the screen face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenParams {
    pub design: ScreenDesign,
    pub eps: f64,
}

impl ScreenParams {
    pub fn new(n: u32, d: f64, b: f64, eps: f64) -> Result<Self> {
        let params = Self {
            design: ScreenDesign::new(n, d, b)?,
            eps,
        };
        hole_radius(&params)?;
        Ok(params)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let d = self.design;
        Self::new(d.n, d.d, d.b, eps)
    }

    /// Aperture centre `(0, ..., 0, b/2)` on the top face of the trap.
    pub fn aperture_center(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.design.n as usize];
        x[self.design.n as usize - 1] = 0.5 * self.design.b;
        x
    }
}

/// Limiting gap `(sigma, mu)` with optional finite-period edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    pub sigma: f64,
    pub mu: f64,
    pub sigma_eps: Option<f64>,
    pub mu_eps: Option<f64>,
    pub window_l: f64,
}

impl GapSpec {
    /// Gap with the default window `L = 2 mu`.
    pub fn new(sigma: f64, mu: f64) -> Result<Self> {
        let gap = Self {
            sigma,
            mu,
            sigma_eps: None,
            mu_eps: None,
            window_l: 2.0 * mu,
        };
        gap.validate()?;
        Ok(gap)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("gap edge sigma = {} must be positive", self.sigma)));
        }
        if !(self.sigma < self.mu && self.mu.is_finite()) {
            return Err(Error::Ordering(format!(
                "gap edges must satisfy sigma < mu, got ({}, {})",
                self.sigma, self.mu
            )));
        }
        if let (Some(s), Some(m)) = (self.sigma_eps, self.mu_eps) {
            if !(s < m) {
                return Err(Error::Ordering(format!(
                    "finite-period edges must satisfy sigma_eps < mu_eps, got ({s}, {m})"
                )));
            }
        }
        Ok(())
    }
}

fn require_cap(n: u32, cap_t: Option<f64>) -> Result<f64> {
    match cap_t {
        Some(c) if c > 0.0 && c.is_finite() => Ok(c),
        Some(c) => Err(Error::Domain(format!("disc capacity {c} must be positive"))),
        None => Err(Error::Domain(format!(
            "dimension n = {n} needs the disc capacity cap(T)"
        ))),
    }
}

/// Resonance scale of a trap of volume `volume` with aperture strength `d`.
fn resonance(n: u32, d: f64, volume: f64, cap_t: Option<f64>) -> Result<f64> {
    if n == 2 {
        Ok(PI * d / (2.0 * volume))
    } else {
        let cap = require_cap(n, cap_t)?;
        Ok(cap * d.powi(n as i32 - 2) / (4.0 * volume))
    }
}

/// Limiting gap edges of a design. `cap_t` is only read for `n > 2`.
pub fn gap_edges(design: &ScreenDesign, cap_t: Option<f64>) -> Result<GapSpec> {
    design.validate()?;
    let volume = design.trap_volume();
    let sigma = resonance(design.n, design.d, volume, cap_t)?;
    let mu = sigma / (1.0 - volume);
    GapSpec::new(sigma, mu)
}

/// Design `(d, b)` whose limiting gap is `(sigma, mu)`.
pub fn inverse_design(sigma: f64, mu: f64, n: u32, cap_t: Option<f64>) -> Result<ScreenDesign> {
    if n < 2 {
        return Err(Error::Domain(format!("dimension n = {n} must be >= 2")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma = {sigma} must be positive")));
    }
    if !(sigma < mu && mu.is_finite()) {
        return Err(Error::Ordering(format!("need sigma < mu, got ({sigma}, {mu})")));
    }
    let volume = (mu - sigma) / mu;
    let b = volume.powf(1.0 / n as f64);
    let d = if n == 2 {
        2.0 * sigma * volume / PI
    } else {
        let cap = require_cap(n, cap_t)?;
        (4.0 * sigma * volume / cap).powf(1.0 / (n as f64 - 2.0))
    };
    ScreenDesign::new(n, d, b)
}

/// Aperture radius on the unit-cell scale:
/// `d eps^(2/(n-2))` for `n > 2` and `exp(-1/(d eps^2)) / eps` for `n = 2`.
pub fn hole_radius(params: &ScreenParams) -> Result<f64> {
    let ScreenDesign { n, d, b } = params.design;
    let eps = params.eps;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("period eps = {eps} must be positive")));
    }
    let r = if n == 2 {
        (-1.0 / (d * eps * eps)).exp() / eps
    } else {
        d * eps.powf(2.0 / (n as f64 - 2.0))
    };
    if r >= 0.5 * b {
        return Err(Error::Geometry(format!(
            "aperture radius {r} does not fit on a screen face of edge {b} (needs < {})",
            0.5 * b
        )));
    }
    Ok(r)
}

/// Which constant term to use under the square root of the two-trap formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Radicand {
    /// `4 (rho1 sigma2 + rho1 sigma2 + sigma1 sigma2)`, letter for letter.
    #[default]
    AsPrinted,
    /// `4 (rho1 sigma2 + rho2 sigma1 + sigma1 sigma2)`.
    Symmetrized,
}

/// Inputs of the two-trap formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoScreenInput {
    pub n: u32,
    pub d1: f64,
    pub d2: f64,
    pub vol1: f64,
    pub vol2: f64,
}

/// Completed two-trap gap pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoScreenSpec {
    pub input: TwoScreenInput,
    pub sigma1: f64,
    pub sigma2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub radicand: Radicand,
}

/// Gap edges `(sigma_j, mu_j)` for two traps per cell.
pub fn two_screen_gaps(
    input: &TwoScreenInput,
    cap_t: Option<f64>,
    radicand: Radicand,
) -> Result<TwoScreenSpec> {
    let TwoScreenInput { n, d1, d2, vol1, vol2 } = *input;
    if n < 2 {
        return Err(Error::Domain(format!("dimension n = {n} must be >= 2")));
    }
    for (name, v) in [("d1", d1), ("d2", d2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} = {v} must be positive")));
        }
    }
    for (name, v) in [("vol1", vol1), ("vol2", vol2)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1)")));
        }
    }
    if vol1 + vol2 >= 1.0 {
        return Err(Error::Domain(format!(
            "trap volumes must fit in the cell, vol1 + vol2 = {}",
            vol1 + vol2
        )));
    }
    let sigma1 = resonance(n, d1, vol1, cap_t)?;
    let sigma2 = resonance(n, d2, vol2, cap_t)?;
    if !(sigma1 < sigma2) {
        return Err(Error::Ordering(format!(
            "two-trap formula needs sigma1 < sigma2, got ({sigma1}, {sigma2})"
        )));
    }
    let rho1 = sigma1 * vol1 / (1.0 - vol1);
    let rho2 = sigma2 * vol2 / (1.0 - vol2);
    let sum = rho1 + rho2 + sigma1 + sigma2;
    let cross = match radicand {
        Radicand::AsPrinted => rho1 * sigma2 + rho1 * sigma2,
        Radicand::Symmetrized => rho1 * sigma2 + rho2 * sigma1,
    };
    let disc = sum * sum - 4.0 * (cross + sigma1 * sigma2);
    if disc < 0.0 {
        return Err(Error::FormulaDomain(format!(
            "negative discriminant {disc:e} for sigma = ({sigma1}, {sigma2}), rho = ({rho1}, {rho2})"
        )));
    }
    let root = disc.sqrt();
    Ok(TwoScreenSpec {
        input: *input,
        sigma1,
        sigma2,
        mu1: 0.5 * (sum - root),
        mu2: 0.5 * (sum + root),
        rho1,
        rho2,
        radicand,
    })
}

impl TwoScreenSpec {
    pub fn is_ordered(&self) -> bool {
        self.sigma1 < self.mu1 && self.mu1 < self.sigma2 && self.sigma2 < self.mu2
    }
}

/// Frequency intervals `(-sqrt(mu), -sqrt(sigma))` and `(sqrt(sigma), sqrt(mu))`.
pub fn maxwell_gap(gap: &GapSpec) -> Result<[(f64, f64); 2]> {
    gap.validate()?;
    let (lo, hi) = (gap.sigma.sqrt(), gap.mu.sqrt());
    Ok([(-hi, -lo), (lo, hi)])
}

//! Smallest eigenpairs of `K x = lambda M x` by block subspace iteration on
//! the shifted inverse `(K + M)^{-1} M`, followed by Rayleigh-Ritz.
//!
//! A block method is used on purpose: the cell spectra contain exactly
//! repeated eigenvalues, which a single-vector Krylov recurrence resolves
//! only by luck.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{AnyPair, BoundaryRegime, OperatorPair};
use crate::sparse::{dot, norm2, Cholesky, CsrMatrix, Scalar};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const CLUSTER_TOL: f64 = 1e-8;
const SHIFT: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Bound on `||K x - lambda M x|| / ||M x||`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Subspace dimension; defaults to `2k + 8`.
    pub block: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: 500, seed: 0x5eed, block: None }
    }
}

impl EigenOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<f64>,
    /// Index ranges of eigenvalues equal to within `CLUSTER_TOL`.
    pub clusters: Vec<std::ops::Range<usize>>,
    pub iterations: usize,
    pub regime: BoundaryRegime,
}

/// Eigenvalues only, from either arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub iterations: usize,
}

impl<T> EigenResult<T> {
    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            values: self.values.clone(),
            residuals: self.residuals.clone(),
            multiplicities: self.clusters.iter().map(|c| c.len()).collect(),
            iterations: self.iterations,
        }
    }
}

/// Groups sorted values whose relative gap is below `tol`.
pub fn clusters(values: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (b - a).abs() > tol * a.abs().max(b.abs()).max(1.0)
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// M-orthonormalizes `cols` in place (two passes of modified Gram-Schmidt)
/// and returns `M q` for each column. Columns that collapse are replaced
/// from `rng` and orthonormalized again.
fn m_orthonormalize<T: Scalar>(
    mass: &CsrMatrix<T>,
    cols: &mut [Vec<T>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<T>>> {
    let mut mq: Vec<Vec<T>> = Vec::with_capacity(cols.len());
    for j in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let before = mass_norm(mass, &cols[j]);
            let (done, rest) = cols.split_at_mut(j);
            for _pass in 0..2 {
                for (qi, mqi) in done.iter().zip(&mq) {
                    let c = dot(mqi, &rest[0]);
                    axpy(-c, qi, &mut rest[0]);
                }
            }
            let mv = mass.mul_vec(&cols[j]);
            let nrm = dot(&cols[j], &mv).re().max(0.0).sqrt();
            if nrm > 1e-10 * before && nrm > 0.0 {
                let inv = T::of_real(1.0 / nrm);
                cols[j].iter_mut().for_each(|v| *v *= inv);
                mq.push(mv.into_iter().map(|v| v * inv).collect());
                break;
            }
            attempts += 1;
            if attempts > 5 {
                return Err(Error::Breakdown("subspace basis lost rank".into()));
            }
            if attempts > 0 {
                log::trace!("replaced column {j}");
            }
            cols[j] = (0..cols[j].len()).map(|_| T::sample(rng)).collect();
        }
    }
    Ok(mq)
}

fn mass_norm<T: Scalar>(mass: &CsrMatrix<T>, v: &[T]) -> f64 {
    dot(v, &mass.mul_vec(v)).re().max(0.0).sqrt()
}

/// Eigen-decomposition of a small Hermitian matrix by cyclic Jacobi
/// rotations: ascending eigenvalues and unitary eigenvectors (columns).
pub fn hermitian_eigen<T: Scalar>(mut a: DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let m = a.nrows();
    let mut v = DMatrix::<T>::identity(m, m);
    let scale = a.iter().map(|x| x.abs2()).sum::<f64>().sqrt();
    for _sweep in 0..64 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].abs2())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let c = a[(p, q)];
                let cabs = c.abs2().sqrt();
                if cabs <= 1e-300 {
                    continue;
                }
                let (ap, aq) = (a[(p, p)].re(), a[(q, q)].re());
                let zeta = (aq - ap) / (2.0 * cabs);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // U = diag(1, conj(c)/|c|) * [[cs, sn], [-sn, cs]] on (p, q)
                let ph = c.conj().scale(1.0 / cabs);
                let (upp, upq) = (T::of_real(cs), T::of_real(sn));
                let (uqp, uqq) = (ph.scale(-sn), ph.scale(cs));
                for k in 0..m {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = x * upp + y * uqp;
                    a[(k, q)] = x * upq + y * uqq;
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = x * upp + y * uqp;
                    v[(k, q)] = x * upq + y * uqq;
                }
                for k in 0..m {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = upp.conj() * x + uqp.conj() * y;
                    a[(q, k)] = upq.conj() * x + uqq.conj() * y;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                a[(p, p)] = T::of_real(a[(p, p)].re());
                a[(q, q)] = T::of_real(a[(q, q)].re());
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[(i, i)].re().total_cmp(&a[(j, j)].re()));
    let values = order.iter().map(|&i| a[(i, i)].re()).collect();
    let vectors = DMatrix::from_fn(m, m, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// Linear combinations `sum_i cols[i] * s[(i, j)]` for each column of `s`.
fn combine<T: Scalar>(cols: &[Vec<T>], s: &DMatrix<T>) -> Vec<Vec<T>> {
    let n = cols.first().map_or(0, |c| c.len());
    (0..s.ncols())
        .map(|j| {
            let mut out = vec![T::zero(); n];
            for (i, c) in cols.iter().enumerate() {
                axpy(s[(i, j)], c, &mut out);
            }
            out
        })
        .collect()
}

/// The `k` smallest eigenpairs of the pair.
pub fn smallest_eigs<T: Scalar>(pair: &OperatorPair<T>, k: usize, opts: &EigenOptions) -> Result<EigenResult<T>> {
    let n = pair.ndof();
    if k == 0 {
        return Err(Error::Domain("requested zero eigenpairs".into()));
    }
    if k > n {
        return Err(Error::Domain(format!("requested {k} eigenpairs of a pencil of order {n}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {} must be positive", opts.tol)));
    }
    let m = opts.block.unwrap_or(2 * k + 8).max(k).min(n);
    let (kmat, mmat) = (&pair.stiffness, &pair.mass);
    let shifted = kmat.add_scaled(-SHIFT, mmat);
    let chol = Cholesky::factor(&shifted)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<T>> = (0..m).map(|_| (0..n).map(|_| T::sample(&mut rng)).collect()).collect();
    let mut mx: Vec<Vec<T>> = x.iter().map(|v| mmat.mul_vec(v)).collect();
    let mut converged = 0;
    for iter in 1..=opts.max_iter {
        let mut q: Vec<Vec<T>> = if n == m {
            x.clone()
        } else {
            use rayon::prelude::*;
            mx.par_iter().map(|b| chol.solve(b)).collect()
        };
        let mq = m_orthonormalize(mmat, &mut q, &mut rng)?;
        let kq: Vec<Vec<T>> = q.iter().map(|v| kmat.mul_vec(v)).collect();
        let mut h = DMatrix::<T>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = dot(&q[i], &kq[j]);
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        for i in 0..m {
            h[(i, i)] = T::of_real(h[(i, i)].re());
        }
        let (theta, s) = hermitian_eigen(h);
        x = combine(&q, &s);
        mx = combine(&mq, &s);
        let kx = combine(&kq, &s);
        log::trace!("ritz values {:?}", &theta[..k + 2]);
        let residuals: Vec<f64> = (0..k)
            .map(|i| {
                let mut r = kx[i].clone();
                axpy(T::of_real(-theta[i]), &mx[i], &mut r);
                norm2(&r) / norm2(&mx[i])
            })
            .collect();
        converged = residuals.iter().take_while(|&&r| r <= opts.tol).count();
        log::debug!("subspace iteration {iter}: {converged}/{k} converged, max residual {:.3e}", residuals.iter().cloned().fold(0.0, f64::max));
        if converged == k || n == m {
            let values = theta[..k].to_vec();
            return Ok(EigenResult {
                clusters: clusters(&values, CLUSTER_TOL),
                values,
                vectors: x.into_iter().take(k).collect(),
                residuals,
                iterations: iter,
                regime: pair.regime,
            });
        }
    }
    Err(Error::Budget { iterations: opts.max_iter, converged, requested: k })
}

/// `smallest_eigs` on either arithmetic, returning the spectrum only.
pub fn spectrum(pair: &AnyPair, k: usize, opts: &EigenOptions) -> Result<Spectrum> {
    match pair {
        AnyPair::Real(p) => smallest_eigs(p, k, opts).map(|r| r.spectrum()),
        AnyPair::Complex(p) => smallest_eigs(p, k, opts).map(|r| r.spectrum()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_as;
    use crate::mesh::CellMesh;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn clusters_group_close_values() {
        let c = clusters(&[0.0, 1e-12, 1.0, 1.0 + 1e-10, 2.0], 1e-8);
        assert_eq!(c, vec![0..2, 2..4, 4..5]);
    }

    #[test]
    fn neumann_square_spectrum() {
        let mesh = CellMesh::empty_cell(24);
        let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap();
        let res = smallest_eigs(&pair, 4, &EigenOptions::default()).unwrap();
        assert!(res.values[0].abs() < 1e-10);
        let pi2 = PI * PI;
        assert!((res.values[1] - pi2).abs() / pi2 < 2e-2);
        // the one-diagonal grid splits the pair slightly
        assert!((res.values[2] - pi2).abs() / pi2 < 2e-2);
        assert!(res.residuals.iter().all(|&r| r <= 1e-10));
    }

    #[test]
    fn complex_bloch_matches_shifted_exponential() {
        let mesh = CellMesh::empty_cell(24);
        let phi = [0.7, 2.1];
        let pair = assemble_as::<Complex64>(&mesh, &BoundaryRegime::bloch(phi)).unwrap();
        let res = smallest_eigs(&pair, 2, &EigenOptions::default()).unwrap();
        let exact = phi[0] * phi[0] + phi[1] * phi[1];
        assert!((res.values[0] - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn seeds_are_reproducible() {
        let mesh = CellMesh::empty_cell(12);
        let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::dirichlet()).unwrap();
        let a = smallest_eigs(&pair, 3, &EigenOptions::default()).unwrap();
        let b = smallest_eigs(&pair, 3, &EigenOptions::default()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mesh = CellMesh::empty_cell(24);
        let pair = assemble_as::<f64>(&mesh, &BoundaryRegime::neumann()).unwrap();
        let err = smallest_eigs(&pair, 4, &EigenOptions::default().with_max_iter(1)).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
        assert!(smallest_eigs(&pair, 0, &EigenOptions::default()).is_err());
    }
}

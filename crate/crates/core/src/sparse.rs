//! Compressed sparse row matrices over real or complex scalars and a sparse
//! Cholesky factorization with reverse Cuthill-McKee ordering.

use nalgebra::ComplexField;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Field the FEM and eigen machinery runs over: `f64` or `Complex64`.
pub trait Scalar:
    ComplexField<RealField = f64> + Copy + Default + Send + Sync + std::fmt::Debug + 'static
{
    const IS_COMPLEX: bool;

    fn of_real(x: f64) -> Self {
        Self::from_real(x)
    }
    fn conj(self) -> Self {
        self.conjugate()
    }
    fn abs2(self) -> f64 {
        self.modulus_squared()
    }
    fn re(self) -> f64 {
        self.real()
    }
    fn im(self) -> f64 {
        self.imaginary()
    }
    fn from_phase(phase: Complex64) -> Option<Self>;
    fn sample<R: Rng>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn from_phase(phase: Complex64) -> Option<Self> {
        (phase.im == 0.0).then_some(phase.re)
    }
    fn sample<R: Rng>(rng: &mut R) -> Self {
        rng.gen::<f64>() - 0.5
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn from_phase(phase: Complex64) -> Option<Self> {
        Some(phase)
    }
    fn sample<R: Rng>(rng: &mut R) -> Self {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    }
}

/// `sum conj(x_i) y_i`.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + a.conj() * *b)
}

pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.abs2()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from unsorted triplets; duplicates are summed in
    /// input order, so the result depends only on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(p) => self.values[span.start + p],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    /// `self + alpha * other` (same dimensions).
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        let trip = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, v.scale(alpha))))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).modulus())
            .fold(0.0, f64::max)
    }

    /// Symmetric permutation `P A P^T` with `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let trip = self.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering<T: Scalar>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // (eccentricity, last node of deepest level with minimal degree)
        let mut level = vec![usize::MAX; n];
        let mut frontier = vec![start];
        level[start] = 0;
        let mut depth = 0;
        let mut last = frontier.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in &adj[u] {
                    if !visited[v] && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            depth += 1;
            last = next.clone();
            frontier = next;
        }
        let pick = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        (depth, pick)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut ecc, mut cand) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (e2, c2) = bfs_levels(cand, &visited);
            if e2 <= ecc {
                break;
            }
            start = cand;
            ecc = e2;
            cand = c2;
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    order.push(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Approximate minimum degree ordering of a structurally symmetric matrix,
/// as `perm[new] = old`.
pub fn amd_ordering<T: Scalar>(a: &CsrMatrix<T>) -> Result<Vec<usize>> {
    let control = amd::Control::default();
    let (perm, _, _) = amd::order(a.nrows(), &a.indptr, &a.indices, &control)
        .map_err(|s| Error::Structure(format!("minimum degree ordering failed: {s:?}")))?;
    Ok(perm)
}

/// `P A P^T = L L^H` for a Hermitian positive definite `A`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    perm: Vec<usize>,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Structure("Cholesky needs a square matrix".into()));
        }
        let perm = amd_ordering(a)?;
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix<T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // upper triangle of P A P^T by columns: column k holds C(j, k), j <= k
        let mut ucols: Vec<Vec<(usize, T)>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut col: Vec<(usize, T)> = a
                .row(perm[k])
                .map(|(j, v)| (inv[j], v.conj()))
                .filter(|&(j, _)| j <= k)
                .collect();
            col.sort_by_key(|&(j, _)| j);
            ucols.push(col);
        }

        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &(i0, _) in &ucols[k] {
                let mut i = i0;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut pattern = vec![0usize; n];
        let ereach = |k: usize, mark: &mut [usize], stack: &mut [usize], pattern: &mut [usize]| {
            let mut top = n;
            mark[k] = k;
            for &(i0, _) in &ucols[k] {
                let mut i = i0;
                let mut len = 0;
                while mark[i] != k {
                    stack[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = stack[len];
                }
            }
            top
        };

        let mut counts = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &mut mark, &mut stack, &mut pattern);
            for &i in &pattern[top..n] {
                counts[i] += 1;
            }
        }
        let mut colptr = vec![0usize; n + 1];
        for k in 0..n {
            colptr[k + 1] = colptr[k] + counts[k];
        }
        let nnz = colptr[n];
        let mut rowidx = vec![0usize; nnz];
        let mut values = vec![T::zero(); nnz];
        let mut next = colptr[..n].to_vec();
        let mut x = vec![T::zero(); n];
        mark.iter_mut().for_each(|m| *m = NONE);

        for k in 0..n {
            let top = ereach(k, &mut mark, &mut stack, &mut pattern);
            for &(i, v) in &ucols[k] {
                x[i] = v;
            }
            let mut d = x[k].re();
            x[k] = T::zero();
            for &i in &pattern[top..n] {
                let lki = x[i] / values[colptr[i]];
                x[i] = T::zero();
                for q in colptr[i] + 1..next[i] {
                    let r = rowidx[q];
                    x[r] -= values[q] * lki;
                }
                d -= lki.abs2();
                rowidx[next[i]] = k;
                values[next[i]] = lki.conj();
                next[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Breakdown(format!(
                    "matrix not positive definite: pivot {d:e} at step {k} of {n}"
                )));
            }
            debug_assert_eq!(next[k], colptr[k]);
            rowidx[next[k]] = k;
            values[next[k]] = T::of_real(d.sqrt());
            next[k] += 1;
        }
        Ok(Self { n, perm, colptr, rowidx, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let start = self.colptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            for q in start + 1..self.colptr[j + 1] {
                y[self.rowidx[q]] -= self.values[q] * yj;
            }
        }
        for j in (0..n).rev() {
            let start = self.colptr[j];
            let mut s = y[j];
            for q in start + 1..self.colptr[j + 1] {
                s -= self.values[q].conj() * y[self.rowidx[q]];
            }
            y[j] = s / self.values[start];
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

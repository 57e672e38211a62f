//! Structured linear algebra: sparse storage, banded Cholesky for univariate
//! mass matrices, Kronecker solves and restarted GMRES.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::LinalgError;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed in
    /// input order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    /// Dense rows to sparse, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows.len(), ncols, trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Kronecker product `a ⊗ b` of dense factors, dropping exact zeros.
    pub fn kron(a: &[Vec<f64>], b: &[Vec<f64>]) -> CsrMatrix {
        let (ar, ac) = (a.len(), a.first().map_or(0, |r| r.len()));
        let (br, bc) = (b.len(), b.first().map_or(0, |r| r.len()));
        let mut trip = Vec::new();
        for i in 0..ar {
            for k in 0..br {
                for j in 0..ac {
                    if a[i][j] == 0.0 {
                        continue;
                    }
                    for l in 0..bc {
                        let v = a[i][j] * b[k][l];
                        if v != 0.0 {
                            trip.push((i * br + k, j * bc + l, v));
                        }
                    }
                }
            }
        }
        CsrMatrix::from_triplets(ar * br, ac * bc, trip)
    }

    /// Same sparsity pattern required; returns `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((i, j, alpha * v));
            }
            for (j, v) in other.row(i) {
                trip.push((i, j, beta * v));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, trip)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// LU factorization with partial pivoting for small dense systems.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn new(mut a: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            if a[piv][k] == 0.0 {
                return Err(LinalgError::Singular(k));
            }
            a.swap(k, piv);
            perm.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i][j] -= f * a[k][j];
                    }
                }
            }
        }
        Ok(DenseLu { lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

/// Cholesky factor `L` of a symmetric positive definite banded matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    /// Row `i` holds `L[i][i - bandwidth ..= i]`, left-padded with zeros.
    lower: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a dense symmetric matrix whose entries vanish outside
    /// `|i - j| <= bandwidth`.
    pub fn factor(m: &[Vec<f64>], bandwidth: usize) -> Result<Self, LinalgError> {
        let n = m.len();
        for row in m {
            if row.len() != n {
                return Err(LinalgError::Dimension { expected: n, got: row.len() });
            }
        }
        let w = bandwidth + 1;
        let mut lower = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (j + bandwidth - i);
        for i in 0..n {
            let j0 = i.saturating_sub(bandwidth);
            for j in j0..=i {
                let mut sum = m[i][j];
                let k0 = j0.max(j.saturating_sub(bandwidth));
                for k in k0..j {
                    sum -= lower[at(i, k)] * lower[at(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: sum });
                    }
                    lower[at(i, i)] = sum.sqrt();
                } else {
                    lower[at(i, j)] = sum / lower[at(j, j)];
                }
            }
        }
        Ok(BandedCholesky { n, bandwidth, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Entry `L[i][j]` (zero outside the band).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.bandwidth {
            0.0
        } else {
            self.lower[i * (self.bandwidth + 1) + (j + self.bandwidth - i)]
        }
    }

    pub fn to_dense_lower(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.entry(i, j)).collect()).collect()
    }

    /// Solves `L Lᵀ x = b` in place; returns the number of multiply-adds.
    pub fn solve_in_place(&self, x: &mut [f64]) -> u64 {
        let (n, bw) = (self.n, self.bandwidth);
        let mut ops = 0u64;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.entry(i, k) * x[k];
                ops += 1;
            }
            x[i] = s / self.entry(i, i);
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.entry(k, i) * x[k];
                ops += 1;
            }
            x[i] = s / self.entry(i, i);
        }
        ops + 2 * n as u64
    }

    /// Sum of the stored factor entries, for immutability checks.
    pub fn checksum(&self) -> f64 {
        self.lower.iter().sum()
    }
}

/// Solver for block-diagonal systems whose blocks are `m_xi ⊗ m_eta`.
#[derive(Debug)]
pub struct KronSolver {
    xi: BandedCholesky,
    eta: BandedCholesky,
    blocks: usize,
    ops: AtomicU64,
}

impl Clone for KronSolver {
    fn clone(&self) -> Self {
        KronSolver {
            xi: self.xi.clone(),
            eta: self.eta.clone(),
            blocks: self.blocks,
            ops: AtomicU64::new(self.ops.load(Ordering::Relaxed)),
        }
    }
}

impl KronSolver {
    pub fn new(xi: BandedCholesky, eta: BandedCholesky, blocks: usize) -> Self {
        KronSolver { xi, eta, blocks, ops: AtomicU64::new(0) }
    }

    pub fn block_len(&self) -> usize {
        self.xi.dim() * self.eta.dim()
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn factors(&self) -> (&BandedCholesky, &BandedCholesky) {
        (&self.xi, &self.eta)
    }

    /// Multiply-adds performed by all solves so far.
    pub fn op_count(&self) -> u64 {
        self.ops.load(Ordering::Relaxed)
    }

    /// Solves one `m_xi ⊗ m_eta` block in place.
    pub fn solve_block_in_place(&self, x: &mut [f64]) {
        let (nx, ne) = (self.xi.dim(), self.eta.dim());
        assert_eq!(x.len(), nx * ne);
        let mut ops = 0;
        for row in x.chunks_mut(ne) {
            ops += self.eta.solve_in_place(row);
        }
        let mut col = vec![0.0; nx];
        for j in 0..ne {
            for i in 0..nx {
                col[i] = x[i * ne + j];
            }
            ops += self.xi.solve_in_place(&mut col);
            for i in 0..nx {
                x[i * ne + j] = col[i];
            }
        }
        self.ops.fetch_add(ops, Ordering::Relaxed);
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let expected = self.blocks * self.block_len();
        if rhs.len() != expected {
            return Err(LinalgError::Dimension { expected, got: rhs.len() });
        }
        let mut x = rhs.to_vec();
        for block in x.chunks_mut(self.block_len()) {
            self.solve_block_in_place(block);
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-3, restart: 50, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub matvecs: usize,
    /// Relative residual estimate after every iteration, per restart cycle.
    pub cycles: Vec<Vec<f64>>,
}

impl GmresOutcome {
    pub fn final_relative_residual(&self) -> f64 {
        self.cycles.iter().rev().find_map(|c| c.last().copied()).unwrap_or(0.0)
    }
}

/// Restarted GMRES with zero initial guess and modified Gram-Schmidt.
pub fn gmres(mut matvec: impl FnMut(&[f64]) -> Vec<f64>, rhs: &[f64], opts: GmresOptions) -> GmresOutcome {
    let n = rhs.len();
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    let mut out = GmresOutcome { solution: Vec::new(), converged: false, iterations: 0, matvecs: 0, cycles: Vec::new() };
    if bnorm == 0.0 {
        out.solution = x;
        out.converged = true;
        return out;
    }
    let target = opts.tol * bnorm;
    let m = opts.restart.max(1);
    let mut first = true;
    loop {
        let r: Vec<f64> = if first {
            rhs.to_vec()
        } else {
            let ax = matvec(&x);
            out.matvecs += 1;
            rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
        };
        first = false;
        let beta = norm(&r);
        if beta <= target {
            out.converged = true;
            break;
        }
        if out.iterations >= opts.max_iter {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut history = Vec::new();
        let mut k = 0;
        let mut done = false;
        while k < m && out.iterations < opts.max_iter {
            let mut w = matvec(&v[k]);
            out.matvecs += 1;
            out.iterations += 1;
            let wnorm0 = norm(&w);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                axpy(-h[i][k], &v[i], &mut w);
            }
            let hnext = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(hnext);
            if denom == 0.0 {
                // the operator annihilated the Krylov vector
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = hnext / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * hnext;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            let res = g[k + 1].abs();
            history.push(res / bnorm);
            k += 1;
            if res <= target {
                out.converged = true;
                done = true;
                break;
            }
            if hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE) {
                done = true;
                break;
            }
            v.push(w.iter().map(|wi| wi / hnext).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (yi, vi) in y.iter().zip(&v) {
            axpy(*yi, vi, &mut x);
        }
        out.cycles.push(history);
        if done || out.iterations >= opts.max_iter {
            break;
        }
    }
    out.solution = x;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Preconditioned conjugate gradients with zero initial guess.
pub fn pcg(
    matvec: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = rhs.len();
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return CgOutcome { solution: x, converged: true, iterations: 0 };
    }
    let mut r = rhs.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = matvec(&p);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm(&r) <= tol * bnorm {
            return CgOutcome { solution: x, converged: true, iterations: it };
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    CgOutcome { solution: x, converged: false, iterations: max_iter }
}

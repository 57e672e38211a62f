//! Univariate and tensor-product B-spline bases.
//!
//! Knot vectors are clamped on `[0, 1]`. Tensor-product functions are
//! numbered lexicographically with the xi index running slowest:
//! `k = i_xi * n_eta + i_eta`.

use serde::{Deserialize, Serialize};

use crate::error::SplineError;
use crate::linalg::{CsrMatrix, DenseLu};
use crate::Vec2;

/// Tolerance used when comparing knot values.
const KNOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnotVector", into = "RawKnotVector")]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename = "KnotVector", deny_unknown_fields)]
struct RawKnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<RawKnotVector> for KnotVector {
    type Error = SplineError;
    fn try_from(raw: RawKnotVector) -> Result<Self, Self::Error> {
        KnotVector::new(raw.degree, raw.knots)
    }
}

impl From<KnotVector> for RawKnotVector {
    fn from(kv: KnotVector) -> Self {
        RawKnotVector { degree: kv.degree, knots: kv.knots }
    }
}

/// Values and derivatives of the `p + 1` basis functions that are nonzero at
/// a parameter. `ders[k][i]` is the k-th derivative of function `first + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub first: usize,
    pub ders: Vec<Vec<f64>>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, SplineError> {
        if degree < 1 {
            return Err(SplineError::InvalidDegree(degree));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(SplineError::NotClamped(format!(
                "{} knots cannot hold two end knots of multiplicity {}",
                knots.len(),
                degree + 1
            )));
        }
        if let Some(pos) = knots.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(SplineError::Decreasing(pos + 1));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != 0.0 || last != 1.0 {
            return Err(SplineError::NotClamped(format!("knots must span [0, 1], got [{first}, {last}]")));
        }
        let lead = knots.iter().take_while(|&&k| k == first).count();
        let trail = knots.iter().rev().take_while(|&&k| k == last).count();
        if lead != degree + 1 || trail != degree + 1 {
            return Err(SplineError::NotClamped(format!(
                "end multiplicities are {lead} and {trail}, expected {}",
                degree + 1
            )));
        }
        let mut i = lead;
        while i < knots.len() - trail {
            let v = knots[i];
            let m = knots[i..].iter().take_while(|&&k| k == v).count();
            if m > degree {
                return Err(SplineError::ExcessMultiplicity { value: v, multiplicity: m, degree });
            }
            i += m;
        }
        Ok(KnotVector { degree, knots })
    }

    /// Open knot vector with `elements` equal spans and simple interior knots.
    pub fn uniform(degree: usize, elements: usize) -> Result<Self, SplineError> {
        let interior: Vec<(f64, usize)> =
            (1..elements).map(|i| (i as f64 / elements as f64, 1)).collect();
        Self::with_interior(degree, &interior)
    }

    /// Open knot vector with the given interior breakpoints and multiplicities.
    pub fn with_interior(degree: usize, interior: &[(f64, usize)]) -> Result<Self, SplineError> {
        let mut knots = vec![0.0; degree + 1];
        for &(v, m) in interior {
            knots.extend(std::iter::repeat_n(v, m));
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values with their multiplicities.
    pub fn breakpoints(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &k in &self.knots {
            match out.last_mut() {
                Some((v, m)) if *v == k => *m += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    /// Nonempty knot spans as `[a, b]` intervals, in increasing order.
    pub fn elements(&self) -> Vec<[f64; 2]> {
        self.breakpoints().windows(2).map(|w| [w[0].0, w[1].0]).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Largest multiplicity among interior knots (0 if there are none).
    pub fn max_interior_multiplicity(&self) -> usize {
        let bp = self.breakpoints();
        bp[1..bp.len() - 1].iter().map(|&(_, m)| m).max().unwrap_or(0)
    }

    /// Index `s` with `knots[s] <= x < knots[s + 1]`; `x = 1` maps to the last
    /// nonempty span.
    pub fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.dim();
        if x >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions and their derivatives up to `max_deriv`.
    pub fn eval(&self, x: f64, max_deriv: usize) -> Result<BasisTable, SplineError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(SplineError::Domain(x));
        }
        if max_deriv > self.degree {
            return Err(SplineError::DerivativeOrder { requested: max_deriv, degree: self.degree });
        }
        Ok(self.eval_in_span(self.find_span(x), x, max_deriv))
    }

    /// Evaluation in a known span. Derivative orders above the degree are
    /// returned as zero rows.
    pub fn eval_in_span(&self, span: usize, x: f64, max_deriv: usize) -> BasisTable {
        let p = self.degree;
        let nd = max_deriv.min(p);
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2: usize = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        BasisTable { first: span - p, ders }
    }

    /// Knot averages paired with the coefficients.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.dim())
            .map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Bisects every nonempty span.
    pub fn h_refine(&self) -> (KnotVector, Prolongation) {
        let mids: Vec<f64> = self.elements().iter().map(|e| 0.5 * (e[0] + e[1])).collect();
        self.insert_knots(&mids)
    }

    /// Inserts the given knots (Boehm's algorithm, one at a time) and returns
    /// the refined vector together with the coefficient prolongation.
    pub fn insert_knots(&self, new_knots: &[f64]) -> (KnotVector, Prolongation) {
        let p = self.degree;
        let n0 = self.dim();
        let mut rows: Vec<Vec<f64>> = (0..n0)
            .map(|i| {
                let mut r = vec![0.0; n0];
                r[i] = 1.0;
                r
            })
            .collect();
        let mut knots = self.knots.clone();
        let mut sorted = new_knots.to_vec();
        sorted.sort_by(f64::total_cmp);
        for &x in &sorted {
            let n = knots.len() - p - 1;
            let k = {
                let mut s = p;
                while s + 1 < n && knots[s + 1] <= x {
                    s += 1;
                }
                s
            };
            let mut next = Vec::with_capacity(n + 1);
            for i in 0..=n {
                if i + p <= k {
                    next.push(rows[i].clone());
                } else if i > k {
                    next.push(rows[i - 1].clone());
                } else {
                    let alpha = (x - knots[i]) / (knots[i + p] - knots[i]);
                    let row: Vec<f64> = rows[i]
                        .iter()
                        .zip(&rows[i - 1])
                        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                        .collect();
                    next.push(row);
                }
            }
            rows = next;
            knots.insert(k + 1, x);
        }
        let fine = KnotVector { degree: p, knots };
        (fine, Prolongation { matrix: CsrMatrix::from_dense_rows(&rows) })
    }

    /// Inverse of [`KnotVector::h_refine`]: removes every other breakpoint.
    pub fn coarsen(&self) -> Result<KnotVector, SplineError> {
        let bp = self.breakpoints();
        let spans = bp.len() - 1;
        if spans % 2 != 0 {
            return Err(SplineError::NotCoarsenable(format!("{spans} spans cannot be paired")));
        }
        let mut interior = Vec::new();
        for (i, &(v, m)) in bp.iter().enumerate().skip(1).take(spans - 1) {
            if i % 2 == 1 {
                let mid = 0.5 * (bp[i - 1].0 + bp[i + 1].0);
                if m != 1 || (v - mid).abs() > KNOT_TOL {
                    return Err(SplineError::NotCoarsenable(format!(
                        "breakpoint {v} is not a simple midpoint"
                    )));
                }
            } else {
                interior.push((v, m));
            }
        }
        KnotVector::with_interior(self.degree, &interior)
    }

    /// Collocation matrix `N_j(x_i)` as dense rows.
    pub fn collocation(&self, sites: &[f64]) -> Vec<Vec<f64>> {
        sites
            .iter()
            .map(|&x| {
                let t = self.eval_in_span(self.find_span(x), x, 0);
                let mut row = vec![0.0; self.dim()];
                for (i, v) in t.ders[0].iter().enumerate() {
                    row[t.first + i] = *v;
                }
                row
            })
            .collect()
    }

    /// Spline coefficients interpolating `f` at the Greville abscissae. End
    /// coefficients equal `f(0)` and `f(1)` exactly.
    pub fn interpolate(&self, f: impl Fn(f64) -> Vec2) -> Vec<Vec2> {
        let sites = self.greville();
        let lu = DenseLu::new(self.collocation(&sites)).expect("Greville collocation is nonsingular");
        let values: Vec<Vec2> = sites.iter().map(|&s| f(s)).collect();
        let mut out = vec![[0.0; 2]; sites.len()];
        for c in 0..2 {
            let rhs: Vec<f64> = values.iter().map(|v| v[c]).collect();
            let sol = lu.solve(&rhs);
            for (o, s) in out.iter_mut().zip(sol) {
                o[c] = s;
            }
        }
        let n = out.len();
        out[0] = values[0];
        out[n - 1] = values[n - 1];
        out
    }

    /// Evaluates a curve with the given coefficients.
    pub fn eval_curve(&self, coeffs: &[Vec2], x: f64) -> Vec2 {
        let t = self.eval_in_span(self.find_span(x), x, 0);
        let mut p = [0.0; 2];
        for (i, w) in t.ders[0].iter().enumerate() {
            p[0] += w * coeffs[t.first + i][0];
            p[1] += w * coeffs[t.first + i][1];
        }
        p
    }
}

/// Maps coarse coefficients to fine coefficients under knot insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    pub matrix: CsrMatrix,
}

impl Prolongation {
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        self.matrix.matvec(coarse)
    }

    pub fn apply_points(&self, coarse: &[Vec2]) -> Vec<Vec2> {
        let xs: Vec<f64> = coarse.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = coarse.iter().map(|p| p[1]).collect();
        self.apply(&xs).into_iter().zip(self.apply(&ys)).map(|(x, y)| [x, y]).collect()
    }
}

/// Tensor product of two knot vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub xi: KnotVector,
    pub eta: KnotVector,
}

/// Active functions of a tensor basis at one point. Second-derivative
/// vectors are empty unless requested.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTable {
    pub indices: Vec<usize>,
    pub w: Vec<f64>,
    pub w_xi: Vec<f64>,
    pub w_eta: Vec<f64>,
    pub w_xixi: Vec<f64>,
    pub w_xieta: Vec<f64>,
    pub w_etaeta: Vec<f64>,
}

impl TensorBasis {
    pub fn new(xi: KnotVector, eta: KnotVector) -> Self {
        TensorBasis { xi, eta }
    }

    pub fn n_xi(&self) -> usize {
        self.xi.dim()
    }

    pub fn n_eta(&self) -> usize {
        self.eta.dim()
    }

    pub fn dim(&self) -> usize {
        self.n_xi() * self.n_eta()
    }

    pub fn index(&self, i_xi: usize, i_eta: usize) -> usize {
        i_xi * self.n_eta() + i_eta
    }

    pub fn split_index(&self, k: usize) -> (usize, usize) {
        (k / self.n_eta(), k % self.n_eta())
    }

    pub fn max_degree(&self) -> usize {
        self.xi.degree().max(self.eta.degree())
    }

    /// True when the function does not vanish on the boundary of the unit square.
    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.split_index(k);
        i == 0 || j == 0 || i + 1 == self.n_xi() || j + 1 == self.n_eta()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.is_boundary(k)).collect()
    }

    pub fn inner_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| !self.is_boundary(k)).collect()
    }

    pub fn h_refine(&self) -> (TensorBasis, TensorProlongation) {
        let (fx, px) = self.xi.h_refine();
        let (fe, pe) = self.eta.h_refine();
        (TensorBasis::new(fx, fe), TensorProlongation { xi: px, eta: pe })
    }

    pub fn coarsen(&self) -> Result<TensorBasis, SplineError> {
        Ok(TensorBasis::new(self.xi.coarsen()?, self.eta.coarsen()?))
    }

    /// Evaluates the active functions. With `max_deriv >= 2` the second
    /// derivatives are filled as well.
    pub fn eval(&self, xi: f64, eta: f64, max_deriv: usize) -> Result<TensorTable, SplineError> {
        for x in [xi, eta] {
            if !(0.0..=1.0).contains(&x) {
                return Err(SplineError::Domain(x));
            }
        }
        let nd = max_deriv.min(2);
        let tx = self.xi.eval_in_span(self.xi.find_span(xi), xi, nd);
        let te = self.eta.eval_in_span(self.eta.find_span(eta), eta, nd);
        Ok(self.combine(&tx, &te, nd))
    }

    pub(crate) fn combine(&self, tx: &BasisTable, te: &BasisTable, nd: usize) -> TensorTable {
        let (px, pe) = (self.xi.degree(), self.eta.degree());
        let cap = (px + 1) * (pe + 1);
        let mut t = TensorTable {
            indices: Vec::with_capacity(cap),
            w: Vec::with_capacity(cap),
            w_xi: Vec::with_capacity(cap),
            w_eta: Vec::with_capacity(cap),
            w_xixi: Vec::new(),
            w_xieta: Vec::new(),
            w_etaeta: Vec::new(),
        };
        for a in 0..=px {
            for b in 0..=pe {
                t.indices.push(self.index(tx.first + a, te.first + b));
                t.w.push(tx.ders[0][a] * te.ders[0][b]);
                if nd >= 1 {
                    t.w_xi.push(tx.ders[1][a] * te.ders[0][b]);
                    t.w_eta.push(tx.ders[0][a] * te.ders[1][b]);
                }
                if nd >= 2 {
                    t.w_xixi.push(tx.ders[2][a] * te.ders[0][b]);
                    t.w_xieta.push(tx.ders[1][a] * te.ders[1][b]);
                    t.w_etaeta.push(tx.ders[0][a] * te.ders[2][b]);
                }
            }
        }
        t
    }
}

/// Separable prolongation for tensor-product coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorProlongation {
    pub xi: Prolongation,
    pub eta: Prolongation,
}

impl TensorProlongation {
    /// Applies `P_xi ⊗ P_eta` to a lexicographically ordered coefficient net.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        let (nx, ne) = (self.xi.matrix.ncols(), self.eta.matrix.ncols());
        let (fx, fe) = (self.xi.matrix.nrows(), self.eta.matrix.nrows());
        assert_eq!(coarse.len(), nx * ne);
        // along eta, row by row
        let mut tmp = vec![0.0; nx * fe];
        for i in 0..nx {
            let row = self.eta.apply(&coarse[i * ne..(i + 1) * ne]);
            tmp[i * fe..(i + 1) * fe].copy_from_slice(&row);
        }
        // along xi, column by column
        let mut out = vec![0.0; fx * fe];
        let mut col = vec![0.0; nx];
        for j in 0..fe {
            for i in 0..nx {
                col[i] = tmp[i * fe + j];
            }
            for (i, v) in self.xi.apply(&col).into_iter().enumerate() {
                out[i * fe + j] = v;
            }
        }
        out
    }

    pub fn apply_points(&self, coarse: &[Vec2]) -> Vec<Vec2> {
        let xs: Vec<f64> = coarse.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = coarse.iter().map(|p| p[1]).collect();
        self.apply(&xs).into_iter().zip(self.apply(&ys)).map(|(x, y)| [x, y]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain recursive Cox-de Boor, used as an independent reference.
    fn naive(knots: &[f64], i: usize, p: usize, x: f64, last: bool) -> f64 {
        if p == 0 {
            let (a, b) = (knots[i], knots[i + 1]);
            return if (a <= x && x < b) || (last && x == b && a < b && b == 1.0) { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * naive(knots, i, p - 1, x, last);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - x) / d2 * naive(knots, i + 1, p - 1, x, last);
        }
        v
    }

    fn naive_deriv(knots: &[f64], i: usize, p: usize, k: usize, x: f64) -> f64 {
        if k == 0 {
            return naive(knots, i, p, x, false);
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += p as f64 / d1 * naive_deriv(knots, i, p - 1, k - 1, x);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v -= p as f64 / d2 * naive_deriv(knots, i + 1, p - 1, k - 1, x);
        }
        v
    }

    #[test]
    fn hat_midpoint() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap();
        let t = kv.eval(0.25, 0).unwrap();
        assert_eq!(t.first, 0);
        assert_eq!(t.ders[0], vec![0.5, 0.5]);
    }

    #[test]
    fn cubic_matches_naive_recursion() {
        let kv = KnotVector::uniform(3, 4).unwrap();
        let t = kv.eval(0.3, 2).unwrap();
        assert_eq!(t.ders[0].len(), 4);
        for k in 0..=2 {
            for (a, v) in t.ders[k].iter().enumerate() {
                let reference = naive_deriv(kv.knots(), t.first + a, 3, k, 0.3);
                assert!((v - reference).abs() < 1e-13, "k={k} a={a}: {v} vs {reference}");
            }
        }
    }

    #[test]
    fn derivative_sum_vanishes() {
        let kv = KnotVector::with_interior(3, &[(0.25, 1), (0.5, 3), (0.7, 2)]).unwrap();
        for i in 0..=40 {
            let x = i as f64 / 40.0;
            let t = kv.eval(x, 1).unwrap();
            assert!((t.ders[0].iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(t.ders[1].iter().sum::<f64>().abs() < 1e-11);
        }
    }

    #[test]
    fn domain_and_order_errors() {
        let kv = KnotVector::uniform(2, 3).unwrap();
        assert_eq!(kv.eval(1.5, 0), Err(SplineError::Domain(1.5)));
        assert_eq!(kv.eval(-0.1, 0), Err(SplineError::Domain(-0.1)));
        assert!(matches!(kv.eval(0.5, 3), Err(SplineError::DerivativeOrder { .. })));
    }

    #[test]
    fn validation() {
        assert!(matches!(KnotVector::new(0, vec![0.0, 1.0]), Err(SplineError::InvalidDegree(0))));
        assert!(matches!(KnotVector::new(1, vec![0.0, 0.5, 1.0, 1.0]), Err(SplineError::NotClamped(_))));
        assert!(matches!(
            KnotVector::new(1, vec![0.0, 0.0, 0.6, 0.4, 1.0, 1.0]),
            Err(SplineError::Decreasing(3))
        ));
        assert!(matches!(
            KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0]),
            Err(SplineError::ExcessMultiplicity { .. })
        ));
        assert!(KnotVector::with_interior(2, &[(0.5, 2)]).is_ok());
    }

    #[test]
    fn greville_examples() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap();
        assert_eq!(kv.greville(), vec![0.0, 0.5, 1.0]);
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(kv.greville(), vec![0.0, 0.5, 1.0]);
        let kv = KnotVector::uniform(3, 4).unwrap();
        let k = kv.knots();
        let expected: Vec<f64> = (0..kv.dim()).map(|i| (k[i + 1] + k[i + 2] + k[i + 3]) / 3.0).collect();
        assert_eq!(kv.greville(), expected);
        assert_eq!(kv.greville().len(), kv.dim());
    }

    #[test]
    fn linear_refinement() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (fine, pr) = kv.h_refine();
        assert_eq!(fine.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(pr.matrix.to_dense(), vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]);
        assert_eq!(pr.apply(&[1.0, 1.0]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn refinement_preserves_multiplicity() {
        let kv = KnotVector::with_interior(3, &[(0.5, 3)]).unwrap();
        let (fine, _) = kv.h_refine();
        assert_eq!(fine.breakpoints(), vec![(0.0, 4), (0.25, 1), (0.5, 3), (0.75, 1), (1.0, 4)]);
        assert_eq!(fine.coarsen().unwrap(), kv);
        assert!(KnotVector::uniform(2, 3).unwrap().coarsen().is_err());
    }

    #[test]
    fn interpolation_reproduces_linear() {
        let kv = KnotVector::with_interior(3, &[(0.25, 1), (0.5, 3), (0.75, 1)]).unwrap();
        let c = kv.interpolate(|t| [2.0 * t - 1.0, 3.0]);
        for (ci, g) in c.iter().zip(kv.greville()) {
            assert!((ci[0] - (2.0 * g - 1.0)).abs() < 1e-13);
            assert!((ci[1] - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn tensor_corner_is_interpolatory() {
        let tb = TensorBasis::new(KnotVector::uniform(2, 1).unwrap(), KnotVector::uniform(2, 1).unwrap());
        let t = tb.eval(0.0, 0.0, 0).unwrap();
        for (idx, w) in t.indices.iter().zip(&t.w) {
            assert_eq!(*w, if *idx == 0 { 1.0 } else { 0.0 });
        }
    }
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use mixgrid::mapping::SplineMap;
use mixgrid::quadrature::gauss_on;
use mixgrid::solver::MixedProblem;
use nalgebra::{DMatrix, DVector};

/// Cox-de Boor recursion for `N_{i,p}` straight from the definition, with
/// 0/0 = 0. Half-open spans, except that the last nonempty span is closed.
pub fn cox_de_boor(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        let last = knots[knots.len() - 1];
        let closed = b == last && a < b;
        return if (a <= x && x < b) || (closed && x == b) { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x);
    }
    v
}

/// k-th derivative through the textbook derivative recursion.
pub fn cox_de_boor_der(knots: &[f64], i: usize, p: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        return cox_de_boor(knots, i, p, x);
    }
    if p == 0 {
        return 0.0;
    }
    let mut v = 0.0;
    let d1 = knots[i + p] - knots[i];
    if d1 > 0.0 {
        v += p as f64 / d1 * cox_de_boor_der(knots, i, p - 1, k - 1, x);
    }
    let d2 = knots[i + p + 1] - knots[i + 1];
    if d2 > 0.0 {
        v -= p as f64 / d2 * cox_de_boor_der(knots, i + 1, p - 1, k - 1, x);
    }
    v
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Blocks of the full Jacobian of `(R_L, R_N)` by central differences.
pub struct FdJacobian {
    /// dR_L/dd
    pub a: DMatrix<f64>,
    /// dR_L/dc
    pub l_c: DMatrix<f64>,
    /// dR_N/dd
    pub c: DMatrix<f64>,
    /// dR_N/dc
    pub d: DMatrix<f64>,
}

pub fn fd_jacobian<P: MixedProblem>(p: &P, d: &[f64], c: &[f64], h: f64) -> FdJacobian {
    let (na, nc) = (p.aux_len(), p.inner_len());
    let full = |d: &[f64], c: &[f64]| {
        let mut r = p.residual_linear(d, c);
        r.extend(p.residual_nonlinear(d, c));
        r
    };
    let mut jac = DMatrix::zeros(na + nc, na + nc);
    for col in 0..na + nc {
        let (mut dp, mut dm, mut cp, mut cm) = (d.to_vec(), d.to_vec(), c.to_vec(), c.to_vec());
        if col < na {
            dp[col] += h;
            dm[col] -= h;
        } else {
            cp[col - na] += h;
            cm[col - na] -= h;
        }
        let (rp, rm) = (full(&dp, &cp), full(&dm, &cm));
        for row in 0..na + nc {
            jac[(row, col)] = (rp[row] - rm[row]) / (2.0 * h);
        }
    }
    FdJacobian {
        a: jac.view((0, 0), (na, na)).into_owned(),
        l_c: jac.view((0, na), (na, nc)).into_owned(),
        c: jac.view((na, 0), (nc, na)).into_owned(),
        d: jac.view((na, na), (nc, nc)).into_owned(),
    }
}

impl FdJacobian {
    /// Schur complement of the `A` block.
    pub fn schur(&self) -> DMatrix<f64> {
        let ainv_lc = self.a.clone().lu().solve(&self.l_c).expect("A invertible");
        &self.d - &self.c * ainv_lc
    }

    /// Right-hand side of the reduced Newton system.
    pub fn reduced_rhs(&self, rl: &[f64], rn: &[f64]) -> DVector<f64> {
        let ainv_rl = self.a.clone().lu().solve(&DVector::from_column_slice(rl)).expect("A invertible");
        -DVector::from_column_slice(rn) + &self.c * ainv_rl
    }
}

/// Winslow functional and its gradient with respect to the inner control
/// points (all x components, then all y components). `None` when some
/// quadrature point has `det J <= 0`.
pub fn winslow_with_gradient(map: &SplineMap, nq: usize) -> Option<(f64, Vec<f64>)> {
    let inner = map.inner_indices();
    let m = inner.len();
    let mut pos = vec![usize::MAX; map.basis.dim()];
    for (i, &k) in inner.iter().enumerate() {
        pos[k] = i;
    }
    let mut w = 0.0;
    let mut grad = vec![0.0; 2 * m];
    for ex in map.basis.xi.elements() {
        for ee in map.basis.eta.elements() {
            for (s, ws) in gauss_on(nq, ex[0], ex[1]) {
                for (t, wt) in gauss_on(nq, ee[0], ee[1]) {
                    let tab = map.basis.eval(s, t, 1).unwrap();
                    let (mut xs, mut xe) = ([0.0; 2], [0.0; 2]);
                    for (n, &k) in tab.indices.iter().enumerate() {
                        let cp = map.control_points[k];
                        for q in 0..2 {
                            xs[q] += tab.w_xi[n] * cp[q];
                            xe[q] += tab.w_eta[n] * cp[q];
                        }
                    }
                    let a = xs[0] * xs[0] + xs[1] * xs[1] + xe[0] * xe[0] + xe[1] * xe[1];
                    let j = xs[0] * xe[1] - xs[1] * xe[0];
                    if j <= 0.0 {
                        return None;
                    }
                    let wq = ws * wt;
                    w += wq * a / j;
                    for (n, &k) in tab.indices.iter().enumerate() {
                        let i = pos[k];
                        if i == usize::MAX {
                            continue;
                        }
                        let (bs, be) = (tab.w_xi[n], tab.w_eta[n]);
                        let da = [2.0 * (xs[0] * bs + xe[0] * be), 2.0 * (xs[1] * bs + xe[1] * be)];
                        let dj = [bs * xe[1] - xs[1] * be, xs[0] * be - bs * xe[0]];
                        for q in 0..2 {
                            grad[q * m + i] += wq * (da[q] / j - a * dj[q] / (j * j));
                        }
                    }
                }
            }
        }
    }
    Some((w, grad))
}

pub struct DescentResult {
    pub map: SplineMap,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm0: f64,
    pub grad_norm: f64,
}

/// Gradient descent on the Winslow functional over the inner control
/// points, boundary held fixed. Barzilai-Borwein steps with a monotone
/// Armijo backtrack; trial points that fold are rejected (the projection
/// onto the bijective set).
pub fn winslow_descent(start: &SplineMap, nq: usize, max_iter: usize, gtol: f64) -> DescentResult {
    let mut map = start.clone();
    let pack = |map: &SplineMap| {
        let pts = map.inner_points();
        let mut v: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        v.extend(pts.iter().map(|p| p[1]));
        v
    };
    let set = |map: &mut SplineMap, v: &[f64]| {
        let m = v.len() / 2;
        let pts: Vec<[f64; 2]> = (0..m).map(|i| [v[i], v[m + i]]).collect();
        map.set_inner(&pts);
    };
    let (mut f, mut g) = winslow_with_gradient(&map, nq).expect("descent must start bijective");
    let mut x = pack(&map);
    let g0 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut step = 1e-3;
    let mut it = 0;
    while it < max_iter {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= gtol * g0.max(1e-300) {
            break;
        }
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            let mut trial = map.clone();
            set(&mut trial, &xt);
            if let Some((ft, gt)) = winslow_with_gradient(&trial, nq) {
                if ft <= f - 1e-4 * alpha * gn * gn {
                    accepted = Some((xt, ft, gt, trial));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xt, ft, gt, trial)) = accepted else { break };
        let sv: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = sv.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { ss / sy } else { alpha * 2.0 };
        x = xt;
        f = ft;
        g = gt;
        map = trial;
        it += 1;
    }
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    DescentResult { map, value: f, iterations: it, grad_norm0: g0, grad_norm: gn }
}

/// L2 distance between a spline map and a closed-form map, by Gauss
/// quadrature with 8 points per element direction.
pub fn l2_error(map: &SplineMap, exact: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
    let mut err = 0.0;
    for ex in map.basis.xi.elements() {
        for ee in map.basis.eta.elements() {
            for (s, ws) in gauss_on(8, ex[0], ex[1]) {
                for (t, wt) in gauss_on(8, ee[0], ee[1]) {
                    let a = map.eval(s, t).unwrap();
                    let b = exact(s, t);
                    err += ws * wt * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
                }
            }
        }
    }
    err.sqrt()
}

//! Galerkin assembly of the mixed system.
//!
//! The auxiliary variables `u ~ x_xi` and `v ~ x_eta` live on the
//! h-refined basis. The linear part of the residual is the projection
//! `R_L = A d - B c` and the nonlinear part tests the scaled operator
//! against the inner primal functions.
//!
//! Everything is computed per patch on the reference square; an affine map
//! carries reference derivatives to parametric ones. A single patch is the
//! identity case of the same kernels.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::AssemblyError;
use crate::linalg::{BandedCholesky, CsrMatrix, KronSolver};
use crate::mapping::{chain, AffineMap, SplineMap};
use crate::quadrature::gauss_on;
use crate::splines::{BasisTable, KnotVector, TensorBasis};
use crate::Vec2;

/// Which derivatives are carried by auxiliary variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AuxMode {
    /// `u ~ x_xi` and `v ~ x_eta`.
    #[default]
    Full,
    /// Only `u ~ x_xi`; needs a C1 basis in eta.
    #[serde(rename = "xi")]
    XiOnly,
    /// Only `v ~ x_eta`; needs a C1 basis in xi.
    #[serde(rename = "eta")]
    EtaOnly,
}

impl AuxMode {
    /// Number of scalar auxiliary fields.
    pub fn blocks(self) -> usize {
        match self {
            AuxMode::Full => 4,
            AuxMode::XiOnly | AuxMode::EtaOnly => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuxMode::Full => "full",
            AuxMode::XiOnly => "xi",
            AuxMode::EtaOnly => "eta",
        }
    }
}

impl std::str::FromStr for AuxMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(AuxMode::Full),
            "xi" => Ok(AuxMode::XiOnly),
            "eta" => Ok(AuxMode::EtaOnly),
            other => Err(format!("unknown mode '{other}' (expected full, xi or eta)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedOptions {
    pub mode: AuxMode,
    /// Regularization added to `g11 + g22`.
    pub mu: f64,
    /// Share of the mixed derivative carried by `u_eta`.
    pub chi: f64,
    /// Gauss points per direction and element; `None` means `p + 1`.
    pub quad_points: Option<usize>,
}

impl Default for MixedOptions {
    fn default() -> Self {
        MixedOptions { mode: AuxMode::Full, mu: 1e-4, chi: 0.5, quad_points: None }
    }
}

impl MixedOptions {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if !(0.0..=1.0).contains(&self.chi) {
            return Err(AssemblyError::Chi(self.chi));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(AssemblyError::Mu(self.mu));
        }
        Ok(())
    }
}

/// Rejects single-direction modes on bases that are only C0 in the
/// direction without auxiliary variables.
pub fn check_continuity(basis: &TensorBasis, mode: AuxMode) -> Result<(), AssemblyError> {
    let (kv, direction) = match mode {
        AuxMode::Full => return Ok(()),
        AuxMode::XiOnly => (&basis.eta, "eta"),
        AuxMode::EtaOnly => (&basis.xi, "xi"),
    };
    let multiplicity = kv.max_interior_multiplicity();
    if multiplicity + 1 > kv.degree() {
        return Err(AssemblyError::InsufficientContinuity {
            mode: mode.name(),
            direction,
            multiplicity,
            degree: kv.degree(),
        });
    }
    Ok(())
}

/// Gauss points of one direction on the auxiliary (finest) element grid,
/// with primal and auxiliary basis tables at each point.
#[derive(Debug, Clone)]
pub struct DirectionQuadrature {
    pub elements: Vec<Range<usize>>,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub primal: Vec<BasisTable>,
    pub aux: Vec<BasisTable>,
}

impl DirectionQuadrature {
    pub fn new(primal: &KnotVector, aux: &KnotVector, n: usize) -> Self {
        let mut q = DirectionQuadrature {
            elements: Vec::new(),
            points: Vec::new(),
            weights: Vec::new(),
            primal: Vec::new(),
            aux: Vec::new(),
        };
        for e in aux.elements() {
            let mid = 0.5 * (e[0] + e[1]);
            let (sp, sa) = (primal.find_span(mid), aux.find_span(mid));
            let start = q.points.len();
            for (x, w) in gauss_on(n, e[0], e[1]) {
                q.points.push(x);
                q.weights.push(w);
                q.primal.push(primal.eval_in_span(sp, x, 2));
                q.aux.push(aux.eval_in_span(sa, x, 1));
            }
            q.elements.push(start..q.points.len());
        }
        q
    }

    /// Dense `int f_i g_j` with `f` an auxiliary function and `g` the
    /// `d_other`-th derivative of a primal or auxiliary function.
    fn gram(&self, n_aux: usize, n_other: usize, other_primal: bool, d_other: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; n_other]; n_aux];
        for q in 0..self.points.len() {
            let ta = &self.aux[q];
            let tb = if other_primal { &self.primal[q] } else { &self.aux[q] };
            for (a, va) in ta.ders[0].iter().enumerate() {
                for (b, vb) in tb.ders[d_other].iter().enumerate() {
                    m[ta.first + a][tb.first + b] += self.weights[q] * va * vb;
                }
            }
        }
        m
    }
}

/// Per-patch discretization data: bases, quadrature, constant matrices and
/// the factored auxiliary mass matrix.
#[derive(Debug, Clone)]
pub struct PatchSpace {
    pub primal: TensorBasis,
    pub aux: TensorBasis,
    pub affine: AffineMap,
    pub options: MixedOptions,
    inv: [[f64; 2]; 2],
    jac: f64,
    qx: DirectionQuadrature,
    qe: DirectionQuadrature,
    mass: CsrMatrix,
    b_xi: CsrMatrix,
    b_eta: CsrMatrix,
    solver: KronSolver,
}

impl PatchSpace {
    pub fn new(primal: TensorBasis, affine: AffineMap, options: MixedOptions) -> Result<Self, AssemblyError> {
        options.validate()?;
        check_continuity(&primal, options.mode)?;
        let (aux, _) = primal.h_refine();
        let nq = options.quad_points.unwrap_or(primal.max_degree() + 1).max(1);
        let qx = DirectionQuadrature::new(&primal.xi, &aux.xi, nq);
        let qe = DirectionQuadrature::new(&primal.eta, &aux.eta, nq);
        let (nax, nae) = (aux.n_xi(), aux.n_eta());
        let (npx, npe) = (primal.n_xi(), primal.n_eta());
        let mx = qx.gram(nax, nax, false, 0);
        let me = qe.gram(nae, nae, false, 0);
        let cx = qx.gram(nax, npx, true, 0);
        let dx = qx.gram(nax, npx, true, 1);
        let ce = qe.gram(nae, npe, true, 0);
        let de = qe.gram(nae, npe, true, 1);
        let solver = KronSolver::new(
            BandedCholesky::factor(&mx, aux.xi.degree())?,
            BandedCholesky::factor(&me, aux.eta.degree())?,
            options.mode.blocks(),
        );
        let inv = affine.inverse_matrix();
        let jac = affine.det().abs();
        let d_s = CsrMatrix::kron(&dx, &ce);
        let d_t = CsrMatrix::kron(&cx, &de);
        let b_xi = d_s.lincomb(jac * inv[0][0], &d_t, jac * inv[1][0]);
        let b_eta = d_s.lincomb(jac * inv[0][1], &d_t, jac * inv[1][1]);
        let mass = CsrMatrix::kron(&mx, &me).scaled(jac);
        Ok(PatchSpace { primal, aux, affine, options, inv, jac, qx, qe, mass, b_xi, b_eta, solver })
    }

    pub fn mode(&self) -> AuxMode {
        self.options.mode
    }

    /// Length of the auxiliary coefficient vector.
    pub fn aux_len(&self) -> usize {
        self.options.mode.blocks() * self.aux.dim()
    }

    /// `|det A|` of the affine map.
    pub fn jacobian(&self) -> f64 {
        self.jac
    }

    pub fn quadrature(&self) -> (&DirectionQuadrature, &DirectionQuadrature) {
        (&self.qx, &self.qe)
    }

    /// Auxiliary mass matrix in parametric coordinates.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Derivative projection matrices `int w_i d/dxi w_j` and
    /// `int w_i d/deta w_j` over the full primal net.
    pub fn derivative_matrices(&self) -> (&CsrMatrix, &CsrMatrix) {
        (&self.b_xi, &self.b_eta)
    }

    pub fn kron_solver(&self) -> &KronSolver {
        &self.solver
    }

    /// `(matrix, component)` pairs, one per auxiliary block.
    fn block_layout(&self) -> &'static [(bool, usize)] {
        // (uses the xi-derivative matrix, net component)
        match self.options.mode {
            AuxMode::Full => &[(true, 0), (true, 1), (false, 0), (false, 1)],
            AuxMode::XiOnly => &[(true, 0), (true, 1)],
            AuxMode::EtaOnly => &[(false, 0), (false, 1)],
        }
    }

    /// `B c` for a full net given componentwise.
    pub fn apply_b(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.aux_len());
        for &(is_xi, comp) in self.block_layout() {
            let m = if is_xi { &self.b_xi } else { &self.b_eta };
            out.extend(m.matvec(if comp == 0 { xs } else { ys }));
        }
        out
    }

    /// `R_L = A d - B c` on this patch.
    pub fn residual_linear(&self, d: &[f64], xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let n = self.aux.dim();
        let bc = self.apply_b(xs, ys);
        let mut out = Vec::with_capacity(self.aux_len());
        for (k, block) in d.chunks(n).enumerate() {
            let ad = self.mass.matvec(block);
            out.extend(ad.iter().zip(&bc[k * n..(k + 1) * n]).map(|(a, b)| a - b));
        }
        out
    }

    /// Applies the patch mass inverse blockwise.
    pub fn solve_mass(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        for block in x.chunks_mut(self.aux.dim()) {
            self.solver.solve_block_in_place(block);
        }
        for v in x.iter_mut() {
            *v /= self.jac;
        }
        x
    }

    /// L2 projection of the net derivatives onto the auxiliary basis.
    pub fn project(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        self.solve_mass(&self.apply_b(xs, ys))
    }

    /// Nonlinear residual tested against every primal function of the
    /// patch (boundary functions included), returned per component.
    pub fn residual_nonlinear(&self, d: &[f64], xs: &[f64], ys: &[f64]) -> [Vec<f64>; 2] {
        let mode = self.options.mode;
        let (mu, chi) = (self.options.mu, self.options.chi);
        let second = mode != AuxMode::Full;
        let ne_p = self.primal.n_eta();
        let ne_a = self.aux.n_eta();
        let na = self.aux.dim();
        let fields = mode.blocks() / 2;
        let inv = &self.inv;
        let mut rx = vec![0.0; self.primal.dim()];
        let mut ry = vec![0.0; self.primal.dim()];
        for rxi in &self.qx.elements {
            for reta in &self.qe.elements {
                for qa in rxi.clone() {
                    for qb in reta.clone() {
                        let w = self.qx.weights[qa] * self.qe.weights[qb] * self.jac;
                        let (px, pe) = (&self.qx.primal[qa], &self.qe.primal[qb]);
                        let mut x_s = [0.0; 2];
                        let mut x_t = [0.0; 2];
                        let mut h = [[0.0; 2]; 3]; // ss, st, tt
                        for (a, row) in (px.first..).zip(0..px.ders[0].len()) {
                            for (b, col) in (pe.first..).zip(0..pe.ders[0].len()) {
                                let k = a * ne_p + b;
                                let c = [xs[k], ys[k]];
                                let ws = px.ders[1][row] * pe.ders[0][col];
                                let wt = px.ders[0][row] * pe.ders[1][col];
                                for m in 0..2 {
                                    x_s[m] += ws * c[m];
                                    x_t[m] += wt * c[m];
                                }
                                if second {
                                    let wss = px.ders[2][row] * pe.ders[0][col];
                                    let wst = px.ders[1][row] * pe.ders[1][col];
                                    let wtt = px.ders[0][row] * pe.ders[2][col];
                                    for m in 0..2 {
                                        h[0][m] += wss * c[m];
                                        h[1][m] += wst * c[m];
                                        h[2][m] += wtt * c[m];
                                    }
                                }
                            }
                        }
                        let (x_xi, x_eta) = chain(x_s, x_t, inv);
                        let g11 = x_xi[0] * x_xi[0] + x_xi[1] * x_xi[1];
                        let g12 = x_xi[0] * x_eta[0] + x_xi[1] * x_eta[1];
                        let g22 = x_eta[0] * x_eta[0] + x_eta[1] * x_eta[1];

                        // auxiliary fields and their derivatives
                        let (ax, ae) = (&self.qx.aux[qa], &self.qe.aux[qb]);
                        let mut f_s = [[0.0; 2]; 2];
                        let mut f_t = [[0.0; 2]; 2];
                        for (a, row) in (ax.first..).zip(0..ax.ders[0].len()) {
                            for (b, col) in (ae.first..).zip(0..ae.ders[0].len()) {
                                let k = a * ne_a + b;
                                let ws = ax.ders[1][row] * ae.ders[0][col];
                                let wt = ax.ders[0][row] * ae.ders[1][col];
                                for (field, (fs, ft)) in f_s.iter_mut().zip(f_t.iter_mut()).enumerate().take(fields) {
                                    for m in 0..2 {
                                        let dk = d[(2 * field + m) * na + k];
                                        fs[m] += ws * dk;
                                        ft[m] += wt * dk;
                                    }
                                }
                            }
                        }
                        let (f0_xi, f0_eta) = chain(f_s[0], f_t[0], inv);
                        let (f1_xi, f1_eta) = chain(f_s[1], f_t[1], inv);

                        let mut num = [0.0; 2];
                        match mode {
                            AuxMode::Full => {
                                // f0 = u, f1 = v
                                for m in 0..2 {
                                    num[m] = g22 * f0_xi[m] - 2.0 * g12 * (chi * f0_eta[m] + (1.0 - chi) * f1_xi[m])
                                        + g11 * f1_eta[m];
                                }
                            }
                            AuxMode::XiOnly => {
                                let (_, x_xe, x_ee) = second_derivatives(&h, inv);
                                for m in 0..2 {
                                    num[m] = g22 * f0_xi[m] - 2.0 * g12 * (chi * f0_eta[m] + (1.0 - chi) * x_xe[m])
                                        + g11 * x_ee[m];
                                }
                            }
                            AuxMode::EtaOnly => {
                                let (x_xx, x_xe, _) = second_derivatives(&h, inv);
                                for m in 0..2 {
                                    num[m] = g22 * x_xx[m] - 2.0 * g12 * (chi * x_xe[m] + (1.0 - chi) * f0_xi[m])
                                        + g11 * f0_eta[m];
                                }
                            }
                        }
                        let scale = w / (g11 + g22 + mu);
                        let u = [num[0] * scale, num[1] * scale];
                        for (a, row) in (px.first..).zip(0..px.ders[0].len()) {
                            for (b, col) in (pe.first..).zip(0..pe.ders[0].len()) {
                                let k = a * ne_p + b;
                                let v = px.ders[0][row] * pe.ders[0][col];
                                rx[k] += v * u[0];
                                ry[k] += v * u[1];
                            }
                        }
                    }
                }
            }
        }
        [rx, ry]
    }
}

/// Parametric second derivatives `(x_xixi, x_xieta, x_etaeta)` from the
/// reference Hessian rows `[ss, st, tt]`.
fn second_derivatives(h: &[[f64; 2]; 3], inv: &[[f64; 2]; 2]) -> (Vec2, Vec2, Vec2) {
    let mut out = [[0.0; 2]; 3];
    for m in 0..2 {
        let hm = [[h[0][m], h[1][m]], [h[1][m], h[2][m]]];
        for (slot, (p, q)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += inv[a][p] * inv[b][q] * hm[a][b];
                }
            }
            out[slot][m] = s;
        }
    }
    (out[0], out[1], out[2])
}

/// Explicit constant blocks, mostly for inspection and tests.
#[derive(Debug, Clone)]
pub struct ConstantBlocks {
    /// Block-diagonal auxiliary mass matrix.
    pub a: CsrMatrix,
    /// Derivative projection columns of the inner control points, laid out
    /// as `[x components, y components]`.
    pub b: CsrMatrix,
    /// The same for the boundary control points.
    pub b_bnd: CsrMatrix,
}

/// The single-patch mixed system with its boundary data frozen.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    space: PatchSpace,
    net: Vec<Vec2>,
    inner: Vec<usize>,
    boundary: Vec<usize>,
}

impl MixedSystem {
    pub fn new(map: &SplineMap, options: &MixedOptions) -> Result<Self, AssemblyError> {
        Self::with_affine(map, AffineMap::identity(), options)
    }

    pub fn with_affine(map: &SplineMap, affine: AffineMap, options: &MixedOptions) -> Result<Self, AssemblyError> {
        let space = PatchSpace::new(map.basis.clone(), affine, *options)?;
        Ok(MixedSystem {
            space,
            net: map.control_points.clone(),
            inner: map.inner_indices().to_vec(),
            boundary: map.boundary_indices().to_vec(),
        })
    }

    pub fn space(&self) -> &PatchSpace {
        &self.space
    }

    pub fn basis(&self) -> &TensorBasis {
        &self.space.primal
    }

    pub fn aux_len(&self) -> usize {
        self.space.aux_len()
    }

    /// Length of `c`: two components per inner control point.
    pub fn inner_len(&self) -> usize {
        2 * self.inner.len()
    }

    pub fn inner_indices(&self) -> &[usize] {
        &self.inner
    }

    /// Inner control points of a map in the `c` layout.
    pub fn pack(&self, inner_points: &[Vec2]) -> Vec<f64> {
        let mut c: Vec<f64> = inner_points.iter().map(|p| p[0]).collect();
        c.extend(inner_points.iter().map(|p| p[1]));
        c
    }

    pub fn unpack(&self, c: &[f64]) -> Vec<Vec2> {
        let n = self.inner.len();
        (0..n).map(|i| [c[i], c[n + i]]).collect()
    }

    /// Full net per component with the inner entries taken from `c`.
    pub fn full_net(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut xs: Vec<f64> = self.net.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = self.net.iter().map(|p| p[1]).collect();
        let n = self.inner.len();
        for (i, &k) in self.inner.iter().enumerate() {
            xs[k] = c[i];
            ys[k] = c[n + i];
        }
        (xs, ys)
    }

    fn check(&self, d: &[f64], c: &[f64]) -> Result<(), AssemblyError> {
        if d.len() != self.aux_len() {
            return Err(AssemblyError::Dimension { expected: self.aux_len(), got: d.len() });
        }
        if c.len() != self.inner_len() {
            return Err(AssemblyError::Dimension { expected: self.inner_len(), got: c.len() });
        }
        Ok(())
    }

    pub fn eval_rl(&self, d: &[f64], c: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check(d, c)?;
        let (xs, ys) = self.full_net(c);
        Ok(self.space.residual_linear(d, &xs, &ys))
    }

    pub fn eval_rn(&self, d: &[f64], c: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check(d, c)?;
        let (xs, ys) = self.full_net(c);
        let [rx, ry] = self.space.residual_nonlinear(d, &xs, &ys);
        let mut out: Vec<f64> = self.inner.iter().map(|&k| rx[k]).collect();
        out.extend(self.inner.iter().map(|&k| ry[k]));
        Ok(out)
    }

    /// `d` with `R_L(d, c) = 0`.
    pub fn project_aux(&self, c: &[f64]) -> Vec<f64> {
        let (xs, ys) = self.full_net(c);
        self.space.project(&xs, &ys)
    }

    /// `A^{-1} B s` for a direction `s` over the inner points.
    pub fn ainv_b(&self, s: &[f64]) -> Vec<f64> {
        let n = self.space.primal.dim();
        let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
        let m = self.inner.len();
        for (i, &k) in self.inner.iter().enumerate() {
            xs[k] = s[i];
            ys[k] = s[m + i];
        }
        self.space.solve_mass(&self.space.apply_b(&xs, &ys))
    }

    /// `A^{-1} R_L(d, c)`.
    pub fn ainv_rl(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        let (xs, ys) = self.full_net(c);
        self.space.solve_mass(&self.space.residual_linear(d, &xs, &ys))
    }

    /// Assembles `A`, `B` and `B_bnd` explicitly.
    pub fn constant_blocks(&self) -> ConstantBlocks {
        let na = self.space.aux.dim();
        let blocks = self.space.mode().blocks();
        let mut a = Vec::new();
        for blk in 0..blocks {
            for i in 0..na {
                for (j, v) in self.space.mass.row(i) {
                    a.push((blk * na + i, blk * na + j, v));
                }
            }
        }
        let columns = |idx: &[usize]| {
            let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(p, &k)| (k, p)).collect();
            let mut trip = Vec::new();
            for (blk, &(is_xi, comp)) in self.space.block_layout().iter().enumerate() {
                let m = if is_xi { &self.space.b_xi } else { &self.space.b_eta };
                for i in 0..na {
                    for (j, v) in m.row(i) {
                        if let Some(&p) = pos.get(&j) {
                            trip.push((blk * na + i, comp * idx.len() + p, v));
                        }
                    }
                }
            }
            CsrMatrix::from_triplets(blocks * na, 2 * idx.len(), trip)
        };
        ConstantBlocks {
            a: CsrMatrix::from_triplets(blocks * na, blocks * na, a),
            b: columns(&self.inner),
            b_bnd: columns(&self.boundary),
        }
    }

    /// Boundary control points in the `B_bnd` column layout.
    pub fn boundary_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.boundary.iter().map(|&k| self.net[k][0]).collect();
        v.extend(self.boundary.iter().map(|&k| self.net[k][1]));
        v
    }
}

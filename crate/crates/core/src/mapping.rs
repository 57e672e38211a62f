//! The spline mapping `x(xi, eta) = sum_i c_i w_i(xi, eta)`: construction
//! from boundary contours, transfinite initial guesses, metric terms, the
//! Winslow functional and sampled bijectivity checks.

use serde::{Deserialize, Serialize};

use crate::error::MapError;
use crate::quadrature::gauss_on;
use crate::splines::TensorBasis;
use crate::Vec2;

/// Corner agreement tolerance for adjacent boundary curves.
pub const CORNER_TOL: f64 = 1e-12;

/// Faces of the unit square. South and north curves run with increasing
/// xi, west and east curves with increasing eta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::South, Side::East, Side::North, Side::West];

    pub fn name(self) -> &'static str {
        match self {
            Side::South => "south",
            Side::East => "east",
            Side::North => "north",
            Side::West => "west",
        }
    }

    /// Net indices along the face, in curve order.
    pub fn indices(self, basis: &TensorBasis) -> Vec<usize> {
        let (nx, ne) = (basis.n_xi(), basis.n_eta());
        match self {
            Side::South => (0..nx).map(|i| basis.index(i, 0)).collect(),
            Side::North => (0..nx).map(|i| basis.index(i, ne - 1)).collect(),
            Side::West => (0..ne).map(|j| basis.index(0, j)).collect(),
            Side::East => (0..ne).map(|j| basis.index(nx - 1, j)).collect(),
        }
    }

    /// Knot vector running along the face.
    pub fn knots(self, basis: &TensorBasis) -> &crate::splines::KnotVector {
        match self {
            Side::South | Side::North => &basis.xi,
            Side::West | Side::East => &basis.eta,
        }
    }

    /// Parametric point on the face at curve parameter `t`.
    pub fn point(self, t: f64) -> (f64, f64) {
        match self {
            Side::South => (t, 0.0),
            Side::North => (t, 1.0),
            Side::West => (0.0, t),
            Side::East => (1.0, t),
        }
    }
}

/// Coefficients of the four boundary curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurves {
    pub south: Vec<Vec2>,
    pub east: Vec<Vec2>,
    pub north: Vec<Vec2>,
    pub west: Vec<Vec2>,
}

impl BoundaryCurves {
    pub fn get(&self, side: Side) -> &[Vec2] {
        match side {
            Side::South => &self.south,
            Side::East => &self.east,
            Side::North => &self.north,
            Side::West => &self.west,
        }
    }

    /// Interpolates four parametric curves on the faces of `basis`.
    pub fn interpolate(basis: &TensorBasis, f: impl Fn(f64, f64) -> Vec2) -> Self {
        let on = |side: Side| {
            side.knots(basis).interpolate(|t| {
                let (xi, eta) = side.point(t);
                f(xi, eta)
            })
        };
        BoundaryCurves { south: on(Side::South), east: on(Side::East), north: on(Side::North), west: on(Side::West) }
    }
}

/// Affine map `s -> A s + b` from the unit square onto a parametric patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: [[f64; 2]; 2],
    pub offset: Vec2,
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap { matrix: [[1.0, 0.0], [0.0, 1.0]], offset: [0.0, 0.0] }
    }

    pub fn det(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse_matrix(&self) -> [[f64; 2]; 2] {
        let m = &self.matrix;
        if *self == Self::identity() {
            return m.to_owned();
        }
        let d = self.det();
        [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    }

    pub fn apply(&self, s: Vec2) -> Vec2 {
        let m = &self.matrix;
        [m[0][0] * s[0] + m[0][1] * s[1] + self.offset[0], m[1][0] * s[0] + m[1][1] * s[1] + self.offset[1]]
    }
}

/// Converts reference-square derivatives to parametric-domain derivatives:
/// `[x_xi, x_eta] = [x_s, x_t] * A^{-1}`.
#[inline]
pub fn chain(d_s: Vec2, d_t: Vec2, inv: &[[f64; 2]; 2]) -> (Vec2, Vec2) {
    (
        [d_s[0] * inv[0][0] + d_t[0] * inv[1][0], d_s[1] * inv[0][0] + d_t[1] * inv[1][0]],
        [d_s[0] * inv[0][1] + d_t[0] * inv[1][1], d_s[1] * inv[0][1] + d_t[1] * inv[1][1]],
    )
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub det_j: f64,
    pub x_xi: Vec2,
    pub x_eta: Vec2,
}

impl MetricSample {
    pub fn from_derivatives(x_xi: Vec2, x_eta: Vec2) -> Self {
        MetricSample {
            g11: x_xi[0] * x_xi[0] + x_xi[1] * x_xi[1],
            g12: x_xi[0] * x_eta[0] + x_xi[1] * x_eta[1],
            g22: x_eta[0] * x_eta[0] + x_eta[1] * x_eta[1],
            det_j: cross(x_xi, x_eta),
            x_xi,
            x_eta,
        }
    }
}

/// Control net over a tensor basis with the boundary/inner index split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineMap {
    pub basis: TensorBasis,
    pub control_points: Vec<Vec2>,
    boundary: Vec<usize>,
    inner: Vec<usize>,
}

impl SplineMap {
    /// Wraps a complete control net.
    pub fn from_net(basis: TensorBasis, control_points: Vec<Vec2>) -> Result<Self, MapError> {
        if control_points.len() != basis.dim() {
            return Err(MapError::NetSize { expected: basis.dim(), got: control_points.len() });
        }
        let boundary = basis.boundary_indices();
        let inner = basis.inner_indices();
        Ok(SplineMap { basis, control_points, boundary, inner })
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn inner_indices(&self) -> &[usize] {
        &self.inner
    }

    pub fn inner_points(&self) -> Vec<Vec2> {
        self.inner.iter().map(|&k| self.control_points[k]).collect()
    }

    /// Overwrites the inner control points (in inner-index order).
    pub fn set_inner(&mut self, pts: &[Vec2]) {
        assert_eq!(pts.len(), self.inner.len());
        for (&k, p) in self.inner.iter().zip(pts) {
            self.control_points[k] = *p;
        }
    }

    pub fn side_curve(&self, side: Side) -> Vec<Vec2> {
        side.indices(&self.basis).into_iter().map(|k| self.control_points[k]).collect()
    }

    pub fn boundary_curves(&self) -> BoundaryCurves {
        BoundaryCurves {
            south: self.side_curve(Side::South),
            east: self.side_curve(Side::East),
            north: self.side_curve(Side::North),
            west: self.side_curve(Side::West),
        }
    }

    /// Point and first derivatives at a parameter.
    pub fn eval_with_derivatives(&self, xi: f64, eta: f64) -> Result<(Vec2, Vec2, Vec2), MapError> {
        let t = self.basis.eval(xi, eta, 1)?;
        let mut x = [0.0; 2];
        let mut dx = [0.0; 2];
        let mut de = [0.0; 2];
        for (a, &k) in t.indices.iter().enumerate() {
            let c = self.control_points[k];
            for d in 0..2 {
                x[d] += t.w[a] * c[d];
                dx[d] += t.w_xi[a] * c[d];
                de[d] += t.w_eta[a] * c[d];
            }
        }
        Ok((x, dx, de))
    }

    pub fn eval(&self, xi: f64, eta: f64) -> Result<Vec2, MapError> {
        Ok(self.eval_with_derivatives(xi, eta)?.0)
    }

    pub fn metric_at(&self, xi: f64, eta: f64) -> Result<MetricSample, MapError> {
        let (_, dx, de) = self.eval_with_derivatives(xi, eta)?;
        Ok(MetricSample::from_derivatives(dx, de))
    }

    /// Metric in parametric-domain coordinates of an affinely placed patch.
    pub fn metric_at_affine(&self, s: f64, t: f64, affine: &AffineMap) -> Result<MetricSample, MapError> {
        let (_, ds, dt) = self.eval_with_derivatives(s, t)?;
        let (dx, de) = chain(ds, dt, &affine.inverse_matrix());
        Ok(MetricSample::from_derivatives(dx, de))
    }
}

/// Builds a map whose boundary rows come from the four curves; inner
/// control points start at the origin.
pub fn make_map(basis: TensorBasis, curves: &BoundaryCurves) -> Result<SplineMap, MapError> {
    for side in Side::ALL {
        let expected = side.knots(&basis).dim();
        let got = curves.get(side).len();
        if got != expected {
            return Err(MapError::CurveLength { side: side.name(), expected, got });
        }
    }
    let gap = |a: Vec2, b: Vec2| (a[0] - b[0]).hypot(a[1] - b[1]);
    let (s, e, n, w) = (&curves.south, &curves.east, &curves.north, &curves.west);
    let corners = [
        ("south-west", s[0], w[0]),
        ("south-east", s[s.len() - 1], e[0]),
        ("north-west", n[0], w[w.len() - 1]),
        ("north-east", n[n.len() - 1], e[e.len() - 1]),
    ];
    for (corner, a, b) in corners {
        let g = gap(a, b);
        if !(g <= CORNER_TOL) {
            return Err(MapError::CornerMismatch { corner, gap: g });
        }
    }
    let mut net = vec![[0.0; 2]; basis.dim()];
    // west/east first, south/north overwrite the shared corners
    for side in [Side::West, Side::East, Side::South, Side::North] {
        for (k, p) in side.indices(&basis).into_iter().zip(curves.get(side)) {
            net[k] = *p;
        }
    }
    SplineMap::from_net(basis, net)
}

/// Bilinearly blended Coons patch on the control net, evaluated at the
/// Greville abscissae. Returns the inner control points in inner order.
pub fn transfinite_initial_guess(map: &SplineMap) -> Vec<Vec2> {
    let b = &map.basis;
    let (gx, ge) = (b.xi.greville(), b.eta.greville());
    let (nx, ne) = (b.n_xi(), b.n_eta());
    let c = &map.control_points;
    let at = |i: usize, j: usize| c[b.index(i, j)];
    let (p00, p10, p01, p11) = (at(0, 0), at(nx - 1, 0), at(0, ne - 1), at(nx - 1, ne - 1));
    map.inner_indices()
        .iter()
        .map(|&k| {
            let (i, j) = b.split_index(k);
            let (s, t) = (gx[i], ge[j]);
            let (west, east, south, north) = (at(0, j), at(nx - 1, j), at(i, 0), at(i, ne - 1));
            let mut out = [0.0; 2];
            for d in 0..2 {
                out[d] = (1.0 - s) * west[d] + s * east[d] + (1.0 - t) * south[d] + t * north[d]
                    - ((1.0 - s) * (1.0 - t) * p00[d] + s * (1.0 - t) * p10[d] + (1.0 - s) * t * p01[d] + s * t * p11[d]);
            }
            out
        })
        .collect()
}

/// Inner net with its xi ordering reversed. Produces a folded map for any
/// nondegenerate geometry with at least two inner columns.
pub fn mirrored_inner(map: &SplineMap, inner: &[Vec2]) -> Vec<Vec2> {
    let b = &map.basis;
    let nx = b.n_xi();
    let pos: std::collections::HashMap<usize, usize> =
        map.inner_indices().iter().enumerate().map(|(p, &k)| (k, p)).collect();
    map.inner_indices()
        .iter()
        .map(|&k| {
            let (i, j) = b.split_index(k);
            inner[pos[&b.index(nx - 1 - i, j)]]
        })
        .collect()
}

/// Quadrature of `(g11 + g22) / det J` over the patch image in parametric
/// coordinates, using `quad_order` Gauss points per direction and element.
pub fn winslow(map: &SplineMap, quad_order: usize) -> Result<f64, MapError> {
    winslow_affine(map, &AffineMap::identity(), quad_order)
}

pub fn winslow_affine(map: &SplineMap, affine: &AffineMap, quad_order: usize) -> Result<f64, MapError> {
    let inv = affine.inverse_matrix();
    let jac = affine.det().abs();
    let mut total = 0.0;
    for ex in map.basis.xi.elements() {
        for ee in map.basis.eta.elements() {
            for (s, ws) in gauss_on(quad_order, ex[0], ex[1]) {
                for (t, wt) in gauss_on(quad_order, ee[0], ee[1]) {
                    let (_, ds, dt) = map.eval_with_derivatives(s, t)?;
                    let (dx, de) = chain(ds, dt, &inv);
                    let m = MetricSample::from_derivatives(dx, de);
                    if !(m.det_j > 0.0) {
                        return Err(MapError::NonBijective { xi: s, eta: t, det_j: m.det_j });
                    }
                    total += ws * wt * jac * (m.g11 + m.g22) / m.det_j;
                }
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLocation {
    pub element: [usize; 2],
    pub xi: f64,
    pub eta: f64,
    pub det_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BijectivityReport {
    pub min_det_j: f64,
    pub fold_count: usize,
    pub folds: Vec<FoldLocation>,
}

impl BijectivityReport {
    pub fn is_bijective(&self) -> bool {
        self.fold_count == 0
    }
}

/// Samples `det J` on a `k x k` grid of element-interior points per element.
/// Folds are listed in lexicographic element order.
pub fn sampled_bijectivity(map: &SplineMap, samples_per_element: usize) -> BijectivityReport {
    sampled_bijectivity_affine(map, &AffineMap::identity(), samples_per_element)
}

pub fn sampled_bijectivity_affine(map: &SplineMap, affine: &AffineMap, samples_per_element: usize) -> BijectivityReport {
    let k = samples_per_element.max(1);
    let inv = affine.inverse_matrix();
    let mut report = BijectivityReport { min_det_j: f64::INFINITY, fold_count: 0, folds: Vec::new() };
    let offsets: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
    for (ix, ex) in map.basis.xi.elements().iter().enumerate() {
        for (ie, ee) in map.basis.eta.elements().iter().enumerate() {
            for &a in &offsets {
                for &b in &offsets {
                    let s = ex[0] + a * (ex[1] - ex[0]);
                    let t = ee[0] + b * (ee[1] - ee[0]);
                    let (_, ds, dt) = map.eval_with_derivatives(s, t).expect("sample inside the unit square");
                    let (dx, de) = chain(ds, dt, &inv);
                    let det_j = cross(dx, de);
                    report.min_det_j = report.min_det_j.min(det_j);
                    if !(det_j > 0.0) {
                        report.fold_count += 1;
                        report.folds.push(FoldLocation { element: [ix, ie], xi: s, eta: t, det_j });
                    }
                }
            }
        }
    }
    report
}

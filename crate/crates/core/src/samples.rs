//! Generators for the bundled sample geometries.
//!
//! The L-bend, tube and bat shapes are analogs built from simple formulas;
//! they mimic the published test cases but are not the original contours.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::assembly::AuxMode;
use crate::io::{FaceCurves, GeometryFile, PatchSpec, SolverSettings, FORMAT_VERSION};
use crate::mapping::{AffineMap, BoundaryCurves, Side};
use crate::multipatch::Interface;
use crate::splines::{KnotVector, TensorBasis};
use crate::Vec2;

fn single(name: &str, basis: TensorBasis, curves: BoundaryCurves, solver: SolverSettings) -> GeometryFile {
    GeometryFile {
        format_version: FORMAT_VERSION,
        name: name.into(),
        patches: vec![PatchSpec { xi: basis.xi, eta: basis.eta, affine: None, boundary: FaceCurves::all(curves) }],
        interfaces: vec![],
        solver,
    }
}

fn uniform(p: usize, nx: usize, ny: usize) -> TensorBasis {
    TensorBasis::new(KnotVector::uniform(p, nx).expect("valid degree"), KnotVector::uniform(p, ny).expect("valid degree"))
}

/// Unit square, identity boundary.
pub fn square(p: usize, n: usize) -> GeometryFile {
    let basis = uniform(p, n, n);
    let curves = BoundaryCurves::interpolate(&basis, |x, y| [x, y]);
    single("square", basis, curves, SolverSettings::default())
}

/// Closed form of the quarter annulus with radii 1 and 2.
pub fn annulus_map(xi: f64, eta: f64) -> Vec2 {
    let r = 2f64.powf(xi);
    let t = FRAC_PI_2 * eta;
    [r * t.cos(), r * t.sin()]
}

pub fn quarter_annulus(p: usize, n: usize) -> GeometryFile {
    let basis = uniform(p, n, n);
    let curves = BoundaryCurves::interpolate(&basis, annulus_map);
    single("quarter_annulus", basis, curves, SolverSettings::default())
}

/// Knot vector of the L-bend analog in the bending direction: cubic with a
/// triple knot at the corner.
pub fn lbend_xi() -> KnotVector {
    let mut k = vec![0.0; 4];
    k.extend([0.125, 0.25, 0.375, 0.5, 0.5, 0.5, 0.625, 0.75, 0.875]);
    k.extend([1.0; 4]);
    KnotVector::new(3, k).expect("valid knots")
}

/// L-shaped channel of width 1 around the corner (1, 1), mirror symmetric
/// across the diagonal y = x.
pub fn lbend() -> GeometryFile {
    let xi = lbend_xi();
    let eta = KnotVector::uniform(3, 4).expect("valid degree");
    let basis = TensorBasis::new(xi.clone(), eta.clone());
    let outer = |t: f64| if t <= 0.5 { [0.0, 2.0 - 4.0 * t] } else { [4.0 * (t - 0.5), 0.0] };
    let inner = |t: f64| if t <= 0.5 { [1.0, 2.0 - 2.0 * t] } else { [1.0 + 2.0 * (t - 0.5), 1.0] };
    // piecewise linear curves are reproduced exactly by their Greville values
    let gx = xi.greville();
    let ge = eta.greville();
    let curves = BoundaryCurves {
        south: gx.iter().map(|&t| outer(t)).collect(),
        north: gx.iter().map(|&t| inner(t)).collect(),
        west: ge.iter().map(|&t| [t, 2.0]).collect(),
        east: ge.iter().map(|&t| [2.0, t]).collect(),
    };
    single("lbend", basis, curves, SolverSettings { mode: AuxMode::XiOnly, ..SolverSettings::default() })
}

/// Wavy channel: the walls are the same sine curve shifted by one unit.
pub fn tube() -> GeometryFile {
    let basis = uniform(3, 12, 4);
    let wall = |x: f64| 0.4 * (PI * x).sin();
    let curves = BoundaryCurves::interpolate(&basis, |s, t| {
        let x = 3.0 * s;
        [x, wall(x) + t]
    });
    single("tube", basis, curves, SolverSettings::default())
}

/// Reference directions of the three bat patches, 120 degrees apart.
fn spoke(k: usize) -> Vec2 {
    let a = 2.0 * PI * k as f64 / 3.0;
    [a.cos(), a.sin()]
}

/// Outer vertices of the bat analog in counter-clockwise order.
pub const BAT_VERTICES: [Vec2; 6] = [[3.0, 0.5], [0.4, 1.2], [-0.4, 1.2], [-3.0, 0.5], [-0.5, -1.0], [0.5, -1.0]];

/// Three patches meeting at one interior vertex of valence three. Patch
/// `i` has `n[i] x n[i+1]` cubic elements, so neighbouring patches agree
/// along their shared face.
pub fn bat(n: [usize; 3]) -> GeometryFile {
    let v = BAT_VERTICES;
    // (east start, east end, east bulge, north start, north end, north bulge)
    let faces = [
        (v[0], v[1], 0.2, v[2], v[1], -0.3),
        (v[2], v[3], 0.2, v[4], v[3], -0.25),
        (v[4], v[5], 0.15, v[0], v[5], -0.25),
    ];
    let curve = |kv: &KnotVector, a: Vec2, b: Vec2, bulge: f64| -> Vec<Vec2> {
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        let mut nrm = [d[1] / len, -d[0] / len];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if nrm[0] * mid[0] + nrm[1] * mid[1] < 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        kv.interpolate(|t| {
            if t == 1.0 {
                return b;
            }
            let h = bulge * (PI * t).sin();
            [a[0] + t * d[0] + h * nrm[0], a[1] + t * d[1] + h * nrm[1]]
        })
    };
    let mut patches = Vec::new();
    for i in 0..3 {
        let xi = KnotVector::uniform(3, n[i]).expect("valid degree");
        let eta = KnotVector::uniform(3, n[(i + 1) % 3]).expect("valid degree");
        let (e1, e2) = (spoke(i), spoke(i + 1));
        let affine = AffineMap { matrix: [[e1[0], e2[0]], [e1[1], e2[1]]], offset: [0.0, 0.0] };
        let (ea, eb, eh, na, nb, nh) = faces[i];
        let mut boundary = FaceCurves::default();
        boundary.set(Side::East, curve(&eta, ea, eb, eh));
        boundary.set(Side::North, curve(&xi, na, nb, nh));
        patches.push(PatchSpec { xi, eta, affine: Some(affine), boundary });
    }
    let interfaces = (0..3)
        .map(|i| Interface { patch_a: i, face_a: Side::West, patch_b: (i + 1) % 3, face_b: Side::South, reversed: false })
        .collect();
    GeometryFile { format_version: FORMAT_VERSION, name: "bat".into(), patches, interfaces, solver: SolverSettings::default() }
}

/// The bundled sample set as `(file stem, geometry)`.
pub fn bundled() -> Vec<(&'static str, GeometryFile)> {
    vec![
        ("square", square(2, 4)),
        ("quarter_annulus", quarter_annulus(3, 8)),
        ("lbend", lbend()),
        ("tube", tube()),
        ("bat", bat([10, 11, 12])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::check_geometry;

    #[test]
    fn bundled_geometries_pass_checks() {
        for (name, g) in bundled() {
            let r = check_geometry(&g);
            assert!(r.is_ok(), "{name}: {:?}", r.errors);
        }
    }

    #[test]
    fn lbend_is_mirror_symmetric() {
        let g = lbend();
        let b = &g.patches[0].boundary;
        let south = b.south.as_ref().unwrap();
        let n = south.len();
        for i in 0..n {
            let (a, m) = (south[i], south[n - 1 - i]);
            assert!((a[0] - m[1]).abs() < 1e-15 && (a[1] - m[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn bat_faces_meet_at_vertices() {
        let g = bat([3, 4, 5]);
        for (i, p) in g.patches.iter().enumerate() {
            let east = p.boundary.east.as_ref().unwrap();
            let north = p.boundary.north.as_ref().unwrap();
            assert_eq!(east.last(), north.last(), "patch {i}");
        }
    }
}

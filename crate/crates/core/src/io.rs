//! Geometry and solution files, solve orchestration and mesh export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AuxMode, MixedOptions, MixedSystem};
use crate::error::{MapError, SolveError, TopologyError};
use crate::linalg::GmresOptions;
use crate::mapping::{
    make_map, mirrored_inner, sampled_bijectivity_affine, transfinite_initial_guess, winslow_affine, AffineMap,
    BijectivityReport, BoundaryCurves, Side, SplineMap,
};
use crate::multipatch::{
    boundary_net, build_topology, initial_net, multipatch_solve, Interface, MultipatchInitial, MultipatchSystem,
    PatchDesc, PatchTopology,
};
use crate::solver::{solve_map, MixedProblem, SolverConfig, SolverReport};
use crate::splines::{KnotVector, TensorBasis};
use crate::Vec2;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("invalid JSON at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Boundary curve coefficients for the un-glued faces of a patch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceCurves {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub south: Option<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub east: Option<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub north: Option<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub west: Option<Vec<Vec2>>,
}

impl FaceCurves {
    pub fn get(&self, side: Side) -> Option<&Vec<Vec2>> {
        match side {
            Side::South => self.south.as_ref(),
            Side::East => self.east.as_ref(),
            Side::North => self.north.as_ref(),
            Side::West => self.west.as_ref(),
        }
    }

    pub fn set(&mut self, side: Side, curve: Vec<Vec2>) {
        let slot = match side {
            Side::South => &mut self.south,
            Side::East => &mut self.east,
            Side::North => &mut self.north,
            Side::West => &mut self.west,
        };
        *slot = Some(curve);
    }

    pub fn all(curves: BoundaryCurves) -> Self {
        FaceCurves { south: Some(curves.south), east: Some(curves.east), north: Some(curves.north), west: Some(curves.west) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub xi: KnotVector,
    pub eta: KnotVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineMap>,
    pub boundary: FaceCurves,
}

/// Solver parameters as stored in files. Everything has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub mode: AuxMode,
    pub mu: f64,
    pub chi: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub coarse_levels: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_points: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let m = MixedOptions::default();
        let c = SolverConfig::default();
        SolverSettings {
            mode: m.mode,
            mu: m.mu,
            chi: m.chi,
            newton_tol: c.newton_tol,
            max_newton: c.max_newton,
            coarse_levels: c.coarse_levels,
            gmres_tol: c.gmres.tol,
            gmres_restart: c.gmres.restart,
            gmres_max_iter: c.gmres.max_iter,
            quad_points: None,
        }
    }
}

impl SolverSettings {
    pub fn mixed_options(&self) -> MixedOptions {
        MixedOptions { mode: self.mode, mu: self.mu, chi: self.chi, quad_points: self.quad_points }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            newton_tol: self.newton_tol,
            max_newton: self.max_newton,
            coarse_levels: self.coarse_levels,
            gmres: GmresOptions { tol: self.gmres_tol, restart: self.gmres_restart, max_iter: self.gmres_max_iter },
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    pub patches: Vec<PatchSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interfaces: Vec<Interface>,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let pointer = if path == "." {
            "/".to_string()
        } else {
            // serde_path_to_error uses `a.b[0]`; convert to a JSON pointer
            let mut p = String::new();
            for seg in path.split('.') {
                for part in seg.split('[') {
                    let part = part.trim_end_matches(']');
                    if !part.is_empty() {
                        p.push('/');
                        p.push_str(part);
                    }
                }
            }
            p
        };
        IoError::Schema { pointer, message: e.into_inner().to_string() }
    })
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read { path: path.into(), source })
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let err = |source| IoError::Write { path: path.into(), source };
    std::fs::write(&tmp, contents).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        err(e)
    })
}

impl GeometryFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let g: GeometryFile = parse_json(text)?;
        if g.format_version != FORMAT_VERSION {
            return Err(IoError::Version(g.format_version));
        }
        if g.patches.is_empty() {
            return Err(IoError::Schema { pointer: "/patches".into(), message: "at least one patch is required".into() });
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("geometry serializes") + "\n"
    }

    /// Single patch placed by the identity map.
    pub fn is_plain_single_patch(&self) -> bool {
        self.patches.len() == 1
            && self.interfaces.is_empty()
            && self.patches[0].affine.is_none_or(|a| a == AffineMap::identity())
    }

    pub fn topology(&self) -> Result<PatchTopology, TopologyError> {
        let patches = self
            .patches
            .iter()
            .map(|p| PatchDesc { basis: TensorBasis::new(p.xi.clone(), p.eta.clone()), affine: p.affine.unwrap_or_default() })
            .collect();
        build_topology(patches, self.interfaces.clone())
    }

    /// Boundary data scattered into the global net; complains about curves
    /// on glued faces and missing curves on free faces.
    pub fn boundary(&self, topology: &PatchTopology) -> Result<Vec<Vec2>, TopologyError> {
        let mut faces = Vec::new();
        for (p, ps) in self.patches.iter().enumerate() {
            for side in Side::ALL {
                if let Some(curve) = ps.boundary.get(side) {
                    faces.push((p, side, curve.clone()));
                }
            }
        }
        boundary_net(topology, &faces)
    }

    /// The single-patch map with boundary rows set and the inner rows at the
    /// origin.
    pub fn single_map(&self) -> Result<SplineMap, IoError> {
        let ps = &self.patches[0];
        let basis = TensorBasis::new(ps.xi.clone(), ps.eta.clone());
        let mut curves = BoundaryCurves { south: vec![], east: vec![], north: vec![], west: vec![] };
        for side in Side::ALL {
            let c = ps.boundary.get(side).ok_or(TopologyError::MissingBoundary { patch: 0, face: side.name() })?;
            match side {
                Side::South => curves.south = c.clone(),
                Side::East => curves.east = c.clone(),
                Side::North => curves.north = c.clone(),
                Side::West => curves.west = c.clone(),
            }
        }
        Ok(make_map(basis, &curves)?)
    }
}

/// Findings of a geometry check.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Validates a geometry file on disk without solving.
pub fn check_file(path: &Path) -> CheckReport {
    match GeometryFile::load(path) {
        Ok(g) => check_geometry(&g),
        Err(e) => CheckReport { errors: vec![e.to_string()], warnings: vec![] },
    }
}

pub fn check_geometry(g: &GeometryFile) -> CheckReport {
    let mut report = CheckReport::default();
    let opts = g.solver.mixed_options();
    if let Err(e) = opts.validate() {
        report.errors.push(e.to_string());
    }
    if let Err(e) = g.solver.solver_config().validate() {
        report.errors.push(e.to_string());
    }
    if !g.is_plain_single_patch() && g.solver.coarse_levels > 0 {
        report.errors.push("coarse levels are only available for single-patch problems".into());
    }
    if g.patches.len() > 1 && g.solver.mode != AuxMode::Full {
        report.errors.push("single-direction modes are only available for single-patch problems".into());
    }
    match g.topology() {
        Err(e) => report.errors.push(e.to_string()),
        Ok(topo) => {
            if g.is_plain_single_patch() {
                if let Err(e) = g.single_map() {
                    report.errors.push(e.to_string());
                }
            } else if let Err(e) = g.boundary(&topo) {
                report.errors.push(e.to_string());
            }
            for (p, ps) in g.patches.iter().enumerate() {
                if let Err(e) = crate::assembly::check_continuity(&TensorBasis::new(ps.xi.clone(), ps.eta.clone()), g.solver.mode) {
                    report.errors.push(format!("patch {p}: {e}"));
                }
            }
            if let Some(w) = topo.convexity_warning() {
                report.warnings.push(w);
            }
        }
    }
    report
}

/// Initial guess for `solve`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Transfinite,
    Folded,
    /// Inner control points taken from a solution file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedPatch {
    pub xi: KnotVector,
    pub eta: KnotVector,
    pub affine: AffineMap,
    pub control_points: Vec<Vec2>,
}

impl SolvedPatch {
    pub fn map(&self) -> Result<SplineMap, MapError> {
        SplineMap::from_net(TensorBasis::new(self.xi.clone(), self.eta.clone()), self.control_points.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchQuality {
    pub winslow: Option<f64>,
    pub min_det_j: f64,
    pub fold_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    /// Sum over patches; absent when some patch folds.
    pub winslow: Option<f64>,
    pub min_det_j: f64,
    pub fold_count: usize,
    pub patches: Vec<PatchQuality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub timestamp: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format_version: u32,
    pub name: String,
    pub patches: Vec<SolvedPatch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interfaces: Vec<Interface>,
    pub solver: SolverSettings,
    pub report: SolverReport,
    pub quality: Quality,
    /// Excluded from reproducibility comparisons.
    pub timing: Timing,
}

/// Samples per element used for quality checks.
pub const QUALITY_SAMPLES: usize = 5;

pub fn quality_of(patches: &[SolvedPatch], quad_points: Option<usize>) -> Result<Quality, MapError> {
    let mut out = Quality { winslow: Some(0.0), min_det_j: f64::INFINITY, fold_count: 0, patches: Vec::new() };
    for p in patches {
        let map = p.map()?;
        let nq = quad_points.unwrap_or(map.basis.max_degree() + 1);
        let bij: BijectivityReport = sampled_bijectivity_affine(&map, &p.affine, QUALITY_SAMPLES);
        let w = winslow_affine(&map, &p.affine, nq).ok();
        out.winslow = match (out.winslow, w) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        out.min_det_j = out.min_det_j.min(bij.min_det_j);
        out.fold_count += bij.fold_count;
        out.patches.push(PatchQuality { winslow: w, min_det_j: bij.min_det_j, fold_count: bij.fold_count });
    }
    Ok(out)
}

impl SolutionFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let s: SolutionFile = parse_json(text)?;
        if s.format_version != FORMAT_VERSION {
            return Err(IoError::Version(s.format_version));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    /// The geometry this solution was computed for.
    pub fn geometry(&self) -> GeometryFile {
        let topo_glued = |p: usize, side: Side| {
            self.interfaces.iter().any(|i| (i.patch_a == p && i.face_a == side) || (i.patch_b == p && i.face_b == side))
        };
        let patches = self
            .patches
            .iter()
            .enumerate()
            .map(|(p, sp)| {
                let basis = TensorBasis::new(sp.xi.clone(), sp.eta.clone());
                let mut boundary = FaceCurves::default();
                for side in Side::ALL {
                    if !topo_glued(p, side) {
                        boundary.set(side, side.indices(&basis).into_iter().map(|k| sp.control_points[k]).collect());
                    }
                }
                let affine = (sp.affine != AffineMap::identity()).then_some(sp.affine);
                PatchSpec { xi: sp.xi.clone(), eta: sp.eta.clone(), affine, boundary }
            })
            .collect();
        GeometryFile {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            patches,
            interfaces: self.interfaces.clone(),
            solver: self.solver.clone(),
        }
    }

    /// Re-evaluates `||R||` for the stored control points with the
    /// auxiliary variables projected from them.
    pub fn residual_norm(&self) -> Result<f64, IoError> {
        let g = self.geometry();
        let opts = self.solver.mixed_options();
        if g.is_plain_single_patch() {
            let map = self.patches[0].map()?;
            let sys = MixedSystem::new(&map, &opts).map_err(SolveError::from)?;
            Ok(state_norm(&sys, &sys.pack(&map.inner_points())))
        } else {
            let topo = g.topology()?;
            let net = global_from_patches(&topo, &self.patches);
            let sys = MultipatchSystem::new(topo, net.clone(), &opts)?;
            Ok(state_norm(&sys, &sys.pack(&net)))
        }
    }
}

fn state_norm<P: MixedProblem>(p: &P, c: &[f64]) -> f64 {
    let d = p.project_aux(c);
    let rl = p.residual_linear(&d, c);
    let rn = p.residual_nonlinear(&d, c);
    (crate::linalg::norm(&rl).powi(2) + crate::linalg::norm(&rn).powi(2)).sqrt()
}

fn global_from_patches(topo: &PatchTopology, patches: &[SolvedPatch]) -> Vec<Vec2> {
    let mut net = vec![[0.0; 2]; topo.primal.global_len];
    for (p, sp) in patches.iter().enumerate() {
        for (k, &g) in topo.primal.local_to_global[p].iter().enumerate() {
            net[g] = sp.control_points[k];
        }
    }
    net
}

/// Runs a solve for a geometry. Non-convergence is reported through
/// `report.converged`, not as an error. `verbose` prints one JSON line per
/// Newton iteration to stderr.
pub fn solve_geometry(g: &GeometryFile, initial: &InitialGuess, verbose: bool) -> Result<SolutionFile, IoError> {
    let start = std::time::Instant::now();
    let opts = g.solver.mixed_options();
    let config = SolverConfig { verbose, ..g.solver.solver_config() };
    opts.validate().map_err(SolveError::from)?;
    config.validate()?;
    let from_file = match initial {
        InitialGuess::File(path) => Some(SolutionFile::load(path)?),
        _ => None,
    };
    let (patches, report) = if g.is_plain_single_patch() {
        let mut map = g.single_map()?;
        let mut inner = transfinite_initial_guess(&map);
        match initial {
            InitialGuess::Transfinite => {}
            InitialGuess::Folded => inner = mirrored_inner(&map, &inner),
            InitialGuess::File(_) => {
                let s = from_file.as_ref().unwrap();
                let net = &s.patches.first().ok_or_else(|| IoError::Invalid("initial file has no patches".into()))?.control_points;
                if s.patches.len() != 1 || net.len() != map.basis.dim() {
                    return Err(IoError::Invalid("initial file does not match the geometry".into()));
                }
                inner = map.inner_indices().iter().map(|&k| net[k]).collect();
            }
        }
        map.set_inner(&inner);
        let report = solve_map(&mut map, &opts, &config)?;
        let patch = SolvedPatch {
            xi: map.basis.xi.clone(),
            eta: map.basis.eta.clone(),
            affine: AffineMap::identity(),
            control_points: map.control_points,
        };
        (vec![patch], report)
    } else {
        let topo = g.topology()?;
        let bnd = g.boundary(&topo)?;
        let init = match initial {
            InitialGuess::Transfinite => initial_net(&topo, &bnd, MultipatchInitial::Transfinite),
            InitialGuess::Folded => initial_net(&topo, &bnd, MultipatchInitial::Folded),
            InitialGuess::File(_) => {
                let s = from_file.as_ref().unwrap();
                let shapes_match = s.patches.len() == topo.num_patches()
                    && s.patches.iter().zip(&topo.patches).all(|(a, b)| a.control_points.len() == b.basis.dim());
                if !shapes_match {
                    return Err(IoError::Invalid("initial file does not match the geometry".into()));
                }
                let mut net = global_from_patches(&topo, &s.patches);
                for (g, v) in net.iter_mut().enumerate() {
                    if topo.is_boundary[g] {
                        *v = bnd[g];
                    }
                }
                net
            }
        };
        let sol = multipatch_solve(topo.clone(), init, &opts, &config)?;
        let patches = topo
            .patches
            .iter()
            .zip(sol.patch_nets)
            .map(|(p, net)| SolvedPatch { xi: p.basis.xi.clone(), eta: p.basis.eta.clone(), affine: p.affine, control_points: net })
            .collect();
        (patches, sol.report)
    };
    let quality = quality_of(&patches, opts.quad_points)?;
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(SolutionFile {
        format_version: FORMAT_VERSION,
        name: g.name.clone(),
        patches,
        interfaces: g.interfaces.clone(),
        solver: g.solver.clone(),
        report,
        quality,
        timing: Timing { timestamp, wall_seconds: start.elapsed().as_secs_f64() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Vtk,
    Svg,
    Csv,
}

impl std::str::FromStr for SampleFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vtk" => Ok(SampleFormat::Vtk),
            "svg" => Ok(SampleFormat::Svg),
            "csv" => Ok(SampleFormat::Csv),
            other => Err(format!("unknown format '{other}' (expected vtk, svg or csv)")),
        }
    }
}

/// Parameter values with `res` subdivisions per element.
fn sample_params(kv: &KnotVector, res: usize) -> Vec<f64> {
    let res = res.max(1);
    let mut out = vec![0.0];
    for e in kv.elements() {
        for k in 1..=res {
            out.push(if k == res { e[1] } else { e[0] + (e[1] - e[0]) * k as f64 / res as f64 });
        }
    }
    out
}

/// Mapped point and `det J` on the sampling grid of one patch.
pub struct PatchGrid {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// Row-major with `t` running fastest.
    pub points: Vec<Vec2>,
    pub det_j: Vec<f64>,
}

pub fn sample_patch(p: &SolvedPatch, res: usize) -> Result<PatchGrid, MapError> {
    let map = p.map()?;
    let s = sample_params(&map.basis.xi, res);
    let t = sample_params(&map.basis.eta, res);
    let mut points = Vec::with_capacity(s.len() * t.len());
    let mut det_j = Vec::with_capacity(s.len() * t.len());
    for &a in &s {
        for &b in &t {
            let m = map.metric_at_affine(a, b, &p.affine)?;
            points.push(map.eval(a, b)?);
            det_j.push(m.det_j);
        }
    }
    Ok(PatchGrid { s, t, points, det_j })
}

fn num(v: f64) -> String {
    let s = format!("{v:.9}");
    if s == "-0.000000000" {
        "0.000000000".into()
    } else {
        s
    }
}

pub fn sample_csv(sol: &SolutionFile, res: usize) -> Result<String, MapError> {
    let mut out = String::from("patch,i,j,xi,eta,x,y,detJ\n");
    for (pi, p) in sol.patches.iter().enumerate() {
        let g = sample_patch(p, res)?;
        for (i, a) in g.s.iter().enumerate() {
            for (j, b) in g.t.iter().enumerate() {
                let k = i * g.t.len() + j;
                let _ = writeln!(
                    out,
                    "{pi},{i},{j},{},{},{},{},{}",
                    num(*a),
                    num(*b),
                    num(g.points[k][0]),
                    num(g.points[k][1]),
                    num(g.det_j[k])
                );
            }
        }
    }
    Ok(out)
}

/// Legacy VTK structured grids, one per patch.
pub fn sample_vtk(sol: &SolutionFile, res: usize) -> Result<Vec<String>, MapError> {
    let mut files = Vec::new();
    for (pi, p) in sol.patches.iter().enumerate() {
        let g = sample_patch(p, res)?;
        let (ns, nt) = (g.s.len(), g.t.len());
        let mut out = String::new();
        let _ = writeln!(out, "# vtk DataFile Version 3.0");
        let _ = writeln!(out, "{} patch {pi}", if sol.name.is_empty() { "mixgrid" } else { &sol.name });
        let _ = writeln!(out, "ASCII\nDATASET STRUCTURED_GRID\nDIMENSIONS {ns} {nt} 1\nPOINTS {} double", ns * nt);
        // VTK wants the first index fastest
        for j in 0..nt {
            for i in 0..ns {
                let q = g.points[i * nt + j];
                let _ = writeln!(out, "{} {} 0", num(q[0]), num(q[1]));
            }
        }
        let _ = writeln!(out, "POINT_DATA {}\nSCALARS detJ double 1\nLOOKUP_TABLE default", ns * nt);
        for j in 0..nt {
            for i in 0..ns {
                let _ = writeln!(out, "{}", num(g.det_j[i * nt + j]));
            }
        }
        files.push(out);
    }
    Ok(files)
}

/// Isolines of the element boundaries, `res` segments per element.
pub fn sample_svg(sol: &SolutionFile, res: usize) -> Result<String, MapError> {
    let mut paths = Vec::new();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (pi, p) in sol.patches.iter().enumerate() {
        let map = p.map()?;
        let xs = sample_params(&map.basis.xi, res);
        let ts = sample_params(&map.basis.eta, res);
        let lines_xi: Vec<f64> = map.basis.xi.breakpoints().iter().map(|b| b.0).collect();
        let lines_eta: Vec<f64> = map.basis.eta.breakpoints().iter().map(|b| b.0).collect();
        let mut curves: Vec<(String, Vec<Vec2>)> = Vec::new();
        for (k, &a) in lines_xi.iter().enumerate() {
            curves.push((format!("p{pi}-xi{k}"), ts.iter().map(|&b| map.eval(a, b)).collect::<Result<_, _>>()?));
        }
        for (k, &b) in lines_eta.iter().enumerate() {
            curves.push((format!("p{pi}-eta{k}"), xs.iter().map(|&a| map.eval(a, b)).collect::<Result<_, _>>()?));
        }
        for (id, pts) in curves {
            for q in &pts {
                for m in 0..2 {
                    lo[m] = lo[m].min(q[m]);
                    hi[m] = hi[m].max(q[m]);
                }
            }
            let d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, q)| format!("{}{} {}", if i == 0 { "M" } else { "L" }, num(q[0]), num(q[1])))
                .collect();
            paths.push(format!("    <path id=\"{id}\" d=\"{}\"/>", d.join(" ")));
        }
    }
    let pad = 0.02 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let (w, h) = (hi[0] - lo[0] + 2.0 * pad, hi[1] - lo[1] + 2.0 * pad);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">",
        num(lo[0] - pad),
        num(-(hi[1] + pad)),
        num(w),
        num(h)
    );
    let _ = writeln!(
        out,
        "  <g transform=\"scale(1,-1)\" fill=\"none\" stroke=\"black\" stroke-width=\"{}\">",
        num(0.002 * w.max(h))
    );
    for p in paths {
        out.push_str(&p);
        out.push('\n');
    }
    out.push_str("  </g>\n</svg>\n");
    Ok(out)
}

/// Writes a sampled mesh. VTK output for several patches goes to one file
/// per patch named `<stem>_p<k>.vtk`. Returns the files written.
pub fn write_samples(sol: &SolutionFile, format: SampleFormat, res: usize, path: &Path) -> Result<Vec<PathBuf>, IoError> {
    let files: Vec<(PathBuf, String)> = match format {
        SampleFormat::Csv => vec![(path.to_path_buf(), sample_csv(sol, res)?)],
        SampleFormat::Svg => vec![(path.to_path_buf(), sample_svg(sol, res)?)],
        SampleFormat::Vtk => {
            let grids = sample_vtk(sol, res)?;
            if grids.len() == 1 {
                vec![(path.to_path_buf(), grids.into_iter().next().unwrap())]
            } else {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                grids.into_iter().enumerate().map(|(k, g)| (path.with_file_name(format!("{stem}_p{k}.vtk")), g)).collect()
            }
        }
    };
    let mut written = Vec::new();
    for (p, text) in files {
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

/// Text report for `quality`.
pub fn quality_text(sol: &SolutionFile) -> Result<String, MapError> {
    let mut out = String::new();
    let mut folds: BTreeMap<usize, BijectivityReport> = BTreeMap::new();
    let mut winslow = Some(0.0);
    let mut min_det = f64::INFINITY;
    for (pi, p) in sol.patches.iter().enumerate() {
        let map = p.map()?;
        let nq = sol.solver.quad_points.unwrap_or(map.basis.max_degree() + 1);
        let w = winslow_affine(&map, &p.affine, nq).ok();
        winslow = winslow.zip(w).map(|(a, b)| a + b);
        let r = sampled_bijectivity_affine(&map, &p.affine, QUALITY_SAMPLES);
        min_det = min_det.min(r.min_det_j);
        folds.insert(pi, r);
    }
    match winslow {
        Some(w) => {
            let _ = writeln!(out, "winslow: {w:.12}");
        }
        None => out.push_str("winslow: nonbijective\n"),
    }
    let total: usize = folds.values().map(|r| r.fold_count).sum();
    let _ = writeln!(out, "min_det_j: {min_det:.12e}");
    let _ = writeln!(out, "folds: {total}");
    for (pi, r) in folds {
        for f in r.folds {
            let _ = writeln!(
                out,
                "fold: patch {pi} element ({}, {}) at ({:.6}, {:.6}) det_j {:.6e}",
                f.element[0], f.element[1], f.xi, f.eta, f.det_j
            );
        }
    }
    Ok(out)
}

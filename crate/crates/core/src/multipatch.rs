//! Multipatch parameterizations.
//!
//! Every patch is the image of the unit square under an affine map into the
//! parametric domain. Control points on glued faces are shared, so the
//! primal and auxiliary bases are single valued (C0) across interfaces.
//! Integrals are pulled back patchwise. Auxiliary solves are done per patch
//! on the discontinuous union and merged by a det-weighted average.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::assembly::{AuxMode, MixedOptions, PatchSpace};
use crate::error::{AssemblyError, SolveError, TopologyError};
use crate::linalg::{pcg, CsrMatrix, DenseLu};
use crate::mapping::{transfinite_initial_guess, AffineMap, SplineMap};
use crate::mapping::{Side, CORNER_TOL};
use crate::solver::{newton_solve, MixedProblem, SolverConfig, SolverReport};
use crate::splines::{KnotVector, TensorBasis};
use crate::Vec2;

/// One patch: its primal basis and its placement in the parametric domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDesc {
    pub basis: TensorBasis,
    #[serde(default)]
    pub affine: AffineMap,
}

/// Two faces glued together. With `reversed` the faces run in opposite
/// directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub patch_a: usize,
    pub face_a: Side,
    pub patch_b: usize,
    pub face_b: Side,
    #[serde(default)]
    pub reversed: bool,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller root so numbering does not depend on input order
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
    }
}

fn reversed_knots(kv: &KnotVector) -> Vec<f64> {
    kv.knots().iter().rev().map(|t| 1.0 - t).collect()
}

fn knots_match(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Local-to-global numbering for one family of bases.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub local_to_global: Vec<Vec<usize>>,
    pub global_len: usize,
    /// `(patch, local)` copies of every global DOF, in patch order.
    pub contributors: Vec<Vec<(usize, usize)>>,
}

impl DofMap {
    fn build(bases: &[TensorBasis], interfaces: &[Interface]) -> Self {
        let offsets: Vec<usize> = bases
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.dim();
                Some(o)
            })
            .collect();
        let total: usize = bases.iter().map(|b| b.dim()).sum();
        let mut parent: Vec<usize> = (0..total).collect();
        for itf in interfaces {
            let fa = itf.face_a.indices(&bases[itf.patch_a]);
            let mut fb = itf.face_b.indices(&bases[itf.patch_b]);
            if itf.reversed {
                fb.reverse();
            }
            for (a, b) in fa.into_iter().zip(fb) {
                union(&mut parent, offsets[itf.patch_a] + a, offsets[itf.patch_b] + b);
            }
        }
        let mut ids: HashMap<usize, usize> = HashMap::new();
        let mut local_to_global = Vec::with_capacity(bases.len());
        let mut contributors: Vec<Vec<(usize, usize)>> = Vec::new();
        for (p, b) in bases.iter().enumerate() {
            let mut l2g = Vec::with_capacity(b.dim());
            for k in 0..b.dim() {
                let root = find(&mut parent, offsets[p] + k);
                let next = ids.len();
                let g = *ids.entry(root).or_insert(next);
                if g == contributors.len() {
                    contributors.push(Vec::new());
                }
                contributors[g].push((p, k));
                l2g.push(g);
            }
            local_to_global.push(l2g);
        }
        DofMap { local_to_global, global_len: contributors.len(), contributors }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchTopology {
    pub patches: Vec<PatchDesc>,
    pub interfaces: Vec<Interface>,
    pub primal: DofMap,
    pub aux: DofMap,
    /// Faces of each patch (in `Side::ALL` order) that are glued.
    pub glued: Vec<[bool; 4]>,
    /// Per global primal DOF: lies on an un-glued face.
    pub is_boundary: Vec<bool>,
    /// Global primal ids of the inner DOFs, ascending.
    pub inner: Vec<usize>,
}

fn side_slot(side: Side) -> usize {
    Side::ALL.iter().position(|&s| s == side).unwrap()
}

/// Validates the gluing and numbers the coupled degrees of freedom.
pub fn build_topology(patches: Vec<PatchDesc>, interfaces: Vec<Interface>) -> Result<PatchTopology, TopologyError> {
    let n = patches.len();
    if n == 0 {
        return Err(TopologyError::Disconnected);
    }
    for (i, p) in patches.iter().enumerate() {
        let det = p.affine.det();
        if !(det.abs() > 1e-14 && det.is_finite()) {
            return Err(TopologyError::SingularAffine(i));
        }
    }
    let mut glued = vec![[false; 4]; n];
    let mut parent: Vec<usize> = (0..n).collect();
    for (index, itf) in interfaces.iter().enumerate() {
        for p in [itf.patch_a, itf.patch_b] {
            if p >= n {
                return Err(TopologyError::PatchIndex(p));
            }
        }
        if itf.patch_a == itf.patch_b && itf.face_a == itf.face_b {
            return Err(TopologyError::SelfGluing { index });
        }
        for (p, f) in [(itf.patch_a, itf.face_a), (itf.patch_b, itf.face_b)] {
            let slot = &mut glued[p][side_slot(f)];
            if *slot {
                return Err(TopologyError::DuplicateGluing { patch: p, face: f.name() });
            }
            *slot = true;
        }
        let ka = itf.face_a.knots(&patches[itf.patch_a].basis);
        let kb = itf.face_b.knots(&patches[itf.patch_b].basis);
        let kb_oriented = if itf.reversed { reversed_knots(kb) } else { kb.knots().to_vec() };
        if ka.degree() != kb.degree() || !knots_match(ka.knots(), &kb_oriented) {
            return Err(TopologyError::KnotMismatch { index });
        }
        union(&mut parent, itf.patch_a, itf.patch_b);
    }
    let root = find(&mut parent, 0);
    if (1..n).any(|p| find(&mut parent, p) != root) {
        return Err(TopologyError::Disconnected);
    }
    let bases: Vec<TensorBasis> = patches.iter().map(|p| p.basis.clone()).collect();
    let aux_bases: Vec<TensorBasis> = bases.iter().map(|b| b.h_refine().0).collect();
    let primal = DofMap::build(&bases, &interfaces);
    let aux = DofMap::build(&aux_bases, &interfaces);
    let mut is_boundary = vec![false; primal.global_len];
    for (p, b) in bases.iter().enumerate() {
        for side in Side::ALL {
            if !glued[p][side_slot(side)] {
                for k in side.indices(b) {
                    is_boundary[primal.local_to_global[p][k]] = true;
                }
            }
        }
    }
    let inner = (0..primal.global_len).filter(|&g| !is_boundary[g]).collect();
    Ok(PatchTopology { patches, interfaces, primal, aux, glued, is_boundary, inner })
}

impl PatchTopology {
    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn is_glued(&self, patch: usize, side: Side) -> bool {
        self.glued[patch][side_slot(side)]
    }

    /// Un-glued faces, patch by patch.
    pub fn boundary_faces(&self) -> Vec<(usize, Side)> {
        (0..self.num_patches())
            .flat_map(|p| Side::ALL.into_iter().filter(move |&s| !self.glued[p][side_slot(s)]).map(move |s| (p, s)))
            .collect()
    }

    /// Image of a reference corner of a patch in the parametric domain.
    pub fn corner(&self, patch: usize, s: f64, t: f64) -> Vec2 {
        self.patches[patch].affine.apply([s, t])
    }

    /// True when the convex hull of the patch corners has more area than the
    /// patches themselves, meaning the parametric domain is not convex.
    pub fn convexity_warning(&self) -> Option<String> {
        let mut pts = Vec::new();
        for p in 0..self.num_patches() {
            for (s, t) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
                pts.push(self.corner(p, s, t));
            }
        }
        let hull = convex_hull_area(&pts);
        let area: f64 = self.patches.iter().map(|p| p.affine.det().abs()).sum();
        (hull > area * (1.0 + 1e-9) + 1e-12).then(|| {
            format!(
                "parametric domain is not convex (hull area {hull:.6}, patch area {area:.6}); bijectivity of the solution is not guaranteed"
            )
        })
    }
}

fn convex_hull_area(points: &[Vec2]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<Vec2> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| crate::mapping::cross(hull[i], hull[(i + 1) % n])).sum::<f64>().abs() * 0.5
}

/// Weighted average of patchwise auxiliary coefficients onto the coupled
/// auxiliary basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionOperator {
    /// Per global auxiliary DOF: `(patch, local, weight)`.
    pub entries: Vec<Vec<(usize, usize, f64)>>,
}

impl RestrictionOperator {
    /// Applies the operator to one scalar block given per patch.
    pub fn apply(&self, local: &[Vec<f64>]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| {
                let mut it = row.iter();
                let &(p, k, w) = it.next().expect("every global DOF has a contributor");
                it.fold(w * local[p][k], |acc, &(p, k, w)| acc + w * local[p][k])
            })
            .collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.entries.iter().all(|r| r.len() == 1)
    }
}

/// Weights `|det A_i| / sum |det A_j|` over the coinciding copies; the last
/// weight absorbs rounding so each row sums to one.
pub fn build_restriction(topology: &PatchTopology) -> RestrictionOperator {
    let dets: Vec<f64> = topology.patches.iter().map(|p| p.affine.det().abs()).collect();
    let entries = topology
        .aux
        .contributors
        .iter()
        .map(|contrib| {
            let total: f64 = contrib.iter().map(|&(p, _)| dets[p]).sum();
            let mut row: Vec<(usize, usize, f64)> = Vec::with_capacity(contrib.len());
            let mut acc = 0.0;
            for (i, &(p, k)) in contrib.iter().enumerate() {
                let w = if i + 1 == contrib.len() { 1.0 - acc } else { dets[p] / total };
                acc += w;
                row.push((p, k, w));
            }
            row
        })
        .collect();
    RestrictionOperator { entries }
}

/// How the Newton driver applies `A^{-1}` to coupled auxiliary vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AuxSolve {
    /// Patchwise solves merged by the restriction operator. Cheap, but the
    /// Newton iteration can stall short of the tolerance.
    Restricted,
    /// Conjugate gradients on the coupled mass matrix.
    #[default]
    Exact,
}

/// The coupled mixed system over all patches.
#[derive(Debug, Clone)]
pub struct MultipatchSystem {
    topology: PatchTopology,
    spaces: Vec<PatchSpace>,
    net: Vec<Vec2>,
    restriction: RestrictionOperator,
    coupled_mass: CsrMatrix,
    aux_solve: AuxSolve,
    inner_pos: Vec<Option<usize>>,
}

impl MultipatchSystem {
    /// `net` holds the global control points; only its boundary entries are
    /// used.
    pub fn new(topology: PatchTopology, net: Vec<Vec2>, options: &MixedOptions) -> Result<Self, SolveError> {
        if options.mode != AuxMode::Full && topology.num_patches() > 1 {
            return Err(AssemblyError::ModeNotSupported.into());
        }
        if net.len() != topology.primal.global_len {
            return Err(AssemblyError::Dimension { expected: topology.primal.global_len, got: net.len() }.into());
        }
        let spaces = topology
            .patches
            .iter()
            .map(|p| PatchSpace::new(p.basis.clone(), p.affine, *options))
            .collect::<Result<Vec<_>, _>>()?;
        let restriction = build_restriction(&topology);
        let mut trip = Vec::new();
        for (p, space) in spaces.iter().enumerate() {
            let l2g = &topology.aux.local_to_global[p];
            for i in 0..space.aux.dim() {
                for (j, v) in space.mass().row(i) {
                    trip.push((l2g[i], l2g[j], v));
                }
            }
        }
        let n = topology.aux.global_len;
        let coupled_mass = CsrMatrix::from_triplets(n, n, trip);
        let mut inner_pos = vec![None; topology.primal.global_len];
        for (i, &g) in topology.inner.iter().enumerate() {
            inner_pos[g] = Some(i);
        }
        Ok(MultipatchSystem {
            topology,
            spaces,
            net,
            restriction,
            coupled_mass,
            aux_solve: AuxSolve::Exact,
            inner_pos,
        })
    }

    pub fn with_aux_solve(mut self, aux_solve: AuxSolve) -> Self {
        self.aux_solve = aux_solve;
        self
    }

    pub fn topology(&self) -> &PatchTopology {
        &self.topology
    }

    pub fn spaces(&self) -> &[PatchSpace] {
        &self.spaces
    }

    pub fn restriction(&self) -> &RestrictionOperator {
        &self.restriction
    }

    pub fn coupled_mass(&self) -> &CsrMatrix {
        &self.coupled_mass
    }

    fn blocks(&self) -> usize {
        self.spaces[0].mode().blocks()
    }

    pub fn pack(&self, net: &[Vec2]) -> Vec<f64> {
        let mut c: Vec<f64> = self.topology.inner.iter().map(|&g| net[g][0]).collect();
        c.extend(self.topology.inner.iter().map(|&g| net[g][1]));
        c
    }

    /// Global net with the inner entries from `c`.
    pub fn global_net(&self, c: &[f64]) -> Vec<Vec2> {
        let mut net = self.net.clone();
        let m = self.topology.inner.len();
        for (i, &g) in self.topology.inner.iter().enumerate() {
            net[g] = [c[i], c[m + i]];
        }
        net
    }

    /// Per-patch control nets for a global net.
    pub fn patch_nets(&self, net: &[Vec2]) -> Vec<Vec<Vec2>> {
        self.topology.primal.local_to_global.iter().map(|l2g| l2g.iter().map(|&g| net[g]).collect()).collect()
    }

    /// Local net of patch `p` per component. Boundary entries come from the
    /// stored net unless `zero_boundary` is set.
    fn local_net(&self, p: usize, c: &[f64], zero_boundary: bool) -> (Vec<f64>, Vec<f64>) {
        let m = self.topology.inner.len();
        let pos = &self.inner_pos;
        let l2g = &self.topology.primal.local_to_global[p];
        let mut xs = Vec::with_capacity(l2g.len());
        let mut ys = Vec::with_capacity(l2g.len());
        for &g in l2g {
            match pos[g] {
                Some(i) => {
                    xs.push(c[i]);
                    ys.push(c[m + i]);
                }
                None if zero_boundary => {
                    xs.push(0.0);
                    ys.push(0.0);
                }
                None => {
                    xs.push(self.net[g][0]);
                    ys.push(self.net[g][1]);
                }
            }
        }
        (xs, ys)
    }

    fn local_aux(&self, p: usize, d: &[f64]) -> Vec<f64> {
        let n = self.topology.aux.global_len;
        let l2g = &self.topology.aux.local_to_global[p];
        let mut out = Vec::with_capacity(self.blocks() * l2g.len());
        for b in 0..self.blocks() {
            out.extend(l2g.iter().map(|&g| d[b * n + g]));
        }
        out
    }

    /// Sums patch vectors over the auxiliary numbering.
    fn assemble_aux(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let n = self.topology.aux.global_len;
        let mut out = vec![0.0; self.blocks() * n];
        let mut seen = vec![false; out.len()];
        for (p, v) in local.iter().enumerate() {
            let l2g = &self.topology.aux.local_to_global[p];
            let nl = l2g.len();
            for b in 0..self.blocks() {
                for (k, &g) in l2g.iter().enumerate() {
                    let slot = b * n + g;
                    let val = v[b * nl + k];
                    out[slot] = if seen[slot] { out[slot] + val } else { val };
                    seen[slot] = true;
                }
            }
        }
        out
    }

    /// Restricts patchwise auxiliary vectors block by block.
    fn restrict(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.blocks() * self.topology.aux.global_len);
        for b in 0..self.blocks() {
            let blocks: Vec<Vec<f64>> = local
                .iter()
                .zip(&self.spaces)
                .map(|(v, s)| v[b * s.aux.dim()..(b + 1) * s.aux.dim()].to_vec())
                .collect();
            out.extend(self.restriction.apply(&blocks));
        }
        out
    }

    /// Additive Schwarz with the patch mass matrices, one block at a time.
    fn schwarz(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (p, space) in self.spaces.iter().enumerate() {
            let l2g = &self.topology.aux.local_to_global[p];
            let mut z: Vec<f64> = l2g.iter().map(|&g| r[g]).collect();
            space.kron_solver().solve_block_in_place(&mut z);
            let scale = 1.0 / space.jacobian();
            for (k, &g) in l2g.iter().enumerate() {
                out[g] += scale * z[k];
            }
        }
        out
    }

    fn exact_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.topology.aux.global_len;
        let mut out = Vec::with_capacity(rhs.len());
        for block in rhs.chunks(n) {
            let cg = pcg(|x| self.coupled_mass.matvec(x), |r| self.schwarz(r), block, 1e-14, 10 * n);
            out.extend(cg.solution);
        }
        out
    }

    /// Patchwise projection merged by the restriction operator.
    pub fn restricted_solve(&self, local_rhs: Vec<Vec<f64>>) -> Vec<f64> {
        let local: Vec<Vec<f64>> = local_rhs.iter().zip(&self.spaces).map(|(r, s)| s.solve_mass(r)).collect();
        self.restrict(&local)
    }

    /// `B s` per patch for a direction over the global inner DOFs.
    fn local_b(&self, s: &[f64]) -> Vec<Vec<f64>> {
        (0..self.spaces.len())
            .map(|p| {
                let (xs, ys) = self.local_net(p, s, true);
                self.spaces[p].apply_b(&xs, &ys)
            })
            .collect()
    }

    fn local_rl(&self, d: &[f64], c: &[f64]) -> Vec<Vec<f64>> {
        (0..self.spaces.len())
            .map(|p| {
                let (xs, ys) = self.local_net(p, c, false);
                self.spaces[p].residual_linear(&self.local_aux(p, d), &xs, &ys)
            })
            .collect()
    }

    /// The restriction-based approximation of `A^{-1} B s`.
    pub fn ainv_b_restricted(&self, s: &[f64]) -> Vec<f64> {
        self.restricted_solve(self.local_b(s))
    }
}

impl MixedProblem for MultipatchSystem {
    fn aux_len(&self) -> usize {
        self.blocks() * self.topology.aux.global_len
    }

    fn inner_len(&self) -> usize {
        2 * self.topology.inner.len()
    }

    fn residual_linear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.assemble_aux(&self.local_rl(d, c))
    }

    fn residual_nonlinear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        let m = self.topology.inner.len();
        let pos = &self.inner_pos;
        let mut out = vec![0.0; 2 * m];
        let mut seen = vec![false; m];
        for p in 0..self.spaces.len() {
            let (xs, ys) = self.local_net(p, c, false);
            let [rx, ry] = self.spaces[p].residual_nonlinear(&self.local_aux(p, d), &xs, &ys);
            for (k, &g) in self.topology.primal.local_to_global[p].iter().enumerate() {
                if let Some(i) = pos[g] {
                    if seen[i] {
                        out[i] += rx[k];
                        out[m + i] += ry[k];
                    } else {
                        out[i] = rx[k];
                        out[m + i] = ry[k];
                        seen[i] = true;
                    }
                }
            }
        }
        out
    }

    fn project_aux(&self, c: &[f64]) -> Vec<f64> {
        let local: Vec<Vec<f64>> = (0..self.spaces.len())
            .map(|p| {
                let (xs, ys) = self.local_net(p, c, false);
                self.spaces[p].apply_b(&xs, &ys)
            })
            .collect();
        if self.restriction.is_trivial() {
            self.restricted_solve(local)
        } else {
            self.exact_solve(&self.assemble_aux(&local))
        }
    }

    fn solve_aux_b(&self, s: &[f64]) -> Vec<f64> {
        let local = self.local_b(s);
        match self.aux_solve {
            AuxSolve::Exact if !self.restriction.is_trivial() => self.exact_solve(&self.assemble_aux(&local)),
            _ => self.restricted_solve(local),
        }
    }

    fn solve_aux_residual(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        let local = self.local_rl(d, c);
        match self.aux_solve {
            AuxSolve::Exact if !self.restriction.is_trivial() => self.exact_solve(&self.assemble_aux(&local)),
            _ => self.restricted_solve(local),
        }
    }
}

/// Initial inner control points for a multipatch problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MultipatchInitial {
    /// Vertices averaged from their neighbours, straight interfaces and a
    /// Coons patch inside every patch.
    #[default]
    Transfinite,
    /// Like `Transfinite`, but every inner vertex is reflected through a
    /// neighbouring boundary vertex, which folds the map.
    Folded,
}

/// Builds a full global net from the boundary entries of `net`.
pub fn initial_net(topology: &PatchTopology, net: &[Vec2], kind: MultipatchInitial) -> Vec<Vec2> {
    let mut net = net.to_vec();
    let l2g = &topology.primal.local_to_global;
    // patch corners and the edges between them
    let corner_local = |b: &TensorBasis| {
        let (nx, ne) = (b.n_xi(), b.n_eta());
        [b.index(0, 0), b.index(nx - 1, 0), b.index(nx - 1, ne - 1), b.index(0, ne - 1)]
    };
    let mut neighbours: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (p, patch) in topology.patches.iter().enumerate() {
        let cs = corner_local(&patch.basis).map(|k| l2g[p][k]);
        for i in 0..4 {
            let (a, b) = (cs[i], cs[(i + 1) % 4]);
            neighbours.entry(a).or_default().insert(b);
            neighbours.entry(b).or_default().insert(a);
        }
    }
    let inner_vertices: Vec<usize> =
        neighbours.keys().copied().filter(|&g| !topology.is_boundary[g]).collect::<BTreeSet<_>>().into_iter().collect();
    if !inner_vertices.is_empty() {
        let pos: HashMap<usize, usize> = inner_vertices.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let m = inner_vertices.len();
        let mut mat = vec![vec![0.0; m]; m];
        let mut rhs = vec![[0.0; 2]; m];
        for (i, &g) in inner_vertices.iter().enumerate() {
            let nb = &neighbours[&g];
            mat[i][i] = nb.len() as f64;
            for &h in nb {
                match pos.get(&h) {
                    Some(&j) => mat[i][j] -= 1.0,
                    None => {
                        rhs[i][0] += net[h][0];
                        rhs[i][1] += net[h][1];
                    }
                }
            }
        }
        let lu = DenseLu::new(mat).expect("vertex averaging system is nonsingular for connected topologies");
        let sx = lu.solve(&rhs.iter().map(|r| r[0]).collect::<Vec<_>>());
        let sy = lu.solve(&rhs.iter().map(|r| r[1]).collect::<Vec<_>>());
        for (i, &g) in inner_vertices.iter().enumerate() {
            net[g] = [sx[i], sy[i]];
            if kind == MultipatchInitial::Folded {
                if let Some(&b) = neighbours[&g].iter().find(|&&h| topology.is_boundary[h]) {
                    let (v, bp) = (net[g], net[b]);
                    net[g] = [bp[0] + 0.5 * (bp[0] - v[0]), bp[1] + 0.5 * (bp[1] - v[1])];
                }
            }
        }
    }
    // glued faces: straight between their end vertices at the Greville points
    for (p, patch) in topology.patches.iter().enumerate() {
        for side in Side::ALL {
            if !topology.is_glued(p, side) {
                continue;
            }
            let idx = side.indices(&patch.basis);
            let g = side.knots(&patch.basis).greville();
            let (a, b) = (net[l2g[p][idx[0]]], net[l2g[p][*idx.last().unwrap()]]);
            for (k, t) in idx.iter().zip(g) {
                let gid = l2g[p][*k];
                if !topology.is_boundary[gid] {
                    net[gid] = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
                }
            }
        }
    }
    // patch interiors
    for (p, patch) in topology.patches.iter().enumerate() {
        let local: Vec<Vec2> = l2g[p].iter().map(|&g| net[g]).collect();
        let map = SplineMap::from_net(patch.basis.clone(), local).expect("net size matches basis");
        for (&k, v) in map.inner_indices().iter().zip(transfinite_initial_guess(&map)) {
            net[l2g[p][k]] = v;
        }
    }
    net
}

/// Scatters per-face boundary curves into a global net and checks that
/// coinciding control points agree.
pub fn boundary_net(topology: &PatchTopology, faces: &[(usize, Side, Vec<Vec2>)]) -> Result<Vec<Vec2>, TopologyError> {
    let mut net: Vec<Option<Vec2>> = vec![None; topology.primal.global_len];
    for &(p, side, ref curve) in faces {
        if p >= topology.num_patches() {
            return Err(TopologyError::PatchIndex(p));
        }
        if topology.is_glued(p, side) {
            return Err(TopologyError::Boundary { patch: p, face: side.name(), reason: "face is glued to another patch".into() });
        }
        let idx = side.indices(&topology.patches[p].basis);
        if idx.len() != curve.len() {
            return Err(TopologyError::Boundary {
                patch: p,
                face: side.name(),
                reason: format!("{} coefficients given, basis has {}", curve.len(), idx.len()),
            });
        }
        for (k, v) in idx.into_iter().zip(curve) {
            let g = topology.primal.local_to_global[p][k];
            match net[g] {
                Some(prev) if (prev[0] - v[0]).hypot(prev[1] - v[1]) > CORNER_TOL => {
                    return Err(TopologyError::Boundary {
                        patch: p,
                        face: side.name(),
                        reason: format!("endpoint disagrees with an adjacent face by {:e}", (prev[0] - v[0]).hypot(prev[1] - v[1])),
                    });
                }
                Some(_) => {}
                None => net[g] = Some(*v),
            }
        }
    }
    for (p, side) in topology.boundary_faces() {
        let idx = side.indices(&topology.patches[p].basis);
        if idx.iter().any(|&k| net[topology.primal.local_to_global[p][k]].is_none()) {
            return Err(TopologyError::MissingBoundary { patch: p, face: side.name() });
        }
    }
    Ok(net.into_iter().map(|v| v.unwrap_or([0.0, 0.0])).collect())
}

#[derive(Debug, Clone)]
pub struct MultipatchSolution {
    /// Global control net.
    pub net: Vec<Vec2>,
    /// Control net of every patch.
    pub patch_nets: Vec<Vec<Vec2>>,
    pub report: SolverReport,
}

/// Solves the coupled problem starting from the global net `initial`.
pub fn multipatch_solve(
    topology: PatchTopology,
    initial: Vec<Vec2>,
    options: &MixedOptions,
    config: &SolverConfig,
) -> Result<MultipatchSolution, SolveError> {
    if config.coarse_levels > 0 {
        return Err(SolveError::Config("coarse levels are only available for single-patch problems".into()));
    }
    let sys = MultipatchSystem::new(topology, initial.clone(), options)?;
    let c0 = sys.pack(&initial);
    let out = newton_solve(&sys, &c0, config)?;
    let net = sys.global_net(&out.c);
    let patch_nets = sys.patch_nets(&net);
    Ok(MultipatchSolution { net, patch_nets, report: out.report })
}

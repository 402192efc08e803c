//! Obstacle-free decomposition of a tube and the switching controller on it.
//!
//! Each obstacle is wrapped in an isosceles triangle pointing upstream. Cut
//! lines parallel to the finishing line through every apex and base split
//! the tube into bands: pass-through bands between obstacles, and per
//! obstacle an upper corridor (between the left leg and the triangle) and a
//! lower corridor (between the triangle and the right leg). Sub-tube `3k` is
//! the pass-through before obstacle `k`, `3k+1` and `3k+2` its corridors, and
//! `3P` the final pass-through.

use std::fmt;

use thiserror::Error;

use crate::controller::{validate_feasibility, ControlError, ControlParams, FeasibilityReport, Snapshot, TubeController, Variant};
use crate::geometry::{line_intersection, GeometryError, Obstacle, TrapezoidTube, Vec2};

/// Distance below which a point counts as sitting on a triangle vertex.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("obstacle {0}: centre is outside the tube")]
    ObstacleOutsideTube(usize),
    #[error("obstacle {0}: inflated disc touches the tube boundary")]
    ObstacleOnBoundary(usize),
    #[error("obstacle {0}: triangle vertex lies outside the tube")]
    TriangleExceedsTube(usize),
    #[error("obstacles {0} and {1}: triangle bands overlap along the tube")]
    OverlappingTriangles(usize, usize),
    #[error("obstacle {0}: neither corridor can hold an agent")]
    NoFeasibleCorridor(usize),
    #[error("sub-tube {index} cannot hold an agent: {reason}")]
    Assumption3PrimeViolation { index: usize, reason: String },
    #[error("triangle half-angle must lie in (0, 90) degrees, got {0} rad")]
    InvalidBeta(f64),
    #[error("point {0} is outside the parent tube")]
    OutsideParentTube(Vec2),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Isosceles triangle around an inflated obstacle disc. After a corridor
/// collapses one of its legs is moved onto the parent wall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleTriangle {
    /// Upstream vertex.
    pub p_otl: Vec2,
    /// Base vertex on the left (upper) side.
    pub p_otu: Vec2,
    /// Base vertex on the right (lower) side.
    pub p_otd: Vec2,
    /// Index of the obstacle in the input list.
    pub obstacle: usize,
    pub center: Vec2,
    /// Inflated radius `r_o + r_s`.
    pub radius: f64,
}

impl ObstacleTriangle {
    pub fn vertices(&self) -> [Vec2; 3] {
        [self.p_otl, self.p_otu, self.p_otd]
    }

    /// Smallest signed distance to the three edges; positive inside.
    pub fn inset(&self, p: Vec2) -> f64 {
        let v = self.vertices();
        let sign = crate::geometry::polygon_area(&v).signum();
        (0..3)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % 3]);
                sign * (b - a).cross(p - a) / (b - a).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.inset(p) >= 0.0
    }

    pub fn is_singular(&self, p: Vec2) -> bool {
        self.vertices().iter().any(|v| v.distance(p) <= SINGULAR_TOL)
    }
}

/// Role of a sub-tube slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubTubeKind {
    PassThrough,
    Upper,
    Lower,
}

impl fmt::Display for SubTubeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubTubeKind::PassThrough => "pass",
            SubTubeKind::Upper => "upper",
            SubTubeKind::Lower => "lower",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubTube {
    pub kind: SubTubeKind,
    /// `None` marks an Empty corridor.
    pub tube: Option<TrapezoidTube>,
    pub successors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubePartition {
    pub parent: TrapezoidTube,
    /// Sorted upstream to downstream.
    pub triangles: Vec<ObstacleTriangle>,
    pub sub_tubes: Vec<SubTube>,
    /// Along-tube coordinates of each triangle's apex and base cut.
    pub cuts: Vec<(f64, f64)>,
}

/// Obstacles ordered upstream first, ties by lateral coordinate, paired
/// with their input index.
pub fn sort_obstacles(tube: &TrapezoidTube, obstacles: &[Obstacle], r_s: f64) -> Result<Vec<(usize, Obstacle)>, PartitionError> {
    for (k, o) in obstacles.iter().enumerate() {
        if !tube.contains(o.center) {
            return Err(PartitionError::ObstacleOutsideTube(k));
        }
        if tube.inset(o.center) <= o.radius + r_s {
            return Err(PartitionError::ObstacleOnBoundary(k));
        }
    }
    let mut out: Vec<(usize, Obstacle)> = obstacles.iter().copied().enumerate().collect();
    let lateral = |p: Vec2| tube.n_c.dot(p - tube.p_r0);
    out.sort_by(|(_, a), (_, b)| {
        tube.along(a.center).total_cmp(&tube.along(b.center)).then(lateral(a.center).total_cmp(&lateral(b.center)))
    });
    Ok(out)
}

fn raw_triangle(tube: &TrapezoidTube, obstacle: &Obstacle, index: usize, r_s: f64, beta: f64) -> Result<ObstacleTriangle, PartitionError> {
    if !(beta > 0.0 && beta < std::f64::consts::FRAC_PI_2) {
        return Err(PartitionError::InvalidBeta(beta));
    }
    let r = obstacle.radius + r_s;
    let slant = r / beta.sin();
    let apex = obstacle.center - tube.t_c * slant;
    let base = obstacle.center + tube.t_c * r;
    let half = (slant + r) * beta.tan();
    Ok(ObstacleTriangle {
        p_otl: apex,
        p_otu: base - tube.n_c * half,
        p_otd: base + tube.n_c * half,
        obstacle: index,
        center: obstacle.center,
        radius: r,
    })
}

/// Triangle with apex half-angle `beta` whose legs are tangent to the
/// inflated disc and whose base touches it downstream.
pub fn build_triangle(tube: &TrapezoidTube, obstacle: &Obstacle, r_s: f64, beta: f64) -> Result<ObstacleTriangle, PartitionError> {
    let tri = raw_triangle(tube, obstacle, 0, r_s, beta)?;
    if !tri.vertices().iter().all(|&v| tube.contains(v)) {
        return Err(PartitionError::TriangleExceedsTube(0));
    }
    Ok(tri)
}

/// A corridor is usable if it forms a valid tube that can hold one agent.
fn usable(parent: &TrapezoidTube, vertices: [Vec2; 4], r_a: f64) -> Option<TrapezoidTube> {
    if !vertices.iter().all(|&v| parent.inset(v) >= -SINGULAR_TOL * parent.diameter()) {
        return None;
    }
    let [l0, l1, r0, r1] = vertices;
    let t = TrapezoidTube::new(l0, l1, r0, r1, parent.k_t).ok()?;
    t.assumption3_check(r_a).then_some(t)
}

impl TubePartition {
    /// Pass-throughs, corridors and triangles for the given obstacles.
    pub fn build(parent: &TrapezoidTube, obstacles: &[Obstacle], params: &ControlParams, beta: f64) -> Result<Self, PartitionError> {
        let sorted = sort_obstacles(parent, obstacles, params.r_s)?;
        let r_a = params.r_a;
        let mut triangles = Vec::with_capacity(sorted.len());
        let mut cuts = Vec::with_capacity(sorted.len());
        let mut corridors = Vec::with_capacity(sorted.len());

        for (k, obstacle) in &sorted {
            let mut tri = raw_triangle(parent, obstacle, *k, params.r_s, beta)?;
            if !parent.contains(tri.p_otl) {
                return Err(PartitionError::TriangleExceedsTube(*k));
            }
            let b = parent.along(tri.p_otu);
            let mut a = parent.along(tri.p_otl);
            let upper_of = |tri: &ObstacleTriangle, a: f64| [parent.left_at(a), parent.left_at(b), tri.p_otl, tri.p_otu];
            let lower_of = |tri: &ObstacleTriangle, a: f64| [tri.p_otl, tri.p_otd, parent.right_at(a), parent.right_at(b)];
            let mut upper = usable(parent, upper_of(&tri, a), r_a);
            let mut lower = usable(parent, lower_of(&tri, a), r_a);

            match (upper.is_some(), lower.is_some()) {
                (false, false) => return Err(PartitionError::NoFeasibleCorridor(*k)),
                (true, false) => {
                    // Lower corridor collapses: the triangle's lower leg moves onto the right wall.
                    let d = parent.p_r1 - parent.p_r0;
                    let apex = line_intersection(tri.p_otu, tri.p_otl - tri.p_otu, parent.p_r0, d)
                        .ok_or(PartitionError::NoFeasibleCorridor(*k))?;
                    tri.p_otl = apex;
                    tri.p_otd = parent.right_at(b);
                    a = parent.along(apex);
                    if parent.inset(apex) < -SINGULAR_TOL * parent.diameter() {
                        return Err(PartitionError::TriangleExceedsTube(*k));
                    }
                    upper = usable(parent, upper_of(&tri, a), r_a);
                    if upper.is_none() {
                        return Err(PartitionError::NoFeasibleCorridor(*k));
                    }
                }
                (false, true) => {
                    let d = parent.p_l1 - parent.p_l0;
                    let apex = line_intersection(tri.p_otd, tri.p_otl - tri.p_otd, parent.p_l0, d)
                        .ok_or(PartitionError::NoFeasibleCorridor(*k))?;
                    tri.p_otl = apex;
                    tri.p_otu = parent.left_at(b);
                    a = parent.along(apex);
                    if parent.inset(apex) < -SINGULAR_TOL * parent.diameter() {
                        return Err(PartitionError::TriangleExceedsTube(*k));
                    }
                    lower = usable(parent, lower_of(&tri, a), r_a);
                    if lower.is_none() {
                        return Err(PartitionError::NoFeasibleCorridor(*k));
                    }
                }
                (true, true) => {}
            }
            triangles.push(tri);
            cuts.push((a, b));
            corridors.push((upper, lower));
        }

        for w in 0..cuts.len().saturating_sub(1) {
            if cuts[w + 1].0 < cuts[w].1 {
                return Err(PartitionError::OverlappingTriangles(triangles[w].obstacle, triangles[w + 1].obstacle));
            }
        }

        let p = triangles.len();
        let mut sub_tubes = Vec::with_capacity(3 * p + 1);
        let mut lo = 0.0;
        for k in 0..=p {
            let hi = if k < p { cuts[k].0 } else { parent.length() };
            let index = 3 * k;
            let pass = TrapezoidTube::new(parent.left_at(lo), parent.left_at(hi), parent.right_at(lo), parent.right_at(hi), parent.k_t)
                .map_err(|e| PartitionError::Assumption3PrimeViolation { index, reason: e.to_string() })?;
            let cap = pass.assumption3_detail(r_a);
            if !cap.holds() {
                return Err(PartitionError::Assumption3PrimeViolation {
                    index,
                    reason: format!(
                        "length {:.6} (needs > {:.6}), side areas disjoint: {}, middle non-empty: {}",
                        cap.length, cap.min_length, cap.lr_disjoint, cap.middle_nonempty
                    ),
                });
            }
            sub_tubes.push(SubTube { kind: SubTubeKind::PassThrough, tube: Some(pass), successors: vec![] });
            if k < p {
                let (upper, lower) = corridors[k].clone();
                sub_tubes.push(SubTube { kind: SubTubeKind::Upper, tube: upper, successors: vec![index + 3] });
                sub_tubes.push(SubTube { kind: SubTubeKind::Lower, tube: lower, successors: vec![index + 3] });
                lo = cuts[k].1;
            }
        }
        for k in 0..p {
            let succ: Vec<usize> = [3 * k + 1, 3 * k + 2].into_iter().filter(|&j| sub_tubes[j].tube.is_some()).collect();
            sub_tubes[3 * k].successors = succ;
        }
        Ok(TubePartition { parent: parent.clone(), triangles, sub_tubes, cuts })
    }

    pub fn len(&self) -> usize {
        self.sub_tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sub_tubes.is_empty()
    }

    pub fn tube(&self, index: usize) -> Option<&TrapezoidTube> {
        self.sub_tubes.get(index).and_then(|s| s.tube.as_ref())
    }

    /// Sub-tube holding `p`. Cut-line ties go downstream; points on a
    /// triangle vertex or inside a triangle keep `previous`.
    pub fn locate(&self, p: Vec2, previous: usize) -> Result<usize, PartitionError> {
        if !self.parent.contains(p) {
            return Err(PartitionError::OutsideParentTube(p));
        }
        if self.triangles.iter().any(|t| t.is_singular(p)) {
            return Ok(previous);
        }
        let a = self.parent.along(p);
        for (k, (&(lo, hi), tri)) in self.cuts.iter().zip(&self.triangles).enumerate() {
            if a < lo {
                return Ok(3 * k);
            }
            if a < hi {
                if tri.inset(p) > 0.0 {
                    return Ok(previous);
                }
                for j in [3 * k + 1, 3 * k + 2] {
                    if self.tube(j).is_some_and(|t| t.contains(p)) {
                        return Ok(j);
                    }
                }
                return Ok(previous);
            }
        }
        Ok(3 * self.triangles.len())
    }

    /// Non-empty sub-tube in which `p` lies deepest (or least outside).
    pub fn nearest(&self, p: Vec2) -> usize {
        self.sub_tubes
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.tube.as_ref().map(|t| (i, t.inset(p))))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Feasibility report of every non-Empty sub-tube.
    pub fn feasibility(&self, params: &ControlParams, variant: Variant) -> Vec<(usize, FeasibilityReport)> {
        self.sub_tubes
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.tube.as_ref().map(|t| (i, validate_feasibility(t, params, variant))))
            .collect()
    }
}

pub fn build_partition(
    tube: &TrapezoidTube,
    obstacles: &[Obstacle],
    params: &ControlParams,
    beta: f64,
) -> Result<TubePartition, PartitionError> {
    TubePartition::build(tube, obstacles, params, beta)
}

pub fn locate(partition: &TubePartition, p: Vec2, previous: usize) -> Result<usize, PartitionError> {
    partition.locate(p, previous)
}

/// One tube controller per non-Empty sub-tube, selected by position.
#[derive(Clone, Debug)]
pub struct SwitchedController {
    pub partition: TubePartition,
    controllers: Vec<Option<TubeController>>,
}

/// A command and the sub-tube whose controller produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Switched {
    pub command: Vec2,
    pub sub_tube: usize,
    /// The agent was outside its located sub-tube and the nearest one was
    /// used in lenient mode.
    pub fallback: bool,
}

impl SwitchedController {
    pub fn new(partition: TubePartition, params: ControlParams, variant: Variant) -> Result<Self, PartitionError> {
        let controllers = partition
            .sub_tubes
            .iter()
            .map(|s| s.tube.clone().map(|t| TubeController::new(t, params, variant)).transpose())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SwitchedController { partition, controllers })
    }

    pub fn controller(&self, index: usize) -> Option<&TubeController> {
        self.controllers.get(index).and_then(Option::as_ref)
    }

    /// Sub-tube to start an agent in.
    pub fn initial_sub_tube(&self, p: Vec2) -> usize {
        let guess = self.partition.nearest(p);
        self.partition.locate(p, guess).unwrap_or(guess)
    }

    pub fn command(&self, snapshot: &Snapshot, i: usize, previous: usize) -> Result<Switched, PartitionError> {
        let p = snapshot.positions[i];
        let index = self.partition.locate(p, previous)?;
        if let Some(c) = self.controller(index) {
            if c.tube.contains(p) {
                return Ok(Switched { command: c.command(snapshot, i)?, sub_tube: index, fallback: false });
            }
        }
        // Numerical drift into a triangle or across a corridor edge.
        let near = self.partition.nearest(p);
        let c = self.controller(near).expect("nearest sub-tube is non-empty");
        Ok(Switched { command: c.command_with(snapshot, i, true)?, sub_tube: index, fallback: true })
    }
}

pub fn switched_command(controller: &SwitchedController, snapshot: &Snapshot, i: usize, previous: usize) -> Result<Vec2, PartitionError> {
    Ok(controller.command(snapshot, i, previous)?.command)
}

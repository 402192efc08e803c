//! Distributed velocity command for one agent in one trapezoid tube.

use std::fmt;

use thiserror::Error;

use crate::geometry::{GeometryError, TrapezoidTube, TubeRegion, Vec2};
use crate::potentials::{sat, BarrierParams, Panel, PotentialError, Smoothstep, DELTA_LOG};

/// Smallest distance fed to the boundary barrier in lenient mode.
pub const LENIENT_FLOOR: f64 = 1e-9;

/// Relative width of the band in which a strict inequality counts as met
/// with equality.
pub const MARGINAL_REL: f64 = 1e-12;

/// Side length of the grid used for the panel direction check.
pub const DIRL2_GRID: usize = 20;

/// How many times `ext_factor` is doubled before giving up.
pub const DIRL2_MAX_DOUBLINGS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("agent at {0} is outside the tube")]
    OutsideTube(Vec2),
    #[error("line approaching blend has zero norm")]
    DegenerateBlend,
    #[error("agents {0} and {1} coincide")]
    CoincidentAgents(usize, usize),
    #[error("panel direction check failed with ext_factor {ext_factor}: min t_c component {min_dot:.3e}")]
    DirL2Violation { ext_factor: f64, min_dot: f64 },
    #[error("invalid control parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// Region-switched line term with panel boundary potentials.
    Basic,
    /// Smoothly blended line term with projected boundary barriers.
    #[default]
    Modified,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Basic => "basic",
            Variant::Modified => "modified",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "basic" => Ok(Variant::Basic),
            "modified" => Ok(Variant::Modified),
            other => Err(format!("unknown variant '{other}' (expected basic or modified)")),
        }
    }
}

/// Gains, radii, speeds and small constants of the controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams {
    pub v: f64,
    pub v_max_prime: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub r_s: f64,
    pub r_a: f64,
    pub k_t: f64,
    pub k_2: f64,
    pub k_3: f64,
    pub eps_m: f64,
    pub eps_t: f64,
    pub eps_s: f64,
    pub eps_0: f64,
    pub ext_factor: f64,
}

impl Default for ControlParams {
    /// The large-swarm UAV setting.
    fn default() -> Self {
        ControlParams {
            v: 2.0,
            v_max_prime: 1.5,
            v_min: 0.5,
            v_max: 3.5,
            r_s: 0.25,
            r_a: 0.5,
            k_t: 2.0,
            k_2: 1.0,
            k_3: 1.0,
            eps_m: 1e-6,
            eps_t: 1e-6,
            eps_s: 1e-6,
            eps_0: 0.01,
            ext_factor: 10.0,
        }
    }
}

impl ControlParams {
    /// Structural problems (signs, orderings), one message per problem.
    /// Speed margins are reported by [`validate_feasibility`] instead.
    pub fn problems(&self, variant: Variant) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("v", self.v),
            ("v_max_prime", self.v_max_prime),
            ("v_max", self.v_max),
            ("r_s", self.r_s),
            ("r_a", self.r_a),
            ("k_2", self.k_2),
            ("k_3", self.k_3),
            ("eps_m", self.eps_m),
            ("eps_t", self.eps_t),
            ("eps_s", self.eps_s),
            ("eps_0", self.eps_0),
            ("ext_factor", self.ext_factor),
        ];
        for (name, val) in positive {
            if !(val > 0.0) || !val.is_finite() {
                out.push(format!("{name} must be positive and finite, got {val}"));
            }
        }
        if !(self.v_min >= 0.0) || !self.v_min.is_finite() {
            out.push(format!("v_min must be non-negative, got {}", self.v_min));
        }
        if !(self.v_min < self.v_max) {
            out.push(format!("v_min = {} must be below v_max = {}", self.v_min, self.v_max));
        }
        if !(self.r_a > self.r_s) {
            out.push(format!("r_a = {} must exceed r_s = {}", self.r_a, self.r_s));
        }
        match variant {
            Variant::Modified if !(self.k_t > 1.0) => out.push(format!("k_t must exceed 1 for the blended line term, got {}", self.k_t)),
            Variant::Basic if !(self.k_t >= 1.0) => out.push(format!("k_t must be >= 1, got {}", self.k_t)),
            _ => {}
        }
        if self.eps_s > 0.0 && BarrierParams::new(1.0, 1.0, 2.0, 1.0, self.eps_s).is_err() {
            out.push(format!("eps_s = {} is too large", self.eps_s));
        }
        out
    }

    /// Inter-agent barrier `V_n(k_2, ·, 2r_s, r_s + r_a, ε_m, ε_s)`.
    pub fn agent_barrier(&self) -> Result<BarrierParams, PotentialError> {
        BarrierParams::new(self.k_2, 2.0 * self.r_s, self.r_s + self.r_a, self.eps_m, self.eps_s)
    }

    /// Boundary barrier `V_n(k_3, ·, r_s, r_a, ε_t, ε_s)`.
    pub fn boundary_barrier(&self) -> Result<BarrierParams, PotentialError> {
        BarrierParams::new(self.k_3, self.r_s, self.r_a, self.eps_t, self.eps_s)
    }
}

/// Positions of all active agents, index-aligned with their ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshot {
    pub positions: Vec<Vec2>,
    pub ids: Vec<usize>,
}

impl Snapshot {
    pub fn new(positions: Vec<Vec2>) -> Self {
        let ids = (0..positions.len()).collect();
        Snapshot { positions, ids }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Agents whose safety disc meets agent `i`'s avoidance disc.
pub fn neighbors(snapshot: &Snapshot, i: usize, r_a: f64, r_s: f64) -> Vec<usize> {
    let p = snapshot.positions[i];
    let reach = r_a + r_s;
    snapshot.positions.iter().enumerate().filter(|&(j, q)| j != i && p.distance(*q) <= reach).map(|(j, _)| j).collect()
}

fn require_inside(tube: &TrapezoidTube, p: Vec2) -> Result<(), ControlError> {
    if tube.contains(p) {
        Ok(())
    } else {
        Err(ControlError::OutsideTube(p))
    }
}

/// Region used by the line term; in lenient mode an ambiguous point goes
/// to the nearer leg.
fn region(tube: &TrapezoidTube, p: Vec2, d_l: f64, d_r: f64, r_a: f64, lenient: bool) -> Result<TubeRegion, ControlError> {
    match tube.region_of(p, d_l, d_r, r_a) {
        Ok(r) => Ok(r),
        Err(_) if lenient => Ok(if d_l <= d_r { TubeRegion::Left } else { TubeRegion::Right }),
        Err(e) => Err(e.into()),
    }
}

fn u1_basic_region(tube: &TrapezoidTube, region: TubeRegion, v: f64) -> Vec2 {
    match region {
        TubeRegion::Left => tube.t_l * v,
        TubeRegion::Right => tube.t_r * v,
        _ => tube.t_c * v,
    }
}

pub fn u1_basic(tube: &TrapezoidTube, p: Vec2, v: f64, r_a: f64) -> Result<Vec2, ControlError> {
    require_inside(tube, p)?;
    let region = tube.region_of(p, tube.dist_left(p), tube.dist_right(p), r_a)?;
    Ok(u1_basic_region(tube, region, v))
}

fn blend(t_side: Vec2, t_c: Vec2, s: f64, v: f64) -> Result<Vec2, ControlError> {
    let w = (t_side - t_c) * s + t_c;
    let n = w.norm();
    if n < 1e-12 {
        return Err(ControlError::DegenerateBlend);
    }
    Ok(w * (v / n))
}

fn u1_modified_region(tube: &TrapezoidTube, region: TubeRegion, d_l: f64, d_r: f64, v: f64, r_a: f64) -> Result<Vec2, ControlError> {
    match region {
        TubeRegion::Left | TubeRegion::Right => {
            let step = Smoothstep::new(r_a, tube.k_t * r_a)?;
            if region == TubeRegion::Left {
                blend(tube.t_l, tube.t_c, step.value(d_l), v)
            } else {
                blend(tube.t_r, tube.t_c, step.value(d_r), v)
            }
        }
        _ => Ok(tube.t_c * v),
    }
}

/// Line term blended between `t_c` and the leg direction by `σ(d, r_a, k_t r_a)`.
pub fn u1_modified(tube: &TrapezoidTube, p: Vec2, v: f64, r_a: f64) -> Result<Vec2, ControlError> {
    require_inside(tube, p)?;
    let (d_l, d_r) = (tube.dist_left(p), tube.dist_right(p));
    let region = tube.region_of(p, d_l, d_r, r_a)?;
    u1_modified_region(tube, region, d_l, d_r, v, r_a)
}

fn u2_with(snapshot: &Snapshot, i: usize, barrier: &BarrierParams) -> Result<Vec2, ControlError> {
    let p = snapshot.positions[i];
    let reach2 = barrier.d2 * barrier.d2;
    let mut acc = Vec2::ZERO;
    for (j, &q) in snapshot.positions.iter().enumerate() {
        if j == i {
            continue;
        }
        let e = p - q;
        let d2 = e.norm_sq();
        if d2 >= reach2 {
            continue;
        }
        if d2 == 0.0 {
            return Err(ControlError::CoincidentAgents(snapshot.ids[i], snapshot.ids[j]));
        }
        let d = d2.sqrt();
        let b = -barrier.deriv(d)? / d;
        acc += e * b;
    }
    Ok(acc)
}

/// Inter-agent repulsion `Σ b_ij (p_i − p_j)`.
pub fn u2_avoidance(snapshot: &Snapshot, i: usize, params: &ControlParams) -> Result<Vec2, ControlError> {
    u2_with(snapshot, i, &params.agent_barrier()?)
}

fn projected_with(tube: &TrapezoidTube, d_l: f64, d_r: f64, barrier: &BarrierParams) -> Result<Vec2, ControlError> {
    let t = tube.t_c;
    let lateral = |n: Vec2| n - t * t.dot(n);
    let gl = -barrier.deriv(d_l)?;
    let gr = -barrier.deriv(d_r)?;
    Ok(lateral(tube.n_l) * gl + lateral(tube.n_r) * gr)
}

/// Boundary barriers pushed along the legs' normals with the `t_c`
/// component removed.
pub fn u34_projected(tube: &TrapezoidTube, p: Vec2, params: &ControlParams) -> Result<Vec2, ControlError> {
    require_inside(tube, p)?;
    let (d_l, d_r) = (tube.dist_left(p), tube.dist_right(p));
    if !(d_l > 0.0 && d_r > 0.0) {
        return Err(ControlError::OutsideTube(p));
    }
    projected_with(tube, d_l, d_r, &params.boundary_barrier()?)
}

/// Outcome of the grid check that the panel forces never push upstream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirL2Report {
    pub ext_factor: f64,
    pub doublings: u32,
    pub min_dot_left: f64,
    pub min_dot_right: f64,
    pub samples: usize,
}

impl DirL2Report {
    pub fn passed(&self) -> bool {
        self.min_dot_left >= 0.0 && self.min_dot_right >= 0.0
    }
}

/// Panels on the upstream-extended legs. The barrier is `k_3 (C − φ)` with
/// `C` bounding `φ` over the tube, so it is non-negative and its negative
/// gradient `k_3 ∇φ` points away from the wall.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPanels {
    pub left: Panel,
    pub right: Panel,
    pub k_3: f64,
    pub c_left: f64,
    pub c_right: f64,
    pub dirl2: DirL2Report,
}

fn panel_bound(tube: &TrapezoidTube, panel: &Panel) -> f64 {
    let far = tube.vertices().iter().flat_map(|v| [v.distance(panel.a), v.distance(panel.b)]).fold(0.0, f64::max);
    panel.length() * (far - panel.r).ln().max(0.0)
}

impl BoundaryPanels {
    pub fn with_factor(tube: &TrapezoidTube, params: &ControlParams, ext_factor: f64) -> Result<Self, ControlError> {
        let extend = |p0: Vec2, p1: Vec2, t: Vec2| p1 - t * (ext_factor * p0.distance(p1));
        let left = Panel::new(extend(tube.p_l0, tube.p_l1, tube.t_l), tube.p_l1, params.r_s)?;
        let right = Panel::new(extend(tube.p_r0, tube.p_r1, tube.t_r), tube.p_r1, params.r_s)?;
        let mut panels = BoundaryPanels {
            c_left: panel_bound(tube, &left),
            c_right: panel_bound(tube, &right),
            left,
            right,
            k_3: params.k_3,
            dirl2: DirL2Report { ext_factor, doublings: 0, min_dot_left: f64::INFINITY, min_dot_right: f64::INFINITY, samples: 0 },
        };
        panels.dirl2 = panels.check_dirl2(tube, params.r_s)?;
        Ok(panels)
    }

    /// Starts at `params.ext_factor` and doubles until the direction check
    /// passes.
    pub fn new(tube: &TrapezoidTube, params: &ControlParams) -> Result<Self, ControlError> {
        let mut factor = params.ext_factor;
        let mut last = None;
        for doublings in 0..=DIRL2_MAX_DOUBLINGS {
            let mut panels = Self::with_factor(tube, params, factor)?;
            panels.dirl2.doublings = doublings;
            if panels.dirl2.passed() {
                return Ok(panels);
            }
            last = Some(panels.dirl2);
            factor *= 2.0;
        }
        let r = last.expect("at least one attempt");
        Err(ControlError::DirL2Violation { ext_factor: r.ext_factor, min_dot: r.min_dot_left.min(r.min_dot_right) })
    }

    fn check_dirl2(&self, tube: &TrapezoidTube, r_s: f64) -> Result<DirL2Report, ControlError> {
        let n = DIRL2_GRID;
        let mut report = DirL2Report {
            ext_factor: self.dirl2.ext_factor,
            doublings: 0,
            min_dot_left: f64::INFINITY,
            min_dot_right: f64::INFINITY,
            samples: 0,
        };
        for a in 0..n {
            for b in 0..n {
                let (s, u) = (a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64);
                let p = tube.p_l0.lerp(tube.p_r0, u).lerp(tube.p_l1.lerp(tube.p_r1, u), s);
                let guard = r_s + DELTA_LOG;
                if self.left.distance(p) <= guard || self.right.distance(p) <= guard {
                    continue;
                }
                report.samples += 1;
                report.min_dot_left = report.min_dot_left.min(self.left.grad(p)?.dot(tube.t_c) * self.k_3);
                report.min_dot_right = report.min_dot_right.min(self.right.grad(p)?.dot(tube.t_c) * self.k_3);
            }
        }
        Ok(report)
    }

    /// `(V_tl, V_tr)` at `p`.
    pub fn barrier_values(&self, p: Vec2) -> Result<(f64, f64), ControlError> {
        Ok((self.k_3 * (self.c_left - self.left.phi(p)?), self.k_3 * (self.c_right - self.right.phi(p)?)))
    }

    /// `u_3 + u_4 = k_3 (∇φ_l + ∇φ_r)`.
    pub fn repulsion(&self, p: Vec2) -> Result<Vec2, ControlError> {
        Ok((self.left.grad(p)? + self.right.grad(p)?) * self.k_3)
    }
}

pub fn u34_panel(tube: &TrapezoidTube, p: Vec2, params: &ControlParams) -> Result<Vec2, ControlError> {
    require_inside(tube, p)?;
    BoundaryPanels::new(tube, params)?.repulsion(p)
}

/// The unsaturated pieces of one command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommandTerms {
    pub u1: Vec2,
    pub u2: Vec2,
    pub u34: Vec2,
}

/// Controller bound to one tube, with barriers and panels precomputed.
#[derive(Clone, Debug)]
pub struct TubeController {
    pub tube: TrapezoidTube,
    pub params: ControlParams,
    pub variant: Variant,
    agent_barrier: BarrierParams,
    boundary_barrier: BarrierParams,
    panels: Option<BoundaryPanels>,
}

impl TubeController {
    pub fn new(tube: TrapezoidTube, params: ControlParams, variant: Variant) -> Result<Self, ControlError> {
        let problems = params.problems(variant);
        if !problems.is_empty() {
            return Err(ControlError::InvalidParams(problems.join("; ")));
        }
        let panels = match variant {
            Variant::Basic => Some(BoundaryPanels::new(&tube, &params)?),
            Variant::Modified => None,
        };
        Ok(TubeController {
            agent_barrier: params.agent_barrier()?,
            boundary_barrier: params.boundary_barrier()?,
            tube,
            params,
            variant,
            panels,
        })
    }

    pub fn panels(&self) -> Option<&BoundaryPanels> {
        self.panels.as_ref()
    }

    pub fn agent_barrier(&self) -> &BarrierParams {
        &self.agent_barrier
    }

    /// Line term of agent at `p`; lenient mode skips the containment check.
    pub fn u1(&self, p: Vec2, lenient: bool) -> Result<Vec2, ControlError> {
        if !lenient {
            require_inside(&self.tube, p)?;
        }
        let (d_l, d_r) = self.distances(p, lenient);
        let region = region(&self.tube, p, d_l, d_r, self.params.r_a, lenient)?;
        match self.variant {
            Variant::Basic => Ok(u1_basic_region(&self.tube, region, self.params.v)),
            Variant::Modified => u1_modified_region(&self.tube, region, d_l, d_r, self.params.v, self.params.r_a),
        }
    }

    fn distances(&self, p: Vec2, lenient: bool) -> (f64, f64) {
        let (d_l, d_r) = (self.tube.dist_left(p), self.tube.dist_right(p));
        if lenient {
            (d_l.max(LENIENT_FLOOR), d_r.max(LENIENT_FLOOR))
        } else {
            (d_l, d_r)
        }
    }

    pub fn terms(&self, snapshot: &Snapshot, i: usize, lenient: bool) -> Result<CommandTerms, ControlError> {
        let p = snapshot.positions[i];
        let u1 = self.u1(p, lenient)?;
        let u2 = u2_with(snapshot, i, &self.agent_barrier)?;
        let u34 = match &self.panels {
            Some(panels) => panels.repulsion(p)?,
            None => {
                let (d_l, d_r) = self.distances(p, lenient);
                if !(d_l > 0.0 && d_r > 0.0) {
                    return Err(ControlError::OutsideTube(p));
                }
                projected_with(&self.tube, d_l, d_r, &self.boundary_barrier)?
            }
        };
        Ok(CommandTerms { u1, u2, u34 })
    }

    /// `u_1 + sat(u_2 + u_3 + u_4, v′_max)`.
    pub fn command(&self, snapshot: &Snapshot, i: usize) -> Result<Vec2, ControlError> {
        self.command_with(snapshot, i, false)
    }

    pub fn command_with(&self, snapshot: &Snapshot, i: usize, lenient: bool) -> Result<Vec2, ControlError> {
        let t = self.terms(snapshot, i, lenient)?;
        let out = t.u1 + sat(t.u2 + t.u34, self.params.v_max_prime);
        Ok(clamp_speed(out, self.params.v - self.params.v_max_prime, self.params.v + self.params.v_max_prime))
    }
}

/// Removes last-ulp overshoot of the speed envelope left by rounding.
fn clamp_speed(x: Vec2, lo: f64, hi: f64) -> Vec2 {
    let n = x.norm();
    if n > hi {
        let mut y = x * (hi / n);
        while y.norm() > hi {
            y = y * (1.0 - f64::EPSILON);
        }
        y
    } else if n < lo && n > 0.0 {
        let mut y = x * (lo / n);
        while y.norm() < lo {
            y = y * (1.0 + f64::EPSILON);
        }
        y
    } else {
        x
    }
}

pub fn velocity_command(
    tube: &TrapezoidTube,
    snapshot: &Snapshot,
    i: usize,
    params: &ControlParams,
    variant: Variant,
) -> Result<Vec2, ControlError> {
    TubeController::new(tube.clone(), *params, variant)?.command(snapshot, i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    /// The two sides agree to rounding; strict form fails, non-strict holds.
    Marginal,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Marginal => "MARGINAL",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        })
    }
}

/// One inequality `lhs < rhs` (or `lhs > rhs`) of the feasibility report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub status: CheckStatus,
}

impl Check {
    /// Strict `lhs < rhs`; equality within rounding is `Marginal` when
    /// `allow_marginal`, otherwise `Fail`.
    fn less(name: &str, relation: &str, lhs: f64, rhs: f64, allow_marginal: bool) -> Check {
        let tie = (lhs - rhs).abs() <= MARGINAL_REL * rhs.abs().max(lhs.abs()).max(1e-300);
        let status = if lhs < rhs && !tie {
            CheckStatus::Pass
        } else if tie && allow_marginal {
            CheckStatus::Marginal
        } else {
            CheckStatus::Fail
        };
        Check { name: name.into(), relation: relation.into(), lhs, rhs, status }
    }

    fn flag(name: &str, relation: &str, ok: bool) -> Check {
        let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
        Check { name: name.into(), relation: relation.into(), lhs: f64::NAN, rhs: f64::NAN, status }
    }

    fn not_applicable(name: &str, relation: &str) -> Check {
        Check { name: name.into(), relation: relation.into(), lhs: f64::NAN, rhs: f64::NAN, status: CheckStatus::NotApplicable }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<8} {:<22} {}", self.status.to_string(), self.name, self.relation)?;
        if !self.lhs.is_nan() {
            write!(f, "  [{} vs {}]", self.lhs, self.rhs)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub checks: Vec<Check>,
    /// Angles between each leg and `t_c`, radians.
    pub theta_l: f64,
    pub theta_r: f64,
    /// `arccos(1 − v′²/(2v²))`; NaN when the argument leaves [−1, 1].
    pub theta_bound: f64,
    pub dirl2: Option<DirL2Report>,
}

impl FeasibilityReport {
    /// No check failed; marginal equalities are admitted.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        write!(
            f,
            "  theta_l = {:.6} deg, theta_r = {:.6} deg, bound = {:.6} deg",
            self.theta_l.to_degrees(),
            self.theta_r.to_degrees(),
            self.theta_bound.to_degrees()
        )?;
        if let Some(d) = &self.dirl2 {
            write!(
                f,
                "\n  panel direction grid: ext_factor {} ({} doublings), {} samples, min t_c components {:.3e} / {:.3e}",
                d.ext_factor, d.doublings, d.samples, d.min_dot_left, d.min_dot_right
            )?;
        }
        Ok(())
    }
}

/// Speed margins, leg angles, tube capacity and, for the panel variant, the
/// panel direction grid.
pub fn validate_feasibility(tube: &TrapezoidTube, params: &ControlParams, variant: Variant) -> FeasibilityReport {
    let (v, vp) = (params.v, params.v_max_prime);
    let mut checks = vec![
        Check::less("speed upper margin", "v + v' < v_max", v + vp, params.v_max, true),
        // v − v′ > v_min, written as v_min < v − v′.
        Check::less("speed lower margin", "v - v' > v_min", params.v_min, v - vp, true),
    ];
    let angle = |name: &str, rel: &str, converges: bool, t_side: Vec2| {
        if converges {
            Check::less(name, rel, v * (tube.t_c - t_side).norm(), vp, false)
        } else {
            Check::not_applicable(name, rel)
        }
    };
    checks.push(angle("left leg angle", "v |t_c - t_l| < v'", tube.left_converges(), tube.t_l));
    checks.push(angle("right leg angle", "v |t_c - t_r| < v'", tube.right_converges(), tube.t_r));
    let cap = tube.assumption3_detail(params.r_a);
    checks.push(Check::flag("side areas disjoint", "L and R do not overlap", cap.lr_disjoint));
    checks.push(Check::flag("middle area non-empty", "M is non-empty", cap.middle_nonempty));
    checks.push(Check::less("tube length", "2 r_a < length", cap.min_length, cap.length, false));
    let dirl2 = if variant == Variant::Basic {
        let result = BoundaryPanels::new(tube, params);
        let report = match &result {
            Ok(p) => Some(p.dirl2),
            Err(_) => {
                BoundaryPanels::with_factor(tube, params, params.ext_factor * 2f64.powi(DIRL2_MAX_DOUBLINGS as i32)).ok().map(|p| p.dirl2)
            }
        };
        checks.push(Check::flag("panel direction", "-dV_t/dp . t_c >= 0 on grid", result.is_ok()));
        report
    } else {
        None
    };
    let clamp = |x: f64| x.clamp(-1.0, 1.0);
    let arg = 1.0 - vp * vp / (2.0 * v * v);
    FeasibilityReport {
        checks,
        theta_l: clamp(tube.t_l.dot(tube.t_c)).acos(),
        theta_r: clamp(tube.t_r.dot(tube.t_c)).acos(),
        theta_bound: if (-1.0..=1.0).contains(&arg) { arg.acos() } else { f64::NAN },
        dirl2,
    }
}

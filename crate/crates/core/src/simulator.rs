//! Fixed-step propagation of single-integrator agents under the switched
//! controller, with finishing-line removal, per-step safety metrics and an
//! energy monitor for the obstacle-free panel variant.

use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{ControlError, ControlParams, Snapshot, TubeController, Variant};
use crate::geometry::{Obstacle, TrapezoidTube, Vec2};
use crate::partition::{PartitionError, SwitchedController, TubePartition};

/// Step used throughout the reported experiments.
pub const DEFAULT_DT: f64 = 1e-3;

/// Factor applied to the largest observed second difference of `V`.
pub const TOL_V_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("initial state invalid: {}", .0.join("; "))]
    InvalidInitial(Vec<String>),
    #[error("infeasible scenario: {}", .0.join("; "))]
    Infeasible(Vec<String>),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("agent {id} at t = {t}: {source}")]
    Runtime { id: usize, t: f64, source: PartitionError },
    #[error("energy monitor needs the basic variant without obstacles")]
    UnsupportedVariant,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub p: Vec2,
    pub v_c: Vec2,
    pub active: bool,
    pub sub_tube: usize,
    pub removed_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub tube: TrapezoidTube,
    pub obstacles: Vec<Obstacle>,
    pub initial: Vec<Vec2>,
    pub params: ControlParams,
    /// Triangle apex half-angle, radians.
    pub beta: f64,
    pub seed: u64,
    pub variant: Variant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub t: f64,
    pub min_pair_dist: f64,
    /// Smallest centre-to-centre distance to any obstacle.
    pub min_obstacle_dist: f64,
    /// Smallest `‖p − p_o‖ − r_o − r_s`; positive means no contact.
    pub min_obstacle_clearance: f64,
    pub min_d_tl: f64,
    pub min_d_tr: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub n_active: usize,
    pub v_total: f64,
    pub dv: f64,
}

/// Sample of one agent for the trajectory file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub id: usize,
    pub p: Vec2,
    pub v: Vec2,
    pub sub_tube: usize,
    pub active: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub metrics: Vec<StepMetrics>,
    pub trajectory: Vec<TrajectoryRow>,
    pub removed_at: Vec<Option<f64>>,
    /// Steps at which at least one agent was removed.
    pub removal_steps: Vec<usize>,
    /// Commands evaluated through the drift fallback.
    pub fallbacks: usize,
}

/// Pass iff every safety disc is inside the tube, the discs are pairwise
/// disjoint, and none meets an obstacle.
pub fn validate_initial(config: &SimConfig) -> Vec<String> {
    let r_s = config.params.r_s;
    let tube = &config.tube;
    let mut out = Vec::new();
    for (i, &p) in config.initial.iter().enumerate() {
        if !p.is_finite() {
            out.push(format!("agent {i}: non-finite position"));
            continue;
        }
        // The finishing line is an exit, so only its own side is checked for the centre.
        let inset = tube.dist_left(p).min(tube.dist_right(p)).min(tube.along(p));
        if inset < r_s || tube.dist_to_finish(p) < 0.0 {
            out.push(format!("agent {i} at {p}: safety disc leaves the tube (inset {inset:.6} < r_s = {r_s})"));
        }
        for (k, o) in config.obstacles.iter().enumerate() {
            let d = p.distance(o.center);
            if d <= o.radius + r_s {
                out.push(format!("agent {i} at {p}: overlaps obstacle {k} (distance {d:.6} <= {:.6})", o.radius + r_s));
            }
        }
        for (j, &q) in config.initial.iter().enumerate().skip(i + 1) {
            let d = p.distance(q);
            if d <= 2.0 * r_s {
                out.push(format!("agents {i} and {j}: safety discs overlap (distance {d:.6} <= {:.6})", 2.0 * r_s));
            }
        }
    }
    out
}

/// Obstacle-free energy `Σ (V_f + ½ Σ V_m + V_tl + V_tr)` for the panel variant.
#[derive(Clone, Debug)]
pub struct LyapunovMonitor {
    controller: TubeController,
    origin: Vec2,
    v_star: Vec2,
    c: f64,
}

/// Per-term breakdown of the energy.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LyapunovTerms {
    pub flow: f64,
    pub agents: f64,
    pub boundary: f64,
}

impl LyapunovTerms {
    pub fn total(&self) -> f64 {
        self.flow + self.agents + self.boundary
    }
}

impl LyapunovMonitor {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        if config.variant != Variant::Basic || !config.obstacles.is_empty() {
            return Err(SimError::UnsupportedVariant);
        }
        let controller =
            TubeController::new(config.tube.clone(), config.params, Variant::Basic).map_err(|e| SimError::Partition(e.into()))?;
        let tube = &config.tube;
        let v = config.params.v;
        let mut u_bound: f64 = 0.0;
        if tube.left_converges() {
            u_bound = u_bound.max(v * (tube.t_c - tube.t_l).norm());
        }
        if tube.right_converges() {
            u_bound = u_bound.max(v * (tube.t_c - tube.t_r).norm());
        }
        // ‖p − p*(t)‖ never exceeds the tube diameter plus the reference travel.
        let c = u_bound * (tube.diameter() + v * config.t_end) + 1.0;
        Ok(LyapunovMonitor { origin: tube.centroid(), v_star: tube.t_c * v, c, controller })
    }

    pub fn offset(&self) -> f64 {
        self.c
    }

    pub fn evaluate(&self, positions: &[Vec2], t: f64) -> Result<LyapunovTerms, ControlError> {
        let reference = self.origin + self.v_star * t;
        let barrier = self.controller.agent_barrier();
        let panels = self.controller.panels().expect("basic controller has panels");
        let mut terms = LyapunovTerms::default();
        for (i, &p) in positions.iter().enumerate() {
            // U (p̃ᵀ[cos α, sin α]) = −(u_1 − v*)ᵀ p̃.
            let u1 = self.controller.u1(p, false)?;
            terms.flow += -(u1 - self.v_star).dot(p - reference) + self.c;
            for &q in &positions[i + 1..] {
                let d = p.distance(q);
                if d < barrier.d2 {
                    terms.agents += barrier.value(d)?;
                }
            }
            let (l, r) = panels.barrier_values(p)?;
            terms.boundary += l + r;
        }
        Ok(terms)
    }
}

pub struct Simulation {
    pub config: SimConfig,
    pub controller: SwitchedController,
    pub agents: Vec<AgentState>,
    monitor: Option<LyapunovMonitor>,
    step: usize,
    last_v: Option<f64>,
}

fn nan_if_inf(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        f64::NAN
    }
}

impl Simulation {
    /// Validates the initial state and the feasibility of every sub-tube.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        if !(config.dt > 0.0) || !(config.t_end >= 0.0) {
            return Err(SimError::InvalidConfig(format!("dt = {} must be positive and t_end = {} non-negative", config.dt, config.t_end)));
        }
        let problems = validate_initial(&config);
        if !problems.is_empty() {
            return Err(SimError::InvalidInitial(problems));
        }
        let param_problems = config.params.problems(config.variant);
        if !param_problems.is_empty() {
            return Err(SimError::Infeasible(param_problems));
        }
        let partition = TubePartition::build(&config.tube, &config.obstacles, &config.params, config.beta)?;
        let infeasible: Vec<String> = partition
            .feasibility(&config.params, config.variant)
            .into_iter()
            .flat_map(|(i, r)| r.failures().map(move |c| format!("sub-tube {i}: {} ({})", c.name, c.relation)).collect::<Vec<_>>())
            .collect();
        if !infeasible.is_empty() {
            return Err(SimError::Infeasible(infeasible));
        }
        let controller = SwitchedController::new(partition, config.params, config.variant)?;
        let monitor =
            if config.variant == Variant::Basic && config.obstacles.is_empty() { Some(LyapunovMonitor::new(&config)?) } else { None };
        let agents = config
            .initial
            .iter()
            .enumerate()
            .map(|(id, &p)| {
                let done = config.tube.finishing_reached(p, config.params.eps_0);
                AgentState {
                    id,
                    p,
                    v_c: Vec2::ZERO,
                    active: !done,
                    sub_tube: controller.initial_sub_tube(p),
                    removed_at: done.then_some(0.0),
                }
            })
            .collect();
        Ok(Simulation { config, controller, agents, monitor, step: 0, last_v: None })
    }

    pub fn monitor(&self) -> Option<&LyapunovMonitor> {
        self.monitor.as_ref()
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    fn active_indices(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.agents[i].active).collect()
    }

    /// Commands for the active agents from one frozen snapshot.
    fn commands(&mut self, active: &[usize]) -> Result<usize, SimError> {
        let snapshot = Snapshot {
            positions: active.iter().map(|&i| self.agents[i].p).collect(),
            ids: active.iter().map(|&i| self.agents[i].id).collect(),
        };
        let t = self.time();
        let ctrl = &self.controller;
        let agents = &self.agents;
        let results: Vec<_> = (0..active.len())
            .into_par_iter()
            .map(|k| {
                let a = &agents[active[k]];
                ctrl.command(&snapshot, k, a.sub_tube).map_err(|source| SimError::Runtime { id: a.id, t, source })
            })
            .collect();
        let mut fallbacks = 0;
        for (k, r) in results.into_iter().enumerate() {
            let s = r?;
            let a = &mut self.agents[active[k]];
            a.v_c = s.command;
            a.sub_tube = s.sub_tube;
            fallbacks += usize::from(s.fallback);
        }
        Ok(fallbacks)
    }

    fn metrics(&mut self, active: &[usize]) -> Result<StepMetrics, SimError> {
        let t = self.time();
        let tube = &self.config.tube;
        let r_s = self.config.params.r_s;
        let pos: Vec<Vec2> = active.iter().map(|&i| self.agents[i].p).collect();
        let mut m = StepMetrics {
            t,
            min_pair_dist: f64::INFINITY,
            min_obstacle_dist: f64::INFINITY,
            min_obstacle_clearance: f64::INFINITY,
            min_d_tl: f64::INFINITY,
            min_d_tr: f64::INFINITY,
            min_speed: f64::INFINITY,
            max_speed: f64::NEG_INFINITY,
            n_active: active.len(),
            v_total: f64::NAN,
            dv: f64::NAN,
        };
        for (k, &p) in pos.iter().enumerate() {
            for &q in &pos[k + 1..] {
                m.min_pair_dist = m.min_pair_dist.min(p.distance(q));
            }
            for o in &self.config.obstacles {
                let d = p.distance(o.center);
                m.min_obstacle_dist = m.min_obstacle_dist.min(d);
                m.min_obstacle_clearance = m.min_obstacle_clearance.min(d - o.radius - r_s);
            }
            m.min_d_tl = m.min_d_tl.min(tube.dist_left(p));
            m.min_d_tr = m.min_d_tr.min(tube.dist_right(p));
            let s = self.agents[active[k]].v_c.norm();
            m.min_speed = m.min_speed.min(s);
            m.max_speed = m.max_speed.max(s);
        }
        for x in [
            &mut m.min_pair_dist,
            &mut m.min_obstacle_dist,
            &mut m.min_obstacle_clearance,
            &mut m.min_d_tl,
            &mut m.min_d_tr,
            &mut m.min_speed,
            &mut m.max_speed,
        ] {
            *x = nan_if_inf(*x);
        }
        if let Some(mon) = &self.monitor {
            let v = mon.evaluate(&pos, t).map_err(|e| SimError::Runtime { id: usize::MAX, t, source: e.into() })?.total();
            m.v_total = v;
            m.dv = self.last_v.map_or(0.0, |prev| v - prev);
            self.last_v = Some(v);
        }
        Ok(m)
    }

    fn sample(&self, trace: &mut Trace, active: &[usize]) {
        let t = self.time();
        for &i in active {
            let a = &self.agents[i];
            trace.trajectory.push(TrajectoryRow { t, id: a.id, p: a.p, v: a.v_c, sub_tube: a.sub_tube, active: true });
        }
    }

    /// Euler update of the active agents and removal at the finishing line.
    fn advance(&mut self, active: &[usize], trace: &mut Trace) {
        self.step += 1;
        let t = self.time();
        let dt = self.config.dt;
        let eps_0 = self.config.params.eps_0;
        let mut removed = false;
        for &i in active {
            let a = &mut self.agents[i];
            a.p += a.v_c * dt;
            if self.config.tube.finishing_reached(a.p, eps_0) {
                a.active = false;
                a.removed_at = Some(t);
                removed = true;
                trace.trajectory.push(TrajectoryRow { t, id: a.id, p: a.p, v: a.v_c, sub_tube: a.sub_tube, active: false });
            }
        }
        if removed {
            trace.removal_steps.push(self.step);
        }
    }

    /// Runs to `t_end` or until every agent has left; trajectories are
    /// sampled every `traj_every` steps (0 disables them).
    pub fn run(mut self, traj_every: usize) -> Result<Trace, SimError> {
        let n_steps = (self.config.t_end / self.config.dt).round() as usize;
        let mut trace = Trace::default();
        loop {
            let active = self.active_indices();
            trace.fallbacks += self.commands(&active)?;
            let m = self.metrics(&active)?;
            trace.metrics.push(m);
            if traj_every > 0 && self.step.is_multiple_of(traj_every) {
                self.sample(&mut trace, &active);
            }
            if self.step >= n_steps || active.is_empty() {
                break;
            }
            self.advance(&active, &mut trace);
        }
        trace.removed_at = self.agents.iter().map(|a| a.removed_at).collect();
        Ok(trace)
    }
}

pub fn run(config: SimConfig, traj_every: usize) -> Result<Trace, SimError> {
    Simulation::new(config)?.run(traj_every)
}

/// Descent tolerance: `TOL_V_FACTOR` times the largest `|V_{k+1} − 2V_k + V_{k−1}|`,
/// skipping second differences that straddle a removal.
pub fn calibrate_tol_v(trace: &Trace) -> Option<f64> {
    let v: Vec<f64> = trace.metrics.iter().map(|m| m.v_total).collect();
    if v.len() < 3 || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let near_removal = |k: usize| trace.removal_steps.iter().any(|&s| s + 1 >= k && s <= k + 1);
    let max = (1..v.len() - 1).filter(|&k| !near_removal(k)).map(|k| (v[k + 1] - 2.0 * v[k] + v[k - 1]).abs()).fold(0.0, f64::max);
    Some(TOL_V_FACTOR * max)
}

/// Pass/fail of each safety invariant over a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub min_pair_dist: f64,
    pub min_obstacle_dist: f64,
    pub min_obstacle_clearance: f64,
    pub min_d_tl: f64,
    pub min_d_tr: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub pairs_ok: bool,
    pub obstacles_ok: bool,
    pub boundary_ok: bool,
    pub speed_ok: bool,
    pub all_removed: bool,
    pub last_removal: Option<f64>,
    pub fallbacks: usize,
    pub tol_v: Option<f64>,
    pub max_dv: Option<f64>,
    pub min_v: Option<f64>,
    pub descent_ok: Option<bool>,
}

impl Summary {
    pub fn from_trace(trace: &Trace, config: &SimConfig) -> Self {
        // NaN when no step defines the quantity.
        let fold_min =
            |f: fn(&StepMetrics) -> f64| trace.metrics.iter().map(f).filter(|x| !x.is_nan()).reduce(f64::min).unwrap_or(f64::NAN);
        let fold_max =
            |f: fn(&StepMetrics) -> f64| trace.metrics.iter().map(f).filter(|x| !x.is_nan()).reduce(f64::max).unwrap_or(f64::NAN);
        let p = &config.params;
        let min_pair_dist = fold_min(|m| m.min_pair_dist);
        let min_obstacle_dist = fold_min(|m| m.min_obstacle_dist);
        let min_obstacle_clearance = fold_min(|m| m.min_obstacle_clearance);
        let min_d_tl = fold_min(|m| m.min_d_tl);
        let min_d_tr = fold_min(|m| m.min_d_tr);
        let min_speed = fold_min(|m| m.min_speed);
        let max_speed = fold_max(|m| m.max_speed);
        let all_removed = trace.removed_at.iter().all(Option::is_some);
        let last_removal = if all_removed { trace.removed_at.iter().flatten().copied().reduce(f64::max) } else { None };
        let tol_v = calibrate_tol_v(trace);
        let dvs = trace.metrics.iter().skip(1).map(|m| m.dv).filter(|x| x.is_finite());
        let max_dv = tol_v.map(|_| dvs.fold(f64::NEG_INFINITY, f64::max));
        let min_v = tol_v.map(|_| fold_min(|m| m.v_total));
        let descent_ok = tol_v.map(|tol| max_dv.unwrap() <= tol && min_v.unwrap() >= 0.0);
        let lo = p.v_min.max(p.v - p.v_max_prime);
        let hi = p.v_max.min(p.v + p.v_max_prime);
        Summary {
            pairs_ok: !(min_pair_dist <= 2.0 * p.r_s),
            obstacles_ok: !(min_obstacle_clearance <= 0.0),
            boundary_ok: !(min_d_tl <= p.r_s) && !(min_d_tr <= p.r_s),
            speed_ok: !(min_speed < lo) && !(max_speed > hi),
            min_pair_dist,
            min_obstacle_dist,
            min_obstacle_clearance,
            min_d_tl,
            min_d_tr,
            min_speed,
            max_speed,
            all_removed,
            last_removal,
            fallbacks: trace.fallbacks,
            tol_v,
            max_dv,
            min_v,
            descent_ok,
        }
    }

    /// All safety invariants hold (liveness is reported separately).
    pub fn safe(&self) -> bool {
        self.pairs_ok && self.obstacles_ok && self.boundary_ok && self.speed_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect() -> TrapezoidTube {
        TrapezoidTube::new(Vec2::new(0.0, 3.0), Vec2::new(10.0, 3.0), Vec2::new(0.0, -3.0), Vec2::new(10.0, -3.0), 2.0).unwrap()
    }

    fn config(initial: Vec<Vec2>) -> SimConfig {
        SimConfig {
            dt: DEFAULT_DT,
            t_end: 1.0,
            tube: rect(),
            obstacles: vec![],
            initial,
            params: ControlParams::default(),
            beta: 30f64.to_radians(),
            seed: 0,
            variant: Variant::Modified,
        }
    }

    #[test]
    fn initial_validation() {
        assert!(validate_initial(&config(vec![Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)])).is_empty());
        assert_eq!(validate_initial(&config(vec![Vec2::new(1.0, 0.0), Vec2::new(1.4, 0.0)])).len(), 1);
        assert_eq!(validate_initial(&config(vec![Vec2::new(1.0, 2.9)])).len(), 1);
        let mut c = config(vec![Vec2::new(5.0, 1.0)]);
        c.obstacles.push(Obstacle::new(Vec2::new(5.0, 0.0), 0.9));
        assert_eq!(validate_initial(&c).len(), 1);
    }

    #[test]
    fn lone_agent_euler_step() {
        let mut sim = Simulation::new(config(vec![Vec2::new(1.0, 0.0)])).unwrap();
        let active = sim.active_indices();
        sim.commands(&active).unwrap();
        let mut trace = Trace::default();
        sim.advance(&active, &mut trace);
        assert!((sim.agents[0].p - Vec2::new(1.002, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn removal_at_finishing_line() {
        let mut c = config(vec![Vec2::new(9.9995, 0.0), Vec2::new(8.0, 0.0)]);
        c.t_end = 0.01;
        let sim = Simulation::new(c).unwrap();
        assert!(!sim.agents[0].active);
        assert_eq!(sim.agents[0].removed_at, Some(0.0));
        let trace = sim.run(1).unwrap();
        assert_eq!(trace.metrics[0].n_active, 1);
        assert_eq!(trace.metrics.len(), 11);
    }

    #[test]
    fn zero_duration_gives_single_row() {
        let mut c = config(vec![Vec2::new(1.0, 0.0)]);
        c.t_end = 0.0;
        let trace = run(c, 1).unwrap();
        assert_eq!(trace.metrics.len(), 1);
        assert!((trace.metrics[0].min_speed - 2.0).abs() < 1e-12);
        assert!(trace.metrics[0].min_pair_dist.is_nan());
    }

    #[test]
    fn empty_swarm_stops_immediately() {
        let trace = run(config(vec![]), 1).unwrap();
        assert_eq!(trace.metrics.len(), 1);
        assert_eq!(trace.metrics[0].n_active, 0);
    }

    #[test]
    fn run_to_completion_is_safe_and_repeatable() {
        let mut c = config(vec![Vec2::new(0.6, -0.4), Vec2::new(0.6, 0.4), Vec2::new(1.4, 0.0)]);
        c.t_end = 8.0;
        let a = run(c.clone(), 5).unwrap();
        let b = run(c.clone(), 5).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let s = Summary::from_trace(&a, &c);
        assert!(s.safe(), "{s:?}");
        assert!(s.all_removed);
    }

    #[test]
    fn monitor_flow_term_constant_for_middle_agents() {
        let mut c = config(vec![Vec2::new(2.0, 0.0)]);
        c.variant = Variant::Basic;
        let mon = LyapunovMonitor::new(&c).unwrap();
        // Rectangle: no side area, u_1 = v*, so V_f = c.
        let terms = mon.evaluate(&[Vec2::new(2.0, 0.0)], 0.3).unwrap();
        assert!((terms.flow - mon.offset()).abs() < 1e-12);
        assert!(terms.boundary >= 0.0);
        c.variant = Variant::Modified;
        assert!(matches!(LyapunovMonitor::new(&c), Err(SimError::UnsupportedVariant)));
    }
}

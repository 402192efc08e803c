//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::fs;
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vtube::controller::{validate_feasibility, ControlParams, Snapshot, TubeController, Variant};
use vtube::export::{field_raster, write_trace};
use vtube::geometry::{Obstacle, TrapezoidTube, Vec2};
use vtube::partition::TubePartition;
use vtube::potentials::{sat, ArcSaturation, BarrierParams, Panel};
use vtube::scenario::{parse_scenario, ScenarioFile};
use vtube::simulator::{run, Summary, Trace};

const FD_REL_TOL: f64 = 1e-5;
const GEOM_TOL: f64 = 1e-9;
const MC_POINTS: usize = 100_000;
const RANDOM_SCENARIOS: usize = 20;
const SPEED_STATES: usize = 10_000;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> ScenarioFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn simulate(s: &ScenarioFile) -> (Trace, Summary) {
    let config = s.to_sim_config().expect("config");
    let trace = run(config.clone(), 0).expect("run");
    let summary = Summary::from_trace(&trace, &config);
    (trace, summary)
}

fn trace_bytes(trace: &Trace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).unwrap();
    buf
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Both shipped swarm runs, executed twice for the determinism check.
struct Runs {
    va: [(Trace, Summary); 2],
    vb: [(Trace, Summary); 2],
    va_secs: f64,
    va_t_end: f64,
    vb_t_end: f64,
}

fn runs() -> Runs {
    let (va, vb) = (scenario("sim-va.toml"), scenario("sim-vb.toml"));
    let start = Instant::now();
    let va1 = simulate(&va);
    let va_secs = start.elapsed().as_secs_f64();
    Runs { va: [va1, simulate(&va)], vb: [simulate(&vb), simulate(&vb)], va_secs, va_t_end: va.t_end, vb_t_end: vb.t_end }
}

fn large_swarm(r: &Runs) -> Outcome {
    let s = &r.va[0].1;
    let ok = s.min_pair_dist > 0.5
        && s.min_obstacle_dist > 1.15
        && s.min_d_tl > 0.25
        && s.min_d_tr > 0.25
        && s.min_speed >= 0.5
        && s.max_speed <= 3.5;
    verdict(
        ok,
        format!(
            "pair {:.4} > 0.5, obstacle {:.4} > 1.15, d_tl {:.4} / d_tr {:.4} > 0.25, speed [{:.4}, {:.4}] in [0.5, 3.5], {:.1} s",
            s.min_pair_dist, s.min_obstacle_dist, s.min_d_tl, s.min_d_tr, s.min_speed, s.max_speed, r.va_secs
        ),
    )
}

fn small_swarm(r: &Runs) -> Outcome {
    let s = &r.vb[0].1;
    let removed_by = s.last_removal.filter(|&t| t <= 50.0);
    let ok = s.min_pair_dist > 0.15 && s.min_obstacle_dist > 0.145 && s.min_speed >= 0.01 && s.max_speed <= 0.09 && removed_by.is_some();
    verdict(
        ok,
        format!(
            "pair {:.4} > 0.15, obstacle {:.4} > 0.145, speed [{:.4}, {:.4}] in [0.01, 0.09], last removal {:?} <= 50 s",
            s.min_pair_dist, s.min_obstacle_dist, s.min_speed, s.max_speed, s.last_removal
        ),
    )
}

fn liveness(r: &Runs) -> Outcome {
    let check = |pair: &[(Trace, Summary); 2], t_end: f64| {
        let done = pair[0].1.all_removed && pair[0].1.last_removal.is_some_and(|t| t < t_end);
        let same = trace_bytes(&pair[0].0) == trace_bytes(&pair[1].0) && pair[0].1.last_removal == pair[1].1.last_removal;
        (done, same, pair[0].1.last_removal)
    };
    let (va_done, va_same, va_last) = check(&r.va, r.va_t_end);
    let (vb_done, vb_same, vb_last) = check(&r.vb, r.vb_t_end);
    verdict(
        va_done && vb_done && va_same && vb_same,
        format!(
            "large: last removal {va_last:?} < {}, repeat identical {va_same}; small: last removal {vb_last:?} < {}, repeat identical {vb_same}",
            r.va_t_end, r.vb_t_end
        ),
    )
}

fn random_partition_scenario(rng: &mut ChaCha8Rng) -> Option<(TrapezoidTube, Vec<Obstacle>, f64)> {
    let length = rng.gen_range(20.0..35.0);
    let w0 = rng.gen_range(7.0..10.0);
    let w1 = w0 - rng.gen_range(0.0..2.0);
    let off = rng.gen_range(-0.5..0.5);
    let tube =
        TrapezoidTube::new(Vec2::new(0.0, w0), Vec2::new(length, w1 + off), Vec2::new(0.0, -w0), Vec2::new(length, -w1 + off), 2.0).ok()?;
    let p = rng.gen_range(1..=4);
    let slot = length / p as f64;
    let obstacles = (0..p)
        .map(|k| {
            let x = slot * (k as f64 + rng.gen_range(0.35..0.65));
            Obstacle::new(Vec2::new(x, rng.gen_range(-2.5..2.5)), rng.gen_range(0.3..1.0))
        })
        .collect();
    Some((tube, obstacles, rng.gen_range(20f64..40.0).to_radians()))
}

/// Sampled coverage gaps, overlaps, and points `locate` gets wrong.
fn monte_carlo(part: &TubePartition, rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let parent = &part.parent;
    let vs = parent.vertices();
    let (lo, hi) =
        vs.iter().fold((Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)), |(a, b), v| {
            (Vec2::new(a.x.min(v.x), a.y.min(v.y)), Vec2::new(b.x.max(v.x), b.y.max(v.y)))
        });
    let (mut gaps, mut overlaps, mut mislocated, mut n) = (0, 0, 0, 0);
    while n < MC_POINTS {
        let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if !parent.contains(p) {
            continue;
        }
        n += 1;
        let mut insets: Vec<f64> = part.sub_tubes.iter().filter_map(|s| s.tube.as_ref()).map(|t| t.inset(p)).collect();
        insets.extend(part.triangles.iter().map(|t| t.inset(p)));
        if !insets.iter().any(|&d| d >= -GEOM_TOL) {
            gaps += 1;
        }
        if insets.iter().filter(|&&d| d > GEOM_TOL).count() > 1 {
            overlaps += 1;
        }
        if !part.triangles.iter().any(|t| t.inset(p) > -GEOM_TOL) {
            let found = part.locate(p, part.nearest(p)).ok().and_then(|i| part.tube(i)).is_some_and(|t| t.inset(p) >= -GEOM_TOL);
            if !found {
                mislocated += 1;
            }
        }
    }
    (gaps, overlaps, mislocated)
}

fn partition_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let va = scenario("sim-va.toml");
    let mut cases = vec![(va.build_tube().unwrap(), va.obstacles.clone(), va.beta())];
    let params = ControlParams::default();
    let mut tries = 0;
    while cases.len() < RANDOM_SCENARIOS + 1 && tries < 5000 {
        tries += 1;
        let Some((tube, obstacles, beta)) = random_partition_scenario(&mut rng) else { continue };
        let Ok(part) = TubePartition::build(&tube, &obstacles, &params, beta) else { continue };
        if validate_feasibility(&tube, &params, Variant::Modified).passed()
            && part.feasibility(&params, Variant::Modified).iter().all(|(_, r)| r.passed())
        {
            cases.push((tube, obstacles, beta));
        }
    }
    if cases.len() < RANDOM_SCENARIOS + 1 {
        return Err(format!("only {} random scenarios generated", cases.len() - 1));
    }
    let (mut gaps, mut overlaps, mut mislocated, mut bad_count, mut infeasible) = (0, 0, 0, 0, 0);
    for (tube, obstacles, beta) in &cases {
        let part = TubePartition::build(tube, obstacles, &params, *beta).expect("accepted above");
        if part.len() != 3 * obstacles.len() + 1 {
            bad_count += 1;
        }
        infeasible += part.feasibility(&params, Variant::Modified).iter().filter(|(_, r)| !r.passed()).count();
        let (g, o, m) = monte_carlo(&part, &mut rng);
        gaps += g;
        overlaps += o;
        mislocated += m;
    }
    verdict(
        gaps + overlaps + mislocated + bad_count + infeasible == 0,
        format!(
            "{} scenarios x {MC_POINTS} points: {gaps} uncovered, {overlaps} overlapping, {mislocated} mislocated, {bad_count} wrong counts, {infeasible} infeasible sub-tubes",
            cases.len()
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Fourth-order central difference.
fn central(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn derivatives() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_vn, mut worst_panel, mut worst_u2) = (0f64, 0f64, 0f64);

    for _ in 0..50 {
        let d1 = rng.gen_range(0.1..1.0);
        let b = BarrierParams::new(
            rng.gen_range(0.5..2.0),
            d1,
            d1 * rng.gen_range(1.2..3.0),
            rng.gen_range(1e-6..1e-2),
            rng.gen_range(1e-6..1e-2),
        )
        .unwrap();
        let kink = b.d1 * ArcSaturation::new(b.eps_s).x2();
        let x = rng.gen_range(kink + 1e-3 * (b.d2 - kink)..b.d2 - 1e-3 * (b.d2 - kink));
        let h = 1e-3 * (x - kink).min(b.d2 - x);
        let fd = central(|s| b.value(x + s).unwrap(), h);
        worst_vn = worst_vn.max(rel(b.deriv(x).unwrap(), fd));
    }

    for _ in 0..50 {
        let len = rng.gen_range(1.0..30.0);
        let a = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let dir = Vec2::E1.rotated(rng.gen_range(0.0..std::f64::consts::TAU));
        let r = rng.gen_range(0.0..0.5);
        let panel = Panel::new(a, a + dir * len, r).unwrap();
        let clearance = 10f64.powf(rng.gen_range(-3.0..0.7));
        let along = rng.gen_range(-0.3..1.3) * len;
        let foot = a + dir * along.clamp(0.0, len);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        // Beyond an endpoint the offset is radial from that endpoint.
        let p = if (0.0..=len).contains(&along) {
            foot + dir.perp() * (side * (r + clearance))
        } else {
            let out = (dir * (along - along.clamp(0.0, len)) + dir.perp() * (side * rng.gen_range(0.0..1.0))).normalized().unwrap();
            foot + out * (r + clearance)
        };
        let g = panel.grad(p).unwrap();
        let h = 1e-3 * clearance.min(1.0);
        let fd = Vec2::new(central(|s| panel.phi(p + Vec2::E1 * s).unwrap(), h), central(|s| panel.phi(p + Vec2::E2 * s).unwrap(), h));
        worst_panel = worst_panel.max((g - fd).norm() / g.norm());
    }

    let params = ControlParams::default();
    let barrier = params.agent_barrier().unwrap();
    for _ in 0..50 {
        let n = rng.gen_range(1..=4);
        let mut positions = vec![Vec2::ZERO];
        while positions.len() < n + 1 {
            let q = Vec2::E1.rotated(rng.gen_range(0.0..std::f64::consts::TAU)) * rng.gen_range(barrier.d1 * 1.02..barrier.d2 * 0.99);
            if positions[1..].iter().all(|o| o.distance(q) > barrier.d1) {
                positions.push(q);
            }
        }
        let snapshot = Snapshot::new(positions.clone());
        let u2 = vtube::controller::u2_avoidance(&snapshot, 0, &params).unwrap();
        let energy = |p: Vec2| positions[1..].iter().map(|q| barrier.value(p.distance(*q)).unwrap()).sum::<f64>();
        let closest = positions[1..].iter().map(|q| q.norm()).fold(f64::INFINITY, f64::min);
        let h = 1e-3 * (closest - barrier.d1);
        let grad = Vec2::new(central(|s| energy(Vec2::E1 * s), h), central(|s| energy(Vec2::E2 * s), h));
        if u2.norm() > 0.0 {
            worst_u2 = worst_u2.max(rel(u2.norm(), grad.norm())).max((u2 + grad).norm() / u2.norm());
        }
    }

    verdict(
        worst_vn < FD_REL_TOL && worst_panel < FD_REL_TOL && worst_u2 < FD_REL_TOL,
        format!("worst relative error: dV_n/dx {worst_vn:.2e}, panel gradient {worst_panel:.2e}, u2 {worst_u2:.2e} (< {FD_REL_TOL:.0e})"),
    )
}

fn lyapunov() -> Outcome {
    let s = scenario("lyapunov.toml");
    let (trace, summary) = simulate(&s);
    let min_v = trace.metrics.iter().map(|m| m.v_total).filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    let (Some(tol), Some(max_dv)) = (summary.tol_v, summary.max_dv) else {
        return Err("monitor inactive".into());
    };
    verdict(
        max_dv <= tol && min_v >= 0.0 && summary.descent_ok == Some(true),
        format!("{} steps: max dV {max_dv:.3e} <= tol_V {tol:.3e}, min V {min_v:.3e} >= 0", trace.metrics.len()),
    )
}

fn random_tube(rng: &mut ChaCha8Rng, scale: f64) -> Option<TrapezoidTube> {
    let length = rng.gen_range(4.0..30.0) * scale;
    let w0 = rng.gen_range(1.5..10.0) * scale;
    let l1 = w0 * rng.gen_range(0.3..1.3);
    let r1 = w0 * rng.gen_range(0.3..1.3);
    let rot = rng.gen_range(0.0..std::f64::consts::TAU);
    let shift = Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
    let f = |p: Vec2| p.rotated(rot) + shift;
    TrapezoidTube::new(
        f(Vec2::new(0.0, w0)),
        f(Vec2::new(length, l1)),
        f(Vec2::new(0.0, -w0)),
        f(Vec2::new(length, -r1)),
        rng.gen_range(1.2..3.0),
    )
    .ok()
}

fn small_params() -> ControlParams {
    ControlParams { v: 0.06, v_max_prime: 0.03, v_min: 0.01, v_max: 0.09, r_s: 0.075, r_a: 0.125, eps_0: 0.005, ..ControlParams::default() }
}

fn speed_envelope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut states, mut tubes, mut violations, mut worst_raw) = (0usize, 0usize, 0usize, 0f64);
    while states < SPEED_STATES {
        let small = rng.gen_bool(0.3);
        let base = if small { small_params() } else { ControlParams::default() };
        let Some(tube) = random_tube(&mut rng, if small { 0.06 } else { 1.0 }) else { continue };
        let params = ControlParams { k_t: tube.k_t, ..base };
        let variant = if tubes % 5 == 4 { Variant::Basic } else { Variant::Modified };
        if !validate_feasibility(&tube, &params, variant).passed() {
            continue;
        }
        let Ok(controller) = TubeController::new(tube.clone(), params, variant) else { continue };
        tubes += 1;
        let vs = tube.vertices();
        let (lo, hi) =
            vs.iter().fold((Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)), |(a, b), v| {
                (Vec2::new(a.x.min(v.x), a.y.min(v.y)), Vec2::new(b.x.max(v.x), b.y.max(v.y)))
            });
        let (env_lo, env_hi) = (params.v - params.v_max_prime, params.v + params.v_max_prime);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let mut positions: Vec<Vec2> = Vec::with_capacity(n);
            let mut guard = 0;
            while positions.len() < n && guard < 1000 {
                guard += 1;
                let p = Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                if tube.contains(p)
                    && tube.dist_left(p) > params.r_s
                    && tube.dist_right(p) > params.r_s
                    && positions.iter().all(|q| q.distance(p) > 2.0 * params.r_s)
                {
                    positions.push(p);
                }
            }
            let snapshot = Snapshot::new(positions);
            for i in 0..snapshot.len() {
                let u = controller.command(&snapshot, i).map_err(|e| format!("command failed: {e}"))?;
                let t = controller.terms(&snapshot, i, false).unwrap();
                let raw = (t.u1 + sat(t.u2 + t.u34, params.v_max_prime)).norm();
                worst_raw = worst_raw.max((raw - env_hi).max(env_lo - raw).max(0.0) / env_hi);
                if !(u.norm() >= env_lo && u.norm() <= env_hi && u.norm() >= params.v_min && u.norm() <= params.v_max) {
                    violations += 1;
                }
                states += 1;
            }
        }
    }
    verdict(
        violations == 0 && worst_raw < 1e-12,
        format!(
            "{states} commands over {tubes} tubes: {violations} outside [v - v', v + v'], largest pre-rounding excursion {worst_raw:.1e}"
        ),
    )
}

fn rasters() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, ghosts) in [("field-tube.toml", vec![Vec2::new(8.0, 0.3)]), ("field-obstacle.toml", vec![])] {
        let s = scenario(name);
        let tube = s.build_tube().unwrap();
        let part = (!s.obstacles.is_empty()).then(|| TubePartition::build(&tube, &s.obstacles, &s.params, s.beta()).unwrap());
        let triangles = part.as_ref().map(|p| p.triangles.clone()).unwrap_or_default();
        let raster = field_raster(&tube, part, &s.params, s.variant, &ghosts, 80, 40).unwrap();
        let (mut inside, mut bad_norm, mut bad_progress, mut leaked) = (0, 0, 0, 0);
        for c in &raster.cells {
            if triangles.iter().any(|t| t.contains(c.p)) && c.command.is_some() {
                leaked += 1;
            }
            let Some(u) = c.command else { continue };
            inside += 1;
            if !(u.norm() >= s.params.v_min && u.norm() <= s.params.v_max) {
                bad_norm += 1;
            }
            if tube.t_c.dot(u) <= 0.0 || u.x.is_nan() {
                bad_progress += 1;
            }
        }
        ok &= inside > 0 && bad_norm + bad_progress + leaked == 0;
        details.push(format!("{name}: {inside} cells, {bad_norm} off-norm, {bad_progress} non-progressing, {leaked} in triangles"));
    }
    verdict(ok, details.join("; "))
}

fn guarded(f: impl FnOnce() -> Outcome + panic::UnwindSafe) -> Outcome {
    panic::catch_unwind(f).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() -> ExitCode {
    let sims = panic::catch_unwind(runs).map_err(|_| "simulation panicked".to_string());
    let from_runs = |f: fn(&Runs) -> Outcome| match &sims {
        Ok(r) => guarded(panic::AssertUnwindSafe(|| f(r))),
        Err(e) => Err(e.clone()),
    };
    let results = [
        ("1 large swarm safety", from_runs(large_swarm)),
        ("2 small swarm safety and completion", from_runs(small_swarm)),
        ("3 liveness and determinism", from_runs(liveness)),
        ("4 partition coverage and feasibility", guarded(partition_properties)),
        ("5 analytic derivatives", guarded(derivatives)),
        ("6 Lyapunov descent", guarded(lyapunov)),
        ("7 speed envelope", guarded(speed_envelope)),
        ("8 field rasters", guarded(rasters)),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("criterion {name}: PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL  {d}");
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

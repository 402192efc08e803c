//! Scenario files: TOML text to a validated simulation config and back.
//!
//! ```toml
//! [run]
//! t_end = 14.0            # required; dt = 0.001, seed = 0, variant = "modified", beta_deg = 30
//!
//! [tube]
//! p_l0 = [0.0, 8.0]
//! p_l1 = [26.0, 7.0]
//! p_r0 = [0.0, -8.0]
//! p_r1 = [26.0, -7.0]
//!
//! [params]                # v, v_max_prime, v_min, v_max, r_s, r_a required
//! v = 2.0
//!
//! [[obstacles]]
//! center = [12.0, 0.5]
//! radius = 0.9
//!
//! [agents]                # either explicit positions ...
//! positions = [[1.0, 0.0], [1.0, 1.0]]
//! # ... or a grid in the tube frame: origin + i·spacing·t_c + j·spacing·n_c
//! # grid = { cols = 15, rows = 8, spacing = 0.8, origin = [0.5, -3.0] }
//! ```

use std::fmt;

use thiserror::Error;
use toml::{Table, Value};

use crate::controller::{validate_feasibility, ControlParams, FeasibilityReport, Variant};
use crate::geometry::{Obstacle, TrapezoidTube, Vec2};
use crate::partition::TubePartition;
use crate::simulator::{validate_initial, SimConfig, DEFAULT_DT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema errors:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("validation errors:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentSpec {
    Positions(Vec<Vec2>),
    /// `cols` agents along `t_c`, `rows` across along `n_c`.
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
        origin: Vec2,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub variant: Variant,
    pub beta_deg: f64,
    /// `p_l0, p_l1, p_r0, p_r1`.
    pub tube: [Vec2; 4],
    pub params: ControlParams,
    /// Accepted for parameter lists that carry them; not used.
    pub k_5: Option<f64>,
    pub eps_o: Option<f64>,
    pub obstacles: Vec<Obstacle>,
    pub agents: AgentSpec,
}

/// Collects every schema problem with its path.
struct Walker {
    errors: Vec<String>,
}

impl Walker {
    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                self.errors.push(format!("{}: unknown key", join(path, key)));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, key: &str, path: &str, required: bool) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(x)) => Some(x),
            Some(_) => {
                self.errors.push(format!("{}: expected a table", join(path, key)));
                None
            }
            None => {
                if required {
                    self.errors.push(format!("{}: missing table", join(path, key)));
                }
                None
            }
        }
    }

    fn number_value(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.errors.push(format!("{path}: expected a number"));
                None
            }
        }
    }

    fn number(&mut self, t: &Table, key: &str, path: &str, required: bool) -> Option<f64> {
        match t.get(key) {
            Some(v) => self.number_value(v, &join(path, key)),
            None => {
                if required {
                    self.errors.push(format!("{}: missing", join(path, key)));
                }
                None
            }
        }
    }

    fn count(&mut self, t: &Table, key: &str, path: &str) -> Option<usize> {
        match t.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(_) => {
                self.errors.push(format!("{}: expected a non-negative integer", join(path, key)));
                None
            }
            None => {
                self.errors.push(format!("{}: missing", join(path, key)));
                None
            }
        }
    }

    fn point_value(&mut self, v: &Value, path: &str) -> Option<Vec2> {
        match v {
            Value::Array(a) if a.len() == 2 => {
                let x = self.number_value(&a[0], &format!("{path}[0]"));
                let y = self.number_value(&a[1], &format!("{path}[1]"));
                Some(Vec2::new(x?, y?))
            }
            _ => {
                self.errors.push(format!("{path}: expected a point [x, y]"));
                None
            }
        }
    }

    fn point(&mut self, t: &Table, key: &str, path: &str) -> Option<Vec2> {
        match t.get(key) {
            Some(v) => self.point_value(v, &join(path, key)),
            None => {
                self.errors.push(format!("{}: missing", join(path, key)));
                None
            }
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

const PARAM_KEYS: [&str; 17] = [
    "v",
    "v_max_prime",
    "v_min",
    "v_max",
    "r_s",
    "r_a",
    "k_t",
    "k_2",
    "k_3",
    "k_5",
    "eps_m",
    "eps_t",
    "eps_s",
    "eps_o",
    "eps_0",
    "ext_factor",
    "eps",
];

/// Syntax and schema only; see [`ScenarioFile::validate`].
pub fn parse_unvalidated(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string().trim_end().to_string()))?;
    let mut w = Walker { errors: Vec::new() };
    w.check_keys(&root, "", &["run", "tube", "params", "obstacles", "agents"]);

    let empty = Table::new();
    let run = w.table(&root, "run", "", true).unwrap_or(&empty);
    w.check_keys(run, "run", &["name", "dt", "t_end", "seed", "variant", "beta_deg"]);
    let name = match run.get("name") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            w.errors.push("run.name: expected a string".into());
            None
        }
        None => None,
    };
    let dt = w.number(run, "dt", "run", false).unwrap_or(DEFAULT_DT);
    let t_end = w.number(run, "t_end", "run", true);
    let seed = match run.get("seed") {
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            w.errors.push("run.seed: expected a non-negative integer".into());
            0
        }
        None => 0,
    };
    let variant = match run.get("variant") {
        Some(Value::String(s)) => s.parse().unwrap_or_else(|e: String| {
            w.errors.push(format!("run.variant: {e}"));
            Variant::default()
        }),
        Some(_) => {
            w.errors.push("run.variant: expected a string".into());
            Variant::default()
        }
        None => Variant::default(),
    };
    let beta_deg = w.number(run, "beta_deg", "run", false).unwrap_or(30.0);

    let tube_t = w.table(&root, "tube", "", true).unwrap_or(&empty);
    w.check_keys(tube_t, "tube", &["p_l0", "p_l1", "p_r0", "p_r1"]);
    let vertices = ["p_l0", "p_l1", "p_r0", "p_r1"].map(|k| if tube_t.is_empty() { None } else { w.point(tube_t, k, "tube") });

    let pt = w.table(&root, "params", "", true).unwrap_or(&empty);
    w.check_keys(pt, "params", &PARAM_KEYS);
    let d = ControlParams::default();
    let req = |w: &mut Walker, k: &str| w.number(pt, k, "params", true);
    let opt = |w: &mut Walker, k: &str, dflt: f64| w.number(pt, k, "params", false).unwrap_or(dflt);
    let v = req(&mut w, "v");
    let v_max_prime = req(&mut w, "v_max_prime");
    let v_min = req(&mut w, "v_min");
    let v_max = req(&mut w, "v_max");
    let r_s = req(&mut w, "r_s");
    let r_a = req(&mut w, "r_a");
    // A single `eps` sets every small constant not given explicitly.
    let eps = w.number(pt, "eps", "params", false);
    let params_rest = (
        opt(&mut w, "k_t", d.k_t),
        opt(&mut w, "k_2", d.k_2),
        opt(&mut w, "k_3", d.k_3),
        opt(&mut w, "eps_m", eps.unwrap_or(d.eps_m)),
        opt(&mut w, "eps_t", eps.unwrap_or(d.eps_t)),
        opt(&mut w, "eps_s", eps.unwrap_or(d.eps_s)),
        opt(&mut w, "eps_0", d.eps_0),
        opt(&mut w, "ext_factor", d.ext_factor),
    );
    let k_5 = w.number(pt, "k_5", "params", false);
    let eps_o = w.number(pt, "eps_o", "params", false);

    let mut obstacles = Vec::new();
    match root.get("obstacles") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let path = format!("obstacles[{i}]");
                match item {
                    Value::Table(t) => {
                        w.check_keys(t, &path, &["center", "radius"]);
                        let c = w.point(t, "center", &path);
                        let r = w.number(t, "radius", &path, true);
                        if let (Some(c), Some(r)) = (c, r) {
                            obstacles.push(Obstacle::new(c, r));
                        }
                    }
                    _ => w.errors.push(format!("{path}: expected a table")),
                }
            }
        }
        Some(_) => w.errors.push("obstacles: expected an array of tables".into()),
    }

    let at = w.table(&root, "agents", "", true);
    let agents = at.and_then(|at| {
        w.check_keys(at, "agents", &["positions", "grid"]);
        match (at.get("positions"), at.get("grid")) {
            (Some(_), Some(_)) => {
                w.errors.push("agents: give either positions or grid, not both".into());
                None
            }
            (Some(Value::Array(items)), None) => {
                let pts: Vec<Option<Vec2>> =
                    items.iter().enumerate().map(|(i, v)| w.point_value(v, &format!("agents.positions[{i}]"))).collect();
                pts.into_iter().collect::<Option<Vec<_>>>().map(AgentSpec::Positions)
            }
            (Some(_), None) => {
                w.errors.push("agents.positions: expected an array of points".into());
                None
            }
            (None, Some(Value::Table(g))) => {
                w.check_keys(g, "agents.grid", &["rows", "cols", "spacing", "origin"]);
                let rows = w.count(g, "rows", "agents.grid");
                let cols = w.count(g, "cols", "agents.grid");
                let spacing = w.number(g, "spacing", "agents.grid", true);
                let origin = w.point(g, "origin", "agents.grid");
                Some(AgentSpec::Grid { rows: rows?, cols: cols?, spacing: spacing?, origin: origin? })
            }
            (None, Some(_)) => {
                w.errors.push("agents.grid: expected a table".into());
                None
            }
            (None, None) => {
                w.errors.push("agents: missing positions or grid".into());
                None
            }
        }
    });

    if !w.errors.is_empty() {
        return Err(ScenarioError::Schema(w.errors));
    }
    let (k_t, k_2, k_3, eps_m, eps_t, eps_s, eps_0, ext_factor) = params_rest;
    let unwrap = |x: Option<f64>| x.expect("schema checked");
    Ok(ScenarioFile {
        name,
        dt,
        t_end: unwrap(t_end),
        seed,
        variant,
        beta_deg,
        tube: vertices.map(|p| p.expect("schema checked")),
        params: ControlParams {
            v: unwrap(v),
            v_max_prime: unwrap(v_max_prime),
            v_min: unwrap(v_min),
            v_max: unwrap(v_max),
            r_s: unwrap(r_s),
            r_a: unwrap(r_a),
            k_t,
            k_2,
            k_3,
            eps_m,
            eps_t,
            eps_s,
            eps_0,
            ext_factor,
        },
        k_5,
        eps_o,
        obstacles,
        agents: agents.expect("schema checked"),
    })
}

/// Syntax, schema and full validation, every problem reported at once.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let s = parse_unvalidated(text)?;
    let report = s.validate();
    if report.errors.is_empty() {
        Ok(s)
    } else {
        Err(ScenarioError::Validation(report.errors))
    }
}

/// Feasibility reports for the parent tube and every sub-tube, plus the
/// list of problems that make the scenario unusable.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub reports: Vec<(String, FeasibilityReport)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, r) in &self.reports {
            writeln!(f, "{label}:\n{r}")?;
        }
        if self.errors.is_empty() {
            write!(f, "all checks pass")
        } else {
            writeln!(f, "{} problem(s):", self.errors.len())?;
            for e in &self.errors {
                writeln!(f, "  {e}")?;
            }
            Ok(())
        }
    }
}

impl ScenarioFile {
    pub fn build_tube(&self) -> Result<TrapezoidTube, String> {
        let [l0, l1, r0, r1] = self.tube;
        TrapezoidTube::new(l0, l1, r0, r1, self.params.k_t).map_err(|e| format!("tube: {e}"))
    }

    pub fn initial_positions(&self, tube: &TrapezoidTube) -> Vec<Vec2> {
        match &self.agents {
            AgentSpec::Positions(p) => p.clone(),
            AgentSpec::Grid { rows, cols, spacing, origin } => {
                let mut out = Vec::with_capacity(rows * cols);
                for i in 0..*cols {
                    for j in 0..*rows {
                        out.push(*origin + tube.t_c * (i as f64 * spacing) + tube.n_c * (j as f64 * spacing));
                    }
                }
                out
            }
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta_deg.to_radians()
    }

    /// Every problem: timing, parameters, tube shape, partition, speed and
    /// angle margins of each sub-tube, and the initial placement.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let e = &mut rep.errors;
        if !(self.dt > 0.0) {
            e.push(format!("run.dt: must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            e.push(format!("run.t_end: must be non-negative, got {}", self.t_end));
        }
        if !(self.beta_deg > 0.0 && self.beta_deg < 90.0) {
            e.push(format!("run.beta_deg: must lie in (0, 90), got {}", self.beta_deg));
        }
        if let AgentSpec::Grid { spacing, .. } = &self.agents {
            if !(*spacing > 0.0) {
                e.push(format!("agents.grid.spacing: must be positive, got {spacing}"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                e.push(format!("obstacles[{i}].radius: must be positive, got {}", o.radius));
            }
        }
        e.extend(self.params.problems(self.variant).into_iter().map(|m| format!("params: {m}")));
        let tube = match self.build_tube() {
            Ok(t) => t,
            Err(m) => {
                e.push(m);
                return rep;
            }
        };
        let parent = validate_feasibility(&tube, &self.params, self.variant);
        for c in parent.failures() {
            e.push(format!("tube: {} fails: {} [{} vs {}]", c.name, c.relation, c.lhs, c.rhs));
        }
        rep.reports.push(("tube".into(), parent));
        if !self.obstacles.is_empty() && self.beta_deg > 0.0 && self.beta_deg < 90.0 && rep.errors.is_empty() {
            match TubePartition::build(&tube, &self.obstacles, &self.params, self.beta()) {
                Ok(part) => {
                    for (i, r) in part.feasibility(&self.params, self.variant) {
                        for c in r.failures() {
                            rep.errors.push(format!("sub-tube {i}: {} fails: {} [{} vs {}]", c.name, c.relation, c.lhs, c.rhs));
                        }
                        rep.reports.push((format!("sub-tube {i} ({})", part.sub_tubes[i].kind), r));
                    }
                }
                Err(err) => rep.errors.push(format!("partition: {err}")),
            }
        }
        if rep.errors.is_empty() {
            let cfg = self.sim_config_unchecked(tube);
            rep.errors.extend(validate_initial(&cfg).into_iter().map(|m| format!("agents: {m}")));
        }
        rep
    }

    fn sim_config_unchecked(&self, tube: TrapezoidTube) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_end: self.t_end,
            initial: self.initial_positions(&tube),
            tube,
            obstacles: self.obstacles.clone(),
            params: self.params,
            beta: self.beta(),
            seed: self.seed,
            variant: self.variant,
        }
    }

    pub fn to_sim_config(&self) -> Result<SimConfig, ScenarioError> {
        let tube = self.build_tube().map_err(|m| ScenarioError::Validation(vec![m]))?;
        Ok(self.sim_config_unchecked(tube))
    }

    pub fn to_toml_string(&self) -> String {
        let pt = |p: Vec2| Value::Array(vec![Value::Float(p.x), Value::Float(p.y)]);
        let mut run = Table::new();
        if let Some(n) = &self.name {
            run.insert("name".into(), Value::String(n.clone()));
        }
        run.insert("dt".into(), Value::Float(self.dt));
        run.insert("t_end".into(), Value::Float(self.t_end));
        run.insert("seed".into(), Value::Integer(self.seed as i64));
        run.insert("variant".into(), Value::String(self.variant.to_string()));
        run.insert("beta_deg".into(), Value::Float(self.beta_deg));

        let mut tube = Table::new();
        for (k, p) in ["p_l0", "p_l1", "p_r0", "p_r1"].iter().zip(self.tube) {
            tube.insert((*k).into(), pt(p));
        }

        let p = &self.params;
        let mut params = Table::new();
        for (k, x) in [
            ("v", p.v),
            ("v_max_prime", p.v_max_prime),
            ("v_min", p.v_min),
            ("v_max", p.v_max),
            ("r_s", p.r_s),
            ("r_a", p.r_a),
            ("k_t", p.k_t),
            ("k_2", p.k_2),
            ("k_3", p.k_3),
            ("eps_m", p.eps_m),
            ("eps_t", p.eps_t),
            ("eps_s", p.eps_s),
            ("eps_0", p.eps_0),
            ("ext_factor", p.ext_factor),
        ] {
            params.insert(k.into(), Value::Float(x));
        }
        if let Some(x) = self.k_5 {
            params.insert("k_5".into(), Value::Float(x));
        }
        if let Some(x) = self.eps_o {
            params.insert("eps_o".into(), Value::Float(x));
        }

        let mut agents = Table::new();
        match &self.agents {
            AgentSpec::Positions(ps) => {
                agents.insert("positions".into(), Value::Array(ps.iter().map(|&q| pt(q)).collect()));
            }
            AgentSpec::Grid { rows, cols, spacing, origin } => {
                let mut g = Table::new();
                g.insert("rows".into(), Value::Integer(*rows as i64));
                g.insert("cols".into(), Value::Integer(*cols as i64));
                g.insert("spacing".into(), Value::Float(*spacing));
                g.insert("origin".into(), pt(*origin));
                agents.insert("grid".into(), Value::Table(g));
            }
        }

        let mut root = Table::new();
        root.insert("run".into(), Value::Table(run));
        root.insert("tube".into(), Value::Table(tube));
        root.insert("params".into(), Value::Table(params));
        if !self.obstacles.is_empty() {
            let obs = self
                .obstacles
                .iter()
                .map(|o| {
                    let mut t = Table::new();
                    t.insert("center".into(), pt(o.center));
                    t.insert("radius".into(), Value::Float(o.radius));
                    Value::Table(t)
                })
                .collect();
            root.insert("obstacles".into(), Value::Array(obs));
        }
        root.insert("agents".into(), Value::Table(agents));
        toml::to_string(&root).expect("plain tables serialize")
    }
}

//! Scalar building blocks of the vector field: vector saturation, the two
//! smooth transition functions, the nominal Lyapunov-like barrier and the
//! single-panel logarithmic potential.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::LazyLock;

use thiserror::Error;

use crate::geometry::Vec2;

/// Below this clearance `ln(d - r)` is not evaluated.
pub const DELTA_LOG: f64 = 1e-6;

/// Nodes per Gauss–Legendre sub-panel.
pub const GL_ORDER: usize = 32;

/// Growth ratio of consecutive sub-panel lengths away from the nearest
/// singularity of the integrand.
const GRADING: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("invalid interval: d1 = {d1} must be below d2 = {d2}")]
    InvalidInterval { d1: f64, d2: f64 },
    #[error("barrier argument must be positive, got {0}")]
    NonpositiveInput(f64),
    #[error("invalid barrier parameter: {0}")]
    InvalidParameter(String),
    #[error("point is {clearance:.3e} m from the panel threshold (needs > {DELTA_LOG:e})")]
    LogDomainViolation { clearance: f64 },
    #[error("degenerate panel: endpoints coincide")]
    DegeneratePanel,
}

/// Saturation factor: 1 inside the ball of radius `a`, `a/‖x‖` outside.
pub fn kappa(x: Vec2, a: f64) -> f64 {
    let n = x.norm();
    if n <= a {
        1.0
    } else {
        a / n
    }
}

pub fn sat(x: Vec2, a: f64) -> Vec2 {
    x * kappa(x, a)
}

/// Cubic transition from 1 (at `d1` and below) to 0 (at `d2` and above).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothstep {
    d1: f64,
    d2: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Smoothstep {
    pub fn new(d1: f64, d2: f64) -> Result<Self, PotentialError> {
        if !(d1 < d2) || !d1.is_finite() || !d2.is_finite() {
            return Err(PotentialError::InvalidInterval { d1, d2 });
        }
        let den = (d1 - d2).powi(3);
        Ok(Smoothstep { d1, d2, a: -2.0 / den, b: 3.0 * (d1 + d2) / den, c: -6.0 * d1 * d2 / den, d: d2 * d2 * (3.0 * d1 - d2) / den })
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.d1 {
            1.0
        } else if x >= self.d2 {
            0.0
        } else {
            ((self.a * x + self.b) * x + self.c) * x + self.d
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        if x <= self.d1 || x >= self.d2 {
            0.0
        } else {
            (3.0 * self.a * x + 2.0 * self.b) * x + self.c
        }
    }
}

pub fn sigma(x: f64, d1: f64, d2: f64) -> Result<f64, PotentialError> {
    Ok(Smoothstep::new(d1, d2)?.value(x))
}

/// Identity near zero, a circular arc of radius `ε_s`, then constant 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcSaturation {
    eps_s: f64,
    x1: f64,
    x2: f64,
}

impl ArcSaturation {
    pub fn new(eps_s: f64) -> Self {
        // tan 67.5° = 1 + √2
        let x2 = 1.0 + eps_s / (1.0 + std::f64::consts::SQRT_2);
        let x1 = x2 - FRAC_1_SQRT_2 * eps_s;
        ArcSaturation { eps_s, x1, x2 }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.x1 {
            x
        } else if x < self.x2 {
            let u = x - self.x2;
            (1.0 - self.eps_s) + (self.eps_s * self.eps_s - u * u).max(0.0).sqrt()
        } else {
            1.0
        }
    }

    /// One-sided derivative; 0 at `x2` where the arc meets the plateau.
    pub fn deriv(&self, x: f64) -> f64 {
        if x < self.x1 {
            1.0
        } else if x < self.x2 {
            let u = x - self.x2;
            -u / (self.eps_s * self.eps_s - u * u).sqrt()
        } else {
            0.0
        }
    }
}

pub fn s_fun(x: f64, eps_s: f64) -> f64 {
    ArcSaturation::new(eps_s).value(x)
}

/// Nominal Lyapunov-like barrier `V_n(k, x, d1, d2, ε, ε_s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierParams {
    pub k: f64,
    pub d1: f64,
    pub d2: f64,
    pub eps: f64,
    pub eps_s: f64,
    step: Smoothstep,
    arc: ArcSaturation,
}

impl BarrierParams {
    pub fn new(k: f64, d1: f64, d2: f64, eps: f64, eps_s: f64) -> Result<Self, PotentialError> {
        if !(d1 > 0.0) {
            return Err(PotentialError::InvalidParameter(format!("d1 must be positive, got {d1}")));
        }
        let step = Smoothstep::new(d1, d2)?;
        for (name, val) in [("k", k), ("eps", eps), ("eps_s", eps_s)] {
            if !(val > 0.0) || !val.is_finite() {
                return Err(PotentialError::InvalidParameter(format!("{name} must be positive, got {val}")));
            }
        }
        let arc = ArcSaturation::new(eps_s);
        if !(arc.x1 > 0.0) {
            return Err(PotentialError::InvalidParameter(format!("eps_s = {eps_s} too large (x1 <= 0)")));
        }
        Ok(BarrierParams { k, d1, d2, eps, eps_s, step, arc })
    }

    fn denominator(&self, x: f64) -> f64 {
        (1.0 + self.eps) * x - self.d1 * self.arc.value(x / self.d1)
    }

    pub fn value(&self, x: f64) -> Result<f64, PotentialError> {
        if !(x > 0.0) {
            return Err(PotentialError::NonpositiveInput(x));
        }
        if x >= self.d2 {
            return Ok(0.0);
        }
        Ok(self.k * self.step.value(x) / self.denominator(x))
    }

    /// `∂V_n/∂x` by the quotient rule; never positive.
    pub fn deriv(&self, x: f64) -> Result<f64, PotentialError> {
        if !(x > 0.0) {
            return Err(PotentialError::NonpositiveInput(x));
        }
        if x >= self.d2 {
            return Ok(0.0);
        }
        let den = self.denominator(x);
        let dden = (1.0 + self.eps) - self.arc.deriv(x / self.d1);
        let num = self.step.value(x);
        let dnum = self.step.deriv(x);
        Ok(self.k * (dnum * den - num * dden) / (den * den))
    }
}

pub fn v_n(x: f64, p: &BarrierParams) -> Result<f64, PotentialError> {
    p.value(x)
}

pub fn dv_n_dx(x: f64, p: &BarrierParams) -> Result<f64, PotentialError> {
    p.deriv(x)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre polynomial from the Chebyshev guess.
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }
}

static GL: LazyLock<GaussLegendre> = LazyLock::new(|| GaussLegendre::new(GL_ORDER));

/// A straight boundary segment with a logarithmic repulsive potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panel {
    pub a: Vec2,
    pub b: Vec2,
    pub r: f64,
}

impl Panel {
    pub fn new(a: Vec2, b: Vec2, r: f64) -> Result<Self, PotentialError> {
        if a == b || !(a - b).norm().is_finite() {
            return Err(PotentialError::DegeneratePanel);
        }
        if !(r >= 0.0) {
            return Err(PotentialError::InvalidParameter(format!("panel threshold must be >= 0, got {r}")));
        }
        Ok(Panel { a, b, r })
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Composite Gauss–Legendre sum of `f(q(x))·w` along the panel.
    ///
    /// Sub-panels grow geometrically away from the foot of `p`, scaled by the
    /// distance to the nearest complex singularity of `ln(d(x) - r)`, so the
    /// near-wall peak is resolved at any clearance.
    fn integrate<T, F>(&self, p: Vec2, zero: T, mut f: F) -> Result<T, PotentialError>
    where
        T: std::ops::AddAssign + std::ops::Mul<f64, Output = T> + Copy,
        F: FnMut(Vec2, f64) -> T,
    {
        let len = self.length();
        let u = (self.b - self.a) / len;
        let along = (p - self.a).dot(u);
        let perp = (p - self.a).cross(u).abs();
        let foot = along.clamp(0.0, len);
        let q = self.a + u * foot;
        let clearance = p.distance(q) - self.r;
        if !(clearance > DELTA_LOG) {
            return Err(PotentialError::LogDomainViolation { clearance });
        }
        // Singularities in the complex x-plane: d(x) = 0 and d(x) = r.
        let dx = foot - along;
        let mut eta = (dx * dx + perp * perp).sqrt();
        let disc = self.r * self.r - perp * perp;
        let to_r = if disc >= 0.0 {
            let root = disc.sqrt();
            (dx - root).abs().min((dx + root).abs())
        } else {
            (dx * dx - disc).sqrt()
        };
        eta = eta.min(to_r).max(1e-12 * len.max(1.0));

        let gl = &*GL;
        let mut acc = zero;
        let mut segment = |lo: f64, hi: f64, acc: &mut T| {
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (z, w) in gl.nodes.iter().zip(&gl.weights) {
                let x = mid + half * z;
                *acc += f(self.a + u * x, x) * (w * half);
            }
        };
        for (dir, span) in [(1.0, len - foot), (-1.0, foot)] {
            let mut inner = 0.0;
            let mut outer = eta.min(span);
            while inner < span {
                let (lo, hi) = if dir > 0.0 { (foot + inner, foot + outer) } else { (foot - outer, foot - inner) };
                segment(lo, hi, &mut acc);
                inner = outer;
                outer = (outer * GRADING).min(span);
            }
        }
        Ok(acc)
    }

    /// `φ(p) = ∫ ln(‖p − q(x)‖ − r) dx` over the panel.
    pub fn phi(&self, p: Vec2) -> Result<f64, PotentialError> {
        let r = self.r;
        self.integrate(p, 0.0, |q, _| (p.distance(q) - r).ln())
    }

    /// `∇φ(p) = ∫ (p − q)/(d (d − r)) dx`, pointing away from the panel.
    pub fn grad(&self, p: Vec2) -> Result<Vec2, PotentialError> {
        let r = self.r;
        self.integrate(p, Vec2::ZERO, |q, _| {
            let e = p - q;
            let d = e.norm();
            e / (d * (d - r))
        })
    }

    /// Nearest distance from `p` to the panel.
    pub fn distance(&self, p: Vec2) -> f64 {
        crate::geometry::point_segment_distance(p, self.a, self.b)
    }
}

pub fn panel_phi(panel: &Panel, p: Vec2) -> Result<f64, PotentialError> {
    panel.phi(p)
}

pub fn panel_grad(panel: &Panel, p: Vec2) -> Result<Vec2, PotentialError> {
    panel.grad(p)
}

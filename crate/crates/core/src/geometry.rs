//! Planar geometry of the trapezoid virtual tube.
//!
//! A tube is given by four vertices: the entrance base `[p_l0, p_r0]`, the
//! finishing line `[p_l1, p_r1]`, and the two legs `[p_l0, p_l1]` (left) and
//! `[p_r0, p_r1]` (right). Everything else is derived once at construction.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

/// Relative tolerance on the cross product of the two base directions.
pub const PARALLEL_TOL: f64 = 1e-9;

/// `t_cᵀn` values within this band count as zero (leg parallel to `t_c`).
const TILT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };
    pub const E1: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    pub const E2: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Counter-clockwise rotation by 90°.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, s: f64) -> Vec2 {
        self + (o - self) * s
    }

    /// Rotation by `angle` radians about the origin.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate tube: {0}")]
    DegenerateTube(String),
    #[error("k_t must be >= 1, got {0}")]
    InvalidKt(f64),
    #[error("point {0} is in both the left and the right area (L_T and R_T overlap)")]
    AmbiguousRegion(Vec2),
}

/// Which part of the tube a point lies in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TubeRegion {
    Middle,
    Left,
    Right,
    Outside,
}

/// A disc obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Obstacle { center, radius }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapezoidTube {
    pub p_l0: Vec2,
    pub p_l1: Vec2,
    pub p_r0: Vec2,
    pub p_r1: Vec2,
    pub t_c: Vec2,
    pub t_l: Vec2,
    pub t_r: Vec2,
    pub n_c: Vec2,
    pub n_l: Vec2,
    pub n_r: Vec2,
    pub k_t: f64,
}

fn degenerate(msg: impl Into<String>) -> GeometryError {
    GeometryError::DegenerateTube(msg.into())
}

impl TrapezoidTube {
    /// Builds a tube and derives its unit vectors.
    ///
    /// The inward normals of the legs are oriented with the vertex centroid,
    /// so the result does not depend on the handedness of the input.
    pub fn new(p_l0: Vec2, p_l1: Vec2, p_r0: Vec2, p_r1: Vec2, k_t: f64) -> Result<Self, GeometryError> {
        if ![p_l0, p_l1, p_r0, p_r1].iter().all(|p| p.is_finite()) {
            return Err(degenerate("non-finite vertex"));
        }
        if !(k_t >= 1.0) || !k_t.is_finite() {
            return Err(GeometryError::InvalidKt(k_t));
        }
        let t_l = (p_l1 - p_l0).normalized().ok_or_else(|| degenerate("zero-length left leg"))?;
        let t_r = (p_r1 - p_r0).normalized().ok_or_else(|| degenerate("zero-length right leg"))?;
        let n_c = (p_r1 - p_l1).normalized().ok_or_else(|| degenerate("zero-length finishing line"))?;
        let entrance = (p_r0 - p_l0).normalized().ok_or_else(|| degenerate("zero-length entrance"))?;
        if n_c.cross(entrance).abs() > PARALLEL_TOL || n_c.dot(entrance) <= 0.0 {
            return Err(degenerate("bases are not parallel"));
        }
        let area = polygon_area(&[p_l0, p_l1, p_r1, p_r0]);
        if !(area.abs() > 0.0) {
            return Err(degenerate("zero area"));
        }
        let mut t_c = n_c.perp();
        if t_c.dot(p_l1 - p_l0) < 0.0 {
            t_c = -t_c;
        }
        if t_l.dot(t_c) <= 0.0 || t_r.dot(t_c) <= 0.0 {
            return Err(degenerate("legs do not advance along the tube direction"));
        }
        let g = (p_l0 + p_l1 + p_r0 + p_r1) * 0.25;
        let orient = |t: Vec2, anchor: Vec2| {
            let n = t.perp();
            if n.dot(g - anchor) >= 0.0 {
                n
            } else {
                -n
            }
        };
        let n_l = orient(t_l, p_l1);
        let n_r = orient(t_r, p_r1);
        if !(n_l.dot(g - p_l1) > 0.0 && n_r.dot(g - p_r1) > 0.0) {
            return Err(degenerate("centroid lies on a leg"));
        }
        let tube = TrapezoidTube { p_l0, p_l1, p_r0, p_r1, t_c, t_l, t_r, n_c, n_l, n_r, k_t };
        // A self-intersecting quadrilateral puts the right leg outside the left half-plane.
        if tube.dist_left(p_r0) <= 0.0 || tube.dist_left(p_r1) <= 0.0 || tube.dist_right(p_l0) <= 0.0 || tube.dist_right(p_l1) <= 0.0 {
            return Err(degenerate("legs cross"));
        }
        Ok(tube)
    }

    /// Vertices in boundary order: `p_l0, p_l1, p_r1, p_r0`.
    pub fn vertices(&self) -> [Vec2; 4] {
        [self.p_l0, self.p_l1, self.p_r1, self.p_r0]
    }

    pub fn centroid(&self) -> Vec2 {
        (self.p_l0 + self.p_l1 + self.p_r0 + self.p_r1) * 0.25
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let v = self.vertices();
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max(v[i].distance(v[j]));
            }
        }
        d
    }

    /// Signed distance to the left leg line; non-negative inside.
    pub fn dist_left(&self, x: Vec2) -> f64 {
        self.n_l.dot(x - self.p_l1)
    }

    /// Signed distance to the right leg line; non-negative inside.
    pub fn dist_right(&self, x: Vec2) -> f64 {
        self.n_r.dot(x - self.p_r1)
    }

    /// Coordinate along `t_c`, zero on the entrance line.
    pub fn along(&self, x: Vec2) -> f64 {
        self.t_c.dot(x - self.p_r0)
    }

    /// Distance between the two bases.
    pub fn length(&self) -> f64 {
        self.t_c.dot(self.p_r1 - self.p_r0)
    }

    /// Signed distance to the finishing line, positive upstream of it.
    pub fn dist_to_finish(&self, x: Vec2) -> f64 {
        -self.t_c.dot(x - self.p_r1)
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.dist_left(x) >= 0.0 && self.dist_right(x) >= 0.0 && self.dist_to_finish(x) >= 0.0 && self.along(x) >= 0.0
    }

    /// Smallest of the four half-plane slacks; negative outside.
    pub fn inset(&self, x: Vec2) -> f64 {
        self.dist_left(x).min(self.dist_right(x)).min(self.dist_to_finish(x)).min(self.along(x))
    }

    /// `t_cᵀn_l < 0`: the left leg leans into the tube and `L_T` can be non-empty.
    pub fn left_converges(&self) -> bool {
        self.t_c.dot(self.n_l) < -TILT_EPS
    }

    pub fn right_converges(&self) -> bool {
        self.t_c.dot(self.n_r) < -TILT_EPS
    }

    /// Point on the left leg's line at along-coordinate `a`.
    pub fn left_at(&self, a: f64) -> Vec2 {
        let d = self.p_l1 - self.p_l0;
        self.p_l0 + d * ((a - self.along(self.p_l0)) / self.t_c.dot(d))
    }

    pub fn right_at(&self, a: f64) -> Vec2 {
        let d = self.p_r1 - self.p_r0;
        self.p_r0 + d * ((a - self.along(self.p_r0)) / self.t_c.dot(d))
    }

    pub fn classify(&self, x: Vec2, r_a: f64) -> Result<TubeRegion, GeometryError> {
        if !self.contains(x) {
            return Ok(TubeRegion::Outside);
        }
        self.region_of(x, self.dist_left(x), self.dist_right(x), r_a)
    }

    /// Region selection from already-computed distances; no containment check.
    pub(crate) fn region_of(&self, x: Vec2, d_l: f64, d_r: f64, r_a: f64) -> Result<TubeRegion, GeometryError> {
        let band = self.k_t * r_a;
        let left = self.left_converges() && d_l < band;
        let right = self.right_converges() && d_r < band;
        match (left, right) {
            (true, true) => Err(GeometryError::AmbiguousRegion(x)),
            (true, false) => Ok(TubeRegion::Left),
            (false, true) => Ok(TubeRegion::Right),
            (false, false) => Ok(TubeRegion::Middle),
        }
    }

    /// True once `p` is within `eps_0` of the finishing line (or past it).
    pub fn finishing_reached(&self, p: Vec2, eps_0: f64) -> bool {
        self.dist_to_finish(p) <= eps_0
    }

    /// Candidate extremum locations of piecewise-linear functions of
    /// `(d_l, d_r)` over the tube: the vertices plus the points where the
    /// line `d_l = d_r` crosses the boundary.
    fn extremum_candidates(&self) -> Vec<Vec2> {
        let v = self.vertices();
        let mut pts = v.to_vec();
        let g = |x: Vec2| self.dist_left(x) - self.dist_right(x);
        for i in 0..4 {
            let (a, b) = (v[i], v[(i + 1) % 4]);
            let (ga, gb) = (g(a), g(b));
            if ((ga <= 0.0 && gb >= 0.0) || (ga >= 0.0 && gb <= 0.0)) && ga != gb {
                pts.push(a.lerp(b, ga / (ga - gb)));
            }
        }
        pts
    }

    /// Width and length conditions for the tube to hold one agent:
    /// `L_T ∩ R_T = ∅`, `M_T ≠ ∅`, and length along `t_c` above `2 r_a`.
    pub fn assumption3_check(&self, r_a: f64) -> bool {
        self.assumption3_detail(r_a).holds()
    }

    pub fn assumption3_detail(&self, r_a: f64) -> Assumption3 {
        let band = self.k_t * r_a;
        let pts = self.extremum_candidates();
        let (lc, rc) = (self.left_converges(), self.right_converges());
        // L ∩ R ≠ ∅ iff some tube point has max(d_l, d_r) < band.
        let lr_disjoint = if lc && rc {
            let lowest = pts.iter().map(|&x| self.dist_left(x).max(self.dist_right(x))).fold(f64::INFINITY, f64::min);
            lowest >= band
        } else {
            true
        };
        let middle_nonempty = match (lc, rc) {
            (false, false) => true,
            (true, false) => pts.iter().any(|&x| self.dist_left(x) >= band),
            (false, true) => pts.iter().any(|&x| self.dist_right(x) >= band),
            (true, true) => pts.iter().any(|&x| self.dist_left(x).min(self.dist_right(x)) >= band),
        };
        Assumption3 { lr_disjoint, middle_nonempty, length: self.length(), min_length: 2.0 * r_a }
    }
}

/// Breakdown of the tube capacity check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assumption3 {
    pub lr_disjoint: bool,
    pub middle_nonempty: bool,
    pub length: f64,
    pub min_length: f64,
}

impl Assumption3 {
    pub fn holds(&self) -> bool {
        self.lr_disjoint && self.middle_nonempty && self.length > self.min_length
    }
}

/// Signed shoelace area, positive for counter-clockwise order.
pub fn polygon_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * s)
}

/// Distance from `p` to the infinite line through `a` and `b`.
pub fn point_line_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    ((p - a).cross(d) / d.norm()).abs()
}

/// Intersection of the lines `a0 + s·da` and `b0 + u·db`.
pub fn line_intersection(a0: Vec2, da: Vec2, b0: Vec2, db: Vec2) -> Option<Vec2> {
    let den = da.cross(db);
    if den.abs() <= 1e-15 * da.norm() * db.norm() {
        return None;
    }
    let s = (b0 - a0).cross(db) / den;
    Some(a0 + da * s)
}

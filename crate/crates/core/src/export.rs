//! Delimited-text writers for traces, trajectories, rasters and partitions.
//!
//! Every file starts with one header line naming its columns. Numbers are
//! printed in fixed decimal with nine significant digits.

use std::io::{self, Write};

use crate::controller::{ControlParams, Snapshot, TubeController, Variant};
use crate::geometry::{TrapezoidTube, Vec2};
use crate::partition::{SwitchedController, TubePartition};
use crate::simulator::{Summary, Trace};

pub const TRACE_HEADER: &str = "t,min_pair_dist,min_obstacle_dist,min_d_tl,min_d_tr,min_speed,max_speed,n_active,V_total,dV";
pub const TRAJECTORY_HEADER: &str = "t,id,x,y,vx,vy,sub_tube,active";
pub const RASTER_HEADER: &str = "x,y,vx,vy,domain";
pub const PARTITION_HEADER: &str = "kind,index,status,p0x,p0y,p1x,p1y,p2x,p2y,p3x,p3y,successors";

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.8}", 0.0);
    }
    let decimals = (8 - x.abs().log10().floor() as i64).max(0) as usize;
    format!("{:.*}", decimals, x)
}

pub fn write_trace<W: Write>(mut w: W, trace: &Trace) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for m in &trace.metrics {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_num(m.t),
            fmt_num(m.min_pair_dist),
            fmt_num(m.min_obstacle_dist),
            fmt_num(m.min_d_tl),
            fmt_num(m.min_d_tr),
            fmt_num(m.min_speed),
            fmt_num(m.max_speed),
            m.n_active,
            fmt_num(m.v_total),
            fmt_num(m.dv),
        )?;
    }
    w.flush()
}

pub fn write_trajectory<W: Write>(mut w: W, trace: &Trace) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in &trace.trajectory {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_num(r.t),
            r.id,
            fmt_num(r.p.x),
            fmt_num(r.p.y),
            fmt_num(r.v.x),
            fmt_num(r.v.y),
            r.sub_tube,
            u8::from(r.active),
        )?;
    }
    w.flush()
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), fmt_num)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

/// `key,value` lines.
pub fn write_summary<W: Write>(mut w: W, s: &Summary) -> io::Result<()> {
    writeln!(w, "key,value")?;
    let rows: [(&str, String); 19] = [
        ("min_pair_dist", fmt_num(s.min_pair_dist)),
        ("min_obstacle_dist", fmt_num(s.min_obstacle_dist)),
        ("min_obstacle_clearance", fmt_num(s.min_obstacle_clearance)),
        ("min_d_tl", fmt_num(s.min_d_tl)),
        ("min_d_tr", fmt_num(s.min_d_tr)),
        ("min_speed", fmt_num(s.min_speed)),
        ("max_speed", fmt_num(s.max_speed)),
        ("pair_separation", verdict(s.pairs_ok).into()),
        ("obstacle_separation", verdict(s.obstacles_ok).into()),
        ("boundary_separation", verdict(s.boundary_ok).into()),
        ("speed_bounds", verdict(s.speed_ok).into()),
        ("all_removed", verdict(s.all_removed).into()),
        ("last_removal", opt_num(s.last_removal)),
        ("fallbacks", s.fallbacks.to_string()),
        ("tol_V", opt_num(s.tol_v)),
        ("max_dV", opt_num(s.max_dv)),
        ("min_V", opt_num(s.min_v)),
        ("descent", s.descent_ok.map_or("n/a", verdict).into()),
        ("safe", verdict(s.safe()).into()),
    ];
    for (k, v) in rows {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()
}

/// One raster cell; `command` is `None` out of domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub p: Vec2,
    pub command: Option<Vec2>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldRaster {
    pub min: Vec2,
    pub max: Vec2,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `x` fastest.
    pub cells: Vec<Cell>,
}

// Built once per raster.
#[allow(clippy::large_enum_variant)]
enum FieldSource {
    Plain(TubeController),
    Switched(SwitchedController),
}

/// Samples the command a probe agent would receive at each cell center of
/// an `nx × ny` grid over the tube's bounding box. `ghosts` are other agents
/// held fixed. Cells outside the tube, inside an obstacle triangle, closer
/// than `2 r_s` to a ghost, or where the controller fails are out of domain.
pub fn field_raster(
    tube: &TrapezoidTube,
    partition: Option<TubePartition>,
    params: &ControlParams,
    variant: Variant,
    ghosts: &[Vec2],
    nx: usize,
    ny: usize,
) -> Result<FieldRaster, String> {
    if nx == 0 || ny == 0 {
        return Err("grid must have at least one cell per axis".into());
    }
    let source = match partition {
        Some(p) => FieldSource::Switched(SwitchedController::new(p, *params, variant).map_err(|e| e.to_string())?),
        None => FieldSource::Plain(TubeController::new(tube.clone(), *params, variant).map_err(|e| e.to_string())?),
    };
    let vs = tube.vertices();
    let min = vs.iter().fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, v| Vec2::new(a.x.min(v.x), a.y.min(v.y)));
    let max = vs.iter().fold(Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, v| Vec2::new(a.x.max(v.x), a.y.max(v.y)));
    let (hx, hy) = ((max.x - min.x) / nx as f64, (max.y - min.y) / ny as f64);
    let mut positions = Vec::with_capacity(ghosts.len() + 1);
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let p = Vec2::new(min.x + (i as f64 + 0.5) * hx, min.y + (j as f64 + 0.5) * hy);
            positions.clear();
            positions.push(p);
            positions.extend_from_slice(ghosts);
            let command = cell_command(&source, tube, params, &positions);
            cells.push(Cell { p, command });
        }
    }
    Ok(FieldRaster { min, max, nx, ny, cells })
}

fn cell_command(source: &FieldSource, tube: &TrapezoidTube, params: &ControlParams, positions: &[Vec2]) -> Option<Vec2> {
    let p = positions[0];
    if !tube.contains(p) || positions[1..].iter().any(|g| g.distance(p) <= 2.0 * params.r_s) {
        return None;
    }
    let snapshot = Snapshot::new(positions.to_vec());
    let command = match source {
        FieldSource::Plain(c) => c.command(&snapshot, 0).ok()?,
        FieldSource::Switched(sc) => {
            if sc.partition.triangles.iter().any(|t| t.contains(p)) {
                return None;
            }
            let previous = sc.partition.nearest(p);
            let s = sc.command(&snapshot, 0, previous).ok()?;
            if s.fallback {
                return None;
            }
            s.command
        }
    };
    command.is_finite().then_some(command)
}

pub fn write_raster<W: Write>(mut w: W, raster: &FieldRaster) -> io::Result<()> {
    writeln!(w, "{RASTER_HEADER}")?;
    for c in &raster.cells {
        let (vx, vy, flag) = match c.command {
            Some(u) => (fmt_num(u.x), fmt_num(u.y), "in"),
            None => (fmt_num(f64::NAN), fmt_num(f64::NAN), "out"),
        };
        writeln!(w, "{},{},{vx},{vy},{flag}", fmt_num(c.p.x), fmt_num(c.p.y))?;
    }
    w.flush()
}

/// Sub-tube records (vertices `p_l0, p_l1, p_r1, p_r0`, or `empty`), then
/// triangle records (`p_otl, p_otu, p_otd`). Successors are `;`-separated.
pub fn write_partition<W: Write>(mut w: W, part: &TubePartition) -> io::Result<()> {
    writeln!(w, "{PARTITION_HEADER}")?;
    let nan = fmt_num(f64::NAN);
    for (i, s) in part.sub_tubes.iter().enumerate() {
        let succ = s.successors.iter().map(ToString::to_string).collect::<Vec<_>>().join(";");
        let coords = match &s.tube {
            Some(t) => t.vertices().iter().map(|p| format!("{},{}", fmt_num(p.x), fmt_num(p.y))).collect::<Vec<_>>().join(","),
            None => [nan.as_str(); 8].join(","),
        };
        let status = if s.tube.is_some() { "tube" } else { "empty" };
        writeln!(w, "{},{i},{status},{coords},{succ}", s.kind)?;
    }
    for (k, t) in part.triangles.iter().enumerate() {
        let coords = t.vertices().iter().map(|p| format!("{},{}", fmt_num(p.x), fmt_num(p.y))).collect::<Vec<_>>().join(",");
        writeln!(w, "triangle,{k},obstacle {},{coords},{nan},{nan},", t.obstacle)?;
    }
    w.flush()
}

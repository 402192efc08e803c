//! Command-line front end. Exit codes: 0 ok, 2 I/O, 3 parse, validation or
//! feasibility failure, 4 runtime error or violated safety invariant.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::controller::Variant;
use crate::export;
use crate::geometry::Vec2;
use crate::partition::TubePartition;
use crate::scenario::{parse_unvalidated, ScenarioError, ScenarioFile};
use crate::simulator::{SimError, Simulation, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "vtube", version, about = "Swarm guidance through a trapezoid virtual tube")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a scenario and write trace.csv, trajectory.csv and summary.csv.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep every n-th step in the trajectory file.
        #[arg(long, default_value_t = 10)]
        traj_every: usize,
    },
    /// Sample the vector field on a grid over the tube.
    Field {
        scenario: PathBuf,
        #[arg(long, num_args = 2, value_names = ["NX", "NY"], default_values_t = [80, 40])]
        grid: Vec<usize>,
        /// A fixed neighbor agent; repeatable.
        #[arg(long, num_args = 2, value_names = ["X", "Y"], action = clap::ArgAction::Append, allow_negative_numbers = true)]
        ghost: Vec<f64>,
        #[arg(long, default_value = "field.csv")]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Dump sub-tubes, triangles and successor lists.
    Partition {
        scenario: PathBuf,
        #[arg(long, default_value = "partition.csv")]
        out: PathBuf,
    },
    /// Print the feasibility report of the tube and every sub-tube.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
    },
}

/// A message for standard error and the exit code that goes with it.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, message: message.into() }
    }
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    parse_unvalidated(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_valid(path: &Path, variant: Option<Variant>) -> Result<ScenarioFile, Failure> {
    let mut s = load(path)?;
    if let Some(v) = variant {
        s.variant = v;
    }
    let report = s.validate();
    if !report.passed() {
        let e = ScenarioError::Validation(report.errors);
        return Err(Failure::invalid(format!("{}: {e}", path.display())));
    }
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn sim_failure(e: SimError) -> Failure {
    let code = if matches!(e, SimError::Runtime { .. }) { EXIT_RUNTIME } else { EXIT_INVALID };
    Failure { code, message: e.to_string() }
}

fn simulate(path: &Path, out: &Path, variant: Option<Variant>, seed: Option<u64>, traj_every: usize) -> Result<Summary, Failure> {
    let mut s = load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(v) = variant {
        s.variant = v;
    }
    let report = s.validate();
    if !report.passed() {
        return Err(Failure::invalid(format!("{}: {}", path.display(), ScenarioError::Validation(report.errors))));
    }
    let config = s.to_sim_config().map_err(|e| Failure::invalid(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let trace = Simulation::new(config.clone()).and_then(|sim| sim.run(traj_every.max(1))).map_err(sim_failure)?;
    let summary = Summary::from_trace(&trace, &config);
    let io = |p: PathBuf, r: std::io::Result<()>| r.map_err(|e| Failure::io(&p, e));
    let p = out.join("trace.csv");
    io(p.clone(), export::write_trace(create(&p)?, &trace))?;
    let p = out.join("trajectory.csv");
    io(p.clone(), export::write_trajectory(create(&p)?, &trace))?;
    let p = out.join("summary.csv");
    io(p.clone(), export::write_summary(create(&p)?, &summary))?;
    Ok(summary)
}

fn field(path: &Path, grid: &[usize], ghost: &[f64], out: &Path, variant: Option<Variant>) -> Result<usize, Failure> {
    let s = load_valid(path, variant)?;
    let tube = s.build_tube().map_err(Failure::invalid)?;
    let partition = if s.obstacles.is_empty() {
        None
    } else {
        Some(TubePartition::build(&tube, &s.obstacles, &s.params, s.beta()).map_err(|e| Failure::invalid(e.to_string()))?)
    };
    let ghosts: Vec<Vec2> = ghost.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
    let raster = export::field_raster(&tube, partition, &s.params, s.variant, &ghosts, grid[0], grid[1]).map_err(Failure::invalid)?;
    export::write_raster(create(out)?, &raster).map_err(|e| Failure::io(out, e))?;
    Ok(raster.cells.iter().filter(|c| c.command.is_some()).count())
}

fn partition(path: &Path, out: &Path) -> Result<usize, Failure> {
    let s = load_valid(path, None)?;
    if s.obstacles.is_empty() {
        return Err(Failure::invalid("partition needs at least one obstacle"));
    }
    let tube = s.build_tube().map_err(Failure::invalid)?;
    let part = TubePartition::build(&tube, &s.obstacles, &s.params, s.beta()).map_err(|e| Failure::invalid(e.to_string()))?;
    export::write_partition(create(out)?, &part).map_err(|e| Failure::io(out, e))?;
    Ok(part.len())
}

/// Runs one parsed command, printing progress to stdout.
pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scenario, out, variant, seed, traj_every } => {
            let s = simulate(&scenario, &out, variant, seed, traj_every)?;
            let last = s.last_removal.map_or("none".into(), export::fmt_num);
            println!(
                "min_pair_dist {} min_obstacle_dist {} min_d_tl {} min_d_tr {} speed [{}, {}] last_removal {last}",
                export::fmt_num(s.min_pair_dist),
                export::fmt_num(s.min_obstacle_dist),
                export::fmt_num(s.min_d_tl),
                export::fmt_num(s.min_d_tr),
                export::fmt_num(s.min_speed),
                export::fmt_num(s.max_speed),
            );
            if s.safe() {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_RUNTIME,
                    message: format!("safety invariant violated, see {}", out.join("summary.csv").display()),
                })
            }
        }
        Command::Field { scenario, grid, ghost, out, variant } => {
            let n = field(&scenario, &grid, &ghost, &out, variant)?;
            println!("{n} in-domain cells written to {}", out.display());
            Ok(())
        }
        Command::Partition { scenario, out } => {
            let n = partition(&scenario, &out)?;
            println!("{n} sub-tubes written to {}", out.display());
            Ok(())
        }
        Command::Validate { scenario, variant } => {
            let mut s = load(&scenario)?;
            if let Some(v) = variant {
                s.variant = v;
            }
            let report = s.validate();
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::invalid(format!("{}: {} problem(s)", scenario.display(), report.errors.len())))
            }
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

//! The `barrier-cert` command line.
//!
//! Each subcommand writes one JSON artifact (stdout or `--out`) and a run
//! report (stderr or `--report`). Exit codes: 0 success or `Certified`,
//! 1 a sound failure verdict, 2 invalid input, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use barrier_cert::certify::{certify, certify_sublevel, component_bounding_box, hull, Verdict};
use barrier_cert::crown::get_fn_bd;
use barrier_cert::io::{load_network, load_problem, load_shallow, load_sublevel_problem, to_json_string, Lipschitz, SCHEMA};
use barrier_cert::lp::solved_count;
use barrier_cert::partition::partition;
use barrier_cert::report::{bounds_to_value, certificate_to_value, component_to_value, partition_to_value, plot_data, sublevel_check_to_value};
use barrier_cert::sublevel::{enumerate_sublevel_component_with, SubLevelOptions};
use barrier_cert::{Error, HyperRectangle, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "barrier-cert", version, about = "Check shallow ReLU barrier certificates for ReLU network dynamics")]
pub struct Cli {
    /// Worker threads (default: all available cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Reserved for randomized tie-breaking; the current pipeline is deterministic
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the JSON artifact to this file instead of stdout
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,

    /// Write the run report to this file instead of stderr
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Output bounds of a network over a box
    Bounds {
        /// Network JSON file
        net: PathBuf,
        /// Lower corner, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        lo: Vec<f64>,
        /// Upper corner, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        hi: Vec<f64>,
    },
    /// Find boxes of the safe set on which the barrier decreases
    Partition {
        /// Problem JSON file
        problem: PathBuf,
        /// Override the problem's minimum box width
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Enumerate the regions of the barrier's zero sub-level component through x0
    Enum {
        /// Barrier network JSON file (one hidden ReLU layer)
        barrier: PathBuf,
        /// Seed point, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        /// Lower corner of an optional confining box
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "hi")]
        lo: Option<Vec<f64>>,
        /// Upper corner of an optional confining box
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "lo")]
        hi: Option<Vec<f64>>,
        /// Write region polygons (2D) or boxes (higher dimensions) here
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Run the full certification pipeline
    Certify {
        /// Problem JSON file
        problem: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// A number, or "auto" for the layer-norm product bound
        #[arg(long, value_parser = parse_lipschitz)]
        lipschitz: Option<Lipschitz>,
        /// Write region polygons (2D) or boxes (higher dimensions) here
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Check the zero sub-level half alone, against given decrease boxes
    Sublevel {
        /// Sub-level problem JSON file (barrier, x0, next_state offset, lipschitz, x_partial)
        problem: PathBuf,
        /// Write region polygons (2D) or boxes (higher dimensions) here
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
}

fn parse_lipschitz(s: &str) -> std::result::Result<Lipschitz, String> {
    if s == "auto" {
        return Ok(Lipschitz::Auto);
    }
    s.parse::<f64>()
        .map(Lipschitz::Given)
        .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
}

/// Timings, counts and outputs of one invocation.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: Vec<String>,
    pub stages: Vec<(String, f64)>,
    pub partitions: Option<usize>,
    pub regions: Option<usize>,
    pub lps_solved: u64,
    pub verdict: Option<String>,
    pub outputs: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunReport {
    pub fn to_value(&self) -> Value {
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "stages": self.stages.iter().map(|(s, t)| json!({ "stage": s, "seconds": t })).collect::<Vec<_>>(),
            "counts": {
                "partitions": self.partitions,
                "regions": self.regions,
                "lps_solved": self.lps_solved,
            },
            "verdict": self.verdict,
            "outputs": self.outputs,
            "exit_code": self.exit_code,
            "error": self.error,
        })
    }
}

/// What a command produced, before anything is written.
struct Outcome {
    artifact: Value,
    plot: Option<(PathBuf, Value)>,
    success: bool,
    verdict: Option<String>,
    partitions: Option<usize>,
    regions: Option<usize>,
    stages: Vec<(String, f64)>,
}

impl Outcome {
    fn new(artifact: Value) -> Self {
        Self {
            artifact,
            plot: None,
            success: true,
            verdict: None,
            partitions: None,
            regions: None,
            stages: Vec::new(),
        }
    }
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{v:?}"))
}

fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Bounds { net, lo, hi } => {
            let net = load_network(net)?;
            let bx = HyperRectangle::new(lo.clone(), hi.clone())?;
            if bx.dim() != net.input_dim() {
                return Err(Error::Dimension(format!(
                    "box has dimension {}, network takes {} inputs",
                    bx.dim(),
                    net.input_dim()
                )));
            }
            let clock = Instant::now();
            let bounds = get_fn_bd(&net, &bx)?;
            let mut out = Outcome::new(bounds_to_value(&bx, &bounds));
            out.stages.push(("bounds".into(), clock.elapsed().as_secs_f64()));
            Ok(out)
        }
        Command::Partition { problem, eps } => {
            let mut p = load_problem(problem)?;
            if let Some(e) = eps {
                p.eps = *e;
            }
            p.validate()?;
            let clock = Instant::now();
            let res = partition(&p.safe_set, &p.barrier, &p.dynamics, p.eps)?;
            let mut out = Outcome::new(partition_to_value(&res));
            out.stages.push(("partition".into(), clock.elapsed().as_secs_f64()));
            out.partitions = Some(res.boxes.len());
            out.success = !res.boxes.is_empty();
            Ok(out)
        }
        Command::Enum { barrier, x0, lo, hi, plot_data: plot_path } => {
            let nbf = load_shallow(barrier)?;
            let confinement = match (lo, hi) {
                (Some(lo), Some(hi)) => Some(HyperRectangle::new(lo.clone(), hi.clone())?),
                _ => None,
            };
            if let Some(c) = &confinement {
                if c.dim() != nbf.input_dim() {
                    return Err(Error::Dimension("confining box and barrier disagree on dimension".into()));
                }
            }
            let opts = SubLevelOptions {
                confinement: confinement.as_ref().map(HyperRectangle::facet_functionals).unwrap_or_default(),
                ..Default::default()
            };
            let clock = Instant::now();
            let comp = enumerate_sublevel_component_with(&nbf, x0, &opts)?;
            let mut out = Outcome::new(component_to_value(&comp));
            out.stages.push(("enumerate".into(), clock.elapsed().as_secs_f64()));
            out.regions = Some(comp.len());
            if let Some(path) = plot_path {
                let clip = match confinement {
                    Some(c) => c,
                    None => component_bounding_box(&comp)?.0,
                };
                out.plot = Some((path.clone(), plot_data(&comp, &[], &clip)?));
            }
            Ok(out)
        }
        Command::Certify { problem, eps, x0, lipschitz, plot_data: plot_path } => {
            let mut p = load_problem(problem)?;
            if let Some(e) = eps {
                p.eps = *e;
            }
            if let Some(x) = x0 {
                p.x0 = x.clone();
            }
            if let Some(l) = lipschitz {
                p.lipschitz = *l;
            }
            p.validate()?;
            let cert = certify(&p)?;
            let mut out = Outcome::new(certificate_to_value(&cert));
            out.stages = cert.timings.iter().map(|(s, t)| (s.to_string(), *t)).collect();
            out.partitions = Some(cert.x_partial.len());
            out.regions = cert.component.as_ref().map(|c| c.len());
            out.verdict = Some(verdict_name(cert.verdict));
            out.success = cert.verdict.is_certified();
            if let (Some(path), Some(comp)) = (plot_path, &cert.component) {
                let boxes: Vec<HyperRectangle> = cert.x_partial.iter().map(|c| c.bx.clone()).collect();
                out.plot = Some((path.clone(), plot_data(comp, &boxes, &p.safe_set)?));
            }
            Ok(out)
        }
        Command::Sublevel { problem, plot_data: plot_path } => {
            let p = load_sublevel_problem(problem)?;
            let check = certify_sublevel(&p.barrier, &p.x_partial, &p.x0, |x| Ok(p.successor(x)), p.lipschitz)?;
            let mut out = Outcome::new(sublevel_check_to_value(&check, &p.x_partial));
            out.stages = check.timings.iter().map(|(s, t)| (s.to_string(), *t)).collect();
            out.partitions = Some(p.x_partial.len());
            out.regions = check.component.as_ref().map(|c| c.len());
            out.verdict = Some(verdict_name(check.verdict));
            out.success = check.verdict.is_certified();
            if let (Some(path), Some(comp)) = (plot_path, &check.component) {
                let clip = hull(&p.x_partial)?;
                out.plot = Some((path.clone(), plot_data(comp, &p.x_partial, &clip)?));
            }
            Ok(out)
        }
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, to_json_string(v))?;
    Ok(())
}

fn exit_code_for(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

/// Run a parsed command line; `argv` is echoed into the report.
pub fn run(cli: &Cli, argv: &[String]) -> i32 {
    if let Some(n) = cli.threads {
        // Only the first global pool in a process takes effect.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    if cli.seed.is_some() {
        log::info!("--seed has no effect: no step of the pipeline is randomized");
    }
    let lps_before = solved_count();
    let mut report = RunReport {
        command: argv.to_vec(),
        ..Default::default()
    };
    let result = execute(&cli.command).and_then(|o| {
        match &cli.out {
            Some(path) => {
                write_json(path, &o.artifact)?;
                report.outputs.push(path.display().to_string());
            }
            None => print!("{}", to_json_string(&o.artifact)),
        }
        if let Some((path, v)) = &o.plot {
            write_json(path, v)?;
            report.outputs.push(path.display().to_string());
        }
        Ok(o)
    });
    report.lps_solved = solved_count() - lps_before;
    report.exit_code = match result {
        Ok(o) => {
            report.stages = o.stages;
            report.partitions = o.partitions;
            report.regions = o.regions;
            report.verdict = o.verdict;
            if o.success {
                EXIT_OK
            } else {
                EXIT_VERDICT
            }
        }
        Err(e) => {
            report.error = Some(e.to_string());
            exit_code_for(&e)
        }
    };
    let text = to_json_string(&report.to_value());
    match &cli.report {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("cannot write report to {}: {e}", path.display());
                eprint!("{text}");
            }
        }
        None => eprint!("{text}"),
    }
    report.exit_code
}

//! Command line front end.
//!
//! Exit codes: 0 on success, 1 for invalid flags or configuration, 2 when a
//! run fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::SimError;
use crate::harness::config::ScenarioConfig;
use crate::harness::output::{
    companion_path, run_records, summary_record, write_csv_atomic, RunRow, RUN_COLUMNS,
    SUMMARY_COLUMNS,
};
use crate::harness::run::{migc_isolation, run_scenario, Completed};
use crate::harness::sweep::{
    best_mf, parse_axis, run_sweep, sweep_records, Axis, SweepSpec, SWEEP_COLUMNS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "selfcluster",
    version,
    about = "Self-clustering distributed agent simulation"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a grid of configurations and report the cheapest migration factor.
    Sweep {
        /// Axis as name=v1,v2,... (mf, speed, range, lps, pi,
        /// interaction_size, migration_size); repeatable.
        #[arg(long = "axis", value_name = "NAME=VALUES")]
        axes: Vec<String>,
        /// Refuse grids with more points than this.
        #[arg(long, default_value_t = 256)]
        cap: usize,
        /// Also run every point with clustering off.
        #[arg(long)]
        delta: bool,
    },
    /// Estimate migration cost with interactions accounted but never sent.
    Migc,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario file of `key = value` lines; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    lps: Option<String>,
    #[arg(long, global = true)]
    ses: Option<String>,
    #[arg(long, global = true)]
    steps: Option<String>,
    /// Clustering heuristic: 1, 2 or 3.
    #[arg(long, global = true)]
    heuristic: Option<String>,
    /// Migration factor.
    #[arg(long, global = true)]
    mf: Option<String>,
    /// Migration threshold in steps.
    #[arg(long, global = true)]
    mt: Option<String>,
    #[arg(long, global = true)]
    kappa: Option<String>,
    #[arg(long, global = true)]
    omega: Option<String>,
    #[arg(long, global = true)]
    zeta: Option<String>,
    /// Adaptive clustering: on or off.
    #[arg(long, global = true, value_name = "on|off")]
    gaia: Option<String>,
    #[arg(long, global = true)]
    speed: Option<String>,
    #[arg(long, global = true)]
    range: Option<String>,
    /// Per-step interaction probability.
    #[arg(long, global = true)]
    pi: Option<String>,
    #[arg(long, global = true)]
    area_side: Option<String>,
    #[arg(long, global = true)]
    interaction_size: Option<String>,
    #[arg(long, global = true)]
    migration_size: Option<String>,
    #[arg(long, global = true, value_name = "local|tcp")]
    transport: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    roster: Option<String>,
    /// This process's LP when running over tcp.
    #[arg(long, global = true)]
    lp_id: Option<String>,
    #[arg(long, global = true, value_name = "threaded|sequential")]
    scheduler: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    runs: Option<String>,
    /// Per-run CSV; a `.summary.csv` companion is written next to it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Account interactions without delivering them.
    #[arg(long, global = true)]
    no_payload_delivery: bool,
    #[arg(long, global = true, value_name = "on|off")]
    balancer: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    band: Option<String>,
    #[arg(long, global = true)]
    trace_digest: bool,
    #[arg(long, global = true, value_name = "on|off")]
    dynamic_exit: Option<String>,
}

impl CommonArgs {
    fn scenario(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        let overrides = [
            ("seed", &self.seed),
            ("lps", &self.lps),
            ("ses", &self.ses),
            ("steps", &self.steps),
            ("heuristic", &self.heuristic),
            ("mf", &self.mf),
            ("mt", &self.mt),
            ("kappa", &self.kappa),
            ("omega", &self.omega),
            ("zeta", &self.zeta),
            ("gaia", &self.gaia),
            ("speed", &self.speed),
            ("range", &self.range),
            ("pi", &self.pi),
            ("area_side", &self.area_side),
            ("interaction_size", &self.interaction_size),
            ("migration_size", &self.migration_size),
            ("transport", &self.transport),
            ("roster", &self.roster),
            ("lp_id", &self.lp_id),
            ("scheduler", &self.scheduler),
            ("runs", &self.runs),
            ("balancer", &self.balancer),
            ("band", &self.band),
            ("dynamic_exit", &self.dynamic_exit),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)
                    .map_err(|e| format!("--{}: {e}", key.replace('_', "-")))?;
            }
        }
        if self.no_payload_delivery {
            cfg.payload_delivery = false;
        }
        if self.trace_digest {
            cfg.trace_digest = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and executes them. Returns the exit
/// code.
pub fn run_cli<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let cfg = match cli.common.scenario() {
        Ok(cfg) => cfg,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let out = cli.common.out.as_deref();
    let result = match cli.command {
        None => plain(&cfg, out, stdout),
        Some(Command::Migc) => migc(&cfg, out, stdout),
        Some(Command::Sweep { axes, cap, delta }) => sweep(cfg, axes, cap, delta, out, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn print_run(stdout: &mut dyn Write, c: &Completed, row: &RunRow) {
    let (digest, frames) = match c.report.trace_digest() {
        Some(d) => (
            format!("{d:016x}"),
            format!("{:016x}", c.report.frame_digest()),
        ),
        None => ("none".to_string(), "none".to_string()),
    };
    let _ = writeln!(
        stdout,
        "run={} seed={} lcr={:.6} mr={:.6} migrations={} lcc={} rcc={} wct_s={:.3} digest={} frames={}",
        c.index,
        c.seed,
        row.lcr,
        row.mr,
        row.migrations,
        row.lcc,
        row.rcc,
        row.wct_s,
        digest,
        frames
    );
}

/// Over tcp every process holds the full report; only LP 0 writes files.
fn writes_files(cfg: &ScenarioConfig) -> bool {
    cfg.lp_id.unwrap_or(0) == 0
}

fn write_runs(
    cfg: &ScenarioConfig,
    groups: &[(&ScenarioConfig, &[RunRow])],
    out: &Path,
) -> Result<(), Failure> {
    if !writes_files(cfg) {
        return Ok(());
    }
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for (c, rows) in groups {
        runs.extend(run_records(rows));
        summaries.push(summary_record(c, rows));
    }
    write_csv_atomic(out, &RUN_COLUMNS, &runs).map_err(|e| io_failure(out, e))?;
    let summary = companion_path(out, "summary");
    write_csv_atomic(&summary, &SUMMARY_COLUMNS, &summaries).map_err(|e| io_failure(&summary, e))
}

fn plain(cfg: &ScenarioConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let done = run_scenario(cfg)?;
    let rows: Vec<RunRow> = done.iter().map(|c| c.row(cfg)).collect();
    for (c, row) in done.iter().zip(&rows) {
        print_run(stdout, c, row);
    }
    if let Some(out) = out {
        write_runs(cfg, &[(cfg, &rows)], out)?;
    }
    Ok(())
}

fn migc(cfg: &ScenarioConfig, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    let report = migc_isolation(cfg)?;
    let mean = |rows: &[RunRow], f: fn(&RunRow) -> f64| {
        rows.iter().map(f).sum::<f64>() / rows.len() as f64
    };
    for (label, rows) in [("on", &report.with_gaia), ("off", &report.without_gaia)] {
        let _ = writeln!(
            stdout,
            "gaia={label} wct_s={:.3} migrations={} mig_bytes={}",
            mean(rows, |r| r.wct_s),
            mean(rows, |r| r.migrations),
            mean(rows, |r| r.mig_bytes),
        );
    }
    let _ = writeln!(stdout, "migc_estimate_s={:.6}", report.estimate_s);
    if let Some(out) = out {
        let on = ScenarioConfig {
            gaia: true,
            payload_delivery: false,
            ..cfg.clone()
        };
        let off = ScenarioConfig {
            gaia: false,
            ..on.clone()
        };
        write_runs(
            cfg,
            &[(&on, &report.with_gaia), (&off, &report.without_gaia)],
            out,
        )?;
    }
    Ok(())
}

fn sweep(
    cfg: ScenarioConfig,
    axes: Vec<String>,
    cap: usize,
    delta: bool,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let lp_files = writes_files(&cfg);
    let mut spec = SweepSpec::new(cfg);
    spec.cap = cap;
    spec.delta = delta;
    for a in &axes {
        let (axis, values) = parse_axis(a).map_err(Failure::Config)?;
        spec.axes.push((axis, values));
    }
    let points = run_sweep(&spec)?;
    for (i, p) in points.iter().enumerate() {
        let vary: Vec<String> = spec
            .axes
            .iter()
            .map(|(a, _)| format!("{a}={}", a.get(&p.cfg)))
            .collect();
        let _ = write!(
            stdout,
            "point={i} {} lcr={:.6} mr={:.6} tec={:.6}",
            vary.join(" "),
            p.summary.lcr.mean,
            p.summary.mr.mean,
            p.tec_mean
        );
        if let Some(d) = p.delta_lcr() {
            let _ = write!(stdout, " delta_lcr={d:.6}");
        }
        let _ = writeln!(stdout);
    }
    let best = best_mf(&points);
    for b in &best {
        let _ = writeln!(stdout, "best mf={} tec={:.6}", b.mf, b.tec_mean);
    }
    if let (Some(out), true) = (out, lp_files) {
        write_csv_atomic(out, &SWEEP_COLUMNS, &sweep_records(&points))
            .map_err(|e| io_failure(out, e))?;
        let mut header: Vec<&str> = Axis::ALL
            .iter()
            .filter(|&&a| a != Axis::Mf)
            .map(|a| a.name())
            .collect();
        header.extend(["best_mf", "tec_mean", "base_tec_mean"]);
        let records: Vec<Vec<String>> = best
            .iter()
            .map(|b| {
                let mut r: Vec<String> = b.key.iter().map(|(_, v)| v.to_string()).collect();
                r.push(b.mf.to_string());
                r.push(b.tec_mean.to_string());
                r.push(b.baseline_tec_mean.map_or(String::new(), |t| t.to_string()));
                r
            })
            .collect();
        let path = companion_path(out, "best");
        write_csv_atomic(&path, &header, &records).map_err(|e| io_failure(&path, e))?;
    }
    Ok(())
}

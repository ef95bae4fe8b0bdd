//! Parameter sweeps over a template scenario.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::harness::config::ScenarioConfig;
use crate::harness::output::{ConfigSummary, RunRow};
use crate::harness::run::run_scenario;
use crate::harness::stats;
use crate::metrics::CostWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    Mf,
    Speed,
    Range,
    Lps,
    Pi,
    InteractionSize,
    MigrationSize,
}

impl Axis {
    pub const ALL: [Axis; 7] = [
        Axis::Mf,
        Axis::Speed,
        Axis::Range,
        Axis::Lps,
        Axis::Pi,
        Axis::InteractionSize,
        Axis::MigrationSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Mf => "mf",
            Axis::Speed => "speed",
            Axis::Range => "range",
            Axis::Lps => "lps",
            Axis::Pi => "pi",
            Axis::InteractionSize => "interaction_size",
            Axis::MigrationSize => "migration_size",
        }
    }

    /// Sets this axis on `cfg`; integer axes reject fractional values.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> std::result::Result<(), String> {
        let int = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(format!("{} needs whole numbers, got {value}", self.name()))
            }
        };
        match self {
            Axis::Mf => cfg.heuristic.mf = value,
            Axis::Speed => cfg.speed = value,
            Axis::Range => cfg.range = value,
            Axis::Pi => cfg.pi = value,
            Axis::Lps => cfg.lps = int()?,
            Axis::InteractionSize => cfg.interaction_size = int()?,
            Axis::MigrationSize => cfg.migration_size = int()?,
        }
        Ok(())
    }

    pub fn get(self, cfg: &ScenarioConfig) -> f64 {
        match self {
            Axis::Mf => cfg.heuristic.mf,
            Axis::Speed => cfg.speed,
            Axis::Range => cfg.range,
            Axis::Pi => cfg.pi,
            Axis::Lps => cfg.lps as f64,
            Axis::InteractionSize => cfg.interaction_size as f64,
            Axis::MigrationSize => cfg.migration_size as f64,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown sweep axis {s:?}"))
    }
}

/// Parses `name=v1,v2,...`.
pub fn parse_axis(spec: &str) -> std::result::Result<(Axis, Vec<f64>), String> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| format!("axis must look like name=v1,v2, got {spec:?}"))?;
    let axis: Axis = name.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| format!("{axis}: bad value {v:?}"))
        })
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if values.is_empty() {
        return Err(format!("{axis}: no values"));
    }
    Ok((axis, values))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub template: ScenarioConfig,
    pub axes: Vec<(Axis, Vec<f64>)>,
    /// Largest grid the sweep agrees to run.
    pub cap: usize,
    /// Also run every point with clustering off.
    pub delta: bool,
    pub weights: CostWeights,
}

impl SweepSpec {
    pub fn new(template: ScenarioConfig) -> SweepSpec {
        SweepSpec {
            template,
            axes: Vec::new(),
            cap: 256,
            delta: false,
            weights: CostWeights::default(),
        }
    }

    pub fn axis(mut self, axis: Axis, values: &[f64]) -> SweepSpec {
        self.axes.push((axis, values.to_vec()));
        self
    }

    /// Cartesian product of the axes, first axis varying slowest.
    pub fn points(&self) -> std::result::Result<Vec<ScenarioConfig>, String> {
        let size = self
            .axes
            .iter()
            .try_fold(1usize, |n, (_, v)| n.checked_mul(v.len()))
            .unwrap_or(usize::MAX);
        if size > self.cap {
            return Err(format!(
                "sweep has {size} points, more than the cap of {}",
                self.cap
            ));
        }
        let mut points = vec![self.template.clone()];
        for (axis, values) in &self.axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for &v in values {
                    let mut c = p.clone();
                    axis.apply(&mut c, v)?;
                    next.push(c);
                }
            }
            points = next;
        }
        for p in &points {
            p.validate()?;
        }
        Ok(points)
    }
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub lcr_mean: f64,
    pub tec_mean: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub cfg: ScenarioConfig,
    pub rows: Vec<RunRow>,
    pub summary: ConfigSummary,
    pub migrations_mean: f64,
    /// Mean modeled execution cost.
    pub tec_mean: f64,
    pub baseline: Option<Baseline>,
}

impl SweepPoint {
    pub fn delta_lcr(&self) -> Option<f64> {
        self.baseline
            .as_ref()
            .map(|b| self.summary.lcr.mean - b.lcr_mean)
    }
}

fn measure(cfg: &ScenarioConfig, w: &CostWeights) -> Result<(Vec<RunRow>, f64)> {
    let done = run_scenario(cfg)?;
    let rows = done.iter().map(|c| c.row(cfg)).collect();
    let tec: Vec<f64> = done.iter().map(|c| c.report.modeled_cost(w)).collect();
    Ok((rows, stats::mean(&tec)))
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    let points = spec.points().map_err(SimError::Config)?;
    points
        .into_iter()
        .map(|cfg| {
            let (rows, tec_mean) = measure(&cfg, &spec.weights)?;
            let baseline = if spec.delta {
                let off = ScenarioConfig {
                    gaia: false,
                    ..cfg.clone()
                };
                let (base_rows, base_tec) = measure(&off, &spec.weights)?;
                let lcrs: Vec<f64> = base_rows.iter().map(|r| r.lcr).collect();
                Some(Baseline {
                    lcr_mean: stats::mean(&lcrs),
                    tec_mean: base_tec,
                })
            } else {
                None
            };
            Ok(SweepPoint {
                summary: ConfigSummary::of(&rows),
                migrations_mean: stats::mean(
                    &rows.iter().map(|r| r.migrations).collect::<Vec<_>>(),
                ),
                cfg,
                rows,
                tec_mean,
                baseline,
            })
        })
        .collect()
}

/// The cheapest migration factor among points that agree on every other axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMf {
    /// Values of the non-MF axes, in `Axis::ALL` order.
    pub key: Vec<(Axis, f64)>,
    pub mf: f64,
    pub tec_mean: f64,
    pub baseline_tec_mean: Option<f64>,
}

pub fn best_mf(points: &[SweepPoint]) -> Vec<BestMf> {
    let mut best: Vec<BestMf> = Vec::new();
    for p in points {
        let key: Vec<(Axis, f64)> = Axis::ALL
            .iter()
            .filter(|&&a| a != Axis::Mf)
            .map(|&a| (a, a.get(&p.cfg)))
            .collect();
        let cand = BestMf {
            key: key.clone(),
            mf: p.cfg.heuristic.mf,
            tec_mean: p.tec_mean,
            baseline_tec_mean: p.baseline.as_ref().map(|b| b.tec_mean),
        };
        match best.iter_mut().find(|b| b.key == key) {
            Some(b) if cand.tec_mean < b.tec_mean => *b = cand,
            Some(_) => {}
            None => best.push(cand),
        }
    }
    best
}

pub const SWEEP_COLUMNS: [&str; 21] = [
    "point",
    "lps",
    "mf",
    "speed",
    "range",
    "pi",
    "interaction_size",
    "migration_size",
    "gaia",
    "runs",
    "lcr_mean",
    "lcr_hw90",
    "mr_mean",
    "mr_hw90",
    "wct_s_mean",
    "wct_s_hw90",
    "migrations_mean",
    "tec_mean",
    "base_lcr_mean",
    "delta_lcr",
    "base_tec_mean",
];

pub fn sweep_records(points: &[SweepPoint]) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = &p.cfg;
            let s = &p.summary;
            vec![
                i.to_string(),
                c.lps.to_string(),
                c.heuristic.mf.to_string(),
                c.speed.to_string(),
                c.range.to_string(),
                c.pi.to_string(),
                c.interaction_size.to_string(),
                c.migration_size.to_string(),
                if c.gaia { "on" } else { "off" }.into(),
                p.rows.len().to_string(),
                s.lcr.mean.to_string(),
                s.lcr.half_width.to_string(),
                s.mr.mean.to_string(),
                s.mr.half_width.to_string(),
                s.wct_s.mean.to_string(),
                s.wct_s.half_width.to_string(),
                p.migrations_mean.to_string(),
                p.tec_mean.to_string(),
                opt(p.baseline.as_ref().map(|b| b.lcr_mean)),
                opt(p.delta_lcr()),
                opt(p.baseline.as_ref().map(|b| b.tec_mean)),
            ]
        })
        .collect()
}

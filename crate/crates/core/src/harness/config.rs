//! Scenario configuration and its `key = value` file format.
//!
//! ```text
//! # 4 LPs, clustering on
//! lps = 4
//! gaia = on
//! mf = 1.2
//! ```
//!
//! Unknown keys are rejected so typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::{EngineConfig, Scheduler};
use crate::heuristics::{HeuristicKind, HeuristicParams};
use crate::model::RwpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    Local,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(TransportKind::Local),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("transport must be local or tcp, got {other:?}")),
        }
    }
}

impl std::fmt::Display for TransportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransportKind::Local => "local",
            TransportKind::Tcp => "tcp",
        })
    }
}

/// Everything needed to reproduce a batch of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub lps: usize,
    pub ses: usize,
    pub steps: u64,
    pub area_side: f64,
    pub speed: f64,
    pub range: f64,
    pub pi: f64,
    pub interaction_size: usize,
    /// Total state blob size in bytes, at least the 32 bytes of live state.
    pub migration_size: usize,
    pub gaia: bool,
    pub heuristic: HeuristicParams,
    pub balancer: bool,
    pub band: Option<u32>,
    pub payload_delivery: bool,
    pub transport: TransportKind,
    pub roster: Option<PathBuf>,
    pub lp_id: Option<u32>,
    pub runs: usize,
    pub trace_digest: bool,
    pub scheduler: Scheduler,
    pub dynamic_exit: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            lps: 4,
            ses: 10_000,
            steps: 1000,
            area_side: 10_000.0,
            speed: 11.0,
            range: 250.0,
            pi: 0.2,
            interaction_size: 1,
            migration_size: 32,
            gaia: false,
            heuristic: HeuristicParams::default(),
            balancer: true,
            band: None,
            payload_delivery: true,
            transport: TransportKind::Local,
            roster: None,
            lp_id: None,
            runs: 1,
            trace_digest: false,
            scheduler: Scheduler::Threaded,
            dynamic_exit: false,
        }
    }
}

fn on_off(v: bool) -> &'static str {
    if v {
        "on"
    } else {
        "off"
    }
}

pub fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn auto_or<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, String> {
    if value == "auto" || value.is_empty() {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

impl ScenarioConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let h = &mut self.heuristic;
        match key {
            "seed" => self.seed = num(key, value)?,
            "lps" => self.lps = num(key, value)?,
            "ses" => self.ses = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "area_side" => self.area_side = num(key, value)?,
            "speed" => self.speed = num(key, value)?,
            "range" => self.range = num(key, value)?,
            "pi" => self.pi = num(key, value)?,
            "interaction_size" => self.interaction_size = num(key, value)?,
            "migration_size" => self.migration_size = num(key, value)?,
            "gaia" => self.gaia = parse_on_off(value)?,
            "heuristic" => h.kind = value.parse::<HeuristicKind>()?,
            "mf" => h.mf = num(key, value)?,
            "mt" => h.mt = num(key, value)?,
            "kappa" => h.kappa = num(key, value)?,
            "omega" => h.omega = num(key, value)?,
            "zeta" => h.zeta = num(key, value)?,
            "balancer" => self.balancer = parse_on_off(value)?,
            "band" => self.band = auto_or(key, value)?,
            "payload_delivery" => self.payload_delivery = parse_on_off(value)?,
            "transport" => self.transport = value.parse()?,
            "roster" => self.roster = (!value.is_empty()).then(|| PathBuf::from(value)),
            "lp_id" => self.lp_id = auto_or(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "trace_digest" => self.trace_digest = parse_on_off(value)?,
            "scheduler" => self.scheduler = value.parse()?,
            "dynamic_exit" => self.dynamic_exit = parse_on_off(value)?,
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", no + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<ScenarioConfig, String> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        ScenarioConfig::parse(&text)
    }

    /// Writes every key, so parsing the output gives back this value.
    pub fn serialize(&self) -> String {
        let h = &self.heuristic;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("lps", self.lps.to_string());
        kv("ses", self.ses.to_string());
        kv("steps", self.steps.to_string());
        kv("area_side", self.area_side.to_string());
        kv("speed", self.speed.to_string());
        kv("range", self.range.to_string());
        kv("pi", self.pi.to_string());
        kv("interaction_size", self.interaction_size.to_string());
        kv("migration_size", self.migration_size.to_string());
        kv("gaia", on_off(self.gaia).into());
        kv("heuristic", h.kind.to_string());
        kv("mf", h.mf.to_string());
        kv("mt", h.mt.to_string());
        kv("kappa", h.kappa.to_string());
        kv("omega", h.omega.to_string());
        kv("zeta", h.zeta.to_string());
        kv("balancer", on_off(self.balancer).into());
        kv("band", self.band.map_or("auto".into(), |b| b.to_string()));
        kv("payload_delivery", on_off(self.payload_delivery).into());
        kv("transport", self.transport.to_string());
        kv(
            "roster",
            self.roster
                .as_ref()
                .map_or(String::new(), |p| p.display().to_string()),
        );
        kv("lp_id", self.lp_id.map_or("auto".into(), |i| i.to_string()));
        kv("runs", self.runs.to_string());
        kv("trace_digest", on_off(self.trace_digest).into());
        kv(
            "scheduler",
            match self.scheduler {
                Scheduler::Threaded => "threaded",
                Scheduler::Sequential => "sequential",
            }
            .into(),
        );
        kv("dynamic_exit", on_off(self.dynamic_exit).into());
        s
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.lps == 0 {
            return Err("lps must be at least 1".into());
        }
        if self.runs == 0 {
            return Err("runs must be at least 1".into());
        }
        if self.steps == 0 {
            return Err("steps must be at least 1".into());
        }
        if self.migration_size < crate::domain::BASE_STATE_BYTES {
            return Err(format!(
                "migration_size must be at least {} bytes",
                crate::domain::BASE_STATE_BYTES
            ));
        }
        self.heuristic.validate()?;
        self.model_config(self.seed).validate()?;
        if self.transport == TransportKind::Tcp {
            let roster = self
                .roster
                .as_ref()
                .ok_or("tcp transport needs a roster file")?;
            if !roster.exists() {
                return Err(format!("roster file {} does not exist", roster.display()));
            }
            match self.lp_id {
                Some(id) if (id as usize) < self.lps => {}
                Some(id) => return Err(format!("lp_id {id} is outside 0..{}", self.lps)),
                None => return Err("tcp transport needs lp_id".into()),
            }
        }
        Ok(())
    }

    /// Seed of run `index`.
    pub fn run_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }

    pub fn model_config(&self, seed: u64) -> RwpConfig {
        RwpConfig {
            num_entities: self.ses,
            area_side: self.area_side,
            speed: self.speed,
            range: self.range,
            pi: self.pi,
            interaction_size: self.interaction_size,
            migration_pad: self
                .migration_size
                .saturating_sub(crate::domain::BASE_STATE_BYTES),
            seed,
        }
    }

    pub fn engine_config(&self, seed: u64) -> EngineConfig {
        EngineConfig {
            n_lps: self.lps,
            steps: self.steps,
            seed,
            gaia: self.gaia,
            heuristic: self.heuristic,
            balancer: self.balancer,
            band: self.band,
            payload_delivery: self.payload_delivery,
            trace_digest: self.trace_digest,
            dynamic_exit: self.dynamic_exit,
            ..EngineConfig::default()
        }
    }

    /// Area side that keeps the default density of one agent per 10^4
    /// square units for `ses` agents.
    pub fn density_matched_side(ses: usize) -> f64 {
        (ses as f64 * 1e4).sqrt().round()
    }
}

//! Executing configured runs.

use std::time::Duration;

use crate::domain::LpId;
use crate::engine::{run_distributed, run_local, RunReport};
use crate::error::{Result, SimError};
use crate::harness::config::{ScenarioConfig, TransportKind};
use crate::harness::output::RunRow;
use crate::model::RandomWaypoint;
use crate::transport::{load_roster, TcpTransport};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

/// Runs one seed of the scenario with the configured transport.
pub fn run_once(cfg: &ScenarioConfig, seed: u64) -> Result<RunReport> {
    let model = RandomWaypoint::new(cfg.model_config(seed)).map_err(SimError::Config)?;
    let engine = cfg.engine_config(seed);
    match cfg.transport {
        TransportKind::Local => run_local(&engine, model, cfg.scheduler),
        TransportKind::Tcp => {
            let roster_path = cfg
                .roster
                .as_ref()
                .ok_or_else(|| SimError::Config("tcp transport needs a roster file".into()))?;
            let roster = load_roster(roster_path)?;
            let lp = LpId(
                cfg.lp_id
                    .ok_or_else(|| SimError::Config("tcp transport needs lp_id".into()))?,
            );
            let transport = TcpTransport::connect(lp, &roster, CONNECT_TIMEOUT)?;
            run_distributed(&engine, model, transport)
        }
    }
}

/// A finished run with the seed it used.
#[derive(Debug, Clone)]
pub struct Completed {
    pub index: usize,
    pub seed: u64,
    pub report: RunReport,
}

impl Completed {
    pub fn row(&self, cfg: &ScenarioConfig) -> RunRow {
        RunRow::from_report(self.index.to_string(), self.seed, cfg, &self.report)
    }
}

/// Runs `cfg.runs` independent seeds, `seed + i` for run `i`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<Completed>> {
    cfg.validate().map_err(SimError::Config)?;
    (0..cfg.runs)
        .map(|index| {
            let seed = cfg.run_seed(index);
            Ok(Completed {
                index,
                seed,
                report: run_once(cfg, seed)?,
            })
        })
        .collect()
}

/// Outcome of the migration cost isolation mode.
#[derive(Debug, Clone)]
pub struct MigcReport {
    pub with_gaia: Vec<RunRow>,
    pub without_gaia: Vec<RunRow>,
    /// Mean wall clock with clustering minus mean wall clock without.
    pub estimate_s: f64,
}

/// Runs the scenario with and without clustering while interactions are
/// only accounted, never delivered, so the difference in wall clock time
/// is what migrating costs.
pub fn migc_isolation(cfg: &ScenarioConfig) -> Result<MigcReport> {
    let base = ScenarioConfig {
        payload_delivery: false,
        ..cfg.clone()
    };
    let rows = |gaia: bool| -> Result<Vec<RunRow>> {
        let c = ScenarioConfig {
            gaia,
            ..base.clone()
        };
        Ok(run_scenario(&c)?.iter().map(|r| r.row(&c)).collect())
    };
    let with_gaia = rows(true)?;
    let without_gaia = rows(false)?;
    let mean_wct = |rows: &[RunRow]| rows.iter().map(|r| r.wct_s).sum::<f64>() / rows.len() as f64;
    Ok(MigcReport {
        estimate_s: mean_wct(&with_gaia) - mean_wct(&without_gaia),
        with_gaia,
        without_gaia,
    })
}

//! The timestepped execution loop.
//!
//! Every LP runs the same eight phases each step:
//!
//! 1. instantiate entities whose envelopes arrived;
//! 2. apply routing notices;
//! 3. resolve balancer grants and compute new ones;
//! 4. deliver the events due now, entities ascending and events by
//!    `(sender, seq)`;
//! 5. move entities and collect what they emit;
//! 6. evaluate the clustering heuristic;
//! 7. send notices for entities notified now and ship the ones notified
//!    last step;
//! 8. transmit events due next step, then the barrier.
//!
//! Events due later than the next step stay in the sender LP's outbox until
//! the step before they are due, and are routed with the ownership in force
//! at their delivery step.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::domain::{EntityId, LpId, Timestep};
use crate::error::{Result, SimError, TransportError};
use crate::heuristics::HeuristicParams;
use crate::model::Model;
use crate::rng::{EntityRngs, Purpose};
use crate::transport::{local_mesh, Transport};

pub mod lp;
pub mod report;

pub use lp::Lp;
pub use report::{DigestRecord, LpReport, MigrationRecord, RunReport};

/// Makes an entity a candidate at a given step whatever its heuristic says.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForcedCandidacy {
    pub at: Timestep,
    pub entity: EntityId,
    pub target: LpId,
}

/// Delays one LP just before it sends its barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stall {
    pub lp: LpId,
    pub at: Timestep,
    pub pause: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub n_lps: usize,
    pub steps: u64,
    pub seed: u64,
    pub gaia: bool,
    pub heuristic: HeuristicParams,
    pub balancer: bool,
    /// Population band; `None` picks the default for the run size.
    pub band: Option<u32>,
    /// When off, interactions are accounted for but never delivered.
    pub payload_delivery: bool,
    pub trace_digest: bool,
    /// LPs left without entities hand their stored events to another LP.
    pub dynamic_exit: bool,
    pub forced: Vec<ForcedCandidacy>,
    pub stall: Option<Stall>,
    /// Explicit initial owner of every entity instead of the seeded one.
    pub allocation: Option<Vec<LpId>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_lps: 1,
            steps: 100,
            seed: 1,
            gaia: false,
            heuristic: HeuristicParams::default(),
            balancer: false,
            band: None,
            payload_delivery: true,
            trace_digest: false,
            dynamic_exit: false,
            forced: Vec::new(),
            stall: None,
            allocation: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lps == 0 {
            return Err(SimError::Config("at least one LP is required".into()));
        }
        if self.n_lps > u32::MAX as usize {
            return Err(SimError::Config("too many LPs".into()));
        }
        self.heuristic.validate().map_err(SimError::Config)
    }

    /// The balancer only has work when migrations can happen at all.
    pub fn balancer_active(&self) -> bool {
        self.balancer && self.n_lps > 1 && (self.gaia || !self.forced.is_empty())
    }

    pub fn initial_allocation(&self, num_entities: usize) -> Result<Vec<LpId>> {
        match &self.allocation {
            Some(a) if a.len() != num_entities => Err(SimError::Config(format!(
                "allocation lists {} entities, the model has {num_entities}",
                a.len()
            ))),
            Some(a) if a.iter().any(|lp| lp.index() >= self.n_lps) => Err(SimError::Config(
                "allocation names an LP outside the run".into(),
            )),
            Some(a) => Ok(a.clone()),
            None => Ok(initial_allocation(num_entities, self.n_lps, self.seed)),
        }
    }
}

/// Seeded random allocation with equal shares: entities are shuffled and
/// dealt out round-robin.
pub fn initial_allocation(num_entities: usize, n_lps: usize, seed: u64) -> Vec<LpId> {
    let mut order: Vec<usize> = (0..num_entities).collect();
    order.shuffle(&mut EntityRngs::new(seed).global(Purpose::Alloc));
    let mut owner = vec![LpId(0); num_entities];
    for (i, &e) in order.iter().enumerate() {
        owner[e] = LpId((i % n_lps) as u32);
    }
    owner
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    /// One thread per LP.
    #[default]
    Threaded,
    /// All LPs on the calling thread, round-robin within each step.
    Sequential,
}

impl std::str::FromStr for Scheduler {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "threaded" => Ok(Scheduler::Threaded),
            "sequential" => Ok(Scheduler::Sequential),
            other => Err(format!(
                "scheduler must be threaded or sequential, got {other:?}"
            )),
        }
    }
}

/// Runs every LP of the configuration in this process.
pub fn run_local<M: Model>(
    cfg: &EngineConfig,
    model: M,
    scheduler: Scheduler,
) -> Result<RunReport> {
    cfg.validate()?;
    let num_entities = model.num_entities();
    let allocation = cfg.initial_allocation(num_entities)?;
    let cfg = Arc::new(cfg.clone());
    let start = Instant::now();
    let mut lps: Vec<Lp<M, _>> = local_mesh(cfg.n_lps)
        .into_iter()
        .map(|t| Lp::new(cfg.clone(), &allocation, model.clone(), t))
        .collect();

    let reports = match scheduler {
        Scheduler::Sequential => {
            for t in 0..cfg.steps {
                for lp in lps.iter_mut() {
                    lp.step(Timestep(t))?;
                }
            }
            lps.into_iter().map(Lp::finish).collect()
        }
        Scheduler::Threaded => {
            let results: Vec<Result<LpReport>> = std::thread::scope(|s| {
                let handles: Vec<_> = lps
                    .into_iter()
                    .map(|lp| s.spawn(move || lp.run()))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(SimError::Config("LP thread panicked".into())))
                    })
                    .collect()
            });
            first_cause(results)?
        }
    };
    Ok(RunReport {
        lps: reports,
        wct: start.elapsed(),
        steps: cfg.steps,
        num_entities,
    })
}

/// When one LP fails its peers see the connection drop; report the failure
/// that started it.
fn first_cause(results: Vec<Result<LpReport>>) -> Result<Vec<LpReport>> {
    let mut lost = None;
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e @ SimError::Transport(TransportError::ConnectionLost(_))) => {
                lost.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    match lost {
        Some(e) => Err(e),
        None => Ok(reports),
    }
}

/// Runs the one LP this process is responsible for over `transport` and
/// gathers everyone's reports at the end.
pub fn run_distributed<M: Model, T: Transport>(
    cfg: &EngineConfig,
    model: M,
    transport: T,
) -> Result<RunReport> {
    cfg.validate()?;
    if transport.num_lps() != cfg.n_lps {
        return Err(SimError::Config(format!(
            "transport connects {} LPs, configuration asks for {}",
            transport.num_lps(),
            cfg.n_lps
        )));
    }
    let num_entities = model.num_entities();
    let allocation = cfg.initial_allocation(num_entities)?;
    let cfg = Arc::new(cfg.clone());
    let start = Instant::now();
    let lp = Lp::new(cfg.clone(), &allocation, model, transport);
    let lps = lp.run_and_gather()?;
    Ok(RunReport {
        lps,
        wct: start.elapsed(),
        steps: cfg.steps,
        num_entities,
    })
}

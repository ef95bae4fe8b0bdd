//! What a run leaves behind: per-LP ledgers, trace records and the
//! run-level summaries computed from them.

use std::collections::HashSet;
use std::hash::Hasher;
use std::time::Duration;

use fnv::FnvHasher;

use crate::domain::{EntityId, LpId, Timestep};
use crate::metrics::{self, MetricsLedger};

/// Hash of everything one entity observed and became during one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DigestRecord {
    pub ts: Timestep,
    pub entity: EntityId,
    pub hash: u64,
}

/// One executed migration, logged by the source LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationRecord {
    pub entity: EntityId,
    pub source: LpId,
    pub dest: LpId,
    /// Step at which the heuristic raised the candidacy.
    pub fired: Timestep,
    pub notify_ts: Timestep,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpReport {
    pub lp: LpId,
    pub ledger: MetricsLedger,
    /// Running hash of every frame received, step by step.
    pub frame_digest: u64,
    /// Empty unless trace digests were requested.
    pub digest: Vec<DigestRecord>,
    /// Owned entities at every step, right after arrivals were instantiated.
    pub populations: Vec<u32>,
    pub migrations: Vec<MigrationRecord>,
    /// `(entity, step)` of every instantiated arrival.
    pub arrivals: Vec<(EntityId, Timestep)>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub lps: Vec<LpReport>,
    pub wct: Duration,
    pub steps: u64,
    pub num_entities: usize,
}

pub(crate) fn fnv_u64s(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = FnvHasher::default();
    for w in words {
        h.write(&w.to_le_bytes());
    }
    h.finish()
}

/// Canonical digest of trace records gathered from any number of LPs.
pub fn trace_digest_of(records: &mut [DigestRecord]) -> u64 {
    records.sort_unstable();
    let mut h = FnvHasher::default();
    for r in records.iter() {
        h.write(&r.ts.0.to_le_bytes());
        h.write(&r.entity.0.to_le_bytes());
        h.write(&r.hash.to_le_bytes());
    }
    h.finish()
}

impl RunReport {
    pub fn ledger(&self) -> MetricsLedger {
        metrics::merge(self.lps.iter().map(|r| &r.ledger))
    }

    pub fn lcr(&self) -> f64 {
        metrics::lcr(&self.ledger())
    }

    pub fn migrations(&self) -> u64 {
        self.lps.iter().map(|r| r.migrations.len() as u64).sum()
    }

    pub fn migration_ratio(&self) -> f64 {
        metrics::migration_ratio(self.migrations(), self.num_entities as u64, self.steps)
    }

    /// `None` when the run did not record trace digests.
    pub fn trace_digest(&self) -> Option<u64> {
        let mut all: Vec<DigestRecord> = self
            .lps
            .iter()
            .flat_map(|r| r.digest.iter().copied())
            .collect();
        if all.is_empty() {
            return None;
        }
        Some(trace_digest_of(&mut all))
    }

    pub fn frame_digest(&self) -> u64 {
        fnv_u64s(self.lps.iter().map(|r| r.frame_digest))
    }

    /// Largest deviation of any LP's population from its initial value.
    pub fn max_population_drift(&self) -> u32 {
        self.lps
            .iter()
            .filter_map(|r| {
                let first = *r.populations.first()?;
                r.populations.iter().map(|&p| p.abs_diff(first)).max()
            })
            .max()
            .unwrap_or(0)
    }

    /// Steps from candidacy to instantiation, for every completed migration.
    pub fn migration_latencies(&self) -> Vec<u64> {
        let arrived: HashSet<(EntityId, Timestep)> = self
            .lps
            .iter()
            .flat_map(|r| r.arrivals.iter().copied())
            .collect();
        let mut out = Vec::new();
        for m in self.lps.iter().flat_map(|r| r.migrations.iter()) {
            let active = m.notify_ts.plus(crate::migration::NOTIFY_TO_ACTIVE);
            if arrived.contains(&(m.entity, active)) {
                out.push(active.get() - m.fired.get());
            }
        }
        out
    }

    pub fn modeled_cost(&self, w: &metrics::CostWeights) -> f64 {
        metrics::modeled_cost(&self.ledger(), w)
    }
}

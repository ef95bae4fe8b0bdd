//! Entity migration choreography.
//!
//! A granted entity goes through three steps. With `n` its notify step:
//!
//! * step `n`: the source emits an internal notice to the destination and
//!   an external notice to every other LP. Everyone, the source included,
//!   routes the entity to the destination from step `n + 2`.
//! * step `n + 1`: the entity executes its due events at the source, then
//!   the source serializes it into a [`MigrationEnvelope`].
//! * step `n + 2`: the destination instantiates the entity before delivering
//!   events, so the events routed to it that step find it in place.
//!
//! Events the entity stored at its origin for future delivery are not part
//! of its state and stay behind.

use rand::Rng;

use crate::domain::{EntityId, EntityRecord, EntityStatus, LpId, ModelState, StateBlob, Timestep};
use crate::error::{Result, SimError};
use crate::heuristics::{HeuristicWindow, WindowEntry};
use crate::transport::codec::{Notice, NoticeKind};

/// Steps between a grant and the notify step.
pub const GRANT_TO_NOTIFY: u64 = 1;
/// Steps between the notify step and the step the destination owns the entity.
pub const NOTIFY_TO_ACTIVE: u64 = 2;

/// A serialized entity in flight between two LPs.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationEnvelope {
    pub entity: EntityId,
    pub state: StateBlob,
    pub model_state: ModelState,
    pub last_migration_ts: Option<Timestep>,
    pub sent_since_eval: u32,
    pub window: Vec<WindowEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationPlan {
    pub entity: EntityId,
    pub source: LpId,
    pub dest: LpId,
    pub notify_ts: Timestep,
}

impl MigrationPlan {
    pub fn new(entity: EntityId, source: LpId, dest: LpId, notify_ts: Timestep) -> Result<Self> {
        if source == dest {
            return Err(SimError::Protocol {
                lp: source,
                detail: format!("migration of {entity} onto its own LP"),
            });
        }
        Ok(MigrationPlan {
            entity,
            source,
            dest,
            notify_ts,
        })
    }

    /// First step at which the destination owns the entity.
    pub fn effective_from(&self) -> Timestep {
        self.notify_ts.plus(NOTIFY_TO_ACTIVE)
    }
}

/// The internal notice for the destination and one external notice per
/// other LP, each paired with its recipient.
pub fn emit_notices(plan: &MigrationPlan, n_lps: usize) -> Vec<(LpId, Notice)> {
    let notice = |kind| Notice {
        kind,
        entity: plan.entity,
        from_lp: plan.source,
        to_lp: plan.dest,
        effective_from: plan.effective_from(),
    };
    (0..n_lps as u32)
        .map(LpId)
        .filter(|&lp| lp != plan.source)
        .map(|lp| {
            let kind = if lp == plan.dest {
                NoticeKind::Internal
            } else {
                NoticeKind::External
            };
            (lp, notice(kind))
        })
        .collect()
}

/// Consumes an owned record and packs everything that travels with it.
pub fn serialize_departure(record: EntityRecord) -> MigrationEnvelope {
    MigrationEnvelope {
        entity: record.id,
        state: record.state,
        model_state: record.model_state,
        last_migration_ts: record.last_migration_ts,
        sent_since_eval: record.window.sent_since_eval(),
        window: record.window.entries().copied().collect(),
    }
}

/// Rebuilds a stable entity from an envelope that arrived at step `now`.
pub fn instantiate_arrival(
    env: MigrationEnvelope,
    n_lps: usize,
    now: Timestep,
    lp: LpId,
) -> Result<EntityRecord> {
    let window =
        HeuristicWindow::from_parts(env.window, env.sent_since_eval, n_lps).ok_or_else(|| {
            SimError::Protocol {
                lp,
                detail: format!("window of {} references an unknown LP", env.entity),
            }
        })?;
    Ok(EntityRecord {
        id: env.entity,
        state: env.state,
        model_state: env.model_state,
        window,
        last_migration_ts: Some(now),
        status: EntityStatus::Stable,
        step_digest: 0,
    })
}

/// Picks the LP that inherits the stored events of an exiting LP.
pub fn choose_handover<R: Rng>(remaining: &[LpId], exiting: LpId, rng: &mut R) -> Result<LpId> {
    if remaining.is_empty() {
        return Err(SimError::NoRemainingLp { lp: exiting });
    }
    Ok(remaining[rng.gen_range(0..remaining.len())])
}

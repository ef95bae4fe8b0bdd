//! Domain types shared by every part of the simulator.
//!
//! Identifiers are dense integers so that per-entity tables can be plain
//! vectors indexed by [`EntityId`].

use std::fmt;

use bytes::Bytes;

use crate::heuristics::HeuristicWindow;

/// A simulation timestep. Step 0 is the first one executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestep(pub u64);

impl Timestep {
    pub const ZERO: Timestep = Timestep(0);

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn plus(self, delta: u64) -> Timestep {
        Timestep(self.0 + delta)
    }

    /// `self - delta`, or `None` when that would precede step 0.
    #[inline]
    pub fn minus(self, delta: u64) -> Option<Timestep> {
        self.0.checked_sub(delta).map(Timestep)
    }
}

impl fmt::Display for Timestep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Globally unique, dense identifier of a simulated entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EntityId(pub u64);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "se{}", self.0)
    }
}

/// Identifier of a logical process, in `[0, #LP)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LpId(pub u32);

impl LpId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lp{}", self.0)
    }
}

/// A timestamped message between two entities.
///
/// `deliver_ts - send_ts` is the lookahead of the event and is always at
/// least one step: nothing sent during a step can be received in that step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionEvent {
    pub sender: EntityId,
    pub dest: EntityId,
    pub send_ts: Timestep,
    pub deliver_ts: Timestep,
    /// Per-sender monotone counter.
    pub seq: u64,
    pub payload: Bytes,
}

impl InteractionEvent {
    /// Key used to order the events delivered to one entity within a step.
    #[inline]
    pub fn delivery_key(&self) -> (EntityId, EntityId, u64) {
        (self.dest, self.sender, self.seq)
    }
}

/// Number of 64-bit words at the head of every state blob.
pub const STATE_WORDS: usize = 4;
/// Size in bytes of the live part of a state blob.
pub const BASE_STATE_BYTES: usize = STATE_WORDS * 8;

/// Serializable entity state: four little-endian `u64` words followed by
/// deterministic filler that models a larger migration footprint.
///
/// Word 0 holds the entity's next outgoing sequence number and is managed by
/// the engine. Words 1..4 belong to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBlob(Vec<u8>);

impl StateBlob {
    /// A blob of `BASE_STATE_BYTES + pad` bytes, words zeroed.
    pub fn new(entity: EntityId, pad: usize) -> StateBlob {
        let mut bytes = vec![0u8; BASE_STATE_BYTES + pad];
        for (i, b) in bytes[BASE_STATE_BYTES..].iter_mut().enumerate() {
            *b = (entity.0 as usize).wrapping_add(i) as u8;
        }
        StateBlob(bytes)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Option<StateBlob> {
        (bytes.len() >= BASE_STATE_BYTES).then_some(StateBlob(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn word(&self, i: usize) -> u64 {
        let at = i * 8;
        u64::from_le_bytes(self.0[at..at + 8].try_into().expect("word in range"))
    }

    #[inline]
    pub fn set_word(&mut self, i: usize, value: u64) {
        let at = i * 8;
        self.0[at..at + 8].copy_from_slice(&value.to_le_bytes());
    }

    /// Returns the next sequence number and advances the counter.
    #[inline]
    pub fn take_seq(&mut self) -> u64 {
        let seq = self.word(0);
        self.set_word(0, seq + 1);
        seq
    }
}

/// Model-defined fixed-size substate carried alongside the blob. For the
/// random waypoint model it is `(x, y, waypoint_x, waypoint_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelState(pub [f64; 4]);

/// Position of an entity in the migration state machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntityStatus {
    Stable,
    /// Waiting for the balancer's answer to a candidacy raised at `fired`.
    Candidate {
        target: LpId,
        alpha: f64,
        fired: Timestep,
    },
    /// Cleared to migrate; notices go out at `notify_ts`.
    Granted {
        dest: LpId,
        notify_ts: Timestep,
        fired: Timestep,
    },
    /// Serialized and travelling; never observed on an owning LP.
    InFlight,
}

/// A migratable simulated entity as owned by exactly one LP.
#[derive(Debug, Clone)]
pub struct EntityRecord {
    pub id: EntityId,
    pub state: StateBlob,
    pub model_state: ModelState,
    pub window: HeuristicWindow,
    pub last_migration_ts: Option<Timestep>,
    pub status: EntityStatus,
    /// Running hash of events delivered this step; only used for trace digests.
    pub(crate) step_digest: u64,
}

impl EntityRecord {
    pub fn new(id: EntityId, state: StateBlob, model_state: ModelState, n_lps: usize) -> Self {
        EntityRecord {
            id,
            state,
            model_state,
            window: HeuristicWindow::new(n_lps),
            last_migration_ts: None,
            status: EntityStatus::Stable,
            step_digest: 0,
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self.status, EntityStatus::Stable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_words_and_padding() {
        let mut blob = StateBlob::new(EntityId(3), 5);
        assert_eq!(blob.len(), 37);
        assert_eq!(&blob.as_bytes()[32..], &[3, 4, 5, 6, 7]);
        assert_eq!(blob.take_seq(), 0);
        assert_eq!(blob.take_seq(), 1);
        assert_eq!(blob.word(0), 2);
        blob.set_word(3, u64::MAX);
        assert_eq!(blob.word(3), u64::MAX);
        assert_eq!(blob.word(1), 0);
    }

    #[test]
    fn short_blob_rejected() {
        assert!(StateBlob::from_bytes(vec![0; 31]).is_none());
        assert!(StateBlob::from_bytes(vec![0; 32]).is_some());
    }

    #[test]
    fn timestep_arithmetic() {
        assert_eq!(Timestep(5).plus(2), Timestep(7));
        assert_eq!(Timestep(1).minus(2), None);
        assert_eq!(Timestep(3).minus(3), Some(Timestep::ZERO));
    }
}

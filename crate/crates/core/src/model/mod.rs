//! Simulation models run by the engine.

use bytes::Bytes;

use crate::domain::{EntityId, EntityRecord, InteractionEvent, ModelState, Timestep};

pub mod rwp;
pub mod scripted;

pub use rwp::{RandomWaypoint, RwpConfig};
pub use scripted::{ScriptedModel, ScriptedSend};

/// State word counting delivered events.
pub const WORD_RECEIVED: usize = 1;
/// State word folding every delivered event into a running hash.
pub const WORD_RECEIVED_HASH: usize = 2;
/// State word counting emitted events.
pub const WORD_EMITTED: usize = 3;

/// An interaction an entity wants to send: `delay` steps from now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub dest: EntityId,
    pub delay: u64,
}

/// Entity behaviour plugged into the engine.
///
/// Every LP holds its own clone. Everything a model computes must be a pure
/// function of the seed, the entity and the step, never of which LP runs it.
pub trait Model: Clone + Send + 'static {
    fn num_entities(&self) -> usize;

    /// Filler bytes appended to each entity's state blob.
    fn migration_pad(&self) -> usize;

    /// The payload attached to every emitted interaction.
    fn payload(&self) -> Bytes;

    fn initial_state(&self, entity: EntityId) -> ModelState;

    /// Runs once per step on every LP before owned entities act.
    fn begin_step(&mut self, _now: Timestep) {}

    /// Handler for one delivered event.
    fn deliver(&self, rec: &mut EntityRecord, ev: &InteractionEvent, _now: Timestep) {
        record_delivery(rec, ev);
    }

    /// Movement and emission of one owned entity.
    fn act(&mut self, rec: &mut EntityRecord, now: Timestep, out: &mut Vec<Emission>);
}

/// Default delivery handler: counts the event and folds it into the hash word.
pub fn record_delivery(rec: &mut EntityRecord, ev: &InteractionEvent) {
    let n = rec.state.word(WORD_RECEIVED);
    rec.state.set_word(WORD_RECEIVED, n + 1);
    let mut h = rec.state.word(WORD_RECEIVED_HASH) ^ ev.sender.0.rotate_left(17);
    h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ev.seq ^ (ev.send_ts.0 << 32);
    rec.state.set_word(WORD_RECEIVED_HASH, h.rotate_left(29));
}

pub(crate) fn filler_payload(len: usize) -> Bytes {
    Bytes::from((0..len).map(|i| (i % 251) as u8).collect::<Vec<u8>>())
}

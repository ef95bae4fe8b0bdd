//! A model driven by an explicit send schedule, for protocol tests.

use std::sync::Arc;

use bytes::Bytes;

use crate::domain::{EntityId, EntityRecord, ModelState, Timestep};
use crate::model::{filler_payload, Emission, Model, WORD_EMITTED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedSend {
    pub at: Timestep,
    pub from: EntityId,
    pub to: EntityId,
    pub delay: u64,
}

/// Entities send exactly what the schedule says and nothing else, except
/// that with a ring configured every entity also sends to its successor
/// every step.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    num_entities: usize,
    migration_pad: usize,
    payload: Bytes,
    /// Sorted by `(at, from)`.
    sends: Arc<Vec<ScriptedSend>>,
    ring_delay: Option<u64>,
}

impl ScriptedModel {
    pub fn new(num_entities: usize, mut sends: Vec<ScriptedSend>) -> ScriptedModel {
        sends.sort_by_key(|s| (s.at, s.from));
        assert!(
            sends.iter().all(|s| s.delay >= 1),
            "sends need a delay of at least one step"
        );
        ScriptedModel {
            num_entities,
            migration_pad: 0,
            payload: filler_payload(4),
            sends: Arc::new(sends),
            ring_delay: None,
        }
    }

    pub fn with_ring(mut self, delay: u64) -> ScriptedModel {
        assert!(delay >= 1);
        self.ring_delay = Some(delay);
        self
    }

    pub fn with_migration_pad(mut self, pad: usize) -> ScriptedModel {
        self.migration_pad = pad;
        self
    }

    pub fn total_scheduled(&self, steps: u64) -> usize {
        self.sends.iter().filter(|s| s.at.get() < steps).count()
            + self
                .ring_delay
                .map_or(0, |_| self.num_entities * steps as usize)
    }
}

impl Model for ScriptedModel {
    fn num_entities(&self) -> usize {
        self.num_entities
    }

    fn migration_pad(&self) -> usize {
        self.migration_pad
    }

    fn payload(&self) -> Bytes {
        self.payload.clone()
    }

    fn initial_state(&self, entity: EntityId) -> ModelState {
        ModelState([entity.0 as f64, 0.0, 0.0, 0.0])
    }

    fn act(&mut self, rec: &mut EntityRecord, now: Timestep, out: &mut Vec<Emission>) {
        let before = out.len();
        let lo = self
            .sends
            .partition_point(|s| (s.at, s.from) < (now, rec.id));
        for s in self.sends[lo..]
            .iter()
            .take_while(|s| s.at == now && s.from == rec.id)
        {
            out.push(Emission {
                dest: s.to,
                delay: s.delay,
            });
        }
        if let Some(delay) = self.ring_delay {
            out.push(Emission {
                dest: EntityId((rec.id.0 + 1) % self.num_entities as u64),
                delay,
            });
        }
        rec.model_state.0[1] = now.get() as f64;
        let sent = rec.state.word(WORD_EMITTED) + (out.len() - before) as u64;
        rec.state.set_word(WORD_EMITTED, sent);
    }
}

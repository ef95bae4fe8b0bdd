//! Counter-based per-entity randomness.
//!
//! Every draw an entity makes is addressed by `(entity, step, purpose)`, so
//! the value does not depend on which LP happens to run the entity or on how
//! many draws other entities made before it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{EntityId, Timestep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 0,
    Move = 1,
    Emit = 2,
    Alloc = 3,
}

/// Words of keystream reserved for one `(step, purpose)` slot.
const SLOT_WORDS_LOG2: u32 = 16;

#[derive(Debug, Clone)]
pub struct EntityRngs {
    proto: ChaCha8Rng,
}

impl EntityRngs {
    pub fn new(seed: u64) -> EntityRngs {
        EntityRngs {
            proto: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The generator for one entity, step and purpose.
    pub fn stream(&self, entity: EntityId, t: Timestep, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = self.proto.clone();
        rng.set_stream(entity.0);
        let slot = u128::from(t.get()) * 4 + purpose as u128;
        rng.set_word_pos(slot << SLOT_WORDS_LOG2);
        rng
    }

    /// Like [`stream`](Self::stream) but only pays for the keystream setup
    /// when a value is actually drawn.
    pub fn lazy(&self, entity: EntityId, t: Timestep, purpose: Purpose) -> LazyStream<'_> {
        LazyStream {
            rngs: self,
            entity,
            t,
            purpose,
            inner: None,
        }
    }

    /// A generator not tied to any entity, for run-level choices.
    pub fn global(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut rng = self.proto.clone();
        rng.set_stream(u64::MAX);
        rng.set_word_pos((purpose as u128) << SLOT_WORDS_LOG2);
        rng
    }
}

pub struct LazyStream<'a> {
    rngs: &'a EntityRngs,
    entity: EntityId,
    t: Timestep,
    purpose: Purpose,
    inner: Option<ChaCha8Rng>,
}

impl LazyStream<'_> {
    fn get(&mut self) -> &mut ChaCha8Rng {
        let (rngs, e, t, p) = (self.rngs, self.entity, self.t, self.purpose);
        self.inner.get_or_insert_with(|| rngs.stream(e, t, p))
    }
}

impl RngCore for LazyStream<'_> {
    fn next_u32(&mut self) -> u32 {
        self.get().next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.get().next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.get().fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.get().try_fill_bytes(dest)
    }
}

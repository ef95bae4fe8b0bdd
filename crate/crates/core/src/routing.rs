//! Timestep-aware map from entity to owning logical process.
//!
//! Every LP keeps a full replica. Entries are appended by migration notices
//! and never compacted, so an event stored at its origin for many steps can
//! still be routed to whoever owns the destination when it falls due.

use smallvec::SmallVec;

use crate::domain::{EntityId, LpId, Timestep};
use crate::error::{Result, SimError};

type History = SmallVec<[(Timestep, LpId); 2]>;

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: Vec<History>,
}

impl RoutingTable {
    /// Builds a table where entity `i` starts on `initial[i]` at step 0.
    pub fn new(initial: &[LpId]) -> RoutingTable {
        RoutingTable {
            entries: initial
                .iter()
                .map(|&lp| {
                    let mut h = History::new();
                    h.push((Timestep::ZERO, lp));
                    h
                })
                .collect(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entries.len()
    }

    /// The LP owning `entity` at step `t`: the entry with the greatest
    /// `effective_from <= t`.
    pub fn lookup(&self, entity: EntityId, t: Timestep) -> Result<LpId> {
        let history = self
            .entries
            .get(entity.index())
            .ok_or(SimError::UnknownEntity(entity))?;
        history
            .iter()
            .rev()
            .find(|(from, _)| *from <= t)
            .map(|&(_, lp)| lp)
            .ok_or(SimError::UnknownEntity(entity))
    }

    /// Owner after every known notice has taken effect.
    pub fn final_owner(&self, entity: EntityId) -> Result<LpId> {
        self.entries
            .get(entity.index())
            .and_then(|h| h.last())
            .map(|&(_, lp)| lp)
            .ok_or(SimError::UnknownEntity(entity))
    }

    /// Records that `entity` belongs to `dest` from `effective_from` onward.
    pub fn apply_notice(
        &mut self,
        entity: EntityId,
        dest: LpId,
        effective_from: Timestep,
    ) -> Result<()> {
        let history = self
            .entries
            .get_mut(entity.index())
            .ok_or(SimError::UnknownEntity(entity))?;
        let last = history.last().map(|&(t, _)| t).unwrap_or(Timestep::ZERO);
        if !history.is_empty() && effective_from <= last {
            return Err(SimError::NonMonotoneNotice {
                entity,
                effective: effective_from,
                last,
            });
        }
        history.push((effective_from, dest));
        Ok(())
    }

    /// Number of entities each LP will own once all known notices apply.
    pub fn final_populations(&self, n_lps: usize) -> Vec<u32> {
        let mut pops = vec![0u32; n_lps];
        for h in &self.entries {
            if let Some(&(_, lp)) = h.last() {
                pops[lp.index()] += 1;
            }
        }
        pops
    }

    /// Entries recorded for one entity, oldest first.
    pub fn history(&self, entity: EntityId) -> Option<&[(Timestep, LpId)]> {
        self.entries.get(entity.index()).map(|h| h.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(n: usize) -> RoutingTable {
        RoutingTable::new(&vec![LpId(0); n])
    }

    #[test]
    fn single_entry() {
        let t = table(6);
        assert_eq!(t.lookup(EntityId(5), Timestep(7)).unwrap(), LpId(0));
    }

    #[test]
    fn hand_off_takes_effect_at_its_step() {
        let mut t = table(6);
        t.apply_notice(EntityId(5), LpId(1), Timestep(12)).unwrap();
        assert_eq!(t.lookup(EntityId(5), Timestep(11)).unwrap(), LpId(0));
        assert_eq!(t.lookup(EntityId(5), Timestep(12)).unwrap(), LpId(1));
    }

    #[test]
    fn double_migration_matches_replay() {
        let mut t = table(6);
        t.apply_notice(EntityId(5), LpId(1), Timestep(12)).unwrap();
        t.apply_notice(EntityId(5), LpId(0), Timestep(30)).unwrap();
        // naive per-step ownership log for the same script
        let log: Vec<LpId> = (0..40)
            .map(|s| match s {
                0..=11 => LpId(0),
                12..=29 => LpId(1),
                _ => LpId(0),
            })
            .collect();
        for (s, want) in log.iter().enumerate() {
            assert_eq!(t.lookup(EntityId(5), Timestep(s as u64)).unwrap(), *want);
        }
        assert_eq!(t.lookup(EntityId(5), Timestep(30)).unwrap(), LpId(0));
    }

    #[test]
    fn notice_on_fresh_table() {
        let mut t = table(4);
        t.apply_notice(EntityId(3), LpId(2), Timestep(15)).unwrap();
        assert_eq!(t.lookup(EntityId(3), Timestep(15)).unwrap(), LpId(2));
    }

    #[test]
    fn repeated_effective_step_is_rejected() {
        let mut t = table(4);
        t.apply_notice(EntityId(3), LpId(2), Timestep(15)).unwrap();
        let err = t.apply_notice(EntityId(3), LpId(1), Timestep(15));
        assert!(matches!(err, Err(SimError::NonMonotoneNotice { .. })));
        // a notice at step 0 can never follow the initial placement
        assert!(t.apply_notice(EntityId(0), LpId(1), Timestep(0)).is_err());
    }

    #[test]
    fn unknown_entity_is_an_error() {
        let t = table(2);
        assert!(matches!(
            t.lookup(EntityId(2), Timestep(0)),
            Err(SimError::UnknownEntity(EntityId(2)))
        ));
    }

    #[test]
    fn populations_follow_final_owner() {
        let mut t = RoutingTable::new(&[LpId(0), LpId(0), LpId(1)]);
        t.apply_notice(EntityId(1), LpId(2), Timestep(4)).unwrap();
        assert_eq!(t.final_populations(3), vec![1, 1, 1]);
        assert_eq!(t.final_owner(EntityId(1)).unwrap(), LpId(2));
    }

    #[derive(Debug, Clone)]
    struct Notice {
        entity: u64,
        dest: u32,
        gap: u64,
    }

    fn notices() -> impl Strategy<Value = Vec<Notice>> {
        prop::collection::vec(
            (0u64..1000, 0u32..8, 1u64..6).prop_map(|(entity, dest, gap)| Notice {
                entity,
                dest,
                gap,
            }),
            100..300,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// Lookups agree with a brute-force array holding the owner of every
        /// entity at every step.
        #[test]
        fn lookup_matches_ownership_replay(script in notices(), seed in 0u32..8) {
            const N: usize = 1000;
            const HORIZON: usize = 200;
            let initial: Vec<LpId> = (0..N).map(|i| LpId((i as u32 + seed) % 8)).collect();
            let mut table = RoutingTable::new(&initial);
            let mut owner: Vec<Vec<LpId>> = initial.iter().map(|&lp| vec![lp; HORIZON]).collect();
            let mut last = vec![0u64; N];
            for n in &script {
                let e = n.entity as usize;
                let from = last[e] + n.gap;
                last[e] = from;
                table.apply_notice(EntityId(n.entity), LpId(n.dest), Timestep(from)).unwrap();
                for slot in owner[e].iter_mut().skip(from as usize) {
                    *slot = LpId(n.dest);
                }
            }
            for e in 0..N {
                for t in 0..HORIZON {
                    prop_assert_eq!(table.lookup(EntityId(e as u64), Timestep(t as u64)).unwrap(), owner[e][t]);
                }
            }
        }
    }
}

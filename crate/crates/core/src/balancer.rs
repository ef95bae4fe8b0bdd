//! Symmetric load balancing.
//!
//! Candidacies raised at step `t` are broadcast as per-destination counts at
//! the end of `t`. At `t + 1` every LP holds the same request matrix, so each
//! one can compute the same grant matrix; destinations send their column as
//! LB_GRANT messages and sources apply them at `t + 2`.
//!
//! Each round first grants pairwise swaps (`min(R[a][b], R[b][a])` in both
//! directions), which leave every population unchanged. Leftover one-way
//! requests are then admitted only while every LP's projected population
//! stays within `band` of its initial value; a destination's free slots are
//! shared among requesting sources in proportion to their requests.
//!
//! The projection includes every grant already issued, so the bound holds at
//! every step even though rounds overlap in time.

use crate::domain::{EntityId, LpId};
use crate::heuristics::Candidacy;

/// Per-destination candidate counts broadcast by one LP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSummary {
    pub source: LpId,
    /// Sorted by destination, zero counts omitted.
    pub counts: Vec<(LpId, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantDecision {
    pub dest: LpId,
    pub source: LpId,
    pub granted: u32,
}

/// Band used when none is configured: 1% of the per-LP population, rounded up.
pub fn default_band(num_entities: usize, n_lps: usize) -> u32 {
    (num_entities as f64 * 0.01 / n_lps as f64).ceil() as u32
}

pub fn summarize(source: LpId, candidacies: &[Candidacy]) -> CandidateSummary {
    let mut counts: Vec<(LpId, u32)> = Vec::new();
    for c in candidacies {
        match counts.iter_mut().find(|(lp, _)| *lp == c.target) {
            Some((_, n)) => *n += 1,
            None => counts.push((c.target, 1)),
        }
    }
    counts.sort_unstable_by_key(|&(lp, _)| lp);
    CandidateSummary { source, counts }
}

/// Orders candidates by decreasing alpha, then increasing entity id.
pub fn rank_candidates(cands: &mut [(EntityId, f64)]) {
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Splits ranked candidates into the first `granted` and the rest.
pub fn select_granted(
    mut cands: Vec<(EntityId, f64)>,
    granted: u32,
) -> (Vec<EntityId>, Vec<EntityId>) {
    rank_candidates(&mut cands);
    let k = (granted as usize).min(cands.len());
    let ids: Vec<EntityId> = cands.into_iter().map(|(e, _)| e).collect();
    (ids[..k].to_vec(), ids[k..].to_vec())
}

/// Shares `slots` among `requests` (sorted by source): everything if it
/// fits, otherwise proportional floors with the remainder handed out one by
/// one to the lowest source ids.
pub fn allocate_proportional(requests: &[(LpId, u32)], slots: u32) -> Vec<(LpId, u32)> {
    let total: u64 = requests.iter().map(|&(_, r)| u64::from(r)).sum();
    if total <= u64::from(slots) {
        return requests.to_vec();
    }
    let mut grants: Vec<(LpId, u32)> = requests
        .iter()
        .map(|&(lp, r)| (lp, (u64::from(r) * u64::from(slots) / total) as u32))
        .collect();
    let mut left = slots - grants.iter().map(|&(_, g)| g).sum::<u32>();
    for (i, (_, g)) in grants.iter_mut().enumerate() {
        if left == 0 {
            break;
        }
        if *g < requests[i].1 {
            *g += 1;
            left -= 1;
        }
    }
    grants
}

/// Grant matrix of one round, indexed `[source][dest]`.
pub type GrantMatrix = Vec<Vec<u32>>;

/// Replicated balancer bookkeeping; identical on every LP.
#[derive(Debug, Clone)]
pub struct BalancerState {
    band: i64,
    initial: Vec<i64>,
    projected: Vec<i64>,
}

impl BalancerState {
    pub fn new(initial: &[u32], band: u32) -> BalancerState {
        let initial: Vec<i64> = initial.iter().map(|&p| i64::from(p)).collect();
        BalancerState {
            band: i64::from(band),
            projected: initial.clone(),
            initial,
        }
    }

    pub fn band(&self) -> u32 {
        self.band as u32
    }

    /// Populations once every grant issued so far has executed.
    pub fn projected(&self) -> &[i64] {
        &self.projected
    }

    /// Computes the grants for one round of summaries and commits them to
    /// the projection.
    pub fn plan_round(&mut self, summaries: &[CandidateSummary]) -> GrantMatrix {
        let n = self.initial.len();
        let mut requests = vec![vec![0u32; n]; n];
        for s in summaries {
            for &(dest, count) in &s.counts {
                if dest != s.source && dest.index() < n && s.source.index() < n {
                    requests[s.source.index()][dest.index()] += count;
                }
            }
        }

        let mut grants = vec![vec![0u32; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let swap = requests[a][b].min(requests[b][a]);
                grants[a][b] = swap;
                grants[b][a] = swap;
                requests[a][b] -= swap;
                requests[b][a] -= swap;
            }
        }

        // Inbound only raises, outbound only lowers; charging each against
        // its own side keeps the final population inside the band whatever
        // else this round grants.
        let mut room_up: Vec<i64> = (0..n)
            .map(|i| (self.initial[i] + self.band - self.projected[i]).max(0))
            .collect();
        let mut room_down: Vec<i64> = (0..n)
            .map(|i| (self.projected[i] - (self.initial[i] - self.band)).max(0))
            .collect();
        for dest in 0..n {
            let asks: Vec<(LpId, u32)> = (0..n)
                .filter(|&s| s != dest && requests[s][dest] > 0)
                .map(|s| {
                    let capped = i64::from(requests[s][dest]).min(room_down[s]);
                    (LpId(s as u32), capped as u32)
                })
                .collect();
            let slots = room_up[dest].min(i64::from(u32::MAX)) as u32;
            for (src, g) in allocate_proportional(&asks, slots) {
                grants[src.index()][dest] += g;
                room_up[dest] -= i64::from(g);
                room_down[src.index()] -= i64::from(g);
            }
        }

        for (s, row) in grants.iter().enumerate() {
            for (d, &g) in row.iter().enumerate() {
                self.projected[s] -= i64::from(g);
                self.projected[d] += i64::from(g);
            }
        }
        grants
    }
}

/// LB_GRANT messages `dest` sends for a round: one per source that asked.
pub fn grants_for(
    dest: LpId,
    summaries: &[CandidateSummary],
    matrix: &GrantMatrix,
) -> Vec<GrantDecision> {
    let mut out: Vec<GrantDecision> = summaries
        .iter()
        .filter(|s| s.source != dest && s.counts.iter().any(|&(d, c)| d == dest && c > 0))
        .map(|s| GrantDecision {
            dest,
            source: s.source,
            granted: matrix[s.source.index()][dest.index()],
        })
        .collect();
    out.sort_unstable_by_key(|g| g.source);
    out
}

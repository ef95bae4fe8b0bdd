//! Self-clustering heuristics.
//!
//! Each entity keeps a sliding window of the logical processes its sent
//! interactions were addressed to. From the window we take the local count
//! `iota` (interactions to the entity's own LP) and, over every other LP, the
//! largest count `epsilon`. The entity becomes a migration candidate towards
//! that LP when `alpha = epsilon / iota` exceeds the migration factor and the
//! entity has stayed put for at least the migration threshold.
//!
//! The three variants differ only in how the window is bounded and when it
//! is evaluated:
//!
//! * [`HeuristicKind::TimeWindow`]: sends of the last `kappa` steps,
//!   evaluated every step.
//! * [`HeuristicKind::CountWindow`]: the last `omega` sends, evaluated every
//!   step.
//! * [`HeuristicKind::TriggeredCountWindow`]: like the count window, but only
//!   evaluated once the entity has sent `zeta` interactions since the
//!   previous evaluation.
//!
//! Everything here reads entity-local data only.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::domain::{EntityId, LpId, Timestep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicKind {
    TimeWindow,
    CountWindow,
    TriggeredCountWindow,
}

impl HeuristicKind {
    /// Numeric code used in configuration files and CSV output.
    pub fn code(self) -> u8 {
        match self {
            HeuristicKind::TimeWindow => 1,
            HeuristicKind::CountWindow => 2,
            HeuristicKind::TriggeredCountWindow => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<HeuristicKind> {
        match code {
            1 => Some(HeuristicKind::TimeWindow),
            2 => Some(HeuristicKind::CountWindow),
            3 => Some(HeuristicKind::TriggeredCountWindow),
            _ => None,
        }
    }
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for HeuristicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(HeuristicKind::from_code)
            .ok_or_else(|| format!("heuristic must be 1, 2 or 3, got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicParams {
    pub kind: HeuristicKind,
    /// Migration factor: `alpha` must exceed it.
    pub mf: f64,
    /// Migration threshold: minimum steps since the entity's last migration.
    pub mt: u64,
    /// Window length in steps (time window).
    pub kappa: u32,
    /// Window length in interactions (count windows).
    pub omega: u32,
    /// Sends needed to trigger an evaluation (triggered window).
    pub zeta: u32,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            kind: HeuristicKind::TimeWindow,
            mf: 1.5,
            mt: 10,
            kappa: 32,
            omega: 32,
            zeta: 8,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mf > 0.0) || !self.mf.is_finite() {
            return Err(format!("mf must be a positive number, got {}", self.mf));
        }
        if self.kappa == 0 || self.omega == 0 || self.zeta == 0 {
            return Err("kappa, omega and zeta must be at least 1".into());
        }
        Ok(())
    }
}

/// Interactions sent to one LP at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowEntry {
    pub ts: Timestep,
    pub lp: LpId,
    pub count: u32,
}

/// Per-entity interaction accounting, carried along when the entity migrates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicWindow {
    entries: VecDeque<WindowEntry>,
    /// Running per-LP totals over `entries`.
    counts: Vec<u32>,
    sent_since_eval: u32,
}

impl HeuristicWindow {
    pub fn new(n_lps: usize) -> HeuristicWindow {
        HeuristicWindow {
            entries: VecDeque::new(),
            counts: vec![0; n_lps],
            sent_since_eval: 0,
        }
    }

    /// Rebuilds a window from its serialized parts.
    pub fn from_parts(
        entries: impl IntoIterator<Item = WindowEntry>,
        sent_since_eval: u32,
        n_lps: usize,
    ) -> Option<HeuristicWindow> {
        let mut window = HeuristicWindow::new(n_lps);
        for e in entries {
            *window.counts.get_mut(e.lp.index())? += e.count;
            window.entries.push_back(e);
        }
        window.sent_since_eval = sent_since_eval;
        Some(window)
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &WindowEntry> + '_ {
        self.entries.iter()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn sent_since_eval(&self) -> u32 {
        self.sent_since_eval
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Accounts one interaction sent at `now` to an entity owned by `dest_lp`
    /// at its delivery step.
    pub fn record_sent(&mut self, params: &HeuristicParams, dest_lp: LpId, now: Timestep) {
        self.sent_since_eval = self.sent_since_eval.saturating_add(1);
        self.counts[dest_lp.index()] += 1;
        match params.kind {
            HeuristicKind::TimeWindow => {
                match self.entries.back_mut() {
                    Some(last) if last.ts == now && last.lp == dest_lp => last.count += 1,
                    _ => self.entries.push_back(WindowEntry {
                        ts: now,
                        lp: dest_lp,
                        count: 1,
                    }),
                }
                self.expire(now, params.kappa);
            }
            HeuristicKind::CountWindow | HeuristicKind::TriggeredCountWindow => {
                self.entries.push_back(WindowEntry {
                    ts: now,
                    lp: dest_lp,
                    count: 1,
                });
                while self.entries.len() > params.omega as usize {
                    self.pop_front();
                }
            }
        }
    }

    /// Drops entries older than the last `kappa` steps `(now - kappa, now]`.
    fn expire(&mut self, now: Timestep, kappa: u32) {
        while let Some(front) = self.entries.front() {
            if front.ts.get() + u64::from(kappa) <= now.get() {
                self.pop_front();
            } else {
                break;
            }
        }
    }

    fn pop_front(&mut self) {
        if let Some(old) = self.entries.pop_front() {
            self.counts[old.lp.index()] -= old.count;
        }
    }
}

/// A request to move `entity` to `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidacy {
    pub entity: EntityId,
    pub target: LpId,
    pub alpha: f64,
}

/// `epsilon / iota`, with an all-external communicator mapped to infinity.
pub fn alpha(epsilon: u32, iota: u32) -> f64 {
    if iota == 0 {
        f64::INFINITY
    } else {
        f64::from(epsilon) / f64::from(iota)
    }
}

/// The external LP with the most interactions (lowest id on ties) and its count.
pub fn strongest_external(counts: &[u32], current: LpId) -> Option<(LpId, u32)> {
    let mut best: Option<(LpId, u32)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if i == current.index() || c == 0 {
            continue;
        }
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((LpId(i as u32), c));
        }
    }
    best
}

/// Evaluates the heuristic for one stable entity at step `now`.
///
/// The triggered variant skips (and keeps counting) until `zeta` sends have
/// accumulated, then resets its counter whatever the outcome.
pub fn evaluate(
    window: &mut HeuristicWindow,
    params: &HeuristicParams,
    entity: EntityId,
    current: LpId,
    now: Timestep,
    last_migration_ts: Option<Timestep>,
) -> Option<Candidacy> {
    match params.kind {
        HeuristicKind::TimeWindow => window.expire(now, params.kappa),
        HeuristicKind::CountWindow => {}
        HeuristicKind::TriggeredCountWindow => {
            if window.sent_since_eval < params.zeta {
                return None;
            }
            window.sent_since_eval = 0;
        }
    }

    let (target, epsilon) = strongest_external(&window.counts, current)?;
    let iota = window.counts[current.index()];
    let alpha = alpha(epsilon, iota);
    if alpha <= params.mf {
        return None;
    }
    if let Some(last) = last_migration_ts {
        if now.get().saturating_sub(last.get()) < params.mt {
            return None;
        }
    }
    Some(Candidacy {
        entity,
        target,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(kind: HeuristicKind) -> HeuristicParams {
        HeuristicParams {
            kind,
            mf: 3.0,
            mt: 10,
            kappa: 5,
            omega: 4,
            zeta: 2,
        }
    }

    fn send(w: &mut HeuristicWindow, p: &HeuristicParams, lp: u32, t: u64, n: u32) {
        for _ in 0..n {
            w.record_sent(p, LpId(lp), Timestep(t));
        }
    }

    #[test]
    fn local_sends_count_as_iota() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 0, 1, 3);
        assert_eq!(w.counts()[0], 3);
        assert_eq!(w.sent_since_eval(), 3);
    }

    #[test]
    fn time_window_forgets_old_steps() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 1, 4, 1);
        send(&mut w, &p, 2, 6, 1);
        // at t=10 the send from t=4 is six steps old
        let _ = evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(10), None);
        assert_eq!(w.counts(), &[0, 0, 1]);
        // the window covers (now - kappa, now]
        let _ = evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(11), None);
        assert_eq!(w.counts(), &[0, 0, 0]);
        assert!(w.is_empty());
    }

    #[test]
    fn count_window_drops_oldest() {
        let p = params(HeuristicKind::CountWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 1, 0, 1);
        for t in 1..5 {
            send(&mut w, &p, 2, t, 1);
        }
        assert_eq!(w.entries().len(), 4);
        assert_eq!(w.counts(), &[0, 0, 4]);
    }

    #[test]
    fn ratio_above_factor_fires() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 2, 20, 8);
        send(&mut w, &p, 0, 20, 2);
        let c = evaluate(&mut w, &p, EntityId(9), LpId(0), Timestep(20), None).unwrap();
        assert_eq!(c.target, LpId(2));
        assert_eq!(c.alpha, 4.0);
    }

    #[test]
    fn threshold_blocks_recent_migrants() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 2, 20, 8);
        send(&mut w, &p, 0, 20, 2);
        let recent = Some(Timestep(16));
        assert!(evaluate(&mut w, &p, EntityId(9), LpId(0), Timestep(20), recent).is_none());
        let old = Some(Timestep(10));
        assert!(evaluate(&mut w, &p, EntityId(9), LpId(0), Timestep(20), old).is_some());
    }

    #[test]
    fn all_external_traffic_is_infinite_alpha() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(3);
        send(&mut w, &p, 1, 3, 5);
        let c = evaluate(&mut w, &p, EntityId(1), LpId(0), Timestep(3), None).unwrap();
        assert!(c.alpha.is_infinite());
        assert_eq!(c.target, LpId(1));
    }

    #[test]
    fn empty_window_never_fires() {
        for kind in [
            HeuristicKind::TimeWindow,
            HeuristicKind::CountWindow,
            HeuristicKind::TriggeredCountWindow,
        ] {
            let p = params(kind);
            let mut w = HeuristicWindow::new(2);
            assert!(evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(50), None).is_none());
        }
    }

    #[test]
    fn ties_go_to_lowest_lp() {
        assert_eq!(
            strongest_external(&[9, 4, 4, 1], LpId(0)),
            Some((LpId(1), 4))
        );
        assert_eq!(strongest_external(&[9, 0, 0], LpId(0)), None);
    }

    #[test]
    fn triggered_waits_for_zeta_sends() {
        let mut p = params(HeuristicKind::TriggeredCountWindow);
        p.mt = 0;
        let mut w = HeuristicWindow::new(2);
        send(&mut w, &p, 1, 0, 1);
        assert!(evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(0), None).is_none());
        assert_eq!(
            w.sent_since_eval(),
            1,
            "skipped evaluation keeps the counter"
        );
        send(&mut w, &p, 1, 1, 1);
        assert!(evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(1), None).is_some());
        assert_eq!(w.sent_since_eval(), 0);
    }

    #[test]
    fn rebuilt_window_matches_original() {
        let p = params(HeuristicKind::TimeWindow);
        let mut w = HeuristicWindow::new(4);
        send(&mut w, &p, 1, 1, 2);
        send(&mut w, &p, 3, 2, 1);
        let copy =
            HeuristicWindow::from_parts(w.entries().copied(), w.sent_since_eval(), 4).unwrap();
        assert_eq!(copy, w);
        assert!(HeuristicWindow::from_parts(w.entries().copied(), 0, 2).is_none());
    }

    /// Brute-force recount of the raw send log at one evaluation instant.
    fn recount(log: &[(u64, u32)], p: &HeuristicParams, now: u64, n_lps: usize) -> Vec<u32> {
        let mut counts = vec![0; n_lps];
        let considered: Vec<&(u64, u32)> = match p.kind {
            HeuristicKind::TimeWindow => log
                .iter()
                .filter(|(t, _)| *t + u64::from(p.kappa) > now)
                .collect(),
            _ => log.iter().rev().take(p.omega as usize).collect(),
        };
        for (_, lp) in considered {
            counts[*lp as usize] += 1;
        }
        counts
    }

    proptest! {
        #[test]
        fn incremental_counts_match_recount(
            sends in prop::collection::vec((0u32..4, 0u32..3), 1..200),
            kappa in 1u32..10,
            omega in 1u32..20,
            kind_code in 1u8..4,
        ) {
            let p = HeuristicParams { kind: HeuristicKind::from_code(kind_code).unwrap(), mf: 1.0, mt: 0, kappa, omega, zeta: 1 };
            let mut w = HeuristicWindow::new(4);
            let mut log = Vec::new();
            for (step, (lp, burst)) in sends.iter().enumerate() {
                let now = step as u64;
                for _ in 0..*burst {
                    w.record_sent(&p, LpId(*lp), Timestep(now));
                    log.push((now, *lp));
                }
                let _ = evaluate(&mut w, &p, EntityId(0), LpId(0), Timestep(now), None);
                prop_assert_eq!(w.counts().to_vec(), recount(&log, &p, now, 4));
            }
        }

        #[test]
        fn lower_factor_fires_on_a_superset(
            sends in prop::collection::vec((0u32..4, 0u32..4), 1..120),
            a in 1.0f64..4.0,
            extra in 0.0f64..4.0,
        ) {
            let mut pa = HeuristicParams { kind: HeuristicKind::TimeWindow, mf: a, mt: 0, kappa: 6, omega: 8, zeta: 1 };
            let mut pb = pa;
            pb.mf = a + extra;
            for kind in [HeuristicKind::TimeWindow, HeuristicKind::CountWindow] {
                pa.kind = kind;
                pb.kind = kind;
                let (mut wa, mut wb) = (HeuristicWindow::new(4), HeuristicWindow::new(4));
                for (step, (lp, burst)) in sends.iter().enumerate() {
                    let now = Timestep(step as u64);
                    for _ in 0..*burst {
                        wa.record_sent(&pa, LpId(*lp), now);
                        wb.record_sent(&pb, LpId(*lp), now);
                    }
                    let ca = evaluate(&mut wa, &pa, EntityId(0), LpId(0), now, None);
                    let cb = evaluate(&mut wb, &pb, EntityId(0), LpId(0), now, None);
                    if cb.is_some() {
                        prop_assert_eq!(ca, cb);
                    }
                }
            }
        }

        /// With zeta = 1 the triggered window evaluates exactly at the steps
        /// where the entity sent something, and agrees with the count window
        /// there.
        #[test]
        fn triggered_with_unit_zeta_matches_count_window(
            sends in prop::collection::vec((0u32..4, 0u32..3), 1..150),
        ) {
            let p2 = HeuristicParams { kind: HeuristicKind::CountWindow, mf: 1.2, mt: 0, kappa: 4, omega: 6, zeta: 1 };
            let p3 = HeuristicParams { kind: HeuristicKind::TriggeredCountWindow, ..p2 };
            let (mut w2, mut w3) = (HeuristicWindow::new(4), HeuristicWindow::new(4));
            for (step, (lp, burst)) in sends.iter().enumerate() {
                let now = Timestep(step as u64);
                for _ in 0..*burst {
                    w2.record_sent(&p2, LpId(*lp), now);
                    w3.record_sent(&p3, LpId(*lp), now);
                }
                let c2 = evaluate(&mut w2, &p2, EntityId(0), LpId(0), now, None);
                let c3 = evaluate(&mut w3, &p3, EntityId(0), LpId(0), now, None);
                if *burst > 0 {
                    prop_assert_eq!(c2, c3);
                } else {
                    prop_assert!(c3.is_none());
                }
            }
        }
    }
}

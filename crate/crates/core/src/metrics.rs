//! Cost accounting: per-LP counters and timers, and the evaluation metrics
//! computed from them.
//!
//! The ledger splits a run's cost into measurable pieces: handler time for
//! model computation, barrier wait for synchronization, local and remote
//! interaction counts and bytes, heuristic evaluation time, migration CPU
//! time and migration bytes. Whatever step time is not attributed to one of
//! these is reported as a middleware residual.

use std::ops::AddAssign;
use std::time::Duration;

use crate::domain::LpId;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLedger {
    /// Model interactions whose sender and destination shared an LP.
    pub lcc_count: u64,
    /// Model interactions that crossed LPs.
    pub rcc_count: u64,
    /// Encoded interaction bytes of local deliveries.
    pub lcc_bytes: u64,
    /// Encoded interaction bytes put on the wire.
    pub rcc_bytes: u64,
    /// Entities serialized and shipped away.
    pub mig_count: u64,
    /// Encoded migration envelope bytes.
    pub mig_bytes: u64,
    pub events_sent: u64,
    pub events_delivered: u64,
    pub handler_time: Duration,
    pub barrier_wait: Duration,
    pub heu_time: Duration,
    pub mig_cpu_time: Duration,
    pub step_time: Duration,
}

/// Where an interaction was delivered relative to its sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locality {
    Local,
    Remote,
}

pub fn classify_delivery(sender_lp: LpId, dest_lp: LpId) -> Locality {
    if sender_lp == dest_lp {
        Locality::Local
    } else {
        Locality::Remote
    }
}

impl MetricsLedger {
    pub fn record_interaction(&mut self, sender_lp: LpId, dest_lp: LpId, bytes: u64) -> Locality {
        let locality = classify_delivery(sender_lp, dest_lp);
        match locality {
            Locality::Local => {
                self.lcc_count += 1;
                self.lcc_bytes += bytes;
            }
            Locality::Remote => {
                self.rcc_count += 1;
                self.rcc_bytes += bytes;
            }
        }
        locality
    }

    /// Step time not attributed to any measured component.
    pub fn mmc_residual(&self) -> Duration {
        self.step_time.saturating_sub(
            self.handler_time + self.barrier_wait + self.heu_time + self.mig_cpu_time,
        )
    }

    pub fn interactions(&self) -> u64 {
        self.lcc_count + self.rcc_count
    }
}

impl AddAssign<&MetricsLedger> for MetricsLedger {
    fn add_assign(&mut self, o: &MetricsLedger) {
        self.lcc_count += o.lcc_count;
        self.rcc_count += o.rcc_count;
        self.lcc_bytes += o.lcc_bytes;
        self.rcc_bytes += o.rcc_bytes;
        self.mig_count += o.mig_count;
        self.mig_bytes += o.mig_bytes;
        self.events_sent += o.events_sent;
        self.events_delivered += o.events_delivered;
        self.handler_time += o.handler_time;
        self.barrier_wait += o.barrier_wait;
        self.heu_time += o.heu_time;
        self.mig_cpu_time += o.mig_cpu_time;
        self.step_time += o.step_time;
    }
}

/// Sums per-LP ledgers into one run-level ledger.
pub fn merge<'a>(ledgers: impl IntoIterator<Item = &'a MetricsLedger>) -> MetricsLedger {
    let mut total = MetricsLedger::default();
    for l in ledgers {
        total += l;
    }
    total
}

/// Local communication ratio. An interaction-free ledger counts as fully local.
pub fn lcr(ledger: &MetricsLedger) -> f64 {
    let total = ledger.interactions();
    if total == 0 {
        1.0
    } else {
        ledger.lcc_count as f64 / total as f64
    }
}

/// Migrations per entity per thousand steps.
pub fn migration_ratio(total_migrations: u64, num_entities: u64, sim_length: u64) -> f64 {
    assert!(sim_length > 0, "simulation length must be positive");
    total_migrations as f64 / (num_entities as f64 * (sim_length as f64 / 1000.0))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean LCR with self-clustering minus mean LCR without.
pub fn delta_lcr(lcr_on: &[f64], lcr_off: &[f64]) -> f64 {
    mean(lcr_on) - mean(lcr_off)
}

/// Weights of the modeled execution cost, in seconds per byte moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub local_per_byte: f64,
    pub remote_per_byte: f64,
}

impl Default for CostWeights {
    /// Local memory traffic at 1 ns/byte, network 100x slower.
    fn default() -> Self {
        CostWeights {
            local_per_byte: 1e-9,
            remote_per_byte: 1e-7,
        }
    }
}

/// Modeled total execution cost: measured compute, synchronization,
/// heuristic and serialization time plus byte-weighted communication.
pub fn modeled_cost(ledger: &MetricsLedger, w: &CostWeights) -> f64 {
    let measured =
        ledger.handler_time + ledger.barrier_wait + ledger.heu_time + ledger.mig_cpu_time;
    measured.as_secs_f64()
        + w.local_per_byte * ledger.lcc_bytes as f64
        + w.remote_per_byte * (ledger.rcc_bytes + ledger.mig_bytes) as f64
}

/// `wct(1 LP) / (n * wct(n LPs))`.
pub fn parallel_efficiency(wct_one: f64, n: usize, wct_n: f64) -> f64 {
    wct_one / (n as f64 * wct_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify_delivery(LpId(1), LpId(1)), Locality::Local);
        assert_eq!(classify_delivery(LpId(1), LpId(2)), Locality::Remote);
    }

    #[test]
    fn lcr_values() {
        let l = MetricsLedger {
            lcc_count: 3,
            rcc_count: 1,
            ..Default::default()
        };
        assert_eq!(lcr(&l), 0.75);
        assert_eq!(lcr(&MetricsLedger::default()), 1.0);
    }

    #[test]
    fn migration_ratio_substitution() {
        assert_eq!(migration_ratio(7200, 10_000, 3600), 0.2);
        assert_eq!(migration_ratio(0, 10_000, 3600), 0.0);
        assert_eq!(migration_ratio(36_000, 10_000, 3600), 1.0);
    }

    #[test]
    fn delta_lcr_keeps_sign() {
        assert_eq!(delta_lcr(&[0.5, 0.7], &[0.5, 0.7]), 0.0);
        assert!((delta_lcr(&[0.9], &[0.25]) - 0.65).abs() < 1e-12);
        assert!(delta_lcr(&[0.2], &[0.25]) < 0.0);
    }

    #[test]
    fn residual_never_negative() {
        let l = MetricsLedger {
            step_time: Duration::from_millis(10),
            handler_time: Duration::from_millis(4),
            barrier_wait: Duration::from_millis(3),
            ..Default::default()
        };
        assert_eq!(l.mmc_residual(), Duration::from_millis(3));
        let over = MetricsLedger {
            handler_time: Duration::from_millis(40),
            ..l
        };
        assert_eq!(over.mmc_residual(), Duration::ZERO);
    }

    #[test]
    fn cost_falls_as_locality_rises() {
        let w = CostWeights::default();
        let scattered = MetricsLedger {
            lcc_count: 25,
            rcc_count: 75,
            lcc_bytes: 25 * 100,
            rcc_bytes: 75 * 100,
            mig_count: 4,
            mig_bytes: 400,
            ..Default::default()
        };
        let clustered = MetricsLedger {
            lcc_count: 80,
            rcc_count: 20,
            lcc_bytes: 80 * 100,
            rcc_bytes: 20 * 100,
            ..scattered.clone()
        };
        assert!(modeled_cost(&clustered, &w) < modeled_cost(&scattered, &w));
    }

    #[test]
    fn merge_sums_everything() {
        let a = MetricsLedger {
            lcc_count: 1,
            rcc_count: 2,
            heu_time: Duration::from_millis(1),
            ..Default::default()
        };
        let m = merge([&a, &a]);
        assert_eq!(m.lcc_count, 2);
        assert_eq!(m.rcc_count, 4);
        assert_eq!(m.heu_time, Duration::from_millis(2));
    }
}

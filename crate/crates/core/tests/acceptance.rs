//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! to stderr (uncaptured) and fails when its criterion is not met.

use std::io::Write;
use std::net::TcpListener;
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfcluster::balancer::default_band;
use selfcluster::engine::ForcedCandidacy;
use selfcluster::harness::{
    best_mf, run_once, run_scenario, run_sweep, Axis, ScenarioConfig, SweepSpec,
};
use selfcluster::heuristics::{evaluate, HeuristicKind, HeuristicParams, HeuristicWindow};
use selfcluster::metrics::{migration_ratio, CostWeights};
use selfcluster::migration::MigrationPlan;
use selfcluster::model::ScriptedModel;
use selfcluster::routing::RoutingTable;
use selfcluster::{run_local, EngineConfig, EntityId, LpId, RunReport, Scheduler, Timestep};

fn verdict(id: &str, pass: bool, detail: String) {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn scenario(ses: usize, steps: u64, lps: usize) -> ScenarioConfig {
    ScenarioConfig {
        ses,
        steps,
        lps,
        area_side: ScenarioConfig::density_matched_side(ses),
        scheduler: Scheduler::Sequential,
        ..ScenarioConfig::default()
    }
}

fn clustering(mut cfg: ScenarioConfig, mf: f64) -> ScenarioConfig {
    cfg.gaia = true;
    cfg.heuristic.kind = HeuristicKind::TimeWindow;
    cfg.heuristic.mf = mf;
    cfg.heuristic.mt = 10;
    cfg
}

fn reports(cfg: &ScenarioConfig) -> Vec<RunReport> {
    run_scenario(cfg)
        .unwrap()
        .into_iter()
        .map(|c| c.report)
        .collect()
}

fn mean_lcr(runs: &[RunReport]) -> f64 {
    mean(&runs.iter().map(RunReport::lcr).collect::<Vec<_>>())
}

fn mean_of(runs: &[RunReport], f: fn(&RunReport) -> f64) -> f64 {
    mean(&runs.iter().map(f).collect::<Vec<_>>())
}

#[test]
fn c01_partition_independence() {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for seed in [1u64, 2, 3] {
        let mut reference = None;
        for lps in [1usize, 2, 4] {
            for gaia in [false, true] {
                for balancer in [true, false] {
                    let mut cfg = scenario(500, 300, lps);
                    cfg.area_side = 2236.0;
                    cfg.trace_digest = true;
                    cfg.balancer = balancer;
                    if gaia {
                        cfg = clustering(cfg, 1.5);
                    }
                    let digest = run_once(&cfg, seed).unwrap().trace_digest().unwrap();
                    checked += 1;
                    match reference {
                        None => reference = Some(digest),
                        Some(r) if r != digest => mismatches.push((seed, lps, gaia, balancer)),
                        Some(_) => {}
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "C1",
        mismatches.is_empty() && secs < 120.0,
        format!("{checked} runs, mismatches {mismatches:?}, {secs:.1}s"),
    );
}

#[test]
fn c02_static_allocation_baseline() {
    let mut cfg = scenario(2000, 1000, 4);
    cfg.runs = 5;
    let lcr = mean_lcr(&reports(&cfg));
    verdict(
        "C2",
        (lcr - 0.25).abs() <= 0.02,
        format!("mean LCR {lcr:.4} (target 0.25 +/- 0.02)"),
    );
}

#[test]
fn c03_clustering_trend_over_speed() {
    let run = |speed: f64| {
        let mut cfg = clustering(scenario(2000, 2000, 4), 1.2);
        cfg.speed = speed;
        cfg.runs = 5;
        reports(&cfg)
    };
    let (slow, fast) = (run(1.0), run(29.0));
    let (l1, l29) = (mean_lcr(&slow), mean_lcr(&fast));
    let migs = |r: &[RunReport]| mean_of(r, |x| x.migrations() as f64);
    let (m1, m29) = (migs(&slow), migs(&fast));
    verdict(
        "C3",
        l1 >= 0.75 && l1 > l29 && m1 < m29,
        format!("LCR speed1 {l1:.4} speed29 {l29:.4}; migrations {m1:.0} vs {m29:.0}"),
    );
}

/// Mean LCR gain and MR for every candidate factor at one LP count.
fn gain_per_mf(lps: usize, mfs: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut base = scenario(2000, 2000, lps);
    base.runs = 3;
    let off = mean_lcr(&reports(&base));
    mfs.iter()
        .map(|&mf| {
            let on = reports(&clustering(base.clone(), mf));
            (
                mf,
                mean_lcr(&on) - off,
                mean_of(&on, RunReport::migration_ratio),
            )
        })
        .collect()
}

#[test]
fn c04_lp_count_trend() {
    let mfs = [1.2, 1.5, 2.0];
    let two = gain_per_mf(2, &mfs);
    let sixteen = gain_per_mf(16, &mfs);
    // the pair of factors whose migration ratios are closest
    let mut pair = (two[0], sixteen[0]);
    for a in &two {
        for b in &sixteen {
            if (a.2 - b.2).abs() < (pair.0 .2 - pair.1 .2).abs() {
                pair = (*a, *b);
            }
        }
    }
    let (a, b) = pair;
    verdict(
        "C4",
        a.1 > b.1 && b.1 > 0.0,
        format!(
            "dLCR(2 LPs, mf {}) {:.4} mr {:.3}; dLCR(16 LPs, mf {}) {:.4} mr {:.3}",
            a.0, a.1, a.2, b.0, b.1, b.2
        ),
    );
}

#[test]
fn c05_interaction_range_tipping_point() {
    let mut gains = Vec::new();
    for range in [25.0, 100.0, 200.0, 800.0] {
        let mut off = scenario(500, 1000, 4);
        off.range = range;
        off.runs = 3;
        let on = clustering(off.clone(), 1.2);
        gains.push((range, mean_lcr(&reports(&on)) - mean_lcr(&reports(&off))));
    }
    let ends = gains[0].1.max(gains[3].1);
    let peak = gains[1..3].iter().map(|g| g.1).fold(f64::MIN, f64::max);
    let shown: Vec<String> = gains.iter().map(|(r, g)| format!("{r}:{g:.4}")).collect();
    verdict(
        "C5",
        peak > ends,
        format!("dLCR by range {}", shown.join(" ")),
    );
}

#[test]
fn c06_migration_ratio_arithmetic() {
    let cases = [
        (7200u64, 10_000u64, 3600u64, 0.2),
        (0, 10_000, 3600, 0.0),
        (36_000, 10_000, 3600, 1.0),
    ];
    let got: Vec<f64> = cases
        .iter()
        .map(|&(m, n, s, _)| migration_ratio(m, n, s))
        .collect();
    let pass = cases.iter().zip(&got).all(|(c, g)| *g == c.3);
    verdict("C6", pass, format!("{got:?}"));
}

fn forced(at: u64, entity: u64, target: u32) -> ForcedCandidacy {
    ForcedCandidacy {
        at: Timestep(at),
        entity: EntityId(entity),
        target: LpId(target),
    }
}

#[test]
fn c07_protocol_timing() {
    let mut observed = Vec::new();
    for balancer in [false, true] {
        let cfg = EngineConfig {
            n_lps: 2,
            steps: 30,
            balancer,
            band: Some(2),
            allocation: Some([0, 0, 1, 1].map(LpId).to_vec()),
            forced: vec![forced(4, 0, 1), forced(12, 3, 0)],
            ..EngineConfig::default()
        };
        let report = run_local(
            &cfg,
            ScriptedModel::new(4, Vec::new()).with_ring(1),
            Scheduler::Sequential,
        )
        .unwrap();
        observed.push(report.migration_latencies());
    }
    let plan = MigrationPlan::new(EntityId(0), LpId(0), LpId(1), Timestep(10)).unwrap();
    let mut table = RoutingTable::new(&[LpId(0)]);
    table
        .apply_notice(EntityId(0), LpId(1), plan.effective_from())
        .unwrap();
    let before = table.lookup(EntityId(0), Timestep(11)).unwrap();
    let after = table.lookup(EntityId(0), Timestep(12)).unwrap();
    let pass =
        observed[0] == [3, 3] && observed[1] == [5, 5] && before == LpId(0) && after == LpId(1);
    verdict(
        "C7",
        pass,
        format!(
            "latency off {:?} on {:?}; switch {before}->{after} at notify+2",
            observed[0], observed[1]
        ),
    );
}

/// Recomputes a candidacy from the complete send log.
struct Oracle {
    log: Vec<(u64, u32)>,
    since_eval: usize,
}

impl Oracle {
    fn decide(
        &mut self,
        p: &HeuristicParams,
        n_lps: usize,
        current: u32,
        now: u64,
        last: Option<u64>,
    ) -> Option<(u32, f64)> {
        let window: Vec<&(u64, u32)> = match p.kind {
            HeuristicKind::TimeWindow => self
                .log
                .iter()
                .filter(|(t, _)| t + u64::from(p.kappa) > now)
                .collect(),
            HeuristicKind::CountWindow => self.log.iter().rev().take(p.omega as usize).collect(),
            HeuristicKind::TriggeredCountWindow => {
                if self.since_eval < p.zeta as usize {
                    return None;
                }
                self.since_eval = 0;
                self.log.iter().rev().take(p.omega as usize).collect()
            }
        };
        let mut counts = vec![0u32; n_lps];
        for (_, lp) in window {
            counts[*lp as usize] += 1;
        }
        let mut best: Option<(u32, u32)> = None;
        for lp in 0..n_lps as u32 {
            let c = counts[lp as usize];
            if lp != current && c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((lp, c));
            }
        }
        let (target, external) = best?;
        let local = counts[current as usize];
        let alpha = if local == 0 {
            f64::INFINITY
        } else {
            f64::from(external) / f64::from(local)
        };
        let rested = last.is_none_or(|l| now - l >= p.mt);
        (alpha > p.mf && rested).then_some((target, alpha))
    }
}

#[test]
fn c08_heuristic_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut evaluations = 0;
    let mut fired = 0;
    for _trace in 0..100 {
        let n_lps = rng.gen_range(2..7usize);
        let steps = rng.gen_range(30..150u64);
        let sends: Vec<Vec<u32>> = (0..steps)
            .map(|_| {
                let k = rng.gen_range(0..5);
                (0..k).map(|_| rng.gen_range(0..n_lps as u32)).collect()
            })
            .collect();
        let base = HeuristicParams {
            kind: HeuristicKind::TimeWindow,
            mf: rng.gen_range(1.0..3.0),
            mt: rng.gen_range(0..10),
            kappa: rng.gen_range(1..16),
            omega: rng.gen_range(1..32),
            zeta: rng.gen_range(1..8),
        };
        for kind in [
            HeuristicKind::TimeWindow,
            HeuristicKind::CountWindow,
            HeuristicKind::TriggeredCountWindow,
        ] {
            let p = HeuristicParams { kind, ..base };
            let mut window = HeuristicWindow::new(n_lps);
            let mut oracle = Oracle {
                log: Vec::new(),
                since_eval: 0,
            };
            let mut current = 0u32;
            let mut last: Option<u64> = None;
            for (now, batch) in sends.iter().enumerate() {
                let now = now as u64;
                for &lp in batch {
                    window.record_sent(&p, LpId(lp), Timestep(now));
                    oracle.log.push((now, lp));
                    oracle.since_eval += 1;
                }
                let inc = evaluate(
                    &mut window,
                    &p,
                    EntityId(0),
                    LpId(current),
                    Timestep(now),
                    last.map(Timestep),
                )
                .map(|c| (c.target.0, c.alpha));
                let brute = oracle.decide(&p, n_lps, current, now, last);
                evaluations += 1;
                if inc != brute {
                    mismatches += 1;
                }
                if let Some((target, _)) = brute {
                    fired += 1;
                    current = target;
                    last = Some(now);
                }
            }
        }
    }
    verdict(
        "C8",
        mismatches == 0,
        format!("{evaluations} evaluations over 100 traces x 3 heuristics, {fired} candidacies, {mismatches} mismatches"),
    );
}

#[test]
fn c09_balancer_population_bound() {
    let mut worst = Vec::new();
    let mut ok = true;
    for (lps, speed, mf) in [(4usize, 29.0, 1.1), (16, 11.0, 1.2), (4, 1.0, 1.2)] {
        let mut cfg = clustering(scenario(2000, 600, lps), mf);
        cfg.heuristic.mt = 2;
        cfg.speed = speed;
        cfg.runs = 2;
        let band = default_band(cfg.ses, lps);
        for r in reports(&cfg) {
            let drift = r.max_population_drift();
            ok &= drift <= band + 1 && r.migrations() > 0;
            worst.push((lps, drift, band));
        }
    }
    verdict("C9", ok, format!("(lps, max drift, band): {worst:?}"));
}

#[test]
fn c10_modeled_cost_sign_structure() {
    let weights = CostWeights::default();
    let case = |interaction_size: usize, migration_size: usize, pi: f64| {
        let mut t = clustering(scenario(500, 500, 4), 1.5);
        t.interaction_size = interaction_size;
        t.migration_size = migration_size;
        t.pi = pi;
        t.runs = 3;
        let mut spec = SweepSpec::new(t).axis(Axis::Mf, &[1.1, 1.5, 2.0]);
        spec.delta = true;
        spec.weights = weights;
        let best = best_mf(&run_sweep(&spec).unwrap()).remove(0);
        (best.mf, best.tec_mean, best.baseline_tec_mean.unwrap())
    };
    let (bmf, bon, boff) = case(1024, 32, 0.5);
    let (wmf, won, woff) = case(1, 81920, 0.2);
    verdict(
        "C10",
        bon < boff && won > woff,
        format!(
            "best case mf {bmf}: TEC on {bon:.3} off {boff:.3}; worst case mf {wmf}: TEC on {won:.3} off {woff:.3}"
        ),
    );
}

const BIN: &str = env!("CARGO_BIN_EXE_selfcluster");

fn counters(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with("run="))
        .expect("run line")
        .to_string();
    line.split_whitespace()
        .filter(|w| {
            ["lcc=", "rcc=", "migrations=", "digest="]
                .iter()
                .any(|k| w.starts_with(k))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn c11_transport_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let ports: Vec<u16> = {
        let ls: Vec<TcpListener> = (0..2)
            .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
            .collect();
        ls.iter().map(|l| l.local_addr().unwrap().port()).collect()
    };
    let roster = dir.path().join("roster.txt");
    std::fs::write(
        &roster,
        format!("0 127.0.0.1 {}\n1 127.0.0.1 {}\n", ports[0], ports[1]),
    )
    .unwrap();
    let common = [
        "--ses",
        "400",
        "--steps",
        "200",
        "--area-side",
        "2000",
        "--lps",
        "2",
        "--gaia",
        "on",
        "--mf",
        "1.2",
        "--seed",
        "9",
        "--trace-digest",
    ];
    let local = Command::new(BIN)
        .args(common)
        .args(["--transport", "local"])
        .output()
        .unwrap();
    let spawn = |lp: &str| {
        Command::new(BIN)
            .args(common)
            .args([
                "--transport",
                "tcp",
                "--roster",
                roster.to_str().unwrap(),
                "--lp-id",
                lp,
            ])
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::piped())
            .spawn()
            .unwrap()
    };
    let (p0, p1) = (spawn("0"), spawn("1"));
    let (o0, o1) = (
        p0.wait_with_output().unwrap(),
        p1.wait_with_output().unwrap(),
    );
    let (l, t0, t1) = (counters(&local), counters(&o0), counters(&o1));
    verdict(
        "C11",
        l == t0 && l == t1,
        format!("local [{l}] tcp lp0 [{t0}] lp1 [{t1}]"),
    );
}

//! One logical process and its per-step phases.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::sync::Arc;
use std::time::Instant;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balancer::{self, BalancerState, CandidateSummary, GrantDecision, GrantMatrix};
use crate::domain::{
    EntityId, EntityRecord, EntityStatus, InteractionEvent, LpId, StateBlob, Timestep, STATE_WORDS,
};
use crate::engine::report::{fnv_u64s, DigestRecord, LpReport, MigrationRecord};
use crate::engine::EngineConfig;
use crate::error::{Result, SimError};
use crate::heuristics::{self, Candidacy};
use crate::migration::{self, MigrationEnvelope, MigrationPlan, GRANT_TO_NOTIFY};
use crate::model::{Emission, Model};
use crate::routing::RoutingTable;
use crate::transport::codec::{self, Message, Notice, NoticeKind};
use crate::transport::Transport;

/// Messages of one step, split by the phase that consumes them.
#[derive(Default)]
struct Received {
    envelopes: Vec<MigrationEnvelope>,
    notices: Vec<Notice>,
    summaries: Vec<CandidateSummary>,
    grants: Vec<GrantDecision>,
    interactions: Vec<InteractionEvent>,
}

pub struct Lp<M: Model, T: Transport> {
    id: LpId,
    n_lps: usize,
    cfg: Arc<EngineConfig>,
    model: M,
    transport: T,
    routing: RoutingTable,
    /// Indexed by entity id; `Some` for owned entities.
    entities: Vec<Option<EntityRecord>>,
    owned: usize,
    /// Events stored at origin, keyed by delivery step.
    outbox: BTreeMap<Timestep, Vec<InteractionEvent>>,
    /// Local deliveries for the next step.
    next_local: Vec<InteractionEvent>,
    /// Arrivals announced by internal notices, with their activation step.
    expected: HashMap<EntityId, Timestep>,
    outgoing: Vec<Vec<Message>>,
    balancer: Option<BalancerState>,
    own_summary: Option<CandidateSummary>,
    last_round: Option<GrantMatrix>,
    exit_rng: ChaCha8Rng,
    emissions: Vec<Emission>,
    report: LpReport,
}

impl<M: Model, T: Transport> Lp<M, T> {
    pub fn new(cfg: Arc<EngineConfig>, allocation: &[LpId], model: M, transport: T) -> Lp<M, T> {
        let id = transport.lp();
        let n_lps = cfg.n_lps;
        let pad = model.migration_pad();
        let entities: Vec<Option<EntityRecord>> = allocation
            .iter()
            .enumerate()
            .map(|(i, &owner)| {
                let e = EntityId(i as u64);
                (owner == id).then(|| {
                    EntityRecord::new(e, StateBlob::new(e, pad), model.initial_state(e), n_lps)
                })
            })
            .collect();
        let owned = entities.iter().filter(|e| e.is_some()).count();
        let balancer = cfg.balancer_active().then(|| {
            let mut initial = vec![0u32; n_lps];
            for lp in allocation {
                initial[lp.index()] += 1;
            }
            let band = cfg
                .band
                .unwrap_or_else(|| balancer::default_band(allocation.len(), n_lps));
            BalancerState::new(&initial, band)
        });
        Lp {
            id,
            n_lps,
            routing: RoutingTable::new(allocation),
            entities,
            owned,
            outbox: BTreeMap::new(),
            next_local: Vec::new(),
            expected: HashMap::new(),
            outgoing: vec![Vec::new(); n_lps],
            balancer,
            own_summary: None,
            last_round: None,
            exit_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(id.0) << 40) ^ 0x5EED),
            emissions: Vec::new(),
            report: LpReport {
                lp: id,
                frame_digest: fnv_u64s([]),
                ..Default::default()
            },
            cfg,
            model,
            transport,
        }
    }

    pub fn id(&self) -> LpId {
        self.id
    }

    pub fn owned(&self) -> usize {
        self.owned
    }

    pub fn run(mut self) -> Result<LpReport> {
        for t in 0..self.cfg.steps {
            self.step(Timestep(t))?;
        }
        Ok(self.finish())
    }

    /// Runs all steps and then trades reports with the other participants.
    pub fn run_and_gather(mut self) -> Result<Vec<LpReport>> {
        for t in 0..self.cfg.steps {
            self.step(Timestep(t))?;
        }
        // The last step's batches are still queued; consuming them checks
        // every peer's final barrier and clears the way for the reports.
        if self.cfg.steps > 0 {
            self.transport.recv_step(Timestep(self.cfg.steps))?;
        }
        let report = std::mem::take(&mut self.report);
        Ok(self.transport.exchange_reports(report)?)
    }

    pub fn finish(self) -> LpReport {
        self.report
    }

    fn entity_mut(&mut self, e: EntityId) -> Option<&mut EntityRecord> {
        self.entities.get_mut(e.index()).and_then(Option::as_mut)
    }

    fn protocol(&self, detail: String) -> SimError {
        SimError::Protocol {
            lp: self.id,
            detail,
        }
    }

    pub fn step(&mut self, now: Timestep) -> Result<()> {
        let step_start = Instant::now();

        let wait = Instant::now();
        let msgs = self.transport.recv_step(now)?;
        self.report.ledger.barrier_wait += wait.elapsed();
        if self.cfg.trace_digest {
            self.fold_frames(now, &msgs);
        }
        let received = self.sort_received(msgs);

        let t = Instant::now();
        self.instantiate_arrivals(now, received.envelopes)?;
        self.report.ledger.mig_cpu_time += t.elapsed();
        self.report.populations.push(self.owned as u32);

        self.ingest_notices(now, received.notices)?;

        if self.balancer.is_some() {
            self.apply_grants(now, &received.grants)?;
            self.plan_grants(received.summaries);
        }

        let t = Instant::now();
        self.deliver_due(now, received.interactions)?;
        self.act_all(now)?;
        self.report.ledger.handler_time += t.elapsed();

        let t = Instant::now();
        self.evaluate_heuristics(now);
        self.report.ledger.heu_time += t.elapsed();

        let t = Instant::now();
        self.migrate(now)?;
        self.report.ledger.mig_cpu_time += t.elapsed();

        self.transmit(now)?;
        if let Some(stall) = self.cfg.stall {
            if stall.lp == self.id && stall.at == now {
                std::thread::sleep(stall.pause);
            }
        }
        self.transport.send_step(now, &mut self.outgoing)?;
        self.report.ledger.step_time += step_start.elapsed();
        Ok(())
    }

    /// Folds the frames received for this step, barriers included, into the
    /// running frame digest. Frames are sorted so the result does not
    /// depend on arrival order.
    fn fold_frames(&mut self, now: Timestep, msgs: &[Message]) {
        let Some(prev) = now.minus(1) else { return };
        let mut frames: Vec<Vec<u8>> = msgs.iter().map(codec::encode_to_vec).collect();
        for peer in (0..self.n_lps as u32).map(LpId).filter(|&p| p != self.id) {
            frames.push(codec::encode_to_vec(&Message::Barrier {
                lp: peer,
                timestep: prev,
            }));
        }
        frames.sort_unstable();
        let mut h = FnvHasher::with_key(self.report.frame_digest);
        for f in &frames {
            h.write(f);
        }
        self.report.frame_digest = h.finish();
    }

    fn sort_received(&self, msgs: Vec<Message>) -> Received {
        let mut r = Received::default();
        for m in msgs {
            match m {
                Message::Interaction(ev) => r.interactions.push(ev),
                Message::Notice(n) => r.notices.push(n),
                Message::Envelope(env) => r.envelopes.push(env),
                Message::Candidates(s) => r.summaries.push(s),
                Message::Grant(g) => r.grants.push(g),
                Message::Barrier { .. } | Message::Report(_) => {}
            }
        }
        r
    }

    fn instantiate_arrivals(
        &mut self,
        now: Timestep,
        envelopes: Vec<MigrationEnvelope>,
    ) -> Result<()> {
        for env in envelopes {
            let e = env.entity;
            if self.expected.remove(&e) != Some(now) {
                return Err(self.protocol(format!("unannounced arrival of {e} at {now}")));
            }
            if self.entities.get(e.index()).is_none_or(Option::is_some) {
                return Err(SimError::DuplicateArrival {
                    lp: self.id,
                    entity: e,
                });
            }
            let rec = migration::instantiate_arrival(env, self.n_lps, now, self.id)?;
            self.entities[e.index()] = Some(rec);
            self.owned += 1;
            self.report.arrivals.push((e, now));
        }
        Ok(())
    }

    fn ingest_notices(&mut self, now: Timestep, notices: Vec<Notice>) -> Result<()> {
        for n in notices {
            if n.effective_from != now.plus(1) {
                return Err(self.protocol(format!(
                    "notice for {} effective {} received at {now}",
                    n.entity, n.effective_from
                )));
            }
            self.routing
                .apply_notice(n.entity, n.to_lp, n.effective_from)?;
            if n.kind == NoticeKind::Internal {
                if n.to_lp != self.id {
                    return Err(self.protocol(format!(
                        "internal notice for {} addressed to {}",
                        n.entity, n.to_lp
                    )));
                }
                self.expected.insert(n.entity, n.effective_from);
            }
        }
        Ok(())
    }

    /// Resolves the candidacies this LP raised two steps ago.
    fn apply_grants(&mut self, now: Timestep, grants: &[GrantDecision]) -> Result<()> {
        let Some(fired) = now.minus(2) else {
            return Ok(());
        };
        let mut by_target: BTreeMap<LpId, Vec<(EntityId, f64)>> = BTreeMap::new();
        for rec in self.entities.iter().flatten() {
            if let EntityStatus::Candidate {
                target,
                alpha,
                fired: f,
            } = rec.status
            {
                if f == fired {
                    by_target.entry(target).or_default().push((rec.id, alpha));
                }
            }
        }
        for (target, cands) in by_target {
            let granted = grants
                .iter()
                .find(|g| g.dest == target && g.source == self.id)
                .map_or(0, |g| g.granted);
            debug_assert_eq!(
                self.last_round
                    .as_ref()
                    .map(|m| m[self.id.index()][target.index()]),
                Some(granted),
                "grant differs from the replicated computation"
            );
            if granted as usize > cands.len() {
                return Err(self.protocol(format!(
                    "{target} granted {granted} of {} requests",
                    cands.len()
                )));
            }
            let (winners, losers) = balancer::select_granted(cands, granted);
            let notify_ts = now.plus(GRANT_TO_NOTIFY);
            for e in winners {
                let rec = self.entity_mut(e).expect("candidate is owned");
                rec.status = EntityStatus::Granted {
                    dest: target,
                    notify_ts,
                    fired,
                };
            }
            for e in losers {
                self.entity_mut(e).expect("candidate is owned").status = EntityStatus::Stable;
            }
        }
        Ok(())
    }

    /// Computes the grant matrix for last step's summaries and queues this
    /// LP's column as LB_GRANT messages.
    fn plan_grants(&mut self, mut summaries: Vec<CandidateSummary>) {
        let Some(own) = self.own_summary.take() else {
            return;
        };
        summaries.push(own);
        summaries.sort_by_key(|s| s.source);
        let state = self.balancer.as_mut().expect("balancer active");
        let matrix = state.plan_round(&summaries);
        for g in balancer::grants_for(self.id, &summaries, &matrix) {
            self.outgoing[g.source.index()].push(Message::Grant(g));
        }
        self.last_round = Some(matrix);
    }

    fn deliver_due(&mut self, now: Timestep, received: Vec<InteractionEvent>) -> Result<()> {
        let mut due = std::mem::take(&mut self.next_local);
        for ev in received {
            if ev.deliver_ts == now {
                due.push(ev);
            } else if ev.deliver_ts > now {
                // handed over by an exiting LP
                self.outbox.entry(ev.deliver_ts).or_default().push(ev);
            } else {
                return Err(self.protocol(format!(
                    "event from {} due at {} received at {now}",
                    ev.sender, ev.deliver_ts
                )));
            }
        }
        due.sort_unstable_by_key(InteractionEvent::delivery_key);
        let trace = self.cfg.trace_digest;
        for ev in &due {
            let lp = self.id;
            let Some(rec) = self
                .entities
                .get_mut(ev.dest.index())
                .and_then(Option::as_mut)
            else {
                return Err(SimError::Causality {
                    lp,
                    entity: ev.dest,
                    at: now,
                });
            };
            self.model.deliver(rec, ev, now);
            if trace {
                rec.step_digest = fnv_u64s([
                    rec.step_digest,
                    ev.sender.0,
                    ev.dest.0,
                    ev.send_ts.0,
                    ev.deliver_ts.0,
                    ev.seq,
                    ev.payload.len() as u64,
                ]);
            }
        }
        self.report.ledger.events_delivered += due.len() as u64;
        Ok(())
    }

    /// Movement and emission for every owned entity, ascending.
    fn act_all(&mut self, now: Timestep) -> Result<()> {
        self.model.begin_step(now);
        let payload = self.model.payload();
        let params = self.cfg.heuristic;
        let account = self.cfg.gaia;
        for slot in self.entities.iter_mut() {
            let Some(rec) = slot.as_mut() else { continue };
            self.emissions.clear();
            self.model.act(rec, now, &mut self.emissions);
            for em in &self.emissions {
                let deliver_ts = now.plus(em.delay.max(1));
                let ev = InteractionEvent {
                    sender: rec.id,
                    dest: em.dest,
                    send_ts: now,
                    deliver_ts,
                    seq: rec.state.take_seq(),
                    payload: payload.clone(),
                };
                if account {
                    let dest_lp = self.routing.lookup(em.dest, deliver_ts)?;
                    rec.window.record_sent(&params, dest_lp, now);
                }
                self.outbox.entry(deliver_ts).or_default().push(ev);
            }
            self.report.ledger.events_sent += self.emissions.len() as u64;
            if self.cfg.trace_digest {
                let mut words = [0u64; STATE_WORDS + 4 + 3];
                words[0] = now.0;
                words[1] = rec.id.0;
                words[2] = rec.step_digest;
                for i in 0..STATE_WORDS {
                    words[3 + i] = rec.state.word(i);
                }
                for (i, v) in rec.model_state.0.iter().enumerate() {
                    words[3 + STATE_WORDS + i] = v.to_bits();
                }
                self.report.digest.push(DigestRecord {
                    ts: now,
                    entity: rec.id,
                    hash: fnv_u64s(words),
                });
                rec.step_digest = 0;
            }
        }
        Ok(())
    }

    fn evaluate_heuristics(&mut self, now: Timestep) {
        let params = self.cfg.heuristic;
        let mut raised: Vec<Candidacy> = Vec::new();
        let mut forced = self.cfg.forced.iter().filter(|f| f.at == now).peekable();
        if !self.cfg.gaia && forced.peek().is_none() && self.balancer.is_none() {
            return;
        }
        let forced: HashMap<EntityId, LpId> = forced.map(|f| (f.entity, f.target)).collect();
        for rec in self.entities.iter_mut().flatten() {
            if !rec.is_stable() {
                continue;
            }
            let cand = match forced.get(&rec.id) {
                Some(&target) if target != self.id => Some(Candidacy {
                    entity: rec.id,
                    target,
                    alpha: f64::INFINITY,
                }),
                Some(_) => None,
                None if self.cfg.gaia => heuristics::evaluate(
                    &mut rec.window,
                    &params,
                    rec.id,
                    self.id,
                    now,
                    rec.last_migration_ts,
                ),
                None => None,
            };
            let Some(c) = cand else { continue };
            rec.status = if self.balancer.is_some() {
                EntityStatus::Candidate {
                    target: c.target,
                    alpha: c.alpha,
                    fired: now,
                }
            } else {
                EntityStatus::Granted {
                    dest: c.target,
                    notify_ts: now.plus(GRANT_TO_NOTIFY),
                    fired: now,
                }
            };
            raised.push(c);
        }
        if self.balancer.is_some() {
            let summary = balancer::summarize(self.id, &raised);
            for (j, out) in self.outgoing.iter_mut().enumerate() {
                if j != self.id.index() {
                    out.push(Message::Candidates(summary.clone()));
                }
            }
            self.own_summary = Some(summary);
        }
    }

    /// Emits notices for entities whose notify step is now and ships the
    /// entities notified last step.
    fn migrate(&mut self, now: Timestep) -> Result<()> {
        let prev = now.minus(1);
        for i in 0..self.entities.len() {
            let Some(rec) = self.entities[i].as_ref() else {
                continue;
            };
            let EntityStatus::Granted {
                dest,
                notify_ts,
                fired,
            } = rec.status
            else {
                continue;
            };
            if notify_ts == now {
                let plan = MigrationPlan::new(rec.id, self.id, dest, notify_ts)?;
                for (to, notice) in migration::emit_notices(&plan, self.n_lps) {
                    self.outgoing[to.index()].push(Message::Notice(notice));
                }
                self.routing
                    .apply_notice(plan.entity, dest, plan.effective_from())?;
            } else if Some(notify_ts) == prev {
                let mut rec = self.entities[i].take().expect("checked above");
                self.owned -= 1;
                rec.status = EntityStatus::InFlight;
                let env = migration::serialize_departure(rec);
                self.report.ledger.mig_count += 1;
                self.report.ledger.mig_bytes += codec::envelope_body_len(&env) as u64;
                self.report.migrations.push(MigrationRecord {
                    entity: env.entity,
                    source: self.id,
                    dest,
                    fired,
                    notify_ts,
                });
                self.outgoing[dest.index()].push(Message::Envelope(env));
            }
        }
        Ok(())
    }

    fn transmit(&mut self, now: Timestep) -> Result<()> {
        let next = now.plus(1);
        // Events due after the last step are never delivered nor counted.
        let due = (next.get() < self.cfg.steps)
            .then(|| self.outbox.remove(&next))
            .flatten();
        if let Some(events) = due {
            for ev in events {
                let dest_lp = self.routing.lookup(ev.dest, next)?;
                let bytes = if self.cfg.payload_delivery {
                    codec::interaction_body_len(&ev) as u64
                } else {
                    0
                };
                self.report
                    .ledger
                    .record_interaction(self.id, dest_lp, bytes);
                if !self.cfg.payload_delivery {
                    continue;
                }
                if dest_lp == self.id {
                    self.next_local.push(ev);
                } else {
                    self.outgoing[dest_lp.index()].push(Message::Interaction(ev));
                }
            }
        }
        if self.cfg.dynamic_exit
            && self.owned == 0
            && self.expected.is_empty()
            && !self.outbox.is_empty()
        {
            self.hand_over_outbox()?;
        }
        Ok(())
    }

    /// Passes every stored event to a random LP that still owns entities.
    fn hand_over_outbox(&mut self) -> Result<()> {
        let populations = self.routing.final_populations(self.n_lps);
        let remaining: Vec<LpId> = (0..self.n_lps as u32)
            .map(LpId)
            .filter(|&lp| lp != self.id && populations[lp.index()] > 0)
            .collect();
        let heir = migration::choose_handover(&remaining, self.id, &mut self.exit_rng)?;
        let stored = std::mem::take(&mut self.outbox);
        for ev in stored.into_values().flatten() {
            self.outgoing[heir.index()].push(Message::Interaction(ev));
        }
        Ok(())
    }
}

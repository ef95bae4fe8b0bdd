//! Bit-exact wire codec.
//!
//! ```text
//! +----------------+-----------+------------------------+
//! | body length    | msg type  | body                   |
//! | u32 LE         | u8        | type-specific          |
//! +----------------+-----------+------------------------+
//! ```
//!
//! All integers are little-endian and fixed width; byte blobs and lists are
//! prefixed with a `u32` count. Body layouts:
//!
//! | tag | type              | body                                                        |
//! |-----|-------------------|-------------------------------------------------------------|
//! | 1   | INTERACTION       | sender u64, dest u64, send_ts u64, deliver_ts u64, seq u64, payload_len u32, payload |
//! | 2   | NOTICE_INTERNAL   | entity u64, from_lp u32, to_lp u32, effective_from u64      |
//! | 3   | NOTICE_EXTERNAL   | same as 2                                                   |
//! | 4   | MIGRATION_ENVELOPE| entity u64, state_len u32, state, x f64, y f64, wx f64, wy f64, last_migration_ts u64, sent_since_eval u32, n u32, n × (ts u64, lp u32, count u32) |
//! | 5   | LB_CANDIDATES     | source u32, n u32, n × (dest u32, count u32)                |
//! | 6   | LB_GRANT          | dest u32, source u32, granted u32                           |
//! | 7   | BARRIER           | lp u32, timestep u64                                        |
//! | 8   | RUN_REPORT        | end-of-run ledger and trace records, see [`LpReport`]       |
//!
//! A missing `last_migration_ts` is written as `u64::MAX`.

use bytes::{Buf, BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::balancer::{CandidateSummary, GrantDecision};
use crate::domain::{EntityId, InteractionEvent, LpId, ModelState, StateBlob, Timestep};
use crate::engine::report::{DigestRecord, LpReport, MigrationRecord};
use crate::heuristics::WindowEntry;
use crate::metrics::MetricsLedger;
use crate::migration::MigrationEnvelope;

pub const HEADER_LEN: usize = 5;
pub const MAX_BODY_LEN: u32 = 1 << 30;

pub const TAG_INTERACTION: u8 = 1;
pub const TAG_NOTICE_INTERNAL: u8 = 2;
pub const TAG_NOTICE_EXTERNAL: u8 = 3;
pub const TAG_ENVELOPE: u8 = 4;
pub const TAG_LB_CANDIDATES: u8 = 5;
pub const TAG_LB_GRANT: u8 = 6;
pub const TAG_BARRIER: u8 = 7;
pub const TAG_REPORT: u8 = 8;

/// Fixed part of an INTERACTION body.
pub const INTERACTION_FIXED: usize = 5 * 8 + 4;
/// Fixed part of a MIGRATION_ENVELOPE body, excluding state and window entries.
pub const ENVELOPE_FIXED: usize = 8 + 4 + 4 * 8 + 8 + 4 + 4;
const WINDOW_ENTRY_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown message type {0}")]
    UnknownTag(u8),
    #[error("truncated {0} body")]
    Truncated(&'static str),
    #[error("{extra} trailing bytes after {what} body")]
    Trailing { what: &'static str, extra: usize },
    #[error("body of {0} bytes exceeds the frame limit")]
    Oversize(u32),
    #[error("state blob shorter than the fixed model words")]
    ShortState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoticeKind {
    /// Sent to the destination so it can expect the envelope.
    Internal,
    /// Sent to every other LP so they reroute.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Notice {
    pub kind: NoticeKind,
    pub entity: EntityId,
    pub from_lp: LpId,
    pub to_lp: LpId,
    pub effective_from: Timestep,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Interaction(InteractionEvent),
    Notice(Notice),
    Envelope(MigrationEnvelope),
    Candidates(CandidateSummary),
    Grant(GrantDecision),
    Barrier { lp: LpId, timestep: Timestep },
    Report(Box<LpReport>),
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Interaction(_) => TAG_INTERACTION,
            Message::Notice(n) => match n.kind {
                NoticeKind::Internal => TAG_NOTICE_INTERNAL,
                NoticeKind::External => TAG_NOTICE_EXTERNAL,
            },
            Message::Envelope(_) => TAG_ENVELOPE,
            Message::Candidates(_) => TAG_LB_CANDIDATES,
            Message::Grant(_) => TAG_LB_GRANT,
            Message::Barrier { .. } => TAG_BARRIER,
            Message::Report(_) => TAG_REPORT,
        }
    }
}

pub fn interaction_body_len(ev: &InteractionEvent) -> usize {
    INTERACTION_FIXED + ev.payload.len()
}

pub fn envelope_body_len(env: &MigrationEnvelope) -> usize {
    ENVELOPE_FIXED + env.state.len() + WINDOW_ENTRY_LEN * env.window.len()
}

/// Appends one complete frame (header and body) to `out`.
pub fn encode_frame(msg: &Message, out: &mut BytesMut) {
    let start = out.len();
    out.put_u32_le(0);
    out.put_u8(msg.tag());
    encode_body(msg, out);
    let body_len = (out.len() - start - HEADER_LEN) as u32;
    out[start..start + 4].copy_from_slice(&body_len.to_le_bytes());
}

pub fn encode_to_vec(msg: &Message) -> Vec<u8> {
    let mut out = BytesMut::new();
    encode_frame(msg, &mut out);
    out.to_vec()
}

fn put_opt_ts(out: &mut BytesMut, ts: Option<Timestep>) {
    out.put_u64_le(ts.map_or(u64::MAX, Timestep::get));
}

fn encode_body(msg: &Message, out: &mut BytesMut) {
    match msg {
        Message::Interaction(ev) => {
            out.put_u64_le(ev.sender.0);
            out.put_u64_le(ev.dest.0);
            out.put_u64_le(ev.send_ts.0);
            out.put_u64_le(ev.deliver_ts.0);
            out.put_u64_le(ev.seq);
            out.put_u32_le(ev.payload.len() as u32);
            out.put_slice(&ev.payload);
        }
        Message::Notice(n) => {
            out.put_u64_le(n.entity.0);
            out.put_u32_le(n.from_lp.0);
            out.put_u32_le(n.to_lp.0);
            out.put_u64_le(n.effective_from.0);
        }
        Message::Envelope(env) => {
            out.put_u64_le(env.entity.0);
            out.put_u32_le(env.state.len() as u32);
            out.put_slice(env.state.as_bytes());
            for v in env.model_state.0 {
                out.put_f64_le(v);
            }
            put_opt_ts(out, env.last_migration_ts);
            out.put_u32_le(env.sent_since_eval);
            out.put_u32_le(env.window.len() as u32);
            for e in &env.window {
                out.put_u64_le(e.ts.0);
                out.put_u32_le(e.lp.0);
                out.put_u32_le(e.count);
            }
        }
        Message::Candidates(s) => {
            out.put_u32_le(s.source.0);
            out.put_u32_le(s.counts.len() as u32);
            for (dest, count) in &s.counts {
                out.put_u32_le(dest.0);
                out.put_u32_le(*count);
            }
        }
        Message::Grant(g) => {
            out.put_u32_le(g.dest.0);
            out.put_u32_le(g.source.0);
            out.put_u32_le(g.granted);
        }
        Message::Barrier { lp, timestep } => {
            out.put_u32_le(lp.0);
            out.put_u64_le(timestep.0);
        }
        Message::Report(r) => encode_report(r, out),
    }
}

fn encode_report(r: &LpReport, out: &mut BytesMut) {
    out.put_u32_le(r.lp.0);
    let l = &r.ledger;
    for v in [
        l.lcc_count,
        l.rcc_count,
        l.lcc_bytes,
        l.rcc_bytes,
        l.mig_count,
        l.mig_bytes,
        l.events_sent,
        l.events_delivered,
    ] {
        out.put_u64_le(v);
    }
    for d in [
        l.handler_time,
        l.barrier_wait,
        l.heu_time,
        l.mig_cpu_time,
        l.step_time,
    ] {
        out.put_u64_le(d.as_nanos() as u64);
    }
    out.put_u64_le(r.frame_digest);
    out.put_u32_le(r.digest.len() as u32);
    for d in &r.digest {
        out.put_u64_le(d.ts.0);
        out.put_u64_le(d.entity.0);
        out.put_u64_le(d.hash);
    }
    out.put_u32_le(r.populations.len() as u32);
    for p in &r.populations {
        out.put_u32_le(*p);
    }
    out.put_u32_le(r.migrations.len() as u32);
    for m in &r.migrations {
        out.put_u64_le(m.entity.0);
        out.put_u32_le(m.source.0);
        out.put_u32_le(m.dest.0);
        out.put_u64_le(m.fired.0);
        out.put_u64_le(m.notify_ts.0);
    }
    out.put_u32_le(r.arrivals.len() as u32);
    for (e, t) in &r.arrivals {
        out.put_u64_le(e.0);
        out.put_u64_le(t.0);
    }
}

/// Reads a 5-byte header into `(body_len, tag)`.
pub fn decode_header(header: [u8; HEADER_LEN]) -> Result<(u32, u8), CodecError> {
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes"));
    if len > MAX_BODY_LEN {
        return Err(CodecError::Oversize(len));
    }
    Ok((len, header[4]))
}

/// Decodes one complete frame from the front of `buf`, advancing it.
pub fn decode_frame(buf: &mut Bytes) -> Result<Message, CodecError> {
    if buf.len() < HEADER_LEN {
        return Err(CodecError::Truncated("frame header"));
    }
    let mut header = [0u8; HEADER_LEN];
    buf.copy_to_slice(&mut header);
    let (len, tag) = decode_header(header)?;
    if buf.len() < len as usize {
        return Err(CodecError::Truncated("frame"));
    }
    let body = buf.split_to(len as usize);
    decode_body(tag, body)
}

struct Reader {
    buf: Bytes,
    what: &'static str,
}

impl Reader {
    fn need(&self, n: usize) -> Result<(), CodecError> {
        if self.buf.remaining() < n {
            Err(CodecError::Truncated(self.what))
        } else {
            Ok(())
        }
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        self.need(4)?;
        Ok(self.buf.get_u32_le())
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        self.need(8)?;
        Ok(self.buf.get_u64_le())
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        self.need(8)?;
        Ok(self.buf.get_f64_le())
    }
    fn bytes(&mut self, n: usize) -> Result<Bytes, CodecError> {
        self.need(n)?;
        Ok(self.buf.split_to(n))
    }
    /// Reads a `u32` list length, rejecting counts that cannot fit.
    fn count(&mut self, item_len: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        self.need(n.saturating_mul(item_len))?;
        Ok(n)
    }
    fn finish(self) -> Result<(), CodecError> {
        if self.buf.has_remaining() {
            Err(CodecError::Trailing {
                what: self.what,
                extra: self.buf.remaining(),
            })
        } else {
            Ok(())
        }
    }
}

pub fn decode_body(tag: u8, body: Bytes) -> Result<Message, CodecError> {
    let what = match tag {
        TAG_INTERACTION => "INTERACTION",
        TAG_NOTICE_INTERNAL => "NOTICE_INTERNAL",
        TAG_NOTICE_EXTERNAL => "NOTICE_EXTERNAL",
        TAG_ENVELOPE => "MIGRATION_ENVELOPE",
        TAG_LB_CANDIDATES => "LB_CANDIDATES",
        TAG_LB_GRANT => "LB_GRANT",
        TAG_BARRIER => "BARRIER",
        TAG_REPORT => "RUN_REPORT",
        other => return Err(CodecError::UnknownTag(other)),
    };
    let mut r = Reader { buf: body, what };
    let msg = match tag {
        TAG_INTERACTION => {
            let sender = EntityId(r.u64()?);
            let dest = EntityId(r.u64()?);
            let send_ts = Timestep(r.u64()?);
            let deliver_ts = Timestep(r.u64()?);
            let seq = r.u64()?;
            let len = r.u32()? as usize;
            let payload = r.bytes(len)?;
            Message::Interaction(InteractionEvent {
                sender,
                dest,
                send_ts,
                deliver_ts,
                seq,
                payload,
            })
        }
        TAG_NOTICE_INTERNAL | TAG_NOTICE_EXTERNAL => Message::Notice(Notice {
            kind: if tag == TAG_NOTICE_INTERNAL {
                NoticeKind::Internal
            } else {
                NoticeKind::External
            },
            entity: EntityId(r.u64()?),
            from_lp: LpId(r.u32()?),
            to_lp: LpId(r.u32()?),
            effective_from: Timestep(r.u64()?),
        }),
        TAG_ENVELOPE => {
            let entity = EntityId(r.u64()?);
            let state_len = r.u32()? as usize;
            let state = StateBlob::from_bytes(r.bytes(state_len)?.to_vec())
                .ok_or(CodecError::ShortState)?;
            let mut ms = [0.0; 4];
            for v in &mut ms {
                *v = r.f64()?;
            }
            let last = r.u64()?;
            let sent_since_eval = r.u32()?;
            let n = r.count(WINDOW_ENTRY_LEN)?;
            let mut window = Vec::with_capacity(n);
            for _ in 0..n {
                window.push(WindowEntry {
                    ts: Timestep(r.u64()?),
                    lp: LpId(r.u32()?),
                    count: r.u32()?,
                });
            }
            Message::Envelope(MigrationEnvelope {
                entity,
                state,
                model_state: ModelState(ms),
                last_migration_ts: (last != u64::MAX).then_some(Timestep(last)),
                sent_since_eval,
                window,
            })
        }
        TAG_LB_CANDIDATES => {
            let source = LpId(r.u32()?);
            let n = r.count(8)?;
            let mut counts = Vec::with_capacity(n);
            for _ in 0..n {
                counts.push((LpId(r.u32()?), r.u32()?));
            }
            Message::Candidates(CandidateSummary { source, counts })
        }
        TAG_LB_GRANT => Message::Grant(GrantDecision {
            dest: LpId(r.u32()?),
            source: LpId(r.u32()?),
            granted: r.u32()?,
        }),
        TAG_BARRIER => Message::Barrier {
            lp: LpId(r.u32()?),
            timestep: Timestep(r.u64()?),
        },
        TAG_REPORT => Message::Report(Box::new(decode_report(&mut r)?)),
        _ => unreachable!("tag checked above"),
    };
    r.finish()?;
    Ok(msg)
}

fn decode_report(r: &mut Reader) -> Result<LpReport, CodecError> {
    use std::time::Duration;
    let lp = LpId(r.u32()?);
    let mut counters = [0u64; 8];
    for c in &mut counters {
        *c = r.u64()?;
    }
    let mut timers = [Duration::ZERO; 5];
    for t in &mut timers {
        *t = Duration::from_nanos(r.u64()?);
    }
    let ledger = MetricsLedger {
        lcc_count: counters[0],
        rcc_count: counters[1],
        lcc_bytes: counters[2],
        rcc_bytes: counters[3],
        mig_count: counters[4],
        mig_bytes: counters[5],
        events_sent: counters[6],
        events_delivered: counters[7],
        handler_time: timers[0],
        barrier_wait: timers[1],
        heu_time: timers[2],
        mig_cpu_time: timers[3],
        step_time: timers[4],
    };
    let frame_digest = r.u64()?;
    let n = r.count(24)?;
    let mut digest = Vec::with_capacity(n);
    for _ in 0..n {
        digest.push(DigestRecord {
            ts: Timestep(r.u64()?),
            entity: EntityId(r.u64()?),
            hash: r.u64()?,
        });
    }
    let n = r.count(4)?;
    let mut populations = Vec::with_capacity(n);
    for _ in 0..n {
        populations.push(r.u32()?);
    }
    let n = r.count(32)?;
    let mut migrations = Vec::with_capacity(n);
    for _ in 0..n {
        migrations.push(MigrationRecord {
            entity: EntityId(r.u64()?),
            source: LpId(r.u32()?),
            dest: LpId(r.u32()?),
            fired: Timestep(r.u64()?),
            notify_ts: Timestep(r.u64()?),
        });
    }
    let n = r.count(16)?;
    let mut arrivals = Vec::with_capacity(n);
    for _ in 0..n {
        arrivals.push((EntityId(r.u64()?), Timestep(r.u64()?)));
    }
    Ok(LpReport {
        lp,
        ledger,
        frame_digest,
        digest,
        populations,
        migrations,
        arrivals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interaction(payload: &[u8]) -> Message {
        Message::Interaction(InteractionEvent {
            sender: EntityId(1),
            dest: EntityId(2),
            send_ts: Timestep(5),
            deliver_ts: Timestep(6),
            seq: 7,
            payload: Bytes::copy_from_slice(payload),
        })
    }

    #[test]
    fn interaction_layout() {
        let frame = encode_to_vec(&interaction(&[0xAB]));
        // 5 u64 fields, a u32 length and one payload byte
        assert_eq!(frame.len(), HEADER_LEN + 45);
        assert_eq!(&frame[..4], &45u32.to_le_bytes());
        assert_eq!(frame[4], TAG_INTERACTION);
        assert_eq!(&frame[5..13], &1u64.to_le_bytes());
        assert_eq!(&frame[45..49], &1u32.to_le_bytes());
        assert_eq!(frame[49], 0xAB);
    }

    #[test]
    fn barrier_layout() {
        let frame = encode_to_vec(&Message::Barrier {
            lp: LpId(3),
            timestep: Timestep(9),
        });
        assert_eq!(frame, [12, 0, 0, 0, 7, 3, 0, 0, 0, 9, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn grant_and_notice_layout() {
        let g = encode_to_vec(&Message::Grant(GrantDecision {
            dest: LpId(1),
            source: LpId(2),
            granted: 3,
        }));
        assert_eq!(g, [12, 0, 0, 0, 6, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        let n = encode_to_vec(&Message::Notice(Notice {
            kind: NoticeKind::External,
            entity: EntityId(7),
            from_lp: LpId(0),
            to_lp: LpId(1),
            effective_from: Timestep(12),
        }));
        assert_eq!(n.len(), HEADER_LEN + 24);
        assert_eq!(n[4], TAG_NOTICE_EXTERNAL);
    }

    #[test]
    fn unknown_tag_is_rejected() {
        let mut frame = encode_to_vec(&interaction(b"x"));
        frame[4] = 42;
        let err = decode_frame(&mut Bytes::from(frame)).unwrap_err();
        assert_eq!(err, CodecError::UnknownTag(42));
    }

    #[test]
    fn truncated_and_trailing_bodies_are_rejected() {
        let frame = encode_to_vec(&interaction(b"abc"));
        let body = Bytes::copy_from_slice(&frame[HEADER_LEN..frame.len() - 1]);
        assert!(matches!(
            decode_body(TAG_INTERACTION, body),
            Err(CodecError::Truncated(_))
        ));
        let mut long = frame[HEADER_LEN..].to_vec();
        long.push(0);
        assert!(matches!(
            decode_body(TAG_INTERACTION, Bytes::from(long)),
            Err(CodecError::Trailing { extra: 1, .. })
        ));
    }

    #[test]
    fn envelope_length_matches_formula() {
        let env = MigrationEnvelope {
            entity: EntityId(4),
            state: StateBlob::new(EntityId(4), 81920 - 32),
            model_state: ModelState([1.0, 2.0, 3.0, 4.0]),
            last_migration_ts: None,
            sent_since_eval: 3,
            window: vec![WindowEntry {
                ts: Timestep(2),
                lp: LpId(1),
                count: 5,
            }],
        };
        let msg = Message::Envelope(env.clone());
        let frame = encode_to_vec(&msg);
        assert_eq!(frame.len(), HEADER_LEN + envelope_body_len(&env));
        assert!(envelope_body_len(&env) >= 81920);
        assert_eq!(decode_frame(&mut Bytes::from(frame)).unwrap(), msg);
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let ts = any::<u64>().prop_map(Timestep);
        let opt_ts = prop_oneof![Just(None), (0u64..u64::MAX).prop_map(|t| Some(Timestep(t)))];
        prop_oneof![
            (
                any::<u64>(),
                any::<u64>(),
                ts.clone(),
                ts.clone(),
                any::<u64>(),
                prop::collection::vec(any::<u8>(), 0..64)
            )
                .prop_map(|(s, d, a, b, seq, p)| Message::Interaction(
                    InteractionEvent {
                        sender: EntityId(s),
                        dest: EntityId(d),
                        send_ts: a,
                        deliver_ts: b,
                        seq,
                        payload: Bytes::from(p),
                    }
                )),
            (
                any::<bool>(),
                any::<u64>(),
                any::<u32>(),
                any::<u32>(),
                ts.clone()
            )
                .prop_map(|(internal, e, f, t, at)| {
                    Message::Notice(Notice {
                        kind: if internal {
                            NoticeKind::Internal
                        } else {
                            NoticeKind::External
                        },
                        entity: EntityId(e),
                        from_lp: LpId(f),
                        to_lp: LpId(t),
                        effective_from: at,
                    })
                }),
            (
                any::<u64>(),
                prop::collection::vec(any::<u8>(), 32..96),
                prop::array::uniform4(-1e9f64..1e9),
                opt_ts,
                any::<u32>(),
                prop::collection::vec((any::<u64>(), any::<u32>(), any::<u32>()), 0..8)
            )
                .prop_map(|(e, state, ms, last, sse, w)| Message::Envelope(
                    MigrationEnvelope {
                        entity: EntityId(e),
                        state: StateBlob::from_bytes(state).unwrap(),
                        model_state: ModelState(ms),
                        last_migration_ts: last,
                        sent_since_eval: sse,
                        window: w
                            .into_iter()
                            .map(|(t, lp, count)| WindowEntry {
                                ts: Timestep(t),
                                lp: LpId(lp),
                                count
                            })
                            .collect(),
                    }
                )),
            (
                any::<u32>(),
                prop::collection::vec((any::<u32>(), any::<u32>()), 0..8)
            )
                .prop_map(|(s, c)| {
                    Message::Candidates(CandidateSummary {
                        source: LpId(s),
                        counts: c.into_iter().map(|(d, n)| (LpId(d), n)).collect(),
                    })
                }),
            (any::<u32>(), any::<u32>(), any::<u32>()).prop_map(|(d, s, g)| Message::Grant(
                GrantDecision {
                    dest: LpId(d),
                    source: LpId(s),
                    granted: g
                }
            )),
            (any::<u32>(), ts).prop_map(|(lp, timestep)| Message::Barrier {
                lp: LpId(lp),
                timestep
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn decode_inverts_encode(msgs in prop::collection::vec(arb_message(), 1..50)) {
            let mut out = BytesMut::new();
            for m in &msgs {
                encode_frame(m, &mut out);
            }
            let mut buf = out.freeze();
            for m in &msgs {
                prop_assert_eq!(&decode_frame(&mut buf).unwrap(), m);
            }
            prop_assert!(buf.is_empty());
        }
    }

    #[test]
    fn report_round_trip() {
        let report = LpReport {
            lp: LpId(1),
            ledger: MetricsLedger {
                lcc_count: 3,
                rcc_bytes: 99,
                heu_time: std::time::Duration::from_nanos(1234),
                ..Default::default()
            },
            frame_digest: 77,
            digest: vec![DigestRecord {
                ts: Timestep(1),
                entity: EntityId(2),
                hash: 3,
            }],
            populations: vec![5, 6],
            migrations: vec![MigrationRecord {
                entity: EntityId(9),
                source: LpId(1),
                dest: LpId(0),
                fired: Timestep(3),
                notify_ts: Timestep(4),
            }],
            arrivals: vec![(EntityId(8), Timestep(6))],
        };
        let msg = Message::Report(Box::new(report));
        let frame = encode_to_vec(&msg);
        assert_eq!(decode_frame(&mut Bytes::from(frame)).unwrap(), msg);
    }
}

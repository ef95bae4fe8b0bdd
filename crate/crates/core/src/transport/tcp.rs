//! Full-mesh TCP transport, one process per LP.
//!
//! Connections are set up once from a roster: every LP listens on its own
//! address, dials every lower-numbered LP and accepts the higher-numbered
//! ones. A dialer introduces itself with its LP id as a bare `u32` LE before
//! the first frame. One reader thread per peer decodes frames into a shared
//! channel; writes happen on the LP's own thread.

use std::collections::VecDeque;
use std::io::{BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use bytes::{Bytes, BytesMut};

use crate::domain::{LpId, Timestep};
use crate::engine::report::LpReport;
use crate::error::TransportError;
use crate::transport::codec::{self, Message, HEADER_LEN};
use crate::transport::Transport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterEntry {
    pub lp: LpId,
    pub host: String,
    pub port: u16,
}

/// Parses `lp_id host port` lines. Blank lines and `#` comments are
/// skipped; ids must cover `0..n` exactly once.
pub fn parse_roster(text: &str) -> Result<Vec<RosterEntry>, TransportError> {
    let mut entries = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || {
            TransportError::Roster(format!(
                "line {}: expected `lp_id host port`, got {raw:?}",
                no + 1
            ))
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [lp, host, port] = fields[..] else {
            return Err(bad());
        };
        entries.push(RosterEntry {
            lp: LpId(lp.parse().map_err(|_| bad())?),
            host: host.to_string(),
            port: port.parse().map_err(|_| bad())?,
        });
    }
    entries.sort_by_key(|e| e.lp);
    for (i, e) in entries.iter().enumerate() {
        if e.lp.index() != i {
            return Err(TransportError::Roster(format!(
                "LP ids must be 0..{} without gaps or repeats",
                entries.len()
            )));
        }
    }
    if entries.is_empty() {
        return Err(TransportError::Roster("roster is empty".into()));
    }
    Ok(entries)
}

pub fn load_roster(path: &Path) -> Result<Vec<RosterEntry>, TransportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TransportError::Roster(format!("{}: {e}", path.display())))?;
    parse_roster(&text)
}

type Inbound = (LpId, Result<Message, TransportError>);

pub struct TcpTransport {
    lp: LpId,
    writers: Vec<Option<BufWriter<TcpStream>>>,
    rx: Receiver<Inbound>,
    /// Decoded frames per peer not yet handed out.
    queues: Vec<VecDeque<Message>>,
    readers: Vec<JoinHandle<()>>,
    scratch: BytesMut,
}

fn read_frames(peer: LpId, mut stream: TcpStream, tx: Sender<Inbound>) {
    loop {
        let mut header = [0u8; HEADER_LEN];
        let msg = stream
            .read_exact(&mut header)
            .map_err(|_| TransportError::ConnectionLost(peer))
            .and_then(|()| Ok(codec::decode_header(header)?))
            .and_then(|(len, tag)| {
                let mut body = vec![0u8; len as usize];
                stream
                    .read_exact(&mut body)
                    .map_err(|_| TransportError::ConnectionLost(peer))?;
                Ok(codec::decode_body(tag, Bytes::from(body))?)
            });
        let failed = msg.is_err();
        if tx.send((peer, msg)).is_err() || failed {
            return;
        }
    }
}

impl TcpTransport {
    /// Establishes the mesh. Dialing retries until `timeout` so processes
    /// may start in any order.
    pub fn connect(
        lp: LpId,
        roster: &[RosterEntry],
        timeout: Duration,
    ) -> Result<TcpTransport, TransportError> {
        let n = roster.len();
        let me = roster
            .get(lp.index())
            .ok_or_else(|| TransportError::Roster(format!("{lp} is not in the roster")))?;
        let listener = TcpListener::bind((me.host.as_str(), me.port))?;
        let higher = n - 1 - lp.index();
        let acceptor = thread::spawn(move || -> Result<Vec<(LpId, TcpStream)>, TransportError> {
            let mut accepted = Vec::with_capacity(higher);
            while accepted.len() < higher {
                let (mut stream, _) = listener.accept()?;
                let mut hello = [0u8; 4];
                stream.read_exact(&mut hello)?;
                accepted.push((LpId(u32::from_le_bytes(hello)), stream));
            }
            Ok(accepted)
        });

        let deadline = Instant::now() + timeout;
        let mut streams: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
        for peer in &roster[..lp.index()] {
            let mut stream = loop {
                match TcpStream::connect((peer.host.as_str(), peer.port)) {
                    Ok(s) => break s,
                    Err(e) if Instant::now() >= deadline => return Err(e.into()),
                    Err(_) => thread::sleep(Duration::from_millis(20)),
                }
            };
            stream.write_all(&lp.0.to_le_bytes())?;
            streams[peer.lp.index()] = Some(stream);
        }
        let accepted = acceptor
            .join()
            .map_err(|_| TransportError::Roster("accept thread panicked".into()))??;
        for (peer, stream) in accepted {
            if peer.index() <= lp.index() || peer.index() >= n || streams[peer.index()].is_some() {
                return Err(TransportError::Roster(format!(
                    "unexpected hello from {peer}"
                )));
            }
            streams[peer.index()] = Some(stream);
        }

        let (tx, rx) = channel();
        let mut writers = Vec::with_capacity(n);
        let mut readers = Vec::new();
        for (j, slot) in streams.into_iter().enumerate() {
            match slot {
                Some(stream) => {
                    stream.set_nodelay(true)?;
                    let read_half = stream.try_clone()?;
                    let tx = tx.clone();
                    readers.push(thread::spawn(move || {
                        read_frames(LpId(j as u32), read_half, tx)
                    }));
                    writers.push(Some(BufWriter::with_capacity(1 << 16, stream)));
                }
                None => writers.push(None),
            }
        }
        Ok(TcpTransport {
            lp,
            writers,
            rx,
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            readers,
            scratch: BytesMut::new(),
        })
    }

    fn write_to(
        &mut self,
        peer: usize,
        msgs: impl IntoIterator<Item = Message>,
    ) -> Result<(), TransportError> {
        let lost = TransportError::ConnectionLost(LpId(peer as u32));
        let Some(w) = self.writers[peer].as_mut() else {
            return Ok(());
        };
        self.scratch.clear();
        for m in msgs {
            codec::encode_frame(&m, &mut self.scratch);
        }
        w.write_all(&self.scratch).map_err(|_| lost)?;
        w.flush()
            .map_err(|_| TransportError::ConnectionLost(LpId(peer as u32)))
    }

    /// Pulls one frame from the readers into its peer's queue.
    fn pump(&mut self) -> Result<(), TransportError> {
        let (peer, msg) = self
            .rx
            .recv()
            .map_err(|_| TransportError::ConnectionLost(self.lp))?;
        self.queues[peer.index()].push_back(msg?);
        Ok(())
    }
}

impl Transport for TcpTransport {
    fn lp(&self) -> LpId {
        self.lp
    }

    fn num_lps(&self) -> usize {
        self.writers.len()
    }

    fn send_step(
        &mut self,
        step: Timestep,
        outgoing: &mut [Vec<Message>],
    ) -> Result<(), TransportError> {
        let barrier = Message::Barrier {
            lp: self.lp,
            timestep: step,
        };
        for j in 0..self.writers.len() {
            if self.writers[j].is_none() {
                continue;
            }
            let msgs = std::mem::take(&mut outgoing[j]);
            self.write_to(j, msgs.into_iter().chain([barrier.clone()]))?;
        }
        Ok(())
    }

    fn recv_step(&mut self, step: Timestep) -> Result<Vec<Message>, TransportError> {
        let Some(expected) = step.minus(1) else {
            return Ok(Vec::new());
        };
        let n = self.writers.len();
        let mut per_peer: Vec<Vec<Message>> = vec![Vec::new(); n];
        let mut done: Vec<bool> = (0..n).map(|j| self.writers[j].is_none()).collect();
        loop {
            for j in 0..n {
                while !done[j] {
                    let Some(m) = self.queues[j].pop_front() else {
                        break;
                    };
                    match m {
                        Message::Barrier { timestep, .. } if timestep == expected => done[j] = true,
                        Message::Barrier { timestep, .. } => {
                            return Err(TransportError::WrongTimestep {
                                peer: LpId(j as u32),
                                expected,
                                got: timestep,
                            })
                        }
                        other => per_peer[j].push(other),
                    }
                }
            }
            if done.iter().all(|&d| d) {
                return Ok(per_peer.into_iter().flatten().collect());
            }
            self.pump()?;
        }
    }

    fn exchange_reports(&mut self, own: LpReport) -> Result<Vec<LpReport>, TransportError> {
        let n = self.writers.len();
        for j in 0..n {
            self.write_to(j, [Message::Report(Box::new(own.clone()))])?;
        }
        let mut reports: Vec<Option<LpReport>> = vec![None; n];
        reports[self.lp.index()] = Some(own);
        while reports.iter().any(Option::is_none) {
            for j in 0..n {
                if reports[j].is_some() {
                    continue;
                }
                match self.queues[j].pop_front() {
                    Some(Message::Report(r)) => reports[j] = Some(*r),
                    Some(other) => {
                        return Err(TransportError::Roster(format!(
                            "expected a run report from lp{j}, got message type {}",
                            other.tag()
                        )))
                    }
                    None => {}
                }
            }
            if reports.iter().any(Option::is_none) {
                self.pump()?;
            }
        }
        Ok(reports
            .into_iter()
            .map(|r| r.expect("filled above"))
            .collect())
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for w in self.writers.iter_mut().flatten() {
            let _ = w.flush();
            let _ = w.get_ref().shutdown(std::net::Shutdown::Both);
        }
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
    }
}

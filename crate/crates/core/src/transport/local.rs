//! In-process transport over standard channels.

use std::sync::mpsc::{channel, Receiver, Sender};

use crate::domain::{LpId, Timestep};
use crate::error::TransportError;
use crate::transport::{Message, Transport};

struct Batch {
    step: Timestep,
    msgs: Vec<Message>,
}

/// One endpoint of an in-process full mesh with a channel per ordered pair
/// of LPs. Each step a single batch goes to every peer, empty or not; its
/// arrival is the peer's barrier.
pub struct LocalTransport {
    lp: LpId,
    to_peers: Vec<Option<Sender<Batch>>>,
    from_peers: Vec<Option<Receiver<Batch>>>,
}

/// Endpoints for `n` LPs, indexed by LP id.
pub fn local_mesh(n: usize) -> Vec<LocalTransport> {
    let mut endpoints: Vec<LocalTransport> = (0..n)
        .map(|i| LocalTransport {
            lp: LpId(i as u32),
            to_peers: (0..n).map(|_| None).collect(),
            from_peers: (0..n).map(|_| None).collect(),
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (tx, rx) = channel();
                endpoints[i].to_peers[j] = Some(tx);
                endpoints[j].from_peers[i] = Some(rx);
            }
        }
    }
    endpoints
}

impl Transport for LocalTransport {
    fn lp(&self) -> LpId {
        self.lp
    }

    fn num_lps(&self) -> usize {
        self.to_peers.len()
    }

    fn send_step(
        &mut self,
        step: Timestep,
        outgoing: &mut [Vec<Message>],
    ) -> Result<(), TransportError> {
        for (j, peer) in self.to_peers.iter().enumerate() {
            let Some(tx) = peer else { continue };
            let batch = Batch {
                step,
                msgs: std::mem::take(&mut outgoing[j]),
            };
            // A peer that already finished its last step has dropped its
            // receivers. One that failed is caught when we next read from it.
            let _ = tx.send(batch);
        }
        Ok(())
    }

    fn recv_step(&mut self, step: Timestep) -> Result<Vec<Message>, TransportError> {
        let Some(expected) = step.minus(1) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for (j, peer) in self.from_peers.iter().enumerate() {
            let Some(rx) = peer else { continue };
            let from = LpId(j as u32);
            let batch = rx
                .recv()
                .map_err(|_| TransportError::ConnectionLost(from))?;
            if batch.step != expected {
                return Err(TransportError::WrongTimestep {
                    peer: from,
                    expected,
                    got: batch.step,
                });
            }
            out.extend(batch.msgs);
        }
        Ok(out)
    }
}

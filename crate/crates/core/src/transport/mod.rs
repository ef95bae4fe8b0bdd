//! Moving messages between LPs.
//!
//! A transport carries one step's worth of messages at a time. The end of a
//! step is marked by a barrier, so receiving the messages of step `t - 1`
//! doubles as the synchronization point before step `t`.

use crate::domain::{LpId, Timestep};
use crate::engine::report::LpReport;
use crate::error::TransportError;

pub mod codec;
pub mod local;
pub mod tcp;

pub use codec::Message;
pub use local::{local_mesh, LocalTransport};
pub use tcp::{load_roster, parse_roster, RosterEntry, TcpTransport};

pub trait Transport: Send {
    fn lp(&self) -> LpId;

    fn num_lps(&self) -> usize;

    /// Sends this step's messages, indexed by destination LP, followed by
    /// this LP's barrier. The vectors are left empty.
    fn send_step(
        &mut self,
        step: Timestep,
        outgoing: &mut [Vec<Message>],
    ) -> Result<(), TransportError>;

    /// Everything peers sent during `step - 1`, grouped by ascending sender
    /// and in send order within a sender. Blocks until every peer has
    /// finished that step.
    fn recv_step(&mut self, step: Timestep) -> Result<Vec<Message>, TransportError>;

    /// Shares end-of-run reports so that every participant ends up with all
    /// of them, ordered by LP. In-process transports have nobody to tell.
    fn exchange_reports(&mut self, own: LpReport) -> Result<Vec<LpReport>, TransportError> {
        Ok(vec![own])
    }
}

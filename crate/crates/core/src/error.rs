use thiserror::Error;

use crate::domain::{EntityId, LpId, Timestep};
use crate::transport::codec::CodecError;

/// Fatal conditions raised while running a simulation.
///
/// Every variant aborts the run: they signal either a broken peer or a bug
/// in the migration choreography, and continuing would corrupt the trace.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("routing lookup for unknown entity {0}")]
    UnknownEntity(EntityId),

    #[error("non-monotone routing notice for {entity}: effective {effective} after {last}")]
    NonMonotoneNotice {
        entity: EntityId,
        effective: Timestep,
        last: Timestep,
    },

    #[error("{lp}: event for {entity} due at {at} but the entity is not owned here")]
    Causality {
        lp: LpId,
        entity: EntityId,
        at: Timestep,
    },

    #[error("{lp}: arrival of {entity} which is already owned")]
    DuplicateArrival { lp: LpId, entity: EntityId },

    #[error("{lp}: migration of {entity} which is not owned")]
    NotOwned { lp: LpId, entity: EntityId },

    #[error("{lp}: no remaining logical process to take over stored events")]
    NoRemainingLp { lp: LpId },

    #[error("protocol violation at {lp}: {detail}")]
    Protocol { lp: LpId, detail: String },

    #[error("transport: {0}")]
    Transport(#[from] TransportError),

    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("codec: {0}")]
    Codec(#[from] CodecError),

    #[error("connection to {0} lost")]
    ConnectionLost(LpId),

    #[error("frame from {peer} for the wrong timestep: expected {expected}, got {got}")]
    WrongTimestep {
        peer: LpId,
        expected: Timestep,
        got: Timestep,
    },

    #[error("roster: {0}")]
    Roster(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

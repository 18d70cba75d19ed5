//! Master/worker simulation of the in-out-in protocol.
//!
//! 1. every worker sends its local draws to the master (`samples_in`);
//! 2. the master broadcasts the pooled draws (`pooled_out`);
//! 3. every worker returns its log-likelihood at each pooled draw (`logliks_in`).
//!
//! Workers run as threads and exchange serialised frames over channels, so only
//! parameter vectors and log-likelihood scalars ever cross the boundary.

mod matrix;
mod protocol;
pub mod wire;

pub use matrix::{DrawBlock, LogLikMatrix, PooledDraws};
pub use protocol::{
    default_threads, run_in_out_in, write_transcript_jsonl, CommunicationReport, Federation, ProtocolMessage,
    ProtocolOptions, ProtocolRun, THREADS_ENV,
};
pub use wire::{Endpoint, MessageKind};

//! Binary message frames.
//!
//! A frame is a fixed header followed by a body of little-endian `f64` values.
//! Header layout: magic `LMIE`, version `u8`, kind `u8`, phase `u16`, origin
//! `u32`, destination `u32`, dim `u32`, count `u64`. The master is encoded as
//! `u32::MAX`. Infinite log-likelihoods survive the round trip.
//!
//! Bodies are reference counted so a broadcast shares one body between every
//! destination header.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LMIE";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 2 + 4 + 4 + 4 + 8;
const MASTER_ID: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    SamplesIn,
    PooledOut,
    LogliksIn,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::SamplesIn => "samples_in",
            MessageKind::PooledOut => "pooled_out",
            MessageKind::LogliksIn => "logliks_in",
        }
    }

    fn code(self) -> u8 {
        match self {
            MessageKind::SamplesIn => 1,
            MessageKind::PooledOut => 2,
            MessageKind::LogliksIn => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            1 => Ok(MessageKind::SamplesIn),
            2 => Ok(MessageKind::PooledOut),
            3 => Ok(MessageKind::LogliksIn),
            _ => Err(Error::Protocol(format!("unknown message kind {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Master,
    Worker(u32),
}

impl Endpoint {
    fn code(self) -> u32 {
        match self {
            Endpoint::Master => MASTER_ID,
            Endpoint::Worker(w) => w,
        }
    }

    fn from_code(c: u32) -> Self {
        if c == MASTER_ID {
            Endpoint::Master
        } else {
            Endpoint::Worker(c)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub kind: MessageKind,
    pub phase: u16,
    pub origin: Endpoint,
    pub destination: Endpoint,
    pub dim: u32,
    pub count: u64,
}

impl FrameHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4] = VERSION;
        out[5] = self.kind.code();
        out[6..8].copy_from_slice(&self.phase.to_le_bytes());
        out[8..12].copy_from_slice(&self.origin.code().to_le_bytes());
        out[12..16].copy_from_slice(&self.destination.code().to_le_bytes());
        out[16..20].copy_from_slice(&self.dim.to_le_bytes());
        out[20..28].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Protocol("not a message frame".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Protocol(format!("unsupported frame version {}", bytes[4])));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        Ok(Self {
            kind: MessageKind::from_code(bytes[5])?,
            phase: u16::from_le_bytes([bytes[6], bytes[7]]),
            origin: Endpoint::from_code(u32_at(8)),
            destination: Endpoint::from_code(u32_at(12)),
            dim: u32_at(16),
            count: u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")),
        })
    }

    fn value_count(&self) -> usize {
        self.count as usize * self.dim as usize
    }
}

/// Serialise values into a frame body.
pub fn encode_body(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// A serialised message.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    header: [u8; HEADER_LEN],
    body: Arc<Vec<u8>>,
}

impl Frame {
    pub fn new(header: FrameHeader, body: Arc<Vec<u8>>) -> Result<Self> {
        if body.len() != 8 * header.value_count() {
            return Err(Error::Protocol(format!(
                "frame declares {} x {} values but carries {} bytes",
                header.count,
                header.dim,
                body.len()
            )));
        }
        Ok(Self {
            header: header.encode(),
            body,
        })
    }

    pub fn from_values(header: FrameHeader, values: &[f64]) -> Result<Self> {
        Self::new(header, Arc::new(encode_body(values)))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = FrameHeader::decode(bytes)?;
        let expected = HEADER_LEN + 8 * header.value_count();
        if bytes.len() != expected {
            return Err(Error::Protocol(format!(
                "frame is {} bytes but its header implies {expected}",
                bytes.len()
            )));
        }
        Self::new(header, Arc::new(bytes[HEADER_LEN..].to_vec()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_vec();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn header(&self) -> FrameHeader {
        FrameHeader::decode(&self.header).expect("header was validated on construction")
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    pub fn byte_count(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    /// Decode values `[start, start + len)` into `out`.
    pub fn values_into(&self, start: usize, len: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.body[8 * start..8 * (start + len)]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))),
        );
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.body.len() / 8);
        self.values_into(0, self.body.len() / 8, &mut out);
        out
    }

    /// Hex SHA-256 of the header followed by the SHA-256 of the body.
    pub fn digest(&self) -> String {
        let body_digest = Sha256::digest(self.body.as_slice());
        let mut h = Sha256::new();
        h.update(self.header);
        h.update(body_digest);
        hex::encode(h.finalize())
    }
}

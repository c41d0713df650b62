//! Shared vocabulary types and the fixed binary wire format.
//!
//! Data messages are 32 bytes and alerts 24 bytes, all fields little-endian:
//!
//! ```text
//! data : u32 origin | f64 individual | f64 aggregate | u32 neighbor_count | f64 timestamp
//! alert: u32 attacker | f64 reading | u32 detector | f64 detected_at
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATA_MESSAGE_LEN: usize = 32;
pub const ALERT_MESSAGE_LEN: usize = 24;

/// Network-unique node identity.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("malformed message: {0}")]
    MalformedMessage(&'static str),
    #[error("invalid reading: value {value}, timestamp {timestamp}")]
    InvalidReading { value: f64, timestamp: f64 },
    #[error("invalid data message field: {0}")]
    InvalidField(&'static str),
    #[error("alert attacker and detector must differ ({0})")]
    SelfAlert(NodeId),
}

/// One scalar sensor sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    value: f64,
    timestamp: f64,
}

impl Reading {
    pub fn new(value: f64, timestamp: f64) -> Result<Self, DomainError> {
        if value.is_finite() && timestamp.is_finite() && timestamp >= 0.0 {
            Ok(Reading { value, timestamp })
        } else {
            Err(DomainError::InvalidReading { value, timestamp })
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }
}

/// The periodic `<Id, L_ind, L_agr, |N_viz|>` broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataMessage {
    origin: NodeId,
    individual: Reading,
    aggregate: f64,
    neighbor_count: u32,
}

impl DataMessage {
    pub fn new(
        origin: NodeId,
        individual: Reading,
        aggregate: f64,
        neighbor_count: u32,
    ) -> Result<Self, DomainError> {
        if !aggregate.is_finite() {
            return Err(DomainError::InvalidField("aggregate"));
        }
        Ok(DataMessage {
            origin,
            individual,
            aggregate,
            neighbor_count,
        })
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn individual(&self) -> Reading {
        self.individual
    }

    pub fn aggregate(&self) -> f64 {
        self.aggregate
    }

    pub fn neighbor_count(&self) -> u32 {
        self.neighbor_count
    }

    pub fn encode(&self) -> [u8; DATA_MESSAGE_LEN] {
        let mut out = [0u8; DATA_MESSAGE_LEN];
        out[0..4].copy_from_slice(&self.origin.0.to_le_bytes());
        out[4..12].copy_from_slice(&self.individual.value.to_le_bytes());
        out[12..20].copy_from_slice(&self.aggregate.to_le_bytes());
        out[20..24].copy_from_slice(&self.neighbor_count.to_le_bytes());
        out[24..32].copy_from_slice(&self.individual.timestamp.to_le_bytes());
        out
    }

    /// Never panics; anything that is not the encoding of a valid message is
    /// rejected so the receiver can drop it.
    pub fn decode(bytes: &[u8]) -> Result<Self, DomainError> {
        let bytes: &[u8; DATA_MESSAGE_LEN] = bytes
            .try_into()
            .map_err(|_| DomainError::MalformedMessage("data message must be 32 bytes"))?;
        let origin = NodeId(read_u32(bytes, 0));
        let value = read_f64(bytes, 4);
        let aggregate = read_f64(bytes, 12);
        let neighbor_count = read_u32(bytes, 20);
        let timestamp = read_f64(bytes, 24);
        if !value.is_finite() || !aggregate.is_finite() || !timestamp.is_finite() {
            return Err(DomainError::MalformedMessage("non-finite field"));
        }
        if timestamp < 0.0 {
            return Err(DomainError::MalformedMessage("negative timestamp"));
        }
        Ok(DataMessage {
            origin,
            individual: Reading { value, timestamp },
            aggregate,
            neighbor_count,
        })
    }
}

pub fn encode_data_message(msg: &DataMessage) -> [u8; DATA_MESSAGE_LEN] {
    msg.encode()
}

pub fn decode_data_message(bytes: &[u8]) -> Result<DataMessage, DomainError> {
    DataMessage::decode(bytes)
}

/// Conviction notice flooded through cluster leaders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertMessage {
    attacker: NodeId,
    attacker_reading: f64,
    detector: NodeId,
    detected_at: f64,
}

impl AlertMessage {
    pub fn new(
        attacker: NodeId,
        attacker_reading: f64,
        detector: NodeId,
        detected_at: f64,
    ) -> Result<Self, DomainError> {
        if attacker == detector {
            return Err(DomainError::SelfAlert(attacker));
        }
        if !attacker_reading.is_finite() {
            return Err(DomainError::InvalidField("attacker_reading"));
        }
        if !detected_at.is_finite() || detected_at < 0.0 {
            return Err(DomainError::InvalidField("detected_at"));
        }
        Ok(AlertMessage {
            attacker,
            attacker_reading,
            detector,
            detected_at,
        })
    }

    pub fn attacker(&self) -> NodeId {
        self.attacker
    }

    pub fn attacker_reading(&self) -> f64 {
        self.attacker_reading
    }

    pub fn detector(&self) -> NodeId {
        self.detector
    }

    pub fn detected_at(&self) -> f64 {
        self.detected_at
    }

    pub fn encode(&self) -> [u8; ALERT_MESSAGE_LEN] {
        let mut out = [0u8; ALERT_MESSAGE_LEN];
        out[0..4].copy_from_slice(&self.attacker.0.to_le_bytes());
        out[4..12].copy_from_slice(&self.attacker_reading.to_le_bytes());
        out[12..16].copy_from_slice(&self.detector.0.to_le_bytes());
        out[16..24].copy_from_slice(&self.detected_at.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DomainError> {
        let bytes: &[u8; ALERT_MESSAGE_LEN] = bytes
            .try_into()
            .map_err(|_| DomainError::MalformedMessage("alert message must be 24 bytes"))?;
        AlertMessage::new(
            NodeId(read_u32(bytes, 0)),
            read_f64(bytes, 4),
            NodeId(read_u32(bytes, 12)),
            read_f64(bytes, 16),
        )
        .map_err(|_| DomainError::MalformedMessage("invalid alert fields"))
    }
}

/// What a node remembers about the latest data message from one origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub individual: f64,
    pub aggregate: f64,
    pub neighbor_count: u32,
    pub last_seen: f64,
}

impl NeighborRecord {
    pub fn from_message(msg: &DataMessage, received_at: f64) -> Self {
        NeighborRecord {
            individual: msg.individual.value,
            aggregate: msg.aggregate,
            neighbor_count: msg.neighbor_count,
            last_seen: received_at,
        }
    }
}

#[inline]
fn read_u32<const N: usize>(b: &[u8; N], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

#[inline]
fn read_f64<const N: usize>(b: &[u8; N], at: usize) -> f64 {
    let mut w = [0u8; 8];
    w.copy_from_slice(&b[at..at + 8]);
    f64::from_le_bytes(w)
}

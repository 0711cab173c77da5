// Copyright 2026 The mpenc-rs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! TLV records and the `?mpENC:` text framing.
//!
//! A record is `BE16(type) || BE16(len) || value`. A packet is an ordered
//! sequence of records; on the wire it is the prefix `?mpENC:`, the standard
//! base64 (with padding) of the concatenated records, and a final `.`.
//!
//! The codec preserves record order and multiplicity. Validating which
//! records may appear where is left to the greeting and message layers.

use base64::{engine::general_purpose::STANDARD, Engine as _};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MPENC_PREFIX: &str = "?mpENC:";
pub const MPENC_SUFFIX: &str = ".";

pub const PROTOCOL_VERSION: u16 = 0x0001;

/// Numeric record types. Frozen; see `docs/wire-spec.md`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u16)]
pub enum RecordType {
    ProtocolVersion = 0x0001,
    MessageType = 0x0002,
    MessageSignature = 0x0003,
    MessageIv = 0x0004,
    MessagePayload = 0x0005,
    SidkeyHint = 0x0006,
    MessageParent = 0x0010,
    MessageBody = 0x0011,
    GreetType = 0x0100,
    Source = 0x0101,
    Dest = 0x0102,
    Member = 0x0103,
    IntKey = 0x0104,
    Nonce = 0x0105,
    PubKey = 0x0106,
    PrevPf = 0x0107,
    ChainHash = 0x0108,
    LatestPm = 0x0109,
    SessionSignature = 0x010a,
}

impl RecordType {
    pub const ALL: [RecordType; 19] = [
        RecordType::ProtocolVersion,
        RecordType::MessageType,
        RecordType::MessageSignature,
        RecordType::MessageIv,
        RecordType::MessagePayload,
        RecordType::SidkeyHint,
        RecordType::MessageParent,
        RecordType::MessageBody,
        RecordType::GreetType,
        RecordType::Source,
        RecordType::Dest,
        RecordType::Member,
        RecordType::IntKey,
        RecordType::Nonce,
        RecordType::PubKey,
        RecordType::PrevPf,
        RecordType::ChainHash,
        RecordType::LatestPm,
        RecordType::SessionSignature,
    ];

    pub fn code(self) -> u16 {
        self as u16
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            RecordType::ProtocolVersion => "PROTOCOL_VERSION",
            RecordType::MessageType => "MESSAGE_TYPE",
            RecordType::MessageSignature => "MESSAGE_SIGNATURE",
            RecordType::MessageIv => "MESSAGE_IV",
            RecordType::MessagePayload => "MESSAGE_PAYLOAD",
            RecordType::SidkeyHint => "SIDKEY_HINT",
            RecordType::MessageParent => "MESSAGE_PARENT",
            RecordType::MessageBody => "MESSAGE_BODY",
            RecordType::GreetType => "GREET_TYPE",
            RecordType::Source => "SOURCE",
            RecordType::Dest => "DEST",
            RecordType::Member => "MEMBER",
            RecordType::IntKey => "INT_KEY",
            RecordType::Nonce => "NONCE",
            RecordType::PubKey => "PUB_KEY",
            RecordType::PrevPf => "PREV_PF",
            RecordType::ChainHash => "CHAIN_HASH",
            RecordType::LatestPm => "LATEST_PM",
            RecordType::SessionSignature => "SESSION_SIGNATURE",
        }
    }
}

/// Values of the `MESSAGE_TYPE` record (one byte).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageType {
    Greeting = 0x00,
    Data = 0x01,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x00 => Some(MessageType::Greeting),
            0x01 => Some(MessageType::Data),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Record {
    pub rtype: u16,
    pub value: Vec<u8>,
}

impl Record {
    pub fn new(rtype: RecordType, value: impl Into<Vec<u8>>) -> Self {
        Record {
            rtype: rtype.code(),
            value: value.into(),
        }
    }

    pub fn is(&self, rtype: RecordType) -> bool {
        self.rtype == rtype.code()
    }
}

pub fn encode_record(r: &Record) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(4 + r.value.len());
    encode_record_into(r, &mut out)?;
    Ok(out)
}

fn encode_record_into(r: &Record, out: &mut Vec<u8>) -> Result<()> {
    let len = u16::try_from(r.value.len()).map_err(|_| Error::OversizeRecord(r.value.len()))?;
    out.extend_from_slice(&r.rtype.to_be_bytes());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&r.value);
    Ok(())
}

pub fn encode_records(records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(records.iter().map(|r| 4 + r.value.len()).sum());
    for r in records {
        encode_record_into(r, &mut out)?;
    }
    Ok(out)
}

pub fn decode_records(mut b: &[u8]) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    while !b.is_empty() {
        if b.len() < 4 {
            return Err(Error::Malformed("truncated record header"));
        }
        let rtype = u16::from_be_bytes([b[0], b[1]]);
        let len = u16::from_be_bytes([b[2], b[3]]) as usize;
        let rest = &b[4..];
        if rest.len() < len {
            return Err(Error::Malformed("record length exceeds input"));
        }
        records.push(Record {
            rtype,
            value: rest[..len].to_vec(),
        });
        b = &rest[len..];
    }
    Ok(records)
}

pub fn frame(records: &[Record]) -> Result<String> {
    Ok(frame_bytes(&encode_records(records)?))
}

/// Frames already-encoded record bytes.
pub fn frame_bytes(encoded: &[u8]) -> String {
    let mut s = String::with_capacity(MPENC_PREFIX.len() + encoded.len() * 4 / 3 + 4);
    s.push_str(MPENC_PREFIX);
    s.push_str(&STANDARD.encode(encoded));
    s.push_str(MPENC_SUFFIX);
    s
}

/// Strips the framing and returns the raw record bytes.
pub fn unframe_bytes(text: &str) -> Result<Vec<u8>> {
    let body = text
        .strip_prefix(MPENC_PREFIX)
        .and_then(|t| t.strip_suffix(MPENC_SUFFIX))
        .ok_or(Error::NotMpenc)?;
    STANDARD
        .decode(body)
        .map_err(|_| Error::Malformed("invalid base64"))
}

pub fn unframe(text: &str) -> Result<Vec<Record>> {
    decode_records(&unframe_bytes(text)?)
}

/// A 32-byte SHA-256 identifier of a packet's encoded record bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub [u8; 32]);

impl PacketId {
    pub fn of(encoded: &[u8]) -> Self {
        PacketId(Sha256::digest(encoded).into())
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl std::fmt::Debug for PacketId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PacketId({})", self.short())
    }
}

impl std::fmt::Display for PacketId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// An encoded packet: its records, their concatenated bytes and its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WirePacket {
    pub records: Vec<Record>,
    pub bytes: Vec<u8>,
    pub id: PacketId,
}

impl WirePacket {
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let bytes = encode_records(&records)?;
        let id = PacketId::of(&bytes);
        Ok(WirePacket { records, bytes, id })
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let records = decode_records(&bytes)?;
        let id = PacketId::of(&bytes);
        Ok(WirePacket { records, bytes, id })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_bytes(unframe_bytes(text)?)
    }

    pub fn to_text(&self) -> String {
        frame_bytes(&self.bytes)
    }

    /// The `MESSAGE_TYPE` value, if the record is present and well formed.
    pub fn message_type(&self) -> Option<MessageType> {
        self.records
            .iter()
            .find(|r| r.is(RecordType::MessageType))
            .and_then(|r| match r.value.as_slice() {
                [b] => MessageType::from_byte(*b),
                _ => None,
            })
    }
}

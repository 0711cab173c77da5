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

//! Data packet encryption and verification.
//!
//! A data packet is `SIDKEY_HINT, MESSAGE_SIGNATURE, PROTOCOL_VERSION,
//! MESSAGE_TYPE, MESSAGE_IV, MESSAGE_PAYLOAD`. The payload is the padded
//! plaintext records (`MESSAGE_PARENT*, MESSAGE_BODY`) under AES-128-CTR with
//! the subsession group key. The author signs
//! `"datamsgsig" || H(sid || gk) || <records from PROTOCOL_VERSION on>` with
//! their ephemeral key, which binds the packet to exactly one subsession.

use std::collections::BTreeMap;

use aes::cipher::{KeyIvInit, StreamCipher};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::aske::SessionId;
use crate::codec::{encode_records, MessageType, Record, RecordType, WirePacket, PROTOCOL_VERSION};
use crate::error::{Error, Result};
use crate::transcript::MsgId;
use crate::types::UserId;

type Aes128Ctr = ctr::Ctr128BE<aes::Aes128>;

pub const DATA_CONTEXT: &[u8] = b"datamsgsig";
pub const PAD_BASELINE: usize = 128;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;
pub const IV_LEN: usize = 16;

/// Keys for one static-membership subsession: the shared encryption key and
/// every member's ephemeral verification key.
#[derive(Clone)]
pub struct SubsessionKeys {
    pub sid: SessionId,
    pub group_key: [u8; 16],
    pub members: Vec<UserId>,
    pub own_id: UserId,
    pub own_signing: SigningKey,
    pub verify_keys: BTreeMap<UserId, VerifyingKey>,
    binding: [u8; 32],
}

impl std::fmt::Debug for SubsessionKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubsessionKeys")
            .field("sid", &hex::encode(self.sid))
            .field("members", &self.members)
            .field("own_id", &self.own_id)
            .finish_non_exhaustive()
    }
}

impl SubsessionKeys {
    pub fn new(
        sid: SessionId,
        group_key: [u8; 16],
        members: Vec<UserId>,
        own_id: UserId,
        own_signing: SigningKey,
        verify_keys: BTreeMap<UserId, VerifyingKey>,
    ) -> Self {
        let binding = subsession_binding(&sid, &group_key);
        SubsessionKeys {
            sid,
            group_key,
            members,
            own_id,
            own_signing,
            verify_keys,
            binding,
        }
    }

    /// A one-member subsession with fresh local keys.
    pub fn solo<R: RngCore + CryptoRng>(own_id: UserId, rng: &mut R) -> Self {
        let mut sid = [0u8; 32];
        let mut gk = [0u8; 16];
        rng.fill_bytes(&mut sid);
        rng.fill_bytes(&mut gk);
        let signing = SigningKey::generate(rng);
        let verify_keys = BTreeMap::from([(own_id.clone(), signing.verifying_key())]);
        Self::new(sid, gk, vec![own_id.clone()], own_id, signing, verify_keys)
    }

    /// `H(sid || gk)`.
    pub fn binding(&self) -> &[u8; 32] {
        &self.binding
    }

    pub fn hint(&self) -> u8 {
        self.binding[0]
    }

    pub fn others(&self) -> impl Iterator<Item = &UserId> {
        self.members.iter().filter(move |m| **m != self.own_id)
    }
}

pub fn subsession_binding(sid: &SessionId, group_key: &[u8; 16]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(sid);
    h.update(group_key);
    h.finalize().into()
}

pub fn sidkey_hint(sid: &SessionId, group_key: &[u8; 16]) -> u8 {
    subsession_binding(sid, group_key)[0]
}

/// The padded size for a payload of `len` bytes.
pub fn padded_len(len: usize) -> Result<usize> {
    if len > MAX_PAYLOAD {
        return Err(Error::MessageTooLarge(len));
    }
    let mut size = PAD_BASELINE;
    while size < len + 2 {
        size *= 2;
    }
    Ok(size)
}

pub fn pad(payload: &[u8]) -> Result<Vec<u8>> {
    let size = padded_len(payload.len())?;
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&(payload.len() as u16).to_be_bytes());
    out.extend_from_slice(payload);
    out.resize(size, 0);
    Ok(out)
}

pub fn unpad(padded: &[u8]) -> Result<Vec<u8>> {
    let n = padded.len();
    if n < PAD_BASELINE || !n.is_multiple_of(PAD_BASELINE) || !(n / PAD_BASELINE).is_power_of_two()
    {
        return Err(Error::Malformed("padding size class"));
    }
    let len = u16::from_be_bytes([padded[0], padded[1]]) as usize;
    if len > n - 2 {
        return Err(Error::Malformed("padding length prefix"));
    }
    if padded[2 + len..].iter().any(|b| *b != 0) {
        return Err(Error::Malformed("nonzero padding"));
    }
    if padded_len(len)? != n {
        return Err(Error::Malformed("padding size class"));
    }
    Ok(padded[2..2 + len].to_vec())
}

/// Parents and body of a verified-decrypted data packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plaintext {
    pub parents: Vec<MsgId>,
    pub body: Vec<u8>,
}

pub fn encode_plaintext(parents: &[MsgId], body: &[u8]) -> Result<Vec<u8>> {
    let mut records: Vec<Record> = parents
        .iter()
        .map(|p| Record::new(RecordType::MessageParent, p.0))
        .collect();
    records.push(Record::new(RecordType::MessageBody, body));
    encode_records(&records)
}

pub fn decode_plaintext(bytes: &[u8]) -> Result<Plaintext> {
    let records = crate::codec::decode_records(bytes)?;
    let Some((body, parents)) = records.split_last() else {
        return Err(Error::Malformed("empty plaintext"));
    };
    if !body.is(RecordType::MessageBody) {
        return Err(Error::Malformed("plaintext must end with MESSAGE_BODY"));
    }
    let parents = parents
        .iter()
        .map(|r| {
            if !r.is(RecordType::MessageParent) {
                return Err(Error::Malformed("unexpected plaintext record"));
            }
            <[u8; 32]>::try_from(r.value.as_slice())
                .map(MsgId)
                .map_err(|_| Error::Malformed("parent reference length"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Plaintext {
        parents,
        body: body.value.clone(),
    })
}

fn apply_keystream(key: &[u8; 16], iv: &[u8; IV_LEN], data: &mut [u8]) {
    let mut cipher = Aes128Ctr::new(key.into(), iv.into());
    cipher.apply_keystream(data);
}

fn signed_bytes(binding: &[u8; 32], tail: &[Record]) -> Result<Vec<u8>> {
    let mut m = Vec::with_capacity(DATA_CONTEXT.len() + 32 + 256);
    m.extend_from_slice(DATA_CONTEXT);
    m.extend_from_slice(binding);
    m.extend_from_slice(&encode_records(tail)?);
    Ok(m)
}

pub fn encrypt_message<R: RngCore + CryptoRng>(
    keys: &SubsessionKeys,
    parents: &[MsgId],
    body: &[u8],
    rng: &mut R,
) -> Result<WirePacket> {
    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut iv);
    encrypt_message_with_iv(keys, parents, body, &iv)
}

/// Deterministic variant used for test vectors.
pub fn encrypt_message_with_iv(
    keys: &SubsessionKeys,
    parents: &[MsgId],
    body: &[u8],
    iv: &[u8; IV_LEN],
) -> Result<WirePacket> {
    let mut payload = pad(&encode_plaintext(parents, body)?)?;
    apply_keystream(&keys.group_key, iv, &mut payload);
    let tail = vec![
        Record::new(RecordType::ProtocolVersion, PROTOCOL_VERSION.to_be_bytes()),
        Record::new(RecordType::MessageType, [MessageType::Data as u8]),
        Record::new(RecordType::MessageIv, *iv),
        Record::new(RecordType::MessagePayload, payload),
    ];
    let sig: Signature = keys.own_signing.sign(&signed_bytes(&keys.binding, &tail)?);
    let mut records = vec![
        Record::new(RecordType::SidkeyHint, [keys.hint()]),
        Record::new(RecordType::MessageSignature, sig.to_bytes()),
    ];
    records.extend(tail);
    WirePacket::from_records(records)
}

struct DataFields<'a> {
    hint: u8,
    sig: Signature,
    iv: [u8; IV_LEN],
    payload: &'a [u8],
    tail: &'a [Record],
}

fn parse_data(packet: &WirePacket) -> Result<DataFields<'_>> {
    let r = &packet.records;
    let expected = [
        RecordType::SidkeyHint,
        RecordType::MessageSignature,
        RecordType::ProtocolVersion,
        RecordType::MessageType,
        RecordType::MessageIv,
        RecordType::MessagePayload,
    ];
    if r.len() != expected.len() || r.iter().zip(expected).any(|(rec, t)| !rec.is(t)) {
        return Err(Error::Malformed("data packet record layout"));
    }
    let version = <[u8; 2]>::try_from(r[2].value.as_slice())
        .map_err(|_| Error::Malformed("version length"))?;
    let version = u16::from_be_bytes(version);
    if version != PROTOCOL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if r[3].value != [MessageType::Data as u8] {
        return Err(Error::Malformed("not a data packet"));
    }
    let [hint] = r[0].value.as_slice() else {
        return Err(Error::Malformed("hint length"));
    };
    let sig =
        Signature::from_slice(&r[1].value).map_err(|_| Error::Malformed("signature length"))?;
    let iv = <[u8; IV_LEN]>::try_from(r[4].value.as_slice())
        .map_err(|_| Error::Malformed("iv length"))?;
    Ok(DataFields {
        hint: *hint,
        sig,
        iv,
        payload: &r[5].value,
        tail: &r[2..],
    })
}

/// Checks the signature of a data packet against one subsession without
/// decrypting it.
pub fn verify_data_signature(
    keys: &SubsessionKeys,
    packet: &WirePacket,
    sender: &UserId,
) -> Result<()> {
    let fields = parse_data(packet)?;
    let vk = keys
        .verify_keys
        .get(sender)
        .ok_or(Error::AuthFailure("sender not a member"))?;
    vk.verify(&signed_bytes(&keys.binding, fields.tail)?, &fields.sig)
        .map_err(|_| Error::AuthFailure("data signature"))
}

/// Tries each candidate whose hint matches, verifying before decrypting.
/// Returns the index of the candidate that succeeded.
pub fn verify_decrypt(
    candidates: &[&SubsessionKeys],
    packet: &WirePacket,
    claimed_sender: &UserId,
) -> Result<(usize, Plaintext)> {
    let fields = parse_data(packet)?;
    for (i, keys) in candidates.iter().enumerate() {
        if keys.hint() != fields.hint {
            continue;
        }
        let Some(vk) = keys.verify_keys.get(claimed_sender) else {
            continue;
        };
        let Ok(m) = signed_bytes(&keys.binding, fields.tail) else {
            continue;
        };
        if vk.verify(&m, &fields.sig).is_err() {
            continue;
        }
        let mut plain = fields.payload.to_vec();
        apply_keystream(&keys.group_key, &fields.iv, &mut plain);
        if let Ok(pt) = unpad(&plain).and_then(|p| decode_plaintext(&p)) {
            return Ok((i, pt));
        }
    }
    Err(Error::Undecryptable)
}

/// Like [`verify_decrypt`], but the channel sender is only a hint: a packet
/// relayed by another member is attributed to whichever member's key
/// verifies it. Returns the candidate index and the author.
pub fn verify_decrypt_relayed(
    candidates: &[&SubsessionKeys],
    packet: &WirePacket,
    channel_sender: &UserId,
) -> Result<(usize, UserId, Plaintext)> {
    if let Ok((i, pt)) = verify_decrypt(candidates, packet, channel_sender) {
        return Ok((i, channel_sender.clone(), pt));
    }
    let fields = parse_data(packet)?;
    for (i, keys) in candidates.iter().enumerate() {
        if keys.hint() != fields.hint {
            continue;
        }
        let Ok(m) = signed_bytes(&keys.binding, fields.tail) else {
            continue;
        };
        let author = keys
            .verify_keys
            .iter()
            .find(|(id, vk)| *id != channel_sender && vk.verify(&m, &fields.sig).is_ok())
            .map(|(id, _)| id.clone());
        let Some(author) = author else { continue };
        let mut plain = fields.payload.to_vec();
        apply_keystream(&keys.group_key, &fields.iv, &mut plain);
        if let Ok(pt) = unpad(&plain).and_then(|p| decode_plaintext(&p)) {
            return Ok((i, author, pt));
        }
    }
    Err(Error::Undecryptable)
}

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

//! Membership-change operations.
//!
//! One operation runs the group key agreement and the signature key exchange
//! side by side over the same packets. Establish and include start with an
//! upflow chain; exclude and refresh start directly with the first downflow.
//! Every participant other than the first downflow's sender then broadcasts
//! one acknowledgement carrying its session signature, except for refresh,
//! which is a single packet.

use std::collections::BTreeSet;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::aske::{AskeState, Nonce, SessionSignature};
use crate::codec::{
    encode_records, MessageType, PacketId, Record, RecordType, WirePacket, PROTOCOL_VERSION,
};
use crate::error::{Error, Result};
use crate::gka::{DownflowPayload, Flow, GkaState, Point, UpflowPayload};
use crate::identity::IdentityProvider;
use crate::message_security::SubsessionKeys;
use crate::transcript::MsgId;
use crate::types::{all_distinct, UserId};

pub const GREETING_CONTEXT: &[u8] = b"greetmsgsig";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum OpKind {
    Establish = 0x01,
    Include = 0x02,
    Exclude = 0x03,
    Refresh = 0x04,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Establish => "establish",
            OpKind::Include => "include",
            OpKind::Exclude => "exclude",
            OpKind::Refresh => "refresh",
        }
    }

    /// Whether the operation's first packet is an upflow.
    pub fn has_upflow(self) -> bool {
        matches!(self, OpKind::Establish | OpKind::Include)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Stage {
    Upflow = 0x01,
    DownflowInit = 0x02,
    DownflowAck = 0x03,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Upflow => "upflow",
            Stage::DownflowInit => "downflow-init",
            Stage::DownflowAck => "downflow-ack",
        }
    }
}

/// The GREET_TYPE record: operation kind in the high byte, stage in the low.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GreetType {
    pub kind: OpKind,
    pub stage: Stage,
}

impl GreetType {
    pub fn new(kind: OpKind, stage: Stage) -> Result<Self> {
        if !kind.has_upflow() && stage == Stage::Upflow {
            return Err(Error::ProtocolViolation("operation has no upflow stage"));
        }
        if kind == OpKind::Refresh && stage == Stage::DownflowAck {
            return Err(Error::ProtocolViolation("refresh has no acknowledgements"));
        }
        Ok(GreetType { kind, stage })
    }

    pub fn to_u16(self) -> u16 {
        ((self.kind as u16) << 8) | self.stage as u16
    }

    pub fn from_u16(v: u16) -> Result<Self> {
        let kind = match v >> 8 {
            0x01 => OpKind::Establish,
            0x02 => OpKind::Include,
            0x03 => OpKind::Exclude,
            0x04 => OpKind::Refresh,
            _ => return Err(Error::Malformed("unknown operation kind")),
        };
        let stage = match v & 0xff {
            0x01 => Stage::Upflow,
            0x02 => Stage::DownflowInit,
            0x03 => Stage::DownflowAck,
            _ => return Err(Error::Malformed("unknown greeting stage")),
        };
        GreetType::new(kind, stage)
    }
}

impl std::fmt::Display for GreetType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.kind.as_str(), self.stage.as_str())
    }
}

/// Decoded content of a greeting packet, before any signature checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreetingFields {
    pub greet_type: GreetType,
    pub source: UserId,
    pub dest: Option<UserId>,
    pub members: Vec<UserId>,
    pub int_keys: Vec<Point>,
    pub nonces: Vec<Nonce>,
    pub pub_keys: Vec<VerifyingKey>,
    pub prev_pf: Option<[u8; 32]>,
    pub chain_hash: Option<[u8; 32]>,
    pub latest_pm: Vec<MsgId>,
    pub session_signature: Option<Signature>,
}

impl GreetingFields {
    /// The first packet of an operation carries PREV_PF.
    pub fn is_initial(&self) -> bool {
        self.prev_pf.is_some()
    }

    fn index_of(&self, id: &UserId) -> Option<usize> {
        self.members.iter().position(|m| m == id)
    }

    /// The sender's ephemeral key as carried in this packet.
    pub fn source_pub_key(&self) -> Option<&VerifyingKey> {
        self.index_of(&self.source)
            .and_then(|i| self.pub_keys.get(i))
    }

    fn validate(&self) -> std::result::Result<(), &'static str> {
        let n = self.members.len();
        if n == 0 || !all_distinct(&self.members) {
            return Err("member list empty or repeated");
        }
        if self.index_of(&self.source).is_none() {
            return Err("source not a member");
        }
        if self.prev_pf.is_some() != self.chain_hash.is_some() {
            return Err("PREV_PF and CHAIN_HASH must appear together");
        }
        if !self.latest_pm.is_empty() && !self.is_initial() {
            return Err("LATEST_PM only on initial packets");
        }
        let kind = self.greet_type.kind;
        match self.greet_type.stage {
            Stage::Upflow => {
                let k = self.nonces.len();
                let Some(dest) = &self.dest else {
                    return Err("upflow needs DEST");
                };
                if self.pub_keys.len() != k || k == 0 || k >= n || self.int_keys.len() != k + 1 {
                    return Err("upflow key counts");
                }
                if *dest != self.members[k] {
                    return Err("upflow DEST is not the next member");
                }
                if self.session_signature.is_some() {
                    return Err("upflow carries no session signature");
                }
                if self.is_initial() {
                    if kind == OpKind::Establish && (k != 1 || self.source != self.members[0]) {
                        return Err("establish starts at the first member");
                    }
                    if self.index_of(&self.source).is_some_and(|i| i >= k) {
                        return Err("include initiator must be an existing member");
                    }
                } else if self.source != self.members[k - 1] {
                    return Err("upflow source is not the previous member");
                }
            }
            Stage::DownflowInit => {
                if self.dest.is_some() {
                    return Err("downflow is broadcast");
                }
                if self.int_keys.len() != n || self.nonces.len() != n || self.pub_keys.len() != n {
                    return Err("downflow key counts");
                }
                if self.session_signature.is_none() {
                    return Err("downflow needs a session signature");
                }
                if self.is_initial() == kind.has_upflow() {
                    return Err("PREV_PF placement does not match operation kind");
                }
                if kind.has_upflow() && self.source != self.members[n - 1] {
                    return Err("downflow must come from the last upflow member");
                }
            }
            Stage::DownflowAck => {
                if self.dest.is_some() {
                    return Err("acknowledgement is broadcast");
                }
                if !self.int_keys.is_empty() || !self.nonces.is_empty() || !self.pub_keys.is_empty()
                {
                    return Err("acknowledgement carries no key material");
                }
                if self.session_signature.is_none() {
                    return Err("acknowledgement needs a session signature");
                }
                if self.is_initial() {
                    return Err("acknowledgement cannot start an operation");
                }
            }
        }
        Ok(())
    }

    fn tail_records(&self) -> Vec<Record> {
        let mut r = vec![
            Record::new(RecordType::ProtocolVersion, PROTOCOL_VERSION.to_be_bytes()),
            Record::new(RecordType::MessageType, [MessageType::Greeting as u8]),
            Record::new(
                RecordType::GreetType,
                self.greet_type.to_u16().to_be_bytes(),
            ),
            Record::new(RecordType::Source, self.source.as_bytes()),
        ];
        if let Some(d) = &self.dest {
            r.push(Record::new(RecordType::Dest, d.as_bytes()));
        }
        r.extend(
            self.members
                .iter()
                .map(|m| Record::new(RecordType::Member, m.as_bytes())),
        );
        r.extend(
            self.int_keys
                .iter()
                .map(|k| Record::new(RecordType::IntKey, *k)),
        );
        r.extend(
            self.nonces
                .iter()
                .map(|k| Record::new(RecordType::Nonce, *k)),
        );
        r.extend(
            self.pub_keys
                .iter()
                .map(|k| Record::new(RecordType::PubKey, k.to_bytes())),
        );
        if let Some(p) = &self.prev_pf {
            r.push(Record::new(RecordType::PrevPf, *p));
        }
        if let Some(c) = &self.chain_hash {
            r.push(Record::new(RecordType::ChainHash, *c));
        }
        r.extend(
            self.latest_pm
                .iter()
                .map(|m| Record::new(RecordType::LatestPm, m.0)),
        );
        if let Some(s) = &self.session_signature {
            r.push(Record::new(RecordType::SessionSignature, s.to_bytes()));
        }
        r
    }
}

fn greeting_signed_bytes(tail: &[Record]) -> Result<Vec<u8>> {
    let mut m = GREETING_CONTEXT.to_vec();
    m.extend_from_slice(&encode_records(tail)?);
    Ok(m)
}

/// Builds a greeting packet signed with the sender's ephemeral key.
pub fn encode_greeting(fields: &GreetingFields, eph: &SigningKey) -> Result<WirePacket> {
    fields.validate().map_err(Error::ProtocolViolation)?;
    let tail = fields.tail_records();
    let sig = eph.sign(&greeting_signed_bytes(&tail)?);
    let mut records = vec![Record::new(RecordType::MessageSignature, sig.to_bytes())];
    records.extend(tail);
    WirePacket::from_records(records)
}

const LAYOUT: [(RecordType, usize, usize); 14] = [
    (RecordType::MessageSignature, 1, 1),
    (RecordType::ProtocolVersion, 1, 1),
    (RecordType::MessageType, 1, 1),
    (RecordType::GreetType, 1, 1),
    (RecordType::Source, 1, 1),
    (RecordType::Dest, 0, 1),
    (RecordType::Member, 1, usize::MAX),
    (RecordType::IntKey, 0, usize::MAX),
    (RecordType::Nonce, 0, usize::MAX),
    (RecordType::PubKey, 0, usize::MAX),
    (RecordType::PrevPf, 0, 1),
    (RecordType::ChainHash, 0, 1),
    (RecordType::LatestPm, 0, usize::MAX),
    (RecordType::SessionSignature, 0, 1),
];

fn check_layout(records: &[Record]) -> Result<()> {
    let mut counts = [0usize; LAYOUT.len()];
    let mut slot = 0;
    for r in records {
        while slot < LAYOUT.len() && LAYOUT[slot].0.code() != r.rtype {
            slot += 1;
        }
        if slot == LAYOUT.len() {
            return Err(Error::Malformed("greeting records out of order"));
        }
        counts[slot] += 1;
        if counts[slot] > LAYOUT[slot].2 {
            return Err(Error::Malformed("greeting record repeated"));
        }
    }
    if LAYOUT.iter().zip(counts).any(|((_, min, _), c)| c < *min) {
        return Err(Error::Malformed("greeting record missing"));
    }
    Ok(())
}

fn fixed<const N: usize>(r: &Record, what: &'static str) -> Result<[u8; N]> {
    <[u8; N]>::try_from(r.value.as_slice()).map_err(|_| Error::Malformed(what))
}

fn user_id(r: &Record) -> Result<UserId> {
    String::from_utf8(r.value.clone())
        .map(UserId::from)
        .map_err(|_| Error::Malformed("member id is not UTF-8"))
}

/// Structural decode. Signatures are left for [`verify_greeting`] and the
/// operation state machine.
pub fn parse_greeting(packet: &WirePacket) -> Result<GreetingFields> {
    let records = &packet.records;
    // Version and type are checked first so unknown versions are reported
    // as such rather than as layout errors.
    if let Some(v) = records.get(1).filter(|r| r.is(RecordType::ProtocolVersion)) {
        let v = u16::from_be_bytes(fixed::<2>(v, "version length")?);
        if v != PROTOCOL_VERSION {
            return Err(Error::UnsupportedVersion(v));
        }
    }
    check_layout(records)?;
    if records[2].value != [MessageType::Greeting as u8] {
        return Err(Error::Malformed("not a greeting"));
    }
    let greet_type = GreetType::from_u16(u16::from_be_bytes(fixed::<2>(
        &records[3],
        "greet type length",
    )?))?;
    let mut f = GreetingFields {
        greet_type,
        source: user_id(&records[4])?,
        dest: None,
        members: Vec::new(),
        int_keys: Vec::new(),
        nonces: Vec::new(),
        pub_keys: Vec::new(),
        prev_pf: None,
        chain_hash: None,
        latest_pm: Vec::new(),
        session_signature: None,
    };
    for r in &records[5..] {
        match RecordType::from_code(r.rtype) {
            Some(RecordType::Dest) => f.dest = Some(user_id(r)?),
            Some(RecordType::Member) => f.members.push(user_id(r)?),
            Some(RecordType::IntKey) => f.int_keys.push(fixed(r, "intermediate key length")?),
            Some(RecordType::Nonce) => f.nonces.push(fixed(r, "nonce length")?),
            Some(RecordType::PubKey) => f.pub_keys.push(
                VerifyingKey::from_bytes(&fixed(r, "public key length")?)
                    .map_err(|_| Error::Malformed("invalid public key"))?,
            ),
            Some(RecordType::PrevPf) => f.prev_pf = Some(fixed(r, "PREV_PF length")?),
            Some(RecordType::ChainHash) => f.chain_hash = Some(fixed(r, "CHAIN_HASH length")?),
            Some(RecordType::LatestPm) => f.latest_pm.push(MsgId(fixed(r, "LATEST_PM length")?)),
            Some(RecordType::SessionSignature) => {
                f.session_signature = Some(Signature::from_bytes(&fixed(r, "signature length")?))
            }
            _ => return Err(Error::Malformed("unexpected greeting record")),
        }
    }
    f.validate().map_err(Error::ProtocolViolation)?;
    Ok(f)
}

/// Checks MESSAGE_SIGNATURE against the sender's ephemeral key.
pub fn verify_greeting(packet: &WirePacket, eph: &VerifyingKey) -> Result<()> {
    let first = packet
        .records
        .first()
        .ok_or(Error::Malformed("empty packet"))?;
    if !first.is(RecordType::MessageSignature) {
        return Err(Error::Malformed("greeting must start with its signature"));
    }
    let sig =
        Signature::from_slice(&first.value).map_err(|_| Error::Malformed("signature length"))?;
    eph.verify(&greeting_signed_bytes(&packet.records[1..])?, &sig)
        .map_err(|_| Error::AuthFailure("greeting signature"))
}

/// What the resolver needs to know about an initial packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialInfo {
    pub kind: OpKind,
    pub source: UserId,
    pub members: Vec<UserId>,
    pub prev_pf: [u8; 32],
    pub chain_hash: [u8; 32],
    pub latest_pm: Vec<MsgId>,
}

/// Extracts resolver metadata from a packet if it starts an operation.
pub fn greeter_codec_initial(packet: &WirePacket) -> Option<InitialInfo> {
    if packet.message_type() != Some(MessageType::Greeting) {
        return None;
    }
    let f = parse_greeting(packet).ok()?;
    Some(InitialInfo {
        kind: f.greet_type.kind,
        source: f.source,
        members: f.members,
        prev_pf: f.prev_pf?,
        chain_hash: f.chain_hash?,
        latest_pm: f.latest_pm,
    })
}

/// The long-lived key agreement state of one subsession member.
#[derive(Debug, Clone)]
pub struct AgreementState {
    pub gka: GkaState,
    pub aske: AskeState,
}

impl AgreementState {
    pub fn members(&self) -> &[UserId] {
        self.gka.members()
    }

    pub fn is_complete(&self) -> bool {
        self.gka.is_complete() && self.aske.is_complete()
    }

    pub fn subsession_keys(&self) -> Result<SubsessionKeys> {
        let gk = self
            .gka
            .group_key()
            .ok_or(Error::Incomplete("no group key"))?;
        let sid = *self.aske.sid().ok_or(Error::Incomplete("no session id"))?;
        let signing = self
            .aske
            .own_signing_key()
            .ok_or(Error::Incomplete("no ephemeral key"))?
            .clone();
        if self.aske.pids() != self.gka.members() {
            return Err(Error::ProtocolViolation(
                "key agreement and key exchange disagree on members",
            ));
        }
        let verify_keys = self
            .aske
            .pids()
            .iter()
            .cloned()
            .zip(self.aske.eph_pubs().iter().copied())
            .collect();
        Ok(SubsessionKeys::new(
            sid,
            gk,
            self.gka.members().to_vec(),
            self.gka.own_id().clone(),
            signing,
            verify_keys,
        ))
    }
}

/// Static inputs a member needs while running an operation.
pub struct GreetCtx<'a> {
    pub identity: &'a SigningKey,
    pub directory: &'a dyn IdentityProvider,
}

/// Parameters for proposing an operation.
#[derive(Debug, Clone)]
pub struct Proposal<'a> {
    pub kind: OpKind,
    pub include: &'a [UserId],
    pub exclude: &'a [UserId],
    pub prev_pf: [u8; 32],
    pub chain_hash: [u8; 32],
    pub latest_pm: Vec<MsgId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GreetingStatus {
    InProgress,
    Succeeded,
    Failed(Error),
}

/// One member's view of one operation.
#[derive(Debug, Clone)]
pub struct Greeting {
    kind: OpKind,
    own_id: UserId,
    initiator: UserId,
    targets: Vec<UserId>,
    initial_id: Option<PacketId>,
    agreement: AgreementState,
    downflow_from: Option<UserId>,
    acks_expected: BTreeSet<UserId>,
    acks_seen: BTreeSet<UserId>,
    status: GreetingStatus,
    final_packet: Option<PacketId>,
    packets_seen: usize,
}

impl Greeting {
    /// Prepares our own proposal and its initial packet. The proposal only
    /// starts running once the channel echoes the initial packet back and the
    /// resolver accepts it.
    pub fn propose<R: RngCore + CryptoRng>(
        own_id: &UserId,
        current: Option<&AgreementState>,
        p: &Proposal<'_>,
        ctx: &GreetCtx<'_>,
        rng: &mut R,
    ) -> Result<(Greeting, WirePacket)> {
        if p.exclude.contains(own_id) {
            return Err(Error::SelfExclusion);
        }
        let (agreement, mut fields) = match p.kind {
            OpKind::Establish => {
                if p.include.is_empty() {
                    return Err(Error::InvalidMembers("nobody to establish with"));
                }
                let mut members = vec![own_id.clone()];
                members.extend_from_slice(p.include);
                let (gka, up) = GkaState::ika_initiate(own_id.clone(), members.clone(), rng)?;
                let aske = AskeState::new(own_id.clone())
                    .with_collected(members.clone(), vec![], vec![])?
                    .upflow_step(rng)?;
                let fields = upflow_fields(OpKind::Establish, own_id, &up, &aske);
                (AgreementState { gka, aske }, fields)
            }
            OpKind::Include => {
                let cur = current.ok_or(Error::Incomplete("include needs a running agreement"))?;
                let (gka, up) = cur.gka.aka_include(p.include, rng)?;
                let aske = cur.aske.include(p.include)?;
                let fields = upflow_fields(OpKind::Include, own_id, &up, &aske);
                (AgreementState { gka, aske }, fields)
            }
            OpKind::Exclude | OpKind::Refresh => {
                let cur =
                    current.ok_or(Error::Incomplete("operation needs a running agreement"))?;
                let (gka, down, aske) = if p.kind == OpKind::Exclude {
                    let (gka, down) = cur.gka.aka_exclude(p.exclude, rng)?;
                    (gka, down, cur.aske.exclude(p.exclude, rng)?)
                } else {
                    let (gka, down) = cur.gka.aka_refresh(rng)?;
                    (gka, down, cur.aske.clone())
                };
                let sig = aske.own_session_signature(ctx.identity)?;
                let fields = downflow_fields(p.kind, own_id, &down, &aske, sig.sig);
                (AgreementState { gka, aske }, fields)
            }
        };
        fields.prev_pf = Some(p.prev_pf);
        fields.chain_hash = Some(p.chain_hash);
        fields.latest_pm = p.latest_pm.clone();
        let eph = agreement
            .aske
            .own_signing_key()
            .ok_or(Error::Incomplete("no ephemeral key"))?;
        let packet = encode_greeting(&fields, eph)?;
        let g = Greeting::new(
            p.kind,
            own_id.clone(),
            own_id.clone(),
            fields.members.clone(),
            agreement,
        );
        Ok((g, packet))
    }

    /// Sets up a non-initiating participant from an accepted initial packet.
    /// `current` is our agreement state if we are already a member.
    pub fn from_initial(
        own_id: &UserId,
        current: Option<&AgreementState>,
        fields: &GreetingFields,
    ) -> Result<Greeting> {
        if !fields.is_initial() {
            return Err(Error::ProtocolViolation("not an initial packet"));
        }
        let kind = fields.greet_type.kind;
        let own_idx = fields
            .index_of(own_id)
            .ok_or(Error::InvalidMembers("not a participant"))?;
        let existing_member = match kind {
            OpKind::Establish => false,
            OpKind::Include => own_idx < fields.nonces.len(),
            OpKind::Exclude | OpKind::Refresh => true,
        };
        let agreement = if existing_member {
            let cur = current.ok_or(Error::Incomplete("no agreement to continue from"))?;
            if !cur.members().contains(&fields.source) {
                return Err(Error::ProtocolViolation(
                    "initiator is not in our subsession",
                ));
            }
            cur.clone()
        } else {
            AgreementState {
                gka: GkaState::new(own_id.clone()),
                aske: AskeState::new(own_id.clone()),
            }
        };
        Ok(Greeting::new(
            kind,
            own_id.clone(),
            fields.source.clone(),
            fields.members.clone(),
            agreement,
        ))
    }

    fn new(
        kind: OpKind,
        own_id: UserId,
        initiator: UserId,
        targets: Vec<UserId>,
        agreement: AgreementState,
    ) -> Self {
        Greeting {
            kind,
            own_id,
            initiator,
            targets,
            initial_id: None,
            agreement,
            downflow_from: None,
            acks_expected: BTreeSet::new(),
            acks_seen: BTreeSet::new(),
            status: GreetingStatus::InProgress,
            final_packet: None,
            packets_seen: 0,
        }
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn initiator(&self) -> &UserId {
        &self.initiator
    }

    /// The membership this operation will produce.
    pub fn targets(&self) -> &[UserId] {
        &self.targets
    }

    pub fn initial_id(&self) -> Option<&PacketId> {
        self.initial_id.as_ref()
    }

    pub fn status(&self) -> &GreetingStatus {
        &self.status
    }

    pub fn is_done(&self) -> bool {
        self.status != GreetingStatus::InProgress
    }

    pub fn final_packet(&self) -> Option<&PacketId> {
        self.final_packet.as_ref()
    }

    pub fn packets_seen(&self) -> usize {
        self.packets_seen
    }

    /// Members whose acknowledgement is still outstanding, once the first
    /// downflow is known.
    pub fn missing_acks(&self) -> BTreeSet<UserId> {
        self.acks_expected
            .difference(&self.acks_seen)
            .cloned()
            .collect()
    }

    pub fn agreement(&self) -> Option<&AgreementState> {
        (self.status == GreetingStatus::Succeeded).then_some(&self.agreement)
    }

    /// The resulting keys, only after success.
    pub fn result(&self) -> Option<Result<SubsessionKeys>> {
        match &self.status {
            GreetingStatus::InProgress => None,
            GreetingStatus::Succeeded => Some(self.agreement.subsession_keys()),
            GreetingStatus::Failed(e) => Some(Err(e.clone())),
        }
    }

    /// Marks the operation failed and drops the working key state.
    pub fn fail(&mut self, e: Error) {
        if self.status == GreetingStatus::InProgress {
            self.status = GreetingStatus::Failed(e);
            self.agreement = AgreementState {
                gka: GkaState::new(self.own_id.clone()),
                aske: AskeState::new(self.own_id.clone()),
            };
        }
    }

    /// Feeds one packet of this operation, in channel order, and returns the
    /// packets we must send in response. Any error fails the operation.
    pub fn recv<R: RngCore + CryptoRng>(
        &mut self,
        sender: &UserId,
        packet: &WirePacket,
        fields: &GreetingFields,
        ctx: &GreetCtx<'_>,
        rng: &mut R,
    ) -> Result<Vec<WirePacket>> {
        if self.is_done() {
            return Ok(Vec::new());
        }
        match self.step(sender, packet, fields, ctx, rng) {
            Ok(out) => {
                self.packets_seen += 1;
                if fields.is_initial() {
                    self.initial_id = Some(packet.id);
                }
                self.check_done(packet.id);
                Ok(out)
            }
            Err(e) => {
                self.fail(e.clone());
                Err(e)
            }
        }
    }

    fn step<R: RngCore + CryptoRng>(
        &mut self,
        sender: &UserId,
        packet: &WirePacket,
        f: &GreetingFields,
        ctx: &GreetCtx<'_>,
        rng: &mut R,
    ) -> Result<Vec<WirePacket>> {
        if *sender != f.source {
            return Err(Error::AuthFailure("SOURCE does not match channel sender"));
        }
        if f.greet_type.kind != self.kind {
            return Err(Error::ProtocolViolation("operation kind changed"));
        }
        if f.members != self.targets {
            return Err(Error::ProtocolViolation("member list changed"));
        }
        if f.is_initial() != (self.packets_seen == 0) {
            return Err(Error::ProtocolViolation("initial packet out of place"));
        }
        let own = sender == &self.own_id;
        match f.greet_type.stage {
            Stage::Upflow => {
                if own {
                    return Ok(Vec::new());
                }
                let vk = f
                    .source_pub_key()
                    .ok_or(Error::Malformed("upflow lacks sender key"))?;
                verify_greeting(packet, vk)?;
                if f.dest.as_ref() != Some(&self.own_id) {
                    return Ok(Vec::new());
                }
                let up = UpflowPayload {
                    members: f.members.clone(),
                    int_keys: f.int_keys.clone(),
                };
                let (gka, flow) = self.agreement.gka.ika_upflow(&up, rng)?;
                let aske = self
                    .agreement
                    .aske
                    .with_collected(f.members.clone(), f.nonces.clone(), f.pub_keys.clone())?
                    .upflow_step(rng)?;
                let fields = match flow {
                    Flow::Up(u) => upflow_fields(self.kind, &self.own_id, &u, &aske),
                    Flow::Down(d) => {
                        let sig = aske.own_session_signature(ctx.identity)?;
                        downflow_fields(self.kind, &self.own_id, &d, &aske, sig.sig)
                    }
                };
                let eph = aske.own_signing_key().expect("just contributed").clone();
                self.agreement = AgreementState { gka, aske };
                Ok(vec![encode_greeting(&fields, &eph)?])
            }
            Stage::DownflowInit => {
                if self.downflow_from.is_some() {
                    return Err(Error::ProtocolViolation("second downflow"));
                }
                let mut out = Vec::new();
                if !own {
                    let vk = f
                        .source_pub_key()
                        .ok_or(Error::Malformed("downflow lacks sender key"))?;
                    verify_greeting(packet, vk)?;
                    let down = DownflowPayload {
                        members: f.members.clone(),
                        int_keys: f.int_keys.clone(),
                    };
                    let gka = self.agreement.gka.downflow_recv(&down)?;
                    let mut aske = if self.kind == OpKind::Refresh {
                        let cur = &self.agreement.aske;
                        if cur.pids() != f.members
                            || cur.nonces() != f.nonces
                            || cur.eph_pubs() != f.pub_keys
                        {
                            return Err(Error::AuthFailure("refresh altered the key exchange"));
                        }
                        cur.clone()
                    } else {
                        self.agreement.aske.downflow_recv(
                            f.members.clone(),
                            f.nonces.clone(),
                            f.pub_keys.clone(),
                        )?
                    };
                    let sig = f
                        .session_signature
                        .ok_or(Error::Malformed("missing session signature"))?;
                    let static_pub = ctx
                        .directory
                        .static_key(sender)
                        .ok_or(Error::AuthFailure("unknown identity"))?;
                    aske.verify_session_signature(
                        &SessionSignature {
                            signer: sender.clone(),
                            sig,
                        },
                        &static_pub,
                    )?;
                    if self.kind != OpKind::Refresh {
                        let own_sig = aske.own_session_signature(ctx.identity)?;
                        let fields =
                            ack_fields(self.kind, &self.own_id, &self.targets, own_sig.sig);
                        let eph = aske
                            .own_signing_key()
                            .ok_or(Error::Incomplete("no ephemeral key"))?;
                        out.push(encode_greeting(&fields, eph)?);
                    }
                    self.agreement = AgreementState { gka, aske };
                }
                self.downflow_from = Some(sender.clone());
                if self.kind != OpKind::Refresh {
                    self.acks_expected = self
                        .targets
                        .iter()
                        .filter(|m| *m != sender)
                        .cloned()
                        .collect();
                }
                Ok(out)
            }
            Stage::DownflowAck => {
                if self.downflow_from.is_none() {
                    return Err(Error::ProtocolViolation("acknowledgement before downflow"));
                }
                if !self.acks_expected.contains(sender) || self.acks_seen.contains(sender) {
                    return Err(Error::ProtocolViolation("unexpected acknowledgement"));
                }
                if !own {
                    let vk = *self
                        .agreement
                        .aske
                        .eph_pub_of(sender)
                        .ok_or(Error::AuthFailure("unknown sender"))?;
                    verify_greeting(packet, &vk)?;
                    let sig = f
                        .session_signature
                        .ok_or(Error::Malformed("missing session signature"))?;
                    let static_pub = ctx
                        .directory
                        .static_key(sender)
                        .ok_or(Error::AuthFailure("unknown identity"))?;
                    self.agreement.aske.verify_session_signature(
                        &SessionSignature {
                            signer: sender.clone(),
                            sig,
                        },
                        &static_pub,
                    )?;
                }
                self.acks_seen.insert(sender.clone());
                Ok(Vec::new())
            }
        }
    }

    fn check_done(&mut self, last: PacketId) {
        if self.downflow_from.is_some() && self.acks_seen == self.acks_expected {
            if self.agreement.is_complete() {
                self.status = GreetingStatus::Succeeded;
                self.final_packet = Some(last);
            } else {
                self.fail(Error::Incomplete(
                    "acknowledgements complete but agreement is not",
                ));
            }
        }
    }
}

fn upflow_fields(
    kind: OpKind,
    own: &UserId,
    up: &UpflowPayload,
    aske: &AskeState,
) -> GreetingFields {
    GreetingFields {
        greet_type: GreetType {
            kind,
            stage: Stage::Upflow,
        },
        source: own.clone(),
        dest: Some(up.members[aske.nonces().len()].clone()),
        members: up.members.clone(),
        int_keys: up.int_keys.clone(),
        nonces: aske.nonces().to_vec(),
        pub_keys: aske.eph_pubs().to_vec(),
        prev_pf: None,
        chain_hash: None,
        latest_pm: Vec::new(),
        session_signature: None,
    }
}

fn downflow_fields(
    kind: OpKind,
    own: &UserId,
    down: &DownflowPayload,
    aske: &AskeState,
    sig: Signature,
) -> GreetingFields {
    GreetingFields {
        greet_type: GreetType {
            kind,
            stage: Stage::DownflowInit,
        },
        source: own.clone(),
        dest: None,
        members: down.members.clone(),
        int_keys: down.int_keys.clone(),
        nonces: aske.nonces().to_vec(),
        pub_keys: aske.eph_pubs().to_vec(),
        prev_pf: None,
        chain_hash: None,
        latest_pm: Vec::new(),
        session_signature: Some(sig),
    }
}

fn ack_fields(kind: OpKind, own: &UserId, members: &[UserId], sig: Signature) -> GreetingFields {
    GreetingFields {
        greet_type: GreetType {
            kind,
            stage: Stage::DownflowAck,
        },
        source: own.clone(),
        dest: None,
        members: members.to_vec(),
        int_keys: Vec::new(),
        nonces: Vec::new(),
        pub_keys: Vec::new(),
        prev_pf: None,
        chain_hash: None,
        latest_pm: Vec::new(),
        session_signature: Some(sig),
    }
}

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

//! Authenticated signature key exchange.
//!
//! Each member contributes a nonce and an ephemeral ed25519 key during the
//! upflow. Once all nonces are known every member derives the session ID and
//! signs an authenticator over its own contribution with its static identity
//! key. A member accepts the session once every other member's session
//! signature verifies against the locally computed values.

use std::collections::BTreeSet;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{all_distinct, UserId};

pub const NONCE_LEN: usize = 32;
pub const ACK_CONTEXT: &[u8] = b"acksig";

pub type Nonce = [u8; NONCE_LEN];
pub type SessionId = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSignature {
    pub signer: UserId,
    pub sig: Signature,
}

#[derive(Clone)]
pub struct AskeState {
    own_id: UserId,
    pids: Vec<UserId>,
    nonces: Vec<Nonce>,
    eph_pub: Vec<VerifyingKey>,
    own_eph: Option<SigningKey>,
    own_nonce: Option<Nonce>,
    sid: Option<SessionId>,
    verified: BTreeSet<UserId>,
}

impl std::fmt::Debug for AskeState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AskeState")
            .field("own_id", &self.own_id)
            .field("pids", &self.pids)
            .field("nonces", &self.nonces.len())
            .field("sid", &self.sid.map(hex::encode))
            .field("verified", &self.verified)
            .finish_non_exhaustive()
    }
}

impl AskeState {
    pub fn new(own_id: UserId) -> Self {
        AskeState {
            own_id,
            pids: Vec::new(),
            nonces: Vec::new(),
            eph_pub: Vec::new(),
            own_eph: None,
            own_nonce: None,
            sid: None,
            verified: BTreeSet::new(),
        }
    }

    pub fn own_id(&self) -> &UserId {
        &self.own_id
    }

    pub fn pids(&self) -> &[UserId] {
        &self.pids
    }

    pub fn nonces(&self) -> &[Nonce] {
        &self.nonces
    }

    pub fn eph_pubs(&self) -> &[VerifyingKey] {
        &self.eph_pub
    }

    pub fn own_signing_key(&self) -> Option<&SigningKey> {
        self.own_eph.as_ref()
    }

    pub fn own_nonce(&self) -> Option<&Nonce> {
        self.own_nonce.as_ref()
    }

    pub fn sid(&self) -> Option<&SessionId> {
        self.sid.as_ref()
    }

    pub fn verified(&self) -> &BTreeSet<UserId> {
        &self.verified
    }

    fn index_of(&self, pid: &UserId) -> Option<usize> {
        self.pids.iter().position(|p| p == pid)
    }

    pub fn eph_pub_of(&self, pid: &UserId) -> Option<&VerifyingKey> {
        self.index_of(pid).and_then(|i| self.eph_pub.get(i))
    }

    /// Replaces the member list and the contributions collected so far, as
    /// carried by an upflow packet. Clears any previous session ID.
    pub fn with_collected(
        &self,
        pids: Vec<UserId>,
        nonces: Vec<Nonce>,
        eph_pub: Vec<VerifyingKey>,
    ) -> Result<Self> {
        if !all_distinct(&pids) {
            return Err(Error::InvalidMembers("duplicate members"));
        }
        if nonces.len() != eph_pub.len() || nonces.len() > pids.len() {
            return Err(Error::Malformed("nonce and key counts"));
        }
        let mut next = self.clone();
        next.pids = pids;
        next.nonces = nonces;
        next.eph_pub = eph_pub;
        next.sid = None;
        next.verified.clear();
        Ok(next)
    }

    /// Phase 1: appends a fresh nonce and ephemeral key at our index.
    pub fn upflow_step<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<Self> {
        let idx = self
            .index_of(&self.own_id)
            .ok_or(Error::InvalidMembers("not a participant"))?;
        if self.nonces.len() > idx {
            return Err(Error::AlreadyContributed);
        }
        if self.nonces.len() != idx {
            return Err(Error::NotMyTurn);
        }
        let mut next = self.clone();
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let eph = SigningKey::generate(rng);
        next.nonces.push(nonce);
        next.eph_pub.push(eph.verifying_key());
        next.own_nonce = Some(nonce);
        next.own_eph = Some(eph);
        if next.nonces.len() == next.pids.len() {
            next.sid = Some(compute_sid(&next.pids, &next.nonces)?);
        }
        Ok(next)
    }

    /// Accepts the completed lists from the first downflow. Our own slot
    /// must hold exactly what we contributed.
    pub fn downflow_recv(
        &self,
        pids: Vec<UserId>,
        nonces: Vec<Nonce>,
        eph_pub: Vec<VerifyingKey>,
    ) -> Result<Self> {
        if nonces.len() != pids.len() || eph_pub.len() != pids.len() {
            return Err(Error::Incomplete("downflow lists must be complete"));
        }
        let next = self.with_collected(pids, nonces, eph_pub)?;
        let idx = next
            .index_of(&next.own_id)
            .ok_or(Error::InvalidMembers("not a participant"))?;
        let (Some(own_nonce), Some(own_eph)) = (&self.own_nonce, &self.own_eph) else {
            return Err(Error::Incomplete("no own contribution"));
        };
        if next.nonces[idx] != *own_nonce || next.eph_pub[idx] != own_eph.verifying_key() {
            return Err(Error::AuthFailure("own contribution altered"));
        }
        let mut next = next;
        next.sid = Some(compute_sid(&next.pids, &next.nonces)?);
        Ok(next)
    }

    /// Extends the member list for an include; existing contributions stay.
    pub fn include(&self, new_members: &[UserId]) -> Result<Self> {
        if self.sid.is_none() {
            return Err(Error::Incomplete("include requires a completed exchange"));
        }
        let mut pids = self.pids.clone();
        pids.extend_from_slice(new_members);
        self.with_collected(pids, self.nonces.clone(), self.eph_pub.clone())
    }

    /// Removes `departing` and refreshes our own nonce, so the new session
    /// ID cannot collide with an earlier one over the same membership.
    pub fn exclude<R: RngCore + CryptoRng>(
        &self,
        departing: &[UserId],
        rng: &mut R,
    ) -> Result<Self> {
        if self.sid.is_none() {
            return Err(Error::Incomplete("exclude requires a completed exchange"));
        }
        if departing.contains(&self.own_id) {
            return Err(Error::SelfExclusion);
        }
        if departing.iter().any(|d| !self.pids.contains(d)) {
            return Err(Error::InvalidMembers("excluded member not present"));
        }
        let mut next = self.clone();
        let keep: Vec<bool> = self.pids.iter().map(|p| !departing.contains(p)).collect();
        retain_mask(&mut next.pids, &keep);
        retain_mask(&mut next.nonces, &keep);
        retain_mask(&mut next.eph_pub, &keep);
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let idx = next.index_of(&next.own_id).expect("initiator remains");
        next.nonces[idx] = nonce;
        next.own_nonce = Some(nonce);
        next.sid = Some(compute_sid(&next.pids, &next.nonces)?);
        next.verified.clear();
        Ok(next)
    }

    /// Signs our authenticator with the static identity key.
    pub fn own_session_signature(&self, identity: &SigningKey) -> Result<SessionSignature> {
        let sid = self
            .sid
            .ok_or(Error::Incomplete("session id not computed"))?;
        let (Some(nonce), Some(eph)) = (&self.own_nonce, &self.own_eph) else {
            return Err(Error::Incomplete("no own contribution"));
        };
        Ok(make_session_signature(
            identity,
            &self.own_id,
            &eph.verifying_key(),
            nonce,
            &sid,
        ))
    }

    /// Phase 3 for one received signature.
    pub fn verify_session_signature(
        &mut self,
        sig: &SessionSignature,
        static_pub: &VerifyingKey,
    ) -> Result<()> {
        let sid = self
            .sid
            .ok_or(Error::Incomplete("session id not computed"))?;
        let idx = self
            .index_of(&sig.signer)
            .ok_or(Error::AuthFailure("signer not a participant"))?;
        let m = authenticator(&sig.signer, &self.eph_pub[idx], &self.nonces[idx], &sid);
        static_pub
            .verify(&m, &sig.sig)
            .map_err(|_| Error::AuthFailure("session signature"))?;
        if sig.signer != self.own_id {
            self.verified.insert(sig.signer.clone());
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.sid.is_some()
            && self
                .pids
                .iter()
                .filter(|p| **p != self.own_id)
                .all(|p| self.verified.contains(p))
    }
}

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut k = keep.iter();
    v.retain(|_| *k.next().expect("mask covers every entry"));
}

/// `SHA256(pid_1 || ... || pid_n || k_1 || ... || k_n)` with the IDs in
/// byte-wise lexical order and the nonces permuted to match.
pub fn compute_sid(pids: &[UserId], nonces: &[Nonce]) -> Result<SessionId> {
    if nonces.len() != pids.len() {
        return Err(Error::Incomplete("missing nonces"));
    }
    let mut pairs: Vec<(&UserId, &Nonce)> = pids.iter().zip(nonces).collect();
    pairs.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    let mut h = Sha256::new();
    for (pid, _) in &pairs {
        h.update(pid.as_bytes());
    }
    for (_, k) in &pairs {
        h.update(k);
    }
    Ok(h.finalize().into())
}

fn push_prefixed(out: &mut Vec<u8>, part: &[u8]) {
    out.extend_from_slice(&(part.len() as u16).to_be_bytes());
    out.extend_from_slice(part);
}

/// `CTX || pid || E || k || sid` with each component after the context
/// prefixed by its BE16 length. Never transmitted.
pub fn authenticator(pid: &UserId, eph: &VerifyingKey, nonce: &Nonce, sid: &SessionId) -> Vec<u8> {
    authenticator_with_context(ACK_CONTEXT, pid, eph, nonce, sid)
}

pub fn authenticator_with_context(
    ctx: &[u8],
    pid: &UserId,
    eph: &VerifyingKey,
    nonce: &Nonce,
    sid: &SessionId,
) -> Vec<u8> {
    let mut m = Vec::with_capacity(ctx.len() + pid.as_bytes().len() + 32 * 3 + 8);
    m.extend_from_slice(ctx);
    push_prefixed(&mut m, pid.as_bytes());
    push_prefixed(&mut m, eph.as_bytes());
    push_prefixed(&mut m, nonce);
    push_prefixed(&mut m, sid);
    m
}

pub fn make_session_signature(
    identity: &SigningKey,
    pid: &UserId,
    eph: &VerifyingKey,
    nonce: &Nonce,
    sid: &SessionId,
) -> SessionSignature {
    SessionSignature {
        signer: pid.clone(),
        sig: identity.sign(&authenticator(pid, eph, nonce, sid)),
    }
}

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

//! CLIQUES group Diffie-Hellman over x25519.
//!
//! The initial agreement (IKA) passes a growing chain of intermediate keys
//! along the member list (upflow); the last member broadcasts the final list
//! (downflow). Auxiliary agreements re-use the completed list: include runs a
//! short upflow through the new members, exclude and refresh broadcast a
//! downflow directly.
//!
//! Every operation here is a pure transition `&GkaState -> GkaState`, so a
//! caller can discard the result of a failed operation and keep the old
//! state untouched.

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{x25519, X25519_BASEPOINT_BYTES};

use crate::error::{Error, Result};
use crate::types::{all_distinct, UserId};

/// An x25519 public point (u-coordinate, little-endian).
pub type Point = [u8; 32];

pub const BASE_POINT: Point = X25519_BASEPOINT_BYTES;

pub const GROUP_KEY_INFO: &[u8] = b"mpenc group key";
pub const GROUP_KEY_LEN: usize = 16;

/// One private key contribution.
///
/// A holder keeps every contribution it ever made, in order. They cannot be
/// folded into one scalar: x25519 clamps its scalar input, and the clamped
/// form of a modular product is generally not the product of clamped values.
#[derive(Clone)]
pub struct Contribution {
    secret: [u8; 32],
    created_at: u64,
}

impl Contribution {
    fn generate<R: RngCore + CryptoRng>(rng: &mut R, created_at: u64) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Contribution { secret, created_at }
    }

    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }

    /// Logical age: the number of GKA operations this holder had performed
    /// when the contribution was created.
    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    fn apply(&self, p: &Point) -> Point {
        x25519(self.secret, *p)
    }
}

impl std::fmt::Debug for Contribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Contribution")
            .field("created_at", &self.created_at)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpflowPayload {
    pub members: Vec<UserId>,
    pub int_keys: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownflowPayload {
    pub members: Vec<UserId>,
    pub int_keys: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Flow {
    Up(UpflowPayload),
    Down(DownflowPayload),
}

#[derive(Debug, Clone)]
pub struct GkaState {
    own_id: UserId,
    members: Vec<UserId>,
    own_contribs: Vec<Contribution>,
    intermediate_keys: Vec<Point>,
    group_secret: Option<Point>,
    clock: u64,
}

impl GkaState {
    pub fn new(own_id: UserId) -> Self {
        GkaState {
            own_id,
            members: Vec::new(),
            own_contribs: Vec::new(),
            intermediate_keys: Vec::new(),
            group_secret: None,
            clock: 0,
        }
    }

    pub fn own_id(&self) -> &UserId {
        &self.own_id
    }

    pub fn members(&self) -> &[UserId] {
        &self.members
    }

    pub fn contributions(&self) -> &[Contribution] {
        &self.own_contribs
    }

    pub fn intermediate_keys(&self) -> &[Point] {
        &self.intermediate_keys
    }

    pub fn group_secret(&self) -> Option<&Point> {
        self.group_secret.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.group_secret.is_some()
    }

    pub fn group_key(&self) -> Option<[u8; GROUP_KEY_LEN]> {
        self.group_secret.as_ref().map(derive_group_key)
    }

    fn own_index(&self, members: &[UserId]) -> Option<usize> {
        members.iter().position(|m| *m == self.own_id)
    }

    fn with_new_contribution<R: RngCore + CryptoRng>(
        &self,
        rng: &mut R,
    ) -> (GkaState, Contribution) {
        let mut next = self.clone();
        next.clock += 1;
        let c = Contribution::generate(rng, next.clock);
        next.own_contribs.push(c.clone());
        (next, c)
    }

    fn apply_all(&self, p: &Point) -> Point {
        self.own_contribs.iter().fold(*p, |acc, c| c.apply(&acc))
    }

    /// Starts an IKA with `members[0] == self`.
    pub fn ika_initiate<R: RngCore + CryptoRng>(
        own_id: UserId,
        members: Vec<UserId>,
        rng: &mut R,
    ) -> Result<(GkaState, UpflowPayload)> {
        if members.is_empty() {
            return Err(Error::InvalidMembers("empty member list"));
        }
        if !all_distinct(&members) {
            return Err(Error::InvalidMembers("duplicate members"));
        }
        if members[0] != own_id {
            return Err(Error::InvalidMembers("initiator must be the first member"));
        }
        let (mut state, x1) = GkaState::new(own_id).with_new_contribution(rng);
        let cardinal = x1.apply(&BASE_POINT);
        state.members = members.clone();
        if members.len() == 1 {
            state.intermediate_keys = vec![BASE_POINT];
            state.group_secret = Some(cardinal);
        }
        Ok((
            state,
            UpflowPayload {
                members,
                int_keys: vec![BASE_POINT, cardinal],
            },
        ))
    }

    /// Processes an upflow addressed to us. The receiving state must not
    /// hold any contributions yet.
    pub fn ika_upflow<R: RngCore + CryptoRng>(
        &self,
        payload: &UpflowPayload,
        rng: &mut R,
    ) -> Result<(GkaState, Flow)> {
        if !self.own_contribs.is_empty() {
            return Err(Error::AlreadyContributed);
        }
        let members = &payload.members;
        if !all_distinct(members) {
            return Err(Error::InvalidMembers("duplicate members"));
        }
        let n = members.len();
        let keys = &payload.int_keys;
        if keys.len() < 2 || keys.len() > n {
            return Err(Error::Malformed("upflow key count"));
        }
        let pos = keys.len() - 1;
        if self.own_index(members) != Some(pos) {
            return Err(Error::NotMyTurn);
        }
        let (mut state, x) = self.with_new_contribution(rng);
        let (init, ckey) = keys.split_at(pos);
        let ckey = ckey[0];
        let mut next: Vec<Point> = init.iter().map(|k| x.apply(k)).collect();
        next.push(ckey);
        let new_cardinal = x.apply(&ckey);
        state.members = members.clone();
        if pos == n - 1 {
            check_not_degenerate(&new_cardinal)?;
            state.intermediate_keys = next.clone();
            state.group_secret = Some(new_cardinal);
            Ok((
                state,
                Flow::Down(DownflowPayload {
                    members: members.clone(),
                    int_keys: next,
                }),
            ))
        } else {
            next.push(new_cardinal);
            state.intermediate_keys.clear();
            state.group_secret = None;
            Ok((
                state,
                Flow::Up(UpflowPayload {
                    members: members.clone(),
                    int_keys: next,
                }),
            ))
        }
    }

    /// Completes the agreement from a broadcast downflow.
    pub fn downflow_recv(&self, payload: &DownflowPayload) -> Result<GkaState> {
        if self.own_contribs.is_empty() {
            return Err(Error::Incomplete("no own contribution"));
        }
        if payload.int_keys.len() != payload.members.len() {
            return Err(Error::Malformed("downflow key count"));
        }
        if !all_distinct(&payload.members) {
            return Err(Error::InvalidMembers("duplicate members"));
        }
        let i = self
            .own_index(&payload.members)
            .ok_or(Error::InvalidMembers("receiver not in member list"))?;
        let secret = self.apply_all(&payload.int_keys[i]);
        check_not_degenerate(&secret)?;
        let mut state = self.clone();
        state.members = payload.members.clone();
        state.intermediate_keys = payload.int_keys.clone();
        state.group_secret = Some(secret);
        Ok(state)
    }

    /// Starts an upflow through `new_members`, hiding the old group secret
    /// behind a fresh contribution before anything is sent.
    pub fn aka_include<R: RngCore + CryptoRng>(
        &self,
        new_members: &[UserId],
        rng: &mut R,
    ) -> Result<(GkaState, UpflowPayload)> {
        if !self.is_complete() {
            return Err(Error::Incomplete("include requires a completed agreement"));
        }
        if new_members.is_empty() {
            return Err(Error::InvalidMembers("nobody to include"));
        }
        let mut members = self.members.clone();
        members.extend_from_slice(new_members);
        if !all_distinct(&members) {
            return Err(Error::InvalidMembers("included member already present"));
        }
        let own = self
            .own_index(&self.members)
            .ok_or(Error::InvalidMembers("not a member"))?;
        // The step-1 value is the old secret; it is masked below before sending.
        let mut keys = self.intermediate_keys.clone();
        keys.push(self.apply_all(&keys[own]));
        let (mut state, fresh) = self.with_new_contribution(rng);
        for (j, k) in keys.iter_mut().enumerate() {
            if j != own {
                *k = fresh.apply(k);
            }
        }
        state.members = members.clone();
        state.intermediate_keys.clear();
        state.group_secret = None;
        Ok((
            state,
            UpflowPayload {
                members,
                int_keys: keys,
            },
        ))
    }

    /// Removes `departing` and broadcasts a downflow under a fresh
    /// contribution.
    pub fn aka_exclude<R: RngCore + CryptoRng>(
        &self,
        departing: &[UserId],
        rng: &mut R,
    ) -> Result<(GkaState, DownflowPayload)> {
        if !self.is_complete() {
            return Err(Error::Incomplete("exclude requires a completed agreement"));
        }
        if departing.contains(&self.own_id) {
            return Err(Error::SelfExclusion);
        }
        if departing.iter().any(|d| !self.members.contains(d)) {
            return Err(Error::InvalidMembers("excluded member not present"));
        }
        self.renew(departing, rng)
    }

    pub fn aka_refresh<R: RngCore + CryptoRng>(
        &self,
        rng: &mut R,
    ) -> Result<(GkaState, DownflowPayload)> {
        if !self.is_complete() {
            return Err(Error::Incomplete("refresh requires a completed agreement"));
        }
        self.renew(&[], rng)
    }

    fn renew<R: RngCore + CryptoRng>(
        &self,
        departing: &[UserId],
        rng: &mut R,
    ) -> Result<(GkaState, DownflowPayload)> {
        let own = self
            .own_index(&self.members)
            .ok_or(Error::InvalidMembers("not a member"))?;
        let (mut state, fresh) = self.with_new_contribution(rng);
        let (members, keys): (Vec<UserId>, Vec<Point>) = self
            .members
            .iter()
            .zip(&self.intermediate_keys)
            .enumerate()
            .filter(|(_, (m, _))| !departing.contains(m))
            .map(|(j, (m, k))| (m.clone(), if j == own { *k } else { fresh.apply(k) }))
            .unzip();
        let new_own = state.own_index(&members).expect("initiator remains");
        let secret = state.apply_all(&keys[new_own]);
        check_not_degenerate(&secret)?;
        state.members = members.clone();
        state.intermediate_keys = keys.clone();
        state.group_secret = Some(secret);
        Ok((
            state,
            DownflowPayload {
                members,
                int_keys: keys,
            },
        ))
    }
}

fn check_not_degenerate(p: &Point) -> Result<()> {
    if p.iter().all(|b| *b == 0) {
        Err(Error::Malformed("degenerate intermediate key"))
    } else {
        Ok(())
    }
}

/// HKDF-SHA256 over the encoded secret point with an empty salt.
pub fn derive_group_key(group_secret: &Point) -> [u8; GROUP_KEY_LEN] {
    let hk = Hkdf::<Sha256>::new(None, group_secret);
    let mut out = [0u8; GROUP_KEY_LEN];
    hk.expand(GROUP_KEY_INFO, &mut out)
        .expect("16 bytes is a valid HKDF length");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ids;
    use curve25519_dalek::{constants::X25519_BASEPOINT, scalar::Scalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn clamp(mut s: [u8; 32]) -> [u8; 32] {
        s[0] &= 248;
        s[31] &= 127;
        s[31] |= 64;
        s
    }

    /// Independent route: multiply the clamped scalars modulo the group
    /// order and apply the product to the base point once.
    fn oracle(scalars: &[[u8; 32]]) -> Point {
        let product = scalars.iter().fold(Scalar::ONE, |acc, s| {
            acc * Scalar::from_bytes_mod_order(clamp(*s))
        });
        (X25519_BASEPOINT * product).to_bytes()
    }

    fn scalars_of(states: &[GkaState]) -> Vec<[u8; 32]> {
        states
            .iter()
            .flat_map(|s| s.contributions().iter().map(|c| *c.secret_bytes()))
            .collect()
    }

    fn run_ika(names: &[&str], rng: &mut ChaCha20Rng) -> Vec<GkaState> {
        let members = ids(names.iter().copied());
        let (first, mut up) =
            GkaState::ika_initiate(members[0].clone(), members.clone(), rng).unwrap();
        let mut states = vec![first];
        if members.len() == 1 {
            return states;
        }
        for m in &members[1..] {
            let (s, flow) = GkaState::new(m.clone()).ika_upflow(&up, rng).unwrap();
            states.push(s);
            match flow {
                Flow::Up(u) => up = u,
                Flow::Down(d) => {
                    let last = states.len() - 1;
                    for s in states[..last].iter_mut() {
                        *s = s.downflow_recv(&d).unwrap();
                    }
                    return states;
                }
            }
        }
        unreachable!("last member always produces a downflow")
    }

    fn assert_agreement(states: &[GkaState]) {
        let expected = oracle(&scalars_of(states));
        for s in states {
            assert_eq!(s.group_secret(), Some(&expected), "member {}", s.own_id());
        }
    }

    #[test]
    fn upflow_shapes_follow_the_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let members = ids(["p1", "p2", "p3", "p4"]);
        let (s1, u1) =
            GkaState::ika_initiate(members[0].clone(), members.clone(), &mut rng).unwrap();
        let x1 = *s1.contributions()[0].secret_bytes();
        assert_eq!(u1.int_keys, vec![BASE_POINT, oracle(&[x1])]);

        let (s2, f2) = GkaState::new(members[1].clone())
            .ika_upflow(&u1, &mut rng)
            .unwrap();
        let x2 = *s2.contributions()[0].secret_bytes();
        let Flow::Up(u2) = f2 else {
            panic!("expected upflow")
        };
        assert_eq!(
            u2.int_keys,
            vec![oracle(&[x2]), oracle(&[x1]), oracle(&[x2, x1])]
        );

        let (s3, f3) = GkaState::new(members[2].clone())
            .ika_upflow(&u2, &mut rng)
            .unwrap();
        let x3 = *s3.contributions()[0].secret_bytes();
        let Flow::Up(u3) = f3 else {
            panic!("expected upflow")
        };

        let (s4, f4) = GkaState::new(members[3].clone())
            .ika_upflow(&u3, &mut rng)
            .unwrap();
        let x4 = *s4.contributions()[0].secret_bytes();
        let Flow::Down(d) = f4 else {
            panic!("expected downflow")
        };
        assert_eq!(
            d.int_keys,
            vec![
                oracle(&[x4, x3, x2]),
                oracle(&[x4, x3, x1]),
                oracle(&[x4, x2, x1]),
                oracle(&[x3, x2, x1]),
            ]
        );
        assert_eq!(s4.group_secret(), Some(&oracle(&[x1, x2, x3, x4])));
    }

    #[test]
    fn ika_agrees_for_small_groups() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let names = ["a", "b", "c", "d", "e", "f"];
        for n in 1..=6 {
            let states = run_ika(&names[..n], &mut rng);
            assert_agreement(&states);
            assert!(states.iter().all(|s| s.intermediate_keys().len() == n));
        }
    }

    #[test]
    fn single_member_is_complete_immediately() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (s, up) = GkaState::ika_initiate("solo".into(), ids(["solo"]), &mut rng).unwrap();
        assert!(s.is_complete());
        assert_eq!(up.int_keys.len(), 2);
        assert_eq!(s.group_secret(), Some(&up.int_keys[1]));
    }

    #[test]
    fn initiate_rejects_bad_member_lists() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert!(matches!(
            GkaState::ika_initiate("a".into(), ids(["a", "b", "a"]), &mut rng),
            Err(Error::InvalidMembers(_))
        ));
        assert!(matches!(
            GkaState::ika_initiate("a".into(), ids(["b", "a"]), &mut rng),
            Err(Error::InvalidMembers(_))
        ));
    }

    #[test]
    fn upflow_out_of_turn_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let members = ids(["a", "b", "c"]);
        let (_, u1) =
            GkaState::ika_initiate(members[0].clone(), members.clone(), &mut rng).unwrap();
        let err = GkaState::new("c".into())
            .ika_upflow(&u1, &mut rng)
            .unwrap_err();
        assert_eq!(err, Error::NotMyTurn);
    }

    #[test]
    fn downflow_key_count_mismatch_is_malformed() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let members = ids(["a", "b", "c"]);
        let (s1, u1) =
            GkaState::ika_initiate(members[0].clone(), members.clone(), &mut rng).unwrap();
        let (_, f2) = GkaState::new("b".into()).ika_upflow(&u1, &mut rng).unwrap();
        let Flow::Up(u2) = f2 else { panic!() };
        let (_, f3) = GkaState::new("c".into()).ika_upflow(&u2, &mut rng).unwrap();
        let Flow::Down(mut d) = f3 else { panic!() };
        d.int_keys.pop();
        assert!(matches!(s1.downflow_recv(&d), Err(Error::Malformed(_))));
    }

    #[test]
    fn two_member_secret_is_direct_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let states = run_ika(&["a", "b"], &mut rng);
        let x1 = *states[0].contributions()[0].secret_bytes();
        let x2 = *states[1].contributions()[0].secret_bytes();
        let via_a = x25519(x1, x25519(x2, BASE_POINT));
        let via_b = x25519(x2, x25519(x1, BASE_POINT));
        assert_eq!(via_a, via_b);
        assert_eq!(states[0].group_secret(), Some(&via_a));
        assert_eq!(states[1].group_secret(), Some(&via_a));
    }

    #[test]
    fn include_masks_old_secret_and_agrees() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut states = run_ika(&["p1", "p2", "p3", "p4"], &mut rng);
        let old_secret = *states[0].group_secret().unwrap();
        let old_keys = states[0].intermediate_keys().to_vec();
        let x1 = *states[0].contributions()[0].secret_bytes();

        let (pending, up) = states[0].aka_include(&ids(["p5"]), &mut rng).unwrap();
        let x1b = *pending.contributions()[1].secret_bytes();
        assert_eq!(up.members.len(), 5);
        assert_eq!(up.int_keys[0], old_keys[0]);
        for (got, old) in up.int_keys[1..4].iter().zip(&old_keys[1..4]) {
            assert_eq!(*got, x25519(x1b, *old));
        }
        assert_eq!(up.int_keys[4], x25519(x1b, x25519(x1, old_keys[0])));
        assert!(!up.int_keys.contains(&old_secret));

        let (s5, flow) = GkaState::new("p5".into())
            .ika_upflow(&up, &mut rng)
            .unwrap();
        let Flow::Down(d) = flow else { panic!() };
        states[0] = pending.downflow_recv(&d).unwrap();
        for s in states[1..].iter_mut() {
            *s = s.downflow_recv(&d).unwrap();
        }
        states.push(s5);
        assert_agreement(&states);
        assert_ne!(states[0].group_secret(), Some(&old_secret));
    }

    #[test]
    fn include_several_at_once() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut states = run_ika(&["a", "b", "c"], &mut rng);
        let (pending, mut up) = states[1].aka_include(&ids(["d", "e"]), &mut rng).unwrap();
        states[1] = pending;
        let mut joined = Vec::new();
        for m in ["d", "e"] {
            let (s, flow) = GkaState::new(m.into()).ika_upflow(&up, &mut rng).unwrap();
            joined.push(s);
            match flow {
                Flow::Up(u) => up = u,
                Flow::Down(d) => {
                    for s in states.iter_mut() {
                        *s = s.downflow_recv(&d).unwrap();
                    }
                    let last = joined.len() - 1;
                    for s in joined[..last].iter_mut() {
                        *s = s.downflow_recv(&d).unwrap();
                    }
                }
            }
        }
        states.extend(joined);
        assert_agreement(&states);
    }

    #[test]
    fn include_rejects_existing_member() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let states = run_ika(&["a", "b"], &mut rng);
        assert!(matches!(
            states[0].aka_include(&ids(["b"]), &mut rng),
            Err(Error::InvalidMembers(_))
        ));
    }

    #[test]
    fn exclude_drops_member_and_agrees() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let states = run_ika(&["p1", "p2", "p3", "p4"], &mut rng);
        let old = *states[0].group_secret().unwrap();
        let (s1, d) = states[0].aka_exclude(&ids(["p3"]), &mut rng).unwrap();
        assert_eq!(d.members, ids(["p1", "p2", "p4"]));
        assert_eq!(d.int_keys.len(), 3);
        let s2 = states[1].downflow_recv(&d).unwrap();
        let s4 = states[3].downflow_recv(&d).unwrap();
        let remaining = vec![s1, s2, s4];
        // The departed member's old contribution stays in the product; only
        // the fresh one is withheld from them.
        let mut scalars = scalars_of(&remaining);
        scalars.extend(scalars_of(&states[2..3]));
        let expected = oracle(&scalars);
        for s in &remaining {
            assert_eq!(s.group_secret(), Some(&expected));
        }
        assert_ne!(remaining[0].group_secret(), Some(&old));
        // The departed member cannot use the downflow.
        assert!(states[2].downflow_recv(&d).is_err());
    }

    #[test]
    fn exclude_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let states = run_ika(&["a", "b", "c"], &mut rng);
        assert_eq!(
            states[0].aka_exclude(&ids(["a"]), &mut rng).unwrap_err(),
            Error::SelfExclusion
        );
        assert!(matches!(
            states[0].aka_exclude(&ids(["z"]), &mut rng),
            Err(Error::InvalidMembers(_))
        ));
    }

    #[test]
    fn refresh_grows_contribution_list() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let mut states = run_ika(&["a", "b", "c"], &mut rng);
        for round in 1..=2 {
            let old = *states[0].group_secret().unwrap();
            let (s0, d) = states[0].aka_refresh(&mut rng).unwrap();
            assert_eq!(s0.contributions().len(), 1 + round);
            assert_eq!(
                s0.contributions().last().unwrap().created_at(),
                1 + round as u64
            );
            states[0] = s0;
            for s in states[1..].iter_mut() {
                *s = s.downflow_recv(&d).unwrap();
            }
            assert_agreement(&states);
            assert_ne!(states[0].group_secret(), Some(&old));
        }
    }

    #[test]
    fn refresh_single_member() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let states = run_ika(&["solo"], &mut rng);
        let (s, d) = states[0].aka_refresh(&mut rng).unwrap();
        assert_eq!(d.int_keys.len(), 1);
        assert_agreement(&[s]);
    }

    #[test]
    fn condensed_contributions_would_break_agreement() {
        // Sequential application matches the modular-product oracle, but
        // clamping the reduced product and applying it once does not.
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let mut mismatches = 0;
        for _ in 0..16 {
            let mut a = [0u8; 32];
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut a);
            rng.fill_bytes(&mut b);
            let sequential = x25519(b, x25519(a, BASE_POINT));
            assert_eq!(sequential, oracle(&[a, b]));
            let product =
                Scalar::from_bytes_mod_order(clamp(a)) * Scalar::from_bytes_mod_order(clamp(b));
            let condensed = x25519(product.to_bytes(), BASE_POINT);
            if condensed != sequential {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 16);
    }

    #[test]
    fn group_key_is_deterministic_and_16_bytes() {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let states = run_ika(&["a", "b", "c"], &mut rng);
        let keys: Vec<_> = states.iter().map(|s| s.group_key().unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(keys[0].len(), 16);
        let other = run_ika(&["a", "b", "c"], &mut rng);
        assert_ne!(other[0].group_key(), states[0].group_key());
    }
}

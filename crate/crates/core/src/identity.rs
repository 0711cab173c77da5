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

//! Static identity keys.
//!
//! Session signatures are made with long-term ed25519 keys. How peers learn
//! each other's public keys is outside the protocol; sessions consult an
//! [`IdentityProvider`].

use std::collections::BTreeMap;

use ed25519_dalek::{SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::types::UserId;

pub trait IdentityProvider {
    fn static_key(&self, id: &UserId) -> Option<VerifyingKey>;
}

/// A fixed map of identities, as a pre-shared directory.
#[derive(Debug, Clone, Default)]
pub struct Directory {
    keys: BTreeMap<UserId, VerifyingKey>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: UserId, key: VerifyingKey) {
        self.keys.insert(id, key);
    }

    /// Generates a signing key per id and returns them with the directory of
    /// their public halves.
    pub fn generate<R: RngCore + CryptoRng>(
        ids: &[UserId],
        rng: &mut R,
    ) -> (Directory, BTreeMap<UserId, SigningKey>) {
        let mut dir = Directory::new();
        let mut secrets = BTreeMap::new();
        for id in ids {
            let sk = SigningKey::generate(rng);
            dir.insert(id.clone(), sk.verifying_key());
            secrets.insert(id.clone(), sk);
        }
        (dir, secrets)
    }
}

impl IdentityProvider for Directory {
    fn static_key(&self, id: &UserId) -> Option<VerifyingKey> {
        self.keys.get(id).copied()
    }
}

impl<T: IdentityProvider + ?Sized> IdentityProvider for std::rc::Rc<T> {
    fn static_key(&self, id: &UserId) -> Option<VerifyingKey> {
        (**self).static_key(id)
    }
}

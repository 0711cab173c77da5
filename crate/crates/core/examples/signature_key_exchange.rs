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

//! The authenticated exchange of ephemeral signing keys, on its own.
//!
//! Each member adds a nonce and an ephemeral public key on the way up.
//! The last member computes the session ID and everyone signs an
//! authenticator binding its identity, ephemeral key, nonce and the
//! session ID with its long-term key. A forged signature is refused.

use ed25519_dalek::SigningKey;
use mpenc::aske::AskeState;
use mpenc::identity::{Directory, IdentityProvider};
use mpenc::types::ids;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> mpenc::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let pids = ids(["kim", "lee", "max"]);
    let (directory, identities) = Directory::generate(&pids, &mut rng);

    let mut states = Vec::new();
    let (mut nonces, mut ephs) = (Vec::new(), Vec::new());
    for p in &pids {
        let s = AskeState::new(p.clone())
            .with_collected(pids.clone(), nonces, ephs)?
            .upflow_step(&mut rng)?;
        nonces = s.nonces().to_vec();
        ephs = s.eph_pubs().to_vec();
        states.push(s);
    }
    let last = states.pop().expect("three members");
    for s in states.iter_mut() {
        *s = s.downflow_recv(pids.clone(), nonces.clone(), ephs.clone())?;
    }
    states.push(last);

    let sigs = states
        .iter()
        .map(|s| s.own_session_signature(&identities[s.own_id()]))
        .collect::<mpenc::Result<Vec<_>>>()?;
    for s in states.iter_mut() {
        for sig in &sigs {
            s.verify_session_signature(sig, &directory.static_key(&sig.signer).expect("known"))?;
        }
        println!(
            "{} sid {} complete {}",
            s.own_id(),
            hex::encode(s.sid().expect("sid")),
            s.is_complete()
        );
    }

    let mallory = SigningKey::generate(&mut rng);
    let forged = states[0].own_session_signature(&mallory)?;
    let refused = states[1]
        .verify_session_signature(&forged, &directory.static_key(&pids[0]).expect("known"));
    println!("signature under the wrong identity key: {refused:?}");
    assert!(refused.is_err());
    Ok(())
}

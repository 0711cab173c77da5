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

//! Runs the group Diffie-Hellman layer directly, without packets.
//!
//! Three members establish a key with an upflow chain and a broadcast
//! downflow. A fourth member is included, the key is refreshed, and one
//! member is excluded. After every step all current members hold the same
//! group key.

use mpenc::gka::{DownflowPayload, Flow, GkaState, UpflowPayload};
use mpenc::types::ids;
use mpenc::UserId;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn upflow_chain(
    states: &mut [GkaState],
    mut up: UpflowPayload,
    rng: &mut ChaCha20Rng,
) -> mpenc::Result<DownflowPayload> {
    loop {
        let pos = up.int_keys.len() - 1;
        let who = up.members[pos].clone();
        let idx = states
            .iter()
            .position(|s| s.own_id() == &who)
            .expect("member state");
        let (next, flow) = states[idx].ika_upflow(&up, rng)?;
        states[idx] = next;
        match flow {
            Flow::Up(u) => up = u,
            Flow::Down(d) => return Ok(d),
        }
    }
}

fn broadcast(
    states: &mut [GkaState],
    down: &DownflowPayload,
    sender: &UserId,
) -> mpenc::Result<()> {
    for s in states
        .iter_mut()
        .filter(|s| s.own_id() != sender && down.members.contains(s.own_id()))
    {
        *s = s.downflow_recv(down)?;
    }
    Ok(())
}

fn report(label: &str, states: &[GkaState]) {
    let key = states[0].group_key().expect("complete");
    for s in states {
        assert_eq!(s.group_key(), Some(key), "{} disagrees", s.own_id());
    }
    let who: Vec<&str> = states.iter().map(|s| s.own_id().as_str()).collect();
    println!("{label:<10} {} members {who:?}", hex::encode(key));
}

fn main() -> mpenc::Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let m = ids(["alice", "bob", "carol", "dave"]);

    let (a, up) = GkaState::ika_initiate(m[0].clone(), m[..3].to_vec(), &mut rng)?;
    let mut states = vec![a, GkaState::new(m[1].clone()), GkaState::new(m[2].clone())];
    let down = upflow_chain(&mut states, up, &mut rng)?;
    broadcast(&mut states, &down, &m[2])?;
    report("establish", &states);

    let (b, up) = states[1].aka_include(&m[3..], &mut rng)?;
    states[1] = b;
    states.push(GkaState::new(m[3].clone()));
    let down = upflow_chain(&mut states, up, &mut rng)?;
    broadcast(&mut states, &down, &m[3])?;
    report("include", &states);

    let (c, down) = states[2].aka_refresh(&mut rng)?;
    states[2] = c;
    broadcast(&mut states, &down, &m[2])?;
    report("refresh", &states);

    let old = states[0].group_key();
    let (d, down) = states[3].aka_exclude(&m[..1], &mut rng)?;
    states[3] = d;
    broadcast(&mut states, &down, &m[3])?;
    states.remove(0);
    report("exclude", &states);
    assert_ne!(states[0].group_key(), old);
    Ok(())
}

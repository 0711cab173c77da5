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

//! Feeds a transcript by hand, out of order and with a few bad messages.
//!
//! Messages whose parents are missing wait in a buffer and are released
//! once the parents arrive. A message whose parents are causally ordered
//! among themselves, and a second successor to one author's previous
//! message, are rejected. The final graph is printed in Graphviz format.

use std::collections::BTreeSet;

use mpenc::transcript::{AddStatus, Msg, MsgId, MsgKind, Transcript};
use mpenc::types::ids;
use sha2::{Digest, Sha256};

fn msg(author: &str, text: &str, parents: &[&Msg]) -> Msg {
    let parents: BTreeSet<MsgId> = parents.iter().map(|p| p.id).collect();
    let mut h = Sha256::new();
    h.update(author);
    h.update(text);
    parents.iter().for_each(|p| h.update(p.0));
    Msg {
        id: MsgId(h.finalize().into()),
        author: author.into(),
        readers: ids(["ann", "bob", "cal"]).into_iter().collect(),
        parents,
        body: text.as_bytes().to_vec(),
        kind: MsgKind::Content,
    }
}

fn main() {
    let a1 = msg("ann", "lunch?", &[]);
    let b1 = msg("bob", "sure", &[&a1]);
    let c1 = msg("cal", "where", &[&a1]);
    let a2 = msg("ann", "usual place", &[&b1, &c1]);
    // Names a1 and its descendant b1 as parents at once.
    let odd = msg("cal", "redundant", &[&a1, &b1]);
    // ann already followed up a1 with a2 in her own line.
    let fork = msg("ann", "actually no", &[&c1]);

    let mut t = Transcript::new();
    for (now, m) in [a2.clone(), b1.clone(), a1.clone(), c1.clone(), odd, fork]
        .into_iter()
        .enumerate()
    {
        let text = String::from_utf8_lossy(&m.body).into_owned();
        let r = t.add(m, now as u64);
        let released: Vec<_> = r.accepted.iter().map(|m| m.text().unwrap_or("")).collect();
        match r.status {
            AddStatus::Deferred => println!("{text:<12} deferred ({} waiting)", t.deferred_len()),
            AddStatus::Accepted => println!("{text:<12} accepted, released {released:?}"),
            AddStatus::Rejected(why) => println!("{text:<12} rejected: {}", why.as_str()),
        }
    }

    assert_eq!(t.len(), 4);
    assert!(t.is_ancestor(&a1.id, &a2.id).unwrap());
    println!("frontier {:?}", t.frontier());
    print!("{}", t.to_dot("lunch"));
}

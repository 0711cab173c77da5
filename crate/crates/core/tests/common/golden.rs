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

//! Checks against the vectors in `tests/vectors/`, which are produced by
//! `tools/gen_vectors.py`, an independent Python implementation.

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, SigningKey, VerifyingKey};
use mpenc::aske::{authenticator, compute_sid, make_session_signature};
use mpenc::codec::{self, Record, WirePacket};
use mpenc::gka::derive_group_key;
use mpenc::greeter::{parse_greeting, verify_greeting};
use mpenc::message_security::{
    encrypt_message_with_iv, pad, padded_len, sidkey_hint, subsession_binding, verify_decrypt,
    SubsessionKeys,
};
use mpenc::server_order::{genesis_chain_hash, update_chain_hash};
use mpenc::transcript::MsgId;
use mpenc::{Error, UserId};
use serde_json::Value;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn load(name: &str) -> Value {
    let text = match name {
        "tlv" => include_str!("../vectors/tlv.json"),
        "padding" => include_str!("../vectors/padding.json"),
        "data" => include_str!("../vectors/data.json"),
        "greeting" => include_str!("../vectors/greeting.json"),
        "context" => include_str!("../vectors/context.json"),
        "session" => include_str!("../vectors/session.json"),
        _ => unreachable!(),
    };
    serde_json::from_str(text).expect("vector file is JSON")
}

fn bytes(v: &Value) -> Vec<u8> {
    hex::decode(v.as_str().expect("hex string")).expect("valid hex")
}

fn arr<const N: usize>(v: &Value) -> [u8; N] {
    bytes(v).try_into().expect("fixed-length hex")
}

fn text(v: &Value) -> &str {
    v.as_str().expect("string")
}

pub fn tlv_and_framing() -> Check {
    let v = load("tlv");
    for case in v["cases"].as_array().unwrap() {
        let name = text(&case["name"]);
        let records: Vec<Record> = case["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| Record {
                rtype: r["type"].as_u64().unwrap() as u16,
                value: bytes(&r["value"]),
            })
            .collect();
        let encoded = codec::encode_records(&records).map_err(|e| format!("{name}: {e}"))?;
        ensure!(
            encoded == bytes(&case["encoded"]),
            "{name}: encoding differs"
        );
        ensure!(
            codec::frame(&records).unwrap() == text(&case["framed"]),
            "{name}: framing differs"
        );
        let back = codec::unframe(text(&case["framed"])).map_err(|e| format!("{name}: {e}"))?;
        ensure!(back == records, "{name}: unframe round trip");
    }
    for case in v["malformed"].as_array().unwrap() {
        let r = codec::decode_records(&bytes(&case["encoded"]));
        ensure!(
            matches!(r, Err(Error::Malformed(_))),
            "{}: accepted malformed TLV",
            text(&case["name"])
        );
    }
    for s in v["not_mpenc"].as_array().unwrap() {
        ensure!(
            matches!(codec::unframe(text(s)), Err(Error::NotMpenc)),
            "{s} treated as mpENC"
        );
    }
    for s in v["bad_base64"].as_array().unwrap() {
        ensure!(
            matches!(codec::unframe(text(s)), Err(Error::Malformed(_))),
            "{s} decoded"
        );
    }
    Ok(())
}

pub fn padding() -> Check {
    let v = load("padding");
    for case in v["cases"].as_array().unwrap() {
        let n = case["body_len"].as_u64().unwrap() as usize;
        let want = bytes(&case["padded"]);
        let body = &want[2..2 + n];
        ensure!(pad(body).unwrap() == want, "pad({n}) differs");
        ensure!(
            padded_len(n).unwrap() == case["padded_len"].as_u64().unwrap() as usize,
            "size class of {n}"
        );
    }
    for case in v["messages"].as_array().unwrap() {
        let n = case["body_len"].as_u64().unwrap() as usize;
        let parents = vec![MsgId([7; 32]); case["parents"].as_u64().unwrap() as usize];
        let plain = mpenc::message_security::encode_plaintext(&parents, &vec![b'm'; n]).unwrap();
        let got = pad(&plain).unwrap().len();
        let want = case["padded_len"].as_u64().unwrap() as usize;
        ensure!(
            got == want,
            "message body {n}: padded to {got}, expected {want}"
        );
    }
    Ok(())
}

fn keys_for(sid: [u8; 32], gk: [u8; 16], seed: [u8; 32], members: &[&str]) -> SubsessionKeys {
    let signing = SigningKey::from_bytes(&seed);
    let verify: BTreeMap<UserId, VerifyingKey> = members
        .iter()
        .map(|m| (UserId::from(*m), signing.verifying_key()))
        .collect();
    let members: Vec<UserId> = members.iter().map(|m| UserId::from(*m)).collect();
    SubsessionKeys::new(
        sid,
        gk,
        members.clone(),
        members[0].clone(),
        signing,
        verify,
    )
}

pub fn data_packets() -> Check {
    let v = load("data");
    let sid: [u8; 32] = arr(&v["sid"]);
    let gk: [u8; 16] = arr(&v["group_key"]);
    ensure!(
        subsession_binding(&sid, &gk).to_vec() == bytes(&v["binding"]),
        "binding differs"
    );
    ensure!(
        sidkey_hint(&sid, &gk) as u64 == v["hint"].as_u64().unwrap(),
        "SIDKEY_HINT differs"
    );
    let keys = keys_for(sid, gk, arr(&v["signer_seed"]), &["alice"]);
    ensure!(
        keys.own_signing.verifying_key().to_bytes().to_vec() == bytes(&v["signer_pub"]),
        "public key"
    );
    for (i, case) in v["cases"].as_array().unwrap().iter().enumerate() {
        let parents: Vec<MsgId> = case["parents"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| MsgId(arr(p)))
            .collect();
        let body = bytes(&case["body"]);
        let p = encrypt_message_with_iv(&keys, &parents, &body, &arr(&case["iv"]))
            .map_err(|e| e.to_string())?;
        ensure!(
            p.bytes == bytes(&case["packet"]),
            "data case {i}: packet bytes differ"
        );
        ensure!(
            p.to_text() == text(&case["framed"]),
            "data case {i}: framed text differs"
        );
        ensure!(
            p.id.0.to_vec() == bytes(&case["message_id"]),
            "data case {i}: message id differs"
        );
        let parsed = WirePacket::parse(text(&case["framed"])).map_err(|e| e.to_string())?;
        let (_, pt) =
            verify_decrypt(&[&keys], &parsed, &UserId::from("alice")).map_err(|e| e.to_string())?;
        ensure!(
            pt.body == body && pt.parents == parents,
            "data case {i}: decryption differs"
        );
    }
    Ok(())
}

pub fn greeting_packet() -> Check {
    let v = load("greeting");
    let signing = SigningKey::from_bytes(&arr(&v["signer_seed"]));
    let packet = WirePacket::parse(text(&v["framed"])).map_err(|e| e.to_string())?;
    ensure!(
        packet.bytes == bytes(&v["packet"]),
        "greeting bytes differ after unframing"
    );
    ensure!(
        packet.id.0.to_vec() == bytes(&v["packet_id"]),
        "packet id differs"
    );
    let fields = parse_greeting(&packet).map_err(|e| e.to_string())?;
    ensure!(
        fields.greet_type.to_u16() as u64 == v["greet_type"].as_u64().unwrap(),
        "GREET_TYPE differs"
    );
    let names: Vec<&str> = v["members"].as_array().unwrap().iter().map(text).collect();
    ensure!(
        fields
            .members
            .iter()
            .map(|m| m.as_str())
            .eq(names.iter().copied()),
        "members differ"
    );
    verify_greeting(&packet, &signing.verifying_key()).map_err(|e| e.to_string())?;
    let rebuilt = mpenc::greeter::encode_greeting(&fields, &signing).map_err(|e| e.to_string())?;
    ensure!(rebuilt.bytes == packet.bytes, "re-encoded greeting differs");
    Ok(())
}

/// Signatures made under one context never verify under another.
pub fn context_separation() -> Check {
    let v = load("context");
    let signing = SigningKey::from_bytes(&arr(&v["signer_seed"]));
    let members: Vec<&str> = v["members"].as_array().unwrap().iter().map(text).collect();
    let keys = keys_for(
        arr(&v["sid"]),
        arr(&v["group_key"]),
        arr(&v["signer_seed"]),
        &members,
    );
    let alice = UserId::from("alice");
    let packet = |h: &Value| WirePacket::from_bytes(bytes(h)).expect("vector decodes");

    verify_decrypt(&[&keys], &packet(&v["control_data_packet"]), &alice)
        .map_err(|e| format!("control data packet: {e}"))?;
    verify_greeting(
        &packet(&v["control_greeting_packet"]),
        &signing.verifying_key(),
    )
    .map_err(|e| format!("control greeting: {e}"))?;

    for case in v["cases"].as_array().unwrap() {
        let name = text(&case["name"]);
        let p = packet(&case["packet"]);
        match text(&case["kind"]) {
            "greeting" => {
                ensure!(
                    verify_greeting(&p, &signing.verifying_key()).is_err(),
                    "{name}: greeting verified"
                );
            }
            _ => {
                ensure!(
                    verify_decrypt(&[&keys], &p, &alice).is_err(),
                    "{name}: data packet verified"
                );
            }
        }
    }

    // Cross-verification: a greeting's signature over its own bytes is not a
    // valid data signature, and the reverse.
    let g = packet(&v["control_greeting_packet"]);
    let d = packet(&v["control_data_packet"]);
    let mut swapped = d.records.clone();
    swapped[1].value = g.records[0].value.clone();
    let swapped = WirePacket::from_records(swapped).unwrap();
    ensure!(
        verify_decrypt(&[&keys], &swapped, &alice).is_err(),
        "greeting signature verified a data packet"
    );
    let mut swapped = g.records.clone();
    swapped[0].value = d.records[1].value.clone();
    let swapped = WirePacket::from_records(swapped).unwrap();
    ensure!(
        verify_greeting(&swapped, &signing.verifying_key()).is_err(),
        "data signature verified a greeting"
    );
    Ok(())
}

pub fn session_values() -> Check {
    let v = load("session");
    let s = &v["sid"];
    let pids: Vec<UserId> = s["pids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| UserId::from(text(p)))
        .collect();
    let nonces: Vec<[u8; 32]> = s["nonces"].as_array().unwrap().iter().map(arr).collect();
    let sid = compute_sid(&pids, &nonces).map_err(|e| e.to_string())?;
    ensure!(sid.to_vec() == bytes(&s["sid"]), "sid differs");

    let a = &v["session_signature"];
    let identity = SigningKey::from_bytes(&arr(&a["static_seed"]));
    let eph = VerifyingKey::from_bytes(&arr(&a["eph_pub"])).unwrap();
    let pid = UserId::from(text(&a["pid"]));
    let (nonce, sid) = (arr(&a["nonce"]), arr(&a["sid"]));
    ensure!(
        authenticator(&pid, &eph, &nonce, &sid) == bytes(&a["authenticator"]),
        "authenticator differs"
    );
    let sig = make_session_signature(&identity, &pid, &eph, &nonce, &sid);
    ensure!(
        sig.sig == Signature::from_bytes(&arr(&a["signature"])),
        "session signature differs"
    );

    let g = &v["group_key"];
    ensure!(
        derive_group_key(&arr(&g["secret"])).to_vec() == bytes(&g["key"]),
        "group key derivation differs"
    );

    let c = &v["chain_hash"];
    let genesis = genesis_chain_hash(&arr(&c["prev_pf"]));
    ensure!(
        genesis.to_vec() == bytes(&c["genesis"]),
        "genesis chain hash differs"
    );
    let h1 = update_chain_hash(&genesis, &bytes(&c["initial"]));
    ensure!(
        h1.to_vec() == bytes(&c["after_initial"]),
        "chain hash after initial differs"
    );
    let h2 = update_chain_hash(&h1, &bytes(&c["final"]));
    ensure!(
        h2.to_vec() == bytes(&c["after_final"]),
        "chain hash after final differs"
    );
    Ok(())
}

pub type Named = (&'static str, fn() -> Check);

pub const ALL: [Named; 6] = [
    ("tlv-and-framing", tlv_and_framing),
    ("padding", padding),
    ("data-packets", data_packets),
    ("greeting-packet", greeting_packet),
    ("context-separation", context_separation),
    ("session-values", session_values),
];

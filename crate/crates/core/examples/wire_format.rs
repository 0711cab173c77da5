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

//! Builds, frames and parses packets by hand.
//!
//! Shows the TLV layer, the `?mpENC:` text framing, plaintext padding sizes
//! and a signed, encrypted data packet that round-trips through
//! verification and decryption.

use mpenc::codec::{self, Record, RecordType, WirePacket};
use mpenc::message_security::{self, SubsessionKeys};
use mpenc::transcript::MsgId;
use mpenc::UserId;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> mpenc::Result<()> {
    let records = vec![
        Record::new(
            RecordType::ProtocolVersion,
            codec::PROTOCOL_VERSION.to_be_bytes(),
        ),
        Record::new(RecordType::MessageBody, b"hello".to_vec()),
    ];
    let encoded = codec::encode_records(&records)?;
    println!("tlv bytes   {}", hex::encode(&encoded));
    let text = codec::frame(&records)?;
    println!("framed      {text}");
    assert_eq!(codec::unframe(&text)?, records);

    for len in [0, 100, 126, 127, 1000] {
        println!(
            "padding     {len:>4} bytes -> {}",
            message_security::padded_len(len)?
        );
    }

    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let alice = UserId::from("alice");
    let keys = SubsessionKeys::solo(alice.clone(), &mut rng);
    let parent = MsgId([0x11; 32]);
    let packet = message_security::encrypt_message(&keys, &[parent], b"first words", &mut rng)?;
    let wire = packet.to_text();
    println!(
        "data packet {} chars, hint {:#04x}",
        wire.len(),
        keys.hint()
    );
    for r in &packet.records {
        let name = RecordType::from_code(r.rtype).map_or("?", RecordType::name);
        println!("  {name:<18} {:>4} bytes", r.value.len());
    }

    let received = WirePacket::parse(&wire)?;
    let (_, plain) = message_security::verify_decrypt(&[&keys], &received, &alice)?;
    println!(
        "decrypted   {:?} with parents {:?}",
        String::from_utf8_lossy(&plain.body),
        plain.parents
    );
    println!("message id  {}", MsgId::from(received.id));
    Ok(())
}

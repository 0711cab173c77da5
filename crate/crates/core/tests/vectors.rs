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

mod common;

use common::golden;

#[test]
fn tlv_and_framing() {
    golden::tlv_and_framing().unwrap();
}

#[test]
fn padding_size_classes() {
    golden::padding().unwrap();
}

#[test]
fn data_packets_are_bit_exact() {
    golden::data_packets().unwrap();
}

#[test]
fn greeting_packet_is_bit_exact() {
    golden::greeting_packet().unwrap();
}

#[test]
fn signature_contexts_are_separate() {
    golden::context_separation().unwrap();
}

#[test]
fn sid_signature_group_key_and_chain_hash() {
    golden::session_values().unwrap();
}

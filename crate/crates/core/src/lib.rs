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

//! A group messaging protocol engine.
//!
//! The crate provides authenticated group key agreement (CLIQUES group
//! Diffie-Hellman over x25519 combined with an ephemeral signature key
//! exchange), an encrypted and signed data packet format, causally ordered
//! transcripts with acknowledgement tracking, and a session layer that ties
//! membership changes to an ordered group transport. A deterministic
//! simulated transport and scenario runner are included for testing.

pub mod aske;
pub mod cli;
pub mod codec;
pub mod error;
pub mod gka;
pub mod greeter;
pub mod identity;
pub mod liveness;
pub mod message_security;
pub mod observable;
pub mod server_order;
pub mod session;
pub mod simchannel;
pub mod transcript;
pub mod types;

pub use error::{Error, Result};
pub use types::{UserId, WarningCode};

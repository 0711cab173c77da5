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

use thiserror::Error;

/// Errors raised by the protocol engine.
///
/// Wire-level problems (`Malformed`, `NotMpenc`, ...) and protocol-level
/// problems (`AuthFailure`, `NotMyTurn`, ...) share one enum, since most
/// callers only need to decide whether to drop a packet or fail an operation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("record value of {0} bytes exceeds the 16-bit length field")]
    OversizeRecord(usize),
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("not an mpENC packet")]
    NotMpenc,
    #[error("unsupported protocol version {0:#06x}")]
    UnsupportedVersion(u16),
    #[error("invalid member list: {0}")]
    InvalidMembers(&'static str),
    #[error("packet is not addressed to the next member in the upflow")]
    NotMyTurn,
    #[error("a member may not exclude themselves")]
    SelfExclusion,
    #[error("contribution already present for this member")]
    AlreadyContributed,
    #[error("protocol state incomplete: {0}")]
    Incomplete(&'static str),
    #[error("authentication failure: {0}")]
    AuthFailure(&'static str),
    #[error("protocol violation: {0}")]
    ProtocolViolation(&'static str),
    #[error("message of {0} bytes is too large to pad")]
    MessageTooLarge(usize),
    #[error("no candidate subsession could verify-decrypt the packet")]
    Undecryptable,
    #[error("unknown message id")]
    NotFound,
    #[error("another membership change is already pending")]
    Busy,
    #[error("action rejected: {0}")]
    Rejected(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

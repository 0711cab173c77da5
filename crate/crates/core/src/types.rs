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

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A participant identifier. Ordering is byte-wise lexical over the UTF-8
/// encoding, which is what session-ID derivation relies on.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

pub fn ids<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<UserId> {
    names.into_iter().map(UserId::from).collect()
}

pub(crate) fn all_distinct(members: &[UserId]) -> bool {
    members.iter().collect::<BTreeSet<_>>().len() == members.len()
}

/// Machine-readable reason codes carried by security warnings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningCode {
    /// A peer's CHAIN_HASH disagrees with ours, or refers to history we
    /// never saw.
    ChainHashMismatch,
    /// A message was not acknowledged by every reader in time.
    FullAckTimeout,
    /// A packet waited too long for missing parents or keys.
    BufferedTooLong,
    /// A member has been silent for longer than the presence expiry.
    PresenceExpired,
    /// A subsession closed without its FIN being fully acknowledged.
    ShutdownIncomplete,
    /// A membership operation did not finish in time.
    OperationTimeout,
    /// A packet of a running operation failed verification.
    AuthFailure,
}

impl WarningCode {
    pub const ALL: [WarningCode; 7] = [
        WarningCode::ChainHashMismatch,
        WarningCode::FullAckTimeout,
        WarningCode::BufferedTooLong,
        WarningCode::PresenceExpired,
        WarningCode::ShutdownIncomplete,
        WarningCode::OperationTimeout,
        WarningCode::AuthFailure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WarningCode::ChainHashMismatch => "chain-hash-mismatch",
            WarningCode::FullAckTimeout => "full-ack-timeout",
            WarningCode::BufferedTooLong => "buffered-too-long",
            WarningCode::PresenceExpired => "presence-expired",
            WarningCode::ShutdownIncomplete => "shutdown-incomplete",
            WarningCode::OperationTimeout => "operation-timeout",
            WarningCode::AuthFailure => "auth-failure",
        }
    }
}

impl fmt::Display for WarningCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

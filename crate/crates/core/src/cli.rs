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

//! Scenario runner.
//!
//! A [`Scenario`] is a JSON document naming the members, a timeline of
//! steps and a list of assertions. [`run`] executes it on a
//! [`SimServer`] and produces a [`Report`],
//! which serialises to the same bytes every time for the same scenario and
//! seed, plus a human-readable trace.
//!
//! ```
//! use mpenc::cli::{run, RunOptions, Scenario};
//!
//! let scenario: Scenario = serde_json::from_str(r#"{
//!     "name": "pair",
//!     "members": ["alice", "bob"],
//!     "channel": ["alice", "bob"],
//!     "timeline": [
//!         {"at": 1, "propose": {"by": "alice", "include": ["bob"]}},
//!         {"at": 10, "send": {"by": "bob", "text": "hello"}}
//!     ],
//!     "assertions": [{"assert": "keys-equal"}, {"assert": "transcripts-equal"}]
//! }"#).unwrap();
//! let out = run(&scenario, &RunOptions::default()).unwrap();
//! assert!(out.report.passed);
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::liveness::FlowPolicy;
use crate::session::Notice;
use crate::simchannel::{Fault, PacketFilter, SimServer};
use crate::types::{UserId, WarningCode};

/// Exit code for a run whose assertions all held.
pub const EXIT_OK: i32 = 0;
/// Exit code for a run with at least one failed assertion.
pub const EXIT_ASSERTION: i32 = 1;
/// Exit code for a scenario that could not be read or does not fit the
/// schema.
pub const EXIT_SCHEMA: i32 = 2;

fn default_settle() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub members: Vec<MemberSpec>,
    /// Members placed in the channel before the first tick.
    #[serde(default)]
    pub channel: Vec<UserId>,
    #[serde(default)]
    pub policy: FlowPolicy,
    #[serde(default)]
    pub timeline: Vec<Step>,
    /// Ticks to run after the last step.
    #[serde(default = "default_settle")]
    pub settle: u64,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

/// A member, optionally with its own session seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MemberSpec {
    Id(UserId),
    Seeded { id: UserId, seed: u64 },
}

impl MemberSpec {
    pub fn id(&self) -> &UserId {
        match self {
            MemberSpec::Id(id) | MemberSpec::Seeded { id, .. } => id,
        }
    }
}

/// One timeline entry. Exactly one action field is set; `at` runs the
/// simulation up to that tick first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<UserId>,
    /// Formal shutdown: FIN, then leave the channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave: Option<UserId>,
    /// Abrupt removal from the channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disconnect: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propose: Option<ProposeStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub send: Option<SendStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    /// Run this many ticks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposeStep {
    pub by: UserId,
    #[serde(default)]
    pub include: Vec<UserId>,
    #[serde(default)]
    pub exclude: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SendStep {
    pub by: UserId,
    pub text: String,
}

/// Checks evaluated after the run. An empty `members` list means every
/// member still in the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "assert", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Assertion {
    TranscriptsEqual {
        #[serde(default)]
        members: Vec<UserId>,
    },
    KeysEqual {
        #[serde(default)]
        members: Vec<UserId>,
    },
    WarningExpected {
        code: WarningCode,
        member: UserId,
    },
    /// The distinct warning codes `member` raised are exactly `codes`.
    WarningsExactly {
        member: UserId,
        codes: Vec<WarningCode>,
    },
    NoWarnings {
        #[serde(default)]
        members: Vec<UserId>,
    },
    /// Operations `member` saw succeed.
    OpCount {
        member: UserId,
        count: usize,
    },
    /// Packets sent, counting each broadcast once.
    PacketCount {
        #[serde(default, rename = "type")]
        filter: PacketFilter,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<UserId>,
    },
    Members {
        member: UserId,
        expect: Vec<UserId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("scenario does not match the schema: {0}")]
    Schema(String),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        EXIT_SCHEMA
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn member_ids(&self) -> Vec<UserId> {
        self.members.iter().map(|m| m.id().clone()).collect()
    }

    /// Checks what the JSON types alone cannot: references to declared
    /// members, one action per step and non-decreasing step times.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Schema(msg));
        let ids = self.member_ids();
        let declared: BTreeSet<&UserId> = ids.iter().collect();
        if declared.len() != ids.len() {
            return bad("duplicate member id".into());
        }
        if ids.iter().any(|m| m.as_str().is_empty()) {
            return bad("empty member id".into());
        }
        let known = |m: &UserId, what: &str| -> Result<(), ScenarioError> {
            if declared.contains(m) {
                Ok(())
            } else {
                Err(ScenarioError::Schema(format!(
                    "{what} refers to undeclared member {m}"
                )))
            }
        };
        if let Err(e) = self.policy.validate() {
            return bad(format!("policy: {e}"));
        }
        for m in &self.channel {
            known(m, "channel")?;
        }
        let mut last_at = 0;
        for (i, step) in self.timeline.iter().enumerate() {
            let where_ = format!("timeline[{i}]");
            let actions = [
                step.join.is_some(),
                step.leave.is_some(),
                step.disconnect.is_some(),
                step.propose.is_some(),
                step.send.is_some(),
                step.fault.is_some(),
                step.tick.is_some(),
            ];
            if actions.iter().filter(|a| **a).count() != 1 {
                return bad(format!("{where_} must have exactly one action"));
            }
            if let Some(at) = step.at {
                if at < last_at {
                    return bad(format!("{where_} goes back in time ({at} < {last_at})"));
                }
                last_at = at;
            }
            for m in [&step.join, &step.leave, &step.disconnect]
                .into_iter()
                .flatten()
            {
                known(m, &where_)?;
            }
            if let Some(p) = &step.propose {
                for m in std::iter::once(&p.by).chain(&p.include).chain(&p.exclude) {
                    known(m, &where_)?;
                }
            }
            if let Some(s) = &step.send {
                known(&s.by, &where_)?;
            }
            if let Some(f) = &step.fault {
                f.validate()
                    .map_err(|e| ScenarioError::Schema(format!("{where_}: {e}")))?;
                let refs: Vec<&UserId> = match f {
                    Fault::Drop { from, to, .. }
                    | Fault::Delay { from, to, .. }
                    | Fault::Tamper { from, to, .. } => std::iter::once(from).chain(to).collect(),
                    Fault::Loss { from, .. } => from.iter().collect(),
                    Fault::Isolate { member, .. } => vec![member],
                };
                for m in refs {
                    known(m, &where_)?;
                }
            }
        }
        for (i, a) in self.assertions.iter().enumerate() {
            let where_ = format!("assertions[{i}]");
            let refs: Vec<&UserId> = match a {
                Assertion::TranscriptsEqual { members }
                | Assertion::KeysEqual { members }
                | Assertion::NoWarnings { members } => members.iter().collect(),
                Assertion::WarningExpected { member, .. }
                | Assertion::WarningsExactly { member, .. }
                | Assertion::OpCount { member, .. } => vec![member],
                Assertion::PacketCount { from, .. } => from.iter().collect(),
                Assertion::Members { member, expect } => {
                    std::iter::once(member).chain(expect).collect()
                }
            };
            for m in refs {
                known(m, &where_)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Replaces the scenario's seed.
    pub seed: Option<u64>,
    /// Unix time to record in the report header; `None` leaves it out.
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
    pub scenario: String,
    pub seed: u64,
    pub ticks: u64,
    pub passed: bool,
    pub assertions: Vec<AssertionResult>,
    pub step_errors: Vec<StepError>,
    pub packets: PacketSummary,
    pub members: BTreeMap<UserId, MemberReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepError {
    pub step: usize,
    pub at: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PacketSummary {
    pub greeting: usize,
    pub data: usize,
    pub other: usize,
    pub faulted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemberReport {
    pub in_channel: bool,
    pub members: Vec<UserId>,
    pub sid: String,
    pub chain_hash: String,
    pub operations: usize,
    pub transcript: Vec<TranscriptEntry>,
    pub notices: Vec<TimedNotice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub subsession: String,
    pub id: String,
    pub author: UserId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimedNotice {
    pub at: u64,
    #[serde(flatten)]
    pub notice: Notice,
}

impl Report {
    /// Pretty JSON followed by a newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_ASSERTION
        }
    }
}

/// Everything a run produces.
pub struct RunOutput {
    pub report: Report,
    /// One line per packet and notice, in time order.
    pub trace: Vec<String>,
    pub sim: SimServer,
}

impl std::fmt::Debug for RunOutput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOutput")
            .field("report", &self.report)
            .finish_non_exhaustive()
    }
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutput, ScenarioError> {
    run(&Scenario::load(path)?, opts)
}

pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let ids = scenario.member_ids();
    let member_seeds: BTreeMap<UserId, u64> = scenario
        .members
        .iter()
        .filter_map(|m| match m {
            MemberSpec::Seeded { id, seed } => Some((id.clone(), *seed)),
            MemberSpec::Id(_) => None,
        })
        .collect();
    let mut sim = SimServer::with_member_seeds(&ids, seed, scenario.policy, &member_seeds);
    for m in &scenario.channel {
        sim.join(m);
    }
    let mut step_errors = Vec::new();
    for (i, step) in scenario.timeline.iter().enumerate() {
        if let Some(at) = step.at {
            sim.run_until(at);
        }
        if let Err(e) = apply_step(&mut sim, step) {
            step_errors.push(StepError {
                step: i,
                at: sim.now(),
                error: e,
            });
        }
    }
    sim.run_for(scenario.settle);

    let assertions: Vec<AssertionResult> = scenario
        .assertions
        .iter()
        .map(|a| {
            let (passed, detail) = check(&sim, a);
            AssertionResult {
                assertion: a.clone(),
                passed,
                detail,
            }
        })
        .collect();
    let passed = assertions.iter().all(|a| a.passed);

    let mut packets = PacketSummary::default();
    for p in sim.packet_log() {
        match p.kind.as_str() {
            "greeting" => packets.greeting += 1,
            "data" => packets.data += 1,
            _ => packets.other += 1,
        }
        if !p.faults.is_empty() {
            packets.faulted += 1;
        }
    }

    let members = ids
        .iter()
        .map(|id| (id.clone(), member_report(&sim, id)))
        .collect();
    let report = Report {
        generated_at_unix: opts.timestamp,
        scenario: scenario.name.clone(),
        seed,
        ticks: sim.now(),
        passed,
        assertions,
        step_errors,
        packets,
        members,
    };
    let trace = trace(&sim, &ids, &report);
    Ok(RunOutput { report, trace, sim })
}

fn apply_step(sim: &mut SimServer, step: &Step) -> Result<(), String> {
    if let Some(m) = &step.join {
        sim.join(m);
    } else if let Some(m) = &step.leave {
        sim.shutdown(m).map_err(|e| e.to_string())?;
    } else if let Some(m) = &step.disconnect {
        sim.disconnect(std::slice::from_ref(m));
    } else if let Some(p) = &step.propose {
        sim.propose(&p.by, &p.include, &p.exclude)
            .map_err(|e| e.to_string())?;
    } else if let Some(s) = &step.send {
        sim.send(&s.by, &s.text).map_err(|e| e.to_string())?;
    } else if let Some(f) = &step.fault {
        sim.add_fault(f.clone());
    } else if let Some(n) = step.tick {
        sim.run_for(n);
    }
    Ok(())
}

fn member_report(sim: &SimServer, id: &UserId) -> MemberReport {
    let s = sim.session(id);
    let log = s.message_log();
    let transcript = log
        .sections()
        .flat_map(|(sid, entries)| {
            entries.iter().map(move |e| TranscriptEntry {
                subsession: hex::encode(&sid[..4]),
                id: e.id.short(),
                author: e.author.clone(),
                text: e.text.clone(),
            })
        })
        .collect();
    MemberReport {
        in_channel: sim.channel().contains(id),
        members: s.members().to_vec(),
        sid: hex::encode(s.current_keys().sid),
        chain_hash: hex::encode(s.chain_hash()),
        operations: succeeded_ops(sim, id),
        transcript,
        notices: sim
            .notices(id)
            .iter()
            .map(|(at, n)| TimedNotice {
                at: *at,
                notice: n.clone(),
            })
            .collect(),
    }
}

fn succeeded_ops(sim: &SimServer, id: &UserId) -> usize {
    sim.notices(id)
        .iter()
        .filter(|(_, n)| matches!(n, Notice::OperationSucceeded { .. }))
        .count()
}

fn warning_codes(sim: &SimServer, id: &UserId) -> BTreeSet<WarningCode> {
    sim.notices(id)
        .iter()
        .filter_map(|(_, n)| match n {
            Notice::SecurityWarning { code, .. } => Some(*code),
            _ => None,
        })
        .collect()
}

fn or_channel(sim: &SimServer, members: &[UserId]) -> Vec<UserId> {
    if members.is_empty() {
        sim.channel().iter().cloned().collect()
    } else {
        members.to_vec()
    }
}

fn fmt_codes(codes: &BTreeSet<WarningCode>) -> String {
    let v: Vec<&str> = codes.iter().map(|c| c.as_str()).collect();
    format!("[{}]", v.join(", "))
}

fn check(sim: &SimServer, a: &Assertion) -> (bool, String) {
    match a {
        Assertion::TranscriptsEqual { members } => {
            let who = or_channel(sim, members);
            let graph = |id: &UserId| {
                let t = sim.session(id).transcript();
                t.messages()
                    .map(|m| (m.id, m.parents.clone(), m.body.clone()))
                    .collect::<BTreeSet<_>>()
            };
            let Some(first) = who.first() else {
                return (true, "no members to compare".into());
            };
            let reference = graph(first);
            let differing: Vec<&UserId> = who.iter().filter(|m| graph(m) != reference).collect();
            if differing.is_empty() {
                (
                    true,
                    format!("{} members share {} messages", who.len(), reference.len()),
                )
            } else {
                (
                    false,
                    format!("transcripts of {differing:?} differ from {first}"),
                )
            }
        }
        Assertion::KeysEqual { members } => {
            let who = or_channel(sim, members);
            let Some(first) = who.first() else {
                return (true, "no members to compare".into());
            };
            let k = sim.session(first).current_keys();
            let differing: Vec<&UserId> = who
                .iter()
                .filter(|m| {
                    let o = sim.session(m).current_keys();
                    o.sid != k.sid || o.group_key != k.group_key || o.members != k.members
                })
                .collect();
            if differing.is_empty() {
                (
                    true,
                    format!(
                        "{} members share subsession {}",
                        who.len(),
                        hex::encode(&k.sid[..4])
                    ),
                )
            } else {
                (false, format!("keys of {differing:?} differ from {first}"))
            }
        }
        Assertion::WarningExpected { code, member } => {
            let codes = warning_codes(sim, member);
            (
                codes.contains(code),
                format!("{member} raised {}", fmt_codes(&codes)),
            )
        }
        Assertion::WarningsExactly { member, codes } => {
            let got = warning_codes(sim, member);
            let want: BTreeSet<WarningCode> = codes.iter().copied().collect();
            (
                got == want,
                format!(
                    "{member} raised {}, expected {}",
                    fmt_codes(&got),
                    fmt_codes(&want)
                ),
            )
        }
        Assertion::NoWarnings { members } => {
            let who = if members.is_empty() {
                sim.members().cloned().collect()
            } else {
                members.clone()
            };
            let noisy: Vec<String> = who
                .iter()
                .filter_map(|m| {
                    let c = warning_codes(sim, m);
                    (!c.is_empty()).then(|| format!("{m} {}", fmt_codes(&c)))
                })
                .collect();
            (
                noisy.is_empty(),
                if noisy.is_empty() {
                    "no warnings".into()
                } else {
                    noisy.join("; ")
                },
            )
        }
        Assertion::OpCount { member, count } => {
            let n = succeeded_ops(sim, member);
            (n == *count, format!("{member} saw {n} operations succeed"))
        }
        Assertion::PacketCount {
            filter,
            count,
            from,
        } => {
            let n = sim
                .packet_log()
                .iter()
                .filter(|p| from.as_ref().is_none_or(|f| *f == p.from))
                .filter(|p| match filter {
                    PacketFilter::Any => true,
                    PacketFilter::Greeting => p.kind == "greeting",
                    PacketFilter::Data => p.kind == "data",
                })
                .count();
            (n == *count, format!("{n} packets"))
        }
        Assertion::Members { member, expect } => {
            let got = sim.session(member).members();
            let mut want = expect.clone();
            want.sort();
            let mut have = got.to_vec();
            have.sort();
            (have == want, format!("{member} sees {got:?}"))
        }
    }
}

fn trace(sim: &SimServer, ids: &[UserId], report: &Report) -> Vec<String> {
    let mut lines: Vec<(u64, u8, String)> = Vec::new();
    for p in sim.packet_log() {
        let what = p.stage.as_deref().unwrap_or(&p.kind);
        let mut line = format!(
            "t={:<4} {} sends {} {} ({} bytes)",
            p.at, p.from, what, p.id, p.len
        );
        if !p.faults.is_empty() {
            line.push_str(&format!(" [{}]", p.faults.join(", ")));
        }
        lines.push((p.at, 0, line));
    }
    for id in ids {
        for (at, n) in sim.notices(id) {
            let body = serde_json::to_string(n).expect("notice serialises");
            lines.push((*at, 1, format!("t={at:<4} {id}: {body}")));
        }
    }
    lines.sort_by_key(|(at, kind, _)| (*at, *kind));
    let mut out: Vec<String> = lines.into_iter().map(|(_, _, l)| l).collect();
    for a in &report.assertions {
        let tag = if a.passed { "PASS" } else { "FAIL" };
        let name = serde_json::to_value(&a.assertion)
            .ok()
            .and_then(|v| v.get("assert").and_then(|s| s.as_str().map(str::to_owned)))
            .unwrap_or_default();
        out.push(format!("{tag} {name}: {}", a.detail));
    }
    out
}

/// Writes each member's message log to `<dir>/<member>.json`.
pub fn dump_transcripts(out: &RunOutput, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (id, m) in &out.report.members {
        let json = serde_json::to_string_pretty(&m.transcript).expect("transcript serialises");
        fs::write(dir.join(format!("{id}.json")), json + "\n")?;
    }
    Ok(())
}

/// Writes each member's current causal graph to `<dir>/<member>.dot`.
pub fn dump_dot(out: &RunOutput, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for id in out.sim.members() {
        let dot = out.sim.session(id).transcript().to_dot(id.as_str());
        fs::write(dir.join(format!("{id}.dot")), dot)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_timeline_gives_empty_report() {
        let s = Scenario::from_json(r#"{"name": "empty", "members": ["a", "b"]}"#).unwrap();
        let out = run(&s, &RunOptions::default()).unwrap();
        assert!(out.report.passed);
        assert_eq!(out.report.packets, PacketSummary::default());
        assert!(out
            .report
            .members
            .values()
            .all(|m| m.notices.is_empty() && m.transcript.is_empty()));
        assert_eq!(out.report.exit_code(), EXIT_OK);
    }

    #[test]
    fn schema_violations() {
        let cases = [
            r#"{"members": ["a"]}"#,
            r#"{"name": "x", "members": ["a"], "surprise": 1}"#,
            r#"{"name": "x", "members": ["a", "a"]}"#,
            r#"{"name": "x", "members": ["a"], "channel": ["b"]}"#,
            r#"{"name": "x", "members": ["a"], "timeline": [{"at": 1}]}"#,
            r#"{"name": "x", "members": ["a"], "timeline": [{"join": "a", "tick": 1}]}"#,
            r#"{"name": "x", "members": ["a"], "timeline": [{"at": 5, "join": "a"}, {"at": 2, "tick": 1}]}"#,
            r#"{"name": "x", "members": ["a"], "assertions": [{"assert": "op-count", "member": "z", "count": 1}]}"#,
            r#"{"name": "x", "members": ["a"], "assertions": [{"assert": "bogus"}]}"#,
            r#"{"name": "x", "members": ["a"], "timeline": [{"fault": {"kind": "drop", "from": "a", "nth": 0}}]}"#,
        ];
        for c in cases {
            let e = Scenario::from_json(c).unwrap_err();
            assert!(matches!(e, ScenarioError::Schema(_)), "{c}");
            assert_eq!(e.exit_code(), EXIT_SCHEMA);
        }
    }

    #[test]
    fn failed_assertion_sets_exit_code() {
        let s = Scenario::from_json(
            r#"{"name": "x", "members": ["a"], "assertions": [{"assert": "op-count", "member": "a", "count": 3}]}"#,
        )
        .unwrap();
        let out = run(&s, &RunOptions::default()).unwrap();
        assert!(!out.report.passed);
        assert_eq!(out.report.exit_code(), EXIT_ASSERTION);
        assert!(out.trace.last().unwrap().starts_with("FAIL op-count"));
    }

    #[test]
    fn timestamp_is_optional_header() {
        let s = Scenario::from_json(r#"{"name": "t", "members": ["a"]}"#).unwrap();
        let plain = run(&s, &RunOptions::default()).unwrap().report.to_json();
        let stamped = run(
            &s,
            &RunOptions {
                timestamp: Some(42),
                ..Default::default()
            },
        )
        .unwrap()
        .report
        .to_json();
        assert!(!plain.contains("generated_at_unix"));
        assert!(stamped.starts_with("{\n  \"generated_at_unix\": 42,"));
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Timestamp;

/// The closed action vocabulary of trace events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Redirect,
    Authenticate,
    Issue,
    Translate,
    QueryAttrs,
    Aggregate,
    Present,
    Extract,
    Authorize,
    Provision,
}

impl Action {
    pub const ALL: [Action; 10] = [
        Action::Redirect,
        Action::Authenticate,
        Action::Issue,
        Action::Translate,
        Action::QueryAttrs,
        Action::Aggregate,
        Action::Present,
        Action::Extract,
        Action::Authorize,
        Action::Provision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Redirect => "redirect",
            Action::Authenticate => "authenticate",
            Action::Issue => "issue",
            Action::Translate => "translate",
            Action::QueryAttrs => "query-attrs",
            Action::Aggregate => "aggregate",
            Action::Present => "present",
            Action::Extract => "extract",
            Action::Authorize => "authorize",
            Action::Provision => "provision",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| TraceError::UnknownAction(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("malformed skeleton entry `{0}` (expected `<step> <actor-kind> <action>`)")]
    MalformedSkeleton(String),
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

/// One recorded action. `actor_kind` is the entity kind label, or `user`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEvent {
    pub flow: usize,
    pub seq: u64,
    pub time: Timestamp,
    pub step: u8,
    pub actor: String,
    pub actor_kind: String,
    pub action: Action,
    #[serde(default)]
    pub summary: BTreeMap<String, String>,
}

impl FlowEvent {
    pub fn triple(&self) -> SkeletonEntry {
        SkeletonEntry {
            step: self.step,
            actor_kind: self.actor_kind.clone(),
            action: self.action,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowTrace {
    pub events: Vec<FlowEvent>,
}

impl FlowTrace {
    pub fn count(&self, action: Action) -> usize {
        self.events.iter().filter(|e| e.action == action).count()
    }

    /// One JSON object per line, keys in fixed order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: FlowEvent = serde_json::from_str(line).map_err(|err| TraceError::Malformed {
                line: i + 1,
                detail: err.to_string(),
            })?;
            events.push(e);
        }
        Ok(FlowTrace { events })
    }

    /// The full skeleton of this trace.
    pub fn skeleton(&self) -> Vec<SkeletonEntry> {
        self.events.iter().map(FlowEvent::triple).collect()
    }

    /// Sequence numbers strictly increase and steps never go back.
    pub fn check_order(&self) -> Result<(), String> {
        for w in self.events.windows(2) {
            if w[1].flow != w[0].flow {
                continue;
            }
            if w[1].seq <= w[0].seq {
                return Err(format!("seq {} follows {}", w[1].seq, w[0].seq));
            }
            if w[1].step < w[0].step {
                return Err(format!("step {} after step {} at seq {}", w[1].step, w[0].step, w[1].seq));
            }
        }
        Ok(())
    }
}

/// An expected `(step, actor-kind, action)` triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SkeletonEntry {
    pub step: u8,
    pub actor_kind: String,
    pub action: Action,
}

impl SkeletonEntry {
    pub fn new(step: u8, actor_kind: &str, action: Action) -> Self {
        SkeletonEntry {
            step,
            actor_kind: actor_kind.to_string(),
            action,
        }
    }
}

impl fmt::Display for SkeletonEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.step, self.actor_kind, self.action)
    }
}

impl FromStr for SkeletonEntry {
    type Err = TraceError;

    /// Parses `"4 proxy aggregate"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TraceError::MalformedSkeleton(s.to_string());
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [step, kind, action] = parts.as_slice() else {
            return Err(bad());
        };
        let step: u8 = step.parse().map_err(|_| bad())?;
        if !(1..=5).contains(&step) {
            return Err(bad());
        }
        Ok(SkeletonEntry {
            step,
            actor_kind: kind.to_string(),
            action: action.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceDiff {
    /// Skeleton entry `index` has no counterpart in the trace.
    Missing { index: usize, entry: SkeletonEntry },
    /// Event `seq` is not in a strict skeleton.
    Unexpected { seq: u64, entry: SkeletonEntry },
}

impl fmt::Display for TraceDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceDiff::Missing { index, entry } => write!(f, "missing ({entry}) [skeleton #{index}]"),
            TraceDiff::Unexpected { seq, entry } => write!(f, "unexpected ({entry}) at seq {seq}"),
        }
    }
}

/// Matches `expected` as a subsequence of the trace via a longest common
/// subsequence. Every skeleton entry outside the match is reported missing;
/// with `strict`, every unmatched event is reported unexpected.
pub fn diff_trace(actual: &FlowTrace, expected: &[SkeletonEntry], strict: bool) -> Vec<TraceDiff> {
    let got = actual.skeleton();
    let (n, m) = (got.len(), expected.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if got[i] == expected[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut diffs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && got[i] == expected[j] {
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            diffs.push(TraceDiff::Missing {
                index: j,
                entry: expected[j].clone(),
            });
            j += 1;
        } else {
            if strict {
                diffs.push(TraceDiff::Unexpected {
                    seq: actual.events[i].seq,
                    entry: got[i].clone(),
                });
            }
            i += 1;
        }
    }
    diffs.sort_by_key(|d| match d {
        TraceDiff::Missing { index, .. } => (0, *index as u64),
        TraceDiff::Unexpected { seq, .. } => (1, *seq),
    });
    diffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(triples: &[&str]) -> FlowTrace {
        FlowTrace {
            events: triples
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let e: SkeletonEntry = t.parse().unwrap();
                    FlowEvent {
                        flow: 0,
                        seq: i as u64 + 1,
                        time: i as i64,
                        step: e.step,
                        actor: format!("{}:x", e.actor_kind),
                        actor_kind: e.actor_kind,
                        action: e.action,
                        summary: BTreeMap::new(),
                    }
                })
                .collect(),
        }
    }

    const PROXY: [&str; 6] = [
        "1 sp redirect",
        "2 idp issue",
        "3 user present",
        "4 proxy aggregate",
        "4 proxy issue",
        "5 sp authorize",
    ];

    #[test]
    fn identical_strict_has_no_diffs() {
        let t = trace(&PROXY);
        assert!(diff_trace(&t, &t.skeleton(), true).is_empty());
    }

    #[test]
    fn omission_names_the_missing_triple() {
        let mut partial = PROXY.to_vec();
        partial.remove(3);
        let t = trace(&partial);
        let expected: Vec<SkeletonEntry> = PROXY.iter().map(|s| s.parse().unwrap()).collect();
        let diffs = diff_trace(&t, &expected, false);
        assert_eq!(diffs.len(), 1);
        assert_eq!(diffs[0].to_string(), "missing (4 proxy aggregate) [skeleton #3]");
    }

    #[test]
    fn extra_events_only_matter_when_strict() {
        let t = trace(&PROXY);
        let expected: Vec<SkeletonEntry> = ["1 sp redirect", "5 sp authorize"].iter().map(|s| s.parse().unwrap()).collect();
        assert!(diff_trace(&t, &expected, false).is_empty());
        assert_eq!(diff_trace(&t, &expected, true).len(), 4);
    }

    #[test]
    fn jsonl_round_trips() {
        let t = trace(&PROXY);
        assert_eq!(FlowTrace::from_jsonl(&t.to_jsonl()).unwrap(), t);
        assert!(FlowTrace::from_jsonl("{not json}\n").is_err());
    }
}

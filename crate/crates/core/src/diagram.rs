//! Sequence diagrams from recorded traces.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::flow::{FlowEvent, FlowTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagramFormat {
    Text,
    Mermaid,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown diagram format `{0}` (expected text or mermaid)")]
pub struct UnknownFormat(pub String);

impl FromStr for DiagramFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(DiagramFormat::Text),
            "mermaid" => Ok(DiagramFormat::Mermaid),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

/// One event drawn as a message between two lifelines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrow {
    pub flow: usize,
    pub seq: u64,
    pub step: u8,
    pub from: String,
    pub to: String,
    pub label: String,
}

/// The counterpart of an event: `to`, else `audience`, else `source`,
/// else the actor itself.
pub fn target(e: &FlowEvent) -> &str {
    ["to", "audience", "source"]
        .iter()
        .find_map(|k| e.summary.get(*k))
        .map(String::as_str)
        .unwrap_or(&e.actor)
}

pub fn arrows(trace: &FlowTrace) -> Vec<Arrow> {
    trace
        .events
        .iter()
        .map(|e| Arrow {
            flow: e.flow,
            seq: e.seq,
            step: e.step,
            from: e.actor.clone(),
            to: target(e).to_string(),
            label: e.action.to_string(),
        })
        .collect()
}

/// Lifelines in order of first appearance.
pub fn participants(arrows: &[Arrow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in arrows {
        for name in [&a.from, &a.to] {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
    }
    out
}

pub fn render(trace: &FlowTrace, format: DiagramFormat) -> String {
    match format {
        DiagramFormat::Text => render_text(trace),
        DiagramFormat::Mermaid => render_mermaid(trace),
    }
}

/// `participants:` line, then one `flow.seq actor -> target: action (step n)`
/// line per event.
pub fn render_text(trace: &FlowTrace) -> String {
    let arrows = arrows(trace);
    let mut out = String::new();
    let _ = writeln!(out, "participants: {}", participants(&arrows).join(", "));
    for a in &arrows {
        let _ = writeln!(out, "{}.{} {} -> {}: {} (step {})", a.flow, a.seq, a.from, a.to, a.label, a.step);
    }
    out
}

/// Mermaid `sequenceDiagram`; actor names appear verbatim as participant
/// labels behind generated aliases.
pub fn render_mermaid(trace: &FlowTrace) -> String {
    let arrows = arrows(trace);
    let names = participants(&arrows);
    let alias = |n: &str| format!("P{}", names.iter().position(|x| x == n).expect("collected above"));
    let mut out = String::from("sequenceDiagram\n");
    for (i, n) in names.iter().enumerate() {
        let _ = writeln!(out, "    participant P{i} as {n}");
    }
    let mut flow = None;
    for a in &arrows {
        if flow != Some(a.flow) {
            flow = Some(a.flow);
            let _ = writeln!(out, "    Note over {}: flow {}", alias(&a.from), a.flow);
        }
        let _ = writeln!(out, "    {}->>{}: {} {}", alias(&a.from), alias(&a.to), a.step, a.label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRACE: &str = r#"{"flow":0,"seq":1,"time":0,"step":1,"actor":"sp:s","actor_kind":"sp","action":"redirect","summary":{"to":"idp:h"}}
{"flow":0,"seq":2,"time":1,"step":2,"actor":"idp:h","actor_kind":"idp","action":"authenticate","summary":{"user":"u"}}
{"flow":0,"seq":3,"time":2,"step":2,"actor":"idp:h","actor_kind":"idp","action":"issue","summary":{"audience":"sp:s"}}
{"flow":0,"seq":4,"time":3,"step":3,"actor":"user:u","actor_kind":"user","action":"present","summary":{"to":"sp:s"}}
{"flow":0,"seq":5,"time":4,"step":5,"actor":"sp:s","actor_kind":"sp","action":"authorize","summary":{"decision":"granted"}}
"#;

    #[test]
    fn one_arrow_per_event_in_order() {
        let t = FlowTrace::from_jsonl(TRACE).unwrap();
        let text = render_text(&t);
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "0.1 sp:s -> idp:h: redirect (step 1)");
        assert_eq!(lines[1], "0.2 idp:h -> idp:h: authenticate (step 2)");
        assert_eq!(lines[4], "0.5 sp:s -> sp:s: authorize (step 5)");
    }

    #[test]
    fn mermaid_keeps_actor_names() {
        let t = FlowTrace::from_jsonl(TRACE).unwrap();
        let m = render_mermaid(&t);
        assert!(m.starts_with("sequenceDiagram\n"));
        for name in ["sp:s", "idp:h", "user:u"] {
            assert!(m.contains(&format!(" as {name}\n")), "{name}");
        }
        assert_eq!(m.lines().filter(|l| l.contains("->>")).count(), 5);
    }

    #[test]
    fn format_names() {
        assert_eq!("mermaid".parse::<DiagramFormat>().unwrap(), DiagramFormat::Mermaid);
        assert!("svg".parse::<DiagramFormat>().is_err());
    }
}

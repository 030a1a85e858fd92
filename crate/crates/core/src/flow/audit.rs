use std::fmt;

use super::trace::{Action, FlowEvent};
use crate::model::EntityId;
use crate::topology::Topology;

/// An attribute that reached an audience its issuer's policy excludes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PolicyViolation {
    pub flow: usize,
    pub seq: u64,
    pub issuer: String,
    pub audience: String,
    pub attribute: String,
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "flow {} seq {}: {} released `{}` to {}",
            self.flow, self.seq, self.issuer, self.attribute, self.audience
        )
    }
}

/// The `(issuer, audience)` pair whose release policy governs the
/// attributes an event carries, if any.
fn governing_pair(e: &FlowEvent) -> Option<(&str, &str)> {
    let get = |k: &str| e.summary.get(k).map(String::as_str);
    match e.action {
        Action::Issue => Some((get("issuer").unwrap_or(&e.actor), get("audience")?)),
        Action::Translate => Some((get("origin")?, get("audience")?)),
        Action::QueryAttrs => Some((get("source")?, &e.actor)),
        _ => None,
    }
}

/// Post-processes a trace: every attribute name an event carries must be
/// in the release policy of the governing pair.
pub fn audit_release(t: &Topology, events: &[FlowEvent]) -> Vec<PolicyViolation> {
    let mut out = Vec::new();
    for e in events {
        let Some((issuer, audience)) = governing_pair(e) else {
            continue;
        };
        let Some(attrs) = e.summary.get("attrs") else {
            continue;
        };
        let (Ok(i), Ok(a)) = (EntityId::new(issuer), EntityId::new(audience)) else {
            continue;
        };
        for name in attrs.split(',').filter(|n| !n.is_empty()) {
            if !t.releases(&i, &a, name) {
                out.push(PolicyViolation {
                    flow: e.flow,
                    seq: e.seq,
                    issuer: issuer.to_string(),
                    audience: audience.to_string(),
                    attribute: name.to_string(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::topology::load_topology;

    const DOC: &str = r#"fedsim-topology v1
[[entities]]
id = "idp:h"
kind = "IdP"
[[entities]]
id = "sp:s"
kind = "SP"
[[policies]]
issuer = "idp:h"
audience = "sp:s"
release = ["mail"]
"#;

    fn event(action: Action, pairs: &[(&str, &str)]) -> FlowEvent {
        FlowEvent {
            flow: 0,
            seq: 1,
            time: 0,
            step: 2,
            actor: "idp:h".into(),
            actor_kind: "idp".into(),
            action,
            summary: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn unreleased_attribute_is_flagged() {
        let t = load_topology(DOC).unwrap();
        let ok = event(Action::Issue, &[("issuer", "idp:h"), ("audience", "sp:s"), ("attrs", "mail")]);
        let bad = event(Action::Issue, &[("issuer", "idp:h"), ("audience", "sp:s"), ("attrs", "mail,group")]);
        assert!(audit_release(&t, &[ok]).is_empty());
        let v = audit_release(&t, &[bad]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].attribute, "group");
    }

    #[test]
    fn events_without_audience_are_skipped() {
        let t = load_topology(DOC).unwrap();
        let e = event(Action::Issue, &[("issuer", "idp:h"), ("granted", "vo")]);
        assert!(audit_release(&t, &[e]).is_empty());
    }
}

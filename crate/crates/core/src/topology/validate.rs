use std::fmt;

use serde::Serialize;

use super::doc::protocols_compatible;
use super::{EntityKind, FederationModel, Topology};
use crate::model::EntityId;

/// One violated structural rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub rule: &'static str,
    pub entity: Option<EntityId>,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entity {
            Some(e) => write!(f, "{} [{}]: {}", self.rule, e, self.detail),
            None => write!(f, "{}: {}", self.rule, self.detail),
        }
    }
}

fn finding(rule: &'static str, entity: Option<&EntityId>, detail: String) -> Finding {
    Finding {
        rule,
        entity: entity.cloned(),
        detail,
    }
}

/// Checks every structural invariant of `t`. An empty report means the
/// topology is sound.
pub fn validate_invariants(t: &Topology) -> Vec<Finding> {
    let mut out = Vec::new();
    let known = |id: &EntityId| t.entities.contains_key(id);

    for f in t.federations.values() {
        for m in &f.members {
            if !known(m) {
                out.push(finding("dangling-reference", Some(m), format!("member of federation {}", f.id)));
            }
        }
        let hub_ok = match f.model {
            FederationModel::HubAndSpoke => f.hub.as_ref().is_some_and(|h| f.members.contains(h)),
            FederationModel::FullMesh => f.hub.is_none(),
        };
        if !hub_ok {
            out.push(finding("hub-missing", f.hub.as_ref(), format!("federation {}", f.id)));
        }
    }

    for ((issuer, audience), _) in &t.release_policies {
        for who in [issuer, audience] {
            if !known(who) {
                out.push(finding("dangling-reference", Some(who), "release policy".into()));
            }
        }
    }

    for e in t.entities.values() {
        if e.id.as_str().contains('|') {
            out.push(finding("separator-in-id", Some(&e.id), "entity ids must not contain `|`".into()));
        }
        if !protocols_compatible(e) {
            out.push(finding("kind-protocol-mismatch", Some(&e.id), format!("{} with {:?}", e.kind, e.protocols)));
        }
        if e.kind != EntityKind::SP && !t.anchors.contains(&e.id) {
            out.push(finding("anchor-missing", Some(&e.id), "issuer has no registered key".into()));
        }
        let mut refs: Vec<(&EntityId, &str)> = e.anchors.iter().map(|a| (a, "anchor")).collect();
        refs.extend(e.certified_by.iter().map(|c| (c, "certified_by")));
        if let Some(p) = &e.proxy {
            refs.extend(p.sources.iter().map(|s| (&s.aa, "source")));
        }
        if let Some(s) = &e.service {
            refs.extend(s.sources.iter().map(|x| (&x.aa, "source")));
            refs.extend(s.registration_sp.iter().map(|r| (r, "registration_sp")));
            refs.extend(s.voms.iter().map(|v| (&v.server, "voms server")));
        }
        for (r, what) in refs {
            if !known(r) {
                out.push(finding("dangling-reference", Some(&e.id), format!("{what} `{r}`")));
            }
        }

        let Some(target) = &e.internal_behind else { continue };
        if e.kind != EntityKind::SP {
            out.push(finding("internal-behind-non-sp", Some(&e.id), format!("{} is {}", e.id, e.kind)));
            continue;
        }
        match t.entities.get(target) {
            None => {
                out.push(finding("dangling-reference", Some(&e.id), format!("internal_behind `{target}`")));
                continue;
            }
            Some(p) if p.kind != EntityKind::Proxy => {
                out.push(finding("internal-behind-not-proxy", Some(&e.id), format!("{target} is {}", p.kind)));
                continue;
            }
            Some(_) => {}
        }
        let extra: Vec<String> = e
            .anchors
            .iter()
            .filter(|a| *a != target)
            .map(|a| format!("anchor {a}"))
            .chain(t.federations_of(&e.id).map(|f| format!("federation {}", f.id)))
            .collect();
        if !extra.is_empty() {
            out.push(finding("internal-sp-multiple-trust", Some(&e.id), extra.join(", ")));
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    const DOC: &str = r#"fedsim-topology v1
[[entities]]
id = "idp:home"
kind = "IdP"
[[entities]]
id = "proxy:p"
kind = "Proxy"
anchors = ["idp:home"]
[entities.proxy]
scope = "p.example"
[[entities]]
id = "sp:int"
kind = "SP"
internal_behind = "proxy:p"
anchors = ["proxy:p"]
"#;

    #[test]
    fn clean_topology_has_no_findings() {
        assert!(validate_invariants(&load_topology(DOC).unwrap()).is_empty());
    }

    #[test]
    fn second_anchor_on_internal_sp_is_reported() {
        let doc = DOC.replace("anchors = [\"proxy:p\"]", "anchors = [\"proxy:p\", \"idp:home\"]");
        let report = validate_invariants(&load_topology(&doc).unwrap());
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].rule, "internal-sp-multiple-trust");
    }
}

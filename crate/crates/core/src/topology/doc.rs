//! `fedsim-topology v1` documents: a header line followed by TOML.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    build_anchors, Entity, EntityKind, Federation, FederationModel, Lifetimes, Topology,
    TopologyError,
};
use crate::model::{is_canonical, EntityId, Technology, Timestamp};

pub const TOPOLOGY_HEADER: &str = "fedsim-topology v1";
pub const SCENARIO_HEADER: &str = "fedsim-scenario v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentKind {
    Topology,
    Scenario,
}

fn default_epoch() -> Timestamp {
    1_700_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub issuer: EntityId,
    pub audience: EntityId,
    #[serde(default)]
    pub release: BTreeSet<String>,
}

/// The serialized form of a [`Topology`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "default_epoch")]
    pub epoch: Timestamp,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lifetimes: Lifetimes,
    #[serde(default)]
    pub entities: Vec<Entity>,
    #[serde(default)]
    pub federations: Vec<Federation>,
    #[serde(default)]
    pub policies: Vec<PolicyDoc>,
}

/// Splits off the header line. Leading blank and `#` comment lines are skipped.
pub fn parse_header(text: &str) -> Result<(DocumentKind, &str), TopologyError> {
    let mut rest = text;
    loop {
        let (line, tail) = match rest.find('\n') {
            Some(i) => (&rest[..i], &rest[i + 1..]),
            None => (rest, ""),
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            if tail.is_empty() {
                return Err(TopologyError::MissingHeader);
            }
            rest = tail;
            continue;
        }
        return match trimmed {
            TOPOLOGY_HEADER => Ok((DocumentKind::Topology, tail)),
            SCENARIO_HEADER => Ok((DocumentKind::Scenario, tail)),
            other if other.starts_with("fedsim-") => {
                Err(TopologyError::UnsupportedHeader(other.to_string()))
            }
            _ => Err(TopologyError::MissingHeader),
        };
    }
}

/// Parses a topology or scenario document into a linked [`Topology`].
/// Scenario sections are ignored.
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let (kind, body) = parse_header(text)?;
    let mut table: toml::Table = toml::from_str(body).map_err(|e| TopologyError::Parse(e.to_string()))?;
    if kind == DocumentKind::Scenario {
        for section in ["setup", "flows", "expected"] {
            table.remove(section);
        }
    }
    let doc: TopologyDoc = table
        .try_into()
        .map_err(|e: toml::de::Error| TopologyError::Parse(e.to_string()))?;
    link(doc)
}

fn dangling(context: impl Into<String>, missing: &EntityId) -> TopologyError {
    TopologyError::DanglingReference {
        context: context.into(),
        missing: missing.clone(),
    }
}

fn kind_allows(kind: EntityKind, protocols: &BTreeSet<Technology>) -> bool {
    let only = |t: Technology| protocols.len() == 1 && protocols.contains(&t);
    match kind {
        EntityKind::CA | EntityKind::VOMS => only(Technology::X509),
        EntityKind::IdP => only(Technology::Saml),
        EntityKind::OP => only(Technology::Oidc),
        _ => true,
    }
}

pub(super) fn protocols_compatible(e: &Entity) -> bool {
    kind_allows(e.kind, &e.protocols)
}

fn check_scope(owner: &EntityId, scope: &str) -> Result<(), TopologyError> {
    if scope.is_empty() || scope.contains('@') {
        return Err(TopologyError::Invalid(format!("{owner}: malformed scope `{scope}`")));
    }
    Ok(())
}

fn check_mapping(owner: &EntityId, mapping: &BTreeMap<String, String>) -> Result<(), TopologyError> {
    for (from, to) in mapping {
        if from.is_empty() || !is_canonical(to) {
            return Err(TopologyError::Invalid(format!(
                "{owner}: mapping `{from}` -> `{to}` must target a canonical name"
            )));
        }
    }
    Ok(())
}

fn link(doc: TopologyDoc) -> Result<Topology, TopologyError> {
    let mut entities: BTreeMap<EntityId, Entity> = BTreeMap::new();
    for mut e in doc.entities {
        if e.id.as_str().contains('|') {
            return Err(TopologyError::SeparatorInId(e.id));
        }
        if e.protocols.is_empty() {
            e.protocols = e.kind.default_protocols().iter().copied().collect();
        }
        if entities.contains_key(&e.id) {
            return Err(TopologyError::DuplicateEntity(e.id));
        }
        entities.insert(e.id.clone(), e);
    }

    let mut federations = BTreeMap::new();
    for f in doc.federations {
        for m in &f.members {
            if !entities.contains_key(m) {
                return Err(dangling(format!("federation `{}`", f.id), m));
            }
        }
        match (f.model, &f.hub) {
            (FederationModel::HubAndSpoke, Some(h)) if f.members.contains(h) => {}
            (FederationModel::HubAndSpoke, _) => return Err(TopologyError::HubMissing(f.id)),
            (FederationModel::FullMesh, Some(_)) => {
                return Err(TopologyError::Invalid(format!(
                    "federation `{}` is full-mesh but declares a hub",
                    f.id
                )))
            }
            (FederationModel::FullMesh, None) => {}
        }
        if federations.contains_key(&f.id) {
            return Err(TopologyError::DuplicateFederation(f.id));
        }
        federations.insert(f.id.clone(), f);
    }

    for e in entities.values() {
        check_entity(e, &entities)?;
    }

    let mut release_policies: BTreeMap<(EntityId, EntityId), BTreeSet<String>> = BTreeMap::new();
    for p in doc.policies {
        for who in [&p.issuer, &p.audience] {
            if !entities.contains_key(who) {
                return Err(dangling("release policy", who));
            }
        }
        release_policies
            .entry((p.issuer, p.audience))
            .or_default()
            .extend(p.release);
    }

    let anchors = build_anchors(doc.seed, entities.values())?;
    Ok(Topology {
        name: doc.name,
        description: doc.description,
        epoch: doc.epoch,
        seed: doc.seed,
        lifetimes: doc.lifetimes,
        entities,
        federations,
        release_policies,
        anchors,
    })
}

fn check_entity(e: &Entity, entities: &BTreeMap<EntityId, Entity>) -> Result<(), TopologyError> {
    let exists = |id: &EntityId, ctx: &str| {
        if entities.contains_key(id) {
            Ok(())
        } else {
            Err(dangling(format!("{} of `{}`", ctx, e.id), id))
        }
    };
    if let Some(target) = &e.internal_behind {
        exists(target, "internal_behind")?;
        if e.kind != EntityKind::SP {
            return Err(TopologyError::InternalBehindOnNonSp(e.id.clone()));
        }
        if entities[target].kind != EntityKind::Proxy {
            return Err(TopologyError::InternalBehindNonProxy {
                sp: e.id.clone(),
                target: target.clone(),
            });
        }
    }
    for a in &e.anchors {
        exists(a, "anchor")?;
    }
    if let Some(c) = &e.certified_by {
        exists(c, "certified_by")?;
    }
    if !protocols_compatible(e) {
        let names: Vec<&str> = e.protocols.iter().map(|p| p.as_str()).collect();
        return Err(TopologyError::KindProtocolMismatch(e.id.clone(), names.join(",")));
    }
    for u in &e.users {
        if u.subject.is_empty() || u.attributes.keys().any(String::is_empty) {
            return Err(TopologyError::Invalid(format!("{}: malformed user entry", e.id)));
        }
    }
    for r in &e.routes {
        if r.lifetime <= 0 {
            return Err(TopologyError::Invalid(format!(
                "{}: route {}->{} needs a positive lifetime",
                e.id, r.from, r.to
            )));
        }
    }
    if let Some(a) = &e.authority {
        for rec in &a.records {
            if let Some(i) = &rec.issuer {
                exists(i, "authority record issuer")?;
            }
            let keyed = match a.keying {
                super::Keying::Home => rec.issuer.is_some() && rec.subject.is_some(),
                super::Keying::UniqueId => rec.unique_id.is_some(),
            };
            if !keyed {
                return Err(TopologyError::Invalid(format!(
                    "{}: authority record lacks its subject key",
                    e.id
                )));
            }
            for role in &rec.roles {
                match role.split_once(':') {
                    Some((g, r)) if !g.is_empty() && !r.is_empty() && rec.groups.iter().any(|x| x == g) => {}
                    _ => {
                        return Err(TopologyError::Invalid(format!(
                            "{}: role `{role}` must be `group:role` with a held group",
                            e.id
                        )))
                    }
                }
            }
        }
    }
    if let Some(p) = &e.proxy {
        check_scope(&e.id, &p.scope)?;
        check_mapping(&e.id, &p.mapping)?;
        for s in &p.sources {
            exists(&s.aa, "source")?;
        }
    }
    if let Some(s) = &e.service {
        if let Some(r) = &s.registration_sp {
            exists(r, "registration_sp")?;
        }
        for src in &s.sources {
            exists(&src.aa, "source")?;
        }
        if let Some(scope) = &s.scope {
            check_scope(&e.id, scope)?;
        }
        check_mapping(&e.id, &s.mapping)?;
        if let Some(v) = &s.voms {
            exists(&v.server, "voms server")?;
        }
        for rule in &s.authz {
            rule.check().map_err(|m| TopologyError::Invalid(format!("{}: {m}", e.id)))?;
        }
    }
    Ok(())
}

pub(super) fn to_doc(t: &Topology) -> TopologyDoc {
    TopologyDoc {
        name: t.name.clone(),
        description: t.description.clone(),
        epoch: t.epoch,
        seed: t.seed,
        lifetimes: t.lifetimes,
        entities: t.entities.values().cloned().collect(),
        federations: t.federations.values().cloned().collect(),
        policies: t
            .release_policies
            .iter()
            .map(|((i, a), names)| PolicyDoc {
                issuer: i.clone(),
                audience: a.clone(),
                release: names.clone(),
            })
            .collect(),
    }
}

pub(super) fn serialize_topology(t: &Topology) -> String {
    let body = toml::to_string(&to_doc(t)).expect("topology documents always serialize");
    format!("{TOPOLOGY_HEADER}\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"fedsim-topology v1
name = "minimal"

[[entities]]
id = "idp:uni-x.example"
kind = "IdP"

[[entities]]
id = "sp:wiki.example"
kind = "SP"

[[federations]]
id = "fed-x"
model = "full-mesh"
members = ["idp:uni-x.example", "sp:wiki.example"]
"#;

    #[test]
    fn minimal_document_loads() {
        let t = load_topology(MINIMAL).unwrap();
        assert_eq!(t.entities.len(), 2);
        assert_eq!(t.anchors.len(), 2);
    }

    #[test]
    fn header_is_required() {
        assert_eq!(
            load_topology("name = \"x\"\n").unwrap_err(),
            TopologyError::MissingHeader
        );
        assert!(matches!(
            load_topology("fedsim-topology v9\n").unwrap_err(),
            TopologyError::UnsupportedHeader(_)
        ));
    }

    #[test]
    fn dangling_member_is_named() {
        let doc = MINIMAL.replace("\"sp:wiki.example\"]", "\"sp:wiki.example\", \"idp:ghost\"]");
        let err = load_topology(&doc).unwrap_err();
        assert!(err.to_string().starts_with("dangling entity reference"), "{err}");
    }

    #[test]
    fn duplicate_and_hub_errors_are_distinct() {
        let dup = format!("{MINIMAL}\n[[entities]]\nid = \"sp:wiki.example\"\nkind = \"SP\"\n");
        assert!(matches!(load_topology(&dup), Err(TopologyError::DuplicateEntity(_))));
        let hub = MINIMAL.replace("full-mesh", "hub-and-spoke");
        assert!(matches!(load_topology(&hub), Err(TopologyError::HubMissing(_))));
    }

    #[test]
    fn internal_sp_behind_non_proxy_is_rejected() {
        let doc = MINIMAL.replace(
            "id = \"sp:wiki.example\"\nkind = \"SP\"",
            "id = \"sp:wiki.example\"\nkind = \"SP\"\ninternal_behind = \"idp:uni-x.example\"",
        );
        assert!(matches!(
            load_topology(&doc),
            Err(TopologyError::InternalBehindNonProxy { .. })
        ));
    }

    #[test]
    fn reload_of_serialized_topology_is_identical() {
        let t = load_topology(MINIMAL).unwrap();
        let again = load_topology(&t.to_document()).unwrap();
        assert_eq!(t, again);
    }
}

//! Attribute Enrichment layer: community attribute authorities, VOMS-style
//! certificate extension, and the userinfo endpoint.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::idp::IdpState;
use crate::model::{
    chain_signing_keys, inbound_name, seal_attr_certificate, seal_cert_with_key, sort_statements,
    verify_integrity, AccessPart, AttributeCertificate, AttributeStatement, CertChain, Credential,
    Delivery, EntityId, IntegrityTag, LoALevel, ModelError, ScopedId, TokenSet, Timestamp,
};
use crate::topology::{trusts, AuthorityConfig, Keying, Topology, TopologyError};
use crate::translation::validate_chain;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("`{0}` is not an attribute authority")]
    NotAnAuthority(EntityId),
    #[error("unknown relying party `{0}`")]
    UnknownRelyingParty(EntityId),
    #[error("attribute authority `{0}` unavailable")]
    Unavailable(EntityId),
    #[error("`{admin}` is not an administrator of {aa}")]
    UnauthorizedAdmin { aa: EntityId, admin: String },
    #[error("no such membership: {0}")]
    NoSuchMembership(String),
    #[error("not a member of {0}")]
    NotMember(String),
    #[error("role not held: {0}")]
    RoleNotHeld(String),
    #[error("leaf certificate is not a proxy")]
    NonProxyLeaf,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("expired")]
    Expired,
    #[error("unknown reference `{0}`")]
    UnknownReference(String),
    #[error("token not verifiable: {0}")]
    Unverifiable(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How an authority identifies a subject.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubjectKey {
    Home { issuer: EntityId, subject: String },
    Unique(ScopedId),
}

impl SubjectKey {
    pub fn home(issuer: &EntityId, subject: &str) -> Self {
        SubjectKey::Home {
            issuer: issuer.clone(),
            subject: subject.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AARecord {
    pub aa: EntityId,
    pub subject_key: SubjectKey,
    pub groups: BTreeSet<String>,
    pub roles: BTreeSet<(String, String)>,
    pub custom: BTreeMap<String, String>,
}

impl AARecord {
    fn empty(aa: &EntityId, key: &SubjectKey) -> Self {
        AARecord {
            aa: aa.clone(),
            subject_key: key.clone(),
            groups: BTreeSet::new(),
            roles: BTreeSet::new(),
            custom: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MembershipChange {
    AddGroup(String),
    RemoveGroup(String),
    AddRole(String, String),
    RemoveRole(String, String),
    SetCustom(String, String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuthorityState {
    records: BTreeMap<EntityId, BTreeMap<SubjectKey, AARecord>>,
    unavailable: BTreeSet<EntityId>,
}

fn config<'a>(t: &'a Topology, aa: &EntityId) -> Result<AuthorityConfig, AuthorityError> {
    let e = t.entity(aa)?;
    if !e.kind.is_attribute_authority() {
        return Err(AuthorityError::NotAnAuthority(aa.clone()));
    }
    Ok(e.authority.clone().unwrap_or_default())
}

impl AuthorityState {
    pub fn from_topology(t: &Topology) -> Self {
        let mut st = AuthorityState::default();
        for e in t.entities.values().filter(|e| e.kind.is_attribute_authority()) {
            let cfg = e.authority.clone().unwrap_or_default();
            if !cfg.available {
                st.unavailable.insert(e.id.clone());
            }
            let table = st.records.entry(e.id.clone()).or_default();
            for r in &cfg.records {
                let key = match (&r.unique_id, &r.issuer, &r.subject) {
                    (Some(u), _, _) if cfg.keying == Keying::UniqueId => SubjectKey::Unique(u.clone()),
                    (_, Some(i), Some(s)) => SubjectKey::home(i, s),
                    _ => continue,
                };
                let rec = table.entry(key.clone()).or_insert_with(|| AARecord::empty(&e.id, &key));
                rec.groups.extend(r.groups.iter().cloned());
                for role in &r.roles {
                    if let Some((g, n)) = role.split_once(':') {
                        rec.roles.insert((g.to_string(), n.to_string()));
                    }
                }
                rec.custom.extend(r.custom.clone());
            }
        }
        st
    }

    pub fn record(&self, aa: &EntityId, key: &SubjectKey) -> Option<&AARecord> {
        self.records.get(aa).and_then(|m| m.get(key))
    }

    pub fn set_available(&mut self, aa: &EntityId, available: bool) {
        if available {
            self.unavailable.remove(aa);
        } else {
            self.unavailable.insert(aa.clone());
        }
    }

    pub fn is_available(&self, aa: &EntityId) -> bool {
        !self.unavailable.contains(aa)
    }
}

/// The key an authority uses for a subject, given both identifiers.
pub fn key_for(t: &Topology, aa: &EntityId, home: &SubjectKey, unique: Option<&ScopedId>) -> SubjectKey {
    let keying = t
        .entities
        .get(aa)
        .and_then(|e| e.authority.as_ref())
        .map(|c| c.keying)
        .unwrap_or_default();
    match (keying, unique) {
        (Keying::UniqueId, Some(u)) => SubjectKey::Unique(u.clone()),
        _ => home.clone(),
    }
}

fn record_statements(
    rec: &AARecord,
    aa: &EntityId,
    loa: LoALevel,
    delivery: Delivery,
) -> Result<Vec<AttributeStatement>, ModelError> {
    let mut out = Vec::new();
    for g in &rec.groups {
        out.push(AttributeStatement::new("group", g.clone(), aa.clone(), loa, delivery)?);
    }
    for (g, r) in &rec.roles {
        out.push(AttributeStatement::new("role", format!("{g}:{r}"), aa.clone(), loa, delivery)?);
    }
    for (name, value) in &rec.custom {
        out.push(AttributeStatement::new(inbound_name(name), value.clone(), aa.clone(), loa, delivery)?);
    }
    Ok(out)
}

/// Pull query. Unknown subjects yield an empty list.
pub fn query_attributes(
    t: &Topology,
    st: &AuthorityState,
    aa: &EntityId,
    key: &SubjectKey,
    requester: &EntityId,
) -> Result<Vec<AttributeStatement>, AuthorityError> {
    let cfg = config(t, aa)?;
    if !trusts(t, aa, requester)? {
        return Err(AuthorityError::UnknownRelyingParty(requester.clone()));
    }
    if !st.is_available(aa) {
        return Err(AuthorityError::Unavailable(aa.clone()));
    }
    let Some(rec) = st.record(aa, key) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<AttributeStatement> = record_statements(rec, aa, cfg.assertion_loa, Delivery::Pull)?
        .into_iter()
        .filter(|s| t.releases(aa, requester, s.name()))
        .collect();
    sort_statements(&mut out);
    Ok(out)
}

pub fn manage_membership(
    t: &Topology,
    st: &mut AuthorityState,
    aa: &EntityId,
    admin: &str,
    change: MembershipChange,
    key: &SubjectKey,
) -> Result<(), AuthorityError> {
    let cfg = config(t, aa)?;
    if !cfg.admins.iter().any(|a| a == admin) {
        return Err(AuthorityError::UnauthorizedAdmin {
            aa: aa.clone(),
            admin: admin.to_string(),
        });
    }
    let table = st.records.entry(aa.clone()).or_default();
    let missing = |what: String| AuthorityError::NoSuchMembership(what);
    match change {
        MembershipChange::AddGroup(g) => {
            table.entry(key.clone()).or_insert_with(|| AARecord::empty(aa, key)).groups.insert(g);
        }
        MembershipChange::AddRole(g, r) => {
            let rec = table.entry(key.clone()).or_insert_with(|| AARecord::empty(aa, key));
            rec.groups.insert(g.clone());
            rec.roles.insert((g, r));
        }
        MembershipChange::SetCustom(n, v) => {
            table.entry(key.clone()).or_insert_with(|| AARecord::empty(aa, key)).custom.insert(n, v);
        }
        MembershipChange::RemoveGroup(g) => {
            let rec = table.get_mut(key).ok_or_else(|| missing(g.clone()))?;
            if !rec.groups.remove(&g) {
                return Err(missing(g));
            }
            rec.roles.retain(|(rg, _)| rg != &g);
        }
        MembershipChange::RemoveRole(g, r) => {
            let rec = table.get_mut(key).ok_or_else(|| missing(format!("{g}:{r}")))?;
            if !rec.roles.remove(&(g.clone(), r.clone())) {
                return Err(missing(format!("{g}:{r}")));
            }
        }
    }
    Ok(())
}

fn chain_subject_key(t: &Topology, voms: &EntityId, chain: &CertChain) -> Option<SubjectKey> {
    let ee = chain.end_entity()?;
    let issuer = EntityId::new(ee.issuer_name.clone()).ok()?;
    let home = SubjectKey::home(&issuer, &ee.subject_name);
    let unique: Option<ScopedId> = ee.subject_name.parse().ok();
    Some(key_for(t, voms, &home, unique.as_ref()))
}

/// Attaches a signed attribute certificate to the proxy leaf of `chain`.
pub fn voms_extend(
    t: &Topology,
    st: &AuthorityState,
    voms: &EntityId,
    chain: &CertChain,
    vo: &str,
    requested_roles: &BTreeSet<String>,
    now: Timestamp,
) -> Result<CertChain, AuthorityError> {
    let cfg = config(t, voms)?;
    if !st.is_available(voms) {
        return Err(AuthorityError::Unavailable(voms.clone()));
    }
    let leaf = chain.leaf().ok_or_else(|| AuthorityError::InvalidChain("empty chain".into()))?;
    if !leaf.is_proxy {
        return Err(AuthorityError::NonProxyLeaf);
    }
    validate_chain(&t.anchors, chain, now).map_err(|e| AuthorityError::InvalidChain(e.to_string()))?;
    let rec = chain_subject_key(t, voms, chain)
        .and_then(|k| st.record(voms, &k))
        .filter(|r| r.groups.contains(vo))
        .ok_or_else(|| AuthorityError::NotMember(vo.to_string()))?;
    let mut statements = vec![AttributeStatement::new("group", vo, voms.clone(), cfg.assertion_loa, Delivery::Push)?];
    for role in requested_roles {
        if !rec.roles.contains(&(vo.to_string(), role.clone())) {
            return Err(AuthorityError::RoleNotHeld(role.clone()));
        }
        statements.push(AttributeStatement::new(
            "role",
            format!("{vo}:{role}"),
            voms.clone(),
            cfg.assertion_loa,
            Delivery::Push,
        )?);
    }
    let ac = AttributeCertificate {
        issuer: voms.clone(),
        holder: leaf.subject_name.clone(),
        statements,
        not_after: leaf.not_after.min(now + t.lifetimes.voms_extension),
        integrity: IntegrityTag::unsigned(voms.clone()),
    };
    let ac = seal_attr_certificate(&t.anchors, ac)?;
    let keys = chain_signing_keys(&t.anchors, chain).map_err(|v| AuthorityError::InvalidChain(format!("{v:?}")))?;
    let mut out = chain.clone();
    let mut new_leaf = out.certs[0].clone();
    new_leaf.attr_certificate = Some(ac);
    let tag_issuer = new_leaf.integrity.issuer.clone();
    out.certs[0] = seal_cert_with_key(new_leaf, tag_issuer, &keys[0]);
    Ok(out)
}

/// Claims behind a token, as statements with pull delivery.
pub fn userinfo_statements(
    t: &Topology,
    idps: &IdpState,
    op: &EntityId,
    tokens: &TokenSet,
    now: Timestamp,
) -> Result<Vec<AttributeStatement>, AuthorityError> {
    if &tokens.issuer != op {
        return Err(AuthorityError::Unverifiable(format!("issued by {}", tokens.issuer)));
    }
    if now > tokens.not_after {
        return Err(AuthorityError::Expired);
    }
    if let crate::model::Verdict::Invalid(r) = verify_integrity(&t.anchors, &Credential::TokenSet(tokens.clone())) {
        return Err(AuthorityError::Unverifiable(r));
    }
    let mut out: Vec<AttributeStatement> = match &tokens.access {
        AccessPart::Reference(id) => {
            let grant = idps
                .reference(id)
                .filter(|g| &g.issuer == op)
                .ok_or_else(|| AuthorityError::UnknownReference(id.clone()))?;
            if now > grant.not_after {
                return Err(AuthorityError::Expired);
            }
            grant.statements.clone()
        }
        AccessPart::SelfContained { claims, .. } => claims
            .iter()
            .filter(|s| t.releases(op, &tokens.audience, s.name()))
            .cloned()
            .collect(),
    };
    out = out.into_iter().map(|s| s.with_delivery(Delivery::Pull)).collect();
    sort_statements(&mut out);
    Ok(out)
}

/// The userinfo endpoint: `sub` plus released claims, multiple values
/// joined by `,` in statement order.
pub fn userinfo(
    t: &Topology,
    idps: &IdpState,
    op: &EntityId,
    tokens: &TokenSet,
    now: Timestamp,
) -> Result<BTreeMap<String, String>, AuthorityError> {
    let statements = userinfo_statements(t, idps, op, tokens, now)?;
    Ok(claims_map(&tokens.subject, &statements))
}

pub fn claims_map(subject: &str, statements: &[AttributeStatement]) -> BTreeMap<String, String> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for s in statements {
        map.entry(s.name().to_string())
            .and_modify(|v| {
                v.push(',');
                v.push_str(s.value());
            })
            .or_insert_with(|| s.value().to_string());
    }
    map.insert("sub".to_string(), subject.to_string());
    map
}

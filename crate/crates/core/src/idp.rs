//! User Identities layer: web-SSO identity providers, token providers,
//! certificate authorities, and guest or social providers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::issuance;
use crate::model::{
    inbound_name, AccessPart, Assertion, AttributeStatement, CertChain, Delivery, EntityId,
    LinkedKind, LoALevel, ModelError, PrincipalRecord, Technology, TokenSet, Timestamp,
};
use crate::topology::{trusts, EntityKind, Topology, TopologyError};

/// Shortest and longest end-entity certificate lifetimes, inclusive.
pub const CERT_LIFETIME_MIN: i64 = 864_000;
pub const CERT_LIFETIME_MAX: i64 = 63_072_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdpError {
    #[error("user `{user}` unknown at {provider}")]
    UnknownUser { provider: EntityId, user: String },
    #[error("unknown relying party `{0}`")]
    UnknownRelyingParty(EntityId),
    #[error("{0} cannot act as {1}")]
    WrongProvider(EntityId, &'static str),
    #[error("request addressed to `{0}`")]
    Misaddressed(EntityId),
    #[error("unknown code")]
    UnknownCode,
    #[error("code already redeemed")]
    AlreadyRedeemed,
    #[error("client mismatch: code was issued to `{0}`")]
    ClientMismatch(EntityId),
    #[error("expired")]
    Expired,
    #[error("lifetime out of range: {0} s")]
    LifetimeOutOfRange(i64),
    #[error("duplicate registration of `{1}` at {0}")]
    Duplicate(EntityId, String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binding {
    Redirect,
    BackChannel,
}

/// Authentication request from an SP or proxy toward a provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthnRequest {
    pub requester: EntityId,
    pub audience: EntityId,
    /// Empty means "whatever the release policy allows".
    pub wanted_attributes: BTreeSet<String>,
    pub binding: Binding,
    /// Pull leaves attributes out of the assertion for a later query.
    pub delivery: Delivery,
}

impl AuthnRequest {
    pub fn new(requester: EntityId, audience: EntityId) -> Self {
        AuthnRequest {
            requester,
            audience,
            wanted_attributes: BTreeSet::new(),
            binding: Binding::Redirect,
            delivery: Delivery::Push,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthCode {
    pub code: String,
    pub op: EntityId,
    pub subject: String,
    pub client: EntityId,
    pub expires: Timestamp,
    pub redeemed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OidcMode {
    Code,
    SelfContained,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OidcGrant {
    Code(AuthCode),
    Tokens(TokenSet),
}

/// An account in a provider's user store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredUser {
    pub subject: String,
    pub handle: String,
    pub loa: LoALevel,
    pub attributes: Vec<(String, String)>,
}

/// Claims behind an opaque access reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceGrant {
    pub issuer: EntityId,
    pub subject: String,
    pub audience: EntityId,
    pub not_after: Timestamp,
    pub statements: Vec<AttributeStatement>,
}

/// Mutable provider state: user stores, code and reference tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdpState {
    users: BTreeMap<EntityId, BTreeMap<String, StoredUser>>,
    codes: BTreeMap<String, AuthCode>,
    references: BTreeMap<String, ReferenceGrant>,
    counter: u64,
}

impl IdpState {
    pub fn from_topology(t: &Topology) -> Self {
        let mut st = IdpState::default();
        for e in t.entities.values().filter(|e| e.kind.is_identity_provider()) {
            let store = st.users.entry(e.id.clone()).or_default();
            for u in &e.users {
                let mut attributes = Vec::new();
                for (name, values) in &u.attributes {
                    for v in values.values() {
                        attributes.push((name.clone(), v.to_string()));
                    }
                }
                store.insert(
                    u.subject.clone(),
                    StoredUser {
                        subject: u.subject.clone(),
                        handle: u.handle().to_string(),
                        loa: u.loa.unwrap_or_else(|| e.issued_loa()),
                        attributes,
                    },
                );
            }
        }
        st
    }

    pub fn user(&self, provider: &EntityId, subject: &str) -> Option<&StoredUser> {
        self.users.get(provider).and_then(|s| s.get(subject))
    }

    pub fn users_at(&self, provider: &EntityId) -> impl Iterator<Item = &StoredUser> {
        self.users.get(provider).into_iter().flat_map(|s| s.values())
    }

    pub fn code(&self, code: &str) -> Option<&AuthCode> {
        self.codes.get(code)
    }

    pub fn reference(&self, id: &str) -> Option<&ReferenceGrant> {
        self.references.get(id)
    }

    fn next_id(&mut self, prefix: &str, issuer: &EntityId) -> String {
        self.counter += 1;
        format!("{prefix}-{issuer}-{:06}", self.counter)
    }

    /// Stores claims behind a fresh reference id.
    pub fn register_reference(&mut self, grant: ReferenceGrant) -> String {
        let id = self.next_id("ref", &grant.issuer);
        self.references.insert(id.clone(), grant);
        id
    }
}

fn provider_speaking(t: &Topology, id: &EntityId, tech: Technology, role: &'static str) -> Result<(), IdpError> {
    let e = t.entity(id)?;
    if !e.kind.is_identity_provider() || !e.protocols.contains(&tech) {
        return Err(IdpError::WrongProvider(id.clone(), role));
    }
    Ok(())
}

fn subject_of<'a>(st: &'a IdpState, provider: &EntityId, user: &PrincipalRecord) -> Result<&'a StoredUser, IdpError> {
    user.subject_at(provider)
        .and_then(|s| st.user(provider, s))
        .ok_or_else(|| IdpError::UnknownUser {
            provider: provider.clone(),
            user: user.handle.clone(),
        })
}

fn check_relying_party(t: &Topology, provider: &EntityId, rp: &EntityId) -> Result<(), IdpError> {
    if trusts(t, provider, rp)? {
        Ok(())
    } else {
        Err(IdpError::UnknownRelyingParty(rp.clone()))
    }
}

/// Stored attributes of `u` that the `(provider, audience)` policy releases,
/// further narrowed to `wanted` when non-empty.
pub fn released_statements(
    t: &Topology,
    provider: &EntityId,
    u: &StoredUser,
    audience: &EntityId,
    wanted: &BTreeSet<String>,
    delivery: Delivery,
) -> Result<Vec<AttributeStatement>, IdpError> {
    let mut out = Vec::new();
    for (name, value) in &u.attributes {
        let name = inbound_name(name);
        if !t.releases(provider, audience, &name) {
            continue;
        }
        if !wanted.is_empty() && !wanted.contains(&name) && !wanted.iter().any(|w| inbound_name(w) == name) {
            continue;
        }
        out.push(AttributeStatement::new(name, value.clone(), provider.clone(), u.loa, delivery)?);
    }
    crate::model::sort_statements(&mut out);
    Ok(out)
}

/// Web-SSO authentication producing a signed assertion.
pub fn authenticate_web(
    t: &Topology,
    st: &IdpState,
    idp: &EntityId,
    user: &PrincipalRecord,
    req: &AuthnRequest,
    now: Timestamp,
) -> Result<Assertion, IdpError> {
    provider_speaking(t, idp, Technology::Saml, "a web-SSO provider")?;
    if &req.audience != idp {
        return Err(IdpError::Misaddressed(req.audience.clone()));
    }
    let u = subject_of(st, idp, user)?;
    check_relying_party(t, idp, &req.requester)?;
    let attributes = match req.delivery {
        Delivery::Push => released_statements(t, idp, u, &req.requester, &req.wanted_attributes, Delivery::Push)?,
        Delivery::Pull => Vec::new(),
    };
    let a = issuance::assertion(
        t,
        idp,
        &u.subject,
        &req.requester,
        attributes,
        now,
        now + t.lifetimes.assertion,
    )?;
    Ok(a)
}

/// Back-channel attribute query for pull-mode web SSO.
pub fn attribute_query(
    t: &Topology,
    st: &IdpState,
    idp: &EntityId,
    subject: &str,
    requester: &EntityId,
) -> Result<Vec<AttributeStatement>, IdpError> {
    provider_speaking(t, idp, Technology::Saml, "a web-SSO provider")?;
    check_relying_party(t, idp, requester)?;
    match st.user(idp, subject) {
        Some(u) => released_statements(t, idp, u, requester, &BTreeSet::new(), Delivery::Pull),
        None => Ok(Vec::new()),
    }
}

pub fn authenticate_oidc(
    t: &Topology,
    st: &mut IdpState,
    op: &EntityId,
    user: &PrincipalRecord,
    client: &EntityId,
    mode: OidcMode,
    now: Timestamp,
) -> Result<OidcGrant, IdpError> {
    provider_speaking(t, op, Technology::Oidc, "a token provider")?;
    let u = subject_of(st, op, user)?.clone();
    check_relying_party(t, op, client)?;
    match mode {
        OidcMode::Code => {
            let code = AuthCode {
                code: st.next_id("code", op),
                op: op.clone(),
                subject: u.subject,
                client: client.clone(),
                expires: now + t.lifetimes.code,
                redeemed: false,
            };
            st.codes.insert(code.code.clone(), code.clone());
            Ok(OidcGrant::Code(code))
        }
        OidcMode::SelfContained => {
            let claims = released_statements(t, op, &u, client, &BTreeSet::new(), Delivery::Push)?;
            let ts = issuance::token_set(
                t,
                op,
                &u.subject,
                client,
                issuance::self_contained(op, claims),
                now + t.lifetimes.token,
            )?;
            Ok(OidcGrant::Tokens(ts))
        }
    }
}

/// Exchanges a code for a reference token. Checks run in the order:
/// unknown, already redeemed, client mismatch, expired.
pub fn redeem_code(
    t: &Topology,
    st: &mut IdpState,
    op: &EntityId,
    code: &str,
    client: &EntityId,
    now: Timestamp,
) -> Result<TokenSet, IdpError> {
    let entry = st.codes.get(code).filter(|c| &c.op == op).ok_or(IdpError::UnknownCode)?;
    if entry.redeemed {
        return Err(IdpError::AlreadyRedeemed);
    }
    if &entry.client != client {
        return Err(IdpError::ClientMismatch(entry.client.clone()));
    }
    if now > entry.expires {
        return Err(IdpError::Expired);
    }
    let subject = entry.subject.clone();
    let u = st
        .user(op, &subject)
        .cloned()
        .ok_or_else(|| IdpError::UnknownUser {
            provider: op.clone(),
            user: subject.clone(),
        })?;
    let statements = released_statements(t, op, &u, client, &BTreeSet::new(), Delivery::Pull)?;
    let not_after = now + t.lifetimes.token;
    st.codes.get_mut(code).expect("checked above").redeemed = true;
    let reference = st.register_reference(ReferenceGrant {
        issuer: op.clone(),
        subject: subject.clone(),
        audience: client.clone(),
        not_after,
        statements,
    });
    Ok(issuance::token_set(t, op, &subject, client, AccessPart::Reference(reference), not_after)?)
}

/// Long-lived end-entity certificate for a vetted user.
pub fn issue_certificate(
    t: &Topology,
    st: &IdpState,
    ca: &EntityId,
    user: &PrincipalRecord,
    lifetime_s: i64,
    now: Timestamp,
) -> Result<CertChain, IdpError> {
    if !(CERT_LIFETIME_MIN..=CERT_LIFETIME_MAX).contains(&lifetime_s) {
        return Err(IdpError::LifetimeOutOfRange(lifetime_s));
    }
    if t.kind_of(ca) != Some(EntityKind::CA) {
        return Err(IdpError::WrongProvider(ca.clone(), "a certificate authority"));
    }
    let u = subject_of(st, ca, user)?;
    let chain = issuance::ca_chain(
        t,
        ca,
        &u.subject,
        now,
        now + lifetime_s,
        t.lifetimes.delegation_depth,
        Vec::new(),
        now,
    )?;
    Ok(chain)
}

fn guest_kind(t: &Topology, provider: &EntityId) -> Result<LinkedKind, IdpError> {
    let e = t.entity(provider)?;
    match e.kind {
        EntityKind::GuestIdP => Ok(LinkedKind::Guest),
        EntityKind::SocialIdP if e.egov => Ok(LinkedKind::Egov),
        EntityKind::SocialIdP => Ok(LinkedKind::Social),
        _ => Err(IdpError::WrongProvider(provider.clone(), "a guest or social provider")),
    }
}

fn store_guest(
    t: &Topology,
    st: &mut IdpState,
    provider: &EntityId,
    subject_id: &str,
    handle: &str,
    profile: &BTreeMap<String, String>,
) -> Result<LinkedKind, IdpError> {
    let kind = guest_kind(t, provider)?;
    let loa = t.entity(provider)?.issued_loa();
    let store = st.users.entry(provider.clone()).or_default();
    if store.contains_key(subject_id) {
        return Err(IdpError::Duplicate(provider.clone(), subject_id.to_string()));
    }
    store.insert(
        subject_id.to_string(),
        StoredUser {
            subject: subject_id.to_string(),
            handle: handle.to_string(),
            loa,
            attributes: profile.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        },
    );
    Ok(kind)
}

/// Self-service sign-up at a guest or social provider.
pub fn register_guest(
    t: &Topology,
    st: &mut IdpState,
    guest_idp: &EntityId,
    subject_id: &str,
    profile: &BTreeMap<String, String>,
) -> Result<PrincipalRecord, IdpError> {
    let kind = store_guest(t, st, guest_idp, subject_id, subject_id, profile)?;
    let mut record = PrincipalRecord::new(subject_id);
    record.link_identity(guest_idp.clone(), subject_id, kind)?;
    Ok(record)
}

/// Registers a guest identity and links it to an existing record.
pub fn link_guest(
    t: &Topology,
    st: &mut IdpState,
    record: &mut PrincipalRecord,
    guest_idp: &EntityId,
    subject_id: &str,
    profile: &BTreeMap<String, String>,
) -> Result<(), IdpError> {
    let kind = guest_kind(t, guest_idp)?;
    if record.subject_at(guest_idp).is_some() {
        return Err(IdpError::Duplicate(guest_idp.clone(), subject_id.to_string()));
    }
    let handle = record.handle.clone();
    store_guest(t, st, guest_idp, subject_id, &handle, profile)?;
    record.link_identity(guest_idp.clone(), subject_id, kind)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{verify_integrity, Credential};
    use crate::topology::load_topology;

    const DOC: &str = r#"fedsim-topology v1
[[entities]]
id = "idp:uni"
kind = "IdP"
[[entities.users]]
subject = "alice"
attributes = { display-name = "Alice", mail = "alice@uni.example", affiliation = "member" }

[[entities]]
id = "op:uni"
kind = "OP"
[[entities.users]]
subject = "alice"
attributes = { mail = "alice@uni.example" }

[[entities]]
id = "ca:grid"
kind = "CA"
[[entities.users]]
subject = "CN=Alice"
handle = "alice"

[[entities]]
id = "guest:g"
kind = "GuestIdP"

[[entities]]
id = "sp:a"
kind = "SP"

[[federations]]
id = "f"
model = "full-mesh"
members = ["idp:uni", "op:uni", "sp:a"]

[[policies]]
issuer = "idp:uni"
audience = "sp:a"
release = ["affiliation"]

[[policies]]
issuer = "op:uni"
audience = "sp:a"
release = ["mail"]
"#;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn alice() -> PrincipalRecord {
        let mut r = PrincipalRecord::new("alice");
        r.add_home_identity(id("idp:uni"), "alice").unwrap();
        r.add_home_identity(id("op:uni"), "alice").unwrap();
        r.add_home_identity(id("ca:grid"), "CN=Alice").unwrap();
        r
    }

    #[test]
    fn web_release_follows_policy() {
        let t = load_topology(DOC).unwrap();
        let st = IdpState::from_topology(&t);
        let req = AuthnRequest::new(id("sp:a"), id("idp:uni"));
        let a = authenticate_web(&t, &st, &id("idp:uni"), &alice(), &req, 100).unwrap();
        let names: Vec<&str> = a.attributes.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["affiliation"]);
        assert_eq!((a.not_before, a.not_after), (100, 400));
        assert!(verify_integrity(&t.anchors, &Credential::Assertion(a)).is_valid());
    }

    #[test]
    fn untrusted_requester_is_unknown_relying_party() {
        let t = load_topology(DOC).unwrap();
        let st = IdpState::from_topology(&t);
        let req = AuthnRequest::new(id("guest:g"), id("idp:uni"));
        let err = authenticate_web(&t, &st, &id("idp:uni"), &alice(), &req, 0).unwrap_err();
        assert_eq!(err.to_string(), "unknown relying party `guest:g`");
    }

    #[test]
    fn code_flow_and_redemption_order() {
        let t = load_topology(DOC).unwrap();
        let mut st = IdpState::from_topology(&t);
        let OidcGrant::Code(code) =
            authenticate_oidc(&t, &mut st, &id("op:uni"), &alice(), &id("sp:a"), OidcMode::Code, 10).unwrap()
        else {
            panic!("expected a code")
        };
        assert!(!code.redeemed);
        assert_eq!(code.expires, 70);
        assert_eq!(
            redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("idp:uni"), 20),
            Err(IdpError::ClientMismatch(id("sp:a")))
        );
        let ts = redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("sp:a"), 70).unwrap();
        assert_eq!(ts.not_after, 70 + 3600);
        assert_eq!(
            redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("sp:a"), 20),
            Err(IdpError::AlreadyRedeemed)
        );
    }

    #[test]
    fn expired_code_is_refused() {
        let t = load_topology(DOC).unwrap();
        let mut st = IdpState::from_topology(&t);
        let OidcGrant::Code(code) =
            authenticate_oidc(&t, &mut st, &id("op:uni"), &alice(), &id("sp:a"), OidcMode::Code, 0).unwrap()
        else {
            panic!()
        };
        assert_eq!(
            redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("sp:a"), code.expires + 1),
            Err(IdpError::Expired)
        );
    }

    #[test]
    fn certificate_lifetime_bounds_are_inclusive() {
        let t = load_topology(DOC).unwrap();
        let st = IdpState::from_topology(&t);
        let ca = id("ca:grid");
        for (life, ok) in [
            (CERT_LIFETIME_MIN - 1, false),
            (CERT_LIFETIME_MIN, true),
            (34_128_000, true),
            (CERT_LIFETIME_MAX, true),
            (CERT_LIFETIME_MAX + 1, false),
        ] {
            let r = issue_certificate(&t, &st, &ca, &alice(), life, 0);
            assert_eq!(r.is_ok(), ok, "lifetime {life}");
        }
        let chain = issue_certificate(&t, &st, &ca, &alice(), 34_128_000, 0).unwrap();
        assert_eq!(chain.certs.len(), 2);
        assert!(!chain.certs[0].is_proxy);
        assert_eq!(chain.certs[0].remaining_delegation_depth, 3);
    }

    #[test]
    fn guest_registration_is_low_and_unique() {
        let t = load_topology(DOC).unwrap();
        let mut st = IdpState::from_topology(&t);
        let profile = BTreeMap::from([("mail".to_string(), "bob@example.org".to_string())]);
        let rec = register_guest(&t, &mut st, &id("guest:g"), "bob", &profile).unwrap();
        assert_eq!(rec.linked_identities().len(), 1);
        assert_eq!(st.user(&id("guest:g"), "bob").unwrap().loa, LoALevel::Low);
        let err = register_guest(&t, &mut st, &id("guest:g"), "bob", &profile).unwrap_err();
        assert!(err.to_string().starts_with("duplicate"));
    }
}

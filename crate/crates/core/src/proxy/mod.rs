//! The SP-IdP proxy: an SP toward upstream providers, an IdP toward its
//! internal services. Mints persistent identifiers and builds composite
//! identities.

mod aggregate;
mod harmonize;
mod registry;

use thiserror::Error;

use crate::authority::AuthorityError;
use crate::idp::{AuthnRequest, IdpState};
use crate::model::{AttributeStatement, Credential, Delivery, EntityId, LoALevel, ModelError, ScopedId, Technology, Timestamp};
use crate::topology::{EntityKind, Topology, TopologyError};
use crate::translation::{find_path, issue_native, translate, TranslationError, TranslationRoute};

pub use aggregate::{aggregate, merge_by_precedence, AggregationRequest, SourceQuery, HOME_FIRST, INJECTED};
pub use harmonize::{harmonize, with_canonical_identity};
pub use registry::{
    audit_snapshot, derive_unique_id, unique_id_local_part, IdRegistry, RegistryViolation, SNAPSHOT_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProxyError {
    #[error("`{0}` is not a proxy")]
    NotAProxy(EntityId),
    #[error("not my internal SP: `{0}`")]
    NotMyInternalSp(EntityId),
    #[error("collision: {0} already bound to a different identity")]
    Collision(String),
    #[error("identity already bound to {0}")]
    AlreadyBound(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("registry snapshot: {0}")]
    Snapshot(String),
    #[error("required source unavailable: {0}")]
    RequiredSourceUnavailable(EntityId),
    #[error("source failed: {0}")]
    Source(AuthorityError),
    #[error("{0} does not support {1}")]
    UnsupportedTechnology(EntityId, Technology),
    #[error("no translation path from {0} to {1}")]
    NoTranslationPath(Technology, Technology),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The merged, harmonized identity keyed by the persistent identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeIdentity {
    pub persistent_unique_id: ScopedId,
    pub statements: Vec<AttributeStatement>,
    pub effective_loa: LoALevel,
    pub source_log: Vec<(EntityId, usize)>,
}

impl CompositeIdentity {
    /// Exactly one `unique-id` statement, carrying the rendered identifier.
    pub fn check(&self) -> Result<(), String> {
        let ids: Vec<&AttributeStatement> = self.statements.iter().filter(|s| s.name() == "unique-id").collect();
        match ids.as_slice() {
            [one] if one.value() == self.persistent_unique_id.render() => Ok(()),
            [_] => Err("unique-id statement does not match the identifier".into()),
            other => Err(format!("{} unique-id statements", other.len())),
        }
    }
}

fn proxy_config<'a>(t: &'a Topology, proxy: &EntityId) -> Result<&'a crate::topology::ProxyConfig, ProxyError> {
    let e = t.entity(proxy)?;
    match (&e.kind, &e.proxy) {
        (EntityKind::Proxy, Some(cfg)) => Ok(cfg),
        _ => Err(ProxyError::NotAProxy(proxy.clone())),
    }
}

fn check_internal(t: &Topology, proxy: &EntityId, sp: &EntityId) -> Result<(), ProxyError> {
    if t.entity(sp)?.internal_behind.as_ref() != Some(proxy) {
        return Err(ProxyError::NotMyInternalSp(sp.clone()));
    }
    Ok(())
}

/// Turns an internal SP's request into the proxy's own upstream request.
pub fn handle_sp_request(
    t: &Topology,
    proxy: &EntityId,
    req: &AuthnRequest,
    upstream: &EntityId,
) -> Result<AuthnRequest, ProxyError> {
    let cfg = proxy_config(t, proxy)?;
    check_internal(t, proxy, &req.requester)?;
    Ok(AuthnRequest {
        requester: proxy.clone(),
        audience: upstream.clone(),
        wanted_attributes: cfg.upstream_attributes.clone(),
        binding: req.binding,
        delivery: req.delivery,
    })
}

/// A downstream credential and the translation hops that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Downstream {
    pub native: Credential,
    pub hops: Vec<(TranslationRoute, Credential)>,
}

impl Downstream {
    pub fn credential(&self) -> &Credential {
        self.hops.last().map(|(_, c)| c).unwrap_or(&self.native)
    }
}

/// Composite statements the `(proxy, sp)` policy releases.
pub fn released_to(t: &Topology, proxy: &EntityId, sp: &EntityId, cid: &CompositeIdentity) -> Vec<AttributeStatement> {
    cid.statements
        .iter()
        .filter(|s| t.releases(proxy, sp, s.name()))
        .map(|s| s.with_delivery(Delivery::Push))
        .collect()
}

/// Issues in the proxy's native technology, then translates along the
/// shortest route to `tech`.
pub fn issue_downstream(
    t: &Topology,
    idps: &mut IdpState,
    proxy: &EntityId,
    internal_sp: &EntityId,
    cid: &CompositeIdentity,
    tech: Technology,
    now: Timestamp,
) -> Result<Downstream, ProxyError> {
    let cfg = proxy_config(t, proxy)?;
    check_internal(t, proxy, internal_sp)?;
    if !t.entity(internal_sp)?.protocols.contains(&tech) {
        return Err(ProxyError::UnsupportedTechnology(internal_sp.clone(), tech));
    }
    let path = find_path(t, proxy, cfg.issue_tech, tech).ok_or(ProxyError::NoTranslationPath(cfg.issue_tech, tech))?;
    let subject = cid.persistent_unique_id.render();
    let statements = released_to(t, proxy, internal_sp, cid);
    let lifetime = match cfg.issue_tech {
        Technology::Saml => t.lifetimes.assertion,
        _ => t.lifetimes.token,
    };
    let native = issue_native(
        t,
        idps,
        proxy,
        &subject,
        internal_sp,
        statements,
        cfg.issue_tech,
        now + lifetime,
        Delivery::Push,
        now,
    )?;
    let mut hops = Vec::new();
    let mut current = native.clone();
    for route in path {
        let next = translate(t, idps, &route.tts, &current, route.to, internal_sp, now)?;
        hops.push((route, next.clone()));
        current = next;
    }
    Ok(Downstream { native, hops })
}

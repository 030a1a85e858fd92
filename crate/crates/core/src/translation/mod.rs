//! Translation layer: credential translation between technologies,
//! certificate delegation, and local-account provisioning.

mod accounts;
mod delegation;

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::idp::{IdpState, ReferenceGrant};
use crate::issuance;
use crate::model::{
    verify_integrity, AccessPart, AttributeStatement, Credential, Delivery, EntityId, ModelError, Technology,
    Timestamp, Verdict,
};
use crate::topology::{Topology, TopologyError};

pub use accounts::{
    account_name, deprovision_local, provision_local, AccountError, AccountState, AccountTable, LocalAccount,
    ProvisionOutcome,
};
pub use delegation::{create_proxy_cert, delegate_token, validate_chain, ChainError, ChainView, DelegationError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslationError {
    #[error("no route: {tts} cannot translate {from} to {to}")]
    NoRoute {
        tts: EntityId,
        from: Technology,
        to: Technology,
    },
    #[error("expired input")]
    Expired,
    #[error("unverifiable input: {0}")]
    Unverifiable(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationRoute {
    pub tts: EntityId,
    pub from: Technology,
    pub to: Technology,
    pub lifetime_s: i64,
    pub delivery: Delivery,
}

pub fn routes_of(t: &Topology) -> Vec<TranslationRoute> {
    t.entities
        .values()
        .flat_map(|e| {
            e.routes.iter().map(move |r| TranslationRoute {
                tts: e.id.clone(),
                from: r.from,
                to: r.to,
                lifetime_s: r.lifetime,
                delivery: r.delivery.unwrap_or(Delivery::Push),
            })
        })
        .collect()
}

/// Fewest-hop route sequence from `from` to `to`; on ties, routes owned by
/// `preferred` are taken first. Same technology needs no hops.
pub fn find_path(t: &Topology, preferred: &EntityId, from: Technology, to: Technology) -> Option<Vec<TranslationRoute>> {
    if from == to {
        return Some(Vec::new());
    }
    let mut routes = routes_of(t);
    routes.retain(|r| r.from != r.to);
    routes.sort_by_key(|r| (&r.tts != preferred, r.tts.clone()));
    let mut came: BTreeMap<Technology, TranslationRoute> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(tech) = queue.pop_front() {
        if tech == to {
            break;
        }
        for r in routes.iter().filter(|r| r.from == tech) {
            if r.to != from && !came.contains_key(&r.to) {
                came.insert(r.to, r.clone());
                queue.push_back(r.to);
            }
        }
    }
    let mut path = Vec::new();
    let mut at = to;
    while at != from {
        let r = came.get(&at)?;
        at = r.from;
        path.push(r.clone());
    }
    path.reverse();
    Some(path)
}

/// Issues `statements` about `subject` in technology `tech`.
#[allow(clippy::too_many_arguments)]
pub fn issue_native(
    t: &Topology,
    idps: &mut IdpState,
    issuer: &EntityId,
    subject: &str,
    audience: &EntityId,
    statements: Vec<AttributeStatement>,
    tech: Technology,
    not_after: Timestamp,
    delivery: Delivery,
    now: Timestamp,
) -> Result<Credential, ModelError> {
    Ok(match tech {
        Technology::Saml => Credential::Assertion(issuance::assertion(
            t, issuer, subject, audience, statements, now, not_after,
        )?),
        Technology::Oidc => {
            let access = match delivery {
                Delivery::Push => issuance::self_contained(issuer, statements),
                Delivery::Pull => AccessPart::Reference(idps.register_reference(ReferenceGrant {
                    issuer: issuer.clone(),
                    subject: subject.to_string(),
                    audience: audience.clone(),
                    not_after,
                    statements,
                })),
            };
            Credential::TokenSet(issuance::token_set(t, issuer, subject, audience, access, not_after)?)
        }
        Technology::X509 => Credential::CertChain(issuance::ca_chain(
            t,
            issuer,
            subject,
            now,
            not_after,
            t.lifetimes.delegation_depth,
            statements,
            now,
        )?),
    })
}

/// Subject and statements of a verified, unexpired credential.
pub fn open_credential(
    t: &Topology,
    idps: &IdpState,
    input: &Credential,
    now: Timestamp,
) -> Result<(String, Vec<AttributeStatement>, Timestamp), TranslationError> {
    let not_after = input
        .not_after()
        .ok_or_else(|| TranslationError::Unverifiable("empty chain".into()))?;
    if now >= not_after {
        return Err(TranslationError::Expired);
    }
    match input {
        Credential::CertChain(chain) => {
            let view = validate_chain(&t.anchors, chain, now).map_err(|e| TranslationError::Unverifiable(e.to_string()))?;
            Ok((view.subject, view.attrs, not_after))
        }
        Credential::Assertion(a) => {
            if let Verdict::Invalid(r) = verify_integrity(&t.anchors, input) {
                return Err(TranslationError::Unverifiable(r));
            }
            Ok((a.subject.clone(), a.attributes.clone(), not_after))
        }
        Credential::TokenSet(ts) => {
            if let Verdict::Invalid(r) = verify_integrity(&t.anchors, input) {
                return Err(TranslationError::Unverifiable(r));
            }
            let statements = match &ts.access {
                AccessPart::SelfContained { claims, .. } => claims.clone(),
                AccessPart::Reference(id) => idps
                    .reference(id)
                    .filter(|g| g.issuer == ts.issuer)
                    .map(|g| g.statements.clone())
                    .ok_or_else(|| TranslationError::Unverifiable(format!("unknown reference `{id}`")))?,
            };
            Ok((ts.subject.clone(), statements, not_after))
        }
    }
}

/// Reissues `input` as a `to` credential from `tts`. Subject and statements
/// carry over; only the delivery flag follows the target idiom. The output
/// never outlives the input.
pub fn translate(
    t: &Topology,
    idps: &mut IdpState,
    tts: &EntityId,
    input: &Credential,
    to: Technology,
    audience: &EntityId,
    now: Timestamp,
) -> Result<Credential, TranslationError> {
    let from = input.technology();
    let route = t
        .entity(tts)?
        .route(from, to)
        .cloned()
        .ok_or_else(|| TranslationError::NoRoute {
            tts: tts.clone(),
            from,
            to,
        })?;
    let (subject, statements, input_not_after) = open_credential(t, idps, input, now)?;
    let delivery = match to {
        Technology::Oidc => route.delivery.unwrap_or(Delivery::Push),
        _ => Delivery::Push,
    };
    let statements = statements.into_iter().map(|s| s.with_delivery(delivery)).collect();
    let not_after = (now + route.lifetime).min(input_not_after);
    Ok(issue_native(t, idps, tts, &subject, audience, statements, to, not_after, delivery, now)?)
}

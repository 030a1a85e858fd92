//! Credential construction shared by every issuer.

use std::collections::BTreeMap;

use crate::model::{
    holder_key, seal_assertion, seal_attr_certificate_with_key, seal_cert_with_key, seal_token_set, AccessPart,
    Assertion, AttributeCertificate, AttributeStatement, Cert, CertChain, EntityId, IntegrityTag,
    ModelError, TokenSet, Timestamp,
};
use crate::topology::Topology;

/// Validity of CA and intermediate certificates around `now`.
pub(crate) const CA_SPAN: i64 = 315_360_000;

pub(crate) fn assertion(
    t: &Topology,
    issuer: &EntityId,
    subject: &str,
    audience: &EntityId,
    attributes: Vec<AttributeStatement>,
    now: Timestamp,
    not_after: Timestamp,
) -> Result<Assertion, ModelError> {
    let a = Assertion {
        subject: subject.to_string(),
        issuer: issuer.clone(),
        audience: audience.clone(),
        attributes,
        auth_instant: now,
        not_before: now,
        not_after,
        integrity: IntegrityTag::unsigned(issuer.clone()),
    };
    seal_assertion(&t.anchors, a)
}

pub(crate) fn id_claims(issuer: &EntityId, subject: &str, audience: &EntityId) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("aud".to_string(), audience.to_string()),
        ("iss".to_string(), issuer.to_string()),
        ("sub".to_string(), subject.to_string()),
    ])
}

pub(crate) fn token_set(
    t: &Topology,
    issuer: &EntityId,
    subject: &str,
    audience: &EntityId,
    access: AccessPart,
    not_after: Timestamp,
) -> Result<TokenSet, ModelError> {
    let ts = TokenSet {
        id_claims: id_claims(issuer, subject, audience),
        subject: subject.to_string(),
        issuer: issuer.clone(),
        audience: audience.clone(),
        access,
        not_after,
        integrity: IntegrityTag::unsigned(issuer.clone()),
    };
    seal_token_set(&t.anchors, ts)
}

pub(crate) fn self_contained(issuer: &EntityId, claims: Vec<AttributeStatement>) -> AccessPart {
    AccessPart::SelfContained {
        claims,
        integrity: IntegrityTag::unsigned(issuer.clone()),
    }
}

fn ca_cert(t: &Topology, subject: &EntityId, issuer: &EntityId, now: Timestamp) -> Result<Cert, ModelError> {
    let key = t
        .anchors
        .key(issuer)
        .ok_or_else(|| ModelError::UnknownIssuerKey(issuer.clone()))?;
    let c = Cert {
        subject_name: subject.to_string(),
        issuer_name: issuer.to_string(),
        not_before: now - CA_SPAN,
        not_after: now + CA_SPAN,
        is_proxy: false,
        remaining_delegation_depth: 0,
        attr_certificate: None,
        integrity: IntegrityTag::unsigned(issuer.clone()),
    };
    Ok(seal_cert_with_key(c, issuer.clone(), key))
}

/// End-entity certificate issued by `ca`, followed by the CA's path to its
/// root. A CA with `certified_by` set gets an intermediate under that anchor.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ca_chain(
    t: &Topology,
    ca: &EntityId,
    subject: &str,
    not_before: Timestamp,
    not_after: Timestamp,
    depth: u32,
    statements: Vec<AttributeStatement>,
    now: Timestamp,
) -> Result<CertChain, ModelError> {
    let certifier = t.entities.get(ca).and_then(|e| e.certified_by.clone());
    let (path, key) = match certifier {
        Some(parent) => {
            let intermediate = ca_cert(t, ca, &parent, now)?;
            let parent_key = t
                .anchors
                .key(&parent)
                .ok_or_else(|| ModelError::UnknownIssuerKey(parent.clone()))?;
            let key = holder_key(parent_key, &intermediate.integrity);
            (vec![intermediate, ca_cert(t, &parent, &parent, now)?], key)
        }
        None => {
            let key = *t
                .anchors
                .key(ca)
                .ok_or_else(|| ModelError::UnknownIssuerKey(ca.clone()))?;
            (vec![ca_cert(t, ca, ca, now)?], key)
        }
    };
    let attr_certificate = if statements.is_empty() {
        None
    } else {
        let ac = AttributeCertificate {
            issuer: ca.clone(),
            holder: subject.to_string(),
            statements,
            not_after,
            integrity: IntegrityTag::unsigned(ca.clone()),
        };
        Some(seal_attr_certificate_with_key(ac, &key))
    };
    let ee = Cert {
        subject_name: subject.to_string(),
        issuer_name: ca.to_string(),
        not_before,
        not_after,
        is_proxy: false,
        remaining_delegation_depth: depth,
        attr_certificate,
        integrity: IntegrityTag::unsigned(ca.clone()),
    };
    let mut certs = vec![seal_cert_with_key(ee, ca.clone(), &key)];
    certs.extend(path);
    Ok(CertChain { certs })
}

use std::fmt;

use thiserror::Error;

use crate::model::{
    chain_signing_keys, holder_key, seal_cert_with_key, seal_token_set, sort_statements, verify_integrity,
    AttributeStatement, Cert, CertChain, Credential, EntityId, IntegrityTag, TokenSet, Timestamp, TrustAnchors,
    Verdict,
};

/// The first rule a chain breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainError {
    Empty,
    Linkage(usize),
    MisplacedProxy(usize),
    NotAnchored(String),
    Integrity(String),
    OutsideWindow(usize),
    WindowNotNested(usize),
    DepthNotDecreasing(usize),
}

impl ChainError {
    pub fn rule(&self) -> &'static str {
        match self {
            ChainError::Empty => "empty chain",
            ChainError::Linkage(_) => "linkage broken",
            ChainError::MisplacedProxy(_) => "misplaced proxy",
            ChainError::NotAnchored(_) => "not anchored",
            ChainError::Integrity(_) => "bad integrity",
            ChainError::OutsideWindow(_) => "outside validity window",
            ChainError::WindowNotNested(_) => "window not nested",
            ChainError::DepthNotDecreasing(_) => "depth not decreasing",
        }
    }
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.rule())
    }
}

impl std::error::Error for ChainError {}

/// What a relying party learns from a valid chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainView {
    /// End-entity subject; proxies act on its behalf.
    pub subject: String,
    pub attrs: Vec<AttributeStatement>,
}

fn well_formed_window(c: &Cert) -> bool {
    c.not_before < c.not_after
}

/// Checks linkage, proxy placement, anchoring, integrity, time windows,
/// proxy nesting and delegation depth, in that order.
pub fn validate_chain(anchors: &TrustAnchors, chain: &CertChain, now: Timestamp) -> Result<ChainView, ChainError> {
    let certs = &chain.certs;
    let root = certs.last().ok_or(ChainError::Empty)?;
    for i in 0..certs.len() - 1 {
        if certs[i].issuer_name != certs[i + 1].subject_name {
            return Err(ChainError::Linkage(i));
        }
    }
    if !root.is_self_signed() {
        return Err(ChainError::Linkage(certs.len() - 1));
    }
    let proxies = certs.iter().take_while(|c| c.is_proxy).count();
    if let Some(pos) = certs.iter().skip(proxies).position(|c| c.is_proxy) {
        return Err(ChainError::MisplacedProxy(proxies + pos));
    }
    if proxies == certs.len() {
        return Err(ChainError::MisplacedProxy(certs.len() - 1));
    }
    let anchored = EntityId::new(root.issuer_name.clone()).is_ok_and(|id| anchors.contains(&id));
    if !anchored {
        return Err(ChainError::NotAnchored(root.issuer_name.clone()));
    }
    if let Verdict::Invalid(r) = verify_integrity(anchors, &Credential::CertChain(chain.clone())) {
        return Err(ChainError::Integrity(r));
    }
    for (i, c) in certs.iter().enumerate() {
        if !well_formed_window(c) || now < c.not_before || now > c.not_after {
            return Err(ChainError::OutsideWindow(i));
        }
    }
    for i in 0..proxies {
        let (child, parent) = (&certs[i], &certs[i + 1]);
        if child.not_before < parent.not_before || child.not_after > parent.not_after {
            return Err(ChainError::WindowNotNested(i));
        }
    }
    for i in 0..proxies {
        if certs[i].remaining_delegation_depth >= certs[i + 1].remaining_delegation_depth {
            return Err(ChainError::DepthNotDecreasing(i));
        }
    }
    let mut attrs: Vec<AttributeStatement> = certs[..=proxies]
        .iter()
        .flat_map(|c| c.attr_extension().iter().cloned())
        .collect();
    sort_statements(&mut attrs);
    attrs.dedup();
    Ok(ChainView {
        subject: certs[proxies].subject_name.clone(),
        attrs,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DelegationError {
    #[error("depth exhausted")]
    DepthExhausted,
    #[error("requested window outside parent window")]
    WindowOutsideParent,
    #[error("lifetime must be positive")]
    InvalidLifetime,
    #[error("invalid parent: {0}")]
    InvalidParent(ChainError),
    #[error("invalid token: {0}")]
    InvalidToken(String),
}

/// Appends a proxy certificate for `delegatee`. With `clamp` the window is
/// cut to the parent's; without it an overhanging request is refused.
pub fn create_proxy_cert(
    anchors: &TrustAnchors,
    parent: &CertChain,
    delegatee: &str,
    requested_lifetime_s: i64,
    now: Timestamp,
    clamp: bool,
) -> Result<CertChain, DelegationError> {
    if requested_lifetime_s <= 0 {
        return Err(DelegationError::InvalidLifetime);
    }
    validate_chain(anchors, parent, now).map_err(DelegationError::InvalidParent)?;
    let leaf = &parent.certs[0];
    if leaf.remaining_delegation_depth == 0 {
        return Err(DelegationError::DepthExhausted);
    }
    let mut not_after = now + requested_lifetime_s;
    if not_after > leaf.not_after {
        if !clamp {
            return Err(DelegationError::WindowOutsideParent);
        }
        not_after = leaf.not_after;
    }
    if not_after <= now {
        return Err(DelegationError::WindowOutsideParent);
    }
    let keys = chain_signing_keys(anchors, parent)
        .map_err(|v| DelegationError::InvalidParent(ChainError::Integrity(format!("{v:?}"))))?;
    let key = if leaf.is_self_signed() {
        keys[0]
    } else {
        holder_key(&keys[0], &leaf.integrity)
    };
    let tag_issuer = leaf.integrity.issuer.clone();
    let cert = Cert {
        subject_name: format!("{}/CN={delegatee}", leaf.subject_name),
        issuer_name: leaf.subject_name.clone(),
        not_before: now,
        not_after,
        is_proxy: true,
        remaining_delegation_depth: leaf.remaining_delegation_depth - 1,
        attr_certificate: leaf.attr_certificate.clone(),
        integrity: IntegrityTag::unsigned(tag_issuer.clone()),
    };
    let mut certs = Vec::with_capacity(parent.certs.len() + 1);
    certs.push(seal_cert_with_key(cert, tag_issuer, &key));
    certs.extend(parent.certs.iter().cloned());
    Ok(CertChain { certs })
}

pub const ACTING_PARTY_CLAIM: &str = "act";

/// Token-side delegation: the issuer re-issues `tokens` with
/// `acting_party` appended to the `act` claim chain. The chain length is
/// capped at `max_depth`; the expiry is unchanged.
pub fn delegate_token(
    anchors: &TrustAnchors,
    tokens: &TokenSet,
    acting_party: &EntityId,
    max_depth: u32,
    now: Timestamp,
) -> Result<TokenSet, DelegationError> {
    if now >= tokens.not_after {
        return Err(DelegationError::InvalidToken("expired".into()));
    }
    if let Verdict::Invalid(r) = verify_integrity(anchors, &Credential::TokenSet(tokens.clone())) {
        return Err(DelegationError::InvalidToken(r));
    }
    let mut chain: Vec<String> = tokens
        .id_claims
        .get(ACTING_PARTY_CLAIM)
        .map(|v| v.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    if chain.len() as u32 >= max_depth {
        return Err(DelegationError::DepthExhausted);
    }
    chain.push(acting_party.to_string());
    let mut out = tokens.clone();
    out.id_claims.insert(ACTING_PARTY_CLAIM.to_string(), chain.join(","));
    seal_token_set(anchors, out).map_err(|e| DelegationError::InvalidToken(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SigningKey;

    fn anchors() -> TrustAnchors {
        let mut a = TrustAnchors::new();
        let ca = EntityId::new("ca:x").unwrap();
        a.register(ca.clone(), SigningKey::derive(7, &ca));
        a
    }

    fn base_chain(a: &TrustAnchors) -> CertChain {
        let ca = EntityId::new("ca:x").unwrap();
        let key = a.key(&ca).unwrap();
        let cert = |subject: &str, nb, na, depth| Cert {
            subject_name: subject.into(),
            issuer_name: "ca:x".into(),
            not_before: nb,
            not_after: na,
            is_proxy: false,
            remaining_delegation_depth: depth,
            attr_certificate: None,
            integrity: IntegrityTag::unsigned(ca.clone()),
        };
        CertChain {
            certs: vec![
                seal_cert_with_key(cert("CN=alice", 0, 100_000, 3), ca.clone(), key),
                seal_cert_with_key(cert("ca:x", -1_000_000, 1_000_000, 0), ca.clone(), key),
            ],
        }
    }

    #[test]
    fn delegation_decrements_until_exhausted() {
        let a = anchors();
        let mut chain = base_chain(&a);
        assert!(validate_chain(&a, &chain, 10).unwrap().attrs.is_empty());
        for expected in [2, 1, 0] {
            chain = create_proxy_cert(&a, &chain, "svc", 3600, 10, true).unwrap();
            assert_eq!(chain.certs[0].remaining_delegation_depth, expected);
            assert_eq!(validate_chain(&a, &chain, 10).unwrap().subject, "CN=alice");
        }
        assert_eq!(
            create_proxy_cert(&a, &chain, "svc", 3600, 10, true),
            Err(DelegationError::DepthExhausted)
        );
    }

    #[test]
    fn overhanging_proxy_is_not_nested() {
        let a = anchors();
        let chain = base_chain(&a);
        assert_eq!(
            create_proxy_cert(&a, &chain, "svc", 200_000, 10, false),
            Err(DelegationError::WindowOutsideParent)
        );
        let mut bad = create_proxy_cert(&a, &chain, "svc", 200_000, 10, true).unwrap();
        assert_eq!(bad.certs[0].not_after, 100_000);
        bad.certs[0].not_after = 150_000;
        let ca = EntityId::new("ca:x").unwrap();
        let parent_key = *a.key(&ca).unwrap();
        let key = holder_key(&parent_key, &bad.certs[1].integrity);
        bad.certs[0] = seal_cert_with_key(bad.certs[0].clone(), ca, &key);
        assert_eq!(validate_chain(&a, &bad, 10).unwrap_err().rule(), "window not nested");
    }
}

//! Keyed integrity tags and the trust-anchor registry.
//!
//! Tags are HMAC-SHA256 over canonical bytes. Certificates in a chain are
//! tagged with their issuer's registered key, except proxy certificates,
//! which are tagged with a holder key derived from the parent certificate.

use std::collections::BTreeMap;
use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

use super::canonical;
use super::{
    AccessPart, Assertion, AttributeCertificate, Cert, CertChain, Credential, EntityId,
    IntegrityTag, ModelError, TokenSet,
};

type HmacSha256 = Hmac<Sha256>;

const FINGERPRINT_LABEL: &[u8] = b"fedsim-anchor-fingerprint-v1";
const HOLDER_LABEL: &[u8] = b"fedsim-holder-v1";
const KEY_LABEL: &[u8] = b"fedsim-key-v1";

/// 256-bit symmetric signing key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SigningKey([u8; 32]);

impl SigningKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SigningKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, ModelError> {
        let raw = hex::decode(s).map_err(|_| ModelError::MalformedKey)?;
        let bytes: [u8; 32] = raw.try_into().map_err(|_| ModelError::MalformedKey)?;
        Ok(SigningKey(bytes))
    }

    /// Deterministic key for an entity under a simulation seed.
    pub fn derive(seed: u64, entity: &EntityId) -> Self {
        let mut h = Sha256::new();
        h.update(KEY_LABEL);
        h.update(seed.to_be_bytes());
        h.update(entity.as_str().as_bytes());
        SigningKey(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Keyed digest identifying the key without revealing it.
    pub fn fingerprint(&self) -> String {
        hex::encode(hmac(&self.0, &[FINGERPRINT_LABEL]))
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKey({})", &self.fingerprint()[..16])
    }
}

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Result of an integrity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid(String),
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    fn invalid(reason: impl Into<String>) -> Self {
        Verdict::Invalid(reason.into())
    }
}

/// Issuer to key map used both to mint and to verify tags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrustAnchors {
    keys: BTreeMap<EntityId, SigningKey>,
}

impl TrustAnchors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, issuer: EntityId, key: SigningKey) {
        self.keys.insert(issuer, key);
    }

    pub fn key(&self, issuer: &EntityId) -> Option<&SigningKey> {
        self.keys.get(issuer)
    }

    pub fn contains(&self, issuer: &EntityId) -> bool {
        self.keys.contains_key(issuer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &SigningKey)> {
        self.keys.iter()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Sub-registry restricted to the given issuers.
    pub fn subset<'a>(&self, issuers: impl IntoIterator<Item = &'a EntityId>) -> TrustAnchors {
        let mut out = TrustAnchors::new();
        for id in issuers {
            if let Some(k) = self.keys.get(id) {
                out.register(id.clone(), *k);
            }
        }
        out
    }

    /// Tags `payload` with the issuer's registered key.
    pub fn mint(&self, issuer: &EntityId, payload: &[u8]) -> Result<IntegrityTag, ModelError> {
        let key = self
            .keys
            .get(issuer)
            .ok_or_else(|| ModelError::UnknownIssuerKey(issuer.clone()))?;
        Ok(mint_with_key(issuer.clone(), key, payload))
    }

    pub fn verify_payload(&self, tag: &IntegrityTag, payload: &[u8]) -> Verdict {
        match self.keys.get(&tag.issuer) {
            None => Verdict::invalid("unknown issuer"),
            Some(key) if mint_with_key(tag.issuer.clone(), key, payload) == *tag => Verdict::Valid,
            Some(_) => Verdict::invalid("tag mismatch"),
        }
    }
}

pub fn mint_with_key(issuer: EntityId, key: &SigningKey, payload: &[u8]) -> IntegrityTag {
    IntegrityTag {
        issuer,
        tag: hmac(key.as_bytes(), &[payload]),
    }
}

/// Key a certificate holder uses to sign proxies below that certificate.
pub fn holder_key(signing_key: &SigningKey, cert_tag: &IntegrityTag) -> SigningKey {
    SigningKey(hmac(signing_key.as_bytes(), &[HOLDER_LABEL, &cert_tag.tag]))
}

/// Checks the integrity of a credential against the registry.
pub fn verify_integrity(anchors: &TrustAnchors, c: &Credential) -> Verdict {
    match c {
        Credential::Assertion(a) => {
            if a.integrity.issuer != a.issuer {
                return Verdict::invalid("issuer mismatch");
            }
            anchors.verify_payload(&a.integrity, &canonical::assertion_bytes(a))
        }
        Credential::TokenSet(t) => {
            if t.integrity.issuer != t.issuer {
                return Verdict::invalid("issuer mismatch");
            }
            if let AccessPart::SelfContained { claims, integrity } = &t.access {
                if integrity.issuer != t.issuer {
                    return Verdict::invalid("issuer mismatch");
                }
                let inner = anchors.verify_payload(integrity, &canonical::access_claims_bytes(claims));
                if !inner.is_valid() {
                    return inner;
                }
            }
            anchors.verify_payload(&t.integrity, &canonical::token_set_bytes(t))
        }
        Credential::CertChain(chain) => verify_chain_tags(anchors, chain),
    }
}

/// Signing key of every certificate in the chain, root first, or the first
/// failure encountered while deriving them.
pub(crate) fn chain_signing_keys(
    anchors: &TrustAnchors,
    chain: &CertChain,
) -> Result<Vec<SigningKey>, Verdict> {
    let mut keys: Vec<SigningKey> = Vec::with_capacity(chain.certs.len());
    for (pos, cert) in chain.certs.iter().enumerate().rev() {
        if !cert.is_proxy {
            let issuer = EntityId::new(cert.issuer_name.clone())
                .map_err(|_| Verdict::invalid("unknown issuer"))?;
            if cert.integrity.issuer != issuer {
                return Err(Verdict::invalid("issuer mismatch"));
            }
        }
        let parent = chain.certs.get(pos + 1);
        let key = match parent {
            Some(parent) if !parent.is_self_signed() => {
                holder_key(keys.last().expect("parent processed first"), &parent.integrity)
            }
            None if cert.is_proxy => return Err(Verdict::invalid("proxy without parent")),
            _ => *anchors
                .key(&cert.integrity.issuer)
                .ok_or_else(|| Verdict::invalid("unknown issuer"))?,
        };
        keys.push(key);
    }
    keys.reverse();
    Ok(keys)
}

fn verify_chain_tags(anchors: &TrustAnchors, chain: &CertChain) -> Verdict {
    if chain.certs.is_empty() {
        return Verdict::invalid("empty chain");
    }
    let keys = match chain_signing_keys(anchors, chain) {
        Ok(k) => k,
        Err(v) => return v,
    };
    for (cert, key) in chain.certs.iter().zip(&keys) {
        let expected = mint_with_key(cert.integrity.issuer.clone(), key, &canonical::cert_bytes(cert));
        if expected.tag != cert.integrity.tag {
            return Verdict::invalid("tag mismatch");
        }
        if let Some(ac) = &cert.attr_certificate {
            let embedded_by = chain
                .certs
                .iter()
                .zip(&keys)
                .find(|(c, _)| !c.is_proxy && c.issuer_name == ac.issuer.as_str());
            let v = match embedded_by {
                Some((_, k)) => verify_attr_certificate_with_key(ac, k),
                None => verify_attr_certificate(anchors, ac),
            };
            if !v.is_valid() {
                return v;
            }
        }
    }
    Verdict::Valid
}

/// Checks an attribute certificate embedded by the certificate's own
/// issuer against that issuer's chain key.
pub fn verify_attr_certificate_with_key(ac: &AttributeCertificate, key: &SigningKey) -> Verdict {
    if ac.integrity.issuer != ac.issuer {
        return Verdict::invalid("issuer mismatch");
    }
    let expected = mint_with_key(ac.issuer.clone(), key, &canonical::attr_certificate_bytes(ac));
    if expected.tag == ac.integrity.tag {
        Verdict::Valid
    } else {
        Verdict::invalid("tag mismatch")
    }
}

pub fn verify_attr_certificate(anchors: &TrustAnchors, ac: &AttributeCertificate) -> Verdict {
    if ac.integrity.issuer != ac.issuer {
        return Verdict::invalid("issuer mismatch");
    }
    anchors.verify_payload(&ac.integrity, &canonical::attr_certificate_bytes(ac))
}

/// Tags an assertion with its issuer's key.
pub fn seal_assertion(anchors: &TrustAnchors, mut a: Assertion) -> Result<Assertion, ModelError> {
    a.integrity = anchors.mint(&a.issuer, &canonical::assertion_bytes(&a))?;
    Ok(a)
}

/// Tags a token set, including a self-contained access part.
pub fn seal_token_set(anchors: &TrustAnchors, mut t: TokenSet) -> Result<TokenSet, ModelError> {
    if let AccessPart::SelfContained { claims, integrity } = &mut t.access {
        *integrity = anchors.mint(&t.issuer, &canonical::access_claims_bytes(claims))?;
    }
    t.integrity = anchors.mint(&t.issuer, &canonical::token_set_bytes(&t))?;
    Ok(t)
}

pub fn seal_attr_certificate(
    anchors: &TrustAnchors,
    mut ac: AttributeCertificate,
) -> Result<AttributeCertificate, ModelError> {
    ac.integrity = anchors.mint(&ac.issuer, &canonical::attr_certificate_bytes(&ac))?;
    Ok(ac)
}

pub fn seal_attr_certificate_with_key(mut ac: AttributeCertificate, key: &SigningKey) -> AttributeCertificate {
    ac.integrity = mint_with_key(ac.issuer.clone(), key, &canonical::attr_certificate_bytes(&ac));
    ac
}

/// Tags a certificate with an explicit key; `tag_issuer` names the anchor
/// the key belongs to (or derives from, for proxies).
pub fn seal_cert_with_key(mut cert: Cert, tag_issuer: EntityId, key: &SigningKey) -> Cert {
    cert.integrity = mint_with_key(tag_issuer, key, &canonical::cert_bytes(&cert));
    cert
}

use std::collections::BTreeMap;
use std::fmt;

use super::{AttributeStatement, EntityId, Technology, Timestamp};

/// Keyed integrity tag over a credential's canonical bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntegrityTag {
    pub issuer: EntityId,
    pub tag: [u8; 32],
}

impl IntegrityTag {
    /// Zero tag used while a credential is being assembled.
    pub fn unsigned(issuer: EntityId) -> Self {
        IntegrityTag { issuer, tag: [0; 32] }
    }

    /// First eight hex characters, used in traces.
    pub fn short_hex(&self) -> String {
        hex::encode(&self.tag[..4])
    }
}

impl fmt::Debug for IntegrityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntegrityTag({}, {})", self.issuer, hex::encode(self.tag))
    }
}

/// Web-SSO assertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub subject: String,
    pub issuer: EntityId,
    pub audience: EntityId,
    pub attributes: Vec<AttributeStatement>,
    pub auth_instant: Timestamp,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub integrity: IntegrityTag,
}

/// Access part of a token set: either the claims themselves or an opaque
/// handle that must be resolved at the issuer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessPart {
    SelfContained {
        claims: Vec<AttributeStatement>,
        integrity: IntegrityTag,
    },
    Reference(String),
}

/// Token-set credential (id claims plus an access part).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    pub id_claims: BTreeMap<String, String>,
    pub subject: String,
    pub issuer: EntityId,
    pub audience: EntityId,
    pub access: AccessPart,
    pub not_after: Timestamp,
    pub integrity: IntegrityTag,
}

/// VOMS-style attribute certificate embedded in a certificate extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeCertificate {
    pub issuer: EntityId,
    /// End-entity subject the statements are about.
    pub holder: String,
    pub statements: Vec<AttributeStatement>,
    pub not_after: Timestamp,
    pub integrity: IntegrityTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cert {
    pub subject_name: String,
    pub issuer_name: String,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
    pub is_proxy: bool,
    pub remaining_delegation_depth: u32,
    pub attr_certificate: Option<AttributeCertificate>,
    pub integrity: IntegrityTag,
}

impl Cert {
    /// Statements carried in the attribute extension, if any.
    pub fn attr_extension(&self) -> &[AttributeStatement] {
        self.attr_certificate
            .as_ref()
            .map(|ac| ac.statements.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_self_signed(&self) -> bool {
        self.subject_name == self.issuer_name
    }
}

/// Certificate chain ordered leaf to anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertChain {
    pub certs: Vec<Cert>,
}

impl CertChain {
    pub fn leaf(&self) -> Option<&Cert> {
        self.certs.first()
    }

    pub fn root(&self) -> Option<&Cert> {
        self.certs.last()
    }

    /// The first non-proxy certificate from the leaf: the identity that
    /// every proxy in front of it acts for.
    pub fn end_entity(&self) -> Option<&Cert> {
        self.certs.iter().find(|c| !c.is_proxy)
    }
}

/// A credential in one of the three technology idioms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Credential {
    Assertion(Assertion),
    TokenSet(TokenSet),
    CertChain(CertChain),
}

impl Credential {
    pub fn technology(&self) -> Technology {
        match self {
            Credential::Assertion(_) => Technology::Saml,
            Credential::TokenSet(_) => Technology::Oidc,
            Credential::CertChain(_) => Technology::X509,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Credential::Assertion(_) => "assertion",
            Credential::TokenSet(_) => "token-set",
            Credential::CertChain(_) => "cert-chain",
        }
    }

    /// The subject the credential speaks about. For chains this is the
    /// end-entity subject.
    pub fn subject(&self) -> Option<&str> {
        match self {
            Credential::Assertion(a) => Some(&a.subject),
            Credential::TokenSet(t) => Some(&t.subject),
            Credential::CertChain(c) => c.end_entity().map(|c| c.subject_name.as_str()),
        }
    }

    pub fn audience(&self) -> Option<&EntityId> {
        match self {
            Credential::Assertion(a) => Some(&a.audience),
            Credential::TokenSet(t) => Some(&t.audience),
            Credential::CertChain(_) => None,
        }
    }

    /// The entity whose key vouches for the credential. For chains this is
    /// the self-signed root.
    pub fn issuer(&self) -> Option<&EntityId> {
        match self {
            Credential::Assertion(a) => Some(&a.issuer),
            Credential::TokenSet(t) => Some(&t.issuer),
            Credential::CertChain(c) => c.root().map(|r| &r.integrity.issuer),
        }
    }

    /// End of the validity window (the leaf's for chains).
    pub fn not_after(&self) -> Option<Timestamp> {
        match self {
            Credential::Assertion(a) => Some(a.not_after),
            Credential::TokenSet(t) => Some(t.not_after),
            Credential::CertChain(c) => c.leaf().map(|l| l.not_after),
        }
    }

    /// Statements carried inside the credential itself.
    pub fn statements(&self) -> Vec<AttributeStatement> {
        match self {
            Credential::Assertion(a) => a.attributes.clone(),
            Credential::TokenSet(t) => match &t.access {
                AccessPart::SelfContained { claims, .. } => claims.clone(),
                AccessPart::Reference(_) => Vec::new(),
            },
            Credential::CertChain(c) => c
                .certs
                .iter()
                .take_while(|c| c.is_proxy)
                .chain(c.end_entity())
                .flat_map(|c| c.attr_extension().iter().cloned())
                .collect(),
        }
    }

    pub fn integrity(&self) -> Option<&IntegrityTag> {
        match self {
            Credential::Assertion(a) => Some(&a.integrity),
            Credential::TokenSet(t) => Some(&t.integrity),
            Credential::CertChain(c) => c.leaf().map(|l| &l.integrity),
        }
    }
}

//! Shared vocabulary: identifiers, assurance levels, attribute statements,
//! credentials, integrity tags and principals.

mod attribute;
mod canonical;
mod credential;
mod ids;
mod integrity;
mod principal;

use thiserror::Error;

pub use attribute::{
    inbound_name, is_canonical, is_valid_name, sort_statements, AttributeStatement,
    CANONICAL_NAMES, RAW_PREFIX,
};
pub use canonical::{canonical_serialize, cert_bytes, MAGIC as CANONICAL_MAGIC};
pub use credential::{
    AccessPart, Assertion, AttributeCertificate, Cert, CertChain, Credential, IntegrityTag,
    TokenSet,
};
pub use ids::{loa_combine, Delivery, EntityId, LoALevel, ScopedId, Technology, Timestamp};
pub use integrity::{
    holder_key, mint_with_key, seal_assertion, seal_attr_certificate, seal_attr_certificate_with_key,
    seal_cert_with_key, verify_attr_certificate_with_key,
    seal_token_set, verify_attr_certificate, verify_integrity, SigningKey, TrustAnchors, Verdict,
};
pub(crate) use integrity::chain_signing_keys;
pub use principal::{HomeIdentity, LinkedIdentity, LinkedKind, LocalAccountRef, PrincipalRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("entity id must not be empty")]
    EmptyEntityId,
    #[error("unknown level of assurance `{0}`")]
    UnknownLoa(String),
    #[error("unknown technology `{0}`")]
    UnknownTechnology(String),
    #[error("unknown delivery mode `{0}`")]
    UnknownDelivery(String),
    #[error("loa_combine needs at least one level")]
    EmptyLoaList,
    #[error("malformed scoped identifier `{0}`")]
    MalformedScopedId(String),
    #[error("malformed scope `{0}`")]
    MalformedScope(String),
    #[error("attribute name `{0}` is neither canonical nor raw-prefixed")]
    InvalidAttributeName(String),
    #[error("no signing key registered for `{0}`")]
    UnknownIssuerKey(EntityId),
    #[error("signing keys are 32 bytes of hex")]
    MalformedKey,
    #[error("identity ({0}, {1}) already on this record")]
    DuplicateIdentity(EntityId, String),
    #[error("record already holds a different local account at {0} (wanted `{1}`)")]
    DuplicateLocalAccount(EntityId, String),
}

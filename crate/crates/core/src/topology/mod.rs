//! The entity graph and trust fabric.
//!
//! A [`Topology`] holds every entity of a simulated deployment, the
//! federations they belong to, the release policies between them and the
//! trust-anchor registry. It is immutable once loaded.

mod doc;
mod metadata;
mod trust;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::AuthzRule;
use crate::model::{
    inbound_name, Delivery, EntityId, LoALevel, ScopedId, SigningKey, Technology, Timestamp, TrustAnchors,
};

pub use doc::{load_topology, parse_header, DocumentKind, TopologyDoc, SCENARIO_HEADER, TOPOLOGY_HEADER};
pub use metadata::{export_metadata, import_anchors, MetadataDocument, MetadataEntry};
pub use trust::trusts;
pub use validate::{validate_invariants, Finding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    IdP,
    OP,
    CA,
    SP,
    AA,
    VOMS,
    Proxy,
    TTS,
    GuestIdP,
    SocialIdP,
}

impl EntityKind {
    /// Lower-case label used in trace skeletons.
    pub fn label(self) -> &'static str {
        match self {
            EntityKind::IdP => "idp",
            EntityKind::OP => "op",
            EntityKind::CA => "ca",
            EntityKind::SP => "sp",
            EntityKind::AA => "aa",
            EntityKind::VOMS => "voms",
            EntityKind::Proxy => "proxy",
            EntityKind::TTS => "tts",
            EntityKind::GuestIdP => "guest-idp",
            EntityKind::SocialIdP => "social-idp",
        }
    }

    /// Entities that authenticate users.
    pub fn is_identity_provider(self) -> bool {
        matches!(
            self,
            EntityKind::IdP | EntityKind::OP | EntityKind::CA | EntityKind::GuestIdP | EntityKind::SocialIdP
        )
    }

    pub fn is_attribute_authority(self) -> bool {
        matches!(self, EntityKind::AA | EntityKind::VOMS)
    }

    fn default_protocols(self) -> &'static [Technology] {
        match self {
            EntityKind::IdP | EntityKind::GuestIdP | EntityKind::SocialIdP => &[Technology::Saml],
            EntityKind::OP => &[Technology::Oidc],
            EntityKind::CA | EntityKind::VOMS => &[Technology::X509],
            EntityKind::SP | EntityKind::AA | EntityKind::Proxy => &[Technology::Saml],
            EntityKind::TTS => &[],
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One or several values for a stored attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValues {
    One(String),
    Many(Vec<String>),
}

impl AttrValues {
    pub fn values(&self) -> Vec<&str> {
        match self {
            AttrValues::One(v) => vec![v.as_str()],
            AttrValues::Many(vs) => vs.iter().map(String::as_str).collect(),
        }
    }
}

/// A user account held by an identity provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loa: Option<LoALevel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, AttrValues>,
}

impl UserEntry {
    pub fn handle(&self) -> &str {
        self.handle.as_deref().unwrap_or(&self.subject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Keying {
    /// Records keyed by (home issuer, subject id).
    #[default]
    Home,
    /// Records keyed by the persistent scoped identifier.
    UniqueId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorityRecordDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique_id: Option<ScopedId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<String>,
    /// `group:role` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub custom: BTreeMap<String, String>,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn default_aa_loa() -> LoALevel {
    LoALevel::Substantial
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthorityConfig {
    #[serde(default)]
    pub keying: Keying,
    #[serde(default = "default_aa_loa")]
    pub assertion_loa: LoALevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admins: Vec<String>,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub available: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<AuthorityRecordDoc>,
}

impl Default for AuthorityConfig {
    fn default() -> Self {
        AuthorityConfig {
            keying: Keying::Home,
            assertion_loa: LoALevel::Substantial,
            admins: Vec::new(),
            available: true,
            records: Vec::new(),
        }
    }
}

/// An attribute source consulted during aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRef {
    pub aa: EntityId,
    #[serde(default, skip_serializing_if = "is_false")]
    pub required: bool,
}

fn default_issue_tech() -> Technology {
    Technology::Saml
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxyConfig {
    pub scope: String,
    #[serde(default = "default_issue_tech")]
    pub issue_tech: Technology,
    /// Attributes requested upstream; empty means no restriction.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub upstream_attributes: BTreeSet<String>,
    /// Inbound name to canonical name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mapping: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceRef>,
}

/// A translation capability owned by an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub from: Technology,
    pub to: Technology,
    pub lifetime: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery: Option<Delivery>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationLocus {
    #[default]
    Proxy,
    Sp,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalAccountConfig {
    #[serde(default, skip_serializing_if = "is_false")]
    pub auto_provision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VomsRequest {
    pub server: EntityId,
    pub vo: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<String>,
}

/// End-service settings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default)]
    pub locus: AggregationLocus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration_sp: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mapping: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_accounts: Option<LocalAccountConfig>,
    /// Group or role value to local privilege.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub privileges: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authz: Vec<AuthzRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voms: Option<VomsRequest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub protocols: BTreeSet<Technology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_behind: Option<EntityId>,
    /// Explicit trust anchors held by this entity.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub anchors: BTreeSet<EntityId>,
    /// Hex signing key; derived from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub egov: bool,
    /// LoA attached to attributes this provider issues.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_loa: Option<LoALevel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub users: Vec<UserEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authority: Option<AuthorityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy: Option<ProxyConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<RouteConfig>,
    /// For a TTS: the entity whose anchor certifies its issuing CA.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_by: Option<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceConfig>,
}

impl Entity {
    pub fn new(id: EntityId, kind: EntityKind) -> Self {
        Entity {
            id,
            kind,
            protocols: kind.default_protocols().iter().copied().collect(),
            internal_behind: None,
            anchors: BTreeSet::new(),
            key: None,
            egov: false,
            attribute_loa: None,
            users: Vec::new(),
            authority: None,
            proxy: None,
            routes: Vec::new(),
            certified_by: None,
            service: None,
        }
    }

    pub fn is_internal(&self) -> bool {
        self.internal_behind.is_some()
    }

    /// LoA for attributes issued by this provider.
    pub fn issued_loa(&self) -> LoALevel {
        if let Some(l) = self.attribute_loa {
            return l;
        }
        match self.kind {
            EntityKind::GuestIdP => LoALevel::Low,
            EntityKind::SocialIdP if self.egov => LoALevel::Substantial,
            EntityKind::SocialIdP => LoALevel::Low,
            _ => LoALevel::Substantial,
        }
    }

    pub fn user(&self, subject: &str) -> Option<&UserEntry> {
        self.users.iter().find(|u| u.subject == subject)
    }

    pub fn route(&self, from: Technology, to: Technology) -> Option<&RouteConfig> {
        self.routes.iter().find(|r| r.from == from && r.to == to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FederationModel {
    FullMesh,
    HubAndSpoke,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Federation {
    pub id: String,
    pub model: FederationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub: Option<EntityId>,
    #[serde(default)]
    pub members: BTreeSet<EntityId>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub interfederated: bool,
}

fn default_assertion_lifetime() -> i64 {
    300
}
fn default_token_lifetime() -> i64 {
    3600
}
fn default_code_lifetime() -> i64 {
    60
}
fn default_extension_lifetime() -> i64 {
    43_200
}
fn default_delegation_depth() -> u32 {
    3
}

/// Credential lifetimes in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lifetimes {
    #[serde(default = "default_assertion_lifetime")]
    pub assertion: i64,
    #[serde(default = "default_token_lifetime")]
    pub token: i64,
    #[serde(default = "default_code_lifetime")]
    pub code: i64,
    #[serde(default = "default_extension_lifetime")]
    pub voms_extension: i64,
    #[serde(default = "default_delegation_depth")]
    pub delegation_depth: u32,
}

impl Default for Lifetimes {
    fn default() -> Self {
        Lifetimes {
            assertion: default_assertion_lifetime(),
            token: default_token_lifetime(),
            code: default_code_lifetime(),
            voms_extension: default_extension_lifetime(),
            delegation_depth: default_delegation_depth(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("missing document header (expected `{TOPOLOGY_HEADER}` or `{SCENARIO_HEADER}`)")]
    MissingHeader,
    #[error("unsupported document header `{0}`")]
    UnsupportedHeader(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(EntityId),
    #[error("duplicate federation id `{0}`")]
    DuplicateFederation(String),
    #[error("dangling entity reference: {context} refers to undeclared `{missing}`")]
    DanglingReference { context: String, missing: EntityId },
    #[error("hub missing: federation `{0}` is hub-and-spoke but its hub is not a declared member")]
    HubMissing(String),
    #[error("internal SP `{sp}` sits behind `{target}`, which is not a proxy")]
    InternalBehindNonProxy { sp: EntityId, target: EntityId },
    #[error("`{0}` declares internal_behind but is not an SP")]
    InternalBehindOnNonSp(EntityId),
    #[error("`{0}`: kind does not support protocols {1}")]
    KindProtocolMismatch(EntityId, String),
    #[error("entity id `{0}` must not contain `|`")]
    SeparatorInId(EntityId),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("unknown federation `{0}`")]
    UnknownFederation(String),
}

/// A fully linked deployment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub name: String,
    pub description: String,
    pub epoch: Timestamp,
    pub seed: u64,
    pub lifetimes: Lifetimes,
    pub entities: BTreeMap<EntityId, Entity>,
    pub federations: BTreeMap<String, Federation>,
    /// `(issuer, audience)` to released attribute names; unlisted pairs release nothing.
    pub release_policies: BTreeMap<(EntityId, EntityId), BTreeSet<String>>,
    pub anchors: TrustAnchors,
}

impl Topology {
    pub fn entity(&self, id: &EntityId) -> Result<&Entity, TopologyError> {
        self.entities
            .get(id)
            .ok_or_else(|| TopologyError::UnknownEntity(id.clone()))
    }

    pub fn kind_of(&self, id: &EntityId) -> Option<EntityKind> {
        self.entities.get(id).map(|e| e.kind)
    }

    /// Names released from `issuer` to `audience`.
    pub fn release_policy(&self, issuer: &EntityId, audience: &EntityId) -> BTreeSet<String> {
        self.release_policies
            .get(&(issuer.clone(), audience.clone()))
            .cloned()
            .unwrap_or_default()
    }

    /// Whether the policy for `(issuer, audience)` lists `name`. Policy
    /// entries may use the inbound or the `raw:`-prefixed spelling.
    pub fn releases(&self, issuer: &EntityId, audience: &EntityId, name: &str) -> bool {
        self.release_policies
            .get(&(issuer.clone(), audience.clone()))
            .is_some_and(|names| names.contains(name) || names.iter().any(|n| inbound_name(n) == name))
    }

    pub fn federations_of<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a Federation> + 'a {
        self.federations.values().filter(move |f| f.members.contains(id))
    }

    /// Rebuilds the anchor registry under a new seed.
    pub fn with_seed(mut self, seed: u64) -> Result<Self, TopologyError> {
        self.seed = seed;
        self.anchors = build_anchors(self.seed, self.entities.values())?;
        Ok(self)
    }

    /// Serializes back to a `fedsim-topology v1` document.
    pub fn to_document(&self) -> String {
        doc::serialize_topology(self)
    }
}

pub(crate) fn build_anchors<'a>(
    seed: u64,
    entities: impl IntoIterator<Item = &'a Entity>,
) -> Result<TrustAnchors, TopologyError> {
    let mut anchors = TrustAnchors::new();
    for e in entities {
        let key = match &e.key {
            Some(hex) => SigningKey::from_hex(hex)
                .map_err(|_| TopologyError::Invalid(format!("{}: malformed key", e.id)))?,
            None => SigningKey::derive(seed, &e.id),
        };
        anchors.register(e.id.clone(), key);
    }
    Ok(anchors)
}

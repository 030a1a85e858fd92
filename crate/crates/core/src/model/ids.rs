use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Seconds on the simulated logical clock.
pub type Timestamp = i64;

/// URI-like identifier of a topology entity, e.g. `idp:uni-x.example`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        if value.is_empty() {
            return Err(ModelError::EmptyEntityId);
        }
        Ok(EntityId(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EntityId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        EntityId::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl FromStr for EntityId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityId::new(s)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for EntityId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Level of assurance, totally ordered `low < substantial < high`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum LoALevel {
    #[default]
    Low,
    Substantial,
    High,
}

impl LoALevel {
    pub const ALL: [LoALevel; 3] = [LoALevel::Low, LoALevel::Substantial, LoALevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            LoALevel::Low => "low",
            LoALevel::Substantial => "substantial",
            LoALevel::High => "high",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LoALevel::Low => 0,
            LoALevel::Substantial => 1,
            LoALevel::High => 2,
        }
    }
}

impl fmt::Display for LoALevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoALevel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(LoALevel::Low),
            "substantial" => Ok(LoALevel::Substantial),
            "high" => Ok(LoALevel::High),
            other => Err(ModelError::UnknownLoa(other.to_string())),
        }
    }
}

/// Combines levels of assurance by taking the weakest one.
pub fn loa_combine(levels: &[LoALevel]) -> Result<LoALevel, ModelError> {
    levels.iter().copied().min().ok_or(ModelError::EmptyLoaList)
}

/// Credential technology idiom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "saml-like")]
    Saml,
    #[serde(rename = "oidc-like")]
    Oidc,
    #[serde(rename = "x509-like")]
    X509,
}

impl Technology {
    pub const ALL: [Technology; 3] = [Technology::Saml, Technology::Oidc, Technology::X509];

    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Saml => "saml-like",
            Technology::Oidc => "oidc-like",
            Technology::X509 => "x509-like",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technology {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "saml-like" | "saml" => Ok(Technology::Saml),
            "oidc-like" | "oidc" => Ok(Technology::Oidc),
            "x509-like" | "x509" => Ok(Technology::X509),
            other => Err(ModelError::UnknownTechnology(other.to_string())),
        }
    }
}

/// How an attribute reaches the relying party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delivery {
    Push,
    Pull,
}

impl Delivery {
    pub fn as_str(self) -> &'static str {
        match self {
            Delivery::Push => "push",
            Delivery::Pull => "pull",
        }
    }
}

impl fmt::Display for Delivery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Delivery {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "push" => Ok(Delivery::Push),
            "pull" => Ok(Delivery::Pull),
            other => Err(ModelError::UnknownDelivery(other.to_string())),
        }
    }
}

/// Scoped persistent identifier, rendered as `local_part@scope`.
///
/// The local part is always 32 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScopedId {
    local_part: String,
    scope: String,
}

impl ScopedId {
    pub fn new(local_part: impl Into<String>, scope: impl Into<String>) -> Result<Self, ModelError> {
        let local_part = local_part.into();
        let scope = scope.into();
        let well_formed = local_part.len() == 32
            && local_part
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(ModelError::MalformedScopedId(local_part));
        }
        // '@' in the scope would make the rendering ambiguous.
        if scope.is_empty() || scope.contains('@') {
            return Err(ModelError::MalformedScope(scope));
        }
        Ok(ScopedId { local_part, scope })
    }

    pub fn local_part(&self) -> &str {
        &self.local_part
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    pub fn render(&self) -> String {
        format!("{}@{}", self.local_part, self.scope)
    }
}

impl fmt::Display for ScopedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.local_part, self.scope)
    }
}

impl FromStr for ScopedId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (local, scope) = s
            .split_once('@')
            .ok_or_else(|| ModelError::MalformedScopedId(s.to_string()))?;
        ScopedId::new(local, scope)
    }
}

impl TryFrom<String> for ScopedId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ScopedId> for String {
    fn from(id: ScopedId) -> Self {
        id.render()
    }
}

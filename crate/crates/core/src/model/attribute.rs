use serde::{Deserialize, Serialize};

use super::{Delivery, EntityId, LoALevel, ModelError};

/// The canonical attribute vocabulary that harmonized statements use.
pub const CANONICAL_NAMES: [&str; 8] = [
    "unique-id",
    "display-name",
    "mail",
    "affiliation",
    "group",
    "role",
    "loa",
    "scope",
];

/// Prefix carried by attribute names outside the canonical vocabulary.
pub const RAW_PREFIX: &str = "raw:";

pub fn is_canonical(name: &str) -> bool {
    CANONICAL_NAMES.contains(&name)
}

/// True for names a statement may carry: canonical, or `raw:` plus something.
pub fn is_valid_name(name: &str) -> bool {
    is_canonical(name) || name.strip_prefix(RAW_PREFIX).is_some_and(|rest| !rest.is_empty())
}

/// Maps an inbound attribute name onto the statement naming rule: canonical
/// names pass through, anything else gains the `raw:` prefix once.
pub fn inbound_name(name: &str) -> String {
    if is_valid_name(name) {
        name.to_string()
    } else {
        format!("{RAW_PREFIX}{name}")
    }
}

/// One named, issuer-attributed, LoA-tagged claim about a subject.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeStatement {
    name: String,
    value: String,
    issuer: EntityId,
    loa: LoALevel,
    scope: Option<String>,
    delivery: Delivery,
}

impl AttributeStatement {
    pub fn new(
        name: impl Into<String>,
        value: impl Into<String>,
        issuer: EntityId,
        loa: LoALevel,
        delivery: Delivery,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(ModelError::InvalidAttributeName(name));
        }
        Ok(AttributeStatement {
            name,
            value: value.into(),
            issuer,
            loa,
            scope: None,
            delivery,
        })
    }

    pub fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn issuer(&self) -> &EntityId {
        &self.issuer
    }

    pub fn loa(&self) -> LoALevel {
        self.loa
    }

    pub fn scope(&self) -> Option<&str> {
        self.scope.as_deref()
    }

    pub fn delivery(&self) -> Delivery {
        self.delivery
    }

    /// Copy with a different name. The name must be valid.
    pub fn renamed(&self, name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(ModelError::InvalidAttributeName(name));
        }
        Ok(AttributeStatement {
            name,
            ..self.clone()
        })
    }

    pub fn with_delivery(&self, delivery: Delivery) -> Self {
        AttributeStatement {
            delivery,
            ..self.clone()
        }
    }

    pub fn with_loa(&self, loa: LoALevel) -> Self {
        AttributeStatement { loa, ..self.clone() }
    }

    /// Key used for every deterministic statement ordering.
    pub fn sort_key(&self) -> (&str, &str, &str) {
        (&self.name, self.issuer.as_str(), &self.value)
    }
}

/// Stable sort by `(name, issuer, value)`.
pub fn sort_statements(statements: &mut [AttributeStatement]) {
    statements.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

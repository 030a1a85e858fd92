use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AttributeStatement, EntityId, LoALevel};
use crate::proxy::CompositeIdentity;
use crate::topology::Topology;

/// One access rule: every `name=value` pattern must match and the
/// identity's effective LoA must reach `min_loa`. A value of `*` matches any.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthzRule {
    #[serde(default)]
    pub require: Vec<String>,
    #[serde(default)]
    pub min_loa: LoALevel,
}

impl AuthzRule {
    pub fn new(require: &[&str], min_loa: LoALevel) -> Self {
        AuthzRule {
            require: require.iter().map(|s| s.to_string()).collect(),
            min_loa,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        for p in &self.require {
            match p.split_once('=') {
                Some((n, v)) if !n.is_empty() && !v.is_empty() => {}
                _ => return Err(format!("authz pattern `{p}` is not name=value")),
            }
        }
        Ok(())
    }

    pub fn patterns(&self) -> impl Iterator<Item = (&str, &str)> {
        self.require.iter().filter_map(|p| p.split_once('='))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthzPolicy {
    pub sp: EntityId,
    pub rules: Vec<AuthzRule>,
}

impl AuthzPolicy {
    /// The SP's configured rules; no rules means deny everything.
    pub fn for_sp(t: &Topology, sp: &EntityId) -> Self {
        let rules = t
            .entities
            .get(sp)
            .and_then(|e| e.service.as_ref())
            .map(|s| s.authz.clone())
            .unwrap_or_default();
        AuthzPolicy { sp: sp.clone(), rules }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "decision", content = "reason")]
pub enum Decision {
    Granted,
    Denied(String),
}

impl Decision {
    pub fn is_granted(&self) -> bool {
        matches!(self, Decision::Granted)
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Decision::Granted => None,
            Decision::Denied(r) => Some(r),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Granted => f.write_str("granted"),
            Decision::Denied(r) => write!(f, "denied({r})"),
        }
    }
}

fn first_failure(rule: &AuthzRule, statements: &[AttributeStatement], loa: LoALevel) -> Option<String> {
    for (name, value) in rule.patterns() {
        let hit = statements
            .iter()
            .any(|s| s.name() == name && (value == "*" || s.value() == value));
        if !hit {
            return Some(format!("missing {name}={value}"));
        }
    }
    if loa < rule.min_loa {
        return Some(format!("loa below {}", rule.min_loa));
    }
    None
}

/// Evaluates rules in order. On denial the reason is the first failing
/// requirement of the last rule.
pub fn authorize_statements(p: &AuthzPolicy, statements: &[AttributeStatement], loa: LoALevel) -> Decision {
    let mut last = None;
    for rule in &p.rules {
        match first_failure(rule, statements, loa) {
            None => return Decision::Granted,
            Some(reason) => last = Some(reason),
        }
    }
    Decision::Denied(last.unwrap_or_else(|| "no matching rule".to_string()))
}

pub fn authorize(p: &AuthzPolicy, cid: &CompositeIdentity) -> Decision {
    authorize_statements(p, &cid.statements, cid.effective_loa)
}

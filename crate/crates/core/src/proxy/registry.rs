use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use super::ProxyError;
use crate::model::{EntityId, ScopedId};

pub const SNAPSHOT_HEADER: &str = "fedsim-registry v1";

/// First 32 hex characters of SHA-256 over `issuer|subject`.
pub fn unique_id_local_part(issuer: &EntityId, subject: &str) -> String {
    let mut h = Sha256::new();
    h.update(issuer.as_str().as_bytes());
    h.update(b"|");
    h.update(subject.as_bytes());
    let mut out = hex::encode(h.finalize());
    out.truncate(32);
    out
}

type Key = (EntityId, String);

/// Permanent `(issuer, subject)` to identifier bindings held by a proxy.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdRegistry {
    bindings: BTreeMap<Key, ScopedId>,
    reverse: BTreeMap<ScopedId, Key>,
    links: BTreeMap<Key, ScopedId>,
}

fn check_part(s: &str) -> Result<(), ProxyError> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(ProxyError::InvalidInput(format!("`{s}`")));
    }
    Ok(())
}

impl IdRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// Identifier for a bound or linked identity.
    pub fn lookup(&self, issuer: &EntityId, subject: &str) -> Option<&ScopedId> {
        let key = (issuer.clone(), subject.to_string());
        self.bindings.get(&key).or_else(|| self.links.get(&key))
    }

    pub fn binding_of(&self, id: &ScopedId) -> Option<(&EntityId, &str)> {
        self.reverse.get(id).map(|(i, s)| (i, s.as_str()))
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&EntityId, &str, &ScopedId)> {
        self.bindings.iter().map(|((i, s), id)| (i, s.as_str(), id))
    }

    /// Aliases another identity to an existing identifier.
    pub fn link(&mut self, issuer: &EntityId, subject: &str, id: &ScopedId) -> Result<(), ProxyError> {
        check_part(subject)?;
        if !self.reverse.contains_key(id) {
            return Err(ProxyError::InvalidInput(format!("link target {id} is not bound")));
        }
        match self.lookup(issuer, subject) {
            Some(existing) if existing == id => Ok(()),
            Some(existing) => Err(ProxyError::AlreadyBound(existing.render())),
            None => {
                self.links.insert((issuer.clone(), subject.to_string()), id.clone());
                Ok(())
            }
        }
    }

    fn bind(&mut self, key: Key, id: ScopedId) -> Result<(), ProxyError> {
        if let Some(existing) = self.reverse.get(&id) {
            if existing != &key {
                return Err(ProxyError::Collision(id.render()));
            }
        }
        if let Some(existing) = self.bindings.get(&key) {
            if existing != &id {
                return Err(ProxyError::AlreadyBound(existing.render()));
            }
            return Ok(());
        }
        self.reverse.insert(id.clone(), key.clone());
        self.bindings.insert(key, id);
        Ok(())
    }

    /// Deterministic text form; see [`IdRegistry::from_snapshot`].
    pub fn snapshot(&self) -> String {
        let mut out = format!("{SNAPSHOT_HEADER}\n");
        for ((i, s), id) in &self.bindings {
            out.push_str(&format!("bind\t{i}\t{s}\t{id}\n"));
        }
        for ((i, s), id) in &self.links {
            out.push_str(&format!("link\t{i}\t{s}\t{id}\n"));
        }
        out
    }

    /// Strict import: any rebinding or collision is an error.
    pub fn from_snapshot(text: &str) -> Result<Self, ProxyError> {
        let mut reg = IdRegistry::new();
        for ev in parse_snapshot(text)? {
            match ev.kind {
                EventKind::Bind => reg.bind((ev.issuer, ev.subject), ev.id)?,
                EventKind::Link => reg.link(&ev.issuer, &ev.subject, &ev.id)?,
            }
        }
        Ok(reg)
    }
}

/// Returns the bound identifier or mints and binds a fresh one.
pub fn derive_unique_id(
    registry: &mut IdRegistry,
    issuer: &EntityId,
    subject_id: &str,
    scope: &str,
) -> Result<ScopedId, ProxyError> {
    check_part(subject_id)?;
    if issuer.as_str().contains('|') {
        return Err(ProxyError::InvalidInput(format!("issuer `{issuer}` contains `|`")));
    }
    if let Some(id) = registry.lookup(issuer, subject_id) {
        return Ok(id.clone());
    }
    let id = ScopedId::new(unique_id_local_part(issuer, subject_id), scope)?;
    registry.bind((issuer.clone(), subject_id.to_string()), id.clone())?;
    Ok(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Bind,
    Link,
}

#[derive(Debug, Clone)]
struct SnapshotEvent {
    line: usize,
    kind: EventKind,
    issuer: EntityId,
    subject: String,
    id: ScopedId,
}

fn parse_snapshot(text: &str) -> Result<Vec<SnapshotEvent>, ProxyError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == SNAPSHOT_HEADER => {}
        _ => return Err(ProxyError::Snapshot(format!("missing `{SNAPSHOT_HEADER}` header"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || ProxyError::Snapshot(format!("line {}: malformed", n + 1));
        let parts: Vec<&str> = line.split('\t').collect();
        let [kind, issuer, subject, id] = parts[..] else {
            return Err(bad());
        };
        let kind = match kind {
            "bind" => EventKind::Bind,
            "link" => EventKind::Link,
            _ => return Err(bad()),
        };
        out.push(SnapshotEvent {
            line: n + 1,
            kind,
            issuer: EntityId::new(issuer).map_err(|_| bad())?,
            subject: subject.to_string(),
            id: id.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// A property broken by a registry snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryViolation {
    pub property: &'static str,
    pub line: usize,
    pub detail: String,
}

impl fmt::Display for RegistryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (line {}): {}", self.property, self.line, self.detail)
    }
}

/// Replays a snapshot and reports every broken property: `non-reassignment`
/// (an identity or identifier bound twice), `derivation` (identifier not the
/// documented digest) and `link-target` (alias of an unbound identifier).
pub fn audit_snapshot(text: &str) -> Result<Vec<RegistryViolation>, ProxyError> {
    let mut by_key: BTreeMap<Key, ScopedId> = BTreeMap::new();
    let mut by_id: BTreeMap<ScopedId, Key> = BTreeMap::new();
    let mut out = Vec::new();
    for ev in parse_snapshot(text)? {
        let key = (ev.issuer.clone(), ev.subject.clone());
        let v = |property, detail: String| RegistryViolation {
            property,
            line: ev.line,
            detail,
        };
        match ev.kind {
            EventKind::Bind => {
                if ev.id.local_part() != unique_id_local_part(&ev.issuer, &ev.subject) {
                    out.push(v("derivation", format!("{} for {}|{}", ev.id, ev.issuer, ev.subject)));
                }
                if let Some(prev) = by_key.get(&key) {
                    if prev != &ev.id {
                        out.push(v("non-reassignment", format!("{}|{} rebound from {prev} to {}", ev.issuer, ev.subject, ev.id)));
                    }
                }
                if let Some(prev) = by_id.get(&ev.id) {
                    if prev != &key {
                        out.push(v("non-reassignment", format!("{} reassigned from {}|{}", ev.id, prev.0, prev.1)));
                    }
                }
                by_key.entry(key.clone()).or_insert_with(|| ev.id.clone());
                by_id.entry(ev.id.clone()).or_insert(key);
            }
            EventKind::Link => {
                if !by_id.contains_key(&ev.id) {
                    out.push(v("link-target", format!("{} is not bound", ev.id)));
                }
            }
        }
    }
    Ok(out)
}

use std::collections::{BTreeMap, BTreeSet};

use super::harmonize::{harmonize, with_canonical_identity};
use super::{CompositeIdentity, ProxyError};
use crate::authority::{key_for, query_attributes, AuthorityError, AuthorityState, SubjectKey};
use crate::model::{
    loa_combine, sort_statements, AttributeStatement, Delivery, EntityId, LoALevel, ScopedId,
};
use crate::topology::{SourceRef, Topology};

/// Names for which the home organisation outranks community sources.
pub const HOME_FIRST: [&str; 3] = ["display-name", "mail", "affiliation"];

/// Names the aggregator always sets itself.
pub const INJECTED: [&str; 2] = ["unique-id", "loa"];

/// Merges harmonized statements by per-name precedence.
///
/// For each name a single source wins and contributes all its statements
/// for that name. Home wins for [`HOME_FIRST`]; otherwise later sources
/// beat earlier ones and every source beats home. Inbound [`INJECTED`]
/// names are dropped.
pub fn merge_by_precedence(
    home: &[AttributeStatement],
    sources: &[Vec<AttributeStatement>],
) -> Vec<AttributeStatement> {
    let mut names: BTreeSet<&str> = BTreeSet::new();
    for s in home.iter().chain(sources.iter().flatten()) {
        if !INJECTED.contains(&s.name()) {
            names.insert(s.name());
        }
    }
    let mut out = Vec::new();
    for name in names {
        let has = |list: &[AttributeStatement]| list.iter().any(|s| s.name() == name);
        let community = sources.iter().rev().find(|l| has(l)).map(Vec::as_slice);
        let winner = if HOME_FIRST.contains(&name) && has(home) {
            home
        } else {
            community.unwrap_or(home)
        };
        out.extend(winner.iter().filter(|s| s.name() == name).cloned());
    }
    sort_statements(&mut out);
    out.dedup();
    out
}

pub struct AggregationRequest<'a> {
    pub aggregator: &'a EntityId,
    pub home_issuer: &'a EntityId,
    pub home: &'a [AttributeStatement],
    /// Community statements that arrived inside the credential.
    pub pushed: &'a [AttributeStatement],
    /// Fallback LoA when home released nothing.
    pub identity_loa: LoALevel,
    pub sources: &'a [SourceRef],
    pub home_key: &'a SubjectKey,
    pub unique_id: &'a ScopedId,
    pub mapping: &'a BTreeMap<String, String>,
}

/// What happened when one source was queried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceQuery {
    pub aa: EntityId,
    /// Released attribute names as sent by the source, or the error.
    pub outcome: Result<Vec<String>, String>,
}

/// Builds the composite identity: harmonize home and every reachable
/// source, merge, inject `unique-id` and `loa`.
pub fn aggregate(
    t: &Topology,
    aas: &AuthorityState,
    req: &AggregationRequest<'_>,
) -> Result<(CompositeIdentity, Vec<SourceQuery>), ProxyError> {
    let mapping = with_canonical_identity(req.mapping);
    let home = harmonize(&mapping, req.home);
    let mut source_lists = Vec::new();
    let mut queries = Vec::new();
    let mut source_log = vec![(req.home_issuer.clone(), home.len())];
    if !req.pushed.is_empty() {
        let pushed = harmonize(&mapping, req.pushed);
        let issuers: BTreeSet<&EntityId> = pushed.iter().map(|s| s.issuer()).collect();
        for issuer in issuers {
            source_log.push((issuer.clone(), pushed.iter().filter(|s| s.issuer() == issuer).count()));
        }
        source_lists.push(pushed);
    }
    for src in req.sources {
        let key = key_for(t, &src.aa, req.home_key, Some(req.unique_id));
        match query_attributes(t, aas, &src.aa, &key, req.aggregator) {
            Ok(list) => {
                queries.push(SourceQuery {
                    aa: src.aa.clone(),
                    outcome: Ok(list.iter().map(|s| s.name().to_string()).collect()),
                });
                let list = harmonize(&mapping, &list);
                source_log.push((src.aa.clone(), list.len()));
                source_lists.push(list);
            }
            Err(e) if src.required => {
                return Err(match e {
                    AuthorityError::Unavailable(aa) => ProxyError::RequiredSourceUnavailable(aa),
                    other => ProxyError::Source(other),
                })
            }
            Err(e) => queries.push(SourceQuery {
                aa: src.aa.clone(),
                outcome: Err(e.to_string()),
            }),
        }
    }
    let identity_loas: Vec<LoALevel> = home
        .iter()
        .filter(|s| !INJECTED.contains(&s.name()))
        .map(|s| s.loa())
        .collect();
    let effective_loa = loa_combine(&identity_loas).unwrap_or(req.identity_loa);

    let mut statements = merge_by_precedence(&home, &source_lists);
    statements.push(
        AttributeStatement::new(
            "unique-id",
            req.unique_id.render(),
            req.aggregator.clone(),
            effective_loa,
            Delivery::Push,
        )?
        .with_scope(req.unique_id.scope()),
    );
    statements.push(AttributeStatement::new(
        "loa",
        effective_loa.as_str(),
        req.aggregator.clone(),
        effective_loa,
        Delivery::Push,
    )?);
    sort_statements(&mut statements);
    Ok((
        CompositeIdentity {
            persistent_unique_id: req.unique_id.clone(),
            statements,
            effective_loa,
            source_log,
        },
        queries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(name: &str, value: &str, issuer: &str) -> AttributeStatement {
        AttributeStatement::new(name, value, EntityId::new(issuer).unwrap(), LoALevel::Substantial, Delivery::Push)
            .unwrap()
    }

    #[test]
    fn home_wins_identity_names_and_last_source_wins_groups() {
        let home = vec![st("mail", "home@x", "idp:h"), st("group", "hg", "idp:h")];
        let a1 = vec![st("mail", "aa1@x", "aa:1"), st("group", "g1", "aa:1")];
        let a2 = vec![st("group", "g2", "aa:2"), st("group", "g3", "aa:2")];
        let out = merge_by_precedence(&home, &[a1, a2]);
        let pairs: Vec<(&str, &str)> = out.iter().map(|s| (s.name(), s.value())).collect();
        assert_eq!(pairs, [("group", "g2"), ("group", "g3"), ("mail", "home@x")]);
    }

    #[test]
    fn inbound_unique_id_is_dropped() {
        let home = vec![st("unique-id", "forged@x", "idp:h"), st("affiliation", "member", "idp:h")];
        let out = merge_by_precedence(&home, &[]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].name(), "affiliation");
    }
}

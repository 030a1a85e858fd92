use std::collections::{BTreeMap, BTreeSet};

use crate::model::{sort_statements, AttributeStatement, CANONICAL_NAMES, RAW_PREFIX};

/// Renames statements onto the canonical vocabulary.
///
/// Names that already are mapping targets pass through. Otherwise the
/// `raw:` prefix is stripped and the bare name looked up in `mapping`;
/// unmapped names come out as `raw:<name>`. The result is sorted by
/// `(name, issuer, value)` and harmonizing it again changes nothing.
pub fn harmonize(mapping: &BTreeMap<String, String>, raw: &[AttributeStatement]) -> Vec<AttributeStatement> {
    let targets: BTreeSet<&str> = mapping.values().map(String::as_str).collect();
    let mut out: Vec<AttributeStatement> = raw
        .iter()
        .map(|s| {
            let name = s.name();
            if targets.contains(name) {
                return s.clone();
            }
            let bare = name.strip_prefix(RAW_PREFIX).unwrap_or(name);
            let renamed = match mapping.get(bare) {
                Some(canonical) => canonical.clone(),
                None => format!("{RAW_PREFIX}{bare}"),
            };
            s.renamed(renamed).expect("mapping targets are canonical, raw names are prefixed")
        })
        .collect();
    sort_statements(&mut out);
    out
}

/// A configured mapping plus identity entries for every canonical name.
pub fn with_canonical_identity(mapping: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut m: BTreeMap<String, String> = CANONICAL_NAMES.iter().map(|n| (n.to_string(), n.to_string())).collect();
    m.extend(mapping.iter().map(|(k, v)| (k.clone(), v.clone())));
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Delivery, EntityId, LoALevel};

    fn st(name: &str, value: &str) -> AttributeStatement {
        AttributeStatement::new(
            crate::model::inbound_name(name),
            value,
            EntityId::new("idp:x").unwrap(),
            LoALevel::Substantial,
            Delivery::Push,
        )
        .unwrap()
    }

    #[test]
    fn single_rename_keeps_value() {
        let m = BTreeMap::from([("eduPersonAffiliation".to_string(), "affiliation".to_string())]);
        let out = harmonize(&m, &[st("eduPersonAffiliation", "member")]);
        assert_eq!((out[0].name(), out[0].value()), ("affiliation", "member"));
    }

    #[test]
    fn empty_mapping_prefixes_everything() {
        let out = harmonize(&BTreeMap::new(), &[st("mail", "a@b"), st("cn", "A")]);
        assert!(out.iter().all(|s| s.name().starts_with("raw:")));
        assert_eq!(harmonize(&BTreeMap::new(), &out), out);
    }

    #[test]
    fn canonical_identity_keeps_canonical_names() {
        let m = with_canonical_identity(&BTreeMap::new());
        let out = harmonize(&m, &[st("group", "g"), st("cn", "A")]);
        let names: Vec<&str> = out.iter().map(|s| s.name()).collect();
        assert_eq!(names, ["group", "raw:cn"]);
    }
}

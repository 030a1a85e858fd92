use serde::{Deserialize, Serialize};

use super::{EntityKind, FederationModel, Topology, TopologyError};
use crate::model::{EntityId, SigningKey, Technology, TrustAnchors};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub id: EntityId,
    pub kind: EntityKind,
    pub protocols: Vec<Technology>,
    pub key: String,
    pub fingerprint: String,
}

/// Federation metadata as published to the interfederation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataDocument {
    pub federation: String,
    pub model: FederationModel,
    pub interfederated: bool,
    pub entities: Vec<MetadataEntry>,
}

impl MetadataDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata always serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        serde_json::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))
    }
}

pub fn export_metadata(t: &Topology, federation: &str) -> Result<MetadataDocument, TopologyError> {
    let f = t
        .federations
        .get(federation)
        .ok_or_else(|| TopologyError::UnknownFederation(federation.to_string()))?;
    let mut entities = Vec::with_capacity(f.members.len());
    for m in &f.members {
        let e = t.entity(m)?;
        let key = t
            .anchors
            .key(m)
            .ok_or_else(|| TopologyError::Invalid(format!("{m}: no anchor key")))?;
        entities.push(MetadataEntry {
            id: m.clone(),
            kind: e.kind,
            protocols: e.protocols.iter().copied().collect(),
            key: key.to_hex(),
            fingerprint: key.fingerprint(),
        });
    }
    Ok(MetadataDocument {
        federation: f.id.clone(),
        model: f.model,
        interfederated: f.interfederated,
        entities,
    })
}

/// Rebuilds an anchor registry from metadata, checking every fingerprint.
pub fn import_anchors(doc: &MetadataDocument) -> Result<TrustAnchors, TopologyError> {
    let mut anchors = TrustAnchors::new();
    for e in &doc.entities {
        let key = SigningKey::from_hex(&e.key)
            .map_err(|_| TopologyError::Invalid(format!("{}: malformed key", e.id)))?;
        if key.fingerprint() != e.fingerprint {
            return Err(TopologyError::Invalid(format!("{}: fingerprint mismatch", e.id)));
        }
        anchors.register(e.id.clone(), key);
    }
    Ok(anchors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    const DOC: &str = r#"fedsim-topology v1
[[entities]]
id = "idp:a"
kind = "IdP"
[[entities]]
id = "sp:a"
kind = "SP"
[[federations]]
id = "fa"
model = "full-mesh"
members = ["idp:a", "sp:a"]
[[federations]]
id = "empty"
model = "full-mesh"
"#;

    #[test]
    fn export_import_round_trip() {
        let t = load_topology(DOC).unwrap();
        let md = export_metadata(&t, "fa").unwrap();
        let back = MetadataDocument::from_json(&md.to_json()).unwrap();
        let f = &t.federations["fa"];
        assert_eq!(import_anchors(&back).unwrap(), t.anchors.subset(&f.members));
    }

    #[test]
    fn empty_federation_and_unknown_federation() {
        let t = load_topology(DOC).unwrap();
        assert!(export_metadata(&t, "empty").unwrap().entities.is_empty());
        assert!(matches!(
            export_metadata(&t, "nope"),
            Err(TopologyError::UnknownFederation(_))
        ));
    }

    #[test]
    fn tampered_fingerprint_is_refused() {
        let t = load_topology(DOC).unwrap();
        let mut md = export_metadata(&t, "fa").unwrap();
        md.entities[0].fingerprint = "00".repeat(32);
        assert!(import_anchors(&md).is_err());
    }
}

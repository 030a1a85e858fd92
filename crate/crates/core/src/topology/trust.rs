use super::{FederationModel, Topology, TopologyError};
use crate::model::EntityId;

/// Visible to other federations through the interfederation: full-mesh
/// members, or the hub of a hub-and-spoke federation.
fn exposed(t: &Topology, id: &EntityId) -> bool {
    t.federations_of(id).any(|f| {
        f.interfederated
            && match f.model {
                FederationModel::FullMesh => true,
                FederationModel::HubAndSpoke => f.hub.as_ref() == Some(id),
            }
    })
}

/// Whether `verifier` accepts credentials issued by `issuer`.
pub fn trusts(t: &Topology, verifier: &EntityId, issuer: &EntityId) -> Result<bool, TopologyError> {
    let v = t.entity(verifier)?;
    t.entity(issuer)?;
    if verifier == issuer {
        return Ok(false);
    }
    if let Some(proxy) = &v.internal_behind {
        return Ok(proxy == issuer);
    }
    if v.anchors.contains(issuer) {
        return Ok(true);
    }
    for f in t.federations_of(verifier) {
        if !f.members.contains(issuer) {
            continue;
        }
        let linked = match f.model {
            FederationModel::FullMesh => true,
            FederationModel::HubAndSpoke => {
                f.hub.as_ref() == Some(verifier) || f.hub.as_ref() == Some(issuer)
            }
        };
        if linked {
            return Ok(true);
        }
    }
    Ok(exposed(t, verifier) && exposed(t, issuer))
}

use std::collections::BTreeMap;

use crate::authority::AuthorityState;
use crate::idp::IdpState;
use crate::model::{EntityId, LinkedKind, LoALevel, ModelError, PrincipalRecord, Timestamp};
use crate::proxy::{CompositeIdentity, IdRegistry};
use crate::topology::{EntityKind, Topology};
use crate::translation::AccountTable;

/// All mutable simulation state. Owned by one event loop at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub clock: Timestamp,
    pub principals: BTreeMap<String, PrincipalRecord>,
    pub idps: IdpState,
    pub authorities: AuthorityState,
    /// Identifier registries, keyed by the aggregating entity.
    pub registries: BTreeMap<EntityId, IdRegistry>,
    pub accounts: AccountTable,
    /// Per-facility vetting results, keyed by `(facility, user handle)`.
    pub vetting: BTreeMap<(EntityId, String), LoALevel>,
    /// The identity each SP last saw for a user.
    pub views: BTreeMap<(EntityId, String), CompositeIdentity>,
}

impl SimState {
    /// Fresh state at the topology epoch. Users of IdPs, OPs and CAs become
    /// home identities; guest and social users become linked identities.
    pub fn new(t: &Topology) -> Result<Self, ModelError> {
        let mut principals: BTreeMap<String, PrincipalRecord> = BTreeMap::new();
        for e in t.entities.values().filter(|e| e.kind.is_identity_provider()) {
            for u in &e.users {
                let record = principals
                    .entry(u.handle().to_string())
                    .or_insert_with(|| PrincipalRecord::new(u.handle()));
                match e.kind {
                    EntityKind::GuestIdP => record.link_identity(e.id.clone(), &u.subject, LinkedKind::Guest)?,
                    EntityKind::SocialIdP if e.egov => record.link_identity(e.id.clone(), &u.subject, LinkedKind::Egov)?,
                    EntityKind::SocialIdP => record.link_identity(e.id.clone(), &u.subject, LinkedKind::Social)?,
                    _ => record.add_home_identity(e.id.clone(), &u.subject)?,
                }
            }
        }
        Ok(SimState {
            clock: t.epoch,
            principals,
            idps: IdpState::from_topology(t),
            authorities: AuthorityState::from_topology(t),
            registries: BTreeMap::new(),
            accounts: AccountTable::new(),
            vetting: BTreeMap::new(),
            views: BTreeMap::new(),
        })
    }
}

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{EntityId, ScopedId};
use crate::proxy::CompositeIdentity;
use crate::topology::{Topology, TopologyError};

/// `u` followed by the first 12 hex characters of the identifier.
pub fn account_name(id: &ScopedId) -> String {
    format!("u{}", &id.local_part()[..12])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AccountState {
    Active,
    Deprovisioned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalAccount {
    pub sp: EntityId,
    pub account_name: String,
    pub mapped_from: ScopedId,
    pub privileges: BTreeSet<String>,
    pub state: AccountState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProvisionOutcome {
    Created,
    Reactivated,
    Updated,
}

impl ProvisionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ProvisionOutcome::Created => "created",
            ProvisionOutcome::Reactivated => "reactivated",
            ProvisionOutcome::Updated => "updated",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccountError {
    #[error("{0} does not use local accounts")]
    NoLocalAccounts(EntityId),
    #[error("name reuse refused: `{0}` belongs to another identity")]
    NameReuseRefused(String),
    #[error("no active account for {0}")]
    NoActiveAccount(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Local accounts of every SP, keyed by `(sp, account name)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountTable {
    accounts: BTreeMap<(EntityId, String), LocalAccount>,
}

impl AccountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, sp: &EntityId, id: &ScopedId) -> Option<&LocalAccount> {
        self.accounts
            .get(&(sp.clone(), account_name(id)))
            .filter(|a| &a.mapped_from == id)
    }

    pub fn active(&self, sp: &EntityId, id: &ScopedId) -> Option<&LocalAccount> {
        self.get(sp, id).filter(|a| a.state == AccountState::Active)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LocalAccount> {
        self.accounts.values()
    }
}

fn privileges(t: &Topology, sp: &EntityId, cid: &CompositeIdentity) -> BTreeSet<String> {
    let map = t
        .entities
        .get(sp)
        .and_then(|e| e.service.as_ref())
        .map(|s| s.privileges.clone())
        .unwrap_or_default();
    cid.statements
        .iter()
        .filter(|s| s.name() == "group" || s.name() == "role")
        .filter_map(|s| map.get(s.value()).cloned())
        .collect()
}

/// Creates, refreshes or reactivates the SP account of `cid`.
pub fn provision_local(
    t: &Topology,
    table: &mut AccountTable,
    sp: &EntityId,
    cid: &CompositeIdentity,
) -> Result<(LocalAccount, ProvisionOutcome), AccountError> {
    let uses_accounts = t.entity(sp)?.service.as_ref().is_some_and(|s| s.local_accounts.is_some());
    if !uses_accounts {
        return Err(AccountError::NoLocalAccounts(sp.clone()));
    }
    let id = &cid.persistent_unique_id;
    let name = account_name(id);
    let key = (sp.clone(), name.clone());
    let privileges = privileges(t, sp, cid);
    let outcome = match table.accounts.get_mut(&key) {
        Some(existing) if &existing.mapped_from != id => return Err(AccountError::NameReuseRefused(name)),
        Some(existing) => {
            let outcome = match existing.state {
                AccountState::Active => ProvisionOutcome::Updated,
                AccountState::Deprovisioned => ProvisionOutcome::Reactivated,
            };
            existing.state = AccountState::Active;
            existing.privileges = privileges;
            outcome
        }
        None => {
            table.accounts.insert(
                key.clone(),
                LocalAccount {
                    sp: sp.clone(),
                    account_name: name,
                    mapped_from: id.clone(),
                    privileges,
                    state: AccountState::Active,
                },
            );
            ProvisionOutcome::Created
        }
    };
    Ok((table.accounts[&key].clone(), outcome))
}

pub fn deprovision_local(table: &mut AccountTable, sp: &EntityId, id: &ScopedId) -> Result<(), AccountError> {
    match table.accounts.get_mut(&(sp.clone(), account_name(id))) {
        Some(a) if &a.mapped_from == id && a.state == AccountState::Active => {
            a.state = AccountState::Deprovisioned;
            Ok(())
        }
        _ => Err(AccountError::NoActiveAccount(id.render())),
    }
}

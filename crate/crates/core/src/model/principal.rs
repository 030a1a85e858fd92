use serde::{Deserialize, Serialize};

use super::{EntityId, ModelError, ScopedId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkedKind {
    Guest,
    Social,
    Egov,
}

impl LinkedKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkedKind::Guest => "guest",
            LinkedKind::Social => "social",
            LinkedKind::Egov => "egov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeIdentity {
    pub idp: EntityId,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedIdentity {
    pub provider: EntityId,
    pub subject_id: String,
    pub kind: LinkedKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalAccountRef {
    pub sp: EntityId,
    pub account_name: String,
}

/// A user as seen by the whole simulated infrastructure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipalRecord {
    pub handle: String,
    home_identities: Vec<HomeIdentity>,
    linked_identities: Vec<LinkedIdentity>,
    persistent_unique_id: Option<ScopedId>,
    local_accounts: Vec<LocalAccountRef>,
}

impl PrincipalRecord {
    pub fn new(handle: impl Into<String>) -> Self {
        PrincipalRecord {
            handle: handle.into(),
            home_identities: Vec::new(),
            linked_identities: Vec::new(),
            persistent_unique_id: None,
            local_accounts: Vec::new(),
        }
    }

    pub fn home_identities(&self) -> &[HomeIdentity] {
        &self.home_identities
    }

    pub fn linked_identities(&self) -> &[LinkedIdentity] {
        &self.linked_identities
    }

    pub fn persistent_unique_id(&self) -> Option<&ScopedId> {
        self.persistent_unique_id.as_ref()
    }

    pub fn local_accounts(&self) -> &[LocalAccountRef] {
        &self.local_accounts
    }

    fn knows(&self, provider: &EntityId, subject_id: &str) -> bool {
        self.home_identities
            .iter()
            .any(|h| &h.idp == provider && h.subject_id == subject_id)
            || self
                .linked_identities
                .iter()
                .any(|l| &l.provider == provider && l.subject_id == subject_id)
    }

    pub fn add_home_identity(
        &mut self,
        idp: EntityId,
        subject_id: impl Into<String>,
    ) -> Result<(), ModelError> {
        let subject_id = subject_id.into();
        if self.knows(&idp, &subject_id) {
            return Err(ModelError::DuplicateIdentity(idp, subject_id));
        }
        self.home_identities.push(HomeIdentity { idp, subject_id });
        Ok(())
    }

    /// Links a guest, social or eGov identity. The persistent identifier, if
    /// any, is left untouched.
    pub fn link_identity(
        &mut self,
        provider: EntityId,
        subject_id: impl Into<String>,
        kind: LinkedKind,
    ) -> Result<(), ModelError> {
        let subject_id = subject_id.into();
        if self.knows(&provider, &subject_id) {
            return Err(ModelError::DuplicateIdentity(provider, subject_id));
        }
        self.linked_identities.push(LinkedIdentity {
            provider,
            subject_id,
            kind,
        });
        Ok(())
    }

    /// Subject id this user holds at `provider`, home or linked.
    pub fn subject_at(&self, provider: &EntityId) -> Option<&str> {
        self.home_identities
            .iter()
            .find(|h| &h.idp == provider)
            .map(|h| h.subject_id.as_str())
            .or_else(|| {
                self.linked_identities
                    .iter()
                    .find(|l| &l.provider == provider)
                    .map(|l| l.subject_id.as_str())
            })
    }

    /// Records the persistent identifier on first sight; later identifiers
    /// are ignored so the record keeps at most one.
    pub fn record_persistent_id(&mut self, id: &ScopedId) {
        if self.persistent_unique_id.is_none() {
            self.persistent_unique_id = Some(id.clone());
        }
    }

    pub fn add_local_account(
        &mut self,
        sp: EntityId,
        account_name: impl Into<String>,
    ) -> Result<(), ModelError> {
        let account_name = account_name.into();
        if let Some(existing) = self.local_accounts.iter().find(|a| a.sp == sp) {
            if existing.account_name == account_name {
                return Ok(());
            }
            return Err(ModelError::DuplicateLocalAccount(sp, account_name));
        }
        self.local_accounts.push(LocalAccountRef { sp, account_name });
        Ok(())
    }
}

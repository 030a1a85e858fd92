use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use super::audit::{audit_release, PolicyViolation};
use super::authz::Decision;
use super::engine::{aggregator_scope, run_flow, FlowSpec};
use super::state::SimState;
use super::trace::{diff_trace, Action, FlowEvent, FlowTrace, SkeletonEntry, TraceDiff};
use crate::authority::{key_for, manage_membership, MembershipChange, SubjectKey};
use crate::idp::{link_guest, register_guest};
use crate::model::{EntityId, LoALevel, ModelError, PrincipalRecord};
use crate::proxy::derive_unique_id;
use crate::topology::{load_topology, parse_header, validate_invariants, Keying, Topology, TopologyError};
use crate::translation::{deprovision_local, provision_local};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("scenario sections: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipKind {
    AddGroup,
    RemoveGroup,
    AddRole,
    RemoveRole,
    SetCustom,
}

/// State changes applied between flows.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum SetupAction {
    /// Sign-up at a guest or social provider. With `user` set, the new
    /// identity is linked to that principal.
    RegisterGuest {
        provider: EntityId,
        subject: String,
        user: Option<String>,
        #[serde(default)]
        profile: BTreeMap<String, String>,
    },
    /// Binds the user's `secondary` identity to the identifier already
    /// minted for their `primary` one.
    Link {
        aggregator: EntityId,
        user: String,
        primary: EntityId,
        secondary: EntityId,
    },
    Membership {
        aa: EntityId,
        admin: String,
        change: MembershipKind,
        user: String,
        provider: Option<EntityId>,
        group: Option<String>,
        role: Option<String>,
        name: Option<String>,
        value: Option<String>,
    },
    SetAvailable {
        aa: EntityId,
        available: bool,
    },
    /// In-person vetting at a facility.
    Vet {
        facility: EntityId,
        user: String,
        loa: LoALevel,
    },
    Provision {
        sp: EntityId,
        user: String,
    },
    Deprovision {
        sp: EntityId,
        user: String,
    },
}

impl SetupAction {
    pub fn name(&self) -> &'static str {
        match self {
            SetupAction::RegisterGuest { .. } => "register-guest",
            SetupAction::Link { .. } => "link",
            SetupAction::Membership { .. } => "membership",
            SetupAction::SetAvailable { .. } => "set-available",
            SetupAction::Vet { .. } => "vet",
            SetupAction::Provision { .. } => "provision",
            SetupAction::Deprovision { .. } => "deprovision",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SetupStep {
    /// Applied just before this flow index; past the last flow means after
    /// every flow.
    #[serde(default)]
    pub at_flow: usize,
    #[serde(flatten)]
    pub action: SetupAction,
}

/// What one flow must produce.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub flow: usize,
    /// `granted` or `denied`.
    pub decision: String,
    pub reason: Option<String>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub skeleton: Vec<String>,
    /// Exact number of events per action.
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    /// The SP must see the same identifier as in that flow.
    pub same_subject_as: Option<usize>,
    /// Patterns of the form `action key=value ...`; each must match at
    /// least one event. The key `actor` matches the event actor.
    #[serde(default)]
    pub contains: Vec<String>,
}

/// One `contains` pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPattern {
    pub action: Action,
    pub fields: Vec<(String, String)>,
}

impl std::str::FromStr for EventPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let action = parts
            .next()
            .ok_or_else(|| "empty event pattern".to_string())?
            .parse::<Action>()
            .map_err(|e| e.to_string())?;
        let fields = parts
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format!("`{p}` is not key=value"))
            })
            .collect::<Result<_, _>>()?;
        Ok(EventPattern { action, fields })
    }
}

impl EventPattern {
    pub fn matches(&self, e: &FlowEvent) -> bool {
        e.action == self.action
            && self.fields.iter().all(|(k, v)| match k.as_str() {
                "actor" => &e.actor == v,
                _ => e.summary.get(k) == Some(v),
            })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sections {
    #[serde(default)]
    setup: Vec<SetupStep>,
    #[serde(default)]
    flows: Vec<FlowSpec>,
    #[serde(default)]
    expected: Vec<Expectation>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub setup: Vec<SetupStep>,
    pub flows: Vec<FlowSpec>,
    pub expected: Vec<Expectation>,
}

impl Scenario {
    /// Parses a scenario document. A plain topology document loads as a
    /// scenario without flows.
    pub fn load(text: &str) -> Result<Self, ScenarioError> {
        let topology = load_topology(text)?;
        let (_, body) = parse_header(text)?;
        let mut table: toml::Table = toml::from_str(body).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut sections = toml::Table::new();
        for key in ["setup", "flows", "expected"] {
            if let Some(v) = table.remove(key) {
                sections.insert(key.to_string(), v);
            }
        }
        let sections: Sections = sections
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        let s = Scenario {
            name: topology.name.clone(),
            topology,
            setup: sections.setup,
            flows: sections.flows,
            expected: sections.expected,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let n = self.flows.len();
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        for (i, f) in self.flows.iter().enumerate() {
            for id in [&f.target_sp, &f.provider] {
                if !self.topology.entities.contains_key(id) {
                    return bad(format!("flow {i}: unknown entity {id}"));
                }
            }
        }
        for (i, step) in self.setup.iter().enumerate() {
            if step.at_flow > n {
                return bad(format!("setup #{i}: at_flow {} beyond {n} flows", step.at_flow));
            }
        }
        for e in &self.expected {
            if e.flow >= n {
                return bad(format!("expectation for flow {} but only {n} flows", e.flow));
            }
            if e.decision != "granted" && e.decision != "denied" {
                return bad(format!("flow {}: decision must be granted or denied", e.flow));
            }
            for entry in &e.skeleton {
                entry
                    .parse::<SkeletonEntry>()
                    .map_err(|err| ScenarioError::Invalid(format!("flow {}: {err}", e.flow)))?;
            }
            for action in e.counts.keys() {
                action
                    .parse::<Action>()
                    .map_err(|err| ScenarioError::Invalid(format!("flow {}: {err}", e.flow)))?;
            }
            for p in &e.contains {
                p.parse::<EventPattern>()
                    .map_err(|err| ScenarioError::Invalid(format!("flow {}: {err}", e.flow)))?;
            }
            if e.same_subject_as.is_some_and(|j| j >= n) {
                return bad(format!("flow {}: same_subject_as out of range", e.flow));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowReport {
    pub index: usize,
    pub spec: FlowSpec,
    pub decision: Decision,
    pub subject: Option<String>,
    pub trace: FlowTrace,
    pub diffs: Vec<TraceDiff>,
    /// Unmet decision, reason, count or subject expectations.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub flows: Vec<FlowReport>,
    pub setup_errors: Vec<String>,
    pub findings: Vec<String>,
    pub policy_violations: Vec<PolicyViolation>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.setup_errors.is_empty()
            && self.findings.is_empty()
            && self.policy_violations.is_empty()
            && self.flows.iter().all(|f| f.diffs.is_empty() && f.failures.is_empty())
    }

    pub fn events(&self) -> impl Iterator<Item = &FlowEvent> {
        self.flows.iter().flat_map(|f| f.trace.events.iter())
    }

    /// All flow traces, in flow order.
    pub fn trace_jsonl(&self) -> String {
        self.flows.iter().map(|f| f.trace.to_jsonl()).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.name);
        for f in &self.flows {
            let ok = f.diffs.is_empty() && f.failures.is_empty();
            let _ = writeln!(
                out,
                "  flow {}: {} => {} [{}]",
                f.index,
                f.spec,
                f.decision,
                if ok { "ok" } else { "MISMATCH" }
            );
            for d in &f.diffs {
                let _ = writeln!(out, "    {d}");
            }
            for m in &f.failures {
                let _ = writeln!(out, "    {m}");
            }
        }
        for e in &self.setup_errors {
            let _ = writeln!(out, "  setup error: {e}");
        }
        for e in &self.findings {
            let _ = writeln!(out, "  finding: {e}");
        }
        for v in &self.policy_violations {
            let _ = writeln!(out, "  policy violation: {v}");
        }
        let _ = writeln!(out, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn principal<'a>(st: &'a mut SimState, user: &str) -> Result<&'a mut PrincipalRecord, String> {
    st.principals.get_mut(user).ok_or_else(|| format!("unknown user {user}"))
}

fn subject_key(t: &Topology, st: &SimState, aa: &EntityId, user: &str, provider: Option<&EntityId>) -> Result<SubjectKey, String> {
    let record = st.principals.get(user).ok_or_else(|| format!("unknown user {user}"))?;
    let keying = t
        .entities
        .get(aa)
        .and_then(|e| e.authority.as_ref())
        .map(|c| c.keying)
        .unwrap_or_default();
    let unique = record.persistent_unique_id();
    if keying == Keying::UniqueId {
        let id = unique.ok_or_else(|| format!("{user} has no persistent identifier yet"))?;
        return Ok(SubjectKey::Unique(id.clone()));
    }
    let provider = match provider {
        Some(p) => p.clone(),
        None => record
            .home_identities()
            .first()
            .map(|h| h.idp.clone())
            .or_else(|| record.linked_identities().first().map(|l| l.provider.clone()))
            .ok_or_else(|| format!("{user} has no identity"))?,
    };
    let subject = record
        .subject_at(&provider)
        .ok_or_else(|| format!("{user} has no identity at {provider}"))?;
    Ok(key_for(t, aa, &SubjectKey::home(&provider, subject), unique))
}

fn membership_change(
    kind: MembershipKind,
    group: Option<String>,
    role: Option<String>,
    name: Option<String>,
    value: Option<String>,
) -> Result<MembershipChange, String> {
    let need = |v: Option<String>, field: &str| v.ok_or_else(|| format!("missing `{field}`"));
    Ok(match kind {
        MembershipKind::AddGroup => MembershipChange::AddGroup(need(group, "group")?),
        MembershipKind::RemoveGroup => MembershipChange::RemoveGroup(need(group, "group")?),
        MembershipKind::AddRole => MembershipChange::AddRole(need(group, "group")?, need(role, "role")?),
        MembershipKind::RemoveRole => MembershipChange::RemoveRole(need(group, "group")?, need(role, "role")?),
        MembershipKind::SetCustom => MembershipChange::SetCustom(need(name, "name")?, need(value, "value")?),
    })
}

fn apply(t: &Topology, st: &mut SimState, action: &SetupAction) -> Result<(), String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match action {
        SetupAction::RegisterGuest {
            provider,
            subject,
            user,
            profile,
        } => match user {
            Some(handle) => {
                let mut record = st
                    .principals
                    .remove(handle)
                    .unwrap_or_else(|| PrincipalRecord::new(handle.clone()));
                let r = link_guest(t, &mut st.idps, &mut record, provider, subject, profile).map_err(|e| err(&e));
                st.principals.insert(handle.clone(), record);
                r?;
            }
            None => {
                if st.principals.contains_key(subject) {
                    return Err(format!("user {subject} already exists"));
                }
                let record = register_guest(t, &mut st.idps, provider, subject, profile).map_err(|e| err(&e))?;
                st.principals.insert(subject.clone(), record);
            }
        },
        SetupAction::Link {
            aggregator,
            user,
            primary,
            secondary,
        } => {
            let scope = aggregator_scope(t, aggregator);
            let record = principal(st, user)?.clone();
            let first = record
                .subject_at(primary)
                .ok_or_else(|| format!("{user} has no identity at {primary}"))?;
            let second = record
                .subject_at(secondary)
                .ok_or_else(|| format!("{user} has no identity at {secondary}"))?;
            let registry = st.registries.entry(aggregator.clone()).or_default();
            let id = derive_unique_id(registry, primary, first, &scope).map_err(|e| err(&e))?;
            registry.link(secondary, second, &id).map_err(|e| err(&e))?;
            principal(st, user)?.record_persistent_id(&id);
        }
        SetupAction::Membership {
            aa,
            admin,
            change,
            user,
            provider,
            group,
            role,
            name,
            value,
        } => {
            let key = subject_key(t, st, aa, user, provider.as_ref())?;
            let change = membership_change(*change, group.clone(), role.clone(), name.clone(), value.clone())?;
            manage_membership(t, &mut st.authorities, aa, admin, change, &key).map_err(|e| err(&e))?;
        }
        SetupAction::SetAvailable { aa, available } => {
            t.entity(aa).map_err(|e| err(&e))?;
            st.authorities.set_available(aa, *available);
        }
        SetupAction::Vet { facility, user, loa } => {
            t.entity(facility).map_err(|e| err(&e))?;
            principal(st, user)?;
            let entry = st.vetting.entry((facility.clone(), user.clone())).or_insert(*loa);
            *entry = (*entry).max(*loa);
        }
        SetupAction::Provision { sp, user } => {
            let view = st
                .views
                .get(&(sp.clone(), user.clone()))
                .cloned()
                .ok_or_else(|| format!("{sp} has not seen {user}"))?;
            let (account, _) = provision_local(t, &mut st.accounts, sp, &view).map_err(|e| err(&e))?;
            principal(st, user)?
                .add_local_account(sp.clone(), account.account_name)
                .map_err(|e| err(&e))?;
        }
        SetupAction::Deprovision { sp, user } => {
            let view = st
                .views
                .get(&(sp.clone(), user.clone()))
                .ok_or_else(|| format!("{sp} has not seen {user}"))?;
            deprovision_local(&mut st.accounts, sp, &view.persistent_unique_id).map_err(|e| err(&e))?;
        }
    }
    Ok(())
}

fn check_expectation(e: &Expectation, report: &FlowReport, subjects: &[Option<String>]) -> (Vec<TraceDiff>, Vec<String>) {
    let mut failures = Vec::new();
    let got = if report.decision.is_granted() { "granted" } else { "denied" };
    if got != e.decision {
        failures.push(format!("decision: expected {}, got {}", e.decision, report.decision));
    }
    if let Some(reason) = &e.reason {
        if report.decision.reason() != Some(reason.as_str()) {
            failures.push(format!("reason: expected `{reason}`, got {}", report.decision));
        }
    }
    for (action, want) in &e.counts {
        let action: Action = action.parse().expect("checked at load");
        let n = report.trace.count(action);
        if n != *want {
            failures.push(format!("count of {action}: expected {want}, got {n}"));
        }
    }
    if let Some(j) = e.same_subject_as {
        let other = subjects.get(j).cloned().flatten();
        if report.subject.is_none() || report.subject != other {
            failures.push(format!(
                "subject: expected the identifier of flow {j} ({}), got {}",
                other.as_deref().unwrap_or("-"),
                report.subject.as_deref().unwrap_or("-")
            ));
        }
    }
    for p in &e.contains {
        let pattern: EventPattern = p.parse().expect("checked at load");
        if !report.trace.events.iter().any(|ev| pattern.matches(ev)) {
            failures.push(format!("no event matches `{p}`"));
        }
    }
    let skeleton: Vec<SkeletonEntry> = e
        .skeleton
        .iter()
        .map(|s| s.parse().expect("checked at load"))
        .collect();
    let diffs = if skeleton.is_empty() && !e.strict {
        Vec::new()
    } else {
        diff_trace(&report.trace, &skeleton, e.strict)
    };
    (diffs, failures)
}

/// Runs setup and flows on fresh state and checks every expectation.
/// `seed` overrides the topology's key seed.
pub fn run_scenario(s: &Scenario, seed: Option<u64>) -> Result<ScenarioReport, ScenarioError> {
    let t = match seed {
        Some(seed) => s.topology.clone().with_seed(seed)?,
        None => s.topology.clone(),
    };
    let mut st = SimState::new(&t)?;
    let mut setup_errors = Vec::new();
    let mut flows = Vec::new();
    for i in 0..=s.flows.len() {
        for (n, step) in s.setup.iter().enumerate().filter(|(_, step)| step.at_flow == i) {
            if let Err(e) = apply(&t, &mut st, &step.action) {
                setup_errors.push(format!("setup #{n} ({}): {e}", step.action.name()));
            }
        }
        let Some(spec) = s.flows.get(i) else { break };
        let r = run_flow(&t, &mut st, spec, i);
        flows.push(FlowReport {
            index: i,
            spec: spec.clone(),
            decision: r.decision,
            subject: r.subject,
            trace: r.trace,
            diffs: Vec::new(),
            failures: Vec::new(),
        });
    }
    let subjects: Vec<Option<String>> = flows.iter().map(|f| f.subject.clone()).collect();
    for e in &s.expected {
        let (diffs, failures) = check_expectation(e, &flows[e.flow], &subjects);
        flows[e.flow].diffs.extend(diffs);
        flows[e.flow].failures.extend(failures);
    }
    let events: Vec<FlowEvent> = flows.iter().flat_map(|f| f.trace.events.iter().cloned()).collect();
    Ok(ScenarioReport {
        name: s.name.clone(),
        findings: validate_invariants(&t).iter().map(ToString::to_string).collect(),
        policy_violations: audit_release(&t, &events),
        setup_errors,
        flows,
    })
}

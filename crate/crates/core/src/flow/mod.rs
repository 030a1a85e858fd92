//! Flow engine: runs login flows end to end, records traces, and executes
//! scenarios.

mod audit;
mod authz;
mod engine;
mod scenario;
mod state;
mod trace;

pub use audit::{audit_release, PolicyViolation};
pub use authz::{authorize, authorize_statements, AuthzPolicy, AuthzRule, Decision};
pub use engine::{
    accept_credential, run_flow, FlowResult, FlowSpec, Mode, Received, PROXY_CERT_LIFETIME, USER_CERT_LIFETIME,
};
pub use scenario::{
    run_scenario, EventPattern, Expectation, FlowReport, MembershipKind, Scenario, ScenarioError, ScenarioReport,
    SetupAction, SetupStep,
};
pub(crate) use engine::{aggregator_scope, loa_of};
pub use state::SimState;
pub use trace::{diff_trace, Action, FlowEvent, FlowTrace, SkeletonEntry, TraceDiff, TraceError};

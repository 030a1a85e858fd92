use fedsim_core::flow::{
    authorize_statements, diff_trace, run_flow, Action, AuthzPolicy, AuthzRule, Decision, FlowResult, FlowSpec,
    FlowTrace, Mode, SimState, TraceDiff,
};
use fedsim_core::model::{AttributeStatement, Delivery, EntityId, LoALevel};
use fedsim_core::suites::{conformance_cases, reference_topology, step_violations};
use fedsim_core::{Technology, Topology};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

const PATTERNS: [&str; 5] = ["group=vo", "group=*", "role=vo:admin", "mail=*", "affiliation=member"];
const HELD: [(&str, &str); 4] = [("group", "vo"), ("role", "vo:admin"), ("mail", "r@x"), ("affiliation", "staff")];
const LEVELS: [LoALevel; 3] = [LoALevel::Low, LoALevel::Substantial, LoALevel::High];

fn rule() -> impl Strategy<Value = AuthzRule> {
    (prop::sample::subsequence(PATTERNS.to_vec(), 0..=3), 0usize..3)
        .prop_map(|(p, l)| AuthzRule::new(&p, LEVELS[l]))
}

/// Reason a rule fails, or `None` when it admits.
fn oracle_failure(rule: &AuthzRule, held: &[(&str, &str)], loa: LoALevel) -> Option<String> {
    for p in &rule.require {
        let (n, v) = p.split_once('=').unwrap();
        if !held.iter().any(|(hn, hv)| *hn == n && (v == "*" || *hv == v)) {
            return Some(format!("missing {n}={v}"));
        }
    }
    (loa < rule.min_loa).then(|| format!("loa below {}", rule.min_loa))
}

proptest! {
    #[test]
    fn authorization_matches_rule_by_rule_evaluation(
        rules in prop::collection::vec(rule(), 0..=3),
        mask in 0u8..16,
        l in 0usize..3,
    ) {
        let held: Vec<(&str, &str)> = HELD.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, h)| *h).collect();
        let statements: Vec<AttributeStatement> = held
            .iter()
            .map(|(n, v)| AttributeStatement::new(*n, *v, id("aa:x"), LoALevel::High, Delivery::Pull).unwrap())
            .collect();
        let policy = AuthzPolicy { sp: id("sp:x"), rules: rules.clone() };
        let got = authorize_statements(&policy, &statements, LEVELS[l]);
        let failures: Vec<Option<String>> = rules.iter().map(|r| oracle_failure(r, &held, LEVELS[l])).collect();
        let want = if failures.iter().any(Option::is_none) {
            Decision::Granted
        } else {
            Decision::Denied(failures.last().cloned().flatten().unwrap_or_else(|| "no matching rule".into()))
        };
        prop_assert_eq!(got, want);
    }
}

fn run_fresh(t: &Topology, spec: &FlowSpec) -> FlowResult {
    let mut st = SimState::new(t).unwrap();
    run_flow(t, &mut st, spec, 0)
}

#[test]
fn conformance_flows_are_ordered_and_granted() {
    let t = reference_topology();
    for spec in conformance_cases() {
        let r = run_fresh(&t, &spec);
        assert!(r.decision.is_granted(), "{spec}: {}", r.decision);
        assert_eq!(r.trace.check_order(), Ok(()), "{spec}");
        assert_eq!(step_violations(&t, &spec, true, &r.trace.events), Vec::<String>::new(), "{spec}");
        let authorizations: Vec<_> = r.trace.events.iter().filter(|e| e.action == Action::Authorize).collect();
        assert_eq!(authorizations.last().unwrap().summary["decision"], "granted", "{spec}");
    }
}

#[test]
fn flows_are_deterministic() {
    let t = reference_topology();
    for spec in conformance_cases() {
        assert_eq!(run_fresh(&t, &spec).trace.to_jsonl(), run_fresh(&t, &spec).trace.to_jsonl(), "{spec}");
    }
}

#[test]
fn each_deleted_event_yields_one_missing_entry() {
    let t = reference_topology();
    let cases = conformance_cases();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let spec = &cases[rng.random_range(0..cases.len())];
        let trace = run_fresh(&t, spec).trace;
        let skeleton = trace.skeleton();
        let drop = rng.random_range(0..trace.events.len());
        let mut events = trace.events.clone();
        events.remove(drop);
        let mutated = FlowTrace { events };
        let diffs = diff_trace(&mutated, &skeleton, true);
        assert_eq!(diffs.len(), 1, "{spec} drop {drop}: {diffs:?}");
        let TraceDiff::Missing { entry, .. } = &diffs[0] else { panic!("{diffs:?}") };
        assert_eq!(entry, &skeleton[drop]);
        assert!(diff_trace(&trace, &skeleton, true).is_empty());
    }
}

#[test]
fn inserted_events_are_unexpected_only_when_strict() {
    let t = reference_topology();
    let spec = &conformance_cases()[0];
    let trace = run_fresh(&t, spec).trace;
    let skeleton = trace.skeleton();
    for at in 0..=trace.events.len() {
        let mut events = trace.events.clone();
        let mut extra = trace.events[at.min(events.len() - 1)].clone();
        extra.action = Action::Provision;
        extra.actor_kind = "ca".into();
        events.insert(at, extra);
        let mutated = FlowTrace { events };
        assert!(diff_trace(&mutated, &skeleton, false).is_empty());
        let strict = diff_trace(&mutated, &skeleton, true);
        assert_eq!(strict.len(), 1);
        assert!(matches!(strict[0], TraceDiff::Unexpected { .. }));
    }
}

#[test]
fn sp_side_aggregation_runs_at_the_registration_service() {
    let t = reference_topology();
    for mode in [Mode::Web, Mode::NonWeb] {
        let spec = FlowSpec {
            user: "rita".into(),
            target_sp: id("sp:locus-saml"),
            tech: Technology::Saml,
            provider: id("idp:home"),
            mode,
            attr_mode: Delivery::Push,
        };
        let r = run_fresh(&t, &spec);
        assert!(r.decision.is_granted(), "{}", r.decision);
        let agg: Vec<_> = r.trace.events.iter().filter(|e| e.action == Action::Aggregate).collect();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].actor, "sp:registry");
        assert_eq!(agg[0].step, 4);
        let hop = r.trace.events.iter().any(|e| {
            e.action == Action::Redirect && e.actor == "sp:locus-saml" && e.summary.get("to").map(String::as_str) == Some("sp:registry")
        });
        assert_eq!(hop, mode == Mode::Web);
    }
}

#[test]
fn authorization_matches_oracle_over_all_subsets() {
    let rules = [
        AuthzRule::new(&["group=vo", "role=vo:admin"], LoALevel::High),
        AuthzRule::new(&["mail=*"], LoALevel::Substantial),
        AuthzRule::new(&["affiliation=member"], LoALevel::Low),
    ];
    for mask in 0u8..16 {
        let held: Vec<(&str, &str)> = HELD.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, h)| *h).collect();
        let statements: Vec<AttributeStatement> = held
            .iter()
            .map(|(n, v)| AttributeStatement::new(*n, *v, id("aa:x"), LoALevel::High, Delivery::Pull).unwrap())
            .collect();
        for rule_mask in 0u8..8 {
            let chosen: Vec<AuthzRule> = (0..3).filter(|r| rule_mask >> r & 1 == 1).map(|r| rules[r].clone()).collect();
            for loa in LEVELS {
                let policy = AuthzPolicy { sp: id("sp:x"), rules: chosen.clone() };
                let failures: Vec<Option<String>> = chosen.iter().map(|r| oracle_failure(r, &held, loa)).collect();
                let want = if failures.iter().any(Option::is_none) {
                    Decision::Granted
                } else {
                    Decision::Denied(failures.last().cloned().flatten().unwrap_or_else(|| "no matching rule".into()))
                };
                assert_eq!(authorize_statements(&policy, &statements, loa), want, "mask {mask} rules {rule_mask} {loa}");
            }
        }
    }
}

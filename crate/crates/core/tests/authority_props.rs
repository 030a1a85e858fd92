use std::collections::{BTreeMap, BTreeSet};

use fedsim_core::authority::{
    manage_membership, query_attributes, voms_extend, AuthorityState, MembershipChange, SubjectKey,
};
use fedsim_core::idp::{issue_certificate, IdpState, CERT_LIFETIME_MIN};
use fedsim_core::model::{Delivery, EntityId, LoALevel, PrincipalRecord};
use fedsim_core::topology::{load_topology, Topology};
use fedsim_core::translation::{create_proxy_cert, validate_chain};
use proptest::prelude::*;

fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

fn topology(loa: Option<&str>) -> Topology {
    let loa_line = loa.map(|l| format!("assertion_loa = \"{l}\"\n")).unwrap_or_default();
    load_topology(&format!(
        r#"fedsim-topology v1
[[entities]]
id = "ca:grid"
kind = "CA"
[[entities.users]]
subject = "CN=Alice"
handle = "alice"

[[entities]]
id = "aa:vo"
kind = "AA"
anchors = ["sp:a"]
[entities.authority]
admins = ["admin"]
{loa_line}[[entities.authority.records]]
issuer = "ca:grid"
subject = "CN=Alice"
groups = ["seed"]

[[entities]]
id = "voms:vo"
kind = "VOMS"
anchors = ["ca:grid"]
[[entities.authority.records]]
issuer = "ca:grid"
subject = "CN=Alice"
groups = ["vo"]
roles = ["vo:admin"]

[[entities]]
id = "sp:a"
kind = "SP"

[[policies]]
issuer = "aa:vo"
audience = "sp:a"
release = ["group", "role"]
"#
    ))
    .unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    AddGroup(usize),
    RemoveGroup(usize),
    AddRole(usize, usize),
    RemoveRole(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..3).prop_map(Op::AddGroup),
        (0usize..3).prop_map(Op::RemoveGroup),
        (0usize..3, 0usize..2).prop_map(|(g, r)| Op::AddRole(g, r)),
        (0usize..3, 0usize..2).prop_map(|(g, r)| Op::RemoveRole(g, r)),
    ]
}

const GROUPS: [&str; 3] = ["seed", "cms", "atlas"];
const ROLES: [&str; 2] = ["admin", "prod"];

proptest! {
    #[test]
    fn membership_follows_reference_set_model(ops in prop::collection::vec(op(), 0..30)) {
        let t = topology(None);
        let mut st = AuthorityState::from_topology(&t);
        let aa = id("aa:vo");
        let key = SubjectKey::home(&id("ca:grid"), "CN=Alice");
        let mut groups: BTreeSet<String> = BTreeSet::from(["seed".to_string()]);
        let mut roles: BTreeSet<(String, String)> = BTreeSet::new();
        for o in ops {
            let (change, model_ok) = match o {
                Op::AddGroup(g) => {
                    groups.insert(GROUPS[g].into());
                    (MembershipChange::AddGroup(GROUPS[g].into()), true)
                }
                Op::RemoveGroup(g) => {
                    let ok = groups.remove(GROUPS[g]);
                    if ok {
                        roles.retain(|(rg, _)| rg != GROUPS[g]);
                    }
                    (MembershipChange::RemoveGroup(GROUPS[g].into()), ok)
                }
                Op::AddRole(g, r) => {
                    groups.insert(GROUPS[g].into());
                    roles.insert((GROUPS[g].into(), ROLES[r].into()));
                    (MembershipChange::AddRole(GROUPS[g].into(), ROLES[r].into()), true)
                }
                Op::RemoveRole(g, r) => {
                    let ok = roles.remove(&(GROUPS[g].to_string(), ROLES[r].to_string()));
                    (MembershipChange::RemoveRole(GROUPS[g].into(), ROLES[r].into()), ok)
                }
            };
            let got = manage_membership(&t, &mut st, &aa, "admin", change, &key);
            prop_assert_eq!(got.is_ok(), model_ok);

            let out = query_attributes(&t, &st, &aa, &key, &id("sp:a")).unwrap();
            let got_groups: BTreeSet<String> =
                out.iter().filter(|s| s.name() == "group").map(|s| s.value().to_string()).collect();
            let got_roles: BTreeSet<(String, String)> = out
                .iter()
                .filter(|s| s.name() == "role")
                .map(|s| {
                    let (g, r) = s.value().split_once(':').unwrap();
                    (g.to_string(), r.to_string())
                })
                .collect();
            prop_assert_eq!(&got_groups, &groups);
            prop_assert_eq!(&got_roles, &roles);
            prop_assert!(got_roles.iter().all(|(g, _)| got_groups.contains(g)));
            prop_assert!(out.iter().all(|s| s.delivery() == Delivery::Pull));
        }
    }

    #[test]
    fn unknown_subjects_get_nothing(subject in "[A-Za-z=]{1,10}") {
        prop_assume!(subject != "CN=Alice");
        let t = topology(None);
        let st = AuthorityState::from_topology(&t);
        let key = SubjectKey::home(&id("ca:grid"), &subject);
        prop_assert!(query_attributes(&t, &st, &id("aa:vo"), &key, &id("sp:a")).unwrap().is_empty());
    }
}

#[test]
fn statements_never_exceed_the_configured_level() {
    for (cfg, cap) in [
        (None, LoALevel::Substantial),
        (Some("low"), LoALevel::Low),
        (Some("high"), LoALevel::High),
    ] {
        let t = topology(cfg);
        let st = AuthorityState::from_topology(&t);
        let key = SubjectKey::home(&id("ca:grid"), "CN=Alice");
        let out = query_attributes(&t, &st, &id("aa:vo"), &key, &id("sp:a")).unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|s| s.loa() <= cap));
    }
}

#[test]
fn extension_validity_is_the_minimum_bound() {
    let t = topology(None);
    let idps = IdpState::from_topology(&t);
    let aa = AuthorityState::from_topology(&t);
    let mut alice = PrincipalRecord::new("alice");
    alice.add_home_identity(id("ca:grid"), "CN=Alice").unwrap();
    let ee = issue_certificate(&t, &idps, &id("ca:grid"), &alice, CERT_LIFETIME_MIN, 0).unwrap();
    // (proxy lifetime, extension time) -> extension not_after.
    let table: BTreeMap<(i64, i64), i64> = BTreeMap::from([
        ((3_600, 0), 3_600),
        ((3_600, 1_800), 3_600),
        ((3_600, 3_000), 3_600),
        ((86_400, 0), 43_200),
        ((86_400, 1_800), 45_000),
        ((86_400, 3_000), 46_200),
    ]);
    for (&(life, at), &want) in &table {
        let proxy = create_proxy_cert(&t.anchors, &ee, "voms", life, 0, false).unwrap();
        let roles = BTreeSet::from(["admin".to_string()]);
        let ext = voms_extend(&t, &aa, &id("voms:vo"), &proxy, "vo", &roles, at).unwrap();
        let ac = ext.certs[0].attr_certificate.as_ref().unwrap();
        assert_eq!(ac.not_after, want, "lifetime {life} at {at}");
        assert!(ac.statements.iter().all(|s| s.delivery() == Delivery::Push));
        assert!(validate_chain(&t.anchors, &ext, at).is_ok());
    }
}

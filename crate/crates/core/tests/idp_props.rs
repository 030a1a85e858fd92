use std::collections::{BTreeMap, BTreeSet};

use fedsim_core::authority::userinfo_statements;
use fedsim_core::idp::{
    authenticate_oidc, authenticate_web, issue_certificate, link_guest, redeem_code, register_guest, AuthnRequest,
    IdpState, OidcGrant, OidcMode, CERT_LIFETIME_MAX, CERT_LIFETIME_MIN,
};
use fedsim_core::model::{verify_integrity, Credential, EntityId, LoALevel, PrincipalRecord, ScopedId};
use fedsim_core::topology::{load_topology, Topology};
use proptest::prelude::*;

const STORED: [(&str, &str); 4] = [
    ("mail", "alice@uni.example"),
    ("affiliation", "member"),
    ("display-name", "Alice"),
    ("raw:orcid", "0000-0001"),
];

fn id(s: &str) -> EntityId {
    EntityId::new(s).unwrap()
}

fn topology(release: &BTreeSet<&str>) -> Topology {
    let attrs: Vec<String> = STORED.iter().map(|(k, v)| format!("\"{k}\" = \"{v}\"")).collect();
    let list: Vec<String> = release.iter().map(|n| format!("\"{n}\"")).collect();
    load_topology(&format!(
        r#"fedsim-topology v1
[[entities]]
id = "idp:uni"
kind = "IdP"
[[entities.users]]
subject = "alice"
attributes = {{ {attrs} }}

[[entities]]
id = "op:uni"
kind = "OP"
[[entities.users]]
subject = "alice"
attributes = {{ {attrs} }}

[[entities]]
id = "ca:grid"
kind = "CA"
[[entities.users]]
subject = "CN=Alice"
handle = "alice"

[[entities]]
id = "guest:g"
kind = "GuestIdP"

[[entities]]
id = "sp:a"
kind = "SP"

[[entities]]
id = "sp:b"
kind = "SP"

[[federations]]
id = "f"
model = "full-mesh"
members = ["idp:uni", "op:uni", "sp:a", "sp:b"]

[[policies]]
issuer = "idp:uni"
audience = "sp:a"
release = [{list}]

[[policies]]
issuer = "op:uni"
audience = "sp:a"
release = [{list}]
"#,
        attrs = attrs.join(", "),
        list = list.join(", "),
    ))
    .unwrap()
}

fn alice() -> PrincipalRecord {
    let mut r = PrincipalRecord::new("alice");
    r.add_home_identity(id("idp:uni"), "alice").unwrap();
    r.add_home_identity(id("op:uni"), "alice").unwrap();
    r.add_home_identity(id("ca:grid"), "CN=Alice").unwrap();
    r
}

fn policy() -> impl Strategy<Value = BTreeSet<&'static str>> {
    prop::sample::subsequence(vec!["mail", "affiliation", "display-name", "raw:orcid", "group"], 0..=5)
        .prop_map(|v| v.into_iter().collect())
}

fn expected_release(policy: &BTreeSet<&str>) -> BTreeSet<(String, String)> {
    STORED
        .iter()
        .filter(|(k, _)| policy.contains(k))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn web_release_is_stored_intersect_policy(p in policy()) {
        let t = topology(&p);
        let st = IdpState::from_topology(&t);
        let a = authenticate_web(&t, &st, &id("idp:uni"), &alice(), &AuthnRequest::new(id("sp:a"), id("idp:uni")), 5).unwrap();
        let got: BTreeSet<(String, String)> =
            a.attributes.iter().map(|s| (s.name().to_string(), s.value().to_string())).collect();
        prop_assert_eq!(got, expected_release(&p));
        prop_assert!(verify_integrity(&t.anchors, &Credential::Assertion(a)).is_valid());
    }

    #[test]
    fn token_release_is_stored_intersect_policy(p in policy()) {
        let t = topology(&p);
        let mut st = IdpState::from_topology(&t);
        let grant = authenticate_oidc(&t, &mut st, &id("op:uni"), &alice(), &id("sp:a"), OidcMode::SelfContained, 5).unwrap();
        let OidcGrant::Tokens(ts) = grant else { panic!("self-contained mode returns tokens") };
        let got: BTreeSet<(String, String)> = Credential::TokenSet(ts.clone())
            .statements()
            .iter()
            .map(|s| (s.name().to_string(), s.value().to_string()))
            .collect();
        prop_assert_eq!(got, expected_release(&p));
        prop_assert!(verify_integrity(&t.anchors, &Credential::TokenSet(ts)).is_valid());
    }

    #[test]
    fn audience_without_policy_gets_nothing(p in policy()) {
        let t = topology(&p);
        let st = IdpState::from_topology(&t);
        let a = authenticate_web(&t, &st, &id("idp:uni"), &alice(), &AuthnRequest::new(id("sp:b"), id("idp:uni")), 5).unwrap();
        prop_assert!(a.attributes.is_empty());
    }

    #[test]
    fn userinfo_matches_token_time_claims(p in policy(), via_code in any::<bool>()) {
        let t = topology(&p);
        let mut st = IdpState::from_topology(&t);
        let ts = if via_code {
            let code = fresh_code(&t, &mut st, 5);
            redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("sp:a"), 6).unwrap()
        } else {
            match authenticate_oidc(&t, &mut st, &id("op:uni"), &alice(), &id("sp:a"), OidcMode::SelfContained, 5).unwrap() {
                OidcGrant::Tokens(ts) => ts,
                OidcGrant::Code(_) => panic!("self-contained mode returns tokens"),
            }
        };
        let info: BTreeSet<(String, String)> = userinfo_statements(&t, &st, &id("op:uni"), &ts, 7)
            .unwrap()
            .iter()
            .map(|s| (s.name().to_string(), s.value().to_string()))
            .collect();
        prop_assert_eq!(info, expected_release(&p));
    }
}

fn fresh_code(t: &Topology, st: &mut IdpState, now: i64) -> fedsim_core::idp::AuthCode {
    match authenticate_oidc(t, st, &id("op:uni"), &alice(), &id("sp:a"), OidcMode::Code, now).unwrap() {
        OidcGrant::Code(c) => c,
        OidcGrant::Tokens(_) => panic!("code mode returns a code"),
    }
}

#[test]
fn racing_clients_redeem_a_code_at_most_once() {
    let t = topology(&BTreeSet::from(["mail"]));
    let clients = [id("sp:a"), id("sp:b")];
    for n in 1..=4u32 {
        for order in 0..(1u32 << n) {
            let mut st = IdpState::from_topology(&t);
            let code = fresh_code(&t, &mut st, 0);
            let attempts: Vec<&EntityId> = (0..n).map(|i| &clients[((order >> i) & 1) as usize]).collect();
            let successes: Vec<bool> = attempts
                .iter()
                .map(|c| redeem_code(&t, &mut st, &id("op:uni"), &code.code, c, 1).is_ok())
                .collect();
            let legit_present = attempts.iter().any(|c| **c == clients[0]);
            assert_eq!(successes.iter().filter(|s| **s).count(), usize::from(legit_present), "{attempts:?}");
        }
    }
}

#[test]
fn code_expiry_is_inclusive() {
    let t = topology(&BTreeSet::new());
    for offset in [-1i64, 0, 1] {
        let mut st = IdpState::from_topology(&t);
        let code = fresh_code(&t, &mut st, 100);
        let ok = redeem_code(&t, &mut st, &id("op:uni"), &code.code, &id("sp:a"), code.expires + offset).is_ok();
        assert_eq!(ok, offset <= 0, "offset {offset}");
    }
}

#[test]
fn certificate_lifetime_bounds_sweep() {
    let t = topology(&BTreeSet::new());
    let st = IdpState::from_topology(&t);
    for bound in [CERT_LIFETIME_MIN, CERT_LIFETIME_MAX] {
        for delta in [-1i64, 0, 1] {
            let lifetime = bound + delta;
            let accepted = issue_certificate(&t, &st, &id("ca:grid"), &alice(), lifetime, 0);
            let inside = (CERT_LIFETIME_MIN..=CERT_LIFETIME_MAX).contains(&lifetime);
            assert_eq!(accepted.is_ok(), inside, "lifetime {lifetime}");
            if let Ok(chain) = accepted {
                assert_eq!(chain.certs[0].not_after, lifetime);
                assert!(verify_integrity(&t.anchors, &Credential::CertChain(chain)).is_valid());
            }
        }
    }
}

#[test]
fn guest_identities_start_low_and_linking_keeps_the_identifier() {
    let t = topology(&BTreeSet::new());
    let mut st = IdpState::from_topology(&t);
    let profile = BTreeMap::from([("mail".to_string(), "g@x".to_string())]);
    register_guest(&t, &mut st, &id("guest:g"), "gina", &profile).unwrap();
    assert_eq!(st.user(&id("guest:g"), "gina").unwrap().loa, LoALevel::Low);

    let mut record = alice();
    let uid = ScopedId::new("0123456789abcdef0123456789abcdef", "p.example").unwrap();
    record.record_persistent_id(&uid);
    let before = record.clone();
    link_guest(&t, &mut st, &mut record, &id("guest:g"), "alice-g", &profile).unwrap();
    assert_eq!(record.persistent_unique_id(), before.persistent_unique_id());
    assert_eq!(record.home_identities(), before.home_identities());
    assert_eq!(record.linked_identities().len(), before.linked_identities().len() + 1);
    assert_eq!(st.user(&id("guest:g"), "alice-g").unwrap().loa, LoALevel::Low);
}

//! Property suites: trust, ids, translation, delegation, policy,
//! conformance and determinism. Each suite reports per-property pass/fail
//! with the number of cases checked.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::flow::{
    accept_credential, audit_release, authorize_statements, run_flow, run_scenario, Action, AuthzPolicy, Decision,
    FlowEvent, FlowSpec, Mode, Scenario, ScenarioError, SimState,
};
use crate::idp::IdpState;
use crate::model::{
    cert_bytes, holder_key, mint_with_key, verify_attr_certificate, verify_attr_certificate_with_key,
    AttributeStatement, Cert, CertChain, Credential, Delivery, EntityId, IntegrityTag, LoALevel, ScopedId, SigningKey,
    Technology, Timestamp, TrustAnchors,
};
use crate::par;
use crate::proxy::{
    audit_snapshot, derive_unique_id, issue_downstream, unique_id_local_part, CompositeIdentity, IdRegistry,
    ProxyError,
};
use crate::topology::{load_topology, trusts, EntityKind, Topology, TopologyError};
use crate::translation::{open_credential, routes_of, translate, validate_chain};

/// Suite names accepted by [`run_suite`].
pub const SUITES: [&str; 7] = [
    "trust",
    "ids",
    "translation",
    "delegation",
    "policy",
    "conformance",
    "determinism",
];

/// Topology used by the trust, translation and conformance suites.
pub const REFERENCE_TOPOLOGY: &str = include_str!("reference.toml");

/// Six entities with one full-mesh interfederated federation, one
/// non-interfederated hub-and-spoke federation, an explicit anchor and an
/// internal SP.
pub const TRUST_FIXTURE: &str = r#"fedsim-topology v1
name = "trust-fixture"

[[entities]]
id = "idp:campus"
kind = "IdP"

[[entities]]
id = "idp:other"
kind = "IdP"

[[entities]]
id = "op:social"
kind = "OP"

[[entities]]
id = "proxy:hub"
kind = "Proxy"
protocols = ["saml-like"]
anchors = ["op:social"]
[entities.proxy]
scope = "hub.example"

[[entities]]
id = "sp:internal"
kind = "SP"
protocols = ["saml-like"]
internal_behind = "proxy:hub"

[[entities]]
id = "sp:partner"
kind = "SP"
protocols = ["saml-like"]

[[federations]]
id = "nren"
model = "full-mesh"
members = ["idp:campus", "proxy:hub", "sp:partner"]
interfederated = true

[[federations]]
id = "spoke"
model = "hub-and-spoke"
hub = "proxy:hub"
members = ["proxy:hub", "idp:other"]
"#;

/// Expected `trusts(verifier, issuer)` over [`TRUST_FIXTURE`]: each
/// verifier with the issuers it accepts. Every other pair is untrusted.
pub const TRUST_TABLE: [(&str, &[&str]); 6] = [
    ("idp:campus", &["proxy:hub", "sp:partner"]),
    ("idp:other", &["proxy:hub"]),
    ("op:social", &[]),
    ("proxy:hub", &["idp:campus", "idp:other", "op:social", "sp:partner"]),
    ("sp:internal", &["proxy:hub"]),
    ("sp:partner", &["idp:campus", "proxy:hub"]),
];

pub const ID_REGISTRATIONS: usize = 10_000;
pub const DIGEST_SAMPLES: usize = 50;
pub const TRANSLATION_CASES: usize = 200;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}` (expected one of: trust, ids, translation, delegation, policy, conformance, determinism)")]
    UnknownSuite(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("registry snapshot: {0}")]
    Snapshot(#[from] ProxyError),
}

/// Outcome of one property over all its cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub property: String,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl PropertyResult {
    fn new(property: &str) -> Self {
        PropertyResult {
            property: property.to_string(),
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteReport {
    pub suite: String,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.property == name)
    }

    /// One `PASS`/`FAIL` line per property, the first few failures under
    /// each failing one.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            let _ = writeln!(
                out,
                "{} {}/{} ({} cases)",
                if p.passed() { "PASS" } else { "FAIL" },
                self.suite,
                p.property,
                p.cases
            );
            for f in p.failures.iter().take(5) {
                let _ = writeln!(out, "    {f}");
            }
            if p.failures.len() > 5 {
                let _ = writeln!(out, "    ... {} more", p.failures.len() - 5);
            }
        }
        out
    }
}

/// Inputs shared by the suites.
#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Scenarios for the policy, trust and determinism suites.
    pub scenarios: Vec<Scenario>,
    /// Registry snapshot audited by the ids suite.
    pub registry_snapshot: Option<String>,
}

pub fn reference_topology() -> Topology {
    load_topology(REFERENCE_TOPOLOGY).expect("embedded reference topology loads")
}

pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    let properties = match name {
        "trust" => trust_suite(opts)?,
        "ids" => ids_suite(opts)?,
        "translation" => translation_suite(opts),
        "delegation" => delegation_suite(opts),
        "policy" => policy_suite(opts)?,
        "conformance" => conformance_suite(),
        "determinism" => determinism_suite(opts),
        other => return Err(SuiteError::UnknownSuite(other.to_string())),
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        properties,
    })
}

fn id(s: &str) -> EntityId {
    EntityId::new(s).expect("literal id")
}

fn stmt(name: &str, value: &str, issuer: &EntityId, loa: LoALevel) -> AttributeStatement {
    AttributeStatement::new(name, value, issuer.clone(), loa, Delivery::Push).expect("valid name")
}

// ---------------------------------------------------------------- trust

fn proxied_topologies(opts: &SuiteOptions) -> Vec<(String, Topology)> {
    let mut out = vec![("reference".to_string(), reference_topology())];
    for s in &opts.scenarios {
        if s.topology.entities.values().any(|e| e.is_internal()) {
            out.push((s.name.clone(), s.topology.clone()));
        }
    }
    out
}

fn native_tech(kind: EntityKind) -> Technology {
    match kind {
        EntityKind::OP => Technology::Oidc,
        EntityKind::CA => Technology::X509,
        _ => Technology::Saml,
    }
}

/// A credential an identity provider issues straight to `audience`.
fn direct_credential(
    t: &Topology,
    idps: &mut IdpState,
    provider: &EntityId,
    kind: EntityKind,
    subject: &str,
    audience: &EntityId,
    now: Timestamp,
) -> Result<Credential, String> {
    let statements = vec![stmt("mail", "probe@home.example", provider, LoALevel::High)];
    crate::translation::issue_native(
        t,
        idps,
        provider,
        subject,
        audience,
        statements,
        native_tech(kind),
        now + 300,
        Delivery::Push,
        now,
    )
    .map_err(|e| e.to_string())
}

/// Statements satisfying the SP's first rule, or `None` when it has none.
fn satisfying_statements(t: &Topology, proxy: &EntityId, sp: &EntityId, uid: &ScopedId) -> Option<Vec<AttributeStatement>> {
    let policy = AuthzPolicy::for_sp(t, sp);
    let rule = policy.rules.first()?;
    let mut out = vec![
        stmt("unique-id", &uid.render(), proxy, LoALevel::High),
        stmt("loa", LoALevel::High.as_str(), proxy, LoALevel::High),
    ];
    for (name, value) in rule.patterns() {
        let value = if value == "*" { "probe" } else { value };
        out.push(stmt(name, value, proxy, LoALevel::High));
    }
    Some(out)
}

fn trust_suite(opts: &SuiteOptions) -> Result<Vec<PropertyResult>, SuiteError> {
    let mut rejected = PropertyResult::new("direct-credentials-rejected");
    let mut accepted = PropertyResult::new("proxy-credentials-accepted");
    for (name, t) in proxied_topologies(opts) {
        let mut idps = IdpState::from_topology(&t);
        let now = t.epoch;
        let internal: Vec<(&EntityId, &EntityId)> = t
            .entities
            .values()
            .filter_map(|e| e.internal_behind.as_ref().map(|p| (&e.id, p)))
            .collect();
        for &(sp, proxy) in &internal {
            for provider in t.entities.values().filter(|e| e.kind.is_identity_provider()) {
                for user in &provider.users {
                    let cred = match direct_credential(&t, &mut idps, &provider.id, provider.kind, &user.subject, sp, now) {
                        Ok(c) => c,
                        Err(e) => {
                            rejected.check(false, || format!("{name}: {} could not issue: {e}", provider.id));
                            continue;
                        }
                    };
                    let verdict = accept_credential(&t, &idps, sp, &cred, now);
                    rejected.check(verdict.is_err(), || {
                        format!("{name}: {sp} accepted a direct credential from {}", provider.id)
                    });
                }
            }
            let scope = crate::flow::aggregator_scope(&t, proxy);
            let uid = ScopedId::new(unique_id_local_part(proxy, "trust-probe"), scope).expect("hex local part");
            let Some(statements) = satisfying_statements(&t, proxy, sp, &uid) else {
                continue;
            };
            let cid = CompositeIdentity {
                persistent_unique_id: uid,
                statements,
                effective_loa: LoALevel::High,
                source_log: Vec::new(),
            };
            let policy = AuthzPolicy::for_sp(&t, sp);
            for &tech in &t.entities[sp].protocols {
                let outcome = issue_downstream(&t, &mut idps, proxy, sp, &cid, tech, now)
                    .map_err(|e| e.to_string())
                    .and_then(|d| accept_credential(&t, &idps, sp, d.credential(), now))
                    .and_then(|r| {
                        let loa = crate::flow::loa_of(&r.statements);
                        match authorize_statements(&policy, &r.statements, loa) {
                            Decision::Granted => Ok(()),
                            Decision::Denied(reason) => Err(format!("denied: {reason}")),
                        }
                    });
                accepted.check(outcome.is_ok(), || {
                    format!("{name}: {proxy} -> {sp} ({tech}): {}", outcome.clone().unwrap_err())
                });
            }
        }
    }
    let mut table = PropertyResult::new("fixture-trust-table");
    let t = load_topology(TRUST_FIXTURE)?;
    let expected: BTreeMap<&str, BTreeSet<&str>> = TRUST_TABLE
        .iter()
        .map(|(v, issuers)| (*v, issuers.iter().copied().collect()))
        .collect();
    for verifier in t.entities.keys() {
        for issuer in t.entities.keys() {
            let want = expected
                .get(verifier.as_str())
                .is_some_and(|set| set.contains(issuer.as_str()));
            let got = trusts(&t, verifier, issuer)?;
            table.check(got == want, || format!("trusts({verifier}, {issuer}) = {got}, table says {want}"));
        }
    }
    Ok(vec![rejected, accepted, table])
}

// ---------------------------------------------------------------- ids

/// Synthetic `(issuer, subject)` pairs; repeats are deliberate.
pub fn synthetic_registrations(seed: u64, n: usize) -> Vec<(EntityId, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let issuers: Vec<EntityId> = (0..25)
        .map(|i| id(&format!("{}:home-{i}", ["idp", "op", "ca", "social"][i % 4])))
        .collect();
    (0..n)
        .map(|_| {
            let issuer = issuers[rng.random_range(0..issuers.len())].clone();
            let subject = format!("user-{}", rng.random_range(0..n as u64 / 2));
            (issuer, subject)
        })
        .collect()
}

fn digest_local_part(issuer: &EntityId, subject: &str) -> String {
    let digest = Sha256::digest(format!("{issuer}|{subject}").as_bytes());
    hex::encode(&digest[..16])
}

fn ids_suite(opts: &SuiteOptions) -> Result<Vec<PropertyResult>, SuiteError> {
    let scope = "suite.example";
    let pairs = synthetic_registrations(opts.seed, ID_REGISTRATIONS);

    let mut determinism = PropertyResult::new("determinism");
    let mut a = IdRegistry::new();
    let mut b = IdRegistry::new();
    for (issuer, subject) in pairs.iter().take(500) {
        let x = derive_unique_id(&mut a, issuer, subject, scope);
        let y = derive_unique_id(&mut b, issuer, subject, scope);
        determinism.check(x.is_ok() && x == y, || format!("{issuer}|{subject}: {x:?} vs {y:?}"));
    }

    let mut separation = PropertyResult::new("issuer-separation");
    let mut reg = IdRegistry::new();
    for (issuer, subject) in pairs.iter().take(500) {
        let other = id(&format!("{issuer}-twin"));
        let x = derive_unique_id(&mut reg, issuer, subject, scope);
        let y = derive_unique_id(&mut reg, &other, subject, scope);
        separation.check(matches!((&x, &y), (Ok(x), Ok(y)) if x != y), || {
            format!("{issuer} and {other} share an identifier for {subject}")
        });
    }

    let mut collisions = PropertyResult::new("no-collisions");
    let mut rebinding = PropertyResult::new("non-reassignment");
    let mut reg = IdRegistry::new();
    let mut first: BTreeMap<(EntityId, String), ScopedId> = BTreeMap::new();
    let mut owner: BTreeMap<ScopedId, (EntityId, String)> = BTreeMap::new();
    for (issuer, subject) in &pairs {
        let key = (issuer.clone(), subject.clone());
        let got = derive_unique_id(&mut reg, issuer, subject, scope)?;
        let prior = first.entry(key.clone()).or_insert_with(|| got.clone()).clone();
        rebinding.check(prior == got, || format!("{issuer}|{subject} rebound from {prior} to {got}"));
        let holder = owner.entry(got.clone()).or_insert_with(|| key.clone()).clone();
        collisions.check(holder == key, || format!("{got} shared by {}|{} and {issuer}|{subject}", holder.0, holder.1));
    }
    for v in audit_snapshot(&reg.snapshot())? {
        rebinding.check(false, || v.to_string());
    }

    let mut digest = PropertyResult::new("digest-derivation");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    for _ in 0..DIGEST_SAMPLES {
        let (issuer, subject) = &pairs[rng.random_range(0..pairs.len())];
        let got = reg.lookup(issuer, subject).cloned();
        let want = digest_local_part(issuer, subject);
        digest.check(got.as_ref().is_some_and(|g| g.local_part() == want && g.scope() == scope), || {
            format!("{issuer}|{subject}: {got:?}, digest {want}")
        });
    }

    let mut out = vec![determinism, separation, collisions, rebinding, digest];
    if let Some(text) = &opts.registry_snapshot {
        let violations = audit_snapshot(text)?;
        let mut by_property: BTreeMap<&str, PropertyResult> = BTreeMap::new();
        for p in ["non-reassignment", "derivation", "link-target"] {
            let mut r = PropertyResult::new(&format!("snapshot {p}"));
            r.cases = text.lines().count().saturating_sub(1);
            by_property.insert(p, r);
        }
        for v in violations {
            if let Some(r) = by_property.get_mut(v.property) {
                r.failures.push(v.to_string());
            }
        }
        out.extend(by_property.into_values());
    }
    Ok(out)
}

// ---------------------------------------------------------------- translation

const SAMPLE_NAMES: [&str; 6] = ["mail", "affiliation", "group", "role", "display-name", "raw:orcid"];

fn random_statements(rng: &mut ChaCha8Rng, issuers: &[EntityId]) -> Vec<AttributeStatement> {
    let levels = [LoALevel::Low, LoALevel::Substantial, LoALevel::High];
    let n = rng.random_range(0..6);
    (0..n)
        .map(|_| {
            let name = SAMPLE_NAMES[rng.random_range(0..SAMPLE_NAMES.len())];
            let value = format!("v{}", rng.random_range(0..4));
            let issuer = &issuers[rng.random_range(0..issuers.len())];
            stmt(name, &value, issuer, levels[rng.random_range(0..3)])
        })
        .collect()
}

/// `(name, value, issuer, loa)` of every statement, sorted.
pub fn statement_multiset(statements: &[AttributeStatement]) -> Vec<(String, String, String, LoALevel)> {
    let mut out: Vec<_> = statements
        .iter()
        .map(|s| (s.name().to_string(), s.value().to_string(), s.issuer().to_string(), s.loa()))
        .collect();
    out.sort();
    out
}

fn issuer_for(tech: Technology) -> EntityId {
    match tech {
        Technology::Saml => id("idp:home"),
        Technology::Oidc => id("op:home"),
        Technology::X509 => id("ca:home"),
    }
}

fn translation_suite(opts: &SuiteOptions) -> Vec<PropertyResult> {
    let t = reference_topology();
    let mut idps = IdpState::from_topology(&t);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let routes: Vec<_> = routes_of(&t).into_iter().filter(|r| r.from != r.to).collect();
    let issuers = [id("idp:home"), id("op:home"), id("aa:community")];
    let audience = id("sp:internal-saml");
    let mut subject_ok = PropertyResult::new("subject-preserved");
    let mut lifetime_ok = PropertyResult::new("lifetime-monotone");
    let mut loa_ok = PropertyResult::new("loa-monotone");
    for i in 0..TRANSLATION_CASES {
        let route = &routes[i % routes.len()];
        let now = t.epoch + rng.random_range(0..10_000);
        let subject = format!("subject-{}", rng.random_range(0..1_000_000));
        let statements = random_statements(&mut rng, &issuers);
        let lifetime = rng.random_range(1..100_000);
        let input = match crate::translation::issue_native(
            &t,
            &mut idps,
            &issuer_for(route.from),
            &subject,
            &audience,
            statements.clone(),
            route.from,
            now + lifetime,
            Delivery::Push,
            now,
        ) {
            Ok(c) => c,
            Err(e) => {
                subject_ok.check(false, || format!("case {i}: input issue failed: {e}"));
                continue;
            }
        };
        let label = format!("case {i} ({} {} -> {})", route.tts, route.from, route.to);
        let out = translate(&t, &mut idps, &route.tts, &input, route.to, &audience, now)
            .map_err(|e| e.to_string())
            .and_then(|c| {
                open_credential(&t, &idps, &c, now)
                    .map(|opened| (c, opened))
                    .map_err(|e| e.to_string())
            });
        let (output, (out_subject, out_statements, _)) = match out {
            Ok(v) => v,
            Err(e) => {
                subject_ok.check(false, || format!("{label}: {e}"));
                continue;
            }
        };
        subject_ok.check(out_subject == subject, || format!("{label}: subject {subject} became {out_subject}"));
        let (in_na, out_na) = (input.not_after(), output.not_after());
        lifetime_ok.check(out_na <= in_na, || format!("{label}: not_after {out_na:?} exceeds input {in_na:?}"));
        let raised = out_statements.iter().find(|o| {
            !statements
                .iter()
                .any(|s| s.name() == o.name() && s.value() == o.value() && s.issuer() == o.issuer() && s.loa() >= o.loa())
        });
        loa_ok.check(raised.is_none(), || format!("{label}: {raised:?} has no input of equal or higher LoA"));
    }

    let mut round_trip = PropertyResult::new("assertion-token-assertion");
    let proxy = id("proxy:hub");
    for i in 0..TRANSLATION_CASES / 4 {
        let now = t.epoch + i as i64;
        let subject = format!("rt-{i}");
        let statements = random_statements(&mut rng, &issuers);
        let result = crate::translation::issue_native(
            &t,
            &mut idps,
            &id("idp:home"),
            &subject,
            &audience,
            statements.clone(),
            Technology::Saml,
            now + 300,
            Delivery::Push,
            now,
        )
        .map_err(|e| e.to_string())
        .and_then(|a| translate(&t, &mut idps, &proxy, &a, Technology::Oidc, &audience, now).map_err(|e| e.to_string()))
        .and_then(|tok| translate(&t, &mut idps, &proxy, &tok, Technology::Saml, &audience, now).map_err(|e| e.to_string()))
        .and_then(|back| open_credential(&t, &idps, &back, now).map_err(|e| e.to_string()));
        round_trip.check(
            result
                .as_ref()
                .is_ok_and(|(s, st, _)| *s == subject && statement_multiset(st) == statement_multiset(&statements)),
            || format!("round trip {i}: {result:?}"),
        );
    }
    vec![subject_ok, lifetime_ok, loa_ok, round_trip]
}

// ---------------------------------------------------------------- delegation

/// One generated chain with the anchors and instant it is checked against.
#[derive(Debug, Clone)]
pub struct ChainCase {
    pub label: String,
    pub anchors: TrustAnchors,
    pub chain: CertChain,
    pub now: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mutation {
    None,
    Unlinked,
    Unanchored,
    Tampered,
}

pub const CHAIN_DRAWS: usize = 5;
pub const CHAIN_MAX_LEN: usize = 4;

/// Every proxy/non-proxy pattern of chains of length 1 to 4, each intact,
/// unlinked, unanchored and tampered, with `CHAIN_DRAWS` random validity
/// windows and depths: 600 chains.
pub fn delegation_corpus(seed: u64) -> Vec<ChainCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root_id = id("ca:root");
    let mut signing = TrustAnchors::new();
    signing.register(root_id.clone(), SigningKey::derive(seed, &root_id));
    let mut stranger = TrustAnchors::new();
    stranger.register(id("ca:other"), SigningKey::derive(seed, &id("ca:other")));
    let now: Timestamp = 1_000_000;
    let mut out = Vec::new();
    for len in 1..=CHAIN_MAX_LEN {
        for pattern in 0u32..(1 << len) {
            for mutation in [Mutation::None, Mutation::Unlinked, Mutation::Unanchored, Mutation::Tampered] {
                for draw in 0..CHAIN_DRAWS {
                    let mut chain = build_chain(&mut rng, &signing, len, pattern, now);
                    let anchors = match mutation {
                        Mutation::Unanchored => stranger.clone(),
                        _ => signing.clone(),
                    };
                    let pick = rng.random_range(0..len);
                    match mutation {
                        Mutation::None | Mutation::Unanchored => {}
                        Mutation::Unlinked => chain.certs[pick].issuer_name = "ca:elsewhere".into(),
                        Mutation::Tampered => chain.certs[pick].not_after += 1,
                    }
                    out.push(ChainCase {
                        label: format!("len {len} pattern {pattern:0len$b} {mutation:?} #{draw}"),
                        anchors,
                        chain,
                        now,
                    });
                }
            }
        }
    }
    out
}

fn build_chain(rng: &mut ChaCha8Rng, signing: &TrustAnchors, len: usize, pattern: u32, now: Timestamp) -> CertChain {
    let mut top_down: Vec<Cert> = Vec::with_capacity(len);
    let mut keys: Vec<SigningKey> = Vec::with_capacity(len);
    for depth_from_root in 0..len {
        let index = len - 1 - depth_from_root;
        let is_proxy = pattern & (1 << index) != 0;
        let parent = top_down.last();
        let (subject, issuer_name, tag_issuer) = match parent {
            None => ("ca:root".to_string(), "ca:root".to_string(), id("ca:root")),
            Some(p) if is_proxy => (format!("{}/CN=p{index}", p.subject_name), p.subject_name.clone(), p.integrity.issuer.clone()),
            Some(p) => (format!("ca:n{index}"), p.subject_name.clone(), id(&p.subject_name)),
        };
        let (not_before, not_after) = match (parent, rng.random_range(0..10)) {
            (None, 0..8) => (now - rng.random_range(100..1000), now + rng.random_range(100..1000)),
            (Some(p), 0..6) => (p.not_before + rng.random_range(0..50), p.not_after - rng.random_range(0..50)),
            (Some(p), 6..8) if rng.random_bool(0.5) => (p.not_before - rng.random_range(1..50), p.not_after),
            (Some(p), 6..8) => (p.not_before, p.not_after + rng.random_range(1..50)),
            _ => {
                let nb = now + rng.random_range(-1000..1000);
                (nb, nb + rng.random_range(-100..1000))
            }
        };
        let remaining_delegation_depth = match parent {
            None => rng.random_range(2..=5),
            Some(p) if rng.random_bool(0.8) => p.remaining_delegation_depth.saturating_sub(rng.random_range(1..3)),
            Some(_) => rng.random_range(0..=5),
        };
        let cert = Cert {
            subject_name: subject,
            issuer_name,
            not_before,
            not_after,
            is_proxy,
            remaining_delegation_depth,
            attr_certificate: None,
            integrity: IntegrityTag::unsigned(tag_issuer.clone()),
        };
        let key = match parent {
            Some(p) if !p.is_self_signed() => holder_key(keys.last().expect("parent key"), &p.integrity),
            _ => *signing.key(&tag_issuer).unwrap_or(signing.key(&id("ca:root")).expect("root key")),
        };
        let tag = mint_with_key(tag_issuer, &key, &cert_bytes(&cert));
        top_down.push(Cert { integrity: tag, ..cert });
        keys.push(key);
    }
    top_down.reverse();
    CertChain { certs: top_down }
}

fn oracle_tags_ok(anchors: &TrustAnchors, chain: &CertChain) -> bool {
    let n = chain.certs.len();
    let mut keys: Vec<Option<SigningKey>> = vec![None; n];
    for i in (0..n).rev() {
        let c = &chain.certs[i];
        if !c.is_proxy && c.integrity.issuer.as_str() != c.issuer_name {
            return false;
        }
        let key = match chain.certs.get(i + 1) {
            Some(p) if p.subject_name != p.issuer_name => keys[i + 1].map(|k| holder_key(&k, &p.integrity)),
            None if c.is_proxy => None,
            _ => anchors.key(&c.integrity.issuer).copied(),
        };
        let Some(key) = key else { return false };
        if mint_with_key(c.integrity.issuer.clone(), &key, &cert_bytes(c)).tag != c.integrity.tag {
            return false;
        }
        keys[i] = Some(key);
    }
    chain.certs.iter().enumerate().all(|(i, c)| {
        let Some(ac) = &c.attr_certificate else { return true };
        let embedding = (0..n).find(|&j| !chain.certs[j].is_proxy && chain.certs[j].issuer_name == ac.issuer.as_str());
        let _ = i;
        match embedding {
            Some(j) => verify_attr_certificate_with_key(ac, keys[j].as_ref().expect("derived above")).is_valid(),
            None => verify_attr_certificate(anchors, ac).is_valid(),
        }
    })
}

/// Evaluates every chain rule independently over all certificate pairs and
/// returns the highest-priority broken one, by its `ChainError::rule` name.
pub fn brute_force_chain_rule(anchors: &TrustAnchors, chain: &CertChain, now: Timestamp) -> Option<&'static str> {
    let c = &chain.certs;
    let n = c.len();
    if n == 0 {
        return Some("empty chain");
    }
    let linked = (0..n).all(|i| match c.get(i + 1) {
        Some(parent) => c[i].issuer_name == parent.subject_name,
        None => c[i].subject_name == c[i].issuer_name,
    });
    let proxy_after_plain = (0..n).any(|j| (j + 1..n).any(|k| !c[j].is_proxy && c[k].is_proxy));
    let placed = !proxy_after_plain && c.iter().any(|x| !x.is_proxy);
    let anchored = EntityId::new(c[n - 1].issuer_name.clone()).is_ok_and(|r| anchors.contains(&r));
    let windows = c
        .iter()
        .all(|x| x.not_before < x.not_after && x.not_before <= now && now <= x.not_after);
    let pairs = || (0..n.saturating_sub(1)).filter(|&i| c[i].is_proxy);
    let nested = pairs().all(|i| c[i].not_before >= c[i + 1].not_before && c[i].not_after <= c[i + 1].not_after);
    let depth = pairs().all(|i| c[i].remaining_delegation_depth < c[i + 1].remaining_delegation_depth);
    [
        (linked, "linkage broken"),
        (placed, "misplaced proxy"),
        (anchored, "not anchored"),
        (linked && placed && anchored && oracle_tags_ok(anchors, chain), "bad integrity"),
        (windows, "outside validity window"),
        (nested, "window not nested"),
        (depth, "depth not decreasing"),
    ]
    .into_iter()
    .find(|(ok, _)| !ok)
    .map(|(_, rule)| rule)
}

fn delegation_suite(opts: &SuiteOptions) -> Vec<PropertyResult> {
    let corpus = delegation_corpus(opts.seed);
    let verdicts = par::map(&corpus, |case| {
        let got = validate_chain(&case.anchors, &case.chain, case.now).err().map(|e| e.rule());
        let want = brute_force_chain_rule(&case.anchors, &case.chain, case.now);
        (got, want)
    });
    let mut agree = PropertyResult::new("validator-matches-oracle");
    let mut valid = 0;
    for (case, (got, want)) in corpus.iter().zip(verdicts) {
        valid += usize::from(want.is_none());
        agree.check(got == want, || format!("{}: validator {got:?}, oracle {want:?}", case.label));
    }
    let mut coverage = PropertyResult::new("corpus-has-valid-and-invalid");
    coverage.check(valid > 0 && valid < corpus.len(), || format!("{valid} of {} chains valid", corpus.len()));
    vec![agree, coverage]
}

// ---------------------------------------------------------------- policy

fn policy_suite(opts: &SuiteOptions) -> Result<Vec<PropertyResult>, SuiteError> {
    let mut clean = PropertyResult::new("no-unreleased-attributes");
    let mut seeded = PropertyResult::new("seeded-leak-detected");
    for s in &opts.scenarios {
        let report = run_scenario(s, None)?;
        let events: Vec<FlowEvent> = report.events().cloned().collect();
        let carrying = events.iter().filter(|e| e.summary.contains_key("attrs")).count();
        clean.cases += carrying;
        for v in audit_release(&s.topology, &events) {
            clean.failures.push(format!("{}: {v}", s.name));
        }
        let mut leaked = events.clone();
        if let Some(e) = leaked
            .iter_mut()
            .find(|e| matches!(e.action, Action::Issue | Action::Translate) && e.summary.contains_key("audience"))
        {
            let attrs = e.summary.entry("attrs".into()).or_default();
            attrs.push_str(if attrs.is_empty() { "raw:leak" } else { ",raw:leak" });
            let found = audit_release(&s.topology, &leaked).iter().any(|v| v.attribute == "raw:leak");
            seeded.check(found, || format!("{}: injected attribute went unnoticed", s.name));
        }
    }
    Ok(vec![clean, seeded])
}

// ---------------------------------------------------------------- conformance

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Direct,
    ProxiedSaml,
    ProxiedOidc,
    SpLocus,
}

/// Every technology, delivery mode, interaction mode and routing variant on
/// the reference topology: 48 flows.
pub fn conformance_cases() -> Vec<FlowSpec> {
    let mut out = Vec::new();
    for tech in [Technology::Saml, Technology::Oidc, Technology::X509] {
        for attr_mode in [Delivery::Push, Delivery::Pull] {
            for mode in [Mode::Web, Mode::NonWeb] {
                for variant in [Variant::Direct, Variant::ProxiedSaml, Variant::ProxiedOidc, Variant::SpLocus] {
                    let (sp, provider) = match variant {
                        Variant::Direct => (format!("sp:direct-{}", short(tech)), issuer_for(tech)),
                        Variant::ProxiedSaml => (format!("sp:internal-{}", short(tech)), id("idp:home")),
                        Variant::ProxiedOidc => (format!("sp:internal-{}", short(tech)), id("op:home")),
                        Variant::SpLocus => (format!("sp:locus-{}", short(tech)), issuer_for(tech)),
                    };
                    out.push(FlowSpec {
                        user: "rita".into(),
                        target_sp: id(&sp),
                        tech,
                        provider,
                        mode,
                        attr_mode,
                    });
                }
            }
        }
    }
    out
}

fn short(tech: Technology) -> &'static str {
    match tech {
        Technology::Saml => "saml",
        Technology::Oidc => "oidc",
        Technology::X509 => "x509",
    }
}

/// Step-ordering violations of one granted or denied flow trace.
pub fn step_violations(t: &Topology, spec: &FlowSpec, granted: bool, events: &[FlowEvent]) -> Vec<String> {
    let mut out = Vec::new();
    for w in events.windows(2) {
        if w[1].seq <= w[0].seq || w[1].step < w[0].step {
            out.push(format!("order broken at seq {}", w[1].seq));
        }
    }
    let steps: BTreeSet<u8> = events.iter().map(|e| e.step).collect();
    if granted {
        for s in [1, 2, 3, 5] {
            if !steps.contains(&s) {
                out.push(format!("granted without step {s}"));
            }
        }
    }
    let carries = events
        .iter()
        .any(|e| matches!(e.action, Action::Extract | Action::QueryAttrs | Action::Aggregate));
    if (carries || (granted && spec.attr_mode == Delivery::Pull)) && !steps.contains(&4) {
        out.push("attributes handled without step 4".into());
    }
    for e in events.iter().filter(|e| matches!(e.action, Action::Extract | Action::QueryAttrs | Action::Aggregate)) {
        if e.step != 4 {
            out.push(format!("{} at step {}", e.action, e.step));
        }
    }
    if t.entities.get(&spec.target_sp).is_some_and(|e| e.is_internal()) {
        let provider = spec.provider.as_str();
        let target = spec.target_sp.as_str();
        if events.iter().any(|e| {
            e.action == Action::Issue && e.actor == provider && e.summary.get("audience").map(String::as_str) == Some(target)
        }) {
            out.push(format!("{provider} issued straight to internal {target}"));
        }
    }
    let mut seen_grant = false;
    for e in events.iter().filter(|e| e.action == Action::Authorize) {
        let granted_here = e.summary.get("decision").map(String::as_str) == Some("granted");
        if seen_grant && !granted_here {
            out.push(format!("denial after grant at seq {}", e.seq));
        }
        seen_grant |= granted_here;
    }
    out
}

fn conformance_suite() -> Vec<PropertyResult> {
    let t = reference_topology();
    let cases = conformance_cases();
    let runs = par::map(&cases, |spec| {
        let mut st = SimState::new(&t).expect("reference state");
        run_flow(&t, &mut st, spec, 0)
    });
    let mut order = PropertyResult::new("step-order");
    let mut granted = PropertyResult::new("reference-flows-granted");
    for (spec, r) in cases.iter().zip(runs) {
        let ok = r.decision.is_granted();
        granted.check(ok, || format!("{spec}: {}", r.decision));
        let v = step_violations(&t, spec, ok, &r.trace.events);
        order.check(v.is_empty(), || format!("{spec}: {}", v.join("; ")));
    }
    vec![order, granted]
}

// ---------------------------------------------------------------- determinism

fn determinism_suite(opts: &SuiteOptions) -> Vec<PropertyResult> {
    let mut same = PropertyResult::new("identical-traces");
    let first = par::run_all(&opts.scenarios, Some(opts.seed));
    let second = par::run_all_sequential(&opts.scenarios, Some(opts.seed));
    for (s, (a, b)) in opts.scenarios.iter().zip(first.iter().zip(&second)) {
        let (a, b) = (a.as_ref().map(|r| r.trace_jsonl()), b.as_ref().map(|r| r.trace_jsonl()));
        same.check(matches!((&a, &b), (Ok(x), Ok(y)) if x == y), || format!("{}: traces differ", s.name));
    }
    vec![same]
}

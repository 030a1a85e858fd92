use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::authz::{authorize, AuthzPolicy, Decision};
use super::state::SimState;
use super::trace::{Action, FlowEvent, FlowTrace};
use crate::authority::{userinfo_statements, voms_extend, SubjectKey};
use crate::idp::{
    attribute_query, authenticate_oidc, authenticate_web, issue_certificate, redeem_code, AuthnRequest, Binding,
    IdpState, OidcGrant, OidcMode,
};
use crate::model::{
    sort_statements, verify_integrity, AccessPart, AttributeStatement, Credential, Delivery, EntityId, LoALevel,
    ScopedId, Technology, Timestamp, Verdict,
};
use crate::proxy::{aggregate, derive_unique_id, handle_sp_request, issue_downstream, AggregationRequest, CompositeIdentity};
use crate::topology::{trusts, AggregationLocus, EntityKind, SourceRef, Topology};
use crate::translation::{create_proxy_cert, find_path, provision_local, translate, validate_chain};

/// Lifetime of a user's long-lived certificate.
pub const USER_CERT_LIFETIME: i64 = 34_128_000;
/// Lifetime of the proxy certificate a user creates before a grid job.
pub const PROXY_CERT_LIFETIME: i64 = 43_200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Web,
    NonWeb,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Web => "web",
            Mode::NonWeb => "non-web",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "web" => Ok(Mode::Web),
            "non-web" => Ok(Mode::NonWeb),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// One login attempt. `tech` is what the target SP receives; `provider`
/// is the discovery choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub user: String,
    pub target_sp: EntityId,
    pub tech: Technology,
    pub provider: EntityId,
    #[serde(default = "web")]
    pub mode: Mode,
    #[serde(default = "push")]
    pub attr_mode: Delivery,
}

fn web() -> Mode {
    Mode::Web
}

fn push() -> Delivery {
    Delivery::Push
}

impl fmt::Display for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} via {} -> {} ({}, {}, {})",
            self.user, self.provider, self.target_sp, self.tech, self.attr_mode, self.mode
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowResult {
    pub decision: Decision,
    pub trace: FlowTrace,
    /// The identifier the target SP authorized, when step 4 completed.
    pub subject: Option<String>,
}

/// What a relying party learns from an accepted credential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub issuer: EntityId,
    pub subject: String,
    pub statements: Vec<AttributeStatement>,
    pub not_after: Timestamp,
}

fn trusted(t: &Topology, rp: &EntityId, issuer: &EntityId) -> Result<(), String> {
    match trusts(t, rp, issuer) {
        Ok(true) => Ok(()),
        Ok(false) => Err(format!("untrusted issuer {issuer}")),
        Err(e) => Err(e.to_string()),
    }
}

fn reference_statements(idps: &IdpState, issuer: &EntityId, id: &str) -> Option<Vec<AttributeStatement>> {
    idps.reference(id).filter(|g| &g.issuer == issuer).map(|g| g.statements.clone())
}

/// Relying-party checks: trusted issuer, integrity, audience and expiry.
/// Chains must validate and end at an anchor the relying party trusts;
/// attribute certificates from outside the chain need trust too.
pub fn accept_credential(
    t: &Topology,
    idps: &IdpState,
    rp: &EntityId,
    cred: &Credential,
    now: Timestamp,
) -> Result<Received, String> {
    if let Credential::CertChain(chain) = cred {
        let view = validate_chain(&t.anchors, chain, now).map_err(|e| format!("chain rejected: {e}"))?;
        let root = chain.root().expect("validated chain has a root").integrity.issuer.clone();
        trusted(t, rp, &root)?;
        let cert_issuers: BTreeSet<&str> = chain.certs.iter().map(|c| c.issuer_name.as_str()).collect();
        for ac in chain.certs.iter().filter_map(|c| c.attr_certificate.as_ref()) {
            if !cert_issuers.contains(ac.issuer.as_str()) {
                trusted(t, rp, &ac.issuer)?;
            }
        }
        return Ok(Received {
            issuer: root,
            subject: view.subject,
            statements: view.attrs,
            not_after: chain.leaf().map(|l| l.not_after).unwrap_or(now),
        });
    }
    let issuer = cred.issuer().expect("non-chain credentials name an issuer").clone();
    trusted(t, rp, &issuer)?;
    if let Verdict::Invalid(r) = verify_integrity(&t.anchors, cred) {
        return Err(format!("bad integrity: {r}"));
    }
    if cred.audience() != Some(rp) {
        return Err(format!("audience mismatch: issued for {}", cred.audience().map(|a| a.as_str()).unwrap_or("-")));
    }
    let not_after = cred.not_after().unwrap_or(now);
    if now >= not_after {
        return Err("expired credential".into());
    }
    let statements = match cred {
        Credential::TokenSet(ts) => match &ts.access {
            AccessPart::SelfContained { claims, .. } => claims.clone(),
            AccessPart::Reference(id) => {
                reference_statements(idps, &issuer, id).ok_or_else(|| format!("unknown reference {id}"))?
            }
        },
        other => other.statements(),
    };
    Ok(Received {
        issuer,
        subject: cred.subject().unwrap_or_default().to_string(),
        statements,
        not_after,
    })
}

type Summary = Vec<(&'static str, String)>;

fn attr_names(statements: &[AttributeStatement]) -> String {
    let names: BTreeSet<&str> = statements.iter().map(|s| s.name()).collect();
    names.into_iter().collect::<Vec<_>>().join(",")
}

fn credential_summary(idps: &IdpState, cred: &Credential) -> Summary {
    let mut s: Summary = vec![("kind", cred.kind_name().to_string())];
    if let Some(i) = cred.issuer() {
        s.push(("issuer", i.to_string()));
    }
    if let Some(a) = cred.audience() {
        s.push(("audience", a.to_string()));
    }
    if let Some(sub) = cred.subject() {
        s.push(("subject", sub.to_string()));
    }
    let statements = match cred {
        Credential::TokenSet(ts) => match &ts.access {
            AccessPart::Reference(id) => {
                s.push(("access", "reference".into()));
                reference_statements(idps, &ts.issuer, id).unwrap_or_default()
            }
            AccessPart::SelfContained { claims, .. } => {
                s.push(("access", "self-contained".into()));
                claims.clone()
            }
        },
        other => other.statements(),
    };
    s.push(("attrs", attr_names(&statements)));
    if let Some(na) = cred.not_after() {
        s.push(("not_after", na.to_string()));
    }
    if let Some(tag) = cred.integrity() {
        s.push(("tag", tag.short_hex()));
    }
    s
}

/// Event recorder for one flow. Owns the clock while the flow runs.
struct Run<'t> {
    t: &'t Topology,
    flow: usize,
    clock: Timestamp,
    user_actor: String,
    events: Vec<FlowEvent>,
}

impl Run<'_> {
    fn now(&self) -> Timestamp {
        self.clock
    }

    fn push(&mut self, step: u8, actor: String, actor_kind: String, action: Action, summary: Summary) {
        self.events.push(FlowEvent {
            flow: self.flow,
            seq: self.events.len() as u64 + 1,
            time: self.clock,
            step,
            actor,
            actor_kind,
            action,
            summary: summary.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        });
        self.clock += 1;
    }

    fn emit(&mut self, step: u8, actor: &EntityId, action: Action, summary: Summary) {
        let kind = self.t.kind_of(actor).map(EntityKind::label).unwrap_or("unknown");
        self.push(step, actor.to_string(), kind.to_string(), action, summary);
    }

    fn emit_user(&mut self, step: u8, action: Action, summary: Summary) {
        self.push(step, self.user_actor.clone(), "user".into(), action, summary);
    }
}

fn upstream_tech(t: &Topology, provider: &EntityId) -> Result<Technology, String> {
    let e = t.entity(provider).map_err(|e| e.to_string())?;
    Ok(match e.kind {
        EntityKind::IdP => Technology::Saml,
        EntityKind::OP => Technology::Oidc,
        EntityKind::CA => Technology::X509,
        EntityKind::GuestIdP | EntityKind::SocialIdP => {
            e.protocols.iter().next().copied().unwrap_or(Technology::Saml)
        }
        _ => return Err(format!("{provider} does not authenticate users")),
    })
}

/// Who aggregates, from which sources, under which scope and mapping.
struct AggContext {
    aggregator: EntityId,
    sources: Vec<SourceRef>,
    scope: String,
    mapping: BTreeMap<String, String>,
    announce: bool,
}

/// Scope of identifiers minted by `aggregator`: the proxy scope, the
/// service scope, or the id after its kind prefix.
pub(crate) fn aggregator_scope(t: &Topology, aggregator: &EntityId) -> String {
    let e = t.entities.get(aggregator);
    if let Some(cfg) = e.and_then(|e| e.proxy.as_ref()) {
        return cfg.scope.clone();
    }
    e.and_then(|e| e.service.as_ref())
        .and_then(|s| s.scope.clone())
        .unwrap_or_else(|| aggregator.as_str().split_once(':').map(|(_, rest)| rest).unwrap_or(aggregator.as_str()).to_string())
}

pub(crate) fn loa_of(statements: &[AttributeStatement]) -> LoALevel {
    statements
        .iter()
        .find(|s| s.name() == "loa")
        .and_then(|s| s.value().parse().ok())
        .or_else(|| statements.iter().map(|s| s.loa()).min())
        .unwrap_or(LoALevel::Low)
}

/// Executes one flow. Failures of any step become a denial recorded as
/// the final authorize event.
pub fn run_flow(t: &Topology, st: &mut SimState, spec: &FlowSpec, flow: usize) -> FlowResult {
    let mut run = Run {
        t,
        flow,
        clock: st.clock,
        user_actor: format!("user:{}", spec.user),
        events: Vec::new(),
    };
    let (decision, subject) = match execute(&mut run, st, spec) {
        Ok(done) => done,
        Err(reason) => {
            run.emit(
                5,
                &spec.target_sp,
                Action::Authorize,
                vec![("decision", "denied".into()), ("reason", reason.clone())],
            );
            (Decision::Denied(reason), None)
        }
    };
    st.clock = run.clock;
    FlowResult {
        decision,
        trace: FlowTrace { events: run.events },
        subject,
    }
}

fn execute(run: &mut Run<'_>, st: &mut SimState, spec: &FlowSpec) -> Result<(Decision, Option<String>), String> {
    let t = run.t;
    let err = |e: &dyn fmt::Display| e.to_string();
    let sp = &spec.target_sp;
    let sp_entity = t.entity(sp).map_err(|e| err(&e))?;
    let provider = &spec.provider;
    let record = st
        .principals
        .get(&spec.user)
        .cloned()
        .ok_or_else(|| format!("unknown user {}", spec.user))?;
    let web = spec.mode == Mode::Web;
    let up_tech = upstream_tech(t, provider)?;
    let proxy = sp_entity.internal_behind.clone();
    let requester = proxy.clone().unwrap_or_else(|| sp.clone());
    let service = sp_entity.service.clone().unwrap_or_default();
    if proxy.is_none() && !sp_entity.protocols.contains(&spec.tech) && !sp_entity.protocols.is_empty() {
        return Err(format!("{sp} does not accept {}", spec.tech));
    }

    // Step 1: the SP sends the user toward the chosen provider.
    let mut req = AuthnRequest::new(requester.clone(), provider.clone());
    req.delivery = spec.attr_mode;
    if !web {
        req.binding = Binding::BackChannel;
    }
    if let Some(proxy) = &proxy {
        let mut inner = AuthnRequest::new(sp.clone(), proxy.clone());
        inner.binding = req.binding;
        inner.delivery = spec.attr_mode;
        req = handle_sp_request(t, proxy, &inner, provider).map_err(|e| err(&e))?;
    }
    let redirects = web && up_tech != Technology::X509;
    if redirects {
        match &proxy {
            Some(proxy) => {
                run.emit(1, sp, Action::Redirect, vec![("to", proxy.to_string())]);
                run.emit(1, proxy, Action::Redirect, vec![("to", provider.to_string())]);
            }
            None => run.emit(1, sp, Action::Redirect, vec![("to", provider.to_string())]),
        }
    }

    // Step 2: authentication and issuance at the provider.
    let auth_step = if redirects { 2 } else { 1 };
    let mut code = None;
    let mut cred: Option<Credential> = match up_tech {
        Technology::Saml => {
            run.emit(auth_step, provider, Action::Authenticate, vec![("user", spec.user.clone())]);
            let a = authenticate_web(t, &st.idps, provider, &record, &req, run.now()).map_err(|e| err(&e))?;
            let c = Credential::Assertion(a);
            run.emit(2, provider, Action::Issue, credential_summary(&st.idps, &c));
            Some(c)
        }
        Technology::Oidc => {
            run.emit(auth_step, provider, Action::Authenticate, vec![("user", spec.user.clone())]);
            let mode = match spec.attr_mode {
                Delivery::Push => OidcMode::SelfContained,
                Delivery::Pull => OidcMode::Code,
            };
            match authenticate_oidc(t, &mut st.idps, provider, &record, &requester, mode, run.now())
                .map_err(|e| err(&e))?
            {
                OidcGrant::Tokens(ts) => {
                    let c = Credential::TokenSet(ts);
                    run.emit(2, provider, Action::Issue, credential_summary(&st.idps, &c));
                    Some(c)
                }
                OidcGrant::Code(c) => {
                    run.emit(
                        2,
                        provider,
                        Action::Issue,
                        vec![("kind", "auth-code".into()), ("audience", requester.to_string()), ("attrs", String::new())],
                    );
                    code = Some(c);
                    None
                }
            }
        }
        Technology::X509 => {
            run.emit(1, provider, Action::Authenticate, vec![("user", spec.user.clone())]);
            let chain = issue_certificate(t, &st.idps, provider, &record, USER_CERT_LIFETIME, run.now())
                .map_err(|e| err(&e))?;
            let c = Credential::CertChain(chain.clone());
            run.emit(1, provider, Action::Issue, credential_summary(&st.idps, &c));
            let mut chain = create_proxy_cert(&t.anchors, &chain, "proxy", PROXY_CERT_LIFETIME, run.now(), true)
                .map_err(|e| err(&e))?;
            run.emit_user(
                2,
                Action::Issue,
                vec![
                    ("kind", "proxy-certificate".into()),
                    ("depth", chain.certs[0].remaining_delegation_depth.to_string()),
                    ("not_after", chain.certs[0].not_after.to_string()),
                ],
            );
            if let (Delivery::Push, Some(v)) = (spec.attr_mode, &service.voms) {
                let roles: BTreeSet<String> = v.roles.iter().cloned().collect();
                chain = voms_extend(t, &st.authorities, &v.server, &chain, &v.vo, &roles, run.now())
                    .map_err(|e| err(&e))?;
                let granted = chain.certs[0].attr_extension();
                let mut values: Vec<&str> = granted.iter().map(|s| s.value()).collect();
                values.sort_unstable();
                run.emit(
                    2,
                    &v.server,
                    Action::Issue,
                    vec![("kind", "attribute-certificate".into()), ("granted", values.join(","))],
                );
            }
            Some(Credential::CertChain(chain))
        }
    };

    // Step 3: the user presents the credential; codes are redeemed and
    // direct flows translate into the SP's technology first.
    if let (None, Some(current)) = (&proxy, cred.as_mut()) {
        if current.technology() != spec.tech {
            let path = find_path(t, sp, current.technology(), spec.tech)
                .ok_or_else(|| format!("no translation route {} to {}", current.technology(), spec.tech))?;
            for route in path {
                let next = translate(t, &mut st.idps, &route.tts, current, route.to, sp, run.now())
                    .map_err(|e| err(&e))?;
                let mut s = credential_summary(&st.idps, &next);
                s.extend([
                    ("from", route.from.to_string()),
                    ("to", route.to.to_string()),
                    ("origin", provider.to_string()),
                    ("audience", sp.to_string()),
                ]);
                run.emit(3, &route.tts, Action::Translate, s);
                *current = next;
            }
        }
    }
    let presented_kind = cred.as_ref().map(Credential::kind_name).unwrap_or("auth-code");
    run.emit_user(3, Action::Present, vec![("to", requester.to_string()), ("kind", presented_kind.into())]);
    let cred = match (cred, &code) {
        (Some(c), _) => c,
        (None, Some(c)) => {
            let ts = redeem_code(t, &mut st.idps, provider, &c.code, &requester, run.now()).map_err(|e| err(&e))?;
            let cred = Credential::TokenSet(ts);
            run.emit(3, provider, Action::Issue, credential_summary(&st.idps, &cred));
            if proxy.is_none() && spec.tech != Technology::Oidc {
                return Err(format!("no translation route {} to {}", Technology::Oidc, spec.tech));
            }
            cred
        }
        (None, None) => return Err("no credential obtained".into()),
    };

    // Step 4: verification, attribute extraction or queries, aggregation.
    let received = accept_credential(t, &st.idps, &requester, &cred, run.now())?;
    let subject = received.subject.clone();
    let (home, pushed): (Vec<AttributeStatement>, Vec<AttributeStatement>) = match (&cred, spec.attr_mode) {
        (Credential::Assertion(_), Delivery::Pull) => {
            let list = attribute_query(t, &st.idps, provider, &subject, &requester).map_err(|e| err(&e))?;
            run.emit(
                4,
                &requester,
                Action::QueryAttrs,
                vec![("source", provider.to_string()), ("attrs", attr_names(&list))],
            );
            (list, Vec::new())
        }
        (Credential::TokenSet(ts), Delivery::Pull) => {
            let list = userinfo_statements(t, &st.idps, provider, ts, run.now()).map_err(|e| err(&e))?;
            run.emit(
                4,
                &requester,
                Action::QueryAttrs,
                vec![("source", provider.to_string()), ("attrs", attr_names(&list))],
            );
            (list, Vec::new())
        }
        _ => {
            run.emit(
                4,
                &requester,
                Action::Extract,
                vec![
                    ("from", received.issuer.to_string()),
                    ("subject", subject.clone()),
                    ("attrs", attr_names(&received.statements)),
                ],
            );
            received.statements.iter().cloned().partition(|s| s.issuer() == provider)
        }
    };

    let ctx = match (&proxy, service.locus) {
        (Some(proxy), _) => {
            let cfg = t
                .entity(proxy)
                .ok()
                .and_then(|e| e.proxy.clone())
                .ok_or_else(|| format!("{proxy} is not a proxy"))?;
            AggContext {
                aggregator: proxy.clone(),
                sources: cfg.sources,
                scope: cfg.scope,
                mapping: cfg.mapping,
                announce: true,
            }
        }
        (None, AggregationLocus::Sp) => {
            let reg = service.registration_sp.clone().unwrap_or_else(|| sp.clone());
            if &reg != sp && web {
                run.emit(4, sp, Action::Redirect, vec![("to", reg.to_string())]);
            }
            let reg_service = t
                .entity(&reg)
                .map_err(|e| err(&e))?
                .service
                .clone()
                .unwrap_or_default();
            AggContext {
                scope: aggregator_scope(t, &reg),
                aggregator: reg,
                sources: reg_service.sources,
                mapping: reg_service.mapping,
                announce: true,
            }
        }
        (None, AggregationLocus::Proxy) => AggContext {
            aggregator: sp.clone(),
            announce: !service.sources.is_empty(),
            sources: service.sources.clone(),
            scope: aggregator_scope(t, sp),
            mapping: service.mapping.clone(),
        },
    };

    let registry = st.registries.entry(ctx.aggregator.clone()).or_default();
    let unique_id = derive_unique_id(registry, provider, &subject, &ctx.scope).map_err(|e| err(&e))?;
    let identity_loa = st
        .idps
        .user(provider, &subject)
        .map(|u| u.loa)
        .or_else(|| t.entity(provider).ok().map(|e| e.issued_loa()))
        .unwrap_or(LoALevel::Low);
    let home_key = SubjectKey::home(provider, &subject);
    let request = AggregationRequest {
        aggregator: &ctx.aggregator,
        home_issuer: provider,
        home: &home,
        pushed: &pushed,
        identity_loa,
        sources: &ctx.sources,
        home_key: &home_key,
        unique_id: &unique_id,
        mapping: &ctx.mapping,
    };
    let (cid, queries) = aggregate(t, &st.authorities, &request).map_err(|e| err(&e))?;
    if ctx.announce {
        for q in &queries {
            let mut s: Summary = vec![("source", q.aa.to_string())];
            match &q.outcome {
                Ok(names) => {
                    let names: BTreeSet<&str> = names.iter().map(String::as_str).collect();
                    s.push(("attrs", names.into_iter().collect::<Vec<_>>().join(",")));
                }
                Err(e) => s.push(("error", e.clone())),
            }
            run.emit(4, &ctx.aggregator, Action::QueryAttrs, s);
        }
        let sources: Vec<String> = cid.source_log.iter().map(|(aa, n)| format!("{aa}={n}")).collect();
        run.emit(
            4,
            &ctx.aggregator,
            Action::Aggregate,
            vec![
                ("unique_id", unique_id.render()),
                ("attrs", attr_names(&cid.statements)),
                ("loa", cid.effective_loa.to_string()),
                ("sources", sources.join(",")),
            ],
        );
        if let Some(p) = st.principals.get_mut(&spec.user) {
            p.record_persistent_id(&unique_id);
        }
    }

    let mut view = match &proxy {
        Some(proxy) => {
            let down = issue_downstream(t, &mut st.idps, proxy, sp, &cid, spec.tech, run.now()).map_err(|e| err(&e))?;
            run.emit(4, proxy, Action::Issue, credential_summary(&st.idps, &down.native));
            for (route, c) in &down.hops {
                let mut s = credential_summary(&st.idps, c);
                s.extend([
                    ("from", route.from.to_string()),
                    ("to", route.to.to_string()),
                    ("origin", proxy.to_string()),
                    ("audience", sp.to_string()),
                ]);
                run.emit(4, &route.tts, Action::Translate, s);
            }
            let mut got = accept_credential(t, &st.idps, sp, down.credential(), run.now())?;
            match down.credential() {
                Credential::TokenSet(ts) if matches!(ts.access, AccessPart::Reference(_)) => {
                    got.statements =
                        userinfo_statements(t, &st.idps, &ts.issuer, ts, run.now()).map_err(|e| err(&e))?;
                    run.emit(
                        4,
                        sp,
                        Action::QueryAttrs,
                        vec![("source", ts.issuer.to_string()), ("attrs", attr_names(&got.statements))],
                    );
                }
                _ => run.emit(
                    4,
                    sp,
                    Action::Extract,
                    vec![
                        ("from", got.issuer.to_string()),
                        ("subject", got.subject.clone()),
                        ("attrs", attr_names(&got.statements)),
                    ],
                ),
            }
            let id: ScopedId = got.subject.parse().unwrap_or_else(|_| cid.persistent_unique_id.clone());
            let mut statements = got.statements.clone();
            sort_statements(&mut statements);
            CompositeIdentity {
                persistent_unique_id: id,
                effective_loa: loa_of(&statements),
                source_log: vec![(got.issuer.clone(), statements.len())],
                statements,
            }
        }
        None => cid,
    };

    // Step 5: authorization, and local accounts for non-web access.
    if let Some(vetted) = st.vetting.get(&(sp.clone(), spec.user.clone())) {
        view.effective_loa = view.effective_loa.max(*vetted);
    }
    st.views.insert((sp.clone(), spec.user.clone()), view.clone());
    let mut decision = authorize(&AuthzPolicy::for_sp(t, sp), &view);
    if !web && decision.is_granted() {
        if service.local_accounts.as_ref().is_some_and(|c| c.auto_provision) {
            let (account, outcome) = provision_local(t, &mut st.accounts, sp, &view).map_err(|e| err(&e))?;
            run.emit(
                5,
                sp,
                Action::Provision,
                vec![
                    ("account", account.account_name.clone()),
                    ("outcome", outcome.as_str().into()),
                    ("privileges", account.privileges.iter().cloned().collect::<Vec<_>>().join(",")),
                ],
            );
            if let Some(p) = st.principals.get_mut(&spec.user) {
                let _ = p.add_local_account(sp.clone(), account.account_name);
            }
        }
        if st.accounts.active(sp, &view.persistent_unique_id).is_none() {
            decision = Decision::Denied("no local account".into());
        }
    }
    let subject = view.persistent_unique_id.render();
    let mut s: Summary = vec![("decision", if decision.is_granted() { "granted" } else { "denied" }.into())];
    if let Some(r) = decision.reason() {
        s.push(("reason", r.to_string()));
    }
    s.push(("loa", view.effective_loa.to_string()));
    s.push(("subject", subject.clone()));
    run.emit(5, sp, Action::Authorize, s);
    Ok((decision, Some(subject)))
}

//! Canonical byte encoding of credentials.
//!
//! The layout is documented in `docs/canonical-encoding.md`. In short: a
//! magic string, the credential kind, then every record as a sequence of
//! `(field name, value)` pairs in alphabetical field-name order. Strings are
//! `u32` big-endian length prefixed UTF-8, timestamps are big-endian `i64`,
//! lists are a `u32` count followed by the items. Integrity tags of the
//! record being encoded are excluded.

use std::collections::BTreeMap;

use super::{
    AccessPart, Assertion, AttributeCertificate, AttributeStatement, Cert, CertChain, Credential,
    Delivery, IntegrityTag, TokenSet,
};

pub const MAGIC: &str = "fedsim-canonical-v1";

#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub(crate) fn new() -> Self {
        let mut enc = Encoder::default();
        enc.str(MAGIC);
        enc
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }

    fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(&(b.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(b);
    }

    fn field(&mut self, name: &str) -> &mut Self {
        self.str(name);
        self
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn opt_str(&mut self, v: Option<&str>) {
        match v {
            None => self.u8(0),
            Some(s) => {
                self.u8(1);
                self.str(s);
            }
        }
    }

    fn statements(&mut self, statements: &[AttributeStatement]) {
        let mut sorted: Vec<&AttributeStatement> = statements.iter().collect();
        sorted.sort_by(|a, b| {
            (a.name(), a.issuer().as_str(), a.value(), a.loa(), a.scope(), a.delivery()).cmp(&(
                b.name(),
                b.issuer().as_str(),
                b.value(),
                b.loa(),
                b.scope(),
                b.delivery(),
            ))
        });
        self.u32(sorted.len() as u32);
        for s in sorted {
            self.statement(s);
        }
    }

    fn statement(&mut self, s: &AttributeStatement) {
        self.field("delivery").u8(match s.delivery() {
            Delivery::Push => 0,
            Delivery::Pull => 1,
        });
        self.field("issuer").str(s.issuer().as_str());
        self.field("loa").u8(s.loa().code());
        self.field("name").str(s.name());
        self.field("scope").opt_str(s.scope());
        self.field("value").str(s.value());
    }

    fn integrity(&mut self, tag: &IntegrityTag) {
        self.field("issuer").str(tag.issuer.as_str());
        self.field("tag").bytes(&tag.tag);
    }

    fn claims_map(&mut self, map: &BTreeMap<String, String>) {
        self.u32(map.len() as u32);
        for (k, v) in map {
            self.str(k);
            self.str(v);
        }
    }

    pub(crate) fn assertion(&mut self, a: &Assertion) {
        self.str("assertion");
        self.field("attributes").statements(&a.attributes);
        self.field("audience").str(a.audience.as_str());
        self.field("auth_instant").i64(a.auth_instant);
        self.field("issuer").str(a.issuer.as_str());
        self.field("not_after").i64(a.not_after);
        self.field("not_before").i64(a.not_before);
        self.field("subject").str(&a.subject);
    }

    pub(crate) fn access_claims(&mut self, claims: &[AttributeStatement]) {
        self.str("access-claims");
        self.field("claims").statements(claims);
    }

    pub(crate) fn token_set(&mut self, t: &TokenSet) {
        self.str("token-set");
        self.field("access");
        match &t.access {
            AccessPart::Reference(id) => {
                self.str("reference");
                self.field("id").str(id);
            }
            AccessPart::SelfContained { claims, integrity } => {
                self.str("self-contained");
                self.field("claims").statements(claims);
                self.field("integrity").integrity(integrity);
            }
        }
        self.field("audience").str(t.audience.as_str());
        self.field("id_claims").claims_map(&t.id_claims);
        self.field("issuer").str(t.issuer.as_str());
        self.field("not_after").i64(t.not_after);
        self.field("subject").str(&t.subject);
    }

    pub(crate) fn attr_certificate_body(&mut self, ac: &AttributeCertificate) {
        self.str("attribute-certificate");
        self.field("holder").str(&ac.holder);
        self.field("issuer").str(ac.issuer.as_str());
        self.field("not_after").i64(ac.not_after);
        self.field("statements").statements(&ac.statements);
    }

    pub(crate) fn cert(&mut self, c: &Cert) {
        self.str("cert");
        self.field("attr_certificate");
        match &c.attr_certificate {
            None => self.u8(0),
            Some(ac) => {
                self.u8(1);
                self.attr_certificate_body(ac);
                self.field("integrity").integrity(&ac.integrity);
            }
        }
        self.field("is_proxy").u8(c.is_proxy as u8);
        self.field("issuer_name").str(&c.issuer_name);
        self.field("not_after").i64(c.not_after);
        self.field("not_before").i64(c.not_before);
        self.field("remaining_delegation_depth")
            .u32(c.remaining_delegation_depth);
        self.field("subject_name").str(&c.subject_name);
    }

    pub(crate) fn chain(&mut self, chain: &CertChain) {
        self.str("cert-chain");
        self.field("certs").u32(chain.certs.len() as u32);
        for c in &chain.certs {
            self.cert(c);
        }
    }
}

/// Deterministic bytes of a credential, excluding its own integrity tag.
pub fn canonical_serialize(c: &Credential) -> Vec<u8> {
    let mut enc = Encoder::new();
    match c {
        Credential::Assertion(a) => enc.assertion(a),
        Credential::TokenSet(t) => enc.token_set(t),
        Credential::CertChain(ch) => enc.chain(ch),
    }
    enc.finish()
}

pub(crate) fn assertion_bytes(a: &Assertion) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.assertion(a);
    enc.finish()
}

pub(crate) fn token_set_bytes(t: &TokenSet) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.token_set(t);
    enc.finish()
}

pub(crate) fn access_claims_bytes(claims: &[AttributeStatement]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.access_claims(claims);
    enc.finish()
}

/// Bytes an integrity tag covers for one certificate.
pub fn cert_bytes(c: &Cert) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.cert(c);
    enc.finish()
}

pub(crate) fn attr_certificate_bytes(ac: &AttributeCertificate) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.attr_certificate_body(ac);
    enc.finish()
}

//! Independent oracles shared by the integration tests: a from-scratch
//! SHA-256 and HMAC, a second encoder for certificate and assertion bytes,
//! and a chain validator that checks every rule by exhaustive enumeration.
#![allow(dead_code)]

use fedsim_core::model::{
    Assertion, AttributeCertificate, AttributeStatement, Cert, CertChain, Delivery, EntityId, LoALevel, SigningKey,
    TrustAnchors,
};
use fedsim_core::Timestamp;

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98,
    0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8,
    0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
    0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2,
];

pub fn sha256(data: &[u8]) -> [u8; 32] {
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
    ];
    let mut msg = data.to_vec();
    msg.push(0x80);
    while msg.len() % 64 != 56 {
        msg.push(0);
    }
    msg.extend_from_slice(&((data.len() as u64) * 8).to_be_bytes());
    for block in msg.chunks(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes([block[4 * i], block[4 * i + 1], block[4 * i + 2], block[4 * i + 3]]);
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh.wrapping_add(s1).wrapping_add(ch).wrapping_add(K[i]).wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (x, y) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *x = x.wrapping_add(y);
        }
    }
    let mut out = [0u8; 32];
    for (i, v) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn hmac_sha256(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut block = [0u8; 64];
    if key.len() > 64 {
        block[..32].copy_from_slice(&sha256(key));
    } else {
        block[..key.len()].copy_from_slice(key);
    }
    let mut inner: Vec<u8> = block.iter().map(|b| b ^ 0x36).collect();
    inner.extend_from_slice(msg);
    let mut outer: Vec<u8> = block.iter().map(|b| b ^ 0x5c).collect();
    outer.extend_from_slice(&sha256(&inner));
    sha256(&outer)
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Persistent identifier local part: first 16 bytes of
/// `SHA-256("issuer|subject")` in lowercase hex.
pub fn oracle_local_part(issuer: &str, subject: &str) -> String {
    to_hex(&sha256(format!("{issuer}|{subject}").as_bytes())[..16])
}

pub fn oracle_fingerprint(key: &SigningKey) -> String {
    to_hex(&hmac_sha256(key.as_bytes(), b"fedsim-anchor-fingerprint-v1"))
}

pub fn oracle_holder_key(key: &[u8; 32], parent_tag: &[u8; 32]) -> [u8; 32] {
    let mut msg = b"fedsim-holder-v1".to_vec();
    msg.extend_from_slice(parent_tag);
    hmac_sha256(key, &msg)
}

/// Second encoder for the canonical layout, written from the format
/// description rather than from the library encoder.
#[derive(Default)]
pub struct Bytes(pub Vec<u8>);

impl Bytes {
    pub fn new() -> Self {
        let mut b = Bytes::default();
        b.s("fedsim-canonical-v1");
        b
    }

    fn s(&mut self, v: &str) {
        self.raw(v.as_bytes());
    }

    fn raw(&mut self, v: &[u8]) {
        self.0.extend((v.len() as u32).to_be_bytes());
        self.0.extend(v);
    }

    fn kv_s(&mut self, k: &str, v: &str) {
        self.s(k);
        self.s(v);
    }

    fn kv_t(&mut self, k: &str, v: Timestamp) {
        self.s(k);
        self.0.extend(v.to_be_bytes());
    }

    fn statements(&mut self, k: &str, list: &[AttributeStatement]) {
        self.s(k);
        let mut sorted: Vec<&AttributeStatement> = list.iter().collect();
        sorted.sort_by_key(|x| (x.name(), x.issuer().as_str(), x.value(), x.loa(), x.scope(), x.delivery()));
        self.0.extend((sorted.len() as u32).to_be_bytes());
        for x in sorted {
            self.s("delivery");
            self.0.push(if x.delivery() == Delivery::Push { 0 } else { 1 });
            self.kv_s("issuer", x.issuer().as_str());
            self.s("loa");
            self.0.push(match x.loa() {
                LoALevel::Low => 0,
                LoALevel::Substantial => 1,
                LoALevel::High => 2,
            });
            self.kv_s("name", x.name());
            self.s("scope");
            match x.scope() {
                None => self.0.push(0),
                Some(v) => {
                    self.0.push(1);
                    self.s(v);
                }
            }
            self.kv_s("value", x.value());
        }
    }

    fn ac_body(&mut self, ac: &AttributeCertificate) {
        self.s("attribute-certificate");
        self.kv_s("holder", &ac.holder);
        self.kv_s("issuer", ac.issuer.as_str());
        self.kv_t("not_after", ac.not_after);
        self.statements("statements", &ac.statements);
    }
}

pub fn oracle_assertion_bytes(a: &Assertion) -> Vec<u8> {
    let mut b = Bytes::new();
    b.s("assertion");
    b.statements("attributes", &a.attributes);
    b.kv_s("audience", a.audience.as_str());
    b.kv_t("auth_instant", a.auth_instant);
    b.kv_s("issuer", a.issuer.as_str());
    b.kv_t("not_after", a.not_after);
    b.kv_t("not_before", a.not_before);
    b.kv_s("subject", &a.subject);
    b.0
}

pub fn oracle_ac_bytes(ac: &AttributeCertificate) -> Vec<u8> {
    let mut b = Bytes::new();
    b.ac_body(ac);
    b.0
}

pub fn oracle_cert_bytes(c: &Cert) -> Vec<u8> {
    let mut b = Bytes::new();
    b.s("cert");
    b.s("attr_certificate");
    match &c.attr_certificate {
        None => b.0.push(0),
        Some(ac) => {
            b.0.push(1);
            b.ac_body(ac);
            b.s("integrity");
            b.kv_s("issuer", ac.integrity.issuer.as_str());
            b.s("tag");
            b.raw(&ac.integrity.tag);
        }
    }
    b.s("is_proxy");
    b.0.push(u8::from(c.is_proxy));
    b.kv_s("issuer_name", &c.issuer_name);
    b.kv_t("not_after", c.not_after);
    b.kv_t("not_before", c.not_before);
    b.s("remaining_delegation_depth");
    b.0.extend(c.remaining_delegation_depth.to_be_bytes());
    b.kv_s("subject_name", &c.subject_name);
    b.0
}

fn anchor_key(anchors: &TrustAnchors, issuer: &EntityId) -> Option<[u8; 32]> {
    anchors.key(issuer).map(|k| *k.as_bytes())
}

/// Recomputes every certificate tag from scratch. Keys: the anchor key of
/// the tag issuer when the parent is absent or self-signed, otherwise the
/// holder key derived from the parent's key and tag.
fn oracle_tags_hold(anchors: &TrustAnchors, c: &[Cert]) -> bool {
    let n = c.len();
    let mut keys = vec![[0u8; 32]; n];
    for i in (0..n).rev() {
        if !c[i].is_proxy && c[i].integrity.issuer.as_str() != c[i].issuer_name {
            return false;
        }
        let key = if i + 1 < n && c[i + 1].subject_name != c[i + 1].issuer_name {
            oracle_holder_key(&keys[i + 1], &c[i + 1].integrity.tag)
        } else if i + 1 == n && c[i].is_proxy {
            return false;
        } else {
            match anchor_key(anchors, &c[i].integrity.issuer) {
                Some(k) => k,
                None => return false,
            }
        };
        if hmac_sha256(&key, &oracle_cert_bytes(&c[i])) != c[i].integrity.tag {
            return false;
        }
        keys[i] = key;
    }
    for cert in c {
        let Some(ac) = &cert.attr_certificate else { continue };
        if ac.integrity.issuer != ac.issuer {
            return false;
        }
        let key = match (0..n).find(|&j| !c[j].is_proxy && c[j].issuer_name == ac.issuer.as_str()) {
            Some(j) => keys[j],
            None => match anchor_key(anchors, &ac.issuer) {
                Some(k) => k,
                None => return false,
            },
        };
        if hmac_sha256(&key, &oracle_ac_bytes(ac)) != ac.integrity.tag {
            return false;
        }
    }
    true
}

/// Every chain rule, highest priority first, each decided by looking at
/// all certificates or all (child, parent) pairs.
pub fn oracle_chain_verdict(anchors: &TrustAnchors, chain: &CertChain, now: Timestamp) -> Option<&'static str> {
    let c = &chain.certs;
    let n = c.len();
    if n == 0 {
        return Some("empty chain");
    }
    let mut broken: Vec<&'static str> = Vec::new();
    for i in 0..n {
        let ok = if i + 1 < n {
            c[i].issuer_name == c[i + 1].subject_name
        } else {
            c[i].issuer_name == c[i].subject_name
        };
        if !ok {
            broken.push("linkage broken");
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            if c[k].is_proxy && !c[j].is_proxy {
                broken.push("misplaced proxy");
            }
        }
    }
    if c.iter().all(|x| x.is_proxy) {
        broken.push("misplaced proxy");
    }
    let root_anchored = EntityId::new(c[n - 1].issuer_name.clone()).is_ok_and(|r| anchors.contains(&r));
    if !root_anchored {
        broken.push("not anchored");
    }
    if broken.is_empty() && !oracle_tags_hold(anchors, c) {
        broken.push("bad integrity");
    }
    for x in c {
        if !(x.not_before < x.not_after && x.not_before <= now && now <= x.not_after) {
            broken.push("outside validity window");
        }
    }
    for i in 0..n.saturating_sub(1) {
        if c[i].is_proxy {
            if c[i].not_before < c[i + 1].not_before || c[i].not_after > c[i + 1].not_after {
                broken.push("window not nested");
            }
            if c[i].remaining_delegation_depth >= c[i + 1].remaining_delegation_depth {
                broken.push("depth not decreasing");
            }
        }
    }
    const ORDER: [&str; 7] = [
        "linkage broken",
        "misplaced proxy",
        "not anchored",
        "bad integrity",
        "outside validity window",
        "window not nested",
        "depth not decreasing",
    ];
    ORDER.into_iter().find(|r| broken.contains(r))
}

#[cfg(test)]
mod self_check {
    #[allow(unused_imports)]
    use super::*;

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            to_hex(&sha256(b"")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            to_hex(&sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            to_hex(&sha256(&[b'a'; 1_000])),
            "41edece42d63e8d9bf515a9ba6932e1c20cbc9f5a5d134645adb5db1b9737ea3"
        );
    }

    #[test]
    fn hmac_rfc4231_case_2() {
        assert_eq!(
            to_hex(&hmac_sha256(b"Jefe", b"what do ya want for nothing?")),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }
}

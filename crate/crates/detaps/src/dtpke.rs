//! Dynamic threshold public-key encryption with verifiable shares.
//!
//! One authority enrolls up to `n3` notaries. Each encryption picks
//! its own receiver set `N` and threshold `t′`, with no re-setup between
//! messages with different thresholds. Any `t′` members of `N` can
//! jointly decrypt by publishing decryption shares; each share is
//! publicly verifiable, and anyone can validate that a ciphertext is
//! well formed for a claimed `(N, t′)`.
//!
//! Two privacy properties shape the construction:
//!
//! - Ciphertext bytes are independent of `N` and `t′`. Every one of
//!   the `n3` key slots carries a header: live slots hold evaluations
//!   of the sharing polynomial, the rest hold fresh randomness, and
//!   the sharing commitments are blinded (Pedersen style), so unused
//!   commitment positions are indistinguishable from live ones.
//! - Finishing a decryption requires a separate combine capability
//!   `ck`: the data key is derived from a pairing value raised to a
//!   secret only `ck` holders know. Shares alone never yield the
//!   plaintext, which is what confines tracing to tracer enclaves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::groupmath::{
    digest32, hash_to_g2, hash_to_scalar, lagrange_at_zero, multi_pairing, read_seq, write_seq,
    ByteReader, DecodeError, Encode, G1Point, G2Point, GtPoint, Scalar,
};

const AEAD_TAG_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum DtpkeError {
    #[error("threshold bound {t_max} outside 1..={n3}")]
    BadBound { t_max: u32, n3: u32 },
    #[error("directory already holds {0} notaries")]
    DirectoryFull(u32),
    #[error("pid {0} is not enrolled")]
    UnknownPid(Pid),
    #[error("threshold {threshold} exceeds receiver set size {set} or bound {bound}")]
    ThresholdTooLarge {
        threshold: u32,
        set: u32,
        bound: u32,
    },
    #[error("only {got} valid shares, need {need}")]
    InsufficientShares { got: u32, need: u32 },
    #[error("ciphertext failed authentication")]
    AuthFailure,
}

/// Pseudo-identity token. Fresh per enrollment, so the same real
/// identity enrolling twice is unlinkable across periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(pub [u8; 16]);

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "…")
    }
}

impl Encode for Pid {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(Pid(r.take(16)?.try_into().unwrap()))
    }
}

/// Public record for one enrolled notary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotaryPublic {
    /// Key slot, 1-based, assigned in enrollment order.
    pub slot: u32,
    pub upk: G1Point,
    pub uvk: G2Point,
}

/// One notary's key material, returned by [`DtpkeAuthority::join`].
#[derive(Debug, Clone)]
pub struct NotaryKeys {
    pub pid: Pid,
    pub usk: Scalar,
    pub upk: G1Point,
    pub uvk: G2Point,
}

/// Public key material: serves encryptors, share verifiers, and
/// validators alike. Everything here is publishable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtpkePublicKey {
    pub n3: u32,
    pub t_max: u32,
    /// Second commitment base `ĥ` with unknown discrete log.
    pub h2: G2Point,
    /// `Z = e(g, ĝ)^κ`; the data key is derived from `Z^s`, so
    /// recovering it from shares additionally requires `κ`.
    pub combine_base: GtPoint,
    pub directory: BTreeMap<Pid, NotaryPublic>,
}

impl DtpkePublicKey {
    pub fn notary(&self, pid: &Pid) -> Option<&NotaryPublic> {
        self.directory.get(pid)
    }

    /// Header base for each slot: the slot owner's `upk`, or `g` for
    /// slots nobody occupies yet.
    pub fn slot_bases(&self) -> Vec<G1Point> {
        let mut bases = vec![G1Point::generator(); self.n3 as usize];
        for rec in self.directory.values() {
            bases[rec.slot as usize - 1] = rec.upk;
        }
        bases
    }

    /// Digest that pins this key bundle, used to bind proofs to it.
    pub fn digest(&self) -> [u8; 32] {
        digest32(b"dtpke/pk", &self.encode())
    }
}

impl Encode for DtpkePublicKey {
    fn write(&self, out: &mut Vec<u8>) {
        self.n3.write(out);
        self.t_max.write(out);
        self.h2.write(out);
        self.combine_base.write(out);
        (self.directory.len() as u32).write(out);
        for (pid, rec) in &self.directory {
            pid.write(out);
            rec.slot.write(out);
            rec.upk.write(out);
            rec.uvk.write(out);
        }
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let n3 = u32::read(r)?;
        let t_max = u32::read(r)?;
        let h2 = G2Point::read(r)?;
        let combine_base = GtPoint::read(r)?;
        let count = u32::read(r)? as usize;
        if count > 4096 {
            return Err(DecodeError::Malformed("directory too large"));
        }
        let mut directory = BTreeMap::new();
        for _ in 0..count {
            let pid = Pid::read(r)?;
            let rec = NotaryPublic {
                slot: u32::read(r)?,
                upk: G1Point::read(r)?,
                uvk: G2Point::read(r)?,
            };
            directory.insert(pid, rec);
        }
        Ok(DtpkePublicKey {
            n3,
            t_max,
            h2,
            combine_base,
            directory,
        })
    }
}

/// The combine capability: `κ` with `Z = e(g, ĝ)^κ` published in the
/// public key. Held by tracer enclaves only.
#[derive(Debug, Clone)]
pub struct CombineKey {
    kappa: Scalar,
    /// `ĝ^κ`, cached so combining costs one pairing.
    g2_kappa: G2Point,
}

/// Enrollment authority. Holds the master secret and hands out slots;
/// dropped (or kept offline) after setup in the larger protocol.
#[derive(Debug)]
pub struct DtpkeAuthority {
    mk: Scalar,
    kappa: Scalar,
    joined: u32,
    public: DtpkePublicKey,
}

/// Creates an authority for up to `n3` notaries supporting any
/// per-encryption threshold in `1..=t_max`.
pub fn dtpke_setup<R: RngCore + CryptoRng>(
    n3: u32,
    t_max: u32,
    rng: &mut R,
) -> Result<DtpkeAuthority, DtpkeError> {
    if t_max == 0 || t_max > n3 {
        return Err(DtpkeError::BadBound { t_max, n3 });
    }
    let mk = Scalar::random(rng);
    let kappa = Scalar::random(rng);
    let public = DtpkePublicKey {
        n3,
        t_max,
        h2: hash_to_g2(b"dtpke/base", b"commitment blinding base v1"),
        combine_base: GtPoint::generator().mul(&kappa),
        directory: BTreeMap::new(),
    };
    Ok(DtpkeAuthority {
        mk,
        kappa,
        joined: 0,
        public,
    })
}

impl DtpkeAuthority {
    /// Enrolls an identity, assigning the next free slot. Enrolling
    /// the same identity again yields an unlinkable fresh pid.
    pub fn join(&mut self, id: &str) -> Result<NotaryKeys, DtpkeError> {
        if self.joined == self.public.n3 {
            return Err(DtpkeError::DirectoryFull(self.joined));
        }
        self.joined += 1;
        let mut input = self.mk.encode();
        (self.joined as u64).write(&mut input);
        input.extend_from_slice(id.as_bytes());
        let usk = hash_to_scalar(b"dtpke/join-usk", &input);
        assert!(!usk.is_zero(), "derived key collided with zero");
        let pid = Pid(digest32(b"dtpke/join-pid", &input)[..16].try_into().unwrap());
        let upk = G1Point::generator().mul(&usk);
        let uvk = G2Point::generator().mul(&usk);
        self.public.directory.insert(
            pid,
            NotaryPublic {
                slot: self.joined,
                upk,
                uvk,
            },
        );
        Ok(NotaryKeys { pid, usk, upk, uvk })
    }

    pub fn public_key(&self) -> DtpkePublicKey {
        self.public.clone()
    }

    pub fn combine_key(&self) -> CombineKey {
        CombineKey {
            kappa: self.kappa,
            g2_kappa: G2Point::generator().mul(&self.kappa),
        }
    }
}

/// Ciphertext. The shape depends only on `(n3, t_max, |message|)`:
/// one KEM header pair per slot and `t_max` sharing commitments,
/// whatever `N` and `t′` were.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DtpkeCiphertext {
    pub kem_headers: Vec<(G1Point, G1Point)>,
    pub vss_commitments: Vec<G2Point>,
    pub body: Vec<u8>,
    pub tag: Vec<u8>,
}

impl DtpkeCiphertext {
    pub fn digest(&self) -> [u8; 32] {
        digest32(b"dtpke/ct", &self.encode())
    }
}

impl Encode for DtpkeCiphertext {
    fn write(&self, out: &mut Vec<u8>) {
        (self.kem_headers.len() as u32).write(out);
        for (h1, h2) in &self.kem_headers {
            h1.write(out);
            h2.write(out);
        }
        write_seq(&self.vss_commitments, out);
        self.body.write(out);
        out.extend_from_slice(&self.tag);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let n = u32::read(r)? as usize;
        if n > 4096 {
            return Err(DecodeError::Malformed("too many KEM headers"));
        }
        let mut kem_headers = Vec::with_capacity(n);
        for _ in 0..n {
            kem_headers.push((G1Point::read(r)?, G1Point::read(r)?));
        }
        let vss_commitments = read_seq(r, 4096)?;
        let body = Vec::<u8>::read(r)?;
        let tag = r.take(AEAD_TAG_LEN)?.to_vec();
        Ok(DtpkeCiphertext {
            kem_headers,
            vss_commitments,
            body,
            tag,
        })
    }
}

/// Per-slot encryption exponents `(y_o, u_o)`, live and dummy alike.
/// Returned to the encryptor so a proof of encryption-randomness
/// knowledge can cover every slot uniformly; never published.
#[derive(Debug, Clone)]
pub struct EncWitness {
    pub slot_exps: Vec<(Scalar, Scalar)>,
}

/// A notary's partial decryption plus the material to verify it:
/// `D = h1^{1/usk}`, `W = h2^{1/usk}`, and a proof that both used the
/// same `usk` behind the notary's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionShare {
    pub pid: Pid,
    pub share_point: G1Point,
    pub blind_point: G1Point,
    pub proof: LinkProof,
}

impl Encode for DecryptionShare {
    fn write(&self, out: &mut Vec<u8>) {
        self.pid.write(out);
        self.share_point.write(out);
        self.blind_point.write(out);
        self.proof.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(DecryptionShare {
            pid: Pid::read(r)?,
            share_point: G1Point::read(r)?,
            blind_point: G1Point::read(r)?,
            proof: LinkProof::read(r)?,
        })
    }
}

/// Proof of a shared exponent across three base/point pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkProof {
    pub commits: [G1Point; 3],
    pub response: Scalar,
}

impl Encode for LinkProof {
    fn write(&self, out: &mut Vec<u8>) {
        for c in &self.commits {
            c.write(out);
        }
        self.response.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(LinkProof {
            commits: [G1Point::read(r)?, G1Point::read(r)?, G1Point::read(r)?],
            response: Scalar::read(r)?,
        })
    }
}

fn link_challenge(
    pid: &Pid,
    ct_digest: &[u8; 32],
    pairs: &[(G1Point, G1Point); 3],
    commits: &[G1Point; 3],
) -> Scalar {
    let mut transcript = pid.encode();
    transcript.extend_from_slice(ct_digest);
    for (base, point) in pairs {
        base.write(&mut transcript);
        point.write(&mut transcript);
    }
    for c in commits {
        c.write(&mut transcript);
    }
    hash_to_scalar(b"dtpke/link", &transcript)
}

/// Evaluates the commitment polynomial at slot `o` by Horner's rule.
fn commitment_at(commitments: &[G2Point], slot: u32) -> G2Point {
    let x = Scalar::from_u64(slot as u64);
    let mut acc = G2Point::identity();
    for c in commitments.iter().rev() {
        acc = acc.mul(&x).add(c);
    }
    acc
}

fn eval_poly(coeffs: &[Scalar], x: &Scalar) -> Scalar {
    let mut acc = Scalar::zero();
    for c in coeffs.iter().rev() {
        acc = acc.mul(x).add(c);
    }
    acc
}

fn ct_binding(headers: &[(G1Point, G1Point)], commitments: &[G2Point]) -> [u8; 32] {
    let mut transcript = Vec::new();
    for (h1, h2) in headers {
        h1.write(&mut transcript);
        h2.write(&mut transcript);
    }
    for c in commitments {
        c.write(&mut transcript);
    }
    digest32(b"dtpke/aad", &transcript)
}

fn dem_key(combine_point: &GtPoint) -> [u8; 32] {
    digest32(b"dtpke/kem", &combine_point.encode())
}

/// Encrypts `msg` so that any `threshold` members of `n_set` (plus a
/// combine-key holder) can recover it. Also returns the per-slot
/// encryption exponents for proof purposes.
pub fn dtpke_encrypt<R: RngCore + CryptoRng>(
    pk: &DtpkePublicKey,
    n_set: &BTreeSet<Pid>,
    threshold: u32,
    msg: &[u8],
    rng: &mut R,
) -> Result<(DtpkeCiphertext, EncWitness), DtpkeError> {
    if threshold == 0 || threshold as usize > n_set.len() || threshold > pk.t_max {
        return Err(DtpkeError::ThresholdTooLarge {
            threshold,
            set: n_set.len() as u32,
            bound: pk.t_max,
        });
    }
    if n_set.len() > pk.n3 as usize {
        return Err(DtpkeError::ThresholdTooLarge {
            threshold,
            set: n_set.len() as u32,
            bound: pk.n3,
        });
    }
    let mut live_slots = BTreeMap::new();
    for pid in n_set {
        let rec = pk.notary(pid).ok_or(DtpkeError::UnknownPid(*pid))?;
        live_slots.insert(rec.slot, rec.upk);
    }

    // Sharing polynomial f (degree t′−1, secret at 0) and a blinding
    // polynomial u at the full degree bound. Commitments blend both,
    // so positions beyond t′−1 look like every other position.
    let f_coeffs: Vec<Scalar> = (0..threshold).map(|_| Scalar::random(rng)).collect();
    let u_coeffs: Vec<Scalar> = (0..pk.t_max).map(|_| Scalar::random(rng)).collect();
    let secret = f_coeffs[0];

    let g2 = G2Point::generator();
    let mut vss_commitments = Vec::with_capacity(pk.t_max as usize);
    for j in 0..pk.t_max as usize {
        let a_j = f_coeffs.get(j).copied().unwrap_or_else(Scalar::zero);
        vss_commitments.push(g2.mul(&a_j).add(&pk.h2.mul(&u_coeffs[j])));
    }

    let bases = pk.slot_bases();
    let mut kem_headers = Vec::with_capacity(pk.n3 as usize);
    let mut slot_exps = Vec::with_capacity(pk.n3 as usize);
    for slot in 1..=pk.n3 {
        let x = Scalar::from_u64(slot as u64);
        let (y, u) = if live_slots.contains_key(&slot) {
            (eval_poly(&f_coeffs, &x), eval_poly(&u_coeffs, &x))
        } else {
            // Vacant or non-member slot: fresh randomness, so headers
            // reveal nothing about which slots are live.
            (Scalar::random(rng), Scalar::random(rng))
        };
        let base = &bases[slot as usize - 1];
        kem_headers.push((base.mul(&y), base.mul(&u)));
        slot_exps.push((y, u));
    }

    let key = dem_key(&pk.combine_base.mul(&secret));
    let cipher = Aes256Gcm::new(key.as_slice().into());
    let aad = ct_binding(&kem_headers, &vss_commitments);
    let mut sealed = cipher
        .encrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload { msg, aad: &aad },
        )
        .expect("AES-GCM encryption cannot fail");
    let tag = sealed.split_off(sealed.len() - AEAD_TAG_LEN);

    Ok((
        DtpkeCiphertext {
            kem_headers,
            vss_commitments,
            body: sealed,
            tag,
        },
        EncWitness { slot_exps },
    ))
}

/// Checks that a ciphertext is well formed for `(n_set, threshold)`:
/// right shape, and every member slot's header pair is consistent
/// with the sharing commitments.
pub fn dtpke_validate(
    pk: &DtpkePublicKey,
    n_set: &BTreeSet<Pid>,
    threshold: u32,
    ct: &DtpkeCiphertext,
) -> bool {
    if threshold == 0
        || threshold as usize > n_set.len()
        || threshold > pk.t_max
        || n_set.len() > pk.n3 as usize
    {
        return false;
    }
    if ct.kem_headers.len() != pk.n3 as usize
        || ct.vss_commitments.len() != pk.t_max as usize
        || ct.tag.len() != AEAD_TAG_LEN
    {
        return false;
    }
    let g2 = G2Point::generator();
    for pid in n_set {
        let rec = match pk.notary(pid) {
            Some(rec) => rec,
            None => return false,
        };
        let (h1, h2) = ct.kem_headers[rec.slot as usize - 1];
        let expected = commitment_at(&ct.vss_commitments, rec.slot);
        // e(h1, ĝ) · e(h2, ĥ) · e(−upk, V̂(slot)) == 1
        let check = multi_pairing(
            &[h1, h2, rec.upk.neg()],
            &[g2, pk.h2, expected],
        );
        if !check.is_identity() {
            return false;
        }
    }
    true
}

/// Produces this notary's decryption share. Well formed even when the
/// notary was not a receiver; such shares simply fail verification.
pub fn dtpke_share_decrypt(
    pk: &DtpkePublicKey,
    keys: &NotaryKeys,
    ct: &DtpkeCiphertext,
) -> Result<DecryptionShare, DtpkeError> {
    let rec = pk.notary(&keys.pid).ok_or(DtpkeError::UnknownPid(keys.pid))?;
    if ct.kem_headers.len() != pk.n3 as usize {
        return Err(DtpkeError::AuthFailure);
    }
    let (h1, h2) = ct.kem_headers[rec.slot as usize - 1];
    let inv = keys.usk.invert().expect("enrollment keys are nonzero");
    let share_point = h1.mul(&inv);
    let blind_point = h2.mul(&inv);

    // Shared-exponent proof for usk across (g → upk, D → h1, W → h2),
    // with a nonce derived from the secret and ciphertext so shares
    // are deterministic per (key, ciphertext). The proof binds to the
    // header/commitment part only: shares neither depend on nor vouch
    // for the body, which the AEAD authenticates at combine time.
    let ct_digest = ct_binding(&ct.kem_headers, &ct.vss_commitments);
    let mut nonce_input = keys.usk.encode();
    nonce_input.extend_from_slice(&ct_digest);
    let k = hash_to_scalar(b"dtpke/link-nonce", &nonce_input);
    let pairs = [
        (G1Point::generator(), keys.upk),
        (share_point, h1),
        (blind_point, h2),
    ];
    let commits = [
        pairs[0].0.mul(&k),
        pairs[1].0.mul(&k),
        pairs[2].0.mul(&k),
    ];
    let c = link_challenge(&keys.pid, &ct_digest, &pairs, &commits);
    let proof = LinkProof {
        commits,
        response: k.add(&c.mul(&keys.usk)),
    };
    Ok(DecryptionShare {
        pid: keys.pid,
        share_point,
        blind_point,
        proof,
    })
}

/// Verifies a decryption share: the exponent link to the notary's
/// published key, and consistency with the sharing commitments. Only
/// shares from actual receivers of `ct` pass.
pub fn dtpke_share_verify(
    pk: &DtpkePublicKey,
    pid: &Pid,
    uvk: &G2Point,
    ct: &DtpkeCiphertext,
    share: &DecryptionShare,
) -> bool {
    let rec = match pk.notary(pid) {
        Some(rec) => rec,
        None => return false,
    };
    if share.pid != *pid
        || rec.uvk != *uvk
        || ct.kem_headers.len() != pk.n3 as usize
        || ct.vss_commitments.len() != pk.t_max as usize
    {
        return false;
    }
    let (h1, h2) = ct.kem_headers[rec.slot as usize - 1];
    let pairs = [
        (G1Point::generator(), rec.upk),
        (share.share_point, h1),
        (share.blind_point, h2),
    ];
    let binding = ct_binding(&ct.kem_headers, &ct.vss_commitments);
    let c = link_challenge(pid, &binding, &pairs, &share.commits());
    for ((base, point), commit) in pairs.iter().zip(share.commits()) {
        if base.mul(&share.proof.response) != commit.add(&point.mul(&c)) {
            return false;
        }
    }
    // e(D, ĝ) · e(W, ĥ) == e(g, V̂(slot)): the unblinded pair opens
    // the commitment polynomial at this slot.
    let expected = commitment_at(&ct.vss_commitments, rec.slot);
    multi_pairing(
        &[
            share.share_point,
            share.blind_point,
            G1Point::generator().neg(),
        ],
        &[G2Point::generator(), pk.h2, expected],
    )
    .is_identity()
}

impl DecryptionShare {
    fn commits(&self) -> [G1Point; 3] {
        self.proof.commits
    }
}

/// Combines verified shares into the plaintext. Invalid, duplicate,
/// and non-member shares are filtered, the `threshold` lowest-pid
/// valid shares are interpolated, and the combine capability finishes
/// key derivation.
pub fn dtpke_combine(
    ck: &CombineKey,
    pk: &DtpkePublicKey,
    n_set: &BTreeSet<Pid>,
    threshold: u32,
    ct: &DtpkeCiphertext,
    shares: &[DecryptionShare],
) -> Result<Vec<u8>, DtpkeError> {
    if threshold == 0 || threshold > pk.t_max {
        return Err(DtpkeError::ThresholdTooLarge {
            threshold,
            set: n_set.len() as u32,
            bound: pk.t_max,
        });
    }
    let mut valid: BTreeMap<Pid, &DecryptionShare> = BTreeMap::new();
    for share in shares {
        if valid.contains_key(&share.pid) || !n_set.contains(&share.pid) {
            continue;
        }
        let uvk = match pk.notary(&share.pid) {
            Some(rec) => rec.uvk,
            None => continue,
        };
        if dtpke_share_verify(pk, &share.pid, &uvk, ct, share) {
            valid.insert(share.pid, share);
        }
    }
    if (valid.len() as u32) < threshold {
        return Err(DtpkeError::InsufficientShares {
            got: valid.len() as u32,
            need: threshold,
        });
    }
    let selected: Vec<&DecryptionShare> = valid.values().take(threshold as usize).copied().collect();
    let xs: Vec<Scalar> = selected
        .iter()
        .map(|s| Scalar::from_u64(pk.notary(&s.pid).unwrap().slot as u64))
        .collect();
    let coeffs = lagrange_at_zero(&xs).expect("slots are distinct and nonzero");
    let mut secret_point = G1Point::identity();
    for (share, coeff) in selected.iter().zip(&coeffs) {
        secret_point = secret_point.add(&share.share_point.mul(coeff));
    }

    // e(g^s, ĝ^κ) = Z^s, the value the encryptor derived the key from.
    let key = dem_key(&crate::groupmath::pairing(&secret_point, &ck.g2_kappa));
    let _ = ck.kappa; // κ itself defines the capability; ĝ^κ is its cache
    let cipher = Aes256Gcm::new(key.as_slice().into());
    let aad = ct_binding(&ct.kem_headers, &ct.vss_commitments);
    let mut sealed = ct.body.clone();
    sealed.extend_from_slice(&ct.tag);
    cipher
        .decrypt(
            Nonce::from_slice(&[0u8; 12]),
            Payload {
                msg: &sealed,
                aad: &aad,
            },
        )
        .map_err(|_| DtpkeError::AuthFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    struct Fixture {
        pk: DtpkePublicKey,
        ck: CombineKey,
        notaries: Vec<NotaryKeys>,
    }

    fn fixture(n3: u32, t_max: u32, seed: u64) -> Fixture {
        let mut r = rng(seed);
        let mut auth = dtpke_setup(n3, t_max, &mut r).unwrap();
        let notaries: Vec<NotaryKeys> = (0..n3)
            .map(|i| auth.join(&format!("notary-{i}")).unwrap())
            .collect();
        Fixture {
            pk: auth.public_key(),
            ck: auth.combine_key(),
            notaries,
        }
    }

    fn pids(notaries: &[NotaryKeys], idx: &[usize]) -> BTreeSet<Pid> {
        idx.iter().map(|&i| notaries[i].pid).collect()
    }

    #[test]
    fn setup_rejects_bad_bounds() {
        let mut r = rng(1);
        assert!(matches!(
            dtpke_setup(5, 0, &mut r),
            Err(DtpkeError::BadBound { .. })
        ));
        assert!(matches!(
            dtpke_setup(5, 6, &mut r),
            Err(DtpkeError::BadBound { .. })
        ));
    }

    #[test]
    fn join_gives_fresh_pids_and_bounded_slots() {
        let mut r = rng(2);
        let mut auth = dtpke_setup(2, 1, &mut r).unwrap();
        let a = auth.join("same-identity").unwrap();
        let b = auth.join("same-identity").unwrap();
        assert_ne!(a.pid, b.pid);
        assert_ne!(a.usk.encode(), b.usk.encode());
        assert!(matches!(
            auth.join("overflow"),
            Err(DtpkeError::DirectoryFull(2))
        ));
        let pk = auth.public_key();
        assert_eq!(pk.notary(&a.pid).unwrap().slot, 1);
        assert_eq!(pk.notary(&b.pid).unwrap().slot, 2);
    }

    #[test]
    fn degenerate_single_receiver_round_trip() {
        let fx = fixture(1, 1, 3);
        let mut r = rng(4);
        let n_set = pids(&fx.notaries, &[0]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 1, b"solo", &mut r).unwrap();
        assert!(dtpke_validate(&fx.pk, &n_set, 1, &ct));
        let share = dtpke_share_decrypt(&fx.pk, &fx.notaries[0], &ct).unwrap();
        let pt = dtpke_combine(&fx.ck, &fx.pk, &n_set, 1, &ct, &[share]).unwrap();
        assert_eq!(pt, b"solo");
    }

    #[test]
    fn encrypt_rejects_bad_thresholds_and_unknown_pids() {
        let fx = fixture(4, 3, 5);
        let mut r = rng(6);
        let n_set = pids(&fx.notaries, &[0, 1]);
        assert!(matches!(
            dtpke_encrypt(&fx.pk, &n_set, 3, b"m", &mut r),
            Err(DtpkeError::ThresholdTooLarge { .. })
        ));
        assert!(matches!(
            dtpke_encrypt(&fx.pk, &n_set, 0, b"m", &mut r),
            Err(DtpkeError::ThresholdTooLarge { .. })
        ));
        let mut with_stranger = n_set.clone();
        with_stranger.insert(Pid([9u8; 16]));
        assert!(matches!(
            dtpke_encrypt(&fx.pk, &with_stranger, 2, b"m", &mut r),
            Err(DtpkeError::UnknownPid(_))
        ));
    }

    #[test]
    fn exhaustive_subsets_match_the_threshold_oracle() {
        // n3 = 5, N = all five, t′ = 3: a share subset recovers the
        // plaintext exactly when it has at least 3 members.
        let fx = fixture(5, 5, 7);
        let mut r = rng(8);
        let n_set = pids(&fx.notaries, &[0, 1, 2, 3, 4]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 3, b"quorum gated", &mut r).unwrap();
        let shares: Vec<DecryptionShare> = fx
            .notaries
            .iter()
            .map(|nk| dtpke_share_decrypt(&fx.pk, nk, &ct).unwrap())
            .collect();
        for mask in 0u32..32 {
            let subset: Vec<DecryptionShare> = (0..5)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| shares[i as usize].clone())
                .collect();
            let out = dtpke_combine(&fx.ck, &fx.pk, &n_set, 3, &ct, &subset);
            if subset.len() >= 3 {
                assert_eq!(out.unwrap(), b"quorum gated", "mask {mask:05b}");
            } else {
                assert!(
                    matches!(out, Err(DtpkeError::InsufficientShares { .. })),
                    "mask {mask:05b}"
                );
            }
        }
    }

    #[test]
    fn dynamic_thresholds_reuse_one_setup() {
        let fx = fixture(6, 5, 9);
        let mut r = rng(10);
        let everyone = pids(&fx.notaries, &[0, 1, 2, 3, 4, 5]);
        for threshold in [2u32, 5] {
            let (ct, _) =
                dtpke_encrypt(&fx.pk, &everyone, threshold, b"re-keyed never", &mut r).unwrap();
            let shares: Vec<DecryptionShare> = fx.notaries[..threshold as usize]
                .iter()
                .map(|nk| dtpke_share_decrypt(&fx.pk, nk, &ct).unwrap())
                .collect();
            let pt = dtpke_combine(&fx.ck, &fx.pk, &everyone, threshold, &ct, &shares).unwrap();
            assert_eq!(pt, b"re-keyed never");
        }
    }

    #[test]
    fn validate_catches_header_and_commitment_tampering() {
        let fx = fixture(4, 3, 11);
        let mut r = rng(12);
        let n_set = pids(&fx.notaries, &[0, 2, 3]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 2, b"m", &mut r).unwrap();
        assert!(dtpke_validate(&fx.pk, &n_set, 2, &ct));

        let mut bad_header = ct.clone();
        let slot = fx.pk.notary(&fx.notaries[0].pid).unwrap().slot as usize - 1;
        bad_header.kem_headers[slot].0 = G1Point::random(&mut r);
        assert!(!dtpke_validate(&fx.pk, &n_set, 2, &bad_header));

        let mut bad_commit = ct.clone();
        bad_commit.vss_commitments[1] = G2Point::random(&mut r);
        assert!(!dtpke_validate(&fx.pk, &n_set, 2, &bad_commit));

        // Claiming a different receiver set fails: that pid's slot
        // holds dummy randomness.
        let other_set = pids(&fx.notaries, &[0, 1, 3]);
        assert!(!dtpke_validate(&fx.pk, &other_set, 2, &ct));

        // Thresholds outside the valid range are rejected outright.
        assert!(!dtpke_validate(&fx.pk, &n_set, 4, &ct));
        assert!(!dtpke_validate(&fx.pk, &n_set, 0, &ct));

        // Body tampering is not validate's job; combine catches it.
        let mut bad_body = ct;
        bad_body.body[0] ^= 1;
        assert!(dtpke_validate(&fx.pk, &n_set, 2, &bad_body));
    }

    #[test]
    fn share_verify_accepts_members_and_rejects_everything_else() {
        let fx = fixture(4, 3, 13);
        let mut r = rng(14);
        let n_set = pids(&fx.notaries, &[0, 1]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 2, b"m", &mut r).unwrap();

        let good = dtpke_share_decrypt(&fx.pk, &fx.notaries[0], &ct).unwrap();
        assert!(dtpke_share_verify(
            &fx.pk,
            &fx.notaries[0].pid,
            &fx.notaries[0].uvk,
            &ct,
            &good
        ));

        // A non-member's share is well formed but must not verify:
        // their slot header is dummy randomness.
        let outsider = dtpke_share_decrypt(&fx.pk, &fx.notaries[2], &ct).unwrap();
        assert!(!dtpke_share_verify(
            &fx.pk,
            &fx.notaries[2].pid,
            &fx.notaries[2].uvk,
            &ct,
            &outsider
        ));

        let mut wrong_point = good.clone();
        wrong_point.share_point = G1Point::random(&mut r);
        assert!(!dtpke_share_verify(
            &fx.pk,
            &fx.notaries[0].pid,
            &fx.notaries[0].uvk,
            &ct,
            &wrong_point
        ));

        let mut wrong_proof = good.clone();
        wrong_proof.proof.response = wrong_proof.proof.response.add(&Scalar::one());
        assert!(!dtpke_share_verify(
            &fx.pk,
            &fx.notaries[0].pid,
            &fx.notaries[0].uvk,
            &ct,
            &wrong_proof
        ));

        // uvk must match the directory record.
        assert!(!dtpke_share_verify(
            &fx.pk,
            &fx.notaries[0].pid,
            &fx.notaries[1].uvk,
            &ct,
            &good
        ));

        // Unknown pid.
        assert!(!dtpke_share_verify(
            &fx.pk,
            &Pid([7u8; 16]),
            &fx.notaries[0].uvk,
            &ct,
            &good
        ));
    }

    #[test]
    fn combine_filters_junk_and_enforces_the_threshold() {
        let fx = fixture(5, 4, 15);
        let mut r = rng(16);
        let n_set = pids(&fx.notaries, &[0, 1, 2, 3]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 3, b"filtered", &mut r).unwrap();
        let mut shares: Vec<DecryptionShare> = fx.notaries[..3]
            .iter()
            .map(|nk| dtpke_share_decrypt(&fx.pk, nk, &ct).unwrap())
            .collect();

        // Duplicates, a tampered copy, and a non-member share all ride
        // along without harming the honest quorum.
        let mut tampered = shares[0].clone();
        tampered.share_point = G1Point::random(&mut r);
        shares.push(tampered);
        shares.push(shares[1].clone());
        shares.push(dtpke_share_decrypt(&fx.pk, &fx.notaries[4], &ct).unwrap());
        let pt = dtpke_combine(&fx.ck, &fx.pk, &n_set, 3, &ct, &shares).unwrap();
        assert_eq!(pt, b"filtered");

        // Two valid shares cannot meet threshold 3, even padded with
        // junk.
        let mut short: Vec<DecryptionShare> = shares[..2].to_vec();
        let mut bad = shares[0].clone();
        bad.blind_point = G1Point::random(&mut r);
        short.push(bad);
        assert!(matches!(
            dtpke_combine(&fx.ck, &fx.pk, &n_set, 3, &ct, &short),
            Err(DtpkeError::InsufficientShares { got: 2, need: 3 })
        ));
    }

    #[test]
    fn combine_authenticates_the_body() {
        let fx = fixture(3, 2, 17);
        let mut r = rng(18);
        let n_set = pids(&fx.notaries, &[0, 1, 2]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 2, b"sealed", &mut r).unwrap();
        let shares: Vec<DecryptionShare> = fx.notaries[..2]
            .iter()
            .map(|nk| dtpke_share_decrypt(&fx.pk, nk, &ct).unwrap())
            .collect();

        let mut bad_body = ct.clone();
        bad_body.body[0] ^= 1;
        assert!(matches!(
            dtpke_combine(&fx.ck, &fx.pk, &n_set, 2, &bad_body, &shares),
            // Shares verify against untouched headers, but the AEAD
            // catches the flipped body.
            Err(DtpkeError::AuthFailure)
        ));

        let mut bad_tag = ct.clone();
        bad_tag.tag[15] ^= 0x80;
        assert!(matches!(
            dtpke_combine(&fx.ck, &fx.pk, &n_set, 2, &bad_tag, &shares),
            Err(DtpkeError::AuthFailure)
        ));

        // A different authority's combine key cannot finish.
        let other = fixture(3, 2, 99);
        assert!(matches!(
            dtpke_combine(&other.ck, &fx.pk, &n_set, 2, &ct, &shares),
            Err(DtpkeError::AuthFailure)
        ));
    }

    #[test]
    fn ciphertext_length_is_independent_of_receivers_and_threshold() {
        let fx = fixture(5, 5, 19);
        let mut r = rng(20);
        let msg = [7u8; 64];
        let mut lengths = BTreeSet::new();
        for (idx, threshold) in [(vec![0usize], 1u32), (vec![0, 1, 2, 3, 4], 3), (vec![1, 4], 2)] {
            let n_set = pids(&fx.notaries, &idx);
            let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, threshold, &msg, &mut r).unwrap();
            lengths.insert(ct.encode().len());
        }
        assert_eq!(lengths.len(), 1, "lengths varied: {lengths:?}");
    }

    #[test]
    fn ciphertext_and_share_encodings_round_trip() {
        let fx = fixture(3, 2, 21);
        let mut r = rng(22);
        let n_set = pids(&fx.notaries, &[0, 1]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 2, b"wire", &mut r).unwrap();
        assert_eq!(DtpkeCiphertext::decode(&ct.encode()).unwrap(), ct);
        let share = dtpke_share_decrypt(&fx.pk, &fx.notaries[1], &ct).unwrap();
        assert_eq!(DecryptionShare::decode(&share.encode()).unwrap(), share);
        let pk_back = DtpkePublicKey::decode(&fx.pk.encode()).unwrap();
        assert_eq!(pk_back, fx.pk);
    }

    #[test]
    fn randomized_share_tamper_sweep_never_verifies() {
        let fx = fixture(2, 2, 23);
        let mut r = rng(24);
        let n_set = pids(&fx.notaries, &[0, 1]);
        let (ct, _) = dtpke_encrypt(&fx.pk, &n_set, 2, b"m", &mut r).unwrap();
        let share = dtpke_share_decrypt(&fx.pk, &fx.notaries[0], &ct).unwrap();
        let bytes = share.encode();
        let mut hits = 0u32;
        for _ in 0..300 {
            let bit = (r.next_u32() as usize) % (bytes.len() * 8);
            let mut mutated = bytes.clone();
            mutated[bit / 8] ^= 1 << (bit % 8);
            if mutated == bytes {
                continue;
            }
            if let Ok(s) = DecryptionShare::decode(&mutated) {
                if dtpke_share_verify(&fx.pk, &fx.notaries[0].pid, &fx.notaries[0].uvk, &ct, &s) {
                    hits += 1;
                }
            }
        }
        assert_eq!(hits, 0);
    }
}

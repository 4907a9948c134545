//! The five protocol operations: system setup, signing, epoch-batched
//! combining, public verification, and notary-gated tracing.
//!
//! Signers never publish signature shares. Each share travels
//! encrypted to a combiner enclave, which batches per epoch, merges
//! with shares retained from earlier epochs, and emits a full
//! signature once a quorum is covered. A published signature hides
//! both the signing quorum and the notary set that can wake a trace;
//! its pieces are a padded threshold ciphertext, a keyword index, a
//! well-formedness proof, and the combiner's outer signature. Tracing
//! reverses the pipeline inside a tracer enclave fed by notary
//! responses, and releases nothing but a sealed signer set.

mod enclave;

pub use enclave::{BoundaryLog, CombinerEnclave, TracerEnclave, RETAIN_EPOCHS};

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ats::{
    ats_keygen, ats_sign, canonical_quorum, share_size_bound, AtsError, AtsShare, AtsSignature,
    AtsSignerKey,
};
use crate::dtpke::{
    dtpke_setup, dtpke_share_decrypt, DtpkeCiphertext, DtpkeError, DtpkePublicKey, Pid,
};
use crate::groupmath::{
    digest32, write_seq, ByteReader, DecodeError, Encode, G1Point, GtPoint, Scalar,
};
use crate::kase::{
    kase_extract, kase_keygen, kase_setup, kase_trapdoor, AggregateKey, Gid, KaseError, KaseIndex,
    KaseMasterPublic, KaseParams, Trapdoor,
};
use crate::nizk::{verify_combine, CombineContext, CombineProof, CombineStatement, NizkError};
use crate::primitives::{
    com_commit, keygen, pke_encrypt, sig_verify, Commitment, SchemeId, SchnorrSig,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid system parameters: {0}")]
    BadParams(&'static str),
    #[error(transparent)]
    Ats(#[from] AtsError),
    #[error(transparent)]
    Dtpke(#[from] DtpkeError),
    #[error(transparent)]
    Kase(#[from] KaseError),
    #[error(transparent)]
    Nizk(#[from] NizkError),
    #[error("combiner index {0} out of range")]
    NoSuchCombiner(u32),
    #[error("receiver {0} is not an enrolled notary")]
    UnknownReceiver(Pid),
    #[error("receiver set size {got} outside [1, {max}]")]
    BadReceiverSet { got: u32, max: u32 },
    #[error("signature rejected")]
    SignatureInvalid,
    #[error("tracing failed")]
    TraceFailed,
}

/// System dimensions fixed at setup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    /// Number of signers.
    pub n: u32,
    /// Number of combiner enclaves.
    pub n1: u32,
    /// Number of tracer enclaves.
    pub n2: u32,
    /// Number of notaries.
    pub n3: u32,
    /// Signing threshold: every quorum has exactly `t` members.
    pub t: u32,
    /// Keyword slots available for group labels.
    pub group_capacity: u32,
    /// Group labels registered at setup, one keyword slot each.
    pub groups: Vec<String>,
}

impl SystemParams {
    fn validate(&self) -> Result<(), ProtocolError> {
        if self.t == 0 || self.t > self.n {
            return Err(ProtocolError::BadParams(
                "signing threshold must lie in [1, n]",
            ));
        }
        if self.n1 == 0 || self.n2 == 0 || self.n3 == 0 {
            return Err(ProtocolError::BadParams(
                "need at least one combiner, tracer, and notary",
            ));
        }
        if self.groups.is_empty() {
            return Err(ProtocolError::BadParams("at least one group is required"));
        }
        if self.groups.len() as u32 > self.group_capacity {
            return Err(ProtocolError::BadParams(
                "more groups than keyword slots",
            ));
        }
        let mut seen = BTreeSet::new();
        if !self.groups.iter().all(|g| seen.insert(g)) {
            return Err(ProtocolError::BadParams("group labels must be distinct"));
        }
        Ok(())
    }
}

/// Everything verifiers and chain participants hold. Publishable.
#[derive(Debug, Clone)]
pub struct PublicKeys {
    pub params: SystemParams,
    /// Commitment to the signer verification-key bundle; the bundle
    /// itself stays inside enclaves so the public cannot run the
    /// quorum-revealing operations.
    pub com_pk: Commitment,
    pub dtpke_pk: DtpkePublicKey,
    /// Per-combiner keys for the outer signature on published
    /// signatures.
    pub combiner_sig_keys: Vec<G1Point>,
    /// Per-combiner keys signers encrypt their shares to.
    pub combiner_enc_keys: Vec<G1Point>,
    /// Per-combiner enclave attestation keys.
    pub attestation_keys: Vec<G1Point>,
    /// Per-tracer keys notaries encrypt their responses to.
    pub tracer_enc_keys: Vec<G1Point>,
    pub kase_params: KaseParams,
    pub kase_mpk: KaseMasterPublic,
    /// Keyword slot assigned to each registered group label.
    pub group_slots: BTreeMap<String, u32>,
}

/// One notary: enrollment keys plus the aggregate search key that
/// lets them build trapdoors for their own pseudo-identity over every
/// registered group.
#[derive(Debug, Clone)]
pub struct NotaryAgent {
    pub keys: crate::dtpke::NotaryKeys,
    pub aggregate_key: AggregateKey,
}

/// Full output of setup. Secrets live inside the enclave values and
/// the per-party key material; the sharing authority and the keyword
/// master secret are dropped before this is returned.
pub struct SystemKeys {
    pub public: PublicKeys,
    pub signer_keys: Vec<AtsSignerKey>,
    pub combiners: Vec<CombinerEnclave>,
    pub tracers: Vec<TracerEnclave>,
    pub notaries: Vec<NotaryAgent>,
}

/// A published signature. Its byte length depends only on the system
/// dimensions, never on the quorum or the chosen notary set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetapsSignature {
    /// Threshold ciphertext hiding the quorum-revealing signature.
    pub sigma_bar: DtpkeCiphertext,
    /// Keyword index notaries search to discover they are needed.
    pub index: KaseIndex,
    /// Well-formedness proof tying everything together.
    pub proof: CombineProof,
    /// The combiner's outer signature over all of the above.
    pub eta: SchnorrSig,
}

impl Encode for DetapsSignature {
    fn write(&self, out: &mut Vec<u8>) {
        self.sigma_bar.write(out);
        self.index.write(out);
        self.proof.write(out);
        self.eta.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(DetapsSignature {
            sigma_bar: DtpkeCiphertext::read(r)?,
            index: KaseIndex::read(r)?,
            proof: CombineProof::read(r)?,
            eta: SchnorrSig::read(r)?,
        })
    }
}

impl DetapsSignature {
    pub fn digest(&self) -> [u8; 32] {
        digest32(b"protocol/sig", &self.encode())
    }
}

/// One completed signature leaving a combiner enclave.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombineOutput {
    pub gid: Gid,
    pub message: Vec<u8>,
    pub signature: DetapsSignature,
}

impl Encode for CombineOutput {
    fn write(&self, out: &mut Vec<u8>) {
        self.gid.write(out);
        self.message.write(out);
        self.signature.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(CombineOutput {
            gid: Gid::read(r)?,
            message: Vec::<u8>::read(r)?,
            signature: DetapsSignature::read(r)?,
        })
    }
}

/// Derives the pseudonymous group id for a label in one rotation
/// period. Unlinkable across periods without the label.
pub fn derive_gid(label: &str, period: u64) -> Gid {
    let mut input = Vec::new();
    input.extend_from_slice(label.as_bytes());
    input.extend_from_slice(&period.to_be_bytes());
    Gid(digest32(b"protocol/gid", &input))
}

/// Generates the whole system: signer keys, the key commitment,
/// notary enrollment, keyword parameters, and one enclave per
/// combiner and tracer. The sharing authority and the keyword master
/// secret are dropped here.
pub fn setup<R: RngCore + CryptoRng>(
    params: &SystemParams,
    rng: &mut R,
) -> Result<SystemKeys, ProtocolError> {
    params.validate()?;

    let (ats_pk, signer_keys) = ats_keygen(params.n, params.t, rng)?;
    let pk_bytes = ats_pk.encode();
    let r_pk = Scalar::random(rng);
    let com_pk = com_commit(&pk_bytes, &r_pk);

    let mut authority = dtpke_setup(params.n3, params.n3, rng)?;
    let mut notary_keys = Vec::with_capacity(params.n3 as usize);
    for i in 1..=params.n3 {
        notary_keys.push(authority.join(&format!("notary-{i}"))?);
    }
    let dtpke_pk = authority.public_key();
    let combine_key = authority.combine_key();
    drop(authority);

    let kase_params = kase_setup(params.group_capacity, rng)?;
    let (kase_msk, kase_mpk) = kase_keygen(rng);
    let mut group_slots = BTreeMap::new();
    for (i, label) in params.groups.iter().enumerate() {
        group_slots.insert(label.clone(), i as u32 + 1);
    }
    let scope: BTreeSet<u32> = group_slots.values().copied().collect();
    let aggregate_key = kase_extract(&kase_params, &kase_msk, &scope)?;
    drop(kase_msk);

    let mut combiner_sig = Vec::new();
    let mut combiner_enc = Vec::new();
    let mut attestation = Vec::new();
    for _ in 0..params.n1 {
        combiner_sig.push(keygen(SchemeId::Sig, None, rng));
        combiner_enc.push(keygen(SchemeId::Pke, None, rng));
        attestation.push(keygen(SchemeId::Sig, None, rng));
    }
    let tracer_enc: Vec<_> = (0..params.n2)
        .map(|_| keygen(SchemeId::Pke, None, rng))
        .collect();

    let public = PublicKeys {
        params: params.clone(),
        com_pk,
        dtpke_pk,
        combiner_sig_keys: combiner_sig.iter().map(|k| k.public).collect(),
        combiner_enc_keys: combiner_enc.iter().map(|k| k.public).collect(),
        attestation_keys: attestation.iter().map(|k| k.public).collect(),
        tracer_enc_keys: tracer_enc.iter().map(|k| k.public).collect(),
        kase_params,
        kase_mpk,
        group_slots,
    };

    let combiners = (0..params.n1 as usize)
        .map(|j| {
            CombinerEnclave::new(
                j as u32,
                public.clone(),
                ats_pk.clone(),
                r_pk,
                combiner_enc[j].secret,
                combiner_sig[j].secret,
                attestation[j].secret,
                ChaCha20Rng::from_seed(rng.gen()),
            )
        })
        .collect();
    let tracers = (0..params.n2 as usize)
        .map(|j| {
            TracerEnclave::new(
                j as u32,
                public.clone(),
                ats_pk.clone(),
                combine_key.clone(),
                tracer_enc[j].secret,
                ChaCha20Rng::from_seed(rng.gen()),
            )
        })
        .collect();
    let notaries = notary_keys
        .into_iter()
        .map(|keys| NotaryAgent {
            keys,
            aggregate_key: aggregate_key.clone(),
        })
        .collect();

    Ok(SystemKeys {
        public,
        signer_keys,
        combiners,
        tracers,
        notaries,
    })
}

/// A signer's contribution: one signature share over `message` for
/// quorum `quorum`, with the notary set `receivers` chosen now, all
/// encrypted to combiner `combiner`. The resulting bytes are what the
/// signer submits on chain; their length depends only on the system
/// dimensions and the message length.
pub fn sign<R: RngCore + CryptoRng>(
    signer: &AtsSignerKey,
    public: &PublicKeys,
    message: &[u8],
    quorum: &BTreeSet<u32>,
    receivers: &BTreeSet<Pid>,
    gid: &Gid,
    combiner: u32,
    rng: &mut R,
) -> Result<Vec<u8>, ProtocolError> {
    let enc_pk = public
        .combiner_enc_keys
        .get(combiner as usize)
        .ok_or(ProtocolError::NoSuchCombiner(combiner))?;
    if receivers.is_empty() || receivers.len() > public.params.n3 as usize {
        return Err(ProtocolError::BadReceiverSet {
            got: receivers.len() as u32,
            max: public.params.n3,
        });
    }
    for pid in receivers {
        if public.dtpke_pk.notary(pid).is_none() {
            return Err(ProtocolError::UnknownReceiver(*pid));
        }
    }
    let share = ats_sign(signer, message, quorum)?;
    let payload = share_payload(public, message, &share, receivers, gid);
    Ok(pke_encrypt(enc_pk, &payload, rng).encode())
}

/// Parsed form of a share payload after enclave decryption.
pub(crate) struct ParsedShare {
    pub message: Vec<u8>,
    pub share: AtsShare,
    pub receivers: BTreeSet<Pid>,
    pub gid: Gid,
}

/// Fixed-layout plaintext under the share encryption: the message,
/// the share padded to its size bound, the receiver set padded to
/// `n3` entries, and the group id. Constant length for a given
/// message length, so ciphertext sizes carry no quorum or receiver
/// signal.
fn share_payload(
    public: &PublicKeys,
    message: &[u8],
    share: &AtsShare,
    receivers: &BTreeSet<Pid>,
    gid: &Gid,
) -> Vec<u8> {
    let mut out = Vec::new();
    (message.len() as u32).write(&mut out);
    out.extend_from_slice(message);
    let mut share_bytes = share.encode();
    let bound = share_size_bound(public.params.n);
    debug_assert!(share_bytes.len() <= bound);
    share_bytes.resize(bound, 0);
    out.extend_from_slice(&share_bytes);
    (receivers.len() as u32).write(&mut out);
    for pid in receivers {
        pid.write(&mut out);
    }
    for _ in receivers.len()..public.params.n3 as usize {
        out.extend_from_slice(&[0u8; 16]);
    }
    gid.write(&mut out);
    out
}

pub(crate) fn parse_share_payload(payload: &[u8], n: u32, n3: u32) -> Option<ParsedShare> {
    let mut r = ByteReader::new(payload);
    let message = Vec::<u8>::read(&mut r).ok()?;
    let region = r.take(share_size_bound(n)).ok()?;
    let mut sr = ByteReader::new(region);
    let share = AtsShare::read(&mut sr).ok()?;
    let padding = sr.take(sr.remaining()).ok()?;
    if padding.iter().any(|&b| b != 0) {
        return None;
    }
    let count = u32::read(&mut r).ok()? as usize;
    if count == 0 || count > n3 as usize {
        return None;
    }
    let mut receivers = BTreeSet::new();
    let mut prev: Option<Pid> = None;
    for i in 0..n3 as usize {
        let pid = Pid::read(&mut r).ok()?;
        if i < count {
            if prev.is_some_and(|p| p >= pid) {
                return None;
            }
            prev = Some(pid);
            receivers.insert(pid);
        } else if pid != Pid([0u8; 16]) {
            return None;
        }
    }
    let gid = Gid::read(&mut r).ok()?;
    r.finish().ok()?;
    Some(ParsedShare {
        message,
        share,
        receivers,
        gid,
    })
}

pub(crate) fn entries_digest(entries: &[GtPoint]) -> [u8; 32] {
    let mut bytes = Vec::new();
    write_seq(entries, &mut bytes);
    digest32(b"protocol/entries", &bytes)
}

/// What the combiner's outer signature `eta` covers.
pub(crate) fn eta_payload(
    message: &[u8],
    gid: &Gid,
    sigma_bar: &DtpkeCiphertext,
    index: &KaseIndex,
    proof: &CombineProof,
) -> Vec<u8> {
    let mut bytes = Vec::new();
    (message.len() as u32).write(&mut bytes);
    bytes.extend_from_slice(message);
    gid.write(&mut bytes);
    sigma_bar.write(&mut bytes);
    index.write(&mut bytes);
    proof.write(&mut bytes);
    digest32(b"protocol/eta", &bytes).to_vec()
}

pub(crate) fn build_statement(
    public: &PublicKeys,
    message: &[u8],
    gid: &Gid,
    sigma_bar: &DtpkeCiphertext,
    index: &KaseIndex,
) -> CombineStatement {
    CombineStatement {
        threshold_bound: public.params.n3,
        com_pk: public.com_pk,
        ek_digest: public.dtpke_pk.digest(),
        mpk: public.kase_mpk.clone(),
        message: message.to_vec(),
        sigma_bar_digest: sigma_bar.digest(),
        gid: *gid,
        c1: index.c1,
        c2: index.c2,
        entries_digest: entries_digest(&index.entries),
    }
}

pub(crate) fn build_context(
    public: &PublicKeys,
    sigma_bar: &DtpkeCiphertext,
    slot: u32,
    attestation_pk: G1Point,
) -> Result<CombineContext, KaseError> {
    Ok(CombineContext {
        slot_bases: public.dtpke_pk.slot_bases(),
        headers: sigma_bar.kem_headers.clone(),
        index_base: public.kase_params.index_base(&public.kase_mpk, slot)?,
        attestation_pk,
    })
}

/// Public verification. `slot` is the keyword slot registered on
/// chain for `gid`; the proof inside the signature binds the index to
/// that slot. Tries each combiner's key pair, cheapest check first.
pub fn verify(
    public: &PublicKeys,
    message: &[u8],
    gid: &Gid,
    slot: u32,
    sig: &DetapsSignature,
) -> bool {
    let n3 = public.params.n3 as usize;
    if sig.sigma_bar.kem_headers.len() != n3 || sig.index.entries.len() != n3 {
        return false;
    }
    let statement = build_statement(public, message, gid, &sig.sigma_bar, &sig.index);
    let payload = eta_payload(message, gid, &sig.sigma_bar, &sig.index, &sig.proof);
    for j in 0..public.params.n1 as usize {
        if !sig_verify(&public.combiner_sig_keys[j], &payload, &sig.eta) {
            continue;
        }
        let Ok(context) =
            build_context(public, &sig.sigma_bar, slot, public.attestation_keys[j])
        else {
            return false;
        };
        if verify_combine(&statement, &context, &sig.proof) {
            return true;
        }
    }
    false
}

impl NotaryAgent {
    pub fn pid(&self) -> Pid {
        self.keys.pid
    }

    /// Search trapdoor for this notary's own pseudo-identity over all
    /// registered groups.
    pub fn trapdoor(&self) -> Trapdoor {
        kase_trapdoor(&self.aggregate_key, &self.keys.pid)
    }

    /// Responds to a signature that named this notary: verifies it,
    /// produces the decryption share, and encrypts the response to
    /// the tracer. Refuses entirely if the signature does not verify.
    pub fn respond<R: RngCore + CryptoRng>(
        &self,
        public: &PublicKeys,
        message: &[u8],
        gid: &Gid,
        slot: u32,
        sig: &DetapsSignature,
        tracer_enc_pk: &G1Point,
        rng: &mut R,
    ) -> Result<Vec<u8>, ProtocolError> {
        if !verify(public, message, gid, slot, sig) {
            return Err(ProtocolError::SignatureInvalid);
        }
        let share = dtpke_share_decrypt(&public.dtpke_pk, &self.keys, &sig.sigma_bar)?;
        let mut payload = Vec::new();
        sig.digest().write(&mut payload);
        self.keys.pid.write(&mut payload);
        self.keys.uvk.write(&mut payload);
        share.write(&mut payload);
        Ok(pke_encrypt(tracer_enc_pk, &payload, rng).encode())
    }
}

/// Canonical byte form of a traced signer set, zero-padded to the
/// maximum quorum encoding so sealed trace outputs have one length.
pub fn padded_signer_set(signers: &BTreeSet<u32>, n: u32) -> Vec<u8> {
    let mut bytes = canonical_quorum(signers);
    bytes.resize(4 + 4 * n as usize, 0);
    bytes
}

/// Inverse of [`padded_signer_set`]: used by the trace target after
/// unsealing.
pub fn unpad_signer_set(bytes: &[u8], n: u32) -> Option<BTreeSet<u32>> {
    if bytes.len() != 4 + 4 * n as usize {
        return None;
    }
    let mut r = ByteReader::new(bytes);
    let count = u32::read(&mut r).ok()? as usize;
    if count > n as usize {
        return None;
    }
    let mut set = BTreeSet::new();
    let mut prev = 0u32;
    for _ in 0..count {
        let s = u32::read(&mut r).ok()?;
        if s <= prev {
            return None;
        }
        prev = s;
        set.insert(s);
    }
    let rest = r.take(r.remaining()).ok()?;
    if rest.iter().any(|&b| b != 0) {
        return None;
    }
    Some(set)
}

/// Strips the zero padding a combiner added around the inner
/// threshold signature.
pub(crate) fn unpad_signature(padded: &[u8]) -> Option<AtsSignature> {
    let mut r = ByteReader::new(padded);
    let sig = AtsSignature::read(&mut r).ok()?;
    let rest = r.take(r.remaining()).ok()?;
    if rest.iter().any(|&b| b != 0) {
        return None;
    }
    Some(sig)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A small but fully populated system shared by protocol tests:
    /// 4 signers with threshold 3, 2 combiners, 1 tracer, 5 notaries,
    /// and 2 registered groups.
    pub(crate) fn small_system(seed: u64) -> SystemKeys {
        let params = SystemParams {
            n: 4,
            n1: 2,
            n2: 1,
            n3: 5,
            t: 3,
            group_capacity: 3,
            groups: vec!["alpha".into(), "beta".into()],
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        setup(&params, &mut rng).unwrap()
    }

    pub(crate) fn gid_slots(public: &PublicKeys, period: u64) -> BTreeMap<Gid, u32> {
        public
            .group_slots
            .iter()
            .map(|(label, &slot)| (derive_gid(label, period), slot))
            .collect()
    }

    /// Signs `message` for every quorum member and hands the
    /// ciphertext batch to the chosen combiner.
    pub(crate) fn sign_batch(
        keys: &SystemKeys,
        message: &[u8],
        quorum: &BTreeSet<u32>,
        receivers: &BTreeSet<Pid>,
        gid: &Gid,
        combiner: u32,
        rng: &mut ChaCha20Rng,
    ) -> Vec<Vec<u8>> {
        quorum
            .iter()
            .map(|&s| {
                sign(
                    &keys.signer_keys[s as usize - 1],
                    &keys.public,
                    message,
                    quorum,
                    receivers,
                    gid,
                    combiner,
                    rng,
                )
                .unwrap()
            })
            .collect()
    }

    pub(crate) fn pids(keys: &SystemKeys, idx: &[usize]) -> BTreeSet<Pid> {
        idx.iter().map(|&i| keys.notaries[i].pid()).collect()
    }
}

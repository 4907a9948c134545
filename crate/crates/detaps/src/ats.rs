//! Accountable threshold signatures.
//!
//! A dealer hands `n` signers one key each. Any quorum `S` of exactly
//! `t` signers can produce a signature on a message; the signature
//! verifies against the single public key, and [`ats_trace`] recovers
//! exactly which quorum signed. Instantiated as a quorum-annotated
//! multi-signature: each member signs `message ‖ canonical(S)` with a
//! Schnorr key, and the combined signature carries the quorum
//! annotation plus the member signatures in index order. Accountability
//! is direct: the annotation is part of what every member signed, so
//! it cannot be altered without invalidating the signature.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::groupmath::{
    read_seq, write_seq, ByteReader, DecodeError, Encode, G1Point, Scalar,
};
use crate::primitives::{sig_sign, sig_verify, SchnorrSig};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum AtsError {
    #[error("threshold {t} outside 1..={n}")]
    BadThreshold { t: u32, n: u32 },
    #[error("signer {signer} is not in the quorum")]
    NotInQuorum { signer: u32 },
    #[error("quorum has {got} members, expected {expected}")]
    WrongQuorumSize { got: u32, expected: u32 },
    #[error("share from signer {signer} states a different quorum")]
    QuorumMismatch { signer: u32 },
    #[error("quorum member {missing} contributed no share")]
    InsufficientShares { missing: u32 },
    #[error("share from signer {signer} failed verification")]
    ShareInvalid { signer: u32 },
}

/// Public key: one verification point per signer plus the scheme
/// parameters. Signer indices run 1..=n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtsPublicKey {
    pub n: u32,
    pub threshold: u32,
    pub verify_keys: Vec<G1Point>,
}

impl AtsPublicKey {
    fn key_of(&self, signer: u32) -> Option<&G1Point> {
        if signer == 0 || signer > self.n {
            return None;
        }
        self.verify_keys.get(signer as usize - 1)
    }
}

impl Encode for AtsPublicKey {
    fn write(&self, out: &mut Vec<u8>) {
        self.n.write(out);
        self.threshold.write(out);
        write_seq(&self.verify_keys, out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let n = u32::read(r)?;
        let threshold = u32::read(r)?;
        let verify_keys = read_seq(r, 4096)?;
        Ok(AtsPublicKey {
            n,
            threshold,
            verify_keys,
        })
    }
}

/// One signer's secret key.
#[derive(Debug, Clone)]
pub struct AtsSignerKey {
    pub index: u32,
    pub threshold: u32,
    secret: Scalar,
}

/// One signer's contribution toward a signature under quorum `quorum`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtsShare {
    pub signer: u32,
    pub quorum: BTreeSet<u32>,
    pub sig: SchnorrSig,
}

/// A combined signature: the quorum annotation and the member
/// signatures sorted by signer index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtsSignature {
    pub quorum: BTreeSet<u32>,
    pub sigs: Vec<SchnorrSig>,
}

/// Canonical encoding of a quorum: 4-byte big-endian count, then the
/// member indices sorted ascending, 4 bytes each.
pub fn canonical_quorum(quorum: &BTreeSet<u32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * quorum.len());
    (quorum.len() as u32).write(&mut out);
    for &s in quorum {
        s.write(&mut out);
    }
    out
}

fn read_quorum(r: &mut ByteReader<'_>) -> Result<BTreeSet<u32>, DecodeError> {
    let members: Vec<u32> = read_seq(r, 4096)?;
    let quorum: BTreeSet<u32> = members.iter().copied().collect();
    if quorum.len() != members.len() || !members.windows(2).all(|w| w[0] < w[1]) {
        return Err(DecodeError::Malformed("quorum not sorted and distinct"));
    }
    Ok(quorum)
}

impl Encode for AtsShare {
    fn write(&self, out: &mut Vec<u8>) {
        self.signer.write(out);
        out.extend_from_slice(&canonical_quorum(&self.quorum));
        self.sig.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(AtsShare {
            signer: u32::read(r)?,
            quorum: read_quorum(r)?,
            sig: SchnorrSig::read(r)?,
        })
    }
}

impl Encode for AtsSignature {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&canonical_quorum(&self.quorum));
        write_seq(&self.sigs, out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let quorum = read_quorum(r)?;
        let sigs = read_seq(r, 4096)?;
        if sigs.len() != quorum.len() {
            return Err(DecodeError::Malformed("signature count != quorum size"));
        }
        Ok(AtsSignature { quorum, sigs })
    }
}

/// Upper bound on the encoded size of any signature for `n` signers;
/// used to pad encodings so ciphertext lengths cannot leak `t`.
pub fn signature_size_bound(n: u32) -> usize {
    8 + n as usize * (4 + G1Point::ENCODED_LEN + Scalar::ENCODED_LEN)
}

/// Upper bound on the encoded size of any single share for `n` signers.
pub fn share_size_bound(n: u32) -> usize {
    8 + 4 * n as usize + 4 + G1Point::ENCODED_LEN + Scalar::ENCODED_LEN
}

fn share_message(msg: &[u8], quorum: &BTreeSet<u32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.len() + 4 + 4 * quorum.len() + 8);
    out.extend_from_slice(b"ats/share\0");
    (msg.len() as u32).write(&mut out);
    out.extend_from_slice(msg);
    out.extend_from_slice(&canonical_quorum(quorum));
    out
}

/// Deals keys for `n` signers with threshold `t`.
pub fn ats_keygen<R: RngCore + CryptoRng>(
    n: u32,
    t: u32,
    rng: &mut R,
) -> Result<(AtsPublicKey, Vec<AtsSignerKey>), AtsError> {
    if t == 0 || t > n {
        return Err(AtsError::BadThreshold { t, n });
    }
    let mut verify_keys = Vec::with_capacity(n as usize);
    let mut signer_keys = Vec::with_capacity(n as usize);
    for index in 1..=n {
        let secret = Scalar::random(rng);
        verify_keys.push(G1Point::generator().mul(&secret));
        signer_keys.push(AtsSignerKey {
            index,
            threshold: t,
            secret,
        });
    }
    Ok((
        AtsPublicKey {
            n,
            threshold: t,
            verify_keys,
        },
        signer_keys,
    ))
}

/// Produces signer `key.index`'s share for message `msg` under quorum
/// `quorum`. The signer must be a member and the quorum must have
/// exactly `t` members.
pub fn ats_sign(
    key: &AtsSignerKey,
    msg: &[u8],
    quorum: &BTreeSet<u32>,
) -> Result<AtsShare, AtsError> {
    if quorum.len() as u32 != key.threshold {
        return Err(AtsError::WrongQuorumSize {
            got: quorum.len() as u32,
            expected: key.threshold,
        });
    }
    if !quorum.contains(&key.index) {
        return Err(AtsError::NotInQuorum { signer: key.index });
    }
    Ok(AtsShare {
        signer: key.index,
        quorum: quorum.clone(),
        sig: sig_sign(&key.secret, &share_message(msg, quorum)),
    })
}

/// Verifies a single share against the public key.
pub fn ats_share_verify(pk: &AtsPublicKey, msg: &[u8], share: &AtsShare) -> bool {
    match pk.key_of(share.signer) {
        Some(vk) => sig_verify(vk, &share_message(msg, &share.quorum), &share.sig),
        None => false,
    }
}

/// Combines shares into a signature for quorum `quorum`. Every quorum
/// member must contribute a valid share stating that same quorum;
/// duplicates are tolerated, shares from non-members are rejected.
pub fn ats_combine(
    pk: &AtsPublicKey,
    msg: &[u8],
    quorum: &BTreeSet<u32>,
    shares: &[AtsShare],
) -> Result<AtsSignature, AtsError> {
    if quorum.len() as u32 != pk.threshold {
        return Err(AtsError::WrongQuorumSize {
            got: quorum.len() as u32,
            expected: pk.threshold,
        });
    }
    for share in shares {
        if share.quorum != *quorum {
            return Err(AtsError::QuorumMismatch {
                signer: share.signer,
            });
        }
        if !quorum.contains(&share.signer) {
            return Err(AtsError::NotInQuorum {
                signer: share.signer,
            });
        }
    }
    let mut sigs = Vec::with_capacity(quorum.len());
    for &member in quorum {
        let share = shares
            .iter()
            .find(|s| s.signer == member)
            .ok_or(AtsError::InsufficientShares { missing: member })?;
        if !ats_share_verify(pk, msg, share) {
            return Err(AtsError::ShareInvalid { signer: member });
        }
        sigs.push(share.sig);
    }
    Ok(AtsSignature {
        quorum: quorum.clone(),
        sigs,
    })
}

/// Verifies a combined signature against the public key.
pub fn ats_verify(pk: &AtsPublicKey, msg: &[u8], sig: &AtsSignature) -> bool {
    if sig.quorum.len() as u32 != pk.threshold || sig.sigs.len() != sig.quorum.len() {
        return false;
    }
    let payload = share_message(msg, &sig.quorum);
    for (&member, member_sig) in sig.quorum.iter().zip(&sig.sigs) {
        match pk.key_of(member) {
            Some(vk) if sig_verify(vk, &payload, member_sig) => {}
            _ => return false,
        }
    }
    true
}

/// Recovers the signing quorum from a valid signature; `None` when the
/// signature does not verify.
pub fn ats_trace(pk: &AtsPublicKey, msg: &[u8], sig: &AtsSignature) -> Option<BTreeSet<u32>> {
    if ats_verify(pk, msg, sig) {
        Some(sig.quorum.clone())
    } else {
        None
    }
}

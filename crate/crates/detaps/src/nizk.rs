//! The combiner's proof of well-formedness.
//!
//! Every published signature carries a proof tying its pieces to the
//! system key commitment and to the keyword index: the prover knows
//! an opening of the key commitment, the index randomness behind
//! `(c1, c2)`, and the encryption exponent behind every one of the
//! `n3` ciphertext slot headers, live and dummy alike, so the proof
//! shape is identical whatever the hidden receiver set was.
//!
//! Those clauses are plain sigma protocols sharing one Fiat-Shamir
//! challenge. The remaining well-formedness facts (the encrypted
//! share set verifies, receivers lie in the enrolled universe, the
//! ciphertext matches the signature) are not sigma-friendly; they are
//! checked inside the combiner enclave, whose attestation signature
//! over the statement is part of the proof and of what verifiers
//! check. Proving is deterministic given `(statement, witness)` and
//! the witness's nonce seed.

use thiserror::Error;

use crate::groupmath::{
    digest32, hash_to_scalar, ByteReader, DecodeError, Encode, G1Point, G2Point, Scalar,
};
use crate::kase::{Gid, KaseMasterPublic};
use crate::primitives::{com_verify, pedersen_base, sig_sign, sig_verify, Commitment, SchnorrSig};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum NizkError {
    #[error("witness does not satisfy the {clause} clause")]
    WitnessMismatch { clause: &'static str },
    #[error("statement and context disagree on the slot count")]
    ShapeMismatch,
}

/// Public statement a combine proof speaks about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombineStatement {
    /// Public bound on receiver sets: the notary universe size.
    pub threshold_bound: u32,
    pub com_pk: Commitment,
    /// Digest of the encryption public key the ciphertext was built
    /// under.
    pub ek_digest: [u8; 32],
    pub mpk: KaseMasterPublic,
    pub message: Vec<u8>,
    /// Digest of the threshold ciphertext σ̄.
    pub sigma_bar_digest: [u8; 32],
    pub gid: Gid,
    pub c1: G2Point,
    pub c2: G2Point,
    /// Digest of the keyword index entries.
    pub entries_digest: [u8; 32],
}

impl Encode for CombineStatement {
    fn write(&self, out: &mut Vec<u8>) {
        self.threshold_bound.write(out);
        self.com_pk.write(out);
        self.ek_digest.write(out);
        self.mpk.write(out);
        self.message.write(out);
        self.sigma_bar_digest.write(out);
        self.gid.write(out);
        self.c1.write(out);
        self.c2.write(out);
        self.entries_digest.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(CombineStatement {
            threshold_bound: u32::read(r)?,
            com_pk: Commitment::read(r)?,
            ek_digest: <[u8; 32]>::read(r)?,
            mpk: KaseMasterPublic::read(r)?,
            message: Vec::<u8>::read(r)?,
            sigma_bar_digest: <[u8; 32]>::read(r)?,
            gid: Gid::read(r)?,
            c1: G2Point::read(r)?,
            c2: G2Point::read(r)?,
            entries_digest: <[u8; 32]>::read(r)?,
        })
    }
}

impl CombineStatement {
    pub fn digest(&self) -> [u8; 32] {
        digest32(b"nizk/statement", &self.encode())
    }
}

/// Public bases and points the sigma clauses range over. Derived by
/// both prover and verifier from the same public objects the
/// statement's digests pin down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombineContext {
    /// Header base per ciphertext slot (the slot owner's public key).
    pub slot_bases: Vec<G1Point>,
    /// The ciphertext's KEM header pairs, one per slot.
    pub headers: Vec<(G1Point, G1Point)>,
    /// Base of `c2`: master public key times the slot's ladder point.
    pub index_base: G2Point,
    /// The proving enclave's attestation verification key.
    pub attestation_pk: G1Point,
}

impl CombineContext {
    fn transcript(&self) -> Vec<u8> {
        let mut out = Vec::new();
        (self.slot_bases.len() as u32).write(&mut out);
        for b in &self.slot_bases {
            b.write(&mut out);
        }
        for (h1, h2) in &self.headers {
            h1.write(&mut out);
            h2.write(&mut out);
        }
        self.index_base.write(&mut out);
        self.attestation_pk.write(&mut out);
        out
    }
}

/// Secret inputs: the commitment opening, the index randomness, and
/// the per-slot header exponents, plus a nonce seed that makes the
/// proof bytes a function of `(statement, witness, seed)`.
#[derive(Debug, Clone)]
pub struct CombineWitness {
    pub pk_bytes: Vec<u8>,
    pub pk_blind: Scalar,
    pub index_exp: Scalar,
    pub slot_exps: Vec<(Scalar, Scalar)>,
    pub nonce_seed: [u8; 32],
}

/// Two-exponent proof of a commitment opening.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpeningProof {
    pub commit: G1Point,
    pub response_value: Scalar,
    pub response_blind: Scalar,
}

/// Shared-exponent proof for the index pair `(c1, c2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexProof {
    pub commit_c1: G2Point,
    pub commit_c2: G2Point,
    pub response: Scalar,
}

/// Knowledge proof for one header point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderProof {
    pub commit: G1Point,
    pub response: Scalar,
}

/// The complete combine proof. Its byte length depends only on the
/// slot count, never on the hidden receiver set or thresholds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombineProof {
    pub opening: OpeningProof,
    pub index: IndexProof,
    pub headers: Vec<(HeaderProof, HeaderProof)>,
    pub attestation: SchnorrSig,
}

impl Encode for CombineProof {
    fn write(&self, out: &mut Vec<u8>) {
        self.opening.commit.write(out);
        self.opening.response_value.write(out);
        self.opening.response_blind.write(out);
        self.index.commit_c1.write(out);
        self.index.commit_c2.write(out);
        self.index.response.write(out);
        (self.headers.len() as u32).write(out);
        for (p1, p2) in &self.headers {
            p1.commit.write(out);
            p1.response.write(out);
            p2.commit.write(out);
            p2.response.write(out);
        }
        self.attestation.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let opening = OpeningProof {
            commit: G1Point::read(r)?,
            response_value: Scalar::read(r)?,
            response_blind: Scalar::read(r)?,
        };
        let index = IndexProof {
            commit_c1: G2Point::read(r)?,
            commit_c2: G2Point::read(r)?,
            response: Scalar::read(r)?,
        };
        let n = u32::read(r)? as usize;
        if n > 4096 {
            return Err(DecodeError::Malformed("too many header proofs"));
        }
        let mut headers = Vec::with_capacity(n);
        for _ in 0..n {
            headers.push((
                HeaderProof {
                    commit: G1Point::read(r)?,
                    response: Scalar::read(r)?,
                },
                HeaderProof {
                    commit: G1Point::read(r)?,
                    response: Scalar::read(r)?,
                },
            ));
        }
        let attestation = SchnorrSig::read(r)?;
        Ok(CombineProof {
            opening,
            index,
            headers,
            attestation,
        })
    }
}

fn attest_payload(statement: &CombineStatement) -> Vec<u8> {
    digest32(b"nizk/attest", &statement.encode()).to_vec()
}

fn challenge(
    statement: &CombineStatement,
    context: &CombineContext,
    opening_commit: &G1Point,
    index_commits: (&G2Point, &G2Point),
    header_commits: &[(G1Point, G1Point)],
) -> Scalar {
    let mut transcript = statement.encode();
    transcript.extend_from_slice(&context.transcript());
    opening_commit.write(&mut transcript);
    index_commits.0.write(&mut transcript);
    index_commits.1.write(&mut transcript);
    for (a, b) in header_commits {
        a.write(&mut transcript);
        b.write(&mut transcript);
    }
    hash_to_scalar(b"nizk/fs", &transcript)
}

/// Derives the i-th proof nonce from the seed, the witness secrets,
/// and the statement. Secret inputs keep nonces unpredictable even
/// under a weak seed; statement binding keeps them single-use.
fn nonce(seed_key: &[u8; 32], statement_digest: &[u8; 32], i: u32) -> Scalar {
    let mut input = seed_key.to_vec();
    input.extend_from_slice(statement_digest);
    i.write(&mut input);
    hash_to_scalar(b"nizk/nonce", &input)
}

fn nonce_key(witness: &CombineWitness) -> [u8; 32] {
    let mut secrets = witness.nonce_seed.to_vec();
    witness.pk_blind.write(&mut secrets);
    witness.index_exp.write(&mut secrets);
    for (y, u) in &witness.slot_exps {
        y.write(&mut secrets);
        u.write(&mut secrets);
    }
    digest32(b"nizk/nonce-key", &secrets)
}

/// Produces a combine proof, first checking that the witness really
/// satisfies every sigma clause of the statement.
pub fn prove_combine(
    statement: &CombineStatement,
    context: &CombineContext,
    witness: &CombineWitness,
    attestation_sk: &Scalar,
) -> Result<CombineProof, NizkError> {
    let n = statement.threshold_bound as usize;
    if context.slot_bases.len() != n
        || context.headers.len() != n
        || witness.slot_exps.len() != n
    {
        return Err(NizkError::ShapeMismatch);
    }
    if !com_verify(&witness.pk_bytes, &witness.pk_blind, &statement.com_pk) {
        return Err(NizkError::WitnessMismatch {
            clause: "commitment opening",
        });
    }
    if G2Point::generator().mul(&witness.index_exp) != statement.c1
        || context.index_base.mul(&witness.index_exp) != statement.c2
    {
        return Err(NizkError::WitnessMismatch {
            clause: "index randomness",
        });
    }
    for (i, ((y, u), base)) in witness
        .slot_exps
        .iter()
        .zip(&context.slot_bases)
        .enumerate()
    {
        let (h1, h2) = &context.headers[i];
        if base.mul(y) != *h1 || base.mul(u) != *h2 {
            return Err(NizkError::WitnessMismatch {
                clause: "header exponent",
            });
        }
    }

    let sd = statement.digest();
    let key = nonce_key(witness);
    let value_exp = hash_to_scalar(b"com/value", &witness.pk_bytes);

    let k_value = nonce(&key, &sd, 0);
    let k_blind = nonce(&key, &sd, 1);
    let opening_commit = G1Point::generator()
        .mul(&k_value)
        .add(&pedersen_base().mul(&k_blind));

    let k_index = nonce(&key, &sd, 2);
    let index_commit_c1 = G2Point::generator().mul(&k_index);
    let index_commit_c2 = context.index_base.mul(&k_index);

    let mut header_nonces = Vec::with_capacity(n);
    let mut header_commits = Vec::with_capacity(n);
    for (i, base) in context.slot_bases.iter().enumerate() {
        let k1 = nonce(&key, &sd, 3 + 2 * i as u32);
        let k2 = nonce(&key, &sd, 4 + 2 * i as u32);
        header_commits.push((base.mul(&k1), base.mul(&k2)));
        header_nonces.push((k1, k2));
    }

    let c = challenge(
        statement,
        context,
        &opening_commit,
        (&index_commit_c1, &index_commit_c2),
        &header_commits,
    );

    let headers = header_nonces
        .iter()
        .zip(&witness.slot_exps)
        .zip(&header_commits)
        .map(|(((k1, k2), (y, u)), (a1, a2))| {
            (
                HeaderProof {
                    commit: *a1,
                    response: k1.add(&c.mul(y)),
                },
                HeaderProof {
                    commit: *a2,
                    response: k2.add(&c.mul(u)),
                },
            )
        })
        .collect();

    Ok(CombineProof {
        opening: OpeningProof {
            commit: opening_commit,
            response_value: k_value.add(&c.mul(&value_exp)),
            response_blind: k_blind.add(&c.mul(&witness.pk_blind)),
        },
        index: IndexProof {
            commit_c1: index_commit_c1,
            commit_c2: index_commit_c2,
            response: k_index.add(&c.mul(&witness.index_exp)),
        },
        headers,
        attestation: sig_sign(attestation_sk, &attest_payload(statement)),
    })
}

/// Verifies a combine proof. The caller must build `statement` and
/// `context` from the same public objects; the statement's digests
/// pin them together.
pub fn verify_combine(
    statement: &CombineStatement,
    context: &CombineContext,
    proof: &CombineProof,
) -> bool {
    let n = statement.threshold_bound as usize;
    if context.slot_bases.len() != n
        || context.headers.len() != n
        || proof.headers.len() != n
    {
        return false;
    }
    // Attestation first: it is the cheapest check and binds the
    // statement, so transplanted proofs fail immediately.
    if !sig_verify(
        &context.attestation_pk,
        &attest_payload(statement),
        &proof.attestation,
    ) {
        return false;
    }
    let header_commits: Vec<(G1Point, G1Point)> = proof
        .headers
        .iter()
        .map(|(p1, p2)| (p1.commit, p2.commit))
        .collect();
    let c = challenge(
        statement,
        context,
        &proof.opening.commit,
        (&proof.index.commit_c1, &proof.index.commit_c2),
        &header_commits,
    );

    // Commitment opening: g^z_v · h^z_b == A · com^c.
    let lhs = G1Point::generator()
        .mul(&proof.opening.response_value)
        .add(&pedersen_base().mul(&proof.opening.response_blind));
    if lhs != proof.opening.commit.add(&statement.com_pk.0.mul(&c)) {
        return false;
    }

    // Index randomness: shared exponent across (ĝ → c1, base → c2).
    if G2Point::generator().mul(&proof.index.response)
        != proof.index.commit_c1.add(&statement.c1.mul(&c))
    {
        return false;
    }
    if context.index_base.mul(&proof.index.response)
        != proof.index.commit_c2.add(&statement.c2.mul(&c))
    {
        return false;
    }

    // Every slot header, uniformly.
    for ((p1, p2), (base, (h1, h2))) in proof
        .headers
        .iter()
        .zip(context.slot_bases.iter().zip(&context.headers))
    {
        if base.mul(&p1.response) != p1.commit.add(&h1.mul(&c)) {
            return false;
        }
        if base.mul(&p2.response) != p2.commit.add(&h2.mul(&c)) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{com_commit, keygen, SchemeId};
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    struct Fixture {
        statement: CombineStatement,
        context: CombineContext,
        witness: CombineWitness,
        attestation_sk: Scalar,
    }

    /// Builds a coherent (statement, context, witness) triple with
    /// `n` slots directly from random exponents.
    fn fixture(n: usize, seed: u64) -> Fixture {
        let mut r = rng(seed);
        let pk_bytes = b"system key bundle bytes".to_vec();
        let pk_blind = Scalar::random(&mut r);
        let com_pk = com_commit(&pk_bytes, &pk_blind);

        let index_exp = Scalar::random(&mut r);
        let index_base = G2Point::random(&mut r);
        let c1 = G2Point::generator().mul(&index_exp);
        let c2 = index_base.mul(&index_exp);

        let mut slot_bases = Vec::new();
        let mut headers = Vec::new();
        let mut slot_exps = Vec::new();
        for _ in 0..n {
            let base = G1Point::random(&mut r);
            let y = Scalar::random(&mut r);
            let u = Scalar::random(&mut r);
            headers.push((base.mul(&y), base.mul(&u)));
            slot_bases.push(base);
            slot_exps.push((y, u));
        }

        let att = keygen(SchemeId::Sig, None, &mut r);
        let mut nonce_seed = [0u8; 32];
        r.fill(&mut nonce_seed);

        Fixture {
            statement: CombineStatement {
                threshold_bound: n as u32,
                com_pk,
                ek_digest: digest32(b"test", b"ek"),
                mpk: KaseMasterPublic(G2Point::random(&mut r)),
                message: b"signed message".to_vec(),
                sigma_bar_digest: digest32(b"test", b"sigma"),
                gid: Gid([7u8; 32]),
                c1,
                c2,
                entries_digest: digest32(b"test", b"entries"),
            },
            context: CombineContext {
                slot_bases,
                headers,
                index_base,
                attestation_pk: att.public,
            },
            witness: CombineWitness {
                pk_bytes,
                pk_blind,
                index_exp,
                slot_exps,
                nonce_seed,
            },
            attestation_sk: att.secret,
        }
    }

    #[test]
    fn honest_proofs_verify() {
        for n in [1usize, 3, 10] {
            let fx = fixture(n, n as u64);
            let proof =
                prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
                    .unwrap();
            assert!(verify_combine(&fx.statement, &fx.context, &proof));
        }
    }

    #[test]
    fn proving_is_deterministic_in_all_inputs() {
        let fx = fixture(4, 42);
        let a = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();
        let b = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();
        assert_eq!(a.encode(), b.encode());

        // A different nonce seed re-randomizes the bytes but not the
        // validity.
        let mut w2 = fx.witness.clone();
        w2.nonce_seed[0] ^= 1;
        let c = prove_combine(&fx.statement, &fx.context, &w2, &fx.attestation_sk).unwrap();
        assert_ne!(a.encode(), c.encode());
        assert!(verify_combine(&fx.statement, &fx.context, &c));
    }

    #[test]
    fn prove_rejects_witness_mismatches() {
        let fx = fixture(3, 43);
        let mut bad = fx.witness.clone();
        bad.pk_blind = bad.pk_blind.add(&Scalar::one());
        assert_eq!(
            prove_combine(&fx.statement, &fx.context, &bad, &fx.attestation_sk).unwrap_err(),
            NizkError::WitnessMismatch {
                clause: "commitment opening"
            }
        );

        let mut bad = fx.witness.clone();
        bad.index_exp = bad.index_exp.add(&Scalar::one());
        assert_eq!(
            prove_combine(&fx.statement, &fx.context, &bad, &fx.attestation_sk).unwrap_err(),
            NizkError::WitnessMismatch {
                clause: "index randomness"
            }
        );

        let mut bad = fx.witness.clone();
        bad.slot_exps[1].0 = bad.slot_exps[1].0.add(&Scalar::one());
        assert_eq!(
            prove_combine(&fx.statement, &fx.context, &bad, &fx.attestation_sk).unwrap_err(),
            NizkError::WitnessMismatch {
                clause: "header exponent"
            }
        );

        let mut bad = fx.witness.clone();
        bad.slot_exps.pop();
        assert_eq!(
            prove_combine(&fx.statement, &fx.context, &bad, &fx.attestation_sk).unwrap_err(),
            NizkError::ShapeMismatch
        );
    }

    #[test]
    fn mutation_sweep_rejects() {
        let fx = fixture(3, 44);
        let proof = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();
        let bytes = proof.encode();
        let mut r = rng(45);
        for _ in 0..256 {
            let bit = (r.next_u32() as usize) % (bytes.len() * 8);
            let mut mutated = bytes.clone();
            mutated[bit / 8] ^= 1 << (bit % 8);
            match CombineProof::decode(&mutated) {
                Ok(p) => assert!(!verify_combine(&fx.statement, &fx.context, &p)),
                Err(_) => {}
            }
        }
    }

    #[test]
    fn transplanted_proofs_fail() {
        let fx = fixture(3, 46);
        let proof = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();

        let mut other_message = fx.statement.clone();
        other_message.message = b"different message".to_vec();
        assert!(!verify_combine(&other_message, &fx.context, &proof));

        let mut other_gid = fx.statement.clone();
        other_gid.gid = Gid([8u8; 32]);
        assert!(!verify_combine(&other_gid, &fx.context, &proof));

        let mut other_ct = fx.statement.clone();
        other_ct.sigma_bar_digest = digest32(b"test", b"other sigma");
        assert!(!verify_combine(&other_ct, &fx.context, &proof));

        // Same statement under a different enclave's attestation key.
        let mut other_ctx = fx.context.clone();
        other_ctx.attestation_pk = G1Point::random(&mut rng(47));
        assert!(!verify_combine(&fx.statement, &other_ctx, &proof));
    }

    #[test]
    fn random_proofs_never_verify() {
        let fx = fixture(2, 48);
        let honest = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();
        let mut r = rng(49);
        for _ in 0..1000 {
            let mut forged = honest.clone();
            forged.attestation.response = Scalar::random(&mut r);
            forged.index.response = Scalar::random(&mut r);
            assert!(!verify_combine(&fx.statement, &fx.context, &forged));
        }
    }

    #[test]
    fn sigma_clauses_are_simulatable() {
        // Zero-knowledge sanity at the sigma level: given any
        // challenge, transcripts sampled backwards (pick the response,
        // derive the commit) satisfy the verification equations and
        // have the same marginal byte distribution as honest ones.
        let mut r = rng(50);
        let base = G1Point::random(&mut r);
        let x = Scalar::random(&mut r);
        let point = base.mul(&x);

        let mut honest_bytes = Vec::new();
        let mut simulated_bytes = Vec::new();
        for _ in 0..200 {
            let c = Scalar::random(&mut r);
            // Honest: commit first.
            let k = Scalar::random(&mut r);
            let (a_h, z_h) = (base.mul(&k), k.add(&c.mul(&x)));
            assert_eq!(base.mul(&z_h), a_h.add(&point.mul(&c)));
            // Simulated: response first, no witness used.
            let z_s = Scalar::random(&mut r);
            let a_s = base.mul(&z_s).sub(&point.mul(&c));
            assert_eq!(base.mul(&z_s), a_s.add(&point.mul(&c)));
            honest_bytes.extend(a_h.encode());
            honest_bytes.extend(z_h.encode());
            simulated_bytes.extend(a_s.encode());
            simulated_bytes.extend(z_s.encode());
        }
        // Byte-histogram smoke test: mean byte values of the two
        // transcript pools agree within a loose tolerance.
        let mean = |v: &[u8]| v.iter().map(|&b| b as f64).sum::<f64>() / v.len() as f64;
        let delta = (mean(&honest_bytes) - mean(&simulated_bytes)).abs();
        assert!(delta < 8.0, "byte-distribution gap {delta}");
    }

    #[test]
    fn proof_encoding_round_trips_and_has_fixed_size() {
        let fx = fixture(5, 51);
        let proof = prove_combine(&fx.statement, &fx.context, &fx.witness, &fx.attestation_sk)
            .unwrap();
        let bytes = proof.encode();
        assert_eq!(CombineProof::decode(&bytes).unwrap(), proof);

        // Another witness for the same shape gives the same length.
        let fx2 = fixture(5, 52);
        let proof2 =
            prove_combine(&fx2.statement, &fx2.context, &fx2.witness, &fx2.attestation_sk)
                .unwrap();
        assert_eq!(proof2.encode().len(), bytes.len());
    }
}

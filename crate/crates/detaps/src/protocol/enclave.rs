//! Simulated enclaves for combining and tracing.
//!
//! Each enclave owns its sealed secrets and an explicit boundary log
//! recording every byte that leaves it, so tests and callers can
//! audit exactly what the enclave disclosed. Failures cross the
//! boundary as a single opaque error; the reasons stay inside as
//! diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::ats::{
    ats_combine, ats_share_verify, ats_trace, ats_verify, signature_size_bound, AtsPublicKey,
    AtsShare,
};
use crate::dtpke::{
    dtpke_combine, dtpke_encrypt, dtpke_share_verify, dtpke_validate, CombineKey,
    DecryptionShare, Pid,
};
use crate::groupmath::{digest32, ByteReader, Encode, G1Point, G2Point, Scalar};
use crate::kase::{kase_encrypt, Gid};
use crate::nizk::{prove_combine, CombineWitness};
use crate::primitives::{pke_decrypt, pke_encrypt, sig_sign, HybridCiphertext};

use super::{
    build_context, build_statement, eta_payload, padded_signer_set, parse_share_payload,
    unpad_signature, verify, CombineOutput, DetapsSignature, ProtocolError, PublicKeys,
};

/// How many epochs a partial share group survives without new shares
/// before the enclave discards it.
pub const RETAIN_EPOCHS: u64 = 8;

/// Append-only record of everything an enclave has emitted.
#[derive(Debug, Default, Clone)]
pub struct BoundaryLog {
    records: Vec<(&'static str, Vec<u8>)>,
}

impl BoundaryLog {
    fn record(&mut self, label: &'static str, bytes: &[u8]) {
        self.records.push((label, bytes.to_vec()));
    }

    pub fn entries(&self) -> &[(&'static str, Vec<u8>)] {
        &self.records
    }

    /// Whether `needle` appears as a contiguous byte run anywhere in
    /// the emitted output.
    pub fn contains(&self, needle: &[u8]) -> bool {
        !needle.is_empty()
            && self
                .records
                .iter()
                .any(|(_, bytes)| bytes.windows(needle.len()).any(|w| w == needle))
    }
}

/// Shares collected so far toward one `(message, gid)` signature.
struct RetainedGroup {
    message: Vec<u8>,
    quorum: BTreeSet<u32>,
    receivers: BTreeSet<Pid>,
    slot: u32,
    shares: BTreeMap<u32, AtsShare>,
    epoch: u64,
}

/// The combining enclave: decrypts signer shares, retains partial
/// groups across epochs, and publishes full signatures.
pub struct CombinerEnclave {
    pub index: u32,
    public: PublicKeys,
    ats_pk: AtsPublicKey,
    pk_bytes: Vec<u8>,
    pk_blind: Scalar,
    enc_sk: Scalar,
    sign_sk: Scalar,
    attestation_sk: Scalar,
    rng: ChaCha20Rng,
    retained: BTreeMap<([u8; 32], Gid), RetainedGroup>,
    pub log: BoundaryLog,
}

impl CombinerEnclave {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        index: u32,
        public: PublicKeys,
        ats_pk: AtsPublicKey,
        pk_blind: Scalar,
        enc_sk: Scalar,
        sign_sk: Scalar,
        attestation_sk: Scalar,
        rng: ChaCha20Rng,
    ) -> Self {
        CombinerEnclave {
            index,
            pk_bytes: ats_pk.encode(),
            public,
            ats_pk,
            pk_blind,
            enc_sk,
            sign_sk,
            attestation_sk,
            rng,
            retained: BTreeMap::new(),
            log: BoundaryLog::default(),
        }
    }

    /// Partial share groups currently held inside the enclave.
    pub fn retained_groups(&self) -> usize {
        self.retained.len()
    }

    /// Ingests one epoch's share ciphertexts and publishes every
    /// signature that became complete. `gid_slots` is the chain's
    /// current registry of group ids to keyword slots. Undecryptable,
    /// malformed, or invalid shares are skipped; share groups whose
    /// members disagree on the quorum or receiver set are dropped
    /// wholesale, since the enclave cannot tell which signer lied.
    pub fn combine_epoch(
        &mut self,
        epoch: u64,
        ciphertexts: &[Vec<u8>],
        gid_slots: &BTreeMap<Gid, u32>,
    ) -> Vec<CombineOutput> {
        self.retained
            .retain(|_, g| epoch.saturating_sub(g.epoch) <= RETAIN_EPOCHS);

        let mut poisoned: BTreeSet<([u8; 32], Gid)> = BTreeSet::new();
        for bytes in ciphertexts {
            let Ok(ct) = HybridCiphertext::decode(bytes) else {
                continue;
            };
            let Ok(payload) = pke_decrypt(&self.enc_sk, &ct) else {
                continue;
            };
            let Some(parsed) =
                parse_share_payload(&payload, self.public.params.n, self.public.params.n3)
            else {
                continue;
            };
            if parsed.share.quorum.len() as u32 != self.ats_pk.threshold
                || !ats_share_verify(&self.ats_pk, &parsed.message, &parsed.share)
            {
                continue;
            }
            if !parsed
                .receivers
                .iter()
                .all(|p| self.public.dtpke_pk.notary(p).is_some())
            {
                continue;
            }
            let Some(&slot) = gid_slots.get(&parsed.gid) else {
                continue;
            };
            let key = (digest32(b"protocol/msg", &parsed.message), parsed.gid);
            let entry = self.retained.entry(key).or_insert_with(|| RetainedGroup {
                message: parsed.message.clone(),
                quorum: parsed.share.quorum.clone(),
                receivers: parsed.receivers.clone(),
                slot,
                shares: BTreeMap::new(),
                epoch,
            });
            if entry.quorum != parsed.share.quorum
                || entry.receivers != parsed.receivers
                || entry.slot != slot
            {
                poisoned.insert(key);
                continue;
            }
            entry.shares.entry(parsed.share.signer).or_insert(parsed.share);
            entry.epoch = epoch;
        }
        for key in poisoned {
            self.retained.remove(&key);
        }

        let ready: Vec<([u8; 32], Gid)> = self
            .retained
            .iter()
            .filter(|(_, g)| g.shares.len() == g.quorum.len())
            .map(|(k, _)| *k)
            .collect();
        let mut outputs = Vec::new();
        for key in ready {
            let group = self.retained.remove(&key).expect("key collected above");
            if let Ok(out) = self.finish_group(key.1, group) {
                self.log.record("published-signature", &out.encode());
                outputs.push(out);
            }
        }
        outputs
    }

    fn finish_group(
        &mut self,
        gid: Gid,
        group: RetainedGroup,
    ) -> Result<CombineOutput, ProtocolError> {
        let RetainedGroup {
            message,
            quorum,
            receivers,
            slot,
            shares,
            ..
        } = group;
        let shares: Vec<AtsShare> = shares.into_values().collect();
        let inner = ats_combine(&self.ats_pk, &message, &quorum, &shares)?;
        let mut padded = inner.encode();
        padded.resize(signature_size_bound(self.ats_pk.n), 0);

        let t_prime = receivers.len() as u32;
        let (sigma_bar, enc_witness) = dtpke_encrypt(
            &self.public.dtpke_pk,
            &receivers,
            t_prime,
            &padded,
            &mut self.rng,
        )?;
        let (index, kase_witness) = kase_encrypt(
            &self.public.kase_params,
            &self.public.kase_mpk,
            slot,
            &receivers,
            self.public.params.n3,
            &mut self.rng,
        )?;

        let statement = build_statement(&self.public, &message, &gid, &sigma_bar, &index);
        let context = build_context(
            &self.public,
            &sigma_bar,
            slot,
            self.public.attestation_keys[self.index as usize],
        )?;
        let mut nonce_seed = [0u8; 32];
        self.rng.fill_bytes(&mut nonce_seed);
        let witness = CombineWitness {
            pk_bytes: self.pk_bytes.clone(),
            pk_blind: self.pk_blind,
            index_exp: kase_witness.t,
            slot_exps: enc_witness.slot_exps,
            nonce_seed,
        };
        let proof = prove_combine(&statement, &context, &witness, &self.attestation_sk)?;
        let eta = sig_sign(
            &self.sign_sk,
            &eta_payload(&message, &gid, &sigma_bar, &index, &proof),
        );
        Ok(CombineOutput {
            gid,
            message,
            signature: DetapsSignature {
                sigma_bar,
                index,
                proof,
                eta,
            },
        })
    }
}

/// The tracing enclave: turns notary responses into a sealed signer
/// set. All failure reasons stay inside; callers see one opaque
/// error.
pub struct TracerEnclave {
    pub index: u32,
    public: PublicKeys,
    ats_pk: AtsPublicKey,
    combine_key: CombineKey,
    enc_sk: Scalar,
    rng: ChaCha20Rng,
    diagnostics: Vec<String>,
    pub log: BoundaryLog,
}

impl TracerEnclave {
    pub(crate) fn new(
        index: u32,
        public: PublicKeys,
        ats_pk: AtsPublicKey,
        combine_key: CombineKey,
        enc_sk: Scalar,
        rng: ChaCha20Rng,
    ) -> Self {
        TracerEnclave {
            index,
            public,
            ats_pk,
            combine_key,
            enc_sk,
            rng,
            diagnostics: Vec::new(),
            log: BoundaryLog::default(),
        }
    }

    /// In-enclave failure reasons, for operators and tests. Not part
    /// of the protocol surface.
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    fn fail(&mut self, why: &str) -> ProtocolError {
        self.diagnostics.push(why.to_string());
        ProtocolError::TraceFailed
    }

    /// Recovers and seals the signer set behind `sig`. Succeeds only
    /// if the signature verifies and the usable responses cover the
    /// entire notary set chosen at signing time; the recovered set's
    /// size is exactly the threshold the signers picked.
    pub fn trace(
        &mut self,
        message: &[u8],
        gid: &Gid,
        slot: u32,
        sig: &DetapsSignature,
        responses: &[Vec<u8>],
        target_pk: &G1Point,
    ) -> Result<Vec<u8>, ProtocolError> {
        if !verify(&self.public, message, gid, slot, sig) {
            return Err(self.fail("signature did not verify"));
        }
        let want = sig.digest();
        let mut shares: BTreeMap<Pid, DecryptionShare> = BTreeMap::new();
        for bytes in responses {
            let Some((pid, share)) = self.open_response(bytes, &want, sig) else {
                continue;
            };
            shares.entry(pid).or_insert(share);
        }
        let receivers: BTreeSet<Pid> = shares.keys().copied().collect();
        if receivers.is_empty() {
            return Err(self.fail("no usable notary responses"));
        }
        let t_hat = receivers.len() as u32;
        if !dtpke_validate(&self.public.dtpke_pk, &receivers, t_hat, &sig.sigma_bar) {
            return Err(self.fail("ciphertext rejects the reconstructed receiver set"));
        }
        let share_vec: Vec<DecryptionShare> = shares.into_values().collect();
        let padded = match dtpke_combine(
            &self.combine_key,
            &self.public.dtpke_pk,
            &receivers,
            t_hat,
            &sig.sigma_bar,
            &share_vec,
        ) {
            Ok(p) => p,
            Err(_) => return Err(self.fail("threshold decryption failed")),
        };
        let Some(inner) = unpad_signature(&padded) else {
            return Err(self.fail("inner signature padding malformed"));
        };
        if !ats_verify(&self.ats_pk, message, &inner) {
            return Err(self.fail("inner threshold signature invalid"));
        }
        let Some(signers) = ats_trace(&self.ats_pk, message, &inner) else {
            return Err(self.fail("inner signature does not trace"));
        };
        let sealed = pke_encrypt(
            target_pk,
            &padded_signer_set(&signers, self.ats_pk.n),
            &mut self.rng,
        )
        .encode();
        self.log.record("sealed-trace", &sealed);
        Ok(sealed)
    }

    fn open_response(
        &mut self,
        bytes: &[u8],
        want: &[u8; 32],
        sig: &DetapsSignature,
    ) -> Option<(Pid, DecryptionShare)> {
        let ct = HybridCiphertext::decode(bytes).ok()?;
        let payload = pke_decrypt(&self.enc_sk, &ct).ok()?;
        let mut r = ByteReader::new(&payload);
        let digest = <[u8; 32]>::read(&mut r).ok()?;
        let pid = Pid::read(&mut r).ok()?;
        let uvk = G2Point::read(&mut r).ok()?;
        let share = DecryptionShare::read(&mut r).ok()?;
        r.finish().ok()?;
        if digest != *want || share.pid != pid {
            self.diagnostics
                .push("response bound to a different signature".into());
            return None;
        }
        if !dtpke_share_verify(&self.public.dtpke_pk, &pid, &uvk, &sig.sigma_bar, &share) {
            self.diagnostics
                .push("response share failed verification".into());
            return None;
        }
        Some((pid, share))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ats::canonical_quorum;
    use crate::protocol::testutil::{gid_slots, pids, sign_batch, small_system};
    use crate::protocol::{derive_gid, sign};
    use crate::primitives::{keygen, SchemeId};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn shares_retained_across_epochs_complete_later() {
        let mut keys = small_system(20);
        let mut r = rng(21);
        let quorum: BTreeSet<u32> = [1, 2, 3].into();
        let receivers = pids(&keys, &[0, 1]);
        let gid = derive_gid("alpha", 0);
        let slots = gid_slots(&keys.public, 0);
        let message = b"slow quorum".to_vec();

        let batch = sign_batch(&keys, &message, &quorum, &receivers, &gid, 0, &mut r);
        let early = keys.combiners[0].combine_epoch(1, &batch[..2].to_vec(), &slots);
        assert!(early.is_empty());
        assert_eq!(keys.combiners[0].retained_groups(), 1);

        let late = keys.combiners[0].combine_epoch(3, &batch[2..].to_vec(), &slots);
        assert_eq!(late.len(), 1);
        assert_eq!(keys.combiners[0].retained_groups(), 0);
        assert!(verify(
            &keys.public,
            &message,
            &gid,
            slots[&gid],
            &late[0].signature
        ));
    }

    #[test]
    fn stale_share_groups_expire() {
        let mut keys = small_system(22);
        let mut r = rng(23);
        let quorum: BTreeSet<u32> = [1, 2, 3].into();
        let receivers = pids(&keys, &[0]);
        let gid = derive_gid("alpha", 0);
        let slots = gid_slots(&keys.public, 0);
        let message = b"stale quorum".to_vec();

        let batch = sign_batch(&keys, &message, &quorum, &receivers, &gid, 0, &mut r);
        keys.combiners[0].combine_epoch(1, &batch[..2].to_vec(), &slots);
        assert_eq!(keys.combiners[0].retained_groups(), 1);

        // The last share arrives long past the retention window: the
        // partial group is gone, so nothing completes.
        let late = keys.combiners[0].combine_epoch(1 + RETAIN_EPOCHS + 1, &batch[2..].to_vec(), &slots);
        assert!(late.is_empty());
        assert_eq!(keys.combiners[0].retained_groups(), 1);

        // A full fresh batch still works.
        let fresh = keys.combiners[0].combine_epoch(12, &batch, &slots);
        assert_eq!(fresh.len(), 1);
    }

    #[test]
    fn disagreeing_share_groups_are_dropped() {
        let mut keys = small_system(24);
        let mut r = rng(25);
        let gid = derive_gid("beta", 0);
        let slots = gid_slots(&keys.public, 0);
        let message = b"contested".to_vec();

        // Two signers use quorum A, one uses quorum B: nothing may
        // come out even though three shares arrived.
        let qa: BTreeSet<u32> = [1, 2, 3].into();
        let qb: BTreeSet<u32> = [1, 2, 4].into();
        let receivers = pids(&keys, &[0, 1]);
        let mut batch = sign_batch(&keys, &message, &qa, &receivers, &gid, 0, &mut r)[..2].to_vec();
        batch.push(
            sign(
                &keys.signer_keys[3],
                &keys.public,
                &message,
                &qb,
                &receivers,
                &gid,
                0,
                &mut r,
            )
            .unwrap(),
        );
        assert!(keys.combiners[0].combine_epoch(1, &batch, &slots).is_empty());
        assert_eq!(keys.combiners[0].retained_groups(), 0);

        // Same story when the receiver sets disagree.
        let other_receivers = pids(&keys, &[2, 3]);
        let mut batch = sign_batch(&keys, &message, &qa, &receivers, &gid, 0, &mut r)[..2].to_vec();
        batch.extend(sign_batch(&keys, &message, &qa, &other_receivers, &gid, 0, &mut r)[2..].to_vec());
        assert!(keys.combiners[0].combine_epoch(2, &batch, &slots).is_empty());

        // A clean resend afterwards completes.
        let clean = sign_batch(&keys, &message, &qa, &receivers, &gid, 0, &mut r);
        assert_eq!(keys.combiners[0].combine_epoch(3, &clean, &slots).len(), 1);
    }

    #[test]
    fn combiner_skips_garbage_and_foreign_ciphertexts() {
        let mut keys = small_system(26);
        let mut r = rng(27);
        let quorum: BTreeSet<u32> = [2, 3, 4].into();
        let receivers = pids(&keys, &[1, 4]);
        let gid = derive_gid("alpha", 0);
        let slots = gid_slots(&keys.public, 0);
        let message = b"amid noise".to_vec();

        let mut batch = vec![
            b"not a ciphertext at all".to_vec(),
            vec![0u8; 200],
        ];
        // A share encrypted to the *other* combiner must not ingest.
        batch.push(
            sign(
                &keys.signer_keys[0],
                &keys.public,
                &message,
                &BTreeSet::from([1, 2, 3]),
                &receivers,
                &gid,
                1,
                &mut r,
            )
            .unwrap(),
        );
        batch.extend(sign_batch(&keys, &message, &quorum, &receivers, &gid, 0, &mut r));
        // An unregistered gid is skipped too.
        batch.push(
            sign(
                &keys.signer_keys[0],
                &keys.public,
                &message,
                &BTreeSet::from([1, 2, 3]),
                &receivers,
                &derive_gid("alpha", 99),
                0,
                &mut r,
            )
            .unwrap(),
        );

        let outputs = keys.combiners[0].combine_epoch(1, &batch, &slots);
        assert_eq!(outputs.len(), 1);
        assert_eq!(outputs[0].message, message);
    }

    #[test]
    fn trace_needs_every_named_notary() {
        let mut keys = small_system(28);
        let mut r = rng(29);
        let quorum: BTreeSet<u32> = [1, 2, 4].into();
        let receivers = pids(&keys, &[0, 2, 3]);
        let gid = derive_gid("alpha", 0);
        let slots = gid_slots(&keys.public, 0);
        let slot = slots[&gid];
        let message = b"needs all three".to_vec();

        let batch = sign_batch(&keys, &message, &quorum, &receivers, &gid, 0, &mut r);
        let out = &keys.combiners[0].combine_epoch(1, &batch, &slots)[0];
        let target = keygen(SchemeId::Pke, None, &mut r);
        let tracer_pk = keys.public.tracer_enc_keys[0];

        let responders: Vec<&crate::protocol::NotaryAgent> = keys
            .notaries
            .iter()
            .filter(|a| receivers.contains(&a.pid()))
            .collect();
        let mut responses: Vec<Vec<u8>> = responders
            .iter()
            .map(|a| {
                a.respond(&keys.public, &message, &gid, slot, &out.signature, &tracer_pk, &mut r)
                    .unwrap()
            })
            .collect();

        // Two of three named notaries are not enough.
        let partial = responses[..2].to_vec();
        assert!(matches!(
            keys.tracers[0].trace(&message, &gid, slot, &out.signature, &partial, &target.public),
            Err(ProtocolError::TraceFailed)
        ));

        // Garbage, duplicates, and a response from an unnamed notary
        // do not prevent success once all named notaries answered.
        let outsider = keys
            .notaries
            .iter()
            .find(|a| !receivers.contains(&a.pid()))
            .unwrap();
        // The outsider cannot produce a respond() output for a set it
        // is not in; simulate a forged response by encrypting junk.
        let mut forged_payload = out.signature.digest().to_vec();
        forged_payload.extend_from_slice(&outsider.pid().0);
        forged_payload.extend_from_slice(&[0u8; 96 + 48 + 48 + 176]);
        responses.push(pke_encrypt(&tracer_pk, &forged_payload, &mut r).encode());
        responses.push(b"garbage response".to_vec());
        responses.push(responses[0].clone());
        let sealed = keys.tracers[0]
            .trace(&message, &gid, slot, &out.signature, &responses, &target.public)
            .unwrap();
        let opened = pke_decrypt(
            &target.secret,
            &HybridCiphertext::decode(&sealed).unwrap(),
        )
        .unwrap();
        assert_eq!(
            crate::protocol::unpad_signer_set(&opened, keys.public.params.n).unwrap(),
            quorum
        );
        assert!(!keys.tracers[0].diagnostics().is_empty());
    }

    #[test]
    fn enclave_boundaries_leak_no_quorum_or_receiver_bytes() {
        let mut keys = small_system(30);
        let mut r = rng(31);
        let quorum: BTreeSet<u32> = [1, 3, 4].into();
        let receivers = pids(&keys, &[1, 2]);
        let gid = derive_gid("beta", 0);
        let slots = gid_slots(&keys.public, 0);
        let slot = slots[&gid];
        let message = b"hygiene check".to_vec();

        let batch = sign_batch(&keys, &message, &quorum, &receivers, &gid, 0, &mut r);
        let out = &keys.combiners[0].combine_epoch(1, &batch, &slots)[0];
        let target = keygen(SchemeId::Pke, None, &mut r);
        let tracer_pk = keys.public.tracer_enc_keys[0];
        let responses: Vec<Vec<u8>> = keys
            .notaries
            .iter()
            .filter(|a| receivers.contains(&a.pid()))
            .map(|a| {
                a.respond(&keys.public, &message, &gid, slot, &out.signature, &tracer_pk, &mut r)
                    .unwrap()
            })
            .collect();
        keys.tracers[0]
            .trace(&message, &gid, slot, &out.signature, &responses, &target.public)
            .unwrap();

        let quorum_bytes = canonical_quorum(&quorum);
        let mut receiver_bytes = Vec::new();
        for pid in &receivers {
            pid.write(&mut receiver_bytes);
        }
        for log in [&keys.combiners[0].log, &keys.tracers[0].log] {
            assert!(!log.entries().is_empty());
            assert!(!log.contains(&quorum_bytes));
            assert!(!log.contains(&receiver_bytes));
            for pid in &receivers {
                assert!(!log.contains(&pid.0));
            }
        }
    }
}

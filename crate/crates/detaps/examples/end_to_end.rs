//! Full lifecycle of one accountable threshold signature: setup,
//! encrypted share submission, enclave combining, public
//! verification, notary awakening, and the notary-gated trace.
//!
//! Run with: cargo run --release --example end_to_end

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use detaps::groupmath::Encode;
use detaps::kase::{kase_adjust, kase_match_index, Gid};
use detaps::primitives::{keygen, pke_decrypt, HybridCiphertext, SchemeId};
use detaps::protocol::{derive_gid, setup, sign, unpad_signer_set, verify, SystemParams};

fn main() {
    let params = SystemParams {
        n: 5,
        n1: 2,
        n2: 1,
        n3: 5,
        t: 3,
        group_capacity: 2,
        groups: vec!["treasury".into(), "operations".into()],
    };
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut keys = setup(&params, &mut rng).expect("parameters are consistent");
    println!(
        "setup: {} signers (threshold {}), {} combiners, {} tracers, {} notaries",
        params.n, params.t, params.n1, params.n2, params.n3
    );

    // The treasury group signs in rotation period 0. The group id on
    // the wire is a pseudonym; only insiders can link it to the label.
    let gid = derive_gid("treasury", 0);
    let slot = keys.public.group_slots["treasury"];
    let registry: BTreeMap<Gid, u32> = [(gid, slot)].into();

    // Signers 1, 3, and 4 form the quorum and name notaries 0 and 2 as
    // the set whose agreement can later wake a trace.
    let message = b"transfer 40 units to maintenance".to_vec();
    let quorum: BTreeSet<u32> = [1, 3, 4].into();
    let receivers: BTreeSet<_> = [0, 2].iter().map(|&i| keys.notaries[i].pid()).collect();

    let mut batch = Vec::new();
    for &s in &quorum {
        let ct = sign(
            &keys.signer_keys[s as usize - 1],
            &keys.public,
            &message,
            &quorum,
            &receivers,
            &gid,
            0,
            &mut rng,
        )
        .expect("signing inputs are valid");
        println!("signer {s} submits an encrypted share ({} bytes)", ct.len());
        batch.push(ct);
    }

    // The epoch's combiner decrypts the shares inside its enclave and
    // publishes the finished signature.
    let outputs = keys.combiners[0].combine_epoch(0, &batch, &registry);
    assert_eq!(outputs.len(), 1, "the quorum was complete");
    let out = &outputs[0];
    let sig = &out.signature;
    println!(
        "combiner published a signature of {} bytes (quorum and notary set hidden)",
        sig.encode().len()
    );

    // Anyone can verify against the public keys and the registered
    // keyword slot for the group id.
    assert!(verify(&keys.public, &message, &gid, slot, sig));
    let mut mangled = out.message.clone();
    mangled[0] ^= 1;
    assert!(!verify(&keys.public, &mangled, &gid, slot, sig));
    println!("public verification accepts the signature and rejects a mangled message");

    // Each notary scans the published index with its own trapdoor.
    // Exactly the named notaries discover they are needed.
    let scope: BTreeSet<u32> = keys.public.group_slots.values().copied().collect();
    let mut awake = Vec::new();
    for (i, notary) in keys.notaries.iter().enumerate() {
        let adj = kase_adjust(&keys.public.kase_params, slot, &scope, &notary.trapdoor())
            .expect("slot is registered");
        if kase_match_index(&adj, &sig.index).is_some() {
            awake.push(i);
        }
    }
    println!("notaries awakened by index search: {awake:?}");
    assert_eq!(
        awake,
        vec![0, 2],
        "search awakening matches the receiver set chosen at signing time"
    );

    // The awakened notaries each verify the signature and answer with
    // an encrypted decryption share; the tracer needs every named one.
    let target = keygen(SchemeId::Pke, None, &mut rng);
    let tracer_pk = keys.public.tracer_enc_keys[0];
    let responses: Vec<Vec<u8>> = awake
        .iter()
        .map(|&i| {
            keys.notaries[i]
                .respond(&keys.public, &message, &gid, slot, sig, &tracer_pk, &mut rng)
                .expect("the signature verifies")
        })
        .collect();
    let sealed = keys.tracers[0]
        .trace(&message, &gid, slot, sig, &responses, &target.public)
        .expect("all named notaries responded");
    println!("tracer produced a sealed signer set ({} bytes)", sealed.len());

    // Only the trace target can open the seal.
    let ct = HybridCiphertext::decode(&sealed).expect("sealed output decodes");
    let opened = pke_decrypt(&target.secret, &ct).expect("target key opens the seal");
    let signers = unpad_signer_set(&opened, params.n).expect("padding is valid");
    println!("traced signing quorum: {signers:?}");
    assert_eq!(signers, quorum);
}

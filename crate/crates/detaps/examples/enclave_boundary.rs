//! What leaves an enclave, and what never does. Every byte a
//! simulated enclave emits goes through its boundary log, so this
//! example can audit directly that quorum annotations and receiver
//! identities stay inside, and show the retention, poisoning, and
//! opaque-failure behavior at the boundary.
//!
//! Run with: cargo run --release --example enclave_boundary

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use detaps::ats::canonical_quorum;
use detaps::kase::Gid;
use detaps::primitives::{keygen, SchemeId};
use detaps::protocol::{derive_gid, setup, sign, SystemParams, RETAIN_EPOCHS};

fn main() {
    let params = SystemParams {
        n: 4,
        n1: 2,
        n2: 1,
        n3: 4,
        t: 2,
        group_capacity: 1,
        groups: vec!["ops".into()],
    };
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut keys = setup(&params, &mut rng).unwrap();
    let gid = derive_gid("ops", 0);
    let slot = keys.public.group_slots["ops"];
    let registry: BTreeMap<Gid, u32> = [(gid, slot)].into();

    let quorum: BTreeSet<u32> = [1, 3].into();
    let receivers: BTreeSet<_> = [0, 1].iter().map(|&i| keys.notaries[i].pid()).collect();
    let share_for = |keys: &detaps::protocol::SystemKeys,
                     s: u32,
                     message: &[u8],
                     receivers: &BTreeSet<detaps::dtpke::Pid>,
                     combiner: u32,
                     rng: &mut ChaCha20Rng| {
        sign(
            &keys.signer_keys[s as usize - 1],
            &keys.public,
            message,
            &quorum,
            receivers,
            &gid,
            combiner,
            rng,
        )
        .unwrap()
    };

    // Epoch 0: one share, some garbage, and a ciphertext addressed to
    // the other combiner. Nothing publishable yet; the partial group
    // is retained inside.
    let message = b"rotate the relay credentials".to_vec();
    let batch = vec![
        share_for(&keys, 1, &message, &receivers, 0, &mut rng),
        b"not a ciphertext at all".to_vec(),
        share_for(&keys, 3, &message, &receivers, 1, &mut rng),
    ];
    let outputs = keys.combiners[0].combine_epoch(0, &batch, &registry);
    println!(
        "epoch 0: {} outputs, {} partial group retained (garbage and foreign bytes skipped)",
        outputs.len(),
        keys.combiners[0].retained_groups()
    );
    assert!(outputs.is_empty());
    assert_eq!(keys.combiners[0].retained_groups(), 1);

    // Epoch 1: the second quorum member's share arrives and the
    // signature is published.
    let batch = vec![share_for(&keys, 3, &message, &receivers, 0, &mut rng)];
    let outputs = keys.combiners[0].combine_epoch(1, &batch, &registry);
    assert_eq!(outputs.len(), 1);
    let published = outputs[0].clone();
    println!("epoch 1: completing share arrived, signature published");

    // Disagreement poisons a group: if the collected shares name
    // different receiver sets the enclave cannot tell which signer
    // lied, so it drops the whole group.
    let message2 = b"disputed directive".to_vec();
    let other_receivers: BTreeSet<_> = [2, 3].iter().map(|&i| keys.notaries[i].pid()).collect();
    let batch = vec![
        share_for(&keys, 1, &message2, &receivers, 0, &mut rng),
        share_for(&keys, 3, &message2, &other_receivers, 0, &mut rng),
    ];
    let outputs = keys.combiners[0].combine_epoch(2, &batch, &registry);
    assert!(outputs.is_empty());
    assert_eq!(keys.combiners[0].retained_groups(), 0);
    println!("epoch 2: shares disagreeing on the receiver set poisoned the group, dropped");

    // Retention has a horizon: a partial group left alone for more
    // than RETAIN_EPOCHS epochs is discarded.
    let message3 = b"long forgotten draft".to_vec();
    let batch = vec![share_for(&keys, 1, &message3, &receivers, 0, &mut rng)];
    keys.combiners[0].combine_epoch(10, &batch, &registry);
    assert_eq!(keys.combiners[0].retained_groups(), 1);
    keys.combiners[0].combine_epoch(10 + RETAIN_EPOCHS + 1, &[], &registry);
    assert_eq!(keys.combiners[0].retained_groups(), 0);
    println!(
        "epochs 10..{}: lone share expired after {RETAIN_EPOCHS} epochs without progress\n",
        10 + RETAIN_EPOCHS + 1
    );

    // The boundary audit. Everything the combiner ever emitted is in
    // its log; the quorum annotation bytes and the receiver
    // pseudo-identities must not appear anywhere in it. The published
    // signature (message included) is there, because publishing it is
    // the enclave's job.
    let log = &keys.combiners[0].log;
    for (label, bytes) in log.entries() {
        println!("boundary record: {label} ({} bytes)", bytes.len());
    }
    assert!(!log.contains(&canonical_quorum(&quorum)));
    for pid in receivers.iter().chain(other_receivers.iter()) {
        assert!(!log.contains(&pid.0));
    }
    assert!(log.contains(&message));
    println!("audit: no quorum annotation, no receiver pseudo-identity in any emitted byte\n");

    // Failures cross the tracer boundary as one opaque error; the
    // reasons stay inside as diagnostics.
    let target = keygen(SchemeId::Pke, None, &mut rng);
    let err = keys.tracers[0]
        .trace(
            &published.message,
            &gid,
            slot,
            &published.signature,
            &[],
            &target.public,
        )
        .unwrap_err();
    println!("outside the tracer: {err}");
    let diagnostics = keys.tracers[0].diagnostics();
    assert!(!diagnostics.is_empty());
    println!("inside the tracer:  {}", diagnostics.last().unwrap());
}

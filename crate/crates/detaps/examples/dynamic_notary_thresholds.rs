//! Per-signature tracing thresholds. Every signature names its own
//! notary set at signing time; the published bytes never reveal how
//! many were named, and a trace succeeds only with a response from
//! every named notary.
//!
//! Run with: cargo run --release --example dynamic_notary_thresholds

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use detaps::groupmath::Encode;
use detaps::kase::Gid;
use detaps::primitives::{keygen, SchemeId};
use detaps::protocol::{derive_gid, setup, sign, DetapsSignature, SystemParams};

fn main() {
    let params = SystemParams {
        n: 6,
        n1: 1,
        n2: 1,
        n3: 6,
        t: 3,
        group_capacity: 1,
        groups: vec!["ledger".into()],
    };
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut keys = setup(&params, &mut rng).unwrap();
    let gid = derive_gid("ledger", 0);
    let slot = keys.public.group_slots["ledger"];
    let registry: BTreeMap<Gid, u32> = [(gid, slot)].into();
    let quorum: BTreeSet<u32> = [2, 4, 6].into();

    // Three messages, each naming a different number of notaries.
    let mut published: Vec<(Vec<u8>, BTreeSet<usize>, DetapsSignature)> = Vec::new();
    for (epoch, named) in [vec![3], vec![0, 5], vec![1, 2, 4]].into_iter().enumerate() {
        let message = format!("directive {epoch}").into_bytes();
        let receivers: BTreeSet<_> = named.iter().map(|&i| keys.notaries[i].pid()).collect();
        let batch: Vec<_> = quorum
            .iter()
            .map(|&s| {
                sign(
                    &keys.signer_keys[s as usize - 1],
                    &keys.public,
                    &message,
                    &quorum,
                    &receivers,
                    &gid,
                    0,
                    &mut rng,
                )
                .unwrap()
            })
            .collect();
        let outputs = keys.combiners[0].combine_epoch(epoch as u64, &batch, &registry);
        assert_eq!(outputs.len(), 1);
        published.push((
            message,
            named.into_iter().collect(),
            outputs[0].signature.clone(),
        ));
    }

    // Identical size no matter how many notaries were named.
    let lens: BTreeSet<usize> = published.iter().map(|(_, _, s)| s.encode().len()).collect();
    for (message, named, sig) in &published {
        println!(
            "{:?}: {} notaries named, signature {} bytes",
            String::from_utf8_lossy(message),
            named.len(),
            sig.encode().len()
        );
    }
    assert_eq!(lens.len(), 1, "signature size is independent of the named set");
    println!("all signatures have identical length; the tracing threshold is private\n");

    // Tracing the 3-notary signature: any missing named response
    // leaves the tracer with nothing, one response from each named
    // notary opens it.
    let target = keygen(SchemeId::Pke, None, &mut rng);
    let tracer_pk = keys.public.tracer_enc_keys[0];
    let (message, named, sig) = &published[2];
    let respond = |keys: &detaps::protocol::SystemKeys, i: usize, rng: &mut ChaCha20Rng| {
        keys.notaries[i]
            .respond(&keys.public, message, &gid, slot, sig, &tracer_pk, rng)
            .unwrap()
    };

    for withhold in named {
        let partial: Vec<_> = named
            .iter()
            .filter(|&i| i != withhold)
            .map(|&i| respond(&keys, i, &mut rng))
            .collect();
        let refused = keys.tracers[0]
            .trace(message, &gid, slot, sig, &partial, &target.public)
            .is_err();
        println!(
            "notary {withhold} withholds: trace with {} of {} responses is refused: {refused}",
            partial.len(),
            named.len()
        );
        assert!(refused, "a single missing named notary blocks the trace");
    }

    let complete: Vec<_> = named.iter().map(|&i| respond(&keys, i, &mut rng)).collect();
    let sealed = keys.tracers[0]
        .trace(message, &gid, slot, sig, &complete, &target.public)
        .expect("every named notary agreed");
    println!(
        "all {} named notaries respond: trace succeeds ({} sealed bytes)",
        named.len(),
        sealed.len()
    );

    // Unnamed notaries cannot substitute for named ones: notary 0 was
    // not named on this signature, so it refuses outright, and even a
    // forged extra response would not cover the missing named share.
    let unnamed = keys.notaries[0]
        .respond(&keys.public, message, &gid, slot, sig, &tracer_pk, &mut rng)
        .is_err()
        || {
            // A non-receiver's share fails verification inside the
            // tracer instead.
            let mut padded: Vec<_> = named
                .iter()
                .skip(1)
                .map(|&i| respond(&keys, i, &mut rng))
                .collect();
            padded.push(respond(&keys, 0, &mut rng));
            keys.tracers[0]
                .trace(message, &gid, slot, sig, &padded, &target.public)
                .is_err()
        };
    assert!(unnamed);
    println!("an unnamed notary cannot stand in for a named one");
}

//! Exhaustive threshold boundaries at desk scale. The signing side
//! needs exactly `t` quorum members with one share each; the tracing
//! side needs `t'` verified decryption shares. One share short on
//! either side and nothing comes out.
//!
//! Run with: cargo run --release --example threshold_boundaries

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use detaps::ats::{ats_combine, ats_keygen, ats_sign, ats_trace, ats_verify};
use detaps::dtpke::{dtpke_combine, dtpke_setup, dtpke_share_decrypt, Pid};

/// All k-subsets of `items`, in lexicographic order.
fn subsets<T: Clone + Ord>(items: &[T], k: usize) -> Vec<BTreeSet<T>> {
    let mut out = Vec::new();
    let mut pick = vec![0usize; k];
    fn rec<T: Clone + Ord>(
        items: &[T],
        k: usize,
        start: usize,
        pick: &mut Vec<usize>,
        depth: usize,
        out: &mut Vec<BTreeSet<T>>,
    ) {
        if depth == k {
            out.push(pick[..k].iter().map(|&i| items[i].clone()).collect());
            return;
        }
        for i in start..items.len() {
            pick[depth] = i;
            rec(items, k, i + 1, pick, depth + 1, out);
        }
    }
    rec(items, k, 0, &mut pick, 0, &mut out);
    out
}

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);

    // Signing: 3 of 5. Every 3-quorum signs and combines; dropping
    // any single share from a quorum leaves the combiner stuck, and a
    // 2-member annotation is refused before a share even exists.
    let (pk, signer_keys) = ats_keygen(5, 3, &mut rng).unwrap();
    let msg = b"quarterly settlement";
    let signers: Vec<u32> = (1..=5).collect();

    let quorums = subsets(&signers, 3);
    for quorum in &quorums {
        let shares: Vec<_> = quorum
            .iter()
            .map(|&s| ats_sign(&signer_keys[s as usize - 1], msg, quorum).unwrap())
            .collect();
        let sig = ats_combine(&pk, msg, quorum, &shares).unwrap();
        assert!(ats_verify(&pk, msg, &sig));
        assert_eq!(ats_trace(&pk, msg, &sig).as_ref(), Some(quorum));

        for dropped in 0..shares.len() {
            let partial: Vec<_> = shares
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != dropped)
                .map(|(_, s)| s.clone())
                .collect();
            assert!(
                ats_combine(&pk, msg, quorum, &partial).is_err(),
                "two shares must never complete a 3-quorum"
            );
        }
    }
    println!(
        "signing 3-of-5: all {} quorums combine and trace; every 2-share attempt refused",
        quorums.len()
    );

    for quorum in subsets(&signers, 2) {
        let s = *quorum.first().unwrap();
        assert!(
            ats_sign(&signer_keys[s as usize - 1], msg, &quorum).is_err(),
            "no signer accepts an undersized quorum annotation"
        );
    }
    println!("signing 3-of-5: every 2-member quorum annotation rejected at signing");

    // Tracing: one ciphertext naming all 5 notaries with threshold 3.
    // Any 3 verified shares open it; any 2 do not.
    let mut authority = dtpke_setup(5, 5, &mut rng).unwrap();
    let notaries: Vec<_> = (0..5)
        .map(|i| authority.join(&format!("notary-{i}")).unwrap())
        .collect();
    let dpk = authority.public_key();
    let ck = authority.combine_key();
    drop(authority);

    let n_set: BTreeSet<Pid> = notaries.iter().map(|k| k.pid).collect();
    let secret = b"the sealed payload".to_vec();
    let (ct, _) = detaps::dtpke::dtpke_encrypt(&dpk, &n_set, 3, &secret, &mut rng).unwrap();
    let shares: Vec<_> = notaries
        .iter()
        .map(|k| dtpke_share_decrypt(&dpk, k, &ct).unwrap())
        .collect();

    let idx: Vec<usize> = (0..5).collect();
    let full = subsets(&idx, 3);
    for subset in &full {
        let chosen: Vec<_> = subset.iter().map(|&i| shares[i].clone()).collect();
        let opened = dtpke_combine(&ck, &dpk, &n_set, 3, &ct, &chosen).unwrap();
        assert_eq!(opened, secret);
    }
    let short = subsets(&idx, 2);
    for subset in &short {
        let chosen: Vec<_> = subset.iter().map(|&i| shares[i].clone()).collect();
        assert!(dtpke_combine(&ck, &dpk, &n_set, 3, &ct, &chosen).is_err());
    }
    println!(
        "tracing 3-of-5: all {} share triples decrypt; all {} pairs refused",
        full.len(),
        short.len()
    );
}

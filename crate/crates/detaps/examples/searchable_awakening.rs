//! Keyword search over published indexes: each notary holds one
//! trapdoor for its own pseudo-identity and learns nothing beyond
//! "this signature names me". Aggregate keys are scoped to group
//! slots, so a key for the payments group cannot even form a query
//! against the audit group.
//!
//! Run with: cargo run --release --example searchable_awakening

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use detaps::dtpke::Pid;
use detaps::kase::{
    kase_adjust, kase_encrypt, kase_extract, kase_keygen, kase_match_index, kase_setup,
    kase_trapdoor, KaseError,
};

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let params = kase_setup(3, &mut rng).unwrap();
    let (msk, mpk) = kase_keygen(&mut rng);

    // Two group slots: payments on slot 1, audit on slot 2.
    let payments = 1u32;
    let audit = 2u32;
    let both: BTreeSet<u32> = [payments, audit].into();
    let payments_only: BTreeSet<u32> = [payments].into();

    let key_both = kase_extract(&params, &msk, &both).unwrap();
    let key_payments = kase_extract(&params, &msk, &payments_only).unwrap();
    drop(msk);

    let alice = Pid(*b"alice...........");
    let bob = Pid(*b"bob.............");
    let carol = Pid(*b"carol...........");
    let dave = Pid(*b"dave............");

    // Index 1 names alice and bob under payments; index 2 names bob
    // and carol under audit. Both padded to 4 entries, so sizes and
    // shapes are identical regardless of how many were named.
    let (index1, _) =
        kase_encrypt(&params, &mpk, payments, &[alice, bob].into(), 4, &mut rng).unwrap();
    let (index2, _) =
        kase_encrypt(&params, &mpk, audit, &[bob, carol].into(), 4, &mut rng).unwrap();
    assert_eq!(index1.entries.len(), index2.entries.len());

    println!("who  | payments-index | audit-index");
    for (name, pid) in [("alice", alice), ("bob", bob), ("carol", carol), ("dave", dave)] {
        let td = kase_trapdoor(&key_both, &pid);
        let hit1 = kase_match_index(&kase_adjust(&params, payments, &both, &td).unwrap(), &index1);
        let hit2 = kase_match_index(&kase_adjust(&params, audit, &both, &td).unwrap(), &index2);
        println!(
            "{name:5}| {:14} | {}",
            hit1.map_or("-".into(), |p| format!("hit (entry {p})")),
            hit2.map_or("-".into(), |p| format!("hit (entry {p})")),
        );
        assert_eq!(hit1.is_some(), pid == alice || pid == bob);
        assert_eq!(hit2.is_some(), pid == bob || pid == carol);
    }
    println!("hits match the named sets exactly; entry positions are shuffled\n");

    // A key scoped to payments still finds bob in the payments index,
    // but cannot even form the audit query: the slot is outside the
    // key's scope.
    let td = kase_trapdoor(&key_payments, &bob);
    let adj = kase_adjust(&params, payments, &payments_only, &td).unwrap();
    assert!(kase_match_index(&adj, &index1).is_some());
    let refused = kase_adjust(&params, audit, &payments_only, &td);
    assert!(matches!(refused, Err(KaseError::OutOfScope { slot: 2 })));
    println!("payments-scoped key: finds bob under payments, audit query refused out of scope");

    // Cross-wiring a trapdoor against the wrong slot's query never
    // matches, even for a pid named in both indexes.
    let td = kase_trapdoor(&key_both, &bob);
    let adj_audit = kase_adjust(&params, audit, &both, &td).unwrap();
    assert!(kase_match_index(&adj_audit, &index1).is_none());
    println!("an audit-slot query never matches the payments index, even for bob");
}

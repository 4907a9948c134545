//! The consortium chain as an auditable bulletin board: membership
//! gating, epoch checks, pseudonymous search traffic, deterministic
//! worker election, and byte-exact replay of the whole log from
//! genesis.
//!
//! Run with: cargo run --release --example chain_replay

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use detaps::chainsim::{Chain, ChainError, GenesisConfig, Transaction, TxKind};
use detaps::dtpke::Pid;
use detaps::groupmath::Encode;
use detaps::kase::Gid;
use detaps::primitives::{keygen, SchemeId};
use detaps::protocol::{derive_gid, setup, sign, SystemParams};

fn main() {
    let params = SystemParams {
        n: 3,
        n1: 3,
        n2: 2,
        n3: 4,
        t: 2,
        group_capacity: 1,
        groups: vec!["ops".into()],
    };
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let keys = setup(&params, &mut rng).unwrap();
    let gid = derive_gid("ops", 0);
    let slot = keys.public.group_slots["ops"];
    let registry: BTreeMap<Gid, u32> = [(gid, slot)].into();

    let members: Vec<_> = (0..3).map(|_| keygen(SchemeId::Sig, None, &mut rng)).collect();
    let outsider = keygen(SchemeId::Sig, None, &mut rng);
    let genesis = GenesisConfig {
        election_seed: rng.gen(),
        combiner_pool: params.n1,
        tracer_pool: params.n2,
        kase_params: keys.public.kase_params.clone(),
        members: members.iter().map(|k| k.public).collect(),
        registry,
    };
    let mut chain = Chain::genesis(genesis.clone()).unwrap();

    // Share submissions are membership-gated and epoch-checked.
    let receivers: BTreeSet<Pid> = [keys.notaries[0].pid(), keys.notaries[1].pid()].into();
    let quorum: BTreeSet<u32> = [1, 2].into();
    let share = |rng: &mut ChaCha20Rng| {
        sign(
            &keys.signer_keys[0],
            &keys.public,
            b"an epoch-zero directive",
            &quorum,
            &receivers,
            &gid,
            0,
            rng,
        )
        .unwrap()
    };
    chain
        .submit(Transaction::create(TxKind::Sign, 0, share(&mut rng), &members[0]))
        .expect("member at the current epoch");
    let rejected = chain
        .submit(Transaction::create(TxKind::Sign, 0, share(&mut rng), &outsider))
        .unwrap_err();
    assert_eq!(rejected, ChainError::Unauthorized);
    let rejected = chain
        .submit(Transaction::create(TxKind::Sign, 3, share(&mut rng), &members[1]))
        .unwrap_err();
    assert_eq!(rejected, ChainError::WrongEpoch { got: 3, want: 0 });
    let mut forged = Transaction::create(TxKind::Sign, 0, share(&mut rng), &members[1]);
    forged.submitter = outsider.public;
    assert_eq!(chain.submit(forged).unwrap_err(), ChainError::BadSignature);
    println!("sign txs: member accepted; outsider, wrong epoch, forged signature rejected");

    // Search traffic is deliberately ungated: trapdoor queries come
    // from throwaway accounts, so querying never reveals which notary
    // is asking.
    let anonymous = keygen(SchemeId::Sig, None, &mut rng);
    let td = keys.notaries[2].trapdoor();
    chain
        .submit(Transaction::create(TxKind::Trapdoor, 0, td.encode(), &anonymous))
        .expect("trapdoor submissions are open to anyone");
    println!("trapdoor tx from a throwaway account accepted (pseudonymous search)");

    // A few more epochs of gated traffic.
    for epoch in 1..4 {
        chain.advance_epoch();
        chain
            .submit(Transaction::create(
                TxKind::Sign,
                epoch,
                share(&mut rng),
                &members[epoch as usize % 3],
            ))
            .unwrap();
    }

    // Worker election is a pure function of the genesis seed and the
    // epoch, so every party computes the same rota.
    let combiners: Vec<_> = (0..8).map(|e| chain.elect_combiner(e)).collect();
    let tracers: Vec<_> = (0..8).map(|e| chain.elect_tracer(e)).collect();
    println!("combiner rota for epochs 0..8: {combiners:?}");
    println!("tracer rota for epochs 0..8:   {tracers:?}");

    // Anyone holding the genesis config and the log reconstructs the
    // exact same state.
    let replayed = Chain::replay(genesis.clone(), chain.log()).unwrap();
    assert_eq!(replayed.state_digest(), chain.state_digest());
    assert_eq!(replayed.epoch(), chain.epoch());
    println!(
        "replay from genesis reproduces the state digest: {}",
        hex(&chain.state_digest())
    );

    // Tampering with any logged transaction breaks replay: the
    // submitter's signature no longer covers the bytes.
    let mut tampered = chain.log().to_vec();
    tampered[0].payload[0] ^= 1;
    assert_eq!(
        Chain::replay(genesis, &tampered).unwrap_err(),
        ChainError::BadSignature
    );
    println!("tampering with one logged payload byte makes replay fail");
}

fn hex(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

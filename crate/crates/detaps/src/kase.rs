//! Key-aggregate searchable encryption.
//!
//! Combiners attach a keyword index to every published signature: one
//! entry per notary that can wake a trace, padded with dummies to a
//! fixed width. A tracer holds a single constant-size aggregate key
//! covering all group slots; a notary turns that key (relayed via the
//! tracer) into a trapdoor for their own pseudo-identity and asks the
//! chain which stored indexes contain it. Neither the index nor the
//! trapdoor reveals the notary set or its size.
//!
//! The parameter ladder is broadcast-encryption style: powers
//! `g^(α^i)` for `i ∈ [0, 2·capacity]` with the `(capacity+1)`-th
//! power deliberately absent; that hole is what makes entries
//! unlinkable without an extracted key. Groups are addressed by slot
//! `1..=capacity`; mapping group identifiers to slots is the
//! registry's job, one layer up.

use std::collections::BTreeSet;
use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::dtpke::Pid;
use crate::groupmath::{
    hash_to_g1, multi_pairing, pairing, read_seq, write_seq, ByteReader, DecodeError, Encode,
    G1Point, G2Point, GtPoint, Scalar,
};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum KaseError {
    #[error("capacity must be at least 1")]
    BadCapacity,
    #[error("slot {slot} outside 1..={capacity}")]
    OutOfRange { slot: u32, capacity: u32 },
    #[error("{got} receivers exceed the index width {max}")]
    TooManyPids { got: u32, max: u32 },
    #[error("slot {slot} is not in the aggregate scope")]
    OutOfScope { slot: u32 },
}

/// Per-signing-period group identifier token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gid(pub [u8; 32]);

impl fmt::Display for Gid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "…")
    }
}

impl Encode for Gid {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(Gid(r.take(32)?.try_into().unwrap()))
    }
}

/// Public parameters: the G1 power ladder (with the hole), the G2
/// ladder needed on a type-3 curve, and the published shift value
/// `e(g_1, ĝ_capacity)` that stands in for the missing power.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KaseParams {
    pub capacity: u32,
    g1_pow: Vec<G1Point>,
    g2_pow: Vec<G2Point>,
    gt_shift: GtPoint,
}

impl KaseParams {
    /// The G1 ladder element `g^(α^i)`, absent at `capacity + 1`.
    pub fn g1_power(&self, i: u32) -> Option<&G1Point> {
        if i == self.capacity + 1 || i > 2 * self.capacity {
            return None;
        }
        // Stored densely with the hole position holding the identity;
        // the accessor is the only way in, so the hole stays a hole.
        self.g1_pow.get(i as usize)
    }

    fn g2_power(&self, i: u32) -> &G2Point {
        &self.g2_pow[i as usize]
    }

    /// Base of an index's `c2` component for group slot `slot`: the
    /// master public key shifted by the slot's ladder point. Exposed
    /// so verifiers can tie a `c2` to the slot it claims to be for.
    pub fn index_base(
        &self,
        mpk: &KaseMasterPublic,
        slot: u32,
    ) -> Result<G2Point, KaseError> {
        slot_check(self, slot)?;
        Ok(mpk.0.add(self.g2_power(slot)))
    }
}

impl Encode for KaseParams {
    fn write(&self, out: &mut Vec<u8>) {
        self.capacity.write(out);
        write_seq(&self.g1_pow, out);
        write_seq(&self.g2_pow, out);
        self.gt_shift.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let capacity = u32::read(r)?;
        let g1_pow = read_seq(r, 8192)?;
        let g2_pow = read_seq(r, 4096)?;
        let gt_shift = GtPoint::read(r)?;
        if capacity == 0
            || g1_pow.len() != 2 * capacity as usize + 1
            || g2_pow.len() != capacity as usize + 1
        {
            return Err(DecodeError::Malformed("ladder lengths inconsistent"));
        }
        Ok(KaseParams {
            capacity,
            g1_pow,
            g2_pow,
            gt_shift,
        })
    }
}

/// Master secret `γ` for extracting aggregate keys.
#[derive(Debug, Clone)]
pub struct KaseMasterSecret(Scalar);

/// Master public key `v̂ = ĝ^γ`, folded into every index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KaseMasterPublic(pub G2Point);

impl Encode for KaseMasterPublic {
    fn write(&self, out: &mut Vec<u8>) {
        self.0.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        G2Point::read(r).map(KaseMasterPublic)
    }
}

/// Constant-size search key for a set of group slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateKey {
    pub point: G1Point,
    pub scope: BTreeSet<u32>,
}

/// A notary's search trapdoor: the aggregate key bound to their
/// pseudo-identity keyword. Reveals neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trapdoor {
    pub point: G1Point,
}

impl Encode for Trapdoor {
    fn write(&self, out: &mut Vec<u8>) {
        self.point.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        G1Point::read(r).map(|point| Trapdoor { point })
    }
}

/// A trapdoor specialized to one group slot, ready for testing
/// against that slot's indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjustedTrapdoor {
    pub adjusted: G1Point,
    pub scope_pub: G1Point,
}

/// Keyword index stored alongside a published signature: two group
/// elements and exactly `pad_to` target-group entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KaseIndex {
    pub c1: G2Point,
    pub c2: G2Point,
    pub entries: Vec<GtPoint>,
}

impl Encode for KaseIndex {
    fn write(&self, out: &mut Vec<u8>) {
        self.c1.write(out);
        self.c2.write(out);
        write_seq(&self.entries, out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(KaseIndex {
            c1: G2Point::read(r)?,
            c2: G2Point::read(r)?,
            entries: read_seq(r, 4096)?,
        })
    }
}

/// Index-encryption randomness, kept by the encryptor for proofs.
#[derive(Debug, Clone)]
pub struct KaseEncWitness {
    pub t: Scalar,
}

fn keyword_point(pid: &Pid) -> G1Point {
    hash_to_g1(b"kase/keyword", &pid.0)
}

/// Generates public parameters for `capacity` group slots. The ladder
/// exponent is drawn and dropped here; nobody retains it.
pub fn kase_setup<R: RngCore + CryptoRng>(
    capacity: u32,
    rng: &mut R,
) -> Result<KaseParams, KaseError> {
    if capacity == 0 {
        return Err(KaseError::BadCapacity);
    }
    let alpha = Scalar::random(rng);
    let n = capacity as usize;
    let mut g1_pow = Vec::with_capacity(2 * n + 2);
    let mut power = Scalar::one();
    for i in 0..=2 * n {
        if i == n + 1 {
            // The hole: this power must never be published.
            g1_pow.push(G1Point::identity());
        } else {
            g1_pow.push(G1Point::generator().mul(&power));
        }
        power = power.mul(&alpha);
    }
    let mut g2_pow = Vec::with_capacity(n + 1);
    let mut power = Scalar::one();
    for _ in 0..=n {
        g2_pow.push(G2Point::generator().mul(&power));
        power = power.mul(&alpha);
    }
    let gt_shift = pairing(&g1_pow[1], g2_pow.last().unwrap());
    Ok(KaseParams {
        capacity,
        g1_pow,
        g2_pow,
        gt_shift,
    })
}

/// Draws the master keypair.
pub fn kase_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> (KaseMasterSecret, KaseMasterPublic) {
    let gamma = Scalar::random(rng);
    (
        KaseMasterSecret(gamma),
        KaseMasterPublic(G2Point::generator().mul(&gamma)),
    )
}

fn slot_check(params: &KaseParams, slot: u32) -> Result<(), KaseError> {
    if slot == 0 || slot > params.capacity {
        return Err(KaseError::OutOfRange {
            slot,
            capacity: params.capacity,
        });
    }
    Ok(())
}

/// Extracts one constant-size key covering every slot in `scope`.
pub fn kase_extract(
    params: &KaseParams,
    msk: &KaseMasterSecret,
    scope: &BTreeSet<u32>,
) -> Result<AggregateKey, KaseError> {
    let mut sum = G1Point::identity();
    for &slot in scope {
        slot_check(params, slot)?;
        let power = params
            .g1_power(params.capacity + 1 - slot)
            .expect("n+1−slot is inside the ladder for slot in range");
        sum = sum.add(power);
    }
    Ok(AggregateKey {
        point: sum.mul(&msk.0),
        scope: scope.clone(),
    })
}

/// Builds the keyword index for group slot `gid_slot` over receiver
/// set `n_set`, padded with reserved-range dummies to exactly
/// `pad_to` entries and shuffled.
pub fn kase_encrypt<R: RngCore + CryptoRng>(
    params: &KaseParams,
    mpk: &KaseMasterPublic,
    gid_slot: u32,
    n_set: &BTreeSet<Pid>,
    pad_to: u32,
    rng: &mut R,
) -> Result<(KaseIndex, KaseEncWitness), KaseError> {
    slot_check(params, gid_slot)?;
    if n_set.len() > pad_to as usize {
        return Err(KaseError::TooManyPids {
            got: n_set.len() as u32,
            max: pad_to,
        });
    }
    let t = Scalar::random(rng);
    let c1 = G2Point::generator().mul(&t);
    let c2 = mpk.0.add(params.g2_power(gid_slot)).mul(&t);
    let shift_t = params.gt_shift.mul(&t);

    let mut entries = Vec::with_capacity(pad_to as usize);
    for pid in n_set {
        entries.push(pairing(&keyword_point(pid).mul(&t), &G2Point::generator()).sub(&shift_t));
    }
    // Dummy keywords come from a reserved token space (17 bytes,
    // 0xFF-led) disjoint from 16-byte pids, so no real trapdoor can
    // ever match one.
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    for i in n_set.len() as u32..pad_to {
        let mut token = vec![0xFFu8];
        token.extend_from_slice(&nonce);
        token.extend_from_slice(&i.to_be_bytes());
        let dummy = hash_to_g1(b"kase/keyword", &token);
        entries.push(pairing(&dummy.mul(&t), &G2Point::generator()).sub(&shift_t));
    }
    // Shuffle so entry order carries no membership signal.
    for i in (1..entries.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        entries.swap(i, j);
    }
    Ok((KaseIndex { c1, c2, entries }, KaseEncWitness { t }))
}

/// Binds an aggregate key to one pseudo-identity keyword.
pub fn kase_trapdoor(key: &AggregateKey, pid: &Pid) -> Trapdoor {
    Trapdoor {
        point: key.point.add(&keyword_point(pid)),
    }
}

/// Specializes a trapdoor to one slot of its scope. Public: anyone
/// holding the trapdoor and parameters can run it.
pub fn kase_adjust(
    params: &KaseParams,
    gid_slot: u32,
    scope: &BTreeSet<u32>,
    td: &Trapdoor,
) -> Result<AdjustedTrapdoor, KaseError> {
    slot_check(params, gid_slot)?;
    if !scope.contains(&gid_slot) {
        return Err(KaseError::OutOfScope { slot: gid_slot });
    }
    let mut adjusted = td.point;
    let mut scope_pub = G1Point::identity();
    for &j in scope {
        slot_check(params, j)?;
        let back = params.capacity + 1 - j;
        scope_pub = scope_pub.add(params.g1_power(back).unwrap());
        if j != gid_slot {
            adjusted = adjusted.add(
                params
                    .g1_power(back + gid_slot)
                    .expect("n+1−j+i stays inside the ladder and off the hole"),
            );
        }
    }
    Ok(AdjustedTrapdoor {
        adjusted,
        scope_pub,
    })
}

/// The pairing ratio an adjusted trapdoor induces on an index; equal
/// to the entry value exactly when the keyword is present.
fn test_value(adj: &AdjustedTrapdoor, c1: &G2Point, c2: &G2Point) -> GtPoint {
    multi_pairing(&[adj.adjusted, adj.scope_pub.neg()], &[*c1, *c2])
}

/// Tests one index entry against an adjusted trapdoor.
pub fn kase_test(adj: &AdjustedTrapdoor, c1: &G2Point, c2: &G2Point, entry: &GtPoint) -> bool {
    test_value(adj, c1, c2) == *entry
}

/// Scans a whole index for the trapdoor's keyword, returning the
/// matching entry position. Decision-equivalent to [`kase_test`] on
/// each entry, with the pairings hoisted out of the loop.
pub fn kase_match_index(adj: &AdjustedTrapdoor, index: &KaseIndex) -> Option<usize> {
    let q = test_value(adj, &index.c1, &index.c2);
    index.entries.iter().position(|e| *e == q)
}

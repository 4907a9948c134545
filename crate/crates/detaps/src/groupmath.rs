//! Pairing-group arithmetic and canonical byte encodings.
//!
//! Everything above this module speaks in four opaque types: [`Scalar`]
//! (the prime field of exponents), [`G1Point`], [`G2Point`], and
//! [`GtPoint`] (the pairing target). The concrete curve is BLS12-381,
//! which offers roughly 128-bit security; no other module names the
//! curve or touches backend types directly.
//!
//! Encodings are fixed width and canonical: scalars are 32 big-endian
//! bytes, G1 compresses to 48 bytes, G2 to 96, Gt to 576. Decoding
//! rejects wrong lengths, non-canonical field encodings, off-curve
//! points, and trailing bytes. Sequences are 4-byte big-endian counts
//! followed by the elements. Hashing into scalars or either source
//! group always takes a domain tag, and distinct tags give independent
//! functions.

use ark_bls12_381::{Bls12_381, Fr, G1Projective, G2Projective};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::PrimeGroup;
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::{BigInteger, Field, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize, Compress, Validate};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use thiserror::Error;

/// Errors produced when decoding byte strings into group values.
#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum DecodeError {
    #[error("input ended before the value was complete")]
    TruncatedInput,
    #[error("input has trailing bytes after the value")]
    TrailingBytes,
    #[error("invalid {0} encoding")]
    InvalidElement(&'static str),
    #[error("malformed structure: {0}")]
    Malformed(&'static str),
}

/// Sequential reader over a byte slice, used by [`Encode::read`].
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    /// Takes the next `n` bytes, or fails if fewer remain.
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::TruncatedInput);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Succeeds only if every byte has been consumed.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes)
        }
    }
}

/// Canonical byte encoding. `decode` accepts exactly the strings that
/// `encode` produces: fixed-width elements, big-endian prefixes, no
/// slack and no trailing bytes.
pub trait Encode: Sized {
    fn write(&self, out: &mut Vec<u8>);
    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError>;

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = ByteReader::new(bytes);
        let v = Self::read(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

impl Encode for u32 {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let b = r.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }
}

impl Encode for u64 {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let b = r.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }
}

/// Byte strings carry a 4-byte big-endian length prefix.
impl Encode for Vec<u8> {
    fn write(&self, out: &mut Vec<u8>) {
        (self.len() as u32).write(out);
        out.extend_from_slice(self);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let n = u32::read(r)? as usize;
        Ok(r.take(n)?.to_vec())
    }
}

impl Encode for [u8; 32] {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(r.take(32)?.try_into().unwrap())
    }
}

/// Writes a sequence as a 4-byte big-endian count followed by the
/// elements in order.
pub fn write_seq<T: Encode>(items: &[T], out: &mut Vec<u8>) {
    (items.len() as u32).write(out);
    for item in items {
        item.write(out);
    }
}

/// Reads a sequence written by [`write_seq`], refusing counts above
/// `max` to bound allocation on malformed input.
pub fn read_seq<T: Encode>(r: &mut ByteReader<'_>, max: usize) -> Result<Vec<T>, DecodeError> {
    let n = u32::read(r)? as usize;
    if n > max {
        return Err(DecodeError::Malformed("sequence count exceeds bound"));
    }
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        items.push(T::read(r)?);
    }
    Ok(items)
}

/// Exponent-field element. 32-byte big-endian canonical encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub const ENCODED_LEN: usize = 32;

    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn one() -> Self {
        Scalar(Fr::from(1u64))
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Scalar(Fr::rand(rng))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 + other.0)
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 - other.0)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 * other.0)
    }

    pub fn neg(&self) -> Scalar {
        Scalar(-self.0)
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }
}

impl Encode for Scalar {
    fn write(&self, out: &mut Vec<u8>) {
        let bytes = self.0.into_bigint().to_bytes_be();
        debug_assert_eq!(bytes.len(), 32);
        out.extend_from_slice(&bytes);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let bytes = r.take(32)?;
        let parsed = Fr::from_be_bytes_mod_order(bytes);
        // Reject non-canonical encodings (values at or above the field
        // order) by checking the round trip.
        if parsed.into_bigint().to_bytes_be() != bytes {
            return Err(DecodeError::InvalidElement("scalar"));
        }
        Ok(Scalar(parsed))
    }
}

macro_rules! group_point {
    ($name:ident, $inner:ty, $len:expr, $label:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub struct $name(pub(crate) $inner);

        impl $name {
            pub const ENCODED_LEN: usize = $len;

            pub fn identity() -> Self {
                $name(<$inner>::zero())
            }

            pub fn is_identity(&self) -> bool {
                self.0.is_zero()
            }

            pub fn add(&self, other: &Self) -> Self {
                $name(self.0 + other.0)
            }

            pub fn sub(&self, other: &Self) -> Self {
                $name(self.0 - other.0)
            }

            pub fn neg(&self) -> Self {
                $name(-self.0)
            }

            pub fn mul(&self, s: &Scalar) -> Self {
                $name(self.0 * s.0)
            }
        }

        impl Encode for $name {
            fn write(&self, out: &mut Vec<u8>) {
                let mut buf = Vec::with_capacity($len);
                self.0
                    .serialize_with_mode(&mut buf, Compress::Yes)
                    .expect("serialization into a Vec cannot fail");
                debug_assert_eq!(buf.len(), $len);
                out.extend_from_slice(&buf);
            }

            fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
                let bytes = r.take($len)?;
                <$inner>::deserialize_with_mode(bytes, Compress::Yes, Validate::Yes)
                    .map($name)
                    .map_err(|_| DecodeError::InvalidElement($label))
            }
        }
    };
}

group_point!(G1Point, G1Projective, 48, "G1 point");
group_point!(G2Point, G2Projective, 96, "G2 point");
group_point!(GtPoint, PairingOutput<Bls12_381>, 576, "Gt element");

impl G1Point {
    pub fn generator() -> Self {
        G1Point(G1Projective::generator())
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        G1Point(G1Projective::rand(rng))
    }
}

impl G2Point {
    pub fn generator() -> Self {
        G2Point(G2Projective::generator())
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        G2Point(G2Projective::rand(rng))
    }
}

impl GtPoint {
    /// `e(g, ĝ)`, the canonical generator of the target group.
    pub fn generator() -> Self {
        GtPoint(Bls12_381::pairing(
            G1Projective::generator(),
            G2Projective::generator(),
        ))
    }
}

/// Bilinear map `e: G1 × G2 → Gt`.
pub fn pairing(a: &G1Point, b: &G2Point) -> GtPoint {
    GtPoint(Bls12_381::pairing(a.0, b.0))
}

/// Product of pairings `∏ e(a_i, b_i)` in one multi-Miller loop.
///
/// The slices must have equal length.
pub fn multi_pairing(a: &[G1Point], b: &[G2Point]) -> GtPoint {
    assert_eq!(a.len(), b.len(), "multi_pairing arity mismatch");
    let left: Vec<G1Projective> = a.iter().map(|p| p.0).collect();
    let right: Vec<G2Projective> = b.iter().map(|p| p.0).collect();
    GtPoint(Bls12_381::multi_pairing(left, right))
}

type Hm = Hmac<Sha256>;

fn keyed_mac(tag: &[u8], data: &[u8]) -> [u8; 32] {
    assert!(!tag.is_empty(), "domain tag must be nonempty");
    let mut mac = Hm::new_from_slice(tag).expect("HMAC accepts any key length");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// Keyed 32-byte digest under a domain tag. Distinct tags give
/// independent functions over the same input.
pub fn digest32(tag: &[u8], data: &[u8]) -> [u8; 32] {
    keyed_mac(tag, data)
}

/// Hashes arbitrary bytes to a uniform scalar under a domain tag.
///
/// Expands to 64 bytes before reduction so the output bias is
/// negligible.
pub fn hash_to_scalar(tag: &[u8], data: &[u8]) -> Scalar {
    assert!(!tag.is_empty(), "domain tag must be nonempty");
    let mut wide = [0u8; 64];
    let mut block = Vec::with_capacity(data.len() + 1);
    block.extend_from_slice(data);
    block.push(0);
    wide[..32].copy_from_slice(&keyed_mac(tag, &block));
    *block.last_mut().unwrap() = 1;
    wide[32..].copy_from_slice(&keyed_mac(tag, &block));
    Scalar(Fr::from_be_bytes_mod_order(&wide))
}

/// Hashes arbitrary bytes to a G1 point with unknown discrete log.
pub fn hash_to_g1(tag: &[u8], data: &[u8]) -> G1Point {
    assert!(!tag.is_empty(), "domain tag must be nonempty");
    let hasher = MapToCurveBasedHasher::<
        G1Projective,
        DefaultFieldHasher<Sha256, 128>,
        WBMap<ark_bls12_381::g1::Config>,
    >::new(tag)
    .expect("hash-to-curve setup is infallible for this curve");
    G1Point(hasher.hash(data).expect("hash-to-curve cannot fail").into())
}

/// Hashes arbitrary bytes to a G2 point with unknown discrete log.
pub fn hash_to_g2(tag: &[u8], data: &[u8]) -> G2Point {
    assert!(!tag.is_empty(), "domain tag must be nonempty");
    let hasher = MapToCurveBasedHasher::<
        G2Projective,
        DefaultFieldHasher<Sha256, 128>,
        WBMap<ark_bls12_381::g2::Config>,
    >::new(tag)
    .expect("hash-to-curve setup is infallible for this curve");
    G2Point(hasher.hash(data).expect("hash-to-curve cannot fail").into())
}

/// Lagrange coefficients at zero for pairwise-distinct nonzero
/// evaluation points: `λ_i = ∏_{j≠i} x_j / (x_j − x_i)`.
///
/// Returns `None` when points repeat or include zero.
pub fn lagrange_at_zero(xs: &[Scalar]) -> Option<Vec<Scalar>> {
    for (i, x) in xs.iter().enumerate() {
        if x.is_zero() || xs[..i].contains(x) {
            return None;
        }
    }
    let mut coeffs = Vec::with_capacity(xs.len());
    for (i, xi) in xs.iter().enumerate() {
        let mut num = Scalar::one();
        let mut den = Scalar::one();
        for (j, xj) in xs.iter().enumerate() {
            if i != j {
                num = num.mul(xj);
                den = den.mul(&xj.sub(xi));
            }
        }
        coeffs.push(num.mul(&den.invert()?));
    }
    Some(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ark_ff::BigInt;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn generators_have_prime_order() {
        let order: BigInt<4> = Fr::MODULUS;
        assert!(G1Point(G1Projective::generator().mul_bigint(order)).is_identity());
        assert!(G2Point(G2Projective::generator().mul_bigint(order)).is_identity());
        assert!(!G1Point::generator().is_identity());
        assert!(!G2Point::generator().is_identity());
    }

    #[test]
    fn pairing_is_bilinear() {
        let mut r = rng(1);
        for _ in 0..8 {
            let a = Scalar::random(&mut r);
            let b = Scalar::random(&mut r);
            let lhs = pairing(
                &G1Point::generator().mul(&a),
                &G2Point::generator().mul(&b),
            );
            let rhs = GtPoint::generator().mul(&a.mul(&b));
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn multi_pairing_matches_product() {
        let mut r = rng(2);
        let a: Vec<G1Point> = (0..4).map(|_| G1Point::random(&mut r)).collect();
        let b: Vec<G2Point> = (0..4).map(|_| G2Point::random(&mut r)).collect();
        let mut product = GtPoint::identity();
        for (x, y) in a.iter().zip(&b) {
            product = product.add(&pairing(x, y));
        }
        assert_eq!(multi_pairing(&a, &b), product);
    }

    #[test]
    fn scalar_inverse_of_zero_is_none() {
        assert!(Scalar::zero().invert().is_none());
        let two = Scalar::from_u64(2);
        assert_eq!(two.mul(&two.invert().unwrap()), Scalar::one());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scalar_field_axioms(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let (a, b, c) = (Scalar::from_u64(a), Scalar::from_u64(b), Scalar::from_u64(c));
            prop_assert_eq!(a.add(&b), b.add(&a));
            prop_assert_eq!(a.mul(&b), b.mul(&a));
            prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
            prop_assert_eq!(a.add(&a.neg()), Scalar::zero());
        }

        #[test]
        fn scalar_encoding_round_trips(seed in any::<u64>()) {
            let s = Scalar::random(&mut rng(seed));
            let bytes = s.encode();
            prop_assert_eq!(bytes.len(), Scalar::ENCODED_LEN);
            prop_assert_eq!(Scalar::decode(&bytes).unwrap(), s);
        }
    }

    #[test]
    fn encodings_are_canonical_on_samples() {
        let mut r = rng(3);
        for _ in 0..1000 {
            let s = Scalar::random(&mut r);
            assert_eq!(Scalar::decode(&s.encode()).unwrap(), s);
        }
        for _ in 0..200 {
            let p = G1Point::random(&mut r);
            let bytes = p.encode();
            assert_eq!(bytes.len(), G1Point::ENCODED_LEN);
            assert_eq!(G1Point::decode(&bytes).unwrap(), p);
        }
        for _ in 0..100 {
            let p = G2Point::random(&mut r);
            let bytes = p.encode();
            assert_eq!(bytes.len(), G2Point::ENCODED_LEN);
            assert_eq!(G2Point::decode(&bytes).unwrap(), p);
        }
        for _ in 0..20 {
            let p = GtPoint::generator().mul(&Scalar::random(&mut r));
            let bytes = p.encode();
            assert_eq!(bytes.len(), GtPoint::ENCODED_LEN);
            assert_eq!(GtPoint::decode(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn identity_points_round_trip() {
        assert_eq!(
            G1Point::decode(&G1Point::identity().encode()).unwrap(),
            G1Point::identity()
        );
        assert_eq!(
            G2Point::decode(&G2Point::identity().encode()).unwrap(),
            G2Point::identity()
        );
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(Scalar::decode(&[0xFF; 32]).is_err());
        assert!(G1Point::decode(&[0xFF; 48]).is_err());
        assert!(G2Point::decode(&[0xFF; 96]).is_err());
        assert!(GtPoint::decode(&[0xFF; 576]).is_err());
    }

    #[test]
    fn decode_rejects_wrong_lengths() {
        let s = Scalar::one().encode();
        assert_eq!(Scalar::decode(&s[..31]), Err(DecodeError::TruncatedInput));
        let mut long = s.clone();
        long.push(0);
        assert_eq!(Scalar::decode(&long), Err(DecodeError::TrailingBytes));
        let p = G1Point::generator().encode();
        assert_eq!(G1Point::decode(&p[..47]), Err(DecodeError::TruncatedInput));
    }

    #[test]
    fn scalar_decoding_rejects_values_at_or_above_order() {
        // The field order itself must not decode.
        let order = Fr::MODULUS.to_bytes_be();
        assert!(Scalar::decode(&order).is_err());
        // One below the order must decode.
        let max = Scalar(Fr::zero() - Fr::from(1u64));
        assert_eq!(Scalar::decode(&max.encode()).unwrap(), max);
    }

    #[test]
    fn hash_to_scalar_separates_domains() {
        let msg = b"shared input";
        let a = hash_to_scalar(b"fs", msg);
        let b = hash_to_scalar(b"gid", msg);
        assert_ne!(a, b);
        assert_eq!(a, hash_to_scalar(b"fs", msg));
        assert_ne!(hash_to_scalar(b"fs", b"other input"), a);
    }

    #[test]
    fn hash_to_groups_separate_domains() {
        let msg = b"shared input";
        assert_ne!(hash_to_g1(b"a", msg), hash_to_g1(b"b", msg));
        assert_eq!(hash_to_g1(b"a", msg), hash_to_g1(b"a", msg));
        assert_ne!(hash_to_g2(b"a", msg), hash_to_g2(b"b", msg));
        assert_eq!(hash_to_g2(b"a", msg), hash_to_g2(b"a", msg));
        // Hashed points land in the right prime-order subgroup.
        let h = hash_to_g1(b"a", msg);
        assert_eq!(G1Point::decode(&h.encode()).unwrap(), h);
    }

    #[test]
    fn digest32_is_deterministic_and_tagged() {
        assert_eq!(digest32(b"t", b"x"), digest32(b"t", b"x"));
        assert_ne!(digest32(b"t", b"x"), digest32(b"u", b"x"));
        assert_ne!(digest32(b"t", b"x"), digest32(b"t", b"y"));
    }

    #[test]
    fn sequence_layout_is_count_prefixed() {
        let v: Vec<u8> = vec![1, 2, 3];
        assert_eq!(v.encode(), vec![0, 0, 0, 3, 1, 2, 3]);
        let mut out = Vec::new();
        write_seq(&[7u32, 9u32], &mut out);
        assert_eq!(out, vec![0, 0, 0, 2, 0, 0, 0, 7, 0, 0, 0, 9]);
        let mut r = ByteReader::new(&out);
        let back: Vec<u32> = read_seq(&mut r, 16).unwrap();
        assert_eq!(back, vec![7, 9]);
    }

    #[test]
    fn sequence_read_respects_bound() {
        let mut out = Vec::new();
        write_seq(&[1u32; 8], &mut out);
        let mut r = ByteReader::new(&out);
        assert!(read_seq::<u32>(&mut r, 4).is_err());
    }

    #[test]
    fn lagrange_reconstructs_constant_term() {
        let mut r = rng(4);
        // Polynomial p(x) = 5 + 3x + 7x² evaluated at x ∈ {1, 2, 3}.
        let eval = |x: u64| {
            Scalar::from_u64(5)
                .add(&Scalar::from_u64(3).mul(&Scalar::from_u64(x)))
                .add(&Scalar::from_u64(7).mul(&Scalar::from_u64(x * x)))
        };
        let xs: Vec<Scalar> = [1u64, 2, 3].iter().map(|&x| Scalar::from_u64(x)).collect();
        let coeffs = lagrange_at_zero(&xs).unwrap();
        let mut acc = Scalar::zero();
        for (c, &x) in coeffs.iter().zip(&[1u64, 2, 3]) {
            acc = acc.add(&c.mul(&eval(x)));
        }
        assert_eq!(acc, Scalar::from_u64(5));
        // Degenerate inputs are rejected.
        assert!(lagrange_at_zero(&[Scalar::zero()]).is_none());
        assert!(lagrange_at_zero(&[xs[0], xs[0]]).is_none());
        let _ = Scalar::random(&mut r);
    }
}

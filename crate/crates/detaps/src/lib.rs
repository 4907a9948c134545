//! Decentralized threshold signatures with dynamically private
//! accountability, simulated at desk scale.
//!
//! A consortium of `n` signers produces threshold signatures whose
//! signing quorum stays hidden from the public but can be recovered by
//! an authorized tracer, and only when a quorum of `t′` notaries,
//! chosen per signature at signing time, agrees to wake the trace.
//! Combining and tracing run inside simulated enclaves; everything the
//! parties exchange travels over a simulated consortium chain.
//!
//! Layering, bottom up:
//!
//! - [`groupmath`]: pairing-group arithmetic and canonical encodings.
//! - [`primitives`]: commitments, signatures, hybrid encryption.
//! - [`ats`]: accountable threshold signatures (sign/combine/verify/trace).
//! - [`dtpke`]: dynamic threshold encryption with verifiable shares.
//! - [`kase`]: key-aggregate searchable encryption for trace awakening.
//! - [`nizk`]: the combiner's proof of well-formedness.
//! - [`protocol`]: the five protocol operations plus enclave simulation.
//! - [`chainsim`]: transaction pools, worker election, search contract.
//! - [`scenario`]: seeded end-to-end runs, reports, and benches.
//!
//! Start with `examples/end_to_end.rs` for the full lifecycle, or run
//! the `detaps-sim` binary against a key=value config. Every run is
//! deterministic given its seed.

pub mod ats;
pub mod chainsim;
pub mod dtpke;
pub mod groupmath;
pub mod kase;
pub mod nizk;
pub mod primitives;
pub mod protocol;
pub mod scenario;

//! A deterministic consortium-chain simulation.
//!
//! The chain is a bulletin board with five transaction kinds: signer
//! share submissions, published signatures, trapdoor queries, notary
//! responses, and trace calls. Consortium-internal kinds are gated on
//! a member list fixed at genesis; trapdoor and response submissions
//! are open so notaries can act under fresh keys and stay
//! pseudonymous. State is derived purely from the genesis
//! configuration and the ordered transaction log, so any copy of the
//! log replays to byte-identical state.
//!
//! The chain never opens ciphertexts and never verifies published
//! signatures; it only enforces shape, routing, and authorization.
//! Cryptographic checking belongs to verifiers, notaries, and
//! enclaves.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::groupmath::{digest32, write_seq, ByteReader, DecodeError, Encode, G1Point};
use crate::kase::{kase_adjust, kase_match_index, AdjustedTrapdoor, Gid, KaseParams, Trapdoor};
use crate::primitives::{sig_sign, sig_verify, KeyPair, SchnorrSig};
use crate::protocol::{CombineOutput, DetapsSignature};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("invalid genesis: {0}")]
    InvalidGenesis(&'static str),
    #[error("transaction is for epoch {got}, chain is at {want}")]
    WrongEpoch { got: u64, want: u64 },
    #[error("submitter is not a consortium member")]
    Unauthorized,
    #[error("transaction signature invalid")]
    BadSignature,
    #[error("malformed transaction: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    /// An encrypted signature share, addressed to a combiner.
    Sign,
    /// A published signature from a combiner enclave.
    Comb,
    /// A notary's search query (also an audit record).
    Trapdoor,
    /// A notary's encrypted decryption share for one signature.
    Response,
    /// A request that a tracer open one signature.
    TraceCall,
}

impl TxKind {
    fn byte(self) -> u8 {
        match self {
            TxKind::Sign => 1,
            TxKind::Comb => 2,
            TxKind::Trapdoor => 3,
            TxKind::Response => 4,
            TxKind::TraceCall => 5,
        }
    }

    fn from_byte(b: u8) -> Result<Self, DecodeError> {
        Ok(match b {
            1 => TxKind::Sign,
            2 => TxKind::Comb,
            3 => TxKind::Trapdoor,
            4 => TxKind::Response,
            5 => TxKind::TraceCall,
            _ => return Err(DecodeError::Malformed("unknown transaction kind")),
        })
    }

    /// Whether this kind requires a consortium member as submitter.
    fn gated(self) -> bool {
        matches!(self, TxKind::Sign | TxKind::Comb | TxKind::TraceCall)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub kind: TxKind,
    pub epoch: u64,
    pub payload: Vec<u8>,
    pub submitter: G1Point,
    pub sig: SchnorrSig,
}

impl Encode for Transaction {
    fn write(&self, out: &mut Vec<u8>) {
        out.push(self.kind.byte());
        self.epoch.write(out);
        self.payload.write(out);
        self.submitter.write(out);
        self.sig.write(out);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let kind = TxKind::from_byte(r.take(1)?[0])?;
        Ok(Transaction {
            kind,
            epoch: u64::read(r)?,
            payload: Vec::<u8>::read(r)?,
            submitter: G1Point::read(r)?,
            sig: SchnorrSig::read(r)?,
        })
    }
}

fn tx_message(kind: TxKind, epoch: u64, payload: &[u8]) -> Vec<u8> {
    let mut bytes = vec![kind.byte()];
    epoch.write(&mut bytes);
    (payload.len() as u32).write(&mut bytes);
    bytes.extend_from_slice(payload);
    digest32(b"chain/tx", &bytes).to_vec()
}

impl Transaction {
    /// Builds and signs a transaction for the given epoch.
    pub fn create(kind: TxKind, epoch: u64, payload: Vec<u8>, keys: &KeyPair) -> Transaction {
        let sig = sig_sign(&keys.secret, &tx_message(kind, epoch, &payload));
        Transaction {
            kind,
            epoch,
            payload,
            submitter: keys.public,
            sig,
        }
    }
}

/// Routing wrapper for a notary response: the signature digest in the
/// clear for pool filtering, then the ciphertext. The digest is
/// untrusted routing data; the tracer enclave re-checks the binding
/// inside the ciphertext.
pub fn response_payload(sig_digest: [u8; 32], ciphertext: &[u8]) -> Vec<u8> {
    let mut out = sig_digest.to_vec();
    out.extend_from_slice(ciphertext);
    out
}

pub fn trace_call_payload(sig_digest: [u8; 32], target_pk: &G1Point) -> Vec<u8> {
    let mut out = sig_digest.to_vec();
    target_pk.write(&mut out);
    out
}

/// Everything fixed at chain start.
#[derive(Debug, Clone)]
pub struct GenesisConfig {
    pub election_seed: [u8; 32],
    /// Combiner pool size for worker election.
    pub combiner_pool: u32,
    /// Tracer pool size for worker election.
    pub tracer_pool: u32,
    /// Keyword parameters the search contract evaluates under.
    pub kase_params: KaseParams,
    /// Accounts allowed to submit gated transaction kinds.
    pub members: Vec<G1Point>,
    /// Registered group ids and their keyword slots.
    pub registry: BTreeMap<Gid, u32>,
}

impl Encode for GenesisConfig {
    fn write(&self, out: &mut Vec<u8>) {
        self.election_seed.write(out);
        self.combiner_pool.write(out);
        self.tracer_pool.write(out);
        self.kase_params.write(out);
        write_seq(&self.members, out);
        (self.registry.len() as u32).write(out);
        for (gid, slot) in &self.registry {
            gid.write(out);
            slot.write(out);
        }
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let election_seed = <[u8; 32]>::read(r)?;
        let combiner_pool = u32::read(r)?;
        let tracer_pool = u32::read(r)?;
        let kase_params = KaseParams::read(r)?;
        let members = crate::groupmath::read_seq(r, 4096)?;
        let count = u32::read(r)? as usize;
        if count > 4096 {
            return Err(DecodeError::Malformed("registry too large"));
        }
        let mut registry = BTreeMap::new();
        for _ in 0..count {
            let gid = Gid::read(r)?;
            let slot = u32::read(r)?;
            registry.insert(gid, slot);
        }
        Ok(GenesisConfig {
            election_seed,
            combiner_pool,
            tracer_pool,
            kase_params,
            members,
            registry,
        })
    }
}

/// One published signature as the chain stores it.
#[derive(Debug, Clone)]
pub struct StoredSignature {
    pub gid: Gid,
    pub slot: u32,
    pub message: Vec<u8>,
    pub signature: DetapsSignature,
}

/// Searchable row derived from a published signature.
#[derive(Debug, Clone)]
pub struct IndexRow {
    pub gid: Gid,
    pub slot: u32,
    pub sig_digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchHit {
    pub gid: Gid,
    pub slot: u32,
    pub sig_digest: [u8; 32],
}

#[derive(Debug, Clone)]
pub struct TraceCallRecord {
    pub epoch: u64,
    pub sig_digest: [u8; 32],
    pub target_pk: G1Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub epoch: u64,
    pub position: usize,
}

/// The chain: a validated append-only log plus state derived from it.
#[derive(Debug)]
pub struct Chain {
    genesis: GenesisConfig,
    epoch: u64,
    log: Vec<Transaction>,
    state_digest: [u8; 32],
    sign_pool: BTreeMap<u64, Vec<Vec<u8>>>,
    index_rows: Vec<IndexRow>,
    sig_store: BTreeMap<[u8; 32], StoredSignature>,
    response_pool: BTreeMap<[u8; 32], Vec<Vec<u8>>>,
    trapdoor_queries: Vec<(u64, Trapdoor)>,
    trace_calls: Vec<TraceCallRecord>,
}

impl Chain {
    pub fn genesis(config: GenesisConfig) -> Result<Chain, ChainError> {
        if config.combiner_pool == 0 || config.tracer_pool == 0 {
            return Err(ChainError::InvalidGenesis("worker pools must be nonempty"));
        }
        if config.members.is_empty() {
            return Err(ChainError::InvalidGenesis("member list must be nonempty"));
        }
        if config.registry.is_empty() {
            return Err(ChainError::InvalidGenesis("registry must be nonempty"));
        }
        for &slot in config.registry.values() {
            if slot == 0 || slot > config.kase_params.capacity {
                return Err(ChainError::InvalidGenesis(
                    "registry slot outside keyword capacity",
                ));
            }
        }
        let state_digest = digest32(b"chain/genesis", &config.encode());
        Ok(Chain {
            genesis: config,
            epoch: 0,
            log: Vec::new(),
            state_digest,
            sign_pool: BTreeMap::new(),
            index_rows: Vec::new(),
            sig_store: BTreeMap::new(),
            response_pool: BTreeMap::new(),
            trapdoor_queries: Vec::new(),
            trace_calls: Vec::new(),
        })
    }

    /// Rebuilds a chain from a genesis configuration and a
    /// transaction log, advancing epochs as the log demands.
    pub fn replay(config: GenesisConfig, log: &[Transaction]) -> Result<Chain, ChainError> {
        let mut chain = Chain::genesis(config)?;
        for tx in log {
            while chain.epoch < tx.epoch {
                chain.advance_epoch();
            }
            chain.submit(tx.clone())?;
        }
        Ok(chain)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn advance_epoch(&mut self) -> u64 {
        self.epoch += 1;
        self.epoch
    }

    pub fn log(&self) -> &[Transaction] {
        &self.log
    }

    /// Digest of genesis plus every accepted transaction, in order.
    pub fn state_digest(&self) -> [u8; 32] {
        self.state_digest
    }

    /// Consumes the chain, returning the genesis configuration it was
    /// built from (enough, with the log, to replay it elsewhere).
    pub fn into_genesis(self) -> GenesisConfig {
        self.genesis
    }

    /// Validates and appends one transaction. Nothing is mutated on
    /// rejection.
    pub fn submit(&mut self, tx: Transaction) -> Result<Receipt, ChainError> {
        if tx.epoch != self.epoch {
            return Err(ChainError::WrongEpoch {
                got: tx.epoch,
                want: self.epoch,
            });
        }
        if !sig_verify(
            &tx.submitter,
            &tx_message(tx.kind, tx.epoch, &tx.payload),
            &tx.sig,
        ) {
            return Err(ChainError::BadSignature);
        }
        if tx.kind.gated() && !self.genesis.members.contains(&tx.submitter) {
            return Err(ChainError::Unauthorized);
        }

        // Kind-specific validation first so rejected transactions
        // leave no trace in derived state.
        match tx.kind {
            TxKind::Sign => {}
            TxKind::Comb => {
                let out = CombineOutput::decode(&tx.payload)
                    .map_err(|_| ChainError::Malformed("undecodable published signature"))?;
                let Some(&slot) = self.genesis.registry.get(&out.gid) else {
                    return Err(ChainError::Malformed("group id not registered"));
                };
                let digest = out.signature.digest();
                if self.sig_store.contains_key(&digest) {
                    return Err(ChainError::Malformed("signature already published"));
                }
                self.index_rows.push(IndexRow {
                    gid: out.gid,
                    slot,
                    sig_digest: digest,
                });
                self.sig_store.insert(
                    digest,
                    StoredSignature {
                        gid: out.gid,
                        slot,
                        message: out.message,
                        signature: out.signature,
                    },
                );
            }
            TxKind::Trapdoor => {
                let td = Trapdoor::decode(&tx.payload)
                    .map_err(|_| ChainError::Malformed("undecodable trapdoor"))?;
                self.trapdoor_queries.push((tx.epoch, td));
            }
            TxKind::Response => {
                if tx.payload.len() < 33 {
                    return Err(ChainError::Malformed("response payload too short"));
                }
                let digest: [u8; 32] = tx.payload[..32].try_into().expect("length checked");
                if !self.sig_store.contains_key(&digest) {
                    return Err(ChainError::Malformed(
                        "response references unknown signature",
                    ));
                }
                self.response_pool
                    .entry(digest)
                    .or_default()
                    .push(tx.payload[32..].to_vec());
            }
            TxKind::TraceCall => {
                let mut r = ByteReader::new(&tx.payload);
                let digest = <[u8; 32]>::read(&mut r)
                    .map_err(|_| ChainError::Malformed("undecodable trace call"))?;
                let target_pk = G1Point::read(&mut r)
                    .map_err(|_| ChainError::Malformed("undecodable trace call"))?;
                r.finish()
                    .map_err(|_| ChainError::Malformed("undecodable trace call"))?;
                if !self.sig_store.contains_key(&digest) {
                    return Err(ChainError::Malformed(
                        "trace call references unknown signature",
                    ));
                }
                self.trace_calls.push(TraceCallRecord {
                    epoch: tx.epoch,
                    sig_digest: digest,
                    target_pk,
                });
            }
        }
        if tx.kind == TxKind::Sign {
            self.sign_pool
                .entry(tx.epoch)
                .or_default()
                .push(tx.payload.clone());
        }

        let mut bytes = self.state_digest.to_vec();
        tx.write(&mut bytes);
        self.state_digest = digest32(b"chain/state", &bytes);
        self.log.push(tx);
        Ok(Receipt {
            epoch: self.epoch,
            position: self.log.len() - 1,
        })
    }

    /// Share ciphertexts submitted during `epoch`, for the elected
    /// combiner to pull.
    pub fn ssl_pull(&self, epoch: u64) -> &[Vec<u8>] {
        self.sign_pool.get(&epoch).map_or(&[], Vec::as_slice)
    }

    /// Response ciphertexts routed to one published signature, for
    /// the elected tracer to pull.
    pub fn dsl_pull(&self, sig_digest: &[u8; 32]) -> &[Vec<u8>] {
        self.response_pool
            .get(sig_digest)
            .map_or(&[], Vec::as_slice)
    }

    pub fn stored(&self, sig_digest: &[u8; 32]) -> Option<&StoredSignature> {
        self.sig_store.get(sig_digest)
    }

    pub fn index_rows(&self) -> &[IndexRow] {
        &self.index_rows
    }

    pub fn trace_calls(&self) -> &[TraceCallRecord] {
        &self.trace_calls
    }

    pub fn trapdoor_queries(&self) -> &[(u64, Trapdoor)] {
        &self.trapdoor_queries
    }

    /// The search contract: evaluates a trapdoor against every stored
    /// index row and returns the rows it matches. The chain learns
    /// nothing beyond the match pattern; the trapdoor never reveals
    /// whose pseudo-identity it queries.
    pub fn search(&self, td: &Trapdoor) -> Vec<SearchHit> {
        let scope: BTreeSet<u32> = self.genesis.registry.values().copied().collect();
        let mut adjusted: BTreeMap<u32, AdjustedTrapdoor> = BTreeMap::new();
        let mut hits = Vec::new();
        for row in &self.index_rows {
            let adj = adjusted.entry(row.slot).or_insert_with(|| {
                kase_adjust(&self.genesis.kase_params, row.slot, &scope, td)
                    .expect("registry slots validated at genesis")
            });
            let stored = &self.sig_store[&row.sig_digest];
            if kase_match_index(adj, &stored.signature.index).is_some() {
                hits.push(SearchHit {
                    gid: row.gid,
                    slot: row.slot,
                    sig_digest: row.sig_digest,
                });
            }
        }
        hits
    }

    /// Deterministic worker election for an epoch's combining duty.
    pub fn elect_combiner(&self, epoch: u64) -> u32 {
        elect(&self.genesis.election_seed, b'C', epoch, self.genesis.combiner_pool)
    }

    /// Deterministic worker election for an epoch's tracing duty.
    pub fn elect_tracer(&self, epoch: u64) -> u32 {
        elect(&self.genesis.election_seed, b'T', epoch, self.genesis.tracer_pool)
    }
}

/// Seeded election: first eight digest bytes reduced modulo the pool
/// size. The modulo bias is below 2^-60 for desk-scale pools.
fn elect(seed: &[u8; 32], role: u8, epoch: u64, pool: u32) -> u32 {
    let mut input = seed.to_vec();
    input.push(role);
    input.extend_from_slice(&epoch.to_be_bytes());
    let digest = digest32(b"chain/election", &input);
    let raw = u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    (raw % pool as u64) as u32
}

/// Serializes a genesis config and transaction log as length-prefixed
/// records: one for the genesis, then one per transaction. The result
/// round-trips through [`decode_log_file`] and replays byte-exactly.
pub fn encode_log_file(genesis: &GenesisConfig, log: &[Transaction]) -> Vec<u8> {
    let mut out = Vec::new();
    genesis.encode().write(&mut out);
    for tx in log {
        tx.encode().write(&mut out);
    }
    out
}

/// Parses a log file written by [`encode_log_file`]. The caller
/// replays it with [`Chain::replay`].
pub fn decode_log_file(bytes: &[u8]) -> Result<(GenesisConfig, Vec<Transaction>), ChainError> {
    let malformed = |_| ChainError::Malformed("log file does not parse");
    let mut r = ByteReader::new(bytes);
    let record = Vec::<u8>::read(&mut r).map_err(malformed)?;
    let genesis = GenesisConfig::decode(&record).map_err(malformed)?;
    let mut log = Vec::new();
    while r.remaining() > 0 {
        let record = Vec::<u8>::read(&mut r).map_err(malformed)?;
        log.push(Transaction::decode(&record).map_err(malformed)?);
    }
    Ok((genesis, log))
}

/// Convenience for tests and examples: a fresh account keypair for
/// chain submissions.
pub fn account_from_seed(seed: &[u8]) -> KeyPair {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
    crate::primitives::keygen(
        crate::primitives::SchemeId::Sig,
        Some(seed),
        &mut rng,
    )
}

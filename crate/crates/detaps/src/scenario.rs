//! Config-driven end-to-end runs and micro-benchmarks.
//!
//! A scenario stands up a full system, drives signing, combining,
//! verification, searching, and tracing over a simulated chain, and
//! reports sizes, timings, and pass/fail checks. Runs are
//! deterministic given the seed: timings vary, everything else is
//! pinned by [`RunReport::deterministic_digest`].

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::chainsim::{
    response_payload, trace_call_payload, Chain, ChainError, GenesisConfig, Transaction, TxKind,
};
use crate::dtpke::Pid;
use crate::groupmath::{digest32, Encode};
use crate::kase::Gid;
use crate::primitives::{keygen, pke_decrypt, HybridCiphertext, KeyPair, SchemeId};
use crate::protocol::{
    derive_gid, setup, sign, unpad_signer_set, verify, ProtocolError, SystemKeys, SystemParams,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("scenario run failed: {0}")]
    Run(String),
}

impl From<ProtocolError> for ScenarioError {
    fn from(e: ProtocolError) -> Self {
        ScenarioError::Run(e.to_string())
    }
}

impl From<ChainError> for ScenarioError {
    fn from(e: ChainError) -> Self {
        ScenarioError::Run(e.to_string())
    }
}

/// Knobs for one scenario run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    /// Signers.
    pub n: u32,
    /// Combiner enclaves.
    pub n1: u32,
    /// Tracer enclaves.
    pub n2: u32,
    /// Notaries.
    pub n3: u32,
    /// Signing threshold.
    pub t: u32,
    /// Notaries named per signature (the tracing threshold).
    pub t_prime: u32,
    /// Message size in KiB.
    pub message_size_kb: u32,
    /// Signatures to produce.
    pub num_signatures: u32,
    /// Epochs to spread the signatures over.
    pub epochs: u64,
    /// Seed for all randomness in the run.
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 10,
            n1: 3,
            n2: 2,
            n3: 10,
            t: 5,
            t_prime: 3,
            message_size_kb: 1,
            num_signatures: 4,
            epochs: 4,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    /// Parses `key = value` lines. `#` starts a comment; blank lines
    /// are ignored; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let mut config = ScenarioConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_u32 = |v: &str| {
                v.parse::<u32>().map_err(|e| ScenarioError::Parse {
                    line: i + 1,
                    reason: format!("bad value for {key}: {e}"),
                })
            };
            let parse_u64 = |v: &str| {
                v.parse::<u64>().map_err(|e| ScenarioError::Parse {
                    line: i + 1,
                    reason: format!("bad value for {key}: {e}"),
                })
            };
            match key {
                "n" => config.n = parse_u32(value)?,
                "n1" => config.n1 = parse_u32(value)?,
                "n2" => config.n2 = parse_u32(value)?,
                "n3" => config.n3 = parse_u32(value)?,
                "t" => config.t = parse_u32(value)?,
                "t_prime" => config.t_prime = parse_u32(value)?,
                "message_size_kb" => config.message_size_kb = parse_u32(value)?,
                "num_signatures" => config.num_signatures = parse_u32(value)?,
                "epochs" => config.epochs = parse_u64(value)?,
                "seed" => config.seed = parse_u64(value)?,
                _ => {
                    return Err(ScenarioError::Parse {
                        line: i + 1,
                        reason: format!("unknown key: {key}"),
                    })
                }
            }
        }
        Ok(config)
    }

    /// Hard validation plus soft desk-scale warnings. Errors stop a
    /// run; warnings only flag configurations the simulation was not
    /// sized for.
    pub fn validate(&self) -> Result<Vec<String>, ScenarioError> {
        if self.t == 0 || self.t > self.n {
            return Err(ScenarioError::Invalid(
                "signing threshold t must lie in [1, n]",
            ));
        }
        if self.t_prime == 0 || self.t_prime > self.n3 {
            return Err(ScenarioError::Invalid(
                "tracing threshold t_prime must lie in [1, n3]",
            ));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(ScenarioError::Invalid(
                "need at least one combiner and one tracer",
            ));
        }
        if self.num_signatures == 0 || self.epochs == 0 {
            return Err(ScenarioError::Invalid(
                "need at least one signature and one epoch",
            ));
        }
        let mut warnings = Vec::new();
        let mut warn_range = |name: &str, v: u32, lo: u32, hi: u32| {
            if v < lo || v > hi {
                warnings.push(format!(
                    "{name} = {v} is outside the desk-scale range [{lo}, {hi}] this \
                     simulation is sized for"
                ));
            }
        };
        warn_range("n", self.n, 3, 50);
        warn_range("n3", self.n3, 3, 50);
        warn_range("n1", self.n1, 1, 10);
        warn_range("n2", self.n2, 1, 10);
        if self.message_size_kb > 64 {
            warnings.push(format!(
                "message_size_kb = {} is large; runs will be slow",
                self.message_size_kb
            ));
        }
        if self.num_signatures > 200 {
            warnings.push(format!(
                "num_signatures = {} is large; runs will be slow",
                self.num_signatures
            ));
        }
        Ok(warnings)
    }

    fn digest_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        for v in [
            self.n,
            self.n1,
            self.n2,
            self.n3,
            self.t,
            self.t_prime,
            self.message_size_kb,
            self.num_signatures,
        ] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        bytes.extend_from_slice(&self.epochs.to_be_bytes());
        bytes.extend_from_slice(&self.seed.to_be_bytes());
        bytes
    }
}

/// Wall-clock timings in milliseconds. Informational only; excluded
/// from the deterministic digest.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub setup_ms: f64,
    pub sign_ms_avg: f64,
    pub combine_ms_avg: f64,
    pub verify_ms_avg: f64,
    pub search_ms_avg: f64,
    pub trace_ms_avg: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SizeReport {
    pub sign_tx_bytes: usize,
    pub signature_bytes: usize,
    pub sealed_trace_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
    pub signatures_published: u32,
    pub traces_succeeded: u32,
    pub checks: Vec<(String, bool)>,
    pub sizes: SizeReport,
    pub timings: TimingReport,
    pub chain_state_digest: [u8; 32],
}

impl RunReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|(_, pass)| *pass)
    }

    /// Digest of everything reproducible about the run: config,
    /// counts, sizes, check outcomes, and final chain state. Timings
    /// are excluded.
    pub fn deterministic_digest(&self) -> [u8; 32] {
        let mut bytes = self.config.digest_bytes();
        bytes.extend_from_slice(&self.signatures_published.to_be_bytes());
        bytes.extend_from_slice(&self.traces_succeeded.to_be_bytes());
        for (name, pass) in &self.checks {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(*pass as u8);
        }
        for v in [
            self.sizes.sign_tx_bytes,
            self.sizes.signature_bytes,
            self.sizes.sealed_trace_bytes,
        ] {
            bytes.extend_from_slice(&(v as u64).to_be_bytes());
        }
        bytes.extend_from_slice(&self.chain_state_digest);
        digest32(b"scenario/report", &bytes)
    }

    /// Machine-readable metric records, one `(key, value)` pair per
    /// metric.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let t = &self.timings;
        let mut rows = vec![
            ("setup_ms".into(), format!("{:.3}", t.setup_ms)),
            ("sign_ms".into(), format!("{:.3}", t.sign_ms_avg)),
            ("combine_ms".into(), format!("{:.3}", t.combine_ms_avg)),
            ("verify_ms".into(), format!("{:.3}", t.verify_ms_avg)),
            ("search_ms".into(), format!("{:.3}", t.search_ms_avg)),
            ("trace_ms".into(), format!("{:.3}", t.trace_ms_avg)),
            ("sign_tx_bytes".into(), self.sizes.sign_tx_bytes.to_string()),
            ("signature_bytes".into(), self.sizes.signature_bytes.to_string()),
            (
                "sealed_trace_bytes".into(),
                self.sizes.sealed_trace_bytes.to_string(),
            ),
            (
                "signatures_published".into(),
                self.signatures_published.to_string(),
            ),
            ("traces_succeeded".into(), self.traces_succeeded.to_string()),
            (
                "checks_passed".into(),
                format!(
                    "{}/{}",
                    self.checks.iter().filter(|(_, p)| *p).count(),
                    self.checks.len()
                ),
            ),
            (
                "chain_state_digest".into(),
                hex32(&self.chain_state_digest),
            ),
            (
                "report_digest".into(),
                hex32(&self.deterministic_digest()),
            ),
        ];
        rows.insert(0, ("seed".into(), self.config.seed.to_string()));
        rows
    }

    /// Human table followed by one `key<TAB>value` line per metric.
    pub fn render(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        out.push_str(&format!(
            "scenario: n={} t={} n1={} n2={} n3={} t'={} msg={}KiB sigs={} epochs={} seed={}\n",
            c.n,
            c.t,
            c.n1,
            c.n2,
            c.n3,
            c.t_prime,
            c.message_size_kb,
            c.num_signatures,
            c.epochs,
            c.seed
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!(
            "published {} signatures, traced {}\n",
            self.signatures_published, self.traces_succeeded
        ));
        out.push_str(&format!(
            "sizes: sign tx {} B, signature {} B, sealed trace {} B\n",
            self.sizes.sign_tx_bytes, self.sizes.signature_bytes, self.sizes.sealed_trace_bytes
        ));
        let t = &self.timings;
        out.push_str(&format!(
            "timings: setup {:.1} ms | sign {:.2} ms | combine {:.1} ms | verify {:.1} ms | \
             search {:.1} ms | trace {:.1} ms\n",
            t.setup_ms, t.sign_ms_avg, t.combine_ms_avg, t.verify_ms_avg, t.search_ms_avg,
            t.trace_ms_avg
        ));
        for (name, pass) in &self.checks {
            out.push_str(&format!(
                "check {name}: {}\n",
                if *pass { "PASS" } else { "FAIL" }
            ));
        }
        for (key, value) in self.metrics() {
            out.push_str(&format!("{key}\t{value}\n"));
        }
        out
    }
}

fn hex32(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

struct PublishedRecord {
    message: Vec<u8>,
    gid: Gid,
    slot: u32,
    digest: [u8; 32],
    quorum: BTreeSet<u32>,
    receivers: BTreeSet<Pid>,
}

/// Runs one full scenario: setup, epoch loop of signing and
/// combining, verification, notary search and response, and tracing,
/// all over a simulated chain.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    run_scenario_capture(config).map(|(report, _, _)| report)
}

/// Like [`run_scenario`], additionally returning the genesis config
/// and the full transaction log so callers can dump or replay the
/// chain.
pub fn run_scenario_capture(
    config: &ScenarioConfig,
) -> Result<(RunReport, GenesisConfig, Vec<Transaction>), ScenarioError> {
    let warnings = config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let started = Instant::now();
    let params = SystemParams {
        n: config.n,
        n1: config.n1,
        n2: config.n2,
        n3: config.n3,
        t: config.t,
        group_capacity: 2,
        groups: vec!["treasury".into(), "operations".into()],
    };
    let mut keys: SystemKeys = setup(&params, &mut rng)?;
    let setup_ms = ms(started.elapsed());

    // Chain accounts: one per signer plus one shared operator account
    // for combiner publications and trace calls.
    let signer_accounts: Vec<KeyPair> = (0..config.n)
        .map(|_| keygen(SchemeId::Sig, None, &mut rng))
        .collect();
    let operator = keygen(SchemeId::Sig, None, &mut rng);
    let mut members: Vec<_> = signer_accounts.iter().map(|k| k.public).collect();
    members.push(operator.public);

    let registry: BTreeMap<Gid, u32> = keys
        .public
        .group_slots
        .iter()
        .map(|(label, &slot)| (derive_gid(label, 0), slot))
        .collect();
    let genesis = GenesisConfig {
        election_seed: rng.gen(),
        combiner_pool: config.n1,
        tracer_pool: config.n2,
        kase_params: keys.public.kase_params.clone(),
        members,
        registry: registry.clone(),
    };
    let mut chain = Chain::genesis(genesis)?;

    let group_labels: Vec<&String> = keys.public.group_slots.keys().collect();
    let mut records: Vec<PublishedRecord> = Vec::new();
    let mut sign_total = Duration::ZERO;
    let mut sign_ops = 0u32;
    let mut combine_total = Duration::ZERO;
    let mut combine_epochs = 0u32;
    let mut tx_lens: BTreeSet<usize> = BTreeSet::new();
    let mut sig_lens: BTreeSet<usize> = BTreeSet::new();

    for epoch in 0..config.epochs {
        let scheduled: Vec<u32> = (0..config.num_signatures)
            .filter(|s| *s as u64 % config.epochs == epoch)
            .collect();
        for s in scheduled {
            let label = group_labels[s as usize % group_labels.len()];
            let gid = derive_gid(label, 0);
            let slot = keys.public.group_slots[label.as_str()];
            let mut message = vec![0u8; config.message_size_kb as usize * 1024];
            rng.fill_bytes(&mut message);
            message
                .iter_mut()
                .zip(format!("payment {s}: ").bytes())
                .for_each(|(dst, src)| *dst = src);

            let quorum = random_subset(1..=config.n, config.t, &mut rng);
            let notary_pids: Vec<Pid> = keys.notaries.iter().map(|a| a.pid()).collect();
            let receivers: BTreeSet<Pid> =
                random_subset(0..=config.n3 - 1, config.t_prime, &mut rng)
                    .into_iter()
                    .map(|i| notary_pids[i as usize])
                    .collect();

            let combiner = chain.elect_combiner(epoch);
            for &signer in &quorum {
                let t0 = Instant::now();
                let ct = sign(
                    &keys.signer_keys[signer as usize - 1],
                    &keys.public,
                    &message,
                    &quorum,
                    &receivers,
                    &gid,
                    combiner,
                    &mut rng,
                )?;
                sign_total += t0.elapsed();
                sign_ops += 1;
                tx_lens.insert(ct.len());
                let tx = Transaction::create(
                    TxKind::Sign,
                    epoch,
                    ct,
                    &signer_accounts[signer as usize - 1],
                );
                chain.submit(tx)?;
            }
            records.push(PublishedRecord {
                message,
                gid,
                slot,
                digest: [0u8; 32],
                quorum,
                receivers,
            });
        }

        // The elected combiner drains this epoch's share pool.
        let combiner = chain.elect_combiner(epoch) as usize;
        let batch = chain.ssl_pull(epoch).to_vec();
        let t0 = Instant::now();
        let outputs = keys.combiners[combiner].combine_epoch(epoch, &batch, &registry);
        combine_total += t0.elapsed();
        combine_epochs += 1;
        for out in outputs {
            let digest = out.signature.digest();
            sig_lens.insert(out.signature.encode().len());
            for rec in records.iter_mut() {
                if rec.message == out.message && rec.gid == out.gid {
                    rec.digest = digest;
                }
            }
            let tx = Transaction::create(TxKind::Comb, epoch, out.encode(), &operator);
            chain.submit(tx)?;
        }
        chain.advance_epoch();
    }

    let published = records.iter().filter(|r| r.digest != [0u8; 32]).count() as u32;

    // Public verification of everything the chain holds.
    let mut verify_total = Duration::ZERO;
    let mut all_verified = true;
    for rec in &records {
        let Some(stored) = chain.stored(&rec.digest) else {
            all_verified = false;
            continue;
        };
        let t0 = Instant::now();
        let ok = verify(
            &keys.public,
            &stored.message,
            &stored.gid,
            stored.slot,
            &stored.signature,
        );
        verify_total += t0.elapsed();
        all_verified &= ok;
    }

    // Every notary searches; hits must equal receiver membership.
    let mut search_total = Duration::ZERO;
    let mut awakening_correct = true;
    let mut hit_lists: BTreeMap<usize, Vec<[u8; 32]>> = BTreeMap::new();
    for (i, notary) in keys.notaries.iter().enumerate() {
        let td = notary.trapdoor();
        let tx = Transaction::create(TxKind::Trapdoor, chain.epoch(), td.encode(), &operator);
        chain.submit(tx)?;
        let t0 = Instant::now();
        let hits = chain.search(&td);
        search_total += t0.elapsed();
        let got: BTreeSet<[u8; 32]> = hits.iter().map(|h| h.sig_digest).collect();
        let want: BTreeSet<[u8; 32]> = records
            .iter()
            .filter(|r| r.receivers.contains(&notary.pid()))
            .map(|r| r.digest)
            .collect();
        awakening_correct &= got == want;
        hit_lists.insert(i, hits.iter().map(|h| h.sig_digest).collect());
    }

    // Named notaries respond, a trace is called, the elected tracer
    // opens each signature to a target key owned by this run.
    let target = keygen(SchemeId::Pke, None, &mut rng);
    let mut trace_total = Duration::ZERO;
    let mut traces_succeeded = 0u32;
    let mut traces_correct = true;
    let mut sealed_len = 0usize;
    for rec in &records {
        let epoch = chain.epoch();
        let tracer = chain.elect_tracer(epoch) as usize;
        let tracer_pk = keys.public.tracer_enc_keys[tracer];
        for (i, notary) in keys.notaries.iter().enumerate() {
            if !hit_lists[&i].contains(&rec.digest) {
                continue;
            }
            let resp = notary.respond(
                &keys.public,
                &rec.message,
                &rec.gid,
                rec.slot,
                &chain.stored(&rec.digest).expect("published above").signature,
                &tracer_pk,
                &mut rng,
            )?;
            let tx = Transaction::create(
                TxKind::Response,
                epoch,
                response_payload(rec.digest, &resp),
                &keygen(SchemeId::Sig, None, &mut rng),
            );
            chain.submit(tx)?;
        }
        let tx = Transaction::create(
            TxKind::TraceCall,
            epoch,
            trace_call_payload(rec.digest, &target.public),
            &operator,
        );
        chain.submit(tx)?;

        let stored = chain.stored(&rec.digest).expect("published above");
        let responses = chain.dsl_pull(&rec.digest).to_vec();
        let t0 = Instant::now();
        let sealed = keys.tracers[tracer].trace(
            &stored.message,
            &stored.gid,
            stored.slot,
            &stored.signature,
            &responses,
            &target.public,
        );
        trace_total += t0.elapsed();
        if let Ok(sealed) = sealed {
            sealed_len = sealed.len();
            let ct = HybridCiphertext::decode(&sealed)
                .map_err(|e| ScenarioError::Run(format!("sealed trace undecodable: {e}")))?;
            let opened = pke_decrypt(&target.secret, &ct)
                .map_err(|e| ScenarioError::Run(format!("sealed trace unopenable: {e}")))?;
            match unpad_signer_set(&opened, config.n) {
                Some(signers) if signers == rec.quorum => traces_succeeded += 1,
                _ => traces_correct = false,
            }
        } else {
            traces_correct = false;
        }
        chain.advance_epoch();
    }

    let checks = vec![
        (
            "every scheduled signature was published".to_string(),
            published == config.num_signatures,
        ),
        ("every published signature verifies".to_string(), all_verified),
        (
            "search awakening matches receiver membership".to_string(),
            awakening_correct,
        ),
        (
            "every trace recovered the signing quorum".to_string(),
            traces_correct && traces_succeeded == config.num_signatures,
        ),
        (
            "share ciphertext length is constant".to_string(),
            tx_lens.len() == 1,
        ),
        (
            "published signature length is constant".to_string(),
            sig_lens.len() == 1,
        ),
    ];

    let avg = |total: Duration, count: u32| {
        if count == 0 {
            0.0
        } else {
            ms(total) / count as f64
        }
    };
    let report = RunReport {
        config: config.clone(),
        warnings,
        signatures_published: published,
        traces_succeeded,
        checks,
        sizes: SizeReport {
            sign_tx_bytes: tx_lens.first().copied().unwrap_or(0),
            signature_bytes: sig_lens.first().copied().unwrap_or(0),
            sealed_trace_bytes: sealed_len,
        },
        timings: TimingReport {
            setup_ms,
            sign_ms_avg: avg(sign_total, sign_ops),
            combine_ms_avg: avg(combine_total, combine_epochs),
            verify_ms_avg: avg(verify_total, records.len() as u32),
            search_ms_avg: avg(search_total, keys.notaries.len() as u32),
            trace_ms_avg: avg(trace_total, records.len() as u32),
        },
        chain_state_digest: chain.state_digest(),
    };
    let log = chain.log().to_vec();
    Ok((report, chain.into_genesis(), log))
}

/// Uniform random subset of `count` values from an inclusive range.
fn random_subset(
    range: std::ops::RangeInclusive<u32>,
    count: u32,
    rng: &mut ChaCha20Rng,
) -> BTreeSet<u32> {
    let mut pool: Vec<u32> = range.collect();
    let mut out = BTreeSet::new();
    for _ in 0..count {
        let i = (rng.next_u64() % pool.len() as u64) as usize;
        out.insert(pool.swap_remove(i));
    }
    out
}

/// One measured cell of a bench sweep: mean wall time over the cell's
/// samples.
#[derive(Debug, Clone)]
pub struct BenchPoint {
    pub x: f64,
    pub mean_ms: f64,
    pub samples: u32,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub axis: String,
    pub unit: String,
    pub points: Vec<BenchPoint>,
    pub r_squared: f64,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut out = format!("bench: {} ({})\n", self.axis, self.unit);
        for p in &self.points {
            out.push_str(&format!(
                "  x = {:>8.0}  mean = {:>10.3} ms  ({} samples)\n",
                p.x, p.mean_ms, p.samples
            ));
        }
        out.push_str(&format!("  linear fit R^2 = {:.4}\n", self.r_squared));
        out
    }
}

/// Coefficient of determination of the least-squares line through
/// `points`. Degenerate inputs (fewer than two points, or zero
/// variance in y) fit a flat line exactly and return 1.0.
pub fn r_squared(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    if points.len() < 2 {
        return 1.0;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    1.0 - ss_res / syy
}

fn mean(durations: &[Duration]) -> f64 {
    durations.iter().map(|d| ms(*d)).sum::<f64>() / durations.len() as f64
}

/// Times one signing operation as a function of message size.
pub fn bench_sign_vs_message(
    base: &ScenarioConfig,
    kb_values: &[u32],
    repeat: u32,
) -> Result<BenchReport, ScenarioError> {
    base.validate()?;
    if kb_values.is_empty() || repeat == 0 {
        return Err(ScenarioError::Invalid("bench needs values and repetitions"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(base.seed);
    let params = SystemParams {
        n: base.n,
        n1: base.n1,
        n2: base.n2,
        n3: base.n3,
        t: base.t,
        group_capacity: 2,
        groups: vec!["treasury".into(), "operations".into()],
    };
    let keys = setup(&params, &mut rng)?;
    let quorum = random_subset(1..=base.n, base.t, &mut rng);
    let signer = *quorum.first().expect("threshold is at least 1");
    let receivers: BTreeSet<Pid> = keys
        .notaries
        .iter()
        .take(base.t_prime as usize)
        .map(|a| a.pid())
        .collect();
    let gid = derive_gid("treasury", 0);

    let messages: Vec<Vec<u8>> = kb_values
        .iter()
        .map(|&kb| {
            let mut message = vec![0u8; kb as usize * 1024];
            rng.fill_bytes(&mut message);
            message
        })
        .collect();
    // Rounds interleave one op per cell so slow machine drift lands
    // on every cell equally instead of biasing whole cells; round
    // zero is an unmeasured warmup that settles caches and lazy table
    // initialization.
    let mut samples: Vec<Vec<Duration>> = vec![Vec::with_capacity(repeat as usize); messages.len()];
    for round in 0..=repeat {
        for (cell, message) in messages.iter().enumerate() {
            let t0 = Instant::now();
            let ct = sign(
                &keys.signer_keys[signer as usize - 1],
                &keys.public,
                message,
                &quorum,
                &receivers,
                &gid,
                0,
                &mut rng,
            )?;
            if round > 0 {
                samples[cell].push(t0.elapsed());
            }
            std::hint::black_box(ct);
        }
    }
    let points = kb_values
        .iter()
        .zip(&samples)
        .map(|(&kb, cell)| BenchPoint {
            x: kb as f64,
            mean_ms: mean(cell),
            samples: repeat,
        })
        .collect::<Vec<_>>();
    let fit: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.mean_ms)).collect();
    Ok(BenchReport {
        axis: "sign time vs message size".into(),
        unit: "KiB".into(),
        points,
        r_squared: r_squared(&fit),
    })
}

/// Times one combining epoch as a function of how many pending
/// signatures it completes. Each pending signature contributes `t`
/// share ciphertexts to the epoch's batch.
pub fn bench_combine_vs_pending(
    base: &ScenarioConfig,
    pending_counts: &[u32],
    repeat: u32,
) -> Result<BenchReport, ScenarioError> {
    base.validate()?;
    if pending_counts.is_empty() || pending_counts.contains(&0) || repeat == 0 {
        return Err(ScenarioError::Invalid("bench needs values and repetitions"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(base.seed);
    let params = SystemParams {
        n: base.n,
        n1: base.n1,
        n2: base.n2,
        n3: base.n3,
        t: base.t,
        group_capacity: 2,
        groups: vec!["treasury".into(), "operations".into()],
    };
    let mut keys = setup(&params, &mut rng)?;
    let gid = derive_gid("treasury", 0);
    let slot = keys.public.group_slots["treasury"];
    let registry: BTreeMap<Gid, u32> = [(gid, slot)].into();
    let receivers: BTreeSet<Pid> = keys
        .notaries
        .iter()
        .take(base.t_prime as usize)
        .map(|a| a.pid())
        .collect();

    let mut points = Vec::new();
    let mut epoch = 0u64;
    for &pending in pending_counts {
        let mut batch = Vec::with_capacity((pending * base.t) as usize);
        for g in 0..pending {
            let quorum = random_subset(1..=base.n, base.t, &mut rng);
            let message = format!("bench message {g} of cell {pending}").into_bytes();
            for &signer in &quorum {
                batch.push(sign(
                    &keys.signer_keys[signer as usize - 1],
                    &keys.public,
                    &message,
                    &quorum,
                    &receivers,
                    &gid,
                    0,
                    &mut rng,
                )?);
            }
        }
        let mut samples = Vec::with_capacity(repeat as usize);
        for _ in 0..repeat {
            let t0 = Instant::now();
            let outputs = keys.combiners[0].combine_epoch(epoch, &batch, &registry);
            samples.push(t0.elapsed());
            if outputs.len() != pending as usize {
                return Err(ScenarioError::Run(format!(
                    "bench cell of {pending} pending completed {} signatures",
                    outputs.len()
                )));
            }
            epoch += 1;
        }
        points.push(BenchPoint {
            x: pending as f64,
            mean_ms: mean(&samples),
            samples: repeat,
        });
    }
    let fit: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.mean_ms)).collect();
    Ok(BenchReport {
        axis: "combine epoch time vs pending signatures".into(),
        unit: "pending signatures".into(),
        points,
        r_squared: r_squared(&fit),
    })
}

/// One row of a scenario-axis bench table: per-phase mean timings and
/// the size columns at one axis value.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub value: u64,
    pub timings: TimingReport,
    pub sizes: SizeReport,
}

/// A bench table produced by sweeping one config key over values,
/// re-running the whole scenario `repeat` times per cell.
#[derive(Debug, Clone)]
pub struct BenchTable {
    pub axis: String,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn render(&self) -> String {
        let mut out = format!(
            "bench table over {}\n{:>12}  {:>9}  {:>9}  {:>10}  {:>9}  {:>9}  {:>9}  {:>11}  {:>10}\n",
            self.axis,
            self.axis,
            "setup ms",
            "sign ms",
            "combine ms",
            "verify ms",
            "search ms",
            "trace ms",
            "sign tx B",
            "sig B"
        );
        for row in &self.rows {
            let t = &row.timings;
            out.push_str(&format!(
                "{:>12}  {:>9.1}  {:>9.2}  {:>10.1}  {:>9.1}  {:>9.1}  {:>9.1}  {:>11}  {:>10}\n",
                row.value,
                t.setup_ms,
                t.sign_ms_avg,
                t.combine_ms_avg,
                t.verify_ms_avg,
                t.search_ms_avg,
                t.trace_ms_avg,
                row.sizes.sign_tx_bytes,
                row.sizes.signature_bytes
            ));
        }
        out
    }
}

/// Sweeps one scenario config key over `values`, running the full
/// scenario `repeat` times per value and averaging the per-phase
/// timings. `key` accepts the same names as the config file.
pub fn bench_scenario_axis(
    base: &ScenarioConfig,
    key: &str,
    values: &[u64],
    repeat: u32,
) -> Result<BenchTable, ScenarioError> {
    if values.is_empty() || repeat == 0 {
        return Err(ScenarioError::Invalid("bench needs values and repetitions"));
    }
    let mut rows = Vec::new();
    for &value in values {
        let mut config = base.clone();
        let narrow = || -> Result<u32, ScenarioError> {
            u32::try_from(value).map_err(|_| ScenarioError::Invalid("axis value exceeds u32"))
        };
        match key {
            "n" => config.n = narrow()?,
            "n1" => config.n1 = narrow()?,
            "n2" => config.n2 = narrow()?,
            "n3" => config.n3 = narrow()?,
            "t" => config.t = narrow()?,
            "t_prime" => config.t_prime = narrow()?,
            "message_size_kb" => config.message_size_kb = narrow()?,
            "num_signatures" => config.num_signatures = narrow()?,
            "epochs" => config.epochs = value,
            _ => return Err(ScenarioError::Invalid("unknown bench axis key")),
        }
        let mut acc = TimingReport::default();
        let mut sizes = SizeReport::default();
        for _ in 0..repeat {
            let report = run_scenario(&config)?;
            if !report.all_checks_pass() {
                return Err(ScenarioError::Run(format!(
                    "checks failed at {key} = {value}"
                )));
            }
            let t = &report.timings;
            acc.setup_ms += t.setup_ms;
            acc.sign_ms_avg += t.sign_ms_avg;
            acc.combine_ms_avg += t.combine_ms_avg;
            acc.verify_ms_avg += t.verify_ms_avg;
            acc.search_ms_avg += t.search_ms_avg;
            acc.trace_ms_avg += t.trace_ms_avg;
            sizes = report.sizes;
        }
        let k = repeat as f64;
        for v in [
            &mut acc.setup_ms,
            &mut acc.sign_ms_avg,
            &mut acc.combine_ms_avg,
            &mut acc.verify_ms_avg,
            &mut acc.search_ms_avg,
            &mut acc.trace_ms_avg,
        ] {
            *v /= k;
        }
        rows.push(BenchRow {
            value,
            timings: acc,
            sizes,
        });
    }
    Ok(BenchTable {
        axis: key.to_string(),
        rows,
    })
}

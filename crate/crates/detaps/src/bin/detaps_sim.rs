//! Command-line front end for scenario runs, benches, and chain log
//! replay.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use detaps::chainsim::{decode_log_file, encode_log_file, Chain};
use detaps::scenario::{
    bench_combine_vs_pending, bench_scenario_axis, bench_sign_vs_message, run_scenario_capture,
    ScenarioConfig,
};

/// Drives seeded end-to-end runs of the threshold-signature system,
/// micro-benchmarks along chosen axes, and chain-log replay.
#[derive(Parser)]
#[command(name = "detaps-sim", version)]
struct Args {
    /// Config file of `key = value` lines (keys: n, n1, n2, n3, t,
    /// t_prime, message_size_kb, num_signatures, epochs, seed).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated phases to execute: run, bench, replay.
    #[arg(long, default_value = "run")]
    phases: String,

    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write the run's genesis and transaction log to this file as
    /// length-prefixed records (requires the run phase).
    #[arg(long)]
    dump_log: Option<PathBuf>,

    /// Log file to replay in the replay phase.
    #[arg(long)]
    load_log: Option<PathBuf>,

    /// Bench axis: sign-message (KiB per op), combine-pending
    /// (signatures per combining epoch), or a config key (n, t,
    /// t_prime, n3, message_size_kb, num_signatures, ...) swept with a
    /// full scenario per value.
    #[arg(long, default_value = "combine-pending")]
    bench_axis: String,

    /// Comma-separated x values for the bench axis.
    #[arg(long, default_value = "2,4,8")]
    bench_values: String,

    /// Samples per bench cell.
    #[arg(long, default_value_t = 10)]
    repeat: u32,

    /// Override: number of signers.
    #[arg(long)]
    n: Option<u32>,
    /// Override: number of combiner enclaves.
    #[arg(long)]
    n1: Option<u32>,
    /// Override: number of tracer enclaves.
    #[arg(long)]
    n2: Option<u32>,
    /// Override: number of notaries.
    #[arg(long)]
    n3: Option<u32>,
    /// Override: signing threshold.
    #[arg(long)]
    t: Option<u32>,
    /// Override: notaries named per signature.
    #[arg(long)]
    t_prime: Option<u32>,
    /// Override: message size in KiB.
    #[arg(long)]
    message_size_kb: Option<u32>,
    /// Override: signatures per run.
    #[arg(long)]
    num_signatures: Option<u32>,
    /// Override: epochs per run.
    #[arg(long)]
    epochs: Option<u64>,
    /// Override: run seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(args: &Args) -> Result<ScenarioConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ScenarioConfig::from_kv(&text).map_err(|e| e.to_string())?
        }
        None => ScenarioConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { config.$field = v; })*
        };
    }
    apply!(n, n1, n2, n3, t, t_prime, message_size_kb, num_signatures, epochs, seed);
    Ok(config)
}

fn parse_values(list: &str) -> Result<Vec<u64>, String> {
    list.split(',')
        .map(|v| v.trim().parse::<u64>().map_err(|e| format!("bad bench value {v:?}: {e}")))
        .collect()
}

fn run_phase(args: &Args, config: &ScenarioConfig, output: &mut String) -> Result<bool, String> {
    let (report, genesis, log) = run_scenario_capture(config).map_err(|e| e.to_string())?;
    output.push_str(&report.render());
    if let Some(path) = &args.dump_log {
        let bytes = encode_log_file(&genesis, &log);
        std::fs::write(path, &bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        output.push_str(&format!(
            "dumped chain log: {} transactions, {} bytes, {}\n",
            log.len(),
            bytes.len(),
            path.display()
        ));
    }
    Ok(report.all_checks_pass())
}

fn bench_phase(args: &Args, config: &ScenarioConfig, output: &mut String) -> Result<(), String> {
    let values = parse_values(&args.bench_values)?;
    let narrow = |values: &[u64]| -> Result<Vec<u32>, String> {
        values
            .iter()
            .map(|&v| u32::try_from(v).map_err(|_| format!("bench value {v} exceeds u32")))
            .collect()
    };
    let rendered = match args.bench_axis.as_str() {
        "sign-message" => bench_sign_vs_message(config, &narrow(&values)?, args.repeat)
            .map_err(|e| e.to_string())?
            .render(),
        "combine-pending" => bench_combine_vs_pending(config, &narrow(&values)?, args.repeat)
            .map_err(|e| e.to_string())?
            .render(),
        key => bench_scenario_axis(config, key, &values, args.repeat)
            .map_err(|e| e.to_string())?
            .render(),
    };
    output.push_str(&rendered);
    Ok(())
}

fn replay_phase(args: &Args, output: &mut String) -> Result<(), String> {
    let path = args
        .load_log
        .as_ref()
        .ok_or("the replay phase needs --load-log PATH")?;
    let bytes =
        std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (genesis, log) = decode_log_file(&bytes).map_err(|e| e.to_string())?;
    let chain = Chain::replay(genesis, &log).map_err(|e| format!("replay failed: {e}"))?;
    output.push_str(&format!(
        "replayed {} transactions to epoch {}\nstate digest: {}\n",
        log.len(),
        chain.epoch(),
        chain
            .state_digest()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    ));
    Ok(())
}

fn execute(args: &Args) -> Result<(String, bool), String> {
    let config = build_config(args)?;
    let mut output = String::new();
    let mut all_pass = true;
    for phase in args.phases.split(',').map(str::trim) {
        match phase {
            "run" => all_pass &= run_phase(args, &config, &mut output)?,
            "bench" => bench_phase(args, &config, &mut output)?,
            "replay" => replay_phase(args, &mut output)?,
            other => {
                return Err(format!(
                    "unknown phase: {other:?} (expected run, bench, or replay)"
                ))
            }
        }
    }
    Ok((output, all_pass))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok((output, all_pass)) => {
            print!("{output}");
            if let Some(path) = &args.out {
                if let Err(e) = std::fs::write(path, &output) {
                    eprintln!("cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

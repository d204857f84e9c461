//! `qfp`: planning, encoding, simulation and a networked referee for
//! coherent-state fingerprinting.

mod args;
mod commands;
mod manifest;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use args::{parse_count, parse_seed, parse_session, PlanArgs, PlanSource};
use qfp::codec::Seed;

/// Infeasible plan.
pub const EXIT_INFEASIBLE: u8 = 3;
/// At least one networked session was aborted.
pub const EXIT_ABORTED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "qfp", version, about = "Coherent-state quantum fingerprinting laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// Identical codewords.
    Equal,
    /// Codewords at distance exactly ceil(delta m).
    Worst,
    /// A repeated random frame pair at distance ceil(delta frame_len).
    Framed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Alice,
    Bob,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Choose the mean photon number and threshold for a target error.
    Plan {
        #[command(flatten)]
        args: PlanArgs,
        /// Print the plan as JSON.
        #[arg(long)]
        json: bool,
        /// Also write the plan JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a Toeplitz code and write its header file.
    MakeCode {
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long, default_value_t = 0.22)]
        delta: f64,
        #[arg(long, conflicts_with_all = ["rate", "m"])]
        margin: Option<f64>,
        #[arg(long, conflicts_with = "m")]
        rate: Option<f64>,
        #[arg(long, value_parser = parse_count)]
        m: Option<u64>,
        #[arg(long, value_parser = parse_seed)]
        seed: Seed,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode an input bit file with a code.
    Encode {
        /// Code file, or `n=..,m=..,seed=..` (or `delta=`, `margin=`, `rate=` instead of `m=`).
        #[arg(long)]
        code: String,
        /// Packed input bits, ceil(n/8) bytes.
        #[arg(long, conflicts_with_all = ["random_input", "zero_input"])]
        input: Option<PathBuf>,
        /// Use a random input drawn from this seed.
        #[arg(long, value_parser = parse_seed)]
        random_input: Option<Seed>,
        /// Use the all-zero input.
        #[arg(long)]
        zero_input: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report wall time and peak memory.
        #[arg(long)]
        bench: bool,
        /// Use the quadratic reference encoder.
        #[arg(long)]
        reference: bool,
    },
    /// Recompute published tables and figures as CSV.
    Reproduce {
        #[arg(long, value_enum)]
        figure: reproduce::Figure,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo runs of the referee's detectors under a plan.
    Simulate {
        #[command(flatten)]
        source: PlanSource,
        #[arg(long, value_parser = parse_seed)]
        seed: Seed,
        #[arg(long, default_value = "1", value_parser = parse_count)]
        trials: u64,
        #[arg(long, value_enum, default_value_t = InputKind::Worst)]
        inputs: InputKind,
        #[arg(long, default_value_t = 430)]
        frame_len: usize,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Dark counts do not start a dead window.
        #[arg(long)]
        no_dark_dead_time: bool,
        /// Write the per-pulse click transcript of a single trial here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the summary JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every trial result as JSON lines here.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Serve referee sessions over TCP.
    Referee {
        #[arg(long, default_value = "127.0.0.1:7000")]
        listen: String,
        #[command(flatten)]
        source: PlanSource,
        #[arg(long, value_parser = parse_seed)]
        seed: Seed,
        /// Exit after this many sessions.
        #[arg(long, value_parser = parse_count)]
        sessions: Option<u64>,
        /// Abort sessions idle for this many seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        no_dark_dead_time: bool,
        /// Also append session reports (JSON lines) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stream a codeword to a referee and wait for the verdict.
    Party {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long, default_value = "127.0.0.1:7000")]
        connect: String,
        /// 32 hex digits; session k of a run uses this id with k xored into the last 8 bytes.
        #[arg(long, value_parser = parse_session, default_value = "00000000000000000000000000000000")]
        session: [u8; 16],
        #[arg(long, default_value = "1", value_parser = parse_count)]
        sessions: u64,
        #[arg(long, default_value_t = qfp::netparty::party::DEFAULT_CHUNK_BITS)]
        chunk_bits: u32,
        /// Code file or spec, as for `encode`; requires --input.
        #[arg(long, requires = "input")]
        code: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Code file holding an encoded codeword.
        #[arg(long, conflicts_with_all = ["code", "synthetic"])]
        codeword: Option<PathBuf>,
        /// Generated input pairs of the plan's length; both parties must use the same --pair-seed.
        #[arg(long, value_enum, requires_all = ["plan", "pair_seed"])]
        synthetic: Option<InputKind>,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_parser = parse_seed)]
        pair_seed: Option<Seed>,
        #[arg(long, default_value_t = 430)]
        frame_len: usize,
        /// Seconds to wait for a verdict.
        #[arg(long)]
        timeout: Option<f64>,
        /// Also write party reports (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Plan { args, json, out } => commands::plan(&args, json, out.as_deref()),
        Cmd::MakeCode { n, delta, margin, rate, m, seed, out } => {
            commands::make_code(n, delta, margin, rate, m, seed, &out)
        }
        Cmd::Encode { code, input, random_input, zero_input, out, bench, reference } => {
            let source = match (input, random_input, zero_input) {
                (Some(p), _, _) => commands::InputSource::File(p),
                (None, Some(s), _) => commands::InputSource::Random(s),
                (None, None, true) => commands::InputSource::Zero,
                (None, None, false) => {
                    eprintln!("error: one of --input, --random-input or --zero-input is required");
                    return ExitCode::from(2);
                }
            };
            commands::encode(&code, source, out.as_deref(), bench, reference)
        }
        Cmd::Reproduce { figure, out } => commands::reproduce(figure, out.as_deref()),
        Cmd::Simulate { source, seed, trials, inputs, frame_len, threads, no_dark_dead_time, trace, out, results } => {
            commands::simulate(commands::SimulateArgs {
                source,
                seed,
                trials,
                inputs,
                frame_len,
                threads,
                dark_dead_time: !no_dark_dead_time,
                trace,
                out,
                results,
            })
        }
        Cmd::Referee { listen, source, seed, sessions, timeout, no_dark_dead_time, report } => {
            commands::referee(&listen, &source, seed, sessions, timeout, !no_dark_dead_time, report.as_deref())
        }
        Cmd::Party {
            role,
            connect,
            session,
            sessions,
            chunk_bits,
            code,
            input,
            codeword,
            synthetic,
            plan,
            pair_seed,
            frame_len,
            timeout,
            out,
        } => {
            let input = match (code, input, codeword, synthetic) {
                (Some(c), Some(i), None, None) => commands::PartySource::Encode { code: c, input: i },
                (None, None, Some(cw), None) => commands::PartySource::Codeword(cw),
                (None, None, None, Some(kind)) => commands::PartySource::Synthetic {
                    kind,
                    plan: plan.expect("clap requires --plan"),
                    pair_seed: pair_seed.expect("clap requires --pair-seed"),
                    frame_len,
                },
                _ => {
                    eprintln!("error: give exactly one of --code with --input, --codeword, or --synthetic");
                    return ExitCode::from(2);
                }
            };
            commands::party(commands::PartyArgs { role, connect, session, sessions, chunk_bits, input, timeout, out })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use qfp::codec::{self as codec, build_code, encode_reference, output_length, Seed, ToeplitzCode};
use qfp::codec::{decode_code_file, encode_code_file, CodeFile};
use qfp::decision::{ClickDistribution, Outcome};
use qfp::model::{p_diff, p_equal};
use qfp::netparty::{
    run_party, session_id_for, PartyConfig, PartyError, PartyInput, Referee, RefereeConfig, Role, VerdictStatus,
};
use qfp::planner::PlanError;
use qfp::simulator::{
    run_trials, simulate_pattern, trace_csv, worst_case_pair, DiffBits, PairMode, Physics, SimOptions, TrialResult,
};
use qfp::{BitString, ProtocolPlan};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::args::{param_paths, read_plan, PlanArgs, PlanSource};
use crate::manifest::{write_output, RunManifest};
use crate::reproduce::Figure;
use crate::{InputKind, RoleArg, EXIT_ABORTED, EXIT_INFEASIBLE};

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

pub fn plan(args: &PlanArgs, json: bool, out: Option<&Path>) -> Result<u8> {
    let plan = match args.plan() {
        Ok(p) => p,
        Err(e) => {
            if let Some(PlanError::Infeasible { .. }) = e.downcast_ref::<PlanError>() {
                eprintln!("error: {e:#}");
                return Ok(EXIT_INFEASIBLE);
            }
            return Err(e);
        }
    };
    let doc = plan.to_json();
    if json {
        outln!("{doc}");
    } else {
        print_plan(&plan);
    }
    if let Some(out) = out {
        let mut man = RunManifest::new("plan").config(param_paths(&args.params));
        write_output(&mut man, out, (doc + "\n").as_bytes())?;
        man.write_all()?;
    }
    Ok(0)
}

fn print_plan(p: &ProtocolPlan) {
    outln!("n              {}", p.n);
    outln!("m              {}", p.m);
    outln!("delta          {}", p.delta);
    outln!("mu_A           {:.6}", p.mu_a);
    outln!("mu_B           {:.6}", p.mu_b);
    outln!("mu_det         {:.6}", p.mu_det);
    outln!("threshold      {}", p.threshold);
    outln!("epsilon        {:.6e}", p.epsilon_pred);
    outln!("Q (bits)       {:.3}", p.account.q);
    outln!("C (bits)       {:.3}", p.account.c);
    outln!("C_lb (bits)    {:.3}", p.account.c_lb);
    outln!("gamma          {:.6}", p.account.gamma);
}

pub fn make_code(
    n: u64,
    delta: f64,
    margin: Option<f64>,
    rate: Option<f64>,
    m: Option<u64>,
    seed: Seed,
    out: &Path,
) -> Result<u8> {
    let code = match (m, rate) {
        (Some(m), _) => ToeplitzCode::with_output_len(n, m, delta, seed)?,
        (None, Some(r)) => ToeplitzCode::with_output_len(n, output_length(n, r), delta, seed)?,
        (None, None) => build_code(n, delta, margin.unwrap_or(qfp::planner::DEFAULT_MARGIN), seed)?,
    };
    let file = CodeFile { n: code.n() as u64, m: code.m() as u64, seed, codeword: None };
    let mut man = RunManifest::new("make-code").seed("code", seed.to_hex());
    write_output(&mut man, out, &encode_code_file(&file))?;
    man.write_all()?;
    outln!("n {} m {} rate {:.6} seed {}", code.n(), code.m(), code.rate(), seed.to_hex());
    Ok(0)
}

/// A code file path or an inline `key=value` description.
pub fn load_code(spec: &str) -> Result<ToeplitzCode> {
    let path = Path::new(spec);
    if path.is_file() {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let f = decode_code_file(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        return Ok(ToeplitzCode::from_header(f.n, f.m, f.seed)?);
    }
    if !spec.contains('=') {
        bail!("{spec}: no such code file");
    }
    let (mut n, mut m, mut delta, mut margin, mut rate, mut seed) = (None, None, None, None, None, None);
    for part in spec.split(',') {
        let (k, v) = part.split_once('=').with_context(|| format!("bad code spec item {part:?}"))?;
        let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}"));
        match k.trim() {
            "n" => n = Some(crate::args::parse_count(v).map_err(anyhow::Error::msg)?),
            "m" => m = Some(crate::args::parse_count(v).map_err(anyhow::Error::msg)?),
            "delta" => delta = Some(num(v)?),
            "margin" => margin = Some(num(v)?),
            "rate" => rate = Some(num(v)?),
            "seed" => seed = Some(crate::args::parse_seed(v).map_err(anyhow::Error::msg)?),
            other => bail!("unknown code spec key {other:?}"),
        }
    }
    let n = n.context("code spec needs n=")?;
    let seed = seed.context("code spec needs seed=")?;
    let code = match (m, rate, delta) {
        (Some(m), _, Some(d)) => ToeplitzCode::with_output_len(n, m, d, seed)?,
        (Some(m), _, None) => ToeplitzCode::from_header(n, m, seed)?,
        (None, Some(r), d) => ToeplitzCode::with_output_len(n, output_length(n, r), d.unwrap_or(0.22), seed)?,
        (None, None, d) => build_code(n, d.unwrap_or(0.22), margin.unwrap_or(qfp::planner::DEFAULT_MARGIN), seed)?,
    };
    Ok(code)
}

pub enum InputSource {
    File(PathBuf),
    Random(Seed),
    Zero,
}

fn read_bits(path: &Path, n: usize) -> Result<BitString> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    BitString::from_packed_bytes(&bytes, n).with_context(|| {
        format!(
            "{}: expected {} bytes of packed bits with zero padding for n = {n}, found {} bytes",
            path.display(),
            n.div_ceil(8),
            bytes.len()
        )
    })
}

/// Peak resident set size in kB, where the platform reports it.
fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

#[derive(Serialize)]
struct BenchLine {
    n: u64,
    m: u64,
    seconds: f64,
    memory_mbit: Option<f64>,
}

pub fn encode(code_spec: &str, input: InputSource, out: Option<&Path>, bench: bool, reference: bool) -> Result<u8> {
    let t0 = Instant::now();
    let code = load_code(code_spec)?;
    let n = code.n();
    let mut man = RunManifest::new("encode").seed("code", code.seed().to_hex());
    if Path::new(code_spec).is_file() {
        man = man.config([code_spec.to_string()]);
    }
    let x = match &input {
        InputSource::File(p) => {
            man = man.config([p.display().to_string()]);
            read_bits(p, n)?
        }
        InputSource::Random(s) => {
            man = man.seed("input", s.to_hex());
            BitString::random(n, &mut ChaCha20Rng::from_seed(s.0))
        }
        InputSource::Zero => BitString::zeros(n),
    };
    let cw = if reference { encode_reference(&code, &x)? } else { codec::encode(&code, &x)? };
    let seconds = t0.elapsed().as_secs_f64();
    if let Some(out) = out {
        let file = CodeFile { n: n as u64, m: code.m() as u64, seed: *code.seed(), codeword: Some(cw) };
        write_output(&mut man, out, &encode_code_file(&file))?;
        man.write_all()?;
    }
    if bench {
        let line = BenchLine {
            n: n as u64,
            m: code.m() as u64,
            seconds,
            memory_mbit: peak_rss_kb().map(|kb| kb as f64 * 1024.0 * 8.0 / 1e6),
        };
        outln!("{:>12} {:>12} {:>10} {:>14}", "n (bit)", "m (bit)", "Time (s)", "Memory (Mbit)");
        outln!(
            "{:>12} {:>12} {:>10.2} {:>14}",
            line.n,
            line.m,
            line.seconds,
            line.memory_mbit.map_or("n/a".to_string(), |v| format!("{v:.0}"))
        );
        eprintln!("{}", serde_json::to_string(&line).expect("bench line serializes"));
    }
    Ok(0)
}

pub fn reproduce(figure: Figure, out: Option<&Path>) -> Result<u8> {
    let csv = crate::reproduce::reproduce(figure)?;
    match out {
        Some(path) => {
            let mut man = RunManifest::new("reproduce").config(["bundled:data/published.toml".to_string()]);
            write_output(&mut man, path, csv.as_bytes())?;
            man.write_all()?;
        }
        None => {
            let _ = std::io::stdout().lock().write_all(csv.as_bytes());
        }
    }
    Ok(0)
}

pub struct SimulateArgs {
    pub source: PlanSource,
    pub seed: Seed,
    pub trials: u64,
    pub inputs: InputKind,
    pub frame_len: usize,
    pub threads: usize,
    pub dark_dead_time: bool,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub results: Option<PathBuf>,
}

/// Largest run for which a per-pulse transcript is written.
const TRACE_MAX_M: u64 = 10_000_000;

#[derive(Debug, Serialize)]
struct SimSummary {
    n: u64,
    m: u64,
    mu_det: f64,
    threshold: u64,
    epsilon_plan: f64,
    inputs: &'static str,
    distance: u64,
    trials: u64,
    seed: String,
    mean_d0: f64,
    mean_d1: f64,
    sd_d1: f64,
    /// `m p` for the simulated pattern, from the analytic model.
    expected_d1: f64,
    /// `(mean_d1 - expected_d1) / standard error`.
    z_d1: f64,
    verdict_equal: u64,
    verdict_different: u64,
    errors: u64,
    error_rate: f64,
    /// Model probability of a wrong verdict for this pattern.
    error_predicted: f64,
    /// Central 99% range of the error count.
    error_band_99: [u64; 2],
    within_band: bool,
    blocked_pulses_mean: f64,
    suppressed_clicks_mean: f64,
}

/// Smallest `k` with `P(X <= k) >= q` for `X ~ Bin(trials, p)`.
fn binomial_quantile(trials: u64, p: f64, q: f64) -> Result<u64> {
    if p <= 0.0 {
        return Ok(0);
    }
    let d = ClickDistribution::exact(trials, p)?;
    let (mut lo, mut hi) = (0u64, trials);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if d.cdf(mid as i64) >= q {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

fn input_pair(kind: InputKind, m: u64, delta: f64, frame_len: usize, seed: Seed) -> Result<(BitString, BitString)> {
    Ok(match kind {
        InputKind::Equal => {
            let (a, _) = worst_case_pair(m, 0.0, PairMode::Exact, seed)?;
            (a.clone(), a)
        }
        InputKind::Worst => worst_case_pair(m, delta, PairMode::Exact, seed)?,
        InputKind::Framed => worst_case_pair(m, delta, PairMode::Framed(frame_len), seed)?,
    })
}

fn kind_name(kind: InputKind) -> &'static str {
    match kind {
        InputKind::Equal => "equal",
        InputKind::Worst => "worst",
        InputKind::Framed => "framed",
    }
}

pub fn simulate(a: SimulateArgs) -> Result<u8> {
    let plan = a.source.resolve()?;
    let mut man = RunManifest::new("simulate").config(a.source.config_paths()).seed("simulation", a.seed.to_hex());
    let physics = Physics { dark_triggers_dead_time: a.dark_dead_time, ..Physics::from_plan(&plan) };
    let (x, y) = input_pair(a.inputs, plan.m, plan.delta, a.frame_len, a.seed)?;
    let pattern = DiffBits(x.xor(&y));
    let distance = pattern.0.count_ones() as u64;

    let results: Vec<TrialResult> = if let Some(trace_path) = &a.trace {
        if a.trials != 1 {
            bail!("--trace needs --trials 1");
        }
        if plan.m > TRACE_MAX_M {
            bail!("--trace is limited to m <= {TRACE_MAX_M}, plan has m = {}", plan.m);
        }
        let opts = SimOptions { dark_triggers_dead_time: a.dark_dead_time, trace: true, threads: a.threads };
        let (r, events) = simulate_pattern(&pattern, physics, plan.threshold, a.seed.derive(0), &opts)?;
        write_output(&mut man, trace_path, trace_csv(&events.unwrap_or_default()).as_bytes())?;
        vec![r]
    } else {
        run_trials(&pattern, physics, plan.threshold, a.seed, a.trials, a.threads)?
    };

    let m = plan.m;
    let frac = distance as f64 / m as f64;
    let p = if distance == 0 {
        p_equal(&plan.params, plan.mu_det, m)?
    } else {
        p_diff(&plan.params, plan.mu_det, m, frac)?
    };
    let dist = ClickDistribution::new(m, p, plan.representation)?;
    let (cdf, sf) = dist.tails(plan.threshold as i64);
    let wrong = if distance == 0 { Outcome::Different } else { Outcome::Equal };
    let error_predicted = if distance == 0 { sf } else { cdf };

    let k = results.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> u64| results.iter().map(|r| f(r) as f64).sum::<f64>() / k;
    let mean_d1 = mean(&|r| r.clicks_d1);
    let var_d1 = if results.len() > 1 {
        results.iter().map(|r| (r.clicks_d1 as f64 - mean_d1).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let expected_d1 = m as f64 * p;
    let se = (var_d1 / k).sqrt();
    let errors = results.iter().filter(|r| r.verdict == wrong).count() as u64;
    let band =
        [binomial_quantile(a.trials, error_predicted, 0.005)?, binomial_quantile(a.trials, error_predicted, 0.995)?];
    let summary = SimSummary {
        n: plan.n,
        m,
        mu_det: plan.mu_det,
        threshold: plan.threshold,
        epsilon_plan: plan.epsilon_pred,
        inputs: kind_name(a.inputs),
        distance,
        trials: a.trials,
        seed: a.seed.to_hex(),
        mean_d0: mean(&|r| r.clicks_d0),
        mean_d1,
        sd_d1: var_d1.sqrt(),
        expected_d1,
        z_d1: if se > 0.0 { (mean_d1 - expected_d1) / se } else { 0.0 },
        verdict_equal: results.iter().filter(|r| r.verdict == Outcome::Equal).count() as u64,
        verdict_different: results.iter().filter(|r| r.verdict == Outcome::Different).count() as u64,
        errors,
        error_rate: errors as f64 / k,
        error_predicted,
        error_band_99: band,
        within_band: (band[0]..=band[1]).contains(&errors),
        blocked_pulses_mean: mean(&|r| r.blocked_pulses),
        suppressed_clicks_mean: mean(&|r| r.suppressed_clicks),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    outln!("{text}");
    if let Some(path) = &a.out {
        write_output(&mut man, path, (text + "\n").as_bytes())?;
    }
    if let Some(path) = &a.results {
        let mut lines = String::new();
        for r in &results {
            lines.push_str(&serde_json::to_string(r).expect("result serializes"));
            lines.push('\n');
        }
        write_output(&mut man, path, lines.as_bytes())?;
    }
    man.write_all()?;
    Ok(0)
}

pub fn referee(
    listen: &str,
    source: &PlanSource,
    seed: Seed,
    sessions: Option<u64>,
    timeout: Option<f64>,
    dark_dead_time: bool,
    report: Option<&Path>,
) -> Result<u8> {
    let plan = source.resolve()?;
    let mut man = RunManifest::new("referee").config(source.config_paths()).seed("physics", seed.to_hex());
    let mut cfg = RefereeConfig::new(plan, seed);
    cfg.max_sessions = sessions.map(|s| s as usize);
    cfg.session_timeout = timeout.map(Duration::from_secs_f64);
    cfg.dark_triggers_dead_time = dark_dead_time;
    let referee = Referee::bind(listen, cfg).with_context(|| format!("binding {listen}"))?;
    eprintln!("listening {}", referee.local_addr()?);
    let mut file = match report {
        Some(p) => {
            man.output(p);
            man.write_all()?;
            Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => None,
    };
    let stdout = std::io::stdout();
    let mut io_err = None;
    referee.run(|r| {
        let line = serde_json::to_string(r).expect("report serializes");
        let mut out = stdout.lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        if let Some(f) = file.as_mut() {
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                io_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing session report");
    }
    Ok(0)
}

pub enum PartySource {
    Encode { code: String, input: PathBuf },
    Codeword(PathBuf),
    Synthetic { kind: InputKind, plan: PathBuf, pair_seed: Seed, frame_len: usize },
}

pub struct PartyArgs {
    pub role: RoleArg,
    pub connect: String,
    pub session: [u8; 16],
    pub sessions: u64,
    pub chunk_bits: u32,
    pub input: PartySource,
    pub timeout: Option<f64>,
    pub out: Option<PathBuf>,
}

pub fn party(a: PartyArgs) -> Result<u8> {
    let role = match a.role {
        RoleArg::Alice => Role::Alice,
        RoleArg::Bob => Role::Bob,
    };
    let mut man = RunManifest::new("party");
    // per-session input; the plan is read once
    let mut synthetic_plan = None;
    let fixed: Option<(ToeplitzCode, BitString)>;
    let mut fixed_codeword = None;
    match &a.input {
        PartySource::Encode { code, input } => {
            let c = load_code(code)?;
            let x = read_bits(input, c.n())?;
            man = man.config([code.clone(), input.display().to_string()]);
            fixed = Some((c, x));
        }
        PartySource::Codeword(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let f = decode_code_file(&bytes).with_context(|| format!("decoding {}", path.display()))?;
            fixed_codeword = Some(f.codeword.with_context(|| format!("{} holds no codeword", path.display()))?);
            man = man.config([path.display().to_string()]);
            fixed = None;
        }
        PartySource::Synthetic { plan, pair_seed, .. } => {
            synthetic_plan = Some(read_plan(plan)?);
            man = man.config([plan.display().to_string()]).seed("pairs", pair_seed.to_hex());
            fixed = None;
        }
    }
    let mut out = match &a.out {
        Some(p) => {
            man.output(p);
            Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => None,
    };
    man.write_all()?;
    let mut aborted = 0u64;
    for k in 0..a.sessions {
        let sid = session_id_for(&a.session, k);
        let input = match &a.input {
            PartySource::Encode { .. } => {
                let (c, x) = fixed.clone().expect("loaded above");
                PartyInput::Encode { code: c, x }
            }
            PartySource::Codeword(_) => PartyInput::Codeword(fixed_codeword.clone().expect("loaded above")),
            PartySource::Synthetic { kind, pair_seed, frame_len, .. } => {
                let p = synthetic_plan.as_ref().expect("loaded above");
                let (x, y) = input_pair(*kind, p.m, p.delta, *frame_len, pair_seed.derive(k))?;
                PartyInput::Codeword(if role == Role::Alice { x } else { y })
            }
        };
        let mut cfg = PartyConfig::new(role, a.connect.clone(), sid);
        cfg.chunk_bits = a.chunk_bits;
        cfg.verdict_timeout = a.timeout.map(Duration::from_secs_f64);
        let report = run_party(&cfg, input).map_err(|e| match e {
            PartyError::Connect { .. } => anyhow::Error::new(e),
            other => anyhow::Error::new(other).context(format!("session {k}")),
        })?;
        if let VerdictStatus::Aborted(_) = report.verdict.status {
            aborted += 1;
        }
        let line = serde_json::to_string(&report).expect("report serializes");
        outln!("{line}");
        if let Some(f) = out.as_mut() {
            writeln!(f, "{line}")?;
        }
    }
    if let Some(f) = out.as_mut() {
        f.flush()?;
    }
    Ok(if aborted > 0 { EXIT_ABORTED } else { 0 })
}

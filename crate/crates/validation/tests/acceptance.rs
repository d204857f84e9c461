//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Pass criterion numbers as arguments to run a subset:
//!
//! ```text
//! cargo test -p qfp-validation --test acceptance -- 6 8
//! ```
//!
//! The networked criterion re-runs this binary as the referee and party
//! processes; those modes are selected by a leading `--as-process` argument.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use qfp::codec::{encode, encode_reference, encode_with, output_length, EncoderConfig, Seed};
use qfp::decision::Outcome;
use qfp::model::{balance_sources, classical_baseline, p_diff, p_equal, quantum_info_bound};
use qfp::netparty::{run_party, session_hex, session_id_for, PartyConfig, PartyInput, Referee, RefereeConfig, Role};
use qfp::planner::{evaluate_at, plan_with, CodeShape, PlanDocument, PlanOptions, Uncertainty, PLAN_SCHEMA};
use qfp::simulator::{
    dead_time_loss, distance_target, run_trials, simulate_run, worst_case_pair, AllEqual, DiffBits, PairMode,
    PhasePattern, Physics, Repeated,
};
use qfp::{BitString, ProtocolPlan, SystemParams, ToeplitzCode};
use qfp_validation::{binomial_band, binomial_cdf, ceil_ratio, naive_encode, Criterion, Estimate, Published};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHILD_FLAG: &str = "--as-process";

type CriterionFn = dyn Fn(&Published) -> Criterion;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some(CHILD_FLAG) {
        child(&args[1..]);
        return;
    }
    let wanted: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let run = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let pubd = Published::load();
    let criteria: [(u32, &CriterionFn); 9] = [
        (1, &criterion_1),
        (2, &criterion_2),
        (3, &criterion_3),
        (4, &|_| criterion_4()),
        (5, &|_| criterion_5()),
        (6, &|_| criterion_6()),
        (7, &criterion_7),
        (8, &|_| criterion_8()),
        (9, &|_| criterion_9()),
    ];
    let mut results = Vec::new();
    for (k, f) in criteria {
        if !run(k) {
            continue;
        }
        let c = f(&pubd).finish();
        print!("{}", c.render());
        let _ = std::io::stdout().flush();
        results.push((c.number, c.pass));
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.1).map(|r| r.0.to_string()).collect();
    println!("\nacceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn rate_options(rate: f64, uncertainty: Uncertainty) -> PlanOptions {
    PlanOptions { shape: CodeShape::Rate(rate), uncertainty, ..PlanOptions::default() }
}

fn criterion_1(pubd: &Published) -> Criterion {
    let mut c = Criterion::start(1, "Q reconciliation against the published table");
    let t0 = Instant::now();
    for r in &pubd.rows {
        let n = r.n as u64;
        let params = pubd.params(&r.device);
        let m = output_length(n, pubd.rate);
        c.check(m == 5 * n, format!("n = {n}: m = {m}"));
        let mu_b = balance_sources(r.mu_a, params.eta_ar.value(), params.eta_br.value()).unwrap();
        let q = quantum_info_bound(r.mu_a, mu_b, m).unwrap();
        let dev = q - r.q;
        c.check(
            dev.abs() <= r.q_err,
            format!(
                "n = {:.3e} ({}): mu_A = {}, mu_B = {mu_b:.1}, Q = {q:.0} vs {} +/- {} (off by {dev:+.0})",
                r.n, r.device, r.mu_a, r.q, r.q_err
            ),
        );
    }
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    c.check(ms < 1000.0, format!("runtime {ms:.2} ms"));
    c
}

fn criterion_2(pubd: &Published) -> Criterion {
    let mut c = Criterion::start(2, "gamma reconciliation");
    let t0 = Instant::now();
    let mut from_pub = Vec::new();
    let mut end_to_end = Vec::new();
    for r in &pubd.rows {
        let n = r.n as u64;
        let params = pubd.params(&r.device);
        let g_pub_q = classical_baseline::<f64>(n) / r.q;
        c.check(
            (g_pub_q - r.gamma).abs() <= 0.05,
            format!("n = {:.3e}: C / Q_pub = {g_pub_q:.3} vs {} (tolerance 0.05)", r.n, r.gamma),
        );
        from_pub.push(g_pub_q);
        // the planner is asked for the error the run reported, at m = 5n
        let plan = plan_with(n, pubd.delta, &params, r.epsilon, &rate_options(pubd.rate, Uncertainty::default()));
        match plan {
            Ok(p) => {
                let g = p.account.gamma;
                c.check(
                    (g - r.gamma).abs() <= 0.15,
                    format!(
                        "n = {:.3e}: planner at eps {:.1e} picks mu_A = {:.0} (published {}), gamma = {g:.3} vs {} \
                         (tolerance 0.15)",
                        r.n, r.epsilon, p.mu_a, r.mu_a, r.gamma
                    ),
                );
                end_to_end.push(g);
            }
            Err(e) => {
                c.check(false, format!("n = {:.3e}: planner failed: {e}", r.n));
                end_to_end.push(f64::NAN);
            }
        }
        if let Ok(p) =
            plan_with(n, pubd.delta, &params, r.epsilon, &rate_options(pubd.rate, Uncertainty::experimental()))
        {
            c.note(format!("n = {:.3e}: robust planner gamma = {:.3}", r.n, p.account.gamma));
        }
    }
    let crosses = |g: &[f64]| g[0] < 1.0 && g[1] > 1.0;
    c.check(
        crosses(&from_pub),
        format!(
            "crossover between n = 1.53e6 and 1.2e7 using published Q: gamma {:.3} -> {:.3}",
            from_pub[0], from_pub[1]
        ),
    );
    c.check(
        crosses(&end_to_end),
        format!(
            "crossover between n = 1.53e6 and 1.2e7 end to end: gamma {:.3} -> {:.3}",
            end_to_end[0], end_to_end[1]
        ),
    );
    let s = t0.elapsed().as_secs_f64();
    c.check(s < 10.0, format!("runtime {s:.2} s"));
    c
}

fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64)).collect()
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
}

fn criterion_3(pubd: &Published) -> Criterion {
    let mut c = Criterion::start(3, "error probability against the published values");
    for r in &pubd.rows {
        let n = r.n as u64;
        let params = pubd.params(&r.device);
        let at = |u| evaluate_at(n, pubd.delta, &params, r.mu_a, &rate_options(pubd.rate, u)).unwrap();
        let (nominal, worst) = (at(Uncertainty::default()), at(Uncertainty::experimental()));
        let (lo, hi) = (nominal.epsilon_pred / 10.0, worst.epsilon_pred * 10.0);
        c.check(
            (lo..=hi).contains(&r.epsilon),
            format!(
                "n = {:.3e}: published {:.1e}; model at published mu_A: nominal {:.2e}, worst corner {:.2e}; \
                 order-of-magnitude window [{lo:.1e}, {hi:.1e}]",
                r.n, r.epsilon, nominal.epsilon_pred, worst.epsilon_pred
            ),
        );
        let u = Uncertainty::<f64>::experimental();
        let favourable = SystemParams {
            visibility: (params.visibility + u.visibility).min(1.0),
            p_dark: params.p_dark - u.p_dark,
            ..params
        };
        let opts = rate_options(pubd.rate, Uncertainty::default());
        let best = evaluate_at(n, pubd.delta, &favourable, r.mu_a * (1.0 + u.mu_rel), &opts).unwrap();
        c.note(format!("n = {:.3e}: most favourable corner gives {:.2e}", r.n, best.epsilon_pred));
    }
    // property substitute
    for (name, params) in [("id500", SystemParams::id500()), ("clavis2", SystemParams::clavis2())] {
        let eps: Vec<f64> = grid(200.0, 20_000.0, 20)
            .into_iter()
            .map(|mu| {
                evaluate_at(1_000_000, 0.22, &params, mu, &rate_options(0.2, Uncertainty::default()))
                    .unwrap()
                    .epsilon_pred
            })
            .collect();
        c.check(
            non_increasing(&eps),
            format!("{name}: eps falls over 20 intensities 200..2e4 at m = 5e6 ({:.1e} -> {:.1e})", eps[0], eps[19]),
        );
        // both grids start at mu = 200; below that eps sits near 0.1 and the
        // integer threshold makes it a sawtooth
        let eps: Vec<f64> = grid(5e4, 1e7, 20)
            .into_iter()
            .map(|m| {
                let m = m.round() as u64;
                let opts = PlanOptions { shape: CodeShape::OutputLen(m), ..PlanOptions::default() };
                evaluate_at(m / 5, 0.22, &params, 4e-3 * m as f64, &opts).unwrap().epsilon_pred
            })
            .collect();
        c.check(
            non_increasing(&eps),
            format!(
                "{name}: eps falls over 20 lengths 5e4..1e7 at 4e-3 photons per pulse ({:.1e} -> {:.1e})",
                eps[0], eps[19]
            ),
        );
    }
    c
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::start(4, "encoder against the naive GF(2) oracle");
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut mismatches = 0;
    for case in 0..1000u64 {
        let n = rng.gen_range(1..=256usize);
        let m = rng.gen_range(n..=6 * n);
        let seed = Seed::from_u64(case ^ 0xc0de);
        let code = ToeplitzCode::from_header(n as u64, m as u64, seed).unwrap();
        let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let got: Vec<bool> = encode(&code, &BitString::from_bools(&x)).unwrap().iter().collect();
        mismatches += usize::from(got != naive_encode(n, m, &seed, &x));
    }
    c.check(mismatches == 0, format!("1000 random instances with n <= 256: {mismatches} mismatches"));

    let mut linear_fail = 0;
    let mut determinism_fail = 0;
    for case in 0..200u64 {
        let n = rng.gen_range(1..=4096usize);
        let m = rng.gen_range(n..=5 * n);
        let code = ToeplitzCode::from_header(n as u64, m as u64, Seed::from_u64(case)).unwrap();
        let x = BitString::random(n, &mut rng);
        let y = BitString::random(n, &mut rng);
        let (ex, ey) = (encode(&code, &x).unwrap(), encode(&code, &y).unwrap());
        linear_fail += usize::from(encode(&code, &x.xor(&y)).unwrap() != ex.xor(&ey));
        let again = ToeplitzCode::from_header(n as u64, m as u64, Seed::from_u64(case)).unwrap();
        let small = EncoderConfig { transform_log2: Some((2 * n).next_power_of_two().trailing_zeros().max(6)) };
        determinism_fail += usize::from(encode(&again, &x).unwrap() != ex);
        determinism_fail += usize::from(encode_with(&code, &x, small).unwrap() != ex);
        determinism_fail += usize::from(encode_reference(&code, &x).unwrap() != ex);
    }
    let zero = ToeplitzCode::from_header(1000, 5000, Seed::from_u64(1)).unwrap();
    let e0 = encode(&zero, &BitString::zeros(1000)).unwrap();
    c.check(e0.count_ones() == 0 && e0.len() == 5000, "E(0) = 0");
    c.check(
        linear_fail == 0,
        format!("linearity E(x ^ y) = E(x) ^ E(y) on 200 pairs, n <= 4096: {linear_fail} failures"),
    );
    c.check(
        determinism_fail == 0,
        format!("determinism across rebuilds, transform sizes and the reference encoder: {determinism_fail} failures"),
    );
    let s = t0.elapsed().as_secs_f64();
    c.check(s < 60.0, format!("runtime {s:.1} s"));
    c
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::start(5, "encoder performance");
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    c.note(format!("{cores} core(s) available; the encoder runs on one"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut times = Vec::new();
    for (n, reps) in [(100_000u64, 5), (1_000_000, 3), (10_000_000, 1)] {
        let code = ToeplitzCode::with_output_len(n, 5 * n, 0.22, Seed::from_u64(n)).unwrap();
        let x = BitString::random(n as usize, &mut rng);
        let mut best = f64::INFINITY;
        let mut out = BitString::zeros(0);
        for _ in 0..reps {
            let t0 = Instant::now();
            out = encode(&code, &x).unwrap();
            best = best.min(t0.elapsed().as_secs_f64());
        }
        // spot-check a few output bits against the generator entries
        let ok = (0..4).all(|_| {
            let j = rng.gen_range(0..code.m());
            let bit = (0..code.n()).fold(false, |acc, i| acc ^ (x.get(i) & code.entry(i, j)));
            bit == out.get(j)
        });
        c.check(ok, format!("n = {n:.0e}, m = {:.0e}: {best:.3} s (best of {reps}), spot-checked bits agree", 5 * n));
        times.push(best);
    }
    c.check(times[2] <= 120.0, format!("n = 1e7 in {:.2} s (limit 120 s)", times[2]));
    for (i, w) in times.windows(2).enumerate() {
        let ratio = w[1] / w[0];
        c.check(ratio < 15.0, format!("n = 1e{} -> 1e{}: time x{ratio:.1} (limit 15)", 5 + i, 6 + i));
    }
    c
}

/// Clavis2-like device with no dead time, `mu_det` and dark counts chosen
/// so that `m p_E` and `m p_D` hit the given click counts.
fn scaled_device(m: u64, delta: f64, clicks_equal: f64, clicks_diff: f64) -> (SystemParams, f64) {
    let mut params = SystemParams { dead_pulses: 0, ..SystemParams::clavis2() };
    let mut mu = 0.0;
    for _ in 0..8 {
        let gap = |mu: f64| {
            m as f64 * (p_diff(&params, mu, m, delta).unwrap() - p_equal(&params, mu, m).unwrap())
                - (clicks_diff - clicks_equal)
        };
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mu = 0.5 * (lo + hi);
        let leak = p_equal(&SystemParams { p_dark: 0.0, ..params }, mu, m).unwrap();
        params.p_dark = (clicks_equal / m as f64 - leak) / (1.0 - leak);
    }
    (params, mu)
}

fn d1_estimate(pattern: &(impl PhasePattern + ?Sized), physics: Physics, seed: Seed, runs: u64) -> Estimate {
    let r = run_trials(pattern, physics, 0, seed, runs, 0).unwrap();
    Estimate::of(r.iter().map(|t| t.clicks_d1 as f64))
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::start(6, "Monte Carlo against the analytic click model");
    let m = 1_000_000u64;
    let delta = 0.22;
    let (params, mu) = scaled_device(m, delta, 50.0, 150.0);
    let pe = p_equal(&params, mu, m).unwrap();
    let d = distance_target(m, delta);
    let pd = p_diff(&params, mu, m, d as f64 / m as f64).unwrap();
    c.note(format!(
        "m = 1e6, mu_det = {mu:.2}, p_dark = {:.3e}, visibility {}, no dead time: m p_E = {:.2}, m p_D = {:.2}",
        params.p_dark,
        params.visibility,
        m as f64 * pe,
        m as f64 * pd
    ));
    let physics = Physics::new(&params, mu, m);
    let (a, b) = worst_case_pair(m, delta, PairMode::Exact, Seed::from_u64(61)).unwrap();
    let diff = DiffBits(a.xor(&b));
    for (label, pattern, p) in
        [("equal", &AllEqual(m) as &dyn PhasePattern, pe), ("worst-case", &diff as &dyn PhasePattern, pd)]
    {
        let e = d1_estimate(pattern, physics, Seed::from_u64(62), 10_000);
        let want = m as f64 * p;
        c.check(
            e.z(want).abs() <= 3.0,
            format!(
                "{label} inputs, 1e4 runs: mean D1 = {:.3} +/- {:.3} vs {want:.3} ({:+.2} standard errors)",
                e.mean,
                e.std_error,
                e.z(want)
            ),
        );
    }

    // verdict errors at a plan for eps = 1e-2 on the same device
    let opts = PlanOptions { shape: CodeShape::OutputLen(m), ..PlanOptions::default() };
    let plan = plan_with(m / 5, delta, &params, 1e-2, &opts).unwrap();
    let physics = Physics::from_plan(&plan);
    let pe = p_equal(&params, plan.mu_det, m).unwrap();
    let pd = p_diff(&params, plan.mu_det, m, d as f64 / m as f64).unwrap();
    c.note(format!(
        "plan: mu_det = {:.2}, threshold {}, predicted eps {:.3e}",
        plan.mu_det, plan.threshold, plan.epsilon_pred
    ));
    let runs = 100_000u64;
    let cases = [
        ("equal", &AllEqual(m) as &dyn PhasePattern, 1.0 - binomial_cdf(m, pe, plan.threshold), Outcome::Different),
        ("worst-case", &diff as &dyn PhasePattern, binomial_cdf(m, pd, plan.threshold), Outcome::Equal),
    ];
    for (label, pattern, p_err, wrong) in cases {
        let r = run_trials(pattern, physics, plan.threshold, Seed::from_u64(63), runs, 0).unwrap();
        let errors = r.iter().filter(|t| t.verdict == wrong).count() as u64;
        let (lo, hi) = binomial_band(runs, p_err, 0.99);
        c.check(
            (lo..=hi).contains(&errors),
            format!(
                "{label} inputs, 1e5 runs: {errors} wrong verdicts, predicted {:.1}, 99% band [{lo}, {hi}]",
                runs as f64 * p_err
            ),
        );
    }

    // the same device with its dead time, for scale
    let dead = Physics { dead_pulses: 50, ..Physics::new(&params, mu, m) };
    let e = d1_estimate(&diff, dead, Seed::from_u64(62), 10_000);
    let want = m as f64 * p_diff(&params, mu, m, d as f64 / m as f64).unwrap();
    c.note(format!(
        "with 50-pulse dead time the worst-case D1 mean is {:.3} ({:+.2}% against the dead-time-free model; \
         first-order loss estimate {:.2}%)",
        e.mean,
        100.0 * (e.mean / want - 1.0),
        -100.0 * dead_time_loss(want / m as f64, 50).unwrap()
    ));
    c
}

fn criterion_7(pubd: &Published) -> Criterion {
    let mut c = Criterion::start(7, "dead-time negligibility");
    let row = pubd.rows.iter().max_by(|a, b| a.n.total_cmp(&b.n)).unwrap();
    let n = row.n as u64;
    let m = output_length(n, pubd.rate);
    let params = pubd.params(&row.device);
    let mu_det = params.detected_mean(row.mu_a);
    let (fa, fb) = worst_case_pair(430, pubd.delta, PairMode::Framed(430), Seed::from_u64(71)).unwrap();
    let worst = Repeated { frame: fa.xor(&fb), len: m };
    let runs = 200;
    c.note(format!(
        "n = {n:.3e}, m = {m:.3e}, mu_A = {}, mu_det = {mu_det:.1}, {runs} runs per setting with shared seeds",
        row.mu_a
    ));
    for (label, pattern) in [("equal", &AllEqual(m) as &dyn PhasePattern), ("worst-case", &worst as &dyn PhasePattern)]
    {
        let mut totals = [0.0; 2];
        let mut d1 = [0.0; 2];
        for (k, dead) in [0u32, 50].into_iter().enumerate() {
            let physics = Physics { dead_pulses: dead, ..Physics::new(&params, mu_det, m) };
            let r = run_trials(pattern, physics, 0, Seed::from_u64(72), runs, 0).unwrap();
            totals[k] = r.iter().map(|t| (t.clicks_d0 + t.clicks_d1) as f64).sum::<f64>() / runs as f64;
            d1[k] = r.iter().map(|t| t.clicks_d1 as f64).sum::<f64>() / runs as f64;
        }
        let rel = (totals[0] - totals[1]) / totals[0];
        let rel_d1 = (d1[0] - d1[1]) / d1[0];
        c.check(
            rel.abs() <= 2e-3,
            format!(
                "{label} inputs: mean clicks {:.1} without vs {:.1} with dead time, {:.3}% apart (D1 alone {:.3}%)",
                totals[0],
                totals[1],
                100.0 * rel,
                100.0 * rel_d1
            ),
        );
    }
    let rate = (2.0 * mu_det / m as f64) + 2.0 * params.p_dark;
    c.note(format!(
        "first-order estimate: 50 pulses x {:.2e} clicks per pulse = {:.3}% per detector",
        rate / 2.0,
        100.0 * dead_time_loss(rate / 2.0, 50).unwrap()
    ));
    c
}

fn write_plan(dir: &Path, plan: &ProtocolPlan) -> std::path::PathBuf {
    let path = dir.join("plan.json");
    std::fs::write(&path, plan.to_json()).unwrap();
    path
}

fn read_plan(path: &str) -> ProtocolPlan {
    let doc: PlanDocument = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(doc.schema, PLAN_SCHEMA);
    doc.plan
}

const EQUAL_BASE: [u8; 16] = [0xe0; 16];
const WORST_BASE: [u8; 16] = [0xd1; 16];
const CODE_SEED: u64 = 81;
const PAIR_SEED: u64 = 82;

fn session_code(plan: &ProtocolPlan) -> ToeplitzCode {
    ToeplitzCode::with_output_len(plan.n, plan.m, plan.delta, Seed::from_u64(CODE_SEED)).unwrap()
}

/// The codeword pair of session `k`: a shared random message through `code`,
/// or a worst-case pair when `code` is `None`.
fn session_codewords(plan: &ProtocolPlan, code: Option<&ToeplitzCode>, k: u64) -> (BitString, BitString) {
    let seed = Seed::from_u64(PAIR_SEED).derive(k);
    match code {
        Some(code) => {
            let mut rng = ChaCha8Rng::from_seed(seed.0);
            let c = encode(code, &BitString::random(plan.n as usize, &mut rng)).unwrap();
            (c.clone(), c)
        }
        None => worst_case_pair(plan.m, plan.delta, PairMode::Exact, seed).unwrap(),
    }
}

/// Referee or party process for criterion 8.
fn child(args: &[String]) {
    match args[0].as_str() {
        "referee" => {
            let plan = read_plan(&args[1]);
            let sessions: usize = args[2].parse().unwrap();
            let mut config = RefereeConfig::new(plan, Seed::from_u64(83));
            config.max_sessions = Some(sessions);
            config.session_timeout = Some(Duration::from_secs(60));
            let referee = Referee::bind("127.0.0.1:0", config).unwrap();
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", referee.local_addr().unwrap()).unwrap();
            out.flush().unwrap();
            referee
                .run(|r| {
                    writeln!(out, "{}", serde_json::to_string(r).unwrap()).unwrap();
                })
                .unwrap();
        }
        "party" => {
            let role = if args[1] == "alice" { Role::Alice } else { Role::Bob };
            let addr = &args[2];
            let plan = read_plan(&args[3]);
            let per_batch: u64 = args[4].parse().unwrap();
            let code = session_code(&plan);
            let mut out = std::io::stdout().lock();
            for (code, base) in [(Some(&code), EQUAL_BASE), (None, WORST_BASE)] {
                for k in 0..per_batch {
                    let (a, b) = session_codewords(&plan, code, k);
                    let word = if role == Role::Alice { a } else { b };
                    let mut config = PartyConfig::new(role, addr.clone(), session_id_for(&base, k));
                    config.verdict_timeout = Some(Duration::from_secs(120));
                    let report = run_party(&config, PartyInput::Codeword(word)).unwrap();
                    writeln!(out, "{}", serde_json::to_string(&report).unwrap()).unwrap();
                }
            }
        }
        other => panic!("unknown process kind {other}"),
    }
}

fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::start(8, "networked sessions over three processes");
    let m = 1_000_000u64;
    let params = SystemParams::id500();
    let opts = PlanOptions { shape: CodeShape::OutputLen(m), ..PlanOptions::default() };
    let plan = plan_with(m / 5, 0.22, &params, 1e-2, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let plan_path = write_plan(dir.path(), &plan);
    let plan_arg = plan_path.to_str().unwrap();
    let per_batch = 300u64;
    c.note(format!(
        "id500, m = 1e6, mu_det = {:.2}, threshold {}, predicted eps {:.3e}; {per_batch} equal-input and {per_batch} \
         worst-case sessions",
        plan.mu_det, plan.threshold, plan.epsilon_pred
    ));

    let me = std::env::current_exe().unwrap();
    let mut referee = Command::new(&me)
        .args([CHILD_FLAG, "referee", plan_arg, &(2 * per_batch).to_string()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut ref_out = BufReader::new(referee.stdout.take().unwrap());
    let mut addr = String::new();
    ref_out.read_line(&mut addr).unwrap();
    let addr = addr.trim().to_string();
    // reports must be read as they come or the pipe fills and stalls the referee
    let drain = std::thread::spawn(move || {
        let mut text = String::new();
        ref_out.read_to_string(&mut text).map(|_| text)
    });
    let parties: Vec<_> = ["alice", "bob"]
        .into_iter()
        .map(|role| {
            Command::new(&me)
                .args([CHILD_FLAG, "party", role, &addr, plan_arg, &per_batch.to_string()])
                .stdout(Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    // collected side by side so neither party blocks on a full stdout pipe
    let waits: Vec<_> = parties.into_iter().map(|p| std::thread::spawn(move || p.wait_with_output())).collect();
    let party_out: Vec<_> = waits.into_iter().map(|w| w.join().unwrap().unwrap()).collect();
    if party_out.iter().any(|o| !o.status.success()) {
        // the referee would otherwise wait for sessions that never come
        let _ = referee.kill();
    }
    let text = drain.join().unwrap().unwrap();
    let ref_status = referee.wait().unwrap();
    c.check(
        ref_status.success() && party_out.iter().all(|o| o.status.success()),
        "referee, alice and bob processes exit cleanly",
    );
    let reports = json_lines(&text);
    let alice = json_lines(&String::from_utf8_lossy(&party_out[0].stdout));
    let bob = json_lines(&String::from_utf8_lossy(&party_out[1].stdout));
    c.check(
        reports.len() as u64 == 2 * per_batch && alice.len() == reports.len() && bob.len() == reports.len(),
        format!("{} referee reports, {} alice and {} bob verdicts", reports.len(), alice.len(), bob.len()),
    );
    if reports.len() as u64 != 2 * per_batch {
        return c;
    }

    // verdicts
    let pe = p_equal(&params, plan.mu_det, m).unwrap();
    let d = distance_target(m, plan.delta);
    let pd = p_diff(&params, plan.mu_det, m, d as f64 / m as f64).unwrap();
    let is_equal_batch = |r: &serde_json::Value| {
        let id = r["session_id"].as_str().unwrap();
        (0..per_batch).any(|k| session_hex(&session_id_for(&EQUAL_BASE, k)) == id)
    };
    let (eq, worst): (Vec<_>, Vec<_>) = reports.iter().partition(|r| is_equal_batch(r));
    let wrong = |rs: &[&serde_json::Value], bad: &str| rs.iter().filter(|r| r["status"] == bad).count() as u64;
    let aborted = reports.iter().filter(|r| r["status"] == "aborted").count();
    c.check(aborted == 0, format!("{aborted} aborted sessions"));
    for (label, rs, bad, p_err) in [
        ("equal inputs", &eq, "different", 1.0 - binomial_cdf(m, pe, plan.threshold)),
        ("worst-case pairs", &worst, "equal", binomial_cdf(m, pd, plan.threshold)),
    ] {
        let errors = wrong(rs, bad);
        let (lo, hi) = binomial_band(rs.len() as u64, p_err, 0.99);
        c.check(
            rs.len() as u64 == per_batch && (lo..=hi).contains(&errors),
            format!(
                "{label}: {} of {} verdicts correct, {errors} wrong; predicted {:.2}, 99% band [{lo}, {hi}]",
                rs.len() as u64 - errors,
                rs.len(),
                rs.len() as f64 * p_err
            ),
        );
    }

    // byte accounting
    let field = |v: &serde_json::Value, path: &[&str]| path.iter().fold(v, |v, k| &v[*k]).as_u64().unwrap();
    let payload_exact =
        reports.iter().all(|r| field(r, &["alice", "payload_bits"]) == m && field(r, &["bob", "payload_bits"]) == m);
    c.check(payload_exact, "every session carried exactly m = 1e6 payload bits from each party");
    let nothing_back = reports.iter().all(|r| {
        field(r, &["relayed_bytes"]) == 0
            && field(r, &["bytes_to_parties_before_verdict"]) == 0
            && field(r, &["verdict_bytes"]) == 94
    });
    c.check(nothing_back, "referee wrote nothing to the parties but one 47-byte verdict each, and relayed nothing");
    let mut matched = true;
    let mut sent = [0u64; 2];
    let mut seen = [0u64; 2];
    for (i, (side, role)) in [(&alice, "alice"), (&bob, "bob")].into_iter().enumerate() {
        for p in side.iter() {
            let sid = p["session_id"].as_str().unwrap();
            let r = reports.iter().find(|r| r["session_id"] == sid).unwrap();
            matched &= field(p, &["bytes_received"]) == 47 && field(p, &["payload_bits"]) == m;
            matched &= p["verdict"]["status"]["code"] == r["status"];
            sent[i] += field(p, &["bytes_sent"]);
            seen[i] += field(r, &[role, "bytes"]);
        }
    }
    c.check(
        matched && sent == seen,
        format!(
            "alice sent {} bytes and bob {} bytes, all received by the referee; each party received only its \
             verdict, so no bytes passed between alice and bob",
            sent[0], sent[1]
        ),
    );

    // the referee reproduces a local simulation of the same sessions
    let same = (0..3u64).all(|k| {
        let sid = session_id_for(&WORST_BASE, k);
        let (a, b) = session_codewords(&plan, None, k);
        let local = simulate_run(&a, &b, &plan, Seed::from_u64(83).mix(&sid)).unwrap();
        let r = reports.iter().find(|r| r["session_id"] == session_hex(&sid).as_str()).unwrap();
        field(r, &["result", "clicks_d1"]) == local.clicks_d1 && field(r, &["result", "clicks_d0"]) == local.clicks_d0
    });
    c.check(same, "first three worst-case sessions match a local simulation with the same seeds");
    c
}

fn criterion_9() -> Criterion {
    let mut c = Criterion::start(9, "distance machinery");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut bad = 0;
    for case in 0..1000u64 {
        let m = rng.gen_range(1..=200_000u64);
        let den = rng.gen_range(1..=10_000u64);
        let num = rng.gen_range(0..=den);
        let delta = num as f64 / den as f64;
        let (a, b) = worst_case_pair(m, delta, PairMode::Exact, Seed::from_u64(case)).unwrap();
        bad += usize::from(a.hamming_distance(&b) as u64 != ceil_ratio(num, den, m) || a.len() as u64 != m);
    }
    c.check(bad == 0, format!("exact mode, 1000 random (m, delta = a/b): {bad} pairs off ceil(delta m)"));
    let frame = 430u64;
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 1..=1000u64 {
        let m = k * frame;
        let (a, b) = worst_case_pair(m, 0.22, PairMode::Framed(frame as usize), Seed::from_u64(k)).unwrap();
        let rel = a.hamming_distance(&b) as f64 / m as f64;
        worst_excess = worst_excess.max((rel - 0.22).abs() - 1.0 / k as f64);
    }
    c.check(
        worst_excess <= 0.0,
        format!("framed mode (430-bit frames), k = 1..1000 frames: |d/m - 0.22| - 1/k peaks at {worst_excess:.2e}"),
    );
    c.note(format!(
        "each frame carries ceil(0.22 * 430) = 95 flips, a fixed offset of {:.2e} from 0.22",
        95.0 / 430.0 - 0.22
    ));
    c
}

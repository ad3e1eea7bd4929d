//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::Command;
use std::time::Instant;

use ppe_gmm::audit::{
    audit_concentration, audit_indistinguishability, audit_triangle, default_triple_sampler, neighbor_at_distance,
    random_gmm,
};
use ppe_gmm::calibration::{
    calibrate_gamma, calibrate_mask_config, compose_epsilon, composed_budget, min_subsets, ppe_threshold,
    CalibrationInput,
};
use ppe_gmm::dataset::Dataset;
use ppe_gmm::learn::{em_fit, make_separated_gmm, sample_gmm, LearnerOptions};
use ppe_gmm::masking::{mask_gmm, MaskConfig};
use ppe_gmm::metrics::{
    check_restricted_triangle, dist_k, dist_mixture, dist_mixture_bruteforce, dist_mixture_prepared, prepare,
    SemimetricParams,
};
use ppe_gmm::ppe::{agreement_counts, Verdict};
use ppe_gmm::random::{tlap_bound, tlap_cdf, tlap_sample, RandomStream, TLapParams};
use ppe_gmm::{fit_gmm_private, Gmm64, PrivateFitConfig, Result};

// reference values evaluated independently with 30-digit arithmetic
const ORACLE_THRESHOLD_274: f64 = 0.899_734_959_094_671_4;
const ORACLE_COMPOSE_4: f64 = 1.093_372_721_181_645_4;
const ORACLE_GAMMA: f64 = 6.011_202_350_951_63e-6;

struct Outcome {
    passed: bool,
    summary: String,
}

fn check(passed: bool, summary: String) -> Outcome {
    Outcome { passed, summary }
}

fn masking_input() -> CalibrationInput {
    CalibrationInput {
        alpha: 0.2,
        beta: 0.1,
        epsilon: 0.2,
        delta: 1e-6,
        k: 3,
        d: 2,
        c2: 10.0,
    }
}

fn fixture_config() -> PrivateFitConfig {
    let mut cfg = PrivateFitConfig::new(CalibrationInput {
        alpha: 0.5,
        beta: 0.1,
        epsilon: 1.0,
        delta: 1e-6,
        k: 2,
        d: 2,
        c2: 10.0,
    });
    cfg.radius = Some(2.0);
    cfg
}

fn matching_oracle() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for k in 2..=6 {
        for d in 1..=3 {
            let root = RandomStream::new(1, (10 * k + d) as u64);
            for i in 0..1000u64 {
                let mut s = root.substream(i);
                let a: Gmm64 = random_gmm(k, d, &mut s)?;
                // half the pairs are close perturbations, where ties are likely
                let b = if i % 2 == 0 {
                    random_gmm(k, d, &mut s)?
                } else {
                    mask_gmm(&a, &MaskConfig::new(0.05, 0.3, 0.2)?, &mut s)?
                };
                let fast = dist_mixture(&a, &b)?;
                let brute = dist_mixture_bruteforce(&a, &b)?;
                worst = worst.max((fast - brute).abs());
                pairs += 1;
            }
        }
    }
    Ok(check(
        worst <= 1e-12,
        format!("{pairs} pairs, max |matching - enumeration| = {worst:e}"),
    ))
}

fn formula_suite() -> Result<Outcome> {
    let threshold = ppe_threshold(274, 1.0, 1e-6)?;
    let t1 = min_subsets(1.0, 1e-6)?;
    let t2 = min_subsets(0.5, 1e-5)?;
    let eps = compose_epsilon(4, 0.1, 1e-6)?;
    let gamma = calibrate_gamma(&CalibrationInput {
        alpha: 0.05,
        beta: 0.05,
        epsilon: 0.1,
        delta: 1e-6,
        k: 2,
        d: 3,
        c2: 1.0,
    })?;
    let ok = (threshold - 0.89973).abs() <= 1e-5
        && (threshold - ORACLE_THRESHOLD_274).abs() <= 1e-12
        && t1 == 274
        && t2 == 416
        && (eps - 1.09338).abs() <= 1e-5
        && (eps - ORACLE_COMPOSE_4).abs() <= 1e-12
        && ((gamma - ORACLE_GAMMA) / ORACLE_GAMMA).abs() <= 1e-9;
    Ok(check(
        ok,
        format!("threshold {threshold:.12}, t_min {t1} and {t2}, composed eps {eps:.12}, gamma {gamma:.12e}"),
    ))
}

fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |acc: f64, (i, &x)| {
        let f = cdf(x);
        acc.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn tlap_sampler() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (idx, p) in [
        TLapParams::new(1.0, 1.0, 0.05)?,
        TLapParams::new(2.0 / 274.0, 1.0, 1e-6)?,
    ]
    .iter()
    .enumerate()
    {
        let a = tlap_bound(p);
        let mut s = RandomStream::new(3, idx as u64);
        let mut xs: Vec<f64> = (0..1_000_000).map(|_| tlap_sample(&mut s, p)).collect();
        let inside = xs.iter().all(|x| x.abs() <= a);
        let ks = ks_statistic(&mut xs, |x| tlap_cdf(p, x));
        ok &= inside && ks < 0.005;
        parts.push(format!("A = {a:.6}: all inside {inside}, KS {ks:.5}"));
    }
    Ok(check(ok, format!("10^6 samples each; {}", parts.join("; "))))
}

fn masking_concentration() -> Result<Outcome> {
    let inp = masking_input();
    let cfg = calibrate_mask_config(&inp)?;
    let reference: Gmm64 = make_separated_gmm(3, 2, 10.0, &mut RandomStream::from_seed(4))?;
    let masker = |g: &Gmm64, s: &mut RandomStream| mask_gmm(g, &cfg, s);
    let r = audit_concentration(
        masker,
        &reference,
        inp.alpha,
        inp.beta,
        2000,
        &RandomStream::from_seed(40),
    )?;
    Ok(check(
        r.statistic <= 0.13,
        format!("exceedance {:.4} over 2000 trials (limit 0.13)", r.statistic),
    ))
}

fn triangle_sampling() -> Result<Outcome> {
    let params = SemimetricParams::gmm();
    let sampler = default_triple_sampler::<f64>(3, 2, 0.5);
    let r = audit_triangle(sampler, &params, 100_000, &RandomStream::from_seed(5))?;
    let violations = r.details["violations"].as_u64().unwrap_or(u64::MAX);

    // tuples of reals under |x - y| (z = 1) and (x - y)^2 (z = 2)
    let metrics: [(RealMetric, SemimetricParams); 2] = [
        (|a, b| Ok((a - b).abs()), SemimetricParams::new(f64::MAX, 1.0)?),
        (|a, b| Ok((a - b).powi(2)), SemimetricParams::new(1.0, 2.0)?),
    ];
    let mut inherited = 0;
    let mut checked = 0;
    let mut s = RandomStream::from_seed(50);
    for (dist, p) in &metrics {
        for _ in 0..100_000 {
            let k = 2 + s.index(4);
            let tuple = |s: &mut RandomStream| -> Vec<f64> { (0..k).map(|_| s.uniform() * 2.0).collect() };
            let (a, b, c) = (tuple(&mut s), tuple(&mut s), tuple(&mut s));
            let d12 = dist_k(&a, &b, dist)?;
            let d23 = dist_k(&b, &c, dist)?;
            let d13 = dist_k(&a, &c, dist)?;
            checked += 1;
            if !check_restricted_triangle(d12, d23, d13, p) {
                inherited += 1;
            }
        }
    }
    Ok(check(
        violations == 0 && r.passed && inherited == 0,
        format!(
            "{} mixture triples (r = 1, z = 1.5): {violations} violations, worst ratio {:.4}; {checked} tuple triples: {inherited} violations",
            r.trials, r.statistic
        ),
    ))
}

fn end_to_end_utility() -> Result<Outcome> {
    let cfg = fixture_config();
    let alpha = cfg.calibration.alpha;
    let mut released = 0;
    let mut within = 0;
    for run in 0..50u64 {
        let root = RandomStream::new(6, run);
        let truth: Gmm64 = make_separated_gmm(2, 2, 10.0, &mut root.substream(0))?;
        let data = sample_gmm(&truth, 274 * 500, &mut root.substream(1))?;
        let (_, out) = fit_gmm_private(&data, &cfg, &root.substream(2))?;
        if let Verdict::Released(g) = out.verdict {
            released += 1;
            within += usize::from(dist_mixture(&g, &truth)? <= alpha);
        }
    }
    let ok = released >= 45 && within as f64 >= 0.9 * released as f64;
    Ok(check(
        ok,
        format!("{released}/50 released, {within}/{released} within alpha = {alpha} (agreement radius r = 2, z = 2)"),
    ))
}

fn scatter_rejection() -> Result<Outcome> {
    let cfg = fixture_config();
    let s = 500;
    let mut bots = 0;
    let mut q_max: f64 = 0.0;
    for run in 0..50u64 {
        let root = RandomStream::new(7, run);
        let a: Gmm64 = make_separated_gmm(2, 2, 10.0, &mut root.substream(0))?;
        let b: Gmm64 = make_separated_gmm(2, 2, 4.0, &mut root.substream(1))?;
        let mut points = Vec::with_capacity(274 * s);
        for chunk in 0..274u64 {
            let source = if chunk % 2 == 0 { &a } else { &b };
            points.extend(sample_gmm(source, s, &mut root.substream(2).substream(chunk))?.into_points());
        }
        let data = Dataset::new(2, points)?;
        let (_, out) = fit_gmm_private(&data, &cfg, &root.substream(3))?;
        q_max = q_max.max(out.diagnostics.q_mean);
        bots += usize::from(!out.verdict.is_released());
    }
    Ok(check(
        bots == 50,
        format!("{bots}/50 runs returned the failure symbol, largest Q = {q_max:.4}"),
    ))
}

fn sensitivity() -> Result<Outcome> {
    let t = 40;
    let s_pts = 100;
    let learner = |chunk: &[Vec<f64>], rng: &mut RandomStream| prepare(&em_fit(chunk, &LearnerOptions::new(2), rng)?);
    let dist = |a: &Vec<_>, b: &Vec<_>| dist_mixture_prepared(a, b);
    let radius = 0.5;
    let mut worst = 0usize;
    let mut changed = 0;
    let mut q_range = (f64::INFINITY, f64::NEG_INFINITY);
    for trial in 0..100u64 {
        let root = RandomStream::new(8, trial);
        let truth: Gmm64 = make_separated_gmm(2, 2, 6.0, &mut root.substream(0))?;
        let data = sample_gmm(&truth, t * s_pts, &mut root.substream(1))?.into_points();
        let mut neighbor = data.clone();
        let mut rng = root.substream(2);
        let idx = rng.index(data.len());
        neighbor[idx] = vec![20.0 * rng.normal(), 20.0 * rng.normal()];
        let (a, _) = agreement_counts(&data, t, radius, &learner, &dist, &root.substream(3))?;
        let (b, _) = agreement_counts(&neighbor, t, radius, &learner, &dist, &root.substream(3))?;
        let (sa, sb): (usize, usize) = (a.counts.iter().sum(), b.counts.iter().sum());
        worst = worst.max(sa.abs_diff(sb));
        changed += usize::from(sa != sb);
        let q = sa as f64 / (t * t) as f64;
        q_range = (q_range.0.min(q), q_range.1.max(q));
    }
    Ok(check(
        worst <= 2 * t,
        format!(
            "100 neighbors at t = {t}: max |Q - Q'| = {worst}/{} (limit 2/t = {}/{}), {changed} changed, Q in [{:.3}, {:.3}]",
            t * t,
            2 * t,
            t * t,
            q_range.0,
            q_range.1
        ),
    ))
}

fn indistinguishability() -> Result<Outcome> {
    let inp = masking_input();
    let gamma = calibrate_gamma(&inp)?;
    let cfg = calibrate_mask_config(&inp)?;
    let f: Gmm64 = make_separated_gmm(3, 2, 10.0, &mut RandomStream::from_seed(9))?;
    let fp = neighbor_at_distance(&f, gamma)?;
    let (eps, delta) = composed_budget(&inp)?;
    let masker = |g: &Gmm64, s: &mut RandomStream| mask_gmm(g, &cfg, s);
    let r = audit_indistinguishability(
        masker,
        &f,
        &fp,
        gamma,
        eps,
        delta,
        100_000,
        &RandomStream::from_seed(90),
    )?;
    Ok(check(
        r.passed,
        format!(
            "gamma = {gamma:.4e}, lower-bound statistic {:.4} vs budget {eps:.4} (raw log-ratio {}) over {} projections",
            r.statistic, r.details["raw_log_ratio"], r.details["projections"]
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("fixture.bin");
    let truth = dir.path().join("truth.json");
    let bin = env!("CARGO_BIN_EXE_ppe-gmm");
    let gen = Command::new(bin)
        .args([
            "gen",
            "--k",
            "2",
            "--d",
            "2",
            "--n",
            "137000",
            "--seed",
            "10",
            "--out-data",
        ])
        .arg(&data)
        .arg("--out-truth")
        .arg(&truth)
        .output()?;
    if !gen.status.success() {
        return Ok(check(
            false,
            format!("gen failed: {}", String::from_utf8_lossy(&gen.stderr)),
        ));
    }
    let fit = |threads: &str| -> std::io::Result<(Option<i32>, Vec<u8>)> {
        let o = Command::new(bin)
            .args(["--threads", threads, "fit", "--data"])
            .arg(&data)
            .args([
                "--k",
                "2",
                "--epsilon",
                "1",
                "--delta",
                "1e-6",
                "--alpha",
                "0.5",
                "--beta",
                "0.1",
                "--seed",
                "11",
                "--radius",
                "2",
            ])
            .output()?;
        Ok((o.status.code(), o.stdout))
    };
    let runs = [fit("1")?, fit("1")?, fit("4")?, fit("4")?];
    let identical = runs.iter().all(|r| r == &runs[0]);
    let outcome = serde_json::from_slice::<serde_json::Value>(&runs[0].1)
        .map(|v| v["outcome"].to_string())
        .unwrap_or_else(|_| "unparseable".into());
    Ok(check(
        identical && !runs[0].1.is_empty(),
        format!("4 fits with threads 1, 1, 4, 4: byte-identical records {identical}, outcome {outcome}"),
    ))
}

type RealMetric = fn(&f64, &f64) -> Result<f64>;

type Criterion = (&'static str, fn() -> Result<Outcome>, f64);

fn main() {
    let criteria: [Criterion; 10] = [
        ("matching oracle equivalence", matching_oracle, 60.0),
        ("formula suite", formula_suite, 1.0),
        ("truncated Laplace sampler", tlap_sampler, 30.0),
        ("masking concentration", masking_concentration, 120.0),
        ("restricted triangle sampling", triangle_sampling, 300.0),
        ("end-to-end utility", end_to_end_utility, 900.0),
        ("scatter rejection", scatter_rejection, 600.0),
        ("sensitivity invariant", sensitivity, 300.0),
        ("indistinguishability audit", indistinguishability, 600.0),
        ("determinism", determinism, f64::INFINITY),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = run();
        let secs = started.elapsed().as_secs_f64();
        let (passed, summary) = match result {
            Ok(o) => (o.passed && secs <= *budget, o.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit = if budget.is_finite() {
            format!(", limit {budget} s")
        } else {
            String::new()
        };
        println!(
            "criterion {:>2} {} {name}: {summary} [{secs:.1} s{limit}]",
            i + 1,
            if passed { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!passed);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Empirical checks of the statistical claims: masker concentration,
//! indistinguishability of masked neighbors, and the restricted triangle
//! inequality of the mixture distance.
//!
//! These are falsification tests. A passing report means no violation was
//! detected at the sampled scale, never that a guarantee holds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{frob_norm, inv_sqrt, psd_sqrt, Matrix, SymMatrix};
use crate::masking::{mask_gmm, MaskConfig};
use crate::metrics::{check_restricted_triangle, dist_mixture, SemimetricParams, TRIANGLE_SLACK};
use crate::model::{Component, Gmm};
use crate::random::{gaussian_matrix, std_normal, RandomStream};
use crate::scalar::Real;

pub const EVIDENCE_LABEL: &str = "empirical lower bound";

/// Minimum expected count per histogram bin.
pub const MIN_BIN_COUNT: f64 = 25.0;

/// Initial number of equal-width histogram bins before merging.
pub const HISTOGRAM_BINS: usize = 40;

/// Standard errors subtracted from each bin's log-ratio.
pub const LOG_RATIO_Z: f64 = 4.0;

/// Proposals per triple before a triangle trial gives up.
const MAX_PROPOSALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub label: String,
    pub trials: usize,
    pub statistic: f64,
    pub bound: f64,
    pub passed: bool,
    pub details: BTreeMap<String, Value>,
}

impl AuditReport {
    fn new(name: &str, trials: usize, statistic: f64, bound: f64, details: BTreeMap<String, Value>) -> Self {
        Self {
            name: name.to_string(),
            label: EVIDENCE_LABEL.to_string(),
            trials,
            statistic,
            bound,
            passed: statistic <= bound,
            details,
        }
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// `beta + 3 sqrt(beta (1 - beta) / trials)`.
pub fn exceedance_bound(beta: f64, trials: usize) -> f64 {
    beta + 3.0 * (beta * (1.0 - beta) / trials as f64).sqrt()
}

/// Fraction of masked outputs farther than `alpha` from `reference`.
/// Degenerate-weight failures count as exceedances.
pub fn audit_concentration<T, M>(
    masker: M,
    reference: &Gmm<T>,
    alpha: f64,
    beta: f64,
    trials: usize,
    stream: &RandomStream,
) -> Result<AuditReport>
where
    T: Real,
    M: Fn(&Gmm<T>, &mut RandomStream) -> Result<Gmm<T>> + Sync,
{
    if trials < 100 {
        return Err(Error::param(format!(
            "concentration audit needs at least 100 trials, got {trials}"
        )));
    }
    if !(alpha > 0.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::param(format!(
            "need alpha > 0 and beta in (0, 1), got {alpha}, {beta}"
        )));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| match masker(reference, &mut stream.substream(i as u64)) {
            Ok(g) => dist_mixture(&g, reference).map(|v| Some(v.as_f64())),
            Err(Error::DegenerateWeights { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let degenerate = outcomes.iter().filter(|o| o.is_none()).count();
    let mut dists: Vec<f64> = outcomes.into_iter().flatten().collect();
    let exceed = degenerate + dists.iter().filter(|&&v| v > alpha).count();
    dists.sort_by(f64::total_cmp);
    let quantile = |p: f64| {
        dists
            .get(((dists.len() as f64 * p) as usize).min(dists.len().saturating_sub(1)))
            .copied()
    };

    let mut details = BTreeMap::new();
    details.insert("alpha".into(), json!(alpha));
    details.insert("beta".into(), json!(beta));
    details.insert("exceedances".into(), json!(exceed));
    details.insert("degenerate".into(), json!(degenerate));
    details.insert("median_distance".into(), json!(quantile(0.5)));
    details.insert("q90_distance".into(), json!(quantile(0.9)));
    Ok(AuditReport::new(
        "masking_concentration",
        trials,
        exceed as f64 / trials as f64,
        exceedance_bound(beta, trials),
        details,
    ))
}

/// Scalar summaries of a mixture, all in the geometry of `reference_cov`:
/// every slot's weight, whitened mean coordinates, and the Frobenius norm of
/// the whitened covariance minus identity.
struct Projector {
    whiten: Matrix<f64>,
}

impl Projector {
    fn new<T: Real>(f: &Gmm<T>, f_prime: &Gmm<T>) -> Result<Self> {
        let d = f.dim();
        let mut avg = Matrix::zeros(d, d);
        let n = (f.k() + f_prime.k()) as f64;
        for c in f.components().iter().chain(f_prime.components()) {
            for a in 0..d {
                for b in 0..d {
                    avg[(a, b)] += c.cov[(a, b)].as_f64() / n;
                }
            }
        }
        let whiten = inv_sqrt(&SymMatrix::from_symmetric_part(&avg)?)?.into_matrix();
        Ok(Self { whiten })
    }

    fn count(k: usize, d: usize) -> usize {
        k * (d + 2)
    }

    fn project<T: Real>(&self, g: &Gmm<T>) -> Vec<f64> {
        let d = g.dim();
        let mut out = Vec::with_capacity(Self::count(g.k(), d));
        for c in g.components() {
            out.push(c.weight.as_f64());
            let mean: Vec<f64> = c.mean.iter().map(|v| v.as_f64()).collect();
            out.extend(self.whiten.mul_vec(&mean));
            let cov = c.cov.cast::<f64>().into_matrix();
            let rel = &(&self.whiten * &cov) * &self.whiten;
            out.push(frob_norm(&(&rel - &Matrix::identity(d))));
        }
        out
    }
}

/// Per-bin log-ratio estimate for one projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRatio {
    /// Largest raw `|ln((p + delta)/(q + delta))|`.
    pub raw: f64,
    /// Largest lower confidence bound on the same quantity.
    pub lower: f64,
    pub bins: usize,
}

/// Histogram log-ratio between two samples on shared bins.
///
/// Starts from [`HISTOGRAM_BINS`] equal-width bins over the pooled range,
/// merges adjacent bins until each holds at least [`MIN_BIN_COUNT`] expected
/// points, and for every bin subtracts [`LOG_RATIO_Z`] standard errors of the
/// log count ratio. Swapping the samples leaves the result unchanged.
pub fn histogram_log_ratio(p: &[f64], q: &[f64], delta: f64) -> LogRatio {
    let lo = p.iter().chain(q).cloned().fold(f64::INFINITY, f64::min);
    let hi = p.iter().chain(q).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return LogRatio {
            raw: 0.0,
            lower: 0.0,
            bins: 1,
        };
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let bin = |x: f64| (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
    let mut cp = vec![0usize; HISTOGRAM_BINS];
    let mut cq = vec![0usize; HISTOGRAM_BINS];
    p.iter().for_each(|&x| cp[bin(x)] += 1);
    q.iter().for_each(|&x| cq[bin(x)] += 1);

    let mut merged: Vec<(usize, usize)> = Vec::new();
    let mut acc = (0, 0);
    for (a, b) in cp.into_iter().zip(cq) {
        acc = (acc.0 + a, acc.1 + b);
        if (acc.0 + acc.1) as f64 / 2.0 >= MIN_BIN_COUNT {
            merged.push(acc);
            acc = (0, 0);
        }
    }
    if acc.0 + acc.1 > 0 {
        match merged.last_mut() {
            Some(last) => *last = (last.0 + acc.0, last.1 + acc.1),
            None => merged.push(acc),
        }
    }

    let (np, nq) = (p.len() as f64, q.len() as f64);
    let mut raw: f64 = 0.0;
    let mut lower: f64 = 0.0;
    for &(a, b) in &merged {
        let ratio = ((a as f64 / np + delta).ln() - (b as f64 / nq + delta).ln()).abs();
        let se = (1.0 / (a as f64 + 0.5) + 1.0 / (b as f64 + 0.5)).sqrt();
        raw = raw.max(ratio);
        lower = lower.max(ratio - LOG_RATIO_Z * se);
    }
    LogRatio {
        raw,
        lower,
        bins: merged.len(),
    }
}

/// Largest detectable log-ratio between masked outputs of two mixtures at
/// distance at most `gamma`, compared against `epsilon_target`.
#[allow(clippy::too_many_arguments)]
pub fn audit_indistinguishability<T, M>(
    masker: M,
    f: &Gmm<T>,
    f_prime: &Gmm<T>,
    gamma: f64,
    epsilon_target: f64,
    delta_target: f64,
    trials: usize,
    stream: &RandomStream,
) -> Result<AuditReport>
where
    T: Real,
    M: Fn(&Gmm<T>, &mut RandomStream) -> Result<Gmm<T>> + Sync,
{
    if trials < 10_000 {
        return Err(Error::param(format!(
            "indistinguishability audit needs at least 10000 trials, got {trials}"
        )));
    }
    if f.k() != f_prime.k() || f.dim() != f_prime.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.k(),
            found: f_prime.k(),
        });
    }
    let distance = dist_mixture(f, f_prime)?.as_f64();
    if distance > gamma * (1.0 + 1e-12) {
        return Err(Error::PreconditionDistance { distance, gamma });
    }
    let projector = Projector::new(f, f_prime)?;
    let n_proj = Projector::count(f.k(), f.dim());

    // both inputs see the same per-trial randomness
    let sample = |g: &Gmm<T>| -> Result<(Vec<Vec<f64>>, usize)> {
        let rows = (0..trials)
            .into_par_iter()
            .map(|i| match masker(g, &mut stream.substream(i as u64)) {
                Ok(out) => Ok(Some(projector.project(&out))),
                Err(Error::DegenerateWeights { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        let failed = rows.iter().filter(|r| r.is_none()).count();
        let mut cols = vec![Vec::with_capacity(trials); n_proj];
        for row in rows.into_iter().flatten() {
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        Ok((cols, failed))
    };
    let (p, failed_p) = sample(f)?;
    let (q, failed_q) = sample(f_prime)?;

    let mut per_projection = Vec::with_capacity(n_proj);
    let mut raw: f64 = 0.0;
    let mut statistic: f64 = 0.0;
    let mut worst = 0;
    for (i, (a, b)) in p.iter().zip(&q).enumerate() {
        let lr = histogram_log_ratio(a, b, delta_target);
        raw = raw.max(lr.raw);
        if lr.lower > statistic {
            statistic = lr.lower;
            worst = i;
        }
        per_projection.push(lr.lower);
    }

    let mut details = BTreeMap::new();
    details.insert("gamma".into(), json!(gamma));
    details.insert("distance".into(), json!(distance));
    details.insert("delta_target".into(), json!(delta_target));
    details.insert("raw_log_ratio".into(), json!(raw));
    details.insert("log_ratio_ceiling".into(), json!((1.0 / delta_target).ln_1p()));
    details.insert("projections".into(), json!(n_proj));
    details.insert("worst_projection".into(), json!(worst));
    details.insert("per_projection".into(), json!(per_projection));
    details.insert("degenerate".into(), json!([failed_p, failed_q]));
    Ok(AuditReport::new(
        "masking_indistinguishability",
        trials,
        statistic,
        epsilon_target,
        details,
    ))
}

/// Copy of `f` whose first mean moves by `gamma * Sigma^{1/2} e_1`, a shift
/// of Mahalanobis length `gamma`, so the pair sits at distance `gamma`.
pub fn neighbor_at_distance<T: Real>(f: &Gmm<T>, gamma: f64) -> Result<Gmm<T>> {
    let mut step = gamma;
    loop {
        let mut comps = f.components().to_vec();
        let root = psd_sqrt(&comps[0].cov)?;
        for (i, m) in comps[0].mean.iter_mut().enumerate() {
            *m = *m + T::of(step) * root[(i, 0)];
        }
        let g = Gmm::new(comps)?;
        // rounding can leave the pair a hair beyond gamma
        if dist_mixture(f, &g)?.as_f64() <= gamma || step <= 0.0 {
            return Ok(g);
        }
        step *= 1.0 - 1e-9;
    }
}

/// Proposes triples of mixtures around a random base: the base is drawn
/// once per triple and each member is an independent masked copy at a shared
/// random noise scale, so pairwise distances spread over `[0, ~2 scale]`.
pub fn default_triple_sampler<T: Real>(
    k: usize,
    d: usize,
    max_scale: f64,
) -> impl Fn(&mut RandomStream) -> Result<[Gmm<T>; 3]> + Sync {
    move |rng: &mut RandomStream| {
        let base = random_gmm::<T>(k, d, rng)?;
        let s = max_scale * rng.uniform();
        let cfg = MaskConfig::new(0.3 * s, s, 0.5 * s)?;
        Ok([
            mask_gmm(&base, &cfg, &mut rng.substream(1))?,
            mask_gmm(&base, &cfg, &mut rng.substream(2))?,
            mask_gmm(&base, &cfg, &mut rng.substream(3))?,
        ])
    }
}

/// Random mixture with weights bounded away from zero, spread-out means and
/// moderately conditioned covariances.
pub fn random_gmm<T: Real>(k: usize, d: usize, rng: &mut RandomStream) -> Result<Gmm<T>> {
    let components = (0..k)
        .map(|_| {
            let w = T::of((0.2 + rng.uniform()) / 1.2);
            let mean = std_normal::<f64>(rng, d).into_iter().map(|v| T::of(3.0 * v)).collect();
            let a: Matrix<f64> = gaussian_matrix(rng, d);
            let mut cov = &a * &a.transpose();
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] = cov[(i, j)] / d as f64 + if i == j { 0.5 } else { 0.0 };
                }
            }
            Component::new(w, mean, SymMatrix::from_symmetric_part(&cov)?.cast())
        })
        .collect::<Result<Vec<_>>>()?;
    Gmm::normalized(components)
}

/// Samples restricted triples and records the worst ratio
/// `d13 / (d12 + d23)` over all three choices of middle point.
pub fn audit_triangle<T, S>(
    sampler: S,
    params: &SemimetricParams,
    trials: usize,
    stream: &RandomStream,
) -> Result<AuditReport>
where
    T: Real,
    S: Fn(&mut RandomStream) -> Result<[Gmm<T>; 3]> + Sync,
{
    if trials == 0 {
        return Err(Error::param("triangle audit needs at least one trial"));
    }
    struct Trial {
        attempts: usize,
        dists: Option<[f64; 3]>,
    }
    let results = (0..trials)
        .into_par_iter()
        .map(|i| {
            let rng = stream.substream(i as u64);
            for attempt in 1..=MAX_PROPOSALS {
                let [a, b, c] = sampler(&mut rng.substream(attempt as u64))?;
                let ds = [dist_mixture(&a, &b)?, dist_mixture(&b, &c)?, dist_mixture(&a, &c)?].map(|v| v.as_f64());
                if ds.iter().all(|&v| v <= params.r) {
                    return Ok(Trial {
                        attempts: attempt,
                        dists: Some(ds),
                    });
                }
            }
            Ok(Trial {
                attempts: MAX_PROPOSALS,
                dists: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let attempted: usize = results.iter().map(|r| r.attempts).sum();
    let accepted = results.iter().filter(|r| r.dists.is_some()).count();
    if (accepted as f64) < 1e-3 * attempted as f64 {
        return Err(Error::SamplerStarved { accepted, attempted });
    }

    let mut statistic: f64 = 0.0;
    let mut violations = 0usize;
    let mut skipped = 0usize;
    for [d12, d23, d13] in results.iter().filter_map(|r| r.dists) {
        for (x, y, far) in [(d12, d23, d13), (d12, d13, d23), (d23, d13, d12)] {
            if !check_restricted_triangle(x, y, far, params) {
                violations += 1;
            }
            if x + y > 0.0 {
                statistic = statistic.max(far / (x + y));
            } else if far > TRIANGLE_SLACK {
                statistic = f64::INFINITY;
            } else {
                skipped += 1;
            }
        }
    }
    let mut details = BTreeMap::new();
    details.insert("r".into(), json!(params.r));
    details.insert("z".into(), json!(params.z));
    details.insert("accepted".into(), json!(accepted));
    details.insert("attempted".into(), json!(attempted));
    details.insert("violations".into(), json!(violations));
    details.insert("skipped".into(), json!(skipped));
    let mut report = AuditReport::new("restricted_triangle", trials, statistic, params.z, details);
    report.passed = violations == 0;
    Ok(report)
}

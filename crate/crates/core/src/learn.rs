//! Non-private GMM machinery: synthetic mixtures, sampling, and an EM
//! learner used as the per-chunk estimator.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, orthonormalize, Matrix, SymMatrix};
use crate::model::{Component, Gmm};
use crate::random::{gaussian_matrix, gaussian_with_factor, RandomStream};
use crate::scalar::Real;

/// EM learner settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerOptions {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub tol: f64,
    /// Ridge added to every covariance, relative to the average per-coordinate
    /// data variance.
    pub reg: f64,
}

impl LearnerOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iters: 200,
            restarts: 3,
            tol: 1e-8,
            reg: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::param("k, max_iters and restarts must be positive"));
        }
        if !(self.tol > 0.0 && self.reg > 0.0) {
            return Err(Error::param("tol and reg must be positive"));
        }
        Ok(())
    }

    /// Minimum number of points accepted by [`em_fit`]: `10 k d`.
    pub fn min_points(&self, d: usize) -> usize {
        10 * self.k * d
    }
}

/// `n` i.i.d. draws together with the generating component of each.
pub fn sample_gmm_labeled<T: Real>(
    g: &Gmm<T>,
    n: usize,
    stream: &mut RandomStream,
) -> Result<(Dataset<T>, Vec<usize>)> {
    let factors = g
        .components()
        .iter()
        .map(|c| cholesky(&c.cov))
        .collect::<Result<Vec<_>>>()?;
    let cumulative: Vec<f64> = g
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w.as_f64();
            Some(*acc)
        })
        .collect();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u = stream.uniform() * cumulative[cumulative.len() - 1];
        let idx = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
        let z = gaussian_with_factor(stream, &factors[idx]);
        let mean = &g.components()[idx].mean;
        points.push(mean.iter().zip(z).map(|(&m, x)| m + x).collect());
        labels.push(idx);
    }
    Ok((Dataset::new(g.dim(), points)?, labels))
}

/// `n` i.i.d. draws from the mixture.
pub fn sample_gmm<T: Real>(g: &Gmm<T>, n: usize, stream: &mut RandomStream) -> Result<Dataset<T>> {
    sample_gmm_labeled(g, n, stream).map(|(ds, _)| ds)
}

/// Equal-weight mixture with identity covariances whose means sit on a
/// randomly rotated regular simplex with edge `separation`. When `d < k - 1`
/// the means are placed on a randomly oriented line instead.
pub fn make_separated_gmm<T: Real>(k: usize, d: usize, separation: f64, stream: &mut RandomStream) -> Result<Gmm<T>> {
    if k == 0 || d == 0 || !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::param(format!(
            "need k, d >= 1 and separation > 0; got ({k}, {d}, {separation})"
        )));
    }
    let rotation: Matrix<f64> = orthonormalize(&gaussian_matrix(stream, d))?;
    let raw: Vec<Vec<f64>> = if d + 1 >= k {
        // e_i - centroid lies in the (k-1)-dim subspace orthogonal to 1;
        // Helmert basis vectors give coordinates there
        let basis: Vec<Vec<f64>> = (1..k)
            .map(|j| {
                let norm = ((j * (j + 1)) as f64).sqrt();
                (0..k)
                    .map(|i| match i.cmp(&j) {
                        std::cmp::Ordering::Less => 1.0 / norm,
                        std::cmp::Ordering::Equal => -(j as f64) / norm,
                        std::cmp::Ordering::Greater => 0.0,
                    })
                    .collect()
            })
            .collect();
        let scale = separation / std::f64::consts::SQRT_2;
        (0..k)
            .map(|i| {
                let mut v = vec![0.0; d];
                for (axis, b) in basis.iter().enumerate() {
                    v[axis] = scale * b[i];
                }
                v
            })
            .collect()
    } else {
        let mid = (k as f64 - 1.0) / 2.0;
        (0..k)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[0] = (i as f64 - mid) * separation;
                v
            })
            .collect()
    };
    let w = T::of(1.0 / k as f64);
    let components = raw
        .into_iter()
        .map(|v| {
            let mean = rotation.mul_vec(&v).into_iter().map(T::of).collect();
            Component::new(w, mean, SymMatrix::identity(d))
        })
        .collect::<Result<Vec<_>>>()?;
    Gmm::normalized(components)
}

/// EM fit with per-iteration log-likelihood history of the winning restart.
#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub gmm: Gmm<T>,
    pub log_likelihood: f64,
    pub history: Vec<f64>,
    pub restart: usize,
}

/// Fits a `k`-component GMM by EM with k-means++ seeding, keeping the best
/// restart by log-likelihood (ties go to the lowest restart index).
pub fn em_fit<T: Real>(data: &[Vec<T>], opts: &LearnerOptions, stream: &mut RandomStream) -> Result<Gmm<T>> {
    em_fit_traced(data, opts, stream).map(|f| f.gmm)
}

pub fn em_fit_traced<T: Real>(data: &[Vec<T>], opts: &LearnerOptions, stream: &mut RandomStream) -> Result<EmFit<T>> {
    opts.validate()?;
    let d = data.first().map_or(0, Vec::len);
    if d == 0 || data.len() < opts.min_points(d) {
        return Err(Error::InsufficientData {
            have: data.len(),
            need: opts.min_points(d.max(1)),
        });
    }
    let x: Vec<Vec<f64>> = data.iter().map(|p| p.iter().map(|v| v.as_f64()).collect()).collect();
    let ridge = opts.reg * average_variance(&x).max(f64::MIN_POSITIVE);

    let mut best: Option<EmFit<f64>> = None;
    for restart in 0..opts.restarts {
        let mut s = stream.substream(restart as u64);
        let fit = em_single(&x, opts, ridge, &mut s, restart)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    let best = best.expect("at least one restart");
    Ok(EmFit {
        gmm: best.gmm.cast(),
        log_likelihood: best.log_likelihood,
        history: best.history,
        restart: best.restart,
    })
}

fn average_variance(x: &[Vec<f64>]) -> f64 {
    let n = x.len() as f64;
    let d = x[0].len();
    (0..d)
        .map(|j| {
            let m = x.iter().map(|p| p[j]).sum::<f64>() / n;
            x.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / d as f64
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<SymMatrix<f64>>,
}

fn kmeans_pp(x: &[Vec<f64>], k: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let mut centers = vec![x[stream.index(x.len())].clone()];
    let mut dist: Vec<f64> = x.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = stream.uniform() * total;
            let mut pick = x.len() - 1;
            for (i, &dv) in dist.iter().enumerate() {
                if u < dv {
                    pick = i;
                    break;
                }
                u -= dv;
            }
            pick
        } else {
            stream.index(x.len())
        };
        centers.push(x[next].clone());
        for (i, p) in x.iter().enumerate() {
            dist[i] = dist[i].min(sq(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn log_densities(x: &[Vec<f64>], p: &Params) -> Result<Vec<Vec<f64>>> {
    let d = x[0].len() as f64;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut out = vec![vec![0.0; p.weights.len()]; x.len()];
    for (j, (mean, cov)) in p.means.iter().zip(&p.covs).enumerate() {
        let l = cholesky(cov)?;
        let log_det: f64 = (0..l.rows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let log_w = p.weights[j].ln();
        for (i, pt) in x.iter().enumerate() {
            let diff: Vec<f64> = pt.iter().zip(mean).map(|(a, b)| a - b).collect();
            let y = forward_substitute(&l, &diff);
            let maha: f64 = y.iter().map(|v| v * v).sum();
            out[i][j] = log_w - 0.5 * (d * ln_2pi + log_det + maha);
        }
    }
    Ok(out)
}

fn em_single(
    x: &[Vec<f64>],
    opts: &LearnerOptions,
    ridge: f64,
    stream: &mut RandomStream,
    restart: usize,
) -> Result<EmFit<f64>> {
    let n = x.len();
    let d = x[0].len();
    let k = opts.k;
    let global = moments(x, &vec![1.0; n], ridge)?;
    let mut params = Params {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(x, k, stream),
        covs: vec![global.1.clone(); k],
    };
    let mut history = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];

    for _ in 0..opts.max_iters {
        // E-step
        let logp = log_densities(x, &params)?;
        let mut ll = 0.0;
        for (i, row) in logp.iter().enumerate() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + s.ln();
            ll += lse;
            for j in 0..k {
                resp[i][j] = (row[j] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::LearnFailed(format!("non-finite log-likelihood {ll}")));
        }
        let prev = history.last().copied();
        history.push(ll);
        if let Some(prev) = prev {
            if (ll - prev).abs() <= opts.tol * ll.abs().max(1.0) {
                break;
            }
        }

        // M-step
        for j in 0..k {
            let r: Vec<f64> = resp.iter().map(|row| row[j]).collect();
            let nk: f64 = r.iter().sum();
            if nk < 1e-10 * n as f64 {
                // revive an empty component at a random point
                params.means[j] = x[stream.index(n)].clone();
                params.covs[j] = global.1.clone();
                params.weights[j] = 1.0 / n as f64;
                continue;
            }
            let (mean, cov) = moments(x, &r, ridge)?;
            params.weights[j] = nk / n as f64;
            params.means[j] = mean;
            params.covs[j] = cov;
        }
        let total: f64 = params.weights.iter().sum();
        params.weights.iter_mut().for_each(|w| *w /= total);
    }

    let last = *history.last().expect("at least one iteration");
    let components = (0..k)
        .map(|j| {
            Component::new(
                params.weights[j].min(1.0),
                params.means[j].clone(),
                params.covs[j].clone(),
            )
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::LearnFailed(e.to_string()))?;
    let _ = d;
    Ok(EmFit {
        gmm: Gmm::normalized(components)?,
        log_likelihood: last,
        history,
        restart,
    })
}

/// Weighted mean and covariance plus `ridge * I`.
fn moments(x: &[Vec<f64>], r: &[f64], ridge: f64) -> Result<(Vec<f64>, SymMatrix<f64>)> {
    let d = x[0].len();
    let nk: f64 = r.iter().sum();
    let mut mean = vec![0.0; d];
    for (p, &w) in x.iter().zip(r) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += w * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nk);
    let mut cov = Matrix::zeros(d, d);
    for (p, &w) in x.iter().zip(r) {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / nk + if a == b { ridge } else { 0.0 };
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((mean, SymMatrix::new(cov)?))
}

//! Seeded, splittable random streams and the noise distributions used by
//! the estimator: standard normals, Gaussian matrices, covariance-shaped
//! Gaussians and truncated Laplace noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, SymMatrix};
use crate::scalar::Real;

/// A deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha20, whose 64-bit stream selector gives O(1) splitting:
/// child streams are addressed by a keyed mix of the parent id and a child
/// index, so they do not depend on how many values the parent has drawn.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// The root stream for a master seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream `index`. Depends only on this stream's identity.
    pub fn substream(&self, index: u64) -> RandomStream {
        RandomStream::new(self.seed, mix(self.stream_id, index))
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_as<T: Real>(&mut self) -> T {
        T::of(self.normal())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn mix(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// `n` i.i.d. standard normal draws.
pub fn std_normal<T: Real>(stream: &mut RandomStream, n: usize) -> Vec<T> {
    (0..n).map(|_| stream.normal_as()).collect()
}

/// `d x d` matrix with i.i.d. standard normal entries, filled row-major.
pub fn gaussian_matrix<T: Real>(stream: &mut RandomStream, d: usize) -> Matrix<T> {
    Matrix::from_vec(d, d, std_normal(stream, d * d)).expect("d*d entries")
}

/// A draw from `N(0, sigma)`, computed as `L z` with `L = cholesky(sigma)`.
pub fn gaussian_with_cov<T: Real>(stream: &mut RandomStream, sigma: &SymMatrix<T>) -> Result<Vec<T>> {
    let l = cholesky(sigma)?;
    Ok(gaussian_with_factor(stream, &l))
}

/// A draw from `N(0, L L^T)` given a precomputed lower-triangular factor.
pub fn gaussian_with_factor<T: Real>(stream: &mut RandomStream, l: &Matrix<T>) -> Vec<T> {
    let z: Vec<T> = std_normal(stream, l.rows());
    (0..l.rows())
        .map(|i| (0..=i).fold(T::zero(), |acc, j| acc + l[(i, j)] * z[j]))
        .collect()
}

/// Parameters of the truncated Laplace distribution `TLap(sensitivity, epsilon, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TLapParams {
    pub sensitivity: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl TLapParams {
    pub fn new(sensitivity: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(sensitivity) && ok(epsilon) && ok(delta) && delta < 1.0) {
            return Err(Error::param(format!(
                "truncated Laplace needs positive sensitivity and epsilon and delta in (0, 1), \
                 got ({sensitivity}, {epsilon}, {delta})"
            )));
        }
        Ok(Self {
            sensitivity,
            epsilon,
            delta,
        })
    }

    /// Laplace scale `sensitivity / epsilon`.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }
}

/// Truncation half-width `A = (sensitivity / epsilon) * ln(1 + (e^epsilon - 1) / (2 delta))`.
///
/// This is the single place the truncation constant is defined; the PPE
/// failure threshold is `0.8 + A` with sensitivity `2/t`.
pub fn tlap_bound(p: &TLapParams) -> f64 {
    p.scale() * (p.epsilon.exp_m1() / (2.0 * p.delta)).ln_1p()
}

/// One draw from Laplace(`scale`) conditioned on `[-A, A]`, by inverting the
/// CDF of the magnitude (a truncated exponential) and attaching a fair sign.
pub fn tlap_sample(stream: &mut RandomStream, p: &TLapParams) -> f64 {
    let a = tlap_bound(p);
    let lambda = p.scale();
    // probability mass of |X| <= A under the untruncated Laplace
    let mass = -(-a / lambda).exp_m1();
    let u = stream.uniform();
    let magnitude = (-lambda * (-u * mass).ln_1p()).min(a);
    if stream.uniform() < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

/// CDF of the truncated Laplace distribution.
pub fn tlap_cdf(p: &TLapParams, x: f64) -> f64 {
    let a = tlap_bound(p);
    if x <= -a {
        return 0.0;
    }
    if x >= a {
        return 1.0;
    }
    let lambda = p.scale();
    let mass = -(-a / lambda).exp_m1();
    let lower = |y: f64| 0.5 * ((y / lambda).exp() - (-a / lambda).exp()) / mass;
    if x <= 0.0 {
        lower(x)
    } else {
        1.0 - lower(-x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn std_normal_moments_and_determinism() {
        let mut s = RandomStream::new(7, 0);
        assert!(std_normal::<f64>(&mut s, 0).is_empty());
        let xs: Vec<f64> = std_normal(&mut RandomStream::new(7, 3), 100_000);
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0).abs() < 0.03, "var {v}");
        let again: Vec<f64> = std_normal(&mut RandomStream::new(7, 3), 100_000);
        assert_eq!(xs, again);
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let root = RandomStream::from_seed(11);
        let a: Vec<f64> = std_normal(&mut root.substream(0), 100_000);
        let b: Vec<f64> = std_normal(&mut root.substream(1), 100_000);
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 99_999.0;
        let r = cov / (va * vb).sqrt();
        assert!(r.abs() < 0.01, "pearson r = {r}");
    }

    #[test]
    fn substream_ignores_parent_position() {
        let mut root = RandomStream::from_seed(5);
        let before: Vec<f64> = std_normal(&mut root.substream(4), 8);
        let _ = root.normal();
        let after: Vec<f64> = std_normal(&mut root.substream(4), 8);
        assert_eq!(before, after);
    }

    #[test]
    fn gaussian_matrix_shapes_and_norm() {
        let g: Matrix<f64> = gaussian_matrix(&mut RandomStream::new(1, 0), 1);
        assert_eq!((g.rows(), g.cols()), (1, 1));
        let g: Matrix<f64> = gaussian_matrix(&mut RandomStream::new(1, 1), 100);
        let f = crate::linalg::frob_norm(&g);
        assert!((96.0..=104.0).contains(&f), "frobenius {f}");
        let h: Matrix<f64> = gaussian_matrix(&mut RandomStream::new(1, 1), 100);
        assert_eq!(g, h);
    }

    #[test]
    fn gaussian_with_cov_moments() {
        let sigma = SymMatrix::diag(&[4.0, 1.0]);
        let mut s = RandomStream::new(3, 0);
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| gaussian_with_cov(&mut s, &sigma).unwrap())
            .collect();
        let x: Vec<f64> = draws.iter().map(|v| v[0]).collect();
        let y: Vec<f64> = draws.iter().map(|v| v[1]).collect();
        assert!((mean_var(&x).1 - 4.0).abs() < 0.15);
        assert!((mean_var(&y).1 - 1.0).abs() < 0.04);

        let sigma = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let draws: Vec<Vec<f64>> = (0..100_000)
            .map(|_| gaussian_with_cov(&mut s, &sigma).unwrap())
            .collect();
        let n = draws.len() as f64;
        for i in 0..2 {
            for j in 0..2 {
                let c = draws.iter().map(|v| v[i] * v[j]).sum::<f64>() / n;
                assert!((c - sigma[(i, j)]).abs() < 0.05, "cov[{i}][{j}] = {c}");
            }
        }
    }

    #[test]
    fn scaled_identity_cov_scales_variance() {
        let c = 2.5;
        let sigma = SymMatrix::<f64>::identity(3).scale(c);
        let mut s = RandomStream::new(9, 0);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| gaussian_with_cov(&mut s, &sigma).unwrap()[1])
            .collect();
        assert!((mean_var(&xs).1 - c).abs() < 0.1);
    }

    #[test]
    fn tlap_bound_examples() {
        // ln(1 + (e - 1) / 0.1), evaluated at 30 digits
        let p = TLapParams::new(1.0, 1.0, 0.05).unwrap();
        assert!((tlap_bound(&p) - 2.900_477_097_889_385_6).abs() < 1e-12);
        let p = TLapParams::new(2.0 / 274.0, 1.0, 1e-6).unwrap();
        assert!((tlap_bound(&p) - 0.099_734_959_094_671_41).abs() < 1e-12);
        // ln(1 + (e - 1)) = 1
        let p = TLapParams::new(1.0, 1.0, 0.5).unwrap();
        assert!((tlap_bound(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tlap_params_validation() {
        assert!(TLapParams::new(0.0, 1.0, 0.1).is_err());
        assert!(TLapParams::new(1.0, -1.0, 0.1).is_err());
        assert!(TLapParams::new(1.0, 1.0, 1.0).is_err());
        assert!(TLapParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn tlap_samples_stay_in_support_and_are_centered() {
        let p = TLapParams::new(1.0, 1.0, 0.05).unwrap();
        let a = tlap_bound(&p);
        let mut s = RandomStream::new(21, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| tlap_sample(&mut s, &p)).collect();
        assert!(xs.iter().all(|x| x.abs() <= a));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.02, "mean {m}");
    }

    #[test]
    fn tlap_cdf_matches_integrated_density() {
        // Simpson integration of the renormalized two-sided exponential density
        let p = TLapParams::new(1.0, 1.0, 0.05).unwrap();
        let a = tlap_bound(&p);
        let lambda = p.scale();
        let raw = |x: f64| (-x.abs() / lambda).exp();
        let simpson = |lo: f64, hi: f64| {
            let n = 2000;
            let h = (hi - lo) / n as f64;
            let mut acc = raw(lo) + raw(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * raw(lo + i as f64 * h);
            }
            acc * h / 3.0
        };
        let total = simpson(-a, 0.0) + simpson(0.0, a);
        for &x in &[-2.5, -1.0, -0.3, 0.0, 0.4, 1.7, 2.8] {
            let num = if x <= 0.0 {
                simpson(-a, x)
            } else {
                simpson(-a, 0.0) + simpson(0.0, x)
            };
            assert!((num / total - tlap_cdf(&p, x)).abs() < 1e-9, "x = {x}");
        }
        assert_eq!(tlap_cdf(&p, -a - 1.0), 0.0);
        assert_eq!(tlap_cdf(&p, a + 1.0), 1.0);
    }
}

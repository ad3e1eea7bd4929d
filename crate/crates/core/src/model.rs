//! Gaussian mixture parameters and their JSON file format.
//!
//! The file schema is
//! `{"k": int, "d": int, "components": [{"w": float, "mu": [float], "sigma": [[float]]}]}`
//! with `sigma` stored as a full row-major matrix. [`Gmm::to_json`] writes keys
//! in that fixed order and floats with enough digits to round-trip exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix, SymMatrix};
use crate::scalar::Real;

/// Tolerance on `|sum_i w_i - 1|` for a valid mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Masked weight sums at or below this cannot be renormalized.
pub const DEGENERATE_WEIGHT_SUM: f64 = 1e-12;

/// One mixture component `(w, mu, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub cov: SymMatrix<T>,
}

impl<T: Real> Component<T> {
    /// Builds a component, checking `0 <= w <= 1`, matching dimensions and a
    /// positive definite covariance.
    pub fn new(weight: T, mean: Vec<T>, cov: SymMatrix<T>) -> Result<Self> {
        let c = Self { weight, mean, cov };
        c.validate()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= T::zero() && self.weight <= T::one()) {
            return Err(Error::InvalidGmm(format!("weight {} outside [0, 1]", self.weight)));
        }
        self.validate_shape()
    }

    fn validate_shape(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::InvalidGmm("empty mean vector".into()));
        }
        if self.cov.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: self.cov.dim(),
            });
        }
        if !self.weight.is_finite() || self.mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("component"));
        }
        cholesky(&self.cov).map(|_| ())
    }

    pub fn cast<U: Real>(&self) -> Component<U> {
        Component {
            weight: U::of(self.weight.as_f64()),
            mean: self.mean.iter().map(|x| U::of(x.as_f64())).collect(),
            cov: self.cov.cast(),
        }
    }
}

/// A mixture of `k >= 1` components of common dimension whose weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm<T> {
    components: Vec<Component<T>>,
}

impl<T: Real> Gmm<T> {
    pub fn new(components: Vec<Component<T>>) -> Result<Self> {
        Self::check_common(&components)?;
        for c in &components {
            c.validate()?;
        }
        let sum: f64 = components.iter().map(|c| c.weight.as_f64()).sum();
        if (sum - 1.0).abs() > T::tol(WEIGHT_SUM_TOL) {
            return Err(Error::InvalidGmm(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { components })
    }

    /// Divides raw (possibly unnormalized) weights by their sum.
    pub fn normalized(mut components: Vec<Component<T>>) -> Result<Self> {
        Self::check_common(&components)?;
        for c in &components {
            if !(c.weight >= T::zero()) {
                return Err(Error::InvalidGmm(format!("negative weight {}", c.weight)));
            }
            c.validate_shape()?;
        }
        let sum: T = components.iter().map(|c| c.weight).sum();
        if !(sum.as_f64() > DEGENERATE_WEIGHT_SUM) {
            return Err(Error::DegenerateWeights { sum: sum.as_f64() });
        }
        for c in &mut components {
            c.weight = (c.weight / sum).min(T::one());
        }
        Ok(Self { components })
    }

    fn check_common(components: &[Component<T>]) -> Result<()> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidGmm("a mixture needs at least one component".into()))?;
        let d = first.dim();
        for c in components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Component<T>> {
        self.components
    }

    pub fn weights(&self) -> Vec<T> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// The same mixture with components reordered so that output slot `i`
    /// holds input component `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.k());
        Self {
            components: order.iter().map(|&i| self.components[i].clone()).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Gmm<U> {
        Gmm {
            components: self.components.iter().map(Component::cast).collect(),
        }
    }

    /// Plain-data view used for JSON embedding.
    pub fn to_record(&self) -> GmmRecord {
        GmmRecord {
            k: self.k(),
            d: self.dim(),
            components: self
                .components
                .iter()
                .map(|c| ComponentRecord {
                    w: c.weight.as_f64(),
                    mu: c.mean.iter().map(|x| x.as_f64()).collect(),
                    sigma: c
                        .cov
                        .as_matrix()
                        .to_rows()
                        .into_iter()
                        .map(|r| r.into_iter().map(|x| x.as_f64()).collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &GmmRecord) -> Result<Self> {
        if rec.components.len() != rec.k {
            return Err(Error::parse(
                "k",
                format!("k = {} but {} components listed", rec.k, rec.components.len()),
            ));
        }
        let mut components = Vec::with_capacity(rec.k);
        for (i, c) in rec.components.iter().enumerate() {
            let ctx = |field: &str| format!("components[{i}].{field}");
            if c.mu.len() != rec.d {
                return Err(Error::parse(
                    ctx("mu"),
                    format!("expected {} entries, found {}", rec.d, c.mu.len()),
                ));
            }
            if c.sigma.len() != rec.d || c.sigma.iter().any(|r| r.len() != rec.d) {
                return Err(Error::parse(ctx("sigma"), format!("expected a {0}x{0} matrix", rec.d)));
            }
            let rows: Vec<Vec<T>> = c.sigma.iter().map(|r| r.iter().map(|&x| T::of(x)).collect()).collect();
            let cov =
                SymMatrix::new(Matrix::from_rows(&rows)?).map_err(|e| Error::parse(ctx("sigma"), e.to_string()))?;
            components.push(Component {
                weight: T::of(c.w),
                mean: c.mu.iter().map(|&x| T::of(x)).collect(),
                cov,
            });
        }
        Gmm::new(components)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: GmmRecord = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        Self::from_record(&rec)
    }

    /// Canonical JSON text: fixed key order, round-trip float precision.
    pub fn to_json(&self) -> String {
        let num = |x: T| format_round_trip(x);
        let mut out = String::new();
        write!(out, "{{\"k\": {}, \"d\": {}, \"components\": [", self.k(), self.dim()).unwrap();
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write!(out, "{{\"w\": {}, \"mu\": [", num(c.weight)).unwrap();
            let mu: Vec<String> = c.mean.iter().map(|&x| num(x)).collect();
            out.push_str(&mu.join(", "));
            out.push_str("], \"sigma\": [");
            let rows: Vec<String> = c
                .cov
                .as_matrix()
                .to_rows()
                .into_iter()
                .map(|r| {
                    let r: Vec<String> = r.into_iter().map(num).collect();
                    format!("[{}]", r.join(", "))
                })
                .collect();
            out.push_str(&rows.join(", "));
            out.push_str("]}");
        }
        out.push_str("]}\n");
        out
    }
}

/// Scientific notation with `T::ROUND_TRIP_DIGITS` significant digits.
pub fn format_round_trip<T: Real>(x: T) -> String {
    format!("{:.*e}", T::ROUND_TRIP_DIGITS - 1, x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub w: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmRecord {
    pub k: usize,
    pub d: usize,
    pub components: Vec<ComponentRecord>,
}

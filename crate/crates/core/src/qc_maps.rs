//! Explicit quasiconformal maps with analytic derivatives.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{norm, Domain};
use crate::quadrature::QuadratureSpec;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QcMap {
    Identity { n: usize },
    /// `x ↦ A x`, `A` stored row-major.
    Linear { n: usize, entries: Vec<f64> },
    /// `x ↦ |x|^a x`, `a > 0`.
    RadialStretch { n: usize, a: f64 },
    /// `outer ∘ inner`.
    Composition { outer: Box<QcMap>, inner: Box<QcMap> },
}

/// Result of sampling the dilatation over a domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    /// `max |Dφ|^n / |J|` over the samples; the coefficient the bounds use.
    pub analytic: f64,
    /// `max σ_max/σ_min` over the samples.
    pub linear: f64,
    pub declared: Option<f64>,
    pub samples: usize,
}

impl QcMap {
    pub fn identity(n: usize) -> Self {
        QcMap::Identity { n }
    }

    pub fn stretch(n: usize, a: f64) -> Result<Self> {
        let m = QcMap::RadialStretch { n, a };
        m.validate()?;
        Ok(m)
    }

    pub fn linear(matrix: &DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Invalid("linear map needs a square matrix".into()));
        }
        let n = matrix.nrows();
        let entries = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| matrix[(i, j)]).collect();
        let m = QcMap::Linear { n, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::linear(&DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn compose(outer: QcMap, inner: QcMap) -> Result<Self> {
        let m = QcMap::Composition { outer: Box::new(outer), inner: Box::new(inner) };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QcMap::Identity { n } | QcMap::RadialStretch { n, .. } if *n < 2 => {
                Err(Error::Invalid(format!("map dimension must be >= 2, got {n}")))
            }
            QcMap::RadialStretch { a, .. } if !(*a > 0.0 && a.is_finite()) => {
                Err(Error::Invalid(format!("radial stretch needs a > 0, got {a}")))
            }
            QcMap::Linear { n, entries } => {
                if *n < 2 || entries.len() != n * n || entries.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Invalid("linear map needs a finite n x n matrix, n >= 2".into()));
                }
                if !(self.matrix().determinant() > 0.0) {
                    return Err(Error::Invalid("linear map must be orientation preserving (det > 0)".into()));
                }
                Ok(())
            }
            QcMap::Composition { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                if outer.dim() != inner.dim() {
                    return Err(Error::Invalid("composed maps have different dimensions".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            QcMap::Identity { n } | QcMap::Linear { n, .. } | QcMap::RadialStretch { n, .. } => *n,
            QcMap::Composition { inner, .. } => inner.dim(),
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        match self {
            QcMap::Linear { n, entries } => DMatrix::from_row_slice(*n, *n, entries),
            _ => unreachable!("matrix() on a non-linear map"),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Invalid(format!("point of dimension {} for a map of dimension {}", x.len(), self.dim())));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            QcMap::Identity { .. } => x.to_vec(),
            QcMap::Linear { n, entries } => {
                (0..*n).map(|i| (0..*n).map(|j| entries[i * n + j] * x[j]).sum()).collect()
            }
            QcMap::RadialStretch { a, .. } => {
                let r = norm(x);
                if r == 0.0 {
                    return x.to_vec();
                }
                let s = r.powf(*a);
                x.iter().map(|v| s * v).collect()
            }
            QcMap::Composition { outer, inner } => outer.eval_unchecked(&inner.eval_unchecked(x)),
        }
    }

    /// Derivative matrix `Dφ(x)`.
    pub fn derivative(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        match self {
            QcMap::Identity { n } => Ok(DMatrix::identity(*n, *n)),
            QcMap::Linear { .. } => Ok(self.matrix()),
            QcMap::RadialStretch { n, a } => {
                let r = norm(x);
                if r == 0.0 {
                    return Err(Error::Singular { point: x.to_vec() });
                }
                // |x|^a I + a |x|^{a-2} x xᵀ
                let v = DVector::from_column_slice(x);
                let mut d = DMatrix::identity(*n, *n) * r.powf(*a);
                d += (&v * v.transpose()) * (a * r.powf(a - 2.0));
                Ok(d)
            }
            QcMap::Composition { outer, inner } => {
                let y = inner.eval_unchecked(x);
                Ok(outer.derivative(&y)? * inner.derivative(x)?)
            }
        }
    }

    /// Jacobian determinant `J(x, φ)`.
    pub fn jacobian(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        match self {
            QcMap::Identity { .. } => Ok(1.0),
            QcMap::Linear { .. } => Ok(self.matrix().determinant()),
            QcMap::RadialStretch { n, a } => {
                let r = norm(x);
                if r == 0.0 {
                    return Err(Error::Singular { point: x.to_vec() });
                }
                Ok((a + 1.0) * r.powf(*n as f64 * a))
            }
            QcMap::Composition { outer, inner } => {
                let y = inner.eval_unchecked(x);
                Ok(outer.jacobian(&y)? * inner.jacobian(x)?)
            }
        }
    }

    /// Spectral norm `|Dφ(x)|`.
    pub fn operator_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        match self {
            QcMap::Identity { .. } => Ok(1.0),
            QcMap::RadialStretch { a, .. } => {
                let r = norm(x);
                if r == 0.0 {
                    return Err(Error::Singular { point: x.to_vec() });
                }
                Ok((a + 1.0) * r.powf(*a))
            }
            _ => Ok(singular_values(&self.derivative(x)?).0),
        }
    }

    /// `K_p(x) = |Dφ(x)|^p / |J(x, φ)|`.
    pub fn dilatation(&self, x: &[f64], p: f64) -> Result<f64> {
        let j = self.jacobian(x)?.abs();
        if j == 0.0 {
            return Err(Error::Singular { point: x.to_vec() });
        }
        Ok(self.operator_norm(x)?.powf(p) / j)
    }

    /// `σ_max / σ_min` of `Dφ(x)`.
    pub fn linear_dilatation(&self, x: &[f64]) -> Result<f64> {
        let (hi, lo) = singular_values(&self.derivative(x)?);
        if lo == 0.0 {
            return Err(Error::Singular { point: x.to_vec() });
        }
        Ok(hi / lo)
    }

    /// Closed-form coefficient `ess sup |Dφ|^n/|J|` when known. For a
    /// composition the product of the factors' coefficients is an upper bound.
    pub fn declared_k(&self) -> Option<f64> {
        match self {
            QcMap::Identity { .. } => Some(1.0),
            QcMap::Linear { n, .. } => {
                let m = self.matrix();
                let (hi, _) = singular_values(&m);
                Some(hi.powi(*n as i32) / m.determinant())
            }
            QcMap::RadialStretch { n, a } => Some((a + 1.0).powi(*n as i32 - 1)),
            QcMap::Composition { outer, inner } => Some(outer.declared_k()? * inner.declared_k()?),
        }
    }

    /// Inverse map, available for identity, linear maps and radial stretches.
    pub fn inverse(&self) -> Result<QcMap> {
        match self {
            QcMap::Identity { n } => Ok(QcMap::Identity { n: *n }),
            QcMap::Linear { .. } => {
                let inv = self.matrix().try_inverse().ok_or_else(|| Error::Invalid("singular matrix".into()))?;
                QcMap::linear(&inv)
            }
            // |x|^a x = y  ⇔  x = |y|^{−a/(a+1)} y, which is not in the zoo (exponent < 0)
            _ => Err(Error::Unsupported { what: "inverse map", kind: self.kind_name() }),
        }
    }

    /// Evaluate the inverse of a radial stretch or linear map at `y`.
    pub fn inverse_evaluate(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        match self {
            QcMap::RadialStretch { a, .. } => {
                let r = norm(y);
                if r == 0.0 {
                    return Ok(y.to_vec());
                }
                let s = r.powf(-a / (a + 1.0));
                Ok(y.iter().map(|v| v * s).collect())
            }
            _ => self.inverse()?.evaluate(y),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            QcMap::Identity { .. } => "identity",
            QcMap::Linear { .. } => "linear",
            QcMap::RadialStretch { .. } => "stretch",
            QcMap::Composition { .. } => "composition",
        }
    }

    /// Maximum analytic and linear dilatation over the quadrature points of `d`.
    pub fn estimate_k(&self, d: &Domain, spec: &QuadratureSpec) -> Result<KEstimate> {
        if d.dim() != self.dim() {
            return Err(Error::Invalid("map and domain dimensions differ".into()));
        }
        let samples = d.sample(spec)?;
        let n = self.dim() as f64;
        let (analytic, linear) = samples
            .points()
            .par_bridge()
            .map(|x| Ok((self.dilatation(x, n)?, self.linear_dilatation(x)?)))
            .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))?;
        Ok(KEstimate { analytic, linear, declared: self.declared_k(), samples: samples.len() })
    }
}

/// Largest and smallest singular values.
fn singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    (sv.max(), sv.min())
}

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::log_sum_exp;

/// Lower Cholesky factor of a symmetric `d × d` row-major matrix, or `None`
/// when the matrix is not numerically positive definite.
pub fn cholesky<T: Real>(a: &[T], d: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s = s - l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance<T> {
    /// Row-major lower Cholesky factor `L` with `Σ = L Lᵀ`.
    Full { chol: Vec<T> },
    /// Per-dimension variances.
    Diagonal { var: Vec<T> },
}

/// One Gaussian `N(μ, Σ)` with its log-determinant cached.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    mean: Vec<T>,
    cov: Covariance<T>,
    log_det: T,
}

impl<T: Real> GaussianComponent<T> {
    pub fn from_cholesky(mean: Vec<T>, chol: Vec<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || chol.len() != d * d {
            return Err(Error::Shape(format!(
                "Cholesky factor of {} entries for dimension {d}",
                chol.len()
            )));
        }
        let mut log_det = T::zero();
        for i in 0..d {
            let v = chol[i * d + i];
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Data(format!(
                    "Cholesky diagonal entry {i} is {v}, must be positive"
                )));
            }
            log_det = log_det + T::lit(2.0) * v.ln();
        }
        Ok(GaussianComponent {
            mean,
            cov: Covariance::Full { chol },
            log_det,
        })
    }

    /// Factorizes a full covariance matrix.
    pub fn from_covariance(mean: Vec<T>, cov: &[T]) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::Shape(format!(
                "covariance of {} entries for dimension {d}",
                cov.len()
            )));
        }
        let chol = cholesky(cov, d)
            .ok_or_else(|| Error::Data("covariance is not positive definite".into()))?;
        Self::from_cholesky(mean, chol)
    }

    pub fn diagonal(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        if mean.is_empty() || var.len() != mean.len() {
            return Err(Error::Shape(format!(
                "{} variances for dimension {}",
                var.len(),
                mean.len()
            )));
        }
        let mut log_det = T::zero();
        for (i, &v) in var.iter().enumerate() {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Data(format!("variance {i} is {v}, must be positive")));
            }
            // 2·ln √v keeps the cached value identical to the factor rule.
            log_det = log_det + T::lit(2.0) * v.sqrt().ln();
        }
        Ok(GaussianComponent {
            mean,
            cov: Covariance::Diagonal { var },
            log_det,
        })
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Self {
        let mut chol = vec![T::zero(); d * d];
        for i in 0..d {
            chol[i * d + i] = T::one();
        }
        Self::from_cholesky(vec![T::zero(); d], chol).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &[T] {
        &self.mean
    }
    pub fn covariance(&self) -> &Covariance<T> {
        &self.cov
    }
    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.cov, Covariance::Diagonal { .. })
    }

    /// Covariance factor entries as stored on disk: the full lower factor
    /// (row-major, `d²` values) or the `d` variances.
    pub fn factor_values(&self) -> &[T] {
        match &self.cov {
            Covariance::Full { chol } => chol,
            Covariance::Diagonal { var } => var,
        }
    }

    /// Dense covariance matrix, row-major.
    pub fn covariance_matrix(&self) -> Vec<T> {
        let d = self.dim();
        let mut out = vec![T::zero(); d * d];
        match &self.cov {
            Covariance::Full { chol } => {
                for i in 0..d {
                    for j in 0..=i {
                        let mut s = T::zero();
                        for k in 0..=j {
                            s = s + chol[i * d + k] * chol[j * d + k];
                        }
                        out[i * d + j] = s;
                        out[j * d + i] = s;
                    }
                }
            }
            Covariance::Diagonal { var } => {
                for i in 0..d {
                    out[i * d + i] = var[i];
                }
            }
        }
        out
    }

    /// `tr(Σ⁻¹)`.
    pub fn inverse_trace(&self) -> T {
        let d = self.dim();
        match &self.cov {
            Covariance::Diagonal { var } => var.iter().fold(T::zero(), |a, &v| a + v.recip()),
            Covariance::Full { chol } => {
                // tr(Σ⁻¹) = ‖L⁻¹‖²_F, column by column of L⁻¹.
                let mut total = T::zero();
                let mut col = vec![T::zero(); d];
                for e in 0..d {
                    for i in 0..d {
                        let mut s = if i == e { T::one() } else { T::zero() };
                        for k in e..i {
                            s = s - chol[i * d + k] * col[k];
                        }
                        col[i] = if i < e { T::zero() } else { s / chol[i * d + i] };
                    }
                    total = col.iter().fold(total, |a, &v| a + v * v);
                }
                total
            }
        }
    }

    /// Squared Mahalanobis distance, using `scratch` (length ≥ d) for the
    /// triangular solve.
    pub fn mahalanobis_sq_with(&self, x: &[T], scratch: &mut [T]) -> T {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        match &self.cov {
            Covariance::Diagonal { var } => {
                let mut s = T::zero();
                for i in 0..d {
                    let diff = x[i] - self.mean[i];
                    s = s + diff * diff / var[i];
                }
                s
            }
            Covariance::Full { chol } => {
                let y = &mut scratch[..d];
                let mut s = T::zero();
                for i in 0..d {
                    let row = &chol[i * d..i * d + i];
                    let mut v = x[i] - self.mean[i];
                    for (k, &l) in row.iter().enumerate() {
                        v = v - l * y[k];
                    }
                    let yi = v / chol[i * d + i];
                    y[i] = yi;
                    s = s + yi * yi;
                }
                s
            }
        }
    }

    pub fn mahalanobis_sq(&self, x: &[T]) -> T {
        let mut scratch = vec![T::zero(); self.dim()];
        self.mahalanobis_sq_with(x, &mut scratch)
    }

    /// `ln N(x; μ, Σ)` given a precomputed squared Mahalanobis distance.
    #[inline]
    pub fn log_density_from_mahalanobis(&self, maha_sq: T) -> T {
        let d = T::from_usize_lossy(self.dim());
        -T::lit(0.5) * (d * T::ln_two_pi() + self.log_det + maha_sq)
    }

    pub fn log_density(&self, x: &[T]) -> T {
        self.log_density_from_mahalanobis(self.mahalanobis_sq(x))
    }
}

/// Position-free mixture `Σ φ_i N(μ_i, Σ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMixture<T> {
    components: Vec<GaussianComponent<T>>,
    weights: Vec<T>,
}

impl<T: Real> GlobalMixture<T> {
    pub fn new(components: Vec<GaussianComponent<T>>, weights: Vec<T>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} components with {} weights",
                components.len(),
                weights.len()
            )));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Shape("components differ in dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Data("mixture weights must be finite and >= 0".into()));
        }
        let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_usize_lossy(4 * weights.len()));
        if (sum - T::one()).abs() > tol {
            return Err(Error::Data(format!("mixture weights sum to {sum}, not 1")));
        }
        Ok(GlobalMixture {
            components,
            weights,
        })
    }

    pub(crate) fn new_unchecked(components: Vec<GaussianComponent<T>>, weights: Vec<T>) -> Self {
        GlobalMixture {
            components,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }
    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }
    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn is_diagonal(&self) -> bool {
        self.components[0].is_diagonal()
    }

    /// `ln Σ φ_i N(x; μ_i, Σ_i)`.
    pub fn log_density(&self, x: &[T]) -> T {
        let mut scratch = vec![T::zero(); self.dim()];
        let terms: Vec<T> = self
            .components
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > T::zero())
            .map(|(c, &w)| w.ln() + c.log_density_from_mahalanobis(c.mahalanobis_sq_with(x, &mut scratch)))
            .collect();
        log_sum_exp(terms.iter().copied())
    }
}

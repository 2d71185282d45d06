//! Closed-form `KL(T#P ‖ P)` for affine `T` and diagonal Gaussian `P`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct GaussianKl {
    mean: DVector<f64>,
    cov: DVector<f64>,
}

/// `∇ log(q/p)` for `q = T#P`, evaluated pointwise.
#[derive(Debug, Clone)]
pub(crate) struct KlField {
    sigma_inv: DMatrix<f64>,
    mean_q: DVector<f64>,
    cov_inv: DVector<f64>,
    mean: DVector<f64>,
}

impl KlField {
    pub(crate) fn apply(&self, z: &[f64], out: &mut [f64]) {
        let d = z.len();
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc -= self.sigma_inv[(j, k)] * (z[k] - self.mean_q[k]);
            }
            out[j] = acc + self.cov_inv[j] * (z[j] - self.mean[j]);
        }
    }
}

impl GaussianKl {
    pub(crate) fn new(mean: &[f64], cov: &[f64]) -> Self {
        Self {
            mean: DVector::from_column_slice(mean),
            cov: DVector::from_column_slice(cov),
        }
    }

    fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.mean.len();
        (
            DMatrix::from_row_slice(d, d, &theta[..d * d]),
            DVector::from_column_slice(&theta[d * d..]),
        )
    }

    fn inverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
        let det = a.determinant();
        let inv = a.clone().try_inverse();
        match inv {
            Some(inv) if det != 0.0 && det.is_finite() && inv.iter().all(|v| v.is_finite()) => {
                Ok((inv, det))
            }
            _ => Err(Error::Validation(
                "KL discrepancy requires a nonsingular affine matrix".into(),
            )),
        }
    }

    /// KL value and, if requested, its gradient in `θ = (A row-major, b)`.
    pub(crate) fn value(&self, theta: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let d = self.mean.len();
        let (a, b) = self.unpack(theta);
        let (a_inv, det) = Self::inverse(&a)?;
        let r = &a * &self.mean + &b - &self.mean;
        let mut trace = 0.0;
        for j in 0..d {
            for k in 0..d {
                trace += a[(j, k)] * a[(j, k)] * self.cov[k] / self.cov[j];
            }
        }
        let quad: f64 = (0..d).map(|j| r[j] * r[j] / self.cov[j]).sum();
        let value = 0.5 * (trace + quad - d as f64 - 2.0 * det.abs().ln());
        if !want_grad {
            return Ok((value, None));
        }
        let mut g = vec![0.0; d * d + d];
        for j in 0..d {
            let rj = r[j] / self.cov[j];
            for k in 0..d {
                g[j * d + k] =
                    a[(j, k)] * self.cov[k] / self.cov[j] + rj * self.mean[k] - a_inv[(k, j)];
            }
            g[d * d + j] = rj;
        }
        Ok((value, Some(g)))
    }

    pub(crate) fn field(&self, theta: &[f64]) -> Result<KlField> {
        let d = self.mean.len();
        let (a, b) = self.unpack(theta);
        let (a_inv, _) = Self::inverse(&a)?;
        // Σ⁻¹ = A⁻ᵀ C⁻¹ A⁻¹
        let cov_inv = self.cov.map(|c| 1.0 / c);
        let scaled = DMatrix::from_fn(d, d, |j, k| cov_inv[j] * a_inv[(j, k)]);
        let sigma_inv = a_inv.transpose() * scaled;
        Ok(KlField {
            sigma_inv,
            mean_q: &a * &self.mean + b,
            cov_inv,
            mean: self.mean.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_in_one_dimension() {
        let kl = GaussianKl::new(&[0.0], &[1.0]);
        let (v, _) = kl.value(&[1.0, 0.7], false).unwrap();
        assert!((v - 0.245).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_differences() {
        let kl = GaussianKl::new(&[0.3, -0.5], &[0.8, 2.0]);
        let theta = [1.2, 0.3, -0.2, 0.9, 0.1, -0.4];
        let (_, g) = kl.value(&theta, true).unwrap();
        let g = g.unwrap();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut tp = theta;
            let mut tm = theta;
            tp[k] += h;
            tm[k] -= h;
            let fd =
                (kl.value(&tp, false).unwrap().0 - kl.value(&tm, false).unwrap().0) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() < 1e-7 * (1.0 + g[k].abs()),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn field_vanishes_at_identity() {
        let kl = GaussianKl::new(&[1.0, 2.0], &[0.5, 3.0]);
        let f = kl.field(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let mut out = [9.0; 2];
        f.apply(&[0.4, -1.0], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn singular_matrix_rejected() {
        let kl = GaussianKl::new(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(kl.value(&[1.0, 1.0, 1.0, 1.0, 0.0, 0.0], false).is_err());
    }
}

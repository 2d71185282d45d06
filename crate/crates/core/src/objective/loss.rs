//! Loss families `ℓ(f_φ, ξ)`.
//!
//! Score-based kinds act on `u = s·f_φ(ξ)` where `s` is the effective sign of
//! the particle (component sign, times `-y` for labeled data).

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::objective::model::{sigmoid, softplus, ModelKind};

/// Exponents beyond this magnitude are clamped for the exponential loss.
pub const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `exp(u)`.
    Exponential,
    /// `log(1 + exp(u))`.
    Logistic,
    /// `(u + 1)₊²`.
    SquaredHinge,
    /// `(α/2)‖ξ‖²`, independent of φ.
    QuadraticTest { alpha: f64 },
    /// `½‖φ - c‖² + (α/2)‖ξ‖²`: a synthetic whose value function is an
    /// explicit quadratic in φ.
    ParamQuadratic { alpha: f64, center: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// The exponential loss clamped its exponent.
    pub clamped: bool,
}

impl LossKind {
    pub fn validate(&self, model: &ModelKind) -> Result<()> {
        match self {
            LossKind::QuadraticTest { alpha } if !alpha.is_finite() => {
                Err(Error::Config("quadratic loss alpha must be finite".into()))
            }
            LossKind::ParamQuadratic { alpha, center } => {
                if !alpha.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config(
                        "quadratic loss parameters must be finite".into(),
                    ));
                }
                if center.len() != model.n_params() {
                    return Err(shape_err(
                        format!("{} center entries", model.n_params()),
                        center.len(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether the loss depends on φ.
    pub fn depends_on_phi(&self) -> bool {
        !matches!(self, LossKind::QuadraticTest { .. })
    }

    /// Whether the loss is built on the score `s·f_φ(ξ)`.
    pub fn uses_score(&self) -> bool {
        matches!(
            self,
            LossKind::Exponential | LossKind::Logistic | LossKind::SquaredHinge
        )
    }
}

/// Link `h(u)` and its derivative for score losses.
#[inline]
fn link(loss: &LossKind, u: f64) -> (f64, f64, bool) {
    match loss {
        LossKind::Exponential => {
            let clamped = u.abs() > EXP_CLAMP;
            let e = u.clamp(-EXP_CLAMP, EXP_CLAMP).exp();
            (e, e, clamped)
        }
        LossKind::Logistic => (softplus(u), sigmoid(u), false),
        LossKind::SquaredHinge => {
            let a = (u + 1.0).max(0.0);
            (a * a, 2.0 * a, false)
        }
        _ => unreachable!("not a score loss"),
    }
}

/// Evaluates `ℓ` at `ξ`, overwriting the requested gradients.
pub(crate) fn eval_loss(
    loss: &LossKind,
    model: &ModelKind,
    phi: &[f64],
    xi: &[f64],
    s: f64,
    grad_phi: Option<&mut [f64]>,
    grad_xi: Option<&mut [f64]>,
) -> LossValue {
    match loss {
        LossKind::QuadraticTest { alpha } => {
            if let Some(g) = grad_phi {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            quad_xi(*alpha, xi, grad_xi, 0.0)
        }
        LossKind::ParamQuadratic { alpha, center } => {
            let mut base = 0.0;
            for (p, c) in phi.iter().zip(center) {
                base += 0.5 * (p - c) * (p - c);
            }
            if let Some(g) = grad_phi {
                for ((gk, p), c) in g.iter_mut().zip(phi).zip(center) {
                    *gk = p - c;
                }
            }
            quad_xi(*alpha, xi, grad_xi, base)
        }
        _ => {
            let want_phi = grad_phi.is_some();
            let want_xi = grad_xi.is_some();
            let mut grad_phi = grad_phi;
            let mut grad_xi = grad_xi;
            let f = model.eval(phi, xi, grad_phi.as_deref_mut(), grad_xi.as_deref_mut());
            let (value, dh, clamped) = link(loss, s * f);
            let scale = s * dh;
            if want_phi {
                grad_phi.unwrap().iter_mut().for_each(|g| *g *= scale);
            }
            if want_xi {
                grad_xi.unwrap().iter_mut().for_each(|g| *g *= scale);
            }
            LossValue { value, clamped }
        }
    }
}

fn quad_xi(alpha: f64, xi: &[f64], grad_xi: Option<&mut [f64]>, base: f64) -> LossValue {
    let sq: f64 = xi.iter().map(|v| v * v).sum();
    if let Some(g) = grad_xi {
        for (gk, x) in g.iter_mut().zip(xi) {
            *gk = alpha * x;
        }
    }
    LossValue {
        value: base + 0.5 * alpha * sq,
        clamped: false,
    }
}

fn check(model: &ModelKind, phi: &[f64], xi: &[f64], s: f64) -> Result<()> {
    if phi.len() != model.n_params() {
        return Err(shape_err(
            format!("{} model parameters", model.n_params()),
            phi.len(),
        ));
    }
    if xi.len() != model.input_dim() {
        return Err(shape_err(
            format!("{}-dimensional point", model.input_dim()),
            xi.len(),
        ));
    }
    if s != 1.0 && s != -1.0 {
        return Err(Error::Config(format!(
            "loss sign must be +1 or -1, got {s}"
        )));
    }
    Ok(())
}

/// `ℓ(f_φ, ξ)` for effective sign `s ∈ {-1, +1}`.
pub fn loss_value(
    loss: &LossKind,
    model: &ModelKind,
    phi: &[f64],
    xi: &[f64],
    s: f64,
) -> Result<LossValue> {
    check(model, phi, xi, s)?;
    Ok(eval_loss(loss, model, phi, xi, s, None, None))
}

pub fn loss_grad_phi(
    loss: &LossKind,
    model: &ModelKind,
    phi: &[f64],
    xi: &[f64],
    s: f64,
) -> Result<Vec<f64>> {
    check(model, phi, xi, s)?;
    let mut g = vec![0.0; phi.len()];
    eval_loss(loss, model, phi, xi, s, Some(&mut g), None);
    Ok(g)
}

pub fn loss_grad_xi(
    loss: &LossKind,
    model: &ModelKind,
    phi: &[f64],
    xi: &[f64],
    s: f64,
) -> Result<Vec<f64>> {
    check(model, phi, xi, s)?;
    let mut g = vec![0.0; xi.len()];
    eval_loss(loss, model, phi, xi, s, None, Some(&mut g));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIN: ModelKind = ModelKind::Linear { dim: 2 };

    #[test]
    fn reference_values() {
        let zero = [0.0, 0.0, 0.0];
        let x = [0.3, -1.2];
        let v = loss_value(&LossKind::Logistic, &LIN, &zero, &x, -1.0).unwrap();
        assert!((v.value - 2f64.ln()).abs() < 1e-15);
        let v = loss_value(&LossKind::Exponential, &LIN, &zero, &x, 1.0).unwrap();
        assert_eq!(v.value, 1.0);
        let g = loss_grad_phi(&LossKind::Exponential, &LIN, &zero, &x, 1.0).unwrap();
        assert_eq!(g, vec![0.3, -1.2, 1.0]);
        let phi = [0.0, 0.0, -2.0];
        let v = loss_value(&LossKind::SquaredHinge, &LIN, &phi, &x, 1.0).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(loss_grad_phi(&LossKind::SquaredHinge, &LIN, &phi, &x, 1.0)
            .unwrap()
            .iter()
            .all(|g| *g == 0.0));
        assert!(loss_grad_xi(&LossKind::SquaredHinge, &LIN, &phi, &x, 1.0)
            .unwrap()
            .iter()
            .all(|g| *g == 0.0));
    }

    #[test]
    fn exponential_clamp_flag() {
        let x = [1.0, 0.0];
        let at =
            |b: f64| loss_value(&LossKind::Exponential, &LIN, &[0.0, 0.0, b], &x, 1.0).unwrap();
        assert!(!at(50.0).clamped);
        assert!(at(50.5).clamped);
        assert!(at(-50.5).clamped);
        assert_eq!(at(80.0).value, 50f64.exp());
    }

    #[test]
    fn logistic_single_particle_gradient() {
        let phi = [0.7, -0.4, 0.2];
        let x = [1.5, 0.5];
        let y = 1.0;
        let f = 0.7 * 1.5 - 0.4 * 0.5 + 0.2;
        let g = loss_grad_phi(&LossKind::Logistic, &LIN, &phi, &x, -y).unwrap();
        let sig = 1.0 / (1.0 + f64::exp(y * f));
        let want = [sig * -y * 1.5, sig * -y * 0.5, sig * -y];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_sign_and_shapes() {
        assert!(loss_value(&LossKind::Logistic, &LIN, &[0.0; 3], &[0.0; 2], 0.5).is_err());
        assert!(loss_value(&LossKind::Logistic, &LIN, &[0.0; 2], &[0.0; 2], 1.0).is_err());
        let bad = LossKind::ParamQuadratic {
            alpha: 0.0,
            center: vec![0.0],
        };
        assert!(bad.validate(&LIN).is_err());
    }
}

//! Decision functions `f_φ : R^d → R` and the convex parameter set Φ.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::measures::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// `f(x) = wᵀx + b`, `φ = (w, b)`.
    Linear { dim: usize },
    /// `f(x) = vᵀ softplus(Wx + c) + b₀`, `φ = (W row-major, c, v, b₀)`.
    MlpSoftplus { dim: usize, hidden: usize },
}

#[inline]
pub(crate) fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl ModelKind {
    pub fn input_dim(&self) -> usize {
        match *self {
            ModelKind::Linear { dim } | ModelKind::MlpSoftplus { dim, .. } => dim,
        }
    }

    pub fn n_params(&self) -> usize {
        match *self {
            ModelKind::Linear { dim } => dim + 1,
            ModelKind::MlpSoftplus { dim, hidden } => hidden * dim + 2 * hidden + 1,
        }
    }

    /// Evaluates `f_φ(x)`, optionally writing `∇_φ f` and `∇_x f`.
    pub fn eval(
        &self,
        phi: &[f64],
        x: &[f64],
        grad_phi: Option<&mut [f64]>,
        grad_x: Option<&mut [f64]>,
    ) -> f64 {
        match *self {
            ModelKind::Linear { dim } => {
                let (w, b) = phi.split_at(dim);
                if let Some(g) = grad_phi {
                    g[..dim].copy_from_slice(x);
                    g[dim] = 1.0;
                }
                if let Some(g) = grad_x {
                    g.copy_from_slice(w);
                }
                w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
            }
            ModelKind::MlpSoftplus { dim, hidden } => {
                let (weights, rest) = phi.split_at(hidden * dim);
                let (bias, rest) = rest.split_at(hidden);
                let (out_w, out_b) = rest.split_at(hidden);
                let mut grad_phi = grad_phi;
                let mut grad_x = grad_x;
                if let Some(g) = grad_x.as_deref_mut() {
                    g.iter_mut().for_each(|v| *v = 0.0);
                }
                let mut f = out_b[0];
                for k in 0..hidden {
                    let row = &weights[k * dim..(k + 1) * dim];
                    let a = bias[k] + row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                    let s = softplus(a);
                    let ds = sigmoid(a);
                    f += out_w[k] * s;
                    let back = out_w[k] * ds;
                    if let Some(g) = grad_phi.as_deref_mut() {
                        for j in 0..dim {
                            g[k * dim + j] = back * x[j];
                        }
                        g[hidden * dim + k] = back;
                        g[hidden * dim + hidden + k] = s;
                    }
                    if let Some(g) = grad_x.as_deref_mut() {
                        for (gj, wj) in g.iter_mut().zip(row) {
                            *gj += back * wj;
                        }
                    }
                }
                if let Some(g) = grad_phi {
                    g[hidden * dim + 2 * hidden] = 1.0;
                }
                f
            }
        }
    }
}

/// Convex feasible set Φ for the decision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Free,
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Euclidean ball of the given radius around the origin.
    Ball {
        radius: f64,
    },
}

impl Constraint {
    pub fn validate(&self, n_params: usize) -> Result<()> {
        match self {
            Constraint::Free => Ok(()),
            Constraint::Box { lo, hi } => {
                if lo.len() != n_params || hi.len() != n_params {
                    return Err(shape_err(
                        format!("{n_params} box bounds"),
                        format!("{}/{}", lo.len(), hi.len()),
                    ));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || l.is_nan()) {
                    return Err(Error::Config("box constraint requires lo <= hi".into()));
                }
                Ok(())
            }
            Constraint::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Config("ball radius must be positive".into()));
                }
                Ok(())
            }
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, phi: &[f64]) -> Vec<f64> {
        match self {
            Constraint::Free => phi.to_vec(),
            Constraint::Box { lo, hi } => phi
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(p, (l, h))| p.clamp(*l, *h))
                .collect(),
            Constraint::Ball { radius } => {
                let norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= *radius {
                    phi.to_vec()
                } else {
                    let s = radius / norm;
                    phi.iter().map(|v| v * s).collect()
                }
            }
        }
    }

    pub fn contains(&self, phi: &[f64], tol: f64) -> bool {
        match self {
            Constraint::Free => true,
            Constraint::Box { lo, hi } => phi
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(p, (l, h))| *p >= l - tol && *p <= h + tol),
            Constraint::Ball { radius } => {
                phi.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + tol
            }
        }
    }

    /// Draws a point of the set. Unbounded coordinates are drawn around
    /// `center` with unit standard deviation.
    pub fn sample_point(&self, center: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        match self {
            Constraint::Free => center
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Constraint::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            Constraint::Ball { radius } => {
                let n = center.len();
                let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = z
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
                z.iter_mut().for_each(|v| *v *= r / norm);
                z
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    pub kind: ModelKind,
    /// Current φ.
    pub params: Vec<f64>,
    #[serde(default = "free")]
    pub constraint: Constraint,
}

fn free() -> Constraint {
    Constraint::Free
}

impl DecisionModel {
    pub fn new(kind: ModelKind, params: Vec<f64>, constraint: Constraint) -> Result<Self> {
        let model = Self {
            kind,
            params,
            constraint,
        };
        model.validate()?;
        Ok(model)
    }

    /// Linear model started at φ = 0.
    pub fn linear(dim: usize, constraint: Constraint) -> Result<Self> {
        Self::new(ModelKind::Linear { dim }, vec![0.0; dim + 1], constraint)
    }

    /// Softplus MLP with N(0, scale²) weights, projected onto Φ.
    pub fn mlp_random(
        dim: usize,
        hidden: usize,
        constraint: Constraint,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let kind = ModelKind::MlpSoftplus { dim, hidden };
        let mut rng = rng_from_seed(seed);
        let raw: Vec<f64> = (0..kind.n_params())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let params = constraint.project(&raw);
        Self::new(kind, params, constraint)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kind.n_params();
        if self.kind.input_dim() == 0 {
            return Err(Error::Config(
                "model input dimension must be at least 1".into(),
            ));
        }
        if let ModelKind::MlpSoftplus { hidden: 0, .. } = self.kind {
            return Err(Error::Config("mlp needs at least one hidden unit".into()));
        }
        if self.params.len() != n {
            return Err(shape_err(
                format!("{n} model parameters"),
                self.params.len(),
            ));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        self.constraint.validate(n)
    }

    pub fn n_params(&self) -> usize {
        self.kind.n_params()
    }

    pub fn value(&self, phi: &[f64], x: &[f64]) -> f64 {
        self.kind.eval(phi, x, None, None)
    }
}

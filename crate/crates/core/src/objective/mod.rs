//! Problem assembly: `H(φ, Q) = Σ_c E_{Q_c}[ℓ_c(f_φ, ξ)] - λ·D(Q_c, P_c)`.
//!
//! Each component carries its own reference cloud `P_c` and a transport map
//! `T_c`, with `Q_c = T_c # P_c`. All components share the decision model.

mod kl;
pub mod loss;
pub mod model;

use serde::{Deserialize, Serialize};

pub use loss::{loss_grad_phi, loss_grad_xi, loss_value, LossKind, LossValue, EXP_CLAMP};
pub use model::{Constraint, DecisionModel, ModelKind};

use crate::error::{shape_err, Error, Result};
use crate::measures::{ParticleCloud, ReferenceMeasure};
use crate::transport::{MapPlan, TransportMap};
use kl::GaussianKl;
use loss::eval_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discrepancy {
    /// `E_P‖ξ - T(ξ)‖²`.
    W2Sq,
    /// `KL(T#P ‖ P)` for Gaussian `P` and affine `T`.
    KlGaussAffine,
}

impl Discrepancy {
    /// Strong-convexity modulus of `D` along generalized geodesics centered at
    /// `P`, per unit of λ. `λ·D` then has modulus `λ·μ`.
    pub fn modulus(&self, reference: Option<&ReferenceMeasure>) -> Result<f64> {
        match self {
            Discrepancy::W2Sq => Ok(2.0),
            Discrepancy::KlGaussAffine => {
                let (_, cov) = reference.and_then(|r| r.as_gaussian()).ok_or_else(|| {
                    Error::Config("kl_gauss_affine requires a gaussian reference".into())
                })?;
                Ok(1.0 / cov.iter().cloned().fold(f64::MIN_POSITIVE, f64::max))
            }
        }
    }
}

/// Problem constants supplied by configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Weak convexity modulus ρ.
    pub rho: f64,
    /// Lipschitz constant L.
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub struct Component {
    loss: LossKind,
    sign: f64,
    labeled: bool,
    cloud: ParticleCloud,
    reference: Option<ReferenceMeasure>,
    discrepancy: Discrepancy,
    map: TransportMap,
    modulus: f64,
    /// Effective per-particle sign.
    signs: Vec<f64>,
    kl: Option<GaussianKl>,
}

impl Component {
    /// `map` fixes the family (and for residual maps the features) used for
    /// this component; its parameters are the default starting point.
    pub fn new(
        loss: LossKind,
        sign: f64,
        labeled: bool,
        cloud: ParticleCloud,
        reference: Option<ReferenceMeasure>,
        discrepancy: Discrepancy,
        map: TransportMap,
    ) -> Result<Self> {
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::Config(format!(
                "component sign must be +1 or -1, got {sign}"
            )));
        }
        map.validate()?;
        if map.dim() != cloud.dim() {
            return Err(shape_err(
                format!("map of dimension {}", cloud.dim()),
                map.dim(),
            ));
        }
        let signs = if labeled {
            let labels = cloud
                .labels()
                .ok_or_else(|| Error::Config("labeled loss requires particle labels".into()))?;
            labels.iter().map(|&y| -sign * f64::from(y)).collect()
        } else {
            vec![sign; cloud.len()]
        };
        let kl = match discrepancy {
            Discrepancy::W2Sq => None,
            Discrepancy::KlGaussAffine => {
                let (mean, cov) = reference
                    .as_ref()
                    .and_then(|r| r.as_gaussian())
                    .ok_or_else(|| {
                        Error::Config("kl_gauss_affine requires a gaussian reference".into())
                    })?;
                if mean.len() != cloud.dim() {
                    return Err(shape_err(
                        format!("reference of dimension {}", cloud.dim()),
                        mean.len(),
                    ));
                }
                if !matches!(map, TransportMap::Affine { .. }) {
                    return Err(Error::Config(format!(
                        "kl_gauss_affine requires the affine map family, got {}",
                        map.family()
                    )));
                }
                Some(GaussianKl::new(mean, cov))
            }
        };
        let modulus = discrepancy.modulus(reference.as_ref())?;
        Ok(Self {
            loss,
            sign,
            labeled,
            cloud,
            reference,
            discrepancy,
            map,
            modulus,
            signs,
            kl,
        })
    }

    pub fn loss(&self) -> &LossKind {
        &self.loss
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn reference(&self) -> Option<&ReferenceMeasure> {
        self.reference.as_ref()
    }

    pub fn discrepancy(&self) -> Discrepancy {
        self.discrepancy
    }

    /// Template map (family, features, default parameters).
    pub fn map(&self) -> &TransportMap {
        &self.map
    }

    /// Per-unit modulus μ of the discrepancy.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    /// Effective sign `s` of particle `i`.
    pub fn particle_sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    fn check_map(&self, map: &TransportMap) -> Result<()> {
        if map.family() != self.map.family()
            || map.n_params() != self.map.n_params()
            || map.dim() != self.map.dim()
        {
            return Err(Error::Config(format!(
                "component expects a {} map with {} parameters, got {} with {}",
                self.map.family(),
                self.map.n_params(),
                map.family(),
                map.n_params()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    components: Vec<Component>,
    lambda: f64,
    constants: Constants,
}

impl ProblemSpec {
    pub fn new(components: Vec<Component>, lambda: f64, constants: Constants) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("problem needs at least one component".into()));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let Constants { rho, lipschitz } = constants;
        if !(rho.is_finite() && rho >= 0.0 && lipschitz.is_finite() && lipschitz >= 0.0) {
            return Err(Error::Config(
                "rho and lipschitz must be finite and nonnegative".into(),
            ));
        }
        for (c, comp) in components.iter().enumerate() {
            let strength = lambda * comp.modulus;
            if strength <= rho {
                return Err(Error::Config(format!(
                    "regularization too weak in component {c}: lambda*modulus = {strength} must exceed rho = {rho}"
                )));
            }
        }
        Ok(Self {
            components,
            lambda,
            constants,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    /// Same components and constants, new λ (revalidated).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.components.clone(), lambda, self.constants)
    }

    /// Smallest `λ·μ` over components.
    pub fn lambda_mu(&self) -> f64 {
        self.components
            .iter()
            .map(|c| self.lambda * c.modulus)
            .fold(f64::INFINITY, f64::min)
    }

    /// `κ = λμ - ρ > 0`.
    pub fn kappa(&self) -> f64 {
        self.lambda_mu() - self.constants.rho
    }

    pub fn template_maps(&self) -> Vec<TransportMap> {
        self.components.iter().map(|c| c.map.clone()).collect()
    }

    pub fn identity_maps(&self) -> Vec<TransportMap> {
        self.components
            .iter()
            .map(|c| c.map.identity_like())
            .collect()
    }

    pub fn check_model(&self, model: &DecisionModel) -> Result<()> {
        model.validate()?;
        for comp in &self.components {
            if model.kind.input_dim() != comp.cloud.dim() {
                return Err(shape_err(
                    format!("model input dimension {}", comp.cloud.dim()),
                    model.kind.input_dim(),
                ));
            }
            comp.loss.validate(&model.kind)?;
        }
        Ok(())
    }

    pub(crate) fn check_call(
        &self,
        model: &DecisionModel,
        phi: &[f64],
        maps: &[TransportMap],
    ) -> Result<()> {
        self.check_model(model)?;
        if phi.len() != model.n_params() {
            return Err(shape_err(
                format!("{} model parameters", model.n_params()),
                phi.len(),
            ));
        }
        if maps.len() != self.components.len() {
            return Err(shape_err(
                format!("{} maps", self.components.len()),
                maps.len(),
            ));
        }
        for (comp, map) in self.components.iter().zip(maps) {
            comp.check_map(map)?;
        }
        Ok(())
    }

    pub(crate) fn plans(&self, maps: &[TransportMap]) -> Result<Vec<MapPlan>> {
        self.components
            .iter()
            .zip(maps)
            .map(|(c, m)| MapPlan::with_metric(m, &c.cloud))
            .collect()
    }
}

/// One evaluation of a component at pushed particles `z = T(x)`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Pass {
    pub loss_mean: f64,
    pub disc: f64,
    /// `Σ wᵢ ‖zᵢ - z_prevᵢ‖²` (0 without a proximal anchor).
    pub prox_sq: f64,
    pub clamped: bool,
    /// Squared Monte Carlo standard error of the component's H term.
    pub se_sq: f64,
    /// `-∇ℓ + λ·W2 cotangent + (z - z_prev)/γ`, per particle (when requested).
    pub cot: Vec<f64>,
    /// Particle representative of `kl_theta` for KL components (when requested).
    pub kl_field: Vec<f64>,
    /// `λ ∇_θ KL` for KL components (when requested).
    pub kl_theta: Vec<f64>,
}

impl Pass {
    pub(crate) fn h(&self, lambda: f64) -> f64 {
        self.loss_mean - lambda * self.disc
    }

    /// Certificate field `cot + kl_field`.
    pub(crate) fn field(&self) -> std::borrow::Cow<'_, [f64]> {
        if self.kl_field.is_empty() {
            std::borrow::Cow::Borrowed(&self.cot)
        } else {
            std::borrow::Cow::Owned(
                self.cot
                    .iter()
                    .zip(&self.kl_field)
                    .map(|(a, b)| a + b)
                    .collect(),
            )
        }
    }
}

/// `total += Σᵢ wᵢ‖gᵢ‖²`.
pub(crate) fn accumulate_field_sq(total: &mut f64, weights: &[f64], field: &[f64], dim: usize) {
    for (w, gi) in weights.iter().zip(field.chunks_exact(dim)) {
        *total += w * gi.iter().map(|v| v * v).sum::<f64>();
    }
}

pub(crate) fn evaluate_component(
    comp: &Component,
    model: &ModelKind,
    phi: &[f64],
    lambda: f64,
    map: &TransportMap,
    z: &[f64],
    prox: Option<(&[f64], f64)>,
    want_grad: bool,
) -> Result<Pass> {
    let d = comp.cloud.dim();
    let x = comp.cloud.points();
    let weights = comp.cloud.weights();
    let w2 = comp.discrepancy == Discrepancy::W2Sq;
    let mut pass = Pass::default();
    if want_grad {
        pass.cot = vec![0.0; z.len()];
    }
    let mut terms = Vec::with_capacity(weights.len());
    let mut disc = 0.0;
    let mut prox_sq = 0.0;
    for (i, w) in weights.iter().enumerate() {
        let zi = &z[i * d..(i + 1) * d];
        let xi = &x[i * d..(i + 1) * d];
        let grad = if want_grad {
            Some(&mut pass.cot[i * d..(i + 1) * d])
        } else {
            None
        };
        let lv = eval_loss(&comp.loss, model, phi, zi, comp.signs[i], None, grad);
        pass.clamped |= lv.clamped;
        let mut term = lv.value;
        if w2 {
            let sq: f64 = zi.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            disc += w * sq;
            term -= lambda * sq;
        }
        terms.push(term);
        if let Some((zp, _)) = prox {
            let zpi = &zp[i * d..(i + 1) * d];
            prox_sq += w * zi
                .iter()
                .zip(zpi)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        pass.loss_mean += w * lv.value;
        if want_grad {
            let g = &mut pass.cot[i * d..(i + 1) * d];
            for k in 0..d {
                let mut v = -g[k];
                if w2 {
                    v += lambda * 2.0 * (zi[k] - xi[k]);
                }
                if let Some((zp, gamma)) = prox {
                    v += (zi[k] - zp[i * d + k]) / gamma;
                }
                g[k] = v;
            }
        }
    }
    if let Some(kl) = &comp.kl {
        let theta = map.params();
        let (value, grad) = kl.value(&theta, want_grad)?;
        disc = value;
        if want_grad {
            pass.kl_theta = grad.unwrap().into_iter().map(|g| lambda * g).collect();
            // The population field at the sample points does not integrate to
            // the closed-form θ-gradient, so the certificate uses the particle
            // field that does.
            pass.kl_field = MapPlan::with_metric(map, &comp.cloud)?
                .represent(&comp.cloud, &pass.kl_theta)
                .ok_or_else(|| Error::Config("kl_gauss_affine requires an affine map".into()))?;
        }
    }
    pass.disc = disc;
    pass.prox_sq = prox_sq;
    let mean: f64 = terms.iter().zip(weights).map(|(t, w)| w * t).sum();
    let var: f64 = terms
        .iter()
        .zip(weights)
        .map(|(t, w)| w * (t - mean) * (t - mean))
        .sum();
    let w_sq: f64 = weights.iter().map(|w| w * w).sum();
    pass.se_sq = var * w_sq;
    if !(pass.loss_mean.is_finite() && pass.disc.is_finite()) {
        return Err(Error::Validation(
            "objective evaluated to a non-finite value".into(),
        ));
    }
    Ok(pass)
}

/// Value of `H(φ, Q)` with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct HValue {
    pub value: f64,
    /// Per-component `E_Q[ℓ] - λD`.
    pub components: Vec<f64>,
    /// Monte Carlo standard error of `value` over the particle draw.
    pub std_error: f64,
    pub clamped: bool,
}

fn passes(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
    prox: Option<(&[TransportMap], f64)>,
    want_grad: bool,
) -> Result<Vec<Pass>> {
    spec.check_call(model, phi, maps)?;
    if let Some((prev, gamma)) = prox {
        if !(gamma > 0.0) {
            return Err(Error::Config("proximal step gamma must be positive".into()));
        }
        spec.check_call(model, phi, prev)?;
    }
    let mut out = Vec::with_capacity(maps.len());
    for (c, (comp, map)) in spec.components.iter().zip(maps).enumerate() {
        let plan = MapPlan::new(map, &comp.cloud)?;
        let z = plan.push(map, &comp.cloud);
        let zp = prox.map(|(prev, gamma)| {
            (
                MapPlan::new(&prev[c], &comp.cloud).map(|p| p.push(&prev[c], &comp.cloud)),
                gamma,
            )
        });
        let zp = match zp {
            Some((points, gamma)) => Some((points?, gamma)),
            None => None,
        };
        let prox_ref = zp.as_ref().map(|(p, g)| (p.as_slice(), *g));
        out.push(evaluate_component(
            comp,
            &model.kind,
            phi,
            spec.lambda,
            map,
            &z,
            prox_ref,
            want_grad,
        )?);
    }
    Ok(out)
}

/// `H(φ, Q)` at the given maps (one per component).
pub fn objective_h(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
) -> Result<HValue> {
    let ps = passes(spec, model, phi, maps, None, false)?;
    let components: Vec<f64> = ps.iter().map(|p| p.h(spec.lambda)).collect();
    Ok(HValue {
        value: components.iter().sum(),
        components,
        std_error: ps.iter().map(|p| p.se_sq).sum::<f64>().sqrt(),
        clamped: ps.iter().any(|p| p.clamped),
    })
}

/// `D(T#P, P)` for one component.
pub fn discrepancy_value(comp: &Component, map: &TransportMap) -> Result<f64> {
    comp.check_map(map)?;
    match &comp.kl {
        Some(kl) => Ok(kl.value(&map.params(), false)?.0),
        None => crate::transport::w2_monge(map, &comp.cloud),
    }
}

/// Gradient of `D` with respect to the transported particles, plus the
/// direct θ-gradient for closed-form discrepancies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyGrad {
    /// Row-major `N × d`, unweighted.
    pub cotangents: Vec<f64>,
    pub theta: Option<Vec<f64>>,
}

pub fn discrepancy_grad(comp: &Component, map: &TransportMap) -> Result<DiscrepancyGrad> {
    comp.check_map(map)?;
    let plan = MapPlan::new(map, &comp.cloud)?;
    let z = plan.push(map, &comp.cloud);
    let d = comp.cloud.dim();
    match &comp.kl {
        Some(kl) => {
            let theta = map.params();
            let field = kl.field(&theta)?;
            let mut cot = vec![0.0; z.len()];
            for (zi, out) in z.chunks_exact(d).zip(cot.chunks_exact_mut(d)) {
                field.apply(zi, out);
            }
            Ok(DiscrepancyGrad {
                cotangents: cot,
                theta: kl.value(&theta, true)?.1,
            })
        }
        None => Ok(DiscrepancyGrad {
            cotangents: z
                .iter()
                .zip(comp.cloud.points())
                .map(|(a, b)| 2.0 * (a - b))
                .collect(),
            theta: None,
        }),
    }
}

/// `ζ = ∇_φ H(φ, Q)` with the maps held fixed.
pub fn subgrad_phi(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
) -> Result<Vec<f64>> {
    spec.check_call(model, phi, maps)?;
    let mut zeta = vec![0.0; phi.len()];
    let mut scratch = vec![0.0; phi.len()];
    for (comp, map) in spec.components.iter().zip(maps) {
        if !comp.loss.depends_on_phi() {
            continue;
        }
        let plan = MapPlan::new(map, &comp.cloud)?;
        let z = plan.push(map, &comp.cloud);
        let d = comp.cloud.dim();
        for (i, w) in comp.cloud.weights().iter().enumerate() {
            eval_loss(
                &comp.loss,
                &model.kind,
                phi,
                &z[i * d..(i + 1) * d],
                comp.signs[i],
                Some(&mut scratch),
                None,
            );
            for (zk, gk) in zeta.iter_mut().zip(&scratch) {
                *zk += w * gk;
            }
        }
    }
    Ok(zeta)
}

/// Per-component first-variation field of `-H + (1/2γ)W_ν²(·, Q_prev)` at the
/// transported particles; `prox = None` drops the proximal term.
pub fn inner_gradient_field(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
    prox: Option<(&[TransportMap], f64)>,
) -> Result<Vec<Vec<f64>>> {
    let ps = passes(spec, model, phi, maps, prox, true)?;
    Ok(ps.iter().map(|p| p.field().into_owned()).collect())
}

/// `√(Σ_c Σᵢ wᵢ‖gᵢ‖²)`.
pub fn certificate_norm(spec: &ProblemSpec, fields: &[Vec<f64>]) -> Result<f64> {
    if fields.len() != spec.components.len() {
        return Err(shape_err(
            format!("{} fields", spec.components.len()),
            fields.len(),
        ));
    }
    let mut total = 0.0;
    for (comp, g) in spec.components.iter().zip(fields) {
        let d = comp.cloud.dim();
        if g.len() != comp.cloud.points().len() {
            return Err(shape_err(
                format!("{}x{d} field", comp.cloud.len()),
                g.len(),
            ));
        }
        accumulate_field_sq(&mut total, comp.cloud.weights(), g, d);
    }
    Ok(total.sqrt())
}

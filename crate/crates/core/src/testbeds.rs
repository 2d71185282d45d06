//! Reference problems with known structure, shared by tests, benchmarks and
//! the CLI.

use crate::error::Result;
use crate::measures::{sample, MixtureComponent, ReferenceMeasure};
use crate::objective::{
    Component, Constants, Constraint, DecisionModel, Discrepancy, LossKind, ModelKind, ProblemSpec,
};
use crate::transport::TransportMap;

#[derive(Debug, Clone)]
pub struct Testbed {
    pub spec: ProblemSpec,
    pub model: DecisionModel,
}

pub const QUADRATIC_ALPHA: f64 = 0.5;
pub const QUADRATIC_LAMBDA: f64 = 2.0;

/// `ℓ = (α/2)‖ξ‖²` on `N(0, I₂)` with `W2Sq`, α = 0.5, λ = 2 and affine maps.
/// The loss is α-weakly concave in ξ, so ρ = α and κ = 2λ - α = 3.5.
pub fn quadratic(n: usize, seed: u64) -> Result<Testbed> {
    let reference = ReferenceMeasure::standard_gaussian(2);
    let cloud = sample(&reference, n, seed)?;
    let comp = Component::new(
        LossKind::QuadraticTest {
            alpha: QUADRATIC_ALPHA,
        },
        1.0,
        false,
        cloud,
        Some(reference),
        Discrepancy::W2Sq,
        TransportMap::affine_identity(2),
    )?;
    let constants = Constants {
        rho: QUADRATIC_ALPHA,
        lipschitz: QUADRATIC_ALPHA,
    };
    let spec = ProblemSpec::new(vec![comp], QUADRATIC_LAMBDA, constants)?;
    let model = DecisionModel::linear(2, Constraint::Free)?;
    Ok(Testbed { spec, model })
}

/// `ℓ = ½‖φ - c‖² + (α/2)‖ξ‖²` on `N(0, I₂)`: `V(φ) = ½‖φ - c‖² + const`,
/// with φ restricted to a ball of radius `radius`.
pub fn param_quadratic(n: usize, seed: u64, center: Vec<f64>, radius: f64) -> Result<Testbed> {
    let reference = ReferenceMeasure::standard_gaussian(2);
    let cloud = sample(&reference, n, seed)?;
    let alpha = QUADRATIC_ALPHA;
    let comp = Component::new(
        LossKind::ParamQuadratic {
            alpha,
            center: center.clone(),
        },
        1.0,
        false,
        cloud,
        Some(reference),
        Discrepancy::W2Sq,
        TransportMap::affine_identity(2),
    )?;
    let c_norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let constants = Constants {
        rho: 1.0,
        lipschitz: radius + c_norm,
    };
    let spec = ProblemSpec::new(vec![comp], QUADRATIC_LAMBDA, constants)?;
    let model = DecisionModel::linear(2, Constraint::Ball { radius })?;
    Ok(Testbed { spec, model })
}

pub const LOGISTIC_LAMBDA: f64 = 5.0;
pub const LOGISTIC_RADIUS: f64 = 4.0;
/// Bandwidth of the particle-centered residual map features.
pub const LOGISTIC_BANDWIDTH: f64 = 0.02;

/// Labeled two-class Gaussian data in `R²`, logistic loss with `s = -y`,
/// `W2Sq` penalty with λ = 5, and a residual map with one feature per
/// particle. The linear model lives in a ball of radius 4 and starts at
/// `φ₀ = (1.5, 0.75, 0)`, on the flat tail of the nearly separable loss.
///
/// `ℓ` is convex in φ and `‖w‖²/4 ≤ R²/4`-weakly concave in ξ, so
/// ρ = L = R²/4.
pub fn adversarial_logistic(n: usize, seed: u64) -> Result<Testbed> {
    let reference = logistic_reference();
    let cloud = sample(&reference, n, seed)?;
    let map = TransportMap::residual_on_particles(&cloud, LOGISTIC_BANDWIDTH)?;
    let comp = Component::new(
        LossKind::Logistic,
        1.0,
        true,
        cloud,
        Some(reference),
        Discrepancy::W2Sq,
        map,
    )?;
    let rho = LOGISTIC_RADIUS * LOGISTIC_RADIUS / 4.0;
    let spec = ProblemSpec::new(
        vec![comp],
        LOGISTIC_LAMBDA,
        Constants {
            rho,
            lipschitz: rho,
        },
    )?;
    let model = DecisionModel::new(
        ModelKind::Linear { dim: 2 },
        vec![1.5, 0.75, 0.0],
        Constraint::Ball {
            radius: LOGISTIC_RADIUS,
        },
    )?;
    Ok(Testbed { spec, model })
}

pub fn logistic_reference() -> ReferenceMeasure {
    let cov = vec![0.25, 0.25];
    ReferenceMeasure::Labeled {
        negative: Box::new(ReferenceMeasure::Gaussian {
            mean: vec![-1.0, -0.5],
            cov: cov.clone(),
        }),
        positive: Box::new(ReferenceMeasure::Gaussian {
            mean: vec![1.0, 0.5],
            cov,
        }),
        positive_fraction: 0.5,
    }
}

pub const MLP_BOX: f64 = 1.0;

/// Logistic loss on a softplus MLP over XOR-labeled blobs with a residual
/// map on the particles. The value function is genuinely nonconvex in φ;
/// `rho` is taken as given. On the box `[-1, 1]^17` the ξ-curvature of the
/// loss stays below 10 < 2λ, so the inner problem remains concave.
pub fn nonconvex_mlp(n: usize, seed: u64, rho: f64) -> Result<Testbed> {
    let blob = |mx: f64, my: f64| MixtureComponent {
        weight: 0.5,
        mean: vec![mx, my],
        cov: vec![0.1, 0.1],
    };
    let reference = ReferenceMeasure::Labeled {
        negative: Box::new(ReferenceMeasure::GaussianMixture {
            components: vec![blob(1.0, 1.0), blob(-1.0, -1.0)],
        }),
        positive: Box::new(ReferenceMeasure::GaussianMixture {
            components: vec![blob(1.0, -1.0), blob(-1.0, 1.0)],
        }),
        positive_fraction: 0.5,
    };
    let cloud = sample(&reference, n, seed)?;
    let map = TransportMap::residual_on_particles(&cloud, LOGISTIC_BANDWIDTH)?;
    let comp = Component::new(
        LossKind::Logistic,
        1.0,
        true,
        cloud,
        Some(reference),
        Discrepancy::W2Sq,
        map,
    )?;
    let spec = ProblemSpec::new(
        vec![comp],
        10.0,
        Constants {
            rho,
            lipschitz: rho,
        },
    )?;
    let hidden = 4;
    let n_params = ModelKind::MlpSoftplus { dim: 2, hidden }.n_params();
    let model = DecisionModel::mlp_random(
        2,
        hidden,
        Constraint::Box {
            lo: vec![-MLP_BOX; n_params],
            hi: vec![MLP_BOX; n_params],
        },
        0.5,
        seed,
    )?;
    Ok(Testbed { spec, model })
}

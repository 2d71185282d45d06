//! Numerical probes of the structural properties the solvers rely on.
//!
//! Every probe evaluates `V(φ) = max_Q H(φ, Q)` through [`solve_inner`], the
//! same path the solver uses. Tolerances are composed from the certified
//! inner errors and stated in each report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jko::{solve_inner, InnerSolution, JkoConfig, JkoTrace};
use crate::measures::rng_from_seed;
use crate::objective::{
    discrepancy_value, subgrad_phi, Component, DecisionModel, Discrepancy, ProblemSpec,
};
use crate::solver::project;
use crate::transport::{map_l2_distance, TransportMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` over samples (positive means the inequality
    /// failed before tolerance).
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub inconclusive: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ProbeReport {
    fn from_margins(probe: &str, margins: &[f64], tolerance: f64) -> Self {
        let worst = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let violations = margins.iter().filter(|m| **m > tolerance).count();
        Self {
            probe: probe.to_string(),
            samples: margins.len(),
            violations,
            worst_margin: if margins.is_empty() { 0.0 } else { worst },
            tolerance,
            pass: violations == 0,
            inconclusive: false,
            notes: Vec::new(),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `V(φ)` by a solve at the configured certificate target.
pub fn value_function(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    config: &JkoConfig,
    start: Option<&[TransportMap]>,
) -> Result<InnerSolution> {
    solve_inner(spec, model, phi, config, start, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoreauGrad {
    /// `r·(φ - prox)`.
    pub gradient: Vec<f64>,
    pub prox: Vec<f64>,
    pub norm: f64,
    /// `V(prox) + (r/2)‖prox - φ‖²`, the Moreau envelope at φ.
    pub envelope: f64,
    pub v_prox: f64,
    /// Bound on the error of `gradient` from the inexact prox and inner solves.
    pub uncertainty: f64,
    pub certified: bool,
    pub iterations: usize,
}

/// Gradient of the Moreau envelope `V_{1/r}` at φ via the proximal point
/// `argmin_{u∈Φ} V(u) + (r/2)‖u - φ‖²`, computed by projected gradient
/// descent with inner solves at certificate `tol/10`.
pub fn moreau_grad(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    r: f64,
    tol: f64,
    inner: &JkoConfig,
) -> Result<MoreauGrad> {
    let rho = spec.constants().rho;
    if !(r > rho) {
        return Err(Error::Config(format!(
            "moreau parameter r = {r} must exceed rho = {rho}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("moreau tolerance must be positive".into()));
    }
    let cfg = inner.with_eps_prime(tol / 10.0);
    let constraint = &model.constraint;
    let objective = |u: &[f64], sol: &InnerSolution| {
        let d = diff(u, phi);
        sol.h + 0.5 * r * d.iter().map(|v| v * v).sum::<f64>()
    };
    let mut u = project(phi, constraint);
    let mut sol = value_function(spec, model, &u, &cfg, None)?;
    let mut f = objective(&u, &sol);
    let mut certified = sol.certified;
    let mut worst_stat = sol.stationarity;
    let mut step = 1.0 / (r + spec.constants().lipschitz.max(1.0));
    let mut gm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < 500 {
        let zeta = subgrad_phi(spec, model, &u, &sol.maps)?;
        let grad: Vec<f64> = zeta
            .iter()
            .zip(diff(&u, phi))
            .map(|(z, d)| z + r * d)
            .collect();
        gm = norm(&diff(
            &u,
            &project(
                &diff(&u, &grad.iter().map(|g| step * g).collect::<Vec<_>>()),
                constraint,
            ),
        )) / step;
        if gm <= tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = project(
                &diff(&u, &grad.iter().map(|g| step * g).collect::<Vec<_>>()),
                constraint,
            );
            let cand_sol = value_function(spec, model, &cand, &cfg, Some(&sol.maps))?;
            let fc = objective(&cand, &cand_sol);
            let delta = diff(&cand, &u);
            let model_decrease: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>()
                + delta.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            if fc <= f + model_decrease + 1e-14 * (1.0 + f.abs()) {
                certified &= cand_sol.certified;
                worst_stat = worst_stat.max(cand_sol.stationarity);
                u = cand;
                sol = cand_sol;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 1.5;
    }
    let gradient: Vec<f64> = phi.iter().zip(&u).map(|(a, b)| r * (a - b)).collect();
    let kappa = spec.kappa();
    let lip = spec.constants().lipschitz;
    let uncertainty = r * (gm + lip * worst_stat / kappa) / (r - rho);
    Ok(MoreauGrad {
        norm: norm(&gradient),
        gradient,
        envelope: f,
        v_prox: sol.h,
        prox: u,
        uncertainty,
        certified: certified && gm <= tol,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanskinReport {
    /// `max_j |ζ_j - fd_j| / max(‖ζ‖_∞, floor)`.
    pub rel_error: f64,
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub inconclusive: bool,
}

/// Floor on the relative-error denominator.
pub const DANSKIN_FLOOR: f64 = 1e-10;

/// Compares `∇_φ H(φ, Q*(φ))` with central differences of `V` at step `h`.
pub fn danskin_check(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    h: f64,
    inner: &JkoConfig,
) -> Result<DanskinReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(
            "finite-difference step must be positive".into(),
        ));
    }
    let center = value_function(spec, model, phi, inner, None)?;
    let analytic = subgrad_phi(spec, model, phi, &center.maps)?;
    let mut certified = center.certified;
    let mut fd = Vec::with_capacity(phi.len());
    for j in 0..phi.len() {
        let mut plus = phi.to_vec();
        let mut minus = phi.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let vp = value_function(spec, model, &plus, inner, Some(&center.maps))?;
        let vm = value_function(spec, model, &minus, inner, Some(&center.maps))?;
        certified &= vp.certified && vm.certified;
        fd.push((vp.h - vm.h) / (2.0 * h));
    }
    let scale = analytic
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(DANSKIN_FLOOR);
    let rel_error = analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max);
    Ok(DanskinReport {
        rel_error,
        analytic,
        finite_difference: fd,
        inconclusive: !certified,
    })
}

/// `V(αφ + (1-α)ψ) ≤ αV(φ) + (1-α)V(ψ) + ρα(1-α)/2·‖φ - ψ‖²` on random
/// triples drawn from Φ.
pub fn weak_convexity_probe(
    spec: &ProblemSpec,
    model: &DecisionModel,
    n_triples: usize,
    seed: u64,
    inner: &JkoConfig,
) -> Result<ProbeReport> {
    let rho = spec.constants().rho;
    let mut rng = rng_from_seed(seed);
    let mut margins = Vec::with_capacity(n_triples);
    let mut worst_eps: f64 = 0.0;
    let mut certified = true;
    for _ in 0..n_triples {
        let a = model.constraint.sample_point(&model.params, &mut rng);
        let b = model.constraint.sample_point(&model.params, &mut rng);
        let t: f64 = rng.random();
        let mix: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| t * x + (1.0 - t) * y)
            .collect();
        let va = value_function(spec, model, &a, inner, None)?;
        let vb = value_function(spec, model, &b, inner, None)?;
        let vm = value_function(spec, model, &mix, inner, None)?;
        for s in [&va, &vb, &vm] {
            worst_eps = worst_eps.max(s.eps);
            certified &= s.certified;
        }
        let gap = norm(&diff(&a, &b));
        let rhs = t * va.h + (1.0 - t) * vb.h + 0.5 * rho * t * (1.0 - t) * gap * gap;
        margins.push(vm.h - rhs);
    }
    let mut report = ProbeReport::from_margins("weak_convexity", &margins, 1e-6 + 3.0 * worst_eps);
    if !certified {
        report
            .notes
            .push("some inner solves were not certified".into());
    }
    Ok(report)
}

fn random_map(comp: &Component, rng: &mut impl Rng) -> Result<TransportMap> {
    use rand_distr::StandardNormal;
    let template = comp.map();
    let d = template.dim();
    match (comp.discrepancy(), template) {
        (Discrepancy::KlGaussAffine, _) => {
            // Random SPD matrix with spectrum in [0.5, 2] keeps log det concave
            // along the segment.
            let g = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
            let q = g.qr().q();
            let spectrum = nalgebra::DVector::from_fn(d, |_, _| 0.5 + 1.5 * rng.random::<f64>());
            let a = &q * nalgebra::DMatrix::from_diagonal(&spectrum) * q.transpose();
            let mut theta: Vec<f64> = (0..d * d).map(|k| a[(k / d, k % d)]).collect();
            theta.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            template.with_params(&theta)
        }
        (_, TransportMap::Affine { .. }) => {
            let mut theta = vec![0.0; d * d + d];
            for (k, v) in theta.iter_mut().enumerate() {
                let eye = if k < d * d && k / d == k % d {
                    1.0
                } else {
                    0.0
                };
                *v = eye + 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
            template.with_params(&theta)
        }
        _ => {
            let theta: Vec<f64> = (0..template.n_params())
                .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            template.with_params(&theta)
        }
    }
}

/// Squared map distance used by the a.g.g. probe: the population value for
/// closed-form KL components, the particle value otherwise.
fn probe_distance_sq(comp: &Component, t1: &TransportMap, t2: &TransportMap) -> Result<f64> {
    if comp.discrepancy() == Discrepancy::KlGaussAffine {
        let (mean, cov) = comp
            .reference()
            .and_then(|r| r.as_gaussian())
            .ok_or_else(|| Error::Config("kl_gauss_affine requires a gaussian reference".into()))?;
        let d = mean.len();
        let (p1, p2) = (t1.params(), t2.params());
        let delta = diff(&p1, &p2);
        let mut total = 0.0;
        for j in 0..d {
            let row = &delta[j * d..(j + 1) * d];
            let shift = delta[d * d + j] + row.iter().zip(mean).map(|(a, m)| a * m).sum::<f64>();
            total += shift * shift + row.iter().zip(cov).map(|(a, c)| a * a * c).sum::<f64>();
        }
        Ok(total)
    } else {
        let d = map_l2_distance(t1, t2, comp.cloud())?;
        Ok(d * d)
    }
}

/// Strong convexity of `λ·D` along generalized geodesics centered at the
/// reference: `λD(T_t) ≤ (1-t)λD(T₁) + tλD(T₂) - (λμ/2)t(1-t)‖T₁ - T₂‖²`
/// with `T_t = (1-t)T₁ + tT₂` and `t ∈ {0.1, …, 0.9}`.
pub fn agg_convexity_probe(
    comp: &Component,
    lambda: f64,
    n_curves: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let mut rng = rng_from_seed(seed);
    let strength = lambda * comp.modulus();
    let mut margins = Vec::with_capacity(n_curves * 9);
    for _ in 0..n_curves {
        let t1 = random_map(comp, &mut rng)?;
        let t2 = random_map(comp, &mut rng)?;
        let d1 = lambda * discrepancy_value(comp, &t1)?;
        let d2 = lambda * discrepancy_value(comp, &t2)?;
        let dist_sq = probe_distance_sq(comp, &t1, &t2)?;
        let (p1, p2) = (t1.params(), t2.params());
        for step in 1..=9 {
            let t = f64::from(step) / 10.0;
            let theta: Vec<f64> = p1
                .iter()
                .zip(&p2)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
            let mid = t1.with_params(&theta)?;
            let dt = lambda * discrepancy_value(comp, &mid)?;
            let rhs = (1.0 - t) * d1 + t * d2 - 0.5 * strength * t * (1.0 - t) * dist_sq;
            margins.push(dt - rhs);
        }
    }
    let name = match comp.discrepancy() {
        Discrepancy::W2Sq => "agg_convexity_w2sq",
        Discrepancy::KlGaussAffine => "agg_convexity_kl",
    };
    Ok(ProbeReport::from_margins(name, &margins, 1e-8))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// Fitted per-step factor of `dist² - floor` over the pre-floor regime.
    pub empirical_rate: Option<f64>,
    /// `(1 + γκ/2)⁻¹`.
    pub bound_rate: f64,
    /// `4ε′²/κ²`.
    pub floor: f64,
    /// Largest `dist²ᵢ / bound_i`.
    pub worst_ratio: f64,
    pub pass: bool,
    /// Fewer than three points above twice the floor.
    pub floor_dominated: bool,
    /// Fewer than three trace rows.
    pub inconclusive: bool,
}

/// Slack on the contraction bound.
pub const CONTRACTION_SLACK: f64 = 1.05;

/// Checks `dist²ᵢ ≤ 1.05·[(1 + γκ/2)⁻ⁱ dist²₀ + 4ε′²/κ²]` along a trace
/// carrying distances to the optimum.
pub fn contraction_fit(
    trace: &JkoTrace,
    kappa: f64,
    gamma: f64,
    eps_prime: f64,
) -> Result<ContractionFit> {
    let dist_sq: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.dist_to_opt.map(|d| d * d))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Config("contraction fit needs distances to the optimum".into()))?;
    let bound_rate = 1.0 / (1.0 + gamma * kappa / 2.0);
    let floor = 4.0 * eps_prime * eps_prime / (kappa * kappa);
    if dist_sq.len() < 3 {
        return Ok(ContractionFit {
            empirical_rate: None,
            bound_rate,
            floor,
            worst_ratio: f64::NAN,
            pass: false,
            floor_dominated: false,
            inconclusive: true,
        });
    }
    let d0 = dist_sq[0];
    let mut worst_ratio: f64 = 0.0;
    for (i, d) in dist_sq.iter().enumerate() {
        let bound = bound_rate.powi(i as i32) * d0 + floor;
        let ratio = if bound > 0.0 {
            d / bound
        } else if *d > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst_ratio = worst_ratio.max(ratio);
    }
    let pre: Vec<(f64, f64)> = dist_sq
        .iter()
        .enumerate()
        .take_while(|(_, d)| **d > 2.0 * floor && **d > 0.0)
        .map(|(i, d)| (i as f64, (d - floor).ln()))
        .collect();
    let empirical_rate = if pre.len() >= 3 {
        let n = pre.len() as f64;
        let mx = pre.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pre.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pre.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pre.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some((sxy / sxx).exp())
    } else {
        None
    };
    Ok(ContractionFit {
        floor_dominated: empirical_rate.is_none(),
        empirical_rate,
        bound_rate,
        floor,
        worst_ratio,
        pass: worst_ratio <= CONTRACTION_SLACK,
        inconclusive: false,
    })
}

/// `(2λμ - L)/(λμ - L)`.
pub fn solution_lipschitz_constant(spec: &ProblemSpec) -> Result<f64> {
    let lm = spec.lambda_mu();
    let l = spec.constants().lipschitz;
    if !(lm > l) {
        return Err(Error::Config(format!(
            "lipschitz probe needs lambda*modulus > L (lambda*modulus = {lm}, L = {l})"
        )));
    }
    Ok((2.0 * lm - l) / (lm - l))
}

fn maps_distance(spec: &ProblemSpec, a: &[TransportMap], b: &[TransportMap]) -> Result<f64> {
    let mut total = 0.0;
    for ((comp, ta), tb) in spec.components().iter().zip(a).zip(b) {
        let d = map_l2_distance(ta, tb, comp.cloud())?;
        total += d * d;
    }
    Ok(total.sqrt())
}

/// `W_ν(Q*(φ₁), Q*(φ₂)) ≤ (2λμ - L)/(λμ - L)·‖φ₁ - φ₂‖` on nearby pairs in Φ,
/// with slack `2·max stationarity / κ` for the inexact maximizers.
pub fn solution_lipschitz_probe(
    spec: &ProblemSpec,
    model: &DecisionModel,
    pairs: usize,
    radius: f64,
    seed: u64,
    inner: &JkoConfig,
) -> Result<ProbeReport> {
    let constant = solution_lipschitz_constant(spec)?;
    let kappa = spec.kappa();
    let mut rng = rng_from_seed(seed);
    let mut margins = Vec::with_capacity(pairs);
    let mut worst_stat: f64 = 0.0;
    let mut certified = true;
    for _ in 0..pairs {
        let a = model.constraint.sample_point(&model.params, &mut rng);
        let dir = crate::objective::Constraint::Ball { radius }.sample_point(&a, &mut rng);
        let b = project(
            &a.iter().zip(&dir).map(|(x, y)| x + y).collect::<Vec<_>>(),
            &model.constraint,
        );
        let sa = value_function(spec, model, &a, inner, None)?;
        let sb = value_function(spec, model, &b, inner, Some(&sa.maps))?;
        certified &= sa.certified && sb.certified;
        worst_stat = worst_stat.max(sa.stationarity).max(sb.stationarity);
        let dist = maps_distance(spec, &sa.maps, &sb.maps)?;
        margins.push(dist - constant * norm(&diff(&a, &b)));
    }
    let mut report =
        ProbeReport::from_margins("solution_lipschitz", &margins, 2.0 * worst_stat / kappa);
    let c = spec.constants();
    if c.rho != c.lipschitz {
        report.notes.push(format!(
            "rho = {} differs from L = {}; constant uses L",
            c.rho, c.lipschitz
        ));
    }
    if !certified {
        report.inconclusive = true;
        report
            .notes
            .push("some inner solves were not certified".into());
    }
    Ok(report)
}

/// `(1/η + L)·‖proj_Φ(φ - η∇_φH(φ, Q*(φ))) - φ‖`.
pub fn gradient_mapping_norm(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    eta: f64,
    inner: &JkoConfig,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::Config("eta must be positive".into()));
    }
    let sol = value_function(spec, model, phi, inner, None)?;
    let zeta = subgrad_phi(spec, model, phi, &sol.maps)?;
    let trial: Vec<f64> = phi.iter().zip(&zeta).map(|(p, z)| p - eta * z).collect();
    let next = project(&trial, &model.constraint);
    Ok((1.0 / eta + spec.constants().lipschitz) * norm(&diff(&next, phi)))
}

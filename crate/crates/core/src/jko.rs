//! Proximal (JKO-type) scheme for the inner maximization over `Q`.
//!
//! Step `i` maximizes over map parameters θ
//!
//! ```text
//! Σ_c E_P[ℓ(f_φ, T_θ(ξ))] - λ·D(T_θ#P, P) - (1/2γ)·E_P‖T_θ(ξ) - T_θᵢ(ξ)‖²
//! ```
//!
//! by deterministic full-batch gradient ascent in θ. The step certificate is
//! the weighted L² norm of the first-variation field at the new particles.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{
    accumulate_field_sq, evaluate_component, DecisionModel, Discrepancy, LossKind, Pass,
    ProblemSpec,
};
use crate::transport::{points_l2_distance, MapPlan, TransportMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerOptimizer {
    Plain,
    /// Heavy-ball momentum; restarted whenever the direction stops descending.
    Momentum {
        beta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub optimizer: InnerOptimizer,
    /// Initial step size; adapted by backtracking.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the θ-gradient norm falls below this.
    pub grad_tol: f64,
    /// Take gradient steps in the `L²(P)` metric of the transported
    /// particles instead of the Euclidean metric on θ.
    pub metric: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            optimizer: InnerOptimizer::Plain,
            step_size: 0.5,
            max_iters: 2000,
            grad_tol: 1e-14,
            metric: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JkoConfig {
    /// Proximal step γ; `None` resolves to `1/κ`.
    pub gamma: Option<f64>,
    /// Budget of JKO steps per inner solve.
    pub max_steps: usize,
    /// Certificate target ε′.
    pub eps_prime: f64,
    pub inner: InnerConfig,
    pub warm_start: bool,
}

impl Default for JkoConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            max_steps: 100,
            eps_prime: 1e-4,
            inner: InnerConfig::default(),
            warm_start: true,
        }
    }
}

impl JkoConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.eps_prime >= 0.0) {
            return Err(Error::Config("eps_prime must be nonnegative".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.inner.step_size.is_finite() && self.inner.step_size > 0.0) {
            return Err(Error::Config("inner step size must be positive".into()));
        }
        if self.inner.max_iters == 0 {
            return Err(Error::Config("inner max_iters must be at least 1".into()));
        }
        if let InnerOptimizer::Momentum { beta } = self.inner.optimizer {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config("momentum beta must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn resolved_gamma(&self, spec: &ProblemSpec) -> f64 {
        self.gamma.unwrap_or_else(|| 1.0 / spec.kappa())
    }

    /// Same configuration with a different certificate target.
    pub fn with_eps_prime(&self, eps_prime: f64) -> Self {
        Self { eps_prime, ..*self }
    }
}

/// Result of one JKO step.
#[derive(Debug, Clone)]
pub struct JkoStep {
    pub maps: Vec<TransportMap>,
    /// `‖g‖_{Q_{i+1}}` with the proximal term anchored at the previous maps.
    pub certificate: f64,
    pub inner_iters: usize,
    /// `H(φ, Q_{i+1})`.
    pub h: f64,
    /// `W_ν(Q_{i+1}, Q_i)` realized as the map L² distance.
    pub step_dist: f64,
}

/// Objective evaluator over fixed plans, optionally anchored at previous
/// particles.
struct Evaluator<'a> {
    spec: &'a ProblemSpec,
    model: &'a DecisionModel,
    phi: &'a [f64],
    plans: Arc<Vec<MapPlan>>,
    anchor: Option<(Vec<Vec<f64>>, f64)>,
}

struct Eval {
    /// `-H + prox/(2γ)`, minimized.
    j: f64,
    h: f64,
    passes: Vec<Pass>,
    points: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(
        spec: &'a ProblemSpec,
        model: &'a DecisionModel,
        phi: &'a [f64],
        maps: &[TransportMap],
        plans: Option<Arc<Vec<MapPlan>>>,
        anchor: Option<(&[TransportMap], f64)>,
    ) -> Result<Self> {
        spec.check_call(model, phi, maps)?;
        let plans = match plans {
            Some(p) => p,
            None => Arc::new(spec.plans(maps)?),
        };
        let mut ev = Self {
            spec,
            model,
            phi,
            plans,
            anchor: None,
        };
        if let Some((prev, gamma)) = anchor {
            spec.check_call(model, phi, prev)?;
            ev.anchor = Some((ev.push(prev), gamma));
        }
        Ok(ev)
    }

    fn push(&self, maps: &[TransportMap]) -> Vec<Vec<f64>> {
        self.plans
            .iter()
            .zip(maps)
            .zip(self.spec.components())
            .map(|((p, m), c)| p.push(m, c.cloud()))
            .collect()
    }

    fn eval(&self, maps: &[TransportMap], want_grad: bool) -> Result<Eval> {
        let points = self.push(maps);
        let lambda = self.spec.lambda();
        let mut passes = Vec::with_capacity(maps.len());
        let mut j = 0.0;
        let mut h = 0.0;
        for (c, comp) in self.spec.components().iter().enumerate() {
            let prox = self.anchor.as_ref().map(|(a, g)| (a[c].as_slice(), *g));
            let pass = evaluate_component(
                comp,
                &self.model.kind,
                self.phi,
                lambda,
                &maps[c],
                &points[c],
                prox,
                want_grad,
            )?;
            h += pass.h(lambda);
            j -= pass.h(lambda);
            if let Some((_, g)) = prox {
                j += pass.prox_sq / (2.0 * g);
            }
            passes.push(pass);
        }
        Ok(Eval {
            j,
            h,
            passes,
            points,
        })
    }

    /// Descent direction in the metric of each plan.
    fn precondition(&self, grad: &mut [Vec<f64>]) {
        for (plan, g) in self.plans.iter().zip(grad.iter_mut()) {
            plan.precondition(g);
        }
    }

    /// θ-gradient of `j` per component.
    fn theta_grad(&self, passes: &[Pass]) -> Vec<Vec<f64>> {
        self.spec
            .components()
            .iter()
            .zip(self.plans.iter())
            .zip(passes)
            .map(|((comp, plan), pass)| {
                let mut g = plan.param_gradient(comp.cloud(), comp.cloud().weights(), &pass.cot);
                for (gk, dk) in g.iter_mut().zip(&pass.kl_theta) {
                    *gk += dk;
                }
                g
            })
            .collect()
    }

    fn certificate(&self, passes: &[Pass]) -> f64 {
        let mut total = 0.0;
        for (comp, pass) in self.spec.components().iter().zip(passes) {
            accumulate_field_sq(
                &mut total,
                comp.cloud().weights(),
                &pass.field(),
                comp.cloud().dim(),
            );
        }
        total.sqrt()
    }

    fn distance(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for ((comp, pa), pb) in self.spec.components().iter().zip(a).zip(b) {
            let d = points_l2_distance(pa, pb, comp.cloud().weights(), comp.cloud().dim());
            total += d * d;
        }
        total.sqrt()
    }
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

fn stepped(maps: &[TransportMap], dir: &[Vec<f64>], s: f64) -> Vec<TransportMap> {
    maps.iter()
        .zip(dir)
        .map(|(m, d)| {
            let theta: Vec<f64> = m.params().iter().zip(d).map(|(t, g)| t - s * g).collect();
            let mut out = m.clone();
            out.set_params(&theta);
            out
        })
        .collect()
}

/// Backtracking attempts before a step is declared stalled.
const MAX_BACKTRACK: usize = 60;
/// Relative objective change treated as rounding noise. Within it, a trial is
/// accepted if it lowers the certificate.
const ROUNDOFF: f64 = 1e-13;

/// One JKO step from `maps` with proximal step `gamma`.
pub fn jko_step(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
    gamma: f64,
    config: &JkoConfig,
) -> Result<JkoStep> {
    config.validate()?;
    step_with_plans(spec, model, phi, maps, gamma, config, None)
}

fn step_with_plans(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    maps: &[TransportMap],
    gamma: f64,
    config: &JkoConfig,
    plans: Option<Arc<Vec<MapPlan>>>,
) -> Result<JkoStep> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let ev = Evaluator::new(spec, model, phi, maps, plans, Some((maps, gamma)))?;
    let inner = &config.inner;
    let mut cur_maps = maps.to_vec();
    let mut cur = ev.eval(&cur_maps, true)?;
    let mut history = vec![cur.j];
    if !cur.j.is_finite() {
        return Err(Error::Diverged {
            iterations: 0,
            history,
        });
    }
    let mut cert = ev.certificate(&cur.passes);
    let mut step = inner.step_size;
    let mut velocity: Option<Vec<Vec<f64>>> = None;
    let mut iters = 0;
    while iters < inner.max_iters && cert > config.eps_prime {
        let grad = ev.theta_grad(&cur.passes);
        let gnorm_sq = dot(&grad, &grad);
        if gnorm_sq.sqrt() <= inner.grad_tol {
            break;
        }
        let mut steepest = grad.clone();
        if inner.metric {
            ev.precondition(&mut steepest);
        }
        let mut dir = match (inner.optimizer, velocity.take()) {
            (InnerOptimizer::Momentum { beta }, Some(v)) => v
                .iter()
                .zip(&steepest)
                .map(|(vc, gc)| vc.iter().zip(gc).map(|(a, b)| beta * a + b).collect())
                .collect(),
            _ => steepest.clone(),
        };
        let mut slope = dot(&grad, &dir);
        if !(slope > 0.0) {
            dir = grad.clone();
            slope = gnorm_sq;
        }
        iters += 1;
        let mut accepted = None;
        let mut all_nonfinite = true;
        for _ in 0..MAX_BACKTRACK {
            let trial_maps = stepped(&cur_maps, &dir, step);
            match ev.eval(&trial_maps, true) {
                Ok(trial)
                    if trial.j.is_finite()
                        && (trial.j <= cur.j - 1e-4 * step * slope
                            || (trial.j <= cur.j + ROUNDOFF * (1.0 + cur.j.abs())
                                && ev.certificate(&trial.passes) < cert)) =>
                {
                    accepted = Some((trial_maps, trial));
                    break;
                }
                Ok(trial) => {
                    all_nonfinite &= !trial.j.is_finite();
                    history.push(trial.j);
                }
                Err(Error::Validation(_)) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            velocity = None;
        }
        let Some((next_maps, next)) = accepted else {
            if all_nonfinite {
                return Err(Error::Diverged {
                    iterations: iters,
                    history,
                });
            }
            break;
        };
        if matches!(inner.optimizer, InnerOptimizer::Momentum { .. }) {
            velocity = Some(dir);
        }
        cur_maps = next_maps;
        cur = next;
        history.push(cur.j);
        cert = ev.certificate(&cur.passes);
        step *= 1.5;
    }
    let start = ev
        .anchor
        .as_ref()
        .map(|(a, _)| a.as_slice())
        .unwrap_or_default();
    let step_dist = ev.distance(&cur.points, start);
    Ok(JkoStep {
        maps: cur_maps,
        certificate: cert,
        inner_iters: iters,
        h: cur.h,
        step_dist,
    })
}

/// One row of a [`JkoTrace`]; row 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JkoRecord {
    pub i: usize,
    pub h: f64,
    pub certificate: Option<f64>,
    pub step_dist: Option<f64>,
    pub dist_to_opt: Option<f64>,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JkoTrace {
    pub records: Vec<JkoRecord>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl JkoTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// JKO steps taken (rows after the starting point).
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,H,certificate,step_dist,dist_to_opt\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.17e},{},{},{}",
                r.i,
                r.h,
                opt_cell(r.certificate),
                opt_cell(r.step_dist),
                opt_cell(r.dist_to_opt)
            );
        }
        out
    }
}

/// Outcome of an inner solve.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub maps: Vec<TransportMap>,
    pub h: f64,
    /// Suboptimality estimate `(5/(2γ) + κ)(ε′/κ)²` with ε′ the worst
    /// certificate met.
    pub eps: f64,
    /// Largest per-step certificate.
    pub max_certificate: f64,
    /// Field norm without the proximal term at the returned maps.
    pub stationarity: f64,
    pub certified: bool,
    pub gamma: f64,
    pub trace: JkoTrace,
}

impl InnerSolution {
    pub fn steps(&self) -> usize {
        self.trace.steps()
    }
}

/// Runs JKO steps until the unanchored field norm at the current maps drops
/// below ε′ (at least one step is always taken).
///
/// `start` is used when `config.warm_start` is set; otherwise the solve
/// starts from identity maps. `optimum`, when known, fills `dist_to_opt`.
pub fn solve_inner(
    spec: &ProblemSpec,
    model: &DecisionModel,
    phi: &[f64],
    config: &JkoConfig,
    start: Option<&[TransportMap]>,
    optimum: Option<&[TransportMap]>,
) -> Result<InnerSolution> {
    config.validate()?;
    let gamma = config.resolved_gamma(spec);
    let kappa = spec.kappa();
    let mut maps = match start {
        Some(m) if config.warm_start => m.to_vec(),
        _ => spec.identity_maps(),
    };
    let free = Evaluator::new(spec, model, phi, &maps, None, None)?;
    let opt_points = optimum.map(|o| free.push(o));
    let dist_opt = |points: &[Vec<f64>]| opt_points.as_ref().map(|o| free.distance(points, o));

    let first = free.eval(&maps, false)?;
    let mut trace = JkoTrace {
        records: vec![JkoRecord {
            i: 0,
            h: first.h,
            certificate: None,
            step_dist: None,
            dist_to_opt: dist_opt(&first.points),
            inner_iters: 0,
        }],
    };
    let mut max_cert: f64 = 0.0;
    let mut best: Option<(f64, Vec<TransportMap>, f64)> = None;
    let mut stationarity = f64::INFINITY;
    for i in 1..=config.max_steps {
        let step = step_with_plans(
            spec,
            model,
            phi,
            &maps,
            gamma,
            config,
            Some(free.plans.clone()),
        )?;
        max_cert = max_cert.max(step.certificate);
        maps = step.maps;
        let now = free.eval(&maps, true)?;
        stationarity = free.certificate(&now.passes);
        trace.records.push(JkoRecord {
            i,
            h: step.h,
            certificate: Some(step.certificate),
            step_dist: Some(step.step_dist),
            dist_to_opt: dist_opt(&now.points),
            inner_iters: step.inner_iters,
        });
        if best.as_ref().is_none_or(|(s, _, _)| stationarity < *s) {
            best = Some((stationarity, maps.clone(), step.h));
        }
        if stationarity <= config.eps_prime {
            break;
        }
    }
    let (best_stat, best_maps, h) = best.expect("at least one step");
    let certified = max_cert <= config.eps_prime && stationarity <= config.eps_prime;
    let eps_eff = max_cert.max(best_stat);
    Ok(InnerSolution {
        maps: best_maps,
        h,
        eps: (2.5 / gamma + kappa) * (eps_eff / kappa).powi(2),
        max_certificate: max_cert,
        stationarity: best_stat,
        certified,
        gamma,
        trace,
    })
}

/// Closed-form least favorable maps when every component pairs a quadratic
/// `ξ`-loss with `W2Sq` on the affine family: `T*(ξ) = 2λ/(2λ - α)·ξ`.
pub fn analytic_optimum(spec: &ProblemSpec) -> Option<Vec<TransportMap>> {
    let lambda = spec.lambda();
    spec.components()
        .iter()
        .map(|c| {
            let alpha = match c.loss() {
                LossKind::QuadraticTest { alpha } | LossKind::ParamQuadratic { alpha, .. } => {
                    *alpha
                }
                _ => return None,
            };
            if c.discrepancy() != Discrepancy::W2Sq
                || !matches!(c.map(), TransportMap::Affine { .. })
            {
                return None;
            }
            if 2.0 * lambda <= alpha {
                return None;
            }
            let d = c.cloud().dim();
            Some(TransportMap::scaled_shift(
                2.0 * lambda / (2.0 * lambda - alpha),
                vec![0.0; d],
            ))
        })
        .collect()
}

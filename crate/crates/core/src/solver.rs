//! Outer projected-subgradient loop over φ.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jko::{analytic_optimum, solve_inner, JkoConfig, JkoTrace};
use crate::objective::{subgrad_phi, Constraint, DecisionModel, ProblemSpec};
use crate::transport::TransportMap;

/// Euclidean projection onto Φ.
pub fn project(phi: &[f64], constraint: &Constraint) -> Vec<f64> {
    constraint.project(phi)
}

/// Outer step size η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EtaRepr", into = "EtaRepr")]
pub enum StepSize {
    /// `1/√K`, or the smooth-case constant when `smooth_mode` is set.
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EtaRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<EtaRepr> for StepSize {
    type Error = String;

    fn try_from(v: EtaRepr) -> std::result::Result<Self, String> {
        match v {
            EtaRepr::Number(x) => Ok(StepSize::Fixed(x)),
            EtaRepr::Word(w) if w == "auto" => Ok(StepSize::Auto),
            EtaRepr::Word(w) => Err(format!("eta must be a number or \"auto\", got \"{w}\"")),
        }
    }
}

impl From<StepSize> for EtaRepr {
    fn from(s: StepSize) -> Self {
        match s {
            StepSize::Auto => EtaRepr::Word("auto".into()),
            StepSize::Fixed(x) => EtaRepr::Number(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    /// Number of outer iterations K.
    pub k: usize,
    #[serde(default = "auto")]
    pub eta: StepSize,
    #[serde(default)]
    pub smooth_mode: bool,
    #[serde(default)]
    pub inner: JkoConfig,
    #[serde(default)]
    pub seed: u64,
}

fn auto() -> StepSize {
    StepSize::Auto
}

impl OuterConfig {
    pub fn new(k: usize, eta: StepSize, inner: JkoConfig) -> Self {
        Self {
            k,
            eta,
            smooth_mode: false,
            inner,
            seed: 0,
        }
    }

    pub fn resolve_eta(&self, spec: &ProblemSpec) -> Result<f64> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let eta = match self.eta {
            StepSize::Fixed(e) => e,
            StepSize::Auto if self.smooth_mode => smooth_eta(spec)?,
            StepSize::Auto => 1.0 / (self.k as f64).sqrt(),
        };
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {eta}"
            )));
        }
        Ok(eta)
    }
}

/// `η = (λμ - L) / (2(4λμ - 3L)L)`.
pub fn smooth_eta(spec: &ProblemSpec) -> Result<f64> {
    let lm = spec.lambda_mu();
    let l = spec.constants().lipschitz;
    if !(l > 0.0 && lm > l) {
        return Err(Error::Config(format!(
            "smooth step size needs 0 < L < lambda*modulus (L = {l}, lambda*modulus = {lm})"
        )));
    }
    Ok((lm - l) / (2.0 * (4.0 * lm - 3.0 * l) * l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub phi: Vec<f64>,
    pub zeta_norm: f64,
    /// `H(φ_k, Q_k)`.
    pub h: f64,
    /// Worst JKO step certificate of the inner solve.
    pub certificate: f64,
    /// Suboptimality estimate of `Q_k`.
    pub eps: f64,
    pub certified: bool,
    pub jko_steps: usize,
    /// `‖φ_{k+1} - φ_k‖`.
    pub step_norm: f64,
    /// `‖φ_k - proj(φ_k - ηζ_k)‖ / η`.
    pub grad_map: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub eta: f64,
    pub records: Vec<OuterRecord>,
    #[serde(skip)]
    pub inner_traces: Vec<JkoTrace>,
}

/// Terminal accounting of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    /// Iterate with the smallest gradient-mapping surrogate.
    pub best_k: usize,
    pub best_grad_map: f64,
    /// Subgradient oracle calls (one per outer step).
    pub calls: usize,
    pub jko_steps: usize,
    /// Every inner solve was certified.
    pub certified: bool,
}

impl SolveTrace {
    pub fn terminal(&self) -> Terminal {
        let best = self
            .records
            .iter()
            .min_by(|a, b| a.grad_map.total_cmp(&b.grad_map))
            .expect("non-empty trace");
        Terminal {
            best_k: best.k,
            best_grad_map: best.grad_map,
            calls: self.records.len(),
            jko_steps: self.records.iter().map(|r| r.jko_steps).sum(),
            certified: self.records.iter().all(|r| r.certified),
        }
    }

    pub fn to_csv(&self) -> String {
        let p = self.records.first().map_or(0, |r| r.phi.len());
        let mut out = String::from("k");
        for j in 0..p {
            let _ = write!(out, ",phi_{j}");
        }
        out.push_str(",zeta_norm,H,certificate,eps,step_norm,grad_map,certified,jko_steps\n");
        for r in &self.records {
            let _ = write!(out, "{}", r.k);
            for v in &r.phi {
                let _ = write!(out, ",{v:.17e}");
            }
            let _ = writeln!(
                out,
                ",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
                r.zeta_norm,
                r.h,
                r.certificate,
                r.eps,
                r.step_norm,
                r.grad_map,
                r.certified,
                r.jko_steps
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct OuterRun {
    /// `φ_K`.
    pub phi: Vec<f64>,
    /// Final inner maps `Q_{K-1}`.
    pub maps: Vec<TransportMap>,
    pub trace: SolveTrace,
}

impl OuterRun {
    pub fn best_phi(&self) -> &[f64] {
        &self.trace.records[self.trace.terminal().best_k].phi
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs exactly K steps of `φ_{k+1} = proj_Φ(φ_k - η ζ(φ_k, Q_k))`, where
/// `Q_k` is an approximate inner maximizer from the JKO scheme.
pub fn run_outer(
    spec: &ProblemSpec,
    model: &DecisionModel,
    config: &OuterConfig,
) -> Result<OuterRun> {
    spec.check_model(model)?;
    config.inner.validate()?;
    let eta = config.resolve_eta(spec)?;
    let optimum = analytic_optimum(spec);
    let mut phi = project(&model.params, &model.constraint);
    let mut maps: Option<Vec<TransportMap>> = None;
    let mut trace = SolveTrace {
        eta,
        ..Default::default()
    };
    for k in 0..config.k {
        let started = Instant::now();
        let sol = solve_inner(
            spec,
            model,
            &phi,
            &config.inner,
            maps.as_deref(),
            optimum.as_deref(),
        )?;
        let zeta = subgrad_phi(spec, model, &phi, &sol.maps)?;
        let trial: Vec<f64> = phi.iter().zip(&zeta).map(|(p, z)| p - eta * z).collect();
        let next = project(&trial, &model.constraint);
        let step: Vec<f64> = next.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let step_norm = norm(&step);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iterations: k,
                history: trace.records.iter().map(|r| r.h).collect(),
            });
        }
        log::debug!(
            "outer k={k} H={:.6e} |zeta|={:.3e} steps={} certified={}",
            sol.h,
            norm(&zeta),
            sol.steps(),
            sol.certified
        );
        trace.records.push(OuterRecord {
            k,
            phi: phi.clone(),
            zeta_norm: norm(&zeta),
            h: sol.h,
            certificate: sol.max_certificate,
            eps: sol.eps,
            certified: sol.certified,
            jko_steps: sol.steps(),
            step_norm,
            grad_map: step_norm / eta,
            wall_time: started.elapsed(),
        });
        trace.inner_traces.push(sol.trace);
        maps = Some(sol.maps);
        phi = next;
    }
    Ok(OuterRun {
        phi,
        maps: maps.expect("K >= 1"),
        trace,
    })
}

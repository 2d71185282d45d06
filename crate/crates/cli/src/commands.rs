use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use wass_dro::diagnostics::{
    agg_convexity_probe, contraction_fit, danskin_check, gradient_mapping_norm, moreau_grad,
    solution_lipschitz_probe, weak_convexity_probe,
};
use wass_dro::jko::{analytic_optimum, solve_inner, JkoConfig};
use wass_dro::measures::load_csv;
use wass_dro::solver::{run_outer, OuterRun};
use wass_dro::transport::exact_w2_empirical;
use wass_dro::RNG_NAME;

use crate::config::{ExperimentConfig, Mode, ProbeConfig, SweepParameter, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCERTIFIED: i32 = 2;
pub const EXIT_PROBE_FAILED: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

pub const BUILD_ID: &str = env!("WASS_DRO_BUILD_ID");

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub build_id: String,
    pub rng: String,
    pub seed: u64,
    pub eta: f64,
    pub k: usize,
    pub best_k: usize,
    /// Gradient-mapping surrogate of the Moreau gradient at `best_k`.
    pub best_grad_map: f64,
    pub best_phi: Vec<f64>,
    pub final_phi: Vec<f64>,
    pub final_h: f64,
    pub calls: usize,
    pub jko_steps: usize,
    pub certified: bool,
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => cfg
            .output_dir
            .as_ref()
            .map(|p| cfg.resolve(p))
            .context("no output directory: pass --output or set `output_dir`")?,
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Solve once and write the run artifacts into `dir`.
fn execute_run(cfg: &ExperimentConfig, dir: &Path) -> Result<(OuterRun, Summary)> {
    let tb = cfg.build()?;
    let outer = cfg.outer_config()?;
    log::info!("run: K={} seed={} -> {}", outer.k, cfg.seed, dir.display());
    let run = run_outer(&tb.spec, &tb.model, &outer)?;
    let term = run.trace.terminal();
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        build_id: BUILD_ID.to_string(),
        rng: RNG_NAME.to_string(),
        seed: cfg.seed,
        eta: run.trace.eta,
        k: outer.k,
        best_k: term.best_k,
        best_grad_map: term.best_grad_map,
        best_phi: run.best_phi().to_vec(),
        final_phi: run.phi.clone(),
        final_h: run.trace.records.last().map_or(f64::NAN, |r| r.h),
        calls: term.calls,
        jko_steps: term.jko_steps,
        certified: term.certified,
    };
    fs::write(dir.join("trace.csv"), run.trace.to_csv())?;
    let mut jko = String::from("k,i,H,certificate,step_dist,dist_to_opt\n");
    for (k, t) in run.trace.inner_traces.iter().enumerate() {
        for line in t.to_csv().lines().skip(1) {
            let _ = writeln!(jko, "{k},{line}");
        }
    }
    fs::write(dir.join("jko_trace.csv"), jko)?;
    write_json(&dir.join("summary.json"), &summary)?;
    let mut model = tb.model.clone();
    model.params = run.phi.clone();
    write_json(&dir.join("final_model.json"), &model)?;
    write_json(&dir.join("final_maps.json"), &run.maps)?;
    Ok((run, summary))
}

pub fn cmd_run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<i32> {
    cfg.check_mode(Mode::Run)?;
    let dir = output_dir(cfg, out)?;
    let (_, summary) = execute_run(cfg, &dir)?;
    if summary.certified {
        Ok(EXIT_OK)
    } else {
        log::warn!("some inner solves were not certified");
        Ok(EXIT_UNCERTIFIED)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub probe: String,
    pub pass: bool,
    pub inconclusive: bool,
    pub report: Value,
}

fn outcome<T: Serialize>(
    probe: &str,
    pass: bool,
    inconclusive: bool,
    report: &T,
) -> Result<ProbeOutcome> {
    Ok(ProbeOutcome {
        probe: probe.to_string(),
        pass,
        inconclusive,
        report: serde_json::to_value(report)?,
    })
}

pub fn run_probes(cfg: &ExperimentConfig) -> Result<Vec<ProbeOutcome>> {
    if cfg.probes.is_empty() {
        return Ok(Vec::new());
    }
    let tb = cfg.build()?;
    let (spec, model) = (&tb.spec, &tb.model);
    let inner: &JkoConfig = &cfg.inner;
    let seed_or = |s: Option<u64>| s.unwrap_or(cfg.seed);
    let phi_or = |p: &Option<Vec<f64>>| p.clone().unwrap_or_else(|| model.params.clone());
    let mut outcomes = Vec::with_capacity(cfg.probes.len());
    for probe in &cfg.probes {
        log::info!("probe {probe:?}");
        let o = match probe {
            ProbeConfig::WeakConvexity { n_triples, seed } => {
                let r = weak_convexity_probe(spec, model, *n_triples, seed_or(*seed), inner)?;
                outcome(&r.probe, r.pass, r.inconclusive, &r)?
            }
            ProbeConfig::Danskin {
                phi,
                h,
                max_rel_error,
            } => {
                let r = danskin_check(spec, model, &phi_or(phi), *h, inner)?;
                let pass = r.rel_error <= *max_rel_error;
                outcome(
                    "danskin",
                    pass,
                    r.inconclusive,
                    &json!({ "max_rel_error": max_rel_error, "result": r }),
                )?
            }
            ProbeConfig::MoreauGrad {
                phi,
                r,
                tol,
                max_norm,
            } => {
                let r = r.unwrap_or(2.0 * spec.constants().rho);
                let m = moreau_grad(spec, model, &phi_or(phi), r, *tol, inner)?;
                let pass = max_norm.is_none_or(|b| m.norm <= b + m.uncertainty);
                outcome(
                    "moreau_grad",
                    pass,
                    !m.certified,
                    &json!({ "r": r, "max_norm": max_norm, "result": m }),
                )?
            }
            ProbeConfig::AggConvexity { n_curves, seed } => {
                let mut reports = Vec::new();
                for comp in spec.components() {
                    reports.push(agg_convexity_probe(
                        comp,
                        spec.lambda(),
                        *n_curves,
                        seed_or(*seed),
                    )?);
                }
                let pass = reports.iter().all(|r| r.pass);
                outcome("agg_convexity", pass, false, &reports)?
            }
            ProbeConfig::Contraction { gamma } => contraction_outcome(cfg, *gamma)?,
            ProbeConfig::Lipschitz {
                pairs,
                radius,
                seed,
            } => {
                let r =
                    solution_lipschitz_probe(spec, model, *pairs, *radius, seed_or(*seed), inner)?;
                outcome(&r.probe, r.pass, r.inconclusive, &r)?
            }
            ProbeConfig::GradientMapping { phi, eta, max_norm } => {
                let eta = match eta {
                    Some(e) => *e,
                    None => match &cfg.outer {
                        Some(_) => cfg.outer_config()?.resolve_eta(spec)?,
                        None => 1.0,
                    },
                };
                let norm = gradient_mapping_norm(spec, model, &phi_or(phi), eta, inner)?;
                let pass = max_norm.is_none_or(|b| norm <= b);
                outcome(
                    "gradient_mapping",
                    pass,
                    false,
                    &json!({ "eta": eta, "norm": norm, "max_norm": max_norm }),
                )?
            }
        };
        log::info!(
            "probe {} pass={} inconclusive={}",
            o.probe,
            o.pass,
            o.inconclusive
        );
        outcomes.push(o);
    }
    Ok(outcomes)
}

/// Contraction of a cold JKO solve from the identity toward the analytic
/// optimum at the model parameters.
fn contraction_outcome(cfg: &ExperimentConfig, gamma: Option<f64>) -> Result<ProbeOutcome> {
    let tb = cfg.build()?;
    let Some(optimum) = analytic_optimum(&tb.spec) else {
        return outcome(
            "contraction",
            false,
            true,
            &json!({ "note": "no analytic optimum for this problem" }),
        );
    };
    let mut inner = cfg.inner;
    if gamma.is_some() {
        inner.gamma = gamma;
    }
    let sol = solve_inner(
        &tb.spec,
        &tb.model,
        &tb.model.params,
        &inner,
        None,
        Some(&optimum),
    )?;
    let fit = contraction_fit(&sol.trace, tb.spec.kappa(), sol.gamma, inner.eps_prime)?;
    outcome(
        "contraction",
        fit.pass,
        fit.inconclusive,
        &json!({ "gamma": sol.gamma, "fit": fit }),
    )
}

pub fn cmd_diagnose(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<i32> {
    cfg.check_mode(Mode::Diagnose)?;
    let dir = output_dir(cfg, out)?;
    let outcomes = run_probes(cfg)?;
    let failed = outcomes.iter().any(|o| !o.pass && !o.inconclusive);
    let inconclusive = outcomes.iter().any(|o| o.inconclusive);
    write_json(
        &dir.join("probes.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "build_id": BUILD_ID,
            "rng": RNG_NAME,
            "seed": cfg.seed,
            "probes": outcomes,
        }),
    )?;
    Ok(if failed {
        EXIT_PROBE_FAILED
    } else if inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub summary: Summary,
    /// Fitted contraction rate of the first inner solve, when an analytic
    /// optimum is available.
    pub contraction_rate: Option<f64>,
    pub moreau_norm: Option<f64>,
}

fn branch_config(
    cfg: &ExperimentConfig,
    param: SweepParameter,
    value: f64,
    index: usize,
) -> Result<ExperimentConfig> {
    let mut b = cfg.clone();
    b.mode = Some(Mode::Run);
    b.seed = cfg.seed.wrapping_add(index as u64);
    match param {
        SweepParameter::OuterK => {
            if value < 1.0 || value.fract() != 0.0 || value > usize::MAX as f64 {
                bail!("field `sweep.values[{index}]`: K must be a positive integer, got {value}");
            }
            b.outer.as_mut().context("field `outer`: missing")?.k = value as usize;
        }
        SweepParameter::Lambda => {
            b.problem
                .as_mut()
                .context("field `problem`: missing")?
                .lambda = Some(value);
        }
        SweepParameter::Gamma => b.inner.gamma = Some(value),
    }
    Ok(b)
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<i32> {
    cfg.check_mode(Mode::Sweep)?;
    let sweep = cfg.sweep.as_ref().context("field `sweep`: missing")?;
    let param = SweepParameter::parse(&sweep.parameter)?;
    let values: Vec<f64> = sweep
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_f64()
                .with_context(|| format!("field `sweep.values[{i}]`: expected a number, got {v}"))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("field `sweep.values`: empty");
    }
    let branches: Vec<ExperimentConfig> = values
        .iter()
        .enumerate()
        .map(|(i, v)| branch_config(cfg, param, *v, i))
        .collect::<Result<_>>()?;
    let dir = output_dir(cfg, out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        branches
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let sub = dir.join(format!("{}={}", param.key(), format_value(values[i])));
                fs::create_dir_all(&sub)?;
                let (run, summary) = execute_run(b, &sub)?;
                let tb = b.build()?;
                let contraction_rate =
                    match (analytic_optimum(&tb.spec), run.trace.inner_traces.first()) {
                        (Some(_), Some(t)) => {
                            let gamma = b.inner.resolved_gamma(&tb.spec);
                            contraction_fit(t, tb.spec.kappa(), gamma, b.inner.eps_prime)?
                                .empirical_rate
                        }
                        _ => None,
                    };
                let moreau_norm = match sweep.moreau_tol {
                    Some(tol) => {
                        let r = 2.0 * tb.spec.constants().rho;
                        Some(
                            moreau_grad(&tb.spec, &tb.model, run.best_phi(), r, tol, &b.inner)?
                                .norm,
                        )
                    }
                    None => None,
                };
                Ok(SweepRow {
                    index: i,
                    value: values[i],
                    seed: b.seed,
                    summary,
                    contraction_rate,
                    moreau_norm,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut csv = format!(
        "index,{},seed,best_k,best_grad_map,final_H,calls,jko_steps,certified,contraction_rate,moreau_norm\n",
        param.key()
    );
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.17e},{:.17e},{},{},{},{},{}",
            r.index,
            format_value(r.value),
            r.seed,
            r.summary.best_k,
            r.summary.best_grad_map,
            r.summary.final_h,
            r.summary.calls,
            r.summary.jko_steps,
            r.summary.certified,
            opt(r.contraction_rate),
            opt(r.moreau_norm)
        );
    }
    fs::write(dir.join("sweep_summary.csv"), csv)?;
    Ok(if rows.iter().all(|r| r.summary.certified) {
        EXIT_OK
    } else {
        EXIT_UNCERTIFIED
    })
}

/// Exact `W₂²` between two CSV clouds, printed with 12 decimals.
pub fn oracle_value(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.check_mode(Mode::Oracle)?;
    let o = cfg.oracle.as_ref().context("field `oracle`: missing")?;
    let a = load_csv(cfg.resolve(&o.a)).with_context(|| format!("loading {}", o.a.display()))?;
    let b = load_csv(cfg.resolve(&o.b)).with_context(|| format!("loading {}", o.b.display()))?;
    Ok(exact_w2_empirical(&a, &b)?)
}

pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<i32> {
    let v = oracle_value(cfg)?;
    println!("{v:.12}");
    Ok(EXIT_OK)
}

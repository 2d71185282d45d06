//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wass_dro::diagnostics::{
    agg_convexity_probe, contraction_fit, danskin_check, moreau_grad, solution_lipschitz_probe,
    weak_convexity_probe,
};
use wass_dro::jko::{analytic_optimum, solve_inner, InnerSolution, JkoConfig};
use wass_dro::measures::{sample, second_moment, ParticleCloud, ReferenceMeasure};
use wass_dro::objective::loss::{loss_grad_phi, loss_grad_xi, loss_value};
use wass_dro::objective::{discrepancy_grad, discrepancy_value, objective_h};
use wass_dro::solver::{run_outer, OuterConfig, StepSize};
use wass_dro::testbeds::{self, Testbed, QUADRATIC_ALPHA, QUADRATIC_LAMBDA};
use wass_dro::transport::{
    exact_w2_empirical, min_cost_assignment, pairwise_sq_costs, param_gradient, pushforward,
};
use wass_dro::{Component, Discrepancy, LossKind, ModelKind, TransportMap};
use wass_dro_cli::{cmd_run, ExperimentConfig};

const SEED: u64 = 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1 and 2

const C1_GAMMA: f64 = 0.5;
const C1_EPS: f64 = 1e-4;

struct QuadraticSolve {
    tb: Testbed,
    sol: InnerSolution,
    optimum: Vec<TransportMap>,
}

fn quadratic_solve() -> &'static Result<QuadraticSolve, String> {
    static CELL: OnceLock<Result<QuadraticSolve, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let run = || -> Result<QuadraticSolve> {
            let tb = testbeds::quadratic(2000, SEED)?;
            let optimum =
                analytic_optimum(&tb.spec).expect("quadratic testbed has an analytic optimum");
            // T* = (2λ/(2λ - α))·I, independently of the library's closed form.
            let s = 2.0 * QUADRATIC_LAMBDA / (2.0 * QUADRATIC_LAMBDA - QUADRATIC_ALPHA);
            let want = [s, 0.0, 0.0, s, 0.0, 0.0];
            ensure!(optimum[0]
                .params()
                .iter()
                .zip(want)
                .all(|(a, b)| (a - b).abs() < 1e-15));
            let cfg = JkoConfig {
                gamma: Some(C1_GAMMA),
                eps_prime: C1_EPS,
                ..Default::default()
            };
            let sol = solve_inner(
                &tb.spec,
                &tb.model,
                &tb.model.params,
                &cfg,
                None,
                Some(&optimum),
            )?;
            Ok(QuadraticSolve { tb, sol, optimum })
        };
        run().map_err(|e| format!("{e:#}"))
    })
}

fn criterion_1() -> Result<Outcome> {
    let q = quadratic_solve()
        .as_ref()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let kappa = q.tb.spec.kappa();
    ensure!((kappa - 3.5).abs() < 1e-12, "kappa = {kappa}");
    let fit = contraction_fit(&q.sol.trace, kappa, C1_GAMMA, C1_EPS)?;
    outcome(
        fit.pass && !fit.inconclusive,
        format!(
            "{} steps, worst dist²/bound = {:.4} (limit 1.05), fitted rate {} vs bound {:.4}",
            q.sol.steps(),
            fit.worst_ratio,
            fit.empirical_rate
                .map_or("n/a".into(), |r| format!("{r:.4}")),
            fit.bound_rate
        ),
    )
}

fn criterion_2() -> Result<Outcome> {
    let q = quadratic_solve()
        .as_ref()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let kappa = q.tb.spec.kappa();
    let h_star = objective_h(&q.tb.spec, &q.tb.model, &q.tb.model.params, &q.optimum)?;
    let gap = h_star.value - q.sol.h;
    let bound =
        1.05 * (5.0 / (2.0 * C1_GAMMA) + kappa) * (C1_EPS / kappa).powi(2) + 3.0 * h_star.std_error;
    outcome(
        gap <= bound,
        format!(
            "gap {gap:.3e} <= bound {bound:.3e} (3·se = {:.3e})",
            3.0 * h_star.std_error
        ),
    )
}

// ---------------------------------------------------------------------- 3

fn criterion_3() -> Result<Outcome> {
    let center = vec![0.5, -0.5, 0.25];
    let mut tb = testbeds::param_quadratic(500, SEED, center.clone(), 3.0)?;
    tb.model.params = vec![2.0, 1.0, -1.0];
    let k = 100;
    let inner = JkoConfig::default().with_eps_prime(1e-6);
    let run = run_outer(
        &tb.spec,
        &tb.model,
        &OuterConfig::new(k, StepSize::Fixed(0.1), inner),
    )?;
    let c = tb.spec.constants();
    let (rho, lip) = (c.rho, c.lipschitz);
    let r = 2.0 * rho;
    let eps = run.trace.records.iter().map(|x| x.eps).fold(0.0, f64::max);

    // min V = max_T E[(α/2)‖Tξ‖²] - λE‖Tξ - ξ‖² at T = sξ: (α s²/2 - λ(s-1)²)·m₂.
    let s = 2.0 * QUADRATIC_LAMBDA / (2.0 * QUADRATIC_LAMBDA - QUADRATIC_ALPHA);
    let m2 = second_moment(tb.spec.components()[0].cloud());
    let min_v = (QUADRATIC_ALPHA * s * s / 2.0 - QUADRATIC_LAMBDA * (s - 1.0).powi(2)) * m2;

    let tol = 1e-7;
    let phi0 = &run.trace.records[0].phi;
    let env0 = moreau_grad(&tb.spec, &tb.model, phi0, r, tol, &inner)?;
    let mut best = f64::INFINITY;
    let mut best_tol = 0.0;
    let mut analytic_gap: f64 = 0.0;
    for rec in &run.trace.records {
        let m = moreau_grad(&tb.spec, &tb.model, &rec.phi, r, tol, &inner)?;
        // Interior prox of ½‖u - c‖²: ∇V_{1/r}(φ) = r/(1 + r)·(φ - c).
        let want: Vec<f64> = rec
            .phi
            .iter()
            .zip(&center)
            .map(|(p, q)| r / (1.0 + r) * (p - q))
            .collect();
        let d: Vec<f64> = m.gradient.iter().zip(&want).map(|(a, b)| a - b).collect();
        analytic_gap = analytic_gap.max(norm(&d));
        let sq = m.norm * m.norm;
        if sq < best {
            best = sq;
            best_tol = 2.0 * m.norm * m.uncertainty + m.uncertainty * m.uncertainty;
        }
    }
    let bound = 2.0 * (env0.envelope - min_v + rho * lip * lip) / (k as f64).sqrt()
        + 4.0 * rho * eps
        + best_tol;
    outcome(
        best <= bound,
        format!(
            "min‖∇V_1/2ρ‖² = {best:.3e} <= {bound:.3e}; V_1/2ρ(φ₀) = {:.4}, min V = {min_v:.4}, ε = {eps:.1e}, max |moreau - analytic| = {analytic_gap:.1e}",
            env0.envelope
        ),
    )
}

// ---------------------------------------------------------------------- 4

fn criterion_4() -> Result<Outcome> {
    let ks = [16usize, 64, 256, 1024];
    let inner = JkoConfig::default().with_eps_prime(1e-6);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut parts = Vec::new();
    for k in ks {
        let tb = testbeds::adversarial_logistic(200, SEED)?;
        let run = run_outer(
            &tb.spec,
            &tb.model,
            &OuterConfig::new(k, StepSize::Auto, inner),
        )?;
        let r = 2.0 * tb.spec.constants().rho;
        let m = moreau_grad(&tb.spec, &tb.model, run.best_phi(), r, 1e-7, &inner)?;
        ensure!(m.norm > 0.0, "zero Moreau gradient at K = {k}");
        xs.push((k as f64).ln());
        ys.push(m.norm.ln());
        parts.push(format!("K={k}: {:.3e}", m.norm));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    outcome(
        (-0.45..=-0.05).contains(&slope),
        format!("slope {slope:.3} in [-0.45, -0.05]; {}", parts.join(", ")),
    )
}

// ---------------------------------------------------------------------- 5

fn criterion_5() -> Result<Outcome> {
    let tb = testbeds::adversarial_logistic(200, SEED)?;
    let inner = JkoConfig::default().with_eps_prime(1e-9);
    let mut g = rng(SEED + 5);
    let mut worst: f64 = 0.0;
    let mut inconclusive = 0;
    for _ in 0..10 {
        let phi = tb.model.constraint.sample_point(&tb.model.params, &mut g);
        let rep = danskin_check(&tb.spec, &tb.model, &phi, 1e-4, &inner)?;
        worst = worst.max(rep.rel_error);
        inconclusive += rep.inconclusive as usize;
    }
    outcome(
        worst <= 1e-3 && inconclusive == 0,
        format!("worst relative error {worst:.2e} over 10 points, {inconclusive} uncertified"),
    )
}

// ---------------------------------------------------------------------- 6

fn criterion_6() -> Result<Outcome> {
    let tb = testbeds::adversarial_logistic(200, SEED)?;
    let rep = weak_convexity_probe(
        &tb.spec,
        &tb.model,
        200,
        SEED + 6,
        &JkoConfig::default().with_eps_prime(1e-6),
    )?;
    outcome(
        rep.pass && rep.violations == 0 && !rep.inconclusive,
        format!(
            "{} triples, {} violations, worst margin {:.2e} (tolerance {:.2e})",
            rep.samples, rep.violations, rep.worst_margin, rep.tolerance
        ),
    )
}

// ---------------------------------------------------------------------- 7

fn criterion_7() -> Result<Outcome> {
    let w2 = testbeds::quadratic(500, SEED)?;
    let rep_w2 = agg_convexity_probe(&w2.spec.components()[0], w2.spec.lambda(), 100, SEED + 7)?;
    let p = ReferenceMeasure::Gaussian {
        mean: vec![0.5, -1.0],
        cov: vec![1.0, 0.6],
    };
    let kl = Component::new(
        LossKind::QuadraticTest { alpha: 0.0 },
        1.0,
        false,
        sample(&p, 200, SEED)?,
        Some(p),
        Discrepancy::KlGaussAffine,
        TransportMap::affine_identity(2),
    )?;
    let rep_kl = agg_convexity_probe(&kl, 2.0, 100, SEED + 8)?;
    outcome(
        rep_w2.violations == 0 && rep_kl.violations == 0 && rep_w2.pass && rep_kl.pass,
        format!(
            "W2Sq: {} checks, worst margin {:.1e}; KL: {} checks, worst margin {:.1e}",
            rep_w2.samples, rep_w2.worst_margin, rep_kl.samples, rep_kl.worst_margin
        ),
    )
}

// ---------------------------------------------------------------------- 8

fn criterion_8() -> Result<Outcome> {
    let tb = testbeds::adversarial_logistic(200, SEED)?;
    let rep = solution_lipschitz_probe(
        &tb.spec,
        &tb.model,
        50,
        0.5,
        SEED + 9,
        &JkoConfig::default().with_eps_prime(1e-6),
    )?;
    outcome(
        rep.pass && !rep.inconclusive,
        format!(
            "{} pairs, {} violations, worst margin {:.2e} (tolerance {:.2e})",
            rep.samples, rep.violations, rep.worst_margin, rep.tolerance
        ),
    )
}

// ---------------------------------------------------------------------- 9

fn row_sum(cost: &[f64], n: usize, perm: &[usize]) -> f64 {
    (0..n).map(|i| cost[i * n + perm[i]]).sum()
}

fn brute_force(cost: &[f64], n: usize) -> f64 {
    fn go(k: usize, perm: &mut Vec<usize>, cost: &[f64], n: usize, best: &mut f64) {
        if k == n {
            *best = best.min(row_sum(cost, n, perm));
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            go(k + 1, perm, cost, n, best);
            perm.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(0, &mut (0..n).collect(), cost, n, &mut best);
    best
}

fn uniform_cloud(g: &mut ChaCha20Rng, n: usize, d: usize) -> Result<ParticleCloud> {
    let pts = (0..n * d).map(|_| g.random_range(-3.0..3.0)).collect();
    Ok(ParticleCloud::uniform(pts, d, None, 0)?)
}

fn criterion_9() -> Result<Outcome> {
    let mut g = rng(SEED + 10);
    let mut worst_1d: f64 = 0.0;
    for _ in 0..20 {
        let n = g.random_range(2..=32);
        let (a, b) = (uniform_cloud(&mut g, n, 1)?, uniform_cloud(&mut g, n, 1)?);
        let sorted = exact_w2_empirical(&a, &b)?;
        let cost = pairwise_sq_costs(&a, &b);
        let hungarian = row_sum(&cost, n, &min_cost_assignment(&cost, n)) / n as f64;
        worst_1d = worst_1d.max((sorted - hungarian).abs());
    }
    let mut mismatches = 0;
    for _ in 0..20 {
        let n = g.random_range(2..=6);
        let (a, b) = (uniform_cloud(&mut g, n, 2)?, uniform_cloud(&mut g, n, 2)?);
        let cost = pairwise_sq_costs(&a, &b);
        if row_sum(&cost, n, &min_cost_assignment(&cost, n)) != brute_force(&cost, n) {
            mismatches += 1;
        }
    }
    outcome(
        worst_1d <= 1e-12 && mismatches == 0,
        format!("1D sort vs Hungarian max diff {worst_1d:.1e}; d=2 brute-force mismatches {mismatches}/20"),
    )
}

// --------------------------------------------------------------------- 10

fn kl_quadrature(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let logpdf = |x: f64, m: f64, s: f64| {
        -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * std::f64::consts::TAU.ln()
    };
    let (a, b) = (mq - 14.0 * sq, mq + 14.0 * sq);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lq = logpdf(x, mq, sq);
        lq.exp() * (lq - logpdf(x, mp, sp))
    };
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn criterion_10() -> Result<Outcome> {
    let mut g = rng(SEED + 11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mean: f64 = g.random_range(-1.0..1.0);
        let var: f64 = g.random_range(0.3..3.0);
        let p = ReferenceMeasure::Gaussian {
            mean: vec![mean],
            cov: vec![var],
        };
        let comp = Component::new(
            LossKind::QuadraticTest { alpha: 0.0 },
            1.0,
            false,
            sample(&p, 8, 1)?,
            Some(p),
            Discrepancy::KlGaussAffine,
            TransportMap::affine_identity(1),
        )?;
        let scale: f64 = g.random_range(0.3..2.5) * if g.random::<bool>() { 1.0 } else { -1.0 };
        let shift: f64 = g.random_range(-2.0..2.0);
        let closed = discrepancy_value(&comp, &TransportMap::affine(1, vec![scale], vec![shift])?)?;
        let sd = var.sqrt();
        worst = worst
            .max((closed - kl_quadrature(scale * mean + shift, scale.abs() * sd, mean, sd)).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("max |closed form - quadrature| = {worst:.2e} over 20 cases"),
    )
}

// --------------------------------------------------------------------- 11

const FD_H: f64 = 1e-6;

fn central_diff(x: &[f64], f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|j| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[j] += FD_H;
            m[j] -= FD_H;
            Ok((f(&p)? - f(&m)?) / (2.0 * FD_H))
        })
        .collect()
}

fn rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

fn uniform_vec(g: &mut ChaCha20Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * g.random_range(-1.0..1.0)).collect()
}

fn criterion_11() -> Result<Outcome> {
    let mut g = rng(SEED + 12);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut record = |a: &[f64], b: &[f64]| {
        worst = worst.max(rel_err(a, b));
        checks += 1;
    };

    for model in [
        ModelKind::Linear { dim: 3 },
        ModelKind::MlpSoftplus { dim: 3, hidden: 4 },
    ] {
        let p = model.n_params();
        let losses = [
            LossKind::Exponential,
            LossKind::Logistic,
            LossKind::SquaredHinge,
            LossKind::QuadraticTest { alpha: 0.7 },
            LossKind::ParamQuadratic {
                alpha: 0.3,
                center: vec![0.2; p],
            },
        ];
        for loss in &losses {
            let mut done = 0;
            while done < 100 {
                let phi = uniform_vec(&mut g, p, 1.0);
                let xi = uniform_vec(&mut g, 3, 2.0);
                let s = if g.random::<bool>() { 1.0 } else { -1.0 };
                let u = s * model.eval(&phi, &xi, None, None);
                if *loss == LossKind::SquaredHinge && (u + 1.0).abs() < 1e-3 {
                    continue;
                }
                let gp = loss_grad_phi(loss, &model, &phi, &xi, s)?;
                let fp = central_diff(&phi, |q| Ok(loss_value(loss, &model, q, &xi, s)?.value))?;
                record(&gp, &fp);
                let gx = loss_grad_xi(loss, &model, &phi, &xi, s)?;
                let fx = central_diff(&xi, |q| Ok(loss_value(loss, &model, &phi, q, s)?.value))?;
                record(&gx, &fx);
                done += 1;
            }
        }
    }

    // Map parameter gradients of Σ wᵢ⟨cᵢ, T_θ(xᵢ)⟩ and discrepancy θ-gradients.
    let p = ReferenceMeasure::Gaussian {
        mean: vec![0.2, -0.4],
        cov: vec![1.0, 0.7],
    };
    let base = sample(&p, 40, SEED)?;
    let kl = Component::new(
        LossKind::QuadraticTest { alpha: 0.0 },
        1.0,
        false,
        base.clone(),
        Some(p),
        Discrepancy::KlGaussAffine,
        TransportMap::affine_identity(2),
    )?;
    let w2 = Component::new(
        LossKind::QuadraticTest { alpha: 0.0 },
        1.0,
        false,
        base.clone(),
        None,
        Discrepancy::W2Sq,
        TransportMap::affine_identity(2),
    )?;
    let residual = TransportMap::residual(2, uniform_vec(&mut g, 10, 2.0), 0.8)?;
    for _ in 0..100 {
        let cot = uniform_vec(&mut g, base.points().len(), 1.0);
        let pairing = |map: &TransportMap| -> Result<f64> {
            let z = pushforward(map, &base)?;
            Ok(base
                .weights()
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    w * z
                        .point(i)
                        .iter()
                        .zip(&cot[2 * i..2 * i + 2])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .sum())
        };
        let mut theta = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        theta
            .iter_mut()
            .zip(uniform_vec(&mut g, 6, 0.4))
            .for_each(|(t, d)| *t += d);
        let affine = TransportMap::affine_identity(2).with_params(&theta)?;
        let coeffs = uniform_vec(&mut g, residual.n_params(), 0.5);
        let res = residual.with_params(&coeffs)?;
        for (map, params) in [(&affine, &theta), (&res, &coeffs)] {
            let analytic = param_gradient(map, &base, &cot)?;
            let fd = central_diff(params, |q| pairing(&map.with_params(q)?))?;
            record(&analytic, &fd);
        }

        let kg = discrepancy_grad(&kl, &affine)?
            .theta
            .expect("closed-form θ-gradient");
        let fd = central_diff(&theta, |q| {
            Ok(discrepancy_value(&kl, &affine.with_params(q)?)?)
        })?;
        record(&kg, &fd);

        let wg = param_gradient(&affine, &base, &discrepancy_grad(&w2, &affine)?.cotangents)?;
        let fd = central_diff(&theta, |q| {
            Ok(discrepancy_value(&w2, &affine.with_params(q)?)?)
        })?;
        record(&wg, &fd);
    }
    outcome(
        worst <= 1e-5,
        format!("{checks} gradient checks, worst relative error {worst:.2e}"),
    )
}

// --------------------------------------------------------------------- 12

fn criterion_12() -> Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let text = r#"{
        "schema_version": 1,
        "mode": "run",
        "seed": 20,
        "problem": { "testbed": { "name": "adversarial_logistic", "n": 150 } },
        "outer": { "k": 12 },
        "inner": { "eps_prime": 1e-6 }
    }"#;
    let cfg = ExperimentConfig::from_str_at(text, tmp.path())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ca = cmd_run(&cfg, Some(&a))?;
    let cb = cmd_run(&cfg, Some(&b))?;
    let ta = std::fs::read(a.join("trace.csv"))?;
    let tb = std::fs::read(b.join("trace.csv"))?;
    outcome(
        ta == tb && ca == cb,
        format!(
            "trace.csv {} bytes, identical: {}, exit codes {ca}/{cb}",
            ta.len(),
            ta == tb
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("JKO contraction", criterion_1),
        ("objective gap", criterion_2),
        ("outer convergence", criterion_3),
        ("rate scaling", criterion_4),
        ("Danskin gradient", criterion_5),
        ("weak convexity of V", criterion_6),
        ("generalized-geodesic convexity", criterion_7),
        ("Lipschitz solution map", criterion_8),
        ("exact OT oracle", criterion_9),
        ("KL closed form", criterion_10),
        ("gradient correctness", criterion_11),
        ("determinism", criterion_12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += !pass as usize;
        println!(
            "{} criterion {id:>2} {name} ({:.1} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {failed} failed, total {:.1} s",
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Particle approximations of reference measures.
//!
//! A [`ParticleCloud`] is a finitely supported probability measure: `N`
//! weighted points in `R^d`, optionally carrying `±1` class labels. Clouds are
//! validated on construction and immutable afterwards.
//!
//! Sampling is a pure function of `(reference, n, seed)`. The generator is
//! ChaCha20 seeded through `SeedableRng::seed_from_u64`; normals come from
//! `rand_distr::StandardNormal` (ziggurat). Both are platform independent.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Name of the sampling generator, recorded in run metadata.
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64)";

const WEIGHT_SUM_TOL: f64 = 1e-12;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
    labels: Option<Vec<i8>>,
    seed: u64,
}

impl ParticleCloud {
    /// Builds a cloud from row-major `points` (`n * dim` values).
    pub fn new(
        points: Vec<f64>,
        dim: usize,
        weights: Vec<f64>,
        labels: Option<Vec<i8>>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::Empty);
        }
        if points.len() % dim != 0 {
            return Err(shape_err(
                format!("a multiple of d={dim} coordinates"),
                points.len(),
            ));
        }
        let n = points.len() / dim;
        if weights.len() != n {
            return Err(shape_err(format!("{n} weights"), weights.len()));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite coordinate at particle {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(shape_err(format!("{n} labels"), labels.len()));
            }
            if labels.iter().any(|&y| y != 1 && y != -1) {
                return Err(Error::Validation("labels must be -1 or +1".into()));
            }
        }
        Ok(Self {
            points,
            dim,
            weights,
            labels,
            seed,
        })
    }

    /// Cloud with uniform weights `1/n`.
    pub fn uniform(
        points: Vec<f64>,
        dim: usize,
        labels: Option<Vec<i8>>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || points.len() < dim {
            return Self::new(points, dim, Vec::new(), labels, seed);
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n as f64; n], labels, seed)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| w == w0)
    }

    /// Same weights, labels and seed on new coordinates.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(shape_err(self.points.len(), points.len()));
        }
        Self::new(
            points,
            self.dim,
            self.weights.clone(),
            self.labels.clone(),
            self.seed,
        )
    }

    /// Weighted mean of every coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mk, xk) in m.iter_mut().zip(self.point(i)) {
                *mk += w * xk;
            }
        }
        m
    }
}

/// `Σᵢ wᵢ ‖xᵢ‖²`.
pub fn second_moment(cloud: &ParticleCloud) -> f64 {
    cloud
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * cloud.point(i).iter().map(|x| x * x).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

/// Reference distributions. Gaussian covariances are diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceMeasure {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    GaussianMixture {
        components: Vec<MixtureComponent>,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Rows of a CSV file; sampling resamples rows with replacement.
    Empirical {
        path: PathBuf,
    },
    /// Labeled two-class data: each draw picks `y = +1` with probability
    /// `positive_fraction`, then samples features from the matching class.
    Labeled {
        negative: Box<ReferenceMeasure>,
        positive: Box<ReferenceMeasure>,
        #[serde(default = "half")]
        positive_fraction: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl ReferenceMeasure {
    pub fn standard_gaussian(dim: usize) -> Self {
        ReferenceMeasure::Gaussian {
            mean: vec![0.0; dim],
            cov: vec![1.0; dim],
        }
    }

    /// Dimension implied by the parameters (`None` for empirical data).
    pub fn dim(&self) -> Option<usize> {
        match self {
            ReferenceMeasure::Gaussian { mean, .. } => Some(mean.len()),
            ReferenceMeasure::GaussianMixture { components } => {
                components.first().map(|c| c.mean.len())
            }
            ReferenceMeasure::UniformBox { lo, .. } => Some(lo.len()),
            ReferenceMeasure::Empirical { .. } => None,
            ReferenceMeasure::Labeled { negative, .. } => negative.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check_gauss(mean: &[f64], cov: &[f64]) -> Result<()> {
            if mean.is_empty() {
                return Err(Error::Config("gaussian mean must be non-empty".into()));
            }
            if mean.len() != cov.len() {
                return Err(Error::Config(format!(
                    "gaussian mean has {} entries but covariance diagonal has {}",
                    mean.len(),
                    cov.len()
                )));
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Config("gaussian mean must be finite".into()));
            }
            if cov.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::Config(
                    "gaussian covariance entries must be positive".into(),
                ));
            }
            Ok(())
        }
        match self {
            ReferenceMeasure::Gaussian { mean, cov } => check_gauss(mean, cov),
            ReferenceMeasure::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::Config("mixture needs at least one component".into()));
                }
                let d = components[0].mean.len();
                for c in components {
                    check_gauss(&c.mean, &c.cov)?;
                    if c.mean.len() != d {
                        return Err(Error::Config(
                            "mixture components disagree on dimension".into(),
                        ));
                    }
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::Config("mixture weights must be nonnegative".into()));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            ReferenceMeasure::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::Config(
                        "uniform box bounds must be non-empty and equal length".into(),
                    ));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
                {
                    return Err(Error::Config(
                        "uniform box requires lo < hi componentwise".into(),
                    ));
                }
                Ok(())
            }
            ReferenceMeasure::Empirical { path } => {
                if path.as_os_str().is_empty() {
                    return Err(Error::Config("empirical reference needs a path".into()));
                }
                Ok(())
            }
            ReferenceMeasure::Labeled {
                negative,
                positive,
                positive_fraction,
            } => {
                for r in [negative.as_ref(), positive.as_ref()] {
                    if matches!(
                        r,
                        ReferenceMeasure::Empirical { .. } | ReferenceMeasure::Labeled { .. }
                    ) {
                        return Err(Error::Config(
                            "labeled classes must be gaussian, mixture or uniform box".into(),
                        ));
                    }
                    r.validate()?;
                }
                if negative.dim() != positive.dim() {
                    return Err(Error::Config(
                        "labeled classes disagree on dimension".into(),
                    ));
                }
                if !(0.0..=1.0).contains(positive_fraction) {
                    return Err(Error::Config("positive_fraction must lie in [0, 1]".into()));
                }
                Ok(())
            }
        }
    }

    /// Diagonal Gaussian parameters, when this is a plain Gaussian.
    pub fn as_gaussian(&self) -> Option<(&[f64], &[f64])> {
        match self {
            ReferenceMeasure::Gaussian { mean, cov } => Some((mean, cov)),
            _ => None,
        }
    }

    fn draw_point(&self, rng: &mut ChaCha20Rng, out: &mut Vec<f64>) {
        match self {
            ReferenceMeasure::Gaussian { mean, cov } => draw_gaussian(mean, cov, rng, out),
            ReferenceMeasure::GaussianMixture { components } => {
                let comp = if components.len() == 1 {
                    &components[0]
                } else {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = components.len() - 1;
                    for (k, c) in components.iter().enumerate() {
                        acc += c.weight;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    &components[pick]
                };
                draw_gaussian(&comp.mean, &comp.cov, rng, out);
            }
            ReferenceMeasure::UniformBox { lo, hi } => {
                for (l, h) in lo.iter().zip(hi) {
                    let u: f64 = rng.random();
                    out.push(l + (h - l) * u);
                }
            }
            ReferenceMeasure::Empirical { .. } | ReferenceMeasure::Labeled { .. } => {
                unreachable!("handled in sample")
            }
        }
    }
}

fn draw_gaussian(mean: &[f64], cov: &[f64], rng: &mut ChaCha20Rng, out: &mut Vec<f64>) {
    for (m, c) in mean.iter().zip(cov) {
        let z: f64 = rng.sample(StandardNormal);
        out.push(m + c.sqrt() * z);
    }
}

/// Draws `n` points with uniform weights; deterministic in `(reference, n, seed)`.
pub fn sample(reference: &ReferenceMeasure, n: usize, seed: u64) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    reference.validate()?;
    let mut rng = rng_from_seed(seed);
    match reference {
        ReferenceMeasure::Empirical { path } => {
            let data = load_csv(path)?;
            let mut points = Vec::with_capacity(n * data.dim());
            let mut labels = data.labels().map(|_| Vec::with_capacity(n));
            for _ in 0..n {
                let i = rng.random_range(0..data.len());
                points.extend_from_slice(data.point(i));
                if let (Some(out), Some(src)) = (labels.as_mut(), data.labels()) {
                    out.push(src[i]);
                }
            }
            ParticleCloud::uniform(points, data.dim(), labels, seed)
        }
        ReferenceMeasure::Labeled {
            negative,
            positive,
            positive_fraction,
        } => {
            let dim = negative.dim().unwrap_or(1);
            let mut points = Vec::with_capacity(n * dim);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                if u < *positive_fraction {
                    labels.push(1);
                    positive.draw_point(&mut rng, &mut points);
                } else {
                    labels.push(-1);
                    negative.draw_point(&mut rng, &mut points);
                }
            }
            ParticleCloud::uniform(points, dim, Some(labels), seed)
        }
        _ => {
            let dim = reference.dim().unwrap_or(1);
            let mut points = Vec::with_capacity(n * dim);
            for _ in 0..n {
                reference.draw_point(&mut rng, &mut points);
            }
            ParticleCloud::uniform(points, dim, None, seed)
        }
    }
}

/// Reads a cloud from CSV. The header names `d` feature columns and
/// optionally a `label` column and a `weight` column; weights, when present,
/// are renormalized to sum to one.
pub fn load_csv(path: impl AsRef<Path>) -> Result<ParticleCloud> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<ParticleCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty)?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_col = columns.iter().position(|c| *c == "label");
    let weight_col = columns.iter().position(|c| *c == "weight");
    let dim = columns.len() - label_col.is_some() as usize - weight_col.is_some() as usize;
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "header names no feature columns".into(),
        });
    }

    let mut points = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut weights = weight_col.map(|_| Vec::new());
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        for (c, field) in fields.iter().enumerate() {
            if Some(c) == label_col {
                let y: i64 = field.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("label {field:?} is not an integer"),
                })?;
                if y != 1 && y != -1 {
                    return Err(Error::Validation(format!(
                        "line {line_no}: label must be -1 or +1, got {y}"
                    )));
                }
                labels.as_mut().unwrap().push(y as i8);
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("value {field:?} in column {} is not a number", columns[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "line {line_no}: non-finite value in column {}",
                    columns[c]
                )));
            }
            if Some(c) == weight_col {
                weights.as_mut().unwrap().push(v);
            } else {
                points.push(v);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Empty);
    }
    match weights {
        Some(mut w) => {
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Validation("weights must have positive total".into()));
            }
            w.iter_mut().for_each(|x| *x /= total);
            ParticleCloud::new(points, dim, w, labels, 0)
        }
        None => ParticleCloud::uniform(points, dim, labels, 0),
    }
}

/// Writes `x0,...,x{d-1}[,weight][,label]` with 17 significant digits. The
/// weight column is emitted only for non-uniform clouds.
pub fn save_csv(cloud: &ParticleCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv(cloud))?;
    Ok(())
}

pub fn to_csv(cloud: &ParticleCloud) -> String {
    let with_weights = !cloud.is_uniform();
    let mut out = String::new();
    let header: Vec<String> = (0..cloud.dim()).map(|k| format!("x{k}")).collect();
    out.push_str(&header.join(","));
    if with_weights {
        out.push_str(",weight");
    }
    if cloud.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..cloud.len() {
        for (k, v) in cloud.point(i).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        if with_weights {
            write!(out, ",{:.16e}", cloud.weights()[i]).unwrap();
        }
        if let Some(labels) = cloud.labels() {
            write!(out, ",{}", labels[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

//! Transport-map families, pushforwards and Wasserstein quantities.
//!
//! Every candidate worst-case distribution is represented as a pushforward
//! `T_θ # P` of a fixed particle base. Three map families are supported:
//!
//! ```text
//! Identity           T(ξ) = ξ
//! Affine             T(ξ) = A ξ + b
//! ResidualFeatures   T(ξ) = ξ + Σⱼ cⱼ exp(-‖ξ - zⱼ‖² / (2h²))
//! ```
//!
//! For the residual family only the coefficients `cⱼ` are free parameters;
//! centers `zⱼ` and bandwidth `h` are fixed at construction. With centers
//! placed on the base particles the Gram matrix is strictly positive definite,
//! so the family can realize any displacement of the particles.

mod hungarian;

pub use hungarian::min_cost_assignment;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::measures::ParticleCloud;

/// Largest cloud accepted by the assignment oracle in `d >= 2`.
pub const ORACLE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapJson", into = "MapJson")]
pub enum TransportMap {
    Identity {
        dim: usize,
    },
    Affine {
        dim: usize,
        /// Row-major `dim × dim`.
        matrix: Vec<f64>,
        shift: Vec<f64>,
    },
    ResidualFeatures {
        dim: usize,
        /// Row-major `m × dim`.
        centers: Vec<f64>,
        bandwidth: f64,
        /// Row-major `m × dim`.
        coeffs: Vec<f64>,
    },
}

impl TransportMap {
    pub fn identity(dim: usize) -> Self {
        TransportMap::Identity { dim }
    }

    /// `A = I`, `b = 0`.
    pub fn affine_identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for k in 0..dim {
            matrix[k * dim + k] = 1.0;
        }
        TransportMap::Affine {
            dim,
            matrix,
            shift: vec![0.0; dim],
        }
    }

    pub fn affine(dim: usize, matrix: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        let map = TransportMap::Affine { dim, matrix, shift };
        map.validate()?;
        Ok(map)
    }

    /// `T(ξ) = s·ξ + b`.
    pub fn scaled_shift(scale: f64, shift: Vec<f64>) -> Self {
        let dim = shift.len();
        let mut matrix = vec![0.0; dim * dim];
        for k in 0..dim {
            matrix[k * dim + k] = scale;
        }
        TransportMap::Affine { dim, matrix, shift }
    }

    /// Residual map with zero coefficients (evaluates as the identity).
    pub fn residual(dim: usize, centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        let coeffs = vec![0.0; centers.len()];
        let map = TransportMap::ResidualFeatures {
            dim,
            centers,
            bandwidth,
            coeffs,
        };
        map.validate()?;
        Ok(map)
    }

    /// Residual map with one feature centered on every particle of `base`.
    pub fn residual_on_particles(base: &ParticleCloud, bandwidth: f64) -> Result<Self> {
        Self::residual(base.dim(), base.points().to_vec(), bandwidth)
    }

    /// Same family and fixed structure, evaluating as the identity.
    pub fn identity_like(&self) -> Self {
        match self {
            TransportMap::Identity { dim } => TransportMap::identity(*dim),
            TransportMap::Affine { dim, .. } => TransportMap::affine_identity(*dim),
            TransportMap::ResidualFeatures { .. } => {
                let mut out = self.clone();
                let zeros = vec![0.0; self.n_params()];
                out.set_params(&zeros);
                out
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransportMap::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::Validation("map dimension must be at least 1".into()));
                }
            }
            TransportMap::Affine { dim, matrix, shift } => {
                if *dim == 0 || matrix.len() != dim * dim || shift.len() != *dim {
                    return Err(shape_err(
                        format!("{dim}x{dim} matrix and {dim}-vector shift"),
                        format!(
                            "{} matrix entries, {} shift entries",
                            matrix.len(),
                            shift.len()
                        ),
                    ));
                }
            }
            TransportMap::ResidualFeatures {
                dim,
                centers,
                bandwidth,
                coeffs,
            } => {
                if *dim == 0 || centers.len() % dim != 0 || centers.is_empty() {
                    return Err(shape_err(format!("m x {dim} centers"), centers.len()));
                }
                if coeffs.len() != centers.len() {
                    return Err(shape_err(
                        format!("{} coefficients", centers.len()),
                        coeffs.len(),
                    ));
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(Error::Validation("bandwidth must be positive".into()));
                }
            }
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("map parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            TransportMap::Identity { dim }
            | TransportMap::Affine { dim, .. }
            | TransportMap::ResidualFeatures { dim, .. } => *dim,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            TransportMap::Identity { .. } => "identity",
            TransportMap::Affine { .. } => "affine",
            TransportMap::ResidualFeatures { .. } => "residual_features",
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            TransportMap::Identity { .. } => 0,
            TransportMap::Affine { dim, .. } => dim * dim + dim,
            TransportMap::ResidualFeatures { coeffs, .. } => coeffs.len(),
        }
    }

    /// Flattened free parameters θ.
    pub fn params(&self) -> Vec<f64> {
        match self {
            TransportMap::Identity { .. } => Vec::new(),
            TransportMap::Affine { matrix, shift, .. } => {
                let mut p = matrix.clone();
                p.extend_from_slice(shift);
                p
            }
            TransportMap::ResidualFeatures { coeffs, .. } => coeffs.clone(),
        }
    }

    /// Same family and fixed structure, new θ.
    pub fn with_params(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.n_params() {
            return Err(shape_err(
                format!("{} map parameters", self.n_params()),
                theta.len(),
            ));
        }
        let mut out = self.clone();
        out.set_params(theta);
        Ok(out)
    }

    pub(crate) fn set_params(&mut self, theta: &[f64]) {
        match self {
            TransportMap::Identity { .. } => {}
            TransportMap::Affine { dim, matrix, shift } => {
                let dd = *dim * *dim;
                matrix.copy_from_slice(&theta[..dd]);
                shift.copy_from_slice(&theta[dd..]);
            }
            TransportMap::ResidualFeatures { coeffs, .. } => coeffs.copy_from_slice(theta),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(shape_err(
                format!("dimension {}", self.dim()),
                format!("dimension {d}"),
            ));
        }
        Ok(())
    }

    /// `T(point)`.
    pub fn apply(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point.len())?;
        let mut out = vec![0.0; point.len()];
        self.apply_into(point, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            TransportMap::Identity { .. } => out.copy_from_slice(x),
            TransportMap::Affine { dim, matrix, shift } => {
                for j in 0..*dim {
                    let row = &matrix[j * dim..(j + 1) * dim];
                    out[j] = shift[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            TransportMap::ResidualFeatures {
                dim,
                centers,
                bandwidth,
                coeffs,
            } => {
                out.copy_from_slice(x);
                let scale = -0.5 / (bandwidth * bandwidth);
                for (c, a) in centers.chunks_exact(*dim).zip(coeffs.chunks_exact(*dim)) {
                    let k = rbf(x, c, scale);
                    if k != 0.0 {
                        for (o, ak) in out.iter_mut().zip(a) {
                            *o += k * ak;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn rbf(x: &[f64], center: &[f64], scale: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    (scale * r2).exp()
}

/// `T # cloud`: same weights and labels, transported coordinates.
pub fn pushforward(map: &TransportMap, cloud: &ParticleCloud) -> Result<ParticleCloud> {
    map.check_dim(cloud.dim())?;
    let plan = MapPlan::new(map, cloud)?;
    cloud.with_points(plan.push(map, cloud))
}

/// `√(Σᵢ wᵢ ‖T1(xᵢ) − T2(xᵢ)‖²)`, the base-anchored distance between two
/// pushforwards of the same base.
pub fn map_l2_distance(t1: &TransportMap, t2: &TransportMap, base: &ParticleCloud) -> Result<f64> {
    t1.check_dim(base.dim())?;
    t2.check_dim(base.dim())?;
    let d = base.dim();
    let mut y1 = vec![0.0; d];
    let mut y2 = vec![0.0; d];
    let mut acc = 0.0;
    for (i, w) in base.weights().iter().enumerate() {
        let x = base.point(i);
        t1.apply_into(x, &mut y1);
        t2.apply_into(x, &mut y2);
        acc += w * sq_dist(&y1, &y2);
    }
    Ok(acc.sqrt())
}

/// Same quantity on already transported coordinates.
pub(crate) fn points_l2_distance(a: &[f64], b: &[f64], weights: &[f64], dim: usize) -> f64 {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .zip(weights)
        .map(|((p, q), w)| w * sq_dist(p, q))
        .sum::<f64>()
        .sqrt()
}

/// Monge cost `Σᵢ wᵢ ‖xᵢ − T(xᵢ)‖²`; an upper bound on `W₂²(T#P, P)`.
pub fn w2_monge(map: &TransportMap, base: &ParticleCloud) -> Result<f64> {
    map.check_dim(base.dim())?;
    let mut y = vec![0.0; base.dim()];
    let mut acc = 0.0;
    for (i, w) in base.weights().iter().enumerate() {
        let x = base.point(i);
        map.apply_into(x, &mut y);
        acc += w * sq_dist(x, &y);
    }
    Ok(acc)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact `W₂²` between two clouds.
///
/// In one dimension the monotone (quantile) coupling is optimal for any
/// weights and sizes. In higher dimensions the clouds must have equal size
/// `N <= 64` and uniform weights; the optimal coupling is then a permutation
/// found by exact assignment.
pub fn exact_w2_empirical(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err(
            format!("dimension {}", a.dim()),
            format!("dimension {}", b.dim()),
        ));
    }
    if a.dim() == 1 {
        return Ok(w2_sorted_1d(a, b));
    }
    if a.len() != b.len() || !a.is_uniform() || !b.is_uniform() {
        return Err(Error::Unsupported(
            "exact W2 in d >= 2 needs equal sizes and uniform weights".into(),
        ));
    }
    let n = a.len();
    if n > ORACLE_LIMIT {
        return Err(Error::OracleLimit {
            n,
            limit: ORACLE_LIMIT,
        });
    }
    let cost = pairwise_sq_costs(a, b);
    let assign = min_cost_assignment(&cost, n);
    let total: f64 = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(total / n as f64)
}

/// Row-major matrix of `‖aᵢ − bⱼ‖²`.
pub fn pairwise_sq_costs(a: &ParticleCloud, b: &ParticleCloud) -> Vec<f64> {
    let mut cost = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            cost.push(sq_dist(a.point(i), b.point(j)));
        }
    }
    cost
}

fn w2_sorted_1d(a: &ParticleCloud, b: &ParticleCloud) -> f64 {
    let sorted = |c: &ParticleCloud| {
        let mut v: Vec<(f64, f64)> = c
            .points()
            .iter()
            .copied()
            .zip(c.weights().iter().copied())
            .collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let (sa, sb) = (sorted(a), sorted(b));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (sa[0].1, sb[0].1);
    let mut cost = 0.0;
    while i < sa.len() && j < sb.len() {
        let diff = sa[i].0 - sb[j].0;
        let (advance_a, advance_b, mass) = if ra < rb {
            (true, false, ra)
        } else if rb < ra {
            (false, true, rb)
        } else {
            (true, true, ra)
        };
        cost += mass * diff * diff;
        ra -= mass;
        rb -= mass;
        if advance_a {
            i += 1;
            if i < sa.len() {
                ra = sa[i].1;
            }
        }
        if advance_b {
            j += 1;
            if j < sb.len() {
                rb = sb[j].1;
            }
        }
    }
    cost
}

/// `Σᵢ wᵢ J_θ(T at xᵢ)ᵀ cotangentᵢ`: the θ-gradient of `Σᵢ wᵢ ⟨cᵢ, T_θ(xᵢ)⟩`.
pub fn param_gradient(
    map: &TransportMap,
    base: &ParticleCloud,
    cotangents: &[f64],
) -> Result<Vec<f64>> {
    map.check_dim(base.dim())?;
    if cotangents.len() != base.points().len() {
        return Err(shape_err(
            format!("{}x{} cotangents", base.len(), base.dim()),
            cotangents.len(),
        ));
    }
    let plan = MapPlan::new(map, base)?;
    Ok(plan.param_gradient(base, base.weights(), cotangents))
}

/// Precomputed evaluation structure of one map family over one fixed base
/// cloud. Residual features are stored sparsely (exact zeros dropped), which
/// makes particle-centered narrow-bandwidth maps cost `O(N)` per pass.
#[derive(Debug, Clone)]
pub(crate) struct MapPlan {
    dim: usize,
    kind: PlanKind,
    /// Cholesky factor of the feature Gram matrix `Σᵢ wᵢ φ(xᵢ)φ(xᵢ)ᵀ`, shared
    /// by every output coordinate.
    metric: Option<Cholesky<f64, Dyn>>,
}

/// Feature count above which the metric is not factorized.
const METRIC_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
enum PlanKind {
    Identity,
    Affine,
    Residual {
        n_centers: usize,
        offsets: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl MapPlan {
    pub(crate) fn new(map: &TransportMap, base: &ParticleCloud) -> Result<Self> {
        map.check_dim(base.dim())?;
        let dim = base.dim();
        let kind = match map {
            TransportMap::Identity { .. } => PlanKind::Identity,
            TransportMap::Affine { .. } => PlanKind::Affine,
            TransportMap::ResidualFeatures {
                centers, bandwidth, ..
            } => {
                let scale = -0.5 / (bandwidth * bandwidth);
                let mut offsets = Vec::with_capacity(base.len() + 1);
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                offsets.push(0);
                for i in 0..base.len() {
                    let x = base.point(i);
                    for (j, c) in centers.chunks_exact(dim).enumerate() {
                        let k = rbf(x, c, scale);
                        if k != 0.0 {
                            cols.push(j);
                            vals.push(k);
                        }
                    }
                    offsets.push(cols.len());
                }
                PlanKind::Residual {
                    n_centers: centers.len() / dim,
                    offsets,
                    cols,
                    vals,
                }
            }
        };
        Ok(Self {
            dim,
            kind,
            metric: None,
        })
    }

    /// Plan carrying the factored feature metric, for callers that
    /// precondition. Factoring costs `O(m³)` in the feature count.
    pub(crate) fn with_metric(map: &TransportMap, base: &ParticleCloud) -> Result<Self> {
        let mut plan = Self::new(map, base)?;
        plan.metric = Self::factor_metric(&plan.kind, base);
        Ok(plan)
    }

    fn factor_metric(kind: &PlanKind, base: &ParticleCloud) -> Option<Cholesky<f64, Dyn>> {
        let d = base.dim();
        let gram: DMatrix<f64> = match kind {
            PlanKind::Identity => return None,
            PlanKind::Affine => {
                let mut g = DMatrix::zeros(d + 1, d + 1);
                for (i, w) in base.weights().iter().enumerate() {
                    let x = base.point(i);
                    for a in 0..=d {
                        let xa = if a < d { x[a] } else { 1.0 };
                        for b in 0..=d {
                            let xb = if b < d { x[b] } else { 1.0 };
                            g[(a, b)] += w * xa * xb;
                        }
                    }
                }
                g
            }
            PlanKind::Residual {
                n_centers,
                offsets,
                cols,
                vals,
            } => {
                if *n_centers > METRIC_LIMIT {
                    return None;
                }
                let mut g = DMatrix::zeros(*n_centers, *n_centers);
                for (i, w) in base.weights().iter().enumerate() {
                    let row = offsets[i]..offsets[i + 1];
                    for a in row.clone() {
                        let wa = w * vals[a];
                        for b in row.clone() {
                            g[(cols[a], cols[b])] += wa * vals[b];
                        }
                    }
                }
                g
            }
        };
        let m = gram.nrows();
        let ridge: f64 = 1e-10 * gram.trace() / m as f64;
        let mut reg = gram;
        for k in 0..m {
            reg[(k, k)] += ridge.max(f64::MIN_POSITIVE);
        }
        Cholesky::new(reg)
    }

    /// Maps a θ-gradient to the steepest-descent direction in the `L²(P)`
    /// metric of the transported particles. Left unchanged when no metric
    /// is available.
    pub(crate) fn precondition(&self, grad: &mut [f64]) {
        let Some(chol) = &self.metric else { return };
        let d = self.dim;
        let m = chol.l_dirty().nrows();
        match self.kind {
            PlanKind::Identity => {}
            PlanKind::Affine => {
                // θ = (A row-major, b); output coordinate j owns (A[j, ·], b[j]).
                for j in 0..d {
                    let mut v = DVector::zeros(m);
                    for k in 0..d {
                        v[k] = grad[j * d + k];
                    }
                    v[d] = grad[d * d + j];
                    chol.solve_mut(&mut v);
                    for k in 0..d {
                        grad[j * d + k] = v[k];
                    }
                    grad[d * d + j] = v[d];
                }
            }
            PlanKind::Residual { .. } => {
                for k in 0..d {
                    let mut v = DVector::from_iterator(m, (0..m).map(|c| grad[c * d + k]));
                    chol.solve_mut(&mut v);
                    for c in 0..m {
                        grad[c * d + k] = v[c];
                    }
                }
            }
        }
    }

    /// Transported coordinates of every base particle (row-major).
    pub(crate) fn push(&self, map: &TransportMap, base: &ParticleCloud) -> Vec<f64> {
        let mut out = vec![0.0; base.points().len()];
        self.push_into(map, base, &mut out);
        out
    }

    pub(crate) fn push_into(&self, map: &TransportMap, base: &ParticleCloud, out: &mut [f64]) {
        let d = self.dim;
        match (&self.kind, map) {
            (PlanKind::Identity, _) => out.copy_from_slice(base.points()),
            (PlanKind::Affine, _) => {
                for (x, y) in base.points().chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    map.apply_into(x, y);
                }
            }
            (
                PlanKind::Residual {
                    offsets,
                    cols,
                    vals,
                    ..
                },
                TransportMap::ResidualFeatures { coeffs, .. },
            ) => {
                out.copy_from_slice(base.points());
                for (i, y) in out.chunks_exact_mut(d).enumerate() {
                    for idx in offsets[i]..offsets[i + 1] {
                        let a = &coeffs[cols[idx] * d..(cols[idx] + 1) * d];
                        for (o, ak) in y.iter_mut().zip(a) {
                            *o += vals[idx] * ak;
                        }
                    }
                }
            }
            (PlanKind::Residual { .. }, _) => unreachable!("plan built for a residual map"),
        }
    }

    /// Minimum-`L²(P)`-norm particle field whose θ-gradient (through
    /// [`MapPlan::param_gradient`]) equals `grad`, up to the metric ridge.
    /// `None` when the plan has no metric.
    pub(crate) fn represent(&self, base: &ParticleCloud, grad: &[f64]) -> Option<Vec<f64>> {
        self.metric.as_ref()?;
        let d = self.dim;
        let mut v = grad.to_vec();
        self.precondition(&mut v);
        let mut out = vec![0.0; base.points().len()];
        match &self.kind {
            PlanKind::Identity => return None,
            PlanKind::Affine => {
                for (x, y) in base.points().chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    for j in 0..d {
                        y[j] = v[d * d + j] + (0..d).map(|k| v[j * d + k] * x[k]).sum::<f64>();
                    }
                }
            }
            PlanKind::Residual {
                offsets,
                cols,
                vals,
                ..
            } => {
                for (i, y) in out.chunks_exact_mut(d).enumerate() {
                    for idx in offsets[i]..offsets[i + 1] {
                        let a = &v[cols[idx] * d..(cols[idx] + 1) * d];
                        for (o, ak) in y.iter_mut().zip(a) {
                            *o += vals[idx] * ak;
                        }
                    }
                }
            }
        }
        Some(out)
    }

    pub(crate) fn param_gradient(
        &self,
        base: &ParticleCloud,
        weights: &[f64],
        cot: &[f64],
    ) -> Vec<f64> {
        let d = self.dim;
        match &self.kind {
            PlanKind::Identity => Vec::new(),
            PlanKind::Affine => {
                let mut g = vec![0.0; d * d + d];
                for (i, w) in weights.iter().enumerate() {
                    let x = base.point(i);
                    let c = &cot[i * d..(i + 1) * d];
                    for j in 0..d {
                        let wc = w * c[j];
                        for k in 0..d {
                            g[j * d + k] += wc * x[k];
                        }
                        g[d * d + j] += wc;
                    }
                }
                g
            }
            PlanKind::Residual {
                n_centers,
                offsets,
                cols,
                vals,
            } => {
                let mut g = vec![0.0; n_centers * d];
                for (i, w) in weights.iter().enumerate() {
                    let c = &cot[i * d..(i + 1) * d];
                    for idx in offsets[i]..offsets[i + 1] {
                        let wk = w * vals[idx];
                        let gj = &mut g[cols[idx] * d..(cols[idx] + 1) * d];
                        for (gk, ck) in gj.iter_mut().zip(c) {
                            *gk += wk * ck;
                        }
                    }
                }
                g
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    family: String,
    dims: usize,
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth: Option<f64>,
}

impl From<TransportMap> for MapJson {
    fn from(map: TransportMap) -> Self {
        let params = map.params();
        let dims = map.dim();
        let family = map.family().to_string();
        let (centers, bandwidth) = match map {
            TransportMap::ResidualFeatures {
                centers, bandwidth, ..
            } => (Some(centers), Some(bandwidth)),
            _ => (None, None),
        };
        MapJson {
            family,
            dims,
            params,
            centers,
            bandwidth,
        }
    }
}

impl TryFrom<MapJson> for TransportMap {
    type Error = Error;

    fn try_from(j: MapJson) -> Result<Self> {
        let dim = j.dims;
        let map = match j.family.as_str() {
            "identity" => {
                if !j.params.is_empty() {
                    return Err(shape_err("0 parameters", j.params.len()));
                }
                TransportMap::Identity { dim }
            }
            "affine" => {
                if j.params.len() != dim * dim + dim {
                    return Err(shape_err(
                        format!("{} parameters", dim * dim + dim),
                        j.params.len(),
                    ));
                }
                TransportMap::Affine {
                    dim,
                    matrix: j.params[..dim * dim].to_vec(),
                    shift: j.params[dim * dim..].to_vec(),
                }
            }
            "residual_features" => TransportMap::ResidualFeatures {
                dim,
                centers: j.centers.ok_or_else(|| {
                    Error::Validation("residual_features map needs centers".into())
                })?,
                bandwidth: j.bandwidth.ok_or_else(|| {
                    Error::Validation("residual_features map needs a bandwidth".into())
                })?,
                coeffs: j.params,
            },
            other => return Err(Error::Validation(format!("unknown map family {other:?}"))),
        };
        map.validate()?;
        Ok(map)
    }
}

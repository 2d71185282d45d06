//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wass_dro::jko::JkoConfig;
use wass_dro::measures::{load_csv, sample};
use wass_dro::solver::{OuterConfig, StepSize};
use wass_dro::testbeds::{self, Testbed};
use wass_dro::{
    Component, Constants, DecisionModel, Discrepancy, LossKind, ProblemSpec, ReferenceMeasure,
    TransportMap,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Diagnose,
    Sweep,
    Oracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Diagnose => "diagnose",
            Mode::Sweep => "sweep",
            Mode::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Must match the subcommand when present.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    /// Overrides the testbed model when both are given.
    #[serde(default)]
    pub model: Option<DecisionModel>,
    #[serde(default)]
    pub outer: Option<OuterSection>,
    #[serde(default)]
    pub inner: JkoConfig,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterSection {
    pub k: usize,
    #[serde(default = "auto_eta")]
    pub eta: StepSize,
    #[serde(default)]
    pub smooth_mode: bool,
}

fn auto_eta() -> StepSize {
    StepSize::Auto
}

/// Either a named testbed or explicit components. `lambda` and `constants`
/// override the testbed values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub testbed: Option<TestbedConfig>,
    #[serde(default)]
    pub components: Vec<ComponentConfig>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub constants: Option<Constants>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestbedConfig {
    Quadratic {
        n: usize,
    },
    ParamQuadratic {
        n: usize,
        center: Vec<f64>,
        radius: f64,
    },
    AdversarialLogistic {
        n: usize,
    },
    NonconvexMlp {
        n: usize,
        rho: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub loss: LossKind,
    #[serde(default = "plus_one")]
    pub sign: f64,
    #[serde(default)]
    pub labeled: bool,
    #[serde(default)]
    pub reference: Option<ReferenceMeasure>,
    pub particles: ParticleSource,
    #[serde(default = "w2sq")]
    pub discrepancy: Discrepancy,
    pub map: MapConfig,
}

fn plus_one() -> f64 {
    1.0
}

fn w2sq() -> Discrepancy {
    Discrepancy::W2Sq
}

/// `n` draws from the reference, or the rows of a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParticleSource {
    Sampled { n: usize },
    File { path: PathBuf },
}

/// Initial map of a component; all families start at the identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Identity,
    Affine,
    /// Gaussian features centered at the particles unless `centers` is set.
    Residual {
        bandwidth: f64,
        #[serde(default)]
        centers: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "probe", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeConfig {
    WeakConvexity {
        #[serde(default = "fifty")]
        n_triples: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Danskin {
        /// Defaults to the model parameters.
        #[serde(default)]
        phi: Option<Vec<f64>>,
        #[serde(default = "danskin_h")]
        h: f64,
        #[serde(default = "danskin_tol")]
        max_rel_error: f64,
    },
    MoreauGrad {
        #[serde(default)]
        phi: Option<Vec<f64>>,
        /// Defaults to `2ρ`.
        #[serde(default)]
        r: Option<f64>,
        #[serde(default = "moreau_tol")]
        tol: f64,
        #[serde(default)]
        max_norm: Option<f64>,
    },
    AggConvexity {
        #[serde(default = "hundred")]
        n_curves: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Contraction {
        #[serde(default)]
        gamma: Option<f64>,
    },
    Lipschitz {
        #[serde(default = "fifty")]
        pairs: usize,
        #[serde(default = "lipschitz_radius")]
        radius: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    GradientMapping {
        #[serde(default)]
        phi: Option<Vec<f64>>,
        /// Defaults to the outer step size, or `1/√K` with K = 1 without one.
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        max_norm: Option<f64>,
    },
}

fn fifty() -> usize {
    50
}
fn hundred() -> usize {
    100
}
fn danskin_h() -> f64 {
    1e-4
}
fn danskin_tol() -> f64 {
    1e-3
}
fn moreau_tol() -> f64 {
    1e-6
}
fn lipschitz_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One of `outer.k`, `problem.lambda`, `inner.gamma`.
    pub parameter: String,
    pub values: Vec<serde_json::Value>,
    /// Also compute the Moreau gradient norm at each branch's best iterate.
    #[serde(default)]
    pub moreau_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    OuterK,
    Lambda,
    Gamma,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "outer.k" | "outer.K" => Ok(SweepParameter::OuterK),
            "problem.lambda" => Ok(SweepParameter::Lambda),
            "inner.gamma" => Ok(SweepParameter::Gamma),
            other => bail!("unknown sweep parameter `{other}` (expected outer.K, problem.lambda or inner.gamma)"),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::OuterK => "K",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub a: PathBuf,
    pub b: PathBuf,
}

impl ExperimentConfig {
    pub fn from_str_at(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow::anyhow!("field `{path}`: {inner}")
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "field `schema_version`: unsupported version {} (this binary reads {SCHEMA_VERSION})",
                cfg.schema_version
            );
        }
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_at(&text, &base)
            .with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Checks that the config carries what `mode` needs and that referenced
    /// files exist.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                bail!(
                    "field `mode`: config is for `{}`, invoked as `{}`",
                    m.name(),
                    mode.name()
                );
            }
        }
        let need_problem = matches!(mode, Mode::Run | Mode::Diagnose | Mode::Sweep);
        if need_problem && self.problem.is_none() {
            bail!("field `problem`: required for {}", mode.name());
        }
        if matches!(mode, Mode::Run | Mode::Sweep) && self.outer.is_none() {
            bail!("field `outer`: required for {}", mode.name());
        }
        if mode == Mode::Sweep && self.sweep.is_none() {
            bail!("field `sweep`: required for sweep");
        }
        if mode == Mode::Oracle {
            let o = self
                .oracle
                .as_ref()
                .context("field `oracle`: required for oracle")?;
            for (name, p) in [("a", &o.a), ("b", &o.b)] {
                let full = self.resolve(p);
                if !full.is_file() {
                    bail!(
                        "field `oracle.{name}`: file {} does not exist",
                        full.display()
                    );
                }
            }
        }
        if let Some(problem) = &self.problem {
            for (c, comp) in problem.components.iter().enumerate() {
                if let ParticleSource::File { path } = &comp.particles {
                    let full = self.resolve(path);
                    if !full.is_file() {
                        bail!(
                            "field `problem.components[{c}].particles.path`: file {} does not exist",
                            full.display()
                        );
                    }
                }
            }
        }
        Ok(())
    }

    pub fn outer_config(&self) -> Result<OuterConfig> {
        let o = self.outer.as_ref().context("field `outer`: missing")?;
        let mut cfg = OuterConfig::new(o.k, o.eta, self.inner);
        cfg.smooth_mode = o.smooth_mode;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    /// Builds the problem and model; particle draws are seeded from
    /// `self.seed` (component `c` uses `seed + c`).
    pub fn build(&self) -> Result<Testbed> {
        let problem = self.problem.as_ref().context("field `problem`: missing")?;
        let tb = match (&problem.testbed, problem.components.is_empty()) {
            (Some(_), false) => {
                bail!("field `problem`: give either `testbed` or `components`, not both")
            }
            (None, true) => bail!("field `problem`: needs `testbed` or `components`"),
            (Some(t), true) => build_testbed(t, self.seed)?,
            (None, false) => {
                let mut comps = Vec::with_capacity(problem.components.len());
                for (c, cc) in problem.components.iter().enumerate() {
                    comps.push(
                        self.build_component(cc, self.seed.wrapping_add(c as u64))
                            .with_context(|| format!("field `problem.components[{c}]`"))?,
                    );
                }
                let lambda = problem
                    .lambda
                    .context("field `problem.lambda`: required with components")?;
                let constants = problem
                    .constants
                    .context("field `problem.constants`: required with components")?;
                let model = self
                    .model
                    .clone()
                    .context("field `model`: required with components")?;
                Testbed {
                    spec: ProblemSpec::new(comps, lambda, constants)?,
                    model,
                }
            }
        };
        let lambda = problem.lambda.unwrap_or(tb.spec.lambda());
        let constants = problem.constants.unwrap_or(tb.spec.constants());
        let spec = if lambda != tb.spec.lambda() || constants != tb.spec.constants() {
            ProblemSpec::new(tb.spec.components().to_vec(), lambda, constants)?
        } else {
            tb.spec
        };
        let model = self.model.clone().unwrap_or(tb.model);
        model.validate()?;
        spec.check_model(&model)?;
        Ok(Testbed { spec, model })
    }

    fn build_component(&self, cc: &ComponentConfig, seed: u64) -> Result<Component> {
        let cloud = match &cc.particles {
            ParticleSource::Sampled { n } => {
                let reference = cc
                    .reference
                    .as_ref()
                    .context("`reference` is required to sample particles")?;
                sample(reference, *n, seed)?
            }
            ParticleSource::File { path } => load_csv(self.resolve(path))?,
        };
        let dim = cloud.dim();
        let map = match &cc.map {
            MapConfig::Identity => TransportMap::identity(dim),
            MapConfig::Affine => TransportMap::affine_identity(dim),
            MapConfig::Residual {
                bandwidth,
                centers: None,
            } => TransportMap::residual_on_particles(&cloud, *bandwidth)?,
            MapConfig::Residual {
                bandwidth,
                centers: Some(c),
            } => TransportMap::residual(dim, c.clone(), *bandwidth)?,
        };
        Ok(Component::new(
            cc.loss.clone(),
            cc.sign,
            cc.labeled,
            cloud,
            cc.reference.clone(),
            cc.discrepancy,
            map,
        )?)
    }
}

fn build_testbed(t: &TestbedConfig, seed: u64) -> Result<Testbed> {
    Ok(match t {
        TestbedConfig::Quadratic { n } => testbeds::quadratic(*n, seed)?,
        TestbedConfig::ParamQuadratic { n, center, radius } => {
            testbeds::param_quadratic(*n, seed, center.clone(), *radius)?
        }
        TestbedConfig::AdversarialLogistic { n } => testbeds::adversarial_logistic(*n, seed)?,
        TestbedConfig::NonconvexMlp { n, rho } => testbeds::nonconvex_mlp(*n, seed, *rho)?,
    })
}

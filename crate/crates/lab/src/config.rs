//! Experiment configuration: one TOML file of dotted keys such as
//! `model.n = 256`. Unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use freesym::free_sums::SolverConfig;
use freesym::rmt::ModelConfig;
use freesym::SymmetricSpace;
use serde::Deserialize;

/// Output directory override; the only setting read from the environment.
pub const OUT_ENV: &str = "FREESYM_LAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Norm,
    Mu,
    Decompose,
    Voiculescu,
    Maincor,
    Buchholz,
    Lengthd,
    Js,
    Burkholder,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Norm,
        Suite::Mu,
        Suite::Decompose,
        Suite::Voiculescu,
        Suite::Maincor,
        Suite::Buchholz,
        Suite::Lengthd,
        Suite::Js,
        Suite::Burkholder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Norm => "norm",
            Suite::Mu => "mu",
            Suite::Decompose => "decompose",
            Suite::Voiculescu => "voiculescu",
            Suite::Maincor => "maincor",
            Suite::Buchholz => "buchholz",
            Suite::Lengthd => "lengthd",
            Suite::Js => "js",
            Suite::Burkholder => "burkholder",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).with_context(|| format!("unknown suite {s:?}"))
    }
}

/// How coefficients are drawn. Free-sum suites: `bernoulli` (copies of
/// `diag(1, −1)`), `gaussian` (centered complex Gaussian matrices),
/// `diagonal` (centered real Gaussian diagonals). Word suites: `ones`,
/// `bernoulli` (random signs), `gaussian`. The Johnson–Schechtman suite:
/// `bernoulli` (values ±1) or `gaussian` (values ±|g|).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Bernoulli,
    Gaussian,
    Diagonal,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSpec {
    pub count: usize,
    pub seed: u64,
    pub distribution: Distribution,
    /// Number of free summands.
    pub k: usize,
    /// Matrix size of each summand, or of the filtered algebra.
    pub size: usize,
    /// Word length, alphabet size and coefficient size.
    pub d: usize,
    pub n: usize,
    pub m: usize,
    /// Word-ball radius of the compression bound.
    pub radius: usize,
    /// Filtration length.
    pub depth: usize,
    /// Symmetric pairs `±a` per Johnson–Schechtman summand.
    pub atoms: usize,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            count: 1,
            seed: 0,
            distribution: Distribution::Gaussian,
            k: 2,
            size: 2,
            d: 2,
            n: 2,
            m: 1,
            radius: 4,
            depth: 3,
            atoms: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub n: usize,
    pub seed: u64,
    pub trials: usize,
    pub slack: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self { n: d.n, seed: d.seed, trials: d.trials, slack: d.slack }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub max_iter: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub tol_rel: f64,
    pub seed: u64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self { max_iter: d.max_iter, eps_start: d.eps_start, eps_end: d.eps_end, tol_rel: d.tol_rel, seed: d.seed }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on decomposition residuals.
    pub residual: f64,
    /// Bound on identities that hold exactly.
    pub exact: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { residual: 1e-5, exact: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Fill the `ms` column with wall time; off by default so that reruns
    /// give identical bytes.
    pub timing: bool,
    pub plotdata: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("lab-out"), timing: false, plotdata: true }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Suite,
    #[serde(default)]
    pub instance: InstanceSpec,
    #[serde(default = "default_spaces")]
    pub spaces: Vec<String>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_spaces() -> Vec<String> {
    vec!["lp:inf".into()]
}

fn lp_grid() -> Vec<String> {
    ["lp:1", "lp:1.5", "lp:2", "lp:3", "lp:inf", "l1+tlinf:0.1", "l1+tlinf:1", "l1+tlinf:10"]
        .map(String::from)
        .to_vec()
}

impl ExperimentConfig {
    /// A quick run of `suite` with default settings.
    pub fn smoke(suite: Suite) -> Self {
        let mut cfg = Self {
            experiment: suite,
            instance: InstanceSpec::default(),
            spaces: default_spaces(),
            model: ModelSpec { n: 32, trials: 3, ..ModelSpec::default() },
            solver: SolverSpec::default(),
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
        };
        match suite {
            Suite::Voiculescu => cfg.instance.distribution = Distribution::Bernoulli,
            Suite::Maincor => cfg.spaces = ["lp:1", "lp:2", "lp:inf", "l1+tlinf:0.1", "l1+tlinf:1", "l1+tlinf:10"].map(String::from).to_vec(),
            Suite::Js => cfg.spaces = vec!["lp:inf".into(), "l1+tlinf:1".into()],
            Suite::Burkholder => {
                cfg.instance.size = 4;
                cfg.spaces = vec!["lp:2".into()];
            }
            _ => {}
        }
        cfg
    }

    /// Settings of the corresponding acceptance check.
    pub fn acceptance(suite: Suite) -> Self {
        let mut cfg = Self::smoke(suite);
        cfg.model = ModelSpec { n: 256, seed: 0, trials: 20, slack: 0.05 };
        match suite {
            Suite::Voiculescu => {}
            Suite::Maincor | Suite::Norm | Suite::Decompose => {
                cfg.instance.count = 10;
                cfg.model.trials = 10;
                cfg.spaces = lp_grid();
            }
            Suite::Mu => cfg.spaces = lp_grid(),
            Suite::Buchholz => {
                cfg.instance.count = 20;
                cfg.instance.d = 3;
                cfg.instance.m = 2;
                cfg.instance.radius = 3;
                cfg.model.trials = 1;
            }
            Suite::Lengthd => {
                cfg.instance.count = 4;
                cfg.instance.m = 2;
                cfg.spaces = lp_grid();
                cfg.model = ModelSpec { n: 128, seed: 0, trials: 5, slack: 0.05 };
                cfg.solver.tol_rel = 1e-13;
                cfg.solver.eps_end = 1e-10;
            }
            Suite::Js => {
                cfg.instance.k = 4;
                cfg.instance.atoms = 4;
                cfg.model.n = 64;
            }
            Suite::Burkholder => {
                cfg.instance.count = 50;
                cfg.instance.size = 6;
            }
        }
        cfg
    }

    pub fn preset(suite: Suite, name: &str) -> Result<Self> {
        match name {
            "smoke" => Ok(Self::smoke(suite)),
            "acceptance" => Ok(Self::acceptance(suite)),
            other => bail!("unknown preset {other:?}; expected smoke or acceptance"),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parsed_spaces(&self) -> Result<Vec<SymmetricSpace>> {
        self.spaces.iter().map(|s| s.parse::<SymmetricSpace>().with_context(|| format!("space {s:?}"))).collect()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { n: self.model.n, seed: self.model.seed, trials: self.model.trials, slack: self.model.slack }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig { max_iter: s.max_iter, eps_start: s.eps_start, eps_end: s.eps_end, tol_rel: s.tol_rel, seed: s.seed }
    }

    /// Replaces both the instance and the model seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.instance.seed = seed;
        self.model.seed = seed;
        self
    }

    /// Checks every key before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.spaces.is_empty() {
            bail!("the space grid is empty");
        }
        self.parsed_spaces()?;
        self.model_config().validate()?;
        self.solver_config().validate()?;
        let i = &self.instance;
        for (name, v) in [("count", i.count), ("k", i.k), ("size", i.size), ("d", i.d), ("n", i.n), ("m", i.m), ("depth", i.depth)] {
            if v == 0 {
                bail!("instance.{name} must be positive");
            }
        }
        let uses = |suites: &[Suite]| suites.contains(&self.experiment);
        let free = [Suite::Norm, Suite::Mu, Suite::Decompose, Suite::Voiculescu, Suite::Maincor];
        let allowed: &[Distribution] = if uses(&free) {
            &[Distribution::Bernoulli, Distribution::Gaussian, Distribution::Diagonal]
        } else if uses(&[Suite::Buchholz, Suite::Lengthd]) {
            &[Distribution::Bernoulli, Distribution::Gaussian, Distribution::Ones]
        } else if uses(&[Suite::Js]) {
            &[Distribution::Bernoulli, Distribution::Gaussian]
        } else {
            &[Distribution::Gaussian]
        };
        if !allowed.contains(&i.distribution) {
            bail!("distribution {:?} does not apply to suite {}", i.distribution, self.experiment);
        }
        if uses(&free) && i.distribution != Distribution::Bernoulli && i.size < 2 {
            bail!("centered summands need instance.size ≥ 2");
        }
        if uses(&[Suite::Js]) && i.atoms == 0 {
            bail!("instance.atoms must be positive");
        }
        for (name, v) in [("tolerances.residual", self.tolerances.residual), ("tolerances.exact", self.tolerances.exact)] {
            if !(v >= 0.0) {
                bail!("{name} must be non-negative");
            }
        }
        Ok(())
    }

    /// `--out`, then the environment override, then the file.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| self.output.dir.clone())
    }
}

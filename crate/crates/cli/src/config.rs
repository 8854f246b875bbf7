//! Experiment configuration: TOML file, command-line overrides and defaults.
//!
//! Every table rejects unknown keys. Missing keys fall back to the benchmark
//! settings (λ = 0.2, 800 steps, IK cap 30, the built-in arm table).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Error in the configuration or the flags; maps to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Example1,
    Example2,
    Sweep,
    Stability,
}

impl Experiment {
    pub fn id(self) -> &'static str {
        match self {
            Self::Example1 => "example1",
            Self::Example2 => "example2",
            Self::Sweep => "sweep",
            Self::Stability => "stability",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must name the verb being run.
    pub experiment: Option<String>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub example1: Example1Config,
    #[serde(default)]
    pub example2: Example2Config,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    /// User-defined frozen loops, referenced by name from `sweep` and
    /// `stability`.
    #[serde(default)]
    pub loops: BTreeMap<String, LoopDef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Example1Config {
    pub lambda: f64,
    pub steps: usize,
    pub variants: Vec<String>,
    pub seed_pjm: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Start of the post-transient window for the summary metrics.
    pub cutoff: i64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            steps: 800,
            variants: vec!["quartic".into(), "constrained".into(), "first_order".into()],
            seed_pjm: 0.01,
            lower: vec![-0.3, -0.5],
            upper: vec![0.1, 0.5],
            cutoff: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Example2Config {
    /// Traverse duration, s.
    pub tf: f64,
    /// Sample period, s.
    pub t0: f64,
    pub cap: usize,
    /// Optional DH table file; the built-in arm otherwise.
    pub chain: Option<PathBuf>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Condition number above which a sample counts as ill-conditioned.
    pub cond_threshold: f64,
}

impl Default for Example2Config {
    fn default() -> Self {
        Self {
            tf: 10.0,
            t0: 1e-3,
            cap: 30,
            chain: None,
            start: mfac::kinematics::frame_a().to_vec(),
            goal: mfac::kinematics::frame_c().to_vec(),
            cond_threshold: 20000.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    #[serde(rename = "loop")]
    pub loop_name: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub steps: usize,
    pub ts: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            loop_name: "scalar".into(),
            lambda_min: 0.0,
            lambda_max: 1.0,
            points: 21,
            steps: 5000,
            ts: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    #[serde(rename = "loop")]
    pub loop_name: String,
    pub lambda: f64,
    pub steps: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            loop_name: "mimo".into(),
            lambda: 0.2,
            steps: 5000,
        }
    }
}

/// A frozen loop `φ_L = [Φ1 … Φ_Ly+Lu]`; each block is a list of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopDef {
    pub ly: usize,
    pub lu: usize,
    pub blocks: Vec<Vec<Vec<f64>>>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub lambda: Option<f64>,
}

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MFAC_LAB_OUT";
const DEFAULT_OUT: &str = "runs";

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.message().to_string()))
    }

    /// Applies flag overrides for `exp` and checks the result.
    pub fn resolve(mut self, exp: Experiment, ov: &Overrides) -> Result<Self, ConfigError> {
        if let Some(id) = &self.experiment {
            // "lambda-sweep" is the long name of the sweep experiment
            let matches = id == exp.id() || (exp == Experiment::Sweep && id == "lambda-sweep");
            if !matches {
                return Err(ConfigError(format!(
                    "config is for experiment '{id}' but '{}' was requested",
                    exp.id()
                )));
            }
        }
        if ov.out.is_some() {
            self.out = ov.out.clone();
        }
        match exp {
            Experiment::Example1 => {
                if let Some(s) = ov.steps {
                    self.example1.steps = s;
                }
                if let Some(l) = ov.lambda {
                    self.example1.lambda = l;
                }
            }
            Experiment::Example2 => {
                if ov.steps.is_some() || ov.lambda.is_some() {
                    return Err(ConfigError(
                        "example2 takes neither --steps nor --lambda: the path length follows tf/t0 and λ is scheduled from the condition number".into(),
                    ));
                }
            }
            Experiment::Sweep => {
                if let Some(s) = ov.steps {
                    self.sweep.steps = s;
                }
                if let Some(l) = ov.lambda {
                    self.sweep.lambda_max = l;
                }
            }
            Experiment::Stability => {
                if let Some(s) = ov.steps {
                    self.stability.steps = s;
                }
                if let Some(l) = ov.lambda {
                    self.stability.lambda = l;
                }
            }
        }
        self.validate(exp)?;
        Ok(self)
    }

    fn validate(&self, exp: Experiment) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        match exp {
            Experiment::Example1 => {
                let c = &self.example1;
                if !(c.lambda >= 0.0) || !c.lambda.is_finite() {
                    return bad(format!("example1.lambda must be a finite non-negative number, got {}", c.lambda));
                }
                if c.steps == 0 {
                    return bad("example1.steps must be positive".into());
                }
                if c.variants.is_empty() {
                    return bad("example1.variants is empty".into());
                }
                for v in &c.variants {
                    if !["quartic", "constrained", "first_order"].contains(&v.as_str()) {
                        return bad(format!(
                            "unknown variant '{v}' (expected quartic, constrained or first_order)"
                        ));
                    }
                }
                if c.lower.len() != 2 || c.upper.len() != 2 {
                    return bad("example1.lower and example1.upper need two entries".into());
                }
            }
            Experiment::Example2 => {
                let c = &self.example2;
                if !(c.t0 > 0.0) || !(c.tf >= c.t0) || !c.tf.is_finite() {
                    return bad(format!("example2 needs 0 < t0 <= tf, got t0 = {}, tf = {}", c.t0, c.tf));
                }
                if c.cap == 0 {
                    return bad("example2.cap must be positive".into());
                }
                if c.start.iter().chain(&c.goal).any(|v| !v.is_finite()) {
                    return bad("example2.start and example2.goal must be finite".into());
                }
            }
            Experiment::Sweep => {
                let c = &self.sweep;
                if c.points < 2 {
                    return bad("sweep.points must be at least 2".into());
                }
                if !(c.lambda_min >= 0.0) || !(c.lambda_max > c.lambda_min) || !c.lambda_max.is_finite() {
                    return bad(format!(
                        "sweep needs 0 <= lambda_min < lambda_max, got [{}, {}]",
                        c.lambda_min, c.lambda_max
                    ));
                }
                if c.steps == 0 || !(c.ts > 0.0) {
                    return bad("sweep.steps and sweep.ts must be positive".into());
                }
                self.frozen_loop(&c.loop_name)?;
            }
            Experiment::Stability => {
                let c = &self.stability;
                if !(c.lambda >= 0.0) || !c.lambda.is_finite() {
                    return bad(format!("stability.lambda must be a finite non-negative number, got {}", c.lambda));
                }
                if c.steps == 0 {
                    return bad("stability.steps must be positive".into());
                }
                self.frozen_loop(&c.loop_name)?;
            }
        }
        Ok(())
    }

    /// Output directory: flag or file, then `$MFAC_LAB_OUT`, then `runs`.
    pub fn out_root(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Looks up a loop by name: user definitions first, then the presets.
    pub fn frozen_loop(&self, name: &str) -> Result<mfac::edlm::PseudoJacobian, ConfigError> {
        match self.loops.get(name) {
            Some(def) => crate::loops::from_def(def),
            None => crate::loops::preset(name).ok_or_else(|| {
                ConfigError(format!(
                    "unknown loop '{name}' (presets: {})",
                    crate::loops::PRESETS.join(", ")
                ))
            }),
        }
    }
}

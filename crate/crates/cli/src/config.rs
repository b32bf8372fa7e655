//! Run configuration: one JSON document, with command-line flags as overrides.

use std::path::{Path, PathBuf};

use natlift_core::base::{BaseModel, BaseSpec};
use natlift_core::lift::{LiftParams, LiftPreset, LiftSpec};
use natlift_core::oracle::BASE_STEP;
use natlift_core::sampling::SampleSpec;
use natlift_core::scalarfn::CoeffSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Base model as a full object or a `euclidean:n` / `sphere:2:r` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseField {
    Short(String),
    Spec(BaseSpec),
}

impl BaseField {
    pub fn spec(&self) -> Result<BaseSpec, CliError> {
        match self {
            BaseField::Short(s) => s.parse().map_err(|e| CliError::Config(format!("base: {e}"))),
            BaseField::Spec(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Algebraic identities: inverse blocks, torsion, curvature symmetries.
    pub closed_form: f64,
    /// Checks backed by finite differences.
    pub fd: f64,
    pub flatness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            closed_form: 1e-9,
            fd: 1e-4,
            flatness: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Step of the finite-difference curvature oracle.
    pub step: f64,
    /// Number of leading sample points compared against the oracle.
    pub points: usize,
    /// Step of the metric-compatibility differences.
    pub compat_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            step: BASE_STEP,
            points: 5,
            compat_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub base: Option<BaseField>,
    #[serde(default)]
    pub lift: Option<LiftSpec>,
    #[serde(default)]
    pub sample: SampleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Enforce `K = K₀(k)` for some `k` and a zero sectional spread.
    #[serde(default)]
    pub expect_constant_curvature: bool,
    /// Include wall-clock timings in reports.
    #[serde(default = "yes")]
    pub timings: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base: None,
            lift: None,
            sample: SampleSpec::default(),
            tolerances: Tolerances::default(),
            oracle: OracleConfig::default(),
            expect_constant_curvature: false,
            timings: true,
            output: OutputPaths::default(),
        }
    }
}

/// Flag values that override configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub base: Option<String>,
    pub preset: Option<String>,
    pub alpha: Option<String>,
    pub beta: Option<String>,
    pub c: Option<f64>,
    pub points: Option<usize>,
    pub planes: Option<usize>,
    pub oracle_step: Option<f64>,
    pub oracle_points: Option<usize>,
    pub expect_constant_curvature: bool,
    pub no_timings: bool,
}

fn coeff(flag: &str, s: &str) -> Result<CoeffSpec, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.sample.seed = seed;
        }
        if let Some(b) = &o.base {
            self.base = Some(BaseField::Short(b.clone()));
        }
        if let Some(p) = o.points {
            self.sample.points = p;
        }
        if let Some(p) = o.planes {
            self.sample.planes = p;
        }
        if let Some(s) = o.oracle_step {
            self.oracle.step = s;
        }
        if let Some(p) = o.oracle_points {
            self.oracle.points = p;
        }
        self.expect_constant_curvature |= o.expect_constant_curvature;
        if o.no_timings {
            self.timings = false;
        }

        let theorem4_flags = o.alpha.is_some() || o.beta.is_some() || o.c.is_some();
        if theorem4_flags && matches!(o.preset.as_deref(), Some("sasaki" | "cheeger-gromoll")) {
            return Err(CliError::Usage(
                "--alpha, --beta and --c only apply to the theorem4 preset".into(),
            ));
        }
        match o.preset.as_deref() {
            Some("sasaki") => self.lift = Some(LiftSpec::Preset(LiftPreset::Sasaki)),
            Some("cheeger-gromoll") => self.lift = Some(LiftSpec::Preset(LiftPreset::CheegerGromoll)),
            Some("theorem4") => {
                let (mut alpha, mut beta, mut c) = match &self.lift {
                    Some(LiftSpec::Preset(LiftPreset::Theorem4 { alpha, beta, c })) => {
                        (Some(alpha.clone()), Some(beta.clone()), Some(*c))
                    }
                    _ => (None, None, None),
                };
                if let Some(a) = &o.alpha {
                    alpha = Some(coeff("alpha", a)?);
                }
                if let Some(b) = &o.beta {
                    beta = Some(coeff("beta", b)?);
                }
                if o.c.is_some() {
                    c = o.c;
                }
                match (alpha, beta, c) {
                    (Some(alpha), Some(beta), Some(c)) => {
                        self.lift = Some(LiftSpec::Preset(LiftPreset::Theorem4 { alpha, beta, c }))
                    }
                    _ => {
                        return Err(CliError::Usage(
                            "--preset theorem4 needs --alpha, --beta and --c".into(),
                        ))
                    }
                }
            }
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "unknown preset {other:?} (expected sasaki, cheeger-gromoll or theorem4)"
                )))
            }
            None if theorem4_flags => match &mut self.lift {
                Some(LiftSpec::Preset(LiftPreset::Theorem4 { alpha, beta, c })) => {
                    if let Some(a) = &o.alpha {
                        *alpha = coeff("alpha", a)?;
                    }
                    if let Some(b) = &o.beta {
                        *beta = coeff("beta", b)?;
                    }
                    if let Some(v) = o.c {
                        *c = v;
                    }
                }
                _ => {
                    return Err(CliError::Usage(
                        "--alpha, --beta and --c only apply to the theorem4 preset".into(),
                    ))
                }
            },
            None => {}
        }
        Ok(())
    }

    /// Checks the invariants and builds the base model and lift.
    pub fn resolve(&mut self) -> Result<(BaseModel, LiftParams), CliError> {
        let base = self
            .base
            .as_ref()
            .ok_or_else(|| CliError::Usage("no base model (use --base or a config file)".into()))?
            .spec()?;
        self.base = Some(BaseField::Spec(base.clone()));
        let lift = self
            .lift
            .as_ref()
            .ok_or_else(|| CliError::Usage("no lift (use --preset or a config file)".into()))?;
        if self.sample.points == 0 || self.sample.planes == 0 {
            return Err(CliError::Config("sample.points and sample.planes must be >= 1".into()));
        }
        let [lo, hi] = self.sample.fiber_range;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CliError::Config(format!("bad fiber_range [{lo}, {hi}]")));
        }
        let positive = [
            ("tolerances.closed_form", self.tolerances.closed_form),
            ("tolerances.fd", self.tolerances.fd),
            ("tolerances.flatness", self.tolerances.flatness),
            ("oracle.step", self.oracle.step),
            ("oracle.compat_step", self.oracle.compat_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let model = base.build().map_err(|e| CliError::Config(format!("base: {e}")))?;
        if let Some(bx) = &self.sample.base_box {
            if bx.len() != model.dim() {
                return Err(CliError::Config(format!(
                    "sample.base_box has {} intervals for a {}-dimensional base",
                    bx.len(),
                    model.dim()
                )));
            }
        }
        let params = lift.build().map_err(|e| CliError::Config(format!("lift: {e}")))?;
        Ok((model, params))
    }
}

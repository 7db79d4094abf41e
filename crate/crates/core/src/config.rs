//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::BoundaryData;
use crate::cheb::ChebGrid;
use crate::error::{Error, Result};
use crate::expr::{Expr, SpaceTimeFn};
use crate::forward::ForwardProblem;
use crate::inversion::LmOptions;
use crate::sensitivity::FdOrder;
use crate::tensor::{PrincipalField, ThetaKind, ThetaSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    Synth,
    Invert,
    CheckJacobian,
    MmsConvergence,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Synth => "synth",
            Mode::Invert => "invert",
            Mode::CheckJacobian => "check-jacobian",
            Mode::MmsConvergence => "mms-convergence",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            Error::InvalidArgument(format!(
                "unknown mode '{s}' (expected forward, synth, invert, check-jacobian or mms-convergence)"
            ))
        })
    }
}

/// Principal fields as closed-form expressions in `x, y` or a field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Expressions { k11: String, k22: String },
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    pub f1: String,
    pub f2: String,
    pub f3: String,
    pub f4: String,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        let z = || "0".to_string();
        Self {
            f1: z(),
            f2: z(),
            f3: z(),
            f4: z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observe {
    #[default]
    All,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdOrderSpec {
    Second,
    Fourth,
    #[default]
    Sixth,
}

impl From<FdOrderSpec> for FdOrder {
    fn from(o: FdOrderSpec) -> Self {
        match o {
            FdOrderSpec::Second => FdOrder::Second,
            FdOrderSpec::Fourth => FdOrder::Fourth,
            FdOrderSpec::Sixth => FdOrder::Sixth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianCheckSpec {
    /// Relative step `h`; the step for `k_ℓ` is `h (1 + |k_ℓ|)`.
    pub h: f64,
    pub order: FdOrderSpec,
    /// Entries at or below this magnitude are skipped.
    pub floor: f64,
    pub tolerance: f64,
}

impl Default for JacobianCheckSpec {
    fn default() -> Self {
        Self {
            h: 3e-3,
            order: FdOrderSpec::Sixth,
            floor: 1e-10,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManufacturedSpec {
    /// Exact solution `U(t, x, y)`.
    pub solution: String,
    /// Degrees of the spatial study.
    pub degrees: Vec<usize>,
    /// Steps used in the spatial study.
    pub spatial_steps: usize,
    /// Step counts of the temporal study.
    pub steps: Vec<usize>,
    /// Degree used in the temporal study.
    pub temporal_degree: usize,
}

impl Default for ManufacturedSpec {
    fn default() -> Self {
        Self {
            solution: "exp(-t)*sin(pi*x)*sin(pi*y)".into(),
            degrees: vec![4, 6, 8, 10, 12],
            spatial_steps: 1000,
            steps: vec![10, 20, 40],
            temporal_degree: 16,
        }
    }
}

fn one() -> usize {
    1
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    pub n: usize,
    pub t_final: f64,
    pub steps: usize,
    #[serde(default = "default_theta")]
    pub theta: ThetaKind,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default = "zero_expr")]
    pub initial: String,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default = "zero_expr")]
    pub source: String,
    /// Defaults to every solver time node after `t = 0`.
    #[serde(default)]
    pub measurement_times: Option<Vec<f64>>,
    /// Measurement file used by `invert` instead of synthesizing data.
    #[serde(default)]
    pub measurements: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub lm: LmOptions,
    /// Prior field; the initial guess is its spatial mean (else 1.0).
    #[serde(default)]
    pub prior: Option<FieldSpec>,
    #[serde(default)]
    pub observe: Observe,
    #[serde(default = "one")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub jacobian_check: JacobianCheckSpec,
    #[serde(default)]
    pub manufactured: Option<ManufacturedSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub source_text: String,
    #[serde(skip)]
    pub path: String,
}

fn default_theta() -> ThetaKind {
    ThetaKind::Constant { value: 0.0 }
}

/// 1-based line of the first occurrence of `needle` in `text`.
fn line_of(text: &str, needle: &str) -> Option<usize> {
    let at = text.find(needle)?;
    Some(text[..at].matches('\n').count() + 1)
}

impl RunConfig {
    pub fn from_str(text: &str, path: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.source_text = text.to_string();
        cfg.path = path.to_string();
        cfg.base_dir = Path::new(path)
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_str(&text, &path.display().to_string())
    }

    fn error(&self, key: &str, needle: Option<&str>, message: impl std::fmt::Display) -> Error {
        let line = needle
            .and_then(|n| line_of(&self.source_text, n))
            .or_else(|| line_of(&self.source_text, &format!("\"{key}\"")));
        let at = line.map(|l| format!(" at line {l}")).unwrap_or_default();
        Error::Config {
            path: self.path.clone(),
            message: format!("field `{key}`{at}: {message}"),
        }
    }

    /// Checks the invariants required by `mode`.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(self.error(
                    "mode",
                    None,
                    format!("config is for '{}' but '{}' was requested", m.name(), mode.name()),
                ));
            }
        }
        if self.n < 1 {
            return Err(self.error("n", None, "grid degree must be at least 1"));
        }
        if mode == Mode::Invert && self.n < 2 {
            return Err(self.error("n", None, "inversion needs n >= 2"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(self.error("t_final", None, "must be positive"));
        }
        if self.steps == 0 {
            return Err(self.error("steps", None, "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(self.error("snapshot_every", None, "must be at least 1"));
        }
        self.lm.validate().map_err(|e| self.error("lm", None, e))?;
        if !(self.noise.level >= 0.0) {
            return Err(self.error("noise", None, "level must be non-negative"));
        }
        let needs_field = match mode {
            Mode::Forward | Mode::Synth | Mode::CheckJacobian => true,
            Mode::Invert => self.measurements.is_none(),
            Mode::MmsConvergence => false,
        };
        if needs_field && self.field.is_none() {
            return Err(self.error("field", None, format!("required for mode '{}'", mode.name())));
        }
        if mode == Mode::MmsConvergence && !matches!(self.field, Some(FieldSpec::Expressions { .. })) {
            return Err(self.error("field", None, "mms-convergence needs k11/k22 expressions"));
        }
        Ok(())
    }

    pub fn expr(&self, key: &str, text: &str) -> Result<Expr> {
        Expr::parse(text).map_err(|e| self.error(key, Some(&format!("\"{text}\"")), format!("'{text}': {e}")))
    }

    fn space_expr(&self, key: &str, text: &str) -> Result<Expr> {
        let e = self.expr(key, text)?;
        if !e.is_free_of(crate::expr::Var::T) {
            return Err(self.error(key, Some(&format!("\"{text}\"")), "must not depend on t"));
        }
        Ok(e)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn schedule(&self) -> Result<ThetaSchedule> {
        ThetaSchedule::new(self.theta.clone(), self.t_final).map_err(|e| self.error("theta", None, e))
    }

    pub fn grid(&self) -> Result<ChebGrid> {
        ChebGrid::new(self.n).map_err(|e| self.error("n", None, e))
    }

    pub fn build_field(&self, key: &str, spec: &FieldSpec) -> Result<PrincipalField> {
        match spec {
            FieldSpec::Expressions { k11, k22 } => {
                let (a, b) = (self.space_expr(key, k11)?, self.space_expr(key, k22)?);
                Ok(crate::manufactured::sample_field(&self.grid()?, &a, &b))
            }
            FieldSpec::File { file } => {
                let f = crate::io::read_field(&self.resolve(file))?;
                if f.degree() != self.n {
                    return Err(self.error(
                        key,
                        None,
                        format!("field file has degree {}, config has n = {}", f.degree(), self.n),
                    ));
                }
                Ok(f)
            }
        }
    }

    /// Truth (or forward) field, if configured.
    pub fn field(&self) -> Result<Option<PrincipalField>> {
        self.field.as_ref().map(|s| self.build_field("field", s)).transpose()
    }

    /// Constant initial guess: spatial means of the prior, or 1.0.
    pub fn initial_guess(&self) -> Result<nalgebra::DVector<f64>> {
        let len = (self.n + 1) * (self.n + 1);
        let (a, b) = match &self.prior {
            Some(spec) => {
                let f = self.build_field("prior", spec)?;
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                (mean(f.k11_values()), mean(f.k22_values()))
            }
            None => (1.0, 1.0),
        };
        Ok(nalgebra::DVector::from_fn(2 * len, |k, _| if k < len { a } else { b }))
    }

    fn function(&self, key: &str, text: &str) -> Result<SpaceTimeFn> {
        Ok(self.expr(key, text)?.into_fn())
    }

    pub fn boundary_data(&self) -> Result<BoundaryData> {
        let b = &self.boundary;
        Ok(BoundaryData::new(
            self.function("boundary.f1", &b.f1)?,
            self.function("boundary.f2", &b.f2)?,
            self.function("boundary.f3", &b.f3)?,
            self.function("boundary.f4", &b.f4)?,
        ))
    }

    /// Forward problem for `field`.
    pub fn forward_problem(&self, field: PrincipalField) -> Result<ForwardProblem> {
        let grid = self.grid()?;
        let u0 = self.space_expr("initial", &self.initial)?;
        let p = ForwardProblem {
            field,
            schedule: self.schedule()?,
            boundary: self.boundary_data()?,
            source: self.function("source", &self.source)?,
            initial: grid.sample(|x, y| u0.eval(0.0, x, y)),
            t_final: self.t_final,
            steps: self.steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        match &self.measurement_times {
            Some(t) => t.clone(),
            None => (1..=self.steps)
                .map(|i| {
                    if i == self.steps {
                        self.t_final
                    } else {
                        self.t_final * i as f64 / self.steps as f64
                    }
                })
                .collect(),
        }
    }

    pub fn mask(&self) -> Option<Vec<bool>> {
        match self.observe {
            Observe::All => None,
            Observe::Interior => {
                let m = self.n + 1;
                Some((0..m * m).map(|k| {
                    let (i, j) = (k % m, k / m);
                    i > 0 && i < self.n && j > 0 && j < self.n
                }).collect())
            }
        }
    }

    pub fn manufactured(&self) -> ManufacturedSpec {
        self.manufactured.clone().unwrap_or_default()
    }
}

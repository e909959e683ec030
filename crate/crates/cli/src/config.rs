//! Experiment configuration: a TOML file of dotted keys such as `prior.s = 2.0`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use darcy_core::elliptic::{Preconditioner, ProblemData, SolverConfig};
use darcy_core::field::{field_read, Field, GridSpec};
use darcy_core::observation::{Functional, NoiseModel, ObservationSetup};
use darcy_core::posterior::{PcnConfig, DEFAULT_BATCHES, DEFAULT_PROBE_ORDER, MIN_HELLINGER_SAMPLES};
use darcy_core::prior::PriorSpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub snis: SnisSection,
    #[serde(default)]
    pub weak_error: WeakErrorSection,
    #[serde(default)]
    pub hellinger: HellingerSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub output: OutputSection,

    /// Directory that relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(rename = "N")]
    pub truncation: Option<usize>,
    #[serde(rename = "N_list")]
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "N_ref")]
    pub n_ref: Option<usize>,
    /// Number of draws emitted by `sample-prior`.
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            s: default_s(),
            truncation: None,
            n_list: None,
            n_ref: None,
            draws: default_draws(),
        }
    }
}

fn default_s() -> f64 {
    2.0
}

fn default_draws() -> usize {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Source `f`; zero when absent.
    pub f: Option<String>,
    /// Components of the flux source `g`, one per axis.
    pub g: Option<Vec<String>>,
    /// Log-permeability for `solve`: a field spec or `prior`.
    pub u: Option<String>,
    /// Analytic pressure to compare against in `solve`.
    pub exact_p: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Weight fields of weighted-average functionals.
    #[serde(default)]
    pub weights: Vec<String>,
    /// Functional list file (`point,...` / `weight,<path>` lines), appended after
    /// `points` and `weights`.
    pub file: Option<String>,
    /// Isotropic noise level.
    pub sigma: Option<f64>,
    /// Full noise covariance as a headerless CSV matrix; overrides `sigma`.
    pub gamma: Option<String>,
    /// Observed data, one value per line. When absent, data are synthesised
    /// from `truth`.
    pub data: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Field spec or `prior` (a prior draw at `prior.N_ref`, else `prior.N`).
    #[serde(default = "default_truth")]
    pub u: String,
}

impl Default for TruthSection {
    fn default() -> Self {
        Self { u: default_truth() }
    }
}

fn default_truth() -> String {
    "prior".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    pub max_iter: Option<usize>,
    /// `scaled` or `laplacian`.
    #[serde(default = "default_preconditioner")]
    pub preconditioner: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            rel_tol: default_tol(),
            max_iter: None,
            preconditioner: default_preconditioner(),
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}

fn default_preconditioner() -> String {
    "scaled".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Write every retained sample as a KL coefficient CSV.
    #[serde(default)]
    pub dump_samples: bool,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            steps: default_steps(),
            burn_in: default_burn_in(),
            thin: one(),
            batches: default_batches(),
            dump_samples: false,
        }
    }
}

fn default_beta() -> f64 {
    0.2
}

fn default_steps() -> usize {
    10_000
}

fn default_burn_in() -> usize {
    1_000
}

fn one() -> usize {
    1
}

fn default_batches() -> usize {
    DEFAULT_BATCHES
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnisSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

impl Default for SnisSection {
    fn default() -> Self {
        Self {
            n_samples: default_samples(),
            batches: default_batches(),
        }
    }
}

fn default_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakErrorSection {
    /// `snis` or `pcn`.
    #[serde(default = "default_method")]
    pub method: String,
}

impl Default for WeakErrorSection {
    fn default() -> Self {
        Self {
            method: default_method(),
        }
    }
}

fn default_method() -> String {
    "snis".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HellingerSection {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Perturbation direction; normalised before use. Defaults to all ones.
    pub direction: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

impl Default for HellingerSection {
    fn default() -> Self {
        Self {
            deltas: default_deltas(),
            direction: None,
            n_samples: default_samples(),
        }
    }
}

fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.02, 0.04, 0.08]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Defaults to 8, or `n/2 - 1` on grids too coarse for that.
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_integral_n")]
    pub integral_n: Vec<usize>,
    #[serde(default = "default_l1_n")]
    pub l1_n: Vec<usize>,
    #[serde(default = "default_t")]
    pub weierstrass_t: f64,
    /// Points of the 1-d grid carrying the Weierstrass function.
    #[serde(default = "default_weierstrass_n")]
    pub weierstrass_n: usize,
    #[serde(default = "default_truncations")]
    pub weierstrass_truncations: Vec<usize>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            integral_n: default_integral_n(),
            l1_n: default_l1_n(),
            weierstrass_t: default_t(),
            weierstrass_n: default_weierstrass_n(),
            weierstrass_truncations: default_truncations(),
        }
    }
}

fn default_integral_n() -> Vec<usize> {
    vec![1, 4, 16, 64]
}

fn default_l1_n() -> Vec<usize> {
    vec![8, 16, 32, 64, 128, 256, 512]
}

fn default_t() -> f64 {
    0.5
}

fn default_weierstrass_n() -> usize {
    65536
}

fn default_truncations() -> Vec<usize> {
    vec![4, 8, 16, 32, 64, 128]
}

/// Every stochastic step draws from `base + offset` with a fixed offset per
/// role. Offsets are spaced `2^40` apart so indexed streams (`seed + i`) of
/// different roles never overlap.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    #[serde(default)]
    pub base: u64,
}

const ROLE_SPACING_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedRole {
    PriorDraws,
    Truth,
    Noise,
    Chain,
    Bank,
}

impl SeedSection {
    pub fn seed(&self, role: SeedRole) -> u64 {
        let offset = match role {
            SeedRole::PriorDraws => 0,
            SeedRole::Truth => 1,
            SeedRole::Noise => 2,
            SeedRole::Chain => 3,
            SeedRole::Bank => 4,
        };
        self.base.wrapping_add(offset << ROLE_SPACING_BITS)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// A field given in the configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Manufactured(Manufactured),
    File(PathBuf),
}

/// Closed-form fields available as `manufactured:<name>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manufactured {
    Zero,
    One,
    CosX1,
    CosX2,
    SinX1,
    SinX2,
    /// `e^{sin x₁} cos x₂`, the source for which `u = sin x₁` gives `p = cos x₂`.
    ExpSinX1CosX2,
    /// `exp(-|x - π|²)`.
    Bump,
}

impl Manufactured {
    pub const NAMES: [&'static str; 8] = [
        "zero",
        "one",
        "cos_x1",
        "cos_x2",
        "sin_x1",
        "sin_x2",
        "exp_sin_x1_cos_x2",
        "bump",
    ];

    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "zero" => Self::Zero,
            "one" => Self::One,
            "cos_x1" => Self::CosX1,
            "cos_x2" => Self::CosX2,
            "sin_x1" => Self::SinX1,
            "sin_x2" => Self::SinX2,
            "exp_sin_x1_cos_x2" => Self::ExpSinX1CosX2,
            "bump" => Self::Bump,
            _ => return None,
        })
    }

    fn min_dim(self) -> usize {
        match self {
            Self::CosX2 | Self::SinX2 | Self::ExpSinX1CosX2 => 2,
            _ => 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => 1.0,
            Self::CosX1 => x[0].cos(),
            Self::CosX2 => x[1].cos(),
            Self::SinX1 => x[0].sin(),
            Self::SinX2 => x[1].sin(),
            Self::ExpSinX1CosX2 => x[0].sin().exp() * x[1].cos(),
            Self::Bump => (-x.iter().map(|c| (c - PI).powi(2)).sum::<f64>()).exp(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::plain(crate::error::ErrorKind::Config, format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = unknown_key(&msg).unwrap_or_else(|| "config".into());
            CliError::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that do not need any file besides the config itself.
    pub fn validate(&self) -> CliResult<()> {
        let grid = self.grid()?;
        let d = grid.dim();
        let half = grid.points_per_axis() / 2;
        if !(self.prior.s > d as f64 / 2.0) || !self.prior.s.is_finite() {
            return Err(CliError::config(
                "prior.s",
                format!("s = {} must exceed d/2 = {}", self.prior.s, d as f64 / 2.0),
            ));
        }
        let below_half = |key: &str, n: usize| {
            if n == 0 || n >= half {
                Err(CliError::config(key, format!("truncation {n} must satisfy 1 <= N < n/2 = {half}")))
            } else {
                Ok(())
            }
        };
        if let Some(n) = self.prior.truncation {
            below_half("prior.N", n)?;
        }
        if let Some(list) = &self.prior.n_list {
            if list.is_empty() {
                return Err(CliError::config("prior.N_list", "must not be empty"));
            }
            for &n in list {
                below_half("prior.N_list", n)?;
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::config("prior.N_list", "must be strictly increasing"));
            }
        }
        if let Some(n_ref) = self.prior.n_ref {
            below_half("prior.N_ref", n_ref)?;
            if let Some(max) = self.prior.n_list.as_ref().and_then(|l| l.last()) {
                if n_ref < *max {
                    return Err(CliError::config(
                        "prior.N_ref",
                        format!("N_ref = {n_ref} must be at least max(N_list) = {max}"),
                    ));
                }
            }
        }
        if self.prior.draws == 0 {
            return Err(CliError::config("prior.draws", "must be at least 1"));
        }
        self.solver_config()?;
        if let Some(g) = &self.problem.g {
            if g.len() != d {
                return Err(CliError::config(
                    "problem.g",
                    format!("expected {d} components, got {}", g.len()),
                ));
            }
        }
        for p in &self.observation.points {
            if p.len() != d {
                return Err(CliError::config(
                    "observation.points",
                    format!("point {p:?} does not have {d} coordinates"),
                ));
            }
        }
        if let Some(sigma) = self.observation.sigma {
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(CliError::config("observation.sigma", format!("{sigma} must be positive")));
            }
        }
        self.pcn_config()?;
        if self.mcmc.batches < 2 || self.mcmc.batches > self.pcn_config()?.retained() {
            return Err(CliError::config(
                "mcmc.batches",
                "must lie between 2 and the number of retained samples",
            ));
        }
        if self.snis.batches < 2 || self.snis.batches > self.snis.n_samples {
            return Err(CliError::config("snis.batches", "must lie between 2 and snis.n_samples"));
        }
        if self.hellinger.n_samples < MIN_HELLINGER_SAMPLES {
            return Err(CliError::config(
                "hellinger.n_samples",
                format!("must be at least {MIN_HELLINGER_SAMPLES}"),
            ));
        }
        if self.hellinger.deltas.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::config("hellinger.deltas", "must be finite and non-negative"));
        }
        if let Some(dir) = &self.hellinger.direction {
            if dir.iter().all(|v| *v == 0.0) || dir.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config("hellinger.direction", "must be finite and nonzero"));
            }
        }
        let order = self.probe_order();
        if order == 0 || order >= half {
            return Err(CliError::config(
                "probe.order",
                format!("order {order} must satisfy 1 <= M < n/2 = {half}"),
            ));
        }
        match self.weak_error.method.as_str() {
            "snis" | "pcn" => {}
            other => {
                return Err(CliError::config(
                    "weak_error.method",
                    format!("unknown method `{other}` (expected snis or pcn)"),
                ))
            }
        }
        if !(self.kernel.weierstrass_t > 0.0 && self.kernel.weierstrass_t <= 1.0) {
            return Err(CliError::config("kernel.weierstrass_t", "must lie in (0, 1]"));
        }
        GridSpec::new(1, self.kernel.weierstrass_n).map_err(|e| CliError::config("kernel.weierstrass_n", e.to_string()))?;
        if self.kernel.integral_n.contains(&0) {
            return Err(CliError::config("kernel.integral_n", "entries must be positive"));
        }
        if self.kernel.l1_n.iter().any(|&n| n < 2) {
            return Err(CliError::config("kernel.l1_n", "entries must be at least 2"));
        }
        if self
            .kernel
            .weierstrass_truncations
            .iter()
            .any(|&n| n == 0 || 2 * n >= self.kernel.weierstrass_n)
        {
            return Err(CliError::config(
                "kernel.weierstrass_truncations",
                "entries must satisfy 1 <= N < weierstrass_n / 2",
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<GridSpec> {
        GridSpec::new(self.grid.d, self.grid.n).map_err(|e| {
            let key = if (1..=3).contains(&self.grid.d) { "grid.n" } else { "grid.d" };
            CliError::config(key, e.to_string())
        })
    }

    pub fn solver_config(&self) -> CliResult<SolverConfig> {
        let preconditioner = match self.solver.preconditioner.as_str() {
            "scaled" => Preconditioner::ScaledLaplacian,
            "laplacian" => Preconditioner::Laplacian,
            other => {
                return Err(CliError::config(
                    "solver.preconditioner",
                    format!("unknown preconditioner `{other}` (expected scaled or laplacian)"),
                ))
            }
        };
        let cfg = SolverConfig {
            rel_tol: self.solver.rel_tol,
            max_iter: self.solver.max_iter,
            preconditioner,
        };
        cfg.validate().map_err(CliError::at("solver.rel_tol"))?;
        Ok(cfg)
    }

    pub fn pcn_config(&self) -> CliResult<PcnConfig> {
        let m = &self.mcmc;
        let seed = self.seeds.seed(SeedRole::Chain);
        PcnConfig::new(m.beta, m.steps, m.burn_in, m.thin, seed).map_err(|e| {
            let key = if !(m.beta > 0.0 && m.beta <= 1.0) {
                "mcmc.beta"
            } else if m.thin == 0 {
                "mcmc.thin"
            } else {
                "mcmc.burn_in"
            };
            CliError::config(key, e.to_string())
        })
    }

    pub fn probe_order(&self) -> usize {
        self.probe
            .order
            .unwrap_or_else(|| DEFAULT_PROBE_ORDER.min((self.grid.n / 2).saturating_sub(1)))
    }

    pub fn truncation(&self) -> CliResult<usize> {
        self.prior
            .truncation
            .ok_or_else(|| CliError::config("prior.N", "required by this command"))
    }

    pub fn prior_spec(&self, truncation: usize, seed: u64) -> CliResult<PriorSpec> {
        PriorSpec::new(self.grid.d, self.prior.s, truncation, seed).map_err(CliError::at("prior.s"))
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = PathBuf::from(path);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn field_spec(&self, key: &str, spec: &str) -> CliResult<FieldSpec> {
        match spec.strip_prefix("manufactured:") {
            Some(name) => {
                let m = Manufactured::parse(name).ok_or_else(|| {
                    CliError::config(
                        key,
                        format!("unknown manufactured field `{name}` (known: {})", Manufactured::NAMES.join(", ")),
                    )
                })?;
                if m.min_dim() > self.grid.d {
                    return Err(CliError::config(key, format!("`{name}` needs d >= {}", m.min_dim())));
                }
                Ok(FieldSpec::Manufactured(m))
            }
            None => Ok(FieldSpec::File(self.resolve(spec))),
        }
    }

    /// Realises a field spec on the configured grid.
    pub fn field(&self, key: &str, spec: &str) -> CliResult<Field> {
        let grid = self.grid()?;
        match self.field_spec(key, spec)? {
            FieldSpec::Manufactured(m) => Ok(Field::from_fn(grid, |x| m.eval(x))),
            FieldSpec::File(path) => {
                let f = field_read(&path).map_err(CliError::at(key))?;
                if f.grid() != grid {
                    return Err(CliError::config(
                        key,
                        format!(
                            "{}: field grid d={} n={} differs from the configured grid",
                            path.display(),
                            f.grid().dim(),
                            f.grid().points_per_axis()
                        ),
                    ));
                }
                Ok(f)
            }
        }
    }

    pub fn problem_data(&self) -> CliResult<ProblemData> {
        let grid = self.grid()?;
        let f = match &self.problem.f {
            Some(spec) => self.field("problem.f", spec)?,
            None => Field::zeros(grid),
        };
        let g = match &self.problem.g {
            Some(specs) => specs
                .iter()
                .map(|s| self.field("problem.g", s))
                .collect::<CliResult<Vec<_>>>()?,
            None => Vec::new(),
        };
        ProblemData::new(f, g).map_err(CliError::at("problem.g"))
    }

    pub fn observation_setup(&self) -> CliResult<ObservationSetup> {
        let grid = self.grid()?;
        let mut functionals: Vec<Functional> = self
            .observation
            .points
            .iter()
            .map(|x| Functional::PointEval { x: x.clone() })
            .collect();
        for w in &self.observation.weights {
            functionals.push(Functional::WeightedAverage {
                w: self.field("observation.weights", w)?,
            });
        }
        if let Some(file) = &self.observation.file {
            let extra = ObservationSetup::read_csv_file(self.resolve(file), grid).map_err(CliError::at("observation.file"))?;
            functionals.extend(extra.functionals().iter().cloned());
        }
        ObservationSetup::new(grid, functionals).map_err(CliError::at("observation"))
    }

    pub fn noise_model(&self, k: usize) -> CliResult<NoiseModel> {
        if let Some(path) = &self.observation.gamma {
            let noise = NoiseModel::read_csv_file(self.resolve(path)).map_err(CliError::at("observation.gamma"))?;
            if noise.dim() != k {
                return Err(CliError::config(
                    "observation.gamma",
                    format!("covariance is {0}x{0} but there are {k} functionals", noise.dim()),
                ));
            }
            return Ok(noise);
        }
        match self.observation.sigma {
            Some(sigma) => NoiseModel::isotropic(k, sigma).map_err(CliError::at("observation.sigma")),
            None if k == 0 => NoiseModel::isotropic(0, 1.0).map_err(CliError::from),
            None => Err(CliError::config("observation.sigma", "noise level required (or observation.gamma)")),
        }
    }

    /// `--out`, else `output.dir` relative to the config file, else `out` next to it.
    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        match (cli_out, &self.output.dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(dir)) => self.resolve(dir),
            (None, None) => self.base_dir.join("out"),
        }
    }
}

/// Pulls the field name out of serde's "unknown field `x`" message.
fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.d = 2\ngrid.n = 32\n";

    fn with(extra: &str) -> CliResult<Config> {
        Config::parse(&format!("{MINIMAL}{extra}"))
    }

    fn key_of(r: CliResult<Config>) -> String {
        r.unwrap_err().key.unwrap_or_default()
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = with("").unwrap();
        assert_eq!(cfg.prior.s, 2.0);
        assert_eq!(cfg.probe_order(), 8);
        assert_eq!(Config::parse("grid.d = 1\ngrid.n = 8\n").unwrap().probe_order(), 3);
        assert_eq!(cfg.hellinger.deltas, vec![0.01, 0.02, 0.04, 0.08]);
        assert_eq!(cfg.seeds.seed(SeedRole::Bank), 4 << 40);
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = Config::parse("grid.d = 1\ngrid.n = 16\nprior.s = 1.5\nprior.N = 3\n").unwrap();
        let b = Config::parse("[grid]\nd = 1\nn = 16\n[prior]\ns = 1.5\nN = 3\n").unwrap();
        assert_eq!(a.prior.s, b.prior.s);
        assert_eq!(a.prior.truncation, b.prior.truncation);
    }

    #[test]
    fn validation_names_the_key() {
        assert_eq!(key_of(with("prior.s = 0.9\n")), "prior.s");
        assert_eq!(key_of(with("prior.N = 16\n")), "prior.N");
        assert_eq!(key_of(with("prior.N_list = [4, 2]\n")), "prior.N_list");
        assert_eq!(key_of(with("prior.N_list = [2, 8]\nprior.N_ref = 4\n")), "prior.N_ref");
        assert_eq!(key_of(with("mcmc.beta = 1.5\n")), "mcmc.beta");
        assert_eq!(key_of(with("mcmc.burn_in = 20000\n")), "mcmc.burn_in");
        assert_eq!(key_of(with("observation.sigma = -1.0\n")), "observation.sigma");
        assert_eq!(key_of(with("observation.points = [[1.0]]\n")), "observation.points");
        assert_eq!(key_of(with("probe.order = 16\n")), "probe.order");
        assert_eq!(key_of(with("solver.preconditioner = \"jacobi\"\n")), "solver.preconditioner");
        assert_eq!(key_of(with("hellinger.n_samples = 10\n")), "hellinger.n_samples");
        assert_eq!(key_of(with("weak_error.method = \"exact\"\n")), "weak_error.method");
        assert_eq!(key_of(Config::parse("grid.d = 2\ngrid.n = 30\n")), "grid.n");
        assert_eq!(key_of(Config::parse("grid.d = 4\ngrid.n = 32\n")), "grid.d");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert_eq!(key_of(with("prior.sigma = 1.0\n")), "sigma");
        assert!(Config::parse("grid.d = 2\n").is_err());
    }

    #[test]
    fn n_ref_may_equal_max_n_list() {
        let cfg = with("prior.N_list = [2]\nprior.N_ref = 2\n").unwrap();
        assert_eq!(cfg.prior.n_ref, Some(2));
    }

    #[test]
    fn manufactured_specs() {
        let cfg = Config::parse("grid.d = 1\ngrid.n = 16\n").unwrap();
        let f = cfg.field("problem.f", "manufactured:cos_x1").unwrap();
        assert!((f.values()[0] - 1.0).abs() < 1e-15);
        let e = cfg.field("problem.f", "manufactured:cos_x2").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("problem.f"));
        let e = cfg.field("problem.f", "manufactured:nope").unwrap_err();
        assert!(e.message.contains("nope"));
    }

    #[test]
    fn missing_field_file_mentions_path() {
        let mut cfg = with("").unwrap();
        cfg.base_dir = PathBuf::from("/nonexistent-dir");
        let e = cfg.field("problem.u", "missing.field").unwrap_err();
        assert!(e.message.contains("/nonexistent-dir/missing.field"), "{}", e.message);
        assert_eq!(e.key.as_deref(), Some("problem.u"));
    }

    #[test]
    fn noise_requires_sigma_when_observing() {
        let cfg = with("observation.points = [[1.0, 1.0]]\n").unwrap();
        assert_eq!(cfg.noise_model(1).unwrap_err().key.as_deref(), Some("observation.sigma"));
        assert_eq!(cfg.noise_model(0).unwrap().dim(), 0);
    }
}

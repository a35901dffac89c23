//! Experiment configuration (TOML).
//!
//! A config names a grid of problems (patterns x sizes x exponents x seeds)
//! and one or more studies, each a list of methods evaluated with one
//! smoother and one coarsening. See `docs/config.md` for the schema.

use std::fmt;
use std::path::{Path, PathBuf};

use amglab::bamg::BamgConfig;
use amglab::problems::{Geometry, Pattern};
use amglab::smoothers::{SmootherKind, SmootherSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A config problem that should exit with status 2: the offending field
/// and what is wrong with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Two-grid rate with ideal interpolation.
    Ideal,
    /// Two-grid rate with optimal interpolation, `1 - λ_{nc+1}`.
    Optimal,
    /// F-relaxation compatible relaxation.
    CrFrelax,
    /// Sharp-identity estimate of the ideal rate with inner PCG.
    CrSharp,
    /// `λ_{nc+1}` of the pencil `(A, M̃)`.
    KappaSharp,
    /// Maxvol coarse selection on the optimal interpolation.
    Maxvol,
    /// Bootstrap setup and solve-phase rate.
    Bamg,
    /// Spectra of `A` and `(A, M̃)`.
    Spectra,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ideal => "ideal",
            Method::Optimal => "optimal",
            Method::CrFrelax => "cr_frelax",
            Method::CrSharp => "cr_sharp",
            Method::KappaSharp => "kappa_sharp",
            Method::Maxvol => "maxvol",
            Method::Bamg => "bamg",
            Method::Spectra => "spectra",
        }
    }

    /// Methods that need a dense eigensolve of the full pencil.
    fn needs_dense_pencil(self) -> bool {
        matches!(self, Method::Maxvol | Method::Spectra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coarsening {
    #[default]
    Full,
    RedBlack,
}

impl Coarsening {
    pub fn name(self) -> &'static str {
        match self {
            Coarsening::Full => "full",
            Coarsening::RedBlack => "red_black",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub patterns: Vec<Pattern>,
    pub sizes: Vec<usize>,
    #[serde(default = "default_ks")]
    pub ks: Vec<u32>,
    #[serde(default)]
    pub geometry: Geometry,
}

fn default_ks() -> Vec<u32> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    /// Label used in output file names; defaults to `study<i>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub methods: Vec<Method>,
    /// The relaxation applied before the coarse correction. Its transpose
    /// runs after it, and `M~` is built from that post-smoother.
    #[serde(default)]
    pub smoother: SmootherSpec,
    #[serde(default)]
    pub coarsening: Coarsening,
    /// Coarse-space size for maxvol, spectra rates and optimal
    /// interpolation; defaults to the size of the coarsening.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nc: Option<usize>,
    /// Restrictions of the problem grid for this study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<Vec<Pattern>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<u32>>,
    /// Overrides the top-level `[bamg]` block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bamg: Option<BamgConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    /// Relative change tolerance of the A-norm power iteration.
    pub power_tol: f64,
    pub power_max_iter: usize,
    /// Steps of the compatible relaxation iterations.
    pub cr_iters: usize,
    /// Inner PCG steps of the sharp estimate.
    pub sharp_inner: usize,
    /// Solve-phase cycles for the bootstrap rate.
    pub bamg_cycles: usize,
    /// Interpolation columns exported per maxvol run.
    pub interp_columns: usize,
    /// `|λ - 1|` above which a pencil eigenvalue counts as different from 1.
    /// The default of `1e-3` is about what a spectrum plot can resolve;
    /// tighter values count more near-unit eigenvalues as distinct.
    pub unit_tol: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            power_tol: 1e-4,
            power_max_iter: 2000,
            cr_iters: 5,
            sharp_inner: 2,
            bamg_cycles: 30,
            interp_columns: 3,
            unit_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Seeds `seed, seed + 1, ...` used for the random patterns; the
    /// deterministic patterns always run once with `seed`.
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_cap: Option<usize>,
    /// Worker threads; 0 uses one per core, 1 runs sequentially.
    #[serde(default)]
    pub threads: usize,
    pub problem: ProblemConfig,
    #[serde(rename = "study")]
    pub studies: Vec<Study>,
    #[serde(default)]
    pub params: MethodParams,
    #[serde(default)]
    pub bamg: BamgConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> usize {
    1
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub size_cap: Option<usize>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| invalid("<document>", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<document>".to_string() } else { path };
            invalid(field, e.into_inner().message())
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(Self::from_toml(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(c) = o.size_cap {
            self.size_cap = Some(c);
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
    }

    /// SHA-256 of the canonical TOML form, hex encoded. The output
    /// directory and thread count do not change results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        c.threads = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sizes that survive the size cap.
    pub fn capped(&self, sizes: &[usize]) -> Vec<usize> {
        sizes
            .iter()
            .copied()
            .filter(|&n| self.size_cap.is_none_or(|c| n <= c))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        let p = &self.problem;
        if p.patterns.is_empty() {
            return Err(invalid("problem.patterns", "empty list"));
        }
        if p.ks.is_empty() {
            return Err(invalid("problem.ks", "empty list"));
        }
        if let Some(k) = p.ks.iter().find(|&&k| k > 30) {
            return Err(invalid("problem.ks", format!("exponent {k} is out of range (0..=30)")));
        }
        check_sizes("problem.sizes", &p.sizes)?;
        let g = &p.geometry;
        if !(0.0..1.0).contains(&g.checker_offset) {
            return Err(invalid("problem.geometry.checker_offset", "must lie in [0, 1)"));
        }
        if g.inclusion_tiles == 0 || g.checker_tiles == 0 {
            return Err(invalid("problem.geometry", "tile counts must be positive"));
        }
        if self.capped(&p.sizes).is_empty() {
            return Err(invalid(
                "size_cap",
                format!("{} removes every problem size", self.size_cap.unwrap_or(0)),
            ));
        }
        if self.studies.is_empty() {
            return Err(invalid("study", "at least one [[study]] is required"));
        }
        for (i, s) in self.studies.iter().enumerate() {
            let at = |f: &str| format!("study[{i}].{f}");
            if s.methods.is_empty() {
                return Err(invalid(at("methods"), "empty list"));
            }
            if let Some(sz) = &s.sizes {
                check_sizes(&at("sizes"), sz)?;
            }
            if s.nc == Some(0) {
                return Err(invalid(at("nc"), "must be positive"));
            }
            if s.smoother.kind == SmootherKind::BlockGsRedblack && s.smoother.block == 0 {
                return Err(invalid(at("smoother.block"), "must be positive"));
            }
            if s.smoother.tau.is_some_and(|t| !(t > 0.0)) {
                return Err(invalid(at("smoother.tau"), "must be positive"));
            }
            if s.methods.contains(&Method::Bamg) {
                self.bamg_for(s)
                    .validate()
                    .map_err(|e| invalid(if s.bamg.is_some() { at("bamg") } else { "bamg".into() }, e.to_string()))?;
            }
            if s.methods.iter().any(|m| m.needs_dense_pencil()) {
                let sizes = s.sizes.as_deref().unwrap_or(&p.sizes);
                if let Some(&n) = sizes.iter().find(|&&n| n * n > 4096) {
                    return Err(invalid(at("methods"), format!("N = {n} is too large for a dense pencil")));
                }
            }
        }
        let q = &self.params;
        if !(q.power_tol > 0.0) {
            return Err(invalid("params.power_tol", "must be positive"));
        }
        if q.power_max_iter == 0 || q.cr_iters == 0 || q.bamg_cycles == 0 {
            return Err(invalid("params", "iteration counts must be positive"));
        }
        self.bamg.validate().map_err(|e| invalid("bamg", e.to_string()))?;
        Ok(())
    }

    pub fn bamg_for(&self, s: &Study) -> BamgConfig {
        s.bamg.clone().unwrap_or_else(|| self.bamg.clone())
    }

    /// Seeds used for `pattern`.
    pub fn seeds(&self, pattern: Pattern) -> Vec<u64> {
        let reps = if pattern.is_random() { self.replicates } else { 1 };
        (0..reps as u64).map(|r| self.seed + r).collect()
    }
}

fn check_sizes(field: &str, sizes: &[usize]) -> Result<(), ConfigError> {
    if sizes.is_empty() {
        return Err(invalid(field, "empty list"));
    }
    if let Some(n) = sizes.iter().find(|&&n| n < 3) {
        return Err(invalid(field, format!("grid size {n} is below 3")));
    }
    Ok(())
}

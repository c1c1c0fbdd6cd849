//! Experiment configuration and precondition checks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use migr_scatter::archive::SweepMode;
use migr_scatter::far_field::{BandSpec, ForwardModel};
use migr_scatter::forward::{SolverOptions, RESOLUTION_LIMIT};
use migr_scatter::random_field::{Bump, RoughnessSpec, StrengthProfile};
use migr_scatter::recovery::separating_normal;
use migr_scatter::Grid3;

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub m: f64,
    #[serde(default)]
    pub bumps: Vec<BumpConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub k_min: f64,
    pub dk: f64,
    /// Number of base wavenumbers `k_min + i dk`.
    pub n_k: usize,
    #[serde(default)]
    pub taus: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionsConfig {
    pub count: usize,
    #[serde(default = "yes")]
    pub half_sphere: bool,
    /// Normal of the measured half-sphere. Defaults to the normal of the
    /// plane separating the two supports, or `+z` when one of them is empty.
    #[serde(default)]
    pub normal: Option<[f64; 3]>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Passive,
    Backscatter,
    Both,
}

impl ModeConfig {
    pub fn modes(self) -> Vec<SweepMode> {
        match self {
            ModeConfig::Passive => vec![SweepMode::Passive],
            ModeConfig::Backscatter => vec![SweepMode::Backscatter],
            ModeConfig::Both => vec![SweepMode::Passive, SweepMode::Backscatter],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Born,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeConfig,
    #[serde(default = "full")]
    pub model: ModelConfig,
    pub seed: u64,
}

fn full() -> ModelConfig {
    ModelConfig::Full
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_j_max() -> usize {
    2
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            j_max: default_j_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Samples per axis of the reconstruction grid.
    #[serde(default = "default_recon_n")]
    pub recon_n: usize,
    /// Half width of the reconstruction grid; defaults to the simulation box.
    #[serde(default)]
    pub recon_half_width: Option<f64>,
}

fn default_recon_n() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub source: FieldConfig,
    pub potential: FieldConfig,
    pub band: BandConfig,
    pub directions: DirectionsConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

/// One failed precondition.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// The violated inequality or rule, e.g. `m_f < 5m_q − 11`.
    pub rule: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

pub const RULE_SOURCE_ORDER: &str = "2 < m_f < 4";
pub const RULE_ORDER_COUPLING: &str = "m_f < 5m_q − 11";
pub const RULE_POTENTIAL_BELOW_SOURCE: &str = "m_q < m_f";
pub const RULE_SEPARATION: &str = "positive distance between supp μ_f and supp μ_q";
pub const RULE_INSIDE_BOX: &str = "supports strictly inside the box";
pub const RULE_RESOLUTION: &str = "k h ≤ 0.6 at k_max";
pub const RULE_SHIFT_LATTICE: &str = "shifts on the k lattice";
pub const RULE_BAND: &str = "band covers [K, 2K]";
pub const RULE_GRID: &str = "valid grid";
pub const RULE_DIRECTIONS: &str = "at least one direction";
pub const RULE_RECON_GRID: &str = "valid reconstruction grid";
pub const RULE_SOLVER: &str = "solver tolerance and iteration cap positive";

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Parse(m) => HarnessError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn grid(&self) -> Result<Grid3<f64>, migr_scatter::Error> {
        Grid3::new(self.grid.n, self.grid.half_width)
    }

    pub fn recon_grid(&self) -> Result<Grid3<f64>, migr_scatter::Error> {
        Grid3::new(
            self.output.recon_n,
            self.output.recon_half_width.unwrap_or(self.grid.half_width),
        )
    }

    /// Normal of the measured half-sphere.
    pub fn measurement_normal(&self) -> Result<[f64; 3], migr_scatter::Error> {
        if let Some(n) = self.directions.normal {
            return Ok(n);
        }
        if self.source_active() && self.potential_active() {
            let f = self.source_spec()?;
            let q = self.potential_spec()?;
            return Ok(separating_normal(&f.mu, &q.mu)?.normal);
        }
        Ok([0.0, 0.0, 1.0])
    }

    pub fn source_spec(&self) -> Result<RoughnessSpec<f64>, migr_scatter::Error> {
        field_spec(&self.source)
    }

    pub fn potential_spec(&self) -> Result<RoughnessSpec<f64>, migr_scatter::Error> {
        field_spec(&self.potential)
    }

    pub fn band_spec(&self) -> BandSpec {
        BandSpec {
            k_min: self.band.k_min,
            dk: self.band.dk,
            n_k: self.band.n_k,
            taus: self.band.taus.clone(),
        }
    }

    pub fn solver_options(&self) -> SolverOptions<f64> {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn model(&self) -> ForwardModel {
        match self.run.model {
            ModelConfig::Born => ForwardModel::Born,
            ModelConfig::Full => ForwardModel::Full,
        }
    }

    pub fn potential_active(&self) -> bool {
        self.potential.bumps.iter().any(|b| b.amplitude > 0.0)
    }

    pub fn source_active(&self) -> bool {
        self.source.bumps.iter().any(|b| b.amplitude > 0.0)
    }

    /// Every failed precondition; empty when the configuration is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |rule: &str, detail: String| {
            out.push(Violation {
                rule: rule.to_string(),
                detail,
            })
        };
        let m_f = self.source.m;
        let m_q = self.potential.m;
        let modes = self.run.mode.modes();
        let lit = modes.contains(&SweepMode::Backscatter);

        if !(m_f > 2.0 && m_f < 4.0) {
            push(RULE_SOURCE_ORDER, format!("m_f = {m_f}"));
        }
        if self.potential_active() && !(m_f < 5.0 * m_q - 11.0) {
            push(
                RULE_ORDER_COUPLING,
                format!("m_f = {m_f} but 5m_q − 11 = {}", 5.0 * m_q - 11.0),
            );
        }
        if lit && !(m_q < m_f) {
            push(
                RULE_POTENTIAL_BELOW_SOURCE,
                format!("potential recovery requested with m_q = {m_q}, m_f = {m_f}"),
            );
        }

        let grid = match self.grid() {
            Ok(g) => Some(g),
            Err(e) => {
                push(RULE_GRID, e.to_string());
                None
            }
        };
        let specs = (self.source_spec(), self.potential_spec());
        match &specs {
            (Ok(f), Ok(q)) => {
                if let Some(g) = &grid {
                    for (name, s) in [("source", f), ("potential", q)] {
                        if let Err(e) = s.mu.check_inside(g) {
                            push(RULE_INSIDE_BOX, format!("{name}: {e}"));
                        }
                    }
                }
                if self.source_active() && self.potential_active() {
                    if let Err(e) = separating_normal(&f.mu, &q.mu) {
                        push(RULE_SEPARATION, e.to_string());
                    }
                }
            }
            (f, q) => {
                for e in [f.as_ref().err(), q.as_ref().err()].into_iter().flatten() {
                    push(RULE_INSIDE_BOX, e.to_string());
                }
            }
        }

        if let Err(e) = self.recon_grid() {
            push(RULE_RECON_GRID, e.to_string());
        }
        if let Some(n) = self.directions.normal {
            if !(n.iter().map(|x| x * x).sum::<f64>() > 0.0) {
                push(RULE_DIRECTIONS, "directions.normal is zero".into());
            }
        }
        if self.band.taus.is_empty() || self.band.taus.iter().any(|t| !(*t >= 0.0)) || self.band.taus.windows(2).any(|w| !(w[0] < w[1])) {
            push(
                RULE_SHIFT_LATTICE,
                format!("taus must be non-empty, non-negative and strictly increasing: {:?}", self.band.taus),
            );
        }
        if self.directions.count == 0 {
            push(RULE_DIRECTIONS, "directions.count = 0".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            push(
                RULE_SOLVER,
                format!("tol = {}, max_iter = {}", self.solver.tol, self.solver.max_iter),
            );
        }

        let band = self.band_spec();
        let mut k_max: f64 = 0.0;
        for mode in &modes {
            match band.lattice_indices(*mode) {
                Ok(idx) => {
                    let top = *idx.last().expect("n_k >= 1");
                    k_max = k_max.max(band.k_min + top as f64 * band.dk);
                }
                Err(e) => push(RULE_SHIFT_LATTICE, format!("{} mode: {e}", mode.name())),
            }
        }
        let steps = band.k_min / band.dk;
        if band.dk > 0.0 && ((steps - steps.round()).abs() > 1e-9 || (band.n_k as f64) < steps.round() + 1.0) {
            push(
                RULE_BAND,
                format!(
                    "K = {} needs K/dk integral and n_k ≥ K/dk + 1 = {}",
                    band.k_min,
                    steps.round() + 1.0
                ),
            );
        }
        if let Some(g) = &grid {
            let kh = k_max * g.spacing();
            if kh > RESOLUTION_LIMIT + 1e-12 {
                push(
                    RULE_RESOLUTION,
                    format!("k h = {kh:.4} at k_max = {k_max}"),
                );
            }
        }
        out
    }
}

fn field_spec(cfg: &FieldConfig) -> Result<RoughnessSpec<f64>, migr_scatter::Error> {
    let bumps = cfg
        .bumps
        .iter()
        .map(|b| Bump::new(b.center, b.radius, b.amplitude))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RoughnessSpec::new(cfg.m, StrengthProfile::sum_of_bumps(bumps)))
}

/// A small valid configuration, handy as a starting point and in tests.
pub const EXAMPLE_CONFIG: &str = r#"[grid]
n = 32
half_width = 0.6

[source]
m = 3.5
bumps = [{ center = [-0.3, 0.0, 0.0], radius = 0.2, amplitude = 1.0 }]

[potential]
m = 3.2
bumps = [{ center = [0.3, 0.0, 0.0], radius = 0.2, amplitude = 1.0 }]

[band]
k_min = 4.0
dk = 0.5
n_k = 9
taus = [0.0, 1.0, 2.0]

[directions]
count = 4
half_sphere = true

[run]
mode = "both"
model = "full"
seed = 7

[solver]
tol = 1e-8
max_iter = 200
j_max = 2

[output]
dir = "out"
recon_n = 16
"#;

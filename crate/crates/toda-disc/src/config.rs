//! JSON run configuration: strict schema (unknown keys rejected), documented
//! defaults, and cross-field validation. Command-line flags override
//! individual keys after parsing.
//!
//! ```
//! use toda_disc::config::parse_config;
//!
//! let cfg = parse_config(
//!     r#"{"r": 3, "weight": {"kind": "differential", "coeffs": [[0.0, 0.0], [1.0, 0.0]]}}"#,
//! ).unwrap();
//! assert_eq!(cfg.r, 3);
//! // unknown keys are rejected, and the error names the offending field
//! let err = parse_config(r#"{"r": 2, "weight": {"kind": "zero"}, "gamma": 1}"#).unwrap_err();
//! assert!(err.to_string().contains("gamma"));
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TodaError};
use crate::geometry::{make_grid, PolarGrid};
use crate::io::read_field;
use crate::solver::{MasterLattice, Scheme, SolveOptions};
use crate::weights::{SmoothTerm, WeightKind, WeightModel};
use num_complex::Complex64;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// q(z) = Σ coeffs[k]·z^k, each coefficient as [re, im]
    Differential { coeffs: Vec<[f64; 2]> },
    /// log-atoms Σ mass·log|z-center| plus a smooth polynomial part
    Atoms {
        atoms: Vec<AtomSpec>,
        #[serde(default)]
        smooth: Vec<SmoothTermSpec>,
    },
    Zero,
    /// φ sampled on the run lattice, stored as a TODA1 field file
    Samples { file: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub center: [f64; 2],
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothTermSpec {
    pub px: u32,
    pub py: u32,
    pub coeff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub outer_radius: f64,
}

impl Default for LatticeSpec {
    fn default() -> LatticeSpec {
        LatticeSpec { n_r: 64, n_theta: 64, outer_radius: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterSpec {
    pub rings_per_unit: usize,
    pub n_theta: usize,
}

impl Default for MasterSpec {
    fn default() -> MasterSpec {
        MasterSpec { rings_per_unit: 420, n_theta: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SchemeSpec {
    Newton,
    Monotone,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub newton_tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub linear_tol: Option<f64>,
    pub max_linear: Option<usize>,
    pub max_monotone: Option<usize>,
}

impl Default for ToleranceSpec {
    fn default() -> ToleranceSpec {
        ToleranceSpec {
            newton_tol: None,
            max_newton: None,
            linear_tol: None,
            max_linear: None,
            max_monotone: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub r: usize,
    pub weight: WeightSpec,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub master: MasterSpec,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default = "default_deltas")]
    pub mollify_deltas: Vec<f64>,
    #[serde(default = "default_seed_factor")]
    pub seed_factor: f64,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub heatmaps: bool,
}

fn default_stages() -> usize {
    6
}
fn default_scheme() -> SchemeSpec {
    SchemeSpec::Newton
}
fn default_deltas() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02]
}
fn default_seed_factor() -> f64 {
    1.5
}
fn default_samples() -> usize {
    100_000
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn grid(&self) -> Result<PolarGrid> {
        make_grid(self.lattice.n_r, self.lattice.n_theta, self.lattice.outer_radius)
    }

    pub fn master_lattice(&self) -> MasterLattice {
        MasterLattice {
            rings_per_unit: self.master.rings_per_unit,
            n_theta: self.master.n_theta,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        o.scheme = match self.scheme {
            SchemeSpec::Newton => Scheme::Newton,
            SchemeSpec::Monotone => Scheme::Monotone,
        };
        let t = &self.tolerances;
        if let Some(v) = t.newton_tol {
            o.newton_tol = v;
        }
        if let Some(v) = t.max_newton {
            o.max_newton = v;
        }
        if let Some(v) = t.linear_tol {
            o.linear_tol = v;
        }
        if let Some(v) = t.max_linear {
            o.max_linear = v;
        }
        if let Some(v) = t.max_monotone {
            o.max_monotone = v;
        }
        o
    }

    /// Build the weight model; Samples kinds load their field file and must
    /// match the given grid.
    pub fn weight_model(&self, grid: &PolarGrid) -> Result<WeightModel> {
        let kind = match &self.weight {
            WeightSpec::Differential { coeffs } => WeightKind::Differential {
                coeffs: coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect(),
            },
            WeightSpec::Atoms { atoms, smooth } => WeightKind::LogAtoms {
                atoms: atoms
                    .iter()
                    .map(|a| (Complex64::new(a.center[0], a.center[1]), a.mass))
                    .collect(),
                smooth: smooth
                    .iter()
                    .map(|t| SmoothTerm { px: t.px, py: t.py, coeff: t.coeff })
                    .collect(),
            },
            WeightSpec::Zero => WeightKind::Zero,
            WeightSpec::Samples { file } => {
                let (phi, _) = read_field(file)?;
                if phi.grid != *grid {
                    return Err(TodaError::Config {
                        path: "weight.file".into(),
                        message: format!(
                            "sampled weight grid {} does not match lattice {}",
                            phi.grid.describe(),
                            grid.describe()
                        ),
                    });
                }
                WeightKind::Samples { phi }
            }
        };
        Ok(WeightModel { kind, r: self.r })
    }

    /// Cross-field checks beyond the serde schema.
    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, message: String| {
            Err(TodaError::Config { path: path.into(), message })
        };
        if self.r < 2 {
            return fail("r", format!("rank {} < 2", self.r));
        }
        self.grid()
            .map_err(|e| TodaError::Config { path: "lattice".into(), message: e.to_string() })?;
        if self.master.n_theta < 8 || self.master.n_theta % 2 != 0 {
            return fail(
                "master.n_theta",
                format!("{} must be an even count >= 8", self.master.n_theta),
            );
        }
        if self.stages < 1 {
            return fail("stages", "need at least one stage".into());
        }
        // nesting: every stage radius s/(s+1) must land on a master ring
        for s in 1..=self.stages {
            if self.master.rings_per_unit % (s + 1) != 0 {
                return fail(
                    "stages",
                    format!(
                        "stage {s} radius {}/{} is not on the master lattice \
                         (rings_per_unit {} not divisible by {})",
                        s,
                        s + 1,
                        self.master.rings_per_unit,
                        s + 1
                    ),
                );
            }
        }
        for w in self.mollify_deltas.windows(2) {
            if w[1] >= w[0] {
                return fail(
                    "mollify_deltas",
                    format!("must be strictly decreasing, got {} then {}", w[0], w[1]),
                );
            }
        }
        if self.mollify_deltas.iter().any(|&d| d <= 0.0) {
            return fail("mollify_deltas", "all radii must be positive".into());
        }
        if self.seed_factor <= 0.0 {
            return fail("seed_factor", format!("{} must be positive", self.seed_factor));
        }
        if self.betas.iter().any(|&b| b == 0.0) {
            return fail("betas", "beta = 0 is not admissible".into());
        }
        if let WeightSpec::Atoms { atoms, .. } = &self.weight {
            for (i, a) in atoms.iter().enumerate() {
                let norm = (a.center[0].powi(2) + a.center[1].powi(2)).sqrt();
                if norm >= 1.0 {
                    return fail(
                        &format!("weight.atoms[{i}].center"),
                        format!("|center| = {norm} outside the open disc"),
                    );
                }
                if a.mass <= 0.0 {
                    return fail(
                        &format!("weight.atoms[{i}].mass"),
                        format!("{} must be positive", a.mass),
                    );
                }
            }
        }
        Ok(())
    }
}

/// Best-effort key path from a serde_json message: the backticked name of
/// the offending field, plus line/column for everything else.
fn error_path(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    format!("line {} column {}", err.line(), err.column())
}

/// Parse and validate a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| TodaError::Config {
        path: error_path(&e),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

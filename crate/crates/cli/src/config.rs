//! JSON run configuration.
//!
//! ```json
//! {
//!   "simplex": "order-2",
//!   "face": 0,
//!   "initial_data": {"eigenmode": [1, 2]},
//!   "levels": 5,
//!   "dt_factor": 0.25,
//!   "t_list": [10, 20, 40, 80],
//!   "outputs": {"csv": "sweep.csv", "json": "sweep.json"},
//!   "seed": 7,
//!   "thresholds": {"ratio_band": 0.15, "final_ratio_tol": 0.08, "slope_range": [-1.5, -0.6]}
//! }
//! ```
//!
//! `simplex` is either a preset name (`standard-n`, `order-n`) or an object
//! `{"dim": n, "vertices": [[..], ..]}`. `initial_data` is either
//! `{"eigenmode": [m₁, …, m_n]}` or `{"random": {"max_mode": k, "with_velocity": false}}`;
//! both are built on the order-simplex and carried to the configured simplex by the
//! vertex-to-vertex affine map.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use simplex_obs::field::{AffinePullback, ScalarField, ZeroField};
use simplex_obs::geometry::SimplexSpec;
use simplex_obs::observability::{FemSettings, ENERGY_ORDER};
use simplex_obs::oracles::{order_simplex, random_low_mode_field, EigenMode};
use simplex_obs::solver::MassMode;
use simplex_obs::Simplex;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "OBS_SEED";
/// Upper bound on `2^(levels·n)` cells.
pub const MAX_CELLS_LOG2: u32 = 24;
const VELOCITY_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimplexChoice {
    Preset(String),
    Vertices(SimplexSpec),
}

impl SimplexChoice {
    pub fn build(&self) -> CliResult<Simplex> {
        match self {
            SimplexChoice::Preset(name) => preset(name),
            SimplexChoice::Vertices(spec) => Ok(Simplex::from_spec(spec)?),
        }
    }

    /// Preset name, inline JSON object, or path to a JSON file.
    pub fn from_arg(arg: &str) -> CliResult<Self> {
        let trimmed = arg.trim_start();
        if trimmed.starts_with('{') {
            return Ok(SimplexChoice::Vertices(serde_json::from_str(trimmed)?));
        }
        if arg.starts_with("standard-") || arg.starts_with("order-") {
            return Ok(SimplexChoice::Preset(arg.to_string()));
        }
        let text = std::fs::read_to_string(arg).map_err(|source| CliError::Io { path: arg.into(), source })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn preset(name: &str) -> CliResult<Simplex> {
    let parse_dim = |rest: &str| -> CliResult<usize> {
        match rest.parse::<usize>() {
            Ok(n) if (1..=8).contains(&n) => Ok(n),
            _ => Err(CliError::Config(format!("preset dimension in {name:?} must be 1..=8"))),
        }
    };
    if let Some(rest) = name.strip_prefix("standard-") {
        Ok(Simplex::standard(parse_dim(rest)?))
    } else if let Some(rest) = name.strip_prefix("order-") {
        Ok(order_simplex(parse_dim(rest)?))
    } else {
        Err(CliError::Config(format!("unknown simplex preset {name:?} (expected standard-n or order-n)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Eigenmode(Vec<u32>),
    Random {
        max_mode: u32,
        #[serde(default)]
        with_velocity: bool,
    },
}

pub type FieldPair = (Arc<dyn ScalarField>, Arc<dyn ScalarField>);

impl InitialData {
    /// Displacement and velocity fields on `s`.
    pub fn fields(&self, s: &Simplex, seed: u64) -> CliResult<FieldPair> {
        let n = s.dim();
        let (u0, u1): FieldPair = match self {
            InitialData::Eigenmode(modes) => (Arc::new(EigenMode::new(n, modes)?), Arc::new(ZeroField(n))),
            InitialData::Random { max_mode, with_velocity } => {
                let u0 = Arc::new(random_low_mode_field(n, *max_mode, seed)?);
                let u1: Arc<dyn ScalarField> = if *with_velocity {
                    Arc::new(random_low_mode_field(n, *max_mode, seed.wrapping_add(VELOCITY_SEED_OFFSET))?)
                } else {
                    Arc::new(ZeroField(n))
                };
                (u0, u1)
            }
        };
        let reference = order_simplex(n);
        if s.vertices() == reference.vertices() {
            return Ok((u0, u1));
        }
        Ok((
            Arc::new(AffinePullback::between(s, &reference, u0)),
            Arc::new(AffinePullback::between(s, &reference, u1)),
        ))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Every ratio within this distance of 1.
    #[serde(default)]
    pub ratio_band: Option<f64>,
    /// Ratio at the largest horizon within this distance of 1.
    #[serde(default)]
    pub final_ratio_tol: Option<f64>,
    /// Inclusive bounds on the fitted remainder exponent.
    #[serde(default)]
    pub slope_range: Option<[f64; 2]>,
}

impl Thresholds {
    fn validate(&self) -> CliResult<()> {
        for (name, v) in [("ratio_band", self.ratio_band), ("final_ratio_tol", self.final_ratio_tol)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("thresholds.{name} must be positive, got {v}")));
                }
            }
        }
        if let Some([lo, hi]) = self.slope_range {
            if !(lo <= hi) {
                return Err(CliError::Config(format!("thresholds.slope_range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

fn default_levels() -> u32 {
    5
}

fn default_dt_factor() -> f64 {
    simplex_obs::solver::DEFAULT_CFL_SAFETY
}

fn default_t_list() -> Vec<f64> {
    vec![10.0, 20.0, 40.0, 80.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub simplex: SimplexChoice,
    #[serde(default)]
    pub face: usize,
    pub initial_data: InitialData,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    #[serde(default = "default_t_list")]
    pub t_list: Vec<f64>,
    #[serde(default)]
    pub mass: MassMode,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub levels: Option<u32>,
    pub dt_factor: Option<f64>,
    pub face: Option<usize>,
    pub seed: Option<u64>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// A configuration that passed every precondition check.
pub struct ValidatedRun {
    pub simplex: Simplex,
    pub face: usize,
    pub u0: Arc<dyn ScalarField>,
    pub u1: Arc<dyn ScalarField>,
    pub settings: FemSettings,
    pub t_list: Vec<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Applies `OBS_SEED` (if set) and then explicit flags.
    pub fn apply_overrides(&mut self, flags: &Overrides, env_seed: Option<&str>) -> CliResult<()> {
        if let Some(text) = env_seed {
            self.seed = text
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={text:?} is not an unsigned integer")))?;
        }
        if let Some(v) = flags.levels {
            self.levels = v;
        }
        if let Some(v) = flags.dt_factor {
            self.dt_factor = v;
        }
        if let Some(v) = flags.face {
            self.face = v;
        }
        if let Some(v) = flags.seed {
            self.seed = v;
        }
        if let Some(v) = &flags.csv {
            self.outputs.csv = Some(v.clone());
        }
        if let Some(v) = &flags.json {
            self.outputs.json = Some(v.clone());
        }
        Ok(())
    }

    /// Checks every precondition and builds the simplex and initial data.
    /// `min_horizons` is 3 for sweeps and 1 for single runs.
    pub fn validate(&self, min_horizons: usize) -> CliResult<ValidatedRun> {
        let simplex = self.simplex.build()?;
        let n = simplex.dim();
        if self.face > n {
            return Err(CliError::Config(format!("face {} out of range 0..={n}", self.face)));
        }
        if self.levels == 0 || self.levels.saturating_mul(n as u32) > MAX_CELLS_LOG2 {
            return Err(CliError::Config(format!(
                "levels {} out of range: need 1 <= levels and levels·dim <= {MAX_CELLS_LOG2}",
                self.levels
            )));
        }
        if !(self.dt_factor > 0.0 && self.dt_factor <= 1.0) {
            return Err(CliError::Config(format!("dt_factor {} must lie in (0, 1]", self.dt_factor)));
        }
        if self.t_list.len() < min_horizons {
            return Err(CliError::Config(format!(
                "t_list needs at least {min_horizons} horizons, got {}",
                self.t_list.len()
            )));
        }
        if self.t_list.iter().any(|t| !(*t > 0.0 && t.is_finite())) || self.t_list.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::Config("t_list must be positive, finite and strictly increasing".into()));
        }
        if let MassMode::ConsistentCg { tol } = self.mass {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(CliError::Config(format!("CG tolerance {tol} must lie in (0, 1)")));
            }
        }
        self.thresholds.validate()?;
        let (u0, u1) = self.initial_data.fields(&simplex, self.seed)?;
        Ok(ValidatedRun {
            simplex,
            face: self.face,
            u0,
            u1,
            settings: FemSettings {
                levels: self.levels,
                dt_factor: self.dt_factor,
                mass: self.mass,
                energy_order: ENERGY_ORDER,
            },
            t_list: self.t_list.clone(),
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::from_json(r#"{"simplex": "order-2", "initial_data": {"eigenmode": [1, 2]}}"#).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.levels, 5);
        assert_eq!(c.dt_factor, 0.5);
        assert_eq!(c.t_list, vec![10.0, 20.0, 40.0, 80.0]);
        assert_eq!(c.mass, MassMode::Consistent);
        assert!(c.validate(3).is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_json() {
        let e = RunConfig::from_json(r#"{"simplex": "order-2", "initial_data": {"eigenmode": [1, 2]}, "levle": 3}"#);
        assert!(matches!(e, Err(CliError::Config(_))));
        assert!(RunConfig::from_json("{not json").is_err());
        let nested = r#"{"simplex": "order-2", "initial_data": {"random": {"max_mode": 3, "colour": 1}}}"#;
        assert!(RunConfig::from_json(nested).is_err());
    }

    #[test]
    fn explicit_vertices_and_mass_modes() {
        let c = RunConfig::from_json(
            r#"{"simplex": {"dim": 2, "vertices": [[0,0],[2,0],[0,1]]}, "face": 2,
                "initial_data": {"random": {"max_mode": 3, "with_velocity": true}},
                "mass": {"consistent-cg": {"tol": 1e-12}}, "t_list": [1, 2, 3]}"#,
        )
        .unwrap();
        assert_eq!(c.mass, MassMode::ConsistentCg { tol: 1e-12 });
        let run = c.validate(3).unwrap();
        assert_eq!(run.simplex.volume(), 1.0);
        // The pulled-back data vanishes on the new boundary.
        let corner = nalgebra::DVector::from_vec(vec![1.0, 0.5]);
        assert!(run.u0.value(&corner).abs() < 1e-12);
        assert!(run.u1.value(&corner).abs() < 1e-12);
        let lumped = RunConfig::from_json(r#"{"simplex": "order-2", "initial_data": {"eigenmode": [1, 2]}, "mass": "lumped"}"#);
        assert_eq!(lumped.unwrap().mass, MassMode::Lumped);
    }

    #[test]
    fn precondition_failures() {
        let mut c = base();
        c.dt_factor = 1.5;
        assert!(matches!(c.validate(3), Err(CliError::Config(_))));
        let mut c = base();
        c.face = 3;
        assert!(c.validate(3).is_err());
        let mut c = base();
        c.levels = 0;
        assert!(c.validate(3).is_err());
        let mut c = base();
        c.t_list = vec![10.0, 5.0, 20.0];
        assert!(c.validate(3).is_err());
        let mut c = base();
        c.t_list = vec![10.0];
        assert!(c.validate(3).is_err());
        assert!(c.validate(1).is_ok());
        let mut c = base();
        c.initial_data = InitialData::Eigenmode(vec![2, 2]);
        assert!(matches!(c.validate(3), Err(CliError::Core(simplex_obs::Error::RepeatedMode(_)))));
        let mut c = base();
        c.simplex = SimplexChoice::Preset("cube-3".into());
        assert!(c.validate(3).is_err());
        let mut c = base();
        c.thresholds.slope_range = Some([0.0, -1.0]);
        assert!(c.validate(3).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = base();
        c.seed = 1;
        c.apply_overrides(&Overrides::default(), Some("17")).unwrap();
        assert_eq!(c.seed, 17);
        let flags = Overrides { seed: Some(99), levels: Some(3), ..Default::default() };
        c.apply_overrides(&flags, Some("17")).unwrap();
        assert_eq!((c.seed, c.levels), (99, 3));
        assert!(c.apply_overrides(&Overrides::default(), Some("abc")).is_err());
    }

    #[test]
    fn simplex_argument_forms() {
        assert_eq!(SimplexChoice::from_arg("standard-3").unwrap().build().unwrap().volume(), 1.0 / 6.0);
        let inline = SimplexChoice::from_arg(r#"{"dim": 1, "vertices": [[0], [2]]}"#).unwrap();
        assert_eq!(inline.build().unwrap().volume(), 2.0);
        assert!(SimplexChoice::from_arg("/definitely/missing.json").is_err());
        assert!(preset("order-0").is_err());
    }
}

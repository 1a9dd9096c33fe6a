//! Scenario files.
//!
//! A scenario is a TOML document whose keys carry their units
//! (`pmax_dbm`, `noise_dbm`, `rbar_bps_hz`, ...). Everything is converted to
//! linear units once, here. Missing keys fall back to the reference
//! five-user scenario: 43 dBm budget, -104 dBm noise, users at
//! 20/140/260/380/500 m requiring 2/2/2/4/4 bps/Hz, harmonic step `1/t`.
//!
//! ```toml
//! pmax_dbm = 43.0
//! slots = 10000
//! seed = 7
//!
//! [fading]
//! shadowing_sigma_db = 8.0
//!
//! [[users]]
//! distance_m = 20.0
//! rbar_bps_hz = 2.0
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use noma_core::channel::{FadingParams, ShadowingMode, UserProfile};
use noma_core::oracle::{GridSpec, MAX_ORACLE_USERS};
use noma_core::oups::{Allocator, OmaAllocator, OracleAllocator, Scenario, StepSchedule, UspaAllocator};
use noma_core::{dbm_to_watts, oups};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Invalid or inconsistent configuration value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending key, e.g. `users[2].distance_m`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocatorKind {
    Uspa,
    Oracle,
    Oma,
}

impl AllocatorKind {
    pub const ALL: [AllocatorKind; 3] = [AllocatorKind::Uspa, AllocatorKind::Oracle, AllocatorKind::Oma];

    pub fn as_str(self) -> &'static str {
        match self {
            AllocatorKind::Uspa => "uspa",
            AllocatorKind::Oracle => "oracle",
            AllocatorKind::Oma => "oma",
        }
    }

    pub fn build(self, grid: GridSpec) -> Box<dyn Allocator> {
        match self {
            AllocatorKind::Uspa => Box::new(UspaAllocator),
            AllocatorKind::Oracle => Box::new(OracleAllocator(grid)),
            AllocatorKind::Oma => Box::new(OmaAllocator),
        }
    }
}

impl fmt::Display for AllocatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AllocatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uspa" => Ok(AllocatorKind::Uspa),
            "oracle" => Ok(AllocatorKind::Oracle),
            "oma" => Ok(AllocatorKind::Oma),
            other => Err(format!("unknown allocator `{other}` (expected uspa, oracle or oma)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingSection {
    pub pathloss_const_db: f64,
    pub pathloss_slope_db: f64,
    pub shadowing_sigma_db: f64,
    /// `per_trial` or `per_slot`.
    pub shadowing: String,
}

impl Default for FadingSection {
    fn default() -> Self {
        Self {
            pathloss_const_db: 128.1,
            pathloss_slope_db: 37.6,
            shadowing_sigma_db: 8.0,
            shadowing: "per_trial".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSection {
    /// `harmonic`, `constant` or `custom`.
    pub kind: String,
    /// Harmonic numerator, or the constant step.
    pub zeta0: f64,
    /// Per-slot steps for `custom`.
    pub values: Vec<f64>,
}

impl Default for StepSection {
    fn default() -> Self {
        Self {
            kind: "harmonic".into(),
            zeta0: 1.0,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub resolution: usize,
    pub max_subset_size: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            resolution: g.resolution,
            max_subset_size: g.max_subset_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub rbar_bps_hz: f64,
    pub distance_m: f64,
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
}

fn one() -> f64 {
    1.0
}

fn default_noise_dbm() -> f64 {
    -104.0
}

/// Random-geometry snapshot study parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapSection {
    pub n_users: usize,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
    pub noise_dbm: f64,
}

impl Default for GapSection {
    fn default() -> Self {
        Self {
            n_users: 5,
            distance_min_m: 20.0,
            distance_max_m: 500.0,
            noise_dbm: -104.0,
        }
    }
}

/// The file as written, with defaults filled in. Serialising it back gives the
/// canonical form that the run manifest hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub pmax_dbm: f64,
    pub slots: u64,
    pub trials: Option<u32>,
    pub seed: u64,
    pub allocator: Option<AllocatorKind>,
    pub fading: FadingSection,
    pub step: StepSection,
    pub grid: GridSection,
    pub gap: GapSection,
    pub users: Vec<UserSection>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let users = [(20.0, 2.0), (140.0, 2.0), (260.0, 2.0), (380.0, 4.0), (500.0, 4.0)]
            .into_iter()
            .map(|(distance_m, rbar_bps_hz)| UserSection {
                weight: 1.0,
                rbar_bps_hz,
                distance_m,
                noise_dbm: -104.0,
            })
            .collect();
        Self {
            pmax_dbm: 43.0,
            slots: 10_000,
            trials: None,
            seed: 1,
            allocator: None,
            fading: FadingSection::default(),
            step: StepSection::default(),
            grid: GridSection::default(),
            gap: GapSection::default(),
            users,
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let path = e
                .span()
                .map(|s| format!("<toml bytes {}..{}>", s.start, s.end))
                .unwrap_or_else(|| "<toml>".into());
            err(path, message)
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(Self::parse(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file serialises")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Converts to linear units and checks every field.
    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let finite = |path: &str, v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(path, format!("must be finite, got {v}")))
            }
        };

        finite("pmax_dbm", self.pmax_dbm)?;
        let pmax = dbm_to_watts(self.pmax_dbm);
        if !(pmax > 0.0 && pmax.is_finite()) {
            return Err(err("pmax_dbm", "does not give a positive finite power"));
        }
        if self.slots == 0 {
            return Err(err("slots", "must be at least 1"));
        }
        if self.trials == Some(0) {
            return Err(err("trials", "must be at least 1"));
        }

        let shadowing = match self.fading.shadowing.as_str() {
            "per_trial" => ShadowingMode::PerTrial,
            "per_slot" => ShadowingMode::PerSlot,
            other => {
                return Err(err(
                    "fading.shadowing",
                    format!("expected `per_trial` or `per_slot`, got `{other}`"),
                ))
            }
        };
        finite("fading.pathloss_const_db", self.fading.pathloss_const_db)?;
        finite("fading.pathloss_slope_db", self.fading.pathloss_slope_db)?;
        if !(self.fading.shadowing_sigma_db.is_finite() && self.fading.shadowing_sigma_db >= 0.0) {
            return Err(err("fading.shadowing_sigma_db", "must be finite and nonnegative"));
        }
        let fading = FadingParams {
            pathloss_const_db: self.fading.pathloss_const_db,
            pathloss_slope_db: self.fading.pathloss_slope_db,
            shadowing_sigma_db: self.fading.shadowing_sigma_db,
            shadowing,
            rng_seed: self.seed,
        };

        let step = match self.step.kind.as_str() {
            "harmonic" => StepSchedule::Harmonic { zeta0: self.step.zeta0 },
            "constant" => StepSchedule::Constant { zeta: self.step.zeta0 },
            "custom" => StepSchedule::Custom(self.step.values.clone()),
            other => {
                return Err(err(
                    "step.kind",
                    format!("expected `harmonic`, `constant` or `custom`, got `{other}`"),
                ))
            }
        };
        step.validate().map_err(|e| {
            let path = if self.step.kind == "custom" { "step.values" } else { "step.zeta0" };
            err(path, e.to_string())
        })?;

        let grid = GridSpec {
            resolution: self.grid.resolution,
            max_subset_size: self.grid.max_subset_size,
        };
        if grid.resolution < 2 {
            return Err(err("grid.resolution", "must be at least 2"));
        }
        if grid.max_subset_size < 1 {
            return Err(err("grid.max_subset_size", "must be at least 1"));
        }

        if self.users.is_empty() {
            return Err(err("users", "at least one user is required"));
        }
        let mut users = Vec::with_capacity(self.users.len());
        for (i, u) in self.users.iter().enumerate() {
            let at = |field: &str| format!("users[{i}].{field}");
            if !(u.weight.is_finite() && u.weight >= 0.0) {
                return Err(err(at("weight"), "must be finite and nonnegative"));
            }
            if !(u.rbar_bps_hz.is_finite() && u.rbar_bps_hz >= 0.0) {
                return Err(err(at("rbar_bps_hz"), "must be finite and nonnegative"));
            }
            if !(u.distance_m.is_finite() && u.distance_m > 0.0) {
                return Err(err(at("distance_m"), "must be positive"));
            }
            finite(&at("noise_dbm"), u.noise_dbm)?;
            users.push(UserProfile {
                id: i,
                weight: u.weight,
                min_avg_rate: u.rbar_bps_hz,
                distance_m: u.distance_m,
                noise_power: dbm_to_watts(u.noise_dbm),
            });
        }
        if !users.iter().any(|u| u.weight > 0.0) {
            return Err(err("users", "at least one weight must be positive"));
        }

        let g = &self.gap;
        if g.n_users == 0 || g.n_users > MAX_ORACLE_USERS {
            return Err(err(
                "gap.n_users",
                format!("must be between 1 and {MAX_ORACLE_USERS}"),
            ));
        }
        if !(g.distance_min_m.is_finite() && g.distance_min_m > 0.0) {
            return Err(err("gap.distance_min_m", "must be positive"));
        }
        if !(g.distance_max_m.is_finite() && g.distance_max_m >= g.distance_min_m) {
            return Err(err("gap.distance_max_m", "must be finite and at least distance_min_m"));
        }
        finite("gap.noise_dbm", g.noise_dbm)?;

        Ok(ScenarioConfig {
            users,
            pmax,
            fading,
            slots: self.slots,
            trials: self.trials,
            step,
            allocator: self.allocator,
            grid,
            gap: GapSpec {
                n_users: g.n_users,
                distance_min_m: g.distance_min_m,
                distance_max_m: g.distance_max_m,
                noise_power: dbm_to_watts(g.noise_dbm),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSpec {
    pub n_users: usize,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
    pub noise_power: f64,
}

/// Validated experiment description in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub users: Vec<UserProfile>,
    /// Watts.
    pub pmax: f64,
    pub fading: FadingParams,
    pub slots: u64,
    pub trials: Option<u32>,
    pub step: StepSchedule,
    /// `None` runs every variant.
    pub allocator: Option<AllocatorKind>,
    pub grid: GridSpec,
    pub gap: GapSpec,
}

impl ScenarioConfig {
    /// The per-trial scenario handed to the scheduler.
    pub fn scenario(&self, trial: u32) -> Scenario {
        oups::Scenario {
            users: self.users.clone(),
            pmax: self.pmax,
            fading: self.fading.clone(),
            slots: self.slots,
            step: self.step.clone(),
            trial,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_scenario() {
        let cfg = ScenarioFile::parse("").unwrap().resolve().unwrap();
        assert_eq!(cfg.users.len(), 5);
        assert!((cfg.pmax - 19.952_623_149_688_8).abs() < 1e-9);
        let rbar: Vec<f64> = cfg.users.iter().map(|u| u.min_avg_rate).collect();
        assert_eq!(rbar, vec![2.0, 2.0, 2.0, 4.0, 4.0]);
        assert_eq!(cfg.step, StepSchedule::Harmonic { zeta0: 1.0 });
        assert_eq!(cfg.fading.shadowing_sigma_db, 8.0);
        assert_eq!(cfg.grid, GridSpec::default());
        assert!((cfg.users[0].noise_power / 10f64.powf(-13.4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_units_and_sections() {
        let text = r#"
            pmax_dbm = 30.0
            slots = 50
            seed = 9
            allocator = "oma"

            [fading]
            shadowing_sigma_db = 0.0
            shadowing = "per_slot"

            [step]
            kind = "custom"
            values = [0.5, 0.25]

            [[users]]
            distance_m = 100.0
            rbar_bps_hz = 1.5
            noise_dbm = -100.0

            [[users]]
            weight = 0.5
            distance_m = 300.0
        "#;
        let cfg = ScenarioFile::parse(text).unwrap().resolve().unwrap();
        assert!((cfg.pmax - 1.0).abs() < 1e-12);
        assert_eq!(cfg.slots, 50);
        assert_eq!(cfg.fading.rng_seed, 9);
        assert_eq!(cfg.fading.shadowing, ShadowingMode::PerSlot);
        assert_eq!(cfg.allocator, Some(AllocatorKind::Oma));
        assert_eq!(cfg.step, StepSchedule::Custom(vec![0.5, 0.25]));
        assert_eq!(cfg.users[1].weight, 0.5);
        assert_eq!(cfg.users[1].min_avg_rate, 0.0);
        assert!((cfg.users[0].noise_power - 1e-13).abs() < 1e-25);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ScenarioFile::parse("[[users]]\ndistance_m = -3.0\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert_eq!(e.path, "users[0].distance_m");

        let text = "[[users]]\ndistance_m = 3.0\n[[users]]\ndistance_m = 5.0\nweight = -1.0\n";
        let e = ScenarioFile::parse(text).unwrap().resolve().unwrap_err();
        assert_eq!(e.path, "users[1].weight");

        let e = ScenarioFile::parse("slots = 0").unwrap().resolve().unwrap_err();
        assert_eq!(e.path, "slots");

        let e = ScenarioFile::parse("[step]\nkind = \"sqrt\"").unwrap().resolve().unwrap_err();
        assert_eq!(e.path, "step.kind");

        let e = ScenarioFile::parse("[grid]\nresolution = 1").unwrap().resolve().unwrap_err();
        assert_eq!(e.path, "grid.resolution");

        let e = ScenarioFile::parse("[gap]\nn_users = 9").unwrap().resolve().unwrap_err();
        assert_eq!(e.path, "gap.n_users");

        assert!(ScenarioFile::parse("bogus_key = 1").is_err());
        assert!(ScenarioFile::parse("pmax_dbm = \"loud\"").is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let file = ScenarioFile::parse("seed = 4\n[[users]]\ndistance_m = 42.0\n").unwrap();
        let again = ScenarioFile::parse(&file.to_toml()).unwrap();
        assert_eq!(file, again);
        assert_eq!(file.digest(), again.digest());
        let other = ScenarioFile::parse("seed = 5\n[[users]]\ndistance_m = 42.0\n").unwrap();
        assert_ne!(file.digest(), other.digest());
    }
}

//! Scenario files.
//!
//! A scenario is a TOML document with the sections below. Only
//! `scenario.sensors` and `scenario.steps` are required; unknown keys are
//! rejected.
//!
//! ```toml
//! [scenario]
//! sensors = 10
//! steps = 300
//! period = 0.1            # T
//! trials = 100            # Monte-Carlo trials
//! seed = 0                # master seed
//! box = [0.0, 10.0]       # sensor and target placement range
//! mode = "distributed"    # or "centralized"
//! kinds = ["linear"]      # linear | linearized-exact | linearized-estimated
//!
//! [topology]
//! kind = "kappa"          # cycle | kappa | all-to-all | file
//! kappa = 1
//! weights = "random-stochastic"
//!
//! [noise]
//! process_std = 0.1       # Q_q
//! measurement_std = 0.1   # R_r
//! init_std = 1.0          # σ₀ of the initial estimates
//!
//! [filter]
//! rho_bound = 0.99
//!
//! [detector]              # optional; enables detection and isolation
//! confidence = 0.95
//!
//! [[faults]]
//! sensor = 3
//! onset = 100
//! profile = "constant-offset"
//! magnitude = 50.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdi::DetectorConfig;
use crate::measurement::{FaultSpec, MeasurementKind, NoiseMode};
use crate::network::WeightScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    #[default]
    Distributed,
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub sensors: usize,
    pub steps: usize,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_box", rename = "box")]
    pub bounds: [f64; 2],
    #[serde(default)]
    pub mode: FilterMode,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<MeasurementKind>,
}

fn default_period() -> f64 {
    0.1
}

fn default_trials() -> usize {
    100
}

fn default_box() -> [f64; 2] {
    [0.0, 10.0]
}

fn default_kinds() -> Vec<MeasurementKind> {
    vec![MeasurementKind::Linear]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Cycle,
    #[default]
    Kappa,
    AllToAll,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKind,
    pub kappa: usize,
    /// Edge list for `kind = "file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub weights: WeightScheme,
    /// Fixed sensor positions (`id,x,y,z`); drawn per trial otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<PathBuf>,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self { kind: TopologyKind::Kappa, kappa: 1, path: None, weights: WeightScheme::RandomStochastic, positions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Acceleration noise standard deviation `Q_q`.
    pub process_std: f64,
    /// Output noise standard deviation `R_r`.
    pub measurement_std: f64,
    pub mode: NoiseMode,
    /// Beacon propagation speed (range per unit TOA).
    pub speed: f64,
    /// Standard deviation of the initial estimates around the truth.
    pub init_std: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { process_std: 0.1, measurement_std: 0.1, mode: NoiseMode::OutputAdditive, speed: 1.0, init_std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub rho_bound: f64,
    /// Closed-loop evaluations allowed in the gain search.
    pub budget: usize,
    /// Pre-designed gains (`sensor,row,c0..`); designed per trial otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<PathBuf>,
    /// Floor on the centralized filter's measurement noise std, used when
    /// the simulated noise is zero.
    pub min_measurement_std: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self { rho_bound: crate::gain::DEFAULT_RHO_BOUND, budget: crate::gain::DesignOptions::default().budget, gains: None, min_measurement_std: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Fixed initial state `[x, y, z, vx, vy, vz]`; drawn per trial
    /// otherwise (position uniform in the box, velocity normal).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<[f64; 6]>,
    pub velocity_std: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { initial: None, velocity_std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ScenarioConfig {
    /// A config with defaults everywhere except the two required fields.
    pub fn minimal(sensors: usize, steps: usize) -> Self {
        Self {
            scenario: ScenarioSection {
                sensors,
                steps,
                period: default_period(),
                trials: default_trials(),
                seed: 0,
                bounds: default_box(),
                mode: FilterMode::Distributed,
                kinds: default_kinds(),
            },
            topology: TopologySection::default(),
            noise: NoiseSection::default(),
            filter: FilterSection::default(),
            target: TargetSection::default(),
            detector: None,
            faults: Vec::new(),
            output: OutputSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let s = &self.scenario;
        if s.sensors < 2 {
            return bad(format!("scenario.sensors must be at least 2, got {}", s.sensors));
        }
        if s.steps < 1 {
            return bad("scenario.steps must be at least 1".into());
        }
        if !(s.period > 0.0 && s.period.is_finite()) {
            return bad(format!("scenario.period must be positive, got {}", s.period));
        }
        if s.trials < 1 {
            return bad("scenario.trials must be at least 1".into());
        }
        if !(s.bounds[1] > s.bounds[0]) {
            return bad(format!("scenario.box must be increasing, got {:?}", s.bounds));
        }
        if s.kinds.is_empty() {
            return bad("scenario.kinds must list at least one measurement kind".into());
        }
        if s.kinds.contains(&MeasurementKind::Nonlinear) {
            return bad("scenario.kinds: the filters need linear or linearized outputs".into());
        }
        match self.topology.kind {
            TopologyKind::Kappa if self.topology.kappa < 1 || self.topology.kappa >= s.sensors => {
                return bad(format!("topology.kappa must lie in [1, {}), got {}", s.sensors, self.topology.kappa));
            }
            TopologyKind::File if self.topology.path.is_none() => return bad("topology.path is required for kind = \"file\"".into()),
            _ => {}
        }
        let n = &self.noise;
        for (name, v) in [("process_std", n.process_std), ("measurement_std", n.measurement_std), ("init_std", n.init_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("noise.{name} must be non-negative, got {v}"));
            }
        }
        if !(n.speed > 0.0) {
            return bad(format!("noise.speed must be positive, got {}", n.speed));
        }
        if !(self.filter.rho_bound > 0.0 && self.filter.rho_bound < 1.0) {
            return bad(format!("filter.rho_bound must lie in (0, 1), got {}", self.filter.rho_bound));
        }
        if self.filter.budget < 1 {
            return bad("filter.budget must be at least 1".into());
        }
        if !(self.filter.min_measurement_std > 0.0) {
            return bad("filter.min_measurement_std must be positive".into());
        }
        if !(self.target.velocity_std >= 0.0) {
            return bad("target.velocity_std must be non-negative".into());
        }
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        for f in &self.faults {
            if f.sensor >= s.sensors {
                return bad(format!("fault on sensor {} but only {} sensors", f.sensor, s.sensors));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Reads and validates a scenario; relative paths inside it are resolved
/// against the scenario file's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    let wrap = |e: Error| Error::Config { path: path.to_path_buf(), message: e.to_string() };
    let mut cfg = ScenarioConfig::from_toml(&text).map_err(wrap)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in [&mut cfg.topology.path, &mut cfg.topology.positions, &mut cfg.filter.gains].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn save_scenario(config: &ScenarioConfig, path: &Path) -> Result<()> {
    fs::write(path, config.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::FaultProfile;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = 50\n").unwrap();
        assert_eq!(cfg.scenario.period, 0.1);
        assert_eq!(cfg.scenario.trials, 100);
        assert_eq!(cfg.scenario.kinds, vec![MeasurementKind::Linear]);
        assert_eq!(cfg, ScenarioConfig::minimal(10, 50));
        assert!(cfg.detector.is_none());
        let with_detector = ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = 50\n[detector]\n").unwrap();
        assert_eq!(with_detector.detector.unwrap().confidence, 0.95);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = 50\nperiod = -0.1\n").is_err());
        assert!(ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = 50\ncolour = 1\n").is_err());
        assert!(ScenarioConfig::from_toml("[scenario]\nsensors = 10\n").is_err());
        assert!(ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = 5\n[topology]\nkind = \"file\"\n").is_err());
        assert!(ScenarioConfig::from_toml("[scenario]\nsensors = 4\nsteps = 5\n[topology]\nkappa = 4\n").is_err());
        let err = ScenarioConfig::from_toml("[scenario]\nsensors = 10\nsteps = \"x\"\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn round_trip() {
        let mut cfg = ScenarioConfig::minimal(8, 120);
        cfg.scenario.kinds = vec![MeasurementKind::Linear, MeasurementKind::LinearizedEstimated];
        cfg.scenario.mode = FilterMode::Centralized;
        cfg.topology.kind = TopologyKind::Cycle;
        cfg.noise.measurement_std = 0.37;
        cfg.target.initial = Some([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]);
        cfg.detector = Some(DetectorConfig::default());
        cfg.faults.push(FaultSpec { sensor: 2, onset: 40, profile: FaultProfile::Ramp, magnitude: 0.5, components: vec![0] });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        save_scenario(&cfg, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), cfg);
    }
}

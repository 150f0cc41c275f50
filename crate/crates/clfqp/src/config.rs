//! Scenario documents: one JSON file per simulation run.

use std::path::{Path, PathBuf};

use clfqp_core::clfqp::{ControllerConfig, ControllerMode, SaturationSpec};
use clfqp_core::qp::{DEFAULT_MAX_ITER, DEFAULT_TOL, MAX_CONSTRAINTS, MAX_VARS};
use clfqp_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{read_versioned, BipedParamsCfg, ClfCfg};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// Free-form notes; ignored by the runner.
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<serde_json::Value>,
    pub plant: PlantSpec,
    /// Designed gait, relative to the scenario file. Biped scenarios without
    /// one design the default gait on the fly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait_file: Option<String>,
    pub controller: ControllerSpec,
    pub saturation: SaturationCfg,
    #[serde(default)]
    pub sim: SimSpec,
    /// Relative to the scenario file.
    pub output_dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    ThreeLinkBiped {
        #[serde(default)]
        params: BipedParamsCfg,
    },
    /// Unit masses with position outputs; a "step" is `step_period` seconds.
    LinearChain {
        m: usize,
        initial_q: Vec<f64>,
        initial_dq: Vec<f64>,
        step_period: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeCfg {
    MinNorm,
    SoftQp,
    HardQp,
}

impl From<ModeCfg> for ControllerMode {
    fn from(m: ModeCfg) -> Self {
        match m {
            ModeCfg::MinNorm => ControllerMode::MinNormClosedForm,
            ModeCfg::SoftQp => ControllerMode::SoftQp,
            ModeCfg::HardQp => ControllerMode::HardQp,
        }
    }
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_kp() -> Vec<f64> {
    ClfCfg::default().kp
}

fn default_kd() -> Vec<f64> {
    ClfCfg::default().kd
}

fn default_epsilon() -> f64 {
    ClfCfg::default().epsilon
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub mode: ModeCfg,
    #[serde(default = "default_kp")]
    pub kp: Vec<f64>,
    #[serde(default = "default_kd")]
    pub kd: Vec<f64>,
    /// CLF weight; the identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
    #[serde(default = "default_max_iter")]
    pub qp_max_iter: usize,
    #[serde(default = "default_tol")]
    pub qp_tol: f64,
    #[serde(default)]
    pub blind_clamp: bool,
}

impl ControllerSpec {
    pub fn clf(&self) -> ClfCfg {
        ClfCfg { kp: self.kp.clone(), kd: self.kd.clone(), q: self.q.clone(), epsilon: self.epsilon }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", deny_unknown_fields)]
pub enum SaturationCfg {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "caseA")]
    CaseA,
    #[serde(rename = "caseB")]
    CaseB,
    #[serde(rename = "caseC")]
    CaseC,
    #[serde(rename = "caseD")]
    CaseD,
    /// Either constant `umin`/`umax` or offsets around the regressed `u*(θ)`.
    #[serde(rename = "custom")]
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        umin: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        umax: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offsets_lo: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offsets_hi: Option<Vec<f64>>,
    },
}

/// Scale from the reference four-channel bounds to this biped's torques.
pub const PRESET_SCALE: f64 = 28.0;

/// Reference `(lower, upper)` rows for the stance and swing leg-angle motors;
/// the leg-shape rows have no counterpart on a walker with rigid legs.
const CASE_ROWS: [[(f64, f64); 2]; 3] = [
    [(-8.0, 8.0), (-8.0, 8.0)],
    [(-5.0, 4.0), (-2.0, 4.0)],
    [(-4.0, 1.0), (-2.0, 1.0)],
];
/// Case D offsets around `u*(θ)`, used unscaled.
const CASE_D_OFFSETS: [f64; 2] = [4.0, 1.0];

/// Constant bounds or dynamic offsets for a preset, with channel `i` taking
/// the stance row when even and the swing row when odd.
pub enum PresetBounds {
    Constant { umin: Vec<f64>, umax: Vec<f64> },
    Offsets { lo: Vec<f64>, hi: Vec<f64> },
}

impl SaturationCfg {
    pub fn preset_bounds(&self, m: usize) -> Option<PresetBounds> {
        let case = match self {
            SaturationCfg::CaseA => 0,
            SaturationCfg::CaseB => 1,
            SaturationCfg::CaseC => 2,
            SaturationCfg::CaseD => {
                let hi: Vec<f64> = (0..m).map(|i| CASE_D_OFFSETS[i % 2]).collect();
                return Some(PresetBounds::Offsets { lo: hi.iter().map(|v| -v).collect(), hi });
            }
            _ => return None,
        };
        let rows = &CASE_ROWS[case];
        Some(PresetBounds::Constant {
            umin: (0..m).map(|i| PRESET_SCALE * rows[i % 2].0).collect(),
            umax: (0..m).map(|i| PRESET_SCALE * rows[i % 2].1).collect(),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            SaturationCfg::None => "none",
            SaturationCfg::CaseA => "caseA",
            SaturationCfg::CaseB => "caseB",
            SaturationCfg::CaseC => "caseC",
            SaturationCfg::CaseD => "caseD",
            SaturationCfg::Custom { .. } => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub control_rate: f64,
    pub substeps: usize,
    pub n_steps: usize,
    pub torso_limit: f64,
    pub timeout_factor: f64,
    pub seed: u64,
    pub perturbation: f64,
    pub zero_torque: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            control_rate: s.control_rate,
            substeps: s.substeps,
            n_steps: s.n_steps,
            torso_limit: s.torso_limit,
            timeout_factor: s.timeout_factor,
            seed: s.seed,
            perturbation: s.perturbation,
            zero_torque: s.zero_torque,
        }
    }
}

impl SimSpec {
    pub fn to_core(&self) -> SimConfig {
        SimConfig {
            control_rate: self.control_rate,
            substeps: self.substeps,
            n_steps: self.n_steps,
            torso_limit: self.torso_limit,
            timeout_factor: self.timeout_factor,
            seed: self.seed,
            perturbation: self.perturbation,
            zero_torque: self.zero_torque,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("control_rate", self.control_rate),
            ("torso_limit", self.torso_limit),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::config(format!("sim.{k}"), format!("must be > 0, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(CliError::config("sim.substeps", "must be >= 1"));
        }
        if self.n_steps == 0 {
            return Err(CliError::config("sim.n_steps", "must be >= 1"));
        }
        if !(self.timeout_factor > 1.0) {
            return Err(CliError::config("sim.timeout_factor", format!("must be > 1, got {}", self.timeout_factor)));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(CliError::config("sim.perturbation", format!("must be >= 0, got {}", self.perturbation)));
        }
        Ok(())
    }
}

fn check_pairs(lo_key: &str, lo: &[f64], hi_key: &str, hi: &[f64], m: usize) -> Result<()> {
    for (k, v) in [(lo_key, lo), (hi_key, hi)] {
        if v.len() != m {
            return Err(CliError::config(k, format!("needs {m} entries, got {}", v.len())));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{k}[{i}]"), "must be finite"));
        }
    }
    if let Some(i) = (0..m).find(|&i| !(lo[i] < hi[i])) {
        return Err(CliError::config(
            format!("{lo_key}[{i}]"),
            format!("must be below {hi_key}[{i}] ({} >= {})", lo[i], hi[i]),
        ));
    }
    Ok(())
}

impl Scenario {
    /// Reads and validates a scenario; returns it with the directory that
    /// relative paths resolve against.
    pub fn load(path: &Path) -> Result<(Scenario, PathBuf)> {
        let sc: Scenario = read_versioned(path, "scenario", SCENARIO_VERSION)?;
        sc.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((sc, base))
    }

    pub fn m(&self) -> usize {
        match &self.plant {
            PlantSpec::ThreeLinkBiped { .. } => clfqp_core::models::biped::M,
            PlantSpec::LinearChain { m, .. } => *m,
        }
    }

    /// Structural checks that need no gait; numerical ones happen when the
    /// scenario is resolved.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(CliError::config("name", "must not be empty"));
        }
        if self.output_dir.trim().is_empty() {
            return Err(CliError::config("output_dir", "must not be empty"));
        }
        match &self.plant {
            PlantSpec::ThreeLinkBiped { params } => params.validate("plant.params")?,
            PlantSpec::LinearChain { m, initial_q, initial_dq, step_period } => {
                if *m == 0 {
                    return Err(CliError::config("plant.m", "must be >= 1"));
                }
                for (k, v) in [("plant.initial_q", initial_q), ("plant.initial_dq", initial_dq)] {
                    if v.len() != 2 * m {
                        return Err(CliError::config(k, format!("needs {} entries, got {}", 2 * m, v.len())));
                    }
                }
                if !(*step_period > 0.0) {
                    return Err(CliError::config("plant.step_period", "must be > 0"));
                }
                if self.gait_file.is_some() {
                    return Err(CliError::config("gait_file", "only biped scenarios take a gait"));
                }
            }
        }
        let m = self.m();
        self.controller.clf().build(m, "controller")?;
        let c = &self.controller;
        let qp = c.mode != ModeCfg::MinNorm;
        if qp && !(c.p1 > 0.0 && c.p1.is_finite()) {
            return Err(CliError::config("controller.p1", format!("must be > 0 for QP modes, got {}", c.p1)));
        }
        if c.mode == ModeCfg::SoftQp && !(c.p2 > 0.0 && c.p2.is_finite()) {
            return Err(CliError::config("controller.p2", format!("must be > 0 for soft_qp, got {}", c.p2)));
        }
        if c.qp_max_iter == 0 {
            return Err(CliError::config("controller.qp_max_iter", "must be >= 1"));
        }
        if !(c.qp_tol > 0.0) {
            return Err(CliError::config("controller.qp_tol", "must be > 0"));
        }
        let nv = if c.mode == ModeCfg::SoftQp { 3 * m + 1 } else { m + 1 };
        let nc = if c.mode == ModeCfg::SoftQp { 4 * m + 1 } else { 2 * m + 1 };
        if qp && (nv > MAX_VARS || nc > MAX_CONSTRAINTS) {
            return Err(CliError::config("plant.m", format!("{m} channels exceed the QP workspace")));
        }
        match &self.saturation {
            SaturationCfg::None if qp => {
                return Err(CliError::config("saturation.preset", "QP modes need saturation bounds"));
            }
            SaturationCfg::CaseD | SaturationCfg::Custom { offsets_lo: Some(_), .. }
                if matches!(self.plant, PlantSpec::LinearChain { .. }) =>
            {
                return Err(CliError::config("saturation", "dynamic bounds need a biped gait with a u* fit"));
            }
            SaturationCfg::Custom { umin, umax, offsets_lo, offsets_hi } => {
                match (umin, umax, offsets_lo, offsets_hi) {
                    (Some(lo), Some(hi), None, None) => {
                        check_pairs("saturation.umin", lo, "saturation.umax", hi, m)?;
                    }
                    (None, None, Some(lo), Some(hi)) => {
                        check_pairs("saturation.offsets_lo", lo, "saturation.offsets_hi", hi, m)?;
                    }
                    _ => {
                        return Err(CliError::config(
                            "saturation",
                            "custom needs either umin and umax, or offsets_lo and offsets_hi",
                        ));
                    }
                }
            }
            _ => {}
        }
        self.sim.validate()
    }

    /// The controller configuration once the saturation bounds are resolved.
    pub fn controller_config(&self, sat: SaturationSpec) -> Result<ControllerConfig> {
        let c = &self.controller;
        let cfg = ControllerConfig {
            mode: c.mode.into(),
            p1: c.p1,
            p2: c.p2,
            sat,
            clf: c.clf().build(self.m(), "controller")?,
            qp_max_iter: c.qp_max_iter,
            qp_tol: c.qp_tol,
            blind_clamp: c.blind_clamp,
        };
        cfg.validate(self.m()).map_err(|e| CliError::config("saturation", e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biped_scenario() -> Scenario {
        Scenario {
            schema_version: SCENARIO_VERSION,
            name: "t".into(),
            comment: None,
            plant: PlantSpec::ThreeLinkBiped { params: BipedParamsCfg::default() },
            gait_file: None,
            controller: ControllerSpec {
                mode: ModeCfg::HardQp,
                kp: default_kp(),
                kd: default_kd(),
                q: None,
                epsilon: default_epsilon(),
                p1: 1000.0,
                p2: 0.0,
                qp_max_iter: 20,
                qp_tol: 1e-7,
                blind_clamp: false,
            },
            saturation: SaturationCfg::CaseA,
            sim: SimSpec::default(),
            output_dir: "out".into(),
        }
    }

    #[test]
    fn presets_scale_the_leg_angle_rows() {
        let Some(PresetBounds::Constant { umin, umax }) = SaturationCfg::CaseB.preset_bounds(2) else { panic!() };
        assert_eq!(umin, vec![-140.0, -56.0]);
        assert_eq!(umax, vec![112.0, 112.0]);
        let Some(PresetBounds::Offsets { lo, hi }) = SaturationCfg::CaseD.preset_bounds(3) else { panic!() };
        assert_eq!(hi, vec![4.0, 1.0, 4.0]);
        assert_eq!(lo, vec![-4.0, -1.0, -4.0]);
        assert!(SaturationCfg::None.preset_bounds(2).is_none());
    }

    #[test]
    fn inverted_bounds_name_the_key() {
        let mut sc = biped_scenario();
        sc.saturation = SaturationCfg::Custom {
            umin: Some(vec![-1.0, 5.0]),
            umax: Some(vec![1.0, 5.0]),
            offsets_lo: None,
            offsets_hi: None,
        };
        let e = sc.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("saturation.umin[1]"), "{e}");
    }

    #[test]
    fn other_validation_keys() {
        let mut sc = biped_scenario();
        sc.sim.substeps = 0;
        assert!(sc.validate().unwrap_err().to_string().starts_with("sim.substeps"));
        let mut sc = biped_scenario();
        sc.controller.p1 = 0.0;
        assert!(sc.validate().unwrap_err().to_string().starts_with("controller.p1"));
        let mut sc = biped_scenario();
        sc.saturation = SaturationCfg::None;
        assert!(sc.validate().unwrap_err().to_string().starts_with("saturation.preset"));
        let mut sc = biped_scenario();
        sc.plant = PlantSpec::LinearChain { m: 2, initial_q: vec![0.0; 3], initial_dq: vec![0.0; 4], step_period: 1.0 };
        assert!(sc.validate().unwrap_err().to_string().starts_with("plant.initial_q"));
    }

    #[test]
    fn json_round_trip_is_semantic_identity() {
        let sc = biped_scenario();
        let text = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = serde_json::to_value(biped_scenario()).unwrap();
        v["controller"]["gain"] = serde_json::json!(3.0);
        assert!(serde_json::from_value::<Scenario>(v).is_err());
    }
}

//! Versioned JSON documents shared by the verbs: plant descriptions, designed
//! gaits and the pieces of a scenario that mirror core types.

use std::fs;
use std::path::Path;

use clfqp_core::bezier::{Bezier, NUM_POINTS};
use clfqp_core::linalg::Matrix;
use clfqp_core::mechsys::{MechState, OutputMap};
use clfqp_core::models::gait::{
    GaitDesign, GaitDiagnostics, GaitTemplate, DEFAULT_EPSILON, DEFAULT_KD, DEFAULT_KP,
};
use clfqp_core::models::BipedParams;
use clfqp_core::resclf::{build_resclf, Resclf};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_version, CliError, Result};

pub const PLANT_VERSION: u32 = 1;
pub const GAIT_VERSION: u32 = 1;

/// `null` in JSON for non-finite values, NaN when read back.
pub mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Reads a JSON document, first checking its `schema_version` so that an
/// unknown version is reported as such rather than as a shape mismatch.
pub fn read_versioned<T: DeserializeOwned>(path: &Path, what: &'static str, supported: u32) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::parse(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CliError::config("schema_version", format!("missing or not an integer in {}", path.display())))?;
    check_version(what, u32::try_from(found).unwrap_or(u32::MAX), supported)?;
    serde_json::from_value(value).map_err(|e| CliError::parse(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BipedParamsCfg {
    pub leg_length: f64,
    pub leg_mass: f64,
    pub hip_mass: f64,
    pub torso_length: f64,
    pub torso_mass: f64,
    pub leg_inertia: f64,
    pub torso_inertia: f64,
    pub gravity: f64,
    pub min_step_length: f64,
}

impl Default for BipedParamsCfg {
    fn default() -> Self {
        BipedParams::default().into()
    }
}

impl From<BipedParams> for BipedParamsCfg {
    fn from(p: BipedParams) -> Self {
        Self {
            leg_length: p.leg_length,
            leg_mass: p.leg_mass,
            hip_mass: p.hip_mass,
            torso_length: p.torso_length,
            torso_mass: p.torso_mass,
            leg_inertia: p.leg_inertia,
            torso_inertia: p.torso_inertia,
            gravity: p.gravity,
            min_step_length: p.min_step_length,
        }
    }
}

impl BipedParamsCfg {
    pub fn to_core(&self) -> BipedParams {
        BipedParams {
            leg_length: self.leg_length,
            leg_mass: self.leg_mass,
            hip_mass: self.hip_mass,
            torso_length: self.torso_length,
            torso_mass: self.torso_mass,
            leg_inertia: self.leg_inertia,
            torso_inertia: self.torso_inertia,
            gravity: self.gravity,
            min_step_length: self.min_step_length,
        }
    }

    /// Core validation, reported against `key`.
    pub fn validate(&self, key: &str) -> Result<()> {
        self.to_core().validate().map_err(|e| CliError::config(key, e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateCfg {
    pub half_step_angle: f64,
    pub torso_angle: f64,
    pub torso_points: [f64; 3],
    pub swing_points: [f64; 3],
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Default for TemplateCfg {
    fn default() -> Self {
        let t = GaitTemplate::default();
        Self {
            half_step_angle: t.half_step_angle,
            torso_angle: t.torso_angle,
            torso_points: t.torso_points,
            swing_points: t.swing_points,
            min_rate: t.min_rate,
            max_rate: t.max_rate,
        }
    }
}

impl TemplateCfg {
    pub fn to_core(&self) -> GaitTemplate {
        GaitTemplate {
            half_step_angle: self.half_step_angle,
            torso_angle: self.torso_angle,
            torso_points: self.torso_points,
            swing_points: self.swing_points,
            min_rate: self.min_rate,
            max_rate: self.max_rate,
        }
    }
}

/// Gains of the RES-CLF; `q` defaults to the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClfCfg {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    pub epsilon: f64,
}

impl Default for ClfCfg {
    fn default() -> Self {
        Self { kp: DEFAULT_KP.to_vec(), kd: DEFAULT_KD.to_vec(), q: None, epsilon: DEFAULT_EPSILON }
    }
}

impl ClfCfg {
    /// Builds the CLF for `m` outputs; `key` prefixes the reported setting.
    pub fn build(&self, m: usize, key: &str) -> Result<Resclf> {
        if self.kp.len() != m {
            return Err(CliError::config(format!("{key}.kp"), format!("needs {m} entries, got {}", self.kp.len())));
        }
        if self.kd.len() != m {
            return Err(CliError::config(format!("{key}.kd"), format!("needs {m} entries, got {}", self.kd.len())));
        }
        for (name, v) in [("kp", &self.kp), ("kd", &self.kd)] {
            if let Some(i) = v.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(CliError::config(format!("{key}.{name}[{i}]"), "must be positive and finite"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::config(format!("{key}.epsilon"), format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        let q = match &self.q {
            None => Matrix::identity(2 * m),
            Some(rows) => {
                if rows.len() != 2 * m || rows.iter().any(|r| r.len() != 2 * m) {
                    return Err(CliError::config(format!("{key}.q"), format!("must be {0}x{0}", 2 * m)));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Matrix::from_row_slice(2 * m, 2 * m, &flat)
            }
        };
        build_resclf(&self.kp, &self.kd, &q, self.epsilon).map_err(|e| {
            let which = match e {
                clfqp_core::Error::BadEpsilon(_) => "epsilon",
                clfqp_core::Error::InvalidGains(_) if self.q.is_some() => "q",
                _ => "kp",
            };
            CliError::config(format!("{key}.{which}"), e.to_string())
        })
    }
}

/// Input to `gait-design`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub schema_version: u32,
    #[serde(rename = "_comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<serde_json::Value>,
    pub kind: String,
    #[serde(default)]
    pub params: BipedParamsCfg,
    #[serde(default)]
    pub template: TemplateCfg,
    #[serde(default)]
    pub clf: ClfCfg,
}

impl PlantFile {
    pub fn read(path: &Path) -> Result<Self> {
        let p: PlantFile = read_versioned(path, "plant file", PLANT_VERSION)?;
        if p.kind != "three_link_biped" {
            return Err(CliError::config("kind", format!("gait design supports \"three_link_biped\", got \"{}\"", p.kind)));
        }
        p.params.validate("params")?;
        p.template.to_core().validate().map_err(|e| CliError::config("template", e.to_string()))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateCfg {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputMapCfg {
    pub h0: Vec<Vec<f64>>,
    pub theta_coeffs: Vec<f64>,
    /// One row of Bézier control points per output.
    pub yd: Vec<[f64; NUM_POINTS]>,
    pub theta_range: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsCfg {
    #[serde(with = "nullable")]
    pub fixed_point_residual: f64,
    pub newton_iterations: usize,
    #[serde(with = "nullable")]
    pub max_eta_on_orbit: f64,
    #[serde(with = "nullable")]
    pub ustar_fit_residual: f64,
    #[serde(with = "nullable")]
    pub ustar_span: f64,
    #[serde(with = "nullable")]
    pub spectral_radius: f64,
}

/// A designed gait with everything needed to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitFile {
    pub schema_version: u32,
    pub params: BipedParamsCfg,
    pub template: TemplateCfg,
    pub clf: ClfCfg,
    pub outmap: OutputMapCfg,
    pub fixed_point: StateCfg,
    pub step_period: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ustar_fit: Option<Vec<[f64; NUM_POINTS]>>,
    pub diagnostics: DiagnosticsCfg,
}

impl GaitFile {
    pub fn from_design(params: &BipedParamsCfg, template: &TemplateCfg, clf: &ClfCfg, g: &GaitDesign) -> Self {
        let om = &g.outmap;
        let d = &g.diagnostics;
        Self {
            schema_version: GAIT_VERSION,
            params: params.clone(),
            template: template.clone(),
            clf: clf.clone(),
            outmap: OutputMapCfg {
                h0: (0..om.h0.rows()).map(|i| om.h0.row(i).to_vec()).collect(),
                theta_coeffs: om.theta_coeffs.clone(),
                yd: om.yd.points().to_vec(),
                theta_range: [om.theta_range.0, om.theta_range.1],
            },
            fixed_point: StateCfg { q: g.fixed_point.q.clone(), dq: g.fixed_point.dq.clone() },
            step_period: g.step_period,
            ustar_fit: g.ustar_fit.as_ref().map(|b| b.points().to_vec()),
            diagnostics: DiagnosticsCfg {
                fixed_point_residual: d.fixed_point_residual,
                newton_iterations: d.newton_iterations,
                max_eta_on_orbit: d.max_eta_on_orbit,
                ustar_fit_residual: d.ustar_fit_residual,
                ustar_span: d.ustar_span,
                spectral_radius: d.spectral_radius,
            },
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_versioned(path, "gait file", GAIT_VERSION)
    }

    pub fn to_design(&self) -> Result<GaitDesign> {
        let om = &self.outmap;
        let rows = om.h0.len();
        let cols = om.h0.first().map_or(0, |r| r.len());
        if rows == 0 || om.h0.iter().any(|r| r.len() != cols) {
            return Err(CliError::config("outmap.h0", "must be a non-empty rectangular matrix"));
        }
        let flat: Vec<f64> = om.h0.iter().flatten().copied().collect();
        let outmap = OutputMap::new(
            Matrix::from_row_slice(rows, cols, &flat),
            om.theta_coeffs.clone(),
            Bezier::new(om.yd.clone()),
            (om.theta_range[0], om.theta_range[1]),
        )
        .map_err(|e| CliError::config("outmap", e.to_string()))?;
        let fixed_point = MechState::new(self.fixed_point.q.clone(), self.fixed_point.dq.clone())
            .map_err(|e| CliError::config("fixed_point", e.to_string()))?;
        if fixed_point.dim() != cols {
            return Err(CliError::config("fixed_point.q", format!("needs {cols} entries")));
        }
        if !(self.step_period > 0.0) {
            return Err(CliError::config("step_period", "must be > 0"));
        }
        let d = &self.diagnostics;
        Ok(GaitDesign {
            outmap,
            fixed_point,
            step_period: self.step_period,
            ustar_fit: self.ustar_fit.as_ref().map(|p| Bezier::new(p.clone())),
            diagnostics: GaitDiagnostics {
                fixed_point_residual: d.fixed_point_residual,
                newton_iterations: d.newton_iterations,
                max_eta_on_orbit: d.max_eta_on_orbit,
                ustar_fit_residual: d.ustar_fit_residual,
                ustar_span: d.ustar_span,
                spectral_radius: d.spectral_radius,
            },
        })
    }
}

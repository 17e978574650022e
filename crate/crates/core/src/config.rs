//! Run configuration: a single JSON file with defaults for every key, plus
//! flag overrides applied by the CLI (flags win).
//!
//! Units are fixed per key and suffixed in the name: metres for scene
//! lengths, millimetres for optics. All angles anywhere are degrees.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{self, CalibrationPreset, Lights};
use crate::geometry::{RxMode, ScenePoint};
use crate::optics::{LensSpec, PhotodiodeSpec, SourceSpec};
use crate::radiometry::{
    calibrate_scale, CalibrationReference, PatternModel, RadiationPattern, TabulatedMap,
};
use crate::telecom::CalibrationCurve;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Lamp mounting height. Not a measured value; adjust to the installation.
    pub tx_height_m: f64,
    /// Receiver (dashboard) height.
    pub rx_height_m: f64,
    pub distances_m: Vec<f64>,
    pub lateral_offsets_m: Vec<f64>,
    pub modes: Vec<RxMode>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            tx_height_m: 3.0,
            rx_height_m: 1.05,
            distances_m: vec![3.0, 6.0, 12.0, 18.0, 25.0, 37.0, 50.0],
            lateral_offsets_m: vec![0.0, 1.5],
            modes: vec![RxMode::Optimal, RxMode::Flat],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotodiodeConfig {
    pub active_side_mm: f64,
}

impl Default for PhotodiodeConfig {
    fn default() -> Self {
        Self { active_side_mm: 3.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub disk_diameter_mm: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            disk_diameter_mm: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Lambertian,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    pub kind: PatternKind,
    pub i0: f64,
    /// Generalized-Lambertian orders (vertical, horizontal).
    pub m_v: f64,
    pub m_h: f64,
    /// Explicit vertical tilt of the lobe, degrees. When absent the tilt is
    /// aimed so the lobe axis crosses receiver height `aim_distance_m` down
    /// the road.
    pub tilt_deg: Option<f64>,
    pub aim_distance_m: f64,
    /// CSV path for `kind = tabulated` (`alpha_deg,beta_deg,intensity`).
    pub map_csv: Option<PathBuf>,
    /// Explicit amplitude scale c (mV per collected-power unit). Overrides
    /// reference-point calibration when set.
    pub scale_mv: Option<f64>,
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            kind: PatternKind::Lambertian,
            i0: 1.0,
            m_v: 20.0,
            m_h: 8.0,
            tilt_deg: None,
            aim_distance_m: 25.0,
            map_csv: None,
            scale_mv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub lens: String,
    pub distance_m: f64,
    pub lateral_m: f64,
    pub amplitude_mv: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            lens: "AS2".into(),
            distance_m: 6.0,
            lateral_m: 0.0,
            amplitude_mv: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Select a preset by label; wins over baud/lights selection.
    pub preset: Option<String>,
    pub baud: u32,
    pub lights: Lights,
    /// Explicit curve parameters; win over any preset.
    pub t_mv: Option<f64>,
    pub sigma_mv: Option<f64>,
    pub n_bits: u32,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            preset: None,
            baud: 115_200,
            lights: Lights::Off,
            t_mv: None,
            sigma_mv: None,
            n_bits: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub photodiode: PhotodiodeConfig,
    pub source: SourceConfig,
    /// Lens labels to process; empty selects the whole catalog.
    pub lenses: Vec<String>,
    pub pattern: PatternConfig,
    /// Reference measurement fixing the amplitude scale. Set to `null` to
    /// run uncalibrated (only `afov` works then).
    pub calibration_reference: Option<ReferenceConfig>,
    pub calibration: CalibrationConfig,
    /// PER threshold defining the EFOV.
    pub threshold: f64,
    pub catalog_path: Option<PathBuf>,
    pub presets_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            photodiode: PhotodiodeConfig::default(),
            source: SourceConfig::default(),
            lenses: Vec::new(),
            pattern: PatternConfig::default(),
            calibration_reference: Some(ReferenceConfig::default()),
            calibration: CalibrationConfig::default(),
            threshold: 1e-3,
            catalog_path: None,
            presets_path: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Hash of the fully-resolved configuration, embedded in output headers
    /// so results can be traced back to their inputs.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(12);
        for b in &digest[..6] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Validate and assemble everything the commands need.
    pub fn resolve(&self) -> Result<Setup> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.photodiode.active_side_mm <= 0.0
            || self.source.disk_diameter_mm <= 0.0
            || self.scene.tx_height_m <= self.scene.rx_height_m
        {
            return Err(Error::Config(
                "lengths must be positive and the lamp must sit above the receiver".into(),
            ));
        }
        if self.scene.distances_m.iter().any(|d| *d <= 0.0) {
            return Err(Error::Config("grid distances must be positive".into()));
        }
        let catalog = match &self.catalog_path {
            Some(p) => catalog::load_lens_catalog(p)?,
            None => catalog::builtin_lenses().to_vec(),
        };
        let lenses: Vec<LensSpec> = if self.lenses.is_empty() {
            catalog.clone()
        } else {
            self.lenses
                .iter()
                .map(|label| catalog::find_lens(&catalog, label).cloned())
                .collect::<Result<_>>()?
        };
        let pd = PhotodiodeSpec::new(self.photodiode.active_side_mm);
        let src = SourceSpec::new(self.source.disk_diameter_mm);

        let model = match self.pattern.kind {
            PatternKind::Lambertian => {
                let tilt = self.pattern.tilt_deg.unwrap_or_else(|| {
                    (self.scene.tx_height_m - self.scene.rx_height_m)
                        .atan2(self.pattern.aim_distance_m)
                        .to_degrees()
                });
                PatternModel::GeneralizedLambertian {
                    i0: self.pattern.i0,
                    tilt_deg: tilt,
                    m_v: self.pattern.m_v,
                    m_h: self.pattern.m_h,
                }
            }
            PatternKind::Tabulated => {
                let path = self.pattern.map_csv.as_ref().ok_or_else(|| {
                    Error::Config("tabulated pattern needs pattern.map_csv".into())
                })?;
                let text = std::fs::read_to_string(path)?;
                PatternModel::Tabulated(TabulatedMap::from_csv(&text)?)
            }
        };
        let mut pattern = RadiationPattern::new(model);
        if let Some(scale) = self.pattern.scale_mv {
            pattern = pattern.with_scale(scale);
        } else if let Some(reference) = &self.calibration_reference {
            let lens = catalog::find_lens(&catalog, &reference.lens)?;
            let scene = ScenePoint::new(
                self.scene.tx_height_m,
                self.scene.rx_height_m,
                reference.distance_m,
                reference.lateral_m,
                RxMode::Optimal,
            );
            pattern = calibrate_scale(
                &pattern,
                &CalibrationReference {
                    scene,
                    measured_mv: reference.amplitude_mv,
                },
                lens,
                &pd,
                &src,
            )?;
        }

        let presets = match &self.presets_path {
            Some(p) => catalog::load_presets(p)?,
            None => catalog::builtin_presets().to_vec(),
        };
        let (curve, preset_label) = match (self.calibration.t_mv, self.calibration.sigma_mv) {
            (Some(t), Some(sigma)) => {
                if sigma <= 0.0 {
                    return Err(Error::Config("sigma_mv must be positive".into()));
                }
                (
                    CalibrationCurve {
                        t_mv: t,
                        sigma_mv: sigma,
                        n_bits: self.calibration.n_bits,
                        baud: self.calibration.baud,
                    },
                    "custom".to_string(),
                )
            }
            (None, None) => {
                let preset = match &self.calibration.preset {
                    Some(label) => catalog::find_preset_by_label(&presets, label)?,
                    None => catalog::find_preset(
                        &presets,
                        self.calibration.baud,
                        self.calibration.lights,
                    )?,
                };
                (preset.curve(), preset.label.clone())
            }
            _ => {
                return Err(Error::Config(
                    "custom calibration needs both t_mv and sigma_mv".into(),
                ))
            }
        };

        Ok(Setup {
            lenses,
            pd,
            src,
            pattern,
            curve,
            preset_label,
            presets,
            tx_height_m: self.scene.tx_height_m,
            rx_height_m: self.scene.rx_height_m,
            distances_m: self.scene.distances_m.clone(),
            lateral_offsets_m: self.scene.lateral_offsets_m.clone(),
            modes: self.scene.modes.clone(),
            threshold: self.threshold,
            config_hash: self.hash(),
        })
    }
}

/// Everything the commands need, resolved and validated.
#[derive(Debug, Clone)]
pub struct Setup {
    pub lenses: Vec<LensSpec>,
    pub pd: PhotodiodeSpec,
    pub src: SourceSpec,
    /// Pattern, calibrated unless the config disabled the reference.
    pub pattern: RadiationPattern,
    pub curve: CalibrationCurve,
    pub preset_label: String,
    pub presets: Vec<CalibrationPreset>,
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    pub distances_m: Vec<f64>,
    pub lateral_offsets_m: Vec<f64>,
    pub modes: Vec<RxMode>,
    pub threshold: f64,
    pub config_hash: String,
}

impl Setup {
    pub fn scene_at(&self, distance_m: f64, lateral_m: f64, mode: RxMode) -> ScenePoint {
        ScenePoint::new(
            self.tx_height_m,
            self.rx_height_m,
            distance_m,
            lateral_m,
            mode,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_resolves_calibrated() {
        let setup = RunConfig::default().resolve().unwrap();
        assert_eq!(setup.lenses.len(), 4);
        assert!(setup.pattern.is_calibrated());
        assert_eq!(setup.preset_label, "lights-off-115k");
        assert_eq!(setup.curve.baud, 115_200);
        assert_eq!(setup.curve.n_bits, 48);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.threshold = 1e-4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_lens_is_a_config_error() {
        let cfg = RunConfig {
            lenses: vec!["AS9".into()],
            ..RunConfig::default()
        };
        assert!(matches!(cfg.resolve(), Err(Error::UnknownLens(_))));
    }

    #[test]
    fn uncalibrated_when_reference_removed() {
        let cfg = RunConfig {
            calibration_reference: None,
            ..RunConfig::default()
        };
        let setup = cfg.resolve().unwrap();
        assert!(!setup.pattern.is_calibrated());
    }

    #[test]
    fn preset_selection_by_flags_and_label() {
        let mut cfg = RunConfig::default();
        cfg.calibration.baud = 230_400;
        cfg.calibration.lights = Lights::On;
        assert_eq!(cfg.resolve().unwrap().preset_label, "lights-on-230k");
        cfg.calibration.preset = Some("lights-off-115k".into());
        assert_eq!(cfg.resolve().unwrap().preset_label, "lights-off-115k");
        cfg.calibration.t_mv = Some(1.0);
        cfg.calibration.sigma_mv = Some(0.5);
        let setup = cfg.resolve().unwrap();
        assert_eq!(setup.preset_label, "custom");
        assert_eq!(setup.curve.t_mv, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.threshold = 0.0;
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.scene.tx_height_m = 0.5;
        assert!(cfg.resolve().is_err());
        let mut cfg = RunConfig::default();
        cfg.calibration.t_mv = Some(1.0); // sigma missing
        assert!(cfg.resolve().is_err());
    }
}

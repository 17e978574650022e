//! Shipped data: the condenser lens catalog and the amplitude-to-PER
//! calibration presets.
//!
//! Both live as plain data files under `data/` (embedded into the binary)
//! and can be swapped for external files of the same schema via the config.
//! Preset `(T, sigma)` values are representative fit outputs for this
//! receiver chain, not published constants; refit them from measured data
//! with `fit-calibration` whenever real calibration CSVs are available.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::optics::{LensKind, LensSpec};
use crate::telecom::CalibrationCurve;
use crate::{Error, Result};

/// Lens catalog CSV shipped with the crate
/// (`label,diameter_mm,focal_mm,kind,vendor_code`).
pub const LENS_CATALOG_CSV: &str = include_str!("../data/lenses.csv");

/// Calibration preset records shipped with the crate
/// (`{label, baud, n_bits, t_mv, sigma_mv, lights}`).
pub const CALIBRATION_PRESETS_JSON: &str = include_str!("../data/calibrations.json");

/// Ambient artificial-light condition a calibration was measured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lights {
    On,
    Off,
}

impl Lights {
    pub fn label(self) -> &'static str {
        match self {
            Lights::On => "on",
            Lights::Off => "off",
        }
    }
}

impl std::str::FromStr for Lights {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "on" => Ok(Lights::On),
            "off" => Ok(Lights::Off),
            other => Err(Error::Config(format!(
                "lights must be 'on' or 'off', got '{other}'"
            ))),
        }
    }
}

/// A named `(T, sigma)` calibration for one baud rate and light condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPreset {
    pub label: String,
    pub baud: u32,
    pub n_bits: u32,
    pub t_mv: f64,
    pub sigma_mv: f64,
    pub lights: Lights,
}

impl CalibrationPreset {
    pub fn curve(&self) -> CalibrationCurve {
        CalibrationCurve {
            t_mv: self.t_mv,
            sigma_mv: self.sigma_mv,
            n_bits: self.n_bits,
            baud: self.baud,
        }
    }
}

/// Parse a lens catalog in the shipped CSV schema.
pub fn parse_lens_catalog(text: &str) -> Result<Vec<LensSpec>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("lens catalog header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("lens catalog is missing column '{name}'")))
    };
    let (il, id, ifo, ik, iv) = (
        col("label")?,
        col("diameter_mm")?,
        col("focal_mm")?,
        col("kind")?,
        col("vendor_code")?,
    );
    let mut lenses = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("lens catalog row {}: {e}", n + 2)))?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("lens catalog row {}: {e}", n + 2)))
        };
        let kind = match field(ik).to_ascii_lowercase().as_str() {
            "aspheric" => LensKind::Aspheric,
            "fresnel" => LensKind::Fresnel,
            other => {
                return Err(Error::Config(format!(
                    "lens catalog row {}: unknown kind '{other}'",
                    n + 2
                )))
            }
        };
        let (diameter_mm, focal_mm) = (num(id)?, num(ifo)?);
        if diameter_mm <= 0.0 || focal_mm <= 0.0 {
            return Err(Error::Config(format!(
                "lens catalog row {}: diameter and focal length must be positive",
                n + 2
            )));
        }
        lenses.push(LensSpec {
            label: field(il),
            diameter_mm,
            focal_mm,
            kind,
            vendor_code: field(iv),
        });
    }
    if lenses.is_empty() {
        return Err(Error::Config("lens catalog has no entries".into()));
    }
    Ok(lenses)
}

pub fn load_lens_catalog(path: &Path) -> Result<Vec<LensSpec>> {
    parse_lens_catalog(&std::fs::read_to_string(path)?)
}

pub fn parse_presets(text: &str) -> Result<Vec<CalibrationPreset>> {
    let presets: Vec<CalibrationPreset> = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("calibration presets: {e}")))?;
    for p in &presets {
        if p.sigma_mv <= 0.0 || p.t_mv < 0.0 || p.n_bits == 0 {
            return Err(Error::Config(format!(
                "preset '{}': need sigma > 0, T >= 0 and at least one bit",
                p.label
            )));
        }
    }
    Ok(presets)
}

pub fn load_presets(path: &Path) -> Result<Vec<CalibrationPreset>> {
    parse_presets(&std::fs::read_to_string(path)?)
}

/// The four condensers used throughout: AS1, AS2, FR1, FR2.
pub fn builtin_lenses() -> &'static [LensSpec] {
    static CATALOG: OnceLock<Vec<LensSpec>> = OnceLock::new();
    CATALOG.get_or_init(|| parse_lens_catalog(LENS_CATALOG_CSV).expect("embedded lens catalog"))
}

pub fn builtin_presets() -> &'static [CalibrationPreset] {
    static PRESETS: OnceLock<Vec<CalibrationPreset>> = OnceLock::new();
    PRESETS
        .get_or_init(|| parse_presets(CALIBRATION_PRESETS_JSON).expect("embedded presets"))
}

/// Case-insensitive catalog lookup.
pub fn find_lens<'a>(catalog: &'a [LensSpec], label: &str) -> Result<&'a LensSpec> {
    catalog
        .iter()
        .find(|l| l.label.eq_ignore_ascii_case(label))
        .ok_or_else(|| Error::UnknownLens(label.to_string()))
}

pub fn find_preset_by_label<'a>(
    presets: &'a [CalibrationPreset],
    label: &str,
) -> Result<&'a CalibrationPreset> {
    presets
        .iter()
        .find(|p| p.label.eq_ignore_ascii_case(label))
        .ok_or_else(|| Error::Config(format!("no calibration preset labelled '{label}'")))
}

pub fn find_preset(
    presets: &[CalibrationPreset],
    baud: u32,
    lights: Lights,
) -> Result<&CalibrationPreset> {
    presets
        .iter()
        .find(|p| p.baud == baud && p.lights == lights)
        .ok_or_else(|| {
            Error::Config(format!(
                "no calibration preset for {baud} baud with lights {}",
                lights.label()
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_mirrors_lens_table() {
        let lenses = builtin_lenses();
        assert_eq!(lenses.len(), 4);
        let as1 = find_lens(lenses, "AS1").unwrap();
        assert_eq!(as1.diameter_mm, 25.4);
        assert_eq!(as1.focal_mm, 16.0);
        assert_eq!(as1.kind, LensKind::Aspheric);
        let fr2 = find_lens(lenses, "fr2").unwrap(); // case-insensitive
        assert_eq!(fr2.focal_mm, 32.0);
        assert_eq!(fr2.kind, LensKind::Fresnel);
        assert!(matches!(
            find_lens(lenses, "XX9"),
            Err(Error::UnknownLens(_))
        ));
    }

    #[test]
    fn builtin_presets_cover_both_bauds_and_lights() {
        let presets = builtin_presets();
        assert_eq!(presets.len(), 4);
        for baud in [115_200, 230_400] {
            for lights in [Lights::On, Lights::Off] {
                let p = find_preset(presets, baud, lights).unwrap();
                assert_eq!(p.curve().baud, baud);
                assert!(p.sigma_mv > 0.0);
            }
        }
        // lower baud keeps the lower threshold under either light condition
        for lights in [Lights::On, Lights::Off] {
            let p115 = find_preset(presets, 115_200, lights).unwrap();
            let p230 = find_preset(presets, 230_400, lights).unwrap();
            assert!(p115.t_mv <= p230.t_mv);
            assert!(p115.sigma_mv <= p230.sigma_mv);
        }
        // lights-on needs more signal than lights-off
        for baud in [115_200, 230_400] {
            let on = find_preset(presets, baud, Lights::On).unwrap();
            let off = find_preset(presets, baud, Lights::Off).unwrap();
            assert!(on.t_mv >= off.t_mv);
        }
    }

    #[test]
    fn rejects_malformed_catalogs() {
        assert!(parse_lens_catalog("label,diameter_mm\nAS1,25.4\n").is_err());
        assert!(parse_lens_catalog(
            "label,diameter_mm,focal_mm,kind,vendor_code\nAS1,25.4,-16,aspheric,x\n"
        )
        .is_err());
        assert!(parse_lens_catalog(
            "label,diameter_mm,focal_mm,kind,vendor_code\nAS1,25.4,16,parabolic,x\n"
        )
        .is_err());
        assert!(parse_presets("[{\"label\":\"x\",\"baud\":1,\"n_bits\":0,\"t_mv\":1,\"sigma_mv\":1,\"lights\":\"off\"}]").is_err());
    }
}

//! Transmitter intensity patterns and the amplitude calibration scale.
//!
//! The lamp's intrinsic intensity map `I(alpha, beta, d)` is pluggable: a
//! parametric generalized-Lambertian profile with a vertical tilt, or a
//! tabulated map loaded from CSV, so a measured pattern can be dropped in
//! when available. Either way the map separates into an angular profile
//! times `1/d^2`, and a single scale factor `c` (mV per collected-power
//! unit) ties model output to measured millivolts.

use serde::{Deserialize, Serialize};

use crate::geometry::ScenePoint;
use crate::optics::{received_amplitude, LensSpec, PhotodiodeSpec, SourceSpec};
use crate::{Error, Result};

/// Angular intensity profile of the transmitter.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternModel {
    /// `I = i0 cos^{m_v}(alpha - tilt) cos^{m_h}(beta) / d^2`, clamped to
    /// zero where either cosine goes negative. `tilt_deg` aims the vertical
    /// lobe down the road.
    GeneralizedLambertian {
        i0: f64,
        tilt_deg: f64,
        m_v: f64,
        m_h: f64,
    },
    /// Bilinear interpolation over a measured `(alpha, beta)` grid, times
    /// `1/d^2`.
    Tabulated(TabulatedMap),
}

impl PatternModel {
    /// Intensity at the receiver pupil for the given line-of-sight angles
    /// (degrees) and range (metres).
    pub fn intensity(&self, alpha_deg: f64, beta_deg: f64, d_m: f64) -> Result<f64> {
        debug_assert!(d_m > 0.0, "range must be positive");
        let angular = match self {
            PatternModel::GeneralizedLambertian {
                i0,
                tilt_deg,
                m_v,
                m_h,
            } => {
                let ca = (alpha_deg - tilt_deg).to_radians().cos();
                let cb = beta_deg.to_radians().cos();
                if ca <= 0.0 || cb <= 0.0 {
                    0.0
                } else {
                    i0 * ca.powf(*m_v) * cb.powf(*m_h)
                }
            }
            PatternModel::Tabulated(map) => map.interpolate(alpha_deg, beta_deg)?,
        };
        Ok(angular / (d_m * d_m))
    }
}

/// A rectangular sampled intensity grid over `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedMap {
    alphas_deg: Vec<f64>,
    betas_deg: Vec<f64>,
    /// Row-major: `values[i * betas.len() + j]` for `(alphas[i], betas[j])`.
    values: Vec<f64>,
}

impl TabulatedMap {
    /// Build from explicit axes and row-major values.
    pub fn new(alphas_deg: Vec<f64>, betas_deg: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let map = Self {
            alphas_deg,
            betas_deg,
            values,
        };
        map.validate()?;
        Ok(map)
    }

    /// Parse the CSV schema `alpha_deg,beta_deg,intensity`: a row-major
    /// rectangular grid (beta varies fastest).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::InvalidPattern(format!("bad header: {e}")))?
            .clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidPattern(format!("missing column '{name}'")))
        };
        let (ia, ib, iv) = (col("alpha_deg")?, col("beta_deg")?, col("intensity")?);
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (n, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidPattern(format!("row {}: {e}", n + 2)))?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidPattern(format!("row {}: {e}", n + 2)))
            };
            rows.push((get(ia)?, get(ib)?, get(iv)?));
        }
        if rows.is_empty() {
            return Err(Error::InvalidPattern("empty map".into()));
        }
        // the first alpha block defines the beta axis
        let first_alpha = rows[0].0;
        let betas: Vec<f64> = rows
            .iter()
            .take_while(|r| r.0 == first_alpha)
            .map(|r| r.1)
            .collect();
        if !rows.len().is_multiple_of(betas.len()) {
            return Err(Error::InvalidPattern(format!(
                "{} rows do not form a rectangular grid of {} beta columns",
                rows.len(),
                betas.len()
            )));
        }
        let mut alphas = Vec::with_capacity(rows.len() / betas.len());
        let mut values = Vec::with_capacity(rows.len());
        for block in rows.chunks(betas.len()) {
            let a = block[0].0;
            alphas.push(a);
            for (k, row) in block.iter().enumerate() {
                if row.0 != a || row.1 != betas[k] {
                    return Err(Error::InvalidPattern(
                        "grid rows are not in row-major rectangular order".into(),
                    ));
                }
                values.push(row.2);
            }
        }
        Self::new(alphas, betas, values)
    }

    fn validate(&self) -> Result<()> {
        if self.alphas_deg.len() < 2 || self.betas_deg.len() < 2 {
            return Err(Error::InvalidPattern(
                "need at least a 2x2 grid for bilinear interpolation".into(),
            ));
        }
        if self.values.len() != self.alphas_deg.len() * self.betas_deg.len() {
            return Err(Error::InvalidPattern("value count does not match grid".into()));
        }
        for axis in [&self.alphas_deg, &self.betas_deg] {
            if !axis.windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::InvalidPattern(
                    "grid axes must be strictly increasing".into(),
                ));
            }
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidPattern(
                "intensity values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Bilinear interpolation; queries outside the grid are refused rather
    /// than extrapolated.
    pub fn interpolate(&self, alpha_deg: f64, beta_deg: f64) -> Result<f64> {
        let cell = |axis: &[f64], x: f64| -> Option<usize> {
            if x < axis[0] || x > *axis.last().unwrap() {
                return None;
            }
            let idx = axis.partition_point(|v| *v <= x);
            Some(idx.clamp(1, axis.len() - 1) - 1)
        };
        let (i, j) = match (
            cell(&self.alphas_deg, alpha_deg),
            cell(&self.betas_deg, beta_deg),
        ) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                return Err(Error::PatternOutOfBounds {
                    alpha_deg,
                    beta_deg,
                })
            }
        };
        let nb = self.betas_deg.len();
        let (a0, a1) = (self.alphas_deg[i], self.alphas_deg[i + 1]);
        let (b0, b1) = (self.betas_deg[j], self.betas_deg[j + 1]);
        let ta = (alpha_deg - a0) / (a1 - a0);
        let tb = (beta_deg - b0) / (b1 - b0);
        let v = |ii: usize, jj: usize| self.values[ii * nb + jj];
        Ok(v(i, j) * (1.0 - ta) * (1.0 - tb)
            + v(i + 1, j) * ta * (1.0 - tb)
            + v(i, j + 1) * (1.0 - ta) * tb
            + v(i + 1, j + 1) * ta * tb)
    }
}

/// An intensity model plus the measured-amplitude scale `c`.
///
/// Patterns are immutable once built; calibration returns a new value, so a
/// calibrated pattern can be shared freely across sweep workers.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationPattern {
    pub model: PatternModel,
    scale_mv: Option<f64>,
}

impl RadiationPattern {
    /// An uncalibrated pattern (no amplitude scale yet).
    pub fn new(model: PatternModel) -> Self {
        Self {
            model,
            scale_mv: None,
        }
    }

    pub fn with_scale(mut self, scale_mv: f64) -> Self {
        self.scale_mv = Some(scale_mv);
        self
    }

    /// Amplitude scale `c` in mV per collected-power unit, if calibrated.
    pub fn scale(&self) -> Option<f64> {
        self.scale_mv
    }

    pub fn is_calibrated(&self) -> bool {
        self.scale_mv.is_some()
    }
}

/// One measured amplitude at a known grid point, used to fix the scale `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReference {
    pub scene: ScenePoint,
    pub measured_mv: f64,
}

/// Fix the amplitude scale so that the model reproduces `reference.measured_mv`
/// exactly at the reference point.
///
/// Uses the pattern with a unit scale internally, so calibrating twice with
/// the same reference is idempotent.
pub fn calibrate_scale(
    pattern: &RadiationPattern,
    reference: &CalibrationReference,
    lens: &LensSpec,
    pd: &PhotodiodeSpec,
    src: &SourceSpec,
) -> Result<RadiationPattern> {
    let unit = RadiationPattern {
        model: pattern.model.clone(),
        scale_mv: Some(1.0),
    };
    let angles = crate::geometry::los_angles(&reference.scene)?;
    let raw = received_amplitude(&angles, lens, pd, src, &unit)?;
    if raw <= 0.0 {
        return Err(Error::ZeroReferenceAmplitude);
    }
    Ok(pattern.clone().with_scale(reference.measured_mv / raw))
}

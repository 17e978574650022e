//! Road-grid geometry: positions and receiver orientation modes to
//! line-of-sight angles.
//!
//! Angles are degrees in every public field; conversions to radians happen
//! inside the functions that need them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Receiver orientation mode at a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RxMode {
    /// Receiver optical axis aimed at the lamp (tracking).
    Optimal,
    /// Receiver optical axis horizontal, parallel to the road axis.
    Flat,
}

impl RxMode {
    pub fn label(self) -> &'static str {
        match self {
            RxMode::Optimal => "optimal",
            RxMode::Flat => "flat",
        }
    }
}

/// A transmitter/receiver placement on the measurement grid.
///
/// The lamp sits on the road axis at `tx_height_m`; the receiver sits
/// `distance_m` down the road, `lateral_m` off-axis, at `rx_height_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub tx_height_m: f64,
    pub rx_height_m: f64,
    /// Longitudinal distance along the road axis, metres. Must be > 0.
    pub distance_m: f64,
    /// Lateral offset of the receiver from the lamp axis, metres.
    pub lateral_m: f64,
    pub rx_mode: RxMode,
}

impl ScenePoint {
    pub fn new(
        tx_height_m: f64,
        rx_height_m: f64,
        distance_m: f64,
        lateral_m: f64,
        rx_mode: RxMode,
    ) -> Self {
        Self {
            tx_height_m,
            rx_height_m,
            distance_m,
            lateral_m,
            rx_mode,
        }
    }
}

/// Line-of-sight angle set at a grid point.
///
/// `alpha_deg`/`beta_deg` are the elevation/azimuth of the receiver as seen
/// from the lamp; `phi_h_deg`/`phi_v_deg` are the receiver misalignment
/// angles relative to the line of sight. `range_m` is the full 3-D
/// line-of-sight distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSet {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub range_m: f64,
    pub phi_h_deg: f64,
    pub phi_v_deg: f64,
}

/// Convert a grid placement into the angle set used by the optical model.
///
/// Elevation `alpha = atan(dh / hypot(distance, lateral))`, azimuth
/// `beta = atan(lateral / distance)` (positive toward the offset side).
/// `Flat` mode leaves the receiver staring down the road, so the full
/// line-of-sight angles become misalignment; `Optimal` mode tracks the lamp
/// and zeroes both.
pub fn los_angles(p: &ScenePoint) -> Result<AngleSet> {
    if p.distance_m <= 0.0 {
        return Err(Error::Geometry(format!(
            "distance must be positive, got {} m",
            p.distance_m
        )));
    }
    let dh = p.tx_height_m - p.rx_height_m;
    if dh <= 0.0 {
        return Err(Error::Geometry(format!(
            "tx height ({} m) must exceed rx height ({} m)",
            p.tx_height_m, p.rx_height_m
        )));
    }
    let horiz = p.distance_m.hypot(p.lateral_m);
    let alpha = dh.atan2(horiz).to_degrees();
    let beta = p.lateral_m.atan2(p.distance_m).to_degrees();
    let range = (p.distance_m * p.distance_m + p.lateral_m * p.lateral_m + dh * dh).sqrt();
    let (phi_h, phi_v) = match p.rx_mode {
        RxMode::Optimal => (0.0, 0.0),
        RxMode::Flat => (beta, alpha),
    };
    Ok(AngleSet {
        alpha_deg: alpha,
        beta_deg: beta,
        range_m: range,
        phi_h_deg: phi_h,
        phi_v_deg: phi_v,
    })
}

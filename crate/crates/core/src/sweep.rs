//! Grid sweeps and their plot-ready CSV tables.
//!
//! Row order is fixed (catalog order, then mode, lateral offset, distance,
//! angle), floats are printed with a fixed format, and every table carries
//! a header comment with the crate version and the config hash; identical
//! config and inputs produce byte-identical files.

use crate::config::Setup;
use crate::geometry::{los_angles, RxMode};
use crate::optics::{image_geometry, received_amplitude, transition_angles_deg};
use crate::telecom::{efov, packet_error_rate, scan_amplitude, Efov, ScanAxis};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lens: String,
    pub mode: RxMode,
    pub lateral_m: f64,
    pub distance_m: f64,
    pub amplitude_mv: f64,
    pub per: f64,
}

/// Amplitude and PER over the full config grid.
pub fn run_sweep(setup: &Setup) -> Result<Vec<SweepRow>> {
    if !setup.pattern.is_calibrated() {
        return Err(Error::UncalibratedPattern);
    }
    let mut rows = Vec::new();
    for lens in &setup.lenses {
        for mode in &setup.modes {
            for lateral in &setup.lateral_offsets_m {
                for distance in &setup.distances_m {
                    let scene = setup.scene_at(*distance, *lateral, *mode);
                    let angles = los_angles(&scene)?;
                    let amplitude =
                        received_amplitude(&angles, lens, &setup.pd, &setup.src, &setup.pattern)?;
                    rows.push(SweepRow {
                        lens: lens.label.clone(),
                        mode: *mode,
                        lateral_m: *lateral,
                        distance_m: *distance,
                        amplitude_mv: amplitude,
                        per: packet_error_rate(amplitude, &setup.curve).per,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfovRow {
    pub lens: String,
    pub axis: ScanAxis,
    pub distance_m: f64,
    pub efov: Efov,
}

/// EFOV (full width, degrees) versus distance for every lens, scanned from
/// the aimed-at-the-lamp origin on the road axis.
pub fn run_efov(setup: &Setup) -> Result<Vec<EfovRow>> {
    if !setup.pattern.is_calibrated() {
        return Err(Error::UncalibratedPattern);
    }
    let mut rows = Vec::new();
    for lens in &setup.lenses {
        for axis in [ScanAxis::Horizontal, ScanAxis::Vertical] {
            for distance in &setup.distances_m {
                let scene = setup.scene_at(*distance, 0.0, RxMode::Optimal);
                let result = efov(
                    axis,
                    lens,
                    &setup.pd,
                    &setup.src,
                    &setup.pattern,
                    &setup.curve,
                    &scene,
                    setup.threshold,
                )?;
                rows.push(EfovRow {
                    lens: lens.label.clone(),
                    axis,
                    distance_m: *distance,
                    efov: result,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSimRow {
    pub lens: String,
    pub axis: ScanAxis,
    pub distance_m: f64,
    pub phi_deg: f64,
    pub amplitude_mv: f64,
    pub per: f64,
}

/// Simulated amplitude/PER scans over misalignment angle, the model curves
/// behind the EFOV tables.
pub fn run_scan_sim(
    setup: &Setup,
    axis: ScanAxis,
    phi_span_deg: f64,
    phi_step_deg: f64,
) -> Result<Vec<ScanSimRow>> {
    if !setup.pattern.is_calibrated() {
        return Err(Error::UncalibratedPattern);
    }
    if phi_step_deg <= 0.0 || phi_span_deg <= 0.0 {
        return Err(Error::Config("scan span and step must be positive".into()));
    }
    let steps = (2.0 * phi_span_deg / phi_step_deg).round() as i64;
    let mut rows = Vec::new();
    for lens in &setup.lenses {
        for distance in &setup.distances_m {
            let scene = setup.scene_at(*distance, 0.0, RxMode::Optimal);
            for k in 0..=steps {
                let phi = -phi_span_deg + k as f64 * phi_step_deg;
                let amplitude = scan_amplitude(
                    phi,
                    axis,
                    lens,
                    &setup.pd,
                    &setup.src,
                    &setup.pattern,
                    &scene,
                )?;
                rows.push(ScanSimRow {
                    lens: lens.label.clone(),
                    axis,
                    distance_m: *distance,
                    phi_deg: phi,
                    amplitude_mv: amplitude,
                    per: packet_error_rate(amplitude, &setup.curve).per,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfovRow {
    pub lens: String,
    pub diameter_mm: f64,
    pub focal_mm: f64,
    pub afov_deg: f64,
    /// Transition angles at the first grid distance, for context.
    pub phi1_deg: f64,
    pub phi2_deg: f64,
}

pub fn run_afov(setup: &Setup) -> Result<Vec<AfovRow>> {
    let distance = setup
        .distances_m
        .first()
        .copied()
        .ok_or_else(|| Error::Config("no grid distances configured".into()))?;
    let mut rows = Vec::new();
    for lens in &setup.lenses {
        let scene = setup.scene_at(distance, 0.0, RxMode::Optimal);
        let angles = los_angles(&scene)?;
        let img = image_geometry(lens, &setup.src, &angles)?;
        let (p1, p2) = transition_angles_deg(lens, &setup.pd, img.radius_mm);
        rows.push(AfovRow {
            lens: lens.label.clone(),
            diameter_mm: lens.diameter_mm,
            focal_mm: lens.focal_mm,
            afov_deg: crate::optics::afov_deg(lens, &setup.pd),
            phi1_deg: p1,
            phi2_deg: p2,
        });
    }
    Ok(rows)
}

fn header(setup: &Setup) -> String {
    format!(
        "# vlclink v{} config={} preset={} threshold={:e}\n",
        crate::VERSION,
        setup.config_hash,
        setup.preset_label,
        setup.threshold
    )
}

/// Fixed float format with enough digits to reconstruct the f64 exactly.
fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn render_sweep_csv(rows: &[SweepRow], setup: &Setup) -> String {
    let mut out = header(setup);
    out.push_str("lens,mode,lateral_m,distance_m,amplitude_mV,per\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{},{}\n",
            r.lens,
            r.mode.label(),
            r.lateral_m,
            r.distance_m,
            num(r.amplitude_mv),
            num(r.per)
        ));
    }
    out
}

pub fn render_efov_csv(rows: &[EfovRow], setup: &Setup) -> String {
    let mut out = header(setup);
    out.push_str("lens,axis,distance_m,efov_deg\n");
    for r in rows {
        // no usable link (no signal, or the threshold already missed on
        // axis) renders as an empty cell
        let efov_cell = match r.efov.width_deg() {
            Some(w) if w > 0.0 => format!("{w:.4}"),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{:.3},{}\n",
            r.lens,
            r.axis.label(),
            r.distance_m,
            efov_cell
        ));
    }
    out
}

pub fn render_scan_sim_csv(rows: &[ScanSimRow], setup: &Setup) -> String {
    let mut out = header(setup);
    out.push_str("lens,axis,distance_m,phi_deg,amplitude_mV,per\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.4},{},{}\n",
            r.lens,
            r.axis.label(),
            r.distance_m,
            r.phi_deg,
            num(r.amplitude_mv),
            num(r.per)
        ));
    }
    out
}

pub fn render_afov_csv(rows: &[AfovRow], setup: &Setup) -> String {
    let mut out = header(setup);
    out.push_str("lens,diameter_mm,focal_mm,afov_deg,phi1_deg,phi2_deg\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.6},{:.6},{:.6}\n",
            r.lens, r.diameter_mm, r.focal_mm, r.afov_deg, r.phi1_deg, r.phi2_deg
        ));
    }
    out
}

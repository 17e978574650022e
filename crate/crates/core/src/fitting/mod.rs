//! Weighted nonlinear fits: the amplitude-to-PER calibration curve, and the
//! model-plus-Gaussian decomposition that isolates floor/ceiling reflections
//! from angular scans.
//!
//! Both fits run on the damped Gauss-Newton engine in [`lm`] with
//! experimental errors as weights. Initialization rules are deterministic
//! and documented on each fit, so identical input reproduces identical
//! output bit for bit.

pub mod lm;

use serde::{Deserialize, Serialize};

use crate::geometry::{los_angles, RxMode, ScenePoint};
use crate::optics::{
    image_geometry, overlap_fraction_axis, transition_angles_deg, LensSpec, PhotodiodeSpec,
    SourceSpec,
};
use crate::radiometry::RadiationPattern;
use crate::telecom::per_from_ber;
use crate::{Error, Result};
use lm::{lm_fit, LmOptions, Scale};

/// Weights are `1 / per_err^2`; errors below this floor are clamped so
/// error-free points cannot acquire infinite weight.
pub const PER_ERROR_FLOOR: f64 = 1e-6;

/// One averaged PER measurement at a known amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub amplitude_mv: f64,
    pub amp_err_mv: f64,
    pub per: f64,
    pub per_err: f64,
}

/// Result of the `(T, sigma)` calibration fit.
#[derive(Debug, Clone)]
pub struct CalibrationFit {
    pub t_mv: f64,
    pub sigma_mv: f64,
    /// Parameter covariance, order `[T, sigma]`.
    pub covariance: [[f64; 2]; 2],
    /// Unweighted rms of the PER residuals.
    pub residual_rms: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub cost: f64,
    /// Accepted-iteration cost trace (monotone non-increasing).
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
}

impl CalibrationFit {
    pub fn std_devs(&self) -> [f64; 2] {
        [
            self.covariance[0][0].max(0.0).sqrt(),
            self.covariance[1][1].max(0.0).sqrt(),
        ]
    }
}

fn per_model(s_mv: f64, t_mv: f64, sigma_mv: f64, n_bits: u32) -> f64 {
    let ber = 0.5 * libm::erfc((s_mv - t_mv) / (std::f64::consts::SQRT_2 * sigma_mv));
    per_from_ber(ber, n_bits)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CalibrationFitOptions {
    /// Fit `ln PER` instead of linear PER. Useful when the data's
    /// amplitude noise is comparable to the curve width, which gives the
    /// linear-PER residuals heavy multiplicative tails. Weights are
    /// delta-method transformed (`per / per_err`).
    pub log_domain: bool,
}

/// Weighted fit of PER-vs-amplitude data with `T` and `sigma` free.
///
/// Minimizes `sum w_i (PER(S_i; T, sigma, N) - per_i)^2` with
/// `w_i = 1 / max(per_err_i, 1e-6)^2`. `sigma` is kept positive through a
/// log reparameterization.
///
/// Initialization (deterministic): `T0` is the midpoint between the highest
/// amplitude still at `per >= 1/2` and the lowest below it (median
/// amplitude when the data does not straddle 1/2); `sigma0` comes from the
/// amplitude span between the empirical 90% and 10% PER crossings, floored
/// at 1e-3 mV.
pub fn fit_calibration(samples: &[CalibrationSample], n_bits: u32) -> Result<CalibrationFit> {
    fit_calibration_with(samples, n_bits, CalibrationFitOptions::default())
}

pub fn fit_calibration_with(
    samples: &[CalibrationSample],
    n_bits: u32,
    options: CalibrationFitOptions,
) -> Result<CalibrationFit> {
    if samples.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "two free parameters need at least 2 samples, got {}",
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if !(s.amplitude_mv.is_finite() && s.per.is_finite()) || !(0.0..=1.0).contains(&s.per) {
            return Err(Error::DegenerateFit(format!(
                "sample {i}: amplitude {} / per {} out of domain",
                s.amplitude_mv, s.per
            )));
        }
        let amp_err_ok = s.amp_err_mv.is_finite() && s.amp_err_mv > 0.0;
        let per_err_ok = s.per_err.is_finite() && s.per_err >= 0.0;
        if !amp_err_ok || !per_err_ok {
            return Err(Error::DegenerateFit(format!(
                "sample {i}: errors must satisfy amp_err > 0 and per_err >= 0"
            )));
        }
    }
    if samples.iter().all(|s| s.per <= f64::EPSILON) {
        return Err(Error::DegenerateFit("every sample has PER = 0".into()));
    }
    if samples.iter().all(|s| s.per >= 1.0 - 1e-12) {
        return Err(Error::DegenerateFit("every sample has PER = 1".into()));
    }

    let mut by_amp: Vec<&CalibrationSample> = samples.iter().collect();
    by_amp.sort_by(|a, b| a.amplitude_mv.total_cmp(&b.amplitude_mv));
    let span = by_amp.last().unwrap().amplitude_mv - by_amp[0].amplitude_mv;

    let max_amp_where = |pred: &dyn Fn(f64) -> bool| {
        by_amp
            .iter()
            .filter(|s| pred(s.per))
            .map(|s| s.amplitude_mv)
            .next_back()
    };
    let min_amp_where = |pred: &dyn Fn(f64) -> bool| {
        by_amp
            .iter()
            .filter(|s| pred(s.per))
            .map(|s| s.amplitude_mv)
            .next()
    };
    let t0 = match (
        max_amp_where(&|p| p >= 0.5),
        min_amp_where(&|p| p < 0.5),
    ) {
        (Some(hi), Some(lo)) => 0.5 * (hi + lo),
        _ => by_amp[by_amp.len() / 2].amplitude_mv,
    };
    let sigma0 = match (
        max_amp_where(&|p| p >= 0.9),
        min_amp_where(&|p| p <= 0.1),
    ) {
        (Some(a90), Some(a10)) => (a10 - a90).max(span / 100.0).max(1e-3),
        _ => (span / 4.0).max(1e-3),
    };

    let fit = if options.log_domain {
        // ln-PER residuals; delta method maps the weights to per/per_err
        let floor = 1e-12;
        let sqrt_w: Vec<f64> = samples
            .iter()
            .map(|s| s.per.max(floor) / s.per_err.max(PER_ERROR_FLOOR))
            .collect();
        lm_fit(
            samples.len(),
            |p, out| {
                for (i, s) in samples.iter().enumerate() {
                    let model = per_model(s.amplitude_mv, p[0], p[1], n_bits).max(floor);
                    out[i] = sqrt_w[i] * (model.ln() - s.per.max(floor).ln());
                }
            },
            &[t0, sigma0],
            &[Scale::Linear, Scale::Log],
            &LmOptions::default(),
        )?
    } else {
        let sqrt_w: Vec<f64> = samples
            .iter()
            .map(|s| 1.0 / s.per_err.max(PER_ERROR_FLOOR))
            .collect();
        lm_fit(
            samples.len(),
            |p, out| {
                for (i, s) in samples.iter().enumerate() {
                    out[i] =
                        sqrt_w[i] * (per_model(s.amplitude_mv, p[0], p[1], n_bits) - s.per);
                }
            },
            &[t0, sigma0],
            &[Scale::Linear, Scale::Log],
            &LmOptions::default(),
        )?
    };

    let rms = (samples
        .iter()
        .map(|s| {
            let r = per_model(s.amplitude_mv, fit.params[0], fit.params[1], n_bits) - s.per;
            r * r
        })
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    Ok(CalibrationFit {
        t_mv: fit.params[0],
        sigma_mv: fit.params[1],
        covariance: [
            [fit.covariance[(0, 0)], fit.covariance[(0, 1)]],
            [fit.covariance[(1, 0)], fit.covariance[(1, 1)]],
        ],
        residual_rms: rms,
        cost: fit.cost,
        cost_trace: fit.cost_trace,
        iterations: fit.iterations,
    })
}

/// One amplitude measurement of an angular scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub phi_deg: f64,
    pub amplitude_mv: f64,
    pub amp_err_mv: f64,
}

/// The reflection term of the combined scan model: a Gaussian bump plus a
/// constant baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub height_mv: f64,
    pub center_deg: f64,
    pub width_deg: f64,
    pub baseline_mv: f64,
}

impl GaussianComponent {
    pub fn value_at(&self, phi_deg: f64) -> f64 {
        let z = (phi_deg - self.center_deg) / self.width_deg;
        self.height_mv * (-0.5 * z * z).exp() + self.baseline_mv
    }
}

/// Fixed context for a scan fit: everything about the measurement except
/// the free parameters. Only the pattern's angular model matters here; its
/// amplitude scale is replaced by the fit's free `scale`.
#[derive(Debug, Clone, Copy)]
pub struct ScanContext<'a> {
    pub lens: &'a LensSpec,
    pub pd: &'a PhotodiodeSpec,
    pub src: &'a SourceSpec,
    pub pattern: &'a RadiationPattern,
    pub scene: &'a ScenePoint,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScanFitOptions {
    /// Fit with the Gaussian reflection pinned to zero (nested model); the
    /// free parameters reduce to scale, image radius and baseline.
    pub pin_reflection_to_zero: bool,
}

/// Decomposed result of the combined direct + reflection fit.
#[derive(Debug, Clone)]
pub struct ScanFitResult {
    /// Amplitude scale `c`, mV per collected-power unit.
    pub scale: f64,
    /// Effective image radius (free parameter absorbing defocus and coma), mm.
    pub image_radius_mm: f64,
    pub gauss: GaussianComponent,
    /// Unweighted rms of the amplitude residuals, mV.
    pub residual_rms_mv: f64,
    /// Parameter covariance, order
    /// `[scale, radius, height, center, width, baseline]`. Pinned
    /// parameters carry zero rows/columns.
    pub covariance: [[f64; 6]; 6],
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    lens: LensSpec,
    pd: PhotodiodeSpec,
    /// Direct-signal amplitude per unit scale at zero misalignment:
    /// `I(alpha, beta, d) * pi D^2 / 4`.
    unit_peak_mv: f64,
}

impl ScanFitResult {
    /// Direct (reflection-free) model amplitude at a scan angle.
    pub fn direct_at(&self, phi_deg: f64) -> f64 {
        if phi_deg.abs() >= 90.0 {
            return 0.0;
        }
        let ovl = overlap_fraction_axis(phi_deg, &self.lens, &self.pd, self.image_radius_mm);
        self.scale * self.unit_peak_mv * phi_deg.to_radians().cos() * ovl
    }

    /// Reflection component (Gaussian plus baseline) at a scan angle.
    pub fn reflection_at(&self, phi_deg: f64) -> f64 {
        self.gauss.value_at(phi_deg)
    }

    /// Full fitted model; identically `direct_at + reflection_at`.
    pub fn total_at(&self, phi_deg: f64) -> f64 {
        self.direct_at(phi_deg) + self.reflection_at(phi_deg)
    }

    /// Geometric cutoff angle of the fitted direct component, degrees.
    pub fn phi2_deg(&self) -> f64 {
        transition_angles_deg(&self.lens, &self.pd, self.image_radius_mm).1
    }

    pub fn param_std_devs(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.covariance[i][i].max(0.0).sqrt();
        }
        out
    }
}

/// Evaluate only the direct term of a converged scan fit (the curve that
/// feeds PER-vs-angle extraction).
pub fn direct_component(fit: &ScanFitResult, phi_deg: f64) -> f64 {
    fit.direct_at(phi_deg)
}

pub fn fit_angular_scan(samples: &[ScanSample], ctx: &ScanContext) -> Result<ScanFitResult> {
    fit_angular_scan_with(samples, ctx, ScanFitOptions::default())
}

/// Least-squares fit of `A(phi) = S(phi; c, R) + Gauss(phi)` with weights
/// `1 / amp_err^2`.
///
/// `S` is the direct amplitude model with the scale `c` and image radius
/// `R` free (the radius absorbs defocus and coma); the Gaussian's height,
/// center, width and baseline are all free. `R` and the width stay positive
/// through log reparameterization.
///
/// The fit runs in two deterministic stages. Stage A fits the direct-only
/// model (scale, radius, baseline), starting the radius from the thin-lens
/// prediction and, because aberrations can inflate the effective radius
/// well past it, also from a small fixed ladder of multiples, keeping the
/// lowest-cost result. Stage B then frees the Gaussian, centred on the
/// largest stage-A residual on the side opposite the direct peak (height 0
/// when no such sample exists). If stage B somehow lands above the nested
/// stage-A cost it is rerun from the stage-A point with zero height, so
/// the free fit can never lose to the pinned one.
pub fn fit_angular_scan_with(
    samples: &[ScanSample],
    ctx: &ScanContext,
    options: ScanFitOptions,
) -> Result<ScanFitResult> {
    if samples.len() < 10 {
        return Err(Error::DegenerateFit(format!(
            "scan fit needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        let finite = s.phi_deg.is_finite() && s.amplitude_mv.is_finite();
        if !finite || !s.amp_err_mv.is_finite() || s.amp_err_mv <= 0.0 {
            return Err(Error::DegenerateFit(format!(
                "sample {i}: non-finite values or non-positive amp_err"
            )));
        }
    }

    let mut aimed = *ctx.scene;
    aimed.rx_mode = RxMode::Optimal;
    let angles = los_angles(&aimed)?;
    let intensity = ctx
        .pattern
        .model
        .intensity(angles.alpha_deg, angles.beta_deg, angles.range_m)?;
    let unit_peak = intensity * ctx.lens.aperture_area_mm2();
    if unit_peak <= 0.0 {
        return Err(Error::DegenerateFit(
            "pattern predicts no direct signal at the scan position".into(),
        ));
    }
    let r_thin = image_geometry(ctx.lens, ctx.src, &angles)?.radius_mm;

    let peak = samples
        .iter()
        .max_by(|a, b| a.amplitude_mv.total_cmp(&b.amplitude_mv))
        .unwrap();
    let baseline0 = samples
        .iter()
        .map(|s| s.amplitude_mv)
        .fold(f64::INFINITY, f64::min);
    let c0 = (peak.amplitude_mv - baseline0).max(baseline0.abs() * 1e-3 + 1e-9) / unit_peak;
    let phi_lo = samples.iter().map(|s| s.phi_deg).fold(f64::INFINITY, f64::min);
    let phi_hi = samples
        .iter()
        .map(|s| s.phi_deg)
        .fold(f64::NEG_INFINITY, f64::max);
    let w0 = ((phi_hi - phi_lo) / 20.0).max(0.5);

    let lens = ctx.lens.clone();
    let pd = *ctx.pd;
    let direct = |c: f64, r: f64, phi: f64| -> f64 {
        if phi.abs() >= 90.0 {
            return 0.0;
        }
        c * unit_peak * phi.to_radians().cos() * overlap_fraction_axis(phi, &lens, &pd, r)
    };
    let sqrt_w: Vec<f64> = samples.iter().map(|s| 1.0 / s.amp_err_mv).collect();

    // stage A: direct-only model, multi-start over the radius ladder
    let pinned_from = |r0: f64| {
        lm_fit(
            samples.len(),
            |p, out| {
                for (i, s) in samples.iter().enumerate() {
                    let model = direct(p[0], p[1], s.phi_deg) + p[2];
                    out[i] = sqrt_w[i] * (model - s.amplitude_mv);
                }
            },
            &[c0, r0, baseline0],
            &[Scale::Linear, Scale::Log, Scale::Linear],
            &LmOptions::default(),
        )
    };
    let mut stage_a: Option<lm::LmFit> = None;
    for factor in [1.0, 2.0, 4.0, 8.0] {
        if let Ok(fit) = pinned_from(r_thin * factor) {
            if stage_a.as_ref().is_none_or(|best| fit.cost < best.cost) {
                stage_a = Some(fit);
            }
        }
    }
    let stage_a = stage_a.ok_or_else(|| {
        Error::DegenerateFit("direct-only scan fit failed from every radius start".into())
    })?;
    let (c_a, r_a, b_a) = (stage_a.params[0], stage_a.params[1], stage_a.params[2]);
    let (_, phi2_a) = transition_angles_deg(&lens, &pd, r_a);

    // Secondary peak: the largest stage-A residual outside the fitted
    // direct cutoff. The direct component is centred on the scan origin by
    // construction, so anything left standing beyond phi2 is a secondary
    // feature; with one reflection and a centred direct peak this is the
    // secondary peak on the opposite-sign side of the scan. Falls back to
    // a zero-height Gaussian parked on the negative side when nothing
    // sticks out.
    let residual_a =
        |s: &ScanSample| s.amplitude_mv - (direct(c_a, r_a, s.phi_deg) + b_a);
    let secondary = samples
        .iter()
        .filter(|s| s.phi_deg.abs() > phi2_a)
        .max_by(|a, b| residual_a(a).total_cmp(&residual_a(b)));
    let (h0, mu0) = match secondary {
        Some(s) if residual_a(s) > 0.0 => (residual_a(s), s.phi_deg),
        _ => (0.0, -2.0 * phi2_a),
    };

    let (params, covariance, cost, cost_trace, iterations) = if options.pin_reflection_to_zero {
        let mut cov = [[0.0; 6]; 6];
        // pinned height/center/width leave zero rows; map [c, R, b]
        let idx = [0usize, 1, 5];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                cov[ia][ib] = stage_a.covariance[(a, b)];
            }
        }
        (
            vec![c_a, r_a, 0.0, mu0, w0, b_a],
            cov,
            stage_a.cost,
            stage_a.cost_trace,
            stage_a.iterations,
        )
    } else {
        let free_from = |theta0: &[f64]| {
            lm_fit(
                samples.len(),
                |p, out| {
                    for (i, s) in samples.iter().enumerate() {
                        let z = (s.phi_deg - p[3]) / p[4];
                        let model =
                            direct(p[0], p[1], s.phi_deg) + p[2] * (-0.5 * z * z).exp() + p[5];
                        out[i] = sqrt_w[i] * (model - s.amplitude_mv);
                    }
                },
                theta0,
                &[
                    Scale::Linear,
                    Scale::Log,
                    Scale::Linear,
                    Scale::Linear,
                    Scale::Log,
                    Scale::Linear,
                ],
                &LmOptions::default(),
            )
        };
        let mut fit = free_from(&[c_a, r_a, h0, mu0, w0, b_a])?;
        if fit.cost > stage_a.cost {
            // nested-model guarantee: restart exactly at the pinned optimum
            let fallback = free_from(&[c_a, r_a, 0.0, mu0, w0, b_a])?;
            if fallback.cost < fit.cost {
                fit = fallback;
            }
        }
        let mut cov = [[0.0; 6]; 6];
        for (a, row) in cov.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = fit.covariance[(a, b)];
            }
        }
        (
            fit.params,
            cov,
            fit.cost,
            fit.cost_trace,
            fit.iterations,
        )
    };

    let result = ScanFitResult {
        scale: params[0],
        image_radius_mm: params[1],
        gauss: GaussianComponent {
            height_mv: params[2],
            center_deg: params[3],
            width_deg: params[4],
            baseline_mv: params[5],
        },
        residual_rms_mv: 0.0,
        covariance,
        cost,
        cost_trace,
        iterations,
        lens,
        pd,
        unit_peak_mv: unit_peak,
    };
    let rms = (samples
        .iter()
        .map(|s| {
            let r = result.total_at(s.phi_deg) - s.amplitude_mv;
            r * r
        })
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    Ok(ScanFitResult {
        residual_rms_mv: rms,
        ..result
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::LensKind;
    use crate::radiometry::PatternModel;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_curve(
        t: f64,
        sigma: f64,
        n_bits: u32,
        per_err: f64,
    ) -> Vec<CalibrationSample> {
        let ks = [-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0];
        ks.iter()
            .map(|k| {
                let s = t + k * sigma;
                CalibrationSample {
                    amplitude_mv: s,
                    amp_err_mv: 0.5,
                    per: per_model(s, t, sigma, n_bits),
                    per_err,
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_calibration_roundtrip() {
        let samples = sample_curve(4.0, 1.2, 48, 0.01);
        let fit = fit_calibration(&samples, 48).unwrap();
        assert!((fit.t_mv - 4.0).abs() < 1e-6, "T = {}", fit.t_mv);
        assert!((fit.sigma_mv - 1.2).abs() < 1e-6, "sigma = {}", fit.sigma_mv);
        assert!(fit.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn calibration_rejects_degenerate_data() {
        let one = vec![CalibrationSample {
            amplitude_mv: 5.0,
            amp_err_mv: 0.5,
            per: 0.3,
            per_err: 0.01,
        }];
        assert!(matches!(
            fit_calibration(&one, 48),
            Err(Error::DegenerateFit(_))
        ));
        let zeros: Vec<CalibrationSample> = (0..5)
            .map(|i| CalibrationSample {
                amplitude_mv: 10.0 + i as f64,
                amp_err_mv: 0.5,
                per: 0.0,
                per_err: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_calibration(&zeros, 48),
            Err(Error::DegenerateFit(_))
        ));
        let ones: Vec<CalibrationSample> = (0..5)
            .map(|i| CalibrationSample {
                amplitude_mv: i as f64,
                amp_err_mv: 0.5,
                per: 1.0,
                per_err: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_calibration(&ones, 48),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn calibration_invariant_under_reordering_and_weight_scaling() {
        let mut samples = sample_curve(3.0, 0.8, 48, 0.01);
        // mild noise so the optimum is not trivially exact
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in &mut samples {
            s.per = (s.per + 0.005 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0);
        }
        let base = fit_calibration(&samples, 48).unwrap();
        let mut reversed = samples.clone();
        reversed.reverse();
        let again = fit_calibration(&reversed, 48).unwrap();
        assert!((base.t_mv - again.t_mv).abs() < 1e-10);
        assert!((base.sigma_mv - again.sigma_mv).abs() < 1e-10);
        // jointly scaling every weight leaves the optimum, scales covariance
        let scaled: Vec<CalibrationSample> = samples
            .iter()
            .map(|s| CalibrationSample {
                per_err: s.per_err * 3.0,
                ..*s
            })
            .collect();
        let wfit = fit_calibration(&scaled, 48).unwrap();
        assert!((base.t_mv - wfit.t_mv).abs() < 1e-7);
        assert!((base.sigma_mv - wfit.sigma_mv).abs() < 1e-7);
        let ratio = wfit.covariance[0][0] / base.covariance[0][0];
        assert!((ratio - 9.0).abs() < 0.1, "covariance ratio {ratio}");
    }

    /// Generate samples with 0.5 mV Gaussian amplitude noise propagated
    /// into PER space (the regime the linearized weights describe: curve
    /// width well above the noise).
    fn noisy_curve(t: f64, sigma: f64, n: u32, amp_noise: f64, rng: &mut ChaCha8Rng) -> Vec<CalibrationSample> {
        [1.3, 1.6, 2.0, 2.4, 2.8, 3.2, 3.8, 4.5, 5.2, 6.0]
            .iter()
            .map(|k| {
                let s = t + k * sigma;
                let h = amp_noise;
                let dper =
                    (per_model(s + h, t, sigma, n) - per_model(s - h, t, sigma, n)) / (2.0 * h);
                let per_sd = dper.abs() * amp_noise;
                let (u1, u2) = (rng.random::<f64>().max(1e-12), rng.random::<f64>());
                let gauss =
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                CalibrationSample {
                    amplitude_mv: s,
                    amp_err_mv: amp_noise,
                    per: (per_model(s, t, sigma, n) + per_sd * gauss).clamp(0.0, 1.0),
                    per_err: per_sd.max(PER_ERROR_FLOOR),
                }
            })
            .collect()
    }

    #[test]
    fn noisy_calibration_recovers_within_posterior() {
        let (t, sigma, n) = (20.0, 25.0, 48u32);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = 0;
        let trials = 60;
        for _ in 0..trials {
            let samples = noisy_curve(t, sigma, n, 0.5, &mut rng);
            let fit = match fit_calibration(&samples, n) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let sd = fit.std_devs();
            if (fit.t_mv - t).abs() <= 3.0 * sd[0] && (fit.sigma_mv - sigma).abs() <= 3.0 * sd[1] {
                hits += 1;
            }
        }
        assert!(
            hits * 100 >= trials * 95,
            "only {hits}/{trials} trials within 3 posterior sd"
        );
    }

    #[test]
    fn log_domain_fit_recovers_noiseless_truth() {
        let samples = sample_curve(4.0, 1.2, 48, 0.01);
        let fit = fit_calibration_with(
            &samples,
            48,
            CalibrationFitOptions { log_domain: true },
        )
        .unwrap();
        assert!((fit.t_mv - 4.0).abs() < 1e-5, "T = {}", fit.t_mv);
        assert!((fit.sigma_mv - 1.2).abs() < 1e-5, "sigma = {}", fit.sigma_mv);
    }

    // ---- angular scan fits ----

    struct Rig {
        lens: LensSpec,
        pd: PhotodiodeSpec,
        src: SourceSpec,
        pattern: RadiationPattern,
        scene: ScenePoint,
    }

    fn rig() -> Rig {
        Rig {
            lens: LensSpec::new("AS2", 50.8, 32.0, LensKind::Aspheric),
            pd: PhotodiodeSpec::new(3.6),
            src: SourceSpec::new(300.0),
            pattern: RadiationPattern::new(PatternModel::GeneralizedLambertian {
                i0: 1.0,
                tilt_deg: 4.0,
                m_v: 20.0,
                m_h: 8.0,
            }),
            scene: ScenePoint::new(3.0, 1.05, 6.0, 0.0, RxMode::Optimal),
        }
    }

    fn ctx(r: &Rig) -> ScanContext<'_> {
        ScanContext {
            lens: &r.lens,
            pd: &r.pd,
            src: &r.src,
            pattern: &r.pattern,
            scene: &r.scene,
        }
    }

    /// Ground truth used across the scan-fit tests.
    const TRUTH: (f64, f64, f64, f64, f64, f64) = (20.0, 1.0, 3.0, -6.0, 2.0, 0.5);

    fn synth_scan(r: &Rig, noise: f64, rng: Option<&mut ChaCha8Rng>) -> Vec<ScanSample> {
        let (c, rad, h, mu, w, b) = TRUTH;
        let mut aimed = r.scene;
        aimed.rx_mode = RxMode::Optimal;
        let angles = los_angles(&aimed).unwrap();
        let unit_peak = r
            .pattern
            .model
            .intensity(angles.alpha_deg, angles.beta_deg, angles.range_m)
            .unwrap()
            * r.lens.aperture_area_mm2();
        let mut rng_local = rng;
        (0..61)
            .map(|i| {
                let phi = -15.0 + 0.5 * i as f64;
                let direct =
                    c * unit_peak * phi.to_radians().cos()
                        * overlap_fraction_axis(phi, &r.lens, &r.pd, rad);
                let z = (phi - mu) / w;
                let mut amp = direct + h * (-0.5 * z * z).exp() + b;
                if let Some(rng) = rng_local.as_deref_mut() {
                    let (u1, u2) = (rng.random::<f64>().max(1e-12), rng.random::<f64>());
                    amp += noise
                        * (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                }
                ScanSample {
                    phi_deg: phi,
                    amplitude_mv: amp,
                    amp_err_mv: noise.max(0.1),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_scan_roundtrip() {
        let r = rig();
        let samples = synth_scan(&r, 0.0, None);
        let fit = fit_angular_scan(&samples, &ctx(&r)).unwrap();
        let (c, rad, h, mu, w, b) = TRUTH;
        assert!((fit.scale - c).abs() < 1e-6 * c, "c = {}", fit.scale);
        assert!(
            (fit.image_radius_mm - rad).abs() < 1e-6 * rad,
            "R = {}",
            fit.image_radius_mm
        );
        assert!((fit.gauss.height_mv - h).abs() < 1e-6 * h);
        assert!((fit.gauss.center_deg - mu).abs() < 1e-6 * mu.abs());
        assert!((fit.gauss.width_deg - w).abs() < 1e-6 * w);
        assert!((fit.gauss.baseline_mv - b).abs() < 1e-6);
        assert!(fit.residual_rms_mv < 1e-7);
        // reflection on the negative side, direct peak at zero
        assert!(fit.gauss.center_deg < 0.0);
        // decomposition identity
        for s in &samples {
            let total = fit.direct_at(s.phi_deg) + fit.reflection_at(s.phi_deg);
            assert!((total - fit.total_at(s.phi_deg)).abs() < 1e-12);
        }
        // direct-only curve sits below the total at the reflection centre
        assert!(fit.direct_at(fit.gauss.center_deg) < fit.total_at(fit.gauss.center_deg));
        // hard zero beyond the fitted cutoff
        assert_eq!(fit.direct_at(fit.phi2_deg() + 0.1), 0.0);
    }

    #[test]
    fn scan_fit_invariant_under_reordering() {
        let r = rig();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = synth_scan(&r, 0.3, Some(&mut rng));
        let base = fit_angular_scan(&samples, &ctx(&r)).unwrap();
        let mut shuffled = samples.clone();
        shuffled.reverse();
        shuffled.swap(5, 40);
        let again = fit_angular_scan(&shuffled, &ctx(&r)).unwrap();
        // the objective is order-independent; only summation order noise
        // may move the converged iterate
        assert!((base.scale - again.scale).abs() < 1e-7);
        assert!((base.image_radius_mm - again.image_radius_mm).abs() < 1e-7);
    }

    #[test]
    fn pinned_reflection_never_beats_free_fit() {
        let r = rig();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = synth_scan(&r, 0.3, Some(&mut rng));
        let free = fit_angular_scan(&samples, &ctx(&r)).unwrap();
        let pinned = fit_angular_scan_with(
            &samples,
            &ctx(&r),
            ScanFitOptions {
                pin_reflection_to_zero: true,
            },
        )
        .unwrap();
        assert!(pinned.gauss.height_mv == 0.0);
        assert!(free.cost <= pinned.cost * (1.0 + 1e-9));
    }

    #[test]
    fn reflection_free_scan_yields_tiny_gaussian() {
        let r = rig();
        // truth with no reflection at all
        let mut aimed = r.scene;
        aimed.rx_mode = RxMode::Optimal;
        let angles = los_angles(&aimed).unwrap();
        let unit_peak = r
            .pattern
            .model
            .intensity(angles.alpha_deg, angles.beta_deg, angles.range_m)
            .unwrap()
            * r.lens.aperture_area_mm2();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let samples: Vec<ScanSample> = (0..61)
            .map(|i| {
                let phi = -15.0 + 0.5 * i as f64;
                let direct = 20.0
                    * unit_peak
                    * phi.to_radians().cos()
                    * overlap_fraction_axis(phi, &r.lens, &r.pd, 1.0);
                let (u1, u2) = (rng.random::<f64>().max(1e-12), rng.random::<f64>());
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                ScanSample {
                    phi_deg: phi,
                    amplitude_mv: direct + 0.05 * g,
                    amp_err_mv: 0.05,
                }
            })
            .collect();
        let free = fit_angular_scan(&samples, &ctx(&r)).unwrap();
        assert!(
            free.gauss.height_mv.abs() < 0.2,
            "spurious reflection height {}",
            free.gauss.height_mv
        );
        let pinned = fit_angular_scan_with(
            &samples,
            &ctx(&r),
            ScanFitOptions {
                pin_reflection_to_zero: true,
            },
        )
        .unwrap();
        let sd = pinned.param_std_devs();
        assert!((free.scale - pinned.scale).abs() <= sd[0].max(1e-6));
        assert!((free.image_radius_mm - pinned.image_radius_mm).abs() <= sd[1].max(1e-6));
    }

    #[test]
    fn scan_fit_requires_enough_samples() {
        let r = rig();
        let samples = vec![
            ScanSample {
                phi_deg: 0.0,
                amplitude_mv: 1.0,
                amp_err_mv: 0.1,
            };
            5
        ];
        assert!(matches!(
            fit_angular_scan(&samples, &ctx(&r)),
            Err(Error::DegenerateFit(_))
        ));
    }
}

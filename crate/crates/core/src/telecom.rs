//! Amplitude to bit/packet error probability, and the effective field of
//! view (EFOV) solver.
//!
//! For the OOK-NRZ link the bit error probability follows the Gaussian tail
//! `p = erfc((S - T) / (sqrt(2) sigma)) / 2`, with `T` the comparator
//! threshold and `sigma` the background noise deviation. Packets of `N`
//! independent bits then fail with `PER = 1 - (1 - p)^N`.

use serde::{Deserialize, Serialize};

use crate::geometry::{los_angles, AngleSet, RxMode, ScenePoint};
use crate::optics::{
    image_geometry, received_amplitude, transition_angles_deg, LensSpec, PhotodiodeSpec,
    SourceSpec,
};
use crate::radiometry::RadiationPattern;
use crate::Result;

/// Angular resolution of the EFOV bisection, degrees. Kept below the 0.5
/// degree resolution of the rotation platform the calibration data comes
/// from.
pub const EFOV_TOLERANCE_DEG: f64 = 1e-3;

/// Amplitude-to-PER calibration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Comparator threshold, mV.
    pub t_mv: f64,
    /// Background noise standard deviation, mV. Must be positive.
    pub sigma_mv: f64,
    /// Packet length in bits.
    pub n_bits: u32,
    /// Symbol rate this calibration was measured at, baud.
    pub baud: u32,
}

/// Bit and packet error probabilities at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerResult {
    pub per: f64,
    pub ber: f64,
}

/// Bit error probability for a received amplitude.
pub fn bit_error_prob(s_mv: f64, curve: &CalibrationCurve) -> f64 {
    debug_assert!(curve.sigma_mv > 0.0);
    0.5 * libm::erfc((s_mv - curve.t_mv) / (std::f64::consts::SQRT_2 * curve.sigma_mv))
}

/// `PER = 1 - (1 - p_bit)^N`, evaluated in log space so tiny and
/// near-saturated probabilities keep full precision.
pub fn packet_error_rate(s_mv: f64, curve: &CalibrationCurve) -> PerResult {
    let ber = bit_error_prob(s_mv, curve);
    PerResult {
        per: per_from_ber(ber, curve.n_bits),
        ber,
    }
}

/// Packet error probability of `n_bits` independent bits.
pub fn per_from_ber(ber: f64, n_bits: u32) -> f64 {
    -(f64::from(n_bits) * (-ber).ln_1p()).exp_m1()
}

/// Smallest amplitude whose PER does not exceed `per_target`.
///
/// PER is strictly decreasing in amplitude, so the inverse is unique;
/// bisection runs down to floating-point resolution. Targets are expected
/// in `(0, 1)` away from the f64 saturation fringes.
pub fn required_amplitude(per_target: f64, curve: &CalibrationCurve) -> f64 {
    debug_assert!(per_target > 0.0 && per_target < 1.0);
    let mut lo = curve.t_mv - 14.0 * curve.sigma_mv; // PER = 1 in f64
    let mut hi = curve.t_mv + 42.0 * curve.sigma_mv; // PER = 0 in f64
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if packet_error_rate(mid, curve).per > per_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Scan axis for field-of-view solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Horizontal,
    Vertical,
}

impl ScanAxis {
    pub fn label(self) -> &'static str {
        match self {
            ScanAxis::Horizontal => "horizontal",
            ScanAxis::Vertical => "vertical",
        }
    }
}

/// Outcome of an EFOV solve.
///
/// `NoLink` marks grid points where the model predicts no signal at all
/// even with the receiver aimed straight at the lamp; it is distinct from a
/// zero field of view, where there is signal on-axis but the PER threshold
/// is already missed at zero misalignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Efov {
    NoLink,
    /// Largest single-sided misalignment angle that keeps PER at or below
    /// the threshold, degrees.
    Link { half_deg: f64 },
}

impl Efov {
    /// Single-sided (half) angle, if linked.
    pub fn half_deg(&self) -> Option<f64> {
        match self {
            Efov::NoLink => None,
            Efov::Link { half_deg } => Some(*half_deg),
        }
    }

    /// Full angular width of the usable cone (both wings of the symmetric
    /// scan), degrees. This is what the EFOV tables report.
    pub fn width_deg(&self) -> Option<f64> {
        self.half_deg().map(|h| 2.0 * h)
    }
}

/// Model amplitude at scan angle `phi` on one axis, with the receiver
/// otherwise aimed at the lamp.
pub fn scan_amplitude(
    phi_deg: f64,
    axis: ScanAxis,
    lens: &LensSpec,
    pd: &PhotodiodeSpec,
    src: &SourceSpec,
    pattern: &RadiationPattern,
    scene: &ScenePoint,
) -> Result<f64> {
    let base = aimed_angles(scene)?;
    received_amplitude(&with_scan_angle(&base, axis, phi_deg), lens, pd, src, pattern)
}

fn aimed_angles(scene: &ScenePoint) -> Result<AngleSet> {
    let mut aimed = *scene;
    aimed.rx_mode = RxMode::Optimal;
    los_angles(&aimed)
}

fn with_scan_angle(base: &AngleSet, axis: ScanAxis, phi_deg: f64) -> AngleSet {
    let mut a = *base;
    match axis {
        ScanAxis::Horizontal => a.phi_h_deg = phi_deg,
        ScanAxis::Vertical => a.phi_v_deg = phi_deg,
    }
    a
}

/// Effective field of view at a PER threshold (default 1e-3 in the tables).
///
/// Starting from the receiver aimed at the lamp, finds the largest `|phi|`
/// on the chosen axis for which `PER(S(phi)) <= threshold` holds everywhere
/// inside. The amplitude is non-increasing in `|phi|` and hard-zero beyond
/// the geometric cutoff `phi2`, so bracketing `[0, phi2]` plus bisection to
/// [`EFOV_TOLERANCE_DEG`] finds the crossing.
#[allow(clippy::too_many_arguments)]
pub fn efov(
    axis: ScanAxis,
    lens: &LensSpec,
    pd: &PhotodiodeSpec,
    src: &SourceSpec,
    pattern: &RadiationPattern,
    curve: &CalibrationCurve,
    scene: &ScenePoint,
    threshold: f64,
) -> Result<Efov> {
    let base = aimed_angles(scene)?;
    let img = image_geometry(lens, src, &base)?;
    let (_, phi2) = transition_angles_deg(lens, pd, img.radius_mm);
    let s_at = |phi: f64| -> Result<f64> {
        received_amplitude(&with_scan_angle(&base, axis, phi), lens, pd, src, pattern)
    };
    let s0 = s_at(0.0)?;
    if s0 <= 0.0 {
        return Ok(Efov::NoLink);
    }
    let s_req = required_amplitude(threshold, curve);
    if s_req <= 0.0 {
        // Degenerate threshold satisfied by zero signal; the geometric
        // cutoff is the only remaining bound.
        return Ok(Efov::Link { half_deg: phi2 });
    }
    if s0 < s_req {
        return Ok(Efov::Link { half_deg: 0.0 });
    }
    let mut lo = 0.0;
    let mut hi = phi2; // S(phi2) = 0 < s_req
    while hi - lo > EFOV_TOLERANCE_DEG {
        let mid = 0.5 * (lo + hi);
        if s_at(mid)? >= s_req {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Efov::Link { half_deg: lo })
}

/// EFOV of an arbitrary symmetric amplitude profile `s(phi)` (used for the
/// direct component recovered by the scan fitter). Same contract as
/// [`efov`], with the geometric cutoff supplied by the caller.
pub fn efov_of_profile(
    s: impl Fn(f64) -> f64,
    phi2_deg: f64,
    curve: &CalibrationCurve,
    threshold: f64,
) -> Efov {
    let s0 = s(0.0);
    if s0 <= 0.0 {
        return Efov::NoLink;
    }
    let s_req = required_amplitude(threshold, curve);
    if s_req <= 0.0 {
        return Efov::Link { half_deg: phi2_deg };
    }
    if s0 < s_req {
        return Efov::Link { half_deg: 0.0 };
    }
    let mut lo = 0.0;
    let mut hi = phi2_deg;
    while hi - lo > EFOV_TOLERANCE_DEG {
        let mid = 0.5 * (lo + hi);
        if s(mid) >= s_req {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Efov::Link { half_deg: lo }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::LensKind;
    use crate::radiometry::PatternModel;

    fn curve(t: f64, sigma: f64, n: u32) -> CalibrationCurve {
        CalibrationCurve {
            t_mv: t,
            sigma_mv: sigma,
            n_bits: n,
            baud: 115_200,
        }
    }

    #[test]
    fn ber_at_threshold_is_half() {
        let c = curve(4.0, 1.2, 48);
        assert_eq!(bit_error_prob(4.0, &c), 0.5);
        let r = packet_error_rate(4.0, &c);
        // 1 - 2^-48
        assert!(((1.0 - r.per) - 2f64.powi(-48)).abs() < 1e-9 * 2f64.powi(-48));
    }

    #[test]
    fn ber_three_sigma_above_threshold() {
        // Q(3), frozen from a high-precision erfc evaluation
        let c = curve(4.0, 1.2, 48);
        let ber = bit_error_prob(4.0 + 3.0 * 1.2, &c);
        assert!((ber - 1.3498980316300945e-3).abs() < 1e-15);
        let per = packet_error_rate(4.0 + 3.0 * 1.2, &c).per;
        assert!((per - 6.2781542563415308e-2).abs() < 1e-12);
    }

    #[test]
    fn limits_and_single_bit_packets() {
        let c = curve(4.0, 1.2, 48);
        assert_eq!(packet_error_rate(1e9, &c).per, 0.0);
        assert_eq!(packet_error_rate(-1e9, &c).per, 1.0);
        let c1 = curve(4.0, 1.2, 1);
        let r = packet_error_rate(6.0, &c1);
        assert_eq!(r.per, r.ber);
    }

    #[test]
    fn per_monotonic_in_amplitude_and_bits() {
        // from the threshold up: below T - 0.1 sigma the packet error
        // probability saturates to 1.0 in f64 and strictness is meaningless
        let c = curve(3.0, 0.7, 48);
        let mut prev = f64::INFINITY;
        for i in 0..150 {
            let s = c.t_mv + 6.0 * c.sigma_mv * (i as f64) / 149.0;
            let per = packet_error_rate(s, &c).per;
            assert!(per < prev, "per({s}) = {per} not below {prev}");
            prev = per;
        }
        let mut prev = 0.0;
        for n in [1u32, 2, 8, 48, 60, 480] {
            let per = packet_error_rate(5.0, &curve(3.0, 0.7, n)).per;
            assert!(per > prev);
            prev = per;
        }
    }

    #[test]
    fn required_amplitude_matches_gaussian_quantile() {
        // per = 1e-3 over 48 bits: p_bit = 2.08435e-5, z = 4.0979247...
        let c = curve(2.0, 1.0, 48);
        let s = required_amplitude(1e-3, &c);
        let z = (s - c.t_mv) / c.sigma_mv;
        assert!((z - 4.0979247234874984).abs() < 1e-9);
        assert!((z - 4.10).abs() < 0.01);
        // inverse of the threshold example: per(T) target returns T. Near
        // PER = 1 the f64 packet error probability is a staircase roughly
        // 1e-3 sigma wide, which bounds how sharply the inverse can land.
        let per_at_t = packet_error_rate(c.t_mv, &c).per;
        let back = required_amplitude(per_at_t, &c);
        assert!((back - c.t_mv).abs() < 2e-3 * c.sigma_mv);
    }

    #[test]
    fn required_amplitude_round_trip() {
        let c = curve(3.5, 0.8, 48);
        // away from the PER = 1 saturation fringe the inverse is exact to
        // bisection resolution
        for k in [0.5, 1.0, 2.5, 4.0, 5.5] {
            let s = c.t_mv + k * c.sigma_mv;
            let per = packet_error_rate(s, &c).per;
            let back = required_amplitude(per, &c);
            assert!((back - s).abs() < 1e-9, "k={k}: {s} vs {back}");
            let per_back = packet_error_rate(back, &c).per;
            assert!((per_back - per).abs() <= 1e-12 * per);
        }
        // at the threshold the PER staircase limits resolution
        let per = packet_error_rate(c.t_mv, &c).per;
        let back = required_amplitude(per, &c);
        assert!((back - c.t_mv).abs() < 2e-3 * c.sigma_mv);
    }

    fn test_rig() -> (LensSpec, PhotodiodeSpec, SourceSpec, ScenePoint) {
        (
            LensSpec::new("AS2", 50.8, 32.0, LensKind::Aspheric),
            PhotodiodeSpec::new(3.6),
            SourceSpec::new(300.0),
            ScenePoint::new(3.0, 1.05, 6.0, 0.0, RxMode::Optimal),
        )
    }

    fn pattern(scale: f64) -> RadiationPattern {
        RadiationPattern::new(PatternModel::GeneralizedLambertian {
            i0: 1.0,
            tilt_deg: 0.0,
            m_v: 0.0,
            m_h: 0.0,
        })
        .with_scale(scale)
    }

    #[test]
    fn efov_zero_when_on_axis_fails() {
        let (lens, pd, src, scene) = test_rig();
        // calibration demands far more signal than the model provides
        let c = curve(1e7, 1.0, 48);
        let p = pattern(1.0);
        let e = efov(ScanAxis::Vertical, &lens, &pd, &src, &p, &c, &scene, 1e-3).unwrap();
        assert_eq!(e, Efov::Link { half_deg: 0.0 });
    }

    #[test]
    fn efov_bracketed_by_transition_angles() {
        let (lens, pd, src, scene) = test_rig();
        let p = pattern(1e4); // ample signal
        let c = curve(2.0, 1.0, 48);
        let angles = los_angles(&scene).unwrap();
        let img = image_geometry(&lens, &src, &angles).unwrap();
        let (p1, p2) = transition_angles_deg(&lens, &pd, img.radius_mm);
        let e = efov(ScanAxis::Vertical, &lens, &pd, &src, &p, &c, &scene, 1e-3).unwrap();
        let half = e.half_deg().unwrap();
        assert!(half >= p1, "half {half} < phi1 {p1}");
        assert!(half <= p2, "half {half} > phi2 {p2}");
        assert!((e.width_deg().unwrap() - 2.0 * half).abs() < 1e-12);
        // horizontal and vertical scans agree for a front position
        let eh = efov(ScanAxis::Horizontal, &lens, &pd, &src, &p, &c, &scene, 1e-3).unwrap();
        assert!((eh.half_deg().unwrap() - half).abs() < 2.0 * EFOV_TOLERANCE_DEG);
    }

    #[test]
    fn efov_no_link_marker() {
        let (lens, pd, src, scene) = test_rig();
        // lobe aimed backwards: zero intensity toward the receiver
        let p = RadiationPattern::new(PatternModel::GeneralizedLambertian {
            i0: 1.0,
            tilt_deg: 135.0,
            m_v: 2.0,
            m_h: 2.0,
        })
        .with_scale(1.0);
        let c = curve(2.0, 1.0, 48);
        let e = efov(ScanAxis::Vertical, &lens, &pd, &src, &p, &c, &scene, 1e-3).unwrap();
        assert_eq!(e, Efov::NoLink);
        assert_eq!(e.width_deg(), None);
    }

    #[test]
    fn efov_shrinks_with_tighter_threshold() {
        let (lens, pd, src, scene) = test_rig();
        let p = pattern(30.0);
        let c = curve(2.0, 1.0, 48);
        let mut prev = f64::INFINITY;
        for threshold in [1e-1, 1e-3, 1e-6, 1e-9] {
            let e = efov(ScanAxis::Vertical, &lens, &pd, &src, &p, &c, &scene, threshold).unwrap();
            let half = e.half_deg().unwrap();
            assert!(half <= prev + EFOV_TOLERANCE_DEG);
            prev = half;
        }
    }
}

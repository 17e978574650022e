"""Python bindings for the vlclink traffic-light VLC link simulator.

The heavy lifting lives in the compiled extension module ``_vlclink``
(built from ``crates/python``); this package just re-exports it. See
``python/run_smoke.sh`` for the build-and-place recipe.
"""

from ._vlclink import (
    AngleSet,
    CalibrationCurve,
    LensSpec,
    PhotodiodeSpec,
    RadiationPattern,
    ScanFit,
    ScenePoint,
    SourceSpec,
    __version__,
    afov_deg,
    bit_error_prob,
    calibration_presets,
    efov_table,
    efov_width_deg,
    fit_angular_scan,
    fit_calibration,
    image_geometry,
    lens_catalog,
    los_angles,
    overlap_fraction_2d,
    overlap_fraction_axis,
    packet_error_rate,
    received_amplitude,
    required_amplitude,
    sweep_table,
    transition_angles_deg,
)

__all__ = [
    "AngleSet",
    "CalibrationCurve",
    "LensSpec",
    "PhotodiodeSpec",
    "RadiationPattern",
    "ScanFit",
    "ScenePoint",
    "SourceSpec",
    "__version__",
    "afov_deg",
    "bit_error_prob",
    "calibration_presets",
    "efov_table",
    "efov_width_deg",
    "fit_angular_scan",
    "fit_calibration",
    "image_geometry",
    "lens_catalog",
    "los_angles",
    "overlap_fraction_2d",
    "overlap_fraction_axis",
    "packet_error_rate",
    "received_amplitude",
    "required_amplitude",
    "sweep_table",
    "transition_angles_deg",
]

//! Adaptive-optics error budget: residual phase and OPD, effective
//! closed-loop Fried length, and Strehl/FOV as functions of residual OPD.
//!
//! Greenwood inputs are always referenced to 500 nm. Functions that take a
//! wavelength rescale them internally (f_G ∝ λ^(-6/5), f_TG ∝ λ^(-1)).

use std::f64::consts::FRAC_PI_2;

use crate::error::{ensure_positive, Error, Result};
use crate::optics::dl_fov;
use crate::turbulence::{wavenumber, SiteModel, REFERENCE_WAVELENGTH_NM};

/// Closed-loop bandwidths of the higher-order loop for the named presets.
pub const PRESET_BANDWIDTHS: [f64; 3] = [130.0, 200.0, 500.0];
pub const DEFAULT_TRACKING_BANDWIDTH: f64 = 60.0;

/// Servo bandwidths, Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoParams {
    pub tracking_bandwidth: f64,
    pub bandwidth: f64,
}

impl AoParams {
    pub fn new(tracking_bandwidth: f64, bandwidth: f64) -> Result<Self> {
        let p = Self {
            tracking_bandwidth,
            bandwidth,
        };
        p.validate()?;
        Ok(p)
    }

    /// 60-Hz tracking loop with the given higher-order bandwidth.
    pub fn preset(bandwidth: f64) -> Self {
        Self {
            tracking_bandwidth: DEFAULT_TRACKING_BANDWIDTH,
            bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("tracking bandwidth", self.tracking_bandwidth)?;
        ensure_positive("bandwidth", self.bandwidth)
    }
}

/// A residual wavefront error, in phase at `wavelength_nm` and as OPD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualError {
    /// rad²
    pub phase_variance: f64,
    /// m²
    pub opd_variance: f64,
    pub wavelength_nm: f64,
}

impl ResidualError {
    pub fn from_phase(phase_variance: f64, wavelength_nm: f64) -> Self {
        let k = wavenumber(wavelength_nm);
        Self {
            phase_variance,
            opd_variance: phase_variance / (k * k),
            wavelength_nm,
        }
    }

    pub fn from_opd_rms(opd_rms: f64, wavelength_nm: f64) -> Self {
        let k = wavenumber(wavelength_nm);
        Self {
            phase_variance: opd_rms * opd_rms * k * k,
            opd_variance: opd_rms * opd_rms,
            wavelength_nm,
        }
    }

    pub fn opd_rms(&self) -> f64 {
        self.opd_variance.sqrt()
    }
}

/// Uncorrected residual phase variance `1.03(D/r)^(5/3)`, rad².
pub fn rpe_open_loop(receiver_diameter: f64, r_lambda: f64) -> f64 {
    1.03 * (receiver_diameter / r_lambda).powf(5.0 / 3.0)
}

/// Two-term closed-loop residual phase variance, rad², evaluated at the
/// wavelength the frequencies refer to.
pub fn rpe_closed_loop(ao: &AoParams, tracking_greenwood: f64, greenwood: f64) -> f64 {
    (FRAC_PI_2 * tracking_greenwood / ao.tracking_bandwidth).powi(2)
        + (greenwood / ao.bandwidth).powf(5.0 / 3.0)
}

/// rms OPD (m) of an uncorrected aperture with 500-nm Fried length `r0`.
pub fn opd_rms_open_loop(r0: f64, receiver_diameter: f64) -> f64 {
    1.03f64.sqrt() / wavenumber(REFERENCE_WAVELENGTH_NM) * (receiver_diameter / r0).powf(5.0 / 6.0)
}

/// rms closed-loop OPD (m) from the site's altitude moments.
pub fn opd_rms_closed_loop(site: &SiteModel, ao: &AoParams, receiver_diameter: f64) -> Result<f64> {
    ao.validate()?;
    ensure_positive("receiver diameter", receiver_diameter)?;
    let m = site.moments()?;
    let var = 0.1022 * ao.bandwidth.powf(-5.0 / 3.0) * m.cn2_wind_five_thirds
        + 2.775e-3
            * FRAC_PI_2.powi(2)
            * ao.tracking_bandwidth.powi(-2)
            * receiver_diameter.powf(-1.0 / 3.0)
            * m.cn2_wind_squared;
    Ok(var.sqrt())
}

fn wavelength_ratio(wavelength_nm: f64) -> f64 {
    REFERENCE_WAVELENGTH_NM / wavelength_nm
}

/// Effective 500-nm Fried length whose open-loop residual equals the
/// closed-loop residual. `tracking_greenwood`, `greenwood` are 500-nm values.
pub fn effective_r0_closed_loop(
    ao: &AoParams,
    tracking_greenwood: f64,
    greenwood: f64,
    receiver_diameter: f64,
    wavelength_nm: f64,
) -> f64 {
    let q = wavelength_ratio(wavelength_nm);
    let fg = greenwood * q.powf(1.2);
    let ftg = tracking_greenwood * q;
    1.03f64.powf(0.6) * q.powf(1.2) * receiver_diameter * rpe_closed_loop(ao, ftg, fg).powf(-0.6)
}

/// Higher-order bandwidth at which closed-loop correction gives no gain over
/// the open-loop residual of `r0`. Greenwood inputs are 500-nm values.
pub fn effective_fc_open_loop(
    r0: f64,
    receiver_diameter: f64,
    wavelength_nm: f64,
    tracking_greenwood: f64,
    greenwood: f64,
    tracking_bandwidth: f64,
) -> Result<f64> {
    let q = wavelength_ratio(wavelength_nm);
    let fg = greenwood * q.powf(1.2);
    let ftg = tracking_greenwood * q;
    let bracket = rpe_open_loop(receiver_diameter, r0) * q * q
        - (FRAC_PI_2 * ftg / tracking_bandwidth).powi(2);
    if !(bracket > 0.0) {
        return Err(Error::Domain(format!(
            "tracking residual alone exceeds the open-loop residual (bracket {bracket:.3e})"
        )));
    }
    Ok(fg * bracket.powf(-0.6))
}

/// Strehl for an rms residual OPD (m) at `wavelength_nm`.
pub fn strehl_from_opd(opd_rms: f64, wavelength_nm: f64) -> f64 {
    let k = wavenumber(wavelength_nm);
    (1.0 + opd_rms * opd_rms * k * k / 1.03).powf(-1.2)
}

/// Inverse of [`strehl_from_opd`]: the rms OPD (m) giving `strehl` at
/// `wavelength_nm`.
pub fn opd_from_strehl(strehl: f64, wavelength_nm: f64) -> Result<f64> {
    if !(strehl > 0.0 && strehl <= 1.0) {
        return Err(Error::param(
            "strehl",
            format!("must lie in (0, 1], got {strehl}"),
        ));
    }
    let x = strehl.powf(-5.0 / 6.0) - 1.0;
    Ok((1.03 * x.max(0.0)).sqrt() / wavenumber(wavelength_nm))
}

/// Turbulence-limited FOV (sr) for an rms residual OPD (m).
pub fn tl_fov_from_opd(receiver_diameter: f64, wavelength_nm: f64, opd_rms: f64) -> f64 {
    dl_fov(receiver_diameter, wavelength_nm) / strehl_from_opd(opd_rms, wavelength_nm)
}

/// The 500-nm Fried length whose open-loop OPD equals `opd_rms`.
pub fn equivalent_r0(opd_rms: f64, receiver_diameter: f64) -> f64 {
    if opd_rms == 0.0 {
        return f64::INFINITY;
    }
    let k0 = wavenumber(REFERENCE_WAVELENGTH_NM);
    receiver_diameter * (1.03 / (opd_rms * k0).powi(2)).powf(0.6)
}

/// Effective closed-loop Fried length from the site moments.
pub fn effective_r0_from_site(
    site: &SiteModel,
    ao: &AoParams,
    receiver_diameter: f64,
) -> Result<f64> {
    Ok(equivalent_r0(
        opd_rms_closed_loop(site, ao, receiver_diameter)?,
        receiver_diameter,
    ))
}

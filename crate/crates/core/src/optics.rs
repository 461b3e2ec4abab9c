//! Receiver-plane optics: spot sizes, fields of view, Strehl, field-stop
//! strategies and the end-to-end channel efficiency.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{ensure_positive, ensure_unit_interval, Error, Result};
use crate::spectral::SpectralProfile;
use crate::turbulence::scale_fried;

/// Fraction of the focused energy inside the first Airy null (unobscured
/// circular aperture).
pub const AIRY_CORE_FRACTION: f64 = 0.84;

/// Field-stop sizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Stop matched to the Airy core; rejects the turbulence halo.
    DiffractionLimited,
    /// Stop matched to the turbulence-broadened spot.
    TurbulenceLimited,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::DiffractionLimited, Strategy::TurbulenceLimited];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DiffractionLimited => "dl",
            Strategy::TurbulenceLimited => "tl",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dl" => Ok(Strategy::DiffractionLimited),
            "tl" => Ok(Strategy::TurbulenceLimited),
            other => Err(Error::param(
                "strategy",
                format!("expected dl or tl, got `{other}`"),
            )),
        }
    }
}

/// Transmitter/receiver geometry and detection chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// m
    pub transmitter_diameter: f64,
    /// m
    pub receiver_diameter: f64,
    /// m; only needed for physical spot diameters.
    pub focal_length: Option<f64>,
    /// m
    pub range: f64,
    pub eta_spec: f64,
    pub eta_rec: f64,
    pub eta_det: f64,
    /// Hz
    pub dark_count_rate: f64,
    /// Detection gate, s.
    pub gate_width: f64,
    /// Spectral filter width, nm.
    pub filter_width: f64,
    /// nm
    pub signal_wavelength: f64,
    pub strategy: Strategy,
}

impl Default for LinkConfig {
    /// 10-cm LEO transmitter at 600 km, 1-m ground receiver.
    fn default() -> Self {
        Self {
            transmitter_diameter: 0.10,
            receiver_diameter: 1.0,
            focal_length: None,
            range: 600e3,
            eta_spec: 0.9,
            eta_rec: 0.5,
            eta_det: 0.8,
            dark_count_rate: 10.0,
            gate_width: 1e-9,
            filter_width: 1.0,
            signal_wavelength: 780.945,
            strategy: Strategy::TurbulenceLimited,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("transmitter diameter", self.transmitter_diameter)?;
        ensure_positive("receiver diameter", self.receiver_diameter)?;
        if let Some(f) = self.focal_length {
            ensure_positive("focal length", f)?;
        }
        if !(self.range >= 0.0) || !self.range.is_finite() {
            return Err(Error::param(
                "range",
                format!("must be finite and >= 0, got {}", self.range),
            ));
        }
        for (name, eta) in [
            ("eta_spec", self.eta_spec),
            ("eta_rec", self.eta_rec),
            ("eta_det", self.eta_det),
        ] {
            ensure_unit_interval(name, eta)?;
            ensure_positive(name, eta)?;
        }
        if !(self.dark_count_rate >= 0.0) {
            return Err(Error::param("dark count rate", "must be >= 0"));
        }
        ensure_positive("gate width", self.gate_width)?;
        ensure_positive("filter width", self.filter_width)?;
        ensure_positive("signal wavelength", self.signal_wavelength)
    }
}

fn metres(wavelength_nm: f64) -> f64 {
    wavelength_nm * 1e-9
}

/// Airy-core diameter `2.44·λ·f/D_R` in the focal plane, m.
pub fn dl_spot_diameter(cfg: &LinkConfig, wavelength_nm: f64) -> Result<f64> {
    let f = cfg.focal_length.ok_or(Error::MissingFocalLength)?;
    ensure_positive("focal length", f)?;
    Ok(2.44 * metres(wavelength_nm) * f / cfg.receiver_diameter)
}

/// Turbulence-broadened spot, `d_DL/√S`, with `r_lambda` the Fried length
/// at the signal wavelength.
pub fn tl_spot_diameter(cfg: &LinkConfig, wavelength_nm: f64, r_lambda: f64) -> Result<f64> {
    let s = strehl_uncorrected(cfg.receiver_diameter, r_lambda);
    Ok(dl_spot_diameter(cfg, wavelength_nm)? / s.sqrt())
}

/// Closed-form Strehl of an uncorrected aperture, `[1+(D/r)^(5/3)]^(-6/5)`.
pub fn strehl_uncorrected(receiver_diameter: f64, r_lambda: f64) -> f64 {
    (1.0 + (receiver_diameter / r_lambda).powf(5.0 / 3.0)).powf(-1.2)
}

/// Diffraction-limited field of view `π(1.22λ/D)²`, sr.
pub fn dl_fov(receiver_diameter: f64, wavelength_nm: f64) -> f64 {
    let theta = 1.22 * metres(wavelength_nm) / receiver_diameter;
    PI * theta * theta
}

/// Turbulence-limited field of view for a 500-nm Fried length `r0`, sr.
pub fn tl_fov(receiver_diameter: f64, wavelength_nm: f64, r0: f64) -> f64 {
    let r = scale_fried(r0, wavelength_nm);
    let theta = 1.22 * metres(wavelength_nm) / receiver_diameter
        * (1.0 + (receiver_diameter / r).powf(5.0 / 3.0)).powf(0.6);
    PI * theta * theta
}

/// Field of view admitted by `strategy` when the spot has Strehl `strehl`.
pub fn fov_for_strategy(
    strategy: Strategy,
    receiver_diameter: f64,
    wavelength_nm: f64,
    strehl: f64,
) -> f64 {
    match strategy {
        Strategy::DiffractionLimited => dl_fov(receiver_diameter, wavelength_nm),
        Strategy::TurbulenceLimited => dl_fov(receiver_diameter, wavelength_nm) / strehl,
    }
}

/// Gaussian-beam radius (m) at the receiver for a waist `0.35·D_T`.
pub fn beam_radius(cfg: &LinkConfig, wavelength_nm: f64) -> f64 {
    let w0 = 0.7 * cfg.transmitter_diameter / 2.0;
    let zr = PI * w0 * w0 / metres(wavelength_nm);
    w0 * (1.0 + (cfg.range / zr).powi(2)).sqrt()
}

/// Fraction of the transmitted Gaussian beam captured by the receiver.
pub fn geometric_coupling(cfg: &LinkConfig, wavelength_nm: f64) -> f64 {
    let w = beam_radius(cfg, wavelength_nm);
    -(-0.5 * cfg.receiver_diameter.powi(2) / (w * w)).exp_m1()
}

pub fn field_stop_efficiency(strategy: Strategy, strehl: f64) -> f64 {
    match strategy {
        Strategy::TurbulenceLimited => AIRY_CORE_FRACTION,
        Strategy::DiffractionLimited => AIRY_CORE_FRACTION * strehl,
    }
}

/// The six factors of the channel efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub geo: f64,
    pub trans: f64,
    pub field_stop: f64,
    pub spec: f64,
    pub rec: f64,
    pub det: f64,
}

impl Efficiency {
    pub fn total(&self) -> f64 {
        self.geo * self.trans * self.field_stop * self.spec * self.rec * self.det
    }
}

/// Channel efficiency at `wavelength_nm` for a spot of Strehl `strehl`,
/// using `cfg.strategy`.
pub fn channel_efficiency_with_strehl(
    cfg: &LinkConfig,
    profile: &SpectralProfile,
    strehl: f64,
    wavelength_nm: f64,
) -> Result<Efficiency> {
    Ok(Efficiency {
        geo: geometric_coupling(cfg, wavelength_nm),
        trans: profile.transmission_at(wavelength_nm)?,
        field_stop: field_stop_efficiency(cfg.strategy, strehl),
        spec: cfg.eta_spec,
        rec: cfg.eta_rec,
        det: cfg.eta_det,
    })
}

/// Channel efficiency for a 500-nm Fried length `r0`.
pub fn channel_efficiency(
    cfg: &LinkConfig,
    profile: &SpectralProfile,
    r0: f64,
    wavelength_nm: f64,
) -> Result<Efficiency> {
    let s = strehl_uncorrected(cfg.receiver_diameter, scale_fried(r0, wavelength_nm));
    channel_efficiency_with_strehl(cfg, profile, s, wavelength_nm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::synthetic::flat_profile_with_dips;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn dl_spot() {
        let cfg = LinkConfig {
            focal_length: Some(10.0),
            ..LinkConfig::default()
        };
        let d = dl_spot_diameter(&cfg, 1550.0).unwrap();
        assert!((d - 37.82e-6).abs() < 0.005e-6);
        let ratio = d / dl_spot_diameter(&cfg, 431.0).unwrap();
        assert!(rel(ratio, 1550.0 / 431.0) < 1e-14);
        assert!(matches!(
            dl_spot_diameter(&LinkConfig::default(), 1550.0),
            Err(Error::MissingFocalLength)
        ));
        let zero = LinkConfig {
            focal_length: Some(0.0),
            ..LinkConfig::default()
        };
        assert!(dl_spot_diameter(&zero, 1550.0).is_err());
    }

    #[test]
    fn tl_spot_scaling() {
        let cfg = LinkConfig {
            focal_length: Some(10.0),
            ..LinkConfig::default()
        };
        let dl = dl_spot_diameter(&cfg, 431.0).unwrap();
        assert_eq!(tl_spot_diameter(&cfg, 431.0, f64::INFINITY).unwrap(), dl);
        let tl = tl_spot_diameter(&cfg, 431.0, scale_fried(0.30, 431.0)).unwrap();
        assert!((tl / dl - 17.8f64.sqrt()).abs() < 0.1);
        // S = 0.25 when (D/r)^(5/3) = 0.25^(-5/6) - 1
        let r = 1.0 / (0.25f64.powf(-5.0 / 6.0) - 1.0).powf(0.6);
        assert!(rel(tl_spot_diameter(&cfg, 431.0, r).unwrap(), 2.0 * dl) < 1e-12);
    }

    #[test]
    fn strehl_values() {
        assert_eq!(strehl_uncorrected(1.0, f64::INFINITY), 1.0);
        assert!(rel(strehl_uncorrected(1.0, 1.0), 2f64.powf(-1.2)) < 1e-15);
        let s = strehl_uncorrected(1.0, scale_fried(0.5, 1550.0));
        assert!((s - 0.71).abs() < 0.01, "{s}");
    }

    #[test]
    fn fov_values() {
        assert!((dl_fov(1.0, 1550.0) / dl_fov(1.0, 431.0) - 12.93).abs() < 0.01);
        assert!(rel(dl_fov(2.0, 1550.0), dl_fov(1.0, 1550.0) / 4.0) < 1e-14);
        assert!((dl_fov(1.0, 1550.0) - 1.123e-11).abs() < 0.001e-11);
        assert!((tl_fov(1.0, 431.0, 0.30) / dl_fov(1.0, 431.0) - 17.8).abs() < 0.5);
        assert!((tl_fov(1.0, 1550.0, 0.30) / dl_fov(1.0, 1550.0) - 1.99).abs() < 0.05);
        assert_eq!(tl_fov(1.0, 1550.0, f64::INFINITY), dl_fov(1.0, 1550.0));
    }

    #[test]
    fn coupling_values() {
        let cfg = LinkConfig::default();
        let at = |l| geometric_coupling(&cfg, l);
        assert!((at(1550.0) - 0.0070).abs() < 0.0001, "{}", at(1550.0));
        assert!((at(431.0) - 0.086).abs() < 0.001, "{}", at(431.0));
        assert!((beam_radius(&cfg, 1550.0) - 8.46).abs() < 0.01);
        assert!((beam_radius(&cfg, 431.0) - 2.35).abs() < 0.01);
        let zero = LinkConfig { range: 0.0, ..cfg };
        assert!(geometric_coupling(&zero, 1550.0) > 1.0 - 1e-12);
    }

    #[test]
    fn field_stop_values() {
        assert_eq!(
            field_stop_efficiency(Strategy::TurbulenceLimited, 0.3),
            0.84
        );
        assert_eq!(
            field_stop_efficiency(Strategy::DiffractionLimited, 1.0),
            0.84
        );
        assert!(
            rel(
                field_stop_efficiency(Strategy::DiffractionLimited, 0.5),
                0.42
            ) < 1e-15
        );
    }

    #[test]
    fn efficiency_products() {
        let profile = flat_profile_with_dips(400.0, 1600.0, 1.0, 1.0, 0.0, &[]);
        let cfg = LinkConfig {
            range: 0.0,
            eta_spec: 1.0,
            eta_rec: 1.0,
            eta_det: 1.0,
            ..LinkConfig::default()
        };
        let e = channel_efficiency(&cfg, &profile, 0.2, 800.0).unwrap();
        assert!((e.total() - 0.84).abs() < 1e-9);

        let dark = flat_profile_with_dips(400.0, 1600.0, 1.0, 0.0, 0.0, &[]);
        assert_eq!(
            channel_efficiency(&cfg, &dark, 0.2, 800.0).unwrap().total(),
            0.0
        );

        let dl = LinkConfig {
            strategy: Strategy::DiffractionLimited,
            ..LinkConfig::default()
        };
        let tl = LinkConfig::default();
        let s = strehl_uncorrected(1.0, scale_fried(0.2, 800.0));
        let ratio = channel_efficiency(&tl, &profile, 0.2, 800.0)
            .unwrap()
            .total()
            / channel_efficiency(&dl, &profile, 0.2, 800.0)
                .unwrap()
                .total();
        assert!(rel(ratio, 1.0 / s) < 1e-12);

        assert!(channel_efficiency(&cfg, &profile, 0.2, 300.0).is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "DL".parse::<Strategy>().unwrap(),
            Strategy::DiffractionLimited
        );
        assert_eq!(
            "tl".parse::<Strategy>().unwrap(),
            Strategy::TurbulenceLimited
        );
        assert!("both".parse::<Strategy>().is_err());
        assert_eq!(Strategy::TurbulenceLimited.to_string(), "tl");
    }

    #[test]
    fn config_validation() {
        assert!(LinkConfig::default().validate().is_ok());
        let bad = LinkConfig {
            eta_det: 0.0,
            ..LinkConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LinkConfig {
            gate_width: -1.0,
            ..LinkConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

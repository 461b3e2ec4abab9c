//! Sky-noise photon counting and the decoy-state BB84 analytic chain.

use bitflags::bitflags;

use crate::ao::{effective_r0_closed_loop, AoParams};
use crate::error::{ensure_positive, ensure_unit_interval, Error, Result};
use crate::optics::{
    channel_efficiency_with_strehl, fov_for_strategy, strehl_uncorrected, LinkConfig, Strategy,
};
use crate::spectral::SpectralProfile;
use crate::turbulence::{scale_fried, Greenwood, SiteModel, REFERENCE_WAVELENGTH_NM};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// Decoy-state BB84 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Signal mean photon number.
    pub mu: f64,
    /// Decoy mean photon number.
    pub nu: f64,
    /// Error rate of background clicks.
    pub e0: f64,
    /// Misalignment error rate.
    pub ed: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Fraction of pulses spent on decoy and vacuum states.
    pub decoy_fraction: f64,
    /// Hz
    pub pulse_rate: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            mu: 0.7,
            nu: 0.1,
            e0: 0.5,
            ed: 0.01,
            f_ec: 1.22,
            decoy_fraction: 0.3,
            pulse_rate: 10e6,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < self.mu && self.mu.is_finite()) {
            return Err(Error::param(
                "mu/nu",
                format!("need 0 < nu < mu, got mu={} nu={}", self.mu, self.nu),
            ));
        }
        ensure_unit_interval("e0", self.e0)?;
        ensure_unit_interval("ed", self.ed)?;
        if !(self.f_ec >= 1.0) {
            return Err(Error::param(
                "f_ec",
                format!("must be >= 1, got {}", self.f_ec),
            ));
        }
        if !(0.0..1.0).contains(&self.decoy_fraction) {
            return Err(Error::param(
                "decoy fraction",
                format!("must lie in [0, 1), got {}", self.decoy_fraction),
            ));
        }
        ensure_positive("pulse rate", self.pulse_rate)
    }
}

bitflags! {
    /// Diagnostics attached to an evaluated link point.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct ClampFlags: u8 {
        /// Single-photon gain (and yield) estimate was negative, set to 0.
        const Q1_CLAMPED = 1;
        /// Single-photon error estimate left [0, 0.5].
        const E1_CLAMPED = 1 << 1;
        /// Raw key-bit probability was negative; rate reported as 0.
        const NEGATIVE_KEY = 1 << 2;
        /// Single-photon yield is zero; no key can be bounded.
        const DEGENERATE_DECOY = 1 << 3;
        /// The point could not be evaluated; see the error stream.
        const POINT_ERROR = 1 << 4;
    }
}

impl ClampFlags {
    /// `|`-separated flag names, or `none`.
    pub fn to_token(self) -> String {
        if self.is_empty() {
            return "none".into();
        }
        self.iter_names()
            .map(|(n, _)| n)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_token(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::empty());
        }
        bitflags::parser::from_str(s).map_err(|e| Error::param("flags", e.to_string()))
    }
}

/// Sky-background photons per gate entering the field stop.
///
/// `fov` in sr, `receiver_diameter` in m, `gate` in s; radiance is
/// integrated over the `width`-nm notch centred on `center` nm.
pub fn background_photons(
    profile: &SpectralProfile,
    center: f64,
    width: f64,
    fov: f64,
    receiver_diameter: f64,
    gate: f64,
) -> Result<f64> {
    let per_joule = |l: f64| l * 1e-9 / (4.0 * PLANCK * LIGHT_SPEED);
    let band = profile.radiance_band_integral(center, width, per_joule)?;
    Ok(band * fov * std::f64::consts::PI * receiver_diameter * receiver_diameter * gate)
}

/// Per-gate background click probability.
pub fn background_probability(
    n_b: f64,
    eta_spec: f64,
    eta_rec: f64,
    eta_det: f64,
    dark_count_rate: f64,
    gate: f64,
) -> Result<f64> {
    let y0 = n_b * eta_spec * eta_rec * eta_det + 4.0 * dark_count_rate * gate;
    if y0 > 1.0 {
        return Err(Error::Saturated(y0));
    }
    Ok(y0)
}

/// Per-pulse click probability `Y0 + 1 - e^(-ηn)`.
pub fn gain(y0: f64, eta: f64, n: f64) -> f64 {
    y0 - (-eta * n).exp_m1()
}

/// Quantum bit error rate of pulses with mean photon number `n`.
pub fn qber(y0: f64, eta: f64, n: f64, e0: f64, ed: f64) -> Result<f64> {
    let signal = -(-eta * n).exp_m1();
    let q = y0 + signal;
    if !(q > 0.0) {
        return Err(Error::UndefinedQber);
    }
    // the limits hold exactly, not to rounding
    if y0 == 0.0 {
        return Ok(ed);
    }
    if signal == 0.0 {
        return Ok(e0);
    }
    Ok((e0 * y0 + ed * signal) / q)
}

/// Extra background a DL stop sees relative to TL once the sky term is
/// rescaled by `S`: `4 f_dark Δt (1/S - 1)`.
pub fn dl_noise_offset(strehl: f64, dark_count_rate: f64, gate: f64) -> f64 {
    4.0 * dark_count_rate * gate * (1.0 / strehl - 1.0)
}

/// First-order DL QBER written in terms of the TL background and efficiency.
#[allow(clippy::too_many_arguments)]
pub fn qber_dl_approx(
    y0_tl: f64,
    eta_tl: f64,
    n: f64,
    e0: f64,
    ed: f64,
    strehl: f64,
    dark_count_rate: f64,
    gate: f64,
) -> f64 {
    let eps = dl_noise_offset(strehl, dark_count_rate, gate);
    (e0 * (y0_tl + eps) + ed * eta_tl * n) / (y0_tl + eps + eta_tl * n)
}

/// `Q/Y0`; infinite for a noiseless channel.
pub fn snr(q: f64, y0: f64) -> f64 {
    if y0 == 0.0 {
        f64::INFINITY
    } else {
        q / y0
    }
}

/// Single-photon bounds from the signal/decoy gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimate {
    pub q1: f64,
    pub y1: f64,
    pub e1: f64,
    pub flags: ClampFlags,
}

/// Lower bound on the single-photon gain and yield, upper bound on the
/// single-photon error rate.
///
/// Negative `Q1` is clamped to 0 and `e1` to `[0, 0.5]`; a zero yield after
/// clamping is [`Error::DegenerateDecoy`].
#[allow(clippy::too_many_arguments)]
pub fn decoy_estimates(
    q_mu: f64,
    q_nu: f64,
    y0: f64,
    mu: f64,
    nu: f64,
    e_nu: f64,
    e0: f64,
) -> Result<DecoyEstimate> {
    if !(nu > 0.0 && nu < mu) {
        return Err(Error::param("mu/nu", "need 0 < nu < mu"));
    }
    let mut flags = ClampFlags::empty();
    let mu2 = mu * mu;
    let raw_q1 = mu2 * (-mu).exp() / (mu * nu - nu * nu)
        * (q_nu * nu.exp() - q_mu * mu.exp() * nu * nu / mu2 - (mu2 - nu * nu) / mu2 * y0);
    let q1 = if raw_q1 < 0.0 {
        flags |= ClampFlags::Q1_CLAMPED;
        0.0
    } else {
        raw_q1
    };
    let y1 = q1 * mu.exp() / mu;
    if !(y1 > 0.0) {
        return Err(Error::DegenerateDecoy(raw_q1 * mu.exp() / mu));
    }
    let raw_e1 = (e_nu * q_nu * nu.exp() - e0 * y0) / (y1 * nu);
    let e1 = raw_e1.clamp(0.0, 0.5);
    if e1 != raw_e1 {
        flags |= ClampFlags::E1_CLAMPED;
    }
    Ok(DecoyEstimate { q1, y1, e1, flags })
}

/// `-x log₂x - (1-x) log₂(1-x)`, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(
            "entropy argument",
            format!("must lie in [0, 1], got {x}"),
        ));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Secret key bits per signal pulse (may be negative).
pub fn key_bit_probability(q_mu: f64, e_mu: f64, q1: f64, e1: f64, f_ec: f64) -> Result<f64> {
    Ok(0.5 * (-q_mu * f_ec * binary_entropy(e_mu)? + q1 * (1.0 - binary_entropy(e1)?)))
}

/// The same quantity as [`key_bit_probability`], written as
/// `½Q_μ(-c1 + q·c2)` with `q = Q1/Q_μ`, `c1 = f_ec H2(E_μ)`,
/// `c2 = 1 - H2(e1)`.
pub fn key_bit_probability_rearranged(q_mu: f64, q: f64, c1: f64, c2: f64) -> f64 {
    if q_mu == 0.0 {
        return 0.0;
    }
    0.5 * q_mu * (-c1 + q * c2)
}

/// Secret key rate (Hz); negative key probabilities give 0.
pub fn key_bit_rate(p_kb: f64, pulse_rate: f64, decoy_fraction: f64) -> f64 {
    p_kb.max(0.0) * pulse_rate * (1.0 - decoy_fraction)
}

/// Where the Fried length of a link point comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Atmosphere {
    /// Explicit 500-nm Fried length. AO correction additionally needs the
    /// 500-nm Greenwood frequencies.
    Fried {
        r0: f64,
        greenwood: Option<Greenwood>,
    },
    Site(SiteModel),
}

impl Atmosphere {
    pub fn fried(r0: f64) -> Self {
        Atmosphere::Fried {
            r0,
            greenwood: None,
        }
    }

    /// The 500-nm Fried length seen by the receiver, after AO correction if
    /// `ao` is given.
    pub fn resolve_r0(&self, ao: Option<&AoParams>, receiver_diameter: f64) -> Result<f64> {
        let (r0, greenwood) = match self {
            Atmosphere::Fried { r0, greenwood } => {
                ensure_positive("r0", *r0)?;
                (*r0, *greenwood)
            }
            Atmosphere::Site(site) => {
                let r0 = site.moments()?.fried_length(REFERENCE_WAVELENGTH_NM);
                let g = match ao {
                    Some(_) => Some(Greenwood::from_site(site, receiver_diameter)?),
                    None => None,
                };
                (r0, g)
            }
        };
        match ao {
            None => Ok(r0),
            Some(ao) => {
                ao.validate()?;
                let g = greenwood.ok_or_else(|| {
                    Error::param(
                        "greenwood",
                        "AO correction needs Greenwood frequencies or a site model",
                    )
                })?;
                Ok(effective_r0_closed_loop(
                    ao,
                    g.tracking,
                    g.higher_order,
                    receiver_diameter,
                    REFERENCE_WAVELENGTH_NM,
                ))
            }
        }
    }
}

/// A fully evaluated link point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub wavelength_nm: f64,
    pub r0: f64,
    pub strategy: Strategy,
    pub strehl: f64,
    pub fov: f64,
    pub eta_geo: f64,
    pub eta_trans: f64,
    pub eta_fs: f64,
    pub eta_total: f64,
    pub n_b: f64,
    pub y0: f64,
    pub q_mu: f64,
    pub q_nu: f64,
    pub e_mu: f64,
    pub e_nu: f64,
    pub q1: f64,
    pub y1: f64,
    pub e1: f64,
    pub snr_mu: f64,
    /// Unclamped key-bit probability.
    pub p_kb: f64,
    pub r_kb: f64,
    pub flags: ClampFlags,
}

/// Evaluates a point, resolving the Fried length from `atmosphere` (and AO,
/// if given) first.
pub fn evaluate_link(
    profile: &SpectralProfile,
    atmosphere: &Atmosphere,
    cfg: &LinkConfig,
    protocol: &ProtocolParams,
    ao: Option<&AoParams>,
) -> Result<LinkBudget> {
    cfg.validate()?;
    let r0 = atmosphere.resolve_r0(ao, cfg.receiver_diameter)?;
    evaluate_with_r0(profile, r0, cfg, protocol)
}

/// Evaluates a point for a known 500-nm Fried length.
pub fn evaluate_with_r0(
    profile: &SpectralProfile,
    r0: f64,
    cfg: &LinkConfig,
    protocol: &ProtocolParams,
) -> Result<LinkBudget> {
    ensure_positive("r0", r0)?;
    let strehl = strehl_uncorrected(
        cfg.receiver_diameter,
        scale_fried(r0, cfg.signal_wavelength),
    );
    evaluate_with_strehl(profile, r0, strehl, cfg, protocol)
}

/// Evaluates a point whose spot Strehl is already known; `r0` is carried
/// through for reporting only.
pub fn evaluate_with_strehl(
    profile: &SpectralProfile,
    r0: f64,
    strehl: f64,
    cfg: &LinkConfig,
    protocol: &ProtocolParams,
) -> Result<LinkBudget> {
    cfg.validate()?;
    protocol.validate()?;
    if !(strehl > 0.0 && strehl <= 1.0) {
        return Err(Error::param(
            "strehl",
            format!("must lie in (0, 1], got {strehl}"),
        ));
    }
    let l = cfg.signal_wavelength;
    let fov = fov_for_strategy(cfg.strategy, cfg.receiver_diameter, l, strehl);
    let eff = channel_efficiency_with_strehl(cfg, profile, strehl, l)?;
    let eta = eff.total();
    let n_b = background_photons(
        profile,
        l,
        cfg.filter_width,
        fov,
        cfg.receiver_diameter,
        cfg.gate_width,
    )?;
    let y0 = background_probability(
        n_b,
        cfg.eta_spec,
        cfg.eta_rec,
        cfg.eta_det,
        cfg.dark_count_rate,
        cfg.gate_width,
    )?;
    let p = protocol;
    let q_mu = gain(y0, eta, p.mu);
    let q_nu = gain(y0, eta, p.nu);
    let e_mu = qber(y0, eta, p.mu, p.e0, p.ed)?;
    let e_nu = qber(y0, eta, p.nu, p.e0, p.ed)?;

    let decoy = match decoy_estimates(q_mu, q_nu, y0, p.mu, p.nu, e_nu, p.e0) {
        Ok(d) => d,
        Err(Error::DegenerateDecoy(_)) => DecoyEstimate {
            q1: 0.0,
            y1: 0.0,
            e1: 0.5,
            flags: ClampFlags::Q1_CLAMPED | ClampFlags::DEGENERATE_DECOY,
        },
        Err(e) => return Err(e),
    };
    let mut flags = decoy.flags;
    let p_kb = key_bit_probability(q_mu, e_mu, decoy.q1, decoy.e1, p.f_ec)?;
    if p_kb < 0.0 {
        flags |= ClampFlags::NEGATIVE_KEY;
    }
    let r_kb = if flags.contains(ClampFlags::DEGENERATE_DECOY) {
        0.0
    } else {
        key_bit_rate(p_kb, p.pulse_rate, p.decoy_fraction)
    };

    Ok(LinkBudget {
        wavelength_nm: l,
        r0,
        strategy: cfg.strategy,
        strehl,
        fov,
        eta_geo: eff.geo,
        eta_trans: eff.trans,
        eta_fs: eff.field_stop,
        eta_total: eta,
        n_b,
        y0,
        q_mu,
        q_nu,
        e_mu,
        e_nu,
        q1: decoy.q1,
        y1: decoy.y1,
        e1: decoy.e1,
        snr_mu: snr(q_mu, y0),
        p_kb,
        r_kb,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::synthetic::{bundled_profile, flat_profile_with_dips};
    use proptest::{prop_assert, proptest};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn background_photon_oracle() {
        let p = flat_profile_with_dips(700.0, 860.0, 1.0, 1.0, 1e-2, &[]);
        let n = background_photons(&p, 780.0, 1.0, 1e-10, 1.0, 1e-9).unwrap();
        // λ/4hc at 780 nm, in photons per joule
        let per_joule = 780e-9 / (4.0 * 6.62607015e-34 * 2.99792458e8);
        assert!(rel(per_joule, 9.81e17) < 1e-3);
        let oracle = per_joule * 1e-2 * 1.0 * 1e-10 * std::f64::consts::PI * 1e-9;
        assert!(rel(n, oracle) < 1e-12);
        assert!((n - 3.08e-3).abs() < 0.01e-3);

        let n2 = background_photons(&p, 780.0, 1.0, 2e-10, 1.0, 1e-9).unwrap();
        let n4 = background_photons(&p, 780.0, 1.0, 1e-10, 2.0, 1e-9).unwrap();
        assert!(rel(n2, 2.0 * n) < 1e-14 && rel(n4, 4.0 * n) < 1e-14);

        let dark = flat_profile_with_dips(700.0, 860.0, 1.0, 1.0, 0.0, &[]);
        assert_eq!(
            background_photons(&dark, 780.0, 1.0, 1e-10, 1.0, 1e-9).unwrap(),
            0.0
        );
    }

    #[test]
    fn background_probability_values() {
        assert_eq!(
            background_probability(0.0, 0.9, 0.5, 0.8, 0.0, 1e-9).unwrap(),
            0.0
        );
        assert!(
            rel(
                background_probability(0.0, 0.9, 0.5, 0.8, 10.0, 1e-9).unwrap(),
                4e-8
            ) < 1e-12
        );
        let y = background_probability(1e-3, 0.9, 0.5, 0.8, 10.0, 1e-9).unwrap();
        assert!(rel(y, 3.6e-4 + 4e-8) < 1e-12);
        assert!(matches!(
            background_probability(5.0, 1.0, 1.0, 1.0, 0.0, 1e-9),
            Err(Error::Saturated(_))
        ));
    }

    #[test]
    fn gain_values() {
        assert_eq!(gain(1e-5, 0.0, 0.7), 1e-5);
        assert!(rel(gain(1e-5, 1e-3, 0.7), 7.09755e-4) < 1e-6);
        let x: f64 = 1e-4 * 0.7;
        assert!((gain(0.0, 1e-4, 0.7) - (x - x * x / 2.0)).abs() < x.powi(3));
    }

    #[test]
    fn qber_limits() {
        assert_eq!(qber(0.0, 1e-3, 0.7, 0.5, 0.01).unwrap(), 0.01);
        assert_eq!(qber(1e-5, 0.0, 0.7, 0.5, 0.01).unwrap(), 0.5);
        let y0 = -(-1e-3f64 * 0.7).exp_m1();
        assert!(rel(qber(y0, 1e-3, 0.7, 0.5, 0.01).unwrap(), 0.255) < 1e-12);
        assert!(matches!(
            qber(0.0, 0.0, 0.7, 0.5, 0.01),
            Err(Error::UndefinedQber)
        ));
    }

    #[test]
    fn dl_approximation() {
        assert!(rel(dl_noise_offset(0.5, 10.0, 1e-9), 4e-8) < 1e-12);
        assert_eq!(dl_noise_offset(1.0, 10.0, 1e-9), 0.0);
        // S = 1 reduces to the linearized exact form
        let (y0, eta, n) = (1e-6, 1e-4, 0.7);
        let lin = (0.5 * y0 + 0.01 * eta * n) / (y0 + eta * n);
        assert!(rel(qber_dl_approx(y0, eta, n, 0.5, 0.01, 1.0, 10.0, 1e-9), lin) < 1e-14);
    }

    #[test]
    fn snr_values() {
        assert_eq!(snr(1e-5, 1e-5), 1.0);
        assert_eq!(snr(2e-5, 1e-5), 2.0);
        assert!(snr(1e-5, 0.0).is_infinite());
    }

    #[test]
    fn decoy_round_trip() {
        let (mu, nu, eta) = (0.7, 0.1, 1e-3);
        let est = |nu: f64| {
            let q_mu = gain(0.0, eta, mu);
            let q_nu = gain(0.0, eta, nu);
            let e_nu = qber(0.0, eta, nu, 0.5, 0.01).unwrap();
            decoy_estimates(q_mu, q_nu, 0.0, mu, nu, e_nu, 0.5).unwrap()
        };
        let d = est(nu);
        // With Y_k = kη the bound is linear in η with a μ,ν-dependent slack.
        let slack = mu * (nu.exp() - nu * mu.exp() / mu) / (mu - nu);
        assert!(rel(d.y1, slack * eta) < 1e-3, "{}", d.y1);
        assert!(rel(d.y1, d.q1 * mu.exp() / mu) < 1e-14);
        assert!(rel(d.e1, 0.01 * nu.exp() / slack) < 1e-3, "{}", d.e1);
        assert!(d.flags.is_empty());
        // the slack closes as the decoy intensity goes to zero
        let d = est(0.01);
        assert!(rel(d.y1, eta) < 0.01, "{}", d.y1);
        assert!(rel(d.e1, 0.01) < 0.02, "{}", d.e1);
        assert!(decoy_estimates(1e-3, 1e-4, 0.0, 0.1, 0.1, 0.01, 0.5).is_err());
    }

    #[test]
    fn decoy_degenerate_when_decoy_gain_too_small() {
        let y0 = 1e-4;
        let r = decoy_estimates(10.0 * y0, y0, y0, 0.7, 0.1, 0.5, 0.5);
        assert!(
            matches!(r, Err(Error::DegenerateDecoy(v)) if v < 0.0),
            "{r:?}"
        );
        // a flat yield is recovered as Y1 > 0
        assert!(decoy_estimates(y0, y0, y0, 0.7, 0.1, 0.5, 0.5).unwrap().y1 > 0.0);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        let x: f64 = 0.11;
        let direct = -x * x.ln() / 2f64.ln() - (1.0 - x) * (1.0 - x).ln() / 2f64.ln();
        assert!((binary_entropy(x).unwrap() - direct).abs() < 1e-15);
        assert!((binary_entropy(x).unwrap() - 0.499916).abs() < 1e-6);
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn key_bit_probability_limits() {
        assert_eq!(
            key_bit_probability(1e-3, 0.0, 1e-3, 0.0, 1.0).unwrap(),
            5e-4
        );
        assert!(
            rel(
                key_bit_probability(1e-3, 0.5, 1e-3, 0.5, 1.22).unwrap(),
                -1e-3 * 1.22 / 2.0
            ) < 1e-14
        );
        assert_eq!(key_bit_probability_rearranged(1e-3, 1.0, 0.0, 1.0), 5e-4);
        assert_eq!(key_bit_probability_rearranged(0.0, 1.0, 0.3, 1.0), 0.0);
    }

    #[test]
    fn key_rate_values() {
        assert_eq!(key_bit_rate(0.0, 10e6, 0.3), 0.0);
        assert!(rel(key_bit_rate(1e-4, 10e6, 0.3), 700.0) < 1e-12);
        assert_eq!(key_bit_rate(-1e-4, 10e6, 0.3), 0.0);
    }

    #[test]
    fn flag_tokens_round_trip() {
        let f = ClampFlags::E1_CLAMPED | ClampFlags::NEGATIVE_KEY;
        assert_eq!(f.to_token(), "E1_CLAMPED|NEGATIVE_KEY");
        assert_eq!(ClampFlags::from_token(&f.to_token()).unwrap(), f);
        assert_eq!(ClampFlags::from_token("none").unwrap(), ClampFlags::empty());
        assert!(ClampFlags::from_token("BOGUS").is_err());
    }

    fn noiseless() -> (SpectralProfile, LinkConfig) {
        let p = flat_profile_with_dips(400.0, 1600.0, 1.0, 1.0, 0.0, &[]);
        let cfg = LinkConfig {
            dark_count_rate: 0.0,
            ..LinkConfig::default()
        };
        (p, cfg)
    }

    #[test]
    fn noiseless_channel() {
        let (p, cfg) = noiseless();
        let b =
            evaluate_with_strehl(&p, f64::INFINITY, 1.0, &cfg, &ProtocolParams::default()).unwrap();
        assert_eq!(b.e_mu, 0.01);
        assert!(b.r_kb > 0.0);
        assert!(b.snr_mu.is_infinite());
    }

    #[test]
    fn strategies_coincide_at_unit_strehl() {
        let p = bundled_profile();
        let tl = LinkConfig::default();
        let dl = LinkConfig {
            strategy: Strategy::DiffractionLimited,
            ..tl.clone()
        };
        let pr = ProtocolParams::default();
        let a = evaluate_with_strehl(&p, 1.0, 1.0, &tl, &pr).unwrap();
        let b = evaluate_with_strehl(&p, 1.0, 1.0, &dl, &pr).unwrap();
        assert_eq!(
            LinkBudget {
                strategy: Strategy::TurbulenceLimited,
                ..b
            },
            a
        );
    }

    #[test]
    fn blue_beats_telecom_on_bundled_profile() {
        let p = bundled_profile();
        let pr = ProtocolParams::default();
        let at = |l: f64| {
            let cfg = LinkConfig {
                signal_wavelength: l,
                ..LinkConfig::default()
            };
            evaluate_link(&p, &Atmosphere::fried(0.5), &cfg, &pr, None)
                .unwrap()
                .r_kb
        };
        assert!(at(430.886) > at(1549.91));
    }

    #[test]
    fn ao_resolution() {
        let site = SiteModel::leo_downlink_default();
        let r = Atmosphere::Site(site.clone())
            .resolve_r0(Some(&AoParams::preset(200.0)), 1.0)
            .unwrap();
        assert!((r - 0.50).abs() < 0.01, "{r}");
        let r = Atmosphere::Site(site).resolve_r0(None, 1.0).unwrap();
        assert!((r - 0.05).abs() < 0.005, "{r}");
        assert!(Atmosphere::fried(0.05)
            .resolve_r0(Some(&AoParams::preset(200.0)), 1.0)
            .is_err());
        let measured = Atmosphere::Fried {
            r0: 0.05,
            greenwood: Some(Greenwood {
                higher_order: 301.0,
                tracking: 43.0,
            }),
        };
        let r = measured
            .resolve_r0(Some(&AoParams::preset(200.0)), 1.0)
            .unwrap();
        assert!((r - 0.50).abs() < 0.01);
    }

    #[test]
    fn out_of_range_wavelength_is_an_error() {
        let cfg = LinkConfig {
            signal_wavelength: 2000.0,
            ..LinkConfig::default()
        };
        let r = evaluate_with_r0(&bundled_profile(), 0.5, &cfg, &ProtocolParams::default());
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn rearranged_form_matches(
            q_mu in 1e-9f64..1e-1,
            frac in 0.0f64..1.0,
            e_mu in 0.0f64..0.5,
            e1 in 0.0f64..0.5,
            f_ec in 1.0f64..2.0,
        ) {
            let q1 = frac * q_mu;
            let a = key_bit_probability(q_mu, e_mu, q1, e1, f_ec).unwrap();
            let c1 = f_ec * binary_entropy(e_mu).unwrap();
            let c2 = 1.0 - binary_entropy(e1).unwrap();
            let b = key_bit_probability_rearranged(q_mu, q1 / q_mu, c1, c2);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-300);
        }

        #[test]
        fn qber_between_error_rates(y0 in 0.0f64..1e-2, eta in 1e-6f64..1e-1, n in 0.01f64..2.0) {
            let e = qber(y0, eta, n, 0.5, 0.01).unwrap();
            prop_assert!((0.01..=0.5).contains(&e));
            prop_assert!(gain(y0, eta, n) >= y0);
        }

        #[test]
        fn tl_gain_ratio_bounded(r0 in 0.05f64..1.0, l in 420.0f64..1580.0) {
            let p = bundled_profile();
            let pr = ProtocolParams::default();
            let tl = LinkConfig { signal_wavelength: l, ..LinkConfig::default() };
            let dl = LinkConfig { strategy: Strategy::DiffractionLimited, ..tl.clone() };
            let a = evaluate_with_r0(&p, r0, &tl, &pr).unwrap();
            let b = evaluate_with_r0(&p, r0, &dl, &pr).unwrap();
            let ratio = a.q_mu / b.q_mu;
            prop_assert!(ratio >= 1.0);
            prop_assert!(ratio <= 1.0 / a.strehl * (1.0 + 1e-12));
            prop_assert!((a.e_mu - b.e_mu).abs() < 1e-3);
            prop_assert!(a.r_kb >= b.r_kb);
        }

        #[test]
        fn key_rate_monotone_in_r0_when_dark_free(r_lo in 0.05f64..1.0, dr in 0.0f64..0.5, l in 420.0f64..1580.0) {
            let p = bundled_profile();
            let cfg = LinkConfig { signal_wavelength: l, dark_count_rate: 0.0, ..LinkConfig::default() };
            let pr = ProtocolParams::default();
            let a = evaluate_with_r0(&p, r_lo, &cfg, &pr).unwrap();
            let b = evaluate_with_r0(&p, r_lo + dr, &cfg, &pr).unwrap();
            prop_assert!(a.r_kb >= 0.0);
            prop_assert!(b.r_kb >= a.r_kb * (1.0 - 1e-12));
        }
    }
}

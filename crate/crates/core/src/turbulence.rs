//! Slant-path turbulence: Cn² profiles, wind profiles, and the altitude
//! moment integrals behind the Fried length and the Greenwood frequencies.

use std::f64::consts::PI;
use std::io::Read;

use crate::error::{ensure_positive, Error, Result};

/// Wavelength at which `r0` and the Greenwood frequencies are referenced.
pub const REFERENCE_WAVELENGTH_NM: f64 = 500.0;

const EARTH_GM: f64 = 3.986_004_418e14;
const EARTH_RADIUS: f64 = 6_378_137.0;

/// Cn² above this altitude is treated as zero.
pub const DEFAULT_CEILING_M: f64 = 50_000.0;
pub const DEFAULT_QUADRATURE_INTERVALS: usize = 2048;

pub(crate) fn wavenumber(wavelength_nm: f64) -> f64 {
    2.0 * PI / (wavelength_nm * 1e-9)
}

/// Refractive-index structure parameter profile, m⁻²ᐟ³.
#[derive(Debug, Clone, PartialEq)]
pub enum Cn2Profile {
    /// Hufnagel-Valley with ground-layer strength `ground_strength` and
    /// upper-atmosphere rms wind `rms_wind` (m/s).
    HufnagelValley { ground_strength: f64, rms_wind: f64 },
    /// `(altitude m, Cn²)` pairs, strictly increasing in altitude. Values
    /// are held constant below the first node and are zero above the last.
    Tabulated(Vec<(f64, f64)>),
}

impl Cn2Profile {
    /// The HV5/7 parameter set.
    pub fn hv57() -> Self {
        Cn2Profile::HufnagelValley {
            ground_strength: 1.7e-14,
            rms_wind: 21.0,
        }
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("cn2 table", "needs at least one row"));
        }
        for (i, &(h, c)) in points.iter().enumerate() {
            if !(h >= 0.0) || !(c >= 0.0) || !h.is_finite() || !c.is_finite() {
                return Err(Error::InvalidSample {
                    row: i + 1,
                    message: format!("altitude {h} and Cn² {c} must be finite and >= 0"),
                });
            }
            if i > 0 && h <= points[i - 1].0 {
                return Err(Error::InvalidSample {
                    row: i + 1,
                    message: "altitudes must be strictly increasing".into(),
                });
            }
        }
        Ok(Cn2Profile::Tabulated(points))
    }

    /// Reads an `altitude_m,cn2` table (`#` comments allowed).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let parse_err = |e: csv::Error| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        };
        let headers = rdr.headers().map_err(parse_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["altitude_m", "cn2"] {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `altitude_m,cn2`".into(),
            });
        }
        let mut points = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(parse_err)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: "expected 2 fields".into(),
                    })?
                    .parse()
                    .map_err(|e| Error::Parse {
                        line,
                        message: format!("{e}"),
                    })
            };
            points.push((num(0)?, num(1)?));
        }
        Self::tabulated(points)
    }

    /// Cn² at altitude `h` (m).
    pub fn at(&self, h: f64) -> Result<f64> {
        if h < 0.0 {
            return Err(Error::NegativeAltitude(h));
        }
        Ok(self.eval(h))
    }

    fn eval(&self, h: f64) -> f64 {
        match self {
            Cn2Profile::HufnagelValley {
                ground_strength,
                rms_wind,
            } => {
                0.00594 * (rms_wind / 27.0).powi(2) * (1e-5 * h).powi(10) * (-h / 1000.0).exp()
                    + 2.7e-16 * (-h / 1500.0).exp()
                    + ground_strength * (-h / 100.0).exp()
            }
            Cn2Profile::Tabulated(points) => {
                let i = points.partition_point(|p| p.0 < h);
                if i == 0 {
                    points[0].1
                } else if i == points.len() {
                    if h == points[i - 1].0 {
                        points[i - 1].1
                    } else {
                        0.0
                    }
                } else if points[i].0 == h {
                    points[i].1
                } else {
                    let (h0, c0) = points[i - 1];
                    let (h1, c1) = points[i];
                    c0 + (h - h0) / (h1 - h0) * (c1 - c0)
                }
            }
        }
    }
}

/// Bufton upper-atmosphere jet: `peak·exp(-((h - altitude)/width)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuftonWind {
    pub peak_speed: f64,
    pub peak_altitude: f64,
    pub width: f64,
}

impl Default for BuftonWind {
    fn default() -> Self {
        Self {
            peak_speed: 30.0,
            peak_altitude: 9400.0,
            width: 4800.0,
        }
    }
}

impl BuftonWind {
    pub fn speed_at(&self, h: f64) -> f64 {
        let x = (h - self.peak_altitude) / self.width;
        self.peak_speed * (-x * x).exp()
    }
}

/// Effective transverse wind seen along the tracked line of sight.
///
/// Slewing a telescope at `slew_rate` (rad/s) sweeps the beam through a
/// layer at altitude `h` at speed `slew_rate·h`, which adds to the natural
/// wind as a pseudo-wind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindModel {
    pub ground_speed: f64,
    pub bufton: BuftonWind,
    pub slew_rate: f64,
}

impl WindModel {
    /// Bufton wind plus the zenith slew rate of a circular orbit at
    /// `orbit_altitude` (m).
    pub fn leo_zenith_pass(orbit_altitude: f64) -> Self {
        Self {
            ground_speed: 5.0,
            bufton: BuftonWind::default(),
            slew_rate: circular_orbit_slew_rate(orbit_altitude),
        }
    }

    pub fn speed_at(&self, h: f64) -> f64 {
        self.slew_rate * h + self.bufton.speed_at(h) + self.ground_speed
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ground wind speed", self.ground_speed),
            ("Bufton peak speed", self.bufton.peak_speed),
            ("slew rate", self.slew_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        ensure_positive("Bufton width", self.bufton.width)
    }
}

/// Angular rate (rad/s) of a circular-orbit satellite seen at zenith.
pub fn circular_orbit_slew_rate(orbit_altitude: f64) -> f64 {
    (EARTH_GM / (EARTH_RADIUS + orbit_altitude)).sqrt() / orbit_altitude
}

/// Observing site and path geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteModel {
    pub cn2: Cn2Profile,
    /// Turbulence multiplier ("N×HV5/7").
    pub cn2_scale: f64,
    pub wind: WindModel,
    /// radians
    pub zenith_angle: f64,
    /// Altitude of the light source, m.
    pub source_altitude: f64,
    pub ceiling: f64,
    pub quadrature_intervals: usize,
}

impl SiteModel {
    /// 1×HV5/7, Bufton wind with 600-km LEO slew, zenith pointing.
    pub fn leo_downlink_default() -> Self {
        let altitude = 600e3;
        Self {
            cn2: Cn2Profile::hv57(),
            cn2_scale: 1.0,
            wind: WindModel::leo_zenith_pass(altitude),
            zenith_angle: 0.0,
            source_altitude: altitude,
            ceiling: DEFAULT_CEILING_M,
            quadrature_intervals: DEFAULT_QUADRATURE_INTERVALS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..PI / 2.0).contains(&self.zenith_angle) {
            return Err(Error::param(
                "zenith angle",
                format!("must lie in [0, π/2), got {}", self.zenith_angle),
            ));
        }
        ensure_positive("source altitude", self.source_altitude)?;
        ensure_positive("ceiling", self.ceiling)?;
        if !(self.cn2_scale >= 0.0) {
            return Err(Error::param("cn2 scale", "must be >= 0"));
        }
        if self.quadrature_intervals < 2 || !self.quadrature_intervals.is_multiple_of(2) {
            return Err(Error::param(
                "quadrature intervals",
                format!(
                    "must be an even number >= 2, got {}",
                    self.quadrature_intervals
                ),
            ));
        }
        if let Cn2Profile::HufnagelValley {
            ground_strength,
            rms_wind,
        } = self.cn2
        {
            if !(ground_strength >= 0.0) || !(rms_wind >= 0.0) {
                return Err(Error::param("HV parameters", "must be >= 0"));
            }
        }
        self.wind.validate()
    }

    pub fn cn2_at(&self, h: f64) -> Result<f64> {
        Ok(self.cn2_scale * self.cn2.at(h)?)
    }

    /// Evaluates the three altitude moments, each already multiplied by
    /// sec(θz).
    pub fn moments(&self) -> Result<PathMoments> {
        self.validate()?;
        let top = self.source_altitude.min(self.ceiling);
        let bottom = 1.0_f64.min(0.5 * top);
        let n = self.quadrature_intervals;
        let (u0, u1) = (bottom.ln(), top.ln());
        let du = (u1 - u0) / n as f64;

        let mut sums = [0.0_f64; 3];
        for i in 0..=n {
            let h = (u0 + du * i as f64).exp();
            let coef = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            // dh = h du
            let c = self.cn2_scale * self.cn2.eval(h) * h * coef;
            let v = self.wind.speed_at(h);
            sums[0] += c;
            sums[1] += c * v.powf(5.0 / 3.0);
            sums[2] += c * v * v;
        }
        let sec = 1.0 / self.zenith_angle.cos();
        let scale = du / 3.0 * sec;
        Ok(PathMoments {
            cn2: sums[0] * scale,
            cn2_wind_five_thirds: sums[1] * scale,
            cn2_wind_squared: sums[2] * scale,
        })
    }
}

/// sec(θz)·∫Cn², sec(θz)·∫Cn²v^(5/3), sec(θz)·∫Cn²v² along the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMoments {
    pub cn2: f64,
    pub cn2_wind_five_thirds: f64,
    pub cn2_wind_squared: f64,
}

impl PathMoments {
    /// Fried length (m) at `wavelength_nm`; infinite for a vacuum path.
    pub fn fried_length(&self, wavelength_nm: f64) -> f64 {
        if self.cn2 == 0.0 {
            return f64::INFINITY;
        }
        let k = wavenumber(wavelength_nm);
        (0.423 * k * k * self.cn2).powf(-3.0 / 5.0)
    }

    pub fn greenwood_frequency(&self, wavelength_nm: f64) -> f64 {
        let k = wavenumber(wavelength_nm);
        (0.1022 * k * k * self.cn2_wind_five_thirds).powf(3.0 / 5.0)
    }

    pub fn tracking_greenwood_frequency(&self, wavelength_nm: f64, receiver_diameter: f64) -> f64 {
        let k = wavenumber(wavelength_nm);
        5.268e-2 * receiver_diameter.powf(-1.0 / 6.0) * k * self.cn2_wind_squared.sqrt()
    }
}

fn check_wavelength(wavelength_nm: f64) -> Result<()> {
    ensure_positive("wavelength", wavelength_nm)
}

pub fn cn2_at(profile: &Cn2Profile, h: f64) -> Result<f64> {
    profile.at(h)
}

pub fn fried_length(site: &SiteModel, wavelength_nm: f64) -> Result<f64> {
    check_wavelength(wavelength_nm)?;
    Ok(site.moments()?.fried_length(wavelength_nm))
}

pub fn greenwood_frequency(site: &SiteModel, wavelength_nm: f64) -> Result<f64> {
    check_wavelength(wavelength_nm)?;
    Ok(site.moments()?.greenwood_frequency(wavelength_nm))
}

pub fn tracking_greenwood_frequency(
    site: &SiteModel,
    wavelength_nm: f64,
    receiver_diameter: f64,
) -> Result<f64> {
    check_wavelength(wavelength_nm)?;
    ensure_positive("receiver diameter", receiver_diameter)?;
    Ok(site
        .moments()?
        .tracking_greenwood_frequency(wavelength_nm, receiver_diameter))
}

/// Scales a 500-nm Fried length to `wavelength_nm` (λ^(6/5) law).
pub fn scale_fried(r0: f64, wavelength_nm: f64) -> f64 {
    r0 * (wavelength_nm / REFERENCE_WAVELENGTH_NM).powf(6.0 / 5.0)
}

/// 500-nm referenced Greenwood frequencies, Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Greenwood {
    pub higher_order: f64,
    pub tracking: f64,
}

impl Greenwood {
    pub fn from_site(site: &SiteModel, receiver_diameter: f64) -> Result<Self> {
        let m = site.moments()?;
        Ok(Self {
            higher_order: m.greenwood_frequency(REFERENCE_WAVELENGTH_NM),
            tracking: m.tracking_greenwood_frequency(REFERENCE_WAVELENGTH_NM, receiver_diameter),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn hv57_ground_value() {
        let v = Cn2Profile::hv57().at(0.0).unwrap();
        // A + 2.7e-16, the high-altitude term vanishes at h = 0
        assert!(rel(v, 1.727e-14) < 1e-12);
    }

    #[test]
    fn hv57_decays_at_altitude() {
        assert!(Cn2Profile::hv57().at(100e3).unwrap() < 1e-20);
        assert!(matches!(
            Cn2Profile::hv57().at(-1.0),
            Err(Error::NegativeAltitude(_))
        ));
    }

    #[test]
    fn tabulated_profile_nodes_and_interpolation() {
        let p =
            Cn2Profile::tabulated(vec![(0.0, 4e-14), (1000.0, 2e-14), (2000.0, 1e-16)]).unwrap();
        assert_eq!(p.at(1000.0).unwrap(), 2e-14);
        assert_eq!(p.at(2000.0).unwrap(), 1e-16);
        assert!(rel(p.at(500.0).unwrap(), 3e-14) < 1e-12);
        assert_eq!(p.at(2500.0).unwrap(), 0.0);
        assert!(Cn2Profile::tabulated(vec![(10.0, 1e-14), (5.0, 1e-14)]).is_err());
        assert!(Cn2Profile::tabulated(vec![(10.0, -1e-14)]).is_err());
    }

    #[test]
    fn tabulated_csv() {
        let text = "# site table\naltitude_m,cn2\n0,1e-14\n100,5e-15\n";
        let p = Cn2Profile::from_csv(text.as_bytes()).unwrap();
        assert_eq!(p.at(100.0).unwrap(), 5e-15);
        assert!(Cn2Profile::from_csv("h,c\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn default_site_matches_reference_triple() {
        let site = SiteModel::leo_downlink_default();
        let r0 = fried_length(&site, 500.0).unwrap();
        let fg = greenwood_frequency(&site, 500.0).unwrap();
        let ftg = tracking_greenwood_frequency(&site, 500.0, 1.0).unwrap();
        assert!(rel(r0, 0.05) < 0.10, "r0 = {r0}");
        assert!(rel(fg, 301.0) < 0.10, "fG = {fg}");
        assert!(rel(ftg, 43.0) < 0.10, "fTG = {ftg}");
        let fg1550 = greenwood_frequency(&site, 1550.0).unwrap();
        assert!((fg1550 - 77.0).abs() < 0.1 * 77.0, "fG(1550) = {fg1550}");
    }

    #[test]
    fn wavelength_scaling_laws() {
        let site = SiteModel::leo_downlink_default();
        let m = site.moments().unwrap();
        assert!(
            rel(
                m.fried_length(1550.0) / m.fried_length(500.0),
                (3.1_f64).powf(1.2)
            ) < 1e-9
        );
        assert!(
            rel(
                m.greenwood_frequency(1550.0) / m.greenwood_frequency(500.0),
                (500.0_f64 / 1550.0).powf(1.2)
            ) < 1e-9
        );
        assert!(
            rel(
                m.tracking_greenwood_frequency(1000.0, 1.0)
                    / m.tracking_greenwood_frequency(500.0, 1.0),
                0.5
            ) < 1e-12
        );
        assert!(
            rel(
                m.tracking_greenwood_frequency(500.0, 64.0)
                    / m.tracking_greenwood_frequency(500.0, 1.0),
                0.5
            ) < 1e-12
        );
        let r0 = m.fried_length(500.0);
        assert!(rel(scale_fried(r0, 1550.0), m.fried_length(1550.0)) < 1e-9);
    }

    #[test]
    fn doubling_turbulence_and_zenith_sixty() {
        let site = SiteModel::leo_downlink_default();
        let doubled = SiteModel {
            cn2_scale: 2.0,
            ..site.clone()
        };
        let r = fried_length(&site, 500.0).unwrap();
        assert!(rel(fried_length(&doubled, 500.0).unwrap(), r * 2f64.powf(-0.6)) < 1e-12);

        let slant = SiteModel {
            zenith_angle: 60f64.to_radians(),
            ..site.clone()
        };
        let m0 = site.moments().unwrap();
        let m60 = slant.moments().unwrap();
        assert!(rel(m60.cn2, 2.0 * m0.cn2) < 1e-12);
        assert!(rel(m60.fried_length(500.0), r * 2f64.powf(-0.6)) < 1e-12);
    }

    #[test]
    fn calm_and_vacuum_paths() {
        let calm = SiteModel {
            wind: WindModel {
                ground_speed: 0.0,
                bufton: BuftonWind {
                    peak_speed: 0.0,
                    ..BuftonWind::default()
                },
                slew_rate: 0.0,
            },
            ..SiteModel::leo_downlink_default()
        };
        assert_eq!(greenwood_frequency(&calm, 500.0).unwrap(), 0.0);
        assert_eq!(
            tracking_greenwood_frequency(&calm, 500.0, 1.0).unwrap(),
            0.0
        );

        let vacuum = SiteModel {
            cn2_scale: 0.0,
            ..SiteModel::leo_downlink_default()
        };
        assert!(fried_length(&vacuum, 500.0).unwrap().is_infinite());
    }

    #[test]
    fn quadrature_converges_on_doubling() {
        let site = SiteModel::leo_downlink_default();
        let fine = SiteModel {
            quadrature_intervals: 2 * site.quadrature_intervals,
            ..site.clone()
        };
        let (a, b) = (site.moments().unwrap(), fine.moments().unwrap());
        assert!(rel(a.fried_length(500.0), b.fried_length(500.0)) < 1e-3);
        assert!(rel(a.greenwood_frequency(500.0), b.greenwood_frequency(500.0)) < 1e-3);
        assert!(
            rel(
                a.tracking_greenwood_frequency(500.0, 1.0),
                b.tracking_greenwood_frequency(500.0, 1.0)
            ) < 1e-3
        );
    }

    #[test]
    fn invalid_site_rejected() {
        let mut s = SiteModel::leo_downlink_default();
        s.zenith_angle = PI / 2.0;
        assert!(s.moments().is_err());
        let mut s = SiteModel::leo_downlink_default();
        s.quadrature_intervals = 7;
        assert!(s.moments().is_err());
        let mut s = SiteModel::leo_downlink_default();
        s.source_altitude = 0.0;
        assert!(s.moments().is_err());
        assert!(fried_length(&SiteModel::leo_downlink_default(), 0.0).is_err());
    }

    #[test]
    fn leo_slew_rate() {
        let w = circular_orbit_slew_rate(600e3);
        assert!((w - 12.6e-3).abs() < 0.1e-3, "{w}");
    }

    #[test]
    fn scale_fried_examples() {
        assert_eq!(scale_fried(0.05, 500.0), 0.05);
        assert!((scale_fried(0.30, 431.0) - 0.2510).abs() < 5e-4);
        assert!((scale_fried(0.30, 1550.0) - 1.166).abs() < 5e-4);
    }
}

//! Synthetic spectra for demonstrations and construction tests.
//!
//! The demonstration profile is a smooth daytime-sky continuum (a 5800 K
//! solar spectrum tilted by λ⁻³ scattering) with Rayleigh/aerosol
//! extinction and a few absorption bands in transmission. Narrow radiance
//! dips are carved into the continuum: a broad one at 430.9 nm, a very
//! narrow deep one at 404.7 nm, and shallower ones at 780.9 nm and
//! 1549.9 nm. The file shipped as `data/demo_profile.csv` is exactly
//! [`demo_profile`] serialized.

use super::{RadianceUnit, SpectralProfile, SpectralSample};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Gaussian-shaped fractional notch: the value is multiplied by
/// `1 - depth·exp(-(λ-center)²/(2 sigma²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub center_nm: f64,
    pub depth: f64,
    pub sigma_nm: f64,
}

impl Dip {
    pub const fn new(center_nm: f64, depth: f64, sigma_nm: f64) -> Self {
        Self {
            center_nm,
            depth,
            sigma_nm,
        }
    }

    pub fn factor(&self, wavelength: f64) -> f64 {
        let x = (wavelength - self.center_nm) / self.sigma_nm;
        1.0 - self.depth * (-0.5 * x * x).exp()
    }
}

pub const DEMO_BROAD_DIP: Dip = Dip::new(430.9, 0.85, 0.6);
pub const DEMO_NARROW_DIP: Dip = Dip::new(404.7, 0.97, 0.02);
const DEMO_DIPS: [Dip; 4] = [
    DEMO_BROAD_DIP,
    DEMO_NARROW_DIP,
    Dip::new(780.9, 0.5, 0.3),
    Dip::new(1549.9, 0.2, 0.5),
];

// (center nm, peak optical depth, sigma nm): O2 A-band and water bands
const ABSORPTION_BANDS: [(f64, f64, f64); 4] = [
    (760.5, 2.0, 1.5),
    (940.0, 1.0, 20.0),
    (1130.0, 1.5, 25.0),
    (1380.0, 5.0, 40.0),
];

const DEMO_RADIANCE_AT_500: f64 = 0.2;

fn planck(wavelength_nm: f64, temperature: f64) -> f64 {
    let l = wavelength_nm * 1e-9;
    1.0 / (l.powi(5) * ((PLANCK * LIGHT_SPEED / (l * BOLTZMANN * temperature)).exp() - 1.0))
}

fn demo_transmission(wavelength: f64) -> f64 {
    let x = wavelength / 500.0;
    let mut tau = 0.115 * x.powi(-4) + 0.05 * x.powf(-1.3);
    for (center, depth, sigma) in ABSORPTION_BANDS {
        let u = (wavelength - center) / sigma;
        tau += depth * (-0.5 * u * u).exp();
    }
    (-tau).exp()
}

fn demo_radiance(wavelength: f64) -> f64 {
    let continuum =
        DEMO_RADIANCE_AT_500 * (wavelength / 500.0).powi(-3) * planck(wavelength, 5800.0)
            / planck(500.0, 5800.0);
    DEMO_DIPS
        .iter()
        .fold(continuum, |h, dip| h * dip.factor(wavelength))
}

/// Evenly spaced points `start + i·step`, `i = 0..count`, rounded to 1e-6 nm.
fn ladder(start: f64, step: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| round_micro(start + step * i as f64))
}

fn round_micro(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn demo_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = ladder(390.0, 0.5, 2441)
        .chain(ladder(426.0, 0.01, 1000))
        .chain(ladder(403.5, 0.002, 1250))
        .chain(ladder(779.0, 0.02, 200))
        .chain(ladder(1547.0, 0.05, 120))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Builds the demonstration profile (390–1610 nm).
pub fn demo_profile() -> SpectralProfile {
    let samples = demo_grid()
        .into_iter()
        .map(|wavelength_nm| SpectralSample {
            wavelength_nm,
            transmission: demo_transmission(wavelength_nm),
            radiance: demo_radiance(wavelength_nm),
        })
        .collect();
    SpectralProfile::new(
        samples,
        "synthetic-demo",
        RadianceUnit::WattsPerSquareMetreNm,
    )
    .expect("demo profile is valid by construction")
}

/// The demonstration profile as shipped in `data/demo_profile.csv`.
pub fn bundled_profile() -> SpectralProfile {
    const CSV: &str = include_str!("../../data/demo_profile.csv");
    SpectralProfile::from_csv(CSV.as_bytes(), "synthetic-demo").expect("bundled profile parses")
}

/// Flat transmission and flat radiance over `[start, end]` sampled every
/// `step` nm, with `dips` multiplied into the radiance.
pub fn flat_profile_with_dips(
    start: f64,
    end: f64,
    step: f64,
    transmission: f64,
    radiance: f64,
    dips: &[Dip],
) -> SpectralProfile {
    let count = ((end - start) / step).round() as usize + 1;
    let samples = ladder(start, step, count)
        .map(|wavelength_nm| SpectralSample {
            wavelength_nm,
            transmission,
            radiance: dips
                .iter()
                .fold(radiance, |h, d| h * d.factor(wavelength_nm)),
        })
        .collect();
    SpectralProfile::new(
        samples,
        "synthetic-flat",
        RadianceUnit::WattsPerSquareMetreNm,
    )
    .expect("flat profile is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_matches_generator() {
        let (a, b) = (bundled_profile(), demo_profile());
        assert_eq!(a.len(), b.len());
        // powi may round differently between optimisation levels
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-14 * v.abs();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.wavelength_nm, y.wavelength_nm);
            assert!(close(x.transmission, y.transmission), "{x:?} vs {y:?}");
            assert!(close(x.radiance, y.radiance), "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn demo_profile_covers_working_band() {
        let p = demo_profile();
        assert_eq!(p.range(), (390.0, 1610.0));
        for l in [404.7, 430.9, 780.945, 1549.91] {
            assert!(p.radiance_at(l).unwrap() > 0.0);
        }
    }

    #[test]
    fn dips_lower_radiance_and_blue_sky_is_brighter() {
        let p = demo_profile();
        let h = |l| p.radiance_at(l).unwrap();
        assert!(h(430.9) < 0.2 * h(428.0));
        assert!(h(404.7) < 0.05 * h(404.0));
        assert!(h(450.0) > h(781.5));
        assert!(h(781.5) > 10.0 * h(1560.0));
    }
}

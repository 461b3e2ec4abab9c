//! Tabulated atmospheric transmission and sky spectral radiance.
//!
//! Profiles are read from a small CSV dialect:
//!
//! ```text
//! # unit=W_m2_sr_nm
//! wavelength_nm,transmission,radiance
//! 400.0,0.61,0.21
//! 400.5,0.61,0.21
//! ```
//!
//! Radiance is stored internally in W·m⁻²·sr⁻¹·nm⁻¹ regardless of the
//! declared input unit. Between samples every quantity is linear in
//! wavelength.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub mod synthetic;

/// Radiance unit declared by a spectral file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadianceUnit {
    /// W·m⁻²·sr⁻¹·nm⁻¹ (canonical).
    WattsPerSquareMetreNm,
    /// W·cm⁻²·sr⁻¹·µm⁻¹, the usual radiative-transfer code output.
    WattsPerSquareCentimetreMicron,
}

impl RadianceUnit {
    pub fn tag(self) -> &'static str {
        match self {
            RadianceUnit::WattsPerSquareMetreNm => "W_m2_sr_nm",
            RadianceUnit::WattsPerSquareCentimetreMicron => "W_cm2_sr_um",
        }
    }

    /// Multiplier taking a value in this unit to W·m⁻²·sr⁻¹·nm⁻¹.
    pub fn to_canonical(self) -> f64 {
        match self {
            RadianceUnit::WattsPerSquareMetreNm => 1.0,
            // 1e4 cm² per m², 1e3 nm per µm
            RadianceUnit::WattsPerSquareCentimetreMicron => 1.0e4 / 1.0e3,
        }
    }
}

impl FromStr for RadianceUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "W_m2_sr_nm" => Ok(RadianceUnit::WattsPerSquareMetreNm),
            "W_cm2_sr_um" => Ok(RadianceUnit::WattsPerSquareCentimetreMicron),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for RadianceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Which tabulated column to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Transmission,
    Radiance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSample {
    pub wavelength_nm: f64,
    pub transmission: f64,
    /// W·m⁻²·sr⁻¹·nm⁻¹
    pub radiance: f64,
}

impl SpectralSample {
    fn get(&self, which: Quantity) -> f64 {
        match which {
            Quantity::Transmission => self.transmission,
            Quantity::Radiance => self.radiance,
        }
    }
}

/// Validated spectral table. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProfile {
    samples: Vec<SpectralSample>,
    source: String,
    input_unit: RadianceUnit,
}

const HEADER: [&str; 3] = ["wavelength_nm", "transmission", "radiance"];

impl SpectralProfile {
    /// Builds a profile from samples whose radiance is already canonical.
    pub fn new(
        samples: Vec<SpectralSample>,
        source: impl Into<String>,
        input_unit: RadianceUnit,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidSample {
                row: samples.len(),
                message: "a profile needs at least 2 samples".into(),
            });
        }
        for (i, s) in samples.iter().enumerate() {
            validate_sample(i + 1, s)?;
            if i > 0 && s.wavelength_nm <= samples[i - 1].wavelength_nm {
                return Err(Error::InvalidSample {
                    row: i + 1,
                    message: format!(
                        "wavelengths must be strictly increasing ({} after {})",
                        s.wavelength_nm,
                        samples[i - 1].wavelength_nm
                    ),
                });
            }
        }
        Ok(Self {
            samples,
            source: source.into(),
            input_unit,
        })
    }

    /// Reads a profile whose unit comes from the mandatory `# unit=` header.
    pub fn from_csv<R: Read>(reader: R, source: impl Into<String>) -> Result<Self> {
        let text = read_all(reader)?;
        let unit = declared_unit(&text)?.ok_or(Error::Parse {
            line: 1,
            message: "missing `# unit=<tag>` header".into(),
        })?;
        parse_rows(&text, unit, source.into())
    }

    pub fn samples(&self) -> &[SpectralSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn input_unit(&self) -> RadianceUnit {
        self.input_unit
    }

    /// Inclusive tabulated range in nm.
    pub fn range(&self) -> (f64, f64) {
        (
            self.samples[0].wavelength_nm,
            self.samples[self.samples.len() - 1].wavelength_nm,
        )
    }

    fn check_in_range(&self, wavelength: f64) -> Result<()> {
        let (min, max) = self.range();
        if wavelength >= min && wavelength <= max {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                wavelength,
                min,
                max,
            })
        }
    }

    /// Linearly interpolated value at `wavelength` (nm).
    pub fn value_at(&self, wavelength: f64, which: Quantity) -> Result<f64> {
        self.check_in_range(wavelength)?;
        let idx = self
            .samples
            .partition_point(|s| s.wavelength_nm < wavelength);
        let hi = &self.samples[idx];
        if hi.wavelength_nm == wavelength {
            return Ok(hi.get(which));
        }
        let lo = &self.samples[idx - 1];
        let t = (wavelength - lo.wavelength_nm) / (hi.wavelength_nm - lo.wavelength_nm);
        let (a, b) = (lo.get(which), hi.get(which));
        Ok(a + t * (b - a))
    }

    pub fn transmission_at(&self, wavelength: f64) -> Result<f64> {
        self.value_at(wavelength, Quantity::Transmission)
    }

    pub fn radiance_at(&self, wavelength: f64) -> Result<f64> {
        self.value_at(wavelength, Quantity::Radiance)
    }

    /// ∫ weight(λ)·H(λ) dλ over `[center - width/2, center + width/2]`.
    ///
    /// The integration nodes are the notch endpoints plus every tabulated
    /// wavelength inside the notch. On each segment the radiance is linear,
    /// so Simpson's rule is exact for any weight up to quadratic order.
    pub fn radiance_band_integral<W>(&self, center: f64, width: f64, weight: W) -> Result<f64>
    where
        W: Fn(f64) -> f64,
    {
        if !(width > 0.0) {
            return Err(Error::param(
                "filter width",
                format!("must be > 0, got {width}"),
            ));
        }
        let (a, b) = (center - 0.5 * width, center + 0.5 * width);
        self.check_in_range(a)?;
        self.check_in_range(b)?;

        let first = self.samples.partition_point(|s| s.wavelength_nm <= a);
        let last = self.samples.partition_point(|s| s.wavelength_nm < b);

        let mut x0 = a;
        let mut h0 = self.radiance_at(a)?;
        let mut w0 = weight(a);
        let mut total = 0.0;
        let interior = self.samples[first..last]
            .iter()
            .map(|s| (s.wavelength_nm, s.radiance));
        let end = std::iter::once((b, self.radiance_at(b)?));
        for (x1, h1) in interior.chain(end) {
            let w1 = weight(x1);
            let xm = 0.5 * (x0 + x1);
            let hm = 0.5 * (h0 + h1);
            let wm = weight(xm);
            total += (x1 - x0) / 6.0 * (w0 * h0 + 4.0 * wm * hm + w1 * h1);
            x0 = x1;
            h0 = h1;
            w0 = w1;
        }
        Ok(total)
    }

    /// Writes the profile in canonical units. Values use the shortest
    /// round-trip representation, so re-reading is lossless.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# unit={}", RadianceUnit::WattsPerSquareMetreNm.tag())?;
        writeln!(out, "# source={}", self.source)?;
        writeln!(out, "{}", HEADER.join(","))?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.wavelength_nm, s.transmission, s.radiance)?;
        }
        Ok(())
    }
}

/// Reads a spectral CSV declared in `unit`.
///
/// A `# unit=` header in the stream is optional here, but when present it
/// must agree with `unit`.
pub fn load_profile<R: Read>(source: R, unit: RadianceUnit) -> Result<SpectralProfile> {
    let text = read_all(source)?;
    if let Some(declared) = declared_unit(&text)? {
        if declared != unit {
            return Err(Error::Parse {
                line: 1,
                message: format!("file declares unit {declared} but {unit} was requested"),
            });
        }
    }
    parse_rows(&text, unit, String::from("stream"))
}

fn read_all<R: Read>(reader: R) -> Result<String> {
    let mut text = String::new();
    BufReader::new(reader)
        .read_to_string(&mut text)
        .map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    Ok(text)
}

fn declared_unit(text: &str) -> Result<Option<RadianceUnit>> {
    for line in text.as_bytes().lines() {
        let Ok(line) = line else { break };
        let line = line.trim();
        let Some(comment) = line.strip_prefix('#') else {
            if line.is_empty() {
                continue;
            }
            break;
        };
        if let Some(tag) = comment.trim().strip_prefix("unit=") {
            return tag.parse().map(Some);
        }
    }
    Ok(None)
}

fn validate_sample(row: usize, s: &SpectralSample) -> Result<()> {
    let bad = |message: String| Err(Error::InvalidSample { row, message });
    if !s.wavelength_nm.is_finite() || s.wavelength_nm <= 0.0 {
        return bad(format!(
            "wavelength {} must be finite and > 0",
            s.wavelength_nm
        ));
    }
    if !(0.0..=1.0).contains(&s.transmission) {
        return bad(format!("transmission {} outside [0, 1]", s.transmission));
    }
    if !(s.radiance >= 0.0) || !s.radiance.is_finite() {
        return bad(format!("radiance {} must be finite and >= 0", s.radiance));
    }
    Ok(())
}

fn parse_rows(text: &str, unit: RadianceUnit, source: String) -> Result<SpectralProfile> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != HEADER {
        return Err(Error::Parse {
            line: headers.position().map_or(0, |p| p.line() as usize),
            message: format!(
                "expected header `{}`, found `{}`",
                HEADER.join(","),
                names.join(",")
            ),
        });
    }

    let factor = unit.to_canonical();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("field `{}`: {e}", &record[i]),
            })
        };
        let sample = SpectralSample {
            wavelength_nm: field(0)?,
            transmission: field(1)?,
            radiance: field(2)? * factor,
        };
        validate_sample(line, &sample)?;
        if let Some(prev) = samples.last() {
            let prev: &SpectralSample = prev;
            if sample.wavelength_nm <= prev.wavelength_nm {
                return Err(Error::InvalidSample {
                    row: line,
                    message: format!(
                        "wavelengths must be strictly increasing ({} after {})",
                        sample.wavelength_nm, prev.wavelength_nm
                    ),
                });
            }
        }
        samples.push(sample);
    }
    SpectralProfile::new(samples, source, unit)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_ROWS: &str = "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n\
                              500,0.5,2\n501,0.6,4\n502,0.7,3\n";

    fn three_rows() -> SpectralProfile {
        SpectralProfile::from_csv(THREE_ROWS.as_bytes(), "test").unwrap()
    }

    #[test]
    fn identity_unit_keeps_values() {
        let p = three_rows();
        assert_eq!(p.len(), 3);
        let r: Vec<f64> = p.samples().iter().map(|s| s.radiance).collect();
        assert_eq!(r, vec![2.0, 4.0, 3.0]);
    }

    #[test]
    fn cgs_micron_unit_scales_by_ten() {
        let text = THREE_ROWS.replace("W_m2_sr_nm", "W_cm2_sr_um");
        let p = SpectralProfile::from_csv(text.as_bytes(), "test").unwrap();
        let r: Vec<f64> = p.samples().iter().map(|s| s.radiance).collect();
        assert_eq!(r, vec![20.0, 40.0, 30.0]);
        assert_eq!(p.input_unit(), RadianceUnit::WattsPerSquareCentimetreMicron);
    }

    #[test]
    fn load_profile_without_header_uses_given_unit() {
        let body = "wavelength_nm,transmission,radiance\n500,0.5,1\n501,0.5,1\n";
        let p = load_profile(
            body.as_bytes(),
            RadianceUnit::WattsPerSquareCentimetreMicron,
        )
        .unwrap();
        assert_eq!(p.samples()[0].radiance, 10.0);
        let clash = format!("# unit=W_m2_sr_nm\n{body}");
        assert!(load_profile(
            clash.as_bytes(),
            RadianceUnit::WattsPerSquareCentimetreMicron
        )
        .is_err());
    }

    #[test]
    fn crlf_and_comments_accepted() {
        let text = "# unit=W_m2_sr_nm\r\n# a comment\r\nwavelength_nm,transmission,radiance\r\n\
                    500,0.5,2\r\n# mid comment\r\n501,0.6,4\r\n";
        let p = SpectralProfile::from_csv(text.as_bytes(), "t").unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn transmission_above_one_names_row() {
        let text = "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n500,0.5,2\n501,1.2,4\n";
        let err = SpectralProfile::from_csv(text.as_bytes(), "t").unwrap_err();
        match err {
            Error::InvalidSample { row, message } => {
                assert_eq!(row, 4);
                assert!(message.contains("1.2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n501,0.5,2\n500,0.5,2\n",
            "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n500,0.5,-1\n501,0.5,2\n",
            "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n500,0.5,abc\n501,0.5,2\n",
            "# unit=W_m2_sr_nm\nwavelength_nm,transmission,radiance\n500,0.5,1\n",
            "# unit=W_m2_sr_nm\nlambda,t,h\n500,0.5,1\n501,0.5,1\n",
            "wavelength_nm,transmission,radiance\n500,0.5,1\n501,0.5,1\n",
        ];
        for text in cases {
            assert!(
                SpectralProfile::from_csv(text.as_bytes(), "t").is_err(),
                "{text}"
            );
        }
        let unknown = "# unit=photons\nwavelength_nm,transmission,radiance\n500,0.5,1\n501,0.5,1\n";
        assert!(matches!(
            SpectralProfile::from_csv(unknown.as_bytes(), "t"),
            Err(Error::UnknownUnit(_))
        ));
    }

    #[test]
    fn interpolation_nodes_midpoints_and_range() {
        let p = three_rows();
        assert_eq!(p.radiance_at(501.0).unwrap(), 4.0);
        assert_eq!(p.radiance_at(500.5).unwrap(), 3.0);
        assert_eq!(p.transmission_at(502.0).unwrap(), 0.7);
        assert!(matches!(
            p.radiance_at(499.9),
            Err(Error::OutOfRange { .. })
        ));
        assert!(p.radiance_at(502.1).is_err());
    }

    #[test]
    fn band_integral_constant_and_zero() {
        let samples = (0..=20)
            .map(|i| SpectralSample {
                wavelength_nm: 400.0 + i as f64,
                transmission: 1.0,
                radiance: 0.25,
            })
            .collect();
        let p = SpectralProfile::new(samples, "flat", RadianceUnit::WattsPerSquareMetreNm).unwrap();
        let v = p.radiance_band_integral(410.3, 1.7, |_| 1.0).unwrap();
        assert!((v - 0.25 * 1.7).abs() <= 1e-12 * 0.425);

        let dark: Vec<_> = p
            .samples()
            .iter()
            .map(|s| SpectralSample {
                radiance: 0.0,
                ..*s
            })
            .collect();
        let dark = SpectralProfile::new(dark, "dark", RadianceUnit::WattsPerSquareMetreNm).unwrap();
        assert_eq!(dark.radiance_band_integral(405.0, 3.0, |l| l).unwrap(), 0.0);
    }

    #[test]
    fn band_integral_rejects_out_of_range_notch() {
        let p = three_rows();
        assert!(p.radiance_band_integral(500.2, 1.0, |_| 1.0).is_err());
        assert!(p.radiance_band_integral(501.0, 0.0, |_| 1.0).is_err());
        assert!(p.radiance_band_integral(501.0, 2.0, |_| 1.0).is_ok());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let p = synthetic::demo_profile();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = SpectralProfile::from_csv(buf.as_slice(), p.source()).unwrap();
        assert_eq!(p.samples(), q.samples());
    }
}

//! One-axis parameter sweeps and the exhaustive optimal-wavelength scan.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::ao::{
    equivalent_r0, opd_from_strehl, strehl_from_opd, AoParams, DEFAULT_TRACKING_BANDWIDTH,
};
use crate::error::{ensure_positive, Error, Result};
use crate::optics::{LinkConfig, Strategy};
use crate::qkd::{
    evaluate_with_r0, evaluate_with_strehl, Atmosphere, ClampFlags, LinkBudget, ProtocolParams,
};
use crate::spectral::SpectralProfile;

/// Environment variable capping sweep worker threads.
pub const THREADS_ENV: &str = "FSQKD_THREADS";

/// Significant digits used when serializing numbers.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Formats `x` in scientific notation with [`SIGNIFICANT_DIGITS`] digits.
pub fn format_number(x: f64) -> String {
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
}

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    format_number(x).parse().unwrap_or(x)
}

/// Everything needed to evaluate a link point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub profile: SpectralProfile,
    pub atmosphere: Atmosphere,
    pub link: LinkConfig,
    pub protocol: ProtocolParams,
    pub ao: Option<AoParams>,
}

impl Scenario {
    /// The receiver's 500-nm Fried length, AO-corrected if configured.
    pub fn resolve_r0(&self) -> Result<f64> {
        self.atmosphere
            .resolve_r0(self.ao.as_ref(), self.link.receiver_diameter)
    }

    fn config_for(&self, wavelength_nm: f64, strategy: Strategy) -> LinkConfig {
        LinkConfig {
            signal_wavelength: wavelength_nm,
            strategy,
            ..self.link.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// 500-nm Fried length, m.
    R0,
    /// Strehl at the scenario's signal wavelength.
    Strehl,
    /// Higher-order AO bandwidth, Hz.
    Fc,
    /// Signal wavelength, nm.
    Wavelength,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::R0 => "r0",
            Axis::Strehl => "strehl",
            Axis::Fc => "fc",
            Axis::Wavelength => "wavelength",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "r0" => Ok(Axis::R0),
            "strehl" => Ok(Axis::Strehl),
            "fc" => Ok(Axis::Fc),
            "wavelength" | "lambda" => Ok(Axis::Wavelength),
            other => Err(Error::param(
                "axis",
                format!("expected r0, strehl, fc or wavelength, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

impl FromStr for Spacing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(Spacing::Linear),
            "log" => Ok(Spacing::Log),
            other => Err(Error::param(
                "spacing",
                format!("expected linear or log, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
    /// Wavelengths evaluated at every point (ignored on the wavelength axis).
    pub wavelengths: Vec<f64>,
    pub strategies: Vec<Strategy>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::param(
                "sweep range",
                format!("need finite min < max, got [{}, {}]", self.min, self.max),
            ));
        }
        if self.points < 2 {
            return Err(Error::param("points", "need at least 2"));
        }
        if self.spacing == Spacing::Log && !(self.min > 0.0) {
            return Err(Error::param("sweep range", "log spacing needs min > 0"));
        }
        if self.axis != Axis::Wavelength && self.wavelengths.is_empty() {
            return Err(Error::param("wavelengths", "need at least one"));
        }
        if self.strategies.is_empty() {
            return Err(Error::param("strategies", "need at least one"));
        }
        Ok(())
    }

    /// The axis grid, ascending, with both endpoints exact.
    ///
    /// Interior values are rounded to [`SIGNIFICANT_DIGITS`] so that a
    /// serialized axis value parses back to exactly the evaluated point.
    pub fn grid(&self) -> Vec<f64> {
        let last = self.points - 1;
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == last {
                    return self.max;
                }
                let t = i as f64 / last as f64;
                round_significant(match self.spacing {
                    Spacing::Linear => self.min + t * (self.max - self.min),
                    Spacing::Log => (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp(),
                })
            })
            .collect()
    }
}

/// One evaluated (wavelength, strategy) cell of a sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub budget: LinkBudget,
    /// Set when the point failed; the budget then carries `POINT_ERROR`.
    pub error: Option<String>,
}

impl PointResult {
    fn from_result(r: Result<LinkBudget>, wavelength_nm: f64, strategy: Strategy, r0: f64) -> Self {
        match r {
            Ok(budget) => PointResult {
                budget,
                error: None,
            },
            Err(e) => PointResult {
                budget: failed_budget(wavelength_nm, strategy, r0),
                error: Some(e.to_string()),
            },
        }
    }
}

fn failed_budget(wavelength_nm: f64, strategy: Strategy, r0: f64) -> LinkBudget {
    let nan = f64::NAN;
    LinkBudget {
        wavelength_nm,
        r0,
        strategy,
        strehl: nan,
        fov: nan,
        eta_geo: nan,
        eta_trans: nan,
        eta_fs: nan,
        eta_total: nan,
        n_b: nan,
        y0: nan,
        q_mu: nan,
        q_nu: nan,
        e_mu: nan,
        e_nu: nan,
        q1: nan,
        y1: nan,
        e1: nan,
        snr_mu: nan,
        p_kb: nan,
        r_kb: 0.0,
        flags: ClampFlags::POINT_ERROR,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    /// Wavelength-major, then strategy, in the order requested.
    pub points: Vec<PointResult>,
}

/// Evaluates a single sweep row at axis value `x`.
pub fn evaluate_point(spec: &SweepSpec, scenario: &Scenario, x: f64) -> SweepRow {
    let wavelengths: Vec<f64> = match spec.axis {
        Axis::Wavelength => vec![x],
        _ => spec.wavelengths.clone(),
    };
    let d = scenario.link.receiver_diameter;

    // Strehl axis: hold the OPD fixed, report each wavelength's Strehl.
    let (r0, opd) = match spec.axis {
        Axis::R0 => (Ok(x), None),
        Axis::Strehl => match opd_from_strehl(x, scenario.link.signal_wavelength) {
            Ok(opd) => (Ok(equivalent_r0(opd, d)), Some(opd)),
            Err(e) => (Err(e), None),
        },
        Axis::Fc => {
            let tracking = scenario
                .ao
                .map_or(DEFAULT_TRACKING_BANDWIDTH, |a| a.tracking_bandwidth);
            let ao = AoParams {
                tracking_bandwidth: tracking,
                bandwidth: x,
            };
            (scenario.atmosphere.resolve_r0(Some(&ao), d), None)
        }
        Axis::Wavelength => (scenario.resolve_r0(), None),
    };

    let mut points = Vec::with_capacity(wavelengths.len() * spec.strategies.len());
    for &l in &wavelengths {
        for &s in &spec.strategies {
            let cfg = scenario.config_for(l, s);
            let result = match (&r0, opd) {
                (Err(e), _) => Err(Error::Domain(e.to_string())),
                (Ok(r0), Some(opd)) => evaluate_with_strehl(
                    &scenario.profile,
                    *r0,
                    strehl_from_opd(opd, l),
                    &cfg,
                    &scenario.protocol,
                ),
                (Ok(r0), None) => {
                    evaluate_with_r0(&scenario.profile, *r0, &cfg, &scenario.protocol)
                }
            };
            let r0v = r0.as_ref().copied().unwrap_or(f64::NAN);
            points.push(PointResult::from_result(result, l, s, r0v));
        }
    }
    SweepRow {
        axis_value: x,
        points,
    }
}

/// Evaluates every grid point; per-point failures become flagged cells.
/// Rows are ordered by axis value whatever the execution schedule.
pub fn run_sweep(spec: &SweepSpec, scenario: &Scenario) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    scenario.link.validate()?;
    scenario.protocol.validate()?;
    Ok(spec
        .grid()
        .into_par_iter()
        .map(|x| evaluate_point(spec, scenario, x))
        .collect())
}

/// Serial reference implementation of [`run_sweep`].
pub fn run_sweep_serial(spec: &SweepSpec, scenario: &Scenario) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    scenario.link.validate()?;
    scenario.protocol.validate()?;
    Ok(spec
        .grid()
        .into_iter()
        .map(|x| evaluate_point(spec, scenario, x))
        .collect())
}

/// Thread pool sized by `FSQKD_THREADS`, if set.
pub fn thread_pool_from_env() -> Result<Option<rayon::ThreadPool>> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::param(
            "FSQKD_THREADS",
            format!("expected a positive integer, got `{v}`"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::param("FSQKD_THREADS", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimum {
    Found {
        wavelength_nm: f64,
        r_kb: f64,
    },
    /// Every scanned wavelength gave a zero key rate.
    NoKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavelengthScan {
    pub step: f64,
    pub rows: Vec<PointResult>,
    pub optimum: Optimum,
}

/// Exhaustive turbulence-limited scan of `[min, max]` in `step`-nm steps.
///
/// The filter width is `scenario.link.filter_width`; the step must not
/// exceed half of it, and the range must keep the whole filter notch inside
/// the profile. Ties go to the shorter wavelength.
pub fn optimize_wavelength(
    scenario: &Scenario,
    min: f64,
    max: f64,
    step: f64,
) -> Result<WavelengthScan> {
    ensure_positive("grid step", step)?;
    let width = scenario.link.filter_width;
    if step > 0.5 * width * (1.0 + 1e-12) {
        return Err(Error::param(
            "grid step",
            format!(
                "must be <= half the filter width ({}), got {step}",
                0.5 * width
            ),
        ));
    }
    if !(min <= max) {
        return Err(Error::param(
            "search range",
            format!("need min <= max, got [{min}, {max}]"),
        ));
    }
    let (lo, hi) = scenario.profile.range();
    let (lo, hi) = (lo + 0.5 * width, hi - 0.5 * width);
    if min < lo - 1e-9 || max > hi + 1e-9 {
        return Err(Error::param(
            "search range",
            format!("[{min}, {max}] nm leaves the usable profile range [{lo}, {hi}] nm"),
        ));
    }
    scenario.link.validate()?;
    scenario.protocol.validate()?;
    let r0 = scenario.resolve_r0()?;

    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    let rows: Vec<PointResult> = (0..count)
        .into_par_iter()
        .map(|i| {
            let l = round_significant(min + step * i as f64).min(max);
            let cfg = scenario.config_for(l, Strategy::TurbulenceLimited);
            let r = evaluate_with_r0(&scenario.profile, r0, &cfg, &scenario.protocol);
            PointResult::from_result(r, l, Strategy::TurbulenceLimited, r0)
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for p in &rows {
        let r = p.budget.r_kb;
        if r > 0.0 && best.is_none_or(|(_, b)| r > b) {
            best = Some((p.budget.wavelength_nm, r));
        }
    }
    let optimum = match best {
        Some((wavelength_nm, r_kb)) => Optimum::Found {
            wavelength_nm,
            r_kb,
        },
        None => Optimum::NoKey,
    };
    Ok(WavelengthScan {
        step,
        rows,
        optimum,
    })
}

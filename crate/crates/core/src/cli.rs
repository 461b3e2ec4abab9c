//! Command-line front end: scenario files, subcommands and CSV emission.
//!
//! Data goes to the output writer; warnings and errors go to the error
//! writer. Exit codes: 0 success (including no-key results), 1 validation
//! failure, 2 configuration error, 3 domain error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ini::{Ini, Properties};

use crate::ao::AoParams;
use crate::error::{Error, Result};
use crate::optics::{LinkConfig, Strategy};
use crate::qkd::{Atmosphere, LinkBudget, ProtocolParams};
use crate::spectral::{load_profile, synthetic, RadianceUnit, SpectralProfile};
use crate::sweep::{
    format_number, optimize_wavelength, run_sweep, thread_pool_from_env, Axis, Optimum,
    PointResult, Scenario, Spacing, SweepRow, SweepSpec,
};
use crate::turbulence::{
    BuftonWind, Cn2Profile, Greenwood, SiteModel, WindModel, REFERENCE_WAVELENGTH_NM,
};
use crate::validation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;

/// Column order of every emitted table.
pub const CSV_COLUMNS: [&str; 22] = [
    "axis_value",
    "lambda_nm",
    "strategy",
    "r0_m",
    "strehl",
    "omega_fov_sr",
    "eta_geo",
    "eta_trans",
    "eta_fs",
    "eta_total",
    "n_b",
    "y0",
    "q_mu",
    "q_nu",
    "e_mu",
    "q_1",
    "y_1",
    "e_1",
    "snr_mu",
    "p_kb_raw",
    "r_kb_hz",
    "flags",
];

#[derive(Debug, Parser)]
#[command(
    name = "fsqkd",
    version,
    about = "Daytime satellite-to-ground QKD link calculator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate single link points and report every budget quantity.
    Compute(ComputeArgs),
    /// Sweep one parameter and emit a CSV table.
    Sweep(SweepArgs),
    /// Scan wavelengths for the best turbulence-limited key rate.
    Optimize(OptimizeArgs),
    /// Run the built-in validation suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyChoice {
    Dl,
    Tl,
    Both,
}

impl StrategyChoice {
    fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyChoice::Dl => vec![Strategy::DiffractionLimited],
            StrategyChoice::Tl => vec![Strategy::TurbulenceLimited],
            StrategyChoice::Both => Strategy::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Human,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (INI). Built-in defaults and the bundled profile
    /// are used when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Signal wavelengths, nm (comma separated).
    #[arg(long = "lambda", value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyChoice>,
    /// Write the table here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// r0, strehl, fc or wavelength.
    #[arg(long)]
    pub axis: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// linear or log.
    #[arg(long)]
    pub spacing: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Search range start, nm.
    #[arg(long)]
    pub min: Option<f64>,
    /// Search range end, nm.
    #[arg(long)]
    pub max: Option<f64>,
    /// Grid step, nm (default: half the filter width).
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = validation::DEFAULT_SEED)]
    pub seed: u64,
    /// Pulses per Monte-Carlo cross-check.
    #[arg(long, default_value_t = validation::DEFAULT_PULSES)]
    pub pulses: u64,
}

/// Sweep and optimizer settings read from `[sweep]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSettings {
    pub axis: Option<Axis>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    pub spacing: Option<Spacing>,
    pub wavelengths: Vec<f64>,
    pub strategies: Option<Vec<Strategy>>,
    pub optimize_min: Option<f64>,
    pub optimize_max: Option<f64>,
    pub optimize_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sweep: SweepSettings,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("transmitter", &["diameter_m", "range_m", "wavelength_nm"]),
    (
        "receiver",
        &[
            "diameter_m",
            "focal_length_m",
            "eta_spec",
            "eta_rec",
            "eta_det",
            "dark_count_hz",
            "gate_s",
            "filter_nm",
            "strategy",
        ],
    ),
    (
        "protocol",
        &[
            "mu",
            "nu",
            "e0",
            "ed",
            "f_ec",
            "decoy_fraction",
            "pulse_rate_hz",
        ],
    ),
    (
        "site",
        &[
            "profile",
            "profile_unit",
            "r0_m",
            "greenwood_hz",
            "tracking_greenwood_hz",
            "cn2_model",
            "cn2_table",
            "hv_ground_strength",
            "hv_rms_wind_mps",
            "cn2_scale",
            "zenith_deg",
            "source_altitude_m",
            "ground_wind_mps",
            "bufton_peak_mps",
            "bufton_altitude_m",
            "bufton_width_m",
            "slew_rate_rad_s",
            "quadrature_intervals",
        ],
    ),
    ("ao", &["fc_hz", "ftc_hz"]),
    (
        "sweep",
        &[
            "axis",
            "min",
            "max",
            "points",
            "spacing",
            "wavelengths_nm",
            "strategy",
            "optimize_min_nm",
            "optimize_max_nm",
            "optimize_step_nm",
        ],
    ),
];

const SITE_MODEL_KEYS: [&str; 12] = [
    "cn2_model",
    "cn2_table",
    "hv_ground_strength",
    "hv_rms_wind_mps",
    "cn2_scale",
    "zenith_deg",
    "source_altitude_m",
    "ground_wind_mps",
    "bufton_peak_mps",
    "bufton_altitude_m",
    "bufton_width_m",
    "slew_rate_rad_s",
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl Section<'_> {
    fn has(&self, key: &str) -> bool {
        self.props.is_some_and(|p| p.contains_key(key))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.str(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::Scenario(format!("[{}] {key}: `{v}` is not a number", self.name))
                })
            })
            .transpose()
    }

    fn set(&self, key: &str, target: &mut f64) -> Result<()> {
        if let Some(v) = self.f64(key)? {
            *target = v;
        }
        Ok(())
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.str(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    Error::Scenario(format!("[{}] {key}: `{v}` is not a count", self.name))
                })
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let Some(v) = self.str(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(|x| {
                x.trim().parse::<f64>().map_err(|_| {
                    Error::Scenario(format!("[{}] {key}: `{x}` is not a number", self.name))
                })
            })
            .collect()
    }
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s.trim().eq_ignore_ascii_case("both") {
        Ok(Strategy::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_profile_file(path: &Path, unit: Option<RadianceUnit>) -> Result<SpectralProfile> {
    let text = read_file(path)?;
    let source = path.display().to_string();
    let annotate = |e: Error| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{source}: {message}"),
        },
        Error::InvalidSample { row, message } => Error::InvalidSample {
            row,
            message: format!("{source}: {message}"),
        },
        other => other,
    };
    match unit {
        Some(u) => load_profile(text.as_bytes(), u).map_err(annotate),
        None => SpectralProfile::from_csv(text.as_bytes(), source.clone()).map_err(annotate),
    }
}

/// Parses a scenario; relative paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<LoadedScenario> {
    let ini = Ini::load_from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    if !ini.general_section().is_empty() {
        return Err(Error::Scenario("keys must live inside a [section]".into()));
    }
    for (name, props) in ini.iter() {
        let Some(name) = name else { continue };
        let Some((_, allowed)) = SECTIONS.iter().find(|(s, _)| *s == name) else {
            return Err(Error::Scenario(format!("unknown section [{name}]")));
        };
        for (k, _) in props.iter() {
            if !allowed.contains(&k) {
                return Err(Error::Scenario(format!("[{name}] unknown key `{k}`")));
            }
        }
    }
    let sec = |name: &'static str| Section {
        name,
        props: ini.section(Some(name)),
    };
    let (tx, rx, proto, site, ao, sweep) = (
        sec("transmitter"),
        sec("receiver"),
        sec("protocol"),
        sec("site"),
        sec("ao"),
        sec("sweep"),
    );

    let mut link = LinkConfig::default();
    tx.set("diameter_m", &mut link.transmitter_diameter)?;
    tx.set("range_m", &mut link.range)?;
    tx.set("wavelength_nm", &mut link.signal_wavelength)?;
    rx.set("diameter_m", &mut link.receiver_diameter)?;
    link.focal_length = rx.f64("focal_length_m")?;
    rx.set("eta_spec", &mut link.eta_spec)?;
    rx.set("eta_rec", &mut link.eta_rec)?;
    rx.set("eta_det", &mut link.eta_det)?;
    rx.set("dark_count_hz", &mut link.dark_count_rate)?;
    rx.set("gate_s", &mut link.gate_width)?;
    rx.set("filter_nm", &mut link.filter_width)?;
    if let Some(s) = rx.str("strategy") {
        link.strategy = s.parse()?;
    }
    link.validate()?;

    let mut protocol = ProtocolParams::default();
    proto.set("mu", &mut protocol.mu)?;
    proto.set("nu", &mut protocol.nu)?;
    proto.set("e0", &mut protocol.e0)?;
    proto.set("ed", &mut protocol.ed)?;
    proto.set("f_ec", &mut protocol.f_ec)?;
    proto.set("decoy_fraction", &mut protocol.decoy_fraction)?;
    proto.set("pulse_rate_hz", &mut protocol.pulse_rate)?;
    protocol.validate()?;

    let profile = match site.str("profile") {
        None | Some("bundled") => synthetic::bundled_profile(),
        Some(p) => {
            let unit = site.str("profile_unit").map(str::parse).transpose()?;
            load_profile_file(&base_dir.join(p), unit)?
        }
    };

    let atmosphere = if let Some(r0) = site.f64("r0_m")? {
        if let Some(k) = SITE_MODEL_KEYS.iter().find(|k| site.has(k)) {
            return Err(Error::Scenario(format!(
                "[site] r0_m conflicts with site-model key `{k}`; give one or the other"
            )));
        }
        let greenwood = match (
            site.f64("greenwood_hz")?,
            site.f64("tracking_greenwood_hz")?,
        ) {
            (Some(higher_order), Some(tracking)) => Some(Greenwood {
                higher_order,
                tracking,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Scenario(
                    "[site] greenwood_hz and tracking_greenwood_hz go together".into(),
                ))
            }
        };
        Atmosphere::Fried { r0, greenwood }
    } else {
        if site.has("greenwood_hz") || site.has("tracking_greenwood_hz") {
            return Err(Error::Scenario(
                "[site] Greenwood frequencies are derived from the site model; give them only with r0_m".into(),
            ));
        }
        Atmosphere::Site(site_model(&site, base_dir, link.range)?)
    };

    let ao = if ao.props.is_some() {
        let mut p = AoParams::preset(200.0);
        ao.set("fc_hz", &mut p.bandwidth)?;
        ao.set("ftc_hz", &mut p.tracking_bandwidth)?;
        p.validate()?;
        Some(p)
    } else {
        None
    };

    let settings = SweepSettings {
        axis: sweep.str("axis").map(str::parse).transpose()?,
        min: sweep.f64("min")?,
        max: sweep.f64("max")?,
        points: sweep.usize("points")?,
        spacing: sweep.str("spacing").map(str::parse).transpose()?,
        wavelengths: sweep.list("wavelengths_nm")?,
        strategies: sweep.str("strategy").map(parse_strategies).transpose()?,
        optimize_min: sweep.f64("optimize_min_nm")?,
        optimize_max: sweep.f64("optimize_max_nm")?,
        optimize_step: sweep.f64("optimize_step_nm")?,
    };

    Ok(LoadedScenario {
        scenario: Scenario {
            profile,
            atmosphere,
            link,
            protocol,
            ao,
        },
        sweep: settings,
    })
}

fn site_model(site: &Section<'_>, base_dir: &Path, range: f64) -> Result<SiteModel> {
    let mut m = SiteModel::leo_downlink_default();
    if let Some(a) = site.f64("source_altitude_m")? {
        m.source_altitude = a;
    } else if range > 0.0 {
        m.source_altitude = range;
    }
    // slew follows the orbit unless given explicitly
    m.wind = WindModel::leo_zenith_pass(m.source_altitude);
    m.cn2 = match site.str("cn2_model").unwrap_or("hv57") {
        "hv57" => {
            let (mut a, mut v) = (1.7e-14, 21.0);
            site.set("hv_ground_strength", &mut a)?;
            site.set("hv_rms_wind_mps", &mut v)?;
            Cn2Profile::HufnagelValley {
                ground_strength: a,
                rms_wind: v,
            }
        }
        "table" => {
            let path = site.str("cn2_table").ok_or_else(|| {
                Error::Scenario("[site] cn2_model = table needs cn2_table".into())
            })?;
            let path = base_dir.join(path);
            Cn2Profile::from_csv(read_file(&path)?.as_bytes())?
        }
        other => {
            return Err(Error::Scenario(format!(
                "[site] cn2_model: expected hv57 or table, got `{other}`"
            )))
        }
    };
    site.set("cn2_scale", &mut m.cn2_scale)?;
    if let Some(z) = site.f64("zenith_deg")? {
        m.zenith_angle = z.to_radians();
    }
    let mut b = BuftonWind::default();
    site.set("bufton_peak_mps", &mut b.peak_speed)?;
    site.set("bufton_altitude_m", &mut b.peak_altitude)?;
    site.set("bufton_width_m", &mut b.width)?;
    m.wind.bufton = b;
    site.set("ground_wind_mps", &mut m.wind.ground_speed)?;
    site.set("slew_rate_rad_s", &mut m.wind.slew_rate)?;
    if let Some(n) = site.usize("quadrature_intervals")? {
        m.quadrature_intervals = n;
    }
    m.validate()?;
    Ok(m)
}

/// Loads a scenario file, or the built-in defaults when `path` is `None`.
pub fn load_scenario(path: Option<&Path>) -> Result<LoadedScenario> {
    match path {
        None => parse_scenario("", Path::new(".")),
        Some(p) => {
            let text = read_file(p)?;
            let base = p.parent().unwrap_or(Path::new("."));
            parse_scenario(&text, base)
        }
    }
}

/// One CSV record for `budget` in [`CSV_COLUMNS`] order.
pub fn csv_record(axis_value: f64, b: &LinkBudget) -> Vec<String> {
    let n = format_number;
    vec![
        n(axis_value),
        n(b.wavelength_nm),
        b.strategy.to_string(),
        n(b.r0),
        n(b.strehl),
        n(b.fov),
        n(b.eta_geo),
        n(b.eta_trans),
        n(b.eta_fs),
        n(b.eta_total),
        n(b.n_b),
        n(b.y0),
        n(b.q_mu),
        n(b.q_nu),
        n(b.e_mu),
        n(b.q1),
        n(b.y1),
        n(b.e1),
        n(b.snr_mu),
        n(b.p_kb),
        n(b.r_kb),
        b.flags.to_token(),
    ]
}

fn write_table<'a, W: Write>(
    out: W,
    metadata: &[(String, String)],
    rows: impl Iterator<Item = (f64, &'a LinkBudget)>,
) -> io::Result<()> {
    let mut out = out;
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for (x, b) in rows {
        w.write_record(csv_record(x, b))?;
    }
    w.flush()
}

fn human_report<W: Write>(
    mut out: W,
    scenario: &Scenario,
    budgets: &[LinkBudget],
) -> io::Result<()> {
    let p = &scenario.profile;
    let (lo, hi) = p.range();
    writeln!(
        out,
        "profile            {} ({} samples, {lo}-{hi} nm)",
        p.source(),
        p.len()
    )?;
    if let Some(ao) = &scenario.ao {
        writeln!(
            out,
            "adaptive optics    f_c {} Hz, f_tc {} Hz",
            ao.bandwidth, ao.tracking_bandwidth
        )?;
    }
    if let Atmosphere::Site(site) = &scenario.atmosphere {
        if let Ok(m) = site.moments() {
            writeln!(
                out,
                "site (500 nm)      r0 {:.4} m, f_G {:.2} Hz, f_TG {:.2} Hz",
                m.fried_length(REFERENCE_WAVELENGTH_NM),
                m.greenwood_frequency(REFERENCE_WAVELENGTH_NM),
                m.tracking_greenwood_frequency(
                    REFERENCE_WAVELENGTH_NM,
                    scenario.link.receiver_diameter
                ),
            )?;
        }
    }
    let r0_label = if scenario.ao.is_some() {
        "r0 effective (500 nm)"
    } else {
        "r0 (500 nm)"
    };
    for b in budgets {
        let n = format_number;
        writeln!(out)?;
        writeln!(
            out,
            "lambda {} nm, strategy {}",
            b.wavelength_nm, b.strategy
        )?;
        let lines: [(&str, String, &str); 22] = [
            (r0_label, n(b.r0), "m"),
            ("strehl", n(b.strehl), ""),
            ("field of view", n(b.fov), "sr"),
            ("eta_geo", n(b.eta_geo), ""),
            ("eta_trans", n(b.eta_trans), ""),
            ("eta_fs", n(b.eta_fs), ""),
            ("eta_total", n(b.eta_total), ""),
            ("background photons", n(b.n_b), "per gate"),
            ("Y0", n(b.y0), "per gate"),
            ("Q_mu", n(b.q_mu), "per pulse"),
            ("Q_nu", n(b.q_nu), "per pulse"),
            ("E_mu", n(b.e_mu), ""),
            ("E_nu", n(b.e_nu), ""),
            ("Q_1", n(b.q1), "per pulse"),
            ("Y_1", n(b.y1), ""),
            ("e_1", n(b.e1), ""),
            ("SNR_mu", n(b.snr_mu), ""),
            ("P_KB (raw)", n(b.p_kb), "per pulse"),
            ("R_KB", n(b.r_kb), "Hz"),
            ("flags", b.flags.to_token(), ""),
            ("signal wavelength", n(b.wavelength_nm), "nm"),
            ("strategy", b.strategy.to_string(), ""),
        ];
        for (label, value, unit) in lines {
            writeln!(
                out,
                "{}",
                format!("  {label:<22} {value} {unit}").trim_end()
            )?;
        }
    }
    Ok(())
}

fn strategies(
    common: &CommonArgs,
    scenario: &Scenario,
    settings: Option<&SweepSettings>,
) -> Vec<Strategy> {
    if let Some(c) = common.strategy {
        return c.strategies();
    }
    settings
        .and_then(|s| s.strategies.clone())
        .unwrap_or_else(|| vec![scenario.link.strategy])
}

fn wavelengths(
    common: &CommonArgs,
    scenario: &Scenario,
    settings: Option<&SweepSettings>,
) -> Vec<f64> {
    if !common.lambda.is_empty() {
        return common.lambda.clone();
    }
    match settings {
        Some(s) if !s.wavelengths.is_empty() => s.wavelengths.clone(),
        _ => vec![scenario.link.signal_wavelength],
    }
}

fn emit<W: Write>(
    out_path: &Option<PathBuf>,
    stdout: &mut W,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    match out_path {
        Some(p) => {
            let file = fs::File::create(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            let mut w = io::BufWriter::new(file);
            f(&mut w)
                .and_then(|_| w.flush())
                .map_err(|source| Error::Io {
                    path: p.clone(),
                    source,
                })
        }
        None => f(stdout).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DOMAIN
    }
}

fn report_point_errors<E: Write>(err: &mut E, axis: &str, x: f64, points: &[PointResult]) {
    for p in points {
        if let Some(msg) = &p.error {
            let _ = writeln!(
                err,
                "warning: {axis}={} lambda={} strategy={}: {msg}",
                format_number(x),
                p.budget.wavelength_nm,
                p.budget.strategy
            );
        }
    }
}

fn cmd_compute<W: Write, E: Write>(args: &ComputeArgs, out: &mut W, _err: &mut E) -> Result<()> {
    let loaded = load_scenario(args.common.scenario.as_deref())?;
    let sc = &loaded.scenario;
    let r0 = sc.resolve_r0()?;
    let mut budgets = Vec::new();
    for l in wavelengths(&args.common, sc, None) {
        for s in strategies(&args.common, sc, None) {
            let cfg = LinkConfig {
                signal_wavelength: l,
                strategy: s,
                ..sc.link.clone()
            };
            budgets.push(crate::qkd::evaluate_with_r0(
                &sc.profile,
                r0,
                &cfg,
                &sc.protocol,
            )?);
        }
    }
    match args.common.format.unwrap_or(Format::Human) {
        Format::Human => emit(&args.common.out, out, |w| human_report(w, sc, &budgets)),
        Format::Csv => emit(&args.common.out, out, |w| {
            write_table(w, &[], budgets.iter().map(|b| (b.wavelength_nm, b)))
        }),
    }
}

/// Resolves the sweep specification from flags, then `[sweep]`, then
/// per-axis defaults.
pub fn sweep_spec(args: &SweepArgs, loaded: &LoadedScenario) -> Result<SweepSpec> {
    let s = &loaded.sweep;
    let sc = &loaded.scenario;
    let axis = match &args.axis {
        Some(a) => a.parse()?,
        None => s.axis.unwrap_or(Axis::R0),
    };
    let (dmin, dmax) = match axis {
        Axis::R0 => (0.05, 1.0),
        Axis::Strehl => (0.05, 1.0),
        Axis::Fc => (15.0, 500.0),
        Axis::Wavelength => {
            let (lo, hi) = sc.profile.range();
            let half = 0.5 * sc.link.filter_width;
            (lo + half, hi - half)
        }
    };
    let spacing = match &args.spacing {
        Some(v) => v.parse()?,
        None => s.spacing.unwrap_or_default(),
    };
    Ok(SweepSpec {
        axis,
        min: args.min.or(s.min).unwrap_or(dmin),
        max: args.max.or(s.max).unwrap_or(dmax),
        points: args.points.or(s.points).unwrap_or(20),
        spacing,
        wavelengths: wavelengths(&args.common, sc, Some(s)),
        strategies: strategies(&args.common, sc, Some(s)),
    })
}

fn cmd_sweep<W: Write, E: Write>(args: &SweepArgs, out: &mut W, err: &mut E) -> Result<()> {
    let loaded = load_scenario(args.common.scenario.as_deref())?;
    let spec = sweep_spec(args, &loaded)?;
    let sc = &loaded.scenario;
    let rows: Vec<SweepRow> = match thread_pool_from_env()? {
        Some(pool) => pool.install(|| run_sweep(&spec, sc))?,
        None => run_sweep(&spec, sc)?,
    };
    for row in &rows {
        report_point_errors(err, spec.axis.as_str(), row.axis_value, &row.points);
    }
    let metadata = vec![
        ("axis".to_string(), spec.axis.to_string()),
        (
            "spacing".into(),
            match spec.spacing {
                Spacing::Linear => "linear".into(),
                Spacing::Log => "log".into(),
            },
        ),
        ("points".into(), spec.points.to_string()),
        ("profile".into(), sc.profile.source().to_string()),
    ];
    let flat = rows
        .iter()
        .flat_map(|r| r.points.iter().map(move |p| (r.axis_value, &p.budget)));
    match args.common.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(&args.common.out, out, |w| write_table(w, &metadata, flat)),
        Format::Human => {
            let budgets: Vec<LinkBudget> = rows
                .iter()
                .flat_map(|r| r.points.iter().map(|p| p.budget))
                .collect();
            emit(&args.common.out, out, |w| human_report(w, sc, &budgets))
        }
    }
}

fn cmd_optimize<W: Write, E: Write>(args: &OptimizeArgs, out: &mut W, err: &mut E) -> Result<()> {
    let loaded = load_scenario(args.common.scenario.as_deref())?;
    let sc = &loaded.scenario;
    let s = &loaded.sweep;
    let half = 0.5 * sc.link.filter_width;
    let (lo, hi) = sc.profile.range();
    let min = args.min.or(s.optimize_min).unwrap_or(lo + half);
    let max = args.max.or(s.optimize_max).unwrap_or(hi - half);
    let step = args.step.or(s.optimize_step).unwrap_or(half);
    let scan = match thread_pool_from_env()? {
        Some(pool) => pool.install(|| optimize_wavelength(sc, min, max, step))?,
        None => optimize_wavelength(sc, min, max, step)?,
    };
    for p in &scan.rows {
        report_point_errors(
            err,
            "wavelength",
            p.budget.wavelength_nm,
            std::slice::from_ref(p),
        );
    }
    let (opt_l, opt_r) = match scan.optimum {
        Optimum::Found {
            wavelength_nm,
            r_kb,
        } => (format_number(wavelength_nm), format_number(r_kb)),
        Optimum::NoKey => ("none".to_string(), format_number(0.0)),
    };
    let metadata = vec![
        ("axis".to_string(), "wavelength".to_string()),
        ("strategy".into(), "tl".into()),
        (
            "filter_width_nm".into(),
            format_number(sc.link.filter_width),
        ),
        ("grid_step_nm".into(), format_number(scan.step)),
        ("search_min_nm".into(), format_number(min)),
        ("search_max_nm".into(), format_number(max)),
        ("optimum_nm".into(), opt_l.clone()),
        ("optimum_r_kb_hz".into(), opt_r.clone()),
        ("profile".into(), sc.profile.source().to_string()),
    ];
    let table = |w: &mut dyn Write| {
        write_table(
            w,
            &metadata,
            scan.rows
                .iter()
                .map(|p| (p.budget.wavelength_nm, &p.budget)),
        )
    };
    let report = |w: &mut dyn Write| -> io::Result<()> {
        match scan.optimum {
            Optimum::Found { wavelength_nm, r_kb } => writeln!(
                w,
                "optimal wavelength {wavelength_nm} nm, R_KB {} Hz (TL, filter {} nm, step {} nm, {} points)",
                format_number(r_kb),
                sc.link.filter_width,
                scan.step,
                scan.rows.len()
            ),
            Optimum::NoKey => writeln!(
                w,
                "no key possible over [{min}, {max}] nm (TL, filter {} nm, step {} nm)",
                sc.link.filter_width, scan.step
            ),
        }
    };
    match (
        args.common.format.unwrap_or(Format::Human),
        &args.common.out,
    ) {
        (Format::Csv, _) => emit(&args.common.out, out, table),
        (Format::Human, Some(_)) => {
            emit(&args.common.out, out, table)?;
            emit(&None, out, report)
        }
        (Format::Human, None) => emit(&None, out, report),
    }
}

fn cmd_validate<W: Write>(args: &ValidateArgs, out: &mut W) -> Result<bool> {
    let checks = validation::run_all(args.seed, args.pulses);
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        writeln!(out, "{c}").map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(
        out,
        "{} checks, {} failed (rng {}, seed {}, {} pulses)",
        checks.len(),
        failed,
        crate::montecarlo::RNG_NAME,
        args.seed,
        args.pulses
    )
    .map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })?;
    Ok(ok)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run<W: Write, E: Write>(cli: &Cli, out: &mut W, err: &mut E) -> i32 {
    let result = match &cli.command {
        Command::Compute(a) => cmd_compute(a, out, err).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(a, out, err).map(|_| EXIT_OK),
        Command::Optimize(a) => cmd_optimize(a, out, err).map(|_| EXIT_OK),
        Command::Validate(a) => {
            cmd_validate(a, out).map(|ok| if ok { EXIT_OK } else { EXIT_VALIDATION })
        }
    };
    match result {
        Ok(code) => code,
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedScenario> {
        parse_scenario(text, Path::new("."))
    }

    #[test]
    fn empty_scenario_uses_defaults() {
        let l = parse("").unwrap();
        assert_eq!(l.scenario.link, LinkConfig::default());
        assert_eq!(l.scenario.protocol, ProtocolParams::default());
        assert!(matches!(l.scenario.atmosphere, Atmosphere::Site(_)));
        assert!(l.scenario.ao.is_none());
        assert_eq!(l.scenario.profile.source(), "synthetic-demo");
    }

    #[test]
    fn full_scenario() {
        let l = parse(
            "[transmitter]\ndiameter_m = 0.2\nwavelength_nm = 430.886\n\
             [receiver]\nstrategy = dl\nfilter_nm = 0.5\n\
             [protocol]\nmu = 0.6\n\
             [site]\nr0_m = 0.1\ngreenwood_hz = 301\ntracking_greenwood_hz = 43\n\
             [ao]\nfc_hz = 130\n\
             [sweep]\naxis = fc\nmin = 20\nmax = 400\npoints = 4\nspacing = log\nwavelengths_nm = 430.886, 1549.91\nstrategy = both\n",
        )
        .unwrap();
        let sc = &l.scenario;
        assert_eq!(sc.link.transmitter_diameter, 0.2);
        assert_eq!(sc.link.strategy, Strategy::DiffractionLimited);
        assert_eq!(sc.protocol.mu, 0.6);
        assert_eq!(sc.ao, Some(AoParams::preset(130.0)));
        assert!(matches!(sc.atmosphere, Atmosphere::Fried { r0, greenwood: Some(_) } if r0 == 0.1));
        assert_eq!(l.sweep.axis, Some(Axis::Fc));
        assert_eq!(l.sweep.wavelengths, vec![430.886, 1549.91]);
        assert_eq!(l.sweep.strategies, Some(Strategy::ALL.to_vec()));
        assert_eq!(l.sweep.spacing, Some(Spacing::Log));
    }

    #[test]
    fn site_model_keys() {
        let l = parse("[site]\ncn2_scale = 2\nzenith_deg = 60\n").unwrap();
        let Atmosphere::Site(m) = &l.scenario.atmosphere else {
            panic!()
        };
        assert_eq!(m.cn2_scale, 2.0);
        assert!((m.zenith_angle - 60f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn scenario_errors_are_config_errors() {
        for text in [
            "[site]\nr0_m = 0.1\ncn2_scale = 2\n",
            "[site]\ngreenwood_hz = 301\n",
            "[site]\nr0_m = 0.1\ngreenwood_hz = 301\n",
            "[bogus]\nx = 1\n",
            "[receiver]\ndiameter = 1\n",
            "[receiver]\ndiameter_m = wide\n",
            "top = 1\n",
            "[protocol]\nnu = 0.9\n",
            "[site]\nprofile = /nonexistent/profile.csv\n",
            "[site]\ncn2_model = table\n",
        ] {
            let e = parse(text).unwrap_err();
            assert!(e.is_config(), "{text}: {e}");
        }
        let e = parse("[site]\nprofile = /nonexistent/profile.csv\n").unwrap_err();
        assert!(e.to_string().contains("/nonexistent/profile.csv"));
    }

    #[test]
    fn record_has_every_column() {
        let l = parse("[site]\nr0_m = 0.5\n").unwrap();
        let sc = &l.scenario;
        let b = crate::qkd::evaluate_with_r0(&sc.profile, 0.5, &sc.link, &sc.protocol).unwrap();
        let rec = csv_record(0.5, &b);
        assert_eq!(rec.len(), CSV_COLUMNS.len());
        assert_eq!(rec[0], "5.00000000e-1");
        assert_eq!(rec[2], "tl");
    }
}

//! Built-in validation suite behind `fsqkd validate`.
//!
//! Every check uses built-in presets and the bundled profile, so the suite
//! needs no input files.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ao::{
    effective_r0_closed_loop, opd_rms_closed_loop, opd_rms_open_loop, strehl_from_opd,
    tl_fov_from_opd, AoParams, PRESET_BANDWIDTHS,
};
use crate::montecarlo::{simulate, McConfig};
use crate::optics::{dl_fov, strehl_uncorrected, tl_fov, LinkConfig, Strategy};
use crate::qkd::{
    binary_entropy, gain, key_bit_probability, key_bit_probability_rearranged, qber,
    qber_dl_approx, Atmosphere, ProtocolParams,
};
use crate::spectral::synthetic::{bundled_profile, DEMO_BROAD_DIP, DEMO_NARROW_DIP};
use crate::sweep::{optimize_wavelength, run_sweep, Axis, Optimum, Scenario, Spacing, SweepSpec};
use crate::turbulence::{scale_fried, SiteModel, REFERENCE_WAVELENGTH_NM};

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_PULSES: u64 = 10_000_000;

/// The three signal wavelengths of the reference scenario, nm.
pub const SIGNAL_WAVELENGTHS: [f64; 3] = [1549.91, 780.945, 430.886];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn within(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        Self::new(
            name,
            (value - expected).abs() <= tol,
            format!("{value:.6} (expected {expected} ± {tol})"),
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn failed(name: &str, e: impl fmt::Display) -> Check {
    Check::new(name, false, format!("error: {e}"))
}

/// The reference site with AO at `fc`, on the bundled profile.
pub fn reference_scenario(fc: Option<f64>) -> Scenario {
    Scenario {
        profile: bundled_profile(),
        atmosphere: Atmosphere::Site(SiteModel::leo_downlink_default()),
        link: LinkConfig::default(),
        protocol: ProtocolParams::default(),
        ao: fc.map(AoParams::preset),
    }
}

pub fn closed_loop_r0() -> Vec<Check> {
    [(130.0, 0.37), (200.0, 0.50), (500.0, 0.74)]
        .iter()
        .map(|&(fc, want)| {
            let r0 = effective_r0_closed_loop(
                &AoParams::preset(fc),
                43.0,
                301.0,
                1.0,
                REFERENCE_WAVELENGTH_NM,
            );
            Check::within(format!("closed-loop r0 at fc={fc} Hz (m)"), r0, want, 0.01)
        })
        .collect()
}

pub fn opd_residuals() -> Vec<Check> {
    let mut out = vec![Check::within(
        "open-loop OPD at r0=0.05 m (nm)",
        opd_rms_open_loop(0.05, 1.0) * 1e9,
        980.0,
        2.0,
    )];
    let site = SiteModel::leo_downlink_default();
    for (fc, want) in PRESET_BANDWIDTHS.iter().zip([184.0, 144.0, 104.0]) {
        let name = format!("closed-loop OPD at fc={fc} Hz (nm)");
        out.push(
            match opd_rms_closed_loop(&site, &AoParams::preset(*fc), 1.0) {
                Ok(v) => Check::within(name, v * 1e9, want, 3.0),
                Err(e) => failed(&name, e),
            },
        );
    }
    out
}

pub fn strehl_at_144nm() -> Vec<Check> {
    SIGNAL_WAVELENGTHS
        .iter()
        .zip([0.71, 0.37, 0.14])
        .map(|(&l, want)| {
            Check::within(
                format!("Strehl at 144 nm OPD, {l} nm"),
                strehl_from_opd(144e-9, l),
                want,
                0.01,
            )
        })
        .collect()
}

pub fn fov_ratios() -> Vec<Check> {
    let [l1550, _, l431] = SIGNAL_WAVELENGTHS;
    let tl_dl = |l: f64| tl_fov(1.0, l, 0.30) / dl_fov(1.0, l);
    vec![
        Check::within(
            "DL FOV ratio 1550/431",
            dl_fov(1.0, l1550) / dl_fov(1.0, l431),
            12.93,
            0.01,
        ),
        Check::within("TL/DL FOV at r0=0.30 m, 431 nm", tl_dl(l431), 17.8, 0.5),
        Check::within("TL/DL FOV at r0=0.30 m, 1550 nm", tl_dl(l1550), 1.99, 0.05),
    ]
}

pub fn site_moments() -> Vec<Check> {
    let site = SiteModel::leo_downlink_default();
    let fine = SiteModel {
        quadrature_intervals: 2 * site.quadrature_intervals,
        ..site.clone()
    };
    let (m, mf) = match (site.moments(), fine.moments()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return vec![failed("site moments", e)],
    };
    let l = REFERENCE_WAVELENGTH_NM;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let values = [
        (m.fried_length(l), mf.fried_length(l)),
        (m.greenwood_frequency(l), mf.greenwood_frequency(l)),
        (
            m.tracking_greenwood_frequency(l, 1.0),
            mf.tracking_greenwood_frequency(l, 1.0),
        ),
    ];
    let worst = values.iter().map(|&(a, b)| rel(a, b)).fold(0.0, f64::max);
    vec![
        Check::within("site r0 (m)", values[0].0, 0.05, 0.005),
        Check::within("site f_G (Hz)", values[1].0, 301.0, 30.1),
        Check::within("site f_TG (Hz)", values[2].0, 43.0, 4.3),
        Check::new(
            "quadrature convergence on grid doubling",
            worst < 1e-3,
            format!("max relative change {worst:.3e} (limit 1e-3)"),
        ),
    ]
}

pub fn ao_fov_reduction() -> Vec<Check> {
    SIGNAL_WAVELENGTHS
        .iter()
        .zip([(20.0, 1.0), (52.0, 2.0), (78.0, 3.0)])
        .map(|(&l, (want, tol))| {
            Check::within(
                format!("TL FOV reduction r0 0.05 to 0.50 m, {l} nm"),
                tl_fov(1.0, l, 0.05) / tl_fov(1.0, l, 0.50),
                want,
                tol,
            )
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn identities(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut kb, mut strehl, mut fov) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let q_mu = 10f64.powf(rng.random_range(-9.0..-1.0));
        let q1 = q_mu * rng.random_range(0.0..1.0);
        let e_mu = rng.random_range(0.0..0.5);
        let e1 = rng.random_range(0.0..0.5);
        let f = rng.random_range(1.0..1.5);
        let (h_mu, h_1) = (binary_entropy(e_mu).unwrap(), binary_entropy(e1).unwrap());
        let direct = key_bit_probability(q_mu, e_mu, q1, e1, f).unwrap();
        let rearranged = key_bit_probability_rearranged(q_mu, q1 / q_mu, f * h_mu, 1.0 - h_1);
        // relative to the term sizes: P_KB itself may cancel to ~0
        let scale = 0.5 * (q_mu * f * h_mu + q1 * (1.0 - h_1));
        kb = kb.max((direct - rearranged).abs() / scale);

        let r0 = rng.random_range(0.02..1.5);
        let d = rng.random_range(0.1..2.0);
        let l = rng.random_range(400.0..1600.0);
        let opd = opd_rms_open_loop(r0, d);
        strehl = strehl.max(rel_err(
            strehl_from_opd(opd, l),
            strehl_uncorrected(d, scale_fried(r0, l)),
        ));
        fov = fov.max(rel_err(tl_fov_from_opd(d, l, opd), tl_fov(d, l, r0)));
    }
    vec![
        Check::new(
            "key-bit forms agree (1e4 samples)",
            kb <= 1e-12,
            format!("max relative {kb:.2e} (limit 1e-12)"),
        ),
        Check::new(
            "Strehl from OPD vs closed form",
            strehl <= 1e-9,
            format!("max relative {strehl:.2e} (limit 1e-9)"),
        ),
        Check::new(
            "TL FOV from OPD vs closed form",
            fov <= 1e-9,
            format!("max relative {fov:.2e} (limit 1e-9)"),
        ),
    ]
}

pub fn monte_carlo(seed: u64, pulses: u64) -> Vec<Check> {
    let p = ProtocolParams::default();
    let mut out = Vec::new();
    for eta in [1e-4, 1e-3, 1e-2] {
        for y0 in [0.0, 1e-5, 1e-3] {
            for n in [p.mu, p.nu] {
                let cfg = McConfig {
                    pulses,
                    seed,
                    eta,
                    y0,
                    n,
                    e0: p.e0,
                    ed: p.ed,
                };
                let name = format!("Monte Carlo eta={eta:e} Y0={y0:e} n={n}");
                let est = match simulate(&cfg) {
                    Ok(e) => e,
                    Err(e) => {
                        out.push(failed(&name, e));
                        continue;
                    }
                };
                let q = gain(y0, eta, n);
                let e = qber(y0, eta, n, p.e0, p.ed).unwrap_or(f64::NAN);
                let zq = (est.q_hat - q).abs() / est.stderr_q;
                let (ok_e, ze) = match est.e_hat {
                    Some(eh) => {
                        let z = (eh - e).abs() / est.stderr_e;
                        (z <= 3.0, z)
                    }
                    None => (false, f64::NAN),
                };
                out.push(Check::new(
                    name,
                    zq <= 3.0 && ok_e,
                    format!("Q z={zq:.2}, E z={ze:.2} ({} clicks)", est.clicks),
                ));
            }
        }
    }
    let cfg = McConfig {
        pulses: pulses.min(1_000_000),
        seed,
        eta: 1e-2,
        y0: 1e-3,
        n: p.mu,
        e0: p.e0,
        ed: p.ed,
    };
    out.push(match (simulate(&cfg), simulate(&cfg)) {
        (Ok(a), Ok(b)) => Check::new(
            "Monte Carlo deterministic under fixed seed",
            a == b,
            format!("seed {seed}: {} clicks, {} errors", a.clicks, a.errors),
        ),
        (Err(e), _) | (_, Err(e)) => failed("Monte Carlo determinism", e),
    });
    out
}

/// Worst ratio `|approx - exact| / bound` of the first-order DL QBER, where
/// the bound is the linearization remainder
/// `|e0-ed|·Y0·(x²/2)/((Y0+s)(Y0+x))`, `x = η_DL·n`, `s = 1-e^(-x)`.
pub fn dl_approx_worst_ratio(e0: f64, ed: f64) -> (f64, f64) {
    let (f_dark, gate) = (10.0, 1e-9);
    let (mut worst, mut max_err) = (0.0f64, 0.0f64);
    for &eta_tl in &[1e-6, 1e-5, 1e-4, 1e-3] {
        for &n in &[0.1, 0.7, 1.0] {
            if eta_tl * n > 1e-3 {
                continue;
            }
            for &s in &[0.05, 0.2, 0.5, 0.9, 1.0] {
                for &sky in &[0.0, 1e-8, 1e-6, 1e-4] {
                    let y0_tl = sky + 4.0 * f_dark * gate;
                    let y0_dl = sky * s + 4.0 * f_dark * gate;
                    let x = eta_tl * s * n;
                    let exact = qber(y0_dl, eta_tl * s, n, e0, ed).unwrap();
                    let approx = qber_dl_approx(y0_tl, eta_tl, n, e0, ed, s, f_dark, gate);
                    let sx = -(-x).exp_m1();
                    let bound =
                        (e0 - ed).abs() * y0_dl * (x * x / 2.0) / ((y0_dl + sx) * (y0_dl + x));
                    let err = (approx - exact).abs();
                    max_err = max_err.max(err);
                    // a few ulps of slack for rounding in both evaluations
                    worst = worst.max(err / (bound + 4.0 * f64::EPSILON));
                }
            }
        }
    }
    (worst, max_err)
}

pub fn qber_limits() -> Vec<Check> {
    let p = ProtocolParams::default();
    let mut ok_limits = true;
    for eta in [1e-6, 1e-3, 0.5] {
        ok_limits &= qber(0.0, eta, p.mu, p.e0, p.ed).ok() == Some(p.ed);
    }
    for y0 in [1e-9, 1e-5, 0.1] {
        ok_limits &= qber(y0, 0.0, p.mu, p.e0, p.ed).ok() == Some(p.e0);
    }
    let near = qber(1e-300, 1e-3, p.mu, p.e0, p.ed).unwrap();
    let far = qber(1e-3, 1e-300, p.mu, p.e0, p.ed).unwrap();
    ok_limits &= (near - p.ed).abs() < 1e-12 && (far - p.e0).abs() < 1e-12;
    let (worst, max_err) = dl_approx_worst_ratio(p.e0, p.ed);
    vec![
        Check::new(
            "QBER limits Y0->0 and eta->0",
            ok_limits,
            "exact at the limits, continuous nearby",
        ),
        Check::new(
            "first-order DL QBER within second-order bound (eta*mu <= 1e-3)",
            worst <= 1.0,
            format!("worst error/bound {worst:.6}, max error {max_err:.2e}"),
        ),
    ]
}

pub fn optimizer_construction() -> Vec<Check> {
    let mut out = Vec::new();
    let base = reference_scenario(Some(200.0));
    let (lo, hi) = base.profile.range();
    for (width, dip) in [(1.0, DEMO_BROAD_DIP), (0.05, DEMO_NARROW_DIP)] {
        let mut sc = base.clone();
        sc.link.filter_width = width;
        let step = width / 2.0;
        let name = format!("optimizer at filter {width} nm finds {} nm", dip.center_nm);
        out.push(match optimize_wavelength(&sc, lo + step, hi - step, step) {
            Ok(scan) => match scan.optimum {
                Optimum::Found {
                    wavelength_nm,
                    r_kb,
                } => Check::new(
                    name,
                    (wavelength_nm - dip.center_nm).abs() <= step,
                    format!("{wavelength_nm} nm, R_KB {r_kb:.4e} Hz, step {step} nm"),
                ),
                Optimum::NoKey => Check::new(name, false, "no key anywhere"),
            },
            Err(e) => failed(&name, e),
        });
    }
    out
}

pub fn strategy_dominance() -> Vec<Check> {
    let name = "TL key rate >= DL over r0 in [0.05, 1] m";
    let sc = reference_scenario(None);
    let spec = SweepSpec {
        axis: Axis::R0,
        min: 0.05,
        max: 1.0,
        points: 20,
        spacing: Spacing::Linear,
        wavelengths: SIGNAL_WAVELENGTHS.to_vec(),
        strategies: vec![Strategy::DiffractionLimited, Strategy::TurbulenceLimited],
    };
    let rows = match run_sweep(&spec, &sc) {
        Ok(r) => r,
        Err(e) => return vec![failed(name, e)],
    };
    let (mut violations, mut compared, mut strict) = (0, 0, 0);
    for row in &rows {
        for pair in row.points.chunks(2) {
            let (dl, tl) = (&pair[0].budget, &pair[1].budget);
            compared += 1;
            let ok = if dl.r_kb > 0.0 && dl.strehl < 1.0 {
                strict += 1;
                tl.r_kb > dl.r_kb
            } else {
                tl.r_kb >= dl.r_kb
            };
            if !ok || pair.iter().any(|p| p.error.is_some()) {
                violations += 1;
            }
        }
    }
    vec![Check::new(
        name,
        violations == 0,
        format!("{compared} points, {strict} with DL key and S<1, {violations} violations"),
    )]
}

/// Every check, in criterion order.
pub fn run_all(seed: u64, pulses: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(closed_loop_r0());
    out.extend(opd_residuals());
    out.extend(strehl_at_144nm());
    out.extend(fov_ratios());
    out.extend(site_moments());
    out.extend(ao_fov_reduction());
    out.extend(identities(seed));
    out.extend(monte_carlo(seed, pulses));
    out.extend(qber_limits());
    out.extend(optimizer_construction());
    out.extend(strategy_dominance());
    out
}

//! Pulse-level sampler of the click model, used as an oracle for the
//! analytic gains and error rates.
//!
//! Signal and background clicks are tallied separately and summed, so
//! the estimator targets the additive `Q = Y0 + 1 - e^(-ηn)` rather than
//! the union of the two events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{ensure_unit_interval, Error, Result};

/// Name of the generator, for output metadata.
pub const RNG_NAME: &str = "ChaCha8";

/// Pulses per independently seeded batch.
pub const BATCH_PULSES: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub pulses: u64,
    pub seed: u64,
    pub eta: f64,
    pub y0: f64,
    /// Mean photon number.
    pub n: f64,
    pub e0: f64,
    pub ed: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::param("pulses", "must be >= 1"));
        }
        ensure_unit_interval("eta", self.eta)?;
        ensure_unit_interval("y0", self.y0)?;
        ensure_unit_interval("e0", self.e0)?;
        ensure_unit_interval("ed", self.ed)?;
        if !(self.n >= 0.0) || !self.n.is_finite() {
            return Err(Error::param(
                "mean photon number",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub q_hat: f64,
    /// `None` when nothing clicked.
    pub e_hat: Option<f64>,
    pub stderr_q: f64,
    pub stderr_e: f64,
    pub clicks: u64,
    pub signal_clicks: u64,
    pub background_clicks: u64,
    pub errors: u64,
    pub pulses: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    signal: u64,
    background: u64,
    errors: u64,
    /// pulses on which both processes fired
    both: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            signal: self.signal + o.signal,
            background: self.background + o.background,
            errors: self.errors + o.errors,
            both: self.both + o.both,
        }
    }
}

fn run_batch(cfg: &McConfig, poisson: Option<&Poisson<f64>>, batch: u64, pulses: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch);
    let miss = 1.0 - cfg.eta;
    let mut t = Tally::default();
    for _ in 0..pulses {
        let k = poisson.map_or(0.0, |p| p.sample(&mut rng));
        let signal = k > 0.0 && rng.random::<f64>() >= miss.powf(k);
        let background = rng.random::<f64>() < cfg.y0;
        if signal {
            t.signal += 1;
            if rng.random::<f64>() < cfg.ed {
                t.errors += 1;
            }
        }
        if background {
            t.background += 1;
            if rng.random::<f64>() < cfg.e0 {
                t.errors += 1;
            }
        }
        if signal && background {
            t.both += 1;
        }
    }
    t
}

/// Simulates `cfg.pulses` pulses. The result depends only on `cfg`, not on
/// the number of worker threads.
pub fn simulate(cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let poisson = if cfg.n > 0.0 {
        Some(Poisson::new(cfg.n).map_err(|e| Error::param("mean photon number", e.to_string()))?)
    } else {
        None
    };
    let batches = cfg.pulses.div_ceil(BATCH_PULSES);
    let t = (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH_PULSES.min(cfg.pulses - b * BATCH_PULSES);
            run_batch(cfg, poisson.as_ref(), b, len)
        })
        .reduce(Tally::default, Tally::merge);

    let n = cfg.pulses as f64;
    let clicks = t.signal + t.background;
    let q_hat = clicks as f64 / n;
    // per-pulse click count c ∈ {0, 1, 2}: Σc² = clicks + 2·both
    let sum_sq = (clicks + 2 * t.both) as f64;
    let var = (sum_sq / n - q_hat * q_hat).max(0.0);
    let stderr_q = (var / n).sqrt();

    let (e_hat, stderr_e) = if clicks == 0 {
        (None, 0.0)
    } else {
        let c = clicks as f64;
        // smoothed so that a handful of errors does not give zero spread
        let p = (t.errors as f64 + 1.0) / (c + 2.0);
        (Some(t.errors as f64 / c), (p * (1.0 - p) / c).sqrt())
    };

    Ok(McEstimate {
        q_hat,
        e_hat,
        stderr_q,
        stderr_e,
        clicks,
        signal_clicks: t.signal,
        background_clicks: t.background,
        errors: t.errors,
        pulses: cfg.pulses,
    })
}

//! Gaussian noisy-channel memory: encoding, Bayesian reconstruction and the
//! expected retrieval error.
//!
//! An input `w` is stored as a noisy representation `r ~ w + N(0, 1/tau_w)`.
//! Retrieval returns the posterior mean of `w` given `r` under the prior
//! `N(w0, 1/tau0)`. Everything here is a pure function of its arguments,
//! except [`encode_sample`] and [`monte_carlo_error`] which consume a seeded
//! generator.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifies the generator behind [`monte_carlo_error`]; written into output
/// metadata so a run can be reproduced.
pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng (rand_chacha 0.9) seed_from_u64, stream = chunk index, 65536 draws per chunk, ziggurat StandardNormal (rand_distr 0.5)";

const MC_CHUNK: usize = 1 << 16;

/// Mean/precision pair used for priors and posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    mean: f64,
    precision: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, precision: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("mean", format!("must be finite, got {mean}")));
        }
        if !(precision > 0.0 && precision.is_finite()) {
            return Err(Error::invalid(
                "precision",
                format!("must be finite and > 0, got {precision}"),
            ));
        }
        Ok(Self { mean, precision })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    pub fn variance(&self) -> f64 {
        1.0 / self.precision
    }
}

/// Precision of the encoding noise. Zero is the no-resource limit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EncodingPrecision(pub(crate) f64);

impl EncodingPrecision {
    pub const ZERO: Self = Self(0.0);

    pub fn new(tau_w: f64) -> Result<Self> {
        if !(tau_w >= 0.0 && tau_w.is_finite()) {
            return Err(Error::invalid(
                "tau_w",
                format!("must be finite and >= 0, got {tau_w}"),
            ));
        }
        Ok(Self(tau_w))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Surprisal stored in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SurprisalValue {
    nats: f64,
}

impl SurprisalValue {
    pub fn from_nats(nats: f64) -> Self {
        Self { nats }
    }

    pub fn from_bits(bits: f64) -> Self {
        Self { nats: bits * LN_2 }
    }

    pub fn nats(self) -> f64 {
        self.nats
    }

    pub fn bits(self) -> f64 {
        self.nats / LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MonotonicityRegime {
    /// Error falls for every `tau_w > 0`.
    MonotoneDecreasing,
    /// Error rises on `(0, tau0 - 2 tau0^2 (w - w0)^2)` before falling.
    NonMonotone,
}

/// Distribution of the reconstruction `w_hat` given the true input, with `r`
/// marginalised out. Unlike [`GaussianBelief`] the variance may be zero
/// (point mass at the prior mean when nothing is encoded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub mean: f64,
    pub variance: f64,
}

fn shrinkage(prior: &GaussianBelief, tau: EncodingPrecision) -> f64 {
    tau.0 / (prior.precision + tau.0)
}

/// Surprisal of `w` under the prior density, in nats. Negative when the
/// density exceeds one.
pub fn gaussian_surprisal(prior: &GaussianBelief, w: f64) -> SurprisalValue {
    let d = w - prior.mean;
    let tau0 = prior.precision;
    SurprisalValue::from_nats(0.5 * tau0 * d * d - 0.5 * (tau0 / (2.0 * PI)).ln())
}

/// One draw of the noisy representation of `w`.
pub fn encode_sample<R: Rng + ?Sized>(w: f64, tau: EncodingPrecision, rng: &mut R) -> Result<f64> {
    if tau.0 <= 0.0 {
        return Err(Error::invalid(
            "tau_w",
            "sampling needs a strictly positive encoding precision",
        ));
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(w + z / tau.0.sqrt())
}

pub fn posterior_from_representation(
    prior: &GaussianBelief,
    tau: EncodingPrecision,
    r: f64,
) -> GaussianBelief {
    let alpha = shrinkage(prior, tau);
    GaussianBelief {
        mean: (1.0 - alpha) * prior.mean + alpha * r,
        precision: prior.precision + tau.0,
    }
}

pub fn reconstruction_distribution(
    prior: &GaussianBelief,
    tau: EncodingPrecision,
    w_true: f64,
) -> Reconstruction {
    let alpha = shrinkage(prior, tau);
    Reconstruction {
        mean: alpha * w_true + (1.0 - alpha) * prior.mean,
        variance: alpha / (prior.precision + tau.0),
    }
}

/// Expected squared retrieval error for input `w_true`:
/// `(tau_w + tau0^2 (w - w0)^2) / (tau0 + tau_w)^2`.
pub fn expected_error(prior: &GaussianBelief, tau: EncodingPrecision, w_true: f64) -> f64 {
    let tau0 = prior.precision;
    let d = w_true - prior.mean;
    let s = tau0 + tau.0;
    (tau.0 + tau0 * tau0 * d * d) / (s * s)
}

/// The same error written in terms of the input's surprisal under the prior.
pub fn expected_error_surprisal_form(
    tau0: f64,
    tau: EncodingPrecision,
    h: SurprisalValue,
) -> Result<f64> {
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(Error::invalid("tau0", format!("must be finite and > 0, got {tau0}")));
    }
    let s = tau0 + tau.0;
    let num = tau.0 + 2.0 * tau0 * h.nats + tau0 * (tau0 / (2.0 * PI)).ln();
    Ok(num / (s * s))
}

/// d(expected_error)/d(tau_w).
pub fn error_derivative(prior: &GaussianBelief, tau: EncodingPrecision, w_true: f64) -> f64 {
    let tau0 = prior.precision;
    let d = w_true - prior.mean;
    let s = tau0 + tau.0;
    (tau0 - tau.0 - 2.0 * tau0 * tau0 * d * d) / (s * s * s)
}

pub fn monotonicity_regime(prior: &GaussianBelief, w_true: f64) -> MonotonicityRegime {
    let d = w_true - prior.mean;
    let d2 = d * d;
    // tau0 >= 1 / (2 d^2), written without the division so d == 0 falls out.
    if d2 > 0.0 && 2.0 * prior.precision * d2 >= 1.0 {
        MonotonicityRegime::MonotoneDecreasing
    } else {
        MonotonicityRegime::NonMonotone
    }
}

/// Precision level below which the error rises with `tau_w`. Zero or negative
/// for monotone inputs.
pub fn turning_point(prior: &GaussianBelief, w_true: f64) -> f64 {
    let tau0 = prior.precision;
    let d = w_true - prior.mean;
    tau0 - 2.0 * tau0 * tau0 * d * d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// NaN when `n == 1`.
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(a: Moments, b: Moments) -> Moments {
        let n = a.n + b.n;
        let delta = b.mean - a.mean;
        Moments {
            n,
            mean: a.mean + delta * (b.n / n),
            m2: a.m2 + b.m2 + delta * delta * (a.n * b.n / n),
        }
    }
}

fn pairwise(parts: &[Moments]) -> Moments {
    match parts {
        [single] => *single,
        _ => {
            let (left, right) = parts.split_at(parts.len() / 2);
            Moments::merge(pairwise(left), pairwise(right))
        }
    }
}

/// Monte Carlo estimate of the expected retrieval error: draw `n`
/// representations, reconstruct each by its posterior mean and average the
/// squared error.
///
/// Samples are drawn in fixed chunks with one generator stream per chunk and
/// the chunk statistics are combined in a fixed pairwise tree, so the result
/// depends only on `seed`, never on the thread count.
pub fn monte_carlo_error(
    prior: &GaussianBelief,
    tau: EncodingPrecision,
    w_true: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one sample"));
    }
    if tau.0 <= 0.0 {
        return Err(Error::invalid(
            "tau_w",
            "Monte Carlo needs a strictly positive encoding precision",
        ));
    }
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = MC_CHUNK.min(n - k * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut m = Moments { n: 0.0, mean: 0.0, m2: 0.0 };
            for _ in 0..len {
                let r = encode_sample(w_true, tau, &mut rng).expect("tau_w checked above");
                let w_hat = posterior_from_representation(prior, tau, r).mean;
                let e = (w_hat - w_true) * (w_hat - w_true);
                m.n += 1.0;
                let delta = e - m.mean;
                m.mean += delta / m.n;
                m.m2 += delta * (e - m.mean);
            }
            m
        })
        .collect();
    let total = pairwise(&parts);
    let std_error = if n > 1 {
        (total.m2 / (total.n - 1.0) / total.n).sqrt()
    } else {
        f64::NAN
    };
    Ok(McEstimate {
        estimate: total.mean,
        std_error,
    })
}

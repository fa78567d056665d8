//! Monte Carlo estimates of `E‖X(k)‖^p` along random switching paths
//! `X(k) = A_{σ(k)} ⋯ A_{σ(1)}`.
//!
//! Each trajectory keeps `X` normalized and tracks `ln‖X(k)‖` separately, and
//! the sample means are accumulated with log-sum-exp, so growing systems do
//! not overflow. Trajectory `t` draws from ChaCha8 stream `t` of the seed;
//! trajectories are grouped into fixed blocks combined in order, so the
//! results do not depend on the thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm_dm;
use crate::markov::SwitchedSystem;

const BLOCK: usize = 256;

/// Tolerance on the total mass of an initial distribution.
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// Streaming log-sum-exp of `e^v` and `e^{2v}`.
#[derive(Debug, Clone, Copy)]
struct LogMoments {
    max: f64,
    s1: f64,
    s2: f64,
}

impl LogMoments {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        s1: 0.0,
        s2: 0.0,
    };

    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            let r = (self.max - v).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = v;
        }
        let e = (v - self.max).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    fn merge(&mut self, other: &Self) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        let m = self.max.max(other.max);
        let (a, b) = ((self.max - m).exp(), (other.max - m).exp());
        self.s1 = self.s1 * a + other.s1 * b;
        self.s2 = self.s2 * a * a + other.s2 * b * b;
        self.max = m;
    }

    /// `(ln mean, stderr / mean)` over `count` samples.
    fn finish(&self, count: usize) -> (f64, f64) {
        if self.max == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, 0.0);
        }
        let c = count as f64;
        let m1 = self.s1 / c;
        let m2 = self.s2 / c;
        let rel = if count > 1 {
            let var = (m2 - m1 * m1).max(0.0) * c / (c - 1.0);
            (var / c).sqrt() / m1
        } else {
            0.0
        };
        (self.max + m1.ln(), rel)
    }
}

/// Per-step sample means of `‖X(k)‖^p` for `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub p: u32,
    pub horizon: usize,
    pub samples: usize,
    pub rng_seed: u64,
    /// `ln` of the sample mean; `[0] = 0` for `X(0) = I`.
    pub log_moment: Vec<f64>,
    /// Standard error of each sample mean divided by the mean.
    pub rel_stderr: Vec<f64>,
}

impl TrajectoryEnsemble {
    /// Sample means; may overflow to infinity where `log_moment` does not.
    pub fn per_step_moment(&self) -> Vec<f64> {
        self.log_moment.iter().map(|v| v.exp()).collect()
    }
}

enum Sampler<'a> {
    Uniform(usize),
    Chain { initial: &'a [f64], q: &'a DMatrix<f64> },
}

fn draw(weights: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left a sliver past the last positive weight
    last
}

impl Sampler<'_> {
    fn next(&self, prev: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
        match (self, prev) {
            (Sampler::Uniform(n), _) => rng.gen_range(0..*n),
            (Sampler::Chain { initial, .. }, None) => draw(initial.iter().copied(), rng),
            (Sampler::Chain { q, .. }, Some(i)) => draw(q.row(i).iter().copied(), rng),
        }
    }
}

fn validate_distribution(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::InvalidDistribution(format!(
            "initial distribution has {} entries for {n} states",
            mu.len()
        )));
    }
    if let Some(i) = mu.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} = {} is not a probability",
            mu[i]
        )));
    }
    let total: f64 = mu.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Samples `samples` paths of length `horizon`.
///
/// I.i.d. systems switch uniformly at every step and take no initial
/// distribution. Markov systems draw `σ(1)` from `initial` (uniform when
/// `None`) and then follow the chain.
pub fn simulate(
    system: &SwitchedSystem,
    p: u32,
    horizon: usize,
    samples: usize,
    seed: u64,
    initial: Option<&[f64]>,
) -> Result<TrajectoryEnsemble> {
    if p == 0 || horizon == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "p, horizon and samples must be at least 1".into(),
        ));
    }
    let family = system.family();
    let members = family.dmatrices();
    let n_states = family.len();
    let uniform_mu = vec![1.0 / n_states as f64; n_states];
    let q_owned;
    let sampler = match system {
        SwitchedSystem::Iid(_) => {
            if initial.is_some() {
                return Err(Error::InvalidDistribution(
                    "an initial distribution only applies to Markov switching".into(),
                ));
            }
            Sampler::Uniform(n_states)
        }
        SwitchedSystem::Markov(model) => {
            let mu = initial.unwrap_or(&uniform_mu);
            validate_distribution(mu, n_states)?;
            q_owned = model.transition().as_dmatrix().clone();
            Sampler::Chain {
                initial: mu,
                q: &q_owned,
            }
        }
    };
    let pf = f64::from(p);
    let dim = family.dim();

    let run_block = |b: usize| -> Vec<LogMoments> {
        let mut acc = vec![LogMoments::EMPTY; horizon];
        let mut x = DMatrix::<f64>::zeros(dim, dim);
        let mut next = DMatrix::<f64>::zeros(dim, dim);
        for t in (b * BLOCK)..((b + 1) * BLOCK).min(samples) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            x.fill_with_identity();
            let mut log_norm = 0.0;
            let mut state = None;
            for slot in acc.iter_mut() {
                let s = sampler.next(state, &mut rng);
                state = Some(s);
                if log_norm == f64::NEG_INFINITY {
                    continue;
                }
                members[s].mul_to(&x, &mut next);
                let nrm = norm_dm(&next);
                if nrm == 0.0 {
                    log_norm = f64::NEG_INFINITY;
                    continue;
                }
                log_norm += nrm.ln();
                std::mem::swap(&mut x, &mut next);
                x /= nrm;
                slot.push(pf * log_norm);
            }
        }
        acc
    };

    let blocks = samples.div_ceil(BLOCK);
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<LogMoments>> = {
        use rayon::prelude::*;
        (0..blocks).into_par_iter().map(run_block).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<LogMoments>> = (0..blocks).map(run_block).collect();

    let mut total = vec![LogMoments::EMPTY; horizon];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    let mut log_moment = vec![0.0];
    let mut rel_stderr = vec![0.0];
    for t in &total {
        let (lm, rel) = t.finish(samples);
        log_moment.push(lm);
        rel_stderr.push(rel);
    }
    Ok(TrajectoryEnsemble {
        p,
        horizon,
        samples,
        rng_seed: seed,
        log_moment,
        rel_stderr,
    })
}

/// Growth-rate estimate from the tail of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub stderr: f64,
    /// First and last step of the regression window.
    pub window: (usize, usize),
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;

/// `exp(slope / p)` where `slope` is the least-squares slope of
/// `ln E‖X(k)‖^p` over the last `tail_fraction` of the steps.
///
/// The standard error combines the spread of the regression residuals with
/// the sampling error of the per-step means, the latter propagated as if the
/// errors at different steps were fully correlated (they come from the same
/// trajectories).
pub fn empirical_rate(ensemble: &TrajectoryEnsemble, tail_fraction: f64) -> Result<RateEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} is not in (0, 1]"
        )));
    }
    let end = ensemble.horizon;
    let span = (tail_fraction * end as f64).floor() as usize;
    if span < 1 {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} of horizon {end} leaves fewer than 2 points"
        )));
    }
    let start = end - span;
    let pf = f64::from(ensemble.p);
    let ks: Vec<f64> = (start..=end).map(|k| k as f64).collect();
    let ys: Vec<f64> = (start..=end).map(|k| ensemble.log_moment[k] / pf).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Degenerate);
    }
    let count = ks.len() as f64;
    let k_bar = ks.iter().sum::<f64>() / count;
    let y_bar = ys.iter().sum::<f64>() / count;
    let sxx: f64 = ks.iter().map(|k| (k - k_bar).powi(2)).sum();
    let sxy: f64 = ks.iter().zip(&ys).map(|(k, y)| (k - k_bar) * (y - y_bar)).sum();
    let slope = sxy / sxx;
    let reg_se = if ks.len() > 2 {
        let rss: f64 = ks
            .iter()
            .zip(&ys)
            .map(|(k, y)| (y - y_bar - slope * (k - k_bar)).powi(2))
            .sum();
        (rss / (count - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let mc_se: f64 = (start..=end)
        .zip(&ks)
        .map(|(k, kk)| ((kk - k_bar) / sxx).abs() * ensemble.rel_stderr[k] / pf)
        .sum();
    let rate = slope.exp();
    Ok(RateEstimate {
        rate,
        stderr: rate * reg_se.hypot(mc_se),
        window: (start, end),
    })
}

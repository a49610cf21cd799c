//! Metropolis sampling with simulated annealing.
//!
//! The engine is generic over the state, the proposal kernel and the
//! log-posterior scorer. All scoring happens in log space and proposals are
//! treated as symmetric, so acceptance only looks at the posterior ratio.
//! The chain keeps the best state it has visited and returns that, not the
//! final one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The RNG every chain draws from. One seed, no other entropy.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent seed for sub-stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer: distinct, well spread seeds for nearby inputs
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Geometric cooling from `t_initial` down to `t_final` over `n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub t_initial: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            t_initial: 2.0,
            t_final: 0.2,
            n_steps: 0,
        }
    }
}

impl AnnealingSchedule {
    pub fn new(t_initial: f64, t_final: f64, n_steps: usize) -> Result<Self> {
        let s = AnnealingSchedule {
            t_initial,
            t_final,
            n_steps,
        };
        s.validate()?;
        Ok(s)
    }

    /// Constant temperature, i.e. a plain Metropolis chain.
    pub fn constant(temperature: f64, n_steps: usize) -> Result<Self> {
        Self::new(temperature, temperature, n_steps)
    }

    pub fn with_steps(self, n_steps: usize) -> Self {
        AnnealingSchedule { n_steps, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !(self.t_initial >= self.t_final) || !self.t_initial.is_finite()
        {
            return Err(Error::Config(format!(
                "annealing needs t_initial >= t_final > 0, got {} -> {}",
                self.t_initial, self.t_final
            )));
        }
        Ok(())
    }

    /// Temperature at step `k`, hitting `t_initial` at the first step and
    /// `t_final` at the last.
    pub fn temperature(&self, k: usize) -> f64 {
        if self.n_steps <= 1 {
            return self.t_initial;
        }
        let frac = k as f64 / (self.n_steps - 1) as f64;
        self.t_initial * (self.t_final / self.t_initial).powf(frac)
    }
}

/// `min(1, exp((new - old) / T))`, and zero when the proposal is impossible.
pub fn acceptance_probability(log_post_new: f64, log_post_old: f64, temperature: f64) -> f64 {
    if log_post_new == f64::NEG_INFINITY || log_post_new.is_nan() {
        return 0.0;
    }
    let delta = log_post_new - log_post_old;
    if delta >= 0.0 {
        1.0
    } else {
        (delta / temperature).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult<S> {
    pub best_state: S,
    pub best_log_posterior: f64,
    pub accepted_count: usize,
    pub proposed_count: usize,
}

impl<S> ChainResult<S> {
    pub fn map<T>(self, f: impl FnOnce(S) -> T) -> ChainResult<T> {
        ChainResult {
            best_state: f(self.best_state),
            best_log_posterior: self.best_log_posterior,
            accepted_count: self.accepted_count,
            proposed_count: self.proposed_count,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed_count == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.proposed_count as f64
        }
    }
}

/// What an observer sees after each iteration.
#[derive(Debug)]
pub struct ChainStep<'a, S> {
    pub step: usize,
    pub temperature: f64,
    pub accepted: bool,
    pub current: &'a S,
    pub current_log_posterior: f64,
    pub best_log_posterior: f64,
}

/// Runs `schedule.n_steps` propose/evaluate/accept iterations.
pub fn run_chain<S, P, L>(
    initial: S,
    propose: P,
    log_posterior: L,
    schedule: AnnealingSchedule,
    seed: u64,
) -> Result<ChainResult<S>>
where
    S: Clone,
    P: FnMut(&S, &mut ChainRng) -> S,
    L: FnMut(&S) -> f64,
{
    run_chain_observed(initial, propose, log_posterior, schedule, seed, |_| {})
}

/// [`run_chain`] with a callback after every iteration.
pub fn run_chain_observed<S, P, L, O>(
    initial: S,
    mut propose: P,
    mut log_posterior: L,
    schedule: AnnealingSchedule,
    seed: u64,
    mut observe: O,
) -> Result<ChainResult<S>>
where
    S: Clone,
    P: FnMut(&S, &mut ChainRng) -> S,
    L: FnMut(&S) -> f64,
    O: FnMut(&ChainStep<'_, S>),
{
    schedule.validate()?;
    let mut current_lp = log_posterior(&initial);
    if !current_lp.is_finite() {
        return Err(Error::InvalidInitialization(current_lp));
    }
    let mut rng = chain_rng(seed);
    let mut current = initial;
    let mut best = current.clone();
    let mut best_lp = current_lp;
    let mut accepted_count = 0;

    for step in 0..schedule.n_steps {
        let temperature = schedule.temperature(step);
        let candidate = propose(&current, &mut rng);
        let candidate_lp = log_posterior(&candidate);
        let p = acceptance_probability(candidate_lp, current_lp, temperature);
        let u: f64 = rng.random();
        let accepted = u < p;
        if accepted {
            current = candidate;
            current_lp = candidate_lp;
            accepted_count += 1;
            if current_lp > best_lp {
                best_lp = current_lp;
                best = current.clone();
            }
        }
        observe(&ChainStep {
            step,
            temperature,
            accepted,
            current: &current,
            current_log_posterior: current_lp,
            best_log_posterior: best_lp,
        });
    }

    Ok(ChainResult {
        best_state: best,
        best_log_posterior: best_lp,
        accepted_count,
        proposed_count: schedule.n_steps,
    })
}

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_NUM_STEPS: usize = 50;
/// DDPM's linear endpoints (1e-4, 0.02 over 1000 steps) rescaled to 50 steps.
pub const DEFAULT_BETA_START: f64 = 0.002;
pub const DEFAULT_BETA_END: f64 = 0.4;

/// Discrete noise schedule. Steps are numbered `1..=num_steps`; `ᾱ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<S> {
    beta: Vec<S>,
    alpha_bar: Vec<S>,
}

impl<S: Real> NoiseSchedule<S> {
    /// Linearly spaced `β` from `beta_start` to `beta_end`.
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::InvalidArgument("num_steps must be positive".into()));
        }
        if !(beta_start > 0.0 && beta_end < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "betas must lie in (0, 1), got {beta_start}..{beta_end}"
            )));
        }
        if beta_start > beta_end {
            return Err(Error::InvalidArgument(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let beta = (0..num_steps)
            .map(|j| {
                if num_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * j as f64 / (num_steps - 1) as f64
                }
            })
            .map(S::lit)
            .collect();
        Self::from_betas(beta)
    }

    pub fn from_betas(beta: Vec<S>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("empty beta schedule".into()));
        }
        if let Some(b) = beta.iter().find(|&&b| !(b > S::zero() && b < S::one())) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = S::one();
        for &b in &beta {
            acc *= S::one() - b;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha_bar })
    }

    pub fn default_schedule() -> Self {
        Self::linear(DEFAULT_NUM_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }

    #[inline]
    pub fn num_steps(&self) -> usize {
        self.beta.len()
    }

    /// `β_i` for `i` in `1..=num_steps`.
    #[inline]
    pub fn beta(&self, i: usize) -> S {
        self.beta[i - 1]
    }

    /// `ᾱ_i` for `i` in `0..=num_steps`, with `ᾱ_0 = 1`.
    #[inline]
    pub fn alpha_bar(&self, i: usize) -> S {
        if i == 0 {
            S::one()
        } else {
            self.alpha_bar[i - 1]
        }
    }

    pub fn alpha_bars(&self) -> &[S] {
        &self.alpha_bar
    }

    pub fn betas(&self) -> &[S] {
        &self.beta
    }

    /// `a_i = sqrt((1 − ᾱ_{i−1}) / (1 − ᾱ_i))`
    #[inline]
    pub fn a(&self, i: usize) -> S {
        ((S::one() - self.alpha_bar(i - 1)) / (S::one() - self.alpha_bar(i))).sqrt()
    }

    /// `b_i = sqrt(ᾱ_{i−1}) − sqrt(ᾱ_i) a_i`
    #[inline]
    pub fn b(&self, i: usize) -> S {
        self.alpha_bar(i - 1).sqrt() - self.alpha_bar(i).sqrt() * self.a(i)
    }
}

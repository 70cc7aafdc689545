//! Lévy environment: path sampling and the exponent `beta`.
//!
//! The environment is a one-dimensional Lévy process
//!
//! ```text
//! xi(t) = a t + sigma W(t) + compensated small jumps + large jumps,
//! ```
//!
//! with a finite-activity jump measure given as atoms `(size, rate)`.
//! Jumps with `|size| <= 1` are compensated, which for atomic measures is
//! the exact linear drift `-t * sum rate * size` over the small atoms.
//! The exponent `beta` satisfies `E e^{xi(t)} = e^{beta t}` and shifts every
//! growth rate of the branching process.

use std::fmt::Write as _;

use rand::RngExt;
use rand_distr::{Poisson, StandardNormal};

use crate::scalar::Real;
use crate::stats::McEstimate;
use crate::{Error, Result};

/// One jump atom of the environment: jumps of a fixed `size` arriving at
/// Poisson `rate` per unit time.
#[derive(Clone, Copy, Debug)]
pub struct EnvJump<F> {
    pub size: F,
    pub rate: F,
}

impl<F: Real> EnvJump<F> {
    /// Small jumps are the compensated ones.
    pub fn is_small(&self) -> bool {
        self.size.abs() <= F::one()
    }
}

/// Environment parameters: drift, diffusion coefficient, and jump atoms.
#[derive(Clone, Debug)]
pub struct EnvSpec<F> {
    pub drift: F,
    pub sigma: F,
    pub jumps: Vec<EnvJump<F>>,
}

impl<F: Real> EnvSpec<F> {
    pub fn new(drift: F, sigma: F, jumps: Vec<EnvJump<F>>) -> Result<Self> {
        if !drift.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidInput(
                "environment drift and sigma must be finite".into(),
            ));
        }
        if sigma < F::zero() {
            return Err(Error::InvalidInput(format!(
                "environment sigma must be nonnegative, got {sigma}"
            )));
        }
        for j in &jumps {
            if !j.size.is_finite() || !j.rate.is_finite() {
                return Err(Error::InvalidInput(
                    "environment jump atoms must be finite".into(),
                ));
            }
            if j.size == F::zero() {
                return Err(Error::InvalidInput(
                    "environment jump of size zero is not a jump".into(),
                ));
            }
            if j.rate <= F::zero() {
                return Err(Error::InvalidInput(format!(
                    "environment jump rate must be positive, got {}",
                    j.rate
                )));
            }
        }
        Ok(Self {
            drift,
            sigma,
            jumps,
        })
    }

    /// The still environment `xi = 0`.
    pub fn still() -> Self {
        Self {
            drift: F::zero(),
            sigma: F::zero(),
            jumps: Vec::new(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma == F::zero() && self.jumps.is_empty()
    }

    /// Exponent of the exponential moment: `E e^{xi(t)} = e^{beta t}` with
    ///
    /// ```text
    /// beta = a + sigma^2/2 + sum_{|z|<=1} rate (e^z - 1 - z)
    ///          + sum_{|z|>1} rate (e^z - 1).
    /// ```
    pub fn beta(&self) -> F {
        let mut beta = self.drift + self.sigma * self.sigma / F::of(2.0);
        for j in &self.jumps {
            if j.is_small() {
                beta += j.rate * (j.size.exp_m1() - j.size);
            } else {
                beta += j.rate * j.size.exp_m1();
            }
        }
        beta
    }

    /// Mean slope `E xi(t) / t`: drift plus the uncompensated large-jump
    /// mass; compensated small jumps are mean-zero.
    pub fn mean_slope(&self) -> F {
        let mut slope = self.drift;
        for j in &self.jumps {
            if !j.is_small() {
                slope += j.rate * j.size;
            }
        }
        slope
    }

    /// Compensation rate `sum_{|z|<=1} rate * size` subtracted linearly in
    /// time from the path.
    fn small_jump_compensation_rate(&self) -> F {
        let mut rate = F::zero();
        for j in &self.jumps {
            if j.is_small() {
                rate += j.rate * j.size;
            }
        }
        rate
    }

    /// Samples a path on the uniform grid covering `[0, horizon]` with
    /// approximately the requested step (the horizon is divided evenly).
    ///
    /// Jumps are placed at exact exponential arrival times, logged, and
    /// folded into the grid values; Brownian increments are Gaussian per
    /// cell. Draw order is fixed for reproducibility: all arrival times of
    /// jump atom 0, then atom 1, ..., then one Gaussian per grid cell.
    pub fn sample_path(&self, horizon: F, dt: F, rng: &mut impl rand::Rng) -> Result<EnvPath<F>> {
        if !(horizon > F::zero()) || !(dt > F::zero()) || dt > horizon {
            return Err(Error::InvalidInput(format!(
                "need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}"
            )));
        }
        let cells = (horizon / dt).round().to_usize().unwrap_or(0).max(1);
        let step = horizon / F::of(cells as f64);

        let mut jump_log: Vec<(F, F)> = Vec::new();
        for j in &self.jumps {
            let mut t = F::zero();
            loop {
                let e: f64 = rng.sample(rand_distr::Exp1);
                t += F::of(e) / j.rate;
                if t > horizon {
                    break;
                }
                jump_log.push((t, j.size));
            }
        }
        jump_log.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite jump times"));

        let comp = self.small_jump_compensation_rate();
        let mut values = Vec::with_capacity(cells + 1);
        values.push(F::zero());
        let mut diffusion = F::zero();
        let sqrt_step = step.sqrt();
        let mut jump_cursor = 0usize;
        let mut jump_sum = F::zero();
        for k in 1..=cells {
            let tk = step * F::of(k as f64);
            if self.sigma > F::zero() {
                let g: f64 = rng.sample(StandardNormal);
                diffusion += self.sigma * sqrt_step * F::of(g);
            }
            while jump_cursor < jump_log.len() && jump_log[jump_cursor].0 <= tk {
                jump_sum += jump_log[jump_cursor].1;
                jump_cursor += 1;
            }
            values.push((self.drift - comp) * tk + diffusion + jump_sum);
        }
        EnvPath::with_jumps(step, values, jump_log)
    }

    /// Monte-Carlo check of `E e^{xi(t)} = e^{beta t}` using exact marginal
    /// sampling of `xi(t)` (Gaussian plus Poisson atom counts), so the only
    /// error is statistical. Returns the estimate and the exact target.
    pub fn verify_exp_moment(
        &self,
        t: F,
        n_samples: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<(McEstimate<F>, F)> {
        if !(t > F::zero()) || n_samples < 100 {
            return Err(Error::InvalidInput(
                "need t > 0 and at least 100 samples".into(),
            ));
        }
        let comp = self.small_jump_compensation_rate();
        let base = (self.drift - comp) * t;
        let sigma_t = self.sigma * t.sqrt();
        let poissons: Vec<(Poisson<f64>, F)> = self
            .jumps
            .iter()
            .map(|j| {
                let mean = (j.rate * t).as_f64();
                Poisson::new(mean)
                    .map(|p| (p, j.size))
                    .map_err(|e| Error::InvalidInput(format!("invalid Poisson mean: {e}")))
            })
            .collect::<Result<_>>()?;
        let mut samples = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut xi = base;
            if self.sigma > F::zero() {
                let g: f64 = rng.sample(StandardNormal);
                xi += sigma_t * F::of(g);
            }
            for (p, size) in &poissons {
                let count: f64 = rng.sample(*p);
                xi += *size * F::of(count);
            }
            samples.push(xi.exp());
        }
        let target = (self.beta() * t).exp();
        Ok((McEstimate::from_values(&samples), target))
    }
}

/// A realised environment path on a uniform grid, with its jump log.
///
/// Sampled paths start at `xi(0) = 0`; the synthetic constructors used in
/// closed-form tests may start anywhere.
#[derive(Clone, Debug)]
pub struct EnvPath<F> {
    step: F,
    values: Vec<F>,
    jumps: Vec<(F, F)>,
}

impl<F: Real> EnvPath<F> {
    /// Builds a path from grid values spaced `step` apart, with an explicit
    /// jump log of `(time, size)` pairs.
    pub fn with_jumps(step: F, values: Vec<F>, jumps: Vec<(F, F)>) -> Result<Self> {
        if !(step > F::zero()) || !step.is_finite() {
            return Err(Error::InvalidInput(format!(
                "path step must be positive and finite, got {step}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput(
                "a path needs at least two grid values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("path values must be finite".into()));
        }
        let horizon = step * F::of((values.len() - 1) as f64);
        for &(t, size) in &jumps {
            if !(t > F::zero()) || t > horizon || size == F::zero() {
                return Err(Error::InvalidInput(
                    "jump log entries must have time in (0, horizon] and nonzero size".into(),
                ));
            }
        }
        Ok(Self {
            step,
            values,
            jumps,
        })
    }

    /// Path from values only, with an empty jump log.
    pub fn from_values(step: F, values: Vec<F>) -> Result<Self> {
        Self::with_jumps(step, values, Vec::new())
    }

    /// Constant path `xi = value` over `cells` grid cells of width `step`.
    pub fn constant(value: F, step: F, cells: usize) -> Result<Self> {
        Self::from_values(step, vec![value; cells + 1])
    }

    /// The still path `xi = 0`.
    pub fn zero(step: F, cells: usize) -> Result<Self> {
        Self::constant(F::zero(), step, cells)
    }

    pub fn step(&self) -> F {
        self.step
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> F {
        self.step * F::of(self.cells() as f64)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn jumps(&self) -> &[(F, F)] {
        &self.jumps
    }

    /// Grid time of node `k`.
    pub fn time(&self, k: usize) -> F {
        self.step * F::of(k as f64)
    }

    /// Path value at node `k`.
    pub fn value(&self, k: usize) -> F {
        self.values[k]
    }

    /// Index of the grid node at or just below time `t`, clamped to the
    /// grid; `t` at the horizon maps to the last node.
    pub fn index_at(&self, t: F) -> usize {
        let raw = (t / self.step).floor().to_usize().unwrap_or(0);
        raw.min(self.cells())
    }

    /// Path value frozen over the cell `[t_k, t_{k+1})` containing `t`,
    /// which is the value at the cell's left endpoint.
    pub fn cell_value(&self, t: F) -> F {
        let k = self.index_at(t).min(self.cells().saturating_sub(1));
        self.values[k]
    }

    /// CSV rendering with columns `t,xi`, one row per grid node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,xi\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.time(k), v);
        }
        out
    }
}

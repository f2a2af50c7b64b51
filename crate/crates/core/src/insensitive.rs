//! Joint occupancy/age law at the mean-field fixed point, and the
//! single-server product form with state-dependent Poisson arrivals.

use crate::error::{invalid, Error, Result};
use crate::mf_exp::{birth_death_stationary, power_sum_ratio_unchecked, solve_fixed_point, OccupancyDist};
use crate::service::ServiceDistribution;

fn check_ages(y: &[f64], n: usize) -> Result<Vec<f64>> {
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if let Some(v) = y.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(invalid("y", format!("age bounds must be nonnegative, got {v}")));
    }
    // Sorted so that permuted inputs give bitwise identical products.
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn age_product(dist: &ServiceDistribution, y: &[f64]) -> f64 {
    y.iter().map(|&v| dist.age_factor(v)).product()
}

/// `π(n, y_1..y_n) = π^(exp)(n) ∏ μ∫_0^{y_i} Ḡ`.
#[derive(Debug, Clone)]
pub struct InsensitiveFixedPoint {
    pi_exp: OccupancyDist,
    dist: ServiceDistribution,
    mu: f64,
}

impl InsensitiveFixedPoint {
    /// Solves the exponential fixed point for `(λ, μ, C, d)` and pairs it with
    /// `dist`, which must have mean `1/μ`.
    pub fn new(lambda: f64, mu: f64, capacity: usize, d: u32, dist: ServiceDistribution) -> Result<Self> {
        let pi_exp = solve_fixed_point(lambda, mu, capacity, d)?.occupancy();
        Self::from_parts(pi_exp, dist, mu)
    }

    pub fn from_parts(pi_exp: OccupancyDist, dist: ServiceDistribution, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid("mu", "must be positive"));
        }
        dist.check_mean(1.0 / mu)?;
        Ok(Self { pi_exp, dist, mu })
    }

    pub fn pi_exp(&self) -> &OccupancyDist {
        &self.pi_exp
    }

    pub fn dist(&self) -> &ServiceDistribution {
        &self.dist
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn capacity(&self) -> usize {
        self.pi_exp.capacity()
    }

    /// Joint probability of exactly `n` jobs with ages bounded by `y`
    /// (`f64::INFINITY` leaves a coordinate unconstrained).
    pub fn eval_pi(&self, n: usize, y: &[f64]) -> Result<f64> {
        if n > self.capacity() {
            return Err(Error::Domain(format!(
                "occupancy {n} exceeds capacity {}",
                self.capacity()
            )));
        }
        let y = check_ages(y, n)?;
        Ok(self.pi_exp.as_slice()[n] * age_product(&self.dist, &y))
    }

    /// `π(n, y, …, y)`.
    pub fn eval_pi_diagonal(&self, n: usize, y: f64) -> Result<f64> {
        self.eval_pi(n, &vec![y; n])
    }

    /// `λ^(GEN)_n = λ (R_nᵈ − R_{n+1}ᵈ)/π(n)` for `n < C`, from the tails of π.
    pub fn generic_arrival_rates(&self, lambda: f64, d: u32) -> Vec<f64> {
        let r = self.pi_exp.tails();
        (0..self.capacity())
            .map(|n| lambda * power_sum_ratio_unchecked(r[n], r[n + 1], d))
            .collect()
    }
}

/// Poisson arrivals at rate `α_n` while `n` jobs are in service, general service.
#[derive(Debug, Clone)]
pub struct StateDepArrivalLaw {
    alpha: Vec<f64>,
    dist: ServiceDistribution,
    mu: f64,
}

impl StateDepArrivalLaw {
    pub fn new(alpha: Vec<f64>, dist: ServiceDistribution) -> Result<Self> {
        if alpha.is_empty() {
            return Err(invalid("alpha", "needs at least one rate"));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(invalid("alpha", format!("rates must be nonnegative, got {a}")));
        }
        let mu = dist.rate();
        Ok(Self { alpha, dist, mu })
    }

    /// Capacity, the number of rates.
    pub fn capacity(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dist(&self) -> &ServiceDistribution {
        &self.dist
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Stationary occupancy, `∏_{i≤n} α_{i−1}/(iμ)` normalised.
    pub fn occupancy(&self) -> Result<OccupancyDist> {
        birth_death_stationary(&self.alpha, self.mu, self.capacity())
    }
}

/// Stationary probability of `n` jobs with ages bounded by `y` in the
/// single-server system.
pub fn single_server_product_form(law: &StateDepArrivalLaw, n: usize, y: &[f64]) -> Result<f64> {
    if n > law.capacity() {
        return Err(Error::Domain(format!(
            "occupancy {n} exceeds capacity {}",
            law.capacity()
        )));
    }
    let y = check_ages(y, n)?;
    Ok(law.occupancy()?.as_slice()[n] * age_product(&law.dist, &y))
}

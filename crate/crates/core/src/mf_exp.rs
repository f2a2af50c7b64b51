//! Mean-field machinery for exponential service.
//!
//! * the fixed-point map `θ(P) = S(Λ(P), P)` on tail vectors and its solver,
//! * the occupancy-level mean-field ODE for the homogeneous cluster,
//! * the occupancy-level ODE for heterogeneous clusters routed by maximum vacancy.
//!
//! Every `(aᵈ - bᵈ)/(a - b)` ratio is evaluated as the power sum
//! `Σ aⁱ b^{d-1-i}` so that levels with no mass never produce `0/0`.

use crate::error::{invalid, Error, Result};
use crate::ode::{self, StepPlan, Trajectory};

/// `Σ_{i=0}^{d-1} aⁱ b^{d-1-i}`, i.e. `(aᵈ - bᵈ)/(a - b)` without the division.
///
/// Requires `0 ≤ b ≤ a ≤ 1` and `d ≥ 1`.
pub fn power_sum_ratio(a: f64, b: f64, d: u32) -> Result<f64> {
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return Err(Error::Domain(format!(
            "power_sum_ratio arguments must lie in [0, 1], got a={a}, b={b}"
        )));
    }
    if b > a {
        return Err(Error::Domain(format!(
            "tails must be monotone: b={b} exceeds a={a}"
        )));
    }
    Ok(power_sum_ratio_unchecked(a, b, d))
}

/// Horner evaluation in `a`; used on ODE stages where roundoff may push a
/// tail a few ulps past its neighbour.
#[inline]
pub(crate) fn power_sum_ratio_unchecked(a: f64, b: f64, d: u32) -> f64 {
    let mut s = 1.0;
    let mut b_pow = 1.0;
    for _ in 1..d {
        b_pow *= b;
        s = s * a + b_pow;
    }
    s
}

/// Suffix sums `R_n = Σ_{j ≥ n} q_j`, returned with length `q.len() + 1`
/// (the trailing entry is `R_{C+1} = 0`).
pub fn tails(q: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; q.len() + 1];
    for n in (0..q.len()).rev() {
        r[n] = r[n + 1] + q[n];
    }
    r
}

/// Probability that a server holds exactly `n` jobs, `n = 0..=C`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDist {
    q: Vec<f64>,
}

impl OccupancyDist {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(invalid("q", "must have at least one level"));
        }
        if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid("q", format!("entries must be nonnegative, got {v}")));
        }
        let s: f64 = q.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(invalid("q", format!("must sum to 1 within 1e-10, sums to {s}")));
        }
        Ok(Self { q })
    }

    /// Clamps undershoot from numerical integration to zero and renormalises.
    pub fn from_approximate(q: &[f64]) -> Result<Self> {
        let clamped: Vec<f64> = q.iter().map(|v| v.max(0.0)).collect();
        let s: f64 = clamped.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(invalid("q", "no probability mass"));
        }
        Self::new(clamped.into_iter().map(|v| v / s).collect())
    }

    /// All mass on the empty level.
    pub fn empty(capacity: usize) -> Self {
        let mut q = vec![0.0; capacity + 1];
        q[0] = 1.0;
        Self { q }
    }

    pub fn capacity(&self) -> usize {
        self.q.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }

    pub fn tails(&self) -> Vec<f64> {
        tails(&self.q)
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.q
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Monotone tail probabilities `P_0 = 1 ≥ P_1 ≥ … ≥ P_C ≥ P_{C+1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailVector {
    p: Vec<f64>,
}

impl TailVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(invalid("P", "needs at least P_0 and P_{C+1}"));
        }
        if p[0] != 1.0 {
            return Err(invalid("P", format!("P_0 must be 1, got {}", p[0])));
        }
        if *p.last().unwrap() != 0.0 {
            return Err(invalid("P", "P_{C+1} must be 0"));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("P", "entries must lie in [0, 1]"));
        }
        if p.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("P", "tails must be nonincreasing"));
        }
        Ok(Self { p })
    }

    pub fn from_occupancy(q: &OccupancyDist) -> Self {
        let mut p = tails(q.as_slice());
        p[0] = 1.0;
        // Suffix sums of nonnegative terms are already monotone; clamp roundoff above 1.
        for v in p.iter_mut() {
            *v = v.min(1.0);
        }
        Self { p }
    }

    pub fn capacity(&self) -> usize {
        self.p.len() - 2
    }

    pub fn tail(&self, n: usize) -> f64 {
        self.p[n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Occupancy probabilities `p_n = P_n - P_{n+1}`.
    pub fn occupancy(&self) -> OccupancyDist {
        OccupancyDist {
            q: self.p.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect(),
        }
    }
}

/// Per-level arrival rates `λ_n = λ (P_nᵈ - P_{n+1}ᵈ)/(P_n - P_{n+1})`, `n = 0..=C`.
pub fn lambda_map(p: &TailVector, lambda: f64, d: u32) -> Vec<f64> {
    p.as_slice()
        .windows(2)
        .map(|w| lambda * power_sum_ratio_unchecked(w[0], w[1], d))
        .collect()
}

/// Stationary law of the birth–death chain on `0..=capacity` with birth rate
/// `birth[n]` out of level `n` and death rate `n μ`.
pub fn birth_death_stationary(birth: &[f64], mu: f64, capacity: usize) -> Result<OccupancyDist> {
    if birth.len() < capacity {
        return Err(Error::Dimension {
            expected: capacity,
            actual: birth.len(),
        });
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if let Some(b) = birth[..capacity].iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(invalid("birth", format!("rates must be nonnegative, got {b}")));
    }
    let mut w = Vec::with_capacity(capacity + 1);
    w.push(1.0);
    for n in 1..=capacity {
        let prev = w[n - 1];
        w.push(prev * birth[n - 1] / (n as f64 * mu));
    }
    let total: f64 = w.iter().sum();
    OccupancyDist::new(w.into_iter().map(|v| v / total).collect())
}

/// Erlang loss law (truncated Poisson) for offered load `λ/μ`.
pub fn erlang_b(lambda: f64, mu: f64, capacity: usize) -> Result<OccupancyDist> {
    birth_death_stationary(&vec![lambda; capacity], mu, capacity)
}

/// One application of the fixed-point map `θ(P) = S(Λ(P), P)`.
pub fn theta(p: &TailVector, lambda: f64, mu: f64, d: u32) -> Result<TailVector> {
    let rates = lambda_map(p, lambda, d);
    let q = birth_death_stationary(&rates, mu, p.capacity())?;
    Ok(TailVector::from_occupancy(&q))
}

fn check_rates(lambda: f64, mu: f64, capacity: usize, d: u32) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if capacity == 0 {
        return Err(invalid("capacity", "must be at least 1"));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    Ok(())
}

/// Plain θ-iteration started from the Erlang loss law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointSolver {
    /// Stop once successive iterates differ by less than this in sup norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointSolver {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 1_000_000,
        }
    }
}

impl FixedPointSolver {
    pub fn solve(&self, lambda: f64, mu: f64, capacity: usize, d: u32) -> Result<TailVector> {
        check_rates(lambda, mu, capacity, d)?;
        let mut p = TailVector::from_occupancy(&erlang_b(lambda, mu, capacity)?);
        let mut residual = f64::INFINITY;
        for _ in 0..self.max_iter {
            let next = theta(&p, lambda, mu, d)?;
            residual = sup_diff(next.as_slice(), p.as_slice());
            p = next;
            if residual < self.tol {
                return Ok(p);
            }
        }
        Err(Error::NoConvergence {
            iterations: self.max_iter,
            residual,
        })
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The exponential-service mean-field fixed point `π^(exp)` in tail form.
pub fn solve_fixed_point(lambda: f64, mu: f64, capacity: usize, d: u32) -> Result<TailVector> {
    FixedPointSolver::default().solve(lambda, mu, capacity, d)
}

/// Mean-field blocking probability `P_Cᵈ`: every probe lands on a full server.
pub fn blocking_probability(p: &TailVector, d: u32) -> f64 {
    p.tail(p.capacity()).powi(d as i32)
}

// dQ_n/dt for a birth–death chain with births `rate[n] * q[n]` out of level n
// and deaths `n μ q[n]`.
fn birth_death_drift(q: &[f64], rate: &[f64], mu: f64, out: &mut [f64]) {
    let c = q.len() - 1;
    for n in 0..=c {
        let mut v = 0.0;
        if n < c {
            v += (n + 1) as f64 * mu * q[n + 1];
            v -= rate[n] * q[n];
        }
        if n > 0 {
            v += rate[n - 1] * q[n - 1];
        }
        v -= n as f64 * mu * q[n];
        out[n] = v;
    }
}

/// Right-hand side of the homogeneous occupancy mean-field ODE, written into `out`.
pub fn exp_occupancy_rhs_into(q: &[f64], lambda: f64, mu: f64, d: u32, out: &mut [f64]) {
    let r = tails(q);
    let c = q.len() - 1;
    let rate: Vec<f64> = (0..c)
        .map(|n| lambda * power_sum_ratio_unchecked(r[n], r[n + 1], d))
        .collect();
    birth_death_drift(q, &rate, mu, out);
}

/// Right-hand side `dQ/dt` of the homogeneous occupancy mean-field ODE.
pub fn exp_occupancy_rhs(q: &[f64], lambda: f64, mu: f64, d: u32) -> Vec<f64> {
    let mut out = vec![0.0; q.len()];
    exp_occupancy_rhs_into(q, lambda, mu, d, &mut out);
    out
}

/// Integrates the homogeneous occupancy ODE from `q0`.
pub fn integrate_exp_occupancy(
    q0: &[f64],
    lambda: f64,
    mu: f64,
    d: u32,
    plan: &StepPlan,
) -> Result<Trajectory> {
    let block = [0..q0.len()];
    ode::integrate(
        |x, dx| exp_occupancy_rhs_into(x, lambda, mu, d, dx),
        q0,
        plan,
        &block,
    )
}

/// Server types of a heterogeneous cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroProfile {
    gamma: Vec<f64>,
    capacity: Vec<usize>,
    lambda: f64,
    mu: f64,
    offsets: Vec<usize>,
}

impl HeteroProfile {
    /// `gamma[k]` is the fraction of type-`k` servers, `capacity[k]` their
    /// capacity (nondecreasing in `k`); `lambda` is the arrival rate per server.
    pub fn new(gamma: Vec<f64>, capacity: Vec<usize>, lambda: f64, mu: f64) -> Result<Self> {
        if gamma.is_empty() || gamma.len() != capacity.len() {
            return Err(invalid(
                "gamma",
                "needs one fraction per capacity and at least one type",
            ));
        }
        if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("gamma", "fractions must be positive"));
        }
        let s: f64 = gamma.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(invalid("gamma", format!("must sum to 1 within 1e-12, sums to {s}")));
        }
        if capacity.iter().any(|c| *c == 0) {
            return Err(invalid("capacity", "capacities must be at least 1"));
        }
        if capacity.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("capacity", "capacities must be nondecreasing by type"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be nonnegative, got {lambda}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        let mut offsets = Vec::with_capacity(capacity.len() + 1);
        offsets.push(0);
        for c in &capacity {
            offsets.push(offsets.last().unwrap() + c + 1);
        }
        Ok(Self {
            gamma,
            capacity,
            lambda,
            mu,
            offsets,
        })
    }

    pub fn homogeneous(capacity: usize, lambda: f64, mu: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![capacity], lambda, mu)
    }

    pub fn types(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacity
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Length of the flattened state (all types' occupancy vectors back to back).
    pub fn state_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Index range of type `k` inside the flattened state.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.types()).map(|k| self.block(k)).collect()
    }

    /// Flattened state with every server empty.
    pub fn empty_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.state_len()];
        for k in 0..self.types() {
            x[self.offsets[k]] = 1.0;
        }
        x
    }

    /// Splits a flattened state into per-type occupancy vectors.
    pub fn split<'a>(&self, state: &'a [f64]) -> Vec<&'a [f64]> {
        (0..self.types()).map(|k| &state[self.block(k)]).collect()
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(Error::Dimension {
                expected: self.state_len(),
                actual: state.len(),
            });
        }
        Ok(())
    }
}

/// Arrival intensity into type-`k` servers holding `n` jobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeteroFlow {
    /// Rate seen by one such server, `λ_{k,n}`.
    pub rate: f64,
    /// Arrivals per unit time per server of the whole cluster that land on
    /// (or, at `n = C_k`, are blocked at) such servers: `λ (Aᵈ - Bᵈ)`.
    /// Zero whenever the level carries no mass.
    pub flow: f64,
}

// Tail of type `i` at a possibly out-of-range level.
fn clamped_tail(r: &[f64], level: isize) -> f64 {
    if level <= 0 {
        r[0]
    } else if level as usize >= r.len() {
        0.0
    } else {
        r[level as usize]
    }
}

// Mass of servers ranked at most as good as (k, n) under max-vacancy routing,
// inclusive (A) and exclusive (B). Ranking: larger vacancy first, then larger
// type index (capacity nondecreasing in type).
fn vacancy_masses(profile: &HeteroProfile, r: &[Vec<f64>], k: usize, n: usize) -> (f64, f64) {
    let ck = profile.capacity[k] as isize;
    let n = n as isize;
    let mut a = 0.0;
    let mut b = 0.0;
    for (i, (g, ri)) in profile.gamma.iter().zip(r).enumerate() {
        let shift = profile.capacity[i] as isize - ck;
        let at_or_below = clamped_tail(ri, n + shift);
        let strictly_below = clamped_tail(ri, n + 1 + shift);
        a += g * if i <= k { at_or_below } else { strictly_below };
        b += g * if i < k { at_or_below } else { strictly_below };
    }
    (a, b)
}

fn type_tails(profile: &HeteroProfile, state: &[f64]) -> Vec<Vec<f64>> {
    profile.split(state).into_iter().map(tails).collect()
}

/// Max-vacancy arrival intensity into type `k`, level `n` (`0 ≤ n ≤ C_k`).
///
/// `state` is the flattened per-type occupancy state. At `n = C_k` the flow
/// counts arrivals blocked at that type.
pub fn hetero_arrival_rate(
    state: &[f64],
    profile: &HeteroProfile,
    k: usize,
    n: usize,
    d: u32,
) -> Result<HeteroFlow> {
    profile.check_state(state)?;
    if k >= profile.types() {
        return Err(Error::Domain(format!("type {k} out of range")));
    }
    if n > profile.capacity[k] {
        return Err(Error::Domain(format!(
            "level {n} exceeds capacity {} of type {k}",
            profile.capacity[k]
        )));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    let r = type_tails(profile, state);
    let (a, b) = vacancy_masses(profile, &r, k, n);
    let rate = profile.lambda * power_sum_ratio_unchecked(a, b, d);
    let mass = state[profile.block(k)][n];
    Ok(HeteroFlow {
        rate,
        flow: profile.gamma[k] * mass * rate,
    })
}

/// Right-hand side of the heterogeneous occupancy ODE on the flattened state.
pub fn hetero_occupancy_rhs_into(state: &[f64], profile: &HeteroProfile, d: u32, out: &mut [f64]) {
    let r = type_tails(profile, state);
    for k in 0..profile.types() {
        let block = profile.block(k);
        let c = profile.capacity[k];
        let rate: Vec<f64> = (0..c)
            .map(|n| {
                let (a, b) = vacancy_masses(profile, &r, k, n);
                profile.lambda * power_sum_ratio_unchecked(a, b, d)
            })
            .collect();
        birth_death_drift(&state[block.clone()], &rate, profile.mu, &mut out[block]);
    }
}

pub fn hetero_occupancy_rhs(state: &[f64], profile: &HeteroProfile, d: u32) -> Result<Vec<f64>> {
    profile.check_state(state)?;
    let mut out = vec![0.0; state.len()];
    hetero_occupancy_rhs_into(state, profile, d, &mut out);
    Ok(out)
}

pub fn integrate_hetero(
    state0: &[f64],
    profile: &HeteroProfile,
    d: u32,
    plan: &StepPlan,
) -> Result<Trajectory> {
    profile.check_state(state0)?;
    ode::integrate(
        |x, dx| hetero_occupancy_rhs_into(x, profile, d, dx),
        state0,
        plan,
        &profile.blocks(),
    )
}

/// Stationary point of the heterogeneous ODE, reached by integrating from the
/// empty state over `plan`. Fails if the residual is not below `tol`.
pub fn hetero_equilibrium(
    profile: &HeteroProfile,
    d: u32,
    plan: &StepPlan,
    tol: f64,
) -> Result<Vec<f64>> {
    let plan = StepPlan {
        out_every: plan.steps().max(1),
        ..plan.clone()
    };
    let traj = integrate_hetero(&profile.empty_state(), profile, d, &plan)?;
    let x = traj.last().to_vec();
    let residual = hetero_occupancy_rhs(&x, profile, d)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if residual >= tol {
        return Err(Error::NoConvergence {
            iterations: plan.steps(),
            residual,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Truncated Poisson weights a^n / n!, computed without the birth-death code.
    fn truncated_poisson(load: f64, c: usize) -> Vec<f64> {
        let mut w = vec![1.0];
        let mut fact = 1.0;
        for n in 1..=c {
            fact *= n as f64;
            w.push(load.powi(n as i32) / fact);
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    }

    #[test]
    fn power_sum_ratio_examples() {
        assert!(close(power_sum_ratio(0.6, 0.2, 2).unwrap(), (0.36 - 0.04) / 0.4, 1e-15));
        assert!(close(power_sum_ratio(0.6, 0.2, 2).unwrap(), 0.8, 1e-15));
        assert_eq!(power_sum_ratio(0.5, 0.5, 2).unwrap(), 1.0);
        assert_eq!(power_sum_ratio(1.0, 0.0, 3).unwrap(), 1.0);
        assert!(matches!(power_sum_ratio(0.2, 0.6, 2), Err(Error::Domain(_))));
        assert!(power_sum_ratio(0.5, 0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn power_sum_ratio_matches_quotient(a in 0.0f64..=1.0, frac in 0.0f64..0.999, d in 1u32..8) {
            let b = a * frac;
            prop_assume!(a - b > 1e-3);
            let direct = (a.powi(d as i32) - b.powi(d as i32)) / (a - b);
            prop_assert!((power_sum_ratio(a, b, d).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn lambda_map_examples() {
        let p = TailVector::new(vec![1.0, 0.6, 0.2, 0.0]).unwrap();
        assert!(lambda_map(&p, 1.0, 1).iter().all(|v| *v == 1.0));
        let rates = lambda_map(&p, 1.0, 2);
        assert!(close(rates[0], 1.6, 1e-15));
        assert!(close(rates[1], 0.8, 1e-15));
        assert!(close(rates[2], 0.2, 1e-15));
        let flat = TailVector::new(vec![1.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(lambda_map(&flat, 2.0, 2)[1], 2.0);
    }

    #[test]
    fn lambda_map_brackets() {
        let p = TailVector::new(vec![1.0, 0.7, 0.3, 0.05, 0.0]).unwrap();
        let (lambda, d) = (1.5, 3);
        for (n, r) in lambda_map(&p, lambda, d).iter().enumerate() {
            let lo = lambda * d as f64 * p.tail(n + 1).powi(d as i32 - 1);
            let hi = lambda * d as f64 * p.tail(n).powi(d as i32 - 1);
            assert!(*r >= lo - 1e-15 && *r <= hi + 1e-15);
        }
    }

    #[test]
    fn birth_death_examples() {
        let q = birth_death_stationary(&[1.0, 1.0], 1.0, 2).unwrap();
        for (a, b) in q.as_slice().iter().zip([0.4, 0.4, 0.2]) {
            assert!(close(*a, b, 1e-15));
        }
        let idle = birth_death_stationary(&[0.0, 0.0, 0.0], 1.0, 3).unwrap();
        assert_eq!(idle.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(birth_death_stationary(&[], 1.0, 0).unwrap().as_slice(), &[1.0]);
        assert!(birth_death_stationary(&[1.0], 1.0, 2).is_err());
    }

    #[test]
    fn fixed_point_examples() {
        let p = solve_fixed_point(1.0, 1.0, 2, 1).unwrap();
        for (a, b) in p.as_slice().iter().zip([1.0, 0.6, 0.2, 0.0]) {
            assert!(close(*a, b, 1e-12));
        }
        // λ(1 - P_1²) = μ P_1  =>  P_1² + P_1 - 1 = 0
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        let p = solve_fixed_point(1.0, 1.0, 1, 2).unwrap();
        assert!(close(p.tail(1), golden, 1e-10));
        assert!(close(p.tail(1), 0.618_033_988_7, 1e-10));
        let p = solve_fixed_point(1e-9, 1.0, 3, 2).unwrap();
        assert!(p.tail(1) <= 2e-9);
    }

    #[test]
    fn fixed_point_residual() {
        for &(lambda, c, d) in &[(1.0, 5, 2), (5.0, 5, 2), (20.0, 5, 3), (0.3, 8, 4)] {
            let p = solve_fixed_point(lambda, 1.0, c, d).unwrap();
            let next = theta(&p, lambda, 1.0, d).unwrap();
            assert!(sup_diff(next.as_slice(), p.as_slice()) <= 1e-12);
        }
    }

    #[test]
    fn fixed_point_rejects_bad_input() {
        assert!(solve_fixed_point(0.0, 1.0, 2, 2).is_err());
        assert!(solve_fixed_point(1.0, 1.0, 0, 2).is_err());
        assert!(solve_fixed_point(1.0, 1.0, 2, 0).is_err());
        let starved = FixedPointSolver { tol: 0.0, max_iter: 3 };
        assert!(matches!(
            starved.solve(1.0, 1.0, 5, 2),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn single_choice_is_erlang_loss() {
        for lambda in [0.5, 1.0, 2.0] {
            for c in 1..=20 {
                let got = solve_fixed_point(lambda, 1.0, c, 1).unwrap().occupancy();
                let oracle = truncated_poisson(lambda, c);
                assert!(got.sup_distance(&oracle) <= 1e-10, "λ={lambda} C={c}");
            }
        }
    }

    #[test]
    fn only_the_load_matters() {
        let base = solve_fixed_point(1.3, 1.0, 6, 2).unwrap();
        for scale in [0.01, 0.5, 7.0, 300.0] {
            let scaled = solve_fixed_point(1.3 * scale, scale, 6, 2).unwrap();
            assert!(sup_diff(base.as_slice(), scaled.as_slice()) <= 1e-10);
        }
    }

    #[test]
    fn blocking_examples() {
        let p = TailVector::new(vec![1.0, 0.6, 0.2, 0.0]).unwrap();
        assert!(close(blocking_probability(&p, 1), 0.2, 1e-15));
        assert!(close(blocking_probability(&p, 2), 0.04, 1e-15));
        let empty = TailVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(blocking_probability(&empty, 3), 0.0);
    }

    #[test]
    fn occupancy_rhs_examples() {
        let dq = exp_occupancy_rhs(&[0.5, 0.5], 1.0, 1.0, 2);
        assert!(close(dq[0], -0.25, 1e-15) && close(dq[1], 0.25, 1e-15));
        let dq = exp_occupancy_rhs(&[0.0, 1.0], 0.0, 1.0, 2);
        assert_eq!(dq, vec![1.0, -1.0]);
        let fp = solve_fixed_point(1.0, 1.0, 5, 2).unwrap().occupancy();
        let dq = exp_occupancy_rhs(fp.as_slice(), 1.0, 1.0, 2);
        assert!(dq.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn fixed_point_is_ode_root() {
        for &(lambda, c, d) in &[(0.5, 3, 2), (1.0, 5, 3), (4.0, 10, 2), (9.0, 6, 5)] {
            let fp = solve_fixed_point(lambda, 1.0, c, d).unwrap().occupancy();
            let dq = exp_occupancy_rhs(fp.as_slice(), lambda, 1.0, d);
            assert!(dq.iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn occupancy_ode_relaxes_to_fixed_point() {
        let plan = StepPlan::new(1e-2, 60.0, 6000).unwrap();
        let tr = integrate_exp_occupancy(OccupancyDist::empty(5).as_slice(), 1.0, 1.0, 2, &plan).unwrap();
        let fp = solve_fixed_point(1.0, 1.0, 5, 2).unwrap().occupancy();
        assert!(fp.sup_distance(tr.last()) < 1e-9);
    }

    fn occupancy_strategy() -> impl Strategy<Value = Vec<f64>> {
        (1usize..8).prop_flat_map(|c| proptest::collection::vec(0.0f64..1.0, c + 1)).prop_filter_map(
            "no mass",
            |w| {
                let s: f64 = w.iter().sum();
                (s > 1e-6).then(|| w.iter().map(|v| v / s).collect())
            },
        )
    }

    proptest! {
        #[test]
        fn theta_preserves_tail_vectors(q in occupancy_strategy(), lambda in 0.01f64..20.0, d in 1u32..6) {
            let p = TailVector::from_occupancy(&OccupancyDist::new(q).unwrap());
            let next = theta(&p, lambda, 1.0, d).unwrap();
            prop_assert!(TailVector::new(next.as_slice().to_vec()).is_ok());
        }

        #[test]
        fn occupancy_rhs_conserves_mass(q in occupancy_strategy(), lambda in 0.0f64..10.0, d in 1u32..6) {
            let dq = exp_occupancy_rhs(&q, lambda, 1.0, d);
            prop_assert!(dq.iter().sum::<f64>().abs() < 1e-14);
        }

        #[test]
        fn small_euler_steps_stay_nonnegative(q in occupancy_strategy(), lambda in 0.0f64..10.0, d in 1u32..6) {
            let interior: Vec<f64> = q.iter().map(|v| 0.9 * v + 0.1 / q.len() as f64).collect();
            let dq = exp_occupancy_rhs(&interior, lambda, 1.0, d);
            let h = 1e-4;
            prop_assert!(interior.iter().zip(&dq).all(|(x, v)| x + h * v >= 0.0));
        }
    }

    fn two_type() -> HeteroProfile {
        HeteroProfile::new(vec![0.5, 0.5], vec![1, 2], 1.0, 1.0).unwrap()
    }

    #[test]
    fn hetero_profile_validation() {
        assert!(HeteroProfile::new(vec![0.5, 0.4], vec![1, 2], 1.0, 1.0).is_err());
        assert!(HeteroProfile::new(vec![0.5, 0.5], vec![2, 1], 1.0, 1.0).is_err());
        assert!(HeteroProfile::new(vec![0.5, 0.5], vec![0, 1], 1.0, 1.0).is_err());
        assert!(HeteroProfile::new(vec![1.0], vec![1, 2], 1.0, 1.0).is_err());
        let p = two_type();
        assert!(hetero_arrival_rate(&[1.0, 0.0], &p, 0, 0, 2).is_err());
        assert!(hetero_arrival_rate(&p.empty_state(), &p, 0, 2, 2).is_err());
    }

    #[test]
    fn hetero_empty_state_by_hand() {
        // Type-1 empties (vacancy 1) only win when every probe is a type-1
        // server; type-2 empties have vacancy 2 and beat them.
        let p = two_type();
        let x = p.empty_state();
        let f10 = hetero_arrival_rate(&x, &p, 0, 0, 2).unwrap();
        assert!(close(f10.flow, 0.25, 1e-15));
        assert!(close(f10.rate, 0.5, 1e-15));
        let f20 = hetero_arrival_rate(&x, &p, 1, 0, 2).unwrap();
        assert!(close(f20.flow, 0.75, 1e-15));
        assert!(close(f20.rate, 1.5, 1e-15));
        let f21 = hetero_arrival_rate(&x, &p, 1, 1, 2).unwrap();
        assert_eq!(f21.flow, 0.0);
    }

    // Independent oracle: enumerate every ordered d-tuple of probe classes and
    // apply max-vacancy routing directly.
    fn brute_force_flows(profile: &HeteroProfile, state: &[f64], d: u32) -> Vec<Vec<f64>> {
        let mut classes = vec![];
        for k in 0..profile.types() {
            for (n, q) in state[profile.block(k)].iter().enumerate() {
                classes.push((k, n, profile.gamma()[k] * q));
            }
        }
        let mut flows: Vec<Vec<f64>> = (0..profile.types())
            .map(|k| vec![0.0; profile.capacities()[k] + 1])
            .collect();
        let m = classes.len();
        let total = m.pow(d);
        for code in 0..total {
            let mut c = code;
            let mut prob = 1.0;
            let mut best: Option<(usize, usize)> = None;
            for _ in 0..d {
                let (k, n, w) = classes[c % m];
                c /= m;
                prob *= w;
                let key = |k: usize, n: usize| (profile.capacities()[k] - n, profile.capacities()[k], k);
                if best.map_or(true, |(bk, bn)| key(k, n) > key(bk, bn)) {
                    best = Some((k, n));
                }
            }
            let (k, n) = best.unwrap();
            flows[k][n] += profile.lambda() * prob;
        }
        flows
    }

    fn hetero_case() -> impl Strategy<Value = (HeteroProfile, Vec<f64>, u32)> {
        (
            proptest::collection::vec((0.1f64..1.0, 1usize..4), 1..4),
            1u32..4,
            0.1f64..5.0,
        )
            .prop_flat_map(|(types, d, lambda)| {
                let s: f64 = types.iter().map(|t| t.0).sum();
                let mut gamma: Vec<f64> = types.iter().map(|t| t.0 / s).collect();
                let head: f64 = gamma[..gamma.len() - 1].iter().sum();
                let last = gamma.len() - 1;
                gamma[last] = 1.0 - head;
                let mut caps: Vec<usize> = types.iter().map(|t| t.1).collect();
                caps.sort();
                let profile = HeteroProfile::new(gamma, caps, lambda, 1.0).unwrap();
                let len = profile.state_len();
                (Just(profile), proptest::collection::vec(0.0f64..1.0, len), Just(d))
            })
            .prop_map(|(profile, raw, d)| {
                let mut x = raw;
                for b in profile.blocks() {
                    let s: f64 = x[b.clone()].iter().sum::<f64>() + 1e-9;
                    x[b.clone()].iter_mut().for_each(|v| *v /= s);
                    let head: f64 = x[b.start..b.end - 1].iter().sum();
                    x[b.end - 1] = 1.0 - head;
                }
                (profile, x, d)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn hetero_flows_match_enumeration((profile, x, d) in hetero_case()) {
            let oracle = brute_force_flows(&profile, &x, d);
            let mut total = 0.0;
            for k in 0..profile.types() {
                for n in 0..=profile.capacities()[k] {
                    let f = hetero_arrival_rate(&x, &profile, k, n, d).unwrap();
                    prop_assert!((f.flow - oracle[k][n]).abs() < 1e-12, "k={} n={}: {} vs {}", k, n, f.flow, oracle[k][n]);
                    total += f.flow;
                }
            }
            prop_assert!((total - profile.lambda()).abs() < 1e-12);
        }

        #[test]
        fn hetero_rhs_conserves_each_type((profile, x, d) in hetero_case()) {
            let dx = hetero_occupancy_rhs(&x, &profile, d).unwrap();
            for b in profile.blocks() {
                prop_assert!(dx[b].iter().sum::<f64>().abs() < 1e-14);
            }
        }

        #[test]
        fn single_type_is_bitwise_homogeneous(q in occupancy_strategy(), lambda in 0.0f64..10.0, d in 1u32..6) {
            let profile = HeteroProfile::homogeneous(q.len() - 1, lambda, 1.0).unwrap();
            let hetero = hetero_occupancy_rhs(&q, &profile, d).unwrap();
            let homo = exp_occupancy_rhs(&q, lambda, 1.0, d);
            prop_assert!(hetero.iter().zip(&homo).all(|(a, b)| a.to_bits() == b.to_bits()));
            for n in 0..q.len() - 1 {
                let r = tails(&q);
                let f = hetero_arrival_rate(&q, &profile, 0, n, d).unwrap();
                prop_assert_eq!(f.rate, lambda * power_sum_ratio_unchecked(r[n], r[n + 1], d));
            }
        }
    }

    #[test]
    fn single_arrival_choice_flows_sum_to_lambda() {
        let p = HeteroProfile::new(vec![0.2, 0.3, 0.5], vec![1, 3, 3], 2.5, 1.0).unwrap();
        let mut x = p.empty_state();
        x[p.block(1)].copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        let total: f64 = (0..3)
            .flat_map(|k| (0..=p.capacities()[k]).map(move |n| (k, n)))
            .map(|(k, n)| hetero_arrival_rate(&x, &p, k, n, 1).unwrap().flow)
            .sum();
        assert!(close(total, 2.5, 1e-13));
    }

    #[test]
    fn hetero_pure_death_drift() {
        let p = HeteroProfile::new(vec![0.3, 0.7], vec![2, 4], 0.0, 1.0).unwrap();
        let x = vec![0.2, 0.3, 0.5, 0.1, 0.1, 0.2, 0.3, 0.3];
        let dx = hetero_occupancy_rhs(&x, &p, 2).unwrap();
        for k in 0..2 {
            let b = p.block(k);
            assert!(dx[b.start] >= 0.0);
            assert!(dx[b.end - 1] <= 0.0);
        }
    }

    #[test]
    fn hetero_equilibrium_is_stationary() {
        let p = HeteroProfile::new(vec![0.5, 0.5], vec![3, 6], 1.5, 1.0).unwrap();
        let plan = StepPlan::new(1e-2, 1e3, 1).unwrap();
        let x = hetero_equilibrium(&p, 2, &plan, 1e-8).unwrap();
        let dx = hetero_occupancy_rhs(&x, &p, 2).unwrap();
        assert!(dx.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn single_type_trajectory_is_bitwise_homogeneous() {
        let profile = HeteroProfile::homogeneous(5, 1.0, 1.0).unwrap();
        let plan = StepPlan::new(1e-2, 5.0, 10).unwrap();
        let q0 = OccupancyDist::empty(5);
        let a = integrate_hetero(q0.as_slice(), &profile, 2, &plan).unwrap();
        let b = integrate_exp_occupancy(q0.as_slice(), 1.0, 1.0, 2, &plan).unwrap();
        assert_eq!(a, b);
    }
}

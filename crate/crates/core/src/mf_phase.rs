//! Mean-field ODE for mixed-Erlang service.
//!
//! A server holding `n` jobs is described by the ordered tuple of remaining
//! phase counts `(l_1, …, l_n)`, each in `1..=M`. The mean-field state is a
//! probability vector over all such tuples with `n ≤ C`. An arriving job takes
//! `i` phases with probability `p_i` and is inserted at a uniformly chosen
//! position; each phase completes at rate `μ_p`, and a job whose last phase
//! completes leaves.
//!
//! States are indexed lexicographically by `(n, tuple)`, so the tuples with
//! `n` jobs form one contiguous index range.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mf_exp::{power_sum_ratio_unchecked, tails, OccupancyDist};
use crate::ode::{self, StepPlan, Trajectory};

/// Hard cap on `|S| = Σ_{n=0}^{C} Mⁿ`.
pub const MAX_STATES: usize = 1_000_000;

/// Remaining phase counts of the jobs in service, nonzero entries only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseVector(Vec<u8>);

impl PhaseVector {
    pub fn new(phases: Vec<u8>) -> Self {
        Self(phases)
    }

    /// Number of jobs in service, `Z(l)`.
    pub fn jobs(&self) -> usize {
        self.0.len()
    }

    pub fn phases(&self) -> &[u8] {
        &self.0
    }

    fn without(&self, b: usize) -> Self {
        let mut v = self.0.clone();
        v.remove(b);
        Self(v)
    }

    fn with_inserted(&self, b: usize, phase: u8) -> Self {
        let mut v = self.0.clone();
        v.insert(b, phase);
        Self(v)
    }

    fn with_entry(&self, b: usize, phase: u8) -> Self {
        let mut v = self.0.clone();
        v[b] = phase;
        Self(v)
    }
}

/// The enumerated state space `S` and its index.
#[derive(Debug, Clone)]
pub struct StateSpace {
    capacity: usize,
    max_phases: usize,
    states: Vec<PhaseVector>,
    index: HashMap<PhaseVector, usize>,
    level_start: Vec<usize>,
}

/// Enumerates all phase vectors with at most `capacity` jobs and at most
/// `max_phases` phases per job.
pub fn enumerate_states(capacity: usize, max_phases: usize) -> Result<StateSpace> {
    if capacity == 0 {
        return Err(invalid("capacity", "must be at least 1"));
    }
    if max_phases == 0 || max_phases > u8::MAX as usize {
        return Err(invalid("max_phases", format!("must lie in 1..=255, got {max_phases}")));
    }
    let mut size: usize = 0;
    let mut level: usize = 1;
    for n in 0..=capacity {
        if n > 0 {
            level = level.saturating_mul(max_phases);
        }
        size = size.saturating_add(level);
    }
    if size > MAX_STATES {
        return Err(invalid(
            "capacity",
            format!("state space of {size} tuples exceeds the cap of {MAX_STATES}"),
        ));
    }
    let mut states = Vec::with_capacity(size);
    let mut level_start = Vec::with_capacity(capacity + 2);
    let mut current = vec![PhaseVector(vec![])];
    for _ in 0..=capacity {
        level_start.push(states.len());
        states.extend(current.iter().cloned());
        // Extending each tuple on the right keeps lexicographic order.
        current = current
            .iter()
            .flat_map(|t| (1..=max_phases as u8).map(move |p| t.with_inserted(t.jobs(), p)))
            .collect();
    }
    level_start.push(states.len());
    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(StateSpace {
        capacity,
        max_phases,
        states,
        index,
        level_start,
    })
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn max_phases(&self) -> usize {
        self.max_phases
    }

    pub fn state(&self, i: usize) -> &PhaseVector {
        &self.states[i]
    }

    pub fn states(&self) -> &[PhaseVector] {
        &self.states
    }

    pub fn index_of(&self, l: &PhaseVector) -> Option<usize> {
        self.index.get(l).copied()
    }

    /// Index range of the states holding exactly `n` jobs.
    pub fn level(&self, n: usize) -> std::ops::Range<usize> {
        self.level_start[n]..self.level_start[n + 1]
    }

    /// Mass per occupancy level, `agg_n = Σ_{Z(l) = n} x_l`.
    fn aggregate(&self, x: &[f64]) -> Vec<f64> {
        (0..=self.capacity)
            .map(|n| x[self.level(n)].iter().sum())
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// A probability vector over the phase state space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    x: Vec<f64>,
}

impl PhaseState {
    pub fn new(space: &StateSpace, x: Vec<f64>) -> Result<Self> {
        space.check(&x)?;
        if let Some(v) = x.iter().find(|v| !(v.is_finite() && **v >= -1e-12)) {
            return Err(invalid("x", format!("entries must be nonnegative, got {v}")));
        }
        let s: f64 = x.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(invalid("x", format!("must sum to 1 within 1e-10, sums to {s}")));
        }
        Ok(Self { x })
    }

    /// Every server empty.
    pub fn empty(space: &StateSpace) -> Self {
        let mut x = vec![0.0; space.len()];
        x[0] = 1.0;
        Self { x }
    }

    /// Uniform draw from the simplex over `S` (normalised exponential spacings).
    pub fn random(space: &StateSpace, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e: Vec<f64> = (0..space.len()).map(|_| Exp1.sample(&mut rng)).collect();
        let s: f64 = e.iter().sum();
        Self {
            x: e.into_iter().map(|v| v / s).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }
}

/// Euclidean distance `d_E(x, π)`.
pub fn distance_to(x: &[f64], pi: &[f64]) -> Result<f64> {
    distance_sq(x, pi).map(f64::sqrt)
}

/// Squared Euclidean distance `d_E²(x, π)`.
pub fn distance_sq(x: &[f64], pi: &[f64]) -> Result<f64> {
    if x.len() != pi.len() {
        return Err(Error::Dimension {
            expected: pi.len(),
            actual: x.len(),
        });
    }
    Ok(x.iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Occupancy law `Q_n = Σ_{Z(l) = n} x_l`, with integrator undershoot clamped.
pub fn occupancy_marginal(space: &StateSpace, x: &[f64]) -> Result<OccupancyDist> {
    space.check(x)?;
    OccupancyDist::from_approximate(&space.aggregate(x))
}

/// `λ^(ME)_n(x) = λ (R_nᵈ - R_{n+1}ᵈ)/agg_n`, evaluated as a power sum.
pub fn lambda_me(space: &StateSpace, n: usize, x: &[f64], lambda: f64, d: u32) -> Result<f64> {
    space.check(x)?;
    if n >= space.capacity() {
        return Err(Error::Domain(format!(
            "arrival rate defined for n < C = {}, got {n}",
            space.capacity()
        )));
    }
    let r = tails(&space.aggregate(x));
    Ok(lambda * power_sum_ratio_unchecked(r[n], r[n + 1], d))
}

// Sparse incoming transitions of one state, sources merged.
#[derive(Debug, Clone, Default)]
struct Inflows {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Inflows {
    fn push_state(&mut self, mut terms: Vec<(usize, f64)>) {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (src, w) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == src => last.1 += w,
                _ => merged.push((src, w)),
            }
        }
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.entries.extend(merged);
        self.offsets.push(self.entries.len());
    }

    #[inline]
    fn dot(&self, s: usize, x: &[f64]) -> f64 {
        self.entries[self.offsets[s]..self.offsets[s + 1]]
            .iter()
            .map(|(src, w)| w * x[*src])
            .sum()
    }
}

/// Parameters of the mixed-Erlang mean-field model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseParams {
    pub lambda: f64,
    pub phase_rate: f64,
    pub phase_probs: Vec<f64>,
    pub d: u32,
}

impl PhaseParams {
    /// Mean service time `Σ i p_i / μ_p`.
    pub fn mean_service(&self) -> f64 {
        self.phase_probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum::<f64>()
            / self.phase_rate
    }
}

/// The mean-field vector field `h` on a fixed state space, with its sparse
/// transition structure precomputed.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    space: StateSpace,
    params: PhaseParams,
    level_of: Vec<usize>,
    arrivals: Inflows,
    services: Inflows,
}

impl PhaseModel {
    pub fn new(capacity: usize, params: PhaseParams) -> Result<Self> {
        if !(params.lambda.is_finite() && params.lambda >= 0.0) {
            return Err(invalid("lambda", "must be nonnegative"));
        }
        if !(params.phase_rate.is_finite() && params.phase_rate > 0.0) {
            return Err(invalid("phase_rate", "must be positive"));
        }
        if params.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if params.phase_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("phase_probs", "entries must be nonnegative"));
        }
        let total: f64 = params.phase_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("phase_probs", format!("must sum to 1, sums to {total}")));
        }
        let space = enumerate_states(capacity, params.phase_probs.len())?;
        let m = space.max_phases() as u8;
        let mut level_of = Vec::with_capacity(space.len());
        let mut arrivals = Inflows::default();
        let mut services = Inflows::default();
        for l in space.states() {
            let z = l.jobs();
            level_of.push(z);
            let mut arr = Vec::new();
            for b in 0..z {
                let src = space.index_of(&l.without(b)).expect("shorter tuple enumerated");
                arr.push((src, params.phase_probs[l.phases()[b] as usize - 1] / z as f64));
            }
            arrivals.push_state(arr);
            let mut svc = Vec::new();
            if z < capacity {
                for b in 0..=z {
                    let src = space.index_of(&l.with_inserted(b, 1)).expect("longer tuple enumerated");
                    svc.push((src, 1.0));
                }
            }
            for b in 0..z {
                let phase = l.phases()[b];
                if phase < m {
                    let src = space.index_of(&l.with_entry(b, phase + 1)).expect("tuple enumerated");
                    svc.push((src, 1.0));
                }
            }
            services.push_state(svc);
        }
        Ok(Self {
            space,
            params,
            level_of,
            arrivals,
            services,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &PhaseParams {
        &self.params
    }

    /// Writes `h(x)` into `out`. `x` must have the dimension of the space.
    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        let c = self.space.capacity();
        let r = tails(&self.space.aggregate(x));
        let p = &self.params;
        let rate: Vec<f64> = (0..c)
            .map(|n| p.lambda * power_sum_ratio_unchecked(r[n], r[n + 1], p.d))
            .collect();
        for (s, o) in out.iter_mut().enumerate() {
            let z = self.level_of[s];
            let mut v = 0.0;
            if z > 0 {
                v += rate[z - 1] * self.arrivals.dot(s, x);
            }
            if z < c {
                v -= rate[z] * x[s];
            }
            v += p.phase_rate * self.services.dot(s, x);
            v -= z as f64 * p.phase_rate * x[s];
            *o = v;
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.space.check(x)?;
        let mut out = vec![0.0; x.len()];
        self.rhs_into(x, &mut out);
        Ok(out)
    }

    pub fn integrate(&self, x0: &[f64], plan: &StepPlan) -> Result<Trajectory> {
        self.space.check(x0)?;
        ode::integrate(|x, dx| self.rhs_into(x, dx), x0, plan, &[0..x0.len()])
    }

    /// Phase-resolved equilibrium: integrate from the empty state over `plan`
    /// and require `‖h‖_∞ < tol` at the end.
    pub fn equilibrium(&self, plan: &StepPlan, tol: f64) -> Result<PhaseState> {
        let plan = StepPlan {
            out_every: plan.steps().max(1),
            ..plan.clone()
        };
        let traj = self.integrate(PhaseState::empty(&self.space).as_slice(), &plan)?;
        let x = traj.last().to_vec();
        let residual = self.rhs(&x)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual >= tol {
            return Err(Error::NoConvergence {
                iterations: plan.steps(),
                residual,
            });
        }
        PhaseState::new(&self.space, x)
    }

    /// Integrates from each initial point in parallel and records
    /// `d_E²(x(t), π)` and the occupancy marginals at every sampled time.
    pub fn convergence_curves(
        &self,
        initial: &[PhaseState],
        pi: &PhaseState,
        plan: &StepPlan,
    ) -> Result<Vec<ConvergenceCurve>> {
        initial
            .par_iter()
            .map(|x0| {
                let traj = self.integrate(x0.as_slice(), plan)?;
                let mut curve = ConvergenceCurve::default();
                for (t, x) in traj.times.iter().zip(&traj.states) {
                    curve.times.push(*t);
                    curve.distance_sq.push(distance_sq(x, pi.as_slice())?);
                    curve
                        .marginals
                        .push(occupancy_marginal(&self.space, x)?.into_vec());
                }
                curve.final_state = traj.last().to_vec();
                Ok(curve)
            })
            .collect()
    }
}

/// Distance-to-equilibrium curve of one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceCurve {
    pub times: Vec<f64>,
    pub distance_sq: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

impl ConvergenceCurve {
    /// Time from which `d_E²` never increases again.
    pub fn monotone_from(&self) -> f64 {
        let mut i = self.distance_sq.len().saturating_sub(1);
        while i > 0 && self.distance_sq[i - 1] >= self.distance_sq[i] {
            i -= 1;
        }
        self.times.get(i).copied().unwrap_or(0.0)
    }
}

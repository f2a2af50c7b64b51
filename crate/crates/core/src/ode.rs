//! Fixed-step classical Runge–Kutta integration for the mean-field ODEs.

use std::ops::Range;

use crate::error::{Error, Result};

/// Mass drift tolerated before a probability block is renormalised.
pub const RENORMALIZE_DRIFT: f64 = 1e-12;

/// States sampled along an integration, `states[i]` taken at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Step size, horizon and output cadence of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `out_every`-th step (the initial and final states are always kept).
    pub out_every: usize,
}

impl StepPlan {
    pub fn new(dt: f64, t_end: f64, out_every: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "t_end",
                reason: format!("must be nonnegative, got {t_end}"),
            });
        }
        Ok(Self {
            dt,
            t_end,
            out_every: out_every.max(1),
        })
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Scratch buffers for one RK4 integrator.
#[derive(Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` by one step of size `dt`.
    pub fn step<F>(&mut self, rhs: &mut F, x: &mut [f64], dt: f64)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        rhs(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        rhs(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        rhs(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        rhs(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn renormalize(x: &mut [f64], blocks: &[Range<usize>]) {
    for block in blocks {
        let s: f64 = x[block.clone()].iter().sum();
        if (s - 1.0).abs() > RENORMALIZE_DRIFT && s > 0.0 {
            x[block.clone()].iter_mut().for_each(|v| *v /= s);
        }
    }
}

/// Integrates `dx/dt = rhs(x)` from `x0` with fixed-step RK4.
///
/// Each range in `simplex_blocks` is a probability vector; it is divided by its
/// sum whenever the sum drifts from 1 by more than [`RENORMALIZE_DRIFT`].
pub fn integrate<F>(
    mut rhs: F,
    x0: &[f64],
    plan: &StepPlan,
    simplex_blocks: &[Range<usize>],
) -> Result<Trajectory>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let steps = plan.steps();
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
    };
    for step in 1..=steps {
        rk.step(&mut rhs, &mut x, plan.dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step });
        }
        renormalize(&mut x, simplex_blocks);
        if step % plan.out_every == 0 || step == steps {
            traj.times.push(step as f64 * plan.dt);
            traj.states.push(x.clone());
        }
    }
    Ok(traj)
}

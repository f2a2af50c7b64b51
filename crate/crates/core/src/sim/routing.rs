//! Dispatch rules: power-of-d on occupancy and max-vacancy power-of-d.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the `d` probe indices are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSampling {
    /// i.i.d. uniform indices; a server may be probed more than once.
    #[default]
    WithReplacement,
    /// A uniform subset of `d` distinct servers.
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteDecision {
    Server(usize),
    Blocked,
}

/// Reusable probe buffers, so the hot loop does not allocate.
#[derive(Debug, Clone, Default)]
pub struct Prober {
    probes: Vec<usize>,
    ties: Vec<usize>,
}

impl Prober {
    pub fn new() -> Self {
        Self::default()
    }

    fn draw<R: Rng + ?Sized>(&mut self, n: usize, d: usize, sampling: ProbeSampling, rng: &mut R) -> Result<()> {
        if n == 0 {
            return Err(Error::Config("no servers to probe".into()));
        }
        self.probes.clear();
        match sampling {
            ProbeSampling::WithReplacement => {
                self.probes.extend((0..d).map(|_| rng.random_range(0..n)));
            }
            ProbeSampling::WithoutReplacement => {
                if d > n {
                    return Err(Error::Config(format!(
                        "cannot probe {d} distinct servers out of {n}"
                    )));
                }
                self.probes.extend(index::sample(rng, n, d).iter());
            }
        }
        Ok(())
    }

    /// Probe with the largest key; ties broken uniformly over probe positions.
    /// The RNG is touched only when more than one probe ties.
    fn best<R, K, F>(&mut self, key: F, rng: &mut R) -> usize
    where
        R: Rng + ?Sized,
        K: Ord,
        F: Fn(usize) -> K,
    {
        let mut best = key(self.probes[0]);
        self.ties.clear();
        self.ties.push(self.probes[0]);
        for &p in &self.probes[1..] {
            let k = key(p);
            match k.cmp(&best) {
                std::cmp::Ordering::Greater => {
                    best = k;
                    self.ties.clear();
                    self.ties.push(p);
                }
                std::cmp::Ordering::Equal => self.ties.push(p),
                std::cmp::Ordering::Less => {}
            }
        }
        if self.ties.len() == 1 {
            self.ties[0]
        } else {
            self.ties[rng.random_range(0..self.ties.len())]
        }
    }

    /// Routes to the least occupied of `d` probes; blocked if that probe is full.
    pub fn power_of_d<R: Rng + ?Sized>(
        &mut self,
        occupancy: &[usize],
        capacity: usize,
        d: usize,
        sampling: ProbeSampling,
        rng: &mut R,
    ) -> Result<RouteDecision> {
        self.draw(occupancy.len(), d, sampling, rng)?;
        let s = self.best(|i| std::cmp::Reverse(occupancy[i]), rng);
        Ok(if occupancy[s] >= capacity {
            RouteDecision::Blocked
        } else {
            RouteDecision::Server(s)
        })
    }

    /// Routes to the probe with the most free slots. Equal vacancies go to the
    /// larger capacity, then to the higher type index, then uniformly.
    pub fn max_vacancy<R: Rng + ?Sized>(
        &mut self,
        view: &ServerView<'_>,
        d: usize,
        sampling: ProbeSampling,
        rng: &mut R,
    ) -> Result<RouteDecision> {
        self.draw(view.occupancy.len(), d, sampling, rng)?;
        let s = self.best(|i| (view.vacancy(i), view.capacity(i), view.server_type[i]), rng);
        Ok(if view.vacancy(s) == 0 {
            RouteDecision::Blocked
        } else {
            RouteDecision::Server(s)
        })
    }
}

/// Read-only view of a heterogeneous cluster.
#[derive(Debug, Clone, Copy)]
pub struct ServerView<'a> {
    pub occupancy: &'a [usize],
    pub server_type: &'a [usize],
    /// Capacity per type.
    pub capacities: &'a [usize],
}

impl ServerView<'_> {
    pub fn capacity(&self, i: usize) -> usize {
        self.capacities[self.server_type[i]]
    }

    pub fn vacancy(&self, i: usize) -> usize {
        self.capacity(i).saturating_sub(self.occupancy[i])
    }
}

/// One power-of-d routing decision.
pub fn route_power_of_d<R: Rng + ?Sized>(
    occupancy: &[usize],
    capacity: usize,
    d: usize,
    sampling: ProbeSampling,
    rng: &mut R,
) -> Result<RouteDecision> {
    Prober::new().power_of_d(occupancy, capacity, d, sampling, rng)
}

/// One max-vacancy routing decision.
pub fn route_max_vacancy<R: Rng + ?Sized>(
    view: &ServerView<'_>,
    d: usize,
    sampling: ProbeSampling,
    rng: &mut R,
) -> Result<RouteDecision> {
    Prober::new().max_vacancy(view, d, sampling, rng)
}

//! One loss server with state-dependent Poisson arrivals and general service.

use rand_distr::{Distribution, Exp};

use super::rng::{stream, Purpose};
use super::stats::{AgeSnapshot, SimStats, TimeAverager};
use crate::error::{invalid, Result};
use crate::insensitive::StateDepArrivalLaw;

/// Horizon, batching and seed of a single-server run.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleServerRun {
    pub t_total: f64,
    pub t_warmup: f64,
    pub batches: usize,
    pub seed: u64,
    /// Spacing of age snapshots after warm-up; `None` takes none.
    pub snapshot_interval: Option<f64>,
}

impl SingleServerRun {
    /// Half the horizon as warm-up, 20 batches, no snapshots.
    pub fn new(t_total: f64, seed: u64) -> Self {
        Self {
            t_total,
            t_warmup: t_total / 2.0,
            batches: 20,
            seed,
            snapshot_interval: None,
        }
    }
}

/// Simulates the server of `law`. Arrivals occur at rate `α_n` while `n < C`
/// jobs are present; no arrival is generated at `n = C`. The arrival clock is
/// redrawn after every event, which is exact for Poisson streams.
pub fn run_single_server(law: &StateDepArrivalLaw, run: &SingleServerRun) -> Result<SimStats> {
    if !(run.t_total.is_finite() && run.t_total > 0.0) {
        return Err(invalid("t_total", "must be positive"));
    }
    if !(run.t_warmup >= 0.0 && run.t_warmup < run.t_total) {
        return Err(invalid("t_warmup", "must lie in [0, t_total)"));
    }
    if run.batches < 2 {
        return Err(invalid("batches", "need at least 2"));
    }
    let c = law.capacity();
    let clocks: Vec<Option<Exp<f64>>> = law
        .alpha()
        .iter()
        .map(|&a| if a > 0.0 { Exp::new(a).ok() } else { None })
        .collect();
    let mut arrival_rng = stream(run.seed, 0, Purpose::Arrival);
    let mut service_rng = stream(run.seed, 0, Purpose::Service);
    let mut stats = SimStats {
        type_sizes: vec![1],
        capacities: vec![c],
        d: 1,
        arrivals: 0,
        admissions: 0,
        blocks: 0,
        occupancy: TimeAverager::new(run.t_warmup, run.t_total, run.batches, c + 1),
        batch_arrivals: vec![0; run.batches],
        batch_blocks: vec![0; run.batches],
        snapshots: Vec::new(),
        trace_times: Vec::new(),
        trace: Vec::new(),
    };
    // (admission time, departure time) of each job in service.
    let mut jobs: Vec<(f64, f64)> = Vec::with_capacity(c);
    let mut counts = vec![0usize; c + 1];
    counts[0] = 1;
    let mut next_snapshot = run.snapshot_interval.map_or(f64::INFINITY, |h| run.t_warmup + h);
    let mut t = 0.0;
    loop {
        let n = jobs.len();
        let departure = jobs
            .iter()
            .enumerate()
            .map(|(i, j)| (j.1, i))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let arrival = match clocks.get(n).copied().flatten() {
            Some(clock) => t + clock.sample(&mut arrival_rng),
            None => f64::INFINITY,
        };
        let next = departure.map_or(f64::INFINITY, |d| d.0).min(arrival);
        let horizon = next.min(run.t_total);
        while next_snapshot < horizon || (next > run.t_total && next_snapshot <= run.t_total) {
            let oldest = jobs.iter().map(|j| j.0).fold(next_snapshot, f64::min);
            let mut max_ages = vec![vec![Vec::new(); c + 1]];
            max_ages[0][n].push(next_snapshot - oldest);
            stats.snapshots.push(AgeSnapshot {
                time: next_snapshot,
                max_ages,
            });
            next_snapshot += run.snapshot_interval.expect("snapshots enabled");
        }
        stats.occupancy.advance(horizon, &counts);
        if next > run.t_total {
            break;
        }
        t = next;
        counts[n] = 0;
        if arrival <= next {
            stats.arrivals += 1;
            stats.admissions += 1;
            if let Some(b) = stats.occupancy.batch_of(t) {
                stats.batch_arrivals[b] += 1;
            }
            jobs.push((t, t + law.dist().sample(&mut service_rng)));
            counts[n + 1] = 1;
        } else {
            let (_, i) = departure.expect("departure is due");
            jobs.swap_remove(i);
            counts[n - 1] = 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::ServiceDistribution;

    #[test]
    fn idle_server_never_fills() {
        let law = StateDepArrivalLaw::new(vec![0.0, 3.0], ServiceDistribution::exponential(1.0).unwrap()).unwrap();
        let stats = run_single_server(&law, &SingleServerRun::new(100.0, 1)).unwrap();
        let q = stats.occupancy_estimate(0).unwrap();
        assert_eq!(q.dist.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(stats.arrivals, 0);
    }

    #[test]
    fn reproducible() {
        let law = StateDepArrivalLaw::new(vec![1.0, 0.5, 0.2], ServiceDistribution::gamma(2.0, 0.5).unwrap()).unwrap();
        let run = SingleServerRun {
            snapshot_interval: Some(1.0),
            ..SingleServerRun::new(500.0, 9)
        };
        let a = run_single_server(&law, &run).unwrap();
        let b = run_single_server(&law, &run).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.snapshots.len(), 250);
    }
}

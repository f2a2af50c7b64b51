//! Event-driven simulation of `N` loss servers fed by a Poisson stream.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::rng::{stream, Purpose};
use super::routing::{ProbeSampling, Prober, RouteDecision, ServerView};
use super::stats::{AgeSnapshot, SimStats, TimeAverager};
use crate::error::{invalid, Error, Result};
use crate::service::ServiceDistribution;

/// Server population.
#[derive(Debug, Clone, PartialEq)]
pub enum Servers {
    /// Every server has the same capacity; power-of-d routing.
    Homogeneous { capacity: usize },
    /// A fraction `gamma[k]` of servers has capacity `capacities[k]`;
    /// max-vacancy routing.
    Heterogeneous { gamma: Vec<f64>, capacities: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_servers: usize,
    /// Arrival rate per server; the cluster sees `N·λ`.
    pub lambda: f64,
    pub d: u32,
    pub servers: Servers,
    pub service: ServiceDistribution,
    pub t_total: f64,
    pub t_warmup: f64,
    pub batches: usize,
    pub seed: u64,
    pub sampling: ProbeSampling,
    /// Spacing of age snapshots after warm-up; `None` takes no snapshots.
    pub snapshot_interval: Option<f64>,
    /// Sorted times at which instantaneous occupancy fractions are recorded.
    pub trace_times: Vec<f64>,
}

impl SimConfig {
    /// Homogeneous cluster with half the horizon as warm-up and 20 batches.
    pub fn homogeneous(
        n_servers: usize,
        lambda: f64,
        capacity: usize,
        d: u32,
        service: ServiceDistribution,
        t_total: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_servers,
            lambda,
            d,
            servers: Servers::Homogeneous { capacity },
            service,
            t_total,
            t_warmup: t_total / 2.0,
            batches: 20,
            seed,
            sampling: ProbeSampling::WithReplacement,
            snapshot_interval: None,
            trace_times: Vec::new(),
        }
    }

    /// Snapshots every five mean service times.
    pub fn with_age_snapshots(mut self) -> Self {
        self.snapshot_interval = Some(5.0 * self.service.mean());
        self
    }

    pub fn capacities(&self) -> Vec<usize> {
        match &self.servers {
            Servers::Homogeneous { capacity } => vec![*capacity],
            Servers::Heterogeneous { capacities, .. } => capacities.clone(),
        }
    }

    /// Servers per type: `⌊γ_k N⌋` plus largest-remainder rounding.
    pub fn type_sizes(&self) -> Vec<usize> {
        match &self.servers {
            Servers::Homogeneous { .. } => vec![self.n_servers],
            Servers::Heterogeneous { gamma, .. } => {
                let exact: Vec<f64> = gamma.iter().map(|g| g * self.n_servers as f64).collect();
                let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
                let missing = self.n_servers.saturating_sub(sizes.iter().sum());
                let mut order: Vec<usize> = (0..gamma.len()).collect();
                order.sort_by(|&a, &b| {
                    let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
                    rb.total_cmp(&ra).then(a.cmp(&b))
                });
                for &k in order.iter().take(missing) {
                    sizes[k] += 1;
                }
                sizes
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_servers == 0 {
            return Err(invalid("n_servers", "must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        if self.sampling == ProbeSampling::WithoutReplacement && self.d as usize > self.n_servers {
            return Err(Error::Config(format!(
                "d = {} exceeds N = {} without replacement",
                self.d, self.n_servers
            )));
        }
        if !(self.t_total.is_finite() && self.t_total > 0.0) {
            return Err(invalid("t_total", "must be positive"));
        }
        if !(self.t_warmup >= 0.0 && self.t_warmup < self.t_total) {
            return Err(invalid("t_warmup", "must lie in [0, t_total)"));
        }
        if self.batches < 2 {
            return Err(invalid("batches", "need at least 2"));
        }
        if let Some(h) = self.snapshot_interval {
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid("snapshot_interval", "must be positive"));
            }
        }
        if self.trace_times.windows(2).any(|w| w[1] < w[0])
            || self.trace_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_total))
        {
            return Err(invalid("trace_times", "must be sorted and inside [0, t_total]"));
        }
        match &self.servers {
            Servers::Homogeneous { capacity } => {
                if *capacity == 0 {
                    return Err(invalid("capacity", "must be at least 1"));
                }
            }
            Servers::Heterogeneous { gamma, capacities } => {
                if gamma.is_empty() || gamma.len() != capacities.len() {
                    return Err(invalid("gamma", "needs one fraction per capacity"));
                }
                if gamma.iter().any(|g| !(g.is_finite() && *g > 0.0))
                    || (gamma.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(invalid("gamma", "must be positive and sum to 1"));
                }
                if capacities[0] == 0 || capacities.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid("capacities", "must be positive and nondecreasing"));
                }
                if self.type_sizes().contains(&0) {
                    return Err(invalid("n_servers", "too small to hold every server type"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Job {
    id: u64,
    admitted: f64,
    departs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival,
    Departure { server: usize, job: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the earliest event, then the oldest.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A cluster mid-run. [`Cluster::step`] processes one event.
#[derive(Debug)]
pub struct Cluster {
    d: usize,
    sampling: ProbeSampling,
    homogeneous: bool,
    service: ServiceDistribution,
    t_total: f64,
    time: f64,
    occupancy: Vec<usize>,
    server_type: Vec<usize>,
    capacities: Vec<usize>,
    offsets: Vec<usize>,
    counts: Vec<usize>,
    jobs: Vec<Vec<Job>>,
    heap: BinaryHeap<Event>,
    seq: u64,
    next_job: u64,
    interarrival: Exp<f64>,
    arrival_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    prober: Prober,
    snapshot_interval: Option<f64>,
    next_snapshot: f64,
    next_trace: usize,
    stats: SimStats,
}

impl Cluster {
    /// Fresh all-empty cluster for replication `replication` of `cfg`.
    pub fn new(cfg: &SimConfig, replication: u64) -> Result<Self> {
        cfg.validate()?;
        let capacities = cfg.capacities();
        let sizes = cfg.type_sizes();
        let server_type: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        let mut offsets = vec![0];
        for c in &capacities {
            offsets.push(offsets.last().unwrap() + c + 1);
        }
        let mut counts = vec![0; *offsets.last().unwrap()];
        for (k, &s) in sizes.iter().enumerate() {
            counts[offsets[k]] = s;
        }
        let interarrival = Exp::new(cfg.lambda * cfg.n_servers as f64)
            .map_err(|e| invalid("lambda", e.to_string()))?;
        let mut arrival_rng = stream(cfg.seed, replication, Purpose::Arrival);
        let first = interarrival.sample(&mut arrival_rng);
        let mut heap = BinaryHeap::with_capacity(cfg.n_servers * 2 + 1);
        heap.push(Event {
            time: first,
            seq: 0,
            kind: EventKind::Arrival,
        });
        let batches = cfg.batches;
        let stats = SimStats {
            type_sizes: sizes,
            capacities: capacities.clone(),
            d: cfg.d,
            arrivals: 0,
            admissions: 0,
            blocks: 0,
            occupancy: TimeAverager::new(cfg.t_warmup, cfg.t_total, batches, counts.len()),
            batch_arrivals: vec![0; batches],
            batch_blocks: vec![0; batches],
            snapshots: Vec::new(),
            trace_times: cfg.trace_times.clone(),
            trace: Vec::with_capacity(cfg.trace_times.len()),
        };
        Ok(Self {
            d: cfg.d as usize,
            sampling: cfg.sampling,
            homogeneous: matches!(cfg.servers, Servers::Homogeneous { .. }),
            service: cfg.service.clone(),
            t_total: cfg.t_total,
            time: 0.0,
            occupancy: vec![0; cfg.n_servers],
            server_type,
            capacities,
            offsets,
            counts,
            jobs: vec![Vec::new(); cfg.n_servers],
            heap,
            seq: 1,
            next_job: 0,
            interarrival,
            arrival_rng,
            routing_rng: stream(cfg.seed, replication, Purpose::Routing),
            service_rng: stream(cfg.seed, replication, Purpose::Service),
            prober: Prober::new(),
            snapshot_interval: cfg.snapshot_interval,
            next_snapshot: cfg.snapshot_interval.map_or(f64::INFINITY, |h| cfg.t_warmup + h),
            next_trace: 0,
            stats,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn occupancy(&self) -> &[usize] {
        &self.occupancy
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn move_server(&mut self, server: usize, from: usize, to: usize) {
        let base = self.offsets[self.server_type[server]];
        self.counts[base + from] -= 1;
        self.counts[base + to] += 1;
        self.occupancy[server] = to;
    }

    /// Records traces and snapshots due before `t` (or at `t` if `inclusive`).
    fn observe_until(&mut self, t: f64, inclusive: bool) {
        let due = |s: f64| if inclusive { s <= t } else { s < t };
        while self.next_trace < self.stats.trace_times.len() && due(self.stats.trace_times[self.next_trace]) {
            let fractions = self
                .counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let k = self.offsets.partition_point(|&o| o <= i) - 1;
                    c as f64 / self.stats.type_sizes[k] as f64
                })
                .collect();
            self.stats.trace.push(fractions);
            self.next_trace += 1;
        }
        while due(self.next_snapshot) && self.next_snapshot <= self.t_total {
            let s = self.next_snapshot;
            let mut max_ages: Vec<Vec<Vec<f64>>> =
                self.capacities.iter().map(|&c| vec![Vec::new(); c + 1]).collect();
            for (i, jobs) in self.jobs.iter().enumerate() {
                let oldest = jobs.iter().map(|j| j.admitted).fold(s, f64::min);
                max_ages[self.server_type[i]][jobs.len()].push(s - oldest);
            }
            for per_level in &mut max_ages {
                for ages in per_level {
                    ages.sort_by(f64::total_cmp);
                }
            }
            self.stats.snapshots.push(AgeSnapshot { time: s, max_ages });
            self.next_snapshot += self.snapshot_interval.expect("snapshots enabled");
        }
    }

    /// Processes the next event if it falls inside the horizon.
    pub fn step(&mut self) -> Result<bool> {
        let event = match self.heap.peek() {
            Some(e) if e.time <= self.t_total => self.heap.pop().expect("peeked"),
            _ => return Ok(false),
        };
        self.observe_until(event.time, false);
        self.stats.occupancy.advance(event.time, &self.counts);
        self.time = event.time;
        match event.kind {
            EventKind::Arrival => {
                self.stats.arrivals += 1;
                let batch = self.stats.occupancy.batch_of(self.time);
                if let Some(b) = batch {
                    self.stats.batch_arrivals[b] += 1;
                }
                let decision = if self.homogeneous {
                    self.prober.power_of_d(
                        &self.occupancy,
                        self.capacities[0],
                        self.d,
                        self.sampling,
                        &mut self.routing_rng,
                    )?
                } else {
                    let view = ServerView {
                        occupancy: &self.occupancy,
                        server_type: &self.server_type,
                        capacities: &self.capacities,
                    };
                    self.prober
                        .max_vacancy(&view, self.d, self.sampling, &mut self.routing_rng)?
                };
                match decision {
                    RouteDecision::Blocked => {
                        self.stats.blocks += 1;
                        if let Some(b) = batch {
                            self.stats.batch_blocks[b] += 1;
                        }
                    }
                    RouteDecision::Server(s) => {
                        self.stats.admissions += 1;
                        let departs = self.time + self.service.sample(&mut self.service_rng);
                        let id = self.next_job;
                        self.next_job += 1;
                        self.jobs[s].push(Job {
                            id,
                            admitted: self.time,
                            departs,
                        });
                        let n = self.occupancy[s];
                        self.move_server(s, n, n + 1);
                        self.schedule(departs, EventKind::Departure { server: s, job: id });
                    }
                }
                let next = self.time + self.interarrival.sample(&mut self.arrival_rng);
                self.schedule(next, EventKind::Arrival);
            }
            EventKind::Departure { server, job } => {
                let pos = self.jobs[server]
                    .iter()
                    .position(|j| j.id == job)
                    .expect("departing job is in service");
                self.jobs[server].swap_remove(pos);
                let n = self.occupancy[server];
                self.move_server(server, n, n - 1);
            }
        }
        Ok(true)
    }

    /// Runs to the horizon and returns the statistics.
    pub fn run(mut self) -> Result<SimStats> {
        while self.step()? {}
        self.observe_until(self.t_total, true);
        self.stats.occupancy.advance(self.t_total, &self.counts);
        Ok(self.stats)
    }

    /// Checks the structural invariants of the current state.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (k, &size) in self.stats.type_sizes.iter().enumerate() {
            let total: usize = self.counts[self.offsets[k]..self.offsets[k + 1]].iter().sum();
            if total != size {
                return Err(format!("type {k}: level counts sum to {total}, expected {size}"));
            }
        }
        let mut recount = vec![0usize; self.counts.len()];
        let mut in_service = 0usize;
        for (i, jobs) in self.jobs.iter().enumerate() {
            let cap = self.capacities[self.server_type[i]];
            if jobs.len() != self.occupancy[i] {
                return Err(format!("server {i}: occupancy {} but {} jobs", self.occupancy[i], jobs.len()));
            }
            if jobs.len() > cap {
                return Err(format!("server {i}: {} jobs exceed capacity {cap}", jobs.len()));
            }
            for j in jobs {
                if !(j.departs > j.admitted) || j.admitted > self.time {
                    return Err(format!("server {i}: job {} has bad times {j:?}", j.id));
                }
            }
            recount[self.offsets[self.server_type[i]] + jobs.len()] += 1;
            in_service += jobs.len();
        }
        if recount != self.counts {
            return Err("level counts disagree with servers".into());
        }
        let arrivals = self
            .heap
            .iter()
            .filter(|e| e.kind == EventKind::Arrival)
            .count();
        if arrivals != 1 {
            return Err(format!("{arrivals} pending arrivals"));
        }
        let mut departures = 0usize;
        for e in &self.heap {
            if let EventKind::Departure { server, job } = e.kind {
                departures += 1;
                match self.jobs[server].iter().find(|j| j.id == job) {
                    Some(j) if j.departs == e.time => {}
                    _ => return Err(format!("departure of job {job} has no matching job")),
                }
            }
        }
        if departures != in_service {
            return Err(format!("{departures} departures for {in_service} jobs"));
        }
        let s = &self.stats;
        if s.arrivals != s.admissions + s.blocks {
            return Err(format!(
                "{} arrivals != {} admissions + {} blocks",
                s.arrivals, s.admissions, s.blocks
            ));
        }
        Ok(())
    }
}

/// Runs replication 0 of `cfg`.
pub fn run(cfg: &SimConfig) -> Result<SimStats> {
    Cluster::new(cfg, 0)?.run()
}

/// Runs replication `replication` of `cfg`.
pub fn run_replication(cfg: &SimConfig, replication: u64) -> Result<SimStats> {
    Cluster::new(cfg, replication)?.run()
}

//! Estimators collected during a run: time-weighted occupancy in batches,
//! blocking counts, age snapshots and transient traces.

use statrs::statistics::Statistics;

use crate::error::{Error, Result};
use crate::mf_exp::OccupancyDist;

/// A batch-means point estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// `|mean − target| ≤ max(abs_tol, 3·SE)`.
    pub fn agrees_with(&self, target: f64, abs_tol: f64) -> bool {
        (self.mean - target).abs() <= abs_tol.max(3.0 * self.se)
    }
}

/// Mean of the batch values with standard error `s/√B`.
pub fn batch_estimate(values: &[f64]) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 batches, got {}",
            values.len()
        )));
    }
    let mean = values.iter().mean();
    let var = values.iter().variance();
    Ok(Estimate {
        mean,
        se: (var / values.len() as f64).sqrt(),
    })
}

/// Time integrals of a piecewise-constant count vector over equal batches of
/// `(t_warmup, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TimeAverager {
    t_warmup: f64,
    t_end: f64,
    batch_len: f64,
    last: f64,
    batch: usize,
    areas: Vec<Vec<f64>>,
}

impl TimeAverager {
    pub(crate) fn new(t_warmup: f64, t_end: f64, batches: usize, dim: usize) -> Self {
        Self {
            t_warmup,
            t_end,
            batch_len: (t_end - t_warmup) / batches as f64,
            last: 0.0,
            batch: 0,
            areas: vec![vec![0.0; dim]; batches],
        }
    }

    fn boundary(&self, b: usize) -> f64 {
        if b + 1 == self.areas.len() {
            self.t_end
        } else {
            self.t_warmup + (b + 1) as f64 * self.batch_len
        }
    }

    /// Credits `counts`, held constant since the previous call, up to time `t`.
    pub(crate) fn advance(&mut self, t: f64, counts: &[usize]) {
        let t = t.min(self.t_end);
        while self.last < t {
            if self.last < self.t_warmup {
                self.last = t.min(self.t_warmup);
                continue;
            }
            let boundary = self.boundary(self.batch);
            let end = t.min(boundary);
            let dt = end - self.last;
            for (a, &c) in self.areas[self.batch].iter_mut().zip(counts) {
                *a += dt * c as f64;
            }
            self.last = end;
            if end >= boundary && self.batch + 1 < self.areas.len() {
                self.batch += 1;
            }
        }
    }

    /// Batch holding time `t`, if `t` is inside the measurement window.
    pub(crate) fn batch_of(&self, t: f64) -> Option<usize> {
        if t <= self.t_warmup || t > self.t_end {
            return None;
        }
        let b = ((t - self.t_warmup) / self.batch_len) as usize;
        Some(b.min(self.areas.len() - 1))
    }

    pub(crate) fn batches(&self) -> usize {
        self.areas.len()
    }

    pub(crate) fn batch_duration(&self, b: usize) -> f64 {
        let start = self.t_warmup + b as f64 * self.batch_len;
        self.boundary(b) - start
    }

    pub(crate) fn area(&self, b: usize) -> &[f64] {
        &self.areas[b]
    }

    pub(crate) fn measured(&self) -> f64 {
        (self.last - self.t_warmup).max(0.0)
    }
}

/// Occupancy law with per-level standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyEstimate {
    pub dist: OccupancyDist,
    pub se: Vec<f64>,
}

impl OccupancyEstimate {
    /// `max_n |Q̂_n − model_n|`.
    pub fn sup_distance(&self, model: &[f64]) -> f64 {
        self.dist.sup_distance(model)
    }

    /// Every level within `max(abs_tol, 3·SE_n)` of the model.
    pub fn agrees_with(&self, model: &[f64], abs_tol: f64) -> bool {
        model.len() == self.se.len()
            && self
                .dist
                .as_slice()
                .iter()
                .zip(model)
                .zip(&self.se)
                .all(|((q, m), se)| (q - m).abs() <= abs_tol.max(3.0 * se))
    }
}

/// Observed blocking against `(P̂_full)ᵈ`, compared batch by batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockingEstimate {
    /// Fraction of arrivals blocked during measurement.
    pub fraction: Estimate,
    /// Time-average fraction of full servers.
    pub full: Estimate,
    /// `mean_b (P̂_full,b)ᵈ`.
    pub model: f64,
    /// Per-batch `blocked_b − (P̂_full,b)ᵈ`.
    pub difference: Estimate,
}

impl BlockingEstimate {
    /// `|mean difference| ≤ 3·SE`.
    pub fn consistent(&self) -> bool {
        self.difference.mean.abs() <= 3.0 * self.difference.se
    }
}

/// Per-type, per-level sorted maximum job ages of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeSnapshot {
    pub time: f64,
    pub max_ages: Vec<Vec<Vec<f64>>>,
}

/// Everything a run measures. Equal seeds give equal values, bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub type_sizes: Vec<usize>,
    pub capacities: Vec<usize>,
    pub d: u32,
    pub arrivals: u64,
    pub admissions: u64,
    pub blocks: u64,
    pub(crate) occupancy: TimeAverager,
    pub batch_arrivals: Vec<u64>,
    pub batch_blocks: Vec<u64>,
    pub snapshots: Vec<AgeSnapshot>,
    pub trace_times: Vec<f64>,
    /// Per sample time, per-type occupancy fractions laid out type after type.
    pub trace: Vec<Vec<f64>>,
}

impl SimStats {
    pub fn n_servers(&self) -> usize {
        self.type_sizes.iter().sum()
    }

    pub fn types(&self) -> usize {
        self.type_sizes.len()
    }

    pub fn measured_time(&self) -> f64 {
        self.occupancy.measured()
    }

    /// Offset of type `k` in the flattened per-level layout.
    pub fn offset(&self, k: usize) -> usize {
        self.capacities[..k].iter().map(|c| c + 1).sum()
    }

    fn check_type(&self, k: usize) -> Result<()> {
        if k >= self.types() {
            return Err(Error::Domain(format!("type {k} out of range")));
        }
        Ok(())
    }

    fn batch_fraction(&self, b: usize, k: usize, n: usize) -> f64 {
        let area = self.occupancy.area(b)[self.offset(k) + n];
        area / (self.occupancy.batch_duration(b) * self.type_sizes[k] as f64)
    }

    /// Time-weighted occupancy of type `k` over the measurement window.
    pub fn occupancy_estimate(&self, k: usize) -> Result<OccupancyEstimate> {
        self.check_type(k)?;
        if !(self.measured_time() > 0.0) {
            return Err(Error::Estimation("nothing measured".into()));
        }
        let mut means = Vec::new();
        let mut se = Vec::new();
        for n in 0..=self.capacities[k] {
            let values: Vec<f64> = (0..self.occupancy.batches())
                .map(|b| self.batch_fraction(b, k, n))
                .collect();
            let e = batch_estimate(&values)?;
            means.push(e.mean);
            se.push(e.se);
        }
        Ok(OccupancyEstimate {
            dist: OccupancyDist::from_approximate(&means)?,
            se,
        })
    }

    /// Blocking fraction against the probability that all `d` probes are full.
    pub fn blocking_estimate(&self) -> Result<BlockingEstimate> {
        let n = self.n_servers() as f64;
        let mut blocked = Vec::new();
        let mut full = Vec::new();
        let mut model = Vec::new();
        for b in 0..self.occupancy.batches() {
            if self.batch_arrivals[b] == 0 {
                return Err(Error::Estimation(format!("batch {b} saw no arrivals")));
            }
            blocked.push(self.batch_blocks[b] as f64 / self.batch_arrivals[b] as f64);
            let area: f64 = (0..self.types())
                .map(|k| self.occupancy.area(b)[self.offset(k) + self.capacities[k]])
                .sum();
            let f = area / (self.occupancy.batch_duration(b) * n);
            full.push(f);
            model.push(f.powi(self.d as i32));
        }
        let diff: Vec<f64> = blocked.iter().zip(&model).map(|(a, m)| a - m).collect();
        Ok(BlockingEstimate {
            fraction: batch_estimate(&blocked)?,
            full: batch_estimate(&full)?,
            model: model.iter().mean(),
            difference: batch_estimate(&diff)?,
        })
    }

    /// Fraction of type-`k` servers holding exactly `n` jobs, all of age at
    /// most `y`, averaged over snapshots, for each `y` in `y_grid`.
    pub fn age_cdf_estimate(&self, k: usize, n: usize, y_grid: &[f64]) -> Result<Vec<Estimate>> {
        self.check_type(k)?;
        if n > self.capacities[k] {
            return Err(Error::Domain(format!(
                "occupancy {n} exceeds capacity {}",
                self.capacities[k]
            )));
        }
        if self.snapshots.len() < 2 {
            return Err(Error::Estimation(format!(
                "need at least 2 age snapshots, got {}",
                self.snapshots.len()
            )));
        }
        let size = self.type_sizes[k] as f64;
        let groups = self.occupancy.batches().min(self.snapshots.len());
        y_grid
            .iter()
            .map(|&y| {
                let per_snapshot: Vec<f64> = self
                    .snapshots
                    .iter()
                    .map(|s| {
                        let ages = &s.max_ages[k][n];
                        ages.partition_point(|a| *a <= y) as f64 / size
                    })
                    .collect();
                // Contiguous groups of snapshots act as batches.
                let batch_means: Vec<f64> = (0..groups)
                    .map(|g| {
                        let lo = g * per_snapshot.len() / groups;
                        let hi = (g + 1) * per_snapshot.len() / groups;
                        per_snapshot[lo..hi].iter().mean()
                    })
                    .collect();
                batch_estimate(&batch_means)
            })
            .collect()
    }
}

//! Occupancy trajectories from an all-empty start, averaged over replications.

use rayon::prelude::*;

use super::cluster::{run_replication, SimConfig};
use crate::error::{invalid, Result};

/// Mean occupancy fractions at each sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace {
    pub times: Vec<f64>,
    /// Per sample time, per-type fractions laid out type after type.
    pub mean: Vec<Vec<f64>>,
    pub replications: u64,
}

impl TransientTrace {
    /// `max_n |mean(t_i)_n − model_i_n|` for every sample time.
    pub fn sup_distances(&self, model: &[Vec<f64>]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(model)
            .map(|(a, b)| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
            .collect()
    }
}

/// Runs `replications` independent copies of `cfg` up to the last sample
/// time in parallel and averages their traces. Replication `r` uses stream
/// set `r`, so the result does not depend on the thread count.
pub fn transient_trace(cfg: &SimConfig, sample_times: &[f64], replications: u64) -> Result<TransientTrace> {
    if replications == 0 {
        return Err(invalid("replications", "need at least 1"));
    }
    let horizon = match sample_times.last() {
        Some(&t) if t > 0.0 => t,
        _ => return Err(invalid("sample_times", "need a positive final time")),
    };
    let run_cfg = SimConfig {
        t_total: horizon,
        t_warmup: 0.0,
        snapshot_interval: None,
        trace_times: sample_times.to_vec(),
        ..cfg.clone()
    };
    let runs = (0..replications)
        .into_par_iter()
        .map(|r| run_replication(&run_cfg, r).map(|s| s.trace))
        .collect::<Result<Vec<_>>>()?;
    let width = runs[0].first().map_or(0, Vec::len);
    let mut mean = vec![vec![0.0; width]; sample_times.len()];
    for trace in &runs {
        for (acc, row) in mean.iter_mut().zip(trace) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    for row in &mut mean {
        for a in row {
            *a /= replications as f64;
        }
    }
    Ok(TransientTrace {
        times: sample_times.to_vec(),
        mean,
        replications,
    })
}

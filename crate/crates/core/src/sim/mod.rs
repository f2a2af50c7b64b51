//! Finite-N discrete-event simulation.

pub mod cluster;
pub mod rng;
pub mod routing;
pub mod single;
pub mod stats;
pub mod transient;

pub use cluster::{run, run_replication, Cluster, Servers, SimConfig};
pub use routing::{route_max_vacancy, route_power_of_d, ProbeSampling, RouteDecision, ServerView};
pub use single::{run_single_server, SingleServerRun};
pub use stats::{batch_estimate, BlockingEstimate, Estimate, OccupancyEstimate, SimStats};
pub use transient::{transient_trace, TransientTrace};

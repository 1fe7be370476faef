//! Performance estimation for single-flow acyclic erasure networks whose
//! intermediate nodes have finite buffers.
//!
//! The analytic path decomposes the network into one small Markov chain per
//! node ([`chain`]), couples them through per-edge rates and blocking
//! probabilities iterated to a fixed point ([`fixed_point`]), and turns the
//! result into throughput and mean delay ([`metrics`]). The [`sim`] module is
//! the packet-level ground truth: an epoch-by-epoch simulator plus an exact
//! joint chain for tiny networks. [`cli`] wires everything into reports.
//!
//! ```
//! use fbnet::{model, fixed_point, metrics};
//!
//! let spec = model::parse_network(r#"{
//!     "nodes": [{"id": 0, "buffer": "unbounded"}, {"id": 1, "buffer": 2},
//!               {"id": 2, "buffer": "unbounded"}],
//!     "edges": [{"from": 0, "to": 1, "erasure": 0.5}, {"from": 1, "to": 2, "erasure": 0.5}],
//!     "source": 0, "destination": 2
//! }"#).unwrap();
//! let solved = fixed_point::solve(&spec, &Default::default()).unwrap();
//! let thr = metrics::throughput(&solved, &spec, 64);
//! assert!((thr.value - 0.4).abs() < 1e-9);
//! ```

pub mod chain;
pub mod cli;
pub mod cuts;
pub mod fixed_point;
pub mod metrics;
pub mod model;
pub mod report;
pub mod sim;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    FixedPoint(#[from] fixed_point::FixedPointError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Oracle(#[from] sim::OracleError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

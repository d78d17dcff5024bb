//! Distributed path compression over simulated ranks.
//!
//! Computes descending and ascending manifolds (and from them Morse-Smale
//! segmentations) and connected components of feature masks on scalar
//! fields split across ranks with one ghost layer. Every rank runs local
//! pointer jumping; cross-rank pointers are resolved by a fixed sequence of
//! collectives (allreduce, gather, scatter, allgather).

pub mod bench;
pub mod cli;
pub mod concomp;
pub mod error;
pub mod exchange;
pub mod grid;
pub mod io;
pub mod manifold;
pub mod oracle;
pub mod order;
pub mod partition;
pub mod pipeline;
pub mod stats;
pub mod transport;

mod parallel;
mod wire;

pub use concomp::{compute_connected_components, compute_feature_mask, FeatureMask, MaskMode};
pub use error::{DpcError, Result};
pub use exchange::{exchange_ghost_vertices, GhostPointerTable, GhostRecord};
pub use grid::{Connectivity, Domain, ExplicitGraph, GlobalVertexId, StructuredGrid};
pub use manifold::{
    compute_ascending_manifold, compute_descending_manifold, Direction, RunOptions, SegmentationField, UNLABELED,
};
pub use order::{compute_order_field, OrderField, ScalarField};
pub use partition::{build_distributed_domain, decompose, BlockPartition, DistributedDomain, RankId};
pub use pipeline::{run_pipeline, Algorithm, RunConfig};
pub use transport::{Collective, SimulatedCluster, SimulatedTransport};

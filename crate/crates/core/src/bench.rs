//! Desk-scale scaling sweeps over simulated rank counts.

use crate::error::{DpcError, Result};
use crate::grid::{Connectivity, Domain, StructuredGrid};
use crate::io::{generate_perlin, BenchRun, Scaling};
use crate::pipeline::{run_pipeline, Algorithm, RunConfig};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Dataset size for strong scaling; size at one rank for weak scaling.
    pub dims: [usize; 3],
    pub ranks: Vec<usize>,
    pub workers: usize,
    pub scaling: Scaling,
    pub algorithms: Vec<Algorithm>,
    pub connectivity: Connectivity,
    pub frequency: f64,
    pub seed: u64,
}

/// Weak-scaling dims for `ranks`: the base doubled along x, y, z in turn,
/// once per doubling of the rank count.
pub fn weak_dims(base: [usize; 3], ranks: usize) -> Result<[usize; 3]> {
    if !ranks.is_power_of_two() {
        return Err(DpcError::InvalidParameter(format!(
            "weak scaling needs power-of-two rank counts, got {ranks}"
        )));
    }
    let mut dims = base;
    for step in 0..ranks.trailing_zeros() as usize {
        dims[step % 3] *= 2;
    }
    Ok(dims)
}

pub fn dataset_name(dims: [usize; 3], seed: u64) -> String {
    format!("perlin-{}x{}x{}-s{seed}", dims[0], dims[1], dims[2])
}

/// Runs every algorithm at every rank count and returns one entry per
/// (rank count, algorithm). Preprocessing is attached to the first
/// algorithm of each rank count.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRun>> {
    let mut out = Vec::new();
    let mut strong_field = None;
    for &ranks in &cfg.ranks {
        let dims = match cfg.scaling {
            Scaling::Strong => cfg.dims,
            Scaling::Weak => weak_dims(cfg.dims, ranks)?,
        };
        let field = match (cfg.scaling, &strong_field) {
            (Scaling::Strong, Some(f)) => Vec::clone(f),
            _ => generate_perlin(dims, [cfg.frequency; 3], 1.0, cfg.seed)?,
        };
        if cfg.scaling == Scaling::Strong && strong_field.is_none() {
            strong_field = Some(field.clone());
        }
        let domain: Domain = StructuredGrid::new(dims, cfg.connectivity)?.into();
        let run = run_pipeline(&domain, &field, &cfg.algorithms, &RunConfig::new(ranks, cfg.workers))?;
        for (i, alg) in run.runs.into_iter().enumerate() {
            out.push(BenchRun {
                dataset: dataset_name(dims, cfg.seed),
                algorithm: alg.algorithm.name().into(),
                group: format!("{:?}-{}-w{}", cfg.scaling, alg.algorithm.name(), cfg.workers),
                scaling: cfg.scaling,
                stats: alg.stats,
                preprocess: (i == 0).then_some((run.preprocess_seconds, run.preprocess_bytes)),
            });
        }
    }
    Ok(out)
}

//! End-to-end runs on a global dataset: partition, order field, mask and the
//! requested algorithms over simulated ranks, reassembled into global
//! arrays indexed by vertex id.

use std::sync::Arc;
use std::time::Instant;

use crate::concomp::{compute_connected_components, compute_feature_mask, MaskMode};
use crate::error::{DpcError, Result};
use crate::exchange::ExchangeReport;
use crate::grid::Domain;
use crate::manifold::{compute_manifold, Direction, RunOptions};
use crate::order::{compute_order_field, OrderField, ScalarField};
use crate::partition::{build_distributed_domain, decompose, BlockPartition};
use crate::stats::{RankStats, RunStats};
use crate::transport::{Collective, SimulatedCluster, TranscriptEntry, TransportKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    Descending,
    Ascending,
    Components(MaskMode),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Descending => "descending",
            Algorithm::Ascending => "ascending",
            Algorithm::Components(_) => "components",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub ranks: usize,
    pub workers: usize,
    pub transport: TransportKind,
    /// The field already holds a global order (distinct integers `0..n`).
    pub precomputed_order: bool,
    /// Overrides the default block decomposition.
    pub partition: Option<Arc<BlockPartition>>,
    /// Keep exchange traces.
    pub trace: bool,
}

impl RunConfig {
    pub fn new(ranks: usize, workers: usize) -> Self {
        RunConfig {
            ranks,
            workers,
            transport: TransportKind::Simulated,
            precomputed_order: false,
            partition: None,
            trace: false,
        }
    }

    pub fn with_partition(mut self, partition: Arc<BlockPartition>) -> Self {
        self.ranks = partition.rank_count();
        self.partition = Some(partition);
        self
    }
}

/// One algorithm's result over all ranks.
#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    /// Label per global vertex id.
    pub labels: Vec<i64>,
    pub stats: RunStats,
    pub rank_stats: Vec<RankStats>,
    /// Exchange reports per rank, one per exchange invocation.
    pub exchanges: Vec<Vec<ExchangeReport>>,
    /// Global change count after each round (components only).
    pub round_changes: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    /// Order value per global vertex id.
    pub order: Vec<i64>,
    /// Slowest rank's preprocessing time and all ranks' preprocessing bytes.
    pub preprocess_seconds: f64,
    pub preprocess_bytes: u64,
    /// Masked vertices per components run, in algorithm order.
    pub masked_counts: Vec<u64>,
    pub runs: Vec<AlgorithmRun>,
    pub transcripts: Vec<Vec<TranscriptEntry>>,
}

impl PipelineRun {
    pub fn run(&self, name: &str) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm.name() == name)
    }
}

struct RankOutput {
    owned: Vec<u64>,
    order: Vec<i64>,
    preprocess_seconds: f64,
    preprocess_bytes: u64,
    masked: Vec<u64>,
    algorithms: Vec<RankAlgorithm>,
}

struct RankAlgorithm {
    labels: Vec<i64>,
    stats: RankStats,
    exchanges: Vec<ExchangeReport>,
    round_changes: Vec<u64>,
}

pub fn run_pipeline(domain: &Domain, field: &[f64], algorithms: &[Algorithm], cfg: &RunConfig) -> Result<PipelineRun> {
    if field.len() as u64 != domain.vertex_count() {
        return Err(DpcError::InvalidField(format!(
            "field has {} values for {} vertices",
            field.len(),
            domain.vertex_count()
        )));
    }
    if cfg.workers == 0 {
        return Err(DpcError::InvalidParameter("workers must be at least 1".into()));
    }
    let partition = match &cfg.partition {
        Some(p) => p.clone(),
        None => Arc::new(decompose(domain, cfg.ranks)?),
    };
    let cluster = match cfg.transport {
        TransportKind::Simulated => SimulatedCluster::new(partition.rank_count())?,
    };
    let opts = RunOptions {
        workers: cfg.workers,
        trace: cfg.trace,
    };
    let sim = cluster.run(|t| run_rank(domain, field, algorithms, cfg, &partition, opts, t))?;

    let n = field.len();
    let mut order = vec![-1; n];
    let mut preprocess_seconds = 0f64;
    let mut preprocess_bytes = 0;
    let mut masked_counts = vec![0; algorithms.len()];
    let mut runs: Vec<AlgorithmRun> = algorithms
        .iter()
        .map(|&algorithm| AlgorithmRun {
            algorithm,
            labels: vec![-1; n],
            stats: RunStats::default(),
            rank_stats: Vec::new(),
            exchanges: Vec::new(),
            round_changes: Vec::new(),
        })
        .collect();
    for out in sim.results {
        preprocess_seconds = preprocess_seconds.max(out.preprocess_seconds);
        preprocess_bytes += out.preprocess_bytes;
        for (&g, &o) in out.owned.iter().zip(&out.order) {
            order[g as usize] = o;
        }
        for (i, m) in out.masked.iter().enumerate() {
            masked_counts[i] += m;
        }
        for (run, alg) in runs.iter_mut().zip(out.algorithms) {
            for (&g, &l) in out.owned.iter().zip(&alg.labels) {
                run.labels[g as usize] = l;
            }
            run.rank_stats.push(alg.stats);
            run.exchanges.push(alg.exchanges);
            run.round_changes = alg.round_changes;
        }
    }
    for run in &mut runs {
        run.stats = RunStats::combine(&run.rank_stats, cfg.workers);
    }
    masked_counts = algorithms
        .iter()
        .zip(masked_counts)
        .filter(|(a, _)| matches!(a, Algorithm::Components(_)))
        .map(|(_, m)| m)
        .collect();
    Ok(PipelineRun {
        order,
        preprocess_seconds,
        preprocess_bytes,
        masked_counts,
        runs,
        transcripts: sim.transcripts,
    })
}

fn run_rank(
    domain: &Domain,
    field: &[f64],
    algorithms: &[Algorithm],
    cfg: &RunConfig,
    partition: &Arc<BlockPartition>,
    opts: RunOptions,
    t: &dyn Collective,
) -> Result<RankOutput> {
    let dd = build_distributed_domain(domain, partition.clone(), t.rank())?;
    let start = Instant::now();
    let scalars = ScalarField::from_global(&dd, field)?;
    let order = if cfg.precomputed_order {
        OrderField::from_injective_scalars(&dd, &scalars)?
    } else {
        compute_order_field(&dd, &scalars, t)?
    };
    let mut preprocess_seconds = start.elapsed().as_secs_f64();
    let preprocess_bytes = t.bytes_sent();

    let mut masked = Vec::new();
    let mut results = Vec::new();
    for alg in algorithms {
        let result = match *alg {
            Algorithm::Descending | Algorithm::Ascending => {
                let direction = if *alg == Algorithm::Descending {
                    Direction::Descending
                } else {
                    Direction::Ascending
                };
                let out = compute_manifold(&dd, &order, direction, t, opts)?;
                masked.push(0);
                RankAlgorithm {
                    labels: out.field.values()[..dd.owned_count()].to_vec(),
                    stats: out.stats,
                    exchanges: vec![out.exchange],
                    round_changes: vec![],
                }
            }
            Algorithm::Components(mode) => {
                let mask_start = Instant::now();
                let mask = compute_feature_mask(&dd, &order, &scalars, mode)?;
                preprocess_seconds += mask_start.elapsed().as_secs_f64();
                masked.push(mask.owned_count(&dd) as u64);
                let out = compute_connected_components(&dd, &mask, t, opts)?;
                RankAlgorithm {
                    labels: out.field.values()[..dd.owned_count()].to_vec(),
                    stats: out.stats,
                    exchanges: out.exchanges,
                    round_changes: out.round_changes,
                }
            }
        };
        results.push(result);
    }
    Ok(RankOutput {
        owned: dd.owned_globals().to_vec(),
        order: order.values()[..dd.owned_count()].to_vec(),
        preprocess_seconds,
        preprocess_bytes,
        masked,
        algorithms: results,
    })
}

/// Global order field alone, as computed by the distributed preprocessing.
pub fn distributed_order(domain: &Domain, field: &[f64], cfg: &RunConfig) -> Result<Vec<i64>> {
    Ok(run_pipeline(domain, field, &[], cfg)?.order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Connectivity, ExplicitGraph, StructuredGrid};
    use crate::oracle;

    #[test]
    fn spiral_over_four_ranks() {
        let domain: Domain = ExplicitGraph::path(16).into();
        let field: Vec<f64> = (0..16).map(f64::from).collect();
        let mut cfg = RunConfig::new(4, 1);
        cfg.precomputed_order = true;
        let run = run_pipeline(
            &domain,
            &field,
            &[
                Algorithm::Descending,
                Algorithm::Components(MaskMode::TopPercent(100.0)),
            ],
            &cfg,
        )
        .unwrap();
        assert_eq!(run.runs[0].labels, vec![15; 16]);
        assert_eq!(run.runs[1].labels, vec![15; 16]);
        assert_eq!(run.masked_counts, vec![16]);
        assert_eq!(run.preprocess_bytes, 0);
    }

    #[test]
    fn matches_oracles_on_a_small_grid() {
        let grid = StructuredGrid::new([7, 5, 3], Connectivity::Freudenthal).unwrap();
        let domain: Domain = grid.into();
        let field = crate::io::generate_perlin([7, 5, 3], [0.3; 3], 1.0, 9).unwrap();
        let order = oracle::reference_order(&field);
        let mask: Vec<bool> = order.iter().map(|&o| o >= 105 - 53).collect();
        for ranks in [1, 3, 4] {
            let run = run_pipeline(
                &domain,
                &field,
                &[
                    Algorithm::Descending,
                    Algorithm::Ascending,
                    Algorithm::Components(MaskMode::TopPercent(50.0)),
                ],
                &RunConfig::new(ranks, 2),
            )
            .unwrap();
            assert_eq!(run.order, order);
            assert_eq!(run.runs[0].labels, oracle::oracle_descending(&domain, &order));
            assert_eq!(run.runs[1].labels, oracle::oracle_ascending(&domain, &order));
            assert_eq!(run.runs[2].labels, oracle::oracle_components(&domain, &mask));
        }
    }

    #[test]
    fn field_size_is_checked() {
        let domain: Domain = ExplicitGraph::path(4).into();
        assert!(run_pipeline(&domain, &[0.0; 3], &[], &RunConfig::new(1, 1)).is_err());
        assert!(run_pipeline(&domain, &[0.0; 4], &[], &RunConfig::new(1, 0)).is_err());
    }
}

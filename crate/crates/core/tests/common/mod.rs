#![allow(dead_code)]

use dpc::grid::{Connectivity, Domain, ExplicitGraph, StructuredGrid};
use dpc::pipeline::{AlgorithmRun, PipelineRun};
use dpc::transport::CollectiveKind;
use rand::seq::SliceRandom;
use rand::Rng;

/// Owner of each spiral vertex A..P as drawn in the four-rank example.
pub const SPIRAL_OWNERS: [usize; 16] = [0, 1, 2, 3, 3, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3];

pub fn letter(id: i64) -> char {
    (b'A' + id as u8) as char
}

pub fn letter_id(c: char) -> i64 {
    (c as u8 - b'A') as i64
}

/// A random grid that every rank count up to 8 can split.
pub fn random_grid(rng: &mut impl Rng, max_side: usize, connectivity: Connectivity) -> StructuredGrid {
    let dims = if rng.gen_bool(0.25) {
        [rng.gen_range(4..=max_side), rng.gen_range(2..=max_side), 1]
    } else {
        [
            rng.gen_range(2..=max_side),
            rng.gen_range(2..=max_side),
            rng.gen_range(2..=max_side),
        ]
    };
    StructuredGrid::new(dims, connectivity).unwrap()
}

/// A random simple graph with `n` vertices and about `degree * n / 2` edges.
pub fn random_graph(rng: &mut impl Rng, n: u64, degree: f64) -> ExplicitGraph {
    let target = (degree * n as f64 / 2.0) as usize;
    let mut edges = std::collections::BTreeSet::new();
    // a random spanning path keeps most instances mostly connected
    let mut perm: Vec<u64> = (0..n).collect();
    perm.shuffle(rng);
    for w in perm.windows(2) {
        if rng.gen_bool(0.9) {
            edges.insert((w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    while edges.len() < target {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    ExplicitGraph::new(n, &edges.into_iter().collect::<Vec<_>>()).unwrap()
}

/// Scalar values with deliberate ties.
pub fn random_field(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let levels = rng.gen_range(1..=(n as u32).max(2));
    (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5 - 3.0).collect()
}

pub fn vertex_count(domain: &Domain) -> usize {
    domain.vertex_count() as usize
}

/// Checks the collective sequence of every exchange and of every rank's
/// whole transcript. Returns a description of the first violation.
pub fn check_protocol(run: &PipelineRun, precomputed_order: bool) -> Result<(), String> {
    use CollectiveKind::*;
    let ranks = run.transcripts.len();
    let mut expected: Vec<Vec<CollectiveKind>> = vec![Vec::new(); ranks];
    if !precomputed_order {
        for e in &mut expected {
            e.extend([Gather, Scatter]);
        }
    }
    for alg in &run.runs {
        check_exchanges(alg, ranks)?;
        for (rank, reports) in alg.exchanges.iter().enumerate() {
            for report in reports {
                expected[rank].extend(&report.collectives);
                if matches!(alg.algorithm, dpc::Algorithm::Components(_)) && ranks > 1 {
                    expected[rank].push(AllreduceSum);
                }
            }
        }
    }
    for (rank, transcript) in run.transcripts.iter().enumerate() {
        let kinds: Vec<CollectiveKind> = transcript.iter().map(|e| e.kind).collect();
        if kinds != expected[rank] {
            return Err(format!(
                "rank {rank} transcript {kinds:?}, expected {:?}",
                expected[rank]
            ));
        }
    }
    Ok(())
}

fn check_exchanges(alg: &AlgorithmRun, ranks: usize) -> Result<(), String> {
    use CollectiveKind::*;
    for (rank, reports) in alg.exchanges.iter().enumerate() {
        for report in reports {
            let expected: &[CollectiveKind] = if ranks == 1 {
                &[]
            } else if report.global_records == 0 {
                &[AllreduceSum]
            } else {
                &[AllreduceSum, Gather, Scatter, Allgather]
            };
            if report.collectives != expected {
                return Err(format!(
                    "{} exchange on rank {rank} issued {:?} with {} global records",
                    alg.algorithm.name(),
                    report.collectives,
                    report.global_records
                ));
            }
        }
    }
    Ok(())
}

/// `ceil(log2 len) + 1`, with paths of length 0 or 1 allowing one sweep.
pub fn sweep_bound(len: usize) -> usize {
    if len <= 1 {
        1
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize + 1
    }
}

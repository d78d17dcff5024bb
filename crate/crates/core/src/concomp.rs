//! Connected components of a feature mask, labeled by the largest global id
//! of each component.
//!
//! Each round flattens the largest-id flow locally, then stitches adjacent
//! segments (the peak of the smaller one is raised to the label of the
//! larger one) and flattens again until nothing local moves. The exchange
//! then links every masked ghost with the labels of its masked owned
//! neighbors, with its owner's label, and with any raise whose peak lives
//! on another rank; each linked class takes its largest id. Rounds repeat
//! until an exchange changes nothing on any rank, which normally means one
//! exchange that merges and one that confirms.
//!
//! Labels only ever grow and always name a member of the same component,
//! so at that fixed point every component carries its maximum id.

use std::sync::atomic::{AtomicI64, Ordering};

use crate::error::{DpcError, Result};
use crate::exchange::{exchange_ghost_vertices, ExchangeOptions, ExchangeReport, GhostRecord, Resolution};
use crate::grid::Domain;
use crate::manifold::{local_path_compression, RunOptions, SegmentationField, UNLABELED};
use crate::order::{OrderField, ScalarField};
use crate::parallel;
use crate::partition::DistributedDomain;
use crate::stats::{Phase, RankStats};
use crate::transport::Collective;

/// Safety cap on global rounds; each round merges at least one pair of
/// segments, so this is far beyond anything reachable.
const MAX_ROUNDS: usize = 10_000;

/// How vertices are selected for the mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskMode {
    /// The `p` percent of vertices with the highest order, `0 < p <= 100`.
    TopPercent(f64),
    /// Vertices whose scalar value is strictly above the threshold.
    Threshold(f64),
}

/// Per-local-vertex membership flag (owned then ghosts).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMask {
    values: Vec<bool>,
}

impl FeatureMask {
    pub fn new(values: Vec<bool>) -> Self {
        FeatureMask { values }
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, local: usize) -> bool {
        self.values[local]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn owned_count(&self, domain: &DistributedDomain) -> usize {
        self.values[..domain.owned_count()].iter().filter(|&&m| m).count()
    }
}

/// `ceil(p * n / 100)`, exact for integral `p`.
pub fn top_percent_count(p: f64, n: u64) -> Result<u64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(DpcError::InvalidParameter(format!(
            "top percent must be in (0, 100], got {p}"
        )));
    }
    if p.fract() == 0.0 {
        let p = p as u128;
        return Ok((p * n as u128).div_ceil(100) as u64);
    }
    Ok(((p * n as f64 / 100.0).ceil() as u64).min(n))
}

/// Builds the mask on owned and ghost vertices. Ghost order and scalar
/// values already agree with their owners, so the ghost entries agree too
/// and no communication is needed.
pub fn compute_feature_mask(
    domain: &DistributedDomain,
    order: &OrderField,
    field: &ScalarField,
    mode: MaskMode,
) -> Result<FeatureMask> {
    let values = match mode {
        MaskMode::TopPercent(p) => {
            let n = domain.global_count();
            let cut = (n - top_percent_count(p, n)?) as i64;
            order.values().iter().map(|&o| o >= cut).collect()
        }
        MaskMode::Threshold(tau) => {
            if tau.is_nan() {
                return Err(DpcError::InvalidParameter("threshold is NaN".into()));
            }
            field.values().iter().map(|&f| f > tau).collect()
        }
    };
    Ok(FeatureMask { values })
}

/// Points every masked owned vertex at the largest id among itself and its
/// masked neighbors. Masked ghosts point at themselves and get a record.
pub fn init_components(domain: &DistributedDomain, mask: &FeatureMask) -> (SegmentationField, Vec<GhostRecord>) {
    let mut d = vec![UNLABELED; domain.local_count()];
    for (v, slot) in d.iter_mut().enumerate().take(domain.owned_count()) {
        if !mask.get(v) {
            continue;
        }
        let mut best = domain.global_id(v);
        for &u in domain.neighbors(v) {
            if mask.get(u as usize) {
                best = best.max(domain.global_id(u as usize));
            }
        }
        *slot = best as i64;
    }
    let mut gv = Vec::new();
    for (l, slot) in d.iter_mut().enumerate().skip(domain.owned_count()) {
        if mask.get(l) {
            let g = domain.global_id(l);
            *slot = g as i64;
            gv.push(GhostRecord::request(g, domain.ghost_owner(l).expect("ghost")));
        }
    }
    (SegmentationField::new(d), gv)
}

/// Outcome of one stitch pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StitchOutcome {
    /// Some local entry grew.
    pub changed: bool,
    /// Raises for peaks owned by other ranks, to ride the next exchange.
    pub proposals: Vec<GhostRecord>,
}

/// For every masked edge `(v, u)` with `d[u] > d[v]`, raises `d[d[v]]` to at
/// least `d[u]`. `d` must be flattened on masked owned vertices.
///
/// Concurrent raises use an atomic maximum, so no raise is ever undone.
pub fn stitch_segments(
    domain: &DistributedDomain,
    mask: &FeatureMask,
    d: &mut SegmentationField,
    workers: usize,
) -> StitchOutcome {
    let cells = parallel::to_cells(d.values());
    let parts = parallel::map_chunks(domain.owned_count(), workers, |range| {
        stitch_range(domain, mask, &cells, range)
    });
    parallel::from_cells(&cells, d.values_mut());
    let mut out = StitchOutcome::default();
    for (changed, proposals) in parts {
        out.changed |= changed;
        out.proposals.extend(proposals);
    }
    out
}

fn stitch_range(
    domain: &DistributedDomain,
    mask: &FeatureMask,
    cells: &[AtomicI64],
    range: std::ops::Range<usize>,
) -> (bool, Vec<GhostRecord>) {
    let mut changed = false;
    let mut proposals = Vec::new();
    for v in range {
        if !mask.get(v) {
            continue;
        }
        for &u in domain.neighbors(v) {
            let u = u as usize;
            if !mask.get(u) {
                continue;
            }
            let label_v = cells[v].load(Ordering::Relaxed);
            let label_u = cells[u].load(Ordering::Relaxed);
            if label_u <= label_v {
                continue;
            }
            let peak = label_v as u64;
            match domain.local_of(peak) {
                Some(lp) => {
                    if cells[lp].fetch_max(label_u, Ordering::Relaxed) < label_u {
                        changed = true;
                    }
                    if let Some(owner) = domain.ghost_owner(lp) {
                        proposals.push(GhostRecord {
                            id: peak,
                            owner,
                            target: label_u,
                        });
                    }
                }
                None => proposals.push(GhostRecord {
                    id: peak,
                    owner: domain.owner_of(peak),
                    target: label_u,
                }),
            }
        }
    }
    (changed, proposals)
}

#[derive(Clone, Debug)]
pub struct ComponentsOutput {
    pub field: SegmentationField,
    pub stats: RankStats,
    /// Entries changed by each round's exchange, summed over ranks.
    pub round_changes: Vec<u64>,
    /// This rank's view of each round's exchange.
    pub exchanges: Vec<ExchangeReport>,
}

pub fn compute_connected_components(
    domain: &DistributedDomain,
    mask: &FeatureMask,
    t: &dyn Collective,
    opts: RunOptions,
) -> Result<ComponentsOutput> {
    if mask.len() != domain.local_count() {
        return Err(DpcError::InvalidField(format!(
            "mask has {} entries for {} local vertices",
            mask.len(),
            domain.local_count()
        )));
    }
    let mut stats = RankStats::default();
    let bytes_before = t.bytes_sent();
    let (mut d, requests) = stats.phases.time(Phase::Init, || init_components(domain, mask));
    stats.ghost_records = requests.len() as u64;
    let mut round_changes = Vec::new();
    let mut exchanges = Vec::new();

    loop {
        if round_changes.len() >= MAX_ROUNDS {
            return Err(DpcError::InvariantViolation(
                "connected components do not converge".into(),
            ));
        }
        let mut proposals = Vec::new();
        compress(domain, &mut d, opts.workers, &mut stats)?;
        loop {
            let stitched = stats
                .phases
                .time(Phase::Stitch, || stitch_segments(domain, mask, &mut d, opts.workers));
            proposals.extend(stitched.proposals);
            if !stitched.changed {
                break;
            }
            compress(domain, &mut d, opts.workers, &mut stats)?;
        }

        let records = ghost_links(domain, mask, &d, &requests, proposals);
        let report = exchange_ghost_vertices(
            domain,
            &mut d,
            &records,
            t,
            ExchangeOptions {
                workers: opts.workers,
                trace: false,
                resolution: Resolution::Merge,
            },
        )?;
        stats.phases.exchange += report.exchange_seconds;
        stats.phases.rewrite += report.rewrite_seconds;
        stats.exchanges += 1;
        stats.rounds += 1;

        let local_changes = report.changed as i64;
        let changed = if t.rank_count() == 1 {
            local_changes
        } else {
            let start = std::time::Instant::now();
            let total = t.allreduce_sum(local_changes)?;
            stats.phases.exchange += start.elapsed().as_secs_f64();
            total
        };
        round_changes.push(changed as u64);
        exchanges.push(report);
        if changed == 0 {
            break;
        }
    }
    stats.bytes_sent = t.bytes_sent() - bytes_before;
    Ok(ComponentsOutput {
        field: d,
        stats,
        round_changes,
        exchanges,
    })
}

/// Records for the next exchange: one link per masked ghost and label of
/// an adjacent masked owned vertex, a bare request for masked ghosts with
/// no such neighbor, and the stitch proposals. Sorted and deduplicated.
pub fn ghost_links(
    domain: &DistributedDomain,
    mask: &FeatureMask,
    d: &SegmentationField,
    requests: &[GhostRecord],
    proposals: Vec<GhostRecord>,
) -> Vec<GhostRecord> {
    let owned = domain.owned_count();
    let mut links = std::collections::BTreeSet::new();
    let mut linked = vec![false; domain.local_count() - owned];
    for v in (0..owned).filter(|&v| mask.get(v)) {
        for &u in domain.neighbors(v) {
            let u = u as usize;
            if u < owned || !mask.get(u) {
                continue;
            }
            linked[u - owned] = true;
            links.insert(GhostRecord {
                id: domain.global_id(u),
                owner: domain.ghost_owner(u).expect("ghost"),
                target: d.get(v),
            });
        }
    }
    for r in requests {
        let l = domain.local_of(r.id).expect("requested ghost is local");
        if !linked[l - owned] {
            links.insert(*r);
        }
    }
    links.extend(proposals);
    links.into_iter().collect()
}

fn compress(
    domain: &DistributedDomain,
    d: &mut SegmentationField,
    workers: usize,
    stats: &mut RankStats,
) -> Result<()> {
    let sweeps = stats
        .phases
        .time(Phase::LocalCompression, || local_path_compression(domain, d, workers))?;
    stats.sweeps = stats.sweeps.max(sweeps);
    Ok(())
}

/// Masked vertices with their labels plus the masked edges between them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractedComponents {
    pub vertices: Vec<(u64, i64)>,
    pub edges: Vec<(u64, u64)>,
}

impl ExtractedComponents {
    pub fn component_count(&self) -> usize {
        let mut labels: Vec<i64> = self.vertices.iter().map(|&(_, l)| l).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }
}

/// Drops the unlabeled background from a global label array.
pub fn extract_components(domain: &Domain, labels: &[i64]) -> Result<ExtractedComponents> {
    if labels.len() as u64 != domain.vertex_count() {
        return Err(DpcError::InvalidField(format!(
            "{} labels for {} vertices",
            labels.len(),
            domain.vertex_count()
        )));
    }
    let mut out = ExtractedComponents::default();
    for (v, &l) in labels.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        out.vertices.push((v as u64, l));
        domain.for_each_neighbor(v as u64, |u| {
            if u > v as u64 && labels[u as usize] != UNLABELED {
                out.edges.push((v as u64, u));
            }
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Connectivity, ExplicitGraph, StructuredGrid};
    use crate::partition::{build_distributed_domain, decompose, RankId};
    use std::sync::Arc;

    fn single_rank(domain: &Domain) -> DistributedDomain {
        build_distributed_domain(domain, Arc::new(decompose(domain, 1).unwrap()), RankId(0)).unwrap()
    }

    fn identity_order(n: usize) -> OrderField {
        OrderField::from_local((0..n as i64).collect())
    }

    fn zeros(n: usize) -> ScalarField {
        ScalarField::new(vec![0.0; n]).unwrap()
    }

    #[test]
    fn top_percent_counts() {
        assert_eq!(top_percent_count(10.0, 32768).unwrap(), 3277);
        assert_eq!(top_percent_count(100.0, 7).unwrap(), 7);
        assert_eq!(top_percent_count(25.0, 16).unwrap(), 4);
        assert_eq!(top_percent_count(0.5, 10).unwrap(), 1);
        for p in [0.0, -1.0, 100.5, f64::NAN] {
            assert!(matches!(top_percent_count(p, 10), Err(DpcError::InvalidParameter(_))));
        }
    }

    #[test]
    fn spiral_top_quarter() {
        let domain: Domain = ExplicitGraph::path(16).into();
        let dd = single_rank(&domain);
        let m = compute_feature_mask(&dd, &identity_order(16), &zeros(16), MaskMode::TopPercent(25.0)).unwrap();
        let masked: Vec<usize> = (0..16).filter(|&v| m.get(v)).collect();
        assert_eq!(masked, vec![12, 13, 14, 15]);
        let all = compute_feature_mask(&dd, &identity_order(16), &zeros(16), MaskMode::TopPercent(100.0)).unwrap();
        assert!(all.values().iter().all(|&b| b));
    }

    #[test]
    fn threshold_is_strict() {
        let domain: Domain = ExplicitGraph::path(3).into();
        let dd = single_rank(&domain);
        let f = ScalarField::new(vec![0.5, 1.0, 1.5]).unwrap();
        let m = compute_feature_mask(&dd, &identity_order(3), &f, MaskMode::Threshold(1.0)).unwrap();
        assert_eq!(m.values(), &[false, false, true]);
    }

    #[test]
    fn empty_mask_is_all_unlabeled() {
        let domain: Domain = ExplicitGraph::path(5).into();
        let dd = single_rank(&domain);
        let (d, gv) = init_components(&dd, &FeatureMask::new(vec![false; 5]));
        assert_eq!(d.values(), &[UNLABELED; 5]);
        assert!(gv.is_empty());
    }

    #[test]
    fn checkerboard_vertices_are_isolated() {
        let domain: Domain = StructuredGrid::new([4, 4, 1], Connectivity::Face).unwrap().into();
        let dd = single_rank(&domain);
        let mask: Vec<bool> = (0..16).map(|v| (v % 4 + v / 4) % 2 == 0).collect();
        for v in 0..16u64 {
            if mask[v as usize] {
                domain.for_each_neighbor(v, |u| assert!(!mask[u as usize]));
            }
        }
        let (d, _) = init_components(&dd, &FeatureMask::new(mask.clone()));
        for (v, &m) in mask.iter().enumerate() {
            let expected = if m { v as i64 } else { UNLABELED };
            assert_eq!(d.get(v), expected);
        }
    }

    #[test]
    fn full_mask_matches_descending_init_on_identity_order() {
        let domain: Domain = ExplicitGraph::path(16).into();
        let dd = single_rank(&domain);
        let (cc, _) = init_components(&dd, &FeatureMask::new(vec![true; 16]));
        let (desc, _) = crate::manifold::init_descending(&dd, &identity_order(16));
        assert_eq!(cc, desc);
    }

    #[test]
    fn stitch_merges_two_segments() {
        // two flattened segments 0..=5 -> 5 and 6..=9 -> 9, edge (5, 6)
        let domain: Domain = ExplicitGraph::path(10).into();
        let dd = single_rank(&domain);
        let mask = FeatureMask::new(vec![true; 10]);
        let mut d = SegmentationField::new([5; 6].into_iter().chain([9; 4]).collect());
        let out = stitch_segments(&dd, &mask, &mut d, 2);
        assert!(out.changed);
        assert!(out.proposals.is_empty());
        assert_eq!(d.get(5), 9);
        local_path_compression(&dd, &mut d, 1).unwrap();
        assert_eq!(d.values(), &[9; 10]);
        assert!(!stitch_segments(&dd, &mask, &mut d, 1).changed);
    }

    #[test]
    fn sub_segments_of_one_component_merge() {
        // a U-shaped component on a 3x3 grid whose id flow splits it in two:
        // the left column flows to 6, the rest to 8, joined through the top
        // row
        let domain: Domain = StructuredGrid::new([3, 3, 1], Connectivity::Face).unwrap().into();
        let dd = single_rank(&domain);
        let mask = FeatureMask::new(vec![true, true, true, true, false, true, true, false, true]);
        let t = crate::transport::SimulatedCluster::new(1).unwrap();
        let run = t
            .run(|t| compute_connected_components(&dd, &mask, t, RunOptions::default()))
            .unwrap();
        let out = &run.results[0];
        let expected: Vec<i64> = (0..9).map(|v| if mask.get(v) { 8 } else { UNLABELED }).collect();
        assert_eq!(out.field.values(), &expected[..]);
        assert_eq!(out.stats.rounds, 1);
    }

    #[test]
    fn two_plateaus() {
        let domain: Domain = StructuredGrid::new([8, 8, 1], Connectivity::Face).unwrap().into();
        let mut mask = [false; 64];
        for (x, y) in [(1, 1), (2, 1), (1, 2), (2, 2), (5, 5), (6, 5), (5, 6), (6, 6)] {
            mask[x + 8 * y] = true;
        }
        let part = Arc::new(decompose(&domain, 4).unwrap());
        let run = crate::transport::SimulatedCluster::new(4)
            .unwrap()
            .run(|t| {
                let dd = build_distributed_domain(&domain, part.clone(), t.rank())?;
                let m = FeatureMask::new(dd.local_to_global().iter().map(|&g| mask[g as usize]).collect());
                let out = compute_connected_components(&dd, &m, t, RunOptions::with_workers(2))?;
                Ok(out.field.owned_labels(&dd).collect::<Vec<_>>())
            })
            .unwrap();
        let mut labels = vec![0; 64];
        for (g, l) in run.results.into_iter().flatten() {
            labels[g as usize] = l;
        }
        for (v, &label) in labels.iter().enumerate() {
            let expected = match v {
                9 | 10 | 17 | 18 => 18,
                45 | 46 | 53 | 54 => 54,
                _ => UNLABELED,
            };
            assert_eq!(label, expected, "vertex {v}");
        }
    }

    #[test]
    fn extract_keeps_masked_subgraph() {
        let domain: Domain = ExplicitGraph::path(5).into();
        let ex = extract_components(&domain, &[1, 1, UNLABELED, 4, 4]).unwrap();
        assert_eq!(ex.vertices, vec![(0, 1), (1, 1), (3, 4), (4, 4)]);
        assert_eq!(ex.edges, vec![(0, 1), (3, 4)]);
        assert_eq!(ex.component_count(), 2);
        assert!(extract_components(&domain, &[1]).is_err());
    }
}

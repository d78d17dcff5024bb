//! Descending and ascending manifolds by local path compression followed by
//! one global ghost exchange.
//!
//! Every owned vertex first points at the largest vertex of its closed
//! neighborhood (so maxima point at themselves), ghosts pretend to be
//! maxima, and pointer jumping flattens each chain to its local sink. The
//! exchange then replaces ghost sinks by the true maxima on other ranks.

use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::{Barrier, Mutex};

use crate::error::{DpcError, Result};
use crate::exchange::{exchange_ghost_vertices, ExchangeOptions, ExchangeReport, GhostRecord};
use crate::order::OrderField;
use crate::parallel;
use crate::partition::DistributedDomain;
use crate::stats::{Phase, RankStats};
use crate::transport::Collective;

/// Label of vertices that take no part in a segmentation.
pub const UNLABELED: i64 = -1;

/// Hard cap on compression sweeps; 64-bit ids never need more than ~65.
const MAX_SWEEPS: usize = 130;

/// Per-local-vertex pointer array holding global ids or [`UNLABELED`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationField {
    values: Vec<i64>,
}

impl SegmentationField {
    pub fn new(values: Vec<i64>) -> Self {
        SegmentationField { values }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, local: usize) -> i64 {
        self.values[local]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(global id, label)` for every owned vertex.
    pub fn owned_labels<'a>(&'a self, domain: &'a DistributedDomain) -> impl Iterator<Item = (u64, i64)> + 'a {
        domain.owned_globals().iter().zip(&self.values).map(|(&g, &l)| (g, l))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Direction {
    /// Steepest ascent to maxima.
    Descending,
    /// Steepest descent to minima.
    Ascending,
}

fn init_ghosts(domain: &DistributedDomain, d: &mut [i64]) -> Vec<GhostRecord> {
    (domain.owned_count()..domain.local_count())
        .map(|l| {
            let g = domain.global_id(l);
            d[l] = g as i64;
            GhostRecord::request(g, domain.ghost_owner(l).expect("ghost"))
        })
        .collect()
}

/// Points every owned vertex at the highest-order vertex of its closed
/// neighborhood; every ghost points at itself and gets a ghost record.
pub fn init_descending(domain: &DistributedDomain, order: &OrderField) -> (SegmentationField, Vec<GhostRecord>) {
    let mut d = vec![UNLABELED; domain.local_count()];
    for (v, slot) in d.iter_mut().enumerate().take(domain.owned_count()) {
        let mut best = v;
        for &u in domain.neighbors(v) {
            if order.get(u as usize) > order.get(best) {
                best = u as usize;
            }
        }
        *slot = domain.global_id(best) as i64;
    }
    let gv = init_ghosts(domain, &mut d);
    (SegmentationField::new(d), gv)
}

/// Mirror of [`init_descending`] pointing at the lowest-order vertex.
pub fn init_ascending(domain: &DistributedDomain, order: &OrderField) -> (SegmentationField, Vec<GhostRecord>) {
    init_descending(domain, &order.reversed(domain.global_count()))
}

/// One pointer-jumping step for `v`. Returns `Ok(true)` once `v` points at
/// a sink: a vertex pointing at itself, or an id this rank cannot see.
#[inline]
fn jump(domain: &DistributedDomain, cells: &[AtomicI64], v: usize) -> Result<bool> {
    let u = cells[v].load(Ordering::Relaxed);
    let Some(lu) = domain.local_of(u as u64) else {
        return Ok(true);
    };
    let w = cells[lu].load(Ordering::Relaxed);
    if w == u {
        return Ok(true);
    }
    if w == UNLABELED {
        return Err(DpcError::InvariantViolation(format!(
            "vertex {} points at unlabeled vertex {u}",
            domain.global_id(v)
        )));
    }
    if w == domain.global_id(v) as i64 {
        return Err(DpcError::InvariantViolation(format!(
            "pointer cycle through vertex {}",
            domain.global_id(v)
        )));
    }
    cells[v].store(w, Ordering::Relaxed);
    Ok(false)
}

/// Flattens every labeled owned pointer to its sink, in place. Returns the
/// number of sweeps over the active set.
///
/// Workers own disjoint slices of the owned vertices and sweep in lockstep:
/// a barrier separates sweeps so that every read in sweep `k` sees at least
/// the state at the end of sweep `k - 1`.
pub fn local_path_compression(domain: &DistributedDomain, d: &mut SegmentationField, workers: usize) -> Result<usize> {
    let active: Vec<u32> = (0..domain.owned_count())
        .filter(|&v| d.get(v) != UNLABELED)
        .map(|v| v as u32)
        .collect();
    if active.is_empty() {
        return Ok(0);
    }
    let cells = parallel::to_cells(d.values());
    let lists: Vec<Vec<u32>> = parallel::split_range(active.len(), workers)
        .into_iter()
        .map(|r| active[r].to_vec())
        .collect();

    let sweeps = if lists.len() == 1 {
        let mut list = lists.into_iter().next().unwrap();
        let mut sweeps = 0;
        while !list.is_empty() {
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(DpcError::InvariantViolation(
                    "path compression does not converge".into(),
                ));
            }
            let mut err = None;
            list.retain(|&v| match jump(domain, &cells, v as usize) {
                Ok(done) => !done,
                Err(e) => {
                    err.get_or_insert(e);
                    false
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        sweeps
    } else {
        sweep_in_lockstep(domain, &cells, lists)?
    };
    parallel::from_cells(&cells, d.values_mut());
    Ok(sweeps)
}

fn sweep_in_lockstep(domain: &DistributedDomain, cells: &[AtomicI64], lists: Vec<Vec<u32>>) -> Result<usize> {
    let barrier = Barrier::new(lists.len());
    // remaining-work counters rotate so a slow reader never sees a reset
    let remaining = [AtomicUsize::new(0), AtomicUsize::new(0), AtomicUsize::new(0)];
    let failed = AtomicBool::new(false);
    let first_error = Mutex::new(None);
    let sweeps = std::thread::scope(|s| {
        let handles: Vec<_> = lists
            .into_iter()
            .map(|mut list| {
                let (barrier, remaining, failed, first_error) = (&barrier, &remaining, &failed, &first_error);
                s.spawn(move || {
                    let mut sweep = 0usize;
                    loop {
                        let mut err = None;
                        list.retain(|&v| match jump(domain, cells, v as usize) {
                            Ok(done) => !done,
                            Err(e) => {
                                err.get_or_insert(e);
                                false
                            }
                        });
                        if let Some(e) = err {
                            failed.store(true, Ordering::Relaxed);
                            first_error.lock().unwrap().get_or_insert(e);
                        }
                        remaining[sweep % 3].fetch_add(list.len(), Ordering::Relaxed);
                        remaining[(sweep + 1) % 3].store(0, Ordering::Relaxed);
                        barrier.wait();
                        let left = remaining[sweep % 3].load(Ordering::Relaxed);
                        sweep += 1;
                        if left == 0 || failed.load(Ordering::Relaxed) {
                            break sweep;
                        }
                        if sweep >= MAX_SWEEPS {
                            // every worker reaches this sweep count together
                            first_error.lock().unwrap().get_or_insert(DpcError::InvariantViolation(
                                "path compression does not converge".into(),
                            ));
                            break sweep;
                        }
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .max()
            .unwrap_or(0)
    });
    match first_error.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(sweeps),
    }
}

/// Tuning knobs shared by the distributed algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Keep the ghost-table compression history in the exchange report.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            trace: false,
        }
    }
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        RunOptions {
            workers: workers.max(1),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifoldOutput {
    pub field: SegmentationField,
    pub stats: RankStats,
    pub exchange: ExchangeReport,
}

pub fn compute_manifold(
    domain: &DistributedDomain,
    order: &OrderField,
    direction: Direction,
    t: &dyn Collective,
    opts: RunOptions,
) -> Result<ManifoldOutput> {
    let mut stats = RankStats::default();
    let bytes_before = t.bytes_sent();
    let (mut d, gv) = stats.phases.time(Phase::Init, || match direction {
        Direction::Descending => init_descending(domain, order),
        Direction::Ascending => init_ascending(domain, order),
    });
    stats.sweeps = stats.phases.time(Phase::LocalCompression, || {
        local_path_compression(domain, &mut d, opts.workers)
    })?;
    stats.ghost_records = gv.len() as u64;
    let exchange = exchange_ghost_vertices(
        domain,
        &mut d,
        &gv,
        t,
        ExchangeOptions {
            workers: opts.workers,
            trace: opts.trace,
            ..Default::default()
        },
    )?;
    stats.phases.exchange += exchange.exchange_seconds;
    stats.phases.rewrite += exchange.rewrite_seconds;
    stats.exchanges = 1;
    stats.rounds = 1;
    stats.bytes_sent = t.bytes_sent() - bytes_before;
    Ok(ManifoldOutput {
        field: d,
        stats,
        exchange,
    })
}

/// Maps every owned vertex to the maximum its steepest-ascent path reaches.
pub fn compute_descending_manifold(
    domain: &DistributedDomain,
    order: &OrderField,
    t: &dyn Collective,
    opts: RunOptions,
) -> Result<ManifoldOutput> {
    compute_manifold(domain, order, Direction::Descending, t, opts)
}

/// Maps every owned vertex to the minimum its steepest-descent path reaches.
pub fn compute_ascending_manifold(
    domain: &DistributedDomain,
    order: &OrderField,
    t: &dyn Collective,
    opts: RunOptions,
) -> Result<ManifoldOutput> {
    compute_manifold(domain, order, Direction::Ascending, t, opts)
}

/// Morse-Smale cells from a descending and an ascending labeling over the
/// same vertices (indexed by global id).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsSegmentation {
    /// `(minimum, maximum)` reached from each vertex.
    pub pairs: Vec<(i64, i64)>,
    /// Dense cell ids, numbered by first occurrence in global id order.
    pub labels: Vec<i64>,
    pub segment_count: usize,
}

pub fn combine_ms(descending: &[i64], ascending: &[i64]) -> Result<MsSegmentation> {
    if descending.len() != ascending.len() {
        return Err(DpcError::InvalidParameter(format!(
            "descending labels cover {} vertices, ascending {}",
            descending.len(),
            ascending.len()
        )));
    }
    let pairs: Vec<(i64, i64)> = ascending.iter().copied().zip(descending.iter().copied()).collect();
    let mut ids = std::collections::HashMap::new();
    let labels = pairs
        .iter()
        .map(|p| {
            let next = ids.len() as i64;
            *ids.entry(*p).or_insert(next)
        })
        .collect();
    Ok(MsSegmentation {
        pairs,
        labels,
        segment_count: ids.len(),
    })
}

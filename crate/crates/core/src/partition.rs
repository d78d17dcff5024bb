//! Block decomposition over ranks and the per-rank view with one ghost layer.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{DpcError, Result};
use crate::grid::{Domain, StructuredGrid};

/// Index of a participant in `0..rank_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RankId(pub usize);

impl RankId {
    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Layout {
    /// Axis-aligned boxes; `cuts[a]` holds `procs[a] + 1` split positions.
    Blocks {
        dims: [usize; 3],
        procs: [usize; 3],
        cuts: [Vec<usize>; 3],
    },
    /// Contiguous global id ranges; `starts` has `rank_count + 1` entries.
    Ranges { starts: Vec<u64> },
    /// Arbitrary per-vertex owner table.
    Explicit { owners: Vec<u32> },
}

/// Assignment of every global vertex to exactly one owner rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    rank_count: usize,
    vertex_count: u64,
    layout: Layout,
}

/// Splits `n` items into `parts` runs whose sizes differ by at most one,
/// larger runs first. Returns the `parts + 1` boundaries.
fn even_cuts(n: u64, parts: usize) -> Vec<u64> {
    let q = n / parts as u64;
    let r = n % parts as u64;
    let mut cuts = Vec::with_capacity(parts + 1);
    let mut at = 0;
    cuts.push(0);
    for i in 0..parts as u64 {
        at += q + u64::from(i < r);
        cuts.push(at);
    }
    cuts
}

/// Factors `ranks` into a process grid that fits `dims` and minimizes the
/// total area of internal cuts.
fn factor_ranks(dims: [usize; 3], ranks: usize) -> Option<[usize; 3]> {
    let area = [
        (dims[1] * dims[2]) as u128,
        (dims[0] * dims[2]) as u128,
        (dims[0] * dims[1]) as u128,
    ];
    let mut best: Option<([usize; 3], u128)> = None;
    for px in (1..=ranks).filter(|p| ranks.is_multiple_of(*p) && *p <= dims[0]) {
        let rest = ranks / px;
        for py in (1..=rest).filter(|p| rest.is_multiple_of(*p) && *p <= dims[1]) {
            let pz = rest / py;
            if pz > dims[2] {
                continue;
            }
            let p = [px, py, pz];
            let cost: u128 = (0..3).map(|a| (p[a] as u128 - 1) * area[a]).sum();
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((p, cost));
            }
        }
    }
    best.map(|(p, _)| p)
}

/// Deterministic decomposition of `domain` over `rank_count` ranks: boxes for
/// grids, contiguous id ranges for graphs.
pub fn decompose(domain: &Domain, rank_count: usize) -> Result<BlockPartition> {
    let vertex_count = domain.vertex_count();
    if rank_count == 0 {
        return Err(DpcError::InvalidParameter("rank count must be at least 1".into()));
    }
    if rank_count as u64 > vertex_count {
        return Err(DpcError::TooManyRanks {
            ranks: rank_count,
            vertices: vertex_count,
        });
    }
    let layout = match domain {
        Domain::Grid(grid) => {
            let dims = grid.dims();
            let procs = factor_ranks(dims, rank_count).ok_or(DpcError::TooManyRanks {
                ranks: rank_count,
                vertices: vertex_count,
            })?;
            let cuts = [0, 1, 2].map(|a| {
                even_cuts(dims[a] as u64, procs[a])
                    .into_iter()
                    .map(|c| c as usize)
                    .collect()
            });
            Layout::Blocks { dims, procs, cuts }
        }
        Domain::Graph(_) => Layout::Ranges {
            starts: even_cuts(vertex_count, rank_count),
        },
    };
    Ok(BlockPartition {
        rank_count,
        vertex_count,
        layout,
    })
}

impl BlockPartition {
    /// Partition from an explicit owner per vertex. Every rank must own at
    /// least one vertex.
    pub fn from_owners(owners: &[usize], rank_count: usize) -> Result<Self> {
        if rank_count == 0 {
            return Err(DpcError::InvalidParameter("rank count must be at least 1".into()));
        }
        let mut used = vec![false; rank_count];
        for &o in owners {
            if o >= rank_count {
                return Err(DpcError::InvalidRank { rank: o, rank_count });
            }
            used[o] = true;
        }
        if let Some(idle) = used.iter().position(|u| !u) {
            return Err(DpcError::InvalidParameter(format!("rank {idle} owns no vertex")));
        }
        Ok(BlockPartition {
            rank_count,
            vertex_count: owners.len() as u64,
            layout: Layout::Explicit {
                owners: owners.iter().map(|&o| o as u32).collect(),
            },
        })
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertex_count
    }

    /// Process grid shape for block layouts.
    pub fn process_grid(&self) -> Option<[usize; 3]> {
        match &self.layout {
            Layout::Blocks { procs, .. } => Some(*procs),
            _ => None,
        }
    }

    /// Half-open voxel ranges owned by `rank` for block layouts.
    pub fn extent(&self, rank: RankId) -> Option<[Range<usize>; 3]> {
        match &self.layout {
            Layout::Blocks { procs, cuts, .. } => {
                let r = rank.0;
                let idx = [r % procs[0], (r / procs[0]) % procs[1], r / (procs[0] * procs[1])];
                Some([0, 1, 2].map(|a| cuts[a][idx[a]]..cuts[a][idx[a] + 1]))
            }
            _ => None,
        }
    }

    /// Contiguous id range owned by `rank` for range layouts.
    pub fn id_range(&self, rank: RankId) -> Option<Range<u64>> {
        match &self.layout {
            Layout::Ranges { starts } => Some(starts[rank.0]..starts[rank.0 + 1]),
            _ => None,
        }
    }

    #[inline]
    pub fn owner_of(&self, gid: u64) -> RankId {
        match &self.layout {
            Layout::Blocks { dims, procs, cuts } => {
                let [nx, ny, _] = *dims;
                let c = [gid as usize % nx, (gid as usize / nx) % ny, gid as usize / (nx * ny)];
                let idx = [0, 1, 2].map(|a| cuts[a].partition_point(|&cut| cut <= c[a]) - 1);
                RankId(idx[0] + procs[0] * (idx[1] + procs[1] * idx[2]))
            }
            Layout::Ranges { starts } => RankId(starts.partition_point(|&s| s <= gid) - 1),
            Layout::Explicit { owners } => RankId(owners[gid as usize] as usize),
        }
    }

    /// Global ids owned by `rank`, ascending.
    pub fn owned_vertices(&self, rank: RankId) -> Vec<u64> {
        match &self.layout {
            Layout::Blocks { dims, .. } => {
                let [xr, yr, zr] = self.extent(rank).expect("block layout");
                let grid =
                    StructuredGrid::new(*dims, crate::grid::Connectivity::Face).expect("partition dims are valid");
                let mut out = Vec::with_capacity(xr.len() * yr.len() * zr.len());
                for z in zr {
                    for y in yr.clone() {
                        for x in xr.clone() {
                            out.push(grid.id_of([x, y, z]));
                        }
                    }
                }
                out
            }
            Layout::Ranges { starts } => (starts[rank.0]..starts[rank.0 + 1]).collect(),
            Layout::Explicit { owners } => owners
                .iter()
                .enumerate()
                .filter(|(_, &o)| o as usize == rank.0)
                .map(|(v, _)| v as u64)
                .collect(),
        }
    }
}

/// One rank's share of the domain: owned vertices first (ascending global
/// id), then ghosts (ascending global id), with adjacency in local ids.
#[derive(Clone, Debug)]
pub struct DistributedDomain {
    rank: RankId,
    global_count: u64,
    local_to_global: Vec<u64>,
    owned_count: usize,
    ghost_owner: Vec<RankId>,
    adj_offsets: Vec<usize>,
    adjacency: Vec<u32>,
    partition: Arc<BlockPartition>,
}

/// Builds `rank`'s local view: its owned block plus every outside neighbor
/// of an owned vertex as a ghost.
pub fn build_distributed_domain(
    domain: &Domain,
    partition: Arc<BlockPartition>,
    rank: RankId,
) -> Result<DistributedDomain> {
    if rank.0 >= partition.rank_count() {
        return Err(DpcError::InvalidRank {
            rank: rank.0,
            rank_count: partition.rank_count(),
        });
    }
    if partition.vertex_count() != domain.vertex_count() {
        return Err(DpcError::InvalidParameter(format!(
            "partition covers {} vertices but the domain has {}",
            partition.vertex_count(),
            domain.vertex_count()
        )));
    }
    let owned = partition.owned_vertices(rank);
    let mut ghosts = BTreeSet::new();
    for &v in &owned {
        domain.for_each_neighbor(v, |u| {
            if partition.owner_of(u) != rank {
                ghosts.insert(u);
            }
        });
    }
    let owned_count = owned.len();
    let mut local_to_global = owned;
    local_to_global.extend(ghosts.iter().copied());
    let ghost_owner = ghosts.iter().map(|&g| partition.owner_of(g)).collect();

    let mut dd = DistributedDomain {
        rank,
        global_count: domain.vertex_count(),
        local_to_global,
        owned_count,
        ghost_owner,
        adj_offsets: Vec::new(),
        adjacency: Vec::new(),
        partition,
    };
    let mut offsets = Vec::with_capacity(dd.local_count() + 1);
    let mut adjacency = Vec::new();
    offsets.push(0);
    for l in 0..dd.local_count() {
        let v = dd.local_to_global[l];
        domain.for_each_neighbor(v, |u| {
            if let Some(lu) = dd.local_of(u) {
                adjacency.push(lu as u32);
            }
        });
        offsets.push(adjacency.len());
    }
    dd.adj_offsets = offsets;
    dd.adjacency = adjacency;
    Ok(dd)
}

impl DistributedDomain {
    pub fn rank(&self) -> RankId {
        self.rank
    }

    pub fn rank_count(&self) -> usize {
        self.partition.rank_count()
    }

    pub fn global_count(&self) -> u64 {
        self.global_count
    }

    pub fn local_count(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn owned_count(&self) -> usize {
        self.owned_count
    }

    pub fn ghost_count(&self) -> usize {
        self.local_count() - self.owned_count
    }

    #[inline]
    pub fn is_owned(&self, local: usize) -> bool {
        local < self.owned_count
    }

    #[inline]
    pub fn global_id(&self, local: usize) -> u64 {
        self.local_to_global[local]
    }

    pub fn local_to_global(&self) -> &[u64] {
        &self.local_to_global
    }

    pub fn owned_globals(&self) -> &[u64] {
        &self.local_to_global[..self.owned_count]
    }

    pub fn ghost_globals(&self) -> &[u64] {
        &self.local_to_global[self.owned_count..]
    }

    /// Owner of the ghost with local id `local`; `None` for owned vertices.
    pub fn ghost_owner(&self, local: usize) -> Option<RankId> {
        local
            .checked_sub(self.owned_count)
            .and_then(|g| self.ghost_owner.get(g).copied())
    }

    /// Owner of any global id, local or not.
    #[inline]
    pub fn owner_of(&self, gid: u64) -> RankId {
        self.partition.owner_of(gid)
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    #[inline]
    pub fn local_of(&self, gid: u64) -> Option<usize> {
        let (owned, ghosts) = self.local_to_global.split_at(self.owned_count);
        if let Ok(i) = owned.binary_search(&gid) {
            return Some(i);
        }
        ghosts.binary_search(&gid).ok().map(|i| i + self.owned_count)
    }

    #[inline]
    pub fn neighbors(&self, local: usize) -> &[u32] {
        &self.adjacency[self.adj_offsets[local]..self.adj_offsets[local + 1]]
    }
}

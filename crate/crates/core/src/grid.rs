//! Connectivity models: implicit structured grids and explicit graphs.
//!
//! Everything downstream only needs "who are the neighbors of vertex v", so
//! both models sit behind [`Domain`]. Grids never materialize their edges.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{DpcError, Result};

/// Dataset-wide vertex identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlobalVertexId(pub u64);

impl GlobalVertexId {
    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for GlobalVertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for GlobalVertexId {
    fn from(v: u64) -> Self {
        GlobalVertexId(v)
    }
}

/// Neighborhood rule for structured grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// Axis neighbors only (4 in 2D, 6 in 3D).
    Face,
    /// Edges of the Freudenthal (Kuhn) triangulation: every cube is cut
    /// along its (+1,+1,+1) diagonal, giving 6 neighbors in 2D and 14 in 3D.
    Freudenthal,
}

const FACE_OFFSETS: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

const FREUDENTHAL_OFFSETS: [[i64; 3]; 14] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
    [-1, -1, 0],
    [1, 1, 0],
    [-1, 0, -1],
    [1, 0, 1],
    [0, -1, -1],
    [0, 1, 1],
    [-1, -1, -1],
    [1, 1, 1],
];

impl Connectivity {
    fn offsets(self) -> &'static [[i64; 3]] {
        match self {
            Connectivity::Face => &FACE_OFFSETS,
            Connectivity::Freudenthal => &FREUDENTHAL_OFFSETS,
        }
    }
}

/// Regular vertex grid with row-major global ids `x + nx*y + nx*ny*z`.
/// 2D data uses `nz = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructuredGrid {
    dims: [usize; 3],
    connectivity: Connectivity,
}

impl StructuredGrid {
    pub fn new(dims: [usize; 3], connectivity: Connectivity) -> Result<Self> {
        if dims.contains(&0) {
            return Err(DpcError::InvalidDims(dims));
        }
        Ok(StructuredGrid { dims, connectivity })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn with_connectivity(self, connectivity: Connectivity) -> Self {
        StructuredGrid { connectivity, ..self }
    }

    pub fn vertex_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    #[inline]
    pub fn coords(&self, v: u64) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        let v = v as usize;
        [v % nx, (v / nx) % ny, v / (nx * ny)]
    }

    #[inline]
    pub fn id_of(&self, c: [usize; 3]) -> u64 {
        let [nx, ny, _] = self.dims;
        (c[0] + nx * (c[1] + ny * c[2])) as u64
    }

    /// Calls `f` for every neighbor of `v`. `v` must be in range.
    #[inline]
    pub fn for_each_neighbor(&self, v: u64, mut f: impl FnMut(u64)) {
        let c = self.coords(v);
        for off in self.connectivity.offsets() {
            let mut n = [0usize; 3];
            let mut inside = true;
            for axis in 0..3 {
                let p = c[axis] as i64 + off[axis];
                if p < 0 || p >= self.dims[axis] as i64 {
                    inside = false;
                    break;
                }
                n[axis] = p as usize;
            }
            if inside {
                f(self.id_of(n));
            }
        }
    }

    pub fn neighbors(&self, v: GlobalVertexId) -> Result<Vec<GlobalVertexId>> {
        check_vertex(v.0, self.vertex_count())?;
        let mut out = Vec::with_capacity(14);
        self.for_each_neighbor(v.0, |u| out.push(GlobalVertexId(u)));
        out.sort_unstable();
        Ok(out)
    }
}

/// Explicit undirected graph stored as sorted adjacency lists (CSR).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplicitGraph {
    offsets: Vec<usize>,
    adjacency: Vec<u64>,
}

impl ExplicitGraph {
    /// Builds the graph, rejecting self-loops, duplicates and out-of-range
    /// endpoints.
    pub fn new(vertex_count: u64, edges: &[(u64, u64)]) -> Result<Self> {
        let n = vertex_count as usize;
        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            if a >= vertex_count || b >= vertex_count {
                return Err(DpcError::InvalidGraph(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{vertex_count}"
                )));
            }
            if a == b {
                return Err(DpcError::InvalidGraph(format!("self-loop at {a}")));
            }
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![0u64; offsets[n]];
        for &(a, b) in edges {
            adjacency[fill[a as usize]] = b;
            fill[a as usize] += 1;
            adjacency[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for v in 0..n {
            let list = &mut adjacency[offsets[v]..offsets[v + 1]];
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(DpcError::InvalidGraph(format!("duplicate edge ({v}, {})", w[0])));
            }
        }
        Ok(ExplicitGraph { offsets, adjacency })
    }

    /// A simple path `0 - 1 - ... - (n-1)`.
    pub fn path(vertex_count: u64) -> Self {
        let edges: Vec<_> = (1..vertex_count).map(|v| (v - 1, v)).collect();
        ExplicitGraph::new(vertex_count, &edges).expect("path edges are valid")
    }

    pub fn vertex_count(&self) -> u64 {
        (self.offsets.len() - 1) as u64
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    /// Each undirected edge once, as `(low, high)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.vertex_count())
            .flat_map(move |v| self.adjacent(v).iter().filter(move |&&u| u > v).map(move |&u| (v, u)))
    }

    #[inline]
    pub fn adjacent(&self, v: u64) -> &[u64] {
        let v = v as usize;
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn neighbors(&self, v: GlobalVertexId) -> Result<Vec<GlobalVertexId>> {
        check_vertex(v.0, self.vertex_count())?;
        Ok(self.adjacent(v.0).iter().map(|&u| GlobalVertexId(u)).collect())
    }
}

/// The undistributed input domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Grid(StructuredGrid),
    Graph(ExplicitGraph),
}

impl Domain {
    pub fn vertex_count(&self) -> u64 {
        match self {
            Domain::Grid(g) => g.vertex_count(),
            Domain::Graph(g) => g.vertex_count(),
        }
    }

    #[inline]
    pub fn for_each_neighbor(&self, v: u64, mut f: impl FnMut(u64)) {
        match self {
            Domain::Grid(g) => g.for_each_neighbor(v, f),
            Domain::Graph(g) => g.adjacent(v).iter().for_each(|&u| f(u)),
        }
    }

    pub fn neighbors(&self, v: GlobalVertexId) -> Result<Vec<GlobalVertexId>> {
        match self {
            Domain::Grid(g) => g.neighbors(v),
            Domain::Graph(g) => g.neighbors(v),
        }
    }
}

impl From<StructuredGrid> for Domain {
    fn from(g: StructuredGrid) -> Self {
        Domain::Grid(g)
    }
}

impl From<ExplicitGraph> for Domain {
    fn from(g: ExplicitGraph) -> Self {
        Domain::Graph(g)
    }
}

fn check_vertex(v: u64, count: u64) -> Result<()> {
    if v >= count {
        return Err(DpcError::InvalidVertex { vertex: v, count });
    }
    Ok(())
}

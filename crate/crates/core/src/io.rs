//! Dataset generation and file formats.
//!
//! Fields are stored as a JSON header (`name.json`) next to a raw
//! little-endian payload (`name.raw`). Graphs and extracted components are
//! plain text.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concomp::ExtractedComponents;
use crate::error::{DpcError, Result};
use crate::grid::{ExplicitGraph, StructuredGrid};
use crate::stats::{Phase, RunStats};

// ---------------------------------------------------------------------------
// Perlin noise

/// Classic improved gradient noise over a seeded 256-entry permutation.
#[derive(Clone, Debug)]
pub struct Perlin {
    perm: [u8; 512],
}

impl Perlin {
    pub fn new(seed: u64) -> Self {
        let mut base: Vec<u8> = (0..=255).collect();
        base.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut perm = [0u8; 512];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = base[i & 255];
        }
        Perlin { perm }
    }

    #[inline]
    fn hash(&self, i: usize) -> usize {
        self.perm[i] as usize
    }

    /// Noise at a point; roughly in `[-1, 1]`, zero on lattice points.
    pub fn noise(&self, x: f64, y: f64, z: f64) -> f64 {
        let (xf, yf, zf) = (x.floor(), y.floor(), z.floor());
        let (xi, yi, zi) = (
            (xf as i64 & 255) as usize,
            (yf as i64 & 255) as usize,
            (zf as i64 & 255) as usize,
        );
        let (x, y, z) = (x - xf, y - yf, z - zf);
        let (u, v, w) = (fade(x), fade(y), fade(z));

        let a = self.hash(xi) + yi;
        let aa = self.hash(a) + zi;
        let ab = self.hash(a + 1) + zi;
        let b = self.hash(xi + 1) + yi;
        let ba = self.hash(b) + zi;
        let bb = self.hash(b + 1) + zi;

        lerp(
            w,
            lerp(
                v,
                lerp(u, grad(self.hash(aa), x, y, z), grad(self.hash(ba), x - 1.0, y, z)),
                lerp(
                    u,
                    grad(self.hash(ab), x, y - 1.0, z),
                    grad(self.hash(bb), x - 1.0, y - 1.0, z),
                ),
            ),
            lerp(
                v,
                lerp(
                    u,
                    grad(self.hash(aa + 1), x, y, z - 1.0),
                    grad(self.hash(ba + 1), x - 1.0, y, z - 1.0),
                ),
                lerp(
                    u,
                    grad(self.hash(ab + 1), x, y - 1.0, z - 1.0),
                    grad(self.hash(bb + 1), x - 1.0, y - 1.0, z - 1.0),
                ),
            ),
        )
    }
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

#[inline]
fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

#[inline]
fn grad(hash: usize, x: f64, y: f64, z: f64) -> f64 {
    let h = hash & 15;
    let u = if h < 8 { x } else { y };
    let v = if h < 4 {
        y
    } else if h == 12 || h == 14 {
        x
    } else {
        z
    };
    (if h & 1 == 0 { u } else { -u }) + (if h & 2 == 0 { v } else { -v })
}

/// One octave of noise sampled at every voxel, in row-major order.
pub fn generate_perlin(dims: [usize; 3], frequency: [f64; 3], amplitude: f64, seed: u64) -> Result<Vec<f64>> {
    if dims.contains(&0) {
        return Err(DpcError::InvalidDims(dims));
    }
    if frequency.iter().any(|&f| !(f > 0.0 && f.is_finite())) || !amplitude.is_finite() {
        return Err(DpcError::InvalidParameter(format!(
            "frequency {frequency:?} and amplitude {amplitude} must be finite, frequency positive"
        )));
    }
    let noise = Perlin::new(seed);
    let [nx, ny, nz] = dims;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.push(
                    amplitude
                        * noise.noise(
                            x as f64 * frequency[0],
                            y as f64 * frequency[1],
                            z as f64 * frequency[2],
                        ),
                );
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Field files

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    I64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F64 | DType::I64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantic {
    Scalar,
    Order,
    Labels,
    Mask,
}

const LAYOUT: &str = "row-major";
const BYTE_ORDER: &str = "little-endian";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldFileHeader {
    pub dims: [usize; 3],
    pub dtype: DType,
    pub layout: String,
    pub byte_order: String,
    pub semantic: Semantic,
}

impl FieldFileHeader {
    pub fn new(dims: [usize; 3], dtype: DType, semantic: Semantic) -> Self {
        FieldFileHeader {
            dims,
            dtype,
            layout: LAYOUT.into(),
            byte_order: BYTE_ORDER.into(),
            semantic,
        }
    }

    pub fn value_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.value_count() * self.dtype.size()
    }
}

/// Typed field payload.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    F64(Vec<f64>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl FieldData {
    pub fn dtype(&self) -> DType {
        match self {
            FieldData::F64(_) => DType::F64,
            FieldData::I64(_) => DType::I64,
            FieldData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FieldData::F64(v) => v.len(),
            FieldData::I64(v) => v.len(),
            FieldData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            FieldData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            FieldData::I64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            FieldData::U8(v) => v.clone(),
        }
    }

    fn from_bytes(dtype: DType, bytes: &[u8]) -> Self {
        let words = || bytes.chunks_exact(8).map(|c| c.try_into().expect("8 bytes"));
        match dtype {
            DType::F64 => FieldData::F64(words().map(f64::from_le_bytes).collect()),
            DType::I64 => FieldData::I64(words().map(i64::from_le_bytes).collect()),
            DType::U8 => FieldData::U8(bytes.to_vec()),
        }
    }

    /// Scalar values as `f64`; integers convert exactly below 2^53.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            FieldData::F64(v) => v.clone(),
            FieldData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            FieldData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// `(header path, payload path)` for a field stem; a trailing `.json` or
/// `.raw` is ignored.
pub fn field_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".json"), with(".raw"))
}

pub fn write_field(path: &Path, header: &FieldFileHeader, data: &FieldData) -> Result<()> {
    if header.dtype != data.dtype() || header.value_count() != data.len() {
        return Err(DpcError::format(
            path,
            format!(
                "header says {} {:?} values, payload has {} {:?}",
                header.value_count(),
                header.dtype,
                data.len(),
                data.dtype()
            ),
        ));
    }
    let (json, raw) = field_paths(path);
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&json, text + "\n").map_err(|e| DpcError::io(&json, e))?;
    fs::write(&raw, data.to_bytes()).map_err(|e| DpcError::io(&raw, e))?;
    Ok(())
}

pub fn read_field_header(path: &Path) -> Result<FieldFileHeader> {
    let (json, _) = field_paths(path);
    let text = fs::read_to_string(&json).map_err(|e| DpcError::io(&json, e))?;
    let header: FieldFileHeader = serde_json::from_str(&text).map_err(|e| DpcError::format(&json, e.to_string()))?;
    if header.layout != LAYOUT || header.byte_order != BYTE_ORDER {
        return Err(DpcError::format(
            &json,
            format!(
                "unsupported layout {} / byte order {}",
                header.layout, header.byte_order
            ),
        ));
    }
    if header.dims.contains(&0) {
        return Err(DpcError::format(
            &json,
            format!("zero extent in dims {:?}", header.dims),
        ));
    }
    Ok(header)
}

pub fn read_field(path: &Path) -> Result<(FieldFileHeader, FieldData)> {
    let header = read_field_header(path)?;
    let (_, raw) = field_paths(path);
    let bytes = fs::read(&raw).map_err(|e| DpcError::io(&raw, e))?;
    if bytes.len() != header.payload_len() {
        return Err(DpcError::format(
            &raw,
            format!(
                "payload is {} bytes, header implies {}",
                bytes.len(),
                header.payload_len()
            ),
        ));
    }
    let data = FieldData::from_bytes(header.dtype, &bytes);
    Ok((header, data))
}

// ---------------------------------------------------------------------------
// Text graphs

/// Writes `vertices N` followed by one `u v` line per edge.
pub fn write_edge_list(path: &Path, graph: &ExplicitGraph) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("vertices {}\n", graph.vertex_count()));
    for (u, v) in graph.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    fs::write(path, out).map_err(|e| DpcError::io(path, e))
}

/// Reads the format of [`write_edge_list`]; `#` starts a comment.
pub fn read_edge_list(path: &Path) -> Result<ExplicitGraph> {
    let file = fs::File::open(path).map_err(|e| DpcError::io(path, e))?;
    let mut vertex_count = None;
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DpcError::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || DpcError::format(path, format!("line {}: cannot parse {line:?}", lineno + 1));
        let mut parts = line.split_whitespace();
        let first = parts.next().ok_or_else(bad)?;
        if vertex_count.is_none() {
            if first != "vertices" {
                return Err(DpcError::format(path, "expected a `vertices N` line first"));
            }
            vertex_count = Some(parts.next().and_then(|n| n.parse::<u64>().ok()).ok_or_else(bad)?);
            continue;
        }
        let u = first.parse::<u64>().map_err(|_| bad())?;
        let v = parts.next().and_then(|s| s.parse::<u64>().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        edges.push((u, v));
    }
    let n = vertex_count.ok_or_else(|| DpcError::format(path, "missing `vertices N` line"))?;
    ExplicitGraph::new(n, &edges)
}

/// Writes `v gid label` lines followed by `e u v` lines.
pub fn write_extract(path: &Path, extract: &ExtractedComponents) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| DpcError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let write = |w: &mut std::io::BufWriter<fs::File>| -> std::io::Result<()> {
        for (g, l) in &extract.vertices {
            writeln!(w, "v {g} {l}")?;
        }
        for (u, v) in &extract.edges {
            writeln!(w, "e {u} {v}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| DpcError::io(path, e))
}

pub fn read_extract(path: &Path) -> Result<ExtractedComponents> {
    let text = fs::read_to_string(path).map_err(|e| DpcError::io(path, e))?;
    let mut out = ExtractedComponents::default();
    for (lineno, line) in text.lines().enumerate() {
        let bad = || DpcError::format(path, format!("line {}: cannot parse {line:?}", lineno + 1));
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => {}
            ["v", g, l] => out
                .vertices
                .push((g.parse().map_err(|_| bad())?, l.parse().map_err(|_| bad())?)),
            ["e", u, v] => out
                .edges
                .push((u.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?)),
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

/// Loads a grid from a field header's dims.
pub fn grid_for(header: &FieldFileHeader, connectivity: crate::grid::Connectivity) -> Result<StructuredGrid> {
    StructuredGrid::new(header.dims, connectivity)
}

// ---------------------------------------------------------------------------
// Benchmark CSV

/// How the derived scaling columns are computed for a group of runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Fixed problem: efficiency = speedup / (ranks / base ranks).
    Strong,
    /// Problem grows with ranks: efficiency = speedup.
    Weak,
}

/// One algorithm run to be reported.
#[derive(Clone, Debug)]
pub struct BenchRun {
    pub dataset: String,
    pub algorithm: String,
    /// Runs sharing a group are compared against the group's smallest rank
    /// count for speedup and efficiency.
    pub group: String,
    pub scaling: Scaling,
    pub stats: RunStats,
    /// Preprocessing time and bytes, reported on an extra row when present.
    pub preprocess: Option<(f64, u64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRow {
    pub dataset: String,
    pub algorithm: String,
    pub rank_count: usize,
    pub worker_count: usize,
    pub phase: String,
    pub wall_seconds: f64,
    pub bytes_sent: u64,
    pub sweeps: usize,
    pub rounds: usize,
    pub speedup: f64,
    pub efficiency: f64,
}

/// Expands runs into rows: one per algorithm phase, plus `preprocess` when
/// recorded. Bytes are charged to the exchange row.
pub fn bench_rows(runs: &[BenchRun]) -> Vec<BenchRow> {
    let mut baseline: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in runs {
        let entry = baseline
            .entry(r.group.as_str())
            .or_insert((r.stats.rank_count, r.stats.phases.algorithm_total()));
        if r.stats.rank_count < entry.0 {
            *entry = (r.stats.rank_count, r.stats.phases.algorithm_total());
        }
    }
    let mut rows = Vec::new();
    for r in runs {
        let (base_ranks, base_time) = baseline[r.group.as_str()];
        let total = r.stats.phases.algorithm_total();
        let speedup = if total > 0.0 { base_time / total } else { 1.0 };
        let efficiency = match r.scaling {
            Scaling::Strong => speedup * base_ranks as f64 / r.stats.rank_count as f64,
            Scaling::Weak => speedup,
        };
        let row = |phase: &str, wall_seconds: f64, bytes_sent: u64| BenchRow {
            dataset: r.dataset.clone(),
            algorithm: r.algorithm.clone(),
            rank_count: r.stats.rank_count,
            worker_count: r.stats.workers,
            phase: phase.into(),
            wall_seconds,
            bytes_sent,
            sweeps: r.stats.sweeps,
            rounds: r.stats.rounds,
            speedup,
            efficiency,
        };
        if let Some((secs, bytes)) = r.preprocess {
            rows.push(row(Phase::Preprocess.name(), secs, bytes));
        }
        for phase in Phase::ALGORITHM {
            let bytes = if phase == Phase::Exchange {
                r.stats.bytes_sent
            } else {
                0
            };
            rows.push(row(phase.name(), r.stats.phases.get(phase), bytes));
        }
    }
    rows
}

pub const BENCH_COLUMNS: [&str; 11] = [
    "dataset",
    "algorithm",
    "rankCount",
    "workerCount",
    "phase",
    "wallSeconds",
    "bytesSent",
    "sweeps",
    "rounds",
    "speedup",
    "efficiency",
];

pub fn write_bench_csv<W: Write>(out: W, runs: &[BenchRun]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(BENCH_COLUMNS)?;
    for row in bench_rows(runs) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| DpcError::io("<csv>", e))?;
    Ok(())
}

pub fn write_bench_csv_file(path: &Path, runs: &[BenchRun]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| DpcError::io(path, e))?;
    write_bench_csv(file, runs)
}

pub fn read_bench_csv<R: std::io::Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(DpcError::from)).collect()
}

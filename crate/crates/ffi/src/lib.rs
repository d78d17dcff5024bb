//! C interface to the `dpc` library.
//!
//! Domains are opaque handles created by `dpc_grid_new` / `dpc_graph_new`
//! and released with `dpc_domain_free`. Every fallible call returns a
//! [`DpcStatus`]; on failure the message is kept per thread and can be
//! copied out with `dpc_last_error_message`. Output arrays are supplied by
//! the caller and must hold one entry per vertex.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpc::grid::{Connectivity, Domain, ExplicitGraph, StructuredGrid};
use dpc::pipeline::{run_pipeline, Algorithm, RunConfig};
use dpc::{DpcError, MaskMode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidField = 3,
    BufferTooSmall = 4,
    Protocol = 5,
    Internal = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpcConnectivity {
    Face = 0,
    Freudenthal = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpcDirection {
    Descending = 0,
    Ascending = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpcMaskKind {
    /// `value` is a percentage in (0, 100].
    TopPercent = 0,
    /// Vertices with scalar strictly above `value`.
    Threshold = 1,
}

/// How a run is spread out: simulated rank count and worker threads per rank.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DpcRunOptions {
    pub ranks: usize,
    pub workers: usize,
}

/// Run statistics summed or maximized over ranks.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct DpcRunSummary {
    pub rounds: u64,
    pub sweeps: u64,
    pub bytes_sent: u64,
    pub ghost_records: u64,
    pub wall_seconds: f64,
}

/// Opaque domain handle.
pub struct DpcDomain {
    inner: Domain,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &DpcError) -> DpcStatus {
    match err {
        DpcError::InvalidField(_) => DpcStatus::InvalidField,
        DpcError::ProtocolCorruption(_) | DpcError::Transport(_) => DpcStatus::Protocol,
        DpcError::InvariantViolation(_) => DpcStatus::Internal,
        DpcError::Io { .. } | DpcError::Format { .. } | DpcError::Csv(_) => DpcStatus::Io,
        _ => DpcStatus::InvalidArgument,
    }
}

struct Failure(DpcStatus, String);

impl From<DpcError> for Failure {
    fn from(e: DpcError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording the error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DpcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            DpcStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(DpcStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `domain` must be a live handle or null.
unsafe fn domain_ref<'a>(domain: *const DpcDomain) -> Result<&'a Domain, Failure> {
    non_null(domain, "domain")?;
    Ok(&(*domain).inner)
}

/// # Safety
/// `ptr` must point to `len` readable values when `len > 0`.
unsafe fn input<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(ptr, name)?;
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must point to `len` writable values.
unsafe fn output<'a, T>(ptr: *mut T, len: usize, needed: usize, name: &str) -> Result<&'a mut [T], Failure> {
    non_null(ptr, name)?;
    if len < needed {
        return Err(Failure(
            DpcStatus::BufferTooSmall,
            format!("{name} holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, needed))
}

fn into_handle(domain: Domain, out: *mut *mut DpcDomain) {
    // SAFETY: callers check `out` first
    unsafe { *out = Box::into_raw(Box::new(DpcDomain { inner: domain })) };
}

/// Creates a structured grid; use 1 for unused trailing axes.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn dpc_grid_new(
    nx: usize,
    ny: usize,
    nz: usize,
    connectivity: DpcConnectivity,
    out: *mut *mut DpcDomain,
) -> DpcStatus {
    guard(|| {
        non_null(out, "out")?;
        let conn = match connectivity {
            DpcConnectivity::Face => Connectivity::Face,
            DpcConnectivity::Freudenthal => Connectivity::Freudenthal,
        };
        into_handle(StructuredGrid::new([nx, ny, nz], conn)?.into(), out);
        Ok(())
    })
}

/// Creates an explicit graph from `edge_count` pairs stored flat in `edges`.
///
/// # Safety
/// `edges` must hold `2 * edge_count` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpc_graph_new(
    vertex_count: u64,
    edges: *const u64,
    edge_count: usize,
    out: *mut *mut DpcDomain,
) -> DpcStatus {
    guard(|| {
        non_null(out, "out")?;
        let flat = input(edges, edge_count * 2, "edges")?;
        let pairs: Vec<(u64, u64)> = flat.chunks_exact(2).map(|e| (e[0], e[1])).collect();
        into_handle(ExplicitGraph::new(vertex_count, &pairs)?.into(), out);
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `domain` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpc_domain_free(domain: *mut DpcDomain) {
    if !domain.is_null() {
        drop(Box::from_raw(domain));
    }
}

/// Vertex count of the domain, 0 for null.
///
/// # Safety
/// `domain` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn dpc_domain_vertex_count(domain: *const DpcDomain) -> u64 {
    domain.as_ref().map_or(0, |d| d.inner.vertex_count())
}

#[allow(clippy::too_many_arguments)]
unsafe fn run_one(
    domain: *const DpcDomain,
    field: *const f64,
    field_len: usize,
    algorithm: Algorithm,
    options: DpcRunOptions,
    labels: *mut i64,
    labels_len: usize,
    summary: *mut DpcRunSummary,
) -> DpcStatus {
    guard(|| {
        let domain = domain_ref(domain)?;
        let n = domain.vertex_count() as usize;
        let field = input(field, field_len, "field")?;
        let labels = output(labels, labels_len, n, "labels")?;
        let start = std::time::Instant::now();
        let run = run_pipeline(
            domain,
            field,
            &[algorithm],
            &RunConfig::new(options.ranks, options.workers),
        )?;
        let alg = &run.runs[0];
        labels.copy_from_slice(&alg.labels);
        if let Some(s) = summary.as_mut() {
            *s = DpcRunSummary {
                rounds: alg.stats.rounds as u64,
                sweeps: alg.stats.sweeps as u64,
                bytes_sent: alg.stats.bytes_sent,
                ghost_records: alg.stats.ghost_records,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
        }
        Ok(())
    })
}

/// Labels every vertex with the extremum its steepest path ends at.
/// `summary` may be null.
///
/// # Safety
/// `field` must hold `field_len` values, `labels` must hold `labels_len`
/// writable values and `summary`, when not null, must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpc_segment(
    domain: *const DpcDomain,
    field: *const f64,
    field_len: usize,
    direction: DpcDirection,
    options: DpcRunOptions,
    labels: *mut i64,
    labels_len: usize,
    summary: *mut DpcRunSummary,
) -> DpcStatus {
    let algorithm = match direction {
        DpcDirection::Descending => Algorithm::Descending,
        DpcDirection::Ascending => Algorithm::Ascending,
    };
    run_one(
        domain, field, field_len, algorithm, options, labels, labels_len, summary,
    )
}

/// Labels every masked vertex with the largest id of its component and
/// every other vertex with -1. `summary` may be null.
///
/// # Safety
/// Same contract as [`dpc_segment`].
#[no_mangle]
pub unsafe extern "C" fn dpc_components(
    domain: *const DpcDomain,
    field: *const f64,
    field_len: usize,
    mask: DpcMaskKind,
    value: f64,
    options: DpcRunOptions,
    labels: *mut i64,
    labels_len: usize,
    summary: *mut DpcRunSummary,
) -> DpcStatus {
    let mode = match mask {
        DpcMaskKind::TopPercent => MaskMode::TopPercent(value),
        DpcMaskKind::Threshold => MaskMode::Threshold(value),
    };
    run_one(
        domain,
        field,
        field_len,
        Algorithm::Components(mode),
        options,
        labels,
        labels_len,
        summary,
    )
}

/// Fills `out` with a seeded Perlin noise volume, x fastest.
///
/// # Safety
/// `out` must hold `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn dpc_perlin(
    nx: usize,
    ny: usize,
    nz: usize,
    frequency: f64,
    amplitude: f64,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> DpcStatus {
    guard(|| {
        let values = dpc::io::generate_perlin([nx, ny, nz], [frequency; 3], amplitude, seed)?;
        output(out, out_len, values.len(), "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to fit, into `buf`. Returns the full message length without
/// the terminator, so a call with a null `buf` sizes the buffer.
///
/// # Safety
/// `buf` must hold `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn dpc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn dpc_status_name(status: DpcStatus) -> *const c_char {
    let name: &'static CStr = match status {
        DpcStatus::Ok => c"ok",
        DpcStatus::NullPointer => c"null pointer",
        DpcStatus::InvalidArgument => c"invalid argument",
        DpcStatus::InvalidField => c"invalid field",
        DpcStatus::BufferTooSmall => c"buffer too small",
        DpcStatus::Protocol => c"protocol error",
        DpcStatus::Internal => c"internal error",
        DpcStatus::Io => c"i/o error",
        DpcStatus::Panic => c"panic",
    };
    name.as_ptr()
}

//! Intra-rank data parallelism over scoped threads.
//!
//! Pointer arrays are shared as `AtomicI64` with relaxed ordering: workers
//! may read stale pointers of vertices they do not own, but a single load or
//! store is never torn.

use std::sync::atomic::{AtomicI64, Ordering};

pub(crate) fn to_cells(values: &[i64]) -> Vec<AtomicI64> {
    values.iter().map(|&v| AtomicI64::new(v)).collect()
}

pub(crate) fn from_cells(cells: &[AtomicI64], out: &mut [i64]) {
    for (o, c) in out.iter_mut().zip(cells) {
        *o = c.load(Ordering::Relaxed);
    }
}

/// Splits `0..len` into at most `workers` contiguous, non-empty ranges.
pub(crate) fn split_range(len: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    let workers = workers.max(1).min(len.max(1));
    let q = len / workers;
    let r = len % workers;
    let mut at = 0;
    (0..workers)
        .map(|i| {
            let size = q + usize::from(i < r);
            let range = at..at + size;
            at += size;
            range
        })
        .filter(|r| !r.is_empty())
        .collect()
}

/// Runs `f` on each chunk of `0..len` on its own thread (inline for one
/// chunk) and returns the per-chunk results in chunk order.
pub(crate) fn map_chunks<T, F>(len: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let ranges = split_range(len, workers);
    if ranges.len() <= 1 {
        return ranges.into_iter().map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| {
                let f = &f;
                s.spawn(move || f(r))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    })
}

/// Mutable variant of [`map_chunks`] over a slice.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], workers: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    let ranges = split_range(data.len(), workers);
    if ranges.len() <= 1 {
        f(0, data);
        return;
    }
    std::thread::scope(|s| {
        let mut rest = data;
        for r in ranges {
            let (head, tail) = rest.split_at_mut(r.len());
            rest = tail;
            let f = &f;
            s.spawn(move || f(r.start, head));
        }
    });
}

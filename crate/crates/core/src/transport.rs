//! Collective communication between ranks.
//!
//! Algorithms only see the [`Collective`] trait. The simulated backend runs
//! every rank on its own thread inside one process; collectives rendezvous
//! on a shared slot table, so results never depend on thread timing.
//!
//! Payloads are opaque byte strings. For accounting, each message is charged
//! an 8-byte little-endian length prefix plus its payload.

use std::cell::RefCell;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::error::{DpcError, Result};
use crate::partition::RankId;

/// Per-message framing overhead in bytes.
pub const FRAME_BYTES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollectiveKind {
    AllreduceSum,
    Gather,
    Scatter,
    Allgather,
}

/// Backend selector. Only the in-process simulation exists today.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum TransportKind {
    #[default]
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("collective mismatch: rank {rank} called {found:?} while rank 0 called {expected:?}")]
    Mismatch {
        rank: usize,
        expected: CollectiveKind,
        found: CollectiveKind,
    },
    #[error("roots disagree: rank {rank} passed root {found}, rank 0 passed {expected}")]
    RootMismatch { rank: usize, expected: usize, found: usize },
    #[error("invalid root {root} for {rank_count} ranks")]
    InvalidRoot { root: usize, rank_count: usize },
    #[error("scatter root supplied {got} lists for {expected} ranks")]
    ScatterArity { expected: usize, got: usize },
    #[error("deadlock: rank {waiting_on} left while a collective was pending")]
    Deadlock { waiting_on: usize },
    #[error("collective timed out after {0:?}")]
    Timeout(Duration),
    #[error("communicator unusable after an earlier failure: {0}")]
    Poisoned(String),
}

/// One completed collective as seen by one rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub kind: CollectiveKind,
    pub bytes_sent: u64,
}

/// The collective operations the algorithms rely on. Every rank must call
/// the same collectives in the same order.
pub trait Collective {
    fn rank(&self) -> RankId;

    fn rank_count(&self) -> usize;

    /// Sum of `value` over all ranks, delivered to every rank.
    fn allreduce_sum(&self, value: i64) -> Result<i64, TransportError>;

    /// All payloads in rank order at `root`; `None` elsewhere.
    fn gather(&self, payload: Vec<u8>, root: RankId) -> Result<Option<Vec<Vec<u8>>>, TransportError>;

    /// `root` supplies one payload per rank; each rank receives its own.
    fn scatter(&self, parts: Option<Vec<Vec<u8>>>, root: RankId) -> Result<Vec<u8>, TransportError>;

    /// All payloads in rank order, identical on every rank.
    fn allgather(&self, payload: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError>;

    /// Bytes this rank has sent so far.
    fn bytes_sent(&self) -> u64;

    /// Collectives this rank has completed so far, oldest first. Backends
    /// that keep no record return an empty list.
    fn transcript(&self) -> Vec<TranscriptEntry> {
        Vec::new()
    }
}

enum Op {
    AllreduceSum(i64),
    Gather { root: usize, payload: Vec<u8> },
    Scatter { root: usize, parts: Option<Vec<Vec<u8>>> },
    Allgather(Vec<u8>),
}

impl Op {
    fn kind(&self) -> CollectiveKind {
        match self {
            Op::AllreduceSum(_) => CollectiveKind::AllreduceSum,
            Op::Gather { .. } => CollectiveKind::Gather,
            Op::Scatter { .. } => CollectiveKind::Scatter,
            Op::Allgather(_) => CollectiveKind::Allgather,
        }
    }

    fn root(&self) -> Option<usize> {
        match self {
            Op::Gather { root, .. } | Op::Scatter { root, .. } => Some(*root),
            _ => None,
        }
    }
}

enum Outcome {
    Sum(i64),
    Gathered(Option<Vec<Vec<u8>>>),
    Scattered(Vec<u8>),
    Allgathered(Vec<Vec<u8>>),
}

type Slot = Option<Result<(Outcome, u64), TransportError>>;

struct State {
    pending: Vec<Option<Op>>,
    arrived: usize,
    results: Vec<Slot>,
    to_collect: usize,
    closed: Vec<bool>,
    poisoned: Option<TransportError>,
}

struct Shared {
    rank_count: usize,
    timeout: Duration,
    state: Mutex<State>,
    cv: Condvar,
}

fn frame(len: usize) -> u64 {
    FRAME_BYTES + len as u64
}

/// Computes every rank's outcome and bytes sent once all ranks arrived.
fn resolve(ops: Vec<Op>) -> Vec<Slot> {
    let n = ops.len();
    let fail = |e: TransportError| (0..n).map(|_| Some(Err(e.clone()))).collect();
    let kind = ops[0].kind();
    if let Some((rank, op)) = ops.iter().enumerate().find(|(_, op)| op.kind() != kind) {
        return fail(TransportError::Mismatch {
            rank,
            expected: kind,
            found: op.kind(),
        });
    }
    if let Some(root) = ops[0].root() {
        if let Some((rank, op)) = ops.iter().enumerate().find(|(_, op)| op.root() != Some(root)) {
            return fail(TransportError::RootMismatch {
                rank,
                expected: root,
                found: op.root().unwrap_or(usize::MAX),
            });
        }
        if root >= n {
            return fail(TransportError::InvalidRoot { root, rank_count: n });
        }
    }
    let peers = n as u64 - 1;
    match kind {
        CollectiveKind::AllreduceSum => {
            let sum = ops
                .iter()
                .map(|op| match op {
                    Op::AllreduceSum(v) => *v,
                    _ => unreachable!(),
                })
                .sum();
            let bytes = if n > 1 { FRAME_BYTES + 8 } else { 0 };
            (0..n).map(|_| Some(Ok((Outcome::Sum(sum), bytes)))).collect()
        }
        CollectiveKind::Gather => {
            let root = ops[0].root().unwrap();
            let payloads: Vec<Vec<u8>> = ops
                .into_iter()
                .map(|op| match op {
                    Op::Gather { payload, .. } => payload,
                    _ => unreachable!(),
                })
                .collect();
            let bytes: Vec<u64> = payloads
                .iter()
                .enumerate()
                .map(|(r, p)| if r == root { 0 } else { frame(p.len()) })
                .collect();
            let mut payloads = Some(payloads);
            (0..n)
                .map(|r| {
                    let got = if r == root { payloads.take() } else { None };
                    Some(Ok((Outcome::Gathered(got), bytes[r])))
                })
                .collect()
        }
        CollectiveKind::Scatter => {
            let root = ops[0].root().unwrap();
            let mut ops = ops;
            let parts = match std::mem::replace(&mut ops[root], Op::AllreduceSum(0)) {
                Op::Scatter { parts, .. } => parts.unwrap_or_default(),
                _ => unreachable!(),
            };
            if parts.len() != n {
                return fail(TransportError::ScatterArity {
                    expected: n,
                    got: parts.len(),
                });
            }
            let root_bytes: u64 = parts
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != root)
                .map(|(_, p)| frame(p.len()))
                .sum();
            parts
                .into_iter()
                .enumerate()
                .map(|(r, p)| {
                    let bytes = if r == root { root_bytes } else { 0 };
                    Some(Ok((Outcome::Scattered(p), bytes)))
                })
                .collect()
        }
        CollectiveKind::Allgather => {
            let payloads: Vec<Vec<u8>> = ops
                .into_iter()
                .map(|op| match op {
                    Op::Allgather(p) => p,
                    _ => unreachable!(),
                })
                .collect();
            let bytes: Vec<u64> = payloads.iter().map(|p| peers * frame(p.len())).collect();
            (0..n)
                .map(|r| Some(Ok((Outcome::Allgathered(payloads.clone()), bytes[r]))))
                .collect()
        }
    }
}

impl Shared {
    fn wait<'a>(
        &'a self,
        guard: MutexGuard<'a, State>,
        deadline: Instant,
    ) -> Result<MutexGuard<'a, State>, TransportError> {
        let now = Instant::now();
        if now >= deadline {
            return Err(TransportError::Timeout(self.timeout));
        }
        let (guard, _) = self
            .cv
            .wait_timeout(guard, deadline - now)
            .expect("transport state lock poisoned");
        Ok(guard)
    }

    fn poison(&self, st: &mut State, err: TransportError) -> TransportError {
        if st.poisoned.is_none() {
            st.poisoned = Some(err.clone());
        }
        self.cv.notify_all();
        err
    }

    fn rendezvous(&self, rank: usize, op: Op) -> Result<(Outcome, u64), TransportError> {
        let deadline = Instant::now() + self.timeout;
        let mut st = self.state.lock().expect("transport state lock poisoned");
        while st.to_collect > 0 {
            if let Some(e) = &st.poisoned {
                return Err(TransportError::Poisoned(e.to_string()));
            }
            st = match self.wait(st, deadline) {
                Ok(g) => g,
                Err(e) => {
                    let mut st = self.state.lock().expect("transport state lock poisoned");
                    return Err(self.poison(&mut st, e));
                }
            };
        }
        if let Some(e) = &st.poisoned {
            return Err(TransportError::Poisoned(e.to_string()));
        }
        st.pending[rank] = Some(op);
        st.arrived += 1;
        if st.arrived == self.rank_count {
            let ops: Vec<Op> = st.pending.iter_mut().map(|p| p.take().unwrap()).collect();
            st.results = resolve(ops);
            st.arrived = 0;
            st.to_collect = self.rank_count;
            self.cv.notify_all();
        } else {
            loop {
                if st.results[rank].is_some() {
                    break;
                }
                if let Some(e) = &st.poisoned {
                    return Err(e.clone());
                }
                if let Some(j) = (0..self.rank_count).find(|&j| st.closed[j] && st.pending[j].is_none()) {
                    return Err(self.poison(&mut st, TransportError::Deadlock { waiting_on: j }));
                }
                st = match self.wait(st, deadline) {
                    Ok(g) => g,
                    Err(e) => {
                        let mut st = self.state.lock().expect("transport state lock poisoned");
                        return Err(self.poison(&mut st, e));
                    }
                };
            }
        }
        let out = st.results[rank].take().unwrap();
        st.to_collect -= 1;
        if st.to_collect == 0 {
            self.cv.notify_all();
        }
        out
    }
}

/// One rank's handle into a simulated communicator.
pub struct SimulatedTransport {
    rank: usize,
    shared: Arc<Shared>,
    transcript: RefCell<Vec<TranscriptEntry>>,
}

impl SimulatedTransport {
    pub fn transcript_len(&self) -> usize {
        self.transcript.borrow().len()
    }

    fn run(&self, op: Op) -> Result<Outcome, TransportError> {
        let kind = op.kind();
        let (outcome, bytes_sent) = self.shared.rendezvous(self.rank, op)?;
        self.transcript.borrow_mut().push(TranscriptEntry { kind, bytes_sent });
        Ok(outcome)
    }
}

impl Drop for SimulatedTransport {
    fn drop(&mut self) {
        if let Ok(mut st) = self.shared.state.lock() {
            st.closed[self.rank] = true;
            self.shared.cv.notify_all();
        }
    }
}

impl Collective for SimulatedTransport {
    fn rank(&self) -> RankId {
        RankId(self.rank)
    }

    fn rank_count(&self) -> usize {
        self.shared.rank_count
    }

    fn allreduce_sum(&self, value: i64) -> Result<i64, TransportError> {
        match self.run(Op::AllreduceSum(value))? {
            Outcome::Sum(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    fn gather(&self, payload: Vec<u8>, root: RankId) -> Result<Option<Vec<Vec<u8>>>, TransportError> {
        match self.run(Op::Gather { root: root.0, payload })? {
            Outcome::Gathered(g) => Ok(g),
            _ => unreachable!(),
        }
    }

    fn scatter(&self, parts: Option<Vec<Vec<u8>>>, root: RankId) -> Result<Vec<u8>, TransportError> {
        let parts = if self.rank == root.0 { parts } else { None };
        match self.run(Op::Scatter { root: root.0, parts })? {
            Outcome::Scattered(p) => Ok(p),
            _ => unreachable!(),
        }
    }

    fn allgather(&self, payload: Vec<u8>) -> Result<Vec<Vec<u8>>, TransportError> {
        match self.run(Op::Allgather(payload))? {
            Outcome::Allgathered(all) => Ok(all),
            _ => unreachable!(),
        }
    }

    fn bytes_sent(&self) -> u64 {
        self.transcript.borrow().iter().map(|e| e.bytes_sent).sum()
    }

    fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.borrow().clone()
    }
}

/// Results of one simulated run, indexed by rank.
#[derive(Debug)]
pub struct SimulationRun<T> {
    pub results: Vec<T>,
    pub transcripts: Vec<Vec<TranscriptEntry>>,
}

/// Runs a closure once per rank, each on its own thread, connected by a
/// simulated communicator.
#[derive(Clone, Debug)]
pub struct SimulatedCluster {
    rank_count: usize,
    timeout: Duration,
}

impl SimulatedCluster {
    pub fn new(rank_count: usize) -> Result<Self> {
        if rank_count == 0 {
            return Err(DpcError::InvalidParameter("rank count must be at least 1".into()));
        }
        Ok(SimulatedCluster {
            rank_count,
            timeout: Duration::from_secs(120),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn run<T, F>(&self, f: F) -> Result<SimulationRun<T>>
    where
        T: Send,
        F: Fn(&SimulatedTransport) -> Result<T> + Sync,
    {
        let n = self.rank_count;
        let shared = Arc::new(Shared {
            rank_count: n,
            timeout: self.timeout,
            state: Mutex::new(State {
                pending: (0..n).map(|_| None).collect(),
                arrived: 0,
                results: (0..n).map(|_| None).collect(),
                to_collect: 0,
                closed: vec![false; n],
                poisoned: None,
            }),
            cv: Condvar::new(),
        });
        let outcomes: Vec<(Result<T>, Vec<TranscriptEntry>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .map(|rank| {
                    let shared = shared.clone();
                    let f = &f;
                    scope.spawn(move || {
                        let t = SimulatedTransport {
                            rank,
                            shared,
                            transcript: RefCell::new(Vec::new()),
                        };
                        let out = f(&t);
                        let transcript = t.transcript();
                        (out, transcript)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        });

        let mut results = Vec::with_capacity(n);
        let mut transcripts = Vec::with_capacity(n);
        let mut errors = Vec::new();
        for (out, tr) in outcomes {
            match out {
                Ok(v) => results.push(v),
                Err(e) => errors.push(e),
            }
            transcripts.push(tr);
        }
        if !errors.is_empty() {
            // report the root cause rather than the peers that starved on it
            let secondary = |e: &DpcError| {
                matches!(
                    e,
                    DpcError::Transport(TransportError::Deadlock { .. } | TransportError::Poisoned(_))
                )
            };
            let pos = errors.iter().position(|e| !secondary(e)).unwrap_or(0);
            return Err(errors.swap_remove(pos));
        }
        Ok(SimulationRun { results, transcripts })
    }
}

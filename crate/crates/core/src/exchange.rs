//! One-round resolution of pointers that cross rank boundaries.
//!
//! Protocol, per invocation:
//! 1. allreduce the number of ghost records (stop if zero);
//! 2. gather every rank's records at rank 0;
//! 3. rank 0 regroups them by owner and scatters each owner its requests;
//! 4. owners fill `target := d[id]` and the filled records are allgathered;
//! 5. every rank compresses the resulting ghost pointer table;
//! 6. every local pointer that names a table id is replaced by its
//!    compressed target.
//!
//! Two resolutions are supported. [`Resolution::Jump`] treats the answered
//! records as a pointer forest and jumps every entry to its root.
//! [`Resolution::Merge`] treats every record as a link between its id and
//! its target: requesters send the labels they already hold for the id, the
//! owner echoes them next to its own answer, and every rank resolves each id
//! to the largest id linked to it. Connected components use the latter, so a
//! component spanning many ranks settles in a single exchange.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::error::{DpcError, Result};
use crate::manifold::{SegmentationField, UNLABELED};
use crate::parallel;
use crate::partition::{DistributedDomain, RankId};
use crate::transport::{Collective, CollectiveKind};
use crate::wire;

/// Encoded size of a [`GhostRecord`]: three little-endian `i64`s.
pub const RECORD_BYTES: usize = 24;

const ROOT: RankId = RankId(0);

/// `(id, owner, target)`; `target` is [`UNLABELED`] until the owner fills it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GhostRecord {
    pub id: u64,
    pub owner: RankId,
    pub target: i64,
}

impl GhostRecord {
    pub fn request(id: u64, owner: RankId) -> Self {
        GhostRecord {
            id,
            owner,
            target: UNLABELED,
        }
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        wire::put_i64(buf, self.id as i64);
        wire::put_i64(buf, self.owner.0 as i64);
        wire::put_i64(buf, self.target);
    }

    pub fn decode(rec: &[u8]) -> Result<Self> {
        if rec.len() != RECORD_BYTES {
            return Err(DpcError::ProtocolCorruption(format!(
                "ghost record of {} bytes",
                rec.len()
            )));
        }
        let id = wire::i64_at(rec, 0);
        let owner = wire::i64_at(rec, 1);
        if id < 0 || owner < 0 {
            return Err(DpcError::ProtocolCorruption(format!(
                "ghost record with id {id}, owner {owner}"
            )));
        }
        Ok(GhostRecord {
            id: id as u64,
            owner: RankId(owner as usize),
            target: wire::i64_at(rec, 2),
        })
    }
}

pub fn encode_records(records: &[GhostRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        r.encode_into(&mut buf);
    }
    buf
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<GhostRecord>> {
    wire::records(bytes, RECORD_BYTES)?.map(GhostRecord::decode).collect()
}

/// Resolved ghost pointers `id -> target`, sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GhostPointerTable {
    ids: Vec<u64>,
    targets: Vec<i64>,
}

impl GhostPointerTable {
    /// Builds the table from filled records. Duplicate ids must agree.
    pub fn from_records(records: &[GhostRecord]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if r.target < 0 {
                return Err(DpcError::ProtocolCorruption(format!(
                    "record for {} was never filled",
                    r.id
                )));
            }
            if let Some(prev) = map.insert(r.id, r.target) {
                if prev != r.target {
                    return Err(DpcError::ProtocolCorruption(format!(
                        "conflicting targets {prev} and {} for {}",
                        r.target, r.id
                    )));
                }
            }
        }
        Ok(Self::from_entries(map))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (u64, i64)>) -> Self {
        let map: BTreeMap<u64, i64> = entries.into_iter().collect();
        GhostPointerTable {
            ids: map.keys().copied().collect(),
            targets: map.values().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    fn index_of(&self, id: i64) -> Option<usize> {
        if id < 0 {
            return None;
        }
        self.ids.binary_search(&(id as u64)).ok()
    }

    #[inline]
    pub fn get(&self, id: i64) -> Option<i64> {
        self.index_of(id).map(|i| self.targets[i])
    }

    pub fn entries(&self) -> Vec<(u64, i64)> {
        self.ids.iter().copied().zip(self.targets.iter().copied()).collect()
    }

    /// One synchronous jump: every target is replaced by the target's
    /// target. Returns whether anything changed; an entry jumping back to
    /// itself closes a cycle.
    fn jump_round(&mut self) -> Result<bool> {
        let mut next = Vec::with_capacity(self.len());
        for (&id, &t) in self.ids.iter().zip(&self.targets) {
            let jumped = self.get(t).unwrap_or(t);
            if jumped == id as i64 && t != id as i64 {
                return Err(DpcError::InvariantViolation(format!(
                    "ghost pointer table has a cycle through {id}"
                )));
            }
            next.push(jumped);
        }
        let changed = next != self.targets;
        self.targets = next;
        Ok(changed)
    }

    /// Jumps to the fixed point and returns the number of rounds that
    /// changed something. With `history`, the table after each such round
    /// is appended.
    pub fn compress(&mut self, mut history: Option<&mut Vec<Vec<(u64, i64)>>>) -> Result<usize> {
        // 2^rounds must cover the longest chain, which is at most len
        let bound = (usize::BITS - self.len().leading_zeros()) as usize + 1;
        let mut rounds = 0;
        while self.jump_round()? {
            rounds += 1;
            if rounds > bound {
                return Err(DpcError::InvariantViolation(
                    "ghost pointer table contains a cycle".into(),
                ));
            }
            if let Some(h) = history.as_deref_mut() {
                h.push(self.entries());
            }
        }
        Ok(rounds)
    }

    /// True when every target is outside the table or a fixed point of it.
    pub fn is_terminal(&self) -> bool {
        self.targets.iter().all(|&t| self.get(t).is_none_or(|tt| tt == t))
    }
}

/// Compresses `table` to its fixed point; returns it with the jump count.
pub fn compress_ghost_table(mut table: GhostPointerTable) -> Result<(GhostPointerTable, usize)> {
    let rounds = table.compress(None)?;
    Ok((table, rounds))
}

/// Union of linked ids where each class resolves to its largest member.
pub fn merge_table(records: &[GhostRecord]) -> Result<GhostPointerTable> {
    let mut ids: Vec<u64> = Vec::with_capacity(records.len() * 2);
    for r in records {
        if r.target < 0 {
            return Err(DpcError::ProtocolCorruption(format!(
                "record for {} was never filled",
                r.id
            )));
        }
        ids.push(r.id);
        ids.push(r.target as u64);
    }
    ids.sort_unstable();
    ids.dedup();
    let index = |id: u64| ids.binary_search(&id).expect("collected above");
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for r in records {
        let a = find(&mut parent, index(r.id));
        let b = find(&mut parent, index(r.target as u64));
        // ids are sorted, so the larger index is the larger id
        if a != b {
            parent[a.min(b)] = a.max(b);
        }
    }
    let targets: Vec<(u64, i64)> = (0..ids.len())
        .map(|i| (ids[i], ids[find(&mut parent, i)] as i64))
        .collect();
    Ok(GhostPointerTable::from_entries(targets))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Resolution {
    /// Answers form a pointer forest resolved by pointer jumping.
    #[default]
    Jump,
    /// Records are links; each id resolves to the largest id it is linked to.
    Merge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExchangeOptions {
    pub workers: usize,
    pub trace: bool,
    pub resolution: Resolution,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        ExchangeOptions {
            workers: 1,
            trace: false,
            resolution: Resolution::Jump,
        }
    }
}

/// Intermediate states kept when [`ExchangeOptions::trace`] is set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExchangeTrace {
    /// Records as gathered at rank 0, per requesting rank (rank 0 only).
    pub gathered: Option<Vec<Vec<GhostRecord>>>,
    /// Records this rank answered as owner, after filling.
    pub answered: Vec<GhostRecord>,
    /// The table right after the allgather.
    pub table: Vec<(u64, i64)>,
    /// The table after each jump round that changed it.
    pub rounds: Vec<Vec<(u64, i64)>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExchangeReport {
    /// Global record count from the allreduce (0 when skipped).
    pub global_records: u64,
    pub table_len: usize,
    pub jump_rounds: usize,
    /// Local entries whose value the rewrite changed.
    pub changed: usize,
    pub bytes_sent: u64,
    pub exchange_seconds: f64,
    pub rewrite_seconds: f64,
    /// Collectives this invocation issued, as recorded by the transport.
    pub collectives: Vec<CollectiveKind>,
    pub trace: Option<ExchangeTrace>,
}

/// Rank 0: regroup gathered records by owner, keeping requesting-rank then
/// arrival order.
/// Per-owner scatter payloads plus the decoded records per requester.
type Regrouped = (Vec<Vec<u8>>, Vec<Vec<GhostRecord>>);

fn regroup_by_owner(gathered: &[Vec<u8>], rank_count: usize) -> Result<Regrouped> {
    let mut per_owner = vec![Vec::new(); rank_count];
    let mut decoded = Vec::with_capacity(gathered.len());
    for (requester, bytes) in gathered.iter().enumerate() {
        let recs = decode_records(bytes)?;
        for r in &recs {
            if r.owner.0 >= rank_count || r.owner.0 == requester {
                return Err(DpcError::ProtocolCorruption(format!(
                    "rank {requester} requested {} from owner {}",
                    r.id, r.owner
                )));
            }
            r.encode_into(&mut per_owner[r.owner.0]);
        }
        decoded.push(recs);
    }
    Ok((per_owner, decoded))
}

fn owner_value(domain: &DistributedDomain, d: &SegmentationField, r: &GhostRecord) -> Result<i64> {
    let local = domain.local_of(r.id).filter(|&l| domain.is_owned(l)).ok_or_else(|| {
        DpcError::ProtocolCorruption(format!(
            "{} asked for vertex {} which it does not own",
            domain.rank(),
            r.id
        ))
    })?;
    let own = d.get(local);
    if own == UNLABELED {
        return Err(DpcError::ProtocolCorruption(format!(
            "vertex {} is requested but unlabeled on its owner",
            r.id
        )));
    }
    Ok(own)
}

/// Owner side. Jump: every request is answered with `max(d[id], targets
/// already set for id)`. Merge: set targets are echoed as links and one
/// answer `d[id]` is added per id.
fn answer_requests(
    domain: &DistributedDomain,
    d: &SegmentationField,
    requests: Vec<GhostRecord>,
    resolution: Resolution,
) -> Result<Vec<GhostRecord>> {
    match resolution {
        Resolution::Jump => {
            let mut answer: BTreeMap<u64, i64> = BTreeMap::new();
            for r in &requests {
                let own = owner_value(domain, d, r)?;
                let e = answer.entry(r.id).or_insert(own);
                *e = (*e).max(r.target);
            }
            Ok(requests
                .into_iter()
                .map(|r| GhostRecord {
                    target: answer[&r.id],
                    ..r
                })
                .collect())
        }
        Resolution::Merge => {
            let mut out = Vec::with_capacity(requests.len() * 2);
            let mut answered = BTreeSet::new();
            for r in &requests {
                let own = owner_value(domain, d, r)?;
                if r.target != UNLABELED {
                    out.push(*r);
                }
                if answered.insert(r.id) {
                    out.push(GhostRecord { target: own, ..*r });
                }
            }
            Ok(out)
        }
    }
}

/// Resolves every local pointer across ranks. See the module docs for the
/// collective sequence. Single-rank runs return immediately.
pub fn exchange_ghost_vertices(
    domain: &DistributedDomain,
    d: &mut SegmentationField,
    records: &[GhostRecord],
    t: &dyn Collective,
    opts: ExchangeOptions,
) -> Result<ExchangeReport> {
    let mut report = ExchangeReport::default();
    if t.rank_count() == 1 {
        if let Some(r) = records.first() {
            return Err(DpcError::ProtocolCorruption(format!(
                "ghost record for {} on a single rank",
                r.id
            )));
        }
        return Ok(report);
    }
    let start = Instant::now();
    let bytes_before = t.bytes_sent();
    let mark = t.transcript().len();
    let issued = |t: &dyn Collective| t.transcript()[mark..].iter().map(|e| e.kind).collect();
    let me = domain.rank();
    for r in records {
        if r.owner == me || domain.owner_of(r.id) != r.owner {
            return Err(DpcError::ProtocolCorruption(format!("bad ghost record {r:?} on {me}")));
        }
    }

    let total = t.allreduce_sum(records.len() as i64)?;
    report.global_records = total as u64;
    if total == 0 {
        report.collectives = issued(t);
        report.bytes_sent = t.bytes_sent() - bytes_before;
        report.exchange_seconds = start.elapsed().as_secs_f64();
        return Ok(report);
    }

    let gathered = t.gather(encode_records(records), ROOT)?;
    let (scatter_parts, gathered_trace) = match gathered {
        Some(all) => {
            let (parts, decoded) = regroup_by_owner(&all, t.rank_count())?;
            (Some(parts), Some(decoded))
        }
        None => (None, None),
    };
    let requests = decode_records(&t.scatter(scatter_parts, ROOT)?)?;
    let requests = answer_requests(domain, d, requests, opts.resolution)?;
    let all = t.allgather(encode_records(&requests))?;
    let mut resolved = Vec::new();
    for bytes in &all {
        resolved.extend(decode_records(bytes)?);
    }
    let mut table = match opts.resolution {
        Resolution::Jump => GhostPointerTable::from_records(&resolved)?,
        Resolution::Merge => merge_table(&resolved)?,
    };
    report.table_len = table.len();

    let mut trace = opts.trace.then(|| ExchangeTrace {
        gathered: gathered_trace,
        answered: requests.clone(),
        table: table.entries(),
        rounds: Vec::new(),
    });
    report.jump_rounds = table.compress(trace.as_mut().map(|t| &mut t.rounds))?;
    report.trace = trace;
    report.collectives = issued(t);
    report.bytes_sent = t.bytes_sent() - bytes_before;
    report.exchange_seconds = start.elapsed().as_secs_f64();

    let rewrite_start = Instant::now();
    report.changed = rewrite_pointers(domain, d, &table, opts);
    report.rewrite_seconds = rewrite_start.elapsed().as_secs_f64();
    Ok(report)
}

/// Replaces pointers by their compressed table targets. Ghost entries take
/// the owner's answer for the ghost itself; owned entries also absorb any
/// answer for themselves. Returns the number of changed entries.
fn rewrite_pointers(
    domain: &DistributedDomain,
    d: &mut SegmentationField,
    table: &GhostPointerTable,
    opts: ExchangeOptions,
) -> usize {
    let merge = opts.resolution == Resolution::Merge;
    let owned = domain.owned_count();
    let changed = std::sync::atomic::AtomicUsize::new(0);
    parallel::for_each_chunk_mut(d.values_mut(), opts.workers, |start, chunk| {
        let mut local_changes = 0;
        for (i, slot) in chunk.iter_mut().enumerate() {
            let l = start + i;
            if *slot == UNLABELED {
                continue;
            }
            let own = table.get(domain.global_id(l) as i64);
            let next = if l < owned {
                // raises proposed for v itself count as well as v's target
                table.get(*slot).unwrap_or(*slot).max(own.unwrap_or(UNLABELED))
            } else if merge {
                own.map_or(*slot, |o| o.max(*slot))
            } else {
                own.unwrap_or(*slot)
            };
            if next != *slot {
                *slot = next;
                local_changes += 1;
            }
        }
        changed.fetch_add(local_changes, std::sync::atomic::Ordering::Relaxed);
    });
    changed.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_chain_compresses() {
        let (t, rounds) = compress_ghost_table(GhostPointerTable::from_entries([(0, 1), (1, 2), (2, 2)])).unwrap();
        assert_eq!(t.entries(), vec![(0, 2), (1, 2), (2, 2)]);
        assert_eq!(rounds, 1);
        assert!(t.is_terminal());
    }

    #[test]
    fn empty_table() {
        let (t, rounds) = compress_ghost_table(GhostPointerTable::default()).unwrap();
        assert!(t.is_empty());
        assert_eq!(rounds, 0);
    }

    #[test]
    fn cycle_detected() {
        for entries in [
            vec![(0, 1), (1, 0)],
            vec![(0, 1), (1, 2), (2, 0)],
            vec![(0, 1), (1, 2), (2, 3), (3, 1)],
        ] {
            let err = compress_ghost_table(GhostPointerTable::from_entries(entries)).unwrap_err();
            assert!(matches!(err, DpcError::InvariantViolation(_)));
        }
    }

    #[test]
    fn conflicting_duplicates_rejected() {
        let a = GhostRecord {
            id: 3,
            owner: RankId(1),
            target: 4,
        };
        let b = GhostRecord { target: 5, ..a };
        assert!(GhostPointerTable::from_records(&[a, b]).is_err());
        assert!(GhostPointerTable::from_records(&[a, a]).is_ok());
        assert!(GhostPointerTable::from_records(&[GhostRecord::request(3, RankId(1))]).is_err());
    }

    #[test]
    fn record_wire_layout() {
        let r = GhostRecord {
            id: 258,
            owner: RankId(3),
            target: -1,
        };
        let bytes = encode_records(&[r]);
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..8], &258i64.to_le_bytes());
        assert_eq!(&bytes[8..16], &3i64.to_le_bytes());
        assert_eq!(&bytes[16..], &[0xff; 8]);
        assert!(decode_records(&bytes[..20]).is_err());
    }

    #[test]
    fn merge_table_takes_class_maximum() {
        let link = |id, target| GhostRecord {
            id,
            owner: RankId(0),
            target,
        };
        let t = merge_table(&[link(2, 7), link(3, 3), link(7, 1), link(4, 5), link(9, 4)]).unwrap();
        assert_eq!(
            t.entries(),
            vec![(1, 7), (2, 7), (3, 3), (4, 9), (5, 9), (7, 7), (9, 9)]
        );
        assert!(merge_table(&[GhostRecord::request(1, RankId(0))]).is_err());
    }

    proptest! {
        #[test]
        fn records_roundtrip(recs in proptest::collection::vec((0u64..1 << 40, 0usize..64, -1i64..1 << 40), 0..20)) {
            let recs: Vec<_> = recs.into_iter().map(|(id, o, t)| GhostRecord { id, owner: RankId(o), target: t }).collect();
            prop_assert_eq!(decode_records(&encode_records(&recs)).unwrap(), recs);
        }

        /// Random forests with edges toward larger ids compress to the root
        /// of each tree.
        #[test]
        fn compression_reaches_roots(parents in proptest::collection::vec(0u64..1000, 1..60)) {
            let n = parents.len() as u64;
            let entries: Vec<(u64, i64)> = parents
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let i = i as u64;
                    let target = if i + 1 < n { i + 1 + p % (n - i) } else { i };
                    (i, target.min(n - 1) as i64)
                })
                .collect();
            let (t, _) = compress_ghost_table(GhostPointerTable::from_entries(entries.clone())).unwrap();
            prop_assert!(t.is_terminal());
            for (id, target) in t.entries() {
                let mut cur = id as i64;
                loop {
                    let next = entries[cur as usize].1;
                    if next == cur { break; }
                    cur = next;
                }
                prop_assert_eq!(target, cur);
            }
        }
    }
}

//! Global order field: ranks every vertex by `(value, global id)` so that the
//! field becomes injective and steepest directions are unique.
//!
//! The sort runs on rank 0: every rank ships its owned `(gid, value)` pairs
//! plus the ghost ids it needs, and rank 0 answers each rank with the order
//! of its owned vertices followed by the order of its ghosts.

use std::cmp::Ordering;

use crate::error::{DpcError, Result};
use crate::partition::{DistributedDomain, RankId};
use crate::transport::Collective;
use crate::wire;

/// Scalar values of one rank's local vertices (owned then ghosts).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DpcError::InvalidField(format!(
                "non-finite value {} at local vertex {i}",
                values[i]
            )));
        }
        Ok(ScalarField { values })
    }

    /// Picks this rank's local values out of a global array indexed by id.
    pub fn from_global(domain: &DistributedDomain, global: &[f64]) -> Result<Self> {
        if global.len() as u64 != domain.global_count() {
            return Err(DpcError::InvalidField(format!(
                "field has {} values for {} vertices",
                global.len(),
                domain.global_count()
            )));
        }
        Self::new(domain.local_to_global().iter().map(|&g| global[g as usize]).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-local-vertex position in the global `(value, gid)` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderField {
    values: Vec<i64>,
}

impl OrderField {
    /// Wraps order values that are already known to be a global bijection.
    pub fn from_local(values: Vec<i64>) -> Self {
        OrderField { values }
    }

    /// Uses the scalar values themselves as order when they are already
    /// distinct integers in `0..n`.
    pub fn from_injective_scalars(domain: &DistributedDomain, f: &ScalarField) -> Result<Self> {
        let n = domain.global_count() as f64;
        let values = f
            .values()
            .iter()
            .map(|&v| {
                if v.fract() != 0.0 || v < 0.0 || v >= n {
                    Err(DpcError::InvalidField(format!(
                        "precomputed order value {v} is not an integer in 0..{n}"
                    )))
                } else {
                    Ok(v as i64)
                }
            })
            .collect::<Result<_>>()?;
        Ok(OrderField { values })
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, local: usize) -> i64 {
        self.values[local]
    }

    /// The reversed order `n - 1 - order`, which swaps maxima and minima.
    pub fn reversed(&self, global_count: u64) -> Self {
        let top = global_count as i64 - 1;
        OrderField {
            values: self.values.iter().map(|&o| top - o).collect(),
        }
    }
}

/// Lexicographic `(value, gid)` comparison. Values must be finite.
#[inline]
pub fn compare_value_id(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.partial_cmp(&b.0).expect("finite values").then(a.1.cmp(&b.1))
}

const ROOT: RankId = RankId(0);

pub fn compute_order_field(domain: &DistributedDomain, f: &ScalarField, t: &dyn Collective) -> Result<OrderField> {
    if f.len() != domain.local_count() {
        return Err(DpcError::InvalidField(format!(
            "field has {} values for {} local vertices",
            f.len(),
            domain.local_count()
        )));
    }
    let mut request = Vec::with_capacity(8 + domain.owned_count() * 16 + domain.ghost_count() * 8);
    wire::put_i64(&mut request, domain.owned_count() as i64);
    for (l, &g) in domain.owned_globals().iter().enumerate() {
        wire::put_i64(&mut request, g as i64);
        wire::put_f64(&mut request, f.values()[l]);
    }
    for &g in domain.ghost_globals() {
        wire::put_i64(&mut request, g as i64);
    }

    let replies = t
        .gather(request, ROOT)?
        .map(|all| answer_order_requests(&all, domain.global_count()))
        .transpose()?;
    let reply = t.scatter(replies, ROOT)?;
    let values = wire::decode_i64s(&reply)?;
    if values.len() != domain.local_count() {
        return Err(DpcError::ProtocolCorruption(format!(
            "order reply has {} entries for {} local vertices",
            values.len(),
            domain.local_count()
        )));
    }
    Ok(OrderField { values })
}

/// Root side: sorts every owned vertex and answers each rank's request.
fn answer_order_requests(requests: &[Vec<u8>], global_count: u64) -> Result<Vec<Vec<u8>>> {
    struct Parsed<'a> {
        owned: Vec<(u64, f64)>,
        ghosts: &'a [u8],
    }
    let mut parsed = Vec::with_capacity(requests.len());
    for req in requests {
        if req.len() < 8 {
            return Err(DpcError::ProtocolCorruption("truncated order request".into()));
        }
        let owned_count = wire::i64_at(req, 0) as usize;
        let split = 8 + owned_count * 16;
        if req.len() < split {
            return Err(DpcError::ProtocolCorruption("truncated order request".into()));
        }
        let owned = wire::records(&req[8..split], 16)?
            .map(|r| (wire::i64_at(r, 0) as u64, wire::f64_at(r, 1)))
            .collect();
        parsed.push(Parsed {
            owned,
            ghosts: &req[split..],
        });
    }

    let mut all: Vec<(f64, u64)> = parsed
        .iter()
        .flat_map(|p| p.owned.iter().map(|&(g, v)| (v, g)))
        .collect();
    if all.len() as u64 != global_count {
        return Err(DpcError::ProtocolCorruption(format!(
            "{} owned vertices reported for a domain of {global_count}",
            all.len()
        )));
    }
    all.sort_unstable_by(|a, b| compare_value_id(*a, *b));
    let mut order = vec![-1i64; global_count as usize];
    for (rank, &(_, g)) in all.iter().enumerate() {
        let slot = order
            .get_mut(g as usize)
            .ok_or_else(|| DpcError::ProtocolCorruption(format!("vertex id {g} out of range")))?;
        if *slot != -1 {
            return Err(DpcError::ProtocolCorruption(format!("vertex {g} owned twice")));
        }
        *slot = rank as i64;
    }

    parsed
        .iter()
        .map(|p| {
            let mut out: Vec<i64> = p.owned.iter().map(|&(g, _)| order[g as usize]).collect();
            for g in wire::decode_i64s(p.ghosts)? {
                let o = order
                    .get(g as usize)
                    .copied()
                    .ok_or_else(|| DpcError::ProtocolCorruption(format!("ghost id {g} out of range")))?;
                out.push(o);
            }
            Ok(wire::encode_i64s(&out))
        })
        .collect()
}

//! Single-process references on the undistributed domain. Deliberately
//! naive: one step at a time, no pointer jumping, no partitioning.

use std::collections::VecDeque;

use crate::grid::Domain;
use crate::order::compare_value_id;

/// Label of unmasked vertices.
pub const UNLABELED: i64 = -1;

/// Order of every vertex under `(value, id)`.
pub fn reference_order(values: &[f64]) -> Vec<i64> {
    let mut ids: Vec<u64> = (0..values.len() as u64).collect();
    ids.sort_by(|&a, &b| compare_value_id((values[a as usize], a), (values[b as usize], b)));
    let mut order = vec![0; values.len()];
    for (pos, &v) in ids.iter().enumerate() {
        order[v as usize] = pos as i64;
    }
    order
}

/// The neighbor with the largest order if it beats `v` itself.
fn ascent_step(domain: &Domain, order: &[i64], v: u64) -> Option<u64> {
    let mut best = v;
    domain.for_each_neighbor(v, |u| {
        if order[u as usize] > order[best as usize] {
            best = u;
        }
    });
    (best != v).then_some(best)
}

/// Maximum reached from every vertex by repeated steepest ascent.
pub fn oracle_descending(domain: &Domain, order: &[i64]) -> Vec<i64> {
    (0..domain.vertex_count())
        .map(|v| {
            let mut cur = v;
            while let Some(next) = ascent_step(domain, order, cur) {
                cur = next;
            }
            cur as i64
        })
        .collect()
}

/// Minimum reached from every vertex by repeated steepest descent.
pub fn oracle_ascending(domain: &Domain, order: &[i64]) -> Vec<i64> {
    oracle_descending(domain, &negated(order))
}

fn negated(order: &[i64]) -> Vec<i64> {
    order.iter().map(|&o| -o).collect()
}

/// Number of edges on the longest steepest-ascent path.
pub fn longest_ascent_path(domain: &Domain, order: &[i64]) -> usize {
    // visit vertices from the top down so every successor is already known
    let mut by_order: Vec<u64> = (0..domain.vertex_count()).collect();
    by_order.sort_by_key(|&v| std::cmp::Reverse(order[v as usize]));
    let mut length = vec![0usize; order.len()];
    for v in by_order {
        if let Some(next) = ascent_step(domain, order, v) {
            length[v as usize] = length[next as usize] + 1;
        }
    }
    length.into_iter().max().unwrap_or(0)
}

/// Number of edges on the longest steepest-descent path.
pub fn longest_descent_path(domain: &Domain, order: &[i64]) -> usize {
    longest_ascent_path(domain, &negated(order))
}

/// Breadth-first labeling of the masked subgraph by maximum member id.
pub fn oracle_components(domain: &Domain, mask: &[bool]) -> Vec<i64> {
    let mut labels = vec![UNLABELED; mask.len()];
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != UNLABELED {
            continue;
        }
        // mark with a placeholder until the maximum is known
        labels[start] = -2;
        queue.push_back(start as u64);
        members.clear();
        while let Some(v) = queue.pop_front() {
            members.push(v);
            domain.for_each_neighbor(v, |u| {
                if mask[u as usize] && labels[u as usize] == UNLABELED {
                    labels[u as usize] = -2;
                    queue.push_back(u);
                }
            });
        }
        let top = *members.iter().max().expect("start is a member") as i64;
        for &v in &members {
            labels[v as usize] = top;
        }
    }
    labels
}

//! Approximate minimum degree ordering on the quotient graph.
//!
//! Eliminated nodes become elements; a variable's degree is bounded above by
//! `|A_i| + |L_p \ i| + Σ_e |L_e \ L_p|` as in classical AMD. Elements whose
//! variable set falls inside the new pivot element are absorbed. Rows denser
//! than `max(16, 10√n)` are removed up front and ordered last.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::SparseSymMatrix;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Variable,
    Element,
    Dead,
    Dense,
}

/// Returns `perm` with `perm[k]` the original index eliminated at step `k`.
pub fn approximate_minimum_degree(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.entries() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }

    let dense_cut = core::cmp::max(16, (10.0 * libm::sqrt(n as f64)) as usize);
    let mut status = vec![Status::Variable; n];
    let mut dense: Vec<(usize, usize)> = Vec::new();
    if n > dense_cut {
        for i in 0..n {
            if adj[i].len() > dense_cut {
                status[i] = Status::Dense;
                dense.push((adj[i].len(), i));
            }
        }
        if !dense.is_empty() {
            for l in adj.iter_mut() {
                l.retain(|&v| status[v] != Status::Dense);
            }
        }
    }
    let n_sparse = n - dense.len();

    let mut adj_elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&i| status[i] == Status::Variable)
        .map(|i| Reverse((degree[i], i)))
        .collect();

    let mut mark = vec![usize::MAX; n];
    let mut w = vec![0usize; n];
    let mut w_step = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut lp: Vec<usize> = Vec::new();

    while order.len() < n_sparse {
        let Some(Reverse((d, p))) = heap.pop() else { break };
        if status[p] != Status::Variable || degree[p] != d {
            continue;
        }
        let step = order.len();
        order.push(p);

        // New element L_p = (A_p ∪ ⋃ L_e) \ {p}.
        lp.clear();
        mark[p] = step;
        for &v in &adj[p] {
            if status[v] == Status::Variable && mark[v] != step {
                mark[v] = step;
                lp.push(v);
            }
        }
        let elems = core::mem::take(&mut adj_elems[p]);
        for &e in &elems {
            if status[e] != Status::Element {
                continue;
            }
            for &v in &elem_vars[e] {
                if status[v] == Status::Variable && mark[v] != step {
                    mark[v] = step;
                    lp.push(v);
                }
            }
            status[e] = Status::Dead;
            elem_vars[e] = Vec::new();
        }
        status[p] = Status::Element;
        adj[p] = Vec::new();
        elem_vars[p] = lp.clone();

        let remaining = n_sparse - order.len();
        for &i in &lp {
            // Variables adjacent to i that are now covered by element p.
            adj[i].retain(|&v| status[v] == Status::Variable && mark[v] != step);
            let mut ext = 0usize;
            let mut kept = Vec::with_capacity(adj_elems[i].len() + 1);
            for &e in &adj_elems[i] {
                if status[e] != Status::Element || e == p {
                    continue;
                }
                if w_step[e] != step {
                    w_step[e] = step;
                    elem_vars[e].retain(|&v| status[v] == Status::Variable);
                    w[e] = elem_vars[e].iter().filter(|&&v| mark[v] != step).count();
                }
                if w[e] == 0 {
                    // L_e ⊆ L_p: absorb.
                    status[e] = Status::Dead;
                    elem_vars[e] = Vec::new();
                    continue;
                }
                ext += w[e];
                kept.push(e);
            }
            kept.push(p);
            adj_elems[i] = kept;
            let bound = adj[i].len() + (lp.len() - 1) + ext;
            let d = bound
                .min(degree[i] + lp.len() - 1)
                .min(remaining.saturating_sub(1));
            degree[i] = d;
            heap.push(Reverse((d, i)));
        }
    }

    dense.sort_unstable();
    order.extend(dense.into_iter().map(|(_, i)| i));
    order
}

//! Depth-first enumeration of switching products.
//!
//! Each length-`k` product `A_{i_k} ⋯ A_{i_1}` is built from its length-`(k-1)`
//! prefix with one multiplication. Subtrees rooted at the first index are
//! independent, so they may run in parallel; results come back as one
//! accumulator per root index, in index order, and callers combine them
//! sequentially so output does not depend on the thread count.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::Limits;

/// Number of products of length `1..=max_len` over `n` symbols.
pub(crate) fn product_count(n: usize, max_len: usize) -> u128 {
    let n = n as u128;
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..max_len {
        level = level.saturating_mul(n);
        total = total.saturating_add(level);
    }
    total
}

pub(crate) fn check_budget(limits: &Limits, n: usize, max_len: usize) -> Result<()> {
    limits.check_products(product_count(n, max_len))
}

/// Visits every product of length `1..=max_len`.
///
/// `visit(acc, len, product, weight)` receives the chain weight
/// `q_{i_1 i_2} ⋯ q_{i_{len-1} i_len}` (always 1 without a transition matrix).
/// Branches whose weight is exactly zero are pruned.
pub(crate) fn walk_products<Acc, Init, Visit>(
    members: &[DMatrix<f64>],
    transition: Option<&DMatrix<f64>>,
    max_len: usize,
    init: Init,
    visit: Visit,
) -> Vec<Acc>
where
    Acc: Send,
    Init: Fn() -> Acc + Sync,
    Visit: Fn(&mut Acc, usize, &DMatrix<f64>, f64) + Sync,
{
    let root = |first: usize| {
        let mut acc = init();
        if max_len == 0 {
            return acc;
        }
        let dim = members[first].nrows();
        let mut bufs: Vec<DMatrix<f64>> = (0..max_len).map(|_| DMatrix::zeros(dim, dim)).collect();
        bufs[0].copy_from(&members[first]);
        visit(&mut acc, 1, &bufs[0], 1.0);
        descend(members, transition, first, 1.0, 1, &mut bufs, &mut acc, &visit);
        acc
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..members.len()).into_par_iter().map(root).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..members.len()).map(root).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn descend<Acc, Visit>(
    members: &[DMatrix<f64>],
    transition: Option<&DMatrix<f64>>,
    last: usize,
    weight: f64,
    depth: usize,
    bufs: &mut [DMatrix<f64>],
    acc: &mut Acc,
    visit: &Visit,
) where
    Visit: Fn(&mut Acc, usize, &DMatrix<f64>, f64),
{
    let (current, rest) = match bufs.split_first_mut() {
        Some((c, r)) if !r.is_empty() => (c, r),
        _ => return,
    };
    for (next, member) in members.iter().enumerate() {
        let w = match transition {
            Some(q) => weight * q[(last, next)],
            None => weight,
        };
        if w == 0.0 {
            continue;
        }
        member.mul_to(current, &mut rest[0]);
        visit(acc, depth + 1, &rest[0], w);
        descend(members, transition, next, w, depth + 1, rest, acc, visit);
    }
}

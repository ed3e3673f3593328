//! Structural operators: lift, positional composition, constant
//! substitution, oblique projection and slot normalization.

use crate::error::{Error, Result};
use crate::expr::{Expr, Node, Primitive};

/// Embeds an arity-m function into n variables, reading inner variable `k` from slot `positions[k-1]`.
pub fn lift(f: &Expr, n: usize, positions: &[usize]) -> Result<Expr> {
    Expr::lift(f.clone(), n, positions.to_vec())
}

/// Number of distinct ways to lift an arity-m function to n variables: n·(n−1)·…·(n−m+1).
pub fn lift_count(m: usize, n: usize) -> Result<u64> {
    if m == 0 || m > n {
        return Err(Error::structural(format!(
            "lift count needs 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    (n - m + 1..=n).try_fold(1u64, |acc, k| {
        acc.checked_mul(k as u64)
            .ok_or_else(|| Error::structural(format!("lift count for m={m}, n={n} overflows")))
    })
}

/// Replaces variable `i` of `f` by `g`. `g` must share `f`'s arity or be a constant.
///
/// When `f` does not use slot `i` the replacement never happens and the
/// result evaluates exactly as `f`.
pub fn compose_at(f: &Expr, i: usize, g: &Expr) -> Result<Expr> {
    Expr::compose(f.clone(), i, g.clone())
}

/// Like [`compose_at`], but first lifts a lower-arity `g` into `f`'s arity at `positions`.
pub fn compose_at_lifted(
    f: &Expr,
    i: usize,
    g: &Expr,
    positions: Option<&[usize]>,
) -> Result<Expr> {
    let n = f.arity();
    if g.arity() == n || g.arity() == 0 {
        if let Some(p) = positions {
            if g.arity() == n && p.iter().copied().ne(1..=n) {
                return lift(g, n, p).and_then(|g| compose_at(f, i, &g));
            }
        }
        return compose_at(f, i, g);
    }
    if g.arity() > n {
        return Err(Error::structural(format!(
            "cannot compose an arity-{} function into an arity-{n} one",
            g.arity()
        )));
    }
    match positions {
        Some(p) => compose_at(f, i, &lift(g, n, p)?),
        None => Err(Error::structural(format!(
            "composing an arity-{} function into arity {n} needs explicit lift positions",
            g.arity()
        ))),
    }
}

/// Pins slot `i` of `f` to `v` and deletes that slot, so the result has arity n−1.
///
/// A unary `f` pins to a constant, which requires evaluating it.
pub fn substitute_const(f: &Expr, i: usize, v: f64) -> Result<Expr> {
    let pinned = compose_at(f, i, &Expr::constant(v))?;
    if f.arity() == 1 {
        return Ok(Expr::constant(pinned.eval(&[v])?));
    }
    delete_unused_slot(&pinned, i)
}

/// Oblique projection: substitutes variable `j` for variable `i` and deletes
/// slot `i`; remaining slots keep their order.
pub fn diagonal(f: &Expr, i: usize, j: usize) -> Result<Expr> {
    Expr::diagonal(f.clone(), i, j)
}

fn delete_unused_slot(e: &Expr, slot: usize) -> Result<Expr> {
    debug_assert!(!e.uses(slot));
    let other = if slot == 1 { 2 } else { 1 };
    Expr::diagonal(e.clone(), slot, other)
}

/// Old-slot to new-slot mapping produced by [`normalize`].
pub type SlotMap = Vec<(usize, usize)>;

/// Renumbers slots so the used ones become `1..=k`, preserving their order.
///
/// Returns the compacted expression and the old→new mapping of used slots.
/// A function that uses no slot at all collapses to a constant when it can
/// be evaluated, otherwise it is reduced to arity 1.
pub fn normalize(e: &Expr) -> (Expr, SlotMap) {
    let used = e.used_slots().to_vec();
    let map: SlotMap = used.iter().enumerate().map(|(k, &s)| (s, k + 1)).collect();
    if e.is_compact() {
        return (e.clone(), map);
    }
    (compact(e), map)
}

fn compact(e: &Expr) -> Expr {
    let used = e.used_slots();
    let renumber = |s: usize| used.binary_search(&s).map(|k| k + 1).ok();
    if let Node::Lift { inner, .. } = e.node() {
        let (inner, _) = normalize(inner);
        // inner's compacted slots are its previously used slots, in order
        let reads: Vec<usize> = positions_of_used(e)
            .into_iter()
            .map(|p| renumber(p).expect("lift reads only used slots"))
            .collect();
        debug_assert_eq!(reads.len(), inner.arity());
        if used.is_empty() {
            return inner;
        }
        return Expr::lift(inner, used.len(), reads).expect("compacted lift is well-formed");
    }

    let mut out = e.clone();
    for s in (1..=e.arity()).rev() {
        if out.arity() == 1 {
            break;
        }
        if !e.uses(s) {
            out = delete_unused_slot(&out, s).expect("unused slot can be deleted");
        }
    }
    if out.used_slots().is_empty() && out.arity() == 1 {
        if let Ok(v) = out.eval(&[0.0]) {
            return Expr::constant(v);
        }
    }
    out
}

/// Lift positions belonging to inner slots that are actually used, in inner-slot order.
fn positions_of_used(lift: &Expr) -> Vec<usize> {
    match lift.node() {
        Node::Lift {
            inner, positions, ..
        } => inner
            .used_slots()
            .iter()
            .map(|&k| positions[k - 1])
            .collect(),
        _ => unreachable!(),
    }
}

/// Identity lifted to `n` variables at slot `j`: the projection onto coordinate `j`.
pub fn coordinate(n: usize, j: usize) -> Result<Expr> {
    lift(&Expr::prim(Primitive::Identity), n, &[j])
}

//! Expression trees for multivariate real functions.
//!
//! An [`Expr`] is an immutable, reference-counted tree whose nodes are
//! functions rather than values: a primitive binary operation, a constant,
//! an arity lift, a positional composition, an oblique projection or a
//! partial inverse. Every node knows its arity (the number of variables it
//! accepts) and the set of slots it actually reads. Slots are 1-based.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for comparing real values.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Seed used by [`equivalent_on`].
pub const DEFAULT_SEED: u64 = 0x5eed_2011;

/// The built-in functions every expression bottoms out in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Add,
    Mul,
    Div,
    Pow,
    /// `root(x, y) = x^(1/y)`, defined for `x >= 0`, `y != 0`.
    Root,
    /// `log(x, y)` is the logarithm of `x` in base `y`.
    Log,
    Identity,
}

impl Primitive {
    pub const BINARY: [Primitive; 6] = [
        Primitive::Add,
        Primitive::Mul,
        Primitive::Div,
        Primitive::Pow,
        Primitive::Root,
        Primitive::Log,
    ];

    pub fn arity(self) -> usize {
        match self {
            Primitive::Identity => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Pow => "pow",
            Primitive::Root => "root",
            Primitive::Log => "log",
            Primitive::Identity => "id",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Some(match name {
            "add" => Primitive::Add,
            "mul" => Primitive::Mul,
            "div" => Primitive::Div,
            "pow" => Primitive::Pow,
            "root" => Primitive::Root,
            "log" => Primitive::Log,
            "id" => Primitive::Identity,
            _ => return None,
        })
    }

    /// Applies the primitive to its arguments, rejecting points outside the real domain.
    pub fn apply(self, args: &[f64]) -> Result<f64> {
        debug_assert_eq!(args.len(), self.arity());
        let fail = |reason| Error::Domain {
            node: self.name().to_string(),
            args: args.to_vec(),
            reason,
            point: Vec::new(),
        };
        let value = match self {
            Primitive::Identity => args[0],
            Primitive::Add => args[0] + args[1],
            Primitive::Mul => args[0] * args[1],
            Primitive::Div => {
                if args[1] == 0.0 {
                    return Err(fail("division by zero"));
                }
                args[0] / args[1]
            }
            Primitive::Pow => {
                let (x, y) = (args[0], args[1]);
                if x < 0.0 && y.fract() != 0.0 {
                    return Err(fail("fractional power of a negative base"));
                }
                if x == 0.0 && y < 0.0 {
                    return Err(fail("negative power of zero"));
                }
                x.powf(y)
            }
            Primitive::Root => {
                let (x, y) = (args[0], args[1]);
                if y == 0.0 {
                    return Err(fail("zeroth root"));
                }
                if x < 0.0 {
                    return Err(fail("root of a negative number"));
                }
                if x == 0.0 && y < 0.0 {
                    return Err(fail("negative-index root of zero"));
                }
                x.powf(1.0 / y)
            }
            Primitive::Log => {
                let (x, base) = (args[0], args[1]);
                if x <= 0.0 {
                    return Err(fail("logarithm of a nonpositive number"));
                }
                if base <= 0.0 || base == 1.0 {
                    return Err(fail("logarithm base must be positive and not 1"));
                }
                x.ln() / base.ln()
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(fail("non-finite result"))
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One node of an expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Prim(Primitive),
    /// Embeds `inner` (arity m) as a function of `arity` variables; inner
    /// variable `k` reads slot `positions[k - 1]`.
    Lift {
        inner: Expr,
        arity: usize,
        positions: Vec<usize>,
    },
    /// `outer` with its variable `slot` replaced by the value of `arg` at the same point.
    Compose {
        outer: Expr,
        slot: usize,
        arg: Expr,
    },
    /// Substitutes variable `j` for variable `i` and deletes slot `i`.
    Diagonal {
        inner: Expr,
        i: usize,
        j: usize,
    },
    /// Partial inverse about `slot`: the argument at `slot` is the target
    /// value, the result is the preimage searched for in `range`.
    Inverse {
        inner: Expr,
        slot: usize,
        range: (f64, f64),
    },
}

#[derive(Debug)]
struct ExprData {
    node: Node,
    arity: usize,
    used: Vec<usize>,
}

/// Immutable, cheaply clonable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<ExprData>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.node == other.0.node
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0.node, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::frontend::format(self))
    }
}

fn check_slot(what: &str, slot: usize, arity: usize) -> Result<()> {
    if slot == 0 || slot > arity {
        Err(Error::structural(format!(
            "{what} slot {slot} is outside 1..={arity}"
        )))
    } else {
        Ok(())
    }
}

impl Expr {
    fn from_parts(node: Node, arity: usize, used: Vec<usize>) -> Self {
        Expr(Arc::new(ExprData { node, arity, used }))
    }

    pub fn constant(value: f64) -> Self {
        Self::from_parts(Node::Const(value), 0, Vec::new())
    }

    pub fn prim(p: Primitive) -> Self {
        Self::from_parts(Node::Prim(p), p.arity(), (1..=p.arity()).collect())
    }

    pub fn lift(inner: Expr, arity: usize, positions: Vec<usize>) -> Result<Self> {
        if positions.len() != inner.arity() {
            return Err(Error::structural(format!(
                "lift needs {} positions for an arity-{} function, got {}",
                inner.arity(),
                inner.arity(),
                positions.len()
            )));
        }
        if inner.arity() > arity {
            return Err(Error::structural(format!(
                "cannot lift an arity-{} function to arity {arity}",
                inner.arity()
            )));
        }
        let mut seen = BTreeSet::new();
        for &p in &positions {
            check_slot("lift position", p, arity)?;
            if !seen.insert(p) {
                return Err(Error::structural(format!(
                    "lift position {p} appears more than once"
                )));
            }
        }
        let mut used: Vec<usize> = inner
            .used_slots()
            .iter()
            .map(|&k| positions[k - 1])
            .collect();
        used.sort_unstable();
        Ok(Self::from_parts(
            Node::Lift {
                inner,
                arity,
                positions,
            },
            arity,
            used,
        ))
    }

    /// Positional composition. `arg` must have the same arity as `outer` or be a
    /// constant (arity 0); see [`crate::structure::compose_at_lifted`] for the
    /// auto-lifting variant.
    pub fn compose(outer: Expr, slot: usize, arg: Expr) -> Result<Self> {
        let n = outer.arity();
        check_slot("composition", slot, n)?;
        if arg.arity() != n && arg.arity() != 0 {
            return Err(Error::structural(format!(
                "composition needs a common arity: outer has {n}, argument has {}",
                arg.arity()
            )));
        }
        let used = if outer.uses(slot) {
            let mut set: BTreeSet<usize> = outer.used_slots().iter().copied().collect();
            set.remove(&slot);
            set.extend(arg.used_slots().iter().copied());
            set.into_iter().collect()
        } else {
            outer.used_slots().to_vec()
        };
        Ok(Self::from_parts(
            Node::Compose { outer, slot, arg },
            n,
            used,
        ))
    }

    pub fn diagonal(inner: Expr, i: usize, j: usize) -> Result<Self> {
        let n = inner.arity();
        if n < 2 {
            return Err(Error::structural(
                "oblique projection needs a function of at least two variables",
            ));
        }
        check_slot("projection", i, n)?;
        check_slot("projection", j, n)?;
        if i == j {
            return Err(Error::structural(format!(
                "oblique projection needs two distinct slots, got {i} twice"
            )));
        }
        let mut set: BTreeSet<usize> = inner.used_slots().iter().copied().collect();
        if set.remove(&i) {
            set.insert(j);
        }
        let used = set
            .into_iter()
            .map(|s| if s > i { s - 1 } else { s })
            .collect();
        Ok(Self::from_parts(
            Node::Diagonal { inner, i, j },
            n - 1,
            used,
        ))
    }

    pub fn inverse(inner: Expr, slot: usize, range: (f64, f64)) -> Result<Self> {
        let n = inner.arity();
        check_slot("inverse", slot, n)?;
        if !(range.0.is_finite() && range.1.is_finite() && range.0 <= range.1) {
            return Err(Error::structural(format!(
                "inverse search range {}:{} is not a finite interval",
                range.0, range.1
            )));
        }
        let mut set: BTreeSet<usize> = inner.used_slots().iter().copied().collect();
        set.insert(slot);
        Ok(Self::from_parts(
            Node::Inverse { inner, slot, range },
            n,
            set.into_iter().collect(),
        ))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn arity(&self) -> usize {
        self.0.arity
    }

    /// Slots that occur syntactically in a position that reaches evaluation, ascending.
    pub fn used_slots(&self) -> &[usize] {
        &self.0.used
    }

    pub fn uses(&self, slot: usize) -> bool {
        self.0.used.binary_search(&slot).is_ok()
    }

    /// True when every slot `1..=arity` is used.
    pub fn is_compact(&self) -> bool {
        self.0.used.len() == self.0.arity
    }

    /// Evaluates the function at `point`, which must have exactly `arity` coordinates.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.arity() {
            return Err(Error::structural(format!(
                "arity-{} function evaluated at a point with {} coordinates",
                self.arity(),
                point.len()
            )));
        }
        self.eval_unchecked(point).map_err(|e| e.at_point(point))
    }

    fn eval_unchecked(&self, x: &[f64]) -> Result<f64> {
        match self.node() {
            Node::Const(c) => Ok(*c),
            Node::Prim(p) => p.apply(x),
            Node::Lift {
                inner, positions, ..
            } => {
                let args: Vec<f64> = positions.iter().map(|&p| x[p - 1]).collect();
                inner.eval_unchecked(&args)
            }
            Node::Compose { outer, slot, arg } => {
                if !outer.uses(*slot) {
                    return outer.eval_unchecked(x);
                }
                let value = if arg.arity() == 0 {
                    arg.eval_unchecked(&[])?
                } else {
                    arg.eval_unchecked(x)?
                };
                let mut y = x.to_vec();
                y[slot - 1] = value;
                outer.eval_unchecked(&y)
            }
            Node::Diagonal { inner, i, j } => {
                let source = if j < i { *j } else { j - 1 };
                let mut y = Vec::with_capacity(x.len() + 1);
                y.extend_from_slice(&x[..i - 1]);
                y.push(x[source - 1]);
                y.extend_from_slice(&x[i - 1..]);
                inner.eval_unchecked(&y)
            }
            Node::Inverse { inner, slot, range } => {
                let target = x[slot - 1];
                let fixed: Vec<f64> = x
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k + 1 != *slot)
                    .map(|(_, &v)| v)
                    .collect();
                crate::inverse::principal_root(inner, *slot, target, &fixed, *range)
            }
        }
    }
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Config(format!("invalid interval {lo}:{hi}")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    /// `count` evenly spaced points including both endpoints (one point if degenerate).
    pub fn grid(&self, count: usize) -> Vec<f64> {
        if count <= 1 || self.lo == self.hi {
            return vec![self.lo];
        }
        let step = self.width() / (count - 1) as f64;
        (0..count)
            .map(|k| {
                if k + 1 == count {
                    self.hi
                } else {
                    self.lo + step * k as f64
                }
            })
            .collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

/// Axis-aligned box, one closed interval per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    axes: Vec<Interval>,
}

impl BoxDomain {
    pub fn new(axes: Vec<Interval>) -> Self {
        BoxDomain { axes }
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()
            .map(BoxDomain::new)
    }

    pub fn unit(n: usize) -> Self {
        BoxDomain::new(vec![Interval { lo: 0.0, hi: 1.0 }; n])
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Ok(BoxDomain::new(vec![Interval::new(lo, hi)?; n]))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Interval] {
        &self.axes
    }

    pub fn axis(&self, slot: usize) -> Interval {
        self.axes[slot - 1]
    }

    pub fn with_axis(&self, slot: usize, interval: Interval) -> Self {
        let mut axes = self.axes.clone();
        axes[slot - 1] = interval;
        BoxDomain { axes }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.axes.len() && self.axes.iter().zip(point).all(|(a, &t)| a.contains(t))
    }

    /// Tensor grid with `per_axis` points on every axis, last axis varying fastest.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for axis in &self.axes {
            let ts = axis.grid(per_axis);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    ts.iter().map(move |&t| {
                        let mut p = prefix.clone();
                        p.push(t);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                if a.lo == a.hi {
                    a.lo
                } else {
                    rng.gen_range(a.lo..=a.hi)
                }
            })
            .collect()
    }
}

/// Checks that two expressions agree within `tol` on `samples` pseudo-random
/// points of `domain`, using [`DEFAULT_SEED`].
///
/// Points where both sides fail to evaluate are skipped; a point where only
/// one side fails makes the check fail.
pub fn equivalent_on(e1: &Expr, e2: &Expr, domain: &BoxDomain, samples: usize, tol: f64) -> bool {
    equivalent_on_seeded(e1, e2, domain, samples, tol, DEFAULT_SEED)
}

pub fn equivalent_on_seeded(
    e1: &Expr,
    e2: &Expr,
    domain: &BoxDomain,
    samples: usize,
    tol: f64,
    seed: u64,
) -> bool {
    if e1.arity() != e2.arity() || e1.arity() != domain.dim() {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).all(|_| {
        let x = domain.sample(&mut rng);
        match (e1.eval(&x), e2.eval(&x)) {
            (Ok(a), Ok(b)) => (a - b).abs() <= tol,
            (Err(_), Err(_)) => true,
            _ => false,
        }
    })
}

//! Partial inverses of multivariate functions.
//!
//! A function is invertible about slot `i` when every section
//! `t ↦ f(x₁,…,x_{i−1},t,x_{i+1},…,xₙ)` is a bijection onto its image. On an
//! interval that is the same as strict monotonicity, which is what the grid
//! probes here test. A passing verdict is evidence at the probed resolution,
//! not a proof: oscillation finer than the grid goes unnoticed.
//!
//! Functions that are not invertible are split along the axis at the
//! extrema of their sections, and every branch contributes its preimage, so
//! inverses here are multivalued.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{BoxDomain, Expr, Interval, Primitive, DEFAULT_TOL};
use crate::structure;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Largest number of fibers probed per call; the per-axis resolution is reduced to fit.
const FIBER_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseConfig {
    /// Points per axis for scans.
    pub grid: usize,
    /// Interval width at which bisection may stop once the residual is within tolerance.
    pub bisect_tol: f64,
    pub max_steps: usize,
    pub max_branches: usize,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            grid: 1024,
            bisect_tol: 1e-10,
            max_steps: 200,
            max_branches: 64,
        }
    }
}

/// Two distinct points of one section with equal values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// The full point with the probed slot set to `t1`.
    pub fiber: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvertVerdict {
    pub invertible: bool,
    pub witness: Option<Witness>,
    pub fibers_probed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub id: usize,
    pub interval: Interval,
    pub monotonicity: Monotonicity,
}

/// Decomposition of one axis into sub-intervals on which the function is invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseInverse {
    pub axis: usize,
    pub branches: Vec<Branch>,
    pub source: Expr,
    pub domain: BoxDomain,
}

/// Roots of a section equation, ascending, plus notes about skipped regions.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Roots {
    pub roots: Vec<f64>,
    pub warnings: Vec<String>,
}

fn section_point(fiber: &[f64], slot: usize, t: f64) -> Vec<f64> {
    let mut x = fiber.to_vec();
    x[slot - 1] = t;
    x
}

/// Inserts `t` at `slot` into the coordinates of the other slots.
fn with_slot(fixed: &[f64], slot: usize, t: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(fixed.len() + 1);
    x.extend_from_slice(&fixed[..slot - 1]);
    x.push(t);
    x.extend_from_slice(&fixed[slot - 1..]);
    x
}

/// Full points (slot `i` left at its axis lower bound) spanning the other axes.
fn fibers(d: &BoxDomain, slot: usize, grid: usize) -> Vec<Vec<f64>> {
    let others = d.dim().saturating_sub(1);
    let per_axis = if others <= 1 {
        grid
    } else {
        let fit = (FIBER_BUDGET as f64).powf(1.0 / others as f64).floor() as usize;
        grid.min(fit.max(3))
    };
    let mut out = vec![Vec::with_capacity(d.dim())];
    for (k, axis) in d.axes().iter().enumerate() {
        let values = if k + 1 == slot {
            vec![axis.lo]
        } else {
            axis.grid(per_axis)
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn check_slot_and_domain(f: &Expr, slot: usize, d: &BoxDomain) -> Result<()> {
    if slot == 0 || slot > f.arity() {
        return Err(Error::structural(format!(
            "slot {slot} is outside 1..={}",
            f.arity()
        )));
    }
    if d.dim() != f.arity() {
        return Err(Error::Config(format!(
            "domain has {} axes but the function has arity {}",
            d.dim(),
            f.arity()
        )));
    }
    Ok(())
}

impl InverseConfig {
    /// Bisects `g` on `[a, b]` where `ga` and `gb` have opposite signs.
    /// Returns the best point found and its residual.
    fn bisect(
        &self,
        g: &dyn Fn(f64) -> Result<f64>,
        mut a: f64,
        mut b: f64,
        mut ga: f64,
        tol: f64,
    ) -> Option<(f64, f64)> {
        let mut best = (a, ga);
        for _ in 0..self.max_steps {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let gm = g(mid).ok()?;
            if gm.abs() < best.1.abs() {
                best = (mid, gm);
            }
            if gm == 0.0 || (gm.abs() <= tol && b - a <= self.bisect_tol * mid.abs().max(1.0)) {
                return Some((mid, gm));
            }
            if (gm < 0.0) == (ga < 0.0) {
                a = mid;
                ga = gm;
            } else {
                b = mid;
            }
        }
        if let Ok(gb) = g(b) {
            if gb.abs() < best.1.abs() {
                best = (b, gb);
            }
        }
        Some(best)
    }

    /// Golden-section search for the minimum of `h` on `[a, b]`.
    fn golden_min(
        &self,
        h: &dyn Fn(f64) -> Result<f64>,
        mut a: f64,
        mut b: f64,
    ) -> Option<(f64, f64)> {
        let mut c = b - GOLDEN * (b - a);
        let mut d = a + GOLDEN * (b - a);
        let mut hc = h(c).ok()?;
        let mut hd = h(d).ok()?;
        for _ in 0..self.max_steps {
            if b - a <= self.bisect_tol * 1e-2 * c.abs().max(1.0) {
                break;
            }
            if hc < hd {
                b = d;
                d = c;
                hd = hc;
                c = b - GOLDEN * (b - a);
                hc = h(c).ok()?;
            } else {
                a = c;
                c = d;
                hc = hd;
                d = a + GOLDEN * (b - a);
                hd = h(d).ok()?;
            }
        }
        Some(if hc < hd { (c, hc) } else { (d, hd) })
    }

    /// All `t` in `axis` with `|g(t)| <= tol`: sign changes on the scan grid
    /// are bisected, and dips toward zero without a sign change are searched
    /// for tangential roots. Regions where `g` fails to evaluate are skipped
    /// and reported in the warnings.
    pub fn roots_of(&self, g: &dyn Fn(f64) -> Result<f64>, axis: Interval, tol: f64) -> Roots {
        let ts = axis.grid(self.grid.max(2));
        let vals: Vec<Option<f64>> = ts.iter().map(|&t| g(t).ok()).collect();
        let mut out = Roots::default();

        let mut k = 0;
        while k < ts.len() {
            if vals[k].is_none() {
                let start = k;
                while k < ts.len() && vals[k].is_none() {
                    k += 1;
                }
                let err = g(ts[start])
                    .err()
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                out.warnings
                    .push(format!("skipped [{}, {}]: {err}", ts[start], ts[k - 1]));
            } else {
                k += 1;
            }
        }

        let mut found: Vec<(f64, f64)> = Vec::new();
        for (k, v) in vals.iter().enumerate() {
            if let Some(v) = v {
                if v.abs() <= tol {
                    found.push((ts[k], *v));
                }
            }
        }
        for k in 0..ts.len().saturating_sub(1) {
            let (Some(a), Some(b)) = (vals[k], vals[k + 1]) else {
                continue;
            };
            if a.abs() <= tol || b.abs() <= tol || (a < 0.0) == (b < 0.0) {
                continue;
            }
            match self.bisect(g, ts[k], ts[k + 1], a, tol) {
                Some((t, r)) if r.abs() <= tol => found.push((t, r)),
                Some((t, r)) => out.warnings.push(format!(
                    "sign change near {t} without a root (residual {r:e})"
                )),
                None => out.warnings.push(format!(
                    "evaluation failed while refining [{}, {}]",
                    ts[k],
                    ts[k + 1]
                )),
            }
        }
        for k in 1..ts.len().saturating_sub(1) {
            let (Some(p), Some(v), Some(n)) = (vals[k - 1], vals[k], vals[k + 1]) else {
                continue;
            };
            let same_side = v.abs() > tol && (p < 0.0) == (v < 0.0) && (n < 0.0) == (v < 0.0);
            if !same_side || !(v.abs() < p.abs() && v.abs() <= n.abs()) {
                continue;
            }
            // dip toward zero: push the section further in the direction of zero
            let sign = v.signum();
            let h = |t: f64| g(t).map(|x| sign * x);
            let Some((tm, hm)) = self.golden_min(&h, ts[k - 1], ts[k + 1]) else {
                continue;
            };
            if hm.abs() <= tol {
                found.push((tm, sign * hm));
            } else if hm < 0.0 {
                for (lo, hi, glo) in [(ts[k - 1], tm, p), (tm, ts[k + 1], sign * hm)] {
                    if let Some((t, r)) = self.bisect(g, lo, hi, glo, tol) {
                        if r.abs() <= tol {
                            found.push((t, r));
                        }
                    }
                }
            }
        }

        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut roots: Vec<(f64, f64)> = Vec::with_capacity(found.len());
        for (t, r) in found {
            match roots.last_mut() {
                Some(last) if t - last.0 <= 10.0 * tol => {
                    if r.abs() < last.1.abs() {
                        *last = (t, r);
                    }
                }
                _ => roots.push((t, r)),
            }
        }
        out.roots = roots.into_iter().map(|(t, _)| t).collect();
        out
    }

    pub fn check_invertible(
        &self,
        f: &Expr,
        i: usize,
        d: &BoxDomain,
        grid: usize,
    ) -> Result<InvertVerdict> {
        check_slot_and_domain(f, i, d)?;
        if grid < 3 {
            return Err(Error::Config(
                "invertibility probes need at least 3 grid points".into(),
            ));
        }
        let axis = d.axis(i);
        let ts = axis.grid(grid);
        let fibers = fibers(d, i, grid);
        for (probed, fiber) in fibers.iter().enumerate() {
            let s = |t: f64| f.eval(&section_point(fiber, i, t));
            let vals = ts.iter().map(|&t| s(t)).collect::<Result<Vec<f64>>>()?;
            if let Some(w) = self.monotonicity_witness(&s, &ts, &vals) {
                let fiber = section_point(fiber, i, w.0);
                return Ok(InvertVerdict {
                    invertible: false,
                    witness: Some(Witness {
                        fiber,
                        t1: w.0,
                        t2: w.1,
                        v1: w.2,
                        v2: w.3,
                    }),
                    fibers_probed: probed + 1,
                });
            }
        }
        Ok(InvertVerdict {
            invertible: true,
            witness: None,
            fibers_probed: fibers.len(),
        })
    }

    /// First violation of strict monotonicity on a sampled section, as two
    /// points with (numerically) equal values.
    fn monotonicity_witness(
        &self,
        s: &dyn Fn(f64) -> Result<f64>,
        ts: &[f64],
        vals: &[f64],
    ) -> Option<(f64, f64, f64, f64)> {
        if ts.len() < 2 {
            return None;
        }
        for k in 0..ts.len() - 1 {
            if vals[k + 1] == vals[k] {
                return Some((ts[k], ts[k + 1], vals[k], vals[k + 1]));
            }
            if k == 0 {
                continue;
            }
            let before = vals[k] - vals[k - 1];
            let after = vals[k + 1] - vals[k];
            if (before > 0.0) == (after > 0.0) {
                continue;
            }
            // turning point at ts[k]: pick the neighbour value nearer the extreme as the level
            let peak = before > 0.0;
            let nearer_left = if peak {
                vals[k - 1] >= vals[k + 1]
            } else {
                vals[k - 1] <= vals[k + 1]
            };
            let level = if nearer_left {
                vals[k - 1]
            } else {
                vals[k + 1]
            };
            let g = |t: f64| s(t).map(|v| v - level);
            let tol = DEFAULT_TOL * level.abs().max(1.0);
            let (fixed_t, lo, hi) = if nearer_left {
                (ts[k - 1], ts[k], ts[k + 1])
            } else {
                (ts[k + 1], ts[k - 1], ts[k])
            };
            let other = if vals[k + 1] == vals[k - 1] {
                if nearer_left {
                    ts[k + 1]
                } else {
                    ts[k - 1]
                }
            } else {
                let glo = g(lo).ok()?;
                self.bisect(&g, lo, hi, glo, tol).map(|(t, _)| t)?
            };
            let (t1, t2) = if fixed_t < other {
                (fixed_t, other)
            } else {
                (other, fixed_t)
            };
            return Some((t1, t2, s(t1).ok()?, s(t2).ok()?));
        }
        None
    }

    /// Roots of `f(…, x_i = t, …) = target` for `t` in the domain's axis `i`.
    pub fn invert_at(
        &self,
        f: &Expr,
        i: usize,
        target: f64,
        fixed: &[f64],
        d: &BoxDomain,
        tol: f64,
    ) -> Result<Roots> {
        check_slot_and_domain(f, i, d)?;
        if fixed.len() + 1 != f.arity() {
            return Err(Error::Config(format!(
                "expected {} fixed values, got {}",
                f.arity() - 1,
                fixed.len()
            )));
        }
        let probe = with_slot(fixed, i, d.axis(i).lo);
        if !d.contains(&probe) {
            return Err(Error::Config(format!(
                "fixed values {fixed:?} lie outside the domain"
            )));
        }
        let g = |t: f64| f.eval(&with_slot(fixed, i, t)).map(|v| v - target);
        Ok(self.roots_of(&g, d.axis(i), tol))
    }

    pub fn piecewise_split(
        &self,
        f: &Expr,
        i: usize,
        d: &BoxDomain,
        grid: usize,
    ) -> Result<PiecewiseInverse> {
        check_slot_and_domain(f, i, d)?;
        if grid < 3 {
            return Err(Error::Config(
                "piecewise split needs at least 3 grid points".into(),
            ));
        }
        let axis = d.axis(i);
        let ts = axis.grid(grid);
        let fibers = fibers(d, i, grid);
        let mut splits = Vec::new();
        for fiber in &fibers {
            let s = |t: f64| f.eval(&section_point(fiber, i, t));
            let vals = ts.iter().map(|&t| s(t)).collect::<Result<Vec<f64>>>()?;
            splits.extend(self.section_extrema(&s, &ts, &vals)?);
            if splits.len() > self.max_branches * fibers.len() {
                break;
            }
        }
        splits.sort_by(f64::total_cmp);

        let spacing = axis.width() / (grid - 1) as f64;
        let edge = self.bisect_tol * axis.lo.abs().max(axis.hi.abs()).max(1.0);
        let mut cuts: Vec<f64> = Vec::new();
        for t in splits {
            if t - axis.lo <= edge || axis.hi - t <= edge {
                continue;
            }
            if cuts.last().is_none_or(|&c| t - c > 0.5 * spacing) {
                cuts.push(t);
            }
        }
        if cuts.len() + 1 > self.max_branches {
            return Err(Error::Degenerate(format!(
                "{} monotone pieces exceed the limit of {}",
                cuts.len() + 1,
                self.max_branches
            )));
        }

        let mut bounds = vec![axis.lo];
        bounds.extend(cuts);
        bounds.push(axis.hi);
        let first = &fibers[0];
        let mut branches = Vec::with_capacity(bounds.len() - 1);
        for (id, w) in bounds.windows(2).enumerate() {
            let interval = Interval { lo: w[0], hi: w[1] };
            let sub = d.with_axis(i, interval);
            let verdict = self.check_invertible(f, i, &sub, grid)?;
            if !verdict.invertible {
                return Err(Error::Degenerate(format!(
                    "piece {interval} of axis {i} is not monotone (extrema move between fibers?)"
                )));
            }
            let lo = f.eval(&section_point(first, i, interval.lo))?;
            let hi = f.eval(&section_point(first, i, interval.hi))?;
            branches.push(Branch {
                id,
                interval,
                monotonicity: if hi > lo {
                    Monotonicity::Increasing
                } else {
                    Monotonicity::Decreasing
                },
            });
        }
        Ok(PiecewiseInverse {
            axis: i,
            branches,
            source: f.clone(),
            domain: d.clone(),
        })
    }

    /// Locations of the turning points of one sampled section.
    fn section_extrema(
        &self,
        s: &dyn Fn(f64) -> Result<f64>,
        ts: &[f64],
        vals: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut last: Option<(usize, f64)> = None;
        let mut flat_run = 0;
        for k in 0..ts.len() - 1 {
            let diff = vals[k + 1] - vals[k];
            if diff == 0.0 {
                flat_run += 1;
                if flat_run >= 2 {
                    return Err(Error::Degenerate(format!(
                        "section is flat around {} (not piecewise invertible)",
                        ts[k]
                    )));
                }
                continue;
            }
            flat_run = 0;
            if let Some((start, prev)) = last {
                if (prev > 0.0) != (diff > 0.0) {
                    // extremum between ts[start] and ts[k + 1]
                    let sign = if prev > 0.0 { -1.0 } else { 1.0 };
                    let h = |t: f64| s(t).map(|v| sign * v);
                    let (t, _) = self.golden_min(&h, ts[start], ts[k + 1]).ok_or_else(|| {
                        Error::Degenerate("evaluation failed near an extremum".into())
                    })?;
                    out.push(t);
                }
            }
            last = Some((k, diff));
        }
        if last.is_none() {
            return Err(Error::Degenerate("section is constant".into()));
        }
        Ok(out)
    }
}

/// Grid probe of invertibility about slot `i` on `d`.
pub fn check_invertible(f: &Expr, i: usize, d: &BoxDomain, grid: usize) -> Result<InvertVerdict> {
    InverseConfig::default().check_invertible(f, i, d, grid)
}

/// Numeric partial inverse at one fiber: every `t` on axis `i` of `d` with `|f − target| <= tol`.
pub fn invert_at(
    f: &Expr,
    i: usize,
    target: f64,
    fixed: &[f64],
    d: &BoxDomain,
    tol: f64,
) -> Result<Roots> {
    InverseConfig::default().invert_at(f, i, target, fixed, d, tol)
}

pub fn piecewise_split(f: &Expr, i: usize, d: &BoxDomain, grid: usize) -> Result<PiecewiseInverse> {
    InverseConfig::default().piecewise_split(f, i, d, grid)
}

/// Smallest preimage in `range`; used when evaluating inverse nodes.
pub(crate) fn principal_root(
    inner: &Expr,
    slot: usize,
    target: f64,
    fixed: &[f64],
    range: (f64, f64),
) -> Result<f64> {
    let cfg = InverseConfig::default();
    let axis = Interval {
        lo: range.0,
        hi: range.1,
    };
    let g = |t: f64| inner.eval(&with_slot(fixed, slot, t)).map(|v| v - target);
    cfg.roots_of(&g, axis, DEFAULT_TOL)
        .roots
        .first()
        .copied()
        .ok_or_else(|| {
            Error::NoSolution(format!(
                "no preimage of {target} about slot {slot} in [{}, {}]",
                range.0, range.1
            ))
        })
}

/// Closed-form partial inverse of a primitive about slot `i`.
///
/// The result is binary; its slot `i` carries the output value `x₀` and its
/// other slot the remaining argument, e.g. the inverse of `pow` about slot 1
/// is `root(x₀, x₂)`.
pub fn invert_primitive(p: Primitive, i: usize) -> Result<Expr> {
    let prim = Expr::prim;
    let swapped = |q: Primitive| Expr::lift(prim(q), 2, vec![2, 1]);
    let negate = |slot: usize| {
        // (-1)·u_other, written as mul with one argument pinned
        let pinned = if slot == 2 { 1 } else { 2 };
        structure::compose_at(&prim(Primitive::Mul), pinned, &Expr::constant(-1.0))
    };
    match (p, i) {
        (Primitive::Identity, 1) => Ok(prim(Primitive::Identity)),
        // x1 = x0 - x2
        (Primitive::Add, 1) => structure::compose_at(&prim(Primitive::Add), 2, &negate(2)?),
        // x2 = x0 - x1
        (Primitive::Add, 2) => structure::compose_at(&swapped(Primitive::Add)?, 1, &negate(1)?),
        (Primitive::Mul, 1) => Ok(prim(Primitive::Div)),
        (Primitive::Mul, 2) => swapped(Primitive::Div),
        // x1 = x0·x2
        (Primitive::Div, 1) => Ok(prim(Primitive::Mul)),
        // x2 = x1/x0
        (Primitive::Div, 2) => Ok(prim(Primitive::Div)),
        (Primitive::Pow, 1) => Ok(prim(Primitive::Root)),
        // x2 = log_{x1}(x0)
        (Primitive::Pow, 2) => swapped(Primitive::Log),
        // x1 = x0^x2
        (Primitive::Root, 1) => Ok(prim(Primitive::Pow)),
        // x2 = log_{x0}(x1)
        (Primitive::Root, 2) => Ok(prim(Primitive::Log)),
        // x1 = x2^x0
        (Primitive::Log, 1) => swapped(Primitive::Pow),
        // x2 = x1^(1/x0)
        (Primitive::Log, 2) => Ok(prim(Primitive::Root)),
        _ => Err(Error::Unsupported(format!(
            "no closed-form inverse of {p} about slot {i}; use the numeric inverse"
        ))),
    }
}

/// Callable realization of the partial inverse about slot `i` over `d`.
#[derive(Debug, Clone)]
pub struct InverseFn {
    f: Expr,
    slot: usize,
    domain: BoxDomain,
    cfg: InverseConfig,
    tol: f64,
    /// Precomputed split when the function is unary (there is only one fiber).
    split: Option<PiecewiseInverse>,
    split_error: Option<String>,
}

pub fn inverse_fn(f: &Expr, i: usize, d: &BoxDomain) -> Result<InverseFn> {
    InverseFn::new(f, i, d, InverseConfig::default(), DEFAULT_TOL)
}

impl InverseFn {
    pub fn new(f: &Expr, i: usize, d: &BoxDomain, cfg: InverseConfig, tol: f64) -> Result<Self> {
        check_slot_and_domain(f, i, d)?;
        let (split, split_error) = if f.arity() == 1 {
            match cfg.piecewise_split(f, i, d, cfg.grid) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        Ok(InverseFn {
            f: f.clone(),
            slot: i,
            domain: d.clone(),
            cfg,
            tol,
            split,
            split_error,
        })
    }

    pub fn arity(&self) -> usize {
        self.f.arity()
    }

    /// The cached branch decomposition of a unary function, if it could be computed.
    pub fn branches(&self) -> Option<&PiecewiseInverse> {
        self.split.as_ref()
    }

    /// Evaluates the inverse at `args`, whose slot `i` holds the target value
    /// and whose other slots hold the remaining coordinates. Returns every
    /// preimage over all branches.
    pub fn call(&self, args: &[f64]) -> Result<Roots> {
        if args.len() != self.f.arity() {
            return Err(Error::structural(format!(
                "inverse of an arity-{} function called with {} arguments",
                self.f.arity(),
                args.len()
            )));
        }
        let i = self.slot;
        let target = args[i - 1];
        let fixed: Vec<f64> = args
            .iter()
            .enumerate()
            .filter(|&(k, _)| k + 1 != i)
            .map(|(_, &v)| v)
            .collect();
        let axis = self.domain.axis(i);
        let probe = with_slot(&fixed, i, axis.lo);
        if !self.domain.contains(&probe) {
            return Err(Error::Config(format!(
                "coordinates {fixed:?} lie outside the domain"
            )));
        }

        let mut out = Roots::default();
        let local;
        let (pieces, note) = match &self.split {
            Some(s) => (Some(s), None),
            None if self.f.arity() == 1 => (None, self.split_error.clone()),
            None => {
                let fiber_box = BoxDomain::new(
                    probe
                        .iter()
                        .zip(self.domain.axes())
                        .enumerate()
                        .map(|(k, (&v, a))| {
                            if k + 1 == i {
                                *a
                            } else {
                                Interval { lo: v, hi: v }
                            }
                        })
                        .collect(),
                );
                match self
                    .cfg
                    .piecewise_split(&self.f, i, &fiber_box, self.cfg.grid)
                {
                    Ok(s) => {
                        local = s;
                        (Some(&local), None)
                    }
                    Err(e) => (None, Some(e.to_string())),
                }
            }
        };
        if let Some(note) = note {
            out.warnings.push(format!(
                "no branch decomposition ({note}); scanned the whole axis"
            ));
        }
        let intervals: Vec<Interval> = match pieces {
            Some(p) => p.branches.iter().map(|b| b.interval).collect(),
            None => vec![axis],
        };
        let g = |t: f64| self.f.eval(&with_slot(&fixed, i, t)).map(|v| v - target);
        let mut all = Vec::new();
        for interval in intervals {
            let r = self.cfg.roots_of(&g, interval, self.tol);
            all.extend(r.roots);
            out.warnings.extend(r.warnings);
        }
        all.sort_by(f64::total_cmp);
        all.dedup_by(|b, a| *b - *a <= 10.0 * self.tol);
        out.roots = all;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::compile;

    fn square() -> Expr {
        compile("pow(x,2)")
    }

    #[test]
    fn cubic_plus_square_verdicts() {
        let f = compile("add(pow(x,3),pow(y,2))");
        let d = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let v = check_invertible(&f, 1, &d, 64).unwrap();
        assert!(v.invertible);
        assert!(v.witness.is_none());

        let v = check_invertible(&f, 2, &d, 64).unwrap();
        assert!(!v.invertible);
        let w = v.witness.unwrap();
        assert!(w.t1 < 0.0 && w.t2 > 0.0, "{w:?}");
        assert!((w.t1 + w.t2).abs() < 1e-6);
        let mut p1 = w.fiber.clone();
        p1[1] = w.t1;
        let mut p2 = w.fiber.clone();
        p2[1] = w.t2;
        assert!((f.eval(&p1).unwrap() - f.eval(&p2).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn pow_invertible_in_base() {
        let pow = Expr::prim(Primitive::Pow);
        let d = BoxDomain::cube(2, 2.0, 3.0).unwrap();
        assert!(check_invertible(&pow, 1, &d, 64).unwrap().invertible);
        assert!(check_invertible(&pow, 2, &d, 64).unwrap().invertible);
    }

    #[test]
    fn probe_errors_propagate() {
        let log = Expr::prim(Primitive::Log);
        let d = BoxDomain::cube(2, -1.0, 3.0).unwrap();
        assert_eq!(
            check_invertible(&log, 1, &d, 8).unwrap_err().kind(),
            "domain"
        );
        assert!(check_invertible(&log, 1, &d, 2).is_err());
    }

    #[test]
    fn invert_at_examples() {
        let d = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let r = invert_at(&square(), 1, 0.25, &[], &d, 1e-9).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!((r.roots[0] + 0.5).abs() < 1e-9 && (r.roots[1] - 0.5).abs() < 1e-9);

        let pow = Expr::prim(Primitive::Pow);
        let d = BoxDomain::from_bounds(&[(0.0, 5.0), (2.0, 2.0)]).unwrap();
        let r = invert_at(&pow, 1, 9.0, &[2.0], &d, 1e-9).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 3.0).abs() < 1e-9);

        let f = compile("add(pow(x,3),pow(y,2))");
        let d = BoxDomain::from_bounds(&[(-3.0, 3.0), (-1.0, 1.0)]).unwrap();
        let r = invert_at(&f, 1, -8.0, &[0.0], &d, 1e-9).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn invert_at_tangent_and_empty() {
        let d = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let r = invert_at(&square(), 1, 0.0, &[], &d, 1e-9).unwrap();
        assert_eq!(r.roots.len(), 1, "{r:?}");
        assert!(r.roots[0].abs() < 1e-4);
        let r = invert_at(&square(), 1, -1.0, &[], &d, 1e-9).unwrap();
        assert!(r.roots.is_empty());
    }

    #[test]
    fn invert_at_skips_undefined_regions() {
        // log(x, 2) = 1 on [-1, 4]: the negative half is skipped with a warning
        let f = compile("log(x,2)");
        let d = BoxDomain::cube(1, -1.0, 4.0).unwrap();
        let r = invert_at(&f, 1, 1.0, &[], &d, 1e-9).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 2.0).abs() < 1e-9);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn invert_at_ignores_poles() {
        let f = compile("div(1,x)");
        let d = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let r = invert_at(&f, 1, 0.0, &[], &d, 1e-9).unwrap();
        assert!(r.roots.is_empty(), "{r:?}");
    }

    #[test]
    fn invert_at_rejects_fixed_outside_domain() {
        let pow = Expr::prim(Primitive::Pow);
        let d = BoxDomain::cube(2, 1.0, 2.0).unwrap();
        assert_eq!(
            invert_at(&pow, 1, 2.0, &[5.0], &d, 1e-9)
                .unwrap_err()
                .kind(),
            "config"
        );
    }

    #[test]
    fn split_square() {
        let d = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let p = piecewise_split(&square(), 1, &d, 1024).unwrap();
        assert_eq!(p.branches.len(), 2);
        assert_eq!(p.branches[0].monotonicity, Monotonicity::Decreasing);
        assert_eq!(p.branches[1].monotonicity, Monotonicity::Increasing);
        assert_eq!(p.branches[0].interval.lo, -1.0);
        assert_eq!(p.branches[1].interval.hi, 1.0);
        assert_eq!(p.branches[0].interval.hi, p.branches[1].interval.lo);
        assert!(p.branches[0].interval.hi.abs() < 1e-6);
    }

    #[test]
    fn split_cube_is_single_branch() {
        let d = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let p = piecewise_split(&compile("pow(x,3)"), 1, &d, 1024).unwrap();
        assert_eq!(p.branches.len(), 1);
        assert_eq!(p.branches[0].monotonicity, Monotonicity::Increasing);
    }

    #[test]
    fn split_constant_is_degenerate() {
        let c = Expr::lift(Expr::constant(1.0), 1, vec![]).unwrap();
        let d = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        assert_eq!(
            piecewise_split(&c, 1, &d, 16).unwrap_err().kind(),
            "degenerate"
        );
    }

    #[test]
    fn split_respects_branch_limit() {
        let cfg = InverseConfig {
            max_branches: 2,
            ..InverseConfig::default()
        };
        // x^3 - x has three monotone pieces on [-2, 2]
        let f = compile("add(pow(x,3),mul(-1,x))");
        let f = Expr::diagonal(f, 2, 1).unwrap();
        let d = BoxDomain::cube(1, -2.0, 2.0).unwrap();
        assert_eq!(
            cfg.piecewise_split(&f, 1, &d, 256).unwrap_err().kind(),
            "degenerate"
        );
    }

    #[test]
    fn primitive_inverses_match_definitions() {
        let cases: [(Primitive, usize, [f64; 2]); 12] = [
            (Primitive::Add, 1, [1.5, -0.25]),
            (Primitive::Add, 2, [1.5, -0.25]),
            (Primitive::Mul, 1, [1.5, -0.25]),
            (Primitive::Mul, 2, [1.5, -0.25]),
            (Primitive::Div, 1, [1.5, -0.25]),
            (Primitive::Div, 2, [1.5, -0.25]),
            (Primitive::Pow, 1, [2.0, 3.0]),
            (Primitive::Pow, 2, [2.0, 3.0]),
            (Primitive::Root, 1, [27.0, 3.0]),
            (Primitive::Root, 2, [27.0, 3.0]),
            (Primitive::Log, 1, [8.0, 2.0]),
            (Primitive::Log, 2, [8.0, 2.0]),
        ];
        for (p, i, x) in cases {
            let x0 = p.apply(&x).unwrap();
            let inv = invert_primitive(p, i).unwrap();
            let mut args = x;
            args[i - 1] = x0;
            let back = inv.eval(&args).unwrap();
            assert!(
                (back - x[i - 1]).abs() < 1e-12,
                "{p} about {i}: {back} vs {}",
                x[i - 1]
            );
        }
        assert_eq!(
            invert_primitive(Primitive::Pow, 1).unwrap(),
            Expr::prim(Primitive::Root)
        );
        assert_eq!(
            crate::frontend::format(&invert_primitive(Primitive::Pow, 2).unwrap()),
            "A2_{2,1}(log)"
        );
        assert_eq!(
            invert_primitive(Primitive::Identity, 2).unwrap_err().kind(),
            "unsupported"
        );
    }

    #[test]
    fn inverse_fn_examples() {
        let pow = Expr::prim(Primitive::Pow);
        let d = BoxDomain::cube(2, 0.5, 10.0).unwrap();
        let inv = inverse_fn(&pow, 1, &d).unwrap();
        let r = inv.call(&[27.0, 3.0]).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 3.0).abs() < 1e-9);

        let xx = Expr::diagonal(pow, 1, 2).unwrap();
        let inv = inverse_fn(&xx, 1, &BoxDomain::cube(1, 1.0, 4.0).unwrap()).unwrap();
        let r = inv.call(&[27.0]).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 3.0).abs() < 1e-9);

        let inv = inverse_fn(&square(), 1, &BoxDomain::cube(1, -1.0, 1.0).unwrap()).unwrap();
        assert_eq!(inv.branches().unwrap().branches.len(), 2);
        let r = inv.call(&[0.25]).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!((r.roots[0] + 0.5).abs() < 1e-9 && (r.roots[1] - 0.5).abs() < 1e-9);
        let r = inv.call(&[0.0]).unwrap();
        assert_eq!(r.roots.len(), 1, "{r:?}");
    }

    #[test]
    fn inverse_node_evaluates_to_principal_root() {
        let sq = square();
        let node = Expr::inverse(sq, 1, (-1.0, 1.0)).unwrap();
        assert!((node.eval(&[0.25]).unwrap() + 0.5).abs() < 1e-9);
        assert_eq!(node.eval(&[4.0]).unwrap_err().kind(), "no-solution");
    }
}

//! Numerical superposition representation
//! `f(x) ≈ Σ_{q=0}^{2n} Φ_q(Σ_{p=1}^{n} ψ_{q,p}(x_p))` on the unit box.
//!
//! The inner functions are fixed and do not depend on `f`. The base map ψ
//! sends the binary digits `b_k` of a dyadic grid point to `Σ b_k·3·4^{-k}`,
//! is linear between grid points, and satisfies `ψ(t + 1) = ψ(t) + 1`.
//! Each `ψ_{q,p}(x) = λ_p·ψ(x + q·ε)`. The outer functions are sampled on a
//! uniform knot grid and fitted by damped residual averaging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BoxDomain, Expr, Primitive};
use crate::structure;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerParams {
    pub n: usize,
    /// Truncation depth of the digit series.
    pub depth: u32,
    /// Weight of binary digit `k` (1-based).
    pub weights: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub shift: f64,
}

impl InnerParams {
    pub fn standard(n: usize) -> Result<Self> {
        Self::with_depth(n, 10)
    }

    pub fn with_depth(n: usize, depth: u32) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::Config(format!(
                "superposition supports 1 to 3 variables, got {n}"
            )));
        }
        if !(1..=24).contains(&depth) {
            return Err(Error::Config(format!(
                "series depth must be in 1..=24, got {depth}"
            )));
        }
        let weights = (1..=depth).map(|k| 3.0 * 0.25f64.powi(k as i32)).collect();
        let lambdas = [1.0, std::f64::consts::SQRT_2 - 1.0, 3f64.sqrt() - 1.0][..n].to_vec();
        Ok(InnerParams {
            n,
            depth,
            weights,
            lambdas,
            shift: 1.0 / (2 * n + 2) as f64,
        })
    }

    pub fn terms(&self) -> usize {
        2 * self.n + 1
    }

    /// Value of the truncated digit series at dyadic index `j`.
    fn series(&self, j: u64) -> f64 {
        if j >= 1 << self.depth {
            return 1.0;
        }
        self.weights
            .iter()
            .enumerate()
            .filter(|(k, _)| (j >> (self.depth as usize - 1 - k)) & 1 == 1)
            .map(|(_, w)| w)
            .sum()
    }

    /// The base map ψ on the whole real line.
    pub fn psi(&self, t: f64) -> f64 {
        let whole = t.floor();
        let scaled = (t - whole) * (1u64 << self.depth) as f64;
        let j = scaled.floor();
        let frac = scaled - j;
        let j = j as u64;
        let a = self.series(j);
        let b = self.series(j + 1);
        whole + a + frac * (b - a)
    }

    pub fn inner(&self, q: usize, p: usize, x: f64) -> Result<f64> {
        if q >= self.terms() || p == 0 || p > self.n {
            return Err(Error::Config(format!(
                "inner function index ({q}, {p}) out of range for n = {}",
                self.n
            )));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain {
                node: format!("psi_{q},{p}"),
                args: vec![x],
                reason: "inner functions are defined on [0, 1]; rescale the domain first",
                point: vec![],
            });
        }
        Ok(self.lambdas[p - 1] * self.psi(x + q as f64 * self.shift))
    }

    /// `Σ_p ψ_{q,p}(x_p)`.
    pub fn inner_sum(&self, q: usize, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Config(format!(
                "expected a point of dimension {}, got {}",
                self.n,
                x.len()
            )));
        }
        x.iter()
            .enumerate()
            .map(|(p, &v)| self.inner(q, p + 1, v))
            .sum::<Result<f64>>()
            .map_err(|e| e.at_point(x))
    }

    /// Range of `inner_sum(q, ·)` over the unit box.
    pub fn inner_range(&self, q: usize) -> (f64, f64) {
        let total: f64 = self.lambdas.iter().sum();
        let lo = total * self.psi(q as f64 * self.shift);
        (lo, lo + total)
    }
}

/// `ψ_{q,p}(x)` of the two-variable family.
pub fn inner_psi(q: usize, p: usize, x: f64) -> Result<f64> {
    InnerParams::standard(2)?.inner(q, p, x)
}

/// Outer function sampled on uniform knots over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFunction {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl OuterFunction {
    pub fn zero(lo: f64, hi: f64, knots: usize) -> Self {
        OuterFunction {
            lo,
            hi,
            values: vec![0.0; knots],
        }
    }

    fn position(&self, z: f64) -> f64 {
        (z - self.lo) / (self.hi - self.lo) * (self.values.len() - 1) as f64
    }

    /// Interpolated value and whether `z` had to be clamped into the knot range.
    pub fn eval(&self, z: f64) -> (f64, bool) {
        let last = (self.values.len() - 1) as f64;
        let pos = self.position(z);
        let slack = 1e-9 * last;
        let clamped = pos < -slack || pos > last + slack;
        let pos = pos.clamp(0.0, last);
        let k = (pos.floor() as usize).min(self.values.len().saturating_sub(2));
        let frac = pos - k as f64;
        let v = if self.values.len() == 1 {
            self.values[0]
        } else {
            self.values[k] + frac * (self.values[k + 1] - self.values[k])
        };
        (v, clamped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KstRep {
    pub version: u32,
    pub n: usize,
    pub inner_params: InnerParams,
    pub outer: Vec<OuterFunction>,
    pub iterations: usize,
    pub grid: usize,
    pub damping: f64,
    /// `history[0]` is `max|f|` on the training grid; `history[k]` the
    /// max-norm residual after `k` iterations.
    pub history: Vec<f64>,
}

impl KstRep {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("representation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("not a JSON document: {e}")))?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "representation version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Format("missing representation version".into())),
        }
        let rep: KstRep = serde_json::from_value(value)
            .map_err(|e| Error::Format(format!("malformed representation: {e}")))?;
        rep.validate()?;
        Ok(rep)
    }

    fn validate(&self) -> Result<()> {
        let expected = InnerParams::with_depth(self.n, self.inner_params.depth)
            .map_err(|e| Error::Format(e.to_string()))?;
        if self.inner_params != expected {
            return Err(Error::Format(
                "inner parameters do not match the built-in family".into(),
            ));
        }
        if self.outer.len() != 2 * self.n + 1 {
            return Err(Error::Format(format!(
                "expected {} outer functions, found {}",
                2 * self.n + 1,
                self.outer.len()
            )));
        }
        for o in &self.outer {
            if o.values.len() < 2 || o.lo.is_nan() || o.hi.is_nan() || o.hi <= o.lo {
                return Err(Error::Format(
                    "outer function needs two knots over a proper range".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn final_residual(&self) -> f64 {
        *self.history.last().expect("history starts with max|f|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub value: f64,
    /// Inner sums that fell outside an outer function's knot range.
    pub clamped: usize,
}

pub fn reconstruct(rep: &KstRep, x: &[f64]) -> Result<Reconstruction> {
    let mut value = 0.0;
    let mut clamped = 0;
    for (q, outer) in rep.outer.iter().enumerate() {
        let z = rep.inner_params.inner_sum(q, x)?;
        let (v, c) = outer.eval(z);
        value += v;
        clamped += usize::from(c);
    }
    Ok(Reconstruction { value, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KstConfig {
    pub grid: usize,
    pub iters: usize,
    pub knots: usize,
    pub damping: f64,
    pub depth: u32,
}

impl Default for KstConfig {
    fn default() -> Self {
        KstConfig {
            grid: 33,
            iters: 50,
            knots: 4096,
            damping: 0.5,
            depth: 10,
        }
    }
}

pub fn decompose(f: &Expr, grid: usize, iters: usize) -> Result<KstRep> {
    decompose_with(
        f,
        &KstConfig {
            grid,
            iters,
            ..KstConfig::default()
        },
    )
}

/// Fits the outer functions on a `grid^n` lattice of the unit box.
///
/// Every iteration bins the current residual by inner-sum value, separately
/// for each `q`. The correction added to `Φ_q` at a knot is the global mean
/// residual plus the damped deviation of that knot's bin mean from it,
/// shared equally among the `2n+1` terms; knots with empty bins are
/// interpolated from their occupied neighbours.
pub fn decompose_with(f: &Expr, cfg: &KstConfig) -> Result<KstRep> {
    let n = f.arity();
    let inner = InnerParams::with_depth(n, cfg.depth)?;
    if cfg.grid < 2 {
        return Err(Error::Config(
            "training grid needs at least 2 points per axis".into(),
        ));
    }
    if cfg.knots < 2 {
        return Err(Error::Config(
            "outer functions need at least 2 knots".into(),
        ));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::Config(format!(
            "damping {} is outside (0, 1]",
            cfg.damping
        )));
    }
    let points = BoxDomain::unit(n).lattice(cfg.grid);
    let values = points
        .iter()
        .map(|x| f.eval(x))
        .collect::<Result<Vec<f64>>>()?;
    let terms = inner.terms();
    let sums: Vec<Vec<f64>> = (0..terms)
        .map(|q| {
            points
                .iter()
                .map(|x| inner.inner_sum(q, x))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut outer: Vec<OuterFunction> = (0..terms)
        .map(|q| {
            let (lo, hi) = inner.inner_range(q);
            OuterFunction::zero(lo, hi, cfg.knots)
        })
        .collect();
    let bins: Vec<Vec<usize>> = sums
        .iter()
        .zip(&outer)
        .map(|(zs, o)| {
            zs.iter()
                .map(|&z| (o.position(z).round().max(0.0) as usize).min(cfg.knots - 1))
                .collect()
        })
        .collect();

    let residuals = |outer: &[OuterFunction]| -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                v - outer
                    .iter()
                    .zip(&sums)
                    .map(|(o, zs)| o.eval(zs[k]).0)
                    .sum::<f64>()
            })
            .collect()
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut r = residuals(&outer);
    let mut history = vec![max_abs(&r)];
    for _ in 0..cfg.iters {
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        for (o, bin) in outer.iter_mut().zip(&bins) {
            let mut total = vec![0.0; cfg.knots];
            let mut count = vec![0usize; cfg.knots];
            for (&b, &res) in bin.iter().zip(&r) {
                total[b] += res;
                count[b] += 1;
            }
            let occupied: Vec<(usize, f64)> = (0..cfg.knots)
                .filter(|&b| count[b] > 0)
                .map(|b| {
                    let bin_mean = total[b] / count[b] as f64;
                    (b, (mean + cfg.damping * (bin_mean - mean)) / terms as f64)
                })
                .collect();
            fill_between(&occupied, &mut o.values);
        }
        r = residuals(&outer);
        history.push(max_abs(&r));
    }
    Ok(KstRep {
        version: FORMAT_VERSION,
        n,
        inner_params: inner,
        outer,
        iterations: cfg.iters,
        grid: cfg.grid,
        damping: cfg.damping,
        history,
    })
}

/// Adds the piecewise-linear interpolant of `points` (constant beyond the ends) to `values`.
fn fill_between(points: &[(usize, f64)], values: &mut [f64]) {
    let Some(&(first, v0)) = points.first() else {
        return;
    };
    for v in &mut values[..first] {
        *v += v0;
    }
    for w in points.windows(2) {
        let ((a, va), (b, vb)) = (w[0], w[1]);
        for (k, v) in values[a..b].iter_mut().enumerate() {
            let t = k as f64 / (b - a) as f64;
            *v += va + t * (vb - va);
        }
    }
    let &(last, vl) = points.last().expect("non-empty");
    for v in &mut values[last..] {
        *v += vl;
    }
}

/// Root-mean-square reconstruction error on the cell centres of an `m^n` grid.
pub fn offset_grid_rmse(rep: &KstRep, f: &Expr, m: usize) -> Result<f64> {
    let pts: Vec<Vec<f64>> = BoxDomain::unit(rep.n)
        .lattice(m)
        .into_iter()
        .map(|x| {
            x.iter()
                .map(|&v| (v * (m - 1) as f64 + 0.5) / m as f64)
                .collect()
        })
        .collect();
    rmse_on(rep, f, &pts)
}

/// Root-mean-square reconstruction error on `samples` seeded uniform points.
pub fn sampled_rmse(rep: &KstRep, f: &Expr, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = BoxDomain::unit(rep.n);
    let pts: Vec<Vec<f64>> = (0..samples).map(|_| d.sample(&mut rng)).collect();
    rmse_on(rep, f, &pts)
}

fn rmse_on(rep: &KstRep, f: &Expr, pts: &[Vec<f64>]) -> Result<f64> {
    if f.arity() != rep.n {
        return Err(Error::Config(format!(
            "function has arity {} but the representation has dimension {}",
            f.arity(),
            rep.n
        )));
    }
    let mut sq = 0.0;
    for x in pts {
        let e = reconstruct(rep, x)?.value - f.eval(x)?;
        sq += e * e;
    }
    Ok((sq / pts.len().max(1) as f64).sqrt())
}

/// Pre-composes `f` with the affine map sending `[0,1]^n` onto `d`.
pub fn rescale(f: &Expr, d: &BoxDomain) -> Result<Expr> {
    let n = f.arity();
    if d.dim() != n {
        return Err(Error::Config(format!(
            "box has {} axes but the function has arity {n}",
            d.dim()
        )));
    }
    let mut out = f.clone();
    for (k, axis) in d.axes().iter().enumerate() {
        let slot = k + 1;
        let width = axis.width();
        if width.is_nan() || width <= 0.0 {
            return Err(Error::structural(format!(
                "axis {slot} has zero width; cannot rescale"
            )));
        }
        if axis.lo == 0.0 && width == 1.0 {
            continue;
        }
        let mut affine = Expr::prim(Primitive::Identity);
        if width != 1.0 {
            affine = structure::substitute_const(&Expr::prim(Primitive::Mul), 1, width)?;
        }
        if axis.lo != 0.0 {
            let shift = structure::substitute_const(&Expr::prim(Primitive::Add), 1, axis.lo)?;
            affine = structure::compose_at(&shift, 1, &affine)?;
        }
        let lifted = if n == 1 {
            affine
        } else {
            structure::lift(&affine, n, &[slot])?
        };
        out = structure::compose_at(&out, slot, &lifted)?;
    }
    Ok(out)
}

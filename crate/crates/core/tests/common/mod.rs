//! Helpers shared by the integration tests: independent evaluators, random
//! syntax trees and a brute-force root finder.

#![allow(dead_code)]

use mvfa_core::frontend::{self, PointfulAst};
use mvfa_core::{Expr, Primitive};
use rand::Rng;

/// Structural form of pointful text and the symbol read by each slot.
pub fn compile(text: &str) -> (Expr, Vec<String>) {
    let form = frontend::to_structural(&frontend::parse(text).unwrap()).unwrap();
    (form.expr, form.binding)
}

pub fn expr(text: &str) -> Expr {
    compile(text).0
}

/// Plain floating-point semantics of the primitives, written out independently.
pub fn apply(p: Primitive, x: f64, y: f64) -> Option<f64> {
    let v = match p {
        Primitive::Add => x + y,
        Primitive::Mul => x * y,
        Primitive::Div => {
            if y == 0.0 {
                return None;
            }
            x / y
        }
        Primitive::Pow => {
            if x < 0.0 && y.fract() != 0.0 {
                return None;
            }
            x.powf(y)
        }
        Primitive::Root => {
            if y == 0.0 || x < 0.0 {
                return None;
            }
            x.powf(1.0 / y)
        }
        Primitive::Log => {
            if x <= 0.0 || y <= 0.0 || y == 1.0 {
                return None;
            }
            x.ln() / y.ln()
        }
        Primitive::Identity => x,
    };
    v.is_finite().then_some(v)
}

/// Evaluates an AST reading every symbol occurrence from `slots`, left to right.
pub fn eval_occurrences(ast: &PointfulAst, slots: &[f64]) -> Option<f64> {
    fn go(ast: &PointfulAst, slots: &[f64], next: &mut usize) -> Option<f64> {
        match ast {
            PointfulAst::Const(c) => Some(*c),
            PointfulAst::Symbol(_) => {
                *next += 1;
                Some(slots[*next - 1])
            }
            PointfulAst::Call(p, a, b) => {
                // both sides are walked so slot numbering stays aligned even on failure
                let a = go(a, slots, next);
                let b = go(b, slots, next);
                apply(*p, a?, b?)
            }
        }
    }
    let mut next = 0;
    go(ast, slots, &mut next)
}

/// Random AST with at most `depth` nested calls over the given symbols and
/// primitives; leaves are symbols, or small constants with probability `p_const`.
pub fn random_ast(
    rng: &mut impl Rng,
    depth: usize,
    symbols: &[&str],
    prims: &[Primitive],
    p_const: f64,
) -> PointfulAst {
    if depth == 0 || rng.gen_bool(0.3) {
        if rng.gen_bool(p_const) {
            let c = f64::from(rng.gen_range(1..=6)) * 0.5;
            return PointfulAst::Const(c);
        }
        return PointfulAst::Symbol(symbols[rng.gen_range(0..symbols.len())].to_string());
    }
    let p = prims[rng.gen_range(0..prims.len())];
    PointfulAst::Call(
        p,
        Box::new(random_ast(rng, depth - 1, symbols, prims, p_const)),
        Box::new(random_ast(rng, depth - 1, symbols, prims, p_const)),
    )
}

/// Every root of `g` on `[lo, hi]`: a uniform scan with `n` points, sign
/// changes refined by plain bisection to float resolution, plus scan points
/// where `g` vanishes exactly.
pub fn dense_scan_roots(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ts: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let vs: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        if vs[k] == 0.0 {
            roots.push(ts[k]);
        }
        if k + 1 < n && vs[k] != 0.0 && vs[k + 1] != 0.0 && (vs[k] < 0.0) != (vs[k + 1] < 0.0) {
            let (mut a, mut b, mut ga) = (ts[k], ts[k + 1], vs[k]);
            loop {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let gm = g(m);
                if (gm < 0.0) == (ga < 0.0) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    roots
}

/// Seeded uniform points in a box.
pub fn sample_points(rng: &mut impl Rng, bounds: &[(f64, f64)], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect()
        })
        .collect()
}

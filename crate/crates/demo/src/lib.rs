//! Browser bindings for the equation solver and the superposition fitter.
//!
//! Every export takes plain strings and numbers and returns a JSON document,
//! either the result or `{"error": {"kind", "message"}}`. The page in `www/`
//! draws the results on a canvas.

use std::collections::BTreeMap;

use mvfa_core::inverse::{self, InverseConfig};
use mvfa_core::kst::{self, KstConfig};
use mvfa_core::solver::{self, Equation};
use mvfa_core::{frontend, structure, BoxDomain, Error, Expr, Interval, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const CURVE_SAMPLES: usize = 400;
const HEATMAP_SIDE: usize = 48;
const HELD_OUT_SEED: u64 = 7;

fn respond(result: Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({"error": {"kind": e.kind(), "message": e.to_string()}}).to_string(),
    }
}

fn parse_params(text: &str) -> Result<BTreeMap<String, f64>> {
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("parameters must be a JSON object of numbers: {e}")))
}

fn equation(text: &str, params: &str, lo: f64, hi: f64) -> Result<Equation> {
    Equation::parse(text, &parse_params(params)?, Interval::new(lo, hi)?)
}

/// Left side with every parameter bound, as a function of the unknown alone.
fn bound_lhs(eq: &Equation) -> Result<Expr> {
    let c = solver::collapse_unknowns(eq)?;
    solver::bind_params(&c.expr, &c.binding, &eq.params)
}

/// Evenly spaced samples; points outside the natural domain become `null`.
fn curve(f: &Expr, lo: f64, hi: f64) -> Value {
    let xs: Vec<f64> = (0..CURVE_SAMPLES)
        .map(|k| lo + (hi - lo) * k as f64 / (CURVE_SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<Option<f64>> = xs.iter().map(|&x| f.eval(&[x]).ok()).collect();
    json!({"x": xs, "y": ys})
}

fn solve_doc(text: &str, params: &str, lo: f64, hi: f64) -> Result<Value> {
    let eq = equation(text, params, lo, hi)?;
    let report = solver::solve(&eq)?;
    let f = bound_lhs(&eq)?;
    let mut doc = report.to_json();
    doc["target"] = json!(eq.rhs);
    doc["curve"] = curve(&f, lo, hi);
    Ok(doc)
}

fn branches_doc(text: &str, params: &str, lo: f64, hi: f64) -> Result<Value> {
    let eq = equation(text, params, lo, hi)?;
    let f = bound_lhs(&eq)?;
    let d = BoxDomain::new(vec![eq.domain]);
    let split = inverse::piecewise_split(&f, 1, &d, InverseConfig::default().grid)?;
    Ok(json!({
        "function": frontend::format(&f),
        "target": eq.rhs,
        "branches": split.branches,
        "curve": curve(&f, lo, hi),
    }))
}

/// Compiles pointful text and merges repeated occurrences of a variable, so
/// `add(x,mul(x,y))` becomes a function of `(x, y)`.
fn function_of_variables(text: &str) -> Result<(Expr, Vec<String>)> {
    let form = frontend::to_structural(&frontend::parse(text)?)?;
    let (mut e, mut names) = (form.expr, form.binding);
    'merge: loop {
        for j in 1..names.len() {
            if let Some(i) = names[..j].iter().position(|n| *n == names[j]) {
                e = structure::diagonal(&e, j + 1, i + 1)?;
                names.remove(j);
                continue 'merge;
            }
        }
        return Ok((e, names));
    }
}

fn kst_doc(text: &str, grid: usize, iters: usize) -> Result<Value> {
    let (f, vars) = function_of_variables(text)?;
    let cfg = KstConfig {
        grid,
        iters,
        ..KstConfig::default()
    };
    let rep = kst::decompose_with(&f, &cfg)?;
    let mut doc = json!({
        "variables": vars,
        "n": rep.n,
        "iterations": rep.iterations,
        "history": rep.history,
        "final_residual": rep.final_residual(),
        "held_out_rmse": kst::sampled_rmse(&rep, &f, 1000, HELD_OUT_SEED)?,
    });
    if rep.n == 2 {
        // cell centres of a square lattice, row-major with y growing downwards
        let side = HEATMAP_SIDE;
        let (mut target, mut fitted) = (
            Vec::with_capacity(side * side),
            Vec::with_capacity(side * side),
        );
        for row in 0..side {
            for col in 0..side {
                let x = [
                    (col as f64 + 0.5) / side as f64,
                    1.0 - (row as f64 + 0.5) / side as f64,
                ];
                target.push(f.eval(&x).ok());
                fitted.push(kst::reconstruct(&rep, &x)?.value);
            }
        }
        doc["heatmap"] = json!({"side": side, "target": target, "fitted": fitted});
    }
    Ok(doc)
}

/// Solves `text` (for example `pow(add(x,a),mul(x,b)) = c`) for its one
/// unknown on `[lo, hi]`. `params` is a JSON object such as `{"a":1,"b":1,"c":9}`.
/// The result carries the solver report, the target value and a sampled curve
/// of the left side.
#[wasm_bindgen]
pub fn solve(text: &str, params: &str, lo: f64, hi: f64) -> String {
    respond(solve_doc(text, params, lo, hi))
}

/// Splits the left side of the equation into monotone branches on `[lo, hi]`.
#[wasm_bindgen]
pub fn branches(text: &str, params: &str, lo: f64, hi: f64) -> String {
    respond(branches_doc(text, params, lo, hi))
}

/// Fits a superposition of one to three variables over the unit cube. For two
/// variables the result includes a heatmap of the target and the fit.
#[wasm_bindgen]
pub fn decompose(text: &str, grid: usize, iters: usize) -> String {
    respond(kst_doc(text, grid, iters))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn solves_the_worked_example() {
        let v = parsed(solve(
            "pow(add(x,a),mul(x,b)) = c",
            r#"{"a":1,"b":1,"c":9}"#,
            0.5,
            5.0,
        ));
        assert_eq!(v["status"], "ok");
        let root = v["roots"][0].as_f64().unwrap();
        assert!(((root + 1.0).powf(root) - 9.0).abs() < 1e-9);
        assert_eq!(v["target"], 9.0);
        assert_eq!(v["curve"]["x"].as_array().unwrap().len(), CURVE_SAMPLES);
    }

    #[test]
    fn curve_marks_points_outside_the_domain() {
        let v = parsed(solve("root(x,a) = c", r#"{"a":2,"c":1}"#, -1.0, 4.0));
        assert_eq!(v["status"], "ok");
        let ys = v["curve"]["y"].as_array().unwrap();
        assert!(ys[0].is_null());
        assert!(ys[CURVE_SAMPLES - 1].is_f64());
    }

    #[test]
    fn reports_errors_as_json() {
        let v = parsed(solve("pow(x,", "{}", 0.0, 1.0));
        assert_eq!(v["error"]["kind"], "syntax");
        let v = parsed(solve("add(x,a) = 1", "[1]", 0.0, 1.0));
        assert_eq!(v["error"]["kind"], "config");
        let v = parsed(solve("add(x,a) = 1", "{}", 0.0, 1.0));
        assert_eq!(v["error"]["kind"], "config");
    }

    #[test]
    fn splits_a_parabola_in_two() {
        let v = parsed(branches(
            "pow(add(x,a),b) = c",
            r#"{"a":-1,"b":2,"c":0.5}"#,
            0.0,
            3.0,
        ));
        let b = v["branches"].as_array().unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0]["monotonicity"], "decreasing");
        assert_eq!(b[1]["monotonicity"], "increasing");
        let cut = b[0]["interval"]["hi"].as_f64().unwrap();
        assert!((cut - 1.0).abs() < 1e-6);
    }

    #[test]
    fn merges_repeated_variables() {
        let (f, vars) = function_of_variables("add(x,mul(x,y))").unwrap();
        assert_eq!(vars, ["x", "y"]);
        assert_eq!(f.arity(), 2);
        assert!((f.eval(&[2.0, 3.0]).unwrap() - 8.0).abs() < 1e-12);
        let (g, vars) = function_of_variables("mul(y,add(x,y))").unwrap();
        assert_eq!(vars, ["y", "x"]);
        assert!((g.eval(&[3.0, 2.0]).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn decomposes_a_product_with_heatmap() {
        let v = parsed(decompose("mul(x,y)", 17, 20));
        assert_eq!(v["n"], 2);
        let history = v["history"].as_array().unwrap();
        assert_eq!(history.len(), 21);
        assert!(history[20].as_f64().unwrap() < history[0].as_f64().unwrap());
        assert_eq!(
            v["heatmap"]["fitted"].as_array().unwrap().len(),
            HEATMAP_SIDE * HEATMAP_SIDE
        );
    }

    #[test]
    fn rejects_too_many_variables() {
        let v = parsed(decompose("add(add(a,b),add(c,d))", 5, 1));
        assert!(v["error"].is_object());
    }
}

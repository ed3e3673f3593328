//! Single-unknown equation solving.
//!
//! An equation `lhs = c` arrives with its left side in structural form and a
//! binding from slots to either the unknown or a named parameter. Repeated
//! occurrences of the unknown are merged with diagonals, the unknown is moved
//! to slot 1, and the solution is the partial inverse about slot 1 applied at
//! `(c, parameters…)`. Numeric roots come from the bound unary function.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::expr::{BoxDomain, Expr, Interval, Node, DEFAULT_TOL};
use crate::frontend::{self, Rhs};
use crate::inverse::{self, InverseConfig, InverseFn};
use crate::structure;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "role", content = "name", rename_all = "lowercase")]
pub enum Role {
    Unknown(String),
    Param(String),
}

impl Role {
    pub fn name(&self) -> &str {
        match self {
            Role::Unknown(n) | Role::Param(n) => n,
        }
    }
}

/// `binding[k-1]` is the role of slot `k`.
pub type Binding = Vec<Role>;

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub lhs: Expr,
    pub binding: Binding,
    pub rhs: f64,
    pub params: BTreeMap<String, f64>,
    pub domain: Interval,
}

impl Equation {
    pub fn new(
        lhs: Expr,
        binding: Binding,
        rhs: f64,
        params: BTreeMap<String, f64>,
        domain: Interval,
    ) -> Result<Self> {
        if binding.len() != lhs.arity() {
            return Err(Error::Config(format!(
                "binding names {} slots but the left side has arity {}",
                binding.len(),
                lhs.arity()
            )));
        }
        let unknowns: BTreeSet<&str> = binding
            .iter()
            .filter_map(|r| match r {
                Role::Unknown(n) => Some(n.as_str()),
                Role::Param(_) => None,
            })
            .collect();
        match unknowns.len() {
            0 => return Err(Error::Config("the equation has no unknown".into())),
            1 => {}
            _ => {
                return Err(Error::Config(format!(
                    "expected one unknown, found {}",
                    unknowns.into_iter().collect::<Vec<_>>().join(", ")
                )))
            }
        }
        let mut seen = BTreeSet::new();
        for role in &binding {
            if let Role::Param(name) = role {
                if !params.contains_key(name) {
                    return Err(Error::Config(format!(
                        "no value given for parameter {name}"
                    )));
                }
                if !seen.insert(name.as_str()) {
                    return Err(Error::Config(format!(
                        "parameter {name} occurs more than once; the argument order of the solution would be ambiguous"
                    )));
                }
            }
        }
        if !rhs.is_finite() {
            return Err(Error::Config(format!(
                "right-hand side {rhs} is not finite"
            )));
        }
        Ok(Equation {
            lhs,
            binding,
            rhs,
            params,
            domain,
        })
    }

    /// Parses `lhs = rhs` in the pointful grammar. Symbols with a value in
    /// `params` are parameters; the single remaining symbol is the unknown. A
    /// symbolic right side is looked up in `params`.
    pub fn parse(text: &str, params: &BTreeMap<String, f64>, domain: Interval) -> Result<Self> {
        let ast = frontend::parse_equation(text)?;
        let form = frontend::to_structural(&ast.lhs)?;
        let rhs = match &ast.rhs {
            Rhs::Number(v) => *v,
            Rhs::Symbol(s) => *params
                .get(s)
                .ok_or_else(|| Error::Config(format!("no value given for right-hand side {s}")))?,
        };
        let binding = form
            .binding
            .iter()
            .map(|name| {
                if params.contains_key(name) {
                    Role::Param(name.clone())
                } else {
                    Role::Unknown(name.clone())
                }
            })
            .collect();
        Equation::new(form.expr, binding, rhs, params.clone(), domain)
    }

    pub fn unknown(&self) -> &str {
        self.binding
            .iter()
            .find_map(|r| match r {
                Role::Unknown(n) => Some(n.as_str()),
                Role::Param(_) => None,
            })
            .expect("validated equation has an unknown")
    }
}

/// One operator applied while turning the left side into the solution formula.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceStep {
    Diagonal { arity: usize, i: usize, j: usize },
    Reorder { arity: usize, positions: Vec<usize> },
    Invert { slot: usize, lo: f64, hi: f64 },
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceStep::Diagonal { arity, i, j } => write!(f, "C{arity}_{{{i},{j}}}"),
            TraceStep::Reorder { arity, positions } => {
                let p: Vec<String> = positions.iter().map(usize::to_string).collect();
                write!(f, "A{arity}_{{{}}}", p.join(","))
            }
            TraceStep::Invert { slot, lo, hi } => write!(f, "I_{slot}[{lo}:{hi}]"),
        }
    }
}

/// Re-applies a trace to an expression.
pub fn replay(lhs: &Expr, trace: &[TraceStep]) -> Result<Expr> {
    let mut e = lhs.clone();
    for step in trace {
        if let TraceStep::Diagonal { arity, .. } | TraceStep::Reorder { arity, .. } = step {
            if e.arity() != *arity {
                return Err(Error::structural(format!(
                    "trace step {step} expects arity {arity}, found {}",
                    e.arity()
                )));
            }
        }
        e = match step {
            TraceStep::Diagonal { i, j, .. } => Expr::diagonal(e, *i, *j)?,
            TraceStep::Reorder { arity, positions } => Expr::lift(e, *arity, positions.clone())?,
            TraceStep::Invert { slot, lo, hi } => Expr::inverse(e, *slot, (*lo, *hi))?,
        };
    }
    Ok(e)
}

pub fn unknown_slots(eq: &Equation) -> Vec<usize> {
    eq.binding
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, Role::Unknown(_)))
        .map(|(k, _)| k + 1)
        .collect()
}

/// Left side with the unknown merged into a single slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapsed {
    /// Unknown at slot 1, parameters after it in binding order.
    pub expr: Expr,
    pub binding: Binding,
    pub trace: Vec<TraceStep>,
}

/// Merges the two lowest unknown slots with a diagonal until one remains,
/// then moves the unknown to slot 1.
pub fn collapse_unknowns(eq: &Equation) -> Result<Collapsed> {
    let mut e = eq.lhs.clone();
    let mut binding = eq.binding.clone();
    let mut unknowns = unknown_slots(eq);
    let mut trace = Vec::new();
    while unknowns.len() > 1 {
        let (i, j) = (unknowns[0], unknowns[1]);
        trace.push(TraceStep::Diagonal {
            arity: e.arity(),
            i,
            j,
        });
        e = Expr::diagonal(e, i, j)?;
        binding.remove(i - 1);
        unknowns.remove(0);
        for u in &mut unknowns {
            if *u > i {
                *u -= 1;
            }
        }
    }
    let u = unknowns[0];
    if u != 1 {
        let n = e.arity();
        let mut next = 2;
        let positions: Vec<usize> = (1..=n)
            .map(|k| {
                if k == u {
                    1
                } else {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        trace.push(TraceStep::Reorder {
            arity: n,
            positions: positions.clone(),
        });
        e = Expr::lift(e, n, positions)?;
        let unknown = binding.remove(u - 1);
        binding.insert(0, unknown);
    }
    Ok(Collapsed {
        expr: e,
        binding,
        trace,
    })
}

/// Substitutes every parameter value, leaving a unary function of the unknown.
pub fn bind_params(e: &Expr, binding: &Binding, params: &BTreeMap<String, f64>) -> Result<Expr> {
    if binding.len() != e.arity() {
        return Err(Error::Config(format!(
            "binding names {} slots but the expression has arity {}",
            binding.len(),
            e.arity()
        )));
    }
    let mut out = e.clone();
    for (k, role) in binding.iter().enumerate().rev() {
        if let Role::Param(name) = role {
            let v = *params
                .get(name)
                .ok_or_else(|| Error::Config(format!("no value given for parameter {name}")))?;
            out = structure::substitute_const(&out, k + 1, v)?;
        }
    }
    let (out, _) = structure::normalize(&out);
    if out.arity() != 1 {
        return Err(Error::Degenerate(
            "after binding the parameters the left side does not depend on the unknown".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "no-solution")]
    NoSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub unknown: String,
    /// Inverse node about slot 1; arguments are `(c, parameters…)`.
    pub formula: Expr,
    /// Parameter names in the order the formula takes them after `c`.
    pub arguments: Vec<String>,
    /// Closed form of the formula when the left side is a single primitive.
    pub closed_form: Option<Expr>,
    pub trace: Vec<TraceStep>,
    pub roots: Vec<f64>,
    pub residuals: Vec<f64>,
    pub status: Status,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn to_json(&self) -> Value {
        json!({
            "unknown": self.unknown,
            "formula": frontend::format(&self.formula),
            "arguments": std::iter::once("c".to_string()).chain(self.arguments.iter().cloned()).collect::<Vec<_>>(),
            "closed_form": self.closed_form.as_ref().map(frontend::format),
            "trace": self.trace.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "roots": self.roots,
            "residuals": self.residuals,
            "status": self.status,
            "warnings": self.warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub inverse: InverseConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            inverse: InverseConfig::default(),
        }
    }
}

pub fn solve(eq: &Equation) -> Result<SolveReport> {
    solve_with(eq, &SolveOptions::default())
}

pub fn solve_with(eq: &Equation, opts: &SolveOptions) -> Result<SolveReport> {
    let collapsed = collapse_unknowns(eq)?;
    let mut trace = collapsed.trace.clone();
    let range = (eq.domain.lo, eq.domain.hi);
    trace.push(TraceStep::Invert {
        slot: 1,
        lo: range.0,
        hi: range.1,
    });
    let formula = Expr::inverse(collapsed.expr.clone(), 1, range)?;
    let closed_form = closed_form(&collapsed.expr);

    let unary = bind_params(&collapsed.expr, &collapsed.binding, &eq.params)?;
    let domain = BoxDomain::new(vec![eq.domain]);
    if let Err(e @ Error::Degenerate(_)) =
        opts.inverse
            .piecewise_split(&unary, 1, &domain, opts.inverse.grid)
    {
        return Err(e);
    }
    let inv = InverseFn::new(&unary, 1, &domain, opts.inverse.clone(), opts.tol)?;
    let found = inv.call(&[eq.rhs])?;
    let mut warnings = found.warnings;
    let mut roots = Vec::new();
    let mut residuals = Vec::new();
    for t in found.roots {
        let r = unary.eval(&[t]).map(|v| (v - eq.rhs).abs());
        match r {
            Ok(r) if r <= opts.tol => {
                roots.push(t);
                residuals.push(r);
            }
            _ => warnings.push(format!("dropped candidate {t}: residual above tolerance")),
        }
    }
    let status = if roots.is_empty() {
        Status::NoSolution
    } else {
        Status::Ok
    };
    Ok(SolveReport {
        unknown: eq.unknown().to_string(),
        formula,
        arguments: collapsed.binding[1..]
            .iter()
            .map(|r| r.name().to_string())
            .collect(),
        closed_form,
        trace,
        roots,
        residuals,
        status,
        warnings,
    })
}

/// `A2_P(p)` with the unknown on slot 1 inverts to `A2_P(I_k(p))` where `P[k-1] = 1`.
fn closed_form(collapsed: &Expr) -> Option<Expr> {
    let mut e = collapsed;
    let mut positions: Vec<usize> = (1..=e.arity()).collect();
    while let Node::Lift {
        inner,
        positions: p,
        ..
    } = e.node()
    {
        positions = p.iter().map(|&s| positions[s - 1]).collect();
        e = inner;
    }
    let Node::Prim(p) = e.node() else { return None };
    if positions.len() != collapsed.arity() {
        return None;
    }
    let k = positions.iter().position(|&s| s == 1)? + 1;
    let inv = inverse::invert_primitive(*p, k).ok()?;
    if positions.iter().enumerate().all(|(k, &s)| s == k + 1) {
        return Some(inv);
    }
    Expr::lift(inv, 2, positions).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Primitive;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn interval(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn worked() -> Equation {
        Equation::parse(
            "pow(add(x,a),mul(x,b)) = c",
            &params(&[("a", 1.0), ("b", 1.0), ("c", 9.0)]),
            interval(0.5, 5.0),
        )
        .unwrap()
    }

    #[test]
    fn unknown_slots_follow_occurrences() {
        assert_eq!(unknown_slots(&worked()), vec![1, 3]);
        let eq =
            Equation::parse("add(a,x) = 1", &params(&[("a", 1.0)]), interval(0.0, 1.0)).unwrap();
        assert_eq!(unknown_slots(&eq), vec![2]);
        let eq = Equation::parse(
            "add(mul(x,x),pow(x,x)) = 1",
            &params(&[]),
            interval(0.5, 1.0),
        )
        .unwrap();
        assert_eq!(unknown_slots(&eq), vec![1, 2, 3, 4]);
    }

    #[test]
    fn worked_collapse() {
        let eq = worked();
        let c = collapse_unknowns(&eq).unwrap();
        assert_eq!(c.expr.arity(), 3);
        let steps: Vec<String> = c.trace.iter().map(ToString::to_string).collect();
        assert_eq!(steps, ["C4_{1,3}", "A3_{2,1,3}"]);
        assert_eq!(
            c.binding,
            vec![
                Role::Unknown("x".into()),
                Role::Param("a".into()),
                Role::Param("b".into())
            ]
        );
        for (x, a, b) in [(2.0, 1.0, 1.0), (0.7, 0.3, 2.5), (1.9, 4.0, 0.1)] {
            let want = eq.lhs.eval(&[x, a, x, b]).unwrap();
            assert!((c.expr.eval(&[x, a, b]).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn triple_collapse() {
        let eq = Equation::parse("add(mul(x,x),x) = 0", &params(&[]), interval(0.0, 1.0)).unwrap();
        let c = collapse_unknowns(&eq).unwrap();
        assert_eq!(c.trace.len(), 2);
        assert_eq!(c.expr.arity(), 1);
        for x in [0.1, 0.5, 1.7] {
            let want = eq.lhs.eval(&[x, x, x]).unwrap();
            assert!((c.expr.eval(&[x]).unwrap() - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_occurrence_is_untouched() {
        let eq = Equation::parse(
            "add(x,a) = c",
            &params(&[("a", 2.0), ("c", 5.0)]),
            interval(0.0, 10.0),
        )
        .unwrap();
        let c = collapse_unknowns(&eq).unwrap();
        assert!(c.trace.is_empty());
        assert_eq!(c.expr, eq.lhs);
    }

    #[test]
    fn bind_worked_example() {
        let eq = worked();
        let c = collapse_unknowns(&eq).unwrap();
        let u = bind_params(&c.expr, &c.binding, &eq.params).unwrap();
        assert_eq!(u.arity(), 1);
        assert!((u.eval(&[2.0]).unwrap() - 9.0).abs() < 1e-12);
        let missing = bind_params(&c.expr, &c.binding, &params(&[("a", 1.0)]));
        assert_eq!(missing.unwrap_err().kind(), "config");
    }

    #[test]
    fn bind_without_params_keeps_function() {
        let eq = Equation::parse("pow(x,x) = 27", &params(&[]), interval(1.0, 4.0)).unwrap();
        let c = collapse_unknowns(&eq).unwrap();
        let u = bind_params(&c.expr, &c.binding, &eq.params).unwrap();
        assert_eq!(u, c.expr);
    }

    #[test]
    fn solve_worked_example() {
        let r = solve(&worked()).unwrap();
        assert_eq!(r.status, Status::Ok);
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 2.0).abs() < 1e-9);
        assert!(r.residuals[0] <= 1e-9);
        assert_eq!(r.formula.arity(), 3);
        assert_eq!(r.arguments, ["a", "b"]);
        assert_eq!(replay(&worked().lhs, &r.trace).unwrap(), r.formula);
        // the formula itself evaluates to the principal root at (c, a, b)
        assert!((r.formula.eval(&[9.0, 1.0, 1.0]).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn solve_self_power() {
        let eq =
            Equation::parse("pow(x,x) = c", &params(&[("c", 27.0)]), interval(1.0, 4.0)).unwrap();
        let r = solve(&eq).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 3.0).abs() < 1e-9);
        assert_eq!(r.trace[0].to_string(), "C2_{1,2}");
    }

    #[test]
    fn solve_linear_has_closed_form() {
        let eq = Equation::parse(
            "add(x,a) = c",
            &params(&[("a", 2.0), ("c", 5.0)]),
            interval(0.0, 10.0),
        )
        .unwrap();
        let r = solve(&eq).unwrap();
        assert_eq!(r.roots.len(), 1);
        assert!((r.roots[0] - 3.0).abs() < 1e-9);
        assert!(frontend::format(&r.formula).starts_with("I_1"));
        let closed = r.closed_form.unwrap();
        assert!((closed.eval(&[5.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);

        let eq = Equation::parse(
            "pow(a,x) = c",
            &params(&[("a", 2.0), ("c", 8.0)]),
            interval(0.0, 10.0),
        )
        .unwrap();
        let r = solve(&eq).unwrap();
        assert!((r.roots[0] - 3.0).abs() < 1e-9);
        let closed = r.closed_form.unwrap();
        assert!((closed.eval(&[8.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_reports_every_branch() {
        let eq = Equation::parse("mul(x,x) = 0.25", &params(&[]), interval(-1.0, 1.0)).unwrap();
        let r = solve(&eq).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!((r.roots[0] + 0.5).abs() < 1e-9 && (r.roots[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn no_solution_is_a_status() {
        let eq = Equation::parse("mul(x,x) = -1", &params(&[]), interval(-1.0, 1.0)).unwrap();
        let r = solve(&eq).unwrap();
        assert_eq!(r.status, Status::NoSolution);
        assert!(r.roots.is_empty());
        assert_eq!(r.to_json()["status"], "no-solution");
    }

    #[test]
    fn flat_left_side_is_degenerate() {
        let eq = Equation::parse("pow(x,0) = 1", &params(&[]), interval(1.0, 2.0)).unwrap();
        assert_eq!(solve(&eq).unwrap_err().kind(), "degenerate");
    }

    #[test]
    fn equation_validation() {
        let d = interval(0.0, 1.0);
        let e = Equation::parse("add(x,y) = 1", &params(&[]), d).unwrap_err();
        assert_eq!(e.kind(), "config");
        let e = Equation::parse("add(a,a) = 1", &params(&[("a", 1.0)]), d).unwrap_err();
        assert_eq!(e.kind(), "config");
        let e = Equation::parse("add(x,a) = c", &params(&[("a", 1.0)]), d).unwrap_err();
        assert_eq!(e.kind(), "config");
        let e = Equation::parse("add(x,a,b) = c", &params(&[]), d).unwrap_err();
        assert_eq!(e.kind(), "syntax");
        let duplicate =
            Equation::parse("add(mul(x,a),a) = 1", &params(&[("a", 1.0)]), d).unwrap_err();
        assert!(duplicate.to_string().contains("more than once"));
    }

    #[test]
    fn hand_built_equation() {
        let lhs = Expr::prim(Primitive::Mul);
        let eq = Equation::new(
            lhs,
            vec![Role::Param("k".into()), Role::Unknown("t".into())],
            6.0,
            params(&[("k", 2.0)]),
            interval(0.0, 10.0),
        )
        .unwrap();
        let r = solve(&eq).unwrap();
        assert_eq!(r.unknown, "t");
        assert!((r.roots[0] - 3.0).abs() < 1e-9);
        assert_eq!(r.trace[0].to_string(), "A2_{2,1}");
        assert!((r.closed_form.unwrap().eval(&[6.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
    }
}

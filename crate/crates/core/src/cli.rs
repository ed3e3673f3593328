//! Command-line front end. Every command prints one JSON document.
//!
//! Expressions are accepted in either notation: text that parses in the
//! pointful grammar is compiled to structural form (one slot per symbol
//! occurrence), anything else is read as structural notation.

use std::collections::BTreeMap;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::Error;
use crate::expr::{BoxDomain, Expr, Interval, Primitive, DEFAULT_SEED, DEFAULT_TOL};
use crate::frontend::{self, PointfulAst};
use crate::inverse::InverseConfig;
use crate::kst::{self, KstConfig, KstRep};
use crate::solver::{self, Equation, SolveOptions};
use crate::structure;

/// Environment variable overriding the default numeric tolerance.
pub const TOL_ENV: &str = "MVFA_TOL";

const HELD_OUT_SAMPLES: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "mvfa",
    version,
    about = "Operator algebra over multivariate real functions"
)]
struct Cli {
    /// Indent the JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate an expression at a point.
    Eval {
        expr: String,
        /// `x=2,y=10` by symbol name, or plain values by slot.
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
    /// Embed an expression as a function of more variables.
    Lift {
        expr: String,
        #[arg(long)]
        arity: usize,
        /// Target slot of each variable, e.g. `1,3`.
        #[arg(long, value_delimiter = ',')]
        positions: Vec<usize>,
    },
    /// Replace variable `slot` of F by G.
    Compose {
        f: String,
        g: String,
        #[arg(long)]
        slot: usize,
        /// Lift G to F's arity at these slots first.
        #[arg(long, value_delimiter = ',')]
        positions: Option<Vec<usize>>,
    },
    /// Substitute variable `j` for variable `i`.
    Diag {
        expr: String,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
    },
    /// Check invertibility about a slot, split into monotone pieces, and optionally solve for it.
    Invert {
        expr: String,
        #[arg(long)]
        slot: usize,
        #[command(flatten)]
        domain: DomainArg,
        /// Output value to invert at.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<f64>,
        /// Values of the other slots, in slot order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        fixed: Vec<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solve a single-unknown equation `lhs = rhs`.
    Solve {
        equation: String,
        /// `name=value`; repeatable.
        #[arg(long = "param", allow_hyphen_values = true)]
        params: Vec<String>,
        #[command(flatten)]
        domain: DomainArg,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Superposition decomposition on the unit box.
    #[command(subcommand)]
    Kst(KstCommand),
}

#[derive(Debug, Args)]
struct DomainArg {
    /// `lo:hi` per axis, comma separated or repeated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum KstCommand {
    Decompose {
        expr: String,
        #[arg(long, default_value_t = 33)]
        grid: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Write the representation here instead of printing it.
        #[arg(short = 'o', long)]
        output: Option<std::path::PathBuf>,
        /// Seed of the held-out sample used to report the error.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    Reconstruct {
        rep: std::path::PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<f64>,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

enum Failure {
    Usage(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = std::result::Result<Value, Failure>;

/// Runs the command line `args` (including the program name).
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Outcome {
                    stdout: e.to_string(),
                    code: 0,
                },
                _ => render(Err(Failure::Usage(e.to_string())), false),
            };
        }
    };
    let result = dispatch(cli.command);
    render(result, cli.pretty)
}

fn render(result: CmdResult, pretty: bool) -> Outcome {
    let (doc, code) = match result {
        Ok(v) => (v, 0),
        Err(Failure::Usage(msg)) => (
            json!({"error": {"kind": "usage", "message": msg.trim_end(), "location": Value::Null}}),
            2,
        ),
        Err(Failure::Error(e)) => {
            let code = match e {
                Error::Syntax { .. } | Error::Config(_) => 2,
                _ => 1,
            };
            (json!({"error": error_json(&e)}), code)
        }
    };
    let mut stdout = if pretty {
        serde_json::to_string_pretty(&doc)
    } else {
        serde_json::to_string(&doc)
    }
    .expect("JSON values serialize");
    stdout.push('\n');
    Outcome { stdout, code }
}

fn error_json(e: &Error) -> Value {
    let location = match e {
        Error::Syntax { line, column, .. } => json!({"line": line, "column": column}),
        Error::Domain {
            node, args, point, ..
        } => json!({"node": node, "args": args, "point": point}),
        _ => Value::Null,
    };
    json!({"kind": e.kind(), "message": e.to_string(), "location": location})
}

fn default_tol() -> std::result::Result<f64, Failure> {
    match std::env::var(TOL_ENV) {
        Ok(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| Failure::Usage(format!("{TOL_ENV}={s} is not a positive number"))),
        Err(_) => Ok(DEFAULT_TOL),
    }
}

fn tol_or_default(tol: Option<f64>) -> std::result::Result<f64, Failure> {
    match tol {
        Some(t) if t > 0.0 && t.is_finite() => Ok(t),
        Some(t) => Err(Failure::Usage(format!(
            "--tol {t} is not a positive number"
        ))),
        None => default_tol(),
    }
}

fn parse_domain(arg: &DomainArg) -> std::result::Result<Vec<Interval>, Failure> {
    if arg.domain.is_empty() {
        return Err(Failure::Usage("--domain lo:hi is required".into()));
    }
    arg.domain
        .iter()
        .map(|s| {
            let (lo, hi) = s
                .split_once(':')
                .ok_or_else(|| Failure::Usage(format!("domain '{s}' is not of the form lo:hi")))?;
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Failure::Usage(format!("domain '{s}': '{t}' is not a number")))
            };
            Ok(Interval::new(num(lo)?, num(hi)?)?)
        })
        .collect()
}

/// An expression read from either notation, with slot names when it was pointful.
struct Input {
    expr: Expr,
    ast: Option<PointfulAst>,
    binding: Vec<String>,
}

fn read_expr(text: &str) -> std::result::Result<Input, Failure> {
    match frontend::parse(text) {
        // a lone primitive name means the primitive, not a variable called `pow`
        Ok(PointfulAst::Symbol(name)) if Primitive::from_name(&name).is_some() => Ok(Input {
            expr: frontend::read_structural(&name)?,
            ast: None,
            binding: Vec::new(),
        }),
        Ok(ast) => {
            let form = frontend::to_structural(&ast)?;
            Ok(Input {
                expr: form.expr,
                ast: Some(ast),
                binding: form.binding,
            })
        }
        Err(pointful) => match frontend::read_structural(text) {
            Ok(expr) => Ok(Input {
                expr,
                ast: None,
                binding: Vec::new(),
            }),
            Err(_) => Err(pointful.into()),
        },
    }
}

fn expr_json(e: &Expr) -> Value {
    json!({"expr": frontend::format(e), "arity": e.arity()})
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Eval { expr, at } => cmd_eval(&expr, &at),
        Command::Lift {
            expr,
            arity,
            positions,
        } => {
            let e = read_expr(&expr)?.expr;
            Ok(expr_json(&structure::lift(&e, arity, &positions)?))
        }
        Command::Compose {
            f,
            g,
            slot,
            positions,
        } => {
            let f = read_expr(&f)?.expr;
            let g = read_expr(&g)?.expr;
            Ok(expr_json(&structure::compose_at_lifted(
                &f,
                slot,
                &g,
                positions.as_deref(),
            )?))
        }
        Command::Diag { expr, i, j } => {
            let e = read_expr(&expr)?.expr;
            Ok(expr_json(&structure::diagonal(&e, i, j)?))
        }
        Command::Invert {
            expr,
            slot,
            domain,
            target,
            fixed,
            grid,
            tol,
        } => cmd_invert(&expr, slot, &domain, target, &fixed, grid, tol),
        Command::Solve {
            equation,
            params,
            domain,
            tol,
            grid,
        } => cmd_solve(&equation, &params, &domain, tol, grid),
        Command::Kst(KstCommand::Decompose {
            expr,
            grid,
            iters,
            output,
            seed,
        }) => cmd_kst_decompose(&expr, grid, iters, output.as_deref(), seed),
        Command::Kst(KstCommand::Reconstruct { rep, at }) => {
            let text = std::fs::read_to_string(&rep)
                .map_err(|e| Error::Format(format!("cannot read {}: {e}", rep.display())))?;
            let rep = KstRep::from_json(&text)?;
            let r = kst::reconstruct(&rep, &at)?;
            Ok(json!({
                "value": r.value,
                "clamped": r.clamped,
                "final_residual": rep.final_residual(),
            }))
        }
    }
}

fn cmd_eval(text: &str, at: &str) -> CmdResult {
    let input = read_expr(text)?;
    let items: Vec<&str> = at
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let named = items.iter().any(|s| s.contains('='));
    let value = if named {
        let mut values = BTreeMap::new();
        for item in &items {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Failure::Usage(format!(
                    "mixed named and positional values in --at: '{item}'"
                ))
            })?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("--at {k}: '{v}' is not a number")))?;
            values.insert(k.trim().to_string(), v);
        }
        if input.ast.is_none() {
            return Err(Failure::Usage(
                "structural expressions take positional values in --at".into(),
            ));
        }
        let point = input
            .binding
            .iter()
            .map(|name| {
                values
                    .get(name)
                    .copied()
                    .ok_or_else(|| Failure::Usage(format!("no value given for symbol '{name}'")))
            })
            .collect::<std::result::Result<Vec<f64>, Failure>>()?;
        input.expr.eval(&point)?
    } else {
        let values = items
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Failure::Usage(format!("'{s}' is not a number")))
            })
            .collect::<std::result::Result<Vec<f64>, Failure>>()?;
        let point = match &input.ast {
            // positional values for a pointful expression follow first occurrences
            Some(_) => {
                let mut names: Vec<&str> = Vec::new();
                for n in &input.binding {
                    if !names.contains(&n.as_str()) {
                        names.push(n);
                    }
                }
                if names.len() != values.len() {
                    return Err(Failure::Usage(format!(
                        "expected {} values ({}), got {}",
                        names.len(),
                        names.join(","),
                        values.len()
                    )));
                }
                input
                    .binding
                    .iter()
                    .map(|n| values[names.iter().position(|m| m == n).expect("listed")])
                    .collect()
            }
            None => values,
        };
        input.expr.eval(&point)?
    };
    Ok(json!({ "value": value }))
}

fn cmd_invert(
    text: &str,
    slot: usize,
    domain: &DomainArg,
    target: Option<f64>,
    fixed: &[f64],
    grid: Option<usize>,
    tol: Option<f64>,
) -> CmdResult {
    let e = read_expr(text)?.expr;
    let d = BoxDomain::new(parse_domain(domain)?);
    let tol = tol_or_default(tol)?;
    let cfg = InverseConfig {
        grid: grid.unwrap_or(InverseConfig::default().grid),
        ..InverseConfig::default()
    };
    let probe_grid = cfg.grid.min(256);
    let verdict = cfg.check_invertible(&e, slot, &d, probe_grid)?;
    let branches = match cfg.piecewise_split(&e, slot, &d, probe_grid) {
        Ok(p) => serde_json::to_value(&p.branches).expect("branches serialize"),
        Err(err) => json!({"error": error_json(&err)}),
    };
    let mut doc = json!({
        "expr": frontend::format(&e),
        "slot": slot,
        "verdict": verdict,
        "branches": branches,
    });
    if let Some(target) = target {
        let roots = cfg.invert_at(&e, slot, target, fixed, &d, tol)?;
        doc["target"] = json!(target);
        doc["roots"] = json!(roots.roots);
        doc["warnings"] = json!(roots.warnings);
    }
    Ok(doc)
}

fn cmd_solve(
    text: &str,
    params: &[String],
    domain: &DomainArg,
    tol: Option<f64>,
    grid: Option<usize>,
) -> CmdResult {
    let mut values = BTreeMap::new();
    for p in params {
        let (k, v) = p.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("--param '{p}' is not of the form name=value"))
        })?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--param {k}: '{v}' is not a number")))?;
        values.insert(k.trim().to_string(), v);
    }
    let axes = parse_domain(domain)?;
    let [axis] = axes[..] else {
        return Err(Failure::Usage(format!(
            "solve takes one domain interval, got {}",
            axes.len()
        )));
    };
    let eq = Equation::parse(text, &values, axis).map_err(|e| match e {
        // a missing or extra binding is a problem with the command line
        Error::Config(msg) => Failure::Usage(msg),
        other => Failure::Error(other),
    })?;
    let mut opts = SolveOptions {
        tol: tol_or_default(tol)?,
        ..SolveOptions::default()
    };
    if let Some(g) = grid {
        opts.inverse.grid = g;
    }
    let report = solver::solve_with(&eq, &opts)?;
    Ok(report.to_json())
}

fn cmd_kst_decompose(
    text: &str,
    grid: usize,
    iters: usize,
    output: Option<&std::path::Path>,
    seed: u64,
) -> CmdResult {
    let input = read_expr(text)?;
    let cfg = KstConfig {
        grid,
        iters,
        ..KstConfig::default()
    };
    let rep = kst::decompose_with(&input.expr, &cfg)?;
    let rmse = kst::sampled_rmse(&rep, &input.expr, HELD_OUT_SAMPLES, seed)?;
    let tail_start = rep.history.len().saturating_sub(5);
    let mut doc = json!({
        "n": rep.n,
        "outer_functions": rep.outer.len(),
        "iterations": rep.iterations,
        "grid": rep.grid,
        "final_residual": rep.final_residual(),
        "history_tail": rep.history[tail_start..],
        "held_out": {"samples": HELD_OUT_SAMPLES, "seed": seed, "rmse": rmse},
    });
    match output {
        Some(path) => {
            std::fs::write(path, rep.to_json())
                .map_err(|e| Error::Format(format!("cannot write {}: {e}", path.display())))?;
            doc["output"] = json!(path.display().to_string());
        }
        None => {
            doc["rep"] = serde_json::to_value(&rep).expect("representation serializes");
        }
    }
    Ok(doc)
}

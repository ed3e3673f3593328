//! Text front end.
//!
//! Two notations are handled here:
//!
//! * the pointful equation language, `pow(add(x,a),mul(x,b)) = c`, made of
//!   binary primitive calls over symbols and numbers;
//! * the structural operator notation printed by [`format`], e.g.
//!   `((A4_{1,3}(pow) C4_1 A4_{1,2}(add)) C4_3 A4_{3,4}(mul))`, which
//!   [`read_structural`] reads back.
//!
//! [`to_structural`] compiles the first into the second by giving every
//! symbol occurrence its own slot, left to right.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{Expr, Node, Primitive};
use crate::structure;

/// Pointful syntax tree.
#[derive(Debug, Clone, PartialEq)]
pub enum PointfulAst {
    Const(f64),
    Symbol(String),
    Call(Primitive, Box<PointfulAst>, Box<PointfulAst>),
}

impl PointfulAst {
    /// Symbol occurrences, left to right.
    pub fn occurrences(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_occurrences(&mut out);
        out
    }

    fn collect_occurrences<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PointfulAst::Const(_) => {}
            PointfulAst::Symbol(s) => out.push(s),
            PointfulAst::Call(_, a, b) => {
                a.collect_occurrences(out);
                b.collect_occurrences(out);
            }
        }
    }

    /// Direct recursive evaluation with one value per symbol name.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        match self {
            PointfulAst::Const(c) => Ok(*c),
            PointfulAst::Symbol(s) => {
                lookup(s).ok_or_else(|| Error::Config(format!("no value for symbol '{s}'")))
            }
            PointfulAst::Call(p, a, b) => p.apply(&[a.eval(lookup)?, b.eval(lookup)?]),
        }
    }
}

impl fmt::Display for PointfulAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointfulAst::Const(c) => write!(f, "{c}"),
            PointfulAst::Symbol(s) => f.write_str(s),
            PointfulAst::Call(p, a, b) => write!(f, "{p}({a},{b})"),
        }
    }
}

/// Right-hand side of an equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Rhs {
    Number(f64),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationAst {
    pub lhs: PointfulAst,
    pub rhs: Rhs,
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Eq,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(message: impl Into<String>, line: usize, column: usize) -> Error {
    Error::Syntax {
        message: message.into(),
        line,
        column,
    }
}

/// Splits the pointful language into tokens with 1-based line/column positions.
fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let (l0, c0) = (line, column);
        if c == '\n' {
            line += 1;
            column = 1;
            k += 1;
            continue;
        }
        if c.is_whitespace() {
            k += 1;
            column += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned {
                tok,
                line: l0,
                column: c0,
            });
            k += 1;
            column += 1;
            continue;
        }
        if c.is_alphabetic() {
            let start = k;
            while k < chars.len() && (chars[k].is_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            let ident: String = chars[start..k].iter().collect();
            column += k - start;
            out.push(Spanned {
                tok: Tok::Ident(ident),
                line: l0,
                column: c0,
            });
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let len = number_len(&chars[k..]);
            if len == 0 {
                return Err(syntax(format!("unexpected character '{c}'"), l0, c0));
            }
            let lexeme: String = chars[k..k + len].iter().collect();
            let value: f64 = lexeme
                .parse()
                .map_err(|_| syntax(format!("malformed number '{lexeme}'"), l0, c0))?;
            k += len;
            column += len;
            out.push(Spanned {
                tok: Tok::Number(value),
                line: l0,
                column: c0,
            });
            continue;
        }
        return Err(syntax(format!("unexpected character '{c}'"), l0, c0));
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

/// Length of the decimal literal at the start of `s` (optional sign and exponent), 0 if none.
fn number_len(s: &[char]) -> usize {
    let mut k = 0;
    if k < s.len() && (s[k] == '+' || s[k] == '-') {
        k += 1;
    }
    let mantissa_start = k;
    while k < s.len() && s[k].is_ascii_digit() {
        k += 1;
    }
    if k < s.len() && s[k] == '.' {
        k += 1;
        while k < s.len() && s[k].is_ascii_digit() {
            k += 1;
        }
    }
    let mantissa = &s[mantissa_start..k];
    if !mantissa.iter().any(|c| c.is_ascii_digit()) {
        return 0;
    }
    if k < s.len() && (s[k] == 'e' || s[k] == 'E') {
        let mut e = k + 1;
        if e < s.len() && (s[e] == '+' || s[e] == '-') {
            e += 1;
        }
        let digits = e;
        while e < s.len() && s[e].is_ascii_digit() {
            e += 1;
        }
        if e > digits {
            k = e;
        }
    }
    k
}

// ---------------------------------------------------------------------------
// Pointful parsing

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(
                format!("expected {what}, found {}", describe(&t.tok)),
                t.line,
                t.column,
            ))
        }
    }

    fn expr(&mut self) -> Result<PointfulAst> {
        let t = self.next();
        match t.tok {
            Tok::Number(v) => Ok(PointfulAst::Const(v)),
            Tok::Ident(name) => {
                if self.peek().tok != Tok::LParen {
                    return Ok(PointfulAst::Symbol(name));
                }
                let prim = match Primitive::from_name(&name) {
                    Some(p) if p != Primitive::Identity => p,
                    _ => {
                        return Err(syntax(
                            format!("unknown primitive '{name}'"),
                            t.line,
                            t.column,
                        ))
                    }
                };
                self.next();
                let mut args = vec![self.expr()?];
                while self.peek().tok == Tok::Comma {
                    self.next();
                    args.push(self.expr()?);
                }
                let close = self.peek().clone();
                if close.tok != Tok::RParen {
                    return Err(syntax(
                        format!("expected ',' or ')', found {}", describe(&close.tok)),
                        close.line,
                        close.column,
                    ));
                }
                self.next();
                if args.len() != 2 {
                    return Err(syntax(
                        format!("'{name}' takes 2 arguments, found {}", args.len()),
                        t.line,
                        t.column,
                    ));
                }
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(PointfulAst::Call(prim, Box::new(a), Box::new(b)))
            }
            other => Err(syntax(
                format!("expected an expression, found {}", describe(&other)),
                t.line,
                t.column,
            )),
        }
    }

    fn end(&mut self) -> Result<()> {
        let t = self.peek().clone();
        if t.tok == Tok::Eof {
            Ok(())
        } else {
            Err(syntax(
                format!("unexpected {} after expression", describe(&t.tok)),
                t.line,
                t.column,
            ))
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Number(v) => format!("number {v}"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Eq => "'='".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a pointful expression.
pub fn parse(text: &str) -> Result<PointfulAst> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let ast = p.expr()?;
    p.end()?;
    Ok(ast)
}

/// Parses `expr = rhs` where the right side is a number or a symbol.
pub fn parse_equation(text: &str) -> Result<EquationAst> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let lhs = p.expr()?;
    p.expect(Tok::Eq, "'='")?;
    let t = p.next();
    let rhs = match t.tok {
        Tok::Number(v) => Rhs::Number(v),
        Tok::Ident(s) if p.peek().tok != Tok::LParen => Rhs::Symbol(s),
        _ => {
            return Err(syntax(
                "the right-hand side must be a number or a parameter name",
                t.line,
                t.column,
            ))
        }
    };
    p.end()?;
    Ok(EquationAst { lhs, rhs })
}

// ---------------------------------------------------------------------------
// Structural compilation

/// One operator application emitted while compiling to structural form.
#[derive(Debug, Clone, PartialEq)]
pub enum StructStep {
    /// `A{arity}_{positions}` applied to a primitive (possibly with a pinned constant argument).
    Lift { arity: usize, positions: Vec<usize> },
    /// `C{arity}_{slot}`.
    Compose { arity: usize, slot: usize },
}

impl fmt::Display for StructStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructStep::Lift { arity, positions } => {
                write!(f, "A{arity}_{{{}}}", join(positions))
            }
            StructStep::Compose { arity, slot } => write!(f, "C{arity}_{slot}"),
        }
    }
}

/// A point-free expression together with the symbol read by each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralForm {
    pub expr: Expr,
    /// `binding[k-1]` is the symbol occurrence assigned to slot `k`.
    pub binding: Vec<String>,
    pub trace: Vec<StructStep>,
}

enum Piece {
    /// A symbol occurrence read directly from its slot.
    Leaf(usize),
    /// A symbol-free subtree folded to its value.
    Folded(f64),
    /// A compound subtree: expression of full arity and the slot it is composed at.
    Tree(Expr, usize),
}

struct Compiler {
    arity: usize,
    next_slot: usize,
    trace: Vec<StructStep>,
}

impl Compiler {
    fn piece(&mut self, ast: &PointfulAst) -> Result<Piece> {
        match ast {
            PointfulAst::Const(c) => Ok(Piece::Folded(*c)),
            PointfulAst::Symbol(_) => {
                self.next_slot += 1;
                Ok(Piece::Leaf(self.next_slot))
            }
            PointfulAst::Call(p, a, b) => {
                // slots are handed out in occurrence order, so both children are
                // compiled before the outer lift; their trace entries are spliced in after it
                let mark = self.trace.len();
                let left = self.piece(a)?;
                let left_trace: Vec<StructStep> = self.trace.drain(mark..).collect();
                let right = self.piece(b)?;
                let right_trace: Vec<StructStep> = self.trace.drain(mark..).collect();
                self.call(*p, left, left_trace, right, right_trace)
            }
        }
    }

    fn call(
        &mut self,
        p: Primitive,
        left: Piece,
        left_trace: Vec<StructStep>,
        right: Piece,
        right_trace: Vec<StructStep>,
    ) -> Result<Piece> {
        let n = self.arity;
        let rep = |piece: &Piece| match piece {
            Piece::Leaf(s) | Piece::Tree(_, s) => Some(*s),
            Piece::Folded(_) => None,
        };
        let (base, positions) = match (&left, &right) {
            (Piece::Folded(a), Piece::Folded(b)) => return p.apply(&[*a, *b]).map(Piece::Folded),
            (Piece::Folded(a), _) => (
                structure::substitute_const(&Expr::prim(p), 1, *a)?,
                vec![rep(&right).unwrap()],
            ),
            (_, Piece::Folded(b)) => (
                structure::substitute_const(&Expr::prim(p), 2, *b)?,
                vec![rep(&left).unwrap()],
            ),
            _ => (
                Expr::prim(p),
                vec![rep(&left).unwrap(), rep(&right).unwrap()],
            ),
        };
        let representative = positions[0];
        self.trace.push(StructStep::Lift {
            arity: n,
            positions: positions.clone(),
        });
        let mut expr = structure::lift(&base, n, &positions)?;
        for (child, child_trace) in [(left, left_trace), (right, right_trace)] {
            if let Piece::Tree(g, slot) = child {
                self.trace.push(StructStep::Compose { arity: n, slot });
                self.trace.extend(child_trace);
                expr = structure::compose_at(&expr, slot, &g)?;
            }
        }
        Ok(Piece::Tree(expr, representative))
    }
}

/// Compiles a pointful AST to the structural lift/compose form.
///
/// Every symbol occurrence gets its own slot, numbered left to right. Each
/// call lifts its primitive at the first slot of each argument branch and
/// composes compound branches in at those slots. Symbol-free subtrees are
/// folded to constants, which fails only if such a subtree is undefined.
pub fn to_structural(ast: &PointfulAst) -> Result<StructuralForm> {
    let binding: Vec<String> = ast.occurrences().into_iter().map(str::to_string).collect();
    let mut c = Compiler {
        arity: binding.len(),
        next_slot: 0,
        trace: Vec::new(),
    };
    let expr = match c.piece(ast)? {
        Piece::Folded(v) => Expr::constant(v),
        Piece::Leaf(s) => {
            let id = Expr::prim(Primitive::Identity);
            if c.arity == 1 {
                id
            } else {
                structure::lift(&id, c.arity, &[s])?
            }
        }
        Piece::Tree(e, _) => e,
    };
    Ok(StructuralForm {
        expr,
        binding,
        trace: c.trace,
    })
}

// ---------------------------------------------------------------------------
// Structural notation

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical operator notation for an expression.
pub fn format(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    match e.node() {
        Node::Const(c) => out.push_str(&c.to_string()),
        Node::Prim(p) => out.push_str(p.name()),
        Node::Lift {
            inner,
            arity,
            positions,
        } => {
            out.push_str(&format!("A{arity}_{{{}}}(", join(positions)));
            write_expr(inner, out);
            out.push(')');
        }
        Node::Compose { outer, slot, arg } => {
            out.push('(');
            write_expr(outer, out);
            out.push_str(&format!(" C{}_{slot} ", outer.arity()));
            write_expr(arg, out);
            out.push(')');
        }
        Node::Diagonal { inner, i, j } => {
            out.push_str(&format!("C{}_{{{i},{j}}}(", inner.arity()));
            write_expr(inner, out);
            out.push(')');
        }
        Node::Inverse { inner, slot, range } => {
            out.push_str(&format!("I_{slot}[{}:{}](", range.0, range.1));
            write_expr(inner, out);
            out.push(')');
        }
    }
}

struct Reader<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax {
            message: msg.into(),
            line: 1,
            column: self.pos + 1,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.skip_ws();
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn want(&mut self, lit: &str) -> Result<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{lit}'")))
        }
    }

    fn uint(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("expected an integer"))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let chars: Vec<char> = self.s[self.pos..].iter().map(|&b| b as char).collect();
        let len = number_len(&chars);
        if len == 0 {
            return Err(self.err("expected a number"));
        }
        let lexeme = std::str::from_utf8(&self.s[self.pos..self.pos + len]).unwrap();
        let v = lexeme.parse().map_err(|_| self.err("malformed number"))?;
        self.pos += len;
        Ok(v)
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        self.want("{")?;
        let mut out = Vec::new();
        if self.eat("}") {
            return Ok(out);
        }
        loop {
            out.push(self.uint()?);
            if self.eat("}") {
                return Ok(out);
            }
            self.want(",")?;
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.eat("(") {
            let outer = self.expr()?;
            self.want("C")?;
            let n = self.uint()?;
            self.want("_")?;
            let slot = self.uint()?;
            let arg = self.expr()?;
            self.want(")")?;
            if outer.arity() != n {
                return Err(self.err(format!(
                    "composition is marked arity {n} but its outer function has arity {}",
                    outer.arity()
                )));
            }
            return Expr::compose(outer, slot, arg);
        }
        if self.eat("A") {
            let n = self.uint()?;
            self.want("_")?;
            let positions = self.list()?;
            self.want("(")?;
            let inner = self.expr()?;
            self.want(")")?;
            return Expr::lift(inner, n, positions);
        }
        if self.eat("I_") {
            let slot = self.uint()?;
            self.want("[")?;
            let lo = self.number()?;
            self.want(":")?;
            let hi = self.number()?;
            self.want("]")?;
            self.want("(")?;
            let inner = self.expr()?;
            self.want(")")?;
            return Expr::inverse(inner, slot, (lo, hi));
        }
        if self.s[self.pos..].first() == Some(&b'C') {
            self.pos += 1;
            let n = self.uint()?;
            self.want("_")?;
            let ij = self.list()?;
            if ij.len() != 2 {
                return Err(self.err("projection needs exactly two slots"));
            }
            self.want("(")?;
            let inner = self.expr()?;
            self.want(")")?;
            if inner.arity() != n {
                return Err(self.err(format!(
                    "projection is marked arity {n} but its argument has arity {}",
                    inner.arity()
                )));
            }
            return Expr::diagonal(inner, ij[0], ij[1]);
        }
        let rest = &self.s[self.pos..];
        let word_len = rest.iter().take_while(|b| b.is_ascii_alphabetic()).count();
        if word_len > 0 {
            let word = std::str::from_utf8(&rest[..word_len]).unwrap();
            if let Some(p) = Primitive::from_name(word) {
                self.pos += word_len;
                return Ok(Expr::prim(p));
            }
            return Err(self.err(format!("unknown primitive '{word}'")));
        }
        self.number().map(Expr::constant)
    }
}

/// Reads the operator notation produced by [`format`].
pub fn read_structural(text: &str) -> Result<Expr> {
    let mut r = Reader {
        s: text.as_bytes(),
        pos: 0,
    };
    let e = r.expr()?;
    r.skip_ws();
    if r.pos != r.s.len() {
        return Err(r.err("trailing input after expression"));
    }
    Ok(e)
}

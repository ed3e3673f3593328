//! Helpers shared by unit tests.

use crate::expr::Expr;
use crate::frontend::{parse, to_structural};

/// Compiles pointful text to its structural expression (one slot per symbol occurrence).
pub fn compile(text: &str) -> Expr {
    to_structural(&parse(text).expect("test expression parses"))
        .expect("test expression compiles")
        .expr
}

pub trait LiftTo {
    fn lift_to(&self, n: usize, positions: &[usize]) -> Expr;
}

impl LiftTo for Expr {
    fn lift_to(&self, n: usize, positions: &[usize]) -> Expr {
        Expr::lift(self.clone(), n, positions.to_vec()).expect("valid test lift")
    }
}

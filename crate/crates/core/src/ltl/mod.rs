//! LTL without next: syntax, parsing, lasso semantics and translation to a
//! Büchi automaton.

mod parse;
mod translate;

use std::fmt;

use thiserror::Error;

use crate::label::{Label, Symbol};

pub use parse::parse_ltl;
pub use translate::ltl_to_nba;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("syntax error at byte {offset}: expected one of {}", expected.join(", "))]
    Syntax { offset: usize, expected: Vec<&'static str> },
    #[error("unknown proposition `{name}` at byte {offset}")]
    UnknownProposition { offset: usize, name: String },
    #[error("lasso cycle must be nonempty")]
    EmptyCycle,
    #[error("temporal operator in a boolean guard")]
    NotBoolean,
}

/// Formula over `true`, propositions, `¬`, `∧`, `𝒰`, plus the derived `∨`,
/// `◇` and `□`. [`Formula::normalize`] rewrites derived operators into the
/// core syntax.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Atom(Label),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(i: u16) -> Self {
        Formula::Atom(Label::new(i))
    }

    pub fn not(self) -> Self {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Self) -> Self {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Self) -> Self {
        Formula::Or(Box::new(self), Box::new(other))
    }

    pub fn until(self, other: Self) -> Self {
        Formula::Until(Box::new(self), Box::new(other))
    }

    pub fn eventually(self) -> Self {
        Formula::Eventually(Box::new(self))
    }

    pub fn always(self) -> Self {
        Formula::Always(Box::new(self))
    }

    /// Core syntax only: `◇φ = true 𝒰 φ`, `□φ = ¬◇¬φ`, `φ∨ψ = ¬(¬φ∧¬ψ)`.
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(l) => Formula::Atom(*l),
            Formula::Not(a) => a.normalize().not(),
            Formula::And(a, b) => a.normalize().and(b.normalize()),
            Formula::Or(a, b) => a.normalize().not().and(b.normalize().not()).not(),
            Formula::Until(a, b) => a.normalize().until(b.normalize()),
            Formula::Eventually(a) => Formula::True.until(a.normalize()),
            Formula::Always(a) => Formula::True.until(a.normalize().not()).not(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Largest proposition index mentioned (0 if none).
    pub fn max_label(&self) -> usize {
        match self {
            Formula::True => 0,
            Formula::Atom(l) => l.index(),
            Formula::Not(a) | Formula::Eventually(a) | Formula::Always(a) => a.max_label(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => a.max_label().max(b.max_label()),
        }
    }

    pub fn is_boolean(&self) -> bool {
        match self {
            Formula::True | Formula::Atom(_) => true,
            Formula::Not(a) => a.is_boolean(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_boolean() && b.is_boolean(),
            _ => false,
        }
    }
}

impl fmt::Display for Formula {
    /// Fully parenthesized ASCII syntax accepted by [`parse_ltl`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(l) => write!(f, "{l}"),
            Formula::Not(a) => write!(f, "!{a}"),
            Formula::Eventually(a) => write!(f, "<>{a}"),
            Formula::Always(a) => write!(f, "[]{a}"),
            Formula::And(a, b) => write!(f, "({a} && {b})"),
            Formula::Or(a, b) => write!(f, "({a} || {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

/// Decides `prefix · cycle^ω ⊨ f` directly from the semantics.
///
/// Each subformula is evaluated on the `|prefix| + |cycle|` distinct positions
/// of the lasso; until is the least fixpoint of `b ∨ (a ∧ ○(a 𝒰 b))`.
pub fn eval_lasso(f: &Formula, prefix: &[Symbol], cycle: &[Symbol]) -> Result<bool, LtlError> {
    if cycle.is_empty() {
        return Err(LtlError::EmptyCycle);
    }
    let word: Vec<Symbol> = prefix.iter().chain(cycle).copied().collect();
    let n = word.len();
    let succ = |i: usize| if i + 1 < n { i + 1 } else { prefix.len() };
    Ok(eval_positions(f, &word, &succ)[0])
}

fn eval_positions(f: &Formula, word: &[Symbol], succ: &dyn Fn(usize) -> usize) -> Vec<bool> {
    let n = word.len();
    let until = |a: &[bool], b: &[bool]| {
        let mut v = vec![false; n];
        loop {
            let mut changed = false;
            for i in (0..n).rev() {
                let nv = b[i] || (a[i] && v[succ(i)]);
                if nv != v[i] {
                    v[i] = nv;
                    changed = true;
                }
            }
            if !changed {
                return v;
            }
        }
    };
    match f {
        Formula::True => vec![true; n],
        Formula::Atom(l) => word.iter().map(|s| *s == Some(*l)).collect(),
        Formula::Not(a) => eval_positions(a, word, succ).into_iter().map(|v| !v).collect(),
        Formula::And(a, b) => {
            let (x, y) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            x.iter().zip(&y).map(|(p, q)| *p && *q).collect()
        }
        Formula::Or(a, b) => {
            let (x, y) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            x.iter().zip(&y).map(|(p, q)| *p || *q).collect()
        }
        Formula::Until(a, b) => until(&eval_positions(a, word, succ), &eval_positions(b, word, succ)),
        Formula::Eventually(a) => until(&vec![true; n], &eval_positions(a, word, succ)),
        Formula::Always(a) => {
            let neg: Vec<bool> = eval_positions(a, word, succ).into_iter().map(|v| !v).collect();
            until(&vec![true; n], &neg).into_iter().map(|v| !v).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(i: u16) -> Symbol {
        Some(Label(i))
    }

    #[test]
    fn lasso_examples() {
        let f = Formula::atom(1).eventually();
        assert!(eval_lasso(&f, &[None], &[l(1)]).unwrap());
        let g = Formula::atom(1).always();
        assert!(!eval_lasso(&g, &[l(1)], &[None]).unwrap());
        let u = Formula::atom(1).not().until(Formula::atom(2));
        assert!(!eval_lasso(&u, &[l(1)], &[l(2)]).unwrap());
        assert!(eval_lasso(&u, &[None, l(3)], &[l(2)]).unwrap());
        assert_eq!(eval_lasso(&f, &[None], &[]), Err(LtlError::EmptyCycle));
    }

    #[test]
    fn normalize_agrees_with_derived_semantics() {
        let f = Formula::atom(1)
            .always()
            .or(Formula::atom(2).eventually())
            .and(Formula::atom(3).not().until(Formula::atom(1)));
        let g = f.normalize();
        let syms = [None, l(1), l(2), l(3)];
        for &a in &syms {
            for &b in &syms {
                for &c in &syms {
                    assert_eq!(
                        eval_lasso(&f, &[a, b], &[c]).unwrap(),
                        eval_lasso(&g, &[a, b], &[c]).unwrap()
                    );
                    assert_eq!(eval_lasso(&f, &[a], &[b, c]).unwrap(), eval_lasso(&g, &[a], &[b, c]).unwrap());
                }
            }
        }
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::label::{all_symbols, Label, Symbol};
use crate::ltl::{parse_ltl, Formula, LtlError};

/// A literal `π_i` or `¬π_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Lit {
    pub label: Label,
    pub positive: bool,
}

impl Lit {
    pub fn pos(i: u16) -> Self {
        Lit { label: Label(i), positive: true }
    }

    pub fn neg(i: u16) -> Self {
        Lit { label: Label(i), positive: false }
    }

    pub fn holds(self, s: Symbol) -> bool {
        (s == Some(self.label)) == self.positive
    }
}

/// Conjunction of literals, sorted and deduplicated. Empty means `true`.
pub type Conj = Vec<Lit>;

/// Transition guard in disjunctive normal form. No disjuncts means `false`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Guard {
    disjuncts: Vec<Conj>,
}

impl Guard {
    pub fn tt() -> Self {
        Guard { disjuncts: vec![vec![]] }
    }

    pub fn ff() -> Self {
        Guard { disjuncts: vec![] }
    }

    pub fn lit(l: Lit) -> Self {
        Guard { disjuncts: vec![vec![l]] }
    }

    pub fn conj(lits: impl IntoIterator<Item = Lit>) -> Self {
        Guard::from_disjuncts(vec![lits.into_iter().collect()])
    }

    /// Builds a normalized guard: sorted literals, contradictory conjuncts
    /// (`π ∧ ¬π`) dropped, subsumed conjuncts removed, conjuncts sorted.
    pub fn from_disjuncts(disjuncts: Vec<Conj>) -> Self {
        let mut ds: Vec<Conj> = disjuncts
            .into_iter()
            .filter_map(|mut c| {
                c.sort();
                c.dedup();
                let contradictory = c
                    .windows(2)
                    .any(|w| w[0].label == w[1].label && w[0].positive != w[1].positive);
                (!contradictory).then_some(c)
            })
            .collect();
        ds.sort();
        ds.dedup();
        let subsumed = |i: usize, ds: &[Conj]| {
            ds.iter()
                .enumerate()
                .any(|(j, d)| j != i && d.len() < ds[i].len() && d.iter().all(|l| ds[i].contains(l)))
        };
        let keep: Vec<Conj> = (0..ds.len()).filter(|&i| !subsumed(i, &ds)).map(|i| ds[i].clone()).collect();
        Guard { disjuncts: keep }
    }

    /// Canonical guard satisfied by exactly the symbols in `accepted` among
    /// `∅` and the labels of `alphabet`. Labels outside the alphabet behave
    /// like `∅`.
    pub fn from_symbols(accepted: &[Symbol], alphabet: &[Label]) -> Self {
        if accepted.contains(&None) {
            Guard::conj(alphabet.iter().filter(|&&l| !accepted.contains(&Some(l))).map(|l| Lit::neg(l.0)))
        } else {
            Guard::from_disjuncts(accepted.iter().flatten().map(|l| vec![Lit::pos(l.0)]).collect())
        }
    }

    /// Labels mentioned by some literal.
    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.disjuncts.iter().flatten().map(|l| l.label)
    }

    pub fn disjuncts(&self) -> &[Conj] {
        &self.disjuncts
    }

    pub fn is_false(&self) -> bool {
        self.disjuncts.is_empty()
    }

    pub fn is_true(&self) -> bool {
        self.disjuncts.iter().any(Vec::is_empty)
    }

    pub fn or(&self, other: &Guard) -> Guard {
        let mut ds = self.disjuncts.clone();
        ds.extend(other.disjuncts.iter().cloned());
        Guard::from_disjuncts(ds)
    }

    pub fn and(&self, other: &Guard) -> Guard {
        let mut ds = Vec::new();
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                ds.push(a.iter().chain(b).copied().collect());
            }
        }
        Guard::from_disjuncts(ds)
    }

    pub fn holds(&self, s: Symbol) -> bool {
        self.disjuncts.iter().any(|c| c.iter().all(|l| l.holds(s)))
    }

    pub fn max_label(&self) -> usize {
        self.disjuncts.iter().flatten().map(|l| l.label.index()).max().unwrap_or(0)
    }

    /// A symbol in `{∅, {l1}, …, {lm}}` satisfying the guard, preferring `∅`
    /// and then lower labels.
    pub fn witness(&self, m: usize) -> Option<Symbol> {
        all_symbols(m).find(|&s| self.holds(s))
    }

    /// Satisfiable under mutually exclusive labels, whatever the label count.
    pub fn feasible(&self) -> bool {
        self.disjuncts.iter().any(|c| {
            let mut positives = c.iter().filter(|l| l.positive).map(|l| l.label);
            match positives.next() {
                None => true,
                Some(p) => positives.all(|q| q == p) && !c.iter().any(|l| !l.positive && l.label == p),
            }
        })
    }

    /// Boolean formula to DNF. Fails on temporal operators.
    pub fn from_formula(f: &Formula) -> Result<Guard, LtlError> {
        fn go(f: &Formula, neg: bool) -> Result<Guard, LtlError> {
            Ok(match f {
                Formula::True => {
                    if neg {
                        Guard::ff()
                    } else {
                        Guard::tt()
                    }
                }
                Formula::Atom(l) => Guard::lit(Lit { label: *l, positive: !neg }),
                Formula::Not(a) => go(a, !neg)?,
                Formula::And(a, b) if !neg => go(a, false)?.and(&go(b, false)?),
                Formula::And(a, b) => go(a, true)?.or(&go(b, true)?),
                Formula::Or(a, b) if !neg => go(a, false)?.or(&go(b, false)?),
                Formula::Or(a, b) => go(a, true)?.and(&go(b, true)?),
                _ => return Err(LtlError::NotBoolean),
            })
        }
        go(f, false)
    }

    /// Parses the boolean subset of the formula syntax; `1`/`0` are accepted
    /// for `true`/`false`.
    pub fn parse(text: &str) -> Result<Guard, LtlError> {
        Guard::from_formula(&parse_ltl(text)?)
    }
}

/// Witness symbol for `g` over `m` labels, or `None` when no symbol satisfies it.
pub fn guard_sat(g: &Guard, m: usize) -> Option<Symbol> {
    g.witness(m)
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_false() {
            return write!(f, "false");
        }
        let parts: Vec<String> = self
            .disjuncts
            .iter()
            .map(|c| {
                if c.is_empty() {
                    "true".to_string()
                } else {
                    c.iter()
                        .map(|l| if l.positive { format!("{}", l.label) } else { format!("!{}", l.label) })
                        .collect::<Vec<_>>()
                        .join(" & ")
                }
            })
            .collect();
        write!(f, "{}", parts.join(" | "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(i: u16) -> Symbol {
        Some(Label(i))
    }

    #[test]
    fn two_positive_labels_have_no_witness() {
        let g = Guard::conj([Lit::pos(1), Lit::pos(2)]);
        // oracle: enumerate ∅ and every singleton
        for m in 2..6 {
            let any = std::iter::once(None)
                .chain((1..=m as u16).map(|i| Some(Label(i))))
                .any(|s| g.holds(s));
            assert!(!any);
            assert_eq!(guard_sat(&g, m), None);
        }
        assert!(!g.feasible());
    }

    #[test]
    fn witnesses() {
        assert_eq!(guard_sat(&Guard::lit(Lit::neg(1)), 3), Some(None));
        assert_eq!(guard_sat(&Guard::tt(), 3), Some(None));
        assert_eq!(guard_sat(&Guard::lit(Lit::pos(2)), 3), Some(l(2)));
        assert_eq!(guard_sat(&Guard::lit(Lit::pos(4)), 3), None);
        assert_eq!(guard_sat(&Guard::conj([Lit::neg(1), Lit::pos(3)]), 3), Some(l(3)));
    }

    #[test]
    fn normalization() {
        let g = Guard::from_disjuncts(vec![vec![Lit::pos(1), Lit::neg(1)], vec![Lit::pos(2), Lit::neg(3)], vec![Lit::pos(2)]]);
        assert_eq!(g.disjuncts(), &[vec![Lit::pos(2)]]);
        assert_eq!(g.to_string(), "l2");
        assert!(Guard::from_disjuncts(vec![vec![Lit::pos(1), Lit::neg(1)]]).is_false());
    }

    #[test]
    fn parse_and_print() {
        let g = Guard::parse("!l1 & l3").unwrap();
        assert_eq!(g, Guard::conj([Lit::neg(1), Lit::pos(3)]));
        assert_eq!(g.to_string(), "!l1 & l3");
        assert_eq!(Guard::parse("1").unwrap(), Guard::tt());
        assert_eq!(Guard::parse(&g.to_string()).unwrap(), g);
        let h = Guard::parse("!(l1 | l2)").unwrap();
        assert_eq!(h, Guard::conj([Lit::neg(1), Lit::neg(2)]));
        assert!(matches!(Guard::parse("<> l1"), Err(LtlError::NotBoolean)));
        let d = Guard::parse("l1 | l2 & !l3").unwrap();
        assert_eq!(Guard::parse(&d.to_string()).unwrap(), d);
    }
}

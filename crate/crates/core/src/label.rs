//! Atomic propositions and the symbols read by the automaton.
//!
//! Labeled regions are pairwise disjoint, so every point carries at most one
//! proposition. A [`Symbol`] is therefore either the empty set (`None`) or a
//! singleton (`Some(label)`).

use std::fmt;

use serde::{Deserialize, Serialize};

/// A 1-based atomic proposition index, printed as `l<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label(pub u16);

impl Label {
    pub fn new(index: u16) -> Self {
        assert!(index >= 1, "labels are 1-based");
        Label(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// The letter read at one position of a trace: `None` is the empty set.
pub type Symbol = Option<Label>;

/// Dense index of a symbol in `0..=m`: 0 for the empty set, `i` for `{l_i}`.
pub fn symbol_index(s: Symbol) -> usize {
    s.map_or(0, Label::index)
}

/// Inverse of [`symbol_index`].
pub fn symbol_from_index(i: usize) -> Symbol {
    if i == 0 {
        None
    } else {
        Some(Label(i as u16))
    }
}

/// All symbols over `m` labels in dense order: `∅, {l1}, …, {lm}`.
pub fn all_symbols(m: usize) -> impl Iterator<Item = Symbol> {
    (0..=m).map(symbol_from_index)
}

pub fn format_symbol(s: Symbol) -> String {
    match s {
        None => "{}".to_string(),
        Some(l) => format!("{{{l}}}"),
    }
}

//! Tableau translation to a generalized Büchi automaton, then
//! degeneralization and a merge of bisimilar states.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::Formula;
use crate::buchi::{Guard, Lit, Nba};
use crate::label::{Label, Symbol};

type Id = usize;

/// Negation normal form with release as the dual of until.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Nnf {
    True,
    False,
    Lit(Label, bool),
    And(Id, Id),
    Or(Id, Id),
    Until(Id, Id),
    Release(Id, Id),
}

#[derive(Default)]
struct Arena {
    nodes: Vec<Nnf>,
    index: HashMap<Nnf, Id>,
}

impl Arena {
    fn intern(&mut self, f: Nnf) -> Id {
        if let Some(&id) = self.index.get(&f) {
            return id;
        }
        self.nodes.push(f.clone());
        self.index.insert(f, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn build(&mut self, f: &Formula, neg: bool) -> Id {
        let node = match (f, neg) {
            (Formula::True, false) => Nnf::True,
            (Formula::True, true) => Nnf::False,
            (Formula::Atom(l), _) => Nnf::Lit(*l, !neg),
            (Formula::Not(a), _) => return self.build(a, !neg),
            (Formula::And(a, b), false) | (Formula::Or(a, b), true) => Nnf::And(self.build(a, neg), self.build(b, neg)),
            (Formula::Or(a, b), false) | (Formula::And(a, b), true) => Nnf::Or(self.build(a, neg), self.build(b, neg)),
            (Formula::Until(a, b), false) => Nnf::Until(self.build(a, false), self.build(b, false)),
            (Formula::Until(a, b), true) => Nnf::Release(self.build(a, true), self.build(b, true)),
            (Formula::Eventually(a), false) | (Formula::Always(a), true) => {
                let t = self.intern(Nnf::True);
                Nnf::Until(t, self.build(a, neg))
            }
            (Formula::Always(a), false) | (Formula::Eventually(a), true) => {
                let ff = self.intern(Nnf::False);
                Nnf::Release(ff, self.build(a, neg))
            }
        };
        self.intern(node)
    }

    fn show(&self, id: Id) -> String {
        match &self.nodes[id] {
            Nnf::True => "true".into(),
            Nnf::False => "false".into(),
            Nnf::Lit(l, true) => l.to_string(),
            Nnf::Lit(l, false) => format!("!{l}"),
            Nnf::And(a, b) => format!("({} && {})", self.show(*a), self.show(*b)),
            Nnf::Or(a, b) => format!("({} || {})", self.show(*a), self.show(*b)),
            Nnf::Until(a, b) => format!("({} U {})", self.show(*a), self.show(*b)),
            Nnf::Release(a, b) => format!("({} R {})", self.show(*a), self.show(*b)),
        }
    }
}

const INIT: usize = usize::MAX;

struct Node {
    incoming: BTreeSet<usize>,
    new: BTreeSet<Id>,
    old: BTreeSet<Id>,
    next: BTreeSet<Id>,
}

struct Tableau<'a> {
    arena: &'a Arena,
    done: Vec<Node>,
}

impl Tableau<'_> {
    fn expand(&mut self, mut node: Node) {
        let Some(&f) = node.new.iter().next() else {
            if let Some(existing) = self.done.iter_mut().find(|d| d.old == node.old && d.next == node.next) {
                existing.incoming.extend(node.incoming);
                return;
            }
            let next = node.next.clone();
            self.done.push(node);
            let id = self.done.len() - 1;
            self.expand(Node {
                incoming: BTreeSet::from([id]),
                new: next,
                old: BTreeSet::new(),
                next: BTreeSet::new(),
            });
            return;
        };
        node.new.remove(&f);
        if node.old.contains(&f) {
            return self.expand(node);
        }
        match &self.arena.nodes[f] {
            Nnf::False => {}
            Nnf::True => {
                node.old.insert(f);
                self.expand(node);
            }
            Nnf::Lit(l, pos) => {
                let contradiction = self.arena.index.get(&Nnf::Lit(*l, !pos)).is_some_and(|c| node.old.contains(c));
                if !contradiction {
                    node.old.insert(f);
                    self.expand(node);
                }
            }
            &Nnf::And(a, b) => {
                node.old.insert(f);
                node.new.extend([a, b].into_iter().filter(|x| !node.old.contains(x)));
                self.expand(node);
            }
            &Nnf::Or(a, b) => self.split(node, f, &[a], &[], &[b]),
            &Nnf::Until(a, b) => self.split(node, f, &[a], &[f], &[b]),
            &Nnf::Release(a, b) => self.split(node, f, &[b], &[f], &[a, b]),
        }
    }

    fn split(&mut self, node: Node, f: Id, new1: &[Id], next1: &[Id], new2: &[Id]) {
        let mut old = node.old;
        old.insert(f);
        let fresh = |add: &[Id]| -> BTreeSet<Id> {
            node.new.iter().copied().chain(add.iter().copied().filter(|x| !old.contains(x))).collect()
        };
        let first = Node {
            incoming: node.incoming.clone(),
            new: fresh(new1),
            old: old.clone(),
            next: node.next.iter().chain(next1).copied().collect(),
        };
        let second = Node { incoming: node.incoming, new: fresh(new2), old: old.clone(), next: node.next };
        self.expand(first);
        self.expand(second);
    }
}

/// Translates a formula into a state-based Büchi automaton accepting exactly
/// the words satisfying it. The result has a single initial state (index 0)
/// and only reachable states.
pub fn ltl_to_nba(f: &Formula) -> Nba {
    let mut arena = Arena::default();
    let root = arena.build(f, false);
    let mut tab = Tableau { arena: &arena, done: Vec::new() };
    tab.expand(Node {
        incoming: BTreeSet::from([INIT]),
        new: BTreeSet::from([root]),
        old: BTreeSet::new(),
        next: BTreeSet::new(),
    });
    let nodes = tab.done;

    let mut untils: Vec<(String, Id, Id)> = (0..arena.nodes.len())
        .filter_map(|id| match arena.nodes[id] {
            Nnf::Until(_, b) => Some((arena.show(id), id, b)),
            _ => None,
        })
        .collect();
    untils.sort();
    let k = untils.len();
    let in_set = |n: &Node, i: usize| {
        let (_, u, b) = &untils[i];
        !n.old.contains(u) || n.old.contains(b)
    };
    let guard_of = |n: &Node| {
        Guard::conj(n.old.iter().filter_map(|&id| match arena.nodes[id] {
            Nnf::Lit(label, positive) => Some(Lit { label, positive }),
            _ => None,
        }))
    };

    // state 0 is the initial pseudo-node; tableau node j is state j + 1.
    // Level i < k waits for acceptance set i; entering a node advances the
    // level past every set it belongs to, and level k is accepting.
    let layers = k + 1;
    let sid = |s: usize, c: usize| s * layers + c;
    let n_states = (nodes.len() + 1) * layers;
    let mut edges = Vec::new();
    for (j, n) in nodes.iter().enumerate() {
        let g = guard_of(n);
        for &src in &n.incoming {
            let s = if src == INIT { 0 } else { src + 1 };
            for c in 0..layers {
                let mut c2 = if c == k { 0 } else { c };
                while c2 < k && in_set(n, c2) {
                    c2 += 1;
                }
                edges.push((sid(s, c), g.clone(), sid(j + 1, c2)));
            }
        }
    }
    // the initial pseudo-state is never re-entered, so its acceptance only
    // matters for merging
    let first = usize::from(k > 0);
    let accepting: Vec<usize> = (first..=nodes.len()).map(|s| sid(s, k)).collect();
    let nba = Nba::new(n_states, sid(0, 0), accepting, edges).expect("indices in range").trim_unreachable();
    merge_bisimilar(&nba).trim_unreachable()
}

/// Quotient by the coarsest partition that respects acceptance and in which
/// related states have the same guarded moves into each block.
/// Merges bisimilar states and rewrites every guard in canonical form.
/// Symbols are `∅` and single labels, so successor sets per symbol decide
/// equivalence.
fn merge_bisimilar(b: &Nba) -> Nba {
    let n = b.state_count();
    let alphabet: Vec<Label> = b.edges().iter().flat_map(|e| e.guard.labels()).collect::<BTreeSet<_>>().into_iter().collect();
    let symbols: Vec<Symbol> = std::iter::once(None).chain(alphabet.iter().map(|&l| Some(l))).collect();
    // succ[q][i]: successors of q on symbols[i]
    let succ: Vec<Vec<Vec<usize>>> =
        (0..n).map(|q| symbols.iter().map(|&s| b.successors(q, s).collect()).collect()).collect();
    let mut class: Vec<usize> = (0..n).map(|q| usize::from(b.is_accepting(q))).collect();
    loop {
        let keys: Vec<(usize, Vec<BTreeSet<usize>>)> = (0..n)
            .map(|q| (class[q], succ[q].iter().map(|ds| ds.iter().map(|&d| class[d]).collect()).collect()))
            .collect();
        let mut ids: BTreeMap<&(usize, Vec<BTreeSet<usize>>), usize> = BTreeMap::new();
        // number blocks by first occurrence so the result does not depend on map order
        let refined: Vec<usize> = keys
            .iter()
            .map(|k| {
                let next = ids.len();
                *ids.entry(k).or_insert(next)
            })
            .collect();
        let stable = ids.len() == class.iter().collect::<BTreeSet<_>>().len();
        class = refined;
        if stable {
            break;
        }
    }
    let blocks = class.iter().max().map_or(0, |m| m + 1);
    let mut rep = vec![usize::MAX; blocks];
    for q in (0..n).rev() {
        rep[class[q]] = q;
    }
    let mut edges = Vec::new();
    for (c, &q) in rep.iter().enumerate() {
        let mut by_dst: BTreeMap<usize, Vec<Symbol>> = BTreeMap::new();
        for (i, ds) in succ[q].iter().enumerate() {
            for d in ds.iter().map(|&d| class[d]).collect::<BTreeSet<_>>() {
                by_dst.entry(d).or_default().push(symbols[i]);
            }
        }
        for (d, accepted) in by_dst {
            edges.push((c, Guard::from_symbols(&accepted, &alphabet), d));
        }
    }
    let accepting = (0..n).filter(|&q| b.is_accepting(q)).map(|q| class[q]);
    Nba::new(blocks, class[b.init()], accepting, edges).expect("classes in range")
}

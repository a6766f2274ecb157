//! Nondeterministic Büchi automata with guard-labeled transitions.
//!
//! A transition `(q, g, q')` fires when the symbol read at the current
//! position satisfies `g`. Symbols are `∅` or singletons (regions are
//! disjoint), which is what makes guards such as `l1 ∧ l2` infeasible.

mod guard;
mod hoa;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Symbol;
use crate::ltl::LtlError;

pub use guard::{guard_sat, Conj, Guard, Lit};
pub use hoa::parse_hoa;

#[derive(Debug, Error)]
pub enum BuchiError {
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("no feasible accepting state")]
    NoFeasibleAccepting,
    #[error("suffix word must be nonempty")]
    EmptySuffix,
    #[error("HOA syntax error on line {line}: {msg}")]
    HoaSyntax { line: usize, msg: String },
    #[error("unsupported HOA feature: {0}")]
    UnsupportedFeature(String),
    #[error("bad guard `{text}`: {source}")]
    Guard { text: String, source: LtlError },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub guard: Guard,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nba {
    n: usize,
    init: usize,
    accepting: Vec<bool>,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

impl Nba {
    /// Parallel edges between the same pair of states are merged into one
    /// guard; edges whose guard is `false` are dropped.
    pub fn new(
        n: usize,
        init: usize,
        accepting: impl IntoIterator<Item = usize>,
        edges: impl IntoIterator<Item = (usize, Guard, usize)>,
    ) -> Result<Nba, BuchiError> {
        if init >= n {
            return Err(BuchiError::StateOutOfRange(init));
        }
        let mut acc = vec![false; n];
        for q in accepting {
            *acc.get_mut(q).ok_or(BuchiError::StateOutOfRange(q))? = true;
        }
        let mut merged: BTreeMap<(usize, usize), Guard> = BTreeMap::new();
        for (s, g, d) in edges {
            if s >= n || d >= n {
                return Err(BuchiError::StateOutOfRange(s.max(d)));
            }
            let e = merged.entry((s, d)).or_insert_with(Guard::ff);
            *e = e.or(&g);
        }
        let edges: Vec<Edge> = merged
            .into_iter()
            .filter(|(_, g)| !g.is_false())
            .map(|((src, dst), guard)| Edge { src, guard, dst })
            .collect();
        let mut out = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out[e.src].push(i);
        }
        Ok(Nba { n, init, accepting: acc, edges, out })
    }

    pub fn state_count(&self) -> usize {
        self.n
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.accepting[q]).collect()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, q: usize) -> impl Iterator<Item = &Edge> {
        self.out[q].iter().map(move |&i| &self.edges[i])
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&Edge> {
        self.out_edges(src).find(|e| e.dst == dst)
    }

    /// States reachable from `q` in one step reading `s`.
    pub fn successors(&self, q: usize, s: Symbol) -> impl Iterator<Item = usize> + '_ {
        self.out_edges(q).filter(move |e| e.guard.holds(s)).map(|e| e.dst)
    }

    pub fn max_label(&self) -> usize {
        self.edges.iter().map(|e| e.guard.max_label()).max().unwrap_or(0)
    }

    /// Same automaton with every guard passed through `f`.
    pub fn map_guards(&self, f: impl Fn(&Guard) -> Guard) -> Nba {
        let edges = self.edges.iter().map(|e| (e.src, f(&e.guard), e.dst));
        Nba::new(self.n, self.init, self.accepting_states(), edges).expect("indices unchanged")
    }

    /// Keeps only the states reachable from the initial state, renumbered in
    /// breadth-first order (the initial state becomes 0).
    pub fn trim_unreachable(&self) -> Nba {
        let mut order = vec![usize::MAX; self.n];
        let mut queue = VecDeque::from([self.init]);
        let mut next = 0;
        order[self.init] = 0;
        next += 1;
        let mut visit = Vec::new();
        while let Some(q) = queue.pop_front() {
            visit.push(q);
            for e in self.out_edges(q) {
                if order[e.dst] == usize::MAX {
                    order[e.dst] = next;
                    next += 1;
                    queue.push_back(e.dst);
                }
            }
        }
        let accepting = visit.iter().filter(|&&q| self.accepting[q]).map(|&q| order[q]);
        let edges = self
            .edges
            .iter()
            .filter(|e| order[e.src] != usize::MAX)
            .map(|e| (order[e.src], e.guard.clone(), order[e.dst]));
        Nba::new(next, 0, accepting, edges).expect("renumbering is in range")
    }

    pub fn to_json(&self) -> String {
        let file = NbaFile {
            n: self.n,
            init: self.init,
            accepting: self.accepting_states(),
            edges: self.edges.iter().map(|e| (e.src, e.guard.to_string(), e.dst)).collect(),
        };
        serde_json::to_string(&file).expect("nba serializes")
    }

    pub fn from_json(text: &str) -> Result<Nba, BuchiError> {
        let file: NbaFile = serde_json::from_str(text)?;
        let edges = file
            .edges
            .into_iter()
            .map(|(s, g, d)| {
                Guard::parse(&g)
                    .map(|guard| (s, guard, d))
                    .map_err(|source| BuchiError::Guard { text: g, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Nba::new(file.n, file.init, file.accepting, edges)
    }

    /// HOA v1 with state-based Büchi acceptance; APs are `l1..lk`.
    pub fn to_hoa(&self) -> String {
        let k = self.max_label().max(1);
        let mut s = String::new();
        s.push_str("HOA: v1\n");
        s.push_str(&format!("States: {}\n", self.n));
        s.push_str(&format!("Start: {}\n", self.init));
        s.push_str(&format!("AP: {k}"));
        for i in 1..=k {
            s.push_str(&format!(" \"l{i}\""));
        }
        s.push('\n');
        s.push_str("acc-name: Buchi\nAcceptance: 1 Inf(0)\n");
        s.push_str("properties: trans-labels explicit-labels state-acc\n--BODY--\n");
        for q in 0..self.n {
            if self.accepting[q] {
                s.push_str(&format!("State: {q} {{0}}\n"));
            } else {
                s.push_str(&format!("State: {q}\n"));
            }
            for e in self.out_edges(q) {
                s.push_str(&format!("[{}] {}\n", hoa::guard_to_hoa(&e.guard), e.dst));
            }
        }
        s.push_str("--END--\n");
        s
    }
}

impl fmt::Display for Nba {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}, init: {}, accepting: {:?}", self.n, self.init, self.accepting_states())?;
        for e in &self.edges {
            writeln!(f, "  {} -[{}]-> {}", e.src, e.guard, e.dst)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NbaFile {
    n: usize,
    init: usize,
    accepting: Vec<usize>,
    edges: Vec<(usize, String, usize)>,
}

/// Removes every transition that no symbol can enable under mutually
/// exclusive labels; infeasible disjuncts of surviving guards are dropped too.
pub fn prune_infeasible(b: &Nba) -> Nba {
    b.map_guards(|g| {
        Guard::from_disjuncts(
            g.disjuncts()
                .iter()
                .filter(|c| Guard::from_disjuncts(vec![(*c).clone()]).feasible())
                .cloned()
                .collect(),
        )
    })
}

/// Keeps only guard disjuncts satisfied by at least one of `symbols`, e.g. the
/// symbols actually present in a workspace.
pub fn restrict_to_symbols(b: &Nba, symbols: &[Symbol]) -> Nba {
    b.map_guards(|g| {
        Guard::from_disjuncts(
            g.disjuncts()
                .iter()
                .filter(|c| symbols.iter().any(|&s| c.iter().all(|l| l.holds(s))))
                .cloned()
                .collect(),
        )
    })
}

/// Hop distances between automaton states.
///
/// `get(q, q')` is the length of the shortest *nonempty* path, so the
/// diagonal holds the shortest cycle through a state rather than 0. A state
/// can be revisited iff its diagonal entry is finite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    d: Vec<u32>,
}

impl DistanceTable {
    pub const INF: u32 = u32::MAX;

    pub fn state_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> Option<u32> {
        let v = self.d[from * self.n + to];
        (v != Self::INF).then_some(v)
    }

    /// Hops still needed to *be* in `to`: 0 when already there.
    pub fn reach(&self, from: usize, to: usize) -> Option<u32> {
        if from == to {
            Some(0)
        } else {
            self.get(from, to)
        }
    }

    pub fn row(&self, from: usize) -> Vec<Option<u32>> {
        (0..self.n).map(|to| self.get(from, to)).collect()
    }
}

/// Breadth-first hop distances on the edge relation of `b`.
pub fn compute_rho(b: &Nba) -> DistanceTable {
    let n = b.state_count();
    let mut d = vec![DistanceTable::INF; n * n];
    for src in 0..n {
        let row = &mut d[src * n..(src + 1) * n];
        let mut queue = VecDeque::new();
        for e in b.out_edges(src) {
            if row[e.dst] == DistanceTable::INF {
                row[e.dst] = 1;
                queue.push_back(e.dst);
            }
        }
        while let Some(q) = queue.pop_front() {
            for e in b.out_edges(q) {
                if row[e.dst] == DistanceTable::INF {
                    row[e.dst] = row[q] + 1;
                    queue.push_back(e.dst);
                }
            }
        }
    }
    DistanceTable { n, d }
}

/// Accepting states reachable from the initial state that lie on a cycle.
pub fn feasible_accepting(b: &Nba, d: &DistanceTable) -> Result<Vec<usize>, BuchiError> {
    let init = b.init();
    let set: Vec<usize> = (0..b.state_count())
        .filter(|&q| b.is_accepting(q) && d.reach(init, q).is_some() && d.get(q, q).is_some())
        .collect();
    if set.is_empty() {
        Err(BuchiError::NoFeasibleAccepting)
    } else {
        Ok(set)
    }
}

/// Whether `prefix · suffix^ω` has an accepting run.
///
/// After simulating the prefix on the set of reachable states, the run over
/// the suffix is a walk in the finite graph of (state, suffix position)
/// pairs; the word is accepted iff a reachable node with an accepting state
/// lies on a cycle of that graph.
pub fn accepts_prefix_suffix(b: &Nba, prefix: &[Symbol], suffix: &[Symbol]) -> Result<bool, BuchiError> {
    if suffix.is_empty() {
        return Err(BuchiError::EmptySuffix);
    }
    let n = b.state_count();
    let mut current = vec![false; n];
    current[b.init()] = true;
    for &s in prefix {
        let mut next = vec![false; n];
        for q in (0..n).filter(|&q| current[q]) {
            for r in b.successors(q, s) {
                next[r] = true;
            }
        }
        current = next;
    }
    let k = suffix.len();
    let node = |q: usize, j: usize| q * k + j;
    let succ = |id: usize| {
        let (q, j) = (id / k, id % k);
        b.successors(q, suffix[j]).map(move |r| node(r, (j + 1) % k))
    };
    let mut reach = vec![false; n * k];
    let mut queue: VecDeque<usize> = (0..n).filter(|&q| current[q]).map(|q| node(q, 0)).collect();
    for &id in &queue {
        reach[id] = true;
    }
    while let Some(id) = queue.pop_front() {
        for nx in succ(id) {
            if !reach[nx] {
                reach[nx] = true;
                queue.push_back(nx);
            }
        }
    }
    for start in (0..n * k).filter(|&id| reach[id] && b.is_accepting(id / k)) {
        let mut seen = vec![false; n * k];
        let mut queue: VecDeque<usize> = succ(start).collect();
        while let Some(id) = queue.pop_front() {
            if id == start {
                return Ok(true);
            }
            if !seen[id] {
                seen[id] = true;
                queue.extend(succ(id));
            }
        }
    }
    Ok(false)
}

/// The five-state automaton drawn for `□◇l1 ∧ ¬l1 𝒰 l2 ∧ ◇l3` in the case study.
pub fn case_study_nba() -> Nba {
    let g = |t: &str| Guard::parse(t).expect("fixture guard");
    Nba::new(
        5,
        0,
        [4],
        [
            (0, g("!l1"), 0),
            (0, g("!l1 & l3"), 1),
            (0, g("l2"), 2),
            (0, g("l2 & l3"), 3),
            (1, g("!l1"), 1),
            (1, g("l2"), 3),
            (2, g("1"), 2),
            (2, g("l3"), 3),
            (3, g("1"), 3),
            (3, g("l1"), 4),
            (4, g("l1"), 4),
            (4, g("1"), 3),
        ],
    )
    .expect("fixture is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l(i: u16) -> Symbol {
        Some(Label(i))
    }

    /// Floyd–Warshall seeded with single edges; the diagonal then holds
    /// shortest nonempty cycles.
    pub(crate) fn floyd_warshall(b: &Nba) -> Vec<Vec<Option<u32>>> {
        let n = b.state_count();
        let mut d = vec![vec![None; n]; n];
        for e in b.edges() {
            d[e.src][e.dst] = Some(1u32);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (Some(a), Some(c)) = (d[i][k], d[k][j]) {
                        if d[i][j].map_or(true, |v| a + c < v) {
                            d[i][j] = Some(a + c);
                        }
                    }
                }
            }
        }
        d
    }

    fn random_nba(rng: &mut ChaCha8Rng) -> Nba {
        let n = rng.gen_range(1..=12);
        let m = rng.gen_range(0..=40);
        let edges: Vec<_> = (0..m)
            .map(|_| (rng.gen_range(0..n), Guard::tt(), rng.gen_range(0..n)))
            .collect();
        let acc: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        Nba::new(n, 0, acc, edges).unwrap()
    }

    #[test]
    fn chain_distances() {
        let b = Nba::new(2, 0, [1], [(0, Guard::tt(), 1)]).unwrap();
        let d = compute_rho(&b);
        assert_eq!(d.get(0, 1), Some(1));
        assert_eq!(d.get(1, 0), None);
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.reach(0, 0), Some(0));
    }

    #[test]
    fn rho_matches_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let b = random_nba(&mut rng);
            let d = compute_rho(&b);
            let fw = floyd_warshall(&b);
            for i in 0..b.state_count() {
                assert_eq!(d.row(i), fw[i]);
            }
        }
    }

    #[test]
    fn rho_monotone_under_edge_addition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let b = random_nba(&mut rng);
            let n = b.state_count();
            let mut edges: Vec<_> = b.edges().iter().map(|e| (e.src, e.guard.clone(), e.dst)).collect();
            edges.push((rng.gen_range(0..n), Guard::tt(), rng.gen_range(0..n)));
            let bigger = Nba::new(n, 0, b.accepting_states(), edges).unwrap();
            let (d0, d1) = (compute_rho(&b), compute_rho(&bigger));
            for i in 0..n {
                for j in 0..n {
                    match (d0.get(i, j), d1.get(i, j)) {
                        (Some(a), Some(c)) => assert!(c <= a),
                        (Some(_), None) => panic!("distance became infinite"),
                        _ => {}
                    }
                }
            }
        }
    }

    #[test]
    fn case_study_structure() {
        let b = case_study_nba();
        // the l2 ∧ l3 edge needs two regions at once
        let pruned = prune_infeasible(&b);
        assert!(b.edge(0, 3).is_some());
        assert!(pruned.edge(0, 3).is_none());
        assert_eq!(pruned.edges().len(), b.edges().len() - 1);
        assert_eq!(prune_infeasible(&pruned), pruned);
        let d_raw = compute_rho(&b);
        assert_eq!(d_raw.get(0, 4), Some(2));
        let d = compute_rho(&pruned);
        assert_eq!(d.get(0, 4), Some(3));
        assert_eq!(feasible_accepting(&pruned, &d).unwrap(), vec![4]);
    }

    #[test]
    fn pruning_single_literal_guards_is_identity() {
        let b = Nba::new(2, 0, [1], [(0, Guard::lit(Lit::pos(1)), 1), (1, Guard::lit(Lit::neg(2)), 1)]).unwrap();
        assert_eq!(prune_infeasible(&b), b);
        let c = Nba::new(2, 0, [1], [(0, Guard::conj([Lit::pos(1), Lit::pos(2)]), 1)]).unwrap();
        assert!(prune_infeasible(&c).edges().is_empty());
    }

    #[test]
    fn feasible_accepting_cases() {
        // accepting state 2 unreachable from 0
        let b = Nba::new(3, 0, [1, 2], [(0, Guard::tt(), 1), (1, Guard::tt(), 1), (2, Guard::tt(), 2)]).unwrap();
        let d = compute_rho(&b);
        assert_eq!(feasible_accepting(&b, &d).unwrap(), vec![1]);
        let c = Nba::new(2, 0, [1], [(0, Guard::tt(), 1)]).unwrap();
        assert!(matches!(feasible_accepting(&c, &compute_rho(&c)), Err(BuchiError::NoFeasibleAccepting)));
    }

    #[test]
    fn case_study_words() {
        let b = prune_infeasible(&case_study_nba());
        assert!(accepts_prefix_suffix(&b, &[None, l(2), None, None, l(3), None], &[l(1)]).unwrap());
        assert!(!accepts_prefix_suffix(&b, &[l(1), l(2), l(3)], &[l(1)]).unwrap());
        // never visits l3
        assert!(!accepts_prefix_suffix(&b, &[l(2)], &[l(1)]).unwrap());
        assert!(matches!(accepts_prefix_suffix(&b, &[], &[]), Err(BuchiError::EmptySuffix)));
    }

    #[test]
    fn unrolling_invariance() {
        let b = prune_infeasible(&case_study_nba());
        let syms = [None, l(1), l(2), l(3)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p: Vec<Symbol> = (0..rng.gen_range(0..4)).map(|_| syms[rng.gen_range(0..4)]).collect();
            let s: Vec<Symbol> = (0..rng.gen_range(1..4)).map(|_| syms[rng.gen_range(0..4)]).collect();
            let ps: Vec<Symbol> = p.iter().chain(&s).copied().collect();
            assert_eq!(accepts_prefix_suffix(&b, &p, &s).unwrap(), accepts_prefix_suffix(&b, &ps, &s).unwrap());
        }
    }

    #[test]
    fn json_round_trip() {
        let b = case_study_nba();
        let back = Nba::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
    }
}

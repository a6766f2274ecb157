//! Prefix-suffix planning over the product of the workspace and the
//! automaton with RRT*-style random trees.

mod spatial;
mod tree;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buchi::{
    accepts_prefix_suffix, compute_rho, feasible_accepting, prune_infeasible, restrict_to_symbols, DistanceTable, Nba,
};
use crate::label::{all_symbols, Symbol};
use crate::prediction::{oracle_predict, Prediction, PredictionError};
use crate::sampling::{draw, SamplerContext, SearchMode, Strategy, DEFAULT_SIGMA_ANGLE};
use crate::workspace::{GridWorkspace, Point};

pub use tree::{steer, ProductTree, ProductVertex};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("task is unsatisfiable: no feasible accepting automaton state")]
    Unsatisfiable,
    #[error("no accepting product state reached within the budget")]
    NoPrefixFound { stats: RunStats },
    #[error("no plan found within the budget")]
    NoPlanFound { stats: RunStats },
    #[error("guided sampling needs a prediction")]
    MissingPrediction,
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error("internal error: assembled plan is not accepted ({0})")]
    InvalidPlan(String),
}

impl PlanError {
    pub fn stats(&self) -> Option<&RunStats> {
        match self {
            PlanError::NoPrefixFound { stats } | PlanError::NoPlanFound { stats } => Some(stats),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Weight of the prefix in `J = lambda * Jpre + (1 - lambda) * Jsuf`.
    pub lambda: f64,
    /// Steering step.
    pub eta: f64,
    /// Near-radius constant.
    pub gamma: f64,
    pub max_iters: usize,
    /// Wall-clock cap in seconds, if any.
    pub time_limit: Option<f64>,
    pub strategy: Strategy,
    /// Probability of using the predicted state weights.
    pub alpha: f64,
    /// Probability of drawing the closest vertex from the minimum-distance tier.
    pub p_d: f64,
    pub sigma_angle: f64,
    pub seed: u64,
    pub first_solution_only: bool,
    /// Goal vertices, cheapest first, that get a suffix search in full mode.
    pub max_goals: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lambda: 0.5,
            eta: 0.1,
            gamma: 0.6,
            max_iters: 50_000,
            time_limit: None,
            strategy: Strategy::Biased,
            alpha: 0.8,
            p_d: 0.9,
            sigma_angle: DEFAULT_SIGMA_ANGLE,
            seed: 0,
            first_solution_only: false,
            max_goals: 20,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.eta > 0.0) {
            return Err(format!("eta {} must be positive", self.eta));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.p_d) {
            return Err("alpha and p_d must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Metrics of a run. The headline fields describe the first feasible plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Wall seconds until the first feasible plan (or until giving up).
    #[serde(rename = "T")]
    pub t: f64,
    /// Iterations until the first feasible plan, prefix and suffix together.
    pub n: usize,
    /// Tree vertices at the first feasible plan.
    pub m: usize,
    /// Cost `J` of the first feasible plan.
    pub len: Option<f64>,
    pub total_iters: usize,
    pub total_nodes: usize,
    /// Cost of the returned plan.
    #[serde(rename = "J")]
    pub j: Option<f64>,
}

impl RunStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    /// JSON without the wall-clock field, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("stats serialize");
        v.as_object_mut().expect("object").remove("T");
        serde_json::to_string(&v).expect("value serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: Point,
    pub q: usize,
}

/// `prefix` runs from the initial product state to an accepting one; `suffix`
/// starts and ends at that state (a single waypoint means staying put).
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub prefix: Vec<Waypoint>,
    pub suffix: Vec<Waypoint>,
    pub j_pre: f64,
    pub j_suf: f64,
    pub j: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    prefix: Vec<(f64, f64, usize)>,
    suffix: Vec<(f64, f64, usize)>,
    #[serde(rename = "Jpre")]
    j_pre: f64,
    #[serde(rename = "Jsuf")]
    j_suf: f64,
    #[serde(rename = "J")]
    j: f64,
}

fn polyline_length(w: &[Waypoint]) -> f64 {
    w.windows(2).fold(0.0, |acc, p| acc + p[0].x.dist(p[1].x))
}

impl Plan {
    fn new(prefix: Vec<Waypoint>, suffix: Vec<Waypoint>, lambda: f64) -> Plan {
        let j_pre = polyline_length(&prefix);
        let j_suf = polyline_length(&suffix);
        Plan { prefix, suffix, j_pre, j_suf, j: lambda * j_pre + (1.0 - lambda) * j_suf }
    }

    pub fn to_json(&self) -> String {
        let conv = |w: &[Waypoint]| w.iter().map(|p| (p.x.x, p.x.y, p.q)).collect();
        let f = PlanFile { prefix: conv(&self.prefix), suffix: conv(&self.suffix), j_pre: self.j_pre, j_suf: self.j_suf, j: self.j };
        serde_json::to_string(&f).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Plan, serde_json::Error> {
        let f: PlanFile = serde_json::from_str(text)?;
        let conv = |v: Vec<(f64, f64, usize)>| v.into_iter().map(|(x, y, q)| Waypoint { x: Point::new(x, y), q }).collect();
        Ok(Plan { prefix: conv(f.prefix), suffix: conv(f.suffix), j_pre: f.j_pre, j_suf: f.j_suf, j: f.j })
    }

    /// Symbols read along the prefix, up to but excluding the accepting waypoint.
    pub fn prefix_word(&self, ws: &GridWorkspace) -> Vec<Symbol> {
        let n = self.prefix.len().saturating_sub(1);
        self.prefix[..n].iter().map(|w| symbol(ws, w.x)).collect()
    }

    /// One period of the repeated word, starting at the accepting waypoint.
    pub fn cycle_word(&self, ws: &GridWorkspace) -> Vec<Symbol> {
        let n = self.suffix.len().saturating_sub(1).max(1);
        self.suffix[..n].iter().map(|w| symbol(ws, w.x)).collect()
    }

    /// Every segment is valid in the workspace and the word is accepted.
    pub fn check(&self, ws: &GridWorkspace, nba: &Nba) -> Result<(), String> {
        for path in [&self.prefix, &self.suffix] {
            for w in path.windows(2) {
                if !ws.segment_valid(w[0].x, w[1].x) {
                    return Err(format!("invalid segment {:?} -> {:?}", w[0].x, w[1].x));
                }
            }
        }
        match accepts_prefix_suffix(nba, &self.prefix_word(ws), &self.cycle_word(ws)) {
            Ok(true) => Ok(()),
            Ok(false) => Err("word rejected by the automaton".into()),
            Err(e) => Err(e.to_string()),
        }
    }
}

fn symbol(ws: &GridWorkspace, x: Point) -> Symbol {
    ws.kind(ws.cell_of(x)).symbol().unwrap_or(None)
}

/// A workspace with its task automaton, pruned to what the workspace can
/// realize, plus the derived distance table and an optional prediction.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ws: GridWorkspace,
    /// The automaton as given.
    pub original: Nba,
    /// Transitions no workspace symbol can enable removed.
    pub nba: Nba,
    pub rho: DistanceTable,
    pub feasible: Vec<usize>,
    pub prediction: Option<Prediction>,
}

impl Problem {
    pub fn new(ws: GridWorkspace, nba: &Nba) -> Result<Problem, PlanError> {
        let present: Vec<Symbol> =
            all_symbols(ws.label_count()).filter(|&s| !ws.cells_with_symbol(s).is_empty()).collect();
        let pruned = restrict_to_symbols(&prune_infeasible(nba), &present);
        let rho = compute_rho(&pruned);
        let feasible = feasible_accepting(&pruned, &rho).map_err(|_| PlanError::Unsatisfiable)?;
        Ok(Problem { ws, original: nba.clone(), nba: pruned, rho, feasible, prediction: None })
    }

    /// Accepting states that lie on a cycle and so can end a prefix.
    pub fn is_goal(&self, q: usize) -> bool {
        self.feasible.binary_search(&q).is_ok()
    }

    pub fn with_prediction(mut self, pred: Prediction) -> Result<Problem, PlanError> {
        pred.check_dims(self.nba.state_count(), self.ws.height(), self.ws.width())?;
        self.prediction = Some(pred);
        Ok(self)
    }

    /// Attaches the oracle prediction for the given cost weight.
    pub fn with_oracle(self, lambda: f64) -> Result<Problem, PlanError> {
        let pred = oracle_predict(&self.ws, &self.nba, &self.rho, lambda)?;
        self.with_prediction(pred)
    }

    pub fn context(&self, cfg: &PlannerConfig) -> Result<SamplerContext<'_>, PlanError> {
        if cfg.strategy == Strategy::Guided && self.prediction.is_none() {
            return Err(PlanError::MissingPrediction);
        }
        Ok(SamplerContext {
            ws: &self.ws,
            nba: &self.nba,
            rho: &self.rho,
            feasible: &self.feasible,
            prediction: self.prediction.as_ref(),
            alpha: cfg.alpha,
            p_d: cfg.p_d,
            eta: cfg.eta,
            sigma_angle: cfg.sigma_angle,
        })
    }
}

/// One random tree and the mode it is grown in.
#[derive(Debug, Clone)]
pub struct TreeSearch {
    pub tree: ProductTree,
    pub mode: SearchMode,
}

impl TreeSearch {
    pub fn prefix(p: &Problem, eta: f64) -> TreeSearch {
        let tree = ProductTree::new(&p.ws, p.ws.init(), p.nba.init(), p.nba.state_count(), eta);
        TreeSearch { tree, mode: SearchMode::Prefix }
    }

    pub fn suffix(p: &Problem, root: Point, state: usize, eta: f64) -> TreeSearch {
        let tree = ProductTree::new(&p.ws, root, state, p.nba.state_count(), eta);
        TreeSearch { tree, mode: SearchMode::Suffix { root, state } }
    }

    /// Sample, steer from the nearest vertex, extend. Returns new vertices.
    pub fn step(&mut self, ctx: &SamplerContext, cfg: &PlannerConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let x_rand = draw(ctx, cfg.strategy, &self.tree, self.mode, rng);
        let x_near = self.tree.nearest_point(x_rand);
        let x_new = steer(x_near, x_rand, cfg.eta);
        self.tree.extend(ctx.ws, ctx.nba, x_new, cfg.gamma, cfg.eta)
    }

    /// Vertex `v` can close the suffix cycle: straight back to the root,
    /// entering the root state on `v`'s symbol.
    fn closes(&self, p: &Problem, v: usize) -> Option<f64> {
        let SearchMode::Suffix { root, state } = self.mode else { return None };
        let vx = self.tree.vertex(v);
        let enabled = p.nba.successors(vx.q, self.tree.symbol(v)).any(|q| q == state);
        (v != 0 && enabled && p.ws.segment_valid(vx.x, root)).then(|| vx.cost + vx.x.dist(root))
    }

    fn waypoints(&self, v: usize) -> Vec<Waypoint> {
        self.tree.path_to(v).into_iter().map(|i| Waypoint { x: self.tree.vertex(i).x, q: self.tree.vertex(i).q }).collect()
    }
}

/// Suffix cycle found for a goal vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixCycle {
    pub waypoints: Vec<Waypoint>,
    pub cost: f64,
}

struct Run<'a> {
    problem: &'a Problem,
    cfg: &'a PlannerConfig,
    ctx: SamplerContext<'a>,
    rng: ChaCha8Rng,
    start: Instant,
    iters: usize,
    suffix_nodes: usize,
}

impl Run<'_> {
    fn out_of_time(&self) -> bool {
        self.cfg.time_limit.is_some_and(|t| self.start.elapsed().as_secs_f64() >= t)
    }

    fn exhausted(&self) -> bool {
        self.iters >= self.cfg.max_iters || self.out_of_time()
    }

    /// Cheapest cycle back to `(x, q)` within `budget` iterations; the first
    /// one found when `first_only`.
    fn suffix(&mut self, x: Point, q: usize, budget: usize, first_only: bool) -> Option<SuffixCycle> {
        let p = self.problem;
        if p.nba.successors(q, symbol(&p.ws, x)).any(|r| r == q) {
            return Some(SuffixCycle { waypoints: vec![Waypoint { x, q }], cost: 0.0 });
        }
        let mut search = TreeSearch::suffix(p, x, q, self.cfg.eta);
        let mut found = false;
        for _ in 0..budget {
            if self.out_of_time() {
                break;
            }
            let added = search.step(&self.ctx, self.cfg, &mut self.rng);
            self.iters += 1;
            self.suffix_nodes += added.len();
            if added.iter().any(|&v| search.closes(p, v).is_some()) {
                found = true;
                if first_only {
                    break;
                }
            }
        }
        if !found {
            return None;
        }
        // costs may have dropped through rewiring: take the best closure now
        let (v, cost) = (1..search.tree.len())
            .filter_map(|v| search.closes(p, v).map(|c| (v, c)))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let mut waypoints = search.waypoints(v);
        waypoints.push(Waypoint { x, q });
        Some(SuffixCycle { waypoints, cost })
    }

    fn stats(&self, prefix_nodes: usize) -> RunStats {
        RunStats {
            t: self.start.elapsed().as_secs_f64(),
            n: self.iters,
            m: prefix_nodes + self.suffix_nodes,
            len: None,
            total_iters: self.iters,
            total_nodes: prefix_nodes + self.suffix_nodes,
            j: None,
        }
    }
}

fn assemble(p: &Problem, cfg: &PlannerConfig, search: &TreeSearch, goal: usize, cycle: &SuffixCycle) -> Result<Plan, PlanError> {
    let plan = Plan::new(search.waypoints(goal), cycle.waypoints.clone(), cfg.lambda);
    plan.check(&p.ws, &p.nba).map_err(PlanError::InvalidPlan)?;
    Ok(plan)
}

/// Grows the prefix tree for the whole budget and returns it with its goal
/// vertices (those in a feasible accepting automaton state).
pub fn search_prefix(p: &Problem, cfg: &PlannerConfig) -> Result<(TreeSearch, Vec<usize>, RunStats), PlanError> {
    let mut run = Run {
        problem: p,
        cfg,
        ctx: p.context(cfg)?,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        start: Instant::now(),
        iters: 0,
        suffix_nodes: 0,
    };
    let mut search = TreeSearch::prefix(p, cfg.eta);
    let mut first: Option<RunStats> = p.is_goal(p.nba.init()).then(|| run.stats(1));
    while !run.exhausted() {
        let added = search.step(&run.ctx, cfg, &mut run.rng);
        run.iters += 1;
        if first.is_none() && added.iter().any(|&v| p.is_goal(search.tree.vertex(v).q)) {
            first = Some(run.stats(search.tree.len()));
        }
    }
    let goals: Vec<usize> = (0..search.tree.len()).filter(|&v| p.is_goal(search.tree.vertex(v).q)).collect();
    let mut stats = first.unwrap_or_else(|| run.stats(search.tree.len()));
    stats.total_iters = run.iters;
    stats.total_nodes = search.tree.len();
    if goals.is_empty() {
        return Err(PlanError::NoPrefixFound { stats });
    }
    Ok((search, goals, stats))
}

/// Suffix cycles for each goal vertex of a prefix tree, sharing a budget of
/// `max_iters / goals` iterations each (at least 100).
pub fn search_suffix(
    p: &Problem,
    cfg: &PlannerConfig,
    prefix: &TreeSearch,
    goals: &[usize],
) -> Result<BTreeMap<usize, SuffixCycle>, PlanError> {
    let mut run = Run {
        problem: p,
        cfg,
        ctx: p.context(cfg)?,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5u64.rotate_right(4)),
        start: Instant::now(),
        iters: 0,
        suffix_nodes: 0,
    };
    Ok(suffixes(&mut run, prefix, goals))
}

fn suffixes(run: &mut Run, prefix: &TreeSearch, goals: &[usize]) -> BTreeMap<usize, SuffixCycle> {
    let budget = (run.cfg.max_iters / goals.len().max(1)).max(100);
    let mut out = BTreeMap::new();
    for &g in goals {
        let v = prefix.tree.vertex(g);
        if let Some(c) = run.suffix(v.x, v.q, budget, false) {
            out.insert(g, c);
        }
    }
    out
}

/// Finds a prefix-suffix plan. With `first_solution_only` the search stops at
/// the first feasible plan; otherwise the prefix tree uses the whole budget
/// and the cheapest goal over all suffix cycles is returned.
pub fn plan(p: &Problem, cfg: &PlannerConfig) -> Result<(Plan, RunStats), PlanError> {
    let mut run = Run {
        problem: p,
        cfg,
        ctx: p.context(cfg)?,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        start: Instant::now(),
        iters: 0,
        suffix_nodes: 0,
    };
    let mut search = TreeSearch::prefix(p, cfg.eta);
    let mut pending: Vec<usize> = if p.is_goal(p.nba.init()) { vec![0] } else { Vec::new() };

    if cfg.first_solution_only {
        loop {
            for g in std::mem::take(&mut pending) {
                let v = search.tree.vertex(g).clone();
                let budget = (cfg.max_iters / 10).max(100).min(cfg.max_iters.saturating_sub(run.iters));
                if let Some(cycle) = run.suffix(v.x, v.q, budget, true) {
                    let plan = assemble(p, cfg, &search, g, &cycle)?;
                    let mut stats = run.stats(search.tree.len());
                    stats.len = Some(plan.j);
                    stats.j = Some(plan.j);
                    return Ok((plan, stats));
                }
            }
            if run.exhausted() {
                return Err(PlanError::NoPlanFound { stats: run.stats(search.tree.len()) });
            }
            let added = search.step(&run.ctx, cfg, &mut run.rng);
            run.iters += 1;
            pending.extend(added.into_iter().filter(|&v| p.is_goal(search.tree.vertex(v).q)));
        }
    }

    // first-feasible bookkeeping: when each goal appeared and what it cost then
    let mut appeared: BTreeMap<usize, (RunStats, f64)> = BTreeMap::new();
    for &g in &pending {
        appeared.insert(g, (run.stats(1), 0.0));
    }
    while !run.exhausted() {
        let added = search.step(&run.ctx, cfg, &mut run.rng);
        run.iters += 1;
        for v in added {
            if p.is_goal(search.tree.vertex(v).q) {
                appeared.insert(v, (run.stats(search.tree.len()), search.tree.vertex(v).cost));
            }
        }
    }
    let mut goals: Vec<usize> = appeared.keys().copied().collect();
    goals.sort_by(|&a, &b| search.tree.vertex(a).cost.total_cmp(&search.tree.vertex(b).cost).then(a.cmp(&b)));
    goals.truncate(cfg.max_goals.max(1));
    goals.sort_unstable();
    let prefix_iters = run.iters;
    let prefix_nodes = search.tree.len();
    if goals.is_empty() {
        return Err(PlanError::NoPlanFound { stats: run.stats(prefix_nodes) });
    }
    let cycles = suffixes(&mut run, &search, &goals);
    let best = cycles
        .iter()
        .map(|(&g, c)| (g, cfg.lambda * search.tree.vertex(g).cost + (1.0 - cfg.lambda) * c.cost))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let Some((g, _)) = best else {
        let mut stats = run.stats(prefix_nodes);
        stats.n = prefix_iters;
        return Err(PlanError::NoPlanFound { stats });
    };
    let plan = assemble(p, cfg, &search, g, &cycles[&g])?;
    // first feasible: the earliest goal that turned out to have a cycle
    let (first_goal, (first_stats, cost_then)) = appeared
        .iter()
        .filter(|(g, _)| cycles.contains_key(g))
        .min_by_key(|(_, (s, _))| s.n)
        .expect("best goal has a cycle");
    let mut stats = first_stats.clone();
    stats.len = Some(cfg.lambda * cost_then + (1.0 - cfg.lambda) * cycles[first_goal].cost);
    stats.total_iters = run.iters;
    stats.total_nodes = prefix_nodes + run.suffix_nodes;
    stats.j = Some(plan.j);
    Ok((plan, stats))
}

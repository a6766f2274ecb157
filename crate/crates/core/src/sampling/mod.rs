//! Where the next tree sample comes from: uniform over free space, biased
//! toward automaton progress, or guided by a [`Prediction`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::buchi::{DistanceTable, Guard, Nba};
use crate::label::all_symbols;
use crate::planner::ProductTree;
use crate::prediction::Prediction;
use crate::workspace::{Cell, CellKind, GridWorkspace, Point};

/// Attempts at a directed sample before falling back to uniform.
const DIRECTED_TRIES: usize = 20;
/// Minimum side, in cells, of the heatmap sampling window.
const MIN_RECT: usize = 5;
/// Default spread of the sampled bearing around the target direction.
pub const DEFAULT_SIGMA_ANGLE: f64 = PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Biased,
    Guided,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Uniform, Strategy::Biased, Strategy::Guided];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Uniform => "uniform",
            Strategy::Biased => "biased",
            Strategy::Guided => "guided",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "biased" => Ok(Strategy::Biased),
            "guided" => Ok(Strategy::Guided),
            _ => Err(format!("unknown strategy `{s}` (uniform, biased, guided)")),
        }
    }
}

/// Which tree is being grown: the prefix tree from the initial position,
/// or a suffix tree that must return to `root` in automaton state `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    Prefix,
    Suffix { root: Point, state: usize },
}

/// Shared, read-only inputs of every sampler.
#[derive(Clone, Copy)]
pub struct SamplerContext<'a> {
    pub ws: &'a GridWorkspace,
    /// Pruned automaton.
    pub nba: &'a Nba,
    pub rho: &'a DistanceTable,
    pub feasible: &'a [usize],
    pub prediction: Option<&'a Prediction>,
    pub alpha: f64,
    pub p_d: f64,
    pub eta: f64,
    pub sigma_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSelection {
    pub q_f: usize,
    pub closest: usize,
    pub x_closest: Point,
    pub succ1: usize,
    pub succ2: usize,
    pub x_l: Point,
}

pub fn sample_uniform<R: Rng + ?Sized>(ctx: &SamplerContext, rng: &mut R) -> Point {
    ctx.ws.sample_free_uniform(rng).expect("workspace has free cells")
}

/// Symbols present in the workspace that satisfy `g`, with their cell counts.
fn guard_cells<'w>(ws: &'w GridWorkspace, g: &Guard) -> Vec<&'w [u32]> {
    all_symbols(ws.label_count())
        .filter(|&s| g.holds(s))
        .map(|s| ws.cells_with_symbol(s))
        .filter(|c| !c.is_empty())
        .collect()
}

/// Uniform cell among those whose symbol satisfies `g`, then a uniform
/// point inside it.
fn sample_guard_point<R: Rng + ?Sized>(ws: &GridWorkspace, g: &Guard, rng: &mut R) -> Option<Point> {
    let groups = guard_cells(ws, g);
    let total: usize = groups.iter().map(|c| c.len()).sum();
    if total == 0 {
        return None;
    }
    let mut k = rng.gen_range(0..total);
    for cells in groups {
        if k < cells.len() {
            return Some(ws.sample_in_cell(ws.cell_at_index(cells[k] as usize), rng));
        }
        k -= cells.len();
    }
    unreachable!("index within total")
}

/// Index drawn proportionally to `w`; uniform when the weights sum to zero.
fn weighted_index<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return rng.gen_range(0..w.len());
    }
    let mut t = rng.gen::<f64>() * total;
    for (i, &x) in w.iter().enumerate() {
        if t < x {
            return i;
        }
        t -= x;
    }
    w.iter().rposition(|&x| x > 0.0).expect("positive total")
}

/// Distance used to rank tree vertices: hops still needed to be in `q_f`
/// for the prefix tree, hops to re-enter `q_f` for a suffix tree.
fn vertex_distance(ctx: &SamplerContext, mode: SearchMode, q: usize, q_f: usize) -> Option<u32> {
    match mode {
        SearchMode::Prefix => ctx.rho.reach(q, q_f),
        SearchMode::Suffix { .. } => ctx.rho.get(q, q_f),
    }
}

/// S-1 to S-4, with state choices weighted by `p` when given.
fn select<R: Rng + ?Sized>(
    ctx: &SamplerContext,
    tree: &ProductTree,
    mode: SearchMode,
    p: Option<&[f32]>,
    rng: &mut R,
) -> Option<BiasSelection> {
    let weight = |q: usize| p.map_or(1.0, |p| f64::from(p[q]));
    // S-1
    let q_f = match mode {
        SearchMode::Suffix { state, .. } => state,
        SearchMode::Prefix => {
            let w: Vec<f64> = ctx.feasible.iter().map(|&q| weight(q)).collect();
            ctx.feasible[weighted_index(&w, rng)]
        }
    };
    // S-2: tiers by automaton state, since vertices sharing a state share a distance
    let present: Vec<(usize, u32)> = (0..tree.state_count())
        .filter(|&q| !tree.with_state(q).is_empty())
        .filter_map(|q| vertex_distance(ctx, mode, q, q_f).map(|h| (q, h)))
        .collect();
    let h_min = present.iter().map(|&(_, h)| h).min()?;
    let (d_min, rest): (Vec<_>, Vec<_>) = present.iter().partition(|&&(_, h)| h == h_min);
    let tier = if rest.is_empty() || rng.gen_bool(ctx.p_d) { d_min } else { rest };
    let w: Vec<f64> = tier.iter().map(|&(q, _)| weight(q) * tree.with_state(q).len() as f64).collect();
    let (q_c, h_c) = tier[weighted_index(&w, rng)];
    let bucket = tree.with_state(q_c);
    let closest = bucket[rng.gen_range(0..bucket.len())];
    let s_c = tree.symbol(closest);

    if let SearchMode::Suffix { root, state } = mode {
        if ctx.nba.successors(q_c, s_c).any(|q| q == state) {
            let x_closest = tree.vertex(closest).x;
            return Some(BiasSelection { q_f, closest, x_closest, succ1: state, succ2: state, x_l: root });
        }
    }

    // S-3
    let reach = |q: usize| ctx.rho.reach(q, q_f);
    let mut pairs: Vec<(usize, usize, &Guard)> = Vec::new();
    for succ1 in ctx.nba.successors(q_c, s_c) {
        let Some(r1) = reach(succ1) else { continue };
        if r1 > h_c {
            continue;
        }
        for e in ctx.nba.out_edges(succ1) {
            if reach(e.dst).is_some_and(|r2| r2 <= r1) && !guard_cells(ctx.ws, &e.guard).is_empty() {
                pairs.push((succ1, e.dst, &e.guard));
            }
        }
    }
    if pairs.is_empty() {
        return None;
    }
    let (succ1, succ2, guard) = match p {
        None => pairs[rng.gen_range(0..pairs.len())],
        Some(_) => {
            let mut firsts: Vec<usize> = pairs.iter().map(|t| t.0).collect();
            firsts.dedup();
            let w: Vec<f64> = firsts.iter().map(|&q| weight(q)).collect();
            let s1 = firsts[weighted_index(&w, rng)];
            let seconds: Vec<_> = pairs.iter().filter(|t| t.0 == s1).collect();
            let w: Vec<f64> = seconds.iter().map(|t| weight(t.1)).collect();
            *seconds[weighted_index(&w, rng)]
        }
    };
    // S-4
    let x_l = sample_guard_point(ctx.ws, guard, rng)?;
    Some(BiasSelection { q_f, closest, x_closest: tree.vertex(closest).x, succ1, succ2, x_l })
}

/// S-1 to S-4 of biased sampling. `None` is a dead end: no successor pair
/// keeps the distance to the chosen accepting state from growing.
pub fn biased_select<R: Rng + ?Sized>(
    ctx: &SamplerContext,
    tree: &ProductTree,
    mode: SearchMode,
    rng: &mut R,
) -> Option<BiasSelection> {
    select(ctx, tree, mode, None, rng)
}

/// With probability `alpha` the state choices of [`biased_select`] are
/// weighted by the predicted probabilities; otherwise identical to it.
pub fn guided_select<R: Rng + ?Sized>(
    ctx: &SamplerContext,
    tree: &ProductTree,
    mode: SearchMode,
    rng: &mut R,
) -> Option<BiasSelection> {
    let p = ctx.prediction.map(|pr| pr.p.as_slice());
    let use_p = p.is_some() && ctx.alpha > 0.0 && (ctx.alpha >= 1.0 || rng.gen_bool(ctx.alpha));
    select(ctx, tree, mode, if use_p { p } else { None }, rng)
}

/// Direction heuristic of biased sampling: along the grid shortest path
/// from `x_closest` to `x_l`, aim at the farthest cell of the initial stretch
/// that is in direct sight of `x_closest`.
pub fn biased_target(ctx: &SamplerContext, sel: &BiasSelection) -> Option<Point> {
    let ws = ctx.ws;
    if ws.segment_obstacle_free(sel.x_closest, sel.x_l) {
        return Some(sel.x_l);
    }
    let goal = ws.cell_of(sel.x_l);
    let path = ws.grid_path_between(ws.cell_of(sel.x_closest), goal)?;
    let cells = path.cells();
    if cells.len() <= 1 {
        return Some(sel.x_l);
    }
    let mut target = ws.cell_center(cells[1]);
    for &c in &cells[2..] {
        let p = ws.cell_center(c);
        if !ws.segment_obstacle_free(sel.x_closest, p) {
            break;
        }
        target = p;
    }
    Some(target)
}

/// S-5 and S-6: a point within `eta` of `x_closest` whose bearing is normal
/// around the direction of the target, falling back to uniform.
pub fn biased_target_and_sample<R: Rng + ?Sized>(ctx: &SamplerContext, sel: &BiasSelection, rng: &mut R) -> Point {
    let Some(target) = biased_target(ctx, sel) else {
        return sample_uniform(ctx, rng);
    };
    directed_sample(ctx, sel.x_closest, target, rng)
}

fn directed_sample<R: Rng + ?Sized>(ctx: &SamplerContext, from: Point, target: Point, rng: &mut R) -> Point {
    let bearing = (target.y - from.y).atan2(target.x - from.x);
    let normal = Normal::new(bearing, ctx.sigma_angle.max(0.0)).expect("finite sigma");
    for _ in 0..DIRECTED_TRIES {
        let theta = normal.sample(rng);
        let d = ctx.eta * (1.0 - rng.gen::<f64>());
        let p = Point::new(from.x + d * theta.cos(), from.y + d * theta.sin());
        if p.in_unit_square() && !ctx.ws.is_obstacle(p) {
            return p;
        }
    }
    sample_uniform(ctx, rng)
}

/// Inclusive cell window spanned by two points, widened to at least
/// [`MIN_RECT`] cells per side and clipped to the grid.
pub fn sampling_window(ws: &GridWorkspace, a: Point, b: Point) -> (Cell, Cell) {
    let (ca, cb) = (ws.cell_of(a), ws.cell_of(b));
    let widen = |lo: usize, hi: usize, n: usize| {
        if hi - lo + 1 >= MIN_RECT || n <= MIN_RECT {
            return if n <= MIN_RECT { (0, n - 1) } else { (lo, hi) };
        }
        let centre = (lo + hi) / 2;
        let start = centre.saturating_sub(MIN_RECT / 2).min(n - MIN_RECT);
        (start, start + MIN_RECT - 1)
    };
    let (r0, r1) = widen(ca.row.min(cb.row), ca.row.max(cb.row), ws.height());
    let (c0, c1) = widen(ca.col.min(cb.col), ca.col.max(cb.col), ws.width());
    (Cell::new(r0, c0), Cell::new(r1, c1))
}

/// C-2: a non-obstacle cell of the window between `x_l` and `x_closest`
/// drawn in proportion to its heatmap value (uniformly when the window
/// carries no mass), then a uniform point inside it.
pub fn guided_rect_sample<R: Rng + ?Sized>(ctx: &SamplerContext, sel: &BiasSelection, rng: &mut R) -> Point {
    let ws = ctx.ws;
    let Some(pred) = ctx.prediction else {
        return biased_target_and_sample(ctx, sel, rng);
    };
    let (lo, hi) = sampling_window(ws, sel.x_l, sel.x_closest);
    let mut cells = Vec::new();
    let mut weights = Vec::new();
    for r in lo.row..=hi.row {
        for c in lo.col..=hi.col {
            let cell = Cell::new(r, c);
            if ws.kind(cell) != CellKind::Obstacle {
                cells.push(cell);
                weights.push(f64::from(pred.heat(cell)));
            }
        }
    }
    if cells.is_empty() {
        return sample_uniform(ctx, rng);
    }
    if weights.iter().sum::<f64>() < 1e-9 {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    ws.sample_in_cell(cells[weighted_index(&weights, rng)], rng)
}

/// One sample for the given strategy. Dead ends fall back to uniform.
pub fn draw<R: Rng + ?Sized>(
    ctx: &SamplerContext,
    strategy: Strategy,
    tree: &ProductTree,
    mode: SearchMode,
    rng: &mut R,
) -> Point {
    match strategy {
        Strategy::Uniform => sample_uniform(ctx, rng),
        Strategy::Biased => match biased_select(ctx, tree, mode, rng) {
            Some(sel) => biased_target_and_sample(ctx, &sel, rng),
            None => sample_uniform(ctx, rng),
        },
        Strategy::Guided => match guided_select(ctx, tree, mode, rng) {
            Some(sel) => guided_rect_sample(ctx, &sel, rng),
            None => sample_uniform(ctx, rng),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buchi::{case_study_nba, compute_rho, feasible_accepting, prune_infeasible};
    use crate::label::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        ws: GridWorkspace,
        nba: Nba,
        rho: DistanceTable,
        feasible: Vec<usize>,
        pred: Option<Prediction>,
    }

    impl Fixture {
        fn ctx(&self) -> SamplerContext<'_> {
            SamplerContext {
                ws: &self.ws,
                nba: &self.nba,
                rho: &self.rho,
                feasible: &self.feasible,
                prediction: self.pred.as_ref(),
                alpha: 1.0,
                p_d: 0.9,
                eta: 0.1,
                sigma_angle: DEFAULT_SIGMA_ANGLE,
            }
        }
    }

    fn case_study(n: usize) -> Fixture {
        let cells = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n * 20 / n, i % n * 20 / n);
                match (r, c) {
                    (2..=4, 8..=10) => CellKind::Region(Label(2)),
                    (2..=4, 15..=17) => CellKind::Region(Label(3)),
                    (15..=17, 15..=17) => CellKind::Region(Label(1)),
                    (8..=9, 2..=12) => CellKind::Obstacle,
                    _ => CellKind::Free,
                }
            })
            .collect();
        let ws = GridWorkspace::new(n, n, 3, cells, Point::new(0.06, 0.06)).unwrap();
        let nba = prune_infeasible(&case_study_nba());
        let rho = compute_rho(&nba);
        let feasible = feasible_accepting(&nba, &rho).unwrap();
        Fixture { ws, nba, rho, feasible, pred: None }
    }

    fn root_tree(f: &Fixture) -> ProductTree {
        ProductTree::new(&f.ws, f.ws.init(), 0, f.nba.state_count(), 0.1)
    }

    #[test]
    fn uniform_delegates() {
        let f = case_study(20);
        let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(4), ChaCha8Rng::seed_from_u64(4));
        for _ in 0..100 {
            assert_eq!(sample_uniform(&f.ctx(), &mut a), f.ws.sample_free_uniform(&mut b).unwrap());
        }
    }

    #[test]
    fn uniform_covers_small_map() {
        let f = case_study(10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut hits = vec![0u32; 100];
        for _ in 0..1_000_000 {
            let p = sample_uniform(&f.ctx(), &mut rng);
            hits[f.ws.index_of(f.ws.cell_of(p))] += 1;
        }
        for i in 0..100 {
            let obstacle = f.ws.kind_at_index(i) == CellKind::Obstacle;
            assert_eq!(hits[i] == 0, obstacle, "cell {i}");
        }
    }

    #[test]
    fn root_pairs_of_case_study() {
        let f = case_study(20);
        let tree = root_tree(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            let sel = biased_select(&f.ctx(), &tree, SearchMode::Prefix, &mut rng).unwrap();
            assert_eq!(sel.closest, 0);
            assert_eq!(sel.succ1, 0);
            let r1 = f.rho.reach(sel.succ1, sel.q_f).unwrap();
            let r2 = f.rho.reach(sel.succ2, sel.q_f).unwrap();
            assert!(r2 <= r1 && r1 <= f.rho.reach(0, sel.q_f).unwrap());
            let guard = &f.nba.edge(sel.succ1, sel.succ2).unwrap().guard;
            assert!(guard.holds(f.ws.kind(f.ws.cell_of(sel.x_l)).symbol().unwrap()));
            seen.insert(sel.succ2);
        }
        // 0 -> 3 needs l2 and l3 at once and is pruned
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn guided_ratio_matches_weights() {
        let mut f = case_study(20);
        let heat = vec![0.5; 400];
        f.pred = Some(Prediction::new(vec![0.999, 0.486, 0.902, 0.994, 0.997], 20, 20, heat).unwrap());
        let tree = root_tree(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut one, mut two) = (0u32, 0u32);
        for _ in 0..20_000 {
            let sel = guided_select(&f.ctx(), &tree, SearchMode::Prefix, &mut rng).unwrap();
            match sel.succ2 {
                1 => one += 1,
                2 => two += 1,
                _ => {}
            }
        }
        let ratio = f64::from(two) / f64::from(one + two);
        let expected = 0.902 / (0.902 + 0.486);
        assert!((ratio - expected).abs() < 0.02, "{ratio} vs {expected}");
    }

    #[test]
    fn alpha_zero_matches_biased_stream() {
        let mut f = case_study(20);
        f.pred = Some(Prediction::new(vec![0.9, 0.1, 0.9, 0.9, 0.9], 20, 20, vec![0.5; 400]).unwrap());
        let tree = root_tree(&f);
        let mut ctx = f.ctx();
        ctx.alpha = 0.0;
        let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(6), ChaCha8Rng::seed_from_u64(6));
        for _ in 0..500 {
            assert_eq!(
                guided_select(&ctx, &tree, SearchMode::Prefix, &mut a),
                biased_select(&ctx, &tree, SearchMode::Prefix, &mut b)
            );
        }
    }

    #[test]
    fn directed_samples_concentrate_on_bearing() {
        let f = case_study(200);
        let mut ctx = f.ctx();
        ctx.sigma_angle = 1e-3;
        let from = Point::new(0.5, 0.3);
        let sel = BiasSelection { q_f: 4, closest: 0, x_closest: from, succ1: 0, succ2: 0, x_l: Point::new(0.9, 0.3) };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..10_000 {
            let p = biased_target_and_sample(&ctx, &sel, &mut rng);
            assert!(p.dist(from) <= ctx.eta + 1e-12);
            let a = (p.y - from.y).atan2(p.x - from.x);
            sx += a.cos();
            sy += a.sin();
        }
        assert!(sy.atan2(sx).abs() < 0.05);
    }

    #[test]
    fn walled_target_falls_back_to_uniform() {
        let n = 20;
        let cells = (0..n * n)
            .map(|i| match (i / n, i % n) {
                (10, 10) => CellKind::Region(Label(1)),
                (9..=11, 9..=11) => CellKind::Obstacle,
                _ => CellKind::Free,
            })
            .collect();
        let ws = GridWorkspace::new(n, n, 1, cells, Point::new(0.05, 0.05)).unwrap();
        let f = Fixture { nba: Nba::new(1, 0, [0], [(0, Guard::tt(), 0)]).unwrap(), ..case_study(20) };
        let f = Fixture { ws, ..f };
        let sel = BiasSelection {
            q_f: 0,
            closest: 0,
            x_closest: Point::new(0.05, 0.05),
            succ1: 0,
            succ2: 0,
            x_l: Point::new(0.525, 0.525),
        };
        assert!(biased_target(&f.ctx(), &sel).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let far = (0..200)
            .map(|_| biased_target_and_sample(&f.ctx(), &sel, &mut rng))
            .filter(|p| p.dist(sel.x_closest) > 0.1)
            .count();
        assert!(far > 100);
    }

    #[test]
    fn window_inflation() {
        let f = case_study(200);
        let p = Point::new(0.5, 0.5);
        let (lo, hi) = sampling_window(&f.ws, p, p);
        assert_eq!((hi.row - lo.row + 1, hi.col - lo.col + 1), (5, 5));
        assert!((lo.row..=hi.row).contains(&100) && (lo.col..=hi.col).contains(&100));
        let corner = Point::new(0.001, 0.999);
        let (lo, hi) = sampling_window(&f.ws, corner, corner);
        assert_eq!((lo.row, hi.row, lo.col, hi.col), (195, 199, 0, 4));
    }

    #[test]
    fn zero_heatmap_is_uniform_over_window() {
        let mut f = case_study(200);
        f.pred = Some(Prediction::new(vec![1.0; 5], 200, 200, vec![0.0; 40_000]).unwrap());
        let sel = BiasSelection {
            q_f: 4,
            closest: 0,
            x_closest: Point::new(0.5, 0.5),
            succ1: 0,
            succ2: 0,
            x_l: Point::new(0.52, 0.52),
        };
        let (lo, hi) = sampling_window(&f.ws, sel.x_l, sel.x_closest);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cells = (hi.row - lo.row + 1) * (hi.col - lo.col + 1);
        let mut hits = vec![0u32; cells];
        let draws = 200 * cells;
        for _ in 0..draws {
            let c = f.ws.cell_of(guided_rect_sample(&f.ctx(), &sel, &mut rng));
            assert!((lo.row..=hi.row).contains(&c.row) && (lo.col..=hi.col).contains(&c.col));
            hits[(c.row - lo.row) * (hi.col - lo.col + 1) + c.col - lo.col] += 1;
        }
        assert_eq!(cells, 25);
        // chi-square, 24 degrees of freedom: 99.9% quantile is 51.2
        let e = 200.0;
        let chi: f64 = hits.iter().map(|&h| (f64::from(h) - e).powi(2) / e).sum();
        assert!(chi < 51.2, "chi2 {chi}");
    }
}

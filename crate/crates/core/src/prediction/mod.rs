//! State-probability vectors and path heatmaps that steer guided sampling,
//! with a deterministic oracle producing them and file formats for
//! predictions computed elsewhere.

mod edt;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buchi::{feasible_accepting, DistanceTable, Nba};
use crate::workspace::{Cell, CellKind, GridWorkspace};

pub use edt::distance_transform;

const MAGIC: &[u8; 5] = b"NNTL1";

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("malformed prediction file: {0}")]
    Format(String),
    #[error("no accepting lasso can be realized in the workspace")]
    NoRealizableRun,
    #[error("no feasible accepting state")]
    NoFeasibleAccepting,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-state probabilities `p` (one per automaton state) and a row-major
/// `rows × cols` heatmap, both in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p: Vec<f32>,
    pub rows: usize,
    pub cols: usize,
    pub heatmap: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct PredictionFile {
    n_states: usize,
    grid: [usize; 2],
    p: Vec<f32>,
    heatmap: Vec<f32>,
}

impl Prediction {
    pub fn new(p: Vec<f32>, rows: usize, cols: usize, heatmap: Vec<f32>) -> Result<Prediction, PredictionError> {
        if heatmap.len() != rows * cols {
            return Err(PredictionError::Format(format!(
                "heatmap has {} values for a {rows}x{cols} grid",
                heatmap.len()
            )));
        }
        if let Some(v) = p.iter().chain(&heatmap).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PredictionError::Format(format!("value {v} outside [0, 1]")));
        }
        Ok(Prediction { p, rows, cols, heatmap })
    }

    pub fn n_states(&self) -> usize {
        self.p.len()
    }

    pub fn heat(&self, c: Cell) -> f32 {
        self.heatmap[c.row * self.cols + c.col]
    }

    /// Errors unless the prediction matches the automaton and grid sizes.
    pub fn check_dims(&self, n_states: usize, rows: usize, cols: usize) -> Result<(), PredictionError> {
        if self.p.len() != n_states {
            return Err(PredictionError::DimensionMismatch {
                expected: format!("{n_states} states"),
                found: format!("{} states", self.p.len()),
            });
        }
        if (self.rows, self.cols) != (rows, cols) {
            return Err(PredictionError::DimensionMismatch {
                expected: format!("{rows}x{cols} heatmap"),
                found: format!("{}x{} heatmap", self.rows, self.cols),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let f = PredictionFile {
            n_states: self.p.len(),
            grid: [self.rows, self.cols],
            p: self.p.clone(),
            heatmap: self.heatmap.clone(),
        };
        serde_json::to_string(&f).expect("prediction serializes")
    }

    pub fn from_json(text: &str) -> Result<Prediction, PredictionError> {
        let f: PredictionFile = serde_json::from_str(text).map_err(|e| PredictionError::Format(e.to_string()))?;
        if f.p.len() != f.n_states {
            return Err(PredictionError::Format(format!("n_states {} but {} values", f.n_states, f.p.len())));
        }
        Prediction::new(f.p, f.grid[0], f.grid[1], f.heatmap)
    }

    /// Binary layout: magic `NNTL1`, little-endian `u32` state count, rows
    /// and cols, then `p` and the heatmap as little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 4 * (self.p.len() + self.heatmap.len()));
        out.extend_from_slice(MAGIC);
        for v in [self.p.len(), self.rows, self.cols] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.p.iter().chain(&self.heatmap) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Prediction, PredictionError> {
        let fail = |m: &str| PredictionError::Format(m.to_string());
        if bytes.len() < 17 || &bytes[..5] != MAGIC {
            return Err(fail("missing NNTL1 header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (n, rows, cols) = (word(5), word(9), word(13));
        let count = n
            .checked_add(rows.checked_mul(cols).ok_or_else(|| fail("grid too large"))?)
            .ok_or_else(|| fail("size overflow"))?;
        let body = &bytes[17..];
        if body.len() != count * 4 {
            return Err(fail(&format!("expected {} payload bytes, found {}", count * 4, body.len())));
        }
        let floats: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Prediction::new(floats[..n].to_vec(), rows, cols, floats[n..].to_vec())
    }

    /// Writes JSON when the path ends in `.json`, the binary layout otherwise.
    pub fn save(&self, path: &Path) -> Result<(), PredictionError> {
        if is_json(path) {
            std::fs::write(path, self.to_json())?;
        } else {
            std::fs::write(path, self.to_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Prediction, PredictionError> {
        if is_json(path) {
            Prediction::from_json(&std::fs::read_to_string(path)?)
        } else {
            Prediction::from_bytes(&std::fs::read(path)?)
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Number of hop-shortest lassos realized in the workspace.
    pub k: usize,
    /// Heatmap decay length in cells.
    pub sigma: f64,
    /// Probability assigned to states off the chosen lasso.
    pub floor: f32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { k: 5, sigma: 3.0, floor: 0.05 }
    }
}

/// An accepting lasso of automaton states: `prefix` runs from the initial
/// state to an accepting state, `cycle` returns to it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StateLasso {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl StateLasso {
    fn hops(&self) -> usize {
        self.prefix.len() - 1 + self.cycle.len() - 1
    }
}

/// A lasso realized as grid paths, with its cost in cell moves.
#[derive(Debug, Clone)]
pub struct RealizedLasso {
    pub lasso: StateLasso,
    pub prefix_cells: Vec<Cell>,
    pub cycle_cells: Vec<Cell>,
    pub cost: f64,
}

/// Breadth-first state path avoiding banned states and edges.
fn bfs_path(b: &Nba, src: usize, dst: usize, banned: &[bool], banned_edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let n = b.state_count();
    let mut parent = vec![usize::MAX; n];
    parent[src] = src;
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(q) = queue.pop_front() {
        if q == dst {
            let mut path = vec![q];
            let mut cur = q;
            while cur != src {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for e in b.out_edges(q) {
            if parent[e.dst] == usize::MAX && !banned[e.dst] && !banned_edges.contains(&(q, e.dst)) {
                parent[e.dst] = q;
                queue.push_back(e.dst);
            }
        }
    }
    None
}

/// Up to `k` hop-shortest simple state paths from `src` to `dst` (Yen).
pub fn k_shortest_paths(b: &Nba, src: usize, dst: usize, k: usize) -> Vec<Vec<usize>> {
    let n = b.state_count();
    let Some(first) = bfs_path(b, src, dst, &vec![false; n], &[]) else {
        return Vec::new();
    };
    let mut found = vec![first];
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    while found.len() < k {
        let last = found.last().expect("nonempty").clone();
        for i in 0..last.len().saturating_sub(1) {
            let root = &last[..=i];
            let banned_edges: Vec<(usize, usize)> = found
                .iter()
                .filter(|p| p.len() > i + 1 && &p[..=i] == root)
                .map(|p| (p[i], p[i + 1]))
                .collect();
            let mut banned = vec![false; n];
            for &q in &root[..i] {
                banned[q] = true;
            }
            if let Some(spur) = bfs_path(b, root[i], dst, &banned, &banned_edges) {
                let path: Vec<usize> = root[..i].iter().copied().chain(spur).collect();
                if !found.contains(&path) && !candidates.contains(&path) {
                    candidates.push(path);
                }
            }
        }
        let Some(best) = candidates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (a.len(), *a).cmp(&(b.len(), *b)))
            .map(|(i, _)| i)
        else {
            break;
        };
        found.push(candidates.swap_remove(best));
    }
    found
}

/// Shortest nonempty cycle `[q, …, q]` through `q`.
fn shortest_cycle(b: &Nba, q: usize) -> Option<Vec<usize>> {
    let banned = vec![false; b.state_count()];
    b.out_edges(q)
        .filter_map(|e| bfs_path(b, e.dst, q, &banned, &[]).map(|p| std::iter::once(q).chain(p).collect::<Vec<_>>()))
        .min_by(|a, b| (a.len(), a).cmp(&(b.len(), b)))
}

/// The `k` hop-shortest accepting lassos over all feasible accepting states.
pub fn shortest_lassos(b: &Nba, d: &DistanceTable, k: usize) -> Vec<StateLasso> {
    let Ok(feasible) = feasible_accepting(b, d) else {
        return Vec::new();
    };
    let mut all = Vec::new();
    for qf in feasible {
        let Some(cycle) = shortest_cycle(b, qf) else { continue };
        for prefix in k_shortest_paths(b, b.init(), qf, k) {
            all.push(StateLasso { prefix, cycle: cycle.clone() });
        }
    }
    all.sort_by(|a, b| (a.hops(), a).cmp(&(b.hops(), b)));
    all.truncate(k);
    all
}

fn symbol_at(ws: &GridWorkspace, c: Cell) -> crate::label::Symbol {
    ws.kind(c).symbol().unwrap_or(None)
}

/// Walks the state sequence from `start`, moving to the nearest cell that
/// enables each transition while staying on cells allowed by the current
/// state's self-loop (when it has one). Returns the visited cells.
fn realize_states(ws: &GridWorkspace, b: &Nba, start: Cell, states: &[usize]) -> Option<Vec<Cell>> {
    let mut cells = vec![start];
    for w in states.windows(2) {
        let (from, to) = (w[0], w[1]);
        if from == to {
            continue;
        }
        let guard = &b.edge(from, to)?.guard;
        let stay = b.edge(from, from).map(|e| &e.guard);
        let cur = *cells.last().expect("nonempty");
        let path = ws.grid_shortest_path_through(
            cur,
            |c| stay.map_or(true, |g| g.holds(symbol_at(ws, c))),
            |c| guard.holds(symbol_at(ws, c)),
        )?;
        cells.extend_from_slice(&path.cells()[1..]);
    }
    Some(cells)
}

/// Realizes a lasso from the workspace's initial cell. The cycle costs
/// nothing when the accepting state's self-loop holds where the prefix ends.
pub fn realize_lasso(ws: &GridWorkspace, b: &Nba, lasso: &StateLasso, lambda: f64) -> Option<RealizedLasso> {
    let start = ws.cell_of(ws.init());
    let prefix_cells = realize_states(ws, b, start, &lasso.prefix)?;
    let end = *prefix_cells.last().expect("nonempty");
    let qf = *lasso.prefix.last().expect("nonempty");
    let stays = b.edge(qf, qf).is_some_and(|e| e.guard.holds(symbol_at(ws, end)));
    let cycle_cells = if stays {
        vec![end]
    } else {
        let mut cells = realize_states(ws, b, end, &lasso.cycle)?;
        let back = ws.grid_shortest_path(*cells.last().expect("nonempty"), |c| c == end)?;
        cells.extend_from_slice(&back.cells()[1..]);
        cells
    };
    let cost = lambda * (prefix_cells.len() - 1) as f64 + (1.0 - lambda) * (cycle_cells.len() - 1) as f64;
    let lasso = if stays { StateLasso { prefix: lasso.prefix.clone(), cycle: vec![qf, qf] } } else { lasso.clone() };
    Some(RealizedLasso { lasso, prefix_cells, cycle_cells, cost })
}

/// Deterministic stand-in for learned predictions: realizes the `k`
/// hop-shortest accepting lassos, keeps the cheapest, and marks its states
/// (`p = 1`, others `floor`) and the cells near its path
/// (`exp(-d / sigma)`, 0 on obstacles).
pub fn oracle_predict(ws: &GridWorkspace, b: &Nba, d: &DistanceTable, lambda: f64) -> Result<Prediction, PredictionError> {
    oracle_predict_with(ws, b, d, lambda, &OracleConfig::default())
}

pub fn oracle_predict_with(
    ws: &GridWorkspace,
    b: &Nba,
    d: &DistanceTable,
    lambda: f64,
    cfg: &OracleConfig,
) -> Result<Prediction, PredictionError> {
    let lassos = shortest_lassos(b, d, cfg.k);
    if lassos.is_empty() {
        return Err(PredictionError::NoFeasibleAccepting);
    }
    let mut best: Option<RealizedLasso> = None;
    for l in &lassos {
        if let Some(r) = realize_lasso(ws, b, l, lambda) {
            if best.as_ref().map_or(true, |b| r.cost < b.cost) {
                best = Some(r);
            }
        }
    }
    let best = best.ok_or(PredictionError::NoRealizableRun)?;
    let mut p = vec![cfg.floor; b.state_count()];
    for &q in best.lasso.prefix.iter().chain(&best.lasso.cycle) {
        p[q] = 1.0;
    }
    let (rows, cols) = (ws.height(), ws.width());
    let mut on_path = vec![false; rows * cols];
    for c in best.prefix_cells.iter().chain(&best.cycle_cells) {
        on_path[ws.index_of(*c)] = true;
    }
    let dist = distance_transform(&on_path, rows, cols);
    let heatmap = (0..rows * cols)
        .map(|i| {
            if ws.kind_at_index(i) == CellKind::Obstacle {
                0.0
            } else {
                (-dist[i] / cfg.sigma).exp() as f32
            }
        })
        .collect();
    Prediction::new(p, rows, cols, heatmap)
}

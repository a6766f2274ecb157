//! Continuous unit-square workspace backed by a labeled occupancy grid.
//!
//! The grid is both the obstacle/label model and the raster used by the
//! encoders: a point `(x, y)` lies in column `floor(x * width)` and row
//! `floor(y * height)`.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{symbol_index, Label, Symbol};

pub const DEFAULT_GRID: usize = 200;

/// Per-thread search buffers, valid for the entries stamped with the current epoch.
#[derive(Default)]
struct AstarScratch {
    stamp: Vec<u32>,
    epoch: u32,
    g: Vec<u32>,
    parent: Vec<u32>,
}

thread_local! {
    static ASTAR_SCRATCH: RefCell<AstarScratch> = RefCell::new(AstarScratch::default());
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("point ({x}, {y}) lies in an obstacle cell")]
    ObstaclePoint { x: f64, y: f64 },
    #[error("point ({x}, {y}) is outside the unit square")]
    OutOfBounds { x: f64, y: f64 },
    #[error("workspace has no free cell")]
    NoFreeSpace,
    #[error("invalid workspace: {0}")]
    Invalid(String),
    #[error("workspace generation failed after {attempts} attempts")]
    GenerationFailed { attempts: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn in_unit_square(self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && (0.0..1.0).contains(&self.x)
            && (0.0..1.0).contains(&self.y)
    }
}

/// Grid cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Free,
    Obstacle,
    Region(Label),
}

impl CellKind {
    /// File code: 0 = free, 1 = obstacle, 1 + i = region `l_i`.
    pub fn code(self) -> u32 {
        match self {
            CellKind::Free => 0,
            CellKind::Obstacle => 1,
            CellKind::Region(l) => 1 + l.0 as u32,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(CellKind::Free),
            1 => Some(CellKind::Obstacle),
            c if c <= u16::MAX as u32 + 1 => Some(CellKind::Region(Label((c - 1) as u16))),
            _ => None,
        }
    }

    /// The symbol read at a non-obstacle cell.
    pub fn symbol(self) -> Option<Symbol> {
        match self {
            CellKind::Free => Some(None),
            CellKind::Obstacle => None,
            CellKind::Region(l) => Some(Some(l)),
        }
    }
}

/// A 4-connected sequence of non-obstacle cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPath(pub Vec<Cell>);

impl CellPath {
    /// Number of moves (cells minus one).
    pub fn moves(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct GridWorkspace {
    width: usize,
    height: usize,
    m: usize,
    cells: Vec<CellKind>,
    init: Point,
    free_cells: Vec<u32>,
    /// Non-obstacle cell indices grouped by dense symbol index.
    cells_by_symbol: Vec<Vec<u32>>,
}

impl GridWorkspace {
    pub fn new(
        width: usize,
        height: usize,
        m: usize,
        cells: Vec<CellKind>,
        init: Point,
    ) -> Result<Self, WorkspaceError> {
        if width == 0 || height == 0 {
            return Err(WorkspaceError::Invalid("empty grid".into()));
        }
        if cells.len() != width * height {
            return Err(WorkspaceError::Invalid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if !init.in_unit_square() {
            return Err(WorkspaceError::OutOfBounds { x: init.x, y: init.y });
        }
        let mut free_cells = Vec::new();
        let mut cells_by_symbol = vec![Vec::new(); m + 1];
        for (i, kind) in cells.iter().enumerate() {
            match *kind {
                CellKind::Obstacle => {}
                CellKind::Free => {
                    free_cells.push(i as u32);
                    cells_by_symbol[0].push(i as u32);
                }
                CellKind::Region(l) => {
                    if l.0 == 0 || l.index() > m {
                        return Err(WorkspaceError::Invalid(format!(
                            "region label {} outside 1..={m}",
                            l.0
                        )));
                    }
                    free_cells.push(i as u32);
                    cells_by_symbol[l.index()].push(i as u32);
                }
            }
        }
        if cells_by_symbol[0].is_empty() {
            return Err(WorkspaceError::Invalid("no free cell".into()));
        }
        let w = GridWorkspace {
            width,
            height,
            m,
            cells,
            init,
            free_cells,
            cells_by_symbol,
        };
        if w.kind(w.cell_of(init)) == CellKind::Obstacle {
            return Err(WorkspaceError::ObstaclePoint { x: init.x, y: init.y });
        }
        Ok(w)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of labels `m`.
    pub fn label_count(&self) -> usize {
        self.m
    }

    pub fn init(&self) -> Point {
        self.init
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn kind(&self, c: Cell) -> CellKind {
        self.cells[c.row * self.width + c.col]
    }

    pub fn kind_at_index(&self, idx: usize) -> CellKind {
        self.cells[idx]
    }

    pub fn index_of(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at_index(&self, idx: usize) -> Cell {
        Cell::new(idx / self.width, idx % self.width)
    }

    pub fn cell_of(&self, p: Point) -> Cell {
        let col = ((p.x * self.width as f64).floor().max(0.0) as usize).min(self.width - 1);
        let row = ((p.y * self.height as f64).floor().max(0.0) as usize).min(self.height - 1);
        Cell::new(row, col)
    }

    pub fn cell_center(&self, c: Cell) -> Point {
        Point::new(
            (c.col as f64 + 0.5) / self.width as f64,
            (c.row as f64 + 0.5) / self.height as f64,
        )
    }

    /// Side length of a cell along x, in workspace units.
    pub fn cell_size(&self) -> f64 {
        1.0 / self.width as f64
    }

    pub fn is_obstacle(&self, p: Point) -> bool {
        self.kind(self.cell_of(p)) == CellKind::Obstacle
    }

    /// Non-obstacle cell indices.
    pub fn free_cells(&self) -> &[u32] {
        &self.free_cells
    }

    /// Non-obstacle cells reading the given symbol.
    pub fn cells_with_symbol(&self, s: Symbol) -> &[u32] {
        self.cells_by_symbol
            .get(symbol_index(s))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Labeling function: the region containing `p`, `None` in free space.
    pub fn label_at(&self, p: Point) -> Result<Option<Label>, WorkspaceError> {
        if !p.in_unit_square() {
            return Err(WorkspaceError::OutOfBounds { x: p.x, y: p.y });
        }
        match self.kind(self.cell_of(p)) {
            CellKind::Obstacle => Err(WorkspaceError::ObstaclePoint { x: p.x, y: p.y }),
            CellKind::Free => Ok(None),
            CellKind::Region(l) => Ok(Some(l)),
        }
    }

    /// Visits the supercover of segment `a → b`: every cell whose interior the
    /// segment meets, plus both side cells wherever it passes exactly through a
    /// grid corner. Traversal stops early when `visit` returns `false`.
    pub fn traverse_segment(&self, a: Point, b: Point, mut visit: impl FnMut(Cell) -> bool) {
        let (w, h) = (self.width as i64, self.height as i64);
        let (gx0, gy0) = (a.x * w as f64, a.y * h as f64);
        let (gx1, gy1) = (b.x * w as f64, b.y * h as f64);
        let clamp = |v: f64, n: i64| (v.floor() as i64).clamp(0, n - 1);
        let (mut cx, mut cy) = (clamp(gx0, w), clamp(gy0, h));
        let (ex, ey) = (clamp(gx1, w), clamp(gy1, h));
        let cell = |x: i64, y: i64| Cell::new(y as usize, x as usize);

        if !visit(cell(cx, cy)) {
            return;
        }
        let (dx, dy) = (gx1 - gx0, gy1 - gy0);
        let step_x = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
        let step_y = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };
        let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
        let mut t_max_x = match step_x {
            1 => (cx as f64 + 1.0 - gx0) / dx,
            -1 => (gx0 - cx as f64) / -dx,
            _ => f64::INFINITY,
        };
        let mut t_max_y = match step_y {
            1 => (cy as f64 + 1.0 - gy0) / dy,
            -1 => (gy0 - cy as f64) / -dy,
            _ => f64::INFINITY,
        };
        let in_bounds = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
        let mut budget = (ex - cx).abs() + (ey - cy).abs();
        while (cx, cy) != (ex, ey) && budget > 0 {
            if t_max_x.is_finite() && (t_max_x - t_max_y).abs() < 1e-12 {
                // exact corner crossing
                let (sx, sy) = (cx + step_x, cy + step_y);
                if in_bounds(sx, cy) && !visit(cell(sx, cy)) {
                    return;
                }
                if in_bounds(cx, sy) && !visit(cell(cx, sy)) {
                    return;
                }
                cx = sx;
                cy = sy;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
                budget -= 2;
            } else if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += t_delta_x;
                budget -= 1;
            } else {
                cy += step_y;
                t_max_y += t_delta_y;
                budget -= 1;
            }
            if !in_bounds(cx, cy) {
                return;
            }
            if !visit(cell(cx, cy)) {
                return;
            }
        }
    }

    /// Supercover cells of a segment, in traversal order.
    pub fn segment_cells(&self, a: Point, b: Point) -> Vec<Cell> {
        let mut out = Vec::new();
        self.traverse_segment(a, b, |c| {
            out.push(c);
            true
        });
        out
    }

    /// Transition relation of the workspace: the straight segment touches no
    /// obstacle cell and changes label value at most once (free space counts
    /// as its own value).
    pub fn segment_valid(&self, a: Point, b: Point) -> bool {
        // traverse from a canonical endpoint so the relation is symmetric
        let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let mut ok = true;
        let mut prev: Option<Symbol> = None;
        let mut changes = 0;
        self.traverse_segment(a, b, |c| match self.kind(c).symbol() {
            None => {
                ok = false;
                false
            }
            Some(s) => {
                if let Some(p) = prev {
                    if p != s {
                        changes += 1;
                        if changes > 1 {
                            ok = false;
                            return false;
                        }
                    }
                }
                prev = Some(s);
                true
            }
        });
        ok
    }

    /// True when the segment touches no obstacle cell; labels are ignored.
    pub fn segment_obstacle_free(&self, a: Point, b: Point) -> bool {
        let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let mut ok = true;
        self.traverse_segment(a, b, |c| {
            ok = self.kind(c) != CellKind::Obstacle;
            ok
        });
        ok
    }

    /// Breadth-first shortest 4-connected path over non-obstacle cells from
    /// `start` to the nearest cell satisfying `goal`.
    pub fn grid_shortest_path(&self, start: Cell, goal: impl Fn(Cell) -> bool) -> Option<CellPath> {
        self.grid_shortest_path_through(start, |_| true, goal)
    }

    /// Like [`GridWorkspace::grid_shortest_path`], but every cell after
    /// `start` other than the final one must also satisfy `passable`.
    pub fn grid_shortest_path_through(
        &self,
        start: Cell,
        passable: impl Fn(Cell) -> bool,
        goal: impl Fn(Cell) -> bool,
    ) -> Option<CellPath> {
        if self.kind(start) == CellKind::Obstacle {
            return None;
        }
        let n = self.width * self.height;
        let mut parent = vec![u32::MAX; n];
        let s = self.index_of(start);
        parent[s] = s as u32;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            let c = self.cell_at_index(i);
            if goal(c) {
                let mut path = vec![c];
                let mut j = i;
                while j != s {
                    j = parent[j] as usize;
                    path.push(self.cell_at_index(j));
                }
                path.reverse();
                return Some(CellPath(path));
            }
            if i != s && !passable(c) {
                continue;
            }
            for nb in self.neighbors4(c) {
                let k = self.index_of(nb);
                if parent[k] == u32::MAX && self.cells[k] != CellKind::Obstacle {
                    parent[k] = i as u32;
                    queue.push_back(k);
                }
            }
        }
        None
    }

    /// Shortest 4-connected path between two cells, found with A* under the
    /// Manhattan heuristic. Same length as the BFS path, far fewer expansions
    /// on open maps.
    pub fn grid_path_between(&self, start: Cell, goal: Cell) -> Option<CellPath> {
        if self.kind(start) == CellKind::Obstacle || self.kind(goal) == CellKind::Obstacle {
            return None;
        }
        let h = |c: Cell| (c.row.abs_diff(goal.row) + c.col.abs_diff(goal.col)) as u32;
        let n = self.width * self.height;
        let (s, t) = (self.index_of(start), self.index_of(goal));
        ASTAR_SCRATCH.with(|scratch| {
            let mut scratch = scratch.borrow_mut();
            let AstarScratch { stamp, epoch, g, parent } = &mut *scratch;
            if stamp.len() != n || *epoch == u32::MAX {
                *stamp = vec![0; n];
                *g = vec![0; n];
                *parent = vec![0; n];
                *epoch = 0;
            }
            *epoch += 1;
            let epoch = *epoch;
            let cost = |stamp: &[u32], g: &[u32], k: usize| if stamp[k] == epoch { g[k] } else { u32::MAX };
            stamp[s] = epoch;
            g[s] = 0;
            parent[s] = s as u32;
            // smallest f first, deeper nodes first on ties; stale entries skipped
            let mut open = BinaryHeap::from([(Reverse(h(start)), 0u32, s)]);
            while let Some((_, gi, i)) = open.pop() {
                if gi != g[i] {
                    continue;
                }
                if i == t {
                    let mut path = vec![goal];
                    let mut j = i;
                    while j != s {
                        j = parent[j] as usize;
                        path.push(self.cell_at_index(j));
                    }
                    path.reverse();
                    return Some(CellPath(path));
                }
                for nb in self.neighbors4(self.cell_at_index(i)) {
                    let k = self.index_of(nb);
                    if self.cells[k] != CellKind::Obstacle && gi + 1 < cost(stamp, g, k) {
                        stamp[k] = epoch;
                        g[k] = gi + 1;
                        parent[k] = i as u32;
                        open.push((Reverse(gi + 1 + h(nb)), gi + 1, k));
                    }
                }
            }
            None
        })
    }

    /// BFS hop distances from a set of source cells (`u32::MAX` = unreachable).
    pub fn bfs_distances(&self, sources: impl IntoIterator<Item = Cell>) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.width * self.height];
        let mut queue = VecDeque::new();
        for c in sources {
            let i = self.index_of(c);
            if self.cells[i] != CellKind::Obstacle && dist[i] == u32::MAX {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let c = self.cell_at_index(i);
            for nb in self.neighbors4(c) {
                let k = self.index_of(nb);
                if dist[k] == u32::MAX && self.cells[k] != CellKind::Obstacle {
                    dist[k] = dist[i] + 1;
                    queue.push_back(k);
                }
            }
        }
        dist
    }

    /// In-bounds 4-neighbours in fixed order: up, down, left, right.
    pub fn neighbors4(&self, c: Cell) -> impl Iterator<Item = Cell> {
        let (w, h) = (self.width, self.height);
        let up = (c.row > 0).then(|| Cell::new(c.row - 1, c.col));
        let down = (c.row + 1 < h).then(|| Cell::new(c.row + 1, c.col));
        let left = (c.col > 0).then(|| Cell::new(c.row, c.col - 1));
        let right = (c.col + 1 < w).then(|| Cell::new(c.row, c.col + 1));
        [up, down, left, right].into_iter().flatten()
    }

    /// Uniform point inside the given cell.
    pub fn sample_in_cell<R: Rng + ?Sized>(&self, c: Cell, rng: &mut R) -> Point {
        let x = (c.col as f64 + rng.gen::<f64>()) / self.width as f64;
        let y = (c.row as f64 + rng.gen::<f64>()) / self.height as f64;
        // guard against rounding up to the next cell
        let x = x.min((c.col as f64 + 1.0) / self.width as f64 - 1e-12);
        let y = y.min((c.row as f64 + 1.0) / self.height as f64 - 1e-12);
        Point::new(x, y)
    }

    /// Uniform point over the union of non-obstacle cells.
    pub fn sample_free_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point, WorkspaceError> {
        if self.free_cells.is_empty() {
            return Err(WorkspaceError::NoFreeSpace);
        }
        let idx = self.free_cells[rng.gen_range(0..self.free_cells.len())];
        Ok(self.sample_in_cell(self.cell_at_index(idx as usize), rng))
    }

    pub fn to_file(&self) -> WorkspaceFile {
        WorkspaceFile {
            width: self.width,
            height: self.height,
            m: self.m,
            init: [self.init.x, self.init.y],
            grid: self.cells.iter().map(|k| k.code()).collect(),
        }
    }

    pub fn from_file(f: &WorkspaceFile) -> Result<Self, WorkspaceError> {
        let cells = f
            .grid
            .iter()
            .map(|&c| CellKind::from_code(c).ok_or_else(|| WorkspaceError::Invalid(format!("bad cell code {c}"))))
            .collect::<Result<Vec<_>, _>>()?;
        GridWorkspace::new(f.width, f.height, f.m, cells, Point::new(f.init[0], f.init[1]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("workspace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorkspaceError> {
        let f: WorkspaceFile = serde_json::from_str(text)?;
        GridWorkspace::from_file(&f)
    }

    pub fn load(path: &Path) -> Result<Self, WorkspaceError> {
        GridWorkspace::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorkspaceError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// On-disk workspace: cell codes 0 = free, 1 = obstacle, 1 + i = region `l_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceFile {
    pub width: usize,
    pub height: usize,
    pub m: usize,
    pub init: [f64; 2],
    pub grid: Vec<u32>,
}

/// Random map generation parameters. Sizes are in cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub width: usize,
    pub height: usize,
    pub m: usize,
    pub region_size: (usize, usize),
    pub obstacle_count: (usize, usize),
    pub obstacle_size: (usize, usize),
    pub max_retries: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            width: DEFAULT_GRID,
            height: DEFAULT_GRID,
            m: 7,
            region_size: (12, 24),
            obstacle_count: (6, 12),
            obstacle_size: (10, 45),
            max_retries: 100,
        }
    }
}

/// Reproducible random workspace: `m` disjoint rectangular regions, random
/// rectangular obstacles on the remaining free cells and a free initial
/// point. Maps where some region is unreachable from the initial cell are
/// rejected and regenerated from the next sub-seed.
pub fn generate_random_workspace(seed: u64, params: &GenParams) -> Result<GridWorkspace, WorkspaceError> {
    if params.m == 0 {
        return Err(WorkspaceError::Invalid("m must be at least 1".into()));
    }
    if params.region_size.0 == 0
        || params.region_size.1 < params.region_size.0
        || params.region_size.1 > params.width.min(params.height)
        || params.obstacle_size.1 < params.obstacle_size.0
        || params.obstacle_count.1 < params.obstacle_count.0
    {
        return Err(WorkspaceError::Invalid("size ranges do not fit the grid".into()));
    }
    for attempt in 0..params.max_retries {
        let sub_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        if let Some(w) = try_generate(&mut rng, params) {
            return Ok(w);
        }
    }
    Err(WorkspaceError::GenerationFailed { attempts: params.max_retries })
}

fn try_generate(rng: &mut ChaCha8Rng, p: &GenParams) -> Option<GridWorkspace> {
    let (w, h) = (p.width, p.height);
    let mut cells = vec![CellKind::Free; w * h];
    let rect = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| {
        let rw = rng.gen_range(lo..=hi).min(w);
        let rh = rng.gen_range(lo..=hi).min(h);
        let c0 = rng.gen_range(0..=w - rw);
        let r0 = rng.gen_range(0..=h - rh);
        (r0, c0, rh, rw)
    };
    for i in 1..=p.m {
        let mut placed = false;
        for _ in 0..200 {
            let (r0, c0, rh, rw) = rect(rng, p.region_size.0, p.region_size.1);
            // keep one free cell of margin between regions
            let clear = (r0.saturating_sub(1)..(r0 + rh + 1).min(h))
                .all(|r| (c0.saturating_sub(1)..(c0 + rw + 1).min(w)).all(|c| cells[r * w + c] == CellKind::Free));
            if clear {
                for r in r0..r0 + rh {
                    for c in c0..c0 + rw {
                        cells[r * w + c] = CellKind::Region(Label(i as u16));
                    }
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    let n_obs = rng.gen_range(p.obstacle_count.0..=p.obstacle_count.1);
    for _ in 0..n_obs {
        let lo = p.obstacle_size.0.max(1);
        let (r0, c0, rh, rw) = rect(rng, lo, p.obstacle_size.1.max(lo));
        // obstacles are thin walls or blocks; keep one side short half of the time
        let (rh, rw) = if rng.gen_bool(0.5) { (rh.min(lo.max(3)), rw) } else { (rh, rw) };
        for r in r0..r0 + rh {
            for c in c0..c0 + rw {
                if cells[r * w + c] == CellKind::Free {
                    cells[r * w + c] = CellKind::Obstacle;
                }
            }
        }
    }
    let free: Vec<usize> = (0..w * h).filter(|&i| cells[i] == CellKind::Free).collect();
    if free.is_empty() {
        return None;
    }
    let init_idx = free[rng.gen_range(0..free.len())];
    let init_cell = Cell::new(init_idx / w, init_idx % w);
    let init = Point::new(
        (init_cell.col as f64 + rng.gen_range(0.1..0.9)) / w as f64,
        (init_cell.row as f64 + rng.gen_range(0.1..0.9)) / h as f64,
    );
    let ws = GridWorkspace::new(w, h, p.m, cells, init).ok()?;
    let dist = ws.bfs_distances([init_cell]);
    let all_reachable = (1..=p.m).all(|i| {
        ws.cells_with_symbol(Some(Label(i as u16)))
            .iter()
            .any(|&c| dist[c as usize] != u32::MAX)
    });
    all_reachable.then_some(ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn open(w: usize, h: usize) -> GridWorkspace {
        GridWorkspace::new(w, h, 3, vec![CellKind::Free; w * h], Point::new(0.01, 0.01)).unwrap()
    }

    fn with(w: usize, h: usize, f: impl Fn(usize, usize) -> CellKind) -> GridWorkspace {
        let cells = (0..w * h).map(|i| f(i / w, i % w)).collect();
        GridWorkspace::new(w, h, 3, cells, Point::new(0.001, 0.001)).unwrap()
    }

    /// Cells met by dense sampling along the segment, consecutive duplicates removed.
    fn dense_cells(ws: &GridWorkspace, a: Point, b: Point) -> Vec<Cell> {
        let steps = 20_000;
        let mut out: Vec<Cell> = Vec::new();
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            let c = ws.cell_of(p);
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn label_lookup() {
        let ws = with(10, 10, |r, c| match (r, c) {
            (0, 5) => CellKind::Region(Label(2)),
            (5, 5) => CellKind::Obstacle,
            _ => CellKind::Free,
        });
        assert_eq!(ws.label_at(Point::new(0.55, 0.05)).unwrap(), Some(Label(2)));
        assert_eq!(ws.label_at(Point::new(0.15, 0.05)).unwrap(), None);
        assert!(matches!(
            ws.label_at(Point::new(0.55, 0.55)),
            Err(WorkspaceError::ObstaclePoint { .. })
        ));
        assert!(matches!(ws.label_at(Point::new(1.2, 0.5)), Err(WorkspaceError::OutOfBounds { .. })));
    }

    #[test]
    fn init_in_obstacle_is_rejected() {
        let mut cells = vec![CellKind::Free; 4];
        cells[0] = CellKind::Obstacle;
        let err = GridWorkspace::new(2, 2, 1, cells, Point::new(0.1, 0.1)).unwrap_err();
        assert!(matches!(err, WorkspaceError::ObstaclePoint { .. }));
    }

    #[test]
    fn segment_inside_region_is_valid() {
        let ws = with(10, 10, |_, c| if (3..7).contains(&c) { CellKind::Region(Label(1)) } else { CellKind::Free });
        assert!(ws.segment_valid(Point::new(0.35, 0.2), Point::new(0.65, 0.8)));
    }

    #[test]
    fn segment_through_obstacle_is_invalid() {
        let ws = with(10, 10, |r, c| if r == 5 && c == 5 { CellKind::Obstacle } else { CellKind::Free });
        assert!(!ws.segment_valid(Point::new(0.05, 0.55), Point::new(0.95, 0.55)));
        assert!(ws.segment_valid(Point::new(0.05, 0.45), Point::new(0.95, 0.45)));
    }

    #[test]
    fn crossing_a_region_entirely_is_two_changes() {
        let ws = with(10, 10, |_, c| if (4..6).contains(&c) { CellKind::Region(Label(1)) } else { CellKind::Free });
        let (a, b) = (Point::new(0.05, 0.31), Point::new(0.95, 0.47));
        // oracle: statuses along a dense walk of the segment
        let statuses: Vec<_> = dense_cells(&ws, a, b).iter().map(|&c| ws.kind(c)).collect();
        let changes = statuses.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 2);
        assert!(!ws.segment_valid(a, b));
        // entering the region once is fine
        assert!(ws.segment_valid(a, Point::new(0.5, 0.4)));
    }

    #[test]
    fn supercover_includes_both_cells_at_a_corner() {
        let ws = open(4, 4);
        let cells = ws.segment_cells(Point::new(0.125, 0.125), Point::new(0.625, 0.625));
        assert_eq!(
            cells,
            vec![
                Cell::new(0, 0),
                Cell::new(0, 1),
                Cell::new(1, 0),
                Cell::new(1, 1),
                Cell::new(1, 2),
                Cell::new(2, 1),
                Cell::new(2, 2)
            ]
        );
    }

    #[test]
    fn bfs_open_grid() {
        let ws = open(5, 5);
        let p = ws.grid_shortest_path(Cell::new(0, 0), |c| c == Cell::new(4, 4)).unwrap();
        assert_eq!(p.moves(), 8);
        let p = ws.grid_shortest_path(Cell::new(2, 2), |c| c == Cell::new(2, 2)).unwrap();
        assert_eq!(p.moves(), 0);
        for w in p.cells().windows(2) {
            assert_eq!(w[0].row.abs_diff(w[1].row) + w[0].col.abs_diff(w[1].col), 1);
        }
    }

    proptest! {
        #[test]
        fn astar_matches_bfs_length(seed in 0u64..500, sr in 0usize..12, sc in 0usize..12, gr in 0usize..12, gc in 0usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cells: Vec<CellKind> = (0..144)
                .map(|_| if rng.gen_bool(0.3) { CellKind::Obstacle } else { CellKind::Free })
                .collect();
            cells[0] = CellKind::Free;
            let ws = GridWorkspace::new(12, 12, 0, cells, Point::new(0.01, 0.01)).unwrap();
            let (s, g) = (Cell::new(sr, sc), Cell::new(gr, gc));
            let bfs = ws.grid_shortest_path(s, |c| c == g);
            let astar = ws.grid_path_between(s, g);
            prop_assert_eq!(bfs.as_ref().map(CellPath::moves), astar.as_ref().map(CellPath::moves));
            if let Some(p) = astar {
                prop_assert_eq!(p.cells().first(), Some(&s));
                prop_assert_eq!(p.cells().last(), Some(&g));
                for w in p.cells().windows(2) {
                    prop_assert_eq!(w[0].row.abs_diff(w[1].row) + w[0].col.abs_diff(w[1].col), 1);
                    prop_assert!(ws.kind(w[1]) != CellKind::Obstacle);
                }
            }
        }
    }

    #[test]
    fn bfs_walled_goal() {
        // goal (4,4) surrounded by obstacles
        let ws = with(6, 6, |r, c| {
            if (r, c) == (4, 4) {
                CellKind::Region(Label(1))
            } else if (3..=5).contains(&r) && (3..=5).contains(&c) {
                CellKind::Obstacle
            } else {
                CellKind::Free
            }
        });
        assert!(ws.grid_shortest_path(Cell::new(0, 0), |c| c == Cell::new(4, 4)).is_none());
    }

    #[test]
    fn sampling_avoids_obstacles() {
        let ws = with(10, 10, |_, c| if c >= 5 { CellKind::Obstacle } else { CellKind::Free });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100_000 {
            let p = ws.sample_free_uniform(&mut rng).unwrap();
            assert!(!ws.is_obstacle(p));
        }
    }

    #[test]
    fn sampling_single_cell() {
        let ws = with(10, 10, |r, c| if (r, c) == (0, 0) { CellKind::Free } else { CellKind::Obstacle });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let p = ws.sample_free_uniform(&mut rng).unwrap();
            assert_eq!(ws.cell_of(p), Cell::new(0, 0));
        }
    }

    #[test]
    fn sampling_is_uniform_over_cells() {
        let ws = open(10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 100];
        let draws = 100_000;
        for _ in 0..draws {
            let p = ws.sample_free_uniform(&mut rng).unwrap();
            counts[ws.index_of(ws.cell_of(p))] += 1;
        }
        let expected = draws as f64 / 100.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99 dof, 0.999 quantile ≈ 148
        assert!(chi2 < 148.0, "chi2 = {chi2}");
    }

    #[test]
    fn generation_is_deterministic_and_connected() {
        let params = GenParams::default();
        let a = generate_random_workspace(42, &params).unwrap();
        let b = generate_random_workspace(42, &params).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let labels: std::collections::BTreeSet<_> = a
            .cells()
            .iter()
            .filter_map(|k| match k {
                CellKind::Region(l) => Some(*l),
                _ => None,
            })
            .collect();
        assert_eq!(labels.len(), 7);
        let dist = a.bfs_distances([a.cell_of(a.init())]);
        for i in 1..=7u16 {
            assert!(a.cells_with_symbol(Some(Label(i))).iter().any(|&c| dist[c as usize] != u32::MAX));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ws = generate_random_workspace(5, &GenParams::default()).unwrap();
        let text = ws.to_json();
        let back = GridWorkspace::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.init().x.to_bits(), ws.init().x.to_bits());
    }

    fn small_grid() -> impl Strategy<Value = GridWorkspace> {
        (2usize..12, 2usize..12, any::<u64>()).prop_map(|(w, h, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cells: Vec<CellKind> = (0..w * h)
                .map(|_| match rng.gen_range(0..10) {
                    0..=1 => CellKind::Obstacle,
                    2 => CellKind::Region(Label(1)),
                    3 => CellKind::Region(Label(2)),
                    _ => CellKind::Free,
                })
                .collect();
            cells[0] = CellKind::Free;
            GridWorkspace::new(w, h, 2, cells, Point::new(0.0, 0.0)).unwrap()
        })
    }

    /// Exhaustive breadth-first oracle over (row, col) tuples.
    fn oracle_bfs_len(ws: &GridWorkspace, s: Cell, t: Cell) -> Option<usize> {
        let mut seen = std::collections::HashMap::new();
        seen.insert((s.row, s.col), 0usize);
        let mut frontier = vec![(s.row, s.col)];
        let mut d = 0;
        while !frontier.is_empty() {
            if frontier.contains(&(t.row, t.col)) {
                return Some(d);
            }
            d += 1;
            let mut next = Vec::new();
            for (r, c) in frontier {
                let cand = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
                for (nr, nc) in cand {
                    if nr < ws.height() && nc < ws.width() && ws.kind(Cell::new(nr, nc)) != CellKind::Obstacle && !seen.contains_key(&(nr, nc)) {
                        seen.insert((nr, nc), d);
                        next.push((nr, nc));
                    }
                }
            }
            frontier = next;
        }
        None
    }

    proptest! {
        #[test]
        fn segment_valid_symmetric(ws in small_grid(), ax in 0.0..1.0f64, ay in 0.0..1.0f64, bx in 0.0..1.0f64, by in 0.0..1.0f64) {
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            prop_assert_eq!(ws.segment_valid(a, b), ws.segment_valid(b, a));
            if !ws.is_obstacle(a) {
                prop_assert!(ws.segment_valid(a, a));
            }
        }

        #[test]
        fn supercover_contains_dense_samples(ws in small_grid(), ax in 0.0..1.0f64, ay in 0.0..1.0f64, bx in 0.0..1.0f64, by in 0.0..1.0f64) {
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let cover: std::collections::HashSet<_> = ws.segment_cells(a, b).into_iter().collect();
            for c in dense_cells(&ws, a, b) {
                prop_assert!(cover.contains(&c), "missing {:?}", c);
            }
        }

        #[test]
        fn bfs_matches_oracle(ws in small_grid(), tr in 0usize..12, tc in 0usize..12) {
            let t = Cell::new(tr % ws.height(), tc % ws.width());
            let got = ws.grid_shortest_path(Cell::new(0, 0), |c| c == t).map(|p| p.moves());
            prop_assert_eq!(got, oracle_bfs_len(&ws, Cell::new(0, 0), t));
        }

        #[test]
        fn samples_never_in_obstacles(ws in small_grid(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let p = ws.sample_free_uniform(&mut rng).unwrap();
                prop_assert!(!ws.is_obstacle(p));
                prop_assert!(p.in_unit_square());
            }
        }
    }
}

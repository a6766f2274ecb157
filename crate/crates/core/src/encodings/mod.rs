//! Network inputs and training targets: workspace tensor, automaton graph,
//! expert-path labels, and the on-disk dataset consumed by the trainer.
//!
//! Binary arrays are little-endian, row-major, with a JSON sidecar listing
//! each array's name, dtype (`<f4` or `<i4`), shape and byte offset.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Instance;
use crate::buchi::{compute_rho, feasible_accepting, DistanceTable, Nba};
use crate::ltl::{ltl_to_nba, parse_ltl};
use crate::planner::{plan, Plan, PlanError, PlannerConfig, Problem};
use crate::sampling::Strategy;
use crate::workspace::{Cell, CellKind, GridWorkspace};

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
}

/// `(m+1) × rows × cols`: channel 0 holds −1 at the initial cell, 1 on
/// obstacles and 0 elsewhere; channel `i` is 1 on the cells of region `l_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceTensor {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl WorkspaceTensor {
    pub fn get(&self, ch: usize, r: usize, c: usize) -> f32 {
        self.data[(ch * self.rows + r) * self.cols + c]
    }
}

pub fn encode_workspace(ws: &GridWorkspace) -> WorkspaceTensor {
    let (rows, cols, m) = (ws.height(), ws.width(), ws.label_count());
    let plane = rows * cols;
    let mut data = vec![0.0f32; (m + 1) * plane];
    for (i, kind) in ws.cells().iter().enumerate() {
        match *kind {
            CellKind::Free => {}
            CellKind::Obstacle => data[i] = 1.0,
            CellKind::Region(l) => data[l.index() * plane + i] = 1.0,
        }
    }
    data[ws.index_of(ws.cell_of(ws.init()))] = -1.0;
    WorkspaceTensor { channels: m + 1, rows, cols, data }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub src: usize,
    pub dst: usize,
    /// +1 for `π_i`, −1 for `¬π_i`, 0 when `π_i` does not occur.
    pub features: Vec<f32>,
}

/// Node ids: automaton states `0..S`, edge nodes `S..S+E`, pooling node `S+E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub m: usize,
    /// `[initial, feasible accepting, normalized distance]` per state.
    pub state_features: Vec<[f32; 3]>,
    pub edge_nodes: Vec<EdgeNode>,
    pub pool: usize,
    pub links: Vec<(usize, usize)>,
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.pool + 1
    }
}

/// Graph form of a pruned automaton over `m` labels. Each disjunct of a
/// guard gets its own edge node.
pub fn encode_nba(b: &Nba, d: &DistanceTable, m: usize) -> HeteroGraph {
    let n = b.state_count();
    let feasible = feasible_accepting(b, d).unwrap_or_default();
    let dist: Vec<Option<u32>> =
        (0..n).map(|q| feasible.iter().filter_map(|&f| d.reach(q, f)).min()).collect();
    let max = dist.iter().flatten().copied().max().unwrap_or(0);
    let state_features = (0..n)
        .map(|q| {
            let v3 = match dist[q] {
                None => 1.0,
                Some(_) if max == 0 => 0.0,
                Some(h) => h as f32 / max as f32,
            };
            [f32::from(u8::from(q == b.init())), f32::from(u8::from(feasible.contains(&q))), v3]
        })
        .collect();

    let mut edge_nodes = Vec::new();
    for e in b.edges() {
        for conj in e.guard.disjuncts() {
            let mut features = vec![0.0f32; m];
            for lit in conj {
                if let Some(f) = lit.label.index().checked_sub(1).and_then(|i| features.get_mut(i)) {
                    *f = if lit.positive { 1.0 } else { -1.0 };
                }
            }
            edge_nodes.push(EdgeNode { src: e.src, dst: e.dst, features });
        }
    }
    let pool = n + edge_nodes.len();
    let mut links = Vec::with_capacity(4 * pool);
    for (k, e) in edge_nodes.iter().enumerate() {
        links.push((e.src, n + k));
        links.push((n + k, e.dst));
    }
    links.extend((0..pool).map(|v| (v, v)));
    links.extend((0..pool).map(|v| (v, pool)));
    HeteroGraph { m, state_features, edge_nodes, pool, links }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertLabels {
    pub rows: usize,
    pub cols: usize,
    pub path_mask: Vec<u8>,
    pub state_mask: Vec<u8>,
}

/// Cells crossed by the plan's polylines plus their 8-neighbours, and the
/// automaton states its waypoints visit.
pub fn encode_expert(plan: &Plan, ws: &GridWorkspace, n_states: usize) -> ExpertLabels {
    let (rows, cols) = (ws.height(), ws.width());
    let mut path_mask = vec![0u8; rows * cols];
    let mut mark = |c: Cell| {
        for r in c.row.saturating_sub(1)..=(c.row + 1).min(rows - 1) {
            for k in c.col.saturating_sub(1)..=(c.col + 1).min(cols - 1) {
                path_mask[r * cols + k] = 1;
            }
        }
    };
    for path in [&plan.prefix, &plan.suffix] {
        for w in path {
            mark(ws.cell_of(w.x));
        }
        for pair in path.windows(2) {
            ws.traverse_segment(pair[0].x, pair[1].x, |c| {
                mark(c);
                true
            });
        }
    }
    let mut state_mask = vec![0u8; n_states];
    for w in plan.prefix.iter().chain(&plan.suffix) {
        if let Some(s) = state_mask.get_mut(w.q) {
            *s = 1;
        }
    }
    ExpertLabels { rows, cols, path_mask, state_mask }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayMeta {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayFileMeta {
    pub arrays: Vec<ArrayMeta>,
}

enum Array<'a> {
    F32(&'a [f32]),
    I32(Vec<i32>),
}

fn write_arrays(bin: &Path, meta: &Path, arrays: &[(&str, Vec<usize>, Array)]) -> Result<(), EncodingError> {
    let mut bytes = Vec::new();
    let mut metas = Vec::new();
    for (name, shape, a) in arrays {
        let offset = bytes.len();
        let dtype = match a {
            Array::F32(v) => {
                v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
                "<f4"
            }
            Array::I32(v) => {
                v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
                "<i4"
            }
        };
        metas.push(ArrayMeta { name: name.to_string(), dtype: dtype.into(), shape: shape.clone(), offset });
    }
    fs::write(bin, bytes)?;
    fs::write(meta, serde_json::to_string_pretty(&ArrayFileMeta { arrays: metas })? + "\n")?;
    Ok(())
}

fn read_array<'a>(bytes: &'a [u8], meta: &ArrayFileMeta, name: &str, dtype: &str) -> Result<(&'a [u8], Vec<usize>), EncodingError> {
    let a = meta
        .arrays
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| EncodingError::Format(format!("missing array {name}")))?;
    if a.dtype != dtype {
        return Err(EncodingError::Format(format!("{name}: expected {dtype}, found {}", a.dtype)));
    }
    let len = a.shape.iter().product::<usize>() * 4;
    let raw = bytes
        .get(a.offset..a.offset + len)
        .ok_or_else(|| EncodingError::Format(format!("{name}: file too short")))?;
    Ok((raw, a.shape.clone()))
}

fn words(raw: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    raw.chunks_exact(4).map(|c| c.try_into().expect("4 bytes"))
}

pub fn save_tensor(t: &WorkspaceTensor, bin: &Path, meta: &Path) -> Result<(), EncodingError> {
    write_arrays(bin, meta, &[("tensor", vec![t.channels, t.rows, t.cols], Array::F32(&t.data))])
}

pub fn load_tensor(bin: &Path, meta: &Path) -> Result<WorkspaceTensor, EncodingError> {
    let bytes = fs::read(bin)?;
    let meta: ArrayFileMeta = serde_json::from_str(&fs::read_to_string(meta)?)?;
    let (raw, shape) = read_array(&bytes, &meta, "tensor", "<f4")?;
    let [channels, rows, cols] = shape[..] else {
        return Err(EncodingError::Format(format!("tensor shape {shape:?} is not 3-D")));
    };
    Ok(WorkspaceTensor { channels, rows, cols, data: words(raw).map(f32::from_le_bytes).collect() })
}

pub fn save_labels(l: &ExpertLabels, bin: &Path, meta: &Path) -> Result<(), EncodingError> {
    let ints = |v: &[u8]| v.iter().map(|&x| i32::from(x)).collect();
    write_arrays(
        bin,
        meta,
        &[
            ("path_mask", vec![l.rows, l.cols], Array::I32(ints(&l.path_mask))),
            ("state_mask", vec![l.state_mask.len()], Array::I32(ints(&l.state_mask))),
        ],
    )
}

pub fn load_labels(bin: &Path, meta: &Path) -> Result<ExpertLabels, EncodingError> {
    let bytes = fs::read(bin)?;
    let meta: ArrayFileMeta = serde_json::from_str(&fs::read_to_string(meta)?)?;
    let mask = |raw: &[u8]| words(raw).map(|w| i32::from_le_bytes(w) as u8).collect::<Vec<u8>>();
    let (raw, shape) = read_array(&bytes, &meta, "path_mask", "<i4")?;
    let [rows, cols] = shape[..] else {
        return Err(EncodingError::Format(format!("path_mask shape {shape:?} is not 2-D")));
    };
    let path_mask = mask(raw);
    let (raw, _) = read_array(&bytes, &meta, "state_mask", "<i4")?;
    Ok(ExpertLabels { rows, cols, path_mask, state_mask: mask(raw) })
}

/// How expert plans are produced: full biased planning runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub iterations: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig { iterations: 10_000, seed: 0, lambda: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub formula: String,
    pub seed: u64,
    pub status: ExportStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_states: Option<usize>,
    #[serde(rename = "Jpre", skip_serializing_if = "Option::is_none", default)]
    pub j_pre: Option<f64>,
    #[serde(rename = "Jsuf", skip_serializing_if = "Option::is_none", default)]
    pub j_suf: Option<f64>,
    #[serde(rename = "J", skip_serializing_if = "Option::is_none", default)]
    pub j: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: usize,
    pub cols: usize,
    pub expert: ExpertConfig,
    pub instances: Vec<DatasetEntry>,
}

/// Writes one directory per instance and `manifest.json`. Instances without
/// an expert plan are listed as skipped with the reason.
pub fn export_dataset(instances: &[Instance], out: &Path, cfg: &ExpertConfig) -> Result<DatasetManifest, EncodingError> {
    fs::create_dir_all(out)?;
    let entries = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| export_one(inst, out, cfg, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let (rows, cols) = instances.first().map_or((0, 0), |i| (i.workspace.height(), i.workspace.width()));
    let manifest = DatasetManifest { rows, cols, expert: cfg.clone(), instances: entries };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn export_one(inst: &Instance, out: &Path, cfg: &ExpertConfig, seed: u64) -> Result<DatasetEntry, EncodingError> {
    let mut entry = DatasetEntry {
        id: inst.id.clone(),
        formula: inst.formula.clone(),
        seed,
        status: ExportStatus::Skipped,
        reason: None,
        n_states: None,
        j_pre: None,
        j_suf: None,
        j: None,
    };
    let problem = match parse_ltl(&inst.formula) {
        Err(e) => Err(format!("parse error: {e}")),
        Ok(f) => Problem::new(inst.workspace.clone(), &ltl_to_nba(&f)).map_err(|e| match e {
            PlanError::Unsatisfiable => "unsatisfiable".to_string(),
            e => e.to_string(),
        }),
    };
    let problem = match problem {
        Ok(p) => p,
        Err(reason) => {
            entry.reason = Some(reason);
            return Ok(entry);
        }
    };
    let pc = PlannerConfig {
        strategy: Strategy::Biased,
        max_iters: cfg.iterations,
        lambda: cfg.lambda,
        seed,
        ..Default::default()
    };
    let expert = match plan(&problem, &pc) {
        Ok((p, _)) => p,
        Err(e) => {
            entry.reason = Some(match e {
                PlanError::NoPrefixFound { .. } | PlanError::NoPlanFound { .. } => "no expert plan found".into(),
                e => e.to_string(),
            });
            return Ok(entry);
        }
    };

    let d = out.join(&inst.id);
    fs::create_dir_all(&d)?;
    let ws = &problem.ws;
    ws.save(&d.join("workspace.json")).map_err(|e| EncodingError::Format(e.to_string()))?;
    fs::write(d.join("nba.json"), problem.nba.to_json() + "\n")?;
    fs::write(d.join("plan.json"), expert.to_json() + "\n")?;
    save_tensor(&encode_workspace(ws), &d.join("tensor.bin"), &d.join("tensor.meta.json"))?;
    let rho = compute_rho(&problem.nba);
    let graph = encode_nba(&problem.nba, &rho, ws.label_count());
    fs::write(d.join("graph.json"), serde_json::to_string(&graph)? + "\n")?;
    let labels = encode_expert(&expert, ws, problem.nba.state_count());
    save_labels(&labels, &d.join("labels.bin"), &d.join("labels.meta.json"))?;

    entry.status = ExportStatus::Ok;
    entry.n_states = Some(problem.nba.state_count());
    entry.j_pre = Some(expert.j_pre);
    entry.j_suf = Some(expert.j_suf);
    entry.j = Some(expert.j);
    Ok(entry)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, EncodingError> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
}

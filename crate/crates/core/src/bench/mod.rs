//! Benchmark instances, strategy comparison runs and their CSV reports.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::ltl::{ltl_to_nba, parse_ltl};
use crate::planner::{plan, PlannerConfig, Problem};
use crate::sampling::Strategy;
use crate::workspace::{generate_random_workspace, CellKind, GenParams, GridWorkspace, Point};

pub use render::{render_svg, RenderError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("could not generate instance {index} after {attempts} attempts")]
    GenerationFailed { index: usize, attempts: u32 },
    #[error("instance {0}: {1}")]
    Instance(String, String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Task templates over distinct region labels `{a}`, `{b}`, `{c}`.
pub const TEMPLATES: &[&str] = &[
    "<> {a}",
    "<> {a} && <> {b}",
    "<> ({a} && <> {b})",
    "[]<> {a} && []<> {b}",
    "!{a} U {b} && <> {a}",
    "<> {a} && <> {b} && <> {c}",
    "[]<> {a} && (!{a} U {b}) && <> {c}",
    "<> ({a} && <> ({b} && <> {c}))",
    "[] !{a} && <> {b}",
    "[]<> {a} && [] !{b}",
];

pub const CASE_STUDY_FORMULA: &str = "[]<> l1 && (!l1 U l2) && <> l3";

/// Seed of the shipped 20-instance suite.
pub const SUITE_SEED: u64 = 20_240;
pub const SUITE_SIZE: usize = 20;

pub fn instantiate(template: &str, labels: &[u16]) -> String {
    let mut out = template.to_string();
    for (key, l) in ["{a}", "{b}", "{c}"].iter().zip(labels) {
        out = out.replace(key, &format!("l{l}"));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub workspace: GridWorkspace,
    pub formula: String,
    pub template: usize,
}

impl Instance {
    pub fn problem(&self) -> Result<Problem, BenchError> {
        let f = parse_ltl(&self.formula).map_err(|e| BenchError::Instance(self.id.clone(), e.to_string()))?;
        Problem::new(self.workspace.clone(), &ltl_to_nba(&f)).map_err(|e| BenchError::Instance(self.id.clone(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub formula: String,
    pub template: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub templates: Vec<String>,
    pub instances: Vec<ManifestEntry>,
}

const GEN_ATTEMPTS: u32 = 50;

/// A reproducible batch. Every instance is satisfiable and the oracle can
/// realize an accepting run in it, so all three strategies apply.
pub fn generate_instances(seed: u64, count: usize, params: &GenParams) -> Result<Vec<Instance>, BenchError> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(seed, i, params))
        .collect()
}

fn generate_one(seed: u64, index: usize, params: &GenParams) -> Result<Instance, BenchError> {
    let failed = BenchError::GenerationFailed { index, attempts: GEN_ATTEMPTS };
    if params.m == 0 {
        return Err(failed);
    }
    for attempt in 0..GEN_ATTEMPTS {
        let sub = seed ^ (index as u64).wrapping_mul(0xA076_1D64_78BD_642F) ^ u64::from(attempt).rotate_left(32);
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        let Ok(ws) = generate_random_workspace(rng.gen(), params) else { continue };
        let template = rng.gen_range(0..TEMPLATES.len());
        let mut labels: Vec<u16> = (1..=params.m as u16).collect();
        labels.shuffle(&mut rng);
        let formula = instantiate(TEMPLATES[template], &labels[..labels.len().min(3)]);
        let inst = Instance { id: format!("inst{index:04}"), workspace: ws, formula, template };
        let Ok(p) = inst.problem() else { continue };
        if p.with_oracle(0.5).is_ok() {
            return Ok(inst);
        }
    }
    Err(failed)
}

pub fn shipped_suite() -> Result<Vec<Instance>, BenchError> {
    generate_instances(SUITE_SEED, SUITE_SIZE, &GenParams::default())
}

/// `<dir>/manifest.json` plus `<dir>/<id>/workspace.json` and `formula.ltl`.
pub fn write_instances(dir: &Path, seed: u64, instances: &[Instance]) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    for inst in instances {
        let d = dir.join(&inst.id);
        fs::create_dir_all(&d)?;
        inst.workspace.save(&d.join("workspace.json")).map_err(|e| BenchError::Instance(inst.id.clone(), e.to_string()))?;
        fs::write(d.join("formula.ltl"), format!("{}\n", inst.formula))?;
    }
    let manifest = Manifest {
        seed,
        templates: TEMPLATES.iter().map(|s| s.to_string()).collect(),
        instances: instances
            .iter()
            .map(|i| ManifestEntry { id: i.id.clone(), formula: i.formula.clone(), template: i.template })
            .collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_instances(dir: &Path) -> Result<Vec<Instance>, BenchError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    manifest
        .instances
        .into_iter()
        .map(|e| {
            let ws = GridWorkspace::load(&dir.join(&e.id).join("workspace.json"))
                .map_err(|err| BenchError::Instance(e.id.clone(), err.to_string()))?;
            Ok(Instance { id: e.id, workspace: ws, formula: e.formula, template: e.template })
        })
        .collect()
}

/// Recreation of the case-study layout on an `n × n` grid: `l2` close to
/// the start, `l3` further along the bottom, `l1` in the top right behind a
/// wall, so visiting `l2` before `l3` is the short ordering.
pub fn case_study_workspace(n: usize) -> GridWorkspace {
    let s = |v: usize| v * n / 200;
    let cells = (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            let inside = |r0: usize, r1: usize, c0: usize, c1: usize| (s(r0)..s(r1)).contains(&r) && (s(c0)..s(c1)).contains(&c);
            if inside(20, 45, 60, 85) {
                CellKind::Region(Label(2))
            } else if inside(20, 45, 140, 165) {
                CellKind::Region(Label(3))
            } else if inside(150, 175, 140, 165) {
                CellKind::Region(Label(1))
            } else if inside(95, 105, 0, 120) || inside(20, 70, 105, 115) || inside(120, 185, 100, 110) {
                CellKind::Obstacle
            } else {
                CellKind::Free
            }
        })
        .collect();
    GridWorkspace::new(n, n, 3, cells, Point::new(0.1, 0.1)).expect("case-study layout is valid")
}

/// One planning run. `len` and `timeout` follow the convention that failed
/// runs only record `T`, `n` and `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance: String,
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub len: Option<f64>,
    pub timeout: bool,
}

impl BenchRecord {
    fn key(&self) -> (String, Strategy, u64) {
        (self.instance.clone(), self.strategy, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub strategies: Vec<Strategy>,
    pub trials: u64,
    pub planner: PlannerConfig,
    /// Uniform-strategy mean `T` (seconds) at or below which an instance is simple.
    pub simple_threshold: f64,
    pub workers: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            strategies: Strategy::ALL.to_vec(),
            trials: 3,
            planner: PlannerConfig { first_solution_only: true, time_limit: Some(60.0), ..Default::default() },
            simple_threshold: 5.0,
            workers: None,
        }
    }
}

/// Worker count from `NNGTL_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("NNGTL_WORKERS").ok()?.parse().ok().filter(|&n| n > 0)
}

pub fn run_one(problem: &Problem, id: &str, strategy: Strategy, seed: u64, base: &PlannerConfig) -> BenchRecord {
    let cfg = PlannerConfig { strategy, seed, ..base.clone() };
    match plan(problem, &cfg) {
        Ok((_, s)) => BenchRecord { instance: id.into(), strategy, seed, t: s.t, n: s.n, m: s.m, len: s.len, timeout: false },
        Err(e) => {
            let s = e.stats().cloned().unwrap_or_default();
            BenchRecord { instance: id.into(), strategy, seed, t: s.t, n: s.n, m: s.m, len: None, timeout: true }
        }
    }
}

/// Runs every (instance, strategy, trial) not already in `csv_path` and
/// rewrites the file with all records sorted by run key. Guided runs use the
/// oracle prediction; its computation is not timed.
pub fn compare(instances: &[Instance], cfg: &CompareConfig, csv_path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let mut records: BTreeMap<(String, Strategy, u64), BenchRecord> = BTreeMap::new();
    if csv_path.exists() {
        for r in read_records(csv_path)? {
            records.insert(r.key(), r);
        }
    }
    let done: BTreeSet<_> = records.keys().cloned().collect();
    let mut problems = Vec::new();
    for inst in instances {
        let p = inst.problem()?;
        let guided = if cfg.strategies.contains(&Strategy::Guided) {
            Some(p.clone().with_oracle(cfg.planner.lambda).map_err(|e| BenchError::Instance(inst.id.clone(), e.to_string()))?)
        } else {
            None
        };
        problems.push((inst.id.clone(), p, guided));
    }
    let mut tasks = Vec::new();
    for (i, (id, _, _)) in problems.iter().enumerate() {
        for &s in &cfg.strategies {
            for seed in 0..cfg.trials {
                if !done.contains(&(id.clone(), s, seed)) {
                    tasks.push((i, s, seed));
                }
            }
        }
    }
    let run = |&(i, s, seed): &(usize, Strategy, u64)| {
        let (id, p, g) = &problems[i];
        let problem = if s == Strategy::Guided { g.as_ref().expect("oracle computed") } else { p };
        run_one(problem, id, s, seed, &cfg.planner)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.or_else(workers_from_env).unwrap_or(0))
        .build()
        .expect("thread pool");
    let fresh: Vec<BenchRecord> = pool.install(|| tasks.par_iter().map(run).collect());
    for r in fresh {
        records.insert(r.key(), r);
    }
    let all: Vec<BenchRecord> = records.into_values().collect();
    write_records(csv_path, &all)?;
    Ok(all)
}

pub fn write_records(path: &Path, records: &[BenchRecord]) -> Result<(), BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(BenchError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub class: String,
    pub strategy: Strategy,
    #[serde(rename = "T")]
    pub t: f64,
    pub n: f64,
    /// Mean over runs that found a plan.
    pub len: Option<f64>,
    pub m: f64,
    pub timeouts: usize,
}

/// Instances whose uniform runs all finished with mean `T` at most the
/// threshold are simple, the rest complex. Without uniform runs every
/// instance is in class `all`.
pub fn classify(records: &[BenchRecord], threshold: f64) -> BTreeMap<String, &'static str> {
    let mut by_inst: BTreeMap<String, Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        by_inst.entry(r.instance.clone()).or_default().push(r);
    }
    by_inst
        .into_iter()
        .map(|(id, rs)| {
            let uni: Vec<_> = rs.iter().filter(|r| r.strategy == Strategy::Uniform).collect();
            let class = if uni.is_empty() {
                "all"
            } else if uni.iter().all(|r| !r.timeout) && mean(uni.iter().map(|r| r.t)) <= threshold {
                "simple"
            } else {
                "complex"
            };
            (id, class)
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

pub fn summarize(records: &[BenchRecord], threshold: f64) -> Vec<SummaryRow> {
    let classes = classify(records, threshold);
    let mut groups: BTreeMap<(&str, Strategy), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((classes[&r.instance], r.strategy)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((class, strategy), rs)| {
            let ok: Vec<f64> = rs.iter().filter_map(|r| r.len).collect();
            SummaryRow {
                class: class.into(),
                strategy,
                t: mean(rs.iter().map(|r| r.t)),
                n: mean(rs.iter().map(|r| r.n as f64)),
                len: (!ok.is_empty()).then(|| mean(ok.iter().copied())),
                m: mean(rs.iter().map(|r| r.m as f64)),
                timeouts: rs.iter().filter(|r| r.timeout).count(),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Median iterations-to-first-feasible per strategy; timed-out runs count
/// with their full iteration budget.
pub fn median_iterations(records: &[BenchRecord]) -> BTreeMap<Strategy, f64> {
    let mut by: BTreeMap<Strategy, Vec<usize>> = BTreeMap::new();
    for r in records {
        by.entry(r.strategy).or_default().push(r.n);
    }
    by.into_iter()
        .map(|(s, mut v)| {
            v.sort_unstable();
            let k = v.len();
            let med = if k % 2 == 1 { v[k / 2] as f64 } else { (v[k / 2 - 1] + v[k / 2]) as f64 / 2.0 };
            (s, med)
        })
        .collect()
}

/// Reference simple-task mean times, shown next to local results.
pub const REFERENCE_SIMPLE_T: [(Strategy, f64); 3] =
    [(Strategy::Uniform, 54.2475), (Strategy::Biased, 1.03305), (Strategy::Guided, 0.09518)];

/// Markdown report: the summary table, median iterations and reference rows.
pub fn report(records: &[BenchRecord], rows: &[SummaryRow]) -> String {
    let mut out = String::from("| class | strategy | T | n | len | m | timeouts |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let len = r.len.map_or("-".into(), |l| format!("{l:.4}"));
        out += &format!("| {} | {} | {:.4} | {:.1} | {} | {:.1} | {} |\n", r.class, r.strategy, r.t, r.n, len, r.m, r.timeouts);
    }
    out += "\nMedian iterations to first feasible plan:\n\n";
    for (s, m) in median_iterations(records) {
        out += &format!("- {s}: {m}\n");
    }
    out += "\nReference mean T on simple tasks (seconds, reference hardware):\n\n";
    for (s, t) in REFERENCE_SIMPLE_T {
        out += &format!("- {s}: {t}\n");
    }
    out
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("bench-out")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> GenParams {
        GenParams { width: 60, height: 60, m: 4, region_size: (4, 8), obstacle_count: (2, 4), obstacle_size: (3, 15), max_retries: 50 }
    }

    #[test]
    fn templates_parse() {
        for t in TEMPLATES {
            parse_ltl(&instantiate(t, &[1, 2, 3])).unwrap();
        }
        parse_ltl(CASE_STUDY_FORMULA).unwrap();
    }

    #[test]
    fn generation_is_reproducible_and_satisfiable() {
        let a = generate_instances(5, 4, &small_params()).unwrap();
        let b = generate_instances(5, 4, &small_params()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.workspace.to_json(), y.workspace.to_json());
            assert_eq!(x.formula, y.formula);
            assert!(!x.problem().unwrap().feasible.is_empty());
        }
    }

    #[test]
    fn instances_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let insts = generate_instances(1, 3, &small_params()).unwrap();
        write_instances(dir.path(), 1, &insts).unwrap();
        let back = read_instances(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (x, y) in insts.iter().zip(&back) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.formula, y.formula);
            assert_eq!(x.workspace.to_json(), y.workspace.to_json());
        }
    }

    #[test]
    fn compare_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("runs.csv");
        let insts = generate_instances(2, 2, &small_params()).unwrap();
        let cfg = CompareConfig {
            trials: 2,
            planner: PlannerConfig { max_iters: 3000, first_solution_only: true, ..Default::default() },
            workers: Some(2),
            ..Default::default()
        };
        let first = compare(&insts, &cfg, &csv_path).unwrap();
        assert_eq!(first.len(), 2 * 3 * 2);
        let before = fs::read(&csv_path).unwrap();
        let again = compare(&insts, &cfg, &csv_path).unwrap();
        assert_eq!(fs::read(&csv_path).unwrap(), before);
        assert_eq!(first, again);
        for r in &first {
            assert_eq!(r.timeout, r.len.is_none());
        }
    }

    #[test]
    fn summary_schema_and_classes() {
        let rec = |inst: &str, s, t, timeout: bool| BenchRecord {
            instance: inst.into(),
            strategy: s,
            seed: 0,
            t,
            n: 10,
            m: 20,
            len: (!timeout).then_some(1.0),
            timeout,
        };
        let records = vec![
            rec("a", Strategy::Uniform, 1.0, false),
            rec("a", Strategy::Guided, 0.1, false),
            rec("b", Strategy::Uniform, 9.0, true),
            rec("b", Strategy::Guided, 0.5, false),
        ];
        let rows = summarize(&records, 5.0);
        let classes: Vec<_> = rows.iter().map(|r| (r.class.as_str(), r.strategy)).collect();
        assert!(classes.contains(&("simple", Strategy::Uniform)));
        assert!(classes.contains(&("complex", Strategy::Guided)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary(&path, &rows).unwrap();
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "class,strategy,T,n,len,m,timeouts");
        let complex_uniform = rows.iter().find(|r| r.class == "complex" && r.strategy == Strategy::Uniform).unwrap();
        assert_eq!((complex_uniform.timeouts, complex_uniform.len), (1, None));
    }

    #[test]
    fn case_study_layout_prefers_l2_first() {
        let ws = case_study_workspace(200);
        let p = Problem::new(ws.clone(), &ltl_to_nba(&parse_ltl(CASE_STUDY_FORMULA).unwrap())).unwrap();
        assert!(!p.feasible.is_empty());
        let d = |a: &[u32], b: &[u32]| {
            let dist = ws.bfs_distances(a.iter().map(|&i| ws.cell_at_index(i as usize)));
            b.iter().map(|&i| dist[i as usize]).min().unwrap()
        };
        let start = [ws.index_of(ws.cell_of(ws.init())) as u32];
        let (l1, l2, l3) = (
            ws.cells_with_symbol(Some(Label(1))),
            ws.cells_with_symbol(Some(Label(2))),
            ws.cells_with_symbol(Some(Label(3))),
        );
        let via_l2 = d(&start, l2) + d(l2, l3) + d(l3, l1);
        let via_l3 = d(&start, l3) + d(l3, l2) + d(l2, l1);
        assert!(via_l2 < via_l3, "{via_l2} vs {via_l3}");
    }
}

//! Grid sweeps over `(N, k, B)` and seeds, with per-run records.
//!
//! # Config format
//!
//! ```text
//! # comment
//! [grid]
//! n = 10, 50
//! k = 1, 2, 5, 10
//! b = 100
//! seeds = 5
//! collision_free = both        # false | true | both
//! collision_free_k = 100       # optional: restrict the collision-free runs
//!
//! [corpus]
//! sentences_per_class = 100
//! tokens_per_sentence = 4
//! vocab_per_class = 1000
//! shared_vocab = 20
//! # path = data.tsv            # replaces the synthetic corpus (grid n unused)
//! # min_count = 50
//!
//! [train]
//! dim = 64
//! nce_epochs = 50
//! head_epochs = 50
//! learning_rate = 0.01
//! clip = 2.5                   # or `none`
//! temperature = 1
//!
//! [run]
//! master_seed = 7
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::csvio;
use crate::error::{Error, Result};
use crate::rng::mix_seed;
use crate::train::corpus::{self, SplitCorpus, SyntheticSpec};
use crate::train::{self, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionMode {
    Standard,
    CollisionFree,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synthetic {
        sentences_per_class: usize,
        tokens_per_sentence: usize,
        vocab_per_class: usize,
        shared_vocab: usize,
    },
    File { path: PathBuf, min_count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub bs: Vec<usize>,
    pub seeds: usize,
    pub collision: CollisionMode,
    pub collision_free_ks: Option<Vec<usize>>,
    pub corpus: CorpusSource,
    /// Template for every run; batch size, k, seed and mode are overridden.
    pub train: TrainConfig,
    pub master_seed: u64,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const KNOWN_KEYS: [(&str, &[&str]); 4] = [
    ("grid", &["n", "k", "b", "seeds", "collision_free", "collision_free_k"]),
    (
        "corpus",
        &["path", "min_count", "sentences_per_class", "tokens_per_sentence", "vocab_per_class", "shared_vocab"],
    ),
    ("train", &["dim", "nce_epochs", "head_epochs", "learning_rate", "clip", "temperature"]),
    ("run", &["master_seed"]),
];

fn parse_sections(text: &str, origin: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == section) {
                return Err(Error::parse(origin, i + 1, format!("unknown section [{section}]")));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
        let known = KNOWN_KEYS
            .iter()
            .find(|(s, _)| *s == section)
            .is_some_and(|(_, keys)| keys.contains(&key.trim()));
        if !known {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("unknown key `{}` in [{section}]", key.trim()),
            ));
        }
        let prev = out
            .entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), (i + 1, value.trim().to_string()));
        if prev.is_some() {
            return Err(Error::parse(origin, i + 1, format!("duplicate key `{}`", key.trim())));
        }
    }
    Ok(out)
}

struct Reader<'a> {
    sections: Sections,
    origin: &'a str,
}

impl Reader<'_> {
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.sections.get_mut(section)?.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(self.origin, line, format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn or<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(section, key)?.unwrap_or(default))
    }

    fn list(&mut self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        let Some((line, v)) = self.take(section, key) else {
            return Ok(None);
        };
        let items: std::result::Result<Vec<usize>, _> = v.split(',').map(|s| s.trim().parse()).collect();
        match items {
            Ok(items) if !items.is_empty() => Ok(Some(items)),
            _ => Err(Error::parse(self.origin, line, format!("bad list `{v}` for `{key}`"))),
        }
    }

    fn finish(self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some((key, (line, _))) = keys.iter().next() {
                return Err(Error::parse(
                    self.origin,
                    *line,
                    format!("unknown key `{key}` in [{section}]"),
                ));
            }
        }
        Ok(())
    }
}

impl SweepConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut r = Reader {
            sections: parse_sections(text, origin)?,
            origin,
        };
        let corpus = match r.take("corpus", "path") {
            Some((_, p)) => CorpusSource::File {
                path: PathBuf::from(p),
                min_count: r.or("corpus", "min_count", corpus::DEFAULT_MIN_COUNT)?,
            },
            None => CorpusSource::Synthetic {
                sentences_per_class: r.or("corpus", "sentences_per_class", 200)?,
                tokens_per_sentence: r.or("corpus", "tokens_per_sentence", 4)?,
                vocab_per_class: r.or("corpus", "vocab_per_class", 1000)?,
                shared_vocab: r.or("corpus", "shared_vocab", 20)?,
            },
        };
        let ns = match (&corpus, r.list("grid", "n")?) {
            (CorpusSource::Synthetic { .. }, Some(ns)) => ns,
            (CorpusSource::Synthetic { .. }, None) => {
                return Err(Error::InvalidArgument(format!("{origin}: [grid] n is required")))
            }
            (CorpusSource::File { .. }, _) => Vec::new(),
        };
        let ks = r
            .list("grid", "k")?
            .ok_or_else(|| Error::InvalidArgument(format!("{origin}: [grid] k is required")))?;
        let bs = r
            .list("grid", "b")?
            .ok_or_else(|| Error::InvalidArgument(format!("{origin}: [grid] b is required")))?;
        let seeds = r.or("grid", "seeds", 5)?;
        let collision = match r.take("grid", "collision_free") {
            None => CollisionMode::Standard,
            Some((line, v)) => match v.as_str() {
                "false" => CollisionMode::Standard,
                "true" => CollisionMode::CollisionFree,
                "both" => CollisionMode::Both,
                _ => return Err(Error::parse(origin, line, format!("collision_free must be false|true|both, got `{v}`"))),
            },
        };
        let collision_free_ks = r.list("grid", "collision_free_k")?;
        let clip = match r.take("train", "clip") {
            None => Some(2.5),
            Some((_, v)) if v == "none" => None,
            Some((line, v)) => Some(
                v.parse()
                    .map_err(|_| Error::parse(origin, line, format!("bad clip `{v}`")))?,
            ),
        };
        let train = TrainConfig {
            batch_size: 2,
            num_negatives: 1,
            temperature: r.or("train", "temperature", 1.0)?,
            nce_epochs: r.or("train", "nce_epochs", 50)?,
            head_epochs: r.or("train", "head_epochs", 50)?,
            learning_rate: r.or("train", "learning_rate", 0.01)?,
            grad_clip_norm: clip,
            embedding_dim: r.or("train", "dim", 64)?,
            collision_free: false,
            seed: 0,
        };
        train.validate()?;
        let master_seed = r.or("run", "master_seed", 0)?;
        r.finish()?;
        if seeds == 0 {
            return Err(Error::InvalidArgument(format!("{origin}: seeds must be positive")));
        }
        Ok(SweepConfig {
            ns,
            ks,
            bs,
            seeds,
            collision,
            collision_free_ks,
            corpus,
            train,
            master_seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn modes_for(&self, k: usize) -> Vec<bool> {
        let cf_allowed = self.collision_free_ks.as_ref().is_none_or(|ks| ks.contains(&k));
        match self.collision {
            CollisionMode::Standard => vec![false],
            CollisionMode::CollisionFree if cf_allowed => vec![true],
            CollisionMode::CollisionFree => vec![],
            CollisionMode::Both if cf_allowed => vec![false, true],
            CollisionMode::Both => vec![false],
        }
    }
}

/// One grid cell and trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub b: usize,
    pub trial: usize,
    pub collision_free: bool,
}

impl Cell {
    pub fn feasible(&self) -> bool {
        self.k >= 1 && self.k <= 2 * (self.b.max(1) - 1)
    }

    /// Depends on the cell only, so growing the grid never moves other cells.
    pub fn run_seed(&self, master: u64) -> u64 {
        mix_seed(&[
            master,
            self.n as u64,
            self.k as u64,
            self.b as u64,
            self.trial as u64,
            self.collision_free as u64,
        ])
    }

    /// Shared by every `k`, `B` and mode of the same `(N, trial)`.
    pub fn corpus_seed(&self, master: u64) -> u64 {
        mix_seed(&[master, self.n as u64, self.trial as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok(train::TrainResult),
    Infeasible,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub cell: Cell,
    pub seed: u64,
    pub outcome: Outcome,
    pub wall_time_s: f64,
}

pub const SWEEP_HEADER: [&str; 14] = [
    "N",
    "k",
    "B",
    "trial",
    "seed",
    "collision_free",
    "status",
    "mean_acc",
    "head_acc",
    "final_nce_loss",
    "skipped_batches",
    "head_selection_epoch",
    "error",
    "wall_time_s",
];

impl SweepRecord {
    pub fn status(&self) -> &'static str {
        match self.outcome {
            Outcome::Ok(_) => "ok",
            Outcome::Infeasible => "infeasible",
            Outcome::Failed(_) => "error",
        }
    }

    pub fn fields(&self) -> Vec<String> {
        let c = &self.cell;
        let mut f = vec![
            c.n.to_string(),
            c.k.to_string(),
            c.b.to_string(),
            c.trial.to_string(),
            self.seed.to_string(),
            (c.collision_free as u8).to_string(),
            self.status().to_string(),
        ];
        match &self.outcome {
            Outcome::Ok(r) => f.extend([
                format!("{:.6}", r.mean_classifier_accuracy),
                format!("{:.6}", r.linear_head_accuracy),
                format!("{:.9}", r.final_nce_loss),
                r.skipped_batches.to_string(),
                r.head_selection_epoch.to_string(),
                String::new(),
            ]),
            Outcome::Infeasible => f.extend(vec![String::new(); 5].into_iter().chain([
                format!("k > 2(B-1) = {}", 2 * (c.b.max(1) - 1)),
            ])),
            Outcome::Failed(e) => f.extend(vec![String::new(); 5].into_iter().chain([e.clone()])),
        }
        f.push(format!("{:.3}", self.wall_time_s));
        f
    }
}

/// Cells in grid order: N, then B, then k, then trial, then mode.
pub fn grid(cfg: &SweepConfig, ns: &[usize]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &n in ns {
        for &b in &cfg.bs {
            for &k in &cfg.ks {
                for trial in 0..cfg.seeds {
                    for collision_free in cfg.modes_for(k) {
                        cells.push(Cell {
                            n,
                            k,
                            b,
                            trial,
                            collision_free,
                        });
                    }
                }
            }
        }
    }
    cells
}

fn build_corpus(cfg: &SweepConfig, cell: &Cell) -> Result<SplitCorpus> {
    let seed = cell.corpus_seed(cfg.master_seed);
    match &cfg.corpus {
        CorpusSource::Synthetic {
            sentences_per_class,
            tokens_per_sentence,
            vocab_per_class,
            shared_vocab,
        } => corpus::generate_synthetic_corpus(&SyntheticSpec {
            num_classes: cell.n,
            sentences_per_class: *sentences_per_class,
            tokens_per_sentence: *tokens_per_sentence,
            vocab_per_class: *vocab_per_class,
            shared_vocab: *shared_vocab,
            seed,
        }),
        CorpusSource::File { path, min_count } => corpus::load_corpus(path, *min_count, seed),
    }
}

fn run_cell(cfg: &SweepConfig, cell: Cell) -> SweepRecord {
    let seed = cell.run_seed(cfg.master_seed);
    let start = Instant::now();
    let outcome = if !cell.feasible() {
        Outcome::Infeasible
    } else {
        let mut tc = cfg.train.clone();
        tc.batch_size = cell.b;
        tc.num_negatives = cell.k;
        tc.collision_free = cell.collision_free;
        tc.seed = seed;
        match build_corpus(cfg, &cell).and_then(|data| train::run(&data, &tc)) {
            Ok(r) => Outcome::Ok(r),
            Err(e) => Outcome::Failed(e.to_string()),
        }
    };
    SweepRecord {
        cell,
        seed,
        outcome,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Runs every cell on `workers` threads (0 = rayon default). Records come
/// back in grid order.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<Vec<SweepRecord>> {
    let ns = match &cfg.corpus {
        CorpusSource::Synthetic { .. } => cfg.ns.clone(),
        CorpusSource::File { path, min_count } => {
            vec![corpus::load_corpus(path, *min_count, 0)?.train.num_classes]
        }
    };
    let cells = grid(cfg, &ns);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    Ok(pool.install(|| cells.into_par_iter().map(|c| run_cell(cfg, c)).collect()))
}

pub fn sweep_csv(records: &[SweepRecord]) -> Vec<u8> {
    csvio::render(&SWEEP_HEADER, records.iter().map(SweepRecord::fields))
}

pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    csvio::write_atomic(path, &sweep_csv(records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    /// Divide by the best value of the same `N` row.
    Local,
    /// Divide by the best value of the whole table.
    Global,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "local" => Ok(Normalization::Local),
            "global" => Ok(Normalization::Global),
            _ => Err(Error::InvalidArgument(format!("normalization must be none|local|global, got `{s}`"))),
        }
    }
}

/// Seed-averaged accuracy of one `(N, k, B, mode)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub k: usize,
    pub b: usize,
    pub collision_free: bool,
    pub runs: usize,
    pub mean_acc: f64,
    pub head_acc: f64,
    pub normalized: f64,
    pub shaded: bool,
}

pub const DEFAULT_SHADE_THRESHOLD: f64 = 0.995;

/// Averages the successful runs of every cell and normalizes the mean
/// classifier accuracy.
pub fn summarize(records: &[SweepRecord], norm: Normalization, threshold: f64) -> Vec<SummaryRow> {
    // (n, b, k, collision_free) -> (runs, summed mean-classifier acc, summed head acc)
    type Key = (usize, usize, usize, bool);
    let mut cells: BTreeMap<Key, (usize, f64, f64)> = BTreeMap::new();
    for r in records {
        if let Outcome::Ok(t) = &r.outcome {
            let e = cells
                .entry((r.cell.n, r.cell.b, r.cell.k, r.cell.collision_free))
                .or_default();
            e.0 += 1;
            e.1 += t.mean_classifier_accuracy;
            e.2 += t.linear_head_accuracy;
        }
    }
    let mut rows: Vec<SummaryRow> = cells
        .into_iter()
        .map(|((n, b, k, cf), (runs, m, h))| SummaryRow {
            n,
            k,
            b,
            collision_free: cf,
            runs,
            mean_acc: m / runs as f64,
            head_acc: h / runs as f64,
            normalized: m / runs as f64,
            shaded: false,
        })
        .collect();
    let global = rows.iter().map(|r| r.mean_acc).fold(0.0, f64::max);
    let local: Vec<f64> = rows
        .iter()
        .map(|r| {
            rows.iter()
                .filter(|o| (o.n, o.b, o.collision_free) == (r.n, r.b, r.collision_free))
                .map(|o| o.mean_acc)
                .fold(0.0, f64::max)
        })
        .collect();
    for (r, l) in rows.iter_mut().zip(local) {
        let denom = match norm {
            Normalization::None => 1.0,
            Normalization::Local => l,
            Normalization::Global => global,
        };
        r.normalized = if denom > 0.0 { r.mean_acc / denom } else { 0.0 };
        r.shaded = norm != Normalization::None && r.normalized >= threshold;
    }
    rows
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    csvio::render(
        &["N", "k", "B", "collision_free", "runs", "mean_acc", "head_acc", "normalized", "shaded"],
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.k.to_string(),
                r.b.to_string(),
                (r.collision_free as u8).to_string(),
                r.runs.to_string(),
                format!("{:.6}", r.mean_acc),
                format!("{:.6}", r.head_acc),
                format!("{:.6}", r.normalized),
                (r.shaded as u8).to_string(),
            ]
        }),
    )
}

/// Rebuilds the summary from a written `sweep.csv`.
pub fn summarize_file(path: &Path, norm: Normalization, threshold: f64) -> Result<Vec<SummaryRow>> {
    let table = csvio::read(path)?;
    let origin = path.display().to_string();
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::parse(&origin, 2, format!("missing column `{name}`")))
    };
    let (cn, ck, cb, ccf, cst, cm, ch) = (
        col("N")?,
        col("k")?,
        col("B")?,
        col("collision_free")?,
        col("status")?,
        col("mean_acc")?,
        col("head_acc")?,
    );
    let mut records = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let num = |c: usize| -> Result<f64> {
            row[c]
                .parse()
                .map_err(|_| Error::parse(&origin, i + 3, format!("bad number `{}`", row[c])))
        };
        if row[cst] != "ok" {
            continue;
        }
        records.push(SweepRecord {
            cell: Cell {
                n: num(cn)? as usize,
                k: num(ck)? as usize,
                b: num(cb)? as usize,
                trial: 0,
                collision_free: row[ccf] == "1",
            },
            seed: 0,
            outcome: Outcome::Ok(train::TrainResult {
                mean_classifier_accuracy: num(cm)?,
                linear_head_accuracy: num(ch)?,
                final_nce_loss: 0.0,
                skipped_batches: 0,
                epochs_run: 0,
                head_selection_epoch: 0,
                epoch_losses: Vec::new(),
            }),
            wall_time_s: 0.0,
        });
    }
    Ok(summarize(&records, norm, threshold))
}

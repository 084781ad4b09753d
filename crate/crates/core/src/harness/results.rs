use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, stable_mean};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::seeds::derive_seed;

pub const RAW_HEADER: &str = "variant,seed,episode,eval_return";
pub const AGGREGATE_HEADER: &str = "variant,episode,mean,ci_lo,ci_hi";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "r0")]
    R0,
    #[serde(rename = "r_phi")]
    RPhi,
    #[serde(rename = "r_maxent")]
    RMaxEnt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::R0, Variant::RPhi, Variant::RMaxEnt];

    pub fn label(self) -> &'static str {
        match self {
            Variant::R0 => "r0",
            Variant::RPhi => "r_phi",
            Variant::RMaxEnt => "r_maxent",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Input(format!("unknown reward variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: Variant,
    pub seed: u64,
    pub episode: usize,
    pub eval_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub episode: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// The seeds × episodes grid a result set must fill, per variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultGrid {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
}

impl ResultGrid {
    /// Infer the grid spanned by a set of rows.
    pub fn spanned_by(rows: &[ResultRow]) -> Self {
        let mut variants: Vec<_> = rows.iter().map(|r| r.variant).collect();
        variants.sort();
        variants.dedup();
        let mut seeds: Vec<_> = rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let episodes = rows.iter().map(|r| r.episode + 1).max().unwrap_or(0);
        Self {
            variants,
            seeds,
            episodes,
        }
    }
}

/// Canonical order: variant, seed, episode.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by_key(|r| (r.variant, r.seed, r.episode));
}

fn index_rows(rows: &[ResultRow], grid: &ResultGrid) -> Result<BTreeMap<(Variant, u64, usize), f64>> {
    let mut cells = BTreeMap::new();
    for r in rows {
        if !r.eval_return.is_finite() {
            return Err(Error::Input(format!(
                "non-finite return for {} seed {} episode {}",
                r.variant, r.seed, r.episode
            )));
        }
        if cells.insert((r.variant, r.seed, r.episode), r.eval_return).is_some() {
            return Err(Error::Input(format!(
                "duplicate row for {} seed {} episode {}",
                r.variant, r.seed, r.episode
            )));
        }
    }
    let mut missing = Vec::new();
    for &v in &grid.variants {
        for &seed in &grid.seeds {
            for ep in 0..grid.episodes {
                if !cells.contains_key(&(v, seed, ep)) {
                    missing.push(format!("{v}/seed {seed}/episode {ep}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    Ok(cells)
}

/// Per-variant, per-episode mean across seeds with a bootstrap interval.
pub fn aggregate_curves(
    rows: &[ResultRow],
    grid: &ResultGrid,
    n_resamples: usize,
    level: f64,
    master_seed: u64,
) -> Result<Vec<AggregateRow>> {
    let cells = index_rows(rows, grid)?;
    let mut out = Vec::with_capacity(grid.variants.len() * grid.episodes);
    for &variant in &grid.variants {
        let label = format!("bootstrap-{variant}");
        for episode in 0..grid.episodes {
            let values: Vec<f64> = grid.seeds.iter().map(|&s| cells[&(variant, s, episode)]).collect();
            let (mean, ci_lo, ci_hi) =
                bootstrap_ci(&values, n_resamples, level, derive_seed(master_seed, &label, episode as u64))?;
            out.push(AggregateRow {
                variant,
                episode,
                mean,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(out)
}

/// Per-seed mean return over the last `window` episodes.
pub fn final_window_returns(rows: &[ResultRow], grid: &ResultGrid, variant: Variant, window: usize) -> Result<Vec<f64>> {
    let cells = index_rows(rows, grid)?;
    let first = grid.episodes.saturating_sub(window);
    Ok(grid
        .seeds
        .iter()
        .map(|&s| {
            let per_episode: Vec<f64> = (first..grid.episodes).map(|e| cells[&(variant, s, e)]).collect();
            stable_mean(&per_episode)
        })
        .collect())
}

/// First episode whose mean return reaches `threshold`.
pub fn first_episode_reaching(curve: &[AggregateRow], variant: Variant, threshold: f64) -> Option<usize> {
    curve
        .iter()
        .filter(|r| r.variant == variant)
        .find(|r| r.mean >= threshold)
        .map(|r| r.episode)
}

pub fn raw_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(32 * (rows.len() + 1));
    out.push_str(RAW_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.variant, r.seed, r.episode, r.eval_return));
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.variant, r.episode, r.mean, r.ci_lo, r.ci_hi));
    }
    out
}

pub fn write_raw_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, raw_csv(rows).as_bytes())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_atomic(path, aggregate_csv(rows).as_bytes())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let found: Vec<_> = reader.headers()?.iter().map(str::to_owned).collect();
    if found.join(",") != header {
        return Err(Error::Input(format!(
            "{}: expected header `{header}`, found `{}`",
            path.display(),
            found.join(",")
        )));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<ResultRow>> {
    read_csv(path, RAW_HEADER)
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    read_csv(path, AGGREGATE_HEADER)
}

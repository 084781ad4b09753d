//! File formats: the MDP + reward JSON document and line-delimited
//! trajectory batches.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, TabularMdp, Trajectory};
use crate::table::StateActionTable;

/// `{"n_states", "n_actions", "gamma", "transitions", "terminal",
/// "horizon_limit", "rewards"}` with nested `[s][a][s']` transitions and
/// `[s][a]` rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub terminal: Vec<bool>,
    pub horizon_limit: usize,
    pub rewards: Vec<Vec<f64>>,
}

impl MdpDocument {
    pub fn new(mdp: &TabularMdp, reward: &RewardTable) -> Self {
        let transitions = (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| mdp.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma: mdp.gamma(),
            transitions,
            terminal: mdp.terminal_mask().to_vec(),
            horizon_limit: mdp.horizon_limit(),
            rewards: reward.to_rows(),
        }
    }

    pub fn into_parts(self) -> Result<(TabularMdp, RewardTable)> {
        let mdp = TabularMdp::from_nested(self.gamma, self.transitions, self.terminal, self.horizon_limit)?;
        if mdp.n_states() != self.n_states || mdp.n_actions() != self.n_actions {
            return Err(Error::Config(format!(
                "declared {}x{} but transitions are {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        let reward = RewardTable(StateActionTable::from_rows(self.rewards)?);
        mdp.check_reward(&reward)?;
        Ok((mdp, reward))
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON, written to a sibling temp file and renamed into place.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_mdp(path: &Path) -> Result<(TabularMdp, RewardTable)> {
    read_json::<MdpDocument>(path)?.into_parts()
}

pub fn write_mdp(path: &Path, mdp: &TabularMdp, reward: &RewardTable) -> Result<()> {
    write_json(path, &MdpDocument::new(mdp, reward))
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut buf = Vec::new();
    for t in trajectories {
        serde_json::to_writer(&mut buf, t)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Write `bytes` to `path` via a temporary sibling and a rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

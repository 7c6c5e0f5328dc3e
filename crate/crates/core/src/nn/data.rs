use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{serde_vecs, Vector};

/// One observation/action sequence of length T >= 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(with = "serde_vecs")]
    pub observations: Vec<Vector>,
    #[serde(with = "serde_vecs")]
    pub actions: Vec<Vector>,
}

impl Trajectory {
    pub fn new(observations: Vec<Vector>, actions: Vec<Vector>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Invalid("trajectory must have at least one step".into()));
        }
        if observations.len() != actions.len() {
            return Err(dim_err(
                "trajectory length",
                observations.len(),
                actions.len(),
            ));
        }
        let (d_obs, d_act) = (observations[0].len(), actions[0].len());
        if observations.iter().any(|o| o.len() != d_obs) || actions.iter().any(|a| a.len() != d_act)
        {
            return Err(Error::Invalid("ragged trajectory".into()));
        }
        Ok(Self {
            observations,
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.first().map_or(0, |o| o.len())
    }

    pub fn act_dim(&self) -> usize {
        self.actions.first().map_or(0, |a| a.len())
    }

    pub fn check_dims(&self, d_obs: usize, d_act: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Invalid("empty trajectory".into()));
        }
        if self.observations.len() != self.actions.len() {
            return Err(dim_err(
                "trajectory length",
                self.observations.len(),
                self.actions.len(),
            ));
        }
        for o in &self.observations {
            if o.len() != d_obs {
                return Err(dim_err("observation", d_obs, o.len()));
            }
        }
        for a in &self.actions {
            if a.len() != d_act {
                return Err(dim_err("action", d_act, a.len()));
            }
        }
        Ok(())
    }
}

/// A list of trajectories.
pub type Dataset = Vec<Trajectory>;

pub fn save_dataset(path: &std::path::Path, data: &[Trajectory]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, data)?;
    Ok(())
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

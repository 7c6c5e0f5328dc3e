use crate::error::{dim_err, Error, Result};
use crate::lqg::LinearPolicy;
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMergeKind {
    HardPerm,
    Invertible,
}

/// Objective after one alternation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRound {
    pub round: usize,
    pub objective: f64,
    /// Per-policy contribution to the objective.
    pub witness: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMergeState {
    pub theta_bar: LinearPolicy,
    #[serde(with = "serde_mats")]
    pub ops: Vec<Matrix>,
    pub kind: LinearMergeKind,
    pub history: Vec<MergeRound>,
}

mod serde_mats {
    use crate::linalg::{from_rows, to_rows, Matrix};
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
        let raw: Vec<Vec<Vec<f64>>> = Deserialize::deserialize(d)?;
        raw.iter().map(|m| from_rows(m, 0).map_err(D::Error::custom)).collect()
    }
}

impl LinearMergeState {
    pub fn objective(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Rows `round,objective,witness_0,..,witness_{N-1}`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.ops.len();
        let mut header = vec!["round".to_string(), "objective".to_string()];
        header.extend((0..n).map(|i| format!("witness_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.history {
            let mut row = vec![r.round.to_string(), r.objective.to_string()];
            row.extend(r.witness.iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `||P Ā - A_i P||^2 + ||P B̄ - B_i||^2 + ||C̄ - C_i P||^2`.
pub fn alignment_residual(theta_bar: &LinearPolicy, policy: &LinearPolicy, p: &Matrix) -> f64 {
    (p * &theta_bar.a - &policy.a * p).norm_squared()
        + (p * &theta_bar.b - &policy.b).norm_squared()
        + (&theta_bar.c - &policy.c * p).norm_squared()
}

/// Total alignment objective and its per-policy terms.
pub fn alignment_objective(theta_bar: &LinearPolicy, policies: &[LinearPolicy], ops: &[Matrix]) -> (f64, Vec<f64>) {
    let witness: Vec<f64> = policies.iter().zip(ops).map(|(pol, p)| alignment_residual(theta_bar, pol, p)).collect();
    (witness.iter().sum(), witness)
}

/// Common shape check for a set of policies to be merged.
pub(crate) fn check_policies(policies: &[LinearPolicy]) -> Result<()> {
    let first = policies.first().ok_or_else(|| Error::Precondition("no policies to merge".into()))?;
    for (i, p) in policies.iter().enumerate() {
        p.validate()?;
        if p.a.shape() != first.a.shape() || p.b.shape() != first.b.shape() || p.c.shape() != first.c.shape() {
            return Err(dim_err(
                "policy shapes",
                format!("A {:?}, B {:?}, C {:?}", first.a.shape(), first.b.shape(), first.c.shape()),
                format!("policy {i}: A {:?}, B {:?}, C {:?}", p.a.shape(), p.b.shape(), p.c.shape()),
            ));
        }
    }
    Ok(())
}

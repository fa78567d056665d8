//! JSON problem files.
//!
//! ```json
//! {
//!   "matrices": [[[0.5, 0.0], [0.0, 0.5]]],
//!   "transition": [[1.0]],
//!   "p": 1,
//!   "metadata": {"name": "half identity"}
//! }
//! ```
//!
//! `transition` is optional (i.i.d. uniform switching without it), `p`
//! defaults to 1 and `metadata` is carried through untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::markov::{MarkovModel, SwitchedSystem, ROW_SUM_TOL};
use crate::radius::MatrixFamily;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Field {
        field: field.into(),
        message: message.into(),
    }
}

fn default_p() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_p")]
    pub p: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

fn square(name: &str, rows: &[Vec<f64>], size: Option<usize>) -> Result<usize, ProblemError> {
    let n = size.unwrap_or(rows.len());
    if rows.is_empty() {
        return Err(field(name, "matrix has no rows"));
    }
    if rows.len() != n {
        return Err(field(name, format!("has {} rows, expected {n}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(field(
                format!("{name}[{r}]"),
                format!("row has {} entries, expected {n}", row.len()),
            ));
        }
    }
    Ok(n)
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let file: Self = serde_json::from_str(text).map_err(|e| ProblemError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn from_system(system: &SwitchedSystem, p: u32) -> Self {
        let matrices = system.family().members().iter().map(Matrix::to_rows).collect();
        let transition = match system {
            SwitchedSystem::Iid(_) => None,
            SwitchedSystem::Markov(m) => Some(m.transition().to_rows()),
        };
        Self {
            matrices,
            transition,
            p,
            metadata: BTreeMap::new(),
        }
    }

    /// Checks shapes, the transition matrix and `p`, naming the offending field.
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.matrices.is_empty() {
            return Err(field("matrices", "at least one matrix is required"));
        }
        let n = square("matrices[0]", &self.matrices[0], None)?;
        for (i, m) in self.matrices.iter().enumerate().skip(1) {
            square(&format!("matrices[{i}]"), m, Some(n))?;
        }
        if self.p == 0 {
            return Err(field("p", "must be a positive integer"));
        }
        if let Some(q) = &self.transition {
            let states = self.matrices.len();
            square("transition", q, Some(states))?;
            for (i, row) in q.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(field(
                            format!("transition[{i}][{j}]"),
                            format!("{x} is not a probability"),
                        ));
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(field(
                        format!("transition[{i}]"),
                        format!("row sums to {sum}, expected 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Result<MatrixFamily, ProblemError> {
        self.validate()?;
        let members = self
            .matrices
            .iter()
            .enumerate()
            .map(|(i, m)| Matrix::from_rows(m).map_err(|e| field(format!("matrices[{i}]"), e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        MatrixFamily::new(members).map_err(|e| field("matrices", e.to_string()))
    }

    pub fn system(&self) -> Result<SwitchedSystem, ProblemError> {
        let family = self.family()?;
        match &self.transition {
            None => Ok(SwitchedSystem::Iid(family)),
            Some(q) => {
                let q = Matrix::from_rows(q).map_err(|e| field("transition", e.to_string()))?;
                let model = MarkovModel::new(family, q).map_err(|e| field("transition", e.to_string()))?;
                Ok(SwitchedSystem::Markov(model))
            }
        }
    }
}

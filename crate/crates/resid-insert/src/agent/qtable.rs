//! Action-value table over the 729 contact states, with plain-text
//! persistence.

use super::{DiscreteAction, DiscreteState, N_ACTIONS, N_STATES};
use rand::Rng;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub values: Vec<[f64; N_ACTIONS]>,
    pub visit_counts: Vec<[u64; N_ACTIONS]>,
}

impl Default for QTable {
    fn default() -> Self {
        Self::zeros()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QTableError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad q-table header: {0:?}")]
    BadHeader(String),
    #[error("q-table row {0} malformed")]
    BadRow(usize),
    #[error("q-table has {0} rows, expected {N_STATES}")]
    WrongRowCount(usize),
}

impl QTable {
    pub fn zeros() -> Self {
        QTable {
            values: vec![[0.0; N_ACTIONS]; N_STATES],
            visit_counts: vec![[0; N_ACTIONS]; N_STATES],
        }
    }

    /// Table with uniformly random entries in [-1, 1] (the "random policy"
    /// ablation).
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut t = QTable::zeros();
        for row in t.values.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..=1.0);
            }
        }
        t
    }

    pub fn row(&self, s: &DiscreteState) -> &[f64; N_ACTIONS] {
        &self.values[s.index]
    }

    /// Greedy action; ties break toward the lowest action id.
    pub fn argmax(&self, s: &DiscreteState) -> DiscreteAction {
        let row = self.row(s);
        let mut best = 0usize;
        for (i, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = i;
            }
        }
        DiscreteAction::new(best)
    }

    pub fn max_value(&self, s: &DiscreteState) -> f64 {
        self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }

    /// Write the table as `qtable v1` plain text: a header line followed by
    /// one `index,q0..q5` row per state at full round-trip precision.
    pub fn save(&self, path: &Path) -> Result<(), QTableError> {
        let ctx = |source| QTableError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = Vec::with_capacity(N_STATES * 64);
        writeln!(out, "qtable v1 states={N_STATES} actions={N_ACTIONS}").map_err(ctx)?;
        for (i, row) in self.values.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{i},{}", cells.join(",")).map_err(ctx)?;
        }
        std::fs::write(path, out).map_err(|source| QTableError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, QTableError> {
        let file = std::fs::File::open(path).map_err(|source| QTableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|source| QTableError::Io {
                path: path.display().to_string(),
                source,
            })?
            .unwrap_or_default();
        if header.trim() != format!("qtable v1 states={N_STATES} actions={N_ACTIONS}") {
            return Err(QTableError::BadHeader(header));
        }
        let mut table = QTable::zeros();
        let mut rows = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|source| QTableError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let index: usize = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or(QTableError::BadRow(lineno + 2))?;
            if index >= N_STATES {
                return Err(QTableError::BadRow(lineno + 2));
            }
            for (a, cell) in parts.enumerate() {
                if a >= N_ACTIONS {
                    return Err(QTableError::BadRow(lineno + 2));
                }
                table.values[index][a] = cell
                    .trim()
                    .parse()
                    .map_err(|_| QTableError::BadRow(lineno + 2))?;
            }
            rows += 1;
        }
        if rows != N_STATES {
            return Err(QTableError::WrongRowCount(rows));
        }
        Ok(table)
    }
}

/// One-step Q-learning backup:
/// `Q(s,a) += lr * (r + gamma * max_a' Q(s',a') * (1-done) - Q(s,a))`.
pub fn q_update(
    q: &mut QTable,
    s: &DiscreteState,
    a: DiscreteAction,
    reward: f64,
    s_next: &DiscreteState,
    done: bool,
    learning_rate: f64,
    gamma: f64,
) {
    debug_assert!(learning_rate > 0.0 && learning_rate <= 1.0);
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    let bootstrap = if done { 0.0 } else { gamma * q.max_value(s_next) };
    let entry = &mut q.values[s.index][a.id];
    *entry += learning_rate * (reward + bootstrap - *entry);
    q.visit_counts[s.index][a.id] += 1;
}

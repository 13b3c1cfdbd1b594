//! Result aggregation and plain-text / CSV persistence.

use crate::agent::EpisodeLog;
use crate::sim::Outcome;
use std::fmt::Write as _;
use std::path::Path;

/// One evaluated condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub label: String,
    pub success: usize,
    pub total: usize,
    /// Mean executed steps per episode.
    pub mean_steps: f64,
    /// Wall-clock seconds for the condition (reported in the text table
    /// only; the CSV stays byte-stable across machines and thread counts).
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        debug_assert!(row.success <= row.total);
        self.rows.push(row);
    }

    /// Render the aligned human-readable table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(9)
            .max(9);
        out.push_str(&format!(
            "{:<width$}  {:>13}  {:>7}  {:>10}  {:>9}\n",
            "condition", "success/total", "rate", "mean steps", "wall [s]"
        ));
        for r in &self.rows {
            let rate = if r.total > 0 {
                100.0 * r.success as f64 / r.total as f64
            } else {
                0.0
            };
            out.push_str(&format!(
                "{:<width$}  {:>7}/{:<5}  {:>6.1}%  {:>10.2}  {:>9.2}\n",
                r.label, r.success, r.total, rate, r.mean_steps, r.wall_secs
            ));
        }
        out
    }

    /// Machine-readable CSV (no wall time: bit-stable for equal seeds).
    pub fn render_csv(&self) -> String {
        let mut out = String::from("condition,success,total,mean_steps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.label, r.success, r.total, r.mean_steps
            ));
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("failed writing {path}: {source}")]
pub struct SaveError {
    pub path: String,
    pub source: std::io::Error,
}

fn write_file(path: &Path, contents: &str) -> Result<(), SaveError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| SaveError {
            path: path.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| SaveError {
        path: path.display().to_string(),
        source,
    })
}

/// Write `results.txt` and `results.csv` into `dir`.
pub fn save_results(table: &ResultTable, dir: &Path) -> Result<(), SaveError> {
    write_file(&dir.join("results.txt"), &table.render_text())?;
    write_file(&dir.join("results.csv"), &table.render_csv())
}

/// Episode log column order, one row per step.
pub const LOG_HEADER: &str = "step,state_index,action_id,\
uh_x,uh_y,uh_z,uh_rx,uh_ry,uh_rz,\
url_x,url_y,url_z,url_rx,url_ry,url_rz,\
cmd_x,cmd_y,cmd_z,cmd_rx,cmd_ry,cmd_rz,\
fx,fy,fz,mx,my,mz,reward,belief,probed";

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Success => "success",
        Outcome::Failed => "failed",
        Outcome::Ongoing => "ongoing",
    }
}

/// Serialize one episode as CSV rows with a header and an outcome footer.
pub fn render_log(log: &EpisodeLog) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for s in &log.steps {
        let mut cells: Vec<String> = vec![
            s.step.to_string(),
            s.state_index.to_string(),
            s.action_id.to_string(),
        ];
        for block in [&s.u_h, &s.u_rl, &s.command, &s.wrench] {
            cells.extend(block.iter().map(|v| format!("{v}")));
        }
        cells.push(format!("{}", s.reward));
        cells.push((s.belief as u8).to_string());
        cells.push((s.probed as u8).to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.push_str(&format!("# outcome={}\n", outcome_name(log.outcome)));
    out
}

/// Write one episode log to `path`.
pub fn save_log(log: &EpisodeLog, path: &Path) -> Result<(), SaveError> {
    write_file(path, &render_log(log))
}

/// Write a reward-per-episode training curve.
pub fn save_training_curve(rewards: &[f64], path: &Path) -> Result<(), SaveError> {
    let mut out = String::from("episode,reward\n");
    for (i, r) in rewards.iter().enumerate() {
        let _ = writeln!(out, "{i},{r}");
    }
    write_file(path, &out)
}

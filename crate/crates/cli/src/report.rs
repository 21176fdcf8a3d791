//! Run reports and their CSV/JSON serialization.
//!
//! Every CSV starts with a `# lrwh <table> v<version>` line followed by a
//! header row; floats are written as `{:.17e}` so values round-trip.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const RESIDUALS_SCHEMA: &str = "# lrwh residuals v1";
pub const RANKS_SCHEMA: &str = "# lrwh ranks v1";
pub const COMPRESSION_SCHEMA: &str = "# lrwh compression v1";
pub const ERRORS_SCHEMA: &str = "# lrwh errors v1";
pub const PHASES_SCHEMA: &str = "# lrwh phases v1";
pub const TIMINGS_SCHEMA: &str = "# lrwh timings v1";

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub rho: f64,
    pub rho_g: f64,
    pub rho_x: f64,
    pub ranks: Vec<usize>,
    pub eps: Vec<f64>,
    /// Rank of the dense converged solution truncated at `eps` (if computed).
    pub oracle_ranks: Option<Vec<usize>>,
}

/// Per-block discrepancy with the dense reference, scaled by `h^{d/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub block: usize,
    pub err_real: f64,
    pub err_imag: f64,
    pub ref_norm: f64,
}

/// Truncated Green's-function rank of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionRow {
    pub block: usize,
    /// Distance from the source to the nearest point of the block.
    pub distance: f64,
    pub ppw: f64,
    pub eps: f64,
    pub rank: usize,
}

/// Median wall time of one low-rank and one dense step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub block: usize,
    pub ppw: f64,
    pub n: usize,
    pub eps: f64,
    pub rank: usize,
    pub t_lowrank: f64,
    pub t_dense: f64,
    pub repetitions: usize,
    /// Max-norm difference between the two step outputs.
    pub max_diff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_rho: Option<f64>,
    pub fallbacks: usize,
    pub rows: Vec<IterationRow>,
    pub errors: Vec<BlockError>,
    /// Total `h^{d/2} ||u - u_ref||` over all blocks (real and imaginary parts).
    pub total_error: Option<f64>,
    pub compression: Vec<CompressionRow>,
    pub timings: Vec<TimingRow>,
    /// `(phase, seconds)`.
    pub phases: Vec<(String, f64)>,
}

fn f(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_table(path: &Path, schema: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = String::new();
    out.push_str(schema);
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    let mut file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

impl RunReport {
    /// Write `residuals.csv`, `ranks.csv`, `errors.csv`, `timings.csv` and
    /// `report.json` into `dir` (created if needed). Tables with no rows
    /// are skipped.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        if !self.rows.is_empty() {
            write_table(
                &dir.join("residuals.csv"),
                RESIDUALS_SCHEMA,
                "iteration,rho,rho_g,rho_x",
                self.rows.iter().map(|r| format!("{},{},{},{}", r.iteration, f(r.rho), f(r.rho_g), f(r.rho_x))),
            )?;
            write_table(
                &dir.join("ranks.csv"),
                RANKS_SCHEMA,
                "iteration,block,rank,eps,oracle_rank",
                self.rows.iter().flat_map(|r| {
                    (0..r.ranks.len()).map(move |b| {
                        let oracle = r.oracle_ranks.as_ref().map(|o| o[b].to_string()).unwrap_or_default();
                        format!("{},{},{},{},{}", r.iteration, b, r.ranks[b], f(r.eps[b]), oracle)
                    })
                }),
            )?;
        }
        if !self.compression.is_empty() {
            write_table(
                &dir.join("ranks.csv"),
                COMPRESSION_SCHEMA,
                "block,distance,ppw,eps,rank",
                self.compression
                    .iter()
                    .map(|c| format!("{},{},{},{},{}", c.block, f(c.distance), f(c.ppw), f(c.eps), c.rank)),
            )?;
        }
        if !self.errors.is_empty() {
            write_table(
                &dir.join("errors.csv"),
                ERRORS_SCHEMA,
                "block,err_real,err_imag,ref_norm",
                self.errors
                    .iter()
                    .map(|e| format!("{},{},{},{}", e.block, f(e.err_real), f(e.err_imag), f(e.ref_norm))),
            )?;
        }
        if !self.timings.is_empty() {
            write_table(
                &dir.join("timings.csv"),
                TIMINGS_SCHEMA,
                "block,ppw,n,eps,rank,t_lowrank,t_dense,repetitions,max_diff",
                self.timings.iter().map(|t| {
                    format!(
                        "{},{},{},{},{},{},{},{},{}",
                        t.block,
                        f(t.ppw),
                        t.n,
                        f(t.eps),
                        t.rank,
                        f(t.t_lowrank),
                        f(t.t_dense),
                        t.repetitions,
                        f(t.max_diff)
                    )
                }),
            )?;
        } else if !self.phases.is_empty() {
            write_table(
                &dir.join("timings.csv"),
                PHASES_SCHEMA,
                "phase,seconds",
                self.phases.iter().map(|(p, s)| format!("{p},{}", f(*s))),
            )?;
        }
        let json = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("report.json"), json)?;
        Ok(())
    }
}

/// Parsed rows of a CSV written by [`RunReport::write`]: schema line,
/// column names and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let schema = lines.next().context("empty table")?.to_string();
        let columns = lines.next().context("missing header")?.split(',').map(str::to_string).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { schema, columns, rows })
    }

    /// Cells of column `name`.
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name).with_context(|| format!("no column '{name}'"))?;
        Ok(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

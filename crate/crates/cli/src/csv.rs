//! Result rows and deterministic CSV emission.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const CSV_HEADER: &str = "experiment_id,snr_db,snr_csi_db,tau,metric,value,n_samples,seed";

/// One measured point. `snr_db` is absent for experiments without a
/// downlink SNR axis; infinities serialize as `inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub snr_db: Option<f64>,
    pub snr_csi_db: f64,
    pub tau: usize,
    pub metric: String,
    pub value: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl ResultRow {
    fn to_line(&self) -> Result<String> {
        if !self.value.is_finite() {
            bail!("non-finite value in row {self:?}");
        }
        if self.n_samples == 0 {
            bail!("zero sample count in row {self:?}");
        }
        let mut line = String::new();
        let snr = match self.snr_db {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        write!(
            line,
            "{},{},{},{},{},{},{},{}",
            self.experiment_id,
            snr,
            self.snr_csi_db,
            self.tau,
            self.metric,
            self.value,
            self.n_samples,
            self.seed
        )?;
        Ok(line)
    }

    fn from_line(line: &str) -> Result<ResultRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!("expected 8 fields, got {}: {line:?}", fields.len());
        }
        Ok(ResultRow {
            experiment_id: fields[0].to_string(),
            snr_db: if fields[1].is_empty() {
                None
            } else {
                Some(fields[1].parse().context("snr_db")?)
            },
            snr_csi_db: fields[2].parse().context("snr_csi_db")?,
            tau: fields[3].parse().context("tau")?,
            metric: fields[4].to_string(),
            value: fields[5].parse().context("value")?,
            n_samples: fields[6].parse().context("n_samples")?,
            seed: fields[7].parse().context("seed")?,
        })
    }
}

/// Serialize rows in their given order: header line plus one line per
/// row, LF endings, UTF-8.
pub fn render_csv(rows: &[ResultRow]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line()?);
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = render_csv(rows)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => bail!("bad header {other:?}"),
    }
    lines.map(ResultRow::from_line).collect()
}

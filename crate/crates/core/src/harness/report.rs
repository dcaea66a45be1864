//! Summary tables across runs: one row per (task, setting) with the initial
//! and final test scores, plus an average row.

use serde::Serialize;

use super::artifact::RunArtifact;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

pub const COLUMNS: [&str; 5] = ["task", "setting", "initial", "final", "delta"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub task: String,
    pub setting: String,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub delta: f64,
}

impl ReportRow {
    fn cells(&self) -> [String; 5] {
        [
            self.task.clone(),
            self.setting.clone(),
            format!("{:.2}", self.initial),
            format!("{:.2}", self.final_score),
            format!("{:.2}", self.delta),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub columns: [&'static str; 5],
    pub rows: Vec<ReportRow>,
    pub average: Option<ReportRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl ReportTable {
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let average = (!rows.is_empty()).then(|| ReportRow {
            task: "Average".to_owned(),
            setting: String::new(),
            initial: mean(rows.iter().map(|r| r.initial)),
            final_score: mean(rows.iter().map(|r| r.final_score)),
            delta: mean(rows.iter().map(|r| r.delta)),
        });
        ReportTable {
            columns: COLUMNS,
            rows,
            average,
        }
    }

    pub fn from_artifacts(artifacts: &[RunArtifact]) -> Result<Self> {
        let mut versions: Vec<u32> = artifacts.iter().map(|a| a.header.schema_version).collect();
        versions.sort_unstable();
        versions.dedup();
        if versions.len() > 1 {
            return Err(Error::MixedSchema(versions));
        }
        let mut rows = Vec::with_capacity(artifacts.len());
        for a in artifacts {
            let footer = a.completed_footer()?;
            let (Some(initial), Some(final_score)) = (footer.initial_test_score(), footer.final_test_score()) else {
                return Err(Error::Artifact(format!("{}: footer lacks test scores", a.dir.display())));
            };
            rows.push(ReportRow {
                task: a.header.experiment.task.clone(),
                setting: a.header.experiment.setting.clone(),
                initial: initial.value(),
                final_score: final_score.value(),
                delta: final_score.value() - initial.value(),
            });
        }
        Ok(Self::from_rows(rows))
    }

    fn all_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().chain(self.average.iter())
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Markdown => Ok(self.markdown()),
            ReportFormat::Csv => self.csv(),
            ReportFormat::Json => {
                let rounded = ReportTable {
                    columns: self.columns,
                    rows: self.rows.iter().map(round_row).collect(),
                    average: self.average.as_ref().map(round_row),
                };
                let mut s = serde_json::to_string_pretty(&rounded)?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    fn markdown(&self) -> String {
        let mut out = format!("| {} |\n", self.columns.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in self.all_rows() {
            out.push_str(&format!("| {} |\n", row.cells().join(" | ")));
        }
        out
    }

    fn csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .quote_style(csv::QuoteStyle::Always)
            .from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Artifact(format!("csv: {e}"));
        w.write_record(self.columns).map_err(to_err)?;
        for row in self.all_rows() {
            w.write_record(row.cells()).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Artifact(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Artifact(e.to_string()))
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round_row(r: &ReportRow) -> ReportRow {
    ReportRow {
        initial: round2(r.initial),
        final_score: round2(r.final_score),
        delta: round2(r.delta),
        ..r.clone()
    }
}

pub fn emit_report(artifacts: &[RunArtifact], format: ReportFormat) -> Result<String> {
    ReportTable::from_artifacts(artifacts)?.render(format)
}

//! Rendering of leakage reports: JSON (full precision), CSV, Markdown in the
//! usual EMD(B,R) / EMD(R,G) / EMD(B,G) / L column order, and a TSV dump of
//! the three histograms for plotting.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::histogram::HistogramError;
use crate::leakage::{Experiment, LeakageReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Md),
            other => Err(format!("unknown format `{other}` (expected json, csv or md)")),
        }
    }
}

/// Error slot of a failed experiment row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowFailure {
    pub code: String,
    pub message: String,
}

/// One experiment row as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowRecord {
    Report(LeakageReport),
    Failed { label: String, error: RowFailure },
}

impl RowRecord {
    pub fn label(&self) -> Option<&str> {
        match self {
            RowRecord::Report(r) => r.label.as_deref(),
            RowRecord::Failed { label, .. } => Some(label),
        }
    }
}

pub fn experiment_records(experiment: &Experiment) -> Vec<RowRecord> {
    experiment
        .rows
        .iter()
        .map(|row| match &row.outcome {
            Ok(report) => RowRecord::Report(report.clone()),
            Err(e) => RowRecord::Failed {
                label: row.label.clone(),
                error: RowFailure {
                    code: e.code().to_string(),
                    message: e.to_string(),
                },
            },
        })
        .collect()
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

const CSV_HEADER: &str = "label,target,source,conversion,n,emd_br,emd_rg,emd_bg,L,scenario,tau,nbins,error";

fn csv_row(record: &RowRecord) -> String {
    match record {
        RowRecord::Report(r) => {
            let l = if r.ratio.is_infinite() {
                "inf".to_string()
            } else {
                r.ratio.value().to_string()
            };
            [
                csv_escape(r.label.as_deref().unwrap_or("")),
                csv_escape(&r.target),
                csv_escape(&r.source),
                csv_escape(&r.conversion),
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                r.emd_br.to_string(),
                r.emd_rg.to_string(),
                r.emd_bg.to_string(),
                l,
                r.scenario.to_string(),
                r.tau.to_string(),
                r.nbins.to_string(),
                String::new(),
            ]
            .join(",")
        }
        RowRecord::Failed { label, error } => {
            let mut fields = vec![csv_escape(label)];
            fields.extend(std::iter::repeat_n(String::new(), 11));
            fields.push(csv_escape(&error.code));
            fields.join(",")
        }
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn md_row(record: &RowRecord) -> String {
    match record {
        RowRecord::Report(r) => format!(
            "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {} | {} |",
            md_cell(r.label.as_deref().unwrap_or("-")),
            r.n.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            md_cell(&r.source),
            md_cell(&r.conversion),
            r.emd_br,
            r.emd_rg,
            r.emd_bg,
            r.ratio,
            r.scenario,
        ),
        RowRecord::Failed { label, error } => format!(
            "| {} | - | - | - | - | - | - | - | error: {} |",
            md_cell(label),
            md_cell(&error.code)
        ),
    }
}

const MD_HEADER: &str = "| Source mismatch | n | D | P' | EMD(B,R) | EMD(R,G) | EMD(B,G) | L | Scenario |\n\
                         |---|---:|---|---|---:|---:|---:|---:|---|";

/// Renders experiment rows. JSON is an array of row objects.
pub fn render_records(records: &[RowRecord], target: &str, format: Format) -> String {
    match format {
        Format::Json => json_text(&records),
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in records {
                out.push_str(&csv_row(r));
                out.push('\n');
            }
            out
        }
        Format::Md => {
            let mut out = format!("Proximal target P: {}\n\n{MD_HEADER}\n", md_cell(target));
            for r in records {
                out.push_str(&md_row(r));
                out.push('\n');
            }
            out
        }
    }
}

/// Renders a single report. JSON is one object.
pub fn render_report(report: &LeakageReport, format: Format) -> String {
    match format {
        Format::Json => json_text(report),
        _ => render_records(&[RowRecord::Report(report.clone())], &report.target, format),
    }
}

pub fn parse_report(json: &str) -> Result<LeakageReport, serde_json::Error> {
    serde_json::from_str(json)
}

pub fn parse_records(json: &str) -> Result<Vec<RowRecord>, serde_json::Error> {
    serde_json::from_str(json)
}

/// `bin_lo  bin_hi  mass_B  mass_R  mass_G`, one header line and one row
/// per bin, full precision.
pub fn histogram_tsv(report: &LeakageReport) -> Result<String, HistogramError> {
    let edges = report.bin_edges()?;
    let h = &report.histograms;
    let mut out = String::from("bin_lo\tbin_hi\tmass_B\tmass_R\tmass_G\n");
    for i in 0..edges.nbins() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            edges.edge(i),
            edges.edge(i + 1),
            h.b[i],
            h.r[i],
            h.g[i]
        )
        .unwrap();
    }
    Ok(out)
}

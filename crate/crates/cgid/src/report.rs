//! Report files: a JSON-lines structured report (a header line echoing the
//! resolved config, then one record per stage), a flat CSV table, and one
//! tab-separated feature dump per stage.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cgid_core::experiment::RunConfig;
use cgid_core::metrics::{FeatureDump, StageReport};
use serde::{Deserialize, Serialize};

use crate::corpus_io::write_floats;
use crate::CliError;

pub const REPORT_FORMAT: &str = "cgid-report";
pub const REPORT_VERSION: u32 = 1;
pub const STRUCTURED_FILE: &str = "report.jsonl";
pub const TABLE_FILE: &str = "report.csv";
pub const DUMP_DIR: &str = "dumps";

pub const TABLE_COLUMNS: [&str; 12] = [
    "method", "ood_ratio", "stage", "A_IND", "F_IND", "A_OOD", "F_OOD", "A_ALL", "F_ALL", "Loss", "Gain", "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
}

impl ReportHeader {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            config: config.clone(),
        }
    }
}

pub fn write_structured<W: Write>(mut w: W, header: &ReportHeader, reports: &[StageReport]) -> io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    writeln!(w)?;
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()
}

/// A parsed structured report.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedReport {
    pub path: PathBuf,
    pub header: ReportHeader,
    pub stages: Vec<StageReport>,
}

pub fn read_structured(path: &Path) -> Result<LoadedReport, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io("cannot open report", path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| CliError::format(path, "empty report"))?
        .map_err(|e| CliError::io("cannot read report", path, e))?;
    let header: ReportHeader =
        serde_json::from_str(&first).map_err(|e| CliError::format(path, format!("line 1: {e}")))?;
    if header.format != REPORT_FORMAT || header.version != REPORT_VERSION {
        return Err(CliError::format(
            path,
            format!("unsupported report {} v{}", header.format, header.version),
        ));
    }
    let mut stages = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::io("cannot read report", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        stages.push(serde_json::from_str(&line).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 2)))?);
    }
    Ok(LoadedReport {
        path: path.to_path_buf(),
        header,
        stages,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The flat table: one row per stage, header only for an empty run.
pub fn write_table<W: Write>(w: W, reports: &[StageReport]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE_COLUMNS)?;
    for r in reports {
        let m = &r.metrics;
        out.write_record([
            r.method.clone(),
            r.ood_ratio.to_string(),
            r.stage.to_string(),
            m.a_ind.to_string(),
            cell(m.f_ind),
            cell(m.a_ood),
            cell(m.f_ood),
            m.a_all.to_string(),
            cell(m.f_all),
            cell(m.loss),
            cell(m.gain),
            r.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Test-set embeddings in the corpus format with predicted and true labels
/// appended as two more tab-separated fields.
pub fn write_dump<W: Write>(mut w: W, dump: &FeatureDump) -> io::Result<()> {
    for i in 0..dump.truth.len() {
        write!(w, "test\t{}\t", dump.truth[i])?;
        write_floats(&mut w, dump.embeddings.row(i))?;
        writeln!(w, "\t{}\t{}", dump.predicted[i], dump.truth[i])?;
    }
    w.flush()
}

pub fn dump_path(dir: &Path, stage: usize) -> PathBuf {
    dir.join(DUMP_DIR).join(format!("stage_{stage}.tsv"))
}

pub fn emit_dump(dir: &Path, dump: &FeatureDump) -> Result<PathBuf, CliError> {
    let path = dump_path(dir, dump.stage);
    create_parent(&path)?;
    let file = fs::File::create(&path).map_err(|e| CliError::io("cannot create", &path, e))?;
    write_dump(BufWriter::new(file), dump).map_err(|e| CliError::io("cannot write", &path, e))?;
    Ok(path)
}

/// Writes the structured report and the table into `dir`.
pub fn emit_report(dir: &Path, config: &RunConfig, reports: &[StageReport]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("cannot create", dir, e))?;
    let path = dir.join(STRUCTURED_FILE);
    let file = fs::File::create(&path).map_err(|e| CliError::io("cannot create", &path, e))?;
    write_structured(BufWriter::new(file), &ReportHeader::new(config), reports)
        .map_err(|e| CliError::io("cannot write", &path, e))?;
    let path = dir.join(TABLE_FILE);
    let file = fs::File::create(&path).map_err(|e| CliError::io("cannot create", &path, e))?;
    write_table(BufWriter::new(file), reports).map_err(|e| CliError::format(&path, e))?;
    Ok(())
}

pub(crate) fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io("cannot create", parent, e))?;
    }
    Ok(())
}

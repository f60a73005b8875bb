//! CSV ingestion and report output.
//!
//! Input schemas (UTF-8, header row required, `.` decimal separator):
//!
//! | file              | header                          |
//! |-------------------|---------------------------------|
//! | calibration       | `score` or `batch_id,score`     |
//! | candidate row     | `label,score`                   |
//! | batch stream      | `batch_id,role,score`           |
//! | expert matrix     | `expert_1,…,expert_m`           |
//!
//! Output files are written to a temporary file in the target directory and
//! renamed into place.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use csv::StringRecord;

use crate::bav::BatchOutcome;
use crate::error::{Error, Result};
use crate::mccp::ExpertScoreMatrix;
use crate::posthoc::AlphaSelection;
use crate::scores::{LabelScoreRow, ScoreVector};

fn input_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Input { path: path.to_path_buf(), message: message.into() }
}

/// Header fields and `(line, record)` pairs.
type Table = (Vec<String>, Vec<(u64, StringRecord)>);

fn open(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.iter().all(String::is_empty) {
        return Err(input_err(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| input_err(path, format!("line {line}: {field:?} is not a number")))
}

fn column(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn scores_at(path: &Path, values: Vec<f64>, lines: &[u64]) -> Result<ScoreVector> {
    ScoreVector::new(values).map_err(|e| match e {
        Error::InvalidScore { index, value } => {
            input_err(path, format!("line {}: score {value} must be positive and finite", lines[index]))
        }
        other => other,
    })
}

/// Contents of a calibration score file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoresFile {
    /// Single `score` column.
    Single(ScoreVector),
    /// `batch_id,score`: batches in order of first appearance.
    Batched(Vec<(String, ScoreVector)>),
}

impl ScoresFile {
    /// All scores as one block, in file order.
    pub fn flatten(self) -> Result<ScoreVector> {
        match self {
            ScoresFile::Single(v) => Ok(v),
            ScoresFile::Batched(b) => ScoreVector::new(b.into_iter().flat_map(|(_, v)| v.into_inner()).collect()),
        }
    }
}

pub fn read_scores(path: &Path) -> Result<ScoresFile> {
    let (header, rows) = open(path)?;
    let score_col = column(&header, "score").ok_or_else(|| input_err(path, "missing `score` column"))?;
    let lines: Vec<u64> = rows.iter().map(|r| r.0).collect();
    match column(&header, "batch_id") {
        None => {
            let values = rows
                .iter()
                .map(|(line, r)| parse_f64(path, *line, r.get(score_col).unwrap_or("")))
                .collect::<Result<Vec<_>>>()?;
            Ok(ScoresFile::Single(scores_at(path, values, &lines)?))
        }
        Some(id_col) => {
            let mut batches: Vec<(String, Vec<f64>, Vec<u64>)> = Vec::new();
            for (line, r) in &rows {
                let id = r.get(id_col).unwrap_or("").to_owned();
                let v = parse_f64(path, *line, r.get(score_col).unwrap_or(""))?;
                match batches.iter_mut().find(|b| b.0 == id) {
                    Some(b) => {
                        b.1.push(v);
                        b.2.push(*line);
                    }
                    None => batches.push((id, vec![v], vec![*line])),
                }
            }
            batches
                .into_iter()
                .map(|(id, v, l)| Ok((id, scores_at(path, v, &l)?)))
                .collect::<Result<Vec<_>>>()
                .map(ScoresFile::Batched)
        }
    }
}

/// Candidate labels with their scores for one test feature.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRow {
    pub labels: Vec<String>,
    pub row: LabelScoreRow,
}

impl CandidateRow {
    pub fn names(&self, set: &[usize]) -> Vec<String> {
        set.iter().map(|i| self.labels[*i].clone()).collect()
    }
}

pub fn read_candidate_row(path: &Path) -> Result<CandidateRow> {
    let (header, rows) = open(path)?;
    let lc = column(&header, "label").ok_or_else(|| input_err(path, "missing `label` column"))?;
    let sc = column(&header, "score").ok_or_else(|| input_err(path, "missing `score` column"))?;
    if rows.is_empty() {
        return Err(input_err(path, "no candidate labels"));
    }
    let mut labels = Vec::with_capacity(rows.len());
    let mut scores = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        labels.push(r.get(lc).unwrap_or("").to_owned());
        scores.push(parse_f64(path, *line, r.get(sc).unwrap_or(""))?);
    }
    let lines: Vec<u64> = rows.iter().map(|r| r.0).collect();
    let row = LabelScoreRow::new(scores).map_err(|e| match e {
        Error::InvalidScore { index, value } => {
            input_err(path, format!("line {}: score {value} must be positive and finite", lines[index]))
        }
        other => other,
    })?;
    Ok(CandidateRow { labels, row })
}

/// One batch of a stream: calibration scores and its single test score.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub batch_id: String,
    pub calib: ScoreVector,
    pub test_score: f64,
}

/// Reads `batch_id,role,score`. Batches keep the order in which their id first
/// appears; each needs exactly one `test` row.
pub fn read_batch_stream(path: &Path) -> Result<Vec<BatchRecord>> {
    let (header, rows) = open(path)?;
    let col = |name: &str| column(&header, name).ok_or_else(|| input_err(path, format!("missing `{name}` column")));
    let (ic, rc, sc) = (col("batch_id")?, col("role")?, col("score")?);
    struct Pending {
        id: String,
        calib: Vec<f64>,
        lines: Vec<u64>,
        test: Option<f64>,
    }
    let mut batches: Vec<Pending> = Vec::new();
    for (line, r) in &rows {
        let id = r.get(ic).unwrap_or("");
        let role = r.get(rc).unwrap_or("");
        let v = parse_f64(path, *line, r.get(sc).unwrap_or(""))?;
        let idx = match batches.iter().position(|b| b.id == id) {
            Some(i) => i,
            None => {
                batches.push(Pending { id: id.to_owned(), calib: Vec::new(), lines: Vec::new(), test: None });
                batches.len() - 1
            }
        };
        let b = &mut batches[idx];
        match role {
            "calib" => {
                b.calib.push(v);
                b.lines.push(*line);
            }
            "test" => {
                if b.test.is_some() {
                    return Err(input_err(path, format!("line {line}: batch {id:?} has more than one test row")));
                }
                if !(v > 0.0 && v.is_finite()) {
                    return Err(input_err(path, format!("line {line}: score {v} must be positive and finite")));
                }
                b.test = Some(v);
            }
            other => {
                return Err(input_err(path, format!("line {line}: role must be `calib` or `test`, got {other:?}")))
            }
        }
    }
    if batches.is_empty() {
        return Err(input_err(path, "batch stream is empty"));
    }
    batches
        .into_iter()
        .map(|b| {
            let test_score = b.test.ok_or_else(|| input_err(path, format!("batch {:?} has no test row", b.id)))?;
            Ok(BatchRecord { calib: scores_at(path, b.calib, &b.lines)?, batch_id: b.id, test_score })
        })
        .collect()
}

/// Reads an `expert_1,…,expert_m` matrix, one row per calibration example.
pub fn read_expert_matrix(path: &Path) -> Result<ExpertScoreMatrix> {
    let (header, rows) = open(path)?;
    for (j, h) in header.iter().enumerate() {
        if *h != format!("expert_{}", j + 1) {
            return Err(input_err(path, format!("header column {} must be `expert_{}`, got {h:?}", j + 1, j + 1)));
        }
    }
    if rows.is_empty() {
        return Err(input_err(path, "expert matrix has no rows"));
    }
    let mut data = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        if r.len() != header.len() {
            return Err(input_err(path, format!("line {line}: expected {} fields, got {}", header.len(), r.len())));
        }
        let mut row = Vec::with_capacity(r.len());
        for f in r.iter() {
            let v = parse_f64(path, *line, f)?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(input_err(path, format!("line {line}: score {v} must be positive and finite")));
            }
            row.push(v);
        }
        data.push(row);
    }
    ExpertScoreMatrix::from_rows(data)
}

/// Per-batch CSV `t,log_wealth,threshold,covered`; `log_wealth` is after the
/// batch's update.
pub fn martingale_csv(rows: &[(BatchOutcome, f64)]) -> String {
    let mut out = String::from("t,log_wealth,threshold,covered\n");
    for (o, lw) in rows {
        let _ = writeln!(out, "{},{lw:?},{},{}", o.t, o.threshold, o.covered);
    }
    out
}

/// Size profile CSV `alpha,set_size`.
pub fn profile_csv(profile: &[(f64, usize)]) -> String {
    let mut out = String::from("alpha,set_size\n");
    for (a, s) in profile {
        let _ = writeln!(out, "{a},{s}");
    }
    out
}

/// Selection JSON `{alpha_tilde, target_size, achieved_size, set}`.
pub fn selection_json(sel: &AlphaSelection, set: &[String]) -> serde_json::Value {
    serde_json::json!({
        "alpha_tilde": sel.alpha_tilde,
        "target_size": sel.target_size,
        "achieved_size": sel.achieved_size,
        "set": set,
    })
}

/// Writes `contents` to `path` through a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err)?;
    tmp.write_all(contents).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

//! Study tables in `study,TP,FN,FP,TN` CSV form.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margins::StudyRecord;

pub const HEADER: [&str; 5] = ["study", "TP", "FN", "FP", "TN"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub labels: Vec<String>,
    pub studies: Vec<StudyRecord>,
    pub source: Option<PathBuf>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, labels: Vec<String>, studies: Vec<StudyRecord>) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::Validation { line: None, msg: "dataset has no studies".into() });
        }
        if labels.len() != studies.len() {
            return Err(Error::Validation { line: None, msg: "one label per study is required".into() });
        }
        Ok(Dataset { name: name.into(), labels, studies, source: None })
    }

    /// Label each study `s1`, `s2`, ...
    pub fn unlabelled(name: impl Into<String>, studies: Vec<StudyRecord>) -> Result<Self> {
        let labels = (1..=studies.len()).map(|i| format!("s{i}")).collect();
        Self::new(name, labels, studies)
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(HEADER).map_err(io)?;
        for (label, s) in self.labels.iter().zip(&self.studies) {
            out.write_record([label.clone(), s.tp().to_string(), s.fn_().to_string(), s.fp().to_string(), s.tn().to_string()])
                .map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Read a study table from `path`.
pub fn ingest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut ds = read_csv(file, name)?;
    ds.source = Some(path.to_path_buf());
    Ok(ds)
}

pub fn read_csv<R: Read>(r: R, name: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::Parse { line: 1, msg: e.to_string() }),
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    };
    let got: Vec<&str> = header.iter().collect();
    if got.len() != HEADER.len() || got.iter().zip(HEADER).any(|(a, b)| !a.eq_ignore_ascii_case(b)) {
        return Err(Error::Parse { line: 1, msg: format!("expected header {}, found {}", HEADER.join(","), got.join(",")) });
    }
    let mut labels = Vec::new();
    let mut studies = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != HEADER.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields, found {}", HEADER.len(), rec.len()) });
        }
        let mut counts = [0u32; 4];
        for (k, c) in counts.iter_mut().enumerate() {
            let field = &rec[k + 1];
            let v: i64 = field
                .parse()
                .map_err(|_| Error::Parse { line, msg: format!("{} is not an integer: '{field}'", HEADER[k + 1]) })?;
            if v < 0 {
                return Err(Error::Validation { line: Some(line), msg: format!("{} is negative ({v})", HEADER[k + 1]) });
            }
            *c = u32::try_from(v).map_err(|_| Error::Validation { line: Some(line), msg: format!("{} is too large", HEADER[k + 1]) })?;
        }
        let [tp, fn_, fp, tn] = counts;
        let s = StudyRecord::new(tp, tp + fn_, tn, tn + fp).map_err(|e| match e {
            Error::Validation { msg, .. } => Error::Validation { line: Some(line), msg },
            other => other,
        })?;
        labels.push(rec[0].to_string());
        studies.push(s);
    }
    Dataset::new(name, labels, studies)
}

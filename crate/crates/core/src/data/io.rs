use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{one_hot, Dataset};
use crate::error::{Error, Result};
use crate::nn::ProblemKind;
use crate::tensor::Tensor;

/// Which CSV columns hold targets, and how to read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub targets: Vec<String>,
    /// One target column of class labels, one-hot encoded on load.
    pub classification: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DataFormat {
    Csv { schema: CsvSchema },
    IdxPair { labels: PathBuf },
}

pub fn load_dataset(path: &Path, format: &DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Csv { schema } => load_csv(path, schema),
        DataFormat::IdxPair { labels } => load_idx_pair(path, labels),
    }
}

fn parse_cell(text: &str, row: usize, column: usize) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|e| Error::Parse {
        row,
        column,
        message: format!("{text:?}: {e}"),
    })
}

/// Reads a comma-separated file with a header row. Rows and columns in
/// errors are 1-based file positions.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Io(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let mut target_idx = Vec::new();
    for t in &schema.targets {
        let i = headers
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| Error::Config(format!("target column {t:?} not in header")))?;
        target_idx.push(i);
    }
    if target_idx.is_empty() || (schema.classification && target_idx.len() != 1) {
        return Err(Error::Config("classification needs exactly one label column, regression at least one".into()));
    }
    let feature_idx: Vec<usize> = (0..headers.len()).filter(|i| !target_idx.contains(i)).collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse {
                row: line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        for &c in &feature_idx {
            features.push(parse_cell(&record[c], line, c + 1)?);
        }
        if schema.classification {
            raw_labels.push(record[target_idx[0]].trim().to_string());
        } else {
            for &c in &target_idx {
                targets.push(parse_cell(&record[c], line, c + 1)?);
            }
        }
        rows += 1;
    }
    let x = Tensor::matrix(rows, feature_idx.len(), features)?;
    if schema.classification {
        let classes = sorted_classes(&raw_labels);
        let labels: Vec<usize> = raw_labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).expect("collected above"))
            .collect();
        Dataset::new(x, one_hot(&labels, classes.len())?, ProblemKind::Classification { n_classes: classes.len() })
    } else {
        let y = Tensor::matrix(rows, target_idx.len(), targets)?;
        Dataset::new(x, y, ProblemKind::Regression { n_outputs: target_idx.len() })
    }
}

// numeric order when every label is a number, lexical otherwise
fn sorted_classes(raw: &[String]) -> Vec<String> {
    let distinct: BTreeSet<&String> = raw.iter().collect();
    let mut classes: Vec<String> = distinct.into_iter().cloned().collect();
    if classes.iter().all(|c| c.parse::<f64>().is_ok()) {
        classes.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    classes
}

/// Decodes an IDX container into its dimensions and values.
pub fn read_idx(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |m: &str| Error::Parse {
        row: 0,
        column: 0,
        message: format!("idx: {m}"),
    };
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("bad magic number"));
    }
    let dtype = bytes[2];
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let width = match dtype {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        _ => return Err(bad(&format!("unknown data type 0x{dtype:02x}"))),
    };
    let body = &bytes[header..];
    if body.len() != count * width {
        return Err(bad(&format!("expected {} data bytes, found {}", count * width, body.len())));
    }
    let values = body
        .chunks_exact(width)
        .map(|c| match dtype {
            0x08 => c[0] as f64,
            0x09 => c[0] as i8 as f64,
            0x0B => i16::from_be_bytes([c[0], c[1]]) as f64,
            0x0C => i32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0D => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            _ => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok((dims, values))
}

/// Encodes unsigned bytes as an IDX container.
pub fn write_idx(dims: &[usize], values: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(values);
    out
}

/// Images file (n × rows × cols …) plus a labels file (n).
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())));
    let (idims, ivals) = read_idx(&read(images)?)?;
    let (ldims, lvals) = read_idx(&read(labels)?)?;
    if idims.is_empty() || ldims.len() != 1 || idims[0] != ldims[0] {
        return Err(Error::ShapeMismatch {
            op: "idx pair",
            left: idims,
            right: ldims,
        });
    }
    let n = idims[0];
    let d = ivals.len().checked_div(n).unwrap_or(0);
    let x = Tensor::matrix(n, d, ivals)?;
    let labels: Vec<usize> = lvals.iter().map(|&v| v as usize).collect();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::from_labels(x, &labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, content: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(content).unwrap();
        p
    }

    #[test]
    fn csv_classification() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", b"f1,f2,label\n1,2,b\n3,4,a\n5,6,b\n7,8,c\n");
        let ds = load_csv(&p, &CsvSchema { targets: vec!["label".into()], classification: true }).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.problem, ProblemKind::Classification { n_classes: 3 });
        assert_eq!(ds.labels(), vec![1, 0, 1, 2]);
    }

    #[test]
    fn csv_keeps_nan_and_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", b"a,b,t\n1,nan,0.5\n2,3,1.5\n");
        let schema = CsvSchema { targets: vec!["t".into()], classification: false };
        let ds = load_csv(&p, &schema).unwrap();
        assert!(ds.x.get(0, 1).is_nan());
        let p = write(&dir, "bad.csv", b"a,b,t\n1,2,0.5\n2,oops,1.5\n");
        match load_csv(&p, &schema) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        let p = write(&dir, "ragged.csv", b"a,b,t\n1,2,0.5\n2,1.5\n");
        assert!(matches!(load_csv(&p, &schema), Err(Error::Parse { .. })));
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..100 * 28 * 28).map(|i| (i % 256) as u8).collect();
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let ip = write(&dir, "img.idx", &write_idx(&[100, 28, 28], &pixels));
        let lp = write(&dir, "lab.idx", &write_idx(&[100], &labels));
        let ds = load_idx_pair(&ip, &lp).unwrap();
        assert_eq!(ds.x.shape(), &[100, 784]);
        assert_eq!(ds.x.get(1, 0), (784 % 256) as f64);
        assert_eq!(ds.class_counts(), vec![10; 10]);
        assert!(read_idx(&[1, 2, 3]).is_err());
    }
}

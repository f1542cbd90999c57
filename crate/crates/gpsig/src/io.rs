//! Line-delimited JSON sequence files.
//!
//! One record per line: `{"label": 1, "times": [...], "values": [[...], ...]}`.
//! `times` may be omitted (the integer grid `0, 1, 2, …` is used), `label` may
//! be omitted for unlabeled data, and an optional `"split": "train" | "test"`
//! assigns the record to a dataset split (default `train`). Files starting
//! with the gzip magic bytes are decompressed transparently; files written to a
//! path ending in `.gz` are compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use gpsig_core::dataset::Dataset;
use gpsig_core::sequence::Sequence;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot open {path}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

/// Opens a file for reading, decompressing gzip content when present.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>, IoError> {
    let open_err = |source| IoError::Open {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::open(path).map_err(open_err)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(open_err)?;
    let file = File::open(path).map_err(open_err)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Sequences of a jsonl file with their split tags.
pub fn read_jsonl(path: &Path) -> Result<Vec<(Sequence, Split)>, IoError> {
    let reader = open_maybe_gz(path)?;
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let parse_err = |message: String| IoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let seq = match rec.times {
            Some(t) => Sequence::new(t, rec.values, rec.label),
            None => Sequence::on_grid(rec.values, rec.label),
        }
        .map_err(|e| parse_err(e.to_string()))?;
        match dim {
            None => dim = Some(seq.dim()),
            Some(d) if d != seq.dim() => {
                return Err(parse_err(format!("dimension {} differs from {d}", seq.dim())))
            }
            _ => {}
        }
        out.push((seq, rec.split.unwrap_or(Split::Train)));
    }
    Ok(out)
}

/// Writes sequences with explicit times; split tags are written when given.
pub fn write_jsonl<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (&'a Sequence, Option<Split>)>,
) -> Result<(), IoError> {
    let file = File::create(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let mut w: Box<dyn Write> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(BufWriter::new(GzEncoder::new(file, Compression::default())))
    } else {
        Box::new(BufWriter::new(file))
    };
    for (seq, split) in records {
        let rec = Record {
            label: seq.label(),
            times: Some(seq.times().to_vec()),
            values: (0..seq.len()).map(|i| seq.point(i).to_vec()).collect(),
            split,
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes both splits of a dataset into one tagged file.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    write_jsonl(
        path,
        ds.train
            .iter()
            .map(|s| (s, Some(Split::Train)))
            .chain(ds.test.iter().map(|s| (s, Some(Split::Test)))),
    )
}

/// Loads a dataset from one tagged file, or from separate train and test
/// files (in which case all records of `test` belong to the test split).
pub fn load_dataset(path: &Path, test: Option<&Path>) -> Result<Dataset, IoError> {
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for (s, split) in read_jsonl(path)? {
        match split {
            Split::Train => train.push(s),
            Split::Test => held_out.push(s),
        }
    }
    if let Some(t) = test {
        held_out.extend(read_jsonl(t)?.into_iter().map(|(s, _)| s));
    }
    Dataset::new(train, held_out).map_err(|e| IoError::Invalid {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Sequences of a file regardless of split tags.
pub fn load_sequences(path: &Path) -> Result<Vec<Sequence>, IoError> {
    Ok(read_jsonl(path)?.into_iter().map(|(s, _)| s).collect())
}

//! Plain-text data files: one point per CSV row plus a JSON sidecar describing
//! how the sample was made.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledSample;
use crate::error::{Error, Result};
use crate::linalg::PointSet;

/// Metadata written next to a generated CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: Option<u64>,
    pub inlier_mask: Vec<bool>,
    pub oracle_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theoretical_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
}

impl Sidecar {
    pub fn from_sample(sample: &LabeledSample, seed: Option<u64>) -> Self {
        Self {
            seed,
            inlier_mask: sample.inlier_mask.clone(),
            oracle_mean: sample.oracle_mean.clone(),
            true_mean: sample.true_mean.clone(),
            theoretical_sigma: None,
            setting: None,
        }
    }

    pub fn corrupted_indices(&self) -> Vec<usize> {
        self.inlier_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(i, _)| i)
            .collect()
    }

    /// Reattaches the metadata to the points it describes.
    pub fn into_sample(self, points: PointSet) -> Result<LabeledSample> {
        if self.inlier_mask.len() != points.n() || self.oracle_mean.len() != points.d() {
            return Err(Error::contract(format!(
                "sidecar describes {} points in dimension {}, data has {} points in dimension {}",
                self.inlier_mask.len(),
                self.oracle_mean.len(),
                points.n(),
                points.d()
            )));
        }
        let corrupted = self.inlier_mask.iter().filter(|&&m| !m).count();
        Ok(LabeledSample {
            epsilon: corrupted as f64 / points.n() as f64,
            points,
            inlier_mask: self.inlier_mask,
            oracle_mean: self.oracle_mean,
            true_mean: self.true_mean,
        })
    }
}

/// `data.csv` -> `data.csv.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes points as CSV. Floats use Rust's shortest round-trip formatting.
pub fn write_points<W: Write>(out: W, points: &PointSet, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let to_err = |e: csv::Error| Error::Contract(format!("csv write failed: {e}"));
    if header {
        let names: Vec<String> = (1..=points.d()).map(|j| format!("x{j}")).collect();
        w.write_record(&names).map_err(to_err)?;
    }
    let mut buf = Vec::with_capacity(points.d());
    for row in points.rows() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::Contract(format!("csv write failed: {e}")))
}

pub fn write_points_file(path: &Path, points: &PointSet, header: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_points(BufWriter::new(file), points, header).map_err(|e| match e {
        Error::Contract(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}

/// Parses CSV points. `name` only labels errors. With `header` the first line
/// is skipped. Rows and columns in errors are 1-based file positions.
pub fn read_points<R: Read>(input: R, name: &Path, header: bool) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: name.to_path_buf(),
        row,
        column,
        message,
    };
    let mut data = Vec::new();
    let mut d = None;
    let mut n = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(k + 1);
            parse_err(row, 1, e.to_string())
        })?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match d {
            None => d = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(parse_err(
                    row,
                    rec.len().min(d) + 1,
                    format!("expected {d} columns, found {}", rec.len()),
                ))
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, j + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, j + 1, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
        n += 1;
    }
    let Some(d) = d else {
        return Err(parse_err(1, 1, "no data rows".into()));
    };
    PointSet::new(data, n, d)
}

pub fn read_points_file(path: &Path, header: bool) -> Result<PointSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_points(file, path, header)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Writes `path` and its sidecar.
pub fn write_sample(
    path: &Path,
    sample: &LabeledSample,
    meta: &Sidecar,
    header: bool,
) -> Result<()> {
    write_points_file(path, &sample.points, header)?;
    write_json(&sidecar_path(path), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, header: bool) -> Result<PointSet> {
        read_points(text.as_bytes(), Path::new("mem.csv"), header)
    }

    #[test]
    fn round_trip_is_exact() {
        let vals = [0.1, -1.0 / 3.0, 1e-300, 123456789.12345679, f64::MAX, -0.0];
        let p = PointSet::new(vals.to_vec(), 3, 2).unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &p, false).unwrap();
        let q = parse(std::str::from_utf8(&buf).unwrap(), false).unwrap();
        assert_eq!(q.as_slice(), p.as_slice());
    }

    #[test]
    fn header_is_written_and_skipped() {
        let p = PointSet::new(vec![1.0, 2.0], 1, 2).unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &p, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        assert_eq!(parse(&text, true).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(matches!(
            parse(&text, false),
            Err(Error::Parse {
                row: 1,
                column: 1,
                ..
            })
        ));
    }

    #[test]
    fn ragged_row_names_position() {
        let err = parse("1,2\n3,4\n5\n", false).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_cell_names_position() {
        let err = parse("1,2\n3,abc\n", false).unwrap_err();
        match err {
            Error::Parse {
                row,
                column,
                message,
                ..
            } => {
                assert_eq!((row, column), (2, 2));
                assert!(message.contains("abc"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(parse("", false), Err(Error::Parse { .. })));
    }

    #[test]
    fn sidecar_path_appends() {
        assert_eq!(
            sidecar_path(Path::new("a/b.csv")),
            PathBuf::from("a/b.csv.json")
        );
    }
}

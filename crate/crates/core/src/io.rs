//! File formats.
//!
//! * Matrix files: `GZSLMAT1` magic, `u32` rows and cols (little-endian),
//!   then `rows·cols` little-endian `f64` values in row-major order. Files
//!   ending in `.csv` are read as comma-separated numeric rows instead.
//! * Dataset directories: `features.{bin,csv}`, `labels.txt` (one integer
//!   per line) and `prototypes.{bin,csv}`.
//! * Split files: a line-oriented text listing of every validation fold.
//! * Curves: CSV with header `gamma,acc_unseen,acc_seen`.
//! * Reports: JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::calibration::TradeoffPoint;
use crate::data::{ClassPartition, Dataset, GzslReport, GzslSplit};
use crate::error::{Error, Result};
use crate::metrics::MseCurves;
use crate::pipeline::{ExperimentConfig, GzslOptions, ZslReport};

pub const MATRIX_MAGIC: &[u8; 8] = b"GZSLMAT1";
const HEADER_LEN: usize = 16;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    if bytes.len() < MATRIX_MAGIC.len() || &bytes[..MATRIX_MAGIC.len()] != MATRIX_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("matrix of {rows}x{cols} is too large"),
        })?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::TrailingBytes(path.to_path_buf()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn encode_matrix(m: ArrayView2<'_, f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_csv_matrix(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                line: lineno + 1,
                col: col + 1,
                cell: cell.to_string(),
            })?;
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected {c} cells, found {n}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).expect("rectangular"))
}

fn format_csv_matrix(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Reads a binary matrix file, or a CSV file when the extension is `.csv`.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = read_bytes(path)?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "not valid UTF-8".into(),
        })?;
        parse_csv_matrix(&text, path)
    } else {
        decode_matrix(&bytes, path)
    }
}

pub fn write_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    if is_csv(path) {
        write_bytes(path, format_csv_matrix(m).as_bytes())
    } else {
        write_bytes(path, &encode_matrix(m))
    }
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("not a class id: {:?}", l.trim()),
            })
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 4);
    for y in labels {
        writeln!(out, "{y}").expect("string write");
    }
    write_bytes(path, out.as_bytes())
}

fn find_matrix(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["bin", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingFile(dir.join(format!("{stem}.bin"))))
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path, normalize_prototypes: bool) -> Result<Dataset> {
    let features = load_matrix(&find_matrix(dir, "features")?)?;
    let prototypes = load_matrix(&find_matrix(dir, "prototypes")?)?;
    let labels = load_labels(&dir.join("labels.txt"))?;
    let d = Dataset::new(features, labels, prototypes)?;
    if normalize_prototypes {
        d.with_normalized_prototypes()
    } else {
        Ok(d)
    }
}

/// Writes `features.bin`, `labels.txt` and `prototypes.bin` into `dir`.
pub fn save_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join("features.bin"), d.features())?;
    write_labels(&dir.join("labels.txt"), d.labels())?;
    write_matrix(&dir.join("prototypes.bin"), d.prototypes())
}

const SPLIT_HEADER: &str = "gzsl-split 1";
const SPLIT_KEYS: [&str; 8] = [
    "train_classes",
    "val_classes",
    "test_classes",
    "train_idx",
    "seen_val_idx",
    "seen_test_idx",
    "unseen_val_idx",
    "unseen_test_idx",
];

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn format_splits(folds: &[GzslSplit]) -> String {
    let mut out = format!("{SPLIT_HEADER}\nfolds {}\n", folds.len());
    for (i, f) in folds.iter().enumerate() {
        let p = &f.partition;
        let lists: [&[usize]; 8] = [
            &p.train_classes,
            &p.val_classes,
            &p.test_classes,
            &f.train_idx,
            &f.seen_val_idx,
            &f.seen_test_idx,
            &f.unseen_val_idx,
            &f.unseen_test_idx,
        ];
        writeln!(out, "fold {i}").expect("string write");
        for (key, ids) in SPLIT_KEYS.iter().zip(lists) {
            let ids = join_ids(ids);
            if ids.is_empty() {
                writeln!(out, "{key}").expect("string write");
            } else {
                writeln!(out, "{key} {ids}").expect("string write");
            }
        }
    }
    out
}

pub fn parse_splits(text: &str, path: &Path) -> Result<Vec<GzslSplit>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == SPLIT_HEADER => {}
        Some((n, l)) => return Err(err(n, format!("expected {SPLIT_HEADER:?}, found {l:?}"))),
        None => return Err(err(0, "empty split file".into())),
    }
    let count: usize = match lines.next() {
        Some((n, l)) => l
            .strip_prefix("folds ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(n, format!("expected 'folds <n>', found {l:?}")))?,
        None => return Err(err(0, "missing fold count".into())),
    };
    let mut folds = Vec::with_capacity(count);
    for i in 0..count {
        match lines.next() {
            Some((_, l)) if l == format!("fold {i}") => {}
            Some((n, l)) => return Err(err(n, format!("expected 'fold {i}', found {l:?}"))),
            None => return Err(err(0, format!("missing fold {i}"))),
        }
        let mut lists: Vec<Vec<usize>> = Vec::with_capacity(SPLIT_KEYS.len());
        for key in SPLIT_KEYS {
            let (n, l) = lines.next().ok_or_else(|| err(0, format!("missing {key} in fold {i}")))?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(key) {
                return Err(err(n, format!("expected {key}, found {l:?}")));
            }
            let ids = parts
                .map(|p| p.parse().map_err(|_| err(n, format!("bad index {p:?}"))))
                .collect::<Result<Vec<usize>>>()?;
            lists.push(ids);
        }
        let mut it = lists.into_iter();
        let mut next = || it.next().expect("eight lists");
        let partition = ClassPartition {
            train_classes: next(),
            val_classes: next(),
            test_classes: next(),
        };
        folds.push(GzslSplit {
            partition,
            train_idx: next(),
            seen_val_idx: next(),
            seen_test_idx: next(),
            unseen_val_idx: next(),
            unseen_test_idx: next(),
        });
    }
    if let Some((n, l)) = lines.next() {
        return Err(err(n, format!("unexpected trailing content {l:?}")));
    }
    Ok(folds)
}

pub fn write_splits(path: &Path, folds: &[GzslSplit]) -> Result<()> {
    write_bytes(path, format_splits(folds).as_bytes())
}

/// Reads a split file and checks every fold against `d`.
pub fn load_splits(path: &Path, d: &Dataset) -> Result<Vec<GzslSplit>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "not valid UTF-8".into(),
    })?;
    let folds = parse_splits(&text, path)?;
    for f in &folds {
        f.validate(d)?;
    }
    Ok(folds)
}

pub const CURVE_HEADER: &str = "gamma,acc_unseen,acc_seen";

pub fn format_curve(points: &[TradeoffPoint]) -> String {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let mut out = format!("{CURVE_HEADER}\n");
    for p in sorted {
        writeln!(out, "{},{},{}", p.gamma, p.acc_unseen_in_all, p.acc_seen_in_all).expect("string write");
    }
    out
}

/// Writes the curve sorted by `gamma`.
pub fn write_curve(points: &[TradeoffPoint], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    write_bytes(path, format_curve(points).as_bytes())
}

pub fn read_curve(path: &Path) -> Result<Vec<TradeoffPoint>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "not valid UTF-8".into(),
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {CURVE_HEADER:?}"),
        });
    }
    let m = parse_csv_matrix(&lines.collect::<Vec<_>>().join("\n"), path)?;
    if m.nrows() > 0 && m.ncols() != 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: format!("expected 3 columns, found {}", m.ncols()),
        });
    }
    Ok(m.rows()
        .into_iter()
        .map(|r| TradeoffPoint {
            gamma: r[0],
            acc_unseen_in_all: r[1],
            acc_seen_in_all: r[2],
        })
        .collect())
}

pub const MSE_CURVE_HEADER: &str = "lambda,mse_seen,mse_unseen";

pub fn write_mse_curves(curves: &MseCurves, path: &Path) -> Result<()> {
    let mut out = format!("{MSE_CURVE_HEADER}\n");
    for ((l, s), u) in curves.lambdas.iter().zip(&curves.seen).zip(&curves.unseen) {
        writeln!(out, "{l},{s},{u}").expect("string write");
    }
    write_bytes(path, out.as_bytes())
}

/// Everything needed to rerun the experiment that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub split: String,
    pub normalize_prototypes: bool,
    pub experiment: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gzsl: Option<GzslOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "lowercase")]
pub enum ReportBody {
    Gzsl(GzslReport),
    Zsl(ZslReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub report: ReportBody,
}

impl ReportFile {
    pub fn new(command: &str, config: RunConfig, report: ReportBody) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        write_matrix(&p, array![[0.0]].view()).unwrap();
        assert_eq!(load_matrix(&p).unwrap(), array![[0.0]]);
        assert_eq!(fs::metadata(&p).unwrap().len(), 24);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = MATRIX_MAGIC.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 7]);
        assert!(matches!(
            decode_matrix(&bytes, Path::new("x")),
            Err(Error::TruncatedPayload { expected: 8, found: 7, .. })
        ));
        bytes.extend_from_slice(&[0u8; 2]);
        assert!(matches!(decode_matrix(&bytes, Path::new("x")), Err(Error::TrailingBytes(_))));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode_matrix(b"GZSLMAT2\0\0\0\0\0\0\0\0", Path::new("x")), Err(Error::BadMagic(_))));
        assert!(matches!(decode_matrix(b"GZ", Path::new("x")), Err(Error::BadMagic(_))));
    }

    #[test]
    fn csv_matrix() {
        let m = parse_csv_matrix("1, 2.5\n-3,4e-2\n\n", Path::new("x.csv")).unwrap();
        assert_eq!(m, array![[1.0, 2.5], [-3.0, 0.04]]);
        assert!(matches!(
            parse_csv_matrix("1,2\n3,abc\n", Path::new("x.csv")),
            Err(Error::NonNumericCell { line: 2, col: 2, .. })
        ));
        assert!(matches!(
            parse_csv_matrix("1,2\n3\n", Path::new("x.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn curve_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let pt = |gamma: f64| TradeoffPoint {
            gamma,
            acc_unseen_in_all: gamma.abs() * 3.0 + 0.1,
            acc_seen_in_all: 100.0 / 3.0,
        };
        write_curve(&[pt(0.25)], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 2);

        let shuffled = vec![pt(0.7), pt(-1.0 / 3.0), pt(1e-17), pt(-5.5)];
        write_curve(&shuffled, &p).unwrap();
        let back = read_curve(&p).unwrap();
        let mut sorted = shuffled.clone();
        sorted.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
        assert_eq!(back, sorted);
        assert!(back.windows(2).all(|w| w[0].gamma <= w[1].gamma));
        assert!(matches!(write_curve(&[], &p), Err(Error::EmptyInput)));
    }

    #[test]
    fn dataset_directory() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(array![[1.0, 2.0], [3.0, 4.0]], vec![0, 1], array![[3.0], [-2.0]]).unwrap();
        save_dataset(dir.path(), &d).unwrap();
        let raw = load_dataset(dir.path(), false).unwrap();
        assert_eq!(raw, d);
        let normed = load_dataset(dir.path(), true).unwrap();
        assert_eq!(normed.prototypes(), array![[1.0], [-1.0]]);

        fs::remove_file(dir.path().join("prototypes.bin")).unwrap();
        assert!(matches!(load_dataset(dir.path(), true), Err(Error::MissingFile(_))));

        // CSV fallback and label-count validation
        fs::write(dir.path().join("prototypes.csv"), "1\n2\n").unwrap();
        assert!(load_dataset(dir.path(), true).is_ok());
        write_labels(&dir.path().join("labels.txt"), &[0, 1, 1]).unwrap();
        assert!(matches!(load_dataset(dir.path(), true), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn split_file_round_trip() {
        let split = GzslSplit {
            partition: ClassPartition {
                train_classes: vec![0, 2],
                val_classes: vec![1],
                test_classes: vec![3],
            },
            train_idx: vec![0, 4],
            seen_val_idx: vec![],
            seen_test_idx: vec![5],
            unseen_val_idx: vec![1],
            unseen_test_idx: vec![3, 7],
        };
        let text = format_splits(&[split.clone(), split.clone()]);
        assert_eq!(parse_splits(&text, Path::new("s")).unwrap(), vec![split.clone(), split]);
        assert!(parse_splits("nope\n", Path::new("s")).is_err());
        assert!(parse_splits(&text.replace("train_idx 0 4", "train_idx 0 x"), Path::new("s")).is_err());
    }

    proptest! {
        #[test]
        fn binary_matrix_round_trips_bit_exactly(
            rows in 0usize..6, cols in 0usize..6, bits in proptest::collection::vec(any::<u64>(), 36)
        ) {
            let values: Vec<f64> = bits[..rows * cols].iter().map(|&b| f64::from_bits(b)).collect();
            let m = Array2::from_shape_vec((rows, cols), values).unwrap();
            let back = decode_matrix(&encode_matrix(m.view()), Path::new("x")).unwrap();
            prop_assert_eq!(back.dim(), m.dim());
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn csv_matrix_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let m = Array2::from_shape_vec((3, 4), values).unwrap();
            let back = parse_csv_matrix(&format_csv_matrix(m.view()), Path::new("x.csv")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}

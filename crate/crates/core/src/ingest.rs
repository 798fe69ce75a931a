//! Loading, validating and preconditioning per-frame descriptor matrices.
//!
//! The detector assumes roughly whitened features, so this module also
//! carries a per-column standardizer and a PCA projection.
//!
//! Two on-disk layouts are supported:
//!
//! * CSV: an optional header line `# shufscan features v1 T=<int> d=<int>`,
//!   then one line per frame with `d` comma-separated decimal reals.
//! * Packed binary: magic `SFSQ`, a little-endian `u16` version (1), `T` and
//!   `d` as little-endian `u64`, then `T * d` little-endian `f64` values in
//!   row-major order.
//!
//! Ground-truth files are one `0` or `1` per line.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruth;

pub const BINARY_MAGIC: &[u8; 4] = b"SFSQ";
pub const BINARY_VERSION: u16 = 1;

const CSV_HEADER_PREFIX: &str = "# shufscan features v1";
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row}: expected {expected} columns, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {text:?} as a real number")]
    Parse {
        row: usize,
        column: usize,
        text: String,
    },
    #[error("row {row}, column {column}: non-finite value")]
    NonFinite { row: usize, column: usize },
    #[error("header declares T={declared} but file holds {found} rows")]
    RowCount { declared: usize, found: usize },
    #[error("feature matrix must have at least one row and one column")]
    Empty,
    #[error("frame ids: {0}")]
    FrameIds(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("binary file: {0}")]
    Binary(String),
    #[error("ground truth line {line}: expected 0 or 1, found {text:?}")]
    Truth { line: usize, text: String },
    #[error("pca: target dimension {target} out of range 1..={max}")]
    TargetDim { target: usize, max: usize },
    #[error("pca needs at least two frames")]
    TooFewFrames,
    #[error("pca: covariance rank {rank} is below the requested {target} components")]
    RankDeficient { rank: usize, target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Csv,
    #[value(name = "bin")]
    #[serde(rename = "bin")]
    Binary,
}

/// A `T x d` matrix of per-frame descriptors in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Array2<f64>,
    frame_ids: Option<Vec<i64>>,
    source: String,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, source: impl Into<String>) -> Result<Self, IngestError> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(IngestError::Empty);
        }
        if let Some(((row, column), _)) = frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(IngestError::NonFinite { row, column });
        }
        Ok(Self {
            frames,
            frame_ids: None,
            source: source.into(),
        })
    }

    pub fn with_frame_ids(mut self, ids: Vec<i64>) -> Result<Self, IngestError> {
        if ids.len() != self.len() {
            return Err(IngestError::FrameIds(format!(
                "{} ids for {} frames",
                ids.len(),
                self.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(IngestError::FrameIds(format!("duplicate id {dup}")));
        }
        self.frame_ids = Some(ids);
        Ok(self)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Number of frames, `T`.
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Descriptor dimension, `d`.
    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn frame_ids(&self) -> Option<&[i64]> {
        self.frame_ids.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    /// Returns a new sequence whose row `i` is row `order[i]` of `self`.
    ///
    /// Panics if `order` is not a permutation of `0..T`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len(), "order must cover every frame");
        let mut seen = vec![false; order.len()];
        for &i in order {
            assert!(
                !std::mem::replace(&mut seen[i], true),
                "order repeats frame {i}"
            );
        }
        Self {
            frames: self.frames.select(Axis(0), order),
            frame_ids: self
                .frame_ids
                .as_ref()
                .map(|ids| order.iter().map(|&i| ids[i]).collect()),
            source: format!("{} (reordered)", self.source),
        }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IngestError> {
    File::create(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureSequence, IngestError> {
    let file = open(path)?;
    let seq = match format {
        FeatureFormat::Csv => read_csv(BufReader::new(file))?,
        FeatureFormat::Binary => read_binary(BufReader::new(file))?,
    };
    Ok(seq.with_source(path.display().to_string()))
}

pub fn save_features(
    seq: &FeatureSequence,
    path: &Path,
    format: FeatureFormat,
) -> Result<(), IngestError> {
    let mut out = BufWriter::new(create(path)?);
    match format {
        FeatureFormat::Csv => write_csv(seq, &mut out)?,
        FeatureFormat::Binary => write_binary(seq, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize), IngestError> {
    let malformed = || IngestError::MalformedHeader(line.to_string());
    let rest = line.strip_prefix(CSV_HEADER_PREFIX).ok_or_else(malformed)?;
    let mut t = None;
    let mut d = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(malformed)?;
        let value: usize = value.parse().map_err(|_| malformed())?;
        match key {
            "T" if t.is_none() => t = Some(value),
            "d" if d.is_none() => d = Some(value),
            _ => return Err(malformed()),
        }
    }
    Ok((t.ok_or_else(malformed)?, d.ok_or_else(malformed)?))
}

/// Reads the CSV feature layout. Rows and columns in errors are 0-based
/// frame and dimension indices.
pub fn read_csv<R: BufRead>(reader: R) -> Result<FeatureSequence, IngestError> {
    let mut declared = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if line_no != 0 {
                return Err(IngestError::MalformedHeader(format!(
                    "comment on line {} (only a leading header is allowed)",
                    line_no + 1
                )));
            }
            let (t, d) = parse_header(line)?;
            declared = Some(t);
            width = Some(d);
            continue;
        }
        let row = rows;
        let mut found = 0usize;
        for (column, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| IngestError::Parse {
                row,
                column,
                text: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::NonFinite { row, column });
            }
            values.push(v);
            found += 1;
        }
        let expected = *width.get_or_insert(found);
        if found != expected {
            return Err(IngestError::RowWidth {
                row,
                expected,
                found,
            });
        }
        rows += 1;
    }
    if let Some(declared) = declared {
        if declared != rows {
            return Err(IngestError::RowCount {
                declared,
                found: rows,
            });
        }
    }
    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        return Err(IngestError::Empty);
    }
    let frames = Array2::from_shape_vec((rows, d), values).expect("row widths checked");
    FeatureSequence::new(frames, "csv")
}

/// Writes the CSV layout with its header. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_csv<W: Write>(seq: &FeatureSequence, out: &mut W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER_PREFIX} T={} d={}", seq.len(), seq.dim())?;
    for row in seq.frames.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{v:?}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<FeatureSequence, IngestError> {
    let mut head = [0u8; 4 + 2 + 8 + 8];
    reader
        .read_exact(&mut head)
        .map_err(|_| IngestError::Binary("truncated header".into()))?;
    if &head[..4] != BINARY_MAGIC {
        return Err(IngestError::Binary("bad magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != BINARY_VERSION {
        return Err(IngestError::Binary(format!(
            "unsupported version {version}"
        )));
    }
    let t = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let d = u64::from_le_bytes(head[14..22].try_into().unwrap());
    let count = t
        .checked_mul(d)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| IngestError::Binary("T*d overflows".into()))?;
    let (t, d) = (t as usize, d as usize);
    if count == 0 {
        return Err(IngestError::Empty);
    }
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for i in 0..count {
        reader
            .read_exact(&mut buf)
            .map_err(|_| IngestError::Binary(format!("truncated payload at value {i}")))?;
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(IngestError::NonFinite {
                row: i / d,
                column: i % d,
            });
        }
        values.push(v);
    }
    if reader.read(&mut buf)? != 0 {
        return Err(IngestError::Binary("trailing bytes after payload".into()));
    }
    let frames = Array2::from_shape_vec((t, d), values).expect("count checked");
    FeatureSequence::new(frames, "binary")
}

pub fn write_binary<W: Write>(seq: &FeatureSequence, out: &mut W) -> io::Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(seq.len() as u64).to_le_bytes())?;
    out.write_all(&(seq.dim() as u64).to_le_bytes())?;
    for v in seq.frames.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_ground_truth<R: BufRead>(reader: R) -> Result<GroundTruth, IngestError> {
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        match line.trim() {
            "" => continue,
            "0" => labels.push(false),
            "1" => labels.push(true),
            other => {
                return Err(IngestError::Truth {
                    line: i + 1,
                    text: other.to_string(),
                })
            }
        }
    }
    if labels.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(GroundTruth::new(labels))
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, IngestError> {
    read_ground_truth(BufReader::new(open(path)?))
}

pub fn save_ground_truth(truth: &GroundTruth, path: &Path) -> Result<(), IngestError> {
    let mut out = BufWriter::new(create(path)?);
    for &label in truth.labels() {
        writeln!(out, "{}", u8::from(label))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-column affine normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizerParams {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }
}

/// Column means and population standard deviations; scales below `1e-12`
/// become 1 so constant columns pass through centred but unscaled.
pub fn fit_standardizer(seq: &FeatureSequence) -> StandardizerParams {
    let t = seq.len() as f64;
    let mean = seq.frames.mean_axis(Axis(0)).expect("T >= 1");
    let scale = seq
        .frames
        .axis_iter(Axis(1))
        .zip(mean.iter())
        .map(|(col, &m)| {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t;
            let sd = var.sqrt();
            if sd < MIN_SCALE {
                1.0
            } else {
                sd
            }
        })
        .collect();
    StandardizerParams {
        mean: mean.to_vec(),
        scale,
    }
}

pub fn apply_standardizer(
    seq: &FeatureSequence,
    params: &StandardizerParams,
) -> Result<FeatureSequence, IngestError> {
    if params.mean.len() != seq.dim() || params.scale.len() != seq.dim() {
        return Err(IngestError::DimensionMismatch {
            expected: params.mean.len(),
            found: seq.dim(),
        });
    }
    let mut frames = seq.frames.clone();
    for mut row in frames.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - params.mean[j]) / params.scale[j];
        }
    }
    Ok(FeatureSequence {
        frames,
        frame_ids: seq.frame_ids.clone(),
        source: format!("standardized({})", seq.source),
    })
}

/// Principal axes of a feature sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `d x r`, one orthonormal component per column.
    pub components: Array2<f64>,
    /// Nonincreasing, strictly positive.
    pub eigenvalues: Array1<f64>,
}

impl PcaModel {
    pub fn target_dim(&self) -> usize {
        self.components.ncols()
    }

    /// Maps projected rows back into the original feature space.
    pub fn reconstruct(&self, projected: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = projected.dot(&self.components.t());
        out += &self.mean;
        out
    }
}

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns the
/// diagonal (unsorted eigenvalues) and the accumulated rotations, whose
/// column `i` is the eigenvector for eigenvalue `i`.
pub(crate) fn symmetric_eigen(mut a: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::<f64>::eye(n);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_TOL * norm.max(1.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[[p, q]].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v)
}

/// Fits the top `target_dim` principal axes of the population covariance.
///
/// Eigenvalue ties keep the solver's index order, and each component is
/// signed so its largest-magnitude coordinate is positive.
pub fn fit_pca(seq: &FeatureSequence, target_dim: usize) -> Result<PcaModel, IngestError> {
    let (t, d) = (seq.len(), seq.dim());
    if t < 2 {
        return Err(IngestError::TooFewFrames);
    }
    let max = t.min(d);
    if target_dim == 0 || target_dim > max {
        return Err(IngestError::TargetDim {
            target: target_dim,
            max,
        });
    }
    let mean = seq.frames.mean_axis(Axis(0)).expect("T >= 2");
    let centred = &seq.frames - &mean;
    let cov = centred.t().dot(&centred) / t as f64;
    let (values, vectors) = symmetric_eigen(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let top = values[order[0]].max(0.0);
    let floor = top * 1e-12;
    let rank = order.iter().filter(|&&i| values[i] > floor).count();
    if top == 0.0 || rank < target_dim {
        return Err(IngestError::RankDeficient {
            rank: if top == 0.0 { 0 } else { rank },
            target: target_dim,
        });
    }

    let mut components = Array2::zeros((d, target_dim));
    let mut eigenvalues = Array1::zeros(target_dim);
    for (c, &i) in order.iter().take(target_dim).enumerate() {
        let mut col = vectors.column(i).to_owned();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (k, v)| {
                if v.abs() > best.1 {
                    (k, v.abs())
                } else {
                    best
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        components.column_mut(c).assign(&col);
        eigenvalues[c] = values[i];
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

pub fn project(seq: &FeatureSequence, model: &PcaModel) -> Result<FeatureSequence, IngestError> {
    if seq.dim() != model.mean.len() {
        return Err(IngestError::DimensionMismatch {
            expected: model.mean.len(),
            found: seq.dim(),
        });
    }
    let centred = &seq.frames - &model.mean;
    Ok(FeatureSequence {
        frames: centred.dot(&model.components),
        frame_ids: seq.frame_ids.clone(),
        source: format!("pca{}({})", model.target_dim(), seq.source),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(t: usize, d: usize, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = Array2::from_shape_simple_fn((t, d), || rng.random_range(-5.0..5.0));
        FeatureSequence::new(frames, "random").unwrap()
    }

    #[test]
    fn csv_of_zeros() {
        let seq = read_csv("0,0\n0,0\n0,0\n".as_bytes()).unwrap();
        assert_eq!((seq.len(), seq.dim()), (3, 2));
        assert!(seq.frames().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_nan_names_row_and_column() {
        let err = read_csv("1,2\n3,nan\n".as_bytes()).unwrap_err();
        match err {
            IngestError::NonFinite { row, column } => assert_eq!((row, column), (1, 1)),
            other => panic!("unexpected {other}"),
        }
        assert!(err_text("1,2\n3,nan\n").contains("row 1, column 1"));
    }

    fn err_text(csv: &str) -> String {
        read_csv(csv.as_bytes()).unwrap_err().to_string()
    }

    #[test]
    fn csv_header_and_shape_errors() {
        let ok = read_csv("# shufscan features v1 T=2 d=1\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(matches!(
            read_csv("# shufscan features v1 T=3 d=1\n1\n2\n".as_bytes()),
            Err(IngestError::RowCount {
                declared: 3,
                found: 2
            })
        ));
        assert!(matches!(
            read_csv("# shufscan features v2 T=1 d=1\n1\n".as_bytes()),
            Err(IngestError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_csv("# shufscan features v1 T=1 d=2\n1\n".as_bytes()),
            Err(IngestError::RowWidth {
                row: 0,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            read_csv("1,2\n3\n".as_bytes()),
            Err(IngestError::RowWidth {
                row: 1,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            read_csv("1,x\n".as_bytes()),
            Err(IngestError::Parse {
                row: 0,
                column: 1,
                ..
            })
        ));
        assert!(matches!(read_csv("".as_bytes()), Err(IngestError::Empty)));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_features(Path::new("/nonexistent/features.csv"), FeatureFormat::Csv);
        assert!(matches!(err, Err(IngestError::Io { .. })));
    }

    #[test]
    fn binary_rejects_bad_input() {
        let seq = random_seq(3, 2, 1);
        let mut bytes = Vec::new();
        write_binary(&seq, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 22 + 6 * 8);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(&bad[..]), Err(IngestError::Binary(_))));
        assert!(matches!(
            read_binary(&bytes[..bytes.len() - 1]),
            Err(IngestError::Binary(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            read_binary(&long[..]),
            Err(IngestError::Binary(_))
        ));
        let mut nan = bytes.clone();
        nan[22 + 8 * 3..22 + 8 * 4].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            read_binary(&nan[..]),
            Err(IngestError::NonFinite { row: 1, column: 1 })
        ));
    }

    #[test]
    fn frame_ids_must_be_unique() {
        let seq = random_seq(3, 1, 2);
        assert!(seq.clone().with_frame_ids(vec![1, 2, 3]).is_ok());
        assert!(seq.clone().with_frame_ids(vec![1, 2, 2]).is_err());
        assert!(seq.with_frame_ids(vec![1]).is_err());
    }

    #[test]
    fn ground_truth_parsing() {
        let truth = read_ground_truth("0\n1\n0\n".as_bytes()).unwrap();
        assert_eq!(truth.labels(), &[false, true, false]);
        assert!(matches!(
            read_ground_truth("0\n2\n".as_bytes()),
            Err(IngestError::Truth { line: 2, .. })
        ));
    }

    #[test]
    fn standardizer_constant_and_symmetric_columns() {
        let seq = FeatureSequence::new(array![[5.0, -1.0], [5.0, 1.0]], "t").unwrap();
        let p = fit_standardizer(&seq);
        assert_eq!(p.mean, vec![5.0, 0.0]);
        assert_eq!(p.scale, vec![1.0, 1.0]);
    }

    #[test]
    fn standardizer_identity_and_single_frame() {
        let seq = random_seq(7, 3, 3);
        let same = apply_standardizer(&seq, &StandardizerParams::identity(3)).unwrap();
        assert_eq!(same.frames(), seq.frames());

        let one = FeatureSequence::new(array![[1.5, -2.0, 7.0]], "t").unwrap();
        let p = fit_standardizer(&one);
        let z = apply_standardizer(&one, &p).unwrap();
        assert!(z.frames().iter().all(|&v| v == 0.0));

        assert!(matches!(
            apply_standardizer(&seq, &StandardizerParams::identity(2)),
            Err(IngestError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standardizer_idempotent() {
        let seq = random_seq(100, 4, 4);
        let p = fit_standardizer(&seq);
        let z = apply_standardizer(&seq, &p).unwrap();
        let q = fit_standardizer(&z);
        for j in 0..4 {
            assert!(q.mean[j].abs() <= 1e-9, "mean {}", q.mean[j]);
            assert!((q.scale[j] - 1.0).abs() <= 1e-9, "scale {}", q.scale[j]);
        }
    }

    #[test]
    fn pca_diagonal_covariance() {
        let seq = FeatureSequence::new(
            array![[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]],
            "t",
        )
        .unwrap();
        let m = fit_pca(&seq, 2).unwrap();
        assert!((m.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!((m.eigenvalues[1] - 1.0).abs() < 1e-12);
        let eye = Array2::<f64>::eye(2);
        assert!(m
            .components
            .iter()
            .zip(eye.iter())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn pca_rotated_45_degrees() {
        // Long axis along (1, 1)/sqrt(2): closed form for [[a, b], [b, a]]
        // gives eigenvalues a +- b with eigenvectors (1, +-1)/sqrt(2).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames = Array2::from_shape_fn((200, 2), |_| 0.0);
        let mut frames = frames;
        for mut row in frames.rows_mut() {
            let u: f64 = rng.random_range(-3.0..3.0);
            let v: f64 = rng.random_range(-0.3..0.3);
            row[0] = (u - v) / 2f64.sqrt();
            row[1] = (u + v) / 2f64.sqrt();
        }
        let seq = FeatureSequence::new(frames, "t").unwrap();
        let m = fit_pca(&seq, 1).unwrap();

        let cov = {
            let mean = seq.frames().mean_axis(Axis(0)).unwrap();
            let c = &seq.frames() - &mean;
            c.t().dot(&c) / 200.0
        };
        let (a, b, dd) = (cov[[0, 0]], cov[[0, 1]], cov[[1, 1]]);
        let tr = a + dd;
        let disc = ((a - dd) * (a - dd) / 4.0 + b * b).sqrt();
        let lambda1 = tr / 2.0 + disc;
        let v = array![b, lambda1 - a];
        let v = &v / v.dot(&v).sqrt();
        assert!((m.eigenvalues[0] - lambda1).abs() < 1e-9);
        assert!((m.components[[0, 0]] - v[0]).abs() < 1e-6);
        assert!((m.components[[1, 0]] - v[1]).abs() < 1e-6);
        let h = 1.0 / 2f64.sqrt();
        assert!((m.components[[0, 0]] - h).abs() < 0.05);
        assert!((m.components[[1, 0]] - h).abs() < 0.05);
    }

    #[test]
    fn pca_full_rank_round_trip_and_isometry() {
        let seq = random_seq(40, 5, 6);
        let m = fit_pca(&seq, 5).unwrap();
        let ctc = m.components.t().dot(&m.components);
        let eye = Array2::<f64>::eye(5);
        assert!(ctc
            .iter()
            .zip(eye.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-8));
        assert!(m.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));

        let p = project(&seq, &m).unwrap();
        let back = m.reconstruct(p.frames());
        let err = (&back - &seq.frames())
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err <= 1e-8, "reconstruction error {err}");

        for i in 0..10 {
            for j in i + 1..10 {
                let d0 = (&seq.frames().row(i) - &seq.frames().row(j))
                    .mapv(|v| v * v)
                    .sum();
                let d1 = (&p.frames().row(i) - &p.frames().row(j))
                    .mapv(|v| v * v)
                    .sum();
                assert!((d0.sqrt() - d1.sqrt()).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn projection_covariance_is_diagonal() {
        let seq = random_seq(300, 4, 7);
        let m = fit_pca(&seq, 3).unwrap();
        let p = project(&seq, &m).unwrap();
        let mean = p.frames().mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-9));
        let cov = p.frames().t().dot(&p.frames()) / 300.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { m.eigenvalues[i] } else { 0.0 };
                assert!((cov[[i, j]] - want).abs() <= 1e-6);
            }
        }
        // the mean row projects to zero
        let mean_row = FeatureSequence::new(m.mean.clone().insert_axis(Axis(0)), "m").unwrap();
        assert!(project(&mean_row, &m)
            .unwrap()
            .frames()
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pca_errors() {
        let seq = random_seq(5, 3, 8);
        assert!(matches!(
            fit_pca(&seq, 0),
            Err(IngestError::TargetDim { .. })
        ));
        assert!(matches!(
            fit_pca(&seq, 4),
            Err(IngestError::TargetDim { .. })
        ));
        let one = random_seq(1, 3, 8);
        assert!(matches!(fit_pca(&one, 1), Err(IngestError::TooFewFrames)));
        // rank-1 data
        let flat = FeatureSequence::new(
            array![
                [1.0, 2.0, 0.0],
                [2.0, 4.0, 0.0],
                [3.0, 6.0, 0.0],
                [4.0, 8.0, 0.0]
            ],
            "t",
        )
        .unwrap();
        assert!(fit_pca(&flat, 1).is_ok());
        assert!(matches!(
            fit_pca(&flat, 2),
            Err(IngestError::RankDeficient { rank: 1, target: 2 })
        ));
        let m = fit_pca(&seq, 2).unwrap();
        assert!(project(&random_seq(2, 2, 1), &m).is_err());
    }
}

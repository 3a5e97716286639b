//! Labelled feature matrices and the dataset CSV format.
//!
//! Layout: an optional `# n_classes=K` metadata line, a header row
//! `id,label[,clean_label],f0,...,f{d-1}`, then one row per instance.
//! Floats are written with 17 significant digits so a save/load cycle is
//! bitwise exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{RafniError, Result};
use crate::rng::rng_from_seed;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RafniError::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub ids: Vec<String>,
    pub features: Matrix,
    /// Labels the trainer sees.
    pub labels: Vec<usize>,
    /// Hidden ground truth, only read by the auditor.
    pub clean_labels: Option<Vec<usize>>,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        ids: Vec<String>,
        features: Matrix,
        labels: Vec<usize>,
        clean_labels: Option<Vec<usize>>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if ids.len() != n || labels.len() != n {
            return Err(RafniError::Shape(format!(
                "{} ids / {} labels for {n} feature rows",
                ids.len(),
                labels.len()
            )));
        }
        if let Some(clean) = &clean_labels {
            if clean.len() != n {
                return Err(RafniError::Shape(format!("{} clean labels for {n} rows", clean.len())));
            }
        }
        if n_classes < 2 {
            return Err(RafniError::InvalidArity(n_classes));
        }
        for &l in labels.iter().chain(clean_labels.iter().flatten()) {
            if l >= n_classes {
                return Err(RafniError::UnknownClass { class: l, n_classes });
            }
        }
        Ok(Self { ids, features, labels, clean_labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Ground-truth labels: `clean_labels` when present, otherwise `labels`.
    pub fn reference_labels(&self) -> &[usize] {
        self.clean_labels.as_deref().unwrap_or(&self.labels)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Format a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<LabeledDataset> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    let mut meta_classes = None;
    let mut line_offset = 0u64;
    // peek for the optional metadata line
    let buf = reader.fill_buf()?;
    if buf.first() == Some(&b'#') {
        reader.read_line(&mut first)?;
        line_offset = 1;
        for part in first.trim_start_matches('#').split(',') {
            if let Some((k, v)) = part.split_once('=') {
                if k.trim() == "n_classes" {
                    let k: usize = v.trim().parse().map_err(|_| RafniError::Parse {
                        line: 1,
                        msg: format!("bad n_classes value `{}`", v.trim()),
                    })?;
                    meta_classes = Some(k);
                }
            }
        }
    }

    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| RafniError::Parse { line: line_offset + 1, msg: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(RafniError::Parse {
            line: line_offset + 1,
            msg: "header must start with `id,label`".into(),
        });
    }
    let has_clean = cols.get(2) == Some(&"clean_label");
    let feat_start = if has_clean { 3 } else { 2 };
    for (j, name) in cols[feat_start..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(RafniError::Parse {
                line: line_offset + 1,
                msg: format!("expected feature column `f{j}`, found `{name}`"),
            });
        }
    }
    let d = cols.len() - feat_start;

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut clean = Vec::new();
    let mut data = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0) + line_offset;
            RafniError::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) + line_offset;
        if rec.len() != cols.len() {
            return Err(RafniError::Parse {
                line,
                msg: format!("expected {} fields, found {}", cols.len(), rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        let parse_label = |s: &str, what: &str| -> Result<usize> {
            s.trim().parse::<usize>().map_err(|_| RafniError::Label {
                line,
                msg: format!("{what} `{s}` is not a non-negative integer"),
            })
        };
        labels.push(parse_label(&rec[1], "label")?);
        if has_clean {
            clean.push(parse_label(&rec[2], "clean_label")?);
        }
        for (j, field) in rec.iter().skip(feat_start).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| RafniError::Type {
                line,
                column: format!("f{j}"),
                value: field.to_string(),
            })?;
            data.push(v);
        }
    }

    let max_label = labels.iter().chain(clean.iter()).copied().max();
    let n_classes = match (meta_classes, max_label) {
        (Some(k), Some(m)) if m >= k => {
            return Err(RafniError::Label {
                line: 1,
                msg: format!("label {m} out of range for n_classes={k}"),
            })
        }
        (Some(k), _) => k,
        (None, Some(m)) => m + 1,
        (None, None) => 2,
    };
    let n = ids.len();
    let features = Matrix::new(n, d, data)?;
    LabeledDataset::new(ids, features, labels, has_clean.then_some(clean), n_classes)
}

pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(ds: &LabeledDataset, w: &mut W) -> Result<()> {
    writeln!(w, "# n_classes={}", ds.n_classes)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    if ds.clean_labels.is_some() {
        header.push("clean_label".into());
    }
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    let mut csv = csv::WriterBuilder::new().from_writer(w);
    let io = |e: csv::Error| RafniError::Io(std::io::Error::other(e));
    csv.write_record(&header).map_err(io)?;
    for i in 0..ds.len() {
        let mut row = vec![ds.ids[i].clone(), ds.labels[i].to_string()];
        if let Some(clean) = &ds.clean_labels {
            row.push(clean[i].to_string());
        }
        row.extend(ds.features.row(i).iter().map(|&x| fmt_f64(x)));
        csv.write_record(&row).map_err(io)?;
    }
    csv.flush()?;
    Ok(())
}

/// Isotropic unit-variance Gaussian blobs, one per class, with centres at
/// pairwise distance at least `cluster_sep`. Classes are balanced (counts
/// differ by at most one) and `clean_label == label`.
pub fn gen_synthetic(n: usize, k: usize, d: usize, cluster_sep: f64, seed: u64) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(RafniError::InvalidArity(k));
    }
    if n < k {
        return Err(RafniError::Config(format!("n={n} must be at least k={k}")));
    }
    if d == 0 {
        return Err(RafniError::Config("d must be at least 1".into()));
    }
    if !(cluster_sep.is_finite() && cluster_sep >= 0.0) {
        return Err(RafniError::Config(format!("cluster_sep={cluster_sep} must be finite and >= 0")));
    }
    let mut rng = rng_from_seed(seed);

    // Rejection-sample centres in a cube, growing it whenever placement stalls.
    let mut side = cluster_sep.max(1.0) * (k as f64).powf(1.0 / d as f64) * 1.5;
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut stalls = 0;
    while centres.len() < k {
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-side / 2.0..side / 2.0)).collect();
        let ok = centres.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= cluster_sep
        });
        if ok {
            centres.push(c);
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 1000 {
                side *= 1.25;
                stalls = 0;
            }
        }
    }

    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * d);
    for &l in &labels {
        for &c in &centres[l] {
            let z: f64 = rng.sample(StandardNormal);
            data.push(c + z);
        }
    }
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    let features = Matrix::new(n, d, data)?;
    LabeledDataset::new(ids, features, labels.clone(), Some(labels), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let text = "id,label,f0,f1\na,0,1.5,2\nb,1,-3,4e-1\nc,1,0,0\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_classes, 2);
        assert_eq!(ds.features.row(1), &[-3.0, 0.4]);
        assert!(ds.clean_labels.is_none());
    }

    #[test]
    fn metadata_line_sets_class_count() {
        let text = "# n_classes=5\nid,label,f0\na,0,1\nb,1,2\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.n_classes, 5);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "id,label,f0,f1\na,0,1,2\nb,1,3\n";
        match read_dataset(text.as_bytes()) {
            Err(RafniError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_feature_is_type_error() {
        let text = "id,label,f0\na,0,abc\n";
        match read_dataset(text.as_bytes()) {
            Err(RafniError::Type { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "f0");
            }
            other => panic!("expected type error, got {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_is_label_error() {
        let text = "# n_classes=2\nid,label,f0\na,0,1\nb,2,1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(RafniError::Label { .. })));
        let text = "id,label,f0\na,-1,1\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(RafniError::Label { .. })));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ds = gen_synthetic(50, 3, 4, 3.0, 11).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(ds.ids, back.ids);
        assert_eq!(ds.labels, back.labels);
        assert_eq!(ds.clean_labels, back.clean_labels);
        let bits = |m: &Matrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ds.features), bits(&back.features));
    }

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let a = gen_synthetic(103, 4, 2, 5.0, 3).unwrap();
        let b = gen_synthetic(103, 4, 2, 5.0, 3).unwrap();
        assert_eq!(a, b);
        let counts = a.class_counts();
        let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(mx - mn <= 1, "{counts:?}");
        assert_eq!(a.clean_labels.as_ref().unwrap(), &a.labels);
    }

    #[test]
    fn synthetic_centres_respect_separation() {
        let ds = gen_synthetic(4000, 5, 3, 6.0, 9).unwrap();
        let mut means = vec![vec![0.0; 3]; 5];
        let counts = ds.class_counts();
        for i in 0..ds.len() {
            let l = ds.labels[i];
            for (m, &x) in means[l].iter_mut().zip(ds.features.row(i)) {
                *m += x / counts[l] as f64;
            }
        }
        for a in 0..5 {
            for b in a + 1..5 {
                let dist: f64 =
                    means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                // sample means wobble by ~1/sqrt(800) around the true centres
                assert!(dist > 6.0 - 0.3, "classes {a},{b} at {dist}");
            }
        }
    }
}

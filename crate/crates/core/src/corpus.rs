//! Sparse dataset ingestion (LIBSVM-style text), tf-idf with L2
//! normalization, and reproducible train/validation splits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed data line {0}")]
    MalformedLine(usize),
    #[error("non-finite feature value on line {0}")]
    NonFiniteValue(usize),
    #[error("duplicate feature id within row on line {0}")]
    DuplicateFeatureInRow(usize),
    #[error("split would leave train or validation empty")]
    DegenerateSplit,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse labeled instance matrix. Rows hold `(feature id, value)` pairs with
/// strictly increasing feature ids; labels are original leaf ids of the bound
/// taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_features: usize,
    rows: Vec<Vec<(u32, f64)>>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(num_features: usize, rows: Vec<Vec<(u32, f64)>>, labels: Vec<u32>) -> Self {
        debug_assert_eq!(rows.len(), labels.len());
        debug_assert!(rows.iter().all(|r| r.windows(2).all(|w| w[0].0 < w[1].0)
            && r.iter()
                .all(|e| (e.0 as usize) < num_features && e.1.is_finite())));
        Dataset {
            num_features,
            rows,
            labels,
        }
    }

    pub fn num_instances(&self) -> usize {
        self.rows.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Number of rows in which each feature occurs with a non-zero value.
    pub fn document_frequencies(&self) -> Vec<u32> {
        let mut df = vec![0u32; self.num_features];
        for row in &self.rows {
            for &(f, v) in row {
                if v != 0.0 {
                    df[f as usize] += 1;
                }
            }
        }
        df
    }

    /// Idf weights `ln(N / df)` from this dataset; features that never occur
    /// get weight 0 (they stay absent either way).
    pub fn idf_weights(&self) -> Vec<f64> {
        let n = self.num_instances() as f64;
        self.document_frequencies()
            .iter()
            .map(|&df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
            .collect()
    }

    /// tf-idf with L2 row normalization, computing idf on this dataset.
    /// Returns the transformed data and the idf weights so the same transform
    /// can be frozen and replayed on held-out data.
    pub fn tfidf_transform(&self) -> (Dataset, Vec<f64>) {
        let idf = self.idf_weights();
        (self.apply_tfidf(&idf), idf)
    }

    /// Applies frozen idf weights (`value := tf * idf`, then L2 normalize).
    /// Feature ids beyond the idf table get weight 0.
    pub fn apply_tfidf(&self, idf: &[f64]) -> Dataset {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let weighted: Vec<(u32, f64)> = row
                    .iter()
                    .map(|&(f, v)| (f, v * idf.get(f as usize).copied().unwrap_or(0.0)))
                    .collect();
                l2_normalize_row(weighted)
            })
            .collect();
        Dataset {
            num_features: self.num_features,
            rows,
            labels: self.labels.clone(),
        }
    }

    /// L2-normalizes every row; empty and all-zero rows pass through.
    pub fn l2_normalize(&self) -> Dataset {
        let rows = self
            .rows
            .iter()
            .map(|r| l2_normalize_row(r.clone()))
            .collect();
        Dataset {
            num_features: self.num_features,
            rows,
            labels: self.labels.clone(),
        }
    }

    /// New dataset containing the given instances, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            num_features: self.num_features,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Deterministic train/validation split per `spec`.
    pub fn split(&self, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
        let (train, val) = self.split_indices(spec)?;
        Ok((self.subset(&train), self.subset(&val)))
    }

    /// Index sets of the split: disjoint, covering `0..num_instances()`, and
    /// identical for identical `(self, spec)`.
    pub fn split_indices(&self, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DataError> {
        let n = self.num_instances();
        if n < 2 {
            return Err(DataError::DegenerateSplit);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut train = Vec::new();
        let mut val = Vec::new();

        if spec.stratified {
            let mut by_class: HashMap<u32, Vec<usize>> = HashMap::new();
            for (i, &l) in self.labels.iter().enumerate() {
                by_class.entry(l).or_default().push(i);
            }
            let mut classes: Vec<u32> = by_class.keys().copied().collect();
            classes.sort_unstable();
            for class in classes {
                let mut idx = by_class.remove(&class).unwrap();
                idx.shuffle(&mut rng);
                let nc = idx.len();
                let mut k = (spec.train_fraction * nc as f64).round_ties_even() as usize;
                if nc >= 2 {
                    k = k.max(1);
                }
                k = k.min(nc);
                train.extend_from_slice(&idx[..k]);
                val.extend_from_slice(&idx[k..]);
            }
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let k = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
            train.extend_from_slice(&idx[..k]);
            val.extend_from_slice(&idx[k..]);
        }
        if train.is_empty() || val.is_empty() {
            return Err(DataError::DegenerateSplit);
        }
        train.sort_unstable();
        val.sort_unstable();
        Ok((train, val))
    }

    /// Writes LIBSVM-style lines; `{}` float formatting round-trips f64
    /// exactly on reload.
    pub fn write_libsvm(&self, mut w: impl Write) -> Result<(), DataError> {
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            write!(w, "{label}")?;
            for &(f, v) in row {
                write!(w, " {f}:{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn l2_normalize_row(mut row: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    row.retain(|&(_, v)| v != 0.0);
    let norm = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut row {
            e.1 /= norm;
        }
    }
    row
}

/// Train/validation split parameters. The split is deterministic given the
/// seed; stratification keeps every class with two or more instances
/// represented in the train portion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 42,
            stratified: true,
        }
    }
}

/// Parses LIBSVM-style lines: `label idx:val idx:val ...`. With `one_based`
/// the on-disk indices start at 1 and are shifted down.
pub fn load_sparse(reader: impl BufRead, one_based: bool) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_feature: i64 = -1;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let label: u32 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or(DataError::MalformedLine(lineno))?;
        let mut row: Vec<(u32, f64)> = Vec::new();
        for tok in parts {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or(DataError::MalformedLine(lineno))?;
            let raw_idx: u32 = idx_s
                .parse()
                .map_err(|_| DataError::MalformedLine(lineno))?;
            let val: f64 = val_s
                .parse()
                .map_err(|_| DataError::MalformedLine(lineno))?;
            if !val.is_finite() {
                return Err(DataError::NonFiniteValue(lineno));
            }
            let idx = if one_based {
                raw_idx
                    .checked_sub(1)
                    .ok_or(DataError::MalformedLine(lineno))?
            } else {
                raw_idx
            };
            row.push((idx, val));
        }
        row.sort_unstable_by_key(|&(f, _)| f);
        if row.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(DataError::DuplicateFeatureInRow(lineno));
        }
        if let Some(&(f, _)) = row.last() {
            max_feature = max_feature.max(f as i64);
        }
        rows.push(row);
        labels.push(label);
    }
    Ok(Dataset {
        num_features: (max_feature + 1) as usize,
        rows,
        labels,
    })
}

/// Opens a data file, transparently decompressing `.gz` inputs.
pub fn open_data_reader(path: &Path) -> Result<Box<dyn BufRead>, DataError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let dec: Box<dyn Read> = Box::new(flate2::read::GzDecoder::new(file));
        Ok(Box::new(BufReader::new(dec)))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn load_sparse_path(path: &Path, one_based: bool) -> Result<Dataset, DataError> {
    load_sparse(open_data_reader(path)?, one_based)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn load(text: &str) -> Result<Dataset, DataError> {
        load_sparse(Cursor::new(text), false)
    }

    #[test]
    fn parses_and_sorts_rows() {
        let d = load("5 1:2.0 7:1.0\n").unwrap();
        assert_eq!(d.row(0), &[(1, 2.0), (7, 1.0)]);
        assert_eq!(d.label(0), 5);
        assert_eq!(d.num_features(), 8);

        let unordered = load("5 7:1.0 1:2.0\n").unwrap();
        assert_eq!(unordered.row(0), d.row(0));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            load("5 1:NaN\n"),
            Err(DataError::NonFiniteValue(1))
        ));
        assert!(matches!(
            load("5 1:inf\n"),
            Err(DataError::NonFiniteValue(1))
        ));
        assert!(matches!(
            load("x 1:1.0\n"),
            Err(DataError::MalformedLine(1))
        ));
        assert!(matches!(
            load("5 1:1.0\n5 3\n"),
            Err(DataError::MalformedLine(2))
        ));
        assert!(matches!(
            load("5 1:1.0 1:2.0\n"),
            Err(DataError::DuplicateFeatureInRow(1))
        ));
    }

    #[test]
    fn one_based_shifts_indices() {
        let d = load_sparse(Cursor::new("3 1:0.5 4:1.5\n"), true).unwrap();
        assert_eq!(d.row(0), &[(0, 0.5), (3, 1.5)]);
    }

    #[test]
    fn tfidf_ubiquitous_term_vanishes() {
        let d = load("1 1:1\n2 1:1\n").unwrap();
        let (t, idf) = d.tfidf_transform();
        assert_eq!(idf[1], 0.0);
        assert!(t.row(0).is_empty());
        assert!(t.row(1).is_empty());
    }

    #[test]
    fn tfidf_disjoint_terms_become_unit() {
        let d = load("1 1:1\n2 2:1\n").unwrap();
        let (t, _) = d.tfidf_transform();
        assert_eq!(t.row(0), &[(1, 1.0)]);
        assert_eq!(t.row(1), &[(2, 1.0)]);
    }

    /// Oracle: dense re-implementation of tf-idf + L2 on a 5x4 count matrix.
    #[test]
    fn tfidf_matches_dense_oracle() {
        let counts: [[f64; 4]; 5] = [
            [2.0, 0.0, 1.0, 0.0],
            [0.0, 3.0, 0.0, 1.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 2.0, 2.0],
            [3.0, 0.0, 0.0, 1.0],
        ];
        let rows: Vec<Vec<(u32, f64)>> = counts
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(f, &v)| (f as u32, v))
                    .collect()
            })
            .collect();
        let d = Dataset::new(4, rows, vec![0; 5]);
        let (t, _) = d.tfidf_transform();

        // independent dense computation
        let n = 5.0f64;
        let mut df = [0.0f64; 4];
        for r in &counts {
            for (f, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    df[f] += 1.0;
                }
            }
        }
        for (i, r) in counts.iter().enumerate() {
            let weighted: Vec<f64> = (0..4).map(|f| r[f] * (n / df[f]).ln()).collect();
            let norm = weighted.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expect: Vec<f64> = weighted
                .iter()
                .map(|v| if norm > 0.0 { v / norm } else { 0.0 })
                .collect();
            let mut got = [0.0f64; 4];
            for &(f, v) in t.row(i) {
                got[f as usize] = v;
            }
            for f in 0..4 {
                assert!(
                    (got[f] - expect[f]).abs() < 1e-9,
                    "row {i} feature {f}: {} vs {}",
                    got[f],
                    expect[f]
                );
            }
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm_and_renormalizing_is_identity() {
        let d = load("1 0:3 2:4\n2 1:2\n3 5:0.0\n").unwrap();
        let (t, _) = d.tfidf_transform();
        for i in 0..t.num_instances() {
            let norm = t.row(i).iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if !t.row(i).is_empty() {
                assert!((norm - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(t.l2_normalize(), t);
    }

    #[test]
    fn split_ninety_ten() {
        let rows = vec![vec![(0u32, 1.0)]; 10];
        let d = Dataset::new(1, rows, vec![7; 10]);
        let (train, val) = d.split(&SplitSpec::default()).unwrap();
        assert_eq!(train.num_instances(), 9);
        assert_eq!(val.num_instances(), 1);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let rows = vec![vec![(0u32, 1.0)]; 37];
        let labels: Vec<u32> = (0..37).map(|i| (i % 3) as u32).collect();
        let d = Dataset::new(1, rows, labels);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 9,
            stratified: true,
        };
        let (a_train, a_val) = d.split_indices(&spec).unwrap();
        let (b_train, b_val) = d.split_indices(&spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        let mut all = a_train.clone();
        all.extend_from_slice(&a_val);
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    /// Oracle: exact proportional stratification, 5 classes x 20 instances.
    #[test]
    fn stratified_split_is_exactly_proportional() {
        let rows = vec![vec![(0u32, 1.0)]; 100];
        let labels: Vec<u32> = (0..100).map(|i| (i / 20) as u32).collect();
        let d = Dataset::new(1, rows, labels.clone());
        let (train, _) = d.split_indices(&SplitSpec::default()).unwrap();
        for class in 0..5u32 {
            let n = train.iter().filter(|&&i| labels[i] == class).count();
            assert_eq!(n, 18, "class {class}");
        }
    }

    #[test]
    fn degenerate_splits_rejected() {
        let d = Dataset::new(1, vec![vec![(0, 1.0)]], vec![0]);
        assert!(matches!(
            d.split(&SplitSpec::default()),
            Err(DataError::DegenerateSplit)
        ));
    }

    #[test]
    fn libsvm_roundtrip_is_bit_exact() {
        let d = load("1 0:0.1 3:7.25 9:1e-3\n2 1:0.30000000000000004\n").unwrap();
        let mut buf = Vec::new();
        d.write_libsvm(&mut buf).unwrap();
        let d2 = load_sparse(Cursor::new(buf), false).unwrap();
        // loader sizes to max seen id, so compare rows/labels
        assert_eq!(d.rows(), d2.rows());
        assert_eq!(d.labels(), d2.labels());
    }

    #[test]
    fn gzip_inputs_are_sniffed() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        enc.write_all(b"4 0:1.5 2:2.5\n").unwrap();
        enc.finish().unwrap();
        let d = load_sparse_path(&path, false).unwrap();
        assert_eq!(d.row(0), &[(0, 1.5), (2, 2.5)]);
        assert_eq!(d.label(0), 4);
    }
}

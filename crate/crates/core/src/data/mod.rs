//! Dataset ingestion, synthetic data, stratified splits, and memory sampling.

mod partition;
mod pca;

pub use partition::{dirichlet_partition, pilot_partition, ClientPartition};
pub use pca::{pca_fit_transform, PcaTransform};

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

/// The classic 4-feature, 3-class Iris table, shipped with the crate.
const IRIS_CSV: &str = include_str!("../../assets/iris.csv");

/// A labeled dataset: an `n x d` feature matrix and dense class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("dataset: needs at least one row"));
        }
        if features.nrows() != labels.len() {
            return Err(Error::dim(format!(
                "dataset: {} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::OutOfRange(format!(
                "dataset: label {bad} with class_count {class_count}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("dataset features"));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows of the dataset at `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::OutOfRange(format!(
                "subset: row {bad} of {}",
                self.n()
            )));
        }
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Ok(Dataset {
            features,
            labels,
            class_count: self.class_count,
        })
    }

    /// Row indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_count];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// Per-class row counts.
    pub fn class_counts(&self) -> Vec<usize> {
        self.class_indices().iter().map(|v| v.len()).collect()
    }
}

/// Loads a CSV of `d` numeric feature columns followed by one label column.
/// Labels (strings or integers) are mapped to dense ids by first appearance.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, has_header)
}

/// The bundled Iris dataset: 150 rows, 4 features, 3 classes.
pub fn bundled_iris() -> Dataset {
    load_csv_reader(IRIS_CSV.as_bytes(), true).expect("bundled iris.csv is well-formed")
}

/// Like [`load_csv`], from any reader.
pub fn load_csv_reader<R: Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;

    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows.len() as u64 + 1);
        if record.len() < 2 {
            return Err(Error::Csv {
                line,
                msg: format!("need >= 2 columns (features + label), got {}", record.len()),
            });
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::Csv {
                    line,
                    msg: format!("ragged row: {} columns, expected {w}", record.len()),
                });
            }
        } else {
            width = Some(record.len());
        }
        let d = record.len() - 1;
        let mut feats = Vec::with_capacity(d);
        for (col, cell) in record.iter().take(d).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                line,
                msg: format!("non-numeric feature {cell:?} in column {col}"),
            })?;
            feats.push(v);
        }
        let label_cell = record.get(d).unwrap().to_string();
        let id = match label_names.iter().position(|n| n == &label_cell) {
            Some(id) => id,
            None => {
                label_names.push(label_cell);
                label_names.len() - 1
            }
        };
        rows.push(feats);
        labels.push(id);
    }

    if rows.is_empty() {
        return Err(Error::invalid("csv: no data rows"));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), d), flat).unwrap();
    Dataset::new(features, labels, label_names.len())
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Csv {
            line: pos.as_ref().map(|p| p.line()).unwrap_or(0),
            msg: format!("ragged row: {len} columns, expected {expected_len}"),
        },
        _ => Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        },
    }
}

/// Isotropic Gaussian blobs: `per_class_n` samples around each 2-D center.
pub fn make_blobs(
    class_count: usize,
    per_class_n: usize,
    centers: &[[f64; 2]],
    std: f64,
    seed: u64,
) -> Result<Dataset> {
    if centers.len() != class_count {
        return Err(Error::dim(format!(
            "centers: {} entries for {class_count} classes",
            centers.len()
        )));
    }
    if class_count == 0 || per_class_n == 0 {
        return Err(Error::invalid("make_blobs: class_count and per_class_n must be positive"));
    }
    if !(std >= 0.0) {
        return Err(Error::invalid(format!("std: must be >= 0, got {std}")));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rng::stream(seed, &[rng::tag::INIT, class_count as u64]);
    let mut feats = Vec::with_capacity(class_count * per_class_n * 2);
    let mut labels = Vec::with_capacity(class_count * per_class_n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class_n {
            feats.push(center[0] + std * normal.sample(&mut rng));
            feats.push(center[1] + std * normal.sample(&mut rng));
            labels.push(c);
        }
    }
    let features = Array2::from_shape_vec((labels.len(), 2), feats).unwrap();
    Dataset::new(features, labels, class_count)
}

/// Splits off a stratified `fraction` of rows (per class, seeded shuffle),
/// returning `(rest, held_out)`. Used for both the public/proxy slice and
/// the evaluation holdout.
pub fn split_public(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "fraction: must be in (0, 1), got {fraction}"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::tag::PUBLIC_SPLIT]);
    let mut held = Vec::new();
    let mut rest = Vec::new();
    for mut idxs in data.class_indices() {
        idxs.shuffle(&mut rng);
        let take = ((fraction * idxs.len() as f64).round() as usize).min(idxs.len());
        held.extend_from_slice(&idxs[..take]);
        rest.extend_from_slice(&idxs[take..]);
    }
    if held.is_empty() || rest.is_empty() {
        return Err(Error::invalid(format!(
            "fraction: {fraction} leaves one side of the split empty"
        )));
    }
    held.sort_unstable();
    rest.sort_unstable();
    Ok((data.subset(&rest)?, data.subset(&held)?))
}

/// Samples `m` distinct row indices of the public set, uniformly without
/// replacement; ascending. `m = public.n()` returns every index.
pub fn sample_memory(public: &Dataset, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > public.n() {
        return Err(Error::OutOfRange(format!(
            "memory size {m} for a public set of {}",
            public.n()
        )));
    }
    let mut rng = rng::stream(seed, &[rng::tag::MEMORY]);
    let mut idxs: Vec<usize> = (0..public.n()).collect();
    // Partial Fisher-Yates: the first m entries are a uniform sample.
    for i in 0..m {
        let j = i + (rng.gen::<u64>() as usize) % (idxs.len() - i);
        idxs.swap(i, j);
    }
    idxs.truncate(m);
    idxs.sort_unstable();
    Ok(idxs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_iris_shape() {
        let iris = bundled_iris();
        assert_eq!(iris.n(), 150);
        assert_eq!(iris.dim(), 4);
        assert_eq!(iris.class_count(), 3);
        assert_eq!(iris.class_counts(), vec![50, 50, 50]);
    }

    #[test]
    fn single_row_csv() {
        let d = load_csv_reader("1,2,A".as_bytes(), false).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.labels(), &[0]);
        assert_eq!(d.class_count(), 1);
    }

    #[test]
    fn labels_dense_by_first_appearance() {
        let d = load_csv_reader("1,2,B\n3,4,A\n5,6,B".as_bytes(), false).unwrap();
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.class_count(), 2);
    }

    #[test]
    fn ragged_row_reports_line_number() {
        let err = load_csv_reader("1,2,A\n3,4\n5,6,B".as_bytes(), false).unwrap_err();
        match err {
            Error::Csv { line, msg } => {
                assert_eq!(line, 2, "{msg}");
                assert!(msg.contains("ragged") || msg.contains("columns"), "{msg}");
            }
            other => panic!("expected Csv error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_feature_reports_line() {
        let err = load_csv_reader("1,2,A\nx,4,B".as_bytes(), false).unwrap_err();
        match err {
            Error::Csv { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Csv error, got {other:?}"),
        }
    }

    #[test]
    fn blobs_zero_std_hits_centers() {
        let centers = [[1.0, 2.0], [-3.0, 0.5]];
        let d = make_blobs(2, 5, &centers, 0.0, 1).unwrap();
        assert_eq!(d.n(), 10);
        for (row, &y) in d.features().rows().into_iter().zip(d.labels()) {
            assert_eq!(row[0], centers[y][0]);
            assert_eq!(row[1], centers[y][1]);
        }
    }

    #[test]
    fn blobs_balanced_labels() {
        let centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let d = make_blobs(3, 10, &centers, 0.3, 2).unwrap();
        assert_eq!(d.n(), 30);
        assert_eq!(d.class_counts(), vec![10, 10, 10]);
    }

    #[test]
    fn blobs_class_means_near_centers() {
        // CLT bound: |mean - center| <= 3 std / sqrt(n) per coordinate.
        let n = 4000;
        let std = 0.5;
        let centers = [[1.0, -2.0], [3.0, 3.0]];
        let d = make_blobs(2, n, &centers, std, 3).unwrap();
        let bound = 3.0 * std / (n as f64).sqrt();
        for c in 0..2 {
            let rows: Vec<usize> = (0..d.n()).filter(|&i| d.labels()[i] == c).collect();
            let sub = d.subset(&rows).unwrap();
            for k in 0..2 {
                let mean = sub.features().column(k).mean().unwrap();
                assert!(
                    (mean - centers[c][k]).abs() <= bound,
                    "class {c} coord {k}: mean {mean}"
                );
            }
        }
    }

    #[test]
    fn split_iris_holds_out_ten_per_class() {
        let iris = bundled_iris();
        let (train, public) = split_public(&iris, 0.2, 7).unwrap();
        assert_eq!(public.n(), 30);
        assert_eq!(public.class_counts(), vec![10, 10, 10]);
        assert_eq!(train.n(), 120);
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        // Unique feature rows so multiset bookkeeping identifies them.
        let csv: String = (0..30)
            .map(|i| format!("{i},{},{}", i * i, if i % 3 == 0 { "A" } else { "B" }))
            .collect::<Vec<_>>()
            .join("\n");
        let d = load_csv_reader(csv.as_bytes(), false).unwrap();
        let (rest, held) = split_public(&d, 0.3, 11).unwrap();
        assert_eq!(rest.n() + held.n(), d.n());
        let mut seen: Vec<f64> = rest
            .features()
            .column(0)
            .iter()
            .chain(held.features().column(0).iter())
            .cloned()
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_deterministic_per_seed() {
        let iris = bundled_iris();
        let a = split_public(&iris, 0.2, 7).unwrap();
        let b = split_public(&iris, 0.2, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = split_public(&iris, 0.2, 8).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn split_rejects_empty_side() {
        let d = load_csv_reader("1,2,A\n3,4,B".as_bytes(), false).unwrap();
        assert!(split_public(&d, 0.01, 1).is_err());
    }

    #[test]
    fn memory_full_and_single() {
        let iris = bundled_iris();
        let all = sample_memory(&iris, 150, 3).unwrap();
        assert_eq!(all, (0..150).collect::<Vec<_>>());
        let one = sample_memory(&iris, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0] < 150);
        assert!(sample_memory(&iris, 0, 3).is_err());
        assert!(sample_memory(&iris, 151, 3).is_err());
    }

    #[test]
    fn memory_sampling_is_roughly_uniform() {
        // Each of n indices should appear with frequency ~ m/n across seeds.
        let d = load_csv_reader(
            (0..20)
                .map(|i| format!("{i},{i},A"))
                .collect::<Vec<_>>()
                .join("\n")
                .as_bytes()
                .to_vec()
                .as_slice(),
            false,
        )
        .unwrap();
        let (n, m, trials) = (20usize, 5usize, 10_000usize);
        let mut counts = vec![0usize; n];
        for seed in 0..trials as u64 {
            for idx in sample_memory(&d, m, seed).unwrap() {
                counts[idx] += 1;
            }
        }
        let p = m as f64 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let expect = trials as f64 * p;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() <= 4.0 * sigma,
                "index {i}: count {c}, expected {expect} +- {sigma}"
            );
        }
    }
}

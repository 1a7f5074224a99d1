//! Tabular datasets: the synthetic parabola generator and CSV ingestion with
//! a fixed preprocessing pipeline.
//!
//! CSV preprocessing runs these stages in order, logging the table shape
//! after each one:
//!
//! 1. drop the named columns,
//! 2. drop every non-numeric feature column,
//! 3. drop rows with a missing value (a non-numeric target cell counts as
//!    missing),
//! 4. z-score normalize the features (population standard deviation); the
//!    target is left untouched.
//!
//! Normalization statistics come from the full table, before any
//! cross-validation split.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { generator: String },
    File { path: PathBuf, log: PreprocessLog },
    Derived,
}

/// Row-major feature matrix with its target column.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    target: Vec<f64>,
    n_features: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub provenance: Provenance,
}

impl TabularDataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        target: Vec<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one feature".into()));
        }
        if rows.len() != target.len() {
            return Err(Error::ShapeMismatch { expected: rows.len(), got: target.len() });
        }
        if rows.is_empty() {
            return Err(Error::EmptyAfterPreprocessing);
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for row in rows {
            if row.len() != n_features {
                return Err(Error::ShapeMismatch { expected: n_features, got: row.len() });
            }
            features.extend(row);
        }
        if features.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            features,
            target,
            n_features,
            feature_names,
            target_name: target_name.into(),
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> TabularDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut target = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            target.push(self.target[i]);
        }
        TabularDataset {
            features,
            target,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: Provenance::Derived,
        }
    }

    /// Writes the dataset as delimited text: feature columns, then the target.
    /// Values use the shortest representation that parses back exactly.
    pub fn dump_csv<W: std::io::Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        let header: Vec<&str> = self
            .feature_names
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.target_name.as_str()))
            .collect();
        w.write_record(&header).map_err(csv_io)?;
        for (row, y) in self.rows().zip(&self.target) {
            let rec: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| v.to_string()).collect();
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::ParseError { line: 0, message: format!("{other:?}") },
    }
}

/// `n` rows of `y = x^2 + e` with `x ~ U[-5, 5]` and `e ~ U[-5, 5]`.
pub fn synthetic_parabola<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TabularDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("synthetic dataset needs n >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-5.0..=5.0);
        let noise: f64 = rng.gen_range(-5.0..=5.0);
        rows.push(vec![x]);
        target.push(x * x + noise);
    }
    TabularDataset::new(
        rows,
        target,
        vec!["x".to_string()],
        "y",
        Provenance::Synthetic { generator: "parabola".into() },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub target_column: String,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    pub drop_non_numeric: bool,
    pub drop_rows_with_missing: bool,
    pub zscore_normalize: bool,
    /// Field delimiter, default `,`.
    #[serde(default = "default_delimiter")]
    pub delimiter: u8,
}

fn default_delimiter() -> u8 {
    b','
}

impl PreprocessSpec {
    /// Every stage enabled, nothing dropped by name.
    pub fn standard(target_column: impl Into<String>) -> Self {
        Self {
            target_column: target_column.into(),
            drop_columns: Vec::new(),
            drop_non_numeric: true,
            drop_rows_with_missing: true,
            zscore_normalize: true,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub n_rows: usize,
    /// Feature columns remaining (the target is not counted).
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub stages: Vec<StageLog>,
    /// Per-feature (mean, population std) used for normalization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normalization: Vec<(String, f64, f64)>,
}

/// Returns true for the tokens treated as missing: empty, `NA`, `NaN`
/// (case-insensitive).
pub fn is_missing_token(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str) -> Option<f64> {
    if is_missing_token(cell) {
        return None;
    }
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads delimited text with a header row and applies `spec`.
pub fn load_csv(path: &Path, spec: &PreprocessSpec) -> Result<TabularDataset> {
    let file = std::fs::File::open(path)?;
    let mut ds = read_csv(file, spec)?;
    if let Provenance::File { path: p, .. } = &mut ds.provenance {
        *p = path.to_path_buf();
    }
    Ok(ds)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, spec: &PreprocessSpec) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(&e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut cells: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_error(&e))?;
        cells.push(rec.iter().map(str::to_string).collect());
    }
    let target_idx = header
        .iter()
        .position(|h| *h == spec.target_column.trim())
        .ok_or_else(|| Error::MissingTargetColumn(spec.target_column.clone()))?;

    let mut log = PreprocessLog::default();
    let mut columns: Vec<usize> = (0..header.len()).filter(|&j| j != target_idx).collect();
    log.stages.push(StageLog {
        stage: "read".into(),
        n_rows: cells.len(),
        n_features: columns.len(),
        removed: Vec::new(),
    });

    // 1. drop by name
    let drop: Vec<&str> = spec.drop_columns.iter().map(|s| s.trim()).collect();
    let removed: Vec<String> = columns
        .iter()
        .filter(|&&j| drop.contains(&header[j].as_str()))
        .map(|&j| header[j].clone())
        .collect();
    columns.retain(|&j| !drop.contains(&header[j].as_str()));
    log.stages.push(StageLog {
        stage: "drop_columns".into(),
        n_rows: cells.len(),
        n_features: columns.len(),
        removed,
    });

    // 2. drop non-numeric feature columns
    if spec.drop_non_numeric {
        let numeric = |j: usize| cells.iter().all(|row| is_missing_token(&row[j]) || parse_cell(&row[j]).is_some());
        let removed: Vec<String> = columns.iter().filter(|&&j| !numeric(j)).map(|&j| header[j].clone()).collect();
        columns.retain(|&j| numeric(j));
        log.stages.push(StageLog {
            stage: "drop_non_numeric".into(),
            n_rows: cells.len(),
            n_features: columns.len(),
            removed,
        });
    }

    // 3. drop rows with missing values
    let mut rows = Vec::with_capacity(cells.len());
    let mut target = Vec::with_capacity(cells.len());
    let mut dropped = 0usize;
    for (i, row) in cells.iter().enumerate() {
        let y = parse_cell(&row[target_idx]);
        let xs: Vec<Option<f64>> = columns.iter().map(|&j| parse_cell(&row[j])).collect();
        match (y, xs.iter().all(Option::is_some)) {
            (Some(y), true) => {
                rows.push(xs.into_iter().map(Option::unwrap).collect::<Vec<f64>>());
                target.push(y);
            }
            _ if spec.drop_rows_with_missing => dropped += 1,
            _ => {
                return Err(Error::ParseError {
                    // header is line 1
                    line: i as u64 + 2,
                    message: "missing or non-numeric value".into(),
                })
            }
        }
    }
    if spec.drop_rows_with_missing {
        log.stages.push(StageLog {
            stage: "drop_rows_with_missing".into(),
            n_rows: rows.len(),
            n_features: columns.len(),
            removed: vec![format!("{dropped} rows")],
        });
    }
    if rows.is_empty() || columns.is_empty() {
        return Err(Error::EmptyAfterPreprocessing);
    }

    // 4. z-score features
    let names: Vec<String> = columns.iter().map(|&j| header[j].clone()).collect();
    if spec.zscore_normalize {
        let n = rows.len() as f64;
        for k in 0..columns.len() {
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n).sqrt();
            // constant columns are only centred
            let scale = if sd > 0.0 { sd } else { 1.0 };
            for r in rows.iter_mut() {
                r[k] = (r[k] - m) / scale;
            }
            log.normalization.push((names[k].clone(), m, sd));
        }
        log.stages.push(StageLog {
            stage: "zscore_normalize".into(),
            n_rows: rows.len(),
            n_features: columns.len(),
            removed: Vec::new(),
        });
    }

    TabularDataset::new(
        rows,
        target,
        names,
        header[target_idx].clone(),
        Provenance::File { path: PathBuf::new(), log },
    )
}

fn parse_error(e: &csv::Error) -> Error {
    Error::ParseError {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{mean, std_pop};

    fn spec() -> PreprocessSpec {
        PreprocessSpec::standard("y")
    }

    #[test]
    fn parabola_respects_construction_bounds() {
        let ds = synthetic_parabola(5_000, &mut stream(1, &[])).unwrap();
        assert_eq!(ds.n_features(), 1);
        for (row, &y) in ds.rows().zip(ds.target()) {
            let x = row[0];
            assert!((-5.0..=5.0).contains(&x));
            assert!(y >= x * x - 5.0 && y <= x * x + 5.0);
        }
        assert_eq!(synthetic_parabola(10, &mut stream(4, &[])).unwrap(), synthetic_parabola(10, &mut stream(4, &[])).unwrap());
        assert!(synthetic_parabola(0, &mut stream(4, &[])).is_err());
    }

    #[test]
    fn parabola_noise_is_centred() {
        let ds = synthetic_parabola(1_000_000, &mut stream(2, &[])).unwrap();
        let noise: Vec<f64> = ds.rows().zip(ds.target()).map(|(r, y)| y - r[0] * r[0]).collect();
        assert!(mean(&noise).abs() < 0.02);
    }

    const TABLE: &str = "\
Country,Year,a,b,Status,Population,y
X,2000,1.0,10,dev,5,3.0
X,2001,2.0,,dev,6,4.0
Y,2000,3.0,30,dev,NA,5.0
Y,2001,4.0,40,dev,7,oops
Z,2000,5.0,50,dev,8,7.0
";

    #[test]
    fn pipeline_stages_in_order() {
        let mut s = spec();
        s.drop_columns = vec!["Year".into(), "Population".into()];
        let ds = read_csv(TABLE.as_bytes(), &s).unwrap();
        assert_eq!(ds.feature_names, ["a", "b"]);
        // rows 2 (missing b) and 4 (non-numeric target) are dropped; the NA
        // population no longer matters because the column went first
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.target(), [3.0, 5.0, 7.0]);
        let Provenance::File { log, .. } = &ds.provenance else { panic!() };
        let stages: Vec<(&str, usize, usize)> =
            log.stages.iter().map(|s| (s.stage.as_str(), s.n_rows, s.n_features)).collect();
        assert_eq!(
            stages,
            [
                ("read", 5, 6),
                ("drop_columns", 5, 4),
                ("drop_non_numeric", 5, 2),
                ("drop_rows_with_missing", 3, 2),
                ("zscore_normalize", 3, 2),
            ]
        );
        // row count only falls at the drop-missing stage
        for w in log.stages.windows(2) {
            if w[1].stage != "drop_rows_with_missing" {
                assert_eq!(w[0].n_rows, w[1].n_rows);
            }
        }
    }

    #[test]
    fn normalized_columns_have_zero_mean_unit_std() {
        let ds = read_csv(TABLE.as_bytes(), &spec()).unwrap();
        for j in 0..ds.n_features() {
            let c = ds.column(j);
            assert!(mean(&c).abs() < 1e-9);
            // Year is constant on the surviving rows and is only centred
            let expected = if ds.feature_names[j] == "Year" { 0.0 } else { 1.0 };
            assert!((std_pop(&c) - expected).abs() < 1e-9, "{}", ds.feature_names[j]);
        }
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let once = read_csv(TABLE.as_bytes(), &spec()).unwrap();
        let mut buf = Vec::new();
        once.dump_csv(&mut buf, b',').unwrap();
        let twice = read_csv(buf.as_slice(), &spec()).unwrap();
        assert_eq!(once.n_rows(), twice.n_rows());
        assert_eq!(once.feature_names, twice.feature_names);
        assert_eq!(once.target(), twice.target());
        for (a, b) in once.rows().zip(twice.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dump_round_trips_exactly() {
        let ds = synthetic_parabola(50, &mut stream(3, &[])).unwrap();
        let mut buf = Vec::new();
        ds.dump_csv(&mut buf, b';').unwrap();
        let raw = PreprocessSpec {
            drop_non_numeric: false,
            drop_rows_with_missing: false,
            zscore_normalize: false,
            delimiter: b';',
            ..spec()
        };
        let back = read_csv(buf.as_slice(), &raw).unwrap();
        assert_eq!(back.target(), ds.target());
        assert!(back.rows().zip(ds.rows()).all(|(a, b)| a == b));
    }

    #[test]
    fn missing_target_column() {
        let s = PreprocessSpec::standard("life");
        assert!(matches!(read_csv(TABLE.as_bytes(), &s), Err(Error::MissingTargetColumn(_))));
    }

    #[test]
    fn ragged_rows_report_line() {
        let text = "a,y\n1,2\n3\n";
        match read_csv(text.as_bytes(), &spec()) {
            Err(Error::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_tokens() {
        for t in ["", " ", "NA", "na", "NaN", "nan"] {
            assert!(is_missing_token(t), "{t:?}");
        }
        assert!(!is_missing_token("0"));
    }

    #[test]
    fn nothing_left_is_an_error() {
        let text = "a,y\n,1\n2,\n";
        assert!(matches!(read_csv(text.as_bytes(), &spec()), Err(Error::EmptyAfterPreprocessing)));
    }

    #[test]
    fn header_names_are_trimmed() {
        let text = "a , Life expectancy \n1,2\n2,3\n";
        let ds = read_csv(text.as_bytes(), &PreprocessSpec::standard("Life expectancy")).unwrap();
        assert_eq!(ds.feature_names, ["a"]);
        assert_eq!(ds.target_name, "Life expectancy");
    }
}

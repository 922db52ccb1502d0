//! Tabular ingestion and scaling.
//!
//! Numeric covariates are passed through their training empirical CDF
//! (`F(x) = #{train <= x} / N`), categorical covariates with `C` levels become
//! `C` dummy columns, and the outcome is either standardized or mapped onto
//! `[-0.5, 0.5]`. Everything downstream assumes covariates live in `[0, 1]`.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values of one column, either parsed numbers or raw text.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The value at `row` rendered as a string (used as a factor level).
    pub fn level(&self, row: usize) -> String {
        match self {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Text(v) => v[row].clone(),
        }
    }

    /// The value at `row` as a number, if it parses.
    pub fn number(&self, row: usize) -> Option<f64> {
        match self {
            ColumnData::Numeric(v) => Some(v[row]),
            ColumnData::Text(v) => v[row].trim().parse::<f64>().ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column { name: name.into(), data: ColumnData::Numeric(values) }
    }

    pub fn text<S: Into<String>>(name: impl Into<String>, values: Vec<S>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Text(values.into_iter().map(Into::into).collect()),
        }
    }

    /// Numeric values, parsing text cells if needed.
    pub fn numbers(&self) -> Result<Vec<f64>> {
        (0..self.data.len())
            .map(|i| {
                self.data.number(i).ok_or_else(|| {
                    Error::SchemaMismatch(format!(
                        "column `{}` row {} is not numeric: `{}`",
                        self.name,
                        i + 1,
                        self.data.level(i)
                    ))
                })
            })
            .collect()
    }
}

/// Column type overrides applied on top of CSV type inference.
#[derive(Debug, Clone, Default)]
pub struct TypeOverrides {
    pub categorical: Vec<String>,
    pub numeric: Vec<String>,
}

/// A rectangular table of named, typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    nrows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let nrows = columns.first().map_or(0, |c| c.data.len());
        for c in &columns {
            if c.data.len() != nrows {
                return Err(Error::DimensionMismatch { expected: nrows, found: c.data.len() });
            }
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(Table { columns, nrows })
    }

    /// Reads an RFC-4180 CSV with a header row. A column is numeric when every
    /// cell parses as a finite number, otherwise categorical.
    pub fn from_csv_reader<R: Read>(reader: R, overrides: &TypeOverrides) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                cells[j].push(field.to_string());
            }
        }
        for name in overrides.categorical.iter().chain(&overrides.numeric) {
            if !headers.contains(name) {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }
        let mut columns = Vec::with_capacity(headers.len());
        for (name, raw) in headers.into_iter().zip(cells) {
            let parsed: Option<Vec<f64>> = raw
                .iter()
                .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            let data = if overrides.categorical.contains(&name) {
                ColumnData::Text(raw)
            } else if overrides.numeric.contains(&name) {
                match parsed {
                    Some(v) => ColumnData::Numeric(v),
                    None => {
                        return Err(Error::SchemaMismatch(format!(
                            "column `{name}` was declared numeric but has non-numeric cells"
                        )))
                    }
                }
            } else {
                match parsed {
                    Some(v) if !raw.is_empty() => ColumnData::Numeric(v),
                    _ if raw.is_empty() => ColumnData::Numeric(Vec::new()),
                    _ => ColumnData::Text(raw),
                }
            };
            columns.push(Column { name, data });
        }
        Table::new(columns)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, overrides: &TypeOverrides) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), overrides)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    ColumnData::Text(v) => ColumnData::Text(rows.iter().map(|&i| v[i].clone()).collect()),
                },
            })
            .collect();
        Table { columns, nrows: rows.len() }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for i in 0..self.nrows {
            wtr.write_record(self.columns.iter().map(|c| match &c.data {
                ColumnData::Numeric(v) => format!("{}", v[i]),
                ColumnData::Text(v) => v[i].clone(),
            }))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-column map onto `[0, 1]` (numeric) or a one-hot block (categorical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    NumericQuantile {
        /// Sorted unique training values.
        knots: Vec<f64>,
        /// ECDF at each knot.
        cdf: Vec<f64>,
    },
    CategoricalDummy { levels: Vec<String> },
}

impl ColumnTransform {
    pub fn fit_numeric(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTable);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate value".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let mut knots = Vec::new();
        let mut cdf = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if i + 1 == sorted.len() || sorted[i + 1] != v {
                knots.push(v);
                cdf.push((i + 1) as f64 / n);
            }
        }
        Ok(ColumnTransform::NumericQuantile { knots, cdf })
    }

    pub fn fit_categorical(levels: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = levels.into_iter().collect();
        ColumnTransform::CategoricalDummy { levels: set.into_iter().collect() }
    }

    /// Number of design-matrix columns this transform produces.
    pub fn width(&self) -> usize {
        match self {
            ColumnTransform::NumericQuantile { .. } => 1,
            ColumnTransform::CategoricalDummy { levels } => levels.len(),
        }
    }

    /// ECDF of a numeric value: exact at training knots, linear in between,
    /// 0 below the smallest knot and 1 at or above the largest.
    pub fn quantile(&self, x: f64) -> f64 {
        let ColumnTransform::NumericQuantile { knots, cdf } = self else {
            panic!("quantile called on a categorical transform");
        };
        if x < knots[0] {
            return 0.0;
        }
        match knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => cdf[i],
            Err(i) if i >= knots.len() => 1.0,
            Err(i) => {
                let (x0, x1) = (knots[i - 1], knots[i]);
                let (f0, f1) = (cdf[i - 1], cdf[i]);
                let t = (x - x0) / (x1 - x0);
                (f0 + t * (f1 - f0)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        match self {
            ColumnTransform::CategoricalDummy { levels } => levels.iter().position(|l| l == level),
            ColumnTransform::NumericQuantile { .. } => None,
        }
    }
}

/// A contiguous block of design-matrix columns owned by one original variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub variable: String,
    pub start: usize,
    pub len: usize,
}

/// Mapping from original variables to dummy-expanded design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub blocks: Vec<ColumnBlock>,
}

impl ColumnMap {
    /// One block of width one per column, named `X.1`, `X.2`, ...
    pub fn identity(p: usize) -> Self {
        ColumnMap {
            blocks: (0..p)
                .map(|j| ColumnBlock { variable: format!("X.{}", j + 1), start: j, len: 1 })
                .collect(),
        }
    }

    pub fn num_columns(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn num_variables(&self) -> usize {
        self.blocks.len()
    }

    /// Index of the variable owning design column `col`.
    pub fn variable_of(&self, col: usize) -> Option<usize> {
        self.blocks.iter().position(|b| col >= b.start && col < b.start + b.len)
    }

    pub fn find(&self, variable: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.variable == variable)
    }

    /// Sums a per-column vector over each variable's block.
    pub fn aggregate<T: Copy + std::iter::Sum<T>>(&self, per_column: &[T]) -> Vec<T> {
        self.blocks
            .iter()
            .map(|b| per_column[b.start..b.start + b.len].iter().copied().sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Mean 0, sample variance 1.
    Standardize,
    /// Affine map onto `[-0.5, 0.5]`.
    UnitInterval,
    /// No scaling (binary outcomes).
    Identity,
}

/// Affine outcome transform `y' = (y - location) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    pub mode: ScaleMode,
    pub location: f64,
    pub scale: f64,
}

impl OutcomeScaler {
    pub fn identity() -> Self {
        OutcomeScaler { mode: ScaleMode::Identity, location: 0.0, scale: 1.0 }
    }

    pub fn fit(y: &[f64], mode: ScaleMode) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyTable);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite outcome value".into()));
        }
        match mode {
            ScaleMode::Standardize => {
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = if y.len() > 1 {
                    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                if var <= 0.0 {
                    return Err(Error::ZeroVarianceOutcome);
                }
                Ok(OutcomeScaler { mode, location: mean, scale: var.sqrt() })
            }
            ScaleMode::UnitInterval => {
                let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    return Err(Error::ZeroRangeOutcome);
                }
                Ok(OutcomeScaler { mode, location: 0.5 * (lo + hi), scale: hi - lo })
            }
            ScaleMode::Identity => Ok(Self::identity()),
        }
    }

    pub fn scale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.location) / self.scale).collect()
    }

    pub fn unscale(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.unscale_one(x)).collect()
    }

    pub fn unscale_one(&self, v: f64) -> f64 {
        v * self.scale + self.location
    }
}

/// Inverse of the outcome transform applied elementwise.
pub fn unscale_predictions(scaler: &OutcomeScaler, v: &[f64]) -> Vec<f64> {
    scaler.unscale(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTransform {
    pub name: String,
    pub transform: ColumnTransform,
}

/// Fitted covariate transforms, reusable on new tables with the training schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSet {
    pub covariates: Vec<CovariateTransform>,
}

impl TransformSet {
    /// Fits a transform for every column not in `excluded`.
    pub fn fit(table: &Table, excluded: &[&str]) -> Result<Self> {
        if table.nrows() == 0 {
            return Err(Error::EmptyTable);
        }
        for name in excluded {
            table.require(name)?;
        }
        let mut covariates = Vec::new();
        for col in table.columns() {
            if excluded.contains(&col.name.as_str()) {
                continue;
            }
            let transform = match &col.data {
                ColumnData::Numeric(v) => ColumnTransform::fit_numeric(v)?,
                ColumnData::Text(v) => ColumnTransform::fit_categorical(v.iter().cloned()),
            };
            covariates.push(CovariateTransform { name: col.name.clone(), transform });
        }
        Ok(TransformSet { covariates })
    }

    pub fn column_map(&self) -> ColumnMap {
        let mut start = 0;
        let blocks = self
            .covariates
            .iter()
            .map(|c| {
                let len = c.transform.width();
                let b = ColumnBlock { variable: c.name.clone(), start, len };
                start += len;
                b
            })
            .collect();
        ColumnMap { blocks }
    }

    /// Names of the dummy-expanded design columns (`var` or `var=level`).
    pub fn design_column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.covariates {
            match &c.transform {
                ColumnTransform::NumericQuantile { .. } => out.push(c.name.clone()),
                ColumnTransform::CategoricalDummy { levels } => {
                    out.extend(levels.iter().map(|l| format!("{}={}", c.name, l)))
                }
            }
        }
        out
    }

    /// Maps a table with the training schema into the scaled design matrix.
    pub fn apply(&self, table: &Table) -> Result<DMatrix<f64>> {
        let map = self.column_map();
        let n = table.nrows();
        let mut x = DMatrix::<f64>::zeros(n, map.num_columns());
        for (cov, block) in self.covariates.iter().zip(&map.blocks) {
            let col = table.column(&cov.name).ok_or_else(|| {
                Error::SchemaMismatch(format!("missing covariate column `{}`", cov.name))
            })?;
            match &cov.transform {
                t @ ColumnTransform::NumericQuantile { .. } => {
                    let values = col.numbers()?;
                    for (i, v) in values.into_iter().enumerate() {
                        if !v.is_finite() {
                            return Err(Error::InvalidArgument(format!(
                                "non-finite value in column `{}`",
                                cov.name
                            )));
                        }
                        x[(i, block.start)] = t.quantile(v);
                    }
                }
                t @ ColumnTransform::CategoricalDummy { .. } => {
                    for i in 0..n {
                        let level = col.data.level(i);
                        let k = t.level_index(&level).ok_or_else(|| Error::UnseenLevel {
                            column: cov.name.clone(),
                            level: level.clone(),
                        })?;
                        x[(i, block.start + k)] = 1.0;
                    }
                }
            }
        }
        Ok(x)
    }
}

/// Scaled training data.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// N x P' design matrix with entries in `[0, 1]`.
    pub x: DMatrix<f64>,
    /// Scaled outcome.
    pub y: Vec<f64>,
    pub column_map: ColumnMap,
    pub scaler: OutcomeScaler,
}

/// Fits covariate and outcome transforms on a training table.
///
/// Every column except the outcome and `exclude` becomes a covariate.
pub fn fit_transforms(
    table: &Table,
    outcome: &str,
    mode: ScaleMode,
    exclude: &[&str],
) -> Result<(Dataset, TransformSet)> {
    if table.nrows() == 0 {
        return Err(Error::EmptyTable);
    }
    let ycol = table.require(outcome)?;
    let y_raw = match &ycol.data {
        ColumnData::Numeric(v) => v.clone(),
        ColumnData::Text(_) => return Err(Error::NonNumericOutcome(outcome.to_string())),
    };
    let scaler = OutcomeScaler::fit(&y_raw, mode)?;
    build_dataset(table, outcome, scaler.scale(&y_raw), scaler, exclude)
}

/// As [`fit_transforms`] for a binary outcome given as 0/1 numbers or a
/// two-level factor (first sorted level is 0). The outcome is not scaled.
pub fn fit_transforms_binary(
    table: &Table,
    outcome: &str,
    exclude: &[&str],
) -> Result<(Dataset, TransformSet, Vec<String>)> {
    if table.nrows() == 0 {
        return Err(Error::EmptyTable);
    }
    let (y, levels) = encode_binary(table.require(outcome)?)?;
    let (ds, ts) = build_dataset(table, outcome, y, OutcomeScaler::identity(), exclude)?;
    Ok((ds, ts, levels))
}

/// Encodes a binary column as 0/1, returning the level labels for 0 and 1.
pub fn encode_binary(col: &Column) -> Result<(Vec<f64>, Vec<String>)> {
    match &col.data {
        ColumnData::Numeric(v) => {
            if let Some(bad) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
                return Err(Error::NonBinaryOutcome(format!(
                    "column `{}` contains {bad}",
                    col.name
                )));
            }
            Ok((v.clone(), vec!["0".into(), "1".into()]))
        }
        ColumnData::Text(v) => {
            let levels: Vec<String> =
                v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            if levels.len() > 2 {
                return Err(Error::NonBinaryOutcome(format!(
                    "column `{}` has {} levels",
                    col.name,
                    levels.len()
                )));
            }
            let y = v.iter().map(|s| if *s == levels[0] { 0.0 } else { 1.0 }).collect();
            Ok((y, levels))
        }
    }
}

fn build_dataset(
    table: &Table,
    outcome: &str,
    y: Vec<f64>,
    scaler: OutcomeScaler,
    exclude: &[&str],
) -> Result<(Dataset, TransformSet)> {
    let mut excluded: Vec<&str> = exclude.to_vec();
    excluded.push(outcome);
    let transforms = TransformSet::fit(table, &excluded)?;
    let x = transforms.apply(table)?;
    let column_map = transforms.column_map();
    Ok((Dataset { x, y, column_map, scaler }, transforms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::new(vec![
            Column::numeric("a", vec![10.0, 20.0, 30.0]),
            Column::text("c", vec!["x", "y", "x"]),
            Column::numeric("Y", vec![1.0, 2.0, 4.0]),
        ])
        .unwrap()
    }

    #[test]
    fn ecdf_top_and_tie_rule() {
        let t = ColumnTransform::fit_numeric(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.quantile(4.0), 1.0);
        let t = ColumnTransform::fit_numeric(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(t.quantile(20.0), 2.0 / 3.0);
        let t = ColumnTransform::fit_numeric(&[1.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(t.quantile(1.0), 0.5);
    }

    #[test]
    fn ecdf_clamps_and_interpolates() {
        let t = ColumnTransform::fit_numeric(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(t.quantile(-5.0), 0.0);
        assert_eq!(t.quantile(100.0), 1.0);
        // between (10, 1/3) and (20, 2/3)
        let expected = 1.0 / 3.0 + 0.25 * (2.0 / 3.0 - 1.0 / 3.0);
        assert!((t.quantile(12.5) - expected).abs() < 1e-15);
    }

    #[test]
    fn apply_on_training_is_identical() {
        let tab = table();
        let (ds, ts) = fit_transforms(&tab, "Y", ScaleMode::Standardize, &[]).unwrap();
        assert_eq!(ts.apply(&tab).unwrap(), ds.x);
        assert_eq!(ds.x.ncols(), 3);
        assert_eq!(ts.design_column_names(), vec!["a", "c=x", "c=y"]);
    }

    #[test]
    fn dummy_rows_sum_to_one() {
        let (ds, _) = fit_transforms(&table(), "Y", ScaleMode::Standardize, &[]).unwrap();
        for i in 0..3 {
            assert_eq!(ds.x[(i, 1)] + ds.x[(i, 2)], 1.0);
        }
    }

    #[test]
    fn unseen_level_is_an_error() {
        let (_, ts) = fit_transforms(&table(), "Y", ScaleMode::Standardize, &[]).unwrap();
        let new = Table::new(vec![Column::numeric("a", vec![1.0]), Column::text("c", vec!["z"])]).unwrap();
        assert!(matches!(ts.apply(&new), Err(Error::UnseenLevel { .. })));
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let (_, ts) = fit_transforms(&table(), "Y", ScaleMode::Standardize, &[]).unwrap();
        let new = Table::new(vec![Column::numeric("a", vec![1.0])]).unwrap();
        assert!(matches!(ts.apply(&new), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn outcome_errors() {
        let tab = table();
        assert!(matches!(
            fit_transforms(&tab, "nope", ScaleMode::Standardize, &[]),
            Err(Error::UnknownColumn(_))
        ));
        let flat = Table::new(vec![Column::numeric("Y", vec![2.0, 2.0]), Column::numeric("a", vec![0.0, 1.0])]).unwrap();
        assert!(matches!(
            fit_transforms(&flat, "Y", ScaleMode::UnitInterval, &[]),
            Err(Error::ZeroRangeOutcome)
        ));
        assert!(matches!(
            fit_transforms(&flat, "Y", ScaleMode::Standardize, &[]),
            Err(Error::ZeroVarianceOutcome)
        ));
        let empty = Table::new(vec![Column::numeric("Y", vec![])]).unwrap();
        assert!(matches!(
            fit_transforms(&empty, "Y", ScaleMode::Standardize, &[]),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn standardize_moments() {
        let y = [3.0, 1.5, 7.25, -2.0, 0.5];
        let s = OutcomeScaler::fit(&y, ScaleMode::Standardize).unwrap();
        let z = s.scale(&y);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unit_interval_hits_endpoints() {
        let y = [3.0, 1.5, 7.25, -2.0];
        let s = OutcomeScaler::fit(&y, ScaleMode::UnitInterval).unwrap();
        let z = s.scale(&y);
        assert_eq!(z.iter().copied().fold(f64::INFINITY, f64::min), -0.5);
        assert_eq!(z.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.5);
    }

    #[test]
    fn unscale_center() {
        let s = OutcomeScaler { mode: ScaleMode::Standardize, location: 5.0, scale: 2.0 };
        assert_eq!(unscale_predictions(&s, &[0.0]), vec![5.0]);
    }

    #[test]
    fn binary_encoding() {
        let c = Column::text("y", vec!["no", "yes", "no"]);
        let (y, levels) = encode_binary(&c).unwrap();
        assert_eq!(y, vec![0.0, 1.0, 0.0]);
        assert_eq!(levels, vec!["no", "yes"]);
        assert!(encode_binary(&Column::numeric("y", vec![0.0, 2.0])).is_err());
        assert!(encode_binary(&Column::text("y", vec!["a", "b", "c"])).is_err());
    }

    #[test]
    fn csv_type_inference() {
        let csv = "a,b,c\n1,x,3\n2.5,y,4\n";
        let t = Table::from_csv_reader(csv.as_bytes(), &TypeOverrides::default()).unwrap();
        assert!(matches!(t.require("a").unwrap().data, ColumnData::Numeric(_)));
        assert!(matches!(t.require("b").unwrap().data, ColumnData::Text(_)));
        let ov = TypeOverrides { categorical: vec!["c".into()], numeric: vec![] };
        let t = Table::from_csv_reader(csv.as_bytes(), &ov).unwrap();
        assert!(matches!(t.require("c").unwrap().data, ColumnData::Text(_)));
    }
}

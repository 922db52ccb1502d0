//! Posterior summaries: inclusion probabilities, partial dependence, error metrics.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::FittedModel;
use crate::preprocess::{ColumnMap, ColumnTransform, Table};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableSelectionSummary {
    pub variables: Vec<String>,
    /// Posterior inclusion probability of each original variable.
    pub post_probs: Vec<f64>,
    /// Indices (into `variables`) with inclusion probability at least 0.5.
    pub median_probability_model: Vec<usize>,
    /// Mean number of branches using each variable.
    pub varimp: Vec<f64>,
}

impl VariableSelectionSummary {
    pub fn selected_names(&self) -> Vec<&str> {
        self.median_probability_model.iter().map(|&j| self.variables[j].as_str()).collect()
    }
}

/// Summarizes per-iteration split counts over design columns by original variable.
pub fn posterior_probs(counts: &[Vec<usize>], map: &ColumnMap) -> Result<VariableSelectionSummary> {
    let p = map.num_columns();
    let v = map.num_variables();
    let mut used = vec![0usize; v];
    let mut total = vec![0usize; v];
    for row in counts {
        if row.len() != p {
            return Err(Error::DimensionMismatch { expected: p, found: row.len() });
        }
        for (j, c) in map.aggregate(row).into_iter().enumerate() {
            total[j] += c;
            if c >= 1 {
                used[j] += 1;
            }
        }
    }
    let s = counts.len().max(1) as f64;
    let post_probs: Vec<f64> = used.iter().map(|&u| u as f64 / s).collect();
    let median_probability_model = (0..v).filter(|&j| post_probs[j] >= 0.5).collect();
    Ok(VariableSelectionSummary {
        variables: map.blocks.iter().map(|b| b.variable.clone()).collect(),
        post_probs,
        median_probability_model,
        varimp: total.iter().map(|&t| t as f64 / s).collect(),
    })
}

/// A grid point for partial dependence.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum GridValue {
    Number(f64),
    Level(String),
}

impl std::fmt::Display for GridValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridValue::Number(v) => write!(f, "{v}"),
            GridValue::Level(l) => f.write_str(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdRecord {
    pub draw_index: usize,
    pub grid_value: GridValue,
    pub pd_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialDependence {
    pub variable: String,
    pub grid: Vec<GridValue>,
    /// `num_save x grid.len()`
    pub pd: DMatrix<f64>,
}

impl PartialDependence {
    pub fn mean(&self) -> Vec<f64> {
        crate::models::column_means(&self.pd)
    }

    /// Long format, grid-major.
    pub fn records(&self) -> Vec<PdRecord> {
        let mut out = Vec::with_capacity(self.pd.len());
        for (g, value) in self.grid.iter().enumerate() {
            for d in 0..self.pd.nrows() {
                out.push(PdRecord { draw_index: d, grid_value: value.clone(), pd_value: self.pd[(d, g)] });
            }
        }
        out
    }
}

/// Evenly spaced numeric grid from `min` to `max` with `steps` points.
pub fn numeric_grid(min: f64, max: f64, steps: usize) -> Vec<GridValue> {
    match steps {
        0 => vec![],
        1 => vec![GridValue::Number(min)],
        _ => (0..steps)
            .map(|i| GridValue::Number(min + (max - min) * i as f64 / (steps - 1) as f64))
            .collect(),
    }
}

/// All training levels of a categorical covariate, or `None` for a numeric one.
pub fn training_levels(model: &FittedModel, variable: &str) -> Result<Option<Vec<GridValue>>> {
    let cov = find_covariate(model, variable)?;
    Ok(match &cov {
        ColumnTransform::CategoricalDummy { levels } => Some(levels.iter().cloned().map(GridValue::Level).collect()),
        ColumnTransform::NumericQuantile { .. } => None,
    })
}

fn find_covariate<'a>(model: &'a FittedModel, variable: &str) -> Result<&'a ColumnTransform> {
    model
        .info
        .transforms
        .covariates
        .iter()
        .find(|c| c.name == variable)
        .map(|c| &c.transform)
        .ok_or_else(|| Error::UnknownColumn(variable.to_string()))
}

/// Partial dependence of the mean function on `variable`: for each grid value
/// and saved draw, the average prediction over `background` with that
/// covariate overwritten. A categorical grid value sets its whole dummy block.
pub fn partial_dependence(
    model: &FittedModel,
    background: &Table,
    variable: &str,
    grid: &[GridValue],
) -> Result<PartialDependence> {
    if !model.trees_cached() {
        return Err(Error::TreesNotCached);
    }
    let transform = find_covariate(model, variable)?;
    let map = model.info.transforms.column_map();
    let block = map.blocks[map.find(variable).expect("covariate has a block")].clone();
    let x = model.design(background)?;
    let z = model.linear_design(background)?;
    let n = x.nrows();
    let mut pd = DMatrix::zeros(model.draws.len(), grid.len());
    for (g, value) in grid.iter().enumerate() {
        let mut xg = x.clone();
        match (transform, value) {
            (t @ ColumnTransform::NumericQuantile { .. }, GridValue::Number(v)) => {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("grid values must be finite".into()));
                }
                xg.column_mut(block.start).fill(t.quantile(*v));
            }
            (t @ ColumnTransform::CategoricalDummy { .. }, GridValue::Level(l)) => {
                let k = t
                    .level_index(l)
                    .ok_or_else(|| Error::UnseenLevel { column: variable.to_string(), level: l.clone() })?;
                for j in 0..block.len {
                    xg.column_mut(block.start + j).fill(if j == k { 1.0 } else { 0.0 });
                }
            }
            (ColumnTransform::NumericQuantile { .. }, GridValue::Level(l)) => {
                return Err(Error::InvalidArgument(format!("`{variable}` is numeric; got level `{l}`")))
            }
            (ColumnTransform::CategoricalDummy { .. }, GridValue::Number(v)) => {
                return Err(Error::InvalidArgument(format!("`{variable}` is categorical; got number {v}")))
            }
        }
        let pred = model.predict_design(&xg, &z)?;
        for d in 0..pred.mu.nrows() {
            pd[(d, g)] = pred.mu.row(d).sum() / n as f64;
        }
    }
    Ok(PartialDependence { variable: variable.to_string(), grid: grid.to_vec(), pd })
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

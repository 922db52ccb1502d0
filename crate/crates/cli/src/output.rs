//! Draw tables, summary reports and other files written by the CLI.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use softbart::models::{
    column_means, FittedModel, GbartFitResult, Prediction, ProbitFitResult, VcFitResult, FitResult,
};
use softbart::preprocess::Table;
use softbart::summaries::{posterior_probs, rmse, PdRecord, VariableSelectionSummary};

use crate::{sidecar, CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// `draw, obs_1, ..., obs_N`, one row per saved draw.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["draw".to_string()];
    header.extend((1..=m.ncols()).map(|j| format!("obs_{j}")));
    w.write_record(&header).map_err(io_err)?;
    for d in 0..m.nrows() {
        let mut rec = vec![d.to_string()];
        rec.extend(m.row(d).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Per-row posterior means of the prediction and its components.
pub fn write_means(path: &Path, pred: &Prediction) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["row".to_string(), "mu".to_string()];
    header.extend(pred.components.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(io_err)?;
    let mut cols = vec![pred.mu_mean()];
    cols.extend(pred.components.iter().map(|(_, m)| column_means(m)));
    for i in 0..pred.mu.ncols() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(cols.iter().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn write_records(path: Option<&Path>, records: &[PdRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(["draw_index", "grid_value", "pd_value"]).map_err(io_err)?;
    for r in records {
        w.write_record([r.draw_index.to_string(), r.grid_value.to_string(), r.pd_value.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_varselect(path: Option<&Path>, vs: &VariableSelectionSummary) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(["variable", "pip", "varimp", "selected"]).map_err(io_err)?;
    for (j, name) in vs.variables.iter().enumerate() {
        let selected = vs.median_probability_model.contains(&j);
        w.write_record([name.clone(), vs.post_probs[j].to_string(), vs.varimp[j].to_string(), selected.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Everything a fit writes besides the archive.
pub struct FitOutputs {
    pub model: FittedModel,
    /// Draws of the fitted mean (probabilities for probit).
    train: DMatrix<f64>,
    test: DMatrix<f64>,
    /// Extra named draw tables.
    extra: Vec<(&'static str, DMatrix<f64>)>,
    coefficients: Option<DMatrix<f64>>,
    levels: Vec<String>,
}

impl FitOutputs {
    pub fn regression(f: FitResult) -> Self {
        FitOutputs {
            train: f.y_hat_train,
            test: f.y_hat_test,
            extra: vec![],
            coefficients: None,
            levels: vec![],
            model: f.model,
        }
    }

    pub fn probit(f: ProbitFitResult) -> Self {
        FitOutputs {
            train: f.p_train,
            test: f.p_test,
            extra: vec![("r_train", f.r_train)],
            coefficients: None,
            levels: f.levels,
            model: f.model,
        }
    }

    pub fn vc(f: VcFitResult) -> Self {
        FitOutputs {
            train: f.mu_train,
            test: f.mu_test,
            extra: vec![("alpha_train", f.alpha_train), ("beta_train", f.beta_train)],
            coefficients: None,
            levels: vec![],
            model: f.model,
        }
    }

    pub fn gbart(f: GbartFitResult) -> Self {
        FitOutputs {
            train: f.mu_train,
            test: f.mu_test,
            extra: vec![("r_train", f.r_train), ("eta_train", f.eta_train)],
            coefficients: Some(f.beta),
            levels: vec![],
            model: f.model,
        }
    }

    pub fn write_draws(&self, out: &Path) -> CliResult<()> {
        write_matrix(&sidecar(out, "train.csv"), &self.train)?;
        if self.test.ncols() > 0 {
            write_matrix(&sidecar(out, "test.csv"), &self.test)?;
        }
        for (name, m) in &self.extra {
            write_matrix(&sidecar(out, &format!("{name}.csv")), m)?;
        }
        let mut w = csv::Writer::from_writer(create(&sidecar(out, "sigma.csv"))?);
        w.write_record(["draw", "sigma"]).map_err(io_err)?;
        for (d, s) in self.model.sigma_draws().iter().enumerate() {
            w.write_record([d.to_string(), s.to_string()]).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        if let Some(b) = &self.coefficients {
            let mut w = csv::Writer::from_writer(create(&sidecar(out, "coefficients.csv"))?);
            let mut header = vec!["draw".to_string()];
            header.extend(self.model.info.linear_columns.iter().cloned());
            w.write_record(&header).map_err(io_err)?;
            for d in 0..b.nrows() {
                let mut rec = vec![d.to_string()];
                rec.extend(b.row(d).iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(io_err)?;
            }
            w.flush().map_err(io_err)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct VariableRow {
    variable: String,
    pip: f64,
    varimp: f64,
}

#[derive(Serialize)]
struct ForestReport {
    forest: usize,
    variables: Vec<VariableRow>,
    median_probability_model: Vec<String>,
}

#[derive(Serialize)]
struct Coefficient {
    column: String,
    mean: f64,
}

#[derive(Serialize)]
pub struct Summary {
    model: &'static str,
    outcome: String,
    n_train: usize,
    n_test: usize,
    num_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_misclassification: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_misclassification: Option<f64>,
    sigma_mean: f64,
    forests: Vec<ForestReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    coefficients: Vec<Coefficient>,
}

fn error_rate(p: &[f64], labels: &[f64]) -> f64 {
    let wrong = p.iter().zip(labels).filter(|(p, y)| (**p > 0.5) != (**y == 1.0)).count();
    wrong as f64 / p.len().max(1) as f64
}

impl Summary {
    pub fn build(o: &FitOutputs, train: &Table, test: Option<&Table>) -> CliResult<Self> {
        let info = &o.model.info;
        let outcome = &info.outcome;
        let probit = !o.levels.is_empty();
        let labels = |t: &Table| -> CliResult<Option<Vec<f64>>> {
            let Some(col) = t.column(outcome) else { return Ok(None) };
            if probit {
                Ok(Some((0..t.nrows()).map(|i| f64::from(col.data.level(i) == o.levels[1])).collect()))
            } else {
                Ok(Some(col.numbers()?))
            }
        };
        let metric = |draws: &DMatrix<f64>, t: &Table| -> CliResult<Option<f64>> {
            if draws.ncols() == 0 || t.nrows() == 0 {
                return Ok(None);
            }
            let Some(y) = labels(t)? else { return Ok(None) };
            let m = column_means(draws);
            Ok(Some(if probit { error_rate(&m, &y) } else { rmse(&m, &y)? }))
        };
        let train_m = metric(&o.train, train)?;
        let test_m = match test {
            Some(t) => metric(&o.test, t)?,
            None => None,
        };
        let sigma = o.model.sigma_draws();
        let map = info.transforms.column_map();
        let forests = (0..o.model.num_forests())
            .map(|f| {
                let vs = posterior_probs(&o.model.counts(f), &map)?;
                Ok(ForestReport {
                    forest: f,
                    median_probability_model: vs.selected_names().iter().map(|s| s.to_string()).collect(),
                    variables: vs
                        .variables
                        .iter()
                        .enumerate()
                        .map(|(j, v)| VariableRow { variable: v.clone(), pip: vs.post_probs[j], varimp: vs.varimp[j] })
                        .collect(),
                })
            })
            .collect::<softbart::Result<Vec<_>>>()?;
        let coefficients = match &o.coefficients {
            Some(b) => info
                .linear_columns
                .iter()
                .zip(column_means(b))
                .map(|(c, mean)| Coefficient { column: c.clone(), mean })
                .collect(),
            None => vec![],
        };
        Ok(Summary {
            model: info.kind.as_str(),
            outcome: outcome.clone(),
            n_train: train.nrows(),
            n_test: test.map_or(0, Table::nrows),
            num_draws: o.model.draws.len(),
            train_rmse: train_m.filter(|_| !probit),
            test_rmse: test_m.filter(|_| !probit),
            train_misclassification: train_m.filter(|_| probit),
            test_misclassification: test_m.filter(|_| probit),
            sigma_mean: sigma.iter().sum::<f64>() / sigma.len().max(1) as f64,
            forests,
            coefficients,
        })
    }

    pub fn write_json(&self, path: &Path) -> CliResult<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {} (outcome {})", self.model, self.outcome);
        let _ = writeln!(s, "rows: {} train, {} test; draws: {}", self.n_train, self.n_test, self.num_draws);
        let line = |s: &mut String, name: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{name}: {v:.6}");
            }
        };
        line(&mut s, "train rmse", self.train_rmse);
        line(&mut s, "test rmse", self.test_rmse);
        line(&mut s, "train misclassification", self.train_misclassification);
        line(&mut s, "test misclassification", self.test_misclassification);
        let _ = writeln!(s, "sigma posterior mean: {:.6}", self.sigma_mean);
        for c in &self.coefficients {
            let _ = writeln!(s, "coefficient {}: {:.6}", c.column, c.mean);
        }
        for f in &self.forests {
            let _ = writeln!(s, "forest {} median probability model: {}", f.forest, f.median_probability_model.join(" "));
            let mut top: Vec<&VariableRow> = f.variables.iter().filter(|v| v.pip > 0.0).collect();
            top.sort_by(|a, b| b.pip.total_cmp(&a.pip));
            for v in top.iter().take(10) {
                let _ = writeln!(s, "  {:<20} pip {:.3}  varimp {:.3}", v.variable, v.pip, v.varimp);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_rate_counts_wrong_sides() {
        assert_eq!(error_rate(&[0.9, 0.2, 0.6, 0.4], &[1.0, 0.0, 0.0, 0.0]), 0.25);
    }

    #[test]
    fn matrix_csv_parses_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-300, 3.5, 0.0, 1.0 / 3.0]);
        write_matrix(&p, &m).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), vec!["draw", "obs_1", "obs_2", "obs_3"]);
        for (d, rec) in r.records().enumerate() {
            let rec = rec.unwrap();
            for j in 0..3 {
                assert_eq!(rec[j + 1].parse::<f64>().unwrap().to_bits(), m[(d, j)].to_bits());
            }
        }
    }
}

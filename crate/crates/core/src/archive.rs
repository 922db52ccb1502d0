//! Model persistence as JSON Lines: one header record describing the model,
//! then one record per saved iteration.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FittedModel, ModelInfo, SavedDraw};
use crate::preprocess::ColumnMap;
use crate::trees::{Gate, Node, SoftTree};

pub const FORMAT: &str = "softbart-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(flatten)]
    info: ModelInfo,
    design_columns: Vec<String>,
    num_draws: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NodeRecord {
    Leaf { mu: f64 },
    Split { variable: String, dummy: usize, column: usize, cutpoint: f64, left: Box<NodeRecord>, right: Box<NodeRecord> },
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeRecord {
    /// `None` for hard trees.
    tau: Option<f64>,
    root: NodeRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct DrawRecord {
    iteration: usize,
    sigma: f64,
    counts: Vec<Vec<usize>>,
    coefficients: Vec<f64>,
    forests: Vec<Vec<TreeRecord>>,
}

fn encode_node(node: &Node, map: &ColumnMap) -> Result<NodeRecord> {
    Ok(match node {
        Node::Leaf { mu } => NodeRecord::Leaf { mu: *mu },
        Node::Branch { var, cut, left, right } => {
            let b = map
                .variable_of(*var)
                .ok_or_else(|| Error::Archive(format!("split column {var} outside the design")))?;
            let block = &map.blocks[b];
            NodeRecord::Split {
                variable: block.variable.clone(),
                dummy: var - block.start,
                column: *var,
                cutpoint: *cut,
                left: Box::new(encode_node(left, map)?),
                right: Box::new(encode_node(right, map)?),
            }
        }
    })
}

fn decode_node(rec: NodeRecord, map: &ColumnMap) -> Result<Node> {
    Ok(match rec {
        NodeRecord::Leaf { mu } => Node::Leaf { mu },
        NodeRecord::Split { variable, dummy, column, cutpoint, left, right } => {
            let b = map
                .find(&variable)
                .ok_or_else(|| Error::Archive(format!("split on unknown variable `{variable}`")))?;
            let block = &map.blocks[b];
            if dummy >= block.len || block.start + dummy != column {
                return Err(Error::Archive(format!("inconsistent split column for `{variable}`")));
            }
            Node::branch(column, cutpoint, decode_node(*left, map)?, decode_node(*right, map)?)
        }
    })
}

fn encode_tree(tree: &SoftTree, map: &ColumnMap) -> Result<TreeRecord> {
    let tau = match tree.gate {
        Gate::Soft(t) => Some(t),
        Gate::Hard => None,
    };
    Ok(TreeRecord { tau, root: encode_node(&tree.root, map)? })
}

fn decode_tree(rec: TreeRecord, map: &ColumnMap) -> Result<SoftTree> {
    let gate = match rec.tau {
        Some(t) if t > 0.0 => Gate::Soft(t),
        Some(_) => return Err(Error::Archive("non-positive bandwidth".into())),
        None => Gate::Hard,
    };
    Ok(SoftTree { root: decode_node(rec.root, map)?, gate })
}

pub fn write_model<W: Write>(model: &FittedModel, mut w: W) -> Result<()> {
    let map = model.info.transforms.column_map();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        info: model.info.clone(),
        design_columns: model.info.transforms.design_column_names(),
        num_draws: model.draws.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (i, d) in model.draws.iter().enumerate() {
        let forests = d
            .forests
            .iter()
            .map(|f| f.iter().map(|t| encode_tree(t, &map)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let rec = DrawRecord {
            iteration: i,
            sigma: d.sigma,
            counts: d.counts.clone(),
            coefficients: d.coefficients.clone(),
            forests,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<FittedModel> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::Archive("empty archive".into()))??;
    let probe: serde_json::Value = serde_json::from_str(&first)?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
        return Err(Error::Archive("not a model archive".into()));
    }
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == VERSION as u64 => {}
        Some(v) => return Err(Error::Archive(format!("unsupported archive version {v} (expected {VERSION})"))),
        None => return Err(Error::Archive("missing archive version".into())),
    }
    let header: Header = serde_json::from_str(&first)?;
    let map = header.info.transforms.column_map();
    if header.design_columns != header.info.transforms.design_column_names() {
        return Err(Error::Archive("design columns disagree with the stored transforms".into()));
    }
    let mut draws = Vec::with_capacity(header.num_draws);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DrawRecord = serde_json::from_str(&line)?;
        if rec.iteration != draws.len() {
            return Err(Error::Archive(format!("draw {} out of order", rec.iteration)));
        }
        let forests = rec
            .forests
            .into_iter()
            .map(|f| f.into_iter().map(|t| decode_tree(t, &map)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        draws.push(SavedDraw { sigma: rec.sigma, forests, counts: rec.counts, coefficients: rec.coefficients });
    }
    if draws.len() != header.num_draws {
        return Err(Error::Archive(format!("expected {} draws, found {}", header.num_draws, draws.len())));
    }
    Ok(FittedModel { info: header.info, draws })
}

pub fn save(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_model(model, std::io::BufWriter::new(f))
}

pub fn load(path: impl AsRef<Path>) -> Result<FittedModel> {
    read_model(std::fs::File::open(path)?)
}

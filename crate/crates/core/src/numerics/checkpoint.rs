//! Plain-text model checkpoints.
//!
//! ```text
//! format concept-forge-model/1
//! meta role encoder
//! layers 2
//! layer 0 in 3 out 4 activation leaky_relu:0.01 dropout 0.1
//! weights <out*in values, row-major>
//! bias <out values>
//! layer 1 ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a write/read cycle
//! is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use super::activation::Activation;
use super::mlp::{DenseLayer, MlpModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "concept-forge-model/1";

/// Free-form key/value metadata stored alongside the weights.
pub type Metadata = BTreeMap<String, String>;

pub fn write_checkpoint(model: &MlpModel, meta: &Metadata) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format {MODEL_FORMAT}");
    for (k, v) in meta {
        let _ = writeln!(out, "meta {k} {v}");
    }
    let _ = writeln!(out, "layers {}", model.layers().len());
    for (k, layer) in model.layers().iter().enumerate() {
        let _ = writeln!(
            out,
            "layer {k} in {} out {} activation {} dropout {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation,
            layer.dropout_rate
        );
        out.push_str("weights");
        for w in layer.weights.iter() {
            let _ = write!(out, " {w}");
        }
        out.push_str("\nbias");
        for b in layer.bias.iter() {
            let _ = write!(out, " {b}");
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

pub fn read_checkpoint(text: &str) -> Result<(MlpModel, Metadata)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());

    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    match header.split_once(' ') {
        Some(("format", MODEL_FORMAT)) => {}
        _ => return Err(bad(&format!("expected `format {MODEL_FORMAT}`, got `{header}`"))),
    }

    let mut meta = Metadata::new();
    let count_line = loop {
        let line = lines.next().ok_or_else(|| bad("missing `layers` line"))?;
        match line.strip_prefix("meta ") {
            Some(rest) => {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
            }
            None => break line,
        }
    };
    let count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad(&format!("bad layer count line `{count_line}`")))?;

    let mut layers = Vec::with_capacity(count);
    for k in 0..count {
        let head = lines.next().ok_or_else(|| bad("truncated layer list"))?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        if fields.len() != 10
            || fields[0] != "layer"
            || fields[2] != "in"
            || fields[4] != "out"
            || fields[6] != "activation"
            || fields[8] != "dropout"
        {
            return Err(bad(&format!("bad layer header `{head}`")));
        }
        if fields[1].parse::<usize>().ok() != Some(k) {
            return Err(bad(&format!("layer index out of order at `{head}`")));
        }
        let in_dim: usize = fields[3].parse().map_err(|_| bad("bad `in` dim"))?;
        let out_dim: usize = fields[5].parse().map_err(|_| bad("bad `out` dim"))?;
        let activation: Activation = fields[7].parse()?;
        let dropout: f64 = fields[9].parse().map_err(|_| bad("bad dropout rate"))?;

        let weights = parse_values(lines.next(), "weights", in_dim * out_dim)?;
        let bias = parse_values(lines.next(), "bias", out_dim)?;
        let weights = Array2::from_shape_vec((out_dim, in_dim), weights)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(DenseLayer::new(weights, Array1::from(bias), activation, dropout)?);
    }
    if lines.next() != Some("end") {
        return Err(bad("missing `end` marker"));
    }
    Ok((MlpModel::new(layers)?, meta))
}

fn parse_values(line: Option<&str>, key: &str, expected: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::Checkpoint(format!("missing `{key}` line")))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Checkpoint(format!("expected `{key}` line")));
    }
    let values = parts
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad number `{p}` in `{key}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Checkpoint(format!(
            "`{key}` has {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn save_checkpoint(path: &Path, model: &MlpModel, meta: &Metadata) -> Result<String> {
    let text = write_checkpoint(model, meta);
    std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Loads a checkpoint and returns it with the SHA-256 of the file bytes.
pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, Metadata, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (model, meta) = read_checkpoint(&text)?;
    Ok((model, meta, sha256_hex(text.as_bytes())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

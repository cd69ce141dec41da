//! Model checkpoint text format, version 1.
//!
//! ```text
//! semrel-model 1
//! input_dim <n>
//! rmsprop <learning_rate> <rho> <epsilon>
//! train <batch_size> <epochs> <patience> <seed> <learning_rate> <rho>     (optional)
//! trunk <count>
//! layer <in_dim> <out_dim> <activation>
//! weights <out_dim * in_dim values, row-major>
//! biases <out_dim values>
//! cache_weights <...>
//! cache_biases <...>
//! heads <count>
//! layer ...                                                              (as above)
//! end
//! ```
//!
//! Reals are written in Rust's shortest round-trip exponent notation, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{MultiTaskModel, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, LayerOptimizer, Matrix, RmsPropConfig};

pub const CHECKPOINT_MAGIC: &str = "semrel-model 1";

fn push_reals(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

fn push_layer(out: &mut String, layer: &DenseLayer, opt: &LayerOptimizer) {
    let _ = writeln!(
        out,
        "layer {} {} {}",
        layer.in_dim(),
        layer.out_dim(),
        layer.activation.name()
    );
    push_reals(out, "weights", layer.weights.as_slice());
    push_reals(out, "biases", &layer.biases);
    push_reals(out, "cache_weights", &opt.weights.cache);
    push_reals(out, "cache_biases", &opt.biases.cache);
}

pub fn write_checkpoint<W: Write>(
    mut writer: W,
    model: &MultiTaskModel,
    config: Option<&TrainConfig>,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "input_dim {}", model.input_dim());
    let opt = model.optimizer_config();
    let _ = writeln!(out, "rmsprop {:e} {:e} {:e}", opt.learning_rate, opt.rho, opt.epsilon);
    if let Some(c) = config {
        let _ = writeln!(
            out,
            "train {} {} {} {} {:e} {:e}",
            c.batch_size, c.epochs, c.patience, c.seed, c.learning_rate, c.rho
        );
    }
    let _ = writeln!(out, "trunk {}", model.trunk.len());
    for (l, o) in model.trunk.iter().zip(&model.trunk_opt) {
        push_layer(&mut out, l, o);
    }
    let _ = writeln!(out, "heads {}", model.heads.len());
    for (l, o) in model.heads.iter().zip(&model.head_opt) {
        push_layer(&mut out, l, o);
    }
    out.push_str("end\n");
    writer.write_all(out.as_bytes())?;
    writer.flush()?;
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &MultiTaskModel, config: Option<&TrainConfig>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model, config)?;
    fs::write(path, buf)?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_record(&mut self, key: &str) -> Result<Vec<String>> {
        let line = self
            .inner
            .next()
            .ok_or_else(|| Error::format(self.line_no + 1, format!("unexpected end of file, expected {key}")))??;
        self.line_no += 1;
        let mut fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.first().map(String::as_str) != Some(key) {
            return Err(self.err(format!("expected record {key:?}")));
        }
        fields.remove(0);
        Ok(fields)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.line_no, msg)
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number {s:?}")))
    }

    fn reals(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let fields = self.next_record(key)?;
        if fields.len() != expected {
            return Err(self.err(format!("{key} has {} values, expected {expected}", fields.len())));
        }
        fields.iter().map(|f| self.num(f)).collect()
    }

    fn layer(&mut self, opt: RmsPropConfig) -> Result<(DenseLayer, LayerOptimizer)> {
        let f = self.next_record("layer")?;
        if f.len() != 3 {
            return Err(self.err("layer record needs in_dim, out_dim and activation"));
        }
        let (in_dim, out_dim): (usize, usize) = (self.num(&f[0])?, self.num(&f[1])?);
        let act = Activation::parse(&f[2]).ok_or_else(|| self.err(format!("unknown activation {:?}", f[2])))?;
        let weights = self.reals("weights", in_dim * out_dim)?;
        let biases = self.reals("biases", out_dim)?;
        let layer = DenseLayer::new(Matrix::from_vec(out_dim, in_dim, weights)?, biases, act)
            .map_err(|e| self.err(e.to_string()))?;
        let mut o = LayerOptimizer::for_layer(&layer, opt);
        o.weights.cache = self.reals("cache_weights", in_dim * out_dim)?;
        o.biases.cache = self.reals("cache_biases", out_dim)?;
        Ok((layer, o))
    }
}

/// Reads a checkpoint, returning the model and the training configuration if one was stored.
pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<(MultiTaskModel, Option<TrainConfig>)> {
    let mut lines = Lines {
        inner: reader.lines(),
        line_no: 0,
    };
    let first = lines
        .inner
        .next()
        .ok_or_else(|| Error::format(1, "empty checkpoint"))??;
    lines.line_no = 1;
    if first.trim() != CHECKPOINT_MAGIC {
        return Err(Error::format(1, format!("not a checkpoint (expected {CHECKPOINT_MAGIC:?})")));
    }
    let f = lines.next_record("input_dim")?;
    let input_dim: usize = lines.num(f.first().map(String::as_str).unwrap_or(""))?;
    let f = lines.next_record("rmsprop")?;
    if f.len() != 3 {
        return Err(lines.err("rmsprop record needs 3 values"));
    }
    let opt = RmsPropConfig {
        learning_rate: lines.num(&f[0])?,
        rho: lines.num(&f[1])?,
        epsilon: lines.num(&f[2])?,
    };

    let mut config = None;
    let mut next = lines
        .inner
        .next()
        .ok_or_else(|| Error::format(lines.line_no + 1, "unexpected end of file"))??;
    lines.line_no += 1;
    if next.starts_with("train ") {
        let f: Vec<&str> = next.split_whitespace().skip(1).collect();
        if f.len() != 6 {
            return Err(lines.err("train record needs 6 values"));
        }
        config = Some(TrainConfig {
            batch_size: lines.num(f[0])?,
            epochs: lines.num(f[1])?,
            patience: lines.num(f[2])?,
            seed: lines.num(f[3])?,
            learning_rate: lines.num(f[4])?,
            rho: lines.num(f[5])?,
        });
        next = lines
            .inner
            .next()
            .ok_or_else(|| Error::format(lines.line_no + 1, "unexpected end of file"))??;
        lines.line_no += 1;
    }
    let n_trunk: usize = match next.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["trunk", n] => lines.num(n)?,
        _ => return Err(lines.err("expected record \"trunk\"")),
    };
    let mut trunk = Vec::new();
    let mut trunk_opt = Vec::new();
    for _ in 0..n_trunk {
        let (l, o) = lines.layer(opt)?;
        trunk.push(l);
        trunk_opt.push(o);
    }
    let f = lines.next_record("heads")?;
    let n_heads: usize = lines.num(f.first().map(String::as_str).unwrap_or(""))?;
    let mut heads = Vec::new();
    let mut head_opt = Vec::new();
    for _ in 0..n_heads {
        let (l, o) = lines.layer(opt)?;
        heads.push(l);
        head_opt.push(o);
    }
    lines.next_record("end")?;

    let mut width = input_dim;
    for (i, l) in trunk.iter().enumerate() {
        if l.in_dim() != width {
            return Err(Error::invalid(format!("trunk layer {i} does not chain")));
        }
        width = l.out_dim();
    }
    if heads.is_empty() || heads.iter().any(|h| h.in_dim() != width) {
        return Err(Error::invalid("heads must consume the final trunk width"));
    }
    let model = MultiTaskModel {
        input_dim,
        trunk,
        heads,
        trunk_opt,
        head_opt,
    };
    Ok((model, config))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MultiTaskModel, Option<TrainConfig>)> {
    read_checkpoint(BufReader::new(fs::File::open(path)?))
}

//! Versioned text format for trained models.
//!
//! ```text
//! ABP-LDA-MODEL v1
//! K W D alpha beta
//! K lines of W tab-separated phi values (line k holds phi_.(k))
//! D lines of K tab-separated theta values
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ModelError, TopicModel};
use crate::dense::Dense;

pub const MODEL_MAGIC: &str = "ABP-LDA-MODEL v1";

/// 17 significant digits, enough to round-trip every f64.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b"\t")?;
        }
        out.write_all(fmt(v).as_bytes())?;
        first = false;
    }
    out.write_all(b"\n")
}

pub fn write_model<W: Write>(model: &TopicModel, mut out: W) -> std::io::Result<()> {
    let (k, w, d) = (model.num_topics(), model.num_words(), model.num_docs());
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "{k} {w} {d} {} {}", fmt(model.alpha), fmt(model.beta))?;
    for topic in 0..k {
        write_row(&mut out, (0..w).map(|word| model.phi[(word, topic)]))?;
    }
    for doc in 0..d {
        write_row(&mut out, model.theta.row(doc).iter().copied())?;
    }
    out.flush()
}

pub fn write_model_file(model: &TopicModel, path: &Path) -> std::io::Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

fn format_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Format {
        line,
        message: message.into(),
    }
}

fn parse_row(text: &str, line: usize, expected: usize) -> Result<Vec<f64>, ModelError> {
    let values = text
        .split('\t')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| format_err(line, format!("bad number {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(format_err(line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

pub fn read_model<R: BufRead>(reader: R) -> Result<TopicModel, ModelError> {
    let mut lines = reader.lines();
    let mut next = |line: usize| -> Result<String, ModelError> {
        match lines.next() {
            Some(l) => Ok(l?.trim_end_matches('\r').to_string()),
            None => Err(format_err(line, "unexpected end of file")),
        }
    };

    if next(1)? != MODEL_MAGIC {
        return Err(format_err(1, format!("expected {MODEL_MAGIC:?}")));
    }
    let header = next(2)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(format_err(2, "expected \"K W D alpha beta\""));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| format_err(2, format!("bad dimension {s:?}")));
    let (k, w, d) = (dim(fields[0])?, dim(fields[1])?, dim(fields[2])?);
    let real = |s: &str| s.parse::<f64>().map_err(|_| format_err(2, format!("bad hyperparameter {s:?}")));
    let (alpha, beta) = (real(fields[3])?, real(fields[4])?);
    if k == 0 || !(alpha > 0.0) || !(beta > 0.0) {
        return Err(format_err(2, "K must be positive and alpha, beta > 0"));
    }

    let mut phi = Dense::zeros(w, k);
    for topic in 0..k {
        let line = 3 + topic;
        for (word, v) in parse_row(&next(line)?, line, w)?.into_iter().enumerate() {
            phi[(word, topic)] = v;
        }
    }
    let mut theta = Dense::zeros(d, k);
    for doc in 0..d {
        let line = 3 + k + doc;
        theta.row_mut(doc).copy_from_slice(&parse_row(&next(line)?, line, k)?);
    }
    Ok(TopicModel { theta, phi, alpha, beta })
}

pub fn read_model_file(path: &Path) -> Result<TopicModel, ModelError> {
    read_model(BufReader::new(File::open(path)?))
}

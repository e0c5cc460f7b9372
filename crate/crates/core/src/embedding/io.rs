use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::EmbeddingModel;
use crate::error::{Error, Result};

const MAGIC: &str = "CAPE";
const VERSION: &str = "v1";

/// A model as stored on disk, with the optional cached pair normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: EmbeddingModel,
    pub zpair: Option<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn header_field(tok: Option<&str>, key: &str) -> Result<usize> {
    tok.and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(1, format!("header is missing `{key}=`")))
}

/// Writes the text model format. Floats use 17 significant digits so a
/// read-back is bit-identical.
pub fn write_model<W: Write>(w: &mut W, model: &EmbeddingModel, zpair: Option<f64>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} d={} pois={} users={}",
        model.dim(),
        model.num_pois(),
        model.num_users()
    );
    for (i, id) in model.poi_ids().iter().enumerate() {
        let _ = write!(out, "P {id} {:.16e}", model.bias(i));
        for x in model.poi_vector(i) {
            let _ = write!(out, " {x:.16e}");
        }
        out.push('\n');
    }
    for (u, id) in model.user_ids().iter().enumerate() {
        let _ = write!(out, "U {id}");
        for x in model.user_vector(u) {
            let _ = write!(out, " {x:.16e}");
        }
        out.push('\n');
    }
    if let Some(z) = zpair {
        let _ = writeln!(out, "ZPAIR {z:.16e}");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a model written by [`write_model`]. A stored pair normalizer is
/// checked against the one recomputed from the vectors.
pub fn read_model<R: BufRead>(r: R) -> Result<ModelFile> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty model file"))??;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(parse_err(1, "not a model file"));
    }
    if toks.next() != Some(VERSION) {
        return Err(parse_err(1, "unsupported model version"));
    }
    let dim = header_field(toks.next(), "d")?;
    let n_pois = header_field(toks.next(), "pois")?;
    let n_users = header_field(toks.next(), "users")?;

    let mut pois: Vec<(String, f64, Vec<f64>)> = Vec::with_capacity(n_pois);
    let mut users: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_users);
    let mut zpair = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            None => continue,
            Some("P") => {
                if toks.len() != 3 + dim {
                    return Err(parse_err(lineno, format!("expected {} fields", 3 + dim)));
                }
                let bias = parse_f64(toks[2], lineno)?;
                let v = toks[3..].iter().map(|t| parse_f64(t, lineno)).collect::<Result<_>>()?;
                pois.push((toks[1].to_string(), bias, v));
            }
            Some("U") => {
                if toks.len() != 2 + dim {
                    return Err(parse_err(lineno, format!("expected {} fields", 2 + dim)));
                }
                let v = toks[2..].iter().map(|t| parse_f64(t, lineno)).collect::<Result<_>>()?;
                users.push((toks[1].to_string(), v));
            }
            Some("ZPAIR") if toks.len() == 2 => {
                let z = toks[1]
                    .parse::<f64>()
                    .map_err(|_| parse_err(lineno, "invalid ZPAIR"))?;
                zpair = Some(z);
            }
            Some(other) => return Err(parse_err(lineno, format!("unexpected record `{other}`"))),
        }
    }
    if pois.len() != n_pois || users.len() != n_users {
        return Err(parse_err(
            1,
            format!(
                "header declares {n_pois} POIs and {n_users} users, found {} and {}",
                pois.len(),
                users.len()
            ),
        ));
    }
    let mut model = EmbeddingModel::zeros(
        dim,
        pois.iter().map(|p| p.0.clone()).collect(),
        users.iter().map(|u| u.0.clone()).collect(),
    )?;
    for (i, (_, bias, v)) in pois.iter().enumerate() {
        *model.bias_mut(i) = *bias;
        model.poi_vector_mut(i).copy_from_slice(v);
    }
    for (u, (_, v)) in users.iter().enumerate() {
        model.user_vector_mut(u).copy_from_slice(v);
    }
    if let Some(stored) = zpair {
        let actual = model.log_pair_partition().exp();
        let within = (stored - actual).abs() <= 1e-9 * actual.abs().max(f64::MIN_POSITIVE);
        if !within {
            return Err(Error::Invariant(format!(
                "stored ZPAIR {stored} disagrees with recomputed {actual}"
            )));
        }
    }
    Ok(ModelFile { model, zpair })
}

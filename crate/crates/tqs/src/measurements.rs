//! Measurement files.
//!
//! ```text
//! n=10 model=tfi params=1,0.7
//! 0000000000
//! 0000010000
//! ...
//! ```
//!
//! The header names the generating model and all of its parameters in
//! canonical order; each following line is one computational-basis record.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tqs_core::estimator::MeasurementSet;
use tqs_core::family::ModelKind;
use tqs_core::SpinConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFile {
    pub model: ModelKind,
    pub params: Vec<f64>,
    pub set: MeasurementSet,
}

fn at(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("line {line}: {msg}"))
}

pub fn parse(text: &str) -> CliResult<MeasurementFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::usage("empty measurement file"))?;
    let mut n = None;
    let mut model = None;
    let mut params = None;
    for tok in header.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| at(1, format!("expected key=value, found {tok:?}")))?;
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|_| at(1, format!("invalid n {v:?}")))?),
            "model" => model = Some(ModelKind::from_name(v).map_err(|e| at(1, e))?),
            "params" => {
                params = Some(
                    v.split(',')
                        .map(|x| x.parse::<f64>().map_err(|_| at(1, format!("invalid parameter {x:?}"))))
                        .collect::<CliResult<Vec<f64>>>()?,
                )
            }
            other => return Err(at(1, format!("unknown header key {other:?}"))),
        }
    }
    let n = n.ok_or_else(|| at(1, "missing n"))?;
    let model = model.ok_or_else(|| at(1, "missing model"))?;
    let params = params.ok_or_else(|| at(1, "missing params"))?;
    if params.len() != model.param_names().len() {
        return Err(at(
            1,
            format!("{} expects {} parameters", model.name(), model.param_names().len()),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.len() != n {
            return Err(at(i, format!("expected {n} characters, found {}", line.len())));
        }
        records.push(SpinConfig::parse(line).map_err(|e| at(i, e))?);
    }
    if records.is_empty() {
        return Err(CliError::usage("measurement file has no records"));
    }
    let note = header.to_string();
    Ok(MeasurementFile {
        model,
        params,
        set: MeasurementSet::new(n, records, note)?,
    })
}

pub fn render(model: ModelKind, params: &[f64], set: &MeasurementSet) -> String {
    let p: Vec<String> = params.iter().map(|x| x.to_string()).collect();
    let mut s = format!("n={} model={} params={}\n", set.n, model.name(), p.join(","));
    for r in &set.records {
        let _ = writeln!(s, "{}", r.to_bit_string());
    }
    s
}

pub fn read(path: &Path) -> CliResult<MeasurementFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| e.context(path.display()))
}

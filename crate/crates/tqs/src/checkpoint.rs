//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TQSCKPT"  u32 format  u32 header_len  header (UTF-8 key=value lines)
//! u32 n_arrays
//! per array: u32 name_len  name  u32 rank  u64 dims[rank]  f64 values[prod(dims)]
//! ```
//!
//! Arrays are the model parameters followed by the Adam moments under the
//! prefixes `adam.m.` and `adam.v.`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tqs_core::family::{HamiltonianFamily, Interval, ModelKind, ParamSpec};
use tqs_core::symmetry::SymmetryKind;
use tqs_core::trainer::{Checkpoint, Mode, TrainState};
use tqs_core::{ModelConfig, ParameterStore};

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 7] = b"TQSCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Canonical header text; identical checkpoints give identical text.
pub fn header_text(ckpt: &Checkpoint) -> String {
    let c = &ckpt.model_config;
    let mut s = String::new();
    let _ = writeln!(s, "model.n_layers={}", c.n_layers);
    let _ = writeln!(s, "model.d_model={}", c.d_model);
    let _ = writeln!(s, "model.n_heads={}", c.n_heads);
    let _ = writeln!(s, "model.local_dim={}", c.local_dim);
    let _ = writeln!(s, "model.n_couplings={}", c.n_couplings);
    let _ = writeln!(s, "model.max_context={}", c.max_context);
    s.push_str(&ckpt.family.describe());
    let sym: Vec<&str> = ckpt.symmetries.iter().map(|k| k.name()).collect();
    let _ = writeln!(s, "symmetries={}", sym.join(","));
    let _ = writeln!(s, "u1={}", ckpt.u1);
    let _ = writeln!(s, "train.mode={}", ckpt.state.mode.name());
    let _ = writeln!(s, "train.step={}", ckpt.state.step);
    let seeds: Vec<String> = ckpt.seeds.iter().map(|x| x.to_string()).collect();
    let _ = writeln!(s, "seeds={}", seeds.join(","));
    s
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&u32::try_from(x).expect("fits in u32").to_le_bytes());
}

fn put_store(out: &mut Vec<u8>, prefix: &str, store: &ParameterStore) {
    for e in store.entries() {
        let name = format!("{prefix}{}", e.name);
        put_u32(out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(out, e.shape.len());
        for &d in &e.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in &store.data()[e.offset..e.offset + e.len()] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let header = header_text(ckpt);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, header.len());
    out.extend_from_slice(header.as_bytes());
    put_u32(&mut out, 3 * ckpt.params.entries().len());
    put_store(&mut out, "", &ckpt.params);
    put_store(&mut out, "adam.m.", &ckpt.state.adam_m);
    put_store(&mut out, "adam.v.", &ckpt.state.adam_v);
    out
}

fn bad(msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("malformed checkpoint: {msg}"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> CliResult<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_header(text: &str) -> CliResult<BTreeMap<&str, &str>> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("header line {line:?}")))?;
        if map.insert(k, v).is_some() {
            return Err(bad(format!("duplicate header key {k}")));
        }
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(h: &BTreeMap<&str, &str>, key: &str) -> CliResult<T> {
    h.get(key)
        .ok_or_else(|| bad(format!("missing header key {key}")))?
        .parse()
        .map_err(|_| bad(format!("invalid value for {key}")))
}

fn list<T: std::str::FromStr>(v: &str, key: &str) -> CliResult<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.parse().map_err(|_| bad(format!("invalid value for {key}"))))
        .collect()
}

fn parse_family(h: &BTreeMap<&str, &str>) -> CliResult<HamiltonianFamily> {
    let kind = ModelKind::from_name(&field::<String>(h, "family.model")?)?;
    let mut specs = Vec::new();
    for name in kind.param_names() {
        let fixed = h.get(format!("family.fixed.{name}").as_str());
        let prior = h.get(format!("family.prior.{name}").as_str());
        specs.push(match (fixed, prior) {
            (Some(v), None) => ParamSpec::Fixed(v.parse().map_err(|_| bad(format!("family.fixed.{name}")))?),
            (None, Some(v)) => {
                let b: Vec<f64> = list(v, name)?;
                if b.len() != 2 {
                    return Err(bad(format!("family.prior.{name}")));
                }
                ParamSpec::Prior(Interval::new(b[0], b[1])?)
            }
            _ => return Err(bad(format!("parameter {name} must be fixed or have a prior"))),
        });
    }
    let sizes = list(h.get("family.sizes").ok_or_else(|| bad("missing family.sizes"))?, "family.sizes")?;
    Ok(HamiltonianFamily::new(kind, specs, sizes)?)
}

pub fn decode(bytes: &[u8]) -> CliResult<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = r.u32()?;
    let text = std::str::from_utf8(r.take(hlen)?).map_err(|_| bad("header is not UTF-8"))?;
    let h = parse_header(text)?;
    let model_config = ModelConfig {
        n_layers: field(&h, "model.n_layers")?,
        d_model: field(&h, "model.d_model")?,
        n_heads: field(&h, "model.n_heads")?,
        local_dim: field(&h, "model.local_dim")?,
        n_couplings: field(&h, "model.n_couplings")?,
        max_context: field(&h, "model.max_context")?,
    };
    let family = parse_family(&h)?;
    let symmetries = list::<String>(h["symmetries"], "symmetries")?
        .iter()
        .map(|s| SymmetryKind::from_name(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mode = Mode::from_name(&field::<String>(&h, "train.mode")?)?;

    let count = r.u32()?;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.u32()?;
        let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| bad("array name is not UTF-8"))?;
        let rank = r.u32()?;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<CliResult<Vec<usize>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("array too large"))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| bad("array too large"))?)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((name, shape, values));
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    if count % 3 != 0 {
        return Err(bad("parameter and optimizer arrays do not match"));
    }
    let k = count / 3;
    let build = |part: &[(String, Vec<usize>, Vec<f64>)], prefix: &str| -> CliResult<ParameterStore> {
        let mut store = ParameterStore::new();
        for (name, shape, values) in part {
            let base = name
                .strip_prefix(prefix)
                .ok_or_else(|| bad(format!("unexpected array {name}")))?;
            if store.get(base).is_some() {
                return Err(bad(format!("duplicate array {name}")));
            }
            store.push(base, shape.clone());
            store.get_mut(base).unwrap().copy_from_slice(values);
        }
        Ok(store)
    };
    let params = build(&arrays[..k], "")?;
    let adam_m = build(&arrays[k..2 * k], "adam.m.")?;
    let adam_v = build(&arrays[2 * k..], "adam.v.")?;
    if !params.same_layout(&adam_m) || !params.same_layout(&adam_v) {
        return Err(bad("optimizer moments do not match the parameters"));
    }
    let ckpt = Checkpoint {
        model_config,
        family,
        symmetries,
        u1: field(&h, "u1")?,
        params,
        state: TrainState {
            step: field(&h, "train.step")?,
            mode,
            adam_m,
            adam_v,
        },
        seeds: list(h.get("seeds").copied().unwrap_or(""), "seeds")?,
    };
    // Rejects parameter arrays that do not fit the configuration.
    ckpt.model()?;
    Ok(ckpt)
}

/// Writes via a temporary file and rename, so an interrupted periodic save
/// never leaves a truncated checkpoint behind.
pub fn save(path: &Path, ckpt: &Checkpoint) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(ckpt))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> CliResult<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| e.context(path.display()))
}

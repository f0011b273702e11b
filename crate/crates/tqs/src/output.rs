//! CSV outputs, provenance and list/grid argument parsing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every output CSV records about how it was produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// `parts` is everything that determines the output besides the seed:
    /// config text, resolved arguments, input file contents.
    pub fn new(parts: &[&[u8]], seed: u64) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let digest = h.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self { config_hash: hex, seed }
    }

    pub fn comment(&self) -> String {
        format!(
            "# config-hash={}, code-version={}, seed={}\n",
            self.config_hash, CODE_VERSION, self.seed
        )
    }
}

/// A CSV file that starts with the provenance comment and a header row.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
    width: usize,
}

impl CsvOut<BufWriter<File>> {
    pub fn create(path: &Path, prov: &Provenance, header: &[&str]) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::new(BufWriter::new(file), prov, header)
    }
}

impl<W: Write> CsvOut<W> {
    pub fn new(mut w: W, prov: &Provenance, header: &[&str]) -> CliResult<Self> {
        w.write_all(prov.comment().as_bytes())?;
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(header)?;
        Ok(Self {
            inner,
            width: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        assert_eq!(fields.len(), self.width, "CSV row width");
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self) -> CliResult<W> {
        self.inner
            .into_inner()
            .map_err(|e| CliError::usage(e.to_string()))
    }
}

/// Shortest decimal that round-trips.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))
}

/// `"8,12,16"`.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    let v: Vec<T> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("invalid {what} entry {x:?}")))
        })
        .collect::<CliResult<_>>()?;
    if v.is_empty() {
        return Err(CliError::usage(format!("empty {what}")));
    }
    Ok(v)
}

/// Either a list `"0.5,1,1.5"` or an inclusive range `"lo:hi:step"`.
/// Range points are rounded to 12 decimals so 0.1-steps print cleanly.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [_] => parse_list::<f64>(s, "grid")?,
        [lo, hi, step] => {
            let p = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("invalid grid bound {x:?}")))
            };
            let (lo, hi, step) = (p(lo)?, p(hi)?, p(step)?);
            if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(CliError::usage(format!("invalid grid range {s:?}")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            if count > 100_000 {
                return Err(CliError::usage(format!("grid {s:?} has too many points")));
            }
            (0..count)
                .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        _ => return Err(CliError::usage(format!("invalid grid {s:?}; use a list or lo:hi:step"))),
    };
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(CliError::usage(format!("non-finite grid value in {s:?}")));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5:1:0.1").unwrap(), vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(parse_grid("1.75").unwrap(), vec![1.75]);
        assert_eq!(parse_grid("1,2").unwrap(), vec![1.0, 2.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a").is_err());
        assert_eq!(parse_list::<usize>("8, 12,16", "sizes").unwrap(), vec![8, 12, 16]);
    }

    #[test]
    fn csv_starts_with_provenance() {
        let prov = Provenance::new(&[b"cfg"], 5);
        let mut out = CsvOut::new(Vec::new(), &prov, &["a", "b"]).unwrap();
        out.row(&["1".into(), String::new()]).unwrap();
        let text = String::from_utf8(out.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config-hash="));
        assert!(lines[0].ends_with(", seed=5"));
        assert_eq!(&lines[1..], &["a,b", "1,"]);
        assert_ne!(prov, Provenance::new(&[b"cfh"], 5));
        assert_ne!(Provenance::new(&[b"ab", b"c"], 5), Provenance::new(&[b"a", b"bc"], 5));
    }
}

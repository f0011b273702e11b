//! Spin configurations in the computational basis.
//!
//! Basis index 0 is σᶻ = +1 and index 1 is σᶻ = −1. When a configuration is
//! read as a binary number, s₁ is the most significant digit.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Local Hilbert-space dimension for spin-½ chains.
pub const SPIN_HALF: usize = 2;

/// A length-n string of local basis indices in `{0, …, d−1}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpinConfig(Vec<u8>);

impl SpinConfig {
    /// Validates every entry against the local dimension `d`.
    pub fn new(values: Vec<u8>, d: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("spin configuration"));
        }
        if let Some(&bad) = values.iter().find(|&&v| v as usize >= d) {
            return Err(Error::Config(alloc::format!(
                "spin value {bad} outside local dimension {d}"
            )));
        }
        Ok(Self(values))
    }

    /// Spin-½ configuration from a `'0'`/`'1'` string.
    pub fn parse(bits: &str) -> Result<Self> {
        let values = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Config(alloc::format!("invalid spin character {c:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(values, SPIN_HALF)
    }

    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0; n])
    }

    pub(crate) fn from_raw(values: Vec<u8>) -> Self {
        Self(values)
    }

    /// The configuration whose binary value (s₁ most significant) is `index`.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|i| ((index >> (n - 1 - i)) & 1) as u8).collect())
    }

    /// Binary value with s₁ as the most significant bit (spin-½ only).
    pub fn index(&self) -> usize {
        self.0.iter().fold(0usize, |acc, &v| (acc << 1) | v as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<u8> {
        self.0
    }

    pub fn count(&self, value: u8) -> usize {
        self.0.iter().filter(|&&v| v == value).count()
    }

    /// m_z = (n₀ − n₁)/n.
    pub fn magnetization(&self) -> f64 {
        let n0 = self.count(0) as f64;
        let n1 = self.count(1) as f64;
        (n0 - n1) / self.0.len() as f64
    }

    /// σᶻ eigenvalue at `site`: +1 for index 0, −1 for index 1.
    pub fn sigma_z(&self, site: usize) -> f64 {
        if self.0[site] == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Length of the common prefix with `other`.
    pub fn common_prefix(&self, other: &SpinConfig) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .take_while(|(a, b)| a == b)
            .count()
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&v| (b'0' + v) as char).collect()
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.0 {
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// All `2ⁿ` spin-½ configurations in index order.
pub fn enumerate(n: usize) -> impl Iterator<Item = SpinConfig> {
    (0..1usize << n).map(move |i| SpinConfig::from_index(i, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip_and_msb_convention() {
        let s = SpinConfig::parse("0110").unwrap();
        assert_eq!(s.index(), 6);
        assert_eq!(SpinConfig::from_index(6, 4), s);
        assert_eq!(SpinConfig::parse("1000").unwrap().index(), 8);
    }

    #[test]
    fn magnetization_convention() {
        assert_eq!(SpinConfig::parse("0000").unwrap().magnetization(), 1.0);
        assert_eq!(SpinConfig::parse("0001").unwrap().magnetization(), 0.5);
        assert_eq!(SpinConfig::parse("1111").unwrap().magnetization(), -1.0);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(SpinConfig::new(alloc::vec![0, 2], 2).is_err());
        assert!(SpinConfig::parse("01x").is_err());
        assert!(SpinConfig::parse("").is_err());
    }
}

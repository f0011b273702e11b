use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Result;
use crate::spin::SpinConfig;

/// log ψ(s) split into log-amplitude and phase: ψ = exp(log_amp + i·phase).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogPsi {
    pub log_amp: f64,
    pub phase: f64,
}

impl LogPsi {
    /// log P(s) = 2·log_amp.
    pub fn log_prob(&self) -> f64 {
        2.0 * self.log_amp
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(self.log_amp.exp(), self.phase)
    }

    /// ψ(other)/ψ(self), formed from the log difference.
    pub fn ratio_to(&self, other: &LogPsi) -> Complex64 {
        if other.log_amp == f64::NEG_INFINITY {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(
            (other.log_amp - self.log_amp).exp(),
            other.phase - self.phase,
        )
    }
}

/// Anything that can evaluate log ψ on a batch of complete configurations.
pub trait WaveFunction {
    fn n(&self) -> usize;

    fn log_psi_batch(&self, configs: &[SpinConfig]) -> Result<Vec<LogPsi>>;

    fn log_psi(&self, s: &SpinConfig) -> Result<LogPsi> {
        Ok(self.log_psi_batch(core::slice::from_ref(s))?[0])
    }
}

//! Integer-exact semantics of the two execution modes.
//!
//! An output column evaluated in ANN mode runs a sparse MAC followed by QCFS;
//! in SNN mode it regenerates a thermometer spike train for every matched
//! activation, integrates per-timestep sums into a membrane potential and
//! finishes with `L` threshold-subtract-and-fire steps. Both routes return
//! the same activation level for every input.

mod fold;
mod gemm;
mod neuron;

pub use fold::{check_input_layer, fold_batchnorm, BatchNormParams, FoldedAffine, InputLayerReport};
pub use gemm::{
    ann_column_eval, hybrid_gemm, hybrid_gemm_with, snn_column_eval, snn_column_eval_with_reset, Mode, ModeMask,
};
pub use neuron::{soft_reset_update, spike_count_step, MembraneState, ResetFn};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Raw quantization parameters as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantParams {
    pub levels: u32,
    pub theta: i32,
}

/// Validated quantization setup: `L` in {2, 4, 8}, `theta` a positive
/// multiple of `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "QuantParams", into = "QuantParams")]
pub struct QuantConfig {
    levels: u32,
    theta: i32,
}

impl QuantConfig {
    pub fn new(levels: u32, theta: i32) -> Result<Self> {
        if !matches!(levels, 2 | 4 | 8) {
            return Err(Error::Parameter(format!(
                "quantization level count {levels} not in {{2, 4, 8}}"
            )));
        }
        if theta % levels as i32 != 0 {
            return Err(Error::Precondition(format!(
                "theta/L = {theta}/{levels} is not an integer"
            )));
        }
        if theta / (levels as i32) < 1 {
            return Err(Error::Parameter(format!(
                "quantization step theta/L must be >= 1, got {theta}/{levels}"
            )));
        }
        Ok(QuantConfig { levels, theta })
    }

    /// `L`.
    #[inline]
    pub fn levels(&self) -> u32 {
        self.levels
    }

    #[inline]
    pub fn theta(&self) -> i32 {
        self.theta
    }

    /// Integer quantization step `theta / L`.
    #[inline]
    pub fn step(&self) -> i32 {
        self.theta / self.levels as i32
    }

    /// Functional spike window `T = L`.
    #[inline]
    pub fn window(&self) -> usize {
        self.levels as usize
    }

    /// Timesteps needed for lossless conversion, `3L - 1`. Used for latency
    /// accounting only.
    #[inline]
    pub fn total_timesteps(&self) -> u32 {
        3 * self.levels - 1
    }
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig { levels: 8, theta: 16 }
    }
}

impl TryFrom<QuantParams> for QuantConfig {
    type Error = Error;

    fn try_from(p: QuantParams) -> Result<Self> {
        QuantConfig::new(p.levels, p.theta)
    }
}

impl From<QuantConfig> for QuantParams {
    fn from(c: QuantConfig) -> Self {
        QuantParams {
            levels: c.levels,
            theta: c.theta,
        }
    }
}

/// Quantized activation in `[0, L]`, stored as INT8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivationLevel(u8);

impl ActivationLevel {
    pub fn new(level: u8, cfg: &QuantConfig) -> Result<Self> {
        if u32::from(level) > cfg.levels() {
            return Err(Error::Domain(format!(
                "activation level {level} outside [0, {}]",
                cfg.levels()
            )));
        }
        Ok(ActivationLevel(level))
    }

    #[inline]
    pub fn level(self) -> u8 {
        self.0
    }
}

/// QCFS: `clamp(floor((acc + floor(step/2)) / step), 0, L)`.
pub fn qcfs(acc: i64, cfg: &QuantConfig) -> ActivationLevel {
    let step = i64::from(cfg.step());
    let q = (acc + step / 2).div_euclid(step);
    ActivationLevel(q.clamp(0, i64::from(cfg.levels())) as u8)
}

/// Deterministic spike train over the `T = L` window; bit `t` is timestep `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpikeTrain {
    bits: u16,
    len: u8,
}

impl SpikeTrain {
    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn fires_at(&self, t: usize) -> bool {
        t < self.len() && self.bits >> t & 1 == 1
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|t| self.fires_at(t))
    }
}

/// Thermometer code: fires on the first `level` timesteps.
pub fn spike_gen(a: ActivationLevel, cfg: &QuantConfig) -> Result<SpikeTrain> {
    let level = u32::from(a.level());
    if level > cfg.levels() {
        return Err(Error::Domain(format!(
            "activation level {level} outside [0, {}]",
            cfg.levels()
        )));
    }
    Ok(SpikeTrain {
        bits: ((1u32 << level) - 1) as u16,
        len: cfg.levels() as u8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(l: u32, theta: i32) -> QuantConfig {
        QuantConfig::new(l, theta).unwrap()
    }

    /// `clamp(floor(acc * L / theta + 1/2), 0, L)` in exact rational arithmetic.
    fn qcfs_rational(acc: i64, c: &QuantConfig) -> u8 {
        let (num, den) = (2 * acc * c.levels() as i64 + c.theta() as i64, 2 * c.theta() as i64);
        num.div_euclid(den).clamp(0, c.levels() as i64) as u8
    }

    #[test]
    fn config_invariants() {
        let c = cfg(8, 16);
        assert_eq!(c.step(), 2);
        assert_eq!(c.window(), 8);
        assert_eq!(c.total_timesteps(), 23);
        assert_eq!(cfg(2, 2).total_timesteps(), 5);
        assert_eq!(cfg(4, 4).total_timesteps(), 11);
        assert!(QuantConfig::new(8, 12).is_err());
        assert!(QuantConfig::new(3, 9).is_err());
        assert!(QuantConfig::new(8, 0).is_err());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"levels":8,"theta":16}"#);
        assert!(serde_json::from_str::<QuantConfig>(r#"{"levels":8,"theta":12}"#).is_err());
    }

    #[test]
    fn qcfs_examples() {
        for c in [cfg(2, 2), cfg(4, 12), cfg(8, 16), cfg(8, 24)] {
            assert_eq!(qcfs(-5, &c).level(), 0);
            let big = 10 * i64::from(c.step()) * i64::from(c.levels());
            assert_eq!(qcfs(big, &c).level() as u32, c.levels());
        }
        assert_eq!(qcfs(5, &cfg(8, 16)).level(), 3);
        assert_eq!(qcfs_rational(5, &cfg(8, 16)), 3);
    }

    #[test]
    fn spike_gen_examples() {
        let c = cfg(8, 16);
        let s0 = spike_gen(ActivationLevel::new(0, &c).unwrap(), &c).unwrap();
        assert_eq!(s0.iter().collect::<Vec<_>>(), vec![false; 8]);
        let s8 = spike_gen(ActivationLevel::new(8, &c).unwrap(), &c).unwrap();
        assert_eq!(s8.iter().collect::<Vec<_>>(), vec![true; 8]);
        let s3 = spike_gen(ActivationLevel::new(3, &c).unwrap(), &c).unwrap();
        let pattern: String = s3.iter().map(|b| if b { '1' } else { '0' }).collect();
        assert_eq!(pattern, "11100000");
        for w in [-127i64, -1, 0, 5, 127] {
            let sum: i64 = s3.iter().map(|s| s as i64 * w).sum();
            assert_eq!(sum, 3 * w);
        }
        assert!(ActivationLevel::new(9, &c).is_err());
        assert!(spike_gen(ActivationLevel(9), &c).is_err());
    }

    proptest! {
        #[test]
        fn qcfs_matches_rational_oracle(acc in -100_000i64..100_000, li in 0usize..3, mult in 1i32..40) {
            let l = [2u32, 4, 8][li];
            let c = cfg(l, mult * l as i32);
            prop_assert_eq!(qcfs(acc, &c).level(), qcfs_rational(acc, &c));
        }

        #[test]
        fn qcfs_monotone(a in -5000i64..5000, d in 0i64..5000, li in 0usize..3, mult in 1i32..20) {
            let l = [2u32, 4, 8][li];
            let c = cfg(l, mult * l as i32);
            prop_assert!(qcfs(a, &c) <= qcfs(a + d, &c));
            // clipping is idempotent at both rails
            let top = qcfs(a.abs() * 1000 + 10_000_000, &c);
            prop_assert_eq!(top.level() as u32, l);
            prop_assert_eq!(qcfs(-a.abs() - 10_000_000, &c).level(), 0);
        }

        #[test]
        fn spike_train_conserves_level(li in 0usize..3, lvl in 0u8..=8) {
            let l = [2u32, 4, 8][li];
            let c = cfg(l, 2 * l as i32);
            let lvl = lvl.min(l as u8);
            let s = spike_gen(ActivationLevel::new(lvl, &c).unwrap(), &c).unwrap();
            prop_assert_eq!(s.len(), l as usize);
            prop_assert_eq!(s.count(), lvl as u32);
        }
    }
}

//! Integer preconditions for exact conversion: BatchNorm folding into an
//! integer affine, and input-layer threshold checks.

use serde::{Deserialize, Serialize};

use super::{QuantConfig, QuantParams};
use crate::{Error, Result};

/// Integer-domain parameters of `gamma * (z*W + b - mu) / sqrt(sigma_sq + eps) + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: i64,
    pub beta: i64,
    pub mu: i64,
    pub sigma_sq: i64,
    pub eps: i64,
    pub bias: i64,
}

/// Folded pre-activation `scale * (z*W) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldedAffine {
    pub scale: i64,
    pub offset: i64,
}

impl FoldedAffine {
    pub fn apply(&self, zw: i64) -> i64 {
        self.scale * zw + self.offset
    }
}

fn int8(name: &str, v: i64) -> Result<()> {
    if !(i64::from(i8::MIN)..=i64::from(i8::MAX)).contains(&v) {
        return Err(Error::Range(format!("{name} = {v}")));
    }
    Ok(())
}

fn isqrt_exact(v: i64) -> Option<i64> {
    if v < 0 {
        return None;
    }
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    (r * r == v).then_some(r)
}

pub fn fold_batchnorm(p: &BatchNormParams, cfg: &QuantConfig) -> Result<FoldedAffine> {
    let l = i64::from(cfg.levels());
    for (name, v) in [("b", p.bias), ("mu", p.mu), ("beta", p.beta)] {
        if v % l != 0 {
            return Err(Error::Precondition(format!("{name}/L not integer ({v}/{l})")));
        }
        int8(&format!("{name}/L"), v / l)?;
    }
    let denom = p
        .sigma_sq
        .checked_add(p.eps)
        .and_then(isqrt_exact)
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::Precondition(format!(
                "sqrt(sigma_sq + eps) not a positive integer ({} + {})",
                p.sigma_sq, p.eps
            ))
        })?;
    if p.gamma % denom != 0 {
        return Err(Error::Precondition(format!(
            "gamma/sqrt(sigma_sq + eps) not integer ({}/{denom})",
            p.gamma
        )));
    }
    let scale = p.gamma / denom;
    int8("gamma/sqrt(sigma_sq + eps)", scale)?;
    Ok(FoldedAffine {
        scale,
        offset: scale * (p.bias - p.mu) + p.beta,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayerReport {
    pub passed: bool,
    pub violations: Vec<String>,
}

/// Input-layer conditions: `theta / L` integral and `theta` representable in INT8.
pub fn check_input_layer(p: &QuantParams) -> InputLayerReport {
    let mut violations = vec![];
    if p.levels == 0 {
        violations.push("L must be positive".to_string());
    } else if p.theta % p.levels as i32 != 0 {
        violations.push(format!("theta/L non-integer ({}/{})", p.theta, p.levels));
    }
    if !(i32::from(i8::MIN)..=i32::from(i8::MAX)).contains(&p.theta) {
        violations.push(format!("theta = {} outside INT8 range", p.theta));
    }
    InputLayerReport {
        passed: violations.is_empty(),
        violations,
    }
}

//! Self-check suites behind `verify`: SNN/ANN equivalence, mode-mask
//! invariance, Stage-2 monotonicity and proximity to the exhaustive oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{ColumnStats, CoreCost, CostParams, Evaluation};
use crate::neuro::{
    ann_column_eval, hybrid_gemm_with, snn_column_eval_with_reset, soft_reset_update, ActivationLevel, MembraneState,
    ModeMask, QuantConfig, ResetFn,
};
use crate::par::{self, Exec};
use crate::sched::{brute_force_min_edp, cost_assignment, tuned_cost_assignment, RefineMode, LAMBDA_STEPS};
use crate::sparse::{compress, BitmapMatrix, Layout};
use crate::Result;

pub const EQUIVALENCE_COLUMNS: usize = 10_000;
pub const MASK_INSTANCES: usize = 10;
pub const MASKS_PER_INSTANCE: usize = 25;
pub const MONOTONICITY_INSTANCES: usize = 200;
pub const ORACLE_INSTANCES: usize = 100;
/// EDP ratio to the oracle that counts as close.
pub const ORACLE_TOLERANCE: f64 = 1.05;
/// Close instances required out of [`ORACLE_INSTANCES`].
pub const ORACLE_REQUIRED: usize = 95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checked: u64,
    pub failures: u64,
    /// Largest EDP ratio to the oracle; oracle suite only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn nonzero_weight(rng: &mut ChaCha8Rng) -> i8 {
    let w = rng.random_range(1..=127i8);
    if rng.random_bool(0.5) {
        w
    } else {
        -w
    }
}

fn random_column(rng: &mut ChaCha8Rng, k: usize, levels: u32, da: f64, dw: f64) -> (Vec<i8>, Vec<i8>) {
    let a = (0..k)
        .map(|_| {
            if rng.random_bool(da) {
                rng.random_range(1..=levels) as i8
            } else {
                0
            }
        })
        .collect();
    let w = (0..k)
        .map(|_| if rng.random_bool(dw) { nonzero_weight(rng) } else { 0 })
        .collect();
    (a, w)
}

fn equal_paths(a: &[i8], w: &[i8], cfg: &QuantConfig, reset: ResetFn) -> Result<bool> {
    let (a, w) = (compress(a), compress(w));
    Ok(ann_column_eval(&a, &w, cfg)? == snn_column_eval_with_reset(&a, &w, cfg, reset)?)
}

/// Randomized columns over L in {2, 4, 8}, K <= 256, densities 0.1..0.9,
/// then every L = 2 column with K <= 4, activations in {0, 1, 2} and
/// weights in -3..=3.
pub fn equivalence_suite(exec: Exec, seed: u64, reset: ResetFn) -> Result<SuiteResult> {
    let random = par::try_map_range(exec, EQUIVALENCE_COLUMNS, |i| -> Result<bool> {
        let mut r = rng(seed, 1_000 + i as u64);
        let levels = [2u32, 4, 8][r.random_range(0..3)];
        let cfg = QuantConfig::new(levels, levels as i32 * [1, 2, 4][r.random_range(0..3)])?;
        let k = r.random_range(1..=256);
        let (da, dw) = (r.random_range(0.1..=0.9), r.random_range(0.1..=0.9));
        let (a, w) = random_column(&mut r, k, levels, da, dw);
        equal_paths(&a, &w, &cfg, reset)
    })?;
    let mut checked = random.len() as u64;
    let mut failures = random.iter().filter(|ok| !**ok).count() as u64;
    for theta in [2, 4] {
        let cfg = QuantConfig::new(2, theta)?;
        for k in 1..=4u32 {
            let cases = 3u32.pow(k) * 7u32.pow(k);
            let bad = par::try_map_range(exec, cases as usize, |c| -> Result<bool> {
                let (mut ai, mut wi) = (c as u32 % 3u32.pow(k), c as u32 / 3u32.pow(k));
                let mut a = Vec::new();
                let mut w = Vec::new();
                for _ in 0..k {
                    a.push((ai % 3) as i8);
                    w.push((wi % 7) as i8 - 3);
                    ai /= 3;
                    wi /= 7;
                }
                Ok(!equal_paths(&a, &w, &cfg, reset)?)
            })?;
            checked += cases as u64;
            failures += bad.iter().filter(|b| **b).count() as u64;
        }
    }
    Ok(SuiteResult {
        name: "equivalence".into(),
        passed: failures == 0,
        checked,
        failures,
        max_gap: None,
    })
}

/// Deliberately wrong reset (truncates instead of rounding) for fault
/// injection.
pub fn truncating_reset(state: MembraneState, cfg: &QuantConfig) -> ActivationLevel {
    let step = cfg.step();
    let emitted = (state.potential.max(0) / step).min(cfg.levels() as i32);
    ActivationLevel::new(emitted as u8, cfg).expect("clamped to [0, L]")
}

fn random_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    layout: Layout,
    f: impl Fn(&mut ChaCha8Rng) -> i8,
) -> Result<BitmapMatrix> {
    let dense: Vec<i8> = (0..rows * cols).map(|_| f(rng)).collect();
    BitmapMatrix::from_dense(rows, cols, &dense, layout)
}

/// Hybrid GEMM under random masks equals the all-ANN result on random
/// 16x64x16 instances.
pub fn mask_invariance_suite(exec: Exec, seed: u64) -> Result<SuiteResult> {
    let results = par::try_map_range(exec, MASK_INSTANCES, |i| -> Result<u64> {
        let mut r = rng(seed, 2_000 + i as u64);
        let levels = [2u32, 4, 8][i % 3];
        let cfg = QuantConfig::new(levels, 2 * levels as i32)?;
        let da = r.random_range(0.2..0.8);
        let dw = r.random_range(0.2..0.8);
        let a = random_matrix(&mut r, 16, 64, Layout::RowMajor, |r| {
            if r.random_bool(da) {
                r.random_range(1..=levels) as i8
            } else {
                0
            }
        })?;
        let b = random_matrix(&mut r, 64, 16, Layout::ColMajor, |r| {
            if r.random_bool(dw) {
                nonzero_weight(r)
            } else {
                0
            }
        })?;
        let reference = hybrid_gemm_with(Exec::Sequential, &a, &b, &ModeMask::from_bools(&[false; 16]), &cfg)?;
        let mut bad = 0;
        for _ in 0..MASKS_PER_INSTANCE {
            let mask: Vec<bool> = (0..16).map(|_| r.random_bool(0.5)).collect();
            if hybrid_gemm_with(Exec::Sequential, &a, &b, &ModeMask::from_bools(&mask), &cfg)? != reference {
                bad += 1;
            }
        }
        Ok(bad)
    })?;
    let failures = results.iter().sum();
    Ok(SuiteResult {
        name: "mask_invariance".into(),
        passed: failures == 0,
        checked: (MASK_INSTANCES * MASKS_PER_INSTANCE) as u64,
        failures,
        max_gap: None,
    })
}

/// A random cost-model instance: `n <= 12` columns, up to four PEs per
/// core, SNN/ANN coefficient ratios drawn log-uniformly over a decade (per
/// match energy cheaper on SNN, per match time slower) or two decades (fixed
/// overheads).
pub fn random_cost_instance(rng: &mut ChaCha8Rng) -> (ColumnStats, CostParams) {
    let mut log_uniform = |lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let eps = log_uniform(0.1, 1.0);
    let beta = log_uniform(1.0, 10.0);
    let zeta_ratio = log_uniform(0.1, 10.0);
    let delta_ratio = log_uniform(0.1, 10.0);
    let n = rng.random_range(1..=12);
    let ann = CoreCost {
        eps: 1.0,
        zeta: rng.random_range(0.0..50.0),
        beta: 1.0,
        delta: rng.random_range(0.0..50.0),
        alpha: rng.random_range(0.0..20.0),
        pes: rng.random_range(1..=4),
    };
    let snn = CoreCost {
        eps,
        zeta: ann.zeta * zeta_ratio,
        beta,
        delta: ann.delta * delta_ratio,
        alpha: ann.alpha,
        pes: rng.random_range(1..=4),
    };
    let counts: Vec<u64> = (0..n).map(|_| rng.random_range(1..=200)).collect();
    (ColumnStats::from_counts(&counts), CostParams { snn, ann, lambda: 1.0 })
}

/// Stage-2 Phi trajectories never increase.
pub fn monotonicity_suite(exec: Exec, seed: u64) -> Result<SuiteResult> {
    let bad = par::try_map_range(exec, MONOTONICITY_INSTANCES, |i| -> Result<bool> {
        let mut r = rng(seed, 3_000 + i as u64);
        let (_, mut p) = random_cost_instance(&mut r);
        let n = r.random_range(1..=96);
        let counts: Vec<u64> = (0..n).map(|_| r.random_range(0..=300)).collect();
        p.lambda = 10f64.powf(r.random_range(-2.0..2.0));
        let mode = if i % 2 == 0 {
            RefineMode::Full
        } else {
            RefineMode::Incremental
        };
        let (_, rep) = cost_assignment(&ColumnStats::from_counts(&counts), &p, mode)?;
        Ok(rep.phi.windows(2).any(|w| w[1] > w[0]))
    })?;
    let failures = bad.iter().filter(|b| **b).count() as u64;
    Ok(SuiteResult {
        name: "phi_monotonicity".into(),
        passed: failures == 0,
        checked: MONOTONICITY_INSTANCES as u64,
        failures,
        max_gap: None,
    })
}

/// EDP of the tuned cost schedule over the exhaustive minimum, per instance.
pub fn oracle_gaps(exec: Exec, seed: u64) -> Result<Vec<f64>> {
    par::try_map_range(exec, ORACLE_INSTANCES, |i| -> Result<f64> {
        let (stats, params) = random_cost_instance(&mut rng(seed, 4_000 + i as u64));
        let (_, best) = brute_force_min_edp(&stats, &params)?;
        let (a, _, _) = tuned_cost_assignment(&stats, &params, LAMBDA_STEPS)?;
        let edp = Evaluation::of(&a, &stats, &params)?.edp();
        Ok(if best > 0.0 { edp / best } else { 1.0 })
    })
}

pub fn oracle_suite(exec: Exec, seed: u64) -> Result<SuiteResult> {
    let gaps = oracle_gaps(exec, seed)?;
    let close = gaps.iter().filter(|&&g| g <= ORACLE_TOLERANCE).count();
    Ok(SuiteResult {
        name: "oracle_proximity".into(),
        passed: close >= ORACLE_REQUIRED,
        checked: gaps.len() as u64,
        failures: (gaps.len() - close) as u64,
        max_gap: Some(gaps.iter().copied().fold(1.0, f64::max)),
    })
}

pub fn verify_with(exec: Exec, seed: u64, reset: ResetFn) -> Result<VerifyReport> {
    let suites = vec![
        equivalence_suite(exec, seed, reset)?,
        mask_invariance_suite(exec, seed)?,
        monotonicity_suite(exec, seed)?,
        oracle_suite(exec, seed)?,
    ];
    Ok(VerifyReport {
        seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

pub fn verify(exec: Exec, seed: u64) -> Result<VerifyReport> {
    verify_with(exec, seed, soft_reset_update)
}

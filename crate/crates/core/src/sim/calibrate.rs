//! Cost-model calibration from single-column microbenchmarks.

use serde::{Deserialize, Serialize};

use super::{simulate_layer_output, EnergyWeights, HardwareConfig, LayerJob};
use crate::cost::{Assignment, CoreCost, CostParams, Packing};
use crate::neuro::{Mode, QuantConfig};
use crate::par::Exec;
use crate::sparse::{compress, BitmapMatrix, Layout};
use crate::{Error, Result};

/// Match counts as fractions of the activation nonzeros; with a dense
/// 1024-wide row these are 0, 16, 64, 256 and 1024 matches.
pub const MICRO_FRACTIONS: [f64; 5] = [0.0, 1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0];

/// Shape of the single-row, single-column microbenchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroShape {
    pub k: usize,
    /// Activation nonzeros in the row.
    pub a_nnz: usize,
}

impl Default for MicroShape {
    fn default() -> Self {
        MicroShape { k: 1024, a_nnz: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitLine {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
fn fit(points: &[(f64, f64)]) -> Result<FitLine> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Calibration(
            "microbenchmark match counts are all identical".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = points
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(FitLine {
        slope,
        intercept,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: CostParams,
    pub shape: MicroShape,
    pub snn_energy: FitLine,
    pub snn_latency: FitLine,
    pub ann_energy: FitLine,
    pub ann_latency: FitLine,
}

fn micro_operands(shape: MicroShape, matches: usize, cfg: &QuantConfig) -> Result<(BitmapMatrix, BitmapMatrix)> {
    let MicroShape { k, a_nnz } = shape;
    if a_nnz == 0 || a_nnz > k {
        return Err(Error::Calibration(format!(
            "activation nonzeros {a_nnz} not in 1..={k}"
        )));
    }
    let l = cfg.levels() as usize;
    let mut a = vec![0i8; k];
    let mut w = vec![0i8; k];
    for j in 0..a_nnz {
        let pos = j * k / a_nnz;
        // levels cycle 1..=L so their mean is (L + 1) / 2
        a[pos] = (1 + j % l) as i8;
        if j < matches {
            w[pos] = 1;
        }
    }
    Ok((
        BitmapMatrix::from_fibers(1, k, Layout::RowMajor, vec![compress(&a)])?,
        BitmapMatrix::from_fibers(k, 1, Layout::ColMajor, vec![compress(&w)])?,
    ))
}

/// `(energy, latency)` of one column on one PE of `mode`, excluding HBM
/// staging and launch.
fn microbench(
    hw: &HardwareConfig,
    w: &EnergyWeights,
    cfg: &QuantConfig,
    shape: MicroShape,
    mode: Mode,
    matches: usize,
) -> Result<(f64, f64)> {
    let (a, b) = micro_operands(shape, matches, cfg)?;
    let snn = mode == Mode::Snn;
    let one = HardwareConfig {
        snn_pes: snn as usize,
        ann_pes: (!snn) as usize,
        ..*hw
    };
    let assignment = Assignment {
        to_snn: vec![snn],
        packing: Packing {
            snn: if snn { vec![vec![0]] } else { vec![] },
            ann: if snn { vec![] } else { vec![vec![0]] },
        },
    };
    let job = LayerJob {
        a: &a,
        b: &b,
        quant: *cfg,
        assignment: &assignment,
    };
    let (r, _) = simulate_layer_output(Exec::Sequential, &job, &one, w)?;
    let busy = r.busy.snn.iter().chain(&r.busy.ann).sum::<u64>();
    let mut ev = r.events;
    ev.hbm_bytes = 0;
    ev.snn_control_cycles = if snn { busy } else { 0 };
    ev.ann_control_cycles = if snn { 0 } else { busy };
    Ok((ev.energy(w).total(), busy as f64))
}

/// Calibrates per-dot-product coefficients on the default 1024-wide shape.
pub fn calibrate_cost_params(hw: &HardwareConfig, w: &EnergyWeights, cfg: &QuantConfig) -> Result<Calibration> {
    calibrate_for_shape(hw, w, cfg, MicroShape::default())
}

pub fn calibrate_for_shape(
    hw: &HardwareConfig,
    w: &EnergyWeights,
    cfg: &QuantConfig,
    shape: MicroShape,
) -> Result<Calibration> {
    hw.validate()?;
    let mut counts: Vec<usize> = MICRO_FRACTIONS
        .iter()
        .map(|f| (f * shape.a_nnz as f64).round() as usize)
        .collect();
    counts.dedup();

    // launch overhead measured on an empty layer
    let empty_a = BitmapMatrix::from_fibers(1, shape.k, Layout::RowMajor, vec![compress(&vec![0; shape.k])])?;
    let empty_b = BitmapMatrix::from_fibers(shape.k, 0, Layout::ColMajor, vec![])?;
    let none = Assignment {
        to_snn: vec![],
        packing: Packing::default(),
    };
    let job = LayerJob {
        a: &empty_a,
        b: &empty_b,
        quant: *cfg,
        assignment: &none,
    };
    let alpha = simulate_layer_output(Exec::Sequential, &job, hw, w)?.0.total_cycles as f64;

    let mut lines = Vec::new();
    for mode in [Mode::Snn, Mode::Ann] {
        let pts = counts
            .iter()
            .map(|&r| microbench(hw, w, cfg, shape, mode, r).map(|p| (r as f64, p)))
            .collect::<Result<Vec<_>>>()?;
        let e = fit(&pts.iter().map(|&(x, (e, _))| (x, e)).collect::<Vec<_>>())?;
        let l = fit(&pts.iter().map(|&(x, (_, l))| (x, l)).collect::<Vec<_>>())?;
        lines.push((e, l));
    }
    let core = |(e, l): (FitLine, FitLine), pes| CoreCost {
        eps: e.slope.max(0.0),
        zeta: e.intercept.max(0.0),
        beta: l.slope.max(0.0),
        delta: l.intercept.max(0.0),
        alpha,
        pes,
    };
    Ok(Calibration {
        params: CostParams {
            snn: core(lines[0], hw.snn_pes),
            ann: core(lines[1], hw.ann_pes),
            lambda: 1.0,
        },
        shape,
        snn_energy: lines[0].0,
        snn_latency: lines[0].1,
        ann_energy: lines[1].0,
        ann_latency: lines[1].1,
    })
}

/// Per-column coefficients for a layer of `rows` dot products per column:
/// fixed terms scale with `rows`, per-match terms do not.
pub fn scale_rows(mut params: CostParams, rows: usize) -> CostParams {
    for c in [&mut params.snn, &mut params.ann] {
        c.zeta *= rows as f64;
        c.delta *= rows as f64;
    }
    params
}

/// Calibrates on the layer's reduction length and mean activation row
/// occupancy, then scales to `rows`.
pub fn calibrate_layer(
    hw: &HardwareConfig,
    w: &EnergyWeights,
    cfg: &QuantConfig,
    k: usize,
    rows: usize,
    mean_a_nnz: f64,
) -> Result<CostParams> {
    let a_nnz = (mean_a_nnz.round() as usize).clamp(1, k.max(1));
    let cal = calibrate_for_shape(hw, w, cfg, MicroShape { k, a_nnz })?;
    Ok(scale_rows(cal.params, rows))
}

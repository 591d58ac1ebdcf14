//! Synthetic layers with controlled dual sparsity and column heterogeneity.
//!
//! Weight column `i` gets density `d_i` proportional to
//! `(1 + 9 * rank_i / (n - 1))^(-s)` for a seeded permutation of ranks, so the
//! exponent `s` spreads per-column match counts over up to `10^s`. Activations
//! carry QCFS levels uniform over `1..=L`; weights are uniform INT8 without 0.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{quantile_stats, ColumnStats};
use crate::neuro::QuantConfig;
use crate::par::{self, Exec};
use crate::sparse::{compress, match_count, BitmapMatrix, Layout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Gemm {
        m: usize,
        k: usize,
        n: usize,
    },
    Conv {
        cin: usize,
        h: usize,
        w: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub shape: Shape,
    pub act_density: f64,
    pub weight_density: f64,
    /// Exponent of the per-column weight density law; 0 is homogeneous.
    #[serde(default)]
    pub zipf: f64,
}

impl LayerDescriptor {
    pub fn validate(&self) -> Result<()> {
        for (what, d) in [("activation", self.act_density), ("weight", self.weight_density)] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Parameter(format!(
                    "{}: {what} density {d} not in (0, 1]",
                    self.name
                )));
            }
        }
        if !(self.zipf >= 0.0 && self.zipf.is_finite()) {
            return Err(Error::Parameter(format!("{}: zipf exponent must be >= 0", self.name)));
        }
        self.gemm_dims().map(|_| ())
    }

    /// `(M, K, N)` of the GEMM this layer lowers to.
    pub fn gemm_dims(&self) -> Result<(usize, usize, usize)> {
        match self.shape {
            Shape::Gemm { m, k, n } => {
                if m == 0 || k == 0 || n == 0 {
                    return Err(Error::Shape(format!("{}: zero GEMM dimension", self.name)));
                }
                Ok((m, k, n))
            }
            conv => im2col_dims(&conv),
        }
    }
}

fn out_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Shape("kernel and stride must be positive".into()));
    }
    let padded = size + 2 * pad;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// `M = outH * outW`, `K = Cin * kernel^2`, `N = Cout`.
pub fn im2col_dims(shape: &Shape) -> Result<(usize, usize, usize)> {
    match *shape {
        Shape::Gemm { m, k, n } => Ok((m, k, n)),
        Shape::Conv {
            cin,
            h,
            w,
            cout,
            kernel,
            stride,
            pad,
        } => {
            if cin == 0 || h == 0 || w == 0 || cout == 0 {
                return Err(Error::Shape("zero convolution dimension".into()));
            }
            let oh = out_extent(h, kernel, stride, pad)?;
            let ow = out_extent(w, kernel, stride, pad)?;
            Ok((oh * ow, cin * kernel * kernel, cout))
        }
    }
}

/// Unrolls a `cin x h x w` tensor into an `M x K` row-major patch matrix.
pub fn im2col(shape: &Shape, input: &[i8]) -> Result<Vec<i8>> {
    let Shape::Conv {
        cin,
        h,
        w,
        kernel,
        stride,
        pad,
        ..
    } = *shape
    else {
        return Ok(input.to_vec());
    };
    if input.len() != cin * h * w {
        return Err(Error::Dimension(format!(
            "{} input elements for a {cin}x{h}x{w} tensor",
            input.len()
        )));
    }
    let oh = out_extent(h, kernel, stride, pad)?;
    let ow = out_extent(w, kernel, stride, pad)?;
    let k = cin * kernel * kernel;
    let mut out = vec![0i8; oh * ow * k];
    for y in 0..oh {
        for x in 0..ow {
            let row = &mut out[(y * ow + x) * k..][..k];
            for c in 0..cin {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let iy = (y * stride + ky) as isize - pad as isize;
                        let ix = (x * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            row[(c * kernel + ky) * kernel + kx] = input[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Validation inputs for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    pub samples: Vec<BitmapMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub validation: SampleSet,
    /// Held-out input that is simulated.
    pub test: BitmapMatrix,
    /// `K x N`, column fibers.
    pub weights: BitmapMatrix,
}

// substream layout: 0 weights, 1 rank shuffle, 2 + s sample s
const WEIGHT_STREAM: u64 = 0;
const RANK_STREAM: u64 = 1;
const SAMPLE_BASE: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-column weight densities under the heterogeneity law.
pub fn column_densities(n: usize, k: usize, target: f64, zipf: f64, seed: u64) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(&mut stream(seed, RANK_STREAM));
    let raw: Vec<f64> = ranks
        .iter()
        .map(|&r| {
            let x = if n > 1 { r as f64 / (n - 1) as f64 } else { 0.0 };
            (1.0 + 9.0 * x).powf(-zipf)
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n.max(1) as f64;
    let lo = 1.0 / k.max(1) as f64;
    raw.iter()
        .map(|w| (target * w / mean).clamp(lo.min(1.0), 1.0))
        .collect()
}

fn nonzero_weight(rng: &mut ChaCha8Rng) -> i8 {
    let mag = rng.random_range(1..=127i8);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

fn activation_input(desc: &LayerDescriptor, cfg: &QuantConfig, rng: &mut ChaCha8Rng) -> Result<BitmapMatrix> {
    let (m, k, _) = desc.gemm_dims()?;
    let l = cfg.levels() as u8;
    let len = match desc.shape {
        Shape::Gemm { .. } => m * k,
        Shape::Conv { cin, h, w, .. } => cin * h * w,
    };
    let raw: Vec<i8> = (0..len)
        .map(|_| {
            if rng.random_bool(desc.act_density) {
                rng.random_range(1..=l) as i8
            } else {
                0
            }
        })
        .collect();
    let dense = im2col(&desc.shape, &raw)?;
    BitmapMatrix::from_dense(m, k, &dense, Layout::RowMajor)
}

pub fn gen_workload(desc: &LayerDescriptor, cfg: &QuantConfig, samples: usize, seed: u64) -> Result<Workload> {
    gen_workload_with(Exec::default(), desc, cfg, samples, seed)
}

/// Deterministic in `seed` regardless of `exec`: weights and every sample
/// draw from their own ChaCha8 substream.
pub fn gen_workload_with(
    exec: Exec,
    desc: &LayerDescriptor,
    cfg: &QuantConfig,
    samples: usize,
    seed: u64,
) -> Result<Workload> {
    desc.validate()?;
    let (_, k, n) = desc.gemm_dims()?;
    let dens = column_densities(n, k, desc.weight_density, desc.zipf, seed);
    let mut rng = stream(seed, WEIGHT_STREAM);
    let fibers = dens
        .iter()
        .map(|&d| {
            let col: Vec<i8> = (0..k)
                .map(|_| {
                    if rng.random_bool(d) {
                        nonzero_weight(&mut rng)
                    } else {
                        0
                    }
                })
                .collect();
            compress(&col)
        })
        .collect();
    let weights = BitmapMatrix::from_fibers(k, n, Layout::ColMajor, fibers)?;
    let mut inputs = par::try_map_range(exec, samples + 1, |s| {
        activation_input(desc, cfg, &mut stream(seed, SAMPLE_BASE + s as u64))
    })?;
    let test = inputs.pop().expect("samples + 1 >= 1");
    Ok(Workload {
        validation: SampleSet { seed, samples: inputs },
        test,
        weights,
    })
}

/// Per-sample, per-column match counts summed over rows.
pub fn match_samples(exec: Exec, samples: &SampleSet, b: &BitmapMatrix) -> Result<Vec<Vec<u64>>> {
    if b.layout != Layout::ColMajor {
        return Err(Error::Dimension("weights must be column-major".into()));
    }
    for a in &samples.samples {
        if a.layout != Layout::RowMajor || a.cols != b.rows {
            return Err(Error::Dimension(format!(
                "sample is {}x{}, weights are {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
    }
    par::try_map_range(exec, b.cols, |i| {
        let col = &b.fibers[i].bits;
        samples
            .samples
            .iter()
            .map(|a| {
                a.fibers
                    .iter()
                    .map(|row| match_count(&row.bits, col).map(|c| c as u64))
                    .sum::<Result<u64>>()
            })
            .collect()
    })
}

/// `r_i^(s)` for every column and sample, reduced to `r_hat` at quantile `q`.
pub fn profile(samples: &SampleSet, b: &BitmapMatrix, q: f64) -> Result<ColumnStats> {
    profile_with(Exec::default(), samples, b, q)
}

pub fn profile_with(exec: Exec, samples: &SampleSet, b: &BitmapMatrix, q: f64) -> Result<ColumnStats> {
    if samples.samples.is_empty() {
        return Err(Error::Input("profiling needs at least one sample".into()));
    }
    quantile_stats(match_samples(exec, samples, b)?, q)
}

/// Mean nonzeros per activation row over all samples.
pub fn mean_row_nnz(samples: &SampleSet) -> f64 {
    let (nnz, rows) = samples
        .samples
        .iter()
        .fold((0usize, 0usize), |(z, r), a| (z + a.nnz(), r + a.rows));
    if rows == 0 {
        0.0
    } else {
        nnz as f64 / rows as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub layers: Vec<LayerDescriptor>,
}

#[allow(clippy::too_many_arguments)]
fn conv(
    name: &str,
    cin: usize,
    hw: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    act: f64,
    wd: f64,
    zipf: f64,
) -> LayerDescriptor {
    LayerDescriptor {
        name: name.to_string(),
        shape: Shape::Conv {
            cin,
            h: hw,
            w: hw,
            cout,
            kernel,
            stride,
            pad: kernel / 2,
        },
        act_density: act,
        weight_density: wd,
        zipf,
    }
}

fn gemm(name: &str, m: usize, k: usize, n: usize, act: f64, wd: f64, zipf: f64) -> LayerDescriptor {
    LayerDescriptor {
        name: name.to_string(),
        shape: Shape::Gemm { m, k, n },
        act_density: act,
        weight_density: wd,
        zipf,
    }
}

/// Reduced-scale layer shapes in the style of VGG-16, ResNet-34, GoogLeNet
/// and a small BERT encoder. Shapes only; values are synthetic.
pub fn reference_suite() -> Vec<Network> {
    vec![
        Network {
            name: "vgg16".into(),
            layers: vec![
                conv("conv3_2", 32, 8, 768, 3, 1, 0.45, 0.35, 1.2),
                conv("conv4_1", 48, 8, 1024, 3, 1, 0.35, 0.30, 1.2),
                conv("conv5_1", 48, 6, 1024, 3, 1, 0.30, 0.30, 1.0),
            ],
        },
        Network {
            name: "resnet34".into(),
            layers: vec![
                conv("layer2.0", 32, 8, 768, 3, 1, 0.40, 0.40, 1.0),
                conv("layer3.0", 64, 8, 768, 3, 2, 0.35, 0.30, 1.3),
                conv("layer3.1", 48, 6, 1024, 3, 1, 0.35, 0.30, 1.1),
            ],
        },
        Network {
            name: "googlenet".into(),
            layers: vec![
                conv("inc3a.1x1", 256, 8, 768, 1, 1, 0.50, 0.45, 1.0),
                conv("inc3a.3x3", 32, 8, 768, 3, 1, 0.40, 0.35, 1.4),
                conv("inc4a.1x1", 384, 6, 1024, 1, 1, 0.45, 0.35, 1.1),
            ],
        },
        Network {
            name: "bert-mini".into(),
            layers: vec![
                gemm("attn.qkv", 64, 256, 768, 0.50, 0.40, 1.0),
                gemm("ffn.up", 64, 256, 1024, 0.45, 0.35, 1.2),
                gemm("ffn.down", 64, 1024, 256, 0.30, 0.35, 1.3),
            ],
        },
    ]
}

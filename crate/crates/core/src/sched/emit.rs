use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Provenance, Schedule, Strategy};
use crate::cost::{Assignment, Packing};
use crate::hash::content_hash;
use crate::{Error, Result};

/// Bit `i` of byte `i / 8` is column `i`; set means SNN.
pub fn mask_to_bytes(to_snn: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; to_snn.len().div_ceil(8)];
    for (i, _) in to_snn.iter().enumerate().filter(|(_, &s)| s) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn mask_from_bytes(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Format(format!("{} mask bytes for {n} columns", bytes.len())));
    }
    if !n.is_multiple_of(8) && bytes[n / 8] >> (n % 8) != 0 {
        return Err(Error::Format("mask has bits set past the last column".into()));
    }
    Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

#[derive(Serialize, Deserialize)]
struct LayerWire {
    n: usize,
    mask: String,
    snn_pes: Vec<Vec<usize>>,
    ann_pes: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleWire {
    strategy: Strategy,
    layers: Vec<LayerWire>,
    provenance: Provenance,
}

impl Serialize for Schedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleWire {
            strategy: self.strategy,
            layers: self
                .layers
                .iter()
                .map(|a| LayerWire {
                    n: a.to_snn.len(),
                    mask: B64.encode(mask_to_bytes(&a.to_snn)),
                    snn_pes: a.packing.snn.clone(),
                    ann_pes: a.packing.ann.clone(),
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = ScheduleWire::deserialize(d)?;
        let layers = w
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, lw)| decode_layer(lw).map_err(|e| D::Error::custom(format!("layer {l}: {e}"))))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Schedule {
            strategy: w.strategy,
            layers,
            provenance: w.provenance,
        })
    }
}

fn decode_layer(lw: LayerWire) -> Result<Assignment> {
    let bytes = B64
        .decode(&lw.mask)
        .map_err(|e| Error::Format(format!("mask is not base64: {e}")))?;
    let to_snn = mask_from_bytes(&bytes, lw.n)?;
    let mut seen = vec![false; lw.n];
    for (want_snn, pes) in [(true, &lw.snn_pes), (false, &lw.ann_pes)] {
        for &i in pes.iter().flatten() {
            if i >= lw.n || to_snn[i] != want_snn || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Integrity(format!(
                    "packing inconsistent with mask at column {i}"
                )));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Integrity(format!("column {i} missing from packing")));
    }
    Ok(Assignment {
        to_snn,
        packing: Packing {
            snn: lw.snn_pes,
            ann: lw.ann_pes,
        },
    })
}

pub fn emit_bitmask(schedule: &Schedule, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(schedule)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_schedule(path: &Path) -> Result<Schedule> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Compares stored provenance against the inputs at hand; mismatches are
/// logged and returned, not fatal.
pub fn check_provenance<P: Serialize + ?Sized, S: Serialize + ?Sized>(
    schedule: &Schedule,
    params: &P,
    stats: &S,
) -> Vec<String> {
    let mut warnings = Vec::new();
    if content_hash(params) != schedule.provenance.params_hash {
        warnings.push("schedule was built with different cost parameters".to_string());
    }
    if content_hash(stats) != schedule.provenance.stats_hash {
        warnings.push("schedule was built from different workload statistics".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    warnings
}

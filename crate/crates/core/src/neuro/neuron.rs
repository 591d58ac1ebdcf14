use super::{ActivationLevel, QuantConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MembraneState {
    pub potential: i32,
    pub emitted: u32,
}

/// Signature of the final neuron update, so alternative (e.g. fault-injected)
/// reset rules can be plugged into the SNN column path.
pub type ResetFn = fn(MembraneState, &QuantConfig) -> ActivationLevel;

/// Integrates one timestep's accumulated input into the membrane potential.
pub fn spike_count_step(state: MembraneState, o_t: i32) -> Result<MembraneState> {
    let potential = state.potential.checked_add(o_t).ok_or(Error::Overflow("spike count"))?;
    Ok(MembraneState {
        potential,
        emitted: state.emitted,
    })
}

/// Runs `L` threshold-subtract-and-fire steps on the fully integrated
/// potential. The half-step shift is injected once up front; afterwards each
/// step fires and subtracts one quantization step while the potential is at
/// or above threshold, and stays silent otherwise. The emitted count is the
/// output level.
pub fn soft_reset_update(state: MembraneState, cfg: &QuantConfig) -> ActivationLevel {
    let step = i64::from(cfg.step());
    let mut v = i64::from(state.potential) + step / 2;
    let mut emitted = 0u32;
    for _ in 0..cfg.levels() {
        if v >= step {
            v -= step;
            emitted += 1;
        }
    }
    // emitted <= L <= 8
    ActivationLevel(emitted as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::qcfs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_step_examples() {
        let s = spike_count_step(MembraneState::default(), 5).unwrap();
        assert_eq!(s.potential, 5);
        assert_eq!(s.emitted, 0);
        let o = [3, -7, 12, 0, 9];
        let folded = o
            .iter()
            .try_fold(MembraneState::default(), |s, &x| spike_count_step(s, x))
            .unwrap();
        assert_eq!(folded.potential, o.iter().sum::<i32>());
    }

    #[test]
    fn count_step_overflow_is_an_error() {
        let s = MembraneState {
            potential: i32::MAX - 1,
            emitted: 0,
        };
        assert!(matches!(spike_count_step(s, 2), Err(Error::Overflow(_))));
        let s = MembraneState {
            potential: i32::MIN,
            emitted: 0,
        };
        assert!(spike_count_step(s, -1).is_err());
    }

    #[test]
    fn reset_examples() {
        let c = QuantConfig::new(8, 16).unwrap();
        let st = |p| MembraneState {
            potential: p,
            emitted: 0,
        };
        assert_eq!(soft_reset_update(st(0), &c).level(), 0);
        assert_eq!(soft_reset_update(st(2 * 8 + 2), &c).level(), 8);
    }

    #[test]
    fn reset_equals_qcfs_million_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        for _ in 0..1_000_000 {
            let l = [2u32, 4, 8][rng.random_range(0..3)];
            let c = QuantConfig::new(l, l as i32 * rng.random_range(1..64)).unwrap();
            let p: i32 = rng.random_range(-4096..4096);
            let st = MembraneState {
                potential: p,
                emitted: 0,
            };
            assert_eq!(soft_reset_update(st, &c), qcfs(p as i64, &c));
        }
        // the rails, including potentials that would overflow a naive shift
        let c = QuantConfig::new(8, 8 * 1000).unwrap();
        for p in [i32::MIN, i32::MAX, -1, 0, 499, 500] {
            let st = MembraneState {
                potential: p,
                emitted: 0,
            };
            assert_eq!(soft_reset_update(st, &c), qcfs(p as i64, &c));
        }
    }
}

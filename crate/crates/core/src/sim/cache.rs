//! Line-granular FiberCache and per-bank conflict tracking.

/// Set-associative cache over dense line addresses. Victims are chosen by
/// fewest remaining scheduled uses, then least recently used.
#[derive(Debug, Clone)]
pub struct FiberCache {
    sets: usize,
    ways: usize,
    slots: Vec<Option<Slot>>,
    remaining: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    line: usize,
    last_use: u64,
}

impl FiberCache {
    /// `uses[line]` is how often the static schedule touches each line.
    pub fn new(sets: usize, ways: usize, uses: Vec<u32>) -> Self {
        FiberCache {
            sets,
            ways,
            slots: vec![None; sets * ways],
            remaining: uses,
        }
    }

    pub fn set_of(&self, line: usize) -> usize {
        line % self.sets
    }

    fn ways_of(&mut self, line: usize) -> &mut [Option<Slot>] {
        let s = self.set_of(line);
        &mut self.slots[s * self.ways..(s + 1) * self.ways]
    }

    /// Fills a free way without counting a use; returns false when the set
    /// is already full.
    pub fn prefetch(&mut self, line: usize) -> bool {
        let ways = self.ways_of(line);
        if ways.iter().flatten().any(|s| s.line == line) {
            return true;
        }
        match ways.iter_mut().find(|w| w.is_none()) {
            Some(w) => {
                *w = Some(Slot { line, last_use: 0 });
                true
            }
            None => false,
        }
    }

    /// Demand access at cycle `now`; returns whether it hit.
    pub fn access(&mut self, line: usize, now: u64) -> bool {
        self.remaining[line] = self.remaining[line].saturating_sub(1);
        let s = self.set_of(line);
        let base = s * self.ways;
        let ways = &mut self.slots[base..base + self.ways];
        if let Some(slot) = ways.iter_mut().flatten().find(|w| w.line == line) {
            slot.last_use = now;
            return true;
        }
        let remaining = &self.remaining;
        let victim = ways
            .iter()
            .enumerate()
            .min_by_key(|(_, w)| match w {
                None => (0, false, 0),
                Some(w) => (remaining[w.line], true, w.last_use),
            })
            .map(|(i, _)| i)
            .expect("ways >= 1");
        ways[victim] = Some(Slot { line, last_use: now });
        false
    }
}

const EMPTY: (u64, usize) = (u64::MAX, usize::MAX);

/// Remembers which line each bank served in each of the last `window`
/// cycles. Two different lines on one bank in one cycle conflict; the same
/// line is broadcast.
#[derive(Debug, Clone)]
pub struct BankTracker {
    window: usize,
    ring: Vec<(u64, usize)>,
}

impl BankTracker {
    pub fn new(banks: usize, window: usize) -> Self {
        BankTracker {
            window,
            ring: vec![EMPTY; banks * window],
        }
    }

    /// Claims `bank` at `cycle` for `line`; false on conflict.
    pub fn claim(&mut self, bank: usize, cycle: u64, line: usize) -> bool {
        let slot = &mut self.ring[bank * self.window + (cycle % self.window as u64) as usize];
        if slot.0 == cycle && slot.1 != line {
            return false;
        }
        *slot = (cycle, line);
        true
    }
}

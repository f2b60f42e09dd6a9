//! Timestamp compaction for narrow counters.
//!
//! The profiler only ever compares timestamps with each other: a thread's
//! `ts_t` against frame timestamps and against `wts`. So when `count` gets
//! close to `2^w - 1`, all live timestamps can be replaced by small values
//! that keep every one of those comparisons intact.
//!
//! With `A` the sorted timestamps of all pending frames, the frame of rank
//! `p` (1-based) becomes `3p`. A written cell whose `wts` lies between
//! `A[q]` and `A[q+1]` gets `wts = 3q + 1`, and a thread access inside the
//! same gap maps to `3q` if it came before the write and `3q + 2` if after.
//! Accesses outside the gap, and accesses to never-written cells, map to
//! `3 * rank(ts)`. Afterwards `count = 3|A| + 3`, above everything.

use crate::profiler::{ProfileError, Session};
use crate::search::{ceil_log2, rank_le};

/// What one renumbering pass did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenumberStats {
    pub pending: usize,
    pub threads: usize,
    /// Nonzero shadow entries rewritten, thread tables plus the global table.
    pub entries: u64,
    pub comparisons: u64,
    pub max_entry_comparisons: u32,
}

/// New value for a thread timestamp `ts` of a cell last written at `wts`.
fn remap(frames: &[u64], ts: u64, wts: u64) -> (u64, u32) {
    let rank = |key| {
        let (r, c) = rank_le(frames, key);
        (3 * r as u64, c)
    };
    if wts == 0 {
        return rank(ts);
    }
    let (q, mut cmps) = rank_le(frames, wts);
    let lo = if q == 0 { 0 } else { frames[q - 1] };
    let hi = frames.get(q).copied();
    let q = q as u64;
    let out = if ts < lo || hi.is_some_and(|h| ts >= h) {
        let (v, c) = rank(ts);
        cmps += c;
        v
    } else if ts == wts {
        3 * q + 1
    } else if ts < wts {
        3 * q
    } else {
        3 * q + 2
    };
    (out, cmps)
}

impl Session {
    /// Largest `count` at which the next increment still needs no
    /// renumbering.
    fn renumber_threshold(&self) -> u64 {
        self.config
            .width
            .max_value()
            .saturating_sub(self.config.renumber_margin)
    }

    /// Renumbers when `count` has reached the threshold. Fails if even a
    /// fresh numbering leaves no room.
    pub fn maybe_renumber(&mut self) -> Result<Option<RenumberStats>, ProfileError> {
        let threshold = self.renumber_threshold();
        if self.count < threshold {
            return Ok(None);
        }
        let stats = self.renumber();
        if self.count >= threshold {
            return Err(ProfileError::RenumberInsufficient {
                pending: stats.pending,
                count: self.count,
                width: self.config.width.bits(),
                margin: self.config.renumber_margin,
            });
        }
        Ok(Some(stats))
    }

    /// Compacts every live timestamp, unconditionally.
    pub fn renumber(&mut self) -> RenumberStats {
        let mut frames: Vec<u64> = self
            .threads
            .values()
            .flat_map(|t| t.stack.iter().map(|f| f.ts))
            .collect();
        frames.sort_unstable();
        debug_assert!(frames.windows(2).all(|w| w[0] < w[1]), "frame stamps are unique");

        let bound = 2 * (ceil_log2(frames.len()) + 1);
        let mut stats = RenumberStats {
            pending: frames.len(),
            threads: self.threads.len(),
            ..Default::default()
        };
        let mut over_bound = 0u64;
        let mut account = |stats: &mut RenumberStats, c: u32| {
            stats.entries += 1;
            stats.comparisons += c as u64;
            stats.max_entry_comparisons = stats.max_entry_comparisons.max(c);
            if c > bound {
                over_bound += 1;
            }
        };

        // Thread tables first: their mapping needs the old `wts`.
        let global = &self.global;
        for thread in self.threads.values_mut() {
            thread.ts.update_nonzero(|cell, ts| {
                let (v, c) = remap(&frames, ts, global.wts(cell));
                account(&mut stats, c);
                v
            });
            for frame in thread.stack.iter_mut() {
                let (p, _) = rank_le(&frames, frame.ts);
                frame.ts = 3 * p as u64;
            }
        }
        self.global.table_mut().update_nonzero(|_, wts| {
            let (q, c) = rank_le(&frames, wts);
            account(&mut stats, c);
            3 * q as u64 + 1
        });

        self.count = 3 * frames.len() as u64 + 3;
        self.stats.renumberings += 1;
        self.stats.renumber_entries += stats.entries;
        self.stats.renumber_comparisons += stats.comparisons;
        self.stats.renumber_bound_exceeded += over_bound;
        log::debug!(
            "renumbered {} entries around {} pending frames, count now {}",
            stats.entries,
            stats.pending,
            self.count
        );
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::ProfilerConfig;
    use crate::shadow::Geometry;
    use crate::trace::RoutineId;

    fn session(width: u8) -> Session {
        Session::new(
            ProfilerConfig::default()
                .with_width(width)
                .unwrap()
                .with_geometry(Geometry::tiny()),
        )
    }

    #[test]
    fn single_frame_example() {
        let mut s = session(16);
        s.on_call(1, RoutineId(1)).unwrap();
        s.count = 900;
        s.threads.get_mut(&1).unwrap().stack[0].ts = 900;
        s.threads.get_mut(&1).unwrap().ts.set(7, 950).unwrap();
        s.global
            .record_write(7, 920, crate::shadow::WriterTag::Thread(2))
            .unwrap();
        s.count = 960;
        s.renumber();
        assert_eq!(s.thread(1).unwrap().stack()[0].ts, 3);
        assert_eq!(s.global().wts(7), 4);
        assert_eq!(s.thread(1).unwrap().timestamps().get(7), 5);
        assert_eq!(s.count(), 6);
        assert_eq!(
            s.global().writer(7),
            Some(crate::shadow::WriterTag::Thread(2))
        );
    }

    #[test]
    fn empty_state_resets_count() {
        let mut s = session(8);
        s.count = 200;
        let stats = s.renumber();
        assert_eq!(s.count(), 3);
        assert_eq!(stats.pending, 0);
    }

    #[test]
    fn trigger_threshold() {
        let mut s = session(8);
        s.count = 250;
        assert_eq!(s.maybe_renumber().unwrap(), None);
        s.count = 251;
        assert!(s.maybe_renumber().unwrap().is_some());
        assert_eq!(s.count(), 3);
    }

    #[test]
    fn too_many_pending_frames() {
        let mut s = session(8);
        for i in 0..90 {
            s.on_call(1, RoutineId(i)).unwrap();
        }
        s.count = 251;
        assert_eq!(
            s.maybe_renumber(),
            Err(ProfileError::RenumberInsufficient {
                pending: 90,
                count: 273,
                width: 8,
                margin: 4
            })
        );
    }

    #[test]
    fn remap_cases() {
        let frames = [10, 20, 30];
        // wts 25 sits between frames 2 and 3 (q = 2).
        assert_eq!(remap(&frames, 25, 25).0, 7);
        assert_eq!(remap(&frames, 21, 25).0, 6);
        assert_eq!(remap(&frames, 20, 25).0, 6);
        assert_eq!(remap(&frames, 27, 25).0, 8);
        assert_eq!(remap(&frames, 15, 25).0, 3);
        assert_eq!(remap(&frames, 35, 25).0, 9);
        assert_eq!(remap(&frames, 5, 25).0, 0);
        assert_eq!(remap(&frames, 15, 0).0, 3);
    }

    #[test]
    fn remap_before_first_frame() {
        assert_eq!(remap(&[10], 3, 5).0, 0);
        assert_eq!(remap(&[10], 5, 5).0, 1);
        assert_eq!(remap(&[10], 7, 5).0, 2);
        assert_eq!(remap(&[10], 12, 5).0, 3);
    }
}

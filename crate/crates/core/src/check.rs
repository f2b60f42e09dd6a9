//! Running the profiler next to the reference implementation.

use thiserror::Error;

use crate::oracle::NaiveProfiler;
use crate::profiler::{ProfilerConfig, RunError, Session, Stats};
use crate::store::{ProfileStore, ProfileTuple};
use crate::trace::{TraceError, TraceEvent};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Compare the final store against the reference profiler.
    pub oracle: bool,
    /// After every event, compare the pending TRMS of the acting thread with
    /// the reference and check the counter bookkeeping.
    pub invariants: bool,
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("invariant broken after event {index}: {what}")]
    Invariant { index: u64, what: String },
    #[error("tuple {index} differs: profiler {fast:?}, reference {naive:?}")]
    Mismatch {
        index: usize,
        fast: Option<Box<ProfileTuple>>,
        naive: Option<Box<ProfileTuple>>,
    },
}

fn invariant(index: u64, what: String) -> CheckError {
    CheckError::Invariant { index, what }
}

/// Profiles `events`, cross-checking as requested by `opts`.
pub fn run_checked(
    events: impl IntoIterator<Item = Result<TraceEvent, TraceError>>,
    config: ProfilerConfig,
    opts: CheckOptions,
) -> Result<(ProfileStore, Stats), CheckError> {
    let mut session = Session::new(config);
    let mut naive = (opts.oracle || opts.invariants).then(|| NaiveProfiler::new(&config));
    for (index, ev) in events.into_iter().enumerate() {
        let ev = ev.map_err(RunError::from)?;
        let index = index as u64;
        let before = session.stats();
        let count_before = session.count();
        session.process(&ev).map_err(|source| RunError::Event {
            index,
            tid: ev.tid,
            ts: ev.ts,
            source,
        })?;
        if let Some(n) = naive.as_mut() {
            n.process(&ev).map_err(|source| RunError::Event {
                index,
                tid: ev.tid,
                ts: ev.ts,
                source,
            })?;
        }
        if !opts.invariants {
            continue;
        }
        let after = session.stats();
        let ticks = (after.calls - before.calls)
            + (after.switches - before.switches)
            + (after.root_frames - before.root_frames)
            + (after.kernel_write_cells - before.kernel_write_cells);
        if after.renumberings == before.renumberings && session.count() != count_before + ticks {
            return Err(invariant(
                index,
                format!(
                    "count moved from {count_before} to {} for {ticks} ticks",
                    session.count()
                ),
            ));
        }
        if after.search_bound_exceeded != 0 {
            return Err(invariant(index, "ancestor search exceeded its bound".into()));
        }
        let fast = session.pending_trms(ev.tid);
        let reference = naive.as_ref().unwrap().pending_trms(ev.tid);
        if fast != reference {
            return Err(invariant(
                index,
                format!("thread {} pending TRMS {fast:?}, expected {reference:?}", ev.tid),
            ));
        }
    }
    if opts.invariants {
        let s = session.stats();
        let expected = s.calls + s.switches + s.root_frames + s.kernel_write_cells;
        if s.renumberings == 0 && session.count() != expected {
            return Err(invariant(
                s.events,
                format!("final count {} but {expected} ticks", session.count()),
            ));
        }
    }
    let (store, stats) = session.finish();
    if let Some(n) = naive {
        let reference = n.finish();
        compare_stores(&store, &reference)?;
    }
    if opts.invariants {
        if let Some(t) = store.iter().find(|t| t.trms < t.rms) {
            return Err(invariant(stats.events, format!("trms below rms in {t:?}")));
        }
    }
    Ok((store, stats))
}

/// First position where two stores disagree, if any.
pub fn compare_stores(fast: &ProfileStore, naive: &ProfileStore) -> Result<(), CheckError> {
    let n = fast.len().max(naive.len());
    for index in 0..n {
        let a = fast.tuples().get(index).copied();
        let b = naive.tuples().get(index).copied();
        if a != b {
            return Err(CheckError::Mismatch {
                index,
                fast: a.map(Box::new),
                naive: b.map(Box::new),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracegen::gen_example_2b;

    #[test]
    fn mismatch_is_reported_at_first_difference() {
        let trace = gen_example_2b().merged();
        let (store, _) = run_checked(
            trace.iter().copied().map(Ok),
            ProfilerConfig::default(),
            CheckOptions { oracle: true, invariants: true },
        )
        .unwrap();
        let mut tampered: Vec<_> = store.iter().copied().collect();
        tampered[1].trms += 1;
        let tampered: ProfileStore = tampered.into_iter().collect();
        assert!(matches!(
            compare_stores(&store, &tampered),
            Err(CheckError::Mismatch { index: 1, .. })
        ));
        let shorter: ProfileStore = store.iter().copied().take(1).collect();
        assert!(matches!(
            compare_stores(&store, &shorter),
            Err(CheckError::Mismatch { index: 1, naive: None, .. })
        ));
    }
}

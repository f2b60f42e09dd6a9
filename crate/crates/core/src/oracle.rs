//! Reference profiler that keeps explicit per-activation sets.
//!
//! Every pending activation holds the set of cells it has accessed since the
//! latest write to them by another thread or the kernel, plus the set of
//! cells it has accessed at all. A read adds to TRMS when the cell is missing
//! from the first set and to RMS when it is missing from the second.
//! Quadratic in the worst case and only meant for cross-checking.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::profiler::{ProfileError, ProfilerConfig, RunError};
use crate::shadow::WriterTag;
use crate::store::{ProfileStore, ProfileTuple};
use crate::trace::{EventKind, Granularity, MergedTrace, RoutineId, ThreadId, TraceEvent};

#[derive(Debug)]
struct Activation {
    rtn: RoutineId,
    live: HashSet<u64>,
    seen: HashSet<u64>,
    trms: u64,
    rms: u64,
    entry_cost: u64,
    self_thread: u64,
    self_external: u64,
    incl_thread: u64,
    incl_external: u64,
}

#[derive(Debug, Default)]
struct NaiveThread {
    stack: Vec<Activation>,
    /// Cells accessed since their latest foreign write.
    live: HashSet<u64>,
    cost: u64,
}

#[derive(Debug)]
pub struct NaiveProfiler {
    granularity: Granularity,
    threads: BTreeMap<ThreadId, NaiveThread>,
    last_writer: HashMap<u64, WriterTag>,
    store: ProfileStore,
}

impl NaiveProfiler {
    pub fn new(config: &ProfilerConfig) -> Self {
        Self {
            granularity: config.granularity,
            threads: BTreeMap::new(),
            last_writer: HashMap::new(),
            store: ProfileStore::new(),
        }
    }

    /// TRMS of every pending activation of `tid`, bottom to top.
    pub fn pending_trms(&self, tid: ThreadId) -> Vec<i64> {
        self.threads
            .get(&tid)
            .map(|t| t.stack.iter().map(|a| a.trms as i64).collect())
            .unwrap_or_default()
    }

    pub fn store(&self) -> &ProfileStore {
        &self.store
    }

    fn push(&mut self, tid: ThreadId, rtn: RoutineId) {
        let t = self.threads.entry(tid).or_default();
        t.stack.push(Activation {
            rtn,
            live: HashSet::new(),
            seen: HashSet::new(),
            trms: 0,
            rms: 0,
            entry_cost: t.cost,
            self_thread: 0,
            self_external: 0,
            incl_thread: 0,
            incl_external: 0,
        });
    }

    fn pop(tid: ThreadId, t: &mut NaiveThread, truncated: bool) -> ProfileTuple {
        let a = t.stack.pop().unwrap();
        ProfileTuple {
            rtn: a.rtn,
            tid,
            trms: a.trms,
            rms: a.rms,
            cost: t.cost - a.entry_cost,
            induced_thread: a.incl_thread,
            induced_external: a.incl_external,
            truncated,
            self_induced_thread: a.self_thread,
            self_induced_external: a.self_external,
        }
    }

    fn read(&mut self, tid: ThreadId, cell: u64) {
        let writer = self.last_writer.get(&cell).copied();
        let t = self.threads.get_mut(&tid).unwrap();
        let induced = writer.is_some() && !t.live.contains(&cell);
        for a in t.stack.iter_mut() {
            if a.live.insert(cell) {
                a.trms += 1;
            }
            if a.seen.insert(cell) {
                a.rms += 1;
            }
            if induced {
                match writer {
                    Some(WriterTag::Kernel) => a.incl_external += 1,
                    _ => a.incl_thread += 1,
                }
            }
        }
        if induced {
            let top = t.stack.last_mut().unwrap();
            match writer {
                Some(WriterTag::Kernel) => top.self_external += 1,
                _ => top.self_thread += 1,
            }
        }
        t.live.insert(cell);
    }

    fn forget(t: &mut NaiveThread, cell: u64) {
        t.live.remove(&cell);
        for a in t.stack.iter_mut() {
            a.live.remove(&cell);
        }
    }

    fn write(&mut self, tid: ThreadId, cell: u64) {
        for (&other, t) in self.threads.iter_mut() {
            if other != tid {
                Self::forget(t, cell);
            }
        }
        let t = self.threads.get_mut(&tid).unwrap();
        t.live.insert(cell);
        for a in t.stack.iter_mut() {
            a.live.insert(cell);
            a.seen.insert(cell);
        }
        self.last_writer.insert(cell, WriterTag::Thread(tid));
    }

    fn kernel_write(&mut self, cell: u64) {
        for t in self.threads.values_mut() {
            Self::forget(t, cell);
        }
        self.last_writer.insert(cell, WriterTag::Kernel);
    }

    pub fn process(&mut self, ev: &TraceEvent) -> Result<(), ProfileError> {
        let tid = ev.tid;
        if let Some(a) = ev.kind.access() {
            if self.threads.get(&tid).is_none_or(|t| t.stack.is_empty()) {
                self.push(tid, RoutineId::ROOT);
            }
            self.threads.get_mut(&tid).unwrap().cost += 1;
            for cell in a.cells(self.granularity) {
                match ev.kind {
                    EventKind::Read(_) | EventKind::KernelRead(_) => self.read(tid, cell),
                    EventKind::Write(_) => self.write(tid, cell),
                    EventKind::KernelWrite(_) => self.kernel_write(cell),
                    _ => unreachable!(),
                }
            }
            return Ok(());
        }
        match ev.kind {
            EventKind::Call(rtn) => {
                self.threads.entry(tid).or_default().cost += 1;
                self.push(tid, rtn);
            }
            EventKind::Return => {
                let t = self.threads.entry(tid).or_default();
                if t.stack.last().is_none_or(|a| a.rtn.is_root()) {
                    return Err(ProfileError::ReturnOnEmptyStack { tid });
                }
                let tuple = Self::pop(tid, t, false);
                t.cost += 1;
                self.store.push(tuple);
            }
            EventKind::Cost(n) => {
                let t = self.threads.entry(tid).or_default();
                t.cost = t.cost.saturating_add(n);
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn finish(mut self) -> ProfileStore {
        for (&tid, t) in self.threads.iter_mut() {
            while !t.stack.is_empty() {
                let tuple = Self::pop(tid, t, true);
                self.store.push(tuple);
            }
        }
        self.store
    }
}

/// Profiles a merged trace with the reference implementation.
pub fn naive_run(trace: &MergedTrace, config: &ProfilerConfig) -> Result<ProfileStore, RunError> {
    let mut p = NaiveProfiler::new(config);
    for (index, ev) in trace.iter().enumerate() {
        p.process(ev).map_err(|source| RunError::Event {
            index: index as u64,
            tid: ev.tid,
            ts: ev.ts,
            source,
        })?;
    }
    Ok(p.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{merge, Access};

    fn ev(tid: ThreadId, ts: u64, kind: EventKind) -> TraceEvent {
        TraceEvent::new(tid, ts, kind)
    }

    #[test]
    fn reread_after_foreign_write() {
        let x = Access::new(8, 1);
        let trace = merge(vec![
            vec![
                ev(1, 1, EventKind::Call(RoutineId(1))),
                ev(1, 2, EventKind::Read(x)),
                ev(1, 6, EventKind::Read(x)),
                ev(1, 7, EventKind::Return),
            ],
            vec![
                ev(2, 3, EventKind::Call(RoutineId(2))),
                ev(2, 4, EventKind::Write(x)),
                ev(2, 5, EventKind::Return),
            ],
        ]);
        let store = naive_run(&trace, &ProfilerConfig::default()).unwrap();
        let f = store.find(RoutineId(1)).unwrap();
        assert_eq!((f.trms, f.rms, f.induced_thread), (2, 1, 1));
        let g = store.find(RoutineId(2)).unwrap();
        assert_eq!((g.trms, g.rms), (0, 0));
    }

    #[test]
    fn return_without_call() {
        let trace = merge(vec![vec![ev(1, 1, EventKind::Return)]]);
        assert!(naive_run(&trace, &ProfilerConfig::default()).is_err());
    }
}

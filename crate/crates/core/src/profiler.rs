//! The read/write timestamping profiler.
//!
//! A single global counter `count` advances at every routine call, thread
//! switch and kernel write. Every thread keeps a shadow stack of pending
//! activations and a shadow memory `ts_t` holding, per cell, the value of
//! `count` at the thread's latest access. A global shadow memory `wts` holds
//! the value of `count` at the latest write to each cell, by any thread or by
//! the kernel.
//!
//! Each frame carries a *partial* TRMS: the TRMS of the i-th pending
//! activation is the sum of the partials from frame i to the top of the
//! stack. A read that hits a cell written by someone else since the thread
//! last touched it (`ts_t < wts`) is an induced first-access and bumps only
//! the top partial, which implicitly credits every ancestor. Otherwise, if the
//! thread last touched the cell before the top activation started, the read
//! is a first access for the top activation and for every ancestor newer than
//! that last access: the top partial goes up and the partial of the newest
//! activation that had already seen the cell goes down.
//!
//! RMS is tracked the same way with a second partial counter that only looks
//! at `ts_t`, so kernel and foreign writes never make a cell new again.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::search::{ceil_log2, rank_le_by};
use crate::shadow::{CounterWidth, Geometry, GlobalShadow, ShadowError, TimestampTable, WriterTag};
use crate::store::{ProfileStore, ProfileTuple};
use crate::trace::{EventKind, Granularity, MergedTrace, RoutineId, ThreadId, TraceError, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("thread {tid}: return with no pending routine")]
    ReturnOnEmptyStack { tid: ThreadId },
    #[error(
        "{pending} pending activations leave no headroom in a {width}-bit counter \
         (renumbered count {count}, margin {margin})"
    )]
    RenumberInsufficient {
        pending: usize,
        count: u64,
        width: u8,
        margin: u64,
    },
    #[error(transparent)]
    Shadow(#[from] ShadowError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("event {index} (thread {tid}, ts {ts}): {source}")]
    Event {
        index: u64,
        tid: ThreadId,
        ts: u64,
        #[source]
        source: ProfileError,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfilerConfig {
    pub width: CounterWidth,
    /// Renumber once `count` comes within this distance of `2^w - 1`.
    pub renumber_margin: u64,
    pub granularity: Granularity,
    pub geometry: Geometry,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        Self {
            width: CounterWidth::default(),
            renumber_margin: 4,
            granularity: Granularity::default(),
            geometry: Geometry::default(),
        }
    }
}

impl ProfilerConfig {
    pub fn with_width(mut self, bits: u8) -> Result<Self, ShadowError> {
        self.width = CounterWidth::new(bits)?;
        Ok(self)
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn with_margin(mut self, margin: u64) -> Self {
        self.renumber_margin = margin;
        self
    }
}

/// One pending activation on a thread's shadow stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub rtn: RoutineId,
    /// Value of `count` when the activation started.
    pub ts: u64,
    pub partial_trms: i64,
    pub partial_rms: i64,
    pub entry_cost: u64,
    pub self_induced_thread: u64,
    pub self_induced_external: u64,
    pub induced_thread: u64,
    pub induced_external: u64,
}

impl Frame {
    fn new(rtn: RoutineId, ts: u64, entry_cost: u64) -> Self {
        Self {
            rtn,
            ts,
            partial_trms: 0,
            partial_rms: 0,
            entry_cost,
            self_induced_thread: 0,
            self_induced_external: 0,
            induced_thread: 0,
            induced_external: 0,
        }
    }
}

#[derive(Debug)]
pub struct ThreadState {
    pub(crate) stack: Vec<Frame>,
    pub(crate) ts: TimestampTable,
    pub(crate) cost: u64,
}

impl ThreadState {
    fn new(config: &ProfilerConfig) -> Self {
        Self {
            stack: Vec::new(),
            ts: TimestampTable::new(config.geometry, config.width),
            cost: 0,
        }
    }

    pub fn stack(&self) -> &[Frame] {
        &self.stack
    }

    pub fn timestamps(&self) -> &TimestampTable {
        &self.ts
    }

    pub fn cost(&self) -> u64 {
        self.cost
    }

    /// Current TRMS of every pending activation, bottom to top.
    pub fn pending_trms(&self) -> Vec<i64> {
        suffix_sums(self.stack.iter().map(|f| f.partial_trms))
    }

    /// Current RMS of every pending activation, bottom to top.
    pub fn pending_rms(&self) -> Vec<i64> {
        suffix_sums(self.stack.iter().map(|f| f.partial_rms))
    }
}

fn suffix_sums(partials: impl DoubleEndedIterator<Item = i64>) -> Vec<i64> {
    let mut acc = 0;
    let mut out: Vec<i64> = partials
        .rev()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    out.reverse();
    out
}

/// Counters describing what a session did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub events: u64,
    pub calls: u64,
    pub switches: u64,
    pub root_frames: u64,
    pub kernel_write_cells: u64,
    pub renumberings: u64,
    pub ancestor_searches: u64,
    pub ancestor_comparisons: u64,
    /// Searches that needed more than `ceil(log2(depth)) + 1` comparisons.
    pub search_bound_exceeded: u64,
    /// Shadow entries rewritten by renumbering, over all tables.
    pub renumber_entries: u64,
    pub renumber_comparisons: u64,
    /// Entries whose remapping needed more than `2 * (ceil(log2(pending)) + 1)`
    /// comparisons.
    pub renumber_bound_exceeded: u64,
}

/// Complete profiler state for one trace.
#[derive(Debug)]
pub struct Session {
    pub(crate) count: u64,
    pub(crate) global: GlobalShadow,
    pub(crate) threads: BTreeMap<ThreadId, ThreadState>,
    pub(crate) last_tid: Option<ThreadId>,
    pub(crate) store: ProfileStore,
    pub(crate) config: ProfilerConfig,
    pub(crate) stats: Stats,
}

impl Session {
    pub fn new(config: ProfilerConfig) -> Self {
        Self {
            count: 0,
            global: GlobalShadow::new(config.geometry, config.width),
            threads: BTreeMap::new(),
            last_tid: None,
            store: ProfileStore::new(),
            config,
            stats: Stats::default(),
        }
    }

    pub fn config(&self) -> &ProfilerConfig {
        &self.config
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn global(&self) -> &GlobalShadow {
        &self.global
    }

    pub fn thread(&self, tid: ThreadId) -> Option<&ThreadState> {
        self.threads.get(&tid)
    }

    pub fn threads(&self) -> impl Iterator<Item = (ThreadId, &ThreadState)> {
        self.threads.iter().map(|(t, s)| (*t, s))
    }

    pub fn store(&self) -> &ProfileStore {
        &self.store
    }

    /// Current TRMS of each pending activation of `tid`, bottom to top.
    pub fn pending_trms(&self, tid: ThreadId) -> Vec<i64> {
        self.threads.get(&tid).map(|t| t.pending_trms()).unwrap_or_default()
    }

    pub fn pending_activations(&self) -> usize {
        self.threads.values().map(|t| t.stack.len()).sum()
    }

    fn thread_mut(&mut self, tid: ThreadId) -> &mut ThreadState {
        let config = self.config;
        self.threads
            .entry(tid)
            .or_insert_with(|| ThreadState::new(&config))
    }

    /// Advances `count`, renumbering first if the counter is about to run
    /// out of room.
    fn tick(&mut self) -> Result<u64, ProfileError> {
        self.maybe_renumber()?;
        self.count += 1;
        Ok(self.count)
    }

    /// Pushes the synthetic root frame if `tid` has nothing pending, so
    /// accesses outside any routine still have an owner.
    fn ensure_frame(&mut self, tid: ThreadId) -> Result<(), ProfileError> {
        if self.threads.get(&tid).is_some_and(|t| !t.stack.is_empty()) {
            return Ok(());
        }
        let ts = self.tick()?;
        self.stats.root_frames += 1;
        let thread = self.thread_mut(tid);
        let cost = thread.cost;
        thread.stack.push(Frame::new(RoutineId::ROOT, ts, cost));
        Ok(())
    }

    pub fn on_call(&mut self, tid: ThreadId, rtn: RoutineId) -> Result<(), ProfileError> {
        let ts = self.tick()?;
        self.stats.calls += 1;
        let thread = self.thread_mut(tid);
        let cost = thread.cost;
        thread.stack.push(Frame::new(rtn, ts, cost));
        Ok(())
    }

    /// Pops the top activation and records its tuple. The root frame cannot
    /// be returned from.
    pub fn on_return(&mut self, tid: ThreadId) -> Result<ProfileTuple, ProfileError> {
        let thread = match self.threads.get_mut(&tid) {
            Some(t) if t.stack.last().is_some_and(|f| !f.rtn.is_root()) => t,
            _ => return Err(ProfileError::ReturnOnEmptyStack { tid }),
        };
        let tuple = pop_frame(tid, thread, false);
        self.store.push(tuple);
        Ok(tuple)
    }

    pub fn on_switch(&mut self) -> Result<(), ProfileError> {
        self.tick()?;
        self.stats.switches += 1;
        Ok(())
    }

    pub fn on_read(&mut self, tid: ThreadId, cell: u64) -> Result<(), ProfileError> {
        self.ensure_frame(tid)?;
        let count = self.count;
        let (wts, writer) = self.global.get(cell);
        let thread = self.threads.get_mut(&tid).expect("frame ensured");
        let last = thread.ts.get(cell);
        let stack = &mut thread.stack;
        let top = stack.len() - 1;
        let top_ts = stack[top].ts;

        // Newest pending activation that already saw the cell, if any.
        let mut ancestor = None;
        if last != 0 && last < top_ts {
            let (rank, comparisons) = rank_le_by(stack.len(), |i| stack[i].ts, last);
            self.stats.ancestor_searches += 1;
            self.stats.ancestor_comparisons += comparisons as u64;
            if comparisons > ceil_log2(stack.len()) + 1 {
                self.stats.search_bound_exceeded += 1;
            }
            ancestor = rank.checked_sub(1);
        }

        if last < wts {
            let frame = &mut stack[top];
            frame.partial_trms += 1;
            match writer {
                Some(WriterTag::Kernel) => {
                    frame.self_induced_external += 1;
                    frame.induced_external += 1;
                }
                Some(WriterTag::Thread(w)) => {
                    debug_assert_ne!(w, tid, "own write cannot make a read induced");
                    frame.self_induced_thread += 1;
                    frame.induced_thread += 1;
                }
                None => unreachable!("nonzero wts without a writer"),
            }
        } else if last < top_ts {
            stack[top].partial_trms += 1;
            if let Some(i) = ancestor {
                stack[i].partial_trms -= 1;
            }
        }

        if last < top_ts {
            stack[top].partial_rms += 1;
            if let Some(i) = ancestor {
                stack[i].partial_rms -= 1;
            }
        }

        thread.ts.set(cell, count)?;
        Ok(())
    }

    pub fn on_write(&mut self, tid: ThreadId, cell: u64) -> Result<(), ProfileError> {
        self.ensure_frame(tid)?;
        let count = self.count;
        let thread = self.threads.get_mut(&tid).expect("frame ensured");
        thread.ts.set(cell, count)?;
        self.global.record_write(cell, count, WriterTag::Thread(tid))?;
        Ok(())
    }

    /// The kernel reading thread memory (e.g. to send it) counts as a read by
    /// the thread.
    pub fn on_kernel_read(&mut self, tid: ThreadId, cell: u64) -> Result<(), ProfileError> {
        self.on_read(tid, cell)
    }

    /// The kernel filling a buffer: stamps the cell newer than every thread's
    /// access without touching any thread's own timestamps.
    pub fn on_kernel_write(&mut self, tid: ThreadId, cell: u64) -> Result<(), ProfileError> {
        self.ensure_frame(tid)?;
        let stamp = self.tick()?;
        self.stats.kernel_write_cells += 1;
        self.global.record_write(cell, stamp, WriterTag::Kernel)?;
        Ok(())
    }

    /// Dispatches one merged-trace event, inserting the implicit thread
    /// switch and maintaining the thread's cost counter.
    ///
    /// Cost counts events: a call is charged to the caller, so an
    /// activation's cost is the number of events strictly between its call
    /// and its return.
    pub fn process(&mut self, ev: &TraceEvent) -> Result<(), ProfileError> {
        self.stats.events += 1;
        if self.last_tid.is_some_and(|t| t != ev.tid) {
            self.on_switch()?;
        }
        self.last_tid = Some(ev.tid);
        let g = self.config.granularity;
        match ev.kind {
            EventKind::Call(rtn) => {
                self.thread_mut(ev.tid).cost += 1;
                self.on_call(ev.tid, rtn)?;
            }
            EventKind::Return => {
                self.on_return(ev.tid)?;
                self.thread_mut(ev.tid).cost += 1;
            }
            EventKind::Read(a) => {
                self.ensure_frame(ev.tid)?;
                self.thread_mut(ev.tid).cost += 1;
                for cell in a.cells(g) {
                    self.on_read(ev.tid, cell)?;
                }
            }
            EventKind::KernelRead(a) => {
                self.ensure_frame(ev.tid)?;
                self.thread_mut(ev.tid).cost += 1;
                for cell in a.cells(g) {
                    self.on_kernel_read(ev.tid, cell)?;
                }
            }
            EventKind::Write(a) => {
                self.ensure_frame(ev.tid)?;
                self.thread_mut(ev.tid).cost += 1;
                for cell in a.cells(g) {
                    self.on_write(ev.tid, cell)?;
                }
            }
            EventKind::KernelWrite(a) => {
                self.ensure_frame(ev.tid)?;
                self.thread_mut(ev.tid).cost += 1;
                for cell in a.cells(g) {
                    self.on_kernel_write(ev.tid, cell)?;
                }
            }
            EventKind::Cost(n) => {
                let thread = self.thread_mut(ev.tid);
                thread.cost = thread.cost.saturating_add(n);
            }
        }
        Ok(())
    }

    /// Force-returns every pending frame, threads in ascending id order and
    /// each stack from the top down, flagging the tuples as truncated.
    pub fn finish(mut self) -> (ProfileStore, Stats) {
        for (&tid, thread) in self.threads.iter_mut() {
            while !thread.stack.is_empty() {
                let tuple = pop_frame(tid, thread, true);
                self.store.push(tuple);
            }
        }
        (self.store, self.stats)
    }
}

fn pop_frame(tid: ThreadId, thread: &mut ThreadState, truncated: bool) -> ProfileTuple {
    let frame = thread.stack.pop().expect("caller checked the stack");
    debug_assert!(frame.partial_trms >= 0, "top partial TRMS went negative");
    debug_assert!(frame.partial_rms >= 0, "top partial RMS went negative");
    let tuple = ProfileTuple {
        rtn: frame.rtn,
        tid,
        trms: frame.partial_trms as u64,
        rms: frame.partial_rms as u64,
        cost: thread.cost - frame.entry_cost,
        induced_thread: frame.induced_thread,
        induced_external: frame.induced_external,
        truncated,
        self_induced_thread: frame.self_induced_thread,
        self_induced_external: frame.self_induced_external,
    };
    if let Some(parent) = thread.stack.last_mut() {
        parent.partial_trms += frame.partial_trms;
        parent.partial_rms += frame.partial_rms;
        parent.induced_thread += frame.induced_thread;
        parent.induced_external += frame.induced_external;
    }
    tuple
}

/// Profiles a merged trace.
pub fn run(trace: &MergedTrace, config: ProfilerConfig) -> Result<ProfileStore, RunError> {
    run_events(trace.iter().copied().map(Ok), config).map(|(store, _)| store)
}

/// Profiles a stream of merged events, e.g. straight out of a
/// [`MergeStream`](crate::trace::MergeStream).
pub fn run_events(
    events: impl IntoIterator<Item = Result<TraceEvent, TraceError>>,
    config: ProfilerConfig,
) -> Result<(ProfileStore, Stats), RunError> {
    let mut session = Session::new(config);
    for (index, ev) in events.into_iter().enumerate() {
        let ev = ev?;
        session.process(&ev).map_err(|source| RunError::Event {
            index: index as u64,
            tid: ev.tid,
            ts: ev.ts,
            source,
        })?;
    }
    Ok(session.finish())
}

//! Synthetic traces: small hand-built scenarios and a seeded random
//! generator.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::trace::{
    merge, names_path, thread_trace_path, write_trace_files, Access, EventKind, MergedTrace,
    RoutineId, RoutineNames, ThreadId, TraceEvent,
};

/// Per-thread event lists plus routine names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeneratedTrace {
    pub threads: Vec<(ThreadId, Vec<TraceEvent>)>,
    pub names: RoutineNames,
}

impl GeneratedTrace {
    pub fn merged(&self) -> MergedTrace {
        merge(self.threads.iter().map(|(_, evs)| evs.clone()).collect())
    }

    pub fn routine(&self, name: &str) -> RoutineId {
        self.names
            .id_of(name)
            .unwrap_or_else(|| panic!("no routine named {name}"))
    }

    pub fn event_count(&self) -> usize {
        self.threads.iter().map(|(_, e)| e.len()).sum()
    }

    pub fn write(&self, base: &Path) -> std::io::Result<Vec<PathBuf>> {
        write_trace_files(base, &self.threads, &self.names)
    }
}

/// Builds traces in timeline order: each event gets the next tick of one
/// global clock.
#[derive(Debug, Default)]
struct Builder {
    clock: u64,
    threads: BTreeMap<ThreadId, Vec<TraceEvent>>,
    names: RoutineNames,
}

impl Builder {
    fn routine(&mut self, id: u64, name: &str) -> RoutineId {
        let id = RoutineId(id);
        self.names.insert(id, name);
        id
    }

    fn push(&mut self, tid: ThreadId, kind: EventKind) -> &mut Self {
        self.clock += 1;
        self.threads
            .entry(tid)
            .or_default()
            .push(TraceEvent::new(tid, self.clock, kind));
        self
    }

    fn call(&mut self, tid: ThreadId, rtn: RoutineId) -> &mut Self {
        self.push(tid, EventKind::Call(rtn))
    }

    fn ret(&mut self, tid: ThreadId) -> &mut Self {
        self.push(tid, EventKind::Return)
    }

    fn rd(&mut self, tid: ThreadId, addr: u64) -> &mut Self {
        self.push(tid, EventKind::Read(Access::new(addr, 1)))
    }

    fn wr(&mut self, tid: ThreadId, addr: u64) -> &mut Self {
        self.push(tid, EventKind::Write(Access::new(addr, 1)))
    }

    fn finish(self) -> GeneratedTrace {
        GeneratedTrace {
            threads: self.threads.into_iter().collect(),
            names: self.names,
        }
    }
}

const X: u64 = 0x1000;

/// `f` reads `x`, another thread's `g` overwrites it, `f` reads it again.
pub fn gen_example_2a() -> GeneratedTrace {
    let mut b = Builder::default();
    let f = b.routine(1, "f");
    let g = b.routine(2, "g");
    b.call(1, f).rd(1, X);
    b.call(2, g).wr(2, X).ret(2);
    b.rd(1, X).ret(1);
    b.finish()
}

/// Like [`gen_example_2a`], but the second read of `x` happens in `h`,
/// called by `f`, and `f` reads `x` once more after `h` returns.
pub fn gen_example_2b() -> GeneratedTrace {
    let mut b = Builder::default();
    let f = b.routine(1, "f");
    let g = b.routine(2, "g");
    let h = b.routine(3, "h");
    b.call(1, f).rd(1, X);
    b.call(2, g).wr(2, X).ret(2);
    b.call(1, h).rd(1, X).ret(1);
    b.rd(1, X).ret(1);
    b.finish()
}

/// Producer thread 1 writes `x` and consumer thread 2 reads it, `n` rounds,
/// each side in a single activation.
pub fn gen_producer_consumer(n: u64) -> GeneratedTrace {
    let mut b = Builder::default();
    let producer = b.routine(1, "producer");
    let consumer = b.routine(2, "consumer");
    b.call(1, producer);
    b.call(2, consumer);
    for _ in 0..n {
        b.wr(1, X);
        b.rd(2, X);
    }
    b.ret(1).ret(2);
    b.finish()
}

/// Producer-consumer with one `produceData` / `consumeData` activation per
/// round.
pub fn gen_producer_consumer_calls(n: u64) -> GeneratedTrace {
    let mut b = Builder::default();
    let producer = b.routine(1, "producer");
    let consumer = b.routine(2, "consumer");
    let produce = b.routine(3, "produceData");
    let consume = b.routine(4, "consumeData");
    b.call(1, producer);
    b.call(2, consumer);
    for _ in 0..n {
        b.call(1, produce).wr(1, X).ret(1);
        b.call(2, consume).rd(2, X).ret(2);
    }
    b.ret(1).ret(2);
    b.finish()
}

/// `externalRead` repeatedly has the kernel fill a two-cell buffer and then
/// reads its first cell.
pub fn gen_external_read(n: u64) -> GeneratedTrace {
    let mut b = Builder::default();
    let rtn = b.routine(1, "externalRead");
    b.call(1, rtn);
    for _ in 0..n {
        b.push(1, EventKind::KernelWrite(Access::new(X, 2)));
        b.rd(1, X);
    }
    b.ret(1);
    b.finish()
}

/// `n` activations of `r`; activation `i` costs `i` and reads `ceil(i/2)`
/// cells, `floor(i/2)` of which a helper thread then overwrites and `r`
/// reads again.
pub fn gen_scaling_scenario(n: u64) -> GeneratedTrace {
    let mut b = Builder::default();
    let r = b.routine(1, "r");
    let invalidate = b.routine(2, "invalidate");
    for i in 1..=n {
        let fresh = i.div_ceil(2);
        let stale = i / 2;
        b.call(1, r);
        for c in 0..fresh {
            b.rd(1, X + c);
        }
        b.call(2, invalidate);
        for c in 0..stale {
            b.wr(2, X + c);
        }
        b.ret(2);
        for c in 0..stale {
            b.rd(1, X + c);
        }
        b.ret(1);
    }
    b.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomParams {
    pub seed: u64,
    pub threads: u32,
    /// Accesses fall in `[0, cells)`.
    pub cells: u64,
    /// Upper bound on the total number of events, closing returns included.
    pub events: u64,
    /// Fraction of memory accesses performed by the kernel.
    pub kernel_ratio: f64,
    pub routines: u64,
    pub max_depth: usize,
    /// Stop mid-run, leaving activations pending.
    pub truncate: bool,
}

impl Default for RandomParams {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 4,
            cells: 64,
            events: 10_000,
            kernel_ratio: 0.1,
            routines: 8,
            max_depth: 12,
            truncate: false,
        }
    }
}

/// Streaming random trace: yields events in generation order, per-thread
/// timestamps strictly increasing, with frequent cross-thread ties.
pub struct RandomStream {
    params: RandomParams,
    rng: ChaCha8Rng,
    clock: u64,
    emitted: u64,
    open: u64,
    depth: Vec<usize>,
    last_ts: Vec<u64>,
    current: usize,
    closing: usize,
}

impl RandomStream {
    pub fn new(params: RandomParams) -> Self {
        assert!(params.threads >= 1, "need at least one thread");
        assert!(params.cells >= 1, "need at least one cell");
        let n = params.threads as usize;
        Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            clock: 1,
            emitted: 0,
            open: 0,
            depth: vec![0; n],
            last_ts: vec![0; n],
            current: 0,
            closing: 0,
        }
    }

    fn stamp(&mut self, t: usize) -> TraceEvent {
        let ts = self.clock.max(self.last_ts[t] + 1);
        self.last_ts[t] = ts;
        self.clock = ts + self.rng.gen_range(0..=1);
        TraceEvent::new(t as ThreadId + 1, ts, EventKind::Return)
    }

    fn access(&mut self) -> Access {
        let size = if self.params.cells > 1 && self.rng.gen_bool(0.2) { 2 } else { 1 };
        let addr = self.rng.gen_range(0..=self.params.cells - size);
        Access::new(addr, size)
    }

    fn body_event(&mut self) -> TraceEvent {
        let n = self.params.threads as usize;
        if n > 1 && self.rng.gen_bool(0.3) {
            self.current = self.rng.gen_range(0..n);
        }
        let t = self.current;
        let mut ev = self.stamp(t);
        let depth = self.depth[t];
        let p: f64 = self.rng.gen();
        ev.kind = if p < 0.12 && depth < self.params.max_depth {
            self.depth[t] += 1;
            self.open += 1;
            EventKind::Call(RoutineId(self.rng.gen_range(1..=self.params.routines)))
        } else if p < 0.24 && depth > 0 {
            self.depth[t] -= 1;
            self.open -= 1;
            EventKind::Return
        } else if p < 0.26 {
            EventKind::Cost(self.rng.gen_range(1..=20))
        } else {
            let a = self.access();
            let kernel = self.rng.gen_bool(self.params.kernel_ratio);
            match (kernel, self.rng.gen_bool(0.6)) {
                (false, true) => EventKind::Read(a),
                (false, false) => EventKind::Write(a),
                (true, true) => EventKind::KernelWrite(a),
                (true, false) => EventKind::KernelRead(a),
            }
        };
        ev
    }
}

impl Iterator for RandomStream {
    type Item = TraceEvent;

    fn next(&mut self) -> Option<TraceEvent> {
        let budget = self.params.events;
        if self.params.truncate {
            if self.emitted >= budget {
                return None;
            }
        } else if self.emitted + self.open >= budget {
            // Unwind whatever is still open, thread by thread.
            while self.closing < self.depth.len() && self.depth[self.closing] == 0 {
                self.closing += 1;
            }
            if self.closing == self.depth.len() {
                return None;
            }
            let t = self.closing;
            self.depth[t] -= 1;
            self.open -= 1;
            self.emitted += 1;
            return Some(self.stamp(t));
        }
        self.emitted += 1;
        Some(self.body_event())
    }
}

pub fn gen_random(params: RandomParams) -> GeneratedTrace {
    let mut threads: Vec<(ThreadId, Vec<TraceEvent>)> =
        (1..=params.threads).map(|t| (t, Vec::new())).collect();
    for ev in RandomStream::new(params) {
        threads[ev.tid as usize - 1].1.push(ev);
    }
    let mut names = RoutineNames::new();
    for r in 1..=params.routines {
        names.insert(RoutineId(r), format!("r{r}"));
    }
    GeneratedTrace { threads, names }
}

/// Writes a random trace straight to `<base>.t<tid>.trace` files without
/// holding it in memory. Returns the number of events written.
pub fn write_random_trace_files(base: &Path, params: RandomParams) -> std::io::Result<u64> {
    let mut writers = (1..=params.threads)
        .map(|t| File::create(thread_trace_path(base, t)).map(BufWriter::new))
        .collect::<std::io::Result<Vec<_>>>()?;
    let mut n = 0;
    for ev in RandomStream::new(params) {
        crate::trace::write_thread_trace(&mut writers[ev.tid as usize - 1], &[ev])?;
        n += 1;
    }
    for w in writers.iter_mut() {
        w.flush()?;
    }
    let mut names = BufWriter::new(File::create(names_path(base))?);
    for r in 1..=params.routines {
        writeln!(names, "{r} r{r}")?;
    }
    names.flush()?;
    Ok(n)
}

/// Named scenarios selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Example2a,
    Example2b,
    ProducerConsumer,
    ProducerConsumerCalls,
    ExternalRead,
    Scaling,
    Random,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Example2a,
        Scenario::Example2b,
        Scenario::ProducerConsumer,
        Scenario::ProducerConsumerCalls,
        Scenario::ExternalRead,
        Scenario::Scaling,
        Scenario::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Example2a => "example-2a",
            Scenario::Example2b => "example-2b",
            Scenario::ProducerConsumer => "producer-consumer",
            Scenario::ProducerConsumerCalls => "producer-consumer-calls",
            Scenario::ExternalRead => "external-read",
            Scenario::Scaling => "scaling",
            Scenario::Random => "random",
        }
    }

    /// Generates the scenario. `n` is the round count; only `Random` looks
    /// at `random`.
    pub fn generate(self, n: u64, random: RandomParams) -> GeneratedTrace {
        match self {
            Scenario::Example2a => gen_example_2a(),
            Scenario::Example2b => gen_example_2b(),
            Scenario::ProducerConsumer => gen_producer_consumer(n),
            Scenario::ProducerConsumerCalls => gen_producer_consumer_calls(n),
            Scenario::ExternalRead => gen_external_read(n),
            Scenario::Scaling => gen_scaling_scenario(n),
            Scenario::Random => gen_random(random),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario `{s}` (known: {})", known.join(", "))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monotonic(g: &GeneratedTrace) -> bool {
        g.threads
            .iter()
            .all(|(_, evs)| evs.windows(2).all(|w| w[0].ts < w[1].ts))
    }

    fn balanced(g: &GeneratedTrace) -> bool {
        g.threads.iter().all(|(_, evs)| {
            let mut depth = 0i64;
            for e in evs {
                match e.kind {
                    EventKind::Call(_) => depth += 1,
                    EventKind::Return => depth -= 1,
                    _ => {}
                }
                if depth < 0 {
                    return false;
                }
            }
            depth == 0
        })
    }

    #[test]
    fn scenarios_are_monotonic_and_balanced() {
        for sc in Scenario::ALL {
            let g = sc.generate(25, RandomParams::default());
            assert!(monotonic(&g), "{sc}");
            assert!(balanced(&g), "{sc}");
        }
    }

    #[test]
    fn producer_consumer_shape() {
        let g = gen_producer_consumer(3);
        assert_eq!(g.threads.len(), 2);
        assert_eq!(g.event_count(), 2 + 6 + 2);
        assert_eq!(gen_producer_consumer(0).event_count(), 4);
    }

    #[test]
    fn random_is_reproducible() {
        let p = RandomParams {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(gen_random(p), gen_random(p));
        let q = RandomParams { seed: 10, ..p };
        assert_ne!(gen_random(p), gen_random(q));
    }

    #[test]
    fn random_respects_budget_and_bounds() {
        for truncate in [false, true] {
            let p = RandomParams {
                seed: 3,
                events: 500,
                cells: 16,
                truncate,
                ..Default::default()
            };
            let g = gen_random(p);
            assert!(g.event_count() <= 500);
            assert!(monotonic(&g));
            for (_, evs) in &g.threads {
                for e in evs {
                    if let Some(a) = e.kind.access() {
                        assert!(a.addr + a.size <= 16);
                    }
                }
            }
            if !truncate {
                assert!(balanced(&g));
            }
        }
    }

    #[test]
    fn random_has_timestamp_ties() {
        let g = gen_random(RandomParams::default());
        let m = g.merged();
        assert!(m.events().windows(2).any(|w| w[0].ts == w[1].ts));
    }

    #[test]
    fn scenario_names_roundtrip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }
}

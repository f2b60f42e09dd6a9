use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use trms_core::metrics::{build_profiles, induced_breakdown, input_volume, Metric};
use trms_core::oracle::NaiveProfiler;
use trms_core::{EventKind, Granularity, ThreadId};
use trms_core::search::ceil_log2;
use trms_core::tracegen::{gen_random, RandomParams};
use trms_core::{run, Geometry, ProfilerConfig, Session};

fn params() -> impl Strategy<Value = RandomParams> {
    (any::<u64>(), 1u32..=6, 1u64..=48, 0u64..=3_000, prop::sample::select(vec![0.0, 0.1, 0.3]))
        .prop_map(|(seed, threads, cells, events, kernel_ratio)| RandomParams {
            seed,
            threads,
            cells,
            events,
            kernel_ratio,
            ..Default::default()
        })
}

fn config() -> ProfilerConfig {
    ProfilerConfig::default().with_geometry(Geometry::tiny())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn count_grows_by_ticks_only(p in params()) {
        let trace = gen_random(p).merged();
        let mut s = Session::new(config());
        for ev in &trace {
            s.process(ev).unwrap();
        }
        let st = s.stats();
        prop_assert_eq!(st.renumberings, 0);
        prop_assert_eq!(st.switches as usize, trace.switches());
        prop_assert_eq!(s.count(), st.calls + st.switches + st.root_frames + st.kernel_write_cells);
    }

    #[test]
    fn ancestor_search_is_logarithmic(p in params()) {
        let trace = gen_random(RandomParams { events: 4_000, ..p }).merged();
        let mut s = Session::new(config());
        let mut deepest = 1;
        for ev in &trace {
            s.process(ev).unwrap();
            deepest = deepest.max(s.thread(ev.tid).map_or(0, |t| t.stack().len()));
        }
        let st = s.stats();
        prop_assert_eq!(st.search_bound_exceeded, 0);
        prop_assert!(st.ancestor_comparisons <= st.ancestor_searches * (ceil_log2(deepest) as u64 + 1));
    }

    #[test]
    fn renumbering_work_is_bounded(p in params()) {
        let cfg = config().with_width(10).unwrap();
        let trace = gen_random(RandomParams { events: 6_000, ..p }).merged();
        let mut s = Session::new(cfg);
        for ev in &trace {
            s.process(ev).unwrap();
        }
        prop_assert_eq!(s.stats().renumber_bound_exceeded, 0);
    }

    #[test]
    fn partial_sums_never_go_negative(p in params()) {
        let trace = gen_random(p).merged();
        let mut s = Session::new(config());
        let mut naive = NaiveProfiler::new(&config());
        for ev in &trace {
            s.process(ev).unwrap();
            naive.process(ev).unwrap();
            let fast = s.pending_trms(ev.tid);
            prop_assert!(fast.iter().all(|&v| v >= 0));
            prop_assert_eq!(fast, naive.pending_trms(ev.tid));
        }
    }

    #[test]
    fn metric_identities(p in params()) {
        let store = run(&gen_random(p).merged(), config()).unwrap();
        let merged = build_profiles(&store, true, None);
        let split = build_profiles(&store, false, None);
        let activations = store.routine_tuples().count() as u64;
        prop_assert_eq!(merged.iter().map(|p| p.activations).sum::<u64>(), activations);
        prop_assert_eq!(split.iter().map(|p| p.total_trms).sum::<u64>(),
                        merged.iter().map(|p| p.total_trms).sum::<u64>());
        for prof in &merged {
            for m in Metric::BOTH {
                let n: u64 = prof.workload(m).iter().map(|x| x.1).sum();
                prop_assert_eq!(n, prof.activations);
            }
            let b = prof.breakdown();
            prop_assert!((0.0..=100.0).contains(&b.thread_pct));
            prop_assert!((0.0..=100.0).contains(&b.external_pct));
        }
        let b = induced_breakdown(&store);
        if b.total() > 0 {
            prop_assert!((b.thread_pct + b.external_pct - 100.0).abs() < 1e-9);
        }
        let iv = input_volume(&store);
        let (t, r) = store.routine_tuples().fold((0, 0), |(a, b), x| (a + x.trms, b + x.rms));
        prop_assert_eq!(iv == 0.0, t == r);
        if r >= 1 {
            prop_assert!(iv < 1.0);
        }
    }

    #[test]
    fn global_breakdown_counts_each_induced_read_once(p in params()) {
        let trace = gen_random(p).merged();
        let b = induced_breakdown(&run(&trace, config()).unwrap());
        // Replay: a read is induced when someone else wrote the cell after
        // the reading thread last touched it.
        let mut writer: HashMap<u64, Option<ThreadId>> = HashMap::new();
        let mut fresh: HashSet<(ThreadId, u64)> = HashSet::new();
        let (mut thread, mut external) = (0, 0);
        for ev in &trace {
            let Some(a) = ev.kind.access() else { continue };
            for cell in a.cells(Granularity::default()) {
                match ev.kind {
                    EventKind::Read(_) | EventKind::KernelRead(_) => {
                        if let Some(w) = writer.get(&cell) {
                            if !fresh.contains(&(ev.tid, cell)) {
                                if w.is_some() { thread += 1 } else { external += 1 }
                            }
                        }
                        fresh.insert((ev.tid, cell));
                    }
                    EventKind::Write(_) => {
                        fresh.retain(|&(_, c)| c != cell);
                        fresh.insert((ev.tid, cell));
                        writer.insert(cell, Some(ev.tid));
                    }
                    _ => {
                        fresh.retain(|&(_, c)| c != cell);
                        writer.insert(cell, None);
                    }
                }
            }
        }
        prop_assert_eq!((b.induced_thread, b.induced_external), (thread, external));
    }
}

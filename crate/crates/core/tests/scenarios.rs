use std::fs::File;
use std::io::BufReader;

use trms_core::check::CheckOptions;
use trms_core::fit::fit_curve;
use trms_core::metrics::{build_profiles, Metric};
use trms_core::pipeline::{load_names, profile_files};
use trms_core::trace::{parse_thread_trace, thread_trace_path};
use trms_core::tracegen::*;
use trms_core::{run, ProfileStore, ProfilerConfig};

fn profile(g: &GeneratedTrace) -> ProfileStore {
    run(&g.merged(), ProfilerConfig::default()).unwrap()
}

fn values(g: &GeneratedTrace, rtn: &str) -> (u64, u64) {
    let store = profile(g);
    let t = store.find(g.routine(rtn)).unwrap();
    (t.trms, t.rms)
}

#[test]
fn examples_survive_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, g) in [gen_example_2a(), gen_example_2b()].into_iter().enumerate() {
        let base = dir.path().join(format!("ex{i}"));
        g.write(&base).unwrap();
        for (tid, events) in &g.threads {
            let f = BufReader::new(File::open(thread_trace_path(&base, *tid)).unwrap());
            assert_eq!(&parse_thread_trace(f, *tid).unwrap(), events);
        }
        assert_eq!(load_names(&base).unwrap().as_ref(), Some(&g.names));
        let (store, _) =
            profile_files(&base, ProfilerConfig::default(), CheckOptions::default()).unwrap();
        assert_eq!(store, profile(&g));
    }
}

#[test]
fn example_2a_g_reads_nothing() {
    let g = gen_example_2a();
    assert_eq!(values(&g, "f"), (2, 1));
    assert_eq!(values(&g, "g"), (0, 0));
}

#[test]
fn producer_consumer_sizes() {
    assert_eq!(values(&gen_producer_consumer(0), "consumer"), (0, 0));
    assert_eq!(values(&gen_producer_consumer(1), "consumer"), (1, 1));
    assert_eq!(values(&gen_producer_consumer(100), "consumer"), (100, 1));
    assert_eq!(values(&gen_producer_consumer(100), "producer"), (0, 0));
}

#[test]
fn producer_consumer_with_calls() {
    let g = gen_producer_consumer_calls(50);
    let store = profile(&g);
    let consume = g.routine("consumeData");
    let per_round: Vec<_> = store.iter().filter(|t| t.rtn == consume).collect();
    assert_eq!(per_round.len(), 50);
    assert!(per_round.iter().all(|t| (t.trms, t.rms, t.induced_thread) == (1, 1, 1)));
    assert_eq!(values(&g, "consumer"), (50, 1));
}

#[test]
fn external_read_is_all_external() {
    for n in [1, 7, 100] {
        let g = gen_external_read(n);
        let store = profile(&g);
        let t = store.find(g.routine("externalRead")).unwrap();
        assert_eq!((t.trms, t.rms), (n, 1));
        assert_eq!((t.induced_external, t.induced_thread), (n, 0));
    }
}

#[test]
fn scaling_activation_shape() {
    let g = gen_scaling_scenario(10);
    let store = profile(&g);
    let r = g.routine("r");
    let acts: Vec<_> = store.iter().filter(|t| t.rtn == r).collect();
    assert_eq!(acts.len(), 10);
    for (i, t) in acts.iter().enumerate() {
        let i = i as u64 + 1;
        assert_eq!((t.trms, t.rms, t.cost), (i, i.div_ceil(2), i), "activation {i}");
    }
}

#[test]
fn scaling_profile_metrics() {
    let g = gen_scaling_scenario(100);
    let profiles = build_profiles(&profile(&g), true, Some(&g.names));
    let r = profiles.iter().find(|p| p.name.as_deref() == Some("r")).unwrap();
    assert_eq!(r.richness(), 1.0);
    let pts: Vec<_> = r
        .worst_case(Metric::Trms)
        .into_iter()
        .map(|(n, c)| (n as f64, c as f64))
        .collect();
    let fit = fit_curve(&pts).unwrap();
    assert!((fit.exponent - 1.0).abs() <= 0.1);
    let workload: u64 = r.workload(Metric::Rms).iter().map(|p| p.1).sum();
    assert_eq!(workload, 100);
}

#[test]
fn granularity_merges_neighbouring_bytes() {
    let g = gen_random(RandomParams {
        seed: 5,
        threads: 1,
        kernel_ratio: 0.0,
        ..Default::default()
    });
    let fine = profile(&g);
    let coarse = run(
        &g.merged(),
        ProfilerConfig::default().with_granularity(trms_core::Granularity::new(64).unwrap()),
    )
    .unwrap();
    // With 64 addresses and 64-byte cells everything is one cell.
    assert!(coarse.iter().all(|t| t.trms <= 1));
    assert_eq!(fine.len(), coarse.len());
}

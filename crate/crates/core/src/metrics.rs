//! Per-routine input-sensitive profiles and aggregate metrics.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::store::{ProfileStore, ProfileTuple};
use crate::trace::{RoutineId, RoutineNames, ThreadId};

/// Which input-size measure a plot is indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Trms,
    Rms,
}

impl Metric {
    pub const BOTH: [Metric; 2] = [Metric::Trms, Metric::Rms];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Trms => "trms",
            Metric::Rms => "rms",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The thread a profile covers, or all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ThreadScope {
    All,
    Thread(ThreadId),
}

impl fmt::Display for ThreadScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadScope::All => f.write_str("all"),
            ThreadScope::Thread(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for ThreadScope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThreadScope::All => s.serialize_str("all"),
            ThreadScope::Thread(t) => s.serialize_u32(*t),
        }
    }
}

/// Activations sharing one input-size value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SizePoint {
    pub max_cost: u64,
    pub activations: u64,
    pub sum_cost: u64,
}

impl SizePoint {
    fn add(&mut self, cost: u64) {
        self.max_cost = self.max_cost.max(cost);
        self.activations += 1;
        self.sum_cost += cost;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutineProfile {
    pub rtn: RoutineId,
    pub name: Option<String>,
    pub tid: ThreadScope,
    pub trms: BTreeMap<u64, SizePoint>,
    pub rms: BTreeMap<u64, SizePoint>,
    pub activations: u64,
    pub total_trms: u64,
    pub total_rms: u64,
    /// Inclusive of descendants.
    pub induced_thread: u64,
    pub induced_external: u64,
}

impl RoutineProfile {
    fn new(rtn: RoutineId, tid: ThreadScope, names: Option<&RoutineNames>) -> Self {
        Self {
            rtn,
            name: names.and_then(|n| n.get(rtn)).map(str::to_owned),
            tid,
            trms: BTreeMap::new(),
            rms: BTreeMap::new(),
            activations: 0,
            total_trms: 0,
            total_rms: 0,
            induced_thread: 0,
            induced_external: 0,
        }
    }

    fn add(&mut self, t: &ProfileTuple) {
        self.trms.entry(t.trms).or_default().add(t.cost);
        self.rms.entry(t.rms).or_default().add(t.cost);
        self.activations += 1;
        self.total_trms += t.trms;
        self.total_rms += t.rms;
        self.induced_thread += t.induced_thread;
        self.induced_external += t.induced_external;
    }

    pub fn points(&self, metric: Metric) -> &BTreeMap<u64, SizePoint> {
        match metric {
            Metric::Trms => &self.trms,
            Metric::Rms => &self.rms,
        }
    }

    /// `(size, max cost)` pairs in ascending size order.
    pub fn worst_case(&self, metric: Metric) -> Vec<(u64, u64)> {
        self.points(metric)
            .iter()
            .map(|(&n, p)| (n, p.max_cost))
            .collect()
    }

    /// `(size, activations)` pairs in ascending size order.
    pub fn workload(&self, metric: Metric) -> Vec<(u64, u64)> {
        self.points(metric)
            .iter()
            .map(|(&n, p)| (n, p.activations))
            .collect()
    }

    /// Relative gain in distinct input sizes of TRMS over RMS. Negative when
    /// TRMS collapses sizes that RMS tells apart.
    pub fn richness(&self) -> f64 {
        assert!(!self.rms.is_empty(), "profile without activations");
        (self.trms.len() as f64 - self.rms.len() as f64) / self.rms.len() as f64
    }

    pub fn breakdown(&self) -> Breakdown {
        Breakdown::new(self.induced_thread, self.induced_external)
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => self.rtn.to_string(),
        }
    }
}

/// Groups tuples of real routines into profiles, sorted by routine id and
/// then thread. Synthetic root frames are left out.
pub fn build_profiles(
    store: &ProfileStore,
    merge_threads: bool,
    names: Option<&RoutineNames>,
) -> Vec<RoutineProfile> {
    let mut by_key: BTreeMap<(RoutineId, ThreadScope), RoutineProfile> = BTreeMap::new();
    for t in store.routine_tuples() {
        let scope = if merge_threads {
            ThreadScope::All
        } else {
            ThreadScope::Thread(t.tid)
        };
        by_key
            .entry((t.rtn, scope))
            .or_insert_with(|| RoutineProfile::new(t.rtn, scope, names))
            .add(t);
    }
    by_key.into_values().collect()
}

/// `1 - sum(rms) / sum(trms)` over real routines, `0` for an empty profile.
pub fn input_volume(store: &ProfileStore) -> f64 {
    let (trms, rms) = store
        .routine_tuples()
        .fold((0u64, 0u64), |(a, b), t| (a + t.trms, b + t.rms));
    if trms == 0 {
        0.0
    } else {
        1.0 - rms as f64 / trms as f64
    }
}

/// Split of induced first-accesses by origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Breakdown {
    pub induced_thread: u64,
    pub induced_external: u64,
    pub thread_pct: f64,
    pub external_pct: f64,
}

impl Breakdown {
    pub fn new(thread: u64, external: u64) -> Self {
        let total = thread + external;
        let (tp, ep) = if total == 0 {
            (0.0, 0.0)
        } else {
            let tp = 100.0 * thread as f64 / total as f64;
            (tp, 100.0 - tp)
        };
        Self {
            induced_thread: thread,
            induced_external: external,
            thread_pct: tp,
            external_pct: ep,
        }
    }

    pub fn total(&self) -> u64 {
        self.induced_thread + self.induced_external
    }
}

/// Whole-run breakdown, counting every induced access once (root frames
/// included).
pub fn induced_breakdown(store: &ProfileStore) -> Breakdown {
    let (t, e) = store.iter().fold((0, 0), |(t, e), x| {
        (t + x.self_induced_thread, e + x.self_induced_external)
    });
    Breakdown::new(t, e)
}

/// Per-routine inclusive breakdowns, highest thread share first.
pub fn routine_breakdowns(profiles: &[RoutineProfile]) -> Vec<(&RoutineProfile, Breakdown)> {
    let mut rows: Vec<_> = profiles.iter().map(|p| (p, p.breakdown())).collect();
    rows.sort_by(|(pa, a), (pb, b)| {
        b.thread_pct
            .total_cmp(&a.thread_pct)
            .then(b.total().cmp(&a.total()))
            .then((pa.rtn, pa.tid).cmp(&(pb.rtn, pb.tid)))
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(rtn: u64, tid: ThreadId, trms: u64, rms: u64, cost: u64) -> ProfileTuple {
        ProfileTuple {
            rtn: RoutineId(rtn),
            tid,
            trms,
            rms,
            cost,
            induced_thread: trms - rms,
            induced_external: 0,
            truncated: false,
            self_induced_thread: trms - rms,
            self_induced_external: 0,
        }
    }

    #[test]
    fn worst_case_and_workload() {
        let store: ProfileStore = [tuple(1, 1, 3, 3, 5), tuple(1, 1, 3, 3, 9)].into_iter().collect();
        let p = &build_profiles(&store, false, None)[0];
        assert_eq!(p.worst_case(Metric::Trms), vec![(3, 9)]);
        assert_eq!(p.workload(Metric::Trms), vec![(3, 2)]);
    }

    #[test]
    fn thread_split_and_merge() {
        let store: ProfileStore = [tuple(1, 1, 3, 3, 5), tuple(1, 2, 4, 2, 9)].into_iter().collect();
        let split = build_profiles(&store, false, None);
        let merged = build_profiles(&store, true, None);
        assert_eq!(split.len(), 2);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].tid, ThreadScope::All);
        let sum: u64 = split.iter().map(|p| p.total_trms).sum();
        assert_eq!(sum, merged[0].total_trms);
        assert_eq!(merged[0].activations, 2);
    }

    #[test]
    fn richness_formula() {
        let store: ProfileStore = [(4, 2), (3, 2), (2, 1), (1, 1)]
            .into_iter()
            .map(|(t, r)| tuple(1, 1, t, r, t))
            .collect();
        assert_eq!(build_profiles(&store, true, None)[0].richness(), 1.0);
        let flat: ProfileStore = [tuple(1, 1, 2, 2, 1)].into_iter().collect();
        assert_eq!(build_profiles(&flat, true, None)[0].richness(), 0.0);
    }

    #[test]
    fn input_volume_formula() {
        let same: ProfileStore = [tuple(1, 1, 2, 2, 1)].into_iter().collect();
        assert_eq!(input_volume(&same), 0.0);
        let half: ProfileStore = [tuple(1, 1, 100, 50, 1)].into_iter().collect();
        assert_eq!(input_volume(&half), 0.5);
        assert_eq!(input_volume(&ProfileStore::new()), 0.0);
    }

    #[test]
    fn breakdown_percentages() {
        assert_eq!(Breakdown::new(0, 0).thread_pct, 0.0);
        let b = Breakdown::new(1, 3);
        assert_eq!((b.thread_pct, b.external_pct), (25.0, 75.0));
    }

    #[test]
    fn root_tuples_are_not_profiled() {
        let mut root = tuple(1, 1, 5, 5, 1);
        root.rtn = RoutineId::ROOT;
        let store: ProfileStore = [root].into_iter().collect();
        assert!(build_profiles(&store, true, None).is_empty());
        assert_eq!(input_volume(&store), 0.0);
    }
}

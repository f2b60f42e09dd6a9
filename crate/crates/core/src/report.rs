//! Plot datasets, metric tables and fits, written as CSV or JSON.
//!
//! CSV output is a directory of `worst_case.csv`, `workload.csv`,
//! `richness.csv`, `breakdown.csv`, `fits.csv` and `summary.csv`. JSON output
//! is the same data as a single `report.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::fit::{fit_curve, Fit};
use crate::metrics::{
    build_profiles, induced_breakdown, input_volume, routine_breakdowns, Breakdown, Metric,
    RoutineProfile, ThreadScope,
};
use crate::store::ProfileStore;
use crate::trace::{RoutineId, RoutineNames};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub rtn: RoutineId,
    pub name: Option<String>,
    pub tid: ThreadScope,
    pub metric: Metric,
    pub size: u64,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichnessRow {
    pub rtn: RoutineId,
    pub name: Option<String>,
    pub tid: ThreadScope,
    pub activations: u64,
    pub trms_points: usize,
    pub rms_points: usize,
    pub richness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub rtn: RoutineId,
    pub name: Option<String>,
    pub tid: ThreadScope,
    pub induced_thread: u64,
    pub induced_external: u64,
    pub thread_pct: f64,
    pub external_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub rtn: RoutineId,
    pub name: Option<String>,
    pub tid: ThreadScope,
    pub metric: Metric,
    pub model: String,
    pub a: f64,
    pub b: f64,
    pub exponent: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub tuples: usize,
    pub activations: u64,
    pub truncated: u64,
    pub profiles: usize,
    pub input_volume: f64,
    pub induced: Breakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summary: Summary,
    pub worst_case: Vec<PlotRow>,
    pub workload: Vec<PlotRow>,
    pub richness: Vec<RichnessRow>,
    pub breakdown: Vec<BreakdownRow>,
    pub fits: Vec<FitRow>,
}

fn plot_rows(
    profiles: &[RoutineProfile],
    pick: impl Fn(&RoutineProfile, Metric) -> Vec<(u64, u64)>,
) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for p in profiles {
        for metric in Metric::BOTH {
            for (size, value) in pick(p, metric) {
                rows.push(PlotRow {
                    rtn: p.rtn,
                    name: p.name.clone(),
                    tid: p.tid,
                    metric,
                    size,
                    value,
                });
            }
        }
    }
    rows
}

fn fit_row(p: &RoutineProfile, metric: Metric, fit: Fit) -> FitRow {
    FitRow {
        rtn: p.rtn,
        name: p.name.clone(),
        tid: p.tid,
        metric,
        model: fit.model.name().to_owned(),
        a: fit.a,
        b: fit.b,
        exponent: fit.exponent,
        residual: fit.residual,
    }
}

pub fn build_report(
    store: &ProfileStore,
    names: Option<&RoutineNames>,
    merge_threads: bool,
) -> Report {
    let profiles = build_profiles(store, merge_threads, names);
    let worst_case = plot_rows(&profiles, |p, m| p.worst_case(m));
    let workload = plot_rows(&profiles, |p, m| p.workload(m));
    let richness = profiles
        .iter()
        .map(|p| RichnessRow {
            rtn: p.rtn,
            name: p.name.clone(),
            tid: p.tid,
            activations: p.activations,
            trms_points: p.trms.len(),
            rms_points: p.rms.len(),
            richness: p.richness(),
        })
        .collect();
    let breakdown = routine_breakdowns(&profiles)
        .into_iter()
        .map(|(p, b)| BreakdownRow {
            rtn: p.rtn,
            name: p.name.clone(),
            tid: p.tid,
            induced_thread: b.induced_thread,
            induced_external: b.induced_external,
            thread_pct: b.thread_pct,
            external_pct: b.external_pct,
        })
        .collect();
    let mut fits = Vec::new();
    for p in &profiles {
        for metric in Metric::BOTH {
            let pts: Vec<(f64, f64)> = p
                .worst_case(metric)
                .into_iter()
                .map(|(n, c)| (n as f64, c as f64))
                .collect();
            if let Ok(fit) = fit_curve(&pts) {
                fits.push(fit_row(p, metric, fit));
            }
        }
    }
    let real: Vec<_> = store.routine_tuples().collect();
    Report {
        summary: Summary {
            tuples: store.len(),
            activations: real.len() as u64,
            truncated: real.iter().filter(|t| t.truncated).count() as u64,
            profiles: profiles.len(),
            input_volume: input_volume(store),
            induced: induced_breakdown(store),
        },
        worst_case,
        workload,
        richness,
        breakdown,
        fits,
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

const PLOT_HEADER: [&str; 6] = ["rtn", "name", "tid", "metric", "size", "value"];

impl Report {
    /// Writes the report into directory `dir`, creating it if needed.
    /// Returns the files written.
    pub fn emit(&self, format: Format, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        match format {
            Format::Json => {
                let path = dir.join("report.json");
                let mut w = BufWriter::new(File::create(&path)?);
                serde_json::to_writer_pretty(&mut w, self)?;
                writeln!(w)?;
                w.flush()?;
                Ok(vec![path])
            }
            Format::Csv => {
                let mut out = Vec::new();
                let mut file = |name: &str| {
                    let p = dir.join(name);
                    out.push(p.clone());
                    p
                };
                write_rows(&file("worst_case.csv"), &PLOT_HEADER, &self.worst_case)?;
                write_rows(&file("workload.csv"), &PLOT_HEADER, &self.workload)?;
                write_rows(
                    &file("richness.csv"),
                    &["rtn", "name", "tid", "activations", "trms_points", "rms_points", "richness"],
                    &self.richness,
                )?;
                write_rows(
                    &file("breakdown.csv"),
                    &[
                        "rtn",
                        "name",
                        "tid",
                        "induced_thread",
                        "induced_external",
                        "thread_pct",
                        "external_pct",
                    ],
                    &self.breakdown,
                )?;
                write_rows(
                    &file("fits.csv"),
                    &["rtn", "name", "tid", "metric", "model", "a", "b", "exponent", "residual"],
                    &self.fits,
                )?;
                let s = &self.summary;
                let summary = [
                    ("tuples", s.tuples.to_string()),
                    ("activations", s.activations.to_string()),
                    ("truncated", s.truncated.to_string()),
                    ("profiles", s.profiles.to_string()),
                    ("input_volume", s.input_volume.to_string()),
                    ("induced_thread", s.induced.induced_thread.to_string()),
                    ("induced_external", s.induced.induced_external.to_string()),
                    ("thread_pct", s.induced.thread_pct.to_string()),
                    ("external_pct", s.induced.external_pct.to_string()),
                ];
                write_rows(&file("summary.csv"), &["key", "value"], &summary)?;
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::{run, ProfilerConfig};
    use crate::tracegen::gen_scaling_scenario;

    #[test]
    fn empty_store_gives_empty_documents() {
        let r = build_report(&ProfileStore::new(), None, true);
        assert_eq!(r.summary.activations, 0);
        let dir = tempfile::tempdir().unwrap();
        r.emit(Format::Csv, dir.path()).unwrap();
        let wc = std::fs::read_to_string(dir.path().join("worst_case.csv")).unwrap();
        assert_eq!(wc.trim(), PLOT_HEADER.join(","));
        r.emit(Format::Json, dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(v["worst_case"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn output_is_deterministic() {
        let g = gen_scaling_scenario(20);
        let store = run(&g.merged(), ProfilerConfig::default()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for fmt in [Format::Csv, Format::Json] {
            let fa = build_report(&store, Some(&g.names), true).emit(fmt, a.path()).unwrap();
            let fb = build_report(&store, Some(&g.names), true).emit(fmt, b.path()).unwrap();
            for (x, y) in fa.iter().zip(&fb) {
                assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
            }
        }
    }

    #[test]
    fn merged_rows_say_all() {
        let g = gen_scaling_scenario(6);
        let store = run(&g.merged(), ProfilerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        build_report(&store, Some(&g.names), true)
            .emit(Format::Csv, dir.path())
            .unwrap();
        let text = std::fs::read_to_string(dir.path().join("richness.csv")).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("1,r,all,6,"));
    }
}

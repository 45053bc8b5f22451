//! Report emission: merged records, strategy tables and plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::records::{write_records, ExperimentRecord};
use crate::svg::{bar_plot, line_plot, Series};

pub const MERGED_RECORDS_FILE: &str = "records_merged.csv";
pub const STRATEGY_TABLE_FILE: &str = "strategy_table.csv";
pub const PROBE_TABLE_FILE: &str = "probe_summary.csv";

fn sort_key(r: &ExperimentRecord) -> (String, usize, String, String, String, u64, String) {
    let epoch = r.metric.split_once('@').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    (r.run_id.clone(), r.stage, r.split.clone(), r.domain.clone(), r.base_metric().to_string(), epoch, r.metric.clone())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Final test accuracy of each run, keyed by (strategy, fraction, domain).
pub fn final_accuracies(records: &[ExperimentRecord]) -> BTreeMap<(String, String, String), Vec<(u64, f64)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.split == "test" && r.metric == "accuracy") {
        out.entry((r.strategy.clone(), format!("{}", r.fraction), r.domain.clone())).or_default().push((r.seed, r.value));
    }
    out
}

/// Mean test accuracy per strategy and domain at each strategy's largest fraction.
pub fn strategy_table(records: &[ExperimentRecord]) -> Vec<(String, f64, usize, BTreeMap<String, f64>)> {
    let mut top: BTreeMap<String, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.split == "test" && r.metric == "accuracy") {
        let e = top.entry(r.strategy.clone()).or_insert(r.fraction);
        *e = e.max(r.fraction);
    }
    top.into_iter()
        .map(|(strategy, fraction)| {
            let mut per_domain: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            let mut runs = std::collections::BTreeSet::new();
            for r in records.iter().filter(|r| {
                r.split == "test" && r.metric == "accuracy" && r.strategy == strategy && r.fraction == fraction
            }) {
                per_domain.entry(r.domain.clone()).or_default().push(r.value);
                runs.insert(&r.run_id);
            }
            let means = per_domain.into_iter().map(|(d, v)| (d, mean(&v))).collect();
            (strategy, fraction, runs.len(), means)
        })
        .collect()
}

/// Mean of `metric` (test split) per strategy over runs at the strategy's largest fraction.
fn probe_means(records: &[ExperimentRecord], metric: &str) -> BTreeMap<String, f64> {
    let mut top: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric) {
        let e = top.entry(&r.strategy).or_insert(r.fraction);
        *e = e.max(r.fraction);
    }
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric && top.get(r.strategy.as_str()) == Some(&r.fraction)) {
        acc.entry(r.strategy.clone()).or_default().push(r.value);
    }
    acc.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// Mean curve over runs of a ranked metric family (`prefix@k`) per strategy.
fn ranked_curves(records: &[ExperimentRecord], prefix: &str) -> Vec<Series> {
    let mut acc: BTreeMap<String, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if let Some((base, k)) = r.metric.split_once('@') {
            if base == prefix {
                if let Ok(k) = k.parse::<u64>() {
                    acc.entry(r.strategy.clone()).or_default().entry(k).or_default().push(r.value);
                }
            }
        }
    }
    acc.into_iter()
        .map(|(name, pts)| Series { name, points: pts.into_iter().map(|(k, v)| (k as f64, mean(&v))).collect() })
        .collect()
}

fn write(path: PathBuf, text: String, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the merged CSV, strategy tables and plots into `out`. Returns the files written.
pub fn emit_report(records: &[ExperimentRecord], out: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut sorted = records.to_vec();
    sorted.sort_by_cached_key(sort_key);
    write_records(&out.join(MERGED_RECORDS_FILE), &sorted)?;
    written.push(out.join(MERGED_RECORDS_FILE));

    let table = strategy_table(&sorted);
    let domains: Vec<String> = {
        let mut d: Vec<String> = table.iter().flat_map(|t| t.3.keys().cloned()).collect();
        d.sort();
        d.dedup();
        d
    };
    let mut csv = format!("strategy,fraction,runs{}\n", domains.iter().map(|d| format!(",{}_acc", d.to_lowercase())).collect::<String>());
    for (strategy, fraction, runs, means) in &table {
        csv.push_str(&format!("{strategy},{fraction},{runs}"));
        for d in &domains {
            match means.get(d) {
                Some(v) => csv.push_str(&format!(",{v:.2}")),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    write(out.join(STRATEGY_TABLE_FILE), csv, &mut written)?;

    let finals = final_accuracies(&sorted);
    for domain in &domains {
        let mut by_strategy: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for ((strategy, fraction, d), v) in &finals {
            if d == domain {
                let accs: Vec<f64> = v.iter().map(|p| p.1).collect();
                by_strategy.entry(strategy.clone()).or_default().push((fraction.parse().unwrap_or(0.0), mean(&accs)));
            }
        }
        let series: Vec<Series> = by_strategy
            .into_iter()
            .map(|(name, mut points)| {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series { name, points }
            })
            .collect();
        let svg = line_plot(&format!("{domain} test accuracy vs. training fraction"), "training fraction", "accuracy (%)", &series, &[]);
        write(out.join(format!("accuracy_vs_fraction_{}.svg", domain.to_lowercase())), svg, &mut written)?;
    }

    let cumvar = ranked_curves(&sorted, "cumvar");
    if !cumvar.is_empty() {
        let svg = line_plot("Cumulative explained variance", "principal components", "cumulative variance", &cumvar, &[0.9]);
        write(out.join("cumulative_variance.svg"), svg, &mut written)?;
    }
    let tuning = ranked_curves(&sorted, "tuning");
    if !tuning.is_empty() {
        let svg = line_plot("Tuning curves", "channel rank", "normalized mean activation", &tuning, &[]);
        write(out.join("tuning_curves.svg"), svg, &mut written)?;
    }
    let buckets = ["regions_one", "regions_two", "regions_three_plus"].map(|m| probe_means(&sorted, m));
    if buckets.iter().any(|b| !b.is_empty()) {
        let mut names: Vec<String> = buckets.iter().flat_map(|b| b.keys().cloned()).collect();
        names.sort();
        names.dedup();
        let groups: Vec<(String, Vec<f64>)> = names
            .iter()
            .map(|n| (n.clone(), buckets.iter().map(|b| b.get(n).copied().unwrap_or(0.0)).collect()))
            .collect();
        let cats = ["1", "2", ">=3"].map(String::from);
        let svg = bar_plot("High-activation regions per image", "images", &cats, &groups);
        write(out.join("region_histogram.svg"), svg, &mut written)?;
    }

    let probe_cols = ["pcs_to_variance", "single_region_share", "shape_bias"];
    let probe = probe_cols.map(|m| probe_means(&sorted, m));
    if probe.iter().any(|p| !p.is_empty()) {
        let mut names: Vec<&String> = probe.iter().flat_map(|p| p.keys()).collect();
        names.sort();
        names.dedup();
        let mut csv = format!("strategy,{}\n", probe_cols.join(","));
        for n in names {
            csv.push_str(n);
            for p in &probe {
                match p.get(n) {
                    Some(v) => csv.push_str(&format!(",{v:.4}")),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
        write(out.join(PROBE_TABLE_FILE), csv, &mut written)?;
    }
    Ok(written)
}

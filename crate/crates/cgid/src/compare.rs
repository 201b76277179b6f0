//! Side-by-side comparison of finished runs: final-stage metrics per
//! method and ratio, reduced to per-seed medians, with deltas against a
//! reference method.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cgid_core::metrics::StageMetrics;

use crate::report::LoadedReport;
use crate::CliError;

pub const METRIC_NAMES: [&str; 8] = ["A_IND", "F_IND", "A_OOD", "F_OOD", "A_ALL", "F_ALL", "Loss", "Gain"];

pub fn metric_values(m: &StageMetrics) -> [Option<f64>; 8] {
    [
        Some(m.a_ind),
        m.f_ind,
        m.a_ood,
        m.f_ood,
        Some(m.a_all),
        m.f_all,
        m.loss,
        m.gain,
    ]
}

/// Median of the values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub ood_ratio: f64,
    pub seeds: Vec<u64>,
    pub medians: [Option<f64>; 8],
    /// `medians - reference medians` at the same ratio.
    pub deltas: [Option<f64>; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compares the last stage of every report. Runs sharing a seed and ratio
/// must have been evaluated on the same split. `reference` defaults to the
/// method of the first report.
pub fn compare_runs(reports: &[LoadedReport], reference: Option<&str>) -> Result<Comparison, CliError> {
    if reports.is_empty() {
        return Err(CliError::Compare("no reports given".into()));
    }
    let mut splits: BTreeMap<(u64, u64), (u64, &std::path::Path)> = BTreeMap::new();
    // (ratio bits, method) -> seed -> metrics; BTreeMap keeps output order stable
    let mut groups: Vec<((String, f64), BTreeMap<u64, [Option<f64>; 8]>)> = Vec::new();
    for r in reports {
        let last = r
            .stages
            .last()
            .ok_or_else(|| CliError::Compare(format!("{} has no stages", r.path.display())))?;
        let key = (last.seed, last.ood_ratio.to_bits());
        match splits.get(&key) {
            Some(&(fp, other)) if fp != last.split_fingerprint => {
                return Err(CliError::Compare(format!(
                    "{} and {} use different splits for seed {} at ratio {}",
                    other.display(),
                    r.path.display(),
                    last.seed,
                    last.ood_ratio
                )));
            }
            Some(_) => {}
            None => {
                splits.insert(key, (last.split_fingerprint, &r.path));
            }
        }
        let gk = (last.method.clone(), last.ood_ratio);
        let idx = match groups.iter().position(|(k, _)| *k == gk) {
            Some(i) => i,
            None => {
                groups.push((gk, BTreeMap::new()));
                groups.len() - 1
            }
        };
        groups[idx].1.insert(last.seed, metric_values(&last.metrics));
    }
    let reference = reference.map(str::to_string).unwrap_or_else(|| groups[0].0 .0.clone());
    if !groups.iter().any(|((m, _), _)| *m == reference) {
        return Err(CliError::Compare(format!("reference method {reference} is not among the reports")));
    }
    let mut rows: Vec<ComparisonRow> = groups
        .into_iter()
        .map(|((method, ood_ratio), by_seed)| {
            let mut medians = [None; 8];
            for (k, slot) in medians.iter_mut().enumerate() {
                let vals: Vec<f64> = by_seed.values().filter_map(|m| m[k]).collect();
                *slot = median(&vals);
            }
            ComparisonRow {
                method,
                ood_ratio,
                seeds: by_seed.keys().copied().collect(),
                medians,
                deltas: [None; 8],
            }
        })
        .collect();
    let refs: Vec<(f64, [Option<f64>; 8])> = rows
        .iter()
        .filter(|r| r.method == reference)
        .map(|r| (r.ood_ratio, r.medians))
        .collect();
    for row in &mut rows {
        if let Some((_, base)) = refs.iter().find(|(ratio, _)| *ratio == row.ood_ratio) {
            for k in 0..8 {
                row.deltas[k] = row.medians[k].zip(base[k]).map(|(a, b)| a - b);
            }
        }
    }
    Ok(Comparison { reference, rows })
}

impl Comparison {
    /// Fixed-width text table with one line of medians and one of deltas per row.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12} {:>6} {:>5}", "method", "ratio", "seeds");
        for name in METRIC_NAMES {
            let _ = write!(s, " {name:>8}");
        }
        s.push('\n');
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        for row in &self.rows {
            let _ = write!(s, "{:<12} {:>6} {:>5}", row.method, row.ood_ratio, row.seeds.len());
            for v in row.medians {
                let _ = write!(s, " {:>8}", fmt(v));
            }
            s.push('\n');
            let _ = write!(s, "{:<12} {:>6} {:>5}", format!("  vs {}", self.reference), "", "");
            for d in row.deltas {
                let _ = write!(s, " {:>8}", d.map_or_else(|| "-".to_string(), |x| format!("{x:+.4}")));
            }
            s.push('\n');
        }
        s
    }
}

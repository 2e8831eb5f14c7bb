//! Per-case metric rows and their aggregation into distribution statistics.
//!
//! CSV columns (per-case rows):
//! `case_id,class,precision,recall,dice,jaccard,hd95_mm,hd95_missing`
//! where hd95_mm is empty when either boundary was empty (flagged, never 0).

use super::MetricError;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseClassRow {
    pub case_id: String,
    pub class_name: String,
    pub precision: f64,
    pub recall: f64,
    pub dice: f64,
    pub jaccard: f64,
    /// Missing (None) when HD95 is undefined for the case, with the reason
    /// recorded by the producer; never reported as 0.
    pub hd95_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    /// class name -> metric name -> stats. HD95 aggregates only the defined
    /// values; `hd95_missing` counts the flagged cases.
    pub per_class: BTreeMap<String, BTreeMap<String, MetricStats>>,
    pub hd95_missing: BTreeMap<String, usize>,
    pub cases: usize,
}

pub fn stats(values: &[f64]) -> Option<MetricStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(MetricStats {
        n,
        mean,
        sd: var.sqrt(),
        median: quantile_linear(&sorted, 0.5),
        q1: quantile_linear(&sorted, 0.25),
        q3: quantile_linear(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
    })
}

fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Aggregate per-case rows into per-class distribution statistics. The raw
/// rows stay available to the caller for external plotting.
pub fn aggregate(rows: &[CaseClassRow]) -> Result<AggregateReport, MetricError> {
    if rows.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut grouped: BTreeMap<String, Vec<&CaseClassRow>> = BTreeMap::new();
    for r in rows {
        grouped.entry(r.class_name.clone()).or_default().push(r);
    }
    let mut per_class = BTreeMap::new();
    let mut hd95_missing = BTreeMap::new();
    for (class, rows) in &grouped {
        let mut metrics = BTreeMap::new();
        let collect = |f: fn(&CaseClassRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
        metrics.insert(
            "precision".to_string(),
            stats(&collect(|r| r.precision)).unwrap(),
        );
        metrics.insert("recall".to_string(), stats(&collect(|r| r.recall)).unwrap());
        metrics.insert("dice".to_string(), stats(&collect(|r| r.dice)).unwrap());
        metrics.insert(
            "jaccard".to_string(),
            stats(&collect(|r| r.jaccard)).unwrap(),
        );
        let hd: Vec<f64> = rows.iter().filter_map(|r| r.hd95_mm).collect();
        if let Some(s) = stats(&hd) {
            metrics.insert("hd95_mm".to_string(), s);
        }
        hd95_missing.insert(
            class.clone(),
            rows.iter().filter(|r| r.hd95_mm.is_none()).count(),
        );
        per_class.insert(class.clone(), metrics);
    }
    let mut case_ids: Vec<&str> = rows.iter().map(|r| r.case_id.as_str()).collect();
    case_ids.sort_unstable();
    case_ids.dedup();
    Ok(AggregateReport {
        per_class,
        hd95_missing,
        cases: case_ids.len(),
    })
}

pub fn rows_to_csv(rows: &[CaseClassRow]) -> String {
    let mut out =
        String::from("case_id,class,precision,recall,dice,jaccard,hd95_mm,hd95_missing\n");
    for r in rows {
        let (hd, missing) = match r.hd95_mm {
            Some(v) => (format!("{v}"), "0"),
            None => (String::new(), "1"),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.case_id, r.class_name, r.precision, r.recall, r.dice, r.jaccard, hd, missing
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(case: &str, class: &str, dice: f64, hd: Option<f64>) -> CaseClassRow {
        CaseClassRow {
            case_id: case.into(),
            class_name: class.into(),
            precision: dice,
            recall: dice,
            dice,
            jaccard: dice,
            hd95_mm: hd,
        }
    }

    #[test]
    fn single_case_mean_is_value_sd_zero() {
        let rep = aggregate(&[row("c1", "ventricle", 0.8, Some(2.0))]).unwrap();
        let s = &rep.per_class["ventricle"]["dice"];
        assert_eq!(s.mean, 0.8);
        assert_eq!(s.sd, 0.0);
        assert_eq!(rep.cases, 1);
    }

    #[test]
    fn equal_rows_have_zero_sd() {
        let rows: Vec<_> = (0..3).map(|i| row(&format!("c{i}"), "x", 0.8, None)).collect();
        let rep = aggregate(&rows).unwrap();
        let s = &rep.per_class["x"]["dice"];
        assert!((s.mean - 0.8).abs() < 1e-12);
        assert!(s.sd < 1e-12);
        assert_eq!(rep.hd95_missing["x"], 3);
    }

    #[test]
    fn population_sd_of_two_rows() {
        let rep = aggregate(&[row("a", "x", 0.7, None), row("b", "x", 0.9, None)]).unwrap();
        let s = &rep.per_class["x"]["dice"];
        assert!((s.mean - 0.8).abs() < 1e-15);
        assert!((s.sd - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_input_is_error() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_flags_missing_hd95() {
        let csv = rows_to_csv(&[row("a", "x", 0.5, None), row("b", "x", 0.5, Some(3.0))]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",,1"));
        assert!(lines[2].ends_with(",3,0"));
    }
}

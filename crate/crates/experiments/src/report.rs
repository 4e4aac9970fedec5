//! JSON (full tables) and CSV (summary rows) report files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{ConstraintReport, EndToEndReport, WarmStartReport};

/// `{case}_{task}_seed{a-b-c}`, the stem shared by a report's JSON and CSV files.
pub fn report_stem(case_name: &str, task: &str, seeds: &[u64]) -> String {
    let s: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    format!("{case_name}_{task}_seed{}", s.join("-"))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.17e}"))
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn end_to_end_csv(r: &EndToEndReport) -> String {
    let rows = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.config.id.to_string(),
                row.label.clone(),
                num(row.legality_rate),
                opt(row.avg_cost_deviation),
                (r.best_config == Some(row.config.id)).to_string(),
                row.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(&["config", "label", "legality_rate", "avg_cost_deviation", "best", "error"], rows)
}

pub fn constraint_csv(r: &ConstraintReport) -> String {
    let rows = r
        .rows
        .iter()
        .map(|row| {
            vec![
                row.config.id.to_string(),
                row.label.clone(),
                num(row.elementwise_accuracy),
                num(row.exact_match_rate),
                (r.best_config == Some(row.config.id)).to_string(),
                row.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(&["config", "label", "elementwise_accuracy", "exact_match_rate", "best", "error"], rows)
}

pub fn warm_start_csv(r: &WarmStartReport) -> String {
    let rows = r
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.index.to_string(),
                p.cold_iterations.to_string(),
                p.warm_iterations.to_string(),
                num(p.cold_objective),
                num(p.warm_objective),
                num(p.rel_objective_diff),
            ]
        })
        .collect();
    csv_text(
        &["index", "cold_iterations", "warm_iterations", "cold_objective", "warm_objective", "rel_objective_diff"],
        rows,
    )
}

/// Writes `stem.json` and `stem.csv` into `dir` and returns both paths.
pub fn write_report<T: Serialize>(dir: &Path, stem: &str, value: &T, csv: &str) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&json_path, to_json(value))?;
    std::fs::write(&csv_path, csv)?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_embeds_case_task_and_seeds() {
        assert_eq!(report_stem("case30", "e2e", &[0, 1, 2]), "case30_e2e_seed0-1-2");
    }
}

//! Table-2-shaped reporting: an aligned text table of baseline and tuned
//! rows per dataset, with a machine-readable JSON twin. Missing cells
//! render as an em dash.

use std::collections::BTreeMap;
use std::path::Path;

use super::ExperimentError;

/// One dataset column: aggregate rows keyed by their `aggregate.csv` label
/// ("80", "icl:6", "icl_best", "threshold", ...).
#[derive(Debug, Clone)]
pub struct ReportColumn {
    pub dataset: String,
    pub rows: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub text: String,
    pub json: serde_json::Value,
}

/// Read `(row, mean, std)` triples back from an `aggregate.csv`.
pub fn load_aggregate_rows(path: &Path) -> Result<BTreeMap<String, (f64, f64)>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| {
                ExperimentError::InvalidConfig(format!("bad number `{s}` in {}: {e}", path.display()))
            })
        };
        rows.insert(
            record[0].to_string(),
            (parse(&record[1])?, parse(&record[2])?),
        );
    }
    Ok(rows)
}

/// Human-readable name and sort position for a raw row label.
fn row_title(label: &str) -> (u8, usize, String) {
    if let Some(k) = label.strip_prefix("icl:") {
        let k: usize = k.parse().unwrap_or(0);
        let title = if k == 0 {
            "zero-shot".to_string()
        } else {
            format!("{k}-shot")
        };
        (1, k, title)
    } else if label == "icl_best" {
        (0, 0, "few-shot best".to_string())
    } else if let Ok(size) = label.parse::<usize>() {
        (3, size, format!("tuned@{size}"))
    } else {
        (2, 0, label.to_string())
    }
}

fn format_cell(mean: f64, std: f64) -> String {
    if std == 0.0 {
        format!("{mean:.2}")
    } else {
        format!("{mean:.2}\u{b1}{std:.2}")
    }
}

/// Render the aligned table and its JSON twin. Rows are the union across
/// datasets (few-shot best first, then per-k in-context, other baselines,
/// then tuned sizes ascending); absent cells show "—".
pub fn render_report(columns: &[ReportColumn]) -> ReportOutput {
    let mut keys: Vec<&str> = columns
        .iter()
        .flat_map(|c| c.rows.keys().map(String::as_str))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    keys.sort_by_key(|k| {
        let (group, rank, _) = row_title(k);
        (group, rank)
    });

    let mut header: Vec<String> = vec!["row".to_string()];
    header.extend(columns.iter().map(|c| c.dataset.clone()));
    let mut table: Vec<Vec<String>> = vec![header];
    for key in &keys {
        let (_, _, title) = row_title(key);
        let mut row = vec![title];
        for column in columns {
            row.push(match column.rows.get(*key) {
                Some(&(mean, std)) => format_cell(mean, std),
                None => "\u{2014}".to_string(),
            });
        }
        table.push(row);
    }

    let n_cols = table[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &table {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            for _ in cell.chars().count()..widths[c] {
                line.push(' ');
            }
        }
        text.push_str(line.trim_end());
        text.push('\n');
    }

    let mut cells = serde_json::Map::new();
    for column in columns {
        let mut per_row = serde_json::Map::new();
        for (key, &(mean, std)) in &column.rows {
            let (_, _, title) = row_title(key);
            per_row.insert(
                title,
                serde_json::json!({ "mean": mean, "std": std, "label": key }),
            );
        }
        cells.insert(column.dataset.clone(), serde_json::Value::Object(per_row));
    }
    let json = serde_json::json!({
        "rows": keys.iter().map(|k| row_title(k).2).collect::<Vec<_>>(),
        "datasets": columns.iter().map(|c| c.dataset.clone()).collect::<Vec<_>>(),
        "cells": cells,
    });

    ReportOutput { text, json }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_render_a_header_only_table() {
        let out = render_report(&[]);
        assert_eq!(out.text, "row\n");
        assert_eq!(out.json["rows"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn single_cell_renders_two_decimals_without_std() {
        let columns = vec![ReportColumn {
            dataset: "parlai-single-adversarial".into(),
            rows: BTreeMap::from([("80".to_string(), (0.77, 0.0))]),
        }];
        let out = render_report(&columns);
        assert!(out.text.contains("tuned@80"));
        assert!(out.text.contains("0.77"));
        assert!(!out.text.contains('\u{b1}'));
    }

    #[test]
    fn missing_cells_render_as_em_dash_and_rows_are_ordered() {
        let columns = vec![
            ReportColumn {
                dataset: "a".into(),
                rows: BTreeMap::from([
                    ("80".to_string(), (0.91, 0.01)),
                    ("2000".to_string(), (0.95, 0.005)),
                    ("icl_best".to_string(), (0.8, 0.02)),
                    ("icl:0".to_string(), (0.5, 0.0)),
                ]),
            },
            ReportColumn {
                dataset: "b".into(),
                rows: BTreeMap::from([("80".to_string(), (0.7, 0.0))]),
            },
        ];
        let out = render_report(&columns);
        let lines: Vec<&str> = out.text.lines().collect();
        assert_eq!(lines.len(), 5);
        // order: few-shot best, zero-shot, tuned@80, tuned@2000
        assert!(lines[1].starts_with("few-shot best"));
        assert!(lines[2].starts_with("zero-shot"));
        assert!(lines[3].starts_with("tuned@80"));
        assert!(lines[4].starts_with("tuned@2000"));
        // dataset b misses everything except tuned@80
        assert!(lines[1].contains('\u{2014}'));
        assert!(lines[3].contains("0.91\u{b1}0.01"));
        assert!(lines[3].contains("0.70"));
    }

    #[test]
    fn aggregate_rows_round_trip_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aggregate.csv");
        std::fs::write(&path, "size,mean,std\n80,0.912,0.013\nicl_best,0.8,0.0\n").unwrap();
        let rows = load_aggregate_rows(&path).unwrap();
        assert_eq!(rows["80"], (0.912, 0.013));
        assert_eq!(rows["icl_best"], (0.8, 0.0));
    }
}

use std::fmt::Write as _;

use crate::records::{Summary, SummaryCell};

/// Rows are methods, columns the sweep axis (or evaluation colors).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

fn format_cell(cell: &SummaryCell, precision: usize) -> String {
    let mut s = match &cell.stat {
        None => return "-".into(),
        Some(st) => match st.std {
            Some(sd) => format!("{:.p$}±{:.p$}", st.mean, sd, p = precision),
            None => format!("{:.p$}±n/a", st.mean, p = precision),
        },
    };
    if !cell.missing_seeds.is_empty() {
        s.push('*');
    }
    s
}

pub fn emit_table(summary: &Summary) -> Table {
    let precision = if summary.kind.is_lqr() { 1 } else { 2 };
    let mut header = vec!["method".to_string()];
    header.extend(summary.columns.iter().cloned());
    let mut warnings = Vec::new();
    if summary.cells.iter().all(|c| c.stat.is_none()) {
        warnings.push("no results".to_string());
    }
    let mut rows = Vec::new();
    for m in &summary.methods {
        let mut row = vec![m.to_string()];
        for col in &summary.columns {
            let cell = summary.cells.iter().find(|c| c.method == *m && &c.column == col);
            row.push(cell.map(|c| format_cell(c, precision)).unwrap_or_else(|| "-".into()));
            if let Some(c) = cell.filter(|c| !c.missing_seeds.is_empty()) {
                warnings.push(format!("{m} {col}: missing seeds {:?}", c.missing_seeds));
            }
        }
        if summary.cells.iter().any(|c| c.method == *m && c.stat.is_some()) {
            rows.push(row);
        }
    }
    for f in &summary.failures {
        warnings.push(format!("failed {}: {}", f.job, f.error));
    }
    Table { header, rows, warnings }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let fields: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Space-aligned text with `*` marking cells that miss seeds.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|i| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .map(|r| r.get(i).map_or(0, |f| f.chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (f, w))| {
                    let pad = w - f.chars().count();
                    if i == 0 {
                        format!("{f}{}", " ".repeat(pad))
                    } else {
                        format!("{}{f}", " ".repeat(pad))
                    }
                })
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        }
        for w in &self.warnings {
            writeln!(out, "warning: {w}").unwrap();
        }
        out
    }
}

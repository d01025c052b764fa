//! Metrics tables with the best value of each column marked.

use kanfc::metrics::{MetricKind, Metrics, MetricsReport};

/// Which metric set of a report a table shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Units {
    Physical,
    Scaled,
}

impl Units {
    fn pick(self, r: &MetricsReport) -> &Metrics {
        match self {
            Units::Physical => &r.metrics,
            Units::Scaled => &r.scaled,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Units::Physical => "original units",
            Units::Scaled => "scaled units",
        }
    }
}

pub const BEST_MARK: char = '*';

fn header(kind: MetricKind) -> String {
    format!("{} {}", kind.label(), kind.arrow())
}

/// `best[row][col]`: whether the row holds the best value of the column.
/// NaN never wins; ties all win.
fn best_mask(rows: &[&Metrics]) -> Vec<[bool; 5]> {
    let mut mask = vec![[false; 5]; rows.len()];
    for (c, kind) in MetricKind::ALL.into_iter().enumerate() {
        let values = rows.iter().map(|m| m.get(kind)).filter(|v| !v.is_nan());
        let best = if kind.higher_is_better() {
            values.fold(f64::NEG_INFINITY, f64::max)
        } else {
            values.fold(f64::INFINITY, f64::min)
        };
        for (r, m) in rows.iter().enumerate() {
            mask[r][c] = m.get(kind) == best;
        }
    }
    mask
}

fn cell(v: f64, best: bool) -> String {
    let text = if v.is_nan() { "NaN".to_string() } else { format!("{v:.4}") };
    if best {
        format!("{text}{BEST_MARK}")
    } else {
        text
    }
}

fn grid(reports: &[MetricsReport], units: Units) -> (Vec<String>, Vec<Vec<String>>) {
    let metrics: Vec<&Metrics> = reports.iter().map(|r| units.pick(r)).collect();
    let mask = best_mask(&metrics);
    let mut head = vec!["Model".to_string()];
    head.extend(MetricKind::ALL.map(header));
    let rows = reports
        .iter()
        .zip(&metrics)
        .zip(&mask)
        .map(|((r, m), best)| {
            let mut row = vec![r.model.clone()];
            row.extend(
                MetricKind::ALL
                    .into_iter()
                    .enumerate()
                    .map(|(c, k)| cell(m.get(k), best[c])),
            );
            row
        })
        .collect();
    (head, rows)
}

/// Comma-separated table, one row per model in the given order.
pub fn table_csv(reports: &[MetricsReport], units: Units) -> String {
    let (head, rows) = grid(reports, units);
    let mut out = head.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Fixed-width table with a title line and a legend for the marker.
pub fn table_text(title: &str, reports: &[MetricsReport], units: Units) -> String {
    let (head, mut rows) = grid(reports, units);
    for row in &mut rows {
        for c in row.iter_mut().skip(1).filter(|c| !c.ends_with(BEST_MARK)) {
            c.push(' ');
        }
    }
    let mut widths: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
    let mut out = format!("{title} ({})\n{rule}\n{}\n{rule}\n", units.label(), line(&head));
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out.push_str(&format!("{rule}\n{BEST_MARK} best in column\n"));
    out
}

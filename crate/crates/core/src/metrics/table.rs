use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation of repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: 0.0, std: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, n }
    }
}

/// Methods × representations grid of per-run scores, rendered as
/// `mean ± std` cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub title: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    cells: Vec<Vec<Vec<f64>>>,
}

impl ResultsTable {
    pub fn new(title: impl Into<String>, rows: Vec<String>, columns: Vec<String>) -> Self {
        let cells = vec![vec![Vec::new(); columns.len()]; rows.len()];
        ResultsTable {
            title: title.into(),
            rows,
            columns,
            cells,
        }
    }

    pub fn push(&mut self, row: usize, column: usize, value: f64) {
        self.cells[row][column].push(value);
    }

    pub fn summary(&self, row: usize, column: usize) -> Summary {
        Summary::of(&self.cells[row][column])
    }

    pub fn render(&self) -> String {
        let cell = |r: usize, c: usize| {
            let s = self.summary(r, c);
            if s.n == 0 {
                "-".to_string()
            } else {
                format!("{:.3} ± {:.3}", s.mean, s.std)
            }
        };
        let first = self
            .rows
            .iter()
            .map(|r| r.chars().count())
            .chain([self.title.chars().count()])
            .max()
            .unwrap_or(0);
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| {
                (0..self.rows.len())
                    .map(|r| cell(r, c).chars().count())
                    .chain([self.columns[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();

        let mut out = String::new();
        let _ = write!(out, "{:<first$}", self.title);
        for (c, name) in self.columns.iter().enumerate() {
            let _ = write!(out, " | {:>w$}", name, w = widths[c]);
        }
        out.push('\n');
        let rule = first + widths.iter().map(|w| w + 3).sum::<usize>();
        out.push_str(&"-".repeat(rule));
        out.push('\n');
        for (r, name) in self.rows.iter().enumerate() {
            let _ = write!(out, "{:<first$}", name);
            for (c, w) in widths.iter().enumerate() {
                let _ = write!(out, " | {:>w$}", cell(r, c), w = *w);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[0.4]).std, 0.0);
    }

    #[test]
    fn renders_mean_and_std() {
        let mut t = ResultsTable::new("Macro-F1", vec!["basic".into()], vec!["a".into(), "b".into()]);
        t.push(0, 0, 0.25);
        t.push(0, 0, 0.75);
        let text = t.render();
        assert!(text.contains("0.500 ± 0.354"));
        assert!(text.contains(" -"));
        assert_eq!(text.lines().count(), 3);
    }
}

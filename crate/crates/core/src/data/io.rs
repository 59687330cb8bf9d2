//! Text formats for datasets and label lists.
//!
//! `svmlight-multilabel`: one instance per line,
//!
//! ```text
//! # n_features=6 n_labels=4
//! 1,3 0:0.5 4:1.0
//!   2:1.0
//! ```
//!
//! The first token is the comma-separated label list unless it contains a
//! `:` (or the line starts with whitespace), in which case the instance has
//! no labels. `#` starts a comment; a comment line of the form
//! `# n_features=N n_labels=L` fixes the dimensions. Completely empty lines
//! are skipped; a whitespace-only line is an instance with no labels and no
//! features.
//!
//! Dense pair: a feature file with whitespace-separated values, one row per
//! instance, and a row-aligned label file with one comma-separated label list
//! per line (an empty line is an empty set).

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::data::SparseDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Labels in the file start at 1.
    pub label_one_based: bool,
    /// Feature indices in the file start at 1 (svmlight only).
    pub feature_one_based: bool,
    /// Scale each instance to unit L2 norm after parsing.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Svmlight(PathBuf),
    DensePair { features: PathBuf, labels: PathBuf },
}

pub fn parse_dataset(source: &DataSource, opts: &ParseOptions) -> Result<SparseDataset> {
    match source {
        DataSource::Svmlight(path) => read_svmlight(path, opts),
        DataSource::DensePair { features, labels } => read_dense_pair(features, labels, opts),
    }
}

pub fn read_svmlight(path: &Path, opts: &ParseOptions) -> Result<SparseDataset> {
    parse_svmlight(BufReader::new(File::open(path)?), opts)
}

pub fn read_dense_pair(features: &Path, labels: &Path, opts: &ParseOptions) -> Result<SparseDataset> {
    parse_dense_pair(
        BufReader::new(File::open(features)?),
        BufReader::new(File::open(labels)?),
        opts,
    )
}

fn parse_index(tok: &str, one_based: bool, line: usize, what: &str) -> Result<usize> {
    let raw: i64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad {what} index {tok:?}")))?;
    if raw < 0 {
        return Err(Error::parse(line, format!("negative {what} index {raw}")));
    }
    if one_based {
        if raw == 0 {
            return Err(Error::parse(line, format!("{what} index 0 in a one-based file")));
        }
        Ok(raw as usize - 1)
    } else {
        Ok(raw as usize)
    }
}

/// Parses one comma-separated label list. An empty string is the empty set.
pub fn parse_label_list(field: &str, one_based: bool, line: usize) -> Result<Vec<usize>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|tok| parse_index(tok, one_based, line, "label"))
        .collect()
}

fn parse_header(comment: &str, n_features: &mut Option<usize>, n_labels: &mut Option<usize>) {
    for tok in comment.split_whitespace() {
        if let Some((key, val)) = tok.split_once('=') {
            match (key, val.parse::<usize>()) {
                ("n_features", Ok(v)) => *n_features = Some(v),
                ("n_labels", Ok(v)) => *n_labels = Some(v),
                _ => {}
            }
        }
    }
}

pub fn parse_svmlight(reader: impl BufRead, opts: &ParseOptions) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = None;
    let mut n_labels = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.trim_start().strip_prefix('#') {
            parse_header(comment, &mut n_features, &mut n_labels);
            continue;
        }
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace().peekable();
        let starts_blank = content.starts_with(char::is_whitespace);
        let label_set = match tokens.peek() {
            Some(tok) if !starts_blank && !tok.contains(':') => {
                let field = tokens.next().unwrap_or_default();
                parse_label_list(field, opts.label_one_based, lineno)?
            }
            _ => Vec::new(),
        };
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx = parse_index(idx, opts.feature_one_based, lineno, "feature")?;
            let val: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad feature value {val:?}")))?;
            if row.iter().any(|&(j, _)| j == idx) {
                return Err(Error::parse(lineno, format!("duplicate feature index {idx}")));
            }
            row.push((idx, val));
        }
        rows.push(row);
        labels.push(label_set);
    }

    if rows.is_empty() {
        return Err(Error::EmptyInput("svmlight file has no instances".into()));
    }
    finish(rows, labels, n_features, n_labels, opts)
}

pub fn parse_dense_pair(features: impl BufRead, labels: impl BufRead, opts: &ParseOptions) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in features.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("bad feature value {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {w} features, found {}", values.len()),
                ))
            }
            _ => {}
        }
        rows.push(
            values
                .into_iter()
                .enumerate()
                .filter(|&(_, v)| v != 0.0)
                .collect::<Vec<_>>(),
        );
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("feature file has no rows".into()));
    }
    let label_sets = parse_label_lines(labels, opts.label_one_based)?;
    if label_sets.len() != rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows but {} label rows",
            rows.len(),
            label_sets.len()
        )));
    }
    finish(rows, label_sets, width, None, opts)
}

fn finish(
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<Vec<usize>>,
    n_features: Option<usize>,
    n_labels: Option<usize>,
    opts: &ParseOptions,
) -> Result<SparseDataset> {
    let mut ds = SparseDataset::from_rows(rows, labels, n_features, n_labels)?;
    let empty = ds.empty_label_count();
    if empty > 0 {
        log::warn!("{empty} instance(s) have no labels; they are negatives for every label");
    }
    if opts.normalize {
        ds.normalize_l2();
    }
    Ok(ds)
}

/// Reads one comma-separated label list per line; every line is a row.
pub fn parse_label_lines(reader: impl BufRead, one_based: bool) -> Result<Vec<Vec<usize>>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let mut set = parse_label_list(&line?, one_based, i + 1)?;
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::parse(i + 1, "duplicate label"));
            }
            Ok(set)
        })
        .collect()
}

pub fn read_label_file(path: &Path, one_based: bool) -> Result<Vec<Vec<usize>>> {
    parse_label_lines(BufReader::new(File::open(path)?), one_based)
}

pub fn write_label_lines(mut w: impl Write, sets: &[Vec<usize>]) -> Result<()> {
    for set in sets {
        let line = set.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Writes the dataset in svmlight-multilabel form (zero-based indices) with a
/// dimension header, so that parsing the output reproduces it exactly.
pub fn write_svmlight(mut w: impl Write, ds: &SparseDataset) -> Result<()> {
    writeln!(w, "# n_features={} n_labels={}", ds.n_features(), ds.n_labels())?;
    for i in 0..ds.n_instances() {
        let labels = ds
            .label_set(i)
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let feats = ds
            .row(i)
            .iter()
            .map(|(j, v)| format!("{j}:{v}"))
            .collect::<Vec<_>>()
            .join(" ");
        match (labels.is_empty(), feats.is_empty()) {
            (true, true) => writeln!(w, " ")?,
            (true, false) => writeln!(w, " {feats}")?,
            (false, true) => writeln!(w, "{labels}")?,
            (false, false) => writeln!(w, "{labels} {feats}")?,
        }
    }
    Ok(())
}

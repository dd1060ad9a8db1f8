//! Tabular ingestion and discretization into complete-case integer columns.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::varset::MAX_VARS;

/// Default arity cap: columns with more distinct states are binarized.
pub const DEFAULT_MAX_STATES: usize = 4;

/// Cells as read from disk, before any coding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub missing_token: String,
}

impl RawTable {
    pub fn num_columns(&self) -> usize {
        self.headers.len()
    }
}

/// Reads a delimited text file. Without a header row the columns are named
/// `X1..Xn`.
pub fn load_csv(
    path: &Path,
    delimiter: u8,
    missing_token: &str,
    has_header: bool,
) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut headers: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let cells: Vec<String> = record.iter().map(str::to_owned).collect();
        if let Some(width) = headers.as_ref().map(Vec::len) {
            if cells.len() != width {
                return Err(Error::Parse(format!(
                    "{}: row at line {line} has {} fields, expected {width}",
                    path.display(),
                    cells.len()
                )));
            }
            rows.push(cells);
        } else if has_header {
            headers = Some(cells);
        } else {
            headers = Some((1..=cells.len()).map(|i| format!("X{i}")).collect());
            rows.push(cells);
        }
    }
    let headers = headers.ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    Ok(RawTable {
        headers,
        rows,
        missing_token: missing_token.to_owned(),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// How one column was turned into integer states.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coding {
    /// Distinct labels coded 0, 1, ... in order of first appearance.
    Categorical { levels: Vec<String> },
    /// Numeric values split at the column mean: `v < threshold` is state 0.
    BinarizedNumeric { threshold: f64 },
    /// Labels coded by first appearance, then split at the mean code.
    BinarizedCodes { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    pub arity: usize,
    #[serde(flatten)]
    pub coding: Coding,
}

/// Provenance record for a preprocessed dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub records: usize,
    pub dropped_records: usize,
    pub max_states: usize,
    pub columns: Vec<ColumnInfo>,
}

/// Discrete, complete-case data stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    arities: Vec<usize>,
    columns: Vec<Vec<u32>>,
    records: usize,
}

impl Dataset {
    /// Builds a dataset from already-coded columns.
    pub fn from_columns(
        names: Vec<String>,
        arities: Vec<usize>,
        columns: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let n = columns.len();
        if n == 0 || n > MAX_VARS {
            return Err(Error::InvalidArgument(format!(
                "variable count {n} outside 1..={MAX_VARS}"
            )));
        }
        if names.len() != n || arities.len() != n {
            return Err(Error::InvalidArgument(
                "names, arities and columns disagree in length".into(),
            ));
        }
        let records = columns[0].len();
        if records == 0 {
            return Err(Error::InvalidArgument("dataset has no records".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            if col.len() != records {
                return Err(Error::InvalidArgument(format!("column {i} is ragged")));
            }
            if arities[i] == 0 {
                return Err(Error::InvalidArgument(format!("column {i} has arity 0")));
            }
            if let Some(&v) = col.iter().find(|&&v| v as usize >= arities[i]) {
                return Err(Error::InvalidArgument(format!(
                    "column {i} holds state {v} but arity is {}",
                    arities[i]
                )));
            }
        }
        Ok(Dataset {
            names,
            arities,
            columns,
            records,
        })
    }

    /// Row-major convenience constructor; arities are inferred as `max + 1`
    /// and columns are named `X1..Xn`.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidArgument("ragged rows".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                columns[c].push(v);
            }
        }
        let arities = columns
            .iter()
            .map(|c| c.iter().max().map_or(1, |&m| m as usize + 1))
            .collect();
        let names = (1..=n).map(|i| format!("X{i}")).collect();
        Dataset::from_columns(names, arities, columns)
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_records(&self) -> usize {
        self.records
    }

    pub fn arity(&self, var: usize) -> usize {
        self.arities[var]
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn column(&self, var: usize) -> &[u32] {
        &self.columns[var]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same data with columns reordered: new column `i` is old `perm[i]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        Dataset::from_columns(
            perm.iter().map(|&p| self.names[p].clone()).collect(),
            perm.iter().map(|&p| self.arities[p]).collect(),
            perm.iter().map(|&p| self.columns[p].clone()).collect(),
        )
    }
}

/// Drops incomplete records and codes every column into `0..r`.
pub fn preprocess(table: &RawTable, max_states: usize) -> Result<(Dataset, DatasetMeta)> {
    let n = table.num_columns();
    if n == 0 {
        return Err(Error::InvalidArgument("table has no columns".into()));
    }
    let complete: Vec<&Vec<String>> = table
        .rows
        .iter()
        .filter(|row| !row.contains(&table.missing_token))
        .collect();
    if complete.is_empty() {
        return Err(Error::InvalidArgument(
            "no records left after removing missing values".into(),
        ));
    }

    let mut columns = Vec::with_capacity(n);
    let mut infos = Vec::with_capacity(n);
    for c in 0..n {
        let cells: Vec<&str> = complete.iter().map(|row| row[c].as_str()).collect();
        let (codes, arity, coding) = code_column(&cells, max_states);
        infos.push(ColumnInfo {
            name: table.headers[c].clone(),
            arity,
            coding,
        });
        columns.push(codes);
    }
    let arities = infos.iter().map(|i| i.arity).collect();
    let dataset = Dataset::from_columns(table.headers.clone(), arities, columns)?;
    let meta = DatasetMeta {
        n,
        records: complete.len(),
        dropped_records: table.rows.len() - complete.len(),
        max_states,
        columns: infos,
    };
    Ok((dataset, meta))
}

fn code_column(cells: &[&str], max_states: usize) -> (Vec<u32>, usize, Coding) {
    let mut levels: Vec<String> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let codes: Vec<u32> = cells
        .iter()
        .map(|&c| {
            *index.entry(c).or_insert_with(|| {
                levels.push(c.to_owned());
                levels.len() as u32 - 1
            })
        })
        .collect();

    let numbers: Option<Vec<f64>> = cells
        .iter()
        .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    let integral = cells.iter().all(|c| c.parse::<i64>().is_ok());
    let continuous = numbers.is_some() && !integral;

    if !continuous && levels.len() <= max_states {
        let arity = levels.len();
        return (codes, arity, Coding::Categorical { levels });
    }

    let (values, numeric): (Vec<f64>, bool) = match numbers {
        Some(v) => (v, true),
        None => (codes.iter().map(|&c| c as f64).collect(), false),
    };
    let threshold = values.iter().sum::<f64>() / values.len() as f64;
    let states: Vec<u32> = values.iter().map(|&v| u32::from(v >= threshold)).collect();
    let (states, arity) = compact(states);
    let coding = if numeric {
        Coding::BinarizedNumeric { threshold }
    } else {
        Coding::BinarizedCodes { threshold }
    };
    (states, arity, coding)
}

/// Renumbers a binary column so a single observed state becomes arity 1.
fn compact(states: Vec<u32>) -> (Vec<u32>, usize) {
    let has0 = states.contains(&0);
    let has1 = states.contains(&1);
    match (has0, has1) {
        (true, true) => (states, 2),
        _ => (vec![0; states.len()], 1),
    }
}

//! Design matrix storage, response vector and file ingestion.
//!
//! A [`Dataset`] is built once and never mutated. Columns are stored either
//! densely or as sorted `(row, value)` lists; both layouts expose the same
//! arithmetic and yield bit-identical sums because skipped entries are exact
//! zeros.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;

/// Columns with more than this share of zero cells are stored sparsely.
const SPARSE_ZERO_SHARE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Dense(Vec<f64>),
    /// Strictly increasing row indices and matching nonzero values.
    Sparse { rows: Vec<usize>, vals: Vec<f64> },
}

impl Column {
    /// Picks the storage layout from the share of zero cells.
    pub fn from_dense(values: Vec<f64>) -> Self {
        let n = values.len();
        let zeros = values.iter().filter(|v| **v == 0.0).count();
        if n > 0 && (zeros as f64) / (n as f64) > SPARSE_ZERO_SHARE {
            let (rows, vals) = values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .unzip();
            Column::Sparse { rows, vals }
        } else {
            Column::Dense(values)
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Column::Sparse { .. })
    }

    pub fn nnz(&self) -> usize {
        match self {
            Column::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            Column::Sparse { vals, .. } => vals.len(),
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        match self {
            Column::Dense(v) => v.clone(),
            Column::Sparse { rows, vals } => {
                let mut out = vec![0.0; n];
                for (&i, &x) in rows.iter().zip(vals) {
                    out[i] = x;
                }
                out
            }
        }
    }

    /// Iterates over the stored `(row, value)` entries.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            Column::Dense(v) => Box::new(v.iter().copied().enumerate()),
            Column::Sparse { rows, vals } => Box::new(rows.iter().copied().zip(vals.iter().copied())),
        }
    }

    /// `sum_i x_i * a_i`
    #[inline]
    pub fn dot(&self, a: &[f64]) -> f64 {
        match self {
            Column::Dense(v) => v.iter().zip(a).map(|(x, y)| x * y).sum(),
            Column::Sparse { rows, vals } => rows.iter().zip(vals).map(|(&i, x)| x * a[i]).sum(),
        }
    }

    /// `sum_i x_i * w_i * a_i`
    #[inline]
    pub fn weighted_dot(&self, w: &[f64], a: &[f64]) -> f64 {
        match self {
            Column::Dense(v) => v
                .iter()
                .zip(w)
                .zip(a)
                .map(|((x, wi), ai)| x * wi * ai)
                .sum(),
            Column::Sparse { rows, vals } => rows
                .iter()
                .zip(vals)
                .map(|(&i, x)| x * w[i] * a[i])
                .sum(),
        }
    }

    /// `sum_i w_i * x_i^2`
    pub fn weighted_sum_sq(&self, w: &[f64]) -> f64 {
        match self {
            Column::Dense(v) => v.iter().zip(w).map(|(x, wi)| wi * x * x).sum(),
            Column::Sparse { rows, vals } => rows.iter().zip(vals).map(|(&i, x)| w[i] * x * x).sum(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        match self {
            Column::Dense(v) => v.iter().map(|x| x * x).sum(),
            Column::Sparse { vals, .. } => vals.iter().map(|x| x * x).sum(),
        }
    }

    /// `out += a * x`
    #[inline]
    pub fn axpy(&self, a: f64, out: &mut [f64]) {
        match self {
            Column::Dense(v) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += a * x;
                }
            }
            Column::Sparse { rows, vals } => {
                for (&i, x) in rows.iter().zip(vals) {
                    out[i] += a * x;
                }
            }
        }
    }

    fn select_rows(&self, rows_keep: &[usize], n: usize) -> Column {
        let dense = self.to_dense(n);
        Column::from_dense(rows_keep.iter().map(|&i| dense[i]).collect())
    }
}

/// Immutable design matrix plus response.
#[derive(Clone, Debug)]
pub struct Dataset {
    n: usize,
    columns: Vec<Column>,
    y: Vec<f64>,
    col_mean: Vec<f64>,
    col_sd: Vec<f64>,
    free: Vec<bool>,
    names: Vec<String>,
}

impl Dataset {
    /// Validates and builds a dataset. `free` lists the unpenalized columns.
    pub fn new(
        columns: Vec<Column>,
        y: Vec<f64>,
        free: &[usize],
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        let p = columns.len();
        if n == 0 {
            return Err(Error::Parse("dataset has no observations".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("response at row {i}")));
        }
        let names = match names {
            Some(names) if names.len() != p => {
                return Err(Error::LengthMismatch {
                    expected: p,
                    got: names.len(),
                })
            }
            Some(names) => names,
            None => (0..p).map(|j| format!("x{}", j + 1)).collect(),
        };
        let mut is_free = vec![false; p];
        for &j in free {
            if j >= p {
                return Err(Error::IndexOutOfRange(format!(
                    "free column {j} with p = {p}"
                )));
            }
            is_free[j] = true;
        }

        let mut col_mean = Vec::with_capacity(p);
        let mut col_sd = Vec::with_capacity(p);
        for (j, col) in columns.iter().enumerate() {
            match col {
                Column::Dense(v) if v.len() != n => {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: v.len(),
                    })
                }
                Column::Sparse { rows, vals } => {
                    if rows.len() != vals.len() {
                        return Err(Error::Parse(format!("column {j}: ragged sparse storage")));
                    }
                    if rows.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Parse(format!(
                            "column {j}: sparse rows not strictly increasing"
                        )));
                    }
                    if let Some(&r) = rows.last() {
                        if r >= n {
                            return Err(Error::IndexOutOfRange(format!(
                                "column {j}: row {r} with n = {n}"
                            )));
                        }
                    }
                }
                _ => {}
            }
            let dense = col.to_dense(n);
            if dense.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("column {j}")));
            }
            let (m, sd) = mean_sd(&dense);
            if !is_free[j] && sd <= 0.0 {
                return Err(Error::ConstantColumn {
                    index: j,
                    name: names[j].clone(),
                });
            }
            col_mean.push(m);
            col_sd.push(sd);
        }

        Ok(Self {
            n,
            columns,
            y,
            col_mean,
            col_sd,
            free: is_free,
            names,
        })
    }

    /// Builds a dataset from dense columns, choosing storage per column.
    pub fn from_dense_columns(columns: Vec<Vec<f64>>, y: Vec<f64>, free: &[usize]) -> Result<Self> {
        Self::new(
            columns.into_iter().map(Column::from_dense).collect(),
            y,
            free,
            None,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn col_mean(&self) -> &[f64] {
        &self.col_mean
    }

    pub fn col_sd(&self) -> &[f64] {
        &self.col_sd
    }

    pub fn is_free(&self, j: usize) -> bool {
        self.free[j]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.free[j]).collect()
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Checks the response against the family's support.
    pub fn check_family(&self, family: Family) -> Result<()> {
        if family == Family::Binomial {
            if let Some((row, &value)) = self
                .y
                .iter()
                .enumerate()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(Error::ResponseRange { row, value });
            }
        }
        Ok(())
    }

    /// `X beta` without intercept.
    pub fn x_times(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (col, &b) in self.columns.iter().zip(beta) {
            if b != 0.0 {
                col.axpy(b, &mut out);
            }
        }
        out
    }

    /// Linear predictor `alpha + X beta`.
    pub fn linear_predictor(&self, alpha: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = self.x_times(beta);
        for e in &mut eta {
            *e += alpha;
        }
        eta
    }

    /// Restricts to the given rows, keeping column order and the free set.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| c.select_rows(rows, self.n))
            .collect();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        Dataset::new(columns, y, &self.free_indices(), Some(self.names.clone()))
    }

    /// Same dataset with a different response (used by resampling checks).
    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        Dataset::new(
            self.columns.clone(),
            y,
            &self.free_indices(),
            Some(self.names.clone()),
        )
    }
}

/// Two-pass mean and population (divisor n) standard deviation.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (m, (ss / n).sqrt())
}

/// Per-column multipliers on `|beta_j|` inside the penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyScales(pub Vec<f64>);

impl PenaltyScales {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `s_j = sd(x_j)` when standardizing, 1 otherwise, and 0 for free columns.
pub fn penalty_scales(d: &Dataset, standardize: bool) -> PenaltyScales {
    PenaltyScales(
        (0..d.p())
            .map(|j| {
                if d.is_free(j) {
                    0.0
                } else if standardize {
                    d.col_sd()[j]
                } else {
                    1.0
                }
            })
            .collect(),
    )
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Resolves free-column specifiers (names, or 0-based covariate indices).
pub fn resolve_columns(names: &[String], specs: &[String]) -> Result<Vec<usize>> {
    specs
        .iter()
        .map(|s| {
            let s = s.trim();
            if let Some(j) = names.iter().position(|n| n == s) {
                Ok(j)
            } else if let Ok(j) = s.parse::<usize>() {
                if j < names.len() {
                    Ok(j)
                } else {
                    Err(Error::IndexOutOfRange(format!("column index {j}")))
                }
            } else {
                Err(Error::Config(format!("unknown column '{s}'")))
            }
        })
        .collect()
}

/// Reads a comma-separated file with a header row. The response column is
/// extracted and every other column becomes a covariate.
pub fn load_csv(
    path: impl AsRef<Path>,
    response: &str,
    family: Family,
    free: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let yi = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingResponse(response.to_string()))?;

    let width = headers.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); width];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "row {} has {} fields, header has {width}",
                row + 1,
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: row + 1,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            cols[c].push(v);
        }
    }

    let y = cols.remove(yi);
    let mut names = headers;
    names.remove(yi);
    let free_idx = resolve_columns(&names, free)?;
    let d = Dataset::new(
        cols.into_iter().map(Column::from_dense).collect(),
        y,
        &free_idx,
        Some(names),
    )?;
    d.check_family(family)?;
    Ok(d)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a whitespace-separated `row col value` triplet file (optional first
/// line `base=0` or `base=1`) and a one-value-per-line response file.
pub fn load_triplets(
    path: impl AsRef<Path>,
    n: usize,
    p: usize,
    y_path: impl AsRef<Path>,
    family: Family,
    free: &[usize],
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut base = 0usize;
    let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(b) = line.strip_prefix("base=") {
            if lineno != 0 {
                return Err(Error::Parse("base= header must be the first line".into()));
            }
            base = match b.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Parse(format!("bad base header '{other}'"))),
            };
            continue;
        }
        let mut it = line.split_whitespace();
        let (r, c, v) = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(r), Some(c), Some(v), None) => (r, c, v),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected 'row col value'",
                    lineno + 1
                )))
            }
        };
        let parse_idx = |s: &str| -> Result<usize> {
            let raw: usize = s
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad index '{s}'", lineno + 1)))?;
            raw.checked_sub(base).ok_or_else(|| {
                Error::IndexOutOfRange(format!("line {}: index {raw} below base {base}", lineno + 1))
            })
        };
        let (r, c) = (parse_idx(r)?, parse_idx(c)?);
        let v: f64 = v.parse().map_err(|_| Error::NonNumeric {
            row: lineno + 1,
            column: "value".into(),
            value: v.to_string(),
        })?;
        if r >= n || c >= p {
            return Err(Error::IndexOutOfRange(format!(
                "line {}: ({r}, {c}) outside {n} x {p}",
                lineno + 1
            )));
        }
        entries[c].push((r, v));
    }

    let y_path = y_path.as_ref();
    let ytext = fs::read_to_string(y_path).map_err(|e| io_err(y_path, e))?;
    let y = ytext
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<f64>().map_err(|_| Error::NonNumeric {
                row: i + 1,
                column: "y".into(),
                value: l.to_string(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: y.len(),
        });
    }

    let mut columns = Vec::with_capacity(p);
    for (c, mut col) in entries.into_iter().enumerate() {
        col.sort_by_key(|e| e.0);
        let mut seen = HashSet::new();
        for &(r, _) in &col {
            if !seen.insert(r) {
                return Err(Error::DuplicateEntry { row: r, col: c });
            }
        }
        let (rows, vals): (Vec<usize>, Vec<f64>) = col.into_iter().filter(|e| e.1 != 0.0).unzip();
        columns.push(Column::Sparse { rows, vals });
    }
    let d = Dataset::new(columns, y, free, None)?;
    d.check_family(family)?;
    Ok(d)
}

/// Writes the nonzero cells in 0-based triplet form plus the response file.
pub fn write_triplets(d: &Dataset, path: impl AsRef<Path>, y_path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("base=0\n");
    for (j, col) in d.columns().iter().enumerate() {
        for (i, v) in col.entries() {
            if v != 0.0 {
                out.push_str(&format!("{i} {j} {v:?}\n"));
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;
    let y_path = y_path.as_ref();
    let mut f = fs::File::create(y_path).map_err(|e| io_err(y_path, e))?;
    for v in d.y() {
        writeln!(f, "{v:?}").map_err(|e| io_err(y_path, e))?;
    }
    Ok(())
}

/// Writes a dataset as CSV with the response in the first column.
pub fn write_csv(d: &Dataset, response: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec![response.to_string()];
    header.extend(d.names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let dense: Vec<Vec<f64>> = d.columns().iter().map(|c| c.to_dense(d.n())).collect();
    for i in 0..d.n() {
        let mut rec = vec![format!("{:?}", d.y()[i])];
        rec.extend(dense.iter().map(|c| format!("{:?}", c[i])));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

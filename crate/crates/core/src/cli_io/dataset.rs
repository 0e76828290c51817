//! Two-phase analysis datasets in CSV form.
//!
//! One row per subject with named columns:
//!
//! | column | content |
//! |---|---|
//! | `id` | subject identifier (any string) |
//! | `time_star`, `delta_star` | error-prone time and event indicator |
//! | `x_star` or `x_star1..` | error-prone covariates |
//! | `z` or `z1..` | precisely measured covariates (may be absent) |
//! | `randomized` | validation indicator (`TRUE`/`FALSE` or `1`/`0`) |
//! | `pi` | selection probability (optional; `m/n` if absent) |
//! | `time`, `delta`, `x` or `x1..` | validated values |
//! | `total_y_err` | optional `time_star - time` |
//!
//! Validated columns may be empty or `NA` exactly where `randomized` is
//! false. Any other missing or malformed cell is a parse error that names
//! its line and column.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::CliError;
use crate::data::CohortData;
use crate::raking::TwoPhaseDesign;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDataset {
    pub ids: Vec<String>,
    /// Names of the error-prone covariate columns, in order.
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    pub cohort: CohortData,
    pub design: TwoPhaseDesign,
    /// Whether `pi` was read from the file (otherwise inferred as `m/n`).
    pub pi_given: bool,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na")
}

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize, CliError> {
        self.find(name)
            .ok_or_else(|| CliError::Schema(format!("required column '{name}' is missing")))
    }

    /// `base` alone, or `base1`, `base2`, ... in numeric order.
    fn family(&self, base: &str) -> Result<Vec<(String, usize)>, CliError> {
        if let Some(i) = self.find(base) {
            if self.find(&format!("{base}1")).is_some() {
                return Err(CliError::Schema(format!("both '{base}' and '{base}1' present")));
            }
            return Ok(vec![(base.to_string(), i)]);
        }
        let mut out = Vec::new();
        for k in 1.. {
            match self.find(&format!("{base}{k}")) {
                Some(i) => out.push((format!("{base}{k}"), i)),
                None => break,
            }
        }
        Ok(out)
    }
}

struct Cell<'a> {
    line: u64,
    column: &'a str,
    text: &'a str,
}

impl Cell<'_> {
    fn error(&self, message: impl Into<String>) -> CliError {
        CliError::Parse {
            line: self.line,
            column: self.column.to_string(),
            message: message.into(),
        }
    }

    fn number(&self) -> Result<f64, CliError> {
        if is_missing(self.text) {
            return Err(self.error("missing value"));
        }
        let v: f64 = self
            .text
            .trim()
            .parse()
            .map_err(|_| self.error(format!("'{}' is not a number", self.text)))?;
        if !v.is_finite() {
            return Err(self.error("value is not finite"));
        }
        Ok(v)
    }

    fn flag(&self) -> Result<bool, CliError> {
        match self.text.trim() {
            "1" | "TRUE" | "true" | "True" | "T" => Ok(true),
            "0" | "FALSE" | "false" | "False" | "F" => Ok(false),
            t if is_missing(t) => Err(self.error("missing value")),
            t => Err(self.error(format!("'{t}' is not 0/1 or TRUE/FALSE"))),
        }
    }
}

/// Reads a dataset from a CSV file.
pub fn load_dataset(path: &Path) -> Result<AnalysisDataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file)
}

/// Reads a dataset from any CSV source.
pub fn read_dataset<R: Read>(source: R) -> Result<AnalysisDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Schema(format!("cannot read header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let cols = Columns { headers };
    let id_col = cols.find("id");
    let ts_col = cols.require("time_star")?;
    let ds_col = cols.require("delta_star")?;
    let r_col = cols.require("randomized")?;
    let t_col = cols.require("time")?;
    let d_col = cols.require("delta")?;
    let pi_col = cols.find("pi");
    let err_col = cols.find("total_y_err");
    let xs_cols = cols.family("x_star")?;
    if xs_cols.is_empty() {
        return Err(CliError::Schema("no 'x_star' column".into()));
    }
    let x_cols = cols.family("x")?;
    if x_cols.len() != xs_cols.len() {
        return Err(CliError::Schema(format!(
            "{} error-prone covariate columns but {} validated ones",
            xs_cols.len(),
            x_cols.len()
        )));
    }
    let z_cols = cols.family("z")?;

    let mut ids = Vec::new();
    let (mut time_star, mut event_star, mut known) = (Vec::new(), Vec::new(), Vec::new());
    let (mut time, mut event, mut pi) = (Vec::new(), Vec::new(), Vec::new());
    let (mut xs, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| CliError::Parse {
            line,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |i: usize| Cell {
            line,
            column: &cols.headers[i],
            text: record.get(i).unwrap_or(""),
        };
        ids.push(match id_col {
            Some(i) => record.get(i).unwrap_or("").to_string(),
            None => (row + 1).to_string(),
        });
        let ts = cell(ts_col).number()?;
        if ts < 0.0 {
            return Err(cell(ts_col).error("negative time"));
        }
        time_star.push(ts);
        event_star.push(cell(ds_col).flag()?);
        for (_, i) in &xs_cols {
            xs.push(cell(*i).number()?);
        }
        for (_, i) in &z_cols {
            z.push(cell(*i).number()?);
        }
        let validated = cell(r_col).flag()?;
        known.push(validated);
        if let Some(i) = pi_col {
            let p = cell(i).number()?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(cell(i).error(format!("selection probability {p} outside (0, 1]")));
            }
            pi.push(p);
        }
        if validated {
            let err = err_col.map(&cell).filter(|c| !is_missing(c.text));
            let t = if is_missing(cell(t_col).text) {
                match &err {
                    Some(c) => ts - c.number()?,
                    None => return Err(cell(t_col).error("missing value for a validated subject")),
                }
            } else {
                let t = cell(t_col).number()?;
                if let Some(c) = &err {
                    let w = c.number()?;
                    if (ts - t - w).abs() > 1e-6 * ts.abs().max(1.0) {
                        return Err(c.error("total_y_err differs from time_star - time"));
                    }
                }
                t
            };
            if t < 0.0 {
                return Err(cell(t_col).error("negative time"));
            }
            time.push(t);
            event.push(cell(d_col).flag()?);
            for (_, i) in &x_cols {
                x.push(cell(*i).number()?);
            }
        } else {
            time.push(f64::NAN);
            event.push(false);
            x.extend(std::iter::repeat_n(f64::NAN, x_cols.len()));
        }
    }
    let n = time_star.len();
    if n == 0 {
        return Err(CliError::EmptyDataset);
    }
    let m = known.iter().filter(|&&k| k).count();
    if m == 0 {
        return Err(CliError::Schema("no randomized (validated) rows".into()));
    }
    let pi_given = pi_col.is_some();
    if !pi_given {
        pi = vec![m as f64 / n as f64; n];
    }
    let p = xs_cols.len();
    let q = z_cols.len();
    let cohort = CohortData::new(
        time_star,
        event_star,
        DMatrix::from_row_slice(n, p, &xs),
        DMatrix::from_row_slice(n, q, &z),
        time,
        event,
        DMatrix::from_row_slice(n, p, &x),
        known.clone(),
    )
    .map_err(|e| CliError::Schema(e.to_string()))?;
    let design = TwoPhaseDesign::new(known, pi).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(AnalysisDataset {
        ids,
        x_names: x_cols.into_iter().map(|(n, _)| n).collect(),
        z_names: z_cols.into_iter().map(|(n, _)| n).collect(),
        cohort,
        design,
        pi_given,
    })
}

fn numbered(base: &str, k: usize, width: usize) -> String {
    if width == 1 {
        base.to_string()
    } else {
        format!("{base}{}", k + 1)
    }
}

/// Writes a cohort and design in the dataset layout. Validated columns are
/// `NA` for subjects outside the validation subset.
pub fn write_dataset<W: Write>(sink: W, cohort: &CohortData, design: &TwoPhaseDesign) -> Result<(), CliError> {
    let (p, q) = (cohort.p(), cohort.q());
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = vec!["id".into(), "time_star".into(), "delta_star".into()];
    header.extend((0..p).map(|k| numbered("x_star", k, p)));
    header.extend((0..q).map(|k| numbered("z", k, q)));
    header.extend(["randomized", "pi", "time", "delta"].map(String::from));
    header.extend((0..p).map(|k| numbered("x", k, p)));
    header.push("total_y_err".into());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for i in 0..cohort.len() {
        let sel = design.selected[i];
        let mut row: Vec<String> = vec![
            (i + 1).to_string(),
            cohort.time_star[i].to_string(),
            u8::from(cohort.event_star[i]).to_string(),
        ];
        row.extend(cohort.x_star.row(i).iter().map(f64::to_string));
        row.extend(cohort.z.row(i).iter().map(f64::to_string));
        row.push(if sel { "TRUE" } else { "FALSE" }.into());
        row.push(design.pi[i].to_string());
        if sel {
            row.push(cohort.time[i].to_string());
            row.push(u8::from(cohort.event[i]).to_string());
            row.extend(cohort.x.row(i).iter().map(f64::to_string));
            row.push(cohort.omega(i).to_string());
        } else {
            row.extend(std::iter::repeat_n("NA".to_string(), p + 3));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

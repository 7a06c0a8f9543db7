//! Tabular data: CSV ingestion with per-column type inference and listwise
//! deletion of incomplete rows.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ColumnKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Missing entries are NaN.
    Numeric(Vec<f64>),
    Factor(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Factor(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_nan(),
            Column::Factor(v) => v[row].is_none(),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Factor(_) => ColumnKind::Factor,
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Factor(v) => Column::Factor(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// String rendering of each entry, used for grouping keys.
    pub fn as_strings(&self) -> Vec<String> {
        match self {
            Column::Numeric(v) => v.iter().map(|x| format!("{x}")).collect(),
            Column::Factor(v) => v.iter().map(|s| s.clone().unwrap_or_default()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn push(&mut self, name: &str, col: Column) -> Result<()> {
        if !self.columns.is_empty() && col.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                what: format!("column '{name}'"),
                expected: self.n_rows(),
                got: col.len(),
            });
        }
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.columns[i] = col;
        } else {
            self.names.push(name.to_string());
            self.columns.push(col);
        }
        Ok(())
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.push(name, Column::Numeric(values))?;
        Ok(self)
    }

    pub fn with_factor<S: AsRef<str>>(mut self, name: &str, values: &[S]) -> Result<Self> {
        let col = values
            .iter()
            .map(|s| (!is_missing_token(s.as_ref())).then(|| s.as_ref().to_string()))
            .collect();
        self.push(name, Column::Factor(col))?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Factor(_) => Err(Error::InvalidSpec(format!(
                "column '{name}' must be numeric"
            ))),
        }
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        overrides: &BTreeMap<String, ColumnKind>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, overrides)
    }

    /// Read a CSV with a header row. A column is numeric iff every non-missing
    /// entry parses as a decimal number, unless overridden.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        overrides: &BTreeMap<String, ColumnKind>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate().take(headers.len()) {
                raw[j].push(field.to_string());
            }
        }
        let mut ds = Dataset::new();
        for (name, cells) in headers.iter().zip(raw) {
            let parsed: Vec<Option<f64>> = cells
                .iter()
                .map(|c| {
                    if is_missing_token(c) {
                        Some(f64::NAN)
                    } else {
                        c.trim().parse::<f64>().ok()
                    }
                })
                .collect();
            let all_numeric = parsed.iter().all(Option::is_some);
            let kind = overrides.get(name).copied().unwrap_or(if all_numeric {
                ColumnKind::Numeric
            } else {
                ColumnKind::Factor
            });
            match kind {
                ColumnKind::Numeric => {
                    if !all_numeric {
                        return Err(Error::InvalidSpec(format!(
                            "column '{name}' is declared numeric but has non-numeric entries"
                        )));
                    }
                    ds.push(name, Column::Numeric(parsed.into_iter().flatten().collect()))?;
                }
                ColumnKind::Factor => ds = ds.with_factor(name, &cells)?,
            }
        }
        Ok(ds)
    }

    /// Keep only rows complete in every listed column. Returns the reduced
    /// dataset and the number of dropped rows.
    pub fn drop_incomplete(&self, columns: &[String]) -> Result<(Dataset, usize)> {
        if self.n_rows() == 0 {
            return Err(Error::EmptyData);
        }
        let cols: Vec<&Column> = columns
            .iter()
            .map(|c| self.column(c))
            .collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&i| cols.iter().all(|c| !c.is_missing(i)))
            .collect();
        let dropped = self.n_rows() - keep.len();
        if keep.is_empty() {
            return Err(Error::EmptyData);
        }
        let out = Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(&keep)).collect(),
        };
        Ok((out, dropped))
    }

    /// Reorder rows; `order[i]` is the source row placed at position `i`.
    pub fn permute_rows(&self, order: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(order)).collect(),
        }
    }
}

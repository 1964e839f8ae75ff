//! Column-oriented numeric data with masked cells.
//!
//! A masked cell (missing value) is stored as NaN and written to CSV as an
//! empty field. [`Dataset::value`] refuses to hand out a masked cell, so any
//! code path that would read an unobserved value fails loudly.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn from_columns(cols: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = cols.first().map_or(0, |(_, c)| c.len());
        let mut names = Vec::with_capacity(cols.len());
        let mut data = Vec::with_capacity(cols.len());
        for (name, c) in cols {
            if c.len() != n {
                return Err(Error::InsufficientData(format!(
                    "column {name} has {} rows, expected {n}",
                    c.len()
                )));
            }
            if names.contains(&name) {
                return Err(Error::InsufficientData(format!("duplicate column {name}")));
            }
            names.push(name);
            data.push(c);
        }
        Ok(Self { names, cols: data })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Column values, NaN where masked.
    pub fn raw_column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.cols[self.position(name)?])
    }

    /// A single observed cell; masked cells are an error.
    pub fn value(&self, name: &str, row: usize) -> Result<f64> {
        let v = self.raw_column(name)?[row];
        if v.is_nan() {
            Err(Error::MaskedCell {
                column: name.to_string(),
                row,
            })
        } else {
            Ok(v)
        }
    }

    pub fn is_masked(&self, name: &str, row: usize) -> Result<bool> {
        Ok(self.raw_column(name)?[row].is_nan())
    }

    pub fn masked_count(&self, name: &str) -> Result<usize> {
        Ok(self.raw_column(name)?.iter().filter(|v| v.is_nan()).count())
    }

    /// Rows in the given order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            cols: self
                .cols
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        self.select_rows(&rows)
    }

    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n_rows() && !self.cols.is_empty() {
            return Err(Error::InsufficientData(format!("column {name} has the wrong length")));
        }
        match self.position(name) {
            Ok(i) => self.cols[i] = values,
            Err(_) => {
                self.names.push(name.to_string());
                self.cols.push(values);
            }
        }
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names).map_err(csv_err)?;
        let mut record = Vec::with_capacity(self.names.len());
        for i in 0..self.n_rows() {
            record.clear();
            for c in &self.cols {
                let v = c[i];
                record.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            out.write_record(&record).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Reads a header row and numeric cells; empty cells become masked.
    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(r);
        let names: Vec<String> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut cols = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            for (j, field) in rec.iter().enumerate() {
                let field = field.trim();
                let v = if field.is_empty() || field.eq_ignore_ascii_case("na") {
                    f64::NAN
                } else {
                    field.parse::<f64>().map_err(|_| {
                        Error::Parse(format!(
                            "row {}, column {}: {field:?} is not a number",
                            line + 2,
                            names[j]
                        ))
                    })?
                };
                cols[j].push(v);
            }
        }
        Dataset::from_columns(names.into_iter().zip(cols).collect())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_columns(vec![
            ("W".into(), vec![0.5, -1.25]),
            ("Y0_obs".into(), vec![f64::NAN, 3.0]),
            ("R_Y0".into(), vec![0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn masked_cells_are_guarded() {
        let d = small();
        assert!(matches!(d.value("Y0_obs", 0), Err(Error::MaskedCell { row: 0, .. })));
        assert_eq!(d.value("Y0_obs", 1).unwrap(), 3.0);
        assert!(matches!(d.value("Q", 0), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn csv_round_trip() {
        let d = small();
        let text = d.to_csv_string().unwrap();
        assert_eq!(text, "W,Y0_obs,R_Y0\n0.5,,0\n-1.25,3,1\n");
        let back = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.to_csv_string().unwrap(), text);
        assert!(Dataset::read_csv("a\nx\n".as_bytes()).is_err());
    }

    #[test]
    fn row_selection() {
        let d = small().select_rows(&[1, 1, 0]);
        assert_eq!(d.raw_column("W").unwrap(), &[-1.25, -1.25, 0.5]);
        assert_eq!(small().filter_rows(|i| i == 0).n_rows(), 1);
    }
}

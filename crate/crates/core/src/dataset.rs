use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Design matrix (row-major) with its response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dataset needs at least one feature"));
        }
        if x.len() != y.len() * dim {
            return Err(Error::input(format!(
                "design has {} entries, expected {} rows x {} features",
                x.len(),
                y.len(),
                dim
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("dataset entries must be finite"));
        }
        Ok(Self { x, y, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("ragged feature rows"));
        }
        Self::new(rows.concat(), y, dim)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.dim)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same features, new responses.
    pub fn with_targets(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::input("target length does not match row count"));
        }
        Self::new(self.x.clone(), y, self.dim)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            x,
            y,
            dim: self.dim,
        }
    }

    /// Row-wise concatenation (`self` first).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim != other.dim {
            return Err(Error::input(
                "cannot concatenate datasets of different dimension",
            ));
        }
        let mut x = self.x.clone();
        x.extend_from_slice(&other.x);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Dataset {
            x,
            y,
            dim: self.dim,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.rows().zip(&self.y) {
            let rec: Vec<String> = row
                .iter()
                .chain(std::iter::once(y))
                .map(f64::to_string)
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let ncol = header.len();
        if ncol < 2 || &header[ncol - 1] != "y" {
            return Err(Error::input("CSV header must be x1,...,xd,y"));
        }
        for (j, name) in header.iter().take(ncol - 1).enumerate() {
            if name != format!("x{}", j + 1) {
                return Err(Error::input(format!("unexpected column name {name:?}")));
            }
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::input(format!("not a number: {field:?}")))?;
                if j + 1 == ncol {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        Dataset::new(x, y, ncol - 1)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }
}

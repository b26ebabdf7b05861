//! Observed data: a feature matrix, observed responses and, for simulated
//! data, the clean responses and the label-flip record.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    x: Array2<T>,
    z: Array1<T>,
    y_clean: Option<Array1<T>>,
    flip_mask: Option<Vec<bool>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from an `n × d` design and `n` responses.
    pub fn new(x: Array2<T>, z: Array1<T>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::shape(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if z.len() != n {
            return Err(Error::shape(format!("{n} rows but {} responses", z.len())));
        }
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::invalid_input(format!("non-finite feature at ({i}, {j})")));
            }
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid_input(format!("non-finite response at row {i}")));
        }
        Ok(Self {
            x,
            z,
            y_clean: None,
            flip_mask: None,
        })
    }

    pub fn with_clean(mut self, y_clean: Array1<T>) -> Result<Self> {
        if y_clean.len() != self.n() {
            return Err(Error::shape("clean responses length differs from n"));
        }
        self.y_clean = Some(y_clean);
        Ok(self)
    }

    pub fn with_flip_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n() {
            return Err(Error::shape("flip mask length differs from n"));
        }
        self.flip_mask = Some(mask);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn z(&self) -> ArrayView1<'_, T> {
        self.z.view()
    }

    pub fn y_clean(&self) -> Option<ArrayView1<'_, T>> {
        self.y_clean.as_ref().map(|y| y.view())
    }

    pub fn flip_mask(&self) -> Option<&[bool]> {
        self.flip_mask.as_deref()
    }

    pub fn is_binary(&self) -> bool {
        self.z.iter().all(|&v| v == T::zero() || v == T::one())
    }

    /// Replaces features and responses, keeping the simulation record.
    pub(crate) fn replace_observed(&self, x: Array2<T>, z: Array1<T>) -> Self {
        debug_assert_eq!(x.dim(), self.x.dim());
        Self {
            x,
            z,
            y_clean: self.y_clean.clone(),
            flip_mask: self.flip_mask.clone(),
        }
    }

    pub(crate) fn replace_responses(&self, z: Array1<T>, flip_mask: Option<Vec<bool>>) -> Self {
        Self {
            x: self.x.clone(),
            z,
            y_clean: self.y_clean.clone(),
            flip_mask,
        }
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            z: self.z.select(Axis(0), rows),
            y_clean: self.y_clean.as_ref().map(|y| y.select(Axis(0), rows)),
            flip_mask: self
                .flip_mask
                .as_ref()
                .map(|m| rows.iter().map(|&i| m[i]).collect()),
        }
    }

    /// Writes `x1,...,xd,z[,y_clean,flipped]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        header.push("z".into());
        if self.y_clean.is_some() {
            header.push("y_clean".into());
        }
        if self.flip_mask.is_some() {
            header.push("flipped".into());
        }
        w.write_record(&header).map_err(csv_io)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|v| fmt_full(*v)));
            record.push(fmt_full(self.z[i]));
            if let Some(y) = &self.y_clean {
                record.push(fmt_full(y[i]));
            }
            if let Some(m) = &self.flip_mask {
                record.push(if m[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r
            .headers()
            .map_err(|e| Error::Data {
                row: 1,
                column: 0,
                message: e.to_string(),
            })?
            .clone();
        let layout = CsvLayout::from_header(&header)?;
        let mut xs: Vec<T> = Vec::new();
        let mut zs = Vec::new();
        let mut ys = Vec::new();
        let mut flips = Vec::new();
        for (k, rec) in r.records().enumerate() {
            // header is row 1
            let row = k + 2;
            let rec = rec.map_err(|e| Error::Data {
                row,
                column: 0,
                message: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(Error::Data {
                    row,
                    column: 0,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let num = |col: usize| -> Result<T> {
                let field = rec[col].trim();
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(T::lit)
                    .ok_or_else(|| Error::Data {
                        row,
                        column: col + 1,
                        message: format!("`{field}` is not a finite number"),
                    })
            };
            for j in 0..layout.d {
                xs.push(num(j)?);
            }
            zs.push(num(layout.d)?);
            if let Some(c) = layout.y_clean {
                ys.push(num(c)?);
            }
            if let Some(c) = layout.flipped {
                let flag = match rec[c].trim() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => {
                        return Err(Error::Data {
                            row,
                            column: c + 1,
                            message: format!("`{other}` is not a flip flag (0/1)"),
                        })
                    }
                };
                flips.push(flag);
            }
        }
        let n = zs.len();
        if n == 0 {
            return Err(Error::Data {
                row: 2,
                column: 0,
                message: "no data rows".into(),
            });
        }
        let x = Array2::from_shape_vec((n, layout.d), xs).map_err(|e| Error::shape(e.to_string()))?;
        let mut data = Dataset::new(x, Array1::from(zs))?;
        if layout.y_clean.is_some() {
            data = data.with_clean(Array1::from(ys))?;
        }
        if layout.flipped.is_some() {
            data = data.with_flip_mask(flips)?;
        }
        Ok(data)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

struct CsvLayout {
    d: usize,
    y_clean: Option<usize>,
    flipped: Option<usize>,
}

impl CsvLayout {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let bad = |column: usize, message: String| Error::Data {
            row: 1,
            column,
            message,
        };
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        let d = names.iter().take_while(|h| h.starts_with('x')).count();
        if d == 0 {
            return Err(bad(1, "header must start with feature columns x1..xd".into()));
        }
        for (j, name) in names.iter().take(d).enumerate() {
            if *name != format!("x{}", j + 1) {
                return Err(bad(j + 1, format!("expected `x{}`, found `{name}`", j + 1)));
            }
        }
        if names.get(d) != Some(&"z") {
            return Err(bad(d + 1, "expected response column `z` after features".into()));
        }
        let mut layout = CsvLayout {
            d,
            y_clean: None,
            flipped: None,
        };
        for (c, name) in names.iter().enumerate().skip(d + 1) {
            match *name {
                "y_clean" if layout.y_clean.is_none() && layout.flipped.is_none() => layout.y_clean = Some(c),
                "flipped" if layout.flipped.is_none() => layout.flipped = Some(c),
                other => return Err(bad(c + 1, format!("unexpected column `{other}`"))),
            }
        }
        Ok(layout)
    }
}

/// Round-trip text form with 17 significant digits.
pub fn fmt_full<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

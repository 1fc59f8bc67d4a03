//! Observations `(X_i, W_i)` stored row-major.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// `n` iid observations. `x` is `n x d_x` and always finite; `w` is `n x d_w`
/// and may hold `+inf` / `-inf` for censored endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    w: Vec<f64>,
    n: usize,
    d_x: usize,
    d_w: usize,
}

impl Sample {
    pub fn new(x: Vec<f64>, w: Vec<f64>, d_x: usize, d_w: usize) -> Result<Self> {
        if d_x == 0 {
            return Err(Error::Dimension {
                what: "sample d_x",
                expected: 1,
                got: 0,
            });
        }
        if x.len() % d_x != 0 {
            return Err(Error::Dimension {
                what: "sample x buffer",
                expected: (x.len() / d_x + 1) * d_x,
                got: x.len(),
            });
        }
        let n = x.len() / d_x;
        if w.len() != n * d_w {
            return Err(Error::Dimension {
                what: "sample w buffer",
                expected: n * d_w,
                got: w.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                row: pos / d_x,
                reason: "x entries must be finite".into(),
            });
        }
        if let Some(pos) = w.iter().position(|v| v.is_nan()) {
            return Err(Error::Domain {
                row: pos / d_w.max(1),
                reason: "w entries must not be NaN".into(),
            });
        }
        Ok(Self { x, w, n, d_x, d_w })
    }

    /// Builds a sample from per-row vectors.
    pub fn from_rows(x_rows: &[Vec<f64>], w_rows: &[Vec<f64>]) -> Result<Self> {
        if x_rows.len() != w_rows.len() {
            return Err(Error::Dimension {
                what: "sample rows",
                expected: x_rows.len(),
                got: w_rows.len(),
            });
        }
        let d_x = x_rows.first().map_or(1, Vec::len);
        let d_w = w_rows.first().map_or(0, Vec::len);
        let mut x = Vec::with_capacity(x_rows.len() * d_x);
        let mut w = Vec::with_capacity(w_rows.len() * d_w);
        for (xr, wr) in x_rows.iter().zip(w_rows) {
            if xr.len() != d_x {
                return Err(Error::Dimension {
                    what: "x row",
                    expected: d_x,
                    got: xr.len(),
                });
            }
            if wr.len() != d_w {
                return Err(Error::Dimension {
                    what: "w row",
                    expected: d_w,
                    got: wr.len(),
                });
            }
            x.extend_from_slice(xr);
            w.extend_from_slice(wr);
        }
        Self::new(x, w, d_x, d_w)
    }

    pub fn empty(d_x: usize, d_w: usize) -> Self {
        Self {
            x: Vec::new(),
            w: Vec::new(),
            n: 0,
            d_x,
            d_w,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_w(&self) -> usize {
        self.d_w
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d_x..(i + 1) * self.d_x]
    }

    #[inline]
    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.d_w..(i + 1) * self.d_w]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Replaces the conditioning variables, keeping `w` untouched.
    pub fn with_x(&self, x: Vec<f64>) -> Result<Self> {
        if x.len() != self.x.len() {
            return Err(Error::Dimension {
                what: "replacement x buffer",
                expected: self.x.len(),
                got: x.len(),
            });
        }
        Self::new(x, self.w.clone(), self.d_x, self.d_w)
    }

    /// Reads a CSV with header `x1..x{d_x}, w1..w{d_w}`. The tokens `inf` and
    /// `-inf` encode infinite endpoints.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let (d_x, d_w) = parse_header(&headers)?;
        let mut x = Vec::new();
        let mut w = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d_x + d_w {
                return Err(Error::Dimension {
                    what: "csv record",
                    expected: d_x + d_w,
                    got: rec.len(),
                });
            }
            for (k, field) in rec.iter().enumerate() {
                let v = parse_value(field).ok_or_else(|| Error::Domain {
                    row,
                    reason: format!("cannot parse `{field}` in column {}", &headers[k]),
                })?;
                if k < d_x {
                    x.push(v);
                } else {
                    w.push(v);
                }
            }
        }
        if x.is_empty() {
            return Ok(Self::empty(d_x, d_w));
        }
        Self::new(x, w, d_x, d_w)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.d_x)
            .map(|k| format!("x{k}"))
            .chain((1..=self.d_w).map(|k| format!("w{k}")))
            .collect();
        wtr.write_record(&header)?;
        for i in 0..self.n {
            let rec: Vec<String> = self
                .x_row(i)
                .iter()
                .chain(self.w_row(i))
                .map(|v| format_value(*v))
                .collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_header(headers: &csv::StringRecord) -> Result<(usize, usize)> {
    let mut d_x = 0;
    let mut d_w = 0;
    for (k, h) in headers.iter().enumerate() {
        let expected_x = format!("x{}", d_x + 1);
        let expected_w = format!("w{}", d_w + 1);
        if d_w == 0 && h == expected_x {
            d_x += 1;
        } else if h == expected_w {
            d_w += 1;
        } else {
            return Err(Error::config(
                format!("header[{k}]"),
                format!("expected `{expected_x}` or `{expected_w}`, found `{h}`"),
            ));
        }
    }
    if d_x == 0 {
        return Err(Error::config("header", "at least one x column is required"));
    }
    Ok((d_x, d_w))
}

fn parse_value(field: &str) -> Option<f64> {
    match field {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        s => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// Shortest round-trip formatting; infinities print as `inf` / `-inf`.
pub(crate) fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_x() {
        let err = Sample::new(vec![0.0, f64::INFINITY], vec![1.0, 2.0], 1, 1).unwrap_err();
        assert!(matches!(err, Error::Domain { row: 1, .. }));
    }

    #[test]
    fn csv_round_trip_with_infinities() {
        let s = Sample::from_rows(
            &[vec![0.5], vec![-1.25]],
            &[vec![f64::NEG_INFINITY, f64::INFINITY], vec![0.1, 0.1]],
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,w1,w2\n"));
        assert!(text.contains("-inf,inf"));
        let back = Sample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_header_names_column() {
        let err = Sample::read_csv("x1,y1\n0,1\n".as_bytes()).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "header[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_token_rejected() {
        assert!(Sample::read_csv("x1,w1\n0,NaN\n".as_bytes()).is_err());
    }
}

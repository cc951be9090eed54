//! Uniformly sampled position/force recordings and their CSV form.
//!
//! Header is `t,q1,f` optionally followed by `q2` and/or `mode_id`; values are
//! SI and written with 17 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const JITTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub q1: Vec<f64>,
    pub f: Vec<f64>,
    /// Hidden environment position, known only for simulated traces.
    pub q2: Option<Vec<f64>>,
    /// Ground-truth mode index per sample.
    pub mode_id: Option<Vec<usize>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::arg("trace needs at least 2 samples"));
        }
        if self.q1.len() != n || self.f.len() != n {
            return Err(Error::arg("trace columns have different lengths"));
        }
        if self.q2.as_ref().is_some_and(|v| v.len() != n)
            || self.mode_id.as_ref().is_some_and(|v| v.len() != n)
        {
            return Err(Error::arg("optional trace columns have different lengths"));
        }
        let all = self.t.iter().chain(&self.q1).chain(&self.f).chain(self.q2.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("trace contains non-finite values"));
        }
        let dt = self.sample_period();
        if !(dt > 0.0) {
            return Err(Error::arg("trace time must be strictly increasing"));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            let step = w[1] - w[0];
            if step <= 0.0 {
                return Err(Error::arg(format!("time not strictly increasing at row {}", k + 1)));
            }
            if (step - dt).abs() > JITTER_TOL * dt.max(w[1].abs()) {
                return Err(Error::arg(format!(
                    "non-uniform sampling at row {}: step {step:e}, mean {dt:e}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Mean sample period.
    pub fn sample_period(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }

    /// Indices where the ground-truth mode changes.
    pub fn switch_indices(&self) -> Vec<usize> {
        match &self.mode_id {
            Some(ids) => (1..ids.len()).filter(|&k| ids[k] != ids[k - 1]).collect(),
            None => Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t", "q1", "f"];
        if self.q2.is_some() {
            header.push("q2");
        }
        if self.mode_id.is_some() {
            header.push("mode_id");
        }
        out.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.t[k]), fmt_f64(self.q1[k]), fmt_f64(self.f[k])];
            if let Some(q2) = &self.q2 {
                row.push(fmt_f64(q2[k]));
            }
            if let Some(ids) = &self.mode_id {
                row.push(ids[k].to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        for h in header.iter() {
            if !matches!(h, "t" | "q1" | "f" | "q2" | "mode_id") {
                return Err(Error::Config {
                    path: format!("csv header `{h}`"),
                    message: "unknown column".into(),
                });
            }
        }
        let (it, iq1, if_) = match (col("t"), col("q1"), col("f")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::Config {
                    path: "csv header".into(),
                    message: "expected columns t,q1,f".into(),
                })
            }
        };
        let (iq2, imode) = (col("q2"), col("mode_id"));
        let mut trace = Trace {
            t: Vec::new(),
            q1: Vec::new(),
            f: Vec::new(),
            q2: iq2.map(|_| Vec::new()),
            mode_id: imode.map(|_| Vec::new()),
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config {
                        path: format!("csv row {} column {}", row + 2, &header[i]),
                        message: "not a number".into(),
                    })
            };
            trace.t.push(num(it)?);
            trace.q1.push(num(iq1)?);
            trace.f.push(num(if_)?);
            if let (Some(i), Some(v)) = (iq2, trace.q2.as_mut()) {
                v.push(num(i)?);
            }
            if let (Some(i), Some(v)) = (imode, trace.mode_id.as_mut()) {
                let id = rec.get(i).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| Error::Config {
                    path: format!("csv row {} column mode_id", row + 2),
                    message: "not a mode index".into(),
                })?;
                v.push(id);
            }
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

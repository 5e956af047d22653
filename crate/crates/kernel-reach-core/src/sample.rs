//! Transition datasets and their CSV serialization.
//!
//! A sample holds `M` observed one-step transitions `(x_i, u_i, y_i)` drawn
//! from a system under a fixed policy, plus the provenance needed to
//! reproduce it (seed, system name, disturbance and policy names).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::prelude::*;

use crate::error::{CoreError, Result};

/// Format floats for text artifacts with 17 significant digits so values
/// round-trip exactly through parsing.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A dataset of observed one-step transitions.
#[derive(Clone, Debug)]
pub struct TransitionSample {
    x: Array2<f64>,
    u: Array2<f64>,
    y: Array2<f64>,
    /// Master seed the sample was generated from.
    pub seed: u64,
    /// Name of the system the transitions were observed on.
    pub system: String,
    /// Name of the disturbance model used during generation.
    pub disturbance: String,
    /// Name of the policy that produced the recorded inputs.
    pub policy: String,
}

impl TransitionSample {
    /// Assemble a sample from state, input, and successor matrices with one
    /// row per transition.
    pub fn new(
        x: Array2<f64>,
        u: Array2<f64>,
        y: Array2<f64>,
        seed: u64,
        system: impl Into<String>,
    ) -> Result<Self> {
        let m = x.nrows();
        if m == 0 {
            return Err(CoreError::Config(
                "a transition sample needs at least one row".into(),
            ));
        }
        if u.nrows() != m || y.nrows() != m {
            return Err(CoreError::Dimension(format!(
                "row counts disagree: x={}, u={}, y={}",
                m,
                u.nrows(),
                y.nrows()
            )));
        }
        if y.ncols() != x.ncols() {
            return Err(CoreError::Dimension(format!(
                "successor dimension {} differs from state dimension {}",
                y.ncols(),
                x.ncols()
            )));
        }
        if x.ncols() == 0 || u.ncols() == 0 {
            return Err(CoreError::Config(
                "state and input dimensions must be positive".into(),
            ));
        }
        for (name, a) in [("x", &x), ("u", &u), ("y", &y)] {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Numerical(format!(
                    "non-finite value in {name} block of transition sample"
                )));
            }
        }
        Ok(Self {
            x,
            u,
            y,
            seed,
            system: system.into(),
            disturbance: String::new(),
            policy: String::new(),
        })
    }

    /// Attach disturbance and policy names for provenance.
    pub fn with_metadata(mut self, disturbance: impl Into<String>, policy: impl Into<String>) -> Self {
        self.disturbance = disturbance.into();
        self.policy = policy.into();
        self
    }

    /// Number of transitions `M`.
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    pub fn states(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn successors(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// State-input pairs as an `M x (n+m)` matrix (states first).
    pub fn pairs(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.len(), self.state_dim() + self.input_dim()));
        p.slice_mut(s![.., ..self.state_dim()]).assign(&self.x);
        p.slice_mut(s![.., self.state_dim()..]).assign(&self.u);
        p
    }

    /// Write the sample as CSV: a metadata header line followed by one row
    /// `x_1..x_n, u_1..u_m, y_1..y_n` per transition.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# kernel-reach sample v1; n={}; m={}; M={}; seed={}; system={}",
            self.state_dim(),
            self.input_dim(),
            self.len(),
            self.seed,
            self.system
        )?;
        let mut fields: Vec<String> =
            Vec::with_capacity(2 * self.state_dim() + self.input_dim());
        for i in 0..self.len() {
            fields.clear();
            fields.extend(self.x.row(i).iter().map(|v| fmt_float(*v)));
            fields.extend(self.u.row(i).iter().map(|v| fmt_float(*v)));
            fields.extend(self.y.row(i).iter().map(|v| fmt_float(*v)));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Write the sample to a file.
    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Read a sample written by [`write_csv`](Self::write_csv), validating
    /// the header and all declared counts.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Format("empty sample file".into()))??;
        let (n, m, declared_rows, seed, system) = parse_sample_header(&header)?;

        let width = 2 * n + m;
        let mut data: Vec<f64> = Vec::with_capacity(declared_rows * width);
        let mut rows = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut count = 0usize;
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CoreError::Format(format!(
                        "row {}: cannot parse '{}' as a number",
                        lineno + 2,
                        field.trim()
                    ))
                })?;
                data.push(v);
                count += 1;
            }
            if count != width {
                return Err(CoreError::Format(format!(
                    "row {}: expected {} fields (n={}, m={}) but found {}",
                    lineno + 2,
                    width,
                    n,
                    m,
                    count
                )));
            }
            rows += 1;
        }
        if rows != declared_rows {
            return Err(CoreError::Format(format!(
                "header declares M={declared_rows} rows but file has {rows}"
            )));
        }
        let all = Array2::from_shape_vec((rows, width), data)
            .map_err(|e| CoreError::Format(format!("sample reshape failed: {e}")))?;
        let x = all.slice(s![.., 0..n]).to_owned();
        let u = all.slice(s![.., n..n + m]).to_owned();
        let y = all.slice(s![.., n + m..]).to_owned();
        TransitionSample::new(x, u, y, seed, system)
    }

    /// Read a sample from a file path.
    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = File::open(path)?;
        Self::read_csv(BufReader::new(f))
    }
}

fn parse_sample_header(header: &str) -> Result<(usize, usize, usize, u64, String)> {
    const PREFIX: &str = "# kernel-reach sample v1;";
    let rest = header
        .strip_prefix(PREFIX)
        .ok_or_else(|| CoreError::Format(format!("unrecognized sample header: '{header}'")))?;
    let mut n = None;
    let mut m = None;
    let mut rows = None;
    let mut seed = None;
    let mut system = None;
    for part in rest.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CoreError::Format(format!("malformed header field '{part}'")))?;
        let value = value.trim();
        match key.trim() {
            "n" => n = Some(parse_count(value, "n")?),
            "m" => m = Some(parse_count(value, "m")?),
            "M" => rows = Some(parse_count(value, "M")?),
            "seed" => {
                seed = Some(value.parse::<u64>().map_err(|_| {
                    CoreError::Format(format!("header seed '{value}' is not a u64"))
                })?)
            }
            "system" => system = Some(value.to_string()),
            other => {
                return Err(CoreError::Format(format!(
                    "unknown header field '{other}'"
                )))
            }
        }
    }
    match (n, m, rows, seed, system) {
        (Some(n), Some(m), Some(rows), Some(seed), Some(system)) => {
            if n == 0 || m == 0 || rows == 0 {
                return Err(CoreError::Format(
                    "header counts n, m, M must all be positive".into(),
                ));
            }
            Ok((n, m, rows, seed, system))
        }
        _ => Err(CoreError::Format(
            "sample header must declare n, m, M, seed, and system".into(),
        )),
    }
}

fn parse_count(value: &str, key: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| CoreError::Format(format!("header {key}='{value}' is not a count")))
}

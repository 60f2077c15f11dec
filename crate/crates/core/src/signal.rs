//! Uniformly sampled, possibly batched, multivariate signals.
//!
//! Values are stored densely as `batch × time × dim`. Batch elements shorter
//! than the common length `T` carry a `lengths` entry; their tail samples are
//! filled with the last valid state so that every row is well defined.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when validating uniform spacing of sample times.
const SPACING_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    batch: usize,
    len: usize,
    dim: usize,
    lengths: Vec<usize>,
    t0: f64,
    dt: f64,
}

impl Signal {
    /// Builds a batch from per-element state sequences, each `T_b × dim`.
    pub fn from_batch(elements: Vec<Vec<Vec<f64>>>, t0: f64, dt: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidSignal("batch is empty".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidSignal(format!("dt must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidSignal("t0 must be finite".into()));
        }
        let dim = match elements[0].first() {
            Some(x) => x.len(),
            None => return Err(Error::InvalidSignal("batch element 0 has no samples".into())),
        };
        if dim == 0 {
            return Err(Error::InvalidSignal("state dimension must be at least 1".into()));
        }
        let len = elements.iter().map(Vec::len).max().unwrap_or(0);
        let mut lengths = Vec::with_capacity(elements.len());
        let mut values = Vec::with_capacity(elements.len() * len * dim);
        for (b, elem) in elements.iter().enumerate() {
            if elem.is_empty() {
                return Err(Error::InvalidSignal(format!("batch element {b} has no samples")));
            }
            for (i, x) in elem.iter().enumerate() {
                if x.len() != dim {
                    return Err(Error::InvalidSignal(format!(
                        "batch element {b}, sample {i}: expected {dim} components, got {}",
                        x.len()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSignal(format!("batch element {b}, sample {i}: non-finite value")));
                }
                values.extend_from_slice(x);
            }
            let last = elem.last().expect("nonempty");
            for _ in elem.len()..len {
                values.extend_from_slice(last);
            }
            lengths.push(elem.len());
        }
        Ok(Self { values, batch: elements.len(), len, dim, lengths, t0, dt })
    }

    /// Single batch element with state sequence `T × dim`.
    pub fn from_states(states: Vec<Vec<f64>>, t0: f64, dt: f64) -> Result<Self> {
        Self::from_batch(vec![states], t0, dt)
    }

    /// Single scalar-valued signal starting at `t = 0` with `dt = 1`.
    pub fn from_scalars(samples: &[f64]) -> Result<Self> {
        Self::scalar(samples, 0.0, 1.0)
    }

    pub fn scalar(samples: &[f64], t0: f64, dt: f64) -> Result<Self> {
        Self::from_states(samples.iter().map(|&v| vec![v]).collect(), t0, dt)
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Common (padded) number of samples `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Valid length of batch element `b`.
    pub fn length(&self, b: usize) -> usize {
        self.lengths[b]
    }

    /// Time stamp of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Flattened `length(b) × dim` states of batch element `b`.
    pub fn element(&self, b: usize) -> &[f64] {
        let start = b * self.len * self.dim;
        &self.values[start..start + self.lengths[b] * self.dim]
    }

    pub fn state(&self, b: usize, i: usize) -> &[f64] {
        let start = (b * self.len + i) * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Raw `batch × T × dim` storage, including tail padding.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Component `k` of batch element `b` over its valid length.
    pub fn component(&self, b: usize, k: usize) -> Vec<f64> {
        (0..self.lengths[b]).map(|i| self.state(b, i)[k]).collect()
    }

    /// Suffix of the signal starting at sample `index`.
    ///
    /// For batches the suffix is taken from every element; `index` must be
    /// inside the shortest element.
    pub fn subsignal(&self, index: usize) -> Result<Self> {
        let shortest = self.lengths.iter().copied().min().unwrap_or(0);
        if index >= shortest {
            return Err(Error::IndexOutOfRange { index, len: shortest });
        }
        let elements =
            (0..self.batch).map(|b| (index..self.lengths[b]).map(|i| self.state(b, i).to_vec()).collect()).collect();
        Self::from_batch(elements, self.time(index), self.dt)
    }

    /// Selects a subset of batch elements.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let elements = indices
            .iter()
            .map(|&b| {
                if b >= self.batch {
                    return Err(Error::IndexOutOfRange { index: b, len: self.batch });
                }
                Ok((0..self.lengths[b]).map(|i| self.state(b, i).to_vec()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_batch(elements, self.t0, self.dt)
    }

    /// Reads a `t,x0,x1,...` CSV file (one batch element).
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::InvalidSignal("CSV header must be `t,x0,x1,...`".into()));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::InvalidSignal(format!(
                    "row {}: expected {} fields, got {}",
                    row + 1,
                    dim + 1,
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::InvalidSignal(format!("row {}: `{s}` is not a number", row + 1)))
            };
            times.push(parse(&rec[0])?);
            states.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?);
        }
        let (t0, dt) = uniform_spacing(&times)?;
        Self::from_states(states, t0, dt)
    }

    /// Writes batch element `b` as `t,x0,x1,...` CSV.
    pub fn write_csv(&self, b: usize, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.lengths[b] {
            let mut rec = vec![self.time(i).to_string()];
            rec.extend(self.state(b, i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the batched JSON form `{"dt":…, "t0":…, "signals":[[[…]]]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: BatchFile = serde_json::from_str(text)?;
        Self::from_batch(file.signals, file.t0, file.dt)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let signals =
            (0..self.batch).map(|b| (0..self.lengths[b]).map(|i| self.state(b, i).to_vec()).collect()).collect();
        Ok(serde_json::to_string(&BatchFile { dt: self.dt, t0: self.t0, signals })?)
    }

    /// Loads a signal from `.csv` or `.json` by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&std::fs::read_to_string(path)?),
            _ => Self::read_csv(path),
        }
    }

    /// Loads several CSV files as one batch; all must share `t0` and `dt`.
    pub fn load_csv_batch<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut elements = Vec::with_capacity(paths.len());
        let mut grid: Option<(f64, f64)> = None;
        for p in paths {
            let s = Self::read_csv(p)?;
            match grid {
                None => grid = Some((s.t0, s.dt)),
                Some((t0, dt)) => {
                    if (t0 - s.t0).abs() > SPACING_RTOL * dt || (dt - s.dt).abs() > SPACING_RTOL * dt {
                        return Err(Error::InvalidSignal(format!(
                            "{} uses a different time grid",
                            p.as_ref().display()
                        )));
                    }
                }
            }
            elements.push((0..s.len).map(|i| s.state(0, i).to_vec()).collect());
        }
        let (t0, dt) = grid.ok_or_else(|| Error::InvalidSignal("no signal files".into()))?;
        Self::from_batch(elements, t0, dt)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BatchFile {
    dt: f64,
    #[serde(default)]
    t0: f64,
    signals: Vec<Vec<Vec<f64>>>,
}

/// Validates that `times` is sorted and uniformly spaced; returns `(t0, dt)`.
fn uniform_spacing(times: &[f64]) -> Result<(f64, f64)> {
    match times {
        [] => Err(Error::InvalidSignal("no samples".into())),
        // A single sample carries no spacing information.
        [t0] => Ok((*t0, 1.0)),
        [t0, rest @ ..] => {
            let n = times.len() - 1;
            let dt = (rest[rest.len() - 1] - t0) / n as f64;
            if !(dt > 0.0) {
                return Err(Error::InvalidSignal("sample times must be increasing".into()));
            }
            for (i, &t) in times.iter().enumerate() {
                let expected = t0 + i as f64 * dt;
                if (t - expected).abs() > SPACING_RTOL * dt.max(expected.abs() * 1e-3) {
                    return Err(Error::InvalidSignal(format!(
                        "sample {i} at t={t} breaks uniform spacing (expected {expected})"
                    )));
                }
            }
            Ok((*t0, dt))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(s: &Signal) -> Vec<f64> {
        s.component(0, 0)
    }

    #[test]
    fn subsignal_suffixes() {
        let s = Signal::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(scalars(&s.subsignal(0).unwrap()), vec![1.0, 2.0, 3.0]);
        assert_eq!(scalars(&s.subsignal(2).unwrap()), vec![3.0]);
        let s = Signal::from_scalars(&[1.0, 1.0, 1.0, 2.0, 3.0, 1.0]).unwrap();
        let sub = s.subsignal(3).unwrap();
        assert_eq!(scalars(&sub), vec![2.0, 3.0, 1.0]);
        assert_eq!(sub.t0(), 3.0);
        assert!(matches!(s.subsignal(6), Err(Error::IndexOutOfRange { index: 6, len: 6 })));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Signal::scalar(&[1.0], 0.0, 0.0).is_err());
        assert!(Signal::scalar(&[], 0.0, 1.0).is_err());
        assert!(Signal::from_states(vec![vec![1.0], vec![1.0, 2.0]], 0.0, 1.0).is_err());
        assert!(Signal::scalar(&[f64::NAN], 0.0, 1.0).is_err());
    }

    #[test]
    fn variable_length_batch_pads_with_last_state() {
        let s = Signal::from_batch(vec![vec![vec![1.0], vec![2.0]], vec![vec![5.0]]], 0.0, 0.5).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.lengths(), &[2, 1]);
        assert_eq!(s.state(1, 1), &[5.0]);
        assert_eq!(s.element(1), &[5.0]);
    }

    #[test]
    fn csv_round_trip_and_spacing_checks() {
        let text = "t,x0,x1\n0.0,1,2\n0.1,3,4\n0.2,5,6\n";
        let s = Signal::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(s.dim(), 2);
        assert!((s.dt() - 0.1).abs() < 1e-12);
        let mut out = Vec::new();
        s.write_csv(0, &mut out).unwrap();
        let back = Signal::from_csv_reader(out.as_slice()).unwrap();
        assert_eq!(back.values(), s.values());

        let uneven = "t,x0\n0,1\n1,2\n3,4\n";
        assert!(Signal::from_csv_reader(uneven.as_bytes()).is_err());
        let unsorted = "t,x0\n2,1\n1,2\n0,4\n";
        assert!(Signal::from_csv_reader(unsorted.as_bytes()).is_err());
        let bad_header = "time,x0\n0,1\n";
        assert!(Signal::from_csv_reader(bad_header.as_bytes()).is_err());
    }

    #[test]
    fn json_batch() {
        let s = Signal::from_json_str(r#"{"dt":0.5,"t0":1.0,"signals":[[[1],[2]],[[3]]]}"#).unwrap();
        assert_eq!(s.batch_size(), 2);
        assert_eq!(s.lengths(), &[2, 1]);
        let again = Signal::from_json_str(&s.to_json_string().unwrap()).unwrap();
        assert_eq!(again, s);
    }
}

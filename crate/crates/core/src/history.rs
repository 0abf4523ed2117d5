//! Per-step training records and their CSV export.

use std::io::{self, Write};

/// Column order of the exported history.
pub const HISTORY_HEADER: &str = "step,loss,loss_flux,loss_div,lr,l2_error,mse,seconds";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub loss_flux: f64,
    pub loss_div: f64,
    pub lr: f64,
    pub l2_error: Option<f64>,
    pub mse: Option<f64>,
    pub seconds: Option<f64>,
    /// `‖Θ‖₂` after the step's update; kept in memory only.
    pub param_norm: f64,
}

impl StepRecord {
    pub fn new(step: usize, loss: f64, lr: f64) -> Self {
        Self { step, loss, loss_flux: f64::NAN, loss_div: f64::NAN, lr, l2_error: None, mse: None, seconds: None, param_norm: f64::NAN }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
}

/// Shortest round-trip decimal; exponent form for very small or large
/// magnitudes.
pub fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn maybe_nan(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        fmt_float(v)
    }
}

impl TrainHistory {
    pub fn push(&mut self, record: StepRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.step < record.step));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Writes the CSV, preceded by `# comment` lines when given.
    ///
    /// Floats are printed in shortest round-trip form; absent values are
    /// empty fields.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{HISTORY_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                fmt_float(r.loss),
                maybe_nan(r.loss_flux),
                maybe_nan(r.loss_div),
                fmt_float(r.lr),
                opt(r.l2_error),
                opt(r.mse),
                opt(r.seconds)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comments).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Median of the first and last `frac` portion of a series.
pub fn head_tail_medians(values: &[f64], frac: f64) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let k = ((values.len() as f64 * frac).ceil() as usize).clamp(1, values.len());
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    Some((median(&values[..k]), median(&values[values.len() - k..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, -0.0, 1.0, 0.1, 1e-4, 9.99e-5, 1.2246467991473532e-16, 3e300, -7.5e15, 123456.789] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_float(1.2246467991473532e-16), "1.2246467991473532e-16");
        assert_eq!(fmt_float(0.25), "0.25");
    }

    #[test]
    fn csv_layout() {
        let mut h = TrainHistory::default();
        let mut r = StepRecord::new(0, 0.5, 0.01);
        r.loss_flux = 0.25;
        r.loss_div = 0.25;
        h.push(r);
        let mut r = StepRecord::new(1, 0.1, 0.01);
        r.loss_flux = 0.05;
        r.loss_div = 0.05;
        r.l2_error = Some(0.3);
        r.mse = Some(0.0225);
        h.push(r);
        let text = h.to_csv_string(&["seed=3".into()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=3");
        assert_eq!(lines[1], HISTORY_HEADER);
        assert_eq!(lines[2], "0,0.5,0.25,0.25,0.01,,,");
        assert_eq!(lines[3], "1,0.1,0.05,0.05,0.01,0.3,0.0225,");
    }

    #[test]
    fn medians() {
        let v: Vec<f64> = (0..100).map(|i| 100.0 - i as f64).collect();
        let (head, tail) = head_tail_medians(&v, 0.05).unwrap();
        assert_eq!(head, 98.0);
        assert_eq!(tail, 3.0);
    }
}

//! Bounded input signals on the two-sided time axis.
//!
//! Discrete signals are a dense table over consecutive integer indices with
//! value 0 everywhere else. Continuous signals are piecewise constant: the
//! value is 0 before the first knot, `values[i]` on `[knots[i], knots[i+1])`
//! and the last value is held after the last knot.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};
use crate::kernel::TimeDomain;
use crate::numeric::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Discrete {
        start: i64,
        values: Vec<f64>,
        sup_norm: f64,
    },
    Continuous {
        knots: Vec<f64>,
        values: Vec<f64>,
        sup_norm: f64,
    },
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

impl Signal {
    /// Table `u_{start + i} = values[i]`.
    pub fn discrete(start: i64, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return invalid(format!("signal value {v} is not finite"));
        }
        let sup_norm = sup(&values);
        Ok(Signal::Discrete {
            start,
            values,
            sup_norm,
        })
    }

    /// Sparse `(index, value)` samples with strictly increasing indices; gaps are 0.
    pub fn from_samples<I: IntoIterator<Item = (i64, f64)>>(samples: I) -> Result<Self> {
        let samples: Vec<(i64, f64)> = samples.into_iter().collect();
        let Some(&(start, _)) = samples.first() else {
            return Self::discrete(0, Vec::new());
        };
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("signal indices must be strictly increasing");
        }
        let end = samples[samples.len() - 1].0;
        let mut values = vec![0.0; (end - start + 1) as usize];
        for (i, v) in samples {
            values[(i - start) as usize] = v;
        }
        Self::discrete(start, values)
    }

    /// Piecewise-constant signal with strictly increasing knots.
    pub fn piecewise_constant(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return invalid("knots and values differ in length");
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return invalid("knots and values must be finite");
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("knots must be strictly increasing");
        }
        let sup_norm = sup(&values);
        Ok(Signal::Continuous {
            knots,
            values,
            sup_norm,
        })
    }

    pub fn zero(domain: TimeDomain) -> Self {
        match domain {
            TimeDomain::Discrete => Signal::Discrete {
                start: 0,
                values: Vec::new(),
                sup_norm: 0.0,
            },
            TimeDomain::Continuous => Signal::Continuous {
                knots: Vec::new(),
                values: Vec::new(),
                sup_norm: 0.0,
            },
        }
    }

    pub fn domain(&self) -> TimeDomain {
        match self {
            Signal::Discrete { .. } => TimeDomain::Discrete,
            Signal::Continuous { .. } => TimeDomain::Continuous,
        }
    }

    /// `‖u‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Signal::Discrete { sup_norm, .. } | Signal::Continuous { sup_norm, .. } => *sup_norm,
        }
    }

    /// `u_t`; discrete signals read `t` as an integer index.
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Signal::Discrete { start, values, .. } => {
                let i = t - *start as f64;
                if i < 0.0 || i >= values.len() as f64 || t.fract() != 0.0 {
                    0.0
                } else {
                    values[i as usize]
                }
            }
            Signal::Continuous { knots, values, .. } => {
                let idx = knots.partition_point(|&k| k <= t);
                if idx == 0 {
                    0.0
                } else {
                    values[idx - 1]
                }
            }
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            Signal::Discrete { start, values, .. } => {
                Self::discrete(*start, values.iter().map(|v| alpha * v).collect()).expect("finite")
            }
            Signal::Continuous { knots, values, .. } => {
                Self::piecewise_constant(knots.clone(), values.iter().map(|v| alpha * v).collect())
                    .expect("finite")
            }
        }
    }

    /// `t ↦ u_{t - delay}`.
    pub fn delayed(&self, delay: f64) -> Result<Self> {
        match self {
            Signal::Discrete { start, values, .. } => {
                if delay.fract() != 0.0 {
                    return invalid("discrete delay must be an integer");
                }
                Self::discrete(start + delay as i64, values.clone())
            }
            Signal::Continuous { knots, values, .. } => {
                Self::piecewise_constant(knots.iter().map(|k| k + delay).collect(), values.clone())
            }
        }
    }

    /// Pointwise sum of two discrete signals.
    pub fn add(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Signal::Discrete { .. }, Signal::Discrete { .. }) => {
                let (a0, a1) = self.index_range().unwrap_or((0, -1));
                let (b0, b1) = other.index_range().unwrap_or((0, -1));
                let lo = a0.min(b0);
                let hi = a1.max(b1);
                if hi < lo {
                    return Ok(Self::zero(TimeDomain::Discrete));
                }
                let values = (lo..=hi)
                    .map(|i| self.value_at(i as f64) + other.value_at(i as f64))
                    .collect();
                Self::discrete(lo, values)
            }
            (Signal::Continuous { knots: ka, .. }, Signal::Continuous { knots: kb, .. }) => {
                let mut knots: Vec<f64> = ka.iter().chain(kb.iter()).copied().collect();
                knots.sort_by(f64::total_cmp);
                knots.dedup();
                let values = knots
                    .iter()
                    .map(|&k| self.value_at(k) + other.value_at(k))
                    .collect();
                Self::piecewise_constant(knots, values)
            }
            _ => invalid("cannot add signals from different time domains"),
        }
    }

    /// First and last table index of a non-empty discrete signal.
    pub fn index_range(&self) -> Option<(i64, i64)> {
        match self {
            Signal::Discrete { start, values, .. } if !values.is_empty() => {
                Some((*start, start + values.len() as i64 - 1))
            }
            _ => None,
        }
    }

    /// Pieces `(s_lo, s_hi, a)` of the reflected step function
    /// `v_s = u_{τ-s}` on `s ≥ 0`, skipping zero-valued pieces.
    pub fn reflected_pieces(&self, tau: f64) -> Vec<(f64, f64, f64)> {
        let Signal::Continuous { knots, values, .. } = self else {
            return Vec::new();
        };
        let mut pieces = Vec::new();
        for i in 0..knots.len() {
            let a = values[i];
            if a == 0.0 {
                continue;
            }
            // u = a on [k_i, k_{i+1}) ⇒ v = a on (τ - k_{i+1}, τ - k_i]
            let s_hi = tau - knots[i];
            let s_lo = if i + 1 < knots.len() {
                tau - knots[i + 1]
            } else {
                0.0
            };
            let (lo, hi) = (s_lo.max(0.0), s_hi);
            if hi > lo {
                pieces.push((lo, hi, a));
            }
        }
        pieces.reverse();
        pieces
    }

    /// CSV with header `index,value` or `knot_time,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            Signal::Discrete { start, values, .. } => {
                w.write_record(["index", "value"])?;
                for (i, v) in values.iter().enumerate() {
                    w.write_record([(start + i as i64).to_string(), fmt_f64(*v)])?;
                }
            }
            Signal::Continuous { knots, values, .. } => {
                w.write_record(["knot_time", "value"])?;
                for (k, v) in knots.iter().zip(values) {
                    w.write_record([fmt_f64(*k), fmt_f64(*v)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads either CSV layout; the header decides the domain.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let discrete = match header
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .as_slice()
        {
            ["index", "value"] => true,
            ["knot_time", "value"] => false,
            other => {
                return Err(Error::Parse {
                    line: Some(1),
                    message: format!(
                        "expected `index,value` or `knot_time,value`, found `{}`",
                        other.join(",")
                    ),
                })
            }
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize);
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("{what} is not a number"),
            };
            let t = rec.get(0).ok_or_else(|| bad("time"))?;
            let v: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("value"))?;
            rows.push((t.to_owned(), v, line));
        }
        if discrete {
            let mut samples = Vec::with_capacity(rows.len());
            for (t, v, line) in rows {
                let i: i64 = t.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("index `{t}` is not an integer"),
                })?;
                samples.push((i, v));
            }
            Self::from_samples(samples)
        } else {
            let mut knots = Vec::with_capacity(rows.len());
            let mut values = Vec::with_capacity(rows.len());
            for (t, v, line) in rows {
                knots.push(t.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("knot time `{t}` is not a number"),
                })?);
                values.push(v);
            }
            Self::piecewise_constant(knots, values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_defaults_to_zero() {
        let u = Signal::discrete(-2, vec![1.0, -3.0, 2.0]).unwrap();
        assert_eq!(u.value_at(-3.0), 0.0);
        assert_eq!(u.value_at(-1.0), -3.0);
        assert_eq!(u.value_at(1.0), 0.0);
        assert_eq!(u.sup_norm(), 3.0);
    }

    #[test]
    fn sparse_samples_fill_gaps() {
        let u = Signal::from_samples([(0, 1.0), (3, 2.0)]).unwrap();
        assert_eq!(u.value_at(1.0), 0.0);
        assert_eq!(u.value_at(3.0), 2.0);
        assert!(Signal::from_samples([(1, 1.0), (1, 2.0)]).is_err());
    }

    #[test]
    fn step_signal_hold() {
        let u = Signal::piecewise_constant(vec![0.0, 1.0, 2.5], vec![2.0, -1.0, 0.5]).unwrap();
        assert_eq!(u.value_at(-0.1), 0.0);
        assert_eq!(u.value_at(0.0), 2.0);
        assert_eq!(u.value_at(1.7), -1.0);
        assert_eq!(u.value_at(100.0), 0.5);
        assert!(Signal::piecewise_constant(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn reflection_covers_past() {
        let u = Signal::piecewise_constant(vec![0.0, 1.0, 3.0], vec![2.0, -1.0, 0.0]).unwrap();
        // τ = 2.5: v_s = u_{2.5-s}; s∈[0,1.5) → -1, s∈[1.5,2.5) → 2
        let p = u.reflected_pieces(2.5);
        assert_eq!(p, vec![(0.0, 1.5, -1.0), (1.5, 2.5, 2.0)]);
        assert!(u.reflected_pieces(-1.0).is_empty());
    }

    #[test]
    fn csv_round_trip_both_domains() {
        let d = Signal::discrete(-1, vec![0.5, 0.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(Signal::read_csv(buf.as_slice()).unwrap(), d);

        let c = Signal::piecewise_constant(vec![0.0, 0.25], vec![1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(Signal::read_csv(buf.as_slice()).unwrap(), c);
        assert!(Signal::read_csv("t,v\n1,2\n".as_bytes()).is_err());
    }
}

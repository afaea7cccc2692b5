//! Regularized impulse-response estimation in the RKHS of a stable kernel.
//!
//! Minimizes `Σᵢ (L_{tᵢ}(g) - yᵢ)² + λ‖g‖²`. The minimizer is
//! `ĝ = Σᵢ cᵢ φ_{tᵢ}` with `c = (O + λI)⁻¹ y`, where `O` is the Gram matrix of
//! the representers `φ_{tᵢ}` of the convolution functionals.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convolution::{self, apply_l, Representer};
use crate::error::{invalid, Error, Result};
use crate::kernel::{min_eigenvalue, KernelDescriptor, KernelSpec, TimeDomain};
use crate::numeric::{fmt_f64, CompensatedSum};
use crate::rkhs::RkhsElement;
use crate::signal::Signal;

/// Measurements `yᵢ` of the output at sample times `tᵢ` under a known input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input: Signal,
    sample_times: Vec<f64>,
    outputs: Vec<f64>,
    noise_sigma: Option<f64>,
}

impl Dataset {
    pub fn new(
        input: Signal,
        sample_times: Vec<f64>,
        outputs: Vec<f64>,
        noise_sigma: Option<f64>,
    ) -> Result<Self> {
        if sample_times.len() != outputs.len() {
            return invalid(format!(
                "{} sample times but {} outputs",
                sample_times.len(),
                outputs.len()
            ));
        }
        if sample_times.is_empty() {
            return invalid("dataset has no samples");
        }
        for &t in &sample_times {
            input.domain().check(t)?;
        }
        if sample_times.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("sample times must be strictly increasing");
        }
        if outputs.iter().any(|y| !y.is_finite()) {
            return invalid("outputs must be finite");
        }
        if let Some(s) = noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return invalid(format!("noise sigma {s} must be finite and non-negative"));
            }
        }
        Ok(Self {
            input,
            sample_times,
            outputs,
            noise_sigma,
        })
    }

    pub fn input(&self) -> &Signal {
        &self.input
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.noise_sigma
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Samples at the given positions (kept in time order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        Self::new(
            self.input.clone(),
            idx.iter().map(|&i| self.sample_times[i]).collect(),
            idx.iter().map(|&i| self.outputs[i]).collect(),
            self.noise_sigma,
        )
    }

    /// CSV `time,output`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "output"])?;
        for (t, y) in self.sample_times.iter().zip(&self.outputs) {
            w.write_record([fmt_f64(*t), fmt_f64(*y)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input_csv: R, input: Signal) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input_csv);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["time", "output"] {
            return Err(Error::Parse {
                line: Some(1),
                message: "expected header `time,output`".into(),
            });
        }
        let (mut times, mut outputs) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize);
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("field {} is not a number", i + 1),
                    })
            };
            times.push(field(0)?);
            outputs.push(field(1)?);
        }
        Self::new(input, times, outputs, None)
    }
}

/// `O[i][j] = ⟨φ_{tᵢ}, φ_{tⱼ}⟩` with per-entry truncation error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputKernelMatrix {
    pub values: DMatrix<f64>,
    pub error_bounds: DMatrix<f64>,
}

impl OutputKernelMatrix {
    pub fn from_representers(reps: &[Representer]) -> Result<Self> {
        let n = reps.len();
        let mut values = DMatrix::zeros(n, n);
        let mut error_bounds = DMatrix::zeros(n, n);
        let norms: Vec<f64> = reps.iter().map(|r| r.element.norm()).collect();
        for i in 0..n {
            for j in i..n {
                let v = reps[i].element.inner(&reps[j].element)?;
                let (ei, ej) = (reps[i].tail_bound, reps[j].tail_bound);
                let bound = norms[i] * ej + norms[j] * ei + ei * ej;
                values[(i, j)] = v;
                values[(j, i)] = v;
                error_bounds[(i, j)] = bound;
                error_bounds[(j, i)] = bound;
            }
        }
        Ok(Self {
            values,
            error_bounds,
        })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }
}

/// Representers `φ_{tᵢ}` for every sample time (discrete time shares one
/// truncation horizon across all of them).
pub fn representers(
    kernel: &KernelDescriptor,
    u: &Signal,
    times: &[f64],
    tail_tol: f64,
) -> Result<Vec<Representer>> {
    match kernel.domain() {
        TimeDomain::Discrete => {
            if u.domain() != TimeDomain::Discrete {
                return invalid("continuous signal used with a discrete-time kernel");
            }
            let horizon = convolution::truncation_horizon(kernel, u, tail_tol)?;
            times
                .iter()
                .map(|&t| {
                    kernel.domain().check(t)?;
                    convolution::discrete_representer(kernel, u, t, horizon)
                })
                .collect()
        }
        TimeDomain::Continuous => times
            .iter()
            .map(|&t| convolution::representer_phi(kernel, u, t, tail_tol))
            .collect(),
    }
}

pub fn output_kernel_matrix(
    kernel: &KernelDescriptor,
    u: &Signal,
    times: &[f64],
    tail_tol: f64,
) -> Result<OutputKernelMatrix> {
    OutputKernelMatrix::from_representers(&representers(kernel, u, times, tail_tol)?)
}

/// Solver diagnostics attached to an [`Estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// `‖(O + λI)c - y‖_∞`.
    pub residual_inf: f64,
    /// Condition number of the factored matrix `O + λI (+ jitter)`.
    pub condition_number: f64,
    /// Diagonal jitter added after a failed factorization (0 if none).
    pub jitter: f64,
    pub min_eigenvalue_o: f64,
    pub trace_o: f64,
}

/// Solves `(O + λI)c = y` by Cholesky, retrying once with jitter
/// `1e-12·trace/n` on failure.
pub fn solve_regularized(
    o: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
) -> Result<(DVector<f64>, FitDiagnostics)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let n = o.nrows();
    if n != y.len() || o.ncols() != n {
        return invalid("output kernel matrix and data size differ");
    }
    let rhs = DVector::from_column_slice(y);
    let mut a = o.clone();
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let mut jitter = 0.0;
    let chol = match Cholesky::new(a.clone()) {
        Some(c) => c,
        None => {
            jitter = 1e-12 * o.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
            for i in 0..n {
                a[(i, i)] += jitter;
            }
            Cholesky::new(a.clone()).ok_or_else(|| {
                Error::NumericalFailure(format!(
                    "Cholesky factorization of O + λI failed even with jitter {jitter}"
                ))
            })?
        }
    };
    let mut c = chol.solve(&rhs);
    let mut residual = &a * &c - &rhs;
    // one step of iterative refinement
    let correction = chol.solve(&residual);
    let refined = &c - correction;
    let refined_residual = &a * &refined - &rhs;
    if refined_residual.amax() < residual.amax() {
        c = refined;
        residual = refined_residual;
    }
    let residual_inf = residual.amax();
    let y_inf = rhs.amax();
    if !(residual_inf <= 1e-8 * (1.0 + y_inf)) {
        return Err(Error::NumericalFailure(format!(
            "solve residual {residual_inf} exceeds 1e-8·(1+‖y‖∞)"
        )));
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let diagnostics = FitDiagnostics {
        residual_inf,
        condition_number: hi / lo,
        jitter,
        min_eigenvalue_o: lo - lambda - jitter,
        trace_o: o.trace(),
    };
    Ok((c, diagnostics))
}

/// A fitted impulse response `ĝ = Σᵢ cᵢ φ_{tᵢ}`.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub kernel: KernelDescriptor,
    pub input: Signal,
    pub sample_times: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub tail_tol: f64,
    pub representers: Vec<Representer>,
    pub g_hat: RkhsElement,
    pub diagnostics: FitDiagnostics,
}

fn combine_representers(
    kernel: &KernelDescriptor,
    reps: &[Representer],
    coefficients: &[f64],
) -> Result<RkhsElement> {
    let atoms = reps
        .iter()
        .zip(coefficients)
        .flat_map(|(r, &c)| r.element.atoms().iter().map(move |&(w, s)| (c * w, s)));
    RkhsElement::from_atoms(kernel, atoms.collect::<Vec<_>>())
}

/// Fits `c = (O + λI)⁻¹ y`.
pub fn fit(
    kernel: &KernelDescriptor,
    data: &Dataset,
    lambda: f64,
    tail_tol: f64,
) -> Result<Estimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let reps = representers(kernel, data.input(), data.sample_times(), tail_tol)?;
    let o = OutputKernelMatrix::from_representers(&reps)?;
    fit_with(kernel, data, lambda, tail_tol, reps, &o.values)
}

fn fit_with(
    kernel: &KernelDescriptor,
    data: &Dataset,
    lambda: f64,
    tail_tol: f64,
    reps: Vec<Representer>,
    o: &DMatrix<f64>,
) -> Result<Estimate> {
    let (c, diagnostics) = solve_regularized(o, data.outputs(), lambda)?;
    let coefficients: Vec<f64> = c.iter().copied().collect();
    let g_hat = combine_representers(kernel, &reps, &coefficients)?;
    Ok(Estimate {
        kernel: kernel.clone(),
        input: data.input().clone(),
        sample_times: data.sample_times().to_vec(),
        coefficients,
        lambda,
        tail_tol,
        representers: reps,
        g_hat,
        diagnostics,
    })
}

/// `ĝ_t = Σᵢ cᵢ φ_{tᵢ}(t)`.
pub fn predict_impulse(est: &Estimate, t: f64) -> Result<f64> {
    est.g_hat.evaluate(t)
}

/// `L_{u,τ}(ĝ)`, the noiseless output the estimate predicts at `τ`.
pub fn predict_output(est: &Estimate, tau: f64) -> Result<f64> {
    apply_l(&est.input, tau, &est.g_hat)
}

/// `Σᵢ (L_{tᵢ}(g) - yᵢ)² + λ‖g‖²`.
pub fn objective(
    kernel: &KernelDescriptor,
    data: &Dataset,
    lambda: f64,
    g: &RkhsElement,
) -> Result<f64> {
    if g.kernel() != kernel {
        return invalid("element does not belong to the given kernel");
    }
    let mut acc = CompensatedSum::new();
    for (&t, &y) in data.sample_times().iter().zip(data.outputs()) {
        let r = apply_l(data.input(), t, g)? - y;
        acc.add(r * r);
    }
    acc.add(lambda * g.norm_squared());
    Ok(acc.value())
}

/// `count` values log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return invalid("log grid needs 0 < lo ≤ hi and count ≥ 1");
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Hold-out scores of a λ grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub candidates: Vec<f64>,
    /// Mean squared hold-out output error per candidate.
    pub scores: Vec<f64>,
    pub best: f64,
}

/// Picks λ from `grid` by hold-out mean squared output error (every
/// `holdout_stride`-th sample is held out), then refits on all samples.
///
/// This is a plain validation search, not a marginal-likelihood or SURE
/// tuner. A single-entry grid skips the search.
pub fn select_lambda(
    kernel: &KernelDescriptor,
    data: &Dataset,
    grid: &[f64],
    tail_tol: f64,
    holdout_stride: usize,
) -> Result<(Estimate, Option<LambdaSearch>)> {
    if grid.is_empty() {
        return invalid("empty lambda grid");
    }
    if grid.len() == 1 {
        return Ok((fit(kernel, data, grid[0], tail_tol)?, None));
    }
    if holdout_stride < 2 {
        return invalid("holdout stride must be at least 2");
    }
    let reps = representers(kernel, data.input(), data.sample_times(), tail_tol)?;
    let o = OutputKernelMatrix::from_representers(&reps)?.values;
    let n = data.len();
    let (valid, train): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|i| i % holdout_stride == holdout_stride - 1);
    if train.is_empty() || valid.is_empty() {
        return invalid("not enough samples for a hold-out split");
    }
    let o_tt = o.select_rows(&train).select_columns(&train);
    let o_vt = o.select_rows(&valid).select_columns(&train);
    let y_t: Vec<f64> = train.iter().map(|&i| data.outputs()[i]).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (c, _) = solve_regularized(&o_tt, &y_t, lambda)?;
        let pred = &o_vt * c;
        let mse = valid
            .iter()
            .zip(pred.iter())
            .map(|(&i, p)| (p - data.outputs()[i]).powi(2))
            .sum::<f64>()
            / valid.len() as f64;
        scores.push(mse);
    }
    let best_idx = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if *s < scores[best] { i } else { best });
    let best = grid[best_idx];
    let est = fit_with(kernel, data, best, tail_tol, reps, &o)?;
    Ok((
        est,
        Some(LambdaSearch {
            candidates: grid.to_vec(),
            scores,
            best,
        }),
    ))
}

/// Structured-text form of an estimate. The input signal is stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    pub lambda: f64,
    pub tail_tol: f64,
    pub sample_times: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub kernel: KernelSpec,
}

impl Estimate {
    pub fn to_record(&self, table: Option<&Path>) -> Result<EstimateRecord> {
        Ok(EstimateRecord {
            lambda: self.lambda,
            tail_tol: self.tail_tol,
            sample_times: self.sample_times.clone(),
            coefficients: self.coefficients.clone(),
            kernel: self.kernel.to_spec(table)?,
        })
    }

    /// Rebuilds representers and `ĝ` from a stored record and its input.
    pub fn from_record(record: &EstimateRecord, input: Signal, base_dir: &Path) -> Result<Self> {
        let kernel = record.kernel.build(base_dir)?;
        if record.sample_times.len() != record.coefficients.len() {
            return invalid("estimate record: times and coefficients differ in length");
        }
        let reps = representers(&kernel, &input, &record.sample_times, record.tail_tol)?;
        let g_hat = combine_representers(&kernel, &reps, &record.coefficients)?;
        Ok(Estimate {
            kernel,
            input,
            sample_times: record.sample_times.clone(),
            coefficients: record.coefficients.clone(),
            lambda: record.lambda,
            tail_tol: record.tail_tol,
            representers: reps,
            g_hat,
            diagnostics: FitDiagnostics {
                residual_inf: f64::NAN,
                condition_number: f64::NAN,
                jitter: 0.0,
                min_eigenvalue_o: f64::NAN,
                trace_o: f64::NAN,
            },
        })
    }

    /// CSV `t,g_hat` on a user grid.
    pub fn write_impulse_csv<W: Write>(&self, grid: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "g_hat"])?;
        for &t in grid {
            w.write_record([fmt_f64(t), fmt_f64(predict_impulse(self, t)?)])?;
        }
        w.flush()?;
        Ok(())
    }
}

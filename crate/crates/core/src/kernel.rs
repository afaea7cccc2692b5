//! Kernel families on `T × T` (`T` = Z₊ or R₊), Gram matrices and the
//! absolute-summability (integrability) measure.
//!
//! The closed-form families are all *semiseparable*: for `s ≤ t` the value
//! factors through `min` and `max`. Bilinear forms of sorted atom lists are
//! therefore evaluated in linear time by a single merge pass with running
//! prefix sums; tabulated kernels fall back to the quadratic double loop.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{fmt_f64, is_integer_time, CompensatedSum};
use crate::quadrature;

/// Default cap on horizons explored by tail searches.
pub const DEFAULT_MAX_HORIZON: f64 = 1.0e6;

/// Relative PSD tolerance on Gram matrices, scaled by the trace.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Discrete,
    Continuous,
}

impl TimeDomain {
    /// Non-negative integer in discrete time, non-negative finite real otherwise.
    pub fn check(self, t: f64) -> Result<()> {
        match self {
            TimeDomain::Discrete if !(is_integer_time(t) && t >= 0.0) => invalid(format!(
                "discrete time must be a non-negative integer, got {t}"
            )),
            TimeDomain::Continuous if !(t.is_finite() && t >= 0.0) => invalid(format!(
                "continuous time must be non-negative and finite, got {t}"
            )),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeDomain::Discrete => "discrete",
            TimeDomain::Continuous => "continuous",
        }
    }
}

/// A symmetric table of kernel values on an explicit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl KernelTable {
    /// Builds a table from `(s, t, value)` triples. Each unordered pair must be
    /// present at least once; pairs given in both orders must agree exactly.
    pub fn from_entries<I>(domain: TimeDomain, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64, f64)>,
    {
        let entries: Vec<(f64, f64, f64)> = entries.into_iter().collect();
        if entries.is_empty() {
            return invalid("tabulated kernel has no entries");
        }
        let mut grid: Vec<f64> = entries.iter().flat_map(|&(s, t, _)| [s, t]).collect();
        for &t in &grid {
            domain.check(t)?;
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let n = grid.len();
        let mut values = vec![f64::NAN; n * n];
        let index = |x: f64| grid.binary_search_by(|g| g.total_cmp(&x)).unwrap();
        for &(s, t, v) in &entries {
            if !v.is_finite() {
                return invalid(format!("non-finite table value at ({s}, {t})"));
            }
            let (i, j) = (index(s), index(t));
            for (a, b) in [(i, j), (j, i)] {
                let slot = &mut values[a * n + b];
                if !slot.is_nan() && *slot != v {
                    return invalid(format!(
                        "tabulated kernel is not symmetric at ({s}, {t}): {slot} vs {v}"
                    ));
                }
                *slot = v;
            }
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan()) {
            return invalid(format!(
                "tabulated kernel is missing the pair ({}, {})",
                grid[pos / n],
                grid[pos % n]
            ));
        }
        Ok(Self { grid, values })
    }

    /// Reads CSV with header `s,t,value`.
    pub fn read_csv<R: std::io::Read>(domain: TimeDomain, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["s", "t", "value"] {
            return Err(Error::Parse {
                line: Some(1),
                message: format!(
                    "expected header `s,t,value`, found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize);
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("field {} is not a number", i + 1),
                    })
            };
            entries.push((parse(0)?, parse(1)?, parse(2)?));
        }
        Self::from_entries(domain, entries)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "t", "value"])?;
        let n = self.grid.len();
        for i in 0..n {
            for j in 0..n {
                w.write_record([
                    fmt_f64(self.grid[i]),
                    fmt_f64(self.grid[j]),
                    fmt_f64(self.values[i * n + j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn covers(&self, t: f64) -> bool {
        t >= self.grid[0] && t <= self.grid[self.grid.len() - 1]
    }

    fn nearest(&self, t: f64) -> usize {
        match self.grid.binary_search_by(|g| g.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.grid.len() => i - 1,
            Err(i) => {
                // ties go to the lower grid point
                if t - self.grid[i - 1] <= self.grid[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    fn value(&self, s: f64, t: f64) -> f64 {
        let n = self.grid.len();
        self.values[self.nearest(s) * n + self.nearest(t)]
    }
}

/// Kernel family and hyperparameters.
#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// Tuned/correlated: `β^{max(s,t)}` (discrete) or `e^{-β max(s,t)}` (continuous).
    Tc {
        beta: f64,
    },
    /// Diagonal/correlated: `λ^{(s+t)/2} ρ^{|s-t|}`, discrete time only.
    Dc {
        decay: f64,
        rho: f64,
    },
    /// Stable spline: `e^{-β(s+t+max)}/2 - e^{-3β max}/6`.
    Ss {
        beta: f64,
    },
    /// `k(s,t) = c`. PSD but not integrable on unbounded domains; used to
    /// exercise divergence detection and exactness of Riemann sums.
    Constant {
        value: f64,
    },
    Tabulated(Arc<KernelTable>),
}

impl PartialEq for KernelFamily {
    fn eq(&self, other: &Self) -> bool {
        use KernelFamily::*;
        match (self, other) {
            (Tc { beta: a }, Tc { beta: b }) => a == b,
            (Dc { decay: a, rho: r }, Dc { decay: b, rho: q }) => a == b && r == q,
            (Ss { beta: a }, Ss { beta: b }) => a == b,
            (Constant { value: a }, Constant { value: b }) => a == b,
            (Tabulated(a), Tabulated(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

/// A Mercer kernel on `T × T` with validated hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDescriptor {
    family: KernelFamily,
    domain: TimeDomain,
}

impl KernelDescriptor {
    pub fn tc(domain: TimeDomain, beta: f64) -> Result<Self> {
        let ok = match domain {
            TimeDomain::Discrete => beta > 0.0 && beta < 1.0,
            TimeDomain::Continuous => beta > 0.0 && beta.is_finite(),
        };
        if !ok {
            return invalid(format!(
                "TC decay beta={beta} out of range for {} time",
                domain.name()
            ));
        }
        Ok(Self {
            family: KernelFamily::Tc { beta },
            domain,
        })
    }

    pub fn dc(domain: TimeDomain, decay: f64, rho: f64) -> Result<Self> {
        if domain != TimeDomain::Discrete {
            return invalid("DC kernel is defined on discrete time only");
        }
        if !(decay > 0.0 && decay < 1.0) {
            return invalid(format!("DC decay={decay} must lie in (0, 1)"));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return invalid(format!("DC correlation rho={rho} must lie in [-1, 1]"));
        }
        Ok(Self {
            family: KernelFamily::Dc { decay, rho },
            domain,
        })
    }

    pub fn ss(domain: TimeDomain, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return invalid(format!("SS decay beta={beta} must be positive"));
        }
        Ok(Self {
            family: KernelFamily::Ss { beta },
            domain,
        })
    }

    pub fn constant(domain: TimeDomain, value: f64) -> Result<Self> {
        if !(value >= 0.0 && value.is_finite()) {
            return invalid(format!(
                "constant kernel value={value} must be non-negative"
            ));
        }
        Ok(Self {
            family: KernelFamily::Constant { value },
            domain,
        })
    }

    pub fn tabulated(domain: TimeDomain, table: KernelTable) -> Result<Self> {
        for &t in table.grid() {
            domain.check(t)?;
        }
        Ok(Self {
            family: KernelFamily::Tabulated(Arc::new(table)),
            domain,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn domain(&self) -> TimeDomain {
        self.domain
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            KernelFamily::Tc { .. } => "tc",
            KernelFamily::Dc { .. } => "dc",
            KernelFamily::Ss { .. } => "ss",
            KernelFamily::Constant { .. } => "constant",
            KernelFamily::Tabulated(_) => "tabulated",
        }
    }

    /// Validates a time for this kernel: domain membership and, for tabulated
    /// kernels, coverage by the grid.
    pub fn check_time(&self, t: f64) -> Result<()> {
        self.domain.check(t)?;
        if let KernelFamily::Tabulated(table) = &self.family {
            if !table.covers(t) {
                return invalid(format!(
                    "time {t} lies outside the tabulated grid [{}, {}]",
                    table.grid[0],
                    table.grid[table.grid.len() - 1]
                ));
            }
        }
        Ok(())
    }

    /// `k(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        self.check_time(s)?;
        self.check_time(t)?;
        Ok(self.value(s, t))
    }

    /// Kernel value for already validated times.
    #[inline]
    pub(crate) fn value(&self, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        match &self.family {
            KernelFamily::Tc { beta } => match self.domain {
                TimeDomain::Discrete => beta.powf(hi),
                TimeDomain::Continuous => (-beta * hi).exp(),
            },
            KernelFamily::Dc { decay, rho } => {
                decay.powf(0.5 * (lo + hi)) * rho.powi((hi - lo) as i32)
            }
            KernelFamily::Ss { beta } => {
                0.5 * (-beta * (lo + 2.0 * hi)).exp() - (-3.0 * beta * hi).exp() / 6.0
            }
            KernelFamily::Constant { value } => *value,
            KernelFamily::Tabulated(table) => table.value(s, t),
        }
    }

    pub fn gram(&self, points: &[f64]) -> Result<GramMatrix> {
        if points.is_empty() {
            return invalid("gram: empty point list");
        }
        for &p in points {
            self.check_time(p)?;
        }
        let n = points.len();
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.value(points[i], points[j]);
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        Ok(GramMatrix {
            points: points.to_vec(),
            values,
        })
    }

    /// `Σᵢ Σⱼ aᵢ bⱼ k(xᵢ, yⱼ)` for atom lists sorted by strictly increasing
    /// center, given as `(weight, center)`.
    pub(crate) fn bilinear(&self, a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        if let KernelFamily::Tabulated(_) = self.family {
            let mut acc = CompensatedSum::new();
            for &(wa, ca) in a {
                let mut row = CompensatedSum::new();
                for &(wb, cb) in b {
                    row.add(wb * self.value(ca, cb));
                }
                acc.add(wa * row.value());
            }
            return acc.value();
        }
        let merged = merge_atoms(a, b);
        self.semiseparable_form(&merged)
    }

    /// Linear-time bilinear form over merged `(z, α, β)` with strictly
    /// increasing `z`.
    fn semiseparable_form(&self, merged: &[(f64, f64, f64)]) -> f64 {
        let mut acc = CompensatedSum::new();
        match (&self.family, self.domain) {
            (KernelFamily::Tc { .. } | KernelFamily::Constant { .. }, _) => {
                // k(s,t) = q(max(s,t))
                let (mut pa, mut pb) = (CompensatedSum::new(), CompensatedSum::new());
                for &(z, al, be) in merged {
                    let q = self.value(z, z);
                    acc.add(q * (al * be + be * pa.value() + al * pb.value()));
                    pa.add(al);
                    pb.add(be);
                }
            }
            (KernelFamily::Ss { beta }, _) => {
                // s < t: e^{-βs} e^{-2βt}/2 - e^{-3βt}/6
                let (mut a1, mut b1) = (CompensatedSum::new(), CompensatedSum::new());
                let (mut a0, mut b0) = (CompensatedSum::new(), CompensatedSum::new());
                for &(z, al, be) in merged {
                    let e1 = (-beta * z).exp();
                    let e2 = 0.5 * (-2.0 * beta * z).exp();
                    let e3 = (-3.0 * beta * z).exp();
                    acc.add(e2 * (be * a1.value() + al * b1.value()));
                    acc.add(-e3 / 6.0 * (be * a0.value() + al * b0.value()));
                    acc.add(al * be * e3 / 3.0);
                    a1.add(al * e1);
                    b1.add(be * e1);
                    a0.add(al);
                    b0.add(be);
                }
            }
            (KernelFamily::Dc { decay, rho }, _) => {
                // s < t: λ^{s/2} λ^{t/2} ρ^{t-s}, prefix sums carried forward by ρ^{gap}
                let (mut pa, mut pb) = (0.0_f64, 0.0_f64);
                let mut prev: Option<(f64, f64, f64)> = None;
                for &(z, al, be) in merged {
                    let half = decay.powf(0.5 * z);
                    if let Some((pz, pal, pbe)) = prev {
                        let ph = decay.powf(0.5 * pz);
                        let carry = rho.powi((z - pz) as i32);
                        pa = (pa + pal * ph) * carry;
                        pb = (pb + pbe * ph) * carry;
                    }
                    acc.add(half * (be * pa + al * pb));
                    acc.add(al * be * half * half);
                    prev = Some((z, al, be));
                }
            }
            (KernelFamily::Tabulated(_), _) => unreachable!("tabulated kernels use the dense path"),
        }
        acc.value()
    }

    /// Kernel whose values are `|k(s,t)|`, when that is again a closed form.
    fn abs_kernel(&self) -> Option<KernelDescriptor> {
        match self.family {
            KernelFamily::Dc { decay, rho } => Some(KernelDescriptor {
                family: KernelFamily::Dc {
                    decay,
                    rho: rho.abs(),
                },
                domain: self.domain,
            }),
            // TC, SS and non-negative constants are pointwise non-negative.
            KernelFamily::Tabulated(_) => None,
            _ => Some(self.clone()),
        }
    }

    /// Discrete: `Σ_{s,t ∈ [lo, hi]} |k(s,t)|` over integers.
    /// Continuous: `∫∫_{[lo,hi]²} |k|` by adaptive 2-D quadrature.
    /// Tabulated kernels contribute zero outside their grid.
    pub fn abs_block_mass(&self, lo: f64, hi: f64) -> f64 {
        if !(hi >= lo) {
            return 0.0;
        }
        let (lo, hi) = match &self.family {
            KernelFamily::Tabulated(table) => {
                let g0 = table.grid[0];
                let g1 = table.grid[table.grid.len() - 1];
                if hi < g0 || lo > g1 {
                    return 0.0;
                }
                (lo.max(g0), hi.min(g1))
            }
            _ => (lo, hi),
        };
        match self.domain {
            TimeDomain::Discrete => {
                let (lo, hi) = (lo.ceil(), hi.floor());
                if hi < lo {
                    return 0.0;
                }
                match self.abs_kernel() {
                    Some(abs) => {
                        let ones: Vec<(f64, f64)> =
                            (lo as i64..=hi as i64).map(|t| (1.0, t as f64)).collect();
                        abs.bilinear(&ones, &ones)
                    }
                    None => {
                        let mut acc = CompensatedSum::new();
                        for s in lo as i64..=hi as i64 {
                            for t in lo as i64..=hi as i64 {
                                acc.add(self.value(s as f64, t as f64).abs());
                            }
                        }
                        acc.value()
                    }
                }
            }
            TimeDomain::Continuous => {
                if hi <= lo {
                    return 0.0;
                }
                match self.family {
                    KernelFamily::Tc { .. }
                    | KernelFamily::Ss { .. }
                    | KernelFamily::Constant { .. } => {
                        // symmetric and non-negative: twice the mass below the diagonal
                        let q =
                            quadrature::integrate(|t| self.strip_mass(lo, t), lo, hi, &[], 1e-15);
                        2.0 * q.value
                    }
                    _ => {
                        quadrature::integrate_2d(
                            |s, t| self.value(s, t).abs(),
                            (lo, hi),
                            (lo, hi),
                            1e-10,
                            1e-300,
                        )
                        .value
                    }
                }
            }
        }
    }

    /// `∫∫_{[lo,hi]²} k` in continuous time.
    pub fn block_integral(&self, lo: f64, hi: f64) -> Result<quadrature::Quadrature> {
        if self.domain != TimeDomain::Continuous {
            return Err(Error::InvalidArgument(
                "block_integral needs a continuous-time kernel".into(),
            ));
        }
        Ok(match self.family {
            KernelFamily::Tc { .. } | KernelFamily::Ss { .. } | KernelFamily::Constant { .. } => {
                let q = quadrature::integrate(|t| self.strip_mass(lo, t), lo, hi, &[], 1e-15);
                quadrature::Quadrature {
                    value: 2.0 * q.value,
                    error: 2.0 * q.error,
                }
            }
            _ => quadrature::integrate_2d(|s, t| self.value(s, t), (lo, hi), (lo, hi), 1e-8, 1e-14),
        })
    }

    /// `∫_lo^t k(s, t) ds` for `lo ≤ t`, continuous TC, SS and constant kernels.
    fn strip_mass(&self, lo: f64, t: f64) -> f64 {
        let w = t - lo;
        match self.family {
            KernelFamily::Tc { beta } => w * (-beta * t).exp(),
            KernelFamily::Ss { beta } => {
                // ∫ e^{-β(s+2t)}/2 ds = e^{-β(lo+2t)} (1 - e^{-βw}) / (2β)
                (-beta * (lo + 2.0 * t)).exp() * -(-beta * w).exp_m1() / (2.0 * beta)
                    - w * (-3.0 * beta * t).exp() / 6.0
            }
            KernelFamily::Constant { value } => value * w,
            _ => unreachable!("strip_mass on a family without a closed form"),
        }
    }

    /// Tail mass beyond horizon `h`: `Σ_{s,t > h} |k(s,t)|` in discrete time
    /// (`∫∫_{(h,∞)²} |k|` in continuous time), evaluated by doubling a block
    /// until it stops growing. Errors if the block reaches `max_horizon`
    /// without settling.
    pub fn tail_mass(&self, h: f64, max_horizon: f64) -> Result<f64> {
        let start = match self.domain {
            TimeDomain::Discrete => h.floor() + 1.0,
            TimeDomain::Continuous => h,
        };
        if let KernelFamily::Tabulated(table) = &self.family {
            let end = table.grid[table.grid.len() - 1];
            return Ok(self.abs_block_mass(start, end));
        }
        let mut len = 16.0_f64;
        let mut prev = self.abs_block_mass(start, start + len);
        loop {
            len *= 2.0;
            if start + len > max_horizon {
                return Err(Error::DivergenceSuspected {
                    what: format!("tail mass beyond {h} did not settle"),
                    horizon: max_horizon,
                    last_value: prev,
                });
            }
            let next = self.abs_block_mass(start, start + len);
            if next - prev <= 1e-15 * next || next == 0.0 {
                return Ok(next);
            }
            prev = next;
        }
    }

    /// Smallest horizon `H ≥ from` (integer in discrete time, on a grid of
    /// spacing `step` in continuous time) with `tail_mass(H) < budget`.
    pub fn tail_horizon(&self, from: f64, budget: f64, max_horizon: f64) -> Result<f64> {
        if !(budget > 0.0) {
            return invalid("tail budget must be positive");
        }
        let step = 1.0;
        let mut lo = from;
        if self.tail_mass(lo, max_horizon)? < budget {
            return Ok(lo);
        }
        // doubling, then bisection on a unit grid
        let mut width = step;
        let mut hi = lo + width;
        while self.tail_mass(hi, max_horizon)? >= budget {
            lo = hi;
            width *= 2.0;
            hi = lo + width;
            if hi > max_horizon {
                return Err(Error::DivergenceSuspected {
                    what: "no truncation horizon meets the tail budget".into(),
                    horizon: max_horizon,
                    last_value: self.tail_mass(lo, max_horizon)?,
                });
            }
        }
        while hi - lo > step {
            let mid = lo + ((hi - lo) / (2.0 * step)).floor() * step;
            if self.tail_mass(mid, max_horizon)? < budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Absolute-summability measure: partial sums `S_H` over `[0, H]²` at
    /// dyadic horizons `H = 1, 2, 4, …` until one doubling changes the value
    /// by less than `tail_tol`.
    pub fn integrability_measure(
        &self,
        tail_tol: f64,
        max_horizon: f64,
    ) -> Result<IntegrabilityMeasure> {
        if !(tail_tol > 0.0) {
            return invalid("tail_tol must be positive");
        }
        let mut horizon = 1.0;
        let mut prev = self.abs_block_mass(0.0, horizon);
        let mut partial_sums = vec![(horizon, prev)];
        loop {
            let next_h = 2.0 * horizon;
            if next_h > max_horizon {
                return Err(Error::DivergenceSuspected {
                    what: format!("absolute kernel mass still growing at horizon {horizon}"),
                    horizon,
                    last_value: prev,
                });
            }
            let next = self.abs_block_mass(0.0, next_h);
            partial_sums.push((next_h, next));
            let change = next - prev;
            if change < tail_tol {
                return Ok(IntegrabilityMeasure {
                    value: next,
                    horizon: next_h,
                    last_change: change,
                    partial_sums,
                });
            }
            horizon = next_h;
            prev = next;
        }
    }

    /// Serializable description; `table` names the CSV file of a tabulated kernel.
    pub fn to_spec(&self, table: Option<&Path>) -> Result<KernelSpec> {
        let domain = self.domain;
        Ok(match &self.family {
            KernelFamily::Tc { beta } => KernelSpec::Tc {
                domain,
                beta: *beta,
            },
            KernelFamily::Dc { decay, rho } => KernelSpec::Dc {
                domain,
                decay: *decay,
                rho: *rho,
            },
            KernelFamily::Ss { beta } => KernelSpec::Ss {
                domain,
                beta: *beta,
            },
            KernelFamily::Constant { value } => KernelSpec::Constant {
                domain,
                value: *value,
            },
            KernelFamily::Tabulated(_) => KernelSpec::Tabulated {
                domain,
                table: table
                    .ok_or_else(|| {
                        Error::InvalidArgument("tabulated kernel needs a table path".into())
                    })?
                    .to_path_buf(),
            },
        })
    }
}

fn merge_atoms(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].1 < b[j].1);
        let take_b = i == a.len() || (j < b.len() && b[j].1 < a[i].1);
        if take_a {
            out.push((a[i].1, a[i].0, 0.0));
            i += 1;
        } else if take_b {
            out.push((b[j].1, 0.0, b[j].0));
            j += 1;
        } else {
            out.push((a[i].1, a[i].0, b[j].0));
            i += 1;
            j += 1;
        }
    }
    out
}

/// Kernel evaluations on an ordered point list.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub points: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.values)
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    /// `λ_min ≥ -PSD_TOL · trace`.
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL * self.trace().abs()
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Result of [`KernelDescriptor::integrability_measure`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityMeasure {
    pub value: f64,
    pub horizon: f64,
    pub last_change: f64,
    /// `(H, S_H)` for every horizon visited.
    pub partial_sums: Vec<(f64, f64)>,
}

/// Structured-text form of a kernel descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Tc {
        domain: TimeDomain,
        beta: f64,
    },
    Dc {
        domain: TimeDomain,
        decay: f64,
        rho: f64,
    },
    Ss {
        domain: TimeDomain,
        beta: f64,
    },
    Constant {
        domain: TimeDomain,
        value: f64,
    },
    Tabulated {
        domain: TimeDomain,
        table: PathBuf,
    },
}

impl KernelSpec {
    /// Builds the descriptor; relative table paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<KernelDescriptor> {
        match self {
            KernelSpec::Tc { domain, beta } => KernelDescriptor::tc(*domain, *beta),
            KernelSpec::Dc { domain, decay, rho } => KernelDescriptor::dc(*domain, *decay, *rho),
            KernelSpec::Ss { domain, beta } => KernelDescriptor::ss(*domain, *beta),
            KernelSpec::Constant { domain, value } => KernelDescriptor::constant(*domain, *value),
            KernelSpec::Tabulated { domain, table } => {
                let path = if table.is_absolute() {
                    table.clone()
                } else {
                    base_dir.join(table)
                };
                let file = std::fs::File::open(&path)?;
                KernelDescriptor::tabulated(*domain, KernelTable::read_csv(*domain, file)?)
            }
        }
    }
}

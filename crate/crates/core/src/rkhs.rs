//! Finite-atom elements `Σᵢ wᵢ k(·, cᵢ)` of the RKHS of a kernel, with inner
//! products given by the reproducing property, and the dyadic section
//! integrals / section sums built from them.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelDescriptor, KernelSpec, TimeDomain, DEFAULT_MAX_HORIZON};
use crate::numeric::{fmt_f64, CompensatedSum};

/// Largest dyadic level accepted by [`section_integral`].
pub const MAX_DYADIC_LEVEL: u32 = 26;

/// `Σᵢ wᵢ k(·, cᵢ)`. Atoms are kept sorted by center with duplicate centers
/// merged and exact-zero weights dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsElement {
    kernel: KernelDescriptor,
    atoms: Vec<(f64, f64)>,
}

impl RkhsElement {
    pub fn zero(kernel: &KernelDescriptor) -> Self {
        Self {
            kernel: kernel.clone(),
            atoms: Vec::new(),
        }
    }

    /// Builds an element from `(weight, center)` pairs.
    pub fn from_atoms<I>(kernel: &KernelDescriptor, atoms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(w, c) in &atoms {
            if !w.is_finite() {
                return invalid(format!("non-finite weight {w} at center {c}"));
            }
            kernel.check_time(c)?;
        }
        atoms.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(Self {
            kernel: kernel.clone(),
            atoms: coalesce(atoms),
        })
    }

    /// Atoms already validated, sorted and strictly increasing in center.
    pub(crate) fn from_sorted_unchecked(kernel: &KernelDescriptor, atoms: Vec<(f64, f64)>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0].1 < w[1].1));
        Self {
            kernel: kernel.clone(),
            atoms: atoms.into_iter().filter(|a| a.0 != 0.0).collect(),
        }
    }

    pub fn kernel(&self) -> &KernelDescriptor {
        &self.kernel
    }

    /// `(weight, center)` pairs, sorted by center.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let atoms = if alpha == 0.0 {
            Vec::new()
        } else {
            self.atoms.iter().map(|&(w, c)| (alpha * w, c)).collect()
        };
        Self {
            kernel: self.kernel.clone(),
            atoms,
        }
    }

    fn same_kernel(&self, other: &Self) -> Result<()> {
        if self.kernel != other.kernel {
            return invalid("elements belong to different kernels");
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.same_kernel(other)?;
        let mut out = Vec::with_capacity(self.atoms.len() + other.atoms.len());
        let (x, y) = (&self.atoms, &other.atoms);
        let (mut i, mut j) = (0, 0);
        while i < x.len() || j < y.len() {
            if j == y.len() || (i < x.len() && x[i].1 < y[j].1) {
                out.push((a * x[i].0, x[i].1));
                i += 1;
            } else if i == x.len() || y[j].1 < x[i].1 {
                out.push((b * y[j].0, y[j].1));
                j += 1;
            } else {
                out.push((a * x[i].0 + b * y[j].0, x[i].1));
                i += 1;
                j += 1;
            }
        }
        Ok(Self::from_sorted_unchecked(&self.kernel, out))
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    /// `Σᵢ Σⱼ w¹ᵢ w²ⱼ k(c¹ᵢ, c²ⱼ)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_kernel(other)?;
        Ok(self.kernel.bilinear(&self.atoms, &other.atoms))
    }

    /// `⟨e, e⟩`, which can come out slightly negative through round-off.
    pub fn norm_squared(&self) -> f64 {
        self.kernel.bilinear(&self.atoms, &self.atoms)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().max(0.0).sqrt()
    }

    /// Pointwise value `Σᵢ wᵢ k(t, cᵢ)`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.kernel.check_time(t)?;
        Ok(self.value_at(t))
    }

    #[inline]
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        let mut acc = CompensatedSum::new();
        for &(w, c) in &self.atoms {
            acc.add(w * self.kernel.value(t, c));
        }
        acc.value()
    }

    /// Writes `weight,center` CSV preceded by `#`-prefixed kernel lines.
    pub fn write_csv<W: Write>(&self, mut out: W, table: Option<&Path>) -> Result<()> {
        let spec = self.kernel.to_spec(table)?;
        let header = toml::to_string(&spec).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "weight,center")?;
        for &(w, c) in &self.atoms {
            writeln!(out, "{},{}", fmt_f64(w), fmt_f64(c))?;
        }
        Ok(())
    }

    /// Inverse of [`RkhsElement::write_csv`]; table paths resolve against `base_dir`.
    pub fn read_csv<R: BufRead>(input: R, base_dir: &Path) -> Result<Self> {
        let mut header = String::new();
        let mut body = String::new();
        let mut header_lines = 0;
        for line in input.lines() {
            let line = line?;
            if body.is_empty() {
                if let Some(rest) = line.strip_prefix('#') {
                    header.push_str(rest.strip_prefix(' ').unwrap_or(rest));
                    header.push('\n');
                    header_lines += 1;
                    continue;
                }
            }
            body.push_str(&line);
            body.push('\n');
        }
        let spec: KernelSpec = toml::from_str(&header).map_err(|e| Error::Parse {
            line: e.span().map(|s| header[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        let kernel = spec.build(base_dir)?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["weight", "center"] {
            return Err(Error::Parse {
                line: Some(header_lines + 1),
                message: "expected header `weight,center`".into(),
            });
        }
        let mut atoms = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize + header_lines);
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("field {} is not a number", i + 1),
                    })
            };
            atoms.push((field(0)?, field(1)?));
        }
        Self::from_atoms(&kernel, atoms)
    }
}

fn coalesce(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (w, c) in sorted {
        match out.last_mut() {
            Some(last) if last.1 == c => last.0 += w,
            _ => out.push((w, c)),
        }
    }
    out.retain(|a| a.0 != 0.0);
    out
}

/// The kernel section `k(·, t)`.
pub fn section(kernel: &KernelDescriptor, t: f64) -> Result<RkhsElement> {
    RkhsElement::from_atoms(kernel, [(1.0, t)])
}

/// Left-endpoint dyadic Riemann approximant of `∫_{[lo,hi]} k(·, t) dt`:
/// `2ⁿ` atoms at `lo + iΔₙ`, each of weight `Δₙ = 2⁻ⁿ (hi - lo)`.
pub fn section_integral(
    kernel: &KernelDescriptor,
    lo: f64,
    hi: f64,
    level: u32,
) -> Result<RkhsElement> {
    if kernel.domain() != TimeDomain::Continuous {
        return invalid("section_integral needs continuous time; use section_sum");
    }
    if !(lo < hi) || !hi.is_finite() {
        return invalid(format!(
            "section_integral needs lo < hi < ∞, got [{lo}, {hi}]"
        ));
    }
    if level > MAX_DYADIC_LEVEL {
        return invalid(format!("dyadic level {level} exceeds {MAX_DYADIC_LEVEL}"));
    }
    kernel.check_time(lo)?;
    kernel.check_time(hi)?;
    let count = 1usize << level;
    let delta = (hi - lo) / count as f64;
    let atoms = (0..count).map(|i| (delta, lo + i as f64 * delta)).collect();
    Ok(RkhsElement::from_sorted_unchecked(kernel, atoms))
}

/// Weighted dyadic approximant `Σᵢ aᵢ ∫_{Jᵢ} k(·, s) ds` of a step function
/// with pieces `(lo, hi, a)`, each piece split into `2ⁿ` cells.
pub(crate) fn step_integral(
    kernel: &KernelDescriptor,
    pieces: &[(f64, f64, f64)],
    level: u32,
) -> Result<RkhsElement> {
    let mut acc = RkhsElement::zero(kernel);
    for &(lo, hi, a) in pieces {
        if a == 0.0 {
            continue;
        }
        let part = section_integral(kernel, lo, hi, level)?;
        acc = acc.combine(1.0, &part, a)?;
    }
    Ok(acc)
}

/// `Σ_{lo ≤ t ≤ H} k(·, t)` in discrete time. With `hi = None` the upper limit
/// is the first horizon whose tail `Σ_{s,t>H} |k(s,t)|` is below `tail_tol²`.
pub fn section_sum(
    kernel: &KernelDescriptor,
    lo: f64,
    hi: Option<f64>,
    tail_tol: f64,
) -> Result<RkhsElement> {
    if kernel.domain() != TimeDomain::Discrete {
        return invalid("section_sum needs discrete time; use section_integral");
    }
    kernel.check_time(lo)?;
    let upper = match hi {
        Some(h) => {
            kernel.check_time(h)?;
            if h < lo {
                return invalid(format!("section_sum needs lo ≤ hi, got [{lo}, {h}]"));
            }
            h
        }
        None => {
            if !(tail_tol > 0.0) {
                return invalid("tail_tol must be positive");
            }
            kernel.tail_horizon(lo, tail_tol * tail_tol, DEFAULT_MAX_HORIZON)?
        }
    };
    for t in [lo, upper] {
        kernel.check_time(t)?;
    }
    let atoms = (lo as i64..=upper as i64)
        .map(|t| (1.0, t as f64))
        .collect();
    Ok(RkhsElement::from_sorted_unchecked(kernel, atoms))
}

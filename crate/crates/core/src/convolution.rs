//! The convolution functional `L_{u,τ}(g) = Σ_s g_s u_{τ-s}` (an integral in
//! continuous time) and its Riesz representer `φ_τ = Σ_s k(·,s) u_{τ-s}`.

use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelDescriptor, KernelFamily, TimeDomain, DEFAULT_MAX_HORIZON};
use crate::numeric::CompensatedSum;
use crate::quadrature::{self, Quadrature};
use crate::rkhs::{self, RkhsElement};
use crate::signal::Signal;

/// Cap on atoms in a continuous-time representer.
const MAX_CONTINUOUS_ATOMS: usize = 1 << 22;
const MAX_CONTINUOUS_ATOMS_DENSE: usize = 1 << 12;

/// The RKHS element representing `L_{u,τ}`, possibly truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct Representer {
    pub tau: f64,
    pub element: RkhsElement,
    /// Largest lag `s` carried by an atom.
    pub truncation_horizon: f64,
    /// RKHS-norm bound on what truncation (discrete) or dyadic refinement
    /// (continuous) left out.
    pub tail_bound: f64,
    /// Dyadic level used for continuous-time representers.
    pub level: Option<u32>,
}

impl Representer {
    /// `‖φ_τ‖`, the norm of the functional on the RKHS.
    pub fn operator_norm(&self) -> f64 {
        self.element.norm()
    }
}

pub fn operator_norm(phi: &Representer) -> f64 {
    phi.operator_norm()
}

fn check_domains(u: &Signal, kernel: &KernelDescriptor, tau: f64) -> Result<()> {
    if u.domain() != kernel.domain() {
        return invalid(format!(
            "{} signal used with a {}-time kernel",
            u.domain().name(),
            kernel.domain().name()
        ));
    }
    kernel.domain().check(tau)
}

/// `L_{u,τ}(g)`.
pub fn apply_l(u: &Signal, tau: f64, g: &RkhsElement) -> Result<f64> {
    Ok(apply_l_with_error(u, tau, g)?.value)
}

/// `L_{u,τ}(g)` with an error estimate (zero for discrete sums).
pub fn apply_l_with_error(u: &Signal, tau: f64, g: &RkhsElement) -> Result<Quadrature> {
    check_domains(u, g.kernel(), tau)?;
    if g.is_empty() {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    match u.domain() {
        TimeDomain::Discrete => {
            let Some((start, end)) = u.index_range() else {
                return Ok(Quadrature {
                    value: 0.0,
                    error: 0.0,
                });
            };
            let tau_i = tau as i64;
            let s_lo = (tau_i - end).max(0);
            let s_hi = tau_i - start;
            let mut acc = CompensatedSum::new();
            for s in s_lo..=s_hi {
                let v = u.value_at((tau_i - s) as f64);
                if v != 0.0 {
                    acc.add(g.evaluate(s as f64)? * v);
                }
            }
            Ok(Quadrature {
                value: acc.value(),
                error: 0.0,
            })
        }
        TimeDomain::Continuous => {
            let breaks: Vec<f64> = g.atoms().iter().map(|a| a.1).collect();
            let scale: f64 = g.atoms().iter().map(|a| a.0.abs()).sum::<f64>().max(1e-300);
            let mut value = CompensatedSum::new();
            let mut error = 0.0;
            for (lo, hi, a) in u.reflected_pieces(tau) {
                g.kernel().check_time(hi)?;
                let q = quadrature::integrate(
                    |s| g.value_at(s),
                    lo,
                    hi,
                    &breaks,
                    1e-13 * scale * (hi - lo).max(1.0),
                );
                value.add(a * q.value);
                error += a.abs() * q.error;
            }
            Ok(Quadrature {
                value: value.value(),
                error,
            })
        }
    }
}

/// Truncation horizon `H` for discrete-time representers: the smallest `H`
/// with `‖u‖²_∞ Σ_{s,t>H} |k(s,t)| < tail_tol²`.
pub fn truncation_horizon(kernel: &KernelDescriptor, u: &Signal, tail_tol: f64) -> Result<f64> {
    if !(tail_tol > 0.0) {
        return invalid("tail_tol must be positive");
    }
    let norm = u.sup_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    kernel.tail_horizon(0.0, (tail_tol / norm).powi(2), DEFAULT_MAX_HORIZON)
}

/// `φ_τ` with `L_{u,τ}(g) = ⟨φ_τ, g⟩`.
///
/// Discrete time: `Σ_{s ≤ H} k(·,s) u_{τ-s}` truncated at the tail horizon.
/// Continuous time: dyadic Riemann approximant of `∫ k(·,s) u_{τ-s} ds`
/// refined until successive levels differ by at most `tail_tol / 2` in norm.
pub fn representer_phi(
    kernel: &KernelDescriptor,
    u: &Signal,
    tau: f64,
    tail_tol: f64,
) -> Result<Representer> {
    check_domains(u, kernel, tau)?;
    match kernel.domain() {
        TimeDomain::Discrete => {
            let horizon = truncation_horizon(kernel, u, tail_tol)?;
            discrete_representer(kernel, u, tau, horizon)
        }
        TimeDomain::Continuous => continuous_representer(kernel, u, tau, tail_tol),
    }
}

/// Discrete representer truncated at a precomputed horizon.
pub(crate) fn discrete_representer(
    kernel: &KernelDescriptor,
    u: &Signal,
    tau: f64,
    horizon: f64,
) -> Result<Representer> {
    let zero = |h: f64| Representer {
        tau,
        element: RkhsElement::zero(kernel),
        truncation_horizon: h,
        tail_bound: 0.0,
        level: None,
    };
    let Some((start, end)) = u.index_range() else {
        return Ok(zero(0.0));
    };
    if u.sup_norm() == 0.0 {
        return Ok(zero(0.0));
    }
    let tau_i = tau as i64;
    let s_max = tau_i - start;
    if s_max < 0 {
        return Ok(zero(0.0));
    }
    let s_min = (tau_i - end).max(0);
    let h = (horizon as i64).min(s_max);
    let tail_bound = if h < s_max {
        u.sup_norm() * kernel.tail_mass(h as f64, DEFAULT_MAX_HORIZON)?.sqrt()
    } else {
        0.0
    };
    let atoms = (s_min..=h)
        .map(|s| (u.value_at((tau_i - s) as f64), s as f64))
        .filter(|a| a.0 != 0.0);
    Ok(Representer {
        tau,
        element: RkhsElement::from_atoms(kernel, atoms)?,
        truncation_horizon: h.max(0) as f64,
        tail_bound,
        level: None,
    })
}

fn continuous_representer(
    kernel: &KernelDescriptor,
    u: &Signal,
    tau: f64,
    tail_tol: f64,
) -> Result<Representer> {
    if !(tail_tol > 0.0) {
        return invalid("tail_tol must be positive");
    }
    let pieces = u.reflected_pieces(tau);
    if pieces.is_empty() {
        return Ok(Representer {
            tau,
            element: RkhsElement::zero(kernel),
            truncation_horizon: 0.0,
            tail_bound: 0.0,
            level: Some(0),
        });
    }
    let horizon = pieces.iter().fold(0.0_f64, |m, p| m.max(p.1));
    let cap = match kernel.family() {
        KernelFamily::Tabulated(_) => MAX_CONTINUOUS_ATOMS_DENSE,
        _ => MAX_CONTINUOUS_ATOMS,
    };
    let mut level = 0;
    let mut current = rkhs::step_integral(kernel, &pieces, level)?;
    loop {
        let atoms_next = pieces.len() << (level + 1);
        if atoms_next > cap {
            return Err(Error::DivergenceSuspected {
                what: "dyadic refinement of the representer did not reach tail_tol".into(),
                horizon,
                last_value: level as f64,
            });
        }
        let next = rkhs::step_integral(kernel, &pieces, level + 1)?;
        let gap = next.checked_sub(&current)?.norm();
        if gap <= 0.5 * tail_tol {
            return Ok(Representer {
                tau,
                element: next,
                truncation_horizon: horizon,
                tail_bound: gap,
                level: Some(level + 1),
            });
        }
        current = next;
        level += 1;
    }
}

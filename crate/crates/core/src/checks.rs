//! Numerical checks of integrability, stability, Cauchy refinements,
//! continuity and the Fubini identity, each returning a [`CheckReport`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convolution::{apply_l, representer_phi};
use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelDescriptor, KernelFamily, TimeDomain, DEFAULT_MAX_HORIZON};
use crate::numeric::{csum, fmt_f64};
use crate::quadrature::integrate_iterated;
use crate::rkhs::{section, section_integral, RkhsElement};
use crate::signal::Signal;
use crate::sim::{make_input, InputKind, InputParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// `value ≤ bound`; NaN never holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub label: String,
    pub value: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn new(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            bound,
        }
    }

    pub fn holds(&self) -> bool {
        self.value <= self.bound
    }

    pub fn margin(&self) -> f64 {
        if self.value.is_nan() || self.bound.is_nan() {
            f64::NEG_INFINITY
        } else {
            self.bound - self.value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub verdict: Verdict,
    pub parameters: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub bounds: Vec<BoundCheck>,
    pub observed: Vec<Observation>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::Fail,
            parameters: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            notes: Vec::new(),
            bounds: Vec::new(),
            observed: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    fn tol(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.into(), value);
        self
    }

    fn observe(&mut self, label: &str, values: Vec<f64>) {
        self.observed.push(Observation {
            label: label.into(),
            values,
        });
    }

    fn bound(&mut self, label: &str, value: f64, bound: f64) {
        self.bounds.push(BoundCheck::new(label, value, bound));
    }

    /// Verdict is pass iff there is at least one bound and all of them hold.
    fn finish(mut self) -> Self {
        self.verdict = if !self.bounds.is_empty() && self.bounds.iter().all(BoundCheck::holds) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// `min(bound - value)` over all bounds.
    pub fn worst_margin(&self) -> f64 {
        self.bounds
            .iter()
            .map(BoundCheck::margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// First 16 hex digits of SHA-256 over the name, parameters and tolerances.
    pub fn parameter_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        for (k, v) in &self.parameters {
            h.update(format!("\n{k}={v}").as_bytes());
        }
        for (k, v) in &self.tolerances {
            h.update(format!("\n{k}={}", fmt_f64(*v)).as_bytes());
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn kernel_label(k: &KernelDescriptor) -> String {
    match k.family() {
        KernelFamily::Tc { beta } => format!("tc(beta={})", fmt_f64(*beta)),
        KernelFamily::Dc { decay, rho } => {
            format!("dc(decay={},rho={})", fmt_f64(*decay), fmt_f64(*rho))
        }
        KernelFamily::Ss { beta } => format!("ss(beta={})", fmt_f64(*beta)),
        KernelFamily::Constant { value } => format!("constant(value={})", fmt_f64(*value)),
        KernelFamily::Tabulated(t) => format!("tabulated(points={})", t.grid().len()),
    }
}

fn base(name: &str, k: &KernelDescriptor) -> CheckReport {
    let mut r = CheckReport::new(name)
        .param("kernel", kernel_label(k))
        .param("domain", k.domain().name());
    if k.family_name() == "tabulated" && k.domain() == TimeDomain::Continuous {
        r.notes
            .push("continuity of the tabulated kernel is assumed, not checked".into());
    }
    r
}

fn signal_label(u: &Signal) -> String {
    let mut h = Sha256::new();
    match u {
        Signal::Discrete { start, values, .. } => {
            h.update(start.to_le_bytes());
            values.iter().for_each(|v| h.update(v.to_le_bytes()));
        }
        Signal::Continuous { knots, values, .. } => {
            knots
                .iter()
                .chain(values)
                .for_each(|v| h.update(v.to_le_bytes()));
        }
    }
    let digest: String = h
        .finalize()
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect();
    format!("{}:{digest}", u.domain().name())
}

/// Absolute summability of the kernel; divergence is a fail verdict.
pub fn check_integrability(
    k: &KernelDescriptor,
    tail_tol: f64,
    max_horizon: f64,
) -> Result<CheckReport> {
    let mut r = base("integrability", k)
        .param("max_horizon", fmt_f64(max_horizon))
        .tol("tail_tol", tail_tol);
    match k.integrability_measure(tail_tol, max_horizon) {
        Ok(m) => {
            r.observe("horizons", m.partial_sums.iter().map(|p| p.0).collect());
            r.observe("partial_sums", m.partial_sums.iter().map(|p| p.1).collect());
            r.observe("measure", vec![m.value]);
            r.bound("last_doubling_change", m.last_change, tail_tol);
        }
        Err(Error::DivergenceSuspected {
            what,
            horizon,
            last_value,
        }) => {
            r.observe("last_partial_sum", vec![last_value]);
            r.observe("horizon", vec![horizon]);
            r.notes.push(format!("divergence suspected: {what}"));
            r.bound("converged", f64::INFINITY, tail_tol);
        }
        Err(e) => return Err(e),
    }
    Ok(r.finish())
}

/// `u_s = sign(Σ_{t ≤ horizon} k(t,s))` on `[0, horizon]`.
pub fn sign_probe(k: &KernelDescriptor, horizon: usize) -> Result<Signal> {
    if k.domain() != TimeDomain::Discrete {
        return invalid("stability probes are discrete-time");
    }
    let ones: Vec<(f64, f64)> = (0..=horizon).map(|t| (1.0, t as f64)).collect();
    let col = RkhsElement::from_atoms(k, ones)?;
    let values = (0..=horizon)
        .map(|s| {
            let v = col.value_at(s as f64);
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Signal::discrete(0, values)
}

/// Partial sums of `Σ_t |Σ_s u_s k(t,s)|` up to `horizon` for each probe.
///
/// A pass is evidence only: stability quantifies over every bounded input.
pub fn check_stability_probe(
    k: &KernelDescriptor,
    inputs: &[Signal],
    horizon: usize,
    tol: f64,
) -> Result<CheckReport> {
    if k.domain() != TimeDomain::Discrete {
        return invalid("stability probe is implemented for discrete-time kernels");
    }
    if horizon < 2 {
        return invalid("probe horizon must be at least 2");
    }
    let mut r = base("stability_probe", k)
        .param("horizon", horizon)
        .param("probes", inputs.len())
        .tol("tol", tol);
    r.notes
        .push("evidence only: finitely many probe inputs cannot establish stability".into());
    let measure = k
        .integrability_measure(tol.max(1e-12), DEFAULT_MAX_HORIZON)
        .ok();
    for (i, u) in inputs.iter().enumerate() {
        if u.domain() != TimeDomain::Discrete {
            return invalid("probe inputs must be discrete-time");
        }
        let atoms: Vec<(f64, f64)> = match u.index_range() {
            Some((a, b)) => (a.max(0)..=b)
                .map(|s| (u.value_at(s as f64), s as f64))
                .filter(|p| p.0 != 0.0)
                .collect(),
            None => Vec::new(),
        };
        for &(_, s) in &atoms {
            k.check_time(s)?;
        }
        let v = RkhsElement::from_atoms(k, atoms)?;
        let abs: Vec<f64> = (0..=horizon).map(|t| v.value_at(t as f64).abs()).collect();
        let mut checkpoints = Vec::new();
        let mut sums = Vec::new();
        let mut h = 1;
        loop {
            let h_eff = h.min(horizon);
            checkpoints.push(h_eff as f64);
            sums.push(csum(abs[..=h_eff].iter().copied()));
            if h_eff == horizon {
                break;
            }
            h *= 2;
        }
        let n = sums.len();
        let change = sums[n - 1] - sums[n - 2];
        let label = format!("probe{i}");
        r.observe(&format!("{label}_horizons"), checkpoints);
        r.observe(&format!("{label}_partial_sums"), sums.clone());
        r.bound(&format!("{label}_last_change"), change, tol);
        if let Some(m) = &measure {
            r.bound(
                &format!("{label}_vs_integrability"),
                sums[n - 1],
                u.sup_norm() * m.value * (1.0 + 1e-10),
            );
        }
    }
    if inputs.is_empty() {
        r.notes.push("no probe inputs".into());
    }
    Ok(r.finish())
}

/// Refinement gaps `d_n = ‖f_{n+1} - f_n‖` of the dyadic approximants of
/// `∫_{[lo,hi]} k(·,t) dt` and the gap between `‖f_{n_max}‖²` and a 2-D
/// quadrature of `∫∫ k`.
pub fn check_dyadic_cauchy(
    k: &KernelDescriptor,
    lo: f64,
    hi: f64,
    n_max: u32,
    tol: f64,
) -> Result<CheckReport> {
    if k.domain() != TimeDomain::Continuous {
        return invalid("dyadic refinement check needs a continuous-time kernel");
    }
    if !(lo < hi) {
        return invalid(format!("need lo < hi, got [{lo}, {hi}]"));
    }
    let mut r = base("dyadic_cauchy", k)
        .param("lo", fmt_f64(lo))
        .param("hi", fmt_f64(hi))
        .param("n_max", n_max)
        .tol("gap_tol", tol)
        .tol("quadrature_rel_tol", 1e-8);
    r.notes.push(
        "observes Cauchy decay of the refinements only; no uniform-continuity modulus is estimated"
            .into(),
    );
    let mut prev = section_integral(k, lo, hi, 0)?;
    let mut gaps = Vec::new();
    let mut norms = Vec::new();
    for n in 0..=n_max {
        norms.push(prev.norm_squared());
        let next = section_integral(k, lo, hi, n + 1)?;
        gaps.push(next.checked_sub(&prev)?.norm());
        prev = next;
    }
    let quad = k.block_integral(lo, hi)?;
    let identity_gap = (norms[n_max as usize] - quad.value).abs();
    r.observe("d_n", gaps.clone());
    r.observe("norm_squared_f_n", norms);
    r.observe("double_integral", vec![quad.value, quad.error]);
    r.bound("d_n_max", gaps[n_max as usize], tol);
    r.bound("norm_identity_gap", identity_gap, tol);
    Ok(r.finish())
}

/// Gaps `‖f_n - f_m‖` of the partial sums `f_n = Σ_{s ≤ n} k(·,s) u_{τ-s}`
/// against `‖u‖_∞ (Σ_{s,t > m} |k(s,t)|)^{1/2}`.
pub fn check_partial_sum_cauchy(
    k: &KernelDescriptor,
    u: &Signal,
    tau: f64,
    ladder: &[(u64, u64)],
) -> Result<CheckReport> {
    if k.domain() != TimeDomain::Discrete || u.domain() != TimeDomain::Discrete {
        return invalid("partial-sum check needs a discrete-time kernel and input");
    }
    k.domain().check(tau)?;
    let mut r = base("partial_sum_cauchy", k)
        .param("input", signal_label(u))
        .param("tau", fmt_f64(tau))
        .param(
            "ladder",
            ladder
                .iter()
                .map(|(m, n)| format!("{m}:{n}"))
                .collect::<Vec<_>>()
                .join(","),
        )
        .tol("relative_slack", 1e-8);
    let (mut gaps, mut bounds) = (Vec::new(), Vec::new());
    for &(m, n) in ladder {
        if n < m {
            return invalid(format!("ladder rung ({m}, {n}) needs m ≤ n"));
        }
        let atoms: Vec<(f64, f64)> = (m + 1..=n)
            .map(|s| (u.value_at(tau - s as f64), s as f64))
            .filter(|p| p.0 != 0.0)
            .collect();
        for &(_, s) in &atoms {
            k.check_time(s)?;
        }
        let d = RkhsElement::from_atoms(k, atoms)?.norm();
        let bound = u.sup_norm() * k.tail_mass(m as f64, DEFAULT_MAX_HORIZON)?.sqrt();
        r.bound(&format!("gap_{m}_{n}"), d, bound * (1.0 + 1e-8));
        gaps.push(d);
        bounds.push(bound);
    }
    r.observe("gaps", gaps);
    r.observe("bounds", bounds);
    Ok(r.finish())
}

fn random_element(k: &KernelDescriptor, rng: &mut ChaCha8Rng, span: f64) -> Result<RkhsElement> {
    let n = rng.gen_range(1..=8);
    let atoms: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            let c = match k.domain() {
                TimeDomain::Discrete => rng.gen_range(0..=span as u64) as f64,
                TimeDomain::Continuous => rng.gen_range(0.0..=span),
            };
            (w, c)
        })
        .collect();
    RkhsElement::from_atoms(k, atoms)
}

/// Samples random finite-atom `g` and checks `|L(g)| ≤ (‖φ‖ + tail)·‖g‖` and
/// `|L(g) - ⟨φ, g⟩| ≤ tail_tol·‖g‖`.
pub fn check_continuity_certificate(
    k: &KernelDescriptor,
    u: &Signal,
    tau: f64,
    trial_count: usize,
    seed: u64,
    tail_tol: f64,
) -> Result<CheckReport> {
    let phi = representer_phi(k, u, tau, tail_tol)?;
    let mut r = base("continuity_certificate", k)
        .param("input", signal_label(u))
        .param("tau", fmt_f64(tau))
        .param("trials", trial_count)
        .param("seed", seed)
        .tol("tail_tol", tail_tol)
        .tol("relative_slack", 1e-10)
        .tol("absolute_slack", 1e-10);
    let span = match k.family() {
        KernelFamily::Tabulated(t) => t.grid()[t.grid().len() - 1],
        _ => 2.0 * tau.max(1.0) + 10.0,
    };
    let op = phi.operator_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_norm: Option<BoundCheck> = None;
    let mut worst_dual: Option<BoundCheck> = None;
    let mut violations = 0usize;
    for trial in 0..trial_count {
        // the first trial is the Cauchy–Schwarz extremal direction when it exists
        let g = if trial == 0
            && k.check_time(tau).is_ok()
            && u.sup_norm() > 0.0
            && !phi.element.is_empty()
        {
            phi.element.clone()
        } else if trial == 1 && k.check_time(tau).is_ok() {
            section(k, tau)?
        } else {
            random_element(k, &mut rng, span)?
        };
        let gn = g.norm();
        let l = apply_l(u, tau, &g)?;
        let dual = phi.element.inner(&g)?;
        let a = BoundCheck::new(
            "operator_bound",
            l.abs(),
            (op + phi.tail_bound) * gn * (1.0 + 1e-10),
        );
        let b = BoundCheck::new("duality_gap", (l - dual).abs(), tail_tol * gn + 1e-10);
        violations += usize::from(!a.holds()) + usize::from(!b.holds());
        if worst_norm.as_ref().is_none_or(|w| a.margin() < w.margin()) {
            worst_norm = Some(a);
        }
        if worst_dual.as_ref().is_none_or(|w| b.margin() < w.margin()) {
            worst_dual = Some(b);
        }
    }
    r.observe("operator_norm", vec![op]);
    r.observe("tail_bound", vec![phi.tail_bound]);
    r.observe("violations", vec![violations as f64]);
    r.bounds.extend(worst_norm);
    r.bounds.extend(worst_dual);
    Ok(r.finish())
}

/// `⟨∫_{B1} k(·,t)dt, ∫_{B2} k(·,s)ds⟩` from dyadic approximants against both
/// iterated integrals of `k` over `B1 × B2`.
pub fn check_fubini(
    k: &KernelDescriptor,
    box1: (f64, f64),
    box2: (f64, f64),
    level: u32,
    tol: f64,
) -> Result<CheckReport> {
    if k.domain() != TimeDomain::Continuous {
        return invalid("Fubini check needs a continuous-time kernel");
    }
    let mut r = base("fubini", k)
        .param("box1", format!("{}:{}", fmt_f64(box1.0), fmt_f64(box1.1)))
        .param("box2", format!("{}:{}", fmt_f64(box2.0), fmt_f64(box2.1)))
        .param("level", level)
        .tol("gap_tol", tol)
        .tol("order_tol", 1e-10);
    let a = section_integral(k, box1.0, box1.1, level)?;
    let b = section_integral(k, box2.0, box2.1, level)?;
    let ip = a.inner(&b)?;
    let ip_swapped = b.inner(&a)?;
    let q_ts = integrate_iterated(|t, s| k.value(t, s), box1, box2, 1e-13);
    let q_st = integrate_iterated(|s, t| k.value(t, s), box2, box1, 1e-13);
    r.observe("inner_product", vec![ip, ip_swapped]);
    r.observe("iterated_integrals", vec![q_ts.value, q_st.value]);
    r.bound("inner_vs_ts", (ip - q_ts.value).abs(), tol);
    r.bound("inner_vs_st", (ip - q_st.value).abs(), tol);
    r.bound("order_agreement", (q_ts.value - q_st.value).abs(), 1e-10);
    r.bound(
        "swap_symmetry",
        (ip - ip_swapped).abs(),
        1e-12 * ip.abs().max(1.0),
    );
    Ok(r.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Integrability,
    StabilityProbe,
    DyadicCauchy,
    PartialSumCauchy,
    ContinuityCertificate,
    Fubini,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Integrability,
        CheckKind::StabilityProbe,
        CheckKind::DyadicCauchy,
        CheckKind::PartialSumCauchy,
        CheckKind::ContinuityCertificate,
        CheckKind::Fubini,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Integrability => "integrability",
            CheckKind::StabilityProbe => "stability_probe",
            CheckKind::DyadicCauchy => "dyadic_cauchy",
            CheckKind::PartialSumCauchy => "partial_sum_cauchy",
            CheckKind::ContinuityCertificate => "continuity_certificate",
            CheckKind::Fubini => "fubini",
        }
    }

    /// The full suite for a time domain.
    pub fn suite(domain: TimeDomain) -> Vec<CheckKind> {
        match domain {
            TimeDomain::Discrete => vec![
                CheckKind::Integrability,
                CheckKind::StabilityProbe,
                CheckKind::PartialSumCauchy,
                CheckKind::ContinuityCertificate,
            ],
            TimeDomain::Continuous => vec![
                CheckKind::Integrability,
                CheckKind::DyadicCauchy,
                CheckKind::ContinuityCertificate,
                CheckKind::Fubini,
            ],
        }
    }
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check `{s}`")))
    }
}

/// Parameters for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    /// Empty means the full suite for the kernel's domain.
    pub checks: Vec<CheckKind>,
    pub tail_tol: f64,
    /// Representer tolerance for the continuity check; defaults to 1e-8 in
    /// discrete time and 1e-3 in continuous time.
    pub representer_tol: Option<f64>,
    pub max_horizon: f64,
    pub probe_horizon: usize,
    pub probe_tol: f64,
    pub interval: (f64, f64),
    pub second_box: (f64, f64),
    pub n_max: u32,
    pub gap_tol: f64,
    pub tau: Option<f64>,
    pub ladder: Vec<(u64, u64)>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            tail_tol: 1e-6,
            representer_tol: None,
            max_horizon: 1e5,
            probe_horizon: 512,
            probe_tol: 1e-6,
            interval: (0.0, 1.0),
            second_box: (1.5, 2.5),
            n_max: 14,
            gap_tol: 1e-4,
            tau: None,
            ladder: vec![(4, 8), (8, 16), (16, 32), (32, 64)],
            trials: 1000,
            seed: 0,
        }
    }
}

/// Default random input: ±1 PRBS on `[0, 63]`, or 8 random segments of width
/// 1/4 in continuous time.
pub fn default_probe_input(domain: TimeDomain, seed: u64) -> Result<Signal> {
    match domain {
        TimeDomain::Discrete => make_input(
            InputKind::Prbs,
            &InputParams {
                length: 64,
                ..Default::default()
            },
            seed,
        ),
        TimeDomain::Continuous => make_input(
            InputKind::UniformRandom,
            &InputParams {
                domain,
                length: 8,
                dt: 0.25,
                ..Default::default()
            },
            seed,
        ),
    }
}

/// Runs the requested checks; reports are ordered by check name. A check
/// that hits a divergent tail yields a failed report instead of an error.
pub fn run_suite(
    k: &KernelDescriptor,
    cfg: &SuiteConfig,
    input: Option<&Signal>,
) -> Result<Vec<CheckReport>> {
    let mut kinds = if cfg.checks.is_empty() {
        CheckKind::suite(k.domain())
    } else {
        cfg.checks.clone()
    };
    kinds.sort_by_key(|c| c.name());
    kinds.dedup();
    let default_input;
    let u = match input {
        Some(u) => u,
        None => {
            default_input = default_probe_input(k.domain(), cfg.seed)?;
            &default_input
        }
    };
    let tau = cfg.tau.unwrap_or(match k.domain() {
        TimeDomain::Discrete => 40.0,
        TimeDomain::Continuous => 2.0,
    });
    kinds
        .into_iter()
        .map(|kind| {
            let report = match kind {
                CheckKind::Integrability => check_integrability(k, cfg.tail_tol, cfg.max_horizon),
                CheckKind::StabilityProbe => {
                    let h = cfg.probe_horizon;
                    let probes = vec![
                        Signal::discrete(0, vec![1.0; h + 1])?,
                        sign_probe(k, h)?,
                        Signal::zero(TimeDomain::Discrete),
                    ];
                    check_stability_probe(k, &probes, h, cfg.probe_tol)
                }
                CheckKind::DyadicCauchy => {
                    check_dyadic_cauchy(k, cfg.interval.0, cfg.interval.1, cfg.n_max, cfg.gap_tol)
                }
                CheckKind::PartialSumCauchy => check_partial_sum_cauchy(k, u, tau, &cfg.ladder),
                CheckKind::ContinuityCertificate => {
                    let tol = cfg.representer_tol.unwrap_or(match k.domain() {
                        TimeDomain::Discrete => 1e-8,
                        TimeDomain::Continuous => 1e-3,
                    });
                    check_continuity_certificate(k, u, tau, cfg.trials, cfg.seed, tol)
                }
                CheckKind::Fubini => {
                    check_fubini(k, cfg.interval, cfg.second_box, cfg.n_max, cfg.gap_tol)
                }
            };
            match report {
                Err(Error::DivergenceSuspected {
                    what,
                    horizon,
                    last_value,
                }) => {
                    let mut r = base(kind.name(), k).param("seed", cfg.seed);
                    r.notes.push(format!("divergence suspected: {what}"));
                    r.observe("horizon", vec![horizon]);
                    r.observe("last_value", vec![last_value]);
                    r.bound("converged", f64::INFINITY, cfg.tail_tol);
                    Ok(r.finish())
                }
                other => other,
            }
        })
        .collect()
}

/// CSV `check,parameter_hash,verdict,worst_margin`.
pub fn write_reports_csv<W: Write>(reports: &[CheckReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "parameter_hash", "verdict", "worst_margin"])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.parameter_hash(),
            r.verdict.to_string(),
            fmt_f64(r.worst_margin()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    report: Vec<CheckReport>,
}

/// Full reports as TOML (`[[report]]` tables).
pub fn reports_to_toml(reports: &[CheckReport]) -> Result<String> {
    toml::to_string(&ReportFile {
        report: reports.to_vec(),
    })
    .map_err(|e| Error::InvalidArgument(format!("cannot serialize reports: {e}")))
}

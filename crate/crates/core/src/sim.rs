//! Ground-truth LTI systems, noisy datasets and test inputs.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::Dataset;
use crate::kernel::TimeDomain;
use crate::numeric::{csum, CompensatedSum};
use crate::signal::Signal;

/// Longest impulse response materialized for a rational system.
const MAX_RATIONAL_LEN: usize = 1 << 20;

/// A BIBO-stable single-input single-output LTI system.
#[derive(Debug, Clone, PartialEq)]
pub enum LtiSystem {
    /// `G(z) = Σ bⱼ z⁻ʲ / Σ aⱼ z⁻ʲ`, with its impulse response cached up to
    /// the point where the remaining tail is negligible.
    Rational {
        num: Vec<f64>,
        den: Vec<f64>,
        impulse: Vec<f64>,
        tail: GeometricTail,
    },
    /// `g_t = values[t]` for `t < len`, and `|g_t| ≤ C·rᵗ` beyond.
    Table {
        values: Vec<f64>,
        tail: GeometricTail,
    },
    /// Continuous-time `g(t) = Σ cₖ e^{-pₖ t}` with every `pₖ > 0`.
    Exponentials { terms: Vec<(f64, f64)> },
}

/// `|g_t| ≤ constant · rateᵗ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricTail {
    pub constant: f64,
    pub rate: f64,
}

impl GeometricTail {
    pub fn new(constant: f64, rate: f64) -> Result<Self> {
        if !(constant >= 0.0 && constant.is_finite()) {
            return invalid(format!(
                "tail constant {constant} must be finite and non-negative"
            ));
        }
        if !(rate > 0.0 && rate < 1.0) {
            return invalid(format!("tail rate {rate} must lie in (0, 1)"));
        }
        Ok(Self { constant, rate })
    }

    /// `Σ_{t ≥ from} C rᵗ`.
    pub fn sum_from(&self, from: usize) -> f64 {
        self.constant * self.rate.powf(from as f64) / (1.0 - self.rate)
    }
}

/// Numerical BIBO evidence: `Σ_{t<horizon} |g_t|` plus a bound on the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiboCertificate {
    pub l1_partial: f64,
    pub horizon: f64,
    pub tail_bound: f64,
}

impl BiboCertificate {
    pub fn l1_bound(&self) -> f64 {
        self.l1_partial + self.tail_bound
    }
}

/// Largest root modulus of `a₀zⁿ + a₁zⁿ⁻¹ + … + aₙ`.
fn spectral_radius(den: &[f64]) -> f64 {
    let n = den.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -den[j + 1] / den[0];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, z| m.max(z.norm()))
}

impl LtiSystem {
    /// Rational transfer function; every pole must lie strictly inside the unit circle.
    pub fn rational(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return invalid("numerator and denominator must be non-empty");
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return invalid("transfer-function coefficients must be finite");
        }
        if den[0] == 0.0 {
            return invalid("leading denominator coefficient must be nonzero");
        }
        let mut den = den;
        while den.len() > 1 && den[den.len() - 1] == 0.0 {
            den.pop();
        }
        let radius = spectral_radius(&den);
        if !(radius < 1.0) {
            return invalid(format!("unstable system: pole modulus {radius} ≥ 1"));
        }
        let rate = (0.5 * (1.0 + radius)).max(0.5);
        // envelope window long enough for polynomial factors of repeated poles to peak
        let window = (200.0 + 80.0 / -rate.ln()).min(MAX_RATIONAL_LEN as f64) as usize
            + num.len()
            + den.len();
        let recur = |len: usize| -> Vec<f64> {
            let mut g = vec![0.0; len];
            for t in 0..len {
                let mut acc = CompensatedSum::new();
                if t < num.len() {
                    acc.add(num[t]);
                }
                for j in 1..den.len().min(t + 1) {
                    acc.add(-den[j] * g[t - j]);
                }
                g[t] = acc.value() / den[0];
            }
            g
        };
        let g = recur(window);
        let constant = g
            .iter()
            .enumerate()
            .fold(0.0_f64, |m, (t, v)| m.max(v.abs() / rate.powf(t as f64)));
        let tail = GeometricTail::new(constant, rate)?;
        let l1 = csum(g.iter().map(|v| v.abs()));
        let mut len = num.len().max(1);
        while len < window && tail.sum_from(len) > 1e-17 * l1.max(f64::MIN_POSITIVE) {
            len += 1;
        }
        let mut impulse = g;
        impulse.truncate(len);
        Ok(LtiSystem::Rational {
            num,
            den,
            impulse,
            tail,
        })
    }

    /// `g_t = aᵗ`.
    pub fn one_pole(a: f64) -> Result<Self> {
        Self::rational(vec![1.0], vec![1.0, -a])
    }

    pub fn table(values: Vec<f64>, tail: GeometricTail) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("impulse-response table must be finite");
        }
        Ok(LtiSystem::Table { values, tail })
    }

    pub fn exponentials(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return invalid("at least one exponential term is required");
        }
        for &(c, p) in &terms {
            if !c.is_finite() || !(p > 0.0 && p.is_finite()) {
                return invalid(format!("term {c}·exp(-{p} t) is not a stable exponential"));
            }
        }
        Ok(LtiSystem::Exponentials { terms })
    }

    pub fn domain(&self) -> TimeDomain {
        match self {
            LtiSystem::Exponentials { .. } => TimeDomain::Continuous,
            _ => TimeDomain::Discrete,
        }
    }

    fn lattice(&self) -> &[f64] {
        match self {
            LtiSystem::Rational { impulse, .. } => impulse,
            LtiSystem::Table { values, .. } => values,
            LtiSystem::Exponentials { .. } => &[],
        }
    }

    /// `g^{(S)}_t`, zero for `t < 0`.
    pub fn true_response(&self, t: f64) -> Result<f64> {
        self.domain().check(t)?;
        if t < 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            LtiSystem::Exponentials { terms } => {
                csum(terms.iter().map(|&(c, p)| c * (-p * t).exp()))
            }
            _ => self.lattice().get(t as usize).copied().unwrap_or(0.0),
        })
    }

    /// `∫_lo^hi g(s) ds` for the exponential family.
    fn exp_integral(terms: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
        csum(terms.iter().map(|&(c, p)| {
            // c/p (e^{-p lo} - e^{-p hi}) without cancellation
            c / p * (-p * lo).exp() * -(-p * (hi - lo)).exp_m1()
        }))
    }

    pub fn bibo_certificate(&self) -> BiboCertificate {
        match self {
            LtiSystem::Rational { impulse, tail, .. }
            | LtiSystem::Table {
                values: impulse,
                tail,
            } => BiboCertificate {
                l1_partial: csum(impulse.iter().map(|v| v.abs())),
                horizon: impulse.len() as f64,
                tail_bound: tail.sum_from(impulse.len()),
            },
            LtiSystem::Exponentials { terms } => BiboCertificate {
                l1_partial: csum(terms.iter().map(|&(c, p)| c.abs() / p)),
                horizon: f64::INFINITY,
                tail_bound: 0.0,
            },
        }
    }

    /// Noiseless outputs `L_{u,τ}(g^{(S)})` at each time.
    pub fn simulate(&self, u: &Signal, times: &[f64]) -> Result<Vec<f64>> {
        if u.domain() != self.domain() {
            return invalid(format!(
                "{}-time input given to a {}-time system",
                u.domain().name(),
                self.domain().name()
            ));
        }
        times
            .iter()
            .map(|&tau| {
                self.domain().check(tau)?;
                Ok(match self {
                    LtiSystem::Exponentials { terms } => csum(
                        u.reflected_pieces(tau)
                            .into_iter()
                            .map(|(lo, hi, a)| a * Self::exp_integral(terms, lo, hi)),
                    ),
                    _ => {
                        let g = self.lattice();
                        let Some((start, end)) = u.index_range() else {
                            return Ok(0.0);
                        };
                        let tau_i = tau as i64;
                        let s_lo = (tau_i - end).max(0);
                        let s_hi = (tau_i - start).min(g.len() as i64 - 1);
                        csum((s_lo..=s_hi).map(|s| g[s as usize] * u.value_at((tau_i - s) as f64)))
                    }
                })
            })
            .collect()
    }
}

/// i.i.d. Gaussian measurement noise drawn from `ChaCha8Rng::seed_from_u64(seed)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return invalid(format!(
                "noise sigma {sigma} must be finite and non-negative"
            ));
        }
        Ok(Self { sigma, seed })
    }

    /// `n` draws of `σ·N(0,1)`; all zeros when `σ = 0`.
    pub fn draws(&self, n: usize) -> Vec<f64> {
        if self.sigma == 0.0 {
            return vec![0.0; n];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// `yᵢ = L_{tᵢ}(g^{(S)}) + wᵢ`.
pub fn make_dataset(
    sys: &LtiSystem,
    u: &Signal,
    times: &[f64],
    noise: &NoiseSpec,
) -> Result<Dataset> {
    NoiseSpec::new(noise.sigma, noise.seed)?;
    let clean = sys.simulate(u, times)?;
    let w = noise.draws(times.len());
    let outputs = clean.iter().zip(&w).map(|(y, w)| y + w).collect();
    Dataset::new(u.clone(), times.to_vec(), outputs, Some(noise.sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Impulse,
    Step,
    Prbs,
    Sine,
    UniformRandom,
}

impl InputKind {
    pub const ALL: [InputKind; 5] = [
        InputKind::Impulse,
        InputKind::Step,
        InputKind::Prbs,
        InputKind::Sine,
        InputKind::UniformRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputKind::Impulse => "impulse",
            InputKind::Step => "step",
            InputKind::Prbs => "prbs",
            InputKind::Sine => "sine",
            InputKind::UniformRandom => "uniform_random",
        }
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown input kind `{s}`")))
    }
}

/// Shape parameters shared by all input kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputParams {
    pub domain: TimeDomain,
    pub amplitude: f64,
    /// Number of samples (or continuous segments).
    pub length: usize,
    pub start: i64,
    /// Sine period in samples.
    pub period: f64,
    /// Segment width in continuous time.
    pub dt: f64,
}

impl Default for InputParams {
    fn default() -> Self {
        Self {
            domain: TimeDomain::Discrete,
            amplitude: 1.0,
            length: 100,
            start: 0,
            period: 20.0,
            dt: 1.0,
        }
    }
}

/// PRBS-15 (`x¹⁵ + x¹⁴ + 1`) bits from a nonzero seed-derived state.
fn prbs_bits(seed: u64, n: usize) -> impl Iterator<Item = bool> {
    let mut state = (seed % 0x7fff) as u16 + 1;
    (0..n).map(move |_| {
        let bit = ((state >> 14) ^ (state >> 13)) & 1;
        state = ((state << 1) | bit) & 0x7fff;
        bit == 1
    })
}

/// A bounded test input with `sup_norm ≤ amplitude`. Continuous inputs are
/// `length` segments of width `dt` followed by 0.
pub fn make_input(kind: InputKind, params: &InputParams, seed: u64) -> Result<Signal> {
    let p = params;
    if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
        return invalid("amplitude must be finite and non-negative");
    }
    if p.length == 0 {
        return invalid("input length must be positive");
    }
    let a = p.amplitude;
    let values: Vec<f64> = match kind {
        InputKind::Impulse => {
            let mut v = vec![0.0; p.length];
            v[0] = a;
            v
        }
        InputKind::Step => vec![a; p.length],
        InputKind::Prbs => prbs_bits(seed, p.length)
            .map(|b| if b { a } else { -a })
            .collect(),
        InputKind::Sine => {
            if !(p.period > 0.0 && p.period.is_finite()) {
                return invalid("sine period must be positive");
            }
            (0..p.length)
                .map(|i| a * (std::f64::consts::TAU * i as f64 / p.period).sin())
                .collect()
        }
        InputKind::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..p.length)
                .map(|_| if a == 0.0 { 0.0 } else { rng.gen_range(-a..=a) })
                .collect()
        }
    };
    match p.domain {
        TimeDomain::Discrete => Signal::discrete(p.start, values),
        TimeDomain::Continuous => {
            if !(p.dt > 0.0 && p.dt.is_finite()) {
                return invalid("dt must be positive");
            }
            let knots = (0..=p.length)
                .map(|i| p.start as f64 + i as f64 * p.dt)
                .collect();
            let mut values = values;
            values.push(0.0);
            Signal::piecewise_constant(knots, values)
        }
    }
}

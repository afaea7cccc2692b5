//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use kernel_sysid::checks::{
    check_continuity_certificate, check_dyadic_cauchy, check_partial_sum_cauchy,
};
use kernel_sysid::estimator::{objective, output_kernel_matrix};
use kernel_sysid::rkhs::section_integral;
use kernel_sysid::{
    fit, make_dataset, make_input, predict_impulse, Dataset, InputKind, InputParams,
    KernelDescriptor, LtiSystem, NoiseSpec, RkhsElement, Signal, TimeDomain,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use TimeDomain::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn random_signal(rng: &mut ChaCha8Rng, start: i64, len: usize) -> Signal {
    Signal::discrete(start, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_discrete_kernel(rng: &mut ChaCha8Rng) -> KernelDescriptor {
    match rng.gen_range(0..3) {
        0 => KernelDescriptor::tc(Discrete, rng.gen_range(0.5..0.95)).unwrap(),
        1 => KernelDescriptor::dc(Discrete, rng.gen_range(0.5..0.95), rng.gen_range(-0.9..0.9))
            .unwrap(),
        _ => KernelDescriptor::ss(Discrete, rng.gen_range(0.05..0.5)).unwrap(),
    }
}

fn sorted_subset(rng: &mut ChaCha8Rng, pool: usize, n: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pool).collect();
    for i in (1..pool).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let mut t: Vec<f64> = idx[..n].iter().map(|&i| i as f64).collect();
    t.sort_by(f64::total_cmp);
    t
}

fn dual_primal() -> Outcome {
    let (m, n) = (64, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for inst in 0..20 {
        let k = if inst % 2 == 0 {
            KernelDescriptor::tc(Discrete, rng.gen_range(0.7..0.95)).unwrap()
        } else {
            KernelDescriptor::dc(Discrete, rng.gen_range(0.7..0.95), rng.gen_range(-0.9..0.9))
                .unwrap()
        };
        let lambda = if inst % 4 < 2 { 1e-2 } else { 1.0 };
        let u = random_signal(&mut rng, 0, m);
        let times = sorted_subset(&mut rng, m, n);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data =
            Dataset::new(u.clone(), times.clone(), y.clone(), None).map_err(|e| e.to_string())?;
        let est = fit(&k, &data, lambda, 1e-12).map_err(|e| e.to_string())?;

        let kmat = DMatrix::from_fn(m, m, |i, j| k.eval(i as f64, j as f64).unwrap());
        let umat = DMatrix::from_fn(n, m, |i, s| u.value_at(times[i] - s as f64));
        let eig = kmat.symmetric_eigen();
        let l =
            &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        let ul = &umat * &l;
        let lhs = ul.transpose() * &ul + DMatrix::identity(m, m) * lambda;
        let a = lhs
            .cholesky()
            .ok_or("primal system not positive definite")?
            .solve(&(ul.transpose() * DVector::from_vec(y)));
        let g = &l * a;
        let g_hat = DVector::from_fn(m, |i, _| predict_impulse(&est, i as f64).unwrap());
        worst = worst.max((&g_hat - &g).norm() / g.norm());
    }
    if worst <= 1e-8 {
        Ok(format!("max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} > 1e-8"))
    }
}

fn output_kernel_psd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let (k, u, times) = if i % 10 == 9 {
            let k = if rng.gen::<bool>() {
                KernelDescriptor::tc(Continuous, rng.gen_range(0.5..2.0)).unwrap()
            } else {
                KernelDescriptor::ss(Continuous, rng.gen_range(0.5..2.0)).unwrap()
            };
            let u = make_input(
                InputKind::UniformRandom,
                &InputParams {
                    domain: Continuous,
                    length: 4,
                    dt: 0.5,
                    ..Default::default()
                },
                rng.gen(),
            )
            .unwrap();
            let times: Vec<f64> = (0..4).map(|j| 0.3 + 0.6 * j as f64).collect();
            (k, u, times)
        } else {
            let k = random_discrete_kernel(&mut rng);
            let len = rng.gen_range(1..40);
            let start = rng.gen_range(-5..5);
            let u = random_signal(&mut rng, start, len);
            let n = rng.gen_range(1..25);
            (k, u, sorted_subset(&mut rng, 60, n))
        };
        let tol = if k.domain() == Continuous {
            1e-3
        } else {
            1e-10
        };
        let o = output_kernel_matrix(&k, &u, &times, tol)
            .map_err(|e| e.to_string())?
            .values;
        let trace = o.trace();
        let min = o.symmetric_eigenvalues().min();
        let score = min / trace.max(f64::MIN_POSITIVE);
        worst = worst.min(score);
        if min < -1e-10 * trace {
            return Err(format!(
                "instance {i}: min eigenvalue {min:e}, trace {trace:e}"
            ));
        }
    }
    Ok(format!("worst min eigenvalue / trace {worst:.2e}"))
}

fn dyadic_identity() -> Outcome {
    let k = KernelDescriptor::tc(Continuous, 1.0).unwrap();
    let target = 2.0 - 4.0 / std::f64::consts::E;
    let f14 = section_integral(&k, 0.0, 1.0, 14).map_err(|e| e.to_string())?;
    let err = (f14.norm_squared() - target).abs();
    let r = check_dyadic_cauchy(&k, 0.0, 1.0, 14, 1e-4).map_err(|e| e.to_string())?;
    let d14 = r
        .observed
        .iter()
        .find(|o| o.label == "d_n")
        .and_then(|o| o.values.last().copied());
    let d14 = d14.ok_or("no refinement gaps observed")?;
    if err <= 1e-4 && d14 <= 1e-4 && r.passed() {
        Ok(format!(
            "|norm^2 - (2 - 4/e)| = {err:.2e}, d_14 = {d14:.2e}"
        ))
    } else {
        Err(format!(
            "norm error {err:.2e}, d_14 {d14:.2e}, verdict {}",
            r.verdict
        ))
    }
}

fn partial_sum_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ladder = [(4, 8), (8, 16), (16, 32), (32, 64)];
    let mut worst = f64::NEG_INFINITY;
    for k in [
        KernelDescriptor::tc(Discrete, 0.8).unwrap(),
        KernelDescriptor::dc(Discrete, 0.85, 0.5).unwrap(),
    ] {
        for _ in 0..10 {
            let u: Vec<f64> = (0..100)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let u = Signal::discrete(0, u).unwrap();
            let r = check_partial_sum_cauchy(&k, &u, 90.0, &ladder).map_err(|e| e.to_string())?;
            worst = worst.max(
                r.bounds
                    .iter()
                    .map(|b| b.value / b.bound)
                    .fold(f64::NEG_INFINITY, f64::max),
            );
            if !r.passed() {
                return Err(format!("{}: {:?}", k.family_name(), r.bounds));
            }
        }
    }
    Ok(format!("largest gap / bound {worst:.3}"))
}

fn continuity_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u_d = random_signal(&mut rng, -10, 60);
    let u_c = make_input(
        InputKind::UniformRandom,
        &InputParams {
            domain: Continuous,
            length: 8,
            dt: 0.25,
            ..Default::default()
        },
        5,
    )
    .unwrap();
    let configs = [
        (
            KernelDescriptor::tc(Discrete, 0.8).unwrap(),
            &u_d,
            40.0,
            1e-8,
        ),
        (
            KernelDescriptor::dc(Discrete, 0.9, -0.5).unwrap(),
            &u_d,
            40.0,
            1e-8,
        ),
        (
            KernelDescriptor::ss(Discrete, 0.2).unwrap(),
            &u_d,
            25.0,
            1e-8,
        ),
        (
            KernelDescriptor::tc(Continuous, 1.0).unwrap(),
            &u_c,
            2.0,
            1e-3,
        ),
    ];
    for (i, (k, u, tau, tol)) in configs.iter().enumerate() {
        let r = check_continuity_certificate(k, u, *tau, 1000, i as u64, *tol)
            .map_err(|e| e.to_string())?;
        let violations = r
            .observed
            .iter()
            .find(|o| o.label == "violations")
            .map(|o| o.values[0]);
        if !r.passed() || violations != Some(0.0) {
            return Err(format!("configuration {i}: {violations:?} violations"));
        }
    }
    Ok(format!(
        "{} configurations x 1000 trials, zero violations",
        configs.len()
    ))
}

fn strong_convexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let k = random_discrete_kernel(&mut rng);
        let u = random_signal(&mut rng, 0, 30);
        let times = sorted_subset(&mut rng, 40, 20);
        let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lambda = 10f64.powf(rng.gen_range(-3.0..0.0));
        let data = Dataset::new(u, times, y, None).map_err(|e| e.to_string())?;
        let est = fit(&k, &data, lambda, 1e-12).map_err(|e| e.to_string())?;
        let j_star = objective(&k, &data, lambda, &est.g_hat).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let mut delta = RkhsElement::zero(&k);
            while delta.norm() == 0.0 {
                for rep in &est.representers {
                    delta = delta
                        .combine(1.0, &rep.element, rng.gen_range(-1.0..1.0))
                        .unwrap();
                }
            }
            let moved = est.g_hat.checked_add(&delta).unwrap();
            let gain = objective(&k, &data, lambda, &moved).map_err(|e| e.to_string())? - j_star;
            let floor = lambda * delta.norm_squared();
            worst = worst.min(gain / floor);
            if gain < floor * (1.0 - 1e-8) {
                return Err(format!("gain {gain:e} below lambda·norm^2 = {floor:e}"));
            }
        }
    }
    Ok(format!("smallest gain / (lambda·norm^2) {worst:.4}"))
}

fn lattice_rmse(n_d: usize, sigma: f64) -> Result<f64, String> {
    let sys = LtiSystem::one_pole(0.8).map_err(|e| e.to_string())?;
    let k = KernelDescriptor::tc(Discrete, 0.8).unwrap();
    let times: Vec<f64> = (0..n_d).map(|t| t as f64).collect();
    let mut total = 0.0;
    for seed in 0..20u64 {
        let u = make_input(
            InputKind::Prbs,
            &InputParams {
                length: n_d,
                ..Default::default()
            },
            seed,
        )
        .map_err(|e| e.to_string())?;
        let noise = NoiseSpec::new(sigma, 1000 + seed).map_err(|e| e.to_string())?;
        let data = make_dataset(&sys, &u, &times, &noise).map_err(|e| e.to_string())?;
        let est = fit(&k, &data, sigma * sigma, 1e-10).map_err(|e| e.to_string())?;
        let mse: f64 = (0..50)
            .map(|t| {
                let t = t as f64;
                (predict_impulse(&est, t).unwrap() - sys.true_response(t).unwrap()).powi(2)
            })
            .sum::<f64>()
            / 50.0;
        total += mse.sqrt();
    }
    Ok(total / 20.0)
}

fn consistency_trend() -> Outcome {
    let hi_noise = lattice_rmse(200, 0.1)?;
    let lo_noise = lattice_rmse(200, 0.01)?;
    let short = lattice_rmse(50, 0.1)?;
    let long = lattice_rmse(500, 0.1)?;
    let detail = format!(
        "sigma 0.1 -> 0.01: {hi_noise:.4} -> {lo_noise:.4}; n 50 -> 500: {short:.4} -> {long:.4}"
    );
    if lo_noise < hi_noise && long < short {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_pair(dir: &Path) -> Result<(), String> {
    let config = r#"
seed = 17
[kernel]
family = "tc"
domain = "discrete"
beta = 0.8
[input]
kind = "prbs"
length = 120
[system]
type = "one_pole"
a = 0.8
[samples]
start = 0
count = 120
[noise]
sigma = 0.1
[estimate]
lambda = [0.001, 0.01, 0.1]
"#;
    fs::write(dir.join("c.toml"), config).map_err(|e| e.to_string())?;
    for cmd in ["simulate", "identify"] {
        let out = Command::new(env!("CARGO_BIN_EXE_ksid"))
            .current_dir(dir)
            .args([cmd, "--config", "c.toml"])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pair(a.path())?;
    run_pair(b.path())?;
    let mut names: Vec<_> = fs::read_dir(a.path().join("out"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        let x = fs::read(a.path().join("out").join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.path().join("out").join(name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
    }
    Ok(format!("{} files byte-identical", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("dual-primal equivalence", dual_primal, Some(5)),
        ("output kernel matrix PSD", output_kernel_psd, Some(10)),
        ("dyadic section integral identity", dyadic_identity, Some(5)),
        ("partial-sum Cauchy bound", partial_sum_bound, Some(5)),
        ("continuity certificate", continuity_certificate, Some(10)),
        ("strong convexity", strong_convexity, Some(10)),
        ("consistency trend", consistency_trend, Some(60)),
        ("determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let Some(secs) = limit {
            if elapsed > Duration::from_secs(*secs) {
                outcome = Err(format!(
                    "{} (exceeded {secs} s)",
                    outcome.unwrap_or_else(|e| e)
                ));
            }
        }
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {} [PRIMARY] {name}: {verdict} ({detail}; {:.2} s)",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

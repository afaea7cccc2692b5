//! Worked values checked against independent oracles coded here.

use kernel_sysid::checks::*;
use kernel_sysid::estimator::{objective, output_kernel_matrix};
use kernel_sysid::quadrature::integrate;
use kernel_sysid::rkhs::{section, section_integral};
use kernel_sysid::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use TimeDomain::*;

fn random_signal(rng: &mut ChaCha8Rng, start: i64, len: usize) -> Signal {
    Signal::discrete(start, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_element(
    rng: &mut ChaCha8Rng,
    k: &KernelDescriptor,
    atoms: usize,
    span: f64,
) -> RkhsElement {
    let atoms: Vec<(f64, f64)> = (0..atoms)
        .map(|_| {
            let c = match k.domain() {
                Discrete => rng.gen_range(0..=span as u64) as f64,
                Continuous => rng.gen_range(0.0..span),
            };
            (rng.gen_range(-1.0..1.0), c)
        })
        .collect();
    RkhsElement::from_atoms(k, atoms).unwrap()
}

#[test]
fn output_kernel_matches_quadruple_loop() {
    let beta: f64 = 0.5;
    let k = KernelDescriptor::tc(Discrete, beta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = random_signal(&mut rng, 0, 12);
    let times = [2.0, 5.0, 9.0];
    let o = output_kernel_matrix(&k, &u, &times, 1e-12).unwrap();
    for (i, &ti) in times.iter().enumerate() {
        for (j, &tj) in times.iter().enumerate() {
            let mut brute = 0.0;
            for s in 0..=(ti as i64) {
                for t in 0..=(tj as i64) {
                    let ks = beta.powi(s.max(t) as i32);
                    brute += ks * u.value_at(ti - s as f64) * u.value_at(tj - t as f64);
                }
            }
            assert!((o.values[(i, j)] - brute).abs() <= 1e-8, "({i},{j})");
        }
    }
}

#[test]
fn output_kernel_trivial_inputs() {
    let k = KernelDescriptor::dc(Discrete, 0.8, -0.3).unwrap();
    let times = [0.0, 3.0, 4.0, 10.0];
    let imp = Signal::discrete(0, vec![1.0]).unwrap();
    let o = output_kernel_matrix(&k, &imp, &times, 1e-10)
        .unwrap()
        .values;
    let gram = k.gram(&times).unwrap().values;
    assert!((o - gram).amax() <= 1e-15);
    let o = output_kernel_matrix(&k, &Signal::zero(Discrete), &times, 1e-10).unwrap();
    assert!(o.values.iter().all(|v| *v == 0.0));
}

#[test]
fn tc_discrete_integrability_measure() {
    let beta: f64 = 0.5;
    // Σ_{n≥0} (2n+1) βⁿ, brute-force partial sums
    let oracle: f64 = (0..200).map(|n| (2 * n + 1) as f64 * beta.powi(n)).sum();
    let m = KernelDescriptor::tc(Discrete, beta)
        .unwrap()
        .integrability_measure(1e-12, 1e6)
        .unwrap();
    assert!((m.value - oracle).abs() <= 1e-9);
    assert!((oracle - 6.0).abs() < 1e-12);
}

#[test]
fn tc_continuous_integrability_measure() {
    // ∫∫_{[0,∞)²} e^{-max(s,t)} = 2 ∫₀^∞ t e^{-t} dt
    let oracle = 2.0 * integrate(|t| t * (-t).exp(), 0.0, 60.0, &[], 1e-14).value;
    let m = KernelDescriptor::tc(Continuous, 1.0)
        .unwrap()
        .integrability_measure(1e-9, 1e6)
        .unwrap();
    assert!((m.value - oracle).abs() <= 1e-6, "{} vs {oracle}", m.value);
    assert!((m.value - 2.0).abs() <= 1e-6);
}

#[test]
fn section_integral_norm_identity() {
    let k = KernelDescriptor::tc(Continuous, 1.0).unwrap();
    let target = 2.0 - 4.0 / std::f64::consts::E;
    assert!((k.block_integral(0.0, 1.0).unwrap().value - target).abs() <= 1e-12);
    let f14 = section_integral(&k, 0.0, 1.0, 14).unwrap();
    assert!((f14.norm_squared() - target).abs() <= 1e-4);
    let gaps: Vec<f64> = (4..=14)
        .map(|n| {
            let a = section_integral(&k, 0.0, 1.0, n).unwrap();
            let b = section_integral(&k, 0.0, 1.0, n + 1).unwrap();
            b.checked_sub(&a).unwrap().norm()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    assert!(gaps[gaps.len() - 1] < 1e-4);
}

#[test]
fn disjoint_box_inner_product() {
    let k = KernelDescriptor::tc(Continuous, 1.0).unwrap();
    // t > s throughout, so the integrand is e^{-t}
    let exact = (-1.5f64).exp() - (-2.5f64).exp();
    let a = section_integral(&k, 0.0, 1.0, 14).unwrap();
    let b = section_integral(&k, 1.5, 2.5, 14).unwrap();
    assert!((a.inner(&b).unwrap() - exact).abs() <= 1e-4);
    let r = check_fubini(&k, (0.0, 1.0), (1.5, 2.5), 14, 1e-4).unwrap();
    assert!(r.passed());
}

#[test]
fn constant_input_gain() {
    let k = KernelDescriptor::tc(Discrete, 0.7).unwrap();
    let h = 200;
    let u = Signal::discrete(-h, vec![1.0; (2 * h + 1) as usize]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = random_element(&mut rng, &k, 6, 30.0);
    let direct: f64 = (0..=h).map(|s| g.evaluate(s as f64).unwrap()).sum();
    assert!((apply_l(&u, 0.0, &g).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
}

#[test]
fn truncated_duality_holds() {
    let tol = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in [
        KernelDescriptor::tc(Discrete, 0.9).unwrap(),
        KernelDescriptor::dc(Discrete, 0.9, 0.6).unwrap(),
        KernelDescriptor::ss(Discrete, 0.1).unwrap(),
    ] {
        let u = random_signal(&mut rng, -300, 600);
        let tau = 250.0;
        let phi = representer_phi(&k, &u, tau, tol).unwrap();
        assert!(phi.tail_bound > 0.0 && phi.tail_bound < tol);
        for _ in 0..100 {
            let g = random_element(&mut rng, &k, 8, 500.0);
            let gap = (apply_l(&u, tau, &g).unwrap() - phi.element.inner(&g).unwrap()).abs();
            assert!(gap <= tol * g.norm() + 1e-10);
        }
    }
}

#[test]
fn continuous_duality_holds() {
    let k = KernelDescriptor::ss(Continuous, 0.5).unwrap();
    let u = make_input(
        InputKind::UniformRandom,
        &InputParams {
            domain: Continuous,
            length: 6,
            dt: 0.5,
            ..Default::default()
        },
        2,
    )
    .unwrap();
    let tol = 1e-3;
    let phi = representer_phi(&k, &u, 2.5, tol).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let g = random_element(&mut rng, &k, 6, 6.0);
        let gap = (apply_l(&u, 2.5, &g).unwrap() - phi.element.inner(&g).unwrap()).abs();
        assert!(gap <= tol * g.norm() + 1e-10);
    }
}

#[test]
fn scalar_estimate() {
    let k = KernelDescriptor::tc(Discrete, 0.5).unwrap();
    let data = Dataset::new(
        Signal::discrete(0, vec![1.0]).unwrap(),
        vec![2.0],
        vec![0.25],
        None,
    )
    .unwrap();
    let est = fit(&k, &data, 0.25, 1e-10).unwrap();
    // O = k(2,2) = 0.25, c = 0.25 / (0.25 + 0.25)
    assert_eq!(est.coefficients, vec![0.5]);
    assert_eq!(predict_impulse(&est, 2.0).unwrap(), 0.125);
    assert_eq!(predict_output(&est, 2.0).unwrap(), 0.125);
    assert!(est.diagnostics.residual_inf <= 1e-8 * 1.25);
}

#[test]
fn objective_at_zero_is_output_energy() {
    let k = KernelDescriptor::ss(Discrete, 0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_signal(&mut rng, 0, 20);
    let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let times: Vec<f64> = (0..8).map(|i| (2 * i) as f64).collect();
    let data = Dataset::new(u, times, y.clone(), None).unwrap();
    let energy: f64 = y.iter().map(|v| v * v).sum();
    let j0 = objective(&k, &data, 0.3, &RkhsElement::zero(&k)).unwrap();
    assert!((j0 - energy).abs() <= 1e-14 * energy);
}

#[test]
fn large_lambda_shrinks_to_zero() {
    let k = KernelDescriptor::tc(Discrete, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_signal(&mut rng, 0, 30);
    let y: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let data = Dataset::new(
        u,
        (0..10).map(|i| (3 * i) as f64).collect(),
        y.clone(),
        None,
    )
    .unwrap();
    let lambda = 1e12;
    let est = fit(&k, &data, lambda, 1e-10).unwrap();
    let cn = est.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    let yn = y.iter().map(|c| c * c).sum::<f64>().sqrt();
    assert!(cn <= yn / lambda * (1.0 + 1e-6));
}

#[test]
fn kernel_estimate_matches_primal_ridge() {
    use nalgebra::{DMatrix, DVector};
    // truncated FIR lattice: g ∈ R^m, y = U g + w, penalty gᵀK⁻¹g
    let m = 64;
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = KernelDescriptor::dc(Discrete, 0.85, 0.4).unwrap();
    let u = random_signal(&mut rng, 0, m);
    let times: Vec<f64> = {
        let mut t: Vec<f64> = (0..m).map(|i| i as f64).collect();
        for i in (1..t.len()).rev() {
            t.swap(i, rng.gen_range(0..=i));
        }
        let mut t = t[..n].to_vec();
        t.sort_by(f64::total_cmp);
        t
    };
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lambda = 1e-2;
    let data = Dataset::new(u.clone(), times.clone(), y.clone(), None).unwrap();
    let est = fit(&k, &data, lambda, 1e-12).unwrap();

    let kmat = DMatrix::from_fn(m, m, |i, j| k.eval(i as f64, j as f64).unwrap());
    let umat = DMatrix::from_fn(n, m, |i, s| u.value_at(times[i] - s as f64));
    // K = L Lᵀ via the symmetric eigendecomposition; g = L a
    let eig = kmat.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
    let ul = &umat * &l;
    let lhs = ul.transpose() * &ul + DMatrix::identity(m, m) * lambda;
    let a = lhs
        .cholesky()
        .unwrap()
        .solve(&(ul.transpose() * DVector::from_vec(y)));
    let g = &l * a;
    let g_hat = DVector::from_fn(m, |i, _| predict_impulse(&est, i as f64).unwrap());
    let rel = (&g_hat - &g).norm() / g.norm();
    assert!(rel <= 1e-8, "relative error {rel}");
}

#[test]
fn one_pole_step_and_noise() {
    let sys = LtiSystem::one_pole(0.8).unwrap();
    assert!((sys.true_response(3.0).unwrap() - 0.8f64.powi(3)).abs() < 1e-16);
    let u = make_input(
        InputKind::Step,
        &InputParams {
            length: 500,
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let late = sys.simulate(&u, &[400.0]).unwrap()[0];
    // Σ_{t≥0} 0.8ᵗ
    assert!((late - 1.0 / (1.0 - 0.8)).abs() < 1e-6);
    let times: Vec<f64> = (0..10_000).map(f64::from).collect();
    let u = make_input(
        InputKind::Prbs,
        &InputParams {
            length: 10_000,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    let clean = sys.simulate(&u, &times).unwrap();
    let noisy = make_dataset(&sys, &u, &times, &NoiseSpec::new(0.1, 77).unwrap()).unwrap();
    let r: Vec<f64> = noisy
        .outputs()
        .iter()
        .zip(&clean)
        .map(|(a, b)| a - b)
        .collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
    assert!((sd - 0.1).abs() <= 0.005, "{sd}");
}

#[test]
fn stability_probe_against_integrability() {
    let k = KernelDescriptor::tc(Discrete, 0.5).unwrap();
    let h = 300;
    let probe = sign_probe(&k, h).unwrap();
    let ones = Signal::discrete(0, vec![1.0; h + 1]).unwrap();
    let r = check_stability_probe(&k, &[ones, probe], h, 1e-9).unwrap();
    assert!(r.passed());
    // nested partial-sum oracle for u ≡ 1: Σ_t Σ_s β^{max(t,s)}
    let mut nested = 0.0;
    for t in 0..=h {
        let mut inner = 0.0;
        for s in 0..=h {
            inner += 0.5f64.powi(t.max(s) as i32);
        }
        nested += f64::abs(inner);
    }
    let got = r
        .observed
        .iter()
        .find(|o| o.label == "probe0_partial_sums")
        .unwrap();
    assert!((got.values.last().unwrap() - nested).abs() <= 1e-12 * nested);
    assert!(nested <= 6.0 + 1e-9);
}

#[test]
fn partial_sums_within_tail_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in [
        KernelDescriptor::tc(Discrete, 0.5).unwrap(),
        KernelDescriptor::dc(Discrete, 0.7, -0.8).unwrap(),
    ] {
        let u = Signal::discrete(
            0,
            (0..80)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        let r =
            check_partial_sum_cauchy(&k, &u, 70.0, &[(4, 8), (8, 16), (16, 32), (7, 7)]).unwrap();
        assert!(r.passed());
        assert_eq!(r.observed[0].values[3], 0.0);
    }
}

#[test]
fn continuity_certificate_tc() {
    let k = KernelDescriptor::tc(Discrete, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let u = random_signal(&mut rng, 0, 50);
    let r = check_continuity_certificate(&k, &u, 30.0, 1000, 4, 1e-8).unwrap();
    assert!(r.passed());
    assert_eq!(
        r.observed
            .iter()
            .find(|o| o.label == "violations")
            .unwrap()
            .values,
        vec![0.0]
    );
}

#[test]
fn dyadic_check_tc_continuous() {
    let k = KernelDescriptor::tc(Continuous, 1.0).unwrap();
    let r = check_dyadic_cauchy(&k, 0.0, 1.0, 14, 1e-4).unwrap();
    assert!(r.passed(), "{:?}", r.bounds);
}

#[test]
fn integrability_verdicts() {
    assert!(
        check_integrability(&KernelDescriptor::tc(Discrete, 0.5).unwrap(), 1e-9, 1e6)
            .unwrap()
            .passed()
    );
    assert!(!check_integrability(
        &KernelDescriptor::constant(Discrete, 1.0).unwrap(),
        1e-6,
        1e4
    )
    .unwrap()
    .passed());
    // identity on a finite grid
    let entries = (0..8)
        .flat_map(|i| (i..8).map(move |j| (i as f64, j as f64, if i == j { 1.0 } else { 0.0 })));
    let table = KernelTable::from_entries(Discrete, entries).unwrap();
    let id = KernelDescriptor::tabulated(Discrete, table).unwrap();
    let r = check_integrability(&id, 1e-9, 1e6).unwrap();
    assert!(r.passed());
    let m = r
        .observed
        .iter()
        .find(|o| o.label == "measure")
        .unwrap()
        .values[0];
    assert_eq!(m, 8.0);
}

#[test]
fn reproducing_section_evaluation() {
    let k = KernelDescriptor::ss(Continuous, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e = random_element(&mut rng, &k, 10, 4.0);
    for _ in 0..100 {
        let t = rng.gen_range(0.0..5.0);
        let v = e.evaluate(t).unwrap();
        assert!((v - e.inner(&section(&k, t).unwrap()).unwrap()).abs() <= 1e-12 * (1.0 + v.abs()));
    }
}

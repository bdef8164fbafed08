//! Acceptance gate: one test per release criterion. Each test prints the
//! measured numbers it gates on, so a run with --nocapture doubles as a
//! calibration report. The heavy evolutions (criteria 1, 3, 10) dominate
//! the runtime; expect tens of minutes on a single core.

use fourdamp::antiderivative::{derivative_roundtrip_residual, AntiderivativeOperator};
use fourdamp::damping::{
    apply_decay, heat_step, DampingConfig, DampingMode, DampingProfile, GammaKind, HeatOperator,
};
use fourdamp::evolution::{compare_fields_on_window, evolve, EvolveSpec, Rk4Stepper};
use fourdamp::harness::{
    build_damping, build_model, heuristic_deviation, initial_samples, preset, run,
    solution_samples, undamped_bound_sweep, RunConfig, HEURISTIC_LADDER,
};
use fourdamp::ic::ic_by_name;
use fourdamp::linkdv::{
    damped_heuristic_line, damped_tail_bound, exact_solution, trapezoid_bound_line,
    trapezoid_bound_periodic, WavePacketParams,
};
use fourdamp::models::{kawahara, kdv, nls, RiemannContext};
use fourdamp::spectral::{Grid, SpectralField};
use fourdamp::Complex64;
use std::f64::consts::PI;

fn max_norm_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Damped linear solver vs the damped spectral heuristic over a ladder of
/// domain sizes, each within a factor of 2 of its expected deviation.
#[test]
fn criterion_01_damped_heuristic_ladder() {
    for &(l, m, expected) in &HEURISTIC_LADDER {
        let check = heuristic_deviation(l, m, 0.01, 150.0).unwrap();
        let ratio = check.measured / expected;
        println!(
            "criterion 1: L = {l}, m = {m}: measured {:.4e}, expected {expected}, ratio {ratio:.2}",
            check.measured
        );
        assert!(
            (0.5..=2.0).contains(&ratio),
            "L = {l}: deviation {:.4e} is outside factor 2 of {expected}",
            check.measured
        );
    }
}

/// Undamped solitons against their closed forms at t = 1.
#[test]
fn criterion_02_soliton_fidelity() {
    let kdv_err = run(&preset("kdv-soliton").unwrap())
        .unwrap()
        .max_window_error
        .unwrap();
    let nls_err = run(&preset("nls-soliton").unwrap())
        .unwrap()
        .max_window_error
        .unwrap();
    println!("criterion 2: kdv soliton error {kdv_err:.3e}, nls soliton error {nls_err:.3e}");
    assert!(kdv_err <= 1e-6, "kdv soliton error {kdv_err:.3e}");
    assert!(nls_err <= 1e-6, "nls soliton error {nls_err:.3e}");
}

/// Wrap-around ruins the small undamped domain by O(1); the damped run on
/// the production domain tracks a large-domain reference to 1e-5; the
/// T = 50 variant is the fast-suite stand-in at the same tolerance.
#[test]
fn criterion_03_damping_efficacy() {
    let production = preset("kdv-t150").unwrap();

    let mut small = production.clone();
    small.half_width = 200.0;
    small.modes = 1 << 10;
    small.damping.mode = "none".into();
    small.reference_half_width = Some(2500.0);
    small.reference_modes = Some(1 << 14);
    small.label = Some("undamped-small".into());
    let polluted = run(&small).unwrap().max_window_error.unwrap();
    println!("criterion 3a: undamped window error {polluted:.3e} (need >= 0.1)");
    assert!(polluted >= 0.1, "wrap-around error only {polluted:.3e}");

    let damped = run(&production).unwrap().max_window_error.unwrap();
    println!("criterion 3b: damped window error {damped:.3e} (need <= 1e-5)");
    assert!(damped <= 1e-5, "damped window error {damped:.3e}");

    // At T = 50 the breaking front's flank still sits at the window edge,
    // where a same-dt reference carries ~3e-5 of its own time error; the
    // stand-in halves the reference dt so the baseline outresolves the run.
    let mut fast = production.clone();
    fast.t_final = 50.0;
    fast.reference_dt = Some(production.dt / 2.0);
    fast.label = Some("damped-fast".into());
    let fast_err = run(&fast).unwrap().max_window_error.unwrap();
    println!("criterion 3 fast: T = 50 window error {fast_err:.3e} (need <= 1e-5)");
    assert!(fast_err <= 1e-5, "fast-suite window error {fast_err:.3e}");
}

/// Fourth-order convergence in dt on the soliton, three halvings inside the
/// asymptotic regime.
#[test]
fn criterion_04_rk4_order() {
    let grid = Grid::new(30.0, 1024).unwrap();
    let model = kdv(&grid);
    let initial = ic_by_name("kdv-soliton").unwrap().sample(&grid);
    let err_at = |dt: f64| -> f64 {
        let spec = EvolveSpec::new(model.clone(), dt, 1.0, DampingConfig::none(&grid));
        let phys = evolve(&initial, &spec).unwrap().final_field.to_physical();
        grid.points()
            .iter()
            .zip(&phys)
            .map(|(&x, &v)| {
                let s = 1.0 / (x - 4.0).cosh();
                (v - Complex64::new(2.0 * s * s, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    };
    let dts = [1.25e-3, 6.25e-4, 3.125e-4, 1.5625e-4];
    let errs: Vec<f64> = dts.iter().map(|&dt| err_at(dt)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    println!("criterion 4: errors [{}], observed orders {orders:.3?}", shown.join(", "));
    for (i, &p) in orders.iter().enumerate() {
        assert!(
            (3.7..=4.3).contains(&p),
            "halving {i}: observed order {p:.3} outside 4.0 +- 0.3 (errors {shown:?})"
        );
    }
}

/// Exact invariants drift only through roundoff over 10^4 steps.
#[test]
fn criterion_05_conservation() {
    let grid = Grid::new(30.0, 512).unwrap();
    let model = kdv(&grid);
    let initial = ic_by_name("kdv-soliton").unwrap().sample(&grid);
    let c0_before = grid.forward(&initial).unwrap().coeffs()[0];
    let spec = EvolveSpec::new(model, 1e-4, 1.0, DampingConfig::none(&grid));
    let result = evolve(&initial, &spec).unwrap();
    assert_eq!(result.steps_taken, 10_000);
    let c0_after = result.final_field.coeffs()[0];
    let kdv_drift = (c0_after - c0_before).norm() / c0_before.norm();
    println!("criterion 5: kdv mean-mode relative drift {kdv_drift:.3e} over 10^4 steps");
    assert!(kdv_drift <= 1e-10, "kdv c0 drift {kdv_drift:.3e}");

    let grid = Grid::new(20.0, 256).unwrap();
    let model = nls(&grid);
    let initial = ic_by_name("nls-packet").unwrap().sample(&grid);
    let norm_before = grid.forward(&initial).unwrap().l2_norm_sq();
    let spec = EvolveSpec::new(model, 0.01, 100.0, DampingConfig::none(&grid));
    let result = evolve(&initial, &spec).unwrap();
    assert_eq!(result.steps_taken, 10_000);
    let nls_drift = (result.final_field.l2_norm_sq() - norm_before).abs() / norm_before;
    println!("criterion 5: nls norm relative drift {nls_drift:.3e} over 10^4 steps at dt = 0.01");
    assert!(nls_drift <= 1e-8, "nls norm drift {nls_drift:.3e}");
}

/// Structural properties of the two damping operators.
#[test]
fn criterion_06_damping_operator_properties() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(0x0acce97);

    // (a) The sponge step never grows the l2 norm: 200 random fields.
    let grid = Grid::new(100.0, 128).unwrap();
    let cfg = DampingConfig::standard(&grid, DampingMode::Heat, GammaKind::Right).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let samples: Vec<Complex64> = (0..grid.modes())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let field = grid.forward(&samples).unwrap();
        let (stepped, _) = heat_step(&field, &cfg, 0.05).unwrap();
        worst = worst.max(stepped.l2_norm_sq() / field.l2_norm_sq());
        assert!(
            stepped.l2_norm_sq() <= field.l2_norm_sq() * (1.0 + 1e-12),
            "sponge step expanded a field by {:.3e}",
            stepped.l2_norm_sq() / field.l2_norm_sq() - 1.0
        );
    }
    println!("criterion 6a: worst sponge-step norm ratio {worst:.12} over 200 random fields");

    // (b) The decay mask contracts every physical sample.
    let profile = DampingProfile::standard(&grid, GammaKind::Even).unwrap();
    for _ in 0..20 {
        let samples: Vec<Complex64> = (0..grid.modes())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let field = grid.forward(&samples).unwrap();
        let masked = apply_decay(&field, &profile).unwrap().to_physical();
        for (before, after) in samples.iter().zip(&masked) {
            assert!(
                after.norm() <= before.norm() * (1.0 + 1e-12),
                "decay mask grew a sample: {} -> {}",
                before.norm(),
                after.norm()
            );
        }
    }
    println!("criterion 6b: decay mask contracted every sample on 20 random fields");

    // (c) The iterative sponge solve agrees with a dense direct solve.
    use nalgebra::{DMatrix, DVector};
    let grid = Grid::new(30.0, 64).unwrap();
    let m = grid.modes();
    let sigma: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| 0.4 + 0.3 * (x / 30.0 * PI).cos())
        .collect();
    let op = HeatOperator::new(&grid, &sigma, 1.0, 0.05, 1e-13, 100_000).unwrap();
    let mut bmat = DMatrix::<Complex64>::zeros(m, m);
    for j in 0..m {
        let mut e = vec![Complex64::new(0.0, 0.0); m];
        e[j] = Complex64::new(1.0, 0.0);
        let col = op.apply_b(&e);
        for i in 0..m {
            bmat[(i, j)] = col[i];
        }
    }
    let samples: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let field = grid.forward(&samples).unwrap();
    let rhs = DVector::from_vec(op.apply_a(field.coeffs()));
    let direct = bmat.lu().solve(&rhs).expect("B is positive definite");
    let (iterative, iters) = op.cn_step(&field).unwrap();
    let gap = max_norm_diff(iterative.coeffs(), direct.as_slice());
    println!("criterion 6c: iterative vs dense solve gap {gap:.3e} ({iters} iterations)");
    assert!(gap <= 1e-10, "solver gap {gap:.3e}");

    // (d) B is Hermitian: <Bu, v> = <u, Bv> on random pairs.
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let v: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let bu = op.apply_b(&u);
        let bv = op.apply_b(&v);
        worst = worst.max((inner(&bu, &v) - inner(&u, &bv)).norm());
    }
    println!("criterion 6d: worst Hermitian defect {worst:.3e} over 20 random pairs");
    assert!(worst <= 1e-10, "Hermitian defect {worst:.3e}");
}

/// The antiderivative operator reproduces a known primitive and inverts the
/// spectral derivative.
#[test]
fn criterion_07_antiderivative() {
    let grid = Grid::new(40.0, 1 << 12).unwrap();
    let ic = ic_by_name("riemann-logistic").unwrap();
    let derivative = grid.forward(&ic.sample(&grid)).unwrap();
    let left = ic.primitive_left(grid.half_width()).unwrap();
    let op = AntiderivativeOperator::new(&grid, left);
    let reconstructed = op.apply(&derivative).unwrap();
    let err = grid
        .points()
        .iter()
        .zip(&reconstructed)
        .map(|(&x, &v)| {
            let logistic = 1.0 / (1.0 + (10.0 * x).exp());
            (v - Complex64::new(logistic, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    println!("criterion 7: logistic reconstruction error {err:.3e}");
    assert!(err <= 1e-8, "antiderivative error {err:.3e}");

    let gaussian: Vec<f64> = grid.points().iter().map(|&x| (-x * x).exp()).collect();
    let residual = derivative_roundtrip_residual(&grid, &gaussian).unwrap();
    println!("criterion 7: gaussian derivative round-trip residual {residual:.3e}");
    assert!(residual <= 1e-10, "round-trip residual {residual:.3e}");
}

/// Damping keeps the state right of the dispersive shock at its asymptotic
/// value; without it the wrapped mass lifts the whole shelf. The fifth-order
/// model self-converges at fourth order over a short horizon.
#[test]
fn criterion_08_riemann_and_kawahara() {
    let shelf_mean = |config: &RunConfig| -> f64 {
        let grid = Grid::new(config.half_width, config.modes).unwrap();
        let model = build_model(config, &grid).unwrap();
        let initial = initial_samples(config, &grid).unwrap();
        let damping = build_damping(config, &grid).unwrap();
        let mut spec = EvolveSpec::new(model.clone(), config.dt, config.t_final, damping);
        spec.dealias = config.dealias;
        let result = evolve(&initial, &spec).expect("shock run must complete");
        let q = solution_samples(&model, &result.final_field).unwrap();
        let (mut sum, mut count) = (0.0, 0usize);
        for (&x, v) in grid.points().iter().zip(&q) {
            if (20.0..=35.0).contains(&x) {
                sum += v.re;
                count += 1;
            }
        }
        sum / count as f64
    };
    let damped_cfg = preset("riemann-kdv-t25").unwrap();
    let mut undamped_cfg = damped_cfg.clone();
    undamped_cfg.damping.mode = "none".into();
    let damped_mean = shelf_mean(&damped_cfg);
    let undamped_mean = shelf_mean(&undamped_cfg);
    println!(
        "criterion 8: shelf mean over [20, 35] is {damped_mean:.4} damped, {undamped_mean:.4} undamped (bound 0.02)"
    );
    assert!(
        damped_mean.abs() <= 0.02,
        "damped shelf drifted to {damped_mean:.4}"
    );
    // Without damping, radiation wraps around and lifts the whole shelf.
    assert!(
        undamped_mean.abs() > 0.02,
        "undamped run unexpectedly held the shelf at {undamped_mean:.4}"
    );

    // Fifth-order model: halving dt shrinks the self-difference 16-fold.
    // The pulse sits near the right sponge so its radiation reaches the
    // decay mask within the horizon; masks fire between fixed-length
    // segments so every step size sees identical mask times. The pulse
    // spectrum dies before |M| dt reaches 1, keeping RK4 asymptotic.
    let grid = Grid::new(200.0, 256).unwrap();
    let ctx = RiemannContext {
        c_minus: 0.0,
        epsilon: 1.0,
    };
    let model = kawahara(&grid, &ctx);
    let initial: Vec<Complex64> = grid
        .points()
        .iter()
        .map(|&x| {
            let s = ((x - 100.0) / 4.0).cosh();
            Complex64::new(0.5 / (s * s), 0.0)
        })
        .collect();
    let profile = DampingConfig::standard(&grid, DampingMode::Exp, GammaKind::Even)
        .unwrap()
        .profile;
    let solve = |dt: f64, damp: bool| -> Vec<Complex64> {
        let stepper = Rk4Stepper::new(&model, dt);
        let per_segment = (0.2 / dt).round() as usize;
        let mut c = grid.forward(&initial).unwrap();
        for segment in 0..5 {
            if damp && segment > 0 {
                c = apply_decay(&c, &profile).unwrap();
            }
            for _ in 0..per_segment {
                c = stepper.step(&c).unwrap();
            }
        }
        c.to_physical()
    };
    let mut finest: Vec<Vec<Complex64>> = Vec::new();
    for damp in [false, true] {
        let dts = [2e-2, 1e-2, 5e-3, 2.5e-3];
        let sols: Vec<Vec<Complex64>> = dts.iter().map(|&dt| solve(dt, damp)).collect();
        let errs: Vec<f64> = sols.windows(2).map(|w| max_norm_diff(&w[0], &w[1])).collect();
        let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        println!(
            "criterion 8: fifth-order self-convergence (damped = {damp}): errs {shown:?}, orders {orders:.3?}"
        );
        for order in &orders {
            assert!(
                (3.7..=4.3).contains(order),
                "self-convergence order {order:.3} (damped = {damp})"
            );
        }
        finest.push(sols.into_iter().next_back().unwrap());
    }
    // The mask genuinely acted: the two families disagree by far more than
    // their step errors.
    let family_gap = max_norm_diff(&finest[0], &finest[1]);
    println!("criterion 8: damped vs undamped family gap {family_gap:.3e}");
    assert!(family_gap > 1e-9, "decay mask was a no-op: gap {family_gap:.3e}");
}

/// The truncation bound chain dominates what it claims to bound.
#[test]
fn criterion_09_bound_chain() {
    // Lattice truncation: measured sup error within 10x of its bound at
    // every operating point (the bound itself dominates; the allowance
    // covers evaluation noise at the double-precision floor).
    let checks = undamped_bound_sweep(&[1.0, 2.0, 5.0], &[30.0, 50.0, 80.0], 0.25, 20.0, 41).unwrap();
    for c in &checks {
        println!(
            "criterion 9: t = {}, L = {}: measured {:.3e}, bound {:.3e}",
            c.t, c.half_width, c.measured, c.bound
        );
        assert!(
            c.measured <= 10.0 * c.bound + 1e-13,
            "t = {}, L = {}: measured {:.3e} above 10x bound {:.3e}",
            c.t,
            c.half_width,
            c.measured,
            c.bound
        );
    }

    // Damped tail inequality pointwise (quadrature noise allowance 2e-10).
    let wp = WavePacketParams::gaussian(50.0).unwrap();
    for &t in &[1.0, 2.0, 5.0] {
        let bound = damped_tail_bound(t, &wp).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..41 {
            let x = -20.0 + i as f64;
            let exact = exact_solution(x, t, &wp).unwrap();
            let heuristic = damped_heuristic_line(x, t, &wp).unwrap();
            worst = worst.max((exact - heuristic).norm());
        }
        println!("criterion 9: damped tail at t = {t}: worst gap {worst:.3e}, bound {bound:.3e}");
        assert!(
            worst <= bound + 2e-10,
            "t = {t}: damped heuristic gap {worst:.3e} above tail bound {bound:.3e}"
        );
    }

    // Periodic trapezoid bound on an analytic periodic integrand.
    let v = |theta: f64| theta.sin().exp();
    let reference = 7.954926521012853_f64;
    let strip_bound = 1f64.cosh().exp();
    for n in [4usize, 8, 16] {
        let approx: f64 = (0..n)
            .map(|j| v(2.0 * PI * j as f64 / n as f64))
            .sum::<f64>()
            * (2.0 * PI / n as f64);
        let err = (approx - reference).abs();
        let bound = trapezoid_bound_periodic(2.0 * PI, strip_bound, 1.0, n);
        println!("criterion 9: periodic rule N = {n}: error {err:.3e}, bound {bound:.3e}");
        assert!(
            err <= bound + 1e-12,
            "N = {n}: trapezoid error {err:.3e} above bound {bound:.3e}"
        );
    }

    // Whole-line trapezoid bound on the unit Gaussian.
    let strip_bound = PI.sqrt() * 1f64.exp();
    for &h in &[1.0, 0.5] {
        let mut approx = 0.0;
        let mut j: f64 = -60.0;
        while j * h <= 60.0 {
            approx += h * (-(j * h) * (j * h)).exp();
            j += 1.0;
        }
        let err = (approx - PI.sqrt()).abs();
        let bound = trapezoid_bound_line(strip_bound, 1.0, h);
        println!("criterion 9: line rule h = {h}: error {err:.3e}, bound {bound:.3e}");
        assert!(
            err <= bound + 1e-12,
            "h = {h}: trapezoid error {err:.3e} above bound {bound:.3e}"
        );
    }
}

/// Halving dt barely moves the damped production field: the window error is
/// already at its floor.
#[test]
fn criterion_10_error_floor() {
    let config = preset("kdv-t150").unwrap();
    let grid = Grid::new(config.half_width, config.modes).unwrap();
    let model = build_model(&config, &grid).unwrap();
    let initial = initial_samples(&config, &grid).unwrap();

    let field_at = |dt: f64, f2: usize| -> SpectralField {
        let mut cfg = config.clone();
        cfg.dt = dt;
        cfg.damping.f2 = f2;
        let damping = build_damping(&cfg, &grid).unwrap();
        evolve(&initial, &EvolveSpec::new(model.clone(), dt, 150.0, damping))
            .unwrap()
            .final_field
    };
    // f2 scales with 1/dt so the decay mask fires at the same times.
    let coarse = field_at(0.01, 1000);
    let fine = field_at(0.005, 2000);
    let diff = compare_fields_on_window(&coarse, &fine, (-99.85, 100.05)).unwrap();
    println!("criterion 10: dt 0.01 vs 0.005 window difference {diff:.3e}");
    assert!(diff <= 1e-7, "dt-halving difference {diff:.3e}");
}

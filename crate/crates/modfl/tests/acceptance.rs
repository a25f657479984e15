//! Acceptance suite.
//!
//! One test per criterion; each prints a single `acceptance NN name: PASS`
//! line (visible with `--nocapture`). Tolerances are pinned in the
//! assertions. The qualitative-pattern criterion is soft: it prints WARN
//! instead of failing, because the underlying claim is data-dependent.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use modfl::accounting::{eps_budget_to_per_round_rho, zcdp_to_eps, BudgetMode, ClipMode, PrivacyBudget};
use modfl::bounds::{
    convergence_bound, crb_phase_averaged, modulation_curvature, uniform_variance_bound, BoundConstants,
    ReconstructionContext,
};
use modfl::estimators::{least_squares_objective, ols};
use modfl::model::{OrthonormalSet, ProtocolParams, StepRule};
use modfl::modulation::{modulate, privatize, privatize_single, PhaseVector};
use modfl::protocol::{
    aggregate_second_moment, debias_covariance, debias_cross_moment, gradient_estimate, operator_norm, FederatedRun,
};
use modfl::report::Record;
use modfl::rng::{Purpose, RngStream};
use modfl::simulator::{
    crossover_report, generate_synthetic, prepare_splits, run_sweep, Method, SweepConfig,
};
use modfl::validate::{
    mean_covariance_error, validate_block_norms, validate_centering_identity, validate_covariance_debias,
    validate_expected_expansion, validate_gradient_variance, validate_scalar_moments, validate_sensitivity,
    validate_unbiasedness, McConfig, McInstance,
};

fn report(index: u32, name: &str, pass: bool, details: &str) {
    println!("acceptance {index:02} {name}: {} ({details})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance {index:02} {name} failed: {details}");
}

fn fixed_params(alpha: f64, lambda: f64, omega: f64) -> ProtocolParams {
    ProtocolParams::new(alpha, lambda, omega, 1, f64::INFINITY, StepRule::Fixed(0.1), 1).unwrap()
}

/// Spearman rank correlation of a series against its own index order.
fn spearman_with_index(values: &[f64]) -> f64 {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut rank = vec![0.0f64; n];
    for (r, &idx) in order.iter().enumerate() {
        rank[idx] = r as f64;
    }
    let mean = (n as f64 - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (i, &r) in rank.iter().enumerate() {
        cov += (i as f64 - mean) * (r - mean);
        var += (i as f64 - mean) * (i as f64 - mean);
    }
    cov / var
}

#[test]
fn criterion_01_gradient_unbiasedness() {
    let started = Instant::now();
    let task = generate_synthetic(500, 8, 1.0, 0.4, 2.0, 811).unwrap();
    let streams = RngStream::new(813);
    let mut beta_rng = streams.derive(Purpose::Validation, 50, 0);
    let beta = DVector::from_fn(8, |_, _| 0.4 * beta_rng.sample::<f64, _>(StandardNormal));
    let params = fixed_params(0.5, 0.25, 1.2);
    let mut instance = McInstance::orthogonal_direction(&task.data, beta, params, 0.5, 815).unwrap();
    let rep = validate_unbiasedness(&mut instance, McConfig::new(100_000, 817));
    let elapsed = started.elapsed();
    report(
        1,
        "gradient-unbiasedness",
        rep.pass && elapsed.as_secs() < 60,
        &format!("worst coordinate {} dev {:.3e} se {:.3e}, {:?}", rep.name, (rep.estimate - rep.expected).abs(), rep.std_error, elapsed),
    );
}

#[test]
fn criterion_02_covariance_debiasing_and_consistency() {
    let task = generate_synthetic(60, 6, 1.0, 0.4, 1.5, 821).unwrap();
    let streams = RngStream::new(823);
    let mut beta_rng = streams.derive(Purpose::Validation, 51, 0);
    let beta = DVector::from_fn(6, |_, _| 0.4 * beta_rng.sample::<f64, _>(StandardNormal));
    let params = fixed_params(0.5, 0.25, 1.2);
    let mut instance = McInstance::orthogonal_direction(&task.data, beta, params.clone(), 0.5, 825).unwrap();
    let rep = validate_covariance_debias(&mut instance, McConfig::new(100_000, 827));

    // Error shrinks as the client count grows, on matched seeds.
    let small = generate_synthetic(100, 6, 1.0, 0.4, 1.5, 829).unwrap();
    let large = generate_synthetic(10_000, 6, 1.0, 0.4, 1.5, 829).unwrap();
    let zero = DVector::zeros(6);
    let mut small_inst = McInstance::orthogonal_direction(&small.data, zero.clone(), params.clone(), 0.5, 5).unwrap();
    let mut large_inst = McInstance::orthogonal_direction(&large.data, zero, params, 0.5, 5).unwrap();
    let err_small = mean_covariance_error(&mut small_inst, 10, 831);
    let err_large = mean_covariance_error(&mut large_inst, 10, 831);

    report(
        2,
        "covariance-debiasing",
        rep.pass && err_large < err_small,
        &format!("entrywise mc {}; error K=1e4 {err_large:.4} < K=1e2 {err_small:.4}", if rep.pass { "ok" } else { "FAIL" }),
    );
}

#[test]
fn criterion_03_variance_formula() {
    let mut all_pass = true;
    let mut worst = 0.0f64;
    let streams = RngStream::new(839);
    for i in 0..10u64 {
        let mut gen = streams.derive(Purpose::Validation, 52, i);
        let k = gen.gen_range(24..64usize);
        let d = gen.gen_range(3..8usize);
        let alpha = gen.gen_range(0.25..0.75);
        let lambda = gen.gen_range(0.05..0.45);
        let omega = gen.gen_range(0.6..1.8);
        let sigma = gen.gen_range(0.2..0.9);
        let task = generate_synthetic(k, d, gen.gen_range(0.4..1.3), gen.gen_range(0.1..0.5), gen.gen_range(1.0..3.0), 841 + i).unwrap();
        let beta = DVector::from_fn(d, |_, _| 0.5 * gen.sample::<f64, _>(StandardNormal));
        let params = fixed_params(alpha, lambda, omega);
        let mut instance = McInstance::orthogonal_direction(&task.data, beta, params, sigma, 843 + i).unwrap();
        let rep = validate_gradient_variance(&mut instance, McConfig::new(100_000, 845 + i)).unwrap();
        let standardized = (rep.estimate - rep.expected).abs() / rep.std_error.max(1e-300);
        worst = worst.max(standardized);
        if !rep.pass {
            all_pass = false;
        }
    }
    report(3, "variance-formula", all_pass, &format!("10 instances, worst deviation {worst:.2} se (limit 5)"));
}

#[test]
fn criterion_04_centering_and_moment_identities() {
    let task = generate_synthetic(200, 6, 1.0, 0.4, 2.0, 851).unwrap();
    let streams = RngStream::new(853);
    let mut beta_rng = streams.derive(Purpose::Validation, 53, 0);
    let beta = DVector::from_fn(6, |_, _| 0.4 * beta_rng.sample::<f64, _>(StandardNormal));
    let params = fixed_params(0.5, 0.25, 1.2);

    let mut instance = McInstance::orthogonal_direction(&task.data, beta.clone(), params.clone(), 0.5, 855).unwrap();
    let centering = validate_centering_identity(&mut instance, McConfig::new(200, 857));

    let blocks_task = generate_synthetic(60, 5, 1.0, 0.4, 1.5, 859).unwrap();
    let mut blocks_beta_rng = streams.derive(Purpose::Validation, 54, 0);
    let blocks_beta = DVector::from_fn(5, |_, _| 0.5 * blocks_beta_rng.sample::<f64, _>(StandardNormal));
    let mut blocks_instance =
        McInstance::orthogonal_direction(&blocks_task.data, blocks_beta.clone(), params.clone(), 0.6, 861).unwrap();
    let blocks = validate_block_norms(&mut blocks_instance, McConfig::new(100_000, 863));

    let scalars = validate_scalar_moments(0.7, &blocks_beta, McConfig::new(100_000, 865));

    let mut pair_rng = streams.derive(Purpose::Validation, 55, 0);
    let xa = DVector::from_fn(5, |_, _| pair_rng.sample::<f64, _>(StandardNormal));
    let xb = DVector::from_fn(5, |_, _| pair_rng.sample::<f64, _>(StandardNormal));
    let mut v = DVector::from_fn(5, |_, _| pair_rng.sample::<f64, _>(StandardNormal));
    v /= v.norm();
    let expansion = validate_expected_expansion(&xa, &xb, &v, &params, McConfig::new(100_000, 867)).unwrap();

    let mut failures = Vec::new();
    if !centering.pass {
        failures.push(format!("centering deviation {:.2e}", centering.estimate));
    }
    for rep in blocks.iter().chain(scalars.iter()).chain(std::iter::once(&expansion)) {
        if !rep.pass {
            failures.push(format!("{rep}"));
        }
    }
    report(
        4,
        "appendix-identities",
        failures.is_empty(),
        &format!(
            "centering max dev {:.2e} (tol 1e-10); {} block/scalar/expansion checks{}",
            centering.estimate,
            blocks.len() + scalars.len() + 1,
            if failures.is_empty() { String::new() } else { format!("; failures: {failures:?}") },
        ),
    );
}

#[test]
fn criterion_05_sensitivity_bound_and_tightness() {
    let mut details = Vec::new();
    let mut all_pass = true;
    for (m, lambda) in [(1usize, 0.2f64), (3, 0.3)] {
        let params = ProtocolParams::new(0.5, lambda, 1.0, m, f64::INFINITY, StepRule::Fixed(0.1), 1).unwrap();
        let reports = validate_sensitivity(&params, 10_000, 871 + m as u64).unwrap();
        for rep in &reports {
            if !rep.pass {
                all_pass = false;
            }
        }
        details.push(format!("m={m}: max ratio {:.4} of L={:.4}", reports[1].estimate, reports[1].expected));
    }
    report(5, "sensitivity-bound", all_pass, &details.join("; "));
}

#[test]
fn criterion_06_single_vector_reduction_bit_exact() {
    let params = fixed_params(0.45, 0.3, 1.1);
    let sigma_dp = 0.4;
    let streams = RngStream::new(877);
    let k = 30;
    let d = 5;
    for round in 0..100u64 {
        let mut dir_rng = streams.derive(Purpose::Direction, round, 0);
        let set = OrthonormalSet::generate(d, 1, None, &mut dir_rng).unwrap();
        let v = set.column(0);

        let mut payloads_multi = Vec::with_capacity(k);
        let mut payloads_single = Vec::with_capacity(k);
        let mut ys = Vec::with_capacity(k);
        for i in 0..k as u64 {
            let mut data_rng = streams.derive(Purpose::Validation, round, i);
            let x = DVector::from_fn(d, |_, _| data_rng.sample::<f64, _>(StandardNormal));
            let y: f64 = data_rng.sample(StandardNormal);
            let mut rng_multi = streams.derive(Purpose::Client, round, i);
            let mut rng_single = streams.derive(Purpose::Client, round, i);
            payloads_multi.push(privatize(&x, &set, &params, sigma_dp, &mut rng_multi).unwrap());
            payloads_single.push(privatize_single(&x, &v, &params, sigma_dp, &mut rng_single));
            ys.push(y);
        }
        assert_eq!(payloads_multi, payloads_single, "round {round}: payloads diverge");

        let payloads: Vec<modfl::model::ClientPayload> = payloads_multi
            .iter()
            .zip(&ys)
            .map(|(g, &y)| modfl::model::ClientPayload::new(g.clone(), y).unwrap())
            .collect();
        let raw = aggregate_second_moment(&payloads).unwrap();
        let multi_cov = debias_covariance(&raw, &set, &params, sigma_dp).unwrap();

        // Dedicated single-vector server correction.
        let projector = &v * v.transpose();
        let coeff = params.lambda * params.lambda / 2.0;
        let noise = sigma_dp * sigma_dp;
        let mut single_cov = raw.clone();
        for i in 0..d {
            for j in 0..d {
                single_cov[(i, j)] -= coeff * projector[(i, j)];
            }
            single_cov[(i, i)] -= noise;
        }
        single_cov /= (1.0 - params.alpha) * (1.0 - params.alpha);
        assert_eq!(multi_cov, single_cov, "round {round}: debiased covariance diverges");

        let beta = DVector::from_fn(d, |j, _| 0.1 * (j as f64 + 1.0));
        let z = debias_cross_moment(&payloads, &params).unwrap();
        let g_multi = gradient_estimate(&multi_cov, &z, &beta).unwrap();
        let g_single = gradient_estimate(&single_cov, &z, &beta).unwrap();
        assert_eq!(g_multi, g_single, "round {round}: gradients diverge");
    }
    report(6, "single-vector-reduction", true, "100 rounds bit-identical payloads, covariances, gradients");
}

#[test]
fn criterion_07_accounting() {
    // Conversion round trips over the default grid.
    let config = SweepConfig::default();
    let mut worst = 0.0f64;
    for &eps in &config.eps_grid {
        for delta in [1e-5, 1e-6] {
            let split = eps_budget_to_per_round_rho(eps, delta, 10).unwrap();
            let back = zcdp_to_eps(split.rho_total, delta).unwrap();
            worst = worst.max((back - eps).abs());
            assert!((back - eps).abs() <= 1e-10, "round trip at eps={eps}, delta={delta}");
        }
    }

    // Ledger shapes and honesty on a small sweep.
    let task = generate_synthetic(400, 3, 1.0, 0.2, 1.0, 881).unwrap();
    let splits = prepare_splits(&task.data, (0.6, 0.2, 0.2), 883, ClipMode::None).unwrap();
    let sweep = SweepConfig {
        eps_grid: vec![1.0, 5.0],
        rounds: 10,
        iterative_c_grid: vec![0.5],
        oneshot_ridge_grid: vec![0.5],
        dpsgd_clip_grid: vec![1.0],
        dpsgd_lr_grid: vec![0.1],
        seeds: vec![1, 2],
        ..SweepConfig::default()
    };
    let result = run_sweep(&sweep, &splits).unwrap();
    for row in &result.rows {
        let expected_entries = match row.method {
            Method::ModulatedOneshot => 1,
            _ => 10,
        };
        assert_eq!(row.ledger.per_round_rho.len(), expected_entries, "{:?}", row.method);
        assert!(
            row.ledger.eps_converted <= row.eps + 1e-9,
            "{:?} at eps {}: ledger {}",
            row.method,
            row.eps,
            row.ledger.eps_converted
        );
    }
    report(
        7,
        "privacy-accounting",
        true,
        &format!("round-trip worst error {worst:.2e}; ledgers sized 1/10/10 and within declared budgets"),
    );
}

#[test]
fn criterion_08_convergence() {
    // Noise-free protocol reaches the least-squares solution.
    let task = generate_synthetic(300, 4, 1.0, 0.2, 1.0, 887).unwrap();
    let params = ProtocolParams::new(0.5, 0.0, 1.0, 1, f64::INFINITY, StepRule::Fixed(0.5), 500).unwrap();
    let budget = PrivacyBudget {
        mode: BudgetMode::Zcdp { rho_total: 1.0, delta: 1e-5 },
        rounds: 500,
        sensitivity: 0.5,
        sigma_dp: 0.0,
        rho_per_round: 0.0,
    };
    let mut run = FederatedRun::new(&task.data, params, budget, RngStream::new(889)).unwrap();
    run.run_all().unwrap();
    let target = ols(&task.data).unwrap();
    let distance = (&run.state.beta - &target).norm();
    assert!(distance <= 1e-3, "noise-free distance to OLS: {distance}");

    // With noise, the averaged iterate's measured excess risk stays under the
    // closed-form bound on at least 18 of 20 random instances.
    let streams = RngStream::new(891);
    let mut passes = 0;
    let mut ratios = Vec::new();
    for i in 0..20u64 {
        let mut gen = streams.derive(Purpose::Validation, 60, i);
        let d = gen.gen_range(3..6usize);
        let k = 600;
        let rounds = 40;
        let task = generate_synthetic(
            k,
            d,
            gen.gen_range(0.5..1.5),
            gen.gen_range(0.1..0.5),
            gen.gen_range(1.0..4.0),
            893 + i,
        )
        .unwrap();
        let beta_ols = ols(&task.data).unwrap();
        let radius = 2.0 * beta_ols.norm() + 0.5;
        let sigma_dp = gen.gen_range(0.15..0.5);
        let alpha = gen.gen_range(0.35..0.65);
        let lambda = gen.gen_range(0.05..0.25);

        let sigma_x = task.data.x().transpose() * task.data.x() / k as f64;
        let l_dp = operator_norm(&sigma_x).unwrap();
        let eta = 1.0 / l_dp;

        let consts = BoundConstants {
            beta_bound: radius,
            feature_bound: task.data.max_row_norm(),
            response_bound: task.data.y().iter().fold(0.0f64, |a, &v| a.max(v.abs())),
        };
        let params = ProtocolParams::new(alpha, lambda, 1.0, 1, radius, StepRule::Fixed(eta), rounds).unwrap();
        let sigma_bar_sq = uniform_variance_bound(&consts, &params, sigma_dp, k, d).unwrap();
        let bound = convergence_bound(l_dp, beta_ols.norm_squared(), rounds, sigma_bar_sq, k).unwrap();

        let f_star = least_squares_objective(&beta_ols, &task.data);
        let mut excess_sum = 0.0;
        let reps = 6;
        for rep in 0..reps {
            let budget = PrivacyBudget {
                mode: BudgetMode::Zcdp { rho_total: 1.0, delta: 1e-5 },
                rounds,
                sensitivity: 1.0,
                sigma_dp,
                rho_per_round: 1.0 / rounds as f64,
            };
            let mut run =
                FederatedRun::new(&task.data, params.clone(), budget, RngStream::new(10_000 + 100 * i + rep)).unwrap();
            run.run_all().unwrap();
            excess_sum += least_squares_objective(&run.beta_averaged(), &task.data) - f_star;
        }
        let measured = excess_sum / reps as f64;
        ratios.push(measured / bound);
        if measured <= bound {
            passes += 1;
        }
    }
    let worst_ratio = ratios.iter().cloned().fold(0.0f64, f64::max);
    report(
        8,
        "convergence",
        passes >= 18,
        &format!("noise-free distance {distance:.2e}; noisy instances {passes}/20 under bound (worst measured/bound {worst_ratio:.3})"),
    );
}

#[test]
fn criterion_09_reconstruction_bounds() {
    let streams = RngStream::new(907);

    // Finite-difference Jacobian Gram vs the closed form.
    let params = fixed_params(0.5, 0.3, 1.3);
    let mut fd_worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = streams.derive(Purpose::Validation, 61, i);
        let d = 5;
        let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        v /= v.norm();
        let set = OrthonormalSet::from_basis(DMatrix::from_column_slice(d, 1, v.as_slice())).unwrap();
        let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phases = PhaseVector::new(vec![phi]).unwrap();
        let mut jac = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let gp = modulate(&xp, &set, &phases, &params).unwrap();
            let gm = modulate(&xm, &set, &phases, &params).unwrap();
            jac.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        let gram = jac.transpose() * &jac;
        let theta = params.omega * x.dot(&v) + phi;
        let c1 = modulation_curvature(theta, params.alpha, params.lambda, params.omega);
        let mut expected = DMatrix::identity(d, d) * 0.25;
        expected.ger(c1, &v, &v, 1.0);
        fd_worst = fd_worst.max((gram - expected).norm());
    }
    assert!(fd_worst <= 1e-6, "finite-difference Gram deviation {fd_worst}");

    // Trace inequality on 100 random information matrices.
    let ctx_base = ReconstructionContext {
        alpha: 0.5,
        lambda: 0.3,
        omega: 1.3,
        sigma_dp: 0.8,
        sigma_y: 1.1,
        beta_star: DVector::from_row_slice(&[0.5, -0.4, 0.3, 0.2, 0.1]),
    };
    for i in 0..100u64 {
        let mut rng = streams.derive(Purpose::Validation, 62, i);
        let d = 5;
        let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        v /= v.norm();
        let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let info = modfl::bounds::fisher_information(&ctx_base, &x, &v, phi).unwrap();
        let inv = info.clone().try_inverse().expect("invertible");
        assert!(
            inv.trace() >= (d as f64).powi(2) / info.trace() - 1e-10,
            "trace inequality violated at instance {i}"
        );
    }

    // Phase-averaged curvature.
    let mut rng = streams.derive(Purpose::Validation, 63, 0);
    let d = 5;
    let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    v /= v.norm();
    let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = 200_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let theta = ctx_base.omega * x.dot(&v) + phi;
        let c1 = modulation_curvature(theta, ctx_base.alpha, ctx_base.lambda, ctx_base.omega);
        sum += c1;
        sum_sq += c1 * c1;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
    let target = ctx_base.lambda * ctx_base.lambda * ctx_base.omega * ctx_base.omega / 2.0;
    assert!(
        (mean - target).abs() <= 4.0 * se,
        "phase-averaged curvature {mean} vs {target} (se {se})"
    );

    // Monotonicity of the phase-averaged bound in the noise scale.
    let mut last = 0.0;
    for step in 1..=10 {
        let mut ctx = ctx_base.clone();
        ctx.sigma_dp = 0.2 * step as f64;
        let b = crb_phase_averaged(&ctx, d).unwrap();
        assert!(b > last, "bound not increasing at step {step}");
        last = b;
    }

    report(
        9,
        "reconstruction-bounds",
        true,
        &format!("fd Gram worst {fd_worst:.2e}; trace inequality 100/100; curvature mean within {:.2} se", ((mean - target).abs() / se)),
    );
}

#[test]
fn criterion_10_qualitative_privacy_utility_pattern() {
    // Soft criterion: the pattern is data-dependent, so deviations produce a
    // warning report instead of a failure.
    let task = generate_synthetic(5000, 5, 1.0, 0.1, 1.0, 20260808).unwrap();
    let splits = prepare_splits(&task.data, (0.6, 0.2, 0.2), 4242, ClipMode::None).unwrap();
    let config = SweepConfig::default();
    let result = run_sweep(&config, &splits).unwrap();
    assert_eq!(
        result.rows.len(),
        config.methods.len() * config.eps_grid.len() * config.seeds.len(),
        "sweep must fill the whole grid"
    );

    let cross = crossover_report(&result).unwrap();
    let (lo_eps, lo_one, lo_iter) = cross.per_eps.first().copied().unwrap();
    let (hi_eps, hi_one, hi_iter) = cross.per_eps.last().copied().unwrap();

    let mut warnings = Vec::new();
    // Utility grows with the privacy budget: Spearman correlation between
    // epsilon and median R^2 per method.
    for &method in &config.methods {
        let medians: Vec<f64> = config
            .eps_grid
            .iter()
            .map(|&eps| {
                let mut vals: Vec<f64> =
                    result.rows.iter().filter(|r| r.method == method && r.eps == eps).map(|r| r.r2).collect();
                vals.sort_by(f64::total_cmp);
                vals[vals.len() / 2]
            })
            .collect();
        let rho = spearman_with_index(&medians);
        if rho < 0.8 {
            warnings.push(format!("{} median R^2 not monotone-ish in eps (Spearman {rho:.2})", method.name()));
        }
    }
    if lo_one < lo_iter {
        warnings.push(format!("one-shot ({lo_one:.3}) below iterative ({lo_iter:.3}) at eps={lo_eps}"));
    }
    if hi_iter < hi_one {
        warnings.push(format!("iterative ({hi_iter:.3}) below one-shot ({hi_one:.3}) at eps={hi_eps}"));
    }
    if hi_one < result.ols_r2 - 0.05 {
        warnings.push(format!("one-shot at eps={hi_eps} ({hi_one:.3}) more than 0.05 under OLS ({:.3})", result.ols_r2));
    }
    if hi_iter < result.ols_r2 - 0.05 {
        warnings.push(format!("iterative at eps={hi_eps} ({hi_iter:.3}) more than 0.05 under OLS ({:.3})", result.ols_r2));
    }

    if warnings.is_empty() {
        println!(
            "acceptance 10 qualitative-pattern: PASS (eps={lo_eps}: one-shot {lo_one:.3} >= iterative {lo_iter:.3}; eps={hi_eps}: iterative {hi_iter:.3} >= one-shot {hi_one:.3}; OLS {:.3})",
            result.ols_r2
        );
    } else {
        println!("acceptance 10 qualitative-pattern: WARN (soft criterion; {})", warnings.join("; "));
    }
}

#[test]
fn criterion_11_sweep_determinism() {
    let task = generate_synthetic(800, 4, 1.0, 0.2, 1.5, 911).unwrap();
    let splits = prepare_splits(&task.data, (0.6, 0.2, 0.2), 913, ClipMode::GlobalMaxNorm).unwrap();
    let config = SweepConfig {
        eps_grid: vec![0.5, 2.0, 10.0],
        rounds: 5,
        iterative_c_grid: vec![0.5, 1.0],
        oneshot_ridge_grid: vec![0.2, 1.0],
        dpsgd_clip_grid: vec![1.0],
        dpsgd_lr_grid: vec![0.1],
        seeds: vec![1, 2, 3],
        ..SweepConfig::default()
    };

    let render = |cfg: &SweepConfig| -> String {
        let result = run_sweep(cfg, &splits).unwrap();
        let mut out = String::new();
        for row in &result.rows {
            out.push_str(&Record::new("sweep_row", row).to_json_line().unwrap());
            out.push('\n');
        }
        out.push_str(&Record::new("sweep_summary", serde_json::json!({
            "ols_r2": result.ols_r2,
            "selected": result.selected,
        })).to_json_line().unwrap());
        out.push('\n');
        out
    };

    let first = render(&config);
    let second = render(&config);
    assert_eq!(first.len(), second.len());
    assert!(first == second, "rendered sweep records differ between identical runs");
    report(11, "sweep-determinism", true, &format!("{} bytes of records byte-identical across reruns", first.len()));
}

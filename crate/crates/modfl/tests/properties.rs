//! Property tests for the structural invariants of the client map, the
//! accounting conversions, and the data plumbing.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use modfl::accounting::{eps_budget_to_per_round_rho, tradeoff_curve, zcdp_to_eps};
use modfl::model::{Dataset, OrthonormalSet, ProtocolParams, StepRule};
use modfl::modulation::{lipschitz_constant, modulate, modulate_single, PhaseVector};
use modfl::protocol::update_beta;
use modfl::rng::{Purpose, RngStream};

fn params(alpha: f64, lambda: f64, omega: f64, m: usize) -> ProtocolParams {
    ProtocolParams::new(alpha, lambda, omega, m, f64::INFINITY, StepRule::Fixed(0.1), 1).unwrap()
}

fn vector(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = RngStream::new(seed).derive(Purpose::Validation, 99, 0);
    DVector::from_fn(dim, |_, _| rand::Rng::gen_range(&mut rng, -3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn modulation_is_lipschitz(
        alpha in 0.05f64..0.95,
        lambda in 0.0f64..0.6,
        omega in 0.2f64..2.5,
        m in 1usize..4,
        seed in 0u64..u64::MAX / 2,
    ) {
        let dim = 6;
        let p = params(alpha, lambda, omega, m);
        let streams = RngStream::new(seed);
        let mut dir_rng = streams.derive(Purpose::Direction, 0, 0);
        let set = OrthonormalSet::generate(dim, m, None, &mut dir_rng).unwrap();
        let mut rng = streams.derive(Purpose::Validation, 0, 0);
        let phases = PhaseVector::sample(m, &mut rng);
        let x = vector(dim, seed ^ 1);
        let x2 = vector(dim, seed ^ 2);
        let g1 = modulate(&x, &set, &phases, &p).unwrap();
        let g2 = modulate(&x2, &set, &phases, &p).unwrap();
        let l = lipschitz_constant(&p);
        prop_assert!((g1 - g2).norm() <= l * (&x - &x2).norm() + 1e-12);
    }

    #[test]
    fn single_vector_reduction_is_bit_exact(
        alpha in 0.05f64..0.95,
        lambda in 0.0f64..0.6,
        omega in 0.2f64..2.5,
        seed in 0u64..u64::MAX / 2,
    ) {
        let dim = 5;
        let p = params(alpha, lambda, omega, 1);
        let streams = RngStream::new(seed);
        let mut dir_rng = streams.derive(Purpose::Direction, 0, 0);
        let set = OrthonormalSet::generate(dim, 1, None, &mut dir_rng).unwrap();
        let mut rng = streams.derive(Purpose::Validation, 1, 0);
        let phases = PhaseVector::sample(1, &mut rng);
        let x = vector(dim, seed ^ 3);
        let multi = modulate(&x, &set, &phases, &p).unwrap();
        let single = modulate_single(&x, &set.column(0), phases.as_slice()[0], &p);
        prop_assert_eq!(multi, single);
    }

    #[test]
    fn tradeoff_curve_shape(
        eps in 0.0f64..4.0,
        delta in 0.0f64..0.2,
    ) {
        let grid: Vec<f64> = (0..=60).map(|i| i as f64 / 60.0).collect();
        let f: Vec<f64> = grid.iter().map(|&a| tradeoff_curve(eps, delta, a).unwrap()).collect();
        for w in f.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        for w in f.windows(3) {
            prop_assert!(w[0] + w[2] >= 2.0 * w[1] - 1e-12);
        }
        prop_assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zcdp_budget_round_trip(
        eps in 0.05f64..20.0,
        delta_exp in 2.0f64..8.0,
        rounds in 1usize..30,
    ) {
        let delta = 10f64.powf(-delta_exp);
        let split = eps_budget_to_per_round_rho(eps, delta, rounds).unwrap();
        let back = zcdp_to_eps(split.rho_total, delta).unwrap();
        prop_assert!((back - eps).abs() <= 1e-10 * eps.max(1.0));
    }

    #[test]
    fn projected_update_stays_in_ball(
        bx in -5.0f64..5.0, by in -5.0f64..5.0,
        gx in -5.0f64..5.0, gy in -5.0f64..5.0,
        step in 0.01f64..3.0,
        radius in 0.1f64..4.0,
    ) {
        let beta = DVector::from_row_slice(&[bx, by]);
        let grad = DVector::from_row_slice(&[gx, gy]);
        let next = update_beta(&beta, &grad, step, radius);
        prop_assert!(next.norm() <= radius + 1e-12);
    }

    #[test]
    fn standardize_round_trip_and_split_partition(
        seed in 0u64..u64::MAX / 2,
        k in 6usize..40,
    ) {
        let streams = RngStream::new(seed);
        let mut rng = streams.derive(Purpose::DataGen, 0, 0);
        let x = DMatrix::from_fn(k, 3, |_, _| rand::Rng::gen_range(&mut rng, -10.0..10.0));
        let y = DVector::from_fn(k, |_, _| rand::Rng::gen_range(&mut rng, -10.0..10.0));
        let data = Dataset::new(x, y).unwrap();

        let back = data.standardize().unwrap().inverse_standardize().unwrap();
        for (a, b) in data.x().iter().zip(back.x().iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        let (tr, va, te) = data.split((0.5, 0.25, 0.25), seed).unwrap();
        prop_assert_eq!(tr.n_clients() + va.n_clients() + te.n_clients(), k);
        let (tr2, ..) = data.split((0.5, 0.25, 0.25), seed).unwrap();
        prop_assert_eq!(tr, tr2);
    }
}

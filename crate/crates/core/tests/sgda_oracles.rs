use brm_core::mdp::{Policy, TabularMdp};
use brm_core::sgda::{draw_indices, harmonic_stepsize, initial_point, suboptimality_curve};
use brm_core::stability::solve_saddle;
use brm_core::{
    generate_dataset, run_sgda, BrmError, IndexLog, IndexSampling, InitMode, ParamPoint,
    Parameterization, SaddleObjective, SamplingMode, SgdaRunConfig, TransitionDataset,
};
use proptest::prelude::*;

fn setup(beta: f64, n: usize) -> (TransitionDataset, Parameterization, SaddleObjective) {
    let mdp = TabularMdp::random(3, 2, beta, 1).unwrap();
    let data = generate_dataset(
        &mdp,
        &Policy::uniform(3, 2),
        n,
        SamplingMode::IidPairs,
        3,
        2,
    )
    .unwrap();
    let param = Parameterization::tabular(&data);
    let obj = SaddleObjective::from_dataset(&param, beta, &data).unwrap();
    (data, param, obj)
}

fn cfg(batch: usize, iterations: usize) -> SgdaRunConfig {
    SgdaRunConfig {
        batch_size: batch,
        c1: 2.0,
        c2: 20.0,
        iterations,
        seed: 5,
        record_every: 0,
        log_objective: false,
        ..Default::default()
    }
}

#[test]
fn full_batch_single_step_is_a_gradient_step() {
    let (data, param, obj) = setup(0.9, 60);
    let c = SgdaRunConfig {
        sampling: IndexSampling::WithoutReplacement,
        ..cfg(60, 1)
    };
    let init = ParamPoint::new(
        vec![0.5, -0.2, 1.0, 0.0, 0.3, 0.8],
        vec![0.1; param.dim_dual()],
    );
    let out = run_sgda(&param, 0.9, &data, &c, &init, None)
        .unwrap()
        .final_point;
    let g = obj.eval(&init);
    let eta = 2.0 / 20.0;
    for k in 0..6 {
        assert!((out.w[k] - (init.w[k] - eta * g.grad_w[k])).abs() < 1e-14);
    }
    for k in 0..param.dim_dual() {
        assert!((out.v[k] - (init.v[k] + eta * g.grad_v[k])).abs() < 1e-14);
    }
}

#[test]
fn replaying_the_logged_indices_reproduces_the_run_bitwise() {
    let (data, param, obj) = setup(0.9, 80);
    let c = SgdaRunConfig {
        record_every: 7,
        log_objective: true,
        ..cfg(4, 500)
    };
    let init = initial_point(&obj, InitMode::DualOptimal);
    let a = run_sgda(&param, 0.9, &data, &c, &init, None).unwrap();
    let b = run_sgda(&param, 0.9, &data, &c, &init, Some(&a.index_log)).unwrap();
    assert_eq!(a, b);
    // A different index stream changes the run.
    let other = SgdaRunConfig {
        index_stream: 1,
        ..c.clone()
    };
    assert_ne!(
        run_sgda(&param, 0.9, &data, &other, &init, None)
            .unwrap()
            .final_point,
        a.final_point
    );
    // Recorded at 0, every 7th step and the last step.
    let ts: Vec<usize> = a.iterates.iter().map(|(t, _)| *t).collect();
    assert_eq!(ts.first(), Some(&0));
    assert_eq!(ts.last(), Some(&500));
    assert!(ts[1..ts.len() - 1].iter().all(|t| t % 7 == 0));
    assert_eq!(a.objective_log.len(), ts.len());
}

#[test]
fn hand_written_index_sets_drive_the_updates() {
    let (data, param, obj) = setup(0.5, 30);
    let c = cfg(2, 3);
    let log = IndexLog::from_batches(2, &[vec![0, 1], vec![2, 2], vec![29, 3]]).unwrap();
    let init = initial_point(&obj, InitMode::Zero);
    let out = run_sgda(&param, 0.5, &data, &c, &init, Some(&log)).unwrap();
    // Reference: the averaged objective of each chosen minibatch.
    let mut p = init.clone();
    for (t, b) in log.batches().enumerate() {
        let samples: Vec<_> = b.iter().map(|&i| data.samples[i]).collect();
        let g = SaddleObjective::from_samples(&param, 0.5, &samples)
            .unwrap()
            .eval(&p);
        let eta = harmonic_stepsize(2.0, 20.0, t);
        p.w.iter_mut()
            .zip(&g.grad_w)
            .for_each(|(x, g)| *x -= eta * g);
        p.v.iter_mut()
            .zip(&g.grad_v)
            .for_each(|(x, g)| *x += eta * g);
    }
    for (a, b) in out.final_point.joint().iter().zip(p.joint()) {
        assert!((a - b).abs() < 1e-13);
    }
    // An override of the wrong shape is refused.
    let short = IndexLog::from_batches(2, &[vec![0, 1]]).unwrap();
    assert!(run_sgda(&param, 0.5, &data, &c, &init, Some(&short)).is_err());
}

#[test]
fn huge_steps_report_divergence_with_the_step() {
    let (data, param, obj) = setup(0.9, 40);
    let c = SgdaRunConfig {
        c1: 1e6,
        c2: 1.0,
        ..cfg(1, 2000)
    };
    let init = initial_point(&obj, InitMode::DualOptimal);
    match run_sgda(&param, 0.9, &data, &c, &init, None) {
        Err(BrmError::Divergence { t, .. }) => assert!(t < 2000),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn moderate_discount_run_approaches_the_saddle() {
    let (data, param, obj) = setup(0.5, 200);
    let star = solve_saddle(&obj, 1e-10).unwrap();
    let c = SgdaRunConfig {
        c1: 20.0,
        c2: 100.0,
        record_every: 1000,
        log_objective: true,
        ..cfg(16, 20_000)
    };
    let init = initial_point(&obj, InitMode::DualOptimal);
    let trace = run_sgda(&param, 0.5, &data, &c, &init, None).unwrap();
    let curve = suboptimality_curve(&trace, &obj, star.phi_star);
    let first = curve[0].1;
    let last = curve.last().unwrap().1;
    assert!(last < 1e-2 * first, "{first:e} -> {last:e}");
}

#[test]
fn step_cap_is_enforced() {
    let (data, _, _) = setup(0.9, 20);
    let c = SgdaRunConfig {
        stepsize_cap: Some(0.01),
        ..cfg(1, 10)
    };
    assert!(c.validate(data.len()).is_err());
    let ok = SgdaRunConfig {
        stepsize_cap: Some(0.1),
        ..cfg(1, 10)
    };
    assert!(ok.validate(data.len()).is_ok());
    assert!(cfg(21, 1).validate(20).is_err());
}

proptest! {
    #[test]
    fn harmonic_partial_sums_dominate_the_log(c1 in 0.01..50.0f64, c2 in 1.0..500.0f64, t in 1usize..20_000) {
        let s: f64 = (0..t).map(|k| harmonic_stepsize(c1, c2, k)).sum();
        let lower = c1 * ((c2 + t as f64) / c2).ln();
        let upper = c1 / c2 + lower;
        prop_assert!(s >= lower * (1.0 - 1e-12));
        prop_assert!(s <= upper * (1.0 + 1e-12));
    }

    #[test]
    fn index_sets_have_the_requested_shape(
        n in 1usize..60,
        b in 1usize..8,
        t in 1usize..50,
        without in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(b <= n);
        let c = SgdaRunConfig {
            batch_size: b,
            iterations: t,
            seed,
            sampling: if without { IndexSampling::WithoutReplacement } else { IndexSampling::WithReplacement },
            ..Default::default()
        };
        let log = draw_indices(&c, n).unwrap();
        prop_assert_eq!(log.len(), t);
        for batch in log.batches() {
            prop_assert_eq!(batch.len(), b);
            prop_assert!(batch.iter().all(|&i| i < n));
            if without {
                let mut s = batch.to_vec();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), b);
            }
        }
        prop_assert_eq!(&log, &draw_indices(&c, n).unwrap());
    }
}

use darcy_core::elliptic::{ProblemData, SolverConfig};
use darcy_core::field::{Field, GridSpec};
use darcy_core::observation::{generate_data, DataVector, ForwardModel, NoiseModel, ObservationSetup};
use darcy_core::posterior::*;
use darcy_core::prior::{kl_variance, KLSample, PriorSpec};
use darcy_core::rng::rng_from_seed;

fn grid1() -> GridSpec {
    GridSpec::new(1, 16).unwrap()
}

fn source(grid: GridSpec, amplitude: f64) -> ProblemData {
    ProblemData::source_only(Field::from_fn(grid, |x| amplitude * x[0].cos()))
}

/// d = 1, three point observations, data generated from a prior draw at `truncation`.
fn small_problem(truncation: usize, sigma: f64) -> (PriorSpec, PosteriorProblem) {
    let grid = grid1();
    let prior = PriorSpec::new(1, 1.0, truncation, 11).unwrap();
    let setup = ObservationSetup::points(grid, &[vec![0.5], vec![2.0], vec![4.0]]).unwrap();
    let model = ForwardModel::new(&source(grid, 0.1), setup, SolverConfig::default()).unwrap();
    let noise = NoiseModel::isotropic(3, sigma).unwrap();
    let mut rng = rng_from_seed(5);
    let u_true = KLSample::draw(prior, grid, &mut rng).unwrap().to_field();
    let y = generate_data(&u_true, &model, &noise, &mut rng).unwrap();
    (prior, PosteriorProblem::new(model, noise, y).unwrap())
}

fn empty_problem(grid: GridSpec) -> PosteriorProblem {
    let model = ForwardModel::new(&source(grid, 1.0), ObservationSetup::empty(grid), SolverConfig::default()).unwrap();
    PosteriorProblem::new(model, NoiseModel::isotropic(0, 1.0).unwrap(), DataVector::new(vec![]).unwrap()).unwrap()
}

fn zero_target(_: &KLSample, _: Option<&()>) -> darcy_core::Result<(f64, ())> {
    Ok((0.0, ()))
}

#[test]
fn config_validation() {
    assert!(PcnConfig::new(0.0, 10, 0, 1, 0).is_err());
    assert!(PcnConfig::new(1.5, 10, 0, 1, 0).is_err());
    assert!(PcnConfig::new(0.5, 10, 10, 1, 0).is_err());
    assert!(PcnConfig::new(0.5, 10, 0, 0, 0).is_err());
    let cfg = PcnConfig::new(0.5, 10, 3, 2, 0).unwrap();
    assert_eq!(cfg.retained(), 4);
}

#[test]
fn tiny_beta_accepts_nearly_everything() {
    let (prior, problem) = small_problem(2, 0.1);
    let mut target = |v: &KLSample, warm: Option<&Field>| {
        let e = problem.evaluate(v, warm)?;
        Ok((e.phi, e.pressure))
    };
    let start = KLSample::draw(prior, problem.grid(), &mut rng_from_seed(1)).unwrap();
    let mut state = ChainState::new(start, &mut target).unwrap();
    let mut rng = rng_from_seed(2);
    for _ in 0..200 {
        state = pcn_step(state, &mut target, 1e-8, &mut rng);
    }
    assert!(state.acceptance_rate() > 0.99, "{}", state.acceptance_rate());
}

#[test]
fn independence_sampler_with_flat_target_accepts_all() {
    let grid = GridSpec::new(2, 16).unwrap();
    let prior = PriorSpec::new(2, 2.0, 3, 0).unwrap();
    let mut target = zero_target;
    let mut state = ChainState::new(KLSample::zeros(prior, grid).unwrap(), &mut target).unwrap();
    let mut rng = rng_from_seed(8);
    for _ in 0..500 {
        state = pcn_step(state, &mut target, 1.0, &mut rng);
    }
    assert_eq!(state.accepted(), 500);
    // with β = 1 the state is exactly the last fresh draw, i.e. a prior sample
    let mut again = rng_from_seed(8);
    let mut last = KLSample::zeros(prior, grid).unwrap();
    for _ in 0..500 {
        last.redraw(&mut again);
        let _: f64 = rand::Rng::random(&mut again);
    }
    assert_eq!(state.coeffs().amplitudes(), last.amplitudes());
}

#[test]
fn flat_target_preserves_prior_variances() {
    let grid = GridSpec::new(2, 16).unwrap();
    let s = 2.0;
    let prior = PriorSpec::new(2, s, 2, 0).unwrap();
    let mut target = zero_target;
    let mut state = ChainState::new(KLSample::zeros(prior, grid).unwrap(), &mut target).unwrap();
    let mut rng = rng_from_seed(21);
    let steps = 40_000;
    let dim = state.coeffs().dimension();
    let mut series = vec![Vec::with_capacity(steps); dim];
    for _ in 0..steps {
        state = pcn_step(state, &mut target, 0.5, &mut rng);
        for (i, k) in (0..dim / 2).enumerate() {
            let [a, b] = state.coeffs().coefficient(k);
            series[2 * i].push(a * a);
            series[2 * i + 1].push(b * b);
        }
    }
    for (j, sq) in series.iter().enumerate() {
        let k = state.coeffs().modes()[j / 2];
        let expected = kl_variance(&k[..2], s).unwrap();
        let mean = sq.iter().sum::<f64>() / steps as f64;
        let ac = integrated_autocorrelation(sq).unwrap();
        let se = (ac.variance * ac.tau / steps as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "mode {k:?}: {mean} vs {expected} (se {se})");
    }
}

#[test]
fn constant_shift_in_potential_leaves_trajectory_unchanged() {
    let (prior, problem) = small_problem(2, 0.1);
    let run = |shift: f64| {
        let mut target = |v: &KLSample, _: Option<&()>| Ok((problem.evaluate(v, None)?.phi + shift, ()));
        let mut state = ChainState::new(KLSample::zeros(prior, problem.grid()).unwrap(), &mut target).unwrap();
        let mut rng = rng_from_seed(3);
        let mut path = Vec::new();
        for _ in 0..300 {
            state = pcn_step(state, &mut target, 0.3, &mut rng);
            path.push(state.coeffs().amplitudes().to_vec());
        }
        path
    };
    assert_eq!(run(0.0), run(7.0));
}

#[test]
fn failed_targets_are_rejected_and_counted() {
    let grid = grid1();
    let prior = PriorSpec::new(1, 1.0, 2, 0).unwrap();
    let mut calls = 0;
    let mut target = |_: &KLSample, _: Option<&()>| {
        calls += 1;
        if calls % 2 == 0 {
            Err(darcy_core::CoreError::NonFinite { iteration: 1 })
        } else {
            Ok((0.0, ()))
        }
    };
    let mut state = ChainState::new(KLSample::zeros(prior, grid).unwrap(), &mut target).unwrap();
    let mut rng = rng_from_seed(0);
    for _ in 0..10 {
        state = pcn_step(state, &mut target, 0.5, &mut rng);
    }
    assert_eq!(state.failed(), 5);
    assert_eq!(state.accepted(), 5);
    assert_eq!(state.proposed(), 10);
}

#[test]
fn snis_with_flat_potential_is_plain_monte_carlo() {
    let grid = grid1();
    let problem = empty_problem(grid);
    let bank = SampleBank::new(PriorSpec::new(1, 1.0, 4, 77).unwrap(), grid, 400).unwrap();
    let est = snis_expectation(&bank, &problem, 4, 8, |_, e| vec![e.pressure.values()[3]]).unwrap();
    let plain = (0..bank.len())
        .map(|i| {
            let u = bank.sample(i).to_field();
            problem.model().pressure(&u, None).unwrap().0.values()[3]
        })
        .sum::<f64>()
        / bank.len() as f64;
    assert!((est.mean[0] - plain).abs() < 1e-12 * plain.abs().max(1.0));
    assert!((est.ess - 400.0).abs() < 1e-9);
    assert!(est.log_evidence.abs() < 1e-12);
    assert!(!est.unreliable);
}

#[test]
fn snis_flags_data_far_from_prior_predictive() {
    let (_, problem) = small_problem(2, 0.1);
    let far = problem.with_data(DataVector::new(vec![50.0, -50.0, 50.0]).unwrap()).unwrap();
    let bank = SampleBank::new(PriorSpec::new(1, 1.0, 2, 4).unwrap(), grid1(), 2000).unwrap();
    let near = snis_expectation(&bank, &problem, 2, 8, |_, e| vec![e.pressure.values()[0]]).unwrap();
    let est = snis_expectation(&bank, &far, 2, 8, |_, e| vec![e.pressure.values()[0]]).unwrap();
    assert!(est.unreliable);
    assert!(est.ess < 50.0);
    assert!(est.log_evidence < -1e4, "{}", est.log_evidence);
    assert!(!near.unreliable);
}

#[test]
fn snis_and_pcn_agree_on_low_dimensional_posterior() {
    let (prior, problem) = small_problem(2, 0.1);
    let x0 = 3;
    let bank = SampleBank::new(prior.with_seed(101), grid1(), 20_000).unwrap();
    let snis = snis_expectation(&bank, &problem, 2, 16, |_, e| vec![e.pressure.values()[x0]]).unwrap();

    let mut target = |v: &KLSample, warm: Option<&Field>| {
        let e = problem.evaluate(v, warm)?;
        Ok((e.phi, e.pressure))
    };
    let mut state = ChainState::new(KLSample::zeros(prior, grid1()).unwrap(), &mut target).unwrap();
    let mut rng = rng_from_seed(55);
    let mut series = Vec::new();
    for step in 0..22_000 {
        state = pcn_step(state, &mut target, 0.5, &mut rng);
        if step >= 2000 {
            series.push(state.aux().values()[x0]);
        }
    }
    let ac = integrated_autocorrelation(&series).unwrap();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let se_pcn = (ac.variance * ac.tau / series.len() as f64).sqrt();
    let combined = (se_pcn.powi(2) + snis.std_error[0].powi(2)).sqrt();
    assert!(
        (mean - snis.mean[0]).abs() < 3.0 * combined,
        "pcn {mean} snis {} combined se {combined}",
        snis.mean[0]
    );
}

#[test]
fn chain_without_data_matches_prior_predictive() {
    let grid = grid1();
    let problem = empty_problem(grid);
    let prior = PriorSpec::new(1, 1.0, 3, 0).unwrap();
    let probe = ProbeBasis::new(grid, 3).unwrap();
    let cfg = PcnConfig::new(0.6, 8000, 500, 1, 12).unwrap();
    let run = run_chain(&cfg, &prior, &problem, &probe, 16).unwrap();
    assert_eq!(run.diagnostics.acceptance_rate, 1.0);
    assert!(run.diagnostics.warning.is_none());
    let bank = SampleBank::new(prior.with_seed(900), grid, 4000).unwrap();
    let x0 = 5;
    let mc = snis_expectation(&bank, &problem, 3, 16, |_, e| vec![e.pressure.values()[x0]]).unwrap();
    let chain_mean = run.summary.mean_pressure.values()[x0];
    let chain_se = run.mean_pressure_std_error().values()[x0];
    let combined = (chain_se.powi(2) + mc.std_error[0].powi(2)).sqrt();
    assert!((chain_mean - mc.mean[0]).abs() < 3.0 * combined, "{chain_mean} vs {}", mc.mean[0]);
    let c = &run.summary.probe_covariance;
    assert_eq!(c, &c.transpose());
    let eig = nalgebra::SymmetricEigen::new(c.clone());
    assert!(eig.eigenvalues.iter().all(|&l| l > -1e-8));
}

#[test]
fn low_acceptance_is_reported() {
    let (prior, problem) = small_problem(4, 1e-4);
    let probe = ProbeBasis::new(grid1(), 2).unwrap();
    let cfg = PcnConfig::new(1.0, 3000, 100, 1, 3).unwrap();
    let run = run_chain(&cfg, &prior, &problem, &probe, 4).unwrap();
    assert!(run.diagnostics.acceptance_rate < 0.01, "{}", run.diagnostics.acceptance_rate);
    assert!(run.diagnostics.warning.is_some());
}

#[test]
fn tight_data_contract_the_posterior_mean() {
    let grid = GridSpec::new(1, 32).unwrap();
    let prior = PriorSpec::new(1, 1.0, 2, 0).unwrap();
    let points: Vec<Vec<f64>> = (0..8).map(|j| vec![0.3 + 0.78 * j as f64]).collect();
    let setup = ObservationSetup::points(grid, &points).unwrap();
    let model = ForwardModel::new(&source(grid, 1.0), setup, SolverConfig::default()).unwrap();
    let noise = NoiseModel::isotropic(8, 0.01).unwrap();
    let u_true = KLSample::from_amplitudes(prior, grid, vec![[1.2, -0.8], [0.5, 0.9]]).unwrap().to_field();
    let y = generate_data(&u_true, &model, &noise, &mut rng_from_seed(1)).unwrap();
    let p_true = model.pressure(&u_true, None).unwrap().0;
    let problem = PosteriorProblem::new(model, noise, y).unwrap();
    let probe = ProbeBasis::new(grid, 4).unwrap();
    let cfg = PcnConfig::new(0.1, 6000, 2000, 1, 4).unwrap();
    let post = run_chain(&cfg, &prior, &problem, &probe, 8).unwrap();

    let flat = empty_problem(grid);
    let bank = SampleBank::new(prior.with_seed(3), grid, 2000).unwrap();
    let len = grid.len();
    let prior_mean = snis_expectation(&bank, &flat, 2, 8, |_, e| e.pressure.values().to_vec()).unwrap();
    let prior_mean = Field::new(grid, prior_mean.mean[..len].to_vec()).unwrap();

    let d_post = post.summary.mean_pressure.sub(&p_true).h1_norm();
    let d_prior = prior_mean.sub(&p_true).h1_norm();
    assert!(d_post < 0.5 * d_prior, "posterior {d_post} prior {d_prior}");
}

#[test]
fn weak_error_reference_row_is_zero_and_csv_header_fixed() {
    let grid = grid1();
    let (prior, problem) = small_problem(4, 0.2);
    let probe = ProbeBasis::new(grid, 3).unwrap();
    let cfg = WeakErrorConfig {
        n_list: vec![1, 2, 4],
        n_ref: 4,
        n_samples: 600,
        seed: 9,
        batches: 8,
        method: WeakErrorMethod::Snis,
    };
    let table = weak_error_study(&cfg, &prior, &problem, &probe).unwrap();
    assert_eq!(table.rows.len(), 3);
    let last = &table.rows[2];
    assert_eq!((last.n, last.e_mean_h1, last.e_cov_opnorm, last.mc_std_error), (4, 0.0, 0.0, 0.0));
    assert!(table.rows[0].e_mean_h1 > 0.0);
    let mut out = Vec::new();
    table.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "N,e_mean_h1,e_cov_opnorm,mc_std_error,ess");
    assert_eq!(text.lines().count(), 4);
    assert_eq!(table.summaries.last().unwrap().0, 4);
}

#[test]
fn weak_error_config_validation() {
    let (prior, problem) = small_problem(2, 0.2);
    let probe = ProbeBasis::new(grid1(), 3).unwrap();
    let mut cfg = WeakErrorConfig {
        n_list: vec![2, 1],
        n_ref: 4,
        n_samples: 100,
        seed: 0,
        batches: 4,
        method: WeakErrorMethod::Snis,
    };
    assert!(weak_error_study(&cfg, &prior, &problem, &probe).is_err());
    cfg.n_list = vec![1, 5];
    assert!(weak_error_study(&cfg, &prior, &problem, &probe).is_err());
    cfg.n_list = vec![];
    assert!(weak_error_study(&cfg, &prior, &problem, &probe).is_err());
}

#[test]
fn weak_error_with_pcn_method() {
    let grid = grid1();
    let (prior, problem) = small_problem(4, 0.2);
    let probe = ProbeBasis::new(grid, 3).unwrap();
    let pcn = PcnConfig::new(0.5, 3000, 500, 2, 0).unwrap();
    let cfg = WeakErrorConfig {
        n_list: vec![1, 4],
        n_ref: 4,
        n_samples: 0,
        seed: 9,
        batches: 8,
        method: WeakErrorMethod::Pcn(pcn),
    };
    let table = weak_error_study(&cfg, &prior, &problem, &probe).unwrap();
    assert_eq!(table.rows[1].e_mean_h1, 0.0);
    assert!(table.rows[0].e_mean_h1 > 0.0);
    assert!(table.rows[0].mc_std_error > 0.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (prior, problem) = small_problem(4, 0.2);
    let probe = ProbeBasis::new(grid1(), 3).unwrap();
    let cfg = WeakErrorConfig {
        n_list: vec![1, 2],
        n_ref: 4,
        n_samples: 256,
        seed: 1,
        batches: 8,
        method: WeakErrorMethod::Snis,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| weak_error_study(&cfg, &prior, &problem, &probe).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
}

#[test]
fn hellinger_through_the_forward_model() {
    let (prior, problem) = small_problem(2, 0.1);
    let bank = SampleBank::new(prior, grid1(), 1500).unwrap();
    let obs = observe_bank(&bank, problem.model(), 2, 8).unwrap();
    assert_eq!(obs.len(), 1500);
    assert_eq!(obs.observations(), 3);
    let y = problem.data();
    let yp = DataVector::new(y.y.iter().map(|v| v + 0.05).collect()).unwrap();
    let h = hellinger_estimate(&obs, problem.noise(), y, &yp).unwrap();
    let h_swapped = hellinger_estimate(&obs, problem.noise(), &yp, y).unwrap();
    assert_eq!(h.distance.to_bits(), h_swapped.distance.to_bits());
    assert!(h.distance > 0.0 && h.distance < 1.0);
    assert_eq!(hellinger_estimate(&obs, problem.noise(), y, y).unwrap().distance, 0.0);
    // bank sample i is the same draw whatever the batch layout
    let obs4 = observe_bank(&bank, problem.model(), 2, 4).unwrap();
    assert_eq!(obs, obs4);
}

//! One function per subcommand. Each builds everything it needs from the
//! config (failing on bad input before any heavy computation) and writes its
//! artifacts through [`Output`].

use std::io::Write;

use darcy_core::elliptic::EllipticSolver;
use darcy_core::field::{Dft, Field, GridSpec};
use darcy_core::observation::{generate_data, DataVector, ForwardModel, ObservationSetup};
use darcy_core::posterior::{
    hellinger_estimate, observe_bank, run_chain_with, weak_error_study, PosteriorProblem, ProbeBasis, SampleBank,
    WeakErrorConfig, WeakErrorMethod, WeakErrorTable,
};
use darcy_core::prior::{kl_modes, kl_variance, sample_prior_seeded, KLSample};
use darcy_core::rng::stream_rng;
use darcy_core::truncation::{dirichlet_integral, dn_l1_norm, fit_rate, truncation_sup_error, weierstrass_field, RateFit};

use crate::config::{Config, SeedRole};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::output::Output;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SamplePrior,
    Solve,
    GenerateData,
    RunMcmc,
    WeakError,
    Hellinger,
    KernelChecks,
}

pub fn run(cmd: Command, cfg: &Config, out: &mut Output) -> CliResult<()> {
    match cmd {
        Command::SamplePrior => sample_prior(cfg, out),
        Command::Solve => solve(cfg, out),
        Command::GenerateData => generate(cfg, out),
        Command::RunMcmc => run_mcmc(cfg, out),
        Command::WeakError => weak_error(cfg, out),
        Command::Hellinger => hellinger(cfg, out),
        Command::KernelChecks => kernel_checks(cfg, out),
    }
}

fn sample_prior(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let grid = cfg.grid()?;
    let n = cfg.truncation()?;
    let seed = cfg.seeds.seed(SeedRole::PriorDraws);
    let spec = cfg.prior_spec(n, seed)?;
    let dft = Dft::new(grid);
    let modes = kl_modes(grid.dim(), n);
    let mut second_moment = vec![0.0; modes.len()];
    for i in 0..cfg.prior.draws {
        let draw_seed = seed.wrapping_add(i as u64);
        let sample = KLSample::draw(spec, grid, &mut stream_rng(seed, i as u64))?;
        for (i, m) in second_moment.iter_mut().enumerate() {
            let [a, b] = sample.coefficient(i);
            *m += 0.5 * (a * a + b * b);
        }
        out.field(&format!("prior_draw_{i}.field"), Some(draw_seed), &sample.realize(&dft))?;
        let name = format!("prior_draw_{i}.csv");
        let mut buf = Vec::new();
        sample.write_csv(&mut buf)?;
        out.text(&name, Some(draw_seed), |w| w.write_all(&buf))?;
    }
    let draws = cfg.prior.draws as f64;
    let d = grid.dim();
    out.text("prior_variance.csv", Some(seed), |w| {
        let ks: Vec<String> = (1..=d).map(|i| format!("k_{i}")).collect();
        writeln!(w, "{},empirical_variance,analytic_variance,draws", ks.join(","))?;
        for (k, m) in modes.iter().zip(&second_moment) {
            let ks: Vec<String> = k[..d].iter().map(|c| c.to_string()).collect();
            let analytic = kl_variance(&k[..d], spec.smoothness()).expect("KL modes are nonzero");
            writeln!(w, "{},{},{},{}", ks.join(","), m / draws, analytic, cfg.prior.draws)?;
        }
        Ok(())
    })?;
    println!("wrote {} prior draws (d={d}, N={n})", cfg.prior.draws);
    Ok(())
}

/// The log-permeability named by `spec`, or a seeded prior draw for `prior`.
fn log_permeability(cfg: &Config, key: &str, spec: &str, truncation: Option<usize>) -> CliResult<(Field, Option<u64>)> {
    if spec != "prior" {
        return Ok((cfg.field(key, spec)?, None));
    }
    let n = truncation.ok_or_else(|| CliError::config("prior.N", format!("needed to draw `{key} = \"prior\"`")))?;
    let seed = cfg.seeds.seed(SeedRole::Truth);
    let (_, u) = sample_prior_seeded(&cfg.prior_spec(n, seed)?, cfg.grid()?)?;
    Ok((u, Some(seed)))
}

fn solve(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let spec = cfg
        .problem
        .u
        .as_deref()
        .ok_or_else(|| CliError::config("problem.u", "required by solve"))?;
    let (u, seed) = log_permeability(cfg, "problem.u", spec, cfg.prior.truncation)?;
    let data = cfg.problem_data()?;
    let exact = match &cfg.problem.exact_p {
        Some(s) => Some(cfg.field("problem.exact_p", s)?),
        None => None,
    };
    let solver_cfg = cfg.solver_config()?;
    let (p, report) = EllipticSolver::new(cfg.grid()?).solve(&u, &data, &solver_cfg)?;
    out.field("pressure.field", seed, &p)?;
    let errors = exact.map(|e| {
        let diff = p.sub(&e.zero_mean_project());
        (diff.sup_norm(), diff.h1_norm())
    });
    out.text("solve_report.csv", seed, |w| {
        write!(w, "iterations,final_relative_residual,converged")?;
        if errors.is_some() {
            write!(w, ",sup_error,h1_error")?;
        }
        write!(w, "\n{},{},{}", report.iterations, report.final_relative_residual, report.converged)?;
        if let Some((sup, h1)) = errors {
            write!(w, ",{sup},{h1}")?;
        }
        writeln!(w)
    })?;
    println!(
        "solve: iterations={} relative_residual={:.3e}",
        report.iterations, report.final_relative_residual
    );
    if let Some((sup, h1)) = errors {
        println!("sup_error={sup:e} h1_error={h1:e}");
    }
    Ok(())
}

struct Observed {
    problem: PosteriorProblem,
    truth: Option<(Field, Option<u64>)>,
    data_seed: Option<u64>,
}

/// Forward model, noise and data. Data come from `observation.data` when set,
/// otherwise from the forward map of `truth.u` plus seeded noise.
fn observed(cfg: &Config, truth_truncation: Option<usize>) -> CliResult<Observed> {
    let setup: ObservationSetup = cfg.observation_setup()?;
    let noise = cfg.noise_model(setup.len())?;
    let data = cfg.problem_data()?;
    let model = ForwardModel::new(&data, setup, cfg.solver_config()?)?;
    let (y, truth, data_seed) = match &cfg.observation.data {
        Some(path) => {
            let y = DataVector::read_csv_file(cfg.resolve(path)).map_err(CliError::at("observation.data"))?;
            if y.len() != model.setup().len() {
                return Err(CliError::config(
                    "observation.data",
                    format!("{} values for {} functionals", y.len(), model.setup().len()),
                ));
            }
            (y, None, None)
        }
        None => {
            let (u, seed) = log_permeability(cfg, "truth.u", &cfg.truth.u, truth_truncation)?;
            let noise_seed = cfg.seeds.seed(SeedRole::Noise);
            let y = generate_data(&u, &model, &noise, &mut darcy_core::rng::rng_from_seed(noise_seed))?;
            (y, Some((u, seed)), Some(noise_seed))
        }
    };
    Ok(Observed {
        problem: PosteriorProblem::new(model, noise, y)?,
        truth,
        data_seed,
    })
}

fn truth_truncation(cfg: &Config) -> Option<usize> {
    cfg.prior.n_ref.or(cfg.prior.truncation)
}

fn generate(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.observation.data = None;
    let obs = observed(&cfg, truth_truncation(&cfg))?;
    let (u, truth_seed) = obs.truth.expect("data were synthesised");
    out.text("data.csv", obs.data_seed, |w| obs.problem.data().write_csv(w))?;
    out.field("u_true.field", truth_seed, &u)?;
    println!("generated {} observations", obs.problem.data().len());
    Ok(())
}

fn run_mcmc(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let grid = cfg.grid()?;
    let n = cfg.truncation()?;
    let pcn = cfg.pcn_config()?;
    let prior = cfg.prior_spec(n, pcn.seed)?;
    let probe = ProbeBasis::new(grid, cfg.probe_order()).map_err(CliError::at("probe.order"))?;
    let obs = observed(cfg, truth_truncation(cfg))?;

    let mut samples: Vec<u8> = Vec::new();
    let dump = cfg.mcmc.dump_samples;
    let run = run_chain_with(&pcn, &prior, &obs.problem, &probe, cfg.mcmc.batches, |i, coeffs, _| {
        if dump {
            write_sample_row(&mut samples, i, coeffs).map_err(|e| darcy_core::CoreError::InvalidArgument(e.to_string()))?;
        }
        Ok(())
    })?;

    let seed = Some(pcn.seed);
    out.field("mean_pressure.field", seed, &run.summary.mean_pressure)?;
    out.text("probe_covariance.csv", seed, |w| run.summary.write_covariance_csv(w))?;
    let diag = &run.diagnostics;
    let ac = &diag.phi_autocorrelation;
    out.text("diagnostics.csv", seed, |w| {
        writeln!(w, "acceptance_rate,proposed,failed,tau_phi,window,ess,sample_count")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            diag.acceptance_rate, diag.proposed, diag.failed_steps, ac.tau, ac.window, ac.ess, run.summary.sample_count
        )
    })?;
    if dump {
        out.text("samples.csv", seed, |w| {
            write_sample_header(w, &prior_modes(grid, n))?;
            w.write_all(&samples)
        })?;
    }
    if let Some(warning) = &diag.warning {
        eprintln!("warning: {warning}");
    }
    println!(
        "pcn: acceptance_rate={:.4} tau_phi={:.2} ess={:.1}",
        diag.acceptance_rate, ac.tau, ac.ess
    );
    Ok(())
}

fn prior_modes(grid: GridSpec, n: usize) -> Vec<String> {
    let d = grid.dim();
    kl_modes(d, n)
        .iter()
        .map(|k| {
            let ks: Vec<String> = k[..d].iter().map(|c| c.to_string()).collect();
            ks.join("_")
        })
        .collect()
}

fn write_sample_header(w: &mut dyn Write, modes: &[String]) -> std::io::Result<()> {
    write!(w, "sample")?;
    for m in modes {
        write!(w, ",a_{m},b_{m}")?;
    }
    writeln!(w)
}

fn write_sample_row(w: &mut Vec<u8>, i: usize, coeffs: &KLSample) -> std::io::Result<()> {
    write!(w, "{i}")?;
    for [a, b] in coeffs.amplitudes() {
        write!(w, ",{a},{b}")?;
    }
    writeln!(w)
}

fn weak_error(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let grid = cfg.grid()?;
    let n_list = cfg
        .prior
        .n_list
        .clone()
        .ok_or_else(|| CliError::config("prior.N_list", "required by weak-error"))?;
    let n_ref = cfg
        .prior
        .n_ref
        .ok_or_else(|| CliError::config("prior.N_ref", "required by weak-error"))?;
    let (method, batches) = match cfg.weak_error.method.as_str() {
        "pcn" => (WeakErrorMethod::Pcn(cfg.pcn_config()?), cfg.mcmc.batches),
        _ => (WeakErrorMethod::Snis, cfg.snis.batches),
    };
    let seed = match method {
        WeakErrorMethod::Snis => cfg.seeds.seed(SeedRole::Bank),
        WeakErrorMethod::Pcn(_) => cfg.seeds.seed(SeedRole::Chain),
    };
    let study = WeakErrorConfig {
        n_list,
        n_ref,
        n_samples: cfg.snis.n_samples,
        seed,
        batches,
        method,
    };
    let prior = cfg.prior_spec(n_ref, seed)?;
    let probe = ProbeBasis::new(grid, cfg.probe_order()).map_err(CliError::at("probe.order"))?;
    let obs = observed(cfg, Some(n_ref))?;
    let table = weak_error_study(&study, &prior, &obs.problem, &probe)?;

    out.text("weak_error.csv", Some(seed), |w| table.write_csv(w))?;
    for row in table.rows.iter().filter(|r| r.unreliable) {
        eprintln!("warning: N={} has effective sample size {:.1}; row is unreliable", row.n, row.ess);
    }
    let fits = [("e_mean_h1", table.mean_rate()), ("e_cov_opnorm", table.covariance_rate())];
    write_fits(out, "rate_fit.csv", Some(seed), &fits, table.unreliable_rows())?;
    print_table(&table);
    Ok(())
}

fn print_table(table: &WeakErrorTable) {
    for r in &table.rows {
        println!(
            "N={} e_mean_h1={:.4e} e_cov_opnorm={:.4e} mc_std_error={:.2e} ess={:.1}",
            r.n, r.e_mean_h1, r.e_cov_opnorm, r.mc_std_error, r.ess
        );
    }
}

/// Writes the fits that succeeded; a fit needs at least three usable points.
fn write_fits(
    out: &mut Output,
    name: &str,
    seed: Option<u64>,
    fits: &[(&str, darcy_core::Result<RateFit>)],
    unreliable: usize,
) -> CliResult<()> {
    let ok: Vec<(&str, &RateFit)> = fits
        .iter()
        .filter_map(|(q, f)| match f {
            Ok(fit) => Some((*q, fit)),
            Err(e) => {
                eprintln!("note: no rate fit for {q}: {e}");
                None
            }
        })
        .collect();
    if ok.is_empty() {
        return Ok(());
    }
    out.text(name, seed, |w| {
        writeln!(w, "quantity,slope,intercept,residual,points,unreliable_points")?;
        for (q, fit) in &ok {
            writeln!(
                w,
                "{q},{},{},{},{},{unreliable}",
                fit.slope,
                fit.intercept,
                fit.residual,
                fit.log_abscissae.len()
            )?;
            println!("fit {q}: slope={:.3}", fit.slope);
        }
        Ok(())
    })
}

fn hellinger(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let grid = cfg.grid()?;
    let n = cfg.truncation()?;
    let obs = observed(cfg, truth_truncation(cfg))?;
    let k = obs.problem.data().len();
    if k == 0 {
        return Err(CliError::config("observation", "hellinger needs at least one functional"));
    }
    let direction = match &cfg.hellinger.direction {
        Some(d) if d.len() != k => {
            return Err(CliError::config(
                "hellinger.direction",
                format!("{} entries for {k} observations", d.len()),
            ))
        }
        Some(d) => d.clone(),
        None => vec![1.0; k],
    };
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let seed = cfg.seeds.seed(SeedRole::Bank);
    let bank = SampleBank::new(cfg.prior_spec(n, seed)?, grid, cfg.hellinger.n_samples)?;
    let observations = observe_bank(&bank, obs.problem.model(), n, cfg.snis.batches)?;

    let y = obs.problem.data();
    let mut rows = Vec::with_capacity(cfg.hellinger.deltas.len());
    for &delta in &cfg.hellinger.deltas {
        let shifted = DataVector::new(y.y.iter().zip(&direction).map(|(a, v)| a + delta * v / norm).collect())?;
        let est = hellinger_estimate(&observations, obs.problem.noise(), y, &shifted)?;
        if est.unreliable {
            eprintln!("warning: delta={delta} has effective sample size {:.1}; estimate is unreliable", est.ess);
        }
        rows.push((delta, est));
    }
    out.text("hellinger.csv", Some(seed), |w| {
        writeln!(w, "delta,d_hell")?;
        for (delta, est) in &rows {
            writeln!(w, "{delta},{}", est.distance)?;
        }
        Ok(())
    })?;
    for (delta, est) in &rows {
        println!("delta={delta} d_hell={:.6e}", est.distance);
    }
    let (deltas, dists): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|(delta, _)| *delta > 0.0)
        .map(|(delta, est)| (*delta, est.distance))
        .unzip();
    let unreliable = rows.iter().filter(|(_, e)| e.unreliable).count();
    write_fits(out, "hellinger_fit.csv", Some(seed), &[("d_hell", fit_rate(&deltas, &dists))], unreliable)
}

fn kernel_checks(cfg: &Config, out: &mut Output) -> CliResult<()> {
    let kc = &cfg.kernel;
    out.text("dirichlet_integral.csv", None, |w| {
        writeln!(w, "N,integral,abs_error")?;
        for &n in &kc.integral_n {
            let v = dirichlet_integral(n);
            writeln!(w, "{n},{v},{}", (v - std::f64::consts::PI).abs())?;
        }
        Ok(())
    })?;
    let l1 = kc
        .l1_n
        .iter()
        .map(|&n| Ok((n, dn_l1_norm(n).map_err(CliError::at("kernel.l1_n"))?)))
        .collect::<CliResult<Vec<_>>>()?;
    out.text("dirichlet_l1.csv", None, |w| {
        writeln!(w, "N,l1_norm,ratio_to_log_n")?;
        for (n, v) in &l1 {
            writeln!(w, "{n},{v},{}", v / (*n as f64).ln())?;
        }
        Ok(())
    })?;
    let ratios: Vec<f64> = l1.iter().map(|(n, v)| v / (*n as f64).ln()).collect();
    if let (Some(lo), Some(hi)) = (
        ratios.iter().cloned().reduce(f64::min),
        ratios.iter().cloned().reduce(f64::max),
    ) {
        println!("l1/log N in [{lo:.4}, {hi:.4}], band factor {:.3}", hi / lo);
    }

    let grid = GridSpec::new(1, kc.weierstrass_n).map_err(CliError::at("kernel.weierstrass_n"))?;
    let levels = (kc.weierstrass_n / 2).ilog2() - 1;
    let w_field = weierstrass_field(grid, kc.weierstrass_t, levels)?;
    let errors = kc
        .weierstrass_truncations
        .iter()
        .map(|&n| truncation_sup_error(&w_field, n).map_err(CliError::from))
        .collect::<CliResult<Vec<_>>>()?;
    out.text("weierstrass_truncation.csv", None, |w| {
        writeln!(w, "N,sup_error")?;
        for (n, e) in kc.weierstrass_truncations.iter().zip(&errors) {
            writeln!(w, "{n},{e}")?;
        }
        Ok(())
    })?;
    let ns: Vec<f64> = kc.weierstrass_truncations.iter().map(|&n| n as f64).collect();
    write_fits(out, "weierstrass_fit.csv", None, &[("sup_error", fit_rate(&ns, &errors))], 0)?;
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(CliError::plain(ErrorKind::Numerical, "non-finite truncation error"));
    }
    Ok(())
}

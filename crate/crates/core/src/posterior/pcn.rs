//! Preconditioned Crank-Nicolson MCMC on the truncated KL coefficients.

use rand::Rng;

use super::diagnostics::{integrated_autocorrelation, AutocorrEstimate};
use super::moments::{batch_standard_error, BatchStats, MomentSummary, ProbeBasis};
use super::{Evaluation, PosteriorProblem};
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::prior::{KLSample, PriorSpec};
use crate::rng::rng_from_seed;

/// Acceptance rates below this trigger a diagnostic warning.
pub const LOW_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcnConfig {
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl PcnConfig {
    pub fn new(beta: f64, n_steps: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            beta,
            n_steps,
            burn_in,
            thin,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(CoreError::InvalidArgument(format!("beta = {} must lie in (0, 1]", self.beta)));
        }
        if self.burn_in >= self.n_steps {
            return Err(CoreError::InvalidArgument(format!(
                "burn_in = {} must be below n_steps = {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.thin == 0 {
            return Err(CoreError::InvalidArgument("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of post-burn-in steps kept after thinning.
    pub fn retained(&self) -> usize {
        (self.n_steps - self.burn_in).div_ceil(self.thin)
    }

    fn keeps(&self, step: usize) -> bool {
        step > self.burn_in && (step - self.burn_in - 1).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Initial,
    Accepted,
    Rejected,
    /// The target could not be evaluated at the proposal; counted as a rejection.
    Failed,
}

/// Current point of a chain together with its cached potential.
///
/// `aux` carries whatever the target computes alongside `Φ` (for the Darcy
/// problem, the pressure field).
#[derive(Debug, Clone)]
pub struct ChainState<T = ()> {
    coeffs: KLSample,
    phi: f64,
    aux: T,
    accepted: u64,
    proposed: u64,
    failed: u64,
    last: StepOutcome,
}

impl<T> ChainState<T> {
    pub fn new<F>(coeffs: KLSample, target: &mut F) -> Result<Self>
    where
        F: FnMut(&KLSample, Option<&T>) -> Result<(f64, T)>,
    {
        let (phi, aux) = target(&coeffs, None)?;
        if !phi.is_finite() {
            return Err(CoreError::NonFinite { iteration: 0 });
        }
        Ok(Self {
            coeffs,
            phi,
            aux,
            accepted: 0,
            proposed: 0,
            failed: 0,
            last: StepOutcome::Initial,
        })
    }

    pub fn coeffs(&self) -> &KLSample {
        &self.coeffs
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn aux(&self) -> &T {
        &self.aux
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn failed(&self) -> u64 {
        self.failed
    }

    pub fn last_outcome(&self) -> StepOutcome {
        self.last
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One pCN step: propose `v = sqrt(1-β²) u + β w` with `w` a fresh prior draw,
/// accept with probability `min(1, exp(Φ(u) - Φ(v)))`.
///
/// The random stream is consumed identically whatever the outcome: first the
/// amplitudes of `w`, then the uniform for the accept test.
pub fn pcn_step<T, F, R>(mut state: ChainState<T>, target: &mut F, beta: f64, rng: &mut R) -> ChainState<T>
where
    F: FnMut(&KLSample, Option<&T>) -> Result<(f64, T)>,
    R: Rng + ?Sized,
{
    let mut w = state.coeffs.clone();
    w.redraw(rng);
    let proposal = state.coeffs.crank_nicolson(&w, beta);
    let uniform: f64 = rng.random();
    state.proposed += 1;
    match target(&proposal, Some(&state.aux)) {
        Ok((phi, aux)) if phi.is_finite() => {
            if uniform.ln() < state.phi - phi {
                state.coeffs = proposal;
                state.phi = phi;
                state.aux = aux;
                state.accepted += 1;
                state.last = StepOutcome::Accepted;
            } else {
                state.last = StepOutcome::Rejected;
            }
        }
        _ => {
            state.failed += 1;
            state.last = StepOutcome::Failed;
        }
    }
    state
}

#[derive(Debug, Clone)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub proposed: u64,
    pub failed_steps: u64,
    /// Autocorrelation of `Φ` over the post-burn-in steps.
    pub phi_autocorrelation: AutocorrEstimate,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChainRun {
    pub summary: MomentSummary,
    pub diagnostics: ChainDiagnostics,
    pub(crate) batches: Vec<BatchStats>,
}

impl ChainRun {
    /// Pointwise batch-means standard error of the mean pressure.
    pub fn mean_pressure_std_error(&self) -> Field {
        let grid = self.summary.mean_pressure.grid();
        let mean = self.summary.mean_pressure.values();
        let fractions = BatchStats::weight_fractions(&self.batches);
        let batch_means: Vec<Vec<f64>> = self.batches.iter().map(|b| b.mean()).collect();
        let se = (0..grid.len())
            .map(|j| {
                let z: Vec<f64> = batch_means
                    .iter()
                    .zip(&fractions)
                    .map(|(m, f)| f * (m[j] - mean[j]))
                    .collect();
                batch_standard_error(&z)
            })
            .collect();
        Field::from_raw(grid, se)
    }
}

/// Runs a pCN chain on the coefficients of `prior` started at the prior mean.
pub fn run_chain(
    cfg: &PcnConfig,
    prior: &PriorSpec,
    problem: &PosteriorProblem,
    probe: &ProbeBasis,
    batches: usize,
) -> Result<ChainRun> {
    run_chain_with(cfg, prior, problem, probe, batches, |_, _, _| Ok(()))
}

/// [`run_chain`] with a callback invoked on every retained sample as
/// `(retained index, coefficients, pressure)`.
pub fn run_chain_with<F>(
    cfg: &PcnConfig,
    prior: &PriorSpec,
    problem: &PosteriorProblem,
    probe: &ProbeBasis,
    batches: usize,
    mut on_sample: F,
) -> Result<ChainRun>
where
    F: FnMut(usize, &KLSample, &Field) -> Result<()>,
{
    cfg.validate()?;
    let grid = problem.grid();
    if probe.grid() != grid {
        return Err(CoreError::InvalidArgument("probe grid differs from problem grid".into()));
    }
    let retained = cfg.retained();
    if batches < 2 || batches > retained {
        return Err(CoreError::InvalidArgument(format!(
            "batch count {batches} must lie in [2, {retained}] (retained samples)"
        )));
    }
    if cfg.n_steps - cfg.burn_in < 2 {
        return Err(CoreError::InvalidArgument("need at least 2 post-burn-in steps".into()));
    }

    let mut target = |v: &KLSample, warm: Option<&Field>| -> Result<(f64, Field)> {
        let Evaluation { phi, pressure, .. } = problem.evaluate(v, warm)?;
        Ok((phi, pressure))
    };
    let mut rng = rng_from_seed(cfg.seed);
    let mut state = ChainState::new(KLSample::zeros(*prior, grid)?, &mut target)?;

    let len = grid.len();
    let dim = probe.dim();
    let mut stats: Vec<BatchStats> = (0..batches).map(|_| BatchStats::new(len + dim, len, dim)).collect();
    let (mut buf, mut ws) = probe.workspace();
    let mut x = vec![0.0; len + dim];
    let mut phis = Vec::with_capacity(cfg.n_steps - cfg.burn_in);
    let mut kept = 0usize;

    for step in 1..=cfg.n_steps {
        state = pcn_step(state, &mut target, cfg.beta, &mut rng);
        if step <= cfg.burn_in {
            continue;
        }
        phis.push(state.phi);
        if cfg.keeps(step) {
            let p = &state.aux;
            x[..len].copy_from_slice(p.values());
            probe.coordinates_with(p, &mut buf, &mut ws, &mut x[len..]);
            stats[kept * batches / retained].add(0.0, &x);
            on_sample(kept, &state.coeffs, p)?;
            kept += 1;
        }
    }
    debug_assert_eq!(kept, retained);

    let phi_autocorrelation = integrated_autocorrelation(&phis)?;
    let acceptance_rate = state.acceptance_rate();
    let warning = (acceptance_rate < LOW_ACCEPTANCE).then(|| {
        format!("acceptance rate {acceptance_rate} is below {LOW_ACCEPTANCE}; consider a smaller beta")
    });
    let ess = phi_autocorrelation.ess.min(retained as f64);
    let summary = BatchStats::merged(&stats).summary(grid, ess);
    Ok(ChainRun {
        summary,
        diagnostics: ChainDiagnostics {
            acceptance_rate,
            proposed: state.proposed,
            failed_steps: state.failed,
            phi_autocorrelation,
            warning,
        },
        batches: stats,
    })
}

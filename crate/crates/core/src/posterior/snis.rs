//! Self-normalised importance sampling over a shared prior sample bank, and
//! the weak-error study built on it.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::moments::{batch_standard_error, h1_inner, BatchStats, MomentSummary, ProbeBasis};
use super::pcn::{run_chain, PcnConfig};
use super::{Evaluation, PosteriorProblem};
use crate::error::{CoreError, Result};
use crate::field::{Field, GridSpec};
use crate::prior::{KLSample, PriorSpec};
use crate::rng::stream_rng;
use crate::truncation::{fit_rate, RateFit};

/// Default number of contiguous batches a bank is split into.
pub const DEFAULT_BATCHES: usize = 16;

/// Estimates with fewer effective samples than this are flagged unreliable.
pub const MIN_RELIABLE_ESS: f64 = 50.0;

/// Prior draws `u_i`, `i = 0..len`, at truncation `N_ref`.
///
/// Samples are regenerated on demand from the seed stream, so sample `i` is
/// identical wherever and whenever it is requested. Lower truncations use the
/// same draws restricted to their modes (common random numbers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBank {
    spec: PriorSpec,
    grid: GridSpec,
    len: usize,
}

impl SampleBank {
    /// The bank seed is `spec.seed()`.
    pub fn new(spec: PriorSpec, grid: GridSpec, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(CoreError::InvalidArgument("sample bank must not be empty".into()));
        }
        KLSample::zeros(spec, grid)?;
        Ok(Self { spec, grid, len })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample(&self, i: usize) -> KLSample {
        let mut s = self.template();
        self.fill(i, &mut s);
        s
    }

    fn template(&self) -> KLSample {
        KLSample::zeros(self.spec, self.grid).expect("validated in constructor")
    }

    fn fill(&self, i: usize, s: &mut KLSample) {
        s.redraw(&mut stream_rng(self.spec.seed(), i as u64));
    }

    /// Contiguous index ranges of near-equal size.
    pub(crate) fn batch_ranges(&self, batches: usize) -> Result<Vec<Range<usize>>> {
        if batches < 2 || batches > self.len {
            return Err(CoreError::InvalidArgument(format!(
                "batch count {batches} must lie in [2, {}]",
                self.len
            )));
        }
        Ok((0..batches)
            .map(|b| b * self.len / batches..(b + 1) * self.len / batches)
            .collect())
    }

    /// A restriction of bank samples to truncation `n`.
    fn restriction(&self, n: usize) -> Result<Restriction> {
        let reference = self.template();
        let template = reference.truncated(n)?;
        let index = reference
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, k)| k.iter().all(|c| c.unsigned_abs() as usize <= n))
            .map(|(i, _)| i)
            .collect();
        Ok(Restriction { template, index })
    }
}

/// Reusable buffer for copying bank amplitudes onto a lower truncation.
struct Restriction {
    template: KLSample,
    index: Vec<usize>,
}

impl Restriction {
    fn apply(&mut self, full: &KLSample) -> &KLSample {
        let src = full.amplitudes();
        for (dst, &i) in self.template.amplitudes_mut().iter_mut().zip(&self.index) {
            *dst = src[i];
        }
        &self.template
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnisEstimate {
    pub mean: Vec<f64>,
    /// Delta-method standard errors from batch means.
    pub std_error: Vec<f64>,
    /// `(Σ w)² / Σ w²`.
    pub ess: f64,
    /// `log Ẑ`, the log of the mean importance weight `exp(-Φ)`.
    pub log_evidence: f64,
    pub unreliable: bool,
    pub samples: usize,
}

/// `E^{ν^N}[quantity]` with weights `exp(-Φ(P^N u_i))` over the bank.
///
/// Batches are evaluated in parallel and combined in index order, so the
/// result does not depend on the number of threads.
pub fn snis_expectation<Q>(
    bank: &SampleBank,
    problem: &PosteriorProblem,
    truncation: usize,
    batches: usize,
    quantity: Q,
) -> Result<SnisEstimate>
where
    Q: Fn(&KLSample, &Evaluation) -> Vec<f64> + Sync,
{
    check_bank(bank, problem)?;
    let ranges = bank.batch_ranges(batches)?;
    let stats: Vec<BatchStats> = ranges
        .par_iter()
        .map(|range| -> Result<BatchStats> {
            let mut full = bank.template();
            let mut restrict = bank.restriction(truncation)?;
            let mut stats: Option<BatchStats> = None;
            for i in range.clone() {
                bank.fill(i, &mut full);
                let sample = restrict.apply(&full);
                let eval = problem.evaluate(sample, None)?;
                let x = quantity(sample, &eval);
                stats.get_or_insert_with(|| BatchStats::new(x.len(), 0, 0)).add(-eval.phi, &x);
            }
            Ok(stats.expect("batches are non-empty"))
        })
        .collect::<Result<_>>()?;
    let len = stats[0].mean().len();
    if stats.iter().any(|s| s.mean().len() != len) {
        return Err(CoreError::InvalidArgument("quantity changed length between samples".into()));
    }
    let merged = BatchStats::merged(&stats);
    if !merged.has_weight() {
        return Err(CoreError::NonFinite { iteration: 0 });
    }
    let mean = merged.mean();
    let fractions = BatchStats::weight_fractions(&stats);
    let std_error = (0..len)
        .map(|j| {
            let z: Vec<f64> = stats
                .iter()
                .zip(&fractions)
                .map(|(s, f)| if s.has_weight() { f * (s.mean()[j] - mean[j]) } else { 0.0 })
                .collect();
            batch_standard_error(&z)
        })
        .collect();
    let ess = merged.ess();
    Ok(SnisEstimate {
        mean,
        std_error,
        ess,
        log_evidence: merged.log_weight_sum() - (bank.len() as f64).ln(),
        unreliable: ess < MIN_RELIABLE_ESS,
        samples: bank.len(),
    })
}

fn check_bank(bank: &SampleBank, problem: &PosteriorProblem) -> Result<()> {
    if bank.grid() != problem.grid() {
        return Err(CoreError::InvalidArgument("sample bank grid differs from problem grid".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeakErrorMethod {
    /// Importance sampling over one prior bank shared by every truncation.
    Snis,
    /// One pCN chain per truncation, all started from the same seed.
    Pcn(PcnConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorConfig {
    /// Truncations to compare, strictly increasing.
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    /// Bank size for [`WeakErrorMethod::Snis`].
    pub n_samples: usize,
    pub seed: u64,
    pub batches: usize,
    pub method: WeakErrorMethod,
}

impl WeakErrorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(CoreError::InvalidArgument("N_list must not be empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidArgument("N_list must be strictly increasing".into()));
        }
        if self.n_list[0] == 0 {
            return Err(CoreError::InvalidArgument("truncations must be positive".into()));
        }
        let max = *self.n_list.last().unwrap();
        if self.n_ref < max {
            return Err(CoreError::InvalidArgument(format!(
                "N_ref = {} must be at least max(N_list) = {max}",
                self.n_ref
            )));
        }
        Ok(())
    }

    /// Distinct truncations to evaluate, ascending, ending at `n_ref`.
    fn levels(&self) -> Vec<usize> {
        let mut levels = self.n_list.clone();
        if levels.last() != Some(&self.n_ref) {
            levels.push(self.n_ref);
        }
        levels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorRow {
    pub n: usize,
    /// `‖E^{ν^N} p^N - E^{ν^{N_ref}} p^{N_ref}‖_{H¹}`.
    pub e_mean_h1: f64,
    /// Spectral norm of the probe covariance difference.
    pub e_cov_opnorm: f64,
    /// Standard error of `e_mean_h1`.
    pub mc_std_error: f64,
    /// Standard error of `e_cov_opnorm`.
    pub cov_std_error: f64,
    pub ess: f64,
    /// Set when this row or the reference had too few effective samples.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorTable {
    pub rows: Vec<WeakErrorRow>,
    pub n_ref: usize,
    pub reference_ess: f64,
    /// Moments at each evaluated truncation, ascending, the last being `N_ref`.
    pub summaries: Vec<(usize, MomentSummary)>,
}

impl WeakErrorTable {
    pub const CSV_HEADER: &'static str = "N,e_mean_h1,e_cov_opnorm,mc_std_error,ess";

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.n, r.e_mean_h1, r.e_cov_opnorm, r.mc_std_error, r.ess)?;
        }
        Ok(())
    }

    pub fn unreliable_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.unreliable).count()
    }

    /// Log-log fit of `e_mean_h1` against `N` over the rows with `N < N_ref`.
    pub fn mean_rate(&self) -> Result<RateFit> {
        let (ns, es): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.n < self.n_ref)
            .map(|r| (r.n as f64, r.e_mean_h1))
            .unzip();
        fit_rate(&ns, &es)
    }

    pub fn covariance_rate(&self) -> Result<RateFit> {
        let (ns, es): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.n < self.n_ref)
            .map(|r| (r.n as f64, r.e_cov_opnorm))
            .unzip();
        fit_rate(&ns, &es)
    }
}

/// Everything the row computation needs about one truncation level.
struct LevelMoments {
    merged: BatchStats,
    batches: Vec<BatchStats>,
    ess: f64,
}

/// Weak error of the truncated posterior pressure moments against the `N_ref`
/// truncation, with the data, grid and prior draws shared across all `N`.
///
/// `prior` supplies `d` and `s`; its truncation and seed are ignored in favour
/// of `cfg`.
pub fn weak_error_study(
    cfg: &WeakErrorConfig,
    prior: &PriorSpec,
    problem: &PosteriorProblem,
    probe: &ProbeBasis,
) -> Result<WeakErrorTable> {
    cfg.validate()?;
    let grid = problem.grid();
    if probe.grid() != grid {
        return Err(CoreError::InvalidArgument("probe grid differs from problem grid".into()));
    }
    let reference = prior.with_truncation(cfg.n_ref)?.with_seed(cfg.seed);
    let levels = cfg.levels();
    let moments = match cfg.method {
        WeakErrorMethod::Snis => {
            let bank = SampleBank::new(reference, grid, cfg.n_samples)?;
            snis_levels(&bank, problem, probe, &levels, cfg.batches)?
        }
        WeakErrorMethod::Pcn(pcn) => {
            let pcn = PcnConfig { seed: cfg.seed, ..pcn };
            levels
                .par_iter()
                .map(|&n| {
                    let run = run_chain(&pcn, &reference.with_truncation(n)?, problem, probe, cfg.batches)?;
                    Ok(LevelMoments {
                        merged: BatchStats::merged(&run.batches),
                        ess: run.summary.ess_estimate,
                        batches: run.batches,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let reference_moments = moments.last().expect("levels end at N_ref");
    let ref_summary = reference_moments.merged.summary(grid, reference_moments.ess);
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for (&n, level) in levels.iter().zip(&moments) {
        if !cfg.n_list.contains(&n) {
            continue;
        }
        rows.push(weak_error_row(n, level, reference_moments, problem, grid)?);
    }
    let summaries = levels
        .iter()
        .zip(&moments)
        .map(|(&n, m)| (n, m.merged.summary(grid, m.ess)))
        .collect();
    Ok(WeakErrorTable {
        rows,
        n_ref: cfg.n_ref,
        reference_ess: ref_summary.ess_estimate,
        summaries,
    })
}

fn snis_levels(
    bank: &SampleBank,
    problem: &PosteriorProblem,
    probe: &ProbeBasis,
    levels: &[usize],
    batches: usize,
) -> Result<Vec<LevelMoments>> {
    check_bank(bank, problem)?;
    let grid = problem.grid();
    let len = grid.len();
    let dim = probe.dim();
    let ranges = bank.batch_ranges(batches)?;
    let per_batch: Vec<Vec<BatchStats>> = ranges
        .par_iter()
        .map(|range| -> Result<Vec<BatchStats>> {
            let mut full = bank.template();
            let mut restrictions = levels
                .iter()
                .map(|&n| bank.restriction(n))
                .collect::<Result<Vec<_>>>()?;
            let mut stats: Vec<BatchStats> = levels.iter().map(|_| BatchStats::new(len + dim, len, dim)).collect();
            let (mut buf, mut ws) = probe.workspace();
            let mut x = vec![0.0; len + dim];
            for i in range.clone() {
                bank.fill(i, &mut full);
                let mut warm: Option<Field> = None;
                for (restrict, st) in restrictions.iter_mut().zip(stats.iter_mut()) {
                    let eval = problem.evaluate(restrict.apply(&full), warm.as_ref())?;
                    x[..len].copy_from_slice(eval.pressure.values());
                    probe.coordinates_with(&eval.pressure, &mut buf, &mut ws, &mut x[len..]);
                    st.add(-eval.phi, &x);
                    warm = Some(eval.pressure);
                }
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;

    (0..levels.len())
        .map(|l| {
            let batches: Vec<BatchStats> = per_batch.iter().map(|b| b[l].clone()).collect();
            let merged = BatchStats::merged(&batches);
            if !merged.has_weight() {
                return Err(CoreError::NonFinite { iteration: 0 });
            }
            let ess = merged.ess();
            Ok(LevelMoments { merged, batches, ess })
        })
        .collect()
}

fn weak_error_row(
    n: usize,
    level: &LevelMoments,
    reference: &LevelMoments,
    problem: &PosteriorProblem,
    grid: GridSpec,
) -> Result<WeakErrorRow> {
    let len = grid.len();
    let unreliable = level.ess < MIN_RELIABLE_ESS || reference.ess < MIN_RELIABLE_ESS;
    let mean_n = level.merged.mean();
    let mean_r = reference.merged.mean();
    let diff = Field::from_raw(grid, mean_n[..len].iter().zip(&mean_r[..len]).map(|(a, b)| a - b).collect());
    let e_mean_h1 = diff.h1_norm();
    let cov_diff = level.merged.covariance() - reference.merged.covariance();
    let (e_cov_opnorm, direction) = top_eigenpair(&cov_diff);

    // linearised per-batch fluctuations of the two ratio estimators
    let fr_n = BatchStats::weight_fractions(&level.batches);
    let fr_r = BatchStats::weight_fractions(&reference.batches);
    let mut z_mean = Vec::with_capacity(level.batches.len());
    let mut z_cov = Vec::with_capacity(level.batches.len());
    let cov_n = level.merged.covariance();
    let cov_r = reference.merged.covariance();
    for ((bn, fnb), (br, frb)) in level.batches.iter().zip(&fr_n).zip(reference.batches.iter().zip(&fr_r)) {
        let mut fluct = vec![0.0; len];
        let mut cfl = DMatrix::zeros(cov_n.nrows(), cov_n.ncols());
        if bn.has_weight() {
            let m = bn.mean();
            for (j, v) in fluct.iter_mut().enumerate() {
                *v += fnb * (m[j] - mean_n[j]);
            }
            cfl += (bn.covariance() - &cov_n) * *fnb;
        }
        if br.has_weight() {
            let m = br.mean();
            for (j, v) in fluct.iter_mut().enumerate() {
                *v -= frb * (m[j] - mean_r[j]);
            }
            cfl -= (br.covariance() - &cov_r) * *frb;
        }
        if e_mean_h1 > 0.0 {
            let fluct = Field::from_raw(grid, fluct);
            z_mean.push(h1_inner(problem.dft(), &diff, &fluct) / e_mean_h1);
        } else {
            z_mean.push(0.0);
        }
        z_cov.push(match &direction {
            Some((v, sign)) => sign * (v.transpose() * &cfl * v)[(0, 0)],
            None => 0.0,
        });
    }
    Ok(WeakErrorRow {
        n,
        e_mean_h1,
        e_cov_opnorm,
        mc_std_error: batch_standard_error(&z_mean),
        cov_std_error: batch_standard_error(&z_cov),
        ess: level.ess,
        unreliable,
    })
}

/// Spectral norm of a symmetric matrix and, unless it vanishes, the unit
/// eigenvector attaining it with the sign of its eigenvalue.
fn top_eigenpair(m: &DMatrix<f64>) -> (f64, Option<(DMatrix<f64>, f64)>) {
    if m.nrows() == 0 || m.iter().all(|v| *v == 0.0) {
        return (0.0, None);
    }
    let eig = SymmetricEigen::new(m.clone());
    let (i, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bl), (i, &l)| if l.abs() > bl.abs() { (i, l) } else { (bi, bl) });
    let v = eig.eigenvectors.column(i).into_owned();
    (lambda.abs(), Some((DMatrix::from_column_slice(v.len(), 1, v.as_slice()), lambda.signum())))
}

//! Sampling and expectations under the truncated posterior.
//!
//! The posterior on the KL coefficients of `u` has density `exp(-Φ(P^N u))`
//! against the prior. Two estimators are provided: pCN MCMC ([`run_chain`]) and
//! self-normalised importance sampling over a shared prior sample bank
//! ([`snis_expectation`], [`weak_error_study`]). Both report pressure moments
//! through [`MomentSummary`].

mod diagnostics;
mod hellinger;
mod moments;
mod pcn;
mod snis;

pub use diagnostics::{integrated_autocorrelation, AutocorrEstimate, SOKAL_WINDOW_FACTOR};
pub use hellinger::{hellinger_estimate, observe_bank, HellingerEstimate, ObservationBank, MIN_HELLINGER_SAMPLES};
pub use moments::{h1_inner, MomentSummary, ProbeBasis, DEFAULT_PROBE_ORDER};
pub use pcn::{pcn_step, run_chain, run_chain_with, ChainDiagnostics, ChainRun, ChainState, PcnConfig};
pub use snis::{
    snis_expectation, weak_error_study, SampleBank, SnisEstimate, WeakErrorConfig, WeakErrorMethod, WeakErrorRow,
    WeakErrorTable, DEFAULT_BATCHES, MIN_RELIABLE_ESS,
};

use crate::error::{CoreError, Result};
use crate::field::{Dft, Field, GridSpec};
use crate::elliptic::SolveReport;
use crate::observation::{potential_from_observations, DataVector, ForwardModel, NoiseModel};
use crate::prior::KLSample;

/// Forward model, noise and data: everything needed to evaluate `Φ`.
#[derive(Debug, Clone)]
pub struct PosteriorProblem {
    model: ForwardModel,
    noise: NoiseModel,
    y: DataVector,
    dft: Dft,
}

/// Result of pushing one set of KL coefficients through the forward model.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub phi: f64,
    pub pressure: Field,
    pub observations: Vec<f64>,
    pub report: SolveReport,
}

impl PosteriorProblem {
    pub fn new(model: ForwardModel, noise: NoiseModel, y: DataVector) -> Result<Self> {
        let k = model.setup().len();
        if noise.dim() != k || y.len() != k {
            return Err(CoreError::InvalidArgument(format!(
                "dimension mismatch: {k} functionals, noise {}, data {}",
                noise.dim(),
                y.len()
            )));
        }
        let dft = Dft::new(model.grid());
        Ok(Self { model, noise, y, dft })
    }

    pub fn grid(&self) -> GridSpec {
        self.model.grid()
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn data(&self) -> &DataVector {
        &self.y
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// The same problem with different data.
    pub fn with_data(&self, y: DataVector) -> Result<Self> {
        Self::new(self.model.clone(), self.noise.clone(), y)
    }

    /// Realises `sample`, solves for the pressure and evaluates `Φ`.
    pub fn evaluate(&self, sample: &KLSample, warm_start: Option<&Field>) -> Result<Evaluation> {
        if sample.grid() != self.grid() {
            return Err(CoreError::InvalidArgument("sample grid differs from problem grid".into()));
        }
        let u = sample.realize(&self.dft);
        let (pressure, report) = self.model.pressure(&u, warm_start)?;
        let observations = self.model.observe(&pressure)?;
        let phi = potential_from_observations(&self.noise, &self.y, &observations)?.phi;
        Ok(Evaluation {
            phi,
            pressure,
            observations,
            report,
        })
    }
}

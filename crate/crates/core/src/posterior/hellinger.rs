//! Hellinger distance between posteriors for two data vectors, estimated with
//! one shared set of prior draws.

use rayon::prelude::*;

use super::snis::{SampleBank, MIN_RELIABLE_ESS};
use crate::error::{CoreError, Result};
use crate::observation::{potential_from_observations, DataVector, ForwardModel, NoiseModel};

/// Smallest bank accepted by [`hellinger_estimate`].
pub const MIN_HELLINGER_SAMPLES: usize = 1000;

/// Observations `G(P^N u_i)` for every sample of a bank, computed once and
/// reused for any number of data vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBank {
    k: usize,
    values: Vec<f64>,
}

impl ObservationBank {
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.values.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of observations per sample.
    pub fn observations(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }
}

/// Evaluates the forward map on every bank sample truncated to `truncation`.
pub fn observe_bank(
    bank: &SampleBank,
    model: &ForwardModel,
    truncation: usize,
    batches: usize,
) -> Result<ObservationBank> {
    if bank.grid() != model.grid() {
        return Err(CoreError::InvalidArgument("sample bank grid differs from model grid".into()));
    }
    let k = model.setup().len();
    if k == 0 {
        return Err(CoreError::InvalidArgument("observation setup is empty".into()));
    }
    let dft = crate::field::Dft::new(bank.grid());
    let chunks: Vec<Vec<f64>> = bank
        .batch_ranges(batches)?
        .par_iter()
        .map(|range| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(range.len() * k);
            for i in range.clone() {
                let u = bank.sample(i).truncated(truncation)?.realize(&dft);
                let (p, _) = model.pressure(&u, None)?;
                out.extend(model.observe(&p)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(ObservationBank {
        k,
        values: chunks.concat(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerEstimate {
    pub distance: f64,
    /// The smaller of the two importance-weight ESS values.
    pub ess: f64,
    pub unreliable: bool,
}

/// `d² = 1 - Ê[e^{-(Φ(u;y)+Φ(u;y'))/2}] / sqrt(Ẑ(y) Ẑ(y'))`, clamped to `[0, 1]`.
///
/// Every term is formed symmetrically in `(y, y')`, so swapping the arguments
/// gives the same bits, and equal data give exactly zero.
pub fn hellinger_estimate(
    bank: &ObservationBank,
    noise: &NoiseModel,
    y: &DataVector,
    y_prime: &DataVector,
) -> Result<HellingerEstimate> {
    let n = bank.len();
    if n < MIN_HELLINGER_SAMPLES {
        return Err(CoreError::InvalidArgument(format!(
            "Hellinger estimate needs at least {MIN_HELLINGER_SAMPLES} samples, got {n}"
        )));
    }
    let mut phi = Vec::with_capacity(n);
    let mut phi_prime = Vec::with_capacity(n);
    for i in 0..n {
        let g = bank.get(i);
        phi.push(potential_from_observations(noise, y, g)?.phi);
        phi_prime.push(potential_from_observations(noise, y_prime, g)?.phi);
    }
    let mid: Vec<f64> = phi.iter().zip(&phi_prime).map(|(a, b)| 0.5 * (a + b)).collect();

    let shifted = |v: &[f64]| {
        let m = v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
        let (s, s2) = v.iter().fold((0.0, 0.0), |(s, s2), x| {
            let w = (m - x).exp();
            (s + w, s2 + w * w)
        });
        (m, s, s * s / s2)
    };
    let (m, s_mid, _) = shifted(&mid);
    let (m1, s1, ess1) = shifted(&phi);
    let (m2, s2, ess2) = shifted(&phi_prime);
    let ratio = (0.5 * (m1 + m2) - m).exp() * s_mid / (s1 * s2).sqrt();
    let d2 = (1.0 - ratio).clamp(0.0, 1.0);
    let ess = ess1.min(ess2);
    Ok(HellingerEstimate {
        distance: d2.sqrt(),
        ess,
        unreliable: ess < MIN_RELIABLE_ESS,
    })
}

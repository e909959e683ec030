//! Fixtures shared by the benchmarks.

use darcy_core::elliptic::{ProblemData, SolverConfig};
use darcy_core::field::{Field, GridSpec};
use darcy_core::observation::{generate_data, ForwardModel, NoiseModel, ObservationSetup};
use darcy_core::posterior::PosteriorProblem;
use darcy_core::prior::{KLSample, PriorSpec};
use darcy_core::rng::rng_from_seed;

pub fn source(grid: GridSpec) -> ProblemData {
    ProblemData::source_only(Field::from_fn(grid, |x| x[0].cos() + (x[0] + x[1]).sin()))
}

/// A prior draw at truncation `n_trunc`, used as log-permeability.
pub fn log_permeability(grid: GridSpec, n_trunc: usize, seed: u64) -> Field {
    let spec = PriorSpec::new(grid.dim(), 2.0, n_trunc, seed).unwrap();
    KLSample::draw(spec, grid, &mut rng_from_seed(seed)).unwrap().to_field()
}

/// Four point observations of the 2-d problem with data from a prior draw.
pub fn observed_problem(n: usize, solver: SolverConfig) -> PosteriorProblem {
    let grid = GridSpec::new(2, n).unwrap();
    let points = vec![vec![1.0, 1.0], vec![1.0, 4.0], vec![4.0, 1.0], vec![4.0, 4.0]];
    let setup = ObservationSetup::points(grid, &points).unwrap();
    let model = ForwardModel::new(&source(grid), setup, solver).unwrap();
    let noise = NoiseModel::isotropic(points.len(), 0.1).unwrap();
    let u = log_permeability(grid, 8, 2024);
    let y = generate_data(&u, &model, &noise, &mut rng_from_seed(2025)).unwrap();
    PosteriorProblem::new(model, noise, y).unwrap()
}

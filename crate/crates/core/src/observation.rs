//! Observation functionals, Gaussian noise and the misfit potential
//! `Φ(u; y) = ½ |Γ^{-1/2}(y - G(u))|²`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::elliptic::{assemble_rhs, EllipticSolver, ProblemData, SolveReport, SolverConfig};
use crate::error::{CoreError, Result};
use crate::field::{field_read, Field, GridSpec};

/// A single linear functional `l_j` of the pressure.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// Multilinear interpolation of `p` at a point of `[0, 2π)^d`.
    PointEval { x: Vec<f64> },
    /// Quadrature `h^d Σ_j w_j p_j`.
    WeightedAverage { w: Field },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSetup {
    grid: GridSpec,
    functionals: Vec<Functional>,
}

impl ObservationSetup {
    pub fn new(grid: GridSpec, functionals: Vec<Functional>) -> Result<Self> {
        if functionals.is_empty() {
            return Err(CoreError::InvalidArgument("observation setup needs at least one functional".into()));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        for (j, l) in functionals.iter().enumerate() {
            match l {
                Functional::PointEval { x } => {
                    if x.len() != grid.dim() {
                        return Err(CoreError::InvalidArgument(format!(
                            "point {j} has {} coordinates, grid dimension is {}",
                            x.len(),
                            grid.dim()
                        )));
                    }
                    if x.iter().any(|c| !(0.0..two_pi).contains(c)) {
                        return Err(CoreError::InvalidArgument(format!(
                            "point {j} {x:?} lies outside [0, 2π)^d"
                        )));
                    }
                }
                Functional::WeightedAverage { w } => w.check_grid(grid)?,
            }
        }
        Ok(Self { grid, functionals })
    }

    /// Setup with no data; the potential is identically zero.
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            functionals: Vec::new(),
        }
    }

    pub fn points(grid: GridSpec, points: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            grid,
            points.iter().map(|x| Functional::PointEval { x: x.clone() }).collect(),
        )
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    /// Number of observations `K`.
    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// Reads lines `point,x1[,x2[,x3]]` or `weight,<field-file>`; relative
    /// weight paths resolve against the setup file's directory.
    pub fn read_csv_file(path: impl AsRef<Path>, grid: GridSpec) -> Result<Self> {
        let path = path.as_ref();
        let bad = |message: String| CoreError::Csv {
            path: path.into(),
            message,
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => CoreError::io(path, io),
                other => bad(format!("{other:?}")),
            })?;
        let mut functionals = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            match rec.get(0) {
                Some("point") => {
                    let x = rec
                        .iter()
                        .skip(1)
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("line {}: bad coordinate", line + 1)))?;
                    functionals.push(Functional::PointEval { x });
                }
                Some("weight") if rec.len() == 2 => {
                    let p = PathBuf::from(&rec[1]);
                    let p = if p.is_absolute() { p } else { base.join(p) };
                    functionals.push(Functional::WeightedAverage { w: field_read(&p)? });
                }
                _ => return Err(bad(format!("line {}: expected `point,...` or `weight,<path>`", line + 1))),
            }
        }
        Self::new(grid, functionals)
    }
}

/// Applies every functional to `p`.
pub fn observe(p: &Field, setup: &ObservationSetup) -> Result<Vec<f64>> {
    p.check_grid(setup.grid)?;
    Ok(setup
        .functionals
        .iter()
        .map(|l| match l {
            Functional::PointEval { x } => interpolate(p, x),
            Functional::WeightedAverage { w } => w.inner(p),
        })
        .collect())
}

/// Periodic multilinear interpolation of `p` at `x`.
pub fn interpolate(p: &Field, x: &[f64]) -> f64 {
    let grid = p.grid();
    let d = grid.dim();
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let mut lo = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for ax in 0..d {
        let s = x[ax] / h;
        let fl = s.floor();
        lo[ax] = (fl as i64).rem_euclid(n as i64) as usize;
        frac[ax] = s - fl;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut idx = [0usize; 3];
        for ax in 0..d {
            let up = (corner >> ax) & 1 == 1;
            idx[ax] = if up { (lo[ax] + 1) % n } else { lo[ax] };
            weight *= if up { frac[ax] } else { 1.0 - frac[ax] };
        }
        if weight != 0.0 {
            acc += weight * p.values()[grid.flat_index(&idx)];
        }
    }
    acc
}

/// Zero-mean Gaussian noise with covariance `Γ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    gamma: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() {
            return Err(CoreError::NotPositiveDefinite(format!(
                "covariance is {}x{}, not square",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        let scale = gamma.amax().max(f64::MIN_POSITIVE);
        if (&gamma - gamma.transpose()).amax() > 1e-12 * scale {
            return Err(CoreError::NotPositiveDefinite("covariance is not symmetric".into()));
        }
        let factor = Cholesky::<f64, Dyn>::new(gamma.clone())
            .ok_or_else(|| CoreError::NotPositiveDefinite("Cholesky factorisation failed".into()))?
            .l();
        Ok(Self { gamma, factor })
    }

    /// `Γ = σ² I_K`.
    pub fn isotropic(k: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(CoreError::InvalidArgument(format!("noise level {sigma} must be positive")));
        }
        Self::new(DMatrix::from_diagonal_element(k, k, sigma * sigma))
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// Lower-triangular `L` with `Γ = L Lᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `L^{-1} r`, whose Euclidean norm is `|Γ^{-1/2} r|`.
    pub fn whiten(&self, r: &[f64]) -> Vec<f64> {
        let mut v = DVector::from_column_slice(r);
        self.factor.solve_lower_triangular_mut(&mut v);
        v.as_slice().to_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        (&self.factor * xi).as_slice().to_vec()
    }

    /// Reads a `K x K` comma-separated matrix without header.
    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_numeric_rows(path.as_ref())?;
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(CoreError::Csv {
                path: path.as_ref().into(),
                message: format!("covariance must be {k}x{k}"),
            });
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| self.gamma[(i, j)].to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CoreError::Csv {
            path: path.into(),
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| CoreError::Csv {
                path: path.into(),
                message: format!("line {}: not a number", line + 1),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Observed data `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    pub y: Vec<f64>,
}

impl DataVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidArgument("data vector has a non-finite entry".into()));
        }
        Ok(Self { y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// One value per line.
    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_numeric_rows(path.as_ref())?;
        if rows.iter().any(|r| r.len() != 1) {
            return Err(CoreError::Csv {
                path: path.as_ref().into(),
                message: "expected one value per line".into(),
            });
        }
        Self::new(rows.into_iter().map(|r| r[0]).collect())
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        for v in &self.y {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialValue {
    pub phi: f64,
    /// `y - G(u)`.
    pub residual: Vec<f64>,
}

impl PotentialValue {
    pub fn from_residual(noise: &NoiseModel, residual: Vec<f64>) -> Self {
        let white = noise.whiten(&residual);
        let phi = 0.5 * white.iter().map(|v| v * v).sum::<f64>();
        Self { phi, residual }
    }
}

/// `Φ` given precomputed observations `G(u)`.
pub fn potential_from_observations(noise: &NoiseModel, y: &DataVector, g: &[f64]) -> Result<PotentialValue> {
    if y.len() != g.len() || noise.dim() != g.len() {
        return Err(CoreError::InvalidArgument(format!(
            "dimension mismatch: data {}, observations {}, noise {}",
            y.len(),
            g.len(),
            noise.dim()
        )));
    }
    let residual = y.y.iter().zip(g).map(|(a, b)| a - b).collect();
    Ok(PotentialValue::from_residual(noise, residual))
}

/// Forward problem `u ↦ p ↦ G(u)` with the right-hand side assembled once.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    solver: EllipticSolver,
    rhs: Field,
    setup: ObservationSetup,
    cfg: SolverConfig,
}

impl ForwardModel {
    pub fn new(data: &ProblemData, setup: ObservationSetup, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = data.grid();
        if setup.grid() != grid {
            return Err(CoreError::InvalidArgument("observation grid differs from problem grid".into()));
        }
        Ok(Self {
            solver: EllipticSolver::new(grid),
            rhs: assemble_rhs(data),
            setup,
            cfg,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.rhs.grid()
    }

    pub fn setup(&self) -> &ObservationSetup {
        &self.setup
    }

    pub fn solver(&self) -> &EllipticSolver {
        &self.solver
    }

    pub fn solver_config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn pressure(&self, u: &Field, warm_start: Option<&Field>) -> Result<(Field, SolveReport)> {
        self.solver.solve_rhs(u, &self.rhs, &self.cfg, warm_start)
    }

    pub fn observe(&self, p: &Field) -> Result<Vec<f64>> {
        observe(p, &self.setup)
    }

    /// `G(u)`.
    pub fn forward_map(&self, u: &Field) -> Result<Vec<f64>> {
        let (p, _) = self.pressure(u, None)?;
        self.observe(&p)
    }
}

/// `G(u) = (l_1(p), ..., l_K(p))`.
pub fn forward_map(u: &Field, data: &ProblemData, setup: &ObservationSetup, cfg: &SolverConfig) -> Result<Vec<f64>> {
    ForwardModel::new(data, setup.clone(), *cfg)?.forward_map(u)
}

pub fn potential(
    u: &Field,
    data: &ProblemData,
    setup: &ObservationSetup,
    cfg: &SolverConfig,
    noise: &NoiseModel,
    y: &DataVector,
) -> Result<PotentialValue> {
    let g = forward_map(u, data, setup, cfg)?;
    potential_from_observations(noise, y, &g)
}

/// `y = G(u_true) + L ξ` with `ξ` standard normal.
pub fn generate_data<R: Rng + ?Sized>(
    u_true: &Field,
    model: &ForwardModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<DataVector> {
    let g = model.forward_map(u_true)?;
    if noise.dim() != g.len() {
        return Err(CoreError::InvalidArgument(format!(
            "noise dimension {} differs from observation count {}",
            noise.dim(),
            g.len()
        )));
    }
    let eta = noise.sample(rng);
    DataVector::new(g.iter().zip(&eta).map(|(a, b)| a + b).collect())
}

/// `|Φ(u; y₁) - Φ(u; y₂)| / |y₁ - y₂|` for observations `g = G(u)`.
pub fn potential_data_lipschitz_check(noise: &NoiseModel, g: &[f64], y1: &DataVector, y2: &DataVector) -> Result<f64> {
    let dist = y1
        .y
        .iter()
        .zip(&y2.y)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if y1.len() != y2.len() || dist == 0.0 {
        return Err(CoreError::InvalidArgument("data vectors must differ and have equal length".into()));
    }
    let p1 = potential_from_observations(noise, y1, g)?.phi;
    let p2 = potential_from_observations(noise, y2, g)?.phi;
    Ok((p1 - p2).abs() / dist)
}

//! Conservative finite differences for `-∇·(e^u ∇p) = f + ∇·g` on the torus.
//!
//! Along axis `i` the face coefficient between node `j` and `j + e_i` is the
//! geometric mean `a_{j+½} = exp((u_j + u_{j+e_i})/2)`, the flux is
//! `F_j = a_{j+½}(p_{j+e_i} - p_j)/h` and the operator is
//! `(A_u p)_j = -Σ_i (F_j - F_{j-e_i})/h`. The source divergence uses the
//! face averages `(g_j + g_{j+e_i})/2`, differenced the same way.
//!
//! `A_u` is symmetric positive semidefinite with kernel the constants, so the
//! solution is fixed by the zero-mean gauge and the right-hand side is
//! projected onto mean-zero fields before solving.

use crate::error::{CoreError, Result};
use crate::field::{dot, Dft, Field, GridSpec, RealDft, RealDftWorkspace};
use rustfft::num_complex::Complex64;

/// Right-hand side data `f` and flux source `g` (one field per axis, or none).
#[derive(Debug, Clone)]
pub struct ProblemData {
    f: Field,
    g: Vec<Field>,
}

impl ProblemData {
    pub fn new(f: Field, g: Vec<Field>) -> Result<Self> {
        let grid = f.grid();
        if !g.is_empty() && g.len() != grid.dim() {
            return Err(CoreError::InvalidArgument(format!(
                "flux source needs {} components, got {}",
                grid.dim(),
                g.len()
            )));
        }
        for gi in &g {
            gi.check_grid(grid)?;
        }
        Ok(Self { f, g })
    }

    pub fn source_only(f: Field) -> Self {
        Self { f, g: Vec::new() }
    }

    pub fn grid(&self) -> GridSpec {
        self.f.grid()
    }

    pub fn source(&self) -> &Field {
        &self.f
    }

    pub fn flux_source(&self) -> &[Field] {
        &self.g
    }
}

/// Preconditioner for the conjugate gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// Spectral pseudo-inverse of the constant-coefficient discrete Laplacian.
    Laplacian,
    /// The same pseudo-inverse wrapped in the diagonal scaling `e^{-u/2}` on both sides.
    #[default]
    ScaledLaplacian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// `None` means `10 n^d`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "relative tolerance {} not in (0, 1)",
                self.rel_tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(CoreError::InvalidArgument("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, grid: GridSpec) -> usize {
        self.max_iter.unwrap_or(10 * grid.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖A_u p - b‖ / ‖b‖` recomputed from the returned solution.
    pub final_relative_residual: f64,
    pub converged: bool,
}

/// Per-solve buffers.
struct Workspace {
    r: Vec<f64>,
    z: Vec<f64>,
    dir: Vec<f64>,
    ad: Vec<f64>,
    flux: Vec<f64>,
    real: Vec<f64>,
    spectral: Vec<Complex64>,
    dft: RealDftWorkspace,
}

impl Workspace {
    fn new(dft: &RealDft, len: usize) -> Self {
        Self {
            r: vec![0.0; len],
            z: vec![0.0; len],
            dir: vec![0.0; len],
            ad: vec![0.0; len],
            flux: vec![0.0; len],
            real: vec![0.0; len],
            spectral: vec![Complex64::new(0.0, 0.0); dft.half_len()],
            dft: dft.workspace(),
        }
    }
}

/// Visits every face `(j, j + e_axis)` of the periodic grid.
#[inline]
fn for_each_face(grid: GridSpec, axis: usize, mut visit: impl FnMut(usize, usize)) {
    let n = grid.points_per_axis();
    let stride = grid.stride(axis);
    let block = n * stride;
    for base in (0..grid.len()).step_by(block) {
        for t in 0..n {
            let row = base + t * stride;
            let next = if t + 1 == n { base } else { row + stride };
            for inner in 0..stride {
                visit(row + inner, next + inner);
            }
        }
    }
}

/// Face coefficients `exp((u_j + u_{j+e_i})/2) / h²` for every axis.
#[derive(Debug, Clone)]
pub struct FaceCoefficients {
    grid: GridSpec,
    faces: Vec<Vec<f64>>,
}

impl FaceCoefficients {
    pub fn new(u: &Field) -> Self {
        let grid = u.grid();
        let uv = u.values();
        let inv_h2 = 1.0 / grid.spacing().powi(2);
        let faces = (0..grid.dim())
            .map(|axis| {
                let mut a = vec![0.0; grid.len()];
                for_each_face(grid, axis, |j, jp| a[j] = (0.5 * (uv[j] + uv[jp])).exp() * inv_h2);
                a
            })
            .collect();
        Self { grid, faces }
    }

    /// `out = A_u p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let mut flux = vec![0.0; p.len()];
        self.apply_with(p, out, &mut flux);
    }

    /// `out = A_u p` using caller-provided flux storage of the same length.
    pub fn apply_with(&self, p: &[f64], out: &mut [f64], flux: &mut [f64]) {
        let n = self.grid.points_per_axis();
        let len = self.grid.len();
        out.fill(0.0);
        for (axis, a) in self.faces.iter().enumerate() {
            let stride = self.grid.stride(axis);
            let block = n * stride;
            // flux_j = a_{j+½} (p_{j+e} - p_j), then out_j += flux_{j-e} - flux_j
            for base in (0..len).step_by(block) {
                let inner = block - stride;
                let (ab, pb, fb) = (&a[base..base + block], &p[base..base + block], &mut flux[base..base + block]);
                for ((f, a), (p0, p1)) in fb[..inner]
                    .iter_mut()
                    .zip(&ab[..inner])
                    .zip(pb[..inner].iter().zip(&pb[stride..]))
                {
                    *f = a * (p1 - p0);
                }
                for ((f, a), (p0, p1)) in fb[inner..]
                    .iter_mut()
                    .zip(&ab[inner..])
                    .zip(pb[inner..].iter().zip(&pb[..stride]))
                {
                    *f = a * (p1 - p0);
                }
                let ob = &mut out[base..base + block];
                for (o, (f, fprev)) in ob[stride..].iter_mut().zip(fb[stride..].iter().zip(&fb[..inner])) {
                    *o += fprev - f;
                }
                for (o, (f, fprev)) in ob[..stride].iter_mut().zip(fb[..stride].iter().zip(&fb[inner..])) {
                    *o += fprev - f;
                }
            }
        }
    }
}

pub fn apply_operator(u: &Field, p: &Field) -> Result<Field> {
    p.check_grid(u.grid())?;
    let mut out = vec![0.0; u.grid().len()];
    FaceCoefficients::new(u).apply(p.values(), &mut out);
    Ok(Field::from_raw(u.grid(), out))
}

/// Discrete `f + ∇·g`, projected onto mean-zero fields.
pub fn assemble_rhs(data: &ProblemData) -> Field {
    let grid = data.grid();
    let mut b = data.f.values().to_vec();
    let inv_h = 1.0 / grid.spacing();
    for (axis, g) in data.g.iter().enumerate() {
        let gv = g.values();
        for_each_face(grid, axis, |j, jp| {
            let face = 0.5 * (gv[j] + gv[jp]) * inv_h;
            b[j] += face;
            b[jp] -= face;
        });
    }
    let mut out = Field::from_raw(grid, b);
    out.remove_mean();
    out
}

/// `(λ, Λ) = (exp(min u), exp(max u))`.
pub fn coefficient_bounds(u: &Field) -> (f64, f64) {
    let (lo, hi) = u.min_max();
    (lo.exp(), hi.exp())
}

/// Discrete Dirichlet energy `h^d Σ_i Σ_j ((p_{j+e_i} - p_j)/h)²`.
pub fn gradient_energy(p: &Field) -> f64 {
    let grid = p.grid();
    let pv = p.values();
    let inv_h2 = 1.0 / grid.spacing().powi(2);
    let mut acc = 0.0;
    for axis in 0..grid.dim() {
        for_each_face(grid, axis, |j, jp| acc += (pv[jp] - pv[j]).powi(2) * inv_h2);
    }
    acc * grid.cell_volume()
}

/// Conjugate gradient solver preconditioned by the spectral pseudo-inverse of
/// the constant-coefficient discrete Laplacian.
#[derive(Debug, Clone)]
pub struct EllipticSolver {
    dft: Dft,
    rdft: RealDft,
    inv_symbol: Vec<f64>,
}

impl EllipticSolver {
    pub fn new(grid: GridSpec) -> Self {
        let dft = Dft::new(grid);
        let rdft = RealDft::new(grid);
        let h = grid.spacing();
        let inv_symbol = (0..rdft.half_len())
            .map(|i| {
                let k = rdft.frequencies(i);
                let sym: f64 = k[..grid.dim()]
                    .iter()
                    .map(|&k| (2.0 - 2.0 * (k as f64 * h).cos()) / (h * h))
                    .sum();
                // the forward transform inside the preconditioner is unnormalised
                if i == 0 {
                    0.0
                } else {
                    1.0 / (sym * grid.len() as f64)
                }
            })
            .collect();
        Self { dft, rdft, inv_symbol }
    }

    pub fn grid(&self) -> GridSpec {
        self.dft.grid()
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// `z = P S L⁺ S r`, with `L⁺` the spectral pseudo-inverse of the discrete
    /// Laplacian, `S` the optional diagonal scaling and `P` the mean removal.
    fn precondition(&self, scale: Option<&[f64]>, ws: &mut Workspace) {
        let Workspace { r, z, real, spectral, dft, .. } = ws;
        let input: &[f64] = match scale {
            Some(sc) => {
                for ((t, &v), &w) in real.iter_mut().zip(r.iter()).zip(sc) {
                    *t = v * w;
                }
                real
            }
            None => r,
        };
        self.rdft.forward_unscaled_with(input, spectral, dft);
        for (c, &w) in spectral.iter_mut().zip(&self.inv_symbol) {
            *c *= w;
        }
        self.rdft.inverse_with(spectral, z, dft);
        if let Some(sc) = scale {
            let mut sum = 0.0;
            for (zi, &w) in z.iter_mut().zip(sc) {
                *zi *= w;
                sum += *zi;
            }
            let mean = sum / z.len() as f64;
            z.iter_mut().for_each(|v| *v -= mean);
        }
    }

    /// Solves `A_u p = rhs` for mean-zero `p`; `rhs` should already be mean-zero
    /// (see [`assemble_rhs`]). `initial` is an optional warm start.
    pub fn solve_rhs(
        &self,
        u: &Field,
        rhs: &Field,
        cfg: &SolverConfig,
        initial: Option<&Field>,
    ) -> Result<(Field, SolveReport)> {
        cfg.validate()?;
        let grid = self.grid();
        u.check_grid(grid)?;
        rhs.check_grid(grid)?;
        let len = grid.len();
        let b = rhs.values();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return Ok((
                Field::zeros(grid),
                SolveReport {
                    iterations: 0,
                    final_relative_residual: 0.0,
                    converged: true,
                },
            ));
        }
        let op = FaceCoefficients::new(u);
        let scale: Option<Vec<f64>> = match cfg.preconditioner {
            Preconditioner::Laplacian => None,
            Preconditioner::ScaledLaplacian => Some(u.values().iter().map(|v| (-0.5 * v).exp()).collect()),
        };
        let scale = scale.as_deref();
        let cap = cfg.iteration_cap(grid);
        let mut ws = Workspace::new(&self.rdft, len);

        let mut x = match initial {
            Some(x0) => {
                x0.check_grid(grid)?;
                x0.zero_mean_project().into_values()
            }
            None => vec![0.0; len],
        };
        let mut iterations = 0usize;

        let true_residual = |x: &[f64], ws: &mut Workspace| {
            op.apply_with(x, &mut ws.ad, &mut ws.flux);
            for ((ri, bi), ai) in ws.r.iter_mut().zip(b).zip(&ws.ad) {
                *ri = bi - ai;
            }
            dot(&ws.r, &ws.r).sqrt() / b_norm
        };

        let mut rel = true_residual(&x, &mut ws);
        // outer loop restarts from the true residual if the recurrence drifts
        while rel > cfg.rel_tol && iterations < cap {
            self.precondition(scale, &mut ws);
            ws.dir.copy_from_slice(&ws.z);
            let mut rz = dot(&ws.r, &ws.z);
            loop {
                if !rz.is_finite() {
                    return Err(CoreError::NonFinite { iteration: iterations });
                }
                op.apply_with(&ws.dir, &mut ws.ad, &mut ws.flux);
                let dad = dot(&ws.dir, &ws.ad);
                if !dad.is_finite() {
                    return Err(CoreError::NonFinite { iteration: iterations });
                }
                if dad <= 0.0 {
                    break;
                }
                let alpha = rz / dad;
                for ((xi, ri), (di, ai)) in x.iter_mut().zip(ws.r.iter_mut()).zip(ws.dir.iter().zip(&ws.ad)) {
                    *xi += alpha * di;
                    *ri -= alpha * ai;
                }
                iterations += 1;
                let rec = dot(&ws.r, &ws.r).sqrt() / b_norm;
                if !rec.is_finite() {
                    return Err(CoreError::NonFinite { iteration: iterations });
                }
                if rec <= cfg.rel_tol || iterations >= cap {
                    break;
                }
                self.precondition(scale, &mut ws);
                let rz_next = dot(&ws.r, &ws.z);
                let beta = rz_next / rz;
                rz = rz_next;
                for (di, zi) in ws.dir.iter_mut().zip(&ws.z) {
                    *di = zi + beta * *di;
                }
            }
            let prev = rel;
            rel = true_residual(&x, &mut ws);
            if rel >= prev && rel > cfg.rel_tol {
                // restart made no progress: round-off floor reached
                break;
            }
        }

        let mut p = Field::from_raw(grid, x);
        p.remove_mean();
        let report = SolveReport {
            iterations,
            final_relative_residual: rel,
            converged: rel <= cfg.rel_tol,
        };
        if report.converged {
            Ok((p, report))
        } else {
            Err(CoreError::NotConverged(report))
        }
    }

    pub fn solve(&self, u: &Field, data: &ProblemData, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
        data.source().check_grid(self.grid())?;
        self.solve_rhs(u, &assemble_rhs(data), cfg, None)
    }
}

pub fn solve(u: &Field, data: &ProblemData, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
    EllipticSolver::new(u.grid()).solve(u, data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{KLSample, PriorSpec};
    use crate::rng::rng_from_seed;
    use std::f64::consts::E;

    fn grid(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n).unwrap()
    }

    fn random_field(g: GridSpec, s: f64, trunc: usize, seed: u64) -> Field {
        let spec = PriorSpec::new(g.dim(), s, trunc, seed).unwrap();
        KLSample::draw(spec, g, &mut rng_from_seed(seed)).unwrap().to_field()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = grid(2, 16);
        let u = random_field(g, 2.0, 5, 1);
        let out = apply_operator(&u, &Field::constant(g, 3.0)).unwrap();
        assert!(out.sup_norm() < 1e-12);
    }

    #[test]
    fn discrete_symbol_of_cosine() {
        let g = grid(1, 32);
        let h = g.spacing();
        let p = Field::from_fn(g, |x| x[0].cos());
        let out = apply_operator(&Field::zeros(g), &p).unwrap();
        let lambda = (2.0 - 2.0 * h.cos()) / (h * h);
        assert!(out.sub(&p.scaled(lambda)).sup_norm() < 1e-12);
    }

    #[test]
    fn operator_is_symmetric_with_mean_zero_output() {
        let g = grid(2, 16);
        let u = random_field(g, 1.5, 7, 3);
        let p = random_field(g, 1.2, 7, 4);
        let q = random_field(g, 1.2, 7, 5);
        let ap = apply_operator(&u, &p).unwrap();
        let aq = apply_operator(&u, &q).unwrap();
        assert!((ap.inner(&q) - p.inner(&aq)).abs() < 1e-10 * ap.l2_norm() * q.l2_norm());
        assert!(ap.mean().abs() < 1e-12);
        let shifted = p.add_scaled(1.0, &Field::constant(g, 4.0));
        let ap2 = apply_operator(&u, &shifted).unwrap();
        assert!(ap2.sub(&ap).sup_norm() < 1e-10);
    }

    #[test]
    fn coercivity_bounds() {
        let g = grid(2, 16);
        for seed in 0..5 {
            let u = random_field(g, 1.5, 7, 10 + seed).scaled(2.0);
            let p = random_field(g, 1.5, 7, 20 + seed);
            let (lo, hi) = coefficient_bounds(&u);
            let energy = apply_operator(&u, &p).unwrap().inner(&p);
            let grad = gradient_energy(&p);
            assert!(lo * grad <= energy * (1.0 + 1e-12));
            assert!(energy <= hi * grad * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bounds_examples() {
        let g = grid(1, 64);
        assert_eq!(coefficient_bounds(&Field::zeros(g)), (1.0, 1.0));
        let (lo, hi) = coefficient_bounds(&Field::from_fn(g, |x| x[0].sin()));
        assert!((lo - 1.0 / E).abs() < 1e-12 && (hi - E).abs() < 1e-12);
    }

    #[test]
    fn rhs_examples() {
        let g = grid(1, 64);
        let f = Field::from_fn(g, |x| (2.0 * x[0]).sin());
        let b = assemble_rhs(&ProblemData::source_only(f.clone()));
        assert!(b.sub(&f).sup_norm() < 1e-14);

        let b = assemble_rhs(&ProblemData::source_only(Field::constant(g, 1.0)));
        assert!(b.sup_norm() < 1e-14);

        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let g = grid(1, n);
            let data = ProblemData::new(Field::zeros(g), vec![Field::from_fn(g, |x| x[0].cos())]).unwrap();
            let b = assemble_rhs(&data);
            errs.push(b.sub(&Field::from_fn(g, |x| -x[0].sin())).sup_norm());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "order {order}");
        }
    }

    #[test]
    fn rhs_is_linear() {
        let g = grid(2, 16);
        let f1 = random_field(g, 1.5, 5, 1);
        let f2 = random_field(g, 1.5, 5, 2);
        let g1 = vec![random_field(g, 1.5, 5, 3), random_field(g, 1.5, 5, 4)];
        let g2 = vec![random_field(g, 1.5, 5, 5), random_field(g, 1.5, 5, 6)];
        let d1 = ProblemData::new(f1.clone(), g1.clone()).unwrap();
        let d2 = ProblemData::new(f2.clone(), g2.clone()).unwrap();
        let combo = ProblemData::new(
            f1.add_scaled(2.0, &f2),
            g1.iter().zip(&g2).map(|(a, b)| a.add_scaled(2.0, b)).collect(),
        )
        .unwrap();
        let lhs = assemble_rhs(&combo);
        let rhs = assemble_rhs(&d1).add_scaled(2.0, &assemble_rhs(&d2));
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12);
    }

    #[test]
    fn laplace_cosine_solution() {
        let g = grid(2, 64);
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].cos()));
        let (p, report) = solve(&Field::zeros(g), &data, &SolverConfig::default()).unwrap();
        assert!(report.converged && report.final_relative_residual <= 1e-10);
        let exact = Field::from_fn(g, |x| x[0].cos());
        let err = p.sub(&exact).sup_norm();
        assert!(err < 2.0 * g.spacing().powi(2), "err {err}");
        assert!(p.mean().abs() < 1e-12);
    }

    #[test]
    fn constant_coefficient_scaling() {
        let g = grid(2, 64);
        let c = 0.7;
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].cos()));
        let (p, _) = solve(&Field::constant(g, c), &data, &SolverConfig::default()).unwrap();
        let exact = Field::from_fn(g, |x| (-c).exp() * x[0].cos());
        assert!(p.sub(&exact).sup_norm() < 2.0 * g.spacing().powi(2));
    }

    fn manufactured_errors(n: usize) -> (f64, f64) {
        let g = grid(2, n);
        let u = Field::from_fn(g, |x| x[0].sin());
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].sin().exp() * x[1].cos()));
        let (p, _) = solve(&u, &data, &SolverConfig::default()).unwrap();
        let e = p.sub(&Field::from_fn(g, |x| x[1].cos()));
        (e.sup_norm(), e.h1_norm())
    }

    #[test]
    fn manufactured_solution_second_order() {
        let errs: Vec<(f64, f64)> = [32, 64, 128].iter().map(|&n| manufactured_errors(n)).collect();
        for w in errs.windows(2) {
            let sup_order = (w[0].0 / w[1].0).log2();
            let h1_order = (w[0].1 / w[1].1).log2();
            assert!((sup_order - 2.0).abs() <= 0.2, "sup order {sup_order}");
            assert!((h1_order - 2.0).abs() <= 0.2, "h1 order {h1_order}");
        }
    }

    #[test]
    fn flux_source_problem() {
        // -(p')' = g' with g = sin(x) gives p = cos(x) up to discretisation
        let g = grid(1, 128);
        let data = ProblemData::new(Field::zeros(g), vec![Field::from_fn(g, |x| x[0].sin())]).unwrap();
        let (p, _) = solve(&Field::zeros(g), &data, &SolverConfig::default()).unwrap();
        assert!(p.sub(&Field::from_fn(g, |x| x[0].cos())).sup_norm() < 1e-3);
    }

    #[test]
    fn three_dimensional_solve() {
        let g = grid(3, 16);
        let u = random_field(g, 2.0, 4, 8);
        let data = ProblemData::source_only(Field::from_fn(g, |x| (x[0] + x[2]).cos()));
        let (p, rep) = solve(&u, &data, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        let resid = apply_operator(&u, &p).unwrap().sub(&assemble_rhs(&data));
        assert!(resid.l2_norm() <= 1e-9 * assemble_rhs(&data).l2_norm());
    }

    #[test]
    fn zero_rhs_and_warm_start() {
        let g = grid(2, 32);
        let u = random_field(g, 2.0, 6, 2);
        let solver = EllipticSolver::new(g);
        let (p, rep) = solver
            .solve(&u, &ProblemData::source_only(Field::constant(g, 2.0)), &SolverConfig::default())
            .unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(p.sup_norm(), 0.0);

        let rhs = assemble_rhs(&ProblemData::source_only(Field::from_fn(g, |x| x[1].sin())));
        let cfg = SolverConfig::default();
        let (cold, rc) = solver.solve_rhs(&u, &rhs, &cfg, None).unwrap();
        let (warm, rw) = solver.solve_rhs(&u, &rhs, &cfg, Some(&cold)).unwrap();
        assert!(rw.iterations < rc.iterations);
        assert!(warm.sub(&cold).sup_norm() < 1e-8);
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = grid(2, 32);
        let u = random_field(g, 2.0, 6, 2).scaled(3.0);
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].cos()));
        let cfg = SolverConfig {
            rel_tol: 1e-12,
            max_iter: Some(2),
            ..SolverConfig::default()
        };
        match solve(&u, &data, &cfg) {
            Err(CoreError::NotConverged(rep)) => {
                assert!(!rep.converged);
                assert_eq!(rep.iterations, 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(SolverConfig::with_tolerance(0.0).validate().is_err());
        assert!(ProblemData::new(Field::zeros(g), vec![Field::zeros(g)]).is_err());
    }

    #[test]
    fn energy_bound_amplitude_sweep() {
        let g = grid(2, 32);
        let v = random_field(g, 2.0, 8, 12);
        let v = v.scaled(1.0 / v.sup_norm());
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].cos() + (x[1] - x[0]).sin()));
        let ratios: Vec<f64> = (0..=4)
            .map(|a| {
                let u = v.scaled(a as f64);
                let (p, _) = solve(&u, &data, &SolverConfig::default()).unwrap();
                p.h1_norm() / (2.0 * u.sup_norm()).exp()
            })
            .collect();
        assert!(ratios.iter().all(|r| *r <= 10.0 * ratios[0]), "{ratios:?}");
    }

    #[test]
    fn solution_continuity_pairs() {
        let g = grid(2, 32);
        let solver = EllipticSolver::new(g);
        let data = ProblemData::source_only(Field::from_fn(g, |x| x[0].cos() + (x[1] - x[0]).sin()));
        let cfg = SolverConfig::default();
        let unit = |seed| {
            let f = random_field(g, 2.0, 8, seed);
            f.scaled(1.0 / f.sup_norm())
        };
        // calibrate at a small perturbation of zero
        let v0 = unit(100).scaled(0.05);
        let (p0, _) = solver.solve(&Field::zeros(g), &data, &cfg).unwrap();
        let (p1, _) = solver.solve(&v0, &data, &cfg).unwrap();
        let c0 = p1.sub(&p0).h1_norm() / ((4.0 * v0.sup_norm()).exp() * v0.sup_norm());
        for i in 0..6 {
            let u1 = unit(200 + i).scaled(0.2 + 0.15 * i as f64);
            let u2 = unit(300 + i).scaled(0.9);
            let (q1, _) = solver.solve(&u1, &data, &cfg).unwrap();
            let (q2, _) = solver.solve(&u2, &data, &cfg).unwrap();
            let lhs = q1.sub(&q2).h1_norm();
            let m = u1.sup_norm().max(u2.sup_norm());
            let rhs = 10.0 * c0 * (4.0 * m).exp() * u1.sub(&u2).sup_norm();
            assert!(lhs <= rhs, "pair {i}: {lhs} > {rhs}");
        }
    }
}

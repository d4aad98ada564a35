//! Time integration of the Allen–Cahn equation
//! `u_t = Δu - f(u)/ε²`, `f(u) = 2u(u² - 1)`, from indicator or smooth data.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{gradient_norm_sq, laplacian_into, Boundary, Extension, Grid, ScalarField};

/// Double-well derivative `f(u) = F'(u)`.
#[inline]
pub fn reaction(u: f64) -> f64 {
    2.0 * u * (u * u - 1.0)
}

/// Double-well potential `F(u) = (1 - u²)² / 2`.
#[inline]
pub fn potential(u: f64) -> f64 {
    let a = 1.0 - u * u;
    0.5 * a * a
}

/// Energy per unit length of the standing profile, `∫ (1 - u²) du` over [-1, 1].
pub const SURFACE_TENSION: f64 = 4.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    /// Implicit diffusion, explicit reaction.
    SemiImplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ACParams {
    pub epsilon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

/// Largest explicit step keeping the scheme monotone:
/// `min(h² / (4 dim), ε² / 8)`.
pub fn explicit_dt_limit(grid: &Grid, epsilon: f64) -> f64 {
    let h = grid.spacing();
    (h * h / (4.0 * grid.dim() as f64)).min(epsilon * epsilon / 8.0)
}

impl ACParams {
    /// Explicit Euler at the monotonicity limit.
    pub fn explicit(grid: &Grid, epsilon: f64, t_end: f64, snapshot_times: Vec<f64>) -> Self {
        Self { epsilon, dt: explicit_dt_limit(grid, epsilon), scheme: Scheme::ExplicitEuler, t_end, snapshot_times }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let e = self.epsilon;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be in (0,1), got {e}")));
        }
        if e < 4.0 * grid.spacing() {
            return Err(Error::InvalidParameter(format!(
                "epsilon {e} is under-resolved: need epsilon >= 4h = {}",
                4.0 * grid.spacing()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.scheme == Scheme::ExplicitEuler {
            let limit = explicit_dt_limit(grid, e);
            if self.dt > limit * (1.0 + 1e-12) {
                return Err(Error::DtViolation { dt: self.dt, limit });
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_end).contains(&t) {
                return Err(Error::InvalidParameter(format!("snapshot time {t} outside [0, t_end]")));
            }
            if t < prev {
                return Err(Error::InvalidParameter("snapshot times must be sorted".into()));
            }
            prev = t;
        }
        Ok(())
    }

    /// Latest snapshot time that still counts as `t <= ε²`. Snapshots sit on
    /// whole steps, so the one requested at `ε²` can land up to `dt/2` later.
    pub fn early_cutoff(&self) -> f64 {
        self.epsilon * self.epsilon + 0.5 * self.dt
    }

    /// Step count reaching time `t` (nearest step boundary).
    pub fn steps_to(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Trajectory of one Allen–Cahn run.
#[derive(Debug, Clone)]
pub struct ACSolution {
    pub params: ACParams,
    pub initial: ScalarField,
    /// One field per requested snapshot time; each carries the exact time
    /// of the step boundary it was taken at.
    pub snapshots: Vec<ScalarField>,
    pub steps: usize,
}

impl ACSolution {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(ScalarField::time).collect()
    }

    /// Snapshot closest in time to `t`.
    pub fn nearest(&self, t: f64) -> Option<&ScalarField> {
        self.snapshots.iter().min_by(|a, b| (a.time() - t).abs().total_cmp(&(b.time() - t).abs()))
    }
}

/// Reusable state for repeated steps on one grid.
pub struct Stepper {
    grid: Grid,
    params: ACParams,
    ext: Extension,
    padded: Vec<f64>,
    scratch: Vec<f64>,
    fft: Option<FftSolver>,
}

impl Stepper {
    pub fn new(grid: Grid, params: ACParams) -> Result<Self> {
        params.validate(&grid)?;
        let ext = grid.boundary().extension();
        let fft = match (params.scheme, grid.boundary()) {
            (Scheme::SemiImplicit, Boundary::Periodic) => Some(FftSolver::new(&grid, params.dt)),
            _ => None,
        };
        Ok(Self { grid, params, ext, padded: Vec::new(), scratch: vec![0.0; grid.len()], fft })
    }

    /// Advances `u` in place by one step.
    pub fn advance(&mut self, u: &mut [f64]) -> Result<()> {
        let inv_eps2 = 1.0 / (self.params.epsilon * self.params.epsilon);
        let dt = self.params.dt;
        match self.params.scheme {
            Scheme::ExplicitEuler => {
                if self.grid.dim() == 2 {
                    explicit_2d(u, &mut self.padded, &self.grid, self.ext, dt, inv_eps2);
                } else {
                    laplacian_into(u, &self.grid, self.ext, &mut self.scratch);
                    u.par_iter_mut().zip(self.scratch.par_iter()).for_each(|(v, &l)| {
                        *v += dt * (l - reaction(*v) * inv_eps2);
                    });
                }
            }
            Scheme::SemiImplicit => {
                let rhs: Vec<f64> = u.par_iter().map(|&v| v - dt * reaction(v) * inv_eps2).collect();
                match &mut self.fft {
                    Some(solver) => {
                        let out = solver.solve(&rhs);
                        u.copy_from_slice(&out);
                    }
                    None => {
                        let c = match self.ext {
                            Extension::Constant(c) => c,
                            _ => unreachable!("far-field grids hold a constant"),
                        };
                        cg_solve(&self.grid, dt, c, &rhs, u)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fused explicit update on a 2-D grid using a padded copy of `u`.
fn explicit_2d(u: &mut [f64], padded: &mut Vec<f64>, g: &Grid, ext: Extension, dt: f64, inv_eps2: f64) {
    let n = g.points();
    let m = n + 2;
    padded.resize(m * m, 0.0);
    for i in 0..n {
        let row = &u[i * n..(i + 1) * n];
        let dst = &mut padded[(i + 1) * m..(i + 2) * m];
        dst[1..=n].copy_from_slice(row);
        let (l, r) = match ext {
            Extension::Constant(c) => (c, c),
            Extension::Periodic => (row[n - 1], row[0]),
            Extension::Linear => (2.0 * row[0] - row[1], 2.0 * row[n - 1] - row[n - 2]),
        };
        dst[0] = l;
        dst[n + 1] = r;
    }
    let (top, rest) = padded.split_at_mut(m);
    let (mid, bottom) = rest.split_at_mut(n * m);
    for k in 0..m {
        let (a, b) = match ext {
            Extension::Constant(c) => (c, c),
            Extension::Periodic => (mid[(n - 1) * m + k], mid[k]),
            Extension::Linear => (2.0 * mid[k] - mid[m + k], 2.0 * mid[(n - 1) * m + k] - mid[(n - 2) * m + k]),
        };
        top[k] = a;
        bottom[k] = b;
    }
    let p: &[f64] = padded;
    let r = dt / (g.spacing() * g.spacing());
    u.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let up = &p[i * m..(i + 1) * m];
        let md = &p[(i + 1) * m..(i + 2) * m];
        let dn = &p[(i + 2) * m..(i + 3) * m];
        for j in 0..n {
            let c = md[j + 1];
            let lap = (up[j + 1] + dn[j + 1]) + (md[j] + md[j + 2]) - 4.0 * c;
            row[j] = c + (r * lap - dt * reaction(c) * inv_eps2);
        }
    });
}

/// Diagonalization of `I - dt Δ` with the periodic stencil.
struct FftSolver {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    denom: Vec<f64>,
}

impl FftSolver {
    fn new(grid: &Grid, dt: f64) -> Self {
        let n = grid.points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let h2 = grid.spacing() * grid.spacing();
        let sym: Vec<f64> = (0..n)
            .map(|k| 4.0 / h2 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
            .collect();
        let denom = (0..grid.len())
            .map(|idx| {
                let ix = grid.unravel(idx);
                1.0 + dt * (0..grid.dim()).map(|a| sym[ix[a]]).sum::<f64>()
            })
            .collect();
        Self { grid: *grid, forward, inverse, denom }
    }

    fn transform(&self, data: &mut [Complex<f64>], plan: &Arc<dyn Fft<f64>>) {
        let shape = self.grid.shape();
        let n = self.grid.points();
        for axis in 0..self.grid.dim() {
            let inner: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            let mut line = vec![Complex::new(0.0, 0.0); n];
            for o in 0..outer {
                for q in 0..inner {
                    let base = o * n * inner + q;
                    for k in 0..n {
                        line[k] = data[base + k * inner];
                    }
                    plan.process(&mut line);
                    for k in 0..n {
                        data[base + k * inner] = line[k];
                    }
                }
            }
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        for (z, d) in data.iter_mut().zip(&self.denom) {
            *z /= *d;
        }
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }
}

/// Conjugate gradients for `(I - dt Δ) x = rhs` with constant ghost value
/// `c`; the ghost contribution moves to the right-hand side. `x` holds the
/// initial guess and receives the solution.
fn cg_solve(g: &Grid, dt: f64, c: f64, rhs: &[f64], x: &mut [f64]) -> Result<()> {
    let len = g.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        laplacian_into(v, g, Extension::Constant(0.0), out);
        out.par_iter_mut().zip(v.par_iter()).for_each(|(o, &vi)| *o = vi - dt * *o);
    };
    // ghost nodes at c contribute dt * c / h² per missing neighbour
    let mut ghost = vec![0.0; len];
    let ones = vec![c; len];
    laplacian_into(&ones, g, Extension::Constant(c), &mut ghost);
    let mut lap_zero = vec![0.0; len];
    laplacian_into(&ones, g, Extension::Constant(0.0), &mut lap_zero);
    let b: Vec<f64> = (0..len).map(|i| rhs[i] + dt * (ghost[i] - lap_zero[i])).collect();

    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let n = g.points();
        let parts: Vec<f64> = a.par_chunks(n).zip(b.par_chunks(n)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
        parts.iter().sum()
    };
    let mut ax = vec![0.0; len];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let bnorm = dot(&b, &b).sqrt().max(1e-300);
    let mut ap = vec![0.0; len];
    for _ in 0..10 * len.max(100) {
        if rr.sqrt() <= 1e-10 * bnorm {
            return Ok(());
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(ap.par_iter()).for_each(|(ri, a)| *ri -= alpha * a);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.par_iter_mut().zip(r.par_iter()).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    Err(Error::InvalidParameter("conjugate gradients did not converge".into()))
}

/// One step of the scheme.
pub fn step(u: &ScalarField, p: &ACParams) -> Result<ScalarField> {
    let mut stepper = Stepper::new(*u.grid(), p.clone())?;
    let mut v = u.values().to_vec();
    stepper.advance(&mut v)?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { step: 1, time: u.time() + p.dt });
    }
    Ok(ScalarField::new(*u.grid(), v, u.time() + p.dt)?.with_extension(u.extension()))
}

/// Runs to `t_end`, collecting snapshots; `observe` sees the state after
/// every step (step index, time, values).
pub fn evolve_with(u0: &ScalarField, p: &ACParams, mut observe: impl FnMut(usize, f64, &[f64])) -> Result<ACSolution> {
    let g = *u0.grid();
    let mut stepper = Stepper::new(g, p.clone())?;
    let total = p.steps_to(p.t_end);
    let targets: Vec<usize> = p.snapshot_times.iter().map(|&t| p.steps_to(t)).collect();
    let mut snapshots = Vec::with_capacity(targets.len());
    let mut u = u0.values().to_vec();
    let mut next = 0;
    let capture = |step: usize, u: &[f64]| ScalarField::new(g, u.to_vec(), step as f64 * p.dt);
    while next < targets.len() && targets[next] == 0 {
        snapshots.push(capture(0, &u)?);
        next += 1;
    }
    for s in 1..=total {
        stepper.advance(&mut u)?;
        let time = s as f64 * p.dt;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { step: s, time });
        }
        observe(s, time, &u);
        while next < targets.len() && targets[next] == s {
            snapshots.push(capture(s, &u)?);
            next += 1;
        }
    }
    Ok(ACSolution { params: p.clone(), initial: u0.clone(), snapshots, steps: total })
}

pub fn evolve(u0: &ScalarField, p: &ACParams) -> Result<ACSolution> {
    evolve_with(u0, p, |_, _, _| {})
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub time: f64,
    pub max_abs_u: f64,
    pub max_grad: f64,
    pub grad_bound: f64,
    pub sup_ok: bool,
    pub grad_ok: bool,
}

/// Sup-norm and derivative bounds per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub sup_limit: f64,
    pub slack: f64,
    pub rows: Vec<BoundsRow>,
}

/// Slack factor on the derivative bound `1/√t + √t/ε²`.
pub const GRADIENT_SLACK: f64 = 3.0;

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.sup_ok && r.grad_ok)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !(r.sup_ok && r.grad_ok)).count()
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("# sup_limit={} slack={}\n", self.sup_limit, self.slack);
        s.push_str("time\tmax_abs_u\tmax_grad\tgrad_bound\tsup_ok\tgrad_ok\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.time, r.max_abs_u, r.max_grad, r.grad_bound, r.sup_ok, r.grad_ok
            );
        }
        s
    }
}

pub fn gradient_bound(t: f64, epsilon: f64) -> f64 {
    GRADIENT_SLACK * (1.0 / t.sqrt() + t.sqrt() / (epsilon * epsilon))
}

/// Checks `max|u| <= max(max|u0|, 1) + 1e-9` and
/// `max|∇u| <= 3 (1/√t + √t/ε²)` on every snapshot with `t > 0`.
pub fn verify_solution_bounds(sol: &ACSolution) -> BoundsReport {
    let sup_limit = sol.initial.max_abs().max(1.0) + 1e-9;
    let eps = sol.params.epsilon;
    let rows = sol
        .snapshots
        .iter()
        .filter(|s| s.time() > 0.0)
        .map(|s| {
            let max_abs_u = s.max_abs();
            let max_grad = gradient_norm_sq(s).max().sqrt();
            let grad_bound = gradient_bound(s.time(), eps);
            BoundsRow {
                time: s.time(),
                max_abs_u,
                max_grad,
                grad_bound,
                sup_ok: max_abs_u <= sup_limit,
                grad_ok: max_grad <= grad_bound,
            }
        })
        .collect();
    BoundsReport { sup_limit, slack: GRADIENT_SLACK, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{leaf_initial_data, signed_distance, ShapeSpec};

    fn far(points: usize) -> Grid {
        Grid::square(-1.0, 1.0, points, Boundary::FarField(-1.0)).unwrap()
    }

    #[test]
    fn potential_and_tension() {
        assert_eq!(potential(0.0), 0.5);
        assert_eq!(potential(1.0), 0.0);
        assert_eq!(reaction(1.0), 0.0);
        assert_eq!(reaction(-1.0), 0.0);
        // σ = ∫ √(2F) du by the trapezoid rule
        let m = 20000;
        let s: f64 = (0..=m)
            .map(|k| {
                let u = -1.0 + 2.0 * k as f64 / m as f64;
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                w * (2.0 * potential(u)).sqrt()
            })
            .sum::<f64>()
            * 2.0
            / m as f64;
        assert!((s - SURFACE_TENSION).abs() < 1e-8);
    }

    #[test]
    fn equilibria_are_fixed() {
        let g = far(32);
        let p = ACParams::explicit(&g, 0.25, 0.01, vec![]);
        let plus = ScalarField::constant(Grid::square(-1.0, 1.0, 32, Boundary::FarField(1.0)).unwrap(), 1.0);
        let p_plus = ACParams::explicit(plus.grid(), 0.25, 0.01, vec![]);
        assert!(step(&plus, &p_plus).unwrap().values().iter().all(|&v| v == 1.0));
        let zero = ScalarField::constant(Grid::square(-1.0, 1.0, 32, Boundary::Periodic).unwrap(), 0.0);
        assert!(step(&zero, &p).unwrap().values().iter().all(|&v| v == 0.0));
        let minus = ScalarField::constant(g, -1.0);
        let sol = evolve(&minus, &p).unwrap();
        assert!(sol.snapshots.iter().all(|s| s.values().iter().all(|&v| v == -1.0)));
    }

    #[test]
    fn dt_and_resolution_guards() {
        let g = far(64);
        let p = ACParams::explicit(&g, 0.2, 0.01, vec![]);
        let bad = p.clone().with_dt(p.dt * 1.01);
        assert!(matches!(bad.validate(&g), Err(Error::DtViolation { .. })));
        assert!(ACParams::explicit(&g, 0.05, 0.01, vec![]).validate(&g).is_err());
        assert!(ACParams::explicit(&g, 1.5, 0.01, vec![]).validate(&g).is_err());
        assert!(ACParams::explicit(&g, 0.2, 0.01, vec![0.02]).validate(&g).is_err());
        assert!(p.clone().with_scheme(Scheme::SemiImplicit).with_dt(10.0 * p.dt).validate(&g).is_ok());
    }

    #[test]
    fn snapshots_land_on_step_boundaries() {
        let g = far(32);
        let p = ACParams::explicit(&g, 0.25, 0.01, vec![0.0, 0.003, 0.01]);
        let sol = evolve(&ScalarField::constant(g, -1.0), &p).unwrap();
        assert_eq!(sol.snapshots.len(), 3);
        assert_eq!(sol.snapshots[0].time(), 0.0);
        for (s, &t) in sol.snapshots.iter().zip(&p.snapshot_times) {
            assert!((s.time() - t).abs() <= 0.5 * p.dt + 1e-15);
        }
    }

    #[test]
    fn semi_implicit_far_field_matches_explicit() {
        let g = far(64);
        let sdf = signed_distance(&ShapeSpec::Circle { center: [0.0, 0.0], radius: 0.4 }, &g).unwrap();
        let u0 = leaf_initial_data(&sdf, 0.0).unwrap();
        let pe = ACParams::explicit(&g, 0.15, 0.01, vec![0.01]);
        let pi = pe.clone().with_scheme(Scheme::SemiImplicit);
        let a = evolve(&u0, &pe).unwrap();
        let b = evolve(&u0, &pi).unwrap();
        let diff = a.snapshots[0].values().iter().zip(b.snapshots[0].values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 0.05, "{diff}");
    }

    #[test]
    fn semi_implicit_periodic_fft_solve() {
        // periodic mode: (I - dtΔ) applied to the solve output returns the rhs
        let g = Grid::square(0.0, 1.0, 32, Boundary::Periodic).unwrap();
        let rhs: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let solver = FftSolver::new(&g, 1e-3);
        let x = solver.solve(&rhs);
        let mut lap = vec![0.0; g.len()];
        laplacian_into(&x, &g, Extension::Periodic, &mut lap);
        for i in 0..g.len() {
            assert!((x[i] - 1e-3 * lap[i] - rhs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_solve_satisfies_system() {
        let g = far(32);
        let rhs: Vec<f64> = (0..g.len()).map(|i| ((i * 31) % 17) as f64 / 17.0 - 0.5).collect();
        let mut x = rhs.clone();
        cg_solve(&g, 1e-3, -1.0, &rhs, &mut x).unwrap();
        let mut lap = vec![0.0; g.len()];
        laplacian_into(&x, &g, Extension::Constant(-1.0), &mut lap);
        for i in 0..g.len() {
            assert!((x[i] - 1e-3 * lap[i] - rhs[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn tanh_gradient_within_bound() {
        let eps = 0.05;
        let g = far(256);
        // a disk of +1 phase, so the -1 ghosts match the far field
        let u = ScalarField::from_fn(g, eps * eps, |p| ((0.5 - p[0].hypot(p[1])) / eps).tanh());
        let p = ACParams::explicit(&g, eps, eps * eps, vec![]);
        let sol = ACSolution { params: p, initial: u.clone(), snapshots: vec![u], steps: 0 };
        let r = verify_solution_bounds(&sol);
        assert!(r.passed());
        assert!(r.rows[0].max_grad <= 1.01 / eps);
    }
}

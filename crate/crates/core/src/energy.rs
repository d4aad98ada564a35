//! Energy measure, discrepancy, energy time series and Gaussian density.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::ac::{potential, ACSolution, SURFACE_TENSION};
use crate::error::{Error, Result};
use crate::geometry::{contour_extract, fit_slope};
use crate::grid::{gradient_norm_sq, integrate, kahan_sum, ScalarField};

/// Snapshots required in `(0, ε²]` before a series is fitted.
pub const MIN_EARLY_SNAPSHOTS: usize = 4;

/// Relative tolerance on energy increase between snapshots.
pub const MONOTONE_TOLERANCE: f64 = 1e-8;

/// Slack allowed on `t E(t)²` relative to its value at `t = ε²`.
pub const ENVELOPE_SLACK: f64 = 4.0;

fn split_energy(u: &ScalarField, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let g2 = gradient_norm_sq(u);
    g2.values()
        .par_iter()
        .zip(u.values().par_iter())
        .map(|(&q, &v)| (0.5 * eps * q, potential(v) / eps))
        .unzip()
}

/// Energy density `ε|∇u|²/2 + F(u)/ε` and discrepancy `ε|∇u|²/2 - F(u)/ε`.
pub fn energy_and_discrepancy(u: &ScalarField, eps: f64) -> (ScalarField, ScalarField) {
    let (kin, pot) = split_energy(u, eps);
    let g = *u.grid();
    let e = kin.iter().zip(&pot).map(|(k, p)| k + p).collect();
    let xi = kin.iter().zip(&pot).map(|(k, p)| k - p).collect();
    (
        ScalarField::new(g, e, u.time()).expect("same grid"),
        ScalarField::new(g, xi, u.time()).expect("same grid"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub time: f64,
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
    /// `∫ max(ξ, 0)`.
    pub discrepancy_plus: f64,
}

/// Energies of one field.
pub fn energy_sample(u: &ScalarField, eps: f64) -> EnergySample {
    let (kin, pot) = split_energy(u, eps);
    let g = *u.grid();
    let vol = g.cell_volume();
    let n = g.points();
    let rows = g.len() / n;
    let row_sum = |f: &dyn Fn(usize) -> f64| {
        kahan_sum((0..rows).map(|r| kahan_sum((r * n..(r + 1) * n).map(f)))) * vol
    };
    let kinetic = row_sum(&|i| kin[i]);
    let potential = row_sum(&|i| pot[i]);
    let discrepancy_plus = row_sum(&|i| (kin[i] - pot[i]).max(0.0));
    EnergySample { time: u.time(), total: kinetic + potential, kinetic, potential, discrepancy_plus }
}

/// Least-squares fit `E ≈ A t^p` on `(t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub epsilon: f64,
    pub samples: Vec<EnergySample>,
    pub fit: ExponentFit,
    /// Largest `t E(t)²` over snapshots in `(0, ε²]`.
    pub scaled_max: f64,
    /// `t E(t)²` at the last snapshot not after `ε²`.
    pub scaled_at_end: f64,
    /// Consecutive snapshot pairs after `t_min` where `E` grew.
    pub monotone_violations: usize,
}

impl EnergyReport {
    pub fn monotone(&self) -> bool {
        self.monotone_violations == 0
    }

    /// `t E²` stays within a fixed factor of its late-time value,
    /// i.e. `E ≲ C/√t` with a run constant.
    pub fn envelope_bounded(&self) -> bool {
        self.scaled_max.is_finite() && self.scaled_max <= ENVELOPE_SLACK * self.scaled_at_end
    }

    pub fn exponent_within(&self, lo: f64, hi: f64) -> bool {
        (lo..=hi).contains(&self.fit.exponent)
    }

    /// The sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<&EnergySample> {
        self.samples.iter().min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("t\tE\tkinetic\tpotential\txi_plus\n");
        for r in &self.samples {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.time, r.total, r.kinetic, r.potential, r.discrepancy_plus);
        }
        s
    }

    pub fn fit_summary(&self) -> String {
        format!(
            "epsilon={}\nexponent={}\nprefactor={}\nt_min={}\nt_max={}\npoints={}\nscaled_max={}\nscaled_at_end={}\nmonotone_violations={}\n",
            self.epsilon,
            self.fit.exponent,
            self.fit.prefactor,
            self.fit.t_min,
            self.fit.t_max,
            self.fit.points,
            self.scaled_max,
            self.scaled_at_end,
            self.monotone_violations
        )
    }
}

/// Energy series over all snapshots with the early-time exponent fitted on
/// `(4 dt, ε²]`.
pub fn total_energy_series(sol: &ACSolution) -> Result<EnergyReport> {
    let eps = sol.params.epsilon;
    let t_end = sol.params.early_cutoff();
    let early = sol.snapshots.iter().filter(|s| s.time() > 0.0 && s.time() <= t_end).count();
    if early < MIN_EARLY_SNAPSHOTS {
        return Err(Error::NotEnoughSnapshots { found: early, required: MIN_EARLY_SNAPSHOTS });
    }
    let samples: Vec<EnergySample> = sol.snapshots.iter().map(|s| energy_sample(s, eps)).collect();

    let t_min = 4.0 * sol.params.dt;
    let window: Vec<&EnergySample> = samples.iter().filter(|s| s.time > t_min && s.time <= t_end).collect();
    if window.len() < 2 {
        return Err(Error::NotEnoughSnapshots { found: window.len(), required: 2 });
    }
    let xs: Vec<f64> = window.iter().map(|s| s.time.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|s| s.total.ln()).collect();
    let exponent = fit_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let fit = ExponentFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
        t_min,
        t_max: window.last().map_or(t_min, |s| s.time),
        points: window.len(),
    };

    let scaled: Vec<f64> = samples
        .iter()
        .filter(|s| s.time > 0.0 && s.time <= t_end)
        .map(|s| s.time * s.total * s.total)
        .collect();
    let scaled_max = scaled.iter().copied().fold(0.0, f64::max);
    let scaled_at_end = *scaled.last().expect("checked above");

    let late: Vec<&EnergySample> = samples.iter().filter(|s| s.time >= t_min).collect();
    let monotone_violations = late
        .windows(2)
        .filter(|w| w[1].total > w[0].total * (1.0 + MONOTONE_TOLERANCE))
        .count();

    Ok(EnergyReport { epsilon: eps, samples, fit, scaled_max, scaled_at_end, monotone_violations })
}

/// Energy over `σ` divided by the length of the zero level set.
pub fn interface_length_ratio(u: &ScalarField, eps: f64) -> Result<f64> {
    let contour = contour_extract(u, 0.0)?;
    if contour.is_empty() {
        return Err(Error::EmptyContour);
    }
    let (e, _) = energy_and_discrepancy(u, eps);
    Ok(integrate(&e) / SURFACE_TENSION / contour.length())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProbe {
    pub point: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
    /// Time of the snapshot actually used, nearest to `t0 - r²`.
    pub snapshot_time: f64,
    pub value: f64,
}

/// `(1/σ) ∫ ρ e` with the backward kernel
/// `ρ(x) = (4πr²)^{-n/2} exp(-|x - x0|² / 4r²)`, `n = dim - 1`.
pub fn gaussian_density_field(u: &ScalarField, x0: &[f64], r: f64, eps: f64) -> Result<f64> {
    let g = *u.grid();
    if x0.len() != g.dim() {
        return Err(Error::InvalidParameter(format!("point has {} coordinates, grid has dimension {}", x0.len(), g.dim())));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let (e, _) = energy_and_discrepancy(u, eps);
    let n = (g.dim() - 1) as i32;
    let norm = (4.0 * std::f64::consts::PI * r * r).powf(-0.5 * n as f64);
    let inv = 1.0 / (4.0 * r * r);
    let weighted: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let p = g.position(i);
            let d2: f64 = (0..g.dim()).map(|a| (p[a] - x0[a]).powi(2)).sum();
            norm * (-d2 * inv).exp() * e.values()[i]
        })
        .collect();
    let w = ScalarField::new(g, weighted, u.time())?;
    Ok(integrate(&w) / SURFACE_TENSION)
}

/// Gaussian density at `(x0, t0)` and scale `r`, read from the snapshot
/// nearest to `t0 - r²`.
pub fn gaussian_density(sol: &ACSolution, x0: &[f64], t0: f64, r: f64) -> Result<DensityProbe> {
    if r * r >= t0 {
        return Err(Error::InvalidParameter(format!("r² = {} must be below t0 = {t0}", r * r)));
    }
    let snap = sol.nearest(t0 - r * r).ok_or(Error::EmptyInput)?;
    let value = gaussian_density_field(snap, x0, r, sol.params.epsilon)?;
    Ok(DensityProbe { point: x0.to_vec(), t0, radius: r, snapshot_time: snap.time(), value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ac::{evolve, ACParams};
    use crate::geometry::{leaf_initial_data, signed_distance, ShapeSpec};
    use crate::grid::{Boundary, Grid};

    fn grid(points: usize) -> Grid {
        Grid::square(-1.0, 1.0, points, Boundary::FarField(-1.0)).unwrap()
    }

    #[test]
    fn constants_have_no_energy() {
        let g = Grid::square(-1.0, 1.0, 32, Boundary::Periodic).unwrap();
        for c in [-1.0, 1.0] {
            let (e, xi) = energy_and_discrepancy(&ScalarField::constant(g, c), 0.1);
            assert_eq!(e.max_abs(), 0.0);
            assert_eq!(xi.max_abs(), 0.0);
        }
        let (e, _) = energy_and_discrepancy(&ScalarField::constant(g, 0.0), 0.1);
        assert!(e.values().iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn tanh_profile_is_equipartitioned() {
        let eps = 0.05;
        let g = grid(320);
        let u = ScalarField::from_fn(g, 0.0, |p| (p[0] / eps).tanh()).with_extension(crate::Extension::Linear);
        let (e, xi) = energy_and_discrepancy(&u, eps);
        assert!(xi.max_abs() <= 1e-2 / eps, "{}", xi.max_abs());
        assert!((integrate(&e) / SURFACE_TENSION / 2.0 - 1.0).abs() < 1e-2);
        assert!(e.values().iter().zip(xi.values()).all(|(a, b)| *a >= b.abs()));
    }

    #[test]
    fn series_needs_early_snapshots() {
        let g = grid(32);
        let u = ScalarField::constant(g, 1.0);
        let p = ACParams::explicit(&g, 0.25, 0.01, vec![0.01]);
        let sol = evolve(&u, &p).unwrap();
        assert!(matches!(total_energy_series(&sol), Err(Error::NotEnoughSnapshots { found: 1, .. })));
    }

    #[test]
    fn standing_line_keeps_its_energy() {
        let eps = 0.05;
        let g = Grid::square(-1.0, 1.0, 256, Boundary::Periodic).unwrap();
        // two walls so the periodic box stays consistent
        let u0 = ScalarField::from_fn(g, 0.0, |p| ((0.5 - p[0].abs()) / eps).tanh());
        let snaps: Vec<f64> = (1..=8).map(|k| eps * eps * k as f64 / 8.0).collect();
        let p = ACParams::explicit(&g, eps, eps * eps, snaps);
        let sol = evolve(&u0, &p).unwrap();
        let rep = total_energy_series(&sol).unwrap();
        let e0 = energy_sample(&u0, eps).total;
        for s in &rep.samples {
            assert!((s.total / e0 - 1.0).abs() < 1e-2, "{} vs {e0}", s.total);
        }
        assert!(rep.monotone());
    }

    #[test]
    fn density_of_lines() {
        let eps = 0.01;
        let g = grid(512);
        let r = 0.1;
        let line = ScalarField::from_fn(g, 0.0, |p| (p[1] / eps).tanh()).with_extension(crate::Extension::Linear);
        let theta = gaussian_density_field(&line, &[0.0, 0.0], r, eps).unwrap();
        assert!((theta - 1.0).abs() < 0.05, "{theta}");
        let shifted = ScalarField::from_fn(g, 0.0, |p| ((p[1] - 0.5) / eps).tanh()).with_extension(crate::Extension::Linear);
        let far = gaussian_density_field(&shifted, &[0.0, 0.5 - 10.0 * r], r, eps).unwrap();
        assert!(far < 0.01, "{far}");
        let cross = ScalarField::from_fn(g, 0.0, |p| (p[0] / eps).tanh() * (p[1] / eps).tanh()).with_extension(crate::Extension::Linear);
        let theta2 = gaussian_density_field(&cross, &[0.0, 0.0], r, eps).unwrap();
        assert!((theta2 - 2.0).abs() < 0.14, "{theta2}");
    }

    #[test]
    fn density_rejects_large_scale() {
        let g = grid(32);
        let u = ScalarField::constant(g, -1.0);
        let p = ACParams::explicit(&g, 0.25, 0.01, vec![0.005]);
        let sol = evolve(&u, &p).unwrap();
        assert!(gaussian_density(&sol, &[0.0, 0.0], 0.01, 0.1).is_err());
        let probe = gaussian_density(&sol, &[0.0, 0.0], 0.01, 0.05).unwrap();
        assert_eq!(probe.value, 0.0);
        assert!((probe.snapshot_time - 0.005).abs() < 1e-3);
    }

    #[test]
    fn circle_ratio_near_one() {
        let eps = 0.04;
        let g = grid(256);
        let sdf = signed_distance(&ShapeSpec::Circle { center: [0.0, 0.0], radius: 0.5 }, &g).unwrap();
        let u0 = leaf_initial_data(&sdf, 0.0).unwrap();
        let p = ACParams::explicit(&g, eps, 2.0 * eps * eps, vec![2.0 * eps * eps]);
        let sol = evolve(&u0, &p).unwrap();
        let ratio = interface_length_ratio(&sol.snapshots[0], eps).unwrap();
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
        assert!(matches!(interface_length_ratio(&ScalarField::constant(g, 1.0), eps), Err(Error::EmptyContour)));
    }

    #[test]
    fn doubled_layer_counts_twice_per_component() {
        let eps = 0.02;
        let g = Grid::square(-1.0, 1.0, 512, Boundary::Periodic).unwrap();
        let u = ScalarField::from_fn(g, 0.0, |p| ((0.3 - p[0].abs()) / eps).tanh());
        let ratio = interface_length_ratio(&u, eps).unwrap();
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        let c = contour_extract(&u, 0.0).unwrap();
        assert_eq!(c.components(), 2);
        let (e, _) = energy_and_discrepancy(&u, eps);
        let per_component = integrate(&e) / SURFACE_TENSION / c.polylines[0].length();
        assert!((per_component - 2.0).abs() < 0.04, "{per_component}");
    }
}

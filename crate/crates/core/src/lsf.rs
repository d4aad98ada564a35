//! Reference level-set flow: every level set of `Φ` moves by mean
//! curvature, `Φ_t = ΔΦ - ∇Φ·D²Φ ∇Φ / (|∇Φ|² + β)`.
//!
//! Two discretizations. The planar default replaces `Φ` at each node by the
//! median of its bilinear interpolant on a circle of radius `ρ`, which
//! advances the flow by `ρ²/2` per step. Median and positive-weight
//! interpolation are both monotone, so ordered data stay ordered exactly.
//! The central-difference scheme is kept for comparison and for 3-D; its
//! mixed difference is not monotone.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{contour_extract, Contour, SignedDistanceField};
use crate::grid::{gradient_norm_sq, pad, sample, Extension, Grid, ScalarField};

pub const DEFAULT_BETA: f64 = 1e-6;

/// Largest median-circle radius, in cells.
pub const MEDIAN_RADIUS_CELLS: f64 = 3.0;

/// Sample directions on the median circle. A multiple of 8 keeps the set
/// closed under the axis and diagonal reflections.
pub const MEDIAN_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsfScheme {
    Median,
    Central,
}

impl LsfScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "median" => Some(Self::Median),
            "central" => Some(Self::Central),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Median => "median",
            Self::Central => "central",
        }
    }

    /// Median in the plane, central otherwise.
    pub fn default_for(grid: &Grid) -> Self {
        if grid.dim() == 2 {
            Self::Median
        } else {
            Self::Central
        }
    }
}

/// `h² / (8 dim)`.
pub fn lsf_dt(grid: &Grid) -> f64 {
    let h = grid.spacing();
    h * h / (8.0 * grid.dim() as f64)
}

#[derive(Debug, Clone)]
pub struct LSFSolution {
    pub scheme: LsfScheme,
    pub beta: f64,
    pub dt: f64,
    /// Median circle radius; zero for the central scheme.
    pub radius: f64,
    pub initial: ScalarField,
    pub snapshots: Vec<ScalarField>,
}

impl LSFSolution {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(ScalarField::time).collect()
    }

    pub fn nearest(&self, t: f64) -> Option<&ScalarField> {
        self.snapshots.iter().min_by(|a, b| (a.time() - t).abs().total_cmp(&(b.time() - t).abs()))
    }

    /// Levels closer than this are not told apart at a kink: the median
    /// fills any gap narrower than `√2 ρ`, so a fattened region sits on a
    /// plateau up to `ρ/√2` away from zero.
    pub fn level_resolution(&self) -> f64 {
        self.radius / std::f64::consts::SQRT_2
    }

    /// Smallest fattening band that sees such a plateau.
    pub fn default_band(&self) -> f64 {
        self.initial.grid().spacing() + self.level_resolution()
    }

    /// `max|Φ(t)| - max|Φ(0)|` over snapshots; non-positive for a
    /// non-expanding flow.
    pub fn sup_growth(&self) -> f64 {
        let m0 = self.initial.max_abs();
        self.snapshots.iter().map(|s| s.max_abs() - m0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean `|∇Φ|` over nodes with `|Φ| < band` at snapshot `k`.
    pub fn band_gradient_mean(&self, k: usize, band: f64) -> Option<f64> {
        let s = &self.snapshots[k];
        let g2 = gradient_norm_sq(s);
        let picked: Vec<f64> = s
            .values()
            .iter()
            .zip(g2.values())
            .filter(|(v, _)| v.abs() < band)
            .map(|(_, q)| q.sqrt())
            .collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

fn ghost(ext: Extension, first: f64, second: f64, wrap: f64) -> f64 {
    match ext {
        Extension::Constant(c) => c,
        Extension::Periodic => wrap,
        Extension::Linear => 2.0 * first - second,
    }
}

/// Planar step on a reusable padded buffer.
fn lsf_step_2d(phi: &mut [f64], padded: &mut Vec<f64>, g: &Grid, ext: Extension, dt: f64, beta: f64) {
    let n = g.points();
    let m = n + 2;
    padded.resize(m * m, 0.0);
    for i in 0..n {
        let row = &phi[i * n..(i + 1) * n];
        let dst = &mut padded[(i + 1) * m..(i + 2) * m];
        dst[1..=n].copy_from_slice(row);
        dst[0] = ghost(ext, row[0], row[1], row[n - 1]);
        dst[n + 1] = ghost(ext, row[n - 1], row[n - 2], row[0]);
    }
    for k in 0..m {
        padded[k] = ghost(ext, padded[m + k], padded[2 * m + k], padded[n * m + k]);
        padded[(n + 1) * m + k] = ghost(ext, padded[n * m + k], padded[(n - 1) * m + k], padded[m + k]);
    }
    let p: &[f64] = padded;
    let h = g.spacing();
    let inv_2h = 0.5 / h;
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    phi.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let up = &p[i * m..(i + 1) * m];
        let md = &p[(i + 1) * m..(i + 2) * m];
        let dn = &p[(i + 2) * m..(i + 3) * m];
        for j in 0..n {
            let c = md[j + 1];
            let (n_, s_, w, e) = (up[j + 1], dn[j + 1], md[j], md[j + 2]);
            let (nw, ne, sw, se) = (up[j], up[j + 2], dn[j], dn[j + 2]);
            let px = (s_ - n_) * inv_2h;
            let py = (e - w) * inv_2h;
            let pxx = ((s_ + n_) - 2.0 * c) * inv_h2;
            let pyy = ((e + w) - 2.0 * c) * inv_h2;
            let pxy = ((se + nw) - (sw + ne)) * inv_4h2;
            let norm2 = px * px + py * py;
            let rate = (pxx + pyy) - (px * px * pxx + 2.0 * px * py * pxy + py * py * pyy) / (norm2 + beta);
            let lo = c.min(n_).min(s_).min(w).min(e).min(nw).min(ne).min(sw).min(se);
            let hi = c.max(n_).max(s_).max(w).max(e).max(nw).max(ne).max(sw).max(se);
            row[j] = (c + dt * rate).clamp(lo, hi);
        }
    });
}

fn lsf_step(phi: &mut [f64], g: &Grid, ext: Extension, dt: f64, beta: f64) {
    let dim = g.dim();
    let h = g.spacing();
    let (p, ps) = pad(phi, g.shape(), dim, 1, ext);
    let strides = [ps[1] * ps[2], ps[2], 1];
    let inv_2h = 0.5 / h;
    let inv_h2 = 1.0 / (h * h);
    let inv_4h2 = 0.25 * inv_h2;
    let offsets: Vec<isize> = (0..3usize.pow(dim as u32))
        .map(|k| (0..dim).map(|a| ((k / 3usize.pow(a as u32)) % 3) as isize - 1).zip(&strides).map(|(d, &s)| d * s as isize).sum())
        .filter(|&o| o != 0)
        .collect();
    phi.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let ix = g.unravel(idx);
        let c: usize = (0..dim).map(|a| (ix[a] + 1) * strides[a]).sum();
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for a in 0..dim {
            let sa = strides[a];
            grad[a] = (p[c + sa] - p[c - sa]) * inv_2h;
            hess[a][a] = ((p[c + sa] + p[c - sa]) - 2.0 * p[c]) * inv_h2;
            for b in a + 1..dim {
                let sb = strides[b];
                let v = ((p[c + sa + sb] + p[c - sa - sb]) - (p[c + sa - sb] + p[c - sa + sb])) * inv_4h2;
                hess[a][b] = v;
                hess[b][a] = v;
            }
        }
        let mut lap = 0.0;
        let mut quad = 0.0;
        let mut norm2 = 0.0;
        for a in 0..dim {
            lap += hess[a][a];
            norm2 += grad[a] * grad[a];
            for b in 0..dim {
                quad += grad[a] * hess[a][b] * grad[b];
            }
        }
        // the mixed difference is not monotone; clipping to the stencil's
        // range restores the discrete maximum principle near kinks
        let (mut lo, mut hi) = (p[c], p[c]);
        for &o in &offsets {
            lo = lo.min(p[(c as isize + o) as usize]);
            hi = hi.max(p[(c as isize + o) as usize]);
        }
        *out = (p[c] + dt * (lap - quad / (norm2 + beta))).clamp(lo, hi);
    });
}

/// Bilinear taps of one sample direction: four padded-buffer offsets and
/// their weights.
#[derive(Debug, Clone, Copy)]
struct Tap {
    offsets: [isize; 4],
    weights: [f64; 4],
}

#[derive(Debug, Clone)]
struct MedianStencil {
    pad: usize,
    taps: Vec<Tap>,
}

impl MedianStencil {
    /// `radius` in cells; `m` is the padded row length.
    fn new(radius: f64, m: usize) -> Self {
        let pad = radius.ceil() as usize + 1;
        let taps = (0..MEDIAN_DIRECTIONS)
            .map(|k| {
                let th = (k as f64 + 0.5) * std::f64::consts::TAU / MEDIAN_DIRECTIONS as f64;
                let (di, dj) = (radius * th.cos(), radius * th.sin());
                let (i0, j0) = (di.floor(), dj.floor());
                let (fi, fj) = (di - i0, dj - j0);
                let (i0, j0) = (i0 as isize, j0 as isize);
                let at = |a: isize, b: isize| a * m as isize + b;
                Tap {
                    offsets: [at(i0, j0), at(i0, j0 + 1), at(i0 + 1, j0), at(i0 + 1, j0 + 1)],
                    weights: [(1.0 - fi) * (1.0 - fj), (1.0 - fi) * fj, fi * (1.0 - fj), fi * fj],
                }
            })
            .collect();
        Self { pad, taps }
    }
}

/// Ghost value `w` cells outside along one axis. Linear fields are padded
/// by replication here: a reflected linear ghost is not monotone in the
/// interior values.
fn median_ghost(ext: Extension, line: &[f64], idx: isize) -> f64 {
    let n = line.len() as isize;
    match ext {
        Extension::Constant(c) if idx < 0 || idx >= n => c,
        Extension::Periodic => line[idx.rem_euclid(n) as usize],
        _ => line[idx.clamp(0, n - 1) as usize],
    }
}

fn median_step_2d(phi: &mut [f64], padded: &mut Vec<f64>, g: &Grid, ext: Extension, st: &MedianStencil) {
    let n = g.points();
    let w = st.pad;
    let m = n + 2 * w;
    padded.resize(m * m, 0.0);
    for i in 0..m {
        let si = i as isize - w as isize;
        let row_src: Vec<f64> = if (0..n as isize).contains(&si) {
            phi[si as usize * n..(si as usize + 1) * n].to_vec()
        } else {
            // resolve the row index first, then the column
            match ext {
                Extension::Constant(c) => vec![c; n],
                _ => {
                    let r = match ext {
                        Extension::Periodic => si.rem_euclid(n as isize),
                        _ => si.clamp(0, n as isize - 1),
                    } as usize;
                    phi[r * n..(r + 1) * n].to_vec()
                }
            }
        };
        let dst = &mut padded[i * m..(i + 1) * m];
        for (j, d) in dst.iter_mut().enumerate() {
            *d = median_ghost(ext, &row_src, j as isize - w as isize);
        }
    }
    let p: &[f64] = padded;
    let half = MEDIAN_DIRECTIONS / 2;
    phi.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut vals = [0.0f64; MEDIAN_DIRECTIONS];
        for (j, out) in row.iter_mut().enumerate() {
            let c = ((i + w) * m + j + w) as isize;
            for (v, tap) in vals.iter_mut().zip(&st.taps) {
                let o = &tap.offsets;
                let q = &tap.weights;
                *v = (q[0] * p[(c + o[0]) as usize] + q[1] * p[(c + o[1]) as usize])
                    + (q[2] * p[(c + o[2]) as usize] + q[3] * p[(c + o[3]) as usize]);
            }
            let (lower, upper, _) = vals.select_nth_unstable_by(half, f64::total_cmp);
            let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            *out = 0.5 * (below + *upper);
        }
    });
}

/// Step and circle radius for the median scheme: the largest radius up to
/// `MEDIAN_RADIUS_CELLS` that lands exactly on `t_end`.
pub fn median_dt(grid: &Grid, t_end: f64) -> (f64, f64) {
    let h = grid.spacing();
    let rho_max = MEDIAN_RADIUS_CELLS * h;
    let dt_max = 0.5 * rho_max * rho_max;
    if t_end <= 0.0 {
        return (dt_max, MEDIAN_RADIUS_CELLS);
    }
    let steps = (t_end / dt_max).ceil().max(1.0);
    let dt = t_end / steps;
    (dt, (2.0 * dt).sqrt() / h)
}

/// Evolves `Φ₀ = d` (linear ghosts) with the default scheme.
pub fn lsf_evolve(sdf: &SignedDistanceField, t_end: f64, snapshot_times: &[f64], beta: f64) -> Result<LSFSolution> {
    lsf_evolve_field(&sdf.field().clone().with_extension(Extension::Linear), t_end, snapshot_times, beta)
}

pub fn lsf_evolve_field(phi0: &ScalarField, t_end: f64, snapshot_times: &[f64], beta: f64) -> Result<LSFSolution> {
    lsf_evolve_with(phi0, t_end, snapshot_times, beta, LsfScheme::default_for(phi0.grid()))
}

pub fn lsf_evolve_with(phi0: &ScalarField, t_end: f64, snapshot_times: &[f64], beta: f64, scheme: LsfScheme) -> Result<LSFSolution> {
    if !(1e-8..=1e-4).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta = {beta} outside [1e-8, 1e-4]")));
    }
    if snapshot_times.iter().any(|&t| t < 0.0 || t > t_end * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter("snapshot times must lie in [0, t_end]".into()));
    }
    let g = *phi0.grid();
    let ext = phi0.extension();
    if scheme == LsfScheme::Median && g.dim() != 2 {
        return Err(Error::Unsupported("the median scheme is planar".into()));
    }
    let (dt, radius, stencil) = match scheme {
        LsfScheme::Central => (lsf_dt(&g), 0.0, None),
        LsfScheme::Median => {
            let (dt, r) = median_dt(&g, t_end);
            (dt, r * g.spacing(), Some(MedianStencil::new(r, g.points() + 2 * (r.ceil() as usize + 1))))
        }
    };
    let steps = (t_end / dt).round() as usize;
    let mut targets: Vec<(usize, usize)> =
        snapshot_times.iter().enumerate().map(|(k, &t)| ((t / dt).round() as usize, k)).collect();
    targets.sort();
    let mut snaps: Vec<Option<ScalarField>> = vec![None; snapshot_times.len()];
    let mut phi = phi0.values().to_vec();
    let mut next = 0;
    let mut padded = Vec::new();
    let capture = |s: usize, phi: &[f64]| ScalarField::new(g, phi.to_vec(), s as f64 * dt).map(|f| f.with_extension(ext));
    for s in 0..=steps {
        if s > 0 {
            match (&stencil, g.dim()) {
                (Some(st), _) => median_step_2d(&mut phi, &mut padded, &g, ext, st),
                (None, 2) => lsf_step_2d(&mut phi, &mut padded, &g, ext, dt, beta),
                (None, _) => lsf_step(&mut phi, &g, ext, dt, beta),
            }
            if !phi.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { step: s, time: s as f64 * dt });
            }
        }
        while next < targets.len() && targets[next].0 == s {
            snaps[targets[next].1] = Some(capture(s, &phi)?);
            next += 1;
        }
    }
    Ok(LSFSolution {
        scheme,
        beta,
        dt,
        radius,
        initial: phi0.clone(),
        snapshots: snaps.into_iter().map(|s| s.expect("every target reached")).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatteningReport {
    pub time: f64,
    pub band: f64,
    /// Area of `{|Φ| < band}`.
    pub area_band: f64,
    /// Area of `{|Φ| < 2 band}`.
    pub area_double: f64,
    /// `2 A(band) - A(2 band)`: cancels the part of the tube that grows
    /// linearly with the band and leaves the area where `Φ` is flat at 0.
    pub excess: f64,
    pub perimeter: f64,
    /// `excess > 4 h · perimeter`.
    pub fattened: bool,
}

/// Band-excess fattening indicator at the snapshot nearest to `t`.
pub fn fattening_measure(sol: &LSFSolution, t: f64, band: f64) -> Result<FatteningReport> {
    let snap = sol.nearest(t).ok_or(Error::EmptyInput)?;
    let g = *snap.grid();
    let h = g.spacing();
    if band < h * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("band {band} must be at least h = {h}")));
    }
    let vol = g.cell_volume();
    let count = |b: f64| snap.values().iter().filter(|v| v.abs() < b).count() as f64 * vol;
    let area_band = count(band);
    let area_double = count(2.0 * band);
    let excess = 2.0 * area_band - area_double;
    let perimeter = if g.dim() == 2 { contour_extract(snap, 0.0)?.length() } else { 0.0 };
    Ok(FatteningReport {
        time: snap.time(),
        band,
        area_band,
        area_double,
        excess,
        perimeter,
        fattened: excess > 4.0 * h * perimeter,
    })
}

/// First snapshot time flagged as fattened.
pub fn fattening_time(sol: &LSFSolution, band: f64) -> Result<Option<f64>> {
    for s in &sol.snapshots {
        if fattening_measure(sol, s.time(), band)?.fattened {
            return Ok(Some(s.time()));
        }
    }
    Ok(None)
}

/// Level-set runs from the leaves `{d = -δ}` (inner, larger region) and
/// `{d = +δ}` (outer, smaller region).
#[derive(Debug, Clone)]
pub struct EnvelopePair {
    pub delta: f64,
    pub times: Vec<f64>,
    pub inner: Vec<ScalarField>,
    pub outer: Vec<ScalarField>,
    pub inner_contours: Vec<Contour>,
    pub outer_contours: Vec<Contour>,
}

impl EnvelopePair {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    /// Largest distance from a point of the outer contour lying outside
    /// the inner region to the inner contour.
    pub fn containment_excess(&self, k: usize) -> Result<f64> {
        region_excess(&self.outer_contours[k], &self.inner[k], &self.inner_contours[k], false)
    }
}

/// Largest distance to `boundary` over the points of `c` on the wrong side
/// of `phi`: outside `{phi > 0}` when `inside` is false, inside it when true.
fn region_excess(c: &Contour, phi: &ScalarField, boundary: &Contour, inside: bool) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in c.sample_points() {
        let v = sample(phi, &p)?;
        let wrong = if inside { v > 0.0 } else { v < 0.0 };
        if wrong {
            let d = if boundary.is_empty() { f64::INFINITY } else { boundary.distance_to(p) };
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

pub fn inner_outer_envelopes(sdf: &SignedDistanceField, delta: f64, t_list: &[f64], beta: f64) -> Result<EnvelopePair> {
    inner_outer_envelopes_with(sdf, delta, t_list, beta, LsfScheme::default_for(sdf.grid()))
}

pub fn inner_outer_envelopes_with(
    sdf: &SignedDistanceField,
    delta: f64,
    t_list: &[f64],
    beta: f64,
    scheme: LsfScheme,
) -> Result<EnvelopePair> {
    if !(delta >= 0.0 && delta < sdf.d_max()) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in [0, {})", sdf.d_max())));
    }
    let t_end = t_list.iter().copied().fold(0.0, f64::max);
    let base = sdf.field().clone().with_extension(Extension::Linear);
    let (inner, outer) = rayon::join(
        || lsf_evolve_with(&base.map(|d| d + delta), t_end, t_list, beta, scheme),
        || lsf_evolve_with(&base.map(|d| d - delta), t_end, t_list, beta, scheme),
    );
    let (inner, outer) = (inner?, outer?);
    let contours = |sol: &LSFSolution| sol.snapshots.iter().map(|s| contour_extract(s, 0.0)).collect::<Result<Vec<_>>>();
    Ok(EnvelopePair {
        delta,
        times: inner.times(),
        inner_contours: contours(&inner)?,
        outer_contours: contours(&outer)?,
        inner: inner.snapshots,
        outer: outer.snapshots,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichRow {
    pub epsilon: f64,
    pub time: f64,
    /// Worst distance outside the inner region.
    pub inner_excess: f64,
    /// Worst distance inside the outer region.
    pub outer_excess: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("epsilon\ttime\tinner_excess\touter_excess\ttolerance\tpassed\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", r.epsilon, r.time, r.inner_excess, r.outer_excess, r.tolerance, r.passed);
        }
        s
    }
}

/// A nodal contour with its time and ε, as produced by a shooting study.
pub struct NodalSet<'a> {
    pub epsilon: f64,
    pub contour: &'a Contour,
}

/// Each nodal contour must lie in the inner region and outside the outer
/// region, up to `2h`.
pub fn sandwich_check(nodal: &[NodalSet<'_>], env: &EnvelopePair) -> Result<SandwichReport> {
    let mut rows = Vec::new();
    for n in nodal {
        let t = n.contour.time;
        let k = env
            .index_of(t)
            .ok_or_else(|| Error::InvalidParameter(format!("no envelope snapshot at t = {t}")))?;
        let h = env.inner[k].grid().spacing();
        let inner_excess = region_excess(n.contour, &env.inner[k], &env.inner_contours[k], false)?;
        let outer_excess = region_excess(n.contour, &env.outer[k], &env.outer_contours[k], true)?;
        let tolerance = 2.0 * h;
        rows.push(SandwichRow {
            epsilon: n.epsilon,
            time: t,
            inner_excess,
            outer_excess,
            tolerance,
            passed: !n.contour.is_empty() && inner_excess <= tolerance && outer_excess <= tolerance,
        });
    }
    Ok(SandwichReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{signed_distance, ShapeSpec};
    use crate::grid::Boundary;

    fn circle(points: usize, r: f64) -> SignedDistanceField {
        let g = Grid::square(-1.0, 1.0, points, Boundary::FarField(-1.0)).unwrap();
        signed_distance(&ShapeSpec::Circle { center: [0.0, 0.0], radius: r }, &g).unwrap()
    }

    fn mean_radius(c: &Contour) -> f64 {
        let pts = c.sample_points();
        pts.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / pts.len() as f64
    }

    #[test]
    fn circle_follows_radius_law() {
        let sdf = circle(128, 0.4);
        let h = sdf.grid().spacing();
        let sol = lsf_evolve(&sdf, 0.04, &[0.04], DEFAULT_BETA).unwrap();
        let c = contour_extract(&sol.snapshots[0], 0.0).unwrap();
        let want = (0.16f64 - 0.08).sqrt();
        for p in c.sample_points() {
            assert!((p[0].hypot(p[1]) - want).abs() <= 3.0 * h, "{p:?}");
        }
        assert!(sol.sup_growth() <= 1e-12, "{}", sol.sup_growth());
        let m = sol.band_gradient_mean(0, 2.0 * h).unwrap();
        assert!((0.5..=2.0).contains(&m), "{m}");
    }

    #[test]
    fn circle_disappears() {
        let sdf = circle(64, 0.4);
        let h = sdf.grid().spacing();
        let sol = lsf_evolve(&sdf, 0.09, &[0.09], DEFAULT_BETA).unwrap();
        assert!(sol.snapshots[0].max() < 0.0);
        assert!(contour_extract(&sol.snapshots[0], 0.0).unwrap().is_empty());
        let f = fattening_measure(&sol, 0.09, h).unwrap();
        assert!(!f.fattened);
    }

    #[test]
    fn line_is_stationary() {
        let g = Grid::square(-1.0, 1.0, 64, Boundary::FarField(-1.0)).unwrap();
        let phi = ScalarField::from_fn(g, 0.0, |p| 0.3 * p[0] - 0.4 * p[1] + 0.1).with_extension(Extension::Linear);
        let mut v = phi.values().to_vec();
        lsf_step(&mut v, &g, Extension::Linear, lsf_dt(&g), DEFAULT_BETA);
        let worst = v.iter().zip(phi.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst}");
        // replicated ghosts bend the line within the circle radius of the edge
        let (_, r) = median_dt(&g, 1.0);
        let st = MedianStencil::new(r, 64 + 2 * st_pad(r));
        let mut v = phi.values().to_vec();
        median_step_2d(&mut v, &mut Vec::new(), &g, Extension::Linear, &st);
        for (idx, (a, b)) in v.iter().zip(phi.values()).enumerate() {
            if g.depth(idx) >= st.pad {
                assert!((a - b).abs() <= 1e-8, "{idx}: {a} {b}");
            }
        }
    }

    fn st_pad(r: f64) -> usize {
        r.ceil() as usize + 1
    }

    #[test]
    fn median_scheme_keeps_order_exactly() {
        let g = Grid::square(-1.0, 1.0, 64, Boundary::FarField(-1.0)).unwrap();
        let a = crate::geometry::signed_distance_with_clamp(&ShapeSpec::Circle { center: [0.02, 0.0], radius: 0.25 }, &g, 0.2).unwrap();
        let b = crate::geometry::signed_distance_with_clamp(&ShapeSpec::Circle { center: [0.0, 0.0], radius: 0.3 }, &g, 0.2).unwrap();
        let sa = lsf_evolve(&a, 0.01, &[0.005, 0.01], DEFAULT_BETA).unwrap();
        let sb = lsf_evolve(&b, 0.01, &[0.005, 0.01], DEFAULT_BETA).unwrap();
        assert_eq!(sa.scheme, LsfScheme::Median);
        for (x, y) in sa.snapshots.iter().zip(&sb.snapshots) {
            assert!(x.values().iter().zip(y.values()).all(|(p, q)| p <= q));
        }
        assert!(sa.sup_growth() <= 0.0);
    }

    #[test]
    fn central_scheme_follows_radius_law() {
        let sdf = circle(128, 0.4);
        let h = sdf.grid().spacing();
        let phi = sdf.field().clone().with_extension(Extension::Linear);
        let sol = lsf_evolve_with(&phi, 0.04, &[0.04], DEFAULT_BETA, LsfScheme::Central).unwrap();
        let c = contour_extract(&sol.snapshots[0], 0.0).unwrap();
        let want = (0.16f64 - 0.08).sqrt();
        for p in c.sample_points() {
            assert!((p[0].hypot(p[1]) - want).abs() <= 3.0 * h, "{p:?}");
        }
    }

    #[test]
    fn median_step_lands_on_t_end() {
        let g = Grid::square(-1.0, 1.0, 100, Boundary::FarField(-1.0)).unwrap();
        let (dt, r) = median_dt(&g, 0.01);
        assert!(r <= MEDIAN_RADIUS_CELLS + 1e-12);
        assert!(((0.01 / dt).round() * dt - 0.01).abs() < 1e-15);
        assert!((0.5 * (r * g.spacing()).powi(2) - dt).abs() < 1e-15);
    }

    #[test]
    fn circle_does_not_fatten() {
        let sdf = circle(128, 0.4);
        let h = sdf.grid().spacing();
        let sol = lsf_evolve(&sdf, 0.03, &[0.01, 0.02, 0.03], DEFAULT_BETA).unwrap();
        assert_eq!(fattening_time(&sol, h).unwrap(), None);
        let line = ScalarField::from_fn(*sdf.grid(), 0.0, |p| p[1]).with_extension(Extension::Linear);
        let lsol = lsf_evolve_field(&line, 0.0, &[0.0], DEFAULT_BETA).unwrap();
        let f = fattening_measure(&lsol, 0.0, h).unwrap();
        assert!(f.excess.abs() <= 4.0 * h * f.perimeter);
    }

    #[test]
    fn circle_envelopes_bracket() {
        let sdf = circle(128, 0.4);
        let h = sdf.grid().spacing();
        let t = [0.01, 0.02];
        let env = inner_outer_envelopes(&sdf, 0.05, &t, DEFAULT_BETA).unwrap();
        for (k, &tk) in t.iter().enumerate() {
            let ri = mean_radius(&env.inner_contours[k]);
            let ro = mean_radius(&env.outer_contours[k]);
            assert!((ri - (0.45f64.powi(2) - 2.0 * tk).sqrt()).abs() < 3.0 * h);
            assert!((ro - (0.35f64.powi(2) - 2.0 * tk).sqrt()).abs() < 3.0 * h);
            assert!(env.containment_excess(k).unwrap() <= 2.0 * h);
        }
        let mid = lsf_evolve(&sdf, 0.02, &t, DEFAULT_BETA).unwrap();
        let c = contour_extract(&mid.snapshots[1], 0.0).unwrap();
        let rep = sandwich_check(&[NodalSet { epsilon: 0.0, contour: &c }], &env).unwrap();
        assert!(rep.passed(), "{}", rep.to_table());
        assert!(inner_outer_envelopes(&sdf, -0.1, &t, DEFAULT_BETA).is_err());
    }

    #[test]
    fn planar_fast_path_matches_generic() {
        let sdf = crate::geometry::signed_distance(&ShapeSpec::FigureEight { radius: 0.3 }, &Grid::square(-1.0, 1.0, 64, Boundary::FarField(-1.0)).unwrap()).unwrap();
        let g = *sdf.grid();
        let mut a = sdf.field().values().to_vec();
        let mut b = a.clone();
        let mut buf = Vec::new();
        for _ in 0..5 {
            lsf_step(&mut a, &g, Extension::Linear, lsf_dt(&g), DEFAULT_BETA);
            lsf_step_2d(&mut b, &mut buf, &g, Extension::Linear, lsf_dt(&g), DEFAULT_BETA);
        }
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-13, "{worst}");
    }

    #[test]
    fn figure_eight_fattens_at_once() {
        let g = Grid::square(-1.0, 1.0, 200, Boundary::FarField(-1.0)).unwrap();
        let h = g.spacing();
        let sdf = signed_distance(&ShapeSpec::FigureEight { radius: 0.3 }, &g).unwrap();
        let phi = sdf.field().clone().with_extension(Extension::Linear);
        let times = [4.0 * h * h, 0.002, 0.005, 0.01];
        for scheme in [LsfScheme::Median, LsfScheme::Central] {
            let sol = lsf_evolve_with(&phi, 0.01, &times, DEFAULT_BETA, scheme).unwrap();
            assert!(sol.snapshots[0].time() <= 4.0 * h * h + sol.dt);
            for s in &sol.snapshots {
                let f = fattening_measure(&sol, s.time(), sol.default_band()).unwrap();
                assert!(f.excess > 0.0, "{scheme:?} {f:?}");
            }
        }
        let circle = lsf_evolve(&circle(200, 0.3), 0.01, &times, DEFAULT_BETA).unwrap();
        for s in &circle.snapshots {
            let f = fattening_measure(&circle, s.time(), circle.default_band()).unwrap();
            assert!(f.excess.abs() < 0.1 * 4.0 * h * f.perimeter, "{f:?}");
        }
    }

    #[test]
    fn beta_range_enforced() {
        let sdf = circle(32, 0.4);
        assert!(lsf_evolve(&sdf, 0.01, &[0.01], 1e-2).is_err());
    }
}

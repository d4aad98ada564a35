//! Shooting in the leaf parameter: evolve the foliation family, bisect for
//! the leaf whose solution vanishes at a target point, and collect the
//! diagnostics of the diagonal study over decreasing ε.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::ac::{evolve, ACParams, SURFACE_TENSION};
use crate::energy::energy_and_discrepancy;
use crate::error::{Error, Result};
use crate::geometry::{contour_extract, hausdorff_distance, signed_distance, Contour, ShapeSpec, SignedDistanceField};
use crate::grid::{kahan_sum, sample, Grid, ScalarField};

/// Endpoint margin: the end leaves must satisfy `u ≥ 1 - κ` and `u ≤ κ - 1`.
pub const DEFAULT_KAPPA: f64 = 0.25;

/// Largest total absolute turning accepted for one component of an end leaf.
pub const TURNING_BOUND: f64 = 6.0 * std::f64::consts::PI;

/// Hard cap on bisection steps.
pub const MAX_BISECTIONS: usize = 60;

/// Pointwise order violations below this are round-off.
pub const ORDER_TOLERANCE: f64 = 1e-12;

/// How a leaf `{d = s}` is turned into initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafDiscretization {
    /// `±1` at nodes. The value at a fixed point is a step function of `s`.
    Nodal,
    /// `2θ - 1` with `θ = clamp((d - s)/h + 1/2, 0, 1)`, the fraction of
    /// a cell-wide ramp lying inside the leaf. Continuous and
    /// non-increasing in `s`, so bisection can resolve below the grid.
    CellFraction,
}

impl LeafDiscretization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nodal => "nodal",
            Self::CellFraction => "cell_fraction",
        }
    }
}

/// Spacetime point `(x₀, t₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub point: Vec<f64>,
    pub time: f64,
}

impl Target {
    pub fn new(point: &[f64], time: f64) -> Self {
        Self { point: point.to_vec(), time }
    }
}

type CacheKey = (u64, u64, u64, Vec<u64>);

/// A shape, the tubular half-width `η` and the grid the leaves live on.
#[derive(Debug)]
pub struct FoliationSpec {
    sdf: Arc<SignedDistanceField>,
    eta: f64,
    kappa: f64,
    leaves: LeafDiscretization,
    cache: Mutex<HashMap<CacheKey, f64>>,
}

impl FoliationSpec {
    pub fn new(shape: &ShapeSpec, grid: &Grid, eta: f64) -> Result<Self> {
        let sdf = signed_distance(shape, grid)?;
        Self::from_sdf(sdf, eta)
    }

    pub fn from_sdf(sdf: SignedDistanceField, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < sdf.d_max()) {
            return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, {})", sdf.d_max())));
        }
        Ok(Self {
            sdf: Arc::new(sdf),
            eta,
            kappa: DEFAULT_KAPPA,
            leaves: LeafDiscretization::CellFraction,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_leaves(mut self, leaves: LeafDiscretization) -> Self {
        self.leaves = leaves;
        self.cache.get_mut().expect("cache lock").clear();
        self
    }

    pub fn sdf(&self) -> &SignedDistanceField {
        &self.sdf
    }

    pub fn grid(&self) -> &Grid {
        self.sdf.grid()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn leaves(&self) -> LeafDiscretization {
        self.leaves
    }

    /// Initial data for the leaf `{d = s}`.
    pub fn leaf_data(&self, s: f64) -> Result<ScalarField> {
        if s.abs() > self.eta {
            return Err(Error::InvalidParameter(format!("leaf parameter {s} outside [-{0}, {0}]", self.eta)));
        }
        let g = *self.grid();
        let inv_h = 1.0 / g.spacing();
        let values = self
            .sdf
            .field()
            .values()
            .iter()
            .map(|&d| match self.leaves {
                LeafDiscretization::Nodal => {
                    if d >= s {
                        1.0
                    } else {
                        -1.0
                    }
                }
                LeafDiscretization::CellFraction => 2.0 * ((d - s) * inv_h + 0.5).clamp(0.0, 1.0) - 1.0,
            })
            .collect();
        ScalarField::new(g, values, 0.0)
    }

    /// Total absolute turning of each component of the leaf contour.
    pub fn leaf_turning(&self, s: f64) -> Result<Vec<f64>> {
        let c = contour_extract(self.sdf.field(), s)?;
        if c.is_empty() {
            return Err(Error::EmptyContour);
        }
        Ok(c.polylines.iter().map(|p| total_turning(&p.points, p.closed)).collect())
    }

    /// End leaves exist and are not wildly oscillating.
    pub fn check_end_leaves(&self) -> Result<()> {
        for s in [-self.eta, self.eta] {
            let turning = self.leaf_turning(s)?;
            if let Some(t) = turning.iter().find(|&&t| t > TURNING_BOUND) {
                return Err(Error::InvalidParameter(format!("leaf s = {s} turns by {t:.3} rad, more than {TURNING_BOUND:.3}")));
            }
        }
        Ok(())
    }

    fn cached(&self, key: &CacheKey) -> Option<f64> {
        self.cache.lock().expect("cache lock").get(key).copied()
    }

    fn store(&self, key: CacheKey, v: f64) {
        self.cache.lock().expect("cache lock").insert(key, v);
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

fn total_turning(points: &[[f64; 2]], closed: bool) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let dir = |i: usize, j: usize| [points[j][0] - points[i][0], points[j][1] - points[i][1]];
    let mut edges: Vec<[f64; 2]> = (0..n - 1).map(|i| dir(i, i + 1)).collect();
    if closed && points[0] != points[n - 1] {
        edges.push(dir(n - 1, 0));
    }
    edges.retain(|e| e[0] != 0.0 || e[1] != 0.0);
    let m = edges.len();
    let pairs = if closed { m } else { m.saturating_sub(1) };
    (0..pairs)
        .map(|i| {
            let (a, b) = (edges[i], edges[(i + 1) % m]);
            (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]).abs()
        })
        .sum()
}

fn solve_leaf(spec: &FoliationSpec, s: f64, eps: f64, times: &[f64]) -> Result<Vec<ScalarField>> {
    let u0 = spec.leaf_data(s)?;
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let p = ACParams::explicit(spec.grid(), eps, t_end, times.to_vec());
    Ok(evolve(&u0, &p)?.snapshots)
}

/// The solution at the target of the family member started from leaf `s`.
pub fn family_value_at(spec: &FoliationSpec, s: f64, eps: f64, target: &Target) -> Result<f64> {
    let key = (s.to_bits(), eps.to_bits(), target.time.to_bits(), target.point.iter().map(|x| x.to_bits()).collect());
    if let Some(v) = spec.cached(&key) {
        return Ok(v);
    }
    let snaps = solve_leaf(spec, s, eps, &[target.time])?;
    let v = sample(&snaps[0], &target.point)?;
    spec.store(key, v);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub s_low: f64,
    pub s_high: f64,
    pub time: f64,
    /// `max(u_{s_high} - u_{s_low}, 0)` over nodes.
    pub max_violation: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub rows: Vec<OrderRow>,
}

impl MonotoneReport {
    pub fn max_violation(&self) -> f64 {
        self.rows.iter().map(|r| r.max_violation).fold(0.0, f64::max)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("s_low\ts_high\ttime\tmax_violation\tviolations\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.s_low, r.s_high, r.time, r.max_violation, r.violations);
        }
        s
    }
}

/// Pointwise comparison of consecutive family members: larger `s` must
/// give a solution that is nowhere larger.
pub fn check_monotone_in_s(spec: &FoliationSpec, eps: f64, s_list: &[f64], t_list: &[f64]) -> Result<MonotoneReport> {
    if s_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("leaf parameters must be sorted".into()));
    }
    let runs: Vec<Vec<ScalarField>> = s_list
        .par_iter()
        .map(|&s| solve_leaf(spec, s, eps, t_list))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (k, pair) in runs.windows(2).enumerate() {
        for (j, &time) in t_list.iter().enumerate() {
            let (lo, hi) = (&pair[0][j], &pair[1][j]);
            let excess: Vec<f64> = hi.values().iter().zip(lo.values()).map(|(a, b)| a - b).collect();
            rows.push(OrderRow {
                s_low: s_list[k],
                s_high: s_list[k + 1],
                time,
                max_violation: excess.iter().copied().fold(0.0, f64::max),
                violations: excess.iter().filter(|&&e| e > ORDER_TOLERANCE).count(),
            });
        }
    }
    Ok(MonotoneReport { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    pub epsilon: f64,
    pub target: Target,
    pub s_star: f64,
    pub value: f64,
    pub residual: f64,
    pub converged: bool,
    /// Every `(s, value)` evaluated, in evaluation order, endpoints first.
    pub history: Vec<(f64, f64)>,
    pub iterations: usize,
    /// Final bracket `[a, b]` with `value(a) > 0 > value(b)`.
    pub bracket: (f64, f64),
    /// Values at `s* - h` and `s* + h`.
    pub neighbours: (f64, f64),
    /// Set when both neighbours are also within tolerance.
    pub flat_interval: Option<(f64, f64)>,
}

impl ShootingResult {
    /// Sorted by `s`, the recorded values never increase.
    pub fn history_monotone(&self) -> bool {
        let mut h = self.history.clone();
        h.sort_by(|a, b| a.0.total_cmp(&b.0));
        h.windows(2).all(|w| w[1].1 <= w[0].1 + ORDER_TOLERANCE)
    }

    pub fn history_table(&self) -> String {
        let mut s = String::from("iteration\ts\tvalue\n");
        for (i, (a, v)) in self.history.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{a}\t{v}");
        }
        s
    }
}

/// Bisection on `s ↦ u_s(x₀, t₀)`, which is non-increasing.
///
/// With nodal leaves the bracket stops at width `h/4`, below which the
/// value does not change. With cell-fraction leaves the value is
/// continuous and the bracket is halved until the tolerance is met or
/// floating point runs out.
pub fn bisect_leaf(spec: &FoliationSpec, eps: f64, target: &Target, shoot_tol: f64) -> Result<ShootingResult> {
    let eta = spec.eta();
    let h = spec.grid().spacing();
    let (v_lo, v_hi) = rayon::join(
        || family_value_at(spec, -eta, eps, target),
        || family_value_at(spec, eta, eps, target),
    );
    let (v_lo, v_hi) = (v_lo?, v_hi?);
    let kappa = spec.kappa();
    if !(v_lo >= 1.0 - kappa && v_hi <= kappa - 1.0) {
        return Err(Error::EndpointCondition(format!(
            "u(-eta) = {v_lo:.4} needs >= {:.2} and u(+eta) = {v_hi:.4} needs <= {:.2}",
            1.0 - kappa,
            kappa - 1.0
        )));
    }
    let min_width = match spec.leaves() {
        LeafDiscretization::Nodal => 0.25 * h,
        LeafDiscretization::CellFraction => 0.0,
    };
    let mut history = vec![(-eta, v_lo), (eta, v_hi)];
    let (mut a, mut b) = (-eta, eta);
    let mut best = if v_lo.abs() <= v_hi.abs() { (-eta, v_lo) } else { (eta, v_hi) };
    let mut converged = best.1.abs() <= shoot_tol;
    let mut iterations = 0;
    while !converged && iterations < MAX_BISECTIONS && b - a > min_width {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let v = family_value_at(spec, m, eps, target)?;
        iterations += 1;
        history.push((m, v));
        if v.abs() < best.1.abs() {
            best = (m, v);
        }
        if v.abs() <= shoot_tol {
            converged = true;
        } else if v > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let (s_star, value) = best;
    let (left, right) = rayon::join(
        || family_value_at(spec, (s_star - h).max(-eta), eps, target),
        || family_value_at(spec, (s_star + h).min(eta), eps, target),
    );
    let neighbours = (left?, right?);
    let flat_interval = (converged && neighbours.0.abs() <= shoot_tol && neighbours.1.abs() <= shoot_tol)
        .then(|| ((s_star - h).max(-eta), (s_star + h).min(eta)));
    Ok(ShootingResult {
        epsilon: eps,
        target: target.clone(),
        s_star,
        value,
        residual: value.abs(),
        converged,
        history,
        iterations,
        bracket: (a, b),
        neighbours,
        flat_interval,
    })
}

/// Energy `∫ e` over the ball `B(x₀, ρ)`.
pub fn local_energy_mass(u: &ScalarField, eps: f64, center: &[f64], rho: f64) -> f64 {
    let (e, _) = energy_and_discrepancy(u, eps);
    let g = *u.grid();
    let n = g.points();
    let rows = g.len() / n;
    let inside = |i: usize| {
        let p = g.position(i);
        let r2: f64 = (0..g.dim()).map(|a| (p[a] - center[a]).powi(2)).sum();
        if r2 <= rho * rho {
            e.values()[i]
        } else {
            0.0
        }
    };
    kahan_sum((0..rows).map(|r| kahan_sum((r * n..(r + 1) * n).map(inside)))) * g.cell_volume()
}

#[derive(Debug, Clone)]
pub struct DiagonalEntry {
    pub shooting: ShootingResult,
    /// Solution of the `s*` leaf at `t₀`.
    pub field: ScalarField,
    pub contour: Contour,
    /// Distance from `x₀` to the nodal contour.
    pub target_distance: f64,
    pub local_mass: f64,
}

#[derive(Debug, Clone)]
pub struct DiagonalStudy {
    pub target: Target,
    pub epsilons: Vec<f64>,
    pub spacing: f64,
    pub rho_loc: f64,
    pub entries: Vec<DiagonalEntry>,
    /// Hausdorff distances between consecutive nodal contours.
    pub hausdorff: Vec<f64>,
    /// Set when a bisection failed; entries before it are kept.
    pub aborted: Option<(f64, String)>,
}

impl DiagonalStudy {
    pub fn complete(&self) -> bool {
        self.aborted.is_none() && self.entries.len() == self.epsilons.len()
    }

    /// Every nodal contour passes within `2h` of `x₀`.
    pub fn nodal_sets_hit_target(&self) -> bool {
        self.entries.iter().all(|e| e.target_distance <= 2.0 * self.spacing)
    }

    /// Clearing-out proxy: at least the mass of a straight interface
    /// crossing half the ball.
    pub fn local_mass_ok(&self) -> bool {
        self.entries.iter().all(|e| e.local_mass >= SURFACE_TENSION * self.rho_loc)
    }

    pub fn all_converged(&self) -> bool {
        self.entries.iter().all(|e| e.shooting.converged)
    }

    pub fn hausdorff_non_increasing(&self) -> bool {
        self.hausdorff.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::from("epsilon\ts_star\tvalue\titerations\tconverged\ttarget_distance\tlocal_mass\n");
        for e in &self.entries {
            let r = &e.shooting;
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.epsilon, r.s_star, r.value, r.iterations, r.converged, e.target_distance, e.local_mass
            );
        }
        s
    }
}

/// Shooting over a decreasing sequence of ε on one grid.
pub fn diagonal_study(spec: &FoliationSpec, target: &Target, eps_list: &[f64], shoot_tol: f64) -> Result<DiagonalStudy> {
    if eps_list.is_empty() {
        return Err(Error::EmptyInput);
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilon sequence must be strictly decreasing".into()));
    }
    let g = *spec.grid();
    let h = g.spacing();
    let eps_min = *eps_list.last().expect("non-empty");
    if eps_min < 4.0 * h {
        return Err(Error::InvalidParameter(format!("epsilon {eps_min} is under-resolved: need epsilon >= 4h = {}", 4.0 * h)));
    }
    if target.point.len() != 2 || g.dim() != 2 {
        return Err(Error::Unsupported("diagonal study needs a planar grid".into()));
    }
    let rho_loc = 10.0 * eps_min;
    let x0 = [target.point[0], target.point[1]];
    let mut entries = Vec::new();
    let mut aborted = None;
    for &eps in eps_list {
        let shooting = match bisect_leaf(spec, eps, target, shoot_tol) {
            Ok(r) => r,
            Err(e) => {
                aborted = Some((eps, e.to_string()));
                break;
            }
        };
        let field = solve_leaf(spec, shooting.s_star, eps, &[target.time])?.remove(0);
        let contour = contour_extract(&field, 0.0)?;
        let target_distance = if contour.is_empty() { f64::INFINITY } else { contour.distance_to(x0) };
        let local_mass = local_energy_mass(&field, eps, &target.point, rho_loc);
        entries.push(DiagonalEntry { shooting, field, contour, target_distance, local_mass });
    }
    let hausdorff = entries
        .windows(2)
        .map(|w| hausdorff_distance(&w[0].contour, &w[1].contour).unwrap_or(f64::INFINITY))
        .collect();
    Ok(DiagonalStudy {
        target: target.clone(),
        epsilons: eps_list.to_vec(),
        spacing: h,
        rho_loc,
        entries,
        hausdorff,
        aborted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryGroup {
    D2,
    D4,
    ReflectX,
    ReflectY,
}

impl SymmetryGroup {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d2" => Some(Self::D2),
            "d4" => Some(Self::D4),
            "reflection-x" | "reflect-x" => Some(Self::ReflectX),
            "reflection-y" | "reflect-y" => Some(Self::ReflectY),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::D2 => "D2",
            Self::D4 => "D4",
            Self::ReflectX => "reflection-x",
            Self::ReflectY => "reflection-y",
        }
    }

    /// Non-identity elements acting on node indices `(i, j)` of an `n × n` grid.
    fn elements(self, n: usize) -> Vec<Box<dyn Fn(usize, usize) -> (usize, usize)>> {
        let m = n - 1;
        let rx: Box<dyn Fn(usize, usize) -> (usize, usize)> = Box::new(move |i, j| (m - i, j));
        let ry: Box<dyn Fn(usize, usize) -> (usize, usize)> = Box::new(move |i, j| (i, m - j));
        let rot2: Box<dyn Fn(usize, usize) -> (usize, usize)> = Box::new(move |i, j| (m - i, m - j));
        match self {
            Self::ReflectX => vec![rx],
            Self::ReflectY => vec![ry],
            Self::D2 => vec![rx, ry, rot2],
            Self::D4 => vec![
                rx,
                ry,
                rot2,
                Box::new(move |i, j| (j, m - i)),
                Box::new(move |i, j| (m - j, i)),
                Box::new(|i, j| (j, i)),
                Box::new(move |i, j| (m - j, m - i)),
            ],
        }
    }
}

/// Largest `|u - u∘g|` over the non-identity elements, reflecting about
/// the box centre.
pub fn symmetry_deviation(u: &ScalarField, group: SymmetryGroup) -> Result<f64> {
    let g = *u.grid();
    if g.dim() != 2 {
        return Err(Error::IncompatibleGroup(format!("{} acts on planar grids only", group.name())));
    }
    let n = g.points();
    let v = u.values();
    Ok(group
        .elements(n)
        .iter()
        .map(|el| {
            (0..n * n)
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    let (a, b) = el(i, j);
                    (v[idx] - v[a * n + b]).abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max))
}

/// One energy concentration met along a transversal.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    /// Arclength of the wall centre from the segment start.
    pub position: f64,
    /// `∫ e ds / σ` across the wall.
    pub mass: f64,
    pub sign_change: bool,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicityProbe {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub sign_changes: usize,
    pub walls: Vec<Wall>,
}

impl MultiplicityProbe {
    pub fn total_multiplicity(&self) -> usize {
        self.walls.iter().map(|w| w.multiplicity).sum()
    }
}

/// Walls along the segment `from → to`: maximal runs where the energy
/// density exceeds a tenth of the standing profile's peak `1/ε`. A wall
/// whose phase changes sign has odd multiplicity, one without has even.
pub fn multiplicity_probe(u: &ScalarField, eps: f64, from: [f64; 2], to: [f64; 2]) -> Result<MultiplicityProbe> {
    let g = *u.grid();
    let (e, _) = energy_and_discrepancy(u, eps);
    let len = (to[0] - from[0]).hypot(to[1] - from[1]);
    let ds_target = 0.25 * g.spacing();
    let m = ((len / ds_target).ceil() as usize).max(2);
    let ds = len / m as f64;
    let mut us = Vec::with_capacity(m + 1);
    let mut es = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let t = k as f64 / m as f64;
        let p = [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])];
        us.push(sample(u, &p)?);
        es.push(sample(&e, &p)?);
    }
    let strict_changes = |vals: &[f64]| {
        let mut last = 0.0f64;
        let mut count = 0;
        for &v in vals {
            if v != 0.0 {
                if last != 0.0 && v.signum() != last.signum() {
                    count += 1;
                }
                last = v;
            }
        }
        count
    };
    let threshold = 0.1 / eps;
    let mut walls = Vec::new();
    let mut k = 0;
    while k <= m {
        if es[k] < threshold {
            k += 1;
            continue;
        }
        let start = k;
        while k <= m && es[k] >= threshold {
            k += 1;
        }
        let end = k - 1;
        // widen to the surrounding troughs so the whole profile is counted
        let mut lo = start;
        while lo > 0 && es[lo - 1] < es[lo] {
            lo -= 1;
        }
        let mut hi = end;
        while hi < m && es[hi + 1] < es[hi] {
            hi += 1;
        }
        let mass = kahan_sum((lo..hi).map(|i| 0.5 * (es[i] + es[i + 1]) * ds)) / SURFACE_TENSION;
        let sign_change = strict_changes(&us[lo..=hi]) % 2 == 1;
        // nearest odd count for a sign change, nearest even one otherwise
        let multiplicity = if sign_change {
            2 * ((mass - 1.0) / 2.0).round().max(0.0) as usize + 1
        } else {
            2 * (mass / 2.0).round().max(1.0) as usize
        };
        walls.push(Wall { position: 0.5 * (lo + hi) as f64 * ds, mass, sign_change, multiplicity });
    }
    Ok(MultiplicityProbe { from, to, sign_changes: strict_changes(&us), walls })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub group: SymmetryGroup,
    /// `(ε, deviation)` per study entry.
    pub deviations: Vec<(f64, f64)>,
    pub probes: Vec<(f64, MultiplicityProbe)>,
}

impl SymmetryReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.1).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("group={}\nmax_deviation={}\n", self.group.name(), self.max_deviation());
        s.push_str("epsilon\tdeviation\n");
        for (e, d) in &self.deviations {
            let _ = writeln!(s, "{e}\t{d}");
        }
        for (e, p) in &self.probes {
            let _ = writeln!(
                s,
                "# probe epsilon={e} from={:?} to={:?} sign_changes={} walls={} multiplicity={}",
                p.from,
                p.to,
                p.sign_changes,
                p.walls.len(),
                p.total_multiplicity()
            );
            for w in &p.walls {
                let _ = writeln!(s, "wall\t{}\t{}\t{}\t{}", w.position, w.mass, w.sign_change, w.multiplicity);
            }
        }
        s
    }
}

/// Symmetry deviation of every study field and, if a transversal is
/// given, the wall multiplicities along it.
pub fn symmetry_and_multiplicity(
    study: &DiagonalStudy,
    group: SymmetryGroup,
    transversal: Option<([f64; 2], [f64; 2])>,
) -> Result<SymmetryReport> {
    let mut deviations = Vec::new();
    let mut probes = Vec::new();
    for e in &study.entries {
        let eps = e.shooting.epsilon;
        deviations.push((eps, symmetry_deviation(&e.field, group)?));
        if let Some((a, b)) = transversal {
            probes.push((eps, multiplicity_probe(&e.field, eps, a, b)?));
        }
    }
    Ok(SymmetryReport { group, deviations, probes })
}

//! Initial shapes, their signed distance (positive inside), foliation leaves,
//! marching-squares contours, and the measure/density estimates used for the
//! level-set bounds and the Koch flake.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gradient, Extension, Grid, ScalarField};

/// Fraction of the box margin used as the distance clamp.
pub const DEFAULT_CLAMP_FRACTION: f64 = 0.4;

/// Largest supported Koch iteration count.
pub const MAX_KOCH_ITERATIONS: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Circle { center: [f64; 2], radius: f64 },
    /// Two circles of radius `radius` centred at `(-radius, 0)` and
    /// `(radius, 0)`, tangent at the origin. The enclosed region is the union
    /// of the two open disks.
    FigureEight { radius: f64 },
    /// Koch snowflake: `iterations` refinements of an equilateral triangle of
    /// side `side` with centroid `center`.
    KochFlake { iterations: u32, side: f64, center: [f64; 2] },
    /// Closed simple polygon; the closing edge is implicit.
    Polyline { vertices: Vec<[f64; 2]> },
    Sphere { center: [f64; 3], radius: f64 },
}

impl ShapeSpec {
    pub fn dim(&self) -> usize {
        match self {
            ShapeSpec::Sphere { .. } => 3,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            ShapeSpec::Circle { radius, .. } | ShapeSpec::FigureEight { radius } | ShapeSpec::Sphere { radius, .. } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            ShapeSpec::KochFlake { iterations, side, .. } => {
                if !(*side > 0.0 && side.is_finite()) {
                    return bad(format!("side must be positive, got {side}"));
                }
                if *iterations > MAX_KOCH_ITERATIONS {
                    return bad(format!("koch iterations must be <= {MAX_KOCH_ITERATIONS}"));
                }
            }
            ShapeSpec::Polyline { vertices } => {
                let v = dedup_closing(vertices);
                if v.len() < 3 {
                    return bad("polyline needs at least 3 distinct vertices".into());
                }
                if let Some((a, b)) = first_crossing(&v) {
                    return bad(format!("polyline edges {a} and {b} cross"));
                }
            }
        }
        Ok(())
    }

    /// Closed polygon realizing a polyline-type shape.
    pub fn polygon(&self) -> Option<Vec<[f64; 2]>> {
        match self {
            ShapeSpec::KochFlake { iterations, side, center } => Some(koch_polyline(*iterations, *side, *center)),
            ShapeSpec::Polyline { vertices } => Some(dedup_closing(vertices)),
            _ => None,
        }
    }

    /// Axis-aligned bounding box of the shape.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            ShapeSpec::Circle { center, radius } => (
                [center[0] - radius, center[1] - radius, 0.0],
                [center[0] + radius, center[1] + radius, 0.0],
            ),
            ShapeSpec::FigureEight { radius } => ([-2.0 * radius, -radius, 0.0], [2.0 * radius, *radius, 0.0]),
            ShapeSpec::Sphere { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
            _ => {
                let poly = self.polygon().expect("polygonal shape");
                let mut lo = [f64::INFINITY, f64::INFINITY, 0.0];
                let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
                for p in &poly {
                    for a in 0..2 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Smallest gap between the shape's bounding box and the box faces.
    pub fn margin(&self, grid: &Grid) -> f64 {
        let (lo, hi) = self.bounds();
        (0..grid.dim())
            .map(|a| (lo[a] - grid.lo(a)).min(grid.hi(a) - hi[a]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn dedup_closing(v: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = v.to_vec();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// First pair of non-adjacent edges that cross properly. Touching at single
/// points is allowed.
fn first_crossing(v: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            let d1 = cross(a, b, c);
            let d2 = cross(a, b, d);
            let d3 = cross(c, d, a);
            let d4 = cross(c, d, b);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// Counter-clockwise Koch snowflake polygon with `3 * 4^k` edges. Every edge
/// is replaced by four, with the bump pointing out of the enclosed region.
pub fn koch_polyline(k: u32, side: f64, center: [f64; 2]) -> Vec<[f64; 2]> {
    let r_in = side / (2.0 * 3f64.sqrt());
    let mut pts = vec![
        [center[0] - side / 2.0, center[1] - r_in],
        [center[0] + side / 2.0, center[1] - r_in],
        [center[0], center[1] + 2.0 * r_in],
    ];
    let (s60, c60) = (-(60f64.to_radians())).sin_cos();
    for _ in 0..k {
        let n = pts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let d = [(b[0] - a[0]) / 3.0, (b[1] - a[1]) / 3.0];
            let p1 = [a[0] + d[0], a[1] + d[1]];
            let p3 = [a[0] + 2.0 * d[0], a[1] + 2.0 * d[1]];
            // clockwise turn of the middle third puts the bump on the right (outside)
            let peak = [p1[0] + c60 * d[0] - s60 * d[1], p1[1] + s60 * d[0] + c60 * d[1]];
            next.extend_from_slice(&[a, p1, peak, p3]);
        }
        pts = next;
    }
    pts
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// Even-odd test with a ray towards +x.
fn inside_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed distance of a point, unclamped.
fn raw_distance(spec: &ShapeSpec, poly: Option<&[[f64; 2]]>, p: &[f64]) -> f64 {
    match spec {
        ShapeSpec::Circle { center, radius } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
        ShapeSpec::Sphere { center, radius } => {
            let r2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
            radius - r2.sqrt()
        }
        ShapeSpec::FigureEight { radius } => {
            let r1 = (p[0] + radius).hypot(p[1]);
            let r2 = (p[0] - radius).hypot(p[1]);
            let dist = (r1 - radius).abs().min((r2 - radius).abs());
            if r1 < *radius || r2 < *radius {
                dist
            } else {
                -dist
            }
        }
        _ => {
            let poly = poly.expect("polygon");
            let q = [p[0], p[1]];
            let n = poly.len();
            let mut dist = f64::INFINITY;
            for i in 0..n {
                dist = dist.min(point_segment_distance(q, poly[i], poly[(i + 1) % n]));
            }
            if inside_polygon(q, poly) {
                dist
            } else {
                -dist
            }
        }
    }
}

/// Signed distance to a shape, positive inside, clamped at `±d_max`.
#[derive(Debug, Clone)]
pub struct SignedDistanceField {
    field: ScalarField,
    d_max: f64,
    shape: ShapeSpec,
}

impl SignedDistanceField {
    /// Wraps an arbitrary distance-like field, e.g. an affine half-plane.
    pub fn from_parts(field: ScalarField, d_max: f64, shape: ShapeSpec) -> Self {
        Self { field: field.with_extension(Extension::Linear), d_max, shape }
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn shape(&self) -> &ShapeSpec {
        &self.shape
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    /// Whether node `idx` sits on the clamp.
    pub fn is_clamped(&self, idx: usize) -> bool {
        self.field.values()[idx].abs() >= self.d_max
    }

    /// Fraction of unclamped nodes, away from kinks of `d`, whose
    /// central-difference gradient magnitude lies in `[1 - 3h, 1 + 3h]`.
    ///
    /// A node counts as near a kink (medial axis or a corner of the clamp)
    /// when some axis has a second difference above `0.5 h`, which smooth
    /// distance functions only reach at curvature radii below `2h`.
    pub fn eikonal_fraction(&self) -> f64 {
        let g = *self.field.grid();
        let h = g.spacing();
        let v = self.field.values();
        let grads = gradient(&self.field);
        let mut checked = 0usize;
        let mut good = 0usize;
        let strides = [g.points().pow(g.dim() as u32 - 1), if g.dim() == 3 { g.points() } else { 1 }, 1];
        for idx in 0..g.len() {
            if g.depth(idx) < 1 || v[idx].abs() >= self.d_max - 2.0 * h {
                continue;
            }
            let kink = (0..g.dim()).any(|a| {
                let s = strides[a];
                (v[idx + s] - 2.0 * v[idx] + v[idx - s]).abs() > 0.5 * h
            });
            if kink {
                continue;
            }
            checked += 1;
            let m: f64 = grads.iter().map(|c| c.values()[idx].powi(2)).sum::<f64>().sqrt();
            if (m - 1.0).abs() <= 3.0 * h {
                good += 1;
            }
        }
        if checked == 0 {
            1.0
        } else {
            good as f64 / checked as f64
        }
    }
}

/// Signed distance with the default clamp `0.4 * margin`.
pub fn signed_distance(spec: &ShapeSpec, grid: &Grid) -> Result<SignedDistanceField> {
    let margin = spec.margin(grid);
    if margin <= 0.0 {
        return Err(Error::ShapeTouchesBoundary { required: 0.0, available: margin });
    }
    signed_distance_with_clamp(spec, grid, DEFAULT_CLAMP_FRACTION * margin)
}

pub fn signed_distance_with_clamp(spec: &ShapeSpec, grid: &Grid, d_max: f64) -> Result<SignedDistanceField> {
    spec.validate()?;
    if spec.dim() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "shape is {}-dimensional but the grid is {}-dimensional",
            spec.dim(),
            grid.dim()
        )));
    }
    if !(d_max > 0.0) {
        return Err(Error::InvalidParameter(format!("clamp must be positive, got {d_max}")));
    }
    let margin = spec.margin(grid);
    if margin < d_max {
        return Err(Error::ShapeTouchesBoundary { required: d_max, available: margin });
    }
    let poly = spec.polygon();
    let field = ScalarField::from_fn(*grid, 0.0, |p| raw_distance(spec, poly.as_deref(), p).clamp(-d_max, d_max))
        .with_extension(Extension::Linear);
    Ok(SignedDistanceField { field, d_max, shape: spec.clone() })
}

/// Indicator data `2 chi - 1` of the leaf region `{d > s}`; nodes with
/// `d == s` are assigned +1.
pub fn leaf_initial_data(sdf: &SignedDistanceField, s: f64) -> Result<ScalarField> {
    if !(s.abs() < sdf.d_max) {
        return Err(Error::InvalidParameter(format!(
            "leaf parameter |s| = {} must be below the clamp {}",
            s.abs(),
            sdf.d_max
        )));
    }
    let g = *sdf.grid();
    let values = sdf.field.values().iter().map(|&d| if d >= s { 1.0 } else { -1.0 }).collect();
    ScalarField::new(g, values, 0.0)
}

/// One connected piece of a contour.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
    }
}

/// Level set of a 2-D field as a list of polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub polylines: Vec<Polyline>,
    pub level: f64,
    pub time: f64,
}

impl Contour {
    pub fn is_empty(&self) -> bool {
        self.polylines.iter().all(|p| p.points.is_empty())
    }

    pub fn length(&self) -> f64 {
        self.polylines.iter().map(Polyline::length).sum()
    }

    pub fn components(&self) -> usize {
        self.polylines.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.polylines.iter().flat_map(Polyline::segments)
    }

    /// Distance from `p` to the nearest contour point.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for pl in &self.polylines {
            if pl.points.len() == 1 {
                best = best.min((pl.points[0][0] - p[0]).hypot(pl.points[0][1] - p[1]));
            }
            for (a, b) in pl.segments() {
                best = best.min(point_segment_distance(p, a, b));
            }
        }
        best
    }

    /// Vertices plus segment midpoints, so consecutive samples are at most
    /// half a segment apart.
    pub fn sample_points(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for pl in &self.polylines {
            out.extend_from_slice(&pl.points);
            for (a, b) in pl.segments() {
                out.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
        }
        out
    }

    /// Plot-ready text: one `x,y` line per vertex, a blank line between
    /// polylines, closed polylines repeat their first vertex.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# level={} time={}", self.level, self.time);
        for (k, pl) in self.polylines.iter().enumerate() {
            if k > 0 {
                s.push('\n');
            }
            for p in &pl.points {
                let _ = writeln!(s, "{},{}", p[0], p[1]);
            }
            if pl.closed {
                if let Some(p) = pl.points.first() {
                    let _ = writeln!(s, "{},{}", p[0], p[1]);
                }
            }
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Marching squares on a 2-D field.
///
/// A node is "above" when its value is `>= level`; crossings are linearly
/// interpolated on cell edges. In a saddle cell the cell average decides:
/// if it is above, the two above corners are joined through the centre and
/// the below corners are cut off; otherwise the reverse.
pub fn contour_extract(f: &ScalarField, level: f64) -> Result<Contour> {
    let g = f.grid();
    if g.dim() != 2 {
        return Err(Error::Unsupported("contours are only extracted from 2-D fields".into()));
    }
    let n = g.points();
    let v = f.values();
    let at = |i: usize, j: usize| v[i * n + j];
    // edge ids: 2*(i*n+j) joins (i,j)-(i+1,j); 2*(i*n+j)+1 joins (i,j)-(i,j+1)
    let hid = |i: usize, j: usize| 2 * (i * n + j);
    let vid = |i: usize, j: usize| 2 * (i * n + j) + 1;
    let crossing = |a: f64, b: f64| -> Option<f64> {
        if (a >= level) != (b >= level) {
            Some((level - a) / (b - a))
        } else {
            None
        }
    };

    let rows: Vec<Vec<(usize, usize)>> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let mut segs = Vec::new();
            for j in 0..n - 1 {
                let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                let edges = [hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)];
                let ends = [(c[0], c[1]), (c[1], c[2]), (c[3], c[2]), (c[0], c[3])];
                let cut: Vec<usize> = (0..4).filter(|&e| crossing(ends[e].0, ends[e].1).is_some()).collect();
                match cut.len() {
                    2 => segs.push((edges[cut[0]], edges[cut[1]])),
                    4 => {
                        let centre_above = 0.25 * (c[0] + c[1] + c[2] + c[3]) >= level;
                        let c0_above = c[0] >= level;
                        // cut off corners 0 and 2 when they are on the minority side
                        if c0_above != centre_above {
                            segs.push((edges[0], edges[3]));
                            segs.push((edges[1], edges[2]));
                        } else {
                            segs.push((edges[0], edges[1]));
                            segs.push((edges[2], edges[3]));
                        }
                    }
                    _ => {}
                }
            }
            segs
        })
        .collect();
    let segs: Vec<(usize, usize)> = rows.into_iter().flatten().collect();

    let h = g.spacing();
    let point_of = |id: usize| -> [f64; 2] {
        let node = id / 2;
        let (i, j) = (node / n, node % n);
        let (x0, y0) = (g.coord(0, i), g.coord(1, j));
        if id % 2 == 0 {
            let t = crossing(at(i, j), at(i + 1, j)).expect("crossing edge");
            [x0 + t * h, y0]
        } else {
            let t = crossing(at(i, j), at(i, j + 1)).expect("crossing edge");
            [x0, y0 + t * h]
        }
    };

    let mut incident: HashMap<usize, Vec<usize>> = HashMap::with_capacity(2 * segs.len());
    for (k, &(a, b)) in segs.iter().enumerate() {
        incident.entry(a).or_default().push(k);
        incident.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut polylines = Vec::new();

    let trace = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut chain = vec![start_edge];
        let mut seg = start_seg;
        let mut edge = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segs[seg];
            let other = if a == edge { b } else { a };
            if other == start_edge {
                return (chain, true);
            }
            chain.push(other);
            edge = other;
            match incident[&edge].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => return (chain, false),
            }
        }
    };

    // open chains start at edges used by a single segment (box boundary)
    for k in 0..segs.len() {
        if used[k] {
            continue;
        }
        let (a, b) = segs[k];
        let start = if incident[&a].len() == 1 {
            Some(a)
        } else if incident[&b].len() == 1 {
            Some(b)
        } else {
            None
        };
        if let Some(e) = start {
            let (chain, closed) = trace(k, e, &mut used);
            polylines.push((chain, closed));
        }
    }
    for k in 0..segs.len() {
        if !used[k] {
            let (chain, closed) = trace(k, segs[k].0, &mut used);
            polylines.push((chain, closed));
        }
    }

    Ok(Contour {
        polylines: polylines
            .into_iter()
            .map(|(chain, closed)| Polyline { points: chain.into_iter().map(point_of).collect(), closed })
            .collect(),
        level,
        time: f.time(),
    })
}

/// Length of the level set `{d = r}`.
pub fn level_set_measure(sdf: &SignedDistanceField, r: f64) -> Result<f64> {
    if !(r != 0.0 && r.abs() < sdf.d_max) {
        return Err(Error::InvalidParameter(format!("need 0 < |r| < {}, got {r}", sdf.d_max)));
    }
    Ok(contour_extract(&sdf.field, r)?.length())
}

/// Largest distance from a point of `a` to the contour `b`.
pub fn directed_hausdorff(a: &Contour, b: &Contour) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.polylines == b.polylines {
        return Ok(0.0);
    }
    let pts = a.sample_points();
    Ok(pts.par_iter().map(|&p| b.distance_to(p)).reduce(|| 0.0, f64::max))
}

/// Symmetric Hausdorff distance between two contours.
pub fn hausdorff_distance(a: &Contour, b: &Contour) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Box-counting dimension of a closed polygon: the slope of `log N(s)`
/// against `log(1/s)`, where `N(s)` counts boxes of side `s` met by the curve.
pub fn box_counting_dimension(poly: &[[f64; 2]], sizes: &[f64]) -> f64 {
    let n = poly.len();
    let mut xs = Vec::with_capacity(sizes.len());
    let mut ys = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let mut boxes = std::collections::HashSet::new();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let m = ((len / (0.25 * s)).ceil() as usize).max(1);
            for k in 0..=m {
                let t = k as f64 / m as f64;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                boxes.insert(((p[0] / s).floor() as i64, (p[1] / s).floor() as i64));
            }
        }
        xs.push((1.0 / s).ln());
        ys.push((boxes.len() as f64).ln());
    }
    fit_slope(&xs, &ys)
}

/// Smallest sampled lower-density ratio of a polygon with respect to the
/// `(1 + kappa)`-dimensional measure carried by its edges.
///
/// Each edge contributes `len^(1+kappa)` at its midpoint; the ratio at
/// centre `x` and radius `gamma` is the mass in `B(x, gamma)` over
/// `gamma^(1+kappa)`. Centres are every `stride`-th vertex.
pub fn lower_density_ratio(poly: &[[f64; 2]], kappa: f64, radii: &[f64], stride: usize) -> f64 {
    let n = poly.len();
    let mids: Vec<([f64; 2], f64)> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            ([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])], (b[0] - a[0]).hypot(b[1] - a[1]).powf(1.0 + kappa))
        })
        .collect();
    (0..n)
        .step_by(stride.max(1))
        .map(|c| {
            let x = poly[c];
            radii
                .iter()
                .map(|&g| {
                    let mass: f64 = mids
                        .iter()
                        .filter(|(m, _)| (m[0] - x[0]).hypot(m[1] - x[1]) < g)
                        .map(|(_, w)| w)
                        .sum();
                    mass / g.powf(1.0 + kappa)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest `K` with `m(r) <= K * max(1, (r / delta)^n) * m(r_min)` over the
/// samples `(r, m(r))`, where `m(r_min)` is the sample with the smallest `|r|`.
pub fn caraballo_envelope_fit(samples: &[(f64, f64)], delta: f64, n: i32) -> Result<f64> {
    let base = samples
        .iter()
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .ok_or(Error::EmptyInput)?
        .1;
    if !(base > 0.0) {
        return Err(Error::InvalidParameter("reference measure must be positive".into()));
    }
    Ok(samples
        .iter()
        .map(|&(r, m)| m / ((r.abs() / delta).powi(n).max(1.0) * base))
        .fold(0.0, f64::max))
}

//! Uniform Cartesian grids, scalar fields, and the stencil, smoothing,
//! quadrature and interpolation kernels the other modules are built on.
//!
//! Nodes sit at cell centres. Along each axis node `i` has coordinate
//! `centre + (i + 1/2 - n/2) h`, so a box that is symmetric about the origin
//! produces a node set that is symmetric bit-for-bit. Reflection tests rely
//! on that.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest number of nodes along an axis.
pub const MIN_POINTS: usize = 16;

/// How a grid treats the region outside the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Ghost nodes hold a constant (the far-field phase, -1 or +1).
    FarField(f64),
    /// Opposite faces are identified.
    Periodic,
}

impl Boundary {
    /// Default extension for fields that live on a grid with this boundary.
    pub fn extension(self) -> Extension {
        match self {
            Boundary::FarField(c) => Extension::Constant(c),
            Boundary::Periodic => Extension::Periodic,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::FarField(c) => write!(f, "far_field:{c}"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

/// How a particular field is continued past the box. Phase fields hold a
/// constant; distance fields grow linearly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extension {
    Constant(f64),
    Linear,
    Periodic,
}

/// A uniform grid of `points^dim` nodes with equal spacing on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    points: usize,
    h: f64,
    boundary: Boundary,
}

impl Grid {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], points: usize, boundary: Boundary) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if lo.len() != dim || hi.len() != dim {
            return Err(Error::InvalidGrid("extent arity must equal dim".into()));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be >= {MIN_POINTS}, got {points}"
            )));
        }
        if let Boundary::FarField(c) = boundary {
            if c != 1.0 && c != -1.0 {
                return Err(Error::InvalidGrid(format!("far-field value must be +1 or -1, got {c}")));
            }
        }
        let mut l = [0.0; 3];
        let mut u = [0.0; 3];
        let width = hi[0] - lo[0];
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite()) || hi[a] <= lo[a] {
                return Err(Error::InvalidGrid(format!("axis {a}: need lo < hi")));
            }
            let w = hi[a] - lo[a];
            if (w - width).abs() > 1e-12 * width.abs().max(1.0) {
                return Err(Error::InvalidGrid("spacing must be uniform across axes".into()));
            }
            l[a] = lo[a];
            u[a] = hi[a];
        }
        let h = width / points as f64;
        Ok(Self { dim, lo: l, hi: u, points, h, boundary })
    }

    /// Two-dimensional square box `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64, points: usize, boundary: Boundary) -> Result<Self> {
        Self::new(2, &[lo, lo], &[hi, hi], points, boundary)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape padded with trailing ones to three axes.
    pub fn shape(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for v in s.iter_mut().take(self.dim) {
            *v = self.points;
        }
        s
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn centre(&self, axis: usize) -> f64 {
        0.5 * (self.lo[axis] + self.hi[axis])
    }

    /// Coordinate of node `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.centre(axis) + (i as f64 + 0.5 - 0.5 * self.points as f64) * self.h
    }

    /// Multi-index of a flat node index (row-major, axis 0 slowest).
    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.points;
        match self.dim {
            2 => [idx / n, idx % n, 0],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    #[inline]
    pub fn ravel(&self, ix: [usize; 3]) -> usize {
        let n = self.points;
        match self.dim {
            2 => ix[0] * n + ix[1],
            _ => (ix[0] * n + ix[1]) * n + ix[2],
        }
    }

    /// Physical position of a flat node index; unused axes are zero.
    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ix = self.unravel(idx);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.coord(a, ix[a]);
        }
        p
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim && (0..self.dim).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// Number of nodes between a node and the nearest box face.
    pub fn depth(&self, idx: usize) -> usize {
        let ix = self.unravel(idx);
        (0..self.dim)
            .map(|a| ix[a].min(self.points - 1 - ix[a]))
            .min()
            .unwrap_or(0)
    }
}

/// Node values of a scalar quantity at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
    ext: Extension,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match node count {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {k}")));
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::InvalidParameter(format!("time must be >= 0, got {time}")));
        }
        Ok(Self { grid, values, time, ext: grid.boundary().extension() })
    }

    /// Field whose values come from a function of the node position.
    pub fn from_fn(grid: Grid, time: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let dim = grid.dim();
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.position(i)[..dim]))
            .collect();
        Self { grid, values, time, ext: grid.boundary().extension() }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()], time: 0.0, ext: grid.boundary().extension() }
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>, time: f64, ext: Extension) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values, time, ext }
    }

    pub fn with_extension(mut self, ext: Extension) -> Self {
        self.ext = ext;
        self
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn extension(&self) -> Extension {
        self.ext
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map keeping grid, time and extension.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        let values = self.values.par_iter().map(|&v| f(v)).collect();
        Self::from_parts(self.grid, values, self.time, self.ext)
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_parts(self.grid, values, self.time, self.ext))
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn value_at(&self, ix: [usize; 3]) -> f64 {
        self.values[self.grid.ravel(ix)]
    }
}

/// Value of a line at a possibly out-of-range index, continuing it past
/// either end according to `ext`.
#[inline]
fn extended(ext: Extension, n: usize, k: isize, get: impl Fn(usize) -> f64) -> f64 {
    if k >= 0 && (k as usize) < n {
        return get(k as usize);
    }
    match ext {
        Extension::Constant(c) => c,
        Extension::Periodic => get(k.rem_euclid(n as isize) as usize),
        Extension::Linear => {
            if k < 0 {
                let v0 = get(0);
                v0 + k as f64 * (get(1) - v0)
            } else {
                let last = get(n - 1);
                last + (k - n as isize + 1) as f64 * (last - get(n - 2))
            }
        }
    }
}

/// Copy of `values` (row-major, `shape`) with `w` ghost layers on every
/// active axis, filled per `ext`. Corner ghosts are obtained by extending
/// axis after axis.
pub(crate) fn pad(values: &[f64], shape: [usize; 3], dim: usize, w: usize, ext: Extension) -> (Vec<f64>, [usize; 3]) {
    let mut data = values.to_vec();
    let mut s = shape;
    for axis in 0..dim {
        let n = s[axis];
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let m = n + 2 * w;
        let mut out = vec![0.0; outer * m * inner];
        out.par_chunks_mut(m * inner).enumerate().for_each(|(o, block)| {
            let src = &data[o * n * inner..(o + 1) * n * inner];
            for kk in 0..m {
                let k = kk as isize - w as isize;
                for q in 0..inner {
                    block[kk * inner + q] = extended(ext, n, k, |i| src[i * inner + q]);
                }
            }
        });
        data = out;
        s[axis] = m;
    }
    (data, s)
}

/// Discrete Laplacian with the second-order `2 dim + 1` point stencil.
/// Ghost nodes follow the field's extension.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let mut out = vec![0.0; g.len()];
    laplacian_into(f.values(), &g, f.ext, &mut out);
    ScalarField::from_parts(g, out, f.time, f.ext)
}

pub(crate) fn laplacian_into(values: &[f64], g: &Grid, ext: Extension, out: &mut [f64]) {
    let n = g.points();
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    let (p, ps) = pad(values, g.shape(), g.dim(), 1, ext);
    match g.dim() {
        2 => {
            let m = ps[1];
            out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let up = &p[i * m..];
                let mid = &p[(i + 1) * m..];
                let dn = &p[(i + 2) * m..];
                for j in 0..n {
                    let c = mid[j + 1];
                    row[j] = ((up[j + 1] + dn[j + 1]) + (mid[j] + mid[j + 2]) - 4.0 * c) * inv_h2;
                }
            });
        }
        _ => {
            let (m1, m2) = (ps[1], ps[2]);
            let at = |a: usize, b: usize, c: usize| p[(a * m1 + b) * m2 + c];
            out.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
                for j in 0..n {
                    for k in 0..n {
                        let c = at(i + 1, j + 1, k + 1);
                        let s = (at(i, j + 1, k + 1) + at(i + 2, j + 1, k + 1))
                            + (at(i + 1, j, k + 1) + at(i + 1, j + 2, k + 1))
                            + (at(i + 1, j + 1, k) + at(i + 1, j + 1, k + 2));
                        slab[j * n + k] = (s - 6.0 * c) * inv_h2;
                    }
                }
            });
        }
    }
}

/// Central-difference gradient, one field per axis.
pub fn gradient(f: &ScalarField) -> Vec<ScalarField> {
    let g = f.grid;
    let inv_2h = 0.5 / g.spacing();
    let (p, ps) = pad(f.values(), g.shape(), g.dim(), 1, f.ext);
    let strides = [ps[1] * ps[2], ps[2], 1];
    (0..g.dim())
        .map(|axis| {
            let st = strides[axis];
            let values: Vec<f64> = (0..g.len())
                .into_par_iter()
                .map(|idx| {
                    let ix = g.unravel(idx);
                    let pidx = (0..g.dim()).map(|a| (ix[a] + 1) * strides[a]).sum::<usize>();
                    (p[pidx + st] - p[pidx - st]) * inv_2h
                })
                .collect();
            ScalarField::from_parts(g, values, f.time, Extension::Constant(0.0))
        })
        .collect()
}

/// Squared magnitude of the central-difference gradient.
pub fn gradient_norm_sq(f: &ScalarField) -> ScalarField {
    let parts = gradient(f);
    let g = f.grid;
    let values = (0..g.len())
        .into_par_iter()
        .map(|i| parts.iter().map(|c| c.values[i] * c.values[i]).sum())
        .collect();
    ScalarField::from_parts(g, values, f.time, Extension::Constant(0.0))
}

/// Kernel radius, in nodes, used for heat flow over time `t`.
pub fn heat_kernel_radius(t: f64, h: f64) -> usize {
    ((6.0 * (2.0 * t).sqrt() / h).ceil() as usize).max(1)
}

/// Sampled, normalized 1-D heat kernel `exp(-x^2 / 4t)` on `[-r, r]` nodes.
fn heat_kernel_1d(t: f64, h: f64) -> Vec<f64> {
    let r = heat_kernel_radius(t, h) as isize;
    let mut w: Vec<f64> = (-r..=r).map(|k| (-(k as f64 * h).powi(2) / (4.0 * t)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Heat flow of `f` for time `t`: Gaussian convolution with
/// `(4 pi t)^{-dim/2} exp(-|x|^2 / 4t)`, applied axis by axis with a
/// truncated kernel of radius `6 sqrt(2t) / h` nodes.
pub fn heat_convolve(f: &ScalarField, t: f64) -> Result<ScalarField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("heat time must be positive, got {t}")));
    }
    let g = f.grid;
    let n = g.points();
    let r = heat_kernel_radius(t, g.spacing());
    if r > n {
        return Err(Error::TimeTooLarge { radius: r, points: n });
    }
    let kernel = heat_kernel_1d(t, g.spacing());
    let shape = g.shape();
    let mut data = f.values.clone();
    for axis in 0..g.dim() {
        let inner: usize = shape[axis + 1..].iter().product();
        let src = data;
        let mut out = vec![0.0; src.len()];
        out.par_chunks_mut(n * inner).enumerate().for_each(|(o, block)| {
            let base = &src[o * n * inner..(o + 1) * n * inner];
            let mut line = vec![0.0; n + 2 * r];
            for q in 0..inner {
                for (kk, slot) in line.iter_mut().enumerate() {
                    let k = kk as isize - r as isize;
                    *slot = extended(f.ext, n, k, |i| base[i * inner + q]);
                }
                for i in 0..n {
                    let window = &line[i..i + 2 * r + 1];
                    let mut acc = 0.0;
                    for (w, v) in kernel.iter().zip(window) {
                        acc += w * v;
                    }
                    block[i * inner + q] = acc;
                }
            }
        });
        data = out;
    }
    Ok(ScalarField::from_parts(g, data, f.time, f.ext))
}

/// Kahan-compensated sum in index order.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `h^dim`-weighted sum of the node values.
///
/// Lines along the last axis are summed independently (possibly in
/// parallel) and the partial sums are then combined in line order, so the
/// result does not depend on the thread count.
pub fn integrate(f: &ScalarField) -> f64 {
    let n = f.grid.points();
    let partial: Vec<f64> = f.values.par_chunks(n).map(|line| kahan_sum(line.iter().copied())).collect();
    kahan_sum(partial) * f.grid.cell_volume()
}

/// Multilinear interpolation at a physical point inside the box. Points in
/// the half cell between the outermost nodes and the box face are
/// extrapolated from the nearest cell (wrapped on periodic grids).
pub fn sample(f: &ScalarField, p: &[f64]) -> Result<f64> {
    let g = &f.grid;
    if !g.contains(p) {
        return Err(Error::OutsideDomain(p.to_vec()));
    }
    let n = g.points();
    let periodic = matches!(f.ext, Extension::Periodic);
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..g.dim() {
        let x = (p[a] - g.lo(a)) / g.spacing() - 0.5;
        if periodic {
            let i0 = x.floor();
            frac[a] = x - i0;
            base[a] = (i0 as isize).rem_euclid(n as isize) as usize;
            next[a] = (base[a] + 1) % n;
        } else {
            let i0 = (x.floor().max(0.0) as usize).min(n - 2);
            frac[a] = x - i0 as f64;
            base[a] = i0;
            next[a] = i0 + 1;
        }
    }
    let corners = 1usize << g.dim();
    let mut acc = 0.0;
    for c in 0..corners {
        let mut ix = [0usize; 3];
        let mut w = 1.0;
        for a in 0..g.dim() {
            if c >> a & 1 == 1 {
                ix[a] = next[a];
                w *= frac[a];
            } else {
                ix[a] = base[a];
                w *= 1.0 - frac[a];
            }
        }
        acc += w * f.value_at(ix);
    }
    Ok(acc)
}

/// Paths of the two files making up a field snapshot.
pub fn snapshot_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("f64"), base.with_extension("meta"))
}

/// Writes the raw little-endian values (`<base>.f64`) and a key=value
/// metadata sidecar (`<base>.meta`).
pub fn write_field(f: &ScalarField, base: &Path) -> Result<()> {
    let (raw, meta) = snapshot_paths(base);
    let mut bytes = Vec::with_capacity(8 * f.values.len());
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(raw, bytes)?;
    let g = &f.grid;
    let join = |v: Vec<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut m = fs::File::create(meta)?;
    writeln!(m, "dim={}", g.dim())?;
    writeln!(m, "points_per_axis={}", g.points())?;
    writeln!(m, "extent_lo={}", join((0..g.dim()).map(|a| g.lo(a)).collect()))?;
    writeln!(m, "extent_hi={}", join((0..g.dim()).map(|a| g.hi(a)).collect()))?;
    writeln!(m, "time={}", f.time)?;
    writeln!(m, "boundary={}", g.boundary())?;
    Ok(())
}

/// Reads a snapshot written by [`write_field`].
pub fn read_field(base: &Path) -> Result<ScalarField> {
    let (raw, meta) = snapshot_paths(base);
    let text = fs::read_to_string(meta)?;
    let mut dim = None;
    let mut points = None;
    let mut lo = None;
    let mut hi = None;
    let mut time = None;
    let mut boundary = None;
    let floats = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Format(format!("{x}: {e}"))))
            .collect()
    };
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad line {line:?}")))?;
        match k.trim() {
            "dim" => dim = v.trim().parse::<usize>().ok(),
            "points_per_axis" => points = v.trim().parse::<usize>().ok(),
            "extent_lo" => lo = Some(floats(v)?),
            "extent_hi" => hi = Some(floats(v)?),
            "time" => time = v.trim().parse::<f64>().ok(),
            "boundary" => {
                let v = v.trim();
                boundary = if v == "periodic" {
                    Some(Boundary::Periodic)
                } else if let Some(c) = v.strip_prefix("far_field:") {
                    c.parse::<f64>().ok().map(Boundary::FarField)
                } else {
                    None
                }
            }
            other => return Err(Error::Format(format!("unknown key {other}"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("missing or malformed {k}"));
    let grid = Grid::new(
        dim.ok_or_else(|| missing("dim"))?,
        &lo.ok_or_else(|| missing("extent_lo"))?,
        &hi.ok_or_else(|| missing("extent_hi"))?,
        points.ok_or_else(|| missing("points_per_axis"))?,
        boundary.ok_or_else(|| missing("boundary"))?,
    )?;
    let bytes = fs::read(raw)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::Format(format!("expected {} bytes, found {}", 8 * grid.len(), bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ScalarField::new(grid, values, time.ok_or_else(|| missing("time"))?)
}

/// 8-bit grayscale PNG of a 2-D field, mapping [-1, 1] linearly onto
/// [0, 255]. The image's vertical axis is the field's second axis, pointing up.
pub fn export_png(f: &ScalarField, path: &Path) -> Result<()> {
    let g = &f.grid;
    if g.dim() != 2 {
        return Err(Error::Unsupported("image export needs a 2-D field".into()));
    }
    let n = g.points();
    let mut img = image::GrayImage::new(n as u32, n as u32);
    for i in 0..n {
        for j in 0..n {
            let v = f.value_at([i, j, 0]);
            let byte = ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round() as u8;
            img.put_pixel(i as u32, (n - 1 - j) as u32, image::Luma([byte]));
        }
    }
    img.save(path)?;
    Ok(())
}

//! Line-oriented run configuration: `key = value` pairs under `[section]`
//! headers, `#` comments. Keys before the first header are top-level.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use fattenlab_core::ac::Scheme;
use fattenlab_core::geometry::ShapeSpec;
use fattenlab_core::lsf::LsfScheme;
use fattenlab_core::shooting::{LeafDiscretization, SymmetryGroup, DEFAULT_KAPPA};
use fattenlab_core::{Boundary, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }

    fn global(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Shoot,
    Study,
    Verify,
    Energy,
    Lsf,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Self::Simulate,
            "shoot" => Self::Shoot,
            "study" => Self::Study,
            "verify" => Self::Verify,
            "energy" => Self::Energy,
            "lsf" => Self::Lsf,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Shoot => "shoot",
            Self::Study => "study",
            Self::Verify => "verify",
            Self::Energy => "energy",
            Self::Lsf => "lsf",
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["command", "output"]),
    ("shape", &["kind", "radius", "center", "iterations", "side", "vertices"]),
    ("grid", &["dim", "points", "lo", "hi", "boundary", "far_value"]),
    ("ac", &["epsilon", "scheme", "dt", "t_end", "snapshots", "log_snapshots", "early_snapshots", "leaf"]),
    (
        "shooting",
        &["target", "t0", "eta", "kappa", "shoot_tol", "eps_list", "leaves", "group", "transversal"],
    ),
    ("lsf", &["beta", "t_end", "snapshots", "band", "delta", "scheme"]),
    ("verify", &["dtilde_times", "barrier_constant"]),
    ("energy", &["probes"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridBlock {
    pub dim: usize,
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
    pub boundary: Boundary,
}

impl GridBlock {
    pub fn build(&self) -> fattenlab_core::Result<Grid> {
        Grid::new(self.dim, &vec![self.lo; self.dim], &vec![self.hi; self.dim], self.points, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcBlock {
    pub epsilons: Vec<f64>,
    pub scheme: Scheme,
    /// `None` means the explicit limit.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    /// Extra log-spaced snapshots in `(4 dt, ε²]`, per ε.
    pub early_snapshots: usize,
    pub leaf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingBlock {
    pub target: Vec<f64>,
    pub t0: f64,
    pub eta: f64,
    pub kappa: f64,
    pub shoot_tol: f64,
    pub eps_list: Vec<f64>,
    pub leaves: LeafDiscretization,
    pub group: Option<SymmetryGroup>,
    pub transversal: Option<([f64; 2], [f64; 2])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsfBlock {
    /// `None` picks the grid's default.
    pub scheme: Option<LsfScheme>,
    pub beta: f64,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub band: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyBlock {
    pub dtilde_times: Vec<f64>,
    pub barrier_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProbeSpec {
    pub point: Vec<f64>,
    pub t0: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub output: PathBuf,
    pub shape: ShapeSpec,
    pub grid: GridBlock,
    pub ac: Option<AcBlock>,
    pub shooting: Option<ShootingBlock>,
    pub lsf: Option<LsfBlock>,
    pub verify: Option<VerifyBlock>,
    pub energy: Vec<DensityProbeSpec>,
    /// The exact text parsed, hashed into every manifest.
    pub source: String,
}

#[derive(Debug, Default)]
struct Raw {
    sections: BTreeMap<String, (usize, BTreeMap<String, (String, usize)>)>,
}

fn tokenize(text: &str) -> Result<Raw> {
    let mut raw = Raw::default();
    raw.sections.insert(String::new(), (0, BTreeMap::new()));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(ln, "unterminated section header"))?
                .trim()
                .to_string();
            if !SECTIONS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(ConfigError::at(ln, format!("unknown section [{name}]")));
            }
            if raw.sections.contains_key(&name) {
                return Err(ConfigError::at(ln, format!("duplicate section [{name}]")));
            }
            raw.sections.insert(name.clone(), (ln, BTreeMap::new()));
            current = name;
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(ln, format!("expected key = value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let allowed = SECTIONS.iter().find(|(s, _)| *s == current).map(|(_, keys)| *keys).unwrap_or(&[]);
        if !allowed.contains(&k) {
            let where_ = if current.is_empty() { "top level".to_string() } else { format!("[{current}]") };
            return Err(ConfigError::at(ln, format!("unknown key {k:?} in {where_}")));
        }
        let section = &mut raw.sections.get_mut(&current).expect("inserted").1;
        if section.contains_key(k) {
            return Err(ConfigError::at(ln, format!("duplicate key {k:?}")));
        }
        section.insert(k.to_string(), (v.to_string(), ln));
    }
    Ok(raw)
}

/// Typed access to one section.
struct Section<'a> {
    name: &'a str,
    header: usize,
    keys: Option<&'a BTreeMap<String, (String, usize)>>,
}

impl<'a> Section<'a> {
    fn present(&self) -> bool {
        self.keys.is_some()
    }

    fn raw(&self, key: &str) -> Option<(&'a str, usize)> {
        self.keys.and_then(|m| m.get(key)).map(|(v, l)| (v.as_str(), *l))
    }

    fn missing(&self, key: &str) -> ConfigError {
        let loc = if self.name.is_empty() { "top level".to_string() } else { format!("[{}]", self.name) };
        ConfigError { line: (self.header > 0).then_some(self.header), message: format!("missing required key {key:?} in {loc}") }
    }

    fn str(&self, key: &str) -> Result<&'a str> {
        self.raw(key).map(|(v, _)| v).ok_or_else(|| self.missing(key))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| ConfigError::at(l, format!("{key}: expected a number, got {v:?}"))),
        }
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| ConfigError::at(l, format!("{key}: expected a non-negative integer, got {v:?}"))),
        }
    }

    fn opt_list(&self, key: &str) -> Result<Option<(Vec<f64>, usize)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, l)) => {
                let parsed: std::result::Result<Vec<f64>, _> = v
                    .split(|c| c == ',' || c == ';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse::<f64>)
                    .collect();
                match parsed {
                    Ok(xs) if xs.iter().all(|x| x.is_finite()) => Ok(Some((xs, l))),
                    _ => Err(ConfigError::at(l, format!("{key}: expected a comma-separated list of numbers, got {v:?}"))),
                }
            }
        }
    }

    fn list(&self, key: &str) -> Result<(Vec<f64>, usize)> {
        self.opt_list(key)?.ok_or_else(|| self.missing(key))
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map_or(self.header, |(_, l)| l)
    }
}

fn section<'a>(raw: &'a Raw, name: &'a str) -> Section<'a> {
    let entry = raw.sections.get(name);
    Section { name, header: entry.map_or(0, |e| e.0), keys: entry.map(|e| &e.1) }
}

fn fixed<const N: usize>(xs: &[f64], key: &str, line: usize) -> Result<[f64; N]> {
    xs.try_into().map_err(|_| ConfigError::at(line, format!("{key}: expected {N} numbers, got {}", xs.len())))
}

fn check_epsilon(eps: f64, line: usize) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::at(line, format!("epsilon must be in (0,1), got {eps}")))
    }
}

fn strictly_decreasing(xs: &[f64], key: &str, line: usize) -> Result<()> {
    if xs.windows(2).all(|w| w[1] < w[0]) {
        Ok(())
    } else {
        Err(ConfigError::at(line, format!("{key} must be strictly decreasing")))
    }
}

fn parse_shape(s: &Section<'_>) -> Result<ShapeSpec> {
    if !s.present() {
        return Err(ConfigError::global("missing section [shape]"));
    }
    let kind = s.str("kind")?;
    let point2 = |key: &str, default: [f64; 2]| -> Result<[f64; 2]> {
        match s.opt_list(key)? {
            None => Ok(default),
            Some((xs, l)) => fixed::<2>(&xs, key, l),
        }
    };
    let shape = match kind {
        "circle" => ShapeSpec::Circle { center: point2("center", [0.0, 0.0])?, radius: s.f64("radius")? },
        "figure_eight" => ShapeSpec::FigureEight { radius: s.f64("radius")? },
        "koch" => ShapeSpec::KochFlake {
            iterations: s.opt_usize("iterations")?.ok_or_else(|| s.missing("iterations"))? as u32,
            side: s.f64("side")?,
            center: point2("center", [0.0, 0.0])?,
        },
        "polyline" => {
            let (xs, l) = s.list("vertices")?;
            if xs.len() % 2 != 0 {
                return Err(ConfigError::at(l, "vertices: expected x, y pairs"));
            }
            ShapeSpec::Polyline { vertices: xs.chunks(2).map(|c| [c[0], c[1]]).collect() }
        }
        "sphere" => {
            let center = match s.opt_list("center")? {
                None => [0.0; 3],
                Some((xs, l)) => fixed::<3>(&xs, "center", l)?,
            };
            ShapeSpec::Sphere { center, radius: s.f64("radius")? }
        }
        other => {
            return Err(ConfigError::at(
                s.line("kind"),
                format!("unknown shape kind {other:?} (circle, figure_eight, koch, polyline, sphere)"),
            ))
        }
    };
    shape.validate().map_err(|e| ConfigError::at(s.line("kind"), e.to_string()))?;
    Ok(shape)
}

fn parse_grid(s: &Section<'_>, shape: &ShapeSpec) -> Result<GridBlock> {
    if !s.present() {
        return Err(ConfigError::global("missing section [grid]"));
    }
    let dim = s.opt_usize("dim")?.unwrap_or(shape.dim());
    if dim != shape.dim() {
        return Err(ConfigError::at(s.line("dim"), format!("grid dim {dim} does not match the shape's dimension {}", shape.dim())));
    }
    let points = s.opt_usize("points")?.ok_or_else(|| s.missing("points"))?;
    let lo = s.opt_f64("lo")?.unwrap_or(-1.0);
    let hi = s.opt_f64("hi")?.unwrap_or(1.0);
    let boundary = match s.raw("boundary").map(|(v, _)| v).unwrap_or("far_field") {
        "far_field" => Boundary::FarField(s.opt_f64("far_value")?.unwrap_or(-1.0)),
        "periodic" => Boundary::Periodic,
        other => return Err(ConfigError::at(s.line("boundary"), format!("unknown boundary {other:?} (far_field, periodic)"))),
    };
    let block = GridBlock { dim, points, lo, hi, boundary };
    block.build().map_err(|e| ConfigError::at(s.line("points"), e.to_string()))?;
    Ok(block)
}

fn sorted_times(xs: Vec<f64>, key: &str, line: usize, t_end: f64) -> Result<Vec<f64>> {
    let mut xs = xs;
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.iter().any(|&t| t < 0.0 || t > t_end) {
        return Err(ConfigError::at(line, format!("{key} must lie in [0, t_end = {t_end}]")));
    }
    Ok(xs)
}

fn parse_ac(s: &Section<'_>) -> Result<Option<AcBlock>> {
    if !s.present() {
        return Ok(None);
    }
    let (epsilons, el) = s.list("epsilon")?;
    if epsilons.is_empty() {
        return Err(ConfigError::at(el, "epsilon: at least one value required"));
    }
    for &e in &epsilons {
        check_epsilon(e, el)?;
    }
    strictly_decreasing(&epsilons, "epsilon", el)?;
    let scheme = match s.raw("scheme").map(|(v, _)| v).unwrap_or("explicit") {
        "explicit" => Scheme::ExplicitEuler,
        "semi_implicit" => Scheme::SemiImplicit,
        other => return Err(ConfigError::at(s.line("scheme"), format!("unknown scheme {other:?} (explicit, semi_implicit)"))),
    };
    let dt = match s.raw("dt") {
        None | Some(("auto", _)) => None,
        Some(_) => {
            let dt = s.f64("dt")?;
            if dt <= 0.0 {
                return Err(ConfigError::at(s.line("dt"), "dt must be positive"));
            }
            Some(dt)
        }
    };
    let t_end = s.f64("t_end")?;
    if t_end <= 0.0 {
        return Err(ConfigError::at(s.line("t_end"), "t_end must be positive"));
    }
    let mut snapshots = match s.opt_list("snapshots")? {
        Some((xs, l)) => sorted_times(xs, "snapshots", l, t_end)?,
        None => Vec::new(),
    };
    if let Some((xs, l)) = s.opt_list("log_snapshots")? {
        let [a, b, n] = fixed::<3>(&xs, "log_snapshots", l)?;
        if !(a > 0.0 && b > a && n >= 2.0 && n.fract() == 0.0) {
            return Err(ConfigError::at(l, "log_snapshots: expected start > 0, end > start, count >= 2"));
        }
        let n = n as usize;
        snapshots.extend((0..n).map(|k| a * (b / a).powf(k as f64 / (n - 1) as f64)));
        snapshots = sorted_times(snapshots, "log_snapshots", l, t_end)?;
    }
    if snapshots.is_empty() {
        snapshots.push(t_end);
    }
    let early_snapshots = s.opt_usize("early_snapshots")?.unwrap_or(0);
    let leaf = s.opt_f64("leaf")?.unwrap_or(0.0);
    Ok(Some(AcBlock { epsilons, scheme, dt, t_end, snapshots, early_snapshots, leaf }))
}

fn parse_shooting(s: &Section<'_>) -> Result<Option<ShootingBlock>> {
    if !s.present() {
        return Ok(None);
    }
    let (target, tl) = s.list("target")?;
    if target.is_empty() {
        return Err(ConfigError::at(tl, "target: point required"));
    }
    let t0 = s.f64("t0")?;
    if t0 <= 0.0 {
        return Err(ConfigError::at(s.line("t0"), "t0 must be positive"));
    }
    let eta = s.f64("eta")?;
    if eta <= 0.0 {
        return Err(ConfigError::at(s.line("eta"), "eta must be positive"));
    }
    let kappa = s.opt_f64("kappa")?.unwrap_or(DEFAULT_KAPPA);
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(ConfigError::at(s.line("kappa"), "kappa must be in (0, 0.5)"));
    }
    let shoot_tol = s.opt_f64("shoot_tol")?.unwrap_or(1e-3);
    if shoot_tol <= 0.0 {
        return Err(ConfigError::at(s.line("shoot_tol"), "shoot_tol must be positive"));
    }
    let eps_list = match s.opt_list("eps_list")? {
        Some((xs, l)) => {
            for &e in &xs {
                check_epsilon(e, l)?;
            }
            strictly_decreasing(&xs, "eps_list", l)?;
            xs
        }
        None => Vec::new(),
    };
    let leaves = match s.raw("leaves").map(|(v, _)| v).unwrap_or("cell_fraction") {
        "cell_fraction" => LeafDiscretization::CellFraction,
        "nodal" => LeafDiscretization::Nodal,
        other => return Err(ConfigError::at(s.line("leaves"), format!("unknown leaves {other:?} (cell_fraction, nodal)"))),
    };
    let group = match s.raw("group") {
        None => None,
        Some((v, l)) => Some(
            SymmetryGroup::parse(v)
                .ok_or_else(|| ConfigError::at(l, format!("unknown group {v:?} (D2, D4, reflection-x, reflection-y)")))?,
        ),
    };
    let transversal = match s.opt_list("transversal")? {
        None => None,
        Some((xs, l)) => {
            let [a, b, c, d] = fixed::<4>(&xs, "transversal", l)?;
            Some(([a, b], [c, d]))
        }
    };
    Ok(Some(ShootingBlock { target, t0, eta, kappa, shoot_tol, eps_list, leaves, group, transversal }))
}

fn parse_lsf(s: &Section<'_>) -> Result<Option<LsfBlock>> {
    if !s.present() {
        return Ok(None);
    }
    let scheme = match s.raw("scheme") {
        None => None,
        Some((v, l)) => Some(LsfScheme::parse(v).ok_or_else(|| ConfigError::at(l, format!("unknown lsf scheme {v:?} (median, central)")))?),
    };
    let beta = s.opt_f64("beta")?.unwrap_or(fattenlab_core::lsf::DEFAULT_BETA);
    if !(1e-8..=1e-4).contains(&beta) {
        return Err(ConfigError::at(s.line("beta"), "beta must be in [1e-8, 1e-4]"));
    }
    let t_end = s.opt_f64("t_end")?.unwrap_or(0.0);
    if t_end < 0.0 {
        return Err(ConfigError::at(s.line("t_end"), "t_end must be non-negative"));
    }
    let snapshots = match s.opt_list("snapshots")? {
        Some((xs, l)) => sorted_times(xs, "snapshots", l, t_end)?,
        None => vec![t_end],
    };
    let band = s.opt_f64("band")?;
    let delta = s.opt_f64("delta")?;
    if delta.is_some_and(|d| d < 0.0) {
        return Err(ConfigError::at(s.line("delta"), "delta must be non-negative"));
    }
    Ok(Some(LsfBlock { scheme, beta, t_end, snapshots, band, delta }))
}

fn parse_verify(s: &Section<'_>) -> Result<Option<VerifyBlock>> {
    if !s.present() {
        return Ok(None);
    }
    let dtilde_times = match s.opt_list("dtilde_times")? {
        Some((xs, l)) => {
            if xs.iter().any(|&t| t <= 0.0) {
                return Err(ConfigError::at(l, "dtilde_times must be positive"));
            }
            xs
        }
        None => vec![0.001, 0.0025, 0.005],
    };
    Ok(Some(VerifyBlock { dtilde_times, barrier_constant: s.opt_f64("barrier_constant")? }))
}

fn parse_probes(s: &Section<'_>, dim: usize) -> Result<Vec<DensityProbeSpec>> {
    let Some((v, l)) = s.raw("probes") else {
        return Ok(Vec::new());
    };
    v.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let xs: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| ConfigError::at(l, format!("probes: bad entry {p:?}")))?;
            if xs.len() != dim + 2 {
                return Err(ConfigError::at(l, format!("probes: each entry needs {dim} coordinates, t0 and r")));
            }
            let (t0, r) = (xs[dim], xs[dim + 1]);
            if !(r > 0.0 && r * r < t0) {
                return Err(ConfigError::at(l, format!("probes: need 0 < r and r² < t0, got r = {r}, t0 = {t0}")));
            }
            Ok(DensityProbeSpec { point: xs[..dim].to_vec(), t0, r })
        })
        .collect()
}

/// Parses and validates a configuration for `command`.
pub fn parse_config(text: &str, command: Command) -> Result<RunConfig> {
    let raw = tokenize(text)?;
    let top = section(&raw, "");
    if let Some((v, l)) = top.raw("command") {
        let c = Command::parse(v).ok_or_else(|| ConfigError::at(l, format!("unknown command {v:?}")))?;
        if c != command {
            return Err(ConfigError::at(l, format!("config is for {v:?}, invoked as {:?}", command.name())));
        }
    }
    let output = PathBuf::from(top.raw("output").map(|(v, _)| v).unwrap_or("fattenlab-out"));
    let shape = parse_shape(&section(&raw, "shape"))?;
    let grid = parse_grid(&section(&raw, "grid"), &shape)?;
    let ac = parse_ac(&section(&raw, "ac"))?;
    let shooting = parse_shooting(&section(&raw, "shooting"))?;
    let lsf = parse_lsf(&section(&raw, "lsf"))?;
    let verify = parse_verify(&section(&raw, "verify"))?;
    let energy = parse_probes(&section(&raw, "energy"), grid.dim)?;

    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::global(format!("command {} needs {what}", command.name())))
        }
    };
    match command {
        Command::Simulate | Command::Verify | Command::Energy => need(ac.is_some(), "an [ac] section")?,
        Command::Shoot => {
            need(ac.as_ref().is_some_and(|a| a.epsilons.len() == 1), "an [ac] section with a single epsilon")?;
            need(shooting.is_some(), "a [shooting] section")?;
        }
        Command::Study => {
            need(shooting.as_ref().is_some_and(|s| !s.eps_list.is_empty()), "a [shooting] section with eps_list")?;
            need(lsf.as_ref().is_some_and(|l| l.delta.is_some()), "an [lsf] section with delta")?;
        }
        Command::Lsf => need(lsf.as_ref().is_some_and(|l| l.t_end > 0.0), "an [lsf] section with t_end > 0")?,
    }
    if let Some(s) = &shooting {
        if s.target.len() != grid.dim {
            return Err(ConfigError::global(format!("target has {} coordinates, grid has dimension {}", s.target.len(), grid.dim)));
        }
    }
    Ok(RunConfig { command, output, shape, grid, ac, shooting, lsf, verify, energy, source: text.to_string() })
}

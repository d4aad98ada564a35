//! Command dispatch and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fattenlab_core::ac::{evolve, verify_solution_bounds, ACParams, ACSolution};
use fattenlab_core::barriers::{
    all_passed, compute_dtilde, reports_table, verify_gradient_barrier, verify_residual_signs, verify_u_barrier, BarrierReport,
};
use fattenlab_core::energy::{energy_sample, gaussian_density, total_energy_series};
use fattenlab_core::geometry::{contour_extract, leaf_initial_data, signed_distance, SignedDistanceField};
use fattenlab_core::grid::{export_png, write_field};
use fattenlab_core::lsf::{fattening_measure, inner_outer_envelopes_with, lsf_evolve_with, sandwich_check, LsfScheme, NodalSet};
use fattenlab_core::shooting::{bisect_leaf, diagonal_study, symmetry_and_multiplicity, FoliationSpec, ShootingResult, Target};
use fattenlab_core::{Error, ScalarField};

use crate::config::{AcBlock, Command, RunConfig};

/// Environment variable naming the directory relative output paths live under.
pub const OUTPUT_ROOT_VAR: &str = "FATTENLAB_OUT";

/// Symmetry deviation allowed for a study field.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug)]
pub enum RunError {
    /// Bad input detected before or during setup.
    Validation(String),
    /// The numerics gave up.
    Numerical(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "invalid input: {m}"),
            RunError::Numerical(m) => write!(f, "numerical abort: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidGrid(_)
            | Error::GridMismatch
            | Error::InvalidParameter(_)
            | Error::OutsideDomain(_)
            | Error::ShapeTouchesBoundary { .. }
            | Error::DtViolation { .. }
            | Error::IncompatibleGroup(_)
            | Error::Unsupported(_)
            | Error::Format(_)
            | Error::Io(_) => RunError::Validation(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Validation(format!("cannot write output: {e}"))
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// What a finished run found.
#[derive(Debug, Default)]
pub struct Outcome {
    pub directory: PathBuf,
    /// Report rows above tolerance; nonzero fails a strict run.
    pub violations: usize,
    pub summary: Vec<String>,
}

impl Outcome {
    fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    fn flag(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.note(format!("ok: {what}"));
        } else {
            self.violations += 1;
            self.note(format!("VIOLATION: {what}"));
        }
    }
}

/// Resolves the configured output path against the output root.
pub fn output_dir(config: &RunConfig) -> PathBuf {
    if config.output.is_absolute() {
        return config.output.clone();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) => PathBuf::from(root).join(&config.output),
        None => config.output.clone(),
    }
}

pub fn config_hash(source: &str) -> String {
    hex::encode(Sha256::digest(source.as_bytes()))
}

/// Files written under one directory, listed in its manifest.
struct Artifacts {
    root: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(rel.to_string());
        Ok(p)
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(p, body)?;
        Ok(())
    }

    fn field(&mut self, rel: &str, f: &ScalarField) -> Result<()> {
        let base = self.root.join(rel);
        if let Some(parent) = base.parent() {
            fs::create_dir_all(parent)?;
        }
        write_field(f, &base)?;
        self.files.push(format!("{rel}.f64"));
        self.files.push(format!("{rel}.meta"));
        Ok(())
    }

    fn png(&mut self, rel: &str, f: &ScalarField) -> Result<()> {
        if f.grid().dim() == 2 {
            let p = self.path(rel)?;
            export_png(f, &p)?;
        }
        Ok(())
    }

    fn contour(&mut self, rel: &str, f: &ScalarField) -> Result<()> {
        if f.grid().dim() == 2 {
            let c = contour_extract(f, 0.0)?;
            let p = self.path(rel)?;
            c.write_text(&p)?;
        }
        Ok(())
    }

    fn manifest(&mut self, config: &RunConfig, extra: &str) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "fattenlab {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "fattenlab-core {}", fattenlab_core::VERSION);
        let _ = writeln!(s, "command = {}", config.command.name());
        let _ = writeln!(s, "config_sha256 = {}", config_hash(&config.source));
        let _ = writeln!(s, "shape = {:?}", config.shape);
        let g = &config.grid;
        let _ = writeln!(s, "grid = dim {} points {} extent [{}, {}] boundary {:?}", g.dim, g.points, g.lo, g.hi, g.boundary);
        s.push_str(extra);
        s.push_str("[files]\n");
        let mut files = self.files.clone();
        files.sort();
        for f in files {
            let _ = writeln!(s, "{f}");
        }
        fs::write(self.root.join("manifest.txt"), s)?;
        Ok(())
    }
}

fn eps_dir(eps: f64) -> String {
    format!("eps_{eps}")
}

fn params_for(config: &RunConfig, ac: &AcBlock, eps: f64) -> Result<ACParams> {
    let grid = config.grid.build()?;
    let mut p = ACParams::explicit(&grid, eps, ac.t_end, ac.snapshots.clone()).with_scheme(ac.scheme);
    if let Some(dt) = ac.dt {
        p = p.with_dt(dt);
    }
    if ac.early_snapshots >= 2 {
        let (a, b) = (4.0 * p.dt, (eps * eps).min(ac.t_end));
        let n = ac.early_snapshots;
        if b > a {
            p.snapshot_times.extend((1..=n).map(|k| a * (b / a).powf(k as f64 / n as f64)));
        }
    }
    p.snapshot_times.sort_by(f64::total_cmp);
    p.snapshot_times.dedup();
    p.validate(&grid)?;
    Ok(p)
}

fn sdf_for(config: &RunConfig) -> Result<SignedDistanceField> {
    let grid = config.grid.build()?;
    Ok(signed_distance(&config.shape, &grid)?)
}

fn solve(config: &RunConfig, ac: &AcBlock, sdf: &SignedDistanceField, eps: f64) -> Result<ACSolution> {
    let p = params_for(config, ac, eps)?;
    let u0 = leaf_initial_data(sdf, ac.leaf)?;
    Ok(evolve(&u0, &p)?)
}

fn params_text(p: &ACParams) -> String {
    format!(
        "epsilon = {}\ndt = {}\nscheme = {:?}\nt_end = {}\nsnapshots = {}\n",
        p.epsilon,
        p.dt,
        p.scheme,
        p.t_end,
        p.snapshot_times.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
    )
}

/// Validates everything that can be checked cheaply before any artifact
/// exists, then runs the command.
pub fn run(config: &RunConfig) -> Result<Outcome> {
    let sdf = sdf_for(config)?;
    if let Some(ac) = &config.ac {
        for &eps in &ac.epsilons {
            params_for(config, ac, eps)?;
        }
        leaf_initial_data(&sdf, ac.leaf)?;
    }
    let dir = output_dir(config);
    let mut out = match config.command {
        Command::Simulate => simulate(config, &sdf, &dir)?,
        Command::Shoot => shoot(config, sdf, &dir)?,
        Command::Study => study(config, sdf, &dir)?,
        Command::Verify => verify(config, &sdf, &dir)?,
        Command::Energy => energy(config, &sdf, &dir)?,
        Command::Lsf => lsf(config, &sdf, &dir)?,
    };
    out.directory = dir;
    Ok(out)
}

fn simulate(config: &RunConfig, sdf: &SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let ac = config.ac.as_ref().expect("validated");
    let mut out = Outcome::default();
    let mut top = Artifacts::new(dir)?;
    for &eps in &ac.epsilons {
        let sol = solve(config, ac, sdf, eps)?;
        let sub = eps_dir(eps);
        let mut a = Artifacts::new(&dir.join(&sub))?;
        for (k, s) in sol.snapshots.iter().enumerate() {
            a.field(&format!("u_{k:03}"), s)?;
            a.png(&format!("u_{k:03}.png"), s)?;
            a.contour(&format!("contour_{k:03}.txt"), s)?;
        }
        let bounds = verify_solution_bounds(&sol);
        a.text("bounds.tsv", &bounds.to_table())?;
        out.flag(bounds.passed(), format!("eps={eps}: sup-norm and gradient bounds ({} rows)", bounds.rows.len()));
        match total_energy_series(&sol) {
            Ok(rep) => {
                a.text("energy.tsv", &rep.to_table())?;
                a.text("energy_fit.txt", &rep.fit_summary())?;
                out.flag(rep.monotone(), format!("eps={eps}: energy non-increasing after t_min"));
                out.note(format!("eps={eps}: fitted exponent {:.4}", rep.fit.exponent));
            }
            Err(Error::NotEnoughSnapshots { .. }) => {
                let mut s = String::from("t\tE\tkinetic\tpotential\txi_plus\n");
                for snap in &sol.snapshots {
                    let e = energy_sample(snap, eps);
                    let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", e.time, e.total, e.kinetic, e.potential, e.discrepancy_plus);
                }
                a.text("energy.tsv", &s)?;
                out.note(format!("eps={eps}: too few snapshots in (0, eps^2] for an exponent fit"));
            }
            Err(e) => return Err(e.into()),
        }
        let extra = format!("{}steps = {}\n", params_text(&sol.params), sol.steps);
        a.manifest(config, &extra)?;
        top.files.push(format!("{sub}/manifest.txt"));
    }
    top.manifest(config, "")?;
    Ok(out)
}

fn shooting_text(r: &ShootingResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "epsilon = {}", r.epsilon);
    let _ = writeln!(s, "target = {:?}", r.target.point);
    let _ = writeln!(s, "t0 = {}", r.target.time);
    let _ = writeln!(s, "s_star = {}", r.s_star);
    let _ = writeln!(s, "value = {}", r.value);
    let _ = writeln!(s, "residual = {}", r.residual);
    let _ = writeln!(s, "converged = {}", r.converged);
    let _ = writeln!(s, "iterations = {}", r.iterations);
    let _ = writeln!(s, "bracket = {}, {}", r.bracket.0, r.bracket.1);
    let _ = writeln!(s, "neighbours = {}, {}", r.neighbours.0, r.neighbours.1);
    match r.flat_interval {
        Some((a, b)) => {
            let _ = writeln!(s, "flat_interval = {a}, {b}");
        }
        None => s.push_str("flat_interval = none\n"),
    }
    let _ = writeln!(s, "history_monotone = {}", r.history_monotone());
    s
}

fn foliation(config: &RunConfig, sdf: SignedDistanceField) -> Result<FoliationSpec> {
    let sh = config.shooting.as_ref().expect("validated");
    let spec = FoliationSpec::from_sdf(sdf, sh.eta)?.with_kappa(sh.kappa).with_leaves(sh.leaves);
    if spec.grid().dim() == 2 {
        spec.check_end_leaves()?;
    }
    Ok(spec)
}

fn shoot(config: &RunConfig, sdf: SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let sh = config.shooting.as_ref().expect("validated");
    let eps = config.ac.as_ref().expect("validated").epsilons[0];
    let spec = foliation(config, sdf)?;
    let target = Target::new(&sh.target, sh.t0);
    let r = bisect_leaf(&spec, eps, &target, sh.shoot_tol)?;
    let mut out = Outcome::default();
    let mut a = Artifacts::new(dir)?;
    a.text("history.tsv", &r.history_table())?;
    a.text("result.txt", &shooting_text(&r))?;
    out.flag(r.converged && r.residual <= sh.shoot_tol, format!("bisection residual {:.3e} <= {}", r.residual, sh.shoot_tol));
    out.flag(r.history_monotone(), "value non-increasing in s along the bracket history");
    out.note(format!("s* = {}", r.s_star));
    let extra = format!("leaves = {}\neta = {}\nkappa = {}\n", spec.leaves().name(), spec.eta(), spec.kappa());
    a.manifest(config, &extra)?;
    Ok(out)
}

fn study(config: &RunConfig, sdf: SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let sh = config.shooting.as_ref().expect("validated");
    let lb = config.lsf.as_ref().expect("validated");
    let delta = lb.delta.expect("validated");
    let spec = foliation(config, sdf.clone())?;
    let target = Target::new(&sh.target, sh.t0);
    // the level-set envelopes do not depend on ε; run them alongside
    let (study, env) = rayon::join(
        || diagonal_study(&spec, &target, &sh.eps_list, sh.shoot_tol),
        || inner_outer_envelopes_with(&sdf, delta, &[sh.t0], lb.beta, lsf_scheme(lb, &sdf)),
    );
    let (study, env) = (study?, env?);
    let mut out = Outcome::default();
    let mut top = Artifacts::new(dir)?;

    for e in &study.entries {
        let eps = e.shooting.epsilon;
        let sub = eps_dir(eps);
        let mut a = Artifacts::new(&dir.join(&sub))?;
        a.text("history.tsv", &e.shooting.history_table())?;
        a.text("result.txt", &shooting_text(&e.shooting))?;
        a.field("u_t0", &e.field)?;
        a.png("u_t0.png", &e.field)?;
        let p = a.path("nodal_contour.txt")?;
        e.contour.write_text(&p)?;
        let extra = format!(
            "epsilon = {eps}\ns_star = {}\ntarget_distance = {}\nlocal_mass = {}\n",
            e.shooting.s_star, e.target_distance, e.local_mass
        );
        a.manifest(config, &extra)?;
        top.files.push(format!("{sub}/manifest.txt"));
        out.flag(
            e.shooting.converged && e.shooting.residual <= sh.shoot_tol,
            format!("eps={eps}: bisection residual {:.3e}", e.shooting.residual),
        );
        out.flag(
            e.target_distance <= 2.0 * study.spacing,
            format!("eps={eps}: nodal contour within 2h of target ({:.3e})", e.target_distance),
        );
        out.flag(e.shooting.history_monotone(), format!("eps={eps}: value non-increasing in s"));
    }
    if let Some((eps, msg)) = &study.aborted {
        out.flag(false, format!("study aborted at eps={eps}: {msg}"));
    }
    out.note(format!(
        "local mass >= sigma*rho_loc: {}; hausdorff non-increasing: {} ({:?})",
        study.local_mass_ok(),
        study.hausdorff_non_increasing(),
        study.hausdorff
    ));
    top.text("study.tsv", &study.summary_table())?;

    let mut hs = String::from("pair\thausdorff\n");
    for (i, h) in study.hausdorff.iter().enumerate() {
        let _ = writeln!(hs, "{}-{}\t{h}", study.epsilons[i], study.epsilons[i + 1]);
    }
    top.text("hausdorff.tsv", &hs)?;

    if let Some(group) = sh.group {
        let rep = symmetry_and_multiplicity(&study, group, sh.transversal)?;
        top.text("symmetry.txt", &rep.to_text())?;
        out.flag(
            rep.max_deviation() <= SYMMETRY_TOLERANCE,
            format!("{} symmetry deviation {:.3e}", group.name(), rep.max_deviation()),
        );
    }

    let p = top.path("envelopes/inner_contour.txt")?;
    env.inner_contours[0].write_text(&p)?;
    let p = top.path("envelopes/outer_contour.txt")?;
    env.outer_contours[0].write_text(&p)?;
    let nodal: Vec<NodalSet<'_>> =
        study.entries.iter().map(|e| NodalSet { epsilon: e.shooting.epsilon, contour: &e.contour }).collect();
    let sandwich = sandwich_check(&nodal, &env)?;
    top.text("sandwich.tsv", &sandwich.to_table())?;
    out.flag(sandwich.passed(), format!("sandwich between delta={delta} envelopes"));
    let containment = env.containment_excess(0)?;
    out.flag(containment <= 2.0 * study.spacing, format!("envelope containment excess {containment:.3e}"));

    let extra = format!(
        "target = {:?}\nt0 = {}\neta = {}\nkappa = {}\nleaves = {}\nshoot_tol = {}\neps_list = {:?}\nrho_loc = {}\ndelta = {delta}\nlsf_scheme = {}\nbeta = {}\nenvelope_inner_components = {}\nenvelope_outer_components = {}\n",
        sh.target,
        sh.t0,
        sh.eta,
        sh.kappa,
        sh.leaves.name(),
        sh.shoot_tol,
        sh.eps_list,
        study.rho_loc,
        lsf_scheme(lb, &sdf).name(),
        lb.beta,
        env.inner_contours[0].components(),
        env.outer_contours[0].components()
    );
    top.manifest(config, &extra)?;
    Ok(out)
}

fn verify(config: &RunConfig, sdf: &SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let ac = config.ac.as_ref().expect("validated");
    let vb = config.verify.clone().unwrap_or(crate::config::VerifyBlock { dtilde_times: vec![0.001, 0.0025, 0.005], barrier_constant: None });
    let dim = config.grid.dim as f64;
    let c = vb.barrier_constant.unwrap_or(4.0 * dim.sqrt());
    let mut out = Outcome::default();
    let mut top = Artifacts::new(dir)?;

    let sd = compute_dtilde(sdf, &vb.dtilde_times)?;
    top.text("dtilde.tsv", &sd.properties_table())?;
    for p in &sd.properties {
        out.flag(p.passed(), format!("dtilde at t={}: supports {}", p.time, p.supported_constant()));
    }

    for &eps in &ac.epsilons {
        let sol = solve(config, ac, sdf, eps)?;
        let sub = eps_dir(eps);
        let mut a = Artifacts::new(&dir.join(&sub))?;
        let bounds = verify_solution_bounds(&sol);
        a.text("bounds.tsv", &bounds.to_table())?;
        out.flag(bounds.passed(), format!("eps={eps}: sup-norm and gradient bounds"));

        let cut = sol.params.early_cutoff();
        let early: Vec<f64> = sol.times().into_iter().filter(|&t| t > 0.0 && t <= cut).collect();
        let mut reports: Vec<BarrierReport> = Vec::new();
        if !early.is_empty() {
            let sd_early = compute_dtilde(sdf, &early)?;
            reports.extend(verify_residual_signs(&sd_early, eps, c));
        }
        reports.extend(verify_u_barrier(&sol, sdf)?.into_iter().filter(|r| r.time <= cut));
        reports.extend(verify_gradient_barrier(&sol, sdf)?);
        a.text("barriers.tsv", &reports_table(&reports))?;
        let gating = reports.iter().filter(|r| r.gating && !r.passed()).count();
        out.flag(all_passed(&reports), format!("eps={eps}: barrier suite ({gating} failing rows, {} rows)", reports.len()));
        a.manifest(config, &format!("{}barrier_constant = {c}\n", params_text(&sol.params)))?;
        top.files.push(format!("{sub}/manifest.txt"));
    }
    top.manifest(config, &format!("dtilde_times = {:?}\n", vb.dtilde_times))?;
    Ok(out)
}

fn energy(config: &RunConfig, sdf: &SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let ac = config.ac.as_ref().expect("validated");
    let mut out = Outcome::default();
    let mut top = Artifacts::new(dir)?;
    let mut xi_rows = Vec::new();
    let mut density = String::from("epsilon\tpoint\tt0\tr\tsnapshot_time\ttheta\n");
    for &eps in &ac.epsilons {
        let mut block = ac.clone();
        if block.early_snapshots < 4 {
            block.early_snapshots = 24;
        }
        let sol = solve(config, &block, sdf, eps)?;
        let rep = total_energy_series(&sol)?;
        let sub = eps_dir(eps);
        let mut a = Artifacts::new(&dir.join(&sub))?;
        a.text("energy.tsv", &rep.to_table())?;
        a.text("energy_fit.txt", &rep.fit_summary())?;
        out.flag(rep.monotone(), format!("eps={eps}: energy non-increasing after t_min"));
        out.flag(rep.envelope_bounded(), format!("eps={eps}: t*E^2 bounded on (0, eps^2]"));
        out.note(format!("eps={eps}: fitted exponent {:.4} on ({:.3e}, {:.3e}]", rep.fit.exponent, rep.fit.t_min, rep.fit.t_max));
        if let Some(s) = rep.samples.iter().filter(|s| s.time <= sol.params.early_cutoff()).last() {
            xi_rows.push((eps, s.time, s.discrepancy_plus));
        }
        for probe in &config.energy {
            let d = gaussian_density(&sol, &probe.point, probe.t0, probe.r)?;
            let _ = writeln!(density, "{eps}\t{:?}\t{}\t{}\t{}\t{}", d.point, d.t0, d.radius, d.snapshot_time, d.value);
        }
        a.manifest(config, &params_text(&sol.params))?;
        top.files.push(format!("{sub}/manifest.txt"));
    }
    let mut xs = String::from("epsilon\ttime\txi_plus\n");
    for (e, t, x) in &xi_rows {
        let _ = writeln!(xs, "{e}\t{t}\t{x}");
    }
    top.text("discrepancy.tsv", &xs)?;
    if xi_rows.len() > 1 {
        let decreasing = xi_rows.windows(2).all(|w| w[1].2 < w[0].2);
        out.flag(decreasing, "discrepancy positive part at eps^2 strictly decreases along the epsilon list");
    }
    if !config.energy.is_empty() {
        top.text("density.tsv", &density)?;
    }
    top.manifest(config, "")?;
    Ok(out)
}

fn lsf_scheme(lb: &crate::config::LsfBlock, sdf: &SignedDistanceField) -> LsfScheme {
    lb.scheme.unwrap_or_else(|| LsfScheme::default_for(sdf.grid()))
}

fn lsf(config: &RunConfig, sdf: &SignedDistanceField, dir: &Path) -> Result<Outcome> {
    let lb = config.lsf.as_ref().expect("validated");
    let h = sdf.grid().spacing();
    let scheme = lsf_scheme(lb, sdf);
    let phi0 = sdf.field().clone().with_extension(fattenlab_core::Extension::Linear);
    let sol = lsf_evolve_with(&phi0, lb.t_end, &lb.snapshots, lb.beta, scheme)?;
    let band = lb.band.unwrap_or_else(|| sol.default_band());
    let mut out = Outcome::default();
    let mut a = Artifacts::new(dir)?;
    let mut fat = String::from("time\tband\tarea_band\tarea_double\texcess\tperimeter\tfattened\tmean_grad_band\n");
    for (k, s) in sol.snapshots.iter().enumerate() {
        a.field(&format!("phi_{k:03}"), s)?;
        a.contour(&format!("contour_{k:03}.txt"), s)?;
        if s.grid().dim() == 2 {
            let f = fattening_measure(&sol, s.time(), band)?;
            let g = sol.band_gradient_mean(k, band).map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(fat, "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{g}", f.time, f.band, f.area_band, f.area_double, f.excess, f.perimeter, f.fattened);
        }
    }
    a.text("fattening.tsv", &fat)?;
    out.flag(sol.sup_growth() <= 0.0, format!("sup-norm non-expanding (growth {:.3e})", sol.sup_growth()));
    if let Some(delta) = lb.delta {
        let env = inner_outer_envelopes_with(sdf, delta, &lb.snapshots, lb.beta, scheme)?;
        for (k, t) in env.times.iter().enumerate() {
            let p = a.path(&format!("envelopes/inner_{k:03}.txt"))?;
            env.inner_contours[k].write_text(&p)?;
            let p = a.path(&format!("envelopes/outer_{k:03}.txt"))?;
            env.outer_contours[k].write_text(&p)?;
            let excess = env.containment_excess(k)?;
            out.flag(excess <= 2.0 * h, format!("t={t}: outer region inside inner region (excess {excess:.3e})"));
        }
    }
    let extra = format!(
        "scheme = {}\nbeta = {}\ndt = {}\nmedian_radius = {}\nt_end = {}\nsnapshots = {:?}\nband = {band}\ndelta = {:?}\n",
        scheme.name(),
        lb.beta,
        sol.dt,
        sol.radius,
        lb.t_end,
        lb.snapshots,
        lb.delta
    );
    a.manifest(config, &extra)?;
    Ok(out)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Parses, runs and reports; returns the process exit status.
pub fn execute(command: Command, config_text: &str, strict: bool) -> i32 {
    let config = match crate::config::parse_config(config_text, command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_INVALID;
        }
    };
    match run(&config) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            println!("artifacts in {}", out.directory.display());
            if strict && out.violations > 0 {
                eprintln!("{} report violation(s) above tolerance", out.violations);
                EXIT_VIOLATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("{e}");
            match e {
                RunError::Validation(_) => EXIT_INVALID,
                RunError::Numerical(_) => EXIT_NUMERICAL,
            }
        }
    }
}

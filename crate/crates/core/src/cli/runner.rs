//! The `bound`, `propa`, `relax` and `replay` pipelines.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::observe::{level_populations, ExpectationRecord};
use crate::propagators::{propagate, relax, relax_excited, Method, RelaxOptions, StepView, TimeGrid};
use crate::stationary::{expectations_bound, solve_bound_states};
use crate::system::{init_gauss, init_morse_eigenstate, product_state, SystemSpec, WaveFunction};

use super::checkpoint::{CheckpointHeader, CheckpointReader, CheckpointWriter, PayloadKind};
use super::config::{Handle, InitDof, RunSpec, HANDLES};
use super::frames;

/// Where a run writes and whether it exports frames.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub frames: bool,
}

/// Named scalar results of a run, for sweeps and summaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub scalars: BTreeMap<String, f64>,
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn build_system(spec: &RunSpec) -> Result<SystemSpec> {
    SystemSpec::assemble(spec.grid.clone(), spec.n_eqs, &spec.pot, &spec.dip, spec.nip.as_ref())
}

/// Product state from `psi.init`, normalized. On an adiabatic surface the
/// state is rotated back into the diabatic channels point by point.
pub fn initial_state(spec: &RunSpec, sys: &SystemSpec) -> Result<WaveFunction> {
    let init = spec
        .init
        .as_ref()
        .ok_or_else(|| Error::config("psi.init", "missing required section: the initial state"))?;
    let grid = sys.grid();
    let amps = init
        .dofs
        .iter()
        .zip(grid.dofs())
        .enumerate()
        .map(|(k, (d, g))| {
            match *d {
                InitDof::Gauss { pos_0, width, mom_0 } => init_gauss(g, pos_0, width, mom_0),
                InitDof::Morse { d_e, r_e, alf, n } => init_morse_eigenstate(g, d_e, r_e, alf, g.mass(), n),
            }
            .map_err(|e| match e {
                Error::Config { field, message } => {
                    Error::Config { field: format!("psi.init.dof.{}.{field}", k + 1), message }
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut psi = product_state(grid, &amps, init.channel, spec.n_eqs)?;
    if init.adiabatic && spec.n_eqs > 1 {
        let nu = spec.n_eqs;
        let e = sys.potential_eigen();
        let phi: Vec<C64> = psi.channels[init.channel].iter().copied().collect();
        for (a, c) in psi.channels.iter_mut().enumerate() {
            for (p, v) in c.iter_mut().enumerate() {
                *v = phi[p] * e.vectors[p * nu * nu + a * nu + init.channel];
            }
        }
    }
    psi.normalize(grid.weights())?;
    Ok(psi)
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn write_row(w: &mut csv::Writer<File>, path: &Path, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(csv_err(path))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn record_columns(ndim: usize, nu: usize) -> Vec<String> {
    let mut h: Vec<String> = vec!["norm".into()];
    h.extend((1..=nu).map(|c| format!("population_{c}")));
    for name in ["position", "position_unc", "momentum", "momentum_unc"] {
        h.extend((1..=ndim).map(|k| format!("{name}_{k}")));
    }
    h.extend(["potential", "kinetic", "total", "field", "dipole", "autocorrelation_re", "autocorrelation_im"].map(String::from));
    h
}

fn record_values(r: &ExpectationRecord) -> Vec<String> {
    let mut v = vec![fmt(r.norm)];
    v.extend(r.populations.iter().map(|x| fmt(*x)));
    for xs in [&r.position, &r.position_unc, &r.momentum, &r.momentum_unc] {
        v.extend(xs.iter().map(|x| fmt(*x)));
    }
    v.extend(
        [r.potential, r.kinetic, r.total, r.field, r.dipole, r.autocorrelation.re, r.autocorrelation.im].map(fmt),
    );
    v
}

fn save_dir(spec: &RunSpec, ctx: &RunContext) -> PathBuf {
    match &spec.save.dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => ctx.out_dir.join(d),
        None => ctx.out_dir.clone(),
    }
}

fn checkpoint_writer(spec: &RunSpec, ctx: &RunContext, kind: PayloadKind) -> Result<Option<CheckpointWriter>> {
    if !spec.save.export {
        return Ok(None);
    }
    let header = CheckpointHeader { grid: spec.grid.clone(), n_channels: spec.n_eqs, kind, config: spec.echo.clone() };
    let dir = save_dir(spec, ctx);
    info!("saving wavefunctions to {}", super::checkpoint::header_path(&dir, &spec.save.file).display());
    CheckpointWriter::create(&dir, &spec.save.file, &header).map(Some)
}

/// Writes frames (and, for reduced densities, a purity row) of one step.
struct FrameSink {
    dir: PathBuf,
    stem: String,
    plot: super::config::PlotSpec,
    purity: Option<(csv::Writer<File>, PathBuf)>,
}

impl FrameSink {
    fn new(spec: &RunSpec, ctx: &RunContext) -> Result<Option<Self>> {
        let plot = match (spec.plot, ctx.frames) {
            (Some(p), true) => p,
            _ => return Ok(None),
        };
        frames::check_kind(&spec.grid, plot.kind, plot.representation)?;
        let dir = ctx.out_dir.join("frames");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let purity = match plot.kind {
            super::config::PlotKind::Reduced => {
                let path = ctx.out_dir.join(format!("{}_purity.csv", spec.stem));
                let mut w = create(&path)?;
                let mut head = vec!["step".to_string(), "t".to_string()];
                head.extend((1..=spec.grid.ndim()).map(|k| format!("purity_{k}")));
                write_row(&mut w, &path, &head)?;
                Some((w, path))
            }
            _ => None,
        };
        Ok(Some(FrameSink { dir, stem: spec.stem.clone(), plot, purity }))
    }

    fn write(&mut self, grid: &crate::grids::ProductGrid, step: u64, t: f64, psi: &WaveFunction) -> Result<()> {
        if step % self.plot.every as u64 != 0 {
            return Ok(());
        }
        let f = frames::compute(grid, psi, self.plot.kind, self.plot.representation)?;
        for (name, frame) in &f.frames {
            let base = self.dir.join(format!("{}_{name}_{step:05}", self.stem));
            frames::write_frame(&base.with_extension("qwf"), frame)?;
            if self.plot.png {
                frames::write_png(&base.with_extension("png"), name, frame)?;
            }
        }
        if let (Some((w, path)), Some(p)) = (self.purity.as_mut(), f.purities) {
            let mut row = vec![step.to_string(), fmt(t)];
            row.extend(p.into_iter().map(fmt));
            write_row(w, path, &row)?;
        }
        Ok(())
    }
}

pub fn run_bound(spec: &RunSpec, ctx: &RunContext) -> Result<RunSummary> {
    let eigen = spec
        .eigen
        .ok_or_else(|| Error::config("psi.eigen.stop", "missing required field: the highest state index"))?;
    let sys = build_system(spec)?;
    if sys.nip().is_some() {
        info!("absorber ignored for bound states");
    }
    let start = Instant::now();
    let res = solve_bound_states(&sys, eigen.stop, &eigen.options)?;
    info!("{} states by {:?} diagonalization in {:.2?}", res.energies.len(), res.method, start.elapsed());
    let recs = expectations_bound(&res, &sys)?;
    let path = ctx.out_dir.join("expect.csv");
    let mut w = create(&path)?;
    let mut head = vec!["state".to_string(), "energy".to_string()];
    head.extend(record_columns(sys.grid().ndim(), sys.n_channels()));
    write_row(&mut w, &path, &head)?;
    let mut ckpt = checkpoint_writer(spec, ctx, PayloadKind::Eigenstates)?;
    let mut sink = FrameSink::new(spec, ctx)?;
    let mut summary = RunSummary::default();
    for (n, (e, r)) in res.energies.iter().zip(&recs).enumerate() {
        info!("state {n:3}: energy {:.12e}  <R> {:?}", e, r.position);
        let mut row = vec![n.to_string(), fmt(*e)];
        row.extend(record_values(r));
        write_row(&mut w, &path, &row)?;
        summary.scalars.insert(format!("energy.{n}"), *e);
        if let Some(c) = ckpt.as_mut() {
            c.push(n as u64, *e, &res.states[n])?;
        }
        if let Some(s) = sink.as_mut() {
            s.write(sys.grid(), n as u64, *e, &res.states[n])?;
        }
    }
    if let Some(c) = ckpt {
        c.finish()?;
    }
    Ok(summary)
}

fn time_grid(spec: &RunSpec) -> Result<TimeGrid> {
    spec.time
        .ok_or_else(|| Error::config("time.main", "missing required section: time.main.delta and time.main.stop"))
}

pub fn run_propa(spec: &RunSpec, ctx: &RunContext) -> Result<RunSummary> {
    let time = time_grid(spec)?;
    let method = match spec.propa.handle.unwrap_or(Handle::Splitting) {
        Handle::ChebyReal => Method::Cheby { precision: spec.propa.precision, delta_e: spec.truncate },
        Handle::Splitting => Method::Split(spec.propa.order),
        Handle::Sod => Method::Sod,
        Handle::ChebyImag => {
            return Err(Error::config(
                "time.propa.handle",
                format!("cheby_imag relaxes toward bound states; use `qdynkit relax`, or one of {}", HANDLES.join(", ")),
            ))
        }
    };
    let sys = build_system(spec)?;
    let psi0 = initial_state(spec, &sys)?;
    let levels = match spec.eigen {
        Some(e) => {
            let res = solve_bound_states(&sys, e.stop, &e.options)?;
            info!("populations against {} eigenstates", res.states.len());
            Some(res.states)
        }
        None => None,
    };
    let path = ctx.out_dir.join("expect.csv");
    let mut w = create(&path)?;
    let ndim = sys.grid().ndim();
    let nu = sys.n_channels();
    let mut head = vec!["step".to_string(), "t".to_string()];
    head.extend(record_columns(ndim, nu));
    if spec.adiabatic {
        head.extend((1..=nu).map(|c| format!("adiabatic_{c}")));
    }
    if let Some(l) = &levels {
        head.extend((0..l.len()).map(|v| format!("level_{v}")));
    }
    write_row(&mut w, &path, &head)?;
    let mut ckpt = checkpoint_writer(spec, ctx, PayloadKind::TimeSteps)?;
    let mut sink = FrameSink::new(spec, ctx)?;
    let weights = sys.grid().weights().clone();
    let mut summary = RunSummary::default();
    let start = Instant::now();
    let report = (time.main_stop / 10).max(1);
    let mut observer = |v: &StepView| -> Result<()> {
        let mut row = vec![v.step.to_string(), fmt(v.t)];
        row.extend(record_values(v.record));
        if spec.adiabatic {
            let a = sys.adiabatic_transform(v.psi)?;
            let pops: Vec<f64> = a.psi.channels.iter().map(|c| {
                c.iter().zip(weights.iter()).map(|(x, w)| w * x.norm_sqr()).sum::<f64>()
            }).collect();
            for (c, p) in pops.iter().enumerate() {
                summary.scalars.insert(format!("adiabatic.{}", c + 1), *p);
            }
            row.extend(pops.into_iter().map(fmt));
        }
        if let Some(l) = &levels {
            let pops = level_populations(sys.grid(), v.psi, l)?;
            for (k, p) in pops.iter().enumerate() {
                summary.scalars.insert(format!("level.{k}"), *p);
            }
            row.extend(pops.into_iter().map(fmt));
        }
        write_row(&mut w, &path, &row)?;
        if let Some(c) = ckpt.as_mut() {
            c.push(v.step as u64, v.t, v.psi)?;
        }
        if let Some(s) = sink.as_mut() {
            s.write(sys.grid(), v.step as u64, v.t, v.psi)?;
        }
        if v.step % report == 0 {
            let r = v.record;
            info!(
                "step {:5}  t {:.4e}  norm {:.10}  energy {:.10e}  |acf| {:.6}",
                v.step,
                v.t,
                r.norm,
                r.total,
                r.autocorrelation.norm()
            );
        }
        Ok(())
    };
    let recs = propagate(&sys, &psi0, &time, method, &spec.pulses, &mut observer)?;
    if let Some(c) = ckpt {
        c.finish()?;
    }
    info!("{} main steps in {:.2?}", time.main_stop, start.elapsed());
    let last = recs.last().expect("initial record");
    for (k, v) in [
        ("total", last.total),
        ("potential", last.potential),
        ("kinetic", last.kinetic),
        ("norm", last.norm),
        ("dipole", last.dipole),
        ("autocorrelation", last.autocorrelation.norm()),
    ] {
        summary.scalars.insert(k.into(), v);
    }
    for (c, p) in last.populations.iter().enumerate() {
        summary.scalars.insert(format!("population.{}", c + 1), *p);
    }
    Ok(summary)
}

pub fn run_relax(spec: &RunSpec, ctx: &RunContext) -> Result<RunSummary> {
    let time = time_grid(spec)?;
    if let Some(h) = spec.propa.handle {
        if h != Handle::ChebyImag {
            return Err(Error::config("time.propa.handle", "relaxation runs with cheby_imag"));
        }
    }
    let sys = build_system(spec)?;
    let psi0 = initial_state(spec, &sys)?;
    let opts = RelaxOptions { precision: spec.propa.precision, delta_e: spec.truncate, tolerance: spec.propa.tolerance };
    let path = ctx.out_dir.join("expect.csv");
    let mut w = create(&path)?;
    write_row(&mut w, &path, &["state", "step", "energy"].map(String::from))?;
    let mut ckpt = checkpoint_writer(spec, ctx, PayloadKind::Eigenstates)?;
    let mut lower: Vec<WaveFunction> = Vec::new();
    let mut summary = RunSummary::default();
    for n in 0..spec.propa.states {
        let res = if n == 0 {
            relax(&sys, &psi0, &time, &opts, &[])?
        } else {
            relax_excited(&sys, &psi0, &time, &opts, &lower)?
        };
        for (step, e) in res.energies.iter().enumerate() {
            write_row(&mut w, &path, &[n.to_string(), step.to_string(), fmt(*e)])?;
        }
        if res.converged {
            info!("state {n}: converged after {} step(s): energy {:.12e}", res.steps, res.energy);
        } else {
            warn!("state {n}: not converged after {} step(s): energy {:.12e}", res.steps, res.energy);
        }
        summary.scalars.insert(format!("energy.{n}"), res.energy);
        summary.scalars.insert(format!("steps.{n}"), res.steps as f64);
        if n == 0 {
            summary.scalars.insert("energy".into(), res.energy);
        }
        if let Some(c) = ckpt.as_mut() {
            c.push(n as u64, res.energy, &res.state)?;
        }
        lower.push(res.state);
    }
    if let Some(c) = ckpt {
        c.finish()?;
    }
    Ok(summary)
}

/// Frames from saved wavefunctions, one set per payload.
pub fn run_replay(spec: &RunSpec, ctx: &RunContext) -> Result<RunSummary> {
    let plot = spec.plot.ok_or_else(|| {
        Error::config("plot.kind", "missing required section: what to draw (curve, contour, wigner, flux, reduced)")
    })?;
    let dir = save_dir(spec, ctx);
    let mut reader = CheckpointReader::open(&dir, &spec.save.file)?;
    let grid = reader.header.grid.clone();
    if grid != spec.grid {
        warn!("checkpoint grid differs from the configured one; using the checkpoint grid");
    }
    frames::check_kind(&grid, plot.kind, plot.representation)?;
    let mut replay_ctx = ctx.clone();
    replay_ctx.frames = true;
    let mut sink = FrameSink::new(spec, &replay_ctx)?.expect("plot configured");
    sink.plot.png &= ctx.frames;
    let mut count = 0usize;
    while let Some(p) = reader.next_payload()? {
        sink.write(&grid, p.step, p.t, &p.psi)?;
        count += 1;
    }
    info!("replayed {count} saved wavefunction(s) as {:?} frames", plot.kind);
    let mut summary = RunSummary::default();
    summary.scalars.insert("payloads".into(), count as f64);
    Ok(summary)
}

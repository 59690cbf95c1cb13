//! Time propagation: second-order differencing, Trotter/Strang splitting,
//! real and imaginary time Chebychev expansions, pulsed fields, absorbing
//! boundaries and the main-step driver.

mod cheby;
mod pulse;
mod sod;
mod split;

pub use cheby::{
    cheby_coefficients, spectral_bounds, step_cheby, truncated_system, ChebyCoefficients, ChebyMode, ChebyPropagator,
};
pub use pulse::{field_value, Envelope, Pulse};
pub use sod::{sod_bootstrap, step_sod};
pub use split::{step_split, SplitOrder, SplitPropagator};

use log::{debug, info, warn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::observe::{expect, ExpectationRecord};
use crate::system::{SystemSpec, WaveFunction};

/// Main steps of length `main_delta`, each split into `sub_n` propagation
/// steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub main_delta: f64,
    pub main_stop: usize,
    pub sub_n: usize,
}

impl TimeGrid {
    pub fn new(main_delta: f64, main_stop: usize, sub_n: usize) -> Result<Self> {
        if !(main_delta > 0.0 && main_delta.is_finite()) {
            return Err(Error::config("time.main.delta", format!("must be positive, got {main_delta}")));
        }
        if main_stop == 0 {
            return Err(Error::config("time.main.stop", "must be at least 1"));
        }
        if sub_n == 0 {
            return Err(Error::config("time.sub.n", "must be at least 1"));
        }
        Ok(TimeGrid { main_delta, main_stop, sub_n })
    }

    pub fn sub_delta(&self) -> f64 {
        self.main_delta / self.sub_n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sod,
    Split(SplitOrder),
    /// Real-time Chebychev, one step per main step.
    Cheby { precision: f64, delta_e: Option<f64> },
}

/// Snapshot handed to the observer after every main step (and at `t = 0`).
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub psi: &'a WaveFunction,
    pub record: &'a ExpectationRecord,
}

/// `Ψ ← exp(-W Δt) Ψ` on every channel.
pub fn apply_nip(sys: &SystemSpec, psi: &mut WaveFunction, dt: f64) {
    if let Some(w) = sys.nip() {
        let damp = w.mapv(|w| (-w * dt).exp());
        for c in psi.channels.iter_mut() {
            c.zip_mut_with(&damp, |v, d| *v *= *d);
        }
    }
}

enum Stepper<'a> {
    Sod { prev: WaveFunction },
    Split(SplitPropagator<'a>),
    Cheby(ChebyPropagator),
}

/// Runs `time.main_stop` main steps from `psi0`, recording expectation
/// values at `t = 0` and after every main step.
pub fn propagate(
    sys: &SystemSpec,
    psi0: &WaveFunction,
    time: &TimeGrid,
    method: Method,
    pulses: &[Pulse],
    observer: &mut dyn FnMut(&StepView) -> Result<()>,
) -> Result<Vec<ExpectationRecord>> {
    psi0.check(sys)?;
    for p in pulses {
        p.validate()?;
    }
    let dt = time.sub_delta();
    let mut stepper = match method {
        Method::Sod => Stepper::Sod { prev: sod_bootstrap(sys, psi0, 0.0, dt, pulses)? },
        Method::Split(order) => Stepper::Split(SplitPropagator::new(sys, dt, order)?),
        Method::Cheby { precision, delta_e } => {
            if !pulses.is_empty() {
                return Err(Error::Unsupported(
                    "Chebychev propagators need a time-independent Hamiltonian; use splitting or sod with pulses".into(),
                ));
            }
            if time.sub_n != 1 {
                debug!("Chebychev takes one step per main step; time.sub.n = {} ignored", time.sub_n);
            }
            let p = ChebyPropagator::new(sys, time.main_delta, precision, ChebyMode::Real, delta_e)?;
            info!(
                "Chebychev: spectral range [{:.6e}, {:.6e}], alpha = {:.4}, {} polynomials",
                p.bounds().0,
                p.bounds().1,
                p.coefficients().alpha,
                p.coefficients().count()
            );
            Stepper::Cheby(p)
        }
    };

    let mut psi = psi0.clone();
    let mut records = Vec::with_capacity(time.main_stop + 1);
    let mut rec = expect(sys, &psi, psi0, field_value(pulses, 0.0)?)?;
    observer(&StepView { step: 0, t: 0.0, psi: &psi, record: &rec })?;
    records.push(rec);
    for step in 1..=time.main_stop {
        let t0 = (step - 1) as f64 * time.main_delta;
        match &mut stepper {
            Stepper::Sod { prev } => {
                for s in 0..time.sub_n {
                    let next = step_sod(sys, prev, &psi, t0 + s as f64 * dt, dt, pulses)?;
                    *prev = std::mem::replace(&mut psi, next);
                }
                apply_nip(sys, prev, time.main_delta);
            }
            Stepper::Split(p) => {
                for s in 0..time.sub_n {
                    p.step(&mut psi, t0 + s as f64 * dt, pulses)?;
                }
            }
            Stepper::Cheby(p) => psi = p.step(&psi)?,
        }
        apply_nip(sys, &mut psi, time.main_delta);
        let t = step as f64 * time.main_delta;
        let norm = psi.norm(sys.grid().weights());
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("wavefunction diverged at step {step} (t = {t})")));
        }
        rec = expect(sys, &psi, psi0, field_value(pulses, t)?)?;
        rec.t = t;
        observer(&StepView { step, t, psi: &psi, record: &rec })?;
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub precision: f64,
    pub delta_e: Option<f64>,
    /// relative energy change below which the iteration stops
    pub tolerance: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { precision: 1e-8, delta_e: None, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxResult {
    pub state: WaveFunction,
    pub energy: f64,
    /// `⟨H⟩` of the normalized start (index 0) and after every main step
    pub energies: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
}

fn energy(sys: &SystemSpec, psi: &WaveFunction) -> Result<f64> {
    Ok(psi.inner(&sys.apply_hamiltonian(psi, 0.0)?, sys.grid().weights()).re)
}

fn project_out(psi: &mut WaveFunction, lower: &[WaveFunction], sys: &SystemSpec) -> f64 {
    let w = sys.grid().weights();
    let mut worst = 0.0f64;
    for l in lower {
        let ov = l.inner(psi, w);
        worst = worst.max(ov.norm());
        psi.axpy(-ov, l);
    }
    worst
}

/// Imaginary-time relaxation toward the lowest state orthogonal to `lower`
/// (pass an empty slice for the ground state). Stops after `time.main_stop`
/// main steps or once the relative energy change drops below the tolerance.
pub fn relax(
    sys: &SystemSpec,
    psi0: &WaveFunction,
    time: &TimeGrid,
    opts: &RelaxOptions,
    lower: &[WaveFunction],
) -> Result<RelaxResult> {
    psi0.check(sys)?;
    for l in lower {
        l.check(sys)?;
    }
    let w = sys.grid().weights();
    for (i, a) in lower.iter().enumerate() {
        for (j, b) in lower.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            let dev = (a.inner(b, w) - C64::new(want, 0.0)).norm();
            if dev > 1e-6 {
                warn!("lower states {i} and {j} deviate from orthonormality by {dev:.3e}");
            }
        }
    }
    let prop = ChebyPropagator::new(sys, time.main_delta, opts.precision, ChebyMode::Imag, opts.delta_e)?;
    info!(
        "relaxation: alpha = {:.4}, {} polynomials",
        prop.coefficients().alpha,
        prop.coefficients().count()
    );
    let mut psi = psi0.clone();
    project_out(&mut psi, lower, sys);
    psi.normalize(w)
        .map_err(|_| Error::Numeric("start state has no component outside the lower states".into()))?;
    let mut energies = vec![energy(sys, &psi)?];
    let mut converged = false;
    let mut steps = 0;
    for step in 1..=time.main_stop {
        psi = prop.step(&psi)?;
        psi.normalize(w)?;
        let drift = project_out(&mut psi, lower, sys);
        if drift > 1e-6 {
            warn!("step {step}: overlap {drift:.3e} with lower states removed; their errors accumulate");
        }
        psi.normalize(w)?;
        let e = energy(sys, &psi)?;
        let last = *energies.last().expect("start energy");
        energies.push(e);
        steps = step;
        info!("relaxation step {step}: energy {e:.12e}");
        if ((e - last) / e).abs() < opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(RelaxResult { state: psi, energy: *energies.last().expect("energy"), energies, steps, converged })
}

/// Relaxes the `lower.len()`-th state by projecting out `lower` after every
/// renormalization.
pub fn relax_excited(
    sys: &SystemSpec,
    psi0: &WaveFunction,
    time: &TimeGrid,
    opts: &RelaxOptions,
    lower: &[WaveFunction],
) -> Result<RelaxResult> {
    if lower.is_empty() {
        return Err(Error::config("time.propa.excited", "excited-state relaxation needs at least one lower state"));
    }
    relax(sys, psi0, time, opts, lower)
}

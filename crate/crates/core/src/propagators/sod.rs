use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::system::{SystemSpec, WaveFunction};

use super::pulse::{field_value, Pulse};
use super::split::{step_split, SplitOrder};

/// `Ψ(t+Δt) = Ψ(t-Δt) - 2iΔt H(t) Ψ(t)`.
pub fn step_sod(
    sys: &SystemSpec,
    prev: &WaveFunction,
    curr: &WaveFunction,
    t: f64,
    dt: f64,
    pulses: &[Pulse],
) -> Result<WaveFunction> {
    prev.check(sys)?;
    let h = sys.apply_hamiltonian(curr, field_value(pulses, t)?)?;
    let mut next = prev.clone();
    next.axpy(C64::new(0.0, -2.0 * dt), &h);
    Ok(next)
}

/// `Ψ(t-Δt)` from one backward Strang step, to start the two-step recursion.
pub fn sod_bootstrap(sys: &SystemSpec, psi: &WaveFunction, t: f64, dt: f64, pulses: &[Pulse]) -> Result<WaveFunction> {
    step_split(sys, psi, t, -dt, SplitOrder::Strang, pulses)
}

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::special::{bessel_i_scaled_sequence, bessel_j_sequence};
use crate::system::{SystemSpec, WaveFunction};

/// Real time `exp(-iHΔt)` or imaginary time `exp(-HΔt)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChebyMode {
    Real,
    Imag,
}

/// Expansion coefficients truncated at the first negligible one.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyCoefficients {
    pub mode: ChebyMode,
    pub alpha: f64,
    /// `a_n`, including the `(-i)^n` or `(-1)^n` factor
    pub values: Vec<C64>,
}

impl ChebyCoefficients {
    /// Number of polynomials evaluated per step.
    pub fn count(&self) -> usize {
        self.values.len()
    }
}

fn hard_cap(alpha: f64) -> usize {
    (10.0 * alpha + 100.0).ceil() as usize
}

/// Coefficients of `exp(-iα x)` (real) or `e^{-α} exp(-α x)` (imag) in
/// Chebychev polynomials of `x ∈ [-1, 1]`, kept up to the first index whose
/// magnitude drops below `precision`.
pub fn cheby_coefficients(alpha: f64, precision: f64, mode: ChebyMode) -> Result<ChebyCoefficients> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("time.main.delta", format!("rescaled time step must be positive, got {alpha}")));
    }
    if !(precision > 0.0 && precision < 1.0) {
        return Err(Error::config("time.propa.precision", format!("must lie in (0, 1), got {precision}")));
    }
    let cap = hard_cap(alpha);
    let raw = match mode {
        ChebyMode::Real => bessel_j_sequence(alpha, cap),
        ChebyMode::Imag => bessel_i_scaled_sequence(alpha, cap),
    };
    let mut values = Vec::new();
    for (n, b) in raw.iter().enumerate() {
        let mag = if n == 0 { *b } else { 2.0 * b };
        // J_n may pass through zero for n < α; only the decaying tail counts
        if mag.abs() < precision && (mode == ChebyMode::Imag || n as f64 > alpha) {
            return Ok(ChebyCoefficients { mode, alpha, values });
        }
        let phase = match (mode, n % 4) {
            (ChebyMode::Real, 0) => C64::new(1.0, 0.0),
            (ChebyMode::Real, 1) => C64::new(0.0, -1.0),
            (ChebyMode::Real, 2) => C64::new(-1.0, 0.0),
            (ChebyMode::Real, _) => C64::new(0.0, 1.0),
            (ChebyMode::Imag, k) => C64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0),
        };
        values.push(phase * mag);
    }
    Err(Error::Numeric(format!(
        "Chebychev series did not reach precision {precision} within {cap} terms (alpha = {alpha}); the spectral range estimate is too small"
    )))
}

/// Lower and upper bound of the Hamiltonian spectrum: lowest potential
/// eigenvalue, and highest potential eigenvalue plus the kinetic maxima.
pub fn spectral_bounds(sys: &SystemSpec) -> (f64, f64) {
    let (v_lo, v_hi) = sys.potential_range();
    let t: f64 = sys.grid().dofs().iter().map(|g| g.kinetic_max()).sum();
    (v_lo, v_hi + t)
}

/// Hamiltonian whose spectrum fits the returned bounds. A `delta_e` below the
/// natural range clips potential and kinetic spectra proportionally.
pub fn truncated_system(sys: &SystemSpec, delta_e: Option<f64>) -> Result<(SystemSpec, (f64, f64))> {
    let (lo, hi) = spectral_bounds(sys);
    let natural = hi - lo;
    let Some(de) = delta_e else {
        return Ok((sys.clone(), (lo, hi)));
    };
    if !(de > 0.0 && de.is_finite()) {
        return Err(Error::config("hamilt.truncate.delta_e", format!("must be positive, got {de}")));
    }
    if de >= natural {
        return Ok((sys.clone(), (lo, lo + de)));
    }
    let (v_lo, v_hi) = sys.potential_range();
    let dv = v_hi - v_lo;
    let kin: Vec<f64> = sys.grid().dofs().iter().map(|g| g.kinetic_max()).collect();
    let dt: f64 = kin.iter().sum();
    let a = de * dv / (dv + dt);
    let b = de * dt / (dv + dt);
    let caps: Vec<f64> = kin.iter().map(|t| if dt > 0.0 { b * t / dt } else { 0.0 }).collect();
    Ok((sys.clipped(v_lo, v_lo + a, &caps), (lo, lo + de)))
}

/// Precomputed series for repeated steps of one length.
#[derive(Debug, Clone)]
pub struct ChebyPropagator {
    sys: SystemSpec,
    bounds: (f64, f64),
    dt: f64,
    coefficients: ChebyCoefficients,
}

impl ChebyPropagator {
    pub fn new(sys: &SystemSpec, dt: f64, precision: f64, mode: ChebyMode, delta_e: Option<f64>) -> Result<Self> {
        let (sys, mut bounds) = truncated_system(sys, delta_e)?;
        if !(bounds.1 - bounds.0 > 0.0) {
            // constant spectrum: any small interval holds it
            bounds.1 = bounds.0 + 1e-8 * (1.0 + bounds.0.abs());
        }
        let range = bounds.1 - bounds.0;
        let coefficients = cheby_coefficients(0.5 * range * dt, precision, mode)?;
        Ok(ChebyPropagator { sys, bounds, dt, coefficients })
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn coefficients(&self) -> &ChebyCoefficients {
        &self.coefficients
    }

    /// The (possibly clipped) Hamiltonian used in the recursion.
    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    fn scaled(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        let (lo, hi) = self.bounds;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut out = self.sys.apply_hamiltonian(psi, 0.0)?;
        out.axpy(C64::new(-mid, 0.0), psi);
        out.scale(C64::new(1.0 / half, 0.0));
        Ok(out)
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        let c = &self.coefficients.values;
        let mut acc = psi.clone();
        acc.scale(c[0]);
        if c.len() > 1 {
            let mut prev = psi.clone();
            let mut curr = self.scaled(psi)?;
            acc.axpy(c[1], &curr);
            for cn in &c[2..] {
                let mut next = self.scaled(&curr)?;
                next.scale(C64::new(2.0, 0.0));
                next.axpy(C64::new(-1.0, 0.0), &prev);
                acc.axpy(*cn, &next);
                prev = curr;
                curr = next;
            }
        }
        match self.coefficients.mode {
            ChebyMode::Real => {
                let mid = 0.5 * (self.bounds.0 + self.bounds.1);
                acc.scale(C64::from_polar(1.0, -mid * self.dt));
            }
            // e^{-(H - E_min)Δt}; normalization is left to the caller
            ChebyMode::Imag => {}
        }
        Ok(acc)
    }
}

/// Single Chebychev step; recomputes the series on every call.
pub fn step_cheby(
    sys: &SystemSpec,
    psi: &WaveFunction,
    dt: f64,
    precision: f64,
    mode: ChebyMode,
    delta_e: Option<f64>,
) -> Result<WaveFunction> {
    ChebyPropagator::new(sys, dt, precision, mode, delta_e)?.step(psi)
}

use ndarray::ArrayD;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grids::{map_lanes, KineticExp};
use crate::system::{PointwiseEigen, SystemSpec, WaveFunction};

use super::pulse::{field_value, Pulse};

/// Splitting order: Trotter (first order, error per step O(Δt²)) or Strang
/// (second order, O(Δt³)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitOrder {
    Trotter,
    Strang,
}

impl SplitOrder {
    /// Maps the configuration value `2` to Trotter and `3` to Strang.
    pub fn from_config(order: u32) -> Result<Self> {
        match order {
            2 => Ok(SplitOrder::Trotter),
            3 => Ok(SplitOrder::Strang),
            _ => Err(Error::config(
                "time.propa.order",
                format!("{order} is not available; use 2 (Trotter) or 3 (Strang)"),
            )),
        }
    }
}

/// Pointwise `exp(-i M τ)` of a channel matrix field, flattened as
/// `[p * ν² + a * ν + b]`.
fn pointwise_exp(e: &PointwiseEigen, tau: f64) -> Vec<C64> {
    let nu = e.n_channels;
    let size = e.values.len() / nu;
    let mut out = vec![C64::new(0.0, 0.0); size * nu * nu];
    for p in 0..size {
        let vecs = &e.vectors[p * nu * nu..(p + 1) * nu * nu];
        for a in 0..nu {
            for b in 0..nu {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..nu {
                    acc += C64::from_polar(vecs[a * nu + k] * vecs[b * nu + k], -e.values[p * nu + k] * tau);
                }
                out[p * nu * nu + a * nu + b] = acc;
            }
        }
    }
    out
}

fn apply_pointwise(m: &[C64], nu: usize, psi: &mut WaveFunction) {
    if nu == 1 {
        psi.channels[0].iter_mut().zip(m).for_each(|(v, f)| *v *= f);
        return;
    }
    let size = m.len() / (nu * nu);
    let mut flat: Vec<&mut [C64]> = psi
        .channels
        .iter_mut()
        .map(|c| c.as_slice_mut().expect("standard layout"))
        .collect();
    let mut tmp = vec![C64::new(0.0, 0.0); nu];
    for p in 0..size {
        let blk = &m[p * nu * nu..(p + 1) * nu * nu];
        for a in 0..nu {
            tmp[a] = (0..nu).map(|b| blk[a * nu + b] * flat[b][p]).sum();
        }
        for a in 0..nu {
            flat[a][p] = tmp[a];
        }
    }
}

/// Precomputed factors for repeated split-operator steps of one length.
pub struct SplitPropagator<'a> {
    sys: &'a SystemSpec,
    dt: f64,
    order: SplitOrder,
    /// `exp(-iVτ)` with τ = Δt (Trotter) or Δt/2 (Strang)
    pot: Option<Vec<C64>>,
    kin: Vec<KineticExp>,
    /// diagonal (permanent) dipoles per channel
    perm: Vec<Option<ArrayD<f64>>>,
    trans: Option<PointwiseEigen>,
}

impl<'a> SplitPropagator<'a> {
    pub fn new(sys: &'a SystemSpec, dt: f64, order: SplitOrder) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::config("time.main.delta", "time step must be finite and non-zero"));
        }
        let nu = sys.n_channels();
        let tau = match order {
            SplitOrder::Trotter => dt,
            SplitOrder::Strang => 0.5 * dt,
        };
        let has_pot = (0..nu).any(|a| (0..nu).any(|b| sys.pot(a, b).is_some()));
        let pot = has_pot.then(|| pointwise_exp(&sys.potential_eigen(), tau));
        let kin = sys.grid().dofs().iter().map(|g| g.kinetic_exp(dt)).collect();
        let perm = (0..nu).map(|c| sys.dip(c, c).cloned()).collect();
        Ok(SplitPropagator { sys, dt, order, pot, kin, perm, trans: sys.transition_dipole_eigen() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential(&self, psi: &mut WaveFunction) {
        if let Some(m) = &self.pot {
            apply_pointwise(m, self.sys.n_channels(), psi);
        }
    }

    fn kinetic(&self, psi: &mut WaveFunction) {
        for c in psi.channels.iter_mut() {
            for (k, (g, e)) in self.sys.grid().dofs().iter().zip(&self.kin).enumerate() {
                map_lanes(c, k, |lane| {
                    g.dvr_to_fbr_in_place(lane);
                    e.apply_fbr(lane);
                    g.fbr_to_dvr_in_place(lane);
                });
            }
        }
    }

    /// `exp(+i F μ_p τ)` for the permanent dipoles.
    fn permanent(&self, psi: &mut WaveFunction, field: f64, tau: f64) {
        if field == 0.0 {
            return;
        }
        for (c, d) in psi.channels.iter_mut().zip(&self.perm) {
            if let Some(d) = d {
                c.zip_mut_with(d, |v, m| *v *= C64::from_polar(1.0, field * m * tau));
            }
        }
    }

    /// `exp(+i F μ_t τ)` for the transition dipoles.
    fn transition(&self, psi: &mut WaveFunction, field: f64, tau: f64) {
        if field == 0.0 {
            return;
        }
        if let Some(e) = &self.trans {
            // exp(-i (-F μ) τ)
            let m = pointwise_exp(e, -field * tau);
            apply_pointwise(&m, self.sys.n_channels(), psi);
        }
    }

    /// One step from `t` to `t + Δt`.
    pub fn step(&self, psi: &mut WaveFunction, t: f64, pulses: &[Pulse]) -> Result<()> {
        psi.check(self.sys)?;
        let dt = self.dt;
        match self.order {
            SplitOrder::Trotter => {
                let f = field_value(pulses, t)?;
                self.potential(psi);
                self.permanent(psi, f, dt);
                self.transition(psi, f, dt);
                self.kinetic(psi);
            }
            SplitOrder::Strang => {
                let f0 = field_value(pulses, t)?;
                let f1 = field_value(pulses, t + dt)?;
                self.potential(psi);
                self.permanent(psi, f0, 0.5 * dt);
                self.transition(psi, f0, 0.5 * dt);
                self.kinetic(psi);
                self.transition(psi, f1, 0.5 * dt);
                self.permanent(psi, f1, 0.5 * dt);
                self.potential(psi);
            }
        }
        Ok(())
    }
}

/// Single split-operator step; builds the factors on every call.
pub fn step_split(
    sys: &SystemSpec,
    psi: &WaveFunction,
    t: f64,
    dt: f64,
    order: SplitOrder,
    pulses: &[Pulse],
) -> Result<WaveFunction> {
    let mut out = psi.clone();
    SplitPropagator::new(sys, dt, order)?.step(&mut out, t, pulses)?;
    Ok(out)
}

//! Hamiltonians with coupled channels, wavefunctions and initial states.

use log::warn;
use nalgebra::DMatrix;
use ndarray::{ArrayD, IxDyn, Zip};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grids::{Grid1D, ProductGrid};
use crate::linalg::sym_eigen;
use crate::operators::OperatorSpec;
use crate::special::{laguerre, ln_gamma};

/// A ν-channel wavefunction on a product grid, stored as one complex tensor
/// per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub channels: Vec<ArrayD<C64>>,
}

impl WaveFunction {
    pub fn zeros(shape: &[usize], n_channels: usize) -> Self {
        WaveFunction {
            channels: (0..n_channels).map(|_| ArrayD::zeros(IxDyn(shape))).collect(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> &[usize] {
        self.channels[0].shape()
    }

    /// `Σ_c Σ_points w |Ψ_c|²`
    pub fn norm_sqr(&self, weights: &ArrayD<f64>) -> f64 {
        self.channels
            .iter()
            .map(|c| Zip::from(c).and(weights).fold(0.0, |acc, v, w| acc + w * v.norm_sqr()))
            .sum()
    }

    pub fn norm(&self, weights: &ArrayD<f64>) -> f64 {
        self.norm_sqr(weights).sqrt()
    }

    /// `⟨self|other⟩` with quadrature weights.
    pub fn inner(&self, other: &WaveFunction, weights: &ArrayD<f64>) -> C64 {
        self.channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                Zip::from(a)
                    .and(b)
                    .and(weights)
                    .fold(C64::new(0.0, 0.0), |acc, x, y, w| acc + x.conj() * y * w)
            })
            .sum()
    }

    pub fn scale(&mut self, factor: C64) {
        for c in &mut self.channels {
            c.mapv_inplace(|v| v * factor);
        }
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: C64, x: &WaveFunction) {
        for (c, xc) in self.channels.iter_mut().zip(&x.channels) {
            Zip::from(c).and(xc).for_each(|v, u| *v += a * u);
        }
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self, weights: &ArrayD<f64>) -> Result<f64> {
        let n = self.norm(weights);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize a wavefunction of norm {n}")));
        }
        self.scale(C64::new(1.0 / n, 0.0));
        Ok(n)
    }

    /// Checks that the shape and channel count fit the given system.
    pub fn check(&self, sys: &SystemSpec) -> Result<()> {
        if self.channels.len() != sys.n_channels() {
            return Err(Error::Shape(format!(
                "wavefunction has {} channel(s), the system {}",
                self.channels.len(),
                sys.n_channels()
            )));
        }
        for c in &self.channels {
            sys.grid().check_shape(c.shape())?;
        }
        Ok(())
    }
}

/// A potential or dipole function attached to a pair of channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTerm {
    pub row: usize,
    pub col: usize,
    pub op: OperatorSpec,
}

/// Operator grids of the Hamiltonian `T + V - iW - F(t) μ`.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    grid: ProductGrid,
    n_channels: usize,
    /// `ν×ν` row-major, symmetric; `None` means zero.
    pot: Vec<Option<ArrayD<f64>>>,
    /// Diagonal entries are permanent, off-diagonal transition dipoles.
    dip: Vec<Option<ArrayD<f64>>>,
    nip: Option<ArrayD<f64>>,
}

/// Pointwise eigen-decomposition of a symmetric channel matrix field.
#[derive(Debug, Clone)]
pub struct PointwiseEigen {
    pub n_channels: usize,
    /// `values[p * ν + k]`, ascending in `k`
    pub values: Vec<f64>,
    /// `vectors[p * ν² + a * ν + k]`: component `a` of eigenvector `k`
    pub vectors: Vec<f64>,
}

fn fill_matrix_terms(
    grid: &ProductGrid,
    n_channels: usize,
    terms: &[ChannelTerm],
    what: &str,
) -> Result<Vec<Option<ArrayD<f64>>>> {
    let mut out: Vec<Option<ArrayD<f64>>> = vec![None; n_channels * n_channels];
    let mut given = vec![false; n_channels * n_channels];
    for t in terms {
        if t.row >= n_channels || t.col >= n_channels {
            return Err(Error::config(
                format!("hamilt.{what}.{}.{}", t.row + 1, t.col + 1),
                format!("channel index exceeds n_eqs = {n_channels}"),
            ));
        }
        let idx = t.row * n_channels + t.col;
        if given[idx] {
            return Err(Error::config(
                format!("hamilt.{what}.{}.{}", t.row + 1, t.col + 1),
                "given more than once",
            ));
        }
        given[idx] = true;
        let vals = t.op.evaluate(grid)?;
        let mirror = t.col * n_channels + t.row;
        if t.row != t.col && given[mirror] {
            let other = out[mirror].as_ref().expect("mirror evaluated");
            let diff = Zip::from(&vals).and(other).fold(0.0f64, |m, a, b| m.max((a - b).abs()));
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            if diff > 1e-12 * scale {
                return Err(Error::config(
                    format!("hamilt.{what}.{}.{}", t.row + 1, t.col + 1),
                    format!("matrix is not symmetric: differs from entry {}.{}", t.col + 1, t.row + 1),
                ));
            }
        }
        out[idx] = Some(vals.clone());
        if t.row != t.col && !given[mirror] {
            out[mirror] = Some(vals);
        }
    }
    Ok(out)
}

impl SystemSpec {
    /// Evaluates all operators on the grid.
    pub fn assemble(
        grid: ProductGrid,
        n_channels: usize,
        pot: &[ChannelTerm],
        dip: &[ChannelTerm],
        nip: Option<&OperatorSpec>,
    ) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::config("hamilt.n_eqs", "must be at least 1"));
        }
        let pot = fill_matrix_terms(&grid, n_channels, pot, "pot")?;
        let dip = fill_matrix_terms(&grid, n_channels, dip, "dip")?;
        let nip = match nip {
            Some(op) => {
                let w = op.evaluate(&grid)?;
                if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(Error::config("hamilt.nip", "absorber must be non-negative and finite"));
                }
                Some(w)
            }
            None => None,
        };
        Ok(SystemSpec {
            grid,
            n_channels,
            pot,
            dip,
            nip,
        })
    }

    /// Builds a system directly from operator tensors (row-major `ν×ν`).
    pub fn from_tensors(
        grid: ProductGrid,
        n_channels: usize,
        pot: Vec<Option<ArrayD<f64>>>,
        dip: Vec<Option<ArrayD<f64>>>,
        nip: Option<ArrayD<f64>>,
    ) -> Result<Self> {
        let nn = n_channels * n_channels;
        if n_channels == 0 || pot.len() != nn || dip.len() != nn {
            return Err(Error::Shape(format!("expected {nn} channel matrix entries")));
        }
        for t in pot.iter().chain(&dip).flatten().chain(nip.iter()) {
            grid.check_shape(t.shape())?;
        }
        for a in 0..n_channels {
            for b in 0..a {
                for (m, what) in [(&pot, "pot"), (&dip, "dip")] {
                    let same = match (&m[a * n_channels + b], &m[b * n_channels + a]) {
                        (None, None) => true,
                        (Some(x), Some(y)) => x == y,
                        _ => false,
                    };
                    if !same {
                        return Err(Error::config(format!("hamilt.{what}"), "channel matrix must be symmetric"));
                    }
                }
            }
        }
        Ok(SystemSpec {
            grid,
            n_channels,
            pot,
            dip,
            nip,
        })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn pot(&self, row: usize, col: usize) -> Option<&ArrayD<f64>> {
        self.pot[row * self.n_channels + col].as_ref()
    }

    pub fn dip(&self, row: usize, col: usize) -> Option<&ArrayD<f64>> {
        self.dip[row * self.n_channels + col].as_ref()
    }

    pub fn nip(&self) -> Option<&ArrayD<f64>> {
        self.nip.as_ref()
    }

    pub fn has_dipole(&self) -> bool {
        self.dip.iter().any(|d| d.is_some())
    }

    fn apply_channel_matrix(&self, m: &[Option<ArrayD<f64>>], psi: &WaveFunction) -> WaveFunction {
        let nu = self.n_channels;
        let mut out = WaveFunction::zeros(self.grid.shape(), nu);
        for a in 0..nu {
            for b in 0..nu {
                if let Some(v) = &m[a * nu + b] {
                    Zip::from(&mut out.channels[a])
                        .and(v)
                        .and(&psi.channels[b])
                        .for_each(|o, v, p| *o += p * *v);
                }
            }
        }
        out
    }

    pub fn apply_kinetic(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        psi.check(self)?;
        let channels = psi
            .channels
            .iter()
            .map(|c| self.grid.apply_kinetic(c))
            .collect::<Result<_>>()?;
        Ok(WaveFunction { channels })
    }

    pub fn apply_potential(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        psi.check(self)?;
        Ok(self.apply_channel_matrix(&self.pot, psi))
    }

    /// Applies the dipole matrix `μ` (without the field factor).
    pub fn apply_dipole(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        psi.check(self)?;
        Ok(self.apply_channel_matrix(&self.dip, psi))
    }

    /// `(T + V - F μ) Ψ`; the absorber is not part of this operator.
    pub fn apply_hamiltonian(&self, psi: &WaveFunction, field: f64) -> Result<WaveFunction> {
        let mut out = self.apply_kinetic(psi)?;
        let v = self.apply_channel_matrix(&self.pot, psi);
        out.axpy(C64::new(1.0, 0.0), &v);
        if field != 0.0 && self.has_dipole() {
            let d = self.apply_channel_matrix(&self.dip, psi);
            out.axpy(C64::new(-field, 0.0), &d);
        }
        Ok(out)
    }

    fn pointwise_eigen_of(&self, m: &[Option<ArrayD<f64>>]) -> PointwiseEigen {
        let nu = self.n_channels;
        let size = self.grid.size();
        let flat: Vec<Option<Vec<f64>>> = m
            .iter()
            .map(|t| t.as_ref().map(|a| a.iter().copied().collect()))
            .collect();
        let mut values = vec![0.0; size * nu];
        let mut vectors = vec![0.0; size * nu * nu];
        let mut mat = DMatrix::zeros(nu, nu);
        for p in 0..size {
            for a in 0..nu {
                for b in 0..nu {
                    mat[(a, b)] = flat[a * nu + b].as_ref().map_or(0.0, |v| v[p]);
                }
            }
            let (vals, mut vecs) = sym_eigen(mat.clone());
            for k in 0..nu {
                // first component that is not negligible made positive
                let lead = (0..nu).map(|a| vecs[(a, k)]).find(|c| c.abs() > 1e-12).unwrap_or(1.0);
                if lead < 0.0 {
                    vecs.column_mut(k).neg_mut();
                }
                values[p * nu + k] = vals[k];
                for a in 0..nu {
                    vectors[p * nu * nu + a * nu + k] = vecs[(a, k)];
                }
            }
        }
        PointwiseEigen {
            n_channels: nu,
            values,
            vectors,
        }
    }

    /// Pointwise eigen-decomposition of the diabatic potential matrix.
    pub fn potential_eigen(&self) -> PointwiseEigen {
        self.pointwise_eigen_of(&self.pot)
    }

    /// Pointwise eigen-decomposition of the off-diagonal (transition) dipoles.
    pub fn transition_dipole_eigen(&self) -> Option<PointwiseEigen> {
        let nu = self.n_channels;
        let mut off = self.dip.clone();
        for a in 0..nu {
            off[a * nu + a] = None;
        }
        if off.iter().all(|d| d.is_none()) {
            return None;
        }
        Some(self.pointwise_eigen_of(&off))
    }

    /// Smallest and largest eigenvalue of the potential matrix over the grid.
    pub fn potential_range(&self) -> (f64, f64) {
        if self.n_channels == 1 {
            return match &self.pot[0] {
                Some(v) => (
                    v.iter().copied().fold(f64::INFINITY, f64::min),
                    v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ),
                None => (0.0, 0.0),
            };
        }
        let e = self.potential_eigen();
        let nu = self.n_channels;
        let lo = e.values.iter().step_by(nu).copied().fold(f64::INFINITY, f64::min);
        let hi = e.values.iter().skip(nu - 1).step_by(nu).copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Field-free copy whose potential eigenvalues are clipped to `[lo, hi]`
    /// and whose per-dof kinetic spectra are clipped at `kinetic_caps`.
    pub fn clipped(&self, lo: f64, hi: f64, kinetic_caps: &[f64]) -> SystemSpec {
        let nu = self.n_channels;
        let grid = self.grid.with_kinetic_caps(kinetic_caps);
        let shape = self.grid.shape().to_vec();
        let mut pot: Vec<Option<ArrayD<f64>>> = vec![None; nu * nu];
        if nu == 1 {
            let v = self.pot[0].clone().unwrap_or_else(|| ArrayD::zeros(IxDyn(&shape)));
            pot[0] = Some(v.mapv(|x| x.clamp(lo, hi)));
        } else {
            let e = self.potential_eigen();
            let mut entries: Vec<Vec<f64>> = vec![vec![0.0; self.grid.size()]; nu * nu];
            for p in 0..self.grid.size() {
                for a in 0..nu {
                    for b in 0..nu {
                        let mut acc = 0.0;
                        for k in 0..nu {
                            let lam = e.values[p * nu + k].clamp(lo, hi);
                            acc += e.vectors[p * nu * nu + a * nu + k] * lam * e.vectors[p * nu * nu + b * nu + k];
                        }
                        entries[a * nu + b][p] = acc;
                    }
                }
            }
            for (slot, vals) in pot.iter_mut().zip(entries) {
                *slot = Some(ArrayD::from_shape_vec(IxDyn(&shape), vals).expect("shape"));
            }
            // exact symmetry
            for a in 0..nu {
                for b in 0..a {
                    pot[a * nu + b] = pot[b * nu + a].clone();
                }
            }
        }
        SystemSpec {
            grid,
            n_channels: nu,
            pot,
            dip: vec![None; nu * nu],
            nip: None,
        }
    }

    /// Rotates a diabatic wavefunction into the adiabatic picture.
    pub fn adiabatic_transform(&self, psi: &WaveFunction) -> Result<Adiabatic> {
        psi.check(self)?;
        let nu = self.n_channels;
        let shape = self.grid.shape().to_vec();
        if nu == 1 {
            warn!("adiabatic transform requested for a single channel; returning the input");
            let surface = self.pot[0].clone().unwrap_or_else(|| ArrayD::zeros(IxDyn(&shape)));
            return Ok(Adiabatic {
                surfaces: vec![surface],
                psi: psi.clone(),
            });
        }
        let e = self.potential_eigen();
        let size = self.grid.size();
        let diabatic: Vec<Vec<C64>> = psi.channels.iter().map(|c| c.iter().copied().collect()).collect();
        let mut surf = vec![vec![0.0; size]; nu];
        let mut adia = vec![vec![C64::new(0.0, 0.0); size]; nu];
        for p in 0..size {
            for k in 0..nu {
                surf[k][p] = e.values[p * nu + k];
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..nu {
                    acc += diabatic[a][p] * e.vectors[p * nu * nu + a * nu + k];
                }
                adia[k][p] = acc;
            }
        }
        let to_arr = |v: Vec<f64>| ArrayD::from_shape_vec(IxDyn(&shape), v).expect("shape");
        Ok(Adiabatic {
            surfaces: surf.into_iter().map(to_arr).collect(),
            psi: WaveFunction {
                channels: adia
                    .into_iter()
                    .map(|v| ArrayD::from_shape_vec(IxDyn(&shape), v).expect("shape"))
                    .collect(),
            },
        })
    }
}

/// Adiabatic potential surfaces (ascending) and the rotated wavefunction.
#[derive(Debug, Clone)]
pub struct Adiabatic {
    pub surfaces: Vec<ArrayD<f64>>,
    pub psi: WaveFunction,
}

fn normalize_1d(grid: &Grid1D, mut amp: Vec<C64>) -> Result<Vec<C64>> {
    let n: f64 = amp.iter().zip(grid.weights()).map(|(a, w)| w * a.norm_sqr()).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Numeric(format!(
            "initial state has norm {n} on the grid; is it inside the grid range?"
        )));
    }
    amp.iter_mut().for_each(|a| *a /= n);
    Ok(amp)
}

/// Normalized Gaussian `exp(-((x - x0)/(2w))²) exp(i p0 x)`.
pub fn init_gauss(grid: &Grid1D, pos_0: f64, width: f64, momentum_0: f64) -> Result<Vec<C64>> {
    if !(width > 0.0) {
        return Err(Error::config("width", format!("must be positive, got {width}")));
    }
    let amp = grid
        .points()
        .iter()
        .map(|x| {
            let g = (-((x - pos_0) / (2.0 * width)).powi(2)).exp();
            C64::from_polar(g, momentum_0 * x)
        })
        .collect();
    normalize_1d(grid, amp)
}

/// Number of bound states of a Morse oscillator, `floor(λ - ½) + 1`.
pub fn morse_bound_count(d_e: f64, alf: f64, mass: f64) -> usize {
    let lam = (2.0 * mass * d_e).sqrt() / alf;
    if lam <= 0.5 {
        return 0;
    }
    (lam - 0.5).ceil() as usize
}

/// Analytic Morse eigenvalue `ω0(v+½) - ω0²(v+½)²/(4 D_e)`.
pub fn morse_energy(d_e: f64, alf: f64, mass: f64, v: usize) -> f64 {
    let w0 = alf * (2.0 * d_e / mass).sqrt();
    let h = v as f64 + 0.5;
    w0 * h - w0 * w0 * h * h / (4.0 * d_e)
}

/// Analytic Morse eigenfunction `n`, sampled on the grid and normalized.
pub fn init_morse_eigenstate(grid: &Grid1D, d_e: f64, r_e: f64, alf: f64, mass: f64, n: usize) -> Result<Vec<C64>> {
    if !(d_e > 0.0 && alf > 0.0 && mass > 0.0) {
        return Err(Error::config("morse", "d_e, alf and mass must be positive"));
    }
    let lam = (2.0 * mass * d_e).sqrt() / alf;
    let count = morse_bound_count(d_e, alf, mass);
    if n >= count {
        return Err(Error::config(
            "n",
            format!("Morse oscillator has {count} bound state(s); state {n} does not exist"),
        ));
    }
    let s = lam - n as f64 - 0.5;
    let a = 2.0 * s;
    // log-magnitudes first, to stay finite far into the repulsive wall
    let mut logs = Vec::with_capacity(grid.len());
    let mut signs = Vec::with_capacity(grid.len());
    for &r in grid.points() {
        let ln_z = (2.0 * lam).ln() - alf * (r - r_e);
        let z = ln_z.exp();
        let l = laguerre(n, a, z);
        let lg = if l == 0.0 { f64::NEG_INFINITY } else { l.abs().ln() };
        logs.push(s * ln_z - 0.5 * z + lg + 0.5 * (ln_gamma(n as f64 + 1.0) - ln_gamma(n as f64 + a + 1.0)));
        signs.push(l.signum());
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let amp = logs
        .iter()
        .zip(&signs)
        .map(|(l, s)| C64::new(s * (l - top).exp(), 0.0))
        .collect();
    normalize_1d(grid, amp)
}

/// Outer product of per-dof amplitudes placed in one channel, normalized.
pub fn product_state(grid: &ProductGrid, amplitudes: &[Vec<C64>], channel: usize, n_channels: usize) -> Result<WaveFunction> {
    if amplitudes.len() != grid.ndim() {
        return Err(Error::Shape(format!(
            "{} one-dimensional amplitude(s) for a {}-dof grid",
            amplitudes.len(),
            grid.ndim()
        )));
    }
    for (k, (a, g)) in amplitudes.iter().zip(grid.dofs()).enumerate() {
        if a.len() != g.len() {
            return Err(Error::Shape(format!("dof {}: {} values for {} points", k + 1, a.len(), g.len())));
        }
    }
    if channel >= n_channels {
        return Err(Error::config(
            "psi.init.channel",
            format!("channel {} exceeds n_eqs = {n_channels}", channel + 1),
        ));
    }
    let mut psi = WaveFunction::zeros(grid.shape(), n_channels);
    psi.channels[channel] = ArrayD::from_shape_fn(IxDyn(grid.shape()), |ix| {
        (0..grid.ndim()).fold(C64::new(1.0, 0.0), |acc, k| acc * amplitudes[k][ix[k]])
    });
    psi.normalize(grid.weights())?;
    Ok(psi)
}

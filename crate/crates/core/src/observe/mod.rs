//! Run-time diagnostics: expectation values, autocorrelation spectra,
//! phase-space and flux densities, reduced densities and level populations.

mod wigner;

pub use wigner::{wigner, WignerMap};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{ArrayD, Axis, Ix2, IxDyn, Zip};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grids::{map_lanes, GridKind, ProductGrid};
use crate::system::{SystemSpec, WaveFunction};

/// Observables of one wavefunction snapshot. Expectation values are
/// normalized by the squared norm; populations are not.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationRecord {
    pub t: f64,
    pub norm: f64,
    /// `Σ w |Ψ_c|²` per channel; sums to `norm²`.
    pub populations: Vec<f64>,
    pub position: Vec<f64>,
    pub position_unc: Vec<f64>,
    pub momentum: Vec<f64>,
    pub momentum_unc: Vec<f64>,
    pub potential: f64,
    pub kinetic: f64,
    /// Field-free energy, kinetic plus potential.
    pub total: f64,
    /// Field strength at `t`.
    pub field: f64,
    /// Dipole expectation value.
    pub dipole: f64,
    /// `⟨Ψ_0|Ψ(t)⟩`
    pub autocorrelation: C64,
}

fn uncertainty(m1: f64, m2: f64) -> f64 {
    (m2 - m1 * m1).max(0.0).sqrt()
}

/// Product of the quadrature weights of all dofs except `k`.
fn other_weights(grid: &ProductGrid, k: usize) -> ArrayD<f64> {
    let mut w = grid.weights().clone();
    let wk = grid.dofs()[k].weights();
    for mut lane in w.lanes_mut(Axis(k)) {
        lane.iter_mut().zip(wk).for_each(|(v, x)| *v /= x);
    }
    w
}

pub fn expect(sys: &SystemSpec, psi: &WaveFunction, psi0: &WaveFunction, field: f64) -> Result<ExpectationRecord> {
    psi.check(sys)?;
    psi0.check(sys)?;
    let grid = sys.grid();
    let w = grid.weights();
    let populations: Vec<f64> = psi
        .channels
        .iter()
        .map(|c| Zip::from(c).and(w).fold(0.0, |a, v, w| a + w * v.norm_sqr()))
        .collect();
    let n2: f64 = populations.iter().sum();
    let mut position = Vec::new();
    let mut position_unc = Vec::new();
    let mut momentum = Vec::new();
    let mut momentum_unc = Vec::new();
    for (k, g) in grid.dofs().iter().enumerate() {
        let x = grid.coordinate(k);
        let (mut s1, mut s2) = (0.0, 0.0);
        for c in &psi.channels {
            Zip::from(c).and(w).and(&x).for_each(|v, w, x| {
                let d = w * v.norm_sqr();
                s1 += d * x;
                s2 += d * x * x;
            });
        }
        position.push(s1 / n2);
        position_unc.push(uncertainty(s1 / n2, s2 / n2));
        let wo = other_weights(grid, k).mapv(f64::sqrt);
        let (mut p1, mut p2) = (0.0, 0.0);
        for c in &psi.channels {
            let mut t = c * &wo.mapv(|v| C64::new(v, 0.0));
            map_lanes(&mut t, k, |lane| {
                g.dvr_to_fbr_in_place(lane);
                let (a, b) = g.momentum_moments(lane);
                p1 += a;
                p2 += b;
            });
        }
        momentum.push(p1 / n2);
        momentum_unc.push(uncertainty(p1 / n2, p2 / n2));
    }
    let kinetic = psi.inner(&sys.apply_kinetic(psi)?, w).re / n2;
    let potential = psi.inner(&sys.apply_potential(psi)?, w).re / n2;
    let dipole = if sys.has_dipole() {
        psi.inner(&sys.apply_dipole(psi)?, w).re / n2
    } else {
        0.0
    };
    Ok(ExpectationRecord {
        t: 0.0,
        norm: n2.sqrt(),
        populations,
        position,
        position_unc,
        momentum,
        momentum_unc,
        potential,
        kinetic,
        total: kinetic + potential,
        field,
        dipole,
        autocorrelation: psi0.inner(psi, w),
    })
}

/// Frequency grid (ascending) and magnitude of a windowed Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub intensity: Vec<f64>,
}

/// `|Σ_n h_n a(t_n) e^{iωt_n}| Δt` on the discrete conjugate frequency grid,
/// with a Hann window `h` unless `window` is false.
pub fn spectrum(series: &[C64], dt: f64, window: bool) -> Result<Spectrum> {
    let n = series.len();
    if n < 4 {
        return Err(Error::config("autocorrelation", format!("at least 4 samples are needed, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::config("time.main.delta", "must be positive"));
    }
    let mut buf: Vec<C64> = series
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let h = if window { 0.5 * (1.0 - (2.0 * PI * j as f64 / (n - 1) as f64).cos()) } else { 1.0 };
            a * h
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let mut pairs: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let s = if j < (n + 1) / 2 { j as f64 } else { j as f64 - n as f64 };
            (2.0 * PI * s / (n as f64 * dt), v.norm() * dt)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Spectrum {
        omega: pairs.iter().map(|p| p.0).collect(),
        intensity: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Probability flux `Re(Ψ* (-i ∂_k Ψ)) / M_k` per dof, summed over channels.
pub fn flux(grid: &ProductGrid, psi: &WaveFunction) -> Result<Vec<ArrayD<f64>>> {
    if grid.ndim() > 2 || grid.dofs().iter().any(|g| g.kind() != GridKind::Fft) {
        return Err(Error::Unsupported("flux needs a one- or two-dimensional fft grid".into()));
    }
    let mut out = Vec::new();
    for (k, g) in grid.dofs().iter().enumerate() {
        let mut j = ArrayD::zeros(IxDyn(grid.shape()));
        for c in &psi.channels {
            grid.check_shape(c.shape())?;
            let mut d = c.clone();
            let mut err = None;
            map_lanes(&mut d, k, |lane| match g.derivative(lane) {
                Ok(v) => lane.copy_from_slice(&v),
                Err(e) => err = Some(e),
            });
            if let Some(e) = err {
                return Err(e);
            }
            Zip::from(&mut j).and(c).and(&d).for_each(|j, p, dp| {
                *j += (p.conj() * C64::new(0.0, -1.0) * dp).re / g.mass();
            });
        }
        out.push(j);
    }
    Ok(out)
}

/// Reduced density matrix of dof `k` (in the weight-scaled DVR basis,
/// trace 1) and its purity `tr ρ²`.
pub fn reduced_density(grid: &ProductGrid, psi: &WaveFunction, k: usize) -> Result<(DMatrix<C64>, f64)> {
    if k >= grid.ndim() {
        return Err(Error::config("dof", format!("dof {} does not exist", k + 1)));
    }
    let nk = grid.shape()[k];
    let mut rho = DMatrix::<C64>::zeros(nk, nk);
    let sw = grid.weights().mapv(f64::sqrt);
    for c in &psi.channels {
        grid.check_shape(c.shape())?;
        let phi = c * &sw.mapv(|v| C64::new(v, 0.0));
        let mut perm: Vec<usize> = (0..grid.ndim()).collect();
        perm.remove(k);
        perm.insert(0, k);
        let moved = phi.view().permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned();
        let rest = grid.size() / nk;
        let a = moved.into_shape_with_order(IxDyn(&[nk, rest])).expect("reshape").into_dimensionality::<Ix2>().expect("2-D");
        for i in 0..nk {
            for j in 0..nk {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..rest {
                    acc += a[[i, r]] * a[[j, r]].conj();
                }
                rho[(i, j)] += acc;
            }
        }
    }
    let tr: f64 = (0..nk).map(|i| rho[(i, i)].re).sum();
    if !(tr > 0.0) {
        return Err(Error::Numeric("reduced density of a zero wavefunction".into()));
    }
    rho /= C64::new(tr, 0.0);
    let purity = rho.iter().map(|v| v.norm_sqr()).sum();
    Ok((rho, purity))
}

/// `|⟨Ψ_v|Ψ⟩|²` for every basis state.
pub fn level_populations(grid: &ProductGrid, psi: &WaveFunction, basis: &[WaveFunction]) -> Result<Vec<f64>> {
    basis
        .iter()
        .map(|b| {
            if b.n_channels() != psi.n_channels() || b.shape() != psi.shape() {
                return Err(Error::Shape("eigenbasis and wavefunction live on different grids".into()));
            }
            grid.check_shape(b.shape())?;
            Ok(b.inner(psi, grid.weights()).norm_sqr())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::Grid1D;
    use crate::operators::{Model, MorseParams, OperatorSpec};
    use crate::stationary::{solve_bound_states, EigenOptions};
    use crate::system::{init_gauss, product_state, ChannelTerm};
    use proptest::prelude::*;

    fn line(n: usize, lo: f64, hi: f64, m: f64) -> ProductGrid {
        ProductGrid::new(vec![Grid1D::fft(n, lo, hi, m).unwrap()]).unwrap()
    }

    fn free(g: &ProductGrid) -> SystemSpec {
        SystemSpec::assemble(g.clone(), 1, &[], &[], None).unwrap()
    }

    #[test]
    fn gaussian_moments() {
        let g = line(128, -10.0, 10.0, 2.0);
        let a = init_gauss(&g.dofs()[0], 1.5, 0.6, 2.0).unwrap();
        let psi = product_state(&g, &[a], 0, 1).unwrap();
        let r = expect(&free(&g), &psi, &psi, 0.0).unwrap();
        assert!((r.norm - 1.0).abs() < 1e-12);
        assert!((r.position[0] - 1.5).abs() < 1e-8);
        assert!((r.momentum[0] - 2.0).abs() < 1e-8);
        assert!((r.position_unc[0] - 0.6).abs() < 1e-8);
        assert!((r.autocorrelation - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((r.populations[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn morse_eigenstate_energy() {
        let g = line(256, 0.7, 10.0, 1728.539);
        let op = OperatorSpec::new(Model::Morse(MorseParams::new(0.1994, 1.821, 1.189).unwrap()));
        let sys = SystemSpec::assemble(g, 1, &[ChannelTerm { row: 0, col: 0, op }], &[], None).unwrap();
        let res = solve_bound_states(&sys, 3, &EigenOptions::default()).unwrap();
        let exact = crate::system::morse_energy(0.1994, 1.189, 1728.539, 3);
        let r = expect(&sys, &res.states[3], &res.states[0], 0.0).unwrap();
        assert!(((r.total - exact) / exact).abs() < 1e-8);
        assert!(r.autocorrelation.norm() < 1e-10);
    }

    #[test]
    fn legendre_momentum_is_not_defined() {
        let g = ProductGrid::new(vec![Grid1D::legendre(6, 1.0, 1.0, 0).unwrap()]).unwrap();
        let mut psi = WaveFunction::zeros(g.shape(), 1);
        psi.channels[0].fill(C64::new(1.0, 0.0));
        let r = expect(&free(&g), &psi, &psi, 0.0).unwrap();
        assert!(r.momentum[0].is_nan());
        assert!(r.position[0].abs() < 1e-14);
    }

    #[test]
    fn spectrum_single_and_double_lines() {
        let dt = 0.5;
        let e = 1.3;
        let n = 256;
        let a: Vec<C64> = (0..n).map(|j| C64::from_polar(1.0, -e * j as f64 * dt)).collect();
        let s = spectrum(&a, dt, true).unwrap();
        let bin = 2.0 * PI / (n as f64 * dt);
        let imax = (0..n).max_by(|&i, &j| s.intensity[i].total_cmp(&s.intensity[j])).unwrap();
        assert!((s.omega[imax] - e).abs() <= bin);
        assert!(s.omega.windows(2).all(|w| w[1] > w[0]));

        let (e1, e2) = (0.5, 1.7);
        let b: Vec<C64> = (0..n)
            .map(|j| C64::from_polar(1.0, -e1 * j as f64 * dt) + C64::from_polar(1.0, -e2 * j as f64 * dt))
            .collect();
        let s = spectrum(&b, dt, true).unwrap();
        let mut peaks: Vec<usize> = (1..n - 1)
            .filter(|&i| s.intensity[i] > s.intensity[i - 1] && s.intensity[i] >= s.intensity[i + 1])
            .collect();
        peaks.sort_by(|&i, &j| s.intensity[j].total_cmp(&s.intensity[i]));
        let mut top: Vec<f64> = peaks[..2].iter().map(|&i| s.omega[i]).collect();
        top.sort_by(f64::total_cmp);
        assert!(((top[1] - top[0]) - (e2 - e1)).abs() <= 2.0 * bin);
        assert!(spectrum(&b[..3], dt, true).is_err());
    }

    #[test]
    fn flux_of_plane_wave_and_real_state() {
        let g = line(64, 0.0, 8.0, 1.0);
        let k = g.dofs()[0].fbr_labels()[3];
        let mut psi = WaveFunction::zeros(g.shape(), 1);
        for (v, x) in psi.channels[0].iter_mut().zip(g.dofs()[0].points()) {
            *v = C64::from_polar(0.7, k * x);
        }
        let j = flux(&g, &psi).unwrap();
        for v in j[0].iter() {
            assert!((v - k * 0.49).abs() < 1e-12);
        }
        let real = WaveFunction { channels: vec![psi.channels[0].mapv(|v| C64::new(v.re, 0.0))] };
        assert!(flux(&g, &real).unwrap()[0].iter().all(|v| v.abs() < 1e-12));
        let h = ProductGrid::new(vec![Grid1D::hermite(4, 1.0, 1.0, 0.0).unwrap()]).unwrap();
        assert!(matches!(flux(&h, &WaveFunction::zeros(&[4], 1)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn flux_momentum_identity() {
        let m = 3.0;
        let g = line(128, -10.0, 10.0, m);
        let a = init_gauss(&g.dofs()[0], -1.0, 0.8, 1.7).unwrap();
        let mut psi = product_state(&g, &[a], 0, 1).unwrap();
        psi.scale(C64::new(0.9, 0.0));
        let r = expect(&free(&g), &psi, &psi, 0.0).unwrap();
        let dx = g.dofs()[0].spacing().unwrap();
        let total: f64 = flux(&g, &psi).unwrap()[0].sum() * dx;
        assert!((total - r.momentum[0] / m * r.norm * r.norm).abs() < 1e-8);
    }

    #[test]
    fn reduced_density_purities() {
        let a = Grid1D::fft(6, -3.0, 3.0, 1.0).unwrap();
        let b = Grid1D::fft(8, -2.0, 2.0, 1.0).unwrap();
        let g = ProductGrid::new(vec![a.clone(), b.clone()]).unwrap();
        let psi = product_state(&g, &[init_gauss(&a, 0.1, 0.8, 0.3).unwrap(), init_gauss(&b, -0.2, 0.5, 0.0).unwrap()], 0, 1).unwrap();
        for k in 0..2 {
            let (rho, p) = reduced_density(&g, &psi, k).unwrap();
            assert!((p - 1.0).abs() < 1e-10);
            let tr: C64 = (0..rho.nrows()).map(|i| rho[(i, i)]).sum();
            assert!((tr - C64::new(1.0, 0.0)).norm() < 1e-10);
        }
        // Bell-like state on a 2×2 grid
        let two = Grid1D::legendre(2, 1.0, 1.0, 0).unwrap();
        let g2 = ProductGrid::new(vec![two.clone(), two]).unwrap();
        let mut bell = WaveFunction::zeros(&[2, 2], 1);
        bell.channels[0][[0, 0]] = C64::new(1.0, 0.0);
        bell.channels[0][[1, 1]] = C64::new(1.0, 0.0);
        let (_, p) = reduced_density(&g2, &bell, 0).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let g1 = line(5, 0.0, 1.0, 1.0);
        let mut one = WaveFunction::zeros(&[5], 1);
        one.channels[0].iter_mut().enumerate().for_each(|(i, v)| *v = C64::new(i as f64, 1.0));
        let (_, p) = reduced_density(&g1, &one, 0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn populations_of_eigenstates() {
        let g = line(64, 0.7, 6.0, 1728.539);
        let op = OperatorSpec::new(Model::Morse(MorseParams::new(0.1994, 1.821, 1.189).unwrap()));
        let sys = SystemSpec::assemble(g.clone(), 1, &[ChannelTerm { row: 0, col: 0, op }], &[], None).unwrap();
        let res = solve_bound_states(&sys, 5, &EigenOptions::default()).unwrap();
        let p = level_populations(&g, &res.states[3], &res.states).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-10);
        for (v, x) in p.iter().enumerate() {
            if v != 3 {
                assert!(*x < 1e-10);
            }
        }
        let mut lossy = res.states[1].clone();
        lossy.scale(C64::new(0.8, 0.0));
        assert!(level_populations(&g, &lossy, &res.states).unwrap().iter().sum::<f64>() < 1.0);
    }

    proptest! {
        #[test]
        fn record_populations_sum_to_norm(seed in proptest::collection::vec(-1.0f64..1.0, 5), s in 0.1f64..1.0) {
            let g = line(16, -2.0, 2.0, 1.0);
            let mut psi = WaveFunction::zeros(g.shape(), 2);
            for (c, ch) in psi.channels.iter_mut().enumerate() {
                for (i, v) in ch.iter_mut().enumerate() {
                    *v = C64::new(seed[(i + c) % 5] * s, seed[(i * 3 + c) % 5]);
                }
            }
            let sys = SystemSpec::from_tensors(g.clone(), 2, vec![None; 4], vec![None; 4], None).unwrap();
            let r = expect(&sys, &psi, &psi, 0.0).unwrap();
            let sum: f64 = r.populations.iter().sum();
            prop_assert!((sum - r.norm * r.norm).abs() < 1e-12 * sum.max(1e-300));
        }

        #[test]
        fn parseval_between_densities(seed in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let g = Grid1D::fft(32, -4.0, 4.0, 1.0).unwrap();
            let v: Vec<C64> = (0..32).map(|i| C64::new(seed[i % 7], seed[(i * 5 + 1) % 7])).collect();
            let f = g.dvr_to_fbr(&v).unwrap();
            let x: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>() * g.spacing().unwrap();
            let p: f64 = f.iter().map(|a| a.norm_sqr()).sum();
            prop_assert!((x - p).abs() <= 1e-12 * x);
        }

        #[test]
        fn flux_of_real_states_vanishes(seed in proptest::collection::vec(-1.0f64..1.0, 9)) {
            let g = ProductGrid::new(vec![Grid1D::fft(10, -1.0, 1.0, 1.0).unwrap(), Grid1D::fft(12, 0.0, 3.0, 2.0).unwrap()]).unwrap();
            let mut psi = WaveFunction::zeros(g.shape(), 1);
            psi.channels[0].iter_mut().enumerate().for_each(|(i, v)| *v = C64::new(seed[i % 9] + seed[(i / 9) % 9], 0.0));
            for j in flux(&g, &psi).unwrap() {
                prop_assert!(j.iter().all(|v| v.abs() < 1e-12));
            }
        }
    }
}

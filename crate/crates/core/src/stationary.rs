//! Bound states by explicit construction and diagonalization of the
//! Hamiltonian matrix in the product DVR.

use nalgebra::DMatrix;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{lanczos_lowest, sym_eigen, Csr};
use crate::observe::{expect, ExpectationRecord};
use crate::system::{SystemSpec, WaveFunction};

/// Default cap on the matrix dimension.
pub const DEFAULT_DIM_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Entries with magnitude below this are dropped (when positive).
    pub threshold: f64,
    pub dim_cap: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Dense,
            threshold: 0.0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub energies: Vec<f64>,
    pub states: Vec<WaveFunction>,
    pub n_requested: usize,
    pub method: EigenMethod,
}

/// Field-free Hamiltonian matrix in the weight-scaled DVR basis. Rows are
/// ordered channel-major, then row-major over the grid.
pub fn build_matrix(sys: &SystemSpec, threshold: f64, dim_cap: usize) -> Result<Csr> {
    let grid = sys.grid();
    let size = grid.size();
    let nu = sys.n_channels();
    let dim = nu * size;
    if dim > dim_cap {
        return Err(Error::Resource { dim, cap: dim_cap });
    }
    let shape = grid.shape();
    let ndim = shape.len();
    let mut strides = vec![1usize; ndim];
    for k in (0..ndim.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let kin: Vec<DMatrix<f64>> = grid.dofs().iter().map(|g| g.kinetic_matrix_dvr()).collect();
    let pots: Vec<Option<Vec<f64>>> = (0..nu * nu)
        .map(|ab| sys.pot(ab / nu, ab % nu).map(|v| v.iter().copied().collect()))
        .collect();
    let mut rows = Vec::with_capacity(dim);
    for c in 0..nu {
        for p in 0..size {
            let mut row = Vec::new();
            let base = c * size;
            for k in 0..ndim {
                let ik = (p / strides[k]) % shape[k];
                let origin = p - ik * strides[k];
                for j in 0..shape[k] {
                    let t = kin[k][(ik, j)];
                    if t != 0.0 {
                        row.push((base + origin + j * strides[k], t));
                    }
                }
            }
            for d in 0..nu {
                if let Some(v) = &pots[c * nu + d] {
                    if v[p] != 0.0 {
                        row.push((d * size + p, v[p]));
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok(Csr::from_rows(dim, rows, threshold))
}

fn vector_to_state(sys: &SystemSpec, column: &[f64]) -> WaveFunction {
    let grid = sys.grid();
    let size = grid.size();
    let w: Vec<f64> = grid.weights().iter().copied().collect();
    let mut vals: Vec<f64> = column.to_vec();
    for (i, v) in vals.iter_mut().enumerate() {
        *v /= w[i % size].sqrt();
    }
    let peak = vals
        .iter()
        .copied()
        .fold((0.0f64, 0.0f64), |(m, s), v| if v.abs() > m { (v.abs(), v) } else { (m, s) })
        .1;
    let sign = if peak < 0.0 { -1.0 } else { 1.0 };
    let channels = (0..sys.n_channels())
        .map(|c| {
            let data = vals[c * size..(c + 1) * size].iter().map(|v| C64::new(sign * v, 0.0)).collect();
            ArrayD::from_shape_vec(IxDyn(grid.shape()), data).expect("shape")
        })
        .collect();
    WaveFunction { channels }
}

/// Lowest `n_stop + 1` eigenpairs of the field-free Hamiltonian.
pub fn solve_bound_states(sys: &SystemSpec, n_stop: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let csr = build_matrix(sys, opts.threshold, opts.dim_cap)?;
    let dim = csr.dim;
    if n_stop >= dim {
        return Err(Error::config(
            "psi.eigen.stop",
            format!("{n_stop} must be below the matrix dimension {dim}"),
        ));
    }
    let k = n_stop + 1;
    let (values, vectors) = match opts.method {
        EigenMethod::Dense => sym_eigen(csr.to_dense()),
        EigenMethod::Sparse => lanczos_lowest(&csr, k, 1e-12)?,
    };
    let states = (0..k)
        .map(|i| {
            let col: Vec<f64> = vectors.column(i).iter().copied().collect();
            vector_to_state(sys, &col)
        })
        .collect();
    Ok(EigenResult {
        energies: values[..k].to_vec(),
        states,
        n_requested: k,
        method: opts.method,
    })
}

/// Expectation values of every eigenstate (`t` carries the state index).
pub fn expectations_bound(result: &EigenResult, sys: &SystemSpec) -> Result<Vec<ExpectationRecord>> {
    result
        .states
        .iter()
        .enumerate()
        .map(|(n, psi)| {
            let mut rec = expect(sys, psi, psi, 0.0)?;
            rec.t = n as f64;
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{Grid1D, ProductGrid};
    use crate::operators::{Model, MorseParams, OperatorSpec, TaylorSeries};
    use crate::system::{morse_energy, ChannelTerm};

    fn with_pot(grid: ProductGrid, model: Model) -> SystemSpec {
        SystemSpec::assemble(
            grid,
            1,
            &[ChannelTerm { row: 0, col: 0, op: OperatorSpec::new(model) }],
            &[],
            None,
        )
        .unwrap()
    }

    fn oscillator(n: usize, mass: f64, omega: f64) -> SystemSpec {
        let g = ProductGrid::new(vec![Grid1D::hermite(n, mass, omega, 0.0).unwrap()]).unwrap();
        with_pot(g, Model::Taylor(TaylorSeries { coeffs: vec![0.0, 0.0, mass * omega * omega], center: 0.0 }))
    }

    #[test]
    fn free_matrix_is_kinetic() {
        let g1 = Grid1D::fft(4, 0.0, 2.0, 1.0).unwrap();
        let sys = SystemSpec::assemble(ProductGrid::new(vec![g1.clone()]).unwrap(), 1, &[], &[], None).unwrap();
        let m = build_matrix(&sys, 0.0, DEFAULT_DIM_CAP).unwrap().to_dense();
        assert!((m - g1.kinetic_matrix_dvr()).amax() < 1e-15);
        let z = build_matrix(&sys, f64::INFINITY, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(z.nnz(), 0);
    }

    #[test]
    fn dimension_cap() {
        let sys = oscillator(10, 1.0, 1.0);
        assert!(matches!(build_matrix(&sys, 0.0, 8), Err(Error::Resource { dim: 10, cap: 8 })));
    }

    #[test]
    fn morse_matrix_symmetric() {
        let g = ProductGrid::new(vec![Grid1D::fft(256, 0.7, 10.0, 1728.539).unwrap()]).unwrap();
        let sys = with_pot(g, Model::Morse(MorseParams::new(0.1994, 1.821, 1.189).unwrap()));
        let m = build_matrix(&sys, 0.0, DEFAULT_DIM_CAP).unwrap().to_dense();
        assert_eq!(m.nrows(), 256);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn harmonic_oscillator_on_hermite_grid() {
        let (mass, omega) = (1728.539, 0.0172);
        // quadrature truncation of x² leaves one spurious level at ω(3N-2)/4,
        // above the requested window for N = 40
        let sys = oscillator(40, mass, omega);
        let res = solve_bound_states(&sys, 20, &EigenOptions::default()).unwrap();
        for (n, e) in res.energies.iter().enumerate() {
            let exact = omega * (n as f64 + 0.5);
            assert!(((e - exact) / exact).abs() < 1e-10, "n={n} {e} {exact}");
        }
        let recs = expectations_bound(&res, &sys).unwrap();
        let r0 = &recs[0];
        assert!(r0.position[0].abs() < 1e-8);
        assert!((r0.position_unc[0] * r0.momentum_unc[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn rigid_rotor_levels() {
        let (mass, radius) = (1.3, 0.9);
        let g = ProductGrid::new(vec![Grid1D::legendre(16, mass, radius, 0).unwrap()]).unwrap();
        let sys = SystemSpec::assemble(g, 1, &[], &[], None).unwrap();
        let res = solve_bound_states(&sys, 15, &EigenOptions::default()).unwrap();
        for (l, e) in res.energies.iter().enumerate() {
            let lf = l as f64;
            let exact = lf * (lf + 1.0) / (2.0 * mass * radius * radius);
            assert!((e - exact).abs() < 1e-12 * (1.0 + exact));
        }
    }

    #[test]
    fn dense_and_sparse_agree_with_residuals() {
        let g = ProductGrid::new(vec![Grid1D::fft(128, 0.7, 10.0, 1728.539).unwrap()]).unwrap();
        let sys = with_pot(g, Model::Morse(MorseParams::new(0.1994, 1.821, 1.189).unwrap()));
        let dense = solve_bound_states(&sys, 8, &EigenOptions::default()).unwrap();
        let sparse = solve_bound_states(
            &sys,
            8,
            &EigenOptions { method: EigenMethod::Sparse, threshold: 1e-14, ..Default::default() },
        )
        .unwrap();
        let w = sys.grid().weights();
        let radius = build_matrix(&sys, 0.0, DEFAULT_DIM_CAP).unwrap().norm_inf();
        for (res, label) in [(&dense, "dense"), (&sparse, "sparse")] {
            for (e, psi) in res.energies.iter().zip(&res.states) {
                let mut h = sys.apply_hamiltonian(psi, 0.0).unwrap();
                h.axpy(C64::new(-e, 0.0), psi);
                assert!(h.norm(w) < 1e-8 * radius, "{label}");
            }
            for i in 0..res.states.len() {
                for j in 0..res.states.len() {
                    let o = res.states[i].inner(&res.states[j], w).norm();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((o - want).abs() < 1e-8);
                }
            }
        }
        for (a, b) in dense.energies.iter().zip(&sparse.energies) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn converges_with_grid_size() {
        let p = MorseParams::new(0.1994, 1.821, 1.189).unwrap();
        let exact = morse_energy(0.1994, 1.189, 1728.539, 0);
        let mut last = f64::INFINITY;
        for n in [48, 64, 96, 128] {
            let g = ProductGrid::new(vec![Grid1D::fft(n, 0.7, 10.0, 1728.539).unwrap()]).unwrap();
            let e0 = solve_bound_states(&with_pot(g, Model::Morse(p)), 0, &EigenOptions::default()).unwrap().energies[0];
            let err = (e0 - exact).abs();
            assert!(err < last.max(1e-12), "n={n} {err} {last}");
            last = err;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn energy_partition_and_sign_convention() {
        let sys = oscillator(12, 1.0, 1.0);
        let res = solve_bound_states(&sys, 4, &EigenOptions::default()).unwrap();
        for (rec, (e, psi)) in expectations_bound(&res, &sys).unwrap().iter().zip(res.energies.iter().zip(&res.states)) {
            assert!(((rec.kinetic + rec.potential) - e).abs() < 1e-8 * e.abs());
            let peak = psi.channels[0].iter().map(|v| v.re).fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(peak > 0.0);
        }
    }

    #[test]
    fn too_many_states_requested() {
        let sys = oscillator(4, 1.0, 1.0);
        assert!(matches!(solve_bound_states(&sys, 4, &EigenOptions::default()), Err(Error::Config { .. })));
    }
}

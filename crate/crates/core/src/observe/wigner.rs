use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grids::{GridKind, ProductGrid};
use crate::system::WaveFunction;

/// Phase-space quasi-density on `x` (grid points) × `p` (ascending momenta).
#[derive(Debug, Clone, PartialEq)]
pub struct WignerMap {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `values[[i, j]]` at `(x[i], p[j])`, summed over channels.
    pub values: Array2<f64>,
}

/// Wigner function of a wavefunction on a one-dimensional fft grid.
/// Half-step displacements come from band-limited interpolation on a
/// twice-refined grid. For even point counts the marginals are exact only
/// when the Nyquist component vanishes.
pub fn wigner(grid: &ProductGrid, psi: &WaveFunction) -> Result<WignerMap> {
    if grid.ndim() != 1 || grid.dofs()[0].kind() != GridKind::Fft {
        return Err(Error::Unsupported("wigner needs a one-dimensional fft grid".into()));
    }
    let g1 = &grid.dofs()[0];
    let n = g1.len();
    let dx = g1.spacing().expect("fft grid has a spacing");
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv2 = planner.plan_fft_inverse(2 * n);
    let inv = planner.plan_fft_inverse(n);
    let mut values = Array2::<f64>::zeros((n, n));
    let half = n / 2;
    for ch in &psi.channels {
        grid.check_shape(ch.shape())?;
        let mut f: Vec<C64> = ch.iter().copied().collect();
        fwd.process(&mut f);
        let mut pad = vec![C64::new(0.0, 0.0); 2 * n];
        for k in 0..n {
            let s = if k < (n + 1) / 2 { k as isize } else { k as isize - n as isize };
            if n % 2 == 0 && k == half {
                pad[half] += f[k] * 0.5;
                pad[2 * n - half] += f[k] * 0.5;
            } else {
                pad[s.rem_euclid(2 * n as isize) as usize] += f[k];
            }
        }
        inv2.process(&mut pad);
        let interp: Vec<C64> = pad.iter().map(|v| v / n as f64).collect();
        let at = |j: isize| interp[j.rem_euclid(2 * n as isize) as usize];
        let mut b = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            b.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let c = 2 * i as isize;
            for m in -(half as isize)..=(half as isize) {
                let mut term = at(c + m).conj() * at(c - m);
                if n % 2 == 0 && m.unsigned_abs() == half {
                    term *= 0.5;
                }
                b[m.rem_euclid(n as isize) as usize] += term;
            }
            inv.process(&mut b);
            for j in 0..n {
                values[[i, j]] += dx / (2.0 * PI) * b[j].re;
            }
        }
    }
    let labels = g1.fbr_labels();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));
    let sorted = Array2::from_shape_fn((n, n), |(i, j)| values[[i, order[j]]]);
    Ok(WignerMap {
        x: g1.points().to_vec(),
        p: order.iter().map(|&j| labels[j]).collect(),
        values: sorted,
    })
}

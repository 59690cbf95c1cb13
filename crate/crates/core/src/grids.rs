//! One-dimensional DVR/FBR grids and their direct products.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, tridiag_eigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Fft,
    Hermite,
    Legendre,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Fft => "fft",
            GridKind::Hermite => "hermite",
            GridKind::Legendre => "legendre",
        }
    }
}

/// Kind-specific construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridParams {
    Fft { x_min: f64, x_max: f64 },
    Hermite { omega: f64, r_e: f64 },
    Legendre { m_quantum: u32, radius: f64 },
}

#[derive(Clone)]
enum Kinetic {
    /// Diagonal in the FBR.
    Diagonal(Vec<f64>),
    /// Dense real symmetric FBR matrix.
    Matrix(DMatrix<f64>),
}

#[derive(Clone)]
struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Propagator factor `exp(-i T dt)` of one grid, acting in its FBR.
#[derive(Debug, Clone)]
pub enum KineticExp {
    Diagonal(Vec<C64>),
    Matrix(DMatrix<C64>),
}

/// A one-dimensional grid: DVR points and weights, FBR labels, default
/// kinetic operator and the transforms between the two representations.
#[derive(Clone)]
pub struct Grid1D {
    params: GridParams,
    mass: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
    labels: Vec<f64>,
    kinetic: Kinetic,
    /// `U[(n, i)] = sqrt(w_i) φ_n(R_i)`, orthogonal (hermite and legendre).
    basis: Option<DMatrix<f64>>,
    fft: Option<FftPlans>,
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("params", &self.params)
            .field("mass", &self.mass)
            .field("n_pts", &self.points.len())
            .finish()
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.mass == other.mass && self.points.len() == other.points.len()
    }
}

fn check_positive(field: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::config(field, format!("must be positive and finite, got {value}")));
    }
    Ok(())
}

/// Normalized Hermite functions `h_0(ξ) … h_{n-1}(ξ)`.
fn hermite_functions(xi: f64, n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n];
    h[0] = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    if n > 1 {
        h[1] = 2f64.sqrt() * xi * h[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        h[k + 1] = (2.0 / (kf + 1.0)).sqrt() * xi * h[k] - (kf / (kf + 1.0)).sqrt() * h[k - 1];
    }
    h
}

/// Normalized associated Legendre functions `P̄_l^m(x)`, `l = m … m+n-1`,
/// with `∫_{-1}^{1} P̄_l^m P̄_{l'}^m dx = δ_{ll'}` and no Condon-Shortley phase.
fn legendre_functions(x: f64, m: u32, n: usize) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = (0.5f64).sqrt();
    for k in 1..=m {
        let kf = k as f64;
        pmm *= ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * s;
    }
    let mut out = vec![0.0; n];
    out[0] = pmm;
    let mf = m as f64;
    if n > 1 {
        out[1] = x * (2.0 * mf + 3.0).sqrt() * pmm;
    }
    for j in 2..n {
        let l = mf + j as f64;
        let a = ((4.0 * l * l - 1.0) / (l * l - mf * mf)).sqrt();
        let lp = l - 1.0;
        let b = ((lp * lp - mf * mf) / (4.0 * lp * lp - 1.0)).sqrt();
        out[j] = a * (x * out[j - 1] - b * out[j - 2]);
    }
    out
}

/// Gauss rule from the eigen-decomposition of a Jacobi matrix. Column `i` of
/// the eigenvector matrix holds `sqrt(w_i) φ_n(R_i)` up to sign, which is fixed
/// by the positive lowest basis function `phi0`.
fn gauss_rule(
    vectors: &DMatrix<f64>,
    nodes: &[f64],
    phi0: impl Fn(f64) -> f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = nodes.len();
    let mut u = vectors.clone();
    let mut weights = Vec::with_capacity(n);
    for (i, &x) in nodes.iter().enumerate() {
        if u[(0, i)] < 0.0 {
            u.column_mut(i).neg_mut();
        }
        let w = (u[(0, i)] / phi0(x)).powi(2);
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::Numeric(format!(
                "quadrature weight {i} of {n} is not finite; the grid is too large"
            )));
        }
        weights.push(w);
    }
    Ok((weights, u))
}

fn strictly_increasing(points: &[f64]) -> bool {
    points.windows(2).all(|w| w[1] > w[0])
}

impl Grid1D {
    /// Equally spaced plane-wave grid on `[x_min, x_max)`.
    pub fn fft(n_pts: usize, x_min: f64, x_max: f64, mass: f64) -> Result<Self> {
        if n_pts < 2 {
            return Err(Error::config("n_pts", format!("fft grids need at least 2 points, got {n_pts}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::config("x_max", format!("must exceed x_min ({x_min}), got {x_max}")));
        }
        check_positive("mass", mass)?;
        let dx = (x_max - x_min) / n_pts as f64;
        let points = (0..n_pts).map(|i| x_min + i as f64 * dx).collect();
        let weights = vec![dx; n_pts];
        let dk = 2.0 * PI / (n_pts as f64 * dx);
        let labels: Vec<f64> = (0..n_pts)
            .map(|n| {
                let j = if n < (n_pts + 1) / 2 { n as f64 } else { n as f64 - n_pts as f64 };
                j * dk
            })
            .collect();
        let spectrum = labels.iter().map(|k| k * k / (2.0 * mass)).collect();
        let mut planner = FftPlanner::new();
        let fft = FftPlans {
            forward: planner.plan_fft_forward(n_pts),
            inverse: planner.plan_fft_inverse(n_pts),
        };
        Ok(Grid1D {
            params: GridParams::Fft { x_min, x_max },
            mass,
            points,
            weights,
            labels,
            kinetic: Kinetic::Diagonal(spectrum),
            basis: None,
            fft: Some(fft),
        })
    }

    /// Gauss-Hermite grid built from harmonic-oscillator eigenfunctions of
    /// frequency `omega` centred at `r_e`.
    pub fn hermite(n_pts: usize, mass: f64, omega: f64, r_e: f64) -> Result<Self> {
        if n_pts < 1 {
            return Err(Error::config("n_pts", "must be at least 1"));
        }
        check_positive("mass", mass)?;
        check_positive("omega", omega)?;
        if !r_e.is_finite() {
            return Err(Error::config("r_e", "must be finite"));
        }
        let off: Vec<f64> = (1..n_pts).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let (xi, vectors) = tridiag_eigen(&vec![0.0; n_pts], &off);
        let mw = mass * omega;
        let scale = mw.powf(0.25);
        let (weights, basis) = gauss_rule(&vectors, &xi, |x| scale * hermite_functions(x, 1)[0])?;
        let points: Vec<f64> = xi.iter().map(|x| r_e + x / mw.sqrt()).collect();
        if !strictly_increasing(&points) {
            return Err(Error::Numeric("Gauss-Hermite nodes are not distinct".into()));
        }
        let mut k = DMatrix::zeros(n_pts, n_pts);
        for n in 0..n_pts {
            let nf = n as f64;
            k[(n, n)] = omega / 4.0 * (2.0 * nf + 1.0);
            if n + 2 < n_pts {
                let v = -omega / 4.0 * ((nf + 1.0) * (nf + 2.0)).sqrt();
                k[(n + 2, n)] = v;
                k[(n, n + 2)] = v;
            }
        }
        Ok(Grid1D {
            params: GridParams::Hermite { omega, r_e },
            mass,
            points,
            weights,
            labels: (0..n_pts).map(|n| n as f64).collect(),
            kinetic: Kinetic::Matrix(k),
            basis: Some(basis),
            fft: None,
        })
    }

    /// Gauss-Legendre grid in `cos θ` for a rotor of fixed `radius` and
    /// magnetic quantum number `m_quantum`.
    ///
    /// For `m > 0` the nodes are those of the Gauss rule with weight
    /// `(1 - x²)^m`, which makes the transform to normalized `P_l^m` exact.
    pub fn legendre(n_pts: usize, mass: f64, radius: f64, m_quantum: u32) -> Result<Self> {
        if n_pts < 1 {
            return Err(Error::config("n_pts", "must be at least 1"));
        }
        check_positive("mass", mass)?;
        check_positive("radius", radius)?;
        let lam = m_quantum as f64 + 0.5;
        let off: Vec<f64> = (1..n_pts)
            .map(|k| {
                let k = k as f64;
                (k * (k + 2.0 * lam - 1.0) / (4.0 * (k + lam) * (k + lam - 1.0))).sqrt()
            })
            .collect();
        let (points, vectors) = tridiag_eigen(&vec![0.0; n_pts], &off);
        let (weights, basis) = gauss_rule(&vectors, &points, |x| legendre_functions(x, m_quantum, 1)[0])?;
        if !strictly_increasing(&points) || points.iter().any(|x| x.abs() >= 1.0) {
            return Err(Error::Numeric("Gauss-Legendre nodes are not distinct".into()));
        }
        let labels: Vec<f64> = (0..n_pts).map(|j| (m_quantum as usize + j) as f64).collect();
        let spectrum = labels
            .iter()
            .map(|l| l * (l + 1.0) / (2.0 * mass * radius * radius))
            .collect();
        Ok(Grid1D {
            params: GridParams::Legendre { m_quantum, radius },
            mass,
            points,
            weights,
            labels,
            kinetic: Kinetic::Diagonal(spectrum),
            basis: Some(basis),
            fft: None,
        })
    }

    pub fn kind(&self) -> GridKind {
        match self.params {
            GridParams::Fft { .. } => GridKind::Fft,
            GridParams::Hermite { .. } => GridKind::Hermite,
            GridParams::Legendre { .. } => GridKind::Legendre,
        }
    }

    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// FBR labels: momenta `k_n` (fft, in transform order), oscillator
    /// quanta `n` (hermite) or angular momenta `l` (legendre).
    pub fn fbr_labels(&self) -> &[f64] {
        &self.labels
    }

    /// Grid spacing of an fft grid.
    pub fn spacing(&self) -> Option<f64> {
        match self.params {
            GridParams::Fft { x_min, x_max } => Some((x_max - x_min) / self.len() as f64),
            _ => None,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "expected {} values on the {} grid, got {len}",
                self.len(),
                self.kind().name()
            )));
        }
        Ok(())
    }

    pub fn dvr_to_fbr(&self, values: &[C64]) -> Result<Vec<C64>> {
        self.check_len(values.len())?;
        let mut buf = values.to_vec();
        self.dvr_to_fbr_in_place(&mut buf);
        Ok(buf)
    }

    pub fn fbr_to_dvr(&self, coefficients: &[C64]) -> Result<Vec<C64>> {
        self.check_len(coefficients.len())?;
        let mut buf = coefficients.to_vec();
        self.fbr_to_dvr_in_place(&mut buf);
        Ok(buf)
    }

    /// In-place forward transform; `buf.len()` must equal the grid size.
    pub fn dvr_to_fbr_in_place(&self, buf: &mut [C64]) {
        if let Some(fft) = &self.fft {
            fft.forward.process(buf);
            let s = (self.weights[0] / self.len() as f64).sqrt();
            buf.iter_mut().for_each(|v| *v *= s);
        } else if let Some(u) = &self.basis {
            let scaled: Vec<C64> = buf
                .iter()
                .zip(&self.weights)
                .map(|(v, w)| v * w.sqrt())
                .collect();
            for (n, out) in buf.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (i, v) in scaled.iter().enumerate() {
                    acc += v * u[(n, i)];
                }
                *out = acc;
            }
        }
    }

    /// In-place inverse transform.
    pub fn fbr_to_dvr_in_place(&self, buf: &mut [C64]) {
        if let Some(fft) = &self.fft {
            fft.inverse.process(buf);
            let s = 1.0 / (self.weights[0] * self.len() as f64).sqrt();
            buf.iter_mut().for_each(|v| *v *= s);
        } else if let Some(u) = &self.basis {
            let coef = buf.to_vec();
            for (i, out) in buf.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (n, c) in coef.iter().enumerate() {
                    acc += c * u[(n, i)];
                }
                *out = acc / self.weights[i].sqrt();
            }
        }
    }

    /// Applies the kinetic operator to FBR coefficients in place.
    pub fn apply_kinetic_fbr(&self, buf: &mut [C64]) {
        match &self.kinetic {
            Kinetic::Diagonal(spec) => buf.iter_mut().zip(spec).for_each(|(v, t)| *v *= *t),
            Kinetic::Matrix(k) => {
                let coef = buf.to_vec();
                for (m, out) in buf.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (n, c) in coef.iter().enumerate() {
                        acc += c * k[(m, n)];
                    }
                    *out = acc;
                }
            }
        }
    }

    pub fn apply_kinetic_in_place(&self, buf: &mut [C64]) {
        self.dvr_to_fbr_in_place(buf);
        self.apply_kinetic_fbr(buf);
        self.fbr_to_dvr_in_place(buf);
    }

    pub fn apply_kinetic(&self, values: &[C64]) -> Result<Vec<C64>> {
        self.check_len(values.len())?;
        let mut buf = values.to_vec();
        self.apply_kinetic_in_place(&mut buf);
        Ok(buf)
    }

    /// Kinetic operator in the weight-scaled DVR basis `sqrt(w_i) δ(R - R_i)`,
    /// i.e. `Uᵀ K U`. For fft grids (uniform weights) this is also the matrix
    /// acting on plain amplitudes; in general
    /// `apply_kinetic(v) = W^{-1/2} T W^{1/2} v`.
    pub fn kinetic_matrix_dvr(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut t = DMatrix::zeros(n, n);
        match &self.basis {
            Some(u) => {
                let k = self.kinetic_fbr_matrix();
                t = u.transpose() * k * u;
            }
            None => {
                let mut buf = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                    buf[j] = C64::new(1.0, 0.0);
                    self.apply_kinetic_in_place(&mut buf);
                    for i in 0..n {
                        t[(i, j)] = buf[i].re;
                    }
                }
            }
        }
        let sym = (&t + t.transpose()) * 0.5;
        sym
    }

    /// Kinetic operator as a dense FBR matrix.
    pub fn kinetic_fbr_matrix(&self) -> DMatrix<f64> {
        match &self.kinetic {
            Kinetic::Diagonal(spec) => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spec.clone())),
            Kinetic::Matrix(k) => k.clone(),
        }
    }

    /// Largest eigenvalue of the kinetic operator on this grid.
    pub fn kinetic_max(&self) -> f64 {
        match &self.kinetic {
            Kinetic::Diagonal(spec) => spec.iter().copied().fold(0.0, f64::max),
            Kinetic::Matrix(k) => sym_eigen(k.clone()).0.last().copied().unwrap_or(0.0),
        }
    }

    /// Copy of this grid whose kinetic spectrum is clipped from above at `cap`.
    pub fn with_kinetic_cap(&self, cap: f64) -> Grid1D {
        let mut g = self.clone();
        g.kinetic = match &self.kinetic {
            Kinetic::Diagonal(spec) => Kinetic::Diagonal(spec.iter().map(|t| t.min(cap)).collect()),
            Kinetic::Matrix(k) => {
                let (vals, q) = sym_eigen(k.clone());
                let d = nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| v.min(cap)));
                Kinetic::Matrix(&q * DMatrix::from_diagonal(&d) * q.transpose())
            }
        };
        g
    }

    /// `exp(-i T dt)` in the FBR.
    pub fn kinetic_exp(&self, dt: f64) -> KineticExp {
        match &self.kinetic {
            Kinetic::Diagonal(spec) => {
                KineticExp::Diagonal(spec.iter().map(|t| C64::from_polar(1.0, -t * dt)).collect())
            }
            Kinetic::Matrix(k) => {
                let (vals, q) = sym_eigen(k.clone());
                let n = vals.len();
                let mut e = DMatrix::<C64>::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        let mut acc = C64::new(0.0, 0.0);
                        for (j, v) in vals.iter().enumerate() {
                            acc += C64::from_polar(q[(a, j)] * q[(b, j)], -v * dt);
                        }
                        e[(a, b)] = acc;
                    }
                }
                KineticExp::Matrix(e)
            }
        }
    }

    /// Unnormalized first and second momentum moments `(Σ ψ* p ψ, Σ ψ* p² ψ)`
    /// of FBR coefficients. Legendre grids have no linear momentum and
    /// return NaN.
    pub fn momentum_moments(&self, fbr: &[C64]) -> (f64, f64) {
        match self.params {
            GridParams::Fft { .. } => fbr.iter().zip(&self.labels).fold((0.0, 0.0), |(a, b), (c, k)| {
                let p = c.norm_sqr();
                (a + p * k, b + p * k * k)
            }),
            GridParams::Hermite { omega, .. } => {
                // p = i sqrt(Mω/2) (a† - a)
                let s = (self.mass * omega / 2.0).sqrt();
                let mut p1 = 0.0;
                for n in 0..fbr.len().saturating_sub(1) {
                    // <n+1|p|n> = i s sqrt(n+1); contributes 2 Re(ψ*_{n+1} i s sqrt(n+1) ψ_n)
                    let z = fbr[n + 1].conj() * fbr[n] * C64::new(0.0, s * ((n + 1) as f64).sqrt());
                    p1 += 2.0 * z.re;
                }
                let mut t = fbr.to_vec();
                self.apply_kinetic_fbr(&mut t);
                let tk: f64 = fbr.iter().zip(&t).map(|(a, b)| (a.conj() * b).re).sum();
                (p1, 2.0 * self.mass * tk)
            }
            GridParams::Legendre { .. } => (f64::NAN, f64::NAN),
        }
    }

    /// Spatial derivative of DVR values on an fft grid, via multiplication by
    /// `i k` in the FBR. The unpaired Nyquist component is dropped so that the
    /// derivative of real data stays real.
    pub fn derivative(&self, values: &[C64]) -> Result<Vec<C64>> {
        if self.kind() != GridKind::Fft {
            return Err(Error::Unsupported(format!(
                "derivatives are only available on fft grids, not {}",
                self.kind().name()
            )));
        }
        self.check_len(values.len())?;
        let n = self.len();
        let mut buf = values.to_vec();
        self.dvr_to_fbr_in_place(&mut buf);
        for (j, (c, k)) in buf.iter_mut().zip(&self.labels).enumerate() {
            if n % 2 == 0 && j == n / 2 {
                *c = C64::new(0.0, 0.0);
            } else {
                *c *= C64::new(0.0, *k);
            }
        }
        self.fbr_to_dvr_in_place(&mut buf);
        Ok(buf)
    }
}

impl KineticExp {
    pub fn apply_fbr(&self, buf: &mut [C64]) {
        match self {
            KineticExp::Diagonal(ph) => buf.iter_mut().zip(ph).for_each(|(v, p)| *v *= p),
            KineticExp::Matrix(e) => {
                let coef = buf.to_vec();
                for (m, out) in buf.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (n, c) in coef.iter().enumerate() {
                        acc += c * e[(m, n)];
                    }
                    *out = acc;
                }
            }
        }
    }
}

/// Applies `f` to every one-dimensional lane of `arr` along `axis`.
pub fn map_lanes(arr: &mut ArrayD<C64>, axis: usize, mut f: impl FnMut(&mut [C64])) {
    let n = arr.shape()[axis];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for mut lane in arr.lanes_mut(Axis(axis)) {
        if let Some(s) = lane.as_slice_mut() {
            f(s);
            continue;
        }
        for (b, x) in buf.iter_mut().zip(lane.iter()) {
            *b = *x;
        }
        f(&mut buf);
        for (x, b) in lane.iter_mut().zip(&buf) {
            *x = *b;
        }
    }
}

/// Direct product of one-dimensional grids, row-major over the dofs.
#[derive(Debug, Clone)]
pub struct ProductGrid {
    dofs: Vec<Grid1D>,
    shape: Vec<usize>,
    weights: ArrayD<f64>,
}

impl PartialEq for ProductGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dofs == other.dofs
    }
}

impl ProductGrid {
    pub fn new(dofs: Vec<Grid1D>) -> Result<Self> {
        if dofs.is_empty() {
            return Err(Error::config("space.dof", "at least one degree of freedom is required"));
        }
        let shape: Vec<usize> = dofs.iter().map(|g| g.len()).collect();
        let mut weights = ArrayD::from_elem(IxDyn(&shape), 1.0);
        for (k, g) in dofs.iter().enumerate() {
            for mut lane in weights.lanes_mut(Axis(k)) {
                lane.iter_mut().zip(g.weights()).for_each(|(v, w)| *v *= w);
            }
        }
        Ok(ProductGrid { dofs, shape, weights })
    }

    pub fn dofs(&self) -> &[Grid1D] {
        &self.dofs
    }

    pub fn ndim(&self) -> usize {
        self.dofs.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }

    /// Quadrature weights on the full grid.
    pub fn weights(&self) -> &ArrayD<f64> {
        &self.weights
    }

    /// Coordinate values of dof `k` broadcast over the full grid.
    pub fn coordinate(&self, k: usize) -> ArrayD<f64> {
        let mut c = ArrayD::zeros(IxDyn(&self.shape));
        for mut lane in c.lanes_mut(Axis(k)) {
            lane.iter_mut().zip(self.dofs[k].points()).for_each(|(v, x)| *v = *x);
        }
        c
    }

    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if shape != self.shape.as_slice() {
            return Err(Error::Shape(format!("expected grid shape {:?}, got {:?}", self.shape, shape)));
        }
        Ok(())
    }

    /// Sum of the per-dof kinetic operators.
    pub fn apply_kinetic(&self, values: &ArrayD<C64>) -> Result<ArrayD<C64>> {
        self.check_shape(values.shape())?;
        let mut total = ArrayD::zeros(IxDyn(&self.shape));
        for (k, g) in self.dofs.iter().enumerate() {
            let mut part = values.clone();
            map_lanes(&mut part, k, |lane| g.apply_kinetic_in_place(lane));
            total += &part;
        }
        Ok(total)
    }

    /// Copy with each dof's kinetic spectrum clipped at the given caps.
    pub fn with_kinetic_caps(&self, caps: &[f64]) -> ProductGrid {
        ProductGrid {
            dofs: self.dofs.iter().zip(caps).map(|(g, c)| g.with_kinetic_cap(*c)).collect(),
            shape: self.shape.clone(),
            weights: self.weights.clone(),
        }
    }
}

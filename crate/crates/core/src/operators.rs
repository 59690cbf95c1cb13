//! Model functions for potentials, dipoles and absorbers, evaluated pointwise.

use std::path::Path;

use ndarray::{ArrayD, IxDyn, Zip};

use crate::error::{Error, Result};
use crate::grids::ProductGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorseParams {
    pub d_e: f64,
    pub r_e: f64,
    pub alf: f64,
}

impl MorseParams {
    pub fn new(d_e: f64, r_e: f64, alf: f64) -> Result<Self> {
        if !(d_e > 0.0) {
            return Err(Error::config("d_e", format!("must be positive, got {d_e}")));
        }
        if !(alf > 0.0) {
            return Err(Error::config("alf", format!("must be positive, got {alf}")));
        }
        Ok(MorseParams { d_e, r_e, alf })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let e = 1.0 - (-self.alf * (r - self.r_e)).exp();
        self.d_e * e * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeckeParams {
    pub q_0: f64,
    pub r_0: f64,
}

impl MeckeParams {
    pub fn new(q_0: f64, r_0: f64) -> Result<Self> {
        if !(r_0 > 0.0) {
            return Err(Error::config("r_0", format!("must be positive, got {r_0}")));
        }
        Ok(MeckeParams { q_0, r_0 })
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.q_0 * r * (-r / self.r_0).exp()
    }
}

/// Absorber vanishing on `[min, max]` and growing as a power outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerNipParams {
    pub exp: f64,
    pub min: f64,
    pub max: f64,
    pub strength: f64,
}

impl PowerNipParams {
    pub fn new(exp: f64, min: f64, max: f64, strength: f64) -> Result<Self> {
        if !(exp > 0.0) {
            return Err(Error::config("exp", format!("must be positive, got {exp}")));
        }
        if !(min < max) {
            return Err(Error::config("max", format!("must exceed min ({min}), got {max}")));
        }
        if !(strength >= 0.0) {
            return Err(Error::config("strength", format!("must be non-negative, got {strength}")));
        }
        Ok(PowerNipParams { exp, min, max, strength })
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r < self.min {
            self.strength * (self.min - r).powf(self.exp)
        } else if r > self.max {
            self.strength * (r - self.max).powf(self.exp)
        } else {
            0.0
        }
    }
}

/// `Σ_k c_k (R - center)^k / k!`
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSeries {
    pub coeffs: Vec<f64>,
    pub center: f64,
}

impl TaylorSeries {
    pub fn eval(&self, r: f64) -> f64 {
        let d = r - self.center;
        let mut term = 1.0;
        let mut sum = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                term *= d / k as f64;
            }
            sum += c * term;
        }
        sum
    }
}

/// Natural cubic spline through tabulated points.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl Spline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::config("table", format!("{} abscissae but {} ordinates", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(Error::config("table", "at least two points are required"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("table", "abscissae must be strictly increasing"));
        }
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1);
                let denom = diag - h0 * c[i - 1];
                c[i] = h1 / denom;
                d[i] = (rhs - h0 * d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Spline { x, y, m })
    }

    /// Reads a two-column whitespace-separated table with `#` comments.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("line {}: cannot parse `{s}`", lineno + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::format(
                    path,
                    format!("line {}: expected 2 columns, found {}", lineno + 1, cols.len()),
                ));
            }
            x.push(parse(cols[0])?);
            y.push(parse(cols[1])?);
        }
        Spline::new(x, y).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(r >= lo && r <= hi) {
            return Err(Error::Range { value: r, lo, hi });
        }
        let i = match self.x.partition_point(|&v| v <= r) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - r) / h;
        let b = (r - self.x[i]) / h;
        Ok(a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0)
    }
}

/// Linear vibronic coupling model `[[κx, λy], [λy, -κx]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JahnTellerParams {
    pub kappa: f64,
    pub lam: f64,
}

impl JahnTellerParams {
    pub fn eval(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let d = self.kappa * x;
        let o = self.lam * y;
        [[d, o], [o, -d]]
    }
}

/// A scalar model function of one coordinate, or one matrix element of the
/// two-coordinate Jahn-Teller model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Morse(MorseParams),
    Mecke(MeckeParams),
    Power(PowerNipParams),
    Taylor(TaylorSeries),
    Tabulated(Spline),
    JahnTeller {
        params: JahnTellerParams,
        row: usize,
        col: usize,
    },
}

/// A model together with the coordinate(s) it depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub model: Model,
    /// Coordinate index for one-dimensional models; the Jahn-Teller model
    /// uses this dof as `x` and the next one as `y`.
    pub dof: usize,
}

impl OperatorSpec {
    pub fn new(model: Model) -> Self {
        OperatorSpec { model, dof: 0 }
    }

    pub fn on_dof(model: Model, dof: usize) -> Self {
        OperatorSpec { model, dof }
    }

    pub fn name(&self) -> &'static str {
        match self.model {
            Model::Morse(_) => "morse",
            Model::Mecke(_) => "mecke",
            Model::Power(_) => "power",
            Model::Taylor(_) => "taylor",
            Model::Tabulated(_) => "tabulated",
            Model::JahnTeller { .. } => "jahn_teller",
        }
    }

    /// Evaluates the model on every point of the product grid.
    pub fn evaluate(&self, grid: &ProductGrid) -> Result<ArrayD<f64>> {
        let needed = match self.model {
            Model::JahnTeller { .. } => self.dof + 2,
            _ => self.dof + 1,
        };
        if grid.ndim() < needed {
            return Err(Error::config(
                "dof",
                format!(
                    "model `{}` needs coordinate {} but the grid has {} dof(s)",
                    self.name(),
                    needed,
                    grid.ndim()
                ),
            ));
        }
        let x = grid.coordinate(self.dof);
        let scalar = |f: &dyn Fn(f64) -> f64| x.mapv(f);
        Ok(match &self.model {
            Model::Morse(p) => scalar(&|r| p.eval(r)),
            Model::Mecke(p) => scalar(&|r| p.eval(r)),
            Model::Power(p) => scalar(&|r| p.eval(r)),
            Model::Taylor(p) => scalar(&|r| p.eval(r)),
            Model::Tabulated(s) => {
                let mut out = ArrayD::zeros(IxDyn(grid.shape()));
                for (o, r) in out.iter_mut().zip(x.iter()) {
                    *o = s.eval(*r)?;
                }
                out
            }
            Model::JahnTeller { params, row, col } => {
                if *row > 1 || *col > 1 {
                    return Err(Error::config("jahn_teller", "matrix element indices must be 1 or 2"));
                }
                let y = grid.coordinate(self.dof + 1);
                let mut out = ArrayD::zeros(IxDyn(grid.shape()));
                Zip::from(&mut out)
                    .and(&x)
                    .and(&y)
                    .for_each(|o, &a, &b| *o = params.eval(a, b)[*row][*col]);
                out
            }
        })
    }
}

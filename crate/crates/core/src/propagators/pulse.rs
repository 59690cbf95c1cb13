use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operators::Spline;

/// Pulse envelope `g(s)` with `s = t - delay`.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// `cos²(πs / 2fwhm)` for `|s| ≤ fwhm`, zero outside.
    Sin2,
    /// `exp(-4 ln2 s² / fwhm²)`
    Gauss,
    /// One for `|s| ≤ fwhm/2`.
    Rect,
    /// Interpolated envelope table over `s`.
    Tabulated(Spline),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub envelope: Envelope,
    pub delay: f64,
    pub fwhm: f64,
    pub ampli: f64,
    pub frequ: f64,
    /// linear chirp of the instantaneous frequency
    pub chirp: f64,
    /// quadratic chirp
    pub chirp2: f64,
    pub phase: f64,
}

impl Pulse {
    pub fn new(envelope: Envelope, delay: f64, fwhm: f64, ampli: f64, frequ: f64) -> Result<Self> {
        let p = Pulse { envelope, delay, fwhm, ampli, frequ, chirp: 0.0, chirp2: 0.0, phase: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.envelope, Envelope::Tabulated(_)) && !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::config("time.efield.fwhm", format!("must be positive, got {}", self.fwhm)));
        }
        for (name, v) in [
            ("ampli", self.ampli),
            ("frequ", self.frequ),
            ("delay", self.delay),
            ("chirp", self.chirp),
            ("chirp2", self.chirp2),
            ("phase", self.phase),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("time.efield.{name}"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn envelope_at(&self, s: f64) -> Result<f64> {
        Ok(match &self.envelope {
            Envelope::Sin2 => {
                if s.abs() <= self.fwhm {
                    (PI * s / (2.0 * self.fwhm)).cos().powi(2)
                } else {
                    0.0
                }
            }
            Envelope::Gauss => (-4.0 * 2f64.ln() * s * s / (self.fwhm * self.fwhm)).exp(),
            Envelope::Rect => {
                if s.abs() <= 0.5 * self.fwhm {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::Tabulated(spline) => spline.eval(s)?,
        })
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let s = t - self.delay;
        let g = self.envelope_at(s)?;
        if g == 0.0 {
            return Ok(0.0);
        }
        let omega = self.frequ + self.chirp * s + 0.5 * self.chirp2 * s * s;
        Ok(self.ampli * g * (omega * s + self.phase).cos())
    }
}

/// Total field of all pulses at time `t`.
pub fn field_value(pulses: &[Pulse], t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Numeric(format!("field requested at non-finite time {t}")));
    }
    pulses.iter().try_fold(0.0, |acc, p| Ok(acc + p.value(t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ladder_pulse() -> Pulse {
        let fwhm = 500.0 * 41.341373;
        Pulse::new(Envelope::Sin2, fwhm, fwhm, 328.5 / 5142.2064, 3424.19 / 219474.63).unwrap()
    }

    #[test]
    fn peak_and_truncation() {
        let mut p = Pulse::new(Envelope::Sin2, 10.0, 4.0, 0.3, 1.0).unwrap();
        p.phase = 0.4;
        assert!((field_value(&[p.clone()], 10.0).unwrap() - 0.3 * 0.4f64.cos()).abs() < 1e-15);
        assert_eq!(field_value(&[p.clone()], 14.0 + 1e-9).unwrap(), 0.0);
        assert_eq!(field_value(&[p.clone()], 5.0).unwrap(), 0.0);
        // half maximum of the envelope at s = fwhm/2
        assert!((p.envelope_at(2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ladder_pulse_at_peak() {
        let p = ladder_pulse();
        let f = field_value(&[p.clone()], p.delay).unwrap();
        assert!((f - 328.5 / 5142.2064).abs() < 1e-17);
        assert!((f - 0.063883).abs() < 1e-6);
    }

    #[test]
    fn gauss_and_rect_half_widths() {
        let g = Pulse::new(Envelope::Gauss, 0.0, 3.0, 1.0, 0.0).unwrap();
        assert!((g.envelope_at(1.5).unwrap() - 0.5).abs() < 1e-14);
        let r = Pulse::new(Envelope::Rect, 0.0, 3.0, 1.0, 0.0).unwrap();
        assert_eq!(r.envelope_at(1.4).unwrap(), 1.0);
        assert_eq!(r.envelope_at(1.6).unwrap(), 0.0);
    }

    #[test]
    fn chirp_shifts_phase() {
        let mut p = Pulse::new(Envelope::Rect, 0.0, 100.0, 1.0, 0.5).unwrap();
        p.chirp = 0.01;
        p.chirp2 = 0.002;
        let s: f64 = 3.0;
        let w = 0.5 + 0.01 * s + 0.001 * s * s;
        assert!((p.value(s).unwrap() - (w * s).cos()).abs() < 1e-15);
    }

    #[test]
    fn tabulated_out_of_range() {
        let spline = Spline::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]).unwrap();
        let p = Pulse::new(Envelope::Tabulated(spline), 5.0, 0.0, 2.0, 0.0).unwrap();
        assert!((p.value(5.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(p.value(7.0), Err(Error::Range { .. })));
    }

    #[test]
    fn invalid_width() {
        assert!(Pulse::new(Envelope::Sin2, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(Pulse::new(Envelope::Gauss, 0.0, 1.0, f64::NAN, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn sum_is_linear(t in -50.0f64..50.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let p = Pulse::new(Envelope::Gauss, 3.0, 20.0, a, 0.3).unwrap();
            let q = Pulse::new(Envelope::Sin2, -2.0, 15.0, b, 0.7).unwrap();
            let both = field_value(&[p.clone(), q.clone()], t).unwrap();
            prop_assert!((both - p.value(t).unwrap() - q.value(t).unwrap()).abs() < 1e-15);
            prop_assert!(both.abs() <= a.abs() + b.abs() + 1e-15);
        }
    }
}

//! Smooth periodic potentials with analytic gradients.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::TorusPoint;

/// A smooth 1-periodic potential `V: T^d -> R`.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad V(x)` into `out` (length `dim`).
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn description(&self) -> String;
}

/// One Fourier term `amplitude * cos(2 pi k.x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wavevector: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// A finite trigonometric polynomial plus a constant offset. All built-in
/// presets are of this form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPotential {
    dim: usize,
    terms: Vec<TrigTerm>,
    offset: f64,
    label: String,
}

impl TrigPotential {
    pub fn new(dim: usize, terms: Vec<TrigTerm>, offset: f64, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("potential dimension must be positive"));
        }
        for t in &terms {
            if t.wavevector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.wavevector.len(),
                });
            }
            if !t.amplitude.is_finite() || !t.phase.is_finite() {
                return Err(Error::invalid("potential term must be finite"));
            }
        }
        Ok(Self {
            dim,
            terms,
            offset,
            label: label.into(),
        })
    }

    /// `V = 0`.
    pub fn uniform(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            offset: 0.0,
            label: format!("uniform (V = 0) on T^{dim}"),
        }
    }

    /// `V(x) = a cos(2 pi x_1)`.
    pub fn cosine(dim: usize, amplitude: f64) -> Self {
        let mut k = vec![0; dim];
        k[0] = 1;
        Self {
            dim,
            terms: vec![TrigTerm {
                amplitude,
                wavevector: k,
                phase: 0.0,
            }],
            offset: 0.0,
            label: format!("cosine: {amplitude} cos(2 pi x1)"),
        }
    }

    /// `V(x) = v(x_1) + w(x_2)` with `v = a cos(4 pi x_1) + b sin(2 pi x_1)` and
    /// `w = c cos(2 pi x_2)`.
    pub fn separable(a: f64, b: f64, c: f64) -> Self {
        let term = |amplitude, wavevector: [i32; 2], phase| TrigTerm {
            amplitude,
            wavevector: wavevector.to_vec(),
            phase,
        };
        Self {
            dim: 2,
            terms: vec![
                term(a, [2, 0], 0.0),
                // sin(u) = cos(u - pi/2)
                term(b, [1, 0], -std::f64::consts::FRAC_PI_2),
                term(c, [0, 1], 0.0),
            ],
            offset: 0.0,
            label: format!("separable: {a} cos(4 pi x1) + {b} sin(2 pi x1) + {c} cos(2 pi x2)"),
        }
    }

    /// `V(x) = h cos(4 pi x_1) + c cos(2 pi x_2) + g cos(2 pi (x_1 - x_2))`.
    pub fn double_well(h: f64, c: f64, g: f64) -> Self {
        let term = |amplitude, wavevector: [i32; 2]| TrigTerm {
            amplitude,
            wavevector: wavevector.to_vec(),
            phase: 0.0,
        };
        Self {
            dim: 2,
            terms: vec![term(h, [2, 0]), term(c, [0, 1]), term(g, [1, -1])],
            offset: 0.0,
            label: format!(
                "double-well: {h} cos(4 pi x1) + {c} cos(2 pi x2) + {g} cos(2 pi (x1 - x2))"
            ),
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    #[inline]
    fn angle(term: &TrigTerm, x: &[f64]) -> f64 {
        let dot: f64 = term
            .wavevector
            .iter()
            .zip(x)
            .map(|(&k, &xi)| k as f64 * xi)
            .sum();
        TAU * dot + term.phase
    }
}

impl Potential for TrigPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.amplitude * Self::angle(t, x).cos())
                .sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for t in &self.terms {
            let s = -TAU * t.amplitude * Self::angle(t, x).sin();
            for (g, &k) in out.iter_mut().zip(&t.wavevector) {
                if k != 0 {
                    *g += s * k as f64;
                }
            }
        }
    }

    fn description(&self) -> String {
        self.label.clone()
    }
}

/// Largest deviation between the analytic gradient and centered finite
/// differences with step `h`, over all samples and coordinates.
pub fn potential_grad_check(v: &dyn Potential, samples: &[TorusPoint], h: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("gradient check needs at least one sample"));
    }
    if !(h > 0.0 && h <= 1e-2) {
        return Err(Error::invalid(format!("finite-difference step {h} outside (0, 1e-2]")));
    }
    let d = v.dim();
    let mut grad = vec![0.0; d];
    let mut probe = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for x in samples {
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        v.gradient(x.coords(), &mut grad);
        for i in 0..d {
            probe.copy_from_slice(x.coords());
            probe[i] = x.coords()[i] + h;
            let up = v.value(&probe);
            probe[i] = x.coords()[i] - h;
            let down = v.value(&probe);
            worst = worst.max((grad[i] - (up - down) / (2.0 * h)).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<TorusPoint> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                TorusPoint::wrap(&v).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_potential_has_exact_zero_deviation() {
        let v = TrigPotential::uniform(3);
        assert_eq!(potential_grad_check(&v, &random_points(10, 3, 1), 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn cosine_gradient_at_quarter() {
        let v = TrigPotential::cosine(2, 1.0);
        let mut g = [0.0; 2];
        v.gradient(&[0.25, 0.1], &mut g);
        assert!((g[0] + TAU).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        let x = TorusPoint::wrap(&[0.25, 0.1]).unwrap();
        assert!(potential_grad_check(&v, &[x], 1e-4).unwrap() < 1e-6);
    }

    #[test]
    fn double_well_gradient_matches_differences() {
        let v = TrigPotential::double_well(1.0, 0.5, 0.25);
        assert!(potential_grad_check(&v, &random_points(100, 2, 7), 1e-4).unwrap() < 1e-5);
    }

    #[test]
    fn presets_are_periodic() {
        let presets = [
            TrigPotential::double_well(1.0, 0.5, 0.25),
            TrigPotential::separable(1.0, 0.3, 0.5),
            TrigPotential::cosine(2, 1.0),
        ];
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for v in &presets {
            for _ in 0..50 {
                let x: [f64; 2] = [rng.gen(), rng.gen()];
                for i in 0..2 {
                    let mut shifted = x;
                    shifted[i] += 1.0;
                    assert!((v.value(&x) - v.value(&shifted)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn grad_check_errors() {
        let v = TrigPotential::uniform(2);
        assert!(potential_grad_check(&v, &[], 1e-4).is_err());
        let x = vec![TorusPoint::origin(2)];
        assert!(potential_grad_check(&v, &x, 0.1).is_err());
        assert!(potential_grad_check(&v, &[TorusPoint::origin(3)], 1e-4).is_err());
    }

    #[test]
    fn term_dimension_is_validated() {
        let bad = TrigTerm {
            amplitude: 1.0,
            wavevector: vec![1],
            phase: 0.0,
        };
        assert!(TrigPotential::new(2, vec![bad], 0.0, "bad").is_err());
    }
}

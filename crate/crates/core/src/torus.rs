//! Geometry of the flat torus `(R/Z)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce a real number to its representative in `[0, 1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v - v.floor();
    // `v - floor(v)` rounds up to exactly 1.0 for tiny negative inputs.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Periodic displacement `b - a` reduced to `[-1/2, 1/2)`.
#[inline]
pub fn displacement_unit(a: f64, b: f64) -> f64 {
    let r = wrap_unit(b - a + 0.5) - 0.5;
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// A configuration on the flat torus. Every coordinate lies in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Wrap an arbitrary finite vector onto the torus.
    pub fn wrap(v: &[f64]) -> Result<Self> {
        if let Some(bad) = v.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {bad}")));
        }
        Ok(Self {
            coords: v.iter().copied().map(wrap_unit).collect(),
        })
    }

    /// The origin of `T^d`.
    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Shift by `delta` and wrap back onto the torus in place.
    pub fn translate(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.coords.len());
        for (c, d) in self.coords.iter_mut().zip(delta) {
            *c = wrap_unit(*c + d);
        }
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }
}

/// Shortest periodic displacement from `a` to `b`, each component in `[-1/2, 1/2)`.
pub fn torus_displacement(a: &TorusPoint, b: &TorusPoint) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.coords
        .iter()
        .zip(&b.coords)
        .map(|(&x, &y)| displacement_unit(x, y))
        .collect())
}

/// The reaction coordinate `xi(x) = (x_1, ..., x_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionCoordinate {
    m: usize,
}

impl ReactionCoordinate {
    /// Requires `1 <= m <= d - 1`.
    pub fn new(m: usize, d: usize) -> Result<Self> {
        if m == 0 || m >= d {
            return Err(Error::invalid(format!(
                "reaction coordinate dimension must satisfy 1 <= m <= d-1 (got m={m}, d={d})"
            )));
        }
        Ok(Self { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn project<'a>(&self, x: &'a TorusPoint) -> &'a [f64] {
        &x.coords[..self.m]
    }
}

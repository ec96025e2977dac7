//! Grid-sampled bias potentials on `T^m` and their construction from an
//! occupation measure through the smoothing kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelBounds, LatticeKernel};
use crate::lattice;
use crate::measure::OccupationMeasure;

/// A smooth function on `T^m` sampled on a uniform lattice with `g` nodes per
/// axis; linear interpolation between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasFunction {
    m: usize,
    g: usize,
    beta: f64,
    values: Vec<f64>,
}

impl BiasFunction {
    /// CSV with columns `z` (or `z1..zm`) and `A`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = crate::output::coordinate_columns("z", self.m).join(",");
        out.push_str(",A\n");
        for (k, a) in self.values.iter().enumerate() {
            let z: Vec<String> = self.node_coords(k).iter().map(|c| format!("{c:.10}")).collect();
            out.push_str(&format!("{},{a:.12e}\n", z.join(",")));
        }
        crate::output::write_file(path, &out)
    }

    pub fn from_values(m: usize, g: usize, beta: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.pow(m as u32) {
            return Err(Error::DimensionMismatch {
                expected: g.pow(m as u32),
                got: values.len(),
            });
        }
        if !(beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        Ok(Self { m, g, beta, values })
    }

    pub fn zero(m: usize, g: usize, beta: f64) -> Self {
        Self {
            m,
            g,
            beta,
            values: vec![0.0; g.pow(m as u32)],
        }
    }

    pub fn constant(m: usize, g: usize, beta: f64, c: f64) -> Self {
        Self {
            m,
            g,
            beta,
            values: vec![c; g.pow(m as u32)],
        }
    }

    /// Build from samples of `exp(-beta A)` at the nodes.
    pub fn from_exp_values(m: usize, g: usize, beta: f64, exp_values: &[f64]) -> Result<Self> {
        let values = exp_values.iter().map(|e| -e.ln() / beta).collect();
        Self::from_values(m, g, beta, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn points_per_dim(&self) -> usize {
        self.g
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinates of node `flat`.
    pub fn node_coords(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.m];
        lattice::unflatten(flat, self.g, &mut idx);
        idx.iter().map(|&j| j as f64 / self.g as f64).collect()
    }

    pub fn value_at(&self, z: &[f64]) -> f64 {
        lattice::interpolate(z, self.g, |k| self.values[k])
    }

    pub fn gradient_at(&self, z: &[f64], out: &mut [f64]) {
        lattice::interpolate_gradient(z, self.g, |k| self.values[k], out)
    }

    pub fn exp_values(&self) -> Vec<f64> {
        self.values.iter().map(|a| (-self.beta * a).exp()).collect()
    }

    /// `max |self - other|` over the nodes of `self`, interpolating `other`.
    pub fn sup_distance(&self, other: &BiasFunction) -> Result<f64> {
        if self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: other.m,
            });
        }
        Ok((0..self.values.len())
            .map(|k| (self.values[k] - other.value_at(&self.node_coords(k))).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Lattice convolution `sum_b w(b - j) mass_b` for every node `j`.
pub(crate) fn smooth_masses(masses: &[f64], kernel: &LatticeKernel) -> Vec<f64> {
    let total: f64 = masses.iter().sum();
    let delta = kernel.floor_delta();
    let mut local = vec![0.0; masses.len()];
    for (b, &mass) in masses.iter().enumerate() {
        if mass != 0.0 {
            lattice::for_each_in_support(kernel, b, |j, w| local[j] += w * mass);
        }
    }
    local.iter().map(|l| delta * total + (1.0 - delta) * l).collect()
}

/// `exp(-beta A(z)) = int K(z, xi(x)) mu(dx)`, evaluated at the histogram
/// nodes with the histogram mass of each bin placed at its node.
pub fn bias_from_measure(mu: &OccupationMeasure, kernel: &LatticeKernel, beta: f64) -> Result<BiasFunction> {
    if kernel.m() != mu.m() || kernel.points_per_dim() != mu.histogram_points_per_dim() {
        return Err(Error::invalid(format!(
            "kernel lattice ({}^{}) does not match histogram ({}^{})",
            kernel.points_per_dim(),
            kernel.m(),
            mu.histogram_points_per_dim(),
            mu.m()
        )));
    }
    let mass = mu.mass();
    let smoothed = smooth_masses(mu.xi_histogram(), kernel);
    let exp_values: Vec<f64> = smoothed.iter().map(|s| s / mass).collect();
    BiasFunction::from_exp_values(mu.m(), mu.histogram_points_per_dim(), beta, &exp_values)
}

/// Outcome of checking the admissible-set bounds on `exp(-beta A)`. Violations
/// are `max(0, excess)`; zero means the bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub min_violation: f64,
    pub max_violation: f64,
    pub derivative_violation: f64,
}

pub const ADMISSIBLE_TOL: f64 = 1e-9;

/// `min exp(-beta A) >= min_k`, `max exp(-beta A) <= max_k0` and the lattice
/// centered-difference gradient norm of `exp(-beta A)` at most `max_k1`.
pub fn in_admissible_set(bias: &BiasFunction, bounds: &KernelBounds) -> AdmissibilityReport {
    in_admissible_set_with_allowance(bias, bounds, 0.0)
}

/// As [`in_admissible_set`], with an extra allowance on the derivative bound
/// for biases sampled on a lattice other than the one `bounds` came from.
pub fn in_admissible_set_with_allowance(
    bias: &BiasFunction,
    bounds: &KernelBounds,
    derivative_allowance: f64,
) -> AdmissibilityReport {
    exp_admissibility(&bias.exp_values(), bias.m, bias.g, bounds, derivative_allowance)
}

/// Admissible-set check on lattice samples `e` of `exp(-beta A)`.
pub(crate) fn exp_admissibility(
    e: &[f64],
    m: usize,
    g: usize,
    bounds: &KernelBounds,
    derivative_allowance: f64,
) -> AdmissibilityReport {
    let (lo, hi) = e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let half_g = g as f64 / 2.0;
    let mut max_grad: f64 = 0.0;
    if m == 1 {
        for j in 0..g {
            let fd = (e[lattice::succ(j, g)] - e[lattice::pred(j, g)]) * half_g;
            max_grad = max_grad.max(fd.abs());
        }
    } else {
        let mut idx = vec![0usize; m];
        for flat in 0..e.len() {
            lattice::unflatten(flat, g, &mut idx);
            let mut sq = 0.0;
            let mut stride = 1;
            for &j in idx.iter() {
                let up = flat + lattice::succ(j, g) * stride - j * stride;
                let down = flat + lattice::pred(j, g) * stride - j * stride;
                let fd = (e[up] - e[down]) * half_g;
                sq += fd * fd;
                stride *= g;
            }
            max_grad = max_grad.max(sq.sqrt());
        }
    }
    let min_violation = (bounds.min_k - lo - ADMISSIBLE_TOL).max(0.0);
    let max_violation = (hi - bounds.max_k0 - ADMISSIBLE_TOL).max(0.0);
    let derivative_violation = (max_grad - bounds.max_k1 - ADMISSIBLE_TOL - derivative_allowance).max(0.0);
    AdmissibilityReport {
        admissible: min_violation == 0.0 && max_violation == 0.0 && derivative_violation == 0.0,
        min_violation,
        max_violation,
        derivative_violation,
    }
}

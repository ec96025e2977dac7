//! Exact reference quantities by tensor quadrature on the torus.
//!
//! The rectangle rule on a uniform periodic grid is spectrally accurate for
//! smooth periodic integrands, which is all this module ever integrates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bias::{smooth_masses, BiasFunction};
use crate::error::{Error, Result};
use crate::family::{FamilyScratch, TestFunctionFamily};
use crate::kernel::PeriodicKernel;
use crate::output::{coordinate_columns, write_file};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub points_per_dim: usize,
    pub dimension: usize,
}

impl QuadratureGrid {
    pub fn new(points_per_dim: usize, dimension: usize) -> Result<Self> {
        if points_per_dim == 0 || dimension == 0 {
            return Err(Error::invalid("quadrature grid must be nonempty"));
        }
        Ok(Self {
            points_per_dim,
            dimension,
        })
    }

    /// 512 points per axis up to `d = 2`, 128 for `d = 3`, 32 beyond.
    pub fn default_for(dimension: usize) -> Self {
        let points_per_dim = match dimension {
            0..=2 => 512,
            3 => 128,
            _ => 32,
        };
        Self {
            points_per_dim,
            dimension,
        }
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, v: &dyn Potential) -> Result<()> {
        if self.dimension != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: v.dim(),
                got: self.dimension,
            });
        }
        Ok(())
    }

    /// Calls `f(x)` at every node.
    fn for_each_node(&self, mut f: impl FnMut(&[f64])) {
        let n = self.points_per_dim;
        let h = 1.0 / n as f64;
        let mut x = vec![0.0; self.dimension];
        for flat in 0..self.len() {
            let mut rem = flat;
            for xi in x.iter_mut() {
                *xi = (rem % n) as f64 * h;
                rem /= n;
            }
            f(&x);
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("beta {beta} must be positive")))
    }
}

/// `Z(beta) = int exp(-beta V(x)) dx`.
pub fn partition_function(v: &dyn Potential, beta: f64, grid: &QuadratureGrid) -> Result<f64> {
    check_beta(beta)?;
    grid.check(v)?;
    let mut acc = 0.0;
    grid.for_each_node(|x| acc += (-beta * v.value(x)).exp());
    Ok(acc / grid.len() as f64)
}

/// `mu_beta(f)`.
pub fn mu_beta_moment(v: &dyn Potential, beta: f64, f: &dyn Fn(&[f64]) -> f64, grid: &QuadratureGrid) -> Result<f64> {
    check_beta(beta)?;
    grid.check(v)?;
    let (mut num, mut den) = (0.0, 0.0);
    grid.for_each_node(|x| {
        let w = (-beta * v.value(x)).exp();
        num += w * f(x);
        den += w;
    });
    Ok(num / den)
}

/// `mu_beta(f_n)` for every member of the family.
pub fn family_moments(
    v: &dyn Potential,
    beta: f64,
    family: &TestFunctionFamily,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    grid.check(v)?;
    let mut scratch = FamilyScratch::default();
    let mut vals = vec![0.0; family.len()];
    let mut acc = vec![0.0; family.len()];
    let mut den = 0.0;
    grid.for_each_node(|x| {
        let w = (-beta * v.value(x)).exp();
        family.eval_into(x, &mut scratch, &mut vals);
        for (a, f) in acc.iter_mut().zip(&vals) {
            *a += w * f;
        }
        den += w;
    });
    Ok(acc.into_iter().map(|a| a / den).collect())
}

/// Free energy `A*(z)` of the reaction coordinate `(x_1..x_m)` on a uniform
/// `T^m` lattice. `exp(-beta A*)` is the marginal density of `mu_beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyProfile {
    profile: BiasFunction,
}

impl FreeEnergyProfile {
    pub fn beta(&self) -> f64 {
        self.profile.beta()
    }

    pub fn m(&self) -> usize {
        self.profile.m()
    }

    pub fn resolution(&self) -> usize {
        self.profile.points_per_dim()
    }

    pub fn values(&self) -> &[f64] {
        self.profile.values()
    }

    /// Marginal density `exp(-beta A*)` at the lattice nodes.
    pub fn density(&self) -> Vec<f64> {
        self.profile.exp_values()
    }

    pub fn as_bias(&self) -> &BiasFunction {
        &self.profile
    }

    /// `int exp(-beta A*(z)) dz` by the rectangle rule on the profile lattice.
    pub fn total_mass(&self) -> f64 {
        let d = self.density();
        d.iter().sum::<f64>() / d.len() as f64
    }

    pub fn zero(m: usize, resolution: usize, beta: f64) -> Self {
        Self {
            profile: BiasFunction::zero(m, resolution, beta),
        }
    }

    pub fn from_values(m: usize, resolution: usize, beta: f64, values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            profile: BiasFunction::from_values(m, resolution, beta, values)?,
        })
    }
}

/// Unnormalized marginal `int exp(-beta V(z, z_perp)) dz_perp` at one `z`.
fn marginal_weight(v: &dyn Potential, beta: f64, z: &[f64], inner_points: usize, x: &mut [f64]) -> f64 {
    let m = z.len();
    let rest = x.len() - m;
    let h = 1.0 / inner_points as f64;
    x[..m].copy_from_slice(z);
    let count = inner_points.pow(rest as u32);
    let mut acc = 0.0;
    for flat in 0..count {
        let mut rem = flat;
        for xi in x[m..].iter_mut() {
            *xi = (rem % inner_points) as f64 * h;
            rem /= inner_points;
        }
        acc += (-beta * v.value(x)).exp();
    }
    acc / count as f64
}

/// `exp(-beta A*(z)) = int exp(-beta V(z, z_perp)) / Z dz_perp` on an
/// `out_resolution^m` lattice. The inner integral uses the grid's points per
/// axis; `Z` is the rectangle rule of the inner integrals over the output
/// lattice, so the profile density has unit lattice mass.
pub fn free_energy(
    v: &dyn Potential,
    beta: f64,
    m: usize,
    grid: &QuadratureGrid,
    out_resolution: usize,
) -> Result<FreeEnergyProfile> {
    check_beta(beta)?;
    grid.check(v)?;
    if m == 0 || m >= v.dim() {
        return Err(Error::invalid(format!("reaction coordinate dimension {m} invalid for d={}", v.dim())));
    }
    if out_resolution < 64 {
        return Err(Error::invalid(format!("profile resolution {out_resolution} < 64")));
    }
    let count = out_resolution.pow(m as u32);
    let mut x = vec![0.0; v.dim()];
    let mut z = vec![0.0; m];
    let mut inner = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        for zi in z.iter_mut() {
            *zi = (rem % out_resolution) as f64 / out_resolution as f64;
            rem /= out_resolution;
        }
        inner.push(marginal_weight(v, beta, &z, grid.points_per_dim, &mut x));
    }
    let partition = inner.iter().sum::<f64>() / count as f64;
    let values = inner.iter().map(|w| -(w / partition).ln() / beta).collect();
    FreeEnergyProfile::from_values(m, out_resolution, beta, values)
}

/// `exp(-beta A_inf(z)) = int K(z, zeta) exp(-beta A*(zeta)) dzeta`, by
/// lattice quadrature on the profile lattice.
pub fn a_infinity(profile: &FreeEnergyProfile, kernel: &PeriodicKernel) -> Result<BiasFunction> {
    if kernel.m() != profile.m() {
        return Err(Error::DimensionMismatch {
            expected: profile.m(),
            got: kernel.m(),
        });
    }
    let lattice = kernel.lattice(profile.resolution());
    let density = profile.density();
    let n = density.len() as f64;
    let masses: Vec<f64> = density.iter().map(|d| d / n).collect();
    let smoothed = smooth_masses(&masses, &lattice);
    BiasFunction::from_exp_values(profile.m(), profile.resolution(), profile.beta(), &smoothed)
}

/// Average of `f` under the star-biased measure
/// `exp(-beta (V - A*(xi))) dx`, renormalized on the grid.
pub fn star_moment(
    v: &dyn Potential,
    profile: &FreeEnergyProfile,
    beta: f64,
    f: &dyn Fn(&[f64]) -> f64,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_beta(beta)?;
    grid.check(v)?;
    let m = profile.m();
    let bias = profile.as_bias();
    let (mut num, mut den) = (0.0, 0.0);
    grid.for_each_node(|x| {
        let w = (-beta * (v.value(x) - bias.value_at(&x[..m]))).exp();
        num += w * f(x);
        den += w;
    });
    Ok(num / den)
}

/// Probability that the first coordinate of `mu_beta` falls in each of `bins`
/// equal cells `[b/bins - 1/(2 bins), b/bins + 1/(2 bins))`. Only for `m = 1`.
pub fn xi_bin_probabilities(v: &dyn Potential, beta: f64, grid: &QuadratureGrid, bins: usize) -> Result<Vec<f64>> {
    check_beta(beta)?;
    grid.check(v)?;
    const SUB: usize = 64;
    let mut x = vec![0.0; v.dim()];
    let width = 1.0 / bins as f64;
    let mut probs: Vec<f64> = (0..bins)
        .map(|b| {
            let left = b as f64 * width - 0.5 * width;
            (0..SUB)
                .map(|i| {
                    let z = (left + (i as f64 + 0.5) * width / SUB as f64).rem_euclid(1.0);
                    marginal_weight(v, beta, &[z], grid.points_per_dim, &mut x)
                })
                .sum::<f64>()
        })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// CSV with columns `z, A_star, A_infinity` (one `z` column per reaction
/// coordinate axis: `z1, z2, ...` when `m > 1`).
pub fn write_profile_csv(path: &Path, profile: &FreeEnergyProfile, a_inf: &BiasFunction) -> Result<()> {
    let mut out = coordinate_columns("z", profile.m()).join(",");
    out.push_str(",A_star,A_infinity\n");
    let bias = profile.as_bias();
    for (k, a) in profile.values().iter().enumerate() {
        let z = bias.node_coords(k);
        let zs: Vec<String> = z.iter().map(|c| format!("{c:.10}")).collect();
        out.push_str(&format!("{},{a:.12e},{:.12e}\n", zs.join(","), a_inf.value_at(&z)));
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{TrigPotential, TrigTerm};
    use std::f64::consts::TAU;

    /// Independent 1-D oracle: composite Simpson on `[0, 1]`.
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    fn grid2() -> QuadratureGrid {
        QuadratureGrid::new(512, 2).unwrap()
    }

    #[test]
    fn zero_potential_has_unit_partition_function() {
        assert_eq!(partition_function(&TrigPotential::uniform(2), 3.0, &grid2()).unwrap(), 1.0);
    }

    #[test]
    fn cosine_partition_function_is_bessel_i0() {
        let v = TrigPotential::cosine(2, 1.0);
        let z = partition_function(&v, 1.0, &grid2()).unwrap();
        let oracle = simpson(|u| (-(TAU * u).cos()).exp(), 20_000);
        assert!((z - oracle).abs() < 1e-12, "{z} vs {oracle}");
        assert!((z - 1.266_065_877_752_008_4).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_scales_partition_function() {
        let v = TrigPotential::double_well(1.0, 0.5, 0.25);
        let shifted = v.clone().with_offset(0.7);
        let beta = 2.0;
        let z0 = partition_function(&v, beta, &grid2()).unwrap();
        let z1 = partition_function(&shifted, beta, &grid2()).unwrap();
        assert!((z1 - z0 * (-beta * 0.7f64).exp()).abs() < 1e-12 * z0);
    }

    #[test]
    fn grid_dimension_mismatch() {
        let v = TrigPotential::uniform(2);
        let g = QuadratureGrid::new(16, 3).unwrap();
        assert!(partition_function(&v, 1.0, &g).is_err());
        assert!(partition_function(&v, -1.0, &grid2()).is_err());
    }

    #[test]
    fn partition_function_is_resolution_stable() {
        for v in [TrigPotential::double_well(1.0, 0.5, 0.25), TrigPotential::separable(1.0, 0.3, 0.5)] {
            let a = partition_function(&v, 4.0, &QuadratureGrid::new(256, 2).unwrap()).unwrap();
            let b = partition_function(&v, 4.0, &grid2()).unwrap();
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn moment_examples() {
        let g = grid2();
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        assert!((mu_beta_moment(&dw, 4.0, &|_| 1.0, &g).unwrap() - 1.0).abs() < 1e-14);
        let cos1 = |x: &[f64]| (TAU * x[0]).cos();
        assert!(mu_beta_moment(&TrigPotential::uniform(2), 1.0, &cos1, &g).unwrap().abs() < 1e-14);
        let fam = TestFunctionFamily::trigonometric(2, 8).unwrap();
        let all = family_moments(&dw, 4.0, &fam, &g).unwrap();
        assert!((all[0] - mu_beta_moment(&dw, 4.0, &cos1, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn double_well_golden_moment() {
        // Frozen from the 512^2 rectangle rule; cross-checked against 1024^2.
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let cos1 = |x: &[f64]| (TAU * x[0]).cos();
        let coarse = mu_beta_moment(&dw, 4.0, &cos1, &grid2()).unwrap();
        let fine = mu_beta_moment(&dw, 4.0, &cos1, &QuadratureGrid::new(1024, 2).unwrap()).unwrap();
        assert!((coarse - fine).abs() < 1e-12);
        assert!((coarse - DOUBLE_WELL_COS1_BETA4).abs() < 1e-10, "{coarse:.15}");
    }

    const DOUBLE_WELL_COS1_BETA4: f64 = 0.044_516_561_973_478_5;

    #[test]
    fn free_energy_trivial_cases() {
        let g = grid2();
        let a = free_energy(&TrigPotential::uniform(2), 2.0, 1, &g, 128).unwrap();
        assert!(a.values().iter().all(|v| v.abs() < 1e-14));
        let only_x2 = TrigPotential::new(
            2,
            vec![TrigTerm {
                amplitude: 0.8,
                wavevector: vec![0, 1],
                phase: 0.0,
            }],
            0.0,
            "w(x2)",
        )
        .unwrap();
        let a = free_energy(&only_x2, 3.0, 1, &g, 128).unwrap();
        assert!(a.values().iter().all(|v| v.abs() < 1e-12));
        assert!(free_energy(&only_x2, 3.0, 1, &g, 32).is_err());
        assert!(free_energy(&only_x2, 3.0, 2, &g, 64).is_err());
    }

    #[test]
    fn separable_free_energy_matches_1d_oracle() {
        let (a, b, c) = (1.0, 0.3, 0.5);
        let v = TrigPotential::separable(a, b, c);
        let beta = 2.5;
        let vx = |u: f64| a * (2.0 * TAU * u).cos() + b * (TAU * u).sin();
        let log_norm = simpson(|u| (-beta * vx(u)).exp(), 20_000).ln() / beta;
        let profile = free_energy(&v, beta, 1, &grid2(), 512).unwrap();
        for (j, value) in profile.values().iter().enumerate() {
            let z = j as f64 / 512.0;
            assert!((value - (vx(z) + log_norm)).abs() < 1e-10);
        }
    }

    #[test]
    fn profile_density_has_unit_mass() {
        for v in [
            TrigPotential::double_well(1.0, 0.5, 0.25),
            TrigPotential::separable(1.0, 0.3, 0.5),
            TrigPotential::cosine(2, 1.0),
            TrigPotential::uniform(2),
        ] {
            let p = free_energy(&v, 4.0, 1, &grid2(), 512).unwrap();
            assert!((p.total_mass() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn a_infinity_of_constant_profile_is_zero() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for &r in &[64usize, 300, 512] {
            let a = a_infinity(&FreeEnergyProfile::zero(1, r, 2.0), &k).unwrap();
            assert!(a.sup_norm() < 1e-12);
        }
        let flat = PeriodicKernel::new(1, 0.2, 1.0).unwrap();
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let p = free_energy(&dw, 4.0, 1, &grid2(), 512).unwrap();
        let a = a_infinity(&p, &flat).unwrap();
        assert!(a.sup_norm() < 1e-12);
    }

    #[test]
    fn a_infinity_approaches_free_energy_as_bandwidth_shrinks() {
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let p = free_energy(&dw, 4.0, 1, &QuadratureGrid::new(256, 2).unwrap(), 1024).unwrap();
        let mut last = f64::INFINITY;
        for &eps in &[0.4, 0.2, 0.1, 0.05] {
            let k = PeriodicKernel::new(1, eps, 1e-6).unwrap();
            let a = a_infinity(&p, &k).unwrap();
            let err = a.sup_distance(p.as_bias()).unwrap();
            assert!(err < last, "eps={eps}: {err} !< {last}");
            last = err;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn star_measure_has_flat_marginal() {
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let beta = 4.0;
        let g = grid2();
        let p = free_energy(&dw, beta, 1, &g, 512).unwrap();
        assert!((star_moment(&dw, &p, beta, &|_| 1.0, &g).unwrap() - 1.0).abs() < 1e-14);
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..8 {
            let (c0, c1, s1, c3) = (next() - 0.5, next() - 0.5, next() - 0.5, next() - 0.5);
            let g_fn = move |z: f64| c0 + c1 * (TAU * z).cos() + s1 * (TAU * z).sin() + c3 * (3.0 * TAU * z).cos();
            let got = star_moment(&dw, &p, beta, &|x: &[f64]| g_fn(x[0]), &g).unwrap();
            assert!((got - c0).abs() < 1e-8, "{got} vs {c0}");
        }
    }

    #[test]
    fn star_reweighting_identity() {
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let beta = 4.0;
        let g = grid2();
        let p = free_energy(&dw, beta, 1, &g, 512).unwrap();
        let bias = p.as_bias().clone();
        let phi = |x: &[f64]| (TAU * x[0]).cos() + 0.3 * (TAU * (x[0] + 2.0 * x[1])).sin();
        let weighted = |x: &[f64]| phi(x) * (-beta * bias.value_at(&x[..1])).exp();
        let norm = |x: &[f64]| (-beta * bias.value_at(&x[..1])).exp();
        let ratio = star_moment(&dw, &p, beta, &weighted, &g).unwrap() / star_moment(&dw, &p, beta, &norm, &g).unwrap();
        let direct = mu_beta_moment(&dw, beta, &phi, &g).unwrap();
        assert!((ratio - direct).abs() < 1e-12);
    }

    #[test]
    fn bin_probabilities_match_profile() {
        let dw = TrigPotential::double_well(1.0, 0.5, 0.25);
        let g = QuadratureGrid::new(256, 2).unwrap();
        let probs = xi_bin_probabilities(&TrigPotential::uniform(2), 1.0, &g, 64).unwrap();
        assert!(probs.iter().all(|p| (p - 1.0 / 64.0).abs() < 1e-14));
        let probs = xi_bin_probabilities(&dw, 4.0, &g, 64).unwrap();
        let profile = free_energy(&dw, 4.0, 1, &g, 64).unwrap();
        for (p, d) in probs.iter().zip(profile.density()) {
            // Bin average vs midpoint value: second-order agreement.
            assert!((p * 64.0 - d).abs() < 0.05 * d.max(0.01));
        }
    }
}

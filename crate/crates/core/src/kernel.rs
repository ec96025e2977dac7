//! Strictly positive periodic smoothing kernel on `T^m`.
//!
//! `K(z, zeta) = (1 - delta) * eps^-m * prod_i Kt((zeta_i - z_i) / eps) + delta`
//! where `Kt` is the normalized smooth bump `c * exp(-1 / (1 - (2u)^2))` on
//! `(-1/2, 1/2)`. Both terms integrate to one in `z`, so `K` is a probability
//! density in its first argument, and `K >= delta > 0` everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::displacement_unit;

/// Unnormalized bump `exp(-1 / (1 - (2u)^2))`, zero for `|u| >= 1/2`.
#[inline]
fn raw_bump(u: f64) -> f64 {
    let s = 2.0 * u;
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Rectangle rule over the support. The integrand is smooth and vanishes to
/// all orders at the endpoints, so this converges faster than any power.
fn bump_mass() -> f64 {
    const N: usize = 8192;
    let h = 1.0 / N as f64;
    (0..N).map(|i| raw_bump(-0.5 + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Pointwise bounds of a kernel: the minimum, the maximum and the maximum
/// norm of the first derivative in `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub min_k: f64,
    pub max_k0: f64,
    pub max_k1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicKernel {
    m: usize,
    epsilon: f64,
    floor_delta: f64,
    #[serde(skip)]
    bump_norm: f64,
}

impl PartialEq for PeriodicKernel {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.epsilon == other.epsilon && self.floor_delta == other.floor_delta
    }
}

impl PeriodicKernel {
    /// `epsilon` in `(0, 1)`, `floor_delta` in `(0, 1]`. `floor_delta = 1` is
    /// the degenerate constant kernel `K = 1`.
    pub fn new(m: usize, epsilon: f64, floor_delta: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("kernel bandwidth {epsilon} outside (0, 1)")));
        }
        if !(floor_delta > 0.0 && floor_delta <= 1.0) {
            return Err(Error::invalid(format!("kernel floor {floor_delta} outside (0, 1]")));
        }
        Ok(Self {
            m,
            epsilon,
            floor_delta,
            bump_norm: 1.0 / bump_mass(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn floor_delta(&self) -> f64 {
        self.floor_delta
    }

    fn norm(&self) -> f64 {
        // Deserialized kernels skip the cached constant.
        if self.bump_norm > 0.0 {
            self.bump_norm
        } else {
            1.0 / bump_mass()
        }
    }

    /// Scaled 1-D profile `(c / eps) Kt(u / eps)` at displacement `u`.
    #[inline]
    fn profile_1d(&self, u: f64, norm: f64) -> f64 {
        norm / self.epsilon * raw_bump(u / self.epsilon)
    }

    /// Kernel value as a function of the periodic displacement `zeta - z`.
    pub fn eval_displacement(&self, disp: &[f64]) -> f64 {
        debug_assert_eq!(disp.len(), self.m);
        let norm = self.norm();
        let bump: f64 = disp.iter().map(|&u| self.profile_1d(u, norm)).product();
        (1.0 - self.floor_delta) * bump + self.floor_delta
    }

    /// `K(z, zeta)`.
    pub fn eval(&self, z: &[f64], zeta: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.m);
        debug_assert_eq!(zeta.len(), self.m);
        let norm = self.norm();
        let bump: f64 = z
            .iter()
            .zip(zeta)
            .map(|(&a, &b)| self.profile_1d(displacement_unit(a, b), norm))
            .product();
        (1.0 - self.floor_delta) * bump + self.floor_delta
    }

    /// Grid minimum and maximum of `K` and grid maximum of `|d_z K|` by
    /// centered differences, over a displacement grid with `grid_size` points
    /// per dimension.
    pub fn kernel_bounds(&self, grid_size: usize) -> Result<KernelBounds> {
        if grid_size < 64 {
            return Err(Error::invalid(format!("kernel bounds grid {grid_size} < 64")));
        }
        let h = 1.0 / grid_size as f64;
        let total = grid_size.pow(self.m as u32);
        let mut disp = vec![0.0; self.m];
        let mut probe = vec![0.0; self.m];
        let mut bounds = KernelBounds {
            min_k: f64::INFINITY,
            max_k0: f64::NEG_INFINITY,
            max_k1: 0.0,
        };
        for flat in 0..total {
            let mut rem = flat;
            for u in disp.iter_mut() {
                *u = displacement_unit(0.0, (rem % grid_size) as f64 * h);
                rem /= grid_size;
            }
            let k = self.eval_displacement(&disp);
            bounds.min_k = bounds.min_k.min(k);
            bounds.max_k0 = bounds.max_k0.max(k);
            // d/dz of K(zeta - z) is minus the derivative in the displacement.
            let mut sq = 0.0;
            for i in 0..self.m {
                probe.copy_from_slice(&disp);
                probe[i] = disp[i] + h;
                let up = self.eval_displacement(&probe);
                probe[i] = disp[i] - h;
                let down = self.eval_displacement(&probe);
                let fd = (up - down) / (2.0 * h);
                sq += fd * fd;
            }
            bounds.max_k1 = bounds.max_k1.max(sq.sqrt());
        }
        Ok(bounds)
    }

    /// The kernel restricted to a uniform lattice with `points_per_dim` nodes
    /// per dimension, with the bump renormalized so its lattice average is
    /// exactly one.
    pub fn lattice(&self, points_per_dim: usize) -> LatticeKernel {
        LatticeKernel::new(self, points_per_dim)
    }
}

/// Kernel weights between nodes of a uniform lattice on `T^m`.
///
/// The weight between node `j` and node `b` depends only on `b - j` (mod the
/// lattice). The bump part is rescaled so `(1/g^m) sum_k w(k) = 1` holds to
/// rounding, which makes lattice convolutions preserve constants exactly.
#[derive(Debug, Clone)]
pub struct LatticeKernel {
    m: usize,
    g: usize,
    floor_delta: f64,
    /// Normalized 1-D bump weights indexed by displacement `k in 0..g`.
    bump_1d: Vec<f64>,
    /// Signed offsets with nonzero 1-D bump weight, and their weights.
    support: Vec<(isize, f64)>,
}

impl LatticeKernel {
    fn new(kernel: &PeriodicKernel, g: usize) -> Self {
        let norm = kernel.norm();
        let mut bump_1d: Vec<f64> = (0..g)
            .map(|k| {
                let signed = if 2 * k < g { k as f64 } else { k as f64 - g as f64 };
                kernel.profile_1d(signed / g as f64, norm)
            })
            .collect();
        let mean = bump_1d.iter().sum::<f64>() / g as f64;
        if mean > 0.0 {
            bump_1d.iter_mut().for_each(|w| *w /= mean);
        } else {
            // Bandwidth below lattice spacing: all bump mass on the node itself.
            bump_1d[0] = g as f64;
        }
        let support = (0..g)
            .filter(|&k| bump_1d[k] > 0.0)
            .map(|k| {
                let signed = if 2 * k < g { k as isize } else { k as isize - g as isize };
                (signed, bump_1d[k])
            })
            .collect();
        Self {
            m: kernel.m,
            g,
            floor_delta: kernel.floor_delta,
            bump_1d,
            support,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn points_per_dim(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.g.pow(self.m as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn floor_delta(&self) -> f64 {
        self.floor_delta
    }

    /// Offsets along one axis where the bump part is nonzero.
    pub(crate) fn support_1d(&self) -> &[(isize, f64)] {
        &self.support
    }

    /// Bump part (without floor) for a per-axis displacement in lattice units.
    #[inline]
    pub fn bump(&self, disp: &[usize]) -> f64 {
        disp.iter().map(|&k| self.bump_1d[k % self.g]).product()
    }

    /// Full weight for per-axis displacements in lattice units.
    #[inline]
    pub fn weight(&self, disp: &[usize]) -> f64 {
        (1.0 - self.floor_delta) * self.bump(disp) + self.floor_delta
    }

    /// Bounds of the lattice weights, with the derivative taken by centered
    /// differences at the lattice spacing. Any convex combination of lattice
    /// kernel slices satisfies these bounds exactly.
    pub fn bounds(&self) -> KernelBounds {
        let g = self.g;
        let mut disp = vec![0usize; self.m];
        let mut probe = vec![0usize; self.m];
        let mut bounds = KernelBounds {
            min_k: f64::INFINITY,
            max_k0: f64::NEG_INFINITY,
            max_k1: 0.0,
        };
        for flat in 0..self.len() {
            let mut rem = flat;
            for k in disp.iter_mut() {
                *k = rem % g;
                rem /= g;
            }
            let w = self.weight(&disp);
            bounds.min_k = bounds.min_k.min(w);
            bounds.max_k0 = bounds.max_k0.max(w);
            let mut sq = 0.0;
            for i in 0..self.m {
                probe.copy_from_slice(&disp);
                probe[i] = (disp[i] + 1) % g;
                let up = self.weight(&probe);
                probe[i] = (disp[i] + g - 1) % g;
                let down = self.weight(&probe);
                let fd = (up - down) * g as f64 / 2.0;
                sq += fd * fd;
            }
            bounds.max_k1 = bounds.max_k1.max(sq.sqrt());
        }
        bounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn z_normalization_on_512_grid() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for &zeta in &[0.0, 0.123, 0.5, 0.987] {
            let s: f64 = (0..512).map(|j| k.eval(&[j as f64 / 512.0], &[zeta])).sum::<f64>() / 512.0;
            assert!((s - 1.0).abs() < 1e-8, "zeta={zeta}: {s}");
        }
    }

    #[test]
    fn z_normalization_random_zeta_1d_and_2d() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let k1 = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for _ in 0..16 {
            let zeta: f64 = rng.gen();
            let s: f64 = (0..1024).map(|j| k1.eval(&[j as f64 / 1024.0], &[zeta])).sum::<f64>() / 1024.0;
            assert!((s - 1.0).abs() < 1e-8);
        }
        // m = 2 at 256^2 needs a wider bump for 1e-8 rectangle-rule accuracy.
        let k2 = PeriodicKernel::new(2, 0.3, 0.01).unwrap();
        for _ in 0..16 {
            let zeta = [rng.gen::<f64>(), rng.gen::<f64>()];
            let mut s = 0.0;
            for a in 0..256 {
                for b in 0..256 {
                    s += k2.eval(&[a as f64 / 256.0, b as f64 / 256.0], &zeta);
                }
            }
            s /= 65536.0;
            assert!((s - 1.0).abs() < 1e-8, "{s}");
        }
    }

    #[test]
    fn floor_outside_support() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        assert_eq!(k.eval(&[0.0], &[0.15]), 0.01);
        assert_eq!(k.eval(&[0.9], &[0.5]), 0.01);
    }

    #[test]
    fn symmetric_on_grid() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for a in 0..64 {
            for b in 0..64 {
                let (z, zeta) = (a as f64 / 64.0 + 0.003, b as f64 / 64.0);
                assert!((k.eval(&[z], &[zeta]) - k.eval(&[zeta], &[z])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for &s in &[0.1, 0.37, 0.9] {
            let a = k.eval(&[0.05], &[0.12]);
            let b = k.eval(&[(0.05 + s) % 1.0], &[(0.12 + s) % 1.0]);
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bounds_examples() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        let b = k.kernel_bounds(1024).unwrap();
        assert_eq!(b.min_k, 0.01);
        let peak = k.eval(&[0.0], &[0.0]);
        assert!(b.max_k0 >= 1.0);
        assert_eq!(b.max_k0, peak);
        assert!(b.max_k1 > 0.0);

        let constant = PeriodicKernel::new(1, 0.2, 1.0).unwrap();
        let bc = constant.kernel_bounds(64).unwrap();
        assert_eq!((bc.min_k, bc.max_k0, bc.max_k1), (1.0, 1.0, 0.0));

        assert!(k.kernel_bounds(32).is_err());
    }

    #[test]
    fn bounds_min_is_floor_for_small_bandwidth() {
        for &eps in &[0.05, 0.2, 0.45] {
            let k = PeriodicKernel::new(1, eps, 0.03).unwrap();
            assert_eq!(k.kernel_bounds(256).unwrap().min_k, 0.03);
        }
    }

    #[test]
    fn bounds_hold_pointwise_off_grid() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        let b = k.kernel_bounds(4096).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        for _ in 0..2000 {
            let (z, zeta): (f64, f64) = (rng.gen(), rng.gen());
            let v = k.eval(&[z], &[zeta]);
            assert!(v >= b.min_k && v <= b.max_k0 + 1e-12);
            let h = 1e-5;
            let fd = (k.eval(&[z + h], &[zeta]) - k.eval(&[z - h], &[zeta])) / (2.0 * h);
            assert!(fd.abs() <= b.max_k1 * (1.0 + 1e-3));
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(PeriodicKernel::new(0, 0.2, 0.01).is_err());
        assert!(PeriodicKernel::new(1, 1.0, 0.01).is_err());
        assert!(PeriodicKernel::new(1, 0.2, 0.0).is_err());
        assert!(PeriodicKernel::new(1, 0.2, 1.5).is_err());
    }

    #[test]
    fn lattice_is_exactly_normalized_and_close_to_continuum() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        for &g in &[64usize, 256, 512] {
            let lat = k.lattice(g);
            let mean: f64 = (0..g).map(|i| lat.weight(&[i])).sum::<f64>() / g as f64;
            assert!((mean - 1.0).abs() < 1e-14);
            for i in 0..g {
                let cont = k.eval(&[0.0], &[i as f64 / g as f64]);
                assert!((lat.weight(&[i]) - cont).abs() <= 1e-3 * cont);
            }
        }
    }

    #[test]
    fn lattice_bounds_close_to_continuum() {
        let k = PeriodicKernel::new(1, 0.2, 0.01).unwrap();
        let cont = k.kernel_bounds(256).unwrap();
        let lat = k.lattice(256).bounds();
        assert_eq!(lat.min_k, cont.min_k);
        assert!((lat.max_k0 - cont.max_k0).abs() < 1e-5 * cont.max_k0);
        assert!((lat.max_k1 - cont.max_k1).abs() < 1e-5 * cont.max_k1);
    }

    #[test]
    fn lattice_is_even() {
        let lat = PeriodicKernel::new(1, 0.2, 0.01).unwrap().lattice(256);
        for k in 1..256 {
            assert_eq!(lat.weight(&[k]), lat.weight(&[256 - k]));
        }
    }
}

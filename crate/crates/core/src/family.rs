//! Real trigonometric test functions on `T^d`.

use std::cmp::Reverse;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f_n(x) = cos(2 pi k.x)` or `sin(2 pi k.x)` for nonzero wavevectors `k`,
/// ordered by total frequency `|k|_1`, then by descending lexicographic `k`,
/// cosine before sine. Only one of `k, -k` is kept (first nonzero entry
/// positive). The first functions on `T^2` are `cos(2 pi x1)`, `sin(2 pi x1)`,
/// `cos(2 pi x2)`, `sin(2 pi x2)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FamilyShape", into = "FamilyShape")]
pub struct TestFunctionFamily {
    dim: usize,
    len: usize,
    /// Distinct wavevectors, `dim` entries each, in family order.
    wavevectors: Vec<i32>,
    max_freq: usize,
    /// Per mode and axis, the index of `exp(2 pi i k_j x_j)` in the power table.
    table_index: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyShape {
    dim: usize,
    len: usize,
}

impl TryFrom<FamilyShape> for TestFunctionFamily {
    type Error = Error;

    fn try_from(s: FamilyShape) -> Result<Self> {
        Self::trigonometric(s.dim, s.len)
    }
}

impl From<TestFunctionFamily> for FamilyShape {
    fn from(f: TestFunctionFamily) -> Self {
        Self { dim: f.dim, len: f.len }
    }
}

/// Reusable buffer for evaluating a family without allocating.
#[derive(Debug, Clone, Default)]
pub struct FamilyScratch {
    powers: Vec<Complex64>,
}

impl TestFunctionFamily {
    pub fn trigonometric(dim: usize, len: usize) -> Result<Self> {
        if dim == 0 || len == 0 {
            return Err(Error::invalid("test family needs positive dimension and size"));
        }
        let needed = len.div_ceil(2);
        let mut ks: Vec<Vec<i32>> = Vec::new();
        let mut radius = 1i32;
        while ks.len() < needed {
            let mut shell = Vec::new();
            enumerate_shell(dim, radius, &mut Vec::new(), &mut shell);
            shell.retain(|k| k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0));
            shell.sort_by_key(|k| Reverse(k.clone()));
            ks.extend(shell);
            radius += 1;
        }
        ks.truncate(needed);
        let max_freq = ks
            .iter()
            .flat_map(|k| k.iter().map(|c| c.unsigned_abs() as usize))
            .max()
            .unwrap_or(0);
        Ok(Self::from_parts(dim, len, ks.concat(), max_freq))
    }

    fn from_parts(dim: usize, len: usize, wavevectors: Vec<i32>, max_freq: usize) -> Self {
        // Row j of the table holds powers -max_freq..=max_freq of exp(2 pi i x_j).
        let width = 2 * max_freq + 1;
        let table_index = wavevectors
            .chunks_exact(dim)
            .flat_map(|k| {
                k.iter()
                    .enumerate()
                    .map(move |(j, &c)| (j * width + (c + max_freq as i32) as usize) as u32)
            })
            .collect();
        Self {
            dim,
            len,
            wavevectors,
            max_freq,
            table_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Wavevector and kind (`false` = cosine, `true` = sine) of `f_n`, 0-based.
    pub fn mode(&self, n: usize) -> (&[i32], bool) {
        let k = n / 2;
        (&self.wavevectors[k * self.dim..(k + 1) * self.dim], n % 2 == 1)
    }

    /// Evaluate a single member directly with `cos`/`sin`.
    pub fn eval_one(&self, n: usize, x: &[f64]) -> f64 {
        let (k, is_sin) = self.mode(n);
        let arg: f64 = std::f64::consts::TAU * k.iter().zip(x).map(|(&c, &xi)| c as f64 * xi).sum::<f64>();
        if is_sin {
            arg.sin()
        } else {
            arg.cos()
        }
    }

    /// Evaluate every member at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], scratch: &mut FamilyScratch, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.len);
        let q = self.max_freq;
        let width = 2 * q + 1;
        scratch.powers.resize(self.dim * width, Complex64::new(1.0, 0.0));
        for (j, &xj) in x.iter().enumerate() {
            let (s, c) = (std::f64::consts::TAU * xj).sin_cos();
            let base = Complex64::new(c, s);
            let row = &mut scratch.powers[j * width..(j + 1) * width];
            row[q] = Complex64::new(1.0, 0.0);
            for p in 1..=q {
                let next = row[q + p - 1] * base;
                row[q + p] = next;
                row[q - p] = next.conj();
            }
        }
        let powers = &scratch.powers;
        for (idx, ks) in self.table_index.chunks_exact(self.dim).enumerate() {
            let mut z = powers[ks[0] as usize];
            for &t in &ks[1..] {
                z *= powers[t as usize];
            }
            out[2 * idx] = z.re;
            if 2 * idx + 1 < self.len {
                out[2 * idx + 1] = z.im;
            }
        }
    }
}

fn enumerate_shell(dim: usize, remaining: i32, prefix: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
    if prefix.len() + 1 == dim {
        for c in [remaining, -remaining] {
            prefix.push(c);
            out.push(prefix.clone());
            prefix.pop();
            if remaining == 0 {
                break;
            }
        }
        return;
    }
    for a in -remaining..=remaining {
        prefix.push(a);
        enumerate_shell(dim, remaining - a.abs(), prefix, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn ordering_on_t2() {
        let f = TestFunctionFamily::trigonometric(2, 40).unwrap();
        let kinds: Vec<(Vec<i32>, bool)> = (0..6).map(|n| (f.mode(n).0.to_vec(), f.mode(n).1)).collect();
        assert_eq!(
            kinds,
            vec![
                (vec![1, 0], false),
                (vec![1, 0], true),
                (vec![0, 1], false),
                (vec![0, 1], true),
                (vec![2, 0], false),
                (vec![2, 0], true),
            ]
        );
        // 40 functions are exactly the modes with |k|_1 <= 4 on T^2.
        assert_eq!(f.mode(39).0, &[0, 4]);
        assert_eq!(f.max_freq, 4);
    }

    #[test]
    fn wavevectors_are_distinct_and_canonical() {
        let f = TestFunctionFamily::trigonometric(3, 60).unwrap();
        let ks: Vec<&[i32]> = f.wavevectors.chunks_exact(3).collect();
        for (i, a) in ks.iter().enumerate() {
            assert!(a.iter().find(|&&c| c != 0).unwrap() > &0);
            for b in &ks[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn fast_evaluation_matches_direct() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        for &(d, n) in &[(1usize, 7usize), (2, 40), (3, 31)] {
            let f = TestFunctionFamily::trigonometric(d, n).unwrap();
            let mut scratch = FamilyScratch::default();
            let mut out = vec![0.0; n];
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                f.eval_into(&x, &mut scratch, &mut out);
                for (i, v) in out.iter().enumerate() {
                    assert!((v - f.eval_one(i, &x)).abs() < 1e-13);
                    assert!(v.abs() <= 1.0 + 1e-15);
                }
            }
        }
    }
}

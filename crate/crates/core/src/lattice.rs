//! Index arithmetic on uniform tensor lattices over `T^m` (`g` nodes per axis,
//! node `j` at coordinate `j / g`, flat index `sum_i j_i g^i`).

use crate::kernel::LatticeKernel;

/// Nearest lattice node along one axis.
#[inline]
pub fn nearest_node(z: f64, g: usize) -> usize {
    let j = (z * g as f64).round() as usize;
    if j >= g {
        j - g
    } else {
        j
    }
}

/// Flat index of the node nearest to `z`.
#[inline]
pub fn nearest_flat(z: &[f64], g: usize) -> usize {
    let mut flat = 0;
    let mut stride = 1;
    for &zi in z {
        flat += nearest_node(zi, g) * stride;
        stride *= g;
    }
    flat
}

#[inline]
pub(crate) fn succ(j: usize, g: usize) -> usize {
    if j + 1 == g {
        0
    } else {
        j + 1
    }
}

#[inline]
pub(crate) fn pred(j: usize, g: usize) -> usize {
    if j == 0 {
        g - 1
    } else {
        j - 1
    }
}

/// Cell index and offset of `z` in `[0, 1]` at spacing `1 / g`.
#[inline]
fn cell(z: f64, g: usize) -> (usize, f64) {
    let s = z * g as f64;
    let f = s.floor();
    let lo = f as usize;
    (if lo >= g { lo - g } else { lo }, s - f)
}

#[inline]
pub fn unflatten(mut flat: usize, g: usize, out: &mut [usize]) {
    for j in out.iter_mut() {
        *j = flat % g;
        flat /= g;
    }
}

/// `i mod g` for `-g <= i < 2g`.
#[inline]
fn wrap_index(i: isize, g: isize) -> usize {
    (if i < 0 {
        i + g
    } else if i >= g {
        i - g
    } else {
        i
    }) as usize
}

/// Calls `f(flat, w)` for every node in the bump support around `center`,
/// where `w` is the bump weight of the offset (floor part excluded).
pub fn for_each_in_support(lat: &LatticeKernel, center: usize, mut f: impl FnMut(usize, f64)) {
    let g = lat.points_per_dim() as isize;
    let support = lat.support_1d();
    if lat.m() == 1 {
        let c = center as isize;
        for &(off, w) in support {
            f(wrap_index(c + off, g), w);
        }
        return;
    }
    let m = lat.m();
    let mut base = vec![0usize; m];
    unflatten(center, g as usize, &mut base);
    let mut odometer = vec![0usize; m];
    loop {
        let mut flat = 0usize;
        let mut stride = 1usize;
        let mut w = 1.0;
        for i in 0..m {
            let (off, wi) = support[odometer[i]];
            flat += wrap_index(base[i] as isize + off, g) * stride;
            stride *= g as usize;
            w *= wi;
        }
        f(flat, w);
        let mut i = 0;
        loop {
            odometer[i] += 1;
            if odometer[i] < support.len() {
                break;
            }
            odometer[i] = 0;
            i += 1;
            if i == m {
                return;
            }
        }
    }
}

/// Multilinear interpolation of node values at `z`.
pub fn interpolate(z: &[f64], g: usize, mut node: impl FnMut(usize) -> f64) -> f64 {
    let m = z.len();
    let mut lo = [0usize; 8];
    let mut frac = [0f64; 8];
    assert!(m <= 8, "interpolation supports up to 8 dimensions");
    for i in 0..m {
        (lo[i], frac[i]) = cell(z[i], g);
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << m) {
        let mut flat = 0;
        let mut stride = 1;
        let mut w = 1.0;
        for i in 0..m {
            let up = (corner >> i) & 1 == 1;
            let j = if up { succ(lo[i], g) } else { lo[i] };
            w *= if up { frac[i] } else { 1.0 - frac[i] };
            flat += j * stride;
            stride *= g;
        }
        if w != 0.0 {
            acc += w * node(flat);
        }
    }
    acc
}

/// Gradient by centered differences at the nodes, multilinearly interpolated
/// to `z`.
pub fn interpolate_gradient(z: &[f64], g: usize, mut node: impl FnMut(usize) -> f64, out: &mut [f64]) {
    let m = z.len();
    assert!(m <= 8, "interpolation supports up to 8 dimensions");
    let mut lo = [0usize; 8];
    let mut frac = [0f64; 8];
    for i in 0..m {
        (lo[i], frac[i]) = cell(z[i], g);
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    let half_g = g as f64 / 2.0;
    for corner in 0..(1usize << m) {
        let mut idx = [0usize; 8];
        let mut w = 1.0;
        for i in 0..m {
            let up = (corner >> i) & 1 == 1;
            idx[i] = if up { succ(lo[i], g) } else { lo[i] };
            w *= if up { frac[i] } else { 1.0 - frac[i] };
        }
        if w == 0.0 {
            continue;
        }
        for (axis, o) in out.iter_mut().enumerate() {
            let mut flat_up = 0;
            let mut flat_down = 0;
            let mut stride = 1;
            for i in 0..m {
                let (ju, jd) = if i == axis {
                    (succ(idx[i], g), pred(idx[i], g))
                } else {
                    (idx[i], idx[i])
                };
                flat_up += ju * stride;
                flat_down += jd * stride;
                stride *= g;
            }
            *o += w * (node(flat_up) - node(flat_down)) * half_g;
        }
    }
}

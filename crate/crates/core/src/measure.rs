//! Empirical occupation measures tracked through test-function moments and a
//! histogram of reaction-coordinate values.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{FamilyScratch, TestFunctionFamily};
use crate::lattice;
use crate::torus::TorusPoint;

/// Initial measure `mu_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialMeasure {
    #[default]
    Uniform,
    PointMass { at: Vec<f64> },
}

/// Weighted occupation measure
/// `(w0 mu_0 + sum w_k dt delta_{x_k}) / (w0 + sum w_k dt)`.
///
/// With unit weights this is the unweighted occupation measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationMeasure {
    family: Arc<TestFunctionFamily>,
    m: usize,
    g: usize,
    moment_sums: Vec<f64>,
    xi_histogram: Vec<f64>,
    total_weight: f64,
    prior_weight: f64,
    prior_moments: Vec<f64>,
    #[serde(skip)]
    scratch: FamilyScratch,
    #[serde(skip)]
    values: Vec<f64>,
}

impl OccupationMeasure {
    /// `g` histogram nodes per reaction-coordinate axis (at least 64), `m`
    /// reaction-coordinate dimensions.
    pub fn new(
        family: Arc<TestFunctionFamily>,
        m: usize,
        g: usize,
        mu0: &InitialMeasure,
        prior_weight: f64,
    ) -> Result<Self> {
        if g < 64 {
            return Err(Error::invalid(format!("histogram size {g} < 64")));
        }
        if m == 0 || m >= family.dim() {
            return Err(Error::invalid(format!(
                "reaction coordinate dimension {m} incompatible with d={}",
                family.dim()
            )));
        }
        if !(prior_weight > 0.0 && prior_weight.is_finite()) {
            return Err(Error::invalid("prior weight must be positive"));
        }
        let n = family.len();
        let bins = g.pow(m as u32);
        let mut scratch = FamilyScratch::default();
        let (prior_moments, xi_histogram) = match mu0 {
            InitialMeasure::Uniform => (vec![0.0; n], vec![prior_weight / bins as f64; bins]),
            InitialMeasure::PointMass { at } => {
                if at.len() != family.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: family.dim(),
                        got: at.len(),
                    });
                }
                let x = TorusPoint::wrap(at)?;
                let mut moments = vec![0.0; n];
                family.eval_into(x.coords(), &mut scratch, &mut moments);
                let mut hist = vec![0.0; bins];
                hist[lattice::nearest_flat(&x.coords()[..m], g)] = prior_weight;
                (moments, hist)
            }
        };
        Ok(Self {
            family,
            m,
            g,
            moment_sums: vec![0.0; n],
            xi_histogram,
            total_weight: 0.0,
            prior_weight,
            prior_moments,
            scratch,
            values: vec![0.0; n],
        })
    }

    pub fn family(&self) -> &Arc<TestFunctionFamily> {
        &self.family
    }

    pub fn histogram_points_per_dim(&self) -> usize {
        self.g
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Add `weight * dt` of mass at `x`. Returns the histogram bin that
    /// received it.
    pub fn accumulate(&mut self, x: &TorusPoint, weight: f64, dt: f64) -> Result<usize> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("accumulation weight {weight} must be positive")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("accumulation step {dt} must be positive")));
        }
        Ok(self.accumulate_unchecked(x.coords(), weight * dt))
    }

    #[inline]
    pub(crate) fn accumulate_unchecked(&mut self, x: &[f64], mass: f64) -> usize {
        self.family.eval_into(x, &mut self.scratch, &mut self.values);
        for (s, v) in self.moment_sums.iter_mut().zip(&self.values) {
            *s += mass * v;
        }
        let bin = lattice::nearest_flat(&x[..self.m], self.g);
        self.xi_histogram[bin] += mass;
        self.total_weight += mass;
        bin
    }

    /// Accumulated weight excluding the prior (`theta(t)` in weighted mode,
    /// elapsed time in unweighted mode).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    /// Total mass `w0 + total_weight`.
    pub fn mass(&self) -> f64 {
        self.prior_weight + self.total_weight
    }

    pub fn moment_sums(&self) -> &[f64] {
        &self.moment_sums
    }

    pub fn prior_moments(&self) -> &[f64] {
        &self.prior_moments
    }

    /// Moments of the normalized measure, prior included.
    pub fn normalized_moments(&self) -> Vec<f64> {
        let mass = self.mass();
        self.prior_moments
            .iter()
            .zip(&self.moment_sums)
            .map(|(p, s)| (p * self.prior_weight + s) / mass)
            .collect()
    }

    /// Pure time averages `sum w f(x) dt / sum w dt`, prior excluded.
    pub fn time_averages(&self) -> Option<Vec<f64>> {
        (self.total_weight > 0.0).then(|| self.moment_sums.iter().map(|s| s / self.total_weight).collect())
    }

    /// Raw histogram masses (sum to `mass()`).
    pub fn xi_histogram(&self) -> &[f64] {
        &self.xi_histogram
    }

    /// Histogram normalized to a probability vector.
    pub fn normalized_histogram(&self) -> Vec<f64> {
        let mass = self.mass();
        self.xi_histogram.iter().map(|h| h / mass).collect()
    }
}

/// Value of the truncated metric `sum_{n <= N} 2^-n min(1, |a_n - b_n|)` and
/// the bound `2^-N` on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub truncation: f64,
}

pub fn metric_d(a: &[f64], b: &[f64], n_used: usize) -> Result<MetricValue> {
    if a.len() < n_used || b.len() < n_used {
        return Err(Error::invalid(format!(
            "metric needs {n_used} moments, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut scale = 1.0;
    let mut value = 0.0;
    for (x, y) in a.iter().zip(b).take(n_used) {
        scale *= 0.5;
        value += scale * (x - y).abs().min(1.0);
    }
    Ok(MetricValue {
        value,
        truncation: scale,
    })
}

/// Metric between two occupation measures over the same family.
pub fn metric_between(a: &OccupationMeasure, b: &OccupationMeasure, n_used: usize) -> Result<MetricValue> {
    if a.family != b.family {
        return Err(Error::invalid("measures use different test families"));
    }
    metric_d(&a.normalized_moments(), &b.normalized_moments(), n_used)
}

/// The limit semiflow `e^-s nu + (1 - e^-s) mu` acting on moment vectors.
pub fn gamma_flow(nu: &[f64], target: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("flow time {s} must be nonnegative")));
    }
    if nu.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: nu.len(),
        });
    }
    let decay = (-s).exp();
    Ok(nu
        .iter()
        .zip(target)
        .map(|(n, t)| decay * n + (1.0 - decay) * t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn family() -> Arc<TestFunctionFamily> {
        Arc::new(TestFunctionFamily::trigonometric(2, 40).unwrap())
    }

    #[test]
    fn uniform_init() {
        let mu = OccupationMeasure::new(family(), 1, 256, &InitialMeasure::Uniform, 1.0).unwrap();
        assert!(mu.normalized_moments().iter().all(|&v| v == 0.0));
        let h = mu.xi_histogram();
        assert!(h.iter().all(|&v| v == h[0]));
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(mu.total_weight(), 0.0);
    }

    #[test]
    fn point_mass_init() {
        let f = family();
        let at = vec![0.3, 0.8];
        let mu = OccupationMeasure::new(f.clone(), 1, 64, &InitialMeasure::PointMass { at: at.clone() }, 1.0).unwrap();
        for (n, m) in mu.prior_moments().iter().enumerate() {
            assert!((m - f.eval_one(n, &at)).abs() < 1e-14);
        }
        assert_eq!(mu.xi_histogram()[lattice::nearest_node(0.3, 64)], 1.0);
    }

    #[test]
    fn init_errors() {
        assert!(OccupationMeasure::new(family(), 1, 32, &InitialMeasure::Uniform, 1.0).is_err());
        assert!(OccupationMeasure::new(family(), 2, 64, &InitialMeasure::Uniform, 1.0).is_err());
        let bad = InitialMeasure::PointMass { at: vec![0.1] };
        assert!(OccupationMeasure::new(family(), 1, 64, &bad, 1.0).is_err());
    }

    #[test]
    fn single_step_moment() {
        let f = family();
        let mut mu = OccupationMeasure::new(f.clone(), 1, 64, &InitialMeasure::Uniform, 1.0).unwrap();
        let x = TorusPoint::wrap(&[0.1, 0.7]).unwrap();
        let (w, dt) = (0.4, 0.01);
        mu.accumulate(&x, w, dt).unwrap();
        for (n, m) in mu.normalized_moments().iter().enumerate() {
            let expected = w * dt * f.eval_one(n, x.coords()) / (1.0 + w * dt);
            assert!((m - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn accumulate_rejects_nonpositive() {
        let mut mu = OccupationMeasure::new(family(), 1, 64, &InitialMeasure::Uniform, 1.0).unwrap();
        let x = TorusPoint::origin(2);
        assert!(mu.accumulate(&x, 0.0, 0.1).is_err());
        assert!(mu.accumulate(&x, 1.0, -0.1).is_err());
        assert!(mu.accumulate(&x, 0.01 * 1e-3, 1e-3).is_ok());
    }

    #[test]
    fn repeated_accumulation_converges_to_dirac() {
        // Closed form: after n steps, moment = n dt f / (1 + n dt).
        let f = family();
        let mut mu = OccupationMeasure::new(f.clone(), 1, 64, &InitialMeasure::Uniform, 1.0).unwrap();
        let x = TorusPoint::wrap(&[0.2, 0.45]).unwrap();
        let dt = 0.01;
        let steps = 100_000;
        for _ in 0..steps {
            mu.accumulate(&x, 1.0, dt).unwrap();
        }
        let t = steps as f64 * dt;
        for (n, m) in mu.normalized_moments().iter().enumerate() {
            let fx = f.eval_one(n, x.coords());
            assert!((m - t * fx / (1.0 + t)).abs() < 1e-9);
            assert!((m - fx).abs() < 2.0 / t);
        }
    }

    #[test]
    fn histogram_mass_identity_after_many_updates() {
        let mut mu = OccupationMeasure::new(family(), 1, 256, &InitialMeasure::Uniform, 1.0).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
        for _ in 0..1_000_000 {
            let x = TorusPoint::wrap(&[rng.gen(), rng.gen()]).unwrap();
            mu.accumulate(&x, rng.gen_range(0.01..4.0), 1e-3).unwrap();
        }
        let sum: f64 = mu.xi_histogram().iter().sum();
        assert!(((sum - mu.mass()) / mu.mass()).abs() < 1e-12);
        assert!(mu.xi_histogram().iter().all(|&h| h >= 0.0));
        assert!(mu.normalized_moments().iter().all(|m| m.abs() <= 1.0));
    }

    #[test]
    fn metric_examples() {
        let a = vec![0.3; 20];
        let m = metric_d(&a, &a, 20).unwrap();
        assert_eq!(m.value, 0.0);
        assert_eq!(m.truncation, 2f64.powi(-20));
        assert!(metric_d(&vec![5.0; 20], &vec![-5.0; 20], 20).unwrap().value <= 1.0);
        assert!(metric_d(&a, &a[..10], 20).is_err());
    }

    #[test]
    fn metric_between_point_masses_brute_force() {
        let f = family();
        let (x, y) = ([0.1, 0.2], [0.6, 0.9]);
        let mx = OccupationMeasure::new(f.clone(), 1, 64, &InitialMeasure::PointMass { at: x.to_vec() }, 1.0).unwrap();
        let my = OccupationMeasure::new(f.clone(), 1, 64, &InitialMeasure::PointMass { at: y.to_vec() }, 1.0).unwrap();
        let got = metric_between(&mx, &my, 20).unwrap().value;
        let first = 0.5 * ((std::f64::consts::TAU * x[0]).cos() - (std::f64::consts::TAU * y[0]).cos()).abs();
        let brute: f64 = (0..20)
            .map(|n| 0.5f64.powi(n as i32 + 1) * (f.eval_one(n, &x) - f.eval_one(n, &y)).abs().min(1.0))
            .sum();
        assert!((got - brute).abs() < 1e-14);
        assert!(got >= first);
    }

    #[test]
    fn metric_rejects_family_mismatch() {
        let a = OccupationMeasure::new(family(), 1, 64, &InitialMeasure::Uniform, 1.0).unwrap();
        let other = Arc::new(TestFunctionFamily::trigonometric(2, 12).unwrap());
        let b = OccupationMeasure::new(other, 1, 64, &InitialMeasure::Uniform, 1.0).unwrap();
        assert!(metric_between(&a, &b, 10).is_err());
    }

    #[test]
    fn gamma_flow_examples() {
        let nu = vec![0.5, -0.2, 0.1];
        let mu = vec![0.1, 0.3, -0.4];
        assert_eq!(gamma_flow(&nu, &mu, 0.0).unwrap(), nu);
        let far = gamma_flow(&nu, &mu, 60.0).unwrap();
        for (a, b) in far.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(gamma_flow(&nu, &mu, -1.0).is_err());
        assert_eq!(gamma_flow(&mu, &mu, 3.7).unwrap(), mu);
    }

    proptest! {
        #[test]
        fn metric_is_a_pseudometric(
            a in proptest::collection::vec(-1.0f64..1.0, 20),
            b in proptest::collection::vec(-1.0f64..1.0, 20),
            c in proptest::collection::vec(-1.0f64..1.0, 20),
        ) {
            let d = |x: &[f64], y: &[f64]| metric_d(x, y, 20).unwrap().value;
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-15);
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
        }

        #[test]
        fn gamma_flow_semigroup(
            nu in proptest::collection::vec(-1.0f64..1.0, 8),
            mu in proptest::collection::vec(-1.0f64..1.0, 8),
            s in 0.0f64..5.0,
            t in 0.0f64..5.0,
        ) {
            let direct = gamma_flow(&nu, &mu, s + t).unwrap();
            let composed = gamma_flow(&gamma_flow(&nu, &mu, s).unwrap(), &mu, t).unwrap();
            for (x, y) in direct.iter().zip(&composed) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

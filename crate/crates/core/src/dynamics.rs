//! Euler–Maruyama integrators for the unbiased, star-biased, adaptive (ABP),
//! time-changed adaptive and frozen-bias dynamics on the torus.
//!
//! All variants share one update
//! `x <- wrap(x + (-grad V + grad B(xi)) lambda dt + sqrt(2 lambda dt / beta) g)`
//! with `g` a standard Gaussian vector. `B` is zero for the unbiased dynamics,
//! `lambda = exp(beta B(xi(x)))` for the time-changed and frozen variants and
//! `lambda = 1` otherwise. Zero biases therefore reproduce the unbiased
//! trajectory bit for bit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::bias::{exp_admissibility, smooth_masses, AdmissibilityReport, BiasFunction};
use crate::error::{Error, Result};
use crate::family::TestFunctionFamily;
use crate::kernel::{KernelBounds, LatticeKernel, PeriodicKernel};
use crate::lattice;
use crate::measure::{metric_d, InitialMeasure, OccupationMeasure};
use crate::potential::Potential;
use crate::torus::{wrap_unit, ReactionCoordinate, TorusPoint};

/// Largest accepted time step.
pub const MAX_DT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `dX = -grad V dt + sqrt(2/beta) dW`.
    Unbiased,
    /// Biased by the exact free energy `A*`.
    Star,
    /// Adaptive bias from the weighted occupation measure.
    Abp,
    /// Adaptive bias in the time-changed clock `s = theta(t)`.
    AbpTimeChanged,
    /// Time-changed dynamics with a fixed bias `B`.
    Frozen,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Unbiased,
        Variant::Star,
        Variant::Abp,
        Variant::AbpTimeChanged,
        Variant::Frozen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unbiased => "unbiased",
            Variant::Star => "star",
            Variant::Abp => "abp",
            Variant::AbpTimeChanged => "abp_time_changed",
            Variant::Frozen => "frozen",
        }
    }

    fn is_adaptive(self) -> bool {
        matches!(self, Variant::Abp | Variant::AbpTimeChanged)
    }

    fn is_time_changed(self) -> bool {
        matches!(self, Variant::AbpTimeChanged | Variant::Frozen)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_refresh() -> usize {
    10
}
fn default_histogram() -> usize {
    256
}
fn one() -> f64 {
    1.0
}
fn default_step_cap() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub beta: f64,
    pub dt: f64,
    pub n_steps: u64,
    pub seed: u64,
    pub variant: Variant,
    #[serde(default = "default_refresh")]
    pub refresh_every: usize,
    /// Histogram nodes per reaction-coordinate axis.
    #[serde(default = "default_histogram")]
    pub histogram_size: usize,
    #[serde(default)]
    pub initial_point: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_measure: InitialMeasure,
    #[serde(default = "one")]
    pub prior_weight: f64,
    /// Cap on `lambda * dt` for the time-changed variants.
    #[serde(default = "default_step_cap")]
    pub step_cap: f64,
    /// Multiplies the Brownian increment. Only for deterministic tests.
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Check the admissible-set bounds after every adaptive bias refresh.
    #[serde(default = "default_true")]
    pub check_admissible: bool,
    /// Store bias grids and histograms in checkpoints.
    #[serde(default = "default_true")]
    pub record_grids: bool,
}

impl SimulationConfig {
    pub fn new(variant: Variant, beta: f64, dt: f64, n_steps: u64, seed: u64) -> Self {
        Self {
            beta,
            dt,
            n_steps,
            seed,
            variant,
            refresh_every: default_refresh(),
            histogram_size: default_histogram(),
            initial_point: None,
            initial_measure: InitialMeasure::Uniform,
            prior_weight: 1.0,
            step_cap: default_step_cap(),
            noise_scale: 1.0,
            check_admissible: true,
            record_grids: true,
        }
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta {} must be positive", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid(format!(
                "time step {} outside (0, {MAX_DT}] (stability guard)",
                self.dt
            )));
        }
        if self.refresh_every == 0 {
            return Err(Error::invalid("refresh_every must be at least 1"));
        }
        if !(self.step_cap > 0.0) {
            return Err(Error::invalid("step cap must be positive"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise scale must be nonnegative"));
        }
        Ok(())
    }
}

/// Adaptive bias kept in sync with the histogram of a weighted occupation
/// measure. Kernel sums are updated per accumulated sample and published to
/// the integrator every `refresh_every` steps; node values of `A` are
/// computed lazily from the published `exp(-beta A)`.
#[derive(Debug, Clone)]
struct AdaptiveBias {
    lattice: LatticeKernel,
    bounds: KernelBounds,
    beta: f64,
    /// `sum_b bump(b - j) hist_b`.
    local: Vec<f64>,
    exp_values: Vec<f64>,
    cache: Vec<f64>,
    stamp: Vec<u32>,
    generation: u32,
}

impl AdaptiveBias {
    fn new(kernel: &PeriodicKernel, g: usize, beta: f64, histogram: &[f64]) -> Self {
        let lattice = kernel.lattice(g);
        let bounds = lattice.bounds();
        let delta = lattice.floor_delta();
        let total: f64 = histogram.iter().sum();
        // smooth_masses includes the floor; strip it to get the bump sums.
        let local = smooth_masses(histogram, &lattice)
            .into_iter()
            .map(|s| {
                if delta < 1.0 {
                    (s - delta * total) / (1.0 - delta)
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>();
        let n = local.len();
        let mut bias = Self {
            lattice,
            bounds,
            beta,
            local,
            exp_values: vec![1.0; n],
            cache: vec![0.0; n],
            stamp: vec![0; n],
            generation: 0,
        };
        bias.publish(total);
        bias
    }

    #[inline]
    fn add_mass(&mut self, bin: usize, mass: f64) {
        let local = &mut self.local;
        lattice::for_each_in_support(&self.lattice, bin, |j, w| local[j] += w * mass);
    }

    fn publish(&mut self, total_mass: f64) {
        let delta = self.lattice.floor_delta();
        let scale = (1.0 - delta) / total_mass;
        for (e, l) in self.exp_values.iter_mut().zip(&self.local) {
            *e = delta + scale * l;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = u32::MAX);
            self.generation = 1;
        }
    }

    #[inline]
    fn node(&mut self, j: usize) -> f64 {
        if self.stamp[j] != self.generation {
            self.cache[j] = -self.exp_values[j].ln() / self.beta;
            self.stamp[j] = self.generation;
        }
        self.cache[j]
    }

    fn value_at(&mut self, z: &[f64]) -> f64 {
        let g = self.lattice.points_per_dim();
        lattice::interpolate(z, g, |k| self.node(k))
    }

    fn gradient_at(&mut self, z: &[f64], out: &mut [f64]) {
        let g = self.lattice.points_per_dim();
        lattice::interpolate_gradient(z, g, |k| self.node(k), out)
    }

    fn materialize(&mut self) -> BiasFunction {
        let values = (0..self.exp_values.len()).map(|j| self.node(j)).collect();
        BiasFunction::from_values(self.lattice.m(), self.lattice.points_per_dim(), self.beta, values)
            .expect("lattice sizes agree")
    }

    fn admissibility(&self) -> AdmissibilityReport {
        exp_admissibility(&self.exp_values, self.lattice.m(), self.lattice.points_per_dim(), &self.bounds, 0.0)
    }
}

#[derive(Debug, Clone)]
enum BiasDriver {
    Zero,
    Fixed(BiasFunction),
    Adaptive(AdaptiveBias),
}

impl BiasDriver {
    fn value_at(&mut self, z: &[f64]) -> f64 {
        match self {
            BiasDriver::Zero => 0.0,
            BiasDriver::Fixed(b) => b.value_at(z),
            BiasDriver::Adaptive(a) => a.value_at(z),
        }
    }

    fn gradient_at(&mut self, z: &[f64], out: &mut [f64]) {
        match self {
            BiasDriver::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            BiasDriver::Fixed(b) => b.gradient_at(z, out),
            BiasDriver::Adaptive(a) => a.gradient_at(z, out),
        }
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct SimulationState {
    pub x: TorusPoint,
    pub step: u64,
    /// Weighted time: `theta(t)` for the adaptive variant, original time
    /// `int lambda ds` for the time-changed variants, the clock otherwise.
    pub theta: f64,
    /// Main occupation measure (weighted for `Abp`, unweighted otherwise).
    pub measure: OccupationMeasure,
    /// Star variant only: weights `exp(-beta A*(xi(x)))`, no prior.
    pub reweighted: Option<OccupationMeasure>,
    /// Unweighted visit histogram of `xi(x)`, without prior.
    pub visits: Vec<f64>,
}

/// Snapshot of a run at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    /// The integrator clock (`t`, or `s` for time-changed variants).
    pub time: f64,
    pub theta: f64,
    /// Normalized moments of the main occupation measure (prior included).
    pub moments: Vec<f64>,
    /// Metric to the target moments, when a target was supplied.
    pub d_to_target: Option<f64>,
    /// Raw moment sums and total weight of the reweighted accumulator.
    pub reweighted_sums: Option<Vec<f64>>,
    pub reweighted_weight: Option<f64>,
    /// Current bias grid values (adaptive and fixed biases).
    pub bias: Option<Vec<f64>>,
    /// Cumulative unweighted visit histogram (mass per bin, no prior).
    pub visits: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: SimulationConfig,
    pub family: TestFunctionFamily,
    pub checkpoints: Vec<Checkpoint>,
    pub final_point: Vec<f64>,
    pub final_bias: Option<BiasFunction>,
    /// Normalized histogram of the main measure at the end of the run.
    pub final_histogram: Vec<f64>,
    /// Number of adaptive-bias publications checked against the admissible set.
    pub admissibility_checks: u64,
    /// Largest violation of any admissible-set bound seen during the run.
    pub worst_admissibility_violation: f64,
    pub metric_terms: usize,
}

/// Everything a run needs besides its config.
#[derive(Clone)]
pub struct RunSetup<'a> {
    pub potential: &'a dyn Potential,
    pub kernel: &'a PeriodicKernel,
    pub family: Arc<TestFunctionFamily>,
    /// `A*` for the star variant, `B` for the frozen variant.
    pub fixed_bias: Option<BiasFunction>,
    /// Target moments for the running metric.
    pub target: Option<Vec<f64>>,
    pub metric_terms: usize,
}

pub struct Simulation<'a> {
    config: SimulationConfig,
    potential: &'a dyn Potential,
    xi: ReactionCoordinate,
    bias: BiasDriver,
    state: SimulationState,
    rng: Xoshiro256PlusPlus,
    grad_v: Vec<f64>,
    grad_b: Vec<f64>,
    increment: Vec<f64>,
    checks: u64,
    worst_violation: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(config: SimulationConfig, setup: &RunSetup<'a>) -> Result<Self> {
        config.validate()?;
        let d = setup.potential.dim();
        let m = setup.kernel.m();
        let xi = ReactionCoordinate::new(m, d)?;
        if setup.family.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: setup.family.dim(),
            });
        }
        let g = config.histogram_size;
        let measure = OccupationMeasure::new(
            setup.family.clone(),
            m,
            g,
            &config.initial_measure,
            config.prior_weight,
        )?;
        let bias = match config.variant {
            Variant::Unbiased => BiasDriver::Zero,
            Variant::Star | Variant::Frozen => {
                let b = setup.fixed_bias.clone().ok_or_else(|| {
                    Error::invalid(format!("variant {} needs a fixed bias", config.variant))
                })?;
                if b.m() != m || (b.beta() - config.beta).abs() > 1e-12 * config.beta {
                    return Err(Error::invalid("fixed bias does not match reaction coordinate or beta"));
                }
                BiasDriver::Fixed(b)
            }
            Variant::Abp | Variant::AbpTimeChanged => BiasDriver::Adaptive(AdaptiveBias::new(
                setup.kernel,
                g,
                config.beta,
                measure.xi_histogram(),
            )),
        };
        let reweighted = match config.variant {
            Variant::Star => Some(OccupationMeasure::new(
                setup.family.clone(),
                m,
                g,
                &InitialMeasure::Uniform,
                config.prior_weight,
            )?),
            _ => None,
        };
        let x = match &config.initial_point {
            Some(p) if p.len() != d => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                })
            }
            Some(p) => TorusPoint::wrap(p)?,
            None => TorusPoint::origin(d),
        };
        let rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
        let mut sim = Self {
            potential: setup.potential,
            xi,
            bias,
            state: SimulationState {
                x,
                step: 0,
                theta: 0.0,
                measure,
                reweighted,
                visits: vec![0.0; g.pow(m as u32)],
            },
            rng,
            grad_v: vec![0.0; d],
            grad_b: vec![0.0; m],
            increment: vec![0.0; d],
            checks: 0,
            worst_violation: 0.0,
            config,
        };
        sim.check_admissible();
        Ok(sim)
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// The integrator clock.
    pub fn time(&self) -> f64 {
        self.state.step as f64 * self.config.dt
    }

    /// Current bias as a grid function (zero for the unbiased variant).
    pub fn current_bias(&mut self) -> BiasFunction {
        match &mut self.bias {
            BiasDriver::Zero => BiasFunction::zero(self.xi.m(), self.config.histogram_size, self.config.beta),
            BiasDriver::Fixed(b) => b.clone(),
            BiasDriver::Adaptive(a) => a.materialize(),
        }
    }

    fn check_admissible(&mut self) {
        if !self.config.check_admissible {
            return;
        }
        if let BiasDriver::Adaptive(a) = &self.bias {
            let r = a.admissibility();
            self.checks += 1;
            let worst = r.min_violation.max(r.max_violation).max(r.derivative_violation);
            self.worst_violation = self.worst_violation.max(worst);
        }
    }

    /// One Euler–Maruyama step of the configured variant.
    pub fn step(&mut self) -> Result<()> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let beta = cfg.beta;
        let m = self.xi.m();
        let z = &self.state.x.coords()[..m];
        let lambda = if cfg.variant.is_time_changed() {
            let l = (beta * self.bias.value_at(z)).exp();
            if l * dt > cfg.step_cap {
                return Err(Error::StepSize {
                    effective: l * dt,
                    cap: cfg.step_cap,
                });
            }
            l
        } else {
            1.0
        };
        self.bias.gradient_at(z, &mut self.grad_b);
        self.potential.gradient(self.state.x.coords(), &mut self.grad_v);
        let noise = (2.0 * lambda * dt / beta).sqrt() * cfg.noise_scale;
        for i in 0..self.increment.len() {
            let gb = if i < m { self.grad_b[i] } else { 0.0 };
            let g: f64 = self.rng.sample(StandardNormal);
            self.increment[i] = (-self.grad_v[i] + gb) * lambda * dt + noise * g;
        }
        for (c, inc) in self.state.x.coords_mut().iter_mut().zip(&self.increment) {
            *c = wrap_unit(*c + inc);
        }
        self.state.step += 1;
        let x = self.state.x.coords();
        let z = &x[..m];

        let weight = match cfg.variant {
            Variant::Abp => (-beta * self.bias.value_at(z)).exp(),
            _ => 1.0,
        };
        let mass = weight * dt;
        let bin = self.state.measure.accumulate_unchecked(x, mass);
        self.state.visits[bin] += dt;
        if let Some(rw) = self.state.reweighted.as_mut() {
            let w = (-beta * self.bias.value_at(z)).exp();
            rw.accumulate_unchecked(x, w * dt);
        }
        self.state.theta += match cfg.variant {
            Variant::Abp => mass,
            Variant::AbpTimeChanged | Variant::Frozen => lambda * dt,
            _ => dt,
        };
        if cfg.variant.is_adaptive() {
            let refresh = self.state.step % cfg.refresh_every as u64 == 0;
            let total = self.state.measure.mass();
            if let BiasDriver::Adaptive(a) = &mut self.bias {
                a.add_mass(bin, mass);
                if refresh {
                    a.publish(total);
                }
            }
            if refresh {
                self.check_admissible();
            }
        }
        Ok(())
    }

    fn checkpoint(&mut self, target: Option<&[f64]>, metric_terms: usize) -> Checkpoint {
        let moments = self.state.measure.normalized_moments();
        let d_to_target = target.map(|t| {
            metric_d(&moments, t, metric_terms.min(moments.len()))
                .map(|v| v.value)
                .unwrap_or(f64::NAN)
        });
        let record = self.config.record_grids;
        let bias = match (&self.bias, record) {
            (BiasDriver::Zero, _) | (_, false) => None,
            _ => Some(self.current_bias().values().to_vec()),
        };
        Checkpoint {
            step: self.state.step,
            time: self.time(),
            theta: self.state.theta,
            moments,
            d_to_target,
            reweighted_sums: self.state.reweighted.as_ref().map(|r| r.moment_sums().to_vec()),
            reweighted_weight: self.state.reweighted.as_ref().map(|r| r.total_weight()),
            bias,
            visits: record.then(|| self.state.visits.clone()),
        }
    }

    /// Run to `n_steps`, recording a checkpoint at step 0, at the first step
    /// reaching each requested time and at the last step.
    pub fn run(mut self, checkpoint_times: &[f64], target: Option<&[f64]>, metric_terms: usize) -> Result<RunRecord> {
        let dt = self.config.dt;
        let n_steps = self.config.n_steps;
        let mut steps: Vec<u64> = checkpoint_times
            .iter()
            .filter(|t| t.is_finite() && **t >= 0.0)
            .map(|t| ((t / dt) - 1e-9).ceil().max(0.0) as u64)
            .filter(|&s| s <= n_steps)
            .collect();
        steps.push(0);
        steps.push(n_steps);
        steps.sort_unstable();
        steps.dedup();

        let mut checkpoints = Vec::with_capacity(steps.len());
        for &target_step in &steps {
            while self.state.step < target_step {
                self.step()?;
            }
            checkpoints.push(self.checkpoint(target, metric_terms));
        }
        let final_bias = match self.bias {
            BiasDriver::Zero => None,
            _ => Some(self.current_bias()),
        };
        Ok(RunRecord {
            family: self.state.measure.family().as_ref().clone(),
            final_point: self.state.x.coords().to_vec(),
            final_histogram: self.state.measure.normalized_histogram(),
            final_bias,
            checkpoints,
            admissibility_checks: self.checks,
            worst_admissibility_violation: self.worst_violation,
            metric_terms,
            config: self.config,
        })
    }
}

impl RunRecord {
    /// One row per checkpoint: `step,t,theta,d_to_target,f1..fN`. Time
    /// columns use the integrator clock of the variant.
    pub fn write_checkpoints_csv(&self, path: &std::path::Path) -> Result<()> {
        let n = self.family.len();
        let mut out = String::from("step,t,theta,d_to_target");
        for i in 1..=n {
            out.push_str(&format!(",f{i}"));
        }
        out.push('\n');
        for c in &self.checkpoints {
            out.push_str(&format!("{},{:.6},{:.12e},", c.step, c.time, c.theta));
            if let Some(d) = c.d_to_target {
                out.push_str(&format!("{d:.12e}"));
            }
            for v in &c.moments {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        crate::output::write_file(path, &out)
    }
}

/// Run one simulation from `config` and record the requested checkpoints.
pub fn run_simulation(config: &SimulationConfig, setup: &RunSetup<'_>, checkpoint_times: &[f64]) -> Result<RunRecord> {
    let sim = Simulation::new(config.clone(), setup)?;
    sim.run(checkpoint_times, setup.target.as_deref(), setup.metric_terms)
}

/// Checkpoint times: `count` equally spaced times up to `total` plus a
/// geometric ladder with `per_e_fold` points per e-fold from `start` on.
pub fn checkpoint_schedule(total: f64, count: usize, start: f64, per_e_fold: usize) -> Vec<f64> {
    let mut times: Vec<f64> = (1..=count).map(|i| total * i as f64 / count as f64).collect();
    if per_e_fold > 0 && start > 0.0 {
        let mut k = 0;
        loop {
            let t = start * (k as f64 / per_e_fold as f64).exp();
            if t >= total {
                break;
            }
            times.push(t);
            k += 1;
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    times
}

//! Path generation: driving noise with the correct relative-motion
//! covariance, adaptive tamed Euler integration of the one-δ and many-δ
//! SDEs, contact detection with hysteresis, and the auxiliary 1D diffusions
//! (the radial one-δ motion and Bessel processes of real dimension).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    classify_state, drift_particles_clamped_into, Configuration, Edge, ModelParams, StateClass,
};
use crate::specfun;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Numerical controls for the integrators.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    /// time step cap
    pub dt_max: f64,
    /// time step floor
    pub dt_min: f64,
    /// contact threshold δ_c: a positively-weighted pair crossing this
    /// relative radius downward is a recorded contact event
    pub contact_threshold: f64,
    /// radius floor ρ_f: K-function arguments are evaluated no closer to
    /// the singularity than this relative radius
    pub radius_floor: f64,
    /// max |drift|·dt per step, as a fraction of the smallest pair radius
    pub taming_cap: f64,
    /// time horizon
    pub t_max: f64,
    /// contact-ladder budget; hitting it sets the `absorbed` flag
    pub max_contacts: usize,
    /// multiplier on the Gaussian increments; 0 gives the deterministic
    /// drift flow (testing knob)
    pub noise_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_max: 1e-3,
            dt_min: 1e-9,
            contact_threshold: 1e-2,
            radius_floor: 1e-4,
            taming_cap: 0.5,
            t_max: 10.0,
            max_contacts: 16,
            noise_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::InvalidParam(format!(
                "need 0 < dt_min <= dt_max, got {} and {}",
                self.dt_min, self.dt_max
            )));
        }
        if !(self.radius_floor > 0.0 && self.radius_floor < self.contact_threshold) {
            return Err(Error::InvalidParam(format!(
                "need 0 < radius_floor < contact_threshold, got {} and {}",
                self.radius_floor, self.contact_threshold
            )));
        }
        if !(self.taming_cap > 0.0 && self.taming_cap < 1.0) {
            return Err(Error::InvalidParam("taming_cap must lie in (0,1)".into()));
        }
        if !(self.t_max > 0.0) || self.noise_scale < 0.0 {
            return Err(Error::InvalidParam("bad t_max or noise_scale".into()));
        }
        Ok(())
    }
}

/// A recorded contact-creation event.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContactEvent {
    pub time: f64,
    pub edge: Edge,
    /// separation at the step before the downward crossing
    pub pre_radius: f64,
}

/// A fully recorded path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    /// strictly increasing grid, len = steps + 1
    pub times: Vec<f64>,
    /// configuration per grid point
    pub states: Vec<Configuration>,
    /// per-step per-particle Brownian increments as applied
    pub noise: Vec<Vec<Complex64>>,
    pub contacts: Vec<ContactEvent>,
    /// contact-ladder budget exhausted (numerical stand-in for absorption)
    pub absorbed: bool,
}

impl PathRecord {
    pub fn steps(&self) -> usize {
        self.noise.len()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap() - self.times[0]
    }

    /// (ΔW^{j'} - ΔW^j)/√2 for step k.
    pub fn relative_noise(&self, k: usize, e: Edge) -> Complex64 {
        derive_relative_noise(&self.noise[k], e)
    }

    /// Left-endpoint radial projection dB^j for step k.
    pub fn b_increment(&self, k: usize, e: Edge) -> f64 {
        let sep = self.states[k].separation(e);
        radial_projection(sep, self.relative_noise(k, e))
    }

    pub fn radius(&self, k: usize, e: Edge) -> f64 {
        self.states[k].radius(e)
    }

    /// Prefix of the path up to grid index `k` inclusive.
    pub fn truncated(&self, k: usize) -> PathRecord {
        let k = k.min(self.steps());
        PathRecord {
            times: self.times[..=k].to_vec(),
            states: self.states[..=k].to_vec(),
            noise: self.noise[..k].to_vec(),
            contacts: self
                .contacts
                .iter()
                .copied()
                .filter(|c| c.time <= self.times[k])
                .collect(),
            absorbed: false,
        }
    }

    /// Index of the first grid point at or past the first contact event,
    /// or None if the path stays contact-free.
    pub fn first_contact_index(&self) -> Option<usize> {
        let t = self.contacts.first()?.time;
        Some(self.times.partition_point(|s| *s < t))
    }
}

/// Relative driving noise of an edge from per-particle increments.
pub fn derive_relative_noise(increments: &[Complex64], e: Edge) -> Complex64 {
    (increments[e.upper - 1] - increments[e.lower - 1]) / SQRT_2
}

/// dB^j: the radial (Itô, left-endpoint) projection of a relative noise
/// increment onto the separation direction.
pub fn radial_noise_increment(separation: Complex64, relative_increment: Complex64) -> Result<f64> {
    if separation.norm() == 0.0 {
        return Err(Error::Domain("radial projection needs a nonzero separation".into()));
    }
    Ok(radial_projection(separation, relative_increment))
}

fn radial_projection(separation: Complex64, relative_increment: Complex64) -> f64 {
    let r = separation.norm();
    if r == 0.0 {
        return 0.0;
    }
    (separation.conj() * relative_increment).re / r
}

/// One adaptive tamed Euler step of the many-δ SDE.
pub struct StepOutcome {
    pub config: Configuration,
    pub dt: f64,
    /// Brownian increments applied (already scaled by √dt and noise_scale)
    pub noise: Vec<Complex64>,
    /// drift actually applied, after taming
    pub drift: Vec<Complex64>,
}

/// Chooses dt from the smallest positively-weighted pair radius
/// (dt ∝ radius², floored/capped), evaluates the drift with the radius
/// floor, tames it so |b|·dt stays below `taming_cap`· that radius, and
/// applies unit Gaussian draws scaled to the step.
pub fn step_many_delta(
    config: &Configuration,
    params: &ModelParams,
    sim: &SimConfig,
    unit_draws: &[Complex64],
) -> Result<StepOutcome> {
    let n = params.n();
    debug_assert_eq!(unit_draws.len(), n);
    let mut drift = vec![Complex64::new(0.0, 0.0); n];
    let min_radius =
        drift_particles_clamped_into(config, params, sim.radius_floor, &mut drift)?;
    let r_eff = min_radius.max(sim.radius_floor);
    let dt = (sim.dt_max * (r_eff * r_eff).min(1.0)).clamp(sim.dt_min, sim.dt_max);

    let b_max = drift.iter().map(|b| b.norm()).fold(0.0, f64::max);
    if b_max * dt > sim.taming_cap * r_eff {
        let factor = sim.taming_cap * r_eff / (b_max * dt);
        for b in drift.iter_mut() {
            *b *= factor;
        }
    }

    let sqrt_dt = dt.sqrt();
    let mut noise = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for j in 0..n {
        let dw = unit_draws[j] * (sqrt_dt * sim.noise_scale);
        positions.push(config.positions[j] + drift[j] * dt + dw);
        noise.push(dw);
    }
    if positions.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalBlowup {
            time: f64::NAN,
            detail: format!("non-finite position after step (dt = {dt})"),
        });
    }
    Ok(StepOutcome { config: Configuration { positions }, dt, noise, drift })
}

fn draw_units<R: Rng + ?Sized>(rng: &mut R, n: usize, buf: &mut Vec<Complex64>) {
    buf.clear();
    for _ in 0..n {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        buf.push(Complex64::new(re, im));
    }
}

/// Contact bookkeeping: an edge triggers when it crosses δ_c downward while
/// not already inside a contact episode; the episode ends when the radius
/// exceeds 2δ_c (hysteresis against chattering).
struct ContactTracker {
    watched: Vec<(Edge, bool)>,
    threshold: f64,
}

impl ContactTracker {
    fn new(params: &ModelParams, config: &Configuration, threshold: f64) -> Self {
        let watched = params
            .positive_edges()
            .into_iter()
            .map(|e| (e, config.radius(e) <= threshold))
            .collect();
        ContactTracker { watched, threshold }
    }

    fn in_contact_count(&self) -> usize {
        self.watched.iter().filter(|(_, armed)| *armed).count()
    }

    fn update(
        &mut self,
        prev: &Configuration,
        next: &Configuration,
        time: f64,
        events: &mut Vec<ContactEvent>,
    ) {
        for (e, armed) in self.watched.iter_mut() {
            let r_new = next.radius(*e);
            if *armed {
                if r_new > 2.0 * self.threshold {
                    *armed = false;
                }
            } else if r_new <= self.threshold {
                let r_old = prev.radius(*e);
                events.push(ContactEvent { time, edge: *e, pre_radius: r_old });
                *armed = true;
            }
        }
    }
}

/// Integrate the many-δ SDE from an eligible initial condition, recording
/// the full path and the contact-creation ladder.
pub fn simulate_many_delta<R: Rng + ?Sized>(
    z0: &Configuration,
    params: &ModelParams,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    sim.validate()?;
    let class = classify_state(z0, params, sim.radius_floor);
    if !class.is_eligible() {
        return Err(Error::Precondition(format!(
            "initial condition has multiple positively-weighted contacts ({class:?})"
        )));
    }
    let mut tracker = ContactTracker::new(params, z0, sim.contact_threshold);
    if tracker.in_contact_count() > 1 {
        return Err(Error::Precondition(
            "two positively-weighted pairs start inside the contact threshold".into(),
        ));
    }

    let n = params.n();
    let mut record = PathRecord {
        times: vec![0.0],
        states: vec![z0.clone()],
        noise: Vec::new(),
        contacts: Vec::new(),
        absorbed: false,
    };
    let mut draws = Vec::with_capacity(n);
    let mut t = 0.0;
    while t < sim.t_max && record.contacts.len() < sim.max_contacts {
        draw_units(rng, n, &mut draws);
        let prev = record.states.last().unwrap().clone();
        let out = step_many_delta(&prev, params, sim, &draws).map_err(|e| match e {
            Error::NumericalBlowup { detail, .. } => Error::NumericalBlowup { time: t, detail },
            other => other,
        })?;
        t += out.dt;
        tracker.update(&prev, &out.config, t, &mut record.contacts);
        record.times.push(t);
        record.states.push(out.config);
        record.noise.push(out.noise);
    }
    record.absorbed = record.contacts.len() >= sim.max_contacts;
    Ok(record)
}

/// One-δ motion: the same integrator with the weight vector replaced by the
/// indicator of `active_edge`. Only the active pair feels a drift; every
/// other particle is plain Brownian.
pub fn simulate_one_delta<R: Rng + ?Sized>(
    z0: &Configuration,
    params: &ModelParams,
    active_edge: Edge,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord> {
    if params.weight(active_edge) <= 0.0 {
        return Err(Error::Precondition(format!(
            "active edge {active_edge} must carry positive weight"
        )));
    }
    let one = params.one_delta_variant(active_edge);
    simulate_many_delta(z0, &one, sim, rng)
}

/// A 1D radial path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialPath {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// per-step driving increments dB as applied
    pub noise: Vec<f64>,
    /// times the reflection at the radius floor triggered
    pub floor_hits: u64,
}

impl RadialPath {
    pub fn steps(&self) -> usize {
        self.noise.len()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

/// Drift of the radial one-δ motion: 1/(2r) - K̂1(√(2β)r)/(r K0(√(2β)r)).
pub fn radial_one_delta_drift(r: f64, beta: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::Domain("radial drift needs r > 0".into()));
    }
    Ok((0.5 - specfun::ratio_khat1_k0((2.0 * beta).sqrt() * r)?) / r)
}

/// Simulate |Z^i| under the one-δ law: adaptive dt ∝ r², drift evaluated at
/// radius max(r, ρ_f), reflection (set to ρ_f) on downward crossings.
pub fn simulate_radial_one_delta<R: Rng + ?Sized>(
    r0: f64,
    beta: f64,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<RadialPath> {
    sim.validate()?;
    if r0 < 0.0 || !r0.is_finite() {
        return Err(Error::Precondition(format!("r0 must be nonnegative, got {r0}")));
    }
    let mut path = RadialPath {
        times: vec![0.0],
        radii: vec![r0.max(sim.radius_floor)],
        noise: Vec::new(),
        floor_hits: 0,
    };
    let mut t = 0.0;
    let mut r = r0.max(sim.radius_floor);
    while t < sim.t_max {
        let r_eff = r.max(sim.radius_floor);
        let dt = (sim.dt_max * (r_eff * r_eff).min(1.0)).clamp(sim.dt_min, sim.dt_max);
        let mut b = radial_one_delta_drift(r_eff, beta)?;
        if b.abs() * dt > sim.taming_cap * r_eff {
            b = b.signum() * sim.taming_cap * r_eff / dt;
        }
        let xi: f64 = rng.sample(StandardNormal);
        let db = dt.sqrt() * sim.noise_scale * xi;
        let mut r_new = r + b * dt + db;
        if !r_new.is_finite() {
            return Err(Error::NumericalBlowup { time: t, detail: "radial step".into() });
        }
        if r_new < sim.radius_floor {
            r_new = sim.radius_floor;
            path.floor_hits += 1;
        }
        t += dt;
        r = r_new;
        path.times.push(t);
        path.radii.push(r);
        path.noise.push(db);
    }
    Ok(path)
}

/// Bessel process of real dimension d ≥ 2 driven by *supplied* increments
/// (dℓ, dB): r_{k+1} = r_k + (d-1)/(2 r_k) dℓ + dB. Returns the path and
/// the number of times the floor clamp triggered (discretization artifacts
/// only; the continuous process stays positive for d ≥ 2).
pub fn simulate_bessel(
    dimension: f64,
    r_start: f64,
    increments: &[(f64, f64)],
    radius_floor: f64,
) -> Result<(Vec<f64>, u64)> {
    if dimension < 2.0 {
        return Err(Error::Precondition(format!(
            "comparison Bessel needs dimension >= 2, got {dimension}"
        )));
    }
    if r_start <= 0.0 {
        return Err(Error::Precondition("r_start must be positive".into()));
    }
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(r_start);
    let mut r = r_start;
    let mut clamps = 0;
    for (dl, db) in increments {
        let r_eff = r.max(radius_floor);
        r += (dimension - 1.0) / (2.0 * r_eff) * dl + db;
        if r < radius_floor {
            r = radius_floor;
            clamps += 1;
        }
        out.push(r);
    }
    Ok((out, clamps))
}

/// Bessel path on its own uniform grid with rng-driven noise (moment tests
/// and self-comparisons).
pub fn simulate_bessel_rng<R: Rng + ?Sized>(
    dimension: f64,
    r_start: f64,
    sim: &SimConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    let steps = (sim.t_max / sim.dt_max).ceil() as usize;
    let mut increments = Vec::with_capacity(steps);
    for _ in 0..steps {
        let xi: f64 = rng.sample(StandardNormal);
        increments.push((sim.dt_max, sim.dt_max.sqrt() * sim.noise_scale * xi));
    }
    let (path, _) = simulate_bessel(dimension, r_start, &increments, sim.radius_floor)?;
    Ok((path, increments))
}

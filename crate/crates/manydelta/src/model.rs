//! Domain model: interaction edges, coupling/weight parameters, particle
//! configurations, state classification, and the deterministic functionals
//! of a configuration (K-sums, drifts, Φ terms, σ dot products).

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun;

/// Distances below this are treated as exact contact: double precision
/// cannot separate the drift singularity from rounding there.
pub const DISTANCE_FLOOR: f64 = 1e-300;

/// An interaction pair (j', j) with 1 ≤ j < j' ≤ N, ordered canonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    /// j' (1-based particle index, the larger one)
    pub upper: usize,
    /// j (1-based particle index, the smaller one)
    pub lower: usize,
}

impl Edge {
    pub fn new(upper: usize, lower: usize) -> Result<Self> {
        if lower == 0 || lower >= upper {
            return Err(Error::InvalidParam(format!(
                "edge requires 1 <= lower < upper, got ({upper},{lower})"
            )));
        }
        Ok(Edge { upper, lower })
    }

    /// The canonical pair for unordered indices (j ∨∧ k).
    pub fn between(a: usize, b: usize) -> Result<Self> {
        Edge::new(a.max(b), a.min(b))
    }

    /// Canonical index: lexicographic by (upper, lower), a bijection with
    /// {0, .., N(N-1)/2 - 1}.
    pub fn index(&self) -> usize {
        (self.upper - 1) * (self.upper - 2) / 2 + (self.lower - 1)
    }

    pub fn touches(&self, particle: usize) -> bool {
        self.upper == particle || self.lower == particle
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.upper, self.lower)
    }
}

/// All edges of the N-particle system in canonical order.
pub fn edges(n: usize) -> Vec<Edge> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for upper in 2..=n {
        for lower in 1..upper {
            out.push(Edge { upper, lower });
        }
    }
    out
}

pub fn edge_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// σ(a)·σ(b) for the signed incidence vectors σ(e) = e_upper - e_lower.
/// 2 for identical edges, ±1 for a shared vertex, 0 for disjoint edges.
pub fn sigma_dot(a: Edge, b: Edge) -> i32 {
    let mut dot = 0;
    if a.upper == b.upper {
        dot += 1;
    }
    if a.lower == b.lower {
        dot += 1;
    }
    if a.upper == b.lower {
        dot -= 1;
    }
    if a.lower == b.upper {
        dot -= 1;
    }
    dot
}

/// System parameters: particle count, per-edge couplings β > 0 and
/// nonnegative weights w with at least two positive entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    n: usize,
    beta: Vec<f64>,
    weight: Vec<f64>,
}

impl ModelParams {
    pub fn new(n: usize, beta: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParam(format!("need at least 3 particles, got {n}")));
        }
        let m = edge_count(n);
        if beta.len() != m || weight.len() != m {
            return Err(Error::InvalidParam(format!(
                "expected {m} per-edge entries for n = {n}, got {} beta and {} weight",
                beta.len(),
                weight.len()
            )));
        }
        if !beta.iter().all(|b| b.is_finite() && *b > 0.0) {
            return Err(Error::InvalidParam("every beta must be finite and positive".into()));
        }
        if !weight.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidParam("every weight must be finite and nonnegative".into()));
        }
        if weight.iter().filter(|w| **w > 0.0).count() < 2 {
            return Err(Error::InvalidParam(
                "at least two edges must carry positive weight".into(),
            ));
        }
        Ok(ModelParams { n, beta, weight })
    }

    /// Uniform couplings and weights on every edge.
    pub fn uniform(n: usize, beta: f64) -> Result<Self> {
        let m = edge_count(n);
        ModelParams::new(n, vec![beta; m], vec![1.0; m])
    }

    /// The same system with the weight vector replaced by the indicator of
    /// `active` — the drift support of the one-δ motion. Bypasses the
    /// two-positive-weights requirement on purpose.
    pub(crate) fn one_delta_variant(&self, active: Edge) -> ModelParams {
        let mut weight = vec![0.0; self.weight.len()];
        weight[active.index()] = 1.0;
        ModelParams { n: self.n, beta: self.beta.clone(), weight }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self, e: Edge) -> f64 {
        self.beta[e.index()]
    }

    pub fn weight(&self, e: Edge) -> f64 {
        self.weight[e.index()]
    }

    pub fn edges(&self) -> Vec<Edge> {
        edges(self.n)
    }

    /// Edges with positive weight, canonical order.
    pub fn positive_edges(&self) -> Vec<Edge> {
        edges(self.n).into_iter().filter(|e| self.weight(*e) > 0.0).collect()
    }

    /// True iff β is constant across the positively-weighted edges.
    pub fn is_homogeneous(&self) -> bool {
        let mut reference = None;
        for e in edges(self.n) {
            if self.weight(e) > 0.0 {
                match reference {
                    None => reference = Some(self.beta(e)),
                    Some(b) => {
                        if self.beta(e) != b {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// Positions of the N particles in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub positions: Vec<Complex64>,
}

impl Configuration {
    pub fn new(positions: Vec<Complex64>) -> Result<Self> {
        if positions.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParam("positions must be finite".into()));
        }
        Ok(Configuration { positions })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Relative separation z^j = (z^{j'} - z^j)/√2 of an edge.
    pub fn separation(&self, e: Edge) -> Complex64 {
        (self.positions[e.upper - 1] - self.positions[e.lower - 1]) / std::f64::consts::SQRT_2
    }

    /// |z^j| for an edge.
    pub fn radius(&self, e: Edge) -> f64 {
        self.separation(e).norm()
    }

    /// Smallest |z^j| over the positively-weighted edges.
    pub fn min_weighted_radius(&self, params: &ModelParams) -> f64 {
        edges(params.n())
            .into_iter()
            .filter(|e| params.weight(*e) > 0.0)
            .map(|e| self.radius(e))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Contact classification of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    /// Every positively-weighted separation is nonzero.
    AllSeparated,
    /// Exactly one positively-weighted pair at contact.
    SingleContact(Edge),
    /// Two or more positively-weighted pairs at contact; not an eligible
    /// initial condition.
    MultiContact,
}

impl StateClass {
    pub fn is_eligible(&self) -> bool {
        !matches!(self, StateClass::MultiContact)
    }
}

/// Classify with |z^j| <= contact_tol counted as contact; exact-zero
/// classification for contact_tol = 0.
pub fn classify_state(config: &Configuration, params: &ModelParams, contact_tol: f64) -> StateClass {
    let mut contact = None;
    let mut count = 0;
    for e in edges(params.n()) {
        if params.weight(e) > 0.0 && config.radius(e) <= contact_tol {
            count += 1;
            contact = Some(e);
        }
    }
    match count {
        0 => StateClass::AllSeparated,
        1 => StateClass::SingleContact(contact.unwrap()),
        _ => StateClass::MultiContact,
    }
}

/// K0-sum Σ_j w_j K0(√(2β_j)|z^j|) over the positively-weighted edges.
pub fn weighted_k0_sum(config: &Configuration, params: &ModelParams) -> Result<f64> {
    weighted_k0_sum_clamped(config, params, 0.0)
}

/// Same with relative radii floored at `radius_floor` (0 disables).
pub fn weighted_k0_sum_clamped(
    config: &Configuration,
    params: &ModelParams,
    radius_floor: f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 {
            continue;
        }
        let r = config.radius(e).max(radius_floor);
        if r < DISTANCE_FLOOR {
            return Err(Error::singular_edge(e, "weighted_k0_sum"));
        }
        sum += w * specfun::k0((2.0 * params.beta(e)).sqrt() * r)?;
    }
    Ok(sum)
}

/// Per-particle drift of the many-δ SDE:
///   b_j = -Σ_{k≠j} w_{jk} √β_{jk} K1(√β_{jk}|z^j - z^k|)(z^j - z^k)
///         / (K-sum · |z^j - z^k|).
/// Pairwise antisymmetric accumulation keeps Σ_j b_j at exactly zero.
pub fn drift_particles(config: &Configuration, params: &ModelParams) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); params.n()];
    drift_particles_clamped_into(config, params, 0.0, &mut out)?;
    Ok(out)
}

/// Drift with relative radii floored at `radius_floor` for the K-function
/// arguments (directions keep the true separation). Returns the smallest
/// positively-weighted relative radius seen (unclamped), for step control.
pub fn drift_particles_clamped_into(
    config: &Configuration,
    params: &ModelParams,
    radius_floor: f64,
    out: &mut [Complex64],
) -> Result<f64> {
    debug_assert_eq!(out.len(), params.n());
    for b in out.iter_mut() {
        *b = Complex64::new(0.0, 0.0);
    }
    let ksum = weighted_k0_sum_clamped(config, params, radius_floor)?;
    let mut min_radius = f64::INFINITY;
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 {
            continue;
        }
        let sep = config.positions[e.upper - 1] - config.positions[e.lower - 1];
        let d = sep.norm();
        let rel = d / std::f64::consts::SQRT_2;
        min_radius = min_radius.min(rel);
        if d < DISTANCE_FLOOR {
            return Err(Error::singular_edge(e, "drift_particles"));
        }
        let d_eff = d.max(radius_floor * std::f64::consts::SQRT_2);
        let sb = params.beta(e).sqrt();
        let (_, k1v) = specfun::k0k1(sb * d_eff);
        // term for particle `upper`; `lower` receives the negative
        let term = sep * (w * sb * k1v / (ksum * d_eff));
        out[e.upper - 1] -= term;
        out[e.lower - 1] += term;
    }
    if out.iter().any(|b| !b.re.is_finite() || !b.im.is_finite()) {
        return Err(Error::NumericalBlowup {
            time: f64::NAN,
            detail: "non-finite drift".into(),
        });
    }
    Ok(min_radius)
}

/// Per-edge drift of the relative motions:
///   b^j = -Σ_k (σ(j)·σ(k)/2) (w_k K̂1(√(2β_k)|z^k|)/K-sum) z^k/|z^k|².
pub fn drift_relative(config: &Configuration, params: &ModelParams) -> Result<Vec<Complex64>> {
    let all = edges(params.n());
    let ksum = weighted_k0_sum(config, params)?;
    // K̂1 contribution of every positively-weighted edge, reused across rows
    let mut pulls = vec![Complex64::new(0.0, 0.0); all.len()];
    for k in &all {
        let w = params.weight(*k);
        if w == 0.0 {
            continue;
        }
        let sep = config.separation(*k);
        let r = sep.norm();
        if r < DISTANCE_FLOOR {
            return Err(Error::singular_edge(*k, "drift_relative"));
        }
        let khat1 = specfun::khat(1, (2.0 * params.beta(*k)).sqrt() * r)?;
        pulls[k.index()] = sep * (w * khat1 / (ksum * r * r));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); all.len()];
    for j in &all {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in &all {
            if params.weight(*k) == 0.0 {
                continue;
            }
            let s = sigma_dot(*j, *k) as f64;
            if s != 0.0 {
                acc -= pulls[k.index()] * (0.5 * s);
            }
        }
        out[j.index()] = acc;
    }
    Ok(out)
}

/// Φ^{β,w,j}_S: the correction entering the drift of Σ_{j∈S}|z^j|.
/// In-subset terms carry w_j K̂1^{β,j}, out-of-subset terms w_k K̂1^{β,k}
/// with the squared radius ratio.
pub fn phi_term(
    subset: &[Edge],
    edge_j: Edge,
    config: &Configuration,
    params: &ModelParams,
) -> Result<f64> {
    if !subset.contains(&edge_j) {
        return Err(Error::Precondition(format!("edge {edge_j} not in subset")));
    }
    let ksum = weighted_k0_sum(config, params)?;
    let sep_j = config.separation(edge_j);
    let r_j = sep_j.norm();
    if r_j < DISTANCE_FLOOR {
        return Err(Error::singular_edge(edge_j, "phi_term"));
    }
    let khat1_j = specfun::khat(1, (2.0 * params.beta(edge_j)).sqrt() * r_j)?;

    let mut phi = 0.0;
    for k in edges(params.n()) {
        let sep_k = config.separation(k);
        let r_k = sep_k.norm();
        if r_k < DISTANCE_FLOOR {
            return Err(Error::singular_edge(k, "phi_term"));
        }
        let s = sigma_dot(edge_j, k) as f64;
        if s == 0.0 {
            continue;
        }
        // Re(z^k / z^j) = Re(z^k conj(z^j)) / |z^j|²
        let re_ratio = (sep_k * sep_j.conj()).re / (r_j * r_j);
        if subset.contains(&k) {
            phi += (r_j / r_k) * re_ratio * s * params.weight(edge_j) * khat1_j / ksum;
        } else {
            let w_k = params.weight(k);
            if w_k == 0.0 {
                continue;
            }
            let khat1_k = specfun::khat(1, (2.0 * params.beta(k)).sqrt() * r_k)?;
            phi += (r_j * r_j) / (r_k * r_k) * re_ratio * s * w_k * khat1_k / ksum;
        }
    }
    Ok(phi)
}

/// Structural bound |Φ| ≤ 2#S w_j K̂1^{β,j}/K-sum
///                       + 2(Σ_{k∉S} w_k K̂1^{β,k}/|z^k|)|z^j|/K-sum.
pub fn phi_bound(
    subset: &[Edge],
    edge_j: Edge,
    config: &Configuration,
    params: &ModelParams,
) -> Result<f64> {
    let ksum = weighted_k0_sum(config, params)?;
    let r_j = config.radius(edge_j);
    let khat1_j = specfun::khat(1, (2.0 * params.beta(edge_j)).sqrt() * r_j)?;
    let mut out_terms = 0.0;
    for k in edges(params.n()) {
        if subset.contains(&k) {
            continue;
        }
        let w_k = params.weight(k);
        if w_k == 0.0 {
            continue;
        }
        let r_k = config.radius(k);
        out_terms += w_k * specfun::khat(1, (2.0 * params.beta(k)).sqrt() * r_k)? / r_k;
    }
    Ok(2.0 * subset.len() as f64 * params.weight(edge_j) * khat1_j / ksum
        + 2.0 * out_terms * r_j / ksum)
}

/// JSON description of a system: couplings and weights are keyed by
/// "j'-j" (e.g. "3-1"); every β must be present, omitted weights are 0.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub n: usize,
    pub beta: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    pub w: std::collections::BTreeMap<String, f64>,
    pub z0: Vec<[f64; 2]>,
}

fn parse_edge_key(key: &str, n: usize) -> Result<Edge> {
    let parts: Vec<&str> = key.split('-').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("edge key '{key}' is not of the form \"j'-j\"")));
    }
    let upper: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("edge key '{key}': bad index '{}'", parts[0])))?;
    let lower: usize = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("edge key '{key}': bad index '{}'", parts[1])))?;
    if upper > n {
        return Err(Error::Config(format!("edge key '{key}' exceeds n = {n}")));
    }
    Edge::new(upper, lower).map_err(|e| Error::Config(format!("edge key '{key}': {e}")))
}

impl SystemJson {
    pub fn build(&self) -> Result<(ModelParams, Configuration)> {
        let m = edge_count(self.n);
        let mut beta = vec![f64::NAN; m];
        for (key, value) in &self.beta {
            beta[parse_edge_key(key, self.n)?.index()] = *value;
        }
        if beta.iter().any(|b| b.is_nan()) {
            return Err(Error::Config(format!(
                "beta must list all {m} edges for n = {}",
                self.n
            )));
        }
        let mut weight = vec![0.0; m];
        for (key, value) in &self.w {
            weight[parse_edge_key(key, self.n)?.index()] = *value;
        }
        if self.z0.len() != self.n {
            return Err(Error::Config(format!(
                "z0 must list {} positions, got {}",
                self.n,
                self.z0.len()
            )));
        }
        let positions = self.z0.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        let params = ModelParams::new(self.n, beta, weight)?;
        let config = Configuration::new(positions)?;
        Ok((params, config))
    }
}

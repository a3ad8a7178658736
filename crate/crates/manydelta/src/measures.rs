//! Change-of-measure functionals along paths (Ã, Å, ℰ and the martingale
//! parts N̊, Ñ), pathwise verification of the semimartingale identities,
//! and the cross-law Monte Carlo estimators linking the Brownian, one-δ
//! and many-δ descriptions.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localtime::{kappa_eps, KernelParams};
use crate::mc::{run_estimator, run_estimator_multi, EstimatorResult};
use crate::model::{
    classify_state, edges, sigma_dot, Configuration, Edge, ModelParams, StateClass,
};
use crate::sde::{simulate_one_delta, PathRecord, SimConfig};
use crate::specfun;

const TINY_RADIUS: f64 = 1e-300;

/// All pathwise weight functionals evaluated at the path's endpoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightFunctional {
    /// Ã: the Riemann part Σ_j ∫ β_j w_j K0^j/K0^w ds − β_i t
    pub a_tilde: f64,
    /// Å: the local-time part via the κ_ε occupation surrogate
    pub a_ring: f64,
    /// ℰ: the normalized change-of-measure weight
    pub exp_functional: f64,
    /// N̊: discretized stochastic integral against dB^i
    pub n_ring: f64,
    /// Ñ: discretized stochastic integrals against dB^j, j ≠ i
    pub n_tilde: f64,
    /// ⟨N, N⟩ from summed squared increments
    pub qv_n: f64,
}

/// Per-state cache of the K0 terms.
struct KTerms {
    k0: Vec<f64>,
    ksum: f64,
}

fn k_terms(state: &Configuration, params: &ModelParams) -> Result<KTerms> {
    let all = edges(params.n());
    let mut k0 = vec![0.0; all.len()];
    let mut ksum = 0.0;
    for e in &all {
        let w = params.weight(*e);
        if w == 0.0 {
            continue;
        }
        let r = state.radius(*e).max(TINY_RADIUS);
        let v = specfun::k0((2.0 * params.beta(*e)).sqrt() * r)?;
        k0[e.index()] = v;
        ksum += w * v;
    }
    Ok(KTerms { k0, ksum })
}

/// log[K0^w/(w_i K0^i)] with the contact convention: the ratio is 1 (log 0)
/// when the i-pair sits at contact (radius ≤ contact_radius) while every
/// other positively-weighted pair is separated.
pub fn log_k_ratio(
    state: &Configuration,
    params: &ModelParams,
    i: Edge,
    contact_radius: f64,
) -> Result<f64> {
    let r_i = state.radius(i);
    if r_i <= contact_radius {
        for e in params.positive_edges() {
            if e != i && state.radius(e) <= contact_radius {
                return Err(Error::SingularState(format!(
                    "edges {i} and {e} both at contact: the K-ratio has no limit"
                )));
            }
        }
        return Ok(0.0);
    }
    let kt = k_terms(state, params)?;
    Ok((kt.ksum / (params.weight(i) * kt.k0[i.index()])).ln())
}

/// Ã integrand in centered form Σ_j (β_j − β_i) w_j K0^j/K0^w: identically
/// zero (to the bit) for homogeneous couplings.
fn a_tilde_integrand(kt: &KTerms, params: &ModelParams, i: Edge) -> f64 {
    let beta_i = params.beta(i);
    let mut acc = 0.0;
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 {
            continue;
        }
        acc += (params.beta(e) - beta_i) * w * kt.k0[e.index()] / kt.ksum;
    }
    acc
}

fn a_ring_integrand(
    state: &Configuration,
    kt: &KTerms,
    params: &ModelParams,
    i: Edge,
    kp: KernelParams,
) -> f64 {
    let w_i = params.weight(i);
    let mut others = 0.0;
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 || e == i {
            continue;
        }
        others += (w / w_i) * kt.k0[e.index()];
    }
    others * kappa_eps(state.radius(i), kp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endpoint {
    /// left-endpoint (Itô) evaluation of the stochastic integrands
    Ito,
    /// midpoint evaluation — deliberately wrong, for the Stratonovich-drift
    /// detection test
    Midpoint,
}

fn n_increment_coeffs(
    state: &Configuration,
    kt: &KTerms,
    params: &ModelParams,
    i: Edge,
) -> Result<(f64, Vec<(Edge, f64)>)> {
    let r_i = state.radius(i).max(TINY_RADIUS);
    let khat_i = specfun::khat(1, (2.0 * params.beta(i)).sqrt() * r_i)?;
    let k0_i = kt.k0[i.index()];
    let w_i = params.weight(i);
    let ring = khat_i * (kt.ksum - w_i * k0_i) / (r_i * k0_i * kt.ksum);
    let mut tilde = Vec::new();
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 || e == i {
            continue;
        }
        let r = state.radius(e).max(TINY_RADIUS);
        let khat = specfun::khat(1, (2.0 * params.beta(e)).sqrt() * r)?;
        tilde.push((e, -w * khat / (r * kt.ksum)));
    }
    Ok((ring, tilde))
}

fn weight_functional_inner(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps: f64,
    contact_radius: f64,
    endpoint: Endpoint,
) -> Result<WeightFunctional> {
    if params.weight(i) <= 0.0 {
        return Err(Error::Precondition(format!("reference edge {i} needs positive weight")));
    }
    let kp = KernelParams::new(params.beta(i), eps)?;
    let mut kt_prev = k_terms(&path.states[0], params)?;
    let mut at_prev = a_tilde_integrand(&kt_prev, params, i);
    let mut ar_prev = a_ring_integrand(&path.states[0], &kt_prev, params, i, kp);

    let mut a_tilde = 0.0;
    let mut a_ring = 0.0;
    let mut n_ring = 0.0;
    let mut n_tilde = 0.0;
    let mut qv = 0.0;
    for k in 0..path.steps() {
        let dt = path.dt(k);
        let kt_next = k_terms(&path.states[k + 1], params)?;
        let at_next = a_tilde_integrand(&kt_next, params, i);
        let ar_next = a_ring_integrand(&path.states[k + 1], &kt_next, params, i, kp);
        a_tilde += 0.5 * (at_prev + at_next) * dt;
        a_ring += 0.5 * (ar_prev + ar_next) * dt;

        let (ring_c, tilde_c) = n_increment_coeffs(&path.states[k], &kt_prev, params, i)?;
        let (ring_c, tilde_c) = match endpoint {
            Endpoint::Ito => (ring_c, tilde_c),
            Endpoint::Midpoint => {
                let (r2, t2) = n_increment_coeffs(&path.states[k + 1], &kt_next, params, i)?;
                let mixed = tilde_c
                    .iter()
                    .zip(&t2)
                    .map(|((e, a), (_, b))| (*e, 0.5 * (a + b)))
                    .collect();
                (0.5 * (ring_c + r2), mixed)
            }
        };
        let mut dn = ring_c * path.b_increment(k, i);
        n_ring += ring_c * path.b_increment(k, i);
        for (e, c) in &tilde_c {
            let db = path.b_increment(k, *e);
            n_tilde += c * db;
            dn += c * db;
        }
        qv += dn * dn;

        kt_prev = kt_next;
        at_prev = at_next;
        ar_prev = ar_next;
    }

    let log0 = log_k_ratio(&path.states[0], params, i, contact_radius)?;
    let log_t = log_k_ratio(path.states.last().unwrap(), params, i, contact_radius)?;
    let exp_functional = (log_t - log0 - a_tilde - a_ring).exp();
    Ok(WeightFunctional { a_tilde, a_ring, exp_functional, n_ring, n_tilde, qv_n: qv })
}

/// Evaluate every weight functional along the path in one pass.
pub fn weight_functional(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps: f64,
    contact_radius: f64,
) -> Result<WeightFunctional> {
    weight_functional_inner(path, params, i, eps, contact_radius, Endpoint::Ito)
}

/// Ã at the path endpoint (trapezoidal).
pub fn a_tilde(path: &PathRecord, params: &ModelParams, i: Edge) -> Result<f64> {
    Ok(weight_functional(path, params, i, 1.0, 0.0)?.a_tilde)
}

/// Å via the κ_ε occupation surrogate (dL ≈ ½ κ_ε ds, the factor 2 of the
/// local-time display absorbed).
pub fn a_ring(path: &PathRecord, params: &ModelParams, i: Edge, eps: f64) -> Result<f64> {
    Ok(weight_functional(path, params, i, eps, 0.0)?.a_ring)
}

/// ℰ = [w_i K0^i(0)/K0^w(0)] e^{−Ã−Å} K0^w(t)/(w_i K0^i(t)), with the
/// contact convention of `log_k_ratio` at both endpoints.
pub fn exp_functional(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps: f64,
    contact_radius: f64,
) -> Result<f64> {
    Ok(weight_functional(path, params, i, eps, contact_radius)?.exp_functional)
}

/// Terminal residual of the log-ratio semimartingale identity:
/// |Δ log ratio − (Ã + Å + N − ½⟨N,N⟩)|.
pub fn rn_identity_residual(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps: f64,
    contact_radius: f64,
) -> Result<f64> {
    rn_identity_residual_inner(path, params, i, eps, contact_radius, Endpoint::Ito)
}

fn rn_identity_residual_inner(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps: f64,
    contact_radius: f64,
    endpoint: Endpoint,
) -> Result<f64> {
    let wf = weight_functional_inner(path, params, i, eps, contact_radius, endpoint)?;
    let lhs = log_k_ratio(path.states.last().unwrap(), params, i, contact_radius)?
        - log_k_ratio(&path.states[0], params, i, contact_radius)?;
    let rhs = wf.a_tilde + wf.a_ring + wf.n_ring + wf.n_tilde - 0.5 * wf.qv_n;
    Ok((lhs - rhs).abs())
}

// --- Itô-decomposition residuals ---------------------------------------------

/// G1(x)/(2x) evaluated at x = 2β(ε+R), plus companions, via the scaled
/// Macdonald functions.
struct GTerms {
    arg: f64,
    g0: f64,
    g1: f64,
}

fn g_terms(beta: f64, eps: f64, radius_sq: f64) -> Result<GTerms> {
    let arg = 2.0 * beta * (eps + radius_sq);
    Ok(GTerms { arg, g0: specfun::g_nu(0, arg)?, g1: specfun::g_nu(1, arg)? })
}

/// Drift ratio K̂1^{β,i}(s)/K0^{β,i}(s) at the true (unregularized) radius.
fn drift_ratio(state: &Configuration, params: &ModelParams, i: Edge) -> Result<f64> {
    let r = state.radius(i).max(TINY_RADIUS);
    specfun::ratio_khat1_k0((2.0 * params.beta(i)).sqrt() * r)
}

/// |F^i_ε(R_t) − F^i_ε(R_0) − Σ_{k=1..5} I(k)| for the one-δ (five-term)
/// Itô decomposition of log(w_i G0(2β_i(ε+R^i))). Riemann terms by
/// trapezoid, the stochastic term against the dB^i increments.
pub fn ito_residual_one_delta(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps_reg: f64,
) -> Result<f64> {
    if eps_reg <= 0.0 {
        return Err(Error::Precondition("regularization eps must be positive".into()));
    }
    let w_i = params.weight(i);
    let beta_i = params.beta(i);
    let tb = 2.0 * beta_i;
    let f_of = |state: &Configuration| -> Result<f64> {
        let r = state.radius(i);
        Ok((w_i * specfun::g_nu(0, tb * (eps_reg + r * r))?).ln())
    };

    // integrands of the four Riemann terms at one state
    let riemann = |state: &Configuration| -> Result<[f64; 4]> {
        let r2 = state.radius(i).powi(2);
        let gt = g_terms(beta_i, eps_reg, r2)?;
        let h = w_i * gt.g0;
        let base = gt.g1 / (2.0 * gt.arg);
        let i1 = -w_i * tb * base * 2.0 / h;
        let i3 = 0.5 * w_i * tb * tb * (2.0 * gt.g1 + gt.arg * gt.g0) / (4.0 * gt.arg * gt.arg)
            * 4.0 * r2
            / h;
        let i4 = -0.5 * w_i * w_i * tb * tb * gt.g1 * gt.g1 / (4.0 * gt.arg * gt.arg) * 4.0 * r2
            / (h * h);
        let i5 = w_i * tb * base * (2.0 / h) * drift_ratio(state, params, i)?;
        Ok([i1, i3, i4, i5])
    };

    let mut prev = riemann(&path.states[0])?;
    let mut total = 0.0;
    for k in 0..path.steps() {
        let dt = path.dt(k);
        let next = riemann(&path.states[k + 1])?;
        for (a, b) in prev.iter().zip(&next) {
            total += 0.5 * (a + b) * dt;
        }
        // I(2): left-endpoint stochastic term
        let state = &path.states[k];
        let r = state.radius(i);
        let gt = g_terms(beta_i, eps_reg, r * r)?;
        let h = w_i * gt.g0;
        total += -w_i * tb * (gt.g1 / (2.0 * gt.arg)) * (2.0 * r / h) * path.b_increment(k, i);
        prev = next;
    }
    Ok((f_of(path.states.last().unwrap())? - f_of(&path.states[0])? - total).abs())
}

/// |F^w_ε(R_t) − F^w_ε(R_0) − Σ_{k=1..9} I(k)| for the many-δ (nine-term)
/// decomposition of log Σ_j w_j G0(2β_j(ε_j+R^j)); the cross terms run
/// against the sampled bracket d⟨B^j,B^k⟩ = (σσ'/2)Re(z^j conj z^k)/(r_j r_k) dt.
pub fn ito_residual_many(
    path: &PathRecord,
    params: &ModelParams,
    i: Edge,
    eps_reg: &[f64],
) -> Result<f64> {
    let all = edges(params.n());
    if eps_reg.len() != all.len() || eps_reg.iter().any(|e| *e <= 0.0) {
        return Err(Error::Precondition(format!(
            "need {} positive regularization entries",
            all.len()
        )));
    }
    let beta_i = params.beta(i);
    let tb_i = 2.0 * beta_i;

    struct StateTerms {
        g: Vec<Option<GTerms>>,
        h: f64,
        r: Vec<f64>,
        sep: Vec<Complex64>,
    }
    let eval = |state: &Configuration| -> Result<StateTerms> {
        let mut g = Vec::with_capacity(all.len());
        let mut h = 0.0;
        let mut r = vec![0.0; all.len()];
        let mut sep = vec![Complex64::new(0.0, 0.0); all.len()];
        for e in &all {
            let idx = e.index();
            sep[idx] = state.separation(*e);
            r[idx] = sep[idx].norm();
            let w = params.weight(*e);
            if w == 0.0 {
                g.push(None);
                continue;
            }
            let gt = g_terms(params.beta(*e), eps_reg[idx], r[idx] * r[idx])?;
            h += w * gt.g0;
            g.push(Some(gt));
        }
        Ok(StateTerms { g, h, r, sep })
    };

    // all Riemann-type terms (I1, I3, I4, I5, I6, I7, I8, I9) at one state
    let riemann = |state: &Configuration, st: &StateTerms| -> Result<f64> {
        let mut acc = 0.0;
        let ratio_i = drift_ratio(state, params, i)?;
        let i_idx = i.index();
        for e in &all {
            let w = params.weight(*e);
            if w == 0.0 {
                continue;
            }
            let idx = e.index();
            let gt = st.g[idx].as_ref().unwrap();
            let tb = 2.0 * params.beta(*e);
            let base = gt.g1 / (2.0 * gt.arg);
            let r2 = st.r[idx] * st.r[idx];
            // I1
            acc += -w * tb * base * 2.0 / st.h;
            // I3
            acc += 0.5 * w * tb * tb * (2.0 * gt.g1 + gt.arg * gt.g0)
                / (4.0 * gt.arg * gt.arg)
                * 4.0
                * r2
                / st.h;
            // I4 (j ≠ i) and I5 (j = i) share the same display
            acc += -0.5 * w * w * tb * tb * gt.g1 * gt.g1 / (4.0 * gt.arg * gt.arg) * 4.0 * r2
                / (st.h * st.h);
            if *e != i {
                // I8
                let s = sigma_dot(*e, i) as f64;
                if s != 0.0 && st.r[i_idx] > 0.0 {
                    let re = (st.sep[idx] / st.sep[i_idx]).re;
                    acc += w * tb * base * s / st.h * re * ratio_i;
                }
            } else {
                // I9
                acc += w * tb * base * 2.0 / st.h * ratio_i;
            }
            // I6/I7: cross terms against the bracket
            for e2 in &all {
                let w2 = params.weight(*e2);
                if w2 == 0.0 || e2 == e {
                    continue;
                }
                // each unordered pair appears once per orientation in the
                // displays; summing ordered pairs halves the prefactors
                let idx2 = e2.index();
                let gt2 = st.g[idx2].as_ref().unwrap();
                let tb2 = 2.0 * params.beta(*e2);
                let base2 = gt2.g1 / (2.0 * gt2.arg);
                let s = sigma_dot(*e, *e2) as f64;
                if s == 0.0 {
                    continue;
                }
                let bracket_rate = 0.5 * s * (st.sep[idx] * st.sep[idx2].conj()).re
                    / (st.r[idx] * st.r[idx2]);
                acc += -0.5
                    * w
                    * w2
                    * tb
                    * tb2
                    * base
                    * base2
                    * 4.0
                    * st.r[idx]
                    * st.r[idx2]
                    / (st.h * st.h)
                    * bracket_rate;
            }
        }
        Ok(acc)
    };

    let st0 = eval(&path.states[0])?;
    let mut prev_r = riemann(&path.states[0], &st0)?;
    let mut prev_st = st0;
    let mut total = 0.0;
    for k in 0..path.steps() {
        let dt = path.dt(k);
        let st_next = eval(&path.states[k + 1])?;
        let next_r = riemann(&path.states[k + 1], &st_next)?;
        total += 0.5 * (prev_r + next_r) * dt;
        // I2: left-endpoint stochastic terms
        for e in &all {
            let w = params.weight(*e);
            if w == 0.0 {
                continue;
            }
            let idx = e.index();
            let gt = prev_st.g[idx].as_ref().unwrap();
            let tb = 2.0 * params.beta(*e);
            total += -w * tb * (gt.g1 / (2.0 * gt.arg)) * (2.0 * prev_st.r[idx] / prev_st.h)
                * path.b_increment(k, *e);
        }
        prev_st = st_next;
        prev_r = next_r;
    }
    let f_of = |st: &StateTerms| st.h.ln();
    let st_t = eval(path.states.last().unwrap())?;
    let st_0 = eval(&path.states[0])?;
    Ok((f_of(&st_t) - f_of(&st_0) - total).abs())
}

// --- cross-law estimators -----------------------------------------------------

/// Stopping rule shared by the cross-law estimators: τ = t_cap ∧ first time
/// a positively-weighted radius drops to η, detected by linear interpolation
/// between grid points.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub eta: f64,
    pub t_cap: f64,
}

fn check_stop_preconditions(
    z0: &Configuration,
    params: &ModelParams,
    stop: &StopRule,
) -> Result<()> {
    if classify_state(z0, params, 0.0) != StateClass::AllSeparated {
        return Err(Error::Precondition("initial condition must be fully separated".into()));
    }
    let r_min = z0.min_weighted_radius(params);
    if stop.eta >= r_min {
        return Err(Error::Precondition(format!(
            "stop radius {} is not below the smallest initial radius {r_min}",
            stop.eta
        )));
    }
    Ok(())
}

fn interpolate_state(a: &Configuration, b: &Configuration, theta: f64) -> Configuration {
    Configuration {
        positions: a
            .positions
            .iter()
            .zip(&b.positions)
            .map(|(x, y)| x + (y - x) * theta)
            .collect(),
    }
}

/// First positively-weighted radius at or below η after a step, with the
/// interpolation fraction θ of the crossing.
fn crossing_theta(
    prev: &Configuration,
    next: &Configuration,
    params: &ModelParams,
    eta: f64,
) -> Option<f64> {
    let mut hit: Option<f64> = None;
    for e in params.positive_edges() {
        let r1 = next.radius(e);
        if r1 <= eta {
            let r0 = prev.radius(e);
            let theta = if r0 <= r1 { 0.0 } else { ((r0 - eta) / (r0 - r1)).clamp(0.0, 1.0) };
            hit = Some(hit.map_or(theta, |t: f64| t.min(theta)));
        }
    }
    hit
}

/// Girsanov-weighted plain-Brownian estimator of E[F(Z_{τ})] under the
/// many-δ law: simulates driftless particles and weights each path by
/// exp(−∫ Σ_j β_j w_j K0^j/K0^w ds) · K0^w(τ)/K0^w(0).
#[allow(clippy::too_many_arguments)]
pub fn girsanov_bm_estimator<F>(
    z0: &Configuration,
    params: &ModelParams,
    functional: F,
    stop: StopRule,
    dt: f64,
    budget: u64,
    workers: usize,
    master_seed: u64,
) -> Result<EstimatorResult>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    check_stop_preconditions(z0, params, &stop)?;
    // β_ref makes the exponent exact in the homogeneous case
    let beta_ref = params.beta(params.positive_edges()[0]);
    let ksum0 = crate::model::weighted_k0_sum(z0, params)?;
    run_estimator(
        |_path, rng| {
            let mut state = z0.clone();
            let mut t = 0.0;
            let mut centered_int = 0.0;
            let mut kt = k_terms(&state, params)?;
            let mut integrand = a_tilde_centered(&kt, params, beta_ref);
            loop {
                let remaining = stop.t_cap - t;
                if remaining <= 0.0 {
                    break;
                }
                let step_dt = dt.min(remaining);
                let sq = step_dt.sqrt();
                let next = Configuration {
                    positions: state
                        .positions
                        .iter()
                        .map(|z| {
                            z + Complex64::new(
                                sq * rng.sample::<f64, _>(StandardNormal),
                                sq * rng.sample::<f64, _>(StandardNormal),
                            )
                        })
                        .collect(),
                };
                let kt_next = k_terms(&next, params)?;
                let integrand_next = a_tilde_centered(&kt_next, params, beta_ref);
                if let Some(theta) = crossing_theta(&state, &next, params, stop.eta) {
                    let tau_state = interpolate_state(&state, &next, theta);
                    let kt_tau = k_terms(&tau_state, params)?;
                    let integrand_tau = a_tilde_centered(&kt_tau, params, beta_ref);
                    centered_int += 0.5 * (integrand + integrand_tau) * theta * step_dt;
                    let tau = t + theta * step_dt;
                    let weight = (-beta_ref * tau - centered_int).exp() * kt_tau.ksum / ksum0;
                    return Ok(weight * functional(&tau_state));
                }
                centered_int += 0.5 * (integrand + integrand_next) * step_dt;
                t += step_dt;
                state = next;
                kt = kt_next;
                integrand = integrand_next;
            }
            let weight = (-beta_ref * stop.t_cap - centered_int).exp() * kt.ksum / ksum0;
            Ok(weight * functional(&state))
        },
        budget,
        workers,
        master_seed,
    )
}

/// Σ_j β_j w_j K0^j/K0^w − β_ref, exactly zero for homogeneous couplings.
fn a_tilde_centered(kt: &KTerms, params: &ModelParams, beta_ref: f64) -> f64 {
    let mut acc = 0.0;
    for e in edges(params.n()) {
        let w = params.weight(e);
        if w == 0.0 {
            continue;
        }
        acc += (params.beta(e) - beta_ref) * w * kt.k0[e.index()] / kt.ksum;
    }
    acc
}

/// Direct many-δ estimator of E[F(Z_τ)] for the same stopping rule: the
/// cross-validation partner of `girsanov_bm_estimator`.
#[allow(clippy::too_many_arguments)]
pub fn many_delta_stopped_estimator<F>(
    z0: &Configuration,
    params: &ModelParams,
    functional: F,
    stop: StopRule,
    sim: &SimConfig,
    budget: u64,
    workers: usize,
    master_seed: u64,
) -> Result<EstimatorResult>
where
    F: Fn(&Configuration) -> f64 + Sync,
{
    check_stop_preconditions(z0, params, &stop)?;
    run_estimator(
        |_path, rng| {
            let mut state = z0.clone();
            let mut t = 0.0;
            let n = params.n();
            let mut draws = Vec::with_capacity(n);
            while t < stop.t_cap {
                draws.clear();
                for _ in 0..n {
                    draws.push(Complex64::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ));
                }
                let out = crate::sde::step_many_delta(&state, params, sim, &draws)?;
                let step_dt = out.dt;
                if let Some(theta) = crossing_theta(&state, &out.config, params, stop.eta) {
                    let tau_state = interpolate_state(&state, &out.config, theta);
                    return Ok(functional(&tau_state));
                }
                if t + step_dt >= stop.t_cap {
                    // interpolate to the cap so both estimators stop identically
                    let theta = (stop.t_cap - t) / step_dt;
                    let cap_state = interpolate_state(&state, &out.config, theta);
                    return Ok(functional(&cap_state));
                }
                t += step_dt;
                state = out.config;
            }
            Ok(functional(&state))
        },
        budget,
        workers,
        master_seed,
    )
}

/// Mass-identity estimator: Σ_{i:w_i>0} [w_i K0^i(0)/K0^w(0)] E^i[e^{−Ã(T^w_0)}]
/// by one-δ simulation per reference edge to the first positively-weighted
/// contact. Returns the combined estimate (analytically 1).
pub fn weighted_average_mass(
    z0: &Configuration,
    params: &ModelParams,
    sim: &SimConfig,
    budget_per_edge: u64,
    workers: usize,
    master_seed: u64,
) -> Result<EstimatorResult> {
    if classify_state(z0, params, 0.0) != StateClass::AllSeparated {
        return Err(Error::Precondition("initial condition must be fully separated".into()));
    }
    let kt0 = k_terms(z0, params)?;
    let mut terms = Vec::new();
    for edge in params.positive_edges() {
        let coef = params.weight(edge) * kt0.k0[edge.index()] / kt0.ksum;
        let est = run_estimator(
            |_path, rng| {
                let one = params.one_delta_variant(edge);
                let mut state = z0.clone();
                let mut t = 0.0;
                let n = params.n();
                let mut draws = Vec::with_capacity(n);
                let mut integrand = a_tilde_integrand(&k_terms(&state, params)?, params, edge);
                let mut a_tilde_acc = 0.0;
                while t < sim.t_max {
                    draws.clear();
                    for _ in 0..n {
                        draws.push(Complex64::new(
                            rng.sample::<f64, _>(StandardNormal),
                            rng.sample::<f64, _>(StandardNormal),
                        ));
                    }
                    let out = crate::sde::step_many_delta(&state, &one, sim, &draws)?;
                    let kt_next = k_terms(&out.config, params)?;
                    let integrand_next = a_tilde_integrand(&kt_next, params, edge);
                    if let Some(theta) =
                        crossing_theta(&state, &out.config, params, sim.contact_threshold)
                    {
                        a_tilde_acc += 0.5 * (integrand + integrand_next) * theta * out.dt;
                        return Ok((-a_tilde_acc).exp());
                    }
                    a_tilde_acc += 0.5 * (integrand + integrand_next) * out.dt;
                    t += out.dt;
                    state = out.config;
                    integrand = integrand_next;
                }
                // horizon exhausted without contact: report the weight as-is
                Ok((-a_tilde_acc).exp())
            },
            budget_per_edge,
            workers,
            master_seed.wrapping_add((edge.index() as u64 + 1) << 32),
        )?;
        terms.push((coef, est));
    }
    Ok(EstimatorResult::linear_combination(&terms))
}

/// Stopped/unstopped expectations of ℰ under the one-δ law with reference
/// edge i: the stopped mean (at t ∧ first time a *non-i* positively-weighted
/// radius reaches η) checks the martingale normalization E[ℰ] = 1; the
/// unstopped mean at t checks the supermartingale direction E[ℰ] ≤ 1.
#[allow(clippy::too_many_arguments)]
pub fn stopped_martingale_test(
    z0: &Configuration,
    params: &ModelParams,
    i: Edge,
    t: f64,
    eta: f64,
    eps: f64,
    sim: &SimConfig,
    budget: u64,
    workers: usize,
    master_seed: u64,
) -> Result<(EstimatorResult, EstimatorResult)> {
    for e in params.positive_edges() {
        if e != i && z0.radius(e) <= eta {
            return Err(Error::Precondition(format!(
                "stop radius {eta} is not below the initial radius of edge {e}"
            )));
        }
    }
    let mut sim_t = *sim;
    sim_t.t_max = t;
    sim_t.max_contacts = usize::MAX >> 1;
    let results = run_estimator_multi(
        |_path, rng| {
            let path = simulate_one_delta(z0, params, i, &sim_t, rng)?;
            // locate the stopped index: first non-i positive radius ≤ η
            let mut stop_idx = path.steps();
            'outer: for k in 1..path.states.len() {
                for e in params.positive_edges() {
                    if e != i && path.states[k].radius(e) <= eta {
                        stop_idx = k;
                        break 'outer;
                    }
                }
            }
            let stopped = path.truncated(stop_idx);
            let wf_stopped = weight_functional(&stopped, params, i, eps, sim.radius_floor)?;
            let wf_full = weight_functional(&path, params, i, eps, sim.radius_floor)?;
            Ok(vec![wf_stopped.exp_functional, wf_full.exp_functional])
        },
        2,
        budget,
        workers,
        master_seed,
    )?;
    Ok((results[0], results[1]))
}

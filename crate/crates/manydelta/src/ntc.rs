//! No-simultaneous-contacts machinery: admissibility arithmetic for the
//! comparison dimension, the reciprocal-sum inequality, the quadratic-
//! variation clock and its time change, the lower-bound Bessel comparison
//! on simulated paths, and j-NSC path scanning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{edges, Edge};
use crate::sde::{simulate_bessel, PathRecord};

/// Σ 1/x_k − n²/Σ x_k ≥ 0, zero iff all entries coincide.
pub fn reciprocal_sum_gap(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::Precondition("need at least two entries".into()));
    }
    if xs.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Domain("reciprocal_sum_gap needs strictly positive entries".into()));
    }
    let n = xs.len() as f64;
    let recip: f64 = xs.iter().map(|x| 1.0 / x).sum();
    let total: f64 = xs.iter().sum();
    Ok(recip - n * n / total)
}

/// Comparison dimension 𝔡 = n0²(1-2α)/(n0 + n0(n0-1)/2) + 1 and whether the
/// (n0, α) pair is admissible (first summand ≥ 1, i.e. 𝔡 ≥ 2).
pub fn dimension_d(n0: usize, alpha: f64) -> Result<(f64, bool)> {
    if n0 < 2 {
        return Err(Error::Precondition("need n0 >= 2".into()));
    }
    if alpha < 0.0 {
        return Err(Error::Precondition("need alpha >= 0".into()));
    }
    let n = n0 as f64;
    let first = n * n * (1.0 - 2.0 * alpha) / (n + n * (n - 1.0) / 2.0);
    Ok((first + 1.0, first >= 1.0))
}

/// Cumulative quadratic-variation clock of Σ_j B^j from per-edge increment
/// series: clock[k+1] = clock[k] + (Σ_j ΔB^j_k)². Returns the clock on the
/// full grid (len = steps + 1, clock[0] = 0).
pub fn clock_process(b_increments: &[Vec<f64>]) -> Result<Vec<f64>> {
    let steps = b_increments
        .first()
        .ok_or_else(|| Error::Precondition("need at least one edge series".into()))?
        .len();
    if b_increments.iter().any(|s| s.len() != steps) {
        return Err(Error::GridMismatch("edge increment series differ in length".into()));
    }
    let mut clock = Vec::with_capacity(steps + 1);
    clock.push(0.0);
    let mut acc = 0.0;
    for k in 0..steps {
        let summed: f64 = b_increments.iter().map(|s| s[k]).sum();
        acc += summed * summed;
        clock.push(acc);
    }
    Ok(clock)
}

/// Per-step increments of Σ_j B^j (the shared DDS noise).
pub fn summed_increments(b_increments: &[Vec<f64>]) -> Result<Vec<f64>> {
    let steps = b_increments
        .first()
        .ok_or_else(|| Error::Precondition("need at least one edge series".into()))?
        .len();
    if b_increments.iter().any(|s| s.len() != steps) {
        return Err(Error::GridMismatch("edge increment series differ in length".into()));
    }
    Ok((0..steps).map(|k| b_increments.iter().map(|s| s[k]).sum()).collect())
}

/// ρ^(2)_ℓ = ρ_{γ(ℓ)} with γ the right-continuous inverse of the clock,
/// levelled at the path end.
pub fn time_changed_radius(sum_path: &[f64], clock: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if sum_path.len() != clock.len() {
        return Err(Error::GridMismatch(format!(
            "sum path has {} points, clock {}",
            sum_path.len(),
            clock.len()
        )));
    }
    if clock.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("clock must be nondecreasing".into()));
    }
    let mut out = Vec::with_capacity(levels.len());
    for l in levels {
        // γ(ℓ) = inf{ t : clock_t > ℓ }
        let idx = clock.partition_point(|c| *c <= *l);
        out.push(sum_path[idx.min(sum_path.len() - 1)]);
    }
    Ok(out)
}

/// Outcome of one lower-bound Bessel comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// clock value σ_k at which the comparison starts
    pub sigma_k: f64,
    /// clock value τ_m at which it stops
    pub tau_m: f64,
    /// share of ℓ-grid points in [σ_k, τ_m] with ρ^(1),k ≤ ρ^(2) + tol
    pub fraction_dominated: f64,
    /// grid points compared
    pub points: usize,
}

/// Run the pathwise comparison: time-change the sum path by its clock,
/// start a dimension-d Bessel от level 1/k driven by the *same* increments
/// (DDS reuse), and measure how often the Bessel stays below, up to the
/// first time either process drops to 1/m.
pub fn lower_bessel_compare(
    sum_path: &[f64],
    clock: &[f64],
    shared_noise: &[f64],
    dimension: f64,
    k_level: u32,
    m_level: u32,
    tol: f64,
) -> Result<ComparisonReport> {
    if dimension < 2.0 {
        return Err(Error::Precondition(format!(
            "comparison dimension must be >= 2, got {dimension}"
        )));
    }
    if sum_path.len() != clock.len() || shared_noise.len() + 1 != clock.len() {
        return Err(Error::GridMismatch("sum path / clock / noise lengths differ".into()));
    }
    if m_level <= k_level {
        return Err(Error::Precondition("need m > k".into()));
    }
    let start_level = 1.0 / k_level as f64;
    let stop_level = 1.0 / m_level as f64;

    // σ_k: first grid index with ρ^(2) ≥ 1/k
    let start = match sum_path.iter().position(|r| *r >= start_level) {
        Some(i) => i,
        None => {
            return Err(Error::Precondition(format!(
                "sum path never reaches the start level {start_level}"
            )))
        }
    };

    let mut rho1 = sum_path[start];
    let mut dominated = 0usize;
    let mut points = 0usize;
    let mut tau = *clock.last().unwrap();
    for k in start..sum_path.len() {
        let rho2 = sum_path[k];
        points += 1;
        if rho1 <= rho2 + tol {
            dominated += 1;
        }
        if rho2 <= stop_level || rho1 <= stop_level {
            tau = clock[k];
            break;
        }
        if k + 1 < sum_path.len() {
            let dl = clock[k + 1] - clock[k];
            rho1 += (dimension - 1.0) / (2.0 * rho1) * dl + shared_noise[k];
        }
    }
    Ok(ComparisonReport {
        sigma_k: clock[start],
        tau_m: tau,
        fraction_dominated: dominated as f64 / points.max(1) as f64,
        points,
    })
}

/// Result of scanning a path for j-fold simultaneous small radii.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NscScanResult {
    pub j_level: usize,
    /// smallest observed sum of the j smallest pair radii
    pub min_sum: f64,
    /// grid points where that sum fell below the threshold
    pub violation_count: u64,
    pub grid_points: u64,
}

/// Scan all grid times for the minimum over size-j edge subsets of the
/// radius sum (the j smallest radii realize it).
pub fn nsc_scan(path: &PathRecord, j_level: usize, threshold: f64) -> Result<NscScanResult> {
    let n = path.states[0].n();
    let all = edges(n);
    if j_level < 2 || j_level > all.len() {
        return Err(Error::Precondition(format!(
            "j_level must lie in [2, {}], got {j_level}",
            all.len()
        )));
    }
    let mut min_sum = f64::INFINITY;
    let mut violations = 0u64;
    let mut radii = vec![0.0f64; all.len()];
    for state in &path.states {
        for (slot, e) in radii.iter_mut().zip(&all) {
            *slot = state.radius(*e);
        }
        radii.sort_by(f64::total_cmp);
        let sum: f64 = radii[..j_level].iter().sum();
        min_sum = min_sum.min(sum);
        if sum < threshold {
            violations += 1;
        }
    }
    Ok(NscScanResult {
        j_level,
        min_sum,
        violation_count: violations,
        grid_points: path.states.len() as u64,
    })
}

/// Empirical drift/correlation diagnostics of the radial semimartingales
/// along a path. Reported, never assumed: the comparison theorem's
/// hypotheses concern the true dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialDiagnostics {
    /// time-weighted mean of the estimated μ_j per edge
    pub mu_mean: Vec<(Edge, f64)>,
    /// estimated σ_{j,k} per pair (2⟨B^j,B^k⟩ rate)
    pub correlation: Vec<(Edge, Edge, f64)>,
}

pub fn radial_diagnostics(path: &PathRecord, subset: &[Edge]) -> Result<RadialDiagnostics> {
    if path.steps() == 0 {
        return Err(Error::Precondition("empty path".into()));
    }
    let duration = path.duration();
    let mut mu_mean = Vec::with_capacity(subset.len());
    let mut b_series: Vec<Vec<f64>> = Vec::with_capacity(subset.len());
    for e in subset {
        let mut mu_acc = 0.0;
        let mut b = Vec::with_capacity(path.steps());
        for k in 0..path.steps() {
            let db = path.b_increment(k, *e);
            let dr = path.radius(k + 1, *e) - path.radius(k, *e);
            let r = path.radius(k, *e);
            // d|Z| = μ/|Z| dt + dB  =>  μ ≈ (Δ|Z| - ΔB)·|Z|/dt
            mu_acc += (dr - db) * r;
            b.push(db);
        }
        mu_mean.push((*e, mu_acc / duration));
        b_series.push(b);
    }
    let mut correlation = Vec::new();
    for (i, a) in subset.iter().enumerate() {
        for (j, b) in subset.iter().enumerate().skip(i + 1) {
            let cross: f64 =
                b_series[i].iter().zip(&b_series[j]).map(|(x, y)| x * y).sum();
            correlation.push((*a, *b, 2.0 * cross / duration));
        }
    }
    Ok(RadialDiagnostics { mu_mean, correlation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;
    use crate::sde::{simulate_bessel_rng, SimConfig};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn reciprocal_gap_examples() {
        assert_eq!(reciprocal_sum_gap(&[1.0, 1.0]).unwrap(), 0.0);
        let v = reciprocal_sum_gap(&[1.0, 2.0, 3.0]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        assert!(reciprocal_sum_gap(&[1.0]).is_err());
        assert!(reciprocal_sum_gap(&[1.0, 0.0]).is_err());
        assert!(reciprocal_sum_gap(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn reciprocal_gap_randomized_nonnegative() {
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..100_000 {
            let len = 2 + rng.random_range(0..6);
            let xs: Vec<f64> = (0..len).map(|_| 1e-3 + rng.random::<f64>() * 10.0).collect();
            let gap = reciprocal_sum_gap(&xs).unwrap();
            assert!(gap >= -1e-12, "negative gap {gap} for {xs:?}");
        }
        // equality only on constant tuples
        let near = reciprocal_sum_gap(&[2.0, 2.0, 2.0]).unwrap();
        assert!(near.abs() < 1e-14);
        let off = reciprocal_sum_gap(&[2.0, 2.0, 2.1]).unwrap();
        assert!(off > 1e-6);
    }

    #[test]
    fn dimension_examples_and_invariant() {
        let (d, ok) = dimension_d(2, 0.0).unwrap();
        assert!((d - 7.0 / 3.0).abs() < 1e-14 && ok);
        let (d, ok) = dimension_d(3, 0.0).unwrap();
        assert!((d - 2.5).abs() < 1e-14 && ok);
        let (d, ok) = dimension_d(2, 0.2).unwrap();
        assert!((d - 1.8).abs() < 1e-14 && !ok);
        for n0 in 2..=12 {
            let (d, ok) = dimension_d(n0, 0.0).unwrap();
            assert!(d >= 2.0 && ok, "n0={n0}: d={d}");
        }
    }

    #[test]
    fn clock_slopes() {
        let mut rng = stream_rng(2, 0, 0);
        let dt: f64 = 1e-3;
        let steps = 200_000;
        let t = dt * steps as f64;
        // independent pair: slope n0 = 2
        let a: Vec<f64> =
            (0..steps).map(|_| dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> =
            (0..steps).map(|_| dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let clock = clock_process(&[a.clone(), b.clone()]).unwrap();
        let slope = clock.last().unwrap() / t;
        // QV of a Gaussian sum concentrates at rate √(2/steps)
        let se = 2.0 * (2.0 / steps as f64).sqrt();
        assert!((slope - 2.0).abs() < 3.0 * se, "independent slope {slope}");

        // single edge: slope 1
        let clock1 = clock_process(&[a.clone()]).unwrap();
        let slope1 = clock1.last().unwrap() / t;
        assert!((slope1 - 1.0).abs() < 3.0 * se / 2.0, "single slope {slope1}");

        // correlation ½ (σ = 1): slope attains the bound 2 + 2·½ = 3
        let c: Vec<f64> = a
            .iter()
            .map(|x| 0.5 * x + (0.75f64).sqrt() * dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let clock_c = clock_process(&[a, c]).unwrap();
        let slope_c = clock_c.last().unwrap() / t;
        assert!((slope_c - 3.0).abs() < 3.0 * 1.5 * se, "correlated slope {slope_c}");
    }

    #[test]
    fn clock_grid_mismatch() {
        assert!(clock_process(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn time_change_identity_and_flats() {
        // identity clock reproduces the path on matching grids
        let rho: Vec<f64> = (0..100).map(|k| 1.0 + (k as f64 / 25.0).sin()).collect();
        let clock: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let levels: Vec<f64> = clock[..99].to_vec();
        let out = time_changed_radius(&rho, &clock, &levels).unwrap();
        // right-continuous inverse advances one grid index past each level
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, rho[i + 1]);
        }

        // flat clock stretch: the time change jumps over it, and the jump is
        // upward when the path increases over the stretch
        let rho = vec![1.0, 1.2, 1.4, 1.6, 1.8];
        let clock = vec![0.0, 0.5, 0.5, 0.5, 1.0];
        let out = time_changed_radius(&rho, &clock, &[0.0, 0.49, 0.5]).unwrap();
        assert_eq!(out, vec![1.2, 1.2, 1.8]);

        // synthetic ρ = clock: ρ^(2)_ℓ ≈ ℓ (one grid step of lag)
        let lin: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let out = time_changed_radius(&lin, &lin, &[3.0, 17.0]).unwrap();
        assert_eq!(out, vec![4.0, 18.0]);

        assert!(time_changed_radius(&rho, &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn bessel_self_comparison() {
        // feeding a genuine dimension-d Bessel through the comparison must
        // give near-total domination (equality up to discretization)
        let d = 7.0 / 3.0;
        let sim = SimConfig { t_max: 1.0, dt_max: 2e-4, ..Default::default() };
        let mut dominated = 0.0;
        let paths = 50;
        for i in 0..paths {
            let mut rng = stream_rng(31, i, 0);
            let (path, increments) = simulate_bessel_rng(d, 1.0, &sim, &mut rng).unwrap();
            let noise: Vec<f64> = increments.iter().map(|(_, db)| *db).collect();
            let clock = clock_process(&[noise.clone()]).unwrap();
            let report =
                lower_bessel_compare(&path, &clock, &noise, d, 2, 1000, 0.02).unwrap();
            dominated += report.fraction_dominated;
        }
        let avg = dominated / paths as f64;
        assert!(avg >= 0.98, "self-comparison domination {avg}");
    }

    #[test]
    fn zero_noise_comparison_is_exact() {
        // deterministic ODE: both processes integrate the same drift bound
        let d = 7.0 / 3.0;
        let increments: Vec<(f64, f64)> = vec![(1e-4, 0.0); 5000];
        let (path, _) = simulate_bessel(d, 1.0, &increments, 1e-9).unwrap();
        let clock: Vec<f64> = (0..=5000).map(|k| k as f64 * 1e-4).collect();
        let noise = vec![0.0; 5000];
        let report = lower_bessel_compare(&path, &clock, &noise, d, 2, 1000, 1e-12).unwrap();
        assert_eq!(report.fraction_dominated, 1.0);
    }

    #[test]
    fn nsc_scan_basics() {
        use crate::model::{Configuration, ModelParams};
        use num_complex::Complex64;
        let params = ModelParams::uniform(3, 1.0).unwrap();
        let z0 = Configuration::new(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(10.0, 0.0),
            Complex64::new(0.0, 10.0),
        ])
        .unwrap();
        let sim = SimConfig { t_max: 0.2, ..Default::default() };
        let mut rng = stream_rng(37, 0, 0);
        let path = crate::sde::simulate_many_delta(&z0, &params, &sim, &mut rng).unwrap();

        // far-apart particles: no violations at any reasonable threshold
        let scan = nsc_scan(&path, 2, 1e-1).unwrap();
        assert_eq!(scan.violation_count, 0);
        assert!(scan.min_sum > 1.0);

        // j = #edges equals scanning the total radius sum
        let scan_all = nsc_scan(&path, 3, 1e-3).unwrap();
        let total_min = path
            .states
            .iter()
            .map(|s| edges(3).into_iter().map(|e| s.radius(e)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((scan_all.min_sum - total_min).abs() < 1e-14);

        assert!(nsc_scan(&path, 1, 1e-3).is_err());
        assert!(nsc_scan(&path, 4, 1e-3).is_err());
    }

    #[test]
    fn diagnostics_report_sane_values() {
        use crate::model::{Configuration, Edge, ModelParams};
        use num_complex::Complex64;
        let params = ModelParams::uniform(3, 1.0).unwrap();
        let z0 = Configuration::new(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.2, 0.0),
            Complex64::new(0.0, 1.2),
        ])
        .unwrap();
        let active = Edge::new(2, 1).unwrap();
        let sim = SimConfig { t_max: 1.0, ..Default::default() };
        let mut rng = stream_rng(41, 0, 0);
        let path = crate::sde::simulate_one_delta(&z0, &params, active, &sim, &mut rng).unwrap();
        let subset = vec![Edge::new(3, 1).unwrap(), Edge::new(3, 2).unwrap()];
        let diag = radial_diagnostics(&path, &subset).unwrap();
        // spectator pairs have μ ≈ 1/2 and |σ| ≤ 1
        for (e, mu) in &diag.mu_mean {
            assert!((mu - 0.5).abs() < 0.2, "edge {e}: mu {mu}");
        }
        for (a, b, corr) in &diag.correlation {
            assert!(corr.abs() <= 1.2, "pair {a},{b}: corr {corr}");
        }
    }
}

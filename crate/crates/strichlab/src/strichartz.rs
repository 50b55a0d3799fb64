//! Admissible pairs and the measured quantities: dispersive slopes, flow-lemma
//! ratios and homogeneous, retarded and dual Strichartz quotients.

use crate::error::{Error, Result};
use crate::field::SampledField;
use crate::hamflow::flow_endpoint;
use crate::lattice::{flowed_box, Analyzer, PhaseBox};
use crate::norms::{amalgam_norm, amalgam_norm_with, conjugate, time_mixed_norm, RowSampling, SpatialNorm};
use crate::potentials::{constant_m, LemmaConstants, Potential};
use crate::propagate::{splitstep_prop, PropagatorSpec, DEFAULT_SPLIT_DT};
use crate::stft::{adjoint_stft, evolved_window, PhaseSpaceForm, Window};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest relative change under refinement that still counts as stable.
pub const STABILITY_DRIFT: f64 = 0.1;
/// Quotients at or above this are treated as blow-up.
pub const FINITE_CEILING: f64 = 1e6;
/// Fewest time samples a Strichartz trajectory may have.
pub const MIN_TIME_SAMPLES: usize = 65;

const SCALING_TOL: f64 = 1e-12;

/// |fine - coarse| / |fine|.
pub fn refinement_drift(coarse: f64, fine: f64) -> f64 {
    if coarse == fine {
        return 0.0;
    }
    (fine - coarse).abs() / fine.abs()
}

/// (p, r) on the scaling line n/p + 2/r = n/2 with r ≥ 4.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    pub endpoint: bool,
}

fn recip(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else {
        1.0 / v
    }
}

impl AdmissiblePair {
    pub fn new(n: usize, p: f64, r: f64) -> Result<Self> {
        let bad = || Error::NotAdmissible { n, p, r };
        if n == 0 || p.is_nan() || r.is_nan() || p < 2.0 || r < 4.0 {
            return Err(bad());
        }
        let nf = n as f64;
        if (nf * recip(p) + 2.0 * recip(r) - nf / 2.0).abs() > SCALING_TOL {
            return Err(bad());
        }
        if n == 1 && p.is_infinite() {
            return Err(bad());
        }
        let endpoint = n > 1 && r == 4.0 && (p - 2.0 * nf / (nf - 1.0)).abs() <= SCALING_TOL * p;
        Ok(AdmissiblePair { n, p, r, endpoint })
    }

    /// The pair on the scaling line with the given r.
    pub fn from_r(n: usize, r: f64) -> Result<Self> {
        let nf = n.max(1) as f64;
        let inv_p = 0.5 - 2.0 * recip(r) / nf;
        let p = if inv_p > 0.0 { 1.0 / inv_p } else { f64::INFINITY };
        AdmissiblePair::new(n, p, r)
    }

    /// The endpoint (2n/(n-1), 4); none in one dimension.
    pub fn endpoint(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::NotAdmissible { n, p: f64::INFINITY, r: 4.0 });
        }
        AdmissiblePair::new(n, 2.0 * n as f64 / (n as f64 - 1.0), 4.0)
    }

    /// Exponent of the outer time norm.
    pub fn time_exponent(&self) -> f64 {
        self.r / 2.0
    }
}

/// `count` pairs evenly spaced in 1/r from r = 4 to r = ∞. In one dimension
/// r = 4 itself is excluded and the first pair sits one step above it.
pub fn admissible_pairs(n: usize, count: usize) -> Result<Vec<AdmissiblePair>> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument("need n ≥ 1 and count ≥ 1".into()));
    }
    (0..count)
        .map(|k| {
            let inv_r = if n == 1 {
                0.25 * (1.0 - (k + 1) as f64 / count as f64)
            } else if count == 1 {
                0.25
            } else {
                0.25 * (1.0 - k as f64 / (count - 1) as f64)
            };
            let r = if inv_r == 0.0 { f64::INFINITY } else { 1.0 / inv_r };
            if n > 1 && k == 0 {
                AdmissiblePair::endpoint(n)
            } else {
                AdmissiblePair::from_r(n, r)
            }
        })
        .collect()
}

/// One persisted measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub cell: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub values: BTreeMap<String, f64>,
    pub stable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl ExperimentRecord {
    pub fn new(experiment: impl Into<String>, cell: impl Into<String>) -> Self {
        ExperimentRecord {
            experiment: experiment.into(),
            cell: cell.into(),
            parameters: BTreeMap::new(),
            values: BTreeMap::new(),
            stable: None,
            timestamp: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(key.to_string(), v);
        self
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn stable(mut self, flag: bool) -> Self {
        self.stable = Some(flag);
        self
    }
}

/// Least-squares line through (log t, log ‖U(t)u₀‖_{W^{∞,1}}).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersiveFit {
    pub slope: f64,
    pub intercept: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    /// ‖u₀‖_{W^{1,∞}}, the data side of the estimate.
    pub data_norm: f64,
}

/// Ordinary least squares y = a + b·x; returns (b, a).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Dispersive slope with W^{∞,1} rows at the given sampling.
pub fn dispersive_fit_with(
    propagator: &PropagatorSpec,
    u0: &SampledField,
    t_list: &[f64],
    sampling: &RowSampling,
) -> Result<DispersiveFit> {
    if t_list.len() < 4 {
        return Err(Error::InvalidArgument(format!("dispersive fit needs 4 sample times, got {}", t_list.len())));
    }
    if t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("dispersive sample times must be positive".into()));
    }
    let w = Window::gaussian();
    let norms = t_list
        .iter()
        .map(|&t| amalgam_norm_with(&propagator.apply(u0, t)?, f64::INFINITY, 1.0, &w, sampling))
        .collect::<Result<Vec<f64>>>()?;
    let data_norm = amalgam_norm_with(u0, 1.0, f64::INFINITY, &w, sampling)?;
    let lx: Vec<f64> = t_list.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok(DispersiveFit { slope, intercept, times: t_list.to_vec(), norms, data_norm })
}

/// Dispersive slope with exact rows.
pub fn dispersive_fit(propagator: &PropagatorSpec, u0: &SampledField, t_list: &[f64]) -> Result<DispersiveFit> {
    dispersive_fit_with(propagator, u0, t_list, &RowSampling::exact())
}

/// Node spacings for L^∞_x L^1_ξ norms of flowed phase-space functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseNodes {
    pub dx: f64,
    pub dxi: f64,
}

impl Default for PhaseNodes {
    fn default() -> Self {
        PhaseNodes { dx: 0.1, dxi: 0.25 }
    }
}

/// sup over x-nodes of the Riemann sum in ξ of |F(Φ(t)(x, ξ))|, where F lives in `support`.
fn flowed_sup_l1<F>(potential: &Potential, t: f64, support: &PhaseBox, nodes: PhaseNodes, eval: F) -> f64
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let dt = flow_dt(potential);
    let pre = flowed_box(potential, support, -t, dt);
    // nodes sit on multiples of the spacings so different supports share them
    let (i0, i1) = ((pre.x0 / nodes.dx).floor() as i64, (pre.x1 / nodes.dx).ceil() as i64);
    let (j0, j1) = ((pre.k0 / nodes.dxi).floor() as i64, (pre.k1 / nodes.dxi).ceil() as i64);
    (i0..=i1)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 * nodes.dx;
            let mut acc = 0.0;
            for j in j0..=j1 {
                let (y, k) = flow_endpoint(potential, t, x, j as f64 * nodes.dxi, dt);
                if support.contains(y, k) {
                    acc += eval(y, k).norm();
                }
            }
            acc * nodes.dxi
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

fn flow_dt(potential: &Potential) -> f64 {
    1.0 / (256.0 * (1.0 + constant_m(potential, 1)))
}

fn check_horizon(t: f64, horizon: f64) -> Result<()> {
    if !(t.abs() <= horizon) {
        return Err(Error::HorizonViolation { t, horizon });
    }
    Ok(())
}

/// ‖Φ_t V_{g(s)} u‖_{L^∞_x L^1_ξ}.
fn flowed_stft_norm(potential: &Potential, window: &Window, s: f64, t: f64, u: &SampledField, nodes: PhaseNodes) -> Result<f64> {
    let gs = evolved_window(window, s)?;
    match Analyzer::new(u, &gs, None)? {
        None => Ok(0.0),
        Some(an) => {
            let support = *an.region();
            Ok(flowed_sup_l1(potential, t, &support, nodes, |x, k| an.eval(x, k)))
        }
    }
}

/// |t|·‖Φ_t V_{g(s)} f‖_{L^∞_x L^1_ξ} / ‖f‖_{W^{1,∞}} for |s|, |t| ≤ T₂, t ≠ 0.
pub fn lemma4_ratio_with(
    potential: &Potential,
    window: &Window,
    s: f64,
    t: f64,
    f: &SampledField,
    nodes: PhaseNodes,
) -> Result<f64> {
    let t2 = LemmaConstants::of(potential, 1).t2;
    check_horizon(s, t2)?;
    check_horizon(t, t2)?;
    if t == 0.0 {
        return Err(Error::InvalidArgument("the decay ratio needs t ≠ 0".into()));
    }
    let den = amalgam_norm(f, 1.0, f64::INFINITY, window)?;
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(t.abs() * flowed_stft_norm(potential, window, s, t, f, nodes)? / den)
}

pub fn lemma4_ratio(potential: &Potential, window: &Window, s: f64, t: f64, f: &SampledField) -> Result<f64> {
    lemma4_ratio_with(potential, window, s, t, f, PhaseNodes::default())
}

/// ‖Φ_t V_{g(s)} V_{g(s)}* F‖_{L^∞_x L^1_ξ} / ‖Φ_t F‖_{L^∞_x L^1_ξ} for |s|, |t| ≤ T₁.
/// F is sampled on the (x, ξ) nodes of `grid` before synthesis.
pub fn lemma3_ratio_with(
    potential: &Potential,
    window: &Window,
    s: f64,
    t: f64,
    big_f: &PhaseSpaceForm,
    grid: &crate::field::GridSpec,
    nodes: PhaseNodes,
) -> Result<f64> {
    let t1 = LemmaConstants::of(potential, 1).t1;
    check_horizon(s, t1)?;
    check_horizon(t, t1)?;
    if big_f.atoms.is_empty() {
        return Err(Error::ZeroDenominator);
    }
    let (x0, x1, k0, k1) = big_f.extent(1e-16);
    let support = PhaseBox { x0, x1, k0, k1 };
    let den = flowed_sup_l1(potential, t, &support, nodes, |x, k| big_f.eval(x, k));
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let gs = evolved_window(window, s)?;
    let u = adjoint_stft(&big_f.sample(grid)?, &gs)?;
    Ok(flowed_stft_norm(potential, window, s, t, &u, nodes)? / den)
}

/// Lemma-3 ratio on a 256-point grid of half-width 16.
pub fn lemma3_ratio(potential: &Potential, window: &Window, s: f64, t: f64, big_f: &PhaseSpaceForm) -> Result<f64> {
    let grid = crate::field::make_grid(1, 256, 16.0)?;
    lemma3_ratio_with(potential, window, s, t, big_f, &grid, PhaseNodes::default())
}

/// Time sampling and row sampling of a Strichartz measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuotientOptions {
    pub samples: usize,
    pub sampling: RowSampling,
    /// Strang step for split-step propagation.
    pub split_dt: f64,
}

impl Default for QuotientOptions {
    fn default() -> Self {
        QuotientOptions { samples: MIN_TIME_SAMPLES, sampling: RowSampling::exact(), split_dt: DEFAULT_SPLIT_DT }
    }
}

/// `count` uniform times from a to b inclusive.
pub fn uniform_times(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}

fn spatial_norm(pair: &AdmissiblePair, endpoint_mode: bool, sampling: RowSampling) -> Result<SpatialNorm> {
    if endpoint_mode {
        if pair.n == 1 {
            return Err(Error::NotAdmissible { n: 1, p: pair.p, r: pair.r });
        }
        Ok(SpatialNorm::endpoint(pair.p, sampling))
    } else {
        Ok(SpatialNorm::strichartz(pair.p, sampling))
    }
}

fn check_dim(pair: &AdmissiblePair, f: &SampledField) -> Result<()> {
    if pair.n != f.grid().dim() {
        return Err(Error::InvalidArgument(format!("pair for n = {} applied to a {}-d field", pair.n, f.grid().dim())));
    }
    Ok(())
}

/// U(t)u₀ on `options.samples` uniform times in [-T, T].
pub fn trajectory(
    propagator: &PropagatorSpec,
    u0: &SampledField,
    big_t: f64,
    samples: usize,
) -> Result<Vec<(f64, SampledField)>> {
    let times = uniform_times(-big_t, big_t, samples);
    if let PropagatorSpec::Splitstep { potential, dt } = propagator {
        // march outward from t = 0 so each sample costs one interval
        let pot = potential.build();
        let mut out: Vec<Option<SampledField>> = vec![None; times.len()];
        let zero = times.iter().position(|t| t.abs() < 1e-14 * big_t.max(1.0));
        let start = zero.unwrap_or(0);
        let first = splitstep_prop(u0, times[start], &pot, *dt)?;
        out[start] = Some(first);
        for dir in [1isize, -1] {
            let mut i = start as isize;
            loop {
                let j = i + dir;
                if j < 0 || j as usize >= times.len() {
                    break;
                }
                let prev = out[i as usize].as_ref().expect("filled");
                let next = splitstep_prop(prev, times[j as usize] - times[i as usize], &pot, *dt)?;
                out[j as usize] = Some(next);
                i = j;
            }
        }
        return Ok(times.into_iter().zip(out.into_iter().map(|v| v.expect("filled"))).collect());
    }
    times.into_par_iter().map(|t| Ok((t, propagator.apply(u0, t)?))).collect()
}

/// ‖U(·)u₀‖_{L^{r/2}([-T,T]; W(ℱL^{p′}, L^p))} / ‖u₀‖₂; with `endpoint_mode` the inner
/// norm is L^{p′,2}.
pub fn strichartz_quotient_with(
    propagator: &PropagatorSpec,
    u0: &SampledField,
    big_t: f64,
    pair: &AdmissiblePair,
    endpoint_mode: bool,
    options: &QuotientOptions,
) -> Result<f64> {
    check_dim(pair, u0)?;
    let spatial = spatial_norm(pair, endpoint_mode, options.sampling)?;
    if options.samples < MIN_TIME_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TIME_SAMPLES} time samples")));
    }
    if !(big_t > 0.0) {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    let norm = u0.norm_l2();
    if norm == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let traj = trajectory(propagator, u0, big_t, options.samples)?;
    Ok(time_mixed_norm(&traj, pair.time_exponent(), &spatial)? / norm)
}

pub fn strichartz_quotient(
    propagator: &PropagatorSpec,
    u0: &SampledField,
    big_t: f64,
    pair: &AdmissiblePair,
    endpoint_mode: bool,
) -> Result<f64> {
    strichartz_quotient_with(propagator, u0, big_t, pair, endpoint_mode, &QuotientOptions::default())
}

fn check_forcing(f_traj: &[(f64, SampledField)], big_t: f64) -> Result<f64> {
    if f_traj.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    let dt = f_traj[1].0 - f_traj[0].0;
    let uniform = f_traj.windows(2).all(|w| ((w[1].0 - w[0].0) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
    let inside = f_traj.iter().all(|(s, _)| s.abs() <= big_t * (1.0 + 1e-12));
    if !(dt > 0.0) || !uniform || !inside {
        return Err(Error::InvalidArgument("forcing must be sampled uniformly inside [-T, T]".into()));
    }
    Ok(dt)
}

/// ‖∫₀^t U(t-s)F(s) ds‖_{L^{r/2} W^{p,p′}} / ‖F‖_{L^{(r̃/2)′} W(ℱL^{p̃}, L^{p̃′})} with F
/// sampled uniformly on [0, T] and the inner integral by the trapezoid rule.
pub fn retarded_quotient_with(
    potential: &Potential,
    f_traj: &[(f64, SampledField)],
    big_t: f64,
    pair: &AdmissiblePair,
    dual_pair: &AdmissiblePair,
    options: &QuotientOptions,
) -> Result<f64> {
    let dt = check_forcing(f_traj, big_t)?;
    if f_traj[0].0 != 0.0 {
        return Err(Error::InvalidArgument("retarded forcing must start at s = 0".into()));
    }
    check_dim(pair, &f_traj[0].1)?;
    check_dim(dual_pair, &f_traj[0].1)?;
    let dual = SpatialNorm::dual(dual_pair.p, options.sampling);
    let den = time_mixed_norm(f_traj, conjugate(dual_pair.time_exponent()), &dual)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let out = retarded_trajectory(potential, f_traj, dt, options.split_dt)?;
    let num = time_mixed_norm(&out, pair.time_exponent(), &SpatialNorm::strichartz(pair.p, options.sampling))?;
    Ok(num / den)
}

/// w(t_j) = ∫₀^{t_j} U(t_j - s)F(s) ds by the trapezoid rule on the samples of F,
/// through w_j = U(Δ)(w_{j-1} + Δ/2·F_{j-1}) + Δ/2·F_j.
pub fn retarded_trajectory(
    potential: &Potential,
    f_traj: &[(f64, SampledField)],
    dt: f64,
    split_dt: f64,
) -> Result<Vec<(f64, SampledField)>> {
    let half = Complex64::new(0.5 * dt, 0.0);
    let mut w = f_traj[0].1.scale(Complex64::new(0.0, 0.0));
    let mut out = vec![(f_traj[0].0, w.clone())];
    for k in 1..f_traj.len() {
        let carried = w.axpy(half, &f_traj[k - 1].1)?;
        w = splitstep_prop(&carried, dt, potential, split_dt)?.axpy(half, &f_traj[k].1)?;
        out.push((f_traj[k].0, w.clone()));
    }
    Ok(out)
}

pub fn retarded_quotient(
    potential: &Potential,
    f_traj: &[(f64, SampledField)],
    big_t: f64,
    pair: &AdmissiblePair,
    dual_pair: &AdmissiblePair,
) -> Result<f64> {
    retarded_quotient_with(potential, f_traj, big_t, pair, dual_pair, &QuotientOptions::default())
}

/// ‖∫ U(-s)F(s) ds‖₂ / ‖F‖_{L^{(r/2)′} W(ℱL^p, L^{p′})}, trapezoid in s.
pub fn dual_quotient_with(
    potential: &Potential,
    f_traj: &[(f64, SampledField)],
    big_t: f64,
    pair: &AdmissiblePair,
    options: &QuotientOptions,
) -> Result<f64> {
    let dt = check_forcing(f_traj, big_t)?;
    check_dim(pair, &f_traj[0].1)?;
    let dual = SpatialNorm::dual(pair.p, options.sampling);
    let den = time_mixed_norm(f_traj, conjugate(pair.time_exponent()), &dual)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    let last = f_traj.len() - 1;
    let pieces = f_traj
        .par_iter()
        .enumerate()
        .map(|(i, (s, f))| {
            let w = if i == 0 || i == last { 0.5 * dt } else { dt };
            Ok(splitstep_prop(f, -s, potential, options.split_dt)?.scale(Complex64::new(w, 0.0)))
        })
        .collect::<Result<Vec<SampledField>>>()?;
    let mut acc = pieces[0].clone();
    for p in &pieces[1..] {
        acc = acc.axpy(Complex64::new(1.0, 0.0), p)?;
    }
    Ok(acc.norm_l2() / den)
}

pub fn dual_quotient(potential: &Potential, f_traj: &[(f64, SampledField)], big_t: f64, pair: &AdmissiblePair) -> Result<f64> {
    dual_quotient_with(potential, f_traj, big_t, pair, &QuotientOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, sample, ClosedForm};
    use crate::stft::PhaseSpaceAtom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // closed form of ‖u‖_{W^{∞,1}} for u = (Re a/π)^{1/4} e^{-a y²/2} with the unit window
    fn gaussian_w_inf_1(a: Complex64) -> f64 {
        let c = 1.0 / (1.0 + a);
        let amp = (a.re / std::f64::consts::PI).powf(0.25);
        amp * std::f64::consts::PI.powf(-0.25) * 2.0 * std::f64::consts::PI * c.norm().sqrt() / c.re.sqrt()
    }

    #[test]
    fn pair_arithmetic() {
        let p = AdmissiblePair::new(1, 4.0, 8.0).unwrap();
        assert!(!p.endpoint);
        assert!(AdmissiblePair::new(1, f64::INFINITY, 4.0).is_err());
        assert!(AdmissiblePair::new(1, 4.0, 9.0).is_err());
        let e = AdmissiblePair::endpoint(2).unwrap();
        assert_eq!((e.p, e.r, e.endpoint), (4.0, 4.0, true));
        assert!(AdmissiblePair::new(3, 3.0, 4.0).unwrap().endpoint);
        assert!(AdmissiblePair::new(1, 2.0, f64::INFINITY).is_ok());
        assert!(AdmissiblePair::endpoint(1).is_err());
        let q = AdmissiblePair::from_r(1, 12.0).unwrap();
        assert!((q.p - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_pairs_lie_on_scaling_line() {
        for n in 1..4 {
            let pairs = admissible_pairs(n, 5).unwrap();
            assert_eq!(pairs.len(), 5);
            for pr in &pairs {
                let nf = n as f64;
                assert!((nf * recip(pr.p) + 2.0 * recip(pr.r) - nf / 2.0).abs() < 1e-12);
            }
            assert_eq!(pairs[0].endpoint, n > 1);
            assert!(pairs[4].r.is_infinite());
        }
        assert!(admissible_pairs(1, 1).unwrap()[0].r.is_infinite());
        assert!(admissible_pairs(0, 3).is_err());
    }

    #[test]
    fn dispersive_norm_matches_gaussian_closed_form() {
        let grid = make_grid(1, 2048, 32.0).unwrap();
        let sigma = 0.2;
        let u0 = sample(&grid, &ClosedForm::normalized(vec![0.0], sigma, vec![0.0])).unwrap();
        let fit = dispersive_fit(&PropagatorSpec::Free, &u0, &[0.05, 0.1, 0.2, 0.4]).unwrap();
        for (t, v) in fit.times.iter().zip(&fit.norms) {
            let a = 1.0 / Complex64::new(sigma * sigma, *t);
            let exact = gaussian_w_inf_1(a);
            assert!((v - exact).abs() < 1e-8 * exact, "{t} {v} {exact}");
        }
        assert!(dispersive_fit(&PropagatorSpec::Free, &u0, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn stark_slope_matches_free() {
        let grid = make_grid(1, 4096, 48.0).unwrap();
        let u0 = sample(&grid, &ClosedForm::normalized(vec![0.0], 0.05, vec![0.0])).unwrap();
        let ts = [0.02, 0.04, 0.08, 0.16];
        let a = dispersive_fit(&PropagatorSpec::Free, &u0, &ts).unwrap();
        let b = dispersive_fit(&PropagatorSpec::Stark { field: 1.0 }, &u0, &ts).unwrap();
        assert!((a.slope - b.slope).abs() < 0.01, "{} {}", a.slope, b.slope);
    }

    #[test]
    fn lemma4_free_ratio_flat_in_time_and_homogeneous() {
        let grid = make_grid(1, 2048, 12.0).unwrap();
        let f = sample(&grid, &ClosedForm::normalized(vec![0.0], 0.05, vec![0.0])).unwrap();
        let z = Potential::zero();
        let w = Window::gaussian();
        let vals: Vec<f64> = [0.02, 0.05, 0.1, 0.2].iter().map(|&t| lemma4_ratio(&z, &w, 0.0, t, &f).unwrap()).collect();
        let spread = vals.iter().cloned().fold(0.0, f64::max) / vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 3.0, "{vals:?}");
        let doubled = lemma4_ratio(&z, &w, 0.0, 0.1, &f.scale(Complex64::new(2.0, 0.0))).unwrap();
        assert!((doubled - vals[2]).abs() < 1e-12 * vals[2]);
        assert!(matches!(lemma4_ratio(&z, &w, 0.0, 0.5, &f), Err(Error::HorizonViolation { .. })));
        assert!(lemma4_ratio(&z, &w, 0.0, 0.0, &f).is_err());
    }

    #[test]
    fn lemma3_unit_at_time_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let form = PhaseSpaceForm::random_coherent(&mut rng, 4, 3.0);
        let r = lemma3_ratio(&Potential::zero(), &Window::gaussian(), 0.0, 0.0, &form).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
        let scaled = lemma3_ratio(&Potential::cosine(), &Window::gaussian(), 0.03, 0.05, &form.scaled(Complex64::new(0.0, 3.0))).unwrap();
        let base = lemma3_ratio(&Potential::cosine(), &Window::gaussian(), 0.03, 0.05, &form).unwrap();
        assert!((scaled - base).abs() < 1e-10 * base);
        let bump = PhaseSpaceForm::new(vec![PhaseSpaceAtom::Bump {
            x0: 0.0,
            xi0: 0.0,
            wx: 0.5,
            wxi: 0.5,
            chirp: 0.0,
            kx: 0.0,
            c: Complex64::new(1.0, 0.0),
        }]);
        assert!(lemma3_ratio(&Potential::zero(), &Window::gaussian(), 0.0, 0.0, &bump).unwrap().is_finite());
    }

    fn small_family() -> (crate::field::GridSpec, SampledField) {
        let grid = make_grid(1, 512, 24.0).unwrap();
        let u0 = sample(&grid, &ClosedForm::normalized(vec![0.0], 1.0, vec![1.0])).unwrap();
        (grid, u0)
    }

    #[test]
    fn quotient_homogeneous_and_monotone() {
        let (_, u0) = small_family();
        let pair = AdmissiblePair::new(1, 4.0, 8.0).unwrap();
        let opts = QuotientOptions { samples: 129, ..Default::default() };
        let q = strichartz_quotient_with(&PropagatorSpec::Free, &u0, 0.5, &pair, false, &opts).unwrap();
        let q2 = strichartz_quotient_with(&PropagatorSpec::Free, &u0.scale(Complex64::new(0.0, -3.0)), 0.5, &pair, false, &opts)
            .unwrap();
        assert!((q - q2).abs() < 1e-12 * q);
        let half = strichartz_quotient(&PropagatorSpec::Free, &u0, 0.25, &pair, false).unwrap();
        assert!(half <= q);
        assert!(strichartz_quotient(&PropagatorSpec::Free, &u0, 0.5, &pair, true).is_err());
        let few = QuotientOptions { samples: 33, ..Default::default() };
        assert!(strichartz_quotient_with(&PropagatorSpec::Free, &u0, 0.5, &pair, false, &few).is_err());
    }

    #[test]
    fn stark_quotient_matches_free() {
        let (_, u0) = small_family();
        let pair = AdmissiblePair::new(1, 4.0, 8.0).unwrap();
        let inf = AdmissiblePair::new(1, 2.0, f64::INFINITY).unwrap();
        let a = strichartz_quotient(&PropagatorSpec::Stark { field: 1.0 }, &u0, 0.5, &pair, false).unwrap();
        let b = strichartz_quotient(&PropagatorSpec::Free, &u0, 0.5, &pair, false).unwrap();
        assert!((a - b).abs() < 1e-3 * b, "{a} {b}");
        let a = strichartz_quotient(&PropagatorSpec::Stark { field: 1.0 }, &u0, 0.5, &inf, false).unwrap();
        let b = strichartz_quotient(&PropagatorSpec::Free, &u0, 0.5, &inf, false).unwrap();
        assert!((a - b).abs() < 1e-4 * b, "{a} {b}");
    }

    #[test]
    fn splitstep_trajectory_matches_direct() {
        let (_, u0) = small_family();
        let spec = PropagatorSpec::Splitstep { potential: crate::potentials::PotentialSpec::Zero, dt: 0.01 };
        let traj = trajectory(&spec, &u0, 0.5, 9).unwrap();
        for (t, u) in &traj {
            let exact = PropagatorSpec::Free.apply(&u0, *t).unwrap();
            assert!(u.rel_l2_error(&exact).unwrap() < 1e-12);
        }
    }

    fn forcing(u0: &SampledField, a: f64, b: f64, count: usize) -> Vec<(f64, SampledField)> {
        uniform_times(a, b, count)
            .into_iter()
            .map(|s| (s, u0.scale(Complex64::new((1.0 + s).cos(), 0.0))))
            .collect()
    }

    #[test]
    fn retarded_and_dual_zero_and_homogeneous() {
        let (_, u0) = small_family();
        let pair = AdmissiblePair::new(1, 4.0, 8.0).unwrap();
        let z = Potential::zero();
        let zero: Vec<(f64, SampledField)> = uniform_times(0.0, 0.5, 17).into_iter().map(|s| (s, u0.scale(Complex64::new(0.0, 0.0)))).collect();
        assert_eq!(retarded_quotient(&z, &zero, 0.5, &pair, &pair).unwrap(), 0.0);
        assert_eq!(dual_quotient(&z, &zero, 0.5, &pair).unwrap(), 0.0);
        let f = forcing(&u0, 0.0, 0.5, 17);
        let f3: Vec<_> = f.iter().map(|(s, u)| (*s, u.scale(Complex64::new(3.0, 1.0)))).collect();
        let a = retarded_quotient(&z, &f, 0.5, &pair, &pair).unwrap();
        let b = retarded_quotient(&z, &f3, 0.5, &pair, &pair).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 1e-10 * a);
        let a = dual_quotient(&z, &f, 0.5, &pair).unwrap();
        let b = dual_quotient(&z, &f3, 0.5, &pair).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn retarded_recursion_matches_direct_sum() {
        // trapezoid ∫₀^t U(t-s)F(s)ds at the final time, summed term by term
        let (_, u0) = small_family();
        let z = Potential::zero();
        let f = forcing(&u0, 0.0, 0.4, 9);
        let dt = 0.05;
        let t_end = 0.4;
        let mut direct = u0.scale(Complex64::new(0.0, 0.0));
        for (i, (s, fs)) in f.iter().enumerate() {
            let w = if i == 0 || i == 8 { 0.5 * dt } else { dt };
            direct = direct.axpy(Complex64::new(w, 0.0), &PropagatorSpec::Free.apply(fs, t_end - s).unwrap()).unwrap();
        }
        let w = retarded_trajectory(&z, &f, dt, 1e-3).unwrap();
        assert!(w.last().unwrap().1.rel_l2_error(&direct).unwrap() < 1e-12);
        assert_eq!(w[0].1.norm_l2(), 0.0);
    }

    #[test]
    fn dual_single_snapshot() {
        // F concentrated at one time: ∫U(-s)F ds = w·U(-s₀)f, whose L² norm is w‖f‖₂
        let (_, u0) = small_family();
        let z = Potential::zero();
        let times = uniform_times(-0.5, 0.5, 11);
        let f: Vec<_> = times
            .iter()
            .map(|&s| (s, u0.scale(Complex64::new(if (s - 0.2).abs() < 1e-12 { 1.0 } else { 0.0 }, 0.0))))
            .collect();
        let pair = AdmissiblePair::new(1, 4.0, 8.0).unwrap();
        let q = dual_quotient(&z, &f, 0.5, &pair).unwrap();
        let den = time_mixed_norm(&f, conjugate(4.0), &SpatialNorm::dual(4.0, RowSampling::exact())).unwrap();
        assert!((q * den - 0.1 * u0.norm_l2()).abs() < 1e-10);
    }
}

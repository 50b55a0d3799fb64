//! The parametrix U₀(t) = V_{g(t)}* M(t,0) Φ_{-t} V_g, the remainder operators
//! R̃(s) and R(t,s) = V_{g(t)}* M(t,s) Φ_{s-t} R̃(s), the defect (i∂_t - H)U₀(t),
//! and the residual of U(t) = U₀(t) - i∫₀^t R(t,s)U(s) ds.
//!
//! Here (Φ_τ F)(z) = F(Φ(τ)z) and M(t,s)(z) = exp(-i∫_{s-t}^0 h(Φ(σ)z) dσ) with
//! h = ξ²/2 + V(x) - V′(x)x. The remainder kernel is the full second-order
//! Taylor remainder Rem(x, y) = V(y) - V(x) - V′(x)(y - x).

use super::splitstep_prop;
use crate::error::{Error, Result};
use crate::field::{self, SampledField};
use crate::hamflow::{flow_samples, flow_unchecked};
use crate::lattice::{flowed_box, synthesize, Analyzer, Column, PhaseBox, SynthesisLattice};
use crate::potentials::{constant_m, LemmaConstants, Potential};
use crate::quadrature::gauss_legendre;
use crate::stft::{evolved_window, PhaseSpaceField, Window, WINDOW_EPS};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

/// Default Strang step for the reference U(s) inside the Duhamel residual.
pub const DEFAULT_SPLIT_DT: f64 = 2e-4;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// How trajectories are discretized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FlowStepping {
    /// Verlet steps no longer than the given size.
    MaxStep(f64),
    /// Exactly this many steps (rounded up to even) per stop, whatever the time.
    Fixed(usize),
}

/// exp(-i∫_s^t h(τ - t; x, ξ) dτ) along the trajectory through (x, ξ).
pub fn phase_multiplier(t: f64, s: f64, potential: &Potential, x: f64, xi: f64) -> Complex64 {
    let dt = base_flow_dt(potential) / 16.0;
    let (_, _, phase) = flow_samples(potential, x, xi, &[s - t], dt)[0];
    Complex64::from_polar(1.0, phase)
}

/// Default flow step 1/(64(1 + M)).
fn base_flow_dt(potential: &Potential) -> f64 {
    1.0 / (64.0 * (1.0 + constant_m(potential, 1)))
}

/// R̃(s)u on the full (x_j, ξ_k) grid with the Taylor remainder written as
/// ∫₀¹(1-θ)V″(x + θ(y-x))dθ·(y-x)² and the θ-integral done by 16-point Gauss–Legendre.
pub fn taylor_stft(u: &SampledField, s: f64, potential: &Potential, window: &Window) -> Result<PhaseSpaceField> {
    u.require_decay()?;
    let grid = *u.grid();
    if grid.dim() != 1 {
        return Err(Error::Unsupported("phase-space transport is one-dimensional".into()));
    }
    let gs = evolved_window(window, s)?;
    let n = grid.points_per_axis();
    if potential.is_zero_hessian() {
        return PhaseSpaceField::zeros(grid);
    }
    let (theta, wts) = gauss_legendre(16, 0.0, 1.0);
    let (r, table) = gs.offset_table(grid.spacing(), WINDOW_EPS);
    let vals = u.values();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = grid.coord(j);
            let mut buf = vec![ZERO; n];
            for m in j.saturating_sub(r)..=(j + r).min(n - 1) {
                let d = grid.coord(m) - x;
                let rem: f64 = theta.iter().zip(&wts).map(|(th, w)| w * (1.0 - th) * potential.hess(x + th * d)).sum();
                buf[m] = table[m + r - j].conj() * vals[m] * (rem * d * d);
            }
            field::transform(&grid, &mut buf, false);
            buf
        })
        .collect();
    PhaseSpaceField::new(grid, rows.concat())
}

/// Outcome of one Duhamel residual evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DuhamelReport {
    pub t: f64,
    pub nodes: usize,
    pub points: usize,
    /// ‖U(t)u₀ - U₀(t)u₀ + i Σ w_k R(t,s_k)U(s_k)u₀‖₂ / ‖u₀‖₂.
    pub residual: f64,
    /// ‖U(t)u₀ - U₀(t)u₀‖₂ / ‖u₀‖₂, what the correction has to account for.
    pub parametrix_gap: f64,
}

/// Central-difference check of (i∂_t - H)U₀(t)f = 𝓡(t)f at two step sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectCheck {
    pub t: f64,
    pub deltas: (f64, f64),
    pub errors: (f64, f64),
    /// log₂ of the error ratio; 2 for a consistent defect with δ₁ = 2δ₂.
    pub order: f64,
    /// ‖𝓡(t)f‖₂ / ‖f‖₂.
    pub defect_norm: f64,
}

/// One analysis source: a stop time τ, the weight, and the field analyzer.
struct Source<'a> {
    tau: f64,
    weight: Complex64,
    analyzer: Analyzer<'a>,
}

/// Phase-space parametrix for a potential.
#[derive(Clone, Debug)]
pub struct Parametrix {
    potential: Potential,
    window: Window,
    horizon: f64,
    stepping: FlowStepping,
}

impl Parametrix {
    /// Gaussian window, horizon min(T₁, T₂), flow steps of 1/(64(1+M)).
    pub fn new(potential: Potential) -> Self {
        let horizon = LemmaConstants::of(&potential, 1).horizon();
        let stepping = FlowStepping::MaxStep(base_flow_dt(&potential));
        Parametrix { potential, window: Window::gaussian(), horizon, stepping }
    }

    /// Allow times up to `horizon`. The operator identities hold at every t; the
    /// default horizon only marks where the lemma estimates are proved.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    /// Flow step 1/(64(1+M))/2^level.
    pub fn with_flow_level(mut self, level: u32) -> Self {
        self.stepping = FlowStepping::MaxStep(base_flow_dt(&self.potential) / f64::powi(2.0, level as i32));
        self
    }

    pub fn with_stepping(mut self, stepping: FlowStepping) -> Self {
        self.stepping = stepping;
        self
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn stepping(&self) -> FlowStepping {
        self.stepping
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t.abs() <= self.horizon) {
            return Err(Error::HorizonViolation { t, horizon: self.horizon });
        }
        Ok(())
    }

    fn box_dt(&self) -> f64 {
        match self.stepping {
            FlowStepping::MaxStep(dt) => dt,
            FlowStepping::Fixed(_) => base_flow_dt(&self.potential),
        }
    }

    /// (x, ξ, ∫₀^τ h) at each stop τ, ordered by increasing |τ|.
    fn trajectory(&self, x: f64, eta: f64, stops: &[f64]) -> Vec<(f64, f64, f64)> {
        match self.stepping {
            FlowStepping::MaxStep(dt) => flow_samples(&self.potential, x, eta, stops, dt),
            FlowStepping::Fixed(steps) => stops
                .iter()
                .map(|&tau| {
                    if tau == 0.0 {
                        (x, eta, 0.0)
                    } else {
                        let fp = flow_unchecked(&self.potential, tau, x, eta, (steps + steps % 2).max(2));
                        (fp.x, fp.xi, fp.phase)
                    }
                })
                .collect(),
        }
    }

    /// Σ_k w_k e^{i∫₀^{τ_k} h} A_k(Φ(τ_k)z) on every lattice node z that can see a source.
    fn lattice_data(&self, lat: &SynthesisLattice, sources: &[Source]) -> Vec<Column> {
        if sources.is_empty() {
            return Vec::new();
        }
        let dt = self.box_dt();
        let target = sources
            .iter()
            .map(|s| flowed_box(&self.potential, s.analyzer.region(), -s.tau, dt))
            .reduce(|a, b| a.union(&b))
            .expect("nonempty");
        let Some((xs, ks)) = lat.ranges(&target) else { return Vec::new() };
        let stops: Vec<f64> = sources.iter().map(|s| s.tau).collect();
        let regions: Vec<PhaseBox> = sources.iter().map(|s| *s.analyzer.region()).collect();
        let n_xi = lat.n_xi();
        xs.into_par_iter()
            .filter_map(|a| {
                let x = lat.x(a);
                let mut values = vec![ZERO; n_xi];
                let mut any = false;
                for b in ks.clone() {
                    let traj = self.trajectory(x, lat.eta(b), &stops);
                    let mut acc = ZERO;
                    for ((src, region), &(y, k, phase)) in sources.iter().zip(&regions).zip(&traj) {
                        if region.contains(y, k) {
                            acc += src.weight * Complex64::from_polar(1.0, phase) * src.analyzer.eval(y, k);
                        }
                    }
                    if acc != ZERO {
                        values[b] = acc;
                        any = true;
                    }
                }
                any.then_some(Column { a, values })
            })
            .collect()
    }

    fn lattice_for(&self, f: &SampledField, windows: &[Window]) -> Result<SynthesisLattice> {
        let r = windows.iter().map(|w| w.radius(WINDOW_EPS)).fold(0.0, f64::max);
        SynthesisLattice::choose(f.grid(), r)
    }

    /// Lattice data M(t,0)·(V_g f)∘Φ(-t) shared by U₀ and the defect.
    fn transported(&self, f: &SampledField, t: f64) -> Result<(SynthesisLattice, Window, Vec<Column>)> {
        self.check_time(t)?;
        f.require_decay()?;
        let gt = evolved_window(&self.window, t)?;
        let lat = self.lattice_for(f, &[self.window, gt])?;
        let sources: Vec<Source> = Analyzer::new(f, &self.window, None)?
            .map(|analyzer| Source { tau: -t, weight: Complex64::new(1.0, 0.0), analyzer })
            .into_iter()
            .collect();
        let cols = self.lattice_data(&lat, &sources);
        Ok((lat, gt, cols))
    }

    /// U₀(t)f.
    pub fn u0(&self, f: &SampledField, t: f64) -> Result<SampledField> {
        let (lat, gt, cols) = self.transported(f, t)?;
        Ok(f.derived(synthesize(&lat, &cols, &gt, None)))
    }

    /// 𝓡(t)f = (i∂_t - H)U₀(t)f = -∬ g(t, y-x) Rem(x, y) M(t,0)(V_g f)(Φ(-t)(x,ξ)) e^{iyξ} dx đξ.
    pub fn defect(&self, f: &SampledField, t: f64) -> Result<SampledField> {
        Ok(self.u0_and_defect(f, t)?.1)
    }

    /// U₀(t)f and 𝓡(t)f from one set of transported lattice data.
    pub fn u0_and_defect(&self, f: &SampledField, t: f64) -> Result<(SampledField, SampledField)> {
        let (lat, gt, cols) = self.transported(f, t)?;
        let u = f.derived(synthesize(&lat, &cols, &gt, None));
        let d = if self.potential.is_zero_hessian() {
            f.derived(vec![ZERO; f.values().len()])
        } else {
            f.derived(synthesize(&lat, &cols, &gt, Some(&self.potential)))
        };
        Ok((u, d))
    }

    /// R(t,s)u.
    pub fn remainder(&self, u: &SampledField, t: f64, s: f64) -> Result<SampledField> {
        self.check_time(t)?;
        self.check_time(s)?;
        u.require_decay()?;
        if self.potential.is_zero_hessian() {
            return Ok(u.derived(vec![ZERO; u.values().len()]));
        }
        let gs = evolved_window(&self.window, s)?;
        let gt = evolved_window(&self.window, t)?;
        let lat = self.lattice_for(u, &[gs, gt])?;
        let sources: Vec<Source> = Analyzer::new(u, &gs, Some(&self.potential))?
            .map(|analyzer| Source { tau: s - t, weight: Complex64::new(1.0, 0.0), analyzer })
            .into_iter()
            .collect();
        let cols = self.lattice_data(&lat, &sources);
        Ok(u.derived(synthesize(&lat, &cols, &gt, None)))
    }

        /// Compare the defect against central differences of U₀ at δ₁ and δ₂.
    pub fn defect_check(&self, f: &SampledField, t: f64, d1: f64, d2: f64) -> Result<DefectCheck> {
        let (u, d) = self.u0_and_defect(f, t)?;
        let hu = apply_hamiltonian(&u, &self.potential);
        let err = |delta: f64| -> Result<f64> {
            let plus = self.u0(f, t + delta)?;
            let minus = self.u0(f, t - delta)?;
            let dt = plus.sub(&minus)?.scale(Complex64::new(0.0, 1.0 / (2.0 * delta)));
            Ok(dt.sub(&hu)?.sub(&d)?.norm_l2())
        };
        let errors = (err(d1)?, err(d2)?);
        let order = (errors.0 / errors.1).ln() / (d1 / d2).ln();
        let norm = f.norm_l2();
        if norm == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(DefectCheck { t, deltas: (d1, d2), errors, order, defect_norm: d.norm_l2() / norm })
    }

/// Residual of U(t)u₀ = U₀(t)u₀ - i∫₀^t R(t,s)U(s)u₀ ds with `k` Gauss–Legendre
    /// nodes and U(s) from certified split-step at `split_dt`.
    pub fn duhamel_residual(&self, u0: &SampledField, t: f64, k: usize, split_dt: f64) -> Result<DuhamelReport> {
        self.check_time(t)?;
        u0.require_decay()?;
        let norm = u0.norm_l2();
        let points = u0.grid().points_per_axis();
        if t == 0.0 || norm == 0.0 {
            return Ok(DuhamelReport { t, nodes: k, points, residual: 0.0, parametrix_gap: 0.0 });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one quadrature node".into()));
        }
        let (nodes, weights) = gauss_legendre(k, 0.0, t);
        let order: Vec<usize> = if t > 0.0 { (0..k).collect() } else { (0..k).rev().collect() };
        // U(s_k)u₀ in order of increasing |s|
        let mut states = vec![None; k];
        let mut current = u0.clone();
        let mut s_now = 0.0;
        for &i in &order {
            current = splitstep_prop(&current, nodes[i] - s_now, &self.potential, split_dt)?;
            s_now = nodes[i];
            states[i] = Some(current.clone());
        }
        let exact = splitstep_prop(&current, t - s_now, &self.potential, split_dt)?;
        let approx = self.u0(u0, t)?;
        let gap = exact.sub(&approx)?;
        let correction = if self.potential.is_zero_hessian() {
            u0.derived(vec![ZERO; u0.values().len()])
        } else {
            let windows: Vec<Window> =
                nodes.iter().map(|&s| evolved_window(&self.window, s)).collect::<Result<_>>()?;
            let gt = evolved_window(&self.window, t)?;
            let mut all = windows.clone();
            all.push(gt);
            let lat = self.lattice_for(u0, &all)?;
            // stops τ_k = s_k - t by increasing |τ|
            let mut sources = Vec::with_capacity(k);
            for &i in order.iter().rev() {
                let u = states[i].as_ref().expect("filled above");
                if let Some(analyzer) = Analyzer::new(u, &windows[i], Some(&self.potential))? {
                    sources.push(Source { tau: nodes[i] - t, weight: Complex64::new(weights[i], 0.0), analyzer });
                }
            }
            let cols = self.lattice_data(&lat, &sources);
            u0.derived(synthesize(&lat, &cols, &gt, None))
        };
        let residual = gap.axpy(Complex64::new(0.0, 1.0), &correction)?;
        Ok(DuhamelReport {
            t,
            nodes: k,
            points,
            residual: residual.norm_l2() / norm,
            parametrix_gap: gap.norm_l2() / norm,
        })
    }
}

/// H u = -u″/2 + V u, spectrally.
pub fn apply_hamiltonian(u: &SampledField, potential: &Potential) -> SampledField {
    let grid = *u.grid();
    let mut spec = field::fourier(u).into_values();
    for (i, v) in spec.iter_mut().enumerate() {
        let xi = grid.freq(i);
        *v *= 0.5 * xi * xi;
    }
    let kinetic = field::inv_fourier(&SampledField::with_domain(grid, field::Domain::Frequency, spec).expect("finite"));
    let values = kinetic
        .values()
        .iter()
        .zip(u.values())
        .enumerate()
        .map(|(m, (k, v))| k + v * potential.value(grid.coord(m)))
        .collect();
    u.derived(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, sample, ClosedForm};
    use crate::propagate::{free_prop, harmonic_prop_factorized, stark_prop};
    use crate::stft::stft;

    fn data(n: usize) -> SampledField {
        let grid = make_grid(1, n, 32.0).unwrap();
        sample(&grid, &ClosedForm::normalized(vec![0.5], 1.0, vec![1.0])).unwrap()
    }

    #[test]
    fn phase_multiplier_free_and_unimodular() {
        let z = Potential::zero();
        let m = phase_multiplier(0.3, 0.1, &z, 1.0, 2.0);
        assert!((m - Complex64::from_polar(1.0, -0.2 * 4.0 / 2.0)).norm() < 1e-12);
        let c = Potential::cosine();
        assert!((phase_multiplier(0.2, -0.1, &c, 0.4, -1.0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phase_multiplier_cocycle() {
        // M(t,s)(z)·M(s,r)(Φ(s-t)z) = M(t,r)(z)
        let c = Potential::quad_plus_trig();
        let (t, s, r) = (0.2, 0.05, -0.1);
        let (x, xi) = (0.3, 1.1);
        let dt = base_flow_dt(&c) / 16.0;
        let (y, k, _) = flow_samples(&c, x, xi, &[s - t], dt)[0];
        let lhs = phase_multiplier(t, s, &c, x, xi) * phase_multiplier(s, r, &c, y, k);
        assert!((lhs - phase_multiplier(t, r, &c, x, xi)).norm() < 1e-8);
    }

    #[test]
    fn u0_identity_at_zero_time() {
        let f = data(1024);
        let p = Parametrix::new(Potential::cosine());
        let u = p.u0(&f, 0.0).unwrap();
        assert!(u.rel_l2_error(&f).unwrap() < 1e-8);
    }

    #[test]
    fn u0_exact_for_free_and_stark() {
        let f = data(1024);
        for t in [0.05, 0.1] {
            let u = Parametrix::new(Potential::zero()).u0(&f, t).unwrap();
            assert!(u.rel_l2_error(&free_prop(&f, t).unwrap()).unwrap() < 1e-6);
            let u = Parametrix::new(Potential::stark(1.0)).u0(&f, t).unwrap();
            assert!(u.rel_l2_error(&stark_prop(&f, t, 1.0).unwrap()).unwrap() < 1e-6);
        }
    }

    #[test]
    fn horizon_enforced_and_overridable() {
        let f = data(1024);
        let p = Parametrix::new(Potential::harmonic());
        assert!(matches!(p.u0(&f, 0.1), Err(Error::HorizonViolation { .. })));
        assert!(p.with_horizon(0.25).u0(&f, 0.1).is_ok());
    }

    #[test]
    fn harmonic_u0_close_to_exact() {
        // the parametrix is not exact for curved potentials but stays close at short times
        let f = data(1024);
        let p = Parametrix::new(Potential::harmonic()).with_horizon(0.25);
        let u = p.u0(&f, 0.05).unwrap();
        let exact = harmonic_prop_factorized(&f, 0.05, 1.0).unwrap();
        let gap = u.rel_l2_error(&exact).unwrap();
        assert!(gap > 1e-8 && gap < 0.05, "{gap}");
    }

    #[test]
    fn taylor_stft_harmonic_closed_form() {
        let grid = make_grid(1, 256, 16.0).unwrap();
        let f = sample(&grid, &ClosedForm::modulated(0.2, 1.0, 0.5)).unwrap();
        let w = Window::gaussian();
        let s = 0.1;
        let r = taylor_stft(&f, s, &Potential::harmonic(), &w).unwrap();
        // harmonic: Rem(x, y) = (y - x)²/2
        let gs = evolved_window(&w, s).unwrap();
        for &(j, k) in &[(128usize, 128usize), (120, 140), (140, 100)] {
            let (x, xi) = (grid.coord(j), grid.freq(k));
            let direct: Complex64 = (0..256)
                .map(|m| {
                    let y = grid.coord(m);
                    0.5 * (y - x).powi(2) * gs.eval(y - x).conj() * f.values()[m] * Complex64::from_polar(1.0, -y * xi)
                })
                .sum::<Complex64>()
                * grid.spacing();
            assert!((r.at(j, k) - direct).norm() < 1e-10);
        }
        let z = taylor_stft(&f, s, &Potential::stark(2.0), &w).unwrap();
        assert!(z.values().iter().all(|v| *v == ZERO));
        let lin = taylor_stft(&f.scale(Complex64::new(0.0, 2.0)), s, &Potential::cosine(), &w).unwrap();
        let base = taylor_stft(&f, s, &Potential::cosine(), &w).unwrap();
        assert!(lin.max_abs_diff(&base.scale(Complex64::new(0.0, 2.0))).unwrap() < 1e-12);
    }

    #[test]
    fn taylor_stft_matches_lattice_analysis() {
        let grid = make_grid(1, 256, 16.0).unwrap();
        let f = sample(&grid, &ClosedForm::modulated(0.2, 1.0, 0.5)).unwrap();
        let w = Window::gaussian();
        let pot = Potential::cosine();
        let r = taylor_stft(&f, 0.0, &pot, &w).unwrap();
        let an = Analyzer::new(&f, &w, Some(&pot)).unwrap().unwrap();
        for &(j, k) in &[(128usize, 128usize), (110, 150)] {
            assert!((r.at(j, k) - an.eval(grid.coord(j), grid.freq(k))).norm() < 1e-12);
        }
    }

    #[test]
    fn remainder_zero_hessian_and_linear() {
        let f = data(1024);
        let zero = Parametrix::new(Potential::stark(1.0)).remainder(&f, 0.1, 0.05).unwrap();
        assert_eq!(zero.norm_l2(), 0.0);
        let p = Parametrix::new(Potential::cosine()).with_horizon(0.25);
        let a = p.remainder(&f, 0.1, 0.05).unwrap();
        let b = p.remainder(&f.scale(Complex64::new(2.0, -1.0)), 0.1, 0.05).unwrap();
        assert!(b.rel_l2_error(&a.scale(Complex64::new(2.0, -1.0))).unwrap() < 1e-12);
        assert!(a.norm_l2() > 0.0);
    }

    #[test]
    fn remainder_at_equal_times_is_adjoint_of_taylor_stft() {
        // R(t,t) = V_{g(t)}* R̃(t)
        let grid = make_grid(1, 256, 16.0).unwrap();
        let f = sample(&grid, &ClosedForm::modulated(0.0, 1.0, 0.0)).unwrap();
        let pot = Potential::harmonic();
        let p = Parametrix::new(pot.clone()).with_horizon(0.25);
        let t = 0.05;
        let r = p.remainder(&f, t, t).unwrap();
        let big = taylor_stft(&f, t, &pot, &Window::gaussian()).unwrap();
        let reference = crate::stft::adjoint_stft(&big, &evolved_window(&Window::gaussian(), t).unwrap()).unwrap();
        assert!(r.rel_l2_error(&reference).unwrap() < 1e-9);
    }

    #[test]
    fn defect_finite_difference() {
        let f = data(1024);
        let p = Parametrix::new(Potential::harmonic()).with_horizon(0.25).with_stepping(FlowStepping::Fixed(400));
        let t = 0.1;
        let c = p.defect_check(&f, t, 0.02, 0.01).unwrap();
        assert!(c.order > 1.8, "{c:?}");
        assert!(c.defect_norm > 0.0);
        let z = Parametrix::new(Potential::zero()).defect(&f, 0.1).unwrap();
        assert_eq!(z.norm_l2(), 0.0);
    }

    #[test]
    fn duhamel_free_and_zero_time() {
        let f = data(1024);
        let p = Parametrix::new(Potential::zero());
        assert_eq!(p.duhamel_residual(&f, 0.0, 8, 1e-3).unwrap().residual, 0.0);
        let r = p.duhamel_residual(&f, 0.2, 8, 1e-3).unwrap();
        assert!(r.residual < 1e-6, "{r:?}");
    }

    #[test]
    fn hop_one_u0_matches_full_grid_formula() {
        let grid = make_grid(1, 256, 16.0).unwrap();
        let f = sample(&grid, &ClosedForm::modulated(0.0, 1.0, 0.5)).unwrap();
        let pot = Potential::cosine();
        let t = 0.05;
        let p = Parametrix::new(pot.clone());
        let u = p.u0(&f, t).unwrap();
        // direct: M(t,0)·V_g f(Φ(-t)z) on every grid node, then V_{g(t)}*
        let n = 256;
        let dt = base_flow_dt(&pot);
        let vals: Vec<Complex64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (x, xi) = (grid.coord(idx / n), grid.freq(idx % n));
                let (y, k, ph) = flow_samples(&pot, x, xi, &[-t], dt)[0];
                Complex64::from_polar(1.0, ph) * crate::stft::stft_at(&f, &Window::gaussian(), &[y], &[k])
            })
            .collect();
        let big = PhaseSpaceField::new(grid, vals).unwrap();
        let reference = crate::stft::adjoint_stft(&big, &evolved_window(&Window::gaussian(), t).unwrap()).unwrap();
        assert!(u.rel_l2_error(&reference).unwrap() < 1e-9);
        let _ = stft(&f, &Window::gaussian()).unwrap();
    }
}

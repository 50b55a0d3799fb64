//! Hamiltonian flow ẋ = ξ, ξ̇ = -V′(x) by Störmer–Verlet, with the discrete
//! variational Jacobian and the accumulated phase ∫h dτ.

use crate::error::{Error, Result};
use crate::potentials::{compute_t1, constant_m, Potential};
use crate::quadrature::simpson_sum;
use serde::Serialize;

/// Endpoint of a trajectory with its Jacobian ∂(x, ξ)/∂(x₀, ξ₀) and phase ∫₀^t h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowPoint {
    pub t: f64,
    pub x: f64,
    pub xi: f64,
    pub jacobian: [[f64; 2]; 2],
    pub phase: f64,
}

/// Smallest admissible step count ceil(64|t|(1+M)).
pub fn required_steps(potential: &Potential, t: f64) -> usize {
    (64.0 * t.abs() * (1.0 + constant_m(potential, 1))).ceil() as usize
}

/// The required count rounded up to an even number (at least 2).
pub fn default_steps(potential: &Potential, t: f64) -> usize {
    even(required_steps(potential, t).max(2))
}

fn even(n: usize) -> usize {
    n + n % 2
}

/// One kick-drift-kick step; returns the new state and the step's Jacobian.
#[inline]
fn verlet_step(potential: &Potential, x: f64, xi: f64, dt: f64) -> (f64, f64, [[f64; 2]; 2]) {
    let half = 0.5 * dt;
    let p = xi - half * potential.grad(x);
    let x1 = x + dt * p;
    let xi1 = p - half * potential.grad(x1);
    // K(x₁)·D·K(x) with K = [[1,0],[-(dt/2)V″,1]], D = [[1,dt],[0,1]]
    let k0 = -half * potential.hess(x);
    let k1 = -half * potential.hess(x1);
    let a = 1.0 + dt * k0;
    let m = [[a, dt], [k1 * a + k0, k1 * dt + 1.0]];
    (x1, xi1, m)
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Flow (x₀, ξ₀) for time t (either sign) with the given number of Verlet steps.
/// Odd step counts are raised by one so Simpson's rule applies to the phase.
pub fn flow(potential: &Potential, t: f64, x0: f64, xi0: f64, steps: usize) -> Result<FlowPoint> {
    if !t.is_finite() || !x0.is_finite() || !xi0.is_finite() {
        return Err(Error::InvalidArgument("flow needs finite time and initial data".into()));
    }
    let required = required_steps(potential, t);
    if steps < required {
        return Err(Error::StepBudget { steps, required });
    }
    if t == 0.0 {
        return Ok(FlowPoint { t, x: x0, xi: xi0, jacobian: [[1.0, 0.0], [0.0, 1.0]], phase: 0.0 });
    }
    Ok(flow_unchecked(potential, t, x0, xi0, even(steps.max(2))))
}

pub(crate) fn flow_unchecked(potential: &Potential, t: f64, x0: f64, xi0: f64, steps: usize) -> FlowPoint {
    let dt = t / steps as f64;
    let (mut x, mut xi) = (x0, xi0);
    let mut jac = [[1.0, 0.0], [0.0, 1.0]];
    let mut h = Vec::with_capacity(steps + 1);
    h.push(potential.phase_density(x, xi));
    for _ in 0..steps {
        let (x1, xi1, m) = verlet_step(potential, x, xi, dt);
        jac = mat_mul(&m, &jac);
        x = x1;
        xi = xi1;
        h.push(potential.phase_density(x, xi));
    }
    FlowPoint { t, x, xi, jacobian: jac, phase: simpson_sum(&h, dt) }
}

/// Flow with the default step count.
pub fn flow_default(potential: &Potential, t: f64, x0: f64, xi0: f64) -> FlowPoint {
    if t == 0.0 {
        return FlowPoint { t, x: x0, xi: xi0, jacobian: [[1.0, 0.0], [0.0, 1.0]], phase: 0.0 };
    }
    flow_unchecked(potential, t, x0, xi0, default_steps(potential, t))
}

/// State (x, ξ, ∫₀^τ h) at every requested time τ along one trajectory.
///
/// Times must share one sign (zero allowed) and be ordered by increasing |τ|.
/// Each segment between consecutive stops takes an even number of steps no
/// longer than `dt_max`, so the phase stays Simpson-accurate at every stop.
pub fn flow_samples(potential: &Potential, x0: f64, xi0: f64, times: &[f64], dt_max: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(times.len());
    let (mut x, mut xi, mut phase, mut now) = (x0, xi0, 0.0, 0.0);
    let mut h = Vec::new();
    for &target in times {
        let span = target - now;
        debug_assert!(span * target >= 0.0, "stops must move away from 0 monotonically");
        if span != 0.0 {
            let steps = even(((span.abs() / dt_max).ceil() as usize).max(2));
            let dt = span / steps as f64;
            h.clear();
            h.push(potential.phase_density(x, xi));
            for _ in 0..steps {
                let half = 0.5 * dt;
                let p = xi - half * potential.grad(x);
                x += dt * p;
                xi = p - half * potential.grad(x);
                h.push(potential.phase_density(x, xi));
            }
            phase += simpson_sum(&h, dt);
            now = target;
        }
        out.push((x, xi, phase));
    }
    out
}

/// Plain trajectory endpoint without Jacobian or phase, for box flows.
pub(crate) fn flow_endpoint(potential: &Potential, t: f64, x0: f64, xi0: f64, dt_max: f64) -> (f64, f64) {
    if t == 0.0 {
        return (x0, xi0);
    }
    let steps = ((t.abs() / dt_max).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let (mut x, mut xi) = (x0, xi0);
    for _ in 0..steps {
        let half = 0.5 * dt;
        let p = xi - half * potential.grad(x);
        x += dt * p;
        xi = p - half * potential.grad(x);
    }
    (x, xi)
}

/// Determinant of the variational matrix.
pub fn flow_det(fp: &FlowPoint) -> f64 {
    let j = &fp.jacobian;
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// det ∂x(t; x, ξ/t)/∂ξ, i.e. X(t)/t for the variational data (X, Ξ)(0) = (0, 1);
/// returns the continuum limit 1 for |t| < 1e-6.
pub fn scaled_det(potential: &Potential, t: f64, x: f64, xi: f64, steps: usize) -> Result<f64> {
    if t.abs() < 1e-6 {
        return Ok(1.0);
    }
    let fp = flow(potential, t, x, xi / t, steps)?;
    Ok(fp.jacobian[0][1] / t)
}

/// (x, ξ, z, η) for the separation inequalities.
pub type Tuple = [f64; 4];

/// Outcome of checking both separation inequalities and the Gronwall bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemhReport {
    pub t: f64,
    pub t1: f64,
    pub checked: usize,
    pub position_violations: usize,
    pub momentum_violations: usize,
    pub gronwall_violations: usize,
    /// Smallest lhs - rhs over both inequalities.
    pub min_margin: f64,
}

impl LemhReport {
    pub fn violations(&self) -> usize {
        self.position_violations + self.momentum_violations + self.gronwall_violations
    }
}

/// Check |x(t)-z(t)| ≥ (5|x-z| - 3|ξ-η|)/6 and |ξ(t)-η(t)| ≥ (|ξ-η| - |x-z|)/2 with
/// slack 1e-9, plus |X(t)|²+|Ξ(t)|² ≤ 2M(|X|²+|Ξ|²)e^{2M|t|}. Refuses |t| ≥ T₁.
pub fn check_lemh(potential: &Potential, t: f64, tuples: &[Tuple]) -> Result<LemhReport> {
    let m = constant_m(potential, 1);
    let t1 = compute_t1(m);
    if !(t.abs() < t1) {
        return Err(Error::HorizonViolation { t, horizon: t1 });
    }
    let slack = 1e-9;
    let steps = default_steps(potential, t);
    let mut report = LemhReport {
        t,
        t1,
        checked: tuples.len(),
        position_violations: 0,
        momentum_violations: 0,
        gronwall_violations: 0,
        min_margin: f64::INFINITY,
    };
    for &[x, xi, z, eta] in tuples {
        let a = flow_unchecked(potential, t, x, xi, steps);
        let b = flow_unchecked(potential, t, z, eta, steps);
        let (dx, dxi) = ((x - z).abs(), (xi - eta).abs());
        let (dx_t, dxi_t) = ((a.x - b.x).abs(), (a.xi - b.xi).abs());
        let pos = dx_t - (5.0 * dx - 3.0 * dxi) / 6.0;
        let mom = dxi_t - 0.5 * (dxi - dx);
        if pos < -slack {
            report.position_violations += 1;
        }
        if mom < -slack {
            report.momentum_violations += 1;
        }
        report.min_margin = report.min_margin.min(pos).min(mom);
        let lhs = dx_t * dx_t + dxi_t * dxi_t;
        let rhs = 2.0 * m * (dx * dx + dxi * dxi) * (2.0 * m * t.abs()).exp();
        if lhs > rhs + slack {
            report.gronwall_violations += 1;
        }
    }
    Ok(report)
}

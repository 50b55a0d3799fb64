//! Potentials with bounded second derivatives and the lemma constants
//! M, T₁, M′, T₂ derived from them. Potentials act on the real line.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Number of points in the Hessian certificate sample.
pub const CERTIFICATE_POINTS: usize = 10_000;
/// Half-width of the certificate sample interval.
pub const CERTIFICATE_RANGE: f64 = 40.0;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Zero,
    Harmonic,
    InvertedHarmonic,
    Stark(f64),
    Cosine,
    QuadPlusTrig,
    Custom { v: ScalarFn, dv: ScalarFn, d2v: ScalarFn },
}

/// Name and parameters selecting a builtin, as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Harmonic,
    InvertedHarmonic,
    Stark { field: f64 },
    Cosine,
    QuadPlusTrig,
}

impl PotentialSpec {
    pub fn build(&self) -> Potential {
        match *self {
            PotentialSpec::Zero => Potential::zero(),
            PotentialSpec::Harmonic => Potential::harmonic(),
            PotentialSpec::InvertedHarmonic => Potential::inverted_harmonic(),
            PotentialSpec::Stark { field } => Potential::stark(field),
            PotentialSpec::Cosine => Potential::cosine(),
            PotentialSpec::QuadPlusTrig => Potential::quad_plus_trig(),
        }
    }
}

/// A real potential V with V, V′, V″ and a certified bound on sup |V″|.
#[derive(Clone)]
pub struct Potential {
    name: String,
    kind: Kind,
    hessian_sup: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({}, sup|V''| = {})", self.name, self.hessian_sup)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl Potential {
    pub fn zero() -> Self {
        Potential { name: "zero".into(), kind: Kind::Zero, hessian_sup: 0.0 }
    }
    /// V = x²/2.
    pub fn harmonic() -> Self {
        Potential { name: "harmonic".into(), kind: Kind::Harmonic, hessian_sup: 1.0 }
    }
    /// V = -x²/2.
    pub fn inverted_harmonic() -> Self {
        Potential { name: "inverted_harmonic".into(), kind: Kind::InvertedHarmonic, hessian_sup: 1.0 }
    }
    /// V = E·x.
    pub fn stark(e: f64) -> Self {
        Potential { name: format!("stark({e})"), kind: Kind::Stark(e), hessian_sup: 0.0 }
    }
    /// V = cos x.
    pub fn cosine() -> Self {
        Potential { name: "cosine".into(), kind: Kind::Cosine, hessian_sup: 1.0 }
    }
    /// V = x²/2 + sin x.
    pub fn quad_plus_trig() -> Self {
        Potential { name: "quad_plus_trig".into(), kind: Kind::QuadPlusTrig, hessian_sup: 2.0 }
    }

    /// Every builtin, in a fixed order.
    pub fn builtins() -> Vec<Potential> {
        vec![
            Potential::zero(),
            Potential::harmonic(),
            Potential::inverted_harmonic(),
            Potential::stark(1.0),
            Potential::cosine(),
            Potential::quad_plus_trig(),
        ]
    }

    /// Builtin by name; `stark` takes the field strength E as its only parameter.
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        let no_params = |p: Potential| {
            if params.is_empty() {
                Ok(p)
            } else {
                Err(Error::InvalidArgument(format!("potential '{name}' takes no parameters")))
            }
        };
        match name {
            "zero" => no_params(Potential::zero()),
            "harmonic" => no_params(Potential::harmonic()),
            "inverted_harmonic" => no_params(Potential::inverted_harmonic()),
            "cosine" => no_params(Potential::cosine()),
            "quad_plus_trig" => no_params(Potential::quad_plus_trig()),
            "stark" => match params {
                [e] if e.is_finite() => Ok(Potential::stark(*e)),
                _ => Err(Error::InvalidArgument("stark needs one finite field strength".into())),
            },
            other => Err(Error::UnknownPotential(other.into())),
        }
    }

    /// A user potential; the claimed bound is checked on the certificate sample.
    pub fn custom(
        name: impl Into<String>,
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        hessian_sup: f64,
    ) -> Result<Self> {
        if !(hessian_sup >= 0.0) || !hessian_sup.is_finite() {
            return Err(Error::InvalidArgument(format!("hessian bound {hessian_sup} must be finite and ≥ 0")));
        }
        let pot = Potential {
            name: name.into(),
            kind: Kind::Custom { v: Arc::new(v), dv: Arc::new(dv), d2v: Arc::new(d2v) },
            hessian_sup,
        };
        pot.certify()?;
        Ok(pot)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn hessian_sup(&self) -> f64 {
        self.hessian_sup
    }
    pub fn is_zero_hessian(&self) -> bool {
        matches!(self.kind, Kind::Zero | Kind::Stark(_))
    }
    /// True when a closed-form propagator exists (free, Stark, harmonic, inverted harmonic).
    pub fn has_exact_propagator(&self) -> bool {
        matches!(self.kind, Kind::Zero | Kind::Stark(_) | Kind::Harmonic | Kind::InvertedHarmonic)
    }
    /// Field strength when the potential is linear.
    pub fn stark_field(&self) -> Option<f64> {
        match self.kind {
            Kind::Stark(e) => Some(e),
            Kind::Zero => Some(0.0),
            _ => None,
        }
    }
    /// +1 for the oscillator, -1 for the inverted oscillator.
    pub fn harmonic_sign(&self) -> Option<f64> {
        match self.kind {
            Kind::Harmonic => Some(1.0),
            Kind::InvertedHarmonic => Some(-1.0),
            _ => None,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Harmonic => 0.5 * x * x,
            Kind::InvertedHarmonic => -0.5 * x * x,
            Kind::Stark(e) => e * x,
            Kind::Cosine => x.cos(),
            Kind::QuadPlusTrig => 0.5 * x * x + x.sin(),
            Kind::Custom { v, .. } => v(x),
        }
    }

    pub fn grad(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Harmonic => x,
            Kind::InvertedHarmonic => -x,
            Kind::Stark(e) => *e,
            Kind::Cosine => -x.sin(),
            Kind::QuadPlusTrig => x + x.cos(),
            Kind::Custom { dv, .. } => dv(x),
        }
    }

    pub fn hess(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Zero | Kind::Stark(_) => 0.0,
            Kind::Harmonic => 1.0,
            Kind::InvertedHarmonic => -1.0,
            Kind::Cosine => -x.cos(),
            Kind::QuadPlusTrig => 1.0 - x.sin(),
            Kind::Custom { d2v, .. } => d2v(x),
        }
    }

    /// Second-order Taylor remainder V(y) - V(x) - V′(x)(y - x).
    pub fn taylor_remainder(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            Kind::Zero | Kind::Stark(_) => 0.0,
            Kind::Harmonic => 0.5 * (y - x) * (y - x),
            Kind::InvertedHarmonic => -0.5 * (y - x) * (y - x),
            _ => self.value(y) - self.value(x) - self.grad(x) * (y - x),
        }
    }

    /// h = ξ²/2 + V(x) - V′(x)·x, the phase density along trajectories.
    pub fn phase_density(&self, x: f64, xi: f64) -> f64 {
        0.5 * xi * xi + self.value(x) - self.grad(x) * x
    }

    /// Largest |V″| on the certificate sample.
    pub fn sampled_hessian_max(&self) -> f64 {
        let n = CERTIFICATE_POINTS;
        (0..n)
            .map(|i| {
                let x = -CERTIFICATE_RANGE + 2.0 * CERTIFICATE_RANGE * i as f64 / (n - 1) as f64;
                self.hess(x).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Fail if the sample exceeds the claimed bound.
    pub fn certify(&self) -> Result<()> {
        let observed = self.sampled_hessian_max();
        if observed > self.hessian_sup * (1.0 + 1e-12) + 1e-300 || !observed.is_finite() {
            return Err(Error::Certificate { observed, claimed: self.hessian_sup });
        }
        Ok(())
    }
}

/// M, T₁, M′ and T₂ of the flow lemmas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    pub m: f64,
    pub t1: f64,
    pub mprime: f64,
    pub t2: f64,
}

impl LemmaConstants {
    pub fn of(potential: &Potential, n: usize) -> Self {
        let m = constant_m(potential, n);
        LemmaConstants { m, t1: compute_t1(m), mprime: 1.0 + potential.hessian_sup(), t2: compute_t2(potential, n) }
    }

    /// min(T₁, T₂), the horizon of the parametrix estimates.
    pub fn horizon(&self) -> f64 {
        self.t1.min(self.t2)
    }
}

/// M = 1 + n² sup |∂²V|.
pub fn constant_m(potential: &Potential, n: usize) -> f64 {
    1.0 + (n * n) as f64 * potential.hessian_sup()
}

/// Largest T with 2M^{3/2}e^{MT}T < 1/2 and T < 1/3 (bisection), shrunk by 0.999.
pub fn compute_t1(m: f64) -> f64 {
    assert!(m >= 1.0, "M must be at least 1");
    let lhs = |t: f64| 2.0 * m.powf(1.5) * (m * t).exp() * t;
    let cap = 1.0 / 3.0;
    let root = if lhs(cap) < 0.5 {
        cap
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if lhs(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    root * 0.999
}

/// Largest T with n·M′·T² ≤ 1/4, before the 1/3 cap.
pub fn t2_uncapped(mprime: f64, n: usize) -> f64 {
    (0.25 / (n as f64 * mprime)).sqrt()
}

/// T₂ = min(1/3, (4nM′)^{-1/2}) with M′ = 1 + sup|∂²V|; the cap alone for zero Hessian.
pub fn compute_t2(potential: &Potential, n: usize) -> f64 {
    if potential.hessian_sup() == 0.0 {
        return 1.0 / 3.0;
    }
    t2_uncapped(1.0 + potential.hessian_sup(), n).min(1.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtin_constants() {
        let z = Potential::builtin("zero", &[]).unwrap();
        assert_eq!(z.hessian_sup(), 0.0);
        assert!(z.is_zero_hessian());
        assert_eq!(Potential::harmonic().hessian_sup(), 1.0);
        let s = Potential::builtin("stark", &[2.0]).unwrap();
        assert_eq!(s.hessian_sup(), 0.0);
        assert!(s.has_exact_propagator() && s.is_zero_hessian());
        assert_eq!(constant_m(&z, 1), 1.0);
        assert_eq!(constant_m(&Potential::harmonic(), 1), 2.0);
        assert_eq!(constant_m(&Potential::cosine(), 1), 2.0);
        assert!(matches!(Potential::builtin("quartic", &[]), Err(Error::UnknownPotential(_))));
        assert!(Potential::builtin("stark", &[]).is_err());
    }

    #[test]
    fn t1_matches_bisection_oracle() {
        // independent root of 2^{5/2} T e^{2T} = 1/2 by Newton
        let mut t: f64 = 0.07;
        for _ in 0..50 {
            let f = 2f64.powf(2.5) * t * (2.0 * t).exp() - 0.5;
            let df = 2f64.powf(2.5) * (2.0 * t).exp() * (1.0 + 2.0 * t);
            t -= f / df;
        }
        assert!((compute_t1(2.0) - 0.999 * t).abs() < 1e-10);
        assert!((compute_t1(2.0) - 0.0756).abs() < 5e-4);
        let mut t: f64 = 0.2;
        for _ in 0..50 {
            t -= (2.0 * t * t.exp() - 0.5) / (2.0 * t.exp() * (1.0 + t));
        }
        assert!((compute_t1(1.0) - 0.999 * t.min(1.0 / 3.0)).abs() < 1e-10);
        assert!(compute_t1(4.0) < compute_t1(2.0));
        for m in [1.0, 2.0, 3.0, 10.0] {
            let t1 = compute_t1(m);
            assert!(2.0 * m.powf(1.5) * (m * t1).exp() * t1 < 0.5 && t1 < 1.0 / 3.0);
        }
    }

    #[test]
    fn t2_examples() {
        assert_eq!(compute_t2(&Potential::zero(), 1), 1.0 / 3.0);
        assert_eq!(compute_t2(&Potential::harmonic(), 1), 1.0 / 3.0);
        assert!((t2_uncapped(2.0, 1) - (0.125f64).sqrt()).abs() < 1e-15);
        assert!((t2_uncapped(8.0, 1) - 0.5 * t2_uncapped(2.0, 1)).abs() < 1e-15);
        let qt = compute_t2(&Potential::quad_plus_trig(), 1);
        assert!((qt - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 1e-5;
        for pot in Potential::builtins() {
            for _ in 0..1000 {
                let x: f64 = rng.gen_range(-10.0..10.0);
                let fd = (pot.value(x + d) - pot.value(x - d)) / (2.0 * d);
                let scale = pot.grad(x).abs().max(1.0);
                assert!((fd - pot.grad(x)).abs() <= 1e-6 * scale, "{pot} grad at {x}");
                let fd2 = (pot.grad(x + d) - pot.grad(x - d)) / (2.0 * d);
                let scale = pot.hess(x).abs().max(1.0);
                assert!((fd2 - pot.hess(x)).abs() <= 1e-6 * scale, "{pot} hess at {x}");
            }
        }
    }

    #[test]
    fn certificates_hold_and_catch_lies() {
        for pot in Potential::builtins() {
            pot.certify().unwrap();
        }
        let liar = Potential::custom("quartic", |x| x.powi(4), |x| 4.0 * x.powi(3), |x| 12.0 * x * x, 5.0);
        assert!(matches!(liar, Err(Error::Certificate { .. })));
        let ok = Potential::custom("tanh", |x| x.tanh(), |x| 1.0 / x.cosh().powi(2), |x| {
            -2.0 * x.tanh() / x.cosh().powi(2)
        }, 0.8)
        .unwrap();
        assert!(!ok.has_exact_propagator());
    }

    #[test]
    fn remainder_agrees_with_definition() {
        for pot in Potential::builtins() {
            for (x, y) in [(0.3, -1.2), (2.0, 2.5), (-4.0, 1.0)] {
                let direct = pot.value(y) - pot.value(x) - pot.grad(x) * (y - x);
                assert!((pot.taylor_remainder(x, y) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn potential_table_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            potential: PotentialSpec,
        }
        let w: Wrap = toml::from_str("[potential]\nname = \"stark\"\nfield = 2.0\n").unwrap();
        assert_eq!(w.potential, PotentialSpec::Stark { field: 2.0 });
        assert_eq!(w.potential.build().stark_field(), Some(2.0));
        assert!(toml::from_str::<Wrap>("[potential]\nname = \"nope\"\n").is_err());
    }
}

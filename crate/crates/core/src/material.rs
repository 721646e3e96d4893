//! Potentials, mobilities, their epsilon-regularizations and derived
//! functions.
//!
//! The double well splits as `F = F1 + F2` with a convex (possibly singular)
//! F1 and a regular F2. The canonical pair is the logarithmic potential
//! `F1 = (theta/2)((1+s)log(1+s) + (1-s)log(1-s))`, `F2 = -(theta_c/2) s^2`
//! with the degenerate mobility `m = k1 (1 - s^2)`, for which every product
//! the degenerate formulation needs has a closed form: `m F1'' = k1 theta`,
//! `m^2 F1''' = 2 k1^2 theta s`, `Lambda1 = k1 theta s`, and the entropy
//! `M = (1/(2 k1))((1+s)log(1+s) + (1-s)log(1-s))` with `m M'' = 1`,
//! `M(0) = M'(0) = 0`. Other combinations fall back to quadrature from 0.
//!
//! The regularized versions clamp the second derivatives at `|s| = 1 - eps`
//! and extend by the matching quadratic (value and slope continuous), which
//! keeps `F_eps = F` on `[-1+eps, 1-eps]` and `F_eps(0) = F(0)`,
//! `F_eps'(0) = F'(0)` automatically. The mobility clamp is
//! `m_eps(s) = m(clamp(s, -1+eps, 1-eps))`.

use serde::{Deserialize, Serialize};

use crate::error::MaterialError;

/// Largest regularization width the auto-detection will consider.
const EPS0_CAP: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    /// Logarithmic double well; requires `0 < theta < theta_c`.
    Log { theta: f64, theta_c: f64 },
    /// Polynomial `c0 + c1 s + c2 s^2 + c3 s^3 + c4 s^4`, e.g. `(s^2-1)^2`
    /// as `[1, 0, -2, 0, 1]`. The whole polynomial is carried as F1 (F2 = 0).
    Quartic { coeffs: [f64; 5] },
    /// F1'' sampled on a grid of (s, value) pairs (piecewise linear in
    /// between, integrated from 0 for F1' and F1), plus a polynomial F2.
    Custom { f1_dd_samples: Vec<(f64, f64)>, f2_coeffs: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(flatten)]
    pub kind: PotentialKind,
}

/// Values of the potential and its split at one point.
#[derive(Clone, Copy, Debug)]
pub struct PotentialEval {
    pub f: f64,
    pub f_d: f64,
    pub f_dd: f64,
    pub f1: f64,
    pub f1_d: f64,
    pub f1_dd: f64,
    pub f2: f64,
    pub f2_d: f64,
    pub f2_dd: f64,
}

fn poly_eval(coeffs: &[f64], s: f64) -> (f64, f64, f64, f64) {
    // value, first, second, third derivative by Horner on each
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut d3 = 0.0;
    for &c in coeffs.iter().rev() {
        d3 = d3 * s + 3.0 * d2;
        d2 = d2 * s + 2.0 * d1;
        d1 = d1 * s + v;
        v = v * s + c;
    }
    (v, d1, d2, d3)
}

impl PotentialSpec {
    pub fn log(theta: f64, theta_c: f64) -> Self {
        Self { kind: PotentialKind::Log { theta, theta_c } }
    }

    pub fn quartic_double_well() -> Self {
        Self { kind: PotentialKind::Quartic { coeffs: [1.0, 0.0, -2.0, 0.0, 1.0] } }
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        match &self.kind {
            PotentialKind::Log { theta, theta_c } => {
                if !(*theta > 0.0 && theta < theta_c) {
                    return Err(MaterialError::BadPotential(format!(
                        "log potential needs 0 < theta < theta_c, got theta={theta}, theta_c={theta_c}"
                    )));
                }
                Ok(())
            }
            PotentialKind::Quartic { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(MaterialError::BadPotential("non-finite coefficient".into()));
                }
                Ok(())
            }
            PotentialKind::Custom { f1_dd_samples, .. } => {
                if f1_dd_samples.len() < 2 {
                    return Err(MaterialError::BadPotential(
                        "custom potential needs at least two F1'' samples".into(),
                    ));
                }
                if f1_dd_samples.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(MaterialError::BadPotential(
                        "custom F1'' samples must be strictly increasing in s".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// True when F' blows up at the endpoints (log and custom kinds).
    pub fn is_singular(&self) -> bool {
        !matches!(self.kind, PotentialKind::Quartic { .. })
    }

    /// Evaluate the potential and its split. Singular kinds require |s| < 1.
    pub fn eval(&self, s: f64) -> Result<PotentialEval, MaterialError> {
        if self.is_singular() && s.abs() >= 1.0 {
            return Err(MaterialError::OutsideDomain { s });
        }
        Ok(self.eval_unchecked(s))
    }

    fn eval_unchecked(&self, s: f64) -> PotentialEval {
        match &self.kind {
            PotentialKind::Log { theta, theta_c } => {
                let f1 = 0.5 * theta * ((1.0 + s) * (1.0 + s).ln() + (1.0 - s) * (1.0 - s).ln());
                let f1_d = 0.5 * theta * ((1.0 + s).ln() - (1.0 - s).ln());
                let f1_dd = theta / (1.0 - s * s);
                let f2 = -0.5 * theta_c * s * s;
                let f2_d = -theta_c * s;
                let f2_dd = -theta_c;
                PotentialEval {
                    f: f1 + f2,
                    f_d: f1_d + f2_d,
                    f_dd: f1_dd + f2_dd,
                    f1,
                    f1_d,
                    f1_dd,
                    f2,
                    f2_d,
                    f2_dd,
                }
            }
            PotentialKind::Quartic { coeffs } => {
                let (f1, f1_d, f1_dd, _) = poly_eval(coeffs, s);
                PotentialEval {
                    f: f1,
                    f_d: f1_d,
                    f_dd: f1_dd,
                    f1,
                    f1_d,
                    f1_dd,
                    f2: 0.0,
                    f2_d: 0.0,
                    f2_dd: 0.0,
                }
            }
            PotentialKind::Custom { f1_dd_samples, f2_coeffs } => {
                let f1_dd = interp_linear(f1_dd_samples, s);
                let f1_d = integrate_samples(f1_dd_samples, s, 1);
                let f1 = integrate_samples(f1_dd_samples, s, 2);
                let (f2, f2_d, f2_dd, _) = poly_eval(f2_coeffs, s);
                PotentialEval {
                    f: f1 + f2,
                    f_d: f1_d + f2_d,
                    f_dd: f1_dd + f2_dd,
                    f1,
                    f1_d,
                    f1_dd,
                    f2,
                    f2_d,
                    f2_dd,
                }
            }
        }
    }

    /// F1''' where available (used by the regularity conditions).
    pub fn f1_ddd(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Log { theta, .. } => {
                let d = 1.0 - s * s;
                2.0 * theta * s / (d * d)
            }
            PotentialKind::Quartic { coeffs } => poly_eval(coeffs, s).3,
            PotentialKind::Custom { f1_dd_samples, .. } => {
                // slope of the piecewise-linear F1'' interpolant
                slope_linear(f1_dd_samples, s)
            }
        }
    }

    /// F extended continuously to the closed interval [-1, 1] (the log well
    /// is bounded: F1(+-1) = theta log 2). Arguments are clamped. Used by
    /// the energy, which only needs F, never F'.
    pub fn f_extended(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        match &self.kind {
            PotentialKind::Log { theta, theta_c } => {
                let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
                0.5 * theta * (xlx(1.0 + s) + xlx(1.0 - s)) - 0.5 * theta_c * s * s
            }
            _ => self.eval_unchecked(s).f,
        }
    }

    /// Largest eps <= 0.25 such that F1'' is nondecreasing on [1-eps, 1) and
    /// nonincreasing on (-1, -1+eps], detected by sampling.
    pub fn eps0(&self) -> f64 {
        let candidates = [0.25, 0.2, 0.15, 0.1, 0.05, 0.025, 0.01];
        'outer: for &eps in &candidates {
            let n = 400;
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=n {
                // sample [1-eps, 1) approaching the endpoint geometrically
                let s = 1.0 - eps * (1.0 - k as f64 / n as f64).max(1e-12);
                let v = self.eval_unchecked(s.min(1.0 - 1e-12)).f1_dd;
                if v + 1e-12 * v.abs().max(1.0) < prev {
                    continue 'outer;
                }
                prev = v;
            }
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=n {
                let s = -1.0 + eps * (1.0 - k as f64 / n as f64).max(1e-12);
                let v = self.eval_unchecked(s.max(-1.0 + 1e-12)).f1_dd;
                if v + 1e-12 * v.abs().max(1.0) < prev {
                    continue 'outer;
                }
                prev = v;
            }
            return eps;
        }
        0.01
    }
}

fn interp_linear(samples: &[(f64, f64)], s: f64) -> f64 {
    let first = samples.first().unwrap();
    let last = samples.last().unwrap();
    if s <= first.0 {
        return first.1;
    }
    if s >= last.0 {
        return last.1;
    }
    let pos = samples.partition_point(|p| p.0 <= s);
    let (x0, y0) = samples[pos - 1];
    let (x1, y1) = samples[pos];
    y0 + (y1 - y0) * (s - x0) / (x1 - x0)
}

fn slope_linear(samples: &[(f64, f64)], s: f64) -> f64 {
    let pos = samples.partition_point(|p| p.0 <= s).clamp(1, samples.len() - 1);
    let (x0, y0) = samples[pos - 1];
    let (x1, y1) = samples[pos];
    (y1 - y0) / (x1 - x0)
}

/// Integrate the piecewise-linear interpolant from 0 to s, `order` times
/// (1 = antiderivative, 2 = double antiderivative), by fine trapezoids.
fn integrate_samples(samples: &[(f64, f64)], s: f64, order: usize) -> f64 {
    let n = 2000;
    if order == 1 {
        let h = s / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let a = interp_linear(samples, k as f64 * h);
            let b = interp_linear(samples, (k + 1) as f64 * h);
            acc += 0.5 * (a + b) * h;
        }
        acc
    } else {
        // F1(s) = int_0^s (s - t) F1''(t) dt
        let h = s / n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let t0 = k as f64 * h;
            let t1 = (k + 1) as f64 * h;
            let a = (s - t0) * interp_linear(samples, t0);
            let b = (s - t1) * interp_linear(samples, t1);
            acc += 0.5 * (a + b) * h;
        }
        acc
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MobilityKind {
    /// `m(s) = k1 (1 - s^2)`, the canonical degenerate mobility.
    DegenerateQuadratic { k1: f64 },
    /// `m(s) = coeff (1 - s^2)^exponent` with exponent >= 1; strongly
    /// degenerate (m'(+-1) = 0) when exponent > 1.
    StronglyDegenerate { coeff: f64, exponent: f64 },
    /// Constant mobility.
    Constant { m0: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MobilitySpec {
    #[serde(flatten)]
    pub kind: MobilityKind,
}

impl MobilitySpec {
    pub fn degenerate_quadratic(k1: f64) -> Self {
        Self { kind: MobilityKind::DegenerateQuadratic { k1 } }
    }

    pub fn constant(m0: f64) -> Self {
        Self { kind: MobilityKind::Constant { m0 } }
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        let ok = match self.kind {
            MobilityKind::DegenerateQuadratic { k1 } => k1 > 0.0 && k1.is_finite(),
            MobilityKind::StronglyDegenerate { coeff, exponent } => {
                coeff > 0.0 && coeff.is_finite() && exponent >= 1.0 && exponent.is_finite()
            }
            MobilityKind::Constant { m0 } => m0 > 0.0 && m0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MaterialError::BadMobility(format!("{:?}", self.kind)))
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !matches!(self.kind, MobilityKind::Constant { .. })
    }

    /// m(s) on [-1, 1]; arguments are clamped (coefficients are always
    /// evaluated at clamped phi).
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        match self.kind {
            MobilityKind::DegenerateQuadratic { k1 } => k1 * (1.0 - s * s),
            MobilityKind::StronglyDegenerate { coeff, exponent } => {
                coeff * (1.0 - s * s).max(0.0).powf(exponent)
            }
            MobilityKind::Constant { m0 } => m0,
        }
    }

    pub fn eval_d(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        match self.kind {
            MobilityKind::DegenerateQuadratic { k1 } => -2.0 * k1 * s,
            MobilityKind::StronglyDegenerate { coeff, exponent } => {
                -2.0 * coeff * exponent * s * (1.0 - s * s).max(0.0).powf(exponent - 1.0)
            }
            MobilityKind::Constant { .. } => 0.0,
        }
    }

    /// Clamped mobility `m_eps(s) = m(clamp(s, -1+eps, 1-eps))`.
    pub fn eval_eps(&self, s: f64, eps: f64) -> f64 {
        self.eval(s.clamp(-1.0 + eps, 1.0 - eps))
    }

    pub fn max_on_interval(&self) -> f64 {
        match self.kind {
            MobilityKind::DegenerateQuadratic { k1 } => k1,
            MobilityKind::StronglyDegenerate { coeff, .. } => coeff,
            MobilityKind::Constant { m0 } => m0,
        }
    }

    /// max |m'| on [-1, 1].
    pub fn max_d_on_interval(&self) -> f64 {
        match self.kind {
            MobilityKind::DegenerateQuadratic { k1 } => 2.0 * k1,
            MobilityKind::StronglyDegenerate { coeff, exponent } => {
                if exponent <= 1.0 {
                    2.0 * coeff * exponent
                } else {
                    // extremum of 2 c e |s| (1-s^2)^(e-1) at s^2 = 1/(2e-1)
                    let s2 = 1.0 / (2.0 * exponent - 1.0);
                    2.0 * coeff * exponent * s2.sqrt() * (1.0 - s2).powf(exponent - 1.0)
                }
            }
            MobilityKind::Constant { .. } => 0.0,
        }
    }
}

/// A potential/mobility pair with the derived quantities of the degenerate
/// formulation. Closed forms are used for the log/quadratic pair; other
/// combinations integrate numerically from 0.
#[derive(Clone, Debug)]
pub struct MaterialModel {
    pub potential: PotentialSpec,
    pub mobility: MobilitySpec,
}

impl MaterialModel {
    pub fn new(potential: PotentialSpec, mobility: MobilitySpec) -> Result<Self, MaterialError> {
        potential.validate()?;
        mobility.validate()?;
        Ok(Self { potential, mobility })
    }

    fn log_quadratic(&self) -> Option<(f64, f64, f64)> {
        match (&self.potential.kind, &self.mobility.kind) {
            (
                PotentialKind::Log { theta, theta_c },
                MobilityKind::DegenerateQuadratic { k1 },
            ) => Some((*theta, *theta_c, *k1)),
            _ => None,
        }
    }

    /// `m(s) F1''(s)`, continuously extended to [-1, 1].
    pub fn m_f1_dd(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        if let Some((theta, _, k1)) = self.log_quadratic() {
            return k1 * theta;
        }
        if let (PotentialKind::Log { theta, .. }, MobilityKind::StronglyDegenerate { coeff, exponent }) =
            (&self.potential.kind, &self.mobility.kind)
        {
            return coeff * theta * (1.0 - s * s).max(0.0).powf(exponent - 1.0);
        }
        // Generic route: the product is evaluated just inside the interval;
        // (A1) pairs keep it continuous there.
        let sc = s.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        self.mobility.eval(sc) * self.potential.eval_unchecked(sc).f1_dd
    }

    /// `m(s) F''(s) = m F1'' + m F2''`, continuously extended to [-1, 1].
    pub fn m_f_dd(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        let sc = s.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        self.m_f1_dd(s) + self.mobility.eval(s) * self.potential.eval_unchecked(sc).f2_dd
    }

    /// `m(s)^2 F1'''(s)`, continuously extended to [-1, 1].
    pub fn m2_f1_ddd(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        if let Some((theta, _, k1)) = self.log_quadratic() {
            return 2.0 * k1 * k1 * theta * s;
        }
        if let (PotentialKind::Log { theta, .. }, MobilityKind::StronglyDegenerate { coeff, exponent }) =
            (&self.potential.kind, &self.mobility.kind)
        {
            let d = (1.0 - s * s).max(0.0);
            return 2.0 * theta * s * coeff * coeff * d.powf(2.0 * exponent - 2.0);
        }
        let sc = s.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        let m = self.mobility.eval(sc);
        m * m * self.potential.f1_ddd(sc)
    }

    /// `Lambda1(s) = int_0^s m F1''`.
    pub fn lambda1(&self, s: f64) -> f64 {
        if let Some((theta, _, k1)) = self.log_quadratic() {
            return k1 * theta * s;
        }
        gauss_integral_from_zero(|t| self.m_f1_dd(t), s)
    }

    /// `Lambda2(s) = int_0^s m F2''`.
    pub fn lambda2(&self, s: f64) -> f64 {
        if let Some((_, theta_c, k1)) = self.log_quadratic() {
            return -k1 * theta_c * (s - s * s * s / 3.0);
        }
        gauss_integral_from_zero(
            |t| self.mobility.eval(t) * self.potential.eval_unchecked(t.clamp(-0.999999999, 0.999999999)).f2_dd,
            s,
        )
    }

    /// `Gamma(s) = int_0^s m`.
    pub fn gamma_m(&self, s: f64) -> f64 {
        match self.mobility.kind {
            MobilityKind::DegenerateQuadratic { k1 } => k1 * (s - s * s * s / 3.0),
            MobilityKind::Constant { m0 } => m0 * s,
            _ => gauss_integral_from_zero(|t| self.mobility.eval(t), s),
        }
    }

    /// Entropy `M` with `m M'' = 1`, `M(0) = M'(0) = 0`, and its derivative.
    /// Exact on (-1, 1); the degenerate quadratic pair has the closed form.
    pub fn entropy(&self, s: f64) -> Result<(f64, f64), MaterialError> {
        if s.abs() >= 1.0 && self.mobility.is_degenerate() {
            return Err(MaterialError::OutsideDomain { s });
        }
        Ok(self.entropy_unchecked(s))
    }

    fn entropy_unchecked(&self, s: f64) -> (f64, f64) {
        match self.mobility.kind {
            MobilityKind::DegenerateQuadratic { k1 } => {
                let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
                let m = (xlx(1.0 + s) + xlx(1.0 - s)) / (2.0 * k1);
                let md = ((1.0 + s).ln() - (1.0 - s).ln()) / (2.0 * k1);
                (m, md)
            }
            MobilityKind::Constant { m0 } => (s * s / (2.0 * m0), s / m0),
            _ => {
                // M(s) = int_0^s (s - t)/m(t) dt, M'(s) = int_0^s dt/m(t)
                let md = gauss_integral_from_zero(|t| 1.0 / self.mobility.eval(t), s);
                let m = gauss_integral_from_zero(|t| (s - t) / self.mobility.eval(t), s);
                (m, md)
            }
        }
    }

    /// Entropy at clamped arguments for diagnostics: bounded pairs extend
    /// continuously to +-1, kinds without a closed form are evaluated just
    /// inside the interval.
    pub fn entropy_clamped(&self, s: f64) -> f64 {
        let s = s.clamp(-1.0, 1.0);
        match self.mobility.kind {
            MobilityKind::DegenerateQuadratic { .. } | MobilityKind::Constant { .. } => {
                self.entropy_unchecked(s).0
            }
            _ => self.entropy_unchecked(s.clamp(-1.0 + 1e-9, 1.0 - 1e-9)).0,
        }
    }

    /// Regularized entropy `M_eps` with `m_eps M_eps'' = 1`: equal to M on
    /// [-1+eps, 1-eps], quadratic beyond with curvature `1/m(1-eps)`.
    pub fn entropy_eps(&self, s: f64, eps: f64) -> (f64, f64) {
        let hi = 1.0 - eps;
        let lo = -1.0 + eps;
        if s > hi {
            let (m0, md0) = self.entropy_unchecked(hi);
            let c = 1.0 / self.mobility.eval(hi);
            let d = s - hi;
            (m0 + md0 * d + 0.5 * c * d * d, md0 + c * d)
        } else if s < lo {
            let (m0, md0) = self.entropy_unchecked(lo);
            let c = 1.0 / self.mobility.eval(lo);
            let d = s - lo;
            (m0 + md0 * d + 0.5 * c * d * d, md0 + c * d)
        } else {
            self.entropy_unchecked(s)
        }
    }
}

/// Composite Gauss-Legendre integral of `f` from 0 to `s` (signed).
fn gauss_integral_from_zero(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    const X: [f64; 10] = [
        -0.9739065285171717,
        -0.8650633666889845,
        -0.6794095682990244,
        -0.4333953941292472,
        -0.1488743389816312,
        0.1488743389816312,
        0.4333953941292472,
        0.6794095682990244,
        0.8650633666889845,
        0.9739065285171717,
    ];
    const W: [f64; 10] = [
        0.0666713443086881,
        0.1494513491505806,
        0.2190863625159820,
        0.2692667193099963,
        0.2955242247147529,
        0.2955242247147529,
        0.2692667193099963,
        0.2190863625159820,
        0.1494513491505806,
        0.0666713443086881,
    ];
    let panels = 64;
    let h = s / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(&W) {
            acc += w * 0.5 * h * f(mid + 0.5 * h * x);
        }
    }
    acc
}

/// Potential with second derivatives clamped outside `[-1+eps, 1-eps]` and
/// quadratic C^1 extensions; exact inside.
#[derive(Clone, Debug)]
pub struct RegularizedPotential {
    spec: PotentialSpec,
    pub eps: f64,
    hi: PotentialEval,
    lo: PotentialEval,
}

impl RegularizedPotential {
    pub fn new(spec: &PotentialSpec, eps: f64) -> Result<Self, MaterialError> {
        let eps0 = spec.eps0();
        if !(eps > 0.0 && eps <= eps0) {
            return Err(MaterialError::BadEpsilon { eps, eps0 });
        }
        let hi = spec.eval_unchecked(1.0 - eps);
        let lo = spec.eval_unchecked(-1.0 + eps);
        Ok(Self { spec: spec.clone(), eps, hi, lo })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// (F_eps, F_eps', F_eps'') with the F1/F2 split clamped jointly.
    pub fn eval(&self, s: f64) -> PotentialEval {
        let hi = 1.0 - self.eps;
        let lo = -1.0 + self.eps;
        if s > hi {
            extend_quadratic(&self.hi, s - hi)
        } else if s < lo {
            extend_quadratic(&self.lo, s - lo)
        } else {
            self.spec.eval_unchecked(s)
        }
    }

    pub fn f(&self, s: f64) -> f64 {
        self.eval(s).f
    }

    pub fn f_d(&self, s: f64) -> f64 {
        self.eval(s).f_d
    }

    pub fn f_dd(&self, s: f64) -> f64 {
        self.eval(s).f_dd
    }
}

fn extend_quadratic(anchor: &PotentialEval, d: f64) -> PotentialEval {
    let q = |v: f64, vd: f64, vdd: f64| (v + vd * d + 0.5 * vdd * d * d, vd + vdd * d, vdd);
    let (f1, f1_d, f1_dd) = q(anchor.f1, anchor.f1_d, anchor.f1_dd);
    let (f2, f2_d, f2_dd) = q(anchor.f2, anchor.f2_d, anchor.f2_dd);
    PotentialEval {
        f: f1 + f2,
        f_d: f1_d + f2_d,
        f_dd: f1_dd + f2_dd,
        f1,
        f1_d,
        f1_dd,
        f2,
        f2_d,
        f2_dd,
    }
}

pub fn eps0_cap() -> f64 {
    EPS0_CAP
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_spec() -> PotentialSpec {
        PotentialSpec::log(0.5, 1.0)
    }

    fn canonical() -> MaterialModel {
        MaterialModel::new(log_spec(), MobilitySpec::degenerate_quadratic(1.0)).unwrap()
    }

    #[test]
    fn log_potential_at_zero() {
        // F'(0) = 0 and F''(0) = theta - theta_c; oracle via central
        // differences with step 1e-6.
        let p = log_spec();
        let e = p.eval(0.0).unwrap();
        assert_eq!(e.f_d, 0.0);
        assert!((e.f_dd - (0.5 - 1.0)).abs() < 1e-12);

        let h = 1e-6;
        let fp = (p.eval(h).unwrap().f - p.eval(-h).unwrap().f) / (2.0 * h);
        let fpp = (p.eval(h).unwrap().f - 2.0 * e.f + p.eval(-h).unwrap().f) / (h * h);
        assert!(fp.abs() < 1e-9, "finite-difference F'(0) = {fp}");
        assert!((fpp - e.f_dd).abs() < 1e-4, "finite-difference F''(0) = {fpp}");
    }

    #[test]
    fn log_potential_odd_first_derivative() {
        let p = log_spec();
        for &s in &[0.1, 0.3, 0.55, 0.9, 0.999] {
            let a = p.eval(s).unwrap().f_d;
            let b = p.eval(-s).unwrap().f_d;
            assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0), "F' not odd at {s}");
        }
    }

    #[test]
    fn log_potential_rejects_endpoints() {
        assert!(log_spec().eval(1.0).is_err());
        assert!(log_spec().eval(-1.2).is_err());
    }

    #[test]
    fn quartic_double_well_roots() {
        let p = PotentialSpec::quartic_double_well();
        for &s in &[1.0_f64, -1.0] {
            let e = p.eval(s).unwrap();
            assert!(e.f.abs() < 1e-15);
            assert!(e.f_d.abs() < 1e-15);
        }
        assert!((p.eval(0.0).unwrap().f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn regularized_is_identity_inside() {
        let reg = RegularizedPotential::new(&log_spec(), 0.1).unwrap();
        let e = reg.eval(0.5);
        let exact = log_spec().eval(0.5).unwrap();
        assert_eq!(e.f, exact.f);
        assert_eq!(e.f_d, exact.f_d);
        assert_eq!(e.f_dd, exact.f_dd);
    }

    #[test]
    fn regularized_clamps_second_derivative() {
        let spec = log_spec();
        let reg = RegularizedPotential::new(&spec, 0.1).unwrap();
        let anchor = spec.eval(0.9).unwrap();
        let e = reg.eval(1.2);
        assert!((e.f_dd - anchor.f_dd).abs() <= 1e-14 * anchor.f_dd.abs());
        // quadratic extension matches value and slope at the anchor
        let d = 1.2 - 0.9;
        let expect_f = anchor.f + anchor.f_d * d + 0.5 * anchor.f_dd * d * d;
        assert!((e.f - expect_f).abs() <= 1e-13 * expect_f.abs().max(1.0));
    }

    #[test]
    fn regularized_f1_lies_below_f1() {
        // F1_eps <= F1 on (-1, 1) for eps <= eps0 (consequence of (A3)).
        let spec = log_spec();
        for &eps in &[0.25, 0.1, 0.05] {
            let reg = RegularizedPotential::new(&spec, eps).unwrap();
            for k in 1..200 {
                let s = -1.0 + 2.0 * k as f64 / 200.0;
                let f1_eps = reg.eval(s).f1;
                let f1 = spec.eval(s).unwrap().f1;
                assert!(
                    f1_eps <= f1 + 1e-12,
                    "F1_eps({s}) = {f1_eps} above F1 = {f1} at eps {eps}"
                );
            }
        }
    }

    #[test]
    fn regularized_monotone_in_eps() {
        // eps' < eps implies F1_eps' >= F1_eps on the sample grid.
        let spec = log_spec();
        let tighter = RegularizedPotential::new(&spec, 0.05).unwrap();
        let looser = RegularizedPotential::new(&spec, 0.1).unwrap();
        for k in 0..400 {
            let s = -2.0 + 4.0 * k as f64 / 400.0;
            assert!(tighter.eval(s).f1 >= looser.eval(s).f1 - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert!(RegularizedPotential::new(&log_spec(), 0.0).is_err());
        assert!(RegularizedPotential::new(&log_spec(), 0.3).is_err());
    }

    #[test]
    fn entropy_normalization_and_closed_form() {
        let m = canonical();
        let (v, d) = m.entropy(0.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d, 0.0);

        // closed form vs adaptive quadrature of 1/m at s = 0.5
        let (v_closed, d_closed) = m.entropy(0.5).unwrap();
        let generic = MaterialModel::new(
            log_spec(),
            MobilitySpec {
                kind: MobilityKind::StronglyDegenerate { coeff: 1.0, exponent: 1.0 },
            },
        )
        .unwrap();
        let (v_quad, d_quad) = generic.entropy(0.5).unwrap();
        assert!((v_closed - v_quad).abs() < 1e-10, "{v_closed} vs {v_quad}");
        assert!((d_closed - d_quad).abs() < 1e-10, "{d_closed} vs {d_quad}");
    }

    #[test]
    fn entropy_eps_lies_below_entropy() {
        let m = canonical();
        for &eps in &[0.1, 0.05, 0.01] {
            for k in 1..100 {
                let s = -1.0 + 2.0 * k as f64 / 100.0;
                let (me, _) = m.entropy_eps(s, eps);
                let (mv, _) = m.entropy(s).unwrap();
                assert!(me <= mv + 1e-12, "M_eps({s}) = {me} above M = {mv}");
            }
        }
    }

    #[test]
    fn products_of_canonical_pair() {
        let m = canonical();
        // m F1'' = k1 theta everywhere, including the endpoints.
        for &s in &[-1.0, -0.7, 0.0, 0.9999, 1.0] {
            assert_eq!(m.m_f1_dd(s), 0.5);
        }
        // continuity at the endpoint: one-sided limit equals the extension
        let inner = m.m_f_dd(1.0 - 1e-9);
        let end = m.m_f_dd(1.0);
        assert!((inner - end).abs() < 1e-8, "mF'' jump at +1: {inner} vs {end}");

        assert_eq!(m.lambda1(0.0), 0.0);
        assert_eq!(m.lambda2(0.0), 0.0);
        assert_eq!(m.gamma_m(0.0), 0.0);

        // Lambda1 closed form vs quadrature oracle
        let quad = gauss_integral_from_zero(|t| m.m_f1_dd(t), 0.5);
        assert!((m.lambda1(0.5) - quad).abs() < 1e-10);

        // m^2 F1''' = 2 k1^2 theta s
        assert!((m.m2_f1_ddd(0.5) - 0.5).abs() < 1e-14);
        assert_eq!(m.m2_f1_ddd(1.0), 1.0);
    }

    #[test]
    fn eps0_detection() {
        assert_eq!(log_spec().eps0(), 0.25);
        assert_eq!(PotentialSpec::quartic_double_well().eps0(), 0.25);
    }

    #[test]
    fn f_extended_at_pure_phase() {
        // F(1) = -theta_c/2 + theta log 2 for the log potential.
        let p = log_spec();
        let expected = -0.5 + 0.5 * 2.0_f64.ln();
        assert!((p.f_extended(1.0) - expected).abs() < 1e-15);
        assert!((p.f_extended(2.0) - expected).abs() < 1e-15, "clamped beyond the interval");
    }
}

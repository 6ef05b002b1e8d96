//! Distances between one-step predictive densities and the per-step loss ledger.

use std::cell::Cell;

use crate::density::PredictiveDensity;
use crate::error::{Error, Result};
use crate::math::LOG_FLOOR;
use crate::model::Spread;
use crate::quadrature::{integrate, spread_breakpoints, QuadratureSpec};

/// Tolerance on the unit mass required of the first argument of [`kl_divergence`].
pub const KL_MASS_TOL: f64 = 1e-6;

fn check_sigma(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("sigma must be positive, got {s}")))
    }
}

/// Squared Hellinger distance between `N(m1, s1²)` and `N(m2, s2²)`.
pub fn hellinger_sq_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<f64> {
    check_sigma(s1)?;
    check_sigma(s2)?;
    let v = s1 * s1 + s2 * s2;
    let d = m1 - m2;
    let ln_bc = 0.5 * (2.0 * s1 * s2 / v).ln() - d * d / (4.0 * v);
    Ok((-2.0 * ln_bc.exp_m1()).max(0.0))
}

/// `KL(N(m1, s1²) ‖ N(m2, s2²))`.
pub fn kl_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> Result<f64> {
    check_sigma(s1)?;
    check_sigma(s2)?;
    let d = m1 - m2;
    let r = s1 / s2;
    Ok(((r * r - 1.0) - 2.0 * r.ln() + d * d / (s2 * s2)).max(0.0) * 0.5)
}

/// `(Σ(√p − √q)², Σ(p − q)²)` over a finite label set.
pub fn discrete_distances(p: &[f64], q: &[f64]) -> Result<(f64, f64)> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut h2 = 0.0;
    let mut sq = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::InvalidModel(format!("negative or NaN probability ({a}, {b})")));
        }
        let r = a.sqrt() - b.sqrt();
        h2 += r * r;
        sq += (a - b) * (a - b);
    }
    Ok((h2, sq))
}

enum Pair<'a> {
    Tables(&'a [f64], &'a [f64]),
    Real,
}

fn pair<'a>(p: &'a PredictiveDensity, q: &'a PredictiveDensity) -> Result<Pair<'a>> {
    match (p.probabilities(), q.probabilities()) {
        (Some(a), Some(b)) => {
            if a.len() != b.len() {
                return Err(Error::LengthMismatch {
                    left: a.len(),
                    right: b.len(),
                });
            }
            Ok(Pair::Tables(a, b))
        }
        (None, None) => Ok(Pair::Real),
        _ => Err(Error::SpaceMismatch),
    }
}

fn integrate_pair<F: Fn(f64) -> f64>(p: &PredictiveDensity, q: &PredictiveDensity, f: F, quad: &QuadratureSpec) -> Result<f64> {
    let spreads: Vec<Spread> = p.spreads().into_iter().chain(q.spreads()).collect();
    let (lo, hi) = quad
        .domain(spreads.iter().copied())
        .ok_or_else(|| Error::InvalidModel("density has no components".into()))?;
    integrate(f, lo, hi, &spread_breakpoints(spreads), quad)
}

/// `∫(√p − √q)² dy`, exact for Gaussian pairs and finite label sets.
pub fn hellinger_sq(p: &PredictiveDensity, q: &PredictiveDensity, quad: &QuadratureSpec) -> Result<f64> {
    match pair(p, q)? {
        Pair::Tables(a, b) => Ok(discrete_distances(a, b)?.0),
        Pair::Real => {
            if let (Some(a), Some(b)) = (p.as_gaussian(), q.as_gaussian()) {
                return hellinger_sq_gaussian(a.mean, a.sigma, b.mean, b.sigma);
            }
            let v = integrate_pair(
                p,
                q,
                |y| {
                    let r = (0.5 * p.ln_eval_real(y)).exp() - (0.5 * q.ln_eval_real(y)).exp();
                    r * r
                },
                quad,
            )?;
            Ok(v.max(0.0))
        }
    }
}

/// `∫p ln(p/q) dy`; `+inf` when `q` vanishes where `p` does not.
pub fn kl_divergence(p: &PredictiveDensity, q: &PredictiveDensity, quad: &QuadratureSpec) -> Result<f64> {
    if (p.total_mass() - 1.0).abs() > KL_MASS_TOL {
        return Err(Error::DegenerateMass(p.total_mass()));
    }
    match pair(p, q)? {
        Pair::Tables(a, b) => {
            let mut kl = 0.0;
            for (&pa, &qb) in a.iter().zip(b) {
                if pa > 0.0 {
                    if qb <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    kl += pa * (pa / qb).ln();
                }
            }
            Ok(kl.max(0.0))
        }
        Pair::Real => {
            if let (Some(a), Some(b)) = (p.as_gaussian(), q.as_gaussian()) {
                return kl_gaussian(a.mean, a.sigma, b.mean, b.sigma);
            }
            let unbounded = Cell::new(false);
            let v = integrate_pair(
                p,
                q,
                |y| {
                    let lp = p.ln_eval_real(y);
                    if lp < LOG_FLOOR {
                        return 0.0;
                    }
                    let lq = q.ln_eval_real(y);
                    if lq == f64::NEG_INFINITY {
                        unbounded.set(true);
                        return 0.0;
                    }
                    lp.exp() * (lp - lq)
                },
                quad,
            )?;
            if unbounded.get() {
                Ok(f64::INFINITY)
            } else {
                Ok(v.max(0.0))
            }
        }
    }
}

/// `∫|p − q| dy`.
pub fn abs_distance(p: &PredictiveDensity, q: &PredictiveDensity, quad: &QuadratureSpec) -> Result<f64> {
    match pair(p, q)? {
        Pair::Tables(a, b) => Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
        Pair::Real => integrate_pair(p, q, |y| (p.ln_eval_real(y).exp() - q.ln_eval_real(y).exp()).abs(), quad),
    }
}

/// The six tracked per-step losses, in ledger column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// `h²(μ, ξ)`
    MuXi,
    /// `h²(μ, ϱ̄)`
    MuRhoBar,
    /// `h²(ϱ̄, ϱ)`
    RhoBarRho,
    /// `h²(ϱ, ϱ^static)`
    RhoStatic,
    /// `h²(μ, ϱ^static)`
    MuStatic,
    /// `KL(μ ‖ ϱ̄)`
    KlMuRhoBar,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::MuXi,
        Quantity::MuRhoBar,
        Quantity::RhoBarRho,
        Quantity::RhoStatic,
        Quantity::MuStatic,
        Quantity::KlMuRhoBar,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            Quantity::MuXi => "h2_mu_xi",
            Quantity::MuRhoBar => "h2_mu_rhobar",
            Quantity::RhoBarRho => "h2_rhobar_rho",
            Quantity::RhoStatic => "h2_rho_static",
            Quantity::MuStatic => "h2_mu_static",
            Quantity::KlMuRhoBar => "kl_mu_rhobar",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.column() == name)
    }

    /// Bound on the expected cumulative sum for a true model of prior weight `w_mu`.
    pub fn bound(self, w_mu: f64) -> f64 {
        let inv = 1.0 / w_mu;
        let ln_inv = inv.ln();
        match self {
            Quantity::MuXi => ln_inv,
            Quantity::MuRhoBar | Quantity::KlMuRhoBar => inv + ln_inv,
            Quantity::RhoBarRho => 2.0 * inv,
            Quantity::RhoStatic => 3.0 * inv,
            Quantity::MuStatic => 21.0 * inv,
        }
    }
}

/// Losses observed at step `t` (1-based); `None` where a predictor was disabled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossRecord {
    pub t: usize,
    pub values: [Option<f64>; 6],
}

impl LossRecord {
    pub fn new(t: usize) -> Self {
        Self { t, values: [None; 6] }
    }

    pub fn get(&self, q: Quantity) -> Option<f64> {
        self.values[q.index()]
    }

    pub fn set(&mut self, q: Quantity, v: f64) {
        self.values[q.index()] = Some(v);
    }
}

/// Per-step losses of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossLedger {
    pub run_id: u64,
    pub records: Vec<LossRecord>,
}

impl LossLedger {
    pub fn new(run_id: u64) -> Self {
        Self {
            run_id,
            records: Vec::new(),
        }
    }

    /// Running sums of `q`; `None` if it was not tracked.
    pub fn cumulative(&self, q: Quantity) -> Option<Vec<f64>> {
        let mut acc = 0.0;
        self.records
            .iter()
            .map(|r| {
                r.get(q).map(|v| {
                    acc += v;
                    acc
                })
            })
            .collect()
    }

    pub fn total(&self, q: Quantity) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        self.records.iter().map(|r| r.get(q)).sum()
    }

    /// `max_{t > after} h²_t` for `q`.
    pub fn tail_max(&self, q: Quantity, after: usize) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.records.iter().filter(|r| r.t > after).map(|r| r.get(q)).collect();
        vals.map(|v| v.into_iter().fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Component;
    use crate::model::Gaussian;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn g(m: f64, s: f64) -> PredictiveDensity {
        PredictiveDensity::gaussian(Gaussian::new(m, s).unwrap())
    }

    // Forces the quadrature path for a Gaussian by wrapping it in a one-term mixture.
    fn wrapped(m: f64, s: f64) -> PredictiveDensity {
        PredictiveDensity::mixture(vec![(0.0, Component::Gaussian(Gaussian::new(m, s).unwrap()))])
    }

    // Independent oracle: composite Simpson on a fine fixed grid.
    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn pdf(m: f64, s: f64) -> impl Fn(f64) -> f64 {
        move |y| Gaussian::new(m, s).unwrap().pdf(y)
    }

    #[test]
    fn gaussian_hellinger_values() {
        assert_eq!(hellinger_sq_gaussian(0.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
        let v = hellinger_sq_gaussian(0.0, 1.0, 2.0, 1.0).unwrap();
        assert!((v - 2.0 * (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((v - 0.7869387).abs() < 1e-7);
        let (p, q) = (pdf(0.0, 1.0), pdf(0.0, 2.0));
        let oracle = simpson(|y| (p(y).sqrt() - q(y).sqrt()).powi(2), -30.0, 30.0, 200_000);
        assert!((hellinger_sq_gaussian(0.0, 1.0, 0.0, 2.0).unwrap() - oracle).abs() < 1e-8);
        assert!(hellinger_sq_gaussian(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(hellinger_sq_gaussian(0.0, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_path() {
        let closed = hellinger_sq(&g(0.0, 1.0), &g(1.0, 4.0), &quad()).unwrap();
        let quadr = hellinger_sq(&wrapped(0.0, 1.0), &wrapped(1.0, 4.0), &quad()).unwrap();
        assert!((closed - quadr).abs() < 1e-7);
        assert!(hellinger_sq(&wrapped(0.3, 1.0), &wrapped(0.3, 1.0), &quad()).unwrap() < 1e-9);
    }

    #[test]
    fn kl_values() {
        assert!((kl_gaussian(0.0, 1.0, 2.0, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let quadr = kl_divergence(&wrapped(0.0, 1.0), &wrapped(2.0, 1.0), &quad()).unwrap();
        assert!((quadr - 2.0).abs() < 1e-7);
        let (p, q) = (pdf(0.5, 0.7), pdf(-1.0, 1.9));
        let oracle = simpson(|y| p(y) * (p(y) / q(y)).ln(), -20.0, 20.0, 200_000);
        assert!((kl_gaussian(0.5, 0.7, -1.0, 1.9).unwrap() - oracle).abs() < 1e-9);
        assert!(kl_divergence(&g(1.0, 1.0), &g(1.0, 1.0), &quad()).unwrap() < 1e-8);
    }

    #[test]
    fn kl_detects_vanishing_q_and_needs_unit_mass() {
        let p = PredictiveDensity::tabular(vec![0.5, 0.5]);
        let q = PredictiveDensity::tabular(vec![1.0, 0.0]);
        assert_eq!(kl_divergence(&p, &q, &quad()).unwrap(), f64::INFINITY);
        let half = PredictiveDensity::tabular(vec![0.25, 0.25]);
        assert!(matches!(kl_divergence(&half, &p, &quad()), Err(Error::DegenerateMass(_))));
    }

    #[test]
    fn abs_distance_values() {
        assert_eq!(abs_distance(&g(0.0, 1.0), &g(0.0, 1.0), &quad()).unwrap(), 0.0);
        let v = abs_distance(&g(0.0, 1.0), &g(2.0, 1.0), &quad()).unwrap();
        assert!(v >= 0.7869387);
        let disjoint = abs_distance(&g(-50.0, 1.0), &g(50.0, 1.0), &quad()).unwrap();
        assert!((disjoint - 2.0).abs() < 1e-6);
    }

    #[test]
    fn discrete_examples() {
        assert_eq!(discrete_distances(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), (0.0, 0.0));
        assert_eq!(discrete_distances(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), (2.0, 2.0));
        let (_, sq) = discrete_distances(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((sq - 0.125).abs() < 1e-15);
        assert!(discrete_distances(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mixed_spaces_are_rejected() {
        let t = PredictiveDensity::tabular(vec![1.0]);
        assert_eq!(hellinger_sq(&t, &g(0.0, 1.0), &quad()).unwrap_err(), Error::SpaceMismatch);
    }

    #[test]
    fn ledger_cumulatives() {
        let mut ledger = LossLedger::new(3);
        for t in 1..=4 {
            let mut r = LossRecord::new(t);
            r.set(Quantity::MuXi, t as f64 * 0.5);
            ledger.records.push(r);
        }
        assert_eq!(ledger.cumulative(Quantity::MuXi).unwrap(), vec![0.5, 1.5, 3.0, 5.0]);
        assert_eq!(ledger.total(Quantity::MuXi), Some(5.0));
        assert_eq!(ledger.total(Quantity::MuStatic), None);
        assert_eq!(ledger.tail_max(Quantity::MuXi, 2), Some(2.0));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn bounds_at_one_tenth() {
        let w = 0.1;
        assert!((Quantity::MuXi.bound(w) - 2.302585).abs() < 1e-6);
        assert!((Quantity::MuRhoBar.bound(w) - 12.302585).abs() < 1e-6);
        assert!((Quantity::RhoBarRho.bound(w) - 20.0).abs() < 1e-12);
        assert!((Quantity::RhoStatic.bound(w) - 30.0).abs() < 1e-12);
        assert!((Quantity::MuStatic.bound(w) - 210.0).abs() < 1e-12);
        assert!((Quantity::KlMuRhoBar.bound(w) - 12.302585).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mix(parts: &[(f64, f64, f64)]) -> PredictiveDensity {
            let total: f64 = parts.iter().map(|p| p.0).sum();
            PredictiveDensity::mixture(
                parts
                    .iter()
                    .map(|&(w, m, s)| ((w / total).ln(), Component::Gaussian(Gaussian::new(m, s).unwrap())))
                    .collect(),
            )
        }

        fn parts() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
            prop::collection::vec((0.1f64..1.0, -3.0f64..3.0, 0.3f64..2.0), 1..4)
        }

        proptest! {
            #![proptest_config(ProptestConfig { cases: 48, .. ProptestConfig::default() })]

            #[test]
            fn hellinger_symmetric(a in parts(), b in parts()) {
                let (p, q) = (mix(&a), mix(&b));
                let pq = hellinger_sq(&p, &q, &quad()).unwrap();
                let qp = hellinger_sq(&q, &p, &quad()).unwrap();
                prop_assert!((pq - qp).abs() <= 1e-9);
            }

            #[test]
            fn hellinger_triangle(a in parts(), b in parts(), c in parts()) {
                let (p, q, r) = (mix(&a), mix(&b), mix(&c));
                let d = |x: &PredictiveDensity, y: &PredictiveDensity| hellinger_sq(x, y, &quad()).unwrap().sqrt();
                prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-8);
            }

            #[test]
            fn chain_on_gaussian_pairs(m1 in -4.0f64..4.0, s1 in 0.2f64..3.0, m2 in -4.0f64..4.0, s2 in 0.2f64..3.0) {
                let (p, q) = (g(m1, s1), g(m2, s2));
                let h = hellinger_sq(&p, &q, &quad()).unwrap();
                prop_assert!(h <= kl_divergence(&p, &q, &quad()).unwrap() + 1e-9);
                prop_assert!(h <= abs_distance(&p, &q, &quad()).unwrap() + 1e-9);
                prop_assert!(h <= 2.0);
            }

            #[test]
            fn closed_form_agrees_with_quadrature(m1 in -4.0f64..4.0, s1 in 0.2f64..3.0, m2 in -4.0f64..4.0, s2 in 0.2f64..3.0) {
                let closed = hellinger_sq(&g(m1, s1), &g(m2, s2), &quad()).unwrap();
                let quadr = hellinger_sq(&wrapped(m1, s1), &wrapped(m2, s2), &quad()).unwrap();
                prop_assert!((closed - quadr).abs() <= 1e-7);
                let kc = kl_divergence(&g(m1, s1), &g(m2, s2), &quad()).unwrap();
                let kq = kl_divergence(&wrapped(m1, s1), &wrapped(m2, s2), &quad()).unwrap();
                prop_assert!((kc - kq).abs() <= 1e-7 * kc.max(1.0));
            }

            #[test]
            fn discrete_distances_zero_iff_equal(p in prop::collection::vec(0.0f64..1.0, 4), q in prop::collection::vec(0.0f64..1.0, 4)) {
                let (h, s) = discrete_distances(&p, &q).unwrap();
                prop_assert!(h >= 0.0 && s >= 0.0);
                prop_assert_eq!(h + s == 0.0, p == q);
                prop_assert_eq!(discrete_distances(&p, &p).unwrap(), (0.0, 0.0));
            }
        }
    }
}

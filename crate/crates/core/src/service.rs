//! Service-time laws.
//!
//! Every law exposes the quantities the rest of the crate consumes: sampling
//! for the simulator, the distribution function `G`, its survival `1 - G`,
//! density, hazard rate `g / (1 - G)`, the mean `1/μ` and the normalised age
//! integral `μ ∫₀^y (1 - G(x)) dx` that shapes the joint age law of the
//! insensitive fixed point.
//!
//! Deterministic service is accepted even though it has no density (and
//! therefore no bounded hazard). It is the most interesting stress case for
//! insensitivity, so the simulator supports it while [`ServiceDistribution::hazard`]
//! reports it as unsupported. [`ServiceDistribution::has_bounded_hazard`]
//! documents, per law, whether the hazard is a bounded continuous function.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::quad;

/// Absolute tolerance of the quadrature behind [`ServiceDistribution::age_factor`].
pub const AGE_QUADRATURE_TOL: f64 = 1e-12;

/// Raw, unvalidated description of a service law, as it appears in
/// experiment configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceKind {
    Exponential { rate: f64 },
    /// `i` exponential phases of rate `phase_rate` with probability `phase_probs[i - 1]`.
    MixedErlang { phase_rate: f64, phase_probs: Vec<f64> },
    Gamma { shape: f64, scale: f64 },
    Lognormal { log_mean: f64, log_sd: f64 },
    Deterministic { value: f64 },
}

#[derive(Debug, Clone)]
enum Law {
    Exponential {
        rate: f64,
        sampler: Exp<f64>,
    },
    MixedErlang {
        phase_rate: f64,
        /// `cumulative[i]` = P(at most i + 1 phases).
        cumulative: Vec<f64>,
        /// `tail_weight[k]` = P(more than k phases).
        tail_weight: Vec<f64>,
        phase: Exp<f64>,
    },
    Gamma {
        cdf: statrs::distribution::Gamma,
        sampler: Gamma<f64>,
        shape: f64,
    },
    Lognormal {
        cdf: statrs::distribution::LogNormal,
        sampler: LogNormal<f64>,
    },
    Deterministic {
        value: f64,
    },
}

/// A validated service-time distribution. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ServiceKind", into = "ServiceKind")]
pub struct ServiceDistribution {
    kind: ServiceKind,
    law: Law,
    mean: f64,
}

impl PartialEq for ServiceDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl ServiceDistribution {
    pub fn new(kind: ServiceKind) -> Result<Self> {
        let (law, mean) = match &kind {
            ServiceKind::Exponential { rate } => {
                let rate = positive("rate", *rate)?;
                let sampler = Exp::new(rate).map_err(|e| invalid("rate", e.to_string()))?;
                (Law::Exponential { rate, sampler }, 1.0 / rate)
            }
            ServiceKind::MixedErlang {
                phase_rate,
                phase_probs,
            } => {
                let phase_rate = positive("phase_rate", *phase_rate)?;
                if phase_probs.is_empty() {
                    return Err(invalid("phase_probs", "must not be empty"));
                }
                if let Some(p) = phase_probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return Err(invalid(
                        "phase_probs",
                        format!("entries must be nonnegative, got {p}"),
                    ));
                }
                let total: f64 = phase_probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(
                        "phase_probs",
                        format!("must sum to 1 within 1e-12, sums to {total}"),
                    ));
                }
                let mut acc = 0.0;
                let cumulative: Vec<f64> = phase_probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                let m = phase_probs.len();
                let mut tail_weight = vec![0.0; m];
                let mut tail = 0.0;
                for k in (0..m).rev() {
                    tail += phase_probs[k];
                    tail_weight[k] = tail;
                }
                let mean_phases: f64 = phase_probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i + 1) as f64 * p)
                    .sum();
                let phase = Exp::new(phase_rate).map_err(|e| invalid("phase_rate", e.to_string()))?;
                (
                    Law::MixedErlang {
                        phase_rate,
                        cumulative,
                        tail_weight,
                        phase,
                    },
                    mean_phases / phase_rate,
                )
            }
            ServiceKind::Gamma { shape, scale } => {
                let shape = positive("shape", *shape)?;
                let scale = positive("scale", *scale)?;
                let cdf = statrs::distribution::Gamma::new(shape, 1.0 / scale)
                    .map_err(|e| invalid("shape", e.to_string()))?;
                let sampler =
                    Gamma::new(shape, scale).map_err(|e| invalid("shape", e.to_string()))?;
                (
                    Law::Gamma {
                        cdf,
                        sampler,
                        shape,
                    },
                    shape * scale,
                )
            }
            ServiceKind::Lognormal { log_mean, log_sd } => {
                if !log_mean.is_finite() {
                    return Err(invalid("log_mean", "must be finite"));
                }
                let log_sd = positive("log_sd", *log_sd)?;
                let cdf = statrs::distribution::LogNormal::new(*log_mean, log_sd)
                    .map_err(|e| invalid("log_sd", e.to_string()))?;
                let sampler =
                    LogNormal::new(*log_mean, log_sd).map_err(|e| invalid("log_sd", e.to_string()))?;
                (Law::Lognormal { cdf, sampler }, (log_mean + 0.5 * log_sd * log_sd).exp())
            }
            ServiceKind::Deterministic { value } => {
                let value = positive("value", *value)?;
                (Law::Deterministic { value }, value)
            }
        };
        if !(mean.is_finite() && mean > 0.0) {
            return Err(invalid("kind", format!("mean must be positive and finite, got {mean}")));
        }
        Ok(Self { kind, law, mean })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(ServiceKind::Exponential { rate })
    }

    pub fn mixed_erlang(phase_rate: f64, phase_probs: Vec<f64>) -> Result<Self> {
        Self::new(ServiceKind::MixedErlang {
            phase_rate,
            phase_probs,
        })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(ServiceKind::Gamma { shape, scale })
    }

    /// Gamma law with the given shape, scaled to hit `mean`.
    pub fn gamma_with_mean(shape: f64, mean: f64) -> Result<Self> {
        Self::gamma(shape, mean / shape)
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        Self::new(ServiceKind::Lognormal { log_mean, log_sd })
    }

    /// Lognormal law with the given log-scale spread, located to hit `mean`.
    pub fn lognormal_with_mean(log_sd: f64, mean: f64) -> Result<Self> {
        Self::lognormal(mean.ln() - 0.5 * log_sd * log_sd, log_sd)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::new(ServiceKind::Deterministic { value })
    }

    pub fn kind(&self) -> &ServiceKind {
        &self.kind
    }

    /// Short label for reports.
    pub fn label(&self) -> &'static str {
        match self.kind {
            ServiceKind::Exponential { .. } => "exponential",
            ServiceKind::MixedErlang { .. } => "mixed_erlang",
            ServiceKind::Gamma { .. } => "gamma",
            ServiceKind::Lognormal { .. } => "lognormal",
            ServiceKind::Deterministic { .. } => "deterministic",
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Service rate `μ = 1 / mean`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean
    }

    /// Checks that this law reproduces the target mean within `1e-9` (relative).
    pub fn check_mean(&self, target: f64) -> Result<()> {
        if ((self.mean - target) / target).abs() > 1e-9 {
            return Err(invalid(
                "service",
                format!("mean {} does not match the configured 1/mu = {target}", self.mean),
            ));
        }
        Ok(())
    }

    /// Whether the hazard rate is a bounded continuous function on `[0, ∞)`.
    pub fn has_bounded_hazard(&self) -> bool {
        match &self.law {
            Law::Exponential { .. } | Law::MixedErlang { .. } | Law::Lognormal { .. } => true,
            Law::Gamma { shape, .. } => *shape >= 1.0,
            Law::Deterministic { .. } => false,
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.law {
            Law::Exponential { rate, .. } => (-rate * x).exp(),
            Law::MixedErlang {
                phase_rate,
                tail_weight,
                ..
            } => {
                let rx = phase_rate * x;
                let mut pmf = (-rx).exp();
                let mut s = 0.0;
                for (k, w) in tail_weight.iter().enumerate() {
                    if k > 0 {
                        pmf *= rx / k as f64;
                    }
                    s += pmf * w;
                }
                s.min(1.0)
            }
            Law::Gamma { cdf, .. } => cdf.sf(x),
            Law::Lognormal { cdf, .. } => cdf.sf(x),
            Law::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.law {
            Law::Exponential { rate, .. } => -(-rate * x).exp_m1(),
            Law::Gamma { cdf, .. } => cdf.cdf(x),
            Law::Lognormal { cdf, .. } => cdf.cdf(x),
            _ => 1.0 - self.survival(x),
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        Ok(match &self.law {
            Law::Exponential { rate, .. } => rate * (-rate * x).exp(),
            Law::MixedErlang {
                phase_rate,
                cumulative,
                ..
            } => {
                let rx = phase_rate * x;
                let mut pmf = (-rx).exp();
                let mut prev = 0.0;
                let mut s = 0.0;
                for (k, c) in cumulative.iter().enumerate() {
                    if k > 0 {
                        pmf *= rx / k as f64;
                    }
                    s += (c - prev) * pmf;
                    prev = *c;
                }
                phase_rate * s
            }
            Law::Gamma { cdf, .. } => cdf.pdf(x),
            Law::Lognormal { cdf, .. } => cdf.pdf(x),
            Law::Deterministic { .. } => {
                return Err(Error::Unsupported(
                    "deterministic service has no density".into(),
                ))
            }
        })
    }

    /// Hazard rate `g(x) / (1 - G(x))`.
    pub fn hazard(&self, x: f64) -> Result<f64> {
        match &self.law {
            Law::Exponential { rate, .. } => Ok(*rate),
            Law::Deterministic { .. } => Err(Error::Unsupported(
                "deterministic service has no hazard rate".into(),
            )),
            _ => {
                let sf = self.survival(x);
                if sf <= 0.0 {
                    return Err(Error::Domain(format!(
                        "hazard undefined beyond support (survival({x}) = 0)"
                    )));
                }
                Ok(self.density(x)? / sf)
            }
        }
    }

    /// Draws one service time.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.law {
            Law::Exponential { sampler, .. } => sampler.sample(rng),
            Law::MixedErlang {
                cumulative, phase, ..
            } => {
                let u: f64 = rng.random();
                let phases = cumulative
                    .iter()
                    .position(|c| u < *c)
                    .unwrap_or(cumulative.len() - 1)
                    + 1;
                (0..phases).map(|_| phase.sample(rng)).sum()
            }
            Law::Gamma { sampler, .. } => sampler.sample(rng),
            Law::Lognormal { sampler, .. } => sampler.sample(rng),
            Law::Deterministic { value } => *value,
        }
    }

    /// `μ ∫₀^y (1 - G(x)) dx`, the probability that an equilibrium job age is
    /// at most `y`. Equals 0 at `y = 0` and exactly 1 at `y = ∞`.
    pub fn age_factor(&self, y: f64) -> f64 {
        if y.is_nan() || y <= 0.0 {
            return 0.0;
        }
        if y == f64::INFINITY {
            return 1.0;
        }
        let mu = self.rate();
        let v = match &self.law {
            Law::Exponential { rate, .. } => -(-rate * y).exp_m1(),
            Law::MixedErlang {
                phase_rate,
                tail_weight,
                ..
            } => {
                // ∫₀^y P(Erlang(i) > x) dx = (1/r) Σ_{k<i} P(Poisson(r y) > k)
                let ry = phase_rate * y;
                let mut pmf = (-ry).exp();
                let mut below = 0.0;
                let mut s = 0.0;
                for (k, w) in tail_weight.iter().enumerate() {
                    if k > 0 {
                        pmf *= ry / k as f64;
                    }
                    below += pmf;
                    s += w * (1.0 - below).max(0.0);
                }
                mu * s / phase_rate
            }
            Law::Deterministic { value } => y.min(*value) / value,
            Law::Gamma { .. } | Law::Lognormal { .. } => {
                mu * quad::integrate(|x| self.survival(x), 0.0, y, AGE_QUADRATURE_TOL)
            }
        };
        v.clamp(0.0, 1.0)
    }
}

impl TryFrom<ServiceKind> for ServiceDistribution {
    type Error = Error;

    fn try_from(kind: ServiceKind) -> Result<Self> {
        Self::new(kind)
    }
}

impl From<ServiceDistribution> for ServiceKind {
    fn from(d: ServiceDistribution) -> Self {
        d.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_mixed_erlang() -> ServiceDistribution {
        ServiceDistribution::mixed_erlang(2.1, vec![0.3, 0.3, 0.4]).unwrap()
    }

    fn all_laws() -> Vec<ServiceDistribution> {
        vec![
            ServiceDistribution::exponential(1.3).unwrap(),
            reference_mixed_erlang(),
            ServiceDistribution::gamma(2.0, 0.5).unwrap(),
            ServiceDistribution::gamma(0.7, 1.5).unwrap(),
            ServiceDistribution::lognormal_with_mean(0.8, 1.0).unwrap(),
            ServiceDistribution::deterministic(0.5).unwrap(),
        ]
    }

    #[test]
    fn means() {
        assert_eq!(ServiceDistribution::exponential(1.0).unwrap().mean(), 1.0);
        assert!((reference_mixed_erlang().mean() - 1.0).abs() < 1e-15);
        assert_eq!(ServiceDistribution::deterministic(0.5).unwrap().mean(), 0.5);
        let ln = ServiceDistribution::lognormal_with_mean(0.8, 2.0).unwrap();
        assert!(ln.check_mean(2.0).is_ok());
    }

    #[test]
    fn hazards() {
        let e = ServiceDistribution::exponential(2.0).unwrap();
        assert_eq!(e.hazard(3.7).unwrap(), 2.0);
        let m1 = ServiceDistribution::mixed_erlang(1.0, vec![1.0]).unwrap();
        assert!((m1.hazard(5.0).unwrap() - 1.0).abs() < 1e-12);
        // x e^{-x} / ((1 + x) e^{-x}) at x = 1
        let g = ServiceDistribution::gamma(2.0, 1.0).unwrap();
        let oracle = (1.0f64 * (-1.0f64).exp()) / (2.0 * (-1.0f64).exp());
        assert!((g.hazard(1.0).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hazard_errors() {
        let det = ServiceDistribution::deterministic(1.0).unwrap();
        assert!(matches!(det.hazard(0.2), Err(Error::Unsupported(_))));
        let g = ServiceDistribution::gamma(2.0, 1.0).unwrap();
        assert!(matches!(g.hazard(1e4), Err(Error::Domain(_))));
    }

    #[test]
    fn validation() {
        assert!(ServiceDistribution::mixed_erlang(2.0, vec![0.5, 0.49]).is_err());
        assert!(ServiceDistribution::mixed_erlang(2.0, vec![1.1, -0.1]).is_err());
        assert!(ServiceDistribution::mixed_erlang(0.0, vec![1.0]).is_err());
        assert!(ServiceDistribution::exponential(-1.0).is_err());
        assert!(ServiceDistribution::gamma(f64::NAN, 1.0).is_err());
        assert!(ServiceDistribution::deterministic(0.0).is_err());
        assert!(ServiceDistribution::exponential(2.0).unwrap().check_mean(1.0).is_err());
    }

    #[test]
    fn deterministic_sample_is_point_mass() {
        let det = ServiceDistribution::deterministic(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        assert!((0..10).all(|_| det.sample(&mut rng) == 1.5));
    }

    fn empirical_mean(d: &ServiceDistribution, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1_000_000;
        (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn sample_means_match() {
        let e = ServiceDistribution::exponential(1.0).unwrap();
        assert!((empirical_mean(&e, 11) - 1.0).abs() < 0.01);
        assert!((empirical_mean(&reference_mixed_erlang(), 12) - 1.0).abs() < 0.01);
        let g = ServiceDistribution::gamma(2.0, 0.5).unwrap();
        assert!((empirical_mean(&g, 13) - 1.0).abs() < 0.01);
    }

    #[test]
    fn sampling_is_reproducible() {
        for d in all_laws() {
            let mut a = ChaCha8Rng::seed_from_u64(5);
            let mut b = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..100 {
                assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
            }
        }
    }

    #[test]
    fn age_factor_endpoints() {
        for d in all_laws() {
            assert_eq!(d.age_factor(0.0), 0.0);
            assert_eq!(d.age_factor(f64::INFINITY), 1.0);
        }
        let e = ServiceDistribution::exponential(1.0).unwrap();
        assert!((e.age_factor(2f64.ln()) - 0.5).abs() < 1e-15);
    }

    // E[min(X, y)] = ∫₀^y (1 - G) is an independent route for the laws that use
    // quadrature; the Gamma and lognormal partial expectations are closed form.
    fn partial_expectation(d: &ServiceDistribution, y: f64) -> f64 {
        match d.kind() {
            ServiceKind::Gamma { shape, scale } => {
                let p = |a: f64| statrs::function::gamma::gamma_lr(a, y / scale);
                shape * scale * p(shape + 1.0) + y * (1.0 - p(*shape))
            }
            ServiceKind::Lognormal { log_mean, log_sd } => {
                let phi = |z: f64| 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
                let (m, s) = (*log_mean, *log_sd);
                (m + 0.5 * s * s).exp() * phi((y.ln() - m - s * s) / s)
                    + y * (1.0 - phi((y.ln() - m) / s))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn age_factor_quadrature_matches_partial_expectation() {
        let laws = [
            ServiceDistribution::gamma(2.0, 0.5).unwrap(),
            ServiceDistribution::gamma(0.7, 1.5).unwrap(),
            ServiceDistribution::lognormal_with_mean(0.8, 1.0).unwrap(),
        ];
        for d in &laws {
            for y in [0.01, 0.3, 1.0, 2.5, 10.0, 80.0] {
                let oracle = partial_expectation(d, y) / d.mean();
                let got = d.age_factor(y);
                assert!((got - oracle).abs() < 1e-10, "{:?} y={y}: {got} vs {oracle}", d.kind());
            }
        }
    }

    #[test]
    fn mixed_erlang_age_factor_matches_quadrature() {
        let d = reference_mixed_erlang();
        for y in [0.1, 0.5, 1.0, 3.0, 12.0] {
            let q = quad::integrate(|x| d.survival(x), 0.0, y, 1e-13) / d.mean();
            assert!((d.age_factor(y) - q).abs() < 1e-11);
        }
    }

    #[test]
    fn survival_integrates_to_mean() {
        for d in all_laws() {
            if d.density(0.5).is_err() {
                continue;
            }
            let integral = quad::integrate_to_infinity(|x| d.survival(x), 0.0, 1e-12);
            assert!(
                ((integral - d.mean()) / d.mean()).abs() < 1e-8,
                "{:?}: {integral} vs {}",
                d.kind(),
                d.mean()
            );
        }
    }

    #[test]
    fn single_phase_mixed_erlang_is_exponential() {
        let m1 = ServiceDistribution::mixed_erlang(1.7, vec![1.0]).unwrap();
        let e = ServiceDistribution::exponential(1.7).unwrap();
        assert!((m1.mean() - e.mean()).abs() < 1e-12);
        for i in 0..200 {
            let x = i as f64 * 0.05;
            assert!((m1.cdf(x) - e.cdf(x)).abs() < 1e-12);
            assert!((m1.hazard(x).unwrap() - e.hazard(x).unwrap()).abs() < 1e-12);
            assert!((m1.age_factor(x) - e.age_factor(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn bounded_hazard_flags() {
        assert!(reference_mixed_erlang().has_bounded_hazard());
        assert!(ServiceDistribution::gamma(2.0, 0.5).unwrap().has_bounded_hazard());
        assert!(!ServiceDistribution::gamma(0.5, 2.0).unwrap().has_bounded_hazard());
        assert!(!ServiceDistribution::deterministic(1.0).unwrap().has_bounded_hazard());
    }

    #[test]
    fn config_records_round_trip() {
        let json = r#"{"kind":"mixed_erlang","phase_rate":2.1,"phase_probs":[0.3,0.3,0.4]}"#;
        let d: ServiceDistribution = serde_json::from_str(json).unwrap();
        assert_eq!(d, reference_mixed_erlang());
        assert_eq!(serde_json::to_string(&d).unwrap(), json);
        let bad = r#"{"kind":"mixed_erlang","phase_rate":2.1,"phase_probs":[0.3,0.3,0.39]}"#;
        assert!(serde_json::from_str::<ServiceDistribution>(bad).is_err());
        let unknown = r#"{"kind":"exponential","rate":1.0,"extra":2}"#;
        assert!(serde_json::from_str::<ServiceDistribution>(unknown).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn law() -> impl Strategy<Value = ServiceDistribution> {
            prop_oneof![
                (0.1f64..5.0).prop_map(|r| ServiceDistribution::exponential(r).unwrap()),
                (0.2f64..5.0, proptest::collection::vec(0.0f64..1.0, 1..5)).prop_filter_map(
                    "degenerate weights",
                    |(r, w)| {
                        let s: f64 = w.iter().sum();
                        if s < 1e-3 {
                            return None;
                        }
                        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
                        let head: f64 = p[..p.len() - 1].iter().sum();
                        let last = p.len() - 1;
                        p[last] = (1.0 - head).max(0.0);
                        ServiceDistribution::mixed_erlang(r, p).ok()
                    }
                ),
                (0.3f64..6.0, 0.1f64..3.0).prop_map(|(k, s)| ServiceDistribution::gamma(k, s).unwrap()),
                (-1.0f64..1.0, 0.1f64..1.5)
                    .prop_map(|(m, s)| ServiceDistribution::lognormal(m, s).unwrap()),
                (0.1f64..4.0).prop_map(|v| ServiceDistribution::deterministic(v).unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn cdf_is_a_distribution_function(d in law(), x in 0.0f64..20.0, h in 0.0f64..5.0) {
                let (a, b) = (d.cdf(x), d.cdf(x + h));
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b >= a - 1e-15);
                prop_assert!((d.survival(x) - (1.0 - a)).abs() <= 1e-12);
                prop_assert!(d.cdf(0.0) < 1.0);
                prop_assert!(d.cdf(1e6) > 1.0 - 1e-9);
            }

            #[test]
            fn age_factor_is_monotone(d in law(), y in 0.0f64..10.0, h in 0.0f64..3.0) {
                let (a, b) = (d.age_factor(y), d.age_factor(y + h));
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b >= a - 1e-11);
            }
        }
    }
}

//! Closed-form laws for single edges, paths and stars, together with the
//! constants and condition checkers built from them.

mod phase;
mod star;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

pub use phase::{phase_classify, PhaseVerdict, Regime, TailClass};
pub use star::{
    r_n, r_n_and_star_condition, star_constants, star_path_bound, survival_functions, StarCondition,
    StarConstants, SurvivalFunctions, STAR_C,
};

/// Exponent of the path-transmission bound: the maximum over theta of
/// 4 theta + 2 ln(1 - theta), attained at theta = 1/2.
pub const GAMMA: f64 = 2.0 - 2.0 * std::f64::consts::LN_2;

/// P(edge open after time `s`) given its current state.
pub fn bg_transition(p: f64, v: f64, open_now: bool, s: f64) -> f64 {
    let stay = (-v * s).exp();
    if open_now {
        p + (1.0 - p) * stay
    } else {
        p * (1.0 - stay)
    }
}

/// Probability that an initially closed edge transmits before the infected
/// endpoint recovers.
pub fn transmission_prob(lambda: f64, v: f64, p: f64) -> f64 {
    let x = lambda * v * p;
    x / (lambda + v + x + 1.0)
}

/// Rates of the two exponential phases of the first transmission time over
/// an initially closed edge; `a >= b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeLaw {
    pub lambda: f64,
    pub v: f64,
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl EdgeLaw {
    pub fn new(lambda: f64, v: f64, p: f64) -> Self {
        let s = lambda + v;
        let prod = lambda * v * p;
        let root = (s * s - 4.0 * prod).max(0.0).sqrt();
        let a = 0.5 * (s + root);
        // Smaller root from the product, avoiding cancellation.
        let b = if a > 0.0 { prod / a } else { 0.0 };
        Self { lambda, v, p, a, b }
    }
}

/// Relative gap between the two rates below which the confluent form is used.
const CONFLUENT_GAP: f64 = 1e-6;

/// P(T > t | T before recovery, edge initially closed) for the first
/// transmission time T.
pub fn transmission_time_tail(law: &EdgeLaw, t: f64) -> f64 {
    let (a, b) = (law.a, law.b);
    let ra = a + 1.0;
    let rb = b + 1.0;
    if (a - b).abs() <= CONFLUENT_GAP * ra {
        let r = 0.5 * (ra + rb);
        return (1.0 + r * t) * (-r * t).exp();
    }
    rb / (b - a) * (-ra * t).exp() + ra / (a - b) * (-rb * t).exp()
}

/// Laplace transform of a geometric number of sums Exp(alpha) + Exp(beta).
pub fn geom_exp_laplace(alpha: f64, beta: f64, q: f64, theta: f64) -> f64 {
    let num = q * alpha * beta;
    num / (theta * theta + theta * (alpha + beta) + num)
}

/// One draw of sum_{i <= N} (Exp(alpha) + Exp(beta)) with N ~ Geom(q) on {1, 2, ...}.
pub fn sample_geom_exp_sum<R: Rng + ?Sized>(alpha: f64, beta: f64, q: f64, rng: &mut R) -> f64 {
    let ea = Exp::new(alpha).expect("alpha > 0");
    let eb = Exp::new(beta).expect("beta > 0");
    let mut total = 0.0;
    loop {
        total += ea.sample(rng) + eb.sample(rng);
        if rng.random::<f64>() < q {
            return total;
        }
    }
}

/// Parameters of the geometric-sum representation of the first transmission
/// time over an initially closed edge: (alpha, beta, q).
pub fn edge_geom_params(lambda: f64, v: f64, p: f64) -> (f64, f64, f64) {
    (p * v, (1.0 - p) * v + lambda, lambda / (lambda + (1.0 - p) * v))
}

/// Static infection rate of the dominated contact process: the smaller root
/// of x^2 - (lambda + v) x + lambda v p.
pub fn lower_bound_rate(lambda: f64, v: f64, p: f64) -> f64 {
    let s = lambda + v;
    let prod = lambda * v * p;
    if prod <= 0.0 {
        return 0.0;
    }
    let root = (s * s - 4.0 * prod).max(0.0).sqrt();
    2.0 * prod / (s + root)
}

/// Probability that a two-state chain (rate lambda M up, rate 1 down)
/// started down hits the up state by time t.
pub fn two_state_hit_prob(lambda: f64, m: u32, t: f64) -> f64 {
    let x = lambda * f64::from(m);
    x / (x + 1.0) * (1.0 - (-(x + 1.0) * t).exp())
}

/// Lower bound on infecting the far end of a path within time 4r. `degrees`
/// lists the degrees of x_0, ..., x_r.
pub fn path_lower_bound(degrees: &[u32], lambda: f64, kernel: &KernelSpec) -> Result<f64> {
    if degrees.len() < 2 {
        return Err(Error::EmptyRange);
    }
    let r = (degrees.len() - 1) as f64;
    let prod: f64 = degrees
        .windows(2)
        .map(|w| transmission_prob(lambda, kernel.v_value(w[0], w[1]), kernel.p_value(w[0], w[1])))
        .product();
    Ok((1.0 - (-GAMMA * r).exp()) * prod)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;

    #[test]
    fn bg_transition_examples() {
        assert!((bg_transition(0.5, 1.0, false, std::f64::consts::LN_2) - 0.25).abs() < 1e-15);
        assert_eq!(bg_transition(0.3, 2.0, true, 0.0), 1.0);
        assert_eq!(bg_transition(0.3, 2.0, false, 0.0), 0.0);
        assert!((bg_transition(0.3, 2.0, true, 1e3) - 0.3).abs() < 1e-15);
        assert!((bg_transition(0.3, 2.0, false, 1e3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn transmission_examples() {
        assert_eq!(transmission_prob(1.0, 1.0, 0.0), 0.0);
        assert!((transmission_prob(1.0, 1.0, 1.0) - 0.25).abs() < 1e-15);
        assert!((transmission_prob(2.0, 3.0, 1.0 / 3.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tail_limits() {
        let law = EdgeLaw::new(1.0, 4.0, 0.5);
        assert!((transmission_time_tail(&law, 0.0) - 1.0).abs() < 1e-14);
        assert!(transmission_time_tail(&law, 60.0) < 1e-20);
        let expected_a = (5.0 + 17f64.sqrt()) / 2.0;
        assert!((law.a - expected_a).abs() < 1e-12);
    }

    /// Density of T restricted to {T < recovery}, integrated by Simpson's rule.
    fn tail_by_quadrature(law: &EdgeLaw, t: f64) -> f64 {
        let (a, b) = (law.a, law.b);
        let density = |s: f64| {
            let f = if (a - b).abs() < 1e-9 {
                a * a * s * (-a * s).exp()
            } else {
                a * b / (a - b) * ((-b * s).exp() - (-a * s).exp())
            };
            f * (-s).exp()
        };
        let integrate = |lo: f64, hi: f64| {
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mut acc = density(lo) + density(hi);
            for i in 1..n {
                acc += density(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        integrate(t, 80.0) / integrate(0.0, 80.0)
    }

    #[test]
    fn confluent_tail_matches_quadrature() {
        // p = 1 and lambda = v give a repeated root.
        let law = EdgeLaw::new(1.5, 1.5, 1.0);
        assert!((law.a - law.b).abs() < 1e-7);
        for t in [0.1, 0.5, 1.0, 3.0] {
            let q = tail_by_quadrature(&law, t);
            assert!((transmission_time_tail(&law, t) - q).abs() < 1e-8, "t={t}");
        }
        let near = EdgeLaw::new(1.5, 1.5, 0.999_999_9);
        assert!((transmission_time_tail(&near, 1.0) - transmission_time_tail(&law, 1.0)).abs() < 1e-5);
    }

    #[test]
    fn tail_matches_quadrature_generic() {
        for (l, v, p) in [(1.0, 4.0, 0.5), (0.3, 2.0, 0.9), (5.0, 0.2, 0.1)] {
            let law = EdgeLaw::new(l, v, p);
            for t in [0.2, 1.0, 2.5] {
                let q = tail_by_quadrature(&law, t);
                assert!((transmission_time_tail(&law, t) - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn transmission_prob_is_laplace_at_one() {
        for (l, v, p) in [(1.0, 4.0, 0.5), (0.3, 2.0, 0.9), (5.0, 0.2, 0.1), (2.0, 3.0, 1.0)] {
            let (a, b, q) = edge_geom_params(l, v, p);
            assert!((geom_exp_laplace(a, b, q, 1.0) - transmission_prob(l, v, p)).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_mean_cross_check() {
        // E[T e^{-T}] = -d/dtheta L(theta) at 1, divided by L(1), equals the
        // integral of the conditional tail.
        let (l, v, p) = (1.0, 4.0, 0.5);
        let (al, be, q) = edge_geom_params(l, v, p);
        let h = 1e-5;
        let deriv = (geom_exp_laplace(al, be, q, 1.0 + h) - geom_exp_laplace(al, be, q, 1.0 - h)) / (2.0 * h);
        let mean_from_laplace = -deriv / geom_exp_laplace(al, be, q, 1.0);
        let law = EdgeLaw::new(l, v, p);
        let n = 200_000;
        let hi = 60.0;
        let step = hi / n as f64;
        let mut acc = transmission_time_tail(&law, 0.0) + transmission_time_tail(&law, hi);
        for i in 1..n {
            acc += transmission_time_tail(&law, i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let mean_from_tail = acc * step / 3.0;
        assert!((mean_from_laplace - mean_from_tail).abs() < 1e-6);
    }

    #[test]
    fn laplace_examples() {
        assert_eq!(geom_exp_laplace(2.0, 3.0, 0.4, 0.0), 1.0);
        assert!((geom_exp_laplace(1.0, 1.0, 1.0, 1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn laplace_by_sampling() {
        let mut rng = rng_from(2);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| (-sample_geom_exp_sum(2.0, 3.0, 0.4, &mut rng)).exp()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - geom_exp_laplace(2.0, 3.0, 0.4, 1.0)).abs() < 3.0 * se);
    }

    #[test]
    fn lower_bound_rate_examples() {
        assert_eq!(lower_bound_rate(1.0, 1.0, 0.0), 0.0);
        assert!((lower_bound_rate(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        let a = lower_bound_rate(1.0, 4.0, 0.5);
        assert!((a - (5.0 - 17f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!((0.4..=0.8).contains(&a));
    }

    #[test]
    fn lower_bound_rate_tends_to_penalised_rate() {
        let (l, p) = (0.7, 0.3);
        let rates: Vec<f64> = [1.0, 10.0, 1e2, 1e3, 1e4].iter().map(|&v| lower_bound_rate(l, v, p)).collect();
        assert!(rates.windows(2).all(|w| w[1] > w[0]));
        assert!(rates.iter().all(|&a| a < l * p));
        assert!((l * p - rates[4]) < 1e-4);
    }

    #[test]
    fn two_state_examples() {
        assert_eq!(two_state_hit_prob(1.0, 3, 0.0), 0.0);
        assert!((two_state_hit_prob(1.0, 3, 1e3) - 0.75).abs() < 1e-15);
        assert!((two_state_hit_prob(1.0, 1, std::f64::consts::LN_2 / 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gamma_is_the_numeric_maximizer() {
        let best = (1..100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|th| 4.0 * th + 2.0 * (1.0 - th).ln())
            .fold(f64::MIN, f64::max);
        assert!((best - GAMMA).abs() < 1e-8);
        assert!((GAMMA - 0.613_705_638_880_109_4).abs() < 1e-15);
    }

    #[test]
    fn path_bound_examples() {
        let k = KernelSpec::constant(1.0, 1.0).unwrap();
        let b = path_lower_bound(&[3, 3], 1.0, &k).unwrap();
        assert!((b - (1.0 - (-GAMMA).exp()) * 0.25).abs() < 1e-15);
        assert!((b - 0.114_664_72).abs() < 1e-8);
        assert!(path_lower_bound(&[3, 3, 3], 1e-9, &k).unwrap() < 1e-17);
        assert!(matches!(path_lower_bound(&[3], 1.0, &k), Err(Error::EmptyRange)));
    }

    proptest! {
        #[test]
        fn edge_law_identities(l in 1e-3f64..100.0, v in 1e-3f64..100.0, p in 0.0f64..=1.0) {
            let law = EdgeLaw::new(l, v, p);
            prop_assert!(law.a >= law.b && law.b >= 0.0);
            prop_assert!(((law.a + law.b) - (l + v)).abs() <= 1e-10 * (l + v));
            let prod = l * v * p;
            prop_assert!((law.a * law.b - prod).abs() <= 1e-10 * prod.max(1e-300));
            prop_assert!(((1.0 + law.a) * (1.0 + law.b) - (l + v + prod + 1.0)).abs() <= 1e-10 * (l + v + prod + 1.0));
        }

        #[test]
        fn rate_bounds(l in 1e-3f64..100.0, v in 1e-3f64..100.0, p in 0.0f64..=1.0) {
            let a = lower_bound_rate(l, v, p);
            let base = l * v * p / (l + v);
            prop_assert!(a >= base * (1.0 - 1e-12));
            prop_assert!(a <= 2.0 * base * (1.0 + 1e-12));
            prop_assert!(a <= l * p * (1.0 + 1e-12));
        }

        #[test]
        fn chapman_kolmogorov(p in 0.0f64..=1.0, v in 1e-3f64..50.0, s1 in 0.0f64..5.0, s2 in 0.0f64..5.0, open in any::<bool>()) {
            let first = bg_transition(p, v, open, s1);
            let composed = first * bg_transition(p, v, true, s2) + (1.0 - first) * bg_transition(p, v, false, s2);
            prop_assert!((composed - bg_transition(p, v, open, s1 + s2)).abs() < 1e-12);
        }
    }
}

use serde::Serialize;

use super::GAMMA;
use crate::error::{Error, Result};
use crate::graph::OffspringDistribution;
use crate::kernels::KernelSpec;

/// Constant inside the stable-star level; must lie below 3 - 2 sqrt 2.
pub const STAR_C: f64 = 0.15;

/// Derived quantities for a star of degree `n` pruned at degree `l`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarConstants {
    pub n: u32,
    pub l: u32,
    pub lambda: f64,
    /// Window length T.
    pub t: f64,
    /// P(zeta <= l - 1).
    pub phi_l: f64,
    /// E[zeta 1{zeta < l}].
    pub mu_l: f64,
    pub c_l: f64,
    pub delta: f64,
    /// p(n, l).
    pub p_nl: f64,
    /// Good-neighbour level c_L n p(n, l) a stable star must exceed.
    pub threshold: f64,
    /// Number of windows over which local survival is controlled.
    pub k_bar: f64,
    /// Time horizon T k_bar.
    pub s: f64,
    /// floor(exp(threshold)): windows the stable-star event ranges over.
    pub stable_windows: f64,
    /// 1.5 lambda T < 1.
    pub local_survival_ok: bool,
    /// 2 lambda T < 1.
    pub kickstart_ok: bool,
    /// threshold < 1: too small a star for the asymptotic regime.
    pub underpowered: bool,
}

pub fn star_constants(
    n: u32,
    l: u32,
    lambda: f64,
    kernel: &KernelSpec,
    dist: &OffspringDistribution,
) -> Result<StarConstants> {
    if l < 1 || n < l {
        return Err(Error::invalid("star", format!("need n >= l >= 1, got n = {n}, l = {l}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    let mu_l = dist.mean_below(u64::from(l));
    if mu_l <= 1.0 {
        return Err(Error::PruneLevelTooLow(mu_l));
    }
    let t = 1.0 / (1.0 + kernel.nu * f64::from(n).powf(kernel.eta));
    let phi_l = dist.cdf(u64::from(l) - 1);
    let c_l = STAR_C * (-4.0f64).exp() * phi_l;
    let delta = c_l / 8.0;
    let p_nl = kernel.p_value(n, l);
    let np = f64::from(n) * p_nl;
    let threshold = c_l * np;
    let k_bar = (delta * lambda * lambda * t * t * np / 4.0).exp().floor();
    Ok(StarConstants {
        n,
        l,
        lambda,
        t,
        phi_l,
        mu_l,
        c_l,
        delta,
        p_nl,
        threshold,
        k_bar,
        s: t * k_bar,
        stable_windows: threshold.exp().floor(),
        local_survival_ok: 1.5 * lambda * t < 1.0,
        kickstart_ok: 2.0 * lambda * t < 1.0,
        underpowered: threshold < 1.0,
    })
}

/// Path constants shared by the survival functions and the star condition.
#[derive(Clone, Copy, Debug)]
struct PathConstants {
    /// Per-step factor of the path bound.
    k_r: f64,
    /// Degree correction for the two star endpoints.
    c_big: f64,
}

fn path_constants(sc: &StarConstants, kernel: &KernelSpec) -> Result<PathConstants> {
    let env = kernel.envelope_up_to(sc.l, sc.n.saturating_add(1))?;
    let expo = kernel.eta.min(0.0) - kernel.alpha;
    let c_p = f64::from(sc.l).powf(expo);
    let lam = sc.lambda;
    let k_r = lam * env.nu1 * env.kappa1 * c_p / (lam + lam * env.nu1 + env.nu1 + 1.0);
    let c_big = (env.kappa1 / (env.kappa2 * c_p) * (f64::from(sc.n) + 1.0).powf(expo)).powi(2);
    Ok(PathConstants { k_r, c_big })
}

/// Lower bound on the probability that a star of degree n infects a given
/// vertex r generations away within time 4r.
pub fn star_path_bound(sc: &StarConstants, r: u32, kernel: &KernelSpec) -> Result<f64> {
    let pc = path_constants(sc, kernel)?;
    Ok((1.0 - (-GAMMA).exp()) * pc.k_r.powi(r as i32) * pc.c_big)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalFunctions {
    /// Bound on losing the pool of infected good neighbours.
    pub r_lambda: f64,
    /// Bound on failing to push the infection r generations out.
    pub f_lambda: f64,
    pub b_lambda: f64,
    /// Number of independent push attempts, floor(S / (8r + 4T)).
    pub attempts: f64,
    /// Value used for the unspecified universal constant in `r_lambda`.
    pub universal_c: f64,
    /// Whether 2 lambda T < 1, needed by `b_lambda` and `f_lambda`.
    pub kickstart_ok: bool,
}

fn b_lambda(sc: &StarConstants) -> f64 {
    let lam = sc.lambda;
    let m = (sc.delta * lam * sc.t * f64::from(sc.n) * sc.p_nl).floor();
    lam * m * sc.t / ((lam * m + 1.0) * sc.t + 1.0) * (1.0 - (-GAMMA).exp())
}

fn attempts(sc: &StarConstants, r: u32) -> f64 {
    (sc.s / (8.0 * f64::from(r) + 4.0 * sc.t)).floor()
}

/// Evaluate the three survival functions. Outputs depending on
/// `universal_c` hold only up to that constant.
pub fn survival_functions(
    sc: &StarConstants,
    r: u32,
    kernel: &KernelSpec,
    universal_c: f64,
) -> Result<SurvivalFunctions> {
    let np = f64::from(sc.n) * sc.p_nl;
    let lam = sc.lambda;
    let t = sc.t;
    let r_lambda = 1.0
        - (1.0 - universal_c * (-sc.delta * lam * lam * t * t * np).exp())
            * (-2.0 * t).exp()
            * (1.0 - (-sc.delta * lam * t * np).exp());
    let b = b_lambda(sc);
    let pc = path_constants(sc, kernel)?;
    let base = (b * pc.c_big * pc.k_r.powi(r as i32)).min(1.0);
    let m = attempts(sc, r);
    let f_lambda = if m == 0.0 {
        1.0
    } else if base >= 1.0 {
        0.0
    } else {
        (m * (-base).ln_1p()).exp()
    };
    Ok(SurvivalFunctions {
        r_lambda,
        f_lambda,
        b_lambda: b,
        attempts: m,
        universal_c,
        kickstart_ok: sc.kickstart_ok,
    })
}

/// Generation depth at which a star of degree n expects to meet another
/// star: ceil(-ln(c n P(zeta = n) / mu_l) / ln mu_l).
pub fn r_n(n: u32, c: f64, p_n: f64, mu_l: f64) -> Result<i64> {
    if !(p_n > 0.0) {
        return Err(Error::OutOfSupport(u64::from(n)));
    }
    if mu_l <= 1.0 {
        return Err(Error::PruneLevelTooLow(mu_l));
    }
    let x = -(c * f64::from(n) * p_n / mu_l).ln() / mu_l.ln();
    Ok(x.ceil() as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarCondition {
    /// Raw r_N, possibly <= 0.
    pub r_n: i64,
    /// Depth the condition is evaluated at: max(r_N, 1).
    pub r: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// r_N and both sides of the star condition at r = max(r_N, 1).
pub fn r_n_and_star_condition(
    sc: &StarConstants,
    kernel: &KernelSpec,
    dist: &OffspringDistribution,
    c: f64,
) -> Result<StarCondition> {
    let raw = r_n(sc.n, c, dist.pmf(u64::from(sc.n)), sc.mu_l)?;
    let r = raw.clamp(1, i64::from(u32::MAX)) as u32;
    let pc = path_constants(sc, kernel)?;
    let lhs = attempts(sc, r) * pc.c_big;
    let rhs = 4.0 / b_lambda(sc) * pc.k_r.powi(-(r as i32));
    Ok(StarCondition { r_n: raw, r, lhs, rhs, satisfied: lhs > rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OffspringLaw;

    fn det(d: u64) -> OffspringDistribution {
        OffspringDistribution::new(OffspringLaw::Deterministic { d }).unwrap()
    }

    #[test]
    fn window_length_without_speedup() {
        let k = KernelSpec::sigma_kernel(0.5, 0.0, 1.0, 0.0, 1.0).unwrap();
        for n in [4, 100, 10_000] {
            let sc = star_constants(n, 4, 0.5, &k, &det(2)).unwrap();
            assert_eq!(sc.t, 0.5);
            assert_eq!(sc.phi_l, 1.0);
        }
    }

    #[test]
    fn threshold_example() {
        let k = KernelSpec::sigma_kernel(0.5, 0.0, 1.0, 0.0, 1.0).unwrap();
        let sc = star_constants(10_000, 4, 0.5, &k, &det(2)).unwrap();
        let expected = 15.0 * (-4.0f64).exp();
        assert!((sc.threshold - expected).abs() < 1e-12);
        assert!((sc.threshold - 0.2747).abs() < 1e-4);
        assert!(sc.underpowered);
    }

    #[test]
    fn prune_level_too_low() {
        let k = KernelSpec::sigma_kernel(0.5, 0.0, 1.0, 0.0, 1.0).unwrap();
        // Deterministic(2) with l = 2: E[zeta 1{zeta < 2}] = 0.
        assert!(matches!(star_constants(10, 2, 0.5, &k, &det(2)), Err(Error::PruneLevelTooLow(_))));
    }

    #[test]
    fn r_n_example() {
        let p = 2f64.powi(-10);
        assert_eq!(r_n(10, 1.0, p, 2.0).unwrap(), 8);
        // c n P(zeta = n) >= mu_l gives r_N <= 1.
        assert!(r_n(10, 1.0, 0.3, 2.0).unwrap() <= 1);
        assert!(r_n(10, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn survival_function_limits() {
        let k = KernelSpec::sigma_kernel(0.3, 0.0, 1.0, 0.0, 1.0).unwrap();
        let sc = star_constants(1000, 4, 1e-9, &k, &det(2)).unwrap();
        let sf = survival_functions(&sc, 3, &k, 1.0).unwrap();
        assert!((sf.r_lambda - 1.0).abs() < 1e-9);
        // S = T k_bar = 0.5 < 8r + 4T, so no attempt fits.
        assert_eq!(sf.attempts, 0.0);
        assert_eq!(sf.f_lambda, 1.0);
    }

    #[test]
    fn r_lambda_vanishes_with_growing_speed() {
        let k = KernelSpec::sigma_kernel(0.1, 0.0, 1.0, 0.2, 1.0).unwrap();
        let vals: Vec<f64> = [1_000, 10_000, 100_000]
            .iter()
            .map(|&n| {
                let sc = star_constants(n, 4, 0.5, &k, &det(2)).unwrap();
                survival_functions(&sc, 1, &k, 1.0).unwrap().r_lambda
            })
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
    }

    #[test]
    fn star_condition_rhs_falls_with_exponent() {
        // Holding r fixed, increasing lambda raises S and b_lambda, so the
        // right-hand side cannot increase while the left grows.
        let k = KernelSpec::sigma_kernel(0.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let d = OffspringDistribution::new(OffspringLaw::PowerLaw { b: 2.5, k0: 1 }).unwrap();
        let lo = star_constants(2_000_000, 6, 0.2, &k, &d).unwrap();
        let hi = star_constants(2_000_000, 6, 0.4, &k, &d).unwrap();
        let a = r_n_and_star_condition(&lo, &k, &d, 0.5).unwrap();
        let b = r_n_and_star_condition(&hi, &k, &d, 0.5).unwrap();
        assert_eq!(a.r_n, b.r_n);
        assert!(b.lhs >= a.lhs);
        assert!(b.rhs < a.rhs);
        assert!(a.rhs.is_finite());
    }
}

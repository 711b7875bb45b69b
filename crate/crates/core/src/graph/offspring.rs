//! Offspring laws for Bienaymé–Galton–Watson trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Cumulative mass at which infinite tables are cut off before renormalizing.
pub const TABLE_MASS: f64 = 1.0 - 1e-12;
/// Refuse to tabulate laws whose truncation point lies beyond this many entries.
pub const MAX_TABLE_LEN: usize = 50_000_000;
/// Number of power-law atoms held in the explicit table; the rest is sampled
/// by rejection from a continuous Pareto proposal.
const POWER_HEAD: u64 = 4096;

/// Parameters of an offspring law, as written in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringLaw {
    /// P(k) proportional to k^{-b} for k >= k0; when k0 = 0 the atom at zero
    /// carries the same weight as the atom at one.
    PowerLaw { b: f64, k0: u64 },
    /// P(k) proportional to exp(-(k/scale)^beta) for k >= 0.
    StretchedExponential { beta: f64, scale: f64 },
    /// P(k) = q (1-q)^k for k >= 0.
    Geometric { q: f64 },
    Deterministic { d: u64 },
    /// Arbitrary weights on 0, 1, 2, ...; normalized on construction.
    Tabulated { weights: Vec<f64> },
}

#[derive(Clone, Debug)]
enum Sampler {
    /// Inverse-CDF table over `start..start + cdf.len()`.
    Table { start: u64, pmf: Vec<f64>, cdf: Vec<f64> },
    Power(PowerSampler),
    Geometric { q: f64 },
    Point(u64),
}

#[derive(Clone, Debug)]
struct PowerSampler {
    b: f64,
    /// Normalizing constant of the weights.
    z: f64,
    k0: u64,
    head_start: u64,
    head_cdf: Vec<f64>,
    head_end: u64,
    head_mass: f64,
    /// Envelope constant of the tail rejection step.
    tail_bound: f64,
}

/// A validated offspring law with exact (or table-exact) sampling and moments.
#[derive(Clone, Debug)]
pub struct OffspringDistribution {
    law: OffspringLaw,
    sampler: Sampler,
}

impl OffspringDistribution {
    pub fn new(law: OffspringLaw) -> Result<Self> {
        let sampler = match &law {
            OffspringLaw::PowerLaw { b, k0 } => {
                ensure(b.is_finite() && *b > 1.0, "offspring.b", || format!("need b > 1, got {b}"))?;
                Sampler::Power(PowerSampler::new(*b, *k0))
            }
            OffspringLaw::StretchedExponential { beta, scale } => {
                ensure(*beta > 0.0 && *beta < 1.0, "offspring.beta", || {
                    format!("need beta in (0,1), got {beta}")
                })?;
                ensure(scale.is_finite() && *scale > 0.0, "offspring.scale", || {
                    format!("need scale > 0, got {scale}")
                })?;
                stretched_table(*beta, *scale)?
            }
            OffspringLaw::Geometric { q } => {
                ensure(*q > 0.0 && *q <= 1.0, "offspring.q", || format!("need q in (0,1], got {q}"))?;
                Sampler::Geometric { q: *q }
            }
            OffspringLaw::Deterministic { d } => Sampler::Point(*d),
            OffspringLaw::Tabulated { weights } => {
                ensure(!weights.is_empty(), "offspring.weights", || "empty weight table".into())?;
                ensure(
                    weights.iter().all(|w| w.is_finite() && *w >= 0.0),
                    "offspring.weights",
                    || "weights must be finite and non-negative".into(),
                )?;
                let total: f64 = weights.iter().sum();
                ensure(total > 0.0, "offspring.weights", || "weights sum to zero".into())?;
                table_from_weights(0, weights.iter().map(|w| w / total).collect())
            }
        };
        Ok(Self { law, sampler })
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match &self.sampler {
            Sampler::Table { start, pmf, .. } => {
                if k < *start {
                    0.0
                } else {
                    pmf.get((k - start) as usize).copied().unwrap_or(0.0)
                }
            }
            Sampler::Power(ps) => ps.weight(k) / ps.z,
            Sampler::Geometric { q } => q * (1.0 - q).powf(k as f64),
            Sampler::Point(d) => f64::from(u8::from(k == *d)),
        }
    }

    /// P(zeta <= k).
    pub fn cdf(&self, k: u64) -> f64 {
        match &self.sampler {
            Sampler::Table { start, cdf, .. } => {
                if k < *start {
                    0.0
                } else {
                    cdf.get((k - start) as usize).copied().unwrap_or(1.0)
                }
            }
            Sampler::Power(ps) => ps.cdf(k),
            Sampler::Geometric { q } => 1.0 - (1.0 - q).powf(k as f64 + 1.0),
            Sampler::Point(d) => f64::from(u8::from(k >= *d)),
        }
    }

    pub fn in_support(&self, k: u64) -> bool {
        self.pmf(k) > 0.0
    }

    /// E[zeta], or `None` when the mean is infinite.
    pub fn mean(&self) -> Option<f64> {
        match &self.sampler {
            Sampler::Table { start, pmf, .. } => Some(
                pmf.iter()
                    .enumerate()
                    .map(|(i, p)| (*start + i as u64) as f64 * p)
                    .sum(),
            ),
            Sampler::Power(ps) => {
                if ps.b <= 2.0 {
                    None
                } else {
                    let lo = ps.k0.max(1) as f64;
                    Some(hurwitz_zeta(ps.b - 1.0, lo) / ps.z)
                }
            }
            Sampler::Geometric { q } => Some((1.0 - q) / q),
            Sampler::Point(d) => Some(*d as f64),
        }
    }

    /// E[zeta 1{zeta < l}].
    pub fn mean_below(&self, l: u64) -> f64 {
        match &self.sampler {
            Sampler::Point(d) => {
                if *d < l {
                    *d as f64
                } else {
                    0.0
                }
            }
            _ => (1..l).map(|k| k as f64 * self.pmf(k)).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.sampler {
            Sampler::Table { start, cdf, .. } => start + search(cdf, rng.random::<f64>()),
            Sampler::Power(ps) => ps.sample(rng),
            Sampler::Geometric { q } => {
                if *q >= 1.0 {
                    return 0;
                }
                let u: f64 = 1.0 - rng.random::<f64>();
                let k = (u.ln() / (1.0 - q).ln()).floor();
                if k >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    k as u64
                }
            }
            Sampler::Point(d) => *d,
        }
    }
}

/// Index of the first cumulative value strictly above `u`.
fn search(cdf: &[f64], u: f64) -> u64 {
    let i = cdf.partition_point(|c| *c <= u);
    i.min(cdf.len() - 1) as u64
}

fn table_from_weights(start: u64, pmf: Vec<f64>) -> Sampler {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Sampler::Table { start, pmf, cdf }
}

fn stretched_table(beta: f64, scale: f64) -> Result<Sampler> {
    let w = |k: f64| (-(k / scale).powf(beta)).exp();
    let mut weights = Vec::new();
    let mut sum = 0.0;
    loop {
        let k = weights.len() as f64;
        let wk = w(k);
        weights.push(wk);
        sum += wk;
        // Tail beyond k bounded by the integral of the decreasing weight.
        let x = ((k + 1.0) / scale).powf(beta);
        let a = 1.0 / beta;
        let tail = scale / beta * statrs::function::gamma::gamma_ur(a, x) * statrs::function::gamma::gamma(a);
        if tail <= (1.0 - TABLE_MASS) * sum {
            break;
        }
        if weights.len() >= MAX_TABLE_LEN {
            return Err(Error::invalid(
                "offspring",
                format!("stretched exponential needs more than {MAX_TABLE_LEN} table entries"),
            ));
        }
    }
    Ok(table_from_weights(0, weights.into_iter().map(|x| x / sum).collect()))
}

impl PowerSampler {
    fn new(b: f64, k0: u64) -> Self {
        let lo = k0.max(1);
        let z = hurwitz_zeta(b, lo as f64) + if k0 == 0 { 1.0 } else { 0.0 };
        let head_start = k0;
        let head_end = lo + POWER_HEAD;
        let mut acc = 0.0;
        let mut head_cdf = Vec::with_capacity((head_end - head_start) as usize);
        let mut ps = Self {
            b,
            z,
            k0,
            head_start,
            head_cdf: Vec::new(),
            head_end,
            head_mass: 0.0,
            tail_bound: 0.0,
        };
        for k in head_start..head_end {
            acc += ps.weight(k) / z;
            head_cdf.push(acc);
        }
        ps.head_mass = 1.0 - hurwitz_zeta(b, head_end as f64) / z;
        // Rescale the head so its last entry equals the exact head mass.
        let scale = ps.head_mass / acc;
        for c in &mut head_cdf {
            *c *= scale;
        }
        ps.head_cdf = head_cdf;
        ps.tail_bound = ps.ratio(head_end);
        ps
    }

    fn weight(&self, k: u64) -> f64 {
        if k < self.k0 {
            0.0
        } else if k == 0 {
            1.0
        } else {
            (k as f64).powf(-self.b)
        }
    }

    fn cdf(&self, k: u64) -> f64 {
        if k < self.head_start {
            0.0
        } else if k < self.head_end {
            self.head_cdf[(k - self.head_start) as usize]
        } else {
            1.0 - hurwitz_zeta(self.b, k as f64 + 1.0) / self.z
        }
    }

    /// k^{-b} divided by the proposal mass of [k, k+1).
    fn ratio(&self, k: u64) -> f64 {
        let kf = k as f64;
        let s = 1.0 - self.b;
        let integral = -kf.powf(s) * (s * (1.0 / kf).ln_1p()).exp_m1() / (self.b - 1.0);
        kf.powf(-self.b) / integral
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if u < self.head_mass {
            return self.head_start + search(&self.head_cdf, u);
        }
        let start = self.head_end as f64;
        loop {
            let v: f64 = 1.0 - rng.random::<f64>();
            let x = start * v.powf(-1.0 / (self.b - 1.0));
            if !(x < 4.0e18) {
                continue;
            }
            let k = x.floor() as u64;
            if rng.random::<f64>() * self.tail_bound <= self.ratio(k) {
                return k;
            }
        }
    }
}

/// Hurwitz zeta function sum_{k>=0} (a+k)^{-s} for s > 1, a > 0, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const SHIFT: usize = 24;
    // B_{2j} / (2j)!
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
    ];
    let mut sum = 0.0;
    for k in 0..SHIFT {
        sum += (a + k as f64).powf(-s);
    }
    let x = a + SHIFT as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Rising factorial s (s+1) ... (s+2j-2) times x^{-s-2j+1}.
    let mut fac = s;
    let mut pow = x.powf(-s - 1.0);
    for (j, c) in COEF.iter().enumerate() {
        sum += c * fac * pow;
        let m = 2.0 * j as f64;
        fac *= (s + m + 1.0) * (s + m + 2.0);
        pow /= x * x;
    }
    sum
}

//! Connection-probability and update-speed kernels, their power-law
//! envelopes, and the percolated offspring number.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::graph::OffspringDistribution;

/// Tabulated connection probabilities keyed by (larger degree, smaller degree).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelTable {
    entries: HashMap<(u32, u32), f64>,
}

impl KernelTable {
    /// Parses whitespace-separated `n m p` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            if cols.len() != 3 {
                return Err(bad("expected `n m p`"));
            }
            let n: u32 = cols[0].parse().map_err(|_| bad("bad n"))?;
            let m: u32 = cols[1].parse().map_err(|_| bad("bad m"))?;
            let p: f64 = cols[2].parse().map_err(|_| bad("bad p"))?;
            if n == 0 || m == 0 {
                return Err(bad("degrees must be positive"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(bad("p outside [0,1]"));
            }
            entries.insert((n.max(m), n.min(m)), p);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, dx: u32, dy: u32) -> Option<f64> {
        self.entries.get(&(dx.max(dy), dx.min(dy))).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

type KernelFn = Arc<dyn Fn(u32, u32) -> f64 + Send + Sync>;

/// A connection probability replacing the sigma formula.
#[derive(Clone)]
pub enum CustomP {
    Constant(f64),
    /// Pairs missing from the table fall back to the sigma formula.
    Table(Arc<KernelTable>),
    Function(KernelFn),
}

impl fmt::Debug for CustomP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CustomP::Constant(p) => write!(f, "Constant({p})"),
            CustomP::Table(t) => write!(f, "Table({} entries)", t.len()),
            CustomP::Function(_) => write!(f, "Function"),
        }
    }
}

/// Sigma-kernel parameters as they appear in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub eta: f64,
    pub nu: f64,
}

#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub eta: f64,
    pub nu: f64,
    pub custom: Option<CustomP>,
}

impl KernelSpec {
    pub fn sigma_kernel(alpha: f64, sigma: f64, kappa: f64, eta: f64, nu: f64) -> Result<Self> {
        Self::from_params(KernelParams { alpha, sigma, kappa, eta, nu })
    }

    pub fn from_params(k: KernelParams) -> Result<Self> {
        ensure(k.alpha.is_finite() && k.alpha >= 0.0, "kernel.alpha", || {
            format!("must be >= 0, got {}", k.alpha)
        })?;
        ensure((0.0..=1.0).contains(&k.sigma), "kernel.sigma", || {
            format!("must lie in [0,1], got {}", k.sigma)
        })?;
        ensure(k.kappa.is_finite() && k.kappa > 0.0, "kernel.kappa", || {
            format!("must be > 0, got {}", k.kappa)
        })?;
        ensure(k.eta.is_finite(), "kernel.eta", || "must be finite".into())?;
        ensure(k.nu.is_finite() && k.nu > 0.0, "kernel.nu", || format!("must be > 0, got {}", k.nu))?;
        Ok(Self {
            alpha: k.alpha,
            sigma: k.sigma,
            kappa: k.kappa,
            eta: k.eta,
            nu: k.nu,
            custom: None,
        })
    }

    /// Degree-independent kernel: p constant, v constant.
    pub fn constant(p: f64, v: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&p), "kernel.p", || format!("must lie in [0,1], got {p}"))?;
        let mut k = Self::sigma_kernel(0.0, 0.0, 1.0, 0.0, v)?;
        k.custom = Some(CustomP::Constant(p));
        Ok(k)
    }

    pub fn with_custom(mut self, custom: CustomP) -> Self {
        self.custom = Some(custom);
        self
    }

    pub fn params(&self) -> KernelParams {
        KernelParams {
            alpha: self.alpha,
            sigma: self.sigma,
            kappa: self.kappa,
            eta: self.eta,
            nu: self.nu,
        }
    }

    fn sigma_p(&self, dx: u32, dy: u32) -> f64 {
        let lo = f64::from(dx.min(dy));
        let hi = f64::from(dx.max(dy));
        (self.kappa * (lo.powf(self.sigma) * hi).powf(-self.alpha)).min(1.0)
    }

    /// Connection probability p(dx, dy).
    pub fn p_value(&self, dx: u32, dy: u32) -> f64 {
        match &self.custom {
            None => self.sigma_p(dx, dy),
            Some(CustomP::Constant(p)) => *p,
            Some(CustomP::Table(t)) => t.get(dx, dy).unwrap_or_else(|| self.sigma_p(dx, dy)),
            Some(CustomP::Function(f)) => f(dx.max(dy), dx.min(dy)).clamp(0.0, 1.0),
        }
    }

    /// Update speed v(dx, dy) = nu (dx v dy)^eta.
    pub fn v_value(&self, dx: u32, dy: u32) -> f64 {
        self.nu * f64::from(dx.max(dy)).powf(self.eta)
    }

    /// Tightest envelope constants over the sampled `n_range` (each n >= m).
    pub fn envelope_check(&self, m: u32, n_range: &[u32]) -> Result<Envelope> {
        if n_range.is_empty() {
            return Err(Error::EmptyRange);
        }
        if let Some(n) = n_range.iter().find(|&&n| n < m) {
            return Err(Error::invalid("n_range", format!("n = {n} is below m = {m}")));
        }
        let mut env = Envelope {
            kappa1: f64::INFINITY,
            kappa2: 0.0,
            nu1: f64::INFINITY,
            nu2: 0.0,
            violation: None,
        };
        for &n in n_range {
            let nf = f64::from(n);
            let rp = self.p_value(n, m) * nf.powf(self.alpha);
            let rv = self.v_value(n, m) * nf.powf(-self.eta);
            env.kappa1 = env.kappa1.min(rp);
            env.kappa2 = env.kappa2.max(rp);
            env.nu1 = env.nu1.min(rv);
            env.nu2 = env.nu2.max(rv);
        }
        let spread = |lo: f64, hi: f64| lo <= 0.0 || hi / lo > ENVELOPE_SPREAD;
        if spread(env.kappa1, env.kappa2) {
            env.violation = Some(format!(
                "p(n,{m}) n^alpha ranges over [{:e}, {:e}]: no constant envelope for alpha = {}",
                env.kappa1, env.kappa2, self.alpha
            ));
        } else if spread(env.nu1, env.nu2) {
            env.violation = Some(format!(
                "v(n,{m}) n^-eta ranges over [{:e}, {:e}]: no constant envelope for eta = {}",
                env.nu1, env.nu2, self.eta
            ));
        }
        Ok(env)
    }

    /// Envelope constants valid for every m in 1..=l and n in [l, n_max],
    /// sampled on a geometric grid.
    pub fn envelope_up_to(&self, l: u32, n_max: u32) -> Result<Envelope> {
        let grid = geometric_grid(l.max(1), n_max.max(l.max(1)));
        let mut acc: Option<Envelope> = None;
        for m in 1..=l.max(1) {
            let e = self.envelope_check(m, &grid)?;
            acc = Some(match acc {
                None => e,
                Some(a) => Envelope {
                    kappa1: a.kappa1.min(e.kappa1),
                    kappa2: a.kappa2.max(e.kappa2),
                    nu1: a.nu1.min(e.nu1),
                    nu2: a.nu2.max(e.nu2),
                    violation: a.violation.or(e.violation),
                },
            });
        }
        Ok(acc.expect("at least one m"))
    }
}

/// Ratio between the largest and smallest normalized kernel value beyond
/// which a sampled range is declared to violate the power-law envelope.
pub const ENVELOPE_SPREAD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub kappa1: f64,
    pub kappa2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub violation: Option<String>,
}

/// Integers from `lo` to `hi` spaced roughly geometrically, endpoints included.
pub fn geometric_grid(lo: u32, hi: u32) -> Vec<u32> {
    let mut out = vec![lo];
    let mut x = f64::from(lo);
    while *out.last().unwrap() < hi {
        x = (x * 1.25).max(x + 1.0);
        let next = (x.round() as u32).min(hi);
        if next > *out.last().unwrap() {
            out.push(next);
        }
    }
    out
}

/// Percolated offspring number: children of a vertex reachable through open
/// edges at a fixed time.
#[derive(Clone, Debug)]
pub struct PercolatedOffspring {
    pub base: Arc<OffspringDistribution>,
    pub kernel: KernelSpec,
}

impl PercolatedOffspring {
    pub fn new(base: Arc<OffspringDistribution>, kernel: KernelSpec) -> Self {
        Self { base, kernel }
    }

    /// Kernel evaluated at offspring counts; a count of zero is read as one.
    fn p_counts(&self, a: u64, b: u64) -> f64 {
        let clip = |x: u64| u32::try_from(x.max(1)).unwrap_or(u32::MAX);
        self.kernel.p_value(clip(a), clip(b))
    }

    /// Two-stage draw: the offspring count, then one independent offspring
    /// count per child deciding the Bernoulli thinning.
    pub fn sample_zeta_p<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let z = self.base.sample(rng);
        let mut hits = 0;
        for _ in 0..z {
            let zi = self.base.sample(rng);
            if rng.random::<f64>() < self.p_counts(z, zi) {
                hits += 1;
            }
        }
        hits
    }

    /// E[p(zeta', z)] over an independent offspring count zeta'. The sum is
    /// exact up to `MIXING_TERMS` atoms; the remaining mass is charged at the
    /// kernel value of the cut-off (p is non-increasing).
    pub fn mean_connection(&self, z: u64) -> f64 {
        let mut acc = 0.0;
        for k in 0..MIXING_TERMS {
            let w = self.base.pmf(k);
            if w > 0.0 {
                acc += w * self.p_counts(k, z);
            }
        }
        let rest = 1.0 - self.base.cdf(MIXING_TERMS - 1);
        acc + rest.max(0.0) * self.p_counts(MIXING_TERMS, z)
    }

    pub fn mixed_binomial(&self) -> MixedBinomialSampler<'_> {
        MixedBinomialSampler { law: self, cache: HashMap::new() }
    }
}

const MIXING_TERMS: u64 = 100_000;

/// Direct sampler of Bin(zeta, E[p(zeta', zeta) | zeta]), caching the mixing
/// probability per offspring count.
pub struct MixedBinomialSampler<'a> {
    law: &'a PercolatedOffspring,
    cache: HashMap<u64, f64>,
}

impl MixedBinomialSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let z = self.law.base.sample(rng);
        if z == 0 {
            return 0;
        }
        let law = self.law;
        let q = *self.cache.entry(z).or_insert_with(|| law.mean_connection(z));
        Binomial::new(z, q.clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
    }
}

/// Result of the Hill-type tail fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    /// Exponent b of a probability mass function decaying like k^{-b}.
    pub exponent: f64,
    /// Number of upper order statistics used.
    pub tail_points: usize,
    /// Order statistic at which the tail starts.
    pub threshold: u64,
    pub reliable: bool,
    pub note: Option<String>,
}

pub const HILL_FRACTION: f64 = 0.01;
pub const HILL_MIN_TAIL: usize = 100;
pub const HILL_MIN_SAMPLES: usize = 10_000;

/// Hill estimator on the top 1% order statistics (at least 100 of them).
/// Returns the mass-function exponent, i.e. one plus the Hill tail index.
///
/// The fit is marked unreliable when the sample is small, when the threshold
/// order statistic is zero, or when an exponential law fitted to the same
/// exceedances has the larger likelihood.
pub fn tail_exponent_estimate(samples: &[u64]) -> TailEstimate {
    let mut notes = Vec::new();
    if samples.len() < HILL_MIN_SAMPLES {
        notes.push(format!("only {} samples", samples.len()));
    }
    let mut sorted: Vec<u64> = samples.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = ((samples.len() as f64 * HILL_FRACTION) as usize).max(HILL_MIN_TAIL);
    if k >= sorted.len() {
        return TailEstimate {
            exponent: f64::NAN,
            tail_points: 0,
            threshold: 0,
            reliable: false,
            note: Some(format!("fewer than {} tail points", HILL_MIN_TAIL + 1)),
        };
    }
    let u = sorted[k];
    if u == 0 {
        return TailEstimate {
            exponent: f64::NAN,
            tail_points: k,
            threshold: 0,
            reliable: false,
            note: Some("insufficient tail mass: threshold order statistic is zero".into()),
        };
    }
    let uf = u as f64;
    let tail = &sorted[..k];
    let log_sum: f64 = tail.iter().map(|&x| (x as f64).ln()).sum();
    let gamma = log_sum / k as f64 - uf.ln();
    if gamma <= 0.0 {
        return TailEstimate {
            exponent: f64::NAN,
            tail_points: k,
            threshold: u,
            reliable: false,
            note: Some("degenerate tail: all exceedances equal the threshold".into()),
        };
    }
    let index = 1.0 / gamma;
    let kf = k as f64;
    let ll_pareto = kf * index.ln() + kf * index * uf.ln() - (index + 1.0) * log_sum;
    let excess: f64 = tail.iter().map(|&x| x as f64 - uf).sum::<f64>() / kf;
    let ll_exp = -kf * excess.ln() - kf;
    if ll_exp >= ll_pareto {
        notes.push("exponential tail fits the exceedances at least as well as a power law".into());
    }
    TailEstimate {
        exponent: 1.0 + index,
        tail_points: k,
        threshold: u,
        reliable: notes.is_empty(),
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    }
}

use serde::{Deserialize, Serialize};

/// Tail class of the offspring law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailClass {
    /// P(zeta = n) decays like n^-b.
    PowerLaw { b: f64 },
    /// P(zeta = n) decays like exp(-n^beta), beta in (0, 1).
    Stretched { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// lambda_1 > 0.
    Subcritical,
    /// lambda_1 = lambda_2 = 0.
    NoPhaseTransition,
    /// lambda_2 < infinity, nothing stronger known.
    FiniteCritical,
    Unknown,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseVerdict {
    pub regime: Regime,
    /// Whether lambda_2 < infinity is known for these parameters.
    pub lambda2_finite: bool,
    /// Which rule fired: "i", "ii", "iii", "finite" or "none".
    pub rule: &'static str,
}

/// Phase regime for the sigma-kernel with update exponent `eta` on a BGW
/// tree with the given tail. `zero_offspring_possible` is P(zeta = 0) > 0.
pub fn phase_classify(alpha: f64, sigma: f64, eta: f64, tail: TailClass, zero_offspring_possible: bool) -> PhaseVerdict {
    // Polynomial budget left after the tail: 1 for power laws, 1 - beta for
    // stretched exponentials.
    let budget = match tail {
        TailClass::PowerLaw { .. } => 1.0,
        TailClass::Stretched { beta } => 1.0 - beta,
    };
    let lambda2_finite = alpha < budget;

    let subcritical = eta >= 0.0 && (alpha >= 1.0 || (alpha + 2.0 * eta >= 1.0 && alpha * sigma >= 0.5));
    if subcritical {
        return PhaseVerdict { regime: Regime::Subcritical, lambda2_finite, rule: "i" };
    }

    let slow_updates = eta <= 0.0 && (0.0..budget).contains(&alpha);
    let mild_updates = (0.0..=budget / 2.0).contains(&eta) && alpha > 0.0 && alpha < budget - 2.0 * eta;
    if slow_updates || mild_updates {
        return PhaseVerdict { regime: Regime::NoPhaseTransition, lambda2_finite, rule: "ii" };
    }

    if eta >= 0.0 && budget - 2.0 * alpha > 0.0 && !zero_offspring_possible {
        return PhaseVerdict { regime: Regime::NoPhaseTransition, lambda2_finite, rule: "iii" };
    }

    if lambda2_finite {
        PhaseVerdict { regime: Regime::FiniteCritical, lambda2_finite, rule: "finite" }
    } else {
        PhaseVerdict { regime: Regime::Unknown, lambda2_finite, rule: "none" }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PL: TailClass = TailClass::PowerLaw { b: 2.5 };

    #[test]
    fn documented_examples() {
        assert_eq!(phase_classify(1.2, 0.0, 0.0, PL, true).regime, Regime::Subcritical);
        assert_eq!(phase_classify(0.3, 0.0, 0.1, PL, true).regime, Regime::NoPhaseTransition);
        assert_eq!(phase_classify(0.6, 1.0, 0.3, PL, true).regime, Regime::Subcritical);
    }

    #[test]
    fn zero_offspring_only_matters_for_rule_three() {
        // eta large, alpha small: only rule iii can apply.
        let v = phase_classify(0.2, 0.0, 0.45, PL, false);
        assert_eq!((v.regime, v.rule), (Regime::NoPhaseTransition, "iii"));
        let v = phase_classify(0.2, 0.0, 0.45, PL, true);
        assert_eq!((v.regime, v.rule), (Regime::FiniteCritical, "finite"));
    }

    #[test]
    fn stretched_tail_shrinks_the_window() {
        let st = TailClass::Stretched { beta: 0.5 };
        assert_eq!(phase_classify(0.3, 0.0, 0.0, st, true).regime, Regime::NoPhaseTransition);
        let v = phase_classify(0.6, 0.0, 0.0, st, true);
        assert_eq!(v.regime, Regime::Unknown);
        assert!(!v.lambda2_finite);
        // 0.3 + 2 * 0.15 = 0.6 > 0.5: rule ii fails; rule iii needs 0.5 - 0.6 > 0.
        assert_eq!(phase_classify(0.3, 0.0, 0.15, st, false).regime, Regime::FiniteCritical);
    }
}

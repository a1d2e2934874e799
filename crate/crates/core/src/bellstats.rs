//! Bell-operator analysis of detector records.
//!
//! Per arm, `B = (σ_x⊗σ_x + σ_z⊗σ_z)/√2` on the detector pair. Local
//! realism bounds `|<B>| ≤ 1`; quantum mechanics allows up to `√2`. A mean
//! above 1 certifies the balanced function, below -1 the constant one, and
//! either way bounds the fidelity to the corresponding ideal output state:
//!
//! ```text
//! balanced:  <B>/√2  ≤ F(Φ+) ≤ (<B>/√2 + 1)/2
//! constant: -<B>/√2  ≤ F(Ψ-) ≤ (-<B>/√2 + 1)/2
//! ```
//!
//! The global success probability is the average of the two arms' lower
//! bounds, and the speed-up figure is four times that.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt::Write as _;

use serde_json::{json, Number, Value};

use crate::error::{Error, Result};
use crate::linalg::{expectation, kron, ComplexMatrix, DensityOperator, StateVector, C64};
use crate::protocol::{Arm, FunctionType, MeasurementRecord};
use crate::qoptics::{observable, sigma_x, sigma_z, Basis};

/// Default confidence multiplier for the margin-qualified tests.
pub const DEFAULT_CONFIDENCE_K: f64 = 3.0;

/// Bell operator of one arm on its detector-pair register.
pub fn bell_operator(arm: Arm) -> ComplexMatrix {
    let (first, second) = arm.detectors();
    let xx = &observable(first, Basis::X) * &observable(second, Basis::X);
    let zz = &observable(first, Basis::Z) * &observable(second, Basis::Z);
    (&xx + &zz).scale(C64::new(FRAC_1_SQRT_2, 0.0))
}

/// `Tr(B·ρ)`.
pub fn exact_bell_mean(rho: &DensityOperator) -> Result<f64> {
    expectation(&bell_operator(Arm::A), rho)
}

/// Ideal detector-pair state for a function: `Φ+` (balanced) or `Ψ-` (constant).
pub fn target_state(function: FunctionType) -> StateVector {
    let s = FRAC_1_SQRT_2;
    match function {
        FunctionType::Balanced => StateVector::from_real(&[s, 0.0, 0.0, s]),
        FunctionType::Constant => StateVector::from_real(&[0.0, s, -s, 0.0]),
    }
    .expect("normalised")
}

/// `<target|ρ|target>`.
pub fn true_fidelity(rho: &DensityOperator, function: FunctionType) -> Result<f64> {
    rho.fidelity_with_pure(&target_state(function))
}

/// Empirical `<B>` of one arm with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellEstimate {
    pub arm: Arm,
    pub mean: f64,
    pub std_error: f64,
    pub n_zz: usize,
    pub n_xx: usize,
    /// Mean outcome product in the `z` basis.
    pub m_zz: f64,
    /// Mean outcome product in the `x` basis.
    pub m_xx: f64,
}

impl BellEstimate {
    /// Estimate with known mean and zero spread, e.g. from an exact state.
    pub fn exact(arm: Arm, mean: f64) -> Self {
        Self { arm, mean, std_error: 0.0, n_zz: 0, n_xx: 0, m_zz: f64::NAN, m_xx: f64::NAN }
    }

    pub fn from_mean(arm: Arm, mean: f64, std_error: f64) -> Self {
        Self { std_error, ..Self::exact(arm, mean) }
    }

    /// `|mean| ≤ √2 + 5·std_error`.
    pub fn is_tsirelson_consistent(&self) -> bool {
        self.mean.abs() <= SQRT_2 + 5.0 * self.std_error + 1e-12
    }
}

struct BasisStats {
    n: usize,
    mean: f64,
    std_error: f64,
}

fn basis_stats(records: &[MeasurementRecord], arm: Arm, basis: Basis) -> Result<BasisStats> {
    // integer accumulation keeps the result independent of record order
    let (n, sum) = records
        .iter()
        .filter(|r| r.arm == arm && r.basis == basis)
        .fold((0usize, 0i64), |(n, s), r| (n + 1, s + i64::from(r.product())));
    if n < 2 {
        return Err(Error::InsufficientData(format!("arm {arm}, basis {basis}: {n} records, need 2")));
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    // products are ±1, so Σx² = n
    let var = ((nf - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(BasisStats { n, mean, std_error: (var / nf).sqrt() })
}

/// `<B>` = (m_xx + m_zz)/√2, error sqrt(s_xx² + s_zz²)/√2.
pub fn estimate(records: &[MeasurementRecord], arm: Arm) -> Result<BellEstimate> {
    let zz = basis_stats(records, arm, Basis::Z)?;
    let xx = basis_stats(records, arm, Basis::X)?;
    Ok(BellEstimate {
        arm,
        mean: (xx.mean + zz.mean) * FRAC_1_SQRT_2,
        std_error: (xx.std_error.powi(2) + zz.std_error.powi(2)).sqrt() / SQRT_2,
        n_zz: zz.n,
        n_xx: xx.n,
        m_zz: zz.mean,
        m_xx: xx.mean,
    })
}

/// `|<B>| > 1`.
pub fn violated(est: &BellEstimate) -> bool {
    violated_with_margin(est, 0.0)
}

/// `|<B>| - k·σ > 1`.
pub fn violated_with_margin(est: &BellEstimate, k: f64) -> bool {
    est.mean.abs() - k * est.std_error > 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityBounds {
    pub target: FunctionType,
    /// Bounds clamped to [0, 1].
    pub lower: f64,
    pub upper: f64,
    /// Bounds as given by the formula, possibly outside [0, 1].
    pub raw_lower: f64,
    pub raw_upper: f64,
}

pub fn fidelity_bounds_from_mean(mean: f64, hypothesis: FunctionType) -> FidelityBounds {
    let w = f64::from(hypothesis.ideal_sign()) * mean / SQRT_2;
    let raw_lower = w;
    let raw_upper = (w + 1.0) / 2.0;
    FidelityBounds {
        target: hypothesis,
        lower: raw_lower.clamp(0.0, 1.0),
        upper: raw_upper.clamp(0.0, 1.0),
        raw_lower,
        raw_upper,
    }
}

pub fn fidelity_bounds(est: &BellEstimate, hypothesis: FunctionType) -> FidelityBounds {
    fidelity_bounds_from_mean(est.mean, hypothesis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Balanced,
    Constant,
    Inconclusive,
}

impl Decision {
    pub fn function(self) -> Option<FunctionType> {
        match self {
            Self::Balanced => Some(FunctionType::Balanced),
            Self::Constant => Some(FunctionType::Constant),
            Self::Inconclusive => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Balanced => "balanced",
            Self::Constant => "constant",
            Self::Inconclusive => "inconclusive",
        }
    }
}

impl From<FunctionType> for Decision {
    fn from(f: FunctionType) -> Self {
        match f {
            FunctionType::Balanced => Self::Balanced,
            FunctionType::Constant => Self::Constant,
        }
    }
}

/// Table rule: `mean - kσ > 1` → balanced, `mean + kσ < -1` → constant.
pub fn decide(est: &BellEstimate, k: f64) -> Decision {
    let margin = k * est.std_error;
    if est.mean - margin > 1.0 {
        Decision::Balanced
    } else if est.mean + margin < -1.0 {
        Decision::Constant
    } else {
        Decision::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmVerdict {
    pub estimate: BellEstimate,
    pub violated: bool,
    pub decision: Decision,
    /// Bounds under the decided hypothesis; `None` when inconclusive.
    pub bounds: Option<FidelityBounds>,
}

impl ArmVerdict {
    fn new(estimate: BellEstimate, k: f64) -> Self {
        let decision = decide(&estimate, k);
        Self {
            estimate,
            violated: violated_with_margin(&estimate, k),
            decision,
            bounds: decision.function().map(|f| fidelity_bounds(&estimate, f)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellReport {
    pub arm_a: ArmVerdict,
    pub arm_b: ArmVerdict,
    pub confidence_k: f64,
    /// Average of the clamped lower fidelity bounds; `None` unless both arms are conclusive.
    pub p_success_lower: Option<f64>,
    /// `4·p_success_lower`; `None` unless both arms are conclusive.
    pub speedup: Option<f64>,
}

impl BellReport {
    pub fn arm(&self, arm: Arm) -> &ArmVerdict {
        match arm {
            Arm::A => &self.arm_a,
            Arm::B => &self.arm_b,
        }
    }

    pub fn is_conclusive(&self) -> bool {
        self.arm_a.decision != Decision::Inconclusive && self.arm_b.decision != Decision::Inconclusive
    }

    /// JSON object with the fixed field names `arm_a.{mean,std_error,violated}`,
    /// `decision_a` (and the `b` mirrors), `p_success_lower`, `speedup`.
    /// Numbers carry 15 significant digits.
    pub fn to_json_value(&self) -> Value {
        let arm_json = |v: &ArmVerdict| {
            let mut obj = json!({
                "mean": decimal(v.estimate.mean),
                "std_error": decimal(v.estimate.std_error),
                "violated": v.violated,
                "n_zz": v.estimate.n_zz,
                "n_xx": v.estimate.n_xx,
            });
            if let Some(b) = v.bounds {
                obj["fidelity_lower"] = decimal(b.lower);
                obj["fidelity_upper"] = decimal(b.upper);
                obj["fidelity_lower_raw"] = decimal(b.raw_lower);
                obj["fidelity_upper_raw"] = decimal(b.raw_upper);
            }
            obj
        };
        json!({
            "arm_a": arm_json(&self.arm_a),
            "decision_a": self.arm_a.decision.as_str(),
            "arm_b": arm_json(&self.arm_b),
            "decision_b": self.arm_b.decision.as_str(),
            "confidence_k": decimal(self.confidence_k),
            "p_success_lower": self.p_success_lower.map_or(Value::Null, decimal),
            "speedup": self.speedup.map_or(Value::Null, decimal),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in [("A", &self.arm_a), ("B", &self.arm_b)] {
            let _ = writeln!(
                out,
                "arm {name}: <B> = {} ± {}  violated = {}  decision = {}",
                format_decimal(v.estimate.mean, 15),
                format_decimal(v.estimate.std_error, 15),
                v.violated,
                v.decision.as_str()
            );
            if let Some(b) = v.bounds {
                let _ = writeln!(
                    out,
                    "       fidelity({}) in [{}, {}]",
                    b.target,
                    format_decimal(b.lower, 15),
                    format_decimal(b.upper, 15)
                );
            }
        }
        let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format_decimal(v, 15));
        let _ = writeln!(out, "P_success lower bound: {}", opt(self.p_success_lower));
        let _ = writeln!(out, "speed-up: {}", opt(self.speedup));
        out
    }
}

/// Table decision on the point estimates (no confidence margin).
pub fn classify(est_a: &BellEstimate, est_b: &BellEstimate) -> BellReport {
    classify_with_margin(est_a, est_b, 0.0)
}

pub fn classify_with_margin(est_a: &BellEstimate, est_b: &BellEstimate, k: f64) -> BellReport {
    let arm_a = ArmVerdict::new(*est_a, k);
    let arm_b = ArmVerdict::new(*est_b, k);
    let p_success_lower = match (arm_a.bounds, arm_b.bounds) {
        (Some(a), Some(b)) => Some((a.lower + b.lower) / 2.0),
        _ => None,
    };
    BellReport { arm_a, arm_b, confidence_k: k, p_success_lower, speedup: p_success_lower.map(|p| 4.0 * p) }
}

/// `4·P_success_lower`.
pub fn speedup_factor(report: &BellReport) -> Result<f64> {
    report.p_success_lower.map(|p| 4.0 * p).ok_or(Error::Inconclusive)
}

/// Exact `<σ⊗σ>` helpers shared with the exact-analysis report.
pub fn exact_correlators(rho: &DensityOperator) -> Result<(f64, f64)> {
    let zz = expectation(&kron(&sigma_z(), &sigma_z())?, rho)?;
    let xx = expectation(&kron(&sigma_x(), &sigma_x())?, rho)?;
    Ok((zz, xx))
}

/// `x` in plain decimal notation with at least `sig` significant digits.
pub fn format_decimal(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", sig - 1, if x.is_finite() { 0.0 } else { x });
    }
    let exponent = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// JSON number rendered by [`format_decimal`] with 15 significant digits.
pub fn decimal(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let text = format_decimal(x, 15);
    Value::Number(text.parse::<Number>().expect("decimal literal"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_density_operators;
    use crate::protocol::{joint_output_state, werner, ExperimentConfig};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn records(arm: Arm, products_z: &[i8], products_x: &[i8]) -> Vec<MeasurementRecord> {
        let mut out = Vec::new();
        for (basis, prods) in [(Basis::Z, products_z), (Basis::X, products_x)] {
            for (i, &p) in prods.iter().enumerate() {
                out.push(MeasurementRecord { shot: i as u64, arm, basis, first: 1, second: p });
            }
        }
        out
    }

    #[test]
    fn bell_operator_spectrum() {
        // oracle: nalgebra eigen-decomposition of the explicit 4x4 matrix
        let b = bell_operator(Arm::A);
        let m = DMatrix::from_fn(4, 4, |i, j| b[(i, j)]);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let want = [-SQRT_2, 0.0, 0.0, SQRT_2];
        for (a, w) in ev.iter().zip(want) {
            assert!((a - w).abs() < 1e-12, "{ev:?}");
        }
        assert_eq!(bell_operator(Arm::A), bell_operator(Arm::B));
    }

    #[test]
    fn bell_means_on_targets() {
        let phi = target_state(FunctionType::Balanced).to_density();
        let psi = target_state(FunctionType::Constant).to_density();
        assert!((exact_bell_mean(&phi).unwrap() - SQRT_2).abs() < 1e-12);
        assert!((exact_bell_mean(&psi).unwrap() + SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sample() {
        let recs = records(Arm::A, &[1; 100], &[1; 100]);
        let est = estimate(&recs, Arm::A).unwrap();
        assert!((est.mean - SQRT_2).abs() < 1e-15);
        assert_eq!(est.std_error, 0.0);
        assert_eq!((est.n_zz, est.n_xx), (100, 100));
        assert!(est.is_tsirelson_consistent());
    }

    #[test]
    fn estimator_standard_error() {
        // z: 3 of +1, 1 of -1 → mean 0.5, sample var = (4 - 4·0.25)/3 = 1
        // x: all +1 → mean 1, se 0
        let recs = records(Arm::B, &[1, 1, 1, -1], &[1, 1, 1, 1]);
        let est = estimate(&recs, Arm::B).unwrap();
        assert!((est.mean - 1.5 / SQRT_2).abs() < 1e-15);
        assert!((est.std_error - (1.0f64 / 4.0).sqrt() / SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn estimator_needs_two_per_basis() {
        let recs = records(Arm::A, &[1, 1], &[1]);
        assert!(matches!(estimate(&recs, Arm::A), Err(Error::InsufficientData(_))));
        assert!(matches!(estimate(&recs, Arm::B), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn violation_rules() {
        assert!(violated(&BellEstimate::exact(Arm::A, SQRT_2)));
        assert!(!violated(&BellEstimate::exact(Arm::A, 0.9)));
        assert!(!violated(&BellEstimate::exact(Arm::A, 1.0)));
        let rho = werner(&target_state(FunctionType::Balanced).to_density(), 0.6).unwrap();
        let m = exact_bell_mean(&rho).unwrap();
        assert!((m - 0.6 * SQRT_2).abs() < 1e-12);
        assert!(!violated(&BellEstimate::exact(Arm::A, m)));
        let noisy = BellEstimate::from_mean(Arm::A, 1.05, 0.02);
        assert!(violated(&noisy));
        assert!(!violated_with_margin(&noisy, DEFAULT_CONFIDENCE_K));
    }

    #[test]
    fn bounds_substitution() {
        let b = fidelity_bounds(&BellEstimate::exact(Arm::A, SQRT_2), FunctionType::Balanced);
        assert!((b.lower - 1.0).abs() < 1e-15 && (b.upper - 1.0).abs() < 1e-15);
        let b = fidelity_bounds(&BellEstimate::exact(Arm::A, 0.0), FunctionType::Balanced);
        assert_eq!((b.lower, b.upper), (0.0, 0.5));
        let b = fidelity_bounds(&BellEstimate::exact(Arm::A, SQRT_2), FunctionType::Constant);
        assert_eq!(b.lower, 0.0);
        assert!((b.raw_lower + 1.0).abs() < 1e-15);
    }

    #[test]
    fn werner_bounds_contain_true_fidelity() {
        let cfg = ExperimentConfig { noise_p: 0.8, ..Default::default() };
        let rho = joint_output_state(&cfg, Arm::A).unwrap();
        let m = exact_bell_mean(&rho).unwrap();
        let b = fidelity_bounds_from_mean(m, FunctionType::Balanced);
        assert!((b.lower - 0.8).abs() < 1e-12);
        assert!((b.upper - 0.9).abs() < 1e-12);
        // oracle: (1 + 3p)/4 from the Werner mixture
        let f = true_fidelity(&rho, FunctionType::Balanced).unwrap();
        assert!((f - 0.85).abs() < 1e-12);
        assert!(b.lower <= f && f <= b.upper);
    }

    #[test]
    fn table_decisions() {
        let r = classify(&BellEstimate::exact(Arm::A, SQRT_2), &BellEstimate::exact(Arm::B, -SQRT_2));
        assert_eq!((r.arm_a.decision, r.arm_b.decision), (Decision::Balanced, Decision::Constant));
        assert!((r.p_success_lower.unwrap() - 1.0).abs() < 1e-15);
        assert!((speedup_factor(&r).unwrap() - 4.0).abs() < 1e-14);

        let r = classify(&BellEstimate::exact(Arm::A, 1.2), &BellEstimate::exact(Arm::B, -1.2));
        let want = (1.2 / SQRT_2 + 1.2 / SQRT_2) / 2.0;
        assert!((r.p_success_lower.unwrap() - want).abs() < 1e-12);
        assert!((want - 0.848528137423857).abs() < 1e-12);

        let r = classify(&BellEstimate::exact(Arm::A, 0.5), &BellEstimate::exact(Arm::B, -1.2));
        assert_eq!(r.arm_a.decision, Decision::Inconclusive);
        assert_eq!(r.arm_b.decision, Decision::Constant);
        assert_eq!(r.p_success_lower, None);
        assert_eq!(speedup_factor(&r), Err(Error::Inconclusive));
    }

    #[test]
    fn speedup_reference_values() {
        let at = |p: f64| {
            let m = p * SQRT_2;
            speedup_factor(&classify(&BellEstimate::exact(Arm::A, m), &BellEstimate::exact(Arm::B, -m))).unwrap()
        };
        assert!((at(1.0) - 4.0).abs() < 1e-12);
        assert!((at(0.8) - 3.2).abs() < 1e-12);
        // P = 1/sqrt2 is exactly at the threshold mean 1, which the strict rule rejects
        let just_above = 1.0 + 1e-9;
        let r = classify(&BellEstimate::exact(Arm::A, just_above), &BellEstimate::exact(Arm::B, -just_above));
        assert!((speedup_factor(&r).unwrap() - 2.0 * SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn sandwich_and_tsirelson_on_random_states() {
        let phi = target_state(FunctionType::Balanced);
        let psi = target_state(FunctionType::Constant);
        for rho in random_density_operators(5, 1000, 4).unwrap() {
            let m = exact_bell_mean(&rho).unwrap();
            assert!(m.abs() <= SQRT_2 + 1e-10);
            let w = m / SQRT_2;
            let f_phi = rho.fidelity_with_pure(&phi).unwrap();
            let f_psi = rho.fidelity_with_pure(&psi).unwrap();
            assert!(w <= f_phi + 1e-10 && f_phi <= (w + 1.0) / 2.0 + 1e-10);
            assert!(-w <= f_psi + 1e-10 && f_psi <= (-w + 1.0) / 2.0 + 1e-10);
        }
    }

    #[test]
    fn classify_ignores_record_order() {
        let mut recs = records(Arm::A, &[1, -1, 1, 1, 1, -1, 1], &[1, 1, -1, 1, 1]);
        recs.extend(records(Arm::B, &[-1, -1, 1, -1], &[-1, -1, -1, 1, -1]));
        let base = classify(&estimate(&recs, Arm::A).unwrap(), &estimate(&recs, Arm::B).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            for i in (1..recs.len()).rev() {
                recs.swap(i, rng.random_range(0..=i));
            }
            let r = classify(&estimate(&recs, Arm::A).unwrap(), &estimate(&recs, Arm::B).unwrap());
            assert_eq!(r, base);
        }
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(0.8, 15), "0.800000000000000");
        assert_eq!(format_decimal(SQRT_2, 15), "1.41421356237310");
        assert_eq!(format_decimal(-3.2, 15), "-3.20000000000000");
        assert_eq!(format_decimal(0.0, 15), "0.00000000000000");
        assert_eq!(format_decimal(0.00125, 13), "0.001250000000000");
        let r = classify(&BellEstimate::exact(Arm::A, SQRT_2), &BellEstimate::exact(Arm::B, 0.3));
        let text = serde_json::to_string(&r.to_json_value()).unwrap();
        assert!(text.contains("\"mean\":1.41421356237310"), "{text}");
        assert!(text.contains("\"speedup\":null"));
        assert!(text.contains("\"decision_b\":\"inconclusive\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn violation_implies_bound_above_threshold(mean in -SQRT_2..SQRT_2, se in 0.0f64..0.2, k in 0.0f64..4.0) {
                let est = BellEstimate::from_mean(Arm::A, mean, se);
                let report = classify_with_margin(&est, &est, k);
                if report.arm_a.violated {
                    let f = report.arm_a.decision.function().unwrap();
                    prop_assert!(fidelity_bounds(&est, f).lower > FRAC_1_SQRT_2 - 1e-12);
                }
                if report.is_conclusive() {
                    prop_assert!(speedup_factor(&report).unwrap() >= 2.0 * SQRT_2 - 1e-12);
                }
            }

            #[test]
            fn bounds_are_ordered(mean in -2.0f64..2.0) {
                for f in FunctionType::ALL {
                    let b = fidelity_bounds_from_mean(mean, f);
                    prop_assert!(b.lower <= b.upper);
                    prop_assert!((0.0..=1.0).contains(&b.lower) && (0.0..=1.0).contains(&b.upper));
                }
            }
        }
    }
}

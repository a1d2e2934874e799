//! The two-arm experiment: source, circuits, exact output states and sampling.
//!
//! Each arm is simulated on a three-qubit register
//!
//! | qubit | meaning                                                        |
//! |-------|----------------------------------------------------------------|
//! | 0     | polarisation of the photon sent straight to D1 (arm B: D3)     |
//! | 1     | polarisation of the photon entering the interferometer         |
//! | 2     | path of the interferometer photon (0 = 2 / a, 1 = 2' / b)      |
//!
//! The interferometer photon always enters on path 2. Tracing out qubit 2
//! leaves the detector-pair state ordered `(D1, D2)` (arm B: `(D3, D4)`).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply, expectation, kron, partial_trace, ComplexMatrix, DensityOperator, StateVector, C64};
use crate::qoptics::{
    dove_cnot, hwp, hwp_in_path, pauli, pbs, qwp, x_basis_adapter, Basis, DetectorId, OpticalElement, PathMode,
};

/// The hidden Deutsch function of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionType {
    /// `f(0) ≠ f(1)`; the oracle acts as `X`.
    Balanced,
    /// `f(0) = f(1)`; the oracle acts as `I`.
    Constant,
}

impl FunctionType {
    pub const ALL: [FunctionType; 2] = [FunctionType::Balanced, FunctionType::Constant];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Balanced => "balanced",
            Self::Constant => "constant",
        }
    }

    /// Sign of the ideal outcome product and of the ideal Bell mean.
    pub fn ideal_sign(self) -> i8 {
        match self {
            Self::Balanced => 1,
            Self::Constant => -1,
        }
    }
}

impl fmt::Display for FunctionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "balanced" | "b" => Ok(Self::Balanced),
            "constant" | "c" => Ok(Self::Constant),
            other => Err(Error::InvalidConfig(format!("unknown function type `{other}`"))),
        }
    }
}

/// Interferometer arm; A closes on (D1, D2), B on (D3, D4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub const ALL: [Arm; 2] = [Arm::A, Arm::B];

    pub fn detectors(self) -> (DetectorId, DetectorId) {
        match self {
            Self::A => (DetectorId::D1, DetectorId::D2),
            Self::B => (DetectorId::D3, DetectorId::D4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            other => Err(Error::InvalidConfig(format!("unknown arm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub fn_a: FunctionType,
    pub fn_b: FunctionType,
    /// Werner weight of the EPR source; 1 is noiseless.
    pub noise_p: f64,
    /// Per-detector click probability, in (0, 1].
    pub detector_efficiency: f64,
    pub shots_per_basis: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fn_a: FunctionType::Balanced,
            fn_b: FunctionType::Constant,
            noise_p: 1.0,
            detector_efficiency: 1.0,
            shots_per_basis: 10_000,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn function(&self, arm: Arm) -> FunctionType {
        match arm {
            Arm::A => self.fn_a,
            Arm::B => self.fn_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_p) {
            return Err(Error::POutOfRange(self.noise_p));
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "detector efficiency {} outside (0, 1]",
                self.detector_efficiency
            )));
        }
        if self.shots_per_basis == 0 {
            return Err(Error::InvalidConfig("shots_per_basis must be at least 1".into()));
        }
        Ok(())
    }
}

/// One coincidence: both detectors of an arm fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub shot: u64,
    pub arm: Arm,
    pub basis: Basis,
    /// Outcome of D1 (arm B: D3), ±1.
    pub first: i8,
    /// Outcome of D2 (arm B: D4), ±1.
    pub second: i8,
}

impl MeasurementRecord {
    pub fn product(&self) -> i8 {
        self.first * self.second
    }
}

/// A shot lost to detector inefficiency; excluded from every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DroppedShot {
    pub shot: u64,
    pub arm: Arm,
    pub basis: Basis,
    pub missed_first: bool,
    pub missed_second: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleRun {
    pub records: Vec<MeasurementRecord>,
    pub dropped: Vec<DroppedShot>,
}

impl SampleRun {
    pub fn records_for(&self, arm: Arm, basis: Basis) -> impl Iterator<Item = &MeasurementRecord> {
        self.records.iter().filter(move |r| r.arm == arm && r.basis == basis)
    }

    /// CSV with header `shot,arm,basis,d_first,d_second`; outcomes as `+1`/`-1`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records_csv(&self.records, writer)
    }
}

fn csv_err(e: impl fmt::Display) -> Error {
    Error::InvalidConfig(format!("csv: {e}"))
}

fn outcome_str(v: i8) -> &'static str {
    if v > 0 {
        "+1"
    } else {
        "-1"
    }
}

pub fn write_records_csv<W: Write>(records: &[MeasurementRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["shot", "arm", "basis", "d_first", "d_second"]).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.shot.to_string().as_str(),
            r.arm.as_str(),
            r.basis.as_str(),
            outcome_str(r.first),
            outcome_str(r.second),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["shot", "arm", "basis", "d_first", "d_second"] {
        return Err(csv_err(format!("unexpected header {header:?}")));
    }
    let parse_outcome = |s: &str| -> Result<i8> {
        match s.trim() {
            "+1" | "1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(csv_err(format!("outcome `{other}` is not ±1"))),
        }
    };
    rdr.records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(MeasurementRecord {
                shot: row[0].trim().parse().map_err(csv_err)?,
                arm: row[1].parse()?,
                basis: row[2].parse()?,
                first: parse_outcome(&row[3])?,
                second: parse_outcome(&row[4])?,
            })
        })
        .collect()
}

/// `(|V>_1 |H>_1' - |H>_1 |V>_1')/√2` on `[photon 1', photon 1]`.
pub fn epr_vector() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // index = 2·pol(1') + pol(1); H = 0, V = 1
    StateVector::from_real(&[0.0, -s, s, 0.0]).expect("normalised")
}

pub fn epr_state() -> DensityOperator {
    epr_vector().to_density()
}

/// `p·ρ + (1 - p)·I/d`.
pub fn werner(rho: &DensityOperator, p: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::POutOfRange(p));
    }
    rho.mix(&DensityOperator::maximally_mixed(rho.dim())?, p)
}

/// Output port of the single-photon schematic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchematicDetector {
    D2,
    D2Prime,
}

/// Result of the gate-algebra evaluation of one schematic run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchematicOutcome {
    /// Unnormalised amplitude left on `|1>` (the D2 port).
    pub amplitude: Complex64,
    pub detector: SchematicDetector,
}

/// Evaluates `H·U·H|1> + α·X·H·U·H|0>` with `U = X` (balanced) or `I`
/// (constant), in the logical basis. D2 fires when amplitude survives on
/// `|1>`, D2' when it cancels.
pub fn schematic_outcome(function: FunctionType, alpha: i8) -> Result<SchematicOutcome> {
    if alpha != 1 && alpha != -1 {
        return Err(Error::InvalidConfig(format!("alpha must be ±1, got {alpha}")));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = ComplexMatrix::from_real(2, 2, &[h, h, h, -h])?;
    let x = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])?;
    let oracle = match function {
        FunctionType::Balanced => x.clone(),
        FunctionType::Constant => ComplexMatrix::identity(2),
    };
    let core = &(&hadamard * &oracle) * &hadamard;
    let zero = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let one = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let first = core.matvec(&one)?;
    let second = (&x * &core).matvec(&zero)?;
    let total: Vec<C64> = first.iter().zip(&second).map(|(a, b)| a + b * f64::from(alpha)).collect();
    debug_assert!(total[0].norm() < 1e-12, "schematic leaves amplitude on |0>");
    let amplitude = total[1];
    let detector = if amplitude.norm() > 1e-12 { SchematicDetector::D2 } else { SchematicDetector::D2Prime };
    Ok(SchematicOutcome { amplitude, detector })
}

/// Ordered elements of one arm, acting on `(polarisation, path)`.
#[derive(Debug, Clone)]
pub struct ArmCircuit {
    pub function: FunctionType,
    pub arm: Arm,
    elements: Vec<OpticalElement>,
}

/// One intermediate state while stepping a circuit.
#[derive(Debug, Clone)]
pub struct Step {
    pub label: String,
    pub state: StateVector,
}

impl ArmCircuit {
    pub fn elements(&self) -> &[OpticalElement] {
        &self.elements
    }

    pub fn element(&self, label: &str) -> Option<&OpticalElement> {
        self.elements.iter().find(|e| e.label() == label)
    }

    /// Composed 4x4 unitary on `(polarisation, path)`.
    pub fn unitary(&self) -> Result<ComplexMatrix> {
        self.elements.iter().try_fold(ComplexMatrix::identity(4), |acc, e| Ok(&e.register_unitary(2)? * &acc))
    }

    /// Composed unitary on the three-qubit arm register.
    pub fn register_unitary(&self) -> Result<ComplexMatrix> {
        kron(&ComplexMatrix::identity(2), &self.unitary()?)
    }

    /// State after every element, starting from `input` on `(polarisation, path)`.
    pub fn steps(&self, input: &StateVector) -> Result<Vec<Step>> {
        let mut state = input.clone();
        let mut out = Vec::with_capacity(self.elements.len());
        for e in &self.elements {
            state = apply(&e.register_unitary(2)?, &state)?;
            out.push(Step { label: e.label().to_string(), state: state.clone() });
        }
        Ok(out)
    }

    /// State right after the element labelled `label`.
    pub fn state_after(&self, input: &StateVector, label: &str) -> Result<StateVector> {
        self.steps(input)?
            .into_iter()
            .find(|s| s.label == label)
            .map(|s| s.state)
            .ok_or_else(|| Error::InvalidConfig(format!("no element labelled `{label}`")))
    }

    pub fn run(&self, input: &StateVector) -> Result<StateVector> {
        apply(&self.unitary()?, input)
    }
}

/// Builds arm circuits; the Hadamard plates can be swapped for fault injection.
#[derive(Clone, Copy)]
pub struct ArmBuilder {
    hadamard_plate: fn(f64) -> OpticalElement,
}

impl Default for ArmBuilder {
    fn default() -> Self {
        Self { hadamard_plate: hwp }
    }
}

impl fmt::Debug for ArmBuilder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ArmBuilder").finish_non_exhaustive()
    }
}

impl ArmBuilder {
    pub fn with_hadamard_plate(hadamard_plate: fn(f64) -> OpticalElement) -> Self {
        Self { hadamard_plate }
    }

    /// Element sequence of one arm. Arm B mirrors arm A with HWP4-6 in place of HWP1-3.
    ///
    /// 1. `QWP-in` (0°) and `QWP-out` (90°) bracket the arm; they commute with
    ///    every `z` measurement and fix the relative phase of the two EPR terms.
    /// 2. `PBS1` + `HWP45-2'` route the `|V>` EPR term into the spare port 2'
    ///    as `|H>`, so the arm receives both terms coherently.
    /// 3. `HWP1` → `PBS2` → `HWP2` → `DP` → `HWP3` → `HWP45-b` is the
    ///    interferometer proper (arm B: `HWP4`, `PBS3`, `HWP5`, `DP`, `HWP6`).
    pub fn build(&self, function: FunctionType, arm: Arm) -> ArmCircuit {
        let plate = self.hadamard_plate;
        let (h1, bs, h2, h3) = match arm {
            Arm::A => ("HWP1", "PBS2", "HWP2", "HWP3"),
            Arm::B => ("HWP4", "PBS3", "HWP5", "HWP6"),
        };
        let elements = vec![
            qwp(0.0).with_label("QWP-in"),
            pbs().with_label("PBS1"),
            hwp_in_path(45.0, PathMode::P2Prime).with_label("HWP45-2'"),
            plate(22.5).with_label(h1),
            pbs().with_label(bs),
            plate(22.5).with_label(h2),
            dove_cnot(function).with_label("DP"),
            plate(22.5).with_label(h3),
            hwp_in_path(45.0, PathMode::B).with_label("HWP45-b"),
            qwp(90.0).with_label("QWP-out"),
        ];
        ArmCircuit { function, arm, elements }
    }

    pub fn joint_output_state(&self, cfg: &ExperimentConfig, arm: Arm) -> Result<DensityOperator> {
        cfg.validate()?;
        let circuit = self.build(cfg.function(arm), arm);
        let source = werner(&epr_state(), cfg.noise_p)?;
        let path = PathMode::P2.ket().to_density();
        let full = DensityOperator::new(kron(source.matrix(), path.matrix())?)?;
        let evolved = apply(&circuit.register_unitary()?, &full)?;
        partial_trace(&evolved, &[0, 1])
    }
}

pub fn build_arm(function: FunctionType, arm: Arm) -> ArmCircuit {
    ArmBuilder::default().build(function, arm)
}

/// Detector-pair state of `arm`, ordered `(first detector, second detector)`.
pub fn joint_output_state(cfg: &ExperimentConfig, arm: Arm) -> Result<DensityOperator> {
    ArmBuilder::default().joint_output_state(cfg, arm)
}

/// `ρ` as seen by `z` detectors once the basis adapters for `basis` are in place.
pub fn rotate_to_basis(rho: &DensityOperator, basis: Basis) -> Result<DensityOperator> {
    match basis {
        Basis::Z => Ok(rho.clone()),
        Basis::X => {
            let a = x_basis_adapter();
            apply(&kron(a.unitary(), a.unitary())?, rho)
        }
    }
}

/// `<σ_b ⊗ σ_b>` on a detector-pair state.
pub fn correlator(rho: &DensityOperator, basis: Basis) -> Result<f64> {
    let p = pauli(basis);
    expectation(&kron(&p, &p)?, rho)
}

/// Same correlator, but measured as the hardware does: adapters, then `σ_z ⊗ σ_z`.
pub fn correlator_via_adapters(rho: &DensityOperator, basis: Basis) -> Result<f64> {
    correlator(&rotate_to_basis(rho, basis)?, Basis::Z)
}

/// Born probabilities of `(first, second)` outcomes, indexed `[++, +-, -+, --]`.
pub fn outcome_probabilities(rho: &DensityOperator, basis: Basis) -> Result<[f64; 4]> {
    let probs = rotate_to_basis(rho, basis)?.probabilities();
    let total: f64 = probs.iter().sum();
    Ok([probs[0] / total, probs[1] / total, probs[2] / total, probs[3] / total])
}

/// Independent RNG stream for one `(arm, basis)` block.
///
/// All streams share the ChaCha8 key derived from `seed`; the stream id is
/// `2·arm + basis` (A = 0, B = 1; z = 0, x = 1), so blocks never overlap and
/// each is reproducible on its own.
pub fn stream_rng(seed: u64, arm: Arm, basis: Basis) -> ChaCha8Rng {
    let arm_id = match arm {
        Arm::A => 0,
        Arm::B => 1,
    };
    let basis_id = match basis {
        Basis::Z => 0,
        Basis::X => 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * arm_id + basis_id);
    rng
}

const OUTCOMES: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

fn sample_block(
    probs: &[f64; 4],
    arm: Arm,
    basis: Basis,
    cfg: &ExperimentConfig,
    run: &mut SampleRun,
) {
    let cdf = [probs[0], probs[0] + probs[1], probs[0] + probs[1] + probs[2]];
    let eta = cfg.detector_efficiency;
    let mut rng = stream_rng(cfg.seed, arm, basis);
    for shot in 0..cfg.shots_per_basis as u64 {
        // outcome first, so the outcome sequence does not depend on eta
        let u: f64 = rng.random();
        let k = cdf.iter().position(|&c| u < c).unwrap_or(3);
        let (first, second) = OUTCOMES[k];
        if eta < 1.0 {
            let missed_first = rng.random::<f64>() >= eta;
            let missed_second = rng.random::<f64>() >= eta;
            if missed_first || missed_second {
                run.dropped.push(DroppedShot { shot, arm, basis, missed_first, missed_second });
                continue;
            }
        }
        run.records.push(MeasurementRecord { shot, arm, basis, first, second });
    }
}

/// Draws `shots_per_basis` shots per `(arm, basis)`, in the order
/// A/z, A/x, B/z, B/x. Identical configs give identical runs.
pub fn sample_records(cfg: &ExperimentConfig) -> Result<SampleRun> {
    cfg.validate()?;
    let mut run = SampleRun::default();
    for arm in Arm::ALL {
        let rho = joint_output_state(cfg, arm)?;
        for basis in Basis::ALL {
            let probs = outcome_probabilities(&rho, basis)?;
            sample_block(&probs, arm, basis, cfg, &mut run);
        }
    }
    Ok(run)
}

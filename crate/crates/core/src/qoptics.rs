//! Unitary models of the optical elements and the detector observables.
//!
//! Local conventions used by every element:
//!
//! - polarisation qubit: index 0 = `|H>`, index 1 = `|V>`. The truth-value
//!   assignment is the reverse (`|H> ↔ 1`, `|V> ↔ 0`), see [`Polarization`].
//! - path qubit: index 0 = path 2 (later `a`), index 1 = path 2' (later `b`).
//! - two-qubit elements act on `(polarisation, path)` in that order.
//!
//! Wave plates use the real Jones matrix of a retarder with its fast axis at
//! `θ` from horizontal; no global phase prefactor is carried.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed, ComplexMatrix, StateVector, C64, I, ONE, ZERO};
use crate::protocol::FunctionType;

/// Photon polarisation in the `z` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    /// Position in the `(|H>, |V>)` vector basis.
    pub fn index(self) -> usize {
        match self {
            Self::H => 0,
            Self::V => 1,
        }
    }

    /// Truth value carried by the polarisation: `|H> ↔ 1`, `|V> ↔ 0`.
    pub fn logical_value(self) -> u8 {
        match self {
            Self::H => 1,
            Self::V => 0,
        }
    }

    /// `σ_z` eigenvalue.
    pub fn sign(self) -> i8 {
        match self {
            Self::H => 1,
            Self::V => -1,
        }
    }

    pub fn ket(self) -> StateVector {
        StateVector::basis(2, self.index()).expect("dim 2")
    }
}

/// Spatial mode of a photon inside an interferometer arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathMode {
    /// Path 2, relabelled `a` after the dove prism.
    P2,
    /// Path 2', relabelled `b` after the dove prism.
    P2Prime,
}

impl PathMode {
    pub const A: PathMode = PathMode::P2;
    pub const B: PathMode = PathMode::P2Prime;

    pub fn index(self) -> usize {
        match self {
            Self::P2 => 0,
            Self::P2Prime => 1,
        }
    }

    pub fn ket(self) -> StateVector {
        StateVector::basis(2, self.index()).expect("dim 2")
    }
}

/// Measurement basis selected in front of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Z => "z",
            Self::X => "x",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" => Ok(Self::Z),
            "x" => Ok(Self::X),
            other => Err(Error::InvalidConfig(format!("unknown basis `{other}`"))),
        }
    }
}

/// The four polarisation detectors. D1/D2 close arm A, D3/D4 arm B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorId {
    D1,
    D2,
    D3,
    D4,
}

impl DetectorId {
    /// Qubit of the detector-pair register (0 = first detector of the arm).
    pub fn pair_slot(self) -> usize {
        match self {
            Self::D1 | Self::D3 => 0,
            Self::D2 | Self::D4 => 1,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for DetectorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D1" => Ok(Self::D1),
            "D2" => Ok(Self::D2),
            "D3" => Ok(Self::D3),
            "D4" => Ok(Self::D4),
            _ => Err(Error::UnknownDetector(s.to_string())),
        }
    }
}

/// Physical identity of an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    /// Half-wave plate across the whole beam.
    Hwp { angle_deg: f64 },
    /// Half-wave plate sitting in one path only.
    PathHwp { angle_deg: f64, path: PathMode },
    /// Quarter-wave plate across the whole beam.
    Qwp { angle_deg: f64 },
    /// Polarising beam splitter: `|H>` transmitted, `|V>` reflected.
    Pbs,
    /// Dove-prism arrangement realising the unknown function.
    DoveCnot(FunctionType),
    /// 45° polariser + half-wave plate in front of a detector.
    XBasisAdapter,
}

impl ElementKind {
    /// Number of qubits (polarisation, then path) the element touches.
    pub fn arity(&self) -> usize {
        match self {
            Self::Hwp { .. } | Self::Qwp { .. } | Self::XBasisAdapter => 1,
            Self::PathHwp { .. } | Self::Pbs | Self::DoveCnot(_) => 2,
        }
    }
}

/// An element with its exact unitary and the register qubits it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalElement {
    label: String,
    kind: ElementKind,
    unitary: ComplexMatrix,
    acts_on: Vec<usize>,
}

impl OpticalElement {
    /// Wrap an arbitrary unitary. Used for fault injection and tests.
    pub fn from_parts(label: impl Into<String>, kind: ElementKind, unitary: ComplexMatrix) -> Result<Self> {
        unitary.ensure_unitary()?;
        let arity = kind.arity();
        if unitary.rows() != 1 << arity {
            return Err(Error::DimMismatch { expected: 1 << arity, found: unitary.rows() });
        }
        Ok(Self { label: label.into(), kind, unitary, acts_on: (0..arity).collect() })
    }

    fn new_unchecked(kind: ElementKind, unitary: ComplexMatrix) -> Self {
        let label = match kind {
            ElementKind::Hwp { angle_deg } => format!("HWP({angle_deg}°)"),
            ElementKind::PathHwp { angle_deg, path } => format!("HWP({angle_deg}°) on {path:?}"),
            ElementKind::Qwp { angle_deg } => format!("QWP({angle_deg}°)"),
            ElementKind::Pbs => "PBS".into(),
            ElementKind::DoveCnot(f) => format!("DP[{f}]"),
            ElementKind::XBasisAdapter => "x-adapter".into(),
        };
        debug_assert!(unitary.is_unitary());
        Self { label, acts_on: (0..kind.arity()).collect(), kind, unitary }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Re-target the element to other register qubits.
    pub fn on(mut self, acts_on: &[usize]) -> Result<Self> {
        if acts_on.len() != self.kind.arity() {
            return Err(Error::DimMismatch { expected: self.kind.arity(), found: acts_on.len() });
        }
        for (pos, &q) in acts_on.iter().enumerate() {
            if acts_on[..pos].contains(&q) {
                return Err(Error::BadIndex { index: q, qubits: acts_on.len() });
            }
        }
        self.acts_on = acts_on.to_vec();
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn acts_on(&self) -> &[usize] {
        &self.acts_on
    }

    /// Unitary lifted to an `n_qubits` register.
    pub fn register_unitary(&self, n_qubits: usize) -> Result<ComplexMatrix> {
        embed(&self.unitary, &self.acts_on, n_qubits)
    }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `sin`/`cos` with round-off at multiples of 90° snapped to exact 0/±1.
fn exact_sin_cos(rad: f64) -> (f64, f64) {
    let snap = |v: f64| {
        if v.abs() < 4.0 * f64::EPSILON {
            0.0
        } else if (v.abs() - 1.0).abs() < 4.0 * f64::EPSILON {
            v.signum()
        } else {
            v
        }
    };
    let (s, c) = rad.sin_cos();
    (snap(s), snap(c))
}

/// Jones matrix `[[cos2θ, sin2θ], [sin2θ, -cos2θ]]`.
pub fn hwp_matrix(theta_deg: f64) -> ComplexMatrix {
    let (s, c) = exact_sin_cos(2.0 * theta_deg.to_radians());
    ComplexMatrix::new(2, 2, vec![re(c), re(s), re(s), re(-c)]).expect("finite angle")
}

/// Quarter-wave plate: `R(-θ) · diag(1, i) · R(θ)`.
pub fn qwp_matrix(theta_deg: f64) -> ComplexMatrix {
    let (s, c) = exact_sin_cos(theta_deg.to_radians());
    // expanded product; a = 1, d = i on the fast/slow axes
    let a = ONE;
    let d = I;
    let m00 = a * c * c + d * s * s;
    let m01 = (a - d) * c * s;
    let m11 = a * s * s + d * c * c;
    ComplexMatrix::new(2, 2, vec![m00, m01, m01, m11]).expect("finite angle")
}

/// `|p, q> → |p, q ⊕ [p = V]>` on `(polarisation, path)`.
fn v_controlled_path_flip() -> ComplexMatrix {
    ComplexMatrix::from_fn(4, 4, |i, j| {
        let (pol, path) = (j >> 1, j & 1);
        let target = (pol << 1) | (path ^ pol);
        if i == target {
            ONE
        } else {
            ZERO
        }
    })
}

/// Half-wave plate at `theta_deg` on one polarisation qubit.
///
/// # Panics
///
/// Panics if `theta_deg` is not finite.
pub fn hwp(theta_deg: f64) -> OpticalElement {
    assert!(theta_deg.is_finite(), "wave-plate angle must be finite");
    OpticalElement::new_unchecked(ElementKind::Hwp { angle_deg: theta_deg }, hwp_matrix(theta_deg))
}

/// Half-wave plate placed in a single path; identity on the other path.
pub fn hwp_in_path(theta_deg: f64, path: PathMode) -> OpticalElement {
    assert!(theta_deg.is_finite(), "wave-plate angle must be finite");
    let j = hwp_matrix(theta_deg);
    let u = ComplexMatrix::from_fn(4, 4, |r, c| {
        let (pr, qr, pc, qc) = (r >> 1, r & 1, c >> 1, c & 1);
        if qr != qc {
            ZERO
        } else if qr == path.index() {
            j[(pr, pc)]
        } else if pr == pc {
            ONE
        } else {
            ZERO
        }
    });
    OpticalElement::new_unchecked(ElementKind::PathHwp { angle_deg: theta_deg, path }, u)
}

/// Quarter-wave plate at `theta_deg` on one polarisation qubit.
pub fn qwp(theta_deg: f64) -> OpticalElement {
    assert!(theta_deg.is_finite(), "wave-plate angle must be finite");
    OpticalElement::new_unchecked(ElementKind::Qwp { angle_deg: theta_deg }, qwp_matrix(theta_deg))
}

/// Polarising beam splitter on `(polarisation, path)`: `|H>` keeps its path,
/// `|V>` is reflected into the other one.
pub fn pbs() -> OpticalElement {
    OpticalElement::new_unchecked(ElementKind::Pbs, v_controlled_path_flip())
}

/// Dove-prism arrangement on `(polarisation, path)`.
///
/// Balanced: `|H>` keeps its path (2→a, 2'→b), `|V>` swaps it (2→b, 2'→a).
/// Constant: both polarisations keep their path.
pub fn dove_cnot(function: FunctionType) -> OpticalElement {
    let u = match function {
        FunctionType::Balanced => v_controlled_path_flip(),
        FunctionType::Constant => ComplexMatrix::identity(4),
    };
    OpticalElement::new_unchecked(ElementKind::DoveCnot(function), u)
}

/// Rotates the analysed basis so a `z` detector behind it reads `σ_x`.
pub fn x_basis_adapter() -> OpticalElement {
    OpticalElement::new_unchecked(ElementKind::XBasisAdapter, hwp_matrix(22.5))
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::diagonal(&[ONE, -ONE])
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::new(2, 2, vec![ZERO, ONE, ONE, ZERO]).expect("constant")
}

pub fn pauli(basis: Basis) -> ComplexMatrix {
    match basis {
        Basis::Z => sigma_z(),
        Basis::X => sigma_x(),
    }
}

/// `σ_z` or `σ_x` of `detector`, embedded on the two-qubit detector-pair register.
pub fn observable(detector: DetectorId, basis: Basis) -> ComplexMatrix {
    embed(&pauli(basis), &[detector.pair_slot()], 2).expect("valid slot")
}

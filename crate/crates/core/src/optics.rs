//! Optical elements as mode transformations.
//!
//! Conventions (all matrices act on the `(H, V)` amplitudes of one photon):
//!
//! * HWP at θ: `[[cos2θ, sin2θ], [sin2θ, -cos2θ]]`
//! * QWP at θ: `[[cos²θ + i sin²θ, (1-i) sinθ cosθ], [(1-i) sinθ cosθ, sin²θ + i cos²θ]]`
//! * PBS on inputs `(a, b)` to outputs `(c, d)`: `aH -> cH`, `bH -> dH`,
//!   `aV -> dV`, `bV -> cV`. H is transmitted, V reflected, no reflection phase.
//! * PBS45: HWP(22.5°) on both inputs, PBS, HWP(22.5°) on both outputs.
//! * MISMATCH(λ): `a†_bin0 -> λ a†_bin0 + √(1-λ²) a†_bin1` for both polarizations.
//!
//! Every element except MISMATCH acts identically on each temporal bin.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::fock::{
    C64, FockError, Ket, ModeLabel, ModeMatrix, Polarization, Projection, QubitState,
};

pub type Jones = [[C64; 2]; 2];

const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("{kind} binds {expected} line(s), got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{kind} needs two distinct lines, got `{line}` twice")]
    SameLine { kind: &'static str, line: String },
    #[error("overlap {0} outside [0, 1]")]
    OverlapOutOfRange(f64),
    #[error("mismatch needs at least two temporal bins, registry has {0}")]
    NeedsTwoBins(u8),
    #[error("{kind} matrix deviates from unitarity by {defect:.3e}")]
    NotUnitary { kind: &'static str, defect: f64 },
    #[error("no photon passes the polarizer on line `{0}`")]
    Blocked(String),
}

pub type Result<T, E = OpticsError> = std::result::Result<T, E>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn hwp(theta_deg: f64) -> Jones {
    let t = 2.0 * theta_deg.to_radians();
    [[c(t.cos()), c(t.sin())], [c(t.sin()), c(-t.cos())]]
}

pub fn qwp(theta_deg: f64) -> Jones {
    let t = theta_deg.to_radians();
    let (s, co) = t.sin_cos();
    let i = C64::i();
    let off = (c(1.0) - i) * (s * co);
    [
        [c(co * co) + i * (s * s), off],
        [off, c(s * s) + i * (co * co)],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PauliKind {
    X,
    Y,
    Z,
}

impl PauliKind {
    pub fn letter(self) -> &'static str {
        match self {
            PauliKind::X => "X",
            PauliKind::Y => "Y",
            PauliKind::Z => "Z",
        }
    }
}

pub fn pauli(kind: PauliKind) -> Jones {
    let i = C64::i();
    match kind {
        PauliKind::X => [[c(0.0), c(1.0)], [c(1.0), c(0.0)]],
        PauliKind::Y => [[c(0.0), -i], [i, c(0.0)]],
        PauliKind::Z => [[c(1.0), c(0.0)], [c(0.0), c(-1.0)]],
    }
}

pub fn identity() -> Jones {
    [[c(1.0), c(0.0)], [c(0.0), c(1.0)]]
}

pub fn jones_mul(a: &Jones, b: &Jones) -> Jones {
    let mut out = [[c(0.0); 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (col, entry) in row.iter_mut().enumerate() {
            *entry = a[r][0] * b[0][col] + a[r][1] * b[1][col];
        }
    }
    out
}

pub fn jones_apply(m: &Jones, s: &QubitState) -> [C64; 2] {
    [
        m[0][0] * s.alpha + m[0][1] * s.beta,
        m[1][0] * s.alpha + m[1][1] * s.beta,
    ]
}

/// Unitary sending `state` to `|H⟩` and its orthogonal partner to `|V⟩`.
pub fn analyzer(state: &QubitState) -> Jones {
    [
        [state.alpha.conj(), state.beta.conj()],
        [-state.beta, state.alpha],
    ]
}

/// PBS permutation over `(aH, aV, bH, bV) -> (cH, cV, dH, dV)`.
pub fn pbs_matrix() -> ModeMatrix {
    let mut m = ModeMatrix::from_rows(&vec![vec![c(0.0); 4]; 4]);
    m.set(0, 0, c(1.0));
    m.set(3, 1, c(1.0));
    m.set(2, 2, c(1.0));
    m.set(1, 3, c(1.0));
    m
}

fn block_diag(a: &Jones, b: &Jones) -> ModeMatrix {
    let mut m = ModeMatrix::from_rows(&vec![vec![c(0.0); 4]; 4]);
    for r in 0..2 {
        for col in 0..2 {
            m.set(r, col, a[r][col]);
            m.set(r + 2, col + 2, b[r][col]);
        }
    }
    m
}

/// The composite PBS45 as one 4×4 matrix in the same mode ordering as [`pbs_matrix`].
pub fn pbs45_matrix() -> ModeMatrix {
    let w = block_diag(&hwp(22.5), &hwp(22.5));
    w.mul(&pbs_matrix()).mul(&w)
}

/// 50:50 non-polarizing mixer `[[1, 1], [1, -1]]/√2` between two modes.
pub fn beam_splitter() -> ModeMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ModeMatrix::from_2x2([[c(s), c(s)], [c(s), c(-s)]])
}

pub fn mismatch_matrix(lambda: f64) -> ModeMatrix {
    let r = (1.0 - lambda * lambda).max(0.0).sqrt();
    ModeMatrix::from_2x2([[c(lambda), c(-r)], [c(r), c(lambda)]])
}

fn check_unitary(kind: &'static str, m: &ModeMatrix) -> Result<()> {
    let defect = m.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(OpticsError::NotUnitary { kind, defect });
    }
    Ok(())
}

/// Applies a Jones matrix to every temporal bin of `line`.
pub fn apply_jones(ket: &Ket, line: &str, m: &Jones) -> Result<Ket> {
    let matrix = ModeMatrix::from_2x2(*m);
    check_unitary("jones", &matrix)?;
    let mut out = ket.clone();
    for [h, v] in ket.registry().line_modes(line)? {
        out = out.apply_unchecked(&[h, v], &matrix);
    }
    Ok(out)
}

/// Post-selects the terms where every photon on `line` passes a polarizer at θ.
pub fn polarizer(ket: &Ket, line: &str, theta_deg: f64) -> Result<Projection> {
    let state = QubitState::linear(theta_deg);
    let rot = analyzer(&state);
    let rotated = apply_jones(ket, line, &rot)?;
    let modes = ket.registry().line_modes(line)?;
    let projection = rotated.project(|occ| modes.iter().all(|[_, v]| occ[*v] == 0));
    let state = match projection.state {
        Some(s) => Some(apply_jones(&s, line, &jones_adjoint(&rot))?),
        None => None,
    };
    Ok(Projection {
        probability: projection.probability,
        state,
    })
}

pub fn jones_adjoint(m: &Jones) -> Jones {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

fn apply_pbs(ket: &Ket, a: &str, b: &str, out_a: &str, out_b: &str) -> Result<Ket> {
    let renamed = if (a, b) == (out_a, out_b) {
        ket.clone()
    } else {
        ket.relabel(&[(a, out_a), (b, out_b)])?
    };
    let reg = renamed.registry().clone();
    let ca = reg.line_modes(out_a)?;
    let cb = reg.line_modes(out_b)?;
    let m = pbs_matrix();
    let mut out = renamed;
    for (pa, pb) in ca.iter().zip(&cb) {
        out = out.apply_unchecked(&[pa[0], pa[1], pb[0], pb[1]], &m);
    }
    Ok(out)
}

fn apply_mismatch(ket: &Ket, line: &str, lambda: f64) -> Result<Ket> {
    let bins = ket.config().bins;
    if bins < 2 {
        return Err(OpticsError::NeedsTwoBins(bins));
    }
    let m = mismatch_matrix(lambda);
    let reg = ket.registry().clone();
    let mut out = ket.clone();
    for pol in Polarization::BOTH {
        let b0 = reg.require(&ModeLabel::new(line, pol, 0))?;
        let b1 = reg.require(&ModeLabel::new(line, pol, 1))?;
        out = out.apply_unchecked(&[b0, b1], &m);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ElementKind {
    Hwp { theta: f64 },
    Qwp { theta: f64 },
    Pbs,
    Pbs45,
    Polarizer { theta: f64 },
    Mismatch { lambda: f64 },
    Pauli(PauliKind),
}

impl ElementKind {
    pub fn name(&self) -> &'static str {
        match self {
            ElementKind::Hwp { .. } => "hwp",
            ElementKind::Qwp { .. } => "qwp",
            ElementKind::Pbs => "pbs",
            ElementKind::Pbs45 => "pbs45",
            ElementKind::Polarizer { .. } => "polarizer",
            ElementKind::Mismatch { .. } => "mismatch",
            ElementKind::Pauli(_) => "pauli",
        }
    }

    /// Number of spatial lines the element binds.
    pub fn arity(&self) -> usize {
        match self {
            ElementKind::Pbs | ElementKind::Pbs45 => 2,
            _ => 1,
        }
    }

    /// Polarization matrix for single-line unitary elements.
    pub fn jones(&self) -> Option<Jones> {
        match *self {
            ElementKind::Hwp { theta } => Some(hwp(theta)),
            ElementKind::Qwp { theta } => Some(qwp(theta)),
            ElementKind::Pauli(k) => Some(pauli(k)),
            _ => None,
        }
    }
}

/// An element bound to its input lines and (possibly renamed) output lines.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Element {
    kind: ElementKind,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Element {
    /// Validates arity and parameters. `outputs` empty means in place.
    pub fn new(kind: ElementKind, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        let name = kind.name();
        if inputs.len() != kind.arity() {
            return Err(OpticsError::Arity {
                kind: name,
                expected: kind.arity(),
                got: inputs.len(),
            });
        }
        let outputs = if outputs.is_empty() {
            inputs.clone()
        } else {
            outputs
        };
        if outputs.len() != kind.arity() {
            return Err(OpticsError::Arity {
                kind: name,
                expected: kind.arity(),
                got: outputs.len(),
            });
        }
        if kind.arity() == 2 {
            if inputs[0] == inputs[1] {
                return Err(OpticsError::SameLine {
                    kind: name,
                    line: inputs[0].clone(),
                });
            }
            if outputs[0] == outputs[1] {
                return Err(OpticsError::SameLine {
                    kind: name,
                    line: outputs[0].clone(),
                });
            }
        }
        for line in inputs.iter().chain(&outputs) {
            if !crate::fock::valid_line_name(line) {
                return Err(FockError::InvalidLine(line.clone()).into());
            }
        }
        match kind {
            ElementKind::Mismatch { lambda } if !(0.0..=1.0).contains(&lambda) => {
                return Err(OpticsError::OverlapOutOfRange(lambda));
            }
            ElementKind::Mismatch { lambda } => check_unitary(name, &mismatch_matrix(lambda))?,
            ElementKind::Pbs => check_unitary(name, &pbs_matrix())?,
            ElementKind::Pbs45 => check_unitary(name, &pbs45_matrix())?,
            _ => {}
        }
        if let Some(j) = kind.jones() {
            check_unitary(name, &ModeMatrix::from_2x2(j))?;
        }
        Ok(Element {
            kind,
            inputs,
            outputs,
        })
    }

    pub fn single(kind: ElementKind, line: &str) -> Result<Self> {
        Self::new(kind, vec![line.to_string()], Vec::new())
    }

    pub fn pair(kind: ElementKind, a: &str, b: &str, out_a: &str, out_b: &str) -> Result<Self> {
        Self::new(
            kind,
            vec![a.to_string(), b.to_string()],
            vec![out_a.to_string(), out_b.to_string()],
        )
    }

    pub fn kind(&self) -> &ElementKind {
        &self.kind
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    fn renames(&self) -> Vec<(&str, &str)> {
        self.inputs
            .iter()
            .zip(&self.outputs)
            .filter(|(i, o)| i != o)
            .map(|(i, o)| (i.as_str(), o.as_str()))
            .collect()
    }

    /// Applies the element. Polarizers post-select and fail with
    /// [`OpticsError::Blocked`] when nothing passes.
    pub fn apply(&self, ket: &Ket) -> Result<Ket> {
        let a = &self.inputs[0];
        match self.kind {
            ElementKind::Pbs => apply_pbs(ket, a, &self.inputs[1], &self.outputs[0], &self.outputs[1]),
            ElementKind::Pbs45 => {
                let b = &self.inputs[1];
                let w = hwp(22.5);
                let k = apply_jones(ket, a, &w)?;
                let k = apply_jones(&k, b, &w)?;
                let k = apply_pbs(&k, a, b, &self.outputs[0], &self.outputs[1])?;
                let k = apply_jones(&k, &self.outputs[0], &w)?;
                apply_jones(&k, &self.outputs[1], &w)
            }
            ElementKind::Mismatch { lambda } => self.rename(apply_mismatch(ket, a, lambda)?),
            ElementKind::Polarizer { theta } => {
                let p = polarizer(ket, a, theta)?;
                match p.state {
                    Some(s) => self.rename(s),
                    None => Err(OpticsError::Blocked(a.clone())),
                }
            }
            ElementKind::Hwp { .. } | ElementKind::Qwp { .. } | ElementKind::Pauli(_) => {
                let j = self.kind.jones().expect("single-line unitary");
                self.rename(apply_jones(ket, a, &j)?)
            }
        }
    }

    fn rename(&self, ket: Ket) -> Result<Ket> {
        let renames = self.renames();
        if renames.is_empty() {
            Ok(ket)
        } else {
            Ok(ket.relabel(&renames)?)
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.name(), self.inputs.join(" "))?;
        if self.outputs != self.inputs {
            write!(f, " -> {}", self.outputs.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{registry, BellKind, FockConfig};
    use proptest::prelude::*;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: &Jones, b: &Jones, tol: f64) -> bool {
        (0..2).all(|r| (0..2).all(|k| (a[r][k] - b[r][k]).norm() < tol))
    }

    fn state(v: [C64; 2]) -> QubitState {
        QubitState::normalized(v[0], v[1])
    }

    #[test]
    fn hwp_at_zero_flips_v() {
        assert!(close(&hwp(0.0), &pauli(PauliKind::Z), 1e-15));
    }

    #[test]
    fn hwp_at_22_5_is_hadamard() {
        let h = jones_apply(&hwp(22.5), &QubitState::h());
        let v = jones_apply(&hwp(22.5), &QubitState::v());
        assert!((h[0] - c(S)).norm() < 1e-15 && (h[1] - c(S)).norm() < 1e-15);
        assert!((v[0] - c(S)).norm() < 1e-15 && (v[1] - c(-S)).norm() < 1e-15);
    }

    #[test]
    fn qwp_at_zero_delays_v() {
        assert!(close(&qwp(0.0), &[[c(1.0), c(0.0)], [c(0.0), C64::i()]], 1e-15));
    }

    #[test]
    fn qwp_at_45_makes_left_circular() {
        let out = state(jones_apply(&qwp(45.0), &QubitState::h()));
        assert!((out.fidelity(&QubitState::left()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qwp_unitary_on_random_angles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = qwp(rng.gen_range(-360.0..360.0));
            assert!(close(&jones_mul(&q, &jones_adjoint(&q)), &identity(), 1e-12));
        }
    }

    proptest! {
        #[test]
        fn hwp_is_an_involution(theta in -720.0f64..720.0) {
            let h = hwp(theta);
            prop_assert!(close(&jones_mul(&h, &h), &identity(), 1e-12));
        }
    }

    #[test]
    fn pauli_actions() {
        let z = pauli(PauliKind::Z);
        assert_eq!(jones_apply(&z, &QubitState::h()), [c(1.0), c(0.0)]);
        assert_eq!(jones_apply(&z, &QubitState::v()), [c(0.0), c(-1.0)]);
        let s = QubitState::normalized(c(0.6), C64::new(0.0, 0.8));
        let x = jones_apply(&pauli(PauliKind::X), &s);
        assert_eq!(x, [s.beta, s.alpha]);
    }

    #[test]
    fn xz_undoes_phi_plus_branch() {
        // α|V⟩ − β|H⟩ for an arbitrary (α, β)
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let branch = QubitState::normalized(-b, a);
        let xz = jones_mul(&pauli(PauliKind::X), &pauli(PauliKind::Z));
        let out = state(jones_apply(&xz, &branch));
        assert!((out.fidelity(&QubitState::normalized(a, b)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pbs45_is_hadamard_conjugated_pbs() {
        let had = block_diag(&hwp(22.5), &hwp(22.5));
        let conj = had.mul(&pbs_matrix()).mul(&had.adjoint());
        assert!(pbs45_matrix().max_abs_diff(&conj) < 1e-12);
        assert!(pbs45_matrix().unitarity_defect() < 1e-10);
    }

    fn two_line(lines: &[&str]) -> std::sync::Arc<crate::fock::Registry> {
        registry(FockConfig::default(), lines).unwrap()
    }

    fn occupation_on(ket: &Ket, line: &str) -> Vec<u32> {
        ket.terms()
            .map(|(occ, _)| ket.photons_on(occ, line).unwrap())
            .collect()
    }

    #[test]
    fn pbs_transmits_h() {
        let r = two_line(&["a", "b"]);
        let ket = r
            .basis_from(&[(ModeLabel::h("a"), 1), (ModeLabel::h("b"), 1)])
            .unwrap();
        let out = Element::pair(ElementKind::Pbs, "a", "b", "c", "d")
            .unwrap()
            .apply(&ket)
            .unwrap();
        let want = two_line(&["c", "d"])
            .basis_from(&[(ModeLabel::h("c"), 1), (ModeLabel::h("d"), 1)])
            .unwrap();
        assert!((out.fidelity(&want).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pbs_parity_patterns() {
        let r = two_line(&["a", "b"]);
        let pbs = Element::pair(ElementKind::Pbs, "a", "b", "c", "d").unwrap();
        // H and V in the same input split across both outputs
        let same = r
            .basis_from(&[(ModeLabel::h("a"), 1), (ModeLabel::v("a"), 1)])
            .unwrap();
        let out = pbs.apply(&same).unwrap();
        assert_eq!(occupation_on(&out, "c"), vec![1]);
        assert_eq!(occupation_on(&out, "d"), vec![1]);
        // V from a and H from b both leave through d
        let odd = r
            .basis_from(&[(ModeLabel::v("a"), 1), (ModeLabel::h("b"), 1)])
            .unwrap();
        let out = pbs.apply(&odd).unwrap();
        assert_eq!(occupation_on(&out, "d"), vec![2]);
    }

    fn pm_ket(r: &std::sync::Arc<crate::fock::Registry>, spec: &[(&str, f64)]) -> Ket {
        // photon on each listed line in (H + s V)/√2
        let mut ket = r.vacuum();
        for (line, sign) in spec {
            let h = ket.create(&ModeLabel::h(*line)).unwrap();
            let v = ket.create(&ModeLabel::v(*line)).unwrap();
            ket = h.add(&v.scaled(c(*sign))).unwrap().scaled(c(S));
        }
        ket
    }

    #[test]
    fn pbs45_transmits_plus() {
        let r = two_line(&["a", "b"]);
        let ket = pm_ket(&r, &[("a", 1.0), ("b", 1.0)]);
        let out = Element::pair(ElementKind::Pbs45, "a", "b", "c", "d")
            .unwrap()
            .apply(&ket)
            .unwrap();
        let want = pm_ket(&two_line(&["c", "d"]), &[("c", 1.0), ("d", 1.0)]);
        assert!((out.fidelity(&want).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pbs45_splits_plus_minus_pair() {
        let r = two_line(&["a", "b"]);
        let ket = pm_ket(&r, &[("a", 1.0), ("a", -1.0)]);
        let out = Element::pair(ElementKind::Pbs45, "a", "b", "c", "d")
            .unwrap()
            .apply(&ket)
            .unwrap();
        assert!(occupation_on(&out, "c").iter().all(|&n| n == 1));
        assert!(occupation_on(&out, "d").iter().all(|&n| n == 1));
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polarizer_examples() {
        let r = two_line(&["a"]);
        let h = r.basis_from(&[(ModeLabel::h("a"), 1)]).unwrap();
        assert!((polarizer(&h, "a", 0.0).unwrap().probability - 1.0).abs() < 1e-15);
        let m45 = pm_ket(&r, &[("a", -1.0)]);
        let p = polarizer(&m45, "a", 45.0).unwrap();
        assert!(p.probability < 1e-15);
        assert!(p.state.is_none());
    }

    #[test]
    fn polarizer_on_psi_minus_after_heralding_partner() {
        let r = two_line(&["2p", "5p"]);
        let psi = r.bell(BellKind::PsiMinus, "2p", "5p").unwrap();
        let after = polarizer(&psi, "5p", 45.0).unwrap();
        assert!((after.probability - 0.5).abs() < 1e-12);
        let state = after.state.unwrap();
        for theta in [0.0, 20.0, 45.0, 90.0, 135.0, 170.0] {
            let p = polarizer(&state, "2p", theta).unwrap().probability;
            let want = (theta - 45.0_f64).to_radians().sin().powi(2);
            assert!((p - want).abs() < 1e-12, "θ={theta}");
        }
    }

    #[test]
    fn polarizer_needs_every_photon_to_pass() {
        let r = two_line(&["a"]);
        let h = ModeLabel::h("a");
        let v = ModeLabel::v("a");
        let hv = r.basis_from(&[(h, 1), (v, 1)]).unwrap();
        let p = polarizer(&hv, "a", 0.0).unwrap();
        assert!(p.probability < 1e-15);
    }

    #[test]
    fn mismatch_limits() {
        let r = two_line(&["a"]);
        let h = r.basis_from(&[(ModeLabel::h("a"), 1)]).unwrap();
        let same = Element::single(ElementKind::Mismatch { lambda: 1.0 }, "a")
            .unwrap()
            .apply(&h)
            .unwrap();
        assert_eq!(same.dump(), h.dump());
        let moved = Element::single(ElementKind::Mismatch { lambda: 0.0 }, "a")
            .unwrap()
            .apply(&h)
            .unwrap();
        let bin1 = r
            .basis_from(&[(ModeLabel::new("a", Polarization::H, 1), 1)])
            .unwrap();
        assert!((moved.fidelity(&bin1).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            Element::single(ElementKind::Mismatch { lambda: 1.5 }, "a").unwrap_err(),
            OpticsError::OverlapOutOfRange(1.5)
        );
    }

    #[test]
    fn mismatch_needs_two_bins() {
        let cfg = FockConfig {
            bins: 1,
            ..FockConfig::default()
        };
        let ket = registry(cfg, &["a"]).unwrap().vacuum();
        let e = Element::single(ElementKind::Mismatch { lambda: 0.5 }, "a").unwrap();
        assert_eq!(e.apply(&ket).unwrap_err(), OpticsError::NeedsTwoBins(1));
    }

    #[test]
    fn element_arity_is_checked() {
        assert!(matches!(
            Element::single(ElementKind::Pbs, "a"),
            Err(OpticsError::Arity { .. })
        ));
        assert!(matches!(
            Element::pair(ElementKind::Pbs, "a", "a", "c", "d"),
            Err(OpticsError::SameLine { .. })
        ));
    }

    #[test]
    fn elements_act_identically_on_each_bin() {
        // same photon in bin 1 evolves like bin 0 up to the bin label
        let r = two_line(&["a", "b"]);
        let k0 = r
            .basis_from(&[(ModeLabel::h("a"), 1), (ModeLabel::v("b"), 1)])
            .unwrap();
        let k1 = r
            .basis_from(&[
                (ModeLabel::new("a", Polarization::H, 1), 1),
                (ModeLabel::new("b", Polarization::V, 1), 1),
            ])
            .unwrap();
        let elements = [
            Element::single(ElementKind::Hwp { theta: 12.0 }, "a").unwrap(),
            Element::single(ElementKind::Qwp { theta: 33.0 }, "b").unwrap(),
            Element::pair(ElementKind::Pbs45, "a", "b", "a", "b").unwrap(),
        ];
        let mut o0 = k0;
        let mut o1 = k1;
        for e in &elements {
            o0 = e.apply(&o0).unwrap();
            o1 = e.apply(&o1).unwrap();
        }
        let reg = o0.registry().clone();
        for (occ, amp) in o0.terms() {
            let mut shifted = vec![0u8; occ.len()];
            for (i, &n) in occ.iter().enumerate() {
                if n > 0 {
                    let m = &reg.modes()[i];
                    let j = reg
                        .index_of(&ModeLabel::new(m.spatial.clone(), m.polarization, 1))
                        .unwrap();
                    shifted[j] = n;
                }
            }
            assert!((o1.amplitude(&shifted) - amp).norm() < 1e-14);
        }
        assert_eq!(o0.len(), o1.len());
    }
}

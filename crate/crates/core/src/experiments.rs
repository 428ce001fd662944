//! Pre-wired runs of the heralded CNOT: truth table, entangling fringe,
//! teleportation with a complete Bell analysis, and the classical
//! measure-and-resend baseline.
//!
//! Line naming: the control photon travels on 2 (its twin 1 is the trigger or
//! the teleportation output), the ancilla pair on 3 and 4, the target on 5.
//! After the two beam splitters the outputs are `2p`..`5p`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Stage};
use crate::detection::{
    self, angle_grid, Analysis, AngleScan, Click, DetectionError, DetectorSpec, Fringe,
    HeraldRule, Outcome, PatternProbability, ScanResult,
};
use crate::fock::{BellKind, FockConfig, FockError, Ket, Polarization, QubitState, C64};
use crate::optics::{self, Element, ElementKind, Jones, OpticsError, PauliKind};
use crate::sources::{SourceError, SourceKind, SourceSpec, MAX_MU, MAX_PAIR_PROB};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("invalid noise setting: {0}")]
    InvalidNoise(String),
    #[error("herald correction is input dependent: {0}")]
    InconsistentCorrection(String),
}

impl ExperimentError {
    /// True when the failure is a herald or click pattern that cannot occur.
    pub fn is_zero_probability(&self) -> bool {
        matches!(
            self,
            ExperimentError::Detection(DetectionError::ZeroProbability(_))
                | ExperimentError::Circuit(CircuitError::Detection(
                    DetectionError::ZeroProbability(_)
                ))
        )
    }
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Imperfections of the physical setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseConfig {
    /// Overlap amplitude of photons 2 and 3 at the first beam splitter.
    pub lambda23: f64,
    /// Overlap amplitude of photons 4 and 5 at the ±45° beam splitter.
    pub lambda45: f64,
    /// Pair probability per pulse of each down-conversion source.
    pub pair_prob: f64,
    /// Mean photon number of a weak-coherent target; `None` is a single photon.
    pub mu: Option<f64>,
    /// 1 keeps single pairs only, 2 adds double-pair emission.
    pub spdc_order: u8,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseConfig {
    pub fn ideal() -> Self {
        NoiseConfig {
            lambda23: 1.0,
            lambda45: 1.0,
            pair_prob: 0.05,
            mu: None,
            spdc_order: 1,
        }
    }

    /// Interference visibilities 0.82 and 0.68, μ = 0.05, p = 0.05, double pairs on.
    pub fn reference() -> Self {
        NoiseConfig {
            lambda23: 0.82f64.sqrt(),
            lambda45: 0.68f64.sqrt(),
            pair_prob: 0.05,
            mu: Some(0.05),
            spdc_order: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(ExperimentError::InvalidNoise(what));
        for (name, x) in [("lambda23", self.lambda23), ("lambda45", self.lambda45)] {
            if !(0.0..=1.0).contains(&x) {
                return bad(format!("{name} = {x} outside [0, 1]"));
            }
        }
        if !(0.0..=MAX_PAIR_PROB).contains(&self.pair_prob) {
            return bad(format!(
                "pair probability {} outside [0, {MAX_PAIR_PROB}]",
                self.pair_prob
            ));
        }
        if let Some(mu) = self.mu {
            if !(0.0..=MAX_MU).contains(&mu) {
                return bad(format!("mu = {mu} outside [0, {MAX_MU}]"));
            }
        }
        if !matches!(self.spdc_order, 1 | 2) {
            return bad(format!("spdc order {} is not 1 or 2", self.spdc_order));
        }
        Ok(())
    }
}

/// Polarizer angles in degrees, end-inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            from: 0.0,
            to: 180.0,
            steps: 37,
        }
    }
}

impl Grid {
    pub fn angles(&self) -> Vec<f64> {
        angle_grid(self.from, self.to, self.steps)
    }

    fn on(&self, line: &str) -> AngleScan {
        AngleScan {
            line: line.to_string(),
            from: self.from,
            to: self.to,
            steps: self.steps,
        }
    }
}

const TRIGGER: &str = "1";
const CONTROL_OUT: &str = "2p";
const TARGET_OUT: &str = "5p";

fn herald_rule() -> HeraldRule {
    HeraldRule::new(vec![
        ("3p".to_string(), Outcome::M),
        ("4p".to_string(), Outcome::H),
    ])
    .expect("distinct herald lines")
}

/// Truncation used by the experiment runners. The leading multi-pair
/// background carries seven photons (two pairs from one source, one from the
/// other, one target photon), so the generic default of six is too tight.
pub fn default_config() -> FockConfig {
    FockConfig {
        n_max: 8,
        ..FockConfig::default()
    }
}

enum Control {
    /// Photon 2 as an exact single photon.
    Single(QubitState),
    /// Photon 2 from a pair with photon 1.
    Pair,
}

fn gate_circuit(
    noise: &NoiseConfig,
    config: FockConfig,
    control: Control,
    target: QubitState,
) -> Result<Circuit> {
    noise.validate()?;
    let spdc = |a: &str, b: &str| {
        SourceSpec::new(
            SourceKind::SpdcPair {
                p: noise.pair_prob,
                order: noise.spdc_order,
                bell: BellKind::PsiMinus,
            },
            vec![a.to_string(), b.to_string()],
        )
    };
    let mut c = Circuit::new(config);
    match control {
        Control::Single(q) => c.push(Stage::Source(SourceSpec::new(
            SourceKind::SinglePhoton { polarization: q },
            vec!["2".into()],
        )?)),
        Control::Pair => c.push(Stage::Source(spdc(TRIGGER, "2")?)),
    };
    c.push(Stage::Source(spdc("3", "4")?));
    let target_kind = match noise.mu {
        None => SourceKind::SinglePhoton {
            polarization: target,
        },
        Some(mu) => SourceKind::WeakCoherent {
            mu,
            polarization: target,
            n_max: config.n_max,
        },
    };
    c.push(Stage::Source(SourceSpec::new(target_kind, vec!["5".into()])?));
    c.push(Stage::Element(Element::single(
        ElementKind::Mismatch {
            lambda: noise.lambda23,
        },
        "3",
    )?));
    c.push(Stage::Element(Element::single(
        ElementKind::Mismatch {
            lambda: noise.lambda45,
        },
        "5",
    )?));
    c.push(Stage::Element(Element::pair(
        ElementKind::Pbs,
        "2",
        "3",
        CONTROL_OUT,
        "3p",
    )?));
    c.push(Stage::Element(Element::pair(
        ElementKind::Pbs45,
        "4",
        "5",
        "4p",
        TARGET_OUT,
    )?));
    for (line, outcome) in herald_rule().requirements() {
        c.push(Stage::Herald {
            line: line.clone(),
            outcome: *outcome,
        });
    }
    Ok(c)
}

fn pol_index(bit: usize) -> Polarization {
    if bit == 0 {
        Polarization::H
    } else {
        Polarization::V
    }
}

fn basis_state(p: Polarization) -> QubitState {
    match p {
        Polarization::H => QubitState::h(),
        Polarization::V => QubitState::v(),
    }
}

fn letters(index: usize) -> String {
    let l = |b: usize| if b == 0 { 'H' } else { 'V' };
    format!("{}{}", l(index >> 1), l(index & 1))
}

/// Ideal CNOT in the H/V basis with the flip triggered by an H control,
/// as `(input, output)` indices `2·control + target`.
fn cnot_index(input: usize) -> usize {
    let control = input >> 1;
    let target = input & 1;
    let flipped = if control == 0 { target ^ 1 } else { target };
    (control << 1) | flipped
}

/// `(input, expected output)` pairs of the gate's logic table.
pub fn cnot_table() -> [(String, String); 4] {
    [0, 1, 2, 3].map(|i| (letters(i), letters(cnot_index(i))))
}

/// Fixed local unitary on the two outputs that maps the raw heralded output
/// onto the logic table. Derived once from the four ideal basis inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeraldCorrection {
    pub flip_control: bool,
    pub flip_target: bool,
    /// Phase (radians) removed from the V component of the control output.
    pub control_phase: f64,
    /// Phase (radians) removed from the V component of the target output.
    pub target_phase: f64,
}

fn wrap(phase: f64) -> f64 {
    let w = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if (w + PI).abs() < 1e-12 {
        PI
    } else {
        w
    }
}

impl HeraldCorrection {
    pub fn derive() -> Result<Self> {
        let ideal = NoiseConfig::ideal();
        let mut outputs = [0usize; 4];
        let mut phases = [0.0f64; 4];
        for input in 0..4 {
            let c = gate_circuit(
                &ideal,
                FockConfig::default(),
                Control::Single(basis_state(pol_index(input >> 1))),
                basis_state(pol_index(input & 1)),
            )?;
            let rule = herald_rule();
            let outputs_fire = [
                Click::threshold(CONTROL_OUT, None),
                Click::threshold(TARGET_OUT, None),
            ];
            let mut heralded = detection::herald_given(&c.prepare()?, &rule, &outputs_fire)?.state;
            // put each herald photon in a single basis term so it does not split the environment
            for (line, outcome) in rule.requirements() {
                heralded = optics::apply_jones(&heralded, line, &optics::analyzer(&outcome.state()))?;
            }
            let blocks = detection::qubit_blocks(&heralded, &[CONTROL_OUT, TARGET_OUT])?;
            let [block] = blocks.as_slice() else {
                return Err(ExperimentError::InconsistentCorrection(format!(
                    "input {} leaves {} environment branches",
                    letters(input),
                    blocks.len()
                )));
            };
            let (out, amp) = block
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
                .expect("four amplitudes");
            if (amp.norm_sqr() - 1.0).abs() > 1e-9 {
                return Err(ExperimentError::InconsistentCorrection(format!(
                    "input {} does not map to a basis state",
                    letters(input)
                )));
            }
            outputs[input] = out;
            phases[input] = amp.arg();
        }
        let flip = outputs[0] ^ cnot_index(0);
        for (input, &out) in outputs.iter().enumerate() {
            if out ^ cnot_index(input) != flip {
                return Err(ExperimentError::InconsistentCorrection(format!(
                    "bit flips differ between inputs {} and HH",
                    letters(input)
                )));
            }
        }
        // phase carried by each corrected output basis state
        let mut psi = [0.0f64; 4];
        for input in 0..4 {
            psi[cnot_index(input)] = phases[input];
        }
        let defect = wrap(psi[0] - psi[1] - psi[2] + psi[3]);
        if defect.abs() > 1e-9 {
            return Err(ExperimentError::InconsistentCorrection(format!(
                "output phases are not a product of local phases (defect {defect:.3e})"
            )));
        }
        Ok(HeraldCorrection {
            flip_control: flip & 2 != 0,
            flip_target: flip & 1 != 0,
            control_phase: wrap(psi[2] - psi[0]),
            target_phase: wrap(psi[1] - psi[0]),
        })
    }

    /// The correction derived on first use and reused for every run.
    pub fn shared() -> Result<&'static HeraldCorrection> {
        static CELL: OnceLock<std::result::Result<HeraldCorrection, ExperimentError>> =
            OnceLock::new();
        CELL.get_or_init(HeraldCorrection::derive)
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn is_identity(&self) -> bool {
        !self.flip_control
            && !self.flip_target
            && self.control_phase.abs() < 1e-12
            && self.target_phase.abs() < 1e-12
    }

    fn jones(flip: bool, phase: f64) -> Jones {
        let d = [
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::from_polar(1.0, -phase)],
        ];
        if flip {
            optics::jones_mul(&d, &optics::pauli(PauliKind::X))
        } else {
            d
        }
    }

    pub fn control_jones(&self) -> Jones {
        Self::jones(self.flip_control, self.control_phase)
    }

    pub fn target_jones(&self) -> Jones {
        Self::jones(self.flip_target, self.target_phase)
    }

    pub fn apply(&self, ket: &Ket) -> Result<Ket> {
        if self.is_identity() {
            return Ok(ket.clone());
        }
        let k = optics::apply_jones(ket, CONTROL_OUT, &self.control_jones())?;
        Ok(optics::apply_jones(&k, TARGET_OUT, &self.target_jones())?)
    }
}

fn prepare_corrected(circuit: &Circuit) -> Result<Ket> {
    HeraldCorrection::shared()?.apply(&circuit.prepare_postselected()?.state)
}

fn scan(
    ket: &Ket,
    detectors: &[DetectorSpec],
    grid: Option<&AngleScan>,
) -> Result<ScanResult> {
    Ok(detection::coincidence_scan(
        ket,
        &herald_rule(),
        detectors,
        grid,
    )?)
}

/// Trigger polarizer angle that leaves photon 2 in `state` (the pair is a singlet).
fn trigger_angle(state: Outcome) -> f64 {
    match state {
        Outcome::H => 90.0,
        Outcome::V => 0.0,
        Outcome::P => 135.0,
        Outcome::M => 45.0,
        Outcome::L | Outcome::R => unreachable!("linear control states only"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTableRow {
    pub input: String,
    pub expected: String,
    /// Output pattern fractions on (2p, 5p), normalized over the four patterns.
    pub outputs: Vec<PatternProbability>,
    pub correct_probability: f64,
    pub herald_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTableResult {
    pub noise: NoiseConfig,
    pub correction: HeraldCorrection,
    pub rows: Vec<TruthTableRow>,
    /// Mean of the four correct-output probabilities.
    pub fidelity: f64,
    pub worst_row_fidelity: f64,
}

/// Drops the trigger letter (last detector) and normalizes what is left.
fn output_fractions(patterns: &[PatternProbability], trigger_letter: char) -> Vec<PatternProbability> {
    let kept: Vec<PatternProbability> = patterns
        .iter()
        .filter(|p| p.pattern.ends_with(trigger_letter))
        .map(|p| PatternProbability {
            pattern: p.pattern[..p.pattern.len() - 1].to_string(),
            probability: p.probability,
        })
        .collect();
    let total: f64 = kept.iter().map(|p| p.probability).sum();
    kept.into_iter()
        .map(|p| PatternProbability {
            probability: if total > 0.0 { p.probability / total } else { 0.0 },
            ..p
        })
        .collect()
}

pub fn run_cnot_truth_table(noise: &NoiseConfig) -> Result<TruthTableResult> {
    run_cnot_truth_table_with(noise, default_config())
}

pub fn run_cnot_truth_table_with(noise: &NoiseConfig, config: FockConfig) -> Result<TruthTableResult> {
    let correction = *HeraldCorrection::shared()?;
    let mut rows = Vec::with_capacity(4);
    for (input, expected) in cnot_table() {
        let control = if input.starts_with('H') { Outcome::H } else { Outcome::V };
        let target = if input.ends_with('H') {
            QubitState::h()
        } else {
            QubitState::v()
        };
        let circuit = gate_circuit(noise, config, Control::Pair, target)?;
        let ket = prepare_corrected(&circuit)?;
        let detectors = [
            DetectorSpec::new(CONTROL_OUT, Analysis::Hv),
            DetectorSpec::new(TARGET_OUT, Analysis::Hv),
            DetectorSpec::new(TRIGGER, Analysis::Polarizer(trigger_angle(control))),
        ];
        let res = scan(&ket, &detectors, None)?;
        let outputs = output_fractions(&res.rows[0].patterns, 'T');
        let correct_probability = outputs
            .iter()
            .find(|p| p.pattern == expected)
            .map_or(0.0, |p| p.probability);
        rows.push(TruthTableRow {
            input,
            expected,
            outputs,
            correct_probability,
            herald_probability: res.herald_probability,
        });
    }
    let fidelity = rows.iter().map(|r| r.correct_probability).sum::<f64>() / rows.len() as f64;
    let worst_row_fidelity = rows
        .iter()
        .map(|r| r.correct_probability)
        .fold(f64::INFINITY, f64::min);
    Ok(TruthTableResult {
        noise: *noise,
        correction,
        rows,
        fidelity,
        worst_row_fidelity,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntanglingResult {
    pub noise: NoiseConfig,
    pub angles: Vec<f64>,
    /// Coincidence probability with P5 at +45° as P2 rotates, conditional on the herald.
    pub curve: Vec<f64>,
    pub visibility: f64,
    /// Least-squares fringe; `None` when the grid has fewer than three distinct angles.
    pub fringe: Option<Fringe>,
    /// H/V pattern fractions on (2p, 5p).
    pub hv_patterns: Vec<PatternProbability>,
    /// HV + VH fraction.
    pub desired: f64,
    /// HH + VV fraction.
    pub unwanted: f64,
    /// `desired / unwanted`, `None` when nothing unwanted is produced.
    pub ratio: Option<f64>,
    /// Overlap of the (2p, 5p) polarization state with the singlet.
    pub state_fidelity: f64,
    pub herald_probability: f64,
}

pub const FRINGE_REFERENCE_DEG: f64 = 45.0;

/// Control prepared in |−⟩, target |H⟩; the heralded output should be the singlet.
pub fn run_entangling_fringe(noise: &NoiseConfig, grid: &Grid) -> Result<EntanglingResult> {
    run_entangling_fringe_with(noise, grid, default_config())
}

pub fn run_entangling_fringe_with(
    noise: &NoiseConfig,
    grid: &Grid,
    config: FockConfig,
) -> Result<EntanglingResult> {
    let circuit = gate_circuit(noise, config, Control::Pair, QubitState::h())?;
    let ket = prepare_corrected(&circuit)?;
    let trigger = DetectorSpec::new(TRIGGER, Analysis::Polarizer(trigger_angle(Outcome::M)));

    let fringe_detectors = [
        DetectorSpec::new(CONTROL_OUT, Analysis::Polarizer(0.0)),
        DetectorSpec::new(TARGET_OUT, Analysis::Polarizer(FRINGE_REFERENCE_DEG)),
        trigger.clone(),
    ];
    let fringe_scan = scan(&ket, &fringe_detectors, Some(&grid.on(CONTROL_OUT)))?;
    let angles = fringe_scan.angles();
    let curve = fringe_scan.curve("TTT");
    let visibility = detection::visibility(&curve)?;
    let fringe = detection::fit_fringe(&angles, &curve).ok();

    let hv_detectors = [
        DetectorSpec::new(CONTROL_OUT, Analysis::Hv),
        DetectorSpec::new(TARGET_OUT, Analysis::Hv),
        trigger,
    ];
    let hv = scan(&ket, &hv_detectors, None)?;
    let hv_patterns = output_fractions(&hv.rows[0].patterns, 'T');
    let frac = |name: &str| {
        hv_patterns
            .iter()
            .find(|p| p.pattern == name)
            .map_or(0.0, |p| p.probability)
    };
    let desired = frac("HV") + frac("VH");
    let unwanted = frac("HH") + frac("VV");
    let ratio = (unwanted > 0.0).then(|| desired / unwanted);

    let context = [
        Click::threshold(TRIGGER, Some(QubitState::linear(trigger_angle(Outcome::M)))),
        Click::threshold(CONTROL_OUT, None),
        Click::threshold(TARGET_OUT, None),
    ];
    let heralded = detection::herald_given(&ket, &herald_rule(), &context)?;
    let state_fidelity = detection::reduced_fidelity(
        &heralded.state,
        &[CONTROL_OUT, TARGET_OUT],
        &BellKind::PsiMinus.amplitudes(),
    )?;

    Ok(EntanglingResult {
        noise: *noise,
        angles,
        curve,
        visibility,
        fringe,
        hv_patterns,
        desired,
        unwanted,
        ratio,
        state_fidelity,
        herald_probability: hv.herald_probability,
    })
}

/// Bell state of (2, 5) identified by each (2p ±, 5p H/V) pattern.
pub const BELL_PATTERNS: [(BellKind, Outcome, Outcome); 4] = [
    (BellKind::PsiMinus, Outcome::M, Outcome::H),
    (BellKind::PsiPlus, Outcome::P, Outcome::H),
    (BellKind::PhiPlus, Outcome::P, Outcome::V),
    (BellKind::PhiMinus, Outcome::M, Outcome::V),
];

/// State photon 1 is left in after the given Bell outcome.
pub fn teleport_target(bell: BellKind, input: &QubitState) -> QubitState {
    let (a, b) = (input.alpha, input.beta);
    match bell {
        BellKind::PsiMinus => QubitState::normalized(a, b),
        BellKind::PsiPlus => QubitState::normalized(a, -b),
        BellKind::PhiPlus => QubitState::normalized(-b, a),
        BellKind::PhiMinus => QubitState::normalized(b, a),
    }
}

/// Pauli product (applied right to left) that returns each branch to the input.
pub fn feedforward_paulis(bell: BellKind) -> &'static [PauliKind] {
    match bell {
        BellKind::PsiMinus => &[],
        BellKind::PsiPlus => &[PauliKind::Z],
        BellKind::PhiPlus => &[PauliKind::X, PauliKind::Z],
        BellKind::PhiMinus => &[PauliKind::X],
    }
}

fn feedforward_jones(bell: BellKind) -> Jones {
    feedforward_paulis(bell)
        .iter()
        .fold(optics::identity(), |acc, k| optics::jones_mul(&acc, &optics::pauli(*k)))
}

fn pauli_label(bell: BellKind) -> String {
    let ops = feedforward_paulis(bell);
    if ops.is_empty() {
        "I".to_string()
    } else {
        ops.iter().map(|k| k.letter()).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportBranch {
    pub bell: BellKind,
    /// Outcome letters on (2p, 5p).
    pub pattern: String,
    /// Branch probability, normalized over the four Bell outcomes.
    pub probability: f64,
    pub target: QubitState,
    /// Analyzer-based fidelity on line 1: P(target) / (P(target) + P(orthogonal)).
    pub fidelity: f64,
    /// Polarization-state overlap of the single photon on line 1 with the target.
    pub state_fidelity: f64,
    /// P1 fringe for this branch over the grid, conditional on the herald.
    pub fringe: Vec<f64>,
    /// Conditional state of the whole table for this branch.
    #[serde(skip)]
    pub state: Ket,
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportResult {
    pub noise: NoiseConfig,
    pub input: QubitState,
    pub angles: Vec<f64>,
    /// Whether a quarter-wave plate at 45° precedes P1 in the fringe.
    pub fringe_qwp: bool,
    pub branches: Vec<TeleportBranch>,
    pub average_fidelity: f64,
    pub average_state_fidelity: f64,
    pub herald_probability: f64,
}

impl TeleportResult {
    pub fn branch(&self, bell: BellKind) -> Option<&TeleportBranch> {
        self.branches.iter().find(|b| b.bell == bell)
    }
}

pub fn run_teleportation(input: &QubitState, noise: &NoiseConfig, grid: &Grid) -> Result<TeleportResult> {
    run_teleportation_with(input, noise, grid, default_config())
}

pub fn run_teleportation_with(
    input: &QubitState,
    noise: &NoiseConfig,
    grid: &Grid,
    config: FockConfig,
) -> Result<TeleportResult> {
    let input = QubitState::new(input.alpha, input.beta)?;
    let circuit = gate_circuit(noise, config, Control::Pair, input)?;
    let ket = prepare_corrected(&circuit)?;
    let context = [
        Click::threshold(TRIGGER, None),
        Click::threshold(CONTROL_OUT, None),
        Click::threshold(TARGET_OUT, None),
    ];
    let heralded = detection::herald_given(&ket, &herald_rule(), &context)?;

    let fringe_qwp = input.is_elliptical();
    let fringe_ket = if fringe_qwp {
        optics::apply_jones(&ket, TRIGGER, &optics::qwp(45.0))?
    } else {
        ket
    };
    let detectors = [
        DetectorSpec::new(CONTROL_OUT, Analysis::Pm),
        DetectorSpec::new(TARGET_OUT, Analysis::Hv),
        DetectorSpec::new(TRIGGER, Analysis::Polarizer(0.0)),
    ];
    let fringes = scan(&fringe_ket, &detectors, Some(&grid.on(TRIGGER)))?;

    let mut branches = Vec::with_capacity(4);
    for (bell, control, target_outcome) in BELL_PATTERNS {
        let clicks = [
            Click::threshold(CONTROL_OUT, Some(control.state())),
            Click::threshold(TARGET_OUT, Some(target_outcome.state())),
        ];
        let projection = detection::condition_on(&heralded.state, &clicks)?;
        let pattern = format!("{control}{target_outcome}");
        let state = projection
            .state
            .ok_or_else(|| DetectionError::ZeroProbability(format!("2p:{control},5p:{target_outcome}")))?;
        let target = teleport_target(bell, &input);
        branches.push(TeleportBranch {
            bell,
            fidelity: detection::analyzer_fidelity(&state, TRIGGER, &target)?,
            state_fidelity: detection::reduced_fidelity(&state, &[TRIGGER], &target.as_array())?,
            fringe: fringes.curve(&format!("{pattern}T")),
            pattern,
            probability: projection.probability,
            target,
            state,
        });
    }
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    for b in &mut branches {
        b.probability /= total;
    }
    let average_fidelity = branches.iter().map(|b| b.probability * b.fidelity).sum();
    let average_state_fidelity = branches
        .iter()
        .map(|b| b.probability * b.state_fidelity)
        .sum();
    Ok(TeleportResult {
        noise: *noise,
        input,
        angles: fringes.angles(),
        fringe_qwp,
        branches,
        average_fidelity,
        average_state_fidelity,
        herald_probability: heralded.probability,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectedBranch {
    pub bell: BellKind,
    pub pauli: String,
    pub probability: f64,
    /// Analyzer fidelity of the corrected photon with the input.
    pub fidelity: f64,
    pub state_fidelity: f64,
    #[serde(skip)]
    pub state: Ket,
}

/// Applies the outcome-indexed Pauli to photon 1 of every branch.
pub fn apply_feedforward(result: &TeleportResult) -> Result<Vec<CorrectedBranch>> {
    result
        .branches
        .iter()
        .map(|b| {
            let state = optics::apply_jones(&b.state, TRIGGER, &feedforward_jones(b.bell))?;
            Ok(CorrectedBranch {
                bell: b.bell,
                pauli: pauli_label(b.bell),
                probability: b.probability,
                fidelity: detection::analyzer_fidelity(&state, TRIGGER, &result.input)?,
                state_fidelity: detection::reduced_fidelity(
                    &state,
                    &[TRIGGER],
                    &result.input.as_array(),
                )?,
                state,
            })
        })
        .collect()
}

/// Best average fidelity of measure-and-resend over uniformly random inputs.
pub const CLASSICAL_LIMIT: f64 = 2.0 / 3.0;

pub fn classical_baseline() -> f64 {
    CLASSICAL_LIMIT
}

/// Expected fidelity when `input` is measured in the basis {basis, basis⊥} and
/// the observed basis state is re-sent.
pub fn measure_and_resend_fidelity(input: &QubitState, basis: &QubitState) -> f64 {
    let p = input.fidelity(basis);
    p * p + (1.0 - p) * (1.0 - p)
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Monte-Carlo estimate of the measure-and-resend fidelity: uniformly random
/// pure inputs, a uniformly random measurement axis, outcomes drawn by the Born rule.
pub fn classical_baseline_monte_carlo(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..samples {
        let r = random_direction(&mut rng);
        let n = random_direction(&mut rng);
        let dot: f64 = r.iter().zip(&n).map(|(a, b)| a * b).sum();
        let plus = rng.gen::<f64>() < (1.0 + dot) / 2.0;
        let aligned = if plus { dot } else { -dot };
        total += (1.0 + aligned) / 2.0;
    }
    total / samples.max(1) as f64
}

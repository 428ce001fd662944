//! Threshold detection, heralding, and coincidence scans.
//!
//! Detectors do not resolve temporal bins. Every detection probability is a
//! diagonal weight in the Fock basis after rotating each analyzed line so the
//! accepted polarization becomes `H`, which sums bins incoherently without ever
//! leaving the pure-state picture.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::fock::{expand_substitution, FockError, Ket, ModeMatrix, Projection, QubitState, C64};
use crate::optics::{self, analyzer, jones_adjoint, OpticsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("herald pattern {0} has zero probability")]
    ZeroProbability(String),
    #[error("occupied line `{0}` has no detector")]
    UncoveredLine(String),
    #[error("line `{0}` is detected more than once")]
    DuplicateDetector(String),
    #[error("scan line `{0}` has no polarizer detector")]
    ScanTarget(String),
    #[error("visibility of an empty curve")]
    EmptyCurve,
    #[error("visibility of an all-zero curve")]
    ZeroCurve,
    #[error("need at least three distinct angles to fit a fringe")]
    UnderdeterminedFringe,
    #[error("no term holds exactly one photon on each of {0:?}")]
    EmptySector(Vec<String>),
    #[error("detector efficiency {0} outside [0, 1]")]
    Efficiency(f64),
}

pub type Result<T, E = DetectionError> = std::result::Result<T, E>;

/// Polarization outcome letters used by heralds and basis detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    H,
    V,
    /// +45°
    P,
    /// −45°
    M,
    L,
    R,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::H,
        Outcome::V,
        Outcome::P,
        Outcome::M,
        Outcome::L,
        Outcome::R,
    ];

    pub fn state(self) -> QubitState {
        match self {
            Outcome::H => QubitState::h(),
            Outcome::V => QubitState::v(),
            Outcome::P => QubitState::plus(),
            Outcome::M => QubitState::minus(),
            Outcome::L => QubitState::left(),
            Outcome::R => QubitState::right(),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Outcome::H => 'H',
            Outcome::V => 'V',
            Outcome::P => 'P',
            Outcome::M => 'M',
            Outcome::L => 'L',
            Outcome::R => 'R',
        }
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Outcome::ALL
            .into_iter()
            .find(|o| s.len() == 1 && s.starts_with(o.letter()))
            .ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// What sits in front of a detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Analysis {
    /// H/V basis; each outcome is a separate polarizer setting.
    Hv,
    /// ± basis.
    Pm,
    /// L/R basis.
    Circ,
    /// Single polarizer at the given angle, pattern letter `T`.
    Polarizer(f64),
    /// Bare detector, pattern letter `*`.
    Open,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Hv => "hv",
            Analysis::Pm => "pm",
            Analysis::Circ => "circ",
            Analysis::Polarizer(_) => "polarizer",
            Analysis::Open => "open",
        }
    }

    /// Rotation applied before counting, and the pattern letters of the H and V ports.
    fn frame(&self) -> (Option<QubitState>, Vec<(char, Port)>) {
        let basis = |a: Outcome, b: Outcome| {
            (
                Some(a.state()),
                vec![(a.letter(), Port::H), (b.letter(), Port::V)],
            )
        };
        match *self {
            Analysis::Hv => basis(Outcome::H, Outcome::V),
            Analysis::Pm => basis(Outcome::P, Outcome::M),
            Analysis::Circ => basis(Outcome::L, Outcome::R),
            Analysis::Polarizer(theta) => (Some(QubitState::linear(theta)), vec![('T', Port::H)]),
            Analysis::Open => (None, vec![('*', Port::Any)]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectorSpec {
    pub line: String,
    pub analysis: Analysis,
    pub efficiency: f64,
}

impl DetectorSpec {
    pub fn new(line: impl Into<String>, analysis: Analysis) -> Self {
        DetectorSpec {
            line: line.into(),
            analysis,
            efficiency: 1.0,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(DetectionError::Efficiency(efficiency));
        }
        self.efficiency = efficiency;
        Ok(self)
    }
}

/// Required outcomes on ancilla lines; each heralded line must hold exactly one photon.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HeraldRule {
    requirements: Vec<(String, Outcome)>,
}

impl HeraldRule {
    pub fn new(requirements: Vec<(String, Outcome)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (line, _) in &requirements {
            if !seen.insert(line.as_str()) {
                return Err(DetectionError::DuplicateDetector(line.clone()));
            }
        }
        Ok(HeraldRule { requirements })
    }

    pub fn requirements(&self) -> &[(String, Outcome)] {
        &self.requirements
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.requirements.iter().map(|(l, _)| l.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn pattern(&self) -> String {
        self.requirements
            .iter()
            .map(|(l, o)| format!("{l}:{o}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Port {
    H,
    V,
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Count {
    /// Exactly one photon on the line, and it is in the port.
    Exact,
    /// At least one photon in the port.
    Threshold,
}

/// Per-line counting rule in an already rotated frame.
struct Condition {
    modes: Vec<[usize; 2]>,
    port: Port,
    count: Count,
    efficiency: f64,
}

impl Condition {
    fn weight(&self, occ: &[u8]) -> f64 {
        let (mut h, mut v) = (0u32, 0u32);
        for [ih, iv] in &self.modes {
            h += occ[*ih] as u32;
            v += occ[*iv] as u32;
        }
        let in_port = match self.port {
            Port::H => h,
            Port::V => v,
            Port::Any => h + v,
        };
        match self.count {
            Count::Exact => {
                if h + v == 1 && in_port == 1 {
                    self.efficiency
                } else {
                    0.0
                }
            }
            Count::Threshold => {
                if in_port == 0 {
                    0.0
                } else if self.efficiency == 1.0 {
                    1.0
                } else {
                    1.0 - (1.0 - self.efficiency).powi(in_port as i32)
                }
            }
        }
    }
}

fn weighted_sum(ket: &Ket, conditions: &[Condition]) -> f64 {
    ket.terms()
        .map(|(occ, a)| {
            let w: f64 = conditions.iter().map(|c| c.weight(occ)).product();
            w * a.norm_sqr()
        })
        .sum()
}

fn rotate(ket: &Ket, line: &str, filter: &QubitState) -> Result<Ket> {
    Ok(optics::apply_jones(ket, line, &analyzer(filter))?)
}

fn unrotate(ket: &Ket, line: &str, filter: &QubitState) -> Result<Ket> {
    Ok(optics::apply_jones(ket, line, &jones_adjoint(&analyzer(filter)))?)
}

/// One line's click requirement: a polarization filter (or none) and a counting rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Click {
    pub line: String,
    pub filter: Option<QubitState>,
    exact: bool,
    pub efficiency: f64,
}

impl Click {
    /// At least one photon passes the filter.
    pub fn threshold(line: impl Into<String>, filter: Option<QubitState>) -> Self {
        Click {
            line: line.into(),
            filter,
            exact: false,
            efficiency: 1.0,
        }
    }

    /// Exactly one photon on the line, and it passes the filter.
    pub fn exact(line: impl Into<String>, filter: Option<QubitState>) -> Self {
        Click {
            line: line.into(),
            filter,
            exact: true,
            efficiency: 1.0,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Self {
        self.efficiency = efficiency;
        self
    }
}

fn rotate_for(ket: &Ket, clicks: &[Click]) -> Result<(Ket, Vec<Condition>)> {
    let mut seen = BTreeSet::new();
    let mut rotated = ket.clone();
    let mut conditions = Vec::with_capacity(clicks.len());
    for click in clicks {
        if !seen.insert(click.line.as_str()) {
            return Err(DetectionError::DuplicateDetector(click.line.clone()));
        }
        let modes = ket.registry().line_modes(&click.line)?;
        let port = match &click.filter {
            Some(f) => {
                rotated = rotate(&rotated, &click.line, f)?;
                Port::H
            }
            None => Port::Any,
        };
        conditions.push(Condition {
            modes,
            port,
            count: if click.exact {
                Count::Exact
            } else {
                Count::Threshold
            },
            efficiency: click.efficiency,
        });
    }
    Ok((rotated, conditions))
}

/// Joint probability that every click fires, relative to the norm of `ket`.
pub fn click_probability(ket: &Ket, clicks: &[Click]) -> Result<f64> {
    let total = ket.norm_sqr();
    if total == 0.0 {
        return Ok(0.0);
    }
    let (rotated, conditions) = rotate_for(ket, clicks)?;
    Ok(weighted_sum(&rotated, &conditions) / total)
}

/// Conditions `ket` on every click firing (unit efficiency).
pub fn condition_on(ket: &Ket, clicks: &[Click]) -> Result<Projection> {
    let (rotated, conditions) = rotate_for(ket, clicks)?;
    let projection = rotated.project(|occ| conditions.iter().all(|c| c.weight(occ) > 0.0));
    let state = match projection.state {
        Some(mut s) => {
            for click in clicks.iter().rev() {
                if let Some(f) = &click.filter {
                    s = unrotate(&s, &click.line, f)?;
                }
            }
            Some(s)
        }
        None => None,
    };
    Ok(Projection {
        probability: projection.probability,
        state,
    })
}

/// Result of a herald projection.
#[derive(Clone, Debug)]
pub struct Heralded {
    /// State conditioned on the herald pattern, renormalized.
    pub state: Ket,
    /// Probability of the pattern given exactly one photon on every heralded line.
    pub probability: f64,
    /// Unconditional probability of the pattern.
    pub joint: f64,
}

pub fn herald(ket: &Ket, rule: &HeraldRule) -> Result<Heralded> {
    herald_given(ket, rule, &[])
}

/// Heralds `ket` among the events where every `context` click also fires.
///
/// Both the pattern and the reference coincidence include the context, so the
/// probability is a five-fold style conditional fraction when the context
/// lists the remaining detectors.
pub fn herald_given(ket: &Ket, rule: &HeraldRule, context: &[Click]) -> Result<Heralded> {
    let clicks: Vec<Click> = rule
        .requirements
        .iter()
        .map(|(line, o)| Click::exact(line.clone(), Some(o.state())))
        .chain(context.iter().cloned())
        .collect();
    let any: Vec<Click> = rule
        .requirements
        .iter()
        .map(|(line, _)| Click::exact(line.clone(), None))
        .chain(context.iter().cloned())
        .collect();
    let coincidence = click_probability(ket, &any)?;
    let projection = condition_on(ket, &clicks)?;
    match projection.state {
        Some(state) if coincidence > 0.0 => Ok(Heralded {
            state,
            probability: (projection.probability / coincidence).min(1.0),
            joint: projection.probability,
        }),
        _ => Err(DetectionError::ZeroProbability(rule.pattern())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternProbability {
    pub pattern: String,
    pub probability: f64,
}

/// Coincidence probabilities at one scan point, conditioned on the herald.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoincidenceResult {
    pub angle_deg: Option<f64>,
    pub patterns: Vec<PatternProbability>,
}

impl CoincidenceResult {
    pub fn get(&self, pattern: &str) -> Option<f64> {
        self.patterns
            .iter()
            .find(|p| p.pattern == pattern)
            .map(|p| p.probability)
    }

    pub fn total(&self) -> f64 {
        self.patterns.iter().map(|p| p.probability).sum()
    }

    /// Pattern probabilities normalized over this complete outcome set.
    pub fn fractions(&self) -> Vec<(String, f64)> {
        let total = self.total();
        self.patterns
            .iter()
            .map(|p| {
                let f = if total > 0.0 { p.probability / total } else { 0.0 };
                (p.pattern.clone(), f)
            })
            .collect()
    }
}

/// Polarizer sweep on one detector line, degrees, end-inclusive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleScan {
    pub line: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl AngleScan {
    pub fn angles(&self) -> Vec<f64> {
        angle_grid(self.from, self.to, self.steps)
    }
}

/// `steps` evenly spaced angles from `from` to `to` inclusive.
pub fn angle_grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![from],
        n => (0..n)
            .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub herald_probability: f64,
    pub herald_joint: f64,
    pub rows: Vec<CoincidenceResult>,
}

impl ScanResult {
    /// Probability of `pattern` at each scan point.
    pub fn curve(&self, pattern: &str) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.get(pattern).unwrap_or(0.0))
            .collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.angle_deg).collect()
    }
}

/// Heralds `ket` on the rule plus every detector firing, then evaluates every
/// detector pattern at each scan angle.
///
/// Heralded lines need exactly one photon, every other detector is threshold-type.
pub fn coincidence_scan(
    ket: &Ket,
    rule: &HeraldRule,
    detectors: &[DetectorSpec],
    scan: Option<&AngleScan>,
) -> Result<ScanResult> {
    let mut covered: BTreeSet<&str> = rule.lines().collect();
    for d in detectors {
        if !covered.insert(d.line.as_str()) {
            return Err(DetectionError::DuplicateDetector(d.line.clone()));
        }
    }
    for line in ket.occupied_lines() {
        if !covered.contains(line.as_str()) {
            return Err(DetectionError::UncoveredLine(line));
        }
    }
    let scanned = match scan {
        Some(s) => {
            let idx = detectors
                .iter()
                .position(|d| d.line == s.line && matches!(d.analysis, Analysis::Polarizer(_)))
                .ok_or_else(|| DetectionError::ScanTarget(s.line.clone()))?;
            Some((idx, s.angles()))
        }
        None => None,
    };

    let context: Vec<Click> = detectors
        .iter()
        .map(|d| Click::threshold(d.line.clone(), None))
        .collect();
    let heralded = herald_given(ket, rule, &context)?;

    let rows = match scanned {
        Some((idx, angles)) => scanned_rows(&heralded.state, detectors, idx, &angles)?,
        None => vec![CoincidenceResult {
            angle_deg: None,
            patterns: pattern_probabilities(&heralded.state, detectors)?,
        }],
    };
    Ok(ScanResult {
        herald_probability: heralded.probability,
        herald_joint: heralded.joint,
        rows,
    })
}

/// Outcome options per detector in its rotated frame. Detectors listed in
/// `skip` are left unrotated.
/// Per-detector outcome letters with the condition each one imposes.
type DetectorOptions = Vec<(char, Condition)>;

type Terms = Vec<(Vec<u8>, C64)>;

fn detector_options(
    ket: &Ket,
    detectors: &[DetectorSpec],
    skip: Option<usize>,
) -> Result<(Ket, Vec<DetectorOptions>)> {
    let mut rotated = ket.clone();
    let mut options = Vec::with_capacity(detectors.len());
    for (i, d) in detectors.iter().enumerate() {
        let modes = ket.registry().line_modes(&d.line)?;
        let (filter, ports) = d.analysis.frame();
        if let (Some(f), false) = (filter, skip == Some(i)) {
            rotated = rotate(&rotated, &d.line, &f)?;
        }
        options.push(
            ports
                .into_iter()
                .map(|(letter, port)| {
                    (
                        letter,
                        Condition {
                            modes: modes.clone(),
                            port,
                            count: Count::Threshold,
                            efficiency: d.efficiency,
                        },
                    )
                })
                .collect(),
        );
    }
    Ok((rotated, options))
}

/// Every choice of one option per detector, last detector fastest.
fn odometer(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut choice = vec![0usize; sizes.len()];
    loop {
        out.push(choice.clone());
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < sizes[pos] {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Pattern rows for a polarizer on `detectors[scanned]` swept over `angles`.
///
/// Terms are grouped by their occupation off the scanned line. Groups never
/// interfere, so each angle only rotates the few-photon states on that line.
fn scanned_rows(
    ket: &Ket,
    detectors: &[DetectorSpec],
    scanned: usize,
    angles: &[f64],
) -> Result<Vec<CoincidenceResult>> {
    let total = ket.norm_sqr();
    let (rotated, options) = detector_options(ket, detectors, Some(scanned))?;
    let choices = odometer(&options.iter().map(Vec::len).collect::<Vec<_>>());
    let patterns: Vec<String> = choices
        .iter()
        .map(|c| c.iter().zip(&options).map(|(&k, o)| o[k].0).collect())
        .collect();

    let line_modes = ket.registry().line_modes(&detectors[scanned].line)?;
    let positions: Vec<usize> = line_modes.iter().flat_map(|m| m.iter().copied()).collect();
    let local = Condition {
        modes: (0..line_modes.len()).map(|b| [2 * b, 2 * b + 1]).collect(),
        port: Port::H,
        count: Count::Threshold,
        efficiency: detectors[scanned].efficiency,
    };

    // environment occupation -> (weight per pattern from the fixed detectors, local terms)
    let mut groups: BTreeMap<Vec<u8>, (Vec<f64>, Terms)> = BTreeMap::new();
    for (occ, a) in rotated.terms() {
        let mut env = occ.clone();
        let mut here = Vec::with_capacity(positions.len());
        for &i in &positions {
            here.push(occ[i]);
            env[i] = 0;
        }
        let entry = groups.entry(env).or_insert_with(|| {
            let weights = choices
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .filter(|(d, _)| *d != scanned)
                        .map(|(d, &k)| options[d][k].1.weight(occ))
                        .product()
                })
                .collect();
            (weights, Vec::new())
        });
        entry.1.push((here, *a));
    }
    groups.retain(|_, (w, _)| w.iter().any(|&x| x > 0.0));

    let mut rows = Vec::with_capacity(angles.len());
    for &angle in angles {
        let m = ModeMatrix::from_2x2(analyzer(&QubitState::linear(angle)));
        let mut cache: BTreeMap<[u8; 2], Vec<(Vec<u8>, C64)>> = BTreeMap::new();
        let mut probability = vec![0.0; choices.len()];
        for (weights, terms) in groups.values() {
            let mut state: BTreeMap<Vec<u8>, C64> = terms.iter().cloned().collect();
            for b in 0..line_modes.len() {
                let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
                for (occ, a) in &state {
                    let sub = [occ[2 * b], occ[2 * b + 1]];
                    let expansion = cache
                        .entry(sub)
                        .or_insert_with(|| expand_substitution(&sub, &m));
                    for (out, c) in expansion.iter() {
                        let mut o = occ.clone();
                        o[2 * b] = out[0];
                        o[2 * b + 1] = out[1];
                        *next.entry(o).or_insert(C64::new(0.0, 0.0)) += a * c;
                    }
                }
                state = next;
            }
            let passed: f64 = state
                .iter()
                .map(|(occ, a)| local.weight(occ) * a.norm_sqr())
                .sum();
            for (p, w) in probability.iter_mut().zip(weights) {
                *p += w * passed;
            }
        }
        rows.push(CoincidenceResult {
            angle_deg: Some(angle),
            patterns: patterns
                .iter()
                .zip(&probability)
                .map(|(pattern, &p)| PatternProbability {
                    pattern: pattern.clone(),
                    probability: if total == 0.0 { 0.0 } else { p / total },
                })
                .collect(),
        });
    }
    Ok(rows)
}

/// Every combination of detector outcomes, in declared detector order.
pub fn pattern_probabilities(
    ket: &Ket,
    detectors: &[DetectorSpec],
) -> Result<Vec<PatternProbability>> {
    let total = ket.norm_sqr();
    let (rotated, options) = detector_options(ket, detectors, None)?;
    let choices = odometer(&options.iter().map(Vec::len).collect::<Vec<_>>());
    Ok(choices
        .iter()
        .map(|choice| {
            let pattern = choice.iter().zip(&options).map(|(&k, o)| o[k].0).collect();
            let probability = if total == 0.0 {
                0.0
            } else {
                rotated
                    .terms()
                    .map(|(occ, a)| {
                        let w: f64 = choice
                            .iter()
                            .zip(&options)
                            .map(|(&k, o)| o[k].1.weight(occ))
                            .product();
                        w * a.norm_sqr()
                    })
                    .sum::<f64>()
                    / total
            };
            PatternProbability {
                pattern,
                probability,
            }
        })
        .collect())
}

/// `(max - min) / (max + min)`.
pub fn visibility(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(DetectionError::EmptyCurve);
    }
    let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    if max + min <= 0.0 {
        return Err(DetectionError::ZeroCurve);
    }
    Ok((max - min) / (max + min))
}

/// Least-squares fit of `mean + amplitude·cos(2(θ - peak))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fringe {
    pub mean: f64,
    pub amplitude: f64,
    /// Polarizer angle of the maximum, degrees in [0, 180).
    pub peak_deg: f64,
}

impl Fringe {
    pub fn visibility(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.amplitude / self.mean
        }
    }
}

pub fn fit_fringe(angles_deg: &[f64], values: &[f64]) -> Result<Fringe> {
    let distinct: BTreeSet<u64> = angles_deg
        .iter()
        .map(|a| (a.rem_euclid(180.0) * 1e9).round() as u64)
        .collect();
    if distinct.len() < 3 || angles_deg.len() != values.len() {
        return Err(DetectionError::UnderdeterminedFringe);
    }
    // normal equations for y = a + b cos2θ + c sin2θ
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (&theta, &y) in angles_deg.iter().zip(values) {
        let t = 2.0 * theta.to_radians();
        let row = [1.0, t.cos(), t.sin()];
        for r in 0..3 {
            aty[r] += row[r] * y;
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
        }
    }
    let [a, b, c] = solve3(ata, aty).ok_or(DetectionError::UnderdeterminedFringe)?;
    let amplitude = (b * b + c * c).sqrt();
    let peak = (0.5 * c.atan2(b).to_degrees()).rem_euclid(180.0);
    Ok(Fringe {
        mean: a,
        amplitude,
        peak_deg: peak,
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut y: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        y.swap(col, pivot);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot_row = m[col];
                for (x, p) in m[r].iter_mut().zip(pivot_row) {
                    *x -= f * p;
                }
                y[r] -= f * y[col];
            }
        }
    }
    Some([y[0] / m[0][0], y[1] / m[1][1], y[2] / m[2][2]])
}

/// Groups the terms holding exactly one photon on each of `lines` by everything
/// else (other lines and the bins of those photons). Each group is the vector of
/// polarization amplitudes indexed by `Σ pol_k 2^(n-1-k)`.
pub fn qubit_blocks(ket: &Ket, lines: &[&str]) -> Result<Vec<Vec<C64>>> {
    let reg = ket.registry();
    let line_modes: Vec<Vec<[usize; 2]>> = lines
        .iter()
        .map(|l| reg.line_modes(l))
        .collect::<Result<_, _>>()?;
    let n = lines.len();
    let mut groups: BTreeMap<Vec<u8>, Vec<C64>> = BTreeMap::new();
    'terms: for (occ, amp) in ket.terms() {
        let mut key = occ.clone();
        let mut index = 0usize;
        let mut bins = Vec::with_capacity(n);
        for modes in &line_modes {
            let mut found = None;
            let mut count = 0;
            for (bin, pair) in modes.iter().enumerate() {
                for (pol, &m) in pair.iter().enumerate() {
                    count += occ[m];
                    if occ[m] == 1 {
                        found = Some((pol, bin));
                    }
                    key[m] = 0;
                }
            }
            match (count, found) {
                (1, Some((pol, bin))) => {
                    index = 2 * index + pol;
                    bins.push(bin as u8);
                }
                _ => continue 'terms,
            }
        }
        key.extend(bins);
        groups.entry(key).or_insert_with(|| vec![C64::new(0.0, 0.0); 1 << n])[index] += amp;
    }
    Ok(groups.into_values().collect())
}

/// Fidelity of the polarization state of `lines` (one photon each, all other
/// degrees of freedom traced out) with the pure `target`.
pub fn reduced_fidelity(ket: &Ket, lines: &[&str], target: &[C64]) -> Result<f64> {
    let blocks = qubit_blocks(ket, lines)?;
    let norm: f64 = blocks.iter().flatten().map(|a| a.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(DetectionError::EmptySector(
            lines.iter().map(|s| s.to_string()).collect(),
        ));
    }
    let overlap: f64 = blocks
        .iter()
        .map(|v| {
            target
                .iter()
                .zip(v)
                .map(|(t, a)| t.conj() * a)
                .sum::<C64>()
                .norm_sqr()
        })
        .sum();
    Ok(overlap / norm)
}

/// Reduced 2×2 polarization density matrix of the single photon on `line`.
pub fn reduced_density(ket: &Ket, line: &str) -> Result<[[C64; 2]; 2]> {
    let blocks = qubit_blocks(ket, &[line])?;
    let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
    for v in &blocks {
        for r in 0..2 {
            for c in 0..2 {
                rho[r][c] += v[r] * v[c].conj();
            }
        }
    }
    let tr = (rho[0][0] + rho[1][1]).re;
    if tr == 0.0 {
        return Err(DetectionError::EmptySector(vec![line.to_string()]));
    }
    for row in rho.iter_mut() {
        for x in row.iter_mut() {
            *x /= tr;
        }
    }
    Ok(rho)
}

/// Fraction of threshold clicks behind an analyzer aligned with `target`
/// versus the orthogonal setting.
pub fn analyzer_fidelity(ket: &Ket, line: &str, target: &QubitState) -> Result<f64> {
    let along = click_probability(ket, &[Click::threshold(line, Some(*target))])?;
    let across = click_probability(ket, &[Click::threshold(line, Some(target.orthogonal()))])?;
    if along + across == 0.0 {
        return Err(DetectionError::EmptySector(vec![line.to_string()]));
    }
    Ok(along / (along + across))
}

/// `angle_deg,pattern,probability` rows.
pub fn to_csv(rows: &[CoincidenceResult]) -> String {
    let mut out = String::from("angle_deg,pattern,probability\n");
    for row in rows {
        let angle = row.angle_deg.map(|a| a.to_string()).unwrap_or_default();
        for p in &row.patterns {
            out.push_str(&format!("{},{},{}\n", angle, p.pattern, p.probability));
        }
    }
    out
}

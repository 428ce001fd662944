//! Initial-state factories: SPDC pairs, attenuated laser pulses, single photons.

use serde::Serialize;
use thiserror::Error;

use crate::fock::{self, BellKind, FockConfig, FockError, Ket, ModeLabel, Polarization, QubitState, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{kind} source binds {expected} line(s), got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type Result<T, E = SourceError> = std::result::Result<T, E>;

pub const MAX_PAIR_PROB: f64 = 0.1;
pub const MAX_MU: f64 = 1.0;

fn check_range(name: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if !(min..=max).contains(&value) {
        return Err(SourceError::OutOfRange {
            name,
            value,
            min,
            max,
        });
    }
    Ok(())
}

/// `S† = Σ ± a†_{i,p} a†_{j,q} / √2`, the creation operator of one Bell pair.
fn create_pair(ket: &Ket, kind: BellKind, i: &str, j: &str) -> Result<Ket> {
    let amps = kind.amplitudes();
    let mut out = ket.registry().zero();
    for pi in Polarization::BOTH {
        for pj in Polarization::BOTH {
            let a = amps[2 * pi.index() + pj.index()];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let term = ket
                .create(&ModeLabel::new(i, pi, 0))?
                .create(&ModeLabel::new(j, pj, 0))?;
            out = out.add(&term.scaled(a))?;
        }
    }
    Ok(out)
}

/// Truncated type-II down-conversion state on lines `i`, `j`:
/// `N (|vac⟩ + √p S†|vac⟩ + (p/2) S†²|vac⟩)`, the last term only for `order = 2`.
pub fn spdc_pair(
    config: FockConfig,
    i: &str,
    j: &str,
    p: f64,
    order: u8,
    kind: BellKind,
) -> Result<Ket> {
    check_range("p", p, 0.0, MAX_PAIR_PROB)?;
    check_range("order", order as f64, 1.0, 2.0)?;
    if i == j {
        return Err(FockError::SameLine(i.to_string()).into());
    }
    let reg = fock::registry(config, &[i, j])?;
    let vac = reg.vacuum();
    let one = create_pair(&vac, kind, i, j)?;
    let mut state = vac.add(&one.scaled(C64::new(p.sqrt(), 0.0)))?;
    if order == 2 {
        let two = create_pair(&one, kind, i, j)?;
        state = state.add(&two.scaled(C64::new(p / 2.0, 0.0)))?;
    }
    Ok(state.normalize())
}

/// Truncated coherent state `Σ_n e^{-μ/2} μ^{n/2}/√n! |n⟩` in polarization mode
/// `α|H⟩ + β|V⟩`, `n ≤ n_max`, renormalized.
/// Photon-number cutoff of a weak-coherent source unless stated otherwise.
pub const DEFAULT_COHERENT_NMAX: u32 = 2;

pub fn weak_coherent(
    config: FockConfig,
    line: &str,
    polarization: QubitState,
    mu: f64,
    n_max: u32,
) -> Result<Ket> {
    check_range("mu", mu, 0.0, MAX_MU)?;
    let reg = fock::registry(config, &[line])?;
    let h = ModeLabel::h(line);
    let v = ModeLabel::v(line);
    // c†^n |vac⟩, unnormalized
    let mut power = reg.vacuum();
    let mut state = reg.vacuum().scaled(C64::new((-mu / 2.0).exp(), 0.0));
    let mut factorial = 1.0;
    for n in 1..=n_max {
        power = power
            .create(&h)?
            .scaled(polarization.alpha)
            .add(&power.create(&v)?.scaled(polarization.beta))?;
        factorial *= n as f64;
        // e^{-μ/2} μ^{n/2} / √n! × c†^n/√n!
        let coeff = (-mu / 2.0).exp() * mu.powf(n as f64 / 2.0) / factorial;
        state = state.add(&power.scaled(C64::new(coeff, 0.0)))?;
    }
    Ok(state.normalize())
}

/// `α|H⟩ + β|V⟩` in temporal bin 0.
pub fn single_photon(config: FockConfig, line: &str, alpha: C64, beta: C64) -> Result<Ket> {
    let q = QubitState::new(alpha, beta)?;
    let reg = fock::registry(config, &[line])?;
    let vac = reg.vacuum();
    Ok(vac
        .create(&ModeLabel::h(line))?
        .scaled(q.alpha)
        .add(&vac.create(&ModeLabel::v(line))?.scaled(q.beta))?)
}

pub fn vacuum<S: AsRef<str>>(config: FockConfig, lines: &[S]) -> Result<Ket> {
    Ok(fock::registry(config, lines)?.vacuum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SourceKind {
    SpdcPair { p: f64, order: u8, bell: BellKind },
    WeakCoherent { mu: f64, polarization: QubitState, n_max: u32 },
    SinglePhoton { polarization: QubitState },
    Vacuum,
}

impl SourceKind {
    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::SpdcPair { .. } => "spdc",
            SourceKind::WeakCoherent { .. } => "coherent",
            SourceKind::SinglePhoton { .. } => "single",
            SourceKind::Vacuum => "vacuum",
        }
    }
}

/// A source bound to its output lines.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceSpec {
    kind: SourceKind,
    lines: Vec<String>,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, lines: Vec<String>) -> Result<Self> {
        let expected = match kind {
            SourceKind::SpdcPair { .. } => Some(2),
            SourceKind::WeakCoherent { .. } | SourceKind::SinglePhoton { .. } => Some(1),
            SourceKind::Vacuum => None,
        };
        if let Some(expected) = expected {
            if lines.len() != expected {
                return Err(SourceError::Arity {
                    kind: kind.name(),
                    expected,
                    got: lines.len(),
                });
            }
        }
        match kind {
            SourceKind::SpdcPair { p, order, .. } => {
                check_range("p", p, 0.0, MAX_PAIR_PROB)?;
                check_range("order", order as f64, 1.0, 2.0)?;
                if lines[0] == lines[1] {
                    return Err(FockError::SameLine(lines[0].clone()).into());
                }
            }
            SourceKind::WeakCoherent { mu, .. } => check_range("mu", mu, 0.0, MAX_MU)?,
            _ => {}
        }
        Ok(SourceSpec { kind, lines })
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn build(&self, config: FockConfig) -> Result<Ket> {
        match self.kind {
            SourceKind::SpdcPair { p, order, bell } => {
                spdc_pair(config, &self.lines[0], &self.lines[1], p, order, bell)
            }
            SourceKind::WeakCoherent {
                mu,
                polarization,
                n_max,
            } => weak_coherent(config, &self.lines[0], polarization, mu, n_max),
            SourceKind::SinglePhoton { polarization } => {
                single_photon(config, &self.lines[0], polarization.alpha, polarization.beta)
            }
            SourceKind::Vacuum => vacuum(config, &self.lines),
        }
    }
}

use std::fmt::Write;

use crate::circuit::{Circuit, Stage};
use crate::detection::{Analysis, Outcome};
use crate::fock::{FockConfig, QubitState};
use crate::optics::ElementKind;
use crate::sources::SourceKind;

use super::compile::fold_angle;

/// Angles recovered from a state are rounded so that `pol=30` renders as `30`.
fn derived(x: f64) -> String {
    let r = (x * 1e10).round() / 1e10;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn polarization(q: &QubitState) -> String {
    let near = |a: &QubitState| (a.alpha - q.alpha).norm() < 1e-12 && (a.beta - q.beta).norm() < 1e-12;
    if near(&QubitState::h()) {
        return String::new();
    }
    if let Some(o) = Outcome::ALL.into_iter().find(|o| near(&o.state())) {
        return format!(" pol={o}");
    }
    if q.alpha.im.abs() < 1e-15 && q.beta.im.abs() < 1e-15 {
        let theta = fold_angle(q.beta.re.atan2(q.alpha.re).to_degrees());
        return format!(" pol={}", derived(theta));
    }
    let theta = q.beta.norm().atan2(q.alpha.norm()).to_degrees();
    let phase = (q.beta.arg() - q.alpha.arg()).to_degrees().rem_euclid(360.0);
    format!(" pol={} phase={}", derived(theta), derived(phase))
}

fn lines(names: &[String]) -> String {
    names.join(" ")
}

/// Canonical text for `circuit`. Parsing and compiling the result yields an
/// [`equivalent`](super::equivalent) circuit.
pub fn render(circuit: &Circuit) -> String {
    let mut out = String::new();
    let defaults = FockConfig::default();
    let c = circuit.config;
    if c.n_max != defaults.n_max {
        let _ = writeln!(out, "set nmax={}", c.n_max);
    }
    if c.bins != defaults.bins {
        let _ = writeln!(out, "set bins={}", c.bins);
    }
    if c.prune != defaults.prune {
        let _ = writeln!(out, "set prune={}", c.prune);
    }
    for stage in &circuit.stages {
        match stage {
            Stage::Source(s) => {
                let _ = write!(out, "source {} {}", s.kind().name(), lines(s.lines()));
                match s.kind() {
                    SourceKind::SpdcPair { p, order, bell } => {
                        let _ = write!(out, " p={p} order={order} bell={bell}");
                    }
                    SourceKind::WeakCoherent {
                        mu,
                        polarization: q,
                        n_max,
                    } => {
                        let _ = write!(out, " mu={mu}{} nmax={n_max}", polarization(q));
                    }
                    SourceKind::SinglePhoton { polarization: q } => {
                        out.push_str(&polarization(q));
                    }
                    SourceKind::Vacuum => {}
                }
            }
            Stage::Element(e) => {
                let _ = write!(out, "elem {} {}", e.kind().name(), lines(e.inputs()));
                if e.outputs() != e.inputs() {
                    let _ = write!(out, " -> {}", lines(e.outputs()));
                }
                match e.kind() {
                    ElementKind::Hwp { theta }
                    | ElementKind::Qwp { theta }
                    | ElementKind::Polarizer { theta } => {
                        let _ = write!(out, " theta={}", fold_angle(*theta));
                    }
                    ElementKind::Mismatch { lambda } => {
                        let _ = write!(out, " lambda={lambda}");
                    }
                    ElementKind::Pauli(k) => {
                        let _ = write!(out, " op={}", k.letter());
                    }
                    ElementKind::Pbs | ElementKind::Pbs45 => {}
                }
            }
            Stage::Herald { line, outcome } => {
                let _ = write!(out, "herald {line} {outcome}");
            }
            Stage::Detector(d) => {
                let _ = write!(out, "det {} {}", d.analysis.name(), d.line);
                if let Analysis::Polarizer(theta) = d.analysis {
                    let _ = write!(out, " theta={}", fold_angle(theta));
                }
                if d.efficiency != 1.0 {
                    let _ = write!(out, " eff={}", d.efficiency);
                }
            }
        }
        out.push('\n');
    }
    if let Some(s) = &circuit.scan {
        let _ = writeln!(
            out,
            "scan theta on {} from {} to {} steps {}",
            s.line, s.from, s.to, s.steps
        );
    }
    out
}

//! Uniform result records for every experiment and netlist run, with JSON and
//! CSV encodings of the same numbers.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::detection::ScanResult;
use crate::experiments::{EntanglingResult, NoiseConfig, TeleportResult, TruthTableResult};

/// One cell of a probability table: `row` is the input or branch, `pattern` the
/// detector outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableEntry {
    pub row: String,
    pub pattern: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub angle_deg: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub fidelity: Option<f64>,
    pub visibility: Option<f64>,
    pub herald_prob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    /// `None` for netlist runs, whose imperfections live in the netlist itself.
    pub noise: Option<NoiseConfig>,
    pub tables: Vec<TableEntry>,
    pub curves: Vec<Curve>,
    pub summary: Summary,
    /// Experiment-specific extras, keyed by name.
    pub metrics: BTreeMap<String, f64>,
}

fn curve(name: &str, angles: &[f64], values: &[f64]) -> Curve {
    Curve {
        name: name.to_string(),
        points: angles
            .iter()
            .zip(values)
            .map(|(&angle_deg, &probability)| CurvePoint {
                angle_deg,
                probability,
            })
            .collect(),
    }
}

impl Report {
    fn new(experiment: &str, noise: Option<NoiseConfig>) -> Self {
        Report {
            experiment: experiment.to_string(),
            noise,
            tables: Vec::new(),
            curves: Vec::new(),
            summary: Summary::default(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn truth_table(r: &TruthTableResult) -> Self {
        let mut out = Report::new("cnot-table", Some(r.noise));
        for row in &r.rows {
            for p in &row.outputs {
                out.tables.push(TableEntry {
                    row: row.input.clone(),
                    pattern: p.pattern.clone(),
                    probability: p.probability,
                });
            }
            out.metrics
                .insert(format!("herald_prob_{}", row.input), row.herald_probability);
        }
        let herald = r.rows.iter().map(|x| x.herald_probability).sum::<f64>() / r.rows.len() as f64;
        out.summary = Summary {
            fidelity: Some(r.fidelity),
            visibility: None,
            herald_prob: Some(herald),
        };
        out.metrics
            .insert("worst_row_fidelity".into(), r.worst_row_fidelity);
        out
    }

    pub fn entangling(r: &EntanglingResult) -> Self {
        let mut out = Report::new("entangle-fringe", Some(r.noise));
        for p in &r.hv_patterns {
            out.tables.push(TableEntry {
                row: "HV".into(),
                pattern: p.pattern.clone(),
                probability: p.probability,
            });
        }
        out.curves.push(curve("P5=45", &r.angles, &r.curve));
        out.summary = Summary {
            fidelity: Some(r.state_fidelity),
            visibility: Some(r.visibility),
            herald_prob: Some(r.herald_probability),
        };
        out.metrics.insert("desired".into(), r.desired);
        out.metrics.insert("unwanted".into(), r.unwanted);
        if let Some(ratio) = r.ratio {
            out.metrics.insert("ratio".into(), ratio);
        }
        if let Some(f) = &r.fringe {
            out.metrics.insert("fit_visibility".into(), f.visibility());
            out.metrics.insert("fit_peak_deg".into(), f.peak_deg);
        }
        out
    }

    pub fn teleportation(r: &TeleportResult) -> Self {
        let mut out = Report::new("teleport", Some(r.noise));
        for b in &r.branches {
            let name = b.bell.name();
            out.tables.push(TableEntry {
                row: name.to_string(),
                pattern: b.pattern.clone(),
                probability: b.probability,
            });
            out.curves
                .push(curve(&format!("{name}:{}", b.pattern), &r.angles, &b.fringe));
            out.metrics.insert(format!("fidelity_{name}"), b.fidelity);
            out.metrics
                .insert(format!("state_fidelity_{name}"), b.state_fidelity);
        }
        out.summary = Summary {
            fidelity: Some(r.average_fidelity),
            visibility: None,
            herald_prob: Some(r.herald_probability),
        };
        out.metrics
            .insert("average_state_fidelity".into(), r.average_state_fidelity);
        out
    }

    pub fn classical_baseline(analytic: f64, monte_carlo: f64, samples: usize, seed: u64) -> Self {
        let mut out = Report::new("classical-baseline", None);
        out.summary.fidelity = Some(analytic);
        out.metrics.insert("monte_carlo".into(), monte_carlo);
        out.metrics.insert("samples".into(), samples as f64);
        out.metrics.insert("seed".into(), seed as f64);
        out
    }

    /// A netlist run: the pattern table when nothing is scanned, one curve per
    /// pattern otherwise.
    pub fn netlist(name: &str, r: &ScanResult) -> Self {
        let mut out = Report::new(name, None);
        match r.rows.as_slice() {
            [row] if row.angle_deg.is_none() => {
                for p in &row.patterns {
                    out.tables.push(TableEntry {
                        row: String::new(),
                        pattern: p.pattern.clone(),
                        probability: p.probability,
                    });
                }
            }
            rows => {
                let angles = r.angles();
                if let Some(first) = rows.first() {
                    for p in &first.patterns {
                        out.curves
                            .push(curve(&p.pattern, &angles, &r.curve(&p.pattern)));
                    }
                }
            }
        }
        out.summary.herald_prob = Some(r.herald_probability);
        out.metrics.insert("herald_joint".into(), r.herald_joint);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }

    /// Everything in the report as `angle_deg,pattern,probability` rows.
    /// Table cells use `row:pattern` (or the bare pattern for netlist runs), curves `name` with their angle, and
    /// scalars `summary:`, `metric:` or `noise:` prefixes with an empty angle.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_deg,pattern,probability\n");
        let mut scalar = |name: &str, x: f64| {
            let _ = writeln!(out, ",{name},{x}");
        };
        if let Some(n) = &self.noise {
            scalar("noise:lambda23", n.lambda23);
            scalar("noise:lambda45", n.lambda45);
            scalar("noise:pair_prob", n.pair_prob);
            if let Some(mu) = n.mu {
                scalar("noise:mu", mu);
            }
            scalar("noise:spdc_order", n.spdc_order as f64);
        }
        for (name, x) in [
            ("summary:fidelity", self.summary.fidelity),
            ("summary:visibility", self.summary.visibility),
            ("summary:herald_prob", self.summary.herald_prob),
        ] {
            if let Some(x) = x {
                scalar(name, x);
            }
        }
        for (k, &v) in &self.metrics {
            scalar(&format!("metric:{k}"), v);
        }
        for t in &self.tables {
            if t.row.is_empty() {
                let _ = writeln!(out, ",{},{}", t.pattern, t.probability);
            } else {
                let _ = writeln!(out, ",{}:{},{}", t.row, t.pattern, t.probability);
            }
        }
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(out, "{},{},{}", p.angle_deg, c.name, p.probability);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run_cnot_truth_table, NoiseConfig};

    #[test]
    fn json_keys_keep_declared_order() {
        let r = Report::truth_table(&run_cnot_truth_table(&NoiseConfig::ideal()).unwrap());
        let json = r.to_json();
        let pos = |k: &str| json.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("experiment") < pos("noise"));
        assert!(pos("noise") < pos("tables"));
        assert!(pos("tables") < pos("curves"));
        assert!(pos("curves") < pos("summary"));
        assert!(pos("fidelity") < pos("herald_prob"));
    }

    #[test]
    fn csv_table_cells_name_input_and_output() {
        let r = Report::truth_table(&run_cnot_truth_table(&NoiseConfig::ideal()).unwrap());
        let csv = r.to_csv();
        assert!(csv.contains("\n,HH:HV,1\n"), "{csv}");
        assert!(csv.contains("\n,summary:herald_prob,"), "{csv}");
    }
}

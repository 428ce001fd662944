//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod support;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use heraldsim::detection::{click_probability, fit_fringe, Click};
use heraldsim::experiments::{self, Grid, NoiseConfig};
use heraldsim::fock::{registry, BellKind, FockConfig, Ket, ModeLabel, Polarization, QubitState, C64};
use heraldsim::netlist::{self, equivalent, load, load_bytes, render};
use heraldsim::optics::{self, Element, ElementKind};
use heraldsim::sources::single_photon;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

const EXACT: f64 = 1e-9;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Bypasses the test harness capture so the line always shows.
fn announce(v: &Verdict) {
    let status = if v.pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {} {}: {status} ({})", v.id, v.name, v.detail);
    let _ = out.flush();
}

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn criterion_1() -> (bool, String) {
    let start = Instant::now();
    let r = experiments::run_cnot_truth_table(&NoiseConfig::ideal()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let rows_ok = r.rows.iter().all(|row| near(row.correct_probability, 1.0, EXACT));
    let herald_ok = r.rows.iter().all(|row| near(row.herald_probability, 0.25, EXACT));
    let table_ok = r.rows.iter().map(|x| (x.input.as_str(), x.expected.as_str())).eq([
        ("HH", "HV"),
        ("HV", "HH"),
        ("VH", "VH"),
        ("VV", "VV"),
    ]);
    let oracle = brute_force_herald();
    let oracle_ok = r.rows.iter().all(|row| near(row.herald_probability, oracle, EXACT));
    let worst = r
        .rows
        .iter()
        .map(|x| (x.correct_probability - 1.0).abs())
        .fold(0.0, f64::max);
    (
        rows_ok && herald_ok && table_ok && oracle_ok && elapsed < 1.0,
        format!(
            "max |P-1| = {worst:.2e}, herald {:.12} vs permanent oracle {oracle:.12}, {elapsed:.3} s",
            r.rows[0].herald_probability
        ),
    )
}

/// Herald rate of the ideal gate for input HH from dense permanents.
fn brute_force_herald() -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut input = Vec::new();
    for (p3, p4, sign) in [(0usize, 1usize, 1.0), (1, 0, -1.0)] {
        let mut occ = vec![0u8; GATE_MODES];
        occ[0] = 1;
        occ[6] = 1;
        occ[2 + p3] += 1;
        occ[4 + p4] += 1;
        input.push((occ, c(sign * s)));
    }
    let out = evolve(&ideal_gate_unitary(), &input);
    let one_each = |o: &[u8]| [0, 2, 4, 6].iter().all(|&i| o[i] + o[i + 1] == 1);
    let total: f64 = out.iter().filter(|(o, _)| one_each(o)).map(|(_, a)| a.norm_sqr()).sum();
    let joint: f64 = out
        .iter()
        .filter(|(o, _)| one_each(o) && o[2] == 1 && o[4] == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    joint / total
}

fn criterion_2() -> (bool, String) {
    let r = experiments::run_entangling_fringe(&NoiseConfig::ideal(), &Grid::default()).unwrap();
    let argmin = r
        .curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    let min_at = r.angles[argmin];
    let trough = r.fringe.map(|f| (f.peak_deg + 90.0).rem_euclid(180.0));
    let pass = near(r.state_fidelity, 1.0, EXACT)
        && near(r.visibility, 1.0, EXACT)
        && near(min_at, 45.0, 1e-9)
        && trough.is_some_and(|t| near(t, 45.0, 1e-6));
    (
        pass,
        format!(
            "singlet fidelity {:.12}, visibility {:.12}, minimum at P2 = {min_at}°, fitted trough {:.6}°",
            r.state_fidelity,
            r.visibility,
            trough.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_3() -> (bool, String) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let input = QubitState::new(C64::new(s, 0.0), C64::new(0.0, -s)).unwrap();
    let r = experiments::run_teleportation(&input, &NoiseConfig::ideal(), &Grid::default()).unwrap();
    let mut worst: f64 = 0.0;
    for b in &r.branches {
        let expected = experiments::teleport_target(b.bell, &input);
        worst = worst
            .max((b.fidelity - 1.0).abs())
            .max((b.state_fidelity - 1.0).abs())
            .max((b.target.fidelity(&expected) - 1.0).abs());
    }
    let peak = |bell: BellKind| {
        let b = r.branch(bell).unwrap();
        fit_fringe(&r.angles, &b.fringe).unwrap().peak_deg
    };
    let offset = (peak(BellKind::PsiPlus) - peak(BellKind::PsiMinus)).rem_euclid(180.0);
    let corrected = experiments::apply_feedforward(&r).unwrap();
    let ff_worst = corrected
        .iter()
        .map(|c| (c.state_fidelity - 1.0).abs().max((c.fidelity - 1.0).abs()))
        .fold(0.0, f64::max);
    (
        worst < EXACT && near(offset, 90.0, 1e-6) && ff_worst < EXACT,
        format!(
            "max branch |F-1| = {worst:.2e}, Ψ+/Ψ− fringe offset {offset:.9}°, after feedforward max |F-1| = {ff_worst:.2e}"
        ),
    )
}

fn criterion_4() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lines = ["a", "b", "c"];
    let cfg = FockConfig {
        bins: 1,
        ..FockConfig::default()
    };
    let reg = registry(cfg, &lines).unwrap();
    let modes: Vec<ModeLabel> = lines
        .iter()
        .flat_map(|l| [ModeLabel::h(*l), ModeLabel::v(*l)])
        .collect();
    let mut worst: f64 = 0.0;
    let mut amplitudes = 0;
    for case in 0..50 {
        let dim = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=4u8);
        let u = random_unitary(dim, &mut rng);
        let choices = occupations(dim, n);
        let input = choices.choose(&mut rng).unwrap();
        let place = |local: &[u8]| {
            let mut occ = vec![0u8; reg.len()];
            for (k, &m) in local.iter().enumerate() {
                occ[reg.index_of(&modes[k]).unwrap()] = m;
            }
            occ
        };
        let out = reg
            .basis(place(input))
            .unwrap()
            .apply_mode_unitary(&modes[..dim], &to_mode_matrix(&u))
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        for output in &choices {
            let got = out.amplitude(&place(output));
            worst = worst.max((got - oracle_amplitude(&u, input, output)).norm());
            amplitudes += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    (
        worst < 1e-9 && elapsed < 10.0,
        format!("50 cases, {amplitudes} amplitudes, max deviation {worst:.2e}, {elapsed:.3} s"),
    )
}

struct Bracketed {
    p: f64,
    table: f64,
    visibility: f64,
    teleport: f64,
}

impl Bracketed {
    fn run(p: f64) -> Self {
        let noise = NoiseConfig {
            pair_prob: p,
            ..NoiseConfig::reference()
        };
        let grid = Grid::default();
        Bracketed {
            p,
            table: experiments::run_cnot_truth_table(&noise).unwrap().fidelity,
            visibility: experiments::run_entangling_fringe(&noise, &grid).unwrap().visibility,
            teleport: experiments::run_teleportation(&QubitState::left(), &noise, &grid)
                .unwrap()
                .average_fidelity,
        }
    }

    fn holds(&self) -> bool {
        (0.73..=0.83).contains(&self.table)
            && (0.49..=0.67).contains(&self.visibility)
            && (0.74..=0.84).contains(&self.teleport)
            && self.teleport > 2.0 / 3.0
    }

    fn describe(&self) -> String {
        let mark = |ok: bool| if ok { "" } else { "!" };
        format!(
            "p={:.2}: table {:.4}{} vis {:.4}{} teleport {:.4}{}",
            self.p,
            self.table,
            mark((0.73..=0.83).contains(&self.table)),
            self.visibility,
            mark((0.49..=0.67).contains(&self.visibility)),
            self.teleport,
            mark((0.74..=0.84).contains(&self.teleport) && self.teleport > 2.0 / 3.0),
        )
    }
}

fn criterion_5() -> (bool, String) {
    let start = Instant::now();
    let reference = Bracketed::run(0.05);
    if reference.holds() {
        let elapsed = start.elapsed().as_secs_f64();
        return (elapsed < 60.0, format!("{}, {elapsed:.1} s", reference.describe()));
    }
    let mut lines = vec![reference.describe()];
    let mut found = None;
    for k in 1..=10 {
        let p = k as f64 / 100.0;
        if k == 5 {
            continue;
        }
        let b = Bracketed::run(p);
        lines.push(b.describe());
        if b.holds() && found.is_none() {
            found = Some(p);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let verdict = match found {
        Some(p) => format!("brackets hold at p={p:.2}"),
        None => "no p in 0.01..0.10 meets all brackets (! marks the misses)".to_string(),
    };
    (
        found.is_some() && elapsed < 60.0,
        format!("{verdict}; {}; {elapsed:.1} s", lines.join("; ")),
    )
}

fn criterion_6() -> (bool, String) {
    let analytic = experiments::classical_baseline();
    let mc = experiments::classical_baseline_monte_carlo(100_000, 2024);
    (
        analytic == 2.0 / 3.0 && near(mc, 2.0 / 3.0, 0.01),
        format!("analytic {analytic}, Monte Carlo {mc:.5} (1e5 samples, seed 2024)"),
    )
}

fn hom_coincidences(lambda: f64) -> f64 {
    let cfg = FockConfig::default();
    let h = |line: &str| single_photon(cfg, line, c(1.0), c(0.0)).unwrap();
    let two = h("a").tensor(&h("b")).unwrap();
    let mut k: Ket = Element::single(ElementKind::Mismatch { lambda }, "b")
        .unwrap()
        .apply(&two)
        .unwrap();
    for bin in 0..cfg.bins {
        let modes = [
            ModeLabel::new("a", Polarization::H, bin),
            ModeLabel::new("b", Polarization::H, bin),
        ];
        k = k.apply_mode_unitary(&modes, &optics::beam_splitter()).unwrap();
    }
    click_probability(&k, &[Click::threshold("a", None), Click::threshold("b", None)]).unwrap()
}

fn criterion_7() -> (bool, String) {
    let classical = hom_coincidences(0.0);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let coinc = hom_coincidences(lambda);
        let vis = (classical - coinc) / classical;
        worst = worst
            .max((vis - lambda * lambda).abs())
            .max((coinc - hom_coincidence(lambda)).abs());
        parts.push(format!("λ={lambda}: V={vis:.12}"));
    }
    (worst < EXACT, format!("{}; max deviation {worst:.2e}", parts.join(", ")))
}

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("netlists")
}

fn criterion_8() -> (bool, String) {
    let mut problems = Vec::new();
    for (name, text) in netlist::bundled() {
        if let Err(d) = load(text) {
            problems.push(format!("{name}: {d}"));
        }
    }
    let mut bad = 0;
    for entry in fs::read_dir(corpus_dir().join("bad")).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap_or_default();
        let expected = header.strip_prefix("# expect: ").unwrap_or("?");
        match load(&text) {
            Ok(_) => problems.push(format!("{} compiled", path.display())),
            Err(d) => {
                let got = format!("{} {}:{}", d.kind, d.line, d.column);
                if got != expected {
                    problems.push(format!("{}: got {got}, want {expected}", path.display()));
                }
            }
        }
        bad += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut trips = 0;
    for _ in 0..1000 {
        let text = netlists::valid_netlist(&mut rng);
        let ok = load(&text)
            .ok()
            .and_then(|a| load(&render(&a)).ok().map(|b| equivalent(&a, &b)))
            .unwrap_or(false);
        if ok {
            trips += 1;
        } else if problems.len() < 5 {
            problems.push(format!("round trip failed for:\n{text}"));
        }
    }
    let templates: Vec<String> = (0..20).map(|_| netlists::valid_netlist(&mut rng)).collect();
    let mut crashes = 0;
    for case in 0..10_000 {
        let bytes: Vec<u8> = if case % 2 == 0 {
            let n = rng.gen_range(0..256);
            (0..n).map(|_| rng.gen()).collect()
        } else {
            let mut b = templates.choose(&mut rng).unwrap().clone().into_bytes();
            for _ in 0..rng.gen_range(1..6) {
                let i = rng.gen_range(0..b.len());
                b[i] = rng.gen();
            }
            b
        };
        if std::panic::catch_unwind(|| load_bytes(&bytes)).is_err() {
            crashes += 1;
        }
    }
    if crashes > 0 {
        problems.push(format!("{crashes} inputs panicked"));
    }
    (
        problems.is_empty() && bad >= 16,
        format!(
            "{} bundled ok, {bad} bad files located, {trips}/1000 round trips, {crashes} panics in 10000 byte strings{}",
            netlist::bundled().len(),
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        ),
    )
}

const LAMBDAS: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 1.0];
const PAIR_PROBS: [f64; 3] = [0.01, 0.05, 0.1];
const MUS: [f64; 3] = [0.01, 0.05, 0.1];

fn criterion_9() -> (bool, String) {
    let start = Instant::now();
    // [l23][l45][p][mu] -> (table fidelity, visibility)
    let mut grid = vec![[[[(0.0, 0.0); 3]; 3]; 5]; 5];
    for (a, &lambda23) in LAMBDAS.iter().enumerate() {
        for (b, &lambda45) in LAMBDAS.iter().enumerate() {
            for (p_i, &pair_prob) in PAIR_PROBS.iter().enumerate() {
                for (m_i, &mu) in MUS.iter().enumerate() {
                    let noise = NoiseConfig {
                        lambda23,
                        lambda45,
                        pair_prob,
                        mu: Some(mu),
                        spdc_order: 2,
                    };
                    let t = experiments::run_cnot_truth_table(&noise).unwrap().fidelity;
                    let v = experiments::run_entangling_fringe(&noise, &Grid::default())
                        .unwrap()
                        .visibility;
                    grid[a][b][p_i][m_i] = (t, v);
                }
            }
        }
    }
    // increasing noise: λ down, p up, μ up
    let axes = ["λ23", "λ45", "p", "μ"];
    let mut violations = [[0usize; 2]; 4];
    let mut comparisons = 0;
    let mut worst = [[0.0f64; 2]; 4];
    let mut check = |axis: usize, cleaner: (f64, f64), noisier: (f64, f64)| {
        comparisons += 2;
        for (m, (x, y)) in [(cleaner.0, noisier.0), (cleaner.1, noisier.1)].into_iter().enumerate() {
            if y > x + 1e-9 {
                violations[axis][m] += 1;
                worst[axis][m] = worst[axis][m].max(y - x);
            }
        }
    };
    for a in 0..5 {
        for b in 0..5 {
            for p in 0..3 {
                for m in 0..3 {
                    let here = grid[a][b][p][m];
                    if a > 0 {
                        check(0, here, grid[a - 1][b][p][m]);
                    }
                    if b > 0 {
                        check(1, here, grid[a][b - 1][p][m]);
                    }
                    if p < 2 {
                        check(2, here, grid[a][b][p + 1][m]);
                    }
                    if m < 2 {
                        check(3, here, grid[a][b][p][m + 1]);
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let total: usize = violations.iter().flatten().sum();
    let mut parts = Vec::new();
    for (axis, name) in axes.iter().enumerate() {
        for (m, metric) in ["table fidelity", "visibility"].iter().enumerate() {
            if violations[axis][m] > 0 {
                parts.push(format!(
                    "{metric} rises along {name} in {} steps (up to {:.4})",
                    violations[axis][m], worst[axis][m]
                ));
            }
        }
    }
    let summary = if parts.is_empty() {
        "all monotone".to_string()
    } else {
        parts.join("; ")
    };
    (
        total == 0,
        format!("225 points, {comparisons} comparisons, {summary}; {elapsed:.1} s"),
    )
}

type Criterion = fn() -> (bool, String);

#[test]
fn acceptance_criteria() {
    let criteria: [(&'static str, Criterion); 9] = [
        ("ideal CNOT table", criterion_1),
        ("ideal entangling fringe", criterion_2),
        ("ideal teleportation", criterion_3),
        ("permanent oracle", criterion_4),
        ("noise-model brackets", criterion_5),
        ("classical baseline", criterion_6),
        ("HOM visibility", criterion_7),
        ("netlist parser", criterion_8),
        ("degradation monotonicity", criterion_9),
    ];
    let mut verdicts = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let (pass, detail) = run();
        let v = Verdict {
            id: i + 1,
            name,
            pass,
            detail,
        };
        announce(&v);
        verdicts.push(v);
    }
    let failed: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{} ({})", v.id, v.name))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Builds a random netlist that should compile.
pub fn valid_netlist(rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let bins = if rng.gen_bool(0.8) { 2 } else { rng.gen_range(1..=4) };
    if bins != 2 {
        out += &format!("set bins={bins}\n");
    }
    if rng.gen_bool(0.3) {
        out += &format!("set nmax={}\n", rng.gen_range(1..=12));
    }
    if rng.gen_bool(0.2) {
        out += &format!("set prune={:e}\n", rng.gen_range(0.0..1e-6));
    }
    let angle = |rng: &mut ChaCha8Rng| -> String {
        match rng.gen_range(0..3) {
            0 => format!("{}", rng.gen_range(-360i32..=360)),
            1 => format!("{}", rng.gen_range(-400.0..400.0f64)),
            _ => ["0", "22.5", "45", "90", "135", "180"].choose(rng).unwrap().to_string(),
        }
    };
    let pol = |rng: &mut ChaCha8Rng| -> String {
        let base = match rng.gen_range(0..3) {
            0 => String::new(),
            1 => format!(" pol={}", ["H", "V", "P", "M", "L", "R"].choose(rng).unwrap()),
            _ => format!(" pol={}", rng.gen_range(-180.0..180.0f64)),
        };
        if rng.gen_bool(0.2) {
            format!("{base} phase={}", rng.gen_range(-360.0..360.0f64))
        } else {
            base
        }
    };

    let mut next = 0usize;
    let mut fresh = |rng: &mut ChaCha8Rng| {
        next += 1;
        let stem = ["", "l", "a_", "x'", "q."].choose(rng).unwrap();
        format!("{stem}{next}")
    };
    let mut live: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..4) {
            0 => {
                let (a, b) = (fresh(rng), fresh(rng));
                let mut kv = String::new();
                if rng.gen_bool(0.5) {
                    kv += &format!(" p={}", rng.gen_range(0.0..=0.1f64));
                }
                if rng.gen_bool(0.5) {
                    kv += &format!(" order={}", rng.gen_range(1..=2));
                }
                if rng.gen_bool(0.5) {
                    kv += &format!(" bell={}", ["psim", "psip", "phip", "phim"].choose(rng).unwrap());
                }
                out += &format!("source spdc {a} {b}{kv}\n");
                live.extend([a, b]);
            }
            1 => {
                let a = fresh(rng);
                out += &format!("source single {a}{}\n", pol(rng));
                live.push(a);
            }
            2 => {
                let a = fresh(rng);
                let nmax = if rng.gen_bool(0.5) {
                    format!(" nmax={}", rng.gen_range(0..=12))
                } else {
                    String::new()
                };
                out += &format!("source coherent {a} mu={}{}{nmax}\n", rng.gen_range(0.0..=0.1f64), pol(rng));
                live.push(a);
            }
            _ => {
                let a = fresh(rng);
                out += &format!("source vacuum {a}\n");
                live.push(a);
            }
        }
    }
    for _ in 0..rng.gen_range(0..6) {
        let kinds: &[&str] = if live.len() >= 2 {
            &["hwp", "qwp", "polarizer", "mismatch", "pauli", "pbs", "pbs45"]
        } else {
            &["hwp", "qwp", "polarizer", "mismatch", "pauli"]
        };
        let kind = *kinds.choose(rng).unwrap();
        if kind == "mismatch" && bins < 2 {
            continue;
        }
        let arity = if kind.starts_with("pbs") { 2 } else { 1 };
        live.shuffle(rng);
        let inputs: Vec<String> = live[..arity].to_vec();
        let outputs: Vec<String> = if rng.gen_bool(0.4) {
            (0..arity).map(|_| fresh(rng)).collect()
        } else {
            Vec::new()
        };
        let kv = match kind {
            "hwp" | "qwp" | "polarizer" => format!(" theta={}", angle(rng)),
            "mismatch" => format!(" lambda={}", rng.gen_range(0.0..=1.0f64)),
            "pauli" => format!(" op={}", ["X", "Y", "Z"].choose(rng).unwrap()),
            _ => String::new(),
        };
        let arrow = if outputs.is_empty() {
            String::new()
        } else {
            format!(" -> {}", outputs.join(" "))
        };
        out += &format!("elem {kind} {}{arrow}{kv}\n", inputs.join(" "));
        if !outputs.is_empty() {
            live.drain(..arity);
            live.extend(outputs);
        }
    }
    let mut polarizers = Vec::new();
    live.shuffle(rng);
    for line in live {
        if rng.gen_bool(0.25) {
            out += &format!("herald {line} {}\n", ["H", "V", "P", "M", "L", "R"].choose(rng).unwrap());
            continue;
        }
        let kind = *["hv", "pm", "circ", "open", "polarizer"].choose(rng).unwrap();
        let mut kv = String::new();
        if kind == "polarizer" {
            kv += &format!(" theta={}", angle(rng));
            polarizers.push(line.clone());
        }
        if rng.gen_bool(0.3) {
            kv += &format!(" eff={}", rng.gen_range(0.0..=1.0f64));
        }
        out += &format!("det {kind} {line}{kv}\n");
    }
    if let Some(line) = polarizers.first() {
        if rng.gen_bool(0.5) {
            out += &format!(
                "scan theta on {line} from {} to {} steps {}\n",
                rng.gen_range(-90.0..90.0f64),
                rng.gen_range(90.0..270.0f64),
                rng.gen_range(2..50)
            );
        }
    }
    if rng.gen_bool(0.2) {
        out += "# trailing comment\n";
    }
    out
}


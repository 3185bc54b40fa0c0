#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use iotweave::aop::{JoinPoint, PointcutExpr};
use iotweave::manifest::{ConcernManifest, ConcernTag, ModuleDecl, ModuleKind};
use iotweave::middleware::BuildMode;
use iotweave::scenario::parse_scenario;
use iotweave::sim::{simulate, World};

/// Recursive glob matcher: `*` matches any run of characters.
pub fn glob_oracle(pattern: &[char], text: &[char]) -> bool {
    match pattern.split_first() {
        None => text.is_empty(),
        Some(('*', rest)) => (0..=text.len()).any(|i| glob_oracle(rest, &text[i..])),
        Some((c, rest)) => text.first() == Some(c) && glob_oracle(rest, &text[1..]),
    }
}

pub fn glob_matches(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    glob_oracle(&p, &t)
}

/// Mean of `1/f` computed term by term in f64, or `None` for no terms.
pub fn reciprocal_mean(counts: &[usize]) -> Option<f64> {
    if counts.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &f in counts {
        sum += 1.0 / f as f64;
    }
    Some(sum / counts.len() as f64)
}

pub fn random_manifest(rng: &mut StdRng) -> ConcernManifest {
    let n = rng.gen_range(1..=20);
    let label = if rng.gen_bool(0.5) {
        format!("v{}", rng.gen_range(0..100))
    } else {
        String::new()
    };
    let modules = (0..n)
        .map(|i| {
            let kind = if rng.gen_bool(0.6) {
                ModuleKind::ClassModule
            } else {
                ModuleKind::AspectModule
            };
            let f = rng.gen_range(1..=10);
            let tags = (0..f)
                .map(|j| ConcernTag::new(format!("c{i}_{j}")).unwrap())
                .collect();
            ModuleDecl::new(format!("M{i}"), kind, tags).unwrap()
        })
        .collect();
    ConcernManifest::new(label, modules).unwrap()
}

fn payload(rng: &mut StdRng, max: usize) -> String {
    let len = rng.gen_range(1..=max);
    let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    format!("0x{hex}")
}

/// A random two-device scenario script: lossy link, one or two handshakes,
/// then a mix of puts, sends and reads.
pub fn random_scenario(seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let delay = rng.gen_range(1..=3);
    let drop: f64 = rng.gen_range(0.0..0.3);
    let link_seed: u64 = rng.gen();
    let mut s = format!("devices A B\nlink delay={delay} drop={drop} seed={link_seed}\n");
    s.push_str("at 0 A handshake B\n");
    if rng.gen_bool(0.3) {
        s.push_str("at 1 B handshake A\n");
    }
    let sensors = ["temp", "hum", "light"];
    for _ in 0..rng.gen_range(3..15) {
        let tick = rng.gen_range(0..80);
        let (me, peer) = if rng.gen_bool(0.5) { ("A", "B") } else { ("B", "A") };
        let sensor = sensors[rng.gen_range(0..sensors.len())];
        match rng.gen_range(0..3) {
            0 => s.push_str(&format!("at {tick} {me} put {sensor} {}\n", payload(&mut rng, 8))),
            1 => s.push_str(&format!("at {tick} {me} send {peer} {sensor} {}\n", payload(&mut rng, 700))),
            _ => s.push_str(&format!("at {tick} {me} read {peer} {sensor}\n")),
        }
    }
    s.push_str("run 600\n");
    s
}

pub fn run_text(text: &str, mode: BuildMode) -> World {
    let scenario = parse_scenario(text).expect("test scenario parses");
    simulate(&scenario, mode).expect("simulation runs")
}

/// Independent SplitMix64 step.
pub fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hex_payload(bytes: &[u8]) -> String {
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    format!("0x{hex}")
}

/// Name over a small alphabet so that random globs hit often.
pub fn random_name(rng: &mut StdRng) -> String {
    const FIRST: [char; 3] = ['a', 'b', '_'];
    const REST: [char; 5] = ['a', 'b', '_', '-', '1'];
    let len = rng.gen_range(1..=6);
    let mut s = String::new();
    s.push(FIRST[rng.gen_range(0..FIRST.len())]);
    for _ in 1..len {
        s.push(REST[rng.gen_range(0..REST.len())]);
    }
    s
}

pub fn random_glob(rng: &mut StdRng) -> String {
    const ALPHABET: [char; 6] = ['a', 'b', '_', '-', '1', '*'];
    let len = rng.gen_range(1..=6);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

pub fn random_pointcut(rng: &mut StdRng, depth: u32) -> PointcutExpr {
    if depth == 0 || rng.gen_bool(0.35) {
        return PointcutExpr::execution(&random_glob(rng), &random_glob(rng)).unwrap();
    }
    match rng.gen_range(0..3) {
        0 => random_pointcut(rng, depth - 1).and(random_pointcut(rng, depth - 1)),
        1 => random_pointcut(rng, depth - 1).or(random_pointcut(rng, depth - 1)),
        _ => random_pointcut(rng, depth - 1).not(),
    }
}

/// Evaluates a pointcut with the recursive glob oracle.
pub fn pointcut_oracle(p: &PointcutExpr, jp: &JoinPoint) -> bool {
    match p {
        PointcutExpr::Execution { module, op } => {
            glob_matches(module.as_str(), jp.module()) && glob_matches(op.as_str(), jp.op())
        }
        PointcutExpr::And(a, b) => pointcut_oracle(a, jp) && pointcut_oracle(b, jp),
        PointcutExpr::Or(a, b) => pointcut_oracle(a, jp) || pointcut_oracle(b, jp),
        PointcutExpr::Not(a) => !pointcut_oracle(a, jp),
    }
}

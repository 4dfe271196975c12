//! Writes a synthetic corpus in `.tsf` form.
//!
//! `cargo run --example synth_corpus -- OUT.tsf [N] [LEN] [HORIZON] [SEED] [NOISE]`

use tsforge::dataset::Frequency;
use tsforge::synthetic::seasonal_corpus;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(out) = args.first() else {
        eprintln!("usage: synth_corpus OUT.tsf [N] [LEN] [HORIZON] [SEED] [NOISE]");
        std::process::exit(2);
    };
    let arg = |i: usize, default: &str| args.get(i).map_or(default.to_string(), Clone::clone);
    let n: usize = arg(1, "30").parse().expect("N");
    let len: usize = arg(2, "120").parse().expect("LEN");
    let h: usize = arg(3, "12").parse().expect("HORIZON");
    let seed: u64 = arg(4, "0").parse().expect("SEED");
    let noise: f64 = arg(5, "0.05").parse().expect("NOISE");
    let d = seasonal_corpus(n, len, Frequency::Monthly, h, noise, seed);
    std::fs::write(out, d.to_tsf_string()).expect("write corpus");
}

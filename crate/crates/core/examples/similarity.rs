//! Scores pairs of extracted values the way the reliability gate does.
//!
//! `cargo run --example similarity -- "first text" "second text"`

use urbanmas::reliability::{jaccard, normalize, seq_ratio, soft_sim, ReliabilityConfig};

fn main() {
    let cfg = ReliabilityConfig::default();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: Vec<(String, String)> = match args.as_slice() {
        [a, b] => vec![(a.clone(), b.clone())],
        _ => [
            ("Dense office towers with a busy metro exit.", "dense office towers, busy metro exit"),
            ("Wide riverside promenade.", "A narrow alley lined with bars."),
            ("Tokyo Tower dominates the skyline", "the skyline is dominated by Tokyo Tower"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect(),
    };
    for (a, b) in pairs {
        let (na, nb) = (normalize(&a), normalize(&b));
        let score = soft_sim(&a, &b, &cfg);
        let verdict = if score >= cfg.threshold { "stable" } else { "conflict" };
        println!("{a:?}\n{b:?}");
        println!(
            "  jaccard {:.3}  gestalt {:.3}  soft_sim {score:.3}  -> {verdict}\n",
            jaccard(&na, &nb),
            seq_ratio(&na, &nb)
        );
    }
}

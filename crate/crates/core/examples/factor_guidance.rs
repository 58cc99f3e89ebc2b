//! Runs the research and summary agents for one task against the
//! deterministic synthetic model and prints the resulting factor sets.
//!
//! `cargo run --example factor_guidance -- boringness`

use urbanmas::domain::TaskSpec;
use urbanmas::guidance::{guide, GuidanceConfig};
use urbanmas::llm::CountingBackend;
use urbanmas::synthetic;

fn main() -> urbanmas::Result<()> {
    let id = std::env::args().nth(1).unwrap_or_else(|| "running_amount".into());
    let task = TaskSpec::preset(&id).ok_or_else(|| urbanmas::Error::Usage(format!("unknown task `{id}`")))?;
    let backend = CountingBackend::new(synthetic::backend());
    let book = guide(&task, &backend, &GuidanceConfig::default())?;
    for gp in &book.pairs {
        println!("{} (summary retries: {})", gp.factor_set.pair(), gp.summary_retries);
        for f in &gp.factor_set.factors {
            println!("  {:<24} {}", f.name, f.description);
        }
    }
    println!("{} backend calls", backend.calls());
    Ok(())
}

//! One prediction against a live OpenAI-compatible endpoint.
//!
//! Needs `URBANMAS_API_KEY`; `URBANMAS_API_BASE` and `URBANMAS_MODEL`
//! override the defaults. Pass `--dry-run` to print the request body only.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use urbanmas::domain::{load_samples, TaskSpec};
use urbanmas::http::{ReqwestClient, SystemClock};
use urbanmas::inference::{infer_single_llm, single_prompt, InferenceConfig, SINGLE_SYSTEM};
use urbanmas::llm::{ChatRequest, LiveBackend, LiveConfig, ResponseFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let sample = load_samples(&fixtures.join("enriched.jsonl"))?.remove(0);
    let task = TaskSpec::preset("liveliness").expect("preset");
    let cfg = InferenceConfig::default();

    let live = LiveConfig::default().with_env();
    let dry_run = std::env::args().any(|a| a == "--dry-run");
    let live = if dry_run && live.api_key.is_empty() {
        LiveConfig { api_key: "unused".into(), ..live }
    } else {
        live
    };
    let http = Arc::new(ReqwestClient::new(Duration::from_secs(live.timeout_s))?);
    let backend = LiveBackend::new(live, http, Arc::new(SystemClock::default()))?;

    if dry_run {
        let req = ChatRequest::new(SINGLE_SYSTEM, single_prompt(&task, &sample, &cfg), ResponseFormat::StructuredObject);
        println!("{}", serde_json::to_string_pretty(&backend.request_body(&req))?);
        return Ok(());
    }
    let out = infer_single_llm(&task, &sample, &backend, &cfg)?;
    println!("{} {} = {:.2}", sample.id, task.output_key, out.prediction.value);
    if let Some(r) = &out.prediction.rationale {
        println!("{r}");
    }
    Ok(())
}

//! A deterministic stand-in for a chat model that understands every agent
//! prompt in this crate. Replies depend only on the prompts and the variant
//! seed, so runs against it are reproducible and can be recorded into
//! cassettes.
//!
//! The seed-1 extraction variant replaces roughly one field in six with
//! unrelated text, which gives the reliability gate real conflicts to
//! repair. The Refiner answers with variant A's text.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::extraction::{EXTRACT_SYSTEM, REFINE_SYSTEM};
use crate::guidance::{RESEARCH_SYSTEM, SUMMARY_SYSTEM};
use crate::inference::{INFER_SYSTEM, SINGLE_SYSTEM};
use crate::llm::MockBackend;

pub fn backend() -> MockBackend {
    MockBackend::new(respond).with_id("synthetic")
}

fn hash(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn line_value<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

/// `N. Name: description` lines, in order.
fn numbered(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let (num, rest) = l.trim().split_once(". ")?;
            num.parse::<u32>().ok()?;
            let (name, desc) = rest.split_once(": ")?;
            Some((name.trim().to_string(), desc.trim().to_string()))
        })
        .collect()
}

const CATALOG: [(&str, &str, [(&str, &str); 6]); 4] = [
    ("Social", "Macro", [
        ("Population density", "Residents per square kilometre in the surrounding district."),
        ("Commercial activity", "Share of retail and food venues among nearby points of interest."),
        ("Transit access", "Number of rail and bus stops within walking distance."),
        ("Tourism intensity", "Presence of landmarks, hotels and visitor attractions."),
        ("Nightlife presence", "Density of bars, clubs and late-night venues."),
        ("Community facilities", "Schools, libraries and community centres in the area."),
    ]),
    ("Social", "Street", [
        ("Pedestrian presence", "Visible people walking or lingering on the street."),
        ("Street vending", "Kiosks, stalls and shopfronts opening onto the sidewalk."),
        ("Seating availability", "Benches and public seating along the street."),
        ("Cycling activity", "Cyclists and bicycle parking visible on the street."),
        ("Social gathering spots", "Cafe terraces, plazas and corners where people meet."),
        ("Signage density", "Amount of shop signs and advertising at eye level."),
    ]),
    ("Built Environmental", "Macro", [
        ("Green space coverage", "Share of parks and vegetated land in the district."),
        ("Waterfront proximity", "Distance to rivers, lakes or coastline."),
        ("Land use mix", "Diversity of residential, commercial and recreational uses."),
        ("Road network density", "Length of walkable streets per unit area."),
        ("Building height", "Typical number of storeys in the surrounding blocks."),
        ("Terrain slope", "Steepness of the local topography."),
    ]),
    ("Built Environmental", "Street", [
        ("Sidewalk width", "Usable walking width between curb and building line."),
        ("Tree canopy", "Street trees shading the sidewalk."),
        ("Traffic volume", "Motor vehicles moving along the street."),
        ("Facade continuity", "Unbroken active ground-floor frontage."),
        ("Lighting quality", "Street lamps and illumination along the path."),
        ("Surface condition", "State of paving and road surface."),
    ]),
];

const LEVELS: [&str; 5] = ["very low", "low", "moderate", "high", "very high"];

const UNRELATED: [&str; 4] = [
    "weather report unavailable for another region entirely",
    "no idea sorry this item cannot be determined",
    "zebra quantum marmalade syndicate",
    "quarterly earnings guidance for semiconductor firms",
];

fn research(user: &str) -> String {
    let task = line_value(user, "Task:").unwrap_or("the task");
    let dimension = line_value(user, "Dimension:").unwrap_or("");
    let level = line_value(user, "Level:").unwrap_or("");
    let Some((_, _, factors)) = CATALOG.iter().find(|(d, l, _)| *d == dimension && *l == level) else {
        return String::new();
    };
    let mut out = format!(
        "Research brief for {task}, {dimension} dimension at the {level} level.\n\n\
         Studies of urban activity and perception repeatedly link outcomes like this one to the \
         character of the surrounding area and to what people experience directly on the street. \
         The factors below are the ones most consistently reported as influential, ordered by the \
         strength of the evidence.\n\n"
    );
    for (i, (name, desc)) in factors.iter().enumerate() {
        out.push_str(&format!("{}. {name}: {desc}\n", i + 1));
    }
    out
}

fn summary(user: &str) -> String {
    let brief = user.split_once("Research brief:").map_or("", |(_, b)| b);
    let factors: Vec<Value> = numbered(brief)
        .into_iter()
        .take(6)
        .map(|(name, description)| json!({ "name": name, "description": description }))
        .collect();
    json!({ "factors": factors }).to_string()
}

fn extract(user: &str, seed: u32) -> String {
    let location = line_value(user, "Location:").unwrap_or("");
    let address = line_value(user, "Address:").unwrap_or("unknown");
    let area = address.split(',').next().unwrap_or(address).trim();
    let landmark = user
        .lines()
        .find_map(|l| l.strip_prefix("- ").filter(|r| r.contains(" m)")))
        .and_then(|r| r.split(" (").next())
        .unwrap_or("the main road");
    let factors = user.split_once("Factors:").map_or("", |(_, f)| f);
    let mut out = Map::new();
    for (name, _) in numbered(factors) {
        let h = hash(&[location, &name]);
        let level = LEVELS[(h % LEVELS.len() as u64) as usize];
        let text = if seed == 1 && (h >> 8) % 6 == 0 {
            UNRELATED[((h >> 16) % UNRELATED.len() as u64) as usize].to_string()
        } else {
            format!("{level} {} around {area}, notably near {landmark}", name.to_lowercase())
        };
        out.insert(name, Value::String(text));
    }
    Value::Object(out).to_string()
}

fn predict(user: &str) -> String {
    let key = line_value(user, "Output key:").unwrap_or("value");
    let value = (hash(&[user]) % 1001) as f64 / 100.0;
    let mut out = Map::new();
    out.insert(key.to_string(), json!(value));
    out.insert(
        "rationale".into(),
        Value::String("Weighed the reported context for the location against the task.".into()),
    );
    Value::Object(out).to_string()
}

/// The responder behind [`backend`]; unknown system prompts get an empty reply.
pub fn respond(system: &str, user: &str, seed: u32) -> String {
    match system {
        RESEARCH_SYSTEM => research(user),
        SUMMARY_SYSTEM => summary(user),
        EXTRACT_SYSTEM => extract(user, seed),
        REFINE_SYSTEM => line_value(user, "Variant A:").unwrap_or("").to_string(),
        INFER_SYSTEM | SINGLE_SYSTEM => predict(user),
        _ => String::new(),
    }
}

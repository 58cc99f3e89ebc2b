use smallvec::SmallVec;
use unicode_general_category::{get_general_category, GeneralCategory};

/// Symbols stripped alongside Unicode punctuation (categories Pc, Pd, Ps, Pe,
/// Pi, Pf, Po). `#` is already Po; the rest are math or currency symbols.
pub const EXTRA_STRIPPED: [char; 8] = ['#', '$', '+', '<', '=', '>', '|', '~'];

pub fn is_stripped(c: char) -> bool {
    use GeneralCategory::*;
    EXTRA_STRIPPED.contains(&c)
        || matches!(
            get_general_category(c),
            ConnectorPunctuation
                | DashPunctuation
                | OpenPunctuation
                | ClosePunctuation
                | InitialPunctuation
                | FinalPunctuation
                | OtherPunctuation
        )
}

/// Lowercases, deletes punctuation, collapses whitespace runs to one space
/// and trims. Idempotent.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if is_stripped(c) {
            continue;
        }
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

/// Token-set Jaccard index over single-space tokens. Two empty inputs score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    if !a.contains(' ') && !b.contains(' ') {
        // at most one token each
        return f64::from(u8::from(a == b));
    }
    let ta = token_set(a);
    let tb = token_set(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < ta.len() && j < tb.len() {
        match ta[i].cmp(tb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = ta.len() + tb.len() - inter;
    inter as f64 / union as f64
}

fn token_set(s: &str) -> SmallVec<[&str; 16]> {
    let mut tokens: SmallVec<[&str; 16]> = s.split(' ').filter(|t| !t.is_empty()).collect();
    tokens.sort_unstable();
    tokens.dedup();
    tokens
}

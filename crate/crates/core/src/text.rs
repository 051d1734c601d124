//! Tokenization and string normalization shared by features, critique scores
//! and answer comparison.

use std::collections::BTreeSet;

/// Program keywords and operators. These never count as content tokens.
pub const KEYWORDS: &[&str] = &[
    "select", "where", "or", "followup", "fpcell", "is", "max", "min", "=", "!=", ">", "<",
];

pub fn is_keyword(token: &str) -> bool {
    KEYWORDS.contains(&token)
}

/// Lowercases and splits on whitespace and punctuation. A `.` between two
/// digits stays inside the token so decimals survive.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let keep = c.is_alphanumeric()
            || (c == '.'
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
        if keep {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Plain decimal parser: optional sign, thousands separators removed, no
/// exponents, no units, no dates.
pub fn parse_number(raw: &str) -> Option<f64> {
    let s: String = raw.trim().chars().filter(|&c| c != ',').collect();
    let body = s.strip_prefix(['-', '+']).unwrap_or(&s);
    if body.is_empty() {
        return None;
    }
    let mut digits = 0;
    let mut dots = 0;
    for c in body.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => dots += 1,
            _ => return None,
        }
    }
    if digits == 0 || dots > 1 {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Renders a number the way condition literals are serialized: integral
/// values without a fractional part.
pub fn format_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Answer normalization: lowercase, trim, collapse internal whitespace, and
/// drop a zero fractional part from numerics (`21.0` -> `21`).
pub fn normalize_answer(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut s = collapsed.to_lowercase();
    if parse_number(&s).is_some() && s.contains('.') {
        let trimmed = s.trim_end_matches('0');
        s = trimmed.strip_suffix('.').unwrap_or(trimmed).to_string();
    }
    s
}

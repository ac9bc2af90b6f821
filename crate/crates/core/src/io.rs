//! Output formatting shared by the file writers.

use crate::scalar::Real;

/// Significant digits used for every numeric value written to reports.
pub const SIG_DIGITS: usize = 9;

/// Formats a value with [`SIG_DIGITS`] significant digits, without trailing
/// zeros, switching to exponent notation for very large or small magnitudes.
pub fn fmt_sig<T: Real>(v: T) -> String {
    let v = v.as_f64();
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Round once in exponent form so every branch keeps SIG_DIGITS digits.
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mant, e) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = e.parse().unwrap_or(0);
    if !(-5..15).contains(&exp) {
        return format!("{}e{}", trim_zeros(mant), exp);
    }
    let v: f64 = sci.parse().unwrap_or(v);
    let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    trim_zeros(&s).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Minimal ordered JSON object writer with fixed number formatting.
#[derive(Default)]
pub struct JsonObject {
    entries: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn number<T: Real>(mut self, key: &str, v: T) -> Self {
        let text = if v.is_finite() { fmt_sig(v) } else { "null".into() };
        self.entries.push((key.into(), text));
        self
    }

    pub fn numbers<T: Real>(mut self, key: &str, vs: &[T]) -> Self {
        let items: Vec<String> = vs
            .iter()
            .map(|&v| if v.is_finite() { fmt_sig(v) } else { "null".into() })
            .collect();
        self.entries.push((key.into(), format!("[{}]", items.join(", "))));
        self
    }

    pub fn string(mut self, key: &str, v: &str) -> Self {
        self.entries
            .push((key.into(), serde_json::Value::String(v.into()).to_string()));
        self
    }

    pub fn integer(mut self, key: &str, v: i64) -> Self {
        self.entries.push((key.into(), v.to_string()));
        self
    }

    pub fn boolean(mut self, key: &str, v: bool) -> Self {
        self.entries.push((key.into(), v.to_string()));
        self
    }

    pub fn raw(mut self, key: &str, json: String) -> Self {
        self.entries.push((key.into(), json));
        self
    }

    pub fn render(&self, indent: usize) -> String {
        if self.entries.is_empty() {
            return "{}".into();
        }
        let pad = " ".repeat(indent + 2);
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("{pad}{}: {v}", serde_json::Value::String(k.clone())))
            .collect();
        format!("{{\n{}\n{}}}", body.join(",\n"), " ".repeat(indent))
    }
}

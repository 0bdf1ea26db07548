//! Byte-stable JSON: sorted keys, floats rounded to 12 significant digits.

use serde::Serialize;
use serde_json::{Map, Number, Value};

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_float(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

pub fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let v = round_float(n.as_f64().expect("f64 number"));
            Number::from_f64(v).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => {
            // serde_json's default map is ordered by key
            let map: Map<String, Value> =
                map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect();
            Value::Object(map)
        }
        other => other,
    }
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable")
}

/// Pretty-printed canonical document with a trailing newline.
pub fn render(value: Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonicalize(value)).expect("serializable");
    s.push('\n');
    s
}

/// One canonical compact document per line.
pub fn render_lines(lines: &str) -> String {
    let mut out = String::new();
    for line in lines.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).expect("trace lines are JSON");
        out.push_str(&serde_json::to_string(&canonicalize(v)).expect("serializable"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(round_float(0.1 + 0.2), 0.3);
        assert_eq!(round_float(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_float(123456789012345.0), 123456789012000.0);
        assert_eq!(round_float(-2.5), -2.5);
    }

    #[test]
    fn keys_are_sorted_and_integers_untouched() {
        let v = json!({"b": 1, "a": [0.1, 12345678901234567u64]});
        assert_eq!(
            serde_json::to_string(&canonicalize(v)).unwrap(),
            r#"{"a":[0.1,12345678901234567],"b":1}"#
        );
    }
}

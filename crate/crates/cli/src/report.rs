//! Bit-stable report emission: a tiny JSON value tree with sorted keys and
//! 17-significant-digit floats, plus a readable markdown rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Debug)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Value>),
    Object(BTreeMap<String, Value>),
}

impl Value {
    pub fn object() -> Value {
        Value::Object(BTreeMap::new())
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        if let Value::Object(map) = self {
            map.insert(key.to_string(), value);
        }
        self
    }

    pub fn floats(values: &[f64]) -> Value {
        Value::Array(values.iter().map(|v| Value::Float(*v)).collect())
    }

    pub fn matrix3(m: &nalgebra::Matrix3<f64>) -> Value {
        // Row-major flattening.
        Value::Array(
            (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .map(|(r, c)| Value::Float(m[(r, c)]))
                .collect(),
        )
    }
}

/// Lossless float rendering: 17 significant digits in scientific notation.
fn write_float(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:.16e}");
    } else if v.is_nan() {
        out.push_str("\"nan\"");
    } else if v > 0.0 {
        out.push_str("\"inf\"");
    } else {
        out.push_str("\"-inf\"");
    }
}

fn write_escaped(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

pub fn to_json(value: &Value) -> String {
    let mut out = String::new();
    write_json(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_json(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Value::Float(v) => write_float(out, *v),
        Value::Str(s) => write_escaped(out, s),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_json(out, item, depth + 1);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            let pad = "  ".repeat(depth + 1);
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push_str(",\n");
                }
                out.push_str(&pad);
                write_escaped(out, key);
                out.push_str(": ");
                write_json(out, item, depth + 1);
            }
            out.push('\n');
            out.push_str(&"  ".repeat(depth));
            out.push('}');
        }
    }
}

/// Markdown rendering: tables mirror the JSON numbers, rounded for display.
pub fn to_markdown(value: &Value, title: &str) -> String {
    let mut out = format!("# {title}\n\n");
    render_md(&mut out, value, 2);
    out
}

fn short(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-3 && v.abs() < 1e6 {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

fn render_md(out: &mut String, value: &Value, level: usize) {
    match value {
        Value::Object(map) => {
            // Scalar entries first, as a definition list.
            for (key, item) in map {
                match item {
                    Value::Array(_) | Value::Object(_) => {}
                    _ => {
                        let _ = writeln!(out, "- **{key}**: {}", inline_md(item));
                    }
                }
            }
            out.push('\n');
            for (key, item) in map {
                match item {
                    Value::Array(rows) if rows.iter().all(|r| matches!(r, Value::Object(_))) && !rows.is_empty() => {
                        let _ = writeln!(out, "{} {key}\n", "#".repeat(level));
                        render_table(out, rows);
                    }
                    Value::Array(_) => {
                        let _ = writeln!(out, "{} {key}\n\n{}\n", "#".repeat(level), inline_md(item));
                    }
                    Value::Object(_) => {
                        let _ = writeln!(out, "{} {key}\n", "#".repeat(level));
                        render_md(out, item, level + 1);
                    }
                    _ => {}
                }
            }
        }
        other => {
            let _ = writeln!(out, "{}", inline_md(other));
        }
    }
}

fn render_table(out: &mut String, rows: &[Value]) {
    let mut columns: Vec<String> = Vec::new();
    for row in rows {
        if let Value::Object(map) = row {
            for key in map.keys() {
                if !columns.contains(key) {
                    columns.push(key.clone());
                }
            }
        }
    }
    columns.sort();
    let _ = writeln!(out, "| {} |", columns.join(" | "));
    let _ = writeln!(out, "|{}|", columns.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for row in rows {
        if let Value::Object(map) = row {
            let cells: Vec<String> = columns
                .iter()
                .map(|c| map.get(c).map_or(String::new(), inline_md))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
    }
    out.push('\n');
}

fn inline_md(value: &Value) -> String {
    match value {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(v) => short(*v),
        Value::Str(s) => s.clone(),
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(inline_md).collect();
            format!("[{}]", inner.join(", "))
        }
        Value::Object(_) => "{...}".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_are_sorted_and_floats_lossless() {
        let mut v = Value::object();
        v.set("zeta", Value::Float(0.1));
        v.set("alpha", Value::Float(1.0 / 3.0));
        let text = to_json(&v);
        let a = text.find("alpha").unwrap();
        let z = text.find("zeta").unwrap();
        assert!(a < z);
        // Round-trip the printed float.
        let printed = format!("{:.16e}", 1.0 / 3.0);
        assert_eq!(printed.parse::<f64>().unwrap(), 1.0 / 3.0);
        assert!(text.contains(&printed));
    }

    #[test]
    fn identical_values_print_identically() {
        let mut v = Value::object();
        v.set("x", Value::floats(&[1.0, -0.25, 3.5e-9]));
        assert_eq!(to_json(&v), to_json(&v.clone()));
    }
}

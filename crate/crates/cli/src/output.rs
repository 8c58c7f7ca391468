//! Deterministic output formatting.
//!
//! Numbers are rounded to 12 significant digits and printed in the
//! shortest form that round-trips the rounded value, so identical
//! invocations are bit-identical. Infinities are serialized as the
//! strings "inf"/"-inf" because portable JSON has no infinity literal.

/// JSON value with insertion-ordered object keys.
pub enum Val {
    Num(f64),
    Int(i64),
    Str(String),
    List(Vec<Val>),
    Null,
}

pub struct JsonObj {
    fields: Vec<(&'static str, Val)>,
}

impl JsonObj {
    pub fn new() -> Self {
        Self { fields: Vec::new() }
    }

    pub fn field(mut self, key: &'static str, value: Val) -> Self {
        self.fields.push((key, value));
        self
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| format!("\"{k}\": {}", render_val(v)))
            .collect();
        format!("{{{}}}", body.join(", "))
    }

    /// Flat two-column CSV of the same fields; list values join with `;`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("field,value\n");
        for (k, v) in &self.fields {
            out.push_str(k);
            out.push(',');
            out.push_str(&csv_val(v));
            out.push('\n');
        }
        out
    }
}

fn csv_val(v: &Val) -> String {
    match v {
        Val::Num(x) => csv_num(*x),
        Val::Int(i) => i.to_string(),
        Val::Str(s) => s.clone(),
        Val::List(items) => items.iter().map(csv_val).collect::<Vec<_>>().join(";"),
        Val::Null => String::new(),
    }
}

fn render_val(v: &Val) -> String {
    match v {
        Val::Num(x) => render_num(*x),
        Val::Int(i) => i.to_string(),
        Val::Str(s) => format!("\"{s}\""),
        Val::List(items) => {
            let body: Vec<String> = items.iter().map(render_val).collect();
            format!("[{}]", body.join(", "))
        }
        Val::Null => "null".to_string(),
    }
}

fn render_num(x: f64) -> String {
    if x.is_nan() {
        return "\"nan\"".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "\"inf\"" } else { "\"-inf\"" }.to_string();
    }
    // Debug gives the shortest representation that round-trips
    format!("{:?}", round_sig12(x))
}

/// Round to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0; // normalizes -0.0 as well
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Format one float for CSV cells with the same convention.
pub fn csv_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{:?}", round_sig12(x))
    }
}

/// A CSV table: header plus float rows.
pub struct Csv {
    pub header: &'static str,
    pub rows: Vec<Vec<f64>>,
}

impl Csv {
    pub fn render(&self) -> String {
        let mut out = String::from(self.header);
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| csv_num(*x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

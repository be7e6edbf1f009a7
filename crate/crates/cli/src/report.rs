//! Report documents. Each run produces one JSON tree; the text rendering is
//! a walk over that tree.

use std::fmt::Write;

use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    Obstructed,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Obstructed => "obstructed",
            Status::Error => "error",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::Obstructed => 2,
        }
    }

    /// Combined status of several runs: any error wins over obstructions.
    pub fn merge(self, other: Status) -> Status {
        match (self, other) {
            (Status::Error, _) | (_, Status::Error) => Status::Error,
            (Status::Obstructed, _) | (_, Status::Obstructed) => Status::Obstructed,
            _ => Status::Ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub status: Status,
    pub tree: Value,
}

impl Report {
    pub fn new(command: &str, status: Status, result: Value) -> Self {
        let mut root = Map::new();
        root.insert("command".into(), Value::String(command.into()));
        root.insert("status".into(), Value::String(status.name().into()));
        root.insert(if status == Status::Error { "error" } else { "result" }.into(), result);
        Report { status, tree: Value::Object(root) }
    }

    pub fn batch(reports: Vec<Report>) -> Self {
        let status = reports.iter().fold(Status::Ok, |s, r| s.merge(r.status));
        let runs = reports.into_iter().map(|r| r.tree).collect();
        Report::new("run", status, Value::Array(runs))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.tree).expect("report trees serialize");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        render_value(&mut out, &self.tree, 0);
        out
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(if *b { "yes" } else { "no" }.into()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        Value::Array(a) if a.iter().all(|x| matches!(x, Value::Number(_))) => {
            Some(format!("({})", a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
        }
        Value::Array(a) if a.is_empty() => Some("none".into()),
        Value::Object(m) if m.is_empty() => Some("none".into()),
        _ => None,
    }
}

fn render_value(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                match scalar(x) {
                    Some(s) => {
                        let _ = writeln!(out, "{pad}{k}: {s}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}{k}:");
                        render_value(out, x, depth + 1);
                    }
                }
            }
        }
        Value::Array(a) => {
            for x in a {
                match scalar(x) {
                    Some(s) => {
                        let _ = writeln!(out, "{pad}- {s}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}-");
                        render_value(out, x, depth + 1);
                    }
                }
            }
        }
        other => {
            let _ = writeln!(out, "{pad}{}", scalar(other).unwrap_or_default());
        }
    }
}

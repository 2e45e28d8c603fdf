//! Line-oriented `key=value` logging on stderr.

use std::io::Write;

fn quote(v: &str) -> String {
    if !v.is_empty() && v.chars().all(|c| c.is_ascii_graphic() && c != '"' && c != '=') {
        v.to_owned()
    } else {
        format!("{v:?}")
    }
}

pub fn line(level: &str, command: &str, stage: &str, fields: &[(&str, String)]) -> String {
    let mut out = format!("level={level} cmd={command}");
    if !stage.is_empty() {
        out.push_str(&format!(" stage={}", quote(stage)));
    }
    for (k, v) in fields {
        out.push_str(&format!(" {k}={}", quote(v)));
    }
    out
}

fn emit(level: &str, command: &str, stage: &str, fields: &[(&str, String)]) {
    let _ = writeln!(std::io::stderr().lock(), "{}", line(level, command, stage, fields));
}

pub fn info(command: &str, stage: &str, fields: &[(&str, String)]) {
    emit("info", command, stage, fields);
}

pub fn warn(command: &str, stage: &str, fields: &[(&str, String)]) {
    emit("warn", command, stage, fields);
}

pub fn error(command: &str, fields: &[(&str, String)]) {
    emit("error", command, "", fields);
}

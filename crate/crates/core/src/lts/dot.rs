use std::fmt::Write as _;

use super::Lts;

/// Renders `l` as a DOT digraph. The initial state is drawn with a double
/// border; deadlock states are filled red when `highlight_deadlocks` is set.
pub fn write_dot(l: &Lts, highlight_deadlocks: bool) -> Vec<u8> {
    let mut out = String::from("digraph lts {\n  node [shape=circle];\n");
    for s in 0..l.states() {
        let mut attrs = Vec::new();
        if s == l.initial() {
            attrs.push("shape=doublecircle");
        }
        if highlight_deadlocks && l.is_deadlock(s) {
            attrs.push("style=filled");
            attrs.push("fillcolor=red");
            attrs.push("color=red");
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  {s};");
        } else {
            let _ = writeln!(out, "  {s} [{}];", attrs.join(", "));
        }
    }
    for (src, label, dst) in l.iter() {
        let text = label.to_string().replace('\\', "\\\\").replace('"', "\\\"");
        let _ = writeln!(out, "  {src} -> {dst} [label=\"{text}\"];");
    }
    out.push_str("}\n");
    out.into_bytes()
}

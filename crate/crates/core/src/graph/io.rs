//! JSON graph format.
//!
//! ```json
//! {
//!   "vertices": [
//!     {"id": 0, "name": "Z1", "tier": "background"},
//!     {"id": 1, "name": "X1", "tier": "foreground"},
//!     {"id": 2, "name": "X2", "tier": "foreground"}
//!   ],
//!   "directed": [[0, 1], [1, 2]],
//!   "bidirected": [[1, 2]]
//! }
//! ```
//!
//! `tier` is one of `background`, `foreground`, `latent`. Latent vertices
//! may be given explicitly (as parents of exactly two vertices) or as
//! bidirected edges; both load to the same graph. Ids must be dense and
//! listed in order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TieredGraph, Vertex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: Vec<Vertex>,
    #[serde(default)]
    pub directed: Vec<(usize, usize)>,
    #[serde(default)]
    pub bidirected: Vec<(usize, usize)>,
}

impl From<&TieredGraph> for GraphFile {
    fn from(g: &TieredGraph) -> Self {
        GraphFile {
            vertices: g.vertices().to_vec(),
            directed: g.directed_edges().iter().copied().collect(),
            bidirected: g.bidirected_edges().iter().copied().collect(),
        }
    }
}

/// Line (1-based) of the first `[a, b]` edge literal in `text`, ignoring
/// whitespace.
fn edge_line(text: &str, a: usize, b: usize) -> Option<usize> {
    let needle = format!("[{a},{b}]");
    let mut compact = String::with_capacity(text.len());
    let mut lines = Vec::with_capacity(text.len());
    let mut line = 1;
    for ch in text.chars() {
        if ch == '\n' {
            line += 1;
        }
        if !ch.is_whitespace() {
            compact.push(ch);
            lines.push(line);
        }
    }
    compact.find(&needle).map(|pos| lines[pos])
}

fn vertex_line(text: &str, id: usize) -> Option<usize> {
    let needle = format!("\"id\":{id},");
    let mut compact = String::new();
    let mut lines = Vec::new();
    let mut line = 1;
    for ch in text.chars() {
        if ch == '\n' {
            line += 1;
        }
        if !ch.is_whitespace() {
            compact.push(ch);
            lines.push(line);
        }
    }
    compact.find(&needle).map(|pos| lines[pos])
}

/// Parses and validates a graph. Syntax errors carry the serde line;
/// invariant violations point at the offending edge or vertex line.
pub fn graph_from_json(text: &str) -> Result<TieredGraph> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::json("graph", e))?;
    for (pos, v) in file.vertices.iter().enumerate() {
        if v.id != pos {
            return Err(Error::Parse {
                context: "graph".into(),
                line: vertex_line(text, v.id).unwrap_or(0),
                message: format!("vertex at position {pos} has id {}; ids must be dense and ordered", v.id),
            });
        }
    }
    // edge-local checks first so the error can name a line
    let n = file.vertices.len();
    let located = |a: usize, b: usize, message: String| Error::Parse {
        context: "graph".into(),
        line: edge_line(text, a, b).unwrap_or(0),
        message,
    };
    for &(a, b) in file.directed.iter().chain(file.bidirected.iter()) {
        if a >= n || b >= n {
            return Err(located(a, b, format!("edge [{a}, {b}] references an unknown vertex")));
        }
        if a == b {
            return Err(located(a, b, format!("self loop on vertex {a}")));
        }
    }
    for &(a, b) in &file.directed {
        let single = TieredGraph::new(
            file.vertices.clone(),
            [(a, b)],
            std::iter::empty(),
        );
        if let Err(Error::InvalidGraph(msg)) = single {
            if !msg.contains("children") {
                return Err(located(a, b, msg));
            }
        }
    }
    TieredGraph::new(file.vertices, file.directed, file.bidirected).map_err(|e| match e {
        Error::InvalidGraph(message) => Error::Parse {
            context: "graph".into(),
            line: 0,
            message,
        },
        other => other,
    })
}

/// Serializes with one vertex or edge per line.
pub fn graph_to_json(g: &TieredGraph) -> String {
    let file = GraphFile::from(g);
    let mut out = String::from("{\n  \"vertices\": [\n");
    let items: Vec<String> = file
        .vertices
        .iter()
        .map(|v| format!("    {}", serde_json::to_string(v).expect("vertex serializes")))
        .collect();
    out.push_str(&items.join(",\n"));
    out.push_str("\n  ],\n");
    for (key, edges, last) in [
        ("directed", &file.directed, false),
        ("bidirected", &file.bidirected, true),
    ] {
        out.push_str(&format!("  \"{key}\": ["));
        if !edges.is_empty() {
            out.push('\n');
            let items: Vec<String> = edges.iter().map(|(a, b)| format!("    [{a}, {b}]")).collect();
            out.push_str(&items.join(",\n"));
            out.push_str("\n  ");
        }
        out.push(']');
        out.push_str(if last { "\n" } else { ",\n" });
    }
    out.push_str("}\n");
    out
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<TieredGraph> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_graph(path: impl AsRef<Path>, g: &TieredGraph) -> Result<()> {
    crate::harness::io::write_atomic(path.as_ref(), graph_to_json(g).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TieredGraph {
        let mut b = TieredGraph::builder();
        let z = b.background("Z1");
        let x1 = b.foreground("X1");
        let x2 = b.foreground("X2");
        b.edge(z, x1).edge(x1, x2).bidirected(x1, x2);
        b.build().unwrap()
    }

    #[test]
    fn round_trips() {
        let g = sample();
        let text = graph_to_json(&g);
        assert_eq!(graph_from_json(&text).unwrap(), g);
    }

    #[test]
    fn reports_line_of_bad_edge() {
        let text = r#"{
  "vertices": [
    {"id": 0, "name": "Z1", "tier": "background"},
    {"id": 1, "name": "X1", "tier": "foreground"}
  ],
  "directed": [
    [0, 1],
    [1, 0]
  ]
}"#;
        match graph_from_json(text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 8, "{message}");
                assert!(message.contains("foreground into the background"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_syntax_line() {
        let text = "{\n  \"vertices\": [\n    {\"id\": 0, \"name\": \"Z\", \"tier\": \"middle\"}\n  ]\n}";
        match graph_from_json(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let text = r#"{"vertices": [
  {"id": 0, "name": "X1", "tier": "foreground"},
  {"id": 1, "name": "X2", "tier": "foreground"}],
  "directed": [[0, 1], [1, 0]]}"#;
        assert!(matches!(graph_from_json(text), Err(Error::Parse { .. })));
    }
}

//! DOT import/export for [`Cfg`]. The dialect is the subset the rest of the
//! tooling consumes: one node or edge statement per line, `label` and
//! `entry=true` node attributes, `pred="cN: <constraint>"` and `opaque=true`
//! edge attributes. Round-trips are lossless for blocks, edges, predicates,
//! and the entry designation.

use crate::cfg::{BlockId, Cfg, Edge, EdgeKind, EdgePredicate};
use crate::constraint::parse_constraint;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DotError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown node `{name}`")]
    UnknownNode { line: usize, name: String },
    #[error("no node carries entry=true")]
    MissingEntry,
    #[error("line {line}: second entry node `{name}` (entry already designated)")]
    MultipleEntries { line: usize, name: String },
    #[error("graph rejected: {0}")]
    Invalid(#[from] crate::cfg::CfgError),
}

/// Serializes a graph to canonical DOT: nodes in id order, then edges in
/// (from, to) order.
pub fn export_dot(cfg: &Cfg) -> String {
    let mut out = String::from("digraph cfg {\n");
    for b in cfg.blocks() {
        let mut attrs = format!("label=\"{}\"", cfg.name(b));
        if b == cfg.entry() {
            attrs.push_str(", entry=true");
        }
        let _ = writeln!(out, "  n{} [{}];", b.0, attrs);
    }
    let mut edges: Vec<&Edge> = cfg.edges().iter().collect();
    edges.sort_by_key(|e| (e.from, e.to));
    for e in edges {
        match &e.kind {
            EdgeKind::Unconditional => {
                let _ = writeln!(out, "  n{} -> n{};", e.from.0, e.to.0);
            }
            EdgeKind::Predicated(p) => {
                let _ = writeln!(
                    out,
                    "  n{} -> n{} [pred=\"{}: {}\"];",
                    e.from.0, e.to.0, p.id, p.constraint
                );
            }
            EdgeKind::Opaque => {
                let _ = writeln!(out, "  n{} -> n{} [opaque=true];", e.from.0, e.to.0);
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Parses the DOT dialect back into a validated [`Cfg`].
pub fn import_dot(text: &str) -> Result<Cfg, DotError> {
    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, BlockId> = HashMap::new();
    let mut entry: Option<BlockId> = None;
    let mut edges: Vec<Edge> = Vec::new();
    let mut in_graph = false;
    let mut seen_close = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let stmt = raw.trim().trim_end_matches(';').trim();
        if stmt.is_empty() || stmt.starts_with("//") || stmt.starts_with('#') {
            continue;
        }
        if !in_graph {
            if stmt.starts_with("digraph") && stmt.ends_with('{') {
                in_graph = true;
                continue;
            }
            return Err(DotError::Syntax {
                line,
                msg: "expected `digraph <name> {`".into(),
            });
        }
        if stmt == "}" {
            seen_close = true;
            continue;
        }
        if seen_close {
            return Err(DotError::Syntax {
                line,
                msg: "statement after closing brace".into(),
            });
        }
        let (head, attrs) = split_attrs(stmt, line)?;
        if let Some((from, to)) = head.split_once("->") {
            let from = from.trim();
            let to = to.trim();
            let from_id = *ids.get(from).ok_or_else(|| DotError::UnknownNode {
                line,
                name: from.to_string(),
            })?;
            let to_id = *ids.get(to).ok_or_else(|| DotError::UnknownNode {
                line,
                name: to.to_string(),
            })?;
            let mut kind = EdgeKind::Unconditional;
            for (key, value) in &attrs {
                match key.as_str() {
                    "pred" => {
                        let (id, body) =
                            value.split_once(':').ok_or_else(|| DotError::Syntax {
                                line,
                                msg: format!("pred `{value}` must be `cN: <constraint>`"),
                            })?;
                        let constraint =
                            parse_constraint(body.trim()).map_err(|e| DotError::Syntax {
                                line,
                                msg: e.to_string(),
                            })?;
                        kind = EdgeKind::Predicated(EdgePredicate {
                            id: id.trim().to_string(),
                            constraint,
                        });
                    }
                    "opaque" if value == "true" => kind = EdgeKind::Opaque,
                    other => {
                        return Err(DotError::Syntax {
                            line,
                            msg: format!("unknown edge attribute `{other}`"),
                        })
                    }
                }
            }
            edges.push(Edge {
                from: from_id,
                to: to_id,
                kind,
            });
        } else {
            let name = head.trim();
            if name.is_empty() {
                return Err(DotError::Syntax {
                    line,
                    msg: "empty node name".into(),
                });
            }
            let id = BlockId(names.len() as u32);
            if ids.insert(name.to_string(), id).is_some() {
                return Err(DotError::Syntax {
                    line,
                    msg: format!("node `{name}` declared twice"),
                });
            }
            let mut label = name.to_string();
            for (key, value) in &attrs {
                match key.as_str() {
                    "label" => label = value.clone(),
                    "entry" if value == "true" => {
                        if entry.is_some() {
                            return Err(DotError::MultipleEntries {
                                line,
                                name: name.to_string(),
                            });
                        }
                        entry = Some(id);
                    }
                    other => {
                        return Err(DotError::Syntax {
                            line,
                            msg: format!("unknown node attribute `{other}`"),
                        })
                    }
                }
            }
            names.push(label);
        }
    }

    let entry = entry.ok_or(DotError::MissingEntry)?;
    Ok(Cfg::new(names, entry, edges)?)
}

/// Splits `head [k=v, k="v"]` into the head text and attribute pairs.
fn split_attrs(stmt: &str, line: usize) -> Result<(String, Vec<(String, String)>), DotError> {
    let Some(open) = stmt.find('[') else {
        return Ok((stmt.to_string(), Vec::new()));
    };
    let close = stmt.rfind(']').ok_or_else(|| DotError::Syntax {
        line,
        msg: "unterminated attribute list".into(),
    })?;
    let head = stmt[..open].to_string();
    let body = &stmt[open + 1..close];
    let mut attrs = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| DotError::Syntax {
            line,
            msg: format!("attribute without `=` in `{body}`"),
        })?;
        let key = rest[..eq].trim().to_string();
        rest = rest[eq + 1..].trim_start();
        let value;
        if let Some(stripped) = rest.strip_prefix('"') {
            let end = stripped.find('"').ok_or_else(|| DotError::Syntax {
                line,
                msg: "unterminated string attribute".into(),
            })?;
            value = stripped[..end].to_string();
            rest = stripped[end + 1..].trim_start().trim_start_matches(',');
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            value = rest[..end].trim().to_string();
            rest = &rest[end.min(rest.len())..];
            rest = rest.strip_prefix(',').unwrap_or(rest);
        }
        rest = rest.trim_start();
        attrs.push((key, value));
    }
    Ok((head, attrs))
}

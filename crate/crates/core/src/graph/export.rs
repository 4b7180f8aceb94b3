//! GraphML and DOT serialisation for external renderers.

use std::collections::BTreeMap;
use std::io::Write;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::{DiscourseGraph, GraphKind};
use crate::error::{Error, Result};
use crate::ingest::Actor;
use crate::types::{ActorId, Window};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub kind: Option<String>,
    pub role: Option<String>,
    pub party: Option<String>,
    pub follower_count: Option<u64>,
    pub cluster: Option<String>,
}

pub type NodeAttributeMap = BTreeMap<ActorId, NodeAttributes>;

pub fn attributes_from_roster(roster: &[Actor]) -> NodeAttributeMap {
    roster
        .iter()
        .map(|a| {
            (
                a.actor_id.clone(),
                NodeAttributes {
                    kind: Some(a.kind.as_str().into()),
                    role: Some(a.role.as_str().into()),
                    party: a.party.clone(),
                    follower_count: Some(a.follower_count),
                    cluster: None,
                },
            )
        })
        .collect()
}

const NODE_KEYS: [(&str, &str); 5] = [
    ("kind", "string"),
    ("role", "string"),
    ("party", "string"),
    ("follower_count", "long"),
    ("cluster", "string"),
];

fn io_err(e: std::io::Error) -> Error {
    Error::io("<graph sink>", e)
}

pub fn write_graphml<W: Write>(mut w: W, graph: &DiscourseGraph, attrs: &NodeAttributeMap) -> Result<()> {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, ty) in [("graph_kind", "string"), ("window_start", "long"), ("window_end", "long")] {
        s.push_str(&format!("  <key id=\"{id}\" for=\"graph\" attr.name=\"{id}\" attr.type=\"{ty}\"/>\n"));
    }
    for (id, ty) in NODE_KEYS {
        s.push_str(&format!("  <key id=\"{id}\" for=\"node\" attr.name=\"{id}\" attr.type=\"{ty}\"/>\n"));
    }
    s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"long\"/>\n");
    s.push_str("  <graph id=\"G\" edgedefault=\"directed\">\n");
    s.push_str(&format!("    <data key=\"graph_kind\">{}</data>\n", escape(graph.kind.to_string())));
    s.push_str(&format!("    <data key=\"window_start\">{}</data>\n", graph.window.start));
    s.push_str(&format!("    <data key=\"window_end\">{}</data>\n", graph.window.end));
    for node in graph.nodes() {
        let a = attrs.get(node).cloned().unwrap_or_default();
        let fields = [
            ("kind", a.kind),
            ("role", a.role),
            ("party", a.party),
            ("follower_count", a.follower_count.map(|f| f.to_string())),
            ("cluster", a.cluster),
        ];
        if fields.iter().all(|(_, v)| v.is_none()) {
            s.push_str(&format!("    <node id=\"{}\"/>\n", escape(node.as_str())));
            continue;
        }
        s.push_str(&format!("    <node id=\"{}\">\n", escape(node.as_str())));
        for (k, v) in fields {
            if let Some(v) = v {
                s.push_str(&format!("      <data key=\"{k}\">{}</data>\n", escape(v.as_str())));
            }
        }
        s.push_str("    </node>\n");
    }
    for (i, j, wt) in graph.edges() {
        s.push_str(&format!(
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{wt}</data></edge>\n",
            escape(graph.nodes()[i].as_str()),
            escape(graph.nodes()[j].as_str())
        ));
    }
    s.push_str("  </graph>\n</graphml>\n");
    w.write_all(s.as_bytes()).map_err(io_err)
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn write_dot<W: Write>(mut w: W, graph: &DiscourseGraph, attrs: &NodeAttributeMap) -> Result<()> {
    let mut s = format!("digraph {} {{\n", dot_quote(&graph.kind.to_string()));
    for node in graph.nodes() {
        let a = attrs.get(node).cloned().unwrap_or_default();
        let mut parts = Vec::new();
        for (k, v) in [("kind", a.kind), ("role", a.role), ("party", a.party), ("cluster", a.cluster)] {
            if let Some(v) = v {
                parts.push(format!("{k}={}", dot_quote(&v)));
            }
        }
        if let Some(f) = a.follower_count {
            parts.push(format!("follower_count={f}"));
        }
        if parts.is_empty() {
            s.push_str(&format!("  {};\n", dot_quote(node)));
        } else {
            s.push_str(&format!("  {} [{}];\n", dot_quote(node), parts.join(", ")));
        }
    }
    for (i, j, wt) in graph.edges() {
        s.push_str(&format!(
            "  {} -> {} [weight={wt}];\n",
            dot_quote(&graph.nodes()[i]),
            dot_quote(&graph.nodes()[j])
        ));
    }
    s.push_str("}\n");
    w.write_all(s.as_bytes()).map_err(io_err)
}

fn xml_err(e: impl std::fmt::Display) -> Error {
    Error::GraphMl(e.to_string())
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>> {
    match e.try_get_attribute(name).map_err(xml_err)? {
        Some(a) => Ok(Some(a.unescape_value().map_err(xml_err)?.into_owned())),
        None => Ok(None),
    }
}

enum Owner {
    Graph,
    Node(String),
    Edge(usize),
}

/// Reads a GraphML document written by [`write_graphml`] (or any GraphML
/// using the same attribute names).
pub fn read_graphml(text: &str) -> Result<(DiscourseGraph, NodeAttributeMap)> {
    let mut reader = Reader::from_str(text);

    let mut key_names: BTreeMap<String, String> = BTreeMap::new();
    let mut graph_data: BTreeMap<String, String> = BTreeMap::new();
    let mut nodes: Vec<String> = Vec::new();
    let mut node_attrs = NodeAttributeMap::new();
    let mut edges: Vec<(String, String, u64)> = Vec::new();
    let mut owner: Option<Owner> = None;
    let mut data_key: Option<String> = None;
    let mut text_buf = String::new();
    let mut in_graph = false;

    loop {
        let ev = reader.read_event().map_err(xml_err)?;
        let (start, empty) = match &ev {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            match e.local_name().as_ref() {
                b"key" => {
                    let id = attr(&e, "id")?.ok_or_else(|| xml_err("key without id"))?;
                    let name = attr(&e, "attr.name")?.unwrap_or_else(|| id.clone());
                    key_names.insert(id, name);
                }
                b"graph" => {
                    if let Some(d) = attr(&e, "edgedefault")? {
                        if d != "directed" {
                            return Err(xml_err("only directed graphs are supported"));
                        }
                    }
                    in_graph = !empty;
                    owner = Some(Owner::Graph);
                }
                b"node" => {
                    let id = attr(&e, "id")?.ok_or_else(|| xml_err("node without id"))?;
                    nodes.push(id.clone());
                    if !empty {
                        owner = Some(Owner::Node(id));
                    }
                }
                b"edge" => {
                    let s = attr(&e, "source")?.ok_or_else(|| xml_err("edge without source"))?;
                    let t = attr(&e, "target")?.ok_or_else(|| xml_err("edge without target"))?;
                    edges.push((s, t, 1));
                    if !empty {
                        owner = Some(Owner::Edge(edges.len() - 1));
                    }
                }
                b"data" => {
                    data_key = attr(&e, "key")?;
                    text_buf.clear();
                }
                _ => {}
            }
            continue;
        }
        match ev {
            Event::Text(t) => {
                if data_key.is_some() {
                    text_buf.push_str(&t.decode().map_err(xml_err)?);
                }
            }
            Event::GeneralRef(r) => {
                if data_key.is_some() {
                    if let Some(c) = r.resolve_char_ref().map_err(xml_err)? {
                        text_buf.push(c);
                    } else {
                        let name = r.decode().map_err(xml_err)?;
                        text_buf.push(match name.as_ref() {
                            "amp" => '&',
                            "lt" => '<',
                            "gt" => '>',
                            "quot" => '"',
                            "apos" => '\'',
                            other => return Err(xml_err(format!("unknown entity &{other};"))),
                        });
                    }
                }
            }
            Event::End(e) => match e.local_name().as_ref() {
                b"data" => {
                    let key = data_key.take().unwrap_or_default();
                    let name = key_names.get(&key).cloned().unwrap_or(key);
                    let value = std::mem::take(&mut text_buf);
                    match &owner {
                        Some(Owner::Graph) => {
                            graph_data.insert(name, value);
                        }
                        Some(Owner::Node(id)) => {
                            let a = node_attrs.entry(id.clone()).or_default();
                            match name.as_str() {
                                "kind" => a.kind = Some(value),
                                "role" => a.role = Some(value),
                                "party" => a.party = Some(value),
                                "cluster" => a.cluster = Some(value),
                                "follower_count" => {
                                    a.follower_count = Some(value.trim().parse().map_err(xml_err)?)
                                }
                                _ => {}
                            }
                        }
                        Some(Owner::Edge(k)) => {
                            if name == "weight" {
                                let w: f64 = value.trim().parse().map_err(xml_err)?;
                                if w < 1.0 || w.fract() != 0.0 {
                                    return Err(xml_err(format!("edge weight `{value}` is not a positive integer")));
                                }
                                edges[*k].2 = w as u64;
                            }
                        }
                        None => {}
                    }
                }
                b"node" | b"edge" => owner = in_graph.then_some(Owner::Graph),
                b"graph" => {
                    in_graph = false;
                    owner = None;
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }

    let kind = match graph_data.get("graph_kind") {
        Some(k) => k.parse()?,
        None => GraphKind::Full,
    };
    let parse_ts = |k: &str| -> Result<Option<i64>> {
        graph_data
            .get(k)
            .map(|v| v.trim().parse::<i64>().map_err(xml_err))
            .transpose()
    };
    let window = match (parse_ts("window_start")?, parse_ts("window_end")?) {
        (Some(s), Some(e)) => Window::new(s, e)?,
        _ => Window {
            start: i64::MIN,
            end: i64::MAX,
        },
    };
    let graph = DiscourseGraph::from_edges(kind, window, nodes, &edges)?;
    Ok((graph, node_attrs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (DiscourseGraph, NodeAttributeMap) {
        let g = DiscourseGraph::from_edges(
            GraphKind::Topic("cost & living".into()),
            Window { start: 0, end: 86_400 },
            ["iso<late>"],
            &[("a\"1", "b", 3), ("b", "c", 1)],
        )
        .unwrap();
        let mut attrs = NodeAttributeMap::new();
        attrs.insert(
            "a\"1".into(),
            NodeAttributes {
                kind: Some("mp".into()),
                role: Some("cabinet".into()),
                party: Some("Con & Co".into()),
                follower_count: Some(12),
                cluster: Some("leader".into()),
            },
        );
        (g, attrs)
    }

    #[test]
    fn graphml_round_trip() {
        let (g, attrs) = sample();
        let mut buf = Vec::new();
        write_graphml(&mut buf, &g, &attrs).unwrap();
        let (back, back_attrs) = read_graphml(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back_attrs, attrs);
    }

    #[test]
    fn dot_contains_weights_and_attributes() {
        let (g, attrs) = sample();
        let mut buf = Vec::new();
        write_dot(&mut buf, &g, &attrs).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("digraph \"topic:cost & living\" {"));
        assert!(s.contains("\"a\\\"1\" -> \"b\" [weight=3];"));
        assert!(s.contains("follower_count=12"));
        assert!(s.contains("\"iso<late>\";"));
    }

    #[test]
    fn rejects_undirected_and_bad_weights() {
        let undirected = r#"<graphml><graph edgedefault="undirected"></graph></graphml>"#;
        assert!(read_graphml(undirected).is_err());
        let frac = r#"<graphml><key id="w" for="edge" attr.name="weight"/><graph edgedefault="directed">
            <edge source="a" target="b"><data key="w">1.5</data></edge></graph></graphml>"#;
        assert!(read_graphml(frac).is_err());
    }
}

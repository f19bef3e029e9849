//! GEXF 1.2 writer/reader and a DOT writer, for external layout tools.

use std::collections::BTreeMap;
use std::io::Write;

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use super::{GraphError, NodeKind, Partition, WeightedGraph};

const COMMUNITY_ATTR: &str = "0";
const KIND_ATTR: &str = "1";

fn xml_err(e: impl std::fmt::Display) -> GraphError {
    GraphError::Gexf(e.to_string())
}

/// Serialise `graph` with each node's community (from `partition`) and kind
/// as node attributes and edge weights as `weight`.
pub fn write_gexf<W: Write>(graph: &WeightedGraph, partition: &Partition, out: W) -> Result<(), GraphError> {
    for n in graph.nodes() {
        if !partition.community_of.contains_key(&n.id) {
            return Err(GraphError::Uncovered(n.id.clone()));
        }
    }
    let mut w = Writer::new_with_indent(out, b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.write_event(Event::Start(
        BytesStart::new("gexf").with_attributes([("xmlns", "http://gexf.net/1.2"), ("version", "1.2")]),
    ))?;
    w.create_element("meta").write_inner_content(|w| {
        w.create_element("creator").write_text_content(BytesText::new("imgspread"))?;
        w.create_element("description")
            .write_text_content(BytesText::new(&format!("modularity={}", partition.modularity)))?;
        Ok(())
    })?;
    w.write_event(Event::Start(
        BytesStart::new("graph").with_attributes([("mode", "static"), ("defaultedgetype", "undirected")]),
    ))?;
    w.create_element("attributes")
        .with_attributes([("class", "node")])
        .write_inner_content(|w| {
            w.create_element("attribute")
                .with_attributes([("id", COMMUNITY_ATTR), ("title", "community"), ("type", "integer")])
                .write_empty()?;
            w.create_element("attribute")
                .with_attributes([("id", KIND_ATTR), ("title", "kind"), ("type", "string")])
                .write_empty()?;
            Ok(())
        })?;

    w.write_event(Event::Start(BytesStart::new("nodes")))?;
    for n in graph.nodes() {
        let community = partition.community_of[&n.id].to_string();
        w.create_element("node")
            .with_attributes([("id", n.id.as_str()), ("label", n.label.as_str())])
            .write_inner_content(|w| {
                w.create_element("attvalues").write_inner_content(|w| {
                    w.create_element("attvalue")
                        .with_attributes([("for", COMMUNITY_ATTR), ("value", community.as_str())])
                        .write_empty()?;
                    w.create_element("attvalue")
                        .with_attributes([("for", KIND_ATTR), ("value", n.kind.as_str())])
                        .write_empty()?;
                    Ok(())
                })?;
                Ok(())
            })?;
    }
    w.write_event(Event::End(BytesEnd::new("nodes")))?;

    w.write_event(Event::Start(BytesStart::new("edges")))?;
    for (i, e) in graph.edges().iter().enumerate() {
        let nodes = graph.nodes();
        w.create_element("edge")
            .with_attributes([
                ("id", i.to_string().as_str()),
                ("source", nodes[e.u].id.as_str()),
                ("target", nodes[e.v].id.as_str()),
                ("weight", e.weight.to_string().as_str()),
            ])
            .write_empty()?;
    }
    w.write_event(Event::End(BytesEnd::new("edges")))?;
    w.write_event(Event::End(BytesEnd::new("graph")))?;
    w.write_event(Event::End(BytesEnd::new("gexf")))?;
    w.into_inner().write_all(b"\n")?;
    Ok(())
}

fn attrs(e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, GraphError> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(xml_err)?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

struct PendingNode {
    id: String,
    label: String,
    community: Option<usize>,
    kind: Option<NodeKind>,
}

fn pending_node(e: &BytesStart<'_>) -> Result<PendingNode, GraphError> {
    let a = attrs(e)?;
    let id = a.get("id").cloned().ok_or_else(|| GraphError::Gexf("node without id".into()))?;
    Ok(PendingNode {
        label: a.get("label").cloned().unwrap_or_else(|| id.clone()),
        id,
        community: None,
        kind: None,
    })
}

/// Parse a document produced by [`write_gexf`] back into a graph and partition.
pub fn read_gexf(text: &str) -> Result<(WeightedGraph, Partition), GraphError> {
    let mut reader = Reader::from_str(text);
    let mut graph = WeightedGraph::new();
    let mut community_of = BTreeMap::new();
    let mut modularity = 0.0;
    let mut in_description = false;
    let mut pending: Option<PendingNode> = None;

    let mut finish = |p: PendingNode, graph: &mut WeightedGraph| -> Result<(), GraphError> {
        let community = p
            .community
            .ok_or_else(|| GraphError::Gexf(format!("node {:?} lacks a community", p.id)))?;
        graph.add_node(p.id.clone(), p.kind.unwrap_or(NodeKind::Cluster), p.label)?;
        community_of.insert(p.id, community);
        Ok(())
    };

    loop {
        match reader.read_event().map_err(xml_err)? {
            Event::Eof => break,
            Event::Start(e) if e.name().as_ref() == b"node" => pending = Some(pending_node(&e)?),
            // an empty <node/> carries no attvalues, so no community either
            Event::Empty(e) if e.name().as_ref() == b"node" => finish(pending_node(&e)?, &mut graph)?,
            Event::End(e) if e.name().as_ref() == b"node" => {
                if let Some(p) = pending.take() {
                    finish(p, &mut graph)?;
                }
            }
            Event::Empty(e) if e.name().as_ref() == b"attvalue" => {
                let a = attrs(&e)?;
                if let Some(p) = pending.as_mut() {
                    match (a.get("for").map(String::as_str), a.get("value")) {
                        (Some(COMMUNITY_ATTR), Some(v)) => {
                            p.community = Some(v.parse().map_err(|_| GraphError::Gexf(format!("bad community {v:?}")))?)
                        }
                        (Some(KIND_ATTR), Some(v)) => p.kind = NodeKind::parse(v),
                        _ => {}
                    }
                }
            }
            Event::Empty(e) if e.name().as_ref() == b"edge" => {
                let a = attrs(&e)?;
                let get = |k: &str| a.get(k).ok_or_else(|| GraphError::Gexf(format!("edge without {k}")));
                let weight: f64 = match a.get("weight") {
                    Some(w) => w.parse().map_err(|_| GraphError::Gexf(format!("bad weight {w:?}")))?,
                    None => 1.0,
                };
                graph.add_edge(get("source")?, get("target")?, weight)?;
            }
            Event::Start(e) if e.name().as_ref() == b"description" => in_description = true,
            Event::End(e) if e.name().as_ref() == b"description" => in_description = false,
            Event::Text(t) if in_description => {
                let s = t.decode().map_err(xml_err)?;
                if let Some(v) = s.trim().strip_prefix("modularity=") {
                    modularity = v.parse().map_err(|_| GraphError::Gexf(format!("bad modularity {v:?}")))?;
                }
            }
            _ => {}
        }
    }
    Ok((graph, Partition { community_of, modularity }))
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz rendering with `community` and `weight` attributes.
pub fn to_dot(graph: &WeightedGraph, partition: &Partition) -> String {
    let mut out = String::from("graph G {\n");
    for n in graph.nodes() {
        let c = partition.community_of.get(&n.id).copied().unwrap_or(0);
        out.push_str(&format!(
            "  {} [label={}, kind={}, community={}];\n",
            dot_quote(&n.id),
            dot_quote(&n.label),
            n.kind.as_str(),
            c
        ));
    }
    for e in graph.edges() {
        out.push_str(&format!(
            "  {} -- {} [weight={}];\n",
            dot_quote(&graph.nodes()[e.u].id),
            dot_quote(&graph.nodes()[e.v].id),
            e.weight
        ));
    }
    out.push_str("}\n");
    out
}

impl From<quick_xml::Error> for GraphError {
    fn from(e: quick_xml::Error) -> Self {
        xml_err(e)
    }
}

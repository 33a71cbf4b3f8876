//! Edge-list (TSV) and GraphML export of the category/object graph.
//!
//! TSV columns: `source target weight source_type target_type
//! source_community target_community`. Sources are category names; targets
//! are `class_id:name`. A category without edges gets one row with empty
//! target fields so the vertex survives a reimport.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use adscope_core::catgraph::{CategoryObjectGraph, CommunityPartition, ObjectVertex};
use thiserror::Error;

pub const TSV_HEADER: &str =
    "source\ttarget\tweight\tsource_type\ttarget_type\tsource_community\ttarget_community";

#[derive(Debug, Error, PartialEq)]
pub enum ImportError {
    #[error("missing or unexpected header")]
    Header,
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] adscope_core::catgraph::GraphError),
}

pub fn edges_tsv(graph: &CategoryObjectGraph, partition: &CommunityPartition) -> String {
    let community = &partition.community_of;
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    let mut edges = graph.edges().iter().peekable();
    for (c, name) in graph.categories().iter().enumerate() {
        let source_community = community[graph.category_vertex(c)];
        let mut any = false;
        while let Some(e) = edges.next_if(|e| e.category == c) {
            any = true;
            let object = &graph.objects()[e.object];
            let _ = writeln!(
                out,
                "{name}\t{}:{}\t{:.6}\tcategory\tobject\t{source_community}\t{}",
                object.class_id,
                object.name,
                e.weight,
                community[graph.object_vertex(e.object)]
            );
        }
        if !any {
            let _ = writeln!(out, "{name}\t\t\tcategory\t\t{source_community}\t");
        }
    }
    out
}

fn row_error(line: usize, message: impl Into<String>) -> ImportError {
    ImportError::Row {
        line,
        message: message.into(),
    }
}

/// Rebuilds the graph and the per-vertex community labels from
/// [`edges_tsv`] output.
pub fn read_edges_tsv(text: &str) -> Result<(CategoryObjectGraph, Vec<usize>), ImportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TSV_HEADER => {}
        _ => return Err(ImportError::Header),
    }
    let mut categories: BTreeMap<String, usize> = BTreeMap::new();
    let mut objects: BTreeMap<u32, (String, usize)> = BTreeMap::new();
    let mut edges = Vec::new();
    for (index, row) in lines {
        let line = index + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 7 {
            return Err(row_error(
                line,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let community = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| row_error(line, format!("bad community {s:?}")))
        };
        let source = fields[0].to_string();
        categories.insert(source.clone(), community(fields[5])?);
        if fields[1].is_empty() {
            continue;
        }
        let (id, name) = fields[1]
            .split_once(':')
            .ok_or_else(|| row_error(line, "target is not class_id:name"))?;
        let class_id: u32 = id
            .parse()
            .map_err(|_| row_error(line, format!("bad class id {id:?}")))?;
        let weight: f64 = fields[2]
            .parse()
            .map_err(|_| row_error(line, format!("bad weight {:?}", fields[2])))?;
        objects.insert(class_id, (name.to_string(), community(fields[6])?));
        edges.push((source, class_id, weight));
    }
    let vertices: Vec<ObjectVertex> = objects
        .iter()
        .map(|(&class_id, (name, _))| ObjectVertex {
            class_id,
            name: name.clone(),
        })
        .collect();
    let graph =
        CategoryObjectGraph::from_parts(categories.keys().cloned().collect(), vertices, &edges)?;
    let community_of = categories
        .values()
        .copied()
        .chain(objects.values().map(|(_, c)| *c))
        .collect();
    Ok((graph, community_of))
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// GraphML document for network viewers. Node ids are `c:<category>` and
/// `o:<class_id>`.
pub fn graphml(graph: &CategoryObjectGraph, partition: &CommunityPartition) -> String {
    let community = &partition.community_of;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, target, name, ty) in [
        ("name", "node", "name", "string"),
        ("type", "node", "type", "string"),
        ("community", "node", "community", "int"),
        ("class_id", "node", "class_id", "int"),
        ("weight", "edge", "weight", "double"),
    ] {
        let _ = writeln!(
            out,
            "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{name}\" attr.type=\"{ty}\"/>"
        );
    }
    out.push_str("  <graph id=\"categories\" edgedefault=\"undirected\">\n");
    for (c, name) in graph.categories().iter().enumerate() {
        let name = xml_escape(name);
        let _ = writeln!(
            out,
            "    <node id=\"c:{name}\"><data key=\"name\">{name}</data><data key=\"type\">category</data><data key=\"community\">{}</data></node>",
            community[graph.category_vertex(c)]
        );
    }
    for (o, object) in graph.objects().iter().enumerate() {
        let _ = writeln!(
            out,
            "    <node id=\"o:{id}\"><data key=\"name\">{}</data><data key=\"type\">object</data><data key=\"community\">{}</data><data key=\"class_id\">{id}</data></node>",
            xml_escape(&object.name),
            community[graph.object_vertex(o)],
            id = object.class_id,
        );
    }
    for e in graph.edges() {
        let _ = writeln!(
            out,
            "    <edge source=\"c:{}\" target=\"o:{}\"><data key=\"weight\">{}</data></edge>",
            xml_escape(&graph.categories()[e.category]),
            graph.objects()[e.object].class_id,
            e.weight
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

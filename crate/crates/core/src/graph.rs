//! Components, bills of materials and the merged machine knowledge graph.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MkgError, Result};

/// Canonical part key: trimmed and upper-cased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PartIdentifier(String);

impl PartIdentifier {
    pub fn new(raw: &str) -> Result<Self> {
        normalize_part_id(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for PartIdentifier {
    type Error = MkgError;

    fn try_from(value: String) -> Result<Self> {
        normalize_part_id(&value)
    }
}

impl From<PartIdentifier> for String {
    fn from(value: PartIdentifier) -> Self {
        value.0
    }
}

pub fn normalize_part_id(raw: &str) -> Result<PartIdentifier> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(MkgError::InvalidIdentifier(raw.to_string()));
    }
    Ok(PartIdentifier(trimmed.to_uppercase()))
}

/// A metadata value. Units live under their own keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl AttrValue {
    /// Numeric reading of the value, if it is a number or a decimal string.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(v) if v.is_finite() => Some(*v),
            AttrValue::Number(_) => None,
            AttrValue::Text(s) => parse_decimal(s),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(v) => write!(f, "{v}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

/// Decimal-number grammar: optional sign, digits with at most one point,
/// optional exponent. Rejects things like "2.5 IN", "inf" or "0x10".
pub fn parse_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    let bytes = s.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let mut digits = 0;
    let mut seen_point = false;
    while i < bytes.len() {
        match bytes[i] {
            b'0'..=b'9' => digits += 1,
            b'.' if !seen_point => seen_point = true,
            _ => break,
        }
        i += 1;
    }
    if digits == 0 {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return None;
        }
    }
    if i != bytes.len() {
        return None;
    }
    s.parse().ok().filter(|v: &f64| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentNode {
    pub id: PartIdentifier,
    #[serde(rename = "type")]
    pub component_type: String,
    #[serde(rename = "meta", default)]
    pub metadata: BTreeMap<String, AttrValue>,
}

impl ComponentNode {
    pub fn new(id: PartIdentifier, component_type: impl Into<String>) -> Result<Self> {
        let component_type = component_type.into();
        if component_type.trim().is_empty() {
            return Err(MkgError::InvalidBom(format!("part {id} has an empty component type")));
        }
        Ok(Self {
            id,
            component_type,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: AttrValue) -> Self {
        self.metadata.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    ConnectedTo,
    SimilarTo,
}

impl RelationKind {
    pub const ALL: [RelationKind; 2] = [RelationKind::ConnectedTo, RelationKind::SimilarTo];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            RelationKind::ConnectedTo => 0,
            RelationKind::SimilarTo => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::ConnectedTo => "connectedTo",
            RelationKind::SimilarTo => "similarTo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: RelationKind,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: RelationKind, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomEdge {
    pub parent: PartIdentifier,
    pub child: PartIdentifier,
    pub quantity: u32,
}

/// One bill of materials: a rooted assembly hierarchy plus part payloads.
///
/// A part may be reached through more than one parent inside the same BOM
/// (shared fasteners and the like), so validation requires a rooted acyclic
/// structure rather than a strict tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomTree {
    pub root: PartIdentifier,
    pub edges: Vec<BomEdge>,
    pub parts: BTreeMap<PartIdentifier, ComponentNode>,
}

impl BomTree {
    pub fn validate(&self) -> Result<()> {
        if !self.parts.contains_key(&self.root) {
            return Err(MkgError::InvalidBom(format!("root {} has no payload", self.root)));
        }
        let mut seen = HashSet::new();
        let mut children: HashMap<&PartIdentifier, Vec<&PartIdentifier>> = HashMap::new();
        for e in &self.edges {
            if e.parent == e.child {
                return Err(MkgError::SelfLoop(e.parent.to_string()));
            }
            if e.quantity == 0 {
                return Err(MkgError::InvalidBom(format!(
                    "edge {} -> {} has zero quantity",
                    e.parent, e.child
                )));
            }
            for id in [&e.parent, &e.child] {
                if !self.parts.contains_key(id) {
                    return Err(MkgError::InvalidBom(format!("part {id} has no payload")));
                }
            }
            if e.child == self.root {
                return Err(MkgError::InvalidBom(format!("root {} has a parent", self.root)));
            }
            if !seen.insert((&e.parent, &e.child)) {
                return Err(MkgError::InvalidBom(format!(
                    "duplicate edge {} -> {}",
                    e.parent, e.child
                )));
            }
            children.entry(&e.parent).or_default().push(&e.child);
        }
        // Reachability from the root plus acyclicity via iterative DFS colouring.
        let mut state: HashMap<&PartIdentifier, u8> = HashMap::new();
        let mut stack = vec![(&self.root, 0usize)];
        state.insert(&self.root, 1);
        while let Some((node, next)) = stack.pop() {
            let kids = children.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if next < kids.len() {
                stack.push((node, next + 1));
                let kid = kids[next];
                match state.get(kid) {
                    Some(1) => {
                        return Err(MkgError::Cycle {
                            parent: node.to_string(),
                            child: kid.to_string(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        state.insert(kid, 1);
                        stack.push((kid, 0));
                    }
                }
            } else {
                state.insert(node, 2);
            }
        }
        for e in &self.edges {
            if !state.contains_key(&e.parent) {
                return Err(MkgError::InvalidBom(format!(
                    "part {} is not reachable from root {}",
                    e.parent, self.root
                )));
            }
        }
        Ok(())
    }

    /// Longest root-to-leaf path counted in levels (a lone root has depth 1).
    pub fn depth(&self) -> usize {
        let mut children: HashMap<&PartIdentifier, Vec<&PartIdentifier>> = HashMap::new();
        for e in &self.edges {
            children.entry(&e.parent).or_default().push(&e.child);
        }
        fn walk<'a>(
            n: &'a PartIdentifier,
            children: &HashMap<&'a PartIdentifier, Vec<&'a PartIdentifier>>,
            memo: &mut HashMap<&'a PartIdentifier, usize>,
        ) -> usize {
            if let Some(&d) = memo.get(n) {
                return d;
            }
            let d = 1 + children
                .get(n)
                .map(|ks| ks.iter().map(|k| walk(k, children, memo)).max().unwrap_or(0))
                .unwrap_or(0);
            memo.insert(n, d);
            d
        }
        walk(&self.root, &children, &mut HashMap::new())
    }
}

/// Result of one ingestion call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub nodes_added: usize,
    pub triples_added: usize,
    pub metadata_conflicts: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MachineKnowledgeGraph {
    nodes: Vec<ComponentNode>,
    index: HashMap<PartIdentifier, usize>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_adj: [Vec<Vec<usize>>; 2],
    in_adj: [Vec<Vec<usize>>; 2],
}

impl MachineKnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[ComponentNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &ComponentNode {
        &self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn index_of(&self, id: &PartIdentifier) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn resolve(&self, id: &PartIdentifier) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| MkgError::UnknownPart(id.to_string()))
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn successors(&self, node: usize, rel: RelationKind) -> &[usize] {
        &self.out_adj[rel.index()][node]
    }

    pub fn predecessors(&self, node: usize, rel: RelationKind) -> &[usize] {
        &self.in_adj[rel.index()][node]
    }

    pub fn triples_of(&self, rel: RelationKind) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.iter().filter(move |t| t.relation == rel)
    }

    pub fn count(&self, rel: RelationKind) -> usize {
        self.out_adj[rel.index()].iter().map(Vec::len).sum()
    }

    /// Inserts a node or merges its metadata onto the existing node with the
    /// same identifier. Existing values win on conflict.
    pub fn upsert_node(&mut self, node: &ComponentNode) -> (usize, IngestSummary) {
        let mut summary = IngestSummary::default();
        if let Some(&i) = self.index.get(&node.id) {
            let existing = &mut self.nodes[i];
            if existing.component_type != node.component_type {
                log::warn!(
                    "part {}: keeping type {:?}, ignoring {:?}",
                    node.id,
                    existing.component_type,
                    node.component_type
                );
                summary.metadata_conflicts += 1;
            }
            for (k, v) in &node.metadata {
                match existing.metadata.get(k) {
                    Some(old) if old != v => {
                        log::debug!("part {}: attribute {k} keeps {old}, ignoring {v}", node.id);
                        summary.metadata_conflicts += 1;
                    }
                    Some(_) => {}
                    None => {
                        existing.metadata.insert(k.clone(), v.clone());
                    }
                }
            }
            (i, summary)
        } else {
            let i = self.nodes.len();
            self.nodes.push(node.clone());
            self.index.insert(node.id.clone(), i);
            for r in 0..2 {
                self.out_adj[r].push(Vec::new());
                self.in_adj[r].push(Vec::new());
            }
            summary.nodes_added = 1;
            (i, summary)
        }
    }

    fn push_triple(&mut self, t: Triple) -> bool {
        if !self.triple_set.insert(t) {
            return false;
        }
        self.triples.push(t);
        self.out_adj[t.relation.index()][t.head].push(t.tail);
        self.in_adj[t.relation.index()][t.tail].push(t.head);
        true
    }

    /// Merges one BOM: parts are upserted, each parent→child edge becomes a
    /// connectedTo triple and quantities are dropped. On error the graph is
    /// left untouched.
    pub fn ingest_bom(&mut self, bom: &BomTree) -> Result<IngestSummary> {
        bom.validate()?;
        let edges: Vec<(PartIdentifier, PartIdentifier)> = bom
            .edges
            .iter()
            .map(|e| (e.parent.clone(), e.child.clone()))
            .collect();
        self.check_connections(&edges, Some(&bom.parts))?;

        let mut summary = IngestSummary::default();
        let mut order: Vec<&PartIdentifier> = vec![&bom.root];
        order.extend(bom.edges.iter().map(|e| &e.child));
        for id in order {
            let (_, s) = self.upsert_node(&bom.parts[id]);
            summary.nodes_added += s.nodes_added;
            summary.metadata_conflicts += s.metadata_conflicts;
        }
        for (p, c) in &edges {
            let t = Triple::new(self.index[p], RelationKind::ConnectedTo, self.index[c]);
            if self.push_triple(t) {
                summary.triples_added += 1;
            }
        }
        Ok(summary)
    }

    /// Adds connectedTo edges between parts that already exist in the graph.
    pub fn ingest_connections(
        &mut self,
        edges: &[(PartIdentifier, PartIdentifier)],
    ) -> Result<IngestSummary> {
        self.check_connections(edges, None)?;
        let mut summary = IngestSummary::default();
        for (p, c) in edges {
            let t = Triple::new(self.index[p], RelationKind::ConnectedTo, self.index[c]);
            if self.push_triple(t) {
                summary.triples_added += 1;
            }
        }
        Ok(summary)
    }

    /// Verifies that adding `edges` keeps the connectedTo subgraph acyclic.
    /// Parts not yet in the graph must be present in `pending`.
    fn check_connections<'a>(
        &self,
        edges: &'a [(PartIdentifier, PartIdentifier)],
        pending: Option<&BTreeMap<PartIdentifier, ComponentNode>>,
    ) -> Result<()> {
        let mut tentative: HashMap<&PartIdentifier, usize> = HashMap::new();
        let mut next = self.nodes.len();
        let mut resolve = |id: &'a PartIdentifier| -> Result<usize> {
            if let Some(&i) = self.index.get(id) {
                return Ok(i);
            }
            if pending.is_some_and(|p| p.contains_key(id)) {
                return Ok(*tentative.entry(id).or_insert_with(|| {
                    next += 1;
                    next - 1
                }));
            }
            Err(MkgError::UnknownPart(id.to_string()))
        };
        let mut new_edges = Vec::with_capacity(edges.len());
        for (p, c) in edges {
            if p == c {
                return Err(MkgError::SelfLoop(p.to_string()));
            }
            let (pi, ci) = (resolve(p)?, resolve(c)?);
            if !self.contains(&Triple::new(pi, RelationKind::ConnectedTo, ci)) {
                new_edges.push((pi, ci, p, c));
            }
        }
        if new_edges.is_empty() {
            return Ok(());
        }
        let mut extra: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(pi, ci, _, _) in &new_edges {
            extra.entry(pi).or_default().push(ci);
        }
        let starts: Vec<usize> = new_edges.iter().map(|e| e.1).collect();
        if !self.has_cycle_from(&starts, &extra) {
            return Ok(());
        }
        // Name the first edge whose addition closes a cycle.
        let mut partial: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(pi, ci, p, c) in &new_edges {
            partial.entry(pi).or_default().push(ci);
            if self.reaches(ci, pi, &partial) {
                return Err(MkgError::Cycle {
                    parent: p.to_string(),
                    child: c.to_string(),
                });
            }
        }
        Err(MkgError::Internal("cycle detected but no offending edge found".into()))
    }

    fn children_with<'a>(
        &'a self,
        n: usize,
        extra: &'a HashMap<usize, Vec<usize>>,
    ) -> impl Iterator<Item = usize> + 'a {
        let base: &[usize] = if n < self.nodes.len() {
            &self.out_adj[0][n]
        } else {
            &[]
        };
        base.iter()
            .copied()
            .chain(extra.get(&n).into_iter().flatten().copied())
    }

    fn has_cycle_from(&self, starts: &[usize], extra: &HashMap<usize, Vec<usize>>) -> bool {
        let mut state: HashMap<usize, u8> = HashMap::new();
        for &s in starts {
            if state.contains_key(&s) {
                continue;
            }
            state.insert(s, 1);
            let mut stack: Vec<(usize, Vec<usize>, usize)> =
                vec![(s, self.children_with(s, extra).collect(), 0)];
            while let Some(top) = stack.last_mut() {
                if top.2 < top.1.len() {
                    let kid = top.1[top.2];
                    top.2 += 1;
                    match state.get(&kid) {
                        Some(1) => return true,
                        Some(_) => {}
                        None => {
                            state.insert(kid, 1);
                            let kids = self.children_with(kid, extra).collect();
                            stack.push((kid, kids, 0));
                        }
                    }
                } else {
                    state.insert(top.0, 2);
                    stack.pop();
                }
            }
        }
        false
    }

    fn reaches(&self, from: usize, to: usize, extra: &HashMap<usize, Vec<usize>>) -> bool {
        let mut seen = HashSet::from([from]);
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            for k in self.children_with(n, extra) {
                if seen.insert(k) {
                    stack.push(k);
                }
            }
        }
        false
    }

    /// Adds one similarTo triple per pair (and the reverse when `symmetric`).
    pub fn ingest_substitutes(
        &mut self,
        pairs: &[(PartIdentifier, PartIdentifier)],
        symmetric: bool,
    ) -> Result<IngestSummary> {
        let mut resolved = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a == b {
                return Err(MkgError::SelfLoop(a.to_string()));
            }
            resolved.push((self.resolve(a)?, self.resolve(b)?));
        }
        let mut summary = IngestSummary::default();
        for (a, b) in resolved {
            if self.push_triple(Triple::new(a, RelationKind::SimilarTo, b)) {
                summary.triples_added += 1;
            }
            if symmetric && self.push_triple(Triple::new(b, RelationKind::SimilarTo, a)) {
                summary.triples_added += 1;
            }
        }
        Ok(summary)
    }

    /// Topological order of the connectedTo subgraph, or `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.in_adj[0][i].len()).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop() {
            order.push(v);
            for &c in &self.out_adj[0][v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Nodes with outgoing connectedTo edges and no parent: machine roots.
    pub fn configuration_roots(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.in_adj[0][i].is_empty() && !self.out_adj[0][i].is_empty())
            .collect()
    }

    /// Sorted distinct component types.
    pub fn component_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self
            .nodes
            .iter()
            .map(|n| n.component_type.clone())
            .collect();
        types.sort();
        types.dedup();
        types
    }

    /// Class index of every node, indexing into [`Self::component_types`].
    pub fn type_labels(&self) -> Vec<usize> {
        let types = self.component_types();
        let lookup: HashMap<&str, usize> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        self.nodes
            .iter()
            .map(|n| lookup[n.component_type.as_str()])
            .collect()
    }

    /// Stable content fingerprint over nodes and triples.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for n in &self.nodes {
            h.update(n.id.as_str().as_bytes());
            h.update([0]);
            h.update(n.component_type.as_bytes());
            h.update([0]);
            for (k, v) in &n.metadata {
                h.update(format!("{k}={v}\u{1}").as_bytes());
            }
        }
        for t in &self.triples {
            h.update(format!("{}:{}:{};", t.head, t.relation.index(), t.tail).as_bytes());
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub configurations: usize,
    pub entities: usize,
    pub entity_types: usize,
    pub relation_types: usize,
    pub connected_to_triples: usize,
    pub similar_to_triples: usize,
    pub node_features: usize,
}

/// Dataset summary; feature columns are counted with the vocabulary built
/// at `min_freq`.
pub fn graph_stats(graph: &MachineKnowledgeGraph, min_freq: usize) -> GraphStats {
    if graph.num_nodes() == 0 {
        return GraphStats::default();
    }
    let connected = graph.count(RelationKind::ConnectedTo);
    let similar = graph.count(RelationKind::SimilarTo);
    GraphStats {
        configurations: graph.configuration_roots().len(),
        entities: graph.num_nodes(),
        entity_types: graph.component_types().len(),
        relation_types: usize::from(connected > 0) + usize::from(similar > 0),
        connected_to_triples: connected,
        similar_to_triples: similar,
        node_features: crate::features::build_vocabulary(graph.nodes(), min_freq).num_columns(),
    }
}

//! Taxonomy representation, parsing and validation, plus routing of training
//! instances to per-node views.

use std::collections::HashMap;

use thiserror::Error;

/// Dense node index into a [`Hierarchy`]. Original file ids are kept
/// separately for I/O.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("empty taxonomy input")]
    EmptyInput,
    #[error("cycle detected at node {0}")]
    CycleDetected(u32),
    #[error("node {0} has multiple parents")]
    MultipleParents(u32),
    #[error("multiple roots: node {0} also has no parent")]
    MultipleRoots(u32),
    #[error("malformed taxonomy line {0}")]
    MalformedLine(usize),
    #[error("instance {0} is labeled with an id that is not a leaf of the hierarchy")]
    UnknownLabel(usize),
}

/// A rooted tree of internal nodes and leaf categories.
///
/// Node ids are remapped to dense `0..num_nodes()` indices; children lists
/// are ordered by ascending original id so traversal and argmax tie-breaking
/// are deterministic regardless of edge order in the input file.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    original_ids: Vec<u32>,
    index_of: HashMap<u32, NodeId>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    level: Vec<u32>,
    root: NodeId,
}

impl Hierarchy {
    /// Builds and validates a hierarchy from `(parent, child)` edge pairs.
    pub fn from_edges(edges: &[(u32, u32)]) -> Result<Self, HierarchyError> {
        if edges.is_empty() {
            return Err(HierarchyError::EmptyInput);
        }

        // Collect node ids in sorted order for a stable dense remapping.
        let mut ids: Vec<u32> = edges.iter().flat_map(|&(p, c)| [p, c]).collect();
        ids.sort_unstable();
        ids.dedup();
        let index_of: HashMap<u32, NodeId> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = ids.len();

        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(p, c) in edges {
            let pi = index_of[&p];
            let ci = index_of[&c];
            if parent[ci].is_some() {
                return Err(HierarchyError::MultipleParents(c));
            }
            parent[ci] = Some(pi);
            children[pi].push(ci);
        }
        // Children are kept sorted by original id; ids[] is sorted, so dense
        // order and original order coincide.
        for ch in &mut children {
            ch.sort_unstable();
        }

        let roots: Vec<NodeId> = (0..n).filter(|&i| parent[i].is_none()).collect();
        let root = match roots.len() {
            0 => return Err(Self::find_cycle(&ids, &parent)),
            1 => roots[0],
            _ => return Err(HierarchyError::MultipleRoots(ids[roots[1]])),
        };

        // Iterative BFS: computes levels and catches components detached from
        // the root (which, having parents, must contain a cycle).
        let mut level = vec![u32::MAX; n];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut seen = 1usize;
        while let Some(node) = queue.pop_front() {
            for &c in &children[node] {
                level[c] = level[node] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != n {
            return Err(Self::find_cycle(&ids, &parent));
        }

        Ok(Hierarchy {
            original_ids: ids,
            index_of,
            parent,
            children,
            level,
            root,
        })
    }

    /// Parses taxonomy text: one `parent child` pair per line, `#` comments
    /// and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, HierarchyError> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let edge = (|| {
                let p = it.next()?.parse::<u32>().ok()?;
                let c = it.next()?.parse::<u32>().ok()?;
                if it.next().is_some() {
                    return None;
                }
                Some((p, c))
            })();
            match edge {
                Some(e) => edges.push(e),
                None => return Err(HierarchyError::MalformedLine(lineno + 1)),
            }
        }
        Self::from_edges(&edges)
    }

    // Walks parent pointers from each unvisited node; a node revisited on
    // the current walk sits on a cycle. Walks that join already-explored
    // territory terminate without a verdict.
    fn find_cycle(ids: &[u32], parent: &[Option<NodeId>]) -> HierarchyError {
        let n = ids.len();
        let mut visited = vec![false; n];
        let mut on_path = vec![false; n];
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut path = Vec::new();
            let mut cur = start;
            loop {
                if on_path[cur] {
                    return HierarchyError::CycleDetected(ids[cur]);
                }
                if visited[cur] {
                    break;
                }
                visited[cur] = true;
                on_path[cur] = true;
                path.push(cur);
                match parent[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            for node in path {
                on_path[node] = false;
            }
        }
        unreachable!("find_cycle called without a cycle")
    }

    pub fn num_nodes(&self) -> usize {
        self.original_ids.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node]
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.children[node]
    }

    pub fn level(&self, node: NodeId) -> u32 {
        self.level[node]
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.children[node].is_empty()
    }

    pub fn original_id(&self, node: NodeId) -> u32 {
        self.original_ids[node]
    }

    pub fn node_of(&self, original_id: u32) -> Option<NodeId> {
        self.index_of.get(&original_id).copied()
    }

    pub fn height(&self) -> u32 {
        self.level.iter().copied().max().unwrap_or(0)
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes()).filter(|&n| !self.is_leaf(n))
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes()).filter(|&n| self.is_leaf(n))
    }

    pub fn num_internal(&self) -> usize {
        self.internal_nodes().count()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// Path of node ids from the root down to `node`, inclusive.
    pub fn path_from_root(&self, node: NodeId) -> Vec<NodeId> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Edge list in canonical `(parent, child)` original-id order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_nodes() - 1);
        for node in 0..self.num_nodes() {
            for &c in &self.children[node] {
                out.push((self.original_ids[node], self.original_ids[c]));
            }
        }
        out.sort_unstable();
        out
    }
}

/// The training instances routed through one internal node: each row pairs an
/// instance with the child branch on the path to its leaf label.
#[derive(Debug, Clone, Default)]
pub struct NodeTrainingView {
    pub node: NodeId,
    pub rows: Vec<(usize, NodeId)>,
}

impl NodeTrainingView {
    pub fn count(&self) -> usize {
        self.rows.len()
    }
}

/// Routes every instance to the view of each internal node on its label's
/// root path. Returns one view per node id; leaf entries stay empty.
pub fn build_node_views(
    h: &Hierarchy,
    labels: &[u32],
) -> Result<Vec<NodeTrainingView>, HierarchyError> {
    let mut views: Vec<NodeTrainingView> = (0..h.num_nodes())
        .map(|node| NodeTrainingView {
            node,
            rows: Vec::new(),
        })
        .collect();
    for (i, &label) in labels.iter().enumerate() {
        let leaf = match h.node_of(label) {
            Some(node) if h.is_leaf(node) => node,
            _ => return Err(HierarchyError::UnknownLabel(i)),
        };
        let mut cur = leaf;
        while let Some(p) = h.parent(cur) {
            views[p].rows.push((i, cur));
            cur = p;
        }
    }
    Ok(views)
}

//! Directed acyclic graphs and the graphical criteria built on them:
//! blocking, d-separation, proper causal paths, valid adjustment sets, the
//! counterfactual-invariance criterion and the duplicate-graph construction.
//!
//! Exogenous variables stay implicit in [`Dag`]; they are materialized as
//! nodes only by [`build_duplicate_graph`].

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{query, Error, Result};

/// On-disk graph layout: `{"nodes": [...], "edges": [[parent, child], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new<N, E, P, C>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator,
        N::Item: Into<String>,
        E: IntoIterator<Item = (P, C)>,
        P: Into<String>,
        C: Into<String>,
    {
        let names: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return query("empty node name");
            }
            if index.insert(name.clone(), i).is_some() {
                return query(format!("duplicate node `{name}`"));
            }
        }
        let mut parents = vec![Vec::new(); names.len()];
        let mut children = vec![Vec::new(); names.len()];
        for (p, c) in edges {
            let (p, c): (String, String) = (p.into(), c.into());
            let pi = *index.get(&p).ok_or_else(|| {
                Error::Query(format!("edge endpoint `{p}` is not a declared node"))
            })?;
            let ci = *index.get(&c).ok_or_else(|| {
                Error::Query(format!("edge endpoint `{c}` is not a declared node"))
            })?;
            if pi == ci {
                return query(format!("self-edge on `{p}`"));
            }
            if parents[ci].contains(&pi) {
                return query(format!("duplicate edge {p} -> {c}"));
            }
            parents[ci].push(pi);
            children[pi].push(ci);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let dag = Dag {
            names,
            index,
            parents,
            children,
        };
        if dag.try_topological_order().is_none() {
            return query("graph contains a directed cycle");
        }
        Ok(dag)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GraphSpec = serde_json::from_str(text)?;
        Dag::try_from(spec)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            nodes: self.names.clone(),
            edges: self.edges(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    /// Edges ordered by (parent, child) declaration index.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (p, kids) in self.children.iter().enumerate() {
            for &c in kids {
                out.push((self.names[p].clone(), self.names[c].clone()));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        match (self.index.get(parent), self.index.get(child)) {
            (Some(&p), Some(&c)) => self.parents[c].contains(&p),
            _ => false,
        }
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Query(format!("unknown node `{name}`")))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index_of(name)?;
        Ok(self.parents[i].iter().map(|&p| self.name(p)).collect())
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index_of(name)?;
        Ok(self.children[i].iter().map(|&c| self.name(c)).collect())
    }

    #[allow(dead_code)]
    pub(crate) fn parent_ids(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    #[allow(dead_code)]
    pub(crate) fn child_ids(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Kahn's algorithm; ties broken by declaration order.
    pub fn topological_order(&self) -> Vec<usize> {
        self.try_topological_order()
            .expect("Dag invariant: acyclic")
    }

    fn try_topological_order(&self) -> Option<Vec<usize>> {
        let n = self.names.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    fn ids(&self, set: &NodeSet) -> Result<Vec<usize>> {
        set.iter().map(|n| self.index_of(n)).collect()
    }

    fn mask(&self, set: &NodeSet) -> Result<Vec<bool>> {
        let mut m = vec![false; self.len()];
        for i in self.ids(set)? {
            m[i] = true;
        }
        Ok(m)
    }

    fn to_set(&self, mask: &[bool]) -> NodeSet {
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.names[i].clone())
            .collect()
    }

    /// Nodes reachable from `roots` along directed edges, roots included.
    /// Edges into nodes flagged in `cut_incoming` are ignored.
    fn reach_down(&self, roots: &[usize], cut_incoming: Option<&[bool]>) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = roots.to_vec();
        for &r in roots {
            seen[r] = true;
        }
        while let Some(v) = stack.pop() {
            for &c in &self.children[v] {
                if cut_incoming.is_some_and(|cut| cut[c]) || seen[c] {
                    continue;
                }
                seen[c] = true;
                stack.push(c);
            }
        }
        seen
    }

    fn reach_up(&self, roots: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = roots.to_vec();
        for &r in roots {
            seen[r] = true;
        }
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Renames every node through `f`; the structure is unchanged.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> Result<Dag> {
        let nodes: Vec<String> = self.names.iter().map(|n| f(n)).collect();
        let edges = self.edges().into_iter().map(|(p, c)| (f(&p), f(&c)));
        Dag::new(nodes, edges)
    }
}

impl TryFrom<GraphSpec> for Dag {
    type Error = Error;

    fn try_from(spec: GraphSpec) -> Result<Self> {
        Dag::new(spec.nodes, spec.edges)
    }
}

impl From<Dag> for GraphSpec {
    fn from(g: Dag) -> Self {
        g.to_spec()
    }
}

/// A set of node names. Membership in a particular graph is checked when the
/// set is used in a query.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<String>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(names: &[&str]) -> Self {
        names.iter().copied().collect()
    }

    pub fn insert(&mut self, name: impl Into<String>) -> bool {
        self.0.insert(name.into())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &NodeSet) -> NodeSet {
        self.0.union(&other.0).cloned().collect()
    }

    pub fn difference(&self, other: &NodeSet) -> NodeSet {
        self.0.difference(&other.0).cloned().collect()
    }

    pub fn intersection(&self, other: &NodeSet) -> NodeSet {
        self.0.intersection(&other.0).cloned().collect()
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }
}

impl<S: Into<String>> FromIterator<S> for NodeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        NodeSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "}}")
    }
}

/// A sequence of at least two distinct nodes, consecutive ones adjacent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(Vec<String>);

impl Path {
    pub fn new(g: &Dag, nodes: Vec<String>) -> Result<Self> {
        Self::validate(g, &nodes)?;
        Ok(Path(nodes))
    }

    pub fn of(g: &Dag, nodes: &[&str]) -> Result<Self> {
        Self::new(g, nodes.iter().map(|s| s.to_string()).collect())
    }

    fn validate(g: &Dag, nodes: &[String]) -> Result<Vec<usize>> {
        if nodes.len() < 2 {
            return query("a path needs at least two nodes");
        }
        let ids: Vec<usize> = nodes.iter().map(|n| g.index_of(n)).collect::<Result<_>>()?;
        let distinct: BTreeSet<usize> = ids.iter().copied().collect();
        if distinct.len() != ids.len() {
            return query("path repeats a node");
        }
        for w in ids.windows(2) {
            if !g.parents[w[1]].contains(&w[0]) && !g.parents[w[0]].contains(&w[1]) {
                return query(format!(
                    "`{}` and `{}` are not adjacent",
                    g.name(w[0]),
                    g.name(w[1])
                ));
            }
        }
        Ok(ids)
    }

    fn from_ids(g: &Dag, ids: &[usize]) -> Self {
        Path(ids.iter().map(|&i| g.name(i).to_string()).collect())
    }

    pub fn nodes(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Renders the path with arrow directions taken from `g`.
    pub fn render(&self, g: &Dag) -> String {
        let mut out = self.0[0].clone();
        for w in self.0.windows(2) {
            let arrow = if g.has_edge(&w[0], &w[1]) { "->" } else { "<-" };
            out.push_str(&format!(" {arrow} {}", w[1]));
        }
        out
    }
}

/// Outcome of the graphical counterfactual-invariance check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub valid_adjustment: bool,
    pub parent_closure: bool,
    pub graphical_ok: bool,
    /// Injectivity of the mediator mechanism in its noise cannot be read off
    /// the graph; it is always reported as assumed.
    pub injectivity_assumed: bool,
    pub violations: Vec<String>,
}

/// Which non-causal paths clause (ii) of the adjustment criterion ranges over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentMode {
    /// Every non-causal path from the treatment set to the outcome set.
    #[default]
    Literal,
    /// Only paths meeting the treatment set at their first node.
    Proper,
}

pub fn descendants(g: &Dag, roots: &NodeSet) -> Result<NodeSet> {
    let ids = g.ids(roots)?;
    Ok(g.to_set(&g.reach_down(&ids, None)))
}

pub fn ancestors(g: &Dag, roots: &NodeSet) -> Result<NodeSet> {
    let ids = g.ids(roots)?;
    Ok(g.to_set(&g.reach_up(&ids)))
}

/// `s`-membership view used by the blocking rules: a collider is open iff it
/// is an ancestor-or-self of some conditioned node.
struct Conditioning {
    member: Vec<bool>,
    opens_collider: Vec<bool>,
}

impl Conditioning {
    fn new(g: &Dag, s: &NodeSet) -> Result<Self> {
        let ids = g.ids(s)?;
        let mut member = vec![false; g.len()];
        for &i in &ids {
            member[i] = true;
        }
        Ok(Conditioning {
            member,
            opens_collider: g.reach_up(&ids),
        })
    }

    fn blocks(&self, g: &Dag, prev: usize, mid: usize, next: usize) -> bool {
        let collider = g.parents[mid].contains(&prev) && g.parents[mid].contains(&next);
        if collider {
            !self.opens_collider[mid]
        } else {
            self.member[mid]
        }
    }
}

pub fn is_blocked(g: &Dag, path: &Path, s: &NodeSet) -> Result<bool> {
    let ids = Path::validate(g, &path.0)?;
    let cond = Conditioning::new(g, s)?;
    Ok(ids.windows(3).any(|t| cond.blocks(g, t[0], t[1], t[2])))
}

fn disjoint_or_err(x: &NodeSet, y: &NodeSet, what: &str) -> Result<()> {
    if !x.is_disjoint(y) {
        return query(format!("{what} overlap in {}", x.intersection(y)));
    }
    Ok(())
}

/// Reachability (Bayes-ball) d-separation test.
pub fn d_separated(g: &Dag, x: &NodeSet, y: &NodeSet, s: &NodeSet) -> Result<bool> {
    disjoint_or_err(x, y, "x and y")?;
    let xs = g.ids(x)?;
    let target = g.mask(y)?;
    let cond = Conditioning::new(g, s)?;

    // visited[v][0]: entered v from a child (moving up),
    // visited[v][1]: entered v from a parent (moving down).
    let mut visited = vec![[false; 2]; g.len()];
    let mut queue = VecDeque::new();
    for &v in &xs {
        for &p in &g.parents[v] {
            queue.push_back((p, 0usize));
        }
        for &c in &g.children[v] {
            queue.push_back((c, 1usize));
        }
    }
    while let Some((v, dir)) = queue.pop_front() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if target[v] {
            return Ok(false);
        }
        let pass = !cond.member[v];
        if dir == 0 {
            if pass {
                queue.extend(g.parents[v].iter().map(|&p| (p, 0)));
                queue.extend(g.children[v].iter().map(|&c| (c, 1)));
            }
        } else {
            if pass {
                queue.extend(g.children[v].iter().map(|&c| (c, 1)));
            }
            if cond.opens_collider[v] {
                queue.extend(g.parents[v].iter().map(|&p| (p, 0)));
            }
        }
    }
    Ok(true)
}

/// Directed paths from `x` to `y` touching `x` only at their first node,
/// in lexicographic order of node indices.
pub fn proper_causal_paths(g: &Dag, x: &NodeSet, y: &NodeSet) -> Result<Vec<Path>> {
    disjoint_or_err(x, y, "x and y")?;
    let in_x = g.mask(x)?;
    let in_y = g.mask(y)?;
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    fn walk(
        g: &Dag,
        v: usize,
        in_x: &[bool],
        in_y: &[bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        stack.push(v);
        if stack.len() > 1 && in_y[v] {
            out.push(stack.clone());
        }
        for &c in &g.children[v] {
            if !in_x[c] {
                walk(g, c, in_x, in_y, stack, out);
            }
        }
        stack.pop();
    }
    for start in g.ids(x)? {
        walk(g, start, &in_x, &in_y, &mut stack, &mut found);
    }
    found.sort();
    Ok(found.iter().map(|ids| Path::from_ids(g, ids)).collect())
}

/// Clause (i) forbidden nodes: descendants, in the graph with edges into `x`
/// removed, of every node outside `x` on a proper causal path from `x` to `y`.
/// Returns (node on causal path, forbidden descendant) pairs.
fn forbidden_pairs(g: &Dag, in_x: &[bool], in_y: &[bool]) -> Vec<(usize, usize)> {
    let xs: Vec<usize> = (0..g.len()).filter(|&i| in_x[i]).collect();
    let ys: Vec<usize> = (0..g.len()).filter(|&i| in_y[i]).collect();
    // Reachable from x without re-entering x, and reaching y without entering x.
    let mut from_x = vec![false; g.len()];
    let mut stack = Vec::new();
    for &v in &xs {
        for &c in &g.children[v] {
            if !in_x[c] && !from_x[c] {
                from_x[c] = true;
                stack.push(c);
            }
        }
    }
    while let Some(v) = stack.pop() {
        for &c in &g.children[v] {
            if !in_x[c] && !from_x[c] {
                from_x[c] = true;
                stack.push(c);
            }
        }
    }
    let mut to_y = vec![false; g.len()];
    for &v in &ys {
        if !in_x[v] {
            to_y[v] = true;
            stack.push(v);
        }
    }
    while let Some(v) = stack.pop() {
        for &p in &g.parents[v] {
            if !in_x[p] && !to_y[p] {
                to_y[p] = true;
                stack.push(p);
            }
        }
    }
    let mut pairs = Vec::new();
    for v in 0..g.len() {
        if from_x[v] && to_y[v] {
            let de = g.reach_down(&[v], Some(in_x));
            pairs.extend((0..g.len()).filter(|&d| de[d]).map(|d| (v, d)));
        }
    }
    pairs
}

/// Depth-first search for a non-causal path from `x` to `y` left open by `s`.
fn open_noncausal_path(
    g: &Dag,
    in_x: &[bool],
    in_y: &[bool],
    cond: &Conditioning,
    mode: AdjustmentMode,
) -> Option<Vec<usize>> {
    struct Search<'a> {
        g: &'a Dag,
        in_x: &'a [bool],
        in_y: &'a [bool],
        cond: &'a Conditioning,
        mode: AdjustmentMode,
        on_path: Vec<bool>,
        stack: Vec<usize>,
    }
    impl Search<'_> {
        fn extend(&mut self, backward_edges: usize) -> bool {
            let v = *self.stack.last().unwrap();
            let g = self.g;
            let nexts = g.children[v]
                .iter()
                .map(|&c| (c, false))
                .chain(g.parents[v].iter().map(|&p| (p, true)));
            for (w, backward) in nexts {
                if self.on_path[w] {
                    continue;
                }
                if self.mode == AdjustmentMode::Proper && self.in_x[w] {
                    continue;
                }
                if self.stack.len() >= 2 {
                    let u = self.stack[self.stack.len() - 2];
                    if self.cond.blocks(g, u, v, w) {
                        continue;
                    }
                }
                let back = backward_edges + backward as usize;
                self.stack.push(w);
                self.on_path[w] = true;
                if (self.in_y[w] && back > 0) || self.extend(back) {
                    return true;
                }
                self.on_path[w] = false;
                self.stack.pop();
            }
            false
        }
    }
    let mut search = Search {
        g,
        in_x,
        in_y,
        cond,
        mode,
        on_path: vec![false; g.len()],
        stack: Vec::new(),
    };
    for start in (0..g.len()).filter(|&i| in_x[i]) {
        search.stack.push(start);
        search.on_path[start] = true;
        if search.extend(0) {
            return Some(search.stack);
        }
        search.on_path[start] = false;
        search.stack.pop();
    }
    None
}

struct AdjustmentCheck {
    forbidden: Vec<(usize, usize)>,
    open_path: Option<Vec<usize>>,
}

fn adjustment_check(
    g: &Dag,
    x: &NodeSet,
    y: &NodeSet,
    s: &NodeSet,
    mode: AdjustmentMode,
) -> Result<AdjustmentCheck> {
    disjoint_or_err(x, y, "x and y")?;
    let in_x = g.mask(x)?;
    let in_y = g.mask(y)?;
    let in_s = g.mask(s)?;
    let cond = Conditioning::new(g, s)?;
    let forbidden = forbidden_pairs(g, &in_x, &in_y)
        .into_iter()
        .filter(|&(_, d)| in_s[d])
        .collect();
    let open_path = open_noncausal_path(g, &in_x, &in_y, &cond, mode);
    Ok(AdjustmentCheck {
        forbidden,
        open_path,
    })
}

/// Valid adjustment set test with the literal reading of clause (ii).
pub fn is_valid_adjustment(g: &Dag, x: &NodeSet, y: &NodeSet, s: &NodeSet) -> Result<bool> {
    is_valid_adjustment_with(g, x, y, s, AdjustmentMode::Literal)
}

pub fn is_valid_adjustment_with(
    g: &Dag,
    x: &NodeSet,
    y: &NodeSet,
    s: &NodeSet,
    mode: AdjustmentMode,
) -> Result<bool> {
    let check = adjustment_check(g, x, y, s, mode)?;
    Ok(check.forbidden.is_empty() && check.open_path.is_none())
}

/// Checks the graphical part of the counterfactual-invariance criterion for a
/// predictor of `y` in `a` with respect to `w`, given adjustment set `s`.
pub fn check_ci_criterion(
    g: &Dag,
    a: &NodeSet,
    w: &NodeSet,
    y: &NodeSet,
    s: &NodeSet,
    mode: AdjustmentMode,
) -> Result<CriterionReport> {
    let aw = a.union(w);
    if !aw.is_disjoint(y) {
        return query(format!("A ∪ W overlaps Y in {}", aw.intersection(y)));
    }
    let check = adjustment_check(g, &aw, y, s, mode)?;
    let mut violations = Vec::new();
    for &(v, d) in &check.forbidden {
        violations.push(format!(
            "adjustment (i): `{}` is a descendant of `{}`, which lies on a proper causal path",
            g.name(d),
            g.name(v)
        ));
    }
    if let Some(path) = &check.open_path {
        violations.push(format!(
            "adjustment (ii): non-causal path left open: {}",
            Path::from_ids(g, path).render(g)
        ));
    }
    let valid_adjustment = violations.is_empty();

    let mut parent_closure = true;
    for v in aw.iter() {
        for p in g.parents(v)? {
            if !aw.contains(p) {
                parent_closure = false;
                violations.push(format!(
                    "parent closure: `{p}` is a parent of `{v}` outside X ∪ A"
                ));
            }
        }
    }
    Ok(CriterionReport {
        valid_adjustment,
        parent_closure,
        graphical_ok: valid_adjustment && parent_closure,
        injectivity_assumed: true,
        violations,
    })
}

/// Graph extended with duplicate copies of `a ∪ w` (and of the ancestors of
/// those nodes that are also their descendants), plus explicit exogenous
/// parents shared between each original and its copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateGraph {
    pub graph: Dag,
    /// original → duplicate
    pub duplicates: BTreeMap<String, String>,
    /// original → exogenous node
    pub exogenous: BTreeMap<String, String>,
}

pub fn duplicate_name(name: &str) -> String {
    format!("{name}\u{0304}")
}

pub fn exogenous_name(name: &str) -> String {
    format!("U_{name}")
}

pub fn build_duplicate_graph(g: &Dag, a: &NodeSet, w: &NodeSet) -> Result<DuplicateGraph> {
    let aw = a.union(w);
    let in_aw = g.mask(&aw)?;
    let aw_ids = g.ids(&aw)?;
    let de_aw = g.reach_down(&aw_ids, None);
    let an_aw = g.reach_up(&aw_ids);

    let copied: Vec<usize> = (0..g.len())
        .filter(|&v| in_aw[v] || (an_aw[v] && de_aw[v]))
        .collect();
    let mut is_copied = vec![false; g.len()];
    for &v in &copied {
        is_copied[v] = true;
    }

    let mut nodes: Vec<String> = g.names.clone();
    let mut edges = g.edges();
    let mut duplicates = BTreeMap::new();
    let mut exogenous = BTreeMap::new();
    let mut taken: BTreeSet<String> = nodes.iter().cloned().collect();
    let mut fresh = |name: String| -> Result<String> {
        if !taken.insert(name.clone()) {
            return query(format!(
                "generated node name `{name}` collides with an existing node"
            ));
        }
        Ok(name)
    };
    for &v in &copied {
        let dup = fresh(duplicate_name(g.name(v)))?;
        duplicates.insert(g.name(v).to_string(), dup.clone());
        nodes.push(dup);
    }
    for &v in &copied {
        let u = fresh(exogenous_name(g.name(v)))?;
        exogenous.insert(g.name(v).to_string(), u.clone());
        nodes.push(u);
    }
    for &v in &copied {
        let dup = &duplicates[g.name(v)];
        for &p in &g.parents[v] {
            let src = if is_copied[p] {
                duplicates[g.name(p)].clone()
            } else {
                g.name(p).to_string()
            };
            edges.push((src, dup.clone()));
        }
        let u = &exogenous[g.name(v)];
        edges.push((u.clone(), g.name(v).to_string()));
        edges.push((u.clone(), dup.clone()));
    }
    Ok(DuplicateGraph {
        graph: Dag::new(nodes, edges)?,
        duplicates,
        exogenous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Dag {
        Dag::new(["A", "B", "C"], [("A", "B"), ("B", "C")]).unwrap()
    }

    fn collider() -> Dag {
        Dag::new(["A", "B", "C", "D"], [("A", "B"), ("C", "B"), ("B", "D")]).unwrap()
    }

    fn fig1a() -> Dag {
        Dag::new(
            ["A", "X", "S", "Y"],
            [("A", "X"), ("X", "Y"), ("S", "X"), ("S", "Y"), ("A", "Y")],
        )
        .unwrap()
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(Dag::new(["A", "B"], [("A", "B"), ("B", "A")]).is_err());
        assert!(Dag::new(["A"], [("A", "A")]).is_err());
        assert!(Dag::new(["A", "B"], [("A", "B"), ("A", "B")]).is_err());
        assert!(Dag::new(["A"], [("A", "Z")]).is_err());
        assert!(Dag::new(["A", "A"], Vec::<(&str, &str)>::new()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g =
            Dag::from_json(r#"{"nodes": ["A","B","C"], "edges": [["A","B"],["B","C"]]}"#).unwrap();
        assert_eq!(g, chain());
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(Dag::from_json(&text).unwrap(), g);
    }

    #[test]
    fn descendant_examples() {
        let g = chain();
        assert_eq!(
            descendants(&g, &NodeSet::of(&["A"])).unwrap(),
            NodeSet::of(&["A", "B", "C"])
        );
        assert_eq!(
            descendants(&g, &NodeSet::of(&["C"])).unwrap(),
            NodeSet::of(&["C"])
        );
        assert_eq!(
            descendants(&fig1a(), &NodeSet::of(&["S"])).unwrap(),
            NodeSet::of(&["S", "X", "Y"])
        );
        assert!(descendants(&g, &NodeSet::of(&["Q"])).is_err());
    }

    #[test]
    fn blocking_examples() {
        let g = chain();
        let p = Path::of(&g, &["A", "B", "C"]).unwrap();
        assert!(is_blocked(&g, &p, &NodeSet::of(&["B"])).unwrap());
        assert!(!is_blocked(&g, &p, &NodeSet::new()).unwrap());

        let g = collider();
        let p = Path::of(&g, &["A", "B", "C"]).unwrap();
        assert!(is_blocked(&g, &p, &NodeSet::new()).unwrap());
        assert!(!is_blocked(&g, &p, &NodeSet::of(&["D"])).unwrap());

        let edge = Path::of(&g, &["A", "B"]).unwrap();
        assert!(!is_blocked(&g, &edge, &NodeSet::of(&["A", "B", "C", "D"])).unwrap());
        assert!(Path::of(&g, &["A", "C"]).is_err());
        assert!(Path::of(&g, &["A", "B", "A"]).is_err());
    }

    #[test]
    fn d_separation_examples() {
        assert!(d_separated(
            &chain(),
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["C"]),
            &NodeSet::of(&["B"])
        )
        .unwrap());
        let g = Dag::new(["A", "B", "C"], [("A", "B"), ("C", "B")]).unwrap();
        assert!(!d_separated(
            &g,
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["C"]),
            &NodeSet::of(&["B"])
        )
        .unwrap());
        assert!(d_separated(
            &g,
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["C"]),
            &NodeSet::new()
        )
        .unwrap());
        assert!(!d_separated(
            &fig1a(),
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["Y"]),
            &NodeSet::of(&["S"])
        )
        .unwrap());
        assert!(d_separated(
            &chain(),
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["A"]),
            &NodeSet::new()
        )
        .is_err());
    }

    #[test]
    fn proper_causal_path_examples() {
        let g = chain();
        let paths = proper_causal_paths(&g, &NodeSet::of(&["A"]), &NodeSet::of(&["C"])).unwrap();
        assert_eq!(paths, vec![Path::of(&g, &["A", "B", "C"]).unwrap()]);

        let g = Dag::new(["A", "M", "Y"], [("A", "M"), ("M", "Y"), ("A", "Y")]).unwrap();
        let paths =
            proper_causal_paths(&g, &NodeSet::of(&["A", "M"]), &NodeSet::of(&["Y"])).unwrap();
        assert_eq!(
            paths,
            vec![
                Path::of(&g, &["A", "Y"]).unwrap(),
                Path::of(&g, &["M", "Y"]).unwrap()
            ]
        );

        let g = Dag::new(["A", "Y"], Vec::<(&str, &str)>::new()).unwrap();
        assert!(
            proper_causal_paths(&g, &NodeSet::of(&["A"]), &NodeSet::of(&["Y"]))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn adjustment_examples() {
        let a = NodeSet::of(&["A"]);
        let y = NodeSet::of(&["Y"]);
        let g = Dag::new(["A", "Y"], [("A", "Y")]).unwrap();
        assert!(is_valid_adjustment(&g, &a, &y, &NodeSet::new()).unwrap());

        let g = Dag::new(["S", "A", "Y"], [("S", "A"), ("S", "Y"), ("A", "Y")]).unwrap();
        assert!(!is_valid_adjustment(&g, &a, &y, &NodeSet::new()).unwrap());
        assert!(is_valid_adjustment(&g, &a, &y, &NodeSet::of(&["S"])).unwrap());

        let g = Dag::new(["A", "X", "Y"], [("A", "X"), ("X", "Y"), ("A", "Y")]).unwrap();
        assert!(!is_valid_adjustment(&g, &a, &y, &NodeSet::of(&["X"])).unwrap());
    }

    #[test]
    fn criterion_on_fig1a_lists_clause_violations() {
        let g = fig1a();
        let (a, w, y, s) = (
            NodeSet::of(&["A"]),
            NodeSet::of(&["A", "X", "S"]),
            NodeSet::of(&["Y"]),
            NodeSet::of(&["S"]),
        );
        // Literal clause (ii): X <- A -> Y starts in A ∪ W and is open.
        let literal = check_ci_criterion(&g, &a, &w, &y, &s, AdjustmentMode::Literal).unwrap();
        assert!(!literal.valid_adjustment);
        assert!(literal.parent_closure);
        assert!(!literal.graphical_ok);
        assert!(literal.injectivity_assumed);
        assert_eq!(literal.violations.len(), 1);
        assert!(literal.violations[0].contains("adjustment (ii)"));

        let proper = check_ci_criterion(&g, &a, &w, &y, &s, AdjustmentMode::Proper).unwrap();
        assert!(proper.valid_adjustment && proper.parent_closure && proper.graphical_ok);
        assert!(proper.violations.is_empty());
    }

    #[test]
    fn parent_closure_examples() {
        let g = Dag::new(["A", "X", "Y"], [("A", "X"), ("X", "Y")]).unwrap();
        let r = check_ci_criterion(
            &g,
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["A", "X"]),
            &NodeSet::of(&["Y"]),
            &NodeSet::new(),
            AdjustmentMode::Literal,
        )
        .unwrap();
        assert!(r.parent_closure);

        let g = Dag::new(["Z", "A", "X", "Y"], [("Z", "X"), ("A", "X"), ("X", "Y")]).unwrap();
        let r = check_ci_criterion(
            &g,
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["A", "X"]),
            &NodeSet::of(&["Y"]),
            &NodeSet::of(&["Z"]),
            AdjustmentMode::Literal,
        )
        .unwrap();
        assert!(!r.parent_closure);
        assert!(!r.graphical_ok);
        assert!(r.violations.iter().any(|v| v.contains("`Z`")));

        assert!(check_ci_criterion(
            &g,
            &NodeSet::of(&["A"]),
            &NodeSet::of(&["Y"]),
            &NodeSet::of(&["Y"]),
            &NodeSet::new(),
            AdjustmentMode::Literal,
        )
        .is_err());
    }

    #[test]
    fn duplicate_graph_matches_fig6() {
        let g = Dag::new(
            ["U", "A", "X", "Y"],
            [("U", "A"), ("U", "X"), ("U", "Y"), ("A", "X"), ("X", "Y")],
        )
        .unwrap();
        let d = build_duplicate_graph(&g, &NodeSet::of(&["A"]), &NodeSet::of(&["A", "X"])).unwrap();
        let (ab, xb) = (duplicate_name("A"), duplicate_name("X"));
        assert_eq!(d.duplicates.len(), 2);
        assert_eq!(d.duplicates["A"], ab);
        assert!(d.graph.has_edge("U", &ab));
        assert!(d.graph.has_edge("U", &xb));
        assert!(d.graph.has_edge(&ab, &xb));
        assert!(d.graph.has_edge("U_A", "A") && d.graph.has_edge("U_A", &ab));
        assert!(d.graph.has_edge("U_X", "X") && d.graph.has_edge("U_X", &xb));
        assert_eq!(d.graph.edge_count(), g.edge_count() + 3 + 4);
    }

    #[test]
    fn duplicate_graph_edge_cases() {
        let g = Dag::new(["A", "X", "Y"], [("A", "X"), ("X", "Y")]).unwrap();
        let d = build_duplicate_graph(&g, &NodeSet::new(), &NodeSet::new()).unwrap();
        assert_eq!(d.graph, g);
        assert!(d.duplicates.is_empty());

        let d = build_duplicate_graph(&g, &NodeSet::of(&["A"]), &NodeSet::new()).unwrap();
        let ab = duplicate_name("A");
        assert_eq!(d.graph.len(), 5);
        assert_eq!(
            d.graph.edges()[2..].to_vec(),
            vec![
                ("U_A".to_string(), "A".to_string()),
                ("U_A".to_string(), ab)
            ]
        );
    }

    #[test]
    fn duplicate_graph_copies_intermediate_ancestors() {
        // M is an ancestor of X and a descendant of A, so it is duplicated too.
        let g = Dag::new(["A", "M", "X", "Y"], [("A", "M"), ("M", "X"), ("X", "Y")]).unwrap();
        let d = build_duplicate_graph(&g, &NodeSet::of(&["A"]), &NodeSet::of(&["X"])).unwrap();
        let (ab, mb, xb) = (
            duplicate_name("A"),
            duplicate_name("M"),
            duplicate_name("X"),
        );
        assert!(d.graph.has_edge(&ab, &mb));
        assert!(d.graph.has_edge(&mb, &xb));
    }
}

//! Follower graph among users, Louvain community detection under directed
//! modularity, path metrics and per-community echo counts.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GAIN_EPS: f64 = 1e-12;

/// Directed weighted graph; edge `(a, b)` means `a` follows `b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FollowGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), f64>,
}

impl FollowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.nodes.push(id.to_owned());
        self.index.insert(id.to_owned(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    /// Adds weight to `src -> dst`. Self-loops are rejected; repeated edges
    /// accumulate weight.
    pub fn add_edge(&mut self, src: &str, dst: &str, weight: f64) -> Result<()> {
        if src == dst {
            return Err(Error::Validation(format!("self-loop on '{src}'")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Validation(format!(
                "edge {src}->{dst} has non-positive weight {weight}"
            )));
        }
        let a = self.add_node(src);
        let b = self.add_node(dst);
        *self.edges.entry((a, b)).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Each arc mirrored so `w'(a,b) = w'(b,a) = w(a,b) + w(b,a)`; directed
    /// modularity on the result equals undirected modularity.
    pub fn symmetrized(&self) -> FollowGraph {
        let mut g = FollowGraph {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            edges: BTreeMap::new(),
        };
        for (&(a, b), &w) in &self.edges {
            *g.edges.entry((a, b)).or_insert(0.0) += w;
            *g.edges.entry((b, a)).or_insert(0.0) += w;
        }
        g
    }

    /// Reads `src,dst[,weight]` rows; a first row whose weight column is not
    /// numeric, or whose first cell is `src`, `source` or `from`, is treated as a header.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut g = FollowGraph::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 || rec.len() > 3 {
                return Err(Error::Validation(format!(
                    "edge row {} needs 2 or 3 columns",
                    i + 1
                )));
            }
            let weight = match rec.get(2) {
                Some(w) => match w.parse::<f64>() {
                    Ok(v) => v,
                    Err(_) if i == 0 => continue,
                    Err(_) => {
                        return Err(Error::Validation(format!(
                            "edge row {}: bad weight '{w}'",
                            i + 1
                        )))
                    }
                },
                None => 1.0,
            };
            if i == 0 && ["src", "source", "from"].iter().any(|h| rec[0].eq_ignore_ascii_case(h)) {
                continue;
            }
            g.add_edge(&rec[0], &rec[1], weight)
                .map_err(|e| Error::Validation(format!("edge row {}: {e}", i + 1)))?;
        }
        Ok(g)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,weight\n");
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "{},{},{}", self.nodes[a], self.nodes[b], w);
        }
        out
    }

    /// Graphviz export; nodes carry their community when a partition is given.
    pub fn to_dot(&self, partition: Option<&CommunityPartition>) -> String {
        let mut out = String::from("digraph follows {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            match partition {
                Some(p) => {
                    let _ = writeln!(out, "  \"{}\" [community={}];", escape(n), p.assignment[i]);
                }
                None => {
                    let _ = writeln!(out, "  \"{}\";", escape(n));
                }
            }
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [weight={w}];",
                escape(&self.nodes[a]),
                escape(&self.nodes[b])
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community per node, indexed like `FollowGraph::nodes`; ids are dense
    /// and numbered by first appearance.
    pub assignment: Vec<usize>,
    pub modularity: f64,
    /// Modularity after each aggregation level.
    pub levels: Vec<f64>,
}

impl CommunityPartition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.assignment.iter().enumerate() {
            m.entry(c).or_default().push(i);
        }
        m
    }

    pub fn to_csv(&self, graph: &FollowGraph) -> String {
        let mut out = String::from("node,community\n");
        for (i, c) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{},{}", graph.nodes[i], c);
        }
        out
    }
}

/// Renumbers labels densely in order of first appearance.
pub fn canonical_labels(assignment: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Q = (1/m) sum_c [ W_in(c) - gamma * out_c * in_c / m ]
pub fn modularity(graph: &FollowGraph, assignment: &[usize], resolution: f64) -> f64 {
    let m = graph.total_weight();
    if m == 0.0 {
        return 0.0;
    }
    let mut inner: HashMap<usize, f64> = HashMap::new();
    let mut out_deg: HashMap<usize, f64> = HashMap::new();
    let mut in_deg: HashMap<usize, f64> = HashMap::new();
    for (a, b, w) in graph.edges() {
        let (ca, cb) = (assignment[a], assignment[b]);
        if ca == cb {
            *inner.entry(ca).or_default() += w;
        }
        *out_deg.entry(ca).or_default() += w;
        *in_deg.entry(cb).or_default() += w;
    }
    let mut q = inner.values().sum::<f64>();
    for (c, o) in &out_deg {
        q -= resolution * o * in_deg.get(c).copied().unwrap_or(0.0) / m;
    }
    q / m
}

/// Working graph for one Louvain level; self-loops allowed.
struct Level {
    n: usize,
    out: Vec<Vec<(usize, f64)>>,
    inc: Vec<Vec<(usize, f64)>>,
    k_out: Vec<f64>,
    k_in: Vec<f64>,
    m: f64,
}

impl Level {
    fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        let mut k_out = vec![0.0; n];
        let mut k_in = vec![0.0; n];
        let mut m = 0.0;
        for (a, b, w) in edges {
            out[a].push((b, w));
            inc[b].push((a, w));
            k_out[a] += w;
            k_in[b] += w;
            m += w;
        }
        Self {
            n,
            out,
            inc,
            k_out,
            k_in,
            m,
        }
    }

    /// Local moving phase; returns the community of each node and whether
    /// any node moved.
    fn local_moves(
        &self,
        init: Vec<usize>,
        resolution: f64,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<usize>, bool) {
        let mut comm = init;
        let mut tot_out = vec![0.0; self.n];
        let mut tot_in = vec![0.0; self.n];
        for i in 0..self.n {
            tot_out[comm[i]] += self.k_out[i];
            tot_in[comm[i]] += self.k_in[i];
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        let m = self.m;
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let own = comm[i];
                // links between i and each neighboring community, excluding self-loops
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                links.insert(own, 0.0);
                for &(j, w) in self.out[i].iter().chain(&self.inc[i]) {
                    if j != i {
                        *links.entry(comm[j]).or_insert(0.0) += w;
                    }
                }
                tot_out[own] -= self.k_out[i];
                tot_in[own] -= self.k_in[i];
                let gain = |c: usize, w: f64| {
                    w / m
                        - resolution * (self.k_out[i] * tot_in[c] + self.k_in[i] * tot_out[c])
                            / (m * m)
                };
                let stay = gain(own, links[&own]);
                let mut best = own;
                let mut best_gain = stay;
                for (&c, &w) in &links {
                    let g = gain(c, w);
                    if c != own && g > best_gain + GAIN_EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                tot_out[best] += self.k_out[i];
                tot_in[best] += self.k_in[i];
                if best != own {
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (canonical_labels(&comm), moved_any)
    }

    /// Kernighan-Lin style pass: repeatedly apply the best single-node move
    /// (even a losing one), locking each moved node, then keep the best
    /// prefix. Passes repeat while they improve. Returns `None` when the
    /// input partition could not be improved.
    fn vertex_mover(&self, comm: &[usize], resolution: f64) -> Option<Vec<usize>> {
        let m = self.m;
        let mut comm = canonical_labels(comm);
        let mut improved = false;
        loop {
            let mut tot_out = vec![0.0; self.n + 1];
            let mut tot_in = vec![0.0; self.n + 1];
            let mut size = vec![0usize; self.n + 1];
            for i in 0..self.n {
                tot_out[comm[i]] += self.k_out[i];
                tot_in[comm[i]] += self.k_in[i];
                size[comm[i]] += 1;
            }
            let mut work = comm.clone();
            let mut locked = vec![false; self.n];
            let mut q = 0.0;
            let mut best_q = GAIN_EPS;
            let mut best: Option<Vec<usize>> = None;
            for _ in 0..self.n {
                // (delta, node, target)
                let mut pick: Option<(f64, usize, usize)> = None;
                for i in (0..self.n).filter(|&i| !locked[i]) {
                    let own = work[i];
                    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                    links.insert(own, 0.0);
                    for &(j, w) in self.out[i].iter().chain(&self.inc[i]) {
                        if j != i {
                            *links.entry(work[j]).or_insert(0.0) += w;
                        }
                    }
                    let out_own = tot_out[own] - self.k_out[i];
                    let in_own = tot_in[own] - self.k_in[i];
                    let stay = links[&own] / m
                        - resolution * (self.k_out[i] * in_own + self.k_in[i] * out_own) / (m * m);
                    let mut consider = |c: usize, w: f64| {
                        let g = w / m
                            - resolution * (self.k_out[i] * tot_in[c] + self.k_in[i] * tot_out[c])
                                / (m * m);
                        let delta = g - stay;
                        if pick.is_none_or(|(d, _, _)| delta > d + GAIN_EPS) {
                            pick = Some((delta, i, c));
                        }
                    };
                    for (&c, &w) in &links {
                        if c != own {
                            consider(c, w);
                        }
                    }
                    if size[own] > 1 {
                        let empty = size.iter().position(|&s| s == 0).expect("n+1 slots");
                        consider(empty, 0.0);
                    }
                }
                let Some((delta, i, c)) = pick else { break };
                let own = work[i];
                tot_out[own] -= self.k_out[i];
                tot_in[own] -= self.k_in[i];
                size[own] -= 1;
                tot_out[c] += self.k_out[i];
                tot_in[c] += self.k_in[i];
                size[c] += 1;
                work[i] = c;
                locked[i] = true;
                q += delta;
                if q > best_q {
                    best_q = q;
                    best = Some(work.clone());
                }
            }
            match best {
                Some(b) => {
                    comm = canonical_labels(&b);
                    improved = true;
                }
                None => break,
            }
        }
        improved.then_some(comm)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let k = comm.iter().copied().max().map_or(0, |c| c + 1);
        let mut w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for a in 0..self.n {
            for &(b, wt) in &self.out[a] {
                *w.entry((comm[a], comm[b])).or_insert(0.0) += wt;
            }
        }
        Level::from_edges(k, w.into_iter().map(|((a, b), wt)| (a, b, wt)))
    }
}

/// The vertex-mover pass is quadratic per sweep; larger graphs skip it.
pub const VERTEX_MOVER_MAX_NODES: usize = 2000;

/// Independent Louvain runs per call; the best-scoring one is returned.
pub const DEFAULT_RESTARTS: usize = 8;

/// Two-phase Louvain under directed modularity, repeated `DEFAULT_RESTARTS`
/// times on separate random streams of `seed`; the highest modularity wins,
/// the earliest run on ties.
pub fn louvain(graph: &FollowGraph, resolution: f64, seed: u64) -> Result<CommunityPartition> {
    louvain_with_restarts(graph, resolution, seed, DEFAULT_RESTARTS)
}

pub fn louvain_with_restarts(
    graph: &FollowGraph,
    resolution: f64,
    seed: u64,
    restarts: usize,
) -> Result<CommunityPartition> {
    let mut best: Option<CommunityPartition> = None;
    for run in 0..restarts.max(1) {
        let p = louvain_run(graph, resolution, seed, run as u64)?;
        if best
            .as_ref()
            .is_none_or(|b| p.modularity > b.modularity + GAIN_EPS)
        {
            best = Some(p);
        }
    }
    Ok(best.expect("at least one run"))
}

/// One Louvain run followed by a vertex-mover refinement on the original
/// graph. Nodes are visited in ascending index order shuffled by the run's
/// generator; a node moves only on a strict gain, and ties between target
/// communities go to the lowest id.
pub fn louvain_run(
    graph: &FollowGraph,
    resolution: f64,
    seed: u64,
    stream: u64,
) -> Result<CommunityPartition> {
    if graph.node_count() == 0 {
        return Err(Error::InvalidArgument("graph has no nodes".into()));
    }
    if graph.total_weight() == 0.0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let base = Level::from_edges(graph.node_count(), graph.edges());
    let mut level = Level::from_edges(graph.node_count(), graph.edges());
    let mut assignment: Vec<usize> = (0..graph.node_count()).collect();
    let mut levels = Vec::new();
    loop {
        let (comm, moved) = level.local_moves((0..level.n).collect(), resolution, &mut rng);
        if !moved {
            break;
        }
        for a in assignment.iter_mut() {
            *a = comm[*a];
        }
        levels.push(modularity(graph, &assignment, resolution));
        level = level.aggregate(&comm);
        if level.n == 1 {
            break;
        }
    }
    if graph.node_count() <= VERTEX_MOVER_MAX_NODES {
        if let Some(better) = base.vertex_mover(&assignment, resolution) {
            assignment = better;
            levels.push(modularity(graph, &assignment, resolution));
        }
    }
    let assignment = canonical_labels(&assignment);
    let q = modularity(graph, &assignment, resolution);
    Ok(CommunityPartition {
        assignment,
        modularity: q,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub node_count: usize,
    pub edge_count: usize,
    /// Total edge weight divided by node count.
    pub avg_weighted_degree: f64,
    /// Longest shortest directed path, in hops, over reachable pairs.
    pub diameter: usize,
    pub avg_path_length: f64,
    pub reachable_pairs: usize,
    pub unreachable_pairs: usize,
}

pub fn network_metrics(graph: &FollowGraph) -> Result<NetworkMetrics> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::InvalidArgument("graph has no nodes".into()));
    }
    let mut adj = vec![Vec::new(); n];
    for (a, b, _) in graph.edges() {
        adj[a].push(b);
    }
    let mut diameter = 0;
    let mut sum = 0usize;
    let mut reachable = 0usize;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        for (t, &d) in dist.iter().enumerate() {
            if t != s && d != usize::MAX {
                reachable += 1;
                sum += d;
                diameter = diameter.max(d);
            }
        }
    }
    Ok(NetworkMetrics {
        node_count: n,
        edge_count: graph.edge_count(),
        avg_weighted_degree: graph.total_weight() / n as f64,
        diameter,
        avg_path_length: if reachable > 0 {
            sum as f64 / reachable as f64
        } else {
            0.0
        },
        reachable_pairs: reachable,
        unreachable_pairs: n * (n - 1) - reachable,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoRow {
    pub community: usize,
    pub members: usize,
    /// Members who posted a false-claimed URL that another member of the same
    /// community also posted.
    pub echo_users: usize,
}

/// `false_claims` holds `(user_id, url)` pairs; users absent from the graph
/// are ignored.
pub fn echo_analysis(
    graph: &FollowGraph,
    partition: &CommunityPartition,
    false_claims: &[(String, String)],
) -> Vec<EchoRow> {
    let mut urls_by_user: HashMap<usize, BTreeSet<&str>> = HashMap::new();
    for (user, url) in false_claims {
        if let Some(i) = graph.node_index(user) {
            urls_by_user.entry(i).or_default().insert(url);
        }
    }
    partition
        .members()
        .into_iter()
        .map(|(c, members)| {
            let mut posters: HashMap<&str, usize> = HashMap::new();
            for m in &members {
                for url in urls_by_user.get(m).into_iter().flatten() {
                    *posters.entry(url).or_default() += 1;
                }
            }
            let echo_users = members
                .iter()
                .filter(|m| {
                    urls_by_user
                        .get(m)
                        .is_some_and(|urls| urls.iter().any(|u| posters[u] >= 2))
                })
                .count();
            EchoRow {
                community: c,
                members: members.len(),
                echo_users,
            }
        })
        .collect()
}

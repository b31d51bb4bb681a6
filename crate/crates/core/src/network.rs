//! Temporal network data model, edge-list ingestion and preprocessing.
//!
//! A [`TemporalNetwork`] stores `T + 1` dense binary snapshots `A[t][i][j]`
//! (row `i` is the source, column `j` the target). Networks are built from
//! `(source, target, time)` rows binned into snapshots, then cleaned by
//! [`preprocess`] before inference.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalNetwork {
    n_nodes: usize,
    n_steps: usize,
    node_labels: Vec<String>,
    adj: Vec<u8>,
}

impl TemporalNetwork {
    /// Empty network with `n_steps + 1` snapshots.
    pub fn empty(node_labels: Vec<String>, n_steps: usize) -> Result<Self> {
        let n = node_labels.len();
        let mut seen = HashSet::with_capacity(n);
        for l in &node_labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Input(format!("duplicate node label {l:?}")));
            }
        }
        Ok(Self {
            n_nodes: n,
            n_steps,
            node_labels,
            adj: vec![0; (n_steps + 1) * n * n],
        })
    }

    /// Network with integer labels `"0".."n-1"`.
    pub fn with_size(n_nodes: usize, n_steps: usize) -> Self {
        let labels = (0..n_nodes).map(|i| i.to_string()).collect();
        Self::empty(labels, n_steps).expect("integer labels are unique")
    }

    /// Build from a list of `(t, i, j)` ones.
    pub fn from_edges(
        node_labels: Vec<String>,
        n_steps: usize,
        edges: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<Self> {
        let mut net = Self::empty(node_labels, n_steps)?;
        for (t, i, j) in edges {
            net.check(t, i, j)?;
            net.set(t, i, j, 1);
        }
        Ok(net)
    }

    fn check(&self, t: usize, i: usize, j: usize) -> Result<()> {
        if t > self.n_steps {
            return Err(Error::Index {
                what: "t",
                index: t,
                limit: self.n_steps + 1,
            });
        }
        for (what, idx) in [("i", i), ("j", j)] {
            if idx >= self.n_nodes {
                return Err(Error::Index {
                    what,
                    index: idx,
                    limit: self.n_nodes,
                });
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of transitions `T`; there are `T + 1` snapshots.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_steps + 1
    }

    pub fn node_labels(&self) -> &[String] {
        &self.node_labels
    }

    #[inline]
    fn offset(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.n_nodes + i) * self.n_nodes + j
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> u8 {
        self.adj[self.offset(t, i, j)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, j: usize, value: u8) {
        let o = self.offset(t, i, j);
        self.adj[o] = value.min(1);
    }

    /// Row-major `N x N` slice of snapshot `t`.
    pub fn snapshot(&self, t: usize) -> &[u8] {
        let nn = self.n_nodes * self.n_nodes;
        &self.adj[t * nn..(t + 1) * nn]
    }

    pub fn snapshot_mut(&mut self, t: usize) -> &mut [u8] {
        let nn = self.n_nodes * self.n_nodes;
        &mut self.adj[t * nn..(t + 1) * nn]
    }

    pub fn edge_count(&self, t: usize) -> usize {
        self.snapshot(t).iter().map(|&a| a as usize).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.adj.iter().map(|&a| a as usize).sum()
    }

    /// All ones as `(t, i, j)`, ordered by `t`, then `i`, then `j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.n_nodes;
        self.adj
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == 1)
            .map(move |(o, _)| (o / (n * n), (o / n) % n, o % n))
    }

    /// Trajectory `A_ij(0..=T)`.
    pub fn trajectory(&self, i: usize, j: usize) -> Vec<u8> {
        (0..=self.n_steps).map(|t| self.get(t, i, j)).collect()
    }

    /// Keep snapshots `0..=last` only.
    pub fn truncated(&self, last: usize) -> Result<Self> {
        if last > self.n_steps {
            return Err(Error::Index {
                what: "last snapshot",
                index: last,
                limit: self.n_steps + 1,
            });
        }
        let nn = self.n_nodes * self.n_nodes;
        Ok(Self {
            n_nodes: self.n_nodes,
            n_steps: last,
            node_labels: self.node_labels.clone(),
            adj: self.adj[..(last + 1) * nn].to_vec(),
        })
    }

    /// Time-aggregated binary adjacency (`1` if the edge exists at any `t`).
    pub fn aggregated(&self) -> Vec<u8> {
        let nn = self.n_nodes * self.n_nodes;
        let mut agg = vec![0u8; nn];
        for t in 0..=self.n_steps {
            for (a, &x) in agg.iter_mut().zip(self.snapshot(t)) {
                *a |= x;
            }
        }
        agg
    }

    /// Subnetwork induced by `keep` (node indices, in the order given).
    pub fn induced(&self, keep: &[usize]) -> Self {
        let labels = keep.iter().map(|&i| self.node_labels[i].clone()).collect();
        let mut out = Self::empty(labels, self.n_steps).expect("subset of unique labels");
        for t in 0..=self.n_steps {
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    if self.get(t, i, j) == 1 {
                        out.set(t, a, b, 1);
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> NetworkJson {
        NetworkJson {
            n_nodes: self.n_nodes,
            n_steps: self.n_steps,
            node_labels: self.node_labels.clone(),
            edges: self.edges().map(|(t, i, j)| [t, i, j]).collect(),
        }
    }

    pub fn from_json(doc: NetworkJson) -> Result<Self> {
        if doc.node_labels.len() != doc.n_nodes {
            return Err(Error::Input(format!(
                "node_labels has {} entries, n_nodes is {}",
                doc.node_labels.len(),
                doc.n_nodes
            )));
        }
        Self::from_edges(
            doc.node_labels,
            doc.n_steps,
            doc.edges.into_iter().map(|[t, i, j]| (t, i, j)),
        )
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Self::from_json(serde_json::from_reader(r)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let file = std::fs::File::open(path)?;
        if is_json {
            Self::read_json(std::io::BufReader::new(file))
        } else {
            let rows = read_edge_list(file, delimiter_for(path))?;
            ingest_snapshots(&rows, Binning::Explicit)
        }
    }
}

/// Sparse JSON form: only the ones are listed, as `[t, i, j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub n_nodes: usize,
    pub n_steps: usize,
    pub node_labels: Vec<String>,
    pub edges: Vec<[usize; 3]>,
}

/// One row of an edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub source: String,
    pub target: String,
    pub time: f64,
}

impl EdgeRow {
    pub fn new(source: impl Into<String>, target: impl Into<String>, time: f64) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            time,
        }
    }
}

/// How row times map to snapshot indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// The time column already is a non-negative integer snapshot index.
    Explicit,
    /// `bin = floor((time - origin) / width)`.
    Window { width: f64, origin: f64 },
}

fn delimiter_for(path: &Path) -> Option<u8> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("tsv") => Some(b'\t'),
        Some(e) if e.eq_ignore_ascii_case("csv") => Some(b','),
        _ => None,
    }
}

/// Read a `source,target,time` edge list. Lines starting with `#` are skipped.
/// With `delimiter = None` the delimiter is sniffed from the header line.
pub fn read_edge_list<R: Read>(mut reader: R, delimiter: Option<u8>) -> Result<Vec<EdgeRow>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let delim = delimiter.unwrap_or_else(|| {
        let header = text
            .lines()
            .find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        match header {
            Some(h) if h.contains('\t') => b'\t',
            _ => b',',
        }
    });
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse(format!("edge list header lacks a `{name}` column")))
    };
    let (cs, ct, ctime) = (col("source")?, col("target")?, col("time")?);
    let mut rows = Vec::new();
    for (lineno, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| {
            rec.get(c)
                .ok_or_else(|| Error::Parse(format!("record {} has too few fields", lineno + 1)))
        };
        let time_str = field(ctime)?;
        let time: f64 = time_str.parse().map_err(|_| {
            Error::Parse(format!(
                "record {}: time {time_str:?} is not a number",
                lineno + 1
            ))
        })?;
        rows.push(EdgeRow::new(field(cs)?, field(ct)?, time));
    }
    Ok(rows)
}

/// Write a network as a `source,target,time` edge list using snapshot indices as times.
pub fn write_edge_list<W: Write>(net: &TemporalNetwork, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["source", "target", "time"])?;
    for (t, i, j) in net.edges() {
        wtr.write_record([&net.node_labels[i], &net.node_labels[j], &t.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn intern<'a>(
    index: &mut HashMap<&'a str, usize>,
    labels: &mut Vec<String>,
    label: &'a str,
) -> usize {
    *index.entry(label).or_insert_with(|| {
        labels.push(label.to_string());
        labels.len() - 1
    })
}

/// Build a network from edge rows.
///
/// Nodes are indexed in order of first appearance (source before target).
/// Repeated `(source, target, bin)` rows collapse to a single one. Snapshot `0`
/// is the smallest occupied bin; empty bins up to the largest one are kept.
pub fn ingest_snapshots(rows: &[EdgeRow], binning: Binning) -> Result<TemporalNetwork> {
    if rows.is_empty() {
        return Err(Error::Input("edge list is empty".into()));
    }
    if let Binning::Window { width, origin } = binning {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Config(format!(
                "window width must be positive, got {width}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::Config(format!(
                "window origin must be finite, got {origin}"
            )));
        }
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut ones: Vec<(u64, usize, usize)> = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let bin = match binning {
            Binning::Explicit => {
                if !(row.time >= 0.0) || row.time.fract() != 0.0 || row.time > u32::MAX as f64 {
                    return Err(Error::Parse(format!(
                        "row {r}: snapshot index {} is not a non-negative integer",
                        row.time
                    )));
                }
                row.time as u64
            }
            Binning::Window { width, origin } => {
                if !(row.time >= origin) {
                    return Err(Error::Parse(format!(
                        "row {r}: time {} precedes the window origin {origin}",
                        row.time
                    )));
                }
                ((row.time - origin) / width).floor() as u64
            }
        };
        let i = intern(&mut index, &mut labels, &row.source);
        let j = intern(&mut index, &mut labels, &row.target);
        ones.push((bin, i, j));
    }
    let first = ones.iter().map(|o| o.0).min().expect("non-empty");
    let last = ones.iter().map(|o| o.0).max().expect("non-empty");
    let n_steps = (last - first) as usize;
    TemporalNetwork::from_edges(
        labels,
        n_steps,
        ones.into_iter()
            .map(|(b, i, j)| ((b - first) as usize, i, j)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub drop_self_loops: bool,
    pub require_bidirectional_degree: bool,
    pub giant_component: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            drop_self_loops: true,
            require_bidirectional_degree: true,
            giant_component: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub removed_self_loops: usize,
    pub removed_nodes_degree: usize,
    pub removed_nodes_component: usize,
    pub final_n: usize,
    pub final_edges_per_snapshot: Vec<usize>,
}

/// Clean a network: self-loops, then the in/out degree filter (to a fixed
/// point), then the largest weakly connected component of the aggregated graph.
pub fn preprocess(
    net: &TemporalNetwork,
    options: PreprocessOptions,
) -> Result<(TemporalNetwork, PreprocessReport)> {
    let n = net.n_nodes();
    let mut work = net.clone();
    let mut removed_self_loops = 0;
    if options.drop_self_loops {
        for t in 0..=work.n_steps() {
            for i in 0..n {
                if work.get(t, i, i) == 1 {
                    work.set(t, i, i, 0);
                    removed_self_loops += 1;
                }
            }
        }
    }

    let agg = work.aggregated();
    let mut alive = vec![true; n];
    let mut removed_nodes_degree = 0;
    if options.require_bidirectional_degree {
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for i in 0..n {
            for j in 0..n {
                if agg[i * n + j] == 1 {
                    out_deg[i] += 1;
                    in_deg[j] += 1;
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..n)
            .filter(|&i| out_deg[i] == 0 || in_deg[i] == 0)
            .collect();
        while let Some(i) = queue.pop_front() {
            if !alive[i] {
                continue;
            }
            alive[i] = false;
            removed_nodes_degree += 1;
            for j in 0..n {
                if !alive[j] {
                    continue;
                }
                if agg[i * n + j] == 1 {
                    in_deg[j] -= 1;
                    if in_deg[j] == 0 {
                        queue.push_back(j);
                    }
                }
                if agg[j * n + i] == 1 {
                    out_deg[j] -= 1;
                    if out_deg[j] == 0 {
                        queue.push_back(j);
                    }
                }
            }
        }
    }

    let mut removed_nodes_component = 0;
    if options.giant_component {
        let mut comp = vec![usize::MAX; n];
        let mut sizes = Vec::new();
        for s in 0..n {
            if !alive[s] || comp[s] != usize::MAX {
                continue;
            }
            let c = sizes.len();
            let mut size = 0;
            let mut stack = vec![s];
            comp[s] = c;
            while let Some(i) = stack.pop() {
                size += 1;
                for j in 0..n {
                    if alive[j]
                        && comp[j] == usize::MAX
                        && (agg[i * n + j] == 1 || agg[j * n + i] == 1)
                    {
                        comp[j] = c;
                        stack.push(j);
                    }
                }
            }
            sizes.push(size);
        }
        // Largest component; ties go to the one discovered first (smallest node index).
        if let Some(best) =
            (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        {
            for i in 0..n {
                if alive[i] && comp[i] != best {
                    alive[i] = false;
                    removed_nodes_component += 1;
                }
            }
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    if keep.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let out = if keep.len() == n {
        work
    } else {
        work.induced(&keep)
    };
    let report = PreprocessReport {
        removed_self_loops,
        removed_nodes_degree,
        removed_nodes_component,
        final_n: out.n_nodes(),
        final_edges_per_snapshot: (0..=out.n_steps()).map(|t| out.edge_count(t)).collect(),
    };
    Ok((out, report))
}

/// Indicator of newly appeared edges: `Â(0) = A(0)`, `Â(t) = A(t)(1 - A(t-1))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HatView {
    n_nodes: usize,
    n_steps: usize,
    a_hat: Vec<u8>,
}

impl HatView {
    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> u8 {
        self.a_hat[(t * self.n_nodes + i) * self.n_nodes + j]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn count(&self, t: usize) -> usize {
        let nn = self.n_nodes * self.n_nodes;
        self.a_hat[t * nn..(t + 1) * nn]
            .iter()
            .map(|&a| a as usize)
            .sum()
    }

    /// `β̂(0) = 1`, `β̂(t) = β` for `t ≥ 1`.
    #[inline]
    pub fn beta_hat(t: usize, beta: f64) -> f64 {
        if t == 0 {
            1.0
        } else {
            beta
        }
    }
}

pub fn hat_transform(net: &TemporalNetwork) -> HatView {
    let nn = net.n_nodes() * net.n_nodes();
    let mut a_hat = Vec::with_capacity(nn * net.n_snapshots());
    a_hat.extend_from_slice(net.snapshot(0));
    for t in 1..=net.n_steps() {
        let prev = net.snapshot(t - 1);
        let cur = net.snapshot(t);
        a_hat.extend(cur.iter().zip(prev).map(|(&c, &p)| c & (1 - p)));
    }
    HatView {
        n_nodes: net.n_nodes(),
        n_steps: net.n_steps(),
        a_hat,
    }
}

/// Unordered pairs `i < j` with at least one observed edge (either direction, any `t`).
pub fn connected_pairs(net: &TemporalNetwork) -> BTreeSet<(usize, usize)> {
    let n = net.n_nodes();
    let agg = net.aggregated();
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if agg[i * n + j] == 1 || agg[j * n + i] == 1 {
                out.insert((i, j));
            }
        }
    }
    out
}

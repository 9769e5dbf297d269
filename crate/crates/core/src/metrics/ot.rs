//! Exact discrete optimal transport by primal network simplex.
//!
//! The transportation problem is posed on a complete bipartite graph whose
//! arcs are never materialized: costs come from a closure and nonbasic arcs
//! all sit at zero flow, so only the spanning-tree basis is stored. Masses are
//! scaled to integers so pivots are exact and degeneracy is handled by the
//! strongly feasible tree rule (no cycling).

use crate::error::{Error, Result};

/// Integer units per unit of mass.
const SCALE: f64 = (1u64 << 50) as f64;

/// Weights below this fraction of the total are dropped before solving.
pub const SPARSITY_CUTOFF: f64 = 1e-12;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub row: f64,
    pub col: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn distance(&self, other: &WeightedPoint) -> f64 {
        (self.row - other.row).hypot(self.col - other.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasurePair {
    pub source: Vec<WeightedPoint>,
    pub sink: Vec<WeightedPoint>,
}

/// One nonzero entry of a coupling, indexing the caller's original points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: usize,
    pub sink: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    pub entries: Vec<PlanEntry>,
    pub pivots: usize,
}

/// Solves the pair under the Euclidean ground metric.
pub fn solve_ot(pair: &DiscreteMeasurePair) -> Result<TransportPlan> {
    let a: Vec<f64> = pair.source.iter().map(|p| p.weight).collect();
    let b: Vec<f64> = pair.sink.iter().map(|p| p.weight).collect();
    solve_transport(&a, &b, |i, j| pair.source[i].distance(&pair.sink[j]))
}

/// Minimum-cost coupling of `a` and `b` under `cost(i, j) >= 0`.
///
/// The weight totals must agree to 1e-9 relative. The solve runs on unit
/// mass and the plan and cost are scaled back by the source total.
pub fn solve_transport(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<TransportPlan> {
    let (sa, sb) = (checked_total(a)?, checked_total(b)?);
    if (sa - sb).abs() > MASS_TOLERANCE * sa.max(sb) || sa == 0.0 {
        return Err(Error::Mass { source_mass: sa, sink_mass: sb });
    }
    let (src_idx, src_units) = to_units(a, sa);
    let (snk_idx, snk_units) = to_units(b, sb);
    let c = |i: usize, j: usize| cost(src_idx[i], snk_idx[j]);
    let mut solver = Simplex::new(&src_units, &snk_units, &c)?;
    solver.run(&c);

    let mut entries = Vec::new();
    let mut total = 0.0;
    for (i, j, units) in solver.real_flows() {
        let mass = units as f64 / SCALE * sa;
        total += mass * c(i, j);
        entries.push(PlanEntry { source: src_idx[i], sink: snk_idx[j], mass });
    }
    entries.sort_by_key(|e| (e.source, e.sink));
    Ok(TransportPlan { cost: total, entries, pivots: solver.pivots })
}

fn checked_total(w: &[f64]) -> Result<f64> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Mass { source_mass: f64::NAN, sink_mass: f64::NAN });
    }
    Ok(w.iter().sum())
}

/// Keeps entries holding at least the cutoff fraction and rescales them to
/// integers summing exactly to `SCALE`.
fn to_units(w: &[f64], total: f64) -> (Vec<usize>, Vec<i64>) {
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] >= SPARSITY_CUTOFF * total && w[i] > 0.0).collect();
    let kept: f64 = keep.iter().map(|&i| w[i]).sum();
    let mut units: Vec<i64> = keep.iter().map(|&i| (w[i] / kept * SCALE).round() as i64).collect();
    let residual = SCALE as i64 - units.iter().sum::<i64>();
    let largest = (0..units.len()).max_by_key(|&k| (units[k], std::cmp::Reverse(k))).unwrap();
    units[largest] += residual;
    (keep, units)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dir {
    /// Tree arc points from the node to its parent.
    Up,
    /// Tree arc points from the parent to the node.
    Down,
}

const NONE: usize = usize::MAX;

/// Cheapest sinks per source seeded into the candidate list.
const NEAREST: usize = 3;

/// Nodes `0..m` are sources, `m..m+n` sinks, `m+n` the artificial root.
/// Arc ids `0..m*n` are real arcs `i -> m+j`; arc `m*n + v` is the artificial
/// arc between node `v` and the root.
///
/// Pricing works on a candidate list: every artificial arc plus the cheapest
/// arcs out of each source. Only when no candidate prices out is the full
/// arc set scanned, and its most negative arc per source joins the list. The
/// run stops after a full scan finds nothing, so the result is optimal.
struct Simplex {
    m: usize,
    n: usize,
    big_m: f64,
    eps: f64,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_cost: Vec<f64>,
    dir: Vec<Dir>,
    flow: Vec<i64>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    candidates: Candidates,
    stack: Vec<usize>,
    pivots: usize,
}

#[derive(Default)]
struct Candidates {
    arc: Vec<usize>,
    tail: Vec<u32>,
    head: Vec<u32>,
    cost: Vec<f64>,
    next: usize,
}

impl Candidates {
    fn push(&mut self, arc: usize, tail: usize, head: usize, cost: f64) {
        self.arc.push(arc);
        self.tail.push(tail as u32);
        self.head.push(head as u32);
        self.cost.push(cost);
    }
}

/// An arc about to enter the basis.
#[derive(Clone, Copy)]
struct Entering {
    arc: usize,
    tail: usize,
    head: usize,
    cost: f64,
}

impl Simplex {
    fn new(a: &[i64], b: &[i64], cost: &impl Fn(usize, usize) -> f64) -> Result<Self> {
        let (m, n) = (a.len(), b.len());
        let mut max_cost: f64 = 0.0;
        for i in 0..m {
            for j in 0..n {
                let c = cost(i, j);
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Config(format!("transport cost ({i}, {j}) = {c} is not a finite nonnegative value")));
                }
                max_cost = max_cost.max(c);
            }
        }
        let nodes = m + n + 1;
        let root = m + n;
        let big_m = (max_cost + 1.0) * nodes as f64;
        let mut s = Simplex {
            m,
            n,
            big_m,
            eps: 1e-12 * big_m,
            parent: vec![root; nodes],
            pred: (0..nodes).map(|v| m * n + v).collect(),
            pred_cost: vec![big_m; nodes],
            dir: vec![Dir::Up; nodes],
            flow: vec![0; nodes],
            depth: vec![1; nodes],
            pi: vec![0.0; nodes],
            first_child: vec![NONE; nodes],
            next_sib: vec![NONE; nodes],
            prev_sib: vec![NONE; nodes],
            candidates: Candidates::default(),
            stack: Vec::new(),
            pivots: 0,
        };
        s.parent[root] = NONE;
        s.pred[root] = NONE;
        s.depth[root] = 0;
        s.greedy_start(a, b, cost);
        s.seed_candidates(cost);
        Ok(s)
    }

    /// Starting basis from a greedy plan: sources, nearest to any sink
    /// first, ship to their cheapest sink with demand left. Every step
    /// exhausts a source or a sink, so the plan is a forest. Each component
    /// hangs off the root through the zero-flow artificial arc of one of its
    /// sinks, which keeps the tree strongly feasible.
    fn greedy_start(&mut self, a: &[i64], b: &[i64], cost: &impl Fn(usize, usize) -> f64) {
        let (m, n) = (self.m, self.n);
        let root = m + n;
        let mut demand = b.to_vec();
        let mut open: Vec<usize> = (0..n).collect();
        let mut adjacent: Vec<Vec<(usize, i64)>> = vec![Vec::new(); m + n];
        let mut order: Vec<(f64, usize)> =
            (0..m).map(|i| ((0..n).map(|j| cost(i, j)).fold(f64::INFINITY, f64::min), i)).collect();
        order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, i) in &order {
            let mut left = a[i];
            while left > 0 {
                let k = (0..open.len())
                    .min_by(|&x, &y| cost(i, open[x]).total_cmp(&cost(i, open[y])).then(open[x].cmp(&open[y])))
                    .expect("sink demand matches source supply");
                let j = open[k];
                let f = left.min(demand[j]);
                left -= f;
                demand[j] -= f;
                if demand[j] == 0 {
                    open.swap_remove(k);
                }
                adjacent[i].push((m + j, f));
                adjacent[m + j].push((i, f));
            }
        }
        let mut seen = vec![false; m + n];
        let mut stack = Vec::new();
        for anchor in m..m + n {
            if seen[anchor] {
                continue;
            }
            seen[anchor] = true;
            self.attach(anchor, root, m * n + anchor, Dir::Down, 0, self.big_m);
            stack.push(anchor);
            while let Some(u) = stack.pop() {
                for &(v, f) in &adjacent[u] {
                    if seen[v] {
                        continue;
                    }
                    seen[v] = true;
                    let (i, j) = if v < m { (v, u - m) } else { (u, v - m) };
                    let dir = if v < m { Dir::Up } else { Dir::Down };
                    self.attach(v, u, i * n + j, dir, f, cost(i, j));
                    stack.push(v);
                }
            }
        }
    }

    fn attach(&mut self, v: usize, p: usize, arc: usize, dir: Dir, flow: i64, c: f64) {
        self.parent[v] = p;
        self.pred[v] = arc;
        self.pred_cost[v] = c;
        self.dir[v] = dir;
        self.flow[v] = flow;
        self.depth[v] = self.depth[p] + 1;
        self.pi[v] = match dir {
            Dir::Up => self.pi[p] - c,
            Dir::Down => self.pi[p] + c,
        };
        self.link_child(p, v);
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn seed_candidates(&mut self, cost: &impl Fn(usize, usize) -> f64) {
        let (m, n) = (self.m, self.n);
        let keep = NEAREST.min(n);
        let mut row: Vec<(f64, usize)> = Vec::with_capacity(n);
        for i in 0..m {
            row.clear();
            row.extend((0..n).map(|j| (cost(i, j), j)));
            if keep < n {
                row.select_nth_unstable_by(keep - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            }
            for &(c, j) in &row[..keep] {
                self.candidates.push(i * n + j, i, m + j, c);
            }
        }
        let root = self.root();
        for v in 0..root {
            let (tail, head) = if v < m { (v, root) } else { (root, v) };
            self.candidates.push(m * n + v, tail, head, self.big_m);
        }
    }

    /// Block search over the candidate list: scan cyclically and return the
    /// most negative reduced cost in the first block that has one.
    fn candidate_arc(&mut self) -> Option<Entering> {
        let cand = &self.candidates;
        let len = cand.arc.len();
        let block = ((len as f64).sqrt().ceil() as usize).max(10);
        let mut best = NONE;
        let mut best_rc = -self.eps;
        let mut k = cand.next % len;
        for scanned in 1..=len {
            let rc = cand.cost[k] + self.pi[cand.tail[k] as usize] - self.pi[cand.head[k] as usize];
            if rc < best_rc {
                best_rc = rc;
                best = k;
            }
            k += 1;
            if k == len {
                k = 0;
            }
            if scanned % block == 0 && best != NONE {
                break;
            }
        }
        let found = (best != NONE).then(|| Entering {
            arc: cand.arc[best],
            tail: cand.tail[best] as usize,
            head: cand.head[best] as usize,
            cost: cand.cost[best],
        });
        self.candidates.next = k;
        found
    }

    /// Scans every real arc, adds the most negative one per source to the
    /// candidates and returns the overall most negative.
    fn full_scan(&mut self, cost: &impl Fn(usize, usize) -> f64) -> Option<Entering> {
        let (m, n) = (self.m, self.n);
        let mut best: Option<Entering> = None;
        let mut best_rc = -self.eps;
        for i in 0..m {
            let pi_i = self.pi[i];
            let mut row: Option<(usize, f64)> = None;
            let mut row_rc = -self.eps;
            for (j, &pi_j) in self.pi[m..m + n].iter().enumerate() {
                let c = cost(i, j);
                let rc = c + pi_i - pi_j;
                if rc < row_rc {
                    row_rc = rc;
                    row = Some((j, c));
                }
            }
            if let Some((j, c)) = row {
                let e = Entering { arc: i * n + j, tail: i, head: m + j, cost: c };
                self.candidates.push(e.arc, e.tail, e.head, e.cost);
                if row_rc < best_rc {
                    best_rc = row_rc;
                    best = Some(e);
                }
            }
        }
        best
    }

    fn run(&mut self, cost: &impl Fn(usize, usize) -> f64) {
        while let Some(e) = self.candidate_arc().or_else(|| self.full_scan(cost)) {
            self.pivot(e);
            self.pivots += 1;
        }
    }

    fn pivot(&mut self, e: Entering) {
        let (first, second) = (e.tail, e.head);
        let join = self.join(first, second);

        // Leaving arc: the last blocking arc met going round the cycle in
        // the orientation of the entering arc, starting at the join.
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut on_first_side = true;
        let mut u = first;
        while u != join {
            if self.dir[u] == Dir::Up && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if self.dir[u] == Dir::Down && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                on_first_side = false;
            }
            u = self.parent[u];
        }
        debug_assert!(u_out != NONE, "uncapacitated problem cannot be unbounded");

        if delta > 0 {
            let mut u = first;
            while u != join {
                self.flow[u] += if self.dir[u] == Dir::Up { -delta } else { delta };
                u = self.parent[u];
            }
            u = second;
            while u != join {
                self.flow[u] += if self.dir[u] == Dir::Up { delta } else { -delta };
                u = self.parent[u];
            }
        }

        let (stem, new_parent) = if on_first_side { (first, second) } else { (second, first) };
        let stem_dir = if stem == first { Dir::Up } else { Dir::Down };
        self.rehang(stem, new_parent, u_out, (e.arc, stem_dir, delta, e.cost));
        self.refresh_subtree(stem);
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while self.depth[u] > self.depth[v] {
            u = self.parent[u];
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v];
        }
        while u != v {
            u = self.parent[u];
            v = self.parent[v];
        }
        u
    }

    /// Reverses the tree path `stem .. u_out` and hangs it under `new_parent`
    /// through the entering arc.
    fn rehang(&mut self, stem: usize, new_parent: usize, u_out: usize, entering: (usize, Dir, i64, f64)) {
        let mut carried = entering;
        let mut above = new_parent;
        let mut w = stem;
        loop {
            let old_parent = self.parent[w];
            let old = (self.pred[w], self.dir[w], self.flow[w], self.pred_cost[w]);
            self.unlink_child(old_parent, w);
            self.parent[w] = above;
            (self.pred[w], self.dir[w], self.flow[w], self.pred_cost[w]) = carried;
            self.link_child(above, w);
            if w == u_out {
                break;
            }
            carried = (old.0, flip(old.1), old.2, old.3);
            above = w;
            w = old_parent;
        }
    }

    fn refresh_subtree(&mut self, top: usize) {
        let mut stack = std::mem::take(&mut self.stack);
        stack.push(top);
        while let Some(w) = stack.pop() {
            let p = self.parent[w];
            self.depth[w] = self.depth[p] + 1;
            self.pi[w] = match self.dir[w] {
                Dir::Up => self.pi[p] - self.pred_cost[w],
                Dir::Down => self.pi[p] + self.pred_cost[w],
            };
            let mut ch = self.first_child[w];
            while ch != NONE {
                stack.push(ch);
                ch = self.next_sib[ch];
            }
        }
        self.stack = stack;
    }

    fn link_child(&mut self, p: usize, c: usize) {
        let head = self.first_child[p];
        self.next_sib[c] = head;
        self.prev_sib[c] = NONE;
        if head != NONE {
            self.prev_sib[head] = c;
        }
        self.first_child[p] = c;
    }

    fn unlink_child(&mut self, p: usize, c: usize) {
        let (prev, next) = (self.prev_sib[c], self.next_sib[c]);
        if prev == NONE {
            self.first_child[p] = next;
        } else {
            self.next_sib[prev] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
    }

    fn real_flows(&self) -> Vec<(usize, usize, i64)> {
        let mn = self.m * self.n;
        (0..self.root())
            .filter(|&v| self.pred[v] < mn && self.flow[v] > 0)
            .map(|v| (self.pred[v] / self.n, self.pred[v] % self.n, self.flow[v]))
            .collect()
    }
}

fn flip(d: Dir) -> Dir {
    match d {
        Dir::Up => Dir::Down,
        Dir::Down => Dir::Up,
    }
}

//! Exact optimal transport between discrete measures, by a primal network
//! simplex on the bipartite transportation network.
//!
//! Arcs from every source atom to every target atom are implicit: arc
//! `e = i * nb + j` costs `|a_i - b_j|^2` and is never materialized. All
//! capacities are infinite, so a non-tree arc always carries zero flow and
//! only the tree flows need storing. The spanning tree is kept in
//! parent/thread form with a strongly feasible tie-breaking rule for the
//! leaving arc, which rules out cycling on degenerate pivots.

use crate::error::{Error, Result};
use crate::metrics::measure::DiscreteMeasure;
use crate::point::Point;

/// Largest support size accepted on either side.
pub const MAX_ATOMS: usize = 5000;

/// Atoms lighter than this fraction of the heaviest are dropped.
pub const WEIGHT_THRESHOLD: f64 = 1e-12;

/// Relative mismatch of total masses tolerated before normalization.
pub const MASS_TOLERANCE: f64 = 1e-9;

const NONE: usize = usize::MAX;
const UP: i8 = 1;
const DOWN: i8 = -1;

/// Optimal plan between two measures, after both are normalized to unit mass.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// Primal cost: `sum flow * |a_i - b_j|^2`.
    pub cost: f64,
    /// Dual objective from the final node potentials.
    pub dual_cost: f64,
    pub pivots: usize,
    /// `(i, j, flow)` with indices into the caller's measures.
    pub plan: Vec<(usize, usize, f64)>,
}

/// `W2` between two planar measures of equal mass.
pub fn w2_2d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    Ok(solve(a, b)?.cost.max(0.0).sqrt())
}

/// Solves the transportation problem between `a` and `b` with squared
/// Euclidean cost.
pub fn solve(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<TransportSolution> {
    let (ta, tb) = (a.total(), b.total());
    if (ta - tb).abs() > MASS_TOLERANCE * ta.max(tb) {
        return Err(Error::MassMismatch { left: ta, right: tb });
    }
    let (ia, pa, wa) = prepare(a);
    let (ib, pb, wb) = prepare(b);
    for n in [pa.len(), pb.len()] {
        if n > MAX_ATOMS {
            return Err(Error::TooLarge(n, MAX_ATOMS));
        }
    }
    let mut s = Simplex::new(&pa, &pb, &wa, &wb);
    s.run()?;
    let mut sol = s.solution();
    for t in &mut sol.plan {
        t.0 = ia[t.0];
        t.1 = ib[t.1];
    }
    Ok(sol)
}

/// Kept atoms with their original indices and unit-normalized weights.
fn prepare(m: &DiscreteMeasure) -> (Vec<usize>, Vec<Point>, Vec<f64>) {
    let wmax = m.weights().iter().cloned().fold(0.0, f64::max);
    let cut = WEIGHT_THRESHOLD * wmax;
    let mut idx = Vec::new();
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (k, (&p, &w)) in m.points().iter().zip(m.weights()).enumerate() {
        if w > cut {
            idx.push(k);
            pts.push(p);
            ws.push(w);
        }
    }
    let t: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= t);
    (idx, pts, ws)
}

struct Simplex<'a> {
    src: &'a [Point],
    dst: &'a [Point],
    na: usize,
    nb: usize,
    arcs: usize,
    root: usize,
    supply: Vec<f64>,
    art_cost: f64,
    eps: f64,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    pred_flow: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    in_tree: Vec<bool>,
    dirty: Vec<usize>,

    block: usize,
    next_arc: usize,
    pivots: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn new(src: &'a [Point], dst: &'a [Point], wa: &[f64], wb: &[f64]) -> Self {
        let (na, nb) = (src.len(), dst.len());
        let n = na + nb;
        let root = n;
        let arcs = na * nb;

        // bounding-box diagonal bounds every arc cost
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in src.iter().chain(dst) {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let max_cost = (hi - lo).norm_sq();
        let art_cost = (max_cost + 1.0) * n as f64;

        let mut supply = Vec::with_capacity(n + 1);
        supply.extend_from_slice(wa);
        supply.extend(wb.iter().map(|w| -w));
        supply.push(0.0);

        let mut s = Simplex {
            src,
            dst,
            na,
            nb,
            arcs,
            root,
            supply,
            art_cost,
            eps: 1e-14 * art_cost,
            parent: vec![root; n + 1],
            pred: vec![NONE; n + 1],
            pred_dir: vec![UP; n + 1],
            pred_flow: vec![0.0; n + 1],
            thread: vec![0; n + 1],
            rev_thread: vec![0; n + 1],
            succ_num: vec![1; n + 1],
            last_succ: (0..=n).collect(),
            pi: vec![0.0; n + 1],
            in_tree: vec![false; arcs],
            dirty: Vec::new(),
            block: ((arcs as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            pivots: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };

        // every node hangs off the root by its artificial arc; sources point
        // up at zero cost, sinks are fed from the root at the big-M cost
        s.parent[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = n + 1;
        s.last_succ[root] = root - 1;
        for u in 0..n {
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.pred[u] = arcs + u;
            if u < na {
                s.pred_dir[u] = UP;
                s.pred_flow[u] = s.supply[u];
            } else {
                s.pred_dir[u] = DOWN;
                s.pred_flow[u] = -s.supply[u];
                s.pi[u] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arcs {
            e / self.nb
        } else {
            let u = e - self.arcs;
            if u < self.na {
                u
            } else {
                self.root
            }
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arcs {
            self.na + e % self.nb
        } else {
            let u = e - self.arcs;
            if u < self.na {
                self.root
            } else {
                u
            }
        }
    }

    #[inline]
    fn cost(&self, e: usize) -> f64 {
        if e < self.arcs {
            (self.src[e / self.nb] - self.dst[e % self.nb]).norm_sq()
        } else if e - self.arcs < self.na {
            0.0
        } else {
            self.art_cost
        }
    }

    fn run(&mut self) -> Result<()> {
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Transport("unbounded pivot".into()));
            }
            self.change_flow();
            self.update_tree();
            self.update_potential();
            self.pivots += 1;
        }
        self.check()
    }

    /// Block search: scan arcs cyclically and take the most negative reduced
    /// cost among the first block that contains one.
    fn find_entering_arc(&mut self) -> bool {
        let (na, nb) = (self.na, self.nb);
        let mut min = -self.eps;
        let mut found = NONE;
        let mut cnt = self.block;
        let mut e = self.next_arc;
        let (mut i, mut j) = (e / nb, e % nb);
        for _ in 0..self.arcs {
            if !self.in_tree[e] {
                let c = (self.src[i] - self.dst[j]).norm_sq() + self.pi[i] - self.pi[na + j];
                if c < min {
                    min = c;
                    found = e;
                }
            }
            cnt -= 1;
            e += 1;
            j += 1;
            if j == nb {
                j = 0;
                i += 1;
                if i == na {
                    i = 0;
                    e = 0;
                }
            }
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = self.block;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Flow goes around the cycle in the direction of the entering arc; the
    /// leaving arc is the last blocking one met from the join node, which
    /// keeps the tree strongly feasible.
    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP && self.pred_flow[u] < delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN && self.pred_flow[u] <= delta {
                delta = self.pred_flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 0 {
            return false;
        }
        self.delta = delta;
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        true
    }

    fn change_flow(&mut self) {
        let d = self.delta;
        if d > 0.0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.pred_flow[u] -= f64::from(self.pred_dir[u]) * d;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                self.pred_flow[u] += f64::from(self.pred_dir[u]) * d;
                u = self.parent[u];
            }
        }
        self.in_tree[self.in_arc] = true;
        let out = self.pred[self.u_out];
        if out < self.arcs {
            self.in_tree[out] = false;
        }
    }

    fn update_tree(&mut self) {
        let (u_in, v_in, u_out, join) = (self.u_in, self.v_in, self.u_out, self.join);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(self.in_arc) { UP } else { DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem u_in .. u_out under v_in, splicing each
            // subtree into the thread after its new parent
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty.clear();
            self.dirty.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty.len() {
                let u = self.dirty[k];
                self.rev_thread[self.thread[u]] = u;
            }

            // tree arcs along the stem shift one node down and flip
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.pred_flow[u] = self.pred_flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.pred_flow[u_in] = self.delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - f64::from(self.pred_dir[u_in]) * self.cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Optimality certificate: no real arc has a negative reduced cost beyond
    /// rounding, and the artificial arcs carry no more than rounding flow.
    fn check(&self) -> Result<()> {
        let tol = 1e-9 * self.art_cost;
        for i in 0..self.na {
            for j in 0..self.nb {
                let c = (self.src[i] - self.dst[j]).norm_sq() + self.pi[i] - self.pi[self.na + j];
                if c < -tol {
                    return Err(Error::Transport(format!("reduced cost {c:e} on arc ({i}, {j}) after termination")));
                }
            }
        }
        for u in 0..self.root {
            if self.pred[u] >= self.arcs && self.pred_flow[u] > 1e-9 {
                return Err(Error::Transport(format!("infeasible: {:e} units left on an artificial arc", self.pred_flow[u])));
            }
        }
        Ok(())
    }

    fn solution(&self) -> TransportSolution {
        let mut cost = 0.0;
        let mut plan = Vec::new();
        for u in 0..self.root {
            let e = self.pred[u];
            if e < self.arcs && self.pred_flow[u] > 0.0 {
                cost += self.pred_flow[u] * self.cost(e);
                plan.push((e / self.nb, e % self.nb, self.pred_flow[u]));
            }
        }
        let dual_cost = -(0..self.root).map(|u| self.supply[u] * self.pi[u]).sum::<f64>();
        TransportSolution {
            cost,
            dual_cost,
            pivots: self.pivots,
            plan,
        }
    }
}

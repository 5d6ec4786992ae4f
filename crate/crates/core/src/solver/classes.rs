//! Exact active-set solver for the selection problem when no topology row binds.
//!
//! Every column touched by an equivalence row is a "merge variable"; all other columns are
//! eliminated, which turns the residual ball into the ellipsoid
//! `(m − m₀)ᵀ P (m − m₀) ≤ δ² − r_ls²` with `P` the Schur complement of the normal matrix.
//! A support is a partition of the merge variables into classes (zero rows) plus a sign for
//! every row joining two classes. On a support the objective is linear and the minimizer over
//! the ellipsoid has a closed form; the method walks from the least-squares point, merging
//! the first row whose gap crosses zero, and splits a class along a minimum cut when its zero
//! rows cannot carry the stationarity flow with unit capacities.

use std::collections::VecDeque;

use super::lsq::{normal_solve, residual_vec};
use super::SolverError;
use crate::linalg::{CsrMatrix, SparseCholesky};
use crate::scalar::{dot, norm2, norm_inf, Real};
use crate::union_find::DisjointSets;

pub(crate) struct ClassSolution<T> {
    pub xi: Vec<T>,
    pub y_e: Vec<T>,
    pub lambda: T,
    pub steps: usize,
}

fn dense_to_csr<T: Real>(m: &[Vec<T>]) -> CsrMatrix<T> {
    let n = m.len();
    let mut entries = Vec::with_capacity(n * n);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            entries.push((i, j, v));
        }
    }
    CsrMatrix::from_triplets(n, n, entries)
}

fn mat_vec<T: Real>(m: &[Vec<T>], x: &[T]) -> Vec<T> {
    m.iter().map(|row| dot(row, x)).collect()
}

struct Flow<T> {
    /// Arcs as `(to, capacity, reverse arc)`.
    arcs: Vec<(usize, T, usize)>,
    adj: Vec<Vec<usize>>,
}

impl<T: Real> Flow<T> {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: T) -> usize {
        let id = self.arcs.len();
        self.arcs.push((to, cap, id + 1));
        self.arcs.push((from, T::zero(), id));
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Shortest-augmenting-path max flow; returns the flow value.
    fn max_flow(&mut self, s: usize, t: usize, eps: T) -> T {
        let mut total = T::zero();
        loop {
            let mut prev = vec![usize::MAX; self.adj.len()];
            let mut queue = VecDeque::from([s]);
            prev[s] = usize::MAX - 1;
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &a in &self.adj[u] {
                    let (v, cap, _) = self.arcs[a];
                    if cap > eps && prev[v] == usize::MAX {
                        prev[v] = a;
                        queue.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut push = T::infinity();
            let mut v = t;
            while v != s {
                let a = prev[v];
                push = push.min(self.arcs[a].1);
                v = self.arcs[self.arcs[a].2].0;
            }
            let mut v = t;
            while v != s {
                let a = prev[v];
                let r = self.arcs[a].2;
                self.arcs[a].1 -= push;
                self.arcs[r].1 += push;
                v = self.arcs[r].0;
            }
            total += push;
        }
    }

    fn reachable(&self, s: usize, eps: T) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &a in &self.adj[u] {
                let (v, cap, _) = self.arcs[a];
                if cap > eps && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Result of routing the stationarity flow through one class.
enum ClassCheck<T> {
    /// Multipliers of the class's zero rows.
    Feasible(Vec<(usize, T)>),
    /// Members (local indices) on the source side of a violated cut, and the sign of their
    /// net supply.
    Cut(Vec<bool>, T),
}

/// Routes supplies `h` over the zero rows of one class, each with capacity one in either
/// direction. Row `(a, b)` carries multiplier `u` as flow `u` from `b` to `a`.
fn check_class<T: Real>(members: &[usize], local: &[usize], rows: &[(usize, usize, usize)], h: &[T]) -> ClassCheck<T> {
    let q = members.len();
    let (s, t) = (q, q + 1);
    let scale = members.iter().map(|&j| h[j].abs()).fold(T::one(), |acc, v| acc + v);
    let eps = T::lit(1e-13) * scale;
    let mut net = Flow::new(q + 2);
    let mut supply = T::zero();
    for (l, &j) in members.iter().enumerate() {
        if h[j] > T::zero() {
            net.add(s, l, h[j]);
            supply += h[j];
        } else if h[j] < T::zero() {
            net.add(l, t, -h[j]);
        }
    }
    let arcs: Vec<(usize, usize, usize)> = rows
        .iter()
        .map(|&(r, a, b)| {
            (
                r,
                net.add(local[b], local[a], T::one()),
                net.add(local[a], local[b], T::one()),
            )
        })
        .collect();
    let sent = net.max_flow(s, t, eps);
    if sent >= supply - T::lit(1e-10) * scale {
        // Flow on an arc is the capacity its reverse picked up.
        let flow = |id: usize| net.arcs[id + 1].1;
        return ClassCheck::Feasible(arcs.into_iter().map(|(r, ba, ab)| (r, flow(ba) - flow(ab))).collect());
    }
    let seen = net.reachable(s, eps);
    let side: Vec<bool> = seen[..q].to_vec();
    let h_s: T = members.iter().zip(&side).filter(|(_, &x)| x).map(|(&j, _)| h[j]).sum();
    ClassCheck::Cut(side, h_s)
}

/// Minimizes `‖E ξ‖₁` over `‖A ξ − b‖ ≤ δ` without topology rows. `None` means the walk hit
/// a degenerate configuration or its step cap; the caller then falls back to a slower method.
pub(crate) fn solve_by_merge_classes<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    delta: T,
    pairs: &[(usize, usize)],
    max_steps: usize,
) -> Result<Option<ClassSolution<T>>, SolverError> {
    let n = a.ncols();
    let me = pairs.len();
    let xi_ls = normal_solve(a, b)?;
    let r_ls = norm2(&residual_vec(a, &xi_ls, b));
    let kappa2 = delta * delta - r_ls * r_ls;
    if !(kappa2 > T::zero()) {
        return Ok(None);
    }

    let mut cols: Vec<usize> = pairs.iter().flat_map(|&(c0, c1)| [c0, c1]).collect();
    cols.sort_unstable();
    cols.dedup();
    let k = cols.len();
    let mut index = vec![usize::MAX; n];
    for (i, &c) in cols.iter().enumerate() {
        index[c] = i;
    }
    let rows: Vec<(usize, usize)> = pairs.iter().map(|&(c0, c1)| (index[c0], index[c1])).collect();

    let gram = a.gram();
    let Ok(chol) = SparseCholesky::factor(&gram) else {
        return Ok(None);
    };
    // Columns of (AᵀA)⁻¹ at the merge variables.
    let y: Vec<Vec<T>> = cols
        .iter()
        .map(|&c| {
            let mut unit = vec![T::zero(); n];
            unit[c] = T::one();
            chol.solve_refined(&gram, &unit, 1)
        })
        .collect();
    let mut m_cov = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            m_cov[i][j] = (y[j][cols[i]] + y[i][cols[j]]) * T::lit(0.5);
        }
    }
    let Ok(cov_chol) = SparseCholesky::factor(&dense_to_csr(&m_cov)) else {
        return Ok(None);
    };
    let mut p = vec![vec![T::zero(); k]; k];
    for j in 0..k {
        let mut unit = vec![T::zero(); k];
        unit[j] = T::one();
        for (i, v) in cov_chol.solve(&unit).into_iter().enumerate() {
            p[i][j] = v;
        }
    }
    for i in 0..k {
        for j in 0..i {
            let v = (p[i][j] + p[j][i]) * T::lit(0.5);
            p[i][j] = v;
            p[j][i] = v;
        }
    }

    let m0: Vec<T> = cols.iter().map(|&c| xi_ls[c]).collect();
    let p_m0 = mat_vec(&p, &m0);
    let tol = T::lit(1e-12) * norm_inf(&m0).max(T::one());
    let gap = |m: &[T], r: usize| m[rows[r].0] - m[rows[r].1];

    let mut zero = vec![false; me];
    let mut signs = vec![0i8; me];
    for r in 0..me {
        let g = gap(&m0, r);
        if g > T::zero() {
            signs[r] = 1;
        } else if g < T::zero() {
            signs[r] = -1;
        } else {
            zero[r] = true;
        }
    }
    let mut m_cur = m0.clone();

    for step in 0..max_steps {
        let mut sets = DisjointSets::new(k);
        for r in (0..me).filter(|&r| zero[r]) {
            sets.union(rows[r].0, rows[r].1);
        }
        let mut class_id = vec![usize::MAX; k];
        let mut class_of = vec![0; k];
        let mut nc = 0;
        for j in 0..k {
            let root = sets.find(j);
            if class_id[root] == usize::MAX {
                class_id[root] = nc;
                nc += 1;
            }
            class_of[j] = class_id[root];
        }
        for r in 0..me {
            if class_of[rows[r].0] == class_of[rows[r].1] {
                zero[r] = true;
            }
        }

        let mut pz = vec![vec![T::zero(); nc]; nc];
        for i in 0..k {
            for j in 0..k {
                pz[class_of[i]][class_of[j]] += p[i][j];
            }
        }
        let mut rz = vec![T::zero(); nc];
        let mut c_m = vec![T::zero(); k];
        for i in 0..k {
            rz[class_of[i]] += p_m0[i];
        }
        for r in (0..me).filter(|&r| !zero[r]) {
            let s = T::lit(signs[r] as f64);
            c_m[rows[r].0] += s;
            c_m[rows[r].1] -= s;
        }
        let mut c_z = vec![T::zero(); nc];
        for i in 0..k {
            c_z[class_of[i]] += c_m[i];
        }
        let Ok(pz_chol) = SparseCholesky::factor(&dense_to_csr(&pz)) else {
            return Ok(None);
        };
        let z0 = pz_chol.solve(&rz);
        let dev: Vec<T> = (0..k).map(|i| z0[class_of[i]] - m0[i]).collect();
        let q0 = dot(&dev, &mat_vec(&p, &dev));
        // Sign sums are integers, so an exactly vanishing linear term is detectable.
        let (target, lambda) = if norm_inf(&c_z) < T::lit(0.5) {
            (z0, T::zero())
        } else {
            let w = pz_chol.solve(&c_z);
            let slack = kappa2 - q0;
            let cw = dot(&c_z, &w);
            if !(slack > T::zero()) || !(cw > T::zero()) {
                return Ok(None);
            }
            let t = (slack / cw).sqrt();
            (z0.iter().zip(&w).map(|(&z, &wi)| z - t * wi).collect(), T::one() / t)
        };
        let m_tgt: Vec<T> = (0..k).map(|i| target[class_of[i]]).collect();

        let mut alpha = T::one();
        let mut crossing = Vec::new();
        for r in (0..me).filter(|&r| !zero[r]) {
            let s = T::lit(signs[r] as f64);
            let gt = s * gap(&m_tgt, r);
            if gt < -tol {
                let gc = (s * gap(&m_cur, r)).max(T::zero());
                crossing.push((r, gc / (gc - gt)));
                alpha = alpha.min(gc / (gc - gt));
            }
        }
        if !crossing.is_empty() {
            for (mc, &mt) in m_cur.iter_mut().zip(&m_tgt) {
                *mc += alpha * (mt - *mc);
            }
            for (r, ar) in crossing {
                if ar <= alpha + T::lit(1e-12) {
                    zero[r] = true;
                }
            }
            continue;
        }
        m_cur = m_tgt;

        let dm: Vec<T> = m_cur.iter().zip(&m0).map(|(&x, &x0)| x - x0).collect();
        let p_dm = mat_vec(&p, &dm);
        let h: Vec<T> = c_m.iter().zip(&p_dm).map(|(&c, &g)| c + lambda * g).collect();

        let mut members = vec![Vec::new(); nc];
        for j in 0..k {
            members[class_of[j]].push(j);
        }
        let mut class_rows = vec![Vec::new(); nc];
        for r in (0..me).filter(|&r| zero[r]) {
            class_rows[class_of[rows[r].0]].push((r, rows[r].0, rows[r].1));
        }
        let mut local = vec![0; k];
        let mut y_e: Vec<T> = signs.iter().map(|&s| T::lit(s as f64)).collect();
        let mut split = false;
        for c in 0..nc {
            if members[c].len() < 2 {
                continue;
            }
            for (l, &j) in members[c].iter().enumerate() {
                local[j] = l;
            }
            match check_class(&members[c], &local, &class_rows[c], &h) {
                ClassCheck::Feasible(flows) => {
                    for (r, u) in flows {
                        y_e[r] = u;
                    }
                }
                ClassCheck::Cut(side, h_s) => {
                    split = true;
                    let down = if h_s > T::zero() { -1i8 } else { 1 };
                    for &(r, ra, rb) in &class_rows[c] {
                        let (in_a, in_b) = (side[local[ra]], side[local[rb]]);
                        if in_a != in_b {
                            zero[r] = false;
                            signs[r] = if in_a { down } else { -down };
                        }
                    }
                }
            }
        }
        if split {
            continue;
        }

        let mut xi = xi_ls.clone();
        for (yj, &v) in y.iter().zip(&p_dm) {
            for (x, &yv) in xi.iter_mut().zip(yj) {
                *x += v * yv;
            }
        }
        for (r, ye) in y_e.iter_mut().enumerate() {
            if !zero[r] {
                *ye = T::lit(signs[r] as f64);
            }
        }
        return Ok(Some(ClassSolution {
            xi,
            y_e,
            lambda,
            steps: step + 1,
        }));
    }
    Ok(None)
}

use serde::{Deserialize, Serialize};

use super::active_set::constrained_least_squares;
use super::classes::solve_by_merge_classes;
use super::columns::ColumnMap;
use super::lsq::{normal_solve, residual_vec};
use super::oracle::parse_equivalence_rows;
use super::SolverError;
use crate::linalg::{CsrMatrix, SparseCholesky, Triplets};
use crate::scalar::{dot, norm1, norm2, norm_inf, Real};

/// Feasibility tolerance (m) on `D ξ ≤ 0` and relative tolerance of the KKT certificate.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmOptions {
    pub max_iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Iterations between residual checks, step-size updates and polish attempts.
    pub check_every: usize,
    /// Objective change below which the iteration counts as stalled over `stall_window` steps.
    pub stall_tol: f64,
    pub stall_window: usize,
    /// Support edits allowed per polish attempt.
    pub polish_rounds: usize,
    /// Step cap of the exact merge-class walk tried before ADMM; zero skips it.
    pub class_steps: usize,
    pub equilibration_passes: usize,
    pub adaptive_rho: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            check_every: 25,
            stall_tol: 1e-8,
            stall_window: 50,
            polish_rounds: 200,
            class_steps: 20_000,
            equilibration_passes: 15,
            adaptive_rho: true,
        }
    }
}

/// Residuals of the optimality conditions at a candidate point, all relative except the
/// topology violation, which is in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    /// `max(0, ‖A ξ − b‖ − δ) / δ`.
    pub ball_excess: f64,
    pub max_ineq_violation: f64,
    /// Largest violation of `|y_E| ≤ 1`, `y_D ≥ 0` and a non-negative ball multiplier.
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexSolution<T> {
    pub xi: Vec<T>,
    /// `‖E ξ‖₁`.
    pub objective: T,
    /// `‖A ξ − b‖₂`.
    pub residual: T,
    pub delta: T,
    pub max_ineq_violation: T,
    pub iterations: usize,
    /// The returned point carries a passing KKT certificate.
    pub converged: bool,
    pub kkt: Option<KktReport>,
    /// Multipliers certifying optimality: equivalence rows, the residual ball (scaling
    /// `Aᵀ(A ξ − b)`), and topology rows.
    pub eq_multipliers: Vec<T>,
    pub ball_multiplier: T,
    pub ineq_multipliers: Vec<T>,
    pub polish_attempts: usize,
}

/// Row pairs `(c0, c1)` of the topology matrix, whose equality case is a column merge.
fn topology_pairs<T: Real>(d: &CsrMatrix<T>) -> Result<Vec<(usize, usize)>, SolverError> {
    (0..d.nrows())
        .map(|r| {
            let entries: Vec<(usize, T)> = d.row(r).collect();
            match entries.as_slice() {
                [(c0, _), (c1, _)] => Ok((*c0, *c1)),
                _ => Err(SolverError::DimensionMismatch(format!(
                    "topology row {r} must have two entries"
                ))),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn kkt_report<T: Real>(
    e: &CsrMatrix<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    d: &CsrMatrix<T>,
    delta: T,
    xi: &[T],
    y_e: &[T],
    lambda: T,
    y_d: &[T],
) -> KktReport {
    let f = |v: T| v.to_f64_lossy();
    let r = residual_vec(a, xi, b);
    let rn = f(norm2(&r));
    let ex = e.mul_vec(xi);
    let dx = d.mul_vec(xi);
    let t_e = e.tr_mul_vec(y_e);
    let t_a: Vec<T> = a.tr_mul_vec(&r).into_iter().map(|v| v * lambda).collect();
    let t_d = d.tr_mul_vec(y_d);
    let scale = [norm_inf(&t_e), norm_inf(&t_a), norm_inf(&t_d)]
        .into_iter()
        .map(f)
        .fold(1.0f64, f64::max);
    let stationarity = (0..xi.len())
        .map(|j| f(t_e[j] + t_a[j] + t_d[j]).abs())
        .fold(0.0, f64::max)
        / scale;
    let delta = f(delta);
    let ball_excess = (rn - delta).max(0.0) / delta;
    let max_ineq_violation = dx.iter().map(|&v| f(v)).fold(0.0, f64::max);
    let dual_infeasibility = y_e
        .iter()
        .map(|&y| f(y).abs() - 1.0)
        .chain(y_d.iter().map(|&y| -f(y)))
        .chain(std::iter::once(-f(lambda)))
        .fold(0.0, f64::max);
    let l1_gap: f64 = ex.iter().zip(y_e).map(|(&v, &y)| f(v).abs() - f(y) * f(v)).sum();
    let ineq_gap = dx
        .iter()
        .zip(y_d)
        .map(|(&v, &y)| (f(v) * f(y)).abs())
        .fold(0.0, f64::max);
    let ball_gap = f(lambda) * rn * (delta - rn).abs() / (f(lambda) * rn * delta).max(1.0);
    let complementarity = (l1_gap / f(norm1(&ex)).max(1.0)).max(ineq_gap).max(ball_gap);
    let passed = stationarity <= FEAS_TOL
        && ball_excess <= FEAS_TOL
        && max_ineq_violation <= FEAS_TOL
        && dual_infeasibility <= 1e-9
        && complementarity <= FEAS_TOL;
    KktReport {
        stationarity,
        ball_excess,
        max_ineq_violation,
        dual_infeasibility,
        complementarity,
        passed,
    }
}

/// Support guess read off an ADMM iterate: equivalence rows at zero, signs of the rest, and
/// topology rows held at equality.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Support {
    signs: Vec<i8>,
    active: Vec<bool>,
}

struct Certified<T> {
    xi: Vec<T>,
    y_e: Vec<T>,
    lambda: T,
    y_d: Vec<T>,
    kkt: KktReport,
}

struct Problem<'a, T> {
    e: &'a CsrMatrix<T>,
    a: &'a CsrMatrix<T>,
    b: &'a [T],
    d: &'a CsrMatrix<T>,
    delta: T,
    e_pairs: Vec<(usize, usize)>,
    d_pairs: Vec<(usize, usize)>,
}

/// What one exact solve on a support guess says about the guess.
enum Round<T> {
    Certified(Certified<T>),
    /// The guess is wrong in a way the refinement cannot repair.
    Dead,
    /// The guess was edited; solve again.
    Revised,
}

impl<T: Real> Problem<'_, T> {
    /// Solves the problem on a support guess exactly and refines the guess until the KKT
    /// conditions certify it, like an active-set method over the ℓ1 support.
    ///
    /// With zero rows and active constraints imposed by merging columns, the rest of the
    /// objective is linear, `cᵀξ`, and the minimizer over the residual ball has the closed form
    /// `ξ_ls − t·(AᵀA)⁻¹c`. Nonzero rows whose sign flips are fixed at zero; multipliers of
    /// the imposed equalities come from a bounded fit of stationarity, and the row whose
    /// multiplier most wants to leave its bound is released.
    fn polish(&self, guess: &Support, max_rounds: usize) -> Result<Option<Certified<T>>, SolverError> {
        let mut support = guess.clone();
        for _ in 0..max_rounds {
            match self.round(&mut support)? {
                Round::Certified(c) => return Ok(Some(c)),
                Round::Dead => return Ok(None),
                Round::Revised => {}
            }
        }
        Ok(None)
    }

    fn round(&self, support: &mut Support) -> Result<Round<T>, SolverError> {
        let n = self.a.ncols();
        let mut merged = Vec::new();
        for (r, &s) in support.signs.iter().enumerate() {
            if s == 0 {
                merged.push(self.e_pairs[r]);
            }
        }
        for (r, &act) in support.active.iter().enumerate() {
            if act {
                merged.push(self.d_pairs[r]);
            }
        }
        let map = ColumnMap::from_pairs(n, merged);
        let ar = self.a.remap_columns(&map.map, map.ncols);
        // A support guess that leaves a column unobserved is just a wrong guess.
        let x_ls = match normal_solve(&ar, self.b) {
            Ok(x) => x,
            Err(SolverError::RankDeficient { .. }) => return Ok(Round::Dead),
            Err(e) => return Err(e),
        };
        let r_ls = norm2(&residual_vec(&ar, &x_ls, self.b));
        if r_ls > self.delta {
            return Ok(Round::Dead);
        }
        let s_e: Vec<T> = support.signs.iter().map(|&s| T::lit(s as f64)).collect();
        let c_full = self.e.tr_mul_vec(&s_e);
        let mut c = vec![T::zero(); map.ncols];
        for (j, &v) in c_full.iter().enumerate() {
            c[map.map[j]] += v;
        }
        let (xr, lambda) = if norm_inf(&c) <= T::lit(1e-14) {
            (x_ls, T::zero())
        } else {
            let gram = ar.gram();
            let v = match SparseCholesky::factor(&gram) {
                Ok(f) => f.solve_refined(&gram, &c, 2),
                Err(_) => return Ok(Round::Dead),
            };
            let av = norm2(&ar.mul_vec(&v));
            let slack = self.delta * self.delta - r_ls * r_ls;
            if !(slack > T::zero()) || !(av > T::zero()) {
                return Ok(Round::Dead);
            }
            let t = slack.sqrt() / av;
            (x_ls.iter().zip(&v).map(|(&x, &vi)| x - t * vi).collect(), T::one() / t)
        };
        let xi = map.expand(&xr);
        let scale = norm_inf(&xi).max(T::one());
        let tol = T::lit(1e-9) * scale;

        let ex = self.e.mul_vec(&xi);
        let mut revised = false;
        for (r, sr) in support.signs.iter_mut().enumerate() {
            if *sr != 0 && T::lit(*sr as f64) * ex[r] < -tol {
                *sr = 0;
                revised = true;
            }
        }
        let dx = self.d.mul_vec(&xi);
        for (r, act) in support.active.iter_mut().enumerate() {
            if !*act && dx[r] > tol {
                *act = true;
                revised = true;
            }
        }
        if revised {
            return Ok(Round::Revised);
        }

        // Multipliers of the imposed equalities: solve C ν = −g with box bounds, where C
        // stacks the zero equivalence rows and active topology rows (as columns of Cᵀ).
        let rows: Vec<(bool, usize)> = (0..support.signs.len())
            .filter(|&r| support.signs[r] == 0)
            .map(|r| (true, r))
            .chain(
                (0..support.active.len())
                    .filter(|&r| support.active[r])
                    .map(|r| (false, r)),
            )
            .collect();
        let res = residual_vec(self.a, &xi, self.b);
        let mut g = self.a.tr_mul_vec(&res);
        g.iter_mut().for_each(|v| *v *= lambda);
        for (gj, cj) in g.iter_mut().zip(&c_full) {
            *gj += *cj;
        }
        let fit = if rows.is_empty() {
            None
        } else {
            let mut t = Triplets::new(0, n);
            for &(is_e, r) in &rows {
                let m = if is_e { self.e } else { self.d };
                let entries: Vec<(usize, T)> = m.row(r).collect();
                t.push_row(&entries);
            }
            let bounded: Vec<bool> = rows.iter().map(|&(is_e, _)| is_e).collect();
            Some(bounded_fit(&t.to_csr(), &g, &bounded)?)
        };
        let mut y_e = s_e;
        let mut y_d = vec![T::zero(); self.d.nrows()];
        if let Some(f) = &fit {
            for (&(is_e, r), &v) in rows.iter().zip(&f.nu) {
                if is_e {
                    y_e[r] = v;
                } else {
                    y_d[r] = v;
                }
            }
        }
        let kkt = kkt_report(self.e, self.a, self.b, self.d, self.delta, &xi, &y_e, lambda, &y_d);
        if kkt.passed {
            return Ok(Round::Certified(Certified {
                xi,
                y_e,
                lambda,
                y_d,
                kkt,
            }));
        }
        let Some(fit) = fit else { return Ok(Round::Dead) };
        let Some((k, want)) = fit
            .pull
            .iter()
            .enumerate()
            .filter(|(_, &(excess, _))| excess > T::lit(1e-9))
            .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
            .map(|(k, &(_, want))| (k, want))
        else {
            return Ok(Round::Dead);
        };
        match rows[k] {
            (true, r) => support.signs[r] = if want > T::zero() { 1 } else { -1 },
            (false, r) => support.active[r] = false,
        }
        Ok(Round::Revised)
    }
}

/// Support guess from the primal iterate alone: equivalence rows below the largest
/// multiplicative jump in the sorted `|E ξ|` count as zero. First-order iterates drive true
/// zeros down geometrically while genuine gaps stay put, so the jump separates them long
/// before the soft-thresholded split variable settles.
fn split_support<T: Real>(ex: &[T], active: &[bool]) -> Support {
    let scale = norm_inf(ex).max(T::lit(1e-300));
    let floor = T::lit(1e-12) * scale.max(T::one());
    let mut mags: Vec<T> = ex.iter().map(|v| v.abs().max(floor)).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cut = T::zero();
    let mut best = T::one();
    for w in mags.windows(2) {
        let ratio = w[1] / w[0];
        if ratio > best {
            best = ratio;
            cut = w[0];
        }
    }
    let signs = ex
        .iter()
        .map(|&v| {
            if v.abs() <= cut.max(floor) {
                0
            } else if v > T::zero() {
                1
            } else {
                -1
            }
        })
        .collect();
    Support {
        signs,
        active: active.to_vec(),
    }
}

struct BoundedFit<T> {
    nu: Vec<T>,
    /// Per row: how far the unclipped multiplier lies past its bound, and its value.
    pull: Vec<(T, T)>,
}

/// Finds `ν` with `Cᵀν ≈ −g`, `ν_i ∈ [−1, 1]` where `bounded[i]` and `ν_i ≥ 0` otherwise:
/// a regularized minimum-norm solve, clipped, then projected coordinate descent.
fn bounded_fit<T: Real>(c: &CsrMatrix<T>, g: &[T], bounded: &[bool]) -> Result<BoundedFit<T>, SolverError> {
    let k = c.nrows();
    let ct = c.transpose();
    let gram = ct.gram();
    // Dependent rows (three slots of one plane) make the gram singular; the ridge only seeds
    // the coordinate descent below.
    let reg = T::lit(1e-8) * (0..k).fold(T::one(), |m, i| m.max(gram.get(i, i)));
    let mut t = gram.triplets();
    for i in 0..k {
        t.push(i, i, reg);
    }
    let kmat = t.to_csr();
    let rhs: Vec<T> = c.mul_vec(g).into_iter().map(|v| -v).collect();
    let clip = |i: usize, v: T| {
        if bounded[i] {
            v.max(-T::one()).min(T::one())
        } else {
            v.max(T::zero())
        }
    };
    let mut nu: Vec<T> = SparseCholesky::factor(&kmat)?
        .solve_refined(&kmat, &rhs, 2)
        .into_iter()
        .enumerate()
        .map(|(i, v)| clip(i, v))
        .collect();
    let mut resid = ct.mul_vec(&nu);
    for (r, &gj) in resid.iter_mut().zip(g) {
        *r += gj;
    }
    let target = T::lit(1e-12) * norm_inf(g).max(T::one());
    let sq: Vec<T> = (0..k).map(|i| c.row(i).map(|(_, v)| v * v).sum()).collect();
    for _ in 0..5000 {
        if norm_inf(&resid) <= target {
            break;
        }
        for i in 0..k {
            if sq[i] == T::zero() {
                continue;
            }
            let grad: T = c.row(i).map(|(j, v)| v * resid[j]).sum();
            let new = clip(i, nu[i] - grad / sq[i]);
            let step = new - nu[i];
            if step != T::zero() {
                for (j, v) in c.row(i) {
                    resid[j] += v * step;
                }
                nu[i] = new;
            }
        }
    }
    let pull = (0..k)
        .map(|i| {
            if sq[i] == T::zero() {
                return (T::zero(), T::zero());
            }
            let grad: T = c.row(i).map(|(j, v)| v * resid[j]).sum();
            let want = nu[i] - grad / sq[i];
            let excess = if bounded[i] { want.abs() - T::one() } else { -want };
            (excess, want)
        })
        .collect();
    Ok(BoundedFit { nu, pull })
}

/// Diagonal equilibration of `[E; A; D]`: column scales, per-row scales for `E` and `D`, and a
/// single scale for `A` so the residual ball stays a ball.
fn equilibrate<T: Real>(
    e: &CsrMatrix<T>,
    a: &CsrMatrix<T>,
    d: &CsrMatrix<T>,
    passes: usize,
) -> (Vec<T>, Vec<T>, Vec<T>, T) {
    let n = a.ncols();
    let mut s = vec![T::one(); n];
    let mut re = vec![T::one(); e.nrows()];
    let mut rd = vec![T::one(); d.nrows()];
    let mut alpha = T::one();
    let root = |v: T| if v > T::zero() { T::one() / v.sqrt() } else { T::one() };
    for _ in 0..passes {
        let mut cmax = vec![T::zero(); n];
        for (m, rs) in [(e, Some(&re)), (a, None), (d, Some(&rd))] {
            for r in 0..m.nrows() {
                let w = rs.map_or(alpha, |rs| rs[r]);
                for (c, v) in m.row(r) {
                    cmax[c] = cmax[c].max((w * v).abs());
                }
            }
        }
        for (sj, &cm) in s.iter_mut().zip(&cmax) {
            *sj *= root(cm * *sj);
        }
        let row_max = |m: &CsrMatrix<T>, r: usize| m.row(r).fold(T::zero(), |acc, (c, v)| acc.max((v * s[c]).abs()));
        for (r, w) in re.iter_mut().enumerate() {
            *w *= root(*w * row_max(e, r));
        }
        for (r, w) in rd.iter_mut().enumerate() {
            *w *= root(*w * row_max(d, r));
        }
        let amax = (0..a.nrows()).fold(T::zero(), |acc, r| acc.max(row_max(a, r)));
        alpha *= root(alpha * amax);
    }
    (s, re, rd, alpha)
}

/// Minimizes `‖E ξ‖₁` subject to `‖A ξ − b‖₂ ≤ δ` and `D ξ ≤ 0`.
///
/// Runs a preconditioned ADMM on the splitting `z = [E; A; D] ξ` with over-relaxation and
/// adaptive step size, starting from the topology-constrained least-squares point. Whenever
/// the iterate's support (zero equivalence rows, their signs, active topology rows) settles,
/// the support problem is solved exactly and checked against the KKT conditions; the
/// solution is `converged` only with a passing certificate. Returns
/// [`SolverError::Infeasible`] when no point of the ball satisfies `D ξ ≤ 0`.
pub fn solve_sparse_selection<T: Real>(
    e: &CsrMatrix<T>,
    a: &CsrMatrix<T>,
    b: &[T],
    delta: T,
    d: &CsrMatrix<T>,
    opts: &AdmmOptions,
) -> Result<ConvexSolution<T>, SolverError> {
    let n = a.ncols();
    if e.ncols() != n || d.ncols() != n || b.len() != a.nrows() {
        return Err(SolverError::DimensionMismatch(format!(
            "E {}x{}, A {}x{}, b {}, D {}x{}",
            e.nrows(),
            e.ncols(),
            a.nrows(),
            n,
            b.len(),
            d.nrows(),
            d.ncols()
        )));
    }
    if !(delta > T::zero()) {
        return Err(SolverError::DimensionMismatch(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let problem = Problem {
        e,
        a,
        b,
        d,
        delta,
        e_pairs: parse_equivalence_rows(e)?,
        d_pairs: topology_pairs(d)?,
    };
    let start = constrained_least_squares(a, b, d, &ColumnMap::identity(n))?;
    if start.residual > delta * (T::one() + T::lit(1e-9)) {
        return Err(SolverError::Infeasible {
            delta: delta.to_f64_lossy(),
            min_residual: start.residual.to_f64_lossy(),
            certificate: start.xi.iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    let finish = |cert: Certified<T>, iterations: usize, attempts: usize| {
        let ex = e.mul_vec(&cert.xi);
        ConvexSolution {
            objective: norm1(&ex),
            residual: norm2(&residual_vec(a, &cert.xi, b)),
            delta,
            max_ineq_violation: d.mul_vec(&cert.xi).into_iter().fold(T::zero(), |m, v| m.max(v)),
            iterations,
            converged: true,
            kkt: Some(cert.kkt),
            eq_multipliers: cert.y_e,
            ball_multiplier: cert.lambda,
            ineq_multipliers: cert.y_d,
            polish_attempts: attempts,
            xi: cert.xi,
        }
    };

    // A zero objective at the feasible start is already optimal: all multipliers vanish.
    if norm_inf(&e.mul_vec(&start.xi)) == T::zero() {
        let y_e = vec![T::zero(); e.nrows()];
        let y_d = vec![T::zero(); d.nrows()];
        let kkt = kkt_report(e, a, b, d, delta, &start.xi, &y_e, T::zero(), &y_d);
        let cert = Certified {
            xi: start.xi,
            y_e,
            lambda: T::zero(),
            y_d,
            kkt,
        };
        let mut sol = finish(cert, 0, 0);
        sol.converged = sol.kkt.as_ref().is_some_and(|k| k.passed);
        return Ok(sol);
    }

    // Without binding topology rows the exact merge-class walk usually settles it outright.
    if start.active.is_empty() && opts.class_steps > 0 {
        if let Some(sol) = solve_by_merge_classes(a, b, delta, &problem.e_pairs, opts.class_steps)? {
            let y_d = vec![T::zero(); d.nrows()];
            let kkt = kkt_report(e, a, b, d, delta, &sol.xi, &sol.y_e, sol.lambda, &y_d);
            if kkt.passed {
                log::debug!("selection certified by the merge-class walk in {} steps", sol.steps);
                let cert = Certified {
                    xi: sol.xi,
                    y_e: sol.y_e,
                    lambda: sol.lambda,
                    y_d,
                    kkt,
                };
                return Ok(finish(cert, sol.steps, 0));
            }
            log::debug!("merge-class solution failed its KKT check: {kkt:?}");
        }
    }

    let (me, ma, md) = (e.nrows(), a.nrows(), d.nrows());
    let (s, re, rd, alpha) = equilibrate(e, a, d, opts.equilibration_passes);
    let es = e.scale_rows(&re).scale_cols(&s);
    let as_ = a.scale_cols(&s).scale_rows(&vec![alpha; ma]);
    let ds = d.scale_rows(&rd).scale_cols(&s);
    let m = CsrMatrix::vstack(&[&es, &as_, &ds]);
    let mt = m.transpose();
    let wmax = re.iter().fold(T::zero(), |acc, &r| acc.max(T::one() / r));
    let weights: Vec<T> = re.iter().map(|&r| T::one() / (r * wmax)).collect();
    let bt: Vec<T> = b.iter().map(|&v| alpha * v).collect();
    let dt = alpha * delta;
    let sigma = T::lit(opts.sigma);
    let relax = T::lit(opts.relaxation);
    let mut rho = T::lit(opts.rho);

    let factor = |rho: T| -> Result<(CsrMatrix<T>, SparseCholesky<T>), SolverError> {
        let mut entries = Vec::new();
        m.gram_into(rho, &mut entries);
        entries.extend((0..n).map(|j| (j, j, sigma)));
        let k = CsrMatrix::from_triplets(n, n, entries);
        let chol = SparseCholesky::factor(&k)?;
        Ok((k, chol))
    };
    let project = |u: &[T], rho: T| -> Vec<T> {
        let mut z = u.to_vec();
        for r in 0..me {
            let thr = weights[r] / rho;
            z[r] = if u[r] > thr {
                u[r] - thr
            } else if u[r] < -thr {
                u[r] + thr
            } else {
                T::zero()
            };
        }
        let dev: Vec<T> = (0..ma).map(|i| u[me + i] - bt[i]).collect();
        let nrm = norm2(&dev);
        let shrink = if nrm > dt { dt / nrm } else { T::one() };
        for i in 0..ma {
            z[me + i] = bt[i] + shrink * dev[i];
        }
        for r in 0..md {
            z[me + ma + r] = u[me + ma + r].min(T::zero());
        }
        z
    };
    let support_of = |z: &[T]| Support {
        signs: (0..me)
            .map(|r| {
                if z[r] > T::zero() {
                    1
                } else if z[r] < T::zero() {
                    -1
                } else {
                    0
                }
            })
            .collect(),
        active: (0..md).map(|r| z[me + ma + r] == T::zero()).collect(),
    };

    let (mut kmat, mut chol) = factor(rho)?;
    let mut x: Vec<T> = start.xi.iter().zip(&s).map(|(&v, &sj)| v / sj).collect();
    let mut z = project(&m.mul_vec(&x), rho);
    let mut y = vec![T::zero(); me + ma + md];
    let mut last_support: Option<Support> = None;
    let mut tried: Vec<Support> = Vec::new();
    let mut objectives: Vec<T> = Vec::new();
    let mut attempts = 0;
    let mut iterations = 0;
    let check_every = opts.check_every.max(1);

    while iterations < opts.max_iterations {
        iterations += 1;
        let w: Vec<T> = z.iter().zip(&y).map(|(&zi, &yi)| rho * zi - yi).collect();
        let mut rhs = mt.mul_vec(&w);
        for (r, &xj) in rhs.iter_mut().zip(&x) {
            *r += sigma * xj;
        }
        let xh = chol.solve(&rhs);
        let zh = m.mul_vec(&xh);
        for (xj, &h) in x.iter_mut().zip(&xh) {
            *xj = relax * h + (T::one() - relax) * *xj;
        }
        let v: Vec<T> = zh
            .iter()
            .zip(&z)
            .map(|(&h, &zi)| relax * h + (T::one() - relax) * zi)
            .collect();
        let u: Vec<T> = v.iter().zip(&y).map(|(&vi, &yi)| vi + yi / rho).collect();
        z = project(&u, rho);
        for i in 0..y.len() {
            y[i] += rho * (v[i] - z[i]);
        }

        if iterations % check_every != 0 && iterations != opts.max_iterations {
            continue;
        }
        let mx = m.mul_vec(&x);
        let r_prim = mx
            .iter()
            .zip(&z)
            .fold(T::zero(), |acc, (&p, &q)| acc.max((p - q).abs()));
        let mty = mt.mul_vec(&y);
        let r_dual = norm_inf(&mty);
        let xs: Vec<T> = x.iter().zip(&s).map(|(&v, &sj)| v * sj).collect();
        objectives.push(norm1(&e.mul_vec(&xs)));
        let window = (opts.stall_window / check_every).max(1);
        let stalled = objectives.len() > window && {
            let now = objectives[objectives.len() - 1];
            let before = objectives[objectives.len() - 1 - window];
            (before - now).abs() < T::lit(opts.stall_tol) * now.max(T::one())
        };
        let eps_p = T::lit(1e-7) * (T::one() + norm_inf(&mx).max(norm_inf(&z)));
        let eps_d = T::lit(1e-7) * (T::one() + norm_inf(&y));
        let settled = r_prim <= eps_p && r_dual <= eps_d;

        let support = support_of(&z);
        let stable = last_support.as_ref() == Some(&support);
        if stable || stalled || settled || iterations == opts.max_iterations {
            let split = split_support(&e.mul_vec(&xs), &support.active);
            for guess in [&support, &split] {
                if tried.contains(guess) {
                    continue;
                }
                attempts += 1;
                if let Some(cert) = problem.polish(guess, opts.polish_rounds)? {
                    log::debug!("selection certified after {iterations} iterations ({attempts} polish attempts)");
                    return Ok(finish(cert, iterations, attempts));
                }
                tried.push(guess.clone());
            }
        }
        last_support = Some(support);

        if opts.adaptive_rho {
            let pn = norm_inf(&mx).max(norm_inf(&z)).max(T::lit(1e-12));
            let dn = norm_inf(&y).max(T::lit(1e-12));
            let ratio = ((r_prim / pn) / (r_dual / dn).max(T::lit(1e-30))).sqrt();
            let new_rho = (rho * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
            if new_rho > rho * T::lit(5.0) || new_rho < rho * T::lit(0.2) {
                rho = new_rho;
                (kmat, chol) = factor(rho)?;
            }
        }
    }
    let _ = &kmat;

    let xi: Vec<T> = x.iter().zip(&s).map(|(&v, &sj)| v * sj).collect();
    log::warn!("selection solver hit the iteration cap ({iterations}) without a KKT certificate");
    let ex = e.mul_vec(&xi);
    let y_e: Vec<T> = y[..me].iter().zip(&re).map(|(&v, &r)| v * r * wmax).collect();
    let y_d: Vec<T> = y[me + ma..].iter().zip(&rd).map(|(&v, &r)| v * r * wmax).collect();
    let ya: Vec<T> = y[me..me + ma].to_vec();
    let res = residual_vec(a, &xi, b);
    let lambda = if norm2(&res) > T::zero() {
        (alpha * wmax * dot(&ya, &res) / dot(&res, &res)).max(T::zero())
    } else {
        T::zero()
    };
    let kkt = kkt_report(e, a, b, d, delta, &xi, &y_e, lambda, &y_d);
    Ok(ConvexSolution {
        objective: norm1(&ex),
        residual: norm2(&res),
        delta,
        max_ineq_violation: d.mul_vec(&xi).into_iter().fold(T::zero(), |m, v| m.max(v)),
        iterations,
        converged: false,
        kkt: Some(kkt),
        eq_multipliers: y_e,
        ball_multiplier: lambda,
        ineq_multipliers: y_d,
        polish_attempts: attempts,
        xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two frames 1 m apart both seeing an x-wall; the second sighting has its own slot.
    /// Columns: p0 (3), p1 (3), m_a, m_b.
    fn two_slot_instance(d1: f64) -> (CsrMatrix<f64>, CsrMatrix<f64>, Vec<f64>, CsrMatrix<f64>) {
        let mut a = Triplets::new(0, 8);
        let mut b = Vec::new();
        a.push_row(&[(6, 1.0), (0, -1.0)]);
        b.push(3.0);
        a.push_row(&[(7, 1.0), (3, -1.0)]);
        b.push(d1);
        for c in 0..3 {
            a.push_row(&[(3 + c, 1.0), (c, -1.0)]);
            b.push(if c == 0 { 1.0 } else { 0.0 });
        }
        for c in 0..3 {
            a.push_row(&[(c, 1e3)]);
            b.push(0.0);
        }
        let mut e = Triplets::new(0, 8);
        e.push_row(&[(6, 1.0), (7, -1.0)]);
        let mut d = Triplets::new(0, 8);
        d.push_row(&[(6, -1.0), (0, 1.0)]);
        d.push_row(&[(7, -1.0), (3, 1.0)]);
        (e.to_csr(), a.to_csr(), b, d.to_csr())
    }

    #[test]
    fn generous_delta_merges_true_equivalence() {
        let (e, a, b, d) = two_slot_instance(2.05);
        let sol = solve_sparse_selection(&e, &a, &b, 0.2, &d, &AdmmOptions::default()).unwrap();
        assert!(sol.converged, "{:?}", sol.kkt);
        assert!((sol.xi[6] - sol.xi[7]).abs() <= 1e-6);
        assert!(sol.residual <= 0.2 * (1.0 + 1e-6));
    }

    #[test]
    fn tight_delta_keeps_planes_apart() {
        let (e, a, b, d) = two_slot_instance(2.5);
        let ls = crate::solver::solve_least_squares(&a, &b).unwrap();
        let sol =
            solve_sparse_selection(&e, &a, &b, 1.02 * ls.residual.max(1e-6), &d, &AdmmOptions::default()).unwrap();
        assert!(sol.converged, "{:?}", sol.kkt);
        assert!(sol.objective > 0.3);
        assert!(sol.ball_multiplier > 0.0);
    }

    #[test]
    fn empty_e_returns_feasible_point() {
        let (_, a, b, d) = two_slot_instance(2.5);
        let e = CsrMatrix::zeros(0, 8);
        let sol = solve_sparse_selection(&e, &a, &b, 0.5, &d, &AdmmOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.residual <= 0.5);
    }

    #[test]
    fn infeasible_delta_reports_certificate() {
        // One frame seeing the same slot at 1 m and 2 m: the residual cannot drop below 1/√2.
        let mut a = Triplets::new(0, 4);
        a.push_row(&[(3, 1.0), (0, -1.0)]);
        a.push_row(&[(3, 1.0), (0, -1.0)]);
        for c in 0..3 {
            a.push_row(&[(c, 1e3)]);
        }
        let e = CsrMatrix::zeros(0, 4);
        let d = CsrMatrix::zeros(0, 4);
        match solve_sparse_selection(
            &e,
            &a.to_csr(),
            &[1.0, 2.0, 0.0, 0.0, 0.0],
            0.1,
            &d,
            &AdmmOptions::default(),
        ) {
            Err(SolverError::Infeasible {
                min_residual,
                certificate,
                ..
            }) => {
                assert!((min_residual - 0.5f64.sqrt()).abs() < 1e-9);
                assert_eq!(certificate.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }

    /// Frames one meter apart along x, each seeing one of two walls through its own slot, with
    /// every slot pair hypothesized (so zero rows form cycles).
    fn wall_chain() -> (CsrMatrix<f64>, CsrMatrix<f64>, Vec<f64>, CsrMatrix<f64>) {
        let walls = [6.0, 6.0, 6.0, 6.3, 6.0, 6.3, 6.0];
        let wiggle = [0.01, -0.02, 0.015, 0.0, -0.01, 0.02, 0.005];
        let frames = walls.len();
        let n = 3 * frames + frames;
        let mut a = Triplets::new(0, n);
        let mut b = Vec::new();
        for (i, (&w, &dw)) in walls.iter().zip(&wiggle).enumerate() {
            a.push_row(&[(3 * frames + i, 1.0), (3 * i, -1.0)]);
            b.push(w - i as f64 + dw);
            if i + 1 < frames {
                for c in 0..3 {
                    a.push_row(&[(3 * (i + 1) + c, 1.0), (3 * i + c, -1.0)]);
                    b.push(if c == 0 { 1.0 } else { 0.0 });
                }
            }
        }
        for c in 0..3 {
            a.push_row(&[(c, 1e3)]);
            b.push(0.0);
        }
        let mut e = Triplets::new(0, n);
        for i in 0..frames {
            for j in i + 1..frames {
                e.push_row(&[(3 * frames + i, 1.0), (3 * frames + j, -1.0)]);
            }
        }
        (e.to_csr(), a.to_csr(), b, CsrMatrix::zeros(0, n))
    }

    #[test]
    fn merge_class_walk_agrees_with_admm() {
        let (e, a, b, d) = wall_chain();
        // Every slot has one sighting, so least squares fits exactly and δ is absolute.
        for delta in [0.01, 0.03, 0.2] {
            let exact = solve_sparse_selection(&e, &a, &b, delta, &d, &AdmmOptions::default()).unwrap();
            let admm_only = AdmmOptions {
                class_steps: 0,
                ..AdmmOptions::default()
            };
            let first_order = solve_sparse_selection(&e, &a, &b, delta, &d, &admm_only).unwrap();
            assert!(exact.converged, "{:?}", exact.kkt);
            assert_eq!(exact.polish_attempts, 0);
            let gap = (exact.objective - first_order.objective).abs();
            assert!(
                gap <= 1e-5 * exact.objective.max(1.0),
                "{delta}: {} vs {}",
                exact.objective,
                first_order.objective
            );
        }
    }
}

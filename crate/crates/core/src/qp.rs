//! Convex quadratic programming by a primal-dual interior point method.
//!
//! Solves
//!
//! ```text
//! minimize    ½ xᵀHx + cᵀx
//! subject to  A_eq x = b_eq,  A_in x ≤ b_in,  lb ≤ x ≤ ub
//! ```
//!
//! with Mehrotra predictor-corrector steps on the regularized, quasi-definite
//! augmented system. Variables with `lb == ub` are eliminated before the
//! solve; the rest keep implicit bound duals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{PatternLu, SparseMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Static regularization placed on the diagonal of the KKT system.
const REGULARIZATION: f64 = 1e-9;
const STEP_FRACTION: f64 = 0.995;
/// Scaled primal residual below which a solve is never declared infeasible.
const INFEASIBLE_FLOOR: f64 = 1e-6;
const STALL_ROUNDS: usize = 10;
const DUAL_DIVERGENCE: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Full symmetric Hessian (both triangles stored).
    pub h: SparseMatrix,
    pub c: Vec<f64>,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: SparseMatrix,
    pub b_in: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl QpProblem {
    /// Unconstrained problem in `n` variables with zero objective, to be
    /// filled in field by field.
    pub fn new(n: usize) -> Self {
        Self {
            h: SparseMatrix::zeros(n, n),
            c: vec![0.0; n],
            a_eq: SparseMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: SparseMatrix::zeros(0, n),
            b_in: Vec::new(),
            lb: vec![f64::NEG_INFINITY; n],
            ub: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul_vec(x);
        x.iter()
            .zip(&hx)
            .zip(&self.c)
            .map(|((xi, hi), ci)| 0.5 * xi * hi + ci * xi)
            .sum()
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n_vars();
        let bad = |what: &str| Err(QpError::DimensionMismatch(what.to_string()));
        if self.h.nrows() != n || self.h.ncols() != n {
            return bad("H must be n x n");
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad("A_eq / b_eq shape");
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad("A_in / b_in shape");
        }
        if self.lb.len() != n || self.ub.len() != n {
            return bad("bound vectors");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Primal point and multipliers. Signs follow the Lagrangian
/// `f + yᵀ(A_eq x − b_eq) + zᵀ(A_in x − b_in) − z_lbᵀ(x − lb) + z_ubᵀ(x − ub)`
/// with `z, z_lb, z_ub ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals_eq: Vec<f64>,
    pub duals_in: Vec<f64>,
    pub duals_lb: Vec<f64>,
    pub duals_ub: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

/// Reduced problem after fixed-variable elimination, row equilibration and
/// objective scaling.
struct Reduced {
    free: Vec<usize>,
    x_fixed: Vec<f64>,
    eq_rows: Vec<usize>,
    in_rows: Vec<usize>,
    eq_scale: Vec<f64>,
    in_scale: Vec<f64>,
    obj_scale: f64,
    h: SparseMatrix,
    c: Vec<f64>,
    a_eq: SparseMatrix,
    b_eq: Vec<f64>,
    a_in: SparseMatrix,
    b_in: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

enum Presolve {
    Ready(Reduced),
    Infeasible,
}

fn presolve(p: &QpProblem, tol: f64) -> Presolve {
    let n = p.n_vars();
    let mut x_fixed = vec![f64::NAN; n];
    let mut map = vec![usize::MAX; n];
    let mut free = Vec::new();
    for j in 0..n {
        if p.lb[j] > p.ub[j] {
            return Presolve::Infeasible;
        }
        if p.lb[j].is_finite() && p.ub[j] - p.lb[j] <= 1e-12 * p.lb[j].abs().max(1.0) {
            x_fixed[j] = 0.5 * (p.lb[j] + p.ub[j]);
        } else {
            map[j] = free.len();
            free.push(j);
        }
    }
    let nf = free.len();
    let fixed_val = |j: usize| if map[j] == usize::MAX { x_fixed[j] } else { 0.0 };

    let mut c: Vec<f64> = free.iter().map(|&j| p.c[j]).collect();
    let mut h_trip = Vec::new();
    for (i, j, v) in p.h.triplets() {
        match (map[i], map[j]) {
            (usize::MAX, _) => {}
            (ri, usize::MAX) => c[ri] += v * x_fixed[j],
            (ri, rj) => h_trip.push((ri, rj, v)),
        }
    }

    // Rows reduced to no free columns are checked here and dropped.
    let reduce_rows = |a: &SparseMatrix, b: &[f64], is_eq: bool| {
        let mut rows = Vec::new();
        let mut trip = Vec::new();
        let mut rhs = Vec::new();
        let mut scale = Vec::new();
        for i in 0..a.nrows() {
            let mut bi = b[i];
            let mut norm: f64 = 0.0;
            let mut entries = Vec::new();
            for (j, v) in a.row(i) {
                if map[j] == usize::MAX {
                    bi -= v * fixed_val(j);
                } else if v != 0.0 {
                    norm = norm.max(v.abs());
                    entries.push((map[j], v));
                }
            }
            if entries.is_empty() {
                let ok = if is_eq { bi.abs() <= tol * (1.0 + b[i].abs()) } else { bi >= -tol * (1.0 + b[i].abs()) };
                if !ok {
                    return None;
                }
                continue;
            }
            let r = rows.len();
            let s = 1.0 / norm;
            for (j, v) in entries {
                trip.push((r, j, v * s));
            }
            rows.push(i);
            rhs.push(bi * s);
            scale.push(s);
        }
        Some((SparseMatrix::from_triplets(rows.len(), nf, &trip), rhs, rows, scale))
    };
    let Some((a_eq, b_eq, eq_rows, eq_scale)) = reduce_rows(&p.a_eq, &p.b_eq, true) else {
        return Presolve::Infeasible;
    };
    let Some((a_in, b_in, in_rows, in_scale)) = reduce_rows(&p.a_in, &p.b_in, false) else {
        return Presolve::Infeasible;
    };

    let h = SparseMatrix::from_triplets(nf, nf, &h_trip);
    let c_norm = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let obj_scale = 1.0 / c_norm.max(h.max_abs()).max(1.0);
    let h = SparseMatrix::from_triplets(
        nf,
        nf,
        &h.triplets().map(|(i, j, v)| (i, j, v * obj_scale)).collect::<Vec<_>>(),
    );
    c.iter_mut().for_each(|v| *v *= obj_scale);

    Presolve::Ready(Reduced {
        lb: free.iter().map(|&j| p.lb[j]).collect(),
        ub: free.iter().map(|&j| p.ub[j]).collect(),
        free,
        x_fixed,
        eq_rows,
        in_rows,
        eq_scale,
        in_scale,
        obj_scale,
        h,
        c,
        a_eq,
        b_eq,
        a_in,
        b_in,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest `α ∈ (0, 1]` keeping `v + α dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64], mask: Option<&[bool]>) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..v.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

struct Newton {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

struct Kkt<'a> {
    r: &'a Reduced,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    pattern: PatternLu,
    h_diag_pos: usize,
}

impl<'a> Kkt<'a> {
    fn new(r: &'a Reduced) -> Result<Self, QpError> {
        let n = r.c.len();
        let (mi, me) = (r.b_in.len(), r.b_eq.len());
        let mut entries: Vec<(usize, usize)> = r.h.triplets().map(|(i, j, _)| (i, j)).collect();
        let h_diag_pos = entries.len();
        entries.extend((0..n).map(|i| (i, i)));
        for (i, j, _) in r.a_in.triplets() {
            entries.push((n + i, j));
            entries.push((j, n + i));
        }
        entries.extend((0..mi).map(|i| (n + i, n + i)));
        for (i, j, _) in r.a_eq.triplets() {
            entries.push((n + mi + i, j));
            entries.push((j, n + mi + i));
        }
        entries.extend((0..me).map(|i| (n + mi + i, n + mi + i)));
        let pattern = PatternLu::new(n + mi + me, &entries)
            .map_err(|_| QpError::NumericalBreakdown("KKT pattern".into()))?;
        Ok(Self {
            has_l: r.lb.iter().map(|v| v.is_finite()).collect(),
            has_u: r.ub.iter().map(|v| v.is_finite()).collect(),
            r,
            pattern,
            h_diag_pos,
        })
    }

    fn values(&self, d: &[f64], sz: &[f64], delta: f64) -> Vec<f64> {
        let r = self.r;
        let mut vals: Vec<f64> = r.h.triplets().map(|(_, _, v)| v).collect();
        debug_assert_eq!(vals.len(), self.h_diag_pos);
        vals.extend(d.iter().map(|di| di + delta));
        for (_, _, v) in r.a_in.triplets() {
            vals.push(v);
            vals.push(v);
        }
        vals.extend(sz.iter().map(|q| -q - delta));
        for (_, _, v) in r.a_eq.triplets() {
            vals.push(v);
            vals.push(v);
        }
        vals.extend(std::iter::repeat(-delta).take(r.b_eq.len()));
        vals
    }

    /// Unregularized `K v` for iterative refinement.
    fn apply(&self, d: &[f64], sz: &[f64], v: &[f64]) -> Vec<f64> {
        let r = self.r;
        let n = r.c.len();
        let mi = r.b_in.len();
        let (vx, rest) = v.split_at(n);
        let (vz, vy) = rest.split_at(mi);
        let mut top = r.h.mul_vec(vx);
        for ((t, di), xi) in top.iter_mut().zip(d).zip(vx) {
            *t += di * xi;
        }
        for (t, a) in top.iter_mut().zip(r.a_in.tmul_vec(vz)) {
            *t += a;
        }
        for (t, a) in top.iter_mut().zip(r.a_eq.tmul_vec(vy)) {
            *t += a;
        }
        let mut mid = r.a_in.mul_vec(vx);
        for ((m, q), zi) in mid.iter_mut().zip(sz).zip(vz) {
            *m -= q * zi;
        }
        let bot = r.a_eq.mul_vec(vx);
        top.extend(mid);
        top.extend(bot);
        top
    }
}

/// Solves a convex QP. `tol` applies to scaled primal and dual residuals and
/// to every complementarity product.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(QpError::DimensionMismatch(format!("tolerance must be positive, got {tol}")));
    }
    let red = match presolve(problem, tol) {
        Presolve::Ready(r) => r,
        Presolve::Infeasible => return Ok(infeasible(problem, 0)),
    };
    let n = red.c.len();
    let (mi, me) = (red.b_in.len(), red.b_eq.len());
    let mut kkt = Kkt::new(&red)?;
    let has_l = kkt.has_l.clone();
    let has_u = kkt.has_u.clone();
    let n_comp = mi + has_l.iter().filter(|&&b| b).count() + has_u.iter().filter(|&&b| b).count();

    let mut x: Vec<f64> = (0..n)
        .map(|j| match (has_l[j], has_u[j]) {
            (true, true) => 0.5 * (red.lb[j] + red.ub[j]),
            (true, false) => red.lb[j] + 1.0,
            (false, true) => red.ub[j] - 1.0,
            (false, false) => 0.0,
        })
        .collect();
    let ax = red.a_in.mul_vec(&x);
    let mut s: Vec<f64> = red.b_in.iter().zip(&ax).map(|(b, a)| (b - a).max(1.0)).collect();
    let mut z = vec![1.0; mi];
    let mut y = vec![0.0; me];
    let mut zl: Vec<f64> = has_l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = has_u.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let b_norm = inf_norm(&red.b_eq).max(inf_norm(&red.b_in));
    let c_norm = inf_norm(&red.c);
    let mut best_pres = f64::INFINITY;
    let mut stall = 0;

    for iter in 0..=max_iter {
        let wl: Vec<f64> = (0..n).map(|j| if has_l[j] { x[j] - red.lb[j] } else { 1.0 }).collect();
        let wu: Vec<f64> = (0..n).map(|j| if has_u[j] { red.ub[j] - x[j] } else { 1.0 }).collect();

        let mut rd = red.h.mul_vec(&x);
        for j in 0..n {
            rd[j] += red.c[j] - zl[j] + zu[j];
        }
        for (r, v) in rd.iter_mut().zip(red.a_eq.tmul_vec(&y)) {
            *r += v;
        }
        for (r, v) in rd.iter_mut().zip(red.a_in.tmul_vec(&z)) {
            *r += v;
        }
        let r_eq: Vec<f64> = red.a_eq.mul_vec(&x).iter().zip(&red.b_eq).map(|(a, b)| a - b).collect();
        let r_in: Vec<f64> = red
            .a_in
            .mul_vec(&x)
            .iter()
            .zip(&red.b_in)
            .zip(&s)
            .map(|((a, b), si)| a + si - b)
            .collect();

        let mut comp_sum = 0.0;
        let mut comp_max: f64 = 0.0;
        let mut add = |p: f64| {
            comp_sum += p;
            comp_max = comp_max.max(p);
        };
        s.iter().zip(&z).for_each(|(a, b)| add(a * b));
        (0..n).filter(|&j| has_l[j]).for_each(|j| add(wl[j] * zl[j]));
        (0..n).filter(|&j| has_u[j]).for_each(|j| add(wu[j] * zu[j]));
        let mu = if n_comp > 0 { comp_sum / n_comp as f64 } else { 0.0 };

        let pres = inf_norm(&r_eq).max(inf_norm(&r_in)) / (1.0 + b_norm);
        let dres = inf_norm(&rd) / (1.0 + c_norm);
        if !(pres.is_finite() && dres.is_finite() && mu.is_finite()) {
            return Err(QpError::NumericalBreakdown(format!("non-finite iterate at iteration {iter}")));
        }
        if pres <= tol && dres <= tol && comp_max <= tol {
            if inf_norm(&x) > 1e12 {
                return Ok(finish(problem, &red, &x, &y, &z, &zl, &zu, QpStatus::Unbounded, iter));
            }
            return Ok(finish(problem, &red, &x, &y, &z, &zl, &zu, QpStatus::Optimal, iter));
        }
        if iter == max_iter {
            break;
        }
        if pres > INFEASIBLE_FLOOR && pres > 0.99 * best_pres {
            stall += 1;
        } else {
            stall = 0;
        }
        best_pres = best_pres.min(pres);
        let dual_norm = inf_norm(&y).max(inf_norm(&z)).max(inf_norm(&zl)).max(inf_norm(&zu));
        if stall >= STALL_ROUNDS && dual_norm > DUAL_DIVERGENCE {
            return Ok(infeasible(problem, iter));
        }
        if pres <= tol && inf_norm(&x) > 1e12 {
            return Ok(finish(problem, &red, &x, &y, &z, &zl, &zu, QpStatus::Unbounded, iter));
        }

        let d: Vec<f64> = (0..n)
            .map(|j| {
                let mut dj = 0.0;
                if has_l[j] {
                    dj += zl[j] / wl[j];
                }
                if has_u[j] {
                    dj += zu[j] / wu[j];
                }
                dj
            })
            .collect();
        let sz: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a / b).collect();

        let mut delta = REGULARIZATION;
        let factor = loop {
            let vals = kkt.values(&d, &sz, delta);
            match kkt.pattern.factor(&vals) {
                Ok(f) => break f,
                Err(_) if delta < 1e-4 => delta *= 100.0,
                Err(_) => {
                    return Err(QpError::NumericalBreakdown(format!(
                        "KKT factorization failed at iteration {iter}"
                    )))
                }
            }
        };

        let solve = |rc_s: &[f64], rc_l: &[f64], rc_u: &[f64]| -> Newton {
            let mut rhs = Vec::with_capacity(n + mi + me);
            for j in 0..n {
                let mut v = -rd[j];
                if has_l[j] {
                    v += rc_l[j] / wl[j];
                }
                if has_u[j] {
                    v -= rc_u[j] / wu[j];
                }
                rhs.push(v);
            }
            rhs.extend((0..mi).map(|i| -r_in[i] - rc_s[i] / z[i]));
            rhs.extend(r_eq.iter().map(|v| -v));
            let mut sol = rhs.clone();
            factor.solve_in_place(&mut sol);
            let mut best = inf_norm(&residual(&kkt.apply(&d, &sz, &sol), &rhs));
            for _ in 0..3 {
                let mut corr = residual(&rhs, &kkt.apply(&d, &sz, &sol));
                factor.solve_in_place(&mut corr);
                let cand: Vec<f64> = sol.iter().zip(&corr).map(|(a, b)| a + b).collect();
                let res = inf_norm(&residual(&kkt.apply(&d, &sz, &cand), &rhs));
                if !(res < best) {
                    break;
                }
                best = res;
                sol = cand;
            }
            let dx = sol[..n].to_vec();
            let dz = sol[n..n + mi].to_vec();
            let dy = sol[n + mi..].to_vec();
            let ds = (0..mi).map(|i| (rc_s[i] - s[i] * dz[i]) / z[i]).collect();
            let dzl = (0..n)
                .map(|j| if has_l[j] { (rc_l[j] - zl[j] * dx[j]) / wl[j] } else { 0.0 })
                .collect();
            let dzu = (0..n)
                .map(|j| if has_u[j] { (rc_u[j] + zu[j] * dx[j]) / wu[j] } else { 0.0 })
                .collect();
            Newton { dx, dy, dz, ds, dzl, dzu }
        };

        let step_len = |nt: &Newton| {
            let neg_dx: Vec<f64> = nt.dx.iter().map(|v| -v).collect();
            let ap = max_step(&s, &nt.ds, None)
                .min(max_step(&wl, &nt.dx, Some(&has_l)))
                .min(max_step(&wu, &neg_dx, Some(&has_u)));
            let ad = max_step(&z, &nt.dz, None)
                .min(max_step(&zl, &nt.dzl, Some(&has_l)))
                .min(max_step(&zu, &nt.dzu, Some(&has_u)));
            ap.min(ad)
        };

        let rc_s: Vec<f64> = (0..mi).map(|i| -s[i] * z[i]).collect();
        let rc_l: Vec<f64> = (0..n).map(|j| -wl[j] * zl[j]).collect();
        let rc_u: Vec<f64> = (0..n).map(|j| -wu[j] * zu[j]).collect();
        let aff = solve(&rc_s, &rc_l, &rc_u);

        let step = if n_comp == 0 {
            aff
        } else {
            let a = step_len(&aff);
            let mut mu_aff = 0.0;
            for i in 0..mi {
                mu_aff += (s[i] + a * aff.ds[i]) * (z[i] + a * aff.dz[i]);
            }
            for j in 0..n {
                if has_l[j] {
                    mu_aff += (wl[j] + a * aff.dx[j]) * (zl[j] + a * aff.dzl[j]);
                }
                if has_u[j] {
                    mu_aff += (wu[j] - a * aff.dx[j]) * (zu[j] + a * aff.dzu[j]);
                }
            }
            mu_aff /= n_comp as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let target = sigma * mu;
            let rc_s: Vec<f64> = (0..mi).map(|i| target - s[i] * z[i] - aff.ds[i] * aff.dz[i]).collect();
            let rc_l: Vec<f64> = (0..n)
                .map(|j| if has_l[j] { target - wl[j] * zl[j] - aff.dx[j] * aff.dzl[j] } else { 0.0 })
                .collect();
            let rc_u: Vec<f64> = (0..n)
                .map(|j| if has_u[j] { target - wu[j] * zu[j] + aff.dx[j] * aff.dzu[j] } else { 0.0 })
                .collect();
            solve(&rc_s, &rc_l, &rc_u)
        };

        let alpha = if n_comp == 0 { 1.0 } else { (STEP_FRACTION * step_len(&step)).min(1.0) };
        for j in 0..n {
            x[j] += alpha * step.dx[j];
            zl[j] += alpha * step.dzl[j];
            zu[j] += alpha * step.dzu[j];
        }
        for i in 0..mi {
            s[i] += alpha * step.ds[i];
            z[i] += alpha * step.dz[i];
        }
        for k in 0..me {
            y[k] += alpha * step.dy[k];
        }
        // keep strictly interior against rounding at the bounds
        for j in 0..n {
            if has_l[j] && x[j] <= red.lb[j] {
                x[j] = red.lb[j] + f64::EPSILON * red.lb[j].abs().max(1.0);
            }
            if has_u[j] && x[j] >= red.ub[j] {
                x[j] = red.ub[j] - f64::EPSILON * red.ub[j].abs().max(1.0);
            }
        }
    }
    Ok(finish(problem, &red, &x, &y, &z, &zl, &zu, QpStatus::MaxIter, max_iter))
}

fn residual(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn infeasible(p: &QpProblem, iterations: usize) -> QpSolution {
    let n = p.n_vars();
    QpSolution {
        x: vec![f64::NAN; n],
        objective: f64::NAN,
        duals_eq: vec![0.0; p.b_eq.len()],
        duals_in: vec![0.0; p.b_in.len()],
        duals_lb: vec![0.0; n],
        duals_ub: vec![0.0; n],
        status: QpStatus::Infeasible,
        iterations,
    }
}

/// Maps the reduced iterate back to the original problem and unscales duals.
#[allow(clippy::too_many_arguments)]
fn finish(
    p: &QpProblem,
    red: &Reduced,
    xr: &[f64],
    y: &[f64],
    z: &[f64],
    zl: &[f64],
    zu: &[f64],
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    let n = p.n_vars();
    let mut x = red.x_fixed.clone();
    let mut duals_lb = vec![0.0; n];
    let mut duals_ub = vec![0.0; n];
    for (k, &j) in red.free.iter().enumerate() {
        x[j] = xr[k];
        duals_lb[j] = zl[k] / red.obj_scale;
        duals_ub[j] = zu[k] / red.obj_scale;
    }
    let mut duals_eq = vec![0.0; p.b_eq.len()];
    for (k, &i) in red.eq_rows.iter().enumerate() {
        duals_eq[i] = y[k] * red.eq_scale[k] / red.obj_scale;
    }
    let mut duals_in = vec![0.0; p.b_in.len()];
    for (k, &i) in red.in_rows.iter().enumerate() {
        duals_in[i] = z[k] * red.in_scale[k] / red.obj_scale;
    }
    // fixed variables: bound multiplier from the stationarity residual
    if red.free.len() < n {
        let mut g = p.h.mul_vec(&x);
        for j in 0..n {
            g[j] += p.c[j];
        }
        for (gj, v) in g.iter_mut().zip(p.a_eq.tmul_vec(&duals_eq)) {
            *gj += v;
        }
        for (gj, v) in g.iter_mut().zip(p.a_in.tmul_vec(&duals_in)) {
            *gj += v;
        }
        let mut is_free = vec![false; n];
        red.free.iter().for_each(|&j| is_free[j] = true);
        for j in (0..n).filter(|&j| !is_free[j]) {
            if g[j] > 0.0 {
                duals_lb[j] = g[j];
            } else {
                duals_ub[j] = -g[j];
            }
        }
    }
    QpSolution {
        objective: p.objective(&x),
        x,
        duals_eq,
        duals_in,
        duals_lb,
        duals_ub,
        status,
        iterations,
    }
}

//! Polar Newton-Raphson on the bus power balance.

use num_complex::Complex64;

use crate::grid::{AdmittanceMatrix, BusRole};
use crate::linalg::PatternLu;

use super::AcError;

/// Unknown and equation numbering for one set of bus types.
pub(super) struct Layout {
    pub th: Vec<Option<usize>>,
    pub vm: Vec<Option<usize>>,
    pub ell: Option<usize>,
    pub p_row: Vec<Option<usize>>,
    pub q_row: Vec<Option<usize>>,
    pub dim: usize,
}

impl Layout {
    /// Angles at every non-REF bus, magnitudes at PQ buses, and the slack
    /// scalar when `distributed`. Active equations at non-REF buses (all
    /// buses when distributed), reactive at PQ buses.
    pub fn new(types: &[BusRole], distributed: bool) -> Self {
        let n = types.len();
        let mut col = 0;
        let mut next = |on: bool| {
            on.then(|| {
                col += 1;
                col - 1
            })
        };
        let th: Vec<_> = types.iter().map(|&t| next(t != BusRole::Ref)).collect();
        let vm: Vec<_> = types.iter().map(|&t| next(t == BusRole::Pq)).collect();
        let ell = next(distributed);
        let dim = col;
        let mut row = 0;
        let mut next = |on: bool| {
            on.then(|| {
                row += 1;
                row - 1
            })
        };
        let p_row: Vec<_> = types.iter().map(|&t| next(distributed || t != BusRole::Ref)).collect();
        let q_row: Vec<_> = types.iter().map(|&t| next(t == BusRole::Pq)).collect();
        debug_assert_eq!(row, dim, "square system for {n} buses");
        Self { th, vm, ell, p_row, q_row, dim }
    }
}

/// Specified injections of one solve. The active specification at bus `i`
/// is `p[i] + pi_bus[i] · ℓ`.
pub(super) struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub pi_bus: Vec<f64>,
}

pub(super) fn voltages(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect()
}

/// Complex power injected into the network at every bus, `V ⊙ conj(Y V)`.
pub(super) fn injected_power(y: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    y.mul(v).iter().zip(v).map(|(i, vi)| vi * i.conj()).collect()
}

/// `calculated − specified` on every equation of `layout`.
pub(super) fn mismatch(layout: &Layout, inj: &Injections, s: &[Complex64], ell: f64) -> Vec<f64> {
    let mut f = vec![0.0; layout.dim];
    for i in 0..s.len() {
        if let Some(r) = layout.p_row[i] {
            f[r] = s[i].re - inj.p[i] - inj.pi_bus[i] * ell;
        }
        if let Some(r) = layout.q_row[i] {
            f[r] = s[i].im - inj.q[i];
        }
    }
    f
}

/// Jacobian entries as `(row, col)` in the order [`jacobian_values`] emits.
pub(super) fn jacobian_pattern(layout: &Layout, y: &AdmittanceMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..y.size() {
        for row in [layout.p_row[i], layout.q_row[i]].into_iter().flatten() {
            for &(k, _) in y.row(i) {
                if let Some(c) = layout.th[k] {
                    out.push((row, c));
                }
                if let Some(c) = layout.vm[k] {
                    out.push((row, c));
                }
            }
            if Some(row) == layout.p_row[i] {
                if let Some(c) = layout.ell {
                    out.push((row, c));
                }
            }
        }
    }
    out
}

/// Derivatives of `calculated − specified`, using
/// `∂S_i/∂θ_k = −j V_i conj(Y_ik V_k)` and `∂S_i/∂|V_k| = V_i conj(Y_ik V_k)/|V_k|`
/// off the diagonal, with the `conj(I_i)` terms added on it.
pub(super) fn jacobian_values(
    layout: &Layout,
    y: &AdmittanceMatrix,
    v: &[Complex64],
    current: &[Complex64],
    pi_bus: &[f64],
) -> Vec<f64> {
    let j = Complex64::i();
    let mut out = Vec::new();
    for i in 0..y.size() {
        let vi = v[i];
        let unit_i = vi / vi.norm();
        let mut d_theta = Vec::with_capacity(y.row(i).len());
        let mut d_vm = Vec::with_capacity(y.row(i).len());
        for &(k, yik) in y.row(i) {
            let yv = (yik * v[k]).conj();
            let mut dt = -j * vi * yv;
            let mut dv = vi * yv / v[k].norm();
            if k == i {
                dt += j * vi * current[i].conj();
                dv += current[i].conj() * unit_i;
            }
            d_theta.push(dt);
            d_vm.push(dv);
        }
        let rows = [(layout.p_row[i], true), (layout.q_row[i], false)];
        for (row, active) in rows {
            if row.is_none() {
                continue;
            }
            let part = |z: Complex64| if active { z.re } else { z.im };
            for (e, &(k, _)) in y.row(i).iter().enumerate() {
                if layout.th[k].is_some() {
                    out.push(part(d_theta[e]));
                }
                if layout.vm[k].is_some() {
                    out.push(part(d_vm[e]));
                }
            }
            if active && layout.ell.is_some() {
                out.push(-pi_bus[i]);
            }
        }
    }
    out
}

pub(super) struct Outcome {
    pub converged: bool,
    pub iterations: usize,
}

/// Runs Newton iterations from `(vm, va, ell)` in place. Records `‖F‖∞`
/// before every step in `history`.
///
/// `refresh` is called with the current slack scalar before each step and
/// may replace the per-bus participation (per-iteration mode).
#[allow(clippy::too_many_arguments)]
pub(super) fn solve(
    y: &AdmittanceMatrix,
    layout: &Layout,
    inj: &mut Injections,
    vm: &mut [f64],
    va: &mut [f64],
    ell: &mut f64,
    tol: f64,
    max_inner: usize,
    history: &mut Vec<f64>,
    mut refresh: Option<&mut dyn FnMut(f64) -> Vec<f64>>,
) -> Result<Outcome, AcError> {
    let mut lu = PatternLu::new(layout.dim, &jacobian_pattern(layout, y)).map_err(|_| AcError::SingularJacobian)?;
    let mut first = None;
    let mut norm = f64::INFINITY;
    for it in 0..=max_inner {
        if let Some(r) = refresh.as_deref_mut() {
            inj.pi_bus = r(*ell);
        }
        let v = voltages(vm, va);
        let current = y.mul(&v);
        let s: Vec<Complex64> = v.iter().zip(&current).map(|(a, b)| a * b.conj()).collect();
        let f = mismatch(layout, inj, &s, *ell);
        norm = f.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        history.push(norm);
        if !norm.is_finite() {
            return Err(AcError::Diverged { iterations: it, mismatch: norm });
        }
        let initial = *first.get_or_insert(norm);
        if norm <= tol {
            return Ok(Outcome { converged: true, iterations: it });
        }
        if it == max_inner {
            break;
        }
        if norm > 1e6 * initial.max(1.0) {
            return Err(AcError::Diverged { iterations: it, mismatch: norm });
        }
        let factor = lu
            .factor(&jacobian_values(layout, y, &v, &current, &inj.pi_bus))
            .map_err(|_| AcError::SingularJacobian)?;
        let mut dx: Vec<f64> = f.iter().map(|x| -x).collect();
        factor.solve_in_place(&mut dx);
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(AcError::SingularJacobian);
        }
        for i in 0..vm.len() {
            if let Some(c) = layout.th[i] {
                va[i] += dx[c];
            }
            if let Some(c) = layout.vm[i] {
                vm[i] += dx[c];
            }
        }
        if let Some(c) = layout.ell {
            *ell += dx[c];
        }
    }
    let initial = first.unwrap_or(norm);
    if norm > initial {
        return Err(AcError::Diverged { iterations: max_inner, mismatch: norm });
    }
    Ok(Outcome { converged: false, iterations: max_inner })
}

//! Pre-attack operating point: damped Newton on the algebraic balance of the
//! swing and voltage equations with zero frequency and zero governor output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::case::GridCase;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions { tolerance: 1e-8, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    /// Phase angles in rad, bus 0 is the reference at 0.
    pub delta: Vec<f64>,
    pub voltage: Vec<f64>,
    /// Max absolute mismatch over all active and voltage balance equations.
    pub residual: f64,
    pub iterations: usize,
}

pub fn solve_equilibrium(case: &GridCase) -> Result<EquilibriumState> {
    solve_equilibrium_with(case, &EquilibriumOptions::default())
}

pub fn solve_equilibrium_with(case: &GridCase, opts: &EquilibriumOptions) -> Result<EquilibriumState> {
    let n = case.n_buses();
    let injection = net_injection(case);
    let imbalance: f64 = injection.iter().sum();
    if imbalance.abs() > opts.tolerance {
        return Err(Error::Validation(format!(
            "generation and load differ by {:.6e} MW; no steady state exists",
            case.mw(imbalance)
        )));
    }
    let field: Vec<f64> = case.buses.iter().map(|b| b.field_voltage).collect();
    let reactance: Vec<f64> = case.buses.iter().map(|b| b.reactance).collect();
    let sys = Balance { b: &case.susceptance, injection: &injection, field: Some((&field, &reactance)) };
    let (delta, voltage, residual, iterations) = newton(&sys, vec![0.0; n], vec![1.0; n], opts)?;
    Ok(EquilibriumState { delta, voltage, residual, iterations })
}

/// Angles that balance active power with all voltage magnitudes held at
/// `voltage`. Used when deriving field voltages for a new case.
pub fn solve_angles(case: &GridCase, voltage: &[f64], opts: &EquilibriumOptions) -> Result<Vec<f64>> {
    let injection = net_injection(case);
    let sys = Balance { b: &case.susceptance, injection: &injection, field: None };
    let (delta, _, _, _) = newton(&sys, vec![0.0; case.n_buses()], voltage.to_vec(), opts)?;
    Ok(delta)
}

/// Equilibrium injection `P_G - P_L` per bus.
pub fn net_injection(case: &GridCase) -> Vec<f64> {
    case.buses
        .iter()
        .map(|b| if b.kind.is_generator() { b.p_gen.min(b.p_max) - b.p_load } else { -b.p_load })
        .collect()
}

struct Balance<'a> {
    b: &'a DMatrix<f64>,
    injection: &'a [f64],
    /// Field voltages and reactances; `None` holds E fixed.
    field: Option<(&'a [f64], &'a [f64])>,
}

impl Balance<'_> {
    /// Active mismatches for every bus followed by voltage mismatches.
    fn mismatch(&self, d: &[f64], e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = d.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut s, mut c) = (0.0, 0.0);
            for j in 0..n {
                let bij = self.b[(i, j)];
                if bij != 0.0 {
                    let a = d[i] - d[j];
                    s += bij * e[j] * a.sin();
                    c += bij * e[j] * a.cos();
                }
            }
            p[i] = self.injection[i] - e[i] * s;
            if let Some((ef, x)) = self.field {
                q[i] = ef[i] - e[i] + x[i] * c;
            }
        }
        (p, q)
    }

    /// Jacobian of `[P_1..P_{n-1}, Q_0..Q_{n-1}]` with respect to
    /// `[delta_1..delta_{n-1}, E_0..E_{n-1}]` (voltage part omitted when E is fixed).
    fn jacobian(&self, d: &[f64], e: &[f64]) -> DMatrix<f64> {
        let n = d.len();
        let m = if self.field.is_some() { 2 * n - 1 } else { n - 1 };
        let mut jac = DMatrix::zeros(m, m);
        let di = |k: usize| k.checked_sub(1);
        for i in 0..n {
            for j in 0..n {
                let bij = self.b[(i, j)];
                if bij == 0.0 || i == j {
                    continue;
                }
                let a = d[i] - d[j];
                let (sa, ca) = a.sin_cos();
                if let Some(ri) = di(i) {
                    // dP_i/d(delta)
                    if let Some(cj) = di(j) {
                        jac[(ri, cj)] += e[i] * bij * e[j] * ca;
                    }
                    jac[(ri, ri)] -= e[i] * bij * e[j] * ca;
                    if self.field.is_some() {
                        jac[(ri, n - 1 + i)] -= bij * e[j] * sa;
                        jac[(ri, n - 1 + j)] -= e[i] * bij * sa;
                    }
                }
                if let Some((_, x)) = self.field {
                    let rq = n - 1 + i;
                    if let Some(ci) = di(i) {
                        jac[(rq, ci)] -= x[i] * bij * e[j] * sa;
                    }
                    if let Some(cj) = di(j) {
                        jac[(rq, cj)] += x[i] * bij * e[j] * sa;
                    }
                    jac[(rq, n - 1 + j)] += x[i] * bij * ca;
                }
            }
            if let Some((_, x)) = self.field {
                jac[(n - 1 + i, n - 1 + i)] += -1.0 + x[i] * self.b[(i, i)];
            }
        }
        jac
    }
}

fn max_abs(p: &[f64], q: &[f64]) -> f64 {
    p.iter().chain(q).fold(0.0f64, |m, v| m.max(v.abs()))
}

fn newton(
    sys: &Balance<'_>,
    mut d: Vec<f64>,
    mut e: Vec<f64>,
    opts: &EquilibriumOptions,
) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
    let n = d.len();
    let with_e = sys.field.is_some();
    let (p, q) = sys.mismatch(&d, &e);
    let mut res = max_abs(&p, &q);
    if n == 1 {
        // Single bus: only the voltage equation is non-trivial and it is linear.
        if let Some((ef, x)) = sys.field {
            e[0] = ef[0] / (1.0 - x[0] * sys.b[(0, 0)]);
        }
        let (p, q) = sys.mismatch(&d, &e);
        return Ok((d, e, max_abs(&p, &q), 0));
    }
    let mut fvec = stack(&p, &q, with_e);
    // Iterate a little past the tolerance; stop once round-off dominates.
    let target = opts.tolerance * 1e-4;
    for it in 0..=opts.max_iterations {
        if res <= target || (it == opts.max_iterations) {
            return if res <= opts.tolerance {
                Ok((d, e, res, it))
            } else {
                Err(Error::NonConvergence { iterations: it, residual: res })
            };
        }
        let jac = sys.jacobian(&d, &e);
        let step = match jac.lu().solve(&(-&fvec)) {
            Some(s) => s,
            None => return Err(Error::NonConvergence { iterations: it, residual: res }),
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut dn = d.clone();
            let mut en = e.clone();
            for k in 1..n {
                dn[k] += t * step[k - 1];
            }
            if with_e {
                for k in 0..n {
                    en[k] += t * step[n - 1 + k];
                }
            }
            let (pn, qn) = sys.mismatch(&dn, &en);
            let rn = max_abs(&pn, &qn);
            if rn.is_finite() && rn < res {
                d = dn;
                e = en;
                res = rn;
                fvec = stack(&pn, &qn, with_e);
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return if res <= opts.tolerance {
                Ok((d, e, res, it + 1))
            } else {
                Err(Error::NonConvergence { iterations: it + 1, residual: res })
            };
        }
    }
    unreachable!()
}

fn stack(p: &[f64], q: &[f64], with_e: bool) -> DVector<f64> {
    let n = p.len();
    let m = if with_e { 2 * n - 1 } else { n - 1 };
    let mut v = DVector::zeros(m);
    for k in 1..n {
        v[k - 1] = p[k];
    }
    if with_e {
        for k in 0..n {
            v[n - 1 + k] = q[k];
        }
    }
    v
}

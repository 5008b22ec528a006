//! Optimal transport between empirical measures.
//!
//! Three routes, picked by [`wasserstein_detailed`]:
//!
//! * one-dimensional Euclidean measures with `q ∈ {1, 2}`: the quantile
//!   (monotone) coupling, exact in `O(n log n)`;
//! * everything else up to [`EXACT_SUPPORT_CAP`] cost entries: a
//!   transportation simplex, exact up to floating point;
//! * larger problems: log-domain Sinkhorn at a decreasing schedule of
//!   regularizations. Each entropic plan is rounded onto the exact coupling
//!   polytope before its cost is taken, so the reported value is always an
//!   upper bound on the true distance.

use std::cmp::Ordering;

use super::{EmpiricalMeasure, WassersteinOrder};
use crate::error::{Error, Result};

/// Largest `|supp μ| · |supp ν|` solved exactly in more than one dimension.
pub const EXACT_SUPPORT_CAP: usize = 4096;

/// Entropic regularizations as fractions of the median pairwise cost.
pub const ENTROPIC_LEVELS: [f64; 3] = [0.1, 0.01, 0.005];

/// Distance between atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroundMetric {
    Euclidean,
    /// State coordinates Euclidean, action coordinates `min(|Δa|, cap)`,
    /// combined in quadrature.
    Product {
        action_cap: f64,
    },
}

impl GroundMetric {
    /// Euclidean for plain measures, capped product metric (cap 1) when the
    /// measure carries action coordinates.
    pub fn default_for(mu: &EmpiricalMeasure) -> Self {
        if mu.split().action > 0 {
            GroundMetric::Product { action_cap: 1.0 }
        } else {
            GroundMetric::Euclidean
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64], action_start: usize) -> f64 {
        match *self {
            GroundMetric::Euclidean => euclid(x, y),
            GroundMetric::Product { action_cap } => {
                let s = euclid_sq(&x[..action_start], &y[..action_start]);
                let a = euclid(&x[action_start..], &y[action_start..]).min(action_cap);
                (s + a * a).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Quantile,
    Exact,
    Entropic { regularization: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub value: f64,
    pub method: Method,
    /// True when `value` is only known to be an upper bound.
    pub upper_bound: bool,
}

/// `W_q(μ, ν)`, dispatching to the exact routes whenever they apply.
pub fn wasserstein(
    q: WassersteinOrder,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<f64> {
    wasserstein_detailed(q, mu, nu).map(|d| d.value)
}

pub fn wasserstein_detailed(
    q: WassersteinOrder,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<Distance> {
    check_dims(mu, nu)?;
    let metric = GroundMetric::default_for(mu);
    if mu.dim() == 1 && q != WassersteinOrder::Zero {
        return Ok(Distance {
            value: quantile_distance(q, mu, nu),
            method: Method::Quantile,
            upper_bound: false,
        });
    }
    if mu.len() * nu.len() <= EXACT_SUPPORT_CAP {
        return Ok(Distance {
            value: wasserstein_lp(q, mu, nu, metric)?,
            method: Method::Exact,
            upper_bound: false,
        });
    }
    wasserstein_entropic(q, mu, nu, metric)
}

fn check_dims(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    Ok(())
}

fn euclid_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 1 {
        (x[0] - y[0]).abs()
    } else {
        euclid_sq(x, y).sqrt()
    }
}

/// Atoms in a canonical order (lexicographic in coordinates, then weight), so
/// every route is exactly invariant under shuffling of the atom list.
fn canonical_atoms(mu: &EmpiricalMeasure) -> Vec<(f64, &[f64])> {
    let mut atoms: Vec<(f64, &[f64])> = mu.atoms().collect();
    atoms.sort_by(|a, b| {
        for (x, y) in a.1.iter().zip(b.1) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.0.total_cmp(&b.0)
    });
    atoms
}

fn quantile_distance(q: WassersteinOrder, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let a = canonical_atoms(mu);
    let b = canonical_atoms(nu);
    if mu.is_uniform() && nu.is_uniform() && a.len() == b.len() {
        // Sorted pairing.
        let cost = super::exact_sum(
            a.iter()
                .zip(&b)
                .map(|(x, y)| q.cost((x.1[0] - y.1[0]).abs())),
        ) / a.len() as f64;
        return q.distance_from_cost(cost);
    }
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut prev = 0.0;
    let (mut i, mut j) = (0, 0);
    let mut cost = super::ExactSum::new();
    let mut next_a = a[0].0;
    let mut next_b = b[0].0;
    loop {
        let upper_a = ca + next_a;
        let upper_b = cb + next_b;
        let level = upper_a.min(upper_b).min(1.0);
        let mass = level - prev;
        if mass > 0.0 {
            cost.add(mass * q.cost((a[i].1[0] - b[j].1[0]).abs()));
        }
        prev = level.max(prev);
        let last_a = i + 1 == a.len();
        let last_b = j + 1 == b.len();
        if last_a && last_b {
            break;
        }
        if (upper_a <= upper_b && !last_a) || last_b {
            ca = upper_a;
            i += 1;
            next_a = a[i].0;
        } else {
            cb = upper_b;
            j += 1;
            next_b = b[j].0;
        }
    }
    q.distance_from_cost(cost.value())
}

fn cost_matrix(
    q: WassersteinOrder,
    a: &[(f64, &[f64])],
    b: &[(f64, &[f64])],
    metric: GroundMetric,
    action_start: usize,
) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            c.push(q.cost(metric.distance(x.1, y.1, action_start)));
        }
    }
    c
}

fn action_start(mu: &EmpiricalMeasure) -> usize {
    let s = mu.split();
    s.initial + s.terminal
}

/// Exact `W_q` by linear programming, any dimension.
pub fn wasserstein_lp(
    q: WassersteinOrder,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<f64> {
    check_dims(mu, nu)?;
    let a = canonical_atoms(mu);
    let b = canonical_atoms(nu);
    let c = cost_matrix(q, &a, &b, metric, action_start(mu));
    let wa: Vec<f64> = a.iter().map(|x| x.0).collect();
    let wb: Vec<f64> = b.iter().map(|x| x.0).collect();
    Ok(q.distance_from_cost(transport_cost_exact(&wa, &wb, &c)?))
}

/// Minimum of `Σ π_ij c_ij` over couplings of `supply` and `demand`
/// (row-major `c`), by the transportation simplex with MODI potentials.
pub fn transport_cost_exact(supply: &[f64], demand: &[f64], c: &[f64]) -> Result<f64> {
    let m = supply.len();
    let n = demand.len();
    if m == 0 || n == 0 {
        return Err(Error::EmptySupport);
    }
    if c.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            found: c.len(),
        });
    }
    if m == 1 || n == 1 {
        let w = if m == 1 { demand } else { supply };
        return Ok(super::exact_sum(w.iter().zip(c).map(|(w, c)| w * c)));
    }
    let mut basis = northwest_corner(supply, demand);
    let scale = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    let eps = 1e-13 * scale;
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut is_basic = vec![false; m * n];
    for cell in &basis {
        is_basic[cell.i * n + cell.j] = true;
    }
    for _ in 0..max_iter {
        let adj = tree_adjacency(&basis, m, n);
        potentials(&basis, &adj, c, m, n, &mut u, &mut v);
        // Dantzig pricing.
        let mut best = (-eps, usize::MAX);
        for i in 0..m {
            for j in 0..n {
                if is_basic[i * n + j] {
                    continue;
                }
                let r = c[i * n + j] - u[i] - v[j];
                if r < best.0 {
                    best = (r, i * n + j);
                }
            }
        }
        if best.1 == usize::MAX {
            let cost = super::exact_sum(basis.iter().map(|b| b.flow * c[b.i * n + b.j]));
            return Ok(cost.max(0.0).min(f64::MAX));
        }
        let (ei, ej) = (best.1 / n, best.1 % n);
        let path = tree_path(&adj, &basis, ei, m + ej, m, n);
        // path holds basis indices from row ei to column ej; alternate -,+,-,...
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &bi) in path.iter().enumerate() {
            if k % 2 == 0 && basis[bi].flow < theta {
                theta = basis[bi].flow;
                leave = bi;
            }
        }
        for (k, &bi) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis[bi].flow -= theta;
            } else {
                basis[bi].flow += theta;
            }
        }
        let old = basis[leave];
        is_basic[old.i * n + old.j] = false;
        basis[leave] = Cell {
            i: ei,
            j: ej,
            flow: theta,
        };
        is_basic[best.1] = true;
        for b in basis.iter_mut() {
            if b.flow < 0.0 {
                b.flow = 0.0;
            }
        }
    }
    Err(Error::InvalidArgument(
        "transportation simplex iteration limit reached".into(),
    ))
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    i: usize,
    j: usize,
    flow: f64,
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Vec<Cell> {
    let m = supply.len();
    let n = demand.len();
    let total_a: f64 = super::exact_sum(supply.iter().copied());
    let total_b: f64 = super::exact_sum(demand.iter().copied());
    let mut ra: Vec<f64> = supply.to_vec();
    let mut rb: Vec<f64> = demand.iter().map(|d| d * total_a / total_b).collect();
    let (mut i, mut j) = (0, 0);
    let mut cells = Vec::with_capacity(m + n - 1);
    for _ in 0..m + n - 1 {
        let f = ra[i].min(rb[j]).max(0.0);
        cells.push(Cell { i, j, flow: f });
        ra[i] -= f;
        rb[j] -= f;
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 {
            i += 1;
        } else if ra[i] < rb[j] {
            i += 1;
        } else {
            j += 1;
        }
        if i >= m || j >= n {
            break;
        }
    }
    // Leftover rounding mass lands on the last cell.
    if let Some(last) = cells.last_mut() {
        last.flow += ra[m - 1].max(0.0).min(rb[n - 1].max(0.0));
    }
    cells
}

/// Adjacency over nodes `0..m` (rows) and `m..m+n` (columns): `(neighbor, basis index)`.
fn tree_adjacency(basis: &[Cell], m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, b) in basis.iter().enumerate() {
        adj[b.i].push((m + b.j, k));
        adj[m + b.j].push((b.i, k));
    }
    adj
}

fn potentials(
    basis: &[Cell],
    adj: &[Vec<(usize, usize)>],
    c: &[f64],
    m: usize,
    n: usize,
    u: &mut [f64],
    v: &mut [f64],
) {
    let mut seen = vec![false; m + n];
    let mut stack = vec![0usize];
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = stack.pop() {
        for &(next, k) in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            let b = basis[k];
            let cij = c[b.i * n + b.j];
            if next >= m {
                v[next - m] = cij - u[node];
            } else {
                u[next] = cij - v[node - m];
            }
            stack.push(next);
        }
    }
}

/// Basis indices along the unique tree path from `from` to `to`.
fn tree_path(
    adj: &[Vec<(usize, usize)>],
    _basis: &[Cell],
    from: usize,
    to: usize,
    m: usize,
    n: usize,
) -> Vec<usize> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(node) = stack.pop() {
        if node == to {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                stack.push(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (p, k) = parent[node].expect("basis is a spanning tree");
        path.push(k);
        node = p;
    }
    path.reverse();
    path
}

/// Entropic upper bound on `W_q`: Sinkhorn at each level of
/// [`ENTROPIC_LEVELS`], each plan rounded to an exact coupling; the smallest
/// rounded cost is returned.
pub fn wasserstein_entropic(
    q: WassersteinOrder,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<Distance> {
    check_dims(mu, nu)?;
    let a: Vec<(f64, &[f64])> = canonical_atoms(mu)
        .into_iter()
        .filter(|x| x.0 > 0.0)
        .collect();
    let b: Vec<(f64, &[f64])> = canonical_atoms(nu)
        .into_iter()
        .filter(|x| x.0 > 0.0)
        .collect();
    let c = cost_matrix(q, &a, &b, metric, action_start(mu));
    let wa: Vec<f64> = a.iter().map(|x| x.0).collect();
    let wb: Vec<f64> = b.iter().map(|x| x.0).collect();
    let mut sorted = c.clone();
    sorted.sort_by(f64::total_cmp);
    let mut median = sorted[sorted.len() / 2];
    if median <= 0.0 {
        median = sorted.iter().sum::<f64>() / sorted.len() as f64;
    }
    if median <= 0.0 {
        return Ok(Distance {
            value: 0.0,
            method: Method::Entropic {
                regularization: 0.0,
            },
            upper_bound: true,
        });
    }
    let mut best = (f64::INFINITY, 0.0);
    for level in ENTROPIC_LEVELS {
        let eps = level * median;
        let plan = sinkhorn_plan(&wa, &wb, &c, eps);
        let cost = super::exact_sum(plan.iter().zip(&c).map(|(p, c)| p * c));
        if cost < best.0 {
            best = (cost, eps);
        }
    }
    Ok(Distance {
        value: q.distance_from_cost(best.0),
        method: Method::Entropic {
            regularization: best.1,
        },
        upper_bound: true,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_plan(a: &[f64], b: &[f64], c: &[f64], eps: f64) -> Vec<f64> {
    let m = a.len();
    let n = b.len();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let max_iter = 20_000;
    for it in 0..max_iter {
        for i in 0..m {
            let row = &c[i * n..(i + 1) * n];
            f[i] = eps * log_a[i] - eps * log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps));
        }
        for j in 0..n {
            g[j] = eps * log_b[j] - eps * log_sum_exp((0..m).map(|i| (f[i] - c[i * n + j]) / eps));
        }
        if it % 10 == 9 {
            // Column marginals are exact after the g update; check rows.
            let err: f64 = (0..m)
                .map(|i| {
                    let s: f64 = (0..n)
                        .map(|j| ((f[i] + g[j] - c[i * n + j]) / eps).exp())
                        .sum();
                    (s - a[i]).abs()
                })
                .sum();
            if err < 1e-12 {
                break;
            }
        }
    }
    let mut plan: Vec<f64> = (0..m * n)
        .map(|k| ((f[k / n] + g[k % n] - c[k]) / eps).exp())
        .collect();
    round_to_couplings(&mut plan, a, b);
    plan
}

/// Projects an approximate plan onto the exact coupling polytope.
fn round_to_couplings(plan: &mut [f64], a: &[f64], b: &[f64]) {
    let m = a.len();
    let n = b.len();
    for i in 0..m {
        let s: f64 = plan[i * n..(i + 1) * n].iter().sum();
        if s > a[i] && s > 0.0 {
            let x = a[i] / s;
            plan[i * n..(i + 1) * n].iter_mut().for_each(|p| *p *= x);
        }
    }
    for j in 0..n {
        let s: f64 = (0..m).map(|i| plan[i * n + j]).sum();
        if s > b[j] && s > 0.0 {
            let y = b[j] / s;
            (0..m).for_each(|i| plan[i * n + j] *= y);
        }
    }
    let err_a: Vec<f64> = (0..m)
        .map(|i| (a[i] - plan[i * n..(i + 1) * n].iter().sum::<f64>()).max(0.0))
        .collect();
    let err_b: Vec<f64> = (0..n)
        .map(|j| (b[j] - (0..m).map(|i| plan[i * n + j]).sum::<f64>()).max(0.0))
        .collect();
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for i in 0..m {
            for j in 0..n {
                plan[i * n + j] += err_a[i] * err_b[j] / total;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Split;

    fn m1(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_values(v).unwrap()
    }

    #[test]
    fn single_atoms() {
        let a = m1(&[0.0]);
        let b = m1(&[3.0]);
        assert_eq!(wasserstein(WassersteinOrder::One, &a, &b).unwrap(), 3.0);
        assert_eq!(wasserstein(WassersteinOrder::Zero, &a, &b).unwrap(), 1.0);
        assert_eq!(wasserstein(WassersteinOrder::One, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn two_point_w2_matches_lp() {
        // Exact 2x2 LP: pairing 0->1, 2->3 costs 1 each, crossing costs 9+1.
        let lp = transport_cost_exact(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 9.0, 1.0, 1.0]).unwrap();
        assert_eq!(lp, 1.0);
        let a = m1(&[0.0, 2.0]);
        let b = m1(&[1.0, 3.0]);
        assert_eq!(wasserstein(WassersteinOrder::Two, &a, &b).unwrap(), 1.0);
        assert_eq!(
            wasserstein_lp(WassersteinOrder::Two, &a, &b, GroundMetric::Euclidean).unwrap(),
            1.0
        );
    }

    #[test]
    fn weighted_quantile_path() {
        let a = EmpiricalMeasure::new(vec![0.0, 1.0], 1, vec![0.25, 0.75]).unwrap();
        let b = m1(&[0.0]);
        assert!((wasserstein(WassersteinOrder::One, &a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!(
            (wasserstein(WassersteinOrder::Two, &a, &b).unwrap() - 0.75f64.sqrt()).abs() < 1e-15
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = m1(&[0.0]);
        let b = EmpiricalMeasure::uniform(vec![0.0, 0.0], 2).unwrap();
        assert!(matches!(
            wasserstein(WassersteinOrder::One, &a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_transport_problems() {
        // Many equal partial sums force zero-flow basic cells.
        let w = vec![0.25; 4];
        let c: Vec<f64> = (0..16)
            .map(|k| ((k / 4) as f64 - (k % 4) as f64).abs())
            .collect();
        assert!(transport_cost_exact(&w, &w, &c).unwrap().abs() < 1e-15);
        let rev: Vec<f64> = (0..16)
            .map(|k| ((k / 4) as f64 + (k % 4) as f64 - 3.0).abs())
            .collect();
        assert!(transport_cost_exact(&w, &w, &rev).unwrap().abs() < 1e-15);
        // Zero supplies and demands: all mass moves two steps.
        let a = [0.5, 0.5, 0.0, 0.0];
        let b = [0.0, 0.0, 0.5, 0.5];
        assert!((transport_cost_exact(&a, &b, &c).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn product_metric_caps_actions() {
        let a = EmpiricalMeasure::uniform(vec![0.0, 0.0, 0.0], 3)
            .unwrap()
            .with_split(Split::new(1, 1, 1))
            .unwrap();
        let b = EmpiricalMeasure::uniform(vec![0.0, 0.0, 5.0], 3)
            .unwrap()
            .with_split(Split::new(1, 1, 1))
            .unwrap();
        assert_eq!(wasserstein(WassersteinOrder::One, &a, &b).unwrap(), 1.0);
    }

    #[test]
    fn entropic_is_an_upper_bound_close_to_exact() {
        let a = EmpiricalMeasure::uniform(vec![0.0, 0.3, 1.1, 2.0, 0.0, 0.7, 1.9, 0.2], 2).unwrap();
        let b = EmpiricalMeasure::uniform(vec![0.5, 0.1, 1.0, 1.4, 2.2, 0.3], 2).unwrap();
        for q in [
            WassersteinOrder::One,
            WassersteinOrder::Two,
            WassersteinOrder::Zero,
        ] {
            let exact = wasserstein_lp(q, &a, &b, GroundMetric::Euclidean).unwrap();
            let ent = wasserstein_entropic(q, &a, &b, GroundMetric::Euclidean).unwrap();
            assert!(ent.upper_bound);
            assert!(ent.value >= exact - 1e-12, "{q}: {} < {exact}", ent.value);
            assert!(
                ent.value <= exact * 1.02 + 1e-12,
                "{q}: {} vs {exact}",
                ent.value
            );
        }
    }
}

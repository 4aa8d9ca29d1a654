//! Exact transportation-LP oracle: dense two-phase simplex over big
//! rationals with Bland's rule.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn to_f64(x: &Q) -> f64 {
    // numerator and denominator stay small in these tests
    let n: f64 = x.numer().to_string().parse().unwrap();
    let d: f64 = x.denom().to_string().parse().unwrap();
    n / d
}

/// Minimizes `c · x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
/// Returns the optimal value, or `None` if infeasible.
pub fn simplex_min(a: &[Vec<Q>], b: &[Q], c: &[Q]) -> Option<Q> {
    let m = a.len();
    let n = c.len();
    // tableau columns: n structural, m artificial, then rhs
    let width = n + m + 1;
    let mut t: Vec<Vec<Q>> = (0..m)
        .map(|i| {
            let mut row = vec![Q::zero(); width];
            row[..n].clone_from_slice(&a[i]);
            row[n + i] = Q::one();
            row[width - 1] = b[i].clone();
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    let mut cost1 = vec![Q::zero(); n + m];
    for j in n..n + m {
        cost1[j] = Q::one();
    }
    run(&mut t, &mut basis, &cost1, n + m);
    let infeas: Q = basis
        .iter()
        .zip(&t)
        .filter(|(&bv, _)| bv >= n)
        .map(|(_, row)| row[width - 1].clone())
        .fold(Q::zero(), |s, v| s + v);
    if infeas.is_positive() {
        return None;
    }
    // drive zero-level artificials out of the basis, dropping redundant rows
    let mut r = 0;
    while r < t.len() {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| !t[r][j].is_zero()) {
                pivot(&mut t, &mut basis, r, col);
            } else {
                t.remove(r);
                basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut cost2 = vec![Q::zero(); n + m];
    cost2[..n].clone_from_slice(c);
    run(&mut t, &mut basis, &cost2, n);
    Some(
        basis
            .iter()
            .zip(&t)
            .map(|(&bv, row)| cost2[bv].clone() * row[width - 1].clone())
            .fold(Q::zero(), |s, v| s + v),
    )
}

fn pivot(t: &mut [Vec<Q>], basis: &mut [usize], r: usize, col: usize) {
    let p = t[r][col].clone();
    for v in t[r].iter_mut() {
        *v = v.clone() / p.clone();
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && !row[col].is_zero() {
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
    }
    basis[r] = col;
}

/// Bland's rule; only columns `< allowed` may enter.
fn run(t: &mut [Vec<Q>], basis: &mut [usize], cost: &[Q], allowed: usize) {
    let width = t.first().map_or(0, Vec::len);
    loop {
        // reduced cost of column j: c_j - Σ_r c_{basis r} t[r][j]
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let mut rc = cost[j].clone();
            for (r, row) in t.iter().enumerate() {
                rc -= cost[basis[r]].clone() * row[j].clone();
            }
            rc.is_negative()
        });
        let Some(col) = entering else { return };
        let mut best: Option<(Q, usize)> = None;
        for (r, row) in t.iter().enumerate() {
            if row[col].is_positive() {
                let ratio = row[width - 1].clone() / row[col].clone();
                let better = match &best {
                    None => true,
                    Some((b, br)) => ratio < *b || (ratio == *b && basis[r] < basis[*br]),
                };
                if better {
                    best = Some((ratio, r));
                }
            }
        }
        let (_, r) = best.expect("transport LP is bounded");
        pivot(t, basis, r, col);
    }
}

/// Optimal cost of moving `(xs, a)` onto `(ys, b)` with cost `|x - y|^p`.
pub fn transport_cost(xs: &[Q], a: &[Q], ys: &[Q], b: &[Q], p: u32) -> Q {
    let (m, n) = (xs.len(), ys.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..m {
        let mut row = vec![Q::zero(); m * n];
        for j in 0..n {
            row[i * n + j] = Q::one();
        }
        rows.push(row);
        rhs.push(a[i].clone());
    }
    for j in 0..n {
        let mut row = vec![Q::zero(); m * n];
        for i in 0..m {
            row[i * n + j] = Q::one();
        }
        rows.push(row);
        rhs.push(b[j].clone());
    }
    let mut c = Vec::with_capacity(m * n);
    for x in xs {
        for y in ys {
            let d = (x.clone() - y.clone()).abs();
            let mut v = Q::one();
            for _ in 0..p {
                v *= d.clone();
            }
            c.push(v);
        }
    }
    simplex_min(&rows, &rhs, &c).expect("balanced transport is feasible")
}

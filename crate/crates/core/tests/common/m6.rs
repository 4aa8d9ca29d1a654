//! Population oracle for the M6 true model under the marginal game.
//!
//! With features independent given the class, `Σ_{i∉S} X_i | G = k` is
//! normal, so `v(S; x) = ½ Σ_k E[σ(Σ_{i∈S} x_i + m_k + s_k Z − 24.5)]`
//! depends on `x` only through `u = Σ_{i∈S} x_i`. Each coalition's value is
//! tabulated in `u` by quadrature over `Z` and linearly interpolated.

use fairscope::models::{generate, ModelId, SynthParams};

pub const N_FEATURES: usize = 5;
const STEP: f64 = 0.01;

fn sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn class_std(i: usize, k: usize) -> f64 {
    let g = k as f64;
    [0.5 + g, 1.0, 1.0, 1.0 - 0.5 * g, 1.0 - 0.75 * g][i]
}

pub struct M6Oracle {
    lo: f64,
    tables: Vec<Vec<f64>>,
}

impl M6Oracle {
    pub fn new(params: &SynthParams) -> Self {
        // standard normal quadrature on [-10, 10]
        let nodes: Vec<f64> = (0..=400).map(|j| -10.0 + j as f64 * 0.05).collect();
        let dens: Vec<f64> = nodes.iter().map(|z| (-0.5 * z * z).exp()).collect();
        let norm: f64 = dens.iter().sum();
        let (lo, hi) = (-10.0, 45.0);
        let len = ((hi - lo) / STEP) as usize + 1;
        let mut tables = Vec::new();
        for mask in 0..(1usize << N_FEATURES) {
            let mut stats = Vec::new();
            for k in 0..2 {
                let (mut m, mut v) = (0.0, 0.0);
                for i in (0..N_FEATURES).filter(|i| mask >> i & 1 == 0) {
                    m += params.mu - params.shifts[i] * (1 - k) as f64;
                    v += class_std(i, k).powi(2);
                }
                stats.push((m, v.sqrt()));
            }
            let table = (0..len)
                .map(|t| {
                    let u = lo + t as f64 * STEP;
                    let mut acc = 0.0;
                    for &(m, s) in &stats {
                        if s == 0.0 {
                            acc += 0.5 * sigma(u + m - 24.5);
                        } else {
                            let e: f64 = nodes
                                .iter()
                                .zip(&dens)
                                .map(|(z, d)| d * sigma(u + m + s * z - 24.5))
                                .sum();
                            acc += 0.5 * e / norm;
                        }
                    }
                    acc
                })
                .collect();
            tables.push(table);
        }
        Self { lo, tables }
    }

    pub fn value(&self, mask: usize, x: &[f64]) -> f64 {
        let u: f64 = (0..N_FEATURES).filter(|i| mask >> i & 1 == 1).map(|i| x[i]).sum();
        let t = &self.tables[mask];
        let pos = ((u - self.lo) / STEP).clamp(0.0, (t.len() - 2) as f64);
        let j = pos.floor() as usize;
        let w = pos - j as f64;
        t[j] * (1.0 - w) + t[j + 1] * w
    }

    /// Shapley values by averaging marginal contributions over all orderings.
    pub fn shapley(&self, x: &[f64]) -> [f64; N_FEATURES] {
        let v: Vec<f64> = (0..(1usize << N_FEATURES)).map(|m| self.value(m, x)).collect();
        let mut phi = [0.0; N_FEATURES];
        let mut perm: Vec<usize> = (0..N_FEATURES).collect();
        let mut count = 0.0;
        permutations(&mut perm, 0, &mut |p| {
            let mut mask = 0usize;
            for &i in p {
                phi[i] += v[mask | 1 << i] - v[mask];
                mask |= 1 << i;
            }
            count += 1.0;
        });
        phi.map(|p| p / count)
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

/// `(total, positive, negative)` bias with a downward favorable direction,
/// integrated as `∫ |F0 − F1| dt` over the merged sample points.
pub fn cdf_bias_down(mut a: Vec<f64>, mut b: Vec<f64>) -> (f64, f64, f64) {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut pos, mut neg) = (0.0, 0.0);
    let mut prev: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            _ => unreachable!(),
        };
        if let Some(p) = prev {
            // favorable direction down: signed classifier bias is F0 − F1
            let gap = i as f64 / na - j as f64 / nb;
            if gap > 0.0 {
                pos += gap * (t - p);
            } else {
                neg -= gap * (t - p);
            }
        }
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        prev = Some(t);
    }
    (pos + neg, pos, neg)
}

pub struct M6Reference {
    /// Per feature `(β, β⁺, β⁻)` for the one-feature partial dependence.
    pub pdp: Vec<(f64, f64, f64)>,
    /// Per feature `(β, β⁺, β⁻)` for marginal Shapley values.
    pub shapley: Vec<(f64, f64, f64)>,
    /// Shapley bias `(φ, φ⁺, φ⁻)` with the Shapley-sum coalition explainer.
    pub shapley_bias: Vec<(f64, f64, f64)>,
}

pub fn reference(draws: usize, seed: u64) -> M6Reference {
    let params = SynthParams::default();
    let oracle = M6Oracle::new(&params);
    let (ds, _) = generate(ModelId::M6, &params, draws, seed).unwrap();
    let n = N_FEATURES;
    let mut pdp = vec![(Vec::new(), Vec::new()); n];
    let mut shap = vec![(Vec::new(), Vec::new()); n];
    let mut rows_phi = Vec::with_capacity(draws);
    for r in 0..draws {
        let x = ds.features.row(r);
        let g = ds.protected[r];
        let phi = oracle.shapley(x);
        for i in 0..n {
            let pv = oracle.value(1 << i, x);
            if g == 0 { pdp[i].0.push(pv) } else { pdp[i].1.push(pv) }
            if g == 0 { shap[i].0.push(phi[i]) } else { shap[i].1.push(phi[i]) }
        }
        rows_phi.push((g, phi));
    }
    let pdp = pdp.into_iter().map(|(a, b)| cdf_bias_down(a, b)).collect();
    let shapley = shap.into_iter().map(|(a, b)| cdf_bias_down(a, b)).collect();

    let mut game = vec![(0.0, 0.0, 0.0); 1 << n];
    for (mask, slot) in game.iter_mut().enumerate().skip(1) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (g, phi) in &rows_phi {
            let e: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| phi[i]).sum();
            if *g == 0 { a.push(e) } else { b.push(e) }
        }
        *slot = cdf_bias_down(a, b);
    }
    let mut fact = [1.0f64; 6];
    for k in 1..6 {
        fact[k] = fact[k - 1] * k as f64;
    }
    let shapley_bias = (0..n)
        .map(|i| {
            let mut out = (0.0, 0.0, 0.0);
            for mask in (0..(1usize << n)).filter(|m| m >> i & 1 == 0) {
                let s = mask.count_ones() as usize;
                let w = fact[s] * fact[n - s - 1] / fact[n];
                let (a, b) = (game[mask], game[mask | 1 << i]);
                out.0 += w * (b.0 - a.0);
                out.1 += w * (b.1 - a.1);
                out.2 += w * (b.2 - a.2);
            }
            out
        })
        .collect();
    M6Reference {
        pdp,
        shapley,
        shapley_bias,
    }
}

//! One-step martingale kernels and probe measures from the martingale polytope.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::market::{Measure, ScenarioTree};

/// Strictly positive one-step martingale kernel q ∝ p·exp(λ·ΔS) leaving
/// `node`, or `None` when the one-step market admits arbitrage.
pub fn esscher_kernel(tree: &ScenarioTree, node: usize) -> Option<Vec<f64>> {
    let children = tree.node(node).children();
    let probs: Vec<f64> = children.iter().map(|&c| tree.node(c).prob).collect();
    let incs: Vec<Vec<f64>> = children.iter().map(|&c| tree.increment(c)).collect();
    let d = tree.assets();
    let span = incs.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
    if span == 0.0 {
        return None;
    }
    // minimize ln Σ p exp(λ·ΔS); coercive iff 0 is interior to the hull
    let objective = |lam: &DVector<f64>| -> (f64, Vec<f64>) {
        let expo: Vec<f64> = incs
            .iter()
            .map(|v| lam.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = probs
            .iter()
            .zip(&expo)
            .map(|(p, e)| p * (e - top).exp())
            .collect();
        let total: f64 = w.iter().sum();
        (top + total.ln(), w.into_iter().map(|x| x / total).collect())
    };
    let mut lam: DVector<f64> = DVector::zeros(d);
    for _ in 0..200 {
        let (f, q) = objective(&lam);
        let mut g: DVector<f64> = DVector::zeros(d);
        for (qi, v) in q.iter().zip(&incs) {
            for i in 0..d {
                g[i] += qi * v[i];
            }
        }
        if g.amax() <= 1e-14 * span {
            return Some(q);
        }
        let mut h: DMatrix<f64> = DMatrix::zeros(d, d);
        for (qi, v) in q.iter().zip(&incs) {
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] += qi * (v[i] - g[i]) * (v[j] - g[j]);
                }
            }
        }
        let dir: DVector<f64> = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        let trust_model = -slope <= 1e-13 * (1.0 + f.abs());
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &lam + t * &dir;
            let fc = objective(&cand).0;
            if fc.is_finite() && (trust_model || fc <= f + 1e-4 * t * slope) {
                lam = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if lam.amax() * span > 200.0 {
            return None;
        }
        if !moved {
            let (_, q) = objective(&lam);
            let resid = drift(&q, &incs);
            return (resid <= 1e-10 * span).then_some(q);
        }
    }
    None
}

fn drift(q: &[f64], incs: &[Vec<f64>]) -> f64 {
    let d = incs.first().map_or(0, Vec::len);
    (0..d)
        .map(|i| q.iter().zip(incs).map(|(w, v)| w * v[i]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// First non-terminal node whose one-step market admits arbitrage.
pub fn find_arbitrage(tree: &ScenarioTree) -> Option<usize> {
    tree.internal_nodes()
        .find(|&n| esscher_kernel(tree, n).is_none())
}

/// Measure obtained by chaining one transition kernel per non-terminal node.
pub fn product_measure(tree: &ScenarioTree, kernels: &[Vec<f64>]) -> Measure {
    let mut mass = vec![0.0; tree.num_nodes()];
    mass[0] = 1.0;
    for n in tree.internal_nodes() {
        for (&c, q) in tree.node(n).children().iter().zip(&kernels[n]) {
            mass[c] = mass[n] * q;
        }
    }
    let weights = tree.leaves().map(|l| mass[l].max(0.0)).collect();
    Measure::from_unnormalized(weights).expect("kernels are probability vectors")
}

/// Product of one-step Esscher kernels: an equivalent martingale measure.
pub fn equivalent_martingale_measure(tree: &ScenarioTree) -> Option<Measure> {
    let kernels: Option<Vec<Vec<f64>>> = tree
        .internal_nodes()
        .map(|n| esscher_kernel(tree, n))
        .collect();
    kernels.map(|k| product_measure(tree, &k))
}

/// Extreme points of {q ≥ 0, Σq = 1, Σ q·ΔS = 0} for the step leaving
/// `node`, found by enumerating basic feasible solutions.
pub fn one_step_vertices(tree: &ScenarioTree, node: usize) -> Vec<Vec<f64>> {
    let children = tree.node(node).children();
    let incs: Vec<Vec<f64>> = children.iter().map(|&c| tree.increment(c)).collect();
    let m = children.len();
    let d = tree.assets();
    let span = incs
        .iter()
        .flatten()
        .fold(1e-300_f64, |a, x| a.max(x.abs()));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for size in 1..=(d + 1).min(m) {
        for subset in combinations(m, size) {
            let mut a = DMatrix::zeros(d + 1, size);
            for (col, &k) in subset.iter().enumerate() {
                a[(0, col)] = 1.0;
                for i in 0..d {
                    a[(i + 1, col)] = incs[k][i] / span;
                }
            }
            let mut b = DVector::zeros(d + 1);
            b[0] = 1.0;
            let svd = a.clone().svd(true, true);
            let rank = svd.rank(1e-10);
            if rank < size {
                continue;
            }
            let Ok(sol) = svd.solve(&b, 1e-12) else {
                continue;
            };
            if (&a * &sol - &b).amax() > 1e-10 || sol.iter().any(|&x| x < -1e-12) {
                continue;
            }
            let mut q = vec![0.0; m];
            for (col, &k) in subset.iter().enumerate() {
                q[k] = sol[col].max(0.0);
            }
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|x| *x /= total);
            if !out
                .iter()
                .any(|v| v.iter().zip(&q).all(|(x, y)| (x - y).abs() < 1e-10))
            {
                out.push(q);
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Vertices of the martingale polytope, built as products of one-step
/// vertices. When there are more than `cap` combinations, `cap` of them
/// are sampled with `rng`.
pub fn martingale_vertices<R: Rng>(tree: &ScenarioTree, cap: usize, rng: &mut R) -> Vec<Measure> {
    let local: Vec<Vec<Vec<f64>>> = tree
        .internal_nodes()
        .map(|n| one_step_vertices(tree, n))
        .collect();
    if local.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let total = local
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    let mut out = Vec::new();
    if total <= cap {
        let mut choice = vec![0usize; local.len()];
        loop {
            let kernels: Vec<Vec<f64>> = choice
                .iter()
                .zip(&local)
                .map(|(&i, v)| v[i].clone())
                .collect();
            push_unique(&mut out, product_measure(tree, &kernels));
            // odometer increment
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < local[k].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    } else {
        for _ in 0..cap {
            let kernels: Vec<Vec<f64>> = local
                .iter()
                .map(|v| v[rng.gen_range(0..v.len())].clone())
                .collect();
            push_unique(&mut out, product_measure(tree, &kernels));
        }
    }
    out
}

fn push_unique(out: &mut Vec<Measure>, m: Measure) {
    let dup = out.iter().any(|o| {
        o.weights()
            .iter()
            .zip(m.weights())
            .all(|(a, b)| (a - b).abs() < 1e-12)
    });
    if !dup {
        out.push(m);
    }
}

/// Random equivalent martingale measures: each kernel mixes the Esscher
/// kernel with a random convex combination of one-step vertices.
pub fn random_interior_measures<R: Rng>(
    tree: &ScenarioTree,
    count: usize,
    rng: &mut R,
) -> Vec<Measure> {
    let base: Option<Vec<Vec<f64>>> = tree
        .internal_nodes()
        .map(|n| esscher_kernel(tree, n))
        .collect();
    let Some(base) = base else { return Vec::new() };
    let local: Vec<Vec<Vec<f64>>> = tree
        .internal_nodes()
        .map(|n| one_step_vertices(tree, n))
        .collect();
    (0..count)
        .map(|_| {
            let kernels: Vec<Vec<f64>> = base
                .iter()
                .zip(&local)
                .map(|(b, verts)| {
                    let raw: Vec<f64> = verts
                        .iter()
                        .map(|_| -rng.gen::<f64>().max(1e-300).ln())
                        .collect();
                    let total: f64 = raw.iter().sum();
                    let theta: f64 = rng.gen_range(0.05..0.95);
                    let mut q: Vec<f64> = b.iter().map(|x| theta * x).collect();
                    for (w, v) in raw.iter().zip(verts) {
                        for (qi, vi) in q.iter_mut().zip(v) {
                            *qi += (1.0 - theta) * w / total * vi;
                        }
                    }
                    q
                })
                .collect();
            product_measure(tree, &kernels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{binomial, build_tree, martingale_residual, NodeSpec, TreeSpec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trinomial() -> ScenarioTree {
        let node = |parent: Option<usize>, prob: Option<f64>, s: f64| NodeSpec {
            parent,
            prob,
            price: vec![s],
        };
        build_tree(&TreeSpec::Nodes(vec![
            node(None, None, 1.0),
            node(Some(0), Some(1.0 / 3.0), 2.0),
            node(Some(0), Some(1.0 / 3.0), 1.0),
            node(Some(0), Some(1.0 / 3.0), 0.5),
        ]))
        .unwrap()
    }

    #[test]
    fn binomial_kernel_is_unique_martingale_measure() {
        let tree = binomial(1.0, 2.0, 0.5, 0.5, 1).unwrap();
        let q = esscher_kernel(&tree, 0).unwrap();
        assert_abs_diff_eq!(q[0], 1.0 / 3.0, epsilon = 1e-14);
        let v = one_step_vertices(&tree, 0);
        assert_eq!(v.len(), 1);
        assert_abs_diff_eq!(v[0][0], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn arbitrage_is_detected() {
        let tree = binomial(1.0, 2.0, 1.5, 0.5, 1).unwrap();
        assert_eq!(find_arbitrage(&tree), Some(0));
        assert!(equivalent_martingale_measure(&tree).is_none());
        let ok = binomial(1.0, 2.0, 0.5, 0.5, 3).unwrap();
        assert_eq!(find_arbitrage(&ok), None);
    }

    #[test]
    fn trinomial_vertices() {
        let tree = trinomial();
        let mut v = one_step_vertices(&tree, 0);
        v.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        // {0 alone} and {+1, −0.5} mixtures
        assert_eq!(v.len(), 2);
        assert_abs_diff_eq!(v[0][1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1][0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1][2], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn probes_are_martingale_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tree = binomial(1.0, 2.0, 0.5, 0.4, 3).unwrap();
        let verts = martingale_vertices(&tree, 4096, &mut rng);
        assert_eq!(verts.len(), 1);
        let tree = trinomial();
        for m in martingale_vertices(&tree, 4096, &mut rng)
            .into_iter()
            .chain(random_interior_measures(&tree, 20, &mut rng))
        {
            assert!(martingale_residual(&tree, &m).unwrap() <= 1e-12);
        }
        for m in random_interior_measures(&tree, 20, &mut rng) {
            assert!(m.is_equivalent());
        }
    }
}

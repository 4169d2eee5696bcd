#![allow(dead_code)]

use std::collections::VecDeque;

use cbl_core::graph::TieredGraph;
use cbl_core::simgen::{random_admg, AdmgSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// d-separation by the ancestral moral graph: keep the ancestors of
/// `a ∪ b ∪ c`, marry co-parents, drop directions, delete `c`, and ask
/// whether `a` still reaches `b`.
pub fn moral_separated(n: usize, edges: &[(usize, usize)], a: &[usize], b: &[usize], c: &[usize]) -> bool {
    let mut parents = vec![Vec::new(); n];
    for &(u, v) in edges {
        parents[v].push(u);
    }
    let mut keep = vec![false; n];
    let mut stack: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    while let Some(v) = stack.pop() {
        if !keep[v] {
            keep[v] = true;
            stack.extend(parents[v].iter().copied());
        }
    }
    let mut adj = vec![vec![false; n]; n];
    for v in (0..n).filter(|&v| keep[v]) {
        for &p in &parents[v] {
            adj[p][v] = true;
            adj[v][p] = true;
        }
        for (k, &p) in parents[v].iter().enumerate() {
            for &q in &parents[v][k + 1..] {
                adj[p][q] = true;
                adj[q][p] = true;
            }
        }
    }
    let mut blocked = vec![false; n];
    for &v in c {
        blocked[v] = true;
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = a.iter().copied().collect();
    for &v in a {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        if b.contains(&v) {
            return false;
        }
        for w in 0..n {
            if adj[v][w] && keep[w] && !blocked[w] && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    true
}

/// Random two-tier ADMG with `d_z ≤ 8`, `d_x ≤ 5` and some hidden
/// confounding.
pub fn small_admg(seed: u64) -> TieredGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = AdmgSpec {
        d_z: rng.random_range(0..=8),
        d_x: rng.random_range(2..=5),
        p_zz: rng.random_range(0.0..0.5),
        p_zx: rng.random_range(0.1..0.7),
        p_xx: rng.random_range(0.1..0.7),
        p_bidirected: rng.random_range(0.0..0.15),
    };
    random_admg(&mut rng, &spec)
}

/// Acyclic, directed-only two-tier graph (no hidden confounding).
pub fn small_dag(seed: u64) -> TieredGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = AdmgSpec {
        d_z: rng.random_range(1..=6),
        d_x: rng.random_range(2..=5),
        p_zz: 0.3,
        p_zx: rng.random_range(0.2..0.7),
        p_xx: rng.random_range(0.2..0.7),
        p_bidirected: 0.0,
    };
    random_admg(&mut rng, &spec)
}

/// Whether `set` is a valid backdoor adjustment set for the effect of
/// `from` on `to`: no descendant of `from`, and `from ⫫ to | set` once
/// `from`'s outgoing edges are cut.
pub fn blocks_backdoor(g: &TieredGraph, from: usize, to: usize, set: &[usize]) -> bool {
    if set.iter().any(|&v| v == from || g.is_ancestor(from, v)) {
        return false;
    }
    g.without_outgoing(from).independent(from, to, set)
}

/// Tail mass at grid index `t` and mean of the pmf `p_i ∝ h_i^(1/r)` on
/// `{a..=e}` (grid `{0, 1/n, …, 1}`), with `h` piecewise linear through
/// `(a, u)`, `(m, 1)`, `(e, w)`. `None` when `h` is not convex.
fn two_piece(n: usize, r: f64, t: usize, (a, m, e): (usize, usize, usize), u: f64, w: f64) -> Option<(f64, f64)> {
    let left = if m > a { Some((1.0 - u) / (m - a) as f64) } else { None };
    let right = if e > m { Some((w - 1.0) / (e - m) as f64) } else { None };
    if let (Some(l), Some(rt)) = (left, right) {
        if l > rt {
            return None;
        }
    }
    let (mut z, mut mean, mut tail) = (0.0, 0.0, 0.0);
    for i in a..=e {
        let h = if i <= m {
            1.0 - left.unwrap_or(0.0) * (m - i) as f64
        } else {
            1.0 + right.unwrap_or(0.0) * (i - m) as f64
        };
        let p = h.powf(1.0 / r);
        z += p;
        mean += p * i as f64 / n as f64;
        if i >= t {
            tail += p;
        }
    }
    Some((tail / z, mean / z))
}

/// Brute-force `D(θ, τ, n, r)`: the largest `P(X ≥ τ)` over pmfs on
/// `{0, 1/n, …, 1}` whose `r`-th power is a two-piece convex function on
/// any contiguous support, subject to `E[X] ≤ θ`. Every support and hinge
/// is enumerated and the left end height scanned on a fine log grid. For a
/// fixed left height, raising the right end height lowers both the mean and
/// the tail, so the best right height makes the mean constraint bind and
/// is found by bisection.
pub fn enumerated_tail_bound(theta: f64, tau: f64, n: usize, r: f64) -> f64 {
    if tau <= theta {
        return 1.0;
    }
    let t = (tau * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if t == 0 {
        return 1.0;
    }
    if t > n {
        return 0.0;
    }
    let feasible_tail = |shape, lu: f64, lw: f64| match two_piece(n, r, t, shape, lu.exp(), lw.exp()) {
        Some((tail, mean)) if mean <= theta + 1e-12 => Some(tail),
        _ => None,
    };
    let mean_at = |shape, lu: f64, lw: f64| two_piece(n, r, t, shape, lu.exp(), lw.exp()).map(|(_, m)| m);
    let best_for = |shape: (usize, usize, usize), lu: f64| -> Option<f64> {
        let (_, m, e) = shape;
        if e == m {
            return feasible_tail(shape, lu, 0.0);
        }
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        match mean_at(shape, lu, lo) {
            Some(v) if v <= theta => return feasible_tail(shape, lu, lo),
            _ => {}
        }
        if mean_at(shape, lu, hi).is_none_or(|v| v > theta) {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            // non-convex heights sit below the hinge slope; treat as too low
            if mean_at(shape, lu, mid).is_none_or(|v| v > theta) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        feasible_tail(shape, lu, hi)
    };
    let mut overall: f64 = 0.0;
    for a in 0..=n {
        for e in a.max(t)..=n {
            for m in a..=e {
                let shape = (a, m, e);
                if m == a {
                    overall = overall.max(best_for(shape, 0.0).unwrap_or(0.0));
                    continue;
                }
                let steps = 240;
                let grid = |k: usize| -12.0 + 24.0 * k as f64 / steps as f64;
                let mut best = (0.0, None);
                for k in 0..=steps {
                    if let Some(v) = best_for(shape, grid(k)) {
                        if v > best.0 {
                            best = (v, Some(k));
                        }
                    }
                }
                let Some(k) = best.1 else { continue };
                // golden-section polish between the neighbouring grid points
                let (mut lo, mut hi) = (grid(k.saturating_sub(1)), grid((k + 1).min(steps)));
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..60 {
                    let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                    let f1 = best_for(shape, x1).unwrap_or(0.0);
                    let f2 = best_for(shape, x2).unwrap_or(0.0);
                    best.0 = f64::max(best.0, f1.max(f2));
                    if f1 < f2 {
                        lo = x1;
                    } else {
                        hi = x2;
                    }
                }
                overall = overall.max(best.0);
            }
        }
    }
    overall
}

//! Gauss–Legendre rules and the composite/adaptive integrators built on them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the three-term Legendre recurrence.
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Shared, cached rule of order `n`.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
        .clone()
}

/// Composite rule: the same `order`-point rule on every panel between consecutive breakpoints.
///
/// Breakpoints outside `[a, b]` are ignored; duplicates collapse.
pub fn composite<F: FnMut(f64) -> f64>(
    order: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    mut f: F,
) -> f64 {
    let rule = gauss_legendre(order);
    panel_edges(a, b, breakpoints)
        .windows(2)
        .map(|e| rule.integrate(e[0], e[1], &mut f))
        .sum()
}

/// Sorted panel edges `a = e_0 < ... < e_m = b`, including interior breakpoints.
pub fn panel_edges(a: f64, b: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for x in inner {
        if x - edges[edges.len() - 1] > 1e-14 * (b - a) {
            edges.push(x);
        }
    }
    if b - edges[edges.len() - 1] <= 1e-14 * (b - a) && edges.len() > 1 {
        edges.pop();
    }
    edges.push(b);
    edges
}

/// Panel edges on `[a, b]` refined geometrically toward one end.
///
/// `levels` panels shrink by `ratio` each step toward `toward_b ? b : a`.
pub fn graded_edges(a: f64, b: f64, toward_b: bool, ratio: f64, levels: usize) -> Vec<f64> {
    let len = b - a;
    let mut offsets: Vec<f64> = (1..=levels).map(|k| len * ratio.powi(k as i32)).collect();
    offsets.reverse();
    let mut edges = vec![a];
    if toward_b {
        let mut pts: Vec<f64> = offsets.iter().map(|d| b - d).collect();
        pts.reverse();
        edges.extend(pts);
    } else {
        edges.extend(offsets.iter().map(|d| a + d));
    }
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * len.abs());
    edges
}

/// Nodes and weights of a composite rule over explicit panel edges.
pub fn composite_rule(order: usize, edges: &[f64]) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    edges
        .windows(2)
        .flat_map(|e| rule.mapped(e[0], e[1]).collect::<Vec<_>>())
        .collect()
}

/// Adaptive bisection driven by the difference between one `order`-point panel
/// and its two halves. The absolute tolerance is distributed by panel length.
pub fn adaptive<F: FnMut(f64) -> f64>(
    order: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
    mut f: F,
) -> f64 {
    let rule = gauss_legendre(order);
    let total = (b - a).abs().max(f64::MIN_POSITIVE);
    let edges = panel_edges(a, b, breakpoints);
    let wholes: Vec<f64> = edges
        .windows(2)
        .map(|e| rule.integrate(e[0], e[1], &mut f))
        .collect();
    // rounding noise in the integrand cannot be resolved below this level
    let noise = 64.0 * f64::EPSILON * wholes.iter().map(|w| w.abs()).sum::<f64>();
    let tol = tol.max(noise);
    let mut sum = 0.0;
    for (e, whole) in edges.windows(2).zip(wholes) {
        sum += adaptive_panel(&rule, e[0], e[1], whole, tol, total, 0, &mut f);
    }
    sum
}

#[allow(clippy::too_many_arguments)]
fn adaptive_panel<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    total: f64,
    depth: usize,
    f: &mut F,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, &mut *f);
    let right = rule.integrate(mid, b, &mut *f);
    let refined = left + right;
    let budget = tol * (b - a) / total;
    if (refined - whole).abs() <= budget.max(4.0 * f64::EPSILON * refined.abs()) || depth >= 40 {
        return refined;
    }
    adaptive_panel(rule, a, mid, left, tol, total, depth + 1, f)
        + adaptive_panel(rule, mid, b, right, tol, total, depth + 1, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 201] {
            let rule = GaussLegendre::new(n);
            let s: f64 = rule.weights().iter().sum();
            assert_relative_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        let rule = GaussLegendre::new(6);
        for k in 0..=11 {
            let exact = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            let got = rule.integrate(-1.0, 1.0, |x| x.powi(k));
            assert!((got - exact).abs() < 1e-14, "degree {k}: {got} vs {exact}");
        }
    }

    #[test]
    fn composite_handles_kinks() {
        let got = composite(8, -1.0, 2.0, &[0.5], |x: f64| (x - 0.5).abs());
        assert_relative_eq!(got, 0.5 * 1.5 * 1.5 + 0.5 * 1.5 * 1.5, epsilon = 1e-13);
    }

    #[test]
    fn adaptive_resolves_a_sharp_exponential() {
        let tau = 200.0;
        let got = adaptive(10, 0.0, 1.0, &[], 1e-14, |t: f64| (-tau * t).exp());
        let exact = -(-tau).exp_m1() / tau;
        assert_relative_eq!(got, exact, max_relative = 1e-11);
    }

    #[test]
    fn graded_edges_are_sorted_and_span() {
        let e = graded_edges(0.0, 1.0, true, 0.5, 6);
        assert_eq!(e[0], 0.0);
        assert_eq!(*e.last().unwrap(), 1.0);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert!((e[e.len() - 2] - (1.0 - 0.5f64.powi(6))).abs() < 1e-15);
    }
}

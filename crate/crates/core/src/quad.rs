//! Gauss–Legendre rules and composite integration helpers.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

/// Nodes and weights on [-1, 1], ascending.
#[derive(Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn legendre(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let deg = NonZeroUsize::new(n.max(1)).unwrap_or(NonZeroUsize::MIN);
            let mut pts: Vec<(f64, f64)> = GaussLegendre::new(deg)
                .iter()
                .map(|(x, w)| (*x, *w))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(Rule {
                nodes: pts.iter().map(|p| p.0).collect(),
                weights: pts.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

/// Maps the rule onto [a, b] and returns (nodes, weights).
pub fn mapped(rule: &Rule, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(move |(x, w)| (mid + half * x, half * w))
}

/// Composite rule over consecutive edges.
pub fn integrate<F: FnMut(f64) -> f64>(edges: &[f64], n: usize, mut f: F) -> f64 {
    let rule = legendre(n);
    edges
        .windows(2)
        .map(|e| mapped(&rule, e[0], e[1]).map(|(x, w)| w * f(x)).sum::<f64>())
        .sum()
}

//! Scalability workload: DTDs with `n` mutually recursive types and queries
//! of `m` consecutive descendant steps.

use std::time::Instant;

use serde::Serialize;

use crate::chains::analyze_query;
use crate::lang::{parse_query, Query};
use crate::schema::{ContentModel, Dtd, Tag};

/// `a1..an`, each `ai <- (a1|...|an)*`, rooted at `a1`.
pub fn dtd_family(n: usize) -> Dtd {
    let n = n.max(1);
    let names: Vec<String> = (1..=n).map(|i| format!("a{i}")).collect();
    let model = ContentModel::star(ContentModel::alt(names.iter().map(|s| ContentModel::atom(s)).collect()));
    let decls = names.iter().map(|s| (Tag::new(s), model.clone())).collect();
    Dtd::new(decls, None).expect("family dtd")
}

/// `descendant::node()` repeated `m` times from the root.
pub fn expr_text(m: usize) -> String {
    "/descendant::node()".repeat(m.max(1))
}

pub fn expr_family(m: usize) -> Query {
    parse_query(&expr_text(m)).expect("family query")
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchCell {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub millis: f64,
    pub nodes: usize,
    pub edges: usize,
    pub rounds: usize,
}

/// Times query inference for one `(n, m, k)`.
pub fn run_cell(n: usize, m: usize, k: usize) -> BenchCell {
    let d = dtd_family(n);
    let q = expr_family(m);
    let start = Instant::now();
    let qa = analyze_query(&d, k, &q);
    let millis = start.elapsed().as_secs_f64() * 1e3;
    let st = qa.cdag.stats();
    BenchCell { n, m, k, millis, nodes: st.nodes, edges: st.edges, rounds: qa.rounds }
}

/// `n ∈ {1,3,5,10}`, `m ∈ {1,5,10}`, `k ∈ {m, m+5, m+10}`.
pub fn standard_grid() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for n in [1, 3, 5, 10] {
        for m in [1, 5, 10] {
            for k in [m, m + 5, m + 10] {
                out.push((n, m, k));
            }
        }
    }
    out
}

/// Cells are timed one after another so that timings do not interfere.
pub fn run_grid(cells: &[(usize, usize, usize)]) -> Vec<BenchCell> {
    cells.iter().map(|&(n, m, k)| run_cell(n, m, k)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Plain-text table of a grid run.
pub fn render(cells: &[BenchCell]) -> String {
    let mut s =
        format!("{:>3} {:>3} {:>3} {:>12} {:>7} {:>8} {:>6}\n", "n", "m", "k", "ms", "nodes", "edges", "rounds");
    for c in cells {
        s.push_str(&format!(
            "{:>3} {:>3} {:>3} {:>12.3} {:>7} {:>8} {:>6}\n",
            c.n, c.m, c.k, c.millis, c.nodes, c.edges, c.rounds
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_shapes() {
        let d = dtd_family(3);
        assert_eq!(d.size(), 3);
        assert!(d.reaches(&crate::schema::Label::tag("a3"), &crate::schema::Label::tag("a1")));
        assert_eq!(expr_text(2), "/descendant::node()/descendant::node()");
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x.powi(3))).collect();
        assert!((loglog_slope(&pts) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn small_cell_runs() {
        assert_eq!(run_cell(1, 1, 1).nodes, 1);
        assert_eq!(run_cell(1, 1, 2).nodes, 2);
    }
}

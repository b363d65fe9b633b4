//! Graphviz export of super states.
//!
//! Each super state becomes one `digraph`: a node per symbol, an edge
//! `a -> b` labeled with `θ[a][b]` for every transition of at least
//! `min_prob`, and an `entry` point with edges weighted by `θ[B][·]`. Exit
//! edges are left out; a node's exit probability is one minus the sum of its
//! outgoing edges.

use std::fmt::Write;

use immc_core::{Alphabet, ModelParams};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn state_graph(params: &ModelParams, alphabet: &Alphabet, state: usize, min_prob: f64) -> String {
    let b = params.boundary();
    let sym = |c: usize| quote(alphabet.decode(c as u32).unwrap_or("?"));
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(&format!("state {state}"))).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  entry [shape=point];").unwrap();
    for c in 0..b {
        writeln!(out, "  {};", sym(c)).unwrap();
    }
    for c in 0..b {
        let p = params.theta(state, b, c);
        if p >= min_prob {
            writeln!(out, "  entry -> {} [label=\"{p:.2}\", style=dashed];", sym(c)).unwrap();
        }
    }
    for from in 0..b {
        for to in 0..b {
            let p = params.theta(state, from, to);
            if p >= min_prob {
                writeln!(out, "  {} -> {} [label=\"{p:.2}\"];", sym(from), sym(to)).unwrap();
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Number of transition edges `state_graph` draws between symbols.
pub fn edge_count(params: &ModelParams, state: usize, min_prob: f64) -> usize {
    let b = params.boundary();
    (0..b).flat_map(|f| (0..b).map(move |t| (f, t))).filter(|&(f, t)| params.theta(state, f, t) >= min_prob).count()
}

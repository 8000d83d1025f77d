//! Size and concentration summaries of a mixture state.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::lattice::FvddpState;

/// Mass levels reported by [`diagnose`].
pub const MASS_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub cardinality: u32,
    pub ln_weight: f64,
    pub active_types: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub components: usize,
    /// `(level, nodes)`: fewest top-weight nodes holding `level` of the mass.
    pub mass_nodes: Vec<(f64, usize)>,
    /// `|m| -> number of nodes`.
    pub cardinality_histogram: BTreeMap<u32, usize>,
    /// One row per node, heaviest first.
    pub rows: Vec<PlotRow>,
}

/// Fewest heaviest weights whose sum reaches `level` of the total.
pub fn nodes_for_mass(sorted_desc: &[f64], level: f64) -> usize {
    let total: f64 = sorted_desc.iter().sum();
    let mut acc = 0.0;
    for (i, w) in sorted_desc.iter().enumerate() {
        acc += w;
        if acc >= level * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    sorted_desc.len()
}

pub fn diagnose(state: &FvddpState) -> DiagnosticReport {
    let mut rows: Vec<(f64, PlotRow)> = state
        .nodes()
        .iter()
        .map(|(m, &w)| (w, PlotRow { cardinality: m.cardinality(), ln_weight: w.ln(), active_types: m.active_types() }))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let weights: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut histogram = BTreeMap::new();
    for m in state.nodes().keys() {
        *histogram.entry(m.cardinality()).or_insert(0) += 1;
    }
    DiagnosticReport {
        components: state.len(),
        mass_nodes: MASS_LEVELS.iter().map(|&l| (l, nodes_for_mass(&weights, l))).collect(),
        cardinality_histogram: histogram,
        rows: rows.into_iter().map(|r| r.1).collect(),
    }
}

impl DiagnosticReport {
    /// Tab-separated report: summary lines, the histogram, then the plot table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "components\t{}", self.components).unwrap();
        for (level, n) in &self.mass_nodes {
            writeln!(out, "mass_{:.0}\t{n}", level * 100.0).unwrap();
        }
        writeln!(out, "\ncardinality\tnodes").unwrap();
        for (c, n) in &self.cardinality_histogram {
            writeln!(out, "{c}\t{n}").unwrap();
        }
        writeln!(out, "\ncardinality\tlog_weight\tactive_types").unwrap();
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{}", r.cardinality, r.ln_weight, r.active_types).unwrap();
        }
        out
    }
}

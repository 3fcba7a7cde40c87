//! Compares the computed Micro-Net table against the published reference
//! rows, flagging every row whose parameter count or map disagrees.

use std::fmt::Write as _;

use super::layer::LayerGraph;
use super::summary::{summarize, SummaryRow};

/// Published Micro-Net rows at a 500×500 input: `(layer, map, param)`.
pub const MICRO_REFERENCE: [(&str, &str, usize); 17] = [
    ("input", "500x500x3", 0),
    ("fm 1", "500x500x64", 5158),
    ("fm 2~4", "500x500x64", 6144),
    ("mp 1", "250x250x64", 0),
    ("fm 5", "250x250x128", 22528),
    ("fm 6~8", "250x250x128", 24576),
    ("mp 2", "125x125x128", 0),
    ("fm 9", "125x125x256", 90112),
    ("fm 10~12", "125x125x256", 98304),
    ("dfm 9~7", "125x125x256", 98304),
    ("dec 1", "250x250x128", 131072),
    ("add 1", "250x250x128", 0),
    ("dfm 6~4", "250x250x128", 24576),
    ("dec 2", "500x500x64", 32768),
    ("add 2", "500x500x64", 0),
    ("dfm 3~1", "500x500x64", 6144),
    ("conv", "500x500x2", 128),
];

/// Published totals in millions of parameters.
pub const PUBLISHED_TOTALS_M: [(&str, f64); 5] = [
    ("unet", 31.02),
    ("bm1", 5.36),
    ("bm2", 0.93),
    ("bm3", 0.93),
    ("micro", 1.06),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditLine {
    pub layer: String,
    pub computed_map: String,
    pub printed_map: String,
    pub computed: usize,
    pub printed: usize,
}

impl AuditLine {
    pub fn matches(&self) -> bool {
        self.computed == self.printed && self.computed_map == self.printed_map
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub lines: Vec<AuditLine>,
    /// Rows present on one side only.
    pub unmatched: Vec<String>,
    pub total: usize,
}

impl AuditReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &AuditLine> {
        self.lines.iter().filter(|l| !l.matches())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            let flag = if l.matches() { "ok" } else { "MISMATCH" };
            let _ = writeln!(
                out,
                "{:<10} {:>14} computed {:>7} printed {:>7}  {flag}",
                l.layer, l.computed_map, l.computed, l.printed
            );
        }
        for u in &self.unmatched {
            let _ = writeln!(out, "{u:<10} present on one side only  MISMATCH");
        }
        let _ = writeln!(out, "total params: {}", self.total);
        for l in self.mismatches() {
            let _ = writeln!(
                out,
                "note: {} closed form in·s + s·e1 + 9·s·e3 gives {}, reference prints {}",
                l.layer, l.computed, l.printed
            );
        }
        out
    }
}

/// Audits `graph` (expected to be Micro-Net) against [`MICRO_REFERENCE`].
pub fn audit_micro(graph: &LayerGraph) -> AuditReport {
    let rows = summarize(graph, 500, 500);
    let total = rows.iter().map(SummaryRow::total_params).sum();
    let mut lines = Vec::new();
    let mut unmatched = Vec::new();
    for (name, map, printed) in MICRO_REFERENCE {
        match rows.iter().find(|r| r.layer == name) {
            Some(r) => lines.push(AuditLine {
                layer: name.into(),
                computed_map: r.map_string(),
                printed_map: map.into(),
                computed: r.param,
                printed,
            }),
            None => unmatched.push(name.to_string()),
        }
    }
    for r in &rows {
        if !MICRO_REFERENCE.iter().any(|(n, _, _)| *n == r.layer) {
            unmatched.push(r.layer.clone());
        }
    }
    AuditReport { lines, unmatched, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_architecture, ArchitectureSpec};

    #[test]
    fn only_first_module_disagrees() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        let report = audit_micro(&g);
        assert!(report.unmatched.is_empty());
        let bad: Vec<_> = report.mismatches().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!((bad[0].layer.as_str(), bad[0].computed, bad[0].printed), ("fm 1", 5168, 5158));
        assert_eq!(report.total, 1_055_920);
        assert!(report.render().contains("fm 1"));
    }
}

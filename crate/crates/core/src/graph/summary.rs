//! Architecture tables: one row per layer group, fire modules with identical
//! filter counts collapsed into ranges such as `fm 2~4`.

use std::fmt::Write as _;

use super::arch::SkipMode;
use super::layer::{LayerGraph, Node, Role};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryRow {
    pub layer: String,
    /// Output map `(height, width, channels)`.
    pub map: (usize, usize, usize),
    pub depth: Option<usize>,
    pub s1x1: Option<usize>,
    pub e1x1: Option<usize>,
    pub e3x3: Option<usize>,
    /// Parameters of one module in the group.
    pub param: usize,
    /// Number of modules the row stands for.
    pub repeat: usize,
}

impl SummaryRow {
    pub fn map_string(&self) -> String {
        let (h, w, c) = self.map;
        format!("{h}x{w}x{c}")
    }

    pub fn total_params(&self) -> usize {
        self.param * self.repeat
    }
}

/// Grouping key: consecutive modules merge when the key matches.
#[derive(Clone, Debug, PartialEq, Eq)]
enum GroupKey {
    Fire(Role, usize, usize, usize, usize),
    Conv(Role, usize, usize),
}

pub fn summarize(graph: &LayerGraph, height: usize, width: usize) -> Vec<SummaryRow> {
    let mut rows = vec![SummaryRow {
        layer: "input".into(),
        map: (height, width, graph.in_channels()),
        depth: None,
        s1x1: None,
        e1x1: None,
        e3x3: None,
        param: 0,
        repeat: 1,
    }];
    // (key, prefix, first number) of the open group, if any.
    let mut open: Option<(GroupKey, &'static str, usize)> = None;
    let (mut h, mut w, mut c) = (height, width, graph.in_channels());

    for node in graph.nodes() {
        match node {
            Node::Fire(f) => {
                c = f.spec.out_channels();
                let key = GroupKey::Fire(f.role, f.spec.in_channels, f.spec.s1x1, f.spec.e1x1, f.spec.e3x3);
                let prefix = match f.role {
                    Role::Encoder => "fm",
                    Role::Decoder => "dfm",
                    Role::Upsampler => "ufm",
                };
                let row = SummaryRow {
                    layer: String::new(),
                    map: (h, w, c),
                    depth: Some(2),
                    s1x1: Some(f.spec.s1x1),
                    e1x1: Some(f.spec.e1x1),
                    e3x3: Some(f.spec.e3x3),
                    param: f.spec.param_count(),
                    repeat: 1,
                };
                push_grouped(&mut rows, &mut open, key, prefix, f.number, row);
                continue;
            }
            Node::Conv(cn) => {
                c = cn.layer.kernel.n();
                let key = GroupKey::Conv(cn.role, cn.layer.kernel.c(), c);
                let prefix = match cn.role {
                    Role::Encoder => "conv",
                    Role::Decoder => "dconv",
                    Role::Upsampler => "uconv",
                };
                let row = SummaryRow {
                    depth: Some(1),
                    ..plain(String::new(), (h, w, c), None, cn.layer.param_count())
                };
                push_grouped(&mut rows, &mut open, key, prefix, cn.number, row);
                continue;
            }
            Node::Pool { number } => {
                h /= 2;
                w /= 2;
                rows.push(plain(format!("mp {number}"), (h, w, c), Some(0), 0));
            }
            Node::Deconv { number, out_channels, in_channels, .. } => {
                h *= 2;
                w *= 2;
                c = *out_channels;
                rows.push(plain(format!("dec {number}"), (h, w, c), Some(1), in_channels * out_channels * 4));
            }
            Node::Upsample { number } => {
                h *= 2;
                w *= 2;
                rows.push(plain(format!("up {number}"), (h, w, c), Some(0), 0));
            }
            Node::Save { .. } | Node::Softmax => continue,
            Node::Join { mode, number, slot } => {
                let name = match mode {
                    SkipMode::Add => format!("add {number}"),
                    SkipMode::Concat => {
                        c += graph
                            .skips()
                            .iter()
                            .find(|s| s.level == *slot)
                            .map_or(0, |s| s.encoder_channels);
                        format!("cat {number}")
                    }
                };
                rows.push(plain(name, (h, w, c), None, 0));
            }
            Node::Classifier { layer, .. } => {
                c = layer.kernel.n();
                rows.push(plain("conv".into(), (h, w, c), Some(1), layer.param_count()));
            }
        }
        open = None;
    }
    rows
}

fn plain(layer: String, map: (usize, usize, usize), depth: Option<usize>, param: usize) -> SummaryRow {
    SummaryRow {
        layer,
        map,
        depth,
        s1x1: None,
        e1x1: None,
        e3x3: None,
        param,
        repeat: 1,
    }
}

fn push_grouped(
    rows: &mut Vec<SummaryRow>,
    open: &mut Option<(GroupKey, &'static str, usize)>,
    key: GroupKey,
    prefix: &'static str,
    number: usize,
    row: SummaryRow,
) {
    if let Some((k, p, first)) = open {
        if *k == key {
            let last = rows.last_mut().expect("open group has a row");
            last.repeat += 1;
            last.map = row.map;
            last.layer = format!("{p} {first}~{number}");
            return;
        }
    }
    rows.push(SummaryRow {
        layer: format!("{prefix} {number}"),
        ..row
    });
    *open = Some((key, prefix, number));
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SUMMARY_CSV_HEADER: &str = "layer,map,depth,s1x1,e1x1,e3x3,param";

pub fn render_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.layer,
            r.map_string(),
            opt(r.depth),
            opt(r.s1x1),
            opt(r.e1x1),
            opt(r.e3x3),
            r.param
        );
    }
    out
}

pub fn render_text(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<10} {:>14} {:>5} {:>5} {:>5} {:>5} {:>9}\n",
        "layer", "map", "depth", "s1x1", "e1x1", "e3x3", "param"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>14} {:>5} {:>5} {:>5} {:>5} {:>9}",
            r.layer,
            r.map_string(),
            opt(r.depth),
            opt(r.s1x1),
            opt(r.e1x1),
            opt(r.e3x3),
            r.param
        );
    }
    let total: usize = rows.iter().map(SummaryRow::total_params).sum();
    let _ = writeln!(out, "total params: {total}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_architecture, ArchitectureSpec};

    #[test]
    fn micro_rows() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        let rows = summarize(&g, 500, 500);
        let names: Vec<&str> = rows.iter().map(|r| r.layer.as_str()).collect();
        assert_eq!(
            names,
            [
                "input", "fm 1", "fm 2~4", "mp 1", "fm 5", "fm 6~8", "mp 2", "fm 9", "fm 10~12", "dfm 9~7",
                "dec 1", "add 1", "dfm 6~4", "dec 2", "add 2", "dfm 3~1", "conv"
            ]
        );
        let fm9 = &rows[7];
        assert_eq!(fm9.map, (125, 125, 256));
        assert_eq!((fm9.s1x1, fm9.e1x1, fm9.e3x3, fm9.param), (Some(64), Some(128), Some(128), 90112));
        assert_eq!(rows[13].param, 32768);
        assert_eq!(rows[0].param, 0);
        let total: usize = rows.iter().map(SummaryRow::total_params).sum();
        assert_eq!(total, g.count_params());
    }

    #[test]
    fn csv_layout() {
        let g = build_architecture(&ArchitectureSpec::micro()).unwrap();
        let csv = render_csv(&summarize(&g, 500, 500));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(SUMMARY_CSV_HEADER));
        assert_eq!(lines.next(), Some("input,500x500x3,,,,,0"));
        assert_eq!(lines.next(), Some("fm 1,500x500x64,2,16,32,32,5168"));
        assert!(csv.contains("add 1,250x250x128,,,,,0\n"));
        assert_eq!(csv.lines().count(), 18);
    }

    #[test]
    fn totals_match_for_every_variant() {
        for v in crate::graph::Variant::NAMED {
            let g = build_architecture(&ArchitectureSpec::preset(v)).unwrap();
            let rows = summarize(&g, 512, 512);
            let total: usize = rows.iter().map(SummaryRow::total_params).sum();
            assert_eq!(total, g.count_params(), "{v}");
            assert_eq!(rows.last().unwrap().map, (512, 512, 2));
        }
    }
}

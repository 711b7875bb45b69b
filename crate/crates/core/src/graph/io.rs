//! Edge-list text format: a `#vertices N` header followed by one `u v` pair
//! per line. Blank lines and other `#` lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::GraphView;
use crate::error::{Error, Result};

pub fn dump(g: &GraphView) -> String {
    let mut out = format!("#vertices {}\n", g.num_vertices());
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{} {}", u.0, v.0);
    }
    out
}

pub fn parse_edge_list(text: &str) -> Result<GraphView> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#vertices") {
            let count = rest.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad vertex count `{}`", rest.trim()),
            })?;
            n = Some(count);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = |name: &str| -> Result<u32> {
            it.next()
                .ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing {name}") })?
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("bad {name}") })
        };
        let u = field("u")?;
        let v = field("v")?;
        edges.push((u, v));
    }
    let n = n.ok_or(Error::Parse { line: 1, msg: "missing `#vertices N` header".into() })?;
    GraphView::build_finite_with_vertices(n, &edges)
}

pub fn load(path: &Path) -> Result<GraphView> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = GraphView::build_finite(&[(0, 1), (1, 2), (1, 3)]).unwrap();
        let text = dump(&g);
        assert!(text.starts_with("#vertices 4\n"));
        let h = parse_edge_list(&text).unwrap();
        assert_eq!(h.edges(), g.edges());
        assert_eq!(h.degrees(), g.degrees());
    }

    #[test]
    fn missing_header_is_rejected() {
        assert!(parse_edge_list("0 1\n").is_err());
        assert!(parse_edge_list("#vertices 2\n0 x\n").is_err());
    }
}

//! MovingAI grid maps: parsing, scaling and 8-neighborhood graph construction.

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{Coord, GraphError, VertexId, WeightedGraph};

/// Cost of an orthogonal grid move.
pub const ORTHOGONAL_COST: f64 = 1.0;
/// Cost of a diagonal grid move.
pub const DIAGONAL_COST: f64 = 1.4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
    #[error("empty map")]
    EmptyMap,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn parse_err(line: usize, msg: impl Into<String>) -> MapError {
    MapError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    passable: Vec<bool>,
}

impl GridMap {
    /// Row-major grid; panics if `passable.len() != width * height`.
    pub fn new(width: usize, height: usize, passable: Vec<bool>) -> Self {
        assert_eq!(passable.len(), width * height, "grid size mismatch");
        GridMap {
            width,
            height,
            passable,
        }
    }

    pub fn open(width: usize, height: usize) -> Self {
        GridMap::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_passable(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.passable[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, passable: bool) {
        self.passable[row * self.width + col] = passable;
    }

    pub fn passable_count(&self) -> usize {
        self.passable.iter().filter(|&&p| p).count()
    }

    /// Serializes back into the MovingAI text format (`.` passable, `@` blocked).
    pub fn to_movingai(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "type octile");
        let _ = writeln!(out, "height {}", self.height);
        let _ = writeln!(out, "width {}", self.width);
        out.push_str("map\n");
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.is_passable(col, row) { '.' } else { '@' });
            }
            out.push('\n');
        }
        out
    }
}

fn header_value(line: Option<(usize, &str)>, key: &str) -> Result<String, MapError> {
    let (no, text) = line.ok_or_else(|| parse_err(0, format!("missing '{key}' header")))?;
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
        _ => Err(parse_err(no, format!("expected '{key} <value>', found '{text}'"))),
    }
}

/// Parses a MovingAI `.map` document.
///
/// `.` and `G` are passable; `@`, `T`, `O` and `W` are blocked.
pub fn parse_movingai(text: &str) -> Result<GridMap, MapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    header_value(lines.next(), "type")?;
    let mut dims = [0usize; 2];
    for key in ["height", "width"] {
        let line = lines.next();
        let no = line.map_or(0, |l| l.0);
        let raw = header_value(line, key)?;
        let value: usize = raw
            .parse()
            .map_err(|_| parse_err(no, format!("invalid {key} '{raw}'")))?;
        if value == 0 {
            return Err(parse_err(no, format!("{key} must be positive")));
        }
        dims[usize::from(key == "width")] = value;
    }
    let [height, width] = dims;
    match lines.next() {
        Some((_, "map")) => {}
        Some((no, other)) => return Err(parse_err(no, format!("expected 'map', found '{other}'"))),
        None => return Err(parse_err(0, "missing 'map' line")),
    }
    let mut passable = Vec::with_capacity(width * height);
    let mut rows = 0;
    let mut last_line = 4;
    for (no, row) in lines {
        last_line = no;
        if row.is_empty() && rows >= height {
            continue;
        }
        if rows == height {
            return Err(parse_err(no, "row count mismatch"));
        }
        if row.chars().count() != width {
            return Err(parse_err(
                no,
                format!("row length mismatch: expected {width}, found {}", row.chars().count()),
            ));
        }
        for ch in row.chars() {
            passable.push(match ch {
                '.' | 'G' => true,
                '@' | 'T' | 'O' | 'W' => false,
                other => return Err(parse_err(no, format!("unknown cell character '{other}'"))),
            });
        }
        rows += 1;
    }
    if rows != height {
        return Err(parse_err(last_line, "row count mismatch"));
    }
    Ok(GridMap::new(width, height, passable))
}

/// Nearest-neighbor downsampling. Output cell `(i, j)` samples the source cell
/// containing the output cell's center.
pub fn scale_map(grid: &GridMap, factor: f64) -> Result<GridMap, MapError> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(MapError::BadScale(factor));
    }
    let w = ((grid.width as f64 * factor).ceil() as usize).max(1);
    let h = ((grid.height as f64 * factor).ceil() as usize).max(1);
    let sample = |i: usize, limit: usize| (((i as f64 + 0.5) / factor).floor() as usize).min(limit - 1);
    let mut passable = Vec::with_capacity(w * h);
    for row in 0..h {
        let sr = sample(row, grid.height);
        for col in 0..w {
            passable.push(grid.is_passable(sample(col, grid.width), sr));
        }
    }
    Ok(GridMap::new(w, h, passable))
}

/// Bidirectional mapping between grid cells and graph vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellIndex {
    width: usize,
    height: usize,
    cell_to_vertex: Vec<Option<VertexId>>,
    vertex_to_cell: Vec<(usize, usize)>,
}

impl CellIndex {
    pub fn vertex(&self, col: usize, row: usize) -> Option<VertexId> {
        if col >= self.width || row >= self.height {
            return None;
        }
        self.cell_to_vertex[row * self.width + col]
    }

    /// `(col, row)` of a vertex.
    pub fn cell(&self, v: VertexId) -> (usize, usize) {
        self.vertex_to_cell[v.index()]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Builds the 8-neighborhood graph. Vertices are numbered in row-major order of
/// passable cells, `Coord = (col, row)`. Diagonal moves require both flanking
/// orthogonal cells to be passable.
pub fn build_graph(grid: &GridMap) -> Result<(WeightedGraph, CellIndex), MapError> {
    let (w, h) = (grid.width, grid.height);
    let mut cell_to_vertex = vec![None; w * h];
    let mut vertex_to_cell = Vec::new();
    let mut coords = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if grid.is_passable(col, row) {
                cell_to_vertex[row * w + col] = Some(VertexId::from(coords.len()));
                vertex_to_cell.push((col, row));
                coords.push(Coord::new(col as f64, row as f64));
            }
        }
    }
    if coords.is_empty() {
        return Err(MapError::EmptyMap);
    }
    let free = |c: isize, r: isize| c >= 0 && r >= 0 && grid.is_passable(c as usize, r as usize);
    let mut edges = Vec::new();
    for (idx, &(col, row)) in vertex_to_cell.iter().enumerate() {
        let (c, r) = (col as isize, row as isize);
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                if (dc, dr) == (0, 0) || !free(c + dc, r + dr) {
                    continue;
                }
                let weight = if dc != 0 && dr != 0 {
                    if !free(c + dc, r) || !free(c, r + dr) {
                        continue;
                    }
                    DIAGONAL_COST
                } else {
                    ORTHOGONAL_COST
                };
                let target = cell_to_vertex[(r + dr) as usize * w + (c + dc) as usize]
                    .expect("passable cell has a vertex");
                edges.push((VertexId::from(idx), target, weight));
            }
        }
    }
    let graph = WeightedGraph::new(coords, edges)?;
    Ok((
        graph,
        CellIndex {
            width: w,
            height: h,
            cell_to_vertex,
            vertex_to_cell,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(rows: &[&str]) -> String {
        format!(
            "type octile\nheight {}\nwidth {}\nmap\n{}\n",
            rows.len(),
            rows[0].len(),
            rows.join("\n")
        )
    }

    #[test]
    fn parses_small_map() {
        let g = parse_movingai(&doc(&[".@", ".."])).unwrap();
        assert!(g.is_passable(0, 0));
        assert!(!g.is_passable(1, 0));
        assert!(g.is_passable(0, 1));
        assert!(g.is_passable(1, 1));
    }

    #[test]
    fn cell_alphabet() {
        let g = parse_movingai(&doc(&[".G@TOW"])).unwrap();
        let row: Vec<bool> = (0..6).map(|c| g.is_passable(c, 0)).collect();
        assert_eq!(row, vec![true, true, false, false, false, false]);
    }

    #[test]
    fn too_many_rows() {
        let text = "type octile\nheight 2\nwidth 2\nmap\n..\n..\n..\n";
        let err = parse_movingai(text).unwrap_err();
        assert!(err.to_string().contains("row count mismatch"), "{err}");
        assert!(matches!(err, MapError::Parse { line: 7, .. }));
    }

    #[test]
    fn too_few_rows() {
        let err = parse_movingai("type octile\nheight 3\nwidth 2\nmap\n..\n..\n").unwrap_err();
        assert!(err.to_string().contains("row count mismatch"));
    }

    #[test]
    fn bad_character_names_line() {
        let err = parse_movingai(&doc(&["..", ".x"])).unwrap_err();
        assert_eq!(err, parse_err(6, "unknown cell character 'x'"));
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(
            parse_movingai("type octile\nheigth 2\nwidth 2\nmap\n..\n..\n"),
            Err(MapError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_movingai("type octile\nheight two\nwidth 2\nmap\n"),
            Err(MapError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn scale_identity_and_half() {
        let g = parse_movingai(&doc(&[".@..", "....", "..@.", "...."])).unwrap();
        assert_eq!(scale_map(&g, 1.0).unwrap(), g);
        let open = GridMap::open(4, 4);
        assert_eq!(scale_map(&open, 0.5).unwrap(), GridMap::open(2, 2));
        assert!(matches!(scale_map(&g, 0.0), Err(MapError::BadScale(_))));
        assert!(matches!(scale_map(&g, -1.0), Err(MapError::BadScale(_))));
    }

    #[test]
    fn scale_checkerboard_samples_nearest_cell() {
        let mut board = GridMap::open(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                board.set(c, r, (r + c) % 2 == 0);
            }
        }
        let s = scale_map(&board, 0.5).unwrap();
        assert_eq!((s.width(), s.height()), (4, 4));
        // center of output cell i is at source coordinate 2i + 1
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(s.is_passable(c, r), board.is_passable(2 * c + 1, 2 * r + 1));
            }
        }
    }

    #[test]
    fn center_of_open_grid_has_eight_edges() {
        let (g, idx) = build_graph(&GridMap::open(3, 3)).unwrap();
        let center = idx.vertex(1, 1).unwrap();
        let edges = g.out_edges(center);
        assert_eq!(edges.len(), 8);
        assert_eq!(edges.iter().filter(|e| e.weight == 1.0).count(), 4);
        assert_eq!(edges.iter().filter(|e| e.weight == 1.4).count(), 4);
    }

    #[test]
    fn no_corner_cutting() {
        let g = parse_movingai(&doc(&[".@", ".."])).unwrap();
        let (graph, idx) = build_graph(&g).unwrap();
        let a = idx.vertex(0, 0).unwrap();
        let b = idx.vertex(1, 1).unwrap();
        assert_eq!(graph.edge_weight(a, b), None);
        assert_eq!(graph.vertex_count(), 3);
    }

    #[test]
    fn empty_map_is_an_error() {
        let g = GridMap::new(2, 1, vec![false, false]);
        assert_eq!(build_graph(&g).unwrap_err(), MapError::EmptyMap);
    }

    #[test]
    fn open_rectangle_is_strongly_connected() {
        let (g, _) = build_graph(&GridMap::open(7, 5)).unwrap();
        let map = crate::graph::shortest_paths(&g, VertexId(0)).unwrap();
        assert!(map.cost.iter().all(Option::is_some));
        let rev = crate::graph::reverse_graph(&g);
        let back = crate::graph::shortest_paths(&rev, VertexId(0)).unwrap();
        assert!(back.cost.iter().all(Option::is_some));
    }

    fn random_grid(seed: u64, w: usize, h: usize) -> GridMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..w * h).map(|_| rng.gen_bool(0.7)).collect();
        GridMap::new(w, h, cells)
    }

    #[test]
    fn random_map_edges_symmetric_with_grid_weights() {
        for seed in 0..5 {
            let grid = random_grid(seed, 10, 10);
            let (g, idx) = build_graph(&grid).unwrap();
            assert_eq!(g.vertex_count(), grid.passable_count());
            let mut fwd: Vec<_> = g.edges().map(|(u, v, w)| (u, v, w.to_bits())).collect();
            let mut bwd: Vec<_> = g.edges().map(|(u, v, w)| (v, u, w.to_bits())).collect();
            fwd.sort();
            bwd.sort();
            assert_eq!(fwd, bwd);
            for (u, v, w) in g.edges() {
                let ((uc, ur), (vc, vr)) = (idx.cell(u), idx.cell(v));
                let (dc, dr) = (uc.abs_diff(vc), ur.abs_diff(vr));
                assert_eq!(dc.max(dr), 1, "Chebyshev distance");
                let expected = if dc + dr == 2 { 1.4 } else { 1.0 };
                assert_eq!(w, expected);
            }
        }
    }

    proptest! {
        #[test]
        fn serialization_round_trip(seed in 0u64..1000, w in 1usize..12, h in 1usize..12) {
            let grid = random_grid(seed, w, h);
            prop_assert_eq!(parse_movingai(&grid.to_movingai()).unwrap(), grid);
        }
    }
}

//! The nine boundary configurations on `[-1, 1]^2` used by the segregation
//! study, plus JSON-defined custom traces.
//!
//! Portions of the boundary where a component is not listed carry the value 0.
//! Angles are full-plane (`atan2`), in `(-pi, pi]`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoundarySpec, Edge, Grid, TraceFn};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown boundary condition id {0} (expected 1..=9)")]
    UnknownId(u32),
    #[error("custom boundary spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("custom boundary spec must list exactly 3 components, got {0}")]
    ComponentCount(usize),
}

pub const CATALOG_IDS: std::ops::RangeInclusive<u32> = 1..=9;

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: u32,
    pub spec: BoundarySpec,
    pub description: &'static str,
}

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

fn edge_trace(f: impl Fn(Edge, f64, f64) -> f64 + Send + Sync + 'static) -> TraceFn {
    Arc::new(f)
}

fn horizontal(e: Edge) -> bool {
    matches!(e, Edge::Bottom | Edge::Top)
}

fn vertical(e: Edge) -> bool {
    matches!(e, Edge::Left | Edge::Right)
}

fn lobes(shift: f64) -> [TraceFn; 3] {
    std::array::from_fn(|k| {
        let centre = 2.0 * PI * (k as f64 + 1.0) / 3.0 + shift;
        edge_trace(move |_, x, y| pos((y.atan2(x) - centre).cos()))
    })
}

const DESCRIPTIONS: [&str; 9] = [
    "phi_i = max(0, cos(theta - 2 pi i / 3))",
    "phi_i = max(0, cos(theta - 2 pi i / 3 - pi / 4))",
    "phi_1 = 1 on y = -1; phi_2 = 1 on y = 1; phi_3 = 0.5 on x = +-1",
    "phi_1 = x+; phi_2 = (-x)+; phi_3 = 0.25",
    "phi_1 = 1 on y = +-1; phi_2 = 1 on x = +-1; phi_3 = 0.3",
    "phi_i = max(0, 1 - |z - c_i| / 2), c = (-1,-1), (1,1), (1,-1)",
    "phi_1 = sin(pi (x+1)/2), phi_2 = cos(pi (x+1)/2)+ on y = +-1; phi_3 = 0.3 on x = +-1",
    "phi_1 = 1 on y = -1, x < 0; phi_2 = 1 on y = -1, x > 0; phi_3 = 1 on y = 1",
    "phi_1 = 1 on y = -1 and x = -1; phi_2 = 1 on y = 1 and x = 1; phi_3 = 0.2",
];

/// Boundary condition `id` (1..=9).
pub fn get_bc(id: u32) -> Result<BoundarySpec, CatalogError> {
    let traces: [TraceFn; 3] = match id {
        1 => lobes(0.0),
        2 => lobes(PI / 4.0),
        3 => [
            edge_trace(|e, _, _| if e == Edge::Bottom { 1.0 } else { 0.0 }),
            edge_trace(|e, _, _| if e == Edge::Top { 1.0 } else { 0.0 }),
            edge_trace(|e, _, _| if vertical(e) { 0.5 } else { 0.0 }),
        ],
        4 => [
            edge_trace(|_, x, _| pos(x)),
            edge_trace(|_, x, _| pos(-x)),
            edge_trace(|_, _, _| 0.25),
        ],
        5 => [
            edge_trace(|e, _, _| if horizontal(e) { 1.0 } else { 0.0 }),
            edge_trace(|e, _, _| if vertical(e) { 1.0 } else { 0.0 }),
            edge_trace(|_, _, _| 0.3),
        ],
        6 => {
            let centres = [(-1.0, -1.0), (1.0, 1.0), (1.0, -1.0)];
            std::array::from_fn(|k| {
                let (cx, cy): (f64, f64) = centres[k];
                edge_trace(move |_, x, y| pos(1.0 - (x - cx).hypot(y - cy) / 2.0))
            })
        }
        7 => [
            edge_trace(|e, x, _| {
                if horizontal(e) {
                    (PI * (x + 1.0) / 2.0).sin().max(0.0)
                } else {
                    0.0
                }
            }),
            edge_trace(|e, x, _| {
                if horizontal(e) {
                    pos((PI * (x + 1.0) / 2.0).cos())
                } else {
                    0.0
                }
            }),
            edge_trace(|e, _, _| if vertical(e) { 0.3 } else { 0.0 }),
        ],
        8 => [
            edge_trace(|e, x, _| if e == Edge::Bottom && x < 0.0 { 1.0 } else { 0.0 }),
            edge_trace(|e, x, _| if e == Edge::Bottom && x > 0.0 { 1.0 } else { 0.0 }),
            edge_trace(|e, _, _| if e == Edge::Top { 1.0 } else { 0.0 }),
        ],
        9 => [
            edge_trace(|e, _, _| {
                if matches!(e, Edge::Bottom | Edge::Left) {
                    1.0
                } else {
                    0.0
                }
            }),
            edge_trace(|e, _, _| {
                if matches!(e, Edge::Top | Edge::Right) {
                    1.0
                } else {
                    0.0
                }
            }),
            edge_trace(|_, _, _| 0.2),
        ],
        other => return Err(CatalogError::UnknownId(other)),
    };
    Ok(BoundarySpec::new(format!("bc{id}"), traces))
}

pub fn entry(id: u32) -> Result<CatalogEntry, CatalogError> {
    Ok(CatalogEntry {
        id,
        spec: get_bc(id)?,
        description: DESCRIPTIONS[(id - 1) as usize],
    })
}

pub fn catalog() -> Vec<CatalogEntry> {
    CATALOG_IDS.map(|id| entry(id).expect("catalog ids are valid")).collect()
}

/// Nonnegativity and segregation of one spec sampled on a grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceCheck {
    pub label: String,
    pub max_product: f64,
    pub min_value: f64,
    pub valid: bool,
}

pub fn check_spec(spec: &BoundarySpec, grid: &Grid) -> TraceCheck {
    let traces = spec.sample_unchecked(grid);
    let n = traces[0].values().len();
    let mut max_product: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for k in 0..n {
        let vals = [
            traces[0].values()[k],
            traces[1].values()[k],
            traces[2].values()[k],
        ];
        max_product = max_product.max(vals.iter().product());
        min_value = vals.iter().copied().fold(min_value, f64::min);
    }
    TraceCheck {
        label: spec.label().to_string(),
        max_product,
        min_value,
        valid: spec.sample(grid).is_ok(),
    }
}

/// Checks every catalog entry on `grid`. Violations are reported, not raised.
pub fn validate_catalog(grid: &Grid) -> Vec<TraceCheck> {
    catalog().iter().map(|e| check_spec(&e.spec, grid)).collect()
}

/// Closed expression vocabulary for custom traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expr {
    Const(f64),
    X,
    Y,
    Theta,
    /// Positive part.
    Plus(Box<Expr>),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `a * e + b`
    Affine(f64, f64, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Y => y,
            Expr::Theta => y.atan2(x),
            Expr::Plus(e) => e.eval(x, y).max(0.0),
            Expr::Cos(e) => e.eval(x, y).cos(),
            Expr::Sin(e) => e.eval(x, y).sin(),
            Expr::Max(a, b) => a.eval(x, y).max(b.eval(x, y)),
            Expr::Affine(a, b, e) => a * e.eval(x, y) + b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSel {
    #[serde(rename = "x=-1")]
    Left,
    #[serde(rename = "x=1")]
    Right,
    #[serde(rename = "y=-1")]
    Bottom,
    #[serde(rename = "y=1")]
    Top,
    #[serde(rename = "all")]
    All,
}

impl EdgeSel {
    fn matches(self, e: Edge) -> bool {
        match self {
            EdgeSel::All => true,
            EdgeSel::Left => e == Edge::Left,
            EdgeSel::Right => e == Edge::Right,
            EdgeSel::Bottom => e == Edge::Bottom,
            EdgeSel::Top => e == Edge::Top,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePiece {
    pub edge: EdgeSel,
    pub expr: Expr,
}

/// JSON document describing a custom boundary spec. On each edge a component
/// takes the maximum of its matching pieces, or 0 if none match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomSpec {
    #[serde(default = "default_label")]
    pub label: String,
    pub components: Vec<Vec<TracePiece>>,
}

fn default_label() -> String {
    "custom".to_string()
}

impl CustomSpec {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let spec: CustomSpec = serde_json::from_str(text)?;
        if spec.components.len() != 3 {
            return Err(CatalogError::ComponentCount(spec.components.len()));
        }
        Ok(spec)
    }

    pub fn to_spec(&self) -> BoundarySpec {
        let traces: [TraceFn; 3] = std::array::from_fn(|k| {
            let pieces = self.components[k].clone();
            edge_trace(move |e, x, y| {
                pieces
                    .iter()
                    .filter(|p| p.edge.matches(e))
                    .map(|p| p.expr.eval(x, y))
                    .reduce(f64::max)
                    .unwrap_or(0.0)
            })
        });
        BoundarySpec::new(self.label.clone(), traces)
    }
}

pub fn load_custom(text: &str) -> Result<BoundarySpec, CatalogError> {
    Ok(CustomSpec::from_json(text)?.to_spec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(spec: &BoundarySpec, grid: &Grid, x: f64, y: f64) -> [f64; 3] {
        let k = grid.nearest_node([x, y]);
        assert!(grid.is_boundary(k));
        std::array::from_fn(|c| spec.eval_at_node(grid, c, k))
    }

    fn close(a: [f64; 3], b: [f64; 3]) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn bc1_lobe_peak() {
        // top-edge point at full-plane angle 2 pi / 3
        let spec = get_bc(1).unwrap();
        let x = -1.0 / 3.0_f64.sqrt();
        assert!((probe(&spec, 0, Edge::Top, x, 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(probe(&spec, 2, Edge::Top, x, 1.0), 0.0);
    }

    /// Evaluates a trace at `(x, y)` on `e` through a 3x3 grid whose edge
    /// midpoint sits there.
    fn probe(spec: &BoundarySpec, c: usize, e: Edge, x: f64, y: f64) -> f64 {
        let (grid, node) = match e {
            Edge::Top => {
                let g = Grid::rect((x - 1.0, x + 1.0), (-1.0, 1.0), 3, 3).unwrap();
                (g, g.index(1, 2))
            }
            Edge::Bottom => {
                let g = Grid::rect((x - 1.0, x + 1.0), (-1.0, 1.0), 3, 3).unwrap();
                (g, g.index(1, 0))
            }
            Edge::Left => {
                let g = Grid::rect((-1.0, 1.0), (y - 1.0, y + 1.0), 3, 3).unwrap();
                (g, g.index(0, 1))
            }
            Edge::Right => {
                let g = Grid::rect((-1.0, 1.0), (y - 1.0, y + 1.0), 3, 3).unwrap();
                (g, g.index(2, 1))
            }
        };
        spec.eval_at_node(&grid, c, node)
    }

    #[test]
    fn table_values() {
        let g = Grid::square(201).unwrap();
        close(at(&get_bc(4).unwrap(), &g, 0.5, 1.0), [0.5, 0.0, 0.25]);
        close(at(&get_bc(3).unwrap(), &g, 1.0, 0.0), [0.0, 0.0, 0.5]);
        close(at(&get_bc(8).unwrap(), &g, -0.5, -1.0), [1.0, 0.0, 0.0]);
        close(at(&get_bc(5).unwrap(), &g, 0.0, 1.0), [1.0, 0.0, 0.3]);
        close(at(&get_bc(6).unwrap(), &g, -1.0, -1.0), [1.0, 0.0, 0.0]);
        close(at(&get_bc(7).unwrap(), &g, 0.0, -1.0), [1.0, 0.0, 0.0]);
        close(at(&get_bc(9).unwrap(), &g, -1.0, 0.0), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn corner_repair_keeps_segregation() {
        let g = Grid::square(11).unwrap();
        for id in [5, 9] {
            let spec = get_bc(id).unwrap();
            for corner in [g.index(0, 10), g.index(10, 0)] {
                let v: [f64; 3] = std::array::from_fn(|c| spec.eval_at_node(&g, c, corner));
                assert_eq!(v, [1.0, 1.0, 0.0], "bc{id}");
            }
        }
        // corners that are already segregated keep the edgewise maximum
        let spec = get_bc(3).unwrap();
        let v: [f64; 3] = std::array::from_fn(|c| spec.eval_at_node(&g, c, 0));
        assert_eq!(v, [1.0, 0.0, 0.5]);
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(get_bc(0), Err(CatalogError::UnknownId(0))));
        assert!(matches!(get_bc(10), Err(CatalogError::UnknownId(10))));
    }

    #[test]
    fn catalog_is_valid_on_paper_grid() {
        let g = Grid::square(201).unwrap();
        for check in validate_catalog(&g) {
            assert!(check.valid, "{check:?}");
            assert!(check.max_product <= 1e-12, "{check:?}");
            assert!(check.min_value >= 0.0, "{check:?}");
        }
    }

    #[test]
    fn angular_lobes_overlap_in_pairs_only() {
        let g = Grid::square(201).unwrap();
        for id in [1, 2] {
            let [a, b, c] = get_bc(id).unwrap().sample(&g).unwrap();
            for k in 0..a.values().len() {
                let nonzero = [a.values()[k], b.values()[k], c.values()[k]]
                    .iter()
                    .filter(|&&v| v > 0.0)
                    .count();
                assert!(nonzero <= 2);
            }
        }
    }

    #[test]
    fn violation_is_reported_not_raised() {
        let g = Grid::square(9).unwrap();
        let bad = check_spec(&BoundarySpec::constant("ones", [1.0, 1.0, 1.0]), &g);
        assert_eq!(bad.max_product, 1.0);
        assert!(!bad.valid);
        let zero = check_spec(&BoundarySpec::constant("zero", [0.0; 3]), &g);
        assert!(zero.valid);
        assert_eq!(zero.max_product, 0.0);
    }

    #[test]
    fn custom_json_matches_catalog_bc1() {
        let shift = |k: f64| -2.0 * PI * k / 3.0;
        let doc = serde_json::json!({
            "label": "lobes",
            "components": (1..=3).map(|k| vec![serde_json::json!({
                "edge": "all",
                "expr": {"max": [{"const": 0.0}, {"cos": {"affine": [1.0, shift(k as f64), "theta"]}}]}
            })]).collect::<Vec<_>>()
        });
        let custom = load_custom(&doc.to_string()).unwrap();
        let native = get_bc(1).unwrap();
        let g = Grid::square(41).unwrap();
        let a = custom.sample(&g).unwrap();
        let b = native.sample(&g).unwrap();
        for c in 0..3 {
            for (x, y) in a[c].values().iter().zip(b[c].values()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_edges_and_errors() {
        let doc = r#"{"components": [
            [{"edge": "y=-1", "expr": {"const": 1.0}}],
            [{"edge": "y=1", "expr": {"plus": "x"}}],
            []
        ]}"#;
        let spec = load_custom(doc).unwrap();
        let g = Grid::square(5).unwrap();
        assert_eq!(spec.eval_at_node(&g, 0, g.index(2, 0)), 1.0);
        assert_eq!(spec.eval_at_node(&g, 0, g.index(2, 4)), 0.0);
        assert_eq!(spec.eval_at_node(&g, 1, g.index(3, 4)), 0.5);
        assert_eq!(spec.eval_at_node(&g, 2, g.index(3, 4)), 0.0);
        assert!(matches!(
            load_custom(r#"{"components": [[], []]}"#),
            Err(CatalogError::ComponentCount(2))
        ));
        assert!(load_custom(r#"{"components": [[{"edge": "z=0", "expr": "x"}], [], []]}"#).is_err());
    }
}

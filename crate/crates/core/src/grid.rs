//! Node-centred uniform grids on intervals and rectangles, scalar fields over
//! them, and boundary traces.
//!
//! Nodes are stored row-major with `x` varying fastest: node `(i, j)` lives at
//! flat index `j * nx + i`. A 1D grid is a grid with `ny == 1`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need at least 3 nodes, got {n}")]
    TooFewNodes { axis: usize, n: usize },
    #[error("axis {axis}: degenerate or inverted extent [{lo}, {hi}]")]
    BadExtent { axis: usize, lo: f64, hi: f64 },
    #[error("field length {got} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("{label}: component {component} is negative ({value:e}) at boundary node {node} ({x}, {y})")]
    Negative {
        label: String,
        component: usize,
        node: usize,
        x: f64,
        y: f64,
        value: f64,
    },
    #[error("{label}: product of traces is {product:e} at boundary node {node} ({x}, {y})")]
    NotSegregated {
        label: String,
        node: usize,
        x: f64,
        y: f64,
        product: f64,
    },
    #[error("{label}: trace {component} is not finite at boundary node {node}")]
    NonFinite {
        label: String,
        component: usize,
        node: usize,
    },
}

/// Tolerance on `phi_1 * phi_2 * phi_3` at sampled boundary nodes.
pub const SEGREGATION_TOL: f64 = 1e-12;

/// One axis of a grid: `n` nodes spanning the closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    /// Coordinate of node `k`. The last node is pinned to `hi` exactly.
    pub fn coord(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }

    fn point() -> Self {
        Axis {
            lo: 0.0,
            hi: 0.0,
            n: 1,
        }
    }
}

/// A structured, uniform, node-centred grid in one or two dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    axes: [Axis; 2],
}

impl Grid {
    /// Builds a grid from per-axis extents and node counts.
    pub fn new(extents: &[(f64, f64)], n: &[usize]) -> Result<Self, GridError> {
        let dim = extents.len();
        if !(1..=2).contains(&dim) || n.len() != dim {
            return Err(GridError::BadDimension(dim.max(n.len())));
        }
        let mut axes = [Axis::point(); 2];
        for (axis, (&(lo, hi), &count)) in extents.iter().zip(n).enumerate() {
            if count < 3 {
                return Err(GridError::TooFewNodes { axis, n: count });
            }
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(GridError::BadExtent { axis, lo, hi });
            }
            axes[axis] = Axis { lo, hi, n: count };
        }
        Ok(Grid { dim, axes })
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self, GridError> {
        Self::new(&[(lo, hi)], &[n])
    }

    pub fn rect(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self, GridError> {
        Self::new(&[x, y], &[nx, ny])
    }

    /// `[-1, 1]^2` with `n` nodes per axis.
    pub fn square(n: usize) -> Result<Self, GridError> {
        Self::rect((-1.0, 1.0), (-1.0, 1.0), n, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn nx(&self) -> usize {
        self.axes[0].n
    }

    pub fn ny(&self) -> usize {
        self.axes[1].n
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        self.axes[0].spacing()
    }

    pub fn hy(&self) -> f64 {
        self.axes[1].spacing()
    }

    /// Largest mesh size over the active axes.
    pub fn h(&self) -> f64 {
        if self.dim == 1 {
            self.hx()
        } else {
            self.hx().max(self.hy())
        }
    }

    /// Area (2D) or length (1D) of one cell.
    pub fn cell_measure(&self) -> f64 {
        if self.dim == 1 {
            self.hx()
        } else {
            self.hx() * self.hy()
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx() && j < self.ny());
        j * self.nx() + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    /// Physical coordinates of a node; `y` is 0 on 1D grids.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        [self.axes[0].coord(i), self.axes[1].coord(j)]
    }

    /// Node closest to a point, clamped to the grid.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let pick = |axis: &Axis, v: f64| -> usize {
            if axis.n == 1 {
                return 0;
            }
            let k = ((v - axis.lo) / axis.spacing()).round();
            k.clamp(0.0, (axis.n - 1) as f64) as usize
        };
        self.index(pick(&self.axes[0], p[0]), pick(&self.axes[1], p[1]))
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.ij(idx);
        let on_x = i == 0 || i + 1 == self.nx();
        if self.dim == 1 {
            on_x
        } else {
            on_x || j == 0 || j + 1 == self.ny()
        }
    }

    /// Boundary nodes in ascending flat-index order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_boundary(k)).collect()
    }

    /// Interior nodes in ascending flat-index order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    /// Edges of the boundary that a node lies on (two at a corner).
    pub fn edges_of(&self, idx: usize) -> Vec<Edge> {
        let (i, j) = self.ij(idx);
        let mut out = Vec::with_capacity(2);
        if i == 0 {
            out.push(Edge::Left);
        }
        if i + 1 == self.nx() {
            out.push(Edge::Right);
        }
        if self.dim == 2 {
            if j == 0 {
                out.push(Edge::Bottom);
            }
            if j + 1 == self.ny() {
                out.push(Edge::Top);
            }
        }
        out
    }

    /// Largest distance between adjacent nodes along a cell diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        self.hx().hypot(self.hy())
    }
}

/// A side of the domain. In 1D only `Left` and `Right` occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// `x = lo`
    Left,
    /// `x = hi`
    Right,
    /// `y = lo`
    Bottom,
    /// `y = hi`
    Top,
}

/// Real values at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { node, value });
        }
        Ok(ScalarField {
            grid: *grid,
            values,
        })
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.coords(k);
                f(x, y)
            })
            .collect();
        ScalarField {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Node-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField, GridError> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField, GridError> {
        self.combine(1.0, other, -1.0)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64, GridError> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<(), GridError> {
        if self.grid != other.grid {
            Err(GridError::GridMismatch)
        } else {
            Ok(())
        }
    }

    /// Five-point (three-point in 1D) discrete Laplacian at an interior node.
    #[inline]
    pub fn laplacian_at(&self, idx: usize) -> f64 {
        laplacian(&self.values, &self.grid, idx)
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, idx: usize) -> &f64 {
        &self.values[idx]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, idx: usize) -> &mut f64 {
        &mut self.values[idx]
    }
}

#[inline]
pub(crate) fn laplacian(u: &[f64], grid: &Grid, idx: usize) -> f64 {
    let hx = grid.hx();
    let mut lap = (u[idx - 1] - 2.0 * u[idx] + u[idx + 1]) / (hx * hx);
    if grid.dim() == 2 {
        let hy = grid.hy();
        let nx = grid.nx();
        lap += (u[idx - nx] - 2.0 * u[idx] + u[idx + nx]) / (hy * hy);
    }
    lap
}

/// Values of one component at the boundary nodes of a grid, ordered as
/// [`Grid::boundary_nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    grid: Grid,
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl BoundaryValues {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        let nodes = grid.boundary_nodes();
        if nodes.len() != values.len() {
            return Err(GridError::LengthMismatch {
                expected: nodes.len(),
                got: values.len(),
            });
        }
        if let Some((k, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite {
                node: nodes[k],
                value,
            });
        }
        Ok(BoundaryValues {
            grid: *grid,
            nodes,
            values,
        })
    }

    /// Evaluates `f(x, y)` at every boundary node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let nodes = grid.boundary_nodes();
        let values = nodes
            .iter()
            .map(|&k| {
                let [x, y] = grid.coords(k);
                f(x, y)
            })
            .collect();
        BoundaryValues {
            grid: *grid,
            nodes,
            values,
        }
    }

    /// Boundary values of a full field.
    pub fn from_field(field: &ScalarField) -> Self {
        let grid = *field.grid();
        let nodes = grid.boundary_nodes();
        let values = nodes.iter().map(|&k| field[k]).collect();
        BoundaryValues {
            grid,
            nodes,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &BoundaryValues, b: f64) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(BoundaryValues {
            grid: self.grid,
            nodes: self.nodes.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Writes these values into the boundary nodes of `field`.
    pub fn imprint(&self, field: &mut ScalarField) {
        for (k, v) in self.iter() {
            field[k] = v;
        }
    }

    /// Full field: boundary values here, zero in the interior.
    pub fn to_field(&self) -> ScalarField {
        let mut f = ScalarField::zeros(&self.grid);
        self.imprint(&mut f);
        f
    }
}

/// One trace: value of a component at boundary point `(x, y)` seen from `edge`.
pub type TraceFn = Arc<dyn Fn(Edge, f64, f64) -> f64 + Send + Sync>;

/// The boundary data triple `(phi_1, phi_2, phi_3)`.
///
/// Traces are evaluated per edge; a corner node takes the maximum over the two
/// edges it belongs to.
#[derive(Clone)]
pub struct BoundarySpec {
    label: String,
    traces: [TraceFn; 3],
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySpec")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl BoundarySpec {
    pub fn new(label: impl Into<String>, traces: [TraceFn; 3]) -> Self {
        BoundarySpec {
            label: label.into(),
            traces,
        }
    }

    /// Traces that ignore which edge they are evaluated on.
    pub fn from_fns<F1, F2, F3>(label: impl Into<String>, f1: F1, f2: F2, f3: F3) -> Self
    where
        F1: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        F3: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            label,
            [
                Arc::new(move |_, x, y| f1(x, y)),
                Arc::new(move |_, x, y| f2(x, y)),
                Arc::new(move |_, x, y| f3(x, y)),
            ],
        )
    }

    /// Constant traces.
    pub fn constant(label: impl Into<String>, values: [f64; 3]) -> Self {
        let [a, b, c] = values;
        Self::from_fns(label, move |_, _| a, move |_, _| b, move |_, _| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// All three trace values at a boundary node.
    ///
    /// A corner takes the edgewise maximum of each component. If that
    /// combination breaks segregation while each edge on its own is
    /// segregated, the smallest of the three values is set to zero.
    pub fn eval_node(&self, grid: &Grid, idx: usize) -> [f64; 3] {
        let [x, y] = grid.coords(idx);
        let edges = grid.edges_of(idx);
        let per_edge: Vec<[f64; 3]> = edges
            .iter()
            .map(|&e| std::array::from_fn(|c| (self.traces[c])(e, x, y)))
            .collect();
        let mut out = [f64::NEG_INFINITY; 3];
        for vals in &per_edge {
            for c in 0..3 {
                out[c] = out[c].max(vals[c]);
            }
        }
        let segregated = |v: &[f64; 3]| v.iter().product::<f64>().abs() <= SEGREGATION_TOL;
        if per_edge.len() > 1 && !segregated(&out) && per_edge.iter().all(segregated) {
            let smallest = (0..3)
                .min_by(|&a, &b| out[a].total_cmp(&out[b]))
                .expect("three components");
            out[smallest] = 0.0;
        }
        out
    }

    /// Value of component `i` (0-based) at a boundary node; see [`Self::eval_node`].
    pub fn eval_at_node(&self, grid: &Grid, component: usize, idx: usize) -> f64 {
        self.eval_node(grid, idx)[component]
    }

    /// Samples all three traces without validating them.
    pub fn sample_unchecked(&self, grid: &Grid) -> [BoundaryValues; 3] {
        let nodes = grid.boundary_nodes();
        let triples: Vec<[f64; 3]> = nodes.iter().map(|&k| self.eval_node(grid, k)).collect();
        std::array::from_fn(|c| BoundaryValues {
            grid: *grid,
            values: triples.iter().map(|t| t[c]).collect(),
            nodes: nodes.clone(),
        })
    }

    /// Samples the traces at the boundary nodes of `grid`, enforcing
    /// nonnegativity and the segregation condition at every node.
    pub fn sample(&self, grid: &Grid) -> Result<[BoundaryValues; 3], TraceError> {
        let out = self.sample_unchecked(grid);
        for (pos, &node) in out[0].nodes.iter().enumerate() {
            let [x, y] = grid.coords(node);
            let mut product = 1.0;
            for (component, bv) in out.iter().enumerate() {
                let value = bv.values[pos];
                if !value.is_finite() {
                    return Err(TraceError::NonFinite {
                        label: self.label.clone(),
                        component: component + 1,
                        node,
                    });
                }
                if value < 0.0 {
                    return Err(TraceError::Negative {
                        label: self.label.clone(),
                        component: component + 1,
                        node,
                        x,
                        y,
                        value,
                    });
                }
                product *= value;
            }
            if product > SEGREGATION_TOL {
                return Err(TraceError::NotSegregated {
                    label: self.label.clone(),
                    node,
                    x,
                    y,
                    product,
                });
            }
        }
        Ok(out)
    }
}

/// Samples `spec` on `grid`; see [`BoundarySpec::sample`].
pub fn sample_boundary(spec: &BoundarySpec, grid: &Grid) -> Result<[BoundaryValues; 3], TraceError> {
    spec.sample(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_grid_spacing() {
        let g = Grid::square(201).unwrap();
        assert!((g.hx() - 0.01).abs() < 1e-15);
        assert!((g.hy() - 0.01).abs() < 1e-15);
        assert_eq!(g.len(), 201 * 201);
    }

    #[test]
    fn smallest_line() {
        let g = Grid::line(0.0, 1.0, 3).unwrap();
        let xs: Vec<f64> = (0..3).map(|k| g.coords(k)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert_eq!(g.boundary_nodes(), vec![0, 2]);
        assert_eq!(g.interior_nodes(), vec![1]);
    }

    #[test]
    fn boundary_interior_counts() {
        let g = Grid::square(11).unwrap();
        // enumerate by hand: 4 sides of 11 minus the 4 shared corners
        let expected_boundary = 4 * 11 - 4;
        assert_eq!(g.boundary_nodes().len(), expected_boundary);
        assert_eq!(expected_boundary, 40);
        assert_eq!(g.interior_nodes().len(), 81);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            Grid::line(0.0, 1.0, 2),
            Err(GridError::TooFewNodes { .. })
        ));
        assert!(matches!(
            Grid::line(1.0, 0.0, 5),
            Err(GridError::BadExtent { .. })
        ));
        assert!(matches!(
            Grid::rect((0.0, 1.0), (2.0, 2.0), 5, 5),
            Err(GridError::BadExtent { .. })
        ));
        assert!(Grid::new(&[], &[]).is_err());
    }

    #[test]
    fn corners_take_max_of_edges() {
        let g = Grid::square(5).unwrap();
        let spec = BoundarySpec::new(
            "edgewise",
            [
                Arc::new(|e, _, _| if e == Edge::Left { 1.0 } else { 0.0 }),
                Arc::new(|e, _, _| if e == Edge::Bottom { 2.0 } else { 0.0 }),
                Arc::new(|_, _, _| 0.0),
            ],
        );
        let corner = g.index(0, 0);
        assert_eq!(spec.eval_at_node(&g, 0, corner), 1.0);
        assert_eq!(spec.eval_at_node(&g, 1, corner), 2.0);
        assert_eq!(spec.eval_at_node(&g, 0, g.index(4, 0)), 0.0);
    }

    #[test]
    fn constant_sampling() {
        let g = Grid::square(7).unwrap();
        let [a, b, c] = BoundarySpec::constant("const", [1.0, 0.0, 0.0])
            .sample(&g)
            .unwrap();
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert!(b.values().iter().all(|&v| v == 0.0));
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_names_offending_node() {
        let g = Grid::square(5).unwrap();
        let err = BoundarySpec::constant("bad", [1.0, 1.0, 1.0])
            .sample(&g)
            .unwrap_err();
        assert!(matches!(err, TraceError::NotSegregated { node: 0, .. }));
        let err = BoundarySpec::constant("neg", [-1.0, 0.0, 0.0])
            .sample(&g)
            .unwrap_err();
        assert!(matches!(err, TraceError::Negative { component: 1, .. }));
    }

    #[test]
    fn nearest_node_round_trip() {
        for g in [Grid::square(13).unwrap(), Grid::line(-2.0, 3.0, 17).unwrap()] {
            for k in 0..g.len() {
                assert_eq!(g.nearest_node(g.coords(k)), k);
            }
        }
    }

    #[test]
    fn field_rejects_nan() {
        let g = Grid::line(0.0, 1.0, 4).unwrap();
        assert!(ScalarField::from_values(&g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ScalarField::from_values(&g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn laplacian_of_quadratic() {
        let g = Grid::square(9).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| x * x + 3.0 * y * y);
        for k in g.interior_nodes() {
            assert!((f.laplacian_at(k) - 8.0).abs() < 1e-10);
        }
    }
}

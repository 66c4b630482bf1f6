//! Free-boundary extraction and comparison.
//!
//! An interface is represented by the midpoints of grid edges whose two
//! endpoints fall on different sides of the activity threshold `u_i > δ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::HarmonicTriple;
use crate::grid::{laplacian, Grid, GridError, ScalarField};
use crate::partition::RegionLabel;
use crate::systems::{limit_a_explicit, product_l2, SystemTag, TripleField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterfaceError {
    #[error("cannot compare interfaces of component {0} and component {1}")]
    ComponentMismatch(usize, usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    SysA,
    SysB,
    Predicted,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::SysA => "SysA",
            Source::SysB => "SysB",
            Source::Predicted => "Predicted",
        }
    }
}

impl From<SystemTag> for Source {
    fn from(t: SystemTag) -> Self {
        match t {
            SystemTag::A => Source::SysA,
            SystemTag::B => Source::SysB,
            SystemTag::LimitA => Source::Predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSet {
    pub grid: Grid,
    pub points: Vec<[f64; 2]>,
    /// 1-based component index.
    pub component: usize,
    pub source: Source,
    /// Node-wise active set the points were extracted from.
    pub active: Vec<bool>,
}

impl InterfaceSet {
    /// Midpoints of edges straddling the active set, in node order with the
    /// x-edge of each node before its y-edge. Only edges between interior
    /// nodes count: a switch across a boundary node marks a zero of the
    /// trace, not a free boundary inside the domain.
    pub fn from_active(grid: &Grid, active: Vec<bool>, component: usize, source: Source) -> Self {
        let nx = grid.nx();
        let mut points = Vec::new();
        for k in (0..grid.len()).filter(|&k| !grid.is_boundary(k)) {
            let (i, j) = grid.ij(k);
            let p = grid.coords(k);
            if i + 2 < nx && active[k] != active[k + 1] {
                let q = grid.coords(k + 1);
                points.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            }
            if grid.dim() == 2 && j + 2 < grid.ny() && active[k] != active[k + nx] {
                let q = grid.coords(k + nx);
                points.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            }
        }
        InterfaceSet {
            grid: *grid,
            points,
            component,
            source,
            active,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Interfaces of the three components of `t` at threshold `delta`.
pub fn extract_interfaces(t: &TripleField, delta: f64) -> [InterfaceSet; 3] {
    let source = Source::from(t.system);
    let g = *t.grid();
    std::array::from_fn(|c| {
        let active = t.u[c].values().iter().map(|&v| v > delta).collect();
        InterfaceSet::from_active(&g, active, c + 1, source)
    })
}

/// Interfaces of the predicted partition, read from the explicit limit with
/// the same threshold as the ε-solutions. Exact signs of `h_ij` are not used
/// here: symmetric data puts zero sets on grid lines where the harmonic
/// differences carry only solver noise.
pub fn predicted_interfaces(h: &HarmonicTriple, delta: f64) -> [InterfaceSet; 3] {
    extract_interfaces(&limit_a_explicit(h), delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    /// Symmetric Hausdorff distance; infinite when exactly one set is empty.
    pub hausdorff: f64,
    /// Mean nearest-neighbour distance over both sets.
    pub mean_nn: f64,
    /// Measure of the symmetric difference of the active sets.
    pub area_sym_diff: f64,
    /// One set is empty and the other is not.
    pub empty_mismatch: bool,
}

fn nearest(p: [f64; 2], set: &[[f64; 2]]) -> f64 {
    set.iter()
        .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(f64::INFINITY, f64::min)
}

pub fn compare(a: &InterfaceSet, b: &InterfaceSet) -> Result<ComparisonMetrics, InterfaceError> {
    if a.component != b.component {
        return Err(InterfaceError::ComponentMismatch(a.component, b.component));
    }
    if a.grid != b.grid {
        return Err(GridError::GridMismatch.into());
    }
    let cell = a.grid.cell_measure();
    let area = a.active.iter().zip(&b.active).filter(|(x, y)| x != y).count() as f64 * cell;
    let (hausdorff, mean_nn, empty_mismatch) = match (a.is_empty(), b.is_empty()) {
        (true, true) => (0.0, 0.0, false),
        (true, false) | (false, true) => (f64::INFINITY, f64::INFINITY, true),
        _ => {
            let ab: Vec<f64> = a.points.iter().map(|&p| nearest(p, &b.points)).collect();
            let ba: Vec<f64> = b.points.iter().map(|&p| nearest(p, &a.points)).collect();
            let max = ab.iter().chain(&ba).fold(0.0_f64, |m, &d| m.max(d));
            let mean = (ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64;
            (max, mean, false)
        }
    };
    Ok(ComparisonMetrics {
        hausdorff,
        mean_nn,
        area_sym_diff: area,
        empty_mismatch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest nodal value over all components.
    pub min_value: f64,
    /// `max (u_i - h_i)`, clipped at zero.
    pub upper_excess: f64,
    /// Largest violation of `0 <= u_i <= h_i`.
    pub sandwich_violation: f64,
    /// `∫ (u_1 u_2 u_3)²`
    pub penalty_integral: f64,
    /// Per component, the largest `|Δ_h u_i|` over bulk nodes.
    pub bulk_laplacian: [f64; 3],
    /// Per component, the number of bulk nodes.
    pub bulk_nodes: [usize; 3],
    /// Per pair (12, 13, 23), `max |(u_i - u_j) - h_ij|` over nodes in the
    /// bulk of both components.
    pub difference_deviation: [f64; 3],
    /// Per pair, the largest `|Δ_h (u_i - u_j)|` over interior nodes.
    pub difference_laplacian: [f64; 3],
    /// `max |h13 - h12 - h23|`
    pub cocycle_residual: f64,
}

/// Interior nodes where the node and its stencil neighbours all exceed `floor`.
pub fn bulk_mask(u: &ScalarField, floor: f64) -> Vec<bool> {
    let g = u.grid();
    let v = u.values();
    let nx = g.nx();
    (0..g.len())
        .map(|k| {
            if g.is_boundary(k) || v[k] <= floor {
                return false;
            }
            let mut ok = v[k - 1] > floor && v[k + 1] > floor;
            if g.dim() == 2 {
                ok &= v[k - nx] > floor && v[k + nx] > floor;
            }
            ok
        })
        .collect()
}

pub fn diagnostics(
    t: &TripleField,
    h_i: &[ScalarField; 3],
    h: &HarmonicTriple,
    epsilon: f64,
) -> Result<Diagnostics, GridError> {
    let g = *t.grid();
    for f in h_i.iter().chain([&h.h12, &h.h13, &h.h23]) {
        t.u[0].check_same_grid(f)?;
    }
    let floor = epsilon.max(0.0).sqrt();
    let mut min_value = f64::INFINITY;
    let mut upper_excess = 0.0_f64;
    for c in 0..3 {
        for k in 0..g.len() {
            min_value = min_value.min(t.u[c][k]);
            upper_excess = upper_excess.max(t.u[c][k] - h_i[c][k]);
        }
    }
    let masks: Vec<Vec<bool>> = t.u.iter().map(|u| bulk_mask(u, floor)).collect();
    let mut bulk_laplacian = [0.0; 3];
    let mut bulk_nodes = [0; 3];
    for c in 0..3 {
        for k in (0..g.len()).filter(|&k| masks[c][k]) {
            bulk_nodes[c] += 1;
            bulk_laplacian[c] = f64::max(bulk_laplacian[c], laplacian(t.u[c].values(), &g, k).abs());
        }
    }
    let pairs = [(0, 1, &h.h12), (0, 2, &h.h13), (1, 2, &h.h23)];
    let mut difference_deviation = [0.0; 3];
    let mut difference_laplacian = [0.0; 3];
    for (p, &(i, j, hij)) in pairs.iter().enumerate() {
        let d = t.u[i].sub(&t.u[j])?;
        for k in 0..g.len() {
            if g.is_boundary(k) {
                continue;
            }
            difference_laplacian[p] = f64::max(difference_laplacian[p], laplacian(d.values(), &g, k).abs());
            if masks[i][k] && masks[j][k] {
                difference_deviation[p] = f64::max(difference_deviation[p], (d[k] - hij[k]).abs());
            }
        }
    }
    Ok(Diagnostics {
        min_value,
        upper_excess: upper_excess.max(0.0),
        sandwich_violation: upper_excess.max(-min_value).max(0.0),
        penalty_integral: product_l2(&t.u),
        bulk_laplacian,
        bulk_nodes,
        difference_deviation,
        difference_laplacian,
        cocycle_residual: h.cocycle_residual(),
    })
}

/// Count of nodes carrying each label, for reports.
pub fn label_histogram(labels: &[RegionLabel]) -> Vec<(String, usize)> {
    RegionLabel::ALL
        .iter()
        .map(|&l| (l.name().to_string(), labels.iter().filter(|&&x| x == l).count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{harmonic_components, harmonic_differences, LinearSolveConfig};
    use crate::systems::{line_example, line_example_spec};

    fn line_sets(n: usize) -> ([InterfaceSet; 3], [InterfaceSet; 3]) {
        let (a, b) = line_example(n).unwrap();
        (extract_interfaces(&a, 1e-5), extract_interfaces(&b, 1e-5))
    }

    #[test]
    fn line_example_interfaces_at_half() {
        let (a, b) = line_sets(1000);
        for set in [&a[0], &a[1], &b[0], &b[1]] {
            assert_eq!(set.points.len(), 1);
            assert!((set.points[0][0] - 0.5).abs() <= 1.0 / 999.0);
        }
        assert!(a[2].is_empty() && b[2].is_empty());
        assert_eq!(a[0].source, Source::Predicted);
        assert_eq!(b[0].source, Source::SysB);
    }

    #[test]
    fn zero_field_has_no_interface() {
        let g = Grid::square(11).unwrap();
        let z = ScalarField::zeros(&g);
        let t = TripleField {
            u: [z.clone(), z.clone(), z],
            epsilon: 1e-10,
            system: SystemTag::A,
            iters: 0,
            final_update: 0.0,
            stages: vec![],
        };
        assert!(extract_interfaces(&t, 1e-5).iter().all(InterfaceSet::is_empty));
    }

    fn half_plane(g: &Grid, x0: f64) -> InterfaceSet {
        let active = (0..g.len()).map(|k| g.coords(k)[0] > x0).collect();
        InterfaceSet::from_active(g, active, 1, Source::SysA)
    }

    #[test]
    fn identical_and_shifted_sets() {
        let g = Grid::square(201).unwrap();
        let a = half_plane(&g, 0.005);
        let m = compare(&a, &a).unwrap();
        assert_eq!((m.hausdorff, m.mean_nn, m.area_sym_diff), (0.0, 0.0, 0.0));
        let b = half_plane(&g, 0.015);
        let m = compare(&a, &b).unwrap();
        assert!((m.hausdorff - 0.01).abs() < 1e-12);
        assert!(m.hausdorff >= m.mean_nn);
        // one column of 201 nodes, each of measure h²
        assert!((m.area_sym_diff - 201.0 * 1e-4).abs() < 1e-12);
    }

    #[test]
    fn empty_sets() {
        let g = Grid::square(11).unwrap();
        let empty = InterfaceSet::from_active(&g, vec![false; g.len()], 1, Source::SysA);
        let m = compare(&empty, &empty).unwrap();
        assert_eq!(m.hausdorff, 0.0);
        assert!(!m.empty_mismatch);
        let m = compare(&empty, &half_plane(&g, 0.05)).unwrap();
        assert!(m.hausdorff.is_infinite() && m.empty_mismatch);
    }

    #[test]
    fn component_mismatch_is_an_error() {
        let g = Grid::square(11).unwrap();
        let a = half_plane(&g, 0.05);
        let mut b = a.clone();
        b.component = 2;
        assert_eq!(compare(&a, &b), Err(InterfaceError::ComponentMismatch(1, 2)));
    }

    #[test]
    fn explicit_limit_diagnostics_vanish() {
        let g = Grid::square(41).unwrap();
        let spec = crate::bc_catalog::get_bc(4).unwrap();
        let cfg = LinearSolveConfig::default();
        let h = harmonic_differences(&spec, &g, &cfg).unwrap();
        let hi = harmonic_components(&spec, &g, &cfg).unwrap();
        let t = limit_a_explicit(&h);
        let d = diagnostics(&t, &hi, &h, 1e-10).unwrap();
        assert_eq!(d.min_value, 0.0);
        assert_eq!(d.penalty_integral, 0.0);
        assert!(d.difference_deviation[0] <= 1e-15);
        assert!(d.difference_deviation[1] <= 1e-15);
        assert!(d.difference_deviation[2] <= 1e-9);
        assert!(d.upper_excess <= 1e-9);
    }

    #[test]
    fn line_example_b_differs_from_harmonic_difference() {
        let g = Grid::line(0.0, 1.0, 101).unwrap();
        let spec = line_example_spec();
        let cfg = LinearSolveConfig::default();
        let h = harmonic_differences(&spec, &g, &cfg).unwrap();
        let hi = harmonic_components(&spec, &g, &cfg).unwrap();
        let (_, b) = line_example(101).unwrap();
        let d = diagnostics(&b, &hi, &h, 1e-10).unwrap();
        assert!(d.bulk_laplacian[2] <= 1e-12);
        // (u_1 - u_3) - h13 = x on the bulk of u_1
        assert!(d.difference_deviation[1] > 0.4);
    }

    #[test]
    fn predicted_interfaces_follow_zero_contours() {
        let g = Grid::square(81).unwrap();
        let spec = crate::bc_catalog::get_bc(4).unwrap();
        let h = harmonic_differences(&spec, &g, &LinearSolveConfig::default()).unwrap();
        let pred = predicted_interfaces(&h, 1e-5);
        assert_eq!(pred[0].source, Source::Predicted);
        let mut contour: Vec<[f64; 2]> = Vec::new();
        for f in [&h.h12, &h.h13] {
            for line in crate::partition::zero_contours(f) {
                contour.extend(line.points);
            }
        }
        assert!(!pred[0].is_empty());
        for &p in &pred[0].points {
            assert!(nearest(p, &contour) <= 2.0 * g.h());
        }
    }
}

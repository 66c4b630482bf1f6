//! Partition of the domain predicted by the harmonic differences.
//!
//! Two-phase regions are read off the signs of `h12, h13, h23`:
//!
//! | region | condition              |
//! |--------|------------------------|
//! | `R12`  | `h23 > 0` and `h13 > 0` |
//! | `R13`  | `h23 < 0` and `h12 > 0` |
//! | `R23`  | `h12 < 0` and `h13 < 0` |
//!
//! Interfaces lie on zero contours, extracted by marching squares, and
//! triple points are the intersections `{h12 = 0} ∩ {h23 = 0}`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::elliptic::HarmonicTriple;
use crate::grid::{Grid, ScalarField};

/// Values within this of zero count as exactly zero for pure-region labels.
pub const EXACT_ZERO_TOL: f64 = 1e-12;

/// Gradients below this on a zero contour flag the pair as degenerate.
pub const DEGENERATE_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionLabel {
    R12,
    R13,
    R23,
    Pure1,
    Pure2,
    Pure3,
    Interface,
    Triple,
    Undecided,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 9] = [
        RegionLabel::R12,
        RegionLabel::R13,
        RegionLabel::R23,
        RegionLabel::Pure1,
        RegionLabel::Pure2,
        RegionLabel::Pure3,
        RegionLabel::Interface,
        RegionLabel::Triple,
        RegionLabel::Undecided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::R12 => "R12",
            RegionLabel::R13 => "R13",
            RegionLabel::R23 => "R23",
            RegionLabel::Pure1 => "PURE1",
            RegionLabel::Pure2 => "PURE2",
            RegionLabel::Pure3 => "PURE3",
            RegionLabel::Interface => "INTERFACE",
            RegionLabel::Triple => "TRIPLE",
            RegionLabel::Undecided => "UNDECIDED",
        }
    }

    /// Grey level used in label images.
    pub fn grey(self) -> u8 {
        match self {
            RegionLabel::Undecided => 0,
            RegionLabel::R12 => 60,
            RegionLabel::R13 => 120,
            RegionLabel::R23 => 180,
            RegionLabel::Pure1 => 200,
            RegionLabel::Pure2 => 210,
            RegionLabel::Pure3 => 220,
            RegionLabel::Interface => 240,
            RegionLabel::Triple => 255,
        }
    }

    /// Which components are positive in a two-phase or pure region.
    pub fn active(self) -> Option<[bool; 3]> {
        match self {
            RegionLabel::R12 => Some([true, true, false]),
            RegionLabel::R13 => Some([true, false, true]),
            RegionLabel::R23 => Some([false, true, true]),
            RegionLabel::Pure1 => Some([true, false, false]),
            RegionLabel::Pure2 => Some([false, true, false]),
            RegionLabel::Pure3 => Some([false, false, true]),
            _ => None,
        }
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, RegionLabel::R12 | RegionLabel::R13 | RegionLabel::R23)
    }
}

/// Label of a single node from its harmonic differences.
pub fn classify_values(h12: f64, h13: f64, h23: f64, band: f64) -> RegionLabel {
    if h23 > band && h13 > band {
        return RegionLabel::R12;
    }
    if h23 < -band && h12 > band {
        return RegionLabel::R13;
    }
    if h12 < -band && h13 < -band {
        return RegionLabel::R23;
    }
    let near = [h12.abs() <= band, h13.abs() <= band, h23.abs() <= band];
    match near.iter().filter(|&&b| b).count() {
        0 => RegionLabel::Undecided,
        1 => {
            // A pure region needs the remaining two differences to pin the
            // other components to zero, which only happens on an exact zero set.
            if h23.abs() <= EXACT_ZERO_TOL && h12 > band && h13 > band {
                RegionLabel::Pure1
            } else if h13.abs() <= EXACT_ZERO_TOL && h12 < -band && h23 > band {
                RegionLabel::Pure2
            } else if h12.abs() <= EXACT_ZERO_TOL && h13 < -band && h23 < -band {
                RegionLabel::Pure3
            } else {
                RegionLabel::Interface
            }
        }
        _ => RegionLabel::Triple,
    }
}

/// Node-wise labels. `band >= 0` widens the zero sets for noisy fields.
pub fn classify(h: &HarmonicTriple, band: f64) -> Vec<RegionLabel> {
    let band = band.max(0.0);
    (0..h.grid().len())
        .map(|k| classify_values(h.h12[k], h.h13[k], h.h23[k], band))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[inline]
fn inside(v: f64) -> bool {
    v >= 0.0
}

/// Zero crossing on the segment from node `a` to node `b`.
fn crossing(grid: &Grid, v: &[f64], a: usize, b: usize) -> [f64; 2] {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let t = v[lo] / (v[lo] - v[hi]);
    let (p, q) = (grid.coords(lo), grid.coords(hi));
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Zero contour of a nodal field.
///
/// In two dimensions this is marching squares with linear interpolation on
/// cell edges; saddle cells are resolved by the sign of the corner mean. In
/// one dimension every crossing is returned as a single-point polyline.
pub fn zero_contours(field: &ScalarField) -> Vec<Polyline> {
    let g = field.grid();
    let v = field.values();
    if g.dim() == 1 {
        return (0..g.nx() - 1)
            .filter(|&i| inside(v[i]) != inside(v[i + 1]))
            .map(|i| Polyline {
                points: vec![crossing(g, v, i, i + 1)],
                closed: false,
            })
            .collect();
    }

    let (nx, ny) = (g.nx(), g.ny());
    let h_edge = |i: usize, j: usize| 2 * (j * nx + i);
    let v_edge = |i: usize, j: usize| 2 * (j * nx + i) + 1;
    let edge_point = |id: usize| {
        let node = id / 2;
        let other = if id % 2 == 0 { node + 1 } else { node + nx };
        crossing(g, v, node, other)
    };

    let mut segments: Vec<[usize; 2]> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
            let b = c.map(|k| inside(v[k]));
            let bottom = h_edge(i, j);
            let right = v_edge(i + 1, j);
            let top = h_edge(i, j + 1);
            let left = v_edge(i, j);
            let cut = [b[0] != b[1], b[1] != b[2], b[2] != b[3], b[3] != b[0]];
            let edges = [bottom, right, top, left];
            let n_cut = cut.iter().filter(|&&x| x).count();
            if n_cut == 2 {
                let mut it = (0..4).filter(|&e| cut[e]).map(|e| edges[e]);
                segments.push([it.next().unwrap(), it.next().unwrap()]);
            } else if n_cut == 4 {
                let centre = 0.25 * c.iter().map(|&k| v[k]).sum::<f64>();
                if inside(centre) == b[0] {
                    segments.push([bottom, right]);
                    segments.push([top, left]);
                } else {
                    segments.push([left, bottom]);
                    segments.push([right, top]);
                }
            }
        }
    }
    chain(&segments)
        .into_iter()
        .map(|(ids, closed)| Polyline {
            points: ids.into_iter().map(edge_point).collect(),
            closed,
        })
        .collect()
}

/// Joins segments sharing edge ids into chains, open ones first.
fn chain(segments: &[[usize; 2]]) -> Vec<(Vec<usize>, bool)> {
    let mut at: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for &e in seg {
            at.entry(e).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start: usize, from: usize, used: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut ids = vec![from];
        let mut seg = start;
        let mut cur = from;
        loop {
            used[seg] = true;
            let [a, b] = segments[seg];
            let next = if a == cur { b } else { a };
            ids.push(next);
            cur = next;
            match at[&cur].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        let closed = ids.len() > 2 && ids.first() == ids.last();
        if closed {
            ids.pop();
        }
        (ids, closed)
    };

    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        if let Some(&end) = segments[s].iter().find(|e| at[e].len() == 1) {
            out.push(walk(s, end, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            out.push(walk(s, segments[s][0], &mut used));
        }
    }
    out
}

/// Bilinear (linear in 1D) interpolation of a nodal field at `p`.
pub fn sample_bilinear(field: &ScalarField, p: [f64; 2]) -> f64 {
    let g = field.grid();
    let locate = |k: usize, x: f64| {
        let a = g.axis(k);
        let n = a.n;
        let s = ((x - a.lo) / a.spacing()).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    };
    let (i, s) = locate(0, p[0]);
    if g.dim() == 1 {
        return field[i] * (1.0 - s) + field[i + 1] * s;
    }
    let (j, t) = locate(1, p[1]);
    let c = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
    bilinear(c.map(|k| field[k]), s, t)
}

#[inline]
fn bilinear(f: [f64; 4], s: f64, t: f64) -> f64 {
    f[0] * (1.0 - s) * (1.0 - t) + f[1] * s * (1.0 - t) + f[2] * s * t + f[3] * (1.0 - s) * t
}

#[inline]
fn bilinear_grad(f: [f64; 4], s: f64, t: f64) -> [f64; 2] {
    [
        (f[1] - f[0]) * (1.0 - t) + (f[2] - f[3]) * t,
        (f[3] - f[0]) * (1.0 - s) + (f[2] - f[1]) * s,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriplePoint {
    pub p: [f64; 2],
    /// Newton did not converge; `p` is the centre of the candidate cell.
    pub low_precision: bool,
}

const NEWTON_STEPS: usize = 20;

/// Points where `h12` and `h23` vanish together.
pub fn triple_points(h: &HarmonicTriple) -> Vec<TriplePoint> {
    let g = h.grid();
    let (f, q) = (h.h12.values(), h.h23.values());
    let scale = h.h12.max_abs().max(h.h23.max_abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    if g.dim() == 1 {
        // Zero sets are isolated points; they meet only at a shared node.
        return (0..g.nx())
            .filter(|&k| f[k].abs() <= tol && q[k].abs() <= tol)
            .map(|k| TriplePoint { p: g.coords(k), low_precision: false })
            .collect();
    }

    let (hx, hy) = (g.hx(), g.hy());
    let mut out: Vec<TriplePoint> = Vec::new();
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            let c = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
            let fa = c.map(|k| f[k]);
            let qa = c.map(|k| q[k]);
            let straddles = |a: [f64; 4]| {
                let n_in = a.iter().filter(|&&v| inside(v)).count();
                (n_in > 0 && n_in < 4) || a.iter().any(|&v| v == 0.0)
            };
            if !straddles(fa) || !straddles(qa) {
                continue;
            }
            let (mut s, mut t) = (0.5, 0.5);
            let mut converged = false;
            for _ in 0..NEWTON_STEPS {
                let (r1, r2) = (bilinear(fa, s, t), bilinear(qa, s, t));
                if r1.abs() <= tol && r2.abs() <= tol {
                    converged = true;
                    break;
                }
                let [a, b] = bilinear_grad(fa, s, t);
                let [cc, d] = bilinear_grad(qa, s, t);
                let det = a * d - b * cc;
                if det == 0.0 || !det.is_finite() {
                    break;
                }
                s -= (d * r1 - b * r2) / det;
                t -= (a * r2 - cc * r1) / det;
                if !(s.is_finite() && t.is_finite()) || s.abs() > 4.0 || t.abs() > 4.0 {
                    break;
                }
            }
            let slack = 1e-9;
            let in_cell = (-slack..=1.0 + slack).contains(&s) && (-slack..=1.0 + slack).contains(&t);
            let [x0, y0] = g.coords(c[0]);
            let point = if converged && in_cell {
                TriplePoint {
                    p: [x0 + s.clamp(0.0, 1.0) * hx, y0 + t.clamp(0.0, 1.0) * hy],
                    low_precision: false,
                }
            } else if !converged && in_cell {
                TriplePoint {
                    p: [x0 + 0.5 * hx, y0 + 0.5 * hy],
                    low_precision: true,
                }
            } else {
                continue;
            };
            let dup = out.iter().any(|o| {
                (o.p[0] - point.p[0]).abs() <= 1e-9 * hx && (o.p[1] - point.p[1]).abs() <= 1e-9 * hy
            });
            if !dup {
                out.push(point);
            }
        }
    }
    out
}

/// Nodal gradient by central differences, one-sided at the boundary.
pub fn nodal_gradient(field: &ScalarField) -> [ScalarField; 2] {
    let g = field.grid();
    let d = |k: usize, axis: usize| -> f64 {
        let (i, j) = g.ij(k);
        let (pos, n, stride, h) = if axis == 0 {
            (i, g.nx(), 1, g.hx())
        } else {
            (j, g.ny(), g.nx(), g.hy())
        };
        if axis == 1 && g.dim() == 1 {
            return 0.0;
        }
        if pos == 0 {
            (field[k + stride] - field[k]) / h
        } else if pos + 1 == n {
            (field[k] - field[k - stride]) / h
        } else {
            (field[k + stride] - field[k - stride]) / (2.0 * h)
        }
    };
    let make = |axis| {
        ScalarField::from_values(g, (0..g.len()).map(|k| d(k, axis)).collect())
            .expect("finite differences of a finite field")
    };
    [make(0), make(1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTransversality {
    pub pair: [usize; 2],
    pub vertices: usize,
    /// `None` when the zero contour is empty.
    pub min_gradient: Option<f64>,
    pub degenerate: bool,
}

/// Minimum `|∇h_ij|` sampled at the vertices of each zero contour.
pub fn transversality_report(h: &HarmonicTriple) -> Vec<PairTransversality> {
    [([1, 2], &h.h12), ([1, 3], &h.h13), ([2, 3], &h.h23)]
        .into_iter()
        .map(|(pair, field)| {
            let grad = nodal_gradient(field);
            let mut min: Option<f64> = None;
            let mut vertices = 0;
            for line in zero_contours(field) {
                for p in line.points {
                    vertices += 1;
                    let gx = sample_bilinear(&grad[0], p);
                    let gy = sample_bilinear(&grad[1], p);
                    let m = gx.hypot(gy);
                    min = Some(min.map_or(m, |o: f64| o.min(m)));
                }
            }
            PairTransversality {
                pair,
                vertices,
                min_gradient: min,
                degenerate: min.map_or(true, |m| m < DEGENERATE_GRADIENT),
            }
        })
        .collect()
}

/// The predicted partition: labels, zero contours of `h12, h13, h23` and
/// triple points.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMap {
    pub grid: Grid,
    pub labels: Vec<RegionLabel>,
    /// Contours of `h12`, `h13`, `h23`, in that order.
    pub contours: [Vec<Polyline>; 3],
    pub triples: Vec<TriplePoint>,
}

pub const PAIRS: [[usize; 2]; 3] = [[1, 2], [1, 3], [2, 3]];

impl PartitionMap {
    pub fn label_counts(&self) -> Vec<(RegionLabel, usize)> {
        RegionLabel::ALL
            .iter()
            .map(|&l| (l, self.labels.iter().filter(|&&x| x == l).count()))
            .collect()
    }
}

pub fn predict(h: &HarmonicTriple, band: f64) -> PartitionMap {
    PartitionMap {
        grid: *h.grid(),
        labels: classify(h, band),
        contours: [zero_contours(&h.h12), zero_contours(&h.h13), zero_contours(&h.h23)],
        triples: triple_points(h),
    }
}

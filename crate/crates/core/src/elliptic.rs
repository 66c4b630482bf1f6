//! Red-black SOR for the Dirichlet problems `Δu = 0` and `Δu - c u = f` on
//! node-centred grids (five-point stencil in 2D, three-point in 1D).

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{BoundarySpec, BoundaryValues, Grid, GridError, ScalarField, TraceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear solve did not converge in {iterations} sweeps (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("screening coefficient is negative ({value:e}) at node {node}")]
    NegativeCoefficient { node: usize, value: f64 },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearSolveConfig {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// SOR relaxation factor; `None` picks the Laplace-optimal value for the grid.
    pub omega: Option<f64>,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            tol: 1e-10,
            max_iter: 200_000,
            omega: None,
        }
    }
}

impl LinearSolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::BadConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 2.0) {
                return Err(SolveError::BadConfig(format!("omega must lie in (0, 2), got {w}")));
            }
        }
        Ok(())
    }

    pub fn omega_for(&self, grid: &Grid) -> f64 {
        self.omega.unwrap_or_else(|| optimal_omega(grid))
    }
}

/// `2 / (1 + sin(pi / N))` with `N` the largest number of cells along an axis.
pub fn optimal_omega(grid: &Grid) -> f64 {
    let cells = (grid.nx() - 1).max(grid.ny().saturating_sub(1)) as f64;
    2.0 / (1.0 + (PI / cells).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual relative to the data scale.
    pub residual: f64,
}

/// Stencil weights and index helpers shared by the linear and nonlinear sweeps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub nx: usize,
    pub ny: usize,
    pub two_d: bool,
    /// `1 / hx^2`
    pub wx: f64,
    /// `1 / hy^2`, zero in 1D
    pub wy: f64,
    /// Diagonal of the negative Laplacian, `2 wx + 2 wy`.
    pub diag: f64,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let wx = 1.0 / (grid.hx() * grid.hx());
        let two_d = grid.dim() == 2;
        let wy = if two_d { 1.0 / (grid.hy() * grid.hy()) } else { 0.0 };
        Stencil {
            nx: grid.nx(),
            ny: grid.ny(),
            two_d,
            wx,
            wy,
            diag: 2.0 * wx + 2.0 * wy,
        }
    }

    /// Weighted sum of the neighbours of `idx`.
    #[inline(always)]
    pub fn neighbours(&self, u: &[f64], idx: usize) -> f64 {
        let mut s = self.wx * (u[idx - 1] + u[idx + 1]);
        if self.two_d {
            s += self.wy * (u[idx - self.nx] + u[idx + self.nx]);
        }
        s
    }

    /// Calls `f(idx)` for every interior node of the given colour,
    /// `(i + j) % 2 == colour`, in ascending index order.
    #[inline(always)]
    pub fn for_colour(&self, colour: usize, mut f: impl FnMut(usize)) {
        let rows = if self.two_d { 1..self.ny - 1 } else { 0..1 };
        for j in rows {
            let start = if (1 + j) % 2 == colour { 1 } else { 2 };
            let base = j * self.nx;
            let mut i = start;
            while i < self.nx - 1 {
                f(base + i);
                i += 2;
            }
        }
    }

    #[inline(always)]
    pub fn for_interior(&self, mut f: impl FnMut(usize)) {
        let rows = if self.two_d { 1..self.ny - 1 } else { 0..1 };
        for j in rows {
            let base = j * self.nx;
            for i in 1..self.nx - 1 {
                f(base + i);
            }
        }
    }
}

/// Transfinite (bilinear-blend) interpolation of the boundary values into the
/// interior; the initial guess of every linear solve.
pub fn blended_guess(data: &BoundaryValues) -> ScalarField {
    let grid = *data.grid();
    let mut u = data.to_field();
    let (nx, ny) = (grid.nx(), grid.ny());
    if grid.dim() == 1 {
        let (a, b) = (u[0], u[nx - 1]);
        for i in 1..nx - 1 {
            let s = i as f64 / (nx - 1) as f64;
            u[i] = (1.0 - s) * a + s * b;
        }
        return u;
    }
    let at = |u: &ScalarField, i: usize, j: usize| u[grid.index(i, j)];
    let (c00, c10, c01, c11) = (
        at(&u, 0, 0),
        at(&u, nx - 1, 0),
        at(&u, 0, ny - 1),
        at(&u, nx - 1, ny - 1),
    );
    for j in 1..ny - 1 {
        let t = j as f64 / (ny - 1) as f64;
        for i in 1..nx - 1 {
            let s = i as f64 / (nx - 1) as f64;
            let left = at(&u, 0, j);
            let right = at(&u, nx - 1, j);
            let bottom = at(&u, i, 0);
            let top = at(&u, i, ny - 1);
            let v = (1.0 - s) * left + s * right + (1.0 - t) * bottom + t * top
                - ((1.0 - s) * (1.0 - t) * c00
                    + s * (1.0 - t) * c10
                    + (1.0 - s) * t * c01
                    + s * t * c11);
            u[grid.index(i, j)] = v;
        }
    }
    u
}

/// Max over interior nodes of `|Δu - c u - f|`, each entry scaled by
/// `D / (D + c)` with `D` the Laplacian diagonal.
fn screened_residual(st: &Stencil, u: &[f64], c: Option<&[f64]>, f: Option<&[f64]>) -> f64 {
    let mut worst: f64 = 0.0;
    st.for_interior(|k| {
        let ck = c.map_or(0.0, |c| c[k]);
        let fk = f.map_or(0.0, |f| f[k]);
        let r = st.neighbours(u, k) - (st.diag + ck) * u[k] - fk;
        worst = worst.max((r * st.diag / (st.diag + ck)).abs());
    });
    worst
}

/// Solves `Δu - c u = f` with Dirichlet data, starting from `initial`.
///
/// `c` and `f` default to zero. The residual is measured as in
/// [`screened_residual`] relative to `max(|data|_inf, |f|_inf)` (or absolute
/// when both vanish), with a floor of `16 ulp · D · |u|_inf` for the rounding
/// error of the stencil itself.
pub fn screened_solve_from(
    initial: ScalarField,
    c: Option<&ScalarField>,
    f: Option<&ScalarField>,
    data: &BoundaryValues,
    cfg: &LinearSolveConfig,
) -> Result<(ScalarField, SolveStats), SolveError> {
    cfg.validate()?;
    let grid = *data.grid();
    for field in [Some(&initial), c, f].into_iter().flatten() {
        if *field.grid() != grid {
            return Err(GridError::GridMismatch.into());
        }
        if !field.is_finite() {
            return Err(GridError::NonFinite {
                node: field.values().iter().position(|v| !v.is_finite()).unwrap_or(0),
                value: f64::NAN,
            }
            .into());
        }
    }
    if let Some(c) = c {
        if let Some((node, &value)) = c.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(SolveError::NegativeCoefficient { node, value });
        }
    }
    let mut u = initial;
    data.imprint(&mut u);
    let st = Stencil::new(&grid);
    let omega = cfg.omega_for(&grid);
    let cv = c.map(|c| c.values());
    let fv = f.map(|f| f.values());
    let scale = {
        let s = data.max_abs().max(f.map_or(0.0, |f| f.max_abs()));
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    // residuals of O(1) values cannot drop below a few ulps times the
    // stencil diagonal; allow that floor so fine grids still terminate
    let floor = |u: &ScalarField| 16.0 * f64::EPSILON * st.diag * u.max_abs();
    let mut threshold = (cfg.tol * scale).max(floor(&u));

    let mut residual = screened_residual(&st, u.values(), cv, fv);
    let mut iterations = 0;
    const CHECK_EVERY: usize = 8;
    // Over-relaxation close to 2 sustains a rounding limit cycle a few ulps
    // above the floor; once progress stalls, plain Gauss-Seidel damps it.
    const STALL_SWEEPS: usize = 256;
    let mut omega = omega;
    let (mut best, mut best_at) = (residual, 0);
    while residual > threshold && iterations < cfg.max_iter {
        if iterations - best_at >= STALL_SWEEPS {
            omega = 1.0;
        }
        let vals = u.values_mut();
        for _ in 0..CHECK_EVERY {
            for colour in 0..2 {
                st.for_colour(colour, |k| {
                    let ck = cv.map_or(0.0, |c| c[k]);
                    let fk = fv.map_or(0.0, |f| f[k]);
                    let gs = (st.neighbours(vals, k) - fk) / (st.diag + ck);
                    vals[k] += omega * (gs - vals[k]);
                });
            }
        }
        iterations += CHECK_EVERY;
        residual = screened_residual(&st, u.values(), cv, fv);
        if residual < 0.5 * best {
            (best, best_at) = (residual, iterations);
        }
        threshold = (cfg.tol * scale).max(floor(&u));
    }
    let stats = SolveStats {
        iterations,
        residual: residual / scale,
    };
    if residual > threshold {
        return Err(SolveError::NotConverged {
            iterations,
            residual: stats.residual,
        });
    }
    Ok((u, stats))
}

/// Solves `Δu - c u = f` with Dirichlet data from a blended initial guess.
pub fn screened_solve(
    c: &ScalarField,
    f: &ScalarField,
    data: &BoundaryValues,
    cfg: &LinearSolveConfig,
) -> Result<ScalarField, SolveError> {
    screened_solve_from(blended_guess(data), Some(c), Some(f), data, cfg).map(|(u, _)| u)
}

/// Discrete harmonic extension of Dirichlet data.
pub fn harmonic_extend(data: &BoundaryValues, cfg: &LinearSolveConfig) -> Result<ScalarField, SolveError> {
    harmonic_extend_with_stats(data, cfg).map(|(u, _)| u)
}

pub fn harmonic_extend_with_stats(
    data: &BoundaryValues,
    cfg: &LinearSolveConfig,
) -> Result<(ScalarField, SolveStats), SolveError> {
    screened_solve_from(blended_guess(data), None, None, data, cfg)
}

/// Harmonic extensions of the pairwise trace differences `phi_i - phi_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTriple {
    pub h12: ScalarField,
    pub h13: ScalarField,
    pub h23: ScalarField,
}

impl HarmonicTriple {
    /// `max |h13 - (h12 + h23)|` over all nodes.
    pub fn cocycle_residual(&self) -> f64 {
        self.h13
            .values()
            .iter()
            .zip(self.h12.values())
            .zip(self.h23.values())
            .fold(0.0, |m, ((a, b), c)| m.max((a - (b + c)).abs()))
    }

    pub fn grid(&self) -> &Grid {
        self.h12.grid()
    }

    /// `h_ij` for 1-based `i != j`, with `h_ji = -h_ij`.
    pub fn get(&self, i: usize, j: usize) -> ScalarField {
        let neg = |f: &ScalarField| {
            ScalarField::from_values(f.grid(), f.values().iter().map(|v| -v).collect())
                .expect("negation keeps values finite")
        };
        match (i, j) {
            (1, 2) => self.h12.clone(),
            (1, 3) => self.h13.clone(),
            (2, 3) => self.h23.clone(),
            (2, 1) => neg(&self.h12),
            (3, 1) => neg(&self.h13),
            (3, 2) => neg(&self.h23),
            _ => panic!("harmonic difference index ({i}, {j}) out of range"),
        }
    }
}

/// Harmonic extensions `h_i` of the three traces.
pub fn harmonic_components(
    spec: &BoundarySpec,
    grid: &Grid,
    cfg: &LinearSolveConfig,
) -> Result<[ScalarField; 3], SolveError> {
    let data = spec.sample(grid)?;
    Ok([
        harmonic_extend(&data[0], cfg)?,
        harmonic_extend(&data[1], cfg)?,
        harmonic_extend(&data[2], cfg)?,
    ])
}

/// Harmonic differences from sampled traces. Each `h_ij` is an independent
/// solve, so the cocycle identity holds to solver tolerance only.
pub fn harmonic_differences_from(
    data: &[BoundaryValues; 3],
    cfg: &LinearSolveConfig,
) -> Result<HarmonicTriple, SolveError> {
    let diff = |i: usize, j: usize| data[i].combine(1.0, &data[j], -1.0);
    Ok(HarmonicTriple {
        h12: harmonic_extend(&diff(0, 1)?, cfg)?,
        h13: harmonic_extend(&diff(0, 2)?, cfg)?,
        h23: harmonic_extend(&diff(1, 2)?, cfg)?,
    })
}

pub fn harmonic_differences(
    spec: &BoundarySpec,
    grid: &Grid,
    cfg: &LinearSolveConfig,
) -> Result<HarmonicTriple, SolveError> {
    harmonic_differences_from(&spec.sample(grid)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LinearSolveConfig {
        LinearSolveConfig::default()
    }

    #[test]
    fn constants_are_harmonic() {
        let g = Grid::square(21).unwrap();
        let u = harmonic_extend(&BoundaryValues::from_fn(&g, |_, _| 2.5), &cfg()).unwrap();
        assert!(u.values().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn linear_in_1d() {
        let g = Grid::line(0.0, 1.0, 51).unwrap();
        let u = harmonic_extend(&BoundaryValues::from_fn(&g, |x, _| 1.0 - x), &cfg()).unwrap();
        for k in 0..g.len() {
            assert!((u[k] - (1.0 - g.coords(k)[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_is_reproduced() {
        let g = Grid::square(101).unwrap();
        let data = BoundaryValues::from_fn(&g, |x, y| x * x - y * y);
        let u = harmonic_extend(&data, &cfg()).unwrap();
        let exact = ScalarField::from_fn(&g, |x, y| x * x - y * y);
        assert!(u.max_abs_diff(&exact).unwrap() < 1e-3);
    }

    #[test]
    fn residual_and_boundary_postconditions() {
        let g = Grid::square(41).unwrap();
        let data = BoundaryValues::from_fn(&g, |x, y| (3.0 * x).sin() * y.exp());
        let u = harmonic_extend(&data, &cfg()).unwrap();
        let scale = data.max_abs();
        for k in g.interior_nodes() {
            assert!(u.laplacian_at(k).abs() <= 1e-10 * scale);
        }
        for (k, v) in data.iter() {
            assert_eq!(u[k], v);
        }
        let (lo, hi) = (data.min(), data.max());
        assert!(u.values().iter().all(|&v| v >= lo - 1e-14 && v <= hi + 1e-14));
    }

    #[test]
    fn screened_with_zero_coefficient_is_harmonic() {
        let g = Grid::square(31).unwrap();
        let data = BoundaryValues::from_fn(&g, |x, y| x + 0.5 * y * y);
        let zero = ScalarField::zeros(&g);
        let a = screened_solve(&zero, &zero, &data, &cfg()).unwrap();
        let b = harmonic_extend(&data, &cfg()).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn screened_source_problem_1d() {
        // u'' - u = -1 on [0,1], u(0) = u(1) = 0
        let exact = |x: f64| 1.0 - (x - 0.5).cosh() / 0.5_f64.cosh();
        let mut errors = Vec::new();
        for n in [51, 101] {
            let g = Grid::line(0.0, 1.0, n).unwrap();
            let u = screened_solve(
                &ScalarField::constant(&g, 1.0),
                &ScalarField::constant(&g, -1.0),
                &BoundaryValues::from_fn(&g, |_, _| 0.0),
                &cfg(),
            )
            .unwrap();
            let err = (0..g.len())
                .map(|k| (u[k] - exact(g.coords(k)[0])).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        assert!(errors[0] < 1e-4);
        // second order
        assert!(errors[0] / errors[1] > 3.5, "{errors:?}");
    }

    #[test]
    fn stiff_screening_matches_discrete_closed_form() {
        // u_{k-1} - (2 + c h^2) u_k + u_{k+1} = 0, u_0 = u_N = 1 is solved by
        // (l^k + l^(N-k)) / (1 + l^N) with l the root of l^2 - (2 + c h^2) l + 1 = 0 below 1
        let n = 101;
        let g = Grid::line(0.0, 1.0, n).unwrap();
        let cells = (n - 1) as i32;
        for c in [1e2, 1e6, 1e10] {
            let u = screened_solve(
                &ScalarField::constant(&g, c),
                &ScalarField::zeros(&g),
                &BoundaryValues::from_fn(&g, |_, _| 1.0),
                &cfg(),
            )
            .unwrap();
            let b = 2.0 + c * g.hx() * g.hx();
            let l = 2.0 / (b + (b * b - 4.0).sqrt());
            for k in 0..n {
                let kk = k as i32;
                let exact = (l.powi(kk) + l.powi(cells - kk)) / (1.0 + l.powi(cells));
                assert!((u[k] - exact).abs() < 1e-12, "c={c} k={k}: {} vs {exact}", u[k]);
            }
            if c == 1e10 {
                // one node in, the layer has already decayed by c h^2
                assert!(u[1] < 2e-6 && u[50] < 1e-12);
            }
        }
    }

    #[test]
    fn resolved_screening_matches_cosh() {
        // u'' = c u, u(0) = u(1) = 1  =>  u = cosh(sqrt(c)(x - 1/2)) / cosh(sqrt(c)/2)
        let c: f64 = 400.0;
        let g = Grid::line(0.0, 1.0, 401).unwrap();
        let u = screened_solve(
            &ScalarField::constant(&g, c),
            &ScalarField::zeros(&g),
            &BoundaryValues::from_fn(&g, |_, _| 1.0),
            &cfg(),
        )
        .unwrap();
        let s = c.sqrt();
        for k in 0..g.len() {
            let x = g.coords(k)[0];
            let exact = (s * (x - 0.5)).cosh() / (s / 2.0).cosh();
            assert!((u[k] - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_negative_coefficient_and_bad_omega() {
        let g = Grid::square(9).unwrap();
        let mut c = ScalarField::zeros(&g);
        c[40] = -1.0;
        let data = BoundaryValues::from_fn(&g, |_, _| 1.0);
        assert!(matches!(
            screened_solve(&c, &ScalarField::zeros(&g), &data, &cfg()),
            Err(SolveError::NegativeCoefficient { node: 40, .. })
        ));
        let bad = LinearSolveConfig {
            omega: Some(2.0),
            ..cfg()
        };
        assert!(harmonic_extend(&data, &bad).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let g = Grid::square(61).unwrap();
        let data = BoundaryValues::from_fn(&g, |x, y| (4.0 * x).sin() * y);
        let tight = LinearSolveConfig {
            max_iter: 16,
            ..cfg()
        };
        match harmonic_extend(&data, &tight) {
            Err(SolveError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 16);
                assert!(residual > 1e-10);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn blend_matches_bilinear_data() {
        let g = Grid::rect((0.0, 2.0), (-1.0, 1.0), 9, 7).unwrap();
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * y;
        let u = blended_guess(&BoundaryValues::from_fn(&g, f));
        for k in 0..g.len() {
            let [x, y] = g.coords(k);
            assert!((u[k] - f(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn example_line_differences() {
        let g = Grid::line(0.0, 1.0, 11).unwrap();
        let spec = crate::systems::line_example_spec();
        let h = harmonic_differences(&spec, &g, &cfg()).unwrap();
        for k in 0..g.len() {
            let x = g.coords(k)[0];
            assert!((h.h12[k] - (1.0 - 2.0 * x)).abs() < 1e-12);
            assert!((h.h13[k] + x).abs() < 1e-12);
            assert!((h.h23[k] - (x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_traces_give_zero_difference() {
        let g = Grid::square(15).unwrap();
        let spec = BoundarySpec::from_fns("twins", |x, _| x.max(0.0), |x, _| x.max(0.0), |_, _| 0.0);
        let h = harmonic_differences(&spec, &g, &cfg()).unwrap();
        assert_eq!(h.h12.max_abs(), 0.0);
    }
}

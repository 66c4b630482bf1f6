//! Penalized three-component segregation systems.
//!
//! * System A: `Δu_i = (1/ε) u_1 u_2 u_3`
//! * System B: `Δu_i = (u_i/ε) Π_{j≠i} u_j²`, the Euler-Lagrange equation of
//!   `E_ε(u) = Σ ∫|∇u_i|² + (1/ε) ∫ (u_1 u_2 u_3)²`
//!
//! Both are written in screened form `Δu_i - c_i u_i = 0` with `c_i >= 0`
//! computed from the other two components, and solved by ε-continuation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{
    harmonic_extend, screened_solve_from, HarmonicTriple, LinearSolveConfig, SolveError, Stencil,
};
use crate::grid::{BoundarySpec, BoundaryValues, Edge, Grid, GridError, ScalarField, TraceError};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("continuation stalled at epsilon = {epsilon:e} (stage {stage}): {iters} outer iterations, last update {update:e}")]
    NotConverged {
        epsilon: f64,
        stage: usize,
        iters: usize,
        update: f64,
    },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum System {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemTag {
    A,
    B,
    LimitA,
}

impl From<System> for SystemTag {
    fn from(s: System) -> Self {
        match s {
            System::A => SystemTag::A,
            System::B => SystemTag::B,
        }
    }
}

/// Geometric ε schedule `start, start·ratio, …` ending exactly at the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub start: f64,
    pub ratio: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation {
            start: 1e-2,
            ratio: 0.1,
        }
    }
}

/// How each outer iteration updates the three components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// `Reduced` for System A, `Nodal` for System B.
    Auto,
    /// One projected SOR sweep per outer iteration; at each node the three
    /// components are relaxed in turn with the coupling frozen at the latest
    /// values of the other two.
    Nodal,
    /// Component-wise Gauss-Seidel: each component gets a full linear screened
    /// solve with the coefficient frozen from the latest iterates.
    Block,
    /// System A only. The differences `u_i - u_j` of a System A solution are
    /// discrete harmonic, so `u_2 = u_1 - h12` and `u_3 = u_1 - h13`; the
    /// remaining scalar problem `Δu_1 = (1/ε) u_1 (u_1 - h12)(u_1 - h13)` over
    /// `u_1 >= max(0, h12, h13)` is convex and is relaxed by projected
    /// Newton-SOR.
    Reduced,
}

impl Scheme {
    pub fn resolve(self, system: System) -> Scheme {
        match (self, system) {
            (Scheme::Auto, System::A) => Scheme::Reduced,
            (Scheme::Auto, System::B) => Scheme::Nodal,
            (other, _) => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSolveConfig {
    pub epsilon: f64,
    pub continuation: Continuation,
    /// Stop once the largest node update of an outer iteration falls below this.
    pub outer_tol: f64,
    pub outer_max: usize,
    pub inner: LinearSolveConfig,
    pub scheme: Scheme,
    /// Relaxation of the nodal scheme; `None` uses the Laplace-optimal factor.
    pub omega: Option<f64>,
    /// Record the discrete energy after every outer iteration.
    pub record_energy: bool,
}

impl Default for EpsSolveConfig {
    fn default() -> Self {
        EpsSolveConfig {
            epsilon: 1e-10,
            continuation: Continuation::default(),
            outer_tol: 1e-10,
            outer_max: 2_000_000,
            inner: LinearSolveConfig::default(),
            scheme: Scheme::Auto,
            omega: None,
            record_energy: false,
        }
    }
}

impl EpsSolveConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        EpsSolveConfig {
            epsilon,
            ..Self::default()
        }
    }

    pub fn schedule(&self) -> Result<Vec<f64>, SystemError> {
        let Continuation { start, ratio } = self.continuation;
        if !(self.epsilon > 0.0) {
            return Err(SystemError::BadConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) || !(start > 0.0) {
            return Err(SystemError::BadConfig(format!(
                "continuation needs start > 0 and ratio in (0, 1), got start {start}, ratio {ratio}"
            )));
        }
        let mut out = Vec::new();
        let mut e = start;
        while e > self.epsilon * (1.0 + 1e-9) {
            out.push(e);
            e *= ratio;
        }
        out.push(self.epsilon);
        Ok(out)
    }
}

/// Outcome of one ε stage of the continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub epsilon: f64,
    pub iters: usize,
    pub final_update: f64,
    /// Largest scaled nonlinear residual relative to the boundary data.
    pub residual: f64,
    /// `∫ (u_1 u_2 u_3)²`
    pub product_l2: f64,
    /// Discrete energy after each outer iteration, if recorded.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub energy_trace: Vec<f64>,
}

/// An ordered solution triple with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleField {
    pub u: [ScalarField; 3],
    pub epsilon: f64,
    pub system: SystemTag,
    pub iters: usize,
    pub final_update: f64,
    pub stages: Vec<StageRecord>,
}

impl TripleField {
    pub fn grid(&self) -> &Grid {
        self.u[0].grid()
    }

    /// Node-wise product `u_1 u_2 u_3`.
    pub fn product(&self) -> ScalarField {
        let g = self.grid();
        let vals = (0..g.len())
            .map(|k| self.u[0][k] * self.u[1][k] * self.u[2][k])
            .collect();
        ScalarField::from_values(g, vals).expect("product of finite fields")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `Σ_i ∫ |∇u_i|²`
    pub dirichlet: f64,
    /// `(1/ε) ∫ (Π u_j)²`
    pub penalty: f64,
    pub total: f64,
    /// `∫ (Π u_j)²`
    pub product_l2: f64,
}

/// Trapezoid weight of a node.
fn node_weight(grid: &Grid, idx: usize) -> f64 {
    let (i, j) = grid.ij(idx);
    let end = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
    let mut w = end(i, grid.nx()) * grid.hx();
    if grid.dim() == 2 {
        w *= end(j, grid.ny()) * grid.hy();
    }
    w
}

/// `∫ |∇u|²` from edge differences; edges lying on the boundary carry half
/// weight. This is the quadratic form of the five-point Laplacian.
pub fn dirichlet_integral(u: &ScalarField) -> f64 {
    let g = u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let v = u.values();
    if g.dim() == 1 {
        return (0..nx - 1).map(|i| (v[i + 1] - v[i]).powi(2) / hx).sum();
    }
    let mut total = 0.0;
    for j in 0..ny {
        let wy = if j == 0 || j + 1 == ny { 0.5 } else { 1.0 };
        for i in 0..nx - 1 {
            let k = g.index(i, j);
            total += wy * (v[k + 1] - v[k]).powi(2) * hy / hx;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let wx = if i == 0 || i + 1 == nx { 0.5 } else { 1.0 };
            let k = g.index(i, j);
            total += wx * (v[k + nx] - v[k]).powi(2) * hx / hy;
        }
    }
    total
}

/// Trapezoid-rule integral of a nodal function.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    (0..g.len()).map(|k| node_weight(g, k) * f[k]).sum()
}

/// `∫ (u_1 u_2 u_3)²` by the trapezoid rule.
pub fn product_l2(u: &[ScalarField; 3]) -> f64 {
    let g = u[0].grid();
    (0..g.len())
        .map(|k| node_weight(g, k) * (u[0][k] * u[1][k] * u[2][k]).powi(2))
        .sum()
}

/// The penalized energy of a triple.
pub fn energy_of(u: &[ScalarField; 3], epsilon: f64) -> Result<EnergyReport, GridError> {
    u[0].check_same_grid(&u[1])?;
    u[0].check_same_grid(&u[2])?;
    let dirichlet = u.iter().map(dirichlet_integral).sum();
    let product = product_l2(u);
    let penalty = if product == 0.0 { 0.0 } else { product / epsilon };
    Ok(EnergyReport {
        dirichlet,
        penalty,
        total: dirichlet + penalty,
        product_l2: product,
    })
}

pub fn energy(t: &TripleField, epsilon: f64) -> Result<EnergyReport, GridError> {
    energy_of(&t.u, epsilon)
}

#[inline(always)]
fn others(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

#[inline(always)]
fn coupling(system: System, a: f64, b: f64, inv_eps: f64) -> f64 {
    match system {
        System::A => a * b * inv_eps,
        System::B => (a * b) * (a * b) * inv_eps,
    }
}

/// One red-black projected SOR sweep over all three components. Returns the
/// largest node update.
fn nodal_sweep(st: &Stencil, u: &mut [Vec<f64>; 3], system: System, inv_eps: f64, omega: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for colour in 0..2 {
        st.for_colour(colour, |k| {
            for i in 0..3 {
                let (j, l) = others(i);
                let c = coupling(system, u[j][k], u[l][k], inv_eps);
                let gs = st.neighbours(&u[i], k) / (st.diag + c);
                let old = u[i][k];
                let new = (old + omega * (gs - old)).max(0.0);
                u[i][k] = new;
                worst = worst.max((new - old).abs());
            }
        });
    }
    worst
}

/// Largest scaled nonlinear residual `|Δu_i - c_i u_i| · D / (D + c_i)`.
fn nonlinear_residual(st: &Stencil, u: &[Vec<f64>; 3], system: System, inv_eps: f64) -> f64 {
    let mut worst: f64 = 0.0;
    st.for_interior(|k| {
        for i in 0..3 {
            let (j, l) = others(i);
            let c = coupling(system, u[j][k], u[l][k], inv_eps);
            let r = st.neighbours(&u[i], k) - (st.diag + c) * u[i][k];
            worst = worst.max((r * st.diag / (st.diag + c)).abs());
        }
    });
    worst
}

fn coupling_field(system: System, u: &[Vec<f64>; 3], i: usize, inv_eps: f64, grid: &Grid) -> ScalarField {
    let (j, l) = others(i);
    let vals = (0..grid.len())
        .map(|k| {
            if grid.is_boundary(k) {
                0.0
            } else {
                coupling(system, u[j][k], u[l][k], inv_eps)
            }
        })
        .collect();
    ScalarField::from_values(grid, vals).expect("coupling is finite")
}

fn to_fields(grid: &Grid, u: [Vec<f64>; 3]) -> [ScalarField; 3] {
    u.map(|v| ScalarField::from_values(grid, v).expect("iterates stay finite"))
}

/// Solves one system by ε-continuation, starting from the harmonic
/// extensions of the traces.
pub fn solve_system(
    system: System,
    spec: &BoundarySpec,
    grid: &Grid,
    cfg: &EpsSolveConfig,
) -> Result<TripleField, SystemError> {
    let data = spec.sample(grid)?;
    let h = [
        harmonic_extend(&data[0], &cfg.inner)?,
        harmonic_extend(&data[1], &cfg.inner)?,
        harmonic_extend(&data[2], &cfg.inner)?,
    ];
    solve_system_from(system, &data, h, cfg)
}

/// Projected Newton-SOR sweep of the reduced System A problem. `lower` is
/// `max(0, h12, h13)`.
fn reduced_sweep(
    st: &Stencil,
    w: &mut [f64],
    h12: &[f64],
    h13: &[f64],
    lower: &[f64],
    inv_eps: f64,
    omega: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for colour in 0..2 {
        st.for_colour(colour, |k| {
            let old = w[k];
            let (p, q) = (old - h12[k], old - h13[k]);
            let g = st.diag * old - st.neighbours(w, k) + old * p * q * inv_eps;
            let dg = st.diag + (p * q + old * q + old * p) * inv_eps;
            let new = (old - omega * g / dg).max(lower[k]);
            w[k] = new;
            worst = worst.max((new - old).abs());
        });
    }
    worst
}

/// Iterate state of one continuation run.
enum Iterate {
    Components([Vec<f64>; 3]),
    Reduced {
        w: Vec<f64>,
        h12: Vec<f64>,
        h13: Vec<f64>,
        lower: Vec<f64>,
    },
}

impl Iterate {
    fn components(&self, data: &[BoundaryValues; 3]) -> [Vec<f64>; 3] {
        match self {
            Iterate::Components(u) => u.clone(),
            Iterate::Reduced { w, h12, h13, .. } => {
                let mut u = [
                    w.clone(),
                    w.iter().zip(h12).map(|(a, b)| a - b).collect(),
                    w.iter().zip(h13).map(|(a, b)| a - b).collect(),
                ];
                for (c, d) in data.iter().enumerate() {
                    for (k, v) in d.iter() {
                        u[c][k] = v;
                    }
                }
                u
            }
        }
    }
}

/// Relaxation factor control: halve the over-relaxation whenever a window of
/// sweeps fails to halve the update.
struct OmegaControl {
    omega: f64,
    window_start: f64,
    count: usize,
}

impl OmegaControl {
    const WINDOW: usize = 512;

    fn new(omega: f64) -> Self {
        OmegaControl {
            omega,
            window_start: f64::INFINITY,
            count: 0,
        }
    }

    fn observe(&mut self, update: f64) {
        self.count += 1;
        if self.count == 1 {
            self.window_start = update;
        }
        if self.count == Self::WINDOW {
            if update > 0.5 * self.window_start && self.omega > 1.0 {
                self.omega = 1.0 + 0.5 * (self.omega - 1.0);
            }
            self.count = 0;
        }
    }
}

/// ε-continuation from a given initial triple (which must carry the
/// boundary data).
pub fn solve_system_from(
    system: System,
    data: &[BoundaryValues; 3],
    initial: [ScalarField; 3],
    cfg: &EpsSolveConfig,
) -> Result<TripleField, SystemError> {
    let schedule = cfg.schedule()?;
    if !(cfg.outer_tol > 0.0) {
        return Err(SystemError::BadConfig("outer_tol must be > 0".into()));
    }
    cfg.inner.validate()?;
    let scheme = cfg.scheme.resolve(system);
    if scheme == Scheme::Reduced && system != System::A {
        return Err(SystemError::BadConfig(
            "the reduced scheme applies to System A only".into(),
        ));
    }
    let grid = *data[0].grid();
    let st = Stencil::new(&grid);
    let omega = cfg.omega.unwrap_or_else(|| crate::elliptic::optimal_omega(&grid));
    if !(omega > 0.0 && omega < 2.0) {
        return Err(SystemError::BadConfig(format!("omega must lie in (0, 2), got {omega}")));
    }
    let scale = data.iter().map(|d| d.max_abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut u: [Vec<f64>; 3] = initial.map(|f| f.into_values());
    for (c, d) in data.iter().enumerate() {
        for (k, v) in d.iter() {
            u[c][k] = v;
        }
    }
    let mut state = if scheme == Scheme::Reduced {
        let h12 = harmonic_extend(&data[0].combine(1.0, &data[1], -1.0)?, &cfg.inner)?.into_values();
        let h13 = harmonic_extend(&data[0].combine(1.0, &data[2], -1.0)?, &cfg.inner)?.into_values();
        let lower: Vec<f64> = h12.iter().zip(&h13).map(|(a, b)| a.max(*b).max(0.0)).collect();
        let [mut w, _, _] = u;
        for (k, v) in w.iter_mut().enumerate() {
            if !grid.is_boundary(k) {
                *v = v.max(lower[k]);
            }
        }
        Iterate::Reduced { w, h12, h13, lower }
    } else {
        Iterate::Components(u)
    };

    let mut stages = Vec::with_capacity(schedule.len());
    let mut total_iters = 0;
    let mut last_update = 0.0;
    for (stage, &eps) in schedule.iter().enumerate() {
        let inv_eps = 1.0 / eps;
        let mut iters = 0;
        let mut energy_trace = Vec::new();
        let mut control = OmegaControl::new(omega);
        let mut update;
        loop {
            update = match (&mut state, scheme) {
                (Iterate::Reduced { w, h12, h13, lower }, _) => {
                    reduced_sweep(&st, w, h12, h13, lower, inv_eps, control.omega)
                }
                (Iterate::Components(u), Scheme::Block) => {
                    let mut worst: f64 = 0.0;
                    for i in 0..3 {
                        let c = coupling_field(system, u, i, inv_eps, &grid);
                        let start = ScalarField::from_values(&grid, u[i].clone())?;
                        let (next, _) = screened_solve_from(start, Some(&c), None, &data[i], &cfg.inner)?;
                        let next = next.into_values();
                        for (a, b) in u[i].iter().zip(&next) {
                            worst = worst.max((a - b).abs());
                        }
                        u[i] = next;
                    }
                    worst
                }
                (Iterate::Components(u), _) => nodal_sweep(&st, u, system, inv_eps, control.omega),
            };
            iters += 1;
            control.observe(update);
            if cfg.record_energy {
                let fields = to_fields(&grid, state.components(data));
                energy_trace.push(energy_of(&fields, eps)?.total);
            }
            if update < cfg.outer_tol {
                break;
            }
            if iters >= cfg.outer_max || !update.is_finite() {
                return Err(SystemError::NotConverged {
                    epsilon: eps,
                    stage,
                    iters,
                    update,
                });
            }
        }
        total_iters += iters;
        last_update = update;
        let comps = state.components(data);
        let residual = nonlinear_residual(&st, &comps, system, inv_eps) / scale;
        let fields = to_fields(&grid, comps);
        stages.push(StageRecord {
            epsilon: eps,
            iters,
            final_update: update,
            residual,
            product_l2: product_l2(&fields),
            energy_trace,
        });
    }

    Ok(TripleField {
        u: to_fields(&grid, state.components(data)),
        epsilon: cfg.epsilon,
        system: system.into(),
        iters: total_iters,
        final_update: last_update,
        stages,
    })
}

pub fn solve_system_a(spec: &BoundarySpec, grid: &Grid, cfg: &EpsSolveConfig) -> Result<TripleField, SystemError> {
    solve_system(System::A, spec, grid, cfg)
}

pub fn solve_system_b(spec: &BoundarySpec, grid: &Grid, cfg: &EpsSolveConfig) -> Result<TripleField, SystemError> {
    solve_system(System::B, spec, grid, cfg)
}

/// The closed-form ε → 0 limit of System A:
/// `u_1 = max(h12, h13, 0)`, `u_2 = u_1 - h12`, `u_3 = u_1 - h13`.
pub fn limit_a_explicit(h: &HarmonicTriple) -> TripleField {
    let g = *h.grid();
    let n = g.len();
    let mut u1 = Vec::with_capacity(n);
    let mut u2 = Vec::with_capacity(n);
    let mut u3 = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b) = (h.h12[k], h.h13[k]);
        let first = a.max(b).max(0.0);
        u1.push(first);
        u2.push(first - a);
        u3.push(first - b);
    }
    let field = |v| ScalarField::from_values(&g, v).expect("finite harmonic differences");
    TripleField {
        u: [field(u1), field(u2), field(u3)],
        epsilon: 0.0,
        system: SystemTag::LimitA,
        iters: 0,
        final_update: 0.0,
        stages: Vec::new(),
    }
}

/// Traces of the one-dimensional example on `[0, 1]`:
/// `phi_1 = (1, 0)`, `phi_2 = (0, 1)`, `phi_3 = (1, 1)` at `x = 0` and `x = 1`.
pub fn line_example_spec() -> BoundarySpec {
    use std::sync::Arc;
    let at = |left: f64, right: f64| -> crate::grid::TraceFn {
        Arc::new(move |e, _, _| if e == Edge::Left { left } else { right })
    };
    BoundarySpec::new("line", [at(1.0, 0.0), at(0.0, 1.0), at(1.0, 1.0)])
}

/// Exact limits of the one-dimensional example on `n` nodes of `[0, 1]`:
/// `(System A limit, System B limit)`.
pub fn line_example(n: usize) -> Result<(TripleField, TripleField), GridError> {
    let g = Grid::line(0.0, 1.0, n)?;
    let f = |fun: fn(f64) -> f64| ScalarField::from_fn(&g, move |x, _| fun(x));
    let u1 = f(|x| (1.0 - 2.0 * x).max(0.0));
    let u2 = f(|x| (2.0 * x - 1.0).max(0.0));
    let triple = |u3: ScalarField, system| TripleField {
        u: [u1.clone(), u2.clone(), u3],
        epsilon: 0.0,
        system,
        iters: 0,
        final_update: 0.0,
        stages: Vec::new(),
    };
    Ok((
        triple(f(|x| (1.0 - x).max(x)), SystemTag::LimitA),
        triple(f(|_| 1.0), SystemTag::B),
    ))
}

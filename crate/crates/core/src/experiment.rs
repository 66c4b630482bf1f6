//! End-to-end runs: harmonic extensions, ε-solves, predicted partition,
//! interface extraction and comparison, with all artifacts written to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bc_catalog::{self, CatalogError};
use crate::elliptic::{harmonic_differences_from, harmonic_extend, HarmonicTriple, LinearSolveConfig, SolveError};
use crate::grid::{BoundarySpec, BoundaryValues, Grid, GridError, TraceError};
use crate::interface_lab::{self, compare, diagnostics, extract_interfaces, predicted_interfaces, ComparisonMetrics, Diagnostics, InterfaceSet, Source};
use crate::io::{self, IoError};
use crate::partition::{self, PairTransversality, PartitionMap, TriplePoint};
use crate::systems::{
    energy, limit_a_explicit, line_example, line_example_spec, solve_system_from, EnergyReport, EpsSolveConfig, StageRecord, System, SystemError,
    SystemTag, TripleField,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Nodal values below this count as negative.
pub const NONNEGATIVITY_TOL: f64 = 1e-12;
/// Allowed excess over the harmonic extension.
pub const SANDWICH_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("boundary data violates an invariant: {0}")]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("harmonic extension failed: {0}")]
    Harmonic(#[from] SolveError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Io(_) => 4,
            ExperimentError::Harmonic(_) => 3,
            _ => 2,
        }
    }
}

/// Boundary data of a run: a catalog entry, the one-dimensional example, or
/// a custom JSON spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BcRef {
    Catalog(u32),
    Named(String),
}

impl BcRef {
    pub const LINE: &'static str = "line";

    pub fn parse(s: &str) -> BcRef {
        match s.trim().parse::<u32>() {
            Ok(id) => BcRef::Catalog(id),
            Err(_) => BcRef::Named(s.trim().to_string()),
        }
    }

    pub fn is_line(&self) -> bool {
        matches!(self, BcRef::Named(s) if s == Self::LINE)
    }

    /// Short name used for output directories.
    pub fn slug(&self) -> String {
        match self {
            BcRef::Catalog(id) => format!("bc{id}"),
            BcRef::Named(s) if s == Self::LINE => "line".to_string(),
            BcRef::Named(s) => Path::new(s)
                .file_stem()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Request {
    A,
    B,
    Limit,
    Predicted,
}

impl Request {
    pub fn parse(s: &str) -> Result<Request, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Request::A),
            "b" => Ok(Request::B),
            "limit" => Ok(Request::Limit),
            "predicted" => Ok(Request::Predicted),
            other => Err(format!("unknown system '{other}' (expected a, b, limit, predicted)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub bc: BcRef,
    /// Nodes per axis.
    pub n: usize,
    pub epsilon: f64,
    /// Interface threshold; `None` means `sqrt(epsilon)`.
    pub delta: Option<f64>,
    pub systems: Vec<Request>,
    /// Output directory; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub tool_version: String,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            bc: BcRef::Catalog(1),
            n: 201,
            epsilon: 1e-10,
            delta: None,
            systems: vec![Request::A, Request::B, Request::Predicted],
            out: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

impl RunManifest {
    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.epsilon.sqrt())
    }

    pub fn wants(&self, r: Request) -> bool {
        self.systems.contains(&r)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Manifest(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta() > 0.0 && self.delta().is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta()));
        }
        if self.n < 3 {
            return bad(format!("need at least 3 nodes per axis, got {}", self.n));
        }
        if self.systems.is_empty() {
            return bad("no systems requested".to_string());
        }
        Ok(())
    }

    fn resolve(&self) -> Result<(BoundarySpec, Grid), ExperimentError> {
        if self.bc.is_line() {
            return Ok((line_example_spec(), Grid::line(0.0, 1.0, self.n)?));
        }
        let spec = match &self.bc {
            BcRef::Catalog(id) => bc_catalog::get_bc(*id)?,
            BcRef::Named(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| IoError::File {
                    path: PathBuf::from(path),
                    source,
                })?;
                bc_catalog::load_custom(&text)?
            }
        };
        Ok((spec, Grid::square(self.n)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InvariantFailure,
    ConvergenceFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InvariantFailure => 2,
            Status::ConvergenceFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub labels: Vec<LabelCount>,
    /// Number of polylines of `h12`, `h13`, `h23`.
    pub contours: [usize; 3],
    pub triple_points: Vec<TriplePoint>,
    pub transversality: Vec<PairTransversality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: SystemTag,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub iters: usize,
    pub final_update: f64,
    pub stages: Vec<StageRecord>,
    pub energy: Option<EnergyReport>,
    pub diagnostics: Option<Diagnostics>,
    pub nonnegative: bool,
    pub boundary_exact: bool,
    /// `u_i <= h_i + 1e-10` node-wise.
    pub sandwich: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub component: usize,
    pub a: Source,
    pub b: Source,
    pub points: [usize; 2],
    pub metrics: ComparisonMetrics,
    pub within_tolerance: bool,
}

/// Sup-norm errors against the closed-form limits of the line example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineOracle {
    pub sup_error_a: Option<[f64; 3]>,
    pub sup_error_b: Option<[f64; 3]>,
    /// `sup |u_3^A - u_3^B|`
    pub u3_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub manifest: RunManifest,
    pub label: String,
    pub grid: GridInfo,
    pub delta: f64,
    /// Interface agreement threshold, two grid spacings.
    pub interface_tolerance: f64,
    pub cocycle_residual: f64,
    pub partition: Option<PartitionSummary>,
    pub systems: Vec<SystemReport>,
    pub comparisons: Vec<ComparisonRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub line_oracle: Option<LineOracle>,
    pub status: Status,
}

impl RunReport {
    pub fn system(&self, tag: SystemTag) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.system == tag)
    }

    pub fn comparison(&self, component: usize, a: Source, b: Source) -> Option<&ComparisonRow> {
        self.comparisons
            .iter()
            .find(|c| c.component == component && ((c.a, c.b) == (a, b) || (c.a, c.b) == (b, a)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything a run computed, for callers that want the fields.
pub struct RunOutput {
    pub report: RunReport,
    pub h: HarmonicTriple,
    pub partition: Option<PartitionMap>,
    pub triples: Vec<TripleField>,
    pub interfaces: Vec<[InterfaceSet; 3]>,
}

/// Boundary nodes carry the sampled traces. Solves imprint them exactly; the
/// explicit limit rebuilds them from `h_ij`, so it gets a few ulps.
fn boundary_exact(t: &TripleField, data: &[BoundaryValues; 3]) -> bool {
    let slack = if t.system == SystemTag::LimitA { 1e-12 } else { 0.0 };
    (0..3).all(|c| data[c].iter().all(|(k, v)| (t.u[c][k] - v).abs() <= slack * v.abs().max(1.0)))
}

fn assess(t: &TripleField, data: &[BoundaryValues; 3], h_i: &[crate::ScalarField; 3], h: &HarmonicTriple, eps: f64) -> SystemReport {
    let diag = diagnostics(t, h_i, h, eps).expect("fields share the run grid");
    let energy_eps = if t.epsilon > 0.0 { t.epsilon } else { f64::INFINITY };
    SystemReport {
        system: t.system,
        converged: true,
        error: None,
        iters: t.iters,
        final_update: t.final_update,
        stages: t.stages.clone(),
        energy: energy(t, energy_eps).ok(),
        nonnegative: diag.min_value >= -NONNEGATIVITY_TOL,
        boundary_exact: boundary_exact(t, data),
        sandwich: diag.upper_excess <= SANDWICH_TOL,
        diagnostics: Some(diag),
    }
}

fn failed(system: SystemTag, err: &SystemError) -> SystemReport {
    let (iters, final_update) = match err {
        SystemError::NotConverged { iters, update, .. } => (*iters, *update),
        _ => (0, f64::NAN),
    };
    SystemReport {
        system,
        converged: false,
        error: Some(err.to_string()),
        iters,
        final_update,
        stages: Vec::new(),
        energy: None,
        diagnostics: None,
        nonnegative: true,
        boundary_exact: true,
        sandwich: true,
    }
}

fn sup_errors(t: &TripleField, exact: &TripleField) -> [f64; 3] {
    std::array::from_fn(|c| t.u[c].max_abs_diff(&exact.u[c]).expect("same line grid"))
}

/// Runs one manifest and writes its artifacts when `out` is set.
pub fn run_experiment(manifest: &RunManifest) -> Result<RunOutput, ExperimentError> {
    manifest.validate()?;
    let (spec, grid) = manifest.resolve()?;
    let data = spec.sample(&grid)?;
    let lin = LinearSolveConfig::default();
    let h_i = [
        harmonic_extend(&data[0], &lin)?,
        harmonic_extend(&data[1], &lin)?,
        harmonic_extend(&data[2], &lin)?,
    ];
    let h = harmonic_differences_from(&data, &lin)?;
    let delta = manifest.delta();
    let tolerance = 2.0 * grid.h();

    let partition_map = manifest.wants(Request::Predicted).then(|| partition::predict(&h, 0.0));

    let cfg = EpsSolveConfig::with_epsilon(manifest.epsilon);
    let solve = |system: System| -> Option<Result<TripleField, SystemError>> {
        let r = match system {
            System::A => Request::A,
            System::B => Request::B,
        };
        manifest
            .wants(r)
            .then(|| solve_system_from(system, &data, h_i.clone(), &cfg))
    };
    let (sol_a, sol_b) = rayon::join(|| solve(System::A), || solve(System::B));

    let mut triples = Vec::new();
    let mut systems = Vec::new();
    for (tag, sol) in [(SystemTag::A, sol_a), (SystemTag::B, sol_b)] {
        match sol {
            Some(Ok(t)) => {
                systems.push(assess(&t, &data, &h_i, &h, manifest.epsilon));
                triples.push(t);
            }
            Some(Err(e)) => systems.push(failed(tag, &e)),
            None => {}
        }
    }
    if manifest.wants(Request::Limit) {
        let t = limit_a_explicit(&h);
        systems.push(assess(&t, &data, &h_i, &h, manifest.epsilon));
        triples.push(t);
    }

    let mut interfaces: Vec<[InterfaceSet; 3]> = triples
        .iter()
        .filter(|t| t.system != SystemTag::LimitA)
        .map(|t| extract_interfaces(t, delta))
        .collect();
    if manifest.wants(Request::Predicted) {
        interfaces.push(predicted_interfaces(&h, delta));
    }
    let mut comparisons = Vec::new();
    for c in 0..3 {
        for i in 0..interfaces.len() {
            for j in i + 1..interfaces.len() {
                let (a, b) = (&interfaces[i][c], &interfaces[j][c]);
                let metrics = compare(a, b).expect("same component and grid");
                comparisons.push(ComparisonRow {
                    component: c + 1,
                    a: a.source,
                    b: b.source,
                    points: [a.points.len(), b.points.len()],
                    within_tolerance: metrics.hausdorff <= tolerance,
                    metrics,
                });
            }
        }
    }

    let line_oracle = manifest.bc.is_line().then(|| {
        let (exact_a, exact_b) = line_example(manifest.n).expect("line grid was already built");
        let find = |tag| triples.iter().find(|t| t.system == tag);
        let (ta, tb) = (find(SystemTag::A), find(SystemTag::B));
        LineOracle {
            sup_error_a: ta.map(|t| sup_errors(t, &exact_a)),
            sup_error_b: tb.map(|t| sup_errors(t, &exact_b)),
            u3_gap: ta.zip(tb).map(|(a, b)| a.u[2].max_abs_diff(&b.u[2]).expect("same grid")),
        }
    });

    let status = if systems.iter().any(|s| !s.converged) {
        Status::ConvergenceFailure
    } else if systems.iter().any(|s| !s.nonnegative || !s.boundary_exact) {
        Status::InvariantFailure
    } else {
        Status::Ok
    };

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        manifest: manifest.clone(),
        label: spec.label().to_string(),
        grid: GridInfo {
            dim: grid.dim(),
            nx: grid.nx(),
            ny: grid.ny(),
            h: grid.h(),
        },
        delta,
        interface_tolerance: tolerance,
        cocycle_residual: h.cocycle_residual(),
        partition: partition_map.as_ref().map(|m| PartitionSummary {
            labels: interface_lab::label_histogram(&m.labels)
                .into_iter()
                .map(|(label, count)| LabelCount { label, count })
                .collect(),
            contours: [m.contours[0].len(), m.contours[1].len(), m.contours[2].len()],
            triple_points: m.triples.clone(),
            transversality: partition::transversality_report(&h),
        }),
        systems,
        comparisons,
        line_oracle,
        status,
    };

    let output = RunOutput {
        report,
        h,
        partition: partition_map,
        triples,
        interfaces,
    };
    if let Some(dir) = &manifest.out {
        write_artifacts(dir, &output)?;
    }
    Ok(output)
}

fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<(), IoError> {
    io::write_json(&dir.join("manifest.json"), &out.report.manifest)?;
    for (name, f) in [("h12", &out.h.h12), ("h13", &out.h.h13), ("h23", &out.h.h23)] {
        io::write_file(&dir.join(format!("{name}.csv")), io::matrix_csv(f))?;
    }
    if let Some(map) = &out.partition {
        io::write_file(&dir.join("labels.pgm"), io::labels_pgm(map))?;
        io::write_json(&dir.join("labels_palette.json"), &io::label_palette())?;
        io::write_file(&dir.join("contours.csv"), io::contours_csv(map))?;
        io::write_file(&dir.join("triple_points.csv"), io::triples_csv(map))?;
    }
    for t in &out.triples {
        let stem = match t.system {
            SystemTag::A => "sysA",
            SystemTag::B => "sysB",
            SystemTag::LimitA => "limitA",
        };
        io::dump_triple(dir, stem, t)?;
        for c in 0..3 {
            let (bytes, meta) = io::field_pgm(&t.u[c]);
            io::write_file(&dir.join(format!("{stem}_u{}.pgm", c + 1)), bytes)?;
            io::write_json(&dir.join(format!("{stem}_u{}.pgm.json", c + 1)), &meta)?;
        }
    }
    let sets: Vec<InterfaceSet> = out.interfaces.iter().flat_map(|s| s.iter().cloned()).collect();
    io::write_file(&dir.join("interfaces.csv"), io::interfaces_csv(&sets))?;
    io::write_file(&dir.join("report.json"), out.report.to_json())
}

/// Runs several manifests on a pool of `jobs` workers; results keep the
/// input order.
pub fn run_batch(manifests: &[RunManifest], jobs: usize) -> Vec<Result<RunReport, ExperimentError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        manifests
            .par_iter()
            .map(|m| run_experiment(m).map(|o| o.report))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Epsilon,
    N,
    Delta,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis, String> {
        match s.trim() {
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "n" => Ok(SweepAxis::N),
            "delta" => Ok(SweepAxis::Delta),
            other => Err(format!("unknown sweep axis '{other}' (expected epsilon, n, delta)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::N => "n",
            SweepAxis::Delta => "delta",
        }
    }
}

pub fn sweep_manifests(template: &RunManifest, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunManifest>, ExperimentError> {
    let ascending = values.windows(2).all(|w| w[0] <= w[1]);
    let descending = values.windows(2).all(|w| w[0] >= w[1]);
    if values.is_empty() || !(ascending || descending) {
        return Err(ExperimentError::Manifest(format!(
            "sweep values must be non-empty and sorted, got {values:?}"
        )));
    }
    values
        .iter()
        .map(|&v| {
            let mut m = template.clone();
            match axis {
                SweepAxis::Epsilon => m.epsilon = v,
                SweepAxis::Delta => m.delta = Some(v),
                SweepAxis::N => {
                    if v.fract() != 0.0 || v < 3.0 {
                        return Err(ExperimentError::Manifest(format!("grid size {v} is not an integer >= 3")));
                    }
                    m.n = v as usize;
                }
            }
            m.out = template.out.as_ref().map(|d| d.join(format!("{}_{}", axis.name(), v)));
            Ok(m)
        })
        .collect()
}

fn max_hausdorff(r: &RunReport, a: Source, b: Source) -> Option<f64> {
    let rows: Vec<f64> = (1..=3).filter_map(|c| r.comparison(c, a, b)).map(|c| c.metrics.hausdorff).collect();
    (!rows.is_empty()).then(|| rows.into_iter().fold(0.0, f64::max))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One CSV row per swept value. `penalty_nonincreasing` compares each
/// penalty integral with the previous row.
pub fn sweep_csv(axis: SweepAxis, values: &[f64], reports: &[RunReport]) -> String {
    let mut out = format!(
        "{},status,penalty_a,penalty_b,penalty_nonincreasing_a,penalty_nonincreasing_b,hausdorff_a_b,hausdorff_a_predicted,hausdorff_b_predicted\n",
        axis.name()
    );
    let penalty = |r: &RunReport, tag| {
        r.system(tag)
            .and_then(|s| s.diagnostics.as_ref())
            .map(|d| d.penalty_integral)
    };
    let mut prev: [Option<f64>; 2] = [None, None];
    for (v, r) in values.iter().zip(reports) {
        let pens = [penalty(r, SystemTag::A), penalty(r, SystemTag::B)];
        let trend: Vec<String> = (0..2)
            .map(|i| match (prev[i], pens[i]) {
                (Some(p), Some(q)) => (q <= p + 1e-10).to_string(),
                (None, Some(_)) => "true".to_string(),
                _ => String::new(),
            })
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            v,
            serde_json::to_value(r.status).unwrap().as_str().unwrap(),
            cell(pens[0]),
            cell(pens[1]),
            trend[0],
            trend[1],
            cell(max_hausdorff(r, Source::SysA, Source::SysB)),
            cell(max_hausdorff(r, Source::SysA, Source::Predicted)),
            cell(max_hausdorff(r, Source::SysB, Source::Predicted)),
        )
        .unwrap();
        prev = pens;
    }
    out
}

/// Runs a sweep and writes `sweep.csv` into the template's output directory.
pub fn sweep(template: &RunManifest, axis: SweepAxis, values: &[f64], jobs: usize) -> Result<(Vec<RunReport>, String), ExperimentError> {
    let manifests = sweep_manifests(template, axis, values)?;
    let reports = run_batch(&manifests, jobs).into_iter().collect::<Result<Vec<_>, _>>()?;
    let csv = sweep_csv(axis, values, &reports);
    if let Some(dir) = &template.out {
        io::write_file(&dir.join("sweep.csv"), &csv)?;
    }
    Ok((reports, csv))
}

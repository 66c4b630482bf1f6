use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use partseg::experiment::{run_batch, sweep, BcRef, ExperimentError, Request, RunManifest, RunReport, SweepAxis};
use partseg::interface_lab::Source;

/// Penalized three-component segregation experiments.
///
/// Exit status: 0 ok, 2 invariant failure, 3 convergence failure, 4 I/O
/// error, 64 bad command line.
#[derive(Debug, Parser)]
#[command(name = "partseg", version)]
struct Cli {
    /// Boundary data: catalog ids (`4`, `1,3,5`, `1-9`, `all`), `line` for the
    /// one-dimensional example, or a JSON spec file.
    #[arg(long, default_value = "1")]
    bc: String,

    /// Nodes per axis.
    #[arg(long, default_value_t = 201)]
    n: usize,

    #[arg(long, default_value_t = 1e-10)]
    epsilon: f64,

    /// Interface threshold, or `auto` for sqrt(epsilon).
    #[arg(long, default_value = "auto")]
    delta: String,

    /// Comma-separated subset of a, b, limit, predicted.
    #[arg(long, default_value = "a,b,predicted")]
    systems: String,

    /// Output directory; each run writes into its own subdirectory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Parameter sweep, `epsilon=1e-4,1e-6`, `n=51,101` or `delta=...`.
    #[arg(long)]
    sweep: Option<String>,

    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,

    /// Run a JSON manifest instead of the flags above.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 64;

fn parse_bcs(s: &str) -> Result<Vec<BcRef>, String> {
    let s = s.trim();
    if s == "all" {
        return Ok((1..=9).map(BcRef::Catalog).collect());
    }
    if let Some((a, b)) = s.split_once('-') {
        if let (Ok(a), Ok(b)) = (a.parse::<u32>(), b.parse::<u32>()) {
            if a > b {
                return Err(format!("empty range {s}"));
            }
            return Ok((a..=b).map(BcRef::Catalog).collect());
        }
    }
    if s.split(',').all(|p| p.trim().parse::<u32>().is_ok()) {
        return Ok(s.split(',').map(BcRef::parse).collect());
    }
    Ok(vec![BcRef::parse(s)])
}

fn parse_sweep(s: &str) -> Result<(SweepAxis, Vec<f64>), String> {
    let (axis, values) = s.split_once('=').ok_or("sweep must look like axis=v1,v2,...")?;
    let axis = SweepAxis::parse(axis)?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad sweep value '{v}'")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((axis, values))
}

fn manifests(cli: &Cli) -> Result<Vec<RunManifest>, String> {
    if let Some(path) = &cli.manifest {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(vec![m]);
    }
    let delta = match cli.delta.trim() {
        "auto" => None,
        d => Some(d.parse::<f64>().map_err(|_| format!("bad delta '{d}'"))?),
    };
    let systems = cli
        .systems
        .split(',')
        .map(Request::parse)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parse_bcs(&cli.bc)?
        .into_iter()
        .map(|bc| RunManifest {
            out: Some(cli.out.join(bc.slug())),
            bc,
            n: cli.n,
            epsilon: cli.epsilon,
            delta,
            systems: systems.clone(),
            ..RunManifest::default()
        })
        .collect())
}

fn summary(r: &RunReport) -> String {
    let mut s = format!("{:<10} {:<20}", r.manifest.bc.slug(), format!("{:?}", r.status));
    for (a, b) in [
        (Source::SysA, Source::SysB),
        (Source::SysA, Source::Predicted),
        (Source::SysB, Source::Predicted),
    ] {
        let worst = (1..=3)
            .filter_map(|c| r.comparison(c, a, b))
            .map(|c| c.metrics.hausdorff)
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
        if let Some(d) = worst {
            s.push_str(&format!("  H({},{})={:.4}", a.name(), b.name(), d));
        }
    }
    s
}

fn severity(r: &Result<RunReport, ExperimentError>) -> i32 {
    match r {
        Ok(r) => r.status.exit_code(),
        Err(e) => e.exit_code(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE } else { 0 });
        }
    };
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runs = match manifests(&cli) {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let results: Vec<Result<RunReport, ExperimentError>> = match &cli.sweep {
        None => run_batch(&runs, jobs),
        Some(spec) => {
            let (axis, values) = match parse_sweep(spec) {
                Ok(v) => v,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_USAGE);
                }
            };
            let mut all = Vec::new();
            for m in &runs {
                match sweep(m, axis, &values, jobs) {
                    Ok((reports, csv)) => {
                        print!("{csv}");
                        all.extend(reports.into_iter().map(Ok));
                    }
                    Err(e) => all.push(Err(e)),
                }
            }
            all
        }
    };

    let mut code = 0;
    for r in &results {
        match r {
            Ok(report) => println!("{}", summary(report)),
            Err(e) => eprintln!("error: {e}"),
        }
        let s = severity(r);
        // I/O outranks convergence, which outranks invariants
        if s > code {
            code = s;
        }
    }
    ExitCode::from(code as u8)
}

//! File formats.
//!
//! * CSV matrix: a header `# nx ny x0 x1 y0 y1`, then one row per `y` node in
//!   increasing `y`, each holding `nx` comma-separated values.
//! * PGM (binary P5) images, top row = largest `y`, with a JSON sidecar
//!   describing the value mapping.
//! * Contour CSV: `pair,poly_id,x,y`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Grid, GridError, ScalarField};
use crate::interface_lab::InterfaceSet;
use crate::partition::{PartitionMap, RegionLabel, PAIRS};
use crate::systems::{energy, EnergyReport, SystemTag, TripleField};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed matrix: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

pub fn matrix_csv(field: &ScalarField) -> String {
    let g = field.grid();
    let (ax, ay) = (g.axis(0), g.axis(1));
    let mut out = format!("# {} {} {} {} {} {}\n", g.nx(), g.ny(), ax.lo, ax.hi, ay.lo, ay.hi);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{}", field[g.index(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a matrix written by [`matrix_csv`].
pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<ScalarField, IoError> {
    let bad = |reason: &str| IoError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().and_then(|l| l.strip_prefix('#')).ok_or_else(|| bad("missing header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(bad("header needs nx ny x0 x1 y0 y1"));
    }
    let nx: usize = h[0].parse().map_err(|_| bad("nx"))?;
    let ny: usize = h[1].parse().map_err(|_| bad("ny"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("not a number: {s}")));
    let (x0, x1, y0, y1) = (num(h[2])?, num(h[3])?, num(h[4])?, num(h[5])?);
    let grid = if ny == 1 {
        Grid::line(x0, x1, nx)?
    } else {
        Grid::rect((x0, x1), (y0, y1), nx, ny)?
    };
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        if row.len() != nx {
            return Err(bad("row length differs from nx"));
        }
        values.extend(row);
    }
    Ok(ScalarField::from_values(&grid, values)?)
}

pub fn read_matrix_csv(path: &Path) -> Result<ScalarField, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_csv(&text, path)
}

fn pgm(grid: &Grid, grey: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx(), grid.ny()).into_bytes();
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            out.push(grey(grid.index(i, j)));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldImageMeta {
    pub nx: usize,
    pub ny: usize,
    /// Value mapped to grey 0.
    pub min: f64,
    /// Value mapped to grey 255.
    pub max: f64,
    pub orientation: &'static str,
}

/// Min-max scaled greyscale image of a field.
pub fn field_pgm(field: &ScalarField) -> (Vec<u8>, FieldImageMeta) {
    let g = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let bytes = pgm(g, |k| {
        if span > 0.0 {
            (255.0 * (field[k] - lo) / span).round() as u8
        } else {
            0
        }
    });
    let meta = FieldImageMeta {
        nx: g.nx(),
        ny: g.ny(),
        min: lo,
        max: hi,
        orientation: "first row is the largest y",
    };
    (bytes, meta)
}

#[derive(Debug, Clone, Serialize)]
pub struct PaletteEntry {
    pub label: &'static str,
    pub grey: u8,
}

pub fn label_palette() -> Vec<PaletteEntry> {
    RegionLabel::ALL
        .iter()
        .map(|&l| PaletteEntry {
            label: l.name(),
            grey: l.grey(),
        })
        .collect()
}

pub fn labels_pgm(map: &PartitionMap) -> Vec<u8> {
    pgm(&map.grid, |k| map.labels[k].grey())
}

pub fn contours_csv(map: &PartitionMap) -> String {
    let mut out = String::from("pair,poly_id,x,y\n");
    for (pair, lines) in PAIRS.iter().zip(&map.contours) {
        for (id, line) in lines.iter().enumerate() {
            for p in &line.points {
                writeln!(out, "{}{},{},{},{}", pair[0], pair[1], id, p[0], p[1]).unwrap();
            }
        }
    }
    out
}

pub fn triples_csv(map: &PartitionMap) -> String {
    let mut out = String::from("x,y,low_precision\n");
    for t in &map.triples {
        writeln!(out, "{},{},{}", t.p[0], t.p[1], t.low_precision).unwrap();
    }
    out
}

pub fn interfaces_csv(sets: &[InterfaceSet]) -> String {
    let mut out = String::from("component,source,x,y\n");
    for s in sets {
        for p in &s.points {
            writeln!(out, "{},{},{},{}", s.component, s.source.name(), p[0], p[1]).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TripleManifest {
    pub system: SystemTag,
    pub epsilon: f64,
    pub iters: usize,
    pub final_update: f64,
    pub energy: EnergyReport,
    pub files: [String; 3],
}

/// Writes `<stem>_u1.csv`, `<stem>_u2.csv`, `<stem>_u3.csv` and `<stem>.json`.
pub fn dump_triple(dir: &Path, stem: &str, t: &TripleField) -> Result<TripleManifest, IoError> {
    let files: [String; 3] = std::array::from_fn(|c| format!("{stem}_u{}.csv", c + 1));
    for (c, name) in files.iter().enumerate() {
        write_file(&dir.join(name), matrix_csv(&t.u[c]))?;
    }
    let eps = if t.epsilon > 0.0 { t.epsilon } else { f64::INFINITY };
    let manifest = TripleManifest {
        system: t.system,
        epsilon: t.epsilon,
        iters: t.iters,
        final_update: t.final_update,
        energy: energy(t, eps)?,
        files,
    };
    write_json(&dir.join(format!("{stem}.json")), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::HarmonicTriple;
    use crate::partition::predict;

    #[test]
    fn matrix_round_trip_is_exact() {
        let g = Grid::rect((-1.0, 1.0), (0.0, 0.5), 7, 4).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() * y + 1e-17);
        let text = matrix_csv(&f);
        assert!(text.starts_with("# 7 4 -1 1 0 0.5\n"));
        assert_eq!(text.lines().count(), 5);
        let back = parse_matrix_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn line_round_trip() {
        let g = Grid::line(0.0, 1.0, 5).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| x * x);
        assert_eq!(parse_matrix_csv(&matrix_csv(&f), Path::new("mem")).unwrap(), f);
    }

    #[test]
    fn malformed_matrix_is_rejected() {
        let p = Path::new("bad.csv");
        assert!(parse_matrix_csv("1,2\n", p).is_err());
        assert!(parse_matrix_csv("# 2 2 0 1 0 1\n1,2\n3\n", p).is_err());
        assert!(parse_matrix_csv("# 2 2 0 1 0 1\n1,2\n3,x\n", p).is_err());
    }

    #[test]
    fn pgm_layout() {
        let g = Grid::rect((0.0, 1.0), (0.0, 1.0), 3, 3).unwrap();
        let f = ScalarField::from_fn(&g, |_, y| y);
        let (bytes, meta) = field_pgm(&f);
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[255, 255, 255, 128, 128, 128, 0, 0, 0]);
        assert_eq!((meta.min, meta.max), (0.0, 1.0));
    }

    #[test]
    fn contour_csv_rows() {
        let g = Grid::square(5).unwrap();
        let h12 = ScalarField::from_fn(&g, |x, _| x);
        let h23 = ScalarField::constant(&g, 1.0);
        let h13 = h12.combine(1.0, &h23, 1.0).unwrap();
        let map = predict(&HarmonicTriple { h12, h13, h23 }, 0.0);
        let csv = contours_csv(&map);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "pair,poly_id,x,y");
        // h13 = x + 1 only touches zero on the left edge, which is not a crossing
        assert_eq!(rows.len(), 1 + 5);
        assert!(rows[1].starts_with("12,0,0,"));
        assert_eq!(label_palette().len(), 9);
        assert_eq!(labels_pgm(&map).len(), b"P5\n5 5\n255\n".len() + 25);
    }

    #[test]
    fn triple_dump_writes_four_files() {
        let dir = tempfile::tempdir().unwrap();
        let (a, _) = crate::systems::line_example(11).unwrap();
        let m = dump_triple(dir.path(), "limit", &a).unwrap();
        assert_eq!(m.files[2], "limit_u3.csv");
        let back = read_matrix_csv(&dir.path().join("limit_u3.csv")).unwrap();
        assert_eq!(back, a.u[2]);
        assert!(dir.path().join("limit.json").exists());
    }
}

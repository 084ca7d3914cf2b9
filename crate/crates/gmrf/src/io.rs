//! Text file formats for graphs, road networks, parameters, sample matrices,
//! masks and result tables, plus the run manifest written next to every
//! output.
//!
//! All floating-point output uses 17 significant digits, so files round-trip
//! bit-exactly and downstream regression tests can compare bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::analysis::AnalysisCurve;
use crate::error::{Error, Result};
use crate::evaluation::SweepResult;
use crate::ggm::GgmParams;
use crate::graph::{Graph, RoadNetworkDescription};

/// Full-precision decimal rendering (17 significant digits).
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(tok: &str, path: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("expected a number, got {tok:?}"),
    })
}

fn parse_usize(tok: &str, path: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("expected a non-negative integer, got {tok:?}"),
    })
}

/// Lines of `src` with 1-based numbers, skipping blanks and `#` comments.
fn content_lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

// ── Graph files: `n <count>` then one `e <i> <j>` per edge ──────────────

pub fn parse_graph_str(src: &str, path: &str) -> Result<Graph> {
    let mut n: Option<usize> = None;
    let mut edges: Vec<(usize, usize, usize)> = Vec::new(); // (i, j, line)
    for (line_no, line) in content_lines(src) {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("n") => {
                let count = parse_usize(toks.next().unwrap_or(""), path, line_no)?;
                if n.replace(count).is_some() {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: line_no,
                        msg: "duplicate `n` line".into(),
                    });
                }
            }
            Some("e") => {
                let i = parse_usize(toks.next().unwrap_or(""), path, line_no)?;
                let j = parse_usize(toks.next().unwrap_or(""), path, line_no)?;
                edges.push((i, j, line_no));
            }
            Some(other) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: format!("unknown record {other:?} (expected `n` or `e`)"),
                })
            }
            None => unreachable!("blank lines are filtered"),
        }
        if toks.next().is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                msg: "trailing tokens".into(),
            });
        }
    }
    let n = n.ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "missing `n <count>` line".into(),
    })?;
    // Build incrementally so invariant violations can name their line.
    let mut seen = std::collections::BTreeSet::new();
    for &(i, j, line_no) in &edges {
        let located = |msg: String| Error::Parse {
            path: path.into(),
            line: line_no,
            msg,
        };
        if i == j {
            return Err(located(format!("self-loop at vertex {i}")));
        }
        if i >= n || j >= n {
            return Err(located(format!("edge ({i}, {j}) out of range for n = {n}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(located(format!("duplicate edge ({i}, {j})")));
        }
    }
    Graph::new(n, edges.iter().map(|&(i, j, _)| (i, j)))
}

pub fn parse_graph_file(path: &Path) -> Result<Graph> {
    parse_graph_str(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Canonical form: sorted edge list.
pub fn graph_to_string(g: &Graph) -> String {
    let mut out = format!("n {}\n", g.vertex_count());
    for &(i, j) in g.edges() {
        let _ = writeln!(out, "e {i} {j}");
    }
    out
}

// ── Road networks: `road <name>` lines then `x <name> <name> ...` ───────

pub fn parse_road_str(src: &str, path: &str) -> Result<RoadNetworkDescription> {
    let mut roads = Vec::new();
    let mut intersections = Vec::new();
    for (line_no, line) in content_lines(src) {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("road") => {
                let name = toks.next().ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: "road line needs a name".into(),
                })?;
                roads.push(name.to_string());
            }
            Some("x") => {
                let names: Vec<String> = toks.map(str::to_string).collect();
                if names.len() < 2 {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: line_no,
                        msg: "an intersection needs at least two roads".into(),
                    });
                }
                intersections.push(names);
            }
            Some(other) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: format!("unknown record {other:?} (expected `road` or `x`)"),
                })
            }
            None => unreachable!(),
        }
    }
    RoadNetworkDescription::new(roads, intersections)
}

pub fn parse_road_file(path: &Path) -> Result<RoadNetworkDescription> {
    parse_road_str(&fs::read_to_string(path)?, &path.display().to_string())
}

/// Loads a graph from either format, sniffing the first record: `road`/`x`
/// files go through the road-network construction, `n`/`e` files are read
/// directly. This is what the CLI's `--graph` flags accept.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let src = fs::read_to_string(path)?;
    let label = path.display().to_string();
    let is_road = content_lines(&src)
        .next()
        .map(|(_, line)| line.starts_with("road ") || line.starts_with("x "))
        .unwrap_or(false);
    if is_road {
        crate::graph::build_road_graph(&parse_road_str(&src, &label)?)
    } else {
        parse_graph_str(&src, &label)
    }
}

// ── Parameter files: `xi`, `j` and an `h` line with n reals ─────────────

pub fn params_to_string(p: &GgmParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "xi {}", fmt_float(p.xi));
    let _ = writeln!(out, "j {}", fmt_float(p.j));
    let h: Vec<String> = p.h.iter().map(|&v| fmt_float(v)).collect();
    let _ = writeln!(out, "h {}", h.join(" "));
    out
}

pub fn parse_params_str(src: &str, path: &str) -> Result<GgmParams> {
    let (mut xi, mut j, mut h) = (None, None, None);
    for (line_no, line) in content_lines(src) {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("xi") => xi = Some(parse_float(toks.next().unwrap_or(""), path, line_no)?),
            Some("j") => j = Some(parse_float(toks.next().unwrap_or(""), path, line_no)?),
            Some("h") => {
                let vals = toks
                    .map(|t| parse_float(t, path, line_no))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.is_empty() {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: line_no,
                        msg: "h line needs at least one value".into(),
                    });
                }
                h = Some(vals);
            }
            Some(other) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: format!("unknown field {other:?} (expected xi, j or h)"),
                })
            }
            None => unreachable!(),
        }
    }
    match (xi, j, h) {
        (Some(xi), Some(j), Some(h)) => GgmParams::new(DVector::from_vec(h), xi, j),
        _ => Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "parameter file needs xi, j and h fields".into(),
        }),
    }
}

pub fn parse_params_file(path: &Path) -> Result<GgmParams> {
    parse_params_str(&fs::read_to_string(path)?, &path.display().to_string())
}

// ── Sample matrices: CSV with header x0,...,x{n-1}, one row per sample ──

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let header: Vec<String> = (0..m.ncols()).map(|i| format!("x{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_float(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(src: &str, path: &str) -> Result<DMatrix<f64>> {
    let mut lines = src
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "empty CSV".into(),
    })?;
    let cols = header.split(',').count();
    if !header.trim_start().starts_with('x') {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "missing x0,...,x{n-1} header row".into(),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        let vals = line
            .split(',')
            .map(|t| parse_float(t.trim(), path, line_no + 1))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != cols {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no + 1,
                msg: format!("expected {cols} columns, got {}", vals.len()),
            });
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "CSV has a header but no data rows".into(),
        });
    }
    let mut out = DMatrix::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

pub fn parse_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?, &path.display().to_string())
}

// ── Mask files: one missing index per line ──────────────────────────────

pub fn parse_mask_str(src: &str, path: &str) -> Result<Vec<usize>> {
    content_lines(src)
        .map(|(line_no, line)| parse_usize(line, path, line_no))
        .collect()
}

pub fn parse_mask_file(path: &Path) -> Result<Vec<usize>> {
    parse_mask_str(&fs::read_to_string(path)?, &path.display().to_string())
}

// ── Result tables ───────────────────────────────────────────────────────

pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::from("p,mse_mean,mse_stderr,trials\n");
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_float(row.p),
            fmt_float(row.mse_mean),
            fmt_float(row.mse_stderr),
            row.trials
        );
    }
    out
}

pub fn curve_to_csv(curve: &AnalysisCurve) -> String {
    let with_mc = curve.rows.iter().any(|r| r.mc.is_some());
    let mut out = String::from(if with_mc {
        "x,analytic_E,mc_E,mc_stderr\n"
    } else {
        "x,analytic_E\n"
    });
    for row in &curve.rows {
        match (with_mc, row.mc) {
            (true, Some(mc)) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    fmt_float(row.x),
                    fmt_float(row.analytic),
                    fmt_float(mc.mean),
                    fmt_float(mc.stderr)
                );
            }
            _ => {
                let _ = writeln!(out, "{},{}", fmt_float(row.x), fmt_float(row.analytic));
            }
        }
    }
    out
}

/// `vertex,value,bin` rows under the five-stage density quantizer.
pub fn quantized_to_csv(values: &DVector<f64>) -> String {
    let mut out = String::from("vertex,value,bin\n");
    for (i, &v) in values.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{}",
            fmt_float(v),
            crate::evaluation::quantize_density(v)
        );
    }
    out
}

// ── Run manifests ───────────────────────────────────────────────────────

/// 64-bit FNV-1a over raw bytes; cheap, stable content fingerprint.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(format!("fnv1a:{:016x}", fnv1a64(&fs::read(path)?)))
}

/// Everything needed to replay a CLI run: the subcommand, its flags, the
/// digests of all inputs, the seed and the artifact version. Re-running with
/// an identical manifest reproduces byte-identical numeric outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: Vec<(String, String)>,
    pub inputs: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            ..Self::default()
        }
    }

    pub fn flag(&mut self, name: &str, value: impl std::fmt::Display) -> &mut Self {
        self.flags.push((name.to_string(), value.to_string()));
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs
            .push((path.display().to_string(), digest_file(path)?));
        Ok(self)
    }

    pub fn render(&self, output: &Path) -> String {
        let mut out = format!("artifact gmrf {}\n", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "subcommand {}", self.subcommand);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed {s}");
            }
            None => {
                let _ = writeln!(out, "seed -");
            }
        }
        let mut flags = self.flags.clone();
        flags.sort();
        for (name, value) in &flags {
            let _ = writeln!(out, "flag {name} {value}");
        }
        for (path, digest) in &self.inputs {
            let _ = writeln!(out, "input {path} {digest}");
        }
        let _ = writeln!(out, "output {}", output.display());
        out
    }
}

/// Writes `contents` to `path` and the rendered manifest to
/// `<path>.manifest`.
pub fn write_output(path: &Path, contents: &str, manifest: &RunManifest) -> Result<()> {
    fs::write(path, contents)?;
    let mut manifest_path = path.as_os_str().to_owned();
    manifest_path.push(".manifest");
    fs::write(Path::new(&manifest_path), manifest.render(path))?;
    Ok(())
}

//! Design matrices and labels from CSV, libsvm or the synthetic generators.

use std::str::FromStr;

use randskew::datasets::{counterexample_matrix, generate, labels, Distribution, LabelRule};
use randskew::linalg::DenseMatrix;
use randskew::optim::ProblemKind;

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    Synthetic,
    Counterexample,
    Csv,
    LibSvm,
}

impl FromStr for SourceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(SourceKind::Synthetic),
            "counterexample" => Ok(SourceKind::Counterexample),
            "csv" => Ok(SourceKind::Csv),
            "libsvm" => Ok(SourceKind::LibSvm),
            _ => Err(format!("unknown data source `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub a: DenseMatrix,
    /// Empty when the command needs only the design matrix of a generated source.
    pub y: Vec<f64>,
}

/// Reads the data keys of `cfg`. Labels are generated for synthetic sources
/// only when `problem` is given.
pub fn load_data(cfg: &mut Config, problem: Option<ProblemKind>, seed: u64) -> CliResult<Dataset> {
    let kind: SourceKind = cfg.or_parse("data", "synthetic")?;
    let mut ds = match kind {
        SourceKind::Csv | SourceKind::LibSvm => {
            let path: String = cfg.required("path")?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            if kind == SourceKind::Csv {
                parse_csv(&text)?
            } else {
                let d: Option<usize> = cfg.optional("d")?;
                parse_libsvm(&text, d)?
            }
        }
        SourceKind::Synthetic | SourceKind::Counterexample => {
            let a = if kind == SourceKind::Counterexample {
                let d: usize = cfg.required("d")?;
                if d == 0 {
                    return Err(CliError::Config("`d` must be positive".into()));
                }
                counterexample_matrix(d)
            } else {
                let n: usize = cfg.required("n")?;
                let d: usize = cfg.required("d")?;
                if n == 0 || d == 0 {
                    return Err(CliError::Config("`n` and `d` must be positive".into()));
                }
                let dist = distribution(cfg)?;
                generate(n, d, dist, seed)
            };
            let y = match problem {
                Some(p) => labels(&a, label_rule(cfg, p)?, randskew::rng::derive_seed(seed, 1)),
                None => Vec::new(),
            };
            Dataset { a, y }
        }
    };
    if cfg.flag("standardize", false)? {
        ds.a = standardize(&ds.a);
    }
    Ok(ds)
}

fn distribution(cfg: &mut Config) -> CliResult<Distribution> {
    let name: String = cfg.or_parse("distribution", "gaussian")?;
    match name.as_str() {
        "gaussian" => Ok(Distribution::GaussianIid),
        "spiked" => Ok(Distribution::Spiked {
            decay: cfg.or("decay", 0.9)?,
        }),
        "coherent" => Ok(Distribution::Coherent {
            heavy_rows: cfg.or("heavy_rows", 4usize)?,
        }),
        _ => Err(CliError::Config(format!("unknown distribution `{name}`"))),
    }
}

fn label_rule(cfg: &mut Config, problem: ProblemKind) -> CliResult<LabelRule> {
    let default = match problem {
        ProblemKind::Logistic => "logistic",
        ProblemKind::LeastSquares => "linear",
    };
    let name: String = cfg.or_parse("labels", default)?;
    match name.as_str() {
        "logistic" => Ok(LabelRule::Logistic),
        "linear" => Ok(LabelRule::Linear {
            noise: cfg.or("noise", 0.1)?,
        }),
        _ => Err(CliError::Config(format!("unknown label rule `{name}`"))),
    }
}

fn parse_number(tok: &str, line: usize) -> CliResult<f64> {
    let v: f64 = tok.trim().parse().map_err(|_| CliError::Parse {
        line,
        message: format!("not a number: `{}`", tok.trim()),
    })?;
    if !v.is_finite() {
        return Err(CliError::Parse {
            line,
            message: format!("non-finite value `{}`", tok.trim()),
        });
    }
    Ok(v)
}

/// One sample per line; the last column is the label.
pub fn parse_csv(text: &str) -> CliResult<Dataset> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|t| parse_number(t, idx + 1))
            .collect::<CliResult<Vec<f64>>>()?;
        if vals.len() < 2 {
            return Err(CliError::Parse {
                line: idx + 1,
                message: "need at least one feature and a label".into(),
            });
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(CliError::Parse {
                line: idx + 1,
                message: "ragged row".into(),
            });
        }
        let (label, features) = vals.split_last().unwrap();
        y.push(*label);
        rows.push(features.to_vec());
    }
    finish(rows, y)
}

/// `label index:value ...` with 1-based indices; absent entries are zero.
/// The width is `d` when given, else the largest index seen.
pub fn parse_libsvm(text: &str, d: Option<usize>) -> CliResult<Dataset> {
    let mut sparse = Vec::new();
    let mut y = Vec::new();
    let mut width = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        y.push(parse_number(toks.next().unwrap(), idx + 1)?);
        let mut entries = Vec::new();
        for tok in toks {
            let bad = || CliError::Parse {
                line: idx + 1,
                message: format!("bad entry `{tok}`"),
            };
            let (i, v) = tok.split_once(':').ok_or_else(bad)?;
            let i: usize = i.parse().map_err(|_| bad())?;
            if i == 0 || d.is_some_and(|d| i > d) {
                return Err(CliError::Parse {
                    line: idx + 1,
                    message: format!("feature index {i} out of range"),
                });
            }
            width = width.max(i);
            entries.push((i - 1, parse_number(v, idx + 1)?));
        }
        sparse.push(entries);
    }
    let d = d.unwrap_or(width);
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; d];
            for (j, v) in entries {
                row[j] = v;
            }
            row
        })
        .collect();
    finish(rows, y)
}

fn finish(rows: Vec<Vec<f64>>, y: Vec<f64>) -> CliResult<Dataset> {
    if rows.is_empty() {
        return Err(CliError::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    Ok(Dataset {
        a: DenseMatrix::from_rows(&rows)?,
        y,
    })
}

/// Per-column z-scores; constant columns are only centered.
pub fn standardize(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows() as f64;
    let stats: Vec<(f64, f64)> = (0..a.cols())
        .map(|j| {
            let col = a.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        (a[(i, j)] - stats[j].0) / stats[j].1
    })
}

use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boundopt::nmf::{gen_synthetic, initial_point, read_matrix_csv, NmfProblem};
use boundopt::quadratic::Quadratic;
use boundopt::{pgrad, pncg, two_metric, BoundSpec, Objective, SolveError, SolverReport};
use clap::ValueEnum;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Pncg,
    TwoMetric,
    Pgrad,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Pncg => "pncg",
            SolverKind::TwoMetric => "two-metric",
            SolverKind::Pgrad => "pgrad",
        }
    }

    pub fn run<O: Objective + ?Sized>(
        self,
        oracle: &O,
        x0: &[f64],
        bounds: &BoundSpec,
        cfg: &RunConfig,
    ) -> Result<SolverReport, SolveError> {
        match self {
            SolverKind::Pncg => pncg::solve(oracle, x0, bounds, &cfg.solver),
            SolverKind::TwoMetric => two_metric::solve(oracle, x0, bounds, &cfg.solver, &cfg.two_metric.strategy()),
            SolverKind::Pgrad => pgrad::solve(oracle, x0, bounds, &cfg.pgrad),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadraticKind {
    Convex,
    Nonconvex,
    ConvexBox,
}

/// Where `solve` gets its objective from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Nmf { m: usize, n: usize, r: usize, seed: u64 },
    Quadratic { n: usize, kind: QuadraticKind, seed: u64 },
    Csv { path: PathBuf },
}

fn numbers<T: FromStr>(body: &str, count: usize, what: &str) -> Result<Vec<T>, String> {
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() != count {
        return Err(format!("{what} needs {count} comma-separated values, got `{body}`"));
    }
    parts
        .iter()
        .map(|p| p.parse().map_err(|_| format!("{what}: `{p}` is not a valid number")))
        .collect()
}

impl FromStr for ProblemSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| format!("expected nmf:M,N,R,SEED, quadratic:N,KIND,SEED or csv:PATH, got `{s}`"))?;
        match kind {
            "nmf" => {
                let v: Vec<u64> = numbers(body, 4, "nmf")?;
                Ok(ProblemSpec::Nmf {
                    m: v[0] as usize,
                    n: v[1] as usize,
                    r: v[2] as usize,
                    seed: v[3],
                })
            }
            "quadratic" => {
                let parts: Vec<&str> = body.split(',').map(str::trim).collect();
                let [n, kind, seed] = parts[..] else {
                    return Err(format!("quadratic needs N,KIND,SEED, got `{body}`"));
                };
                let kind = match kind {
                    "convex" => QuadraticKind::Convex,
                    "nonconvex" => QuadraticKind::Nonconvex,
                    "convex-box" => QuadraticKind::ConvexBox,
                    other => return Err(format!("unknown quadratic kind `{other}` (convex, nonconvex, convex-box)")),
                };
                let n: usize = n.parse().map_err(|_| format!("quadratic: `{n}` is not a valid size"))?;
                if n == 0 {
                    return Err("quadratic: size must be positive".into());
                }
                let seed = seed.parse().map_err(|_| format!("quadratic: `{seed}` is not a valid seed"))?;
                Ok(ProblemSpec::Quadratic { n, kind, seed })
            }
            "csv" if !body.is_empty() => Ok(ProblemSpec::Csv { path: body.into() }),
            _ => Err(format!("unknown problem source `{s}`")),
        }
    }
}

/// An objective together with its bounds and starting point.
pub struct Instance {
    pub oracle: Box<dyn Objective>,
    pub bounds: BoundSpec,
    pub x0: Vec<f64>,
}

pub fn load_nmf_csv(path: &Path, rank: usize) -> Result<NmfProblem, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let v = read_matrix_csv(file).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(NmfProblem::new(v, rank)?)
}

impl ProblemSpec {
    /// `rank` is needed for CSV input; `init_seed` picks the NMF starting
    /// factors and defaults to the data seed plus one.
    pub fn instantiate(&self, rank: Option<usize>, init_seed: Option<u64>) -> Result<Instance, CliError> {
        let nmf = |p: NmfProblem, seed: u64| {
            let x0 = initial_point(&p, init_seed.unwrap_or(seed + 1));
            Instance {
                bounds: p.bounds(),
                oracle: Box::new(p),
                x0,
            }
        };
        match self {
            ProblemSpec::Nmf { m, n, r, seed } => Ok(nmf(gen_synthetic(*m, *n, *r, *seed)?.problem, *seed)),
            ProblemSpec::Csv { path } => {
                let r = rank.ok_or_else(|| CliError::Usage("csv problems need --rank".into()))?;
                Ok(nmf(load_nmf_csv(path, r)?, 0))
            }
            ProblemSpec::Quadratic { n, kind, seed } => {
                let q = match kind {
                    QuadraticKind::Convex => Quadratic::random_convex(*n, *seed),
                    QuadraticKind::Nonconvex => Quadratic::random_nonconvex_box(*n, *seed),
                    QuadraticKind::ConvexBox => Quadratic::random_convex_box(*n, *seed),
                };
                let x0 = (0..*n)
                    .map(|i| {
                        let u = q.bounds.upper(i);
                        if u.is_finite() {
                            0.5 * u
                        } else {
                            1.0
                        }
                    })
                    .collect();
                Ok(Instance {
                    bounds: q.bounds.clone(),
                    oracle: Box::new(q),
                    x0,
                })
            }
        }
    }
}

/// An NMF scenario `m,n,r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

impl Scenario {
    pub fn label(&self) -> String {
        format!("{}x{}x{}", self.m, self.n, self.r)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let body = s.trim().trim_start_matches('(').trim_end_matches(')');
        let v: Vec<usize> = numbers(body, 3, "scenario")?;
        if v.contains(&0) {
            return Err(format!("scenario `{s}` has a zero dimension"));
        }
        Ok(Scenario { m: v[0], n: v[1], r: v[2] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_specs_parse() {
        assert_eq!(
            "nmf:150,100,15,1".parse::<ProblemSpec>().unwrap(),
            ProblemSpec::Nmf { m: 150, n: 100, r: 15, seed: 1 }
        );
        assert_eq!(
            "quadratic:2,convex-box,9".parse::<ProblemSpec>().unwrap(),
            ProblemSpec::Quadratic { n: 2, kind: QuadraticKind::ConvexBox, seed: 9 }
        );
        assert_eq!(
            "csv:data/V.csv".parse::<ProblemSpec>().unwrap(),
            ProblemSpec::Csv { path: "data/V.csv".into() }
        );
        for bad in ["nmf:1,2,3", "quadratic:3,round,1", "quadratic:0,convex,1", "csv:", "mystery:1", "nmf"] {
            assert!(bad.parse::<ProblemSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn scenarios_accept_parentheses() {
        assert_eq!("(150,100,15)".parse::<Scenario>().unwrap(), Scenario { m: 150, n: 100, r: 15 });
        assert!("150,0,15".parse::<Scenario>().is_err());
        assert!("150,100".parse::<Scenario>().is_err());
    }
}

//! Experiments: run a configuration, score every recorded iterate against the
//! reference solution and the envelopes, and write or compare CSV traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{self, compute_constants, BoundConstants};
use crate::config::{load_problem, problem_hash};
use crate::engine::{run, RunConfig, RunTrace, Termination};
use crate::error::{Error, Result};
use crate::num::{build_num, Scenario};
use crate::problem::CoupledProblem;
use crate::reference::{metrics, solve_reference_cached, ReferenceSolution};
use crate::schedule::{generate_schedule, AsyncSchedule};

/// Slack allowed when comparing a measurement with its envelope:
/// `measured <= bound + DOMINANCE_TOLERANCE * (1 + |bound|)`.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

pub const CSV_HEADER: [&str; 16] = [
    "k",
    "in_KD",
    "E_k",
    "sqrtS_measured",
    "sqrtS_bound",
    "lambda_norm_measured",
    "lambda_norm_bound",
    "violation_measured",
    "violation_bound",
    "primal_dev_measured",
    "primal_lower_bound",
    "primal_upper_bound",
    "dual_dev_measured",
    "dual_bound",
    "xdev_measured",
    "xdev_bound",
];

const TRACE_MAGIC: &str = "ddopt trace v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemSource {
    /// The built-in network benchmark.
    Num,
    File(PathBuf),
}

impl ProblemSource {
    /// `"num"` names the built-in benchmark; anything else is a file path.
    pub fn parse(s: &str) -> Self {
        if s == "num" {
            ProblemSource::Num
        } else {
            ProblemSource::File(PathBuf::from(s))
        }
    }

    pub fn load(&self) -> Result<CoupledProblem> {
        match self {
            ProblemSource::Num => Ok(build_num()),
            ProblemSource::File(path) => load_problem(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemSource,
    /// Label written to the trace; usually a scenario name.
    pub label: String,
    pub config: RunConfig,
    /// Schedule file; generated from `config.seed` when absent.
    pub schedule: Option<PathBuf>,
    /// Emit the envelope columns (left empty otherwise).
    pub envelopes: bool,
}

impl ExperimentSpec {
    pub fn scenario(sc: Scenario) -> Self {
        Self {
            problem: ProblemSource::Num,
            label: sc.name().to_owned(),
            config: sc.config_for(6),
            schedule: None,
            envelopes: true,
        }
    }
}

/// Envelope values at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelopes {
    pub sqrt_s: f64,
    pub lambda_norm: f64,
    pub violation: f64,
    pub primal_lower: f64,
    pub primal_upper: f64,
    pub dual: f64,
    pub xdev: f64,
}

impl Envelopes {
    /// Values at `k`, with the multiplier bound evaluated at the measured `S^k`.
    pub fn at(c: &BoundConstants, k: usize, s_measured: f64) -> Self {
        let (primal_lower, primal_upper) = bounds::envelope_primal(c, k);
        Self {
            sqrt_s: bounds::envelope_s(c, k),
            lambda_norm: bounds::envelope_lambda_norm(c, s_measured, k),
            violation: bounds::envelope_violation(c, k),
            primal_lower,
            primal_upper,
            dual: bounds::envelope_dual(c, k),
            xdev: bounds::envelope_xdev(c, k),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub k: usize,
    pub in_kd: bool,
    pub e_k: f64,
    pub sqrt_s: f64,
    /// `||lambda^{k+1}||`.
    pub lambda_norm: f64,
    pub violation: f64,
    pub primal_dev: f64,
    pub dual_dev: f64,
    pub xdev: f64,
    pub bounds: Option<Envelopes>,
}

/// Measured quantities that can be checked against an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    SqrtS,
    LambdaNorm,
    Violation,
    PrimalLower,
    PrimalUpper,
    Dual,
    Xdev,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::SqrtS,
        Metric::LambdaNorm,
        Metric::Violation,
        Metric::PrimalLower,
        Metric::PrimalUpper,
        Metric::Dual,
        Metric::Xdev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SqrtS => "sqrtS",
            Metric::LambdaNorm => "lambda_norm",
            Metric::Violation => "violation",
            Metric::PrimalLower => "primal_dev (lower)",
            Metric::PrimalUpper => "primal_dev (upper)",
            Metric::Dual => "dual_dev",
            Metric::Xdev => "xdev",
        }
    }
}

fn within(measured: f64, bound: f64) -> bool {
    measured <= bound + DOMINANCE_TOLERANCE * (1.0 + bound.abs())
}

impl MetricRow {
    /// Whether the measurement of `metric` respects its envelope (`None` when no
    /// envelope was recorded).
    pub fn dominated(&self, metric: Metric) -> Option<bool> {
        let b = self.bounds?;
        Some(match metric {
            Metric::SqrtS => within(self.sqrt_s, b.sqrt_s),
            Metric::LambdaNorm => within(self.lambda_norm, b.lambda_norm),
            Metric::Violation => within(self.violation, b.violation),
            Metric::PrimalLower => within(-self.primal_dev, -b.primal_lower),
            Metric::PrimalUpper => within(self.primal_dev, b.primal_upper),
            Metric::Dual => within(self.dual_dev, b.dual),
            Metric::Xdev => within(self.xdev, b.xdev),
        })
    }

    pub fn measured(&self, metric: Metric) -> f64 {
        match metric {
            Metric::SqrtS => self.sqrt_s,
            Metric::LambdaNorm => self.lambda_norm,
            Metric::Violation => self.violation,
            Metric::PrimalLower | Metric::PrimalUpper => self.primal_dev,
            Metric::Dual => self.dual_dev,
            Metric::Xdev => self.xdev,
        }
    }
}

/// Everything produced by one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: CoupledProblem,
    pub reference: ReferenceSolution,
    pub constants: BoundConstants,
    pub trace: RunTrace,
    pub rows: Vec<MetricRow>,
}

/// Scores every row of `trace`.
pub fn score_trace(
    problem: &CoupledProblem,
    reference: &ReferenceSolution,
    constants: Option<&BoundConstants>,
    trace: &RunTrace,
) -> Result<Vec<MetricRow>> {
    trace
        .rows
        .iter()
        .map(|row| {
            let m = metrics(reference, problem, &row.x_bar, &row.lambda_bar)?;
            Ok(MetricRow {
                k: row.k,
                in_kd: row.in_kd,
                e_k: row.e_k,
                sqrt_s: row.s_cum.sqrt(),
                lambda_norm: row.lambda_next.norm(),
                violation: m.violation_norm,
                primal_dev: m.primal_dev,
                dual_dev: m.dual_dev,
                xdev: m.xdev_sq,
                bounds: constants.map(|c| Envelopes::at(c, row.k, row.s_cum)),
            })
        })
        .collect()
}

fn load_schedule(path: &Path) -> Result<AsyncSchedule> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AsyncSchedule::from_text(&text)
}

/// Runs and scores an experiment without writing anything.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    let problem = spec.problem.load()?;
    let lips = problem.lipschitz_data();
    spec.config.validate(&lips, problem.n_agents())?;
    let schedule = match &spec.schedule {
        Some(path) => load_schedule(path)?,
        None => generate_schedule(
            problem.n_agents(),
            spec.config.max_iters,
            spec.config.k0,
            spec.config.seed,
        )?,
    };
    let reference = solve_reference_cached(&problem, &lips)?;
    let constants = compute_constants(&problem, &lips, &spec.config, &reference)?;
    let trace = run(&problem, &spec.config, &schedule)?;
    let rows = score_trace(
        &problem,
        &reference,
        spec.envelopes.then_some(&constants),
        &trace,
    )?;
    Ok(Experiment {
        problem,
        reference,
        constants,
        trace,
        rows,
    })
}

fn metadata(spec: &ExperimentSpec, exp: &Experiment) -> Vec<(String, String)> {
    let c = &spec.config;
    let termination = match exp.trace.termination {
        Termination::Tolerance { k } => format!("tolerance at k = {k}"),
        Termination::MaxIters => "max_iters".to_owned(),
    };
    vec![
        ("problem_hash".into(), problem_hash(&exp.problem)),
        ("label".into(), spec.label.clone()),
        ("alpha".into(), c.alpha.to_string()),
        ("k0".into(), c.k0.to_string()),
        ("eps_total".into(), c.eps_total().to_string()),
        (
            "oracle".into(),
            serde_json::to_string(&c.oracle)
                .unwrap()
                .trim_matches('"')
                .to_owned(),
        ),
        ("seed".into(), c.seed.to_string()),
        ("max_iters".into(), c.max_iters.to_string()),
        ("record_every".into(), c.record_every.to_string()),
        ("termination".into(), termination),
        ("iterations".into(), exp.trace.iterations.to_string()),
        ("max_staleness".into(), exp.trace.max_staleness.to_string()),
        ("F_star".into(), exp.reference.f_star.to_string()),
        (
            "lambda_star_norm".into(),
            exp.constants.lambda_star_norm.to_string(),
        ),
    ]
}

fn num(x: f64) -> String {
    x.to_string()
}

/// Writes a trace: `# key: value` metadata lines, then the fixed CSV header and rows.
pub fn write_trace(path: &Path, meta: &[(String, String)], rows: &[MetricRow]) -> Result<()> {
    let mut out = format!("# {TRACE_MAGIC}\n");
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}").unwrap();
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let b = r.bounds.map(|b| {
            [
                b.sqrt_s,
                b.lambda_norm,
                b.violation,
                b.primal_lower,
                b.primal_upper,
                b.dual,
                b.xdev,
            ]
            .map(num)
        });
        let bound = |i: usize| b.as_ref().map_or(String::new(), |b| b[i].clone());
        w.write_record([
            r.k.to_string(),
            u8::from(r.in_kd).to_string(),
            num(r.e_k),
            num(r.sqrt_s),
            bound(0),
            num(r.lambda_norm),
            bound(1),
            num(r.violation),
            bound(2),
            num(r.primal_dev),
            bound(3),
            bound(4),
            num(r.dual_dev),
            bound(5),
            num(r.xdev),
            bound(6),
        ])?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::Trace(format!("csv buffer: {e}")))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Runs `spec` and writes its trace to `output`.
pub fn cmd_run(spec: &ExperimentSpec, output: &Path) -> Result<Experiment> {
    let exp = run_experiment(spec)?;
    write_trace(output, &metadata(spec, &exp), &exp.rows)?;
    Ok(exp)
}

/// A trace read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub path: PathBuf,
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<MetricRow>,
}

impl LoadedTrace {
    pub fn label(&self) -> &str {
        self.meta.get("label").map_or("?", String::as_str)
    }
}

pub fn read_trace(path: &Path) -> Result<LoadedTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_owned(),
        message,
    };
    let mut meta = BTreeMap::new();
    let mut body_start = 0;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        body_start += line.len() + 1;
        if let Some((k, v)) = rest.trim().split_once(": ") {
            meta.insert(k.to_owned(), v.to_owned());
        }
    }
    let mut reader = csv::Reader::from_reader(&text.as_bytes()[body_start.min(text.len())..]);
    let header = reader.headers()?.clone();
    if !header.iter().eq(CSV_HEADER) {
        return Err(parse_err("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        let bounds = match (
            opt(4)?,
            opt(6)?,
            opt(8)?,
            opt(10)?,
            opt(11)?,
            opt(13)?,
            opt(15)?,
        ) {
            (Some(s), Some(l), Some(v), Some(pl), Some(pu), Some(d), Some(x)) => Some(Envelopes {
                sqrt_s: s,
                lambda_norm: l,
                violation: v,
                primal_lower: pl,
                primal_upper: pu,
                dual: d,
                xdev: x,
            }),
            _ => None,
        };
        rows.push(MetricRow {
            k: rec[0]
                .parse()
                .map_err(|e| parse_err(format!("column k: {e}")))?,
            in_kd: &rec[1] == "1",
            e_k: f(2)?,
            sqrt_s: f(3)?,
            lambda_norm: f(5)?,
            violation: f(7)?,
            primal_dev: f(9)?,
            dual_dev: f(12)?,
            xdev: f(14)?,
            bounds,
        });
    }
    if rows.is_empty() {
        return Err(parse_err("trace has no rows".into()));
    }
    Ok(LoadedTrace {
        path: path.to_owned(),
        meta,
        rows,
    })
}

/// Least-squares slope of `ln y` against `ln (k + 1)` over rows with
/// `k >= k_from` and `y > 0`. `None` with fewer than two usable points.
pub fn loglog_slope(
    rows: &[MetricRow],
    k_from: usize,
    y: impl Fn(&MetricRow) -> f64,
) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.k >= k_from)
        .filter_map(|r| {
            let v = y(r);
            (v > 0.0 && v.is_finite()).then(|| (((r.k + 1) as f64).ln(), v.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Count of rows where `metric` escapes its envelope, or `None` without envelopes.
pub fn dominance_failures(rows: &[MetricRow], metric: Metric) -> Option<usize> {
    let mut failures = 0;
    for r in rows {
        if !r.dominated(metric)? {
            failures += 1;
        }
    }
    Some(failures)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_owned(), |v| format!("{v:+.3}"))
}

/// Markdown comparison of several traces of the same problem.
pub fn cmd_report(paths: &[PathBuf]) -> Result<String> {
    let traces = paths
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<Vec<_>>>()?;
    let hashes: Vec<&str> = traces
        .iter()
        .map(|t| t.meta.get("problem_hash").map_or("", String::as_str))
        .collect();
    if let Some(i) = hashes.iter().position(|h| *h != hashes[0]) {
        return Err(Error::Trace(format!(
            "problem hash mismatch: {} has {}, {} has {}",
            traces[0].path.display(),
            hashes[0],
            traces[i].path.display(),
            hashes[i]
        )));
    }

    let mut out = String::from("# Trace report\n\n");
    writeln!(out, "Problem hash: `{}`\n", hashes[0]).unwrap();

    out.push_str("## Final metrics\n\n");
    out.push_str(
        "| trace | k | sqrtS | lambda_norm | violation | primal_dev | dual_dev | xdev |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for t in &traces {
        let r = t.rows.last().unwrap();
        writeln!(
            out,
            "| {} | {} | {:.6e} | {:.6e} | {:.6e} | {:.6e} | {:.6e} | {:.6e} |",
            t.label(),
            r.k,
            r.sqrt_s,
            r.lambda_norm,
            r.violation,
            r.primal_dev,
            r.dual_dev,
            r.xdev
        )
        .unwrap();
    }

    out.push_str("\n## Envelope dominance\n\n| trace |");
    for m in Metric::ALL {
        write!(out, " {} |", m.name()).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(Metric::ALL.len()));
    out.push('\n');
    for t in &traces {
        write!(out, "| {} |", t.label()).unwrap();
        for m in Metric::ALL {
            let cell = match dominance_failures(&t.rows, m) {
                None => "n/a".to_owned(),
                Some(0) => "PASS".to_owned(),
                Some(n) => format!("FAIL ({n} rows)"),
            };
            write!(out, " {cell} |").unwrap();
        }
        out.push('\n');
    }

    out.push_str("\n## Decay exponents (log-log slope over the final decade)\n\n");
    out.push_str("| trace | k range | sqrtS | violation | abs primal_dev | dual_dev | xdev |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for t in &traces {
        let last = t.rows.last().unwrap().k;
        let from = (last + 1) / 10;
        let slope = |f: fn(&MetricRow) -> f64| fmt_opt(loglog_slope(&t.rows, from, f));
        writeln!(
            out,
            "| {} | {}..={} | {} | {} | {} | {} | {} |",
            t.label(),
            from,
            last,
            slope(|r| r.sqrt_s),
            slope(|r| r.violation),
            slope(|r| r.primal_dev.abs()),
            slope(|r| r.dual_dev),
            slope(|r| r.xdev)
        )
        .unwrap();
    }
    Ok(out)
}

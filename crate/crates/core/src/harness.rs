//! Experiment orchestration: configuration parsing, strategy families,
//! study drivers, and CSV persistence.
//!
//! Configuration files are flat `key = value` text with `#` comments and
//! whitespace-separated vectors:
//!
//! ```text
//! classes = 2
//! lambda = 0.5 0.5
//! mu = 1.0 1.0
//! lambda_hat = 0 0
//! mu_hat = 1 1
//! x0_hat = 0 0
//! cost.c = 1 1
//! cost.p = 2 2
//! div.kappa_A = 1 1
//! div.kappa_S = 1 1
//! div.pbar = 2
//! discount = exp 1.0            # or: horizon 10.0
//! adversary = zero              # zero | const v1 .. v2I | feedback boundary <k> | schedule <file>
//! adversary.delta = 0.1
//! adversary.bound = 2.0
//! study.kind = convergence      # convergence | collapse | policy_dominance | value_limit
//! study.n_grid = 16 64 256
//! study.reps = 2000
//! study.limit_reps = 4000
//! study.seed = 1
//! study.family = full           # full | zero | const
//! study.family_levels = -1 0 1
//! ```
//!
//! Every emitted table is reproducible bit for bit from the configuration
//! file and master seed; CSV schemas are stable and documented per study.

use crate::adversary::{AdversaryStrategy, FeedbackRule};
use crate::curve::{CurveTable, DEFAULT_TABLE_POINTS};
use crate::error::{Error, Result};
use crate::limit_game::{estimate_value, CostEstimate};
use crate::model::{CostModel, Discount, DivergenceModel, ModelBundle, SystemConfig};
use crate::prelimit::{
    collapse_metric, estimate_qcp_cost, simulate_trajectory, Policy, PrelimitParams,
    DEFAULT_EVENT_CAP, DEFAULT_OUTPUT_POINTS,
};
use crate::{scalar, Scalar};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Study kinds the driver knows how to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    Convergence,
    Collapse,
    PolicyDominance,
    ValueLimit,
}

impl StudyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(StudyKind::Convergence),
            "collapse" => Ok(StudyKind::Collapse),
            "policy_dominance" => Ok(StudyKind::PolicyDominance),
            "value_limit" => Ok(StudyKind::ValueLimit),
            other => Err(Error::InvalidStudy {
                message: format!("unknown study kind '{other}'"),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Convergence => "convergence",
            StudyKind::Collapse => "collapse",
            StudyKind::PolicyDominance => "policy_dominance",
            StudyKind::ValueLimit => "value_limit",
        }
    }
}

/// Adversary-family description used by the value searches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    /// Only the zero strategy.
    ZeroOnly,
    /// Zero plus the constant grid.
    ConstGrid,
    /// Zero, the constant grid, and the boundary feedback rule.
    Full,
}

impl FamilyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(FamilyKind::ZeroOnly),
            "const" => Ok(FamilyKind::ConstGrid),
            "full" => Ok(FamilyKind::Full),
            other => Err(Error::InvalidStudy {
                message: format!("unknown family '{other}'"),
            }),
        }
    }
}

/// Build the finite strategy family searched over: the grid applies a
/// common level `a` to all arrival streams and `b` to all service streams,
/// `(a, b)` ranging over `levels x levels` (9 points for the default
/// levels `-1, 0, 1`).
pub fn build_family<T: Scalar>(
    kind: &FamilyKind,
    class_count: usize,
    delta: T,
    bound: T,
    levels: &[T],
) -> Result<Vec<AdversaryStrategy<T>>> {
    let mut family = vec![AdversaryStrategy::zero(delta, bound)?];
    if *kind == FamilyKind::ZeroOnly {
        return Ok(family);
    }
    for &a in levels {
        for &b in levels {
            let mut v = vec![T::zero(); 2 * class_count];
            for i in 0..class_count {
                v[i] = a;
                v[class_count + i] = b;
            }
            family.push(AdversaryStrategy::constant(delta, bound, v)?);
        }
    }
    if *kind == FamilyKind::Full {
        family.push(AdversaryStrategy::feedback(
            delta,
            bound,
            FeedbackRule::BoundaryPush,
        )?);
    }
    Ok(family)
}

/// Numerical knobs shared by the simulators.
#[derive(Clone, Debug)]
pub struct SimSettings<T> {
    /// Euler step of the limit simulator; `None` means `1e-3 * horizon`.
    pub step: Option<T>,
    pub output_points: usize,
    pub event_cap: u64,
    pub table_points: usize,
}

impl<T: Scalar> Default for SimSettings<T> {
    fn default() -> Self {
        Self {
            step: None,
            output_points: DEFAULT_OUTPUT_POINTS,
            event_cap: DEFAULT_EVENT_CAP,
            table_points: DEFAULT_TABLE_POINTS,
        }
    }
}

impl<T: Scalar> SimSettings<T> {
    pub fn limit_step(&self, horizon: T) -> T {
        self.step.unwrap_or(scalar::<T>(1e-3) * horizon)
    }
}

/// A study request: what to run, at which scales, how many replications.
#[derive(Clone, Debug)]
pub struct StudySpec<T> {
    pub kind: StudyKind,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub limit_reps: usize,
    pub family: Vec<AdversaryStrategy<T>>,
    /// The single strategy configured by the `adversary =` line; used by
    /// collapse studies and one-off runs.
    pub baseline: AdversaryStrategy<T>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl<T: Scalar> StudySpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::InvalidStudy {
                message: "study.n_grid must not be empty".into(),
            });
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidStudy {
                message: "study.n_grid must be strictly increasing".into(),
            });
        }
        if self.reps < 2 || self.limit_reps < 2 {
            return Err(Error::InvalidStudy {
                message: "study.reps and study.limit_reps must be at least 2".into(),
            });
        }
        Ok(())
    }
}

/// Fully parsed configuration bundle.
#[derive(Clone, Debug)]
pub struct ParsedConfig<T> {
    pub model: ModelBundle<T>,
    pub study: StudySpec<T>,
    pub sim: SimSettings<T>,
}

struct RawConfig {
    path: String,
    entries: HashMap<String, (usize, String)>,
}

impl RawConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: "expected 'key = value'".into(),
                });
            };
            entries.insert(
                key.trim().to_string(),
                (lineno + 1, value.trim().to_string()),
            );
        }
        Ok(Self {
            path: path.display().to_string(),
            entries,
        })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    fn parse_err(&self, key: &str, message: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line_of(key),
            message,
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        match self.entries.get(key) {
            Some((_, v)) => Ok(v),
            None => Err(Error::Parse {
                path: self.path.clone(),
                line: 0,
                message: format!("missing required key '{key}'"),
            }),
        }
    }

    fn optional(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn floats<T: Scalar>(&self, key: &str, expect: Option<usize>) -> Result<Vec<T>> {
        let raw = self.required(key)?;
        let mut out = Vec::new();
        for tok in raw.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| self.parse_err(key, format!("'{tok}' is not a number")))?;
            out.push(scalar(v));
        }
        if let Some(x) = expect {
            if out.len() != x {
                return Err(self.parse_err(
                    key,
                    format!("{key} must have {x} entries, got {}", out.len()),
                ));
            }
        }
        Ok(out)
    }

    fn floats_or<T: Scalar>(&self, key: &str, expect: usize, default: f64) -> Result<Vec<T>> {
        if self.entries.contains_key(key) {
            self.floats(key, Some(expect))
        } else {
            Ok(vec![scalar(default); expect])
        }
    }

    fn float<T: Scalar>(&self, key: &str) -> Result<T> {
        let v = self.floats::<T>(key, Some(1))?;
        Ok(v[0])
    }

    fn float_or<T: Scalar>(&self, key: &str, default: f64) -> Result<T> {
        if self.entries.contains_key(key) {
            self.float(key)
        } else {
            Ok(scalar(default))
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.optional(key) {
            None => Ok(default),
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|_| self.parse_err(key, format!("'{raw}' is not a count"))),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.optional(key) {
            None => Ok(default),
            Some(raw) => raw
                .trim()
                .parse()
                .map_err(|_| self.parse_err(key, format!("'{raw}' is not an integer"))),
        }
    }
}

fn parse_schedule_file<T: Scalar>(path: &Path, streams: usize) -> Result<Vec<Vec<T>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(usize, Vec<T>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let idx: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "expected 'grid_index, v1, ..., v2I'".into(),
            })?;
        let mut vals = Vec::new();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("'{p}' is not a number"),
            })?;
            vals.push(scalar(v));
        }
        if vals.len() != streams {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("expected {streams} values after the grid index"),
            });
        }
        rows.push((idx, vals));
    }
    rows.sort_by_key(|(idx, _)| *idx);
    let max_idx = rows.last().map(|(idx, _)| *idx).unwrap_or(0);
    let mut table = vec![vec![T::zero(); streams]; max_idx + 1];
    for (idx, vals) in rows {
        table[idx] = vals;
    }
    Ok(table)
}

/// Parse and validate a configuration file into the model bundle, study
/// spec, and simulator settings. The first violated constraint is reported
/// with its line number.
pub fn parse_config<T: Scalar>(path: &Path) -> Result<ParsedConfig<T>> {
    let raw = RawConfig::load(path)?;

    let classes = raw.usize_or("classes", 0)?;
    if classes == 0 {
        return Err(raw.parse_err("classes", "a positive 'classes' count is required".into()));
    }

    let lambda: Vec<T> = raw.floats("lambda", Some(classes))?;
    let mu: Vec<T> = raw.floats("mu", Some(classes))?;
    let lambda_hat: Vec<T> = raw.floats_or("lambda_hat", classes, 0.0)?;
    let mu_hat: Vec<T> = raw.floats_or("mu_hat", classes, 0.0)?;
    let x0_hat: Vec<T> = raw.floats_or("x0_hat", classes, 0.0)?;
    let system = SystemConfig::new(lambda, mu, lambda_hat, mu_hat, x0_hat)
        .map_err(|e| e.at_line(raw.line_of("lambda")))?;

    let cost = CostModel::new(
        raw.floats("cost.c", Some(classes))?,
        raw.floats("cost.p", Some(classes))?,
    )
    .map_err(|e| e.at_line(raw.line_of("cost.c")))?;

    let divergence = DivergenceModel::new(
        raw.floats("div.kappa_A", Some(classes))?,
        raw.floats("div.kappa_S", Some(classes))?,
        raw.float("div.pbar")?,
    )
    .map_err(|e| e.at_line(raw.line_of("div.kappa_A")))?;
    divergence
        .validate_against(&cost)
        .map_err(|e| e.at_line(raw.line_of("div.pbar")))?;

    let discount = {
        let spec = raw.required("discount")?;
        let mut parts = spec.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let value: f64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| {
            raw.parse_err("discount", "expected 'exp <rate>' or 'horizon <T>'".into())
        })?;
        match kind {
            "exp" => Discount::exponential(scalar(value)),
            "horizon" => Discount::finite_horizon(scalar(value)),
            other => Err(Error::InvalidParameter {
                message: format!("unknown discount kind '{other}'"),
            }),
        }
        .map_err(|e| e.at_line(raw.line_of("discount")))?
    };

    let model = ModelBundle::new(system, cost, divergence, discount)?;

    let delta: T = raw.float_or("adversary.delta", 0.1)?;
    let bound: T = raw.float_or("adversary.bound", 2.0)?;
    let baseline = {
        let spec = raw.optional("adversary").unwrap_or("zero");
        let mut parts = spec.split_whitespace();
        let kind = parts.next().unwrap_or("zero");
        match kind {
            "zero" => AdversaryStrategy::zero(delta, bound),
            "const" => {
                let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
                let vals = vals.map_err(|_| {
                    raw.parse_err("adversary", "const needs 2I numeric values".into())
                })?;
                if vals.len() != 2 * classes {
                    return Err(raw.parse_err(
                        "adversary",
                        format!("const needs {} values, got {}", 2 * classes, vals.len()),
                    ));
                }
                AdversaryStrategy::constant(delta, bound, vals.into_iter().map(scalar).collect())
            }
            "feedback" => {
                let rule = FeedbackRule::parse(parts.next().unwrap_or(""))
                    .map_err(|e| e.at_line(raw.line_of("adversary")))?;
                let k: T = parts
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .map(scalar)
                    .unwrap_or(bound);
                AdversaryStrategy::feedback(delta, k, rule)
            }
            "schedule" => {
                let file = parts.next().ok_or_else(|| {
                    raw.parse_err("adversary", "schedule needs a CSV path".into())
                })?;
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let rows = parse_schedule_file(&base.join(file), 2 * classes)?;
                AdversaryStrategy::schedule(delta, bound, rows)
            }
            other => Err(Error::InvalidParameter {
                message: format!("unknown adversary kind '{other}'"),
            }),
        }
        .map_err(|e| e.at_line(raw.line_of("adversary")))?
    };

    let family_kind = match raw.optional("study.family") {
        None => FamilyKind::Full,
        Some(s) => FamilyKind::parse(s).map_err(|e| e.at_line(raw.line_of("study.family")))?,
    };
    let levels: Vec<T> = if raw.optional("study.family_levels").is_some() {
        raw.floats("study.family_levels", None)?
    } else {
        vec![scalar(-1.0), scalar(0.0), scalar(1.0)]
    };
    let family = build_family(&family_kind, classes, delta, bound, &levels)?;

    let kind = match raw.optional("study.kind") {
        None => StudyKind::Convergence,
        Some(s) => StudyKind::parse(s).map_err(|e| e.at_line(raw.line_of("study.kind")))?,
    };
    let n_grid: Vec<u64> = match raw.optional("study.n_grid") {
        None => vec![16, 64, 256],
        Some(rawv) => {
            let mut out = Vec::new();
            for tok in rawv.split_whitespace() {
                out.push(tok.parse().map_err(|_| {
                    raw.parse_err("study.n_grid", format!("'{tok}' is not an integer"))
                })?);
            }
            out
        }
    };

    let study = StudySpec {
        kind,
        n_grid,
        reps: raw.usize_or("study.reps", 200)?,
        limit_reps: raw.usize_or("study.limit_reps", 400)?,
        family,
        baseline,
        seed: raw.u64_or("study.seed", 1)?,
        out: raw.optional("study.out").map(PathBuf::from),
    };
    study
        .validate()
        .map_err(|e| e.at_line(raw.line_of("study.n_grid")))?;

    let sim = SimSettings {
        step: match raw.optional("sim.step") {
            None => None,
            Some(_) => Some(raw.float("sim.step")?),
        },
        output_points: raw.usize_or("sim.output_points", DEFAULT_OUTPUT_POINTS)?,
        event_cap: raw.u64_or("sim.event_cap", DEFAULT_EVENT_CAP)?,
        table_points: raw.usize_or("curve.table_points", DEFAULT_TABLE_POINTS)?,
    };

    Ok(ParsedConfig { model, study, sim })
}

/// A rendered CSV table with a stable column order.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub header: String,
    pub rows: Vec<String>,
}

impl CsvTable {
    pub fn new(header: impl Into<String>) -> Self {
        Self {
            header: header.into(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Shortest-roundtrip float formatting keeps tables bit-reproducible.
pub fn fmt_float<T: Scalar>(v: T) -> String {
    format!("{:?}", v.to_f64_lossy())
}

fn estimate_columns<T: Scalar>(est: &CostEstimate<T>) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{}",
        est.replications,
        fmt_float(est.mean),
        fmt_float(est.std_error)
    );
    let _ = write!(s, ",{}", fmt_float(est.holding));
    for d in &est.divergence {
        let _ = write!(s, ",{}", fmt_float(*d));
    }
    s
}

fn div_header(class_count: usize) -> String {
    let mut s = String::new();
    for i in 0..class_count {
        let _ = write!(s, ",div_A_{}", i + 1);
    }
    for i in 0..class_count {
        let _ = write!(s, ",div_S_{}", i + 1);
    }
    s
}

/// Robust prelimit value at one scale: the family maximum of the estimated
/// cost under the given policy. Returns `(best index, estimates)`.
pub fn prelimit_value<T: Scalar>(
    model: &ModelBundle<T>,
    family: &[AdversaryStrategy<T>],
    params: &PrelimitParams<T>,
    reps: usize,
    seed: u64,
) -> Result<(usize, Vec<CostEstimate<T>>)> {
    let mut estimates = Vec::with_capacity(family.len());
    let mut best = 0usize;
    for (idx, strategy) in family.iter().enumerate() {
        let est = estimate_qcp_cost(model, strategy, params, reps, seed)?;
        if est.mean
            > estimates
                .get(best)
                .map_or(T::neg_infinity(), |e: &CostEstimate<T>| e.mean)
        {
            best = idx;
        }
        estimates.push(est);
    }
    Ok((best, estimates))
}

/// Convergence study: per scale, the prelimit robust value under the
/// generalized c-mu rule next to the limit value, with the gap.
///
/// Columns: `n, policy, V_hat_n, SE, V_hat_limit, SE_limit, gap`.
pub fn run_convergence_study<T: Scalar>(
    parsed: &ParsedConfig<T>,
    policy: Policy,
) -> Result<CsvTable> {
    let ParsedConfig { model, study, sim } = parsed;
    study.validate()?;
    let horizon = model.discount.effective_horizon();
    let table =
        CurveTable::with_default_range(&model.system, &model.cost, sim.table_points, horizon);
    let step = sim.limit_step(horizon);
    let search = estimate_value(
        model,
        &table,
        &study.family,
        study.family.len(),
        horizon,
        step,
        study.limit_reps,
        study.seed,
    );
    let limit = search.best_estimate().clone();

    let mut out = CsvTable::new("n,policy,V_hat_n,SE,V_hat_limit,SE_limit,gap");
    for &n in &study.n_grid {
        let params = PrelimitParams {
            n,
            policy: policy.clone(),
            horizon,
            output_points: sim.output_points,
            event_cap: sim.event_cap,
        };
        let (best, estimates) =
            prelimit_value(model, &study.family, &params, study.reps, study.seed)?;
        let v_n = &estimates[best];
        let gap = (v_n.mean - limit.mean).abs();
        out.push_row(format!(
            "{},{},{},{},{},{},{}",
            n,
            policy.name(),
            fmt_float(v_n.mean),
            fmt_float(v_n.std_error),
            fmt_float(limit.mean),
            fmt_float(limit.std_error),
            fmt_float(gap),
        ));
    }
    Ok(out)
}

/// Nearest-rank quantile of an unsorted sample.
pub fn quantile<T: Scalar>(values: &mut [T], q: f64) -> T {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN metrics"));
    let pos = ((values.len() - 1) as f64 * q).round() as usize;
    values[pos]
}

/// Collapse study: median and 90th-percentile collapse metric per scale
/// under the configured baseline adversary and the c-mu rule.
///
/// Columns: `n, median_collapse_metric, q90_collapse_metric, reps`.
pub fn run_collapse_study<T: Scalar>(parsed: &ParsedConfig<T>) -> Result<CsvTable> {
    let ParsedConfig { model, study, sim } = parsed;
    study.validate()?;
    let horizon = model.discount.effective_horizon();
    let table =
        CurveTable::with_default_range(&model.system, &model.cost, sim.table_points, horizon);

    let mut out = CsvTable::new("n,median_collapse_metric,q90_collapse_metric,reps");
    for &n in &study.n_grid {
        let params = PrelimitParams {
            n,
            policy: Policy::CmuPreemptive,
            horizon,
            output_points: sim.output_points,
            event_cap: sim.event_cap,
        };
        let metrics: Vec<Result<T>> = (0..study.reps as u64)
            .map(|rep| {
                let traj = simulate_trajectory(model, &study.baseline, &params, study.seed, rep)?;
                Ok(collapse_metric(&traj, &table, &model.system))
            })
            .collect();
        let mut values = Vec::with_capacity(study.reps);
        for m in metrics {
            values.push(m?);
        }
        let median = quantile(&mut values, 0.5);
        let q90 = quantile(&mut values, 0.9);
        out.push_row(format!(
            "{},{},{},{}",
            n,
            fmt_float(median),
            fmt_float(q90),
            study.reps
        ));
    }
    Ok(out)
}

/// Policy-dominance study at the largest configured scale: the constant
/// strategy maximizing the limit-game cost is fixed, then every policy is
/// priced against it.
///
/// Columns: `policy, n, strategy_id, reps, mean, std_error, holding, div_*`.
pub fn run_policy_dominance_study<T: Scalar>(parsed: &ParsedConfig<T>) -> Result<CsvTable> {
    let ParsedConfig { model, study, sim } = parsed;
    study.validate()?;
    let horizon = model.discount.effective_horizon();
    let table =
        CurveTable::with_default_range(&model.system, &model.cost, sim.table_points, horizon);
    let step = sim.limit_step(horizon);

    // restrict the search to constant strategies (and zero)
    let constants: Vec<AdversaryStrategy<T>> = study
        .family
        .iter()
        .filter(|s| s.is_zero() || s.id().starts_with("const"))
        .cloned()
        .collect();
    let search = estimate_value(
        model,
        &table,
        &constants,
        constants.len(),
        horizon,
        step,
        study.limit_reps,
        study.seed,
    );
    let worst = search.best_strategy().clone();

    let n = *study.n_grid.last().expect("validated non-empty");
    let class_count = model.system.class_count();
    let mut policies = vec![Policy::CmuPreemptive, Policy::CmuNonpreemptive];
    policies.push(Policy::StaticPriority((0..class_count).collect()));
    policies.push(Policy::StaticPriority((0..class_count).rev().collect()));
    policies.push(Policy::FixedFraction);

    let mut out = CsvTable::new(format!(
        "policy,n,strategy_id,reps,mean,std_error,holding{}",
        div_header(class_count)
    ));
    for policy in policies {
        let params = PrelimitParams {
            n,
            policy: policy.clone(),
            horizon,
            output_points: sim.output_points,
            event_cap: sim.event_cap,
        };
        let est = estimate_qcp_cost(model, &worst, &params, study.reps, study.seed)?;
        out.push_row(format!(
            "{},{},{},{}",
            policy.name(),
            n,
            worst.id(),
            estimate_columns(&est)
        ));
    }
    Ok(out)
}

/// Render a finished limit-value search as its CSV table.
///
/// Columns: `strategy_id, reps, mean, std_error, holding, div_A_1..I,
/// div_S_1..I, h, T_eff, seed`.
pub fn value_search_table<T: Scalar>(
    parsed: &ParsedConfig<T>,
    search: &crate::limit_game::ValueSearch<T>,
) -> CsvTable {
    let horizon = parsed.model.discount.effective_horizon();
    let step = parsed.sim.limit_step(horizon);
    let class_count = parsed.model.system.class_count();
    let mut out = CsvTable::new(format!(
        "strategy_id,reps,mean,std_error,holding{},h,T_eff,seed",
        div_header(class_count)
    ));
    for (strategy, est) in &search.evaluated {
        out.push_row(format!(
            "{},{},{},{},{}",
            strategy.id(),
            estimate_columns(est),
            fmt_float(step),
            fmt_float(horizon),
            parsed.study.seed
        ));
    }
    out
}

/// Limit-value study: one row per strategy of the family.
pub fn run_value_limit_study<T: Scalar>(parsed: &ParsedConfig<T>) -> Result<CsvTable> {
    let ParsedConfig { model, study, sim } = parsed;
    study.validate()?;
    let horizon = model.discount.effective_horizon();
    let table =
        CurveTable::with_default_range(&model.system, &model.cost, sim.table_points, horizon);
    let step = sim.limit_step(horizon);
    let search = estimate_value(
        model,
        &table,
        &study.family,
        study.family.len(),
        horizon,
        step,
        study.limit_reps,
        study.seed,
    );
    Ok(value_search_table(parsed, &search))
}

/// Dispatch a study by its configured kind.
pub fn run_study<T: Scalar>(parsed: &ParsedConfig<T>) -> Result<CsvTable> {
    match parsed.study.kind {
        StudyKind::Convergence => run_convergence_study(parsed, Policy::CmuPreemptive),
        StudyKind::Collapse => run_collapse_study(parsed),
        StudyKind::PolicyDominance => run_policy_dominance_study(parsed),
        StudyKind::ValueLimit => run_value_limit_study(parsed),
    }
}

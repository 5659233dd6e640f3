//! Experiment registry, rate fitting and table output.
//!
//! Each experiment builds its mesh levels, measures the quantities of one
//! estimate and turns them into a [`RateTable`] with a verdict.

mod algebra;
mod deform;
mod geometry;
mod interp;
mod levels;
mod norms_suite;
mod panel;
mod pde;
mod sampled;

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use levels::clear_cache;
pub use sampled::{gagliardo_spectral_panel, GagliardoPanel};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("at least one mesh level is required")]
    NoLevels,
    #[error("polynomial order must be 1 or 2, got {0}")]
    Order(usize),
    #[error("kappa must be positive, got {0}")]
    Kappa(f64),
    #[error("{dofs} degrees of freedom exceed the dense eigensolve cap {cap}")]
    DofCap { dofs: usize, cap: usize },
    #[error("rate fit needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("rate fit needs positive values, got {0}")]
    NonPositive(f64),
    #[error("rate fit needs distinct mesh sizes")]
    RepeatedH,
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Fem(#[from] crate::fem::FemError),
    #[error(transparent)]
    Norm(#[from] crate::norms::NormError),
    #[error(transparent)]
    Lift(#[from] crate::lift::LiftError),
    #[error(transparent)]
    Solver(#[from] crate::solvers::SolverError),
    #[error(transparent)]
    Quasi(#[from] crate::quasi::QuasiError),
    #[error(transparent)]
    Multilinear(#[from] crate::multilinear::MultilinearError),
    #[error(transparent)]
    Gagliardo(#[from] crate::gagliardo::GagliardoError),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub order: usize,
    pub levels: usize,
    pub seed: u64,
    pub kappa: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            order: 1,
            levels: 4,
            seed: 20240917,
            kappa: 0.1,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.order != 1 && self.order != 2 {
            return Err(HarnessError::Order(self.order));
        }
        if self.levels == 0 {
            return Err(HarnessError::NoLevels);
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(HarnessError::Kappa(self.kappa));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One verdict ingredient: a measured value against a stated bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub experiment: String,
    pub statement: String,
    pub config: Config,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fitted_slope: Option<f64>,
    pub fit_r2: Option<f64>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl RateTable {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// A column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Round to 12 significant digits, the precision every table is emitted at.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.11e}")
    }
}

/// Accumulates rows and checks; `finish` fixes the verdict.
pub(crate) struct TableBuilder {
    table: RateTable,
}

impl TableBuilder {
    pub fn new(name: &str, config: &Config, columns: &[&str]) -> TableBuilder {
        let statement = registry()
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.statement.to_string())
            .unwrap_or_default();
        TableBuilder {
            table: RateTable {
                experiment: name.to_string(),
                statement,
                config: *config,
                columns: columns.iter().map(|c| c.to_string()).collect(),
                rows: Vec::new(),
                fitted_slope: None,
                fit_r2: None,
                checks: Vec::new(),
                verdict: Verdict::Fail,
                notes: Vec::new(),
            },
        }
    }

    pub fn row(&mut self, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.table.columns.len());
        self.table.rows.push(values);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.table.notes.push(text.into());
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, bound: impl Into<String>, pass: bool) {
        self.table.checks.push(Check {
            name: name.into(),
            value,
            bound: bound.into(),
            pass: pass && !value.is_nan(),
        });
    }

    /// `value ≤ bound`.
    pub fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.check(name, value, format!("<= {}", fmt_num(bound)), value <= bound);
    }

    pub fn at_least(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.check(name, value, format!(">= {}", fmt_num(bound)), value >= bound);
    }

    /// Fits the column `col` against `h` and checks `|slope - target| ≤ tol`.
    /// The first fitted column becomes the table's headline slope.
    pub fn slope(&mut self, col: &str, target: f64, tol: f64) -> Result<f64, HarnessError> {
        let (s, r2) = self.fit(col)?;
        self.check(
            format!("slope {col}"),
            s,
            format!("in [{}, {}]", fmt_num(target - tol), fmt_num(target + tol)),
            (s - target).abs() <= tol,
        );
        self.headline(s, r2);
        Ok(s)
    }

    /// Checks that the fitted slope of `col` is at least `min`.
    pub fn slope_at_least(&mut self, col: &str, min: f64) -> Result<f64, HarnessError> {
        let (s, r2) = self.fit(col)?;
        self.at_least(format!("slope {col}"), s, min);
        self.headline(s, r2);
        Ok(s)
    }

    fn headline(&mut self, s: f64, r2: f64) {
        if self.table.fitted_slope.is_none() {
            self.table.fitted_slope = Some(s);
            self.table.fit_r2 = Some(r2);
        }
    }

    fn fit(&self, col: &str) -> Result<(f64, f64), HarnessError> {
        let h = self.table.column("h").expect("rate tables carry an h column");
        let v = self.table.column(col).expect("fitted column exists");
        fit_rate(&h.into_iter().zip(v).collect::<Vec<_>>())
    }

    /// Boundedness across levels: max/min ≤ 4, and the last level within a
    /// factor 2 of the second.
    pub fn bounded_ratio(&mut self, col: &str) {
        let v = self.table.column(col).expect("ratio column exists");
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        self.at_most(format!("spread {col}"), spread, 4.0);
        if v.len() >= 2 {
            let drift = v[v.len() - 1] / v[1];
            self.check(format!("drift {col}"), drift, "in [0.5, 2]", (0.5..=2.0).contains(&drift));
        }
    }

    pub fn column(&self, col: &str) -> Vec<f64> {
        self.table.column(col).expect("column exists")
    }

    /// Every value of the column is at most `bound`.
    pub fn column_at_most(&mut self, col: &str, bound: f64) {
        let v = self.table.column(col).expect("column exists");
        let m = v.iter().fold(0.0f64, |a, &x| a.max(x));
        self.at_most(format!("max {col}"), if v.iter().any(|x| x.is_nan()) { f64::NAN } else { m }, bound);
    }

    pub fn finish(mut self) -> RateTable {
        let t = &mut self.table;
        // declared ascending in h by construction; present coarse first
        if t.columns.first().map(|c| c.as_str()) == Some("h") {
            t.rows.sort_by(|a, b| b[0].partial_cmp(&a[0]).unwrap_or(std::cmp::Ordering::Equal));
        }
        for r in &mut t.rows {
            for v in r.iter_mut() {
                *v = round12(*v);
            }
        }
        for c in &mut t.checks {
            c.value = round12(c.value);
        }
        t.fitted_slope = t.fitted_slope.map(round12);
        t.fit_r2 = t.fit_r2.map(round12);
        t.verdict = if !t.checks.is_empty() && t.checks.iter().all(|c| c.pass) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.table
    }
}

/// Least-squares slope and r² of `log value` against `log h`.
pub fn fit_rate(samples: &[(f64, f64)]) -> Result<(f64, f64), HarnessError> {
    if samples.len() < 3 {
        return Err(HarnessError::TooFewSamples(samples.len()));
    }
    if let Some(&(_, v)) = samples.iter().find(|(h, v)| !(*v > 0.0) || !(*h > 0.0)) {
        return Err(HarnessError::NonPositive(v));
    }
    let xs: Vec<f64> = samples.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return Err(HarnessError::RepeatedH);
    }
    for i in 0..xs.len() {
        for j in 0..i {
            if xs[i] == xs[j] {
                return Err(HarnessError::RepeatedH);
            }
        }
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let r2 = if syy <= 1e-28 || sse <= 1e-28 * syy.max(1.0) {
        1.0
    } else {
        1.0 - sse / syy
    };
    Ok((slope, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Renders one table. Numbers use a fixed 12-significant-digit layout so
/// identical runs give identical bytes.
pub fn render(table: &RateTable, format: Format) -> Result<String, HarnessError> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(table)? + "\n"),
        Format::Csv => Ok(render_csv(table)),
    }
}

fn render_csv(t: &RateTable) -> String {
    let mut s = String::new();
    let c = &t.config;
    let _ = writeln!(s, "# experiment: {}", t.experiment);
    let _ = writeln!(s, "# statement: {}", t.statement);
    let _ = writeln!(s, "# order: {}, levels: {}, seed: {}, kappa: {}", c.order, c.levels, c.seed, fmt_num(c.kappa));
    match (t.fitted_slope, t.fit_r2) {
        (Some(a), Some(b)) => {
            let _ = writeln!(s, "# fitted_slope: {}, fit_r2: {}", fmt_num(a), fmt_num(b));
        }
        _ => {
            let _ = writeln!(s, "# fitted_slope: none");
        }
    }
    for ch in &t.checks {
        let _ = writeln!(
            s,
            "# check: {} = {} ({}) {}",
            ch.name,
            fmt_num(ch.value),
            ch.bound,
            if ch.pass { "pass" } else { "fail" }
        );
    }
    for n in &t.notes {
        let _ = writeln!(s, "# note: {n}");
    }
    let _ = writeln!(s, "# verdict: {}", t.verdict.as_str());
    let _ = writeln!(s, "{}", t.columns.join(","));
    for r in &t.rows {
        let line: Vec<String> = r.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Renders several tables into one document: CSV blocks separated by a
/// blank line, or a JSON array.
pub fn render_all(tables: &[RateTable], format: Format) -> Result<String, HarnessError> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(tables)? + "\n"),
        Format::Csv => Ok(tables.iter().map(render_csv).collect::<Vec<_>>().join("\n")),
    }
}

pub fn emit(table: &RateTable, format: Format, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, render(table, format)?)?;
    Ok(())
}

pub fn parse_json(text: &str) -> Result<RateTable, HarnessError> {
    Ok(serde_json::from_str(text)?)
}

type Runner = fn(&Config, &mut ChaCha8Rng) -> Result<RateTable, HarnessError>;

pub struct Experiment {
    pub name: &'static str,
    pub statement: &'static str,
    run: Runner,
}

static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "interp_rates",
        statement: "nodal interpolation error in L2 and H1",
        run: interp::interp_rates,
    },
    Experiment {
        name: "lift_consistency",
        statement: "lift Jacobian decay and lifted bilinear form errors",
        run: geometry::lift_consistency,
    },
    Experiment {
        name: "lift_multilinear",
        statement: "lift error of constant-coefficient multilinear forms",
        run: geometry::lift_multilinear,
    },
    Experiment {
        name: "sz_projection",
        statement: "Scott-Zhang operators are trace preserving projections",
        run: interp::sz_projection,
    },
    Experiment {
        name: "sz_error",
        statement: "error of the Dirichlet-lift Scott-Zhang interpolation",
        run: interp::sz_error,
    },
    Experiment {
        name: "dual_inverse",
        statement: "inverse estimates for negative order dual norms",
        run: norms_suite::dual_inverse,
    },
    Experiment {
        name: "inverse_estimate",
        statement: "inverse estimate for the discrete H3/2 norm",
        run: norms_suite::inverse_estimate,
    },
    Experiment {
        name: "h1_stability",
        statement: "H1 stability of the interpolation and the Dirichlet lift",
        run: interp::h1_stability,
    },
    Experiment {
        name: "norm_equivalence",
        statement: "equivalence of the zero-trace and full discrete H3/2 norms",
        run: norms_suite::norm_equivalence,
    },
    Experiment {
        name: "interpolant_membership",
        statement: "the interpolation of a regular function is in the discrete H3/2 space",
        run: norms_suite::interpolant_membership,
    },
    Experiment {
        name: "dirichlet_regularity",
        statement: "discrete H3/2 regularity of the discrete Dirichlet problem",
        run: pde::dirichlet_regularity,
    },
    Experiment {
        name: "robin_regularity",
        statement: "discrete H3/2 regularity of the discrete Robin problem",
        run: pde::robin_regularity,
    },
    Experiment {
        name: "smallness",
        statement: "small H1 functions satisfy the W1,inf-like smallness bound",
        run: pde::smallness,
    },
    Experiment {
        name: "product_sampled",
        statement: "H1/2 estimate of multilinear products",
        run: sampled::product_sampled,
    },
    Experiment {
        name: "comparison_identity",
        statement: "comparison decomposition of multilinear forms",
        run: algebra::comparison_identity,
    },
    Experiment {
        name: "deformation_discrete",
        statement: "discrete domain deformation estimate",
        run: deform::deformation_discrete,
    },
    Experiment {
        name: "deformation_continuous",
        statement: "continuous domain deformation estimate",
        run: deform::deformation_continuous,
    },
    Experiment {
        name: "leibniz_half",
        statement: "Leibniz rule for the H1/2 seminorm",
        run: sampled::leibniz_half,
    },
    Experiment {
        name: "neumann_decay",
        statement: "Neumann series bounds for (A+I)^-1 - I",
        run: algebra::neumann_decay,
    },
    Experiment {
        name: "resolvent_identity",
        statement: "resolvent difference identity",
        run: algebra::resolvent_identity,
    },
    Experiment {
        name: "det_identity",
        statement: "determinant as a multilinear form",
        run: algebra::det_identity,
    },
    Experiment {
        name: "duality_sampled",
        statement: "duality estimates for vector fields against gradients",
        run: norms_suite::duality_sampled,
    },
    Experiment {
        name: "l2_product",
        statement: "L2 estimates of multilinear products and their differences",
        run: sampled::l2_product,
    },
];

/// The experiment registry, in run order.
pub fn registry() -> &'static [Experiment] {
    REGISTRY
}

pub fn experiment_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.name).collect()
}

/// Runs one registered experiment. Its random stream depends only on the
/// seed and the experiment's registry position.
pub fn run_experiment(name: &str, config: &Config) -> Result<RateTable, HarnessError> {
    config.validate()?;
    let (idx, exp) = REGISTRY
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == name)
        .ok_or_else(|| HarnessError::UnknownExperiment(name.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(idx as u64 + 1);
    (exp.run)(config, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exact_power_law() {
        let (s, r2) = fit_rate(&[(1.0, 1.0), (0.5, 0.25), (0.25, 0.0625)]).unwrap();
        assert!(close(s, 2.0, 1e-12));
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn constant_values() {
        let (s, r2) = fit_rate(&[(1.0, 3.0), (0.5, 3.0), (0.25, 3.0)]).unwrap();
        assert!(close(s, 0.0, 1e-14));
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn three_halves() {
        let s = fit_rate(&[(1.0, 2.0), (0.5, 2.0 * 0.5f64.powf(1.5)), (0.25, 2.0 * 0.25f64.powf(1.5))])
            .unwrap()
            .0;
        assert!(close(s, 1.5, 1e-12));
    }

    #[test]
    fn fit_preconditions() {
        assert!(matches!(fit_rate(&[(1.0, 1.0), (0.5, 1.0)]), Err(HarnessError::TooFewSamples(2))));
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (0.5, 0.0), (0.25, 1.0)]),
            Err(HarnessError::NonPositive(_))
        ));
        assert!(matches!(
            fit_rate(&[(1.0, 1.0), (1.0, 2.0), (0.5, 1.0)]),
            Err(HarnessError::RepeatedH)
        ));
    }

    #[test]
    fn zero_levels_rejected() {
        let c = Config {
            levels: 0,
            ..Config::default()
        };
        assert!(matches!(run_experiment("inverse_estimate", &c), Err(HarnessError::NoLevels)));
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(
            run_experiment("no_such_thing", &Config::default()),
            Err(HarnessError::UnknownExperiment(_))
        ));
    }

    #[test]
    fn registry_names_are_unique() {
        let names = experiment_names();
        assert_eq!(names.len(), 23);
        for (i, a) in names.iter().enumerate() {
            assert!(!names[..i].contains(a));
        }
        assert!(REGISTRY.iter().all(|e| !e.statement.is_empty()));
    }

    fn sample_table() -> RateTable {
        let mut b = TableBuilder::new("interp_rates", &Config::default(), &["h", "err"]);
        for (h, e) in [(0.25, 0.0625 * 1.01), (1.0, 1.0), (0.5, 0.25)] {
            b.row(vec![h, e]);
        }
        b.slope("err", 2.0, 0.25).unwrap();
        b.note("sample");
        b.finish()
    }

    #[test]
    fn rows_in_decreasing_h() {
        let t = sample_table();
        let h = t.column("h").unwrap();
        assert!(h.windows(2).all(|w| w[0] > w[1]));
        assert!(t.passed());
    }

    #[test]
    fn csv_header_once() {
        let t = sample_table();
        let s = render(&t, Format::Csv).unwrap();
        assert_eq!(s.lines().filter(|l| *l == "h,err").count(), 1);
        assert_eq!(s.lines().filter(|l| !l.starts_with('#')).count(), 1 + t.rows.len());
    }

    #[test]
    fn json_round_trip() {
        let t = sample_table();
        let s = render(&t, Format::Json).unwrap();
        assert_eq!(parse_json(&s).unwrap(), t);
    }

    #[test]
    fn rendering_is_stable() {
        let a = render(&sample_table(), Format::Csv).unwrap();
        let b = render(&sample_table(), Format::Csv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(round12(2.0f64.sqrt())), round12(2.0f64.sqrt()));
        assert_eq!(round12(0.0), 0.0);
    }

    #[test]
    fn ratio_checks() {
        let mut b = TableBuilder::new("inverse_estimate", &Config::default(), &["h", "r"]);
        for (h, r) in [(1.0, 1.0), (0.5, 1.5), (0.25, 1.8), (0.125, 2.0)] {
            b.row(vec![h, r]);
        }
        b.bounded_ratio("r");
        let t = b.finish();
        assert!(t.passed());
        let drift = t.check("drift r").unwrap().value;
        // check values carry 12 significant digits
        assert!(close(drift, 2.0 / 1.5, 1e-11), "drift {drift}");

        let mut b = TableBuilder::new("inverse_estimate", &Config::default(), &["h", "r"]);
        for (h, r) in [(1.0, 1.0), (0.5, 2.0), (0.25, 4.0), (0.125, 8.0)] {
            b.row(vec![h, r]);
        }
        b.bounded_ratio("r");
        assert!(!b.finish().passed());
    }
}

use std::path::Path;

use rayon::prelude::*;

use crate::dicke::ModelParams;
use crate::error::{Error, Result};
use crate::harness::fit::{fit_scaling, FitResult};
use crate::interferometer::{self, ErrorConfig, ErrorSource, Observable};
use crate::metrology::{self, QfiConfig};
use crate::model::{self, Model, Preparation};
use crate::timebin::{self, BinSource, KrausMode};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// One-bin QFI per unit time.
    Qfi1,
    /// Two-bin QFI per unit time at the best lag.
    Qfi2,
    /// Smallest counting error over the lag grid, times `ΓΔt`.
    MzError,
    /// Two-bin QFI at the best lag for local-decay transients.
    LocalDecay,
    /// Relative deviation of exact and short-time bin observables.
    Convergence,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Qfi1 => "qfi1",
            Task::Qfi2 => "qfi2",
            Task::MzError => "mz_error",
            Task::LocalDecay => "localdecay",
            Task::Convergence => "convergence",
        }
    }

    fn quantity(&self) -> &'static str {
        match self {
            Task::Qfi1 | Task::Qfi2 | Task::LocalDecay => "qfi_per_time",
            Task::MzError => "error_scaled",
            Task::Convergence => "relative_deviation",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qfi1" => Ok(Task::Qfi1),
            "qfi2" => Ok(Task::Qfi2),
            "mz" | "mz_error" => Ok(Task::MzError),
            "localdecay" => Ok(Task::LocalDecay),
            "convergence" => Ok(Task::Convergence),
            _ => Err(Error::Parse(format!("unknown task '{s}'"))),
        }
    }
}

/// Preparation time policy.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum T1Policy {
    Stationary,
    /// `Γ t1` from the ground state.
    Fixed(f64),
    /// `k`-th maximum (from 1) of `<S_y>` from the ground state.
    SyMax(usize),
}

impl T1Policy {
    pub fn label(&self) -> String {
        match self {
            T1Policy::Stationary => "ss".into(),
            T1Policy::Fixed(t) => format!("{t}"),
            T1Policy::SyMax(1) => "sy_max".into(),
            T1Policy::SyMax(k) => format!("sy_max{k}"),
        }
    }

    pub fn resolve(&self, params: &ModelParams) -> Result<Preparation> {
        match self {
            T1Policy::Stationary => Ok(Preparation::Stationary),
            T1Policy::Fixed(t) => Ok(Preparation::FromGround { t1: t / params.gamma_coll }),
            T1Policy::SyMax(k) => Ok(Preparation::FromGround { t1: model::sy_maximum(&Model::new(params)?, *k)? }),
        }
    }
}

impl std::str::FromStr for T1Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ss" | "stationary" => Ok(T1Policy::Stationary),
            "sy_max" => Ok(T1Policy::SyMax(1)),
            _ => match s.strip_prefix("sy_max") {
                Some(k) => k
                    .parse()
                    .ok()
                    .filter(|&k| k > 0)
                    .map(T1Policy::SyMax)
                    .ok_or_else(|| Error::Parse(format!("bad t1 policy '{s}'"))),
                None => parse_f64(s).map(T1Policy::Fixed),
            },
        }
    }
}

/// Bin duration policy.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum DtPolicy {
    /// `ΓΔt = min(2.5e-5, 1e-3/N)`.
    Auto,
    /// Fixed `ΓΔt`.
    Fixed(f64),
}

impl DtPolicy {
    pub fn label(&self) -> String {
        match self {
            DtPolicy::Auto => "auto".into(),
            DtPolicy::Fixed(v) => format!("{v}"),
        }
    }

    pub fn resolve(&self, params: &ModelParams) -> f64 {
        match self {
            DtPolicy::Auto => metrology::default_dt(params),
            DtPolicy::Fixed(v) => v / params.gamma_coll,
        }
    }
}

impl std::str::FromStr for DtPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(DtPolicy::Auto)
        } else {
            parse_f64(s).map(DtPolicy::Fixed)
        }
    }
}

/// Lag grid policy (lags in units of `1/Γ`).
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum TauPolicy {
    /// Uniform grid over `[0, max]` with `per_period` points per mean-field
    /// period.
    Grid { max: f64, per_period: usize },
    Values(Vec<f64>),
}

impl TauPolicy {
    pub fn resolve(&self, params: &ModelParams) -> Vec<f64> {
        match self {
            TauPolicy::Grid { max, per_period } => metrology::lag_grid(params, max / params.gamma_coll, *per_period),
            TauPolicy::Values(v) => v.iter().map(|t| t / params.gamma_coll).collect(),
        }
    }
}

/// Output formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { csv: true, json: true, svg: false }
    }
}

impl std::str::FromStr for Formats {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut f = Formats { csv: true, json: false, svg: false };
        for item in split_list(s) {
            match item {
                "csv" => {}
                "json" => f.json = true,
                "svg" => f.svg = true,
                _ => return Err(Error::Parse(format!("unknown output format '{item}'"))),
            }
        }
        Ok(f)
    }
}

/// A grid of parameter points and what to compute at each.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SweepSpec {
    pub name: String,
    pub task: Task,
    pub n: Vec<usize>,
    pub omega_ratio: Vec<f64>,
    pub gamma_loc_ratio: Vec<f64>,
    pub dt: Vec<DtPolicy>,
    pub t1: Vec<T1Policy>,
    pub tau: TauPolicy,
    /// Bin states for QFI tasks and exact counting errors.
    pub source: BinSource,
    pub error_source: ErrorSource,
    /// `nd`, `n4`, `n5` for counting errors; `one_bin`, `two_bin` for
    /// convergence checks. Ignored by the other tasks.
    pub observables: Vec<String>,
    pub dg_rel: f64,
    pub kraus_mode: KrausMode,
    /// Keep only this many largest-N points in fits (0 = all).
    pub fit_restrict: usize,
    pub workers: usize,
    pub formats: Formats,
}

impl SweepSpec {
    /// A spec with one point of every axis and default settings.
    pub fn new(task: Task) -> Self {
        SweepSpec {
            name: task.as_str().into(),
            task,
            n: vec![10],
            omega_ratio: vec![1.0],
            gamma_loc_ratio: vec![0.0],
            dt: vec![DtPolicy::Auto],
            t1: vec![T1Policy::Stationary],
            tau: TauPolicy::Grid { max: 10.0, per_period: 40 },
            source: BinSource::ShortTimeAnalytic,
            error_source: ErrorSource::ShortTimeAnalytic,
            observables: default_observables(task),
            dg_rel: 1e-4,
            kraus_mode: KrausMode::ExactUnitary,
            fit_restrict: 0,
            workers: 1,
            formats: Formats::default(),
        }
    }

    pub fn from_ini_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini_str(&text)
    }

    /// Parses the INI grammar documented in the README.
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let sweep = ini
            .section(Some("sweep"))
            .ok_or_else(|| Error::Parse("config needs a [sweep] section".into()))?;
        let task: Task = sweep
            .get("task")
            .ok_or_else(|| Error::Parse("[sweep] needs a task".into()))?
            .parse()?;
        let mut s = SweepSpec::new(task);
        for (k, v) in sweep.iter() {
            match k {
                "task" => {}
                "name" => s.name = v.to_string(),
                "n" => s.n = parse_list(v, |x| x.parse::<usize>().map_err(|e| Error::Parse(format!("n: {e}"))))?,
                "omega_ratio" => s.omega_ratio = parse_list(v, parse_f64)?,
                "gamma_loc_ratio" => s.gamma_loc_ratio = parse_list(v, parse_f64)?,
                "dt" => s.dt = parse_list(v, str::parse)?,
                "t1" => s.t1 = parse_list(v, str::parse)?,
                "source" => s.source = v.parse()?,
                "error_source" => s.error_source = v.parse()?,
                "observables" => s.observables = split_list(v).map(String::from).collect(),
                "dg_rel" => s.dg_rel = parse_f64(v)?,
                "kraus" => s.kraus_mode = v.parse()?,
                _ => return Err(Error::Parse(format!("unknown key '{k}' in [sweep]"))),
            }
        }
        if let Some(sec) = ini.section(Some("tau")) {
            let mut max = 10.0;
            let mut per_period = 40;
            let mut values = None;
            for (k, v) in sec.iter() {
                match k {
                    "max" => max = parse_f64(v)?,
                    "per_period" => {
                        per_period = v.parse().map_err(|e| Error::Parse(format!("per_period: {e}")))?
                    }
                    "values" => values = Some(parse_list(v, parse_f64)?),
                    _ => return Err(Error::Parse(format!("unknown key '{k}' in [tau]"))),
                }
            }
            s.tau = match values {
                Some(v) => TauPolicy::Values(v),
                None => TauPolicy::Grid { max, per_period },
            };
        }
        if let Some(sec) = ini.section(Some("fit")) {
            for (k, v) in sec.iter() {
                match k {
                    "restrict_largest" => {
                        s.fit_restrict = v.parse().map_err(|e| Error::Parse(format!("restrict_largest: {e}")))?
                    }
                    _ => return Err(Error::Parse(format!("unknown key '{k}' in [fit]"))),
                }
            }
        }
        if let Some(sec) = ini.section(Some("output")) {
            for (k, v) in sec.iter() {
                match k {
                    "formats" => s.formats = v.parse()?,
                    "workers" => s.workers = v.parse().map_err(|e| Error::Parse(format!("workers: {e}")))?,
                    _ => return Err(Error::Parse(format!("unknown key '{k}' in [output]"))),
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty()
            || self.omega_ratio.is_empty()
            || self.gamma_loc_ratio.is_empty()
            || self.dt.is_empty()
            || self.t1.is_empty()
            || self.observable_axis().is_empty()
        {
            return Err(Error::InvalidParam("every sweep axis needs at least one value".into()));
        }
        if let TauPolicy::Values(v) = &self.tau {
            if v.is_empty() || v.iter().any(|t| !(*t >= 0.0)) || v.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidParam("tau values must be non-negative and ascending".into()));
            }
        }
        for o in self.observable_axis() {
            match (self.task, o.as_str()) {
                (Task::MzError, x) => {
                    x.parse::<Observable>()?;
                }
                (Task::Convergence, "one_bin" | "two_bin") => {}
                (Task::Convergence, x) => return Err(Error::Parse(format!("unknown convergence observable '{x}'"))),
                _ => {}
            }
        }
        if !(self.dg_rel > 0.0) {
            return Err(Error::InvalidParam("dg_rel must be positive".into()));
        }
        Ok(())
    }

    fn observable_axis(&self) -> Vec<String> {
        match self.task {
            Task::MzError => self
                .observables
                .iter()
                .map(|o| o.parse::<Observable>().map(|o| o.as_str().to_string()).unwrap_or_else(|_| o.clone()))
                .collect(),
            Task::Convergence => self.observables.clone(),
            _ => vec![String::new()],
        }
    }

    /// Grid points in output order: N varies fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &w in &self.omega_ratio {
            for &g in &self.gamma_loc_ratio {
                for &t1 in &self.t1 {
                    for &dt in &self.dt {
                        for obs in self.observable_axis() {
                            for &n in &self.n {
                                out.push(GridPoint {
                                    index: out.len(),
                                    n,
                                    omega_ratio: w,
                                    gamma_loc_ratio: g,
                                    t1,
                                    dt,
                                    observable: obs.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn default_observables(task: Task) -> Vec<String> {
    let v: &[&str] = match task {
        Task::MzError => &["nd", "n4", "n5"],
        Task::Convergence => &["one_bin", "two_bin"],
        _ => &[],
    };
    v.iter().map(|s| s.to_string()).collect()
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: '{s}'")))
}

pub(crate) fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

pub(crate) fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    split_list(s).map(f).collect()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub n: usize,
    pub omega_ratio: f64,
    pub gamma_loc_ratio: f64,
    pub t1: T1Policy,
    pub dt: DtPolicy,
    pub observable: String,
}

/// One output row. Failed points keep their coordinates, carry
/// `status = "error"` and the message, and leave the results empty.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub task: String,
    pub n: usize,
    pub omega_ratio: f64,
    pub gamma_loc_ratio: f64,
    pub t1_policy: String,
    pub t1: Option<f64>,
    pub dt_policy: String,
    pub dt: f64,
    pub dg: Option<f64>,
    pub observable: String,
    pub quantity: String,
    pub value: Option<f64>,
    pub tau_star: Option<f64>,
    pub convergence: Option<f64>,
    pub status: String,
    pub message: String,
    pub code_version: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Coordinates shared by all rows of one fit (everything but N).
    pub fn group_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.task, self.omega_ratio, self.gamma_loc_ratio, self.t1_policy, self.dt_policy, self.observable
        )
    }
}

#[derive(Default)]
struct PointValue {
    t1: Option<f64>,
    dg: Option<f64>,
    value: Option<f64>,
    tau_star: Option<f64>,
    convergence: Option<f64>,
}

fn evaluate(spec: &SweepSpec, pt: &GridPoint, params: &ModelParams, dt: f64) -> Result<PointValue> {
    let prep = pt.t1.resolve(params)?;
    let mut out = PointValue { t1: prep.t1(), ..Default::default() };
    match spec.task {
        Task::Qfi1 => {
            let cfg = QfiConfig { dt, dg_rel: spec.dg_rel, source: spec.source, kraus_mode: spec.kraus_mode };
            let r = metrology::qfi_one_bin(params, prep, &cfg)?;
            out.dg = Some(r.dg);
            out.value = Some(r.per_time);
            out.convergence = Some(r.convergence);
        }
        Task::Qfi2 | Task::LocalDecay => {
            let cfg = QfiConfig { dt, dg_rel: spec.dg_rel, source: spec.source, kraus_mode: spec.kraus_mode };
            let taus = spec.tau.resolve(params);
            let scan = metrology::qfi_vs_tau(params, prep, &taus, &cfg)?;
            let peak = &scan.results[scan.peak_index];
            out.dg = Some(peak.dg);
            out.value = Some(scan.peak_per_time);
            out.tau_star = Some(scan.tau_star);
            out.convergence = Some(peak.convergence);
        }
        Task::MzError => {
            let obs: Observable = pt.observable.parse()?;
            let cfg = ErrorConfig {
                dt,
                dg_rel: spec.dg_rel,
                source: spec.error_source,
                bins: spec.source,
                kraus_mode: spec.kraus_mode,
                mz: Default::default(),
            };
            let taus = spec.tau.resolve(params);
            let scan = interferometer::error_scan(params, prep, &taus, &cfg)?;
            let best = interferometer::optimum_of(scan.trace(obs), obs)?;
            out.dg = Some(spec.dg_rel * params.omega_c());
            out.value = Some(best.best.scaled(params.gamma_coll));
            out.tau_star = Some(best.tau_star);
        }
        Task::Convergence => {
            out.value = Some(match pt.observable.as_str() {
                "one_bin" => one_bin_deviation(params, prep, dt, spec.kraus_mode)?,
                _ => two_bin_deviation(params, prep, &spec.tau.resolve(params), dt, spec.kraus_mode)?,
            });
        }
    }
    Ok(out)
}

/// `|<b>_exact - <b>_short|/|<b>_short|` for the one-bin coherence.
pub fn one_bin_deviation(params: &ModelParams, prep: Preparation, dt: f64, mode: KrausMode) -> Result<f64> {
    let kp = timebin::kraus_pair(params, dt, mode)?;
    let rho = metrology::discrete_prepared(params, &kp, prep)?;
    let exact = timebin::one_bin_exact(&kp, &rho, prep.t1());
    let m = Model::new(params)?;
    let x = m.prepare(prep)?;
    let short = timebin::one_bin_analytic(&m.l, &x, dt, prep.t1())?;
    let a = short.data[(1, 0)];
    Ok((exact.data[(1, 0)] - a).norm() / a.norm())
}

/// Relative RMS deviation over the lag grid of the two-bin cross coherence
/// `<b1^dagger b2>`.
pub fn two_bin_deviation(params: &ModelParams, prep: Preparation, taus: &[f64], dt: f64, mode: KrausMode) -> Result<f64> {
    let kp = timebin::kraus_pair(params, dt, mode)?;
    let rho = metrology::discrete_prepared(params, &kp, prep)?;
    let gaps: Vec<u64> = taus.iter().map(|t| (t / dt).round() as u64).collect();
    let exact = timebin::two_bin_exact_scan(&kp, &rho, &gaps, prep.t1())?;
    let lags: Vec<f64> = gaps.iter().map(|&g| g as f64 * dt).collect();
    let m = Model::new(params)?;
    let tr = m.regression(prep, &lags, dt)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, e) in exact.iter().enumerate() {
        let s = timebin::two_bin_from_trace(params.n, params.gamma_coll, dt, &tr, k, prep.t1())?;
        num += (e.cross_coherence() - s.cross_coherence()).norm_sqr();
        den += s.cross_coherence().norm_sqr();
    }
    Ok((num / den).sqrt())
}

fn row_for(spec: &SweepSpec, pt: &GridPoint) -> SweepRow {
    let mut row = SweepRow {
        index: pt.index,
        task: spec.task.as_str().into(),
        n: pt.n,
        omega_ratio: pt.omega_ratio,
        gamma_loc_ratio: pt.gamma_loc_ratio,
        t1_policy: pt.t1.label(),
        t1: None,
        dt_policy: pt.dt.label(),
        dt: f64::NAN,
        dg: None,
        observable: pt.observable.clone(),
        quantity: spec.task.quantity().into(),
        value: None,
        tau_star: None,
        convergence: None,
        status: "ok".into(),
        message: String::new(),
        code_version: CODE_VERSION.into(),
    };
    let result = ModelParams::from_ratios(pt.n, pt.omega_ratio, pt.gamma_loc_ratio).and_then(|p| {
        let dt = pt.dt.resolve(&p);
        row.dt = dt;
        evaluate(spec, pt, &p, dt)
    });
    match result {
        Ok(v) => {
            row.t1 = v.t1;
            row.dg = v.dg;
            row.value = v.value;
            row.tau_star = v.tau_star;
            row.convergence = v.convergence;
        }
        Err(e) => {
            row.status = "error".into();
            row.message = e.to_string();
        }
    }
    row
}

/// Scaling fit over N for one group of rows.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupFit {
    pub key: String,
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub fit: Option<FitResult>,
    pub message: String,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepOutcome {
    pub name: String,
    pub code_version: String,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<GroupFit>,
    pub failures: usize,
}

impl SweepOutcome {
    pub fn has_failures(&self) -> bool {
        self.failures > 0
    }
}

/// Groups successful rows by everything but N and fits `value ∝ N^α` within
/// each group of at least two sizes.
pub fn fit_groups(rows: &[SweepRow], restrict_largest: usize) -> Vec<GroupFit> {
    let mut keys: Vec<String> = Vec::new();
    for r in rows {
        let k = r.group_key();
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for key in keys {
        let mut pts: Vec<(usize, f64)> = rows
            .iter()
            .filter(|r| r.is_ok() && r.group_key() == key)
            .filter_map(|r| r.value.map(|v| (r.n, v)))
            .collect();
        pts.sort_by_key(|p| p.0);
        let distinct = pts.windows(2).all(|w| w[0].0 != w[1].0);
        if pts.len() < 2 || !distinct {
            continue;
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (fit, message) = match fit_scaling(&xs, &ys, restrict_largest) {
            Ok(f) => (Some(f), String::new()),
            Err(e) => (None, e.to_string()),
        };
        out.push(GroupFit { key, ns: pts.iter().map(|p| p.0).collect(), values: ys, fit, message });
    }
    out
}

/// Evaluates every grid point on `spec.workers` threads. Rows come back in
/// grid order and do not depend on the worker count.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    // per-point numerics stay sequential so results do not depend on the pool
    faer::set_global_parallelism(faer::Par::Seq);
    let points = spec.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| points.par_iter().map(|p| row_for(spec, p)).collect());
    let failures = rows.iter().filter(|r| !r.is_ok()).count();
    let fits = fit_groups(&rows, spec.fit_restrict);
    Ok(SweepOutcome { name: spec.name.clone(), code_version: CODE_VERSION.into(), rows, fits, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    const INI: &str = "
[sweep]
task = qfi1
n = 4, 6
omega_ratio = 0.5
t1 = ss
source = exact
dt = 1e-4

[output]
formats = csv, json
";

    #[test]
    fn parses_ini() {
        let s = SweepSpec::from_ini_str(INI).unwrap();
        assert_eq!(s.task, Task::Qfi1);
        assert_eq!(s.n, vec![4, 6]);
        assert_eq!(s.dt, vec![DtPolicy::Fixed(1e-4)]);
        assert_eq!(s.source, BinSource::ExactDiscrete);
        assert!(s.formats.json && !s.formats.svg);
        assert_eq!(s.points().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(SweepSpec::from_ini_str("[sweep]\ntask = qfi1\nfoo = 1\n").is_err());
        assert!(SweepSpec::from_ini_str("[sweep]\nn = 3\n").is_err());
        assert!(SweepSpec::from_ini_str("[sweep]\ntask = qfi1\nn =\n").is_err());
    }

    #[test]
    fn single_point_matches_direct_call() {
        let mut s = SweepSpec::new(Task::Qfi1);
        s.n = vec![4];
        s.omega_ratio = vec![0.5];
        s.source = BinSource::ExactDiscrete;
        s.dt = vec![DtPolicy::Fixed(1e-4)];
        let out = run_sweep(&s).unwrap();
        assert_eq!(out.rows.len(), 1);
        let p = ModelParams::from_ratios(4, 0.5, 0.0).unwrap();
        let cfg = QfiConfig::new(1e-4, BinSource::ExactDiscrete);
        let r = metrology::qfi_one_bin(&p, Preparation::Stationary, &cfg).unwrap();
        assert_eq!(out.rows[0].value, Some(r.per_time));
    }

    #[test]
    fn failures_stay_in_row() {
        let mut s = SweepSpec::new(Task::Qfi1);
        s.n = vec![3, 4];
        s.omega_ratio = vec![1.0];
        s.gamma_loc_ratio = vec![0.1];
        s.source = BinSource::ExactDiscrete;
        let out = run_sweep(&s).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.failures, 2);
        assert!(out.rows.iter().all(|r| r.status == "error" && r.value.is_none()));
    }
}

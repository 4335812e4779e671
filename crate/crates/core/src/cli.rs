//! The `cluster-sieve` command line.
//!
//! Exit codes: 0 on success (including not-available results), 2 for
//! malformed input or an invalid configuration, 3 for flag combinations that
//! make no sense together.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::Error;
use crate::inference::VarianceSpec;
use crate::kmeans::{run_kmeans, KMeansConfig};
use crate::projection::all_pairs;
use crate::result::PValueResult;
use crate::selection::SelectionRule;
use crate::simulation::{restart_average, restart_seed, run_power, run_type1, MuKind, SimConfig, TestTemplate};

/// Package version plus `git describe` output when built from a checkout.
pub const VERSION: &str = match option_env!("CLUSTER_SIEVE_GIT_DESCRIBE") {
    Some(v) => v,
    None => env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Parser)]
#[command(name = "cluster-sieve", version = VERSION, about = "Selective tests for differences between K-means cluster means")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster a data file and test the chosen cluster pairs.
    Test(TestArgs),
    /// Run a Monte Carlo calibration or power study.
    Simulate(SimulateArgs),
}

/// Flags shared by `test` and `simulate` that pick the pairs and the test.
#[derive(Debug, Clone, Args, Serialize)]
struct PairArgs {
    /// Fixed pairs as 1-based labels, e.g. "1:2,2:3". Default: all pairs.
    #[arg(long)]
    pairs: Option<String>,
    /// Data-dependent pairs: top:G, bottom:G, below:T or above:T.
    #[arg(long)]
    select: Option<String>,
    /// Also condition on which pairs were selected.
    #[arg(long)]
    account_selection: bool,
    /// Test each fixed pair separately and combine with Bonferroni.
    #[arg(long)]
    bonferroni: bool,
    /// Lloyd iteration cap.
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// K-means initialisations; p-values are averaged over them.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for result files and run.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SigmaEstimate {
    Sample,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TestArgs {
    /// Comma or tab separated numeric file, one observation per row.
    file: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Known noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Plug in an estimated noise level.
    #[arg(long, value_enum)]
    sigma_est: Option<SigmaEstimate>,
    /// Treat the noise level as unknown.
    #[arg(long)]
    unknown_sigma: bool,
    /// Standardise every column before clustering.
    #[arg(long)]
    standardize: bool,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    #[serde(flatten)]
    pairs: PairArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Study {
    Type1,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MeanLayout {
    Null,
    Horizontal,
    Kgon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TestVariance {
    /// Use the simulated noise level.
    Known,
    Sample,
    Median,
    Unknown,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SimulateArgs {
    #[arg(value_enum)]
    study: Study,
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Noise standard deviation of the simulated data.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Mean layout. Defaults to null for type1 and kgon for power.
    #[arg(long, value_enum)]
    mu: Option<MeanLayout>,
    /// Signal strengths for power studies, comma separated.
    #[arg(long, default_value = "0,1,2,3,4,5,6")]
    deltas: String,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// How the test treats the noise level.
    #[arg(long, value_enum, default_value = "known")]
    test_variance: TestVariance,
    #[command(flatten)]
    #[serde(flatten)]
    pairs: PairArgs,
}

#[derive(Debug)]
enum CliError {
    /// Malformed input or invalid configuration.
    Input(String),
    /// Flags that cannot be combined.
    Flags(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Flags(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Results go to `stdout`, diagnostics to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let started = Instant::now();
    let command: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let outcome = match cli.command {
        Command::Test(t) => cmd_test(&t, stdout).map(|o| (serde_json::to_value(&t), t.pairs.out.clone(), o)),
        Command::Simulate(s) => cmd_simulate(&s, stdout).map(|o| (serde_json::to_value(&s), s.pairs.out.clone(), o)),
    };
    match outcome {
        Ok((config, out, outputs)) => {
            if let Some(dir) = out {
                let record = RunRecord {
                    command,
                    config: config.unwrap_or(serde_json::Value::Null),
                    version: VERSION,
                    wall_time_s: started.elapsed().as_secs_f64(),
                    outputs,
                };
                if let Err(e) = write_json(&dir.join("run.json"), &record) {
                    eprintln!("error: {}", message(&e));
                    return e.code();
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", message(&e));
            e.code()
        }
    }
}

fn message(e: &CliError) -> &str {
    match e {
        CliError::Input(m) | CliError::Flags(m) => m,
    }
}

#[derive(Serialize)]
struct RunRecord {
    command: Vec<String>,
    config: serde_json::Value,
    version: &'static str,
    wall_time_s: f64,
    outputs: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Reads a comma or tab separated numeric file.
pub fn read_matrix(path: &Path, header: bool) -> Result<DataMatrix, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = i + 1 + usize::from(header);
        let row = record
            .iter()
            .map(|field| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("{}: row {line}: {field:?} is not a finite number", path.display())),
            })
            .collect::<Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format!("{}: no observations", path.display()));
    }
    DataMatrix::from_rows(&rows).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_pairs(spec: &str, k: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let label = |s: &str| -> Result<usize, CliError> {
        match s.trim().parse::<usize>() {
            Ok(v) if (1..=k).contains(&v) => Ok(v - 1),
            _ => Err(CliError::Input(format!("cluster label {s:?} must be an integer in 1..={k}"))),
        }
    };
    spec.split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| CliError::Input(format!("pair {p:?} must look like k:k'")))?;
            Ok((label(a)?, label(b)?))
        })
        .collect()
}

fn parse_select(spec: &str) -> Result<SelectionRule, CliError> {
    let bad = || CliError::Input(format!("--select {spec:?} must be top:G, bottom:G, below:T or above:T"));
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    let count = || value.trim().parse::<usize>().map_err(|_| bad());
    let level = || value.trim().parse::<f64>().map_err(|_| bad());
    Ok(match kind.trim() {
        "top" => SelectionRule::TopG(count()?),
        "bottom" => SelectionRule::BottomG(count()?),
        "below" => SelectionRule::ThresholdBelow(level()?),
        "above" => SelectionRule::ThresholdAbove(level()?),
        _ => return Err(bad()),
    })
}

impl PairArgs {
    fn template(&self, k: usize, variance: VarianceSpec) -> Result<TestTemplate, CliError> {
        let flags = |m: &str| Err(CliError::Flags(m.into()));
        if self.pairs.is_some() && self.select.is_some() {
            return flags("--pairs and --select are mutually exclusive");
        }
        if self.account_selection && self.select.is_none() {
            return flags("--account-selection needs --select");
        }
        if self.bonferroni && self.select.is_some() {
            return flags("--bonferroni needs fixed pairs, not --select");
        }
        if self.bonferroni && variance == VarianceSpec::Unknown {
            return flags("--bonferroni needs a known or estimated sigma");
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(CliError::Input("--restarts and --max-iter must be at least 1".into()));
        }
        let rule = match (&self.pairs, &self.select) {
            (Some(p), _) => SelectionRule::Fixed(parse_pairs(p, k)?),
            (None, Some(s)) => parse_select(s)?,
            (None, None) => SelectionRule::Fixed(all_pairs(k)),
        };
        if k >= 2 {
            rule.validate(k)?;
        }
        let mut template =
            TestTemplate::new(rule, variance).with_selection(self.account_selection).with_bonferroni(self.bonferroni);
        template.max_iter = self.max_iter;
        template.restarts = self.restarts;
        Ok(template)
    }
}

fn variance_of(t: &TestArgs) -> Result<VarianceSpec, CliError> {
    let given = usize::from(t.sigma.is_some()) + usize::from(t.sigma_est.is_some()) + usize::from(t.unknown_sigma);
    if given != 1 {
        return Err(CliError::Flags("give exactly one of --sigma, --sigma-est, --unknown-sigma".into()));
    }
    Ok(match (t.sigma, t.sigma_est) {
        (Some(s), _) if !(s > 0.0 && s.is_finite()) => {
            return Err(CliError::Input(format!("--sigma must be positive, got {s}")))
        }
        (Some(s), _) => VarianceSpec::Known(s),
        (None, Some(SigmaEstimate::Sample)) => VarianceSpec::PlugInSample,
        (None, Some(SigmaEstimate::Median)) => VarianceSpec::PlugInMedian,
        (None, None) => VarianceSpec::Unknown,
    })
}

/// What `test` reports.
#[derive(Debug, Serialize)]
struct TestReport {
    status: &'static str,
    reason: Option<String>,
    /// Mean of the available p-values over restarts.
    p_value: Option<f64>,
    restarts: usize,
    available_restarts: usize,
    n: usize,
    q: usize,
    k: usize,
    /// 1-based labels from the first restart, when it clustered cleanly.
    labels: Option<Vec<usize>>,
    /// One result per restart; pair labels are 1-based.
    results: Vec<PValueResult>,
}

fn one_based(mut r: PValueResult) -> PValueResult {
    let up = |(a, b): (usize, usize)| (a + 1, b + 1);
    r.diagnostics.pairs = r.diagnostics.pairs.into_iter().map(up).collect();
    r.diagnostics.contributing_pair = r.diagnostics.contributing_pair.map(up);
    r
}

fn cmd_test(t: &TestArgs, stdout: &mut dyn std::io::Write) -> Result<Vec<String>, CliError> {
    let variance = variance_of(t)?;
    let template = t.pairs.template(t.k, variance)?;
    let mut data = read_matrix(&t.file, t.header).map_err(CliError::Input)?;
    if t.standardize {
        data = data.standardized();
    }
    if t.k < 2 || t.k > data.rows() {
        return Err(CliError::Input(format!("--k {} must lie in 2..={}", t.k, data.rows())));
    }
    let seed = t.pairs.seed;
    let (mean, results) = restart_average(&data, &template, t.k, seed)?;
    let first = KMeansConfig::new(t.k, restart_seed(seed, 0, template.restarts)).with_max_iter(template.max_iter);
    let labels = run_kmeans(&data, &first).ok().map(|tr| tr.final_labels().iter().map(|l| l + 1).collect());
    let available = results.iter().filter(|r| !r.degenerate).count();
    let reason = (available == 0).then(|| results.iter().find_map(|r| r.diagnostics.na_reason.clone())).flatten();
    let report = TestReport {
        status: if available == 0 { "NA" } else { "ok" },
        reason,
        p_value: mean,
        restarts: template.restarts,
        available_restarts: available,
        n: data.rows(),
        q: data.cols(),
        k: t.k,
        labels,
        results: results.into_iter().map(one_based).collect(),
    };
    let (text, name) = match t.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))?;
            s.push('\n');
            (s, "result.json")
        }
        Format::Csv => (report_csv(&report)?, "result.csv"),
    };
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Input(e.to_string()))?;
    let mut outputs = Vec::new();
    if let Some(dir) = &t.pairs.out {
        ensure_dir(dir)?;
        let path = dir.join(name);
        fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
        outputs.push(name.to_string());
    }
    Ok(outputs)
}

#[derive(Serialize)]
struct TestRow {
    status: &'static str,
    p_value: Option<f64>,
    restarts: usize,
    available_restarts: usize,
    method: String,
    statistic: Option<f64>,
    df_num: Option<usize>,
    df_den: Option<usize>,
    pairs: String,
    truncation: String,
    reason: Option<String>,
}

/// One row; the per-test columns describe the first available restart.
fn report_csv(report: &TestReport) -> Result<String, CliError> {
    let shown = report.results.iter().find(|r| !r.degenerate).or(report.results.first());
    let method = shown
        .map(|r| serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
        .unwrap_or_default();
    let row = TestRow {
        status: report.status,
        p_value: report.p_value,
        restarts: report.restarts,
        available_restarts: report.available_restarts,
        method,
        statistic: shown.filter(|r| !r.degenerate).map(|r| r.statistic),
        df_num: shown.filter(|r| !r.degenerate).map(|r| r.df_num),
        df_den: shown.and_then(|r| r.df_den),
        pairs: shown
            .map(|r| r.diagnostics.pairs.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(","))
            .unwrap_or_default(),
        truncation: shown.filter(|r| !r.degenerate).map(|r| r.truncation.to_string()).unwrap_or_default(),
        reason: report.reason.clone(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row).map_err(|e| CliError::Input(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
}

fn parse_deltas(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|d| d.trim().parse::<f64>().map_err(|_| CliError::Input(format!("--deltas entry {d:?} is not a number"))))
        .collect()
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> Result<String, CliError> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(name.to_string())
}

/// One line of `pvalues.csv`; an empty p-value marks a not-available replicate.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PValueRow {
    pub replicate: usize,
    pub pvalue: Option<f64>,
}

/// The single line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub replicates: usize,
    pub na_count: usize,
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub alpha: f64,
    pub rejection_rate: f64,
}

#[derive(Serialize)]
struct QqRow {
    theoretical: f64,
    empirical: f64,
}

fn cmd_simulate(s: &SimulateArgs, stdout: &mut dyn std::io::Write) -> Result<Vec<String>, CliError> {
    let variance = match s.test_variance {
        TestVariance::Known => VarianceSpec::Known(s.sigma),
        TestVariance::Sample => VarianceSpec::PlugInSample,
        TestVariance::Median => VarianceSpec::PlugInMedian,
        TestVariance::Unknown => VarianceSpec::Unknown,
    };
    let template = s.pairs.template(s.k, variance)?;
    let dir = s.pairs.out.as_deref().ok_or_else(|| CliError::Flags("simulate needs --out".into()))?;
    let layout = s.mu.unwrap_or(match s.study {
        Study::Type1 => MeanLayout::Null,
        Study::Power => MeanLayout::Kgon,
    });
    let mu_kind = match layout {
        MeanLayout::Null => MuKind::Null,
        MeanLayout::Horizontal => MuKind::Horizontal(0.0),
        MeanLayout::Kgon => MuKind::KGon(0.0),
    };
    let cfg = SimConfig {
        n: s.n,
        q: s.q,
        k: s.k,
        sigma: s.sigma,
        mu_kind,
        replicates: s.replicates,
        alpha: s.alpha,
        master_seed: s.pairs.seed,
        test: template,
    };
    cfg.validate()?;
    if cfg.replicates == 0 {
        return Err(CliError::Input("--replicates must be at least 1".into()));
    }
    ensure_dir(dir)?;
    let mut outputs = Vec::new();
    match s.study {
        Study::Type1 => {
            let summary = run_type1(&cfg)?;
            let rows = summary.per_replicate.iter().map(|&(replicate, pvalue)| PValueRow { replicate, pvalue });
            outputs.push(write_csv(dir, "pvalues.csv", rows)?);
            let row = SummaryRow {
                replicates: cfg.replicates,
                na_count: summary.na_count,
                ks_stat: summary.ks_stat,
                ks_pvalue: summary.ks_pvalue,
                alpha: cfg.alpha,
                rejection_rate: summary.rejection_rate,
            };
            outputs.push(write_csv(dir, "summary.csv", [&row])?);
            let qq = summary.qq_points().into_iter().map(|(theoretical, empirical)| QqRow { theoretical, empirical });
            outputs.push(write_csv(dir, "qq.csv", qq)?);
            writeln!(
                stdout,
                "replicates {} na_count {} ks_stat {} ks_pvalue {} rejection_rate {}",
                row.replicates, row.na_count, row.ks_stat, row.ks_pvalue, row.rejection_rate
            )
            .map_err(|e| CliError::Input(e.to_string()))?;
        }
        Study::Power => {
            if cfg.mu_kind == MuKind::Null {
                return Err(CliError::Input("power studies need --mu horizontal or kgon".into()));
            }
            let deltas = parse_deltas(&s.deltas)?;
            if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
                return Err(CliError::Input(format!("delta {d} must be non-negative")));
            }
            let rows = run_power(&cfg, &deltas)?;
            outputs.push(write_csv(dir, "power.csv", &rows)?);
            for r in &rows {
                writeln!(stdout, "delta {} power {} stderr {} na_count {}", r.delta, r.power, r.stderr, r.na_count)
                    .map_err(|e| CliError::Input(e.to_string()))?;
            }
        }
    }
    Ok(outputs)
}

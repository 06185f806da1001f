//! Command-line entry point. Every command reads its inputs, writes its
//! artifacts atomically into `--out`, and records a `manifest.json` with the
//! resolved arguments and content hashes of every input file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    run_ad_level, run_campaign_level, run_platform_sweep, sample_campaigns, CampaignReport, MetricShift,
};
use crate::inference::{compute_profile, profile_with_range};
use crate::io::{log_to_bytes, read_records, write_atomic};
use crate::model::{AdId, AuctionLog, Campaign, DayFilter, ReplaySummary};
use crate::optimize::{
    build_grid, optimize_gmv, optimize_style, AllocationResult, CampaignProblem, CostWindow, Demand, DEFAULT_GRID_SIZE,
};
use crate::replay::{alpha_curve, evaluate, geometric_alphas, replay_all, BidPolicy, BidRule};
use crate::synth::{generate, stationarity_report, SynthConfig};

#[derive(Debug, Parser, Serialize)]
#[command(name = "cia", version, about = "Replay-based impression-level bidding toolkit")]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Days to use: `all`, `d` or `a..b` (inclusive).
    #[arg(long, global = true, default_value = "all")]
    pub days: DayFilter,
    /// Exit with status 4 when an optimizer reports an infeasible window.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a seeded synthetic auction log.
    Generate(GenerateArgs),
    /// Day-over-day stationarity report of per-AD distributions.
    Stationarity(StationarityArgs),
    /// Infer ROI, take-rate, virtual budget and alpha ranges.
    Infer(InferArgs),
    /// Replay the log under keyword or CIA bids.
    Replay(ReplayArgs),
    /// Sample an AD's alpha to cost/GMV curve.
    Curve(CurveArgs),
    /// Solve campaign allocations.
    Optimize {
        #[command(subcommand)]
        demand: OptimizeCommand,
    },
    /// Run offline evaluation experiments.
    Experiment {
        #[command(subcommand)]
        level: ExperimentCommand,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct OutArg {
    /// Output directory (created when missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LogArg {
    /// Auction log, one JSON record per line.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Generator configuration (JSON); unset fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_ads: Option<u32>,
    #[arg(long)]
    pub num_days: Option<u32>,
    #[arg(long)]
    pub auctions_per_day: Option<u32>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct StationarityArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Comma-separated AD ids; defaults to every AD.
    #[arg(long, value_delimiter = ',')]
    pub ads: Vec<AdId>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Comma-separated AD ids; defaults to every AD.
    #[arg(long, value_delimiter = ',')]
    pub ads: Vec<AdId>,
    /// Campaign file (JSON array); adds alpha ranges from its bid bounds.
    #[arg(long)]
    pub campaigns: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Comma-separated AD ids; defaults to every AD.
    #[arg(long, value_delimiter = ',')]
    pub ads: Vec<AdId>,
    /// Each listed AD alone bids `alpha * tk * cvr * item_price`; keyword
    /// bids for everybody when unset.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub ad: AdId,
    /// Explicit alphas; overrides the geometric grid.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub lo: f64,
    #[arg(long, default_value_t = 10.0)]
    pub hi: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long)]
    pub campaigns: PathBuf,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeCommand {
    /// Maximize GMV inside the cost window.
    Gmv(OptimizeArgs),
    /// Equalize impressions inside the cost window.
    Style(OptimizeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandArg {
    Gmv,
    Style,
}

#[derive(Debug, Args, Serialize)]
pub struct AdExperimentArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long, value_delimiter = ',')]
    pub ads: Vec<AdId>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct CampaignExperimentArgs {
    #[command(flatten)]
    pub log: LogArg,
    /// Campaign file; campaigns are sampled from the log when unset.
    #[arg(long)]
    pub campaigns: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gmv")]
    pub demand: DemandArg,
    #[arg(long, default_value_t = 50)]
    pub sample: usize,
    #[arg(long, default_value_t = 5)]
    pub campaign_size: usize,
    /// Campaign bid range as multiples of the smallest and largest mean
    /// keyword bid of its ADs.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 2.0])]
    pub bound_factors: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args, Serialize)]
pub struct PlatformExperimentArgs {
    #[command(flatten)]
    pub log: LogArg,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 1.0])]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentCommand {
    /// Each AD alone switches to CIA at matched cost.
    Ad(AdExperimentArgs),
    /// Campaign GMV or style optimization against baselines.
    Campaign(CampaignExperimentArgs),
    /// Platform-wide adoption sweep.
    Platform(PlatformExperimentArgs),
}

/// Process exit status for an error: 2 for configuration, 3 for data,
/// 4 for infeasible optimizer windows.
pub fn exit_status(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidCampaign { .. }
        | Error::NoDaysSelected => 2,
        Error::InfeasibleWindow { .. } => 4,
        _ => 3,
    }
}

/// One machine-parsable line: `<code> <module> <message>`.
pub fn error_line(err: &Error) -> String {
    let message = err.to_string().replace(['\n', '\r'], " ");
    format!("{} {} {}", err.code(), err.module(), message)
}

#[derive(Serialize)]
struct InputDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    arguments: &'a Cli,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved_config: Option<&'a SynthConfig>,
    /// Parameters whose defaults depend on the command.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    resolved: BTreeMap<&'static str, serde_json::Value>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

/// Collects artifacts and input digests for one run.
struct Run {
    dir: PathBuf,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    resolved: BTreeMap<&'static str, serde_json::Value>,
}

impl Run {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn window(&mut self, args: &WindowArgs, default_epsilon: f64) -> Result<CostWindow> {
        let window = CostWindow::new(args.beta, args.epsilon.unwrap_or(default_epsilon))?;
        self.resolved.insert("beta", window.beta.into());
        self.resolved.insert("epsilon", window.epsilon.into());
        Ok(window)
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    fn log(&mut self, path: &Path) -> Result<AuctionLog> {
        let bytes = self.read(path)?;
        let records = read_records(bytes.as_slice())?;
        AuctionLog::new(records)
    }

    fn campaigns(&mut self, path: &Path) -> Result<Vec<Campaign>> {
        let campaigns: Vec<Campaign> = serde_json::from_slice(&self.read(path)?)?;
        for c in &campaigns {
            c.validate()?;
        }
        Ok(campaigns)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(name, &bytes)
    }

    fn finish(self, cli: &Cli, resolved_config: Option<&SynthConfig>) -> Result<()> {
        let manifest = Manifest {
            tool: "cia",
            version: env!("CARGO_PKG_VERSION"),
            arguments: cli,
            resolved_config,
            resolved: self.resolved,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join("manifest.json"), &bytes)
    }
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    ad_id: AdId,
    policy: &'a str,
    cost: f64,
    gmv: f64,
    impressions: f64,
    clicks: f64,
    conversions: f64,
    roi: Option<f64>,
    cvr: Option<f64>,
    ppc: Option<f64>,
}

impl<'a> SummaryRow<'a> {
    fn new(ad_id: AdId, policy: &'a str, s: &ReplaySummary) -> Self {
        SummaryRow {
            ad_id,
            policy,
            cost: s.cost,
            gmv: s.gmv,
            impressions: s.impressions,
            clicks: s.clicks,
            conversions: s.conversions,
            roi: s.roi(),
            cvr: s.cvr(),
            ppc: s.ppc(),
        }
    }
}

#[derive(Serialize)]
struct ShiftRow<'a> {
    label: &'a str,
    cost_pct: Option<f64>,
    gmv_pct: Option<f64>,
    roi_pct: Option<f64>,
    cvr_pct: Option<f64>,
    ppc_pct: Option<f64>,
}

impl<'a> ShiftRow<'a> {
    fn new(label: &'a str, s: &MetricShift) -> Self {
        ShiftRow {
            label,
            cost_pct: s.cost_pct,
            gmv_pct: s.gmv_pct,
            roi_pct: s.roi_pct,
            cvr_pct: s.cvr_pct,
            ppc_pct: s.ppc_pct,
        }
    }
}

fn ads_or_all(log: &AuctionLog, ads: &[AdId]) -> Vec<AdId> {
    if ads.is_empty() {
        log.ad_ids()
    } else {
        ads.to_vec()
    }
}

fn allocation_rows(campaign_id: &str, a: &AllocationResult) -> Vec<AllocationRow> {
    (0..a.ad_ids.len())
        .map(|i| AllocationRow {
            campaign_id: campaign_id.to_string(),
            ad_id: a.ad_ids[i],
            alpha: a.alphas[i],
            option: a.selection.as_ref().map(|s| s[i]),
            impression_target: a.impression_targets.as_ref().map(|s| s[i]),
            cost: a.ad_costs[i],
            feasible: a.feasible,
        })
        .collect()
}

#[derive(Serialize)]
struct AllocationRow {
    campaign_id: String,
    ad_id: AdId,
    alpha: f64,
    option: Option<usize>,
    impression_target: Option<f64>,
    cost: f64,
    feasible: bool,
}

#[derive(Serialize)]
struct CampaignAllocation<'a> {
    campaign_id: &'a str,
    allocation: &'a AllocationResult,
}

fn infeasible(window: (f64, f64), achieved: f64) -> Error {
    Error::InfeasibleWindow {
        window_lo: window.0,
        window_hi: window.1,
        achievable_lo: achieved,
        achievable_hi: achieved,
    }
}

fn run_generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let mut config = match &args.config {
        Some(path) => serde_json::from_slice(&run.read(path)?).map_err(|e| Error::InvalidConfig {
            field: "config",
            reason: e.to_string(),
        })?,
        None => SynthConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.num_ads {
        config.num_ads = v;
    }
    if let Some(v) = args.num_days {
        config.num_days = v;
    }
    if let Some(v) = args.auctions_per_day {
        config.auctions_per_day = v;
    }
    let log = generate(&config)?;
    run.write("log.jsonl", &log_to_bytes(&log)?)?;
    run.json("config.json", &config)?;
    run.finish(cli, Some(&config))
}

fn run_stationarity(cli: &Cli, args: &StationarityArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let log = if cli.days == DayFilter::All {
        log
    } else {
        log.filter_records(|r| cli.days.contains(r.day))?
    };
    let report = stationarity_report(&log, &ads_or_all(&log, &args.ads))?;
    run.csv("stationarity.csv", &report.rows)?;
    run.finish(cli, None)
}

#[derive(Serialize)]
struct ProfileRow {
    ad_id: AdId,
    campaign_id: Option<String>,
    expected_roi: f64,
    take_rate: f64,
    virtual_budget: f64,
    alpha_lo: Option<f64>,
    alpha_hi: Option<f64>,
    clamped: Option<bool>,
}

fn run_infer(cli: &Cli, args: &InferArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    let mut push = |campaign_id: Option<String>, p: crate::inference::AdProfile| {
        rows.push(ProfileRow {
            ad_id: p.ad_id,
            campaign_id,
            expected_roi: p.expected_roi,
            take_rate: p.take_rate,
            virtual_budget: p.virtual_budget,
            alpha_lo: p.alpha_range.map(|r| r.lo),
            alpha_hi: p.alpha_range.map(|r| r.hi),
            clamped: p.alpha_range.map(|r| r.clamped()),
        });
        profiles.push(p);
    };
    match &args.campaigns {
        Some(path) => {
            for c in run.campaigns(path)? {
                for i in 0..c.len() {
                    let p = profile_with_range(&log, c.ad_ids[i], c.bid_lower[i], c.bid_upper[i], cli.days)?;
                    push(Some(c.campaign_id.clone()), p);
                }
            }
        }
        None => {
            for ad in ads_or_all(&log, &args.ads) {
                push(None, compute_profile(&log, ad, cli.days)?);
            }
        }
    }
    run.csv("profiles.csv", &rows)?;
    run.json("profiles.json", &profiles)?;
    run.finish(cli, None)
}

fn run_replay(cli: &Cli, args: &ReplayArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let rows: Vec<(AdId, ReplaySummary)> = match args.alpha {
        None => {
            let all = replay_all(&log, &BidPolicy::keyword(), cli.days)?;
            if args.ads.is_empty() {
                all.into_iter().collect()
            } else {
                args.ads
                    .iter()
                    .map(|ad| all.get(ad).map(|s| (*ad, *s)).ok_or(Error::UnknownAd(*ad)))
                    .collect::<Result<_>>()?
            }
        }
        Some(alpha) => ads_or_all(&log, &args.ads)
            .into_iter()
            .map(|ad| {
                let tk = compute_profile(&log, ad, cli.days)?.take_rate;
                let policy = BidPolicy::single(ad, BidRule::Cia { alpha, tk })?;
                Ok((ad, evaluate(&log, ad, &policy, cli.days)?))
            })
            .collect::<Result<_>>()?,
    };
    let label = if args.alpha.is_some() { "cia" } else { "keyword" };
    let table: Vec<SummaryRow> = rows.iter().map(|(ad, s)| SummaryRow::new(*ad, label, s)).collect();
    run.csv("replay.csv", &table)?;
    run.finish(cli, None)
}

#[derive(Serialize)]
struct CurveRow {
    alpha: f64,
    cost: f64,
    gmv: f64,
    impressions: f64,
    clicks: f64,
    conversions: f64,
}

fn run_curve(cli: &Cli, args: &CurveArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let alphas = if args.alphas.is_empty() {
        if !(args.lo > 0.0 && args.lo <= args.hi) {
            return Err(Error::InvalidArgument("need 0 < lo <= hi".into()));
        }
        let mut a = geometric_alphas(args.lo, args.hi, args.points);
        a.dedup();
        a
    } else {
        args.alphas.clone()
    };
    let tk = compute_profile(&log, args.ad, cli.days)?.take_rate;
    let curve = alpha_curve(&log, args.ad, tk, &alphas, cli.days)?;
    let rows: Vec<CurveRow> = curve
        .samples
        .iter()
        .map(|(alpha, s)| CurveRow {
            alpha: *alpha,
            cost: s.cost,
            gmv: s.gmv,
            impressions: s.impressions,
            clicks: s.clicks,
            conversions: s.conversions,
        })
        .collect();
    run.csv("curve.csv", &rows)?;
    run.finish(cli, None)
}

fn run_optimize(cli: &Cli, demand: Demand, args: &OptimizeArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let campaigns = run.campaigns(&args.campaigns)?;
    let window = run.window(&args.window, 0.2)?;
    let mut results = Vec::with_capacity(campaigns.len());
    for c in &campaigns {
        let problem = CampaignProblem::new(&log, c.clone(), window, args.grid_size, demand, cli.days)?;
        let grid = build_grid(&log, &problem)?;
        let alloc = match demand {
            Demand::Gmv => optimize_gmv(&grid, window)?,
            Demand::Style => optimize_style(&grid, window)?,
        };
        results.push(alloc);
    }
    let rows: Vec<AllocationRow> = campaigns
        .iter()
        .zip(&results)
        .flat_map(|(c, a)| allocation_rows(&c.campaign_id, a))
        .collect();
    let docs: Vec<CampaignAllocation> = campaigns
        .iter()
        .zip(&results)
        .map(|(c, a)| CampaignAllocation {
            campaign_id: &c.campaign_id,
            allocation: a,
        })
        .collect();
    run.csv("allocations.csv", &rows)?;
    run.json("allocations.json", &docs)?;
    run.finish(cli, None)?;
    if cli.strict {
        if let Some(a) = results.iter().find(|a| !a.feasible) {
            return Err(infeasible(a.window, a.cost));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AdExperimentRow {
    ad_id: Option<AdId>,
    alpha: Option<f64>,
    matched: Option<bool>,
    keyword_cost: f64,
    cia_cost: f64,
    keyword_gmv: f64,
    cia_gmv: f64,
    cost_pct: Option<f64>,
    gmv_pct: Option<f64>,
    roi_pct: Option<f64>,
    cvr_pct: Option<f64>,
    ppc_pct: Option<f64>,
}

fn run_ad_experiment(cli: &Cli, args: &AdExperimentArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let report = run_ad_level(&log, &ads_or_all(&log, &args.ads), run.window(&args.window, 0.1)?, cli.days)?;
    let row = |ad: Option<AdId>, alpha, matched, k: &ReplaySummary, c: &ReplaySummary, s: &MetricShift| AdExperimentRow {
        ad_id: ad,
        alpha,
        matched,
        keyword_cost: k.cost,
        cia_cost: c.cost,
        keyword_gmv: k.gmv,
        cia_gmv: c.gmv,
        cost_pct: s.cost_pct,
        gmv_pct: s.gmv_pct,
        roi_pct: s.roi_pct,
        cvr_pct: s.cvr_pct,
        ppc_pct: s.ppc_pct,
    };
    let mut rows: Vec<AdExperimentRow> = report
        .rows
        .iter()
        .map(|r| row(Some(r.ad_id), Some(r.alpha), Some(r.matched), &r.keyword, &r.cia, &r.shift))
        .collect();
    rows.push(row(None, None, None, &report.keyword_total, &report.cia_total, &report.overall));
    run.csv("ad_level.csv", &rows)?;
    run.csv("ad_level_overall.csv", &[ShiftRow::new("overall", &report.overall)])?;
    run.json("ad_level.json", &report)?;
    run.finish(cli, None)
}

#[derive(Serialize)]
struct CampaignGmvRow<'a> {
    campaign_id: &'a str,
    feasible: bool,
    baseline_scale: f64,
    baseline_cost: f64,
    cia_cost: f64,
    baseline_gmv: f64,
    cia_gmv: f64,
    cost_pct: Option<f64>,
    gmv_pct: Option<f64>,
    roi_pct: Option<f64>,
    cvr_pct: Option<f64>,
    ppc_pct: Option<f64>,
}

#[derive(Serialize)]
struct CampaignStyleRow<'a> {
    campaign_id: &'a str,
    feasible: bool,
    baseline_bid: f64,
    cia_impression_std: f64,
    baseline_impression_std: f64,
    cia_cost_std: f64,
    baseline_cost_std: f64,
}

fn run_campaign_experiment(cli: &Cli, args: &CampaignExperimentArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let campaigns = match &args.campaigns {
        Some(path) => run.campaigns(path)?,
        None => {
            let [lo, hi] = args.bound_factors[..] else {
                return Err(Error::InvalidArgument("--bound-factors takes two values".into()));
            };
            let sampled = sample_campaigns(&log, args.sample, args.campaign_size, (lo, hi), args.seed, cli.days)?;
            run.json("campaigns.json", &sampled)?;
            sampled
        }
    };
    let window = run.window(&args.window, 0.2)?;
    let demand = match args.demand {
        DemandArg::Gmv => Demand::Gmv,
        DemandArg::Style => Demand::Style,
    };
    let reports = run_campaign_level(&log, &campaigns, demand, window, args.grid_size, cli.days)?;
    match demand {
        Demand::Gmv => {
            let rows: Vec<CampaignGmvRow> = reports
                .iter()
                .filter_map(|r| match r {
                    CampaignReport::Gmv(g) => Some(CampaignGmvRow {
                        campaign_id: &g.campaign_id,
                        feasible: g.feasible,
                        baseline_scale: g.baseline_scale,
                        baseline_cost: g.baseline.cost,
                        cia_cost: g.cia.cost,
                        baseline_gmv: g.baseline.gmv,
                        cia_gmv: g.cia.gmv,
                        cost_pct: g.shift.cost_pct,
                        gmv_pct: g.shift.gmv_pct,
                        roi_pct: g.shift.roi_pct,
                        cvr_pct: g.shift.cvr_pct,
                        ppc_pct: g.shift.ppc_pct,
                    }),
                    CampaignReport::Style(_) => None,
                })
                .collect();
            run.csv("campaign_gmv.csv", &rows)?;
        }
        Demand::Style => {
            let rows: Vec<CampaignStyleRow> = reports
                .iter()
                .filter_map(|r| match r {
                    CampaignReport::Style(s) => Some(CampaignStyleRow {
                        campaign_id: &s.campaign_id,
                        feasible: s.feasible,
                        baseline_bid: s.baseline_bid,
                        cia_impression_std: s.cia_impression_std,
                        baseline_impression_std: s.baseline_impression_std,
                        cia_cost_std: s.cia_cost_std,
                        baseline_cost_std: s.baseline_cost_std,
                    }),
                    CampaignReport::Gmv(_) => None,
                })
                .collect();
            run.csv("campaign_style.csv", &rows)?;
        }
    }
    run.json("campaign.json", &reports)?;
    run.finish(cli, None)?;
    if cli.strict {
        let flagged = reports.iter().find_map(|r| match r {
            CampaignReport::Gmv(g) if !g.feasible => Some((g.window, g.cia.cost)),
            CampaignReport::Style(s) if !s.feasible => Some((s.window, s.cia.iter().map(|v| v.cost).sum())),
            _ => None,
        });
        if let Some((window, cost)) = flagged {
            return Err(infeasible(window, cost));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PlatformRow {
    fraction: f64,
    adopters: usize,
    scope: &'static str,
    baseline_cost: f64,
    test_cost: f64,
    baseline_gmv: f64,
    test_gmv: f64,
    cost_pct: Option<f64>,
    gmv_pct: Option<f64>,
    roi_pct: Option<f64>,
    cvr_pct: Option<f64>,
    ppc_pct: Option<f64>,
}

fn run_platform_experiment(cli: &Cli, args: &PlatformExperimentArgs) -> Result<()> {
    let mut run = Run::new(&args.out.out)?;
    let log = run.log(&args.log.log)?;
    let sweep = run_platform_sweep(&log, &args.fractions, args.seed, run.window(&args.window, 0.1)?, cli.days)?;
    let mut rows = Vec::new();
    for r in &sweep.rows {
        for (scope, base, test, s) in [
            ("all_ads", &r.all_baseline, &r.all_test, &r.all_shift),
            ("cia_ads", &r.cia_baseline, &r.cia_test, &r.cia_shift),
        ] {
            rows.push(PlatformRow {
                fraction: r.fraction,
                adopters: r.adopters,
                scope,
                baseline_cost: base.cost,
                test_cost: test.cost,
                baseline_gmv: base.gmv,
                test_gmv: test.gmv,
                cost_pct: s.cost_pct,
                gmv_pct: s.gmv_pct,
                roi_pct: s.roi_pct,
                cvr_pct: s.cvr_pct,
                ppc_pct: s.ppc_pct,
            });
        }
    }
    run.csv("platform.csv", &rows)?;
    run.json("platform.json", &sweep)?;
    run.finish(cli, None)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        // Fails only when a global pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Generate(a) => run_generate(cli, a),
        Command::Stationarity(a) => run_stationarity(cli, a),
        Command::Infer(a) => run_infer(cli, a),
        Command::Replay(a) => run_replay(cli, a),
        Command::Curve(a) => run_curve(cli, a),
        Command::Optimize { demand } => match demand {
            OptimizeCommand::Gmv(a) => run_optimize(cli, Demand::Gmv, a),
            OptimizeCommand::Style(a) => run_optimize(cli, Demand::Style, a),
        },
        Command::Experiment { level } => match level {
            ExperimentCommand::Ad(a) => run_ad_experiment(cli, a),
            ExperimentCommand::Campaign(a) => run_campaign_experiment(cli, a),
            ExperimentCommand::Platform(a) => run_platform_experiment(cli, a),
        },
    }
}

/// Parses the process arguments, runs the command and maps failures to
/// exit statuses.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_status(&e))
        }
    }
}

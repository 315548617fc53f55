use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctfdbf_core::sim::Scenario;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::container::FeatureTable;
use crate::error::Result;
use crate::pipeline;
use crate::report::{RunReport, StageTiming, Timings};

#[derive(Debug, Parser)]
#[command(name = "ctfdbf", version, about = "People counting with IR-UWB radar: simulate, extract, evaluate, report")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate raw radar records into a UWBR container.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        scenario: ScenarioArg,
    },
    /// Extract hybrid feature vectors from a UWBR container.
    Extract {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Feature container; a CSV mirror is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and test every classifier, writing report.json and CSV tables.
    Evaluate {
        features: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        scenario: ScenarioArg,
    },
    /// Print the tables of a report.json.
    Report { report: PathBuf },
}

#[derive(Debug, Args)]
pub struct Common {
    /// key = value configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Walk3,
    Walk4,
    Queue,
    All,
}

impl ScenarioArg {
    pub fn scenarios(self) -> Vec<Scenario> {
        match self {
            ScenarioArg::Walk3 => vec![Scenario::Walk3],
            ScenarioArg::Walk4 => vec![Scenario::Walk4],
            ScenarioArg::Queue => vec![Scenario::Queue],
            ScenarioArg::All => Scenario::ALL.to_vec(),
        }
    }
}

/// `<path>.timings.json`, the wall-clock sidecar of an output file.
pub fn timings_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".timings.json");
    PathBuf::from(s)
}

/// The CSV mirror of a feature container: same name, `.csv` extension.
pub fn csv_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut s = path.as_os_str().to_owned();
        s.push(".csv");
        return PathBuf::from(s);
    }
    path.with_extension("csv")
}

fn earlier_timings(input: &Path) -> Timings {
    fs::read_to_string(timings_path(input))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    pool.install(f)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, out, scenario } => {
            let cfg = common.load()?;
            let start = Instant::now();
            let n = in_pool(common.workers, || pipeline::simulate(&cfg, &scenario.scenarios(), &out))?;
            let t = Timings {
                stages: vec![StageTiming { stage: "simulate".into(), seconds: start.elapsed().as_secs_f64() }],
                ..Default::default()
            };
            fs::write(timings_path(&out), t.to_json())?;
            eprintln!("wrote {n} records to {}", out.display());
        }
        Command::Extract { dataset, common, out } => {
            let cfg = common.load()?;
            let start = Instant::now();
            let (table, names) = in_pool(common.workers, || pipeline::extract(&cfg, &dataset))?;
            table.save(&out)?;
            table.write_csv(std::io::BufWriter::new(fs::File::create(csv_path(&out))?), &names)?;
            let mut t = earlier_timings(&dataset);
            t.stages.push(StageTiming { stage: "extract".into(), seconds: start.elapsed().as_secs_f64() });
            fs::write(timings_path(&out), t.to_json())?;
            eprintln!("wrote {} feature rows to {}", table.labels.len(), out.display());
        }
        Command::Evaluate { features, common, out, scenario } => {
            let cfg = common.load()?;
            let bytes = fs::read(&features)?;
            let table = FeatureTable::read(bytes.as_slice())?;
            let start = Instant::now();
            let (mut report, cells) = in_pool(common.workers, || pipeline::evaluate(&cfg, &table, &scenario.scenarios()))?;
            report.provenance.features_sha256 = Some(hex::encode(Sha256::digest(&bytes)));
            fs::create_dir_all(&out)?;
            write_outputs(&report, &out)?;
            let mut t = earlier_timings(&features);
            t.stages.push(StageTiming { stage: "evaluate".into(), seconds: start.elapsed().as_secs_f64() });
            t.cells = cells.cells;
            fs::write(out.join("timings.json"), t.to_json())?;
            eprintln!("wrote report to {}", out.join("report.json").display());
        }
        Command::Report { report } => {
            let r = RunReport::from_json(&fs::read_to_string(report)?)?;
            print!("{}", r.render());
        }
    }
    Ok(())
}

/// report.json, one table_<scenario>.csv per evaluated scenario,
/// ablation.csv and metrics.csv.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<()> {
    fs::write(dir.join("report.json"), report.to_json())?;
    for s in report.scenario_list() {
        if report.results.iter().any(|c| c.scenario == s) {
            report.write_table_csv(&s, fs::File::create(dir.join(format!("table_{s}.csv")))?)?;
        }
    }
    report.write_ablation_csv(fs::File::create(dir.join("ablation.csv"))?)?;
    report.write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?)?;
    Ok(())
}

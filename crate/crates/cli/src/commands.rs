use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use edgesim::baselines::{run_scheme, Scheme};
use edgesim::config::{preset, PRESETS};
use edgesim::cost::Allocation;
use edgesim::experiments::{
    aggregate, read_table, run_dynamic, run_sweep, write_dynamic_csv, write_summary_csv, DynamicSpec,
    SweepSpec,
};
use edgesim::formation::{
    certify_stability, dominates, form_coalitions, Evaluator, StabilityMode, Verdict, C_MODE_CAP,
};
use edgesim::payments::{settle, PaymentLedger};
use edgesim::report::{write_costs, write_ledger, write_trace};
use edgesim::scenario::generate_scenario;
use edgesim::{Game, GameSettings, Scenario, SimConfig};

use crate::{ConfigSource, ModeArg, SettingsArgs};

pub const SEED_ENV: &str = "EDGESIM_SEED";

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

/// Flag, then environment, then the config's own seed.
fn resolve_seed(flag: Option<u64>, config: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(config),
    })
}

fn load_config(source: &ConfigSource) -> Result<SimConfig> {
    match (&source.config, &source.preset) {
        (Some(path), _) => SimConfig::load(path).with_context(|| format!("config {}", path.display())),
        (None, Some(name)) => {
            preset(name).ok_or_else(|| anyhow!("unknown preset {name:?}; available: {}", PRESETS.join(", ")))
        }
        (None, None) => bail!("either --config or --preset is required"),
    }
}

fn load_game(path: &Path, args: &SettingsArgs) -> Result<Game> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::from_json(&text).with_context(|| format!("scenario {}", path.display()))?;
    let mut settings = match &args.config {
        Some(p) => {
            SimConfig::load(p)
                .with_context(|| format!("config {}", p.display()))?
                .game
        }
        None => GameSettings::default(),
    };
    if let Some(t) = args.exhaustive_threshold {
        settings.exhaustive_threshold = t;
    }
    Ok(Game::new(&scenario, settings)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn generate(source: &ConfigSource, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(source)?;
    let seed = resolve_seed(seed, cfg.seed)?;
    let scenario = generate_scenario(&cfg.scenario, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, scenario.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} ({} SBSs, {} MUEs, seed {seed})",
        out.display(),
        scenario.num_sbs(),
        scenario.mues.len()
    );
    Ok(())
}

pub fn run(scenario: &Path, scheme: Scheme, settings: &SettingsArgs, out: &Path) -> Result<()> {
    let game = load_game(scenario, settings)?;
    let eval = Evaluator::new(&game)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let (outcome, trace) = if scheme == Scheme::Proposed {
        let f = form_coalitions(&eval)?;
        let o = edgesim::baselines::SchemeOutcome::from_formation(&f);
        (o, Some(f.trace))
    } else {
        (run_scheme(&eval, scheme)?, None)
    };

    write_costs(create(&out.join("costs.csv"))?, std::slice::from_ref(&outcome))?;
    if scheme != Scheme::CloudMin {
        let ledgers: Vec<PaymentLedger> = outcome
            .partition
            .coalitions()
            .iter()
            .map(|c| Ok(eval.ledger(c)?.as_ref().clone()))
            .collect::<Result<_>>()?;
        write_ledger(create(&out.join("ledger.csv"))?, &ledgers)?;
    }
    if let Some(trace) = &trace {
        write_trace(create(&out.join("trace.csv"))?, trace)?;
    }
    fs::write(
        out.join("allocation.json"),
        serde_json::to_string_pretty(&outcome.allocation)?,
    )?;
    let summary = json!({
        "scheme": scheme.as_str(),
        "partition": outcome.partition.label(),
        "coalitions": outcome.partition.len(),
        "total_utility": outcome.total_utility(),
        "total_cost": outcome.total_cost(),
        "total_cloud": outcome.total_cloud(),
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{}: partition {} utility {:.6} cloud {:.3}",
        scheme.as_str(),
        outcome.partition,
        outcome.total_utility(),
        outcome.total_cloud()
    );
    Ok(())
}

fn epoch_id() -> String {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
        .to_string()
}

/// Most recent run directory under `base`, by name.
fn latest_run(base: &Path) -> Option<String> {
    let mut names: Vec<String> = fs::read_dir(base)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    // Epoch ids sort numerically; anything else lexically after them.
    names.sort_by(|a, b| match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    names.pop()
}

pub fn sweep(
    spec_path: &Path,
    out: &Path,
    run_id: Option<String>,
    resume: bool,
    exhaustive_threshold: Option<usize>,
) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec =
        SweepSpec::from_json(&text).with_context(|| format!("sweep spec {}", spec_path.display()))?;
    if let Some(seed) = env_seed()? {
        spec.base.seed = seed;
    }
    if let Some(t) = exhaustive_threshold {
        spec.base.game.exhaustive_threshold = t;
    }
    let base = out.join(&spec.name);
    let id = match (run_id, resume) {
        (Some(id), _) => id,
        (None, true) => {
            latest_run(&base).ok_or_else(|| anyhow!("--resume: no previous run under {}", base.display()))?
        }
        (None, false) => epoch_id(),
    };
    let dir: PathBuf = base.join(id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let outcome = run_sweep(&spec, Some(&dir), resume)?;
    let s = &outcome.summary;
    println!(
        "{}: {} cells ({} computed), {} rows; max gain {:.4} at {} {}",
        dir.display(),
        s.cells,
        outcome.computed,
        s.rows,
        s.max_relative_gain,
        s.max_gain_value,
        s.max_gain_variant
    );
    Ok(())
}

pub fn dynamic(
    source: &ConfigSource,
    spec_path: Option<&Path>,
    slots: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let cfg = load_config(source)?;
    let seed = resolve_seed(seed, cfg.seed)?;
    let mut spec = match spec_path {
        Some(p) => edgesim::config::parse_json::<DynamicSpec>(&fs::read_to_string(p)?)
            .with_context(|| format!("dynamic spec {}", p.display()))?,
        None => DynamicSpec::default(),
    };
    if let Some(n) = slots {
        spec.slots = n;
    }
    let series = run_dynamic(&cfg, &spec, seed)?;
    fs::create_dir_all(out)?;
    write_dynamic_csv(create(&out.join("dynamic.csv"))?, &series)?;
    fs::write(out.join("series.json"), serde_json::to_string_pretty(&series)?)?;
    println!("{} slots written to {}", series.slots.len(), out.display());
    Ok(())
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn verify(
    scenario: &Path,
    mode: ModeArg,
    allocation: Option<&Path>,
    settings: &SettingsArgs,
) -> Result<bool> {
    let game = load_game(scenario, settings)?;
    let n = game.num_sbs();
    if matches!(mode, ModeArg::C | ModeArg::All) && n > C_MODE_CAP {
        bail!("collective stability check supports at most {C_MODE_CAP} SBSs, got {n}");
    }
    let eval = Evaluator::new(&game)?;
    let f = form_coalitions(&eval)?;
    println!("partition: {}", f.partition);
    let mut ok = true;

    if matches!(mode, ModeArg::Hp | ModeArg::All) {
        let cert = certify_stability(&eval, &f.partition, StabilityMode::Hp, C_MODE_CAP)?;
        println!(
            "hp-stability: {} ({} deviations checked) {}",
            status(cert.passed()),
            cert.checked,
            cert.detail
        );
        ok &= cert.passed();
    }
    if matches!(mode, ModeArg::C | ModeArg::All) {
        let cert = certify_stability(&eval, &f.partition, StabilityMode::C, C_MODE_CAP)?;
        match cert.verdict {
            Verdict::NoneExists => {
                println!("c-stability: NONE ({} partitions) {}", cert.checked, cert.detail)
            }
            _ => {
                println!(
                    "c-stability: {} ({} partitions) {}",
                    status(cert.passed()),
                    cert.checked,
                    cert.detail
                );
                ok &= cert.passed();
            }
        }
    }

    let balance = settle(&f.ledgers, eval.tolerance());
    println!("payment balance: {}", status(balance.is_ok()));
    ok &= balance.is_ok();

    let feasible = f.allocation.check(&game);
    match &feasible {
        Ok(()) => println!("allocation feasibility: PASS"),
        Err(e) => println!("allocation feasibility: FAIL {e}"),
    }
    ok &= feasible.is_ok();

    let to_map = |v: &[f64]| v.iter().copied().enumerate().collect::<BTreeMap<_, _>>();
    let mut prev = to_map(&f.initial_phi);
    let mut monotone = true;
    for t in &f.trace {
        let cur = to_map(&t.phi);
        monotone &= dominates(&cur, &prev, eval.tolerance())?;
        prev = cur;
    }
    println!("monotone trace: {} ({} steps)", status(monotone), f.trace.len());
    ok &= monotone;

    if let Some(path) = allocation {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let alloc: Allocation =
            edgesim::config::parse_json(&text).with_context(|| format!("allocation {}", path.display()))?;
        match alloc.check(&game) {
            Ok(()) => println!("allocation file: PASS"),
            Err(e) => {
                println!("allocation file: FAIL {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

/// Writes `summary.csv` into each sweep run directory and prints headlines.
pub fn report(dirs: &[PathBuf]) -> Result<()> {
    for dir in dirs {
        let rows = read_table(&dir.join("table.csv"))
            .with_context(|| format!("reading {}/table.csv", dir.display()))?;
        let spec_text = fs::read_to_string(dir.join("config.json"))
            .with_context(|| format!("reading {}/config.json", dir.display()))?;
        let spec = SweepSpec::from_json(&spec_text)?;
        let s = aggregate(&spec.name, spec.axis.name(), &rows);
        let mut w = create(&dir.join("summary.csv"))?;
        write_summary_csv(&mut w, &s)?;
        w.flush()?;
        println!(
            "{} [{}] {} rows: max gain {:.4} at {} {}, mean coalitions {:.2}",
            dir.display(),
            s.axis,
            s.rows,
            s.max_relative_gain,
            s.max_gain_value,
            s.max_gain_variant,
            s.mean_coalitions
        );
    }
    Ok(())
}

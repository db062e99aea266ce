use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run_single_slot;
use crate::baselines::Scheme;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::scenario::{generate_scenario, Deployment};

/// The parameter varied across a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    /// `(w_c, w_r, w_0)` triples.
    Weights {
        values: Vec<[f64; 3]>,
    },
    MueCount {
        values: Vec<usize>,
    },
    PrivateFraction {
        values: Vec<f64>,
    },
    /// `w_c` values, each run with MUE re-association on and off.
    Ablation {
        values: Vec<f64>,
    },
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Weights { .. } => "weights",
            SweepAxis::MueCount { .. } => "mue_count",
            SweepAxis::PrivateFraction { .. } => "private_fraction",
            SweepAxis::Ablation { .. } => "ablation",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Weights { values } => values.len(),
            SweepAxis::MueCount { values } => values.len(),
            SweepAxis::PrivateFraction { values } => values.len(),
            SweepAxis::Ablation { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, k: usize) -> String {
        match self {
            SweepAxis::Weights { values } => {
                let [a, b, c] = values[k];
                format!("{a}/{b}/{c}")
            }
            SweepAxis::MueCount { values } => values[k].to_string(),
            SweepAxis::PrivateFraction { values } => values[k].to_string(),
            SweepAxis::Ablation { values } => values[k].to_string(),
        }
    }

    /// Configs for value `k`, tagged by variant.
    fn configure(&self, k: usize, base: &SimConfig) -> Vec<(&'static str, SimConfig)> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Weights { values } => {
                let [w_c, w_r, w_0] = values[k];
                let w = &mut cfg.scenario.weights;
                (w.w_c, w.w_r, w.w_0) = (w_c, w_r, w_0);
            }
            SweepAxis::MueCount { values } => {
                let count = values[k];
                let g = &cfg.scenario.geometry;
                let volume = g.floor_area() * g.num_floors() as f64;
                cfg.scenario.deployment = match cfg.scenario.deployment {
                    Deployment::Fixed { sbs_count, .. } => Deployment::Fixed {
                        sbs_count,
                        mue_count: count,
                    },
                    Deployment::Ppp { sbs_intensity, .. } => Deployment::Ppp {
                        sbs_intensity,
                        mue_intensity: count as f64 / volume,
                    },
                };
            }
            SweepAxis::PrivateFraction { values } => {
                cfg.scenario.devices.mue_private_fraction = values[k];
            }
            SweepAxis::Ablation { values } => {
                cfg.scenario.weights.w_c = values[k];
                let mut on = cfg.clone();
                on.game.mue_association = true;
                cfg.game.mue_association = false;
                return vec![("assoc_on", on), ("assoc_off", cfg)];
            }
        }
        vec![("default", cfg)]
    }
}

/// A sweep: `axis` values crossed with seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    pub base: SimConfig,
    pub axis: SweepAxis,
    pub replications: usize,
    /// Explicit seeds, one per replication. Defaults to consecutive seeds
    /// starting at the base config's seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    /// Also run the centralized search (small networks only).
    #[serde(default)]
    pub central: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("sweep replications must be >= 1".into()));
        }
        if self.axis.is_empty() {
            return Err(Error::InvalidConfig("sweep values must be nonempty".into()));
        }
        if !self.seeds.is_empty() && self.seeds.len() != self.replications {
            return Err(Error::InvalidConfig(format!(
                "sweep lists {} seeds for {} replications",
                self.seeds.len(),
                self.replications
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(
                "sweep name must be a plain directory name".into(),
            ));
        }
        for k in 0..self.axis.len() {
            for (_, cfg) in self.axis.configure(k, &self.base) {
                cfg.validate()?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = crate::config::parse_json(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.replications as u64)
                .map(|r| self.base.seed + r)
                .collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Number of cells: values times seeds.
    pub fn num_cells(&self) -> usize {
        self.axis.len() * self.replications
    }

    fn cell(&self, index: usize) -> (usize, u64) {
        (index / self.replications, self.seeds()[index % self.replications])
    }
}

/// One table row: all scheme totals for a (value, seed, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub value_index: usize,
    pub value: String,
    pub seed: u64,
    pub variant: String,
    pub n_sbs: usize,
    pub n_mue: usize,
    pub utility_proposed: f64,
    pub utility_noncoop: f64,
    pub utility_cloudmin: f64,
    pub utility_central: Option<f64>,
    pub relative_gain: f64,
    pub coalitions: usize,
    pub mean_coalition_size: f64,
    pub max_coalition_size: usize,
    pub cloud_proposed: f64,
    pub cloud_noncoop: f64,
    pub cloud_cloudmin: f64,
    pub cloud_central: Option<f64>,
    pub merges: usize,
    pub splits: usize,
    pub heuristic: bool,
    pub split_capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    cell: usize,
    seed: u64,
    variant: String,
    iteration: usize,
    op: String,
    coalitions_before: String,
    coalitions_after: String,
    system_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellRecord {
    cell: usize,
    rows: Vec<SweepRow>,
    trace: Vec<TraceRow>,
}

fn label(coalitions: &[Vec<usize>]) -> String {
    coalitions
        .iter()
        .map(|c| {
            format!(
                "{{{}}}",
                c.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
            )
        })
        .collect()
}

fn run_cell(spec: &SweepSpec, index: usize) -> Result<CellRecord> {
    let (k, seed) = spec.cell(index);
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for (variant, mut cfg) in spec.axis.configure(k, &spec.base) {
        cfg.seed = seed;
        let scenario = generate_scenario(&cfg.scenario, seed)?;
        let game = Game::new(&scenario, cfg.game.clone())?;
        let bundle = run_single_slot(&game, spec.central)?;
        let get = |s: Scheme| bundle.outcome(s);
        let f = &bundle.formation;
        let p = get(Scheme::Proposed).expect("always run");
        let nc = get(Scheme::NonCooperative).expect("always run");
        let cm = get(Scheme::CloudMin).expect("always run");
        let central = get(Scheme::Centralized);
        rows.push(SweepRow {
            cell: index,
            value_index: k,
            value: spec.axis.label(k),
            seed,
            variant: variant.to_string(),
            n_sbs: scenario.num_sbs(),
            n_mue: scenario.mues.len(),
            utility_proposed: p.total_utility(),
            utility_noncoop: nc.total_utility(),
            utility_cloudmin: cm.total_utility(),
            utility_central: central.map(|c| c.total_utility()),
            relative_gain: bundle.relative_gain(),
            coalitions: f.partition.len(),
            mean_coalition_size: f.partition.mean_size(),
            max_coalition_size: f.partition.coalitions().iter().map(Vec::len).max().unwrap_or(0),
            cloud_proposed: p.total_cloud(),
            cloud_noncoop: nc.total_cloud(),
            cloud_cloudmin: cm.total_cloud(),
            cloud_central: central.map(|c| c.total_cloud()),
            merges: f
                .trace
                .iter()
                .filter(|t| t.op == crate::formation::Op::Merge)
                .count(),
            splits: f
                .trace
                .iter()
                .filter(|t| t.op == crate::formation::Op::Split)
                .count(),
            heuristic: f.heuristic,
            split_capped: f.split_capped,
        });
        trace.extend(f.trace.iter().map(|t| TraceRow {
            cell: index,
            seed,
            variant: variant.to_string(),
            iteration: t.iteration,
            op: t.op.as_str().to_string(),
            coalitions_before: label(&t.before),
            coalitions_after: label(&t.after),
            system_utility: t.system_utility,
        }));
    }
    Ok(CellRecord {
        cell: index,
        rows,
        trace,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Statistics over seeds for one (value, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub value_index: usize,
    pub value: String,
    pub variant: String,
    pub runs: usize,
    pub relative_gain: Stat,
    pub utility_proposed: Stat,
    pub utility_noncoop: Stat,
    pub utility_cloudmin: Stat,
    pub cost_proposed: Stat,
    pub coalitions: Stat,
    pub mean_coalition_size: Stat,
    pub cloud_proposed: Stat,
    pub cloud_cloudmin: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub axis: String,
    pub cells: usize,
    pub rows: usize,
    pub groups: Vec<GroupStats>,
    /// Largest mean relative gain over groups, and where it occurs.
    pub max_relative_gain: f64,
    pub max_gain_value: String,
    pub max_gain_variant: String,
    pub mean_coalitions: f64,
}

/// Groups rows by (value, variant) in table order.
pub fn aggregate(name: &str, axis: &str, rows: &[SweepRow]) -> SweepSummary {
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in rows {
        let key = (r.value_index, r.value.clone(), r.variant.clone());
        if seen.insert(key.clone()) {
            keys.push(key);
        }
    }
    let groups: Vec<GroupStats> = keys
        .into_iter()
        .map(|(value_index, value, variant)| {
            let g: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.value_index == value_index && r.variant == variant)
                .collect();
            let stat = |f: &dyn Fn(&SweepRow) -> f64| Stat::of(g.iter().map(|r| f(r)));
            GroupStats {
                value_index,
                value,
                variant,
                runs: g.len(),
                relative_gain: stat(&|r| r.relative_gain),
                utility_proposed: stat(&|r| r.utility_proposed),
                utility_noncoop: stat(&|r| r.utility_noncoop),
                utility_cloudmin: stat(&|r| r.utility_cloudmin),
                cost_proposed: stat(&|r| -r.utility_proposed),
                coalitions: stat(&|r| r.coalitions as f64),
                mean_coalition_size: stat(&|r| r.mean_coalition_size),
                cloud_proposed: stat(&|r| r.cloud_proposed),
                cloud_cloudmin: stat(&|r| r.cloud_cloudmin),
            }
        })
        .collect();
    let best = groups
        .iter()
        .max_by(|a, b| a.relative_gain.mean.total_cmp(&b.relative_gain.mean));
    SweepSummary {
        name: name.to_string(),
        axis: axis.to_string(),
        cells: rows.iter().map(|r| r.cell).collect::<BTreeSet<_>>().len(),
        rows: rows.len(),
        max_relative_gain: best.map_or(0.0, |b| b.relative_gain.mean),
        max_gain_value: best.map_or_else(String::new, |b| b.value.clone()),
        max_gain_variant: best.map_or_else(String::new, |b| b.variant.clone()),
        mean_coalitions: Stat::of(rows.iter().map(|r| r.coalitions as f64)).mean,
        groups,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    /// Cells computed in this call (the rest came from a previous run).
    pub computed: usize,
}

fn load_manifest(path: &Path) -> Result<BTreeMap<usize, CellRecord>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        // A torn final line from an interrupted run is simply recomputed.
        if let Ok(rec) = serde_json::from_str::<CellRecord>(&line) {
            done.insert(rec.cell, rec);
        }
    }
    Ok(done)
}

/// Runs every cell in parallel; rows come back in cell order. With `dir`,
/// writes `config.json`, `cells.jsonl` (one line per finished cell),
/// `table.csv`, `trace.csv` and `summary.json` there. With `resume`, cells
/// already in `cells.jsonl` are reused.
pub fn run_sweep(spec: &SweepSpec, dir: Option<&Path>, resume: bool) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut done = BTreeMap::new();
    let manifest = match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join("config.json"), serde_json::to_string_pretty(spec)?)?;
            let path = d.join("cells.jsonl");
            if resume {
                done = load_manifest(&path)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(resume)
                .write(true)
                .truncate(!resume)
                .open(&path)?;
            Some(Mutex::new(file))
        }
        None => None,
    };
    let todo: Vec<usize> = (0..spec.num_cells()).filter(|c| !done.contains_key(c)).collect();
    let fresh: Vec<CellRecord> = todo
        .par_iter()
        .map(|&c| {
            let rec = run_cell(spec, c)?;
            if let Some(m) = &manifest {
                let line = serde_json::to_string(&rec)?;
                let mut f = m.lock().unwrap();
                writeln!(f, "{line}")?;
                f.flush()?;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let computed = fresh.len();
    for rec in fresh {
        done.insert(rec.cell, rec);
    }
    let rows: Vec<SweepRow> = done.values().flat_map(|r| r.rows.iter().cloned()).collect();
    let summary = aggregate(&spec.name, spec.axis.name(), &rows);
    if let Some(d) = dir {
        let mut w = csv::Writer::from_path(d.join("table.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(d.join("trace.csv"))?;
        let mut any = false;
        for t in done.values().flat_map(|r| r.trace.iter()) {
            w.serialize(t)?;
            any = true;
        }
        if !any {
            w.write_record([
                "cell",
                "seed",
                "variant",
                "iteration",
                "op",
                "coalitions_before",
                "coalitions_after",
                "system_utility",
            ])?;
        }
        w.flush()?;
        fs::write(d.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(SweepOutcome {
        rows,
        summary,
        computed,
    })
}

/// Reads a `table.csv` written by [`run_sweep`].
pub fn read_table(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Serialize)]
struct SummaryCsvRow<'a> {
    value: &'a str,
    variant: &'a str,
    runs: usize,
    relative_gain_mean: f64,
    relative_gain_std: f64,
    utility_proposed_mean: f64,
    utility_noncoop_mean: f64,
    utility_cloudmin_mean: f64,
    coalitions_mean: f64,
    mean_coalition_size_mean: f64,
    cloud_proposed_mean: f64,
    cloud_cloudmin_mean: f64,
}

pub fn write_summary_csv<W: Write>(out: W, summary: &SweepSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for g in &summary.groups {
        w.serialize(SummaryCsvRow {
            value: &g.value,
            variant: &g.variant,
            runs: g.runs,
            relative_gain_mean: g.relative_gain.mean,
            relative_gain_std: g.relative_gain.std,
            utility_proposed_mean: g.utility_proposed.mean,
            utility_noncoop_mean: g.utility_noncoop.mean,
            utility_cloudmin_mean: g.utility_cloudmin.mean,
            coalitions_mean: g.coalitions.mean,
            mean_coalition_size_mean: g.mean_coalition_size.mean,
            cloud_proposed_mean: g.cloud_proposed.mean,
            cloud_cloudmin_mean: g.cloud_cloudmin.mean,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::paper_fig4;

    fn small_spec(axis: SweepAxis, replications: usize) -> SweepSpec {
        let mut base = paper_fig4();
        base.scenario.deployment = Deployment::Fixed {
            sbs_count: 4,
            mue_count: 16,
        };
        SweepSpec {
            name: "t".into(),
            base,
            axis,
            replications,
            seeds: Vec::new(),
            central: true,
        }
    }

    #[test]
    fn rows_per_value_and_resume() {
        let spec = small_spec(SweepAxis::MueCount { values: vec![8, 16] }, 3);
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&spec, Some(dir.path()), false).unwrap();
        assert_eq!(out.rows.len(), 6);
        assert_eq!(out.rows.iter().filter(|r| r.value == "8").count(), 3);
        assert_eq!(out.computed, 6);
        let table = fs::read(dir.path().join("table.csv")).unwrap();

        // Drop two cells from the manifest and resume.
        let manifest = fs::read_to_string(dir.path().join("cells.jsonl")).unwrap();
        let kept: Vec<&str> = manifest.lines().take(4).collect();
        fs::write(dir.path().join("cells.jsonl"), kept.join("\n") + "\n").unwrap();
        let again = run_sweep(&spec, Some(dir.path()), true).unwrap();
        assert_eq!(again.computed, 2);
        assert_eq!(fs::read(dir.path().join("table.csv")).unwrap(), table);
        assert_eq!(read_table(&dir.path().join("table.csv")).unwrap(), out.rows);
        for f in ["config.json", "trace.csv", "summary.json"] {
            assert!(dir.path().join(f).exists());
        }
    }

    #[test]
    fn ablation_emits_two_variants() {
        let spec = small_spec(SweepAxis::Ablation { values: vec![0.5] }, 1);
        let out = run_sweep(&spec, None, false).unwrap();
        let variants: Vec<&str> = out.rows.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(variants, vec!["assoc_on", "assoc_off"]);
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec(SweepAxis::PrivateFraction { values: vec![] }, 1);
        assert!(spec.validate().is_err());
        spec.axis = SweepAxis::PrivateFraction { values: vec![0.5] };
        spec.replications = 0;
        assert!(spec.validate().is_err());
        spec.replications = 2;
        spec.seeds = vec![1];
        assert!(spec.validate().is_err());
        spec.seeds = vec![4, 9];
        spec.validate().unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(SweepSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn stat_mean_and_std() {
        let s = Stat::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
    }
}

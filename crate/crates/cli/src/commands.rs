use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use faultwalk::agent::PpoConfig;
use faultwalk::curriculum::{CurriculumConfig, CurriculumState};
use faultwalk::evalharness::{
    self, parse_curve_csv, parse_summary_csv, svg, ComparisonRow, ComparisonTable, Controller, CurvePoint, EvalCondition,
    EvalReport, KDistribution, MeanPolicy, RandomPolicy, Summary,
};
use faultwalk::kv::{KvDoc, KvSection};
use faultwalk::orchestrator::{Checkpoint, TrainConfig, Trainer, CONFIG_SECTIONS, SCHEDULE_HEADER};
use faultwalk::quadsim::SimConfig;

use crate::{rundir, CompareArgs, EvalArgs, PlotArgs, PolicyArgs, ProtocolArgs, ScheduleArgs, SweepArgs, TrainArgs};

fn read_doc(path: &Path) -> Result<KvDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    KvDoc::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = text.split_once(',').with_context(|| format!("{what} must be `LO,HI`"))?;
    Ok((a.trim().parse().context(what.to_string())?, b.trim().parse().context(what.to_string())?))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',')
        .map(|v| v.trim().parse::<T>().with_context(|| format!("{what}: cannot parse {v:?}")))
        .collect()
}

pub fn train(args: TrainArgs) -> Result<()> {
    let (mut trainer, dir) = match &args.resume {
        Some(path) => {
            let mut ckpt = Checkpoint::load(path)?;
            if let Some(dir) = &args.output_dir {
                ckpt.config.output_dir = Some(dir.clone());
            }
            if let Some(every) = args.checkpoint_every {
                ckpt.config.checkpoint_every = every;
            }
            let dir = ckpt
                .config
                .output_dir
                .clone()
                .context("checkpoint has no run directory; pass --output-dir")?;
            rundir::create(Some(&dir), "train", "")?;
            rundir::write(&dir, "config.txt", ckpt.config.to_doc().to_string())?;
            println!("resuming {} at step {}", path.display(), ckpt.elapsed_steps);
            (Trainer::from_checkpoint(ckpt)?, dir)
        }
        None => {
            let mut cfg = TrainConfig::default();
            if let Some(path) = &args.config {
                let doc = read_doc(path)?;
                doc.check_sections(&CONFIG_SECTIONS)?;
                cfg.apply_doc(&doc).with_context(|| format!("applying {}", path.display()))?;
            }
            if let Some(mode) = args.mode {
                cfg.curriculum.mode = mode;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(steps) = args.total_env_steps {
                cfg.total_env_steps = steps;
            }
            if let Some(n) = args.num_workers {
                cfg.num_workers = n;
            }
            if let Some(every) = args.checkpoint_every {
                cfg.checkpoint_every = every;
            }
            if let Some(clamp) = &args.train_clamp {
                cfg.curriculum.train_clamp = if clamp == "none" { None } else { Some(parse_pair(clamp, "--train-clamp")?) };
            }
            cfg.validate()?;
            let label = format!("{}-s{}", cfg.mode(), cfg.seed);
            let dir = rundir::create(args.output_dir.as_deref(), "train", &label)?;
            cfg.output_dir = Some(dir.clone());
            rundir::write(&dir, "config.txt", cfg.to_doc().to_string())?;
            (Trainer::new(cfg)?, dir)
        }
    };
    let every = args.log_every;
    trainer.run(|r| {
        if every > 0 && r.update_index % every == 0 {
            let ret = r.mean_return.map_or_else(|| "-".to_string(), |g| format!("{g:.1}"));
            println!(
                "update {:>6}  steps {:>9}  return {:>8}  [L, U] = [{:.2}, {:.2}]  g_th {:.1}  kl {:.4}",
                r.update_index, r.env_steps, ret, r.lower, r.upper, r.g_threshold, r.diagnostics.approx_kl
            );
        }
    })?;
    println!("finished {} steps; outputs in {}", trainer.elapsed_steps(), dir.display());
    Ok(())
}

/// A policy to evaluate plus the simulator and learner settings it needs.
struct LoadedPolicy {
    name: String,
    source: String,
    checkpoint: Option<Checkpoint>,
    sim: SimConfig,
}

impl LoadedPolicy {
    fn load(args: &PolicyArgs, config: Option<&KvDoc>) -> Result<Self> {
        match &args.checkpoint {
            Some(path) => {
                let ckpt = Checkpoint::load(path)?;
                Ok(Self {
                    name: args.policy_name.clone().unwrap_or_else(|| ckpt.config.mode().to_string()),
                    source: path.display().to_string(),
                    sim: ckpt.config.sim.clone(),
                    checkpoint: Some(ckpt),
                })
            }
            None => {
                let mut sim = SimConfig::default();
                if let Some(s) = config.and_then(|d| d.section("sim")) {
                    sim.apply_section(s)?;
                }
                Ok(Self {
                    name: args.policy_name.clone().unwrap_or_else(|| "random".into()),
                    source: "random".into(),
                    checkpoint: None,
                    sim,
                })
            }
        }
    }

    fn run(&self, cond: &EvalCondition) -> Result<EvalReport> {
        let report = match &self.checkpoint {
            Some(ckpt) => {
                let ppo: &PpoConfig = &ckpt.config.ppo;
                let controller = MeanPolicy { agent: &ckpt.agent, ppo };
                evalharness::evaluate(&self.name, &controller as &dyn Controller, &self.sim, cond)?
            }
            None => evalharness::evaluate(&self.name, &RandomPolicy, &self.sim, cond)?,
        };
        Ok(report)
    }
}

/// Trials, seeds and condition settings, from `[eval]` then flags.
struct Protocol {
    trials: usize,
    seeds: Vec<u64>,
    section: KvSection,
    doc: Option<KvDoc>,
}

impl Protocol {
    fn resolve(args: &ProtocolArgs) -> Result<Self> {
        let doc = args.config.as_deref().map(read_doc).transpose()?;
        if let Some(d) = &doc {
            d.check_sections(&["eval", "sim"])?;
        }
        let section = doc.as_ref().and_then(|d| d.section("eval")).cloned().unwrap_or_else(|| KvSection::new("eval"));
        let (mut trials, mut seeds) = if args.quick { (10, vec![0, 1]) } else { (100, (0..5).collect()) };
        for (key, value) in section.entries() {
            match key {
                "trials" => trials = section.parse_value(key, value)?,
                "seeds" => seeds = parse_list(value, "seeds")?,
                "conditions" | "k" | "k_range" | "k_grid" => {}
                _ => return Err(section.unknown(key).into()),
            }
        }
        if let Some(t) = args.trials {
            trials = t;
        }
        if let Some(s) = &args.seeds {
            seeds = parse_list(s, "--seeds")?;
        }
        Ok(Self {
            trials,
            seeds,
            section,
            doc,
        })
    }

    fn effective_config(&self, policy: &LoadedPolicy, extra: &[(&str, String)]) -> String {
        let mut s = KvSection::new("eval");
        s.set("policy", &policy.name);
        s.set("source", &policy.source);
        s.set("trials", self.trials);
        s.set("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        for (k, v) in extra {
            s.set(*k, v);
        }
        let mut doc = KvDoc::default();
        doc.push_section(s);
        doc.push_section(policy.sim.to_section());
        doc.to_string()
    }
}

fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut trials = Vec::new();
    evalharness::write_trials_csv(reports, &mut trials)?;
    rundir::write(dir, "trials.csv", trials)?;
    let mut summary = Vec::new();
    evalharness::write_summary_csv(reports.iter().map(|r| &r.summary), &mut summary)?;
    rundir::write(dir, "summary.csv", summary)?;
    Ok(())
}

fn print_summary(report: &EvalReport) {
    let s = &report.summary;
    println!(
        "{:<12} {:<10} reward {:>9.2} ± {:<7.2} distance {:>7.3} ± {:<6.3} fell {:>5.1}%",
        s.policy,
        s.condition,
        s.mean_reward,
        s.se_reward,
        s.mean_distance,
        s.se_distance,
        100.0 * report.fall_rate()
    );
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let protocol = Protocol::resolve(&args.protocol)?;
    let policy = LoadedPolicy::load(&args.policy, protocol.doc.as_ref())?;
    let section = &protocol.section;
    let mut names = args.conditions.clone();
    if names.is_empty() {
        names = match section.get("conditions") {
            Some(v) => v.split(',').map(|c| c.trim().to_string()).collect(),
            None => vec!["plain".into(), "broken".into()],
        };
    }
    let custom_k = match (args.k, &args.k_range) {
        (Some(k), _) => Some(KDistribution::Fixed(k)),
        (None, Some(r)) => {
            let (lo, hi) = parse_pair(r, "--k-range")?;
            Some(KDistribution::Uniform(lo, hi))
        }
        (None, None) => match (section.get("k"), section.get("k_range")) {
            (Some(k), _) => Some(KDistribution::Fixed(section.parse_value("k", k)?)),
            (None, Some(r)) => {
                let (lo, hi) = parse_pair(r, "k_range")?;
                Some(KDistribution::Uniform(lo, hi))
            }
            (None, None) => None,
        },
    };
    let mut conditions = Vec::new();
    for name in &names {
        let (trials, seeds) = (protocol.trials, protocol.seeds.clone());
        conditions.push(match name.as_str() {
            "plain" => EvalCondition::plain(trials, seeds),
            "broken" => EvalCondition::broken(trials, seeds),
            "custom" => EvalCondition {
                name: "custom".into(),
                k_distribution: custom_k.clone().context("the custom condition needs --k or --k-range")?,
                trials,
                seeds,
            },
            other => bail!("unknown condition {other:?} (expected plain, broken or custom; use `sweep` for k grids)"),
        });
    }
    let dir = rundir::create(args.protocol.output_dir.as_deref(), "eval", &policy.name)?;
    rundir::write(
        &dir,
        "config.txt",
        protocol.effective_config(&policy, &[("conditions", names.join(","))]),
    )?;
    let mut reports = Vec::new();
    for cond in &conditions {
        let report = policy.run(cond)?;
        print_summary(&report);
        reports.push(report);
    }
    write_reports(&dir, &reports)?;
    println!("outputs in {}", dir.display());
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let protocol = Protocol::resolve(&args.protocol)?;
    let policy = LoadedPolicy::load(&args.policy, protocol.doc.as_ref())?;
    let grid = match args.k_grid.as_deref().or(protocol.section.get("k_grid")) {
        Some(g) => parse_list(g, "k grid")?,
        None => EvalCondition::grid(1.0, 0.1),
    };
    let cond = EvalCondition::k_sweep(grid.clone(), protocol.trials, protocol.seeds.clone());
    let dir = rundir::create(args.protocol.output_dir.as_deref(), "sweep", &policy.name)?;
    let grid_text: Vec<String> = grid.iter().map(f64::to_string).collect();
    rundir::write(&dir, "config.txt", protocol.effective_config(&policy, &[("k_grid", grid_text.join(","))]))?;
    let report = policy.run(&cond)?;
    for p in &report.curve {
        println!(
            "k = {:<5} reward {:>9.2} ± {:<7.2} distance {:>7.3} ± {:.3}",
            p.k, p.mean_reward, p.se_reward, p.mean_distance, p.se_distance
        );
    }
    let reports = [report];
    write_reports(&dir, &reports)?;
    let mut curve = Vec::new();
    evalharness::write_curve_csv(&reports, &mut curve)?;
    rundir::write(&dir, "curve.csv", curve)?;
    let series = [(reports[0].policy.clone(), reports[0].curve.clone())];
    rundir::write(&dir, "sweep_reward.svg", svg::sweep_lines(&series, false, "reward over failure coefficient"))?;
    rundir::write(&dir, "sweep_distance.svg", svg::sweep_lines(&series, true, "distance over failure coefficient"))?;
    println!("outputs in {}", dir.display());
    Ok(())
}

pub fn schedule_trace(args: ScheduleArgs) -> Result<()> {
    let mut cfg = CurriculumConfig {
        mode: args.mode,
        lcdr_stages: args.stages,
        initial_threshold: args.initial_threshold,
        ..CurriculumConfig::default()
    };
    if let Some(k) = args.fixed_k {
        cfg.fixed_k = k;
    }
    if let Some(m) = args.buffer_size {
        cfg.buffer_size = m;
    }
    if let Some(c) = &args.train_clamp {
        cfg.train_clamp = if c == "none" { None } else { Some(parse_pair(c, "--train-clamp")?) };
    }
    cfg.validate()?;
    let mut state = CurriculumState::new(&cfg, args.total_steps, args.initial_threshold.unwrap_or(0.0))?;
    let mut out = String::new();
    out.push_str(SCHEDULE_HEADER);
    out.push('\n');
    let row = |out: &mut String, index: u64, elapsed: u64, state: &CurriculumState| {
        let (l, u) = state.current_interval();
        out.push_str(&format!("{index},{elapsed},{l},{u},{}\n", state.g_threshold));
    };
    if args.mode.is_adaptive() {
        let path = args
            .returns
            .as_ref()
            .context("adaptive schedules depend on episode returns; pass --returns FILE")?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        row(&mut out, 0, 0, &state);
        let mut index = 1;
        for (n, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
            let g: f64 = line.parse().with_context(|| format!("{}: cannot parse {line:?}", path.display()))?;
            // for replays the elapsed column counts returns consumed
            if state.record_return(g)?.evaluated_mean.is_some() {
                row(&mut out, index, n as u64 + 1, &state);
                index += 1;
            }
        }
    } else {
        let step = match args.step_every {
            Some(0) => bail!("--step-every must be positive"),
            Some(s) => s,
            None => (args.total_steps / args.stages as u64).max(1),
        };
        let mut index = 0;
        while index * step < args.total_steps {
            state.set_elapsed_steps(index * step);
            row(&mut out, index, index * step, &state);
            index += 1;
        }
    }
    match &args.output {
        Some(path) => fs::write(path, out).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    Ok(())
}

fn read_summaries(paths: &[PathBuf]) -> Result<Vec<Summary>> {
    let mut all = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        all.extend(parse_summary_csv(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(all)
}

fn write_bar_plots(dir: &Path, table: &ComparisonTable) -> Result<()> {
    rundir::write(dir, "reward.svg", svg::comparison_bars(table, false, "mean reward"))?;
    rundir::write(dir, "distance.svg", svg::comparison_bars(table, true, "mean walking distance"))?;
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let summaries = read_summaries(&args.summaries)?;
    let table = evalharness::compare(&summaries)?;
    let dir = rundir::create(args.output_dir.as_deref(), "compare", "policies")?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    rundir::write(&dir, "comparison.csv", csv)?;
    write_bar_plots(&dir, &table)?;
    for r in &table.rows {
        println!(
            "{:<10} {:<12} reward {:>9.2} ± {:<7.2} (rank {})  distance {:>7.3} ± {:<6.3} (rank {})",
            r.condition, r.policy, r.mean_reward, r.se_reward, r.reward_rank, r.mean_distance, r.se_distance, r.distance_rank
        );
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

pub fn plot(args: PlotArgs) -> Result<()> {
    let dir = rundir::create(args.output_dir.as_deref(), "plot", "figures")?;
    let mut summaries = Vec::new();
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    for path in &args.inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if let Ok(rows) = parse_summary_csv(&text) {
            summaries.extend(rows);
        } else {
            let rows = parse_curve_csv(&text).with_context(|| format!("{} is neither a summary nor a sweep file", path.display()))?;
            for (policy, _, point) in rows {
                match curves.iter_mut().find(|(p, _)| *p == policy) {
                    Some((_, pts)) => pts.push(point),
                    None => curves.push((policy, vec![point])),
                }
            }
        }
    }
    if !summaries.is_empty() {
        let table = evalharness::compare(&summaries).unwrap_or_else(|_| ComparisonTable {
            rows: summaries
                .iter()
                .map(|s| ComparisonRow {
                    condition: s.condition.clone(),
                    policy: s.policy.clone(),
                    mean_reward: s.mean_reward,
                    se_reward: s.se_reward,
                    reward_rank: 1,
                    mean_distance: s.mean_distance,
                    se_distance: s.se_distance,
                    distance_rank: 1,
                })
                .collect(),
        });
        write_bar_plots(&dir, &table)?;
    }
    if !curves.is_empty() {
        rundir::write(&dir, "sweep_reward.svg", svg::sweep_lines(&curves, false, "reward over failure coefficient"))?;
        rundir::write(&dir, "sweep_distance.svg", svg::sweep_lines(&curves, true, "distance over failure coefficient"))?;
    }
    println!("outputs in {}", dir.display());
    Ok(())
}

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use ifnas_core::analysis::{depth_stats, param_count};
use ifnas_core::experiment::{figure1_dataset, run_figure1, Figure1Config, Figure1Result};
use ifnas_core::interleave::{audit, export_mask_json, extract_subsupernet, import_mask_json, MASK_FORMAT};
use ifnas_core::search::{madds, trajectory_csv, SearchCheckpoint, Searcher};
use ifnas_core::space::{build_supernet, export_dot, export_json, import_json, random_architecture, RandomConstraints};
use ifnas_core::{count_space, Connection, Dataset, Formula, OperatorKind, SearchConfig, SupernetSpec};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::exit::{self, Usage};
use crate::plot::gate_chart;
use crate::run::Run;
use crate::{
    AuditArgs, Cli, Command, CountArgs, ExportArgs, Figure1Args, FormulaArg, Global, MaskArgs, RandomArgs, SearchArgs,
    Toggle,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Count(a) => count(g, a),
        Command::Search(a) => search(g, a),
        Command::Figure1(a) => figure1(g, a),
        Command::Random(a) => random(g, a),
        Command::Audit(a) => audit_cmd(g, a),
        Command::Export(a) => export(g, a),
        Command::Mask(a) => mask(g, a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Runs `body` inside `run`, appending the manifest entry whatever the outcome.
fn within(mut run: Run, body: impl FnOnce(&mut Run) -> Result<()>) -> Result<()> {
    let result = body(&mut run);
    let code = result.as_ref().map_or_else(exit::code_for, |_| exit::OK);
    run.close(code)?;
    result
}

/// Commands that print by default write into a run directory only with `--out`.
fn optional_run(g: &Global, command: &'static str, config: serde_json::Value) -> Result<Option<Run>> {
    g.out.as_deref().map(|out| Run::open(command, Some(out), config, Vec::new())).transpose()
}

fn emit(run: Option<Run>, file: &str, content: &str) -> Result<()> {
    match run {
        Some(run) => within(run, |r| r.write(file, content).map(|_| ())),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountConfig {
    #[serde(rename = "L")]
    max_len: usize,
    stages: Vec<usize>,
    #[serde(default)]
    formula: Formula,
}

fn count(g: &Global, a: &CountArgs) -> Result<()> {
    let file: Option<CountConfig> = a.config.as_deref().map(load_toml).transpose()?;
    let max_len = a
        .max_len
        .or(file.as_ref().map(|f| f.max_len))
        .ok_or_else(|| Usage("--L is required without --config".into()))?;
    let stages = a
        .stages
        .clone()
        .or(file.as_ref().map(|f| f.stages.clone()))
        .ok_or_else(|| Usage("--stages is required without --config".into()))?;
    let formula = match a.formula {
        Some(FormulaArg::Literal) => Formula::Literal,
        Some(FormulaArg::Prose) => Formula::Prose,
        None => file.map(|f| f.formula).unwrap_or_default(),
    };
    let report = count_space(max_len, &stages, formula)?;
    let doc = json!({
        "L": max_len,
        "stages": stages,
        "formula": formula,
        "exact": report.exact_count.to_string(),
        "display": report.display(),
        "scientific": report.scientific(2).to_e_notation(),
        "per_stage": report.per_stage.iter().map(|n| n.to_string()).collect::<Vec<_>>(),
    });
    let text = pretty(&doc)?;
    if g.json {
        print!("{text}");
    } else {
        println!("{}", report.display());
    }
    let config = json!({ "L": max_len, "stages": stages, "formula": formula });
    emit(optional_run(g, "count", config)?, "count.json", &text)
}

fn search(g: &Global, a: &SearchArgs) -> Result<()> {
    let checkpoint: Option<SearchCheckpoint> = match &a.resume {
        Some(p) => Some(serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let mut config = match (&checkpoint, &a.config) {
        (Some(ck), _) => ck.config.clone(),
        (None, Some(p)) => load_toml::<SearchConfig>(p)?,
        (None, None) => unreachable!("clap requires --config or --resume"),
    };
    if checkpoint.is_some() && (a.seed.is_some() || a.if_sampling.is_some() || a.budget.is_some()) {
        return Err(Usage("--seed, --if-sampling and --budget cannot change a resumed run".into()).into());
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(t) = a.if_sampling {
        config.if_sampling = t == Toggle::On;
    }
    if let Some(b) = a.budget {
        config.madds_budget = Some(b);
    }
    let run = Run::open("search", g.out.as_deref(), serde_json::to_value(&config)?, vec![config.seed])?;
    within(run, |run| {
        run.details = json!({
            "mode": if config.if_sampling { "interleaving_free" } else { "baseline" },
            "if_sampling": config.if_sampling,
            "resumed": checkpoint.is_some(),
        });
        config.validate()?;
        let data = Dataset::load(&config.data, &config.space, config.seed)?;
        let mut searcher = match checkpoint {
            Some(ck) => Searcher::resume(ck, &data)?,
            None => Searcher::new(config.clone(), &data)?,
        };
        while !searcher.is_done() {
            searcher.step_loop()?;
            let s = searcher.state();
            if !g.json {
                eprintln!(
                    "loop {}: iteration {}, MAdds {}, mu {:.3e}",
                    s.loop_index,
                    s.iteration,
                    madds(&s.architecture())?,
                    s.mu
                );
            }
            if a.checkpoint {
                run.write("checkpoint.json", pretty(&searcher.checkpoint())?)?;
            }
        }
        let (arch, report) = searcher.finish()?;
        run.write("arch.json", export_json(&arch))?;
        run.write("report.json", pretty(&report)?)?;
        run.write("trajectories.csv", trajectory_csv(&report.trajectory))?;
        if g.plot {
            run.write("gates.svg", gate_chart("tracked edge gates", &report.trajectory))?;
        }
        if g.json {
            print!("{}", pretty(&report)?);
        } else {
            println!(
                "depth {}, MAdds {} (budget {}), params {}, loops {}, forced prunes {}",
                report.depth,
                report.madds,
                report.madds_budget.map_or("none".into(), |b| b.to_string()),
                report.params,
                report.loops,
                report.forced_prunes
            );
            println!("wrote {}", run.dir().display());
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct Figure1Aggregate {
    k: usize,
    seeds: Vec<u64>,
    candidates: Vec<Connection>,
    injected: Vec<Connection>,
    /// Seeds where the shortest candidate ends rank 1.
    shortest_wins: usize,
    final_ranks: Vec<Vec<usize>>,
    onsets: Vec<Vec<Option<u64>>>,
}

fn figure1(g: &Global, a: &Figure1Args) -> Result<()> {
    let mut base: Figure1Config = match &a.config {
        Some(p) => load_toml(p)?,
        None => Figure1Config::default(),
    };
    if let Some(k) = a.k {
        base.k = k as usize;
    }
    if let Some(s) = a.seed {
        base.seed = s;
    }
    base.validate()?;
    let seeds: Vec<u64> = (base.seed..base.seed + a.seeds).collect();
    let run = Run::open("figure1", g.out.as_deref(), serde_json::to_value(&base)?, seeds.clone())?;
    within(run, |run| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs.unwrap_or(0))
            .build()
            .context("building worker pool")?;
        let results: Vec<Figure1Result> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = Figure1Config { seed, ..base.clone() };
                    run_figure1(&cfg, &figure1_dataset(&cfg)?)
                })
                .collect::<ifnas_core::Result<_>>()
        })?;
        let injected = results.first().map(|r| r.injected.clone()).unwrap_or_default();
        run.details = json!({
            "k": base.k,
            "injected": injected.iter().map(|c| format!("({},{})", c.source, c.target)).collect::<Vec<_>>(),
        });
        for r in &results {
            let dir = format!("seed-{}", r.seed);
            run.write(format!("{dir}/trajectories.csv"), trajectory_csv(&r.trajectory))?;
            run.write(format!("{dir}/summary.csv"), r.summary.to_csv())?;
            run.write(format!("{dir}/result.json"), pretty(r)?)?;
            if g.plot {
                let title = format!("candidate gates, k = {}, seed {}", r.k, r.seed);
                run.write(format!("{dir}/gates.svg"), gate_chart(&title, &r.trajectory))?;
            }
        }
        let agg = Figure1Aggregate {
            k: base.k,
            seeds: seeds.clone(),
            candidates: base.candidate_connections(),
            injected,
            shortest_wins: results.iter().filter(|r| r.summary.candidates[0].final_rank == 1).count(),
            final_ranks: results
                .iter()
                .map(|r| r.summary.candidates.iter().map(|c| c.final_rank).collect())
                .collect(),
            onsets: results
                .iter()
                .map(|r| r.summary.candidates.iter().map(|c| c.dominance_onset).collect())
                .collect(),
        };
        run.write("figure1.json", pretty(&agg)?)?;
        if g.json {
            print!("{}", pretty(&agg)?);
        } else {
            for r in &results {
                let parts: Vec<String> = r
                    .summary
                    .candidates
                    .iter()
                    .map(|c| format!("pre-{} rank {} gate {:.3}", c.connection.len(), c.final_rank, c.final_gate))
                    .collect();
                println!("seed {}: {}", r.seed, parts.join(", "));
            }
            println!("shortest candidate ranked first in {}/{} seeds", agg.shortest_wins, seeds.len());
            println!("wrote {}", run.dir().display());
        }
        Ok(())
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RandomConfig {
    space: SupernetSpec,
    madds_budget: Option<u64>,
    one_input_per_node: bool,
    seed: u64,
    seeds: u64,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            space: SupernetSpec::default(),
            madds_budget: None,
            one_input_per_node: false,
            seed: 0,
            seeds: 5,
        }
    }
}

#[derive(Serialize)]
struct RandomRow {
    seed: u64,
    depth: usize,
    madds: u64,
    params: usize,
}

fn random(g: &Global, a: &RandomArgs) -> Result<()> {
    let mut cfg: RandomConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => RandomConfig::default(),
    };
    if a.budget.is_some() {
        cfg.madds_budget = a.budget;
    }
    if let Some(n) = a.seeds {
        cfg.seeds = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.one_input_per_node |= a.one_input_per_node;
    if cfg.seeds == 0 {
        return Err(Usage("--seeds must be positive".into()).into());
    }
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + cfg.seeds).collect();
    let run = Run::open("random", g.out.as_deref(), serde_json::to_value(&cfg)?, seeds.clone())?;
    within(run, |run| {
        let constraints = RandomConstraints {
            madds_budget: cfg.madds_budget,
            one_input_per_node: cfg.one_input_per_node,
        };
        let mut archs = Vec::new();
        let mut rows = Vec::new();
        for &seed in &seeds {
            let arch = random_architecture(&cfg.space, seed, &constraints)?;
            run.write(format!("arch-{seed}.json"), export_json(&arch))?;
            rows.push(RandomRow {
                seed,
                depth: ifnas_core::space::depth(&arch)?,
                madds: madds(&arch)?,
                params: param_count(&arch)?,
            });
            archs.push(arch);
        }
        let stats = depth_stats(&archs)?;
        let doc = json!({ "architectures": rows, "depth_mean": stats.mean, "depth_spread": stats.spread });
        run.write("random.json", pretty(&doc)?)?;
        if g.json {
            print!("{}", pretty(&doc)?);
        } else {
            for r in &rows {
                println!("seed {}: depth {}, MAdds {}, params {}", r.seed, r.depth, r.madds, r.params);
            }
            println!("depth {:.2} ± {:.2}", stats.mean, stats.spread);
            println!("wrote {}", run.dir().display());
        }
        Ok(())
    })
}

fn connections_of(text: &str) -> Result<BTreeSet<Connection>> {
    let probe: serde_json::Value = serde_json::from_str(text)?;
    if probe.get("format").and_then(|f| f.as_str()) == Some(MASK_FORMAT) {
        Ok(import_mask_json(text)?.1.active)
    } else {
        Ok(import_json(text)?.edges())
    }
}

fn audit_cmd(g: &Global, a: &AuditArgs) -> Result<()> {
    let text = read(&a.file)?;
    let conns = connections_of(&text)?;
    let report = audit(&conns);
    let section = |pairs: &[ifnas_core::interleave::InterleavePair]| {
        json!({ "count": pairs.len(), "pairs": pairs.iter().map(|p| p.to_string()).collect::<Vec<_>>() })
    };
    let doc = json!({
        "same_target_exempt": section(&report.same_target_exempt),
        "strict": section(&report.strict),
    });
    let text_out = pretty(&doc)?;
    if g.json {
        print!("{text_out}");
    } else {
        for (name, pairs) in [("same-target exempt", &report.same_target_exempt), ("strict", &report.strict)] {
            println!("{name}: {} interleaved pairs", pairs.len());
            for p in pairs {
                println!("  {p}");
            }
        }
    }
    let config = json!({ "file": a.file.display().to_string(), "input_hash": crate::run::content_hash(text.as_bytes()) });
    emit(optional_run(g, "audit", config)?, "audit.json", &text_out)
}

fn export(g: &Global, a: &ExportArgs) -> Result<()> {
    debug_assert!(a.dot);
    let text = read(&a.file)?;
    let dot = export_dot(&import_json(&text)?);
    if g.out.is_none() {
        print!("{dot}");
    }
    let config = json!({ "file": a.file.display().to_string(), "input_hash": crate::run::content_hash(text.as_bytes()) });
    emit(optional_run(g, "export", config)?, "arch.dot", &dot)
}

fn mask(g: &Global, a: &MaskArgs) -> Result<()> {
    let spec = match (&a.config, a.max_len, a.nodes) {
        (Some(p), _, _) => load_toml::<SearchConfig>(p)?.space,
        (None, Some(l), Some(n)) => {
            SupernetSpec::single_stage(l, n, 16, 8, vec![OperatorKind::SepConv3x3, OperatorKind::Skip], 10)
        }
        _ => return Err(Usage("give --config or both --L and --nodes".into()).into()),
    };
    let supernet = build_supernet(&spec)?;
    let m = extract_subsupernet(&supernet, a.group)?;
    let text = export_mask_json(&spec, &m);
    if g.out.is_none() {
        print!("{text}");
    }
    let config = json!({ "space": spec, "group": a.group });
    emit(optional_run(g, "mask", config)?, &format!("mask-g{}.json", a.group), &text)
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use explore_core::explore::{evaluate, mean_ci, train, Policy};
use explore_core::features::{FEATURE_NAMES, SCHEMA_VERSION};
use explore_core::learner::{LearnedPolicy, RegressionForest};
use explore_core::objective::{audit_path, Instance, PathState};
use explore_core::planners::{brute_force_solve, gcb_solve, PolicyKind};
use explore_core::sensor::SensorConfig;
use explore_core::worldgen::{generate_dataset, parse_dataset, write_dataset, DatasetInstance};
use toml::Value;

use crate::config::{DatasetSource, RunConfig};
use crate::error::CliError;
use crate::output::{config_hash, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenWorlds,
    OracleSolve,
    Train,
    Evaluate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenWorlds => "gen-worlds",
            Command::OracleSolve => "oracle-solve",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
        }
    }
}

/// A resolved invocation: config with flag overrides applied and all inputs read.
pub struct Run {
    pub command: Command,
    pub config: RunConfig,
    pub out_root: PathBuf,
    inputs: Vec<(String, Vec<u8>)>,
}

type Report = BTreeMap<String, Value>;

impl Run {
    /// Reads every input file up front so that bad paths fail before any work.
    pub fn prepare(command: Command, config: RunConfig, out_root: PathBuf) -> Result<Self, CliError> {
        let mut inputs = Vec::new();
        for p in config.input_files() {
            let bytes = std::fs::read(&p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            inputs.push((p.display().to_string(), bytes));
        }
        Ok(Run {
            command,
            config,
            out_root,
            inputs,
        })
    }

    fn input(&self, path: &Path) -> &[u8] {
        let key = path.display().to_string();
        &self.inputs.iter().find(|(p, _)| *p == key).expect("input was read").1
    }

    fn dataset(&self, src: &DatasetSource) -> Result<Vec<DatasetInstance>, CliError> {
        match src {
            DatasetSource::File(p) => {
                let text = std::str::from_utf8(self.input(p))
                    .map_err(|_| CliError::Data(format!("{} is not UTF-8", p.display())))?;
                parse_dataset(text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            }
            DatasetSource::Generated(spec) => Ok(generate_dataset(spec)?),
        }
    }

    fn instances(&self, src: &DatasetSource, sensor: SensorConfig) -> Result<Vec<Instance>, CliError> {
        self.dataset(src)?
            .iter()
            .map(|d| Instance::from_dataset(d, sensor).map_err(CliError::from))
            .collect()
    }

    pub fn execute(self) -> Result<PathBuf, CliError> {
        let canonical = self.config.canonical();
        let hash = config_hash(self.command.name(), &canonical, &self.inputs);
        let mut out = Outputs::new(&self.out_root, self.command.name(), &hash)?;
        let report = match self.command {
            Command::GenWorlds => self.gen_worlds(&mut out)?,
            Command::OracleSolve => self.oracle_solve(&mut out)?,
            Command::Train => self.train(&mut out)?,
            Command::Evaluate => self.evaluate(&mut out)?,
        };
        out.commit(self.command.name(), &hash, &canonical, &self.inputs, &report)
    }

    fn gen_worlds(&self, out: &mut Outputs) -> Result<Report, CliError> {
        let data = self.dataset(&self.config.dataset()?)?;
        let sensor = self.config.sensor()?;
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data)?;
        out.add("dataset.txt", buf);
        let mut csv = String::from("instance,world,width,height,occupied,nodes,coverable\n");
        for (k, d) in data.iter().enumerate() {
            let inst = Instance::from_dataset(d, sensor)?;
            let w = inst.world();
            writeln!(
                csv,
                "{k},{},{},{},{},{},{}",
                w.id(),
                w.width(),
                w.height(),
                w.occupied_count(),
                inst.nodes().len(),
                inst.coverable()
            )
            .unwrap();
        }
        out.add("instances.csv", csv.into_bytes());
        Ok(BTreeMap::from([("instances".into(), Value::Integer(data.len() as i64))]))
    }

    fn oracle_solve(&self, out: &mut Outputs) -> Result<Report, CliError> {
        let insts = self.instances(&self.config.dataset()?, self.config.sensor()?)?;
        let budget = self.config.budget()?;
        let exact = self.config.oracle.as_ref().is_some_and(|o| o.exact);
        let mut csv = String::from("instance,utility,singleton,travel_cost,length,path");
        csv.push_str(if exact { ",optimum\n" } else { "\n" });
        let mut utilities = Vec::with_capacity(insts.len());
        for (k, inst) in insts.iter().enumerate() {
            let start = PathState::start(inst.nodes());
            let plan = gcb_solve(inst, &start, budget.travel, budget.horizon);
            let mut full = vec![inst.nodes().start_index()];
            full.extend(&plan.path);
            audit_path(inst.nodes(), &full, &budget)
                .map_err(|e| CliError::Internal(format!("instance {k}: oracle plan {e}")))?;
            let singleton = inst
                .feasible_actions(&start, &budget)
                .into_iter()
                .map(|a| inst.coverage(&[start.last(), a]))
                .fold(inst.coverage(start.visited()), f64::max);
            let path: Vec<String> = full.iter().map(|v| v.to_string()).collect();
            write!(
                csv,
                "{k},{},{singleton},{},{},{}",
                plan.predicted_utility,
                plan.predicted_cost,
                full.len(),
                path.join(" ")
            )
            .unwrap();
            if exact {
                let (_, opt) = brute_force_solve(inst, &budget)?;
                write!(csv, ",{opt}").unwrap();
            }
            csv.push('\n');
            utilities.push(plan.predicted_utility);
        }
        out.add("plans.csv", csv.into_bytes());
        let (mean, half) = mean_ci(&utilities);
        let report = if utilities.is_empty() {
            "count,mean,ci_lo,ci_hi\n0,,,\n".to_string()
        } else {
            format!(
                "count,mean,ci_lo,ci_hi\n{},{mean},{},{}\n",
                utilities.len(),
                mean - half,
                mean + half
            )
        };
        out.add("report.csv", report.into_bytes());
        Ok(BTreeMap::from([
            ("instances".into(), Value::Integer(insts.len() as i64)),
            ("mean_utility".into(), Value::Float(mean)),
        ]))
    }

    fn train(&self, out: &mut Outputs) -> Result<Report, CliError> {
        let (cfg, train_src, val_src) = self.config.train_config()?;
        let sensor = self.config.sensor()?;
        let train_set = self.instances(&train_src, sensor)?;
        let val_set = self.instances(&val_src, sensor)?;
        let result = train(&cfg, &train_set, &val_set)?;
        if let Some(v) = result.violations.first() {
            return Err(CliError::Internal(format!("constraint violation: {v}")));
        }
        let mut model = Vec::new();
        result.policy.forest().write(&mut model)?;
        out.add("model.forest", model);
        let mut csv = String::from(
            "iteration,beta,new_datapoints,aggregate_size,resamples,oracle_actions,learner_actions,violations,mean_q,validation_value\n",
        );
        for m in &result.metrics {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                m.iteration,
                m.beta,
                m.new_datapoints,
                m.aggregate_size,
                m.resamples,
                m.oracle_actions,
                m.learner_actions,
                m.violations,
                m.mean_q,
                m.validation_value
            )
            .unwrap();
        }
        out.add("metrics.csv", csv.into_bytes());
        let schema = toml::toml! {
            schema_version = (SCHEMA_VERSION as i64)
            feature_count = (FEATURE_NAMES.len() as i64)
            names = (FEATURE_NAMES.iter().map(|s| s.to_string()).collect::<Vec<_>>())
        };
        out.add("features.toml", toml::to_string(&schema).unwrap().into_bytes());
        Ok(BTreeMap::from([
            ("best_iteration".into(), Value::Integer(result.best_iteration as i64)),
            ("datapoints".into(), Value::Integer(result.dataset.len() as i64)),
            ("violations".into(), Value::Integer(0)),
        ]))
    }

    fn evaluate(&self, out: &mut Outputs) -> Result<Report, CliError> {
        let kind = self.config.policy()?;
        let section = self.config.evaluate.clone().unwrap_or_default();
        let learned = match (kind, &section.model) {
            (PolicyKind::Learned, Some(path)) => {
                let forest = RegressionForest::read(self.input(path))
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Some(LearnedPolicy::new(forest)?)
            }
            (PolicyKind::Learned, None) => {
                return Err(CliError::Config("policy \"learned\" needs evaluate.model".into()))
            }
            _ => None,
        };
        let policy = match (kind, &learned) {
            (PolicyKind::OracleGcb, _) => Policy::Oracle,
            (PolicyKind::Learned, Some(l)) => Policy::Learned(l),
            (k, _) => Policy::Heuristic(k),
        };
        let insts = self.instances(&self.config.dataset()?, self.config.sensor()?)?;
        let budget = self.config.budget()?;
        let episodes = section.episodes.unwrap_or(insts.len());
        let ev = evaluate(policy, &insts, &budget, episodes, self.config.seed, &section.snapshot_steps)?;

        let mut csv = String::from("episode,instance,step,action,reward,cumulative\n");
        let mut finals = Vec::with_capacity(ev.traces.len());
        for (k, tr) in ev.traces.iter().enumerate() {
            if let Err(e) = &tr.audit {
                return Err(CliError::Internal(format!("episode {k}: constraint violation: {e}")));
            }
            let inst = k % insts.len();
            for s in &tr.steps {
                writeln!(csv, "{k},{inst},{},{},{},{}", s.t, s.action, s.reward, s.cumulative).unwrap();
            }
            for (t, grid) in &tr.snapshots {
                out.add(format!("snapshots/episode-{k:04}-step-{t:03}.txt"), grid.clone().into_bytes());
            }
            finals.push(tr.final_reward());
        }
        out.add("episodes.csv", csv.into_bytes());
        let mut summary = String::from("step,mean,ci_lo,ci_hi\n");
        for r in &ev.summary {
            writeln!(summary, "{},{},{},{}", r.step, r.mean, r.ci_lo, r.ci_hi).unwrap();
        }
        out.add("summary.csv", summary.into_bytes());
        let mut report = BTreeMap::from([
            ("policy".into(), Value::String(kind.name().into())),
            ("episodes".into(), Value::Integer(episodes as i64)),
        ]);
        if !finals.is_empty() {
            let (mean, half) = mean_ci(&finals);
            report.insert("mean_final".into(), Value::Float(mean));
            report.insert("ci_half_width".into(), Value::Float(half));
        }
        Ok(report)
    }
}

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rayon::prelude::*;

use super::{
    build_abstractor, evaluate, evaluate_scenes, load_human_features, CellError, CellResult, CellTiming, EvalResult,
    ExperimentConfig, HarnessError, Method, Protocol, Report, Shift,
};
use crate::abstraction::Abstractor;
use crate::imitation::{dart_augment, train, DemoSet, TrainConfig, TrainedPolicy};
use crate::nn::{save_checkpoint, write_checkpoint, Variant};
use crate::scenario::{MultiTaskSpec, Registry, ScenarioSpec};
use crate::sim::{sample_recipe, Catalog, Role, Scene, SceneRecipe};
use crate::util::{derive_seed, sha256_hex};

struct Ctx {
    registry: Arc<Registry>,
    cfg: ExperimentConfig,
    backend: OnceLock<Result<Arc<Abstractor>, String>>,
    human: OnceLock<Result<Arc<Abstractor>, String>>,
}

struct Trained {
    policy: TrainedPolicy,
    epochs: usize,
    losses: Vec<f64>,
    checkpoint_sha256: String,
    secs: f64,
}

#[derive(Clone)]
struct Job {
    method: Method,
    scenario: String,
    demos: usize,
    seed: u64,
}

impl Job {
    fn error(&self, e: impl ToString) -> CellError {
        CellError {
            method: self.method,
            scenario: self.scenario.clone(),
            demos: self.demos,
            seed: self.seed,
            message: e.to_string(),
        }
    }

    fn result(&self, shift: Shift, utterance: &str, r: EvalResult, t: &Trained) -> CellResult {
        CellResult {
            method: self.method,
            scenario: self.scenario.clone(),
            demos: self.demos,
            seed: self.seed,
            shift,
            utterance: utterance.to_string(),
            successes: r.successes,
            n: r.n,
            success: r.rate(),
            epochs: t.epochs,
            losses: t.losses.clone(),
            checkpoint_sha256: t.checkpoint_sha256.clone(),
        }
    }

    fn test_seed(&self, shift: Shift) -> u64 {
        derive_seed(self.seed, &["test", &self.scenario, &shift.to_string()])
    }
}

type JobOutput = Result<(Vec<CellResult>, CellTiming), CellError>;

impl Ctx {
    fn catalog(&self) -> &Arc<Catalog> {
        self.registry.catalog()
    }

    fn abstractor(&self, variant: Variant) -> Result<Option<Arc<Abstractor>>, HarnessError> {
        if !variant.uses_abstraction() {
            return Ok(None);
        }
        let slot = if variant == Variant::Human {
            self.human.get_or_init(|| {
                load_human_features(self.catalog().clone(), self.cfg.human_features.as_deref())
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
        } else {
            self.backend.get_or_init(|| {
                build_abstractor(&self.registry, &self.cfg.backend).map(Arc::new).map_err(|e| e.to_string())
            })
        };
        slot.clone().map(Some).map_err(HarnessError::Config)
    }

    fn spec(&self, id: &str) -> Result<&ScenarioSpec, HarnessError> {
        self.registry.scenario(id).ok_or_else(|| HarnessError::UnknownScenario(id.into()))
    }

    fn multitask(&self, id: &str) -> Result<&MultiTaskSpec, HarnessError> {
        self.registry.multitask_spec(id).ok_or_else(|| HarnessError::UnknownScenario(id.into()))
    }

    fn demo_seed(&self, job: &Job) -> u64 {
        // Shared by every method and demo count so that larger sets extend smaller ones.
        derive_seed(job.seed, &["demos", &job.scenario])
    }

    fn train(&self, job: &Job, demos: &DemoSet) -> Result<Trained, HarnessError> {
        let start = Instant::now();
        let variant = job.method.variant;
        let tag = [job.method.to_string(), job.scenario.clone(), job.demos.to_string()];
        let demos = if job.method.dart {
            dart_augment(demos, &self.cfg.dart, derive_seed(job.seed, &["dart", &tag[1], &tag[2]]))?
        } else {
            demos.clone()
        };
        let abstractor = self.abstractor(variant)?;
        let tcfg = TrainConfig {
            seed: derive_seed(job.seed, &["train", &tag[0], &tag[1], &tag[2]]),
            ..self.cfg.train.clone()
        };
        let mut out = train(variant, &demos, &tcfg, self.catalog(), abstractor.as_deref())?;
        let hash = self.catalog().hash();
        let checkpoint_sha256 = sha256_hex(&write_checkpoint(&mut out.net, tcfg.seed, hash));
        if let Some(dir) = &self.cfg.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(super::io_err(dir))?;
            let path = dir.join(format!("{}_{}_{}_{}.ckpt", tag[0], tag[1], tag[2], job.seed));
            save_checkpoint(&path, &mut out.net, tcfg.seed, hash)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        }
        Ok(Trained {
            epochs: out.losses.len(),
            losses: out.losses,
            checkpoint_sha256,
            policy: TrainedPolicy { variant, net: out.net, catalog: self.catalog().clone(), abstractor },
            secs: start.elapsed().as_secs_f64(),
        })
    }

    fn timing(job: &Job, t: &Trained, eval_start: Instant) -> CellTiming {
        CellTiming {
            method: job.method,
            scenario: job.scenario.clone(),
            demos: job.demos,
            seed: job.seed,
            train_secs: t.secs,
            eval_secs: eval_start.elapsed().as_secs_f64(),
        }
    }

    fn q1(&self, job: &Job) -> Result<(Vec<CellResult>, CellTiming), HarnessError> {
        let spec = self.spec(&job.scenario)?;
        let demos = DemoSet::generate(self.catalog(), spec, &spec.truth, job.demos, self.demo_seed(job))?;
        let t = self.train(job, &demos)?;
        let start = Instant::now();
        let recipe = SceneRecipe::standard(spec, &spec.truth)?;
        let n = self.cfg.eval_episodes;
        let r = evaluate(&t.policy, self.catalog(), spec, &recipe, n, job.test_seed(Shift::None))?;
        Ok((vec![job.result(Shift::None, &spec.utterance, r, &t)], Self::timing(job, &t, start)))
    }

    fn q2(&self, job: &Job) -> Result<(Vec<CellResult>, CellTiming), HarnessError> {
        let spec = self.spec(&job.scenario)?;
        let split = spec
            .q2
            .as_ref()
            .ok_or_else(|| HarnessError::Config(format!("{} has no covariate-shift split", spec.id)))?;
        let train_dist = spec.truth.with_target_textures(&split.train_textures);
        let shift_dist = spec.truth.with_target_textures(&split.shift_textures);
        let demos = DemoSet::generate(self.catalog(), spec, &train_dist, job.demos, self.demo_seed(job))?;
        let t = self.train(job, &demos)?;
        let start = Instant::now();
        let base = SceneRecipe::standard(spec, &train_dist)?;
        let extra = base.distractors + 1;
        let tests = [
            (Shift::None, base.clone()),
            (Shift::Texture, SceneRecipe::standard(spec, &shift_dist)?),
            (Shift::Distractor, base.with_distractors(extra)),
        ];
        let mut cells = Vec::new();
        for (shift, recipe) in tests {
            let r = evaluate(&t.policy, self.catalog(), spec, &recipe, self.cfg.eval_episodes, job.test_seed(shift))?;
            cells.push(job.result(shift, &spec.utterance, r, &t));
        }
        Ok((cells, Self::timing(job, &t, start)))
    }

    fn q3(&self, job: &Job) -> Result<(Vec<CellResult>, CellTiming), HarnessError> {
        let mt = self.multitask(&job.scenario)?;
        let demos = DemoSet::generate_multitask(self.catalog(), mt, job.demos, self.demo_seed(job))?;
        let t = self.train(job, &demos)?;
        let start = Instant::now();
        let recipe = both_candidates_recipe(mt);
        let seed = job.test_seed(Shift::Unseen);
        let scenes = (0..self.cfg.eval_episodes)
            .map(|i| sample_recipe(self.catalog(), &recipe, super::eval_seed(seed, &mt.id, i)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cells = Vec::new();
        let subs = mt.seen.iter().map(|s| (Shift::Seen, s)).chain([(Shift::Unseen, &mt.unseen)]);
        for (shift, spec) in subs {
            let relabeled: Vec<Scene> = scenes.iter().map(|s| relabel_for(self.catalog(), spec, s)).collect();
            let r = evaluate_scenes(&t.policy, self.catalog(), spec, &relabeled)?;
            cells.push(job.result(shift, &spec.utterance, r, &t));
        }
        Ok((cells, Self::timing(job, &t, start)))
    }

    fn run_job(&self, job: &Job) -> JobOutput {
        let out = match self.cfg.protocol {
            Protocol::Q1 => self.q1(job),
            Protocol::Q2 => self.q2(job),
            Protocol::Q3 => self.q3(job),
        };
        out.map_err(|e| job.error(e))
    }
}

/// Test scenes for a multi-task family: one object from each seen sub-task's
/// target set (and each avoid set), plus a distractor outside all of them.
pub fn both_candidates_recipe(mt: &MultiTaskSpec) -> SceneRecipe {
    let mut slots: Vec<(Role, _)> = Vec::new();
    for s in &mt.seen {
        if !slots.iter().any(|(r, p)| *r == Role::Target && *p == s.truth.target) {
            slots.push((Role::Target, s.truth.target.clone()));
        }
    }
    for a in mt.seen.iter().filter_map(|s| s.truth.avoid.as_ref()) {
        if !slots.iter().any(|(r, p)| *r == Role::Obstacle && p == a) {
            slots.push((Role::Obstacle, a.clone()));
        }
    }
    SceneRecipe { task: mt.task, task_ref: mt.id.clone(), slots, distractors: 1, exclude: mt.exclusion() }
}

/// Reassigns roles as seen by one utterance: its targets become targets, its
/// avoid set obstacles, everything else a distractor.
pub fn relabel_for(_catalog: &Catalog, spec: &ScenarioSpec, scene: &Scene) -> Scene {
    let mut s = scene.clone();
    for o in &mut s.objects {
        if o.role == Role::Goal {
            continue;
        }
        o.role = if spec.truth.target.contains(o.object_type, o.texture) {
            Role::Target
        } else if spec.truth.avoid.as_ref().is_some_and(|a| a.contains(o.object_type, o.texture)) {
            Role::Obstacle
        } else {
            Role::Distractor
        };
    }
    s
}

fn jobs(ctx: &Ctx) -> Result<Vec<Job>, HarnessError> {
    let cfg = &ctx.cfg;
    for id in &cfg.scenarios {
        match cfg.protocol {
            Protocol::Q3 => ctx.multitask(id).map(|_| ())?,
            _ => ctx.spec(id).map(|_| ())?,
        }
    }
    let counts = match cfg.protocol {
        Protocol::Q1 => cfg.demo_counts.clone(),
        _ => cfg.demo_counts[..1].to_vec(),
    };
    let mut out = Vec::new();
    for scenario in &cfg.scenarios {
        for &method in &cfg.methods {
            for &demos in &counts {
                for &seed in &cfg.seeds {
                    out.push(Job { method, scenario: scenario.clone(), demos, seed });
                }
            }
        }
    }
    Ok(out)
}

/// Runs the configured protocol. Failing cells are recorded in the report's
/// `errors`; configuration problems abort.
pub fn run(registry: Arc<Registry>, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let ctx = Ctx { registry, cfg: cfg.clone(), backend: OnceLock::new(), human: OnceLock::new() };
    let jobs = jobs(&ctx)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outputs: Vec<JobOutput> = pool.install(|| jobs.par_iter().map(|j| ctx.run_job(j)).collect());
    let mut report = Report::empty(cfg.protocol, &cfg.hash(), ctx.catalog().hash());
    for o in outputs {
        match o {
            Ok((cells, timing)) => {
                report.cells.extend(cells);
                report.timings.push(timing);
            }
            Err(e) => report.errors.push(e),
        }
    }
    Ok(report)
}

fn with_protocol(cfg: &ExperimentConfig, p: Protocol) -> ExperimentConfig {
    ExperimentConfig { protocol: p, ..cfg.clone() }
}

pub fn run_q1(registry: Arc<Registry>, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    run(registry, &with_protocol(cfg, Protocol::Q1))
}

pub fn run_q2(registry: Arc<Registry>, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    run(registry, &with_protocol(cfg, Protocol::Q2))
}

pub fn run_q3(registry: Arc<Registry>, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    run(registry, &with_protocol(cfg, Protocol::Q3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Backend, OraclePolicy};
    use crate::sim::segment;

    fn tiny(protocol: Protocol, methods: Vec<Method>, scenarios: &[&str]) -> ExperimentConfig {
        ExperimentConfig {
            protocol,
            methods,
            scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
            demo_counts: vec![2],
            seeds: vec![0],
            eval_episodes: 4,
            train: TrainConfig { max_epochs: 2, ..Default::default() },
            ..ExperimentConfig::for_protocol(protocol)
        }
    }

    #[test]
    fn q3_scenes_hold_both_candidates() {
        let reg = Registry::builtin();
        let cat = reg.catalog();
        for mt in reg.multitask() {
            let recipe = both_candidates_recipe(mt);
            for i in 0..20 {
                let scene = sample_recipe(cat, &recipe, i).unwrap();
                for sub in &mt.seen {
                    let s = relabel_for(cat, sub, &scene);
                    assert_eq!(s.objects.iter().filter(|o| o.role == Role::Target).count(), 1, "{} {}", mt.id, sub.id);
                }
                let u = relabel_for(cat, &mt.unseen, &scene);
                let targets = u.objects.iter().filter(|o| o.role == Role::Target).count();
                let obstacles = u.objects.iter().filter(|o| o.role == Role::Obstacle).count();
                assert!(targets + obstacles >= 2, "{}: unseen sees both candidates", mt.id);
            }
        }
    }

    #[test]
    fn oracle_solves_relabeled_q3_scenes() {
        let reg = Arc::new(Registry::builtin());
        let cat = reg.catalog();
        let oracle = OraclePolicy::new(reg.clone());
        for mt in reg.multitask() {
            let scenes: Vec<Scene> = (0..20).map(|i| sample_recipe(cat, &both_candidates_recipe(mt), i).unwrap()).collect();
            for spec in mt.seen.iter().chain([&mt.unseen]) {
                let relabeled: Vec<Scene> = scenes.iter().map(|s| relabel_for(cat, spec, s)).collect();
                let r = evaluate_scenes(&oracle, cat, spec, &relabeled).unwrap();
                assert_eq!(r.rate(), 1.0, "{}", spec.id);
            }
        }
    }

    #[test]
    fn fruit_mask_covers_both_fruits() {
        let reg = Arc::new(Registry::builtin());
        let cat = reg.catalog();
        let mt = reg.multitask_spec("pick-up-fruit").unwrap();
        let abs = build_abstractor(&reg, &Backend::Oracle).unwrap();
        let scene = sample_recipe(cat, &both_candidates_recipe(mt), 3).unwrap();
        let mask = abs.observe(&scene, "Bring me a fruit.").unwrap();
        let seg = segment(cat, &scene);
        let on = mask.channel_pixels(0);
        for (i, o) in scene.objects.iter().enumerate() {
            let fruit = mt.unseen.truth.target.contains(o.object_type, o.texture);
            let covered = seg.labels.iter().enumerate().filter(|(_, &l)| l as usize == i + 1).all(|(p, _)| {
                on.contains(&(p % cat.resolution(), p / cat.resolution()))
            });
            assert_eq!(fruit, covered, "object {i}");
        }
    }

    #[test]
    fn cells_cover_the_grid_and_failures_are_recorded() {
        let reg = Arc::new(Registry::builtin());
        let mut cfg = tiny(Protocol::Q1, vec![Method::plain(Variant::Lga), Method::GCBC_DART], &["heart"]);
        cfg.demo_counts = vec![1, 2];
        let r = run(reg.clone(), &cfg).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.errors.is_empty());
        assert!(r.cells.iter().all(|c| c.n == 4 && c.success == c.successes as f64 / 4.0));
        let q2 = run(reg, &tiny(Protocol::Q2, vec![Method::plain(Variant::Lga)], &["heart", "red-heart"])).unwrap();
        assert_eq!(q2.cells.len(), 3);
        assert_eq!(q2.errors.len(), 1);
        assert_eq!(q2.errors[0].scenario, "red-heart");
    }

    #[test]
    fn unknown_scenario_aborts() {
        let reg = Arc::new(Registry::builtin());
        let e = run(reg, &tiny(Protocol::Q1, vec![Method::plain(Variant::Lga)], &["juggling"]));
        assert!(matches!(e, Err(HarnessError::UnknownScenario(_))));
    }

    #[test]
    fn q3_reports_seen_and_unseen() {
        let reg = Arc::new(Registry::builtin());
        let r = run(reg, &tiny(Protocol::Q3, vec![Method::plain(Variant::Lga)], &["pick-up-fruit"])).unwrap();
        let shifts: Vec<Shift> = r.cells.iter().map(|c| c.shift).collect();
        assert_eq!(shifts, [Shift::Seen, Shift::Seen, Shift::Unseen]);
        assert_eq!(r.cells[2].utterance, "Bring me a fruit.");
    }
}

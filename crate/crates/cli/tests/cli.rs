use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rmab_core::data::{load_cohort, load_intervention_list, load_trajectories};
use rmab_core::sim::read_summary;
use rmab_core::{Architecture, TransitionPredictor};

const GENERATE: &str = r#"
[generator]
seed = 3
num_arms = 200

[[generator.types]]
engage = [0.2, 0.6, 0.2, 0.6]
boost = 0.3

[[generator.types]]
engage = [0.4, 0.8, 0.4, 0.8]
boost = 0.1

[rollout]
horizon = 8
budget = 40
seed = 4
"#;

const TRAIN: &str = r#"
[data]
cohort = "gen/cohort.csv"
trajectories = "gen/trajectories.csv"
behavior = "gen/behavior.csv"

[train]
learning_rate = 0.5
epochs = 40
hidden_width = 0
seed = 5

[dfl]
budget = 40
"#;

/// `nll_final` of `train ts` on the `GENERATE` fixture with `TRAIN`.
const FIXTURE_NLL: f64 = 4.307_689_980_127_234;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> PathBuf {
        let p = self.path(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.path(rel)).unwrap()
    }

    fn rmab(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rmab"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("RMAB_OUT_DIR")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.rmab(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn generate(&self) {
        self.write("generate.toml", GENERATE);
        self.ok(&["generate", "-c", "generate.toml", "-o", "gen"]);
    }
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn summary_value(path: &Path, key: &str) -> f64 {
    read_summary(path).unwrap()[key]
}

#[test]
fn generate_writes_files_and_manifest() {
    let ws = Workspace::new();
    ws.generate();
    for f in ["cohort.csv", "trajectories.csv", "behavior.csv", "manifest.toml"] {
        assert!(ws.path("gen").join(f).is_file(), "{f}");
    }
    assert_eq!(load_cohort(&ws.path("gen/cohort.csv")).unwrap().len(), 200);
    let trajs = load_trajectories(&ws.path("gen/trajectories.csv")).unwrap();
    assert!(trajs.iter().all(|t| t.trajectory.len() == 8));
    let manifest = String::from_utf8(ws.read("gen/manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"generate\""));
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("tool_version = "));
}

#[test]
fn same_config_twice_gives_identical_bytes() {
    let ws = Workspace::new();
    ws.generate();
    ws.ok(&["generate", "-c", "generate.toml", "-o", "again"]);
    for f in ["cohort.csv", "trajectories.csv", "behavior.csv", "manifest.toml"] {
        assert_eq!(ws.read(&format!("gen/{f}")), ws.read(&format!("again/{f}")), "{f}");
    }
}

#[test]
fn malformed_config_names_the_key() {
    let ws = Workspace::new();
    ws.write("generate.toml", GENERATE);
    let out = ws.rmab(&["generate", "-c", "generate.toml", "--set", "rollout.budget=-3", "-o", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rollout.budget"), "{}", stderr(&out));

    let out = ws.rmab(&["generate", "-c", "generate.toml", "--set", "generator.num_armz=3", "-o", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("num_armz"), "{}", stderr(&out));

    ws.write("broken.toml", "[generator\nseed = 1\n");
    let out = ws.rmab(&["generate", "-c", "broken.toml", "-o", "gen"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("broken.toml"));
}

#[test]
fn overrides_take_precedence_over_the_file() {
    let ws = Workspace::new();
    ws.write("generate.toml", GENERATE);
    ws.ok(&["generate", "-c", "generate.toml", "--set", "generator.num_arms=50", "-o", "gen"]);
    assert_eq!(load_cohort(&ws.path("gen/cohort.csv")).unwrap().len(), 50);
}

#[test]
fn missing_trajectory_file_is_an_io_error() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    let out = ws.rmab(&["train", "ts", "-c", "train.toml", "--set", "data.trajectories=gone.csv", "-o", "ts"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("gone.csv"));
}

#[test]
fn ts_checkpoint_matches_recorded_fixture() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    ws.ok(&["train", "ts", "-c", "train.toml", "-o", "ts"]);
    let nll = summary_value(&ws.path("ts/train_summary.txt"), "nll_final");
    assert!((nll - FIXTURE_NLL).abs() < 1e-9, "{nll}");

    // Scalar affine-logistic NLL of the checkpoint on disk.
    let predictor = TransitionPredictor::load(ws.path("ts/ts.ckpt")).unwrap();
    let w = predictor.params();
    let cohort = load_cohort(&ws.path("gen/cohort.csv")).unwrap();
    let trajs = load_trajectories(&ws.path("gen/trajectories.csv")).unwrap();
    let mut total = 0.0;
    for (t, a) in trajs.iter().zip(cohort.arms()) {
        assert_eq!(t.id, a.id);
        let x = a.features().as_slice();
        let dim = x.len();
        for step in t.trajectory.transitions() {
            let k = 2 * step.action.index() + step.state.index();
            let z = w[4 * dim + k] + (0..dim).map(|j| w[k * dim + j] * x[j]).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            total -= if step.next_state.index() == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    let oracle = total / trajs.len() as f64;
    assert!((oracle - FIXTURE_NLL).abs() < 1e-9, "{oracle}");
}

#[test]
fn dfl_with_zero_epochs_returns_the_initialization() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    ws.ok(&["train", "ts", "-c", "train.toml", "-o", "ts"]);
    ws.ok(&["train", "dfl", "-c", "train.toml", "--set", "train.epochs=0", "--set", "dfl.init=ts/ts.ckpt", "-o", "dfl"]);
    assert_eq!(ws.read("dfl/dfl.ckpt"), ws.read("ts/ts.ckpt"));

    ws.ok(&["train", "dfl", "-c", "train.toml", "--set", "train.epochs=0", "-o", "fresh"]);
    let dim = load_cohort(&ws.path("gen/cohort.csv")).unwrap().arms()[0].features().dim();
    let init = TransitionPredictor::random_init(Architecture::linear(dim), 5);
    assert_eq!(TransitionPredictor::load(ws.path("fresh/dfl.ckpt")).unwrap(), init);
}

#[test]
fn dfl_needs_behavior_and_budget() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", &TRAIN.replace("behavior = \"gen/behavior.csv\"\n", ""));
    let out = ws.rmab(&["train", "dfl", "-c", "train.toml", "-o", "dfl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("data.behavior"));
    ws.write("train.toml", &TRAIN.replace("[dfl]\nbudget = 40\n", ""));
    let out = ws.rmab(&["train", "dfl", "-c", "train.toml", "-o", "dfl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dfl.budget"));
}

fn plan_config(budget: usize) -> String {
    format!("[data]\ncohort = \"gen/cohort.csv\"\n\n[plan]\nbudget = {budget}\nweek = 2\n")
}

#[test]
fn plan_writes_budget_rows_and_saturates() {
    let ws = Workspace::new();
    ws.write("generate.toml", GENERATE);
    ws.ok(&["generate", "-c", "generate.toml", "--set", "generator.num_arms=3000", "--set", "rollout.horizon=1", "-o", "gen"]);
    ws.write("plan.toml", &plan_config(300));
    ws.ok(&["plan", "-c", "plan.toml", "-o", "plan"]);
    let rows = load_intervention_list(&ws.path("plan/intervention_list.csv")).unwrap();
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().enumerate().all(|(i, r)| r.priority_rank == i + 1 && r.week == 2));

    ws.ok(&["plan", "-c", "plan.toml", "-o", "again"]);
    assert_eq!(ws.read("plan/intervention_list.csv"), ws.read("again/intervention_list.csv"));
    assert_eq!(ws.read("plan/indices.tsv"), ws.read("again/indices.tsv"));

    ws.write("plan.toml", &plan_config(5000));
    ws.ok(&["plan", "-c", "plan.toml", "-o", "all"]);
    assert_eq!(load_intervention_list(&ws.path("all/intervention_list.csv")).unwrap().len(), 3000);
}

#[test]
fn plan_ranks_by_current_index() {
    let ws = Workspace::new();
    ws.generate();
    ws.write(
        "plan.toml",
        "[data]\ncohort = \"gen/cohort.csv\"\ntrajectories = \"gen/trajectories.csv\"\n\n[plan]\nbudget = 10\n",
    );
    ws.ok(&["plan", "-c", "plan.toml", "-o", "plan"]);
    let text = String::from_utf8(ws.read("plan/indices.tsv")).unwrap();
    let mut scored: Vec<(u64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let rows = load_intervention_list(&ws.path("plan/intervention_list.csv")).unwrap();
    let expected: Vec<u64> = scored[..10].iter().map(|s| s.0).collect();
    assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), expected);
    // Eight logged weeks, so the list is for week 8.
    assert!(rows.iter().all(|r| r.week == 8));
}

const SINGLE_GROUP_TRIAL: &str = r#"
[cohort.generator]
seed = 8
num_arms = 300

[[cohort.generator.types]]
engage = [0.2, 0.6, 0.2, 0.6]
boost = 0.3

[trial]
horizon = 6
budget = 30
seed = 9
bootstrap_resamples = 200

[[trial.groups]]
name = "csoc"
policy = "csoc"
"#;

#[test]
fn single_group_trial_has_no_comparisons() {
    let ws = Workspace::new();
    ws.write("trial.toml", SINGLE_GROUP_TRIAL);
    ws.ok(&["trial", "-c", "trial.toml", "-o", "trial"]);
    let summary = read_summary(&ws.path("trial/summary.txt")).unwrap();
    assert!(summary.keys().all(|k| !k.starts_with("compare.")));
    assert_eq!(summary["group.csoc.size"], 300.0);
    let prevented = String::from_utf8(ws.read("trial/drops_prevented.tsv")).unwrap();
    assert!(prevented.lines().all(|l| !l.contains('\t')));

    ws.write("report.toml", "[report]\nsummary = \"trial/summary.txt\"\n");
    let out = ws.ok(&["report", "-c", "report.toml", "-o", "report"]);
    let md = String::from_utf8(out.stdout).unwrap();
    assert!(md.contains("| csoc | 300 |"));
    assert!(!md.contains("group vs control"));
    assert_eq!(md.as_bytes(), ws.read("report/report.md"));
}

#[test]
fn study_shaped_trial_reports_both_treatment_groups() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    ws.ok(&["train", "ts", "-c", "train.toml", "-o", "ts"]);
    ws.ok(&["train", "dfl", "-c", "train.toml", "--set", "train.epochs=3", "--set", "dfl.init=ts/ts.ckpt", "-o", "dfl"]);
    let trial = SINGLE_GROUP_TRIAL.replace("num_arms = 300", "num_arms = 9000").replace("budget = 30", "budget = 300")
        + "\n[[trial.groups]]\nname = \"ts\"\npolicy = \"whittle_ts\"\n\
           \n[[trial.groups]]\nname = \"dfl\"\npolicy = \"whittle_dfl\"\n\
           \n[predictors]\nts = \"ts/ts.ckpt\"\ndfl = \"dfl/dfl.ckpt\"\n";
    ws.write("trial.toml", &trial);
    ws.ok(&["trial", "-c", "trial.toml", "--set", "trial.intervention_weeks=4", "-o", "trial"]);
    let prevented = String::from_utf8(ws.read("trial/drops_prevented.tsv")).unwrap();
    let mut lines = prevented.lines();
    assert_eq!(lines.next(), Some("week\tts\tdfl"));
    assert_eq!(lines.count(), 7);
    let summary = read_summary(&ws.path("trial/summary.txt")).unwrap();
    for g in ["csoc", "ts", "dfl"] {
        assert_eq!(summary[&format!("group.{g}.size")], 3000.0);
    }
    assert!(summary.contains_key("compare.ts.p_value") && summary.contains_key("compare.dfl.p_value"));

    ws.ok(&["trial", "-c", "trial.toml", "--set", "trial.intervention_weeks=4", "-o", "again"]);
    for f in ["report.tsv", "summary.txt", "cumulative_drop.tsv", "drops_prevented.tsv"] {
        assert_eq!(ws.read(&format!("trial/{f}")), ws.read(&format!("again/{f}")), "{f}");
    }
}

#[test]
fn uneven_split_is_rejected() {
    let ws = Workspace::new();
    ws.write("trial.toml", &(SINGLE_GROUP_TRIAL.to_string() + "\n[[trial.groups]]\nname = \"rr\"\npolicy = \"round_robin\"\n"));
    let out = ws.rmab(&["trial", "-c", "trial.toml", "--set", "cohort.generator.num_arms=301", "-o", "trial"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trial.groups"));
}

#[test]
fn outputs_never_overwrite_inputs() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    ws.ok(&["train", "ts", "-c", "train.toml", "-o", "ts"]);
    let before = ws.read("ts/ts.ckpt");
    let out = ws.rmab(&["train", "dfl", "-c", "train.toml", "--set", "dfl.init=ts/dfl.ckpt", "-o", "ts"]);
    // The init checkpoint does not exist yet, so this fails on reading it.
    assert_ne!(out.status.code(), Some(0));
    std::fs::copy(ws.path("ts/ts.ckpt"), ws.path("ts/dfl.ckpt")).unwrap();
    let out = ws.rmab(&["train", "dfl", "-c", "train.toml", "--set", "dfl.init=ts/dfl.ckpt", "-o", "ts"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("overwrite"));
    assert_eq!(ws.read("ts/dfl.ckpt"), before);
}

#[test]
fn replay_reproduces_and_detects_changes() {
    let ws = Workspace::new();
    ws.generate();
    ws.write("train.toml", TRAIN);
    ws.ok(&["train", "ts", "-c", "train.toml", "-o", "ts"]);
    ws.ok(&["replay", "ts/manifest.toml", "-o", "replayed"]);
    for f in ["ts.ckpt", "train_summary.txt", "manifest.toml"] {
        assert_eq!(ws.read(&format!("ts/{f}")), ws.read(&format!("replayed/{f}")), "{f}");
    }

    let manifest = String::from_utf8(ws.read("ts/manifest.toml")).unwrap();
    let digest = manifest.split("sha256 = \"").last().unwrap()[..64].to_string();
    ws.write("tampered.toml", &manifest.replace(&digest, &"0".repeat(64)));
    let out = ws.rmab(&["replay", "tampered.toml", "-o", "tampered"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("differs"));

    let mut traj = ws.read("gen/trajectories.csv");
    traj.extend_from_slice(b"\n");
    std::fs::write(ws.path("gen/trajectories.csv"), traj).unwrap();
    let out = ws.rmab(&["replay", "ts/manifest.toml", "-o", "stale"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("changed"));
}

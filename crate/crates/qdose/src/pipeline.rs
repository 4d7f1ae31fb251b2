//! Pipeline stages. Each stage reads its inputs from the run directory,
//! writes its outputs there and returns a manifest with content hashes of
//! both.

use std::path::{Path, PathBuf};
use std::time::Instant;

use qdose_core::autoencoder::{train_autoencoder, AeEpoch, AeParams, SparseAeConfig};
use qdose_core::baseline::{fit_kmeans_with, logged_q_values, train_sarsa, ClusterModel, QTable};
use qdose_core::cohort::{
    cap_and_normalize, fit_action_bins, fit_norm_stats, generate_synthetic_cohort, impute_missing, split_cohort,
    ActionSpace, Cohort, DiscreteAction, NormStats,
};
use qdose_core::dqn::{greedy_actions, init_dqn, run_dqn, DqnConfig, DqnState, Transitions};
use qdose_core::eval::{
    action_histogram, build_calibration, dosage_diff_mortality, estimate_behavior_policy, evaluate_policy,
    latent_pca_export, ActionHistogram, CalibrationCurve, DosageDiff, Drug, EvaluationPolicy, PcaExport,
    PolicyEvaluation,
};
use qdose_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::{EvalSplit, RunConfig, SeedStream};
use crate::error::{QdoseError, Result};
use crate::io::{append_table, read_artifact, read_cohort, write_artifact, write_cohort, write_table};
use crate::manifest::{ArtifactRecord, RunManifest};

/// File names inside the run directory.
pub mod files {
    pub const COHORT: &str = "cohort.csv";
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const NORM_STATS: &str = "norm_stats.json";
    pub const ACTION_SPACE: &str = "action_space.json";
    pub const CLUSTERS: &str = "clusters.json";
    pub const QTABLE: &str = "qtable.json";
    pub const KMEANS_LOG: &str = "kmeans_log.csv";
    pub const SARSA_LOG: &str = "sarsa_log.csv";
    pub const AUTOENCODER: &str = "autoencoder.json";
    pub const AUTOENCODER_LOG: &str = "autoencoder_log.csv";
    pub const EVALUATION_DIR: &str = "evaluation";
    pub const REPORT_DIR: &str = "report";
}

/// State representation fed to the DQN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    Raw,
    Latent,
}

impl Features {
    pub const ALL: [Features; 2] = [Features::Raw, Features::Latent];

    pub fn name(self) -> &'static str {
        match self {
            Features::Raw => "dqn_raw",
            Features::Latent => "dqn_latent",
        }
    }

    pub fn checkpoint(self) -> String {
        format!("{}.json", self.name())
    }

    pub fn log(self) -> String {
        format!("{}_log.csv", self.name())
    }

    fn seed_stream(self) -> SeedStream {
        match self {
            Features::Raw => SeedStream::DqnRaw,
            Features::Latent => SeedStream::DqnLatent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Preprocess,
    Discretize,
    TrainSarsa,
    TrainAe,
    TrainDqn(Features),
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Preprocess => "preprocess",
            Stage::Discretize => "discretize",
            Stage::TrainSarsa => "train-sarsa",
            Stage::TrainAe => "train-ae",
            Stage::TrainDqn(Features::Raw) => "train-dqn-raw",
            Stage::TrainDqn(Features::Latent) => "train-dqn-latent",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub const CLUSTERS_FORMAT: &str = "qdose-clusters";
pub const QTABLE_FORMAT: &str = "qdose-qtable";
pub const NORM_STATS_FORMAT: &str = "qdose-norm-stats";
pub const ACTION_SPACE_FORMAT: &str = "qdose-action-space";
pub const AUTOENCODER_FORMAT: &str = "qdose-autoencoder";
pub const DQN_FORMAT: &str = "qdose-dqn";
pub const EVALUATION_FORMAT: &str = "qdose-evaluation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderCheckpoint {
    pub config: SparseAeConfig,
    pub params: AeParams,
}

/// Complete training state; resuming from it continues the same run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnCheckpoint {
    pub features: Features,
    pub config: DqnConfig,
    pub state: DqnState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub evaluation: PolicyEvaluation,
    pub lowest_mortality_iv_diff: Option<i8>,
    pub lowest_mortality_vp_diff: Option<i8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub split: EvalSplit,
    pub test_patients: usize,
    pub test_mortality: f64,
    /// Mean SARSA value of the logged actions on the test split.
    pub physician_value: f64,
    pub physician_mortality: f64,
    pub physician_mortality_std_error: f64,
    pub physician_discounted_return: f64,
    pub calibration: CalibrationCurve,
    pub policies: Vec<PolicySummary>,
    pub pca_eigenvalues: Option<Vec<f64>>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    stage: Stage,
    manifest: RunManifest,
}

impl<'a> Ctx<'a> {
    fn require(&mut self, rel: &str, artifact: &'static str, producer: &'static str) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if !path.is_file() {
            return Err(QdoseError::MissingArtifact {
                stage: self.stage.name(),
                artifact,
                path,
                producer,
            });
        }
        self.manifest.inputs.push(ArtifactRecord::of(self.dir, Path::new(rel))?);
        Ok(path)
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn wrote(&mut self, rel: &str) -> Result<()> {
        self.manifest.outputs.push(ArtifactRecord::of(self.dir, Path::new(rel))?);
        Ok(())
    }

    fn load_split(&mut self, rel: &str) -> Result<Cohort> {
        let path = self.require(rel, "a preprocessed split", "preprocess")?;
        let stats_path = self.require(files::NORM_STATS, "normalization statistics", "preprocess")?;
        let space_path = self.require(files::ACTION_SPACE, "the dose bins", "discretize")?;
        let mut cohort = read_cohort(&path)?;
        cohort.norm_stats = Some(read_artifact::<NormStats>(&stats_path, NORM_STATS_FORMAT)?);
        let space: ActionSpace = read_artifact(&space_path, ACTION_SPACE_FORMAT)?;
        cohort.discretize_actions(&space)?;
        cohort.assign_rewards(self.cfg.preprocess.r_max);
        Ok(cohort)
    }

    fn load_autoencoder(&mut self) -> Result<AeParams> {
        let path = self.require(files::AUTOENCODER, "a trained autoencoder", "train-ae")?;
        Ok(read_artifact::<AutoencoderCheckpoint>(&path, AUTOENCODER_FORMAT)?.params)
    }
}

/// Knobs that change how a stage runs without changing its result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Continue DQN training from the existing checkpoint.
    pub resume: bool,
    /// Stop DQN training after this many total steps instead of
    /// `dqn.total_steps`.
    pub stop_at: Option<usize>,
}

/// Runs one stage against `cfg.run_dir` and writes its manifest.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<RunManifest> {
    run_stage_with(cfg, stage, StageOptions::default())
}

pub fn run_stage_with(cfg: &RunConfig, stage: Stage, opts: StageOptions) -> Result<RunManifest> {
    let started = Instant::now();
    let dir = cfg.run_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| QdoseError::io(dir, e))?;
    let mut ctx = Ctx {
        cfg,
        dir,
        stage,
        manifest: RunManifest::new(stage.name(), cfg),
    };
    match stage {
        Stage::Generate => generate(&mut ctx)?,
        Stage::Preprocess => preprocess(&mut ctx)?,
        Stage::Discretize => discretize(&mut ctx)?,
        Stage::TrainSarsa => train_baseline(&mut ctx)?,
        Stage::TrainAe => train_ae(&mut ctx)?,
        Stage::TrainDqn(features) => train_dqn_stage(&mut ctx, features, opts)?,
        Stage::Evaluate => evaluate(&mut ctx)?,
        Stage::Report => report(&mut ctx)?,
    }
    let mut manifest = ctx.manifest;
    manifest.elapsed_ms = started.elapsed().as_millis() as u64;
    manifest.write(dir)?;
    Ok(manifest)
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn generate(ctx: &mut Ctx) -> Result<()> {
    let cohort = generate_synthetic_cohort(&ctx.cfg.synthetic())?;
    write_cohort(&ctx.out(files::COHORT), &cohort)?;
    ctx.wrote(files::COHORT)?;
    println!(
        "generated {} patients, {} timesteps, mortality {:.4}",
        cohort.len(),
        cohort.n_timesteps(),
        cohort.mortality()
    );
    Ok(())
}

fn preprocess(ctx: &mut Ctx) -> Result<()> {
    let input = match &ctx.cfg.input {
        Some(p) => {
            if !p.is_file() {
                return Err(QdoseError::MissingArtifact {
                    stage: ctx.stage.name(),
                    artifact: "the configured trajectory file",
                    path: p.clone(),
                    producer: "generate",
                });
            }
            p.clone()
        }
        None => ctx.require(files::COHORT, "a trajectory file", "generate")?,
    };
    let p = &ctx.cfg.preprocess;
    let cohort = read_cohort(&input)?;
    let (train, test) = split_cohort(&cohort, p.test_fraction, ctx.cfg.seed_for(SeedStream::Split))?;
    let train = impute_missing(train, p.impute_k)?;
    let test = impute_missing(test, p.impute_k)?;
    let stats = fit_norm_stats(&train)?;
    let train = cap_and_normalize(train, &stats)?;
    let test = cap_and_normalize(test, &stats)?;
    write_cohort(&ctx.out(files::TRAIN), &train)?;
    write_cohort(&ctx.out(files::TEST), &test)?;
    write_artifact(&ctx.out(files::NORM_STATS), NORM_STATS_FORMAT, &stats)?;
    for f in [files::TRAIN, files::TEST, files::NORM_STATS] {
        ctx.wrote(f)?;
    }
    println!(
        "train {} patients (mortality {:.4}), test {} patients (mortality {:.4})",
        train.len(),
        train.mortality(),
        test.len(),
        test.mortality()
    );
    Ok(())
}

fn discretize(ctx: &mut Ctx) -> Result<()> {
    let train = read_cohort(&ctx.require(files::TRAIN, "the training split", "preprocess")?)?;
    let space = fit_action_bins(&train)?;
    write_artifact(&ctx.out(files::ACTION_SPACE), ACTION_SPACE_FORMAT, &space)?;
    ctx.wrote(files::ACTION_SPACE)?;
    println!("iv edges {:?}, vasopressor edges {:?}", space.iv_edges, space.vp_edges);
    Ok(())
}

fn train_baseline(ctx: &mut Ctx) -> Result<()> {
    let train = ctx.load_split(files::TRAIN)?;
    let x = train.feature_matrix()?;
    let b = &ctx.cfg.baseline;
    let (model, report) = fit_kmeans_with(&x, b.n_clusters, ctx.cfg.seed_for(SeedStream::Cluster), b.max_iterations)?;
    let (q, epochs) = train_sarsa(&train.trajectories, &model, &ctx.cfg.sarsa())?;
    write_artifact(&ctx.out(files::CLUSTERS), CLUSTERS_FORMAT, &model)?;
    write_artifact(&ctx.out(files::QTABLE), QTABLE_FORMAT, &q)?;
    let kmeans_rows: Vec<[String; 3]> = report
        .inertia
        .iter()
        .zip(&report.shift)
        .enumerate()
        .map(|(i, (inertia, shift))| [(i + 1).to_string(), fmt(*inertia), fmt(*shift)])
        .collect();
    let sarsa_rows: Vec<[String; 3]> = epochs
        .iter()
        .map(|e| [e.epoch.to_string(), fmt(e.mean_abs_td), fmt(e.max_abs_q)])
        .collect();
    write_table(&ctx.out(files::KMEANS_LOG), &["iteration", "inertia", "max_shift"], &kmeans_rows)?;
    write_table(&ctx.out(files::SARSA_LOG), &["epoch", "mean_abs_td", "max_abs_q"], &sarsa_rows)?;
    for f in [files::CLUSTERS, files::QTABLE, files::KMEANS_LOG, files::SARSA_LOG] {
        ctx.wrote(f)?;
    }
    println!(
        "k-means: {} iterations, inertia {}; SARSA: {} sweeps, final mean |TD| {}",
        kmeans_rows.len(),
        report.inertia.last().map_or(f64::NAN, |v| *v),
        epochs.len(),
        epochs.last().map_or(f64::NAN, |e| e.mean_abs_td)
    );
    Ok(())
}

fn train_ae(ctx: &mut Ctx) -> Result<()> {
    let train = ctx.load_split(files::TRAIN)?;
    let config = ctx.cfg.autoencoder_config();
    let (params, epochs) = train_autoencoder(&train, &config)?;
    write_artifact(
        &ctx.out(files::AUTOENCODER),
        AUTOENCODER_FORMAT,
        &AutoencoderCheckpoint { config, params },
    )?;
    write_table(
        &ctx.out(files::AUTOENCODER_LOG),
        &["epoch", "reconstruction", "penalty", "total", "mean_activation"],
        epochs.iter().map(|e: &AeEpoch| {
            [
                e.epoch.to_string(),
                fmt(e.reconstruction),
                fmt(e.penalty),
                fmt(e.total),
                fmt(e.mean_activation),
            ]
        }),
    )?;
    ctx.wrote(files::AUTOENCODER)?;
    ctx.wrote(files::AUTOENCODER_LOG)?;
    if let Some(last) = epochs.last() {
        println!(
            "autoencoder: reconstruction {:.5}, penalty {:.5}, mean activation {:.4}",
            last.reconstruction, last.penalty, last.mean_activation
        );
    }
    Ok(())
}

fn states_for(ctx: &mut Ctx, cohort: &Cohort, features: Features) -> Result<Matrix> {
    let x = cohort.feature_matrix()?;
    Ok(match features {
        Features::Raw => x,
        Features::Latent => ctx.load_autoencoder()?.encode(&x)?,
    })
}

const DQN_LOG_HEADER: [&str; 5] = ["step", "loss", "mean_q", "mean_abs_td", "beta"];

fn train_dqn_stage(ctx: &mut Ctx, features: Features, opts: StageOptions) -> Result<()> {
    let train = ctx.load_split(files::TRAIN)?;
    let states = states_for(ctx, &train, features)?;
    let data = Transitions::from_trajectories(&train.trajectories, &states)?;
    let config = ctx.cfg.dqn_config(features.seed_stream());
    let ckpt = features.checkpoint();
    let log_file = features.log();
    let mut state = if opts.resume {
        let path = ctx.require(&ckpt, "a DQN checkpoint to resume", "train-dqn")?;
        ctx.require(&log_file, "the DQN training log", "train-dqn")?;
        let previous: DqnCheckpoint = read_artifact(&path, DQN_FORMAT)?;
        if previous.features != features || previous.config != config {
            return Err(QdoseError::Config(format!(
                "{} was trained with a different configuration; resume needs the same one",
                path.display()
            )));
        }
        previous.state
    } else {
        init_dqn(states.cols(), data.len(), &config)?
    };
    let log = run_dqn(&mut state, &data, &config, opts.stop_at.unwrap_or(config.total_steps))?;
    write_artifact(&ctx.out(&ckpt), DQN_FORMAT, &DqnCheckpoint { features, config, state })?;
    let rows = log
        .iter()
        .map(|r| [r.step.to_string(), fmt(r.loss), fmt(r.mean_q), fmt(r.mean_abs_td), fmt(r.beta)]);
    if opts.resume {
        append_table(&ctx.out(&log_file), rows)?;
    } else {
        write_table(&ctx.out(&log_file), &DQN_LOG_HEADER, rows)?;
    }
    ctx.wrote(&ckpt)?;
    ctx.wrote(&log_file)?;
    if let Some(last) = log.last() {
        println!(
            "{}: {} steps, loss {:.4}, mean Q {:.3}, mean |TD| {:.4}",
            features.name(),
            last.step,
            last.loss,
            last.mean_q,
            last.mean_abs_td
        );
    }
    Ok(())
}

fn eval_file(name: &str) -> String {
    format!("{}/{name}", files::EVALUATION_DIR)
}

fn histogram_rows(h: &ActionHistogram) -> Vec<Vec<String>> {
    h.iter()
        .enumerate()
        .map(|(iv, row)| std::iter::once(iv.to_string()).chain(row.iter().map(u64::to_string)).collect())
        .collect()
}

const HISTOGRAM_HEADER: [&str; 6] = ["iv_bin", "vp_bin_0", "vp_bin_1", "vp_bin_2", "vp_bin_3", "vp_bin_4"];

fn dosage_rows(d: &DosageDiff) -> Vec<Vec<String>> {
    [("iv", Drug::Iv), ("vasopressor", Drug::Vasopressor)]
        .into_iter()
        .flat_map(|(name, drug)| {
            d.bins(drug).iter().map(move |b| {
                vec![
                    name.to_string(),
                    b.diff.to_string(),
                    b.count.to_string(),
                    b.deaths.to_string(),
                    b.mortality().map(fmt).unwrap_or_default(),
                ]
            })
        })
        .collect()
}

fn evaluate(ctx: &mut Ctx) -> Result<()> {
    let available: Vec<Features> = Features::ALL
        .into_iter()
        .filter(|f| ctx.dir.join(f.checkpoint()).is_file())
        .collect();
    if available.is_empty() {
        return Err(QdoseError::MissingArtifact {
            stage: ctx.stage.name(),
            artifact: "a trained DQN checkpoint",
            path: ctx.dir.join(Features::Raw.checkpoint()),
            producer: "train-dqn",
        });
    }
    let cfg = ctx.cfg;
    let e = &cfg.evaluation;
    let train = ctx.load_split(files::TRAIN)?;
    let test = ctx.load_split(files::TEST)?;
    let model: ClusterModel = read_artifact(
        &ctx.require(files::CLUSTERS, "the state clusters", "train-sarsa")?,
        CLUSTERS_FORMAT,
    )?;
    let q: QTable = read_artifact(&ctx.require(files::QTABLE, "the SARSA table", "train-sarsa")?, QTABLE_FORMAT)?;
    let gamma = cfg.gamma();

    let calibration = build_calibration(&q, &model, &test, e.calibration_bins)?;
    let calibration = if e.merge_threshold == qdose_core::eval::DEFAULT_MERGE_THRESHOLD {
        calibration
    } else {
        let values = logged_q_values(&q, &model, &test)?;
        let labels = test.trajectories.iter().flat_map(|t| std::iter::repeat_n(t.outcome.died(), t.len()));
        let samples: Vec<(f64, bool)> = values.into_iter().zip(labels).collect();
        CalibrationCurve::from_samples(&samples, e.calibration_bins, cfg.preprocess.r_max, e.merge_threshold)?
    };
    let logged = logged_q_values(&q, &model, &test)?;
    let physician_value = logged.iter().sum::<f64>() / logged.len() as f64;
    let physician_discounted_return =
        test.trajectories.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / test.len() as f64;

    let pi_b = estimate_behavior_policy(&train, &model, e.smoothing)?;
    let pi_e = EvaluationPolicy::new(e.epsilon_soft)?;
    let eval_cohort = match e.split {
        EvalSplit::Test => &test,
        EvalSplit::Train => &train,
    };

    let physician_actions: Vec<DiscreteAction> = test.timesteps().map(|s| s.action.expect("discretized")).collect();
    let mut tables: Vec<(String, Vec<&str>, Vec<Vec<String>>)> = vec![
        (
            eval_file("calibration.csv"),
            vec!["lo", "hi", "center", "count", "deaths", "mortality", "std_error"],
            calibration
                .bins
                .iter()
                .map(|b| {
                    vec![
                        fmt(b.lo),
                        fmt(b.hi),
                        fmt(b.center),
                        b.count.to_string(),
                        b.deaths.to_string(),
                        fmt(b.mortality()),
                        fmt(b.std_error()),
                    ]
                })
                .collect(),
        ),
        (
            eval_file("action_histogram_physician.csv"),
            HISTOGRAM_HEADER.to_vec(),
            histogram_rows(&action_histogram(&physician_actions)),
        ),
    ];
    let mut comparison = vec![
        vec![
            String::from("physician"),
            String::from("sarsa_value"),
            fmt(physician_value),
            fmt(calibration.mortality_from_return(physician_value)),
            fmt(calibration.std_error_at(physician_value)),
        ],
        vec![
            String::from("physician"),
            String::from("discounted_return"),
            fmt(physician_discounted_return),
            fmt(calibration.mortality_from_return(physician_discounted_return)),
            fmt(calibration.std_error_at(physician_discounted_return)),
        ],
    ];

    let mut policies = Vec::new();
    for features in available {
        let path = ctx.require(&features.checkpoint(), "a trained DQN checkpoint", "train-dqn")?;
        let ckpt: DqnCheckpoint = read_artifact(&path, DQN_FORMAT)?;
        let net = &ckpt.state.main;
        let q_eval = net.q_values(&states_for(ctx, eval_cohort, features)?)?;
        let evaluation = evaluate_policy(eval_cohort, &q_eval, &model, &pi_e, &pi_b, &calibration, gamma)?;
        let q_test = net.q_values(&states_for(ctx, &test, features)?)?;
        let recommended = greedy_actions(&q_test)
            .into_iter()
            .map(DiscreteAction::from_index)
            .collect::<qdose_core::Result<Vec<_>>>()?;
        let diffs = dosage_diff_mortality(&recommended, &test)?;
        let name = features.name();
        comparison.push(vec![
            name.to_string(),
            String::from("doubly_robust"),
            fmt(evaluation.dr.mean),
            fmt(evaluation.mortality),
            fmt(evaluation.mortality_std_error),
        ]);
        tables.push((
            eval_file(&format!("action_histogram_{name}.csv")),
            HISTOGRAM_HEADER.to_vec(),
            histogram_rows(&action_histogram(&recommended)),
        ));
        tables.push((
            eval_file(&format!("dosage_diff_{name}.csv")),
            vec!["drug", "difference", "count", "deaths", "mortality"],
            dosage_rows(&diffs),
        ));
        tables.push((
            eval_file(&format!("dr_values_{name}.csv")),
            vec!["patient_id", "dr_value"],
            eval_cohort
                .trajectories
                .iter()
                .zip(&evaluation.dr.per_trajectory)
                .map(|(t, v)| vec![t.patient_id.clone(), fmt(*v)])
                .collect(),
        ));
        policies.push(PolicySummary {
            policy: name.to_string(),
            lowest_mortality_iv_diff: diffs.min_mortality_diff(Drug::Iv, e.min_diff_count),
            lowest_mortality_vp_diff: diffs.min_mortality_diff(Drug::Vasopressor, e.min_diff_count),
            evaluation,
        });
    }
    tables.push((
        eval_file("policy_comparison.csv"),
        vec!["policy", "estimator", "expected_return", "estimated_mortality", "mortality_std_error"],
        comparison,
    ));

    let mut pca_eigenvalues = None;
    if ctx.dir.join(files::AUTOENCODER).is_file() {
        let latent = ctx.load_autoencoder()?.encode(&test.feature_matrix()?)?;
        let outcomes: Vec<f64> = test
            .trajectories
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.outcome.label(), t.len()))
            .collect();
        let pca: PcaExport = latent_pca_export(&latent, &outcomes)?;
        tables.push((
            eval_file("latent_pca.csv"),
            vec!["pc1", "pc2", "outcome"],
            pca.points.iter().map(|p| vec![fmt(p.pc1), fmt(p.pc2), fmt(p.outcome)]).collect(),
        ));
        pca_eigenvalues = Some(pca.eigenvalues);
    }

    for (rel, header, rows) in &tables {
        write_table(&ctx.out(rel), header, rows)?;
        ctx.wrote(rel)?;
    }
    let summary = EvaluationSummary {
        split: e.split,
        test_patients: test.len(),
        test_mortality: test.mortality(),
        physician_value,
        physician_mortality: calibration.mortality_from_return(physician_value),
        physician_mortality_std_error: calibration.std_error_at(physician_value),
        physician_discounted_return,
        calibration,
        policies,
        pca_eigenvalues,
    };
    let rel = eval_file("evaluation.json");
    write_artifact(&ctx.out(&rel), EVALUATION_FORMAT, &summary)?;
    ctx.wrote(&rel)?;
    println!("policy,estimator,expected_return,estimated_mortality,mortality_std_error");
    for row in tables.iter().filter(|t| t.0.ends_with("policy_comparison.csv")).flat_map(|t| &t.2) {
        println!("{}", row.join(","));
    }
    println!("test mortality {:.4}", summary.test_mortality);
    Ok(())
}

fn report(ctx: &mut Ctx) -> Result<()> {
    let evaluation = RunManifest::read(ctx.dir, Stage::Evaluate.name()).map_err(|_| QdoseError::MissingArtifact {
        stage: ctx.stage.name(),
        artifact: "an evaluation manifest",
        path: RunManifest::path_for(ctx.dir, Stage::Evaluate.name()),
        producer: "evaluate",
    })?;
    let stale = evaluation.stale_outputs(ctx.dir);
    if !stale.is_empty() {
        return Err(QdoseError::Config(format!(
            "evaluation outputs changed since `evaluate` ran: {}; re-run it",
            stale.join(", ")
        )));
    }
    let mut copied = Vec::new();
    for record in &evaluation.outputs {
        let src = ctx.require(&record.path, "an evaluation table", "evaluate")?;
        let name = Path::new(&record.path).file_name().expect("file path").to_string_lossy().to_string();
        let rel = format!("{}/{name}", files::REPORT_DIR);
        let dst = ctx.out(&rel);
        std::fs::create_dir_all(dst.parent().expect("inside run dir")).map_err(|e| QdoseError::io(&dst, e))?;
        std::fs::copy(&src, &dst).map_err(|e| QdoseError::io(&dst, e))?;
        copied.push(rel);
    }
    let checkpoints: Vec<&ArtifactRecord> = evaluation
        .inputs
        .iter()
        .filter(|r| r.path.ends_with(".json"))
        .collect();
    let rel = format!("{}/checkpoints.csv", files::REPORT_DIR);
    write_table(
        &ctx.out(&rel),
        &["artifact", "sha256", "bytes"],
        checkpoints.iter().map(|r| [r.path.clone(), r.sha256.clone(), r.bytes.to_string()]),
    )?;
    copied.push(rel);
    let rel = format!("{}/config.toml", files::REPORT_DIR);
    let snapshot = evaluation.config.to_toml();
    std::fs::write(ctx.out(&rel), snapshot).map_err(|e| QdoseError::io(ctx.out(&rel), e))?;
    copied.push(rel);
    let rel = format!("{}/seeds.csv", files::REPORT_DIR);
    write_table(
        &ctx.out(&rel),
        &["stream", "seed"],
        evaluation.seeds.iter().map(|(s, v)| {
            [
                serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                v.to_string(),
            ]
        }),
    )?;
    copied.push(rel);
    for rel in &copied {
        ctx.wrote(rel)?;
    }
    println!("report written to {}", ctx.dir.join(files::REPORT_DIR).display());
    Ok(())
}

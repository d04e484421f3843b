//! Command implementations: everything the CLI does, exposed as library
//! functions so the whole pipeline is testable in-process.

use super::checkpoint::Checkpoint;
use super::config::{RunConfig, SplitMethod};
use super::conformer::{parse_xyz_blocks, ConformerTable};
use super::dataset::{ingest_path, DatasetRecord, IngestMode};
use super::metrics::{regression_metrics, spearman, RegressionMetrics};
use super::model::{prepare_molecule, AttentionExplanation, FusionModel, MoleculeInput, TokenVocab};
use super::{write_file, PipelineError};
use crate::cliff::{mine_cliffs_with, CliffInput};
use crate::encoder::{pretrain_step, Encoder3d, PretrainHeads};
use crate::fingerprint::{circular_fingerprint, structural_keys};
use crate::fusion::{hybrid_loss, TargetScaler};
use crate::rng::SeedStream;
use crate::smiles::parse;
use crate::split::{cliff_split_with, scaffold_split, Partition, SplitAssignment, SplitInput};
use crate::tensor::{adam_step, AdamState, Graph, ParamStore};
use serde::Serialize;
use std::collections::HashMap;
use std::path::Path;

/// Published cliff-pair counts on the original 1200-lipid dataset, reported
/// beside mined counts as a non-binding reference (fingerprint
/// implementations differ).
pub const REFERENCE_CLIFF_COUNT_HELA: usize = 4267;
pub const REFERENCE_CLIFF_COUNT_RAW: usize = 2104;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: Option<&'a RunConfig>,
    seed: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: Option<&RunConfig>,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), PipelineError> {
    let manifest = Manifest {
        command,
        config,
        seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Io(format!("manifest encode: {e}")))?;
    write_file(&out_dir.join("manifest.json"), json.as_bytes())
}

fn load_conformers(config: &RunConfig) -> Result<Option<ConformerTable>, PipelineError> {
    match &config.conformers {
        None => Ok(None),
        Some(path) => {
            let content = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Io(format!("{path}: {e}")))?;
            Ok(Some(parse_xyz_blocks(&content)?))
        }
    }
}

/// Parse one SMILES string and pretty-print the molecular graph as JSON.
pub fn run_parse(smiles: &str) -> Result<String, PipelineError> {
    let graph = parse(smiles)?;
    serde_json::to_string_pretty(&graph).map_err(|e| PipelineError::Io(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct FingerprintReport {
    pub molecules: usize,
    pub output: String,
}

/// Write `id,kind,hex` rows: one circular and one structural-key
/// fingerprint per molecule.
pub fn run_fingerprint(
    input: &Path,
    output: &Path,
    radius: usize,
    width: usize,
) -> Result<FingerprintReport, PipelineError> {
    let records = ingest_path(input, IngestMode::AllowMissingEfficiency)?;
    let mut csv = String::from("id,kind,hex\n");
    for r in &records {
        let graph = parse(&r.smiles)?;
        let circ = circular_fingerprint(&graph, radius, width);
        let keys = structural_keys(&graph);
        csv.push_str(&format!("{},circular,{}\n", r.id, circ.to_hex()));
        csv.push_str(&format!("{},structural_key,{}\n", r.id, keys.to_hex()));
    }
    write_file(output, csv.as_bytes())?;
    Ok(FingerprintReport {
        molecules: records.len(),
        output: file_name(output),
    })
}

#[derive(Debug, Serialize)]
pub struct CliffReport {
    pub molecules: usize,
    pub pairs: usize,
    pub reference_pairs_hela: usize,
    pub reference_pairs_raw: usize,
    pub reference_note: String,
    pub output: String,
}

/// Mine transfection cliffs and write
/// `id_a,id_b,subs,scas,smis,structure_similarity,transfection_difference`.
pub fn run_cliffs(
    input: &Path,
    output: &Path,
    radius: usize,
    width: usize,
) -> Result<CliffReport, PipelineError> {
    let records = ingest_path(input, IngestMode::RequireEfficiency)?;
    let dataset: Vec<CliffInput> = records
        .iter()
        .map(|r| CliffInput {
            id: r.id.clone(),
            smiles: r.smiles.clone(),
            m: r.efficiency.expect("efficiency required at ingest"),
        })
        .collect();
    let cliffs = mine_cliffs_with(&dataset, radius, width)?;
    let mut csv =
        String::from("id_a,id_b,subs,scas,smis,structure_similarity,transfection_difference\n");
    for c in &cliffs {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.id_a,
            c.id_b,
            c.similarity.subs,
            c.similarity.scas,
            c.similarity.smis,
            c.structure_similarity,
            c.transfection_difference
        ));
    }
    write_file(output, csv.as_bytes())?;
    Ok(CliffReport {
        molecules: records.len(),
        pairs: cliffs.len(),
        reference_pairs_hela: REFERENCE_CLIFF_COUNT_HELA,
        reference_pairs_raw: REFERENCE_CLIFF_COUNT_RAW,
        reference_note: "published counts on the original dataset; fingerprint implementations \
                         differ, so these are a non-binding comparison"
            .to_string(),
        output: file_name(output),
    })
}

#[derive(Debug, Serialize)]
pub struct SplitReport {
    pub molecules: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub output: String,
}

/// Produce `splits.csv` (`id,partition[,cluster]`).
pub fn run_split(
    method: SplitMethod,
    config: &RunConfig,
    input: &Path,
    output: &Path,
) -> Result<SplitReport, PipelineError> {
    let records = ingest_path(input, IngestMode::AllowMissingEfficiency)?;
    let split_input: Vec<SplitInput> = records
        .iter()
        .map(|r| SplitInput {
            id: r.id.clone(),
            smiles: r.smiles.clone(),
        })
        .collect();

    let mut csv = String::new();
    let assignments: Vec<SplitAssignment> = match method {
        SplitMethod::Scaffold => {
            csv.push_str("id,partition\n");
            let assignments = scaffold_split(&split_input, config.ratios(), config.seed)?;
            for a in &assignments {
                csv.push_str(&format!("{},{}\n", a.id, a.partition.as_str()));
            }
            assignments
        }
        SplitMethod::Cliff => {
            csv.push_str("id,partition,cluster\n");
            let outcome = cliff_split_with(
                &split_input,
                config.clusters,
                config.seed,
                config.fp_radius,
                config.fp_width,
            )?;
            for (a, c) in outcome.assignments.iter().zip(&outcome.clusters) {
                csv.push_str(&format!("{},{},{}\n", a.id, a.partition.as_str(), c.cluster));
            }
            outcome.assignments
        }
    };
    write_file(output, csv.as_bytes())?;
    let count = |p: Partition| assignments.iter().filter(|a| a.partition == p).count();
    Ok(SplitReport {
        molecules: records.len(),
        train: count(Partition::Train),
        val: count(Partition::Val),
        test: count(Partition::Test),
        output: file_name(output),
    })
}

fn read_splits_csv(path: &Path) -> Result<HashMap<String, Partition>, PipelineError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(PipelineError::Io(format!(
                "{}: line {} needs id,partition",
                path.display(),
                idx + 1
            )));
        }
        let partition = match fields[1].trim() {
            "train" => Partition::Train,
            "val" => Partition::Val,
            "test" => Partition::Test,
            other => {
                return Err(PipelineError::Io(format!(
                    "{}: line {}: unknown partition {other:?}",
                    path.display(),
                    idx + 1
                )))
            }
        };
        map.insert(fields[0].trim().to_string(), partition);
    }
    Ok(map)
}

/// 3-D encoder plus denoising heads, for pretraining runs.
struct PretrainModel {
    store: ParamStore,
    encoder: Encoder3d,
    heads: PretrainHeads,
}

impl PretrainModel {
    fn new(config: &RunConfig) -> Self {
        let mut store = ParamStore::new();
        let mut rng = SeedStream::new(config.seed, "model-init");
        let encoder = Encoder3d::new(&mut store, &config.dims, &mut rng, "enc3d");
        let heads = PretrainHeads::new(&mut store, &config.dims, &mut rng, "heads");
        PretrainModel {
            store,
            encoder,
            heads,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PretrainReport {
    pub molecules: usize,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub checkpoint: String,
}

pub fn run_pretrain(
    config: &RunConfig,
    corpus: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<PretrainReport, PipelineError> {
    config.validate()?;
    let records = ingest_path(corpus, IngestMode::AllowMissingEfficiency)?;
    let conformers = load_conformers(config)?;

    let mut model = PretrainModel::new(config);
    let mut resumed_adam: Option<AdamState> = None;
    if let Some(path) = resume {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.header.kind != "pretrain3d" {
            return Err(PipelineError::Checkpoint(format!(
                "expected a pretrain3d checkpoint, found {}",
                ckpt.header.kind
            )));
        }
        if ckpt.header.dims != config.dims {
            return Err(PipelineError::Checkpoint(
                "checkpoint dims differ from config (layer/width mismatch is a hard error)".into(),
            ));
        }
        ckpt.restore_params(&mut model.store)?;
        resumed_adam = ckpt.restore_optimizer(&model.store)?;
    }

    // fixed geometry per molecule
    let inputs: Vec<crate::encoder::Structure3dInput> = records
        .iter()
        .map(|r| {
            let graph = parse(&r.smiles)?;
            let coords = super::conformer::coords_for(
                &r.id,
                &graph,
                conformers.as_ref(),
                config.seed,
            )?;
            Ok(crate::encoder::Structure3dInput::from_graph(&graph, &coords)?)
        })
        .collect::<Result<_, PipelineError>>()?;

    // epochs count per invocation; the decay horizon is fixed when the run
    // starts and travels with the optimizer state across resumes
    let steps_per_epoch = records.len().div_ceil(config.batch_size);
    let mut adam = resumed_adam.unwrap_or_else(|| {
        let horizon = if config.total_steps > 0 {
            config.total_steps
        } else {
            config.epochs * steps_per_epoch
        };
        AdamState::new(config.lr0, horizon)
    });
    let ids: Vec<_> = model
        .encoder
        .param_ids()
        .into_iter()
        .chain(model.heads.param_ids())
        .collect();

    let mut initial_loss = None;
    let mut final_loss = 0.0;
    let start_step = adam.step;
    let end_step = start_step + config.epochs * steps_per_epoch;
    for step in start_step..end_step {
        let epoch = step / steps_per_epoch;
        let batch_index = step % steps_per_epoch;
        let mut order: Vec<usize> = (0..records.len()).collect();
        SeedStream::new(config.seed, &format!("pretrain-shuffle:{epoch}")).shuffle(&mut order);
        let batch: Vec<usize> = order
            .into_iter()
            .skip(batch_index * config.batch_size)
            .take(config.batch_size)
            .collect();
        if batch.is_empty() {
            continue;
        }

        let mut graph = Graph::new();
        let batch_inputs: Vec<&crate::encoder::Structure3dInput> =
            batch.iter().map(|&m| &inputs[m]).collect();
        let mut mask_rng = SeedStream::new(config.seed, &format!("mask:{step}"));
        let loss = pretrain_step(
            &model.encoder,
            &model.heads,
            &mut graph,
            &model.store,
            &batch_inputs,
            config.mask_rate,
            &mut mask_rng,
        )?;
        let value = graph.value(loss).item();
        if initial_loss.is_none() {
            initial_loss = Some(value);
        }
        final_loss = value;

        let grads = graph.backward(loss);
        graph.write_param_grads(&grads, &mut model.store);
        adam_step(&mut model.store, &ids, &mut adam)?;
    }

    let ckpt = Checkpoint::capture(
        "pretrain3d",
        &config.dims,
        &model.store,
        None,
        None,
        None,
        Some(&adam),
    );
    let ckpt_path = out_dir.join("checkpoint.bin");
    ckpt.save(&ckpt_path)?;
    write_manifest(
        out_dir,
        "pretrain",
        Some(config),
        config.seed,
        &[corpus],
        &[&ckpt_path],
    )?;
    Ok(PretrainReport {
        molecules: records.len(),
        steps: adam.step,
        initial_loss: initial_loss.unwrap_or(0.0),
        final_loss,
        checkpoint: file_name(&ckpt_path),
    })
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub molecules: usize,
    pub steps: usize,
    pub beta: f64,
    pub final_train_loss: f64,
    pub train: RegressionMetrics,
    pub val: Option<RegressionMetrics>,
    pub test: Option<RegressionMetrics>,
    pub checkpoint: String,
}

struct PreparedDataset {
    records: Vec<DatasetRecord>,
    inputs: Vec<MoleculeInput>,
}

fn prepare_dataset(
    records: Vec<DatasetRecord>,
    vocab: &TokenVocab,
    conformers: Option<&ConformerTable>,
    seed: u64,
) -> Result<PreparedDataset, PipelineError> {
    let inputs = records
        .iter()
        .map(|r| prepare_molecule(&r.id, &r.smiles, vocab, conformers, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedDataset { records, inputs })
}

fn predictions_for(
    model: &FusionModel,
    data: &PreparedDataset,
    subset: &[usize],
) -> Result<Vec<(String, f64)>, PipelineError> {
    subset
        .iter()
        .map(|&i| {
            let (pred, _) = model.predict_one(&data.inputs[i])?;
            Ok((data.records[i].id.clone(), pred))
        })
        .collect()
}

fn subset_metrics(
    model: &FusionModel,
    data: &PreparedDataset,
    subset: &[usize],
) -> Result<Option<RegressionMetrics>, PipelineError> {
    if subset.is_empty() {
        return Ok(None);
    }
    let preds = predictions_for(model, data, subset)?;
    let truth: Vec<f64> = subset
        .iter()
        .map(|&i| data.records[i].efficiency.expect("required at ingest"))
        .collect();
    let p: Vec<f64> = preds.iter().map(|(_, v)| *v).collect();
    Ok(Some(regression_metrics(&p, &truth)))
}

pub fn run_train(
    config: &RunConfig,
    data_path: &Path,
    splits_path: Option<&Path>,
    pretrain: Option<&Path>,
    out_dir: &Path,
) -> Result<TrainReport, PipelineError> {
    config.validate()?;
    let records = ingest_path(data_path, IngestMode::RequireEfficiency)?;
    let conformers = load_conformers(config)?;

    // partition lookup: provided file or computed split
    let partition_of: HashMap<String, Partition> = match splits_path {
        Some(path) => read_splits_csv(path)?,
        None => {
            let split_input: Vec<SplitInput> = records
                .iter()
                .map(|r| SplitInput {
                    id: r.id.clone(),
                    smiles: r.smiles.clone(),
                })
                .collect();
            let assignments = match config.split_method {
                SplitMethod::Scaffold => {
                    scaffold_split(&split_input, config.ratios(), config.seed)?
                }
                SplitMethod::Cliff => {
                    cliff_split_with(
                        &split_input,
                        config.clusters,
                        config.seed,
                        config.fp_radius,
                        config.fp_width,
                    )?
                    .assignments
                }
            };
            assignments
                .into_iter()
                .map(|a| (a.id, a.partition))
                .collect()
        }
    };
    for r in &records {
        if !partition_of.contains_key(&r.id) {
            return Err(PipelineError::SplitCoverage { id: r.id.clone() });
        }
    }

    let vocab = TokenVocab::build(
        records.iter().map(|r| r.smiles.as_str()),
        config.dims.vocab_size,
    )?;
    let mut model = FusionModel::new(&config.dims, vocab, config.seed);
    model.split_method = Some(config.split_method);
    if let Some(path) = pretrain {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.header.kind != "pretrain3d" {
            return Err(PipelineError::Checkpoint(format!(
                "expected a pretrain3d checkpoint, found {}",
                ckpt.header.kind
            )));
        }
        ckpt.restore_params_by_prefix(&mut model.store, "enc3d.")?;
    }

    let data = prepare_dataset(records, &model.vocab, conformers.as_ref(), config.seed)?;
    let by_partition = |p: Partition| -> Vec<usize> {
        (0..data.records.len())
            .filter(|&i| partition_of[&data.records[i].id] == p)
            .collect()
    };
    let train_idx = by_partition(Partition::Train);
    let val_idx = by_partition(Partition::Val);
    let test_idx = by_partition(Partition::Test);
    if train_idx.is_empty() {
        return Err(PipelineError::Io("training partition is empty".into()));
    }

    let train_targets: Vec<f64> = train_idx
        .iter()
        .map(|&i| data.records[i].efficiency.expect("required at ingest"))
        .collect();
    let scaler = TargetScaler::fit(&train_targets)?;
    model.scaler = Some(scaler.clone());

    let beta = config.effective_beta();
    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let total_steps = if config.total_steps > 0 {
        config.total_steps
    } else {
        config.epochs * steps_per_epoch
    };
    let mut adam = AdamState::new(config.lr0, total_steps);
    let ids = model.param_ids();

    let mut final_train_loss = 0.0;
    for step in 0..total_steps {
        let epoch = step / steps_per_epoch;
        let batch_index = step % steps_per_epoch;
        let mut order = train_idx.clone();
        SeedStream::new(config.seed, &format!("train-shuffle:{epoch}")).shuffle(&mut order);
        let mut batch: Vec<usize> = order
            .iter()
            .copied()
            .skip(batch_index * config.batch_size)
            .take(config.batch_size)
            .collect();
        // a singleton tail cannot form triplets; borrow one molecule
        if batch.len() == 1 && order.len() > 1 {
            let extra = order
                .iter()
                .copied()
                .find(|i| !batch.contains(i))
                .expect("order has more than one molecule");
            batch.push(extra);
        }
        if batch.is_empty() {
            continue;
        }

        let mut graph = Graph::new();
        let mut raw_preds = Vec::with_capacity(batch.len());
        let mut pooled = Vec::with_capacity(batch.len());
        let mut scaled_targets = Vec::with_capacity(batch.len());
        for &i in &batch {
            let out = model.forward(&mut graph, &data.inputs[i])?;
            raw_preds.push(out.raw);
            pooled.push((out.z1_pooled, out.z2_pooled));
            scaled_targets.push(scaler.scale(data.records[i].efficiency.unwrap()));
        }
        let preds = graph.stack_rows(&raw_preds);
        let targets = crate::tensor::Tensor::column(scaled_targets);
        let loss = if batch.len() >= 2 {
            hybrid_loss(&mut graph, preds, &targets, &pooled, config.margin, beta)?
        } else {
            hybrid_loss(&mut graph, preds, &targets, &pooled, config.margin, 0.0)?
        };
        final_train_loss = graph.value(loss).item();

        let grads = graph.backward(loss);
        graph.write_param_grads(&grads, &mut model.store);
        adam_step(&mut model.store, &ids, &mut adam)?;
    }

    // final-weight predictions and metrics
    let train_metrics =
        subset_metrics(&model, &data, &train_idx)?.expect("train partition not empty");
    let val_metrics = subset_metrics(&model, &data, &val_idx)?;
    let test_metrics = subset_metrics(&model, &data, &test_idx)?;

    let train_preds = predictions_for(&model, &data, &train_idx)?;
    let mut preds_csv = String::from("id,prediction\n");
    for (id, p) in &train_preds {
        preds_csv.push_str(&format!("{id},{p}\n"));
    }
    let preds_path = out_dir.join("train_predictions.csv");
    write_file(&preds_path, preds_csv.as_bytes())?;

    #[derive(Serialize)]
    struct MetricsFile<'a> {
        train: &'a RegressionMetrics,
        val: &'a Option<RegressionMetrics>,
        test: &'a Option<RegressionMetrics>,
        beta: f64,
        split_method: &'a str,
    }
    let metrics_path = out_dir.join("metrics.json");
    let metrics_json = serde_json::to_string_pretty(&MetricsFile {
        train: &train_metrics,
        val: &val_metrics,
        test: &test_metrics,
        beta,
        split_method: config.split_method.as_str(),
    })
    .map_err(|e| PipelineError::Io(e.to_string()))?;
    write_file(&metrics_path, metrics_json.as_bytes())?;

    let ckpt = Checkpoint::capture(
        "fusion",
        &config.dims,
        &model.store,
        Some(&model.vocab),
        Some(&scaler),
        Some(config.split_method),
        Some(&adam),
    );
    let mut ckpt_with_seed = ckpt;
    ckpt_with_seed.header.seed = config.seed;
    let ckpt_path = out_dir.join("checkpoint.bin");
    ckpt_with_seed.save(&ckpt_path)?;

    write_manifest(
        out_dir,
        "train",
        Some(config),
        config.seed,
        &[data_path],
        &[&ckpt_path, &metrics_path, &preds_path],
    )?;

    Ok(TrainReport {
        molecules: data.records.len(),
        steps: adam.step,
        beta,
        final_train_loss,
        train: train_metrics,
        val: val_metrics,
        test: test_metrics,
        checkpoint: file_name(&ckpt_path),
    })
}

fn load_fusion_model(path: &Path) -> Result<(FusionModel, u64), PipelineError> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.header.kind != "fusion" {
        return Err(PipelineError::Checkpoint(format!(
            "expected a fusion checkpoint, found {}",
            ckpt.header.kind
        )));
    }
    let vocab = TokenVocab::from_tokens(ckpt.header.vocab.clone().ok_or_else(|| {
        PipelineError::Checkpoint("fusion checkpoint without a vocabulary".into())
    })?);
    let mut model = FusionModel::new(&ckpt.header.dims, vocab, 0);
    ckpt.restore_params(&mut model.store)?;
    model.scaler = Some(ckpt.header.scaler.clone().ok_or_else(|| {
        PipelineError::Checkpoint("fusion checkpoint without a target scaler".into())
    })?);
    model.split_method = ckpt.header.split_method;
    Ok((model, ckpt.header.seed))
}

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub molecules: usize,
    pub with_truth: usize,
    pub spearman: Option<f64>,
    pub metrics: Option<RegressionMetrics>,
    pub output: String,
}

pub fn run_predict(
    checkpoint: &Path,
    input: &Path,
    out_dir: &Path,
    conformer_file: Option<&Path>,
) -> Result<PredictReport, PipelineError> {
    let (model, seed) = load_fusion_model(checkpoint)?;
    let records = ingest_path(input, IngestMode::AllowMissingEfficiency)?;
    let conformers = conformer_file
        .map(|p| -> Result<ConformerTable, PipelineError> {
            let content = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            Ok(parse_xyz_blocks(&content)?)
        })
        .transpose()?;
    let data = prepare_dataset(records, &model.vocab, conformers.as_ref(), seed)?;

    let mut csv = String::from("id,prediction,efficiency\n");
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (record, input_mol) in data.records.iter().zip(&data.inputs) {
        let (pred, _) = model.predict_one(input_mol)?;
        match record.efficiency {
            Some(t) => {
                csv.push_str(&format!("{},{},{}\n", record.id, pred, t));
                preds.push(pred);
                truths.push(t);
            }
            None => csv.push_str(&format!("{},{},\n", record.id, pred)),
        }
    }
    let out_path = out_dir.join("predictions.csv");
    write_file(&out_path, csv.as_bytes())?;

    let (rank, metrics) = if truths.len() >= 2 {
        (
            spearman(&preds, &truths),
            Some(regression_metrics(&preds, &truths)),
        )
    } else {
        (None, None)
    };
    let report = PredictReport {
        molecules: data.records.len(),
        with_truth: truths.len(),
        spearman: rank,
        metrics,
        output: file_name(&out_path),
    };
    let report_json =
        serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Io(e.to_string()))?;
    let report_path = out_dir.join("predict_report.json");
    write_file(&report_path, report_json.as_bytes())?;
    write_manifest(
        out_dir,
        "predict",
        None,
        seed,
        &[checkpoint, input],
        &[&out_path, &report_path],
    )?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct ExplainReport {
    pub molecules: usize,
    pub rows: usize,
    pub output: String,
}

/// Per-atom explanation CSV: `id,atom_index,element,attention_score,prediction`.
pub fn run_explain(
    checkpoint: &Path,
    input: &Path,
    out_dir: &Path,
    conformer_file: Option<&Path>,
) -> Result<ExplainReport, PipelineError> {
    let (model, seed) = load_fusion_model(checkpoint)?;
    let records = ingest_path(input, IngestMode::AllowMissingEfficiency)?;
    let conformers = conformer_file
        .map(|p| -> Result<ConformerTable, PipelineError> {
            let content = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            Ok(parse_xyz_blocks(&content)?)
        })
        .transpose()?;
    let data = prepare_dataset(records, &model.vocab, conformers.as_ref(), seed)?;

    let mut csv = String::from("id,atom_index,element,attention_score,prediction\n");
    let mut rows = 0usize;
    for (record, input_mol) in data.records.iter().zip(&data.inputs) {
        let (pred, scores) = model.predict_one(input_mol)?;
        let explanation = AttentionExplanation {
            id: record.id.clone(),
            scores: scores.clone(),
            prediction: pred,
        };
        debug_assert_eq!(explanation.scores.len(), input_mol.graph.atoms.len());
        for (atom_index, (score, atom)) in explanation
            .scores
            .iter()
            .zip(&input_mol.graph.atoms)
            .enumerate()
        {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                record.id, atom_index, atom.element, score, pred
            ));
            rows += 1;
        }
    }
    let out_path = out_dir.join("explanations.csv");
    write_file(&out_path, csv.as_bytes())?;
    write_manifest(
        out_dir,
        "explain",
        None,
        seed,
        &[checkpoint, input],
        &[&out_path],
    )?;
    Ok(ExplainReport {
        molecules: data.records.len(),
        rows,
        output: file_name(&out_path),
    })
}

#[derive(Debug, Serialize)]
pub struct EmbeddingsReport {
    pub molecules: usize,
    pub rows: usize,
    pub output: String,
}

/// Per-molecule pooled vectors at three stages: the 3-D encoder output, the
/// aligned sequence-encoder output, and the score-scaled fused features.
pub fn run_embeddings(
    checkpoint: &Path,
    input: &Path,
    out_dir: &Path,
    conformer_file: Option<&Path>,
) -> Result<EmbeddingsReport, PipelineError> {
    let (model, seed) = load_fusion_model(checkpoint)?;
    let records = ingest_path(input, IngestMode::AllowMissingEfficiency)?;
    let conformers = conformer_file
        .map(|p| -> Result<ConformerTable, PipelineError> {
            let content = std::fs::read_to_string(p)
                .map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            Ok(parse_xyz_blocks(&content)?)
        })
        .transpose()?;
    let data = prepare_dataset(records, &model.vocab, conformers.as_ref(), seed)?;

    let mut csv = String::from("id,stage,vector\n");
    let mut rows = 0usize;
    for (record, input_mol) in data.records.iter().zip(&data.inputs) {
        let mut graph = Graph::new();
        let out = model.forward(&mut graph, input_mol)?;
        let weighted = graph.mul_broadcast_col(out.fused, out.scores);
        let fused_pooled = graph.mean_rows(weighted);
        for (stage, var) in [
            ("z1_pooled", out.z1_pooled),
            ("z2_pooled", out.z2_pooled),
            ("fused_pooled", fused_pooled),
        ] {
            let values: Vec<String> = graph.value(var).data.iter().map(f64::to_string).collect();
            csv.push_str(&format!("{},{},{}\n", record.id, stage, values.join(";")));
            rows += 1;
        }
    }
    let out_path = out_dir.join("embeddings.csv");
    write_file(&out_path, csv.as_bytes())?;
    write_manifest(
        out_dir,
        "embeddings",
        None,
        seed,
        &[checkpoint, input],
        &[&out_path],
    )?;
    Ok(EmbeddingsReport {
        molecules: data.records.len(),
        rows,
        output: file_name(&out_path),
    })
}

//! Subcommand implementations. Every command is deterministic given its
//! seed: identical inputs produce byte-identical output files.

use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use imcred_core::boost::{init_weights, run_boost, BoostEnsemble, InitStrategy};
use imcred_core::dataset::{load_manifest, save_manifest, Dataset, Domain, Instance};
use imcred_core::error::{CoreError, Result};
use imcred_core::eval::compare::{
    conform_image, model_transfer_models, run_comparison, synth_compare_data, Arm,
    ComparisonConfig, ConvNetBoostLearner, LogRegBoostLearner,
};
use imcred_core::eval::synth::{render_point, synth_shift, ShiftSpec};
use imcred_core::eval::{compute_metrics, render_table};
use imcred_core::features::{
    bovw_histogram, build_vocabulary, extract_descriptors, text_features, Descriptor, Lexicons,
    Vocabulary, TEXT_FEATURE_NAMES,
};
use imcred_core::image::{decode_image, encode_image, passes_size_filter, ImageTensor};
use imcred_core::learners::{
    extract_features as net_extract_features, ConvNet, ConvNetSpec, FeatureLayer,
};
use imcred_core::lsh::HyperplaneFamily;
use imcred_core::model_io::{self, AnyModel};
use imcred_core::patterns::{rank_patterns, tokenize, PatternList, RankMethod};

use crate::config::RunConfig;
use crate::csvio::{read_matrix, write_matrix, FeatureMatrix, FeatureRow};
use crate::lock::DirLock;
use crate::CommonOpts;

fn load_cfg(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value, pretty: bool) -> Result<()> {
    let mut text = if pretty {
        serde_json::to_string_pretty(value)?
    } else {
        serde_json::to_string(value)?
    };
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_domains(spec: &str) -> Result<Vec<Domain>> {
    let mut out: Vec<Domain> = Vec::new();
    let push = |d: Domain, out: &mut Vec<Domain>| {
        if !out.contains(&d) {
            out.push(d);
        }
    };
    for part in spec.split(',') {
        match part.trim() {
            "auxiliary" => push(Domain::Auxiliary, &mut out),
            "target_train" => push(Domain::TargetTrain, &mut out),
            "target_test" => push(Domain::TargetTest, &mut out),
            "all" => {
                push(Domain::Auxiliary, &mut out);
                push(Domain::TargetTrain, &mut out);
                push(Domain::TargetTest, &mut out);
            }
            other => return Err(CoreError::InvalidInput(format!("unknown domain `{other}`"))),
        }
    }
    Ok(out)
}

fn load_instance_image(ds: &Dataset, inst: &Instance) -> Result<ImageTensor<f64>> {
    let path = ds.image_path(inst).ok_or_else(|| {
        CoreError::InvalidInput(format!("instance `{}` has no image", inst.id))
    })?;
    let bytes = std::fs::read(&path)
        .map_err(|e| CoreError::InvalidInput(format!("{}: {e}", path.display())))?;
    decode_image(&bytes)
}

fn require_label(inst: &Instance) -> Result<u8> {
    inst.label.ok_or_else(|| {
        CoreError::InvalidInput(format!("instance `{}` lacks a label", inst.id))
    })
}

// ---------------------------------------------------------------- synth ----

pub fn synth(common: &CommonOpts, spec_path: Option<&Path>, out: &Path, images: bool) -> Result<()> {
    let cfg = load_cfg(common)?;
    let mut spec: ShiftSpec = match spec_path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => cfg.shift.clone(),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let _lock = DirLock::acquire(out)?;
    let mut dataset = synth_shift(&spec)?;
    if images {
        let img_dir = out.join("images");
        std::fs::create_dir_all(&img_dir)?;
        for inst in &mut dataset.instances {
            let features = inst.features.as_ref().expect("synth emits features");
            let img = render_point(features);
            let rel = format!("images/{}.pgm", inst.id);
            std::fs::write(out.join(&rel), encode_image(&img)?)?;
            inst.image_path = Some(rel);
        }
    }
    save_manifest(&dataset, &out.join("manifest.jsonl"))?;
    let mut effective = cfg.clone();
    effective.shift = spec;
    effective.write_effective(out)?;
    eprintln!(
        "synth: wrote {} instances ({} auxiliary, {} target train) to {}",
        dataset.instances.len(),
        dataset.n_auxiliary(),
        dataset.m_target_train(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- dedup ----

pub fn dedup(
    common: &CommonOpts,
    manifest: &Path,
    out: &Path,
    report: Option<&Path>,
    planes: Option<usize>,
    threshold: Option<usize>,
    min_side: Option<usize>,
    max_aspect: Option<f64>,
) -> Result<()> {
    let cfg = load_cfg(common)?;
    let planes = planes.unwrap_or(cfg.dedup_planes);
    let threshold = threshold.unwrap_or(cfg.dedup_threshold);
    let min_side = min_side.unwrap_or(cfg.min_side);
    let max_aspect = max_aspect.unwrap_or(cfg.max_aspect);
    if threshold > planes {
        return Err(CoreError::InvalidInput(format!(
            "threshold {threshold} exceeds plane count {planes}"
        )));
    }

    let ds = load_manifest(manifest)?;
    let family = HyperplaneFamily::new(planes, cfg.seed);
    let mut kept_instances: Vec<Instance> = Vec::new();
    let mut kept_signatures = Vec::new();
    let mut dropped_small: Vec<String> = Vec::new();
    let mut dropped_duplicate: Vec<String> = Vec::new();
    for inst in &ds.instances {
        if inst.image_path.is_none() {
            kept_instances.push(inst.clone());
            continue;
        }
        let img = load_instance_image(&ds, inst)?;
        if !passes_size_filter(&img, min_side, max_aspect) {
            dropped_small.push(inst.id.clone());
            continue;
        }
        let sig = family.signature(&img);
        let dup = kept_signatures
            .iter()
            .any(|k: &imcred_core::lsh::BitSignature| k.hamming(&sig) <= threshold);
        if dup {
            dropped_duplicate.push(inst.id.clone());
        } else {
            kept_signatures.push(sig);
            kept_instances.push(inst.clone());
        }
    }
    let kept = kept_instances.len();
    let mut filtered = ds.clone();
    filtered.instances = kept_instances;
    save_manifest(&filtered, out)?;
    if let Some(report_path) = report {
        write_json(
            report_path,
            &json!({
                "planes": planes,
                "threshold": threshold,
                "min_side": min_side,
                "max_aspect": max_aspect,
                "kept": kept,
                "dropped_small": dropped_small,
                "dropped_duplicate": dropped_duplicate,
            }),
            true,
        )?;
    }
    eprintln!(
        "dedup: kept {kept}, dropped {} small/elongated, {} duplicates",
        dropped_small.len(),
        dropped_duplicate.len()
    );
    Ok(())
}

// ------------------------------------------------------------- patterns ----

#[derive(Deserialize)]
struct CorpusLine {
    id: String,
    text: String,
    label: Option<u8>,
}

fn read_corpus(path: &Path) -> Result<Vec<CorpusLine>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(line).map_err(|e| CoreError::Manifest {
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        out.push(parsed);
    }
    Ok(out)
}

fn parse_method(s: &str) -> Result<RankMethod> {
    match s {
        "chi2" => Ok(RankMethod::Chi2),
        "gain-ratio" | "gain_ratio" => Ok(RankMethod::GainRatio),
        other => Err(CoreError::InvalidInput(format!(
            "unknown method `{other}` (want chi2 or gain-ratio)"
        ))),
    }
}

pub fn mine_patterns(
    _common: &CommonOpts,
    corpus: &Path,
    method: &str,
    top_k: usize,
    max_n: usize,
    min_df: u64,
    out: &Path,
) -> Result<()> {
    if !(1..=3).contains(&max_n) {
        return Err(CoreError::InvalidInput("max_n must be in 1..=3".into()));
    }
    if top_k == 0 {
        return Err(CoreError::InvalidInput("top_k must be >= 1".into()));
    }
    let method = parse_method(method)?;
    let docs: Vec<imcred_core::patterns::TokenizedDoc> = read_corpus(corpus)?
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let label = line.label.ok_or_else(|| CoreError::Manifest {
                line: i + 1,
                msg: format!("corpus line for `{}` lacks a label", line.id),
            })?;
            Ok(imcred_core::patterns::TokenizedDoc {
                id: line.id,
                tokens: tokenize(&line.text),
                label,
            })
        })
        .collect::<Result<_>>()?;
    let ranked = rank_patterns(&docs, max_n, method, top_k, min_df)?;
    write_json(out, &serde_json::to_value(&ranked)?, true)?;
    eprintln!("mine-patterns: ranked {} patterns into {}", ranked.patterns.len(), out.display());
    Ok(())
}

pub fn weak_label(_common: &CommonOpts, texts: &Path, patterns: &Path, out: &Path) -> Result<()> {
    let pattern_list: PatternList = serde_json::from_str(&std::fs::read_to_string(patterns)?)?;
    let docs = read_corpus(texts)?;
    let tokenized: Vec<(String, Vec<String>)> = docs
        .into_iter()
        .map(|line| (line.id, tokenize(&line.text)))
        .collect();
    let labeled = imcred_core::patterns::weak_label(&tokenized, &pattern_list)?;
    let mut file = std::fs::File::create(out)?;
    for (id, label) in &labeled {
        serde_json::to_writer(&mut file, &json!({"id": id, "label": label}))?;
        file.write_all(b"\n")?;
    }
    eprintln!("weak-label: labeled {} of {} texts", labeled.len(), tokenized.len());
    Ok(())
}

// ------------------------------------------------------------ featurize ----

pub fn featurize_text(
    common: &CommonOpts,
    manifest: &Path,
    lexicons: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg = load_cfg(common)?;
    let lex = match lexicons.or(cfg.lexicons_dir.as_deref()) {
        Some(dir) => Lexicons::from_dir(dir)?,
        None => Lexicons::default(),
    };
    let ds = load_manifest(manifest)?;
    let mut rows = Vec::new();
    for inst in &ds.instances {
        let Some(text) = &inst.text else { continue };
        rows.push(FeatureRow {
            id: inst.id.clone(),
            domain: inst.domain,
            label: inst.label,
            weight: inst.weight,
            features: text_features(text, &lex).to_vec(),
        });
    }
    let matrix = FeatureMatrix {
        feature_names: TEXT_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    };
    write_matrix(&matrix, out)?;
    eprintln!("featurize text: {} rows to {}", matrix.rows.len(), out.display());
    Ok(())
}

fn vocab_to_json(vocab: &Vocabulary<f64>) -> Result<serde_json::Value> {
    Ok(json!({
        "descriptor_dim": vocab.descriptor_dim,
        "centroids": vocab.centroids,
    }))
}

fn vocab_from_json(v: &serde_json::Value) -> Result<Vocabulary<f64>> {
    #[derive(Deserialize)]
    struct VocabDoc {
        descriptor_dim: usize,
        centroids: Vec<Vec<f64>>,
    }
    let doc: VocabDoc = serde_json::from_value(v.clone())?;
    Ok(Vocabulary { centroids: doc.centroids, descriptor_dim: doc.descriptor_dim })
}

#[allow(clippy::too_many_arguments)]
pub fn featurize_bovw(
    common: &CommonOpts,
    manifest: &Path,
    out: &Path,
    k: Option<usize>,
    grid_step: Option<usize>,
    patch: Option<usize>,
    vocab_path: Option<&Path>,
    vocab_out: Option<&Path>,
) -> Result<()> {
    let cfg = load_cfg(common)?;
    let k = k.unwrap_or(cfg.bovw.k);
    let grid_step = grid_step.unwrap_or(cfg.bovw.grid_step);
    let patch = patch.unwrap_or(cfg.bovw.patch);
    let ds = load_manifest(manifest)?;

    let mut with_images: Vec<(&Instance, Vec<Descriptor<f64>>)> = Vec::new();
    for inst in &ds.instances {
        if inst.image_path.is_none() {
            continue;
        }
        let img = load_instance_image(&ds, inst)?;
        with_images.push((inst, extract_descriptors(&img, grid_step, patch)?));
    }
    let vocab = match vocab_path {
        Some(p) => vocab_from_json(&serde_json::from_str(&std::fs::read_to_string(p)?)?)?,
        None => {
            let all: Vec<Descriptor<f64>> = with_images
                .iter()
                .flat_map(|(_, d)| d.iter().cloned())
                .collect();
            let k_eff = k.min(all.len());
            if k_eff == 0 {
                return Err(CoreError::InvalidInput(
                    "no descriptors available to build a vocabulary".into(),
                ));
            }
            if k_eff < k {
                eprintln!("featurize bovw: clamping k from {k} to {k_eff} descriptors");
            }
            build_vocabulary(&all, k_eff, cfg.seed, cfg.bovw.max_iters)?
        }
    };
    if let Some(p) = vocab_out {
        write_json(p, &vocab_to_json(&vocab)?, false)?;
    }
    let mut rows = Vec::new();
    for (inst, descriptors) in &with_images {
        rows.push(FeatureRow {
            id: inst.id.clone(),
            domain: inst.domain,
            label: inst.label,
            weight: inst.weight,
            features: bovw_histogram(descriptors, &vocab)?,
        });
    }
    let matrix = FeatureMatrix {
        feature_names: (0..vocab.k()).map(|i| format!("v{i}")).collect(),
        rows,
    };
    write_matrix(&matrix, out)?;
    eprintln!("featurize bovw: {} rows, k={} to {}", matrix.rows.len(), vocab.k(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- train ----

/// Rescale instance weights so the average mini-batch carries unit weight
/// mass: conventional learning rates then behave the same at any dataset
/// size. Relative weights are preserved; all-zero weights stay zero.
fn normalize_batch_mass(weights: &mut [f64], batch_size: usize) {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return;
    }
    let scale = weights.len() as f64 / (batch_size.max(1) as f64 * total);
    weights.iter_mut().for_each(|w| *w *= scale);
}

/// Feature rows from a CSV or from a manifest's inline feature vectors.
fn training_rows(
    features: Option<&Path>,
    manifest: Option<&Path>,
    wanted: &[Domain],
) -> Result<(Vec<Vec<f64>>, Vec<u8>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    match (features, manifest) {
        (Some(p), None) => {
            for row in read_matrix(p)?.rows {
                if !wanted.contains(&row.domain) {
                    continue;
                }
                let label = row.label.ok_or_else(|| {
                    CoreError::InvalidInput(format!("training row `{}` lacks a label", row.id))
                })?;
                x.push(row.features);
                y.push(label);
                w.push(row.weight);
            }
        }
        (None, Some(p)) => {
            let ds = load_manifest(p)?;
            for inst in &ds.instances {
                if !wanted.contains(&inst.domain) {
                    continue;
                }
                let row = inst.features.clone().ok_or_else(|| {
                    CoreError::InvalidInput(format!("instance `{}` has no features", inst.id))
                })?;
                x.push(row);
                y.push(require_label(inst)?);
                w.push(inst.weight);
            }
        }
        _ => {
            return Err(CoreError::InvalidInput(
                "train logreg needs exactly one of --features or --manifest".into(),
            ))
        }
    }
    if x.is_empty() {
        return Err(CoreError::InvalidInput("no training rows in the requested domains".into()));
    }
    Ok((x, y, w))
}

pub fn train_logreg(
    common: &CommonOpts,
    features: Option<&Path>,
    manifest: Option<&Path>,
    out: &Path,
    domains: &str,
) -> Result<()> {
    let cfg = load_cfg(common)?;
    let wanted = parse_domains(domains)?;
    let (x, y, mut w) = training_rows(features, manifest, &wanted)?;
    // Full batch: unit total mass keeps the learning rate scale-free.
    normalize_batch_mass(&mut w, x.len());
    let model = imcred_core::learners::train_weighted_logreg(&x, &y, &w, &cfg.logreg_train)?;
    model_io::save_model(&AnyModel::LogReg(model), out)?;
    eprintln!("train logreg: {} rows, {} features, model to {}", x.len(), x[0].len(), out.display());
    Ok(())
}

fn resolve_net_spec(cfg: &RunConfig, net_spec: Option<&Path>) -> Result<ConvNetSpec> {
    if let Some(p) = net_spec {
        return Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?);
    }
    Ok(cfg.net_spec.clone().unwrap_or_else(ConvNetSpec::desk_small))
}

fn gather_images(
    ds: &Dataset,
    wanted: &[Domain],
    spec: &ConvNetSpec,
) -> Result<(Vec<ImageTensor<f64>>, Vec<u8>, Vec<f64>)> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for inst in &ds.instances {
        if !wanted.contains(&inst.domain) || inst.image_path.is_none() {
            continue;
        }
        let img = load_instance_image(ds, inst)?;
        images.push(conform_image(&img, spec));
        labels.push(require_label(inst)?);
        weights.push(inst.weight);
    }
    if images.is_empty() {
        return Err(CoreError::InvalidInput("no labeled images in the requested domains".into()));
    }
    Ok((images, labels, weights))
}

pub fn train_convnet(
    common: &CommonOpts,
    manifest: &Path,
    out: &Path,
    net_spec: Option<&Path>,
    domains: &str,
) -> Result<()> {
    let mut cfg = load_cfg(common)?;
    cfg.train.seed = cfg.seed;
    let spec = resolve_net_spec(&cfg, net_spec)?;
    let wanted = parse_domains(domains)?;
    let ds = load_manifest(manifest)?;
    let (images, labels, mut weights) = gather_images(&ds, &wanted, &spec)?;
    normalize_batch_mass(&mut weights, cfg.train.batch_size);
    let net = ConvNet::init(spec, cfg.seed)?;
    let trained = imcred_core::learners::sgd_train(&net, &images, &labels, &weights, &cfg.train)?;
    model_io::save_model(&AnyModel::ConvNet(trained), out)?;
    eprintln!("train convnet: {} images, model to {}", images.len(), out.display());
    Ok(())
}

pub fn fine_tune(common: &CommonOpts, model: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let mut cfg = load_cfg(common)?;
    cfg.train.seed = cfg.seed;
    let AnyModel::ConvNet(source) = model_io::load_model(model)? else {
        return Err(CoreError::InvalidInput("fine-tune requires a convnet model".into()));
    };
    let ds = load_manifest(manifest)?;
    let (images, labels, mut weights) = gather_images(&ds, &[Domain::TargetTrain], &source.spec)?;
    normalize_batch_mass(&mut weights, cfg.train.batch_size);
    let tuned = imcred_core::learners::fine_tune(&source, &images, &labels, &weights, &cfg.train)?;
    model_io::save_model(&AnyModel::ConvNet(tuned), out)?;
    eprintln!("fine-tune: {} target images, model to {}", images.len(), out.display());
    Ok(())
}

pub fn extract_features(
    _common: &CommonOpts,
    model: &Path,
    manifest: &Path,
    layer: &str,
    out: &Path,
    domains: Option<&str>,
) -> Result<()> {
    let AnyModel::ConvNet(net) = model_io::load_model(model)? else {
        return Err(CoreError::InvalidInput("extract-features requires a convnet model".into()));
    };
    let layer = FeatureLayer::parse(layer).ok_or_else(|| {
        CoreError::InvalidInput(format!("unknown layer `{layer}` (want c5_pooled, fc6 or fc7)"))
    })?;
    let wanted = parse_domains(domains.unwrap_or("all"))?;
    let ds = load_manifest(manifest)?;
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for inst in &ds.instances {
        if !wanted.contains(&inst.domain) || inst.image_path.is_none() {
            continue;
        }
        let img = conform_image(&load_instance_image(&ds, inst)?, &net.spec);
        let features = net_extract_features(&net, &img, layer)?;
        dim = features.len();
        rows.push(FeatureRow {
            id: inst.id.clone(),
            domain: inst.domain,
            label: inst.label,
            weight: inst.weight,
            features,
        });
    }
    let matrix = FeatureMatrix {
        feature_names: (0..dim).map(|i| format!("c{i}")).collect(),
        rows,
    };
    write_matrix(&matrix, out)?;
    eprintln!(
        "extract-features: {} rows of {} ({}-dim) to {}",
        matrix.rows.len(),
        layer.name(),
        dim,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------ boosting ----

fn parse_init(s: &str) -> Result<InitStrategy> {
    match s {
        "average" => Ok(InitStrategy::Average),
        "finetune" | "finetune_based" => Ok(InitStrategy::FinetuneBased),
        other => Err(CoreError::InvalidInput(format!(
            "unknown init `{other}` (want average or finetune)"
        ))),
    }
}

pub fn transfer_boost(
    common: &CommonOpts,
    manifest: &Path,
    iterations: Option<usize>,
    init: Option<&str>,
    base: &str,
    out: &Path,
    log: Option<&Path>,
) -> Result<()> {
    let mut cfg = load_cfg(common)?;
    if let Some(k) = iterations {
        cfg.boost.iterations = k;
    }
    if let Some(s) = init {
        cfg.boost.init_strategy = parse_init(s)?;
    }
    cfg.train.seed = cfg.seed;
    let ds = load_manifest(manifest)?;
    let mut compare_data = synth_compare_data(&ds, false)?;
    if base == "convnet" {
        // Force the image lane for model transfer when images drive boosting.
        for group in [
            &mut compare_data.aux,
            &mut compare_data.target_train,
            &mut compare_data.target_test,
        ] {
            for s in group.iter_mut() {
                s.features = None;
            }
        }
    }
    let n = compare_data.aux.len();
    let m = compare_data.target_train.len();
    let labels: Vec<u8> = compare_data
        .aux
        .iter()
        .chain(&compare_data.target_train)
        .map(|s| s.label)
        .collect();

    let comparison_cfg = ComparisonConfig {
        net_train: cfg.train.clone(),
        logreg_train: cfg.logreg_train.clone(),
        logreg_finetune: cfg.logreg_finetune.clone(),
        boost: cfg.boost.clone(),
        net_spec: Some(cfg.net_spec.clone().unwrap_or_else(ConvNetSpec::desk_small)),
        seed: cfg.seed,
        ..ComparisonConfig::default()
    };
    let initial = match cfg.boost.init_strategy {
        InitStrategy::Average => init_weights(n, m, InitStrategy::Average, None)?,
        InitStrategy::FinetuneBased => {
            let (_, aux_probs) = model_transfer_models(&compare_data, &comparison_cfg)?;
            init_weights(n, m, InitStrategy::FinetuneBased, Some(&aux_probs))?
        }
    };

    let (ensemble, rounds) = match base {
        "logreg" => {
            let rows: Option<Vec<Vec<f64>>> = compare_data
                .aux
                .iter()
                .chain(&compare_data.target_train)
                .map(|s| s.features.clone())
                .collect();
            let rows = rows.ok_or_else(|| {
                CoreError::InvalidInput("logreg boosting needs features on every instance".into())
            })?;
            let mut learner =
                LogRegBoostLearner { rows, labels: labels.clone(), cfg: cfg.logreg_train.clone() };
            let run = run_boost(&mut learner, &labels, n, m, initial, &cfg.boost)?;
            let members = run
                .ensemble
                .members
                .into_iter()
                .map(|(model, beta)| (AnyModel::LogReg(model), beta))
                .collect();
            (
                BoostEnsemble { members, vote_range: run.ensemble.vote_range },
                run.rounds,
            )
        }
        "convnet" => {
            let spec = comparison_cfg.net_spec.clone().expect("set above");
            let images: Option<Vec<ImageTensor<f64>>> = compare_data
                .aux
                .iter()
                .chain(&compare_data.target_train)
                .map(|s| s.image.as_ref().map(|i| conform_image(i, &spec)))
                .collect();
            let images = images.ok_or_else(|| {
                CoreError::InvalidInput("convnet boosting needs images on every instance".into())
            })?;
            let mut learner = ConvNetBoostLearner {
                images,
                labels: labels.clone(),
                spec,
                cfg: cfg.train.clone(),
            };
            let run = run_boost(&mut learner, &labels, n, m, initial, &cfg.boost)?;
            let members = run
                .ensemble
                .members
                .into_iter()
                .map(|(model, beta)| (AnyModel::ConvNet(model), beta))
                .collect();
            (
                BoostEnsemble { members, vote_range: run.ensemble.vote_range },
                run.rounds,
            )
        }
        other => {
            return Err(CoreError::InvalidInput(format!(
                "unknown base learner `{other}` (want logreg or convnet)"
            )))
        }
    };

    model_io::save_ensemble(&ensemble, out)?;
    if let Some(log_path) = log {
        let mut file = std::fs::File::create(log_path)?;
        for round in &rounds {
            serde_json::to_writer(&mut file, round)?;
            file.write_all(b"\n")?;
        }
    }
    for round in &rounds {
        eprintln!(
            "round {}: epsilon {:.4}, beta_t {:.4}, target acc {:.3}, aux mass {:.3}",
            round.t, round.epsilon_t, round.beta_t, round.target_accuracy, round.aux_weight_mass
        );
    }
    eprintln!("transfer-boost: {} members to {}", ensemble.members.len(), out.display());
    Ok(())
}

// ------------------------------------------------------------ evaluate ----

fn predict_with_model(
    model: &AnyModel,
    ds: &Dataset,
    inst: &Instance,
    image_cache: &mut std::collections::HashMap<String, ImageTensor<f64>>,
) -> Result<u8> {
    match model {
        AnyModel::LogReg(m) => {
            let features = inst.features.as_ref().ok_or_else(|| {
                CoreError::InvalidInput(format!("instance `{}` has no features", inst.id))
            })?;
            Ok(m.predict(features)?.label)
        }
        AnyModel::ConvNet(net) => {
            let img = match image_cache.get(&inst.id) {
                Some(img) => img.clone(),
                None => {
                    let img = conform_image(&load_instance_image(ds, inst)?, &net.spec);
                    image_cache.insert(inst.id.clone(), img.clone());
                    img
                }
            };
            Ok(net.predict(&img)?.label)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    _common: &CommonOpts,
    model: Option<&Path>,
    ensemble: Option<&Path>,
    manifest: &Path,
    features: Option<&Path>,
    domain: &str,
    out: &Path,
    table: Option<&Path>,
) -> Result<()> {
    let wanted = parse_domains(domain)?;
    let mut ds = load_manifest(manifest)?;
    if let Some(csv) = features {
        // Substitute exported feature vectors for the inline ones, matched
        // by id, so models trained on a feature matrix see the same space.
        let matrix = read_matrix(csv)?;
        let by_id: std::collections::HashMap<String, Vec<f64>> = matrix
            .rows
            .into_iter()
            .map(|r| (r.id, r.features))
            .collect();
        for inst in &mut ds.instances {
            inst.features = by_id.get(&inst.id).cloned();
        }
    }
    evaluate_impl(model, ensemble, &ds, &wanted, out, table)
}

fn evaluate_impl(
    model: Option<&Path>,
    ensemble: Option<&Path>,
    ds: &Dataset,
    wanted: &[Domain],
    out: &Path,
    table: Option<&Path>,
) -> Result<()> {
    enum Predictor {
        One(AnyModel),
        Many(BoostEnsemble<AnyModel, f64>),
    }
    let predictor = match (model, ensemble) {
        (Some(p), None) => Predictor::One(model_io::load_model(p)?),
        (None, Some(p)) => Predictor::Many(model_io::load_ensemble(p)?),
        _ => {
            return Err(CoreError::InvalidInput(
                "evaluate needs exactly one of --model or --ensemble".into(),
            ))
        }
    };
    let method = match &predictor {
        Predictor::One(m) => m.kind().to_string(),
        Predictor::Many(e) => format!("ensemble[{}]", e.members.len()),
    };
    let mut cache = std::collections::HashMap::new();
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for inst in &ds.instances {
        if !wanted.contains(&inst.domain) {
            continue;
        }
        labels.push(require_label(inst)?);
        let p = match &predictor {
            Predictor::One(m) => predict_with_model(m, ds, inst, &mut cache)?,
            Predictor::Many(ens) => ens.predict_with::<CoreError>(|m| {
                predict_with_model(m, ds, inst, &mut cache)
            })?,
        };
        predictions.push(p);
    }
    let report = compute_metrics(&predictions, &labels, &method)?;
    write_json(out, &serde_json::to_value(&report)?, true)?;
    if let Some(table_path) = table {
        std::fs::write(
            table_path,
            render_table(&[(report.method_name.clone(), Some(report.clone()))]),
        )?;
    }
    eprintln!(
        "evaluate: {} instances, accuracy {:.4} ({} -> {})",
        labels.len(),
        report.accuracy,
        method,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------- compare ----

pub fn compare(
    common: &CommonOpts,
    manifest: &Path,
    out: &Path,
    arms: Option<&str>,
    render_images: bool,
) -> Result<()> {
    let cfg = load_cfg(common)?;
    let _lock = DirLock::acquire(out)?;
    let ds = load_manifest(manifest)?;
    let data = synth_compare_data(&ds, render_images)?;
    let arm_list: Vec<Arm> = match arms {
        None => Arm::all(),
        Some(s) => s
            .split(',')
            .map(|name| {
                Arm::parse(name.trim()).ok_or_else(|| {
                    CoreError::InvalidInput(format!("unknown arm `{}`", name.trim()))
                })
            })
            .collect::<Result<_>>()?,
    };
    let net_spec = cfg.net_spec.clone().or_else(|| {
        render_images.then(default_render_net_spec)
    });
    let comparison_cfg = ComparisonConfig {
        arms: arm_list,
        net_train: cfg.train.clone(),
        logreg_train: cfg.logreg_train.clone(),
        logreg_finetune: cfg.logreg_finetune.clone(),
        boost: cfg.boost.clone(),
        bovw: cfg.bovw.clone(),
        net_spec,
        seed: cfg.seed,
        ..ComparisonConfig::default()
    };
    let outcomes = run_comparison(&data, &comparison_cfg)?;
    write_json(out.join("report.json").as_path(), &serde_json::to_value(&outcomes)?, true)?;
    let table_rows: Vec<(String, Option<imcred_core::eval::MetricsReport>)> = outcomes
        .iter()
        .map(|o| (o.arm.clone(), o.report.clone()))
        .collect();
    let table = render_table(&table_rows);
    std::fs::write(out.join("table.txt"), &table)?;
    cfg.write_effective(out)?;
    eprint!("{table}");
    eprintln!("compare: report in {}", out.display());
    Ok(())
}

/// Desk-scale network for the 16x16 rendered benchmark images.
fn default_render_net_spec() -> ConvNetSpec {
    use imcred_core::learners::{Activation, LayerSpec};
    ConvNetSpec {
        input_height: 16,
        input_width: 16,
        input_channels: 1,
        layers: vec![
            LayerSpec::Convolution { out_channels: 4, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::Convolution { out_channels: 8, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::MaxPool { kernel: 2, stride: 2 },
            LayerSpec::FullyConnected {
                out_dim: 32,
                activation: Activation::Relu,
                dropout_rate: 0.5,
            },
            LayerSpec::FullyConnected {
                out_dim: 16,
                activation: Activation::Relu,
                dropout_rate: 0.0,
            },
            LayerSpec::FullyConnected {
                out_dim: 2,
                activation: Activation::Softmax,
                dropout_rate: 0.0,
            },
        ],
    }
}

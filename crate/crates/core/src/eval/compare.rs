//! The multi-arm comparison harness: text features, bag-of-visual-words,
//! target-only, data / feature / model transfer, and iterative transfer
//! boosting, each evaluated on the target testing set.

use serde::{Deserialize, Serialize};

use crate::boost::{
    init_weights, run_boost, BoostConfig, BoostRound, InitStrategy, WeightedLearner,
};
use crate::dataset::{Dataset, Domain, Instance};
use crate::error::{CoreError, Result};
use crate::eval::{compute_metrics, MetricsReport};
use crate::features::{
    bovw_histogram, build_vocabulary, extract_descriptors, text_features, Lexicons,
};
use crate::image::{decode_image, resize_bilinear, ImageTensor};
use crate::learners::{
    extract_features, fine_tune, sgd_train, train_weighted_logreg, train_weighted_logreg_from,
    ConvNet, ConvNetSpec, FeatureLayer, LogRegModel, TrainConfig,
};

/// One evaluated instance with whatever modalities it carries.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub label: u8,
    pub text: Option<String>,
    pub image: Option<ImageTensor<f64>>,
    pub features: Option<Vec<f64>>,
}

/// Comparison inputs split by domain, auxiliary weak labels included.
#[derive(Debug, Clone, Default)]
pub struct CompareData {
    pub aux: Vec<Sample>,
    pub target_train: Vec<Sample>,
    pub target_test: Vec<Sample>,
}

impl CompareData {
    /// Assemble from a dataset, decoding images from disk when present.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let mut out = CompareData::default();
        for inst in &data.instances {
            let image = match data.image_path(inst) {
                Some(path) => {
                    let bytes = std::fs::read(&path).map_err(|e| {
                        CoreError::InvalidInput(format!("{}: {e}", path.display()))
                    })?;
                    Some(decode_image::<f64>(&bytes)?)
                }
                None => None,
            };
            let label = inst.label.ok_or_else(|| {
                CoreError::InvalidInput(format!("instance `{}` lacks a label", inst.id))
            })?;
            let sample = Sample {
                id: inst.id.clone(),
                label,
                text: inst.text.clone(),
                image,
                features: inst.features.clone(),
            };
            match inst.domain {
                Domain::Auxiliary => out.aux.push(sample),
                Domain::TargetTrain => out.target_train.push(sample),
                Domain::TargetTest => out.target_test.push(sample),
            }
        }
        Ok(out)
    }

    /// Attach in-memory images (id -> tensor), e.g. rendered synth points.
    pub fn with_images(mut self, images: &std::collections::BTreeMap<String, ImageTensor<f64>>) -> Self {
        for group in [&mut self.aux, &mut self.target_train, &mut self.target_test] {
            for s in group.iter_mut() {
                if let Some(img) = images.get(&s.id) {
                    s.image = Some(img.clone());
                }
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    TextBased,
    Bovw,
    TargetOnly,
    DataTransfer,
    NaiveCombination,
    FeatureTransfer,
    ModelTransfer,
    IterativeTransfer,
}

impl Arm {
    pub fn all() -> Vec<Arm> {
        vec![
            Arm::TextBased,
            Arm::Bovw,
            Arm::TargetOnly,
            Arm::DataTransfer,
            Arm::NaiveCombination,
            Arm::FeatureTransfer,
            Arm::ModelTransfer,
            Arm::IterativeTransfer,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arm::TextBased => "text-based",
            Arm::Bovw => "bovw",
            Arm::TargetOnly => "target-only",
            Arm::DataTransfer => "data-transfer",
            Arm::NaiveCombination => "naive-combination",
            Arm::FeatureTransfer => "feature-transfer",
            Arm::ModelTransfer => "model-transfer",
            Arm::IterativeTransfer => "iterative-transfer",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::all().into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BovwParams {
    pub k: usize,
    pub grid_step: usize,
    pub patch: usize,
    pub max_iters: usize,
}

impl Default for BovwParams {
    fn default() -> Self {
        BovwParams { k: 256, grid_step: 8, patch: 16, max_iters: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub arms: Vec<Arm>,
    /// Config for convolutional lanes.
    pub net_train: TrainConfig,
    /// Config for logistic-regression lanes.
    pub logreg_train: TrainConfig,
    /// Shorter schedule for the warm-start stage of linear model transfer;
    /// running that stage to convergence would just reproduce the
    /// target-only optimum (the objective is convex), so the transfer value
    /// lives in stopping early.
    pub logreg_finetune: TrainConfig,
    pub boost: BoostConfig,
    pub feature_layer: FeatureLayer,
    pub bovw: BovwParams,
    pub net_spec: Option<ConvNetSpec>,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            arms: Arm::all(),
            net_train: TrainConfig::default(),
            logreg_train: TrainConfig {
                schedule: vec![crate::learners::LrStage { rate: 1.0, epochs: 400 }],
                weight_decay: 1e-4,
                ..TrainConfig::default()
            },
            logreg_finetune: TrainConfig {
                schedule: vec![crate::learners::LrStage { rate: 0.2, epochs: 40 }],
                weight_decay: 1e-4,
                ..TrainConfig::default()
            },
            boost: BoostConfig::default(),
            feature_layer: FeatureLayer::Fc6,
            bovw: BovwParams::default(),
            net_spec: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub arm: String,
    pub report: Option<MetricsReport>,
    pub skip_reason: Option<String>,
}

/// Boost adapter: logistic regression over feature rows in the fixed
/// auxiliary-first layout.
pub struct LogRegBoostLearner {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub cfg: TrainConfig,
}

impl WeightedLearner<f64> for LogRegBoostLearner {
    type Model = LogRegModel<f64>;

    fn train(&mut self, weights: &[f64], _round: usize) -> Result<LogRegModel<f64>> {
        train_weighted_logreg(&self.rows, &self.labels, weights, &self.cfg)
    }

    fn predict_all(&self, model: &LogRegModel<f64>) -> Result<Vec<u8>> {
        self.rows
            .iter()
            .map(|row| model.predict(row).map(|p| p.label))
            .collect()
    }
}

/// Boost adapter: convolutional network over images in layout order.
pub struct ConvNetBoostLearner {
    pub images: Vec<ImageTensor<f64>>,
    pub labels: Vec<u8>,
    pub spec: ConvNetSpec,
    pub cfg: TrainConfig,
}

impl WeightedLearner<f64> for ConvNetBoostLearner {
    type Model = ConvNet<f64>;

    fn train(&mut self, weights: &[f64], round: usize) -> Result<ConvNet<f64>> {
        let mut cfg = self.cfg.clone();
        cfg.seed = crate::learners::convnet::mix_seed(self.cfg.seed, round as u64);
        let net = ConvNet::init(self.spec.clone(), cfg.seed)?;
        sgd_train(&net, &self.images, &self.labels, weights, &cfg)
    }

    fn predict_all(&self, model: &ConvNet<f64>) -> Result<Vec<u8>> {
        self.images
            .iter()
            .map(|img| model.predict(img).map(|p| p.label))
            .collect()
    }
}

fn eval_logreg(
    model: &LogRegModel<f64>,
    rows: &[Vec<f64>],
    labels: &[u8],
    name: &str,
) -> Result<MetricsReport> {
    let preds: Vec<u8> = rows
        .iter()
        .map(|r| model.predict(r).map(|p| p.label))
        .collect::<Result<_>>()?;
    compute_metrics(&preds, labels, name)
}

fn feature_rows(samples: &[Sample]) -> Option<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| s.features.clone())
        .collect::<Option<Vec<_>>>()
}

fn labels_of(samples: &[Sample]) -> Vec<u8> {
    samples.iter().map(|s| s.label).collect()
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n.max(1) as f64; n]
}

/// Resize/convert an image to the network's expected input geometry.
pub fn conform_image(img: &ImageTensor<f64>, spec: &ConvNetSpec) -> ImageTensor<f64> {
    let mut out = if img.channels == spec.input_channels {
        img.clone()
    } else if spec.input_channels == 1 {
        img.to_grayscale()
    } else {
        // Replicate gray into the wanted channel count.
        let gray = img.to_grayscale();
        let mut v = Vec::with_capacity(gray.height * gray.width * spec.input_channels);
        for y in 0..gray.height {
            for x in 0..gray.width {
                for _ in 0..spec.input_channels {
                    v.push(gray.at(y, x, 0));
                }
            }
        }
        ImageTensor::new(gray.height, gray.width, spec.input_channels, v).expect("shape consistent")
    };
    if out.height != spec.input_height || out.width != spec.input_width {
        out = resize_bilinear(&out, spec.input_height, spec.input_width);
    }
    out
}

fn images_of(samples: &[Sample], spec: &ConvNetSpec) -> Option<Vec<ImageTensor<f64>>> {
    samples
        .iter()
        .map(|s| s.image.as_ref().map(|i| conform_image(i, spec)))
        .collect()
}

/// Run every configured arm; arms missing their modality are reported as
/// skipped and the run continues.
pub fn run_comparison(data: &CompareData, cfg: &ComparisonConfig) -> Result<Vec<ArmOutcome>> {
    let mut outcomes = Vec::new();
    for &arm in &cfg.arms {
        let result = run_arm(data, cfg, arm);
        match result {
            Ok(report) => outcomes.push(ArmOutcome {
                arm: arm.name().into(),
                report: Some(report),
                skip_reason: None,
            }),
            Err(CoreError::InvalidInput(msg)) if msg.starts_with("arm requires") => {
                outcomes.push(ArmOutcome {
                    arm: arm.name().into(),
                    report: None,
                    skip_reason: Some(msg),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(outcomes)
}

fn modality_err(what: &str) -> CoreError {
    CoreError::InvalidInput(format!("arm requires {what}"))
}

fn run_arm(data: &CompareData, cfg: &ComparisonConfig, arm: Arm) -> Result<MetricsReport> {
    match arm {
        Arm::TextBased => {
            let lex = Lexicons::default();
            let rows_of = |samples: &[Sample]| -> Result<Vec<Vec<f64>>> {
                samples
                    .iter()
                    .map(|s| {
                        s.text
                            .as_deref()
                            .map(|t| text_features(t, &lex).to_vec())
                            .ok_or_else(|| modality_err("text on every target instance"))
                    })
                    .collect()
            };
            let train_x = rows_of(&data.target_train)?;
            let test_x = rows_of(&data.target_test)?;
            let y = labels_of(&data.target_train);
            let model = train_weighted_logreg(&train_x, &y, &uniform(y.len()), &cfg.logreg_train)?;
            eval_logreg(&model, &test_x, &labels_of(&data.target_test), arm.name())
        }
        Arm::Bovw => {
            fn imgs(samples: &[Sample]) -> Result<Vec<&ImageTensor<f64>>> {
                samples
                    .iter()
                    .map(|s| {
                        s.image
                            .as_ref()
                            .ok_or_else(|| modality_err("images on every target instance"))
                    })
                    .collect()
            }
            let train_imgs = imgs(&data.target_train)?;
            let test_imgs = imgs(&data.target_test)?;
            let mut all_desc = Vec::new();
            let mut per_image = Vec::new();
            for img in &train_imgs {
                let d = extract_descriptors(img, cfg.bovw.grid_step, cfg.bovw.patch)?;
                all_desc.extend(d.clone());
                per_image.push(d);
            }
            let k = cfg.bovw.k.min(all_desc.len());
            if k == 0 {
                return Err(modality_err("images large enough for descriptors"));
            }
            let vocab = build_vocabulary(&all_desc, k, cfg.seed, cfg.bovw.max_iters)?;
            let train_x: Vec<Vec<f64>> = per_image
                .iter()
                .map(|d| bovw_histogram(d, &vocab))
                .collect::<Result<_>>()?;
            let test_x: Vec<Vec<f64>> = test_imgs
                .iter()
                .map(|img| {
                    let d = extract_descriptors(img, cfg.bovw.grid_step, cfg.bovw.patch)?;
                    bovw_histogram(&d, &vocab)
                })
                .collect::<Result<_>>()?;
            let y = labels_of(&data.target_train);
            let model = train_weighted_logreg(&train_x, &y, &uniform(y.len()), &cfg.logreg_train)?;
            eval_logreg(&model, &test_x, &labels_of(&data.target_test), arm.name())
        }
        Arm::TargetOnly | Arm::DataTransfer | Arm::NaiveCombination => {
            let name = arm.name();
            let owned: Vec<Sample> = match arm {
                Arm::TargetOnly => data.target_train.clone(),
                Arm::DataTransfer => data.aux.clone(),
                _ => data.aux.iter().chain(&data.target_train).cloned().collect(),
            };
            if let (Some(train_x), Some(test_x)) =
                (feature_rows(&owned), feature_rows(&data.target_test))
            {
                let y: Vec<u8> = owned.iter().map(|s| s.label).collect();
                let model =
                    train_weighted_logreg(&train_x, &y, &uniform(y.len()), &cfg.logreg_train)?;
                return eval_logreg(&model, &test_x, &labels_of(&data.target_test), name);
            }
            // Image lane.
            let spec = cfg.net_spec.clone().ok_or_else(|| modality_err("a network spec"))?;
            let train_imgs =
                images_of(&owned, &spec).ok_or_else(|| modality_err("features or images"))?;
            let test_imgs = images_of(&data.target_test, &spec)
                .ok_or_else(|| modality_err("features or images"))?;
            let y: Vec<u8> = owned.iter().map(|s| s.label).collect();
            let net = ConvNet::init(spec, cfg.seed)?;
            let trained = sgd_train(&net, &train_imgs, &y, &uniform(y.len()), &cfg.net_train)?;
            let preds: Vec<u8> = test_imgs
                .iter()
                .map(|img| trained.predict(img).map(|p| p.label))
                .collect::<Result<_>>()?;
            compute_metrics(&preds, &labels_of(&data.target_test), name)
        }
        Arm::FeatureTransfer => {
            let spec = cfg.net_spec.clone().ok_or_else(|| modality_err("a network spec"))?;
            let aux_imgs = images_of(&data.aux, &spec)
                .ok_or_else(|| modality_err("images on every auxiliary instance"))?;
            let train_imgs = images_of(&data.target_train, &spec)
                .ok_or_else(|| modality_err("images on every target instance"))?;
            let test_imgs = images_of(&data.target_test, &spec)
                .ok_or_else(|| modality_err("images on every target instance"))?;
            let aux_y = labels_of(&data.aux);
            let source = sgd_train(
                &ConvNet::init(spec, cfg.seed)?,
                &aux_imgs,
                &aux_y,
                &uniform(aux_y.len()),
                &cfg.net_train,
            )?;
            let feats = |imgs: &[ImageTensor<f64>]| -> Result<Vec<Vec<f64>>> {
                imgs.iter()
                    .map(|img| extract_features(&source, img, cfg.feature_layer))
                    .collect()
            };
            let train_x = feats(&train_imgs)?;
            let test_x = feats(&test_imgs)?;
            let y = labels_of(&data.target_train);
            let model = train_weighted_logreg(&train_x, &y, &uniform(y.len()), &cfg.logreg_train)?;
            let name = format!("{}-{}", arm.name(), cfg.feature_layer.name().to_lowercase());
            eval_logreg(&model, &test_x, &labels_of(&data.target_test), &name)
        }
        Arm::ModelTransfer => {
            let (model, _) = model_transfer_models(data, cfg)?;
            match model {
                TransferModel::Linear(m) => {
                    let test_x = feature_rows(&data.target_test)
                        .ok_or_else(|| modality_err("features"))?;
                    eval_logreg(&m, &test_x, &labels_of(&data.target_test), arm.name())
                }
                TransferModel::Net(net) => {
                    let spec = net.spec.clone();
                    let test_imgs = images_of(&data.target_test, &spec)
                        .ok_or_else(|| modality_err("images"))?;
                    let preds: Vec<u8> = test_imgs
                        .iter()
                        .map(|img| net.predict(img).map(|p| p.label))
                        .collect::<Result<_>>()?;
                    compute_metrics(&preds, &labels_of(&data.target_test), arm.name())
                }
            }
        }
        Arm::IterativeTransfer => {
            let (outcome, _) = iterative_transfer(data, cfg)?;
            Ok(outcome)
        }
    }
}

/// A model-transfer result in either lane.
pub enum TransferModel {
    Linear(LogRegModel<f64>),
    Net(ConvNet<f64>),
}

/// Train the model-transfer baseline and return the per-auxiliary-instance
/// predicted probability of each weak label (the finetune-based boost
/// initialization).
pub fn model_transfer_models(
    data: &CompareData,
    cfg: &ComparisonConfig,
) -> Result<(TransferModel, Vec<f64>)> {
    if let (Some(aux_x), Some(train_x)) = (feature_rows(&data.aux), feature_rows(&data.target_train))
    {
        let aux_y = labels_of(&data.aux);
        let source =
            train_weighted_logreg(&aux_x, &aux_y, &uniform(aux_y.len()), &cfg.logreg_train)?;
        let y = labels_of(&data.target_train);
        let tuned = train_weighted_logreg_from(
            source,
            &train_x,
            &y,
            &uniform(y.len()),
            &cfg.logreg_finetune,
        )?;
        let aux_probs = aux_x
            .iter()
            .zip(&aux_y)
            .map(|(row, &yl)| {
                tuned.prob_fake(row).map(|p| if yl == 1 { p } else { 1.0 - p })
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok((TransferModel::Linear(tuned), aux_probs));
    }
    let spec = cfg.net_spec.clone().ok_or_else(|| modality_err("a network spec"))?;
    let aux_imgs = images_of(&data.aux, &spec)
        .ok_or_else(|| modality_err("features or images on every instance"))?;
    let train_imgs = images_of(&data.target_train, &spec)
        .ok_or_else(|| modality_err("features or images on every instance"))?;
    let aux_y = labels_of(&data.aux);
    let source = sgd_train(
        &ConvNet::init(spec, cfg.seed)?,
        &aux_imgs,
        &aux_y,
        &uniform(aux_y.len()),
        &cfg.net_train,
    )?;
    let y = labels_of(&data.target_train);
    let tuned = fine_tune(&source, &train_imgs, &y, &uniform(y.len()), &cfg.net_train)?;
    let aux_probs = aux_imgs
        .iter()
        .zip(&aux_y)
        .map(|(img, &yl)| {
            tuned
                .predict_proba(img)
                .map(|p| if yl == 1 { p[1] } else { p[0] })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((TransferModel::Net(tuned), aux_probs))
}

/// Run the full iterative-transfer arm, returning test metrics and the
/// per-round log.
pub fn iterative_transfer(
    data: &CompareData,
    cfg: &ComparisonConfig,
) -> Result<(MetricsReport, Vec<BoostRound>)> {
    let n = data.aux.len();
    let m = data.target_train.len();
    let labels: Vec<u8> = data
        .aux
        .iter()
        .chain(&data.target_train)
        .map(|s| s.label)
        .collect();
    let init = match cfg.boost.init_strategy {
        InitStrategy::Average => init_weights(n, m, InitStrategy::Average, None)?,
        InitStrategy::FinetuneBased => {
            let (_, aux_probs) = model_transfer_models(data, cfg)?;
            init_weights(n, m, InitStrategy::FinetuneBased, Some(&aux_probs))?
        }
    };
    if let (Some(aux_x), Some(train_x), Some(test_x)) = (
        feature_rows(&data.aux),
        feature_rows(&data.target_train),
        feature_rows(&data.target_test),
    ) {
        let mut rows = aux_x;
        rows.extend(train_x);
        let mut learner = LogRegBoostLearner {
            rows,
            labels: labels.clone(),
            cfg: cfg.logreg_train.clone(),
        };
        let run = run_boost(&mut learner, &labels, n, m, init, &cfg.boost)?;
        let preds: Vec<u8> = test_x
            .iter()
            .map(|row| {
                run.ensemble
                    .predict_with::<CoreError>(|model| model.predict(row).map(|p| p.label))
            })
            .collect::<Result<_>>()?;
        let report = compute_metrics(&preds, &labels_of(&data.target_test), Arm::IterativeTransfer.name())?;
        return Ok((report, run.rounds));
    }
    let spec = cfg.net_spec.clone().ok_or_else(|| modality_err("a network spec"))?;
    let mut images = images_of(&data.aux, &spec)
        .ok_or_else(|| modality_err("features or images on every instance"))?;
    images.extend(
        images_of(&data.target_train, &spec)
            .ok_or_else(|| modality_err("features or images on every instance"))?,
    );
    let test_imgs = images_of(&data.target_test, &spec)
        .ok_or_else(|| modality_err("features or images on every instance"))?;
    let mut learner = ConvNetBoostLearner {
        images,
        labels: labels.clone(),
        spec,
        cfg: cfg.net_train.clone(),
    };
    let run = run_boost(&mut learner, &labels, n, m, init, &cfg.boost)?;
    let preds: Vec<u8> = test_imgs
        .iter()
        .map(|img| {
            run.ensemble
                .predict_with::<CoreError>(|model| model.predict(img).map(|p| p.label))
        })
        .collect::<Result<_>>()?;
    let report = compute_metrics(&preds, &labels_of(&data.target_test), Arm::IterativeTransfer.name())?;
    Ok((report, run.rounds))
}

/// Layer comparison: per requested layer, extract features from the source
/// network, train logistic regression on target train, evaluate on test.
pub fn layer_comparison(
    net: &ConvNet<f64>,
    data: &CompareData,
    layers: &[FeatureLayer],
    logreg_cfg: &TrainConfig,
) -> Result<Vec<MetricsReport>> {
    let spec = net.spec.clone();
    let train_imgs = images_of(&data.target_train, &spec)
        .ok_or_else(|| modality_err("images on every target instance"))?;
    let test_imgs = images_of(&data.target_test, &spec)
        .ok_or_else(|| modality_err("images on every target instance"))?;
    let mut reports = Vec::new();
    for &layer in layers {
        let feats = |imgs: &[ImageTensor<f64>]| -> Result<Vec<Vec<f64>>> {
            imgs.iter()
                .map(|img| extract_features(net, img, layer))
                .collect()
        };
        let train_x = feats(&train_imgs)?;
        let test_x = feats(&test_imgs)?;
        let y = labels_of(&data.target_train);
        let model = train_weighted_logreg(&train_x, &y, &uniform(y.len()), logreg_cfg)?;
        reports.push(eval_logreg(
            &model,
            &test_x,
            &labels_of(&data.target_test),
            layer.name(),
        )?);
    }
    Ok(reports)
}

/// Build a comparison-ready view of a synthetic dataset, optionally with
/// rendered images attached.
pub fn synth_compare_data(data: &Dataset, render: bool) -> Result<CompareData> {
    let mut cd = CompareData::from_dataset(data)?;
    if render {
        let render_one = |s: &mut Sample, inst: &Instance| {
            if let Some(f) = &inst.features {
                s.image = Some(crate::eval::synth::render_point(f));
            }
        };
        let mut by_id: std::collections::BTreeMap<&str, &Instance> = Default::default();
        for inst in &data.instances {
            by_id.insert(inst.id.as_str(), inst);
        }
        for group in [&mut cd.aux, &mut cd.target_train, &mut cd.target_test] {
            for s in group.iter_mut() {
                if let Some(inst) = by_id.get(s.id.as_str()) {
                    render_one(s, inst);
                }
            }
        }
    }
    Ok(cd)
}

//! Model and ensemble files: single JSON documents with round-trip-exact
//! numbers (shortest decimal rendering parses back to the identical f64).

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::boost::{BoostEnsemble, VoteRange};
use crate::error::{CoreError, Result};
use crate::learners::convnet::param_shapes;
use crate::learners::{ConvNet, ConvNetSpec, LayerParams, LogRegModel};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u64 = 1;

/// Either trained model kind, as stored on disk.
#[derive(Debug, Clone)]
pub enum AnyModel {
    ConvNet(ConvNet<f64>),
    LogReg(LogRegModel<f64>),
}

impl AnyModel {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::ConvNet(_) => "convnet",
            AnyModel::LogReg(_) => "logreg",
        }
    }
}

fn number(x: f64) -> Result<Value> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| CoreError::InvalidInput(format!("non-finite parameter {x}")))
}

fn tensor_to_nested(data: &[f64], shape: &[usize]) -> Result<Value> {
    if shape.len() <= 1 {
        return Ok(Value::Array(
            data.iter().map(|&x| number(x)).collect::<Result<_>>()?,
        ));
    }
    let chunk = data.len() / shape[0];
    let mut out = Vec::with_capacity(shape[0]);
    for i in 0..shape[0] {
        out.push(tensor_to_nested(&data[i * chunk..(i + 1) * chunk], &shape[1..])?);
    }
    Ok(Value::Array(out))
}

fn flatten_nested(v: &Value, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Number(n) => {
            out.push(n.as_f64().ok_or_else(|| {
                CoreError::InvalidInput("parameter is not a finite number".into())
            })?);
            Ok(())
        }
        Value::Array(items) => {
            for item in items {
                flatten_nested(item, out)?;
            }
            Ok(())
        }
        other => Err(CoreError::InvalidInput(format!(
            "unexpected JSON node in parameters: {other}"
        ))),
    }
}

pub fn model_to_json(model: &AnyModel) -> Result<Value> {
    match model {
        AnyModel::ConvNet(net) => {
            let mut layers = Vec::with_capacity(net.params.len());
            for p in &net.params {
                layers.push(match p {
                    None => Value::Null,
                    Some(lp) => json!({
                        "weights": tensor_to_nested(lp.weights.data(), lp.weights.shape())?,
                        "bias": tensor_to_nested(lp.bias.data(), lp.bias.shape())?,
                    }),
                });
            }
            Ok(json!({
                "format_version": FORMAT_VERSION,
                "kind": "convnet",
                "spec": serde_json::to_value(&net.spec)?,
                "parameters": Value::Array(layers),
            }))
        }
        AnyModel::LogReg(m) => Ok(json!({
            "format_version": FORMAT_VERSION,
            "kind": "logreg",
            "spec": { "dim": m.weights.len() },
            "parameters": {
                "weights": Value::Array(m.weights.iter().map(|&x| number(x)).collect::<Result<_>>()?),
                "bias": number(m.bias)?,
            },
        })),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| CoreError::InvalidInput(format!("model document missing `{name}`")))
}

pub fn model_from_json(v: &Value) -> Result<AnyModel> {
    let obj = v
        .as_object()
        .ok_or_else(|| CoreError::InvalidInput("model document is not an object".into()))?;
    let version = field(obj, "format_version")?.as_u64();
    if version != Some(FORMAT_VERSION) {
        return Err(CoreError::InvalidInput(format!(
            "unsupported format_version {version:?}"
        )));
    }
    match field(obj, "kind")?.as_str() {
        Some("convnet") => {
            let spec: ConvNetSpec = serde_json::from_value(field(obj, "spec")?.clone())?;
            let shapes = param_shapes(&spec)?;
            let layers = field(obj, "parameters")?
                .as_array()
                .ok_or_else(|| CoreError::InvalidInput("parameters must be an array".into()))?;
            if layers.len() != shapes.len() {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{} layer entries", shapes.len()),
                    found: format!("{}", layers.len()),
                });
            }
            let mut params = Vec::with_capacity(layers.len());
            for (entry, shape) in layers.iter().zip(&shapes) {
                params.push(match (entry, shape) {
                    (Value::Null, None) => None,
                    (Value::Object(o), Some((w_shape, b_shape))) => {
                        let mut w = Vec::new();
                        flatten_nested(field(o, "weights")?, &mut w)?;
                        let mut b = Vec::new();
                        flatten_nested(field(o, "bias")?, &mut b)?;
                        Some(LayerParams {
                            weights: Tensor::from_vec(w_shape, w)?,
                            bias: Tensor::from_vec(b_shape, b)?,
                        })
                    }
                    _ => {
                        return Err(CoreError::InvalidInput(
                            "parameter entry does not match layer kind".into(),
                        ))
                    }
                });
            }
            Ok(AnyModel::ConvNet(ConvNet::from_params(spec, params)?))
        }
        Some("logreg") => {
            let params = field(obj, "parameters")?
                .as_object()
                .ok_or_else(|| CoreError::InvalidInput("parameters must be an object".into()))?;
            let mut weights = Vec::new();
            flatten_nested(field(params, "weights")?, &mut weights)?;
            let bias = field(params, "bias")?
                .as_f64()
                .ok_or_else(|| CoreError::InvalidInput("bias must be a number".into()))?;
            Ok(AnyModel::LogReg(LogRegModel { weights, bias }))
        }
        other => Err(CoreError::InvalidInput(format!("unknown model kind {other:?}"))),
    }
}

pub fn save_model(model: &AnyModel, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string(&model_to_json(model)?)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&serde_json::from_str(&text)?)
}

fn vote_range_str(v: VoteRange) -> &'static str {
    match v {
        VoteRange::AllIterations => "all_iterations",
        VoteRange::LastHalf => "last_half",
    }
}

fn vote_range_parse(s: &str) -> Result<VoteRange> {
    match s {
        "all_iterations" => Ok(VoteRange::AllIterations),
        "last_half" => Ok(VoteRange::LastHalf),
        other => Err(CoreError::InvalidInput(format!("unknown vote_range `{other}`"))),
    }
}

pub fn ensemble_to_json(ens: &BoostEnsemble<AnyModel, f64>) -> Result<Value> {
    let members = ens
        .members
        .iter()
        .map(|(model, beta_t)| {
            Ok(json!({
                "beta_t": number(*beta_t)?,
                "model": model_to_json(model)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "vote_range": vote_range_str(ens.vote_range),
        "members": Value::Array(members),
    }))
}

pub fn ensemble_from_json(v: &Value) -> Result<BoostEnsemble<AnyModel, f64>> {
    let obj = v
        .as_object()
        .ok_or_else(|| CoreError::InvalidInput("ensemble document is not an object".into()))?;
    if field(obj, "format_version")?.as_u64() != Some(FORMAT_VERSION) {
        return Err(CoreError::InvalidInput("unsupported ensemble format_version".into()));
    }
    let vote_range = vote_range_parse(
        field(obj, "vote_range")?
            .as_str()
            .ok_or_else(|| CoreError::InvalidInput("vote_range must be a string".into()))?,
    )?;
    let members = field(obj, "members")?
        .as_array()
        .ok_or_else(|| CoreError::InvalidInput("members must be an array".into()))?
        .iter()
        .map(|m| {
            let o = m
                .as_object()
                .ok_or_else(|| CoreError::InvalidInput("member is not an object".into()))?;
            let beta_t = field(o, "beta_t")?
                .as_f64()
                .ok_or_else(|| CoreError::InvalidInput("beta_t must be a number".into()))?;
            Ok((model_from_json(field(o, "model")?)?, beta_t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoostEnsemble { members, vote_range })
}

pub fn save_ensemble(ens: &BoostEnsemble<AnyModel, f64>, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string(&ensemble_to_json(ens)?)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_ensemble(path: &Path) -> Result<BoostEnsemble<AnyModel, f64>> {
    let text = std::fs::read_to_string(path)?;
    ensemble_from_json(&serde_json::from_str(&text)?)
}

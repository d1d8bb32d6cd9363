//! Flat `key = value` configuration files (TOML syntax). Each key names a
//! field of the model or the training configuration; unknown keys are errors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use demol_core::model::ModelConfig;
use demol_core::train::TrainConfig;

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn fields<T: Serialize + Default>() -> Map<String, Value> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(map)) => map,
        _ => unreachable!("configuration structs serialize to objects"),
    }
}

fn finish<T: DeserializeOwned>(map: Map<String, Value>, path: &Path) -> Result<T, Failure> {
    serde_json::from_value(Value::Object(map)).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, Failure> {
    let table: toml::Table = text.parse().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let (mut model, mut train) = (fields::<ModelConfig>(), fields::<TrainConfig>());
    for (key, value) in table {
        if value.is_table() {
            return Err(Failure::Usage(format!("{}: `{key}` is a table; the file must be flat", path.display())));
        }
        let value = serde_json::to_value(&value).map_err(|e| Failure::Usage(format!("{}: {key}: {e}", path.display())))?;
        if let Some(slot) = model.get_mut(&key) {
            *slot = value;
        } else if let Some(slot) = train.get_mut(&key) {
            *slot = value;
        } else {
            return Err(Failure::Usage(format!("{}: unknown key `{key}`", path.display())));
        }
    }
    Ok(RunConfig { model: finish(model, path)?, train: finish(train, path)? })
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use demol_core::model::PropLoss;

    fn parse(text: &str) -> Result<RunConfig, Failure> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn keys_route_to_their_struct() {
        let rc = parse("d_atom = 8\nlr = 0.5\nloss_weights = [1.0, 0.0, 0.0, 0.0]\nprop_loss = \"squared\"\nseed = 3\n").unwrap();
        assert_eq!(rc.model.d_atom, 8);
        assert_eq!(rc.model.loss_weights, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rc.model.prop_loss, PropLoss::Squared);
        assert_eq!(rc.train.lr, 0.5);
        assert_eq!(rc.train.seed, 3);
        assert_eq!(rc.train.steps, TrainConfig::default().steps);
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn bad_files_are_usage_errors() {
        for text in ["bogus = 1", "d_atom = \"wide\"", "[model]\nd_atom = 8", "d_atom = "] {
            assert!(matches!(parse(text), Err(Failure::Usage(_))), "{text}");
        }
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Network, Normalization};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    hidden_sizes: Vec<usize>,
    normalization: Normalization,
    layers: Vec<Dense>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            hidden_sizes: self.hidden_sizes(),
            normalization: self.normalization.clone(),
            layers: self.layers.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let network = Network::new(file.layers, file.normalization).map_err(|e| Error::ModelFile(e.to_string()))?;
        if network.hidden_sizes() != file.hidden_sizes {
            return Err(Error::ModelFile(format!(
                "hidden_sizes {:?} disagree with layer shapes {:?}",
                file.hidden_sizes,
                network.hidden_sizes()
            )));
        }
        Ok(network)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DEFAULT_HIDDEN_SIZES;

    fn sample() -> Network {
        let mut net = Network::zeros(&DEFAULT_HIDDEN_SIZES).unwrap();
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            for (j, w) in layer.weights.iter_mut().enumerate() {
                *w = ((i * 31 + j) as f64).sin() / 3.0;
            }
        }
        net
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample();
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json(), net.to_json());
    }

    #[test]
    fn rejects_unknown_version_and_broken_chain() {
        let text = sample().to_json();
        let v2 = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(Network::from_json(&v2), Err(Error::ModelFile(m)) if m.contains("format_version")));

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["layers"][1]["cols"] = serde_json::json!(31);
        assert!(Network::from_json(&value.to_string()).is_err());

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["hidden_sizes"] = serde_json::json!([32, 24]);
        assert!(Network::from_json(&value.to_string()).is_err());
        assert!(Network::from_json("{").is_err());
    }
}

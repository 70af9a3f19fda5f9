//! Boosted stump cascades over haar rectangle features, loaded from the
//! XML serialization used by the common frontal-face models.

use crate::error::{Error, Result};

use super::xml::{self, Element};

/// One weighted rectangle of a haar feature, in base-window units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

impl WeightedRect {
    pub fn area(&self) -> u32 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<WeightedRect>,
}

/// Depth-one decision tree: `left` when the normalized feature value is below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStage {
    pub stumps: Vec<Stump>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub window_width: u32,
    pub window_height: u32,
    pub stages: Vec<CascadeStage>,
    pub features: Vec<HaarFeature>,
}

const BUNDLED_FRONTAL_FACE: &str = include_str!("../../assets/haarcascade_frontalface_default.xml");

impl Cascade {
    /// The stump-based 24x24 frontal face model shipped with the crate.
    pub fn frontal_face() -> Cascade {
        Self::parse(BUNDLED_FRONTAL_FACE).expect("bundled cascade parses")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Cascade> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Cascade> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::CascadeParse {
            path: "/".into(),
            message: format!("not UTF-8: {e}"),
        })?;
        Self::parse(text)
    }

    pub fn parse(text: &str) -> Result<Cascade> {
        let doc = xml::parse(text)?;
        let storage = doc.require("opencv_storage")?;
        let Some(cascade) = storage.child("cascade") else {
            let path = storage.children.first().map(|c| c.path.clone()).unwrap_or_else(|| storage.path.clone());
            return Err(Error::UnsupportedCascade {
                path,
                reason: "no <cascade> node; legacy tree-format cascades are not supported".into(),
            });
        };

        let stage_type = cascade.require("stageType")?.text.trim().to_string();
        if stage_type != "BOOST" {
            return Err(unsupported(cascade, format!("stage type {stage_type}")));
        }
        let feature_type = cascade.require("featureType")?.text.trim().to_string();
        if feature_type != "HAAR" {
            return Err(unsupported(cascade, format!("feature type {feature_type}")));
        }
        let window_width = positive_int(cascade.require("width")?)?;
        let window_height = positive_int(cascade.require("height")?)?;

        let stages_node = cascade.require("stages")?;
        let mut stages = Vec::with_capacity(stages_node.children.len());
        for stage in &stages_node.children {
            stages.push(parse_stage(stage)?);
        }
        if stages.is_empty() {
            return Err(Error::CascadeParse { path: stages_node.path.clone(), message: "no stages".into() });
        }
        if let Some(declared) = cascade.child("stageNum") {
            let n = positive_int(declared)? as usize;
            if n != stages.len() {
                return Err(Error::CascadeParse {
                    path: declared.path.clone(),
                    message: format!("declares {n} stages but {} are present", stages.len()),
                });
            }
        }

        let features_node = cascade.require("features")?;
        let mut features = Vec::with_capacity(features_node.children.len());
        for f in &features_node.children {
            features.push(parse_feature(f, window_width, window_height)?);
        }

        for (si, stage) in stages.iter().enumerate() {
            if let Some(bad) = stage.stumps.iter().find(|s| s.feature >= features.len()) {
                return Err(Error::CascadeParse {
                    path: format!("{}/_[{si}]", stages_node.path),
                    message: format!("feature index {} out of range ({} features)", bad.feature, features.len()),
                });
            }
        }

        Ok(Cascade { window_width, window_height, stages, features })
    }

    pub fn stump_count(&self) -> usize {
        self.stages.iter().map(|s| s.stumps.len()).sum()
    }
}

fn unsupported(node: &Element, reason: String) -> Error {
    Error::UnsupportedCascade { path: node.path.clone(), reason }
}

fn positive_int(node: &Element) -> Result<u32> {
    let v = node.number()?;
    if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::CascadeParse { path: node.path.clone(), message: format!("expected a positive integer, got {v}") });
    }
    Ok(v as u32)
}

fn parse_stage(stage: &Element) -> Result<CascadeStage> {
    let threshold = stage.require("stageThreshold")?.number()?;
    let weak = stage.require("weakClassifiers")?;
    let mut stumps = Vec::with_capacity(weak.children.len());
    for tree in &weak.children {
        let nodes_el = tree.require("internalNodes")?;
        let nodes = nodes_el.numbers()?;
        let leaves_el = tree.require("leafValues")?;
        let leaves = leaves_el.numbers()?;
        if nodes.len() != 4 || leaves.len() != 2 {
            return Err(unsupported(
                nodes_el,
                format!("tree with {} internal values and {} leaves is not a stump", nodes.len(), leaves.len()),
            ));
        }
        let feature = nodes[2];
        if feature < 0.0 || feature.fract() != 0.0 {
            return Err(Error::CascadeParse { path: nodes_el.path.clone(), message: format!("bad feature index {feature}") });
        }
        stumps.push(Stump { feature: feature as usize, threshold: nodes[3], left: leaves[0], right: leaves[1] });
    }
    if stumps.is_empty() {
        return Err(Error::CascadeParse { path: weak.path.clone(), message: "stage without weak classifiers".into() });
    }
    Ok(CascadeStage { stumps, threshold })
}

fn parse_feature(feature: &Element, win_w: u32, win_h: u32) -> Result<HaarFeature> {
    if let Some(tilted) = feature.child("tilted") {
        if tilted.number()? != 0.0 {
            return Err(unsupported(tilted, "tilted haar features".into()));
        }
    }
    let rects_node = feature.require("rects")?;
    let mut rects = Vec::with_capacity(3);
    for r in &rects_node.children {
        let v = r.numbers()?;
        if v.len() != 5 || v[..4].iter().any(|c| *c < 0.0 || c.fract() != 0.0) {
            return Err(Error::CascadeParse { path: r.path.clone(), message: format!("bad rectangle {v:?}") });
        }
        let rect = WeightedRect { x: v[0] as u32, y: v[1] as u32, w: v[2] as u32, h: v[3] as u32, weight: v[4] };
        if rect.w == 0 || rect.h == 0 || rect.x + rect.w > win_w || rect.y + rect.h > win_h {
            return Err(Error::CascadeParse { path: r.path.clone(), message: "rectangle outside base window".into() });
        }
        rects.push(rect);
    }
    if !(2..=3).contains(&rects.len()) {
        return Err(Error::CascadeParse {
            path: rects_node.path.clone(),
            message: format!("expected 2 or 3 rectangles, found {}", rects.len()),
        });
    }
    Ok(HaarFeature { rects })
}

//! `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored (a `#` inside double quotes or
//! glued to a value is literal). Every key must appear in
//! [`REGISTRY`]; values are parsed to the registered type. Missing keys keep
//! their defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{lexicon, read_file, DataError, Result};
use crate::assign::MatchWeights;
use crate::homest::RansacParams;
use crate::metrics::{EvalConfig, OverlapKind};
use crate::textplace::PlacementConfig;
use crate::textprop::PropagationConfig;
use crate::trackersim::AssocConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Real,
    Bool,
    Str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
}

pub type ConfigMap = BTreeMap<String, ConfigValue>;

/// Every accepted key and its type.
pub const REGISTRY: &[(&str, ValueKind)] = &[
    ("ransac.iterations", ValueKind::Int),
    ("ransac.inlier_threshold", ValueKind::Real),
    ("ransac.min_inlier_fraction", ValueKind::Real),
    ("ransac.seed", ValueKind::Int),
    ("placement.density", ValueKind::Real),
    ("placement.mean_word_length", ValueKind::Real),
    ("placement.font_height_min", ValueKind::Real),
    ("placement.font_height_max", ValueKind::Real),
    ("placement.min_region_area", ValueKind::Int),
    ("placement.max_rotation_deg", ValueKind::Real),
    ("placement.lexicon", ValueKind::Str),
    ("placement.seed", ValueKind::Int),
    ("propagation.seed_frame", ValueKind::Int),
    ("propagation.samples_per_edge", ValueKind::Int),
    ("propagation.max_oob_fraction", ValueKind::Real),
    ("propagation.max_restore_error", ValueKind::Real),
    ("match.lambda_c", ValueKind::Real),
    ("match.lambda_l1", ValueKind::Real),
    ("match.lambda_giou", ValueKind::Real),
    ("match.alpha_c", ValueKind::Real),
    ("match.l1_weight", ValueKind::Real),
    ("match.giou_weight", ValueKind::Real),
    ("match.alpha_p", ValueKind::Real),
    ("match.alpha_r", ValueKind::Real),
    ("match.focal_alpha", ValueKind::Real),
    ("match.focal_gamma", ValueKind::Real),
    ("assoc.iou_gate", ValueKind::Real),
    ("assoc.text_weight", ValueKind::Real),
    ("assoc.cost_threshold", ValueKind::Real),
    ("assoc.patience", ValueKind::Int),
    ("eval.iou_threshold", ValueKind::Real),
    ("eval.overlap_kind", ValueKind::Str),
    ("eval.case_sensitive", ValueKind::Bool),
    ("eval.ignore_token", ValueKind::Str),
    ("scene.width", ValueKind::Int),
    ("scene.height", ValueKind::Int),
    ("scene.frames", ValueKind::Int),
    ("scene.flow_noise_sigma", ValueKind::Real),
    ("scene.margin", ValueKind::Int),
    ("scene.motion", ValueKind::Str),
];

pub fn kind_of(key: &str) -> Option<ValueKind> {
    REGISTRY.iter().find(|(k, _)| *k == key).map(|&(_, t)| t)
}

fn parse_value(kind: ValueKind, raw: &str) -> std::result::Result<ConfigValue, String> {
    match kind {
        ValueKind::Int => raw
            .parse::<i64>()
            .map(ConfigValue::Int)
            .map_err(|_| format!("expected an integer, got {raw:?}")),
        ValueKind::Real => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(ConfigValue::Real(v)),
            _ => Err(format!("expected a finite real, got {raw:?}")),
        },
        ValueKind::Bool => match raw {
            "true" => Ok(ConfigValue::Bool(true)),
            "false" => Ok(ConfigValue::Bool(false)),
            _ => Err(format!("expected true or false, got {raw:?}")),
        },
        ValueKind::Str => {
            let unquoted = raw
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(raw);
            Ok(ConfigValue::Str(unquoted.to_owned()))
        }
    }
}

/// Text before a `#` that starts the line or follows whitespace, outside
/// double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    let mut prev_space = true;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted && prev_space => return &line[..i],
            _ => {}
        }
        prev_space = c.is_whitespace();
    }
    line
}

pub fn parse_config(bytes: &[u8], name: &Path) -> Result<ConfigMap> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        DataError::bytes(name, e.valid_up_to() as u64, "config is not valid UTF-8")
    })?;
    let mut map = ConfigMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let content = strip_comment(line).trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| DataError::line(name, n, "expected `key = value`"))?;
        let (key, raw) = (key.trim(), raw.trim());
        let kind = kind_of(key).ok_or_else(|| DataError::UnknownKey {
            path: name.to_path_buf(),
            line: n,
            key: key.to_owned(),
        })?;
        let value = parse_value(kind, raw).map_err(|m| DataError::line(name, n, format!("{key}: {m}")))?;
        if map.insert(key.to_owned(), value).is_some() {
            return Err(DataError::line(name, n, format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<ConfigMap> {
    parse_config(&read_file(path)?, path)
}

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSettings {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub flow_noise_sigma: f64,
    pub margin: usize,
    /// Motion string, e.g. `translate:3,-2`.
    pub motion: String,
}

impl Default for SceneSettings {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            frames: 10,
            flow_noise_sigma: 0.0,
            margin: 16,
            motion: "static".into(),
        }
    }
}

/// All typed configuration, defaults overridden by a [`ConfigMap`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub ransac: RansacParams,
    pub placement: PlacementConfig,
    /// Source of `placement.lexicon`, when not the built-in list.
    pub lexicon_path: Option<PathBuf>,
    pub propagation: PropagationConfig,
    pub matching: MatchWeights,
    pub assoc: AssocConfig,
    pub eval: EvalConfig,
    pub scene: SceneSettings,
}

struct Reader<'a> {
    map: &'a ConfigMap,
}

impl Reader<'_> {
    fn real(&self, key: &str, into: &mut f64) {
        if let Some(ConfigValue::Real(v)) = self.map.get(key) {
            *into = *v;
        }
    }

    fn int(&self, key: &str) -> Option<i64> {
        match self.map.get(key) {
            Some(ConfigValue::Int(v)) => Some(*v),
            _ => None,
        }
    }

    fn count(&self, key: &str, into: &mut usize) -> std::result::Result<(), String> {
        if let Some(v) = self.int(key) {
            *into = usize::try_from(v).map_err(|_| format!("{key} must be >= 0, got {v}"))?;
        }
        Ok(())
    }

    fn seed(&self, key: &str, into: &mut u64) -> std::result::Result<(), String> {
        if let Some(v) = self.int(key) {
            *into = u64::try_from(v).map_err(|_| format!("{key} must be >= 0, got {v}"))?;
        }
        Ok(())
    }

    fn string(&self, key: &str) -> Option<&str> {
        match self.map.get(key) {
            Some(ConfigValue::Str(s)) => Some(s),
            _ => None,
        }
    }
}

impl Settings {
    /// Apply overrides and validate ranges. `base_dir` resolves a relative
    /// `placement.lexicon` path.
    pub fn from_map(map: &ConfigMap, base_dir: &Path) -> std::result::Result<Settings, String> {
        let r = Reader { map };
        let mut s = Settings::default();

        r.count("ransac.iterations", &mut s.ransac.iterations)?;
        r.real("ransac.inlier_threshold", &mut s.ransac.inlier_threshold);
        r.real("ransac.min_inlier_fraction", &mut s.ransac.min_inlier_fraction);
        r.seed("ransac.seed", &mut s.ransac.seed)?;
        s.ransac.validate().map_err(|e| e.to_string())?;

        let p = &mut s.placement;
        r.real("placement.density", &mut p.density_target);
        r.real("placement.mean_word_length", &mut p.mean_word_length_target);
        r.real("placement.font_height_min", &mut p.font_height_range[0]);
        r.real("placement.font_height_max", &mut p.font_height_range[1]);
        r.count("placement.min_region_area", &mut p.min_region_area)?;
        r.real("placement.max_rotation_deg", &mut p.max_rotation_deg);
        r.seed("placement.seed", &mut p.seed)?;
        if let Some(path) = r.string("placement.lexicon") {
            let full = base_dir.join(path);
            p.lexicon = lexicon::read_lexicon(&full).map_err(|e| e.to_string())?;
            s.lexicon_path = Some(PathBuf::from(path));
        }
        s.placement.validate().map_err(|e| e.to_string())?;

        let q = &mut s.propagation;
        r.count("propagation.seed_frame", &mut q.seed_frame)?;
        r.count("propagation.samples_per_edge", &mut q.samples_per_edge)?;
        r.real("propagation.max_oob_fraction", &mut q.max_oob_fraction);
        r.real("propagation.max_restore_error", &mut q.max_restore_error);
        q.ransac = s.ransac;
        q.validate(usize::MAX).map_err(|e| e.to_string())?;

        let m = &mut s.matching;
        for (key, field) in [
            ("match.lambda_c", &mut m.lambda_c),
            ("match.lambda_l1", &mut m.lambda_l1),
            ("match.lambda_giou", &mut m.lambda_giou),
            ("match.alpha_c", &mut m.alpha_c),
            ("match.l1_weight", &mut m.l1_weight),
            ("match.giou_weight", &mut m.giou_weight),
            ("match.alpha_p", &mut m.alpha_p),
            ("match.alpha_r", &mut m.alpha_r),
            ("match.focal_alpha", &mut m.focal_alpha),
            ("match.focal_gamma", &mut m.focal_gamma),
        ] {
            r.real(key, field);
            if *field < 0.0 {
                return Err(format!("{key} must be >= 0"));
            }
        }
        if m.focal_alpha > 1.0 {
            return Err("match.focal_alpha must lie in [0, 1]".into());
        }

        let a = &mut s.assoc;
        r.real("assoc.iou_gate", &mut a.iou_gate);
        r.real("assoc.text_weight", &mut a.text_weight);
        r.real("assoc.cost_threshold", &mut a.cost_threshold);
        r.count("assoc.patience", &mut a.patience)?;
        a.weights = s.matching;
        a.validate()?;

        let e = &mut s.eval;
        r.real("eval.iou_threshold", &mut e.iou_threshold);
        if let Some(k) = r.string("eval.overlap_kind") {
            e.overlap_kind = match k {
                "aabb" => OverlapKind::Aabb,
                "polygon" => OverlapKind::Polygon,
                other => return Err(format!("eval.overlap_kind must be aabb or polygon, got {other:?}")),
            };
        }
        if let Some(ConfigValue::Bool(b)) = map.get("eval.case_sensitive") {
            e.case_sensitive = *b;
        }
        if let Some(t) = r.string("eval.ignore_token") {
            e.ignore_token = t.to_owned();
        }
        e.validate().map_err(|e| e.to_string())?;

        let sc = &mut s.scene;
        r.count("scene.width", &mut sc.width)?;
        r.count("scene.height", &mut sc.height)?;
        r.count("scene.frames", &mut sc.frames)?;
        r.real("scene.flow_noise_sigma", &mut sc.flow_noise_sigma);
        r.count("scene.margin", &mut sc.margin)?;
        if let Some(m) = r.string("scene.motion") {
            sc.motion = m.to_owned();
        }
        if sc.width == 0 || sc.height == 0 || sc.frames == 0 {
            return Err("scene.width, scene.height and scene.frames must be >= 1".into());
        }
        if sc.flow_noise_sigma < 0.0 {
            return Err("scene.flow_noise_sigma must be >= 0".into());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let map = read_config(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Settings::from_map(&map, base).map_err(|m| DataError::invalid(path, m))
    }

    /// Effective value of every registered key.
    pub fn snapshot(&self) -> BTreeMap<&'static str, Value> {
        let p = &self.placement;
        let m = &self.matching;
        let entries: Vec<(&'static str, Value)> = vec![
            ("ransac.iterations", json!(self.ransac.iterations)),
            ("ransac.inlier_threshold", json!(self.ransac.inlier_threshold)),
            ("ransac.min_inlier_fraction", json!(self.ransac.min_inlier_fraction)),
            ("ransac.seed", json!(self.ransac.seed)),
            ("placement.density", json!(p.density_target)),
            ("placement.mean_word_length", json!(p.mean_word_length_target)),
            ("placement.font_height_min", json!(p.font_height_range[0])),
            ("placement.font_height_max", json!(p.font_height_range[1])),
            ("placement.min_region_area", json!(p.min_region_area)),
            ("placement.max_rotation_deg", json!(p.max_rotation_deg)),
            (
                "placement.lexicon",
                json!(self
                    .lexicon_path
                    .as_ref()
                    .map(|l| l.display().to_string())
                    .unwrap_or_else(|| "builtin".into())),
            ),
            ("placement.seed", json!(p.seed)),
            ("propagation.seed_frame", json!(self.propagation.seed_frame)),
            ("propagation.samples_per_edge", json!(self.propagation.samples_per_edge)),
            ("propagation.max_oob_fraction", json!(self.propagation.max_oob_fraction)),
            ("propagation.max_restore_error", json!(self.propagation.max_restore_error)),
            ("match.lambda_c", json!(m.lambda_c)),
            ("match.lambda_l1", json!(m.lambda_l1)),
            ("match.lambda_giou", json!(m.lambda_giou)),
            ("match.alpha_c", json!(m.alpha_c)),
            ("match.l1_weight", json!(m.l1_weight)),
            ("match.giou_weight", json!(m.giou_weight)),
            ("match.alpha_p", json!(m.alpha_p)),
            ("match.alpha_r", json!(m.alpha_r)),
            ("match.focal_alpha", json!(m.focal_alpha)),
            ("match.focal_gamma", json!(m.focal_gamma)),
            ("assoc.iou_gate", json!(self.assoc.iou_gate)),
            ("assoc.text_weight", json!(self.assoc.text_weight)),
            ("assoc.cost_threshold", json!(self.assoc.cost_threshold)),
            ("assoc.patience", json!(self.assoc.patience)),
            ("eval.iou_threshold", json!(self.eval.iou_threshold)),
            ("eval.overlap_kind", json!(self.eval.overlap_kind)),
            ("eval.case_sensitive", json!(self.eval.case_sensitive)),
            ("eval.ignore_token", json!(self.eval.ignore_token)),
            ("scene.width", json!(self.scene.width)),
            ("scene.height", json!(self.scene.height)),
            ("scene.frames", json!(self.scene.frames)),
            ("scene.flow_noise_sigma", json!(self.scene.flow_noise_sigma)),
            ("scene.margin", json!(self.scene.margin)),
            ("scene.motion", json!(self.scene.motion)),
        ];
        entries.into_iter().collect()
    }
}

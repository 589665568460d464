use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::MappingKind;

/// Version of the serialized [`NetworkConfig`] document.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The six reference architectures.
pub const TABLE2_NAMES: [&str; 6] = ["ResNet-32", "ResNet-50", "BReG-Net-32", "BReG-Net-50", "BReG-NeXt-32", "BReG-NeXt-50"];

/// Depths of the BReG-NeXt depth series.
pub const DEPTH_SERIES: [usize; 8] = [26, 32, 38, 44, 50, 56, 62, 68];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    /// Softmax over `classes` categories.
    Categorical { classes: usize },
    /// Linear (valence, arousal) regression.
    Dimensional,
}

impl Head {
    pub fn outputs(&self) -> usize {
        match self {
            Head::Categorical { classes } => *classes,
            Head::Dimensional => 2,
        }
    }

    pub fn categorical() -> Self {
        Head::Categorical { classes: 8 }
    }

    pub fn categorical_classes(&self) -> Option<usize> {
        match self {
            Head::Categorical { classes } => Some(*classes),
            Head::Dimensional => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub channels: usize,
    pub stride: usize,
}

/// One row of residual units sharing a width. A transition stage's first
/// unit halves the spatial extent and widens the channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub units: usize,
    pub channels: usize,
    pub transition: bool,
}

impl StageConfig {
    pub const fn new(units: usize, channels: usize, transition: bool) -> Self {
        Self { units, channels, transition }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualUnitConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub bypass: MappingKind,
}

impl ResidualUnitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("residual unit channels must be positive".into()));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Config(format!("residual unit stride must be 1 or 2, got {}", self.stride)));
        }
        if self.out_channels < self.in_channels {
            return Err(Error::Config(format!(
                "bypass cannot narrow {} channels to {}",
                self.in_channels, self.out_channels
            )));
        }
        if self.stride == 1 && self.out_channels != self.in_channels {
            return Err(Error::Config(format!(
                "a non-transition unit must keep its width ({} → {})",
                self.in_channels, self.out_channels
            )));
        }
        self.bypass.validate()
    }
}

/// Declarative architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub schema_version: u32,
    pub name: String,
    /// Input height, width, channels.
    pub input: [usize; 3],
    pub stem: StemConfig,
    pub stages: Vec<StageConfig>,
    pub bypass: MappingKind,
    pub head: Head,
}

impl NetworkConfig {
    pub fn new(name: &str, stem: StemConfig, stages: Vec<StageConfig>, bypass: MappingKind) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            name: name.into(),
            input: [64, 64, 3],
            stem,
            stages,
            bypass,
            head: Head::categorical(),
        }
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn with_bypass(mut self, bypass: MappingKind) -> Self {
        self.bypass = bypass;
        self
    }

    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.input[0] = height;
        self.input[1] = width;
        self
    }

    pub fn unit_counts(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.units).collect()
    }

    pub fn total_units(&self) -> usize {
        self.stages.iter().map(|s| s.units).sum()
    }

    /// Convolution layers plus the fully connected head.
    pub fn weighted_layers(&self) -> usize {
        1 + 2 * self.total_units() + 1
    }

    /// Per-unit configurations in network order.
    pub fn units(&self) -> Vec<ResidualUnitConfig> {
        let mut width = self.stem.channels;
        let mut out = Vec::with_capacity(self.total_units());
        for stage in &self.stages {
            for u in 0..stage.units {
                let stride = if stage.transition && u == 0 { 2 } else { 1 };
                out.push(ResidualUnitConfig {
                    in_channels: width,
                    out_channels: stage.channels,
                    stride,
                    bypass: self.bypass,
                });
                width = stage.channels;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.input.contains(&0) {
            return Err(Error::Config(format!("input extent {:?} must be positive", self.input)));
        }
        if self.stem.channels == 0 || self.stem.stride == 0 {
            return Err(Error::Config("stem needs positive channels and stride".into()));
        }
        if self.stages.is_empty() || self.stages.iter().any(|s| s.units == 0) {
            return Err(Error::Config("every stage needs at least one unit".into()));
        }
        let mut prev = self.stem.channels;
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels < prev {
                return Err(Error::Config(format!("stage {i} narrows the network from {prev} to {}", s.channels)));
            }
            if s.channels != prev && !s.transition {
                return Err(Error::Config(format!("stage {i} changes width without a transition unit")));
            }
            prev = s.channels;
        }
        if self.head.outputs() == 0 {
            return Err(Error::Config("head must have at least one output".into()));
        }
        for unit in self.units() {
            unit.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn breg_stages(units: [usize; 5]) -> Vec<StageConfig> {
    let widths = [32, 64, 64, 128, 128];
    let transitions = [false, true, false, true, false];
    (0..5).map(|i| StageConfig::new(units[i], widths[i], transitions[i])).collect()
}

fn breg_stem() -> StemConfig {
    StemConfig { channels: 32, stride: 1 }
}

/// One of the six reference architectures, by (case-insensitive) name.
pub fn table2_config(name: &str) -> Result<NetworkConfig> {
    let key = name.to_ascii_lowercase();
    let resnet_stem = StemConfig { channels: 64, stride: 2 };
    let cfg = match key.as_str() {
        "resnet-32" => NetworkConfig::new(
            "ResNet-32",
            resnet_stem,
            vec![
                StageConfig::new(3, 64, false),
                StageConfig::new(3, 128, true),
                StageConfig::new(5, 256, true),
                StageConfig::new(3, 512, true),
            ],
            MappingKind::Identity,
        ),
        "resnet-50" => NetworkConfig::new(
            "ResNet-50",
            resnet_stem,
            vec![
                StageConfig::new(8, 64, false),
                StageConfig::new(1, 128, true),
                StageConfig::new(7, 128, false),
                StageConfig::new(1, 256, true),
                StageConfig::new(7, 256, false),
            ],
            MappingKind::Identity,
        ),
        "breg-net-32" => NetworkConfig::new("BReG-Net-32", breg_stem(), breg_stages([5, 1, 4, 1, 4]), MappingKind::Arctan),
        "breg-net-50" => NetworkConfig::new("BReG-Net-50", breg_stem(), breg_stages([8, 1, 7, 1, 7]), MappingKind::Arctan),
        "breg-next-32" => {
            NetworkConfig::new("BReG-NeXt-32", breg_stem(), breg_stages([4, 1, 5, 1, 4]), MappingKind::Adaptive)
        }
        "breg-next-50" => {
            NetworkConfig::new("BReG-NeXt-50", breg_stem(), breg_stages([7, 1, 8, 1, 7]), MappingKind::Adaptive)
        }
        _ => return Err(Error::UnknownArchitecture(name.into())),
    };
    Ok(cfg)
}

/// BReG-NeXt at `layers` depth: each +6 adds one unit to every
/// non-transition stage of the 50-layer network.
pub fn depth_config(layers: usize) -> Result<NetworkConfig> {
    if !DEPTH_SERIES.contains(&layers) {
        return Err(Error::Config(format!("depth {layers} is not in the series {DEPTH_SERIES:?}")));
    }
    let step = layers as isize - 50;
    let k = step / 6;
    let grow = |base: isize| (base + k) as usize;
    Ok(NetworkConfig::new(
        &format!("BReG-NeXt-{layers}"),
        breg_stem(),
        breg_stages([grow(7), 1, grow(8), 1, grow(7)]),
        MappingKind::Adaptive,
    ))
}

/// Resolves any reference name or `BReG-NeXt-<depth>` from the series.
pub fn config_by_name(name: &str) -> Result<NetworkConfig> {
    if let Ok(cfg) = table2_config(name) {
        return Ok(cfg);
    }
    let lower = name.to_ascii_lowercase();
    if let Some(depth) = lower.strip_prefix("breg-next-").and_then(|d| d.parse::<usize>().ok()) {
        if DEPTH_SERIES.contains(&depth) {
            return depth_config(depth);
        }
    }
    Err(Error::UnknownArchitecture(name.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_unit_counts() {
        assert_eq!(table2_config("BReG-NeXt-50").unwrap().unit_counts(), vec![7, 1, 8, 1, 7]);
        assert_eq!(table2_config("BReG-NeXt-32").unwrap().unit_counts(), vec![4, 1, 5, 1, 4]);
        assert_eq!(table2_config("BReG-Net-32").unwrap().unit_counts(), vec![5, 1, 4, 1, 4]);
        assert_eq!(table2_config("BReG-Net-50").unwrap().unit_counts(), vec![8, 1, 7, 1, 7]);
        let net = table2_config("breg-net-32").unwrap();
        assert_eq!(net.bypass, MappingKind::Arctan);
        assert!(matches!(table2_config("VGG-16"), Err(Error::UnknownArchitecture(_))));
    }

    #[test]
    fn resnet_uses_identity_bypass() {
        for name in ["ResNet-32", "ResNet-50"] {
            let cfg = table2_config(name).unwrap();
            assert!(cfg.units().iter().all(|u| u.bypass == MappingKind::Identity));
        }
    }

    #[test]
    fn depth_series_rule() {
        assert_eq!(depth_config(50).unwrap(), table2_config("BReG-NeXt-50").unwrap());
        assert_eq!(depth_config(32).unwrap(), table2_config("BReG-NeXt-32").unwrap());
        assert_eq!(depth_config(56).unwrap().unit_counts(), vec![8, 1, 9, 1, 8]);
        assert_eq!(depth_config(26).unwrap().unit_counts(), vec![3, 1, 4, 1, 3]);
        assert!(depth_config(51).is_err());
        assert!(depth_config(74).is_err());
        for d in DEPTH_SERIES {
            assert_eq!(depth_config(d).unwrap().weighted_layers(), d);
        }
    }

    #[test]
    fn breg_layer_counts_match_names() {
        for name in &TABLE2_NAMES[2..] {
            let cfg = table2_config(name).unwrap();
            let depth: usize = name.rsplit('-').next().unwrap().parse().unwrap();
            assert_eq!(cfg.weighted_layers(), depth, "{name}");
        }
    }

    #[test]
    fn all_reference_configs_validate() {
        for name in TABLE2_NAMES {
            table2_config(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn invalid_stage_lists_rejected() {
        let mut cfg = table2_config("BReG-NeXt-32").unwrap();
        cfg.stages[1].channels = 16;
        assert!(cfg.validate().is_err());
        let mut cfg = table2_config("BReG-NeXt-32").unwrap();
        cfg.stages[1].transition = false;
        assert!(cfg.validate().is_err());
        let mut cfg = table2_config("BReG-NeXt-32").unwrap();
        cfg.stages.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unit_config_rules() {
        let ok = ResidualUnitConfig { in_channels: 32, out_channels: 64, stride: 2, bypass: MappingKind::Adaptive };
        ok.validate().unwrap();
        let narrowing = ResidualUnitConfig { in_channels: 64, out_channels: 32, ..ok };
        assert!(narrowing.validate().is_err());
        let widening_in_place = ResidualUnitConfig { stride: 1, ..ok };
        assert!(widening_in_place.validate().is_err());
    }

    #[test]
    fn json_document_round_trips() {
        let cfg = table2_config("BReG-NeXt-50").unwrap().with_head(Head::Dimensional);
        let text = cfg.to_json().unwrap();
        assert!(text.contains("\"schema_version\": 1"));
        assert_eq!(NetworkConfig::from_json(&text).unwrap(), cfg);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(NetworkConfig::from_json(&bumped).is_err());
    }
}

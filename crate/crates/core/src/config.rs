//! The substrate `config` file: plain-text TOML key/value pairs.
//!
//! ```toml
//! [decay]
//! initial_strength = 1.0
//! half_life_days = 7.0
//! reinforcement_growth = 2.0
//! half_life_cap_days = 365.0
//! recall_threshold = 0.05
//!
//! [gate]
//! core_min_sessions = 3
//! anchor_min_cycles = 10
//!
//! [retrieval]
//! rrf_constant = 60.0
//! lists_required = 1
//!
//! [router]
//! temporal_markers = ["when", "before", "after", "first", "last", "changed"]
//! directive_markers = ["should", "prefer", "always", "never", "how do i"]
//! newest_first_markers = ["last", "latest", "recent", "recently"]
//!
//! [consolidation]
//! min_occurrences = 3
//! min_sessions = 3
//! jaccard_threshold = 0.5
//! ```
//!
//! Every section and key is optional; missing values take the defaults above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dreamcycle::PatternConfig;
use crate::error::{Error, Result};
use crate::retrieval::FusionConfig;
use crate::router::RouterConfig;
use crate::temporal::{DecayParams, Span};
use crate::wisdom::GateConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EngineConfig {
    pub decay: DecayParams,
    pub gate: GateConfig,
    pub fusion: FusionConfig,
    pub router: RouterConfig,
    pub consolidation: PatternConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecaySection {
    initial_strength: f64,
    half_life_days: f64,
    reinforcement_growth: f64,
    half_life_cap_days: f64,
    recall_threshold: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        let d = DecayParams::default();
        DecaySection {
            initial_strength: d.initial_strength,
            half_life_days: d.half_life.as_days(),
            reinforcement_growth: d.reinforcement_growth,
            half_life_cap_days: d.half_life_cap.as_days(),
            recall_threshold: d.recall_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    decay: DecaySection,
    gate: GateConfig,
    retrieval: FusionConfig,
    router: RouterConfig,
    consolidation: PatternConfig,
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let config = EngineConfig {
            decay: DecayParams {
                initial_strength: file.decay.initial_strength,
                half_life: Span::from_days_f64(file.decay.half_life_days),
                reinforcement_growth: file.decay.reinforcement_growth,
                half_life_cap: Span::from_days_f64(file.decay.half_life_cap_days),
                recall_threshold: file.decay.recall_threshold,
            },
            gate: file.gate,
            fusion: file.retrieval,
            router: file.router,
            consolidation: file.consolidation,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.decay
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.gate
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.fusion.rrf_constant > 0.0) || self.fusion.lists_required == 0 {
            return Err(Error::Config(
                "retrieval.rrf_constant must be > 0 and lists_required >= 1".into(),
            ));
        }
        self.consolidation
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let file = ConfigFile {
            decay: DecaySection {
                initial_strength: self.decay.initial_strength,
                half_life_days: self.decay.half_life.as_days(),
                reinforcement_growth: self.decay.reinforcement_growth,
                half_life_cap_days: self.decay.half_life_cap.as_days(),
                recall_threshold: self.decay.recall_threshold,
            },
            gate: self.gate,
            retrieval: self.fusion,
            router: self.router.clone(),
            consolidation: self.consolidation,
        };
        toml::to_string(&file).expect("config sections are plain data")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

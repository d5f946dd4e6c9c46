//! Experiment configuration, presets and sweep axes.

use std::fmt;
use std::str::FromStr;

use secnoma_core::{EavesdropperPosition, EnvConfig, ModelKind, NodeLayout};
use secnoma_learn::{AgentConfig, AgentKind, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub method: AgentKind,
    /// Places the eavesdropper at a reference spot, overriding the two
    /// eavesdropper distances of `env.layout`.
    pub eavesdropper: Option<EavesdropperPosition>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub training: TrainConfig,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Preset::Desk.config()
    }
}

impl ExperimentConfig {
    /// Environment with the eavesdropper override applied.
    pub fn env_config(&self) -> EnvConfig {
        let mut env = self.env;
        if let Some(p) = self.eavesdropper {
            env.layout = env.layout.with_eavesdropper(p);
        }
        env
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.env_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.agent
            .validate()
            .map_err(|e| HarnessError::Config(format!("agent: {e}")))?;
        self.training
            .validate()
            .map_err(|e| HarnessError::Config(format!("training: {e}")))?;
        Ok(())
    }

    /// Label of the eavesdropper placement: `A`, `B`, `C` or `custom`.
    pub fn scenario_label(&self) -> String {
        let layout = self.env_config().layout;
        for p in [
            EavesdropperPosition::A,
            EavesdropperPosition::B,
            EavesdropperPosition::C,
        ] {
            if layout == NodeLayout::scenario(p) {
                return format!("{p:?}");
            }
        }
        "custom".into()
    }

    /// Parses JSON on top of `base`: keys present in the file replace the
    /// preset's, nested objects merge key by key, unknown keys are rejected.
    pub fn from_json_over(base: &ExperimentConfig, text: &str) -> Result<Self, HarnessError> {
        let overlay: Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config is not valid JSON: {e}")))?;
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge(&mut merged, overlay);
        let cfg: ExperimentConfig =
            serde_json::from_value(merged).map_err(|e| HarnessError::Config(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 200 episodes of 200 slots, 64-unit layers, sparse updates.
    Desk,
    /// Reference scale: 512-unit layers, 100 episodes of 2000 slots, one
    /// update per slot.
    Paper,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let desk = ExperimentConfig {
            name: "experiment".into(),
            method: AgentKind::Masrddpg,
            eavesdropper: Some(EavesdropperPosition::B),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            training: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
        };
        match self {
            Preset::Desk => desk,
            Preset::Paper => ExperimentConfig {
                env: EnvConfig {
                    episode_length: 2000,
                    ..desk.env
                },
                agent: AgentConfig {
                    hidden_width: 512,
                    recurrent_width: 512,
                    ..desk.agent
                },
                training: TrainConfig {
                    episodes: 100,
                    update_every: 1,
                    updates_per_round: 1,
                },
                ..desk
            },
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Uncertainty,
    EvePosition,
    BatteryMax,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Uncertainty => "uncertainty",
            SweepAxis::EvePosition => "eve-position",
            SweepAxis::BatteryMax => "battery-max",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertainty" => Ok(SweepAxis::Uncertainty),
            "eve-position" => Ok(SweepAxis::EvePosition),
            "battery-max" => Ok(SweepAxis::BatteryMax),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected uncertainty, eve-position or battery-max)"
            )),
        }
    }
}

/// One point on a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AxisValue {
    /// Relative uncertainty, a fraction of the nominal value.
    Fraction(f64),
    Position(EavesdropperPosition),
    /// Battery capacity, J.
    Joules(f64),
}

impl AxisValue {
    pub fn parse(axis: SweepAxis, s: &str) -> Result<Self, String> {
        let s = s.trim();
        let number = |t: &str| t.parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
        match axis {
            SweepAxis::Uncertainty => {
                let v = match s.strip_suffix('%') {
                    Some(p) => number(p.trim())? / 100.0,
                    None => number(s)?,
                };
                if !(0.0..1.0).contains(&v) {
                    return Err(format!("uncertainty `{s}` must lie in [0%, 100%)"));
                }
                Ok(AxisValue::Fraction(v))
            }
            SweepAxis::EvePosition => s.parse().map(AxisValue::Position),
            SweepAxis::BatteryMax => {
                let v = number(s.strip_suffix('J').unwrap_or(s).trim())?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(format!("battery capacity `{s}` must be positive"));
                }
                Ok(AxisValue::Joules(v))
            }
        }
    }

    pub fn parse_list(axis: SweepAxis, list: &str) -> Result<Vec<Self>, String> {
        let values: Vec<Self> = list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| Self::parse(axis, t))
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err("the value list is empty".into());
        }
        Ok(values)
    }

    pub fn label(&self) -> String {
        match self {
            AxisValue::Fraction(v) => format!("{}%", v * 100.0),
            AxisValue::Position(p) => format!("{p:?}"),
            AxisValue::Joules(v) => format!("{v}J"),
        }
    }

    /// `base` with this value applied.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match *self {
            AxisValue::Fraction(d) => {
                cfg.env.uncertainty.channel_delta = d;
                cfg.env.uncertainty.battery_delta = d;
            }
            AxisValue::Position(p) => cfg.eavesdropper = Some(p),
            AxisValue::Joules(cap) => {
                cfg.env.pap_battery_capacity = cap;
                cfg.env.sap_battery_capacity = cap;
            }
        }
        cfg
    }
}

/// Whether sweeping `axis` changes anything under `cfg`.
pub fn check_axis(cfg: &ExperimentConfig, axis: SweepAxis) -> Result<(), HarnessError> {
    if axis == SweepAxis::Uncertainty && cfg.env.uncertainty.kind == ModelKind::Exact {
        return Err(HarnessError::Config(
            "an uncertainty sweep needs a non-exact uncertainty model (set env.uncertainty.kind)".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_b_distances() {
        let env = ExperimentConfig::default().env_config();
        assert_eq!(env.layout.distances().pap_eve, 160.0);
        assert_eq!(env.layout.distances().sap_eve, 200.0);
        assert_eq!(ExperimentConfig::default().scenario_label(), "B");
    }

    #[test]
    fn round_trip_is_idempotent() {
        for p in [Preset::Desk, Preset::Paper] {
            let cfg = p.config();
            let once = ExperimentConfig::from_json_over(&cfg, &cfg.to_json()).unwrap();
            assert_eq!(once, cfg);
            let twice = ExperimentConfig::from_json_over(&Preset::Desk.config(), &once.to_json()).unwrap();
            assert_eq!(twice, once);
        }
    }

    #[test]
    fn overlay_merges_nested_keys() {
        let base = Preset::Desk.config();
        let cfg = ExperimentConfig::from_json_over(
            &base,
            r#"{"method": "ddpg", "env": {"episode_length": 10}, "seeds": [7]}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, AgentKind::Ddpg);
        assert_eq!(cfg.env.episode_length, 10);
        assert_eq!(cfg.env.pap_battery_capacity, base.env.pap_battery_capacity);
        assert_eq!(cfg.seeds, vec![7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = Preset::Desk.config();
        assert!(ExperimentConfig::from_json_over(&base, r#"{"mehtod": "ddpg"}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"env": {"slots": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::from_json_over(&base, "not json").is_err());
    }

    #[test]
    fn axis_values_parse() {
        let u = AxisValue::parse_list(SweepAxis::Uncertainty, "0,10%,20%").unwrap();
        assert_eq!(
            u,
            vec![
                AxisValue::Fraction(0.0),
                AxisValue::Fraction(0.1),
                AxisValue::Fraction(0.2)
            ]
        );
        assert_eq!(u[1].label(), "10%");
        assert_eq!(
            AxisValue::parse_list(SweepAxis::EvePosition, "A, c").unwrap(),
            vec![
                AxisValue::Position(EavesdropperPosition::A),
                AxisValue::Position(EavesdropperPosition::C)
            ]
        );
        assert_eq!(
            AxisValue::parse(SweepAxis::BatteryMax, "15J").unwrap(),
            AxisValue::Joules(15.0)
        );
        assert!(AxisValue::parse_list(SweepAxis::BatteryMax, "").is_err());
        assert!(AxisValue::parse(SweepAxis::Uncertainty, "150%").is_err());
        assert!(AxisValue::parse(SweepAxis::BatteryMax, "-1").is_err());
    }

    #[test]
    fn applying_values() {
        let base = Preset::Desk.config();
        let c = AxisValue::Joules(10.0).apply(&base);
        assert_eq!((c.env.pap_battery_capacity, c.env.sap_battery_capacity), (10.0, 10.0));
        let c = AxisValue::Position(EavesdropperPosition::C).apply(&base);
        assert_eq!(c.env_config().layout.distances().pap_eve, 320.0);
        let c = AxisValue::Fraction(0.2).apply(&base);
        assert_eq!(c.env.uncertainty.channel_delta, 0.2);
    }
}

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::ErrorCode;
use crate::budget::{budget_report, EfficiencyBudget};
use crate::config::AppConfig;
use crate::photon::{
    fit_saturation, g2_zero, histogram_coincidences, hom_visibility, photon_metrics, simulate_stream, stability_stats,
    ExperimentKind, StreamConfig, TimeTags,
};
use crate::rig::{Phase, RigSession, BASE_TEMPERATURE_K};
use crate::spectra::{measure_gap, Probe};

pub(super) type CmdResult = Result<Value, (ErrorCode, String)>;

pub(super) fn params<T: DeserializeOwned>(p: &Value) -> Result<T, (ErrorCode, String)> {
    let p = if p.is_null() { json!({}) } else { p.clone() };
    serde_json::from_value(p).map_err(|e| (ErrorCode::InvalidParams, e.to_string()))
}

fn rig_err(e: impl std::fmt::Display) -> (ErrorCode, String) {
    (ErrorCode::RigError, e.to_string())
}

fn analysis_err(e: impl std::fmt::Display) -> (ErrorCode, String) {
    (ErrorCode::AnalysisError, e.to_string())
}

fn to_value<T: Serialize + ?Sized>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

/// Session state as shown to clients. The true offset stays hidden until the
/// holder is secured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub stage_position: [f64; 3],
    pub phase: Phase,
    pub temperature: f64,
    pub ferrule_locked: bool,
    pub time_s: f64,
    pub landing_gap_estimate: Option<f64>,
    pub events: usize,
    /// Revealed once secured (µm).
    pub residual_offset: Option<f64>,
}

impl StateView {
    pub fn of(s: &RigSession) -> Self {
        let st = s.state();
        StateView {
            stage_position: st.stage_position,
            phase: st.phase,
            temperature: st.temperature,
            ferrule_locked: st.ferrule_locked,
            time_s: st.time_s,
            landing_gap_estimate: st.landing_gap_estimate,
            events: st.event_log.len(),
            residual_offset: matches!(st.phase, Phase::Secured | Phase::Cold).then(|| st.residual_offset()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Move {
    dx: f64,
    dy: f64,
    dz: f64,
}

impl Default for Move {
    fn default() -> Self {
        Move { dx: 0.0, dy: 0.0, dz: 0.0 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Cooldown {
    target_k: f64,
    steps: usize,
}

impl Default for Cooldown {
    fn default() -> Self {
        Cooldown { target_k: BASE_TEMPERATURE_K, steps: 20 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Cycles {
    cycles: usize,
}

impl Default for Cycles {
    fn default() -> Self {
        Cycles { cycles: 9 }
    }
}

pub(super) fn session_command(s: &mut RigSession, cmd: &str, p: &Value) -> CmdResult {
    match cmd {
        "get-state" => Ok(to_value(&StateView::of(s))),
        "move-stage" => {
            let m: Move = params(p)?;
            s.move_stage(m.dx, m.dy, m.dz).map_err(rig_err)?;
            Ok(to_value(&StateView::of(s)))
        }
        "acquire-spectrum" => Ok(to_value(&s.acquire_spectrum().map_err(rig_err)?)),
        "vertical-landing" => {
            let gap = s.vertical_landing().map_err(rig_err)?;
            Ok(json!({ "gap_estimate_um": gap, "state": StateView::of(s) }))
        }
        "auto-align" => Ok(to_value(&s.auto_align().map_err(rig_err)?)),
        "secure" => {
            s.secure().map_err(rig_err)?;
            Ok(to_value(&StateView::of(s)))
        }
        "cooldown" => {
            let c: Cooldown = params(p)?;
            let frames = s.run_cooldown(c.target_k, c.steps).map_err(rig_err)?;
            let cfg = s.config().spectra;
            let steps: Vec<Value> = frames
                .iter()
                .map(|(t, spec)| {
                    json!({
                        "temperature_k": t,
                        "gap_um": measure_gap(spec, &cfg).ok().map(|g| g.gap_um),
                        "dips": crate::spectra::find_mode_dips(spec, &s.expected_pillar_at(*t), &cfg),
                    })
                })
                .collect();
            Ok(json!({ "steps": steps, "state": StateView::of(s) }))
        }
        "warm-up" => {
            s.warm_up().map_err(rig_err)?;
            Ok(to_value(&StateView::of(s)))
        }
        "thermal-cycle" => {
            let c: Cycles = params(p)?;
            Ok(to_value(&s.thermal_cycle(c.cycles).map_err(rig_err)?))
        }
        "event-log" => Ok(to_value(s.state().event_log.events())),
        _ => Err((ErrorCode::UnknownCommand, format!("unknown command `{cmd}`"))),
    }
}

/// Noise-free spectrum for the live stream.
pub(super) fn live_spectrum(model: &crate::spectra::ContrastModel, probe: &Probe, band: &crate::spectra::Band) -> Value {
    crate::spectra::synth_reflectivity(model, probe, band, 0.0, 0).map_or(Value::Null, |s| to_value(&s))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhotonRun {
    #[serde(default)]
    pulses: Option<u64>,
    #[serde(default)]
    power: Option<f64>,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_seed() -> u64 {
    crate::DEFAULT_SEED
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Analyze {
    G2 { tags: TimeTags, window_ps: Option<u64>, bin_width_ps: Option<u64> },
    Hom { tags: TimeTags, window_ps: Option<u64>, bin_width_ps: Option<u64> },
    Saturation { points: Vec<(f64, f64)> },
    Stability { series: Vec<(f64, f64)> },
    Budget { budget: EfficiencyBudget, simulated: Option<f64> },
}

pub(super) fn stateless_command(cfg: &AppConfig, cmd: &str, p: &Value) -> CmdResult {
    match cmd {
        "photon-run" => {
            let r: PhotonRun = params(p)?;
            let src = &cfg.source;
            let pulses = r.pulses.unwrap_or(cfg.photon_run.pulses);
            let power = r.power.or(cfg.photon_run.power).unwrap_or_else(|| src.operating_power());
            let hbt = simulate_stream(src, &StreamConfig::new(ExperimentKind::Hbt, pulses, power), r.seed).map_err(analysis_err)?;
            let hom = simulate_stream(src, &StreamConfig::new(ExperimentKind::Hom, pulses, power), r.seed.wrapping_add(1))
                .map_err(analysis_err)?;
            let run = &cfg.photon_run;
            let m = photon_metrics(&hbt.tags, &hom.tags, pulses, &src.detector, &cfg.interferometer, run.window_ps, run.bin_width_ps)
                .map_err(analysis_err)?;
            Ok(json!({ "pulses": pulses, "power": power, "too_short": hbt.too_short, "metrics": m }))
        }
        "analyze" => {
            let a: Analyze = params(p)?;
            let run = &cfg.photon_run;
            match a {
                Analyze::G2 { tags, window_ps, bin_width_ps } => {
                    let h = histogram_coincidences(&tags, window_ps.unwrap_or(run.window_ps), bin_width_ps.unwrap_or(run.bin_width_ps))
                        .map_err(analysis_err)?;
                    Ok(to_value(&g2_zero(&h).map_err(analysis_err)?))
                }
                Analyze::Hom { tags, window_ps, bin_width_ps } => {
                    let h = histogram_coincidences(&tags, window_ps.unwrap_or(run.window_ps), bin_width_ps.unwrap_or(run.bin_width_ps))
                        .map_err(analysis_err)?;
                    Ok(to_value(&hom_visibility(&h).map_err(analysis_err)?))
                }
                Analyze::Saturation { points } => Ok(to_value(&fit_saturation(&points).map_err(analysis_err)?)),
                Analyze::Stability { series } => Ok(to_value(&stability_stats(&series).map_err(analysis_err)?)),
                Analyze::Budget { budget, simulated } => Ok(to_value(&budget_report(&budget, simulated).map_err(analysis_err)?)),
            }
        }
        _ => Err((ErrorCode::UnknownCommand, format!("unknown command `{cmd}`"))),
    }
}

//! Calibration, evaluation and live sessions driven by extracted frames, and
//! the JSON messages exchanged with the browser client.
//!
//! During calibration and evaluation the nine targets are shown in label
//! order, each for a fixed dwell. Frames in the first part of each dwell are
//! discarded while the eyes travel to the new target.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledInstance;
use crate::error::{Error, Result};
use crate::gaze::{GazeClass, NUM_CLASSES};
use crate::metrics::{ClassificationReport, ConfusionMatrix};
use crate::ocular::OcularFeatureVector;
use crate::pipeline::{DropReason, PipelineStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub dwell_s: f64,
    pub discard_s: f64,
    /// Nominal capture rate, recorded in session metadata.
    pub frame_rate: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { dwell_s: 3.0, discard_s: 0.5, frame_rate: 50.0 }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dwell_s.is_finite() && self.dwell_s > 0.0) {
            return Err(Error::Parameter(format!("dwell {} s must be positive", self.dwell_s)));
        }
        if !(self.discard_s >= 0.0 && self.discard_s < self.dwell_s) {
            return Err(Error::Parameter(format!("discard {} s must lie in [0, dwell)", self.discard_s)));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Parameter(format!("frame rate {} must be positive", self.frame_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Calibrating,
    Evaluating,
    Live,
}

/// Client to service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Inbound {
    StartCalibration {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dwell_s: Option<f64>,
    },
    StartEvaluation,
    StartLive,
    Stop,
}

/// Service to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Target {
        class: GazeClass,
    },
    Prediction {
        class: GazeClass,
        confidences: [f64; NUM_CLASSES],
        smoothed: GazeClass,
    },
    Drop {
        reason: DropReason,
    },
    Report(ClassificationReport),
    Stats(PipelineStats),
    /// The session ended, by request or after the last target.
    Stopped {
        mode: Mode,
    },
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}

impl Inbound {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text.trim()).map_err(|e| Error::Parameter(format!("bad message: {e}")))
    }
}

/// What the pipeline produced for one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameEvent {
    /// Features from an extractor running without a model, as when recording.
    Features(OcularFeatureVector),
    Predicted {
        features: OcularFeatureVector,
        class: GazeClass,
        confidences: [f64; NUM_CLASSES],
        smoothed: GazeClass,
    },
    Dropped(DropReason),
}

impl From<&crate::pipeline::FrameOutcome> for FrameEvent {
    fn from(o: &crate::pipeline::FrameOutcome) -> Self {
        match *o {
            crate::pipeline::FrameOutcome::Prediction { features, class, confidences, smoothed } => {
                FrameEvent::Predicted { features, class, confidences, smoothed }
            }
            crate::pipeline::FrameOutcome::Dropped(r) => FrameEvent::Dropped(r),
        }
    }
}

/// One recorded calibration instance and its time since the session start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordedInstance {
    pub instance: LabeledInstance,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    config: SessionConfig,
    mode: Mode,
    dwell_ms: f64,
    target: Option<GazeClass>,
    session_start_ms: u64,
    target_start_ms: u64,
    captured_this_target: usize,
    recorded: Vec<RecordedInstance>,
    confusion: ConfusionMatrix,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            mode: Mode::Idle,
            dwell_ms: config.dwell_s * 1000.0,
            target: None,
            session_start_ms: 0,
            target_start_ms: 0,
            captured_this_target: 0,
            recorded: Vec::new(),
            confusion: ConfusionMatrix::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn target(&self) -> Option<GazeClass> {
        self.target
    }

    pub fn captured_this_target(&self) -> usize {
        self.captured_this_target
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Instances labelled during the current or last calibration.
    pub fn recorded(&self) -> &[RecordedInstance] {
        &self.recorded
    }

    pub fn take_recorded(&mut self) -> Vec<RecordedInstance> {
        std::mem::take(&mut self.recorded)
    }

    /// Applies a client command at time `now_ms`.
    pub fn handle(&mut self, message: &Inbound, now_ms: u64) -> Result<Vec<Outbound>> {
        match *message {
            Inbound::StartCalibration { dwell_s } => {
                let dwell = dwell_s.unwrap_or(self.config.dwell_s);
                SessionConfig { dwell_s: dwell, ..self.config }.validate()?;
                self.dwell_ms = dwell * 1000.0;
                self.recorded.clear();
                Ok(self.begin_targets(Mode::Calibrating, now_ms))
            }
            Inbound::StartEvaluation => {
                self.dwell_ms = self.config.dwell_s * 1000.0;
                self.confusion = ConfusionMatrix::default();
                Ok(self.begin_targets(Mode::Evaluating, now_ms))
            }
            Inbound::StartLive => {
                self.target = None;
                self.mode = Mode::Live;
                Ok(Vec::new())
            }
            Inbound::Stop => Ok(self.finish()),
        }
    }

    fn begin_targets(&mut self, mode: Mode, now_ms: u64) -> Vec<Outbound> {
        let first = GazeClass::from_index(0).expect("class 1");
        self.mode = mode;
        self.target = Some(first);
        self.session_start_ms = now_ms;
        self.target_start_ms = now_ms;
        self.captured_this_target = 0;
        vec![Outbound::Target { class: first }]
    }

    fn finish(&mut self) -> Vec<Outbound> {
        let mode = self.mode;
        let mut out = Vec::new();
        if mode == Mode::Evaluating && self.confusion.total() > 0 {
            let report = ClassificationReport::from_confusion(self.confusion.clone()).expect("non-empty confusion");
            out.push(Outbound::Report(report));
        }
        if mode != Mode::Idle {
            out.push(Outbound::Stopped { mode });
        }
        self.mode = Mode::Idle;
        self.target = None;
        out
    }

    /// Moves through targets whose dwell has elapsed by `now_ms`.
    fn advance(&mut self, now_ms: u64, out: &mut Vec<Outbound>) {
        while let Some(target) = self.target {
            if ((now_ms - self.target_start_ms.min(now_ms)) as f64) < self.dwell_ms {
                return;
            }
            self.target_start_ms += self.dwell_ms.round() as u64;
            self.captured_this_target = 0;
            match GazeClass::from_index(target.index() + 1) {
                Ok(next) => {
                    self.target = Some(next);
                    out.push(Outbound::Target { class: next });
                }
                Err(_) => {
                    out.extend(self.finish());
                    return;
                }
            }
        }
    }

    /// The on-screen target if `now_ms` is past the saccade discard, counting the capture.
    fn capture_target(&mut self, now_ms: u64) -> Option<GazeClass> {
        let target = self.target?;
        let since_switch = now_ms.saturating_sub(self.target_start_ms) as f64;
        if since_switch < self.config.discard_s * 1000.0 {
            return None;
        }
        self.captured_this_target += 1;
        Some(target)
    }

    /// Feeds one pipeline result observed at `now_ms`.
    pub fn tick(&mut self, event: &FrameEvent, now_ms: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if matches!(self.mode, Mode::Calibrating | Mode::Evaluating) {
            self.advance(now_ms, &mut out);
        }
        match (self.mode, event) {
            (Mode::Idle, _) => {}
            (_, FrameEvent::Dropped(reason)) => out.push(Outbound::Drop { reason: *reason }),
            (Mode::Live, FrameEvent::Predicted { class, confidences, smoothed, .. }) => {
                out.push(Outbound::Prediction { class: *class, confidences: *confidences, smoothed: *smoothed })
            }
            (Mode::Live, FrameEvent::Features(_)) => {}
            (Mode::Calibrating, FrameEvent::Features(features) | FrameEvent::Predicted { features, .. }) => {
                if let Some(target) = self.capture_target(now_ms) {
                    self.recorded.push(RecordedInstance {
                        instance: LabeledInstance::new(*features, target),
                        timestamp_ms: now_ms - self.session_start_ms,
                    });
                }
            }
            (Mode::Evaluating, FrameEvent::Predicted { class, .. }) => {
                if let Some(target) = self.capture_target(now_ms) {
                    self.confusion.record(target, *class);
                }
            }
            (Mode::Evaluating, FrameEvent::Features(_)) => {}
        }
        out
    }
}

/// Free-function form of [`SessionState::tick`].
pub fn session_tick(state: &mut SessionState, event: &FrameEvent, now_ms: u64) -> Vec<Outbound> {
    state.tick(event, now_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::REFERENCE_ROWS;

    fn features() -> FrameEvent {
        FrameEvent::Predicted {
            features: OcularFeatureVector::from_array(REFERENCE_ROWS[0]),
            class: GazeClass::new(1).unwrap(),
            confidences: [1.0 / 9.0; 9],
            smoothed: GazeClass::new(1).unwrap(),
        }
    }

    #[test]
    fn wire_format() {
        let start = Inbound::from_json(r#"{"type":"start_calibration","dwell_s":3}"#).unwrap();
        assert_eq!(start, Inbound::StartCalibration { dwell_s: Some(3.0) });
        assert_eq!(Inbound::from_json(r#"{"type":"stop"}"#).unwrap(), Inbound::Stop);
        assert_eq!(Inbound::from_json(r#"{"type":"start_live"}"#).unwrap(), Inbound::StartLive);
        assert!(Inbound::from_json(r#"{"type":"dance"}"#).is_err());
        let t = Outbound::Target { class: GazeClass::new(5).unwrap() };
        assert_eq!(t.to_json(), r#"{"type":"target","class":5}"#);
        let d = Outbound::Drop { reason: DropReason::NoFace };
        assert_eq!(d.to_json(), r#"{"type":"drop","reason":"no-face"}"#);
        let stats = Outbound::Stats(PipelineStats::default()).to_json();
        assert!(stats.starts_with(r#"{"type":"stats","frames_seen":0"#));
        for msg in [t, d] {
            assert_eq!(serde_json::from_str::<Outbound>(&msg.to_json()).unwrap(), msg);
        }
    }

    #[test]
    fn calibration_labels_and_counts() {
        let mut s = SessionState::new(SessionConfig::default()).unwrap();
        let mut targets = vec![];
        for m in s.handle(&Inbound::StartCalibration { dwell_s: None }, 1_000).unwrap() {
            targets.push(m);
        }
        let mut stopped = false;
        // 50 frames per second for the whole cycle plus a little extra.
        for i in 0..(9 * 150 + 10) {
            let now = 1_000 + i * 20;
            for m in s.tick(&features(), now) {
                match m {
                    Outbound::Target { .. } => targets.push(m),
                    Outbound::Stopped { mode } => {
                        assert_eq!(mode, Mode::Calibrating);
                        stopped = true;
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
        assert!(stopped);
        assert_eq!(s.mode(), Mode::Idle);
        let labels: Vec<u8> = targets
            .iter()
            .map(|m| match m {
                Outbound::Target { class } => class.label(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(labels, (1..=9).collect::<Vec<u8>>());
        let rec = s.recorded();
        for c in GazeClass::all() {
            assert_eq!(rec.iter().filter(|r| r.instance.label == c).count(), 125);
        }
        for r in rec {
            let offset = r.timestamp_ms as f64 - r.instance.label.index() as f64 * 3000.0;
            assert!((500.0..3000.0).contains(&offset), "{r:?}");
        }
    }

    #[test]
    fn evaluation_report_support_matches_capture() {
        let mut s = SessionState::new(SessionConfig { dwell_s: 1.0, discard_s: 0.2, frame_rate: 50.0 }).unwrap();
        s.handle(&Inbound::StartEvaluation, 0).unwrap();
        let mut report = None;
        for i in 0..500 {
            for m in s.tick(&features(), i * 20) {
                if let Outbound::Report(r) = m {
                    report = Some(r);
                }
            }
        }
        let r = report.expect("report after last target");
        for c in GazeClass::all() {
            assert_eq!(r.confusion.row_sum(c), 40);
        }
    }

    #[test]
    fn live_and_drops() {
        let mut s = SessionState::new(SessionConfig::default()).unwrap();
        assert!(s.tick(&features(), 0).is_empty());
        s.handle(&Inbound::StartLive, 0).unwrap();
        assert!(matches!(s.tick(&features(), 10)[..], [Outbound::Prediction { .. }]));
        let d = s.tick(&FrameEvent::Dropped(DropReason::IrisFail), 20);
        assert_eq!(d, vec![Outbound::Drop { reason: DropReason::IrisFail }]);
        assert_eq!(s.handle(&Inbound::Stop, 30).unwrap(), vec![Outbound::Stopped { mode: Mode::Live }]);
        assert!(s.handle(&Inbound::StartCalibration { dwell_s: Some(-1.0) }, 40).is_err());
    }

    #[test]
    fn stop_mid_evaluation_reports_partial_results() {
        let mut s = SessionState::new(SessionConfig::default()).unwrap();
        s.handle(&Inbound::StartEvaluation, 0).unwrap();
        for i in 0..100 {
            s.tick(&features(), i * 20);
        }
        let out = s.handle(&Inbound::Stop, 2000).unwrap();
        assert!(matches!(&out[0], Outbound::Report(r) if r.support() == 75));
        assert!(s.target().is_none());
    }

    #[test]
    fn recording_needs_no_prediction() {
        let mut s = SessionState::new(SessionConfig::default()).unwrap();
        s.handle(&Inbound::StartCalibration { dwell_s: Some(1.0) }, 0).unwrap();
        let f = FrameEvent::Features(OcularFeatureVector::from_array(REFERENCE_ROWS[2]));
        for i in 0..50 {
            s.tick(&f, i * 20);
        }
        assert_eq!(s.recorded().len(), 25);
        s.handle(&Inbound::StartEvaluation, 2000).unwrap();
        s.tick(&f, 2600);
        assert_eq!(s.handle(&Inbound::Stop, 2700).unwrap(), vec![Outbound::Stopped { mode: Mode::Evaluating }]);
    }
}

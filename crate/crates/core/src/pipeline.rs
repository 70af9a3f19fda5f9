//! Frame-to-prediction orchestration: face, eye crop, iris and eyelid
//! features, classification and majority-vote smoothing over recent frames.
//!
//! A failed stage turns the frame into a typed drop. Drops touch neither the
//! rolling feature window nor the prediction window.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eye_region::{extract_eye_roi, normalize_roi, EyeProportions, EyeSide};
use crate::face_detect::{detect_face, Cascade};
use crate::gaze::{GazeClass, NUM_CLASSES};
use crate::imgproc::GrayFrame;
use crate::nn::Network;
use crate::ocular::{
    displacement, eye_aspect_ratio, landmarks_from_mask, locate_iris_in, segment_eye, FeatureAccumulator,
    OcularFeatureVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    NoFace,
    IrisFail,
    LandmarkFail,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoFace => "no-face",
            DropReason::IrisFail => "iris-fail",
            DropReason::LandmarkFail => "landmark-fail",
        }
    }
}

/// Majority vote; ties go to the higher mean confidence, then the lower label.
pub fn smooth(votes: &[(GazeClass, f64)]) -> Result<GazeClass> {
    if votes.is_empty() {
        return Err(Error::Parameter("cannot smooth an empty window".into()));
    }
    let mut count = [0usize; NUM_CLASSES];
    let mut confidence = [0.0f64; NUM_CLASSES];
    for &(c, p) in votes {
        count[c.index()] += 1;
        confidence[c.index()] += p;
    }
    let mean = |i: usize| confidence[i] / count[i] as f64;
    let mut best = votes[0].0.index();
    for i in 0..NUM_CLASSES {
        if count[i] == 0 || i == best {
            continue;
        }
        let better = count[i] > count[best] || (count[i] == count[best] && mean(i) > mean(best));
        let tie_lower = count[i] == count[best] && mean(i) == mean(best) && i < best;
        if better || tie_lower {
            best = i;
        }
    }
    Ok(GazeClass::from_index(best).expect("index below nine"))
}

/// The last `capacity` per-frame predictions with their winning confidence.
#[derive(Debug, Clone)]
pub struct PredictionWindow {
    capacity: usize,
    entries: VecDeque<(GazeClass, f64)>,
}

impl PredictionWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Parameter("prediction window must hold at least one frame".into()));
        }
        Ok(Self { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, class: GazeClass, confidence: f64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((class, confidence));
    }

    pub fn smoothed(&self) -> Result<GazeClass> {
        let (head, tail) = self.entries.as_slices();
        smooth(&[head, tail].concat())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub total_ms: f64,
    pub count: u64,
}

impl StageLatency {
    fn add(&mut self, ms: f64) {
        self.total_ms += ms;
        self.count += 1;
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ms / self.count as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DropCounts {
    pub no_face: u64,
    pub iris_fail: u64,
    pub landmark_fail: u64,
}

impl DropCounts {
    pub fn total(&self) -> u64 {
        self.no_face + self.iris_fail + self.landmark_fail
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub frames_seen: u64,
    pub dropped: DropCounts,
    pub detect: StageLatency,
    pub eye_region: StageLatency,
    pub ocular: StageLatency,
    pub classify: StageLatency,
    pub end_to_end: StageLatency,
}

impl PipelineStats {
    fn record_drop(&mut self, reason: DropReason) {
        match reason {
            DropReason::NoFace => self.dropped.no_face += 1,
            DropReason::IrisFail => self.dropped.iris_fail += 1,
            DropReason::LandmarkFail => self.dropped.landmark_fail += 1,
        }
    }
}

/// Milliseconds spent in each stage of one frame; stages not reached stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FrameTimings {
    pub detect_ms: f64,
    pub eye_region_ms: f64,
    pub ocular_ms: f64,
    pub classify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Prediction {
        features: OcularFeatureVector,
        class: GazeClass,
        confidences: [f64; NUM_CLASSES],
        smoothed: GazeClass,
    },
    Dropped(DropReason),
}

/// Frame to feature vector, owning the rolling extrema window.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cascade: Cascade,
    side: EyeSide,
    proportions: EyeProportions,
    target_height: usize,
    min_face_size: usize,
    accumulator: FeatureAccumulator,
}

impl FeatureExtractor {
    pub fn new(cascade: Cascade, config: &Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            cascade,
            side: config.eye_side,
            proportions: config.proportions,
            target_height: config.target_height,
            min_face_size: config.min_face_size,
            accumulator: FeatureAccumulator::new(config.feature_window)?,
        })
    }

    pub fn reset(&mut self) {
        self.accumulator.reset();
    }

    pub fn extract(&mut self, frame: &GrayFrame) -> std::result::Result<OcularFeatureVector, DropReason> {
        self.extract_timed(frame, &mut FrameTimings::default())
    }

    fn extract_timed(
        &mut self,
        frame: &GrayFrame,
        timings: &mut FrameTimings,
    ) -> std::result::Result<OcularFeatureVector, DropReason> {
        let t = Instant::now();
        let face = detect_face(frame, &self.cascade, self.min_face_size).ok().flatten();
        timings.detect_ms = elapsed_ms(t);
        let face = face.ok_or(DropReason::NoFace)?;

        let t = Instant::now();
        let roi = extract_eye_roi(frame, &face, self.side, &self.proportions)
            .and_then(|roi| normalize_roi(&roi, self.target_height));
        timings.eye_region_ms = elapsed_ms(t);
        let roi = roi.map_err(|_| DropReason::IrisFail)?;

        let t = Instant::now();
        let result = (|| {
            let seg = segment_eye(&roi.crop).map_err(|_| DropReason::IrisFail)?;
            let iris = locate_iris_in(&seg, roi.crop.mean_intensity()).map_err(|_| DropReason::IrisFail)?;
            let lm = landmarks_from_mask(&seg.mask).map_err(|_| DropReason::LandmarkFail)?;
            let ear = eye_aspect_ratio(&lm).map_err(|_| DropReason::LandmarkFail)?;
            Ok(self.accumulator.push(ear, displacement(&iris, &lm)))
        })();
        timings.ocular_ms = elapsed_ms(t);
        result
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// One stream: extractor, classifier, smoothing window and statistics.
#[derive(Debug, Clone)]
pub struct Pipeline {
    extractor: FeatureExtractor,
    network: Network,
    window: PredictionWindow,
    stats: PipelineStats,
    last_timings: FrameTimings,
}

impl Pipeline {
    pub fn new(cascade: Cascade, network: Network, config: &Config) -> Result<Self> {
        Ok(Self {
            extractor: FeatureExtractor::new(cascade, config)?,
            network,
            window: PredictionWindow::new(config.smoothing_window)?,
            stats: PipelineStats::default(),
            last_timings: FrameTimings::default(),
        })
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    pub fn last_timings(&self) -> FrameTimings {
        self.last_timings
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Forgets rolling features and past predictions, e.g. when a new session starts.
    pub fn reset(&mut self) {
        self.extractor.reset();
        self.window.clear();
    }

    pub fn process_frame(&mut self, frame: &GrayFrame) -> FrameOutcome {
        let start = Instant::now();
        let mut timings = FrameTimings::default();
        self.stats.frames_seen += 1;
        let outcome = match self.extractor.extract_timed(frame, &mut timings) {
            Err(reason) => {
                self.stats.record_drop(reason);
                FrameOutcome::Dropped(reason)
            }
            Ok(features) => {
                let t = Instant::now();
                let p = self.network.predict(&features);
                self.window.push(p.class, p.confidences[p.class.index()]);
                let smoothed = self.window.smoothed().expect("window holds the frame just pushed");
                timings.classify_ms = elapsed_ms(t);
                FrameOutcome::Prediction { features, class: p.class, confidences: p.confidences, smoothed }
            }
        };
        timings.total_ms = elapsed_ms(start);
        self.stats.detect.add(timings.detect_ms);
        self.stats.eye_region.add(timings.eye_region_ms);
        self.stats.ocular.add(timings.ocular_ms);
        self.stats.classify.add(timings.classify_ms);
        self.stats.end_to_end.add(timings.total_ms);
        self.last_timings = timings;
        outcome
    }
}

/// Anything that yields grayscale frames in order.
pub trait FrameSource: Send {
    /// `None` once the source is exhausted.
    fn next_frame(&mut self) -> Option<Result<GrayFrame>>;
}

/// Numbered PGM/PPM files from a directory, in numeric order of the digits in
/// their names (`frame_2.pgm` before `frame_10.pgm`).
#[derive(Debug, Clone)]
pub struct PgmDirSource {
    files: VecDeque<PathBuf>,
}

impl PgmDirSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| Error::DeviceUnavailable(format!("cannot read frame directory {}: {e}", dir.display())))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"))
            })
            .collect();
        files.sort_by_key(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
            (digits.parse::<u64>().unwrap_or(u64::MAX), name)
        });
        Ok(Self { files: files.into() })
    }

    pub fn remaining(&self) -> usize {
        self.files.len()
    }
}

impl FrameSource for PgmDirSource {
    fn next_frame(&mut self) -> Option<Result<GrayFrame>> {
        self.files.pop_front().map(crate::pnm::read)
    }
}

/// Frames held in memory, mostly for tests and replay.
#[derive(Debug, Clone, Default)]
pub struct VecSource {
    frames: VecDeque<GrayFrame>,
}

impl VecSource {
    pub fn new(frames: Vec<GrayFrame>) -> Self {
        Self { frames: frames.into() }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Option<Result<GrayFrame>> {
        self.frames.pop_front().map(Ok)
    }
}

/// Bounded single-consumer handoff that discards the oldest item when full,
/// so a slow consumer always sees the freshest frames.
#[derive(Debug)]
pub struct HandoffQueue<T> {
    inner: Mutex<HandoffState<T>>,
    ready: Condvar,
    capacity: usize,
}

#[derive(Debug)]
struct HandoffState<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
}

impl<T> HandoffQueue<T> {
    pub fn new(capacity: usize) -> Arc<Self> {
        assert!(capacity > 0, "handoff capacity must be positive");
        Arc::new(Self {
            inner: Mutex::new(HandoffState { items: VecDeque::with_capacity(capacity), closed: false, dropped: 0 }),
            ready: Condvar::new(),
            capacity,
        })
    }

    /// Returns the evicted item, if any.
    pub fn push(&self, item: T) -> Option<T> {
        let mut state = self.inner.lock().expect("handoff lock");
        let evicted = if state.items.len() == self.capacity {
            state.dropped += 1;
            state.items.pop_front()
        } else {
            None
        };
        state.items.push_back(item);
        drop(state);
        self.ready.notify_one();
        evicted
    }

    /// Blocks until an item arrives; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut state = self.inner.lock().expect("handoff lock");
        loop {
            if let Some(item) = state.items.pop_front() {
                return Some(item);
            }
            if state.closed {
                return None;
            }
            state = self.ready.wait(state).expect("handoff lock");
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("handoff lock").closed = true;
        self.ready.notify_all();
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("handoff lock").dropped
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("handoff lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Handoff capacity between a frame source thread and the pipeline.
pub const HANDOFF_CAPACITY: usize = 2;

/// Reads `source` on its own thread and feeds the pipeline through a
/// drop-oldest handoff. Source errors stop the run and are returned.
pub fn run_threaded(
    mut source: Box<dyn FrameSource>,
    pipeline: &mut Pipeline,
    mut on_outcome: impl FnMut(&FrameOutcome, &PipelineStats),
) -> Result<u64> {
    let queue = HandoffQueue::new(HANDOFF_CAPACITY);
    let producer_queue = Arc::clone(&queue);
    let producer = std::thread::spawn(move || -> Result<()> {
        let result = loop {
            match source.next_frame() {
                None => break Ok(()),
                Some(Ok(frame)) => {
                    producer_queue.push(frame);
                }
                Some(Err(e)) => break Err(e),
            }
        };
        producer_queue.close();
        result
    });
    while let Some(frame) = queue.pop() {
        let outcome = pipeline.process_frame(&frame);
        on_outcome(&outcome, pipeline.stats());
    }
    producer.join().map_err(|_| Error::DeviceUnavailable("frame source thread panicked".into()))??;
    Ok(queue.dropped())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(l: u8) -> GazeClass {
        GazeClass::new(l).unwrap()
    }

    #[test]
    fn majority_vote() {
        assert_eq!(smooth(&[(c(1), 0.6), (c(1), 0.6), (c(2), 0.9)]).unwrap(), c(1));
        assert!(smooth(&[]).is_err());
    }

    #[test]
    fn tie_breaks() {
        assert_eq!(smooth(&[(c(3), 0.5), (c(7), 0.8)]).unwrap(), c(7));
        assert_eq!(smooth(&[(c(7), 0.5), (c(3), 0.5)]).unwrap(), c(3));
        assert_eq!(smooth(&[(c(9), 0.4), (c(2), 0.4), (c(9), 0.6), (c(2), 0.6)]).unwrap(), c(2));
    }

    #[test]
    fn window_of_one_is_identity() {
        let mut w = PredictionWindow::new(1).unwrap();
        for l in [3, 5, 5, 1, 9] {
            w.push(c(l), 0.7);
            assert_eq!(w.smoothed().unwrap(), c(l));
        }
        assert!(PredictionWindow::new(0).is_err());
    }

    #[test]
    fn window_keeps_last_entries() {
        let mut w = PredictionWindow::new(3).unwrap();
        for l in [1, 1, 1, 2, 2] {
            w.push(c(l), 0.5);
        }
        assert_eq!(w.len(), 3);
        assert_eq!(w.smoothed().unwrap(), c(2));
    }

    fn simulated_accuracy(m: usize, p: f64, windows: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = c(5);
        let mut hits = 0;
        for _ in 0..windows {
            let votes: Vec<(GazeClass, f64)> = (0..m)
                .map(|_| {
                    if rng.random_bool(p) {
                        (truth, 0.8)
                    } else {
                        let k = rng.random_range(0..NUM_CLASSES - 1);
                        let wrong = if k >= truth.index() { k + 1 } else { k };
                        (GazeClass::from_index(wrong).unwrap(), 0.8)
                    }
                })
                .collect();
            if smooth(&votes).unwrap() == truth {
                hits += 1;
            }
        }
        hits as f64 / windows as f64
    }

    #[test]
    fn smoothing_gain_is_monotone_in_window() {
        let acc: Vec<f64> = [1, 3, 5, 9, 15].iter().map(|&m| simulated_accuracy(m, 0.7, 4000, 1)).collect();
        for w in acc.windows(2) {
            assert!(w[1] >= w[0] - 0.01, "{acc:?}");
        }
        assert!(acc[4] > 0.95);
    }

    #[test]
    fn handoff_drops_oldest() {
        let q = HandoffQueue::new(2);
        assert_eq!(q.push(1), None);
        assert_eq!(q.push(2), None);
        assert_eq!(q.push(3), Some(1));
        assert_eq!(q.dropped(), 1);
        q.close();
        assert_eq!(q.pop(), Some(2));
        assert_eq!(q.pop(), Some(3));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn handoff_across_threads() {
        let q = HandoffQueue::new(2);
        let producer = Arc::clone(&q);
        let handle = std::thread::spawn(move || {
            for i in 0..1000 {
                producer.push(i);
            }
            producer.close();
        });
        let mut last = None;
        let mut received = 0;
        while let Some(v) = q.pop() {
            if let Some(prev) = last {
                assert!(v > prev);
            }
            last = Some(v);
            received += 1;
        }
        handle.join().unwrap();
        assert_eq!(last, Some(999));
        assert_eq!(received + q.dropped() as usize, 1000);
    }

    #[test]
    fn drop_reason_names() {
        assert_eq!(serde_json::to_string(&DropReason::NoFace).unwrap(), "\"no-face\"");
        assert_eq!(serde_json::to_string(&DropReason::LandmarkFail).unwrap(), "\"landmark-fail\"");
        assert_eq!(DropReason::IrisFail.as_str(), "iris-fail");
    }
}

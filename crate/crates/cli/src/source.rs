//! Frame sources selected on the command line.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ocugaze::imgproc::GrayFrame;
use ocugaze::pipeline::{FrameSource, PgmDirSource};
use ocugaze::{Error, Result};

use crate::SourceArgs;

/// Opens the frame directory, or reports the camera as unavailable: this
/// build has no capture backend.
pub fn open(args: &SourceArgs) -> Result<PgmDirSource> {
    if let Some(index) = args.camera {
        return Err(Error::DeviceUnavailable(format!(
            "camera {index}: no capture backend in this build; record frames to a directory and pass --frames"
        )));
    }
    let dir = args.frames.as_ref().expect("clap requires a source");
    let source = PgmDirSource::open(dir)?;
    if source.remaining() == 0 {
        return Err(Error::DeviceUnavailable(format!("no PGM/PPM frames in {}", dir.display())));
    }
    Ok(source)
}

/// Replays a fixed set of frames in a loop at a steady rate until stopped.
pub struct PacedLoop {
    frames: Vec<GrayFrame>,
    next: usize,
    period: Duration,
    due: Option<Instant>,
    stop: Arc<AtomicBool>,
}

impl PacedLoop {
    pub fn new(mut source: PgmDirSource, frame_rate: f64, stop: Arc<AtomicBool>) -> Result<Self> {
        let mut frames = Vec::new();
        while let Some(frame) = source.next_frame() {
            frames.push(frame?);
        }
        Ok(Self { frames, next: 0, period: Duration::from_secs_f64(1.0 / frame_rate), due: None, stop })
    }
}

impl FrameSource for PacedLoop {
    fn next_frame(&mut self) -> Option<Result<GrayFrame>> {
        if self.stop.load(Ordering::Relaxed) {
            return None;
        }
        let due = self.due.get_or_insert_with(Instant::now);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        *due += self.period;
        let frame = self.frames[self.next].clone();
        self.next = (self.next + 1) % self.frames.len();
        Some(Ok(frame))
    }
}

//! Segmentation-based row following: frame accumulation with depth
//! gating, row-sum noise reduction, free-gap search over the column
//! histogram, the proportional law and EMA smoothing.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;

/// One segmentation mask with its aligned depth image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFrame {
    pub width: usize,
    pub height: usize,
    /// 1 marks a plant pixel.
    pub seg: Vec<u8>,
    /// Meters; `f32::INFINITY` where nothing is visible.
    pub depth: Vec<f32>,
    pub timestamp: f64,
}

impl MaskFrame {
    pub fn empty(width: usize, height: usize, timestamp: f64) -> Self {
        Self {
            width,
            height,
            seg: vec![0; width * height],
            depth: vec![f32::INFINITY; width * height],
            timestamp,
        }
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            let row = y * self.width;
            out.seg[row..row + self.width].reverse();
            out.depth[row..row + self.width].reverse();
        }
        out
    }
}

/// Binary control mask and its column histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub width: usize,
    pub height: usize,
    pub ctrl: Vec<u8>,
    pub histogram: Vec<u32>,
}

impl ControlInput {
    pub fn from_mask(width: usize, height: usize, ctrl: Vec<u8>) -> Self {
        let mut histogram = vec![0; width];
        for row in ctrl.chunks_exact(width) {
            for (h, &v) in histogram.iter_mut().zip(row) {
                *h += v as u32;
            }
        }
        Self {
            width,
            height,
            ctrl,
            histogram,
        }
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.ctrl.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
        out.write_all(&bytes)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v_x: f64,
    pub omega_z: f64,
}

impl VelocityCommand {
    pub const STOP: Self = Self { v_x: 0.0, omega_z: 0.0 };

    pub fn new(v_x: f64, omega_z: f64) -> Self {
        Self { v_x, omega_z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowControlConfig {
    /// Number of past masks summed with the current one.
    pub s: usize,
    /// Meters; only pixels strictly closer survive.
    pub d_depth: f64,
    pub noise_fraction: f64,
    pub anomaly_fraction: f64,
    /// rad/(s·px).
    pub omega_gain: f64,
    pub v_max: f64,
    pub alpha_ema: f64,
}

impl Default for RowControlConfig {
    fn default() -> Self {
        Self {
            s: 4,
            d_depth: 5.0,
            noise_fraction: 0.03,
            anomaly_fraction: 0.8,
            omega_gain: 0.01,
            v_max: 1.0,
            alpha_ema: 0.18,
        }
    }
}

/// Sums the masks, gates them with the depth of the newest frame and
/// binarizes the intersection.
pub fn accumulate_and_gate<'a>(frames: impl IntoIterator<Item = &'a MaskFrame>, d_depth: f64) -> ControlInput {
    let frames: Vec<&MaskFrame> = frames.into_iter().collect();
    let last = *frames.last().expect("at least one frame");
    let (w, h) = (last.width, last.height);
    let mut cum = vec![0u32; w * h];
    for f in &frames {
        assert_eq!((f.width, f.height), (w, h), "frame size mismatch");
        for (c, &s) in cum.iter_mut().zip(&f.seg) {
            *c += s as u32;
        }
    }
    let ctrl = cum
        .iter()
        .zip(&last.depth)
        .map(|(&c, &d)| u8::from(c > 0 && (d as f64) < d_depth))
        .collect();
    ControlInput::from_mask(w, h, ctrl)
}

/// Zeroes image rows whose plant count is below `fraction` of the
/// largest row count.
pub fn reduce_noise(input: &ControlInput, fraction: f64) -> ControlInput {
    let w = input.width;
    let sums: Vec<u32> = input.ctrl.chunks_exact(w).map(|r| r.iter().map(|&v| v as u32).sum()).collect();
    let max = sums.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return input.clone();
    }
    let th = fraction * max as f64;
    let mut ctrl = input.ctrl.clone();
    for (row, &s) in ctrl.chunks_exact_mut(w).zip(&sums) {
        if (s as f64) < th {
            row.fill(0);
        }
    }
    ControlInput::from_mask(w, input.height, ctrl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapResult {
    /// `center` is the mean of the first and last column indices of the
    /// run. `level` is the histogram value of the run, 0 unless no column
    /// was empty.
    Gap {
        center: f64,
        first: usize,
        last: usize,
        level: u32,
    },
    Anomaly { length: usize },
}

/// Longest run of columns equal to `level`; leftmost wins ties.
fn longest_run(c: &[u32], level: u32) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut j = 0;
    while j < c.len() {
        if c[j] != level {
            j += 1;
            continue;
        }
        let start = j;
        while j < c.len() && c[j] == level {
            j += 1;
        }
        if best.is_none_or(|(a, b)| j - start > b - a + 1) {
            best = Some((start, j - 1));
        }
    }
    best
}

pub fn locate_gap(c: &[u32], anomaly_fraction: f64) -> GapResult {
    let w = c.len();
    let gap = |(first, last): (usize, usize), level| GapResult::Gap {
        center: 0.5 * (first + last) as f64,
        first,
        last,
        level,
    };
    if let Some(run) = longest_run(c, 0) {
        let length = run.1 - run.0 + 1;
        if length as f64 >= anomaly_fraction * w as f64 {
            return GapResult::Anomaly { length };
        }
        return gap(run, 0);
    }
    let Some(&min) = c.iter().min() else {
        return GapResult::Anomaly { length: 0 };
    };
    gap(longest_run(c, min).expect("minimum occurs"), min)
}

/// Proportional steering toward the gap and a parabolic speed profile.
pub fn control_law(x_c: f64, w: usize, cfg: &RowControlConfig) -> VelocityCommand {
    let half = 0.5 * w as f64;
    let d = x_c - half;
    VelocityCommand {
        v_x: cfg.v_max * (1.0 - d * d / (half * half)),
        omega_z: -cfg.omega_gain * d,
    }
}

pub fn ema_smooth(prev: VelocityCommand, raw: VelocityCommand, alpha: f64) -> VelocityCommand {
    VelocityCommand {
        v_x: prev.v_x * (1.0 - alpha) + raw.v_x * alpha,
        omega_z: prev.omega_z * (1.0 - alpha) + raw.omega_z * alpha,
    }
}

/// Everything computed for one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrace {
    pub input: ControlInput,
    pub gap: GapResult,
    pub raw: VelocityCommand,
    pub smoothed: VelocityCommand,
}

impl ControlTrace {
    /// Writes `<stem>.pgm` with the control mask and `<stem>.csv` with the
    /// histogram and the decision.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<(), IoError> {
        let pgm = std::fs::File::create(dir.join(format!("{stem}.pgm")))?;
        self.input.write_pgm(std::io::BufWriter::new(pgm))?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        let (x_c, anomaly) = match self.gap {
            GapResult::Gap { center, .. } => (center.to_string(), "0"),
            GapResult::Anomaly { .. } => (String::new(), "1"),
        };
        w.write_record(["column", "count", "x_c", "anomaly", "v_x", "omega_z"])?;
        for (j, c) in self.input.histogram.iter().enumerate() {
            let head = j == 0;
            w.write_record([
                j.to_string(),
                c.to_string(),
                if head { x_c.clone() } else { String::new() },
                if head { anomaly.to_string() } else { String::new() },
                if head { self.smoothed.v_x.to_string() } else { String::new() },
                if head { self.smoothed.omega_z.to_string() } else { String::new() },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stateful controller: the last `s + 1` frames and the EMA memory.
#[derive(Debug, Clone)]
pub struct RowController {
    pub cfg: RowControlConfig,
    window: VecDeque<MaskFrame>,
    ema: VelocityCommand,
}

impl RowController {
    pub fn new(cfg: RowControlConfig) -> Self {
        Self {
            window: VecDeque::with_capacity(cfg.s + 1),
            cfg,
            ema: VelocityCommand::STOP,
        }
    }

    pub fn reset_ema(&mut self) {
        self.ema = VelocityCommand::STOP;
    }

    pub fn push(&mut self, frame: MaskFrame) {
        if self.window.len() == self.cfg.s + 1 {
            self.window.pop_front();
        }
        self.window.push_back(frame);
    }

    /// Computes the command for the current window without pushing.
    pub fn evaluate(&self) -> (GapResult, VelocityCommand, ControlInput) {
        let input = reduce_noise(&accumulate_and_gate(&self.window, self.cfg.d_depth), self.cfg.noise_fraction);
        let gap = locate_gap(&input.histogram, self.cfg.anomaly_fraction);
        let raw = match gap {
            // column indices address pixel centers
            GapResult::Gap { center, .. } => control_law(center + 0.5, input.width, &self.cfg),
            GapResult::Anomaly { .. } => VelocityCommand::STOP,
        };
        (gap, raw, input)
    }

    pub fn step(&mut self, frame: MaskFrame) -> ControlTrace {
        self.push(frame);
        let (gap, raw, input) = self.evaluate();
        self.ema = ema_smooth(self.ema, raw, self.cfg.alpha_ema);
        ControlTrace {
            input,
            gap,
            raw,
            smoothed: self.ema,
        }
    }
}

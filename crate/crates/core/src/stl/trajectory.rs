use std::ops::RangeInclusive;

use thiserror::Error;

/// Times closer than this (in units of `dt`) to a grid point are treated as
/// lying on it.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory needs at least one sample")]
    Empty,
    #[error("sample period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("start time must be non-negative and finite, got {0}")]
    BadStart(f64),
    #[error("sample {index} has dimension {found}, expected {expected}")]
    RaggedSample {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("time {required} lies past the last sample at {available}")]
    HorizonTooShort { required: f64, available: f64 },
    #[error("time {0} lies before the first sample")]
    BeforeStart(f64),
    #[error("no sample inside [{from}, {to}]")]
    EmptyWindow { from: f64, to: f64 },
    #[error("time {0} is not on the sample grid")]
    OffGrid(f64),
}

/// A uniformly sampled signal: sample `k` is the state at `start + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    start: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dt: f64, start: f64, samples: Vec<Vec<f64>>) -> Result<Self, TrajectoryError> {
        let dim = samples.first().ok_or(TrajectoryError::Empty)?.len();
        let mut data = Vec::with_capacity(dim * samples.len());
        for (index, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(TrajectoryError::RaggedSample {
                    index,
                    expected: dim,
                    found: s.len(),
                });
            }
            data.extend_from_slice(s);
        }
        Self::from_flat(dt, start, dim, data)
    }

    /// Builds a trajectory from row-major sample storage.
    pub fn from_flat(dt: f64, start: f64, dim: usize, data: Vec<f64>) -> Result<Self, TrajectoryError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajectoryError::BadPeriod(dt));
        }
        if !(start.is_finite() && start >= 0.0) {
            return Err(TrajectoryError::BadStart(start));
        }
        if data.is_empty() || (dim > 0 && !data.len().is_multiple_of(dim)) {
            return Err(TrajectoryError::Empty);
        }
        Ok(Self { dt, start, dim, data })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(self.data.len())
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    /// Applies `f` to every sample, producing a new trajectory on the same grid.
    pub fn map_samples(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut Vec<f64>)) -> Trajectory {
        let mut data = Vec::with_capacity(out_dim * self.len());
        for s in self.samples() {
            f(s, &mut data);
        }
        debug_assert_eq!(data.len(), out_dim * self.len());
        Trajectory {
            dt: self.dt,
            start: self.start,
            dim: out_dim,
            data,
        }
    }

    fn position(&self, t: f64) -> f64 {
        (t - self.start) / self.dt
    }

    /// Index of the sample at exactly time `t`.
    pub fn index_at(&self, t: f64) -> Result<usize, TrajectoryError> {
        let p = self.position(t);
        let r = p.round();
        if (p - r).abs() > GRID_TOL {
            return Err(TrajectoryError::OffGrid(t));
        }
        if r < 0.0 {
            return Err(TrajectoryError::BeforeStart(t));
        }
        let k = r as usize;
        if k >= self.len() {
            return Err(TrajectoryError::HorizonTooShort {
                required: t,
                available: self.end_time(),
            });
        }
        Ok(k)
    }

    /// Sample indices covering `[from, to]`, with endpoints that fall between
    /// grid points snapped outward to the enclosing samples.
    pub fn window(&self, from: f64, to: f64) -> Result<RangeInclusive<usize>, TrajectoryError> {
        let lo = snap_down(self.position(from));
        let hi = snap_up(self.position(to));
        if lo < 0.0 {
            return Err(TrajectoryError::BeforeStart(from));
        }
        if hi > (self.len() - 1) as f64 {
            return Err(TrajectoryError::HorizonTooShort {
                required: to,
                available: self.end_time(),
            });
        }
        if lo > hi {
            return Err(TrajectoryError::EmptyWindow { from, to });
        }
        Ok(lo as usize..=hi as usize)
    }
}

fn snap_down(p: f64) -> f64 {
    let r = p.round();
    if (p - r).abs() <= GRID_TOL {
        r
    } else {
        p.floor()
    }
}

fn snap_up(p: f64) -> f64 {
    let r = p.round();
    if (p - r).abs() <= GRID_TOL {
        r
    } else {
        p.ceil()
    }
}

/// Number of samples on `[0, horizon]` at period `dt`.
pub fn sample_count(horizon: f64, dt: f64) -> usize {
    snap_up(horizon / dt) as usize + 1
}

/// Nearest grid time to `t` inside `[from, to]`, if any grid point lies there.
pub fn grid_time_within(t: f64, from: f64, to: f64, dt: f64) -> Option<f64> {
    let lo = snap_up(from / dt);
    let hi = snap_down(to / dt);
    if lo > hi {
        return None;
    }
    let k = (t / dt).round().clamp(lo, hi);
    let snapped = grid_time(k, dt);
    if (snapped - t).abs() <= GRID_TOL * dt {
        Some(t)
    } else {
        Some(snapped)
    }
}

/// `k * dt`, computed as `k / (1/dt)` when the rate is integral so that
/// e.g. `70 * 0.1` comes out as exactly `7`.
fn grid_time(k: f64, dt: f64) -> f64 {
    let rate = 1.0 / dt;
    if (rate - rate.round()).abs() <= GRID_TOL {
        k / rate.round()
    } else {
        k * dt
    }
}

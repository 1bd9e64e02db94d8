//! Geodesic random walks at scale `n` and their piecewise-constant path
//! process.
//!
//! One walk iterates `S_{i+1} = exp(S_i, X_{i+1} / n)` with each raw
//! increment `X_{i+1}` drawn from the measure family at the *current*
//! location `S_i`. Drawing in place (rather than transporting draws from the
//! start point) is exact for consistent families and avoids accumulating
//! transport error. The path process `Z_n(t) = S_{⌊nt⌋}` is right-continuous
//! piecewise constant.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point, TangentVector};
use crate::measures::MeasureFamily;
use crate::rng::stream;

/// Everything needed to run one rescaled walk.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    pub manifold: ManifoldModel,
    pub family: MeasureFamily,
    pub x0: Point,
    /// Scale: steps per unit time and the divisor applied to raw increments.
    pub n: u64,
    /// Time horizon; the walk takes `⌊n·horizon⌋` steps.
    pub horizon: f64,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(
        manifold: &ManifoldModel,
        family: &MeasureFamily,
        x0: Point,
        n: u64,
        horizon: f64,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("walk scale n must be at least 1".into()));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::Domain(format!("horizon {horizon} must be finite and > 0")));
        }
        if family.manifold().kind() != manifold.kind() {
            return Err(Error::Domain(
                "measure family lives on a different manifold than the walk".into(),
            ));
        }
        manifold.check_point(&x0)?;
        Ok(WalkConfig { manifold: manifold.clone(), family: family.clone(), x0, n, horizon, seed })
    }

    /// Number of steps the walk takes: `⌊n·horizon⌋`.
    pub fn step_count(&self) -> usize {
        (self.n as f64 * self.horizon).floor() as usize
    }
}

/// A realized walk: locations `S_0 … S_m` and the raw (pre-scaling) draws.
#[derive(Debug, Clone)]
pub struct WalkPath {
    steps: Vec<Point>,
    increments: Vec<TangentVector>,
}

impl WalkPath {
    /// Locations `S_0 … S_m`.
    pub fn steps(&self) -> &[Point] {
        &self.steps
    }

    /// Raw draws `X_1 … X_m`, each based at the location it was drawn from.
    pub fn increments(&self) -> &[TangentVector] {
        &self.increments
    }

    pub fn endpoint(&self) -> &Point {
        &self.steps[self.steps.len() - 1]
    }

    /// `Z_n(t) = S_{⌊nt⌋}`: right-continuous piecewise-constant evaluation.
    pub fn at(&self, cfg: &WalkConfig, t: f64) -> Result<&Point> {
        if !(0.0..=cfg.horizon).contains(&t) {
            return Err(Error::OutOfRange(format!(
                "t = {t} outside the walk horizon [0, {}]",
                cfg.horizon
            )));
        }
        let idx = ((cfg.n as f64 * t).floor() as usize).min(self.steps.len() - 1);
        Ok(&self.steps[idx])
    }

    /// Geodesic interpolation between neighboring step locations, for
    /// plotting; the limit-theorem object is the piecewise-constant [`Self::at`].
    pub fn interpolated_at(&self, cfg: &WalkConfig, t: f64) -> Result<Point> {
        let left = self.at(cfg, t)?.clone();
        let scaled = cfg.n as f64 * t;
        let idx = (scaled.floor() as usize).min(self.steps.len() - 1);
        let frac = scaled - idx as f64;
        if frac == 0.0 || idx + 1 >= self.steps.len() {
            return Ok(left);
        }
        let v = cfg.manifold.log_map(&left, &self.steps[idx + 1])?;
        cfg.manifold.geodesic_point(&left, &v, frac)
    }

    /// CSV rows `t,coord_0,…,coord_d` at the step times `i/n`.
    pub fn write_csv<W: Write>(&self, cfg: &WalkConfig, mut out: W) -> Result<()> {
        let width = cfg.manifold.repr_len();
        write!(out, "t")?;
        for j in 0..width {
            write!(out, ",coord_{j}")?;
        }
        writeln!(out)?;
        for (i, p) in self.steps.iter().enumerate() {
            write!(out, "{}", i as f64 / cfg.n as f64)?;
            for c in p.coords().iter() {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Runs the walk, recording every location and raw increment.
pub fn run_geodesic_walk(cfg: &WalkConfig) -> Result<WalkPath> {
    let count = cfg.step_count();
    let mut steps = Vec::with_capacity(count + 1);
    let mut increments = Vec::with_capacity(count);
    steps.push(cfg.x0.clone());
    let end = walk_core(cfg, |point, raw| {
        increments.push(raw.clone());
        steps.push(point.clone());
    })?;
    debug_assert_eq!(end.coords(), steps[steps.len() - 1].coords());
    Ok(WalkPath { steps, increments })
}

/// Runs the walk keeping only the final location; used by rare-event
/// estimators that simulate millions of replicas.
pub fn run_walk_endpoint(cfg: &WalkConfig) -> Result<Point> {
    walk_core(cfg, |_, _| {})
}

/// The shared recursion. `observe` sees each new location and the raw draw
/// that produced it, in order.
fn walk_core(cfg: &WalkConfig, mut observe: impl FnMut(&Point, &TangentVector)) -> Result<Point> {
    let scale = 1.0 / cfg.n as f64;
    let mut current = cfg.x0.clone();
    for i in 0..cfg.step_count() {
        // One stream per step, keyed (seed, replica = 0, step); replicated
        // experiments derive a distinct seed per replica instead of sharing
        // this one.
        let mut rng = stream(cfg.seed, &[0, i as u64]);
        let raw = cfg.family.sample_increment(&current, &mut rng)?;
        let next = cfg.manifold.exp_map(&current, &raw.scaled(scale))?;
        observe(&next, &raw);
        current = next;
    }
    Ok(current)
}

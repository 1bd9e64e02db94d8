//! Monte Carlo estimation of endpoint decay rates, spectral heat-flow
//! checks, and exit-probability bound verification, with reproducible
//! parallelism and JSON/CSV reporting.
//!
//! Replicas are embarrassingly parallel: each one derives its own seed from
//! the experiment seed and its index, hit counts reduce as integers, and
//! float aggregation happens in replica order, so results are bit-identical
//! regardless of worker count.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::{run_brownian, run_brownian_with_noise, sample_noise};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point};
use crate::measures::MeasureFamily;
use crate::rng::derive_seed;
use crate::walks::{run_walk_endpoint, WalkConfig};

/// Geodesic ball used as the hit region of an endpoint experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// A fitted exponential decay rate across walk scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Scales that registered at least one hit, strictly increasing.
    pub levels: Vec<u64>,
    /// Hits per surviving level.
    pub hits: Vec<u64>,
    /// Per-level normalized decay, `−(1/n)·ln p̂_n`.
    pub log_probs: Vec<f64>,
    /// Weighted-least-squares slope of the prefactor-corrected decay
    /// `−ln p̂_n + (d/2)·ln n` against `n`.
    pub fitted_rate: f64,
    /// Propagated standard error of the slope.
    pub stderr: f64,
    /// Replicas simulated per level.
    pub replicas: u64,
    pub target: TargetBall,
    /// Scales dropped because no replica landed in the ball.
    pub dropped_levels: Vec<u64>,
}

impl RateEstimate {
    /// CSV table of the surviving levels: `n,hits,replicas,log_prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,hits,replicas,log_prob")?;
        for i in 0..self.levels.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.levels[i], self.hits[i], self.replicas, self.log_probs[i]
            )?;
        }
        Ok(())
    }
}

/// Everything that defines one endpoint rare-event experiment: walks of
/// scale `n` run to time 1, hits counted in the ball around `target`.
#[derive(Debug, Clone)]
pub struct EndpointExperiment {
    pub family: MeasureFamily,
    pub x0: Point,
    pub target: Point,
    /// Hit radius; defaults to `0.05·d(x0, target)` floored at 0.02.
    pub delta: Option<f64>,
    pub levels: Vec<u64>,
    pub replicas: u64,
    pub seed: u64,
}

/// Runs the experiment and fits the decay rate across levels.
///
/// For each scale `n`, `p̂_n` is the fraction of endpoints within `delta` of
/// the target. The decay `−ln p̂_n` grows like `n·I − (d/2)·ln n + c`; the
/// logarithmic term is the Gaussian density normalization of the local CLT,
/// so the fit adds `(d/2)·ln n` back before taking the weighted slope.
/// Weights are inverse delta-method variances of `ln p̂_n`; zero-hit levels
/// are dropped and reported.
pub fn estimate_endpoint_rate(exp: &EndpointExperiment) -> Result<RateEstimate> {
    let m = exp.family.manifold().clone();
    if exp.levels.len() < 2 {
        return Err(Error::TooFewLevels(exp.levels.len()));
    }
    if !exp.levels.windows(2).all(|w| w[0] < w[1]) || exp.levels[0] == 0 {
        return Err(Error::Domain("levels must be strictly increasing and positive".into()));
    }
    if exp.replicas < 1000 {
        return Err(Error::Domain(format!(
            "{} replicas is below the 1000 needed for a stable fit",
            exp.replicas
        )));
    }
    m.check_point(&exp.target)?;
    let separation = m.distance(&exp.x0, &exp.target);
    let delta = match exp.delta {
        Some(d) if d > 0.0 => d,
        Some(d) => return Err(Error::Domain(format!("hit radius {d} must be > 0"))),
        None => (0.05 * separation).max(0.02),
    };

    let mut surviving = Vec::new();
    let mut hits_kept = Vec::new();
    let mut log_probs = Vec::new();
    let mut dropped = Vec::new();
    for (li, &n) in exp.levels.iter().enumerate() {
        let base = WalkConfig::new(&m, &exp.family, exp.x0.clone(), n, 1.0, 0)?;
        let hits: u64 = (0..exp.replicas)
            .into_par_iter()
            .map(|r| {
                let mut cfg = base.clone();
                cfg.seed = derive_seed(exp.seed, &[li as u64, r]);
                let end = run_walk_endpoint(&cfg).expect("walk step failed");
                u64::from(m.distance(&end, &exp.target) < delta)
            })
            .sum();
        if hits == 0 {
            dropped.push(n);
        } else {
            surviving.push(n);
            hits_kept.push(hits);
            let p = hits as f64 / exp.replicas as f64;
            log_probs.push(-p.ln() / n as f64);
        }
    }
    if surviving.is_empty() {
        return Err(Error::AllZeroCounts);
    }
    if surviving.len() < 2 {
        return Err(Error::TooFewLevels(surviving.len()));
    }

    let half_dim = m.dim() as f64 / 2.0;
    let mut rows = Vec::with_capacity(surviving.len());
    for (i, &n) in surviving.iter().enumerate() {
        let p = hits_kept[i] as f64 / exp.replicas as f64;
        let y = -p.ln() + half_dim * (n as f64).ln();
        // Delta method: var(ln p̂) = (1−p)/(N·p) = (1−p̂)/hits.
        let variance = (1.0 - p) / hits_kept[i] as f64;
        rows.push((n as f64, y, 1.0 / variance));
    }
    let (fitted_rate, stderr) = weighted_slope(&rows);

    Ok(RateEstimate {
        levels: surviving,
        hits: hits_kept,
        log_probs,
        fitted_rate,
        stderr,
        replicas: exp.replicas,
        target: TargetBall { center: exp.target.coords().iter().copied().collect(), radius: delta },
        dropped_levels: dropped,
    })
}

/// Weighted least-squares slope of `y` against `x` and its standard error,
/// from `(x, y, weight)` rows.
fn weighted_slope(rows: &[(f64, f64, f64)]) -> (f64, f64) {
    let wsum: f64 = rows.iter().map(|r| r.2).sum();
    let xbar: f64 = rows.iter().map(|r| r.0 * r.2).sum::<f64>() / wsum;
    let ybar: f64 = rows.iter().map(|r| r.1 * r.2).sum::<f64>() / wsum;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - xbar) * (r.0 - xbar)).sum();
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - xbar) * (r.1 - ybar)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// Outcome of a spectral decay check on the sphere.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeatCheck {
    /// Monte Carlo mean of the first harmonic at time `t`.
    pub empirical: f64,
    /// Spectral prediction `e^{−t/r²}·Y₁(x0)`.
    pub theory: f64,
    pub std_error: f64,
    pub z_score: f64,
}

fn first_harmonic(x: &Point) -> f64 {
    x.coords()[2]
}

fn sphere_radius(m: &ManifoldModel) -> Result<f64> {
    match m.kind() {
        crate::geometry::ManifoldKind::Sphere { radius } => Ok(*radius),
        other => Err(Error::Domain(format!(
            "heat-flow check needs the sphere's spectral oracle, got {other:?}"
        ))),
    }
}

fn summarize_heat(values: &[f64], theory: f64) -> HeatCheck {
    let n = values.len() as f64;
    let empirical = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - empirical).powi(2)).sum::<f64>() / n;
    let std_error = (variance / n).sqrt();
    let z_score = if std_error > 0.0 { (empirical - theory) / std_error } else { 0.0 };
    HeatCheck { empirical, theory, std_error, z_score }
}

/// Estimates `E[Y₁(W_t)]` on the sphere and compares it to the spectral
/// decay of the first harmonic.
pub fn estimate_heat_semigroup(
    m: &ManifoldModel,
    x0: &Point,
    t: f64,
    replicas: u64,
    dt: f64,
    seed: u64,
) -> Result<HeatCheck> {
    let radius = sphere_radius(m)?;
    m.check_point(x0)?;
    if replicas == 0 {
        return Err(Error::Domain("need at least one replica".into()));
    }
    if t < 0.0 || !t.is_finite() {
        return Err(Error::Domain(format!("time {t} must be finite and >= 0")));
    }
    let theory = (-t / (radius * radius)).exp() * first_harmonic(x0);
    if t == 0.0 {
        return Ok(HeatCheck { empirical: first_harmonic(x0), theory, std_error: 0.0, z_score: 0.0 });
    }
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let path = run_brownian(m, x0, 1.0, t, dt, derive_seed(seed, &[r]))
                .expect("horizontal step failed");
            first_harmonic(path.endpoint())
        })
        .collect();
    Ok(summarize_heat(&values, theory))
}

/// The same check run twice on coupled noise, at step `dt` and `dt/2`: each
/// coarse increment is the sum of its two fine halves, so the pair isolates
/// the discretization effect from Monte Carlo noise.
pub fn estimate_heat_semigroup_refined(
    m: &ManifoldModel,
    x0: &Point,
    t: f64,
    replicas: u64,
    dt: f64,
    seed: u64,
) -> Result<(HeatCheck, HeatCheck)> {
    let radius = sphere_radius(m)?;
    m.check_point(x0)?;
    if replicas == 0 {
        return Err(Error::Domain("need at least one replica".into()));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time {t} must be finite and > 0")));
    }
    let theory = (-t / (radius * radius)).exp() * first_harmonic(x0);
    let steps = (t / dt).ceil() as usize;
    let pairs: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let fine = sample_noise(m.dim(), 2 * steps, 0.5 * dt, derive_seed(seed, &[r]));
            let coarse: Vec<_> = fine.chunks_exact(2).map(|c| &c[0] + &c[1]).collect();
            let at_dt = run_brownian_with_noise(m, x0, 1.0, dt, &coarse)
                .expect("horizontal step failed");
            let at_half = run_brownian_with_noise(m, x0, 1.0, 0.5 * dt, &fine)
                .expect("horizontal step failed");
            (first_harmonic(at_dt.endpoint()), first_harmonic(at_half.endpoint()))
        })
        .collect();
    let coarse: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let fine: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((summarize_heat(&coarse, theory), summarize_heat(&fine, theory)))
}

/// One grid point of an exit-probability verification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExitPointCheck {
    pub tau: f64,
    pub delta: f64,
    /// Closed-form tail bound.
    pub bound: f64,
    /// Empirical exceedance frequency.
    pub empirical: f64,
    /// One-sided 99% Wilson upper confidence limit of the exceedance.
    pub upper_confidence: f64,
    /// Whether the confidence limit stays below the bound.
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitBoundReport {
    pub points: Vec<ExitPointCheck>,
    /// True when every grid point holds.
    pub pass: bool,
}

/// One-sided 99% Wilson upper confidence limit for a binomial proportion.
fn wilson_upper(hits: u64, trials: u64) -> f64 {
    let z = 2.326347874040841;
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center + half) / (1.0 + z2 / n)).min(1.0)
}

/// Simulates ball exits on `(tau, delta)` grid points and checks the
/// empirical exceedance (with confidence margin) against the closed-form
/// bound. Paths are shared across the deltas of one tau.
pub fn verify_exit_bound(
    m: &ManifoldModel,
    x0: &Point,
    grid: &[(f64, f64)],
    l: f64,
    eps: f64,
    replicas: u64,
    dt: f64,
    seed: u64,
) -> Result<ExitBoundReport> {
    m.check_point(x0)?;
    if grid.is_empty() {
        return Err(Error::Domain("empty verification grid".into()));
    }
    if replicas == 0 {
        return Err(Error::Domain("need at least one replica".into()));
    }
    // Validate every point (including the bound preconditions) up front.
    let mut bounds = Vec::with_capacity(grid.len());
    for &(tau, delta) in grid {
        bounds.push(crate::brownian::exit_bound(m.dim(), l, tau, delta)?);
    }

    let mut taus: Vec<f64> = grid.iter().map(|g| g.0).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut points = vec![None; grid.len()];
    for (ti, &tau) in taus.iter().enumerate() {
        let sups: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let path = run_brownian(m, x0, eps, tau, dt, derive_seed(seed, &[ti as u64, r]))
                    .expect("horizontal step failed");
                path.states()
                    .iter()
                    .map(|s| m.distance(x0, s.point()))
                    .fold(0.0f64, f64::max)
            })
            .collect();
        for (gi, &(gt, delta)) in grid.iter().enumerate() {
            if gt != tau {
                continue;
            }
            let hits = sups.iter().filter(|&&d| d >= delta).count() as u64;
            let empirical = hits as f64 / replicas as f64;
            let upper_confidence = wilson_upper(hits, replicas);
            let bound = bounds[gi];
            points[gi] = Some(ExitPointCheck {
                tau,
                delta,
                bound,
                empirical,
                upper_confidence,
                holds: upper_confidence <= bound,
            });
        }
    }
    let points: Vec<ExitPointCheck> = points.into_iter().map(Option::unwrap).collect();
    let pass = points.iter().all(|p| p.holds);
    Ok(ExitBoundReport { points, pass })
}

pub const SCHEMA_VERSION: u32 = 1;

/// A persisted experiment: configuration echo, estimates, and the verdict
/// against the analytic rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub config: serde_json::Value,
    pub estimates: Vec<RateEstimate>,
    /// Rate-function value the estimates are compared against.
    pub theory: f64,
    pub pass: bool,
    /// Seconds of wall time spent producing the estimates.
    pub wall_time: f64,
}

impl ExperimentReport {
    pub fn new(
        config: serde_json::Value,
        estimates: Vec<RateEstimate>,
        theory: f64,
        tolerance: f64,
        started: Instant,
    ) -> Self {
        let pass = estimates
            .iter()
            .all(|e| (e.fitted_rate - theory).abs() <= tolerance * theory.abs().max(1e-12));
        ExperimentReport {
            version: SCHEMA_VERSION,
            config,
            estimates,
            theory,
            pass,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }
}

/// Writes the report as JSON. Numbers use shortest round-trip decimal form,
/// so a reload reproduces every float bit for bit.
pub fn persist_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let file = std::fs::File::open(path)?;
    let report: ExperimentReport = serde_json::from_reader(std::io::BufReader::new(file))?;
    if report.version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: report.version, expected: SCHEMA_VERSION });
    }
    Ok(report)
}

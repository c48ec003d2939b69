//! Experiment drivers: power sweeps with Monte Carlo trials, ALB heatmaps,
//! ellipse sampling and empirical CDFs.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{attacker_setup, scenario_placements, Config, MIN_CDF_SAMPLES};
use super::output::{BoundColumns, CdfRow, ResultRow, RmseColumns};
use crate::bounds::{compute_bounds, true_channel_params, BoundReport};
use crate::channel::{synthesize_observation, wrap_phase};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, PipelineEstimate};
use crate::geometry::{EulerAngles, Placement, Position3, SceneGeometry, SPEED_OF_LIGHT};
use crate::params::{NuisanceFreeParams, StateVector};

/// Environment variable capping worker threads; 0 or unset means one per core.
pub const THREADS_ENV: &str = "RIS_SIM_THREADS";

/// Reads [`THREADS_ENV`].
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        _ => Ok(0),
    }
}

/// Runs `f` inside a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise seed of one trial, a hash of the base seed, trial and sweep index.
pub fn trial_seed(base: u64, trial: usize, sweep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ trial as u64) ^ splitmix64(!(sweep as u64)))
}

/// Bounds for a scene with the configured signal and RIS settings.
pub fn scene_bounds(config: &Config, scene: &SceneGeometry) -> Result<BoundReport> {
    let cfg = config.signal_config()?;
    let dep = config.deployment(scene, &cfg)?;
    compute_bounds(scene, &cfg, &dep)
}

fn bound_columns(config: &Config, scene: &SceneGeometry) -> BoundColumns {
    match scene_bounds(config, scene) {
        Ok(r) => BoundColumns::from_report(&r),
        Err(e) => {
            log::warn!("bounds failed at UE {:?}, RIS {:?}: {e}", scene.ue, scene.ris_u.position);
            BoundColumns::failed()
        }
    }
}

/// Per-trial estimation errors.
#[derive(Debug, Clone, Copy)]
struct TrialErrors {
    coarse: [f64; 4],
    fine: [f64; 4],
    coarse_pos: f64,
    coarse_clock: f64,
    fine_pos: f64,
    fine_clock: f64,
}

fn channel_errors(est: &NuisanceFreeParams, truth: &NuisanceFreeParams) -> [f64; 4] {
    [
        est.tau_u - truth.tau_u,
        wrap_phase(est.phi - truth.phi),
        est.theta - truth.theta,
        est.tau_rl - truth.tau_rl,
    ]
}

fn trial_errors(e: &PipelineEstimate, truth_eta: &NuisanceFreeParams, truth: &StateVector) -> TrialErrors {
    TrialErrors {
        coarse: channel_errors(&e.coarse_channel, truth_eta),
        fine: channel_errors(&e.fine.eta, truth_eta),
        coarse_pos: (e.coarse_state.position - truth.position).norm(),
        coarse_clock: e.coarse_state.clock_offset_m - truth.clock_offset_m,
        fine_pos: (e.fine_state.position - truth.position).norm(),
        fine_clock: e.fine_state.clock_offset_m - truth.clock_offset_m,
    }
}

fn rmse(errors: &[TrialErrors]) -> RmseColumns {
    if errors.is_empty() {
        return RmseColumns::empty();
    }
    let n = errors.len() as f64;
    let root_mean = |f: &dyn Fn(&TrialErrors) -> f64| (errors.iter().map(|e| f(e).powi(2)).sum::<f64>() / n).sqrt();
    RmseColumns {
        coarse_channel: std::array::from_fn(|i| root_mean(&|e| e.coarse[i])),
        fine_channel: std::array::from_fn(|i| root_mean(&|e| e.fine[i])),
        coarse_pos_m: root_mean(&|e| e.coarse_pos),
        coarse_clock_m: root_mean(&|e| e.coarse_clock),
        fine_pos_m: root_mean(&|e| e.fine_pos),
        fine_clock_m: root_mean(&|e| e.fine_clock),
    }
}

/// Bounds once per power plus `trials` Monte Carlo runs of the full estimator.
/// Failed trials are counted, not fatal.
pub fn run_power_sweep(config: &Config, powers_dbm: &[f64], threads: usize) -> Result<Vec<ResultRow>> {
    let trials = config.experiment.trials;
    if trials == 0 {
        return Err(Error::Config("a power sweep needs at least one trial".into()));
    }
    let scene = config.scene_geometry()?;
    let base = config.signal_config()?;
    let dep = config.deployment(&scene, &base)?;
    let estimator = Estimator::for_scene(&scene, &base, &dep, config.estimator)?;
    let truth = StateVector::new(scene.ue, scene.clock_offset_m);
    let truth_eta = true_channel_params(&scene, &base)?.nuisance_free();
    let seed = config.experiment.seed;

    with_threads(threads, || {
        powers_dbm
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let cfg = base.with_power_dbm(p);
                let bounds = match compute_bounds(&scene, &cfg, &dep) {
                    Ok(r) => BoundColumns::from_report(&r),
                    Err(e) => {
                        log::warn!("bounds failed at {p} dBm: {e}");
                        BoundColumns::failed()
                    }
                };
                let est = estimator.with_signal(&cfg)?;
                let outcomes: Vec<Option<TrialErrors>> = (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let obs = synthesize_observation(&scene, &cfg, &dep, trial_seed(seed, t, i)).ok()?;
                        match est.estimate(&obs.y, Some(&truth)) {
                            Ok(e) => Some(trial_errors(&e, &truth_eta, &truth)),
                            Err(err) => {
                                log::debug!("trial {t} at {p} dBm failed: {err}");
                                None
                            }
                        }
                    })
                    .collect();
                let ok: Vec<TrialErrors> = outcomes.into_iter().flatten().collect();
                Ok(ResultRow {
                    kind: "sweep",
                    sweep_index: i,
                    power_dbm: p,
                    strategy: config.ris.unauth_codebook,
                    scenario: config.experiment.scenario.unwrap_or(0),
                    ue: scene.ue,
                    ris_unauth: scene.ris_u.position,
                    trials,
                    successes: ok.len(),
                    seed,
                    bounds,
                    rmse: rmse(&ok),
                })
            })
            .collect()
    })?
}

/// What a heatmap moves across its grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapVariable {
    UePosition,
    UnauthorizedRisPosition,
}

/// Yaw that turns a plate at `from` to face `to` in the horizontal plane.
fn facing_yaw(from: &Position3, to: &Position3) -> f64 {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        0.0
    } else {
        d.y.atan2(d.x)
    }
}

/// Scene of the unauthorized-RIS heatmaps with the attacker at `p`, its plate
/// facing the midpoint of BS and UE.
pub fn attacker_scene(config: &Config, scenario: u8, p: Position3) -> Result<SceneGeometry> {
    let (bs, ris_l, ue) = attacker_setup(scenario)?;
    let mid = Position3::from((bs.coords + ue.coords) * 0.5);
    Ok(SceneGeometry {
        bs,
        ue,
        ris_l,
        ris_u: Placement::new(p, EulerAngles::yaw_only(facing_yaw(&p, &mid))?),
        clock_offset_m: config.scene.clock_offset_m,
    })
}

fn ue_scene(config: &Config, scenario: u8, ue: Position3) -> Result<SceneGeometry> {
    let (l, u) = scenario_placements(scenario)?;
    Ok(SceneGeometry {
        bs: Position3::new(config.scene.bs[0], config.scene.bs[1], config.scene.bs[2]),
        ue,
        ris_l: l.placement()?,
        ris_u: u.placement()?,
        clock_offset_m: config.scene.clock_offset_m,
    })
}

/// ALB (and every other bound) per grid cell. Cells whose geometry is
/// degenerate are kept with NaN bounds and `bounds_failed = 1`.
pub fn run_heatmap(config: &Config, variable: HeatmapVariable, scenario: u8, threads: usize) -> Result<Vec<ResultRow>> {
    let (grid, kind) = match variable {
        HeatmapVariable::UePosition => (&config.experiment.ue_grid, "heatmap_ue"),
        HeatmapVariable::UnauthorizedRisPosition => (&config.experiment.ris_grid, "heatmap_ris"),
    };
    grid.validate()?;
    // surface configuration errors before the grid starts
    match variable {
        HeatmapVariable::UePosition => scenario_placements(scenario).map(|_| ())?,
        HeatmapVariable::UnauthorizedRisPosition => attacker_setup(scenario).map(|_| ())?,
    }
    let points = grid.points();
    with_threads(threads, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let scene = match variable {
                    HeatmapVariable::UePosition => ue_scene(config, scenario, *p),
                    HeatmapVariable::UnauthorizedRisPosition => attacker_scene(config, scenario, *p),
                };
                let (ue, ru, bounds) = match scene {
                    Ok(s) => (s.ue, s.ris_u.position, bound_columns(config, &s)),
                    Err(_) => (*p, *p, BoundColumns::failed()),
                };
                ResultRow {
                    kind,
                    sweep_index: i,
                    power_dbm: config.signal.tx_power_dbm,
                    strategy: config.ris.unauth_codebook,
                    scenario,
                    ue,
                    ris_unauth: ru,
                    trials: 0,
                    successes: 0,
                    seed: config.experiment.seed,
                    bounds,
                    rmse: RmseColumns::empty(),
                }
            })
            .collect()
    })
}

/// Points on the ellipse with foci at the BS and UE whose major axis equals
/// the legitimate RIS path length, pushed `offset_m` along the outward normal.
/// All points lie in the plane of the BS.
pub fn ellipse_samples(
    bs: &Position3,
    ue: &Position3,
    ris_l: &Position3,
    count: usize,
    offset_m: f64,
) -> Result<Vec<Position3>> {
    let major = (ris_l - bs).norm() + (ris_l - ue).norm();
    let focal = (ue - bs).norm();
    if !(major > focal) || focal == 0.0 {
        return Err(Error::DegenerateGeometry("ellipse foci coincide or RIS lies between them".into()));
    }
    let a = 0.5 * major;
    let c = 0.5 * focal;
    let b = (a * a - c * c).sqrt();
    let center = Position3::from((bs.coords + ue.coords) * 0.5);
    let mut u = ue - bs;
    u.z = 0.0;
    let u = u.normalize();
    let v = Vector3::z().cross(&u);
    Ok((0..count)
        .map(|i| {
            let psi = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
            let (s, co) = psi.sin_cos();
            let on = center + u * (a * co) + v * (b * s);
            let normal = (u * (co / a) + v * (s / b)).normalize();
            Position3::new(on.x + normal.x * offset_m, on.y + normal.y * offset_m, bs.z)
        })
        .collect())
}

/// ALB with the unauthorized RIS at each point of the attacker setup.
pub fn attacker_albs(config: &Config, scenario: u8, points: &[Position3], threads: usize) -> Result<Vec<f64>> {
    with_threads(threads, || {
        points
            .par_iter()
            .map(|p| {
                let scene = attacker_scene(config, scenario, *p)?;
                Ok(scene_bounds(config, &scene)?.alb_position_m)
            })
            .collect()
    })?
}

/// Sorted values with cumulative fractions `(i + 1)/n`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

/// UE position of CDF sample `i`, uniform over the UE grid area.
pub fn cdf_sample_position(config: &Config, i: usize) -> Position3 {
    let g = &config.experiment.ue_grid;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.experiment.seed, i, usize::MAX));
    let x = g.x_range[0] + (g.x_range[1] - g.x_range[0]) * rng.random::<f64>();
    let y = g.y_range[0] + (g.y_range[1] - g.y_range[0]) * rng.random::<f64>();
    Position3::new(x, y, g.z)
}

/// ALB samples at random UE positions. Sample `i` depends only on the seed and
/// `i`, so longer runs extend shorter ones.
pub fn alb_samples(config: &Config, scenario: u8, sample_count: usize, threads: usize) -> Result<Vec<f64>> {
    scenario_placements(scenario)?;
    with_threads(threads, || {
        (0..sample_count)
            .into_par_iter()
            .map(|i| {
                let scene = ue_scene(config, scenario, cdf_sample_position(config, i)).ok()?;
                scene_bounds(config, &scene).ok().map(|r| r.alb_position_m)
            })
            .collect::<Vec<Option<f64>>>()
    })
    .map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
}

/// Empirical CDF of the position ALB over random UE positions.
pub fn run_cdf(config: &Config, sample_count: usize, threads: usize) -> Result<Vec<CdfRow>> {
    if sample_count < MIN_CDF_SAMPLES {
        return Err(Error::Config(format!(
            "a CDF needs at least {MIN_CDF_SAMPLES} samples, got {sample_count}"
        )));
    }
    let scenario = config.experiment.scenario.unwrap_or(1);
    let samples = alb_samples(config, scenario, sample_count, threads)?;
    Ok(empirical_cdf(&samples)
        .into_iter()
        .map(|(value, cumulative)| CdfRow {
            strategy: config.ris.unauth_codebook,
            scenario,
            value,
            cumulative,
        })
        .collect())
}

/// Delay errors converted to meters, for reporting.
pub fn delay_to_m(seconds: f64) -> f64 {
    seconds * SPEED_OF_LIGHT
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> Config {
        let mut c = Config::default();
        c.signal.num_subcarriers = 32;
        c.signal.num_symbols = 8;
        c.ris.legit_dims = [4, 4];
        c.ris.unauth_dims = [4, 4];
        c.experiment.trials = 3;
        c.experiment.ue_grid.nx = 3;
        c.experiment.ue_grid.ny = 3;
        c.experiment.ris_grid.nx = 3;
        c.experiment.ris_grid.ny = 3;
        c
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..50 {
            for s in 0..11 {
                assert!(seen.insert(trial_seed(1, t, s)));
            }
        }
        assert_eq!(trial_seed(9, 3, 4), trial_seed(9, 3, 4));
        assert_ne!(trial_seed(9, 3, 4), trial_seed(9, 4, 3));
    }

    #[test]
    fn sweep_is_deterministic_and_bounds_do_not_depend_on_trials() {
        let c = small_config();
        let a = run_power_sweep(&c, &[10.0, 30.0], 1).unwrap();
        let b = run_power_sweep(&c, &[10.0, 30.0], 0).unwrap();
        assert_eq!(a, b);
        let mut c2 = c.clone();
        c2.experiment.trials = 1;
        let d = run_power_sweep(&c2, &[10.0, 30.0], 0).unwrap();
        for (x, y) in a.iter().zip(&d) {
            assert_eq!(x.bounds, y.bounds);
        }
        // CRB falls with power
        assert!(a[1].bounds.crb[0] < a[0].bounds.crb[0]);
    }

    #[test]
    fn zero_trials_rejected() {
        let mut c = small_config();
        c.experiment.trials = 0;
        assert!(run_power_sweep(&c, &[10.0], 1).is_err());
    }

    #[test]
    fn no_interferer_gives_zero_alb_everywhere() {
        let mut c = small_config();
        c.ris.unauth_gain_scale = 0.0;
        let rows = run_heatmap(&c, HeatmapVariable::UePosition, 1, 0).unwrap();
        assert_eq!(rows.len(), 9);
        for r in rows {
            assert!(!r.bounds.failed);
            assert!(r.bounds.alb_pos_m < 1e-9, "{}", r.bounds.alb_pos_m);
        }
    }

    #[test]
    fn degenerate_cells_are_flagged() {
        let mut c = small_config();
        // the grid passes through the BS at the origin
        c.experiment.ris_grid.x_range = [-1.0, 1.0];
        c.experiment.ris_grid.y_range = [-1.0, 1.0];
        let rows = run_heatmap(&c, HeatmapVariable::UnauthorizedRisPosition, 1, 0).unwrap();
        assert!(rows[4].bounds.failed);
        assert!(rows[0].bounds.alb_pos_m.is_finite());
    }

    #[test]
    fn ellipse_samples_have_constant_focal_sum() {
        let (bs, ris, ue) = attacker_setup(2).unwrap();
        let l = (ris.position - bs).norm() + (ris.position - ue).norm();
        let on = ellipse_samples(&bs, &ue, &ris.position, 24, 0.0).unwrap();
        for p in &on {
            assert!(((p - bs).norm() + (p - ue).norm() - l).abs() < 1e-9);
        }
        let off = ellipse_samples(&bs, &ue, &ris.position, 24, 1.0).unwrap();
        for (p, q) in on.iter().zip(&off) {
            assert!(((p - q).norm() - 1.0).abs() < 1e-12);
            assert!((q - bs).norm() + (q - ue).norm() > l);
        }
    }

    #[test]
    fn cdf_is_monotone_and_prefix_stable() {
        let c = small_config();
        let rows = run_cdf(&c, 12, 0).unwrap();
        assert!(rows.windows(2).all(|w| w[0].value <= w[1].value && w[0].cumulative < w[1].cumulative));
        assert!((rows.last().unwrap().cumulative - 1.0).abs() < 1e-15);
        let short = alb_samples(&c, 1, 10, 0).unwrap();
        let long = alb_samples(&c, 1, 20, 0).unwrap();
        assert_eq!(short[..], long[..10]);
        assert!(run_cdf(&c, 9, 0).is_err());
    }

    #[test]
    fn empirical_cdf_drops_nan() {
        let cdf = empirical_cdf(&[3.0, f64::NAN, 1.0, 2.0]);
        assert_eq!(cdf, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
    }
}

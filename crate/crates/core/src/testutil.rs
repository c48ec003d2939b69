//! Shared fixtures for unit tests.

use crate::channel::{noise_variance, random_pilots, DeploymentSpec, RisDeployment, SignalConfig};
use crate::codebooks::{AngleRanges, UnauthorizedStrategy};
use crate::geometry::{EulerAngles, Placement, Position3, SceneGeometry};

pub fn table_scene() -> SceneGeometry {
    SceneGeometry {
        bs: Position3::new(0.0, 0.0, 0.0),
        ue: Position3::new(1.0, 4.0, -2.0),
        ris_l: Placement::new(Position3::new(-2.0, 4.0, 0.0), EulerAngles::zero()),
        ris_u: Placement::new(Position3::new(2.0, 5.0, 0.0), EulerAngles::zero()),
        clock_offset_m: 5.0,
    }
}

/// Reference-scene geometry with a reduced K×G grid and 4×4 surfaces at 20 dBm.
pub fn small_setup(k: usize, g: usize, strategy: UnauthorizedStrategy) -> (SceneGeometry, SignalConfig, RisDeployment) {
    let scene = table_scene();
    let df = 400e6 / k as f64;
    let cfg = SignalConfig {
        carrier_hz: 30e9,
        subcarrier_spacing_hz: df,
        num_subcarriers: k,
        num_symbols: g,
        tx_power_watts: 0.1,
        noise_variance: noise_variance(10.0, df),
        pilots: random_pilots(k, 11),
    };
    let spec = DeploymentSpec {
        legit_dims: (4, 4),
        unauth_dims: (4, 4),
        strategy,
        angle_ranges: AngleRanges::default(),
        legit_seed: 5,
        unauth_seed: 6,
        unauth_gain_scale: 1.0,
    };
    let dep = RisDeployment::build(&scene, &cfg, &spec).unwrap();
    (scene, cfg, dep)
}

//! Fixtures shared by the benchmarks.

use dipstop_core::image::{add_gaussian_noise, add_poisson_noise, generate_phantom, PhantomKind};
use dipstop_core::network::ArchSpec;
use dipstop_core::{DenoiserNetwork, Image, Objective, RunConfig};

pub const SIGMA: f64 = 25.0 / 255.0;
pub const ZETA: f64 = 0.1;

pub struct Fixture {
    pub net: DenoiserNetwork,
    pub x: Image,
    pub y: Image,
    pub cfg: RunConfig,
}

/// A `side x side` grayscale disks phantom with noise matching `objective`.
pub fn fixture(arch: ArchSpec, side: usize, objective: Objective) -> Fixture {
    let x = generate_phantom(PhantomKind::Disks, side, side, 1, 0).expect("valid phantom");
    let y = match objective {
        Objective::Pure => add_poisson_noise(&x, ZETA, 1),
        _ => add_gaussian_noise(&x, SIGMA, 1),
    }
    .expect("valid noise");
    let net = DenoiserNetwork::new(arch, 1, 0).expect("valid arch");
    let cfg = RunConfig {
        zeta: ZETA,
        ..RunConfig::new(objective, SIGMA)
    };
    Fixture { net, x, y, cfg }
}

/// The architecture used by the desk-scale experiments.
pub fn desk_arch() -> ArchSpec {
    ArchSpec::uniform(3, 16, 4)
}

//! Fixtures shared by the benchmarks.

use qclick::nonrel::{DetectorSpec, NonrelConfig, Packet, Profile};
use qclick::relativistic::{RelConfig, SelectionRule, SpinorPacket};
use qclick::{Grid1D, Grid2D, Potential};

pub fn scattering(n: usize) -> NonrelConfig {
    NonrelConfig {
        grid: Grid1D::centered(n, 10.0).expect("valid grid"),
        mass: 1.0,
        potential: Potential::Zero,
        packet: Packet {
            center: -2.0,
            width: 1.0,
            momentum: 1.5,
        },
        detectors: vec![DetectorSpec::new(Profile::gaussian(2.0, 1.0, 1.0))],
        horizon: 10.0,
        dt: None,
    }
}

pub fn spinor(n: usize, mass: f64) -> RelConfig {
    let axis = Grid1D::centered(n, 6.0).expect("valid grid");
    RelConfig {
        grid: Grid2D::new(axis, axis),
        dirac_mass: mass,
        evolution_mass: Some(1.0),
        charge: 0.0,
        gauge: None,
        packet: SpinorPacket {
            x: Packet {
                center: 0.0,
                width: 1.0,
                momentum: 0.0,
            },
            t_center: 0.0,
            t_width: 1.0,
            spinor: SpinorPacket::spin_up(),
        },
        detectors: vec![DetectorSpec::new(Profile::gaussian(1.0, 1.0, 1.0))],
        horizon: 5.0,
        dt: None,
        selection: SelectionRule::Lambda,
    }
}

//! Bundled three-component demo: a clamped frame carrying a y-stage on three
//! vertical bearings, with a z-stage hung from the y-stage by a leaf spring.

use crate::assembly::{ChannelRef, InterconnectionRecords, SpringRecord};
use crate::config::{ComponentConfig, ComponentSource, GridSpec, MaterialSpec, MeshSpec, Method, RunConfig, Spacing, Tolerances};
use crate::fem2d::DofSelector;

pub const BEARING_STIFFNESS: f64 = 2e9;
pub const LEAF_TRANSLATIONAL_STIFFNESS: f64 = 2e10;
pub const LEAF_ROTATIONAL_STIFFNESS: f64 = 5e8;
pub const DAMPING_RATIO: f64 = 0.01;
pub const F_MAX_HZ: f64 = 2000.0;
pub const GAMMA: f64 = 0.05;

const FRAME: usize = 0;
const Y_STAGE: usize = 1;
const Z_STAGE: usize = 2;

fn steel() -> MaterialSpec {
    MaterialSpec {
        youngs_modulus: 210e9,
        poisson_ratio: 0.3,
        density: 7800.0,
        thickness: 0.02,
    }
}

fn at(component: usize, selector: DofSelector) -> ChannelRef {
    ChannelRef { component, selector }
}

fn spring(a: ChannelRef, b: ChannelRef, stiffness: f64) -> SpringRecord {
    SpringRecord {
        a,
        b: Some(b),
        stiffness,
    }
}

/// Frame `[0, 2] × [0, 0.25]` clamped at both ends; y-stage a right triangle
/// on the frame top with its right angle at (1.25, 0.25); z-stage a right
/// triangle with its right angle at (1.05, 0.55). Inputs: horizontal force
/// on the y-stage's left tip and vertical force on the z-stage's left end.
/// Outputs: both displacements of the z-stage tip at (1.4, 0.55).
pub fn demo_config() -> RunConfig {
    let eps = 1e-6;
    let frame = ComponentSource::Fe {
        mesh: MeshSpec::Rectangle {
            width: 2.0,
            height: 0.25,
            nx: 24,
            ny: 3,
            order: 2,
        },
        material: steel(),
        mirror_x: false,
        origin: [0.0, 0.0],
        fixed: vec![[-eps, -eps, eps, 0.25 + eps], [2.0 - eps, -eps, 2.0 + eps, 0.25 + eps]],
    };
    let y_stage = ComponentSource::Fe {
        mesh: MeshSpec::RightTriangle {
            base: 0.4,
            height: 0.25,
            n: 8,
            order: 2,
        },
        material: steel(),
        mirror_x: true,
        origin: [1.25, 0.25],
        fixed: vec![],
    };
    let z_stage = ComponentSource::Fe {
        mesh: MeshSpec::RightTriangle {
            base: 0.35,
            height: 0.15,
            n: 8,
            order: 2,
        },
        material: steel(),
        mirror_x: false,
        origin: [1.05, 0.55],
        fixed: vec![],
    };
    let component = |id: &str, source| ComponentConfig {
        id: id.into(),
        source,
        damping_ratio: Some(DAMPING_RATIO),
    };

    let mut springs: Vec<SpringRecord> = [0.9, 1.05, 1.2]
        .iter()
        .map(|&x| {
            spring(
                at(FRAME, DofSelector::Uy { at: [x, 0.25] }),
                at(Y_STAGE, DofSelector::Uy { at: [x, 0.25] }),
                BEARING_STIFFNESS,
            )
        })
        .collect();
    let (y_top, z_bottom) = ([1.25, 0.5], [1.25, 0.55]);
    springs.push(spring(
        at(Y_STAGE, DofSelector::Ux { at: y_top }),
        at(Z_STAGE, DofSelector::Ux { at: z_bottom }),
        LEAF_TRANSLATIONAL_STIFFNESS,
    ));
    springs.push(spring(
        at(Y_STAGE, DofSelector::Uy { at: y_top }),
        at(Z_STAGE, DofSelector::Uy { at: z_bottom }),
        LEAF_TRANSLATIONAL_STIFFNESS,
    ));
    springs.push(spring(
        at(
            Y_STAGE,
            DofSelector::Rot {
                from: [1.25, 0.4],
                to: y_top,
            },
        ),
        at(
            Z_STAGE,
            DofSelector::Rot {
                from: [1.15, 0.55],
                to: [1.35, 0.55],
            },
        ),
        LEAF_ROTATIONAL_STIFFNESS,
    ));
    let poi = [1.4, 0.55];
    RunConfig {
        components: vec![
            component("frame", frame),
            component("y-stage", y_stage),
            component("z-stage", z_stage),
        ],
        interconnection: InterconnectionRecords {
            springs,
            inputs: vec![
                at(Y_STAGE, DofSelector::Ux { at: [0.85, 0.25] }),
                at(Z_STAGE, DofSelector::Uy { at: [1.05, 0.55] }),
            ],
            outputs: vec![at(Z_STAGE, DofSelector::Ux { at: poi }), at(Z_STAGE, DofSelector::Uy { at: poi })],
        },
        grid: GridSpec {
            f_min_hz: Some(F_MAX_HZ / 100.0),
            f_max_hz: F_MAX_HZ,
            n_points: 100,
            spacing: Spacing::Log,
        },
        gamma: GAMMA,
        methods: vec![Method::Standard(1), Method::Standard(2), Method::Standard(3), Method::Proposed],
        reference_multiplier: 10.0,
        output_dir: None,
        seed: 1,
        tolerances: Tolerances::default(),
    }
}

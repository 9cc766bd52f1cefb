//! Shared fixtures for unit tests.

use crate::material::{FlowParams, MaterialParams, TempTable};
use crate::mesh::BladeParams;

pub(crate) fn test_material() -> MaterialParams {
    let flow = FlowParams {
        eps_h: TempTable::constant(3e-4),
        k_h: TempTable::from_pairs(&[(293.0, 600.0), (1600.0, 90.0)]),
        n_h: TempTable::constant(2.0),
        c: TempTable::constant(30_000.0),
        d: TempTable::constant(300.0),
        big_m: TempTable::constant(1800.0),
        m_exp: TempTable::constant(4.0),
        r0: TempTable::from_pairs(&[(293.0, 500.0), (1600.0, 40.0)]),
        q: TempTable::constant(40.0),
        b: TempTable::constant(10.0),
    };
    MaterialParams {
        c11: TempTable::from_pairs(&[(293.0, 250_000.0), (1600.0, 180_000.0)]),
        c12: TempTable::from_pairs(&[(293.0, 160_000.0), (1600.0, 120_000.0)]),
        c44: TempTable::from_pairs(&[(293.0, 120_000.0), (1600.0, 85_000.0)]),
        alpha: TempTable::from_pairs(&[(293.0, 1.4e-5), (1600.0, 1.8e-5)]),
        octahedral: flow.clone(),
        cubic: FlowParams {
            r0: TempTable::from_pairs(&[(293.0, 650.0), (1600.0, 55.0)]),
            ..flow
        },
    }
}

pub(crate) fn small_blade() -> BladeParams {
    BladeParams {
        length: 40.0,
        root_chord: 16.0,
        tip_chord: 12.0,
        thickness_ratio: 0.4,
        twist: 0.2,
        divisions: [2, 2, 5],
        foot_fraction: 0.2,
        axis_offset: 120.0,
        density: 8.4e-9,
    }
}

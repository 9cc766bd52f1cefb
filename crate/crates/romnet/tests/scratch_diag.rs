// Temporary diagnostic rig (deleted before release).
use romnet::fem::{solve_cycle, FemContext, NewtonOptions};
use romnet::loading::CycleSchedule;
use romnet::material::{von_mises, FlowParams, MaterialParams, TempTable};
use romnet::mesh::{generate_toy_blade_mesh, BladeParams, Region};

fn test_material() -> MaterialParams {
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

#[test]
#[ignore]
fn diag() {
    let blade = BladeParams {
        length: 40.0,
        root_chord: 16.0,
        tip_chord: 12.0,
        thickness_ratio: 0.4,
        twist: 0.2,
        divisions: [2, 2, 5],
        foot_fraction: 0.2,
        axis_offset: 120.0,
        density: 8.4e-9,
    };
    let mesh = generate_toy_blade_mesh(&blade).unwrap();
    let material = test_material();
    let ctx = FemContext::new(&mesh, &blade, &material).unwrap();
    let schedule = CycleSchedule::standard(110.0, 700.0, 0.0, 0.5);
    let t_max: Vec<f64> = mesh.nodes.iter().map(|p| 900.0 + 280.0 * (-((p[0] - 4.0) / 5.0_f64).powi(2)).exp()).collect();
    let start = std::time::Instant::now();
    let traj = solve_cycle(&ctx, &t_max, &schedule, &NewtonOptions::default()).unwrap();
    println!("solve took {:?}, {} newton iters", start.elapsed(), traj.newton_iterations);
    let stresses = traj.stresses_at_max_speed(&schedule);
    let mut vm: Vec<f64> = stresses.iter().map(von_mises).collect();
    vm.sort_by(f64::total_cmp);
    println!("von mises: min {:.1} median {:.1} max {:.1}", vm[0], vm[vm.len() / 2], vm[vm.len() - 1]);
    let airfoil_vm: Vec<f64> = stresses
        .iter()
        .zip(&mesh.region)
        .filter(|(_, r)| **r == Region::Airfoil)
        .map(|(s, _)| von_mises(s))
        .collect();
    let max_airfoil = airfoil_vm.iter().fold(0.0f64, |m, &v| m.max(v));
    println!("airfoil max vm {max_airfoil:.1}");
    let p = traj.final_p_cum();
    let pmax = p.iter().fold(0.0f64, |m, &v| m.max(v));
    println!("p_cum max {pmax:.3e}, yielded IPs {}", p.iter().filter(|&&v| v > 0.0).count());
    // What drive would be needed: r0 at 1150 K
    let hot = material.at(1150.0).unwrap();
    println!("r0(oct) at 1150K = {:.1}, k_h = {:.1}", hot.octahedral.r0, hot.octahedral.k_h);
}

//! Worked examples with hand or independent oracles.

use droopgrid::components::{vsi_derivatives_offgrid, vsi_derivatives_ongrid, VsiStateOff, VsiStateOn};
use droopgrid::config::RunConfig;
use droopgrid::smallsignal::{
    analyze, linearize, linspace, parameter_sweep, ModelOrder, SweepParam,
};
use droopgrid::solver::{jacobian, solve_state, FnField};
use droopgrid::{ControlParams, DqPair, Field, GridStatus, Mode, SystemModel, VsiParams};

fn on_grid() -> SystemModel {
    SystemModel::fairview(GridStatus::OnGrid, 500e3, 220e3).unwrap()
}

fn off_grid() -> SystemModel {
    SystemModel::fairview(GridStatus::OffGrid, 250e3, 100e3).unwrap()
}

#[test]
fn active_power_enters_frequency_droop() {
    let m = off_grid();
    let (ctrl, vsi, nom) = (m.vsis[0].control, m.vsis[0], m.nominals);
    let x = VsiStateOff {
        theta: 0.0,
        omega_r: nom.omega_nom + 0.3,
        v_r: nom.v_nom,
        i_o: DqPair::new(120.0, 0.0),
    };
    let d = vsi_derivatives_offgrid(&x, &ctrl, &vsi, &nom, DqPair::new(nom.v_nom, 0.0), nom.omega_nom);
    let p = 1.5 * nom.v_nom * 120.0;
    let want = (nom.omega_nom - x.omega_r - ctrl.n * (p - ctrl.p_ref)) / ctrl.tau_s;
    assert!((d.d_omega - want).abs() < 1e-12 * want.abs());
    assert_eq!(d.d_theta, x.omega_r - nom.omega_nom);
}

#[test]
fn negative_k_m_keeps_the_voltage_law() {
    let m = on_grid();
    let nom = m.nominals;
    let ctrl = ControlParams {
        m: 1e-5,
        ..ControlParams::selected()
    };
    assert!(ctrl.tau_s * ctrl.m_int > ctrl.m && ctrl.k_m() < 0.0);
    let vsi = VsiParams {
        control: ctrl,
        ..VsiParams::fairview()
    };
    let x = VsiStateOn {
        theta: 0.1,
        omega_r: nom.omega_nom,
        v_r: 0.98 * nom.v_nom,
        psi: 3.0,
        i_o: DqPair::new(50.0, -20.0),
    };
    let d = vsi_derivatives_ongrid(&x, &ctrl, &vsi, &nom, DqPair::new(nom.v_nom, 0.0), nom.omega_nom).unwrap();
    let (_, q) = droopgrid::components::source_power(x.v_r, x.theta, x.i_o);
    let err = nom.v_nom - x.v_r - ctrl.m_int * x.psi;
    let want = (ctrl.k_m() * err - ctrl.m * q) / ctrl.tau_s;
    assert!((d.d_v - want).abs() < 1e-12 * want.abs());
}

#[test]
fn on_grid_equilibrium_zeroes_the_field_and_vsi_powers() {
    let m = on_grid();
    let (x, rep) = solve_state(&m, &m.flat_start(), &Default::default()).unwrap();
    assert!(rep.residual < 1e-9);
    let w = m.residual_weights();
    let f = m.vector_field(&x).unwrap();
    let worst = f.values.iter().zip(&w).map(|(v, w)| (v * w).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    let o = m.outputs(&x).unwrap();
    let s = 1e-6 * m.vsis[0].control.rated_apparent();
    assert!(o.p.iter().chain(&o.q).all(|v| v.abs() <= s));
    // The PCC voltage stays within the band the droop gains allow.
    let dev = (o.v_pcc.magnitude() / m.nominals.v_nom - 1.0).abs();
    assert!(dev < 0.05, "{dev}");
}

#[test]
fn off_grid_symmetric_split() {
    let m = off_grid();
    let (x, _) = solve_state(&m, &m.flat_start(), &Default::default()).unwrap();
    let o = m.outputs(&x).unwrap();
    assert!((o.p[0] - o.p[1]).abs() <= 1e-9 * o.p[0]);
    // A constant-impedance load draws less than its rating at the sagged
    // voltage; each inverter carries half of what is drawn plus its line loss.
    assert!((o.p_pcc[0] + o.p_pcc[1] - o.p_load).abs() <= 1e-6 * o.p_load);
    assert!(o.p[0] > 0.45 * 250e3 && o.p[0] < 0.5 * 250e3);
}

#[test]
fn droop_frequency_identity_off_grid() {
    let mut m = off_grid();
    let (x, _) = solve_state(&m, &m.flat_start(), &Default::default()).unwrap();
    let p = m.outputs(&x).unwrap().p;
    for (v, p) in m.vsis.iter_mut().zip(p) {
        v.control.p_ref = p;
    }
    let (x, _) = solve_state(&m, &x, &Default::default()).unwrap();
    let o = m.outputs(&x).unwrap();
    for i in 0..2 {
        let c = &m.vsis[i].control;
        let dw = m.nominals.omega_nom - x.omega_r(i);
        assert!((dw - c.n * (o.p[i] - c.p_ref)).abs() < 1e-9);
        assert!(dw.abs() < 1e-3, "{dw}");
    }
}

#[test]
fn quadratic_jacobian() {
    fn f(x: &[f64], dx: &mut [f64]) {
        dx[0] = x[0] * x[0];
        dx[1] = x[1];
    }
    let j = jacobian(&FnField::new(2, f as fn(&[f64], &mut [f64])), &[3.0, 5.0], 1e-6).unwrap();
    let want = [[6.0, 0.0], [0.0, 1.0]];
    for r in 0..2 {
        for c in 0..2 {
            assert!((j[(r, c)] - want[r][c]).abs() < 1e-6);
        }
    }
}

#[test]
fn on_grid_linearization_shape() {
    let m = on_grid();
    let (x, _) = solve_state(&m, &m.flat_start(), &Default::default()).unwrap();
    let lin = linearize(&m, &x, 1e-9).unwrap();
    assert_eq!(lin.a.shape(), (15, 15));
    let g = Mode::OnGrid.index(Field::ThetaG).unwrap();
    assert!(lin.a.row(g).iter().all(|v| *v == 0.0));

    // Swapping the two inverters' indices leaves A unchanged.
    let fields = Mode::OnGrid.fields();
    let swap = |f: Field| match f {
        Field::Theta(i) => Field::Theta(1 - i),
        Field::OmegaR(i) => Field::OmegaR(1 - i),
        Field::Vr(i) => Field::Vr(1 - i),
        Field::Psi(i) => Field::Psi(1 - i),
        Field::IoD(i) => Field::IoD(1 - i),
        Field::IoQ(i) => Field::IoQ(1 - i),
        other => other,
    };
    let perm: Vec<usize> = fields.iter().map(|f| Mode::OnGrid.index(swap(*f)).unwrap()).collect();
    let scale = lin.a.amax();
    for r in 0..15 {
        for c in 0..15 {
            assert!((lin.a[(r, c)] - lin.a[(perm[r], perm[c])]).abs() <= 1e-9 * scale);
        }
    }
}

#[test]
fn linearization_is_continuous() {
    let m = on_grid();
    let (x, _) = solve_state(&m, &m.flat_start(), &Default::default()).unwrap();
    let a0 = m.exact_jacobian(&x.values).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..5 {
        let delta = 10f64.powi(-k);
        let xs: Vec<f64> = x.values.iter().map(|v| v + delta * (1.0 + v.abs())).collect();
        let d = (m.exact_jacobian(&xs).unwrap() - &a0).amax();
        assert!(d < last);
        last = d;
    }
    assert!(last < 1e-3 * a0.amax());
}

#[test]
fn reduced_on_grid_model_is_stable() {
    let a = analyze(&on_grid(), ModelOrder::Reduced, &Default::default()).unwrap();
    assert_eq!(a.linear.order(), 9);
    assert!(a.spectrum.is_stable());
}

#[test]
fn n_sweep_abscissa_rises_over_the_upper_range() {
    let sweep = parameter_sweep(
        &on_grid(),
        SweepParam::N,
        &linspace(1.04e-5, 3.64e-5, 11),
        ModelOrder::Reduced,
        &Default::default(),
    )
    .unwrap();
    let a: Vec<f64> = sweep.abscissae().into_iter().map(Option::unwrap).collect();
    assert!(a[10] > a[5], "{a:?}");
}

#[test]
fn m_int_does_not_enter_the_off_grid_model() {
    let sweep = parameter_sweep(
        &off_grid(),
        SweepParam::MInt,
        &linspace(0.6e-3, 0.84e-3, 5),
        ModelOrder::Reduced,
        &Default::default(),
    )
    .unwrap();
    let first = sweep.points[0].spectrum.as_ref().unwrap().values();
    for p in &sweep.points {
        assert_eq!(p.spectrum.as_ref().unwrap().values(), first);
    }
}

#[test]
fn tau_sweep_is_stable_over_the_admissible_range() {
    for m in [on_grid(), off_grid()] {
        let sweep = parameter_sweep(
            &m,
            SweepParam::TauS,
            &linspace(24.7e-3, 41.2e-3, 6),
            ModelOrder::Reduced,
            &Default::default(),
        )
        .unwrap();
        assert!(sweep.points.iter().all(|p| p.spectrum.as_ref().unwrap().is_stable()));
    }
}

fn run_cli(args: &[&str]) -> (std::process::Output, std::path::PathBuf) {
    let dir = std::env::temp_dir().join(format!("droopgrid-examples-{}-{}", std::process::id(), args.join("_").replace(['/', ' '], "")));
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_droopgrid"))
        .args(args)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    (out, dir)
}

#[test]
fn cli_verify_reports_theorem_line() {
    let (out, dir) = run_cli(&["verify"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("Theorem 1: PASS (max |P_i| = ")), "{text}");
    assert!(out.status.success());
    assert!(dir.join("manifest.json").exists());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn cli_tau_sweep_csv_columns() {
    let (out, dir) = run_cli(&["sweep", "--param", "tau_s", "--from", "24.7", "--to", "41.2", "--points", "4"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("sweep_tau_s.csv")).unwrap();
    let head: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(head[..3], ["value", "re_lambda_1", "im_lambda_1"]);
    assert!(head.contains(&"abscissa"));
    assert_eq!(csv.lines().count(), 5);
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn cli_scenario_writes_series_and_settling() {
    let cfg = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fairview.json");
    let (out, dir) = run_cli(&["scenario", "--config", cfg.to_str().unwrap(), "--events", "canonical"]);
    // Exit status reflects the run, not the settling targets.
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("scenario.csv")).unwrap();
    assert!(csv.starts_with("t,p_1,p_2,q_1,q_2,p_grid,q_grid,p_load,q_load,v_pcc_rms_ll,frequency,i_gs"));
    assert!(std::fs::read_to_string(dir.join("settling.csv")).unwrap().lines().count() > 1);
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn config_defaults_match_the_model_presets() {
    let cfg = RunConfig::fairview();
    let m = cfg.model(GridStatus::OnGrid).unwrap();
    let r = on_grid();
    assert!((m.load.r_load - r.load.r_load).abs() < 1e-12);
    assert!((m.vsis[0].l_l - r.vsis[0].l_l).abs() < 1e-15);
}

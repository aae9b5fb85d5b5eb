//! Rate extraction and sweep bookkeeping.

use dressed_eme::analysis::{one_mode_sweep, ModelKind};
use dressed_eme::config::RunConfig;
use dressed_eme::displacement::linear_rates;
use dressed_eme::eme::EmeVariant;
use dressed_eme::lindblad::Truncation;

#[test]
fn fitted_rate_is_insensitive_to_window_start() {
    let cfg = RunConfig::preset("fig2").unwrap();
    let mut setup = cfg.two_mode_setup().unwrap();
    setup.eme_truncation = Truncation { dim_q: 4, dim_c: 5 };
    let (_, nm) = cfg.resolved_circuit().unwrap();
    let chi = setup.chi(&nm).unwrap();
    let p = setup.driven(&nm, nm.omega_c - 0.5 * chi, 0.5).unwrap();
    let (_, kc) = linear_rates(&nm, setup.circuit.kappa_flat);
    let mut kappas = Vec::new();
    for scale in [0.8, 1.0, 1.2] {
        setup.fit.t_start = Some(scale * 5.0 / kc);
        let (fit, diag) = setup.run(&nm, &p, ModelKind::Eme(EmeVariant::Full)).unwrap();
        assert!(diag.within_limits());
        kappas.push(fit.kappa);
    }
    for k in [kappas[0], kappas[2]] {
        assert!((k / kappas[1] - 1.0).abs() < 0.01, "{kappas:?}");
    }
}

#[test]
fn one_mode_sweep_is_deterministic_and_normalized() {
    let cfg = RunConfig::preset("fig4").unwrap();
    let setup = cfg.sweep.one_mode.unwrap().setup;
    let csv = || {
        let res = one_mode_sweep(&setup, &[0.0, 0.2], &[0.0, 1.0], 1).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        (res, buf)
    };
    let (res, first) = csv();
    let (_, second) = csv();
    assert_eq!(first, second);
    for row in res.rows.iter().filter(|r| r.axis_value == 0.0) {
        assert_eq!(row.delta_kappa_norm, 0.0);
    }
    for row in res.series("eps=0") {
        assert!((row.kappa_ratio - 1.0).abs() < 1e-3, "{}", row.kappa_ratio);
    }
    let header = String::from_utf8(first).unwrap();
    assert!(header.starts_with("variant,axis_value,kappa,kappa_err,delta_kappa_norm"));
}

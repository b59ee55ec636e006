use tranche_wasm_demo::{copula_losses, gpl_losses, spread_curve};

fn total(p: &[f64]) -> f64 {
    p.iter().sum()
}

#[test]
fn copula_losses_are_a_distribution() {
    let p = copula_losses(125, 0.01, 0.4, 0.3, 5.0).unwrap();
    assert_eq!(p.len(), 126);
    assert!((total(&p) - 1.0).abs() < 1e-10);
    assert!(p.iter().all(|x| *x >= 0.0));
}

#[test]
fn gpl_losses_are_a_distribution() {
    let p = gpl_losses(vec![1, 2, 5, 20], vec![0.5, 0.2, 0.05, 0.01], 125, 0.4, 3.0).unwrap();
    assert!((total(&p) - 1.0).abs() < 1e-9);
    assert!(gpl_losses(vec![2, 1], vec![0.1, 0.1], 125, 0.4, 1.0).is_err());
}

#[test]
fn equity_upfront_falls_with_correlation() {
    let c = spread_curve(40.0, 0.03, 5.0, 0.0, 0.03, 0.9, 7).unwrap();
    assert_eq!(c.len(), 7);
    assert!(c.windows(2).all(|w| w[1] < w[0]));
}

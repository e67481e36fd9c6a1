use scatter_core::recon::{err_metrics_with, ReconConfig};
use scatter_core::synth::reference_image;
use scatter_core::{
    recon_loss_grad, reconstruct, BoundaryMode, ColorSpace, Precision, ScatteringConfig, Transform,
};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn reconstruction_makes_progress_and_reports_honestly() {
    let x = reference_image(64);
    let cfg = ScatteringConfig::new(2, 8).with_boundary(BoundaryMode::Periodic);
    let (t, fb) = Transform::for_input(&cfg, 64).unwrap();
    let target = t.forward(&x).unwrap();
    let rc = ReconConfig::default();
    let a = reconstruct(&target, &fb, &cfg, &rc, 7).unwrap();
    assert_eq!(a.history.len(), rc.iterations + 1);

    let loss: Vec<f64> = a.history.iter().map(|h| h.loss).collect();
    assert!(median(loss[150..=200].to_vec()) < median(loss[..=50].to_vec()));

    let (_, err_s) = err_metrics_with(&t, &a.image, &x).unwrap();
    let last = a.history.last().unwrap();
    assert!(
        (last.err_s - err_s).abs() <= 1e-12 * err_s.max(1.0),
        "{} vs {err_s}",
        last.err_s
    );
    assert_eq!(a.image.color_space(), ColorSpace::Rgb);

    let b = reconstruct(&target, &fb, &cfg, &rc, 7).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.history, b.history);
}

#[test]
fn loss_vanishes_at_a_matching_image() {
    let cfg = ScatteringConfig::new(2, 4).with_precision(Precision::Double);
    let (t, fb) = Transform::for_input(&cfg, 16).unwrap();
    let y = reference_image(16);
    let target = t.forward(&y).unwrap();
    let (loss, grad) = recon_loss_grad(&target, &y, &fb, &cfg).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.data().iter().all(|g| *g == 0.0));

    // |S(y) − S(z)|² is symmetric in which image is the target
    let z = y
        .with_data(y.data().iter().map(|v| 1.0 - v).collect())
        .unwrap();
    let (l1, _) = recon_loss_grad(&t.forward(&z).unwrap(), &y, &fb, &cfg).unwrap();
    let (l2, _) = recon_loss_grad(&target, &z, &fb, &cfg).unwrap();
    assert!((l1 - l2).abs() <= 1e-12 * l1);
}

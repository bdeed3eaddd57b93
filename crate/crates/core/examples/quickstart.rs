use matnet_core::inference::{fdr_threshold, global_test};
use matnet_core::linalg::ar1_covariance;
use matnet_core::matnorm::{build_model, sample_matrix_normal, KroneckerModel, ModelKind};
use matnet_core::rng::Rng;
use matnet_core::stats::{run_pipeline, whiten_data_driven, LambdaPolicy};

fn main() -> matnet_core::Result<()> {
    // Banded ground truth on 50 locations, AR(1) temporal nuisance.
    let mut rng = Rng::new(7);
    let omega_l = build_model(ModelKind::Model1, 50, &mut rng)?;
    let model = KroneckerModel::from_precisions(omega_l, ar1_covariance(20, 0.4)?)?;
    let x = sample_matrix_normal(&model, 30, &mut rng)?;

    let w = whiten_data_driven(&x)?;
    let out = run_pipeline(&w, LambdaPolicy::Tuned)?;
    let global = global_test(&out.statistics, 0.05)?;
    let edges = fdr_threshold(&out.statistics, 0.1)?;
    println!(
        "global reject = {} (p = {:.2e}), edges selected = {}",
        global.reject,
        global.p_value,
        edges.rejected.len()
    );
    Ok(())
}

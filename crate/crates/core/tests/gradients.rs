//! Tape gradients against central differences for every primitive in the
//! catalogue, on seeded random instances.

mod support;

use proptest::prelude::*;
use support::{catalogue, max_grad_error, Gen, GRAD_TOL};

fn check(name: &str, seed: u64) -> Result<(), TestCaseError> {
    let prim = catalogue().into_iter().find(|p| p.name == name).expect("primitive is catalogued");
    let case = (prim.make)(&Gen::new(seed)).map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
    let err = max_grad_error(&case).map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
    prop_assert!(err <= GRAD_TOL, "{name} seed {seed}: relative error {err:e}");
    Ok(())
}

macro_rules! gradient_tests {
    ($($name:ident),* $(,)?) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(50))]
            $(
                #[test]
                fn $name(seed in any::<u64>()) {
                    check(stringify!($name), seed)?;
                }
            )*
        }
    };
}

gradient_tests!(
    add, sub, mul, scale, neg, add_scalar, add_row, matmul, matmul_t, transpose, reshape, concat_rows, concat_cols,
    slice, gather_rows, sum, mean, exp, log, sqrt, tanh, sigmoid, relu, leaky_relu, elu, abs, log_cosh, huber,
    max_all, log_softmax_rows, pick_cols, scale_rows, segment_sum, segment_softmax, spmm, conv, pool_mean, pool_max,
    affine_layer, mlp, conv1d_layer, conv2d_layer, pool_layer, cnn, mp_generic, mp_kipf_welling, mp_graphsage, gat,
    gat_no_self_loops, gcn_encoder_decoder, cross_entropy, loss_mse, loss_rmse, loss_mae, loss_huber, loss_log_cosh,
);

#[test]
fn every_catalogued_primitive_is_tested() {
    assert_eq!(catalogue().len(), 56);
}


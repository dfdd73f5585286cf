#[path = "common/gradcheck.rs"]
mod gradcheck;

#[test]
fn detector_backward_matches_finite_differences() {
    gradcheck::detector();
}

#[test]
fn detector_dropout_backward_uses_the_same_mask() {
    gradcheck::detector_dropout();
}

#[test]
fn generator_backward_matches_finite_differences() {
    gradcheck::generator();
}

#[test]
fn discriminator_backward_matches_finite_differences() {
    gradcheck::discriminator();
}

#[test]
fn layer_primitives_match_finite_differences() {
    gradcheck::layer_primitives();
}

#[test]
fn losses_match_finite_differences() {
    gradcheck::losses();
}

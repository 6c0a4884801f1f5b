mod support;

use support::gradcheck;

#[test]
fn matmul_and_bmm() {
    gradcheck::matmul_and_bmm();
}

#[test]
fn shape_operations() {
    gradcheck::shape_operations();
}

#[test]
fn elementwise_binary() {
    gradcheck::elementwise_binary();
}

#[test]
fn elementwise_unary() {
    gradcheck::elementwise_unary();
}

#[test]
fn message_passing() {
    gradcheck::message_passing();
}

#[test]
fn reductions() {
    gradcheck::reductions();
}

#[test]
fn losses() {
    gradcheck::losses();
}

#[test]
fn sci_forward_composite() {
    gradcheck::sci_forward_composite();
}

#[test]
fn total_loss_composite() {
    gradcheck::total_loss_composite();
}

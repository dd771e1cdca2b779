use cubic_delta::analytic::DeltaKernel;
use cubic_delta::analytic::WeightSpec;
use cubic_delta::delta::{poisson_swap_residual, DeltaParams};
use cubic_delta::forms::DiagonalCubicForm;
use std::time::Instant;

fn main() {
    let f = DiagonalCubicForm::fermat(4);
    let w = WeightSpec::fermat_default(4);
    let params = DeltaParams::for_x(6.0);
    let kernel = DeltaKernel::new(params.y).unwrap();
    for n in [1u64, 4, 12] {
        let t0 = Instant::now();
        let rep = poisson_swap_residual(&f, &w, &kernel, &params, n).unwrap();
        println!(
            "swap n={n:2} c_max={} lhs={:+.6e} rhs={:+.6e} resid={:.3e} rel={:.3e} [{:.2?}]",
            rep.c_max, rep.lhs, rep.rhs, rep.residual, rep.residual / rep.scale, t0.elapsed()
        );
    }
}

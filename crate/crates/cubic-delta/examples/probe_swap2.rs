use cubic_delta::analytic::{DeltaKernel, GridSpec, OscContext, WeightSpec};
use cubic_delta::delta::DeltaParams;
use cubic_delta::expsums::expsum;
use cubic_delta::forms::DiagonalCubicForm;

fn main() {
    let f = DiagonalCubicForm::fermat(4);
    let w = WeightSpec::fermat_default(4);
    let params = DeltaParams::for_x(6.0);
    let kernel = DeltaKernel::new(params.y).unwrap();
    let grid = GridSpec::default();

    // 1. I_0(1) via OscContext vs naive Riemann sum over a fine grid
    let ctx = OscContext::new(&f, &w, &kernel, 1, 6.0, &grid).unwrap();
    let i0 = ctx.integrate(&[0, 0, 0, 0]).re;
    // naive Riemann: step 0.05 over the support box
    let step = 0.1f64;
    let mut riemann = 0.0;
    let y = kernel.y();
    let axes: Vec<(f64, f64)> = (0..4).map(|i| w.axis_interval(i)).collect();
    let counts: Vec<usize> = axes.iter().map(|&(lo, hi)| ((hi - lo) * 6.0 / step) as usize).collect();
    for a in 0..counts[0] {
        let x0 = 6.0 * axes[0].0 + (a as f64 + 0.5) * step;
        for b in 0..counts[1] {
            let x1 = 6.0 * axes[1].0 + (b as f64 + 0.5) * step;
            for c in 0..counts[2] {
                let x2 = 6.0 * axes[2].0 + (c as f64 + 0.5) * step;
                for d in 0..counts[3] {
                    let x3 = 6.0 * axes[3].0 + (d as f64 + 0.5) * step;
                    let u = [x0 / 6.0, x1 / 6.0, x2 / 6.0, x3 / 6.0];
                    let wt = w.eval(&u);
                    if wt > 0.0 {
                        let fx = x0.powi(3) + x1.powi(3) + x2.powi(3) + x3.powi(3);
                        riemann += wt * kernel.h(1.0 / y, fx / (y * y)) * step.powi(4);
                    }
                }
            }
        }
    }
    println!("I_0(1): osc = {i0:.6}, riemann = {riemann:.6}");

    // 2. direct sum over small c-box of S_c(n) I_c(n) at n = 4
    for n in [1u64, 4] {
        let ctx = OscContext::new(&f, &w, &kernel, n, 6.0, &grid).unwrap();
        let mut lhs = 0.0;
        for c1 in -2i64..=2 {
            for c2 in -2i64..=2 {
                for c3 in -2i64..=2 {
                    for c4 in -2i64..=2 {
                        let c = [c1, c2, c3, c4];
                        let s = expsum(&f, &c, n).unwrap().value;
                        if s == 0.0 { continue; }
                        let ic = ctx.integrate(&c).re;
                        lhs += s * ic;
                    }
                }
            }
        }
        lhs /= (n as f64).powi(4);
        println!("n={n}: direct-sum LHS (c_max=2) = {lhs:.6}");
    }
}

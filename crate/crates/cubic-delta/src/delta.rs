//! Pipeline assembly: direct counts, the per-modulus Poisson-swap identity,
//! structured-term sums against the subspace densities, and the bias/error
//! split audit.

use crate::analytic::{
    kernel_support_bound, sigma_lperp, DeltaKernel, GridSpec, OscContext, WeightSpec,
};
use crate::arith::{self, factor, i64_mod};
use crate::error::{Error, Result};
use crate::expsums::{self, pairwise_sum, pairwise_sum_complex, ExpSumCache};
use crate::forms::DiagonalCubicForm;
use crate::lattices::{enumerate_lines, LineSpace};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Tunable parameters of the delta pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaParams {
    pub x: f64,
    pub y: f64,
    /// Modulus cutoff; the kernel support bound caps it.
    pub n_max: u64,
    /// Cutoff for the dual-vector box.
    pub c_max: i64,
    /// Bias/error cut parameter P.
    pub p_cut: u64,
    pub grid: GridSpec,
    /// 0 = use all cores.
    pub workers: usize,
}

impl DeltaParams {
    pub fn for_x(x: f64) -> Self {
        let y = x.powf(1.5);
        DeltaParams {
            x,
            y,
            n_max: (4.0 * y).ceil() as u64,
            c_max: x.powf(0.75).ceil() as i64,
            p_cut: 8,
            grid: GridSpec::default(),
            workers: 0,
        }
    }

    pub fn validate(&self, form: &DiagonalCubicForm, w: &WeightSpec) -> Result<()> {
        if self.x < 1.0 {
            return Err(Error::Scale("X must be at least 1".into()));
        }
        if self.p_cut < 1 {
            return Err(Error::Scale("P must be at least 1".into()));
        }
        let support = (kernel_support_bound(form, w).max(0.5) * 2.0 * self.y).ceil() as u64;
        if self.n_max > support {
            return Err(Error::Scale(format!(
                "n_max {} exceeds the kernel support bound {support}",
                self.n_max
            )));
        }
        Ok(())
    }
}

fn run_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(job)
    }
}

// ---------------------------------------------------------------------------
// Direct counts
// ---------------------------------------------------------------------------

/// N_{F,w}(X) = sum over integer x of w(x/X) on F(x) = 0, by meet-in-the-
/// middle aggregation of half sums (requires the product weight).
pub fn direct_count(form: &DiagonalCubicForm, w: &WeightSpec, x_scale: f64) -> Result<f64> {
    let m = form.m();
    let half = m / 2;
    let axis_range = |i: usize| -> (i64, i64) {
        let (lo, hi) = w.axis_interval(i);
        ((x_scale * lo).ceil() as i64, (x_scale * hi).floor() as i64)
    };
    let box_cost: u128 = (0..half)
        .map(|i| {
            let (lo, hi) = axis_range(i);
            (hi - lo + 1).max(0) as u128
        })
        .product();
    if box_cost > 400_000_000 {
        return Err(Error::Scale("direct count box too large".into()));
    }
    // A(v) = sum over the first half of w-products with F-half-value v
    let mut a_map: std::collections::HashMap<i128, f64> = std::collections::HashMap::new();
    let mut idx: Vec<i64> = (0..half).map(|i| axis_range(i).0).collect();
    if (0..half).any(|i| {
        let (lo, hi) = axis_range(i);
        lo > hi
    }) {
        return Ok(0.0);
    }
    'first: loop {
        let mut v = 0i128;
        let mut wt = 1.0;
        for (i, &xi) in idx.iter().enumerate() {
            v += form.coeff(i) as i128 * (xi as i128).pow(3);
            wt *= w.eval_axis(i, xi as f64 / x_scale);
        }
        if wt != 0.0 {
            *a_map.entry(v).or_insert(0.0) += wt;
        }
        let mut k = 0;
        loop {
            if k == half {
                break 'first;
            }
            idx[k] += 1;
            if idx[k] <= axis_range(k).1 {
                break;
            }
            idx[k] = axis_range(k).0;
            k += 1;
        }
    }
    // pair against the second half at the negated value
    let mut total = 0.0;
    let mut idx: Vec<i64> = (half..m).map(|i| axis_range(i).0).collect();
    if (half..m).any(|i| {
        let (lo, hi) = axis_range(i);
        lo > hi
    }) {
        return Ok(0.0);
    }
    'second: loop {
        let mut v = 0i128;
        let mut wt = 1.0;
        for (k, &xi) in idx.iter().enumerate() {
            let i = half + k;
            v += form.coeff(i) as i128 * (xi as i128).pow(3);
            wt *= w.eval_axis(i, xi as f64 / x_scale);
        }
        if wt != 0.0 {
            if let Some(&aw) = a_map.get(&(-v)) {
                total += wt * aw;
            }
        }
        let mut k = 0;
        loop {
            if k == half {
                break 'second;
            }
            idx[k] += 1;
            if idx[k] <= axis_range(half + k).1 {
                break;
            }
            idx[k] = axis_range(half + k).0;
            k += 1;
        }
    }
    Ok(total)
}

/// Naive oracle for small X.
pub fn direct_count_naive(form: &DiagonalCubicForm, w: &WeightSpec, x_scale: f64) -> Result<f64> {
    let m = form.m();
    let ranges: Vec<(i64, i64)> = (0..m)
        .map(|i| {
            let (lo, hi) = w.axis_interval(i);
            ((x_scale * lo).ceil() as i64, (x_scale * hi).floor() as i64)
        })
        .collect();
    let cost: u128 = ranges
        .iter()
        .map(|&(lo, hi)| (hi - lo + 1).max(0) as u128)
        .product();
    if cost > 100_000_000 {
        return Err(Error::Scale("naive count box too large".into()));
    }
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut x: Vec<i64> = ranges.iter().map(|&(lo, _)| lo).collect();
    'outer: loop {
        if form.eval_i128(&x) == 0 {
            let u: Vec<f64> = x.iter().map(|&v| v as f64 / x_scale).collect();
            total += w.eval(&u);
        }
        let mut k = 0;
        loop {
            if k == m {
                break 'outer;
            }
            x[k] += 1;
            if x[k] <= ranges[k].1 {
                break;
            }
            x[k] = ranges[k].0;
            k += 1;
        }
    }
    Ok(total)
}

/// sum over x of w(x/X) * delta(F(x)), the scalar delta symbol applied
/// pointwise. Agrees with direct_count up to the kernel's exactness.
pub fn pointwise_delta_count(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    kernel: &DeltaKernel,
    x_scale: f64,
) -> Result<f64> {
    let m = form.m();
    let ranges: Vec<(i64, i64)> = (0..m)
        .map(|i| {
            let (lo, hi) = w.axis_interval(i);
            ((x_scale * lo).ceil() as i64, (x_scale * hi).floor() as i64)
        })
        .collect();
    let cost: u128 = ranges
        .iter()
        .map(|&(lo, hi)| (hi - lo + 1).max(0) as u128)
        .product();
    if cost > 2_000_000 {
        return Err(Error::Scale("pointwise delta box too large".into()));
    }
    if ranges.iter().any(|&(lo, hi)| lo > hi) {
        return Ok(0.0);
    }
    let mut terms: Vec<(i64, f64)> = Vec::new();
    let mut x: Vec<i64> = ranges.iter().map(|&(lo, _)| lo).collect();
    'outer: loop {
        let u: Vec<f64> = x.iter().map(|&v| v as f64 / x_scale).collect();
        let wt = w.eval(&u);
        if wt != 0.0 {
            let t = form.eval_i128(&x);
            terms.push((i64::try_from(t).expect("desk scale"), wt));
        }
        let mut k = 0;
        loop {
            if k == m {
                break 'outer;
            }
            x[k] += 1;
            if x[k] <= ranges[k].1 {
                break;
            }
            x[k] = ranges[k].0;
            k += 1;
        }
    }
    let partials: Vec<f64> = terms
        .par_iter()
        .map(|&(t, wt)| wt * kernel.delta_pointwise(t))
        .collect();
    Ok(pairwise_sum(&partials))
}

// ---------------------------------------------------------------------------
// Poisson swap
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PoissonSwapReport {
    pub n: u64,
    pub c_max: i64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// l1 size of the exact side, the natural comparison scale.
    pub scale: f64,
}

/// Per-modulus identity: sum over all c of n^{-m} S_c(n) I_c(n) equals the
/// exact lattice sum of w(x/X) h(n/Y, F(x)/Y^2) c_n(F(x)). The left side is
/// truncated to the c-box and evaluated by axis-by-axis contraction.
pub fn poisson_swap_residual(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    kernel: &DeltaKernel,
    params: &DeltaParams,
    n: u64,
) -> Result<PoissonSwapReport> {
    let m = form.m();
    if m != 4 {
        return Err(Error::Scale("poisson swap check implemented for m = 4".into()));
    }
    if n > 50 || params.x > 8.5 {
        return Err(Error::Scale("poisson swap check needs n <= 50, X <= 8".into()));
    }
    let x_scale = params.x;
    let y = kernel.y();

    // exact side: finite sum over the integer support box
    let ranges: Vec<(i64, i64)> = (0..m)
        .map(|i| {
            let (lo, hi) = w.axis_interval(i);
            ((x_scale * lo).ceil() as i64, (x_scale * hi).floor() as i64)
        })
        .collect();
    let cn = arith::ramanujan_table(n)?;
    let mut rhs = 0.0;
    let mut scale = 0.0;
    let mut x: Vec<i64> = ranges.iter().map(|&(lo, _)| lo).collect();
    'outer: loop {
        let u: Vec<f64> = x.iter().map(|&v| v as f64 / x_scale).collect();
        let wt = w.eval(&u);
        if wt != 0.0 {
            let fx = form.eval_i128(&x) as f64;
            let h = kernel.h(n as f64 / y, fx / (y * y));
            if h != 0.0 {
                let residue = arith::i128_mod(form.eval_i128(&x), n);
                let term = wt * h * cn[residue as usize] as f64;
                rhs += term;
                scale += term.abs();
            }
        }
        let mut k = 0;
        loop {
            if k == m {
                break 'outer;
            }
            x[k] += 1;
            if x[k] <= ranges[k].1 {
                break;
            }
            x[k] = ranges[k].0;
            k += 1;
        }
    }

    // truncated side: contraction over a tensor grid; the c box scales with
    // n/X since the integral decays superpolynomially past that onset
    let c_max = ((3.0 * n as f64 / x_scale).ceil() as i64).max(2);
    let k_count = (2 * c_max + 1) as usize;
    let order = params.grid.order;
    let max_cycles = c_max as f64 * x_scale / n as f64;
    let panels = (((max_cycles * 8.0) / order as f64).ceil() as usize).max(3);
    let g = panels * order;
    let table_ctx = HContext::new(kernel, form, w, n, x_scale);
    let mut axis_nodes: Vec<Vec<(f64, f64, f64)>> = Vec::with_capacity(m);
    for i in 0..m {
        let (lo, hi) = w.axis_interval(i);
        let nodes = crate::analytic::panel_nodes(x_scale * lo, x_scale * hi, panels, order);
        axis_nodes.push(
            nodes
                .iter()
                .map(|&(xv, wt)| {
                    (
                        xv,
                        wt * w.eval_axis(i, xv / x_scale),
                        form.coeff(i) as f64 * xv * xv * xv,
                    )
                })
                .collect(),
        );
    }
    // phase matrices per axis: e(-c x / n)
    let phases: Vec<Vec<Complex64>> = (0..m)
        .map(|i| {
            let mut mat = Vec::with_capacity(k_count * g);
            for ci in -c_max..=c_max {
                for node in &axis_nodes[i] {
                    let ang = -2.0 * PI * ci as f64 * node.0 / n as f64;
                    mat.push(Complex64::new(ang.cos(), ang.sin()));
                }
            }
            mat
        })
        .collect();
    // W over the grid: w * h * weights (axis weight folded per axis)
    // contraction level 1: for each c1, B1[c1][g2,g3,g4]
    let y2 = y * y;
    // S_c(n) residue table composed from prime powers
    let s_table = STable::build(form, n)?;

    let c_range: Vec<i64> = (-c_max..=c_max).collect();
    let k = k_count;
    // Stage A: one sweep over the grid computes, for every c1 at once,
    //   B1[i2][i3][i4][c1] = sum_{i1} (w h)(i1..i4) phase1(c1, i1).
    // One h evaluation per grid point, K multiplications.
    let i2_list: Vec<usize> = (0..g).collect();
    let b1: Vec<Vec<Complex64>> = run_pool(params.workers, || {
        i2_list
            .par_iter()
            .map(|&i2| {
                let (_, wt2, f2) = axis_nodes[1][i2];
                let mut slice = vec![Complex64::new(0.0, 0.0); g * g * k];
                if wt2 == 0.0 {
                    return slice;
                }
                let mut v1 = vec![0.0f64; g];
                for (i3, &(_, wt3, f3)) in axis_nodes[2].iter().enumerate() {
                    if wt3 == 0.0 {
                        continue;
                    }
                    for (i4, &(_, wt4, f4)) in axis_nodes[3].iter().enumerate() {
                        if wt4 == 0.0 {
                            continue;
                        }
                        let base = f2 + f3 + f4;
                        let wprod = wt2 * wt3 * wt4;
                        // per i1 the real amplitude w * h
                        let mut any = false;
                        for (i1, &(_, wt1, f1)) in axis_nodes[0].iter().enumerate() {
                            let h = if wt1 == 0.0 {
                                0.0
                            } else {
                                table_ctx.eval((base + f1) / y2)
                            };
                            v1[i1] = wprod * wt1 * h;
                            any |= v1[i1] != 0.0;
                        }
                        if !any {
                            continue;
                        }
                        let out = &mut slice[(i3 * g + i4) * k..(i3 * g + i4 + 1) * k];
                        for (k1, outv) in out.iter_mut().enumerate() {
                            let row = &phases[0][k1 * g..(k1 + 1) * g];
                            let mut acc = Complex64::new(0.0, 0.0);
                            for i1 in 0..g {
                                if v1[i1] != 0.0 {
                                    acc += row[i1] * v1[i1];
                                }
                            }
                            *outv += acc;
                        }
                    }
                }
                slice
            })
            .collect()
    });
    // Stages B-D: contract the remaining axes per c1 in parallel.
    let lhs_terms: Vec<Complex64> = run_pool(params.workers, || {
        (0..k)
            .into_par_iter()
            .map(|k1| {
                let c1 = c_range[k1];
                let mut acc = Complex64::new(0.0, 0.0);
                for &c2 in &c_range {
                    let k2 = (c2 + c_max) as usize;
                    let mut b2 = vec![Complex64::new(0.0, 0.0); g * g];
                    for (i2, slice) in b1.iter().enumerate() {
                        let ph2 = phases[1][k2 * g + i2];
                        for i3 in 0..g {
                            for i4 in 0..g {
                                let v = slice[(i3 * g + i4) * k + k1];
                                if v != Complex64::new(0.0, 0.0) {
                                    b2[i3 * g + i4] += ph2 * v;
                                }
                            }
                        }
                    }
                    for &c3 in &c_range {
                        let k3 = (c3 + c_max) as usize;
                        let mut b3 = vec![Complex64::new(0.0, 0.0); g];
                        for i3 in 0..g {
                            let ph3 = phases[2][k3 * g + i3];
                            let row = i3 * g;
                            for (i4, b3v) in b3.iter_mut().enumerate() {
                                *b3v += ph3 * b2[row + i4];
                            }
                        }
                        for &c4 in &c_range {
                            let k4 = (c4 + c_max) as usize;
                            let mut integral = Complex64::new(0.0, 0.0);
                            for (i4, &b3v) in b3.iter().enumerate() {
                                integral += phases[3][k4 * g + i4] * b3v;
                            }
                            let s = s_table.get(&[c1, c2, c3, c4]);
                            acc += integral * s;
                        }
                    }
                }
                acc
            })
            .collect()
    });
    let lhs = pairwise_sum_complex(&lhs_terms).re / (n as f64).powi(m as i32);
    let residual = (lhs - rhs).abs();
    Ok(PoissonSwapReport {
        n,
        c_max,
        lhs,
        rhs,
        residual,
        scale: scale.max(1e-12),
    })
}

/// Shared h-table wrapper reused by the swap contraction.
struct HContext {
    table: crate::analytic::SharedHTable,
}

impl HContext {
    fn new(
        kernel: &DeltaKernel,
        form: &DiagonalCubicForm,
        w: &WeightSpec,
        n: u64,
        x_scale: f64,
    ) -> Self {
        let y = kernel.y();
        let vmax = kernel_support_bound(form, w) * x_scale.powi(3) / (y * y);
        HContext {
            table: crate::analytic::SharedHTable::build(kernel, n as f64 / y, vmax * 1.02 + 1.0),
        }
    }

    fn eval(&self, v: f64) -> f64 {
        self.table.eval(v)
    }
}

/// Residue table of S_c(n) over (Z/n)^m, composed from prime-power tables.
struct STable {
    n: u64,
    m: usize,
    factors: Vec<(u64, Vec<f64>)>, // (q = p^l, table over (Z/q)^m)
}

impl STable {
    fn build(form: &DiagonalCubicForm, n: u64) -> Result<STable> {
        let m = form.m();
        let mut factors = Vec::new();
        for &(p, l) in factor(n)?.pairs() {
            let q = p.pow(l);
            let size = (q as u128).pow(m as u32);
            if size > 20_000_000 {
                return Err(Error::Scale("S table too large".into()));
            }
            let mut table = vec![0.0f64; size as usize];
            for (idx, entry) in table.iter_mut().enumerate() {
                // decode idx to residues, most significant coordinate first
                let mut rest = idx;
                let mut c = vec![0i64; m];
                for k in (0..m).rev() {
                    c[k] = (rest % q as usize) as i64;
                    rest /= q as usize;
                }
                *entry = expsums::expsum_prime_power_value(form, &c, q).re;
            }
            factors.push((q, table));
        }
        Ok(STable { n, m, factors })
    }

    fn get(&self, c: &[i64]) -> f64 {
        debug_assert_eq!(self.m, c.len());
        debug_assert!(self.n > 0);
        let mut acc = 1.0;
        for (q, table) in &self.factors {
            let mut idx = 0usize;
            for &ci in c {
                idx = idx * *q as usize + i64_mod(ci, *q) as usize;
            }
            acc *= table[idx];
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Structured sums
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LineTerm {
    pub blocks: Vec<(usize, usize)>,
    /// Y^-2 sum over c in the punctured dual lattice box and n <= n_max.
    pub value: f64,
    /// Predicted density term sigma X^{m/2}.
    pub sigma_term: f64,
    pub residual: f64,
    /// Contribution of the outer half-shell ||c|| in (c_max/2, c_max].
    pub outer_shell: f64,
    /// Same sum recomputed through the bias/error convolution.
    pub convolution_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructuredReport {
    pub form: String,
    pub x: f64,
    pub y: f64,
    pub n_max: u64,
    pub c_max: i64,
    pub lines: Vec<LineTerm>,
    pub c0_term: Option<f64>,
    pub incomplete: bool,
}

/// Restricted structured sum per linear subspace: Y^-2 sum over nonzero
/// c in the dual lattice with ||c|| <= c_max and n <= n_max of
/// n^{-m} S_c(n) I_c(n), compared against sigma X^{m/2}.
pub fn structured_sum(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    params: &DeltaParams,
    experiment: bool,
) -> Result<StructuredReport> {
    params.validate(form, w)?;
    if !experiment && (form.m() != 4 || params.x > 10.0) {
        return Err(Error::Scale(
            "structured sums beyond m = 4, X <= 10 need the experiment flag".into(),
        ));
    }
    let kernel = DeltaKernel::new(params.y)?;
    let cache = ExpSumCache::in_memory();
    let lines = enumerate_lines(form);
    let mut out_lines = Vec::new();
    for ls in &lines {
        let term = structured_line_term(form, w, &kernel, params, ls, &cache)?;
        out_lines.push(term);
    }
    let c0_term = if experiment {
        Some(c0_sum(form, w, &kernel, params)?)
    } else {
        None
    };
    Ok(StructuredReport {
        form: form.id_string(),
        x: params.x,
        y: params.y,
        n_max: params.n_max,
        c_max: params.c_max,
        lines: out_lines,
        c0_term,
        incomplete: false,
    })
}

fn lattice_c_box(ls: &LineSpace, c_max: i64) -> Vec<Vec<i64>> {
    // c = c* lamperp with per-block coordinates bounded by the box
    let half = ls.half();
    let mut ranges: Vec<i64> = Vec::with_capacity(half);
    for k in 0..half {
        let scale = ls.lamperp_basis[k]
            .iter()
            .map(|&v| v.abs())
            .max()
            .unwrap()
            .max(1);
        ranges.push(c_max / scale);
    }
    let mut out = Vec::new();
    let mut t = vec![0i64; half];
    fn rec(ls: &LineSpace, ranges: &[i64], t: &mut Vec<i64>, k: usize, c_max: i64, out: &mut Vec<Vec<i64>>) {
        if k == ranges.len() {
            let c = ls.c_from_cstar(t);
            if c.iter().any(|&v| v != 0) && c.iter().all(|&v| v.abs() <= c_max) {
                out.push(c);
            }
            return;
        }
        for v in -ranges[k]..=ranges[k] {
            t[k] = v;
            rec(ls, ranges, t, k + 1, c_max, out);
        }
    }
    rec(ls, &ranges, &mut t, 0, c_max, &mut out);
    out.sort();
    out
}

fn structured_line_term(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    kernel: &DeltaKernel,
    params: &DeltaParams,
    ls: &LineSpace,
    cache: &ExpSumCache,
) -> Result<LineTerm> {
    let m = form.m();
    let cs = lattice_c_box(ls, params.c_max);
    let y2 = params.y * params.y;
    // terms ordered by (n, c) for a deterministic reduction
    let ns: Vec<u64> = (1..=params.n_max).collect();
    let per_n: Vec<(Vec<f64>, Vec<f64>)> = run_pool(params.workers, || {
        ns.par_iter()
            .map(|&n| {
                let ctx = OscContext::new(form, w, kernel, n, params.x, &params.grid)
                    .expect("grid validated");
                let mut plain = Vec::with_capacity(cs.len());
                let mut conv = Vec::with_capacity(cs.len());
                for c in &cs {
                    let i_c = ctx.integrate(c).re;
                    let s_c = cache.expsum(form, c, n).expect("modulus in range");
                    let scale = (n as f64).powi(-(m as i32));
                    plain.push(scale * s_c * i_c);
                    // bias/error split: S-tilde = sum_{n0 n1 = n} S'(n0) phi(n1)/sqrt(n1)
                    let mut st = 0.0;
                    for n0 in factor(n).unwrap().divisors() {
                        let n1 = n / n0;
                        st += cache.sprime_tilde(form, c, n0).expect("range")
                            * factor(n1).unwrap().phi() as f64
                            / (n1 as f64).sqrt();
                    }
                    let s_conv = st * (n as f64).powf((1.0 + m as f64) / 2.0);
                    conv.push(scale * s_conv * i_c);
                }
                (plain, conv)
            })
            .collect()
    });
    let mut all_plain = Vec::new();
    let mut all_conv = Vec::new();
    let mut shell = Vec::new();
    for (ni, (plain, conv)) in per_n.iter().enumerate() {
        let _ = ni;
        for (ci, &v) in plain.iter().enumerate() {
            all_plain.push(v);
            let c = &cs[ci];
            if c.iter().map(|&x| x.abs()).max().unwrap() > params.c_max / 2 {
                shell.push(v);
            }
        }
        all_conv.extend(conv.iter().copied());
    }
    let value = pairwise_sum(&all_plain) / y2;
    let convolution_value = pairwise_sum(&all_conv) / y2;
    let outer_shell = pairwise_sum(&shell) / y2;
    let sigma = sigma_lperp(ls, w, params.grid.order, 8);
    let sigma_term = sigma * params.x.powf(m as f64 / 2.0);
    Ok(LineTerm {
        blocks: ls.pairing.blocks().to_vec(),
        value,
        sigma_term,
        residual: value - sigma_term,
        outer_shell,
        convolution_value,
    })
}

/// c = 0 term: Y^-2 sum_n n^{-m} S_0(n) I_0(n).
fn c0_sum(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    kernel: &DeltaKernel,
    params: &DeltaParams,
) -> Result<f64> {
    let m = form.m();
    let c0 = vec![0i64; m];
    let ns: Vec<u64> = (1..=params.n_max).collect();
    let terms: Vec<f64> = run_pool(params.workers, || {
        ns.par_iter()
            .map(|&n| {
                let ctx = OscContext::new(form, w, kernel, n, params.x, &params.grid)
                    .expect("grid validated");
                let i0 = ctx.integrate(&c0).re;
                let s0 = expsums::expsum_prime_power_value(form, &c0, 1).re; // placeholder 1
                let _ = s0;
                let s = expsums::expsum(form, &c0, n).expect("range").value;
                (n as f64).powi(-(m as i32)) * s * i0
            })
            .collect()
    });
    Ok(pairwise_sum(&terms) / (params.y * params.y))
}

// ---------------------------------------------------------------------------
// Bias/error split audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SplitAuditReport {
    /// (n0, coset average of S'-tilde): exactly 1 at n0 = 1, else 0.
    pub coset_rows: Vec<(u64, f64)>,
    /// sum_{n >= Y/P} Y^-2 phi(n) h(n/Y, 0) with the configured P.
    pub prop_sum_cut: f64,
    /// The same sum with no restriction.
    pub prop_sum_full: f64,
    pub y: f64,
    pub p_cut: u64,
}

/// Reproduces the main-term mechanism: coset averages of the error factor
/// collapse to the n0 = 1 term, and the phi-weighted kernel sum over
/// n >= Y/P is 1 up to O(1/P) plus a superpolynomially small error.
pub fn bias_error_split_audit(
    form: &DiagonalCubicForm,
    ls: &LineSpace,
    y: f64,
    p_cut: u64,
) -> Result<SplitAuditReport> {
    let kernel = DeltaKernel::new(y)?;
    let mut coset_rows = Vec::new();
    for n0 in 1..=4u64.min(p_cut) {
        coset_rows.push((n0, expsums::avg_sprime_over_coset(form, ls, n0)?));
    }
    let n_min = (y / p_cut as f64).ceil() as u64;
    let prop_sum_cut = kernel.c_y() * kernel.phi_h_sum(n_min);
    let prop_sum_full = kernel.c_y() * kernel.phi_h_sum(1);
    Ok(SplitAuditReport {
        coset_rows,
        prop_sum_cut,
        prop_sum_full,
        y,
        p_cut,
    })
}

// ---------------------------------------------------------------------------
// Reverse Poisson check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReversePoissonReport {
    pub n0: u64,
    pub n1: u64,
    pub bstar: Vec<i64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub budget: f64,
}

/// sum_{t = lo}^{hi} e(-t u), stable near integer u.
fn geometric_phase_sum(u: f64, lo: i64, hi: i64) -> Complex64 {
    let len = (hi - lo + 1) as f64;
    let delta = u - u.round();
    let mid = -(lo as f64 + hi as f64) / 2.0 * u;
    let center = Complex64::new((2.0 * PI * mid).cos(), (2.0 * PI * mid).sin());
    let ratio = if delta.abs() < 1e-9 {
        // sin(pi L u) / sin(pi u) degenerates to +-L at integer u
        let k = u.round() as i64;
        let sign = if (k * (hi - lo)) % 2 == 0 { 1.0 } else { -1.0 };
        sign * len
    } else {
        (PI * len * u).sin() / (PI * u).sin()
    };
    center * ratio
}

/// n1^{-m/2} sum over c = b + n0 (dual lattice) of I_c(n) collapses to
/// sigma X^{m/2} h(n/Y, 0) once n1 exceeds the support constant times X.
/// The coset sum is folded into a single integral: summing the phases
/// e(-c.x/n) over the truncated coset gives a product of geometric kernels
/// in the dual coordinates h_k(x).
pub fn reverse_poisson_check(
    form: &DiagonalCubicForm,
    ls: &LineSpace,
    w: &WeightSpec,
    params: &DeltaParams,
    n0: u64,
    n1: u64,
    bstar: &[i64],
    c_max: i64,
) -> Result<ReversePoissonReport> {
    let m = form.m();
    let half = ls.half();
    let n = n0 * n1;
    let kernel = DeltaKernel::new(params.y)?;
    let x_scale = params.x;
    let y = kernel.y();
    let b = ls.c_from_cstar(bstar);
    // per-block t-range: |b_i + n0 t_k row_{k,i}| <= c_max for both block
    // coordinates
    let mut t_ranges: Vec<(i64, i64)> = Vec::with_capacity(half);
    for k in 0..half {
        let mut lo = i64::MIN / 4;
        let mut hi = i64::MAX / 4;
        for i in 0..m {
            let coef = ls.lamperp_basis[k][i] * n0 as i64;
            if coef == 0 {
                continue;
            }
            let (mut a, mut bnd) = (
                (-c_max - b[i]) as f64 / coef as f64,
                (c_max - b[i]) as f64 / coef as f64,
            );
            if a > bnd {
                std::mem::swap(&mut a, &mut bnd);
            }
            lo = lo.max(a.ceil() as i64);
            hi = hi.min(bnd.floor() as i64);
        }
        if lo > hi {
            return Err(Error::Scale("empty coset box".into()));
        }
        t_ranges.push((lo, hi));
    }

    let coset_sum = |ranges: &[(i64, i64)]| -> Complex64 {
        // grid sized for the fastest geometric kernel
        let order = params.grid.order;
        let mut max_cycles = 0.0f64;
        for i in 0..m {
            let (lo, hi) = w.axis_interval(i);
            let width = x_scale * (hi - lo);
            // c_i can reach c_max
            max_cycles = max_cycles.max(c_max as f64 * width / n as f64);
        }
        let panels = ((max_cycles * 10.0 / order as f64).ceil() as usize).max(3);
        // per-axis nodes with weight * psi and the b-phase folded in
        let axis: Vec<Vec<(f64, Complex64, f64)>> = (0..m)
            .map(|i| {
                let (lo, hi) = w.axis_interval(i);
                crate::analytic::panel_nodes(x_scale * lo, x_scale * hi, panels, order)
                    .iter()
                    .map(|&(xv, we)| {
                        let amp = we * w.eval_axis(i, xv / x_scale);
                        let ang = -2.0 * PI * b[i] as f64 * xv / n as f64;
                        (
                            xv,
                            Complex64::new(ang.cos(), ang.sin()) * amp,
                            form.coeff(i) as f64 * xv * xv * xv,
                        )
                    })
                    .collect()
            })
            .collect();
        let g = axis[0].len();
        let table = HContext::new(&kernel, form, w, n, x_scale);
        let y2 = y * y;
        // per block: geometric kernel table over the two member axes
        let blocks = ls.pairing.blocks();
        let d_tables: Vec<Vec<Complex64>> = blocks
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let (lo, hi) = ranges[k];
                let (ri, rj) = (ls.lamperp_basis[k][i], ls.lamperp_basis[k][j]);
                let mut tab = vec![Complex64::new(0.0, 0.0); g * g];
                for (gi, &(xi, _, _)) in axis[i].iter().enumerate() {
                    for (gj, &(xj, _, _)) in axis[j].iter().enumerate() {
                        let u = n0 as f64 * (ri as f64 * xi + rj as f64 * xj) / n as f64;
                        tab[gi * g + gj] = geometric_phase_sum(u, lo, hi);
                    }
                }
                tab
            })
            .collect();
        // iterate the grid in block order: outer loops over the first block
        // pair, inner over the rest; everything incremental
        let first: Vec<usize> = (0..g).collect();
        let partials: Vec<Complex64> = run_pool(params.workers, || {
            first
                .par_iter()
                .map(|&g0| {
                    let (i0, j0) = blocks[0];
                    let mut acc = Complex64::new(0.0, 0.0);
                    let (_, a0, f0) = axis[i0][g0];
                    if a0 == Complex64::new(0.0, 0.0) {
                        return acc;
                    }
                    for g1 in 0..g {
                        let (_, a1, f1) = axis[j0][g1];
                        if a1 == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let base0 = a0 * a1 * d_tables[0][g0 * g + g1];
                        let fbase = f0 + f1;
                        if m == 4 {
                            let (i1, j1) = blocks[1];
                            for g2 in 0..g {
                                let (_, a2, f2) = axis[i1][g2];
                                if a2 == Complex64::new(0.0, 0.0) {
                                    continue;
                                }
                                let pre = base0 * a2;
                                let frow = fbase + f2;
                                let drow = &d_tables[1][g2 * g..(g2 + 1) * g];
                                for g3 in 0..g {
                                    let (_, a3, f3) = axis[j1][g3];
                                    let h = table.eval((frow + f3) / y2);
                                    if h != 0.0 {
                                        acc += pre * a3 * drow[g3] * h;
                                    }
                                }
                            }
                        } else {
                            // m = 6: two remaining blocks
                            let (i1, j1) = blocks[1];
                            let (i2, j2) = blocks[2];
                            for g2 in 0..g {
                                let (_, a2, f2) = axis[i1][g2];
                                if a2 == Complex64::new(0.0, 0.0) {
                                    continue;
                                }
                                for g3 in 0..g {
                                    let (_, a3, f3) = axis[j1][g3];
                                    if a3 == Complex64::new(0.0, 0.0) {
                                        continue;
                                    }
                                    let pre = base0 * a2 * a3 * d_tables[1][g2 * g + g3];
                                    let fmid = fbase + f2 + f3;
                                    for g4 in 0..g {
                                        let (_, a4, f4) = axis[i2][g4];
                                        if a4 == Complex64::new(0.0, 0.0) {
                                            continue;
                                        }
                                        let pre2 = pre * a4;
                                        let frow = fmid + f4;
                                        let drow = &d_tables[2][g4 * g..(g4 + 1) * g];
                                        for g5 in 0..g {
                                            let (_, a5, f5) = axis[j2][g5];
                                            let h = table.eval((frow + f5) / y2);
                                            if h != 0.0 {
                                                acc += pre2 * a5 * drow[g5] * h;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    acc
                })
                .collect()
        });
        pairwise_sum_complex(&partials)
    };

    let full = coset_sum(&t_ranges);
    // shrunken box as an empirical truncation-tail proxy
    let shrunk: Vec<(i64, i64)> = t_ranges
        .iter()
        .map(|&(lo, hi)| {
            let span = hi - lo;
            (lo + span / 8, hi - span / 8)
        })
        .collect();
    let tail_proxy = (full - coset_sum(&shrunk)).norm();

    let lhs = full.re / (n1 as f64).powf(half as f64);
    let sigma = sigma_lperp(ls, w, params.grid.order, 8);
    let rhs = sigma * params.x.powf(m as f64 / 2.0) * kernel.h(n as f64 / y, 0.0);
    let scale = sigma * params.x.powf(m as f64 / 2.0);
    let budget = 2e-4 * scale.max(1.0) + 2.0 * tail_proxy / (n1 as f64).powf(half as f64);
    Ok(ReversePoissonReport {
        n0,
        n1,
        bstar: bstar.to_vec(),
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_count_matches_naive() {
        let f = DiagonalCubicForm::fermat(4);
        let w = WeightSpec::fermat_default(4);
        for x in [6.0f64, 11.0, 17.0] {
            let fast = direct_count(&f, &w, x).unwrap();
            let slow = direct_count_naive(&f, &w, x).unwrap();
            assert!(
                (fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()),
                "X={x}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn direct_count_empty_support() {
        // support without any solution of F = 0: single orthant, all positive
        let f = DiagonalCubicForm::fermat(4);
        let w = WeightSpec::from_intervals(&[(1.0, 2.0); 4]).unwrap();
        assert_eq!(direct_count(&f, &w, 30.0).unwrap(), 0.0);
    }

    #[test]
    fn mitm_handles_m6() {
        let f = DiagonalCubicForm::fermat(6);
        let w = WeightSpec::fermat_default(6);
        let fast = direct_count(&f, &w, 8.0).unwrap();
        let slow = direct_count_naive(&f, &w, 8.0).unwrap();
        assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()));
    }

    #[test]
    fn pointwise_delta_equals_direct() {
        let f = DiagonalCubicForm::fermat(4);
        let w = WeightSpec::fermat_default(4);
        for x in [4.0f64, 6.0] {
            let kernel = DeltaKernel::new(x.powf(1.5)).unwrap();
            let a = pointwise_delta_count(&f, &w, &kernel, x).unwrap();
            let b = direct_count(&f, &w, x).unwrap();
            assert!(
                (a - b).abs() <= 1e-6 * (1.0 + b.abs()),
                "X={x}: pointwise {a} vs direct {b}"
            );
        }
    }

    #[test]
    fn split_audit_coset_collapse() {
        let f = DiagonalCubicForm::fermat(4);
        let ls = &enumerate_lines(&f)[0];
        let report = bias_error_split_audit(&f, ls, 64.0, 8).unwrap();
        for &(n0, avg) in &report.coset_rows {
            let expect = if n0 == 1 { 1.0 } else { 0.0 };
            assert!(
                (avg - expect).abs() < 1e-9,
                "n0 = {n0}: {avg} vs {expect}"
            );
        }
        assert!(
            (report.prop_sum_cut - 1.0).abs() <= 0.5,
            "cut sum {}",
            report.prop_sum_cut
        );
        assert!(
            (report.prop_sum_full - 1.0).abs() <= 1e-6,
            "full sum {}",
            report.prop_sum_full
        );
    }
}

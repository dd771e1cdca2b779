//! Archimedean side: smooth product weights, the delta-method kernel and its
//! normalizing constant, oscillatory integrals, real densities of the form
//! and of each linear subspace, and the singular series.

use crate::arith;
use crate::error::{Error, Result};
use crate::expsums;
use crate::forms::DiagonalCubicForm;
use crate::lattices::LineSpace;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// The standard bump exp(-1/(1-t^2)) on |t| < 1, zero outside.
pub fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Product of per-coordinate bumps psi((x_i - a_i) / r_i); the support is
/// required to avoid the origin.
#[derive(Debug, Clone, Serialize)]
pub struct WeightSpec {
    axes: Vec<(f64, f64)>, // (center, radius)
}

impl WeightSpec {
    pub fn new(axes: Vec<(f64, f64)>) -> Result<Self> {
        if axes.iter().any(|&(_, r)| !(r > 0.0)) {
            return Err(Error::InvalidWeight("radius must be positive".into()));
        }
        let zero_inside = axes.iter().all(|&(a, r)| a - r <= 0.0 && 0.0 <= a + r);
        if zero_inside {
            return Err(Error::InvalidWeight(
                "support must not contain the origin".into(),
            ));
        }
        Ok(WeightSpec { axes })
    }

    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            intervals
                .iter()
                .map(|&(lo, hi)| ((lo + hi) / 2.0, (hi - lo) / 2.0))
                .collect(),
        )
    }

    /// Default weight for diagonal forms: bumps on [1,2]^2 x [-2,-1]^(m-2),
    /// away from the coordinate hyperplanes and containing diagonal points.
    pub fn fermat_default(m: usize) -> Self {
        let mut iv = vec![(1.0, 2.0), (1.0, 2.0)];
        iv.extend(std::iter::repeat((-2.0, -1.0)).take(m - 2));
        Self::from_intervals(&iv).unwrap()
    }

    /// Parse "lo:hi,lo:hi,..." per axis.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut iv = Vec::new();
        for part in spec.split(',') {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidWeight(format!("bad axis '{part}'")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::InvalidWeight(format!("bad number in '{part}'")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::InvalidWeight(format!("bad number in '{part}'")))?;
            if !(lo < hi) {
                return Err(Error::InvalidWeight(format!("empty interval '{part}'")));
            }
            iv.push((lo, hi));
        }
        Self::from_intervals(&iv)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> (f64, f64) {
        self.axes[i]
    }

    /// Closed support interval of axis i.
    pub fn axis_interval(&self, i: usize) -> (f64, f64) {
        let (a, r) = self.axes[i];
        (a - r, a + r)
    }

    pub fn eval_axis(&self, i: usize, x: f64) -> f64 {
        let (a, r) = self.axes[i];
        bump((x - a) / r)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.axes.len());
        let mut acc = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            acc *= self.eval_axis(i, xi);
            if acc == 0.0 {
                return 0.0;
            }
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre nodes over [a, b] with the given panel count.
pub fn panel_nodes(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (ns, ws) = gauss_legendre(order);
    let mut out = Vec::with_capacity(panels * order);
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * step;
        let mid = lo + step / 2.0;
        let half = step / 2.0;
        for (x, w) in ns.iter().zip(&ws) {
            out.push((mid + half * x, half * w));
        }
    }
    out
}

/// 1-D integral by composite Gauss-Legendre.
pub fn integrate_1d(a: f64, b: f64, panels: usize, order: usize, f: impl Fn(f64) -> f64) -> f64 {
    panel_nodes(a, b, panels, order)
        .iter()
        .map(|&(x, w)| w * f(x))
        .sum()
}

// ---------------------------------------------------------------------------
// The delta kernel
// ---------------------------------------------------------------------------

/// Smooth kernel h(x, y) built from a unit-mass bump supported in [1/2, 1],
/// together with the computed normalizing constant for a given Y.
#[derive(Debug, Clone)]
pub struct DeltaKernel {
    y: f64,
    omega_norm: f64,
    c_y: f64,
    /// Ramanujan-sum prep: for q <= prep limit, the list of (d, d*mu(q/d)).
    ram_prep: Vec<Vec<(u64, i64)>>,
}

fn omega_mass() -> f64 {
    // one-time mass of the rescaled bump on [1/2, 1]
    integrate_1d(0.5, 1.0, 8, 32, |t| bump(4.0 * t - 3.0))
}

impl DeltaKernel {
    pub fn new(y: f64) -> Result<Self> {
        if !(y >= 2.0) {
            return Err(Error::Scale("kernel needs Y >= 2".into()));
        }
        let omega_norm = 1.0 / omega_mass();
        let mut kernel = DeltaKernel {
            y,
            omega_norm,
            c_y: 1.0,
            ram_prep: Vec::new(),
        };
        kernel.extend_prep((2.0 * y) as u64 + 2);
        // c_Y is pinned by the t = 0 identity: c_Y Y^-2 sum_n phi(n) h(n/Y, 0) = 1
        let mut total = 0.0;
        let mut n = 1u64;
        while (n as f64) <= y {
            let phi = arith::factor(n).unwrap().phi() as f64;
            total += phi * kernel.h(n as f64 / y, 0.0);
            n += 1;
        }
        kernel.c_y = y * y / total;
        Ok(kernel)
    }

    fn extend_prep(&mut self, limit: u64) {
        while (self.ram_prep.len() as u64) < limit {
            let q = self.ram_prep.len() as u64 + 1;
            let f = arith::factor(q).unwrap();
            let mut pairs = Vec::new();
            for d in f.divisors() {
                let mu = arith::factor(q / d).unwrap().mu();
                if mu != 0 {
                    pairs.push((d, mu * d as i64));
                }
            }
            self.ram_prep.push(pairs);
        }
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn c_y(&self) -> f64 {
        self.c_y
    }

    /// The bump omega: supported in [1/2, 1], unit mass.
    pub fn omega(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            0.0
        } else {
            self.omega_norm * bump(4.0 * t - 3.0)
        }
    }

    /// h(x, y) = sum_j (xj)^{-1} (omega(xj) - omega(|y|/(xj))); the series is
    /// finite because omega has compact support away from 0.
    pub fn h(&self, x: f64, yv: f64) -> f64 {
        assert!(x > 0.0, "h needs x > 0");
        let ay = yv.abs();
        let mut acc = 0.0;
        // omega(x j) window: x j in (1/2, 1)
        let j_lo = (0.5 / x).floor().max(0.0) as u64 + 1;
        let j_hi = (1.0 / x).ceil() as u64;
        for j in j_lo..=j_hi.max(j_lo) {
            let xj = x * j as f64;
            if xj >= 1.0 {
                break;
            }
            if xj > 0.5 {
                acc += self.omega(xj) / xj;
            }
        }
        // omega(|y|/(x j)) window: x j in (|y|, 2|y|)
        if ay > 0.0 {
            let j_lo = (ay / x).floor().max(0.0) as u64 + 1;
            let j_hi = (2.0 * ay / x).ceil() as u64;
            for j in j_lo..=j_hi.max(j_lo) {
                let xj = x * j as f64;
                if xj >= 2.0 * ay {
                    break;
                }
                if xj > ay {
                    acc -= self.omega(ay / xj) / xj;
                }
            }
        }
        acc
    }

    pub fn h0(&self, x: f64) -> f64 {
        self.h(x, 0.0)
    }

    /// Pointwise delta symbol: c_Y Y^-2 sum_q c_q(t) h(q/Y, t/Y^2).
    pub fn delta_pointwise(&self, t: i64) -> f64 {
        let y = self.y;
        let x_max = (2.0 * t.abs() as f64 / (y * y)).max(1.0);
        let q_max = (y * x_max).ceil() as u64 + 1;
        let mut acc = 0.0;
        for q in 1..=q_max {
            let cq = self.ramanujan(q, t);
            if cq != 0 {
                acc += cq as f64 * self.h(q as f64 / y, t as f64 / (y * y));
            }
        }
        self.c_y * acc / (y * y)
    }

    fn ramanujan(&self, q: u64, t: i64) -> i64 {
        if let Some(pairs) = self.ram_prep.get(q as usize - 1) {
            let r = arith::i64_mod(t, q);
            let mut acc = 0i64;
            for &(d, w) in pairs {
                if r % d == 0 {
                    acc += w;
                }
            }
            acc
        } else {
            arith::ramanujan(q, t).unwrap()
        }
    }

    /// |delta_pointwise(t) - 1_{t=0}|.
    pub fn delta_identity_residual(&self, t: i64) -> f64 {
        let target = if t == 0 { 1.0 } else { 0.0 };
        (self.delta_pointwise(t) - target).abs()
    }

    /// sum_{n >= n_min} Y^-2 phi(n) h(n/Y, 0); with n_min = 1 this recovers
    /// 1/c_Y, superpolynomially close to 1.
    pub fn phi_h_sum(&self, n_min: u64) -> f64 {
        let y = self.y;
        let mut acc = 0.0;
        let mut n = n_min.max(1);
        while (n as f64) <= y {
            acc += arith::factor(n).unwrap().phi() as f64 * self.h0(n as f64 / y);
            n += 1;
        }
        acc / (y * y)
    }
}

/// Upper bound M with |F(u)| <= M over the support of w; n > max(Y, 2 M Y)
/// forces the oscillatory integral to vanish identically when Y = X^{3/2}.
pub fn kernel_support_bound(form: &DiagonalCubicForm, w: &WeightSpec) -> f64 {
    let mut m = 0.0f64;
    for (i, &f) in form.coeffs().iter().enumerate() {
        let (lo, hi) = w.axis_interval(i);
        let big = lo.abs().max(hi.abs());
        m += (f.abs() as f64) * big * big * big;
    }
    m
}

// ---------------------------------------------------------------------------
// h lookup table for oscillatory integrals
// ---------------------------------------------------------------------------

/// Table of y -> h(x0, y) on a logarithmic grid; h(x0, .) is constant on
/// |y| < x0/2 and varies on scale |y| beyond, so geometric spacing is exact
/// enough at fixed point density per octave.
pub struct SharedHTable {
    u0: f64,
    ratio_log: f64,
    base: f64,
    values: Vec<f64>,
}

const HTABLE_PER_OCTAVE: usize = 480;

impl SharedHTable {
    pub fn build(kernel: &DeltaKernel, x0: f64, umax: f64) -> SharedHTable {
        let u0 = 0.45 * x0;
        let base = kernel.h(x0, 0.0);
        let ratio_log = std::f64::consts::LN_2 / HTABLE_PER_OCTAVE as f64;
        let count = if umax <= u0 {
            0
        } else {
            ((umax / u0).ln() / ratio_log).ceil() as usize + 4
        };
        let values = (0..count)
            .map(|j| kernel.h(x0, u0 * (ratio_log * j as f64).exp()))
            .collect();
        SharedHTable {
            u0,
            ratio_log,
            base,
            values,
        }
    }

    pub fn eval(&self, yv: f64) -> f64 {
        let u = yv.abs();
        if u < self.u0 {
            return self.base;
        }
        let pos = (u / self.u0).ln() / self.ratio_log;
        let j = pos.floor() as usize;
        let frac = pos - j as f64;
        if j + 2 >= self.values.len() {
            return *self.values.last().unwrap_or(&self.base);
        }
        // 4-point Lagrange cubic in log space (nodes -1, 0, 1, 2)
        let p0 = if j == 0 { self.base } else { self.values[j - 1] };
        let p1 = self.values[j];
        let p2 = self.values[j + 1];
        let p3 = self.values[j + 2];
        let t = frac;
        -p0 * t * (t - 1.0) * (t - 2.0) / 6.0
            + p1 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
            - p2 * (t + 1.0) * t * (t - 2.0) / 2.0
            + p3 * (t + 1.0) * t * (t - 1.0) / 6.0
    }

    /// true when the whole table is zero (the kernel support misses
    /// every value the integrand can produce).
    pub fn is_zero_everywhere(&self) -> bool {
        self.base == 0.0 && self.values.iter().all(|&v| v == 0.0)
    }
}

/// Quadrature controls for the oscillatory integrals.
#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Minimum panels per axis.
    pub min_panels: usize,
    /// Extra panels per oscillation cycle.
    pub panels_per_cycle: f64,
    /// Hard cap on panels per axis.
    pub max_panels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            order: 16,
            min_panels: 2,
            panels_per_cycle: 1.25,
            max_panels: 64,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order * self.min_panels < 16 {
            return Err(Error::Scale(
                "grid resolution must be at least 16 points per axis".into(),
            ));
        }
        Ok(())
    }
}

/// Per-modulus context for the oscillatory integrals: the h lookup table is
/// shared by every c at the same n.
pub struct OscContext<'a> {
    form: &'a DiagonalCubicForm,
    w: &'a WeightSpec,
    n: u64,
    x_scale: f64,
    grid: GridSpec,
    y: f64,
    table: SharedHTable,
    vanishes: bool,
}

impl<'a> OscContext<'a> {
    pub fn new(
        form: &'a DiagonalCubicForm,
        w: &'a WeightSpec,
        kernel: &DeltaKernel,
        n: u64,
        x_scale: f64,
        grid: &GridSpec,
    ) -> Result<Self> {
        grid.validate()?;
        if n == 0 {
            return Err(Error::Scale("modulus must be positive".into()));
        }
        assert_eq!(w.dim(), form.m());
        let y = kernel.y();
        let x0 = n as f64 / y;
        let vmax = kernel_support_bound(form, w) * x_scale.powi(3) / (y * y);
        let table = SharedHTable::build(kernel, x0, vmax * 1.02 + 1.0);
        let vanishes = x0 > (2.0 * vmax).max(1.0);
        Ok(OscContext {
            form,
            w,
            n,
            x_scale,
            grid: grid.clone(),
            y,
            table,
            vanishes,
        })
    }

    /// Conservative estimate of the total bump-transform attenuation in
    /// units of sqrt(angular frequency); used to skip integrals that are
    /// far below every tolerance in play.
    fn attenuation_exponent(&self, c: &[i64]) -> f64 {
        let mut acc = 0.0;
        for (i, &ci) in c.iter().enumerate() {
            let (lo, hi) = self.w.axis_interval(i);
            let radius = self.x_scale * (hi - lo) / 2.0;
            let xi = 2.0 * PI * ci.unsigned_abs() as f64 * radius / self.n as f64;
            acc += (2.0 * xi).max(0.0).sqrt();
        }
        acc
    }

    /// I_c(n) = int w(x/X) h(n/Y, F(x)/Y^2) e(-c.x/n) dx over the support box.
    pub fn integrate(&self, c: &[i64]) -> Complex64 {
        let m = self.form.m();
        assert_eq!(c.len(), m);
        if self.vanishes {
            return Complex64::new(0.0, 0.0);
        }
        // the bump transform decays like exp(-sqrt(2 xi)) per axis; beyond
        // a combined exponent of 40 the value is < 1e-15 of the c = 0 scale
        if self.attenuation_exponent(c) > 40.0 {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.n;
        // per-axis nodes: (glweight * psi_i(x / X), F_i x^3, e(-c_i x / n))
        let mut axes: Vec<Vec<(f64, f64, Complex64)>> = Vec::with_capacity(m);
        for i in 0..m {
            let (lo, hi) = self.w.axis_interval(i);
            let (alo, ahi) = (self.x_scale * lo, self.x_scale * hi);
            let cycles = (c[i].abs() as f64) * (ahi - alo) / n as f64;
            let panels = ((cycles * self.grid.panels_per_cycle * 8.0
                / self.grid.order as f64)
                .ceil() as usize)
                .max(self.grid.min_panels)
                .min(self.grid.max_panels);
            let nodes = panel_nodes(alo, ahi, panels, self.grid.order);
            let fi = self.form.coeff(i) as f64;
            axes.push(
                nodes
                    .iter()
                    .map(|&(x, wt)| {
                        let phase = -2.0 * PI * c[i] as f64 * x / n as f64;
                        (
                            wt * self.w.eval_axis(i, x / self.x_scale),
                            fi * x * x * x,
                            Complex64::new(phase.cos(), phase.sin()),
                        )
                    })
                    .collect(),
            );
        }
        let y2 = self.y * self.y;
        let mut acc = Complex64::new(0.0, 0.0);
        fn rec(
            axes: &[Vec<(f64, f64, Complex64)>],
            depth: usize,
            wprod: f64,
            fsum: f64,
            phase: Complex64,
            y2: f64,
            table: &SharedHTable,
            acc: &mut Complex64,
        ) {
            if depth + 1 == axes.len() {
                let mut local = Complex64::new(0.0, 0.0);
                for &(wt, f3, ph) in &axes[depth] {
                    if wt == 0.0 {
                        continue;
                    }
                    let h = table.eval((fsum + f3) / y2);
                    if h != 0.0 {
                        local += ph * (wt * h);
                    }
                }
                *acc += phase * (local * wprod);
                return;
            }
            for &(wt, f3, ph) in &axes[depth] {
                if wt == 0.0 {
                    continue;
                }
                rec(axes, depth + 1, wprod * wt, fsum + f3, phase * ph, y2, table, acc);
            }
        }
        rec(
            &axes,
            0,
            1.0,
            0.0,
            Complex64::new(1.0, 0.0),
            y2,
            &self.table,
            &mut acc,
        );
        acc
    }
}

/// One-shot I_c(n); batch callers should build an [`OscContext`] per n.
pub fn osc_integral(
    form: &DiagonalCubicForm,
    w: &WeightSpec,
    kernel: &DeltaKernel,
    c: &[i64],
    n: u64,
    x_scale: f64,
    grid: &GridSpec,
) -> Result<Complex64> {
    Ok(OscContext::new(form, w, kernel, n, x_scale, grid)?.integrate(c))
}

// ---------------------------------------------------------------------------
// Real densities
// ---------------------------------------------------------------------------

/// sigma_{infty, L-perp, w} = int w(M^{-1} (0, x')) dx' over x' in R^{m/2}.
pub fn sigma_lperp(ls: &LineSpace, w: &WeightSpec, order: usize, panels: usize) -> f64 {
    let m = ls.m();
    let half = ls.half();
    // x = sum_k t_k * lambda_col_k spans the kernel; integrate over the
    // gamma-coordinates x' of that subspace. x = Minv (0; x') and the box of
    // admissible x' comes from pushing the support box through gamma.
    let mut lo = vec![f64::INFINITY; half];
    let mut hi = vec![f64::NEG_INFINITY; half];
    // interval arithmetic over support corners: x' = gamma x is linear
    let mut corners = vec![0usize; m];
    loop {
        let x: Vec<f64> = (0..m)
            .map(|i| {
                let (a, b) = w.axis_interval(i);
                if corners[i] == 0 {
                    a
                } else {
                    b
                }
            })
            .collect();
        let (h, xp) = ls.h_coords_f64(&x);
        let _ = h;
        for k in 0..half {
            lo[k] = lo[k].min(xp[k]);
            hi[k] = hi[k].max(xp[k]);
        }
        // odometer
        let mut i = 0;
        loop {
            if i == m {
                break;
            }
            corners[i] += 1;
            if corners[i] < 2 {
                break;
            }
            corners[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
    }
    // integrand: w evaluated at the kernel-space point with coordinates x'
    let axis_nodes: Vec<Vec<(f64, f64)>> = (0..half)
        .map(|k| panel_nodes(lo[k], hi[k], panels, order))
        .collect();
    let zero_h = vec![0i64; half];
    let mut sum = 0.0;
    let mut idx = vec![0usize; half];
    'outer: loop {
        let xp: Vec<f64> = (0..half).map(|k| axis_nodes[k][idx[k]].0).collect();
        let wt: f64 = (0..half).map(|k| axis_nodes[k][idx[k]].1).product();
        // x = Minv (0; x'): use the f64 version through integer inverse
        let x = x_from_h_f64(ls, &zero_h, &xp);
        sum += wt * w.eval(&x);
        let mut k = 0;
        loop {
            if k == half {
                break 'outer;
            }
            idx[k] += 1;
            if idx[k] < axis_nodes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
    sum
}

fn x_from_h_f64(ls: &LineSpace, h: &[i64], xp: &[f64]) -> Vec<f64> {
    // integer inverse applied to mixed (integer h, real x') coordinates
    let m = ls.m();
    let half = ls.half();
    (0..m)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..half {
                acc += ls.m_inv_entry(i, k) as f64 * h[k] as f64;
                acc += ls.m_inv_entry(i, half + k) as f64 * xp[k];
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaFReport {
    pub value: f64,
    pub eps_values: Vec<(f64, f64)>,
    pub richardson: f64,
}

/// sigma_{infty, F, w} = lim (2 eps)^{-1} int_{|F| <= eps} w, via the slab
/// definition with the x_1 section resolved exactly per outer node, then
/// Richardson extrapolation in eps.
pub fn sigma_f(form: &DiagonalCubicForm, w: &WeightSpec, order: usize, panels: usize) -> SigmaFReport {
    let m = form.m();
    let slab = |eps: f64| -> f64 {
        // outer axes 2..m, inner axis 1 integrated over {x1 : |F(x)| <= eps}
        let axis_nodes: Vec<Vec<(f64, f64)>> = (1..m)
            .map(|i| {
                let (lo, hi) = w.axis_interval(i);
                panel_nodes(lo, hi, panels, order)
            })
            .collect();
        let f1 = form.coeff(0) as f64;
        let (lo1, hi1) = w.axis_interval(0);
        let mut total = 0.0;
        let mut idx = vec![0usize; m - 1];
        'outer: loop {
            let mut rest = 0.0;
            let mut wt = 1.0;
            let mut xs = vec![0.0; m];
            for k in 0..m - 1 {
                let (x, we) = axis_nodes[k][idx[k]];
                xs[k + 1] = x;
                wt *= we * w.eval_axis(k + 1, x);
                rest += form.coeff(k + 1) as f64 * x * x * x;
            }
            if wt != 0.0 {
                // |f1 x1^3 + rest| <= eps  <=>  x1^3 in [(-eps-rest)/f1, (eps-rest)/f1]
                let (mut a, mut b) = ((-eps - rest) / f1, (eps - rest) / f1);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                let (x1a, x1b) = (a.cbrt().max(lo1), b.cbrt().min(hi1));
                if x1a < x1b {
                    total += wt * integrate_1d(x1a, x1b, 2, 16, |x| w.eval_axis(0, x));
                }
            }
            let mut k = 0;
            loop {
                if k == m - 1 {
                    break 'outer;
                }
                idx[k] += 1;
                if idx[k] < axis_nodes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        total / (2.0 * eps)
    };
    let scale = kernel_support_bound(form, w).max(1.0);
    let eps1 = 0.02 * scale;
    let eps2 = eps1 / 2.0;
    let v1 = slab(eps1);
    let v2 = slab(eps2);
    // slab value = sigma + c eps^2 + ...
    let richardson = (4.0 * v2 - v1) / 3.0;
    SigmaFReport {
        value: richardson,
        eps_values: vec![(eps1, v1), (eps2, v2)],
        richardson,
    }
}

// ---------------------------------------------------------------------------
// Singular series
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SingularSeriesReport {
    pub n_max: u64,
    pub partial_sum: f64,
    /// (block start N, sum of |a(n)| over n in [N, 2N)).
    pub dyadic_blocks: Vec<(u64, f64)>,
    /// Fitted slope of log2(block sum) against log2(N) over the top blocks.
    pub tail_slope: Option<f64>,
    pub conditionally_convergent: bool,
}

/// Partial sums of sum n^{-m} S_0(n) with dyadic tail diagnostics. For m = 4
/// the series is only conditionally convergent and the report says so.
pub fn singular_series(form: &DiagonalCubicForm, n_max: u64) -> Result<SingularSeriesReport> {
    if n_max > 100_000 {
        return Err(Error::Scale("singular series cutoff capped at 1e5".into()));
    }
    let m = form.m();
    let c0 = vec![0i64; m];
    // smallest prime factor sieve
    let mut spf = vec![0u32; n_max as usize + 1];
    for i in 2..=n_max as usize {
        if spf[i] == 0 {
            let mut j = i;
            while j <= n_max as usize {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    // a(p^l) = (p^l)^{-m} S_0(p^l), composed multiplicatively
    let mut pp_cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    let mut a = vec![0.0f64; n_max as usize + 1];
    a[1] = 1.0;
    let mut partial = 0.0f64;
    let mut blocks: Vec<(u64, f64)> = Vec::new();
    let mut block_start = 1u64;
    let mut block_sum = 0.0f64;
    for n in 1..=n_max {
        if n > 1 {
            let mut rest = n;
            let mut val = 1.0;
            while rest > 1 {
                let p = spf[rest as usize] as u64;
                let mut q = 1u64;
                while rest % p == 0 {
                    rest /= p;
                    q *= p;
                }
                let t = *pp_cache.entry(q).or_insert_with(|| {
                    let s = expsums::expsum_prime_power_value(form, &c0, q).re;
                    s / (q as f64).powi(m as i32)
                });
                val *= t;
            }
            a[n as usize] = val;
        }
        partial += a[n as usize];
        if n >= 2 * block_start {
            blocks.push((block_start, block_sum));
            block_start *= 2;
            block_sum = 0.0;
        }
        block_sum += a[n as usize].abs();
    }
    blocks.push((block_start, block_sum));
    // least-squares slope over blocks with N >= 64
    let pts: Vec<(f64, f64)> = blocks
        .iter()
        .filter(|&&(n0, s)| n0 >= 64 && s > 0.0)
        .map(|&(n0, s)| ((n0 as f64).log2(), s.log2()))
        .collect();
    let tail_slope = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    } else {
        None
    };
    Ok(SingularSeriesReport {
        n_max,
        partial_sum: partial,
        dyadic_blocks: blocks,
        tail_slope,
        conditionally_convergent: m == 4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_construction() {
        assert!(WeightSpec::from_intervals(&[(-1.0, 1.0), (-1.0, 1.0)]).is_err());
        let w = WeightSpec::fermat_default(4);
        assert_eq!(w.dim(), 4);
        assert!(w.eval(&[1.5, 1.5, -1.5, -1.5]) > 0.0);
        assert_eq!(w.eval(&[0.5, 1.5, -1.5, -1.5]), 0.0);
        let parsed = WeightSpec::parse("1:2,1:2,-2:-1,-2:-1").unwrap();
        assert_eq!(parsed.axis_interval(3), (-2.0, -1.0));
    }

    #[test]
    fn gauss_legendre_exactness() {
        // degree-9 polynomial integrated exactly by a 5-point rule
        let (ns, ws) = gauss_legendre(5);
        let val: f64 = ns
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| w * (x.powi(9) + 3.0 * x.powi(4) - x))
            .sum();
        assert!((val - 6.0 / 5.0).abs() < 1e-13, "got {val}");
    }

    #[test]
    fn kernel_normalization() {
        for y in [8.0, 16.0, 32.0] {
            let k = DeltaKernel::new(y).unwrap();
            assert!(k.delta_identity_residual(0) < 1e-12);
            if y >= 16.0 {
                assert!((k.c_y() - 1.0).abs() <= 0.05, "c_Y = {} at Y = {y}", k.c_y());
            }
        }
    }

    #[test]
    fn kernel_identity_small_sample() {
        let k = DeltaKernel::new(16.0).unwrap();
        for t in [1i64, -1, 2, 7, 100, 127, -128, 57, 33] {
            assert!(
                k.delta_identity_residual(t) < 1e-10,
                "t = {t}: {}",
                k.delta_identity_residual(t)
            );
        }
        let k = DeltaKernel::new(32.0).unwrap();
        assert!(k.delta_identity_residual(137) < 1e-10);
    }

    #[test]
    fn h_vanishing_region() {
        let k = DeltaKernel::new(16.0).unwrap();
        // x > 1 and |y| < x/2 kills both bump windows
        assert_eq!(k.h(1.25, 0.0), 0.0);
        assert_eq!(k.h(1.25, 0.5), 0.0);
        // x = 0.4 puts 2x = 0.8 inside the bump support
        assert!(k.h(0.4, 0.0) > 0.0);
    }

    #[test]
    fn h_bounded_by_inverse_x() {
        let k = DeltaKernel::new(16.0).unwrap();
        // |h(x, 0)| <= C / x on [0.01, 1]; C calibrated once at 4.0
        let mut x = 0.01;
        while x <= 1.0 {
            assert!(k.h0(x) <= 4.0 / x, "x = {x}");
            x += 0.013;
        }
    }

    #[test]
    fn htable_matches_direct() {
        let k = DeltaKernel::new(12.0).unwrap();
        for n in [1u64, 3, 8] {
            let x0 = n as f64 / 12.0;
            let table = SharedHTable::build(&k, x0, 40.0);
            let mut v = -35.0;
            while v < 35.0 {
                let direct = k.h(x0, v);
                let tab = table.eval(v);
                // accuracy target is relative to the kernel scale 1/x0
                assert!(
                    (direct - tab).abs() <= 1e-6 * (1.0 + 1.0 / x0),
                    "n={n} v={v}: direct {direct} vs table {tab}"
                );
                v += 0.0837;
            }
        }
    }
}

//! Exact evaluation of the complete exponential sums S_c(n), their
//! normalizations, the error convolution S'_c, coset averages, and the crude
//! cube-full/square-full bound.

use crate::arith::{self, factor, i64_mod, mul_mod};
use crate::error::{Error, Result};
use crate::forms::DiagonalCubicForm;
use crate::lattices::LineSpace;
use dashmap::DashMap;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

pub const MAX_MODULUS: u64 = 1_000_000;
pub const MAX_BRUTE_POINTS: u128 = 1_000_000_000;
/// Below this cost the separable kernel runs directly; above it, per-factor
/// FFTs over Z/q bring the cost down to O(m q log q).
const DIRECT_COST_LIMIT: u128 = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Brute,
    Separable,
    ClosedForm,
    CrtComposed,
}

/// Value of S_c(n); the sum is provably real, the imaginary residue is kept
/// for diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ExpSumValue {
    pub n: u64,
    pub c: Vec<i64>,
    pub value: f64,
    pub im_residue: f64,
    pub method: Method,
}

fn root_table(q: u64) -> Vec<Complex64> {
    (0..q)
        .map(|r| {
            let t = 2.0 * PI * r as f64 / q as f64;
            Complex64::new(t.cos(), t.sin())
        })
        .collect()
}

/// S_c(q) for a prime power q via the separable kernel
/// S_c(q) = sum*_a prod_i g_i(a), g_i(a) = sum_x e_q(a F_i x^3 + c_i x).
pub fn expsum_prime_power_value(form: &DiagonalCubicForm, c: &[i64], q: u64) -> Complex64 {
    let m = form.m();
    if q == 1 {
        return Complex64::new(1.0, 0.0);
    }
    let p = factor(q).unwrap().pairs()[0].0;
    let e = root_table(q);
    let phi = q - q / p;
    let cost = phi as u128 * m as u128 * q as u128;
    let mut g: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    if cost <= DIRECT_COST_LIMIT {
        for i in 0..m {
            let fi = i64_mod(form.coeff(i), q);
            let ci = i64_mod(c[i], q);
            let t: Vec<u64> = (0..q)
                .map(|x| {
                    let x3 = mul_mod(mul_mod(x, x, q), x, q);
                    mul_mod(fi, x3, q)
                })
                .collect();
            let u: Vec<u64> = (0..q).map(|x| mul_mod(ci, x, q)).collect();
            let mut gi = vec![Complex64::new(0.0, 0.0); q as usize];
            for (a, gia) in gi.iter_mut().enumerate() {
                let a = a as u64;
                if a % p == 0 {
                    continue;
                }
                let mut acc = Complex64::new(0.0, 0.0);
                for x in 0..q as usize {
                    acc += e[((mul_mod(a, t[x], q) + u[x]) % q) as usize];
                }
                *gia = acc;
            }
            g.push(gi);
        }
    } else {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(q as usize);
        for i in 0..m {
            let fi = i64_mod(form.coeff(i), q);
            let ci = i64_mod(c[i], q);
            // v[t] = sum over x with F_i x^3 = t of e_q(c_i x); the inverse
            // DFT then gives g_i(a) for every a at once
            let mut v = vec![Complex64::new(0.0, 0.0); q as usize];
            for x in 0..q {
                let x3 = mul_mod(mul_mod(x, x, q), x, q);
                let t = mul_mod(fi, x3, q);
                v[t as usize] += e[mul_mod(ci, x, q) as usize];
            }
            fft.process(&mut v);
            g.push(v);
        }
    }
    let mut s = Complex64::new(0.0, 0.0);
    for a in 1..q {
        if a % p == 0 {
            continue;
        }
        let mut prod = g[0][a as usize];
        for gi in g.iter().skip(1) {
            prod *= gi[a as usize];
        }
        s += prod;
    }
    s
}

/// S_c(n) by factoring n and composing prime-power separable sums.
pub fn expsum(form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<ExpSumValue> {
    if n == 0 || n > MAX_MODULUS {
        return Err(Error::Scale(format!("expsum modulus {n} out of range")));
    }
    let f = factor(n)?;
    let mut value = Complex64::new(1.0, 0.0);
    for &(p, l) in f.pairs() {
        value *= expsum_prime_power_value(form, c, p.pow(l));
    }
    let method = if f.pairs().len() > 1 {
        Method::CrtComposed
    } else {
        Method::Separable
    };
    Ok(ExpSumValue {
        n,
        c: c.to_vec(),
        value: value.re,
        im_residue: value.im,
        method,
    })
}

/// Independent oracle: S_c(n) = sum_x c_n(F(x)) e_n(c.x) by direct
/// enumeration of (Z/n)^m, with the Ramanujan sum absorbing the a-average.
pub fn expsum_brute(form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<ExpSumValue> {
    let m = form.m();
    if n == 0 {
        return Err(Error::Scale("modulus must be positive".into()));
    }
    let points = (n as u128).pow(m as u32);
    if points > MAX_BRUTE_POINTS {
        return Err(Error::Scale(format!(
            "brute oracle needs n^m <= {MAX_BRUTE_POINTS}, got {points}"
        )));
    }
    let cn = arith::ramanujan_table(n)?;
    let e = root_table(n);
    // last-coordinate tables, the outer m-1 coordinates run in an odometer
    let last_f: Vec<u64> = (0..n)
        .map(|x| {
            let x3 = mul_mod(mul_mod(x, x, n), x, n);
            mul_mod(i64_mod(form.coeff(m - 1), n), x3, n)
        })
        .collect();
    let last_c: Vec<u64> = (0..n).map(|x| mul_mod(i64_mod(c[m - 1], n), x, n)).collect();
    let fi: Vec<u64> = (0..m).map(|i| i64_mod(form.coeff(i), n)).collect();
    let ci: Vec<u64> = (0..m).map(|i| i64_mod(c[i], n)).collect();

    use rayon::prelude::*;
    let partials: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|x0| {
            let mut acc = Complex64::new(0.0, 0.0);
            let x0_3 = mul_mod(mul_mod(x0, x0, n), x0, n);
            let f0 = mul_mod(fi[0], x0_3, n);
            let c0 = mul_mod(ci[0], x0, n);
            let rest = m - 2;
            let mut idx = vec![0u64; rest];
            loop {
                let mut facc = f0;
                let mut cacc = c0;
                for (k, &x) in idx.iter().enumerate() {
                    let x3 = mul_mod(mul_mod(x, x, n), x, n);
                    facc = (facc + mul_mod(fi[1 + k], x3, n)) % n;
                    cacc = (cacc + mul_mod(ci[1 + k], x, n)) % n;
                }
                for x in 0..n as usize {
                    let cv = cn[((facc + last_f[x]) % n) as usize];
                    if cv != 0 {
                        acc += e[((cacc + last_c[x]) % n) as usize] * cv as f64;
                    }
                }
                let mut k = 0;
                loop {
                    if k == rest {
                        return acc;
                    }
                    idx[k] += 1;
                    if idx[k] < n {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        })
        .collect();
    // fixed-order pairwise reduction
    let value = pairwise_sum_complex(&partials);
    Ok(ExpSumValue {
        n,
        c: c.to_vec(),
        value: value.re,
        im_residue: value.im,
        method: Method::Brute,
    })
}

pub fn pairwise_sum_complex(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        len => {
            let (a, b) = v.split_at(len / 2);
            pairwise_sum_complex(a) + pairwise_sum_complex(b)
        }
    }
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        len => {
            let (a, b) = v.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Normalized sum S-tilde_c(n) = n^{-(1+m)/2} S_c(n).
pub fn stilde(form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
    let v = expsum(form, c, n)?;
    Ok(v.value / (n as f64).powf((1.0 + form.m() as f64) / 2.0))
}

fn stilde_pp(form: &DiagonalCubicForm, c: &[i64], p: u64, l: u32) -> f64 {
    let q = p.pow(l);
    let s = expsum_prime_power_value(form, c, q).re;
    s / (q as f64).powf((1.0 + form.m() as f64) / 2.0)
}

/// S'-tilde at a prime power from the values S-tilde(p^d), d <= l:
/// sum over d0 + d1 + d2 = l of mu(p^d0) p^{d0/2} p^{-d1/2} stilde(p^d2).
fn sprime_tilde_pp(p: u64, l: u32, st: &[f64]) -> f64 {
    let sp = (p as f64).sqrt();
    let mut total = 0.0;
    for d2 in 0..=l {
        // d0 + d1 = l - d2; mu kills d0 >= 2
        for d0 in 0..=(l - d2).min(1) {
            let d1 = l - d2 - d0;
            let sign = if d0 == 1 { -1.0 } else { 1.0 };
            total += sign * sp.powi(d0 as i32) * sp.powi(-(d1 as i32)) * st[d2 as usize];
        }
    }
    total
}

/// S'-tilde_c(n): the multiplicative error factor of the bias/error split,
/// computed per prime power by the divisor convolution.
pub fn sprime_tilde(form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
    if n > 100_000 {
        return Err(Error::Scale(format!("sprime modulus {n} out of range")));
    }
    let f = factor(n)?;
    let mut acc = 1.0;
    for &(p, l) in f.pairs() {
        let st: Vec<f64> = (0..=l).map(|d| stilde_pp(form, c, p, d)).collect();
        acc *= sprime_tilde_pp(p, l, &st);
    }
    Ok(acc)
}

/// Coset average E_{c in Lperp/n Lperp}[S_c(n) e_n(-c* . j)], returned via
/// the direct count over x with h(x) = j mod n; when the fundamental-domain
/// cost is affordable the honest average over c is cross-checked against it.
#[derive(Debug, Clone, Serialize)]
pub struct CosetAverage {
    pub n: u64,
    pub value_re: f64,
    pub value_im: f64,
    pub cross_checked: bool,
    pub cross_dev: f64,
}

pub fn avg_over_coset(
    form: &DiagonalCubicForm,
    ls: &LineSpace,
    n: u64,
    j: &[i64],
) -> Result<CosetAverage> {
    if n == 0 || n > 10_000 {
        return Err(Error::Scale(format!("coset average modulus {n} out of range")));
    }
    let half = ls.half();
    assert_eq!(j.len(), half);
    let m = form.m();
    // (ii): sum*_a sum_{x : h = j (n)} e_n(a F(x)) = sum_v hist[v] c_n(v)
    let cn = arith::ramanujan_table(n)?;
    let jmod: Vec<u64> = j.iter().map(|&v| i64_mod(v, n)).collect();
    let mut hist = vec![0u64; n as usize];
    let mut xp = vec![0u64; half];
    'outer: loop {
        let x = ls.x_from_h_coords_mod(&jmod, &xp, n);
        hist[form.eval_mod(&x, n) as usize] += 1;
        let mut k = 0;
        loop {
            if k == half {
                break 'outer;
            }
            xp[k] += 1;
            if xp[k] < n {
                break;
            }
            xp[k] = 0;
            k += 1;
        }
    }
    let direct: f64 = hist
        .iter()
        .zip(&cn)
        .map(|(&h, &c)| h as f64 * c as f64)
        .sum();

    // (i): average honest exponential sums over the fundamental domain
    let phi = factor(n)?.phi();
    let coset_size = (n as u128).pow(half as u32);
    let cost = coset_size * phi as u128 * m as u128 * n as u128;
    let mut cross_checked = false;
    let mut cross_dev = 0.0;
    if cost <= 200_000_000 {
        let mut acc = Complex64::new(0.0, 0.0);
        let e = root_table(n);
        let mut cstar = vec![0u64; half];
        'outer2: loop {
            let c: Vec<i64> = ls
                .c_from_cstar(&cstar.iter().map(|&t| t as i64).collect::<Vec<_>>());
            let s = expsum(form, &c, n)?;
            let mut twist = 0u64;
            for k in 0..half {
                twist = (twist + mul_mod(cstar[k], jmod[k], n)) % n;
            }
            // e_n(-c* . j)
            acc += Complex64::new(s.value, s.im_residue) * e[((n - twist) % n) as usize];
            let mut k = 0;
            loop {
                if k == half {
                    break 'outer2;
                }
                cstar[k] += 1;
                if cstar[k] < n {
                    break;
                }
                cstar[k] = 0;
                k += 1;
            }
        }
        let avg = acc / coset_size as f64;
        cross_dev = (avg - Complex64::new(direct, 0.0)).norm();
        cross_checked = true;
        if cross_dev > 1e-6 * (1.0 + direct.abs()) {
            return Err(Error::Scale(format!(
                "coset average routes disagree at n = {n}: {avg} vs {direct}"
            )));
        }
    }
    Ok(CosetAverage {
        n,
        value_re: direct,
        value_im: 0.0,
        cross_checked,
        cross_dev,
    })
}

/// E_{c in Lperp/n Lperp}[S'-tilde_c(n)], assembled from coset averages of
/// S over the divisors (linearity of the average), plus an honest direct
/// average over the fundamental domain when that is affordable.
pub fn avg_sprime_over_coset(
    form: &DiagonalCubicForm,
    ls: &LineSpace,
    n: u64,
) -> Result<f64> {
    let f = factor(n)?;
    let m = form.m() as f64;
    let mut total = 0.0;
    for d0 in f.divisors() {
        if factor(d0)?.mu() == 0 {
            continue;
        }
        for d1 in factor(n / d0)?.divisors() {
            let d2 = n / d0 / d1;
            let avg = avg_over_coset(form, ls, d2, &vec![0; ls.half()])?;
            total += factor(d0)?.mu() as f64
                * (d0 as f64).sqrt()
                * (d1 as f64).powf(-0.5)
                * avg.value_re
                * (d2 as f64).powf(-(1.0 + m) / 2.0);
        }
    }
    // direct route over the fundamental domain at small n
    let half = ls.half();
    let coset_size = (n as u128).pow(half as u32);
    if coset_size * (n as u128) * (m as u128) * 40 <= 50_000_000 {
        let mut acc = 0.0;
        let mut count = 0u64;
        let mut cstar = vec![0i64; half];
        'outer: loop {
            let c = ls.c_from_cstar(&cstar);
            acc += sprime_tilde(form, &c, n)?;
            count += 1;
            let mut k = 0;
            loop {
                if k == half {
                    break 'outer;
                }
                cstar[k] += 1;
                if cstar[k] < n as i64 {
                    break;
                }
                cstar[k] = 0;
                k += 1;
            }
        }
        let direct = acc / count as f64;
        if (direct - total).abs() > 1e-6 * (1.0 + total.abs()) {
            return Err(Error::Scale(format!(
                "sprime coset averages disagree at n = {n}: {direct} vs {total}"
            )));
        }
    }
    Ok(total)
}

/// Crude diagnostic bound: 4^{omega(n)} prod_j gcd(cub(n)^{1/6},
/// gcd(cub(n), sq(c_j))^{1/4}), the gcds taken prime-by-prime on exponents.
pub fn crude_bound(_form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
    if c.iter().any(|&ci| ci == 0) {
        return Err(Error::ZeroInput("crude bound needs all c_j nonzero".into()));
    }
    let fac_n = factor(n)?;
    let mut bound = 4.0f64.powi(fac_n.omega() as i32);
    for &cj in c {
        let fac_c = factor(cj.unsigned_abs())?;
        for &(p, e) in fac_n.pairs() {
            if e < 3 {
                continue; // not part of cub(n)
            }
            let vc = fac_c.v_p(p);
            let v_sq_c = if vc >= 2 { vc } else { 0 };
            let exp = (e as f64 / 6.0).min(e.min(v_sq_c) as f64 / 4.0);
            bound *= (p as f64).powf(exp);
        }
    }
    Ok(bound)
}

// ---------------------------------------------------------------------------
// Disk-backed cache of prime-power values
// ---------------------------------------------------------------------------

type CacheKey = (String, u64, u32, Vec<u64>);

/// Concurrent read-mostly cache of S_c(p^l), keyed by (form, p, l, c mod p^l).
/// Values are deterministic so last-write-wins races are benign. The file
/// format is JSON lines: {"form":..,"p":..,"l":..,"c_residue":[..],"value":..}.
pub struct ExpSumCache {
    map: DashMap<CacheKey, f64>,
    path: Option<std::path::PathBuf>,
}

#[derive(Serialize, serde::Deserialize)]
struct CacheRecord {
    form: String,
    p: u64,
    l: u32,
    c_residue: Vec<u64>,
    value: f64,
}

impl ExpSumCache {
    pub fn in_memory() -> Self {
        ExpSumCache {
            map: DashMap::new(),
            path: None,
        }
    }

    pub fn open(path: &std::path::Path) -> Result<Self> {
        let map = DashMap::new();
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line)?;
                map.insert((rec.form, rec.p, rec.l, rec.c_residue), rec.value);
            }
        }
        Ok(ExpSumCache {
            map,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// S_c(p^l) through the cache.
    pub fn prime_power(&self, form: &DiagonalCubicForm, c: &[i64], p: u64, l: u32) -> f64 {
        let q = p.pow(l);
        let key = (
            form.id_string(),
            p,
            l,
            c.iter().map(|&ci| i64_mod(ci, q)).collect::<Vec<_>>(),
        );
        if let Some(v) = self.map.get(&key) {
            return *v;
        }
        let v = expsum_prime_power_value(form, c, q).re;
        self.map.insert(key, v);
        v
    }

    /// S_c(n) composed from cached prime powers.
    pub fn expsum(&self, form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
        let f = factor(n)?;
        Ok(f.pairs()
            .iter()
            .map(|&(p, l)| self.prime_power(form, c, p, l))
            .product())
    }

    pub fn stilde(&self, form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
        Ok(self.expsum(form, c, n)? / (n as f64).powf((1.0 + form.m() as f64) / 2.0))
    }

    /// S'-tilde_c(n) through cached prime powers.
    pub fn sprime_tilde(&self, form: &DiagonalCubicForm, c: &[i64], n: u64) -> Result<f64> {
        let f = factor(n)?;
        let mexp = (1.0 + form.m() as f64) / 2.0;
        let mut acc = 1.0;
        for &(p, l) in f.pairs() {
            let st: Vec<f64> = (0..=l)
                .map(|d| self.prime_power(form, c, p, d) / (p as f64).powf(d as f64 * mexp))
                .collect();
            acc *= sprime_tilde_pp(p, l, &st);
        }
        Ok(acc)
    }

    pub fn flush(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut entries: Vec<(CacheKey, f64)> = self
            .map
            .iter()
            .map(|kv| (kv.key().clone(), *kv.value()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for ((form, p, l, c_residue), value) in entries {
            let rec = CacheRecord {
                form,
                p,
                l,
                c_residue,
                value,
            };
            writeln!(file, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattices::enumerate_lines;

    fn fermat4() -> DiagonalCubicForm {
        DiagonalCubicForm::fermat(4)
    }

    #[test]
    fn brute_examples() {
        let f = fermat4();
        let v = expsum_brute(&f, &[0, 0, 0, 0], 1).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        // S_0(2) = 2 * 8 - 16 = 0
        let v = expsum_brute(&f, &[0, 0, 0, 0], 2).unwrap();
        assert!(v.value.abs() < 1e-9, "got {}", v.value);
    }

    #[test]
    fn separable_matches_brute_small() {
        let f = fermat4();
        let cs = [[0i64, 0, 0, 0], [1, 1, 2, 2], [3, -1, 4, 7], [5, 0, 2, -3]];
        for n in 1..=16u64 {
            for c in &cs {
                let b = expsum_brute(&f, c, n).unwrap();
                let s = expsum(&f, c, n).unwrap();
                assert!(
                    (b.value - s.value).abs() <= 1e-6 * (1.0 + b.value.abs()),
                    "n={n} c={c:?}: brute {} vs separable {}",
                    b.value,
                    s.value
                );
                assert!(b.im_residue.abs() <= 1e-9 * (1.0 + b.value.abs()));
                assert!(s.im_residue.abs() <= 1e-9 * (1.0 + s.value.abs()));
            }
        }
    }

    #[test]
    fn fft_path_matches_direct() {
        let f = fermat4();
        let c = [1i64, 5, -3, 2];
        for q in [121u64, 125, 343] {
            // direct
            let m = f.m();
            let e = root_table(q);
            let p = factor(q).unwrap().pairs()[0].0;
            let mut s = Complex64::new(0.0, 0.0);
            for a in 1..q {
                if a % p == 0 {
                    continue;
                }
                let mut prod = Complex64::new(1.0, 0.0);
                for i in 0..m {
                    let fi = i64_mod(f.coeff(i), q);
                    let ci = i64_mod(c[i], q);
                    let mut gi = Complex64::new(0.0, 0.0);
                    for x in 0..q {
                        let x3 = mul_mod(mul_mod(x, x, q), x, q);
                        gi += e[((mul_mod(a, mul_mod(fi, x3, q), q) + mul_mod(ci, x, q)) % q)
                            as usize];
                    }
                    prod *= gi;
                }
                s += prod;
            }
            let v = expsum_prime_power_value(&f, &c, q);
            assert!(
                (s - v).norm() <= 1e-6 * (1.0 + s.norm()),
                "q={q}: {s} vs {v}"
            );
        }
    }

    #[test]
    fn multiplicativity() {
        let f = fermat4();
        let c = [2i64, -1, 3, 1];
        for (n1, n2) in [(4u64, 9u64), (5, 8), (7, 9), (16, 27)] {
            let a = expsum(&f, &c, n1).unwrap().value;
            let b = expsum(&f, &c, n2).unwrap().value;
            let ab = expsum(&f, &c, n1 * n2).unwrap().value;
            assert!(
                (a * b - ab).abs() <= 1e-6 * (1.0 + ab.abs()),
                "({n1},{n2}): {a} * {b} != {ab}"
            );
            // and against brute force where the oracle scale permits
            if ((n1 * n2) as u128).pow(4) <= MAX_BRUTE_POINTS {
                let brute = expsum_brute(&f, &c, n1 * n2).unwrap().value;
                assert!((brute - ab).abs() <= 1e-6 * (1.0 + brute.abs()));
            }
        }
    }

    #[test]
    fn vanishing_at_25_for_unequal_characters() {
        // chi_5(1) != chi_5(8) forces S_c(25) = 0
        let f = fermat4();
        let v = expsum(&f, &[1, 1, 2, 2], 25).unwrap();
        assert!(v.value.abs() < 1e-6, "got {}", v.value);
    }

    #[test]
    fn sprime_reconstruction() {
        // S-tilde(n) = sum_{n0 n1 = n} S'-tilde(n0) phi(n1) / sqrt(n1)
        let f = fermat4();
        let c = [1i64, 1, 2, 2];
        for n in [1u64, 2, 6, 12, 25, 36, 50] {
            let lhs = stilde(&f, &c, n).unwrap();
            let mut rhs = 0.0;
            for n0 in factor(n).unwrap().divisors() {
                let n1 = n / n0;
                rhs += sprime_tilde(&f, &c, n0).unwrap() * factor(n1).unwrap().phi() as f64
                    / (n1 as f64).sqrt();
            }
            assert!(
                (lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()),
                "n={n}: {lhs} vs {rhs}"
            );
        }
        assert!((sprime_tilde(&f, &c, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coset_average_identity() {
        let f = fermat4();
        let lines = enumerate_lines(&f);
        for n in [2u64, 3, 4, 5, 6] {
            for ls in &lines {
                let avg = avg_over_coset(&f, ls, n, &[0, 0]).unwrap();
                let expect = factor(n).unwrap().phi() as f64 * (n as f64).powi(2);
                assert!(
                    (avg.value_re - expect).abs() <= 1e-6 * expect,
                    "n={n}: {} vs {}",
                    avg.value_re,
                    expect
                );
                assert!(avg.cross_checked, "expected honest cross-check at n={n}");
            }
        }
        // j = 0, n = 3: phi(3) * 9 = 18
        let avg = avg_over_coset(&f, &lines[0], 3, &[0, 0]).unwrap();
        assert!((avg.value_re - 18.0).abs() < 1e-9);
    }

    #[test]
    fn sprime_average_collapses() {
        let f = fermat4();
        let ls = &enumerate_lines(&f)[0];
        assert!((avg_sprime_over_coset(&f, ls, 1).unwrap() - 1.0).abs() < 1e-12);
        for n in [2u64, 3, 4] {
            let v = avg_sprime_over_coset(&f, ls, n).unwrap();
            assert!(v.abs() < 1e-9, "n={n}: {v}");
        }
    }

    #[test]
    fn crude_bound_examples() {
        let f = fermat4();
        // square-free n: cub(n) = 1, bound = 4^omega
        let b = crude_bound(&f, &[1, 1, 2, 2], 30).unwrap();
        assert!((b - 64.0).abs() < 1e-9);
        // n = p^3 with p coprime to all c_j: gcd terms collapse to 1
        let b = crude_bound(&f, &[1, 1, 2, 2], 343).unwrap();
        assert!((b - 4.0).abs() < 1e-9);
        assert!(crude_bound(&f, &[0, 1, 1, 1], 4).is_err());
    }

    #[test]
    fn cache_roundtrip() {
        let f = fermat4();
        let dir = std::env::temp_dir().join("cubic-delta-test-cache");
        let path = dir.join("cache.jsonl");
        let _ = std::fs::remove_file(&path);
        let cache = ExpSumCache::open(&path).unwrap();
        let v1 = cache.expsum(&f, &[1, 1, 2, 2], 36).unwrap();
        let direct = expsum(&f, &[1, 1, 2, 2], 36).unwrap().value;
        assert!((v1 - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        cache.flush().unwrap();
        let cache2 = ExpSumCache::open(&path).unwrap();
        assert_eq!(cache2.len(), cache.len());
        let v2 = cache2.expsum(&f, &[1, 1, 2, 2], 36).unwrap();
        assert_eq!(v1, v2);
        let _ = std::fs::remove_file(&path);
    }
}

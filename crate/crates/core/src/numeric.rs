//! Small numerical helpers shared by the death-process and urn code.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `ln(a^(n))` for the ascending factorial `a (a+1) ... (a+n-1)`; `-inf` when a factor is zero.
pub fn ln_rising(a: f64, n: u32) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        let f = a + f64::from(i);
        if f <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += f.ln();
    }
    acc
}

/// `ln(n!)`.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// `ln((n-1)!)` with the convention `(-1)! = 1`.
pub fn ln_factorial_pred(n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        ln_factorial(n - 1)
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

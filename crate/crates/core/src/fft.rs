//! Discrete Fourier transforms for `no_std` targets.
//!
//! Power-of-two lengths use an iterative radix-2 kernel. Every other length
//! goes through Bluestein's chirp-z reformulation on top of the radix-2
//! kernel, so any `n >= 1` is accepted.
//!
//! Conventions: `forward` computes `X[k] = sum x[n] exp(-j2πkn/N)` and
//! `inverse` includes the `1/N` factor, so `inverse(forward(x)) == x`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::Complex;

/// A reusable transform plan for one length.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Radix2(Radix2),
    Bluestein(Bluestein),
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be positive");
        let kind = if n.is_power_of_two() {
            Kind::Radix2(Radix2::new(n))
        } else {
            Kind::Bluestein(Bluestein::new(n))
        };
        Fft { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            Kind::Radix2(r) => r.run(buf, false),
            Kind::Bluestein(b) => b.run(buf, false),
        }
    }

    pub fn inverse(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            Kind::Radix2(r) => r.run(buf, true),
            Kind::Bluestein(b) => b.run(buf, true),
        }
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward transform of a copy of `x`.
pub fn fft(x: &[Complex]) -> Vec<Complex> {
    let mut buf = x.to_vec();
    Fft::new(x.len()).forward(&mut buf);
    buf
}

/// Inverse transform (with `1/N`) of a copy of `x`.
pub fn ifft(x: &[Complex]) -> Vec<Complex> {
    let mut buf = x.to_vec();
    Fft::new(x.len()).inverse(&mut buf);
    buf
}

#[inline]
fn expj(theta: f64) -> Complex {
    Complex::new(libm::cos(theta), libm::sin(theta))
}

#[derive(Debug, Clone)]
struct Radix2 {
    n: usize,
    // exp(-j2πk/n) for k in 0..n/2
    twiddles: Vec<Complex>,
    rev: Vec<u32>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        let half = n / 2;
        let twiddles = (0..half)
            .map(|k| expj(-2.0 * PI * k as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    ((i as u32).reverse_bits() >> (32 - bits)) as u32
                }
            })
            .collect();
        Radix2 { n, twiddles, rev }
    }

    fn run(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

#[derive(Debug, Clone)]
struct Bluestein {
    n: usize,
    inner: Radix2,
    // exp(-jπk²/n)
    chirp: Vec<Complex>,
    // forward transform of the conjugate chirp, zero padded and wrapped
    kernel_fwd: Vec<Complex>,
    kernel_inv: Vec<Complex>,
}

impl Bluestein {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // k² mod 2n keeps the phase argument small and exact for large k.
        let chirp: Vec<Complex> = (0..n)
            .map(|k| {
                let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
                expj(-PI * k2 / n as f64)
            })
            .collect();
        let build = |conj: bool| {
            let mut b = vec![Complex::new(0.0, 0.0); m];
            for k in 0..n {
                let c = if conj { chirp[k].conj() } else { chirp[k] };
                b[k] = c;
                if k > 0 {
                    b[m - k] = c;
                }
            }
            inner.run(&mut b, false);
            b
        };
        let kernel_fwd = build(true);
        let kernel_inv = build(false);
        Bluestein {
            n,
            inner,
            chirp,
            kernel_fwd,
            kernel_inv,
        }
    }

    fn run(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        let m = self.inner.n;
        let chirp = |k: usize| {
            if inverse {
                self.chirp[k].conj()
            } else {
                self.chirp[k]
            }
        };
        let kernel = if inverse {
            &self.kernel_inv
        } else {
            &self.kernel_fwd
        };
        let mut a = vec![Complex::new(0.0, 0.0); m];
        for k in 0..n {
            a[k] = buf[k] * chirp(k);
        }
        self.inner.run(&mut a, false);
        for (x, h) in a.iter_mut().zip(kernel) {
            *x *= h;
        }
        self.inner.run(&mut a, true);
        let scale = 1.0 / m as f64;
        for k in 0..n {
            buf[k] = a[k] * chirp(k) * scale;
        }
    }
}
